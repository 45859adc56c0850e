//! CSV dialect: comma separated, header row, LF line endings, reals with 17
//! significant digits.

use std::fs;
use std::path::Path;

use csv::{Terminator, WriterBuilder};

use crate::error::AppError;

pub fn real(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn opt_real(x: Option<f64>) -> String {
    x.map(real).unwrap_or_default()
}

/// Renders a table; every row must have as many cells as the header.
pub fn csv_string<I>(header: &[&str], rows: I) -> String
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = WriterBuilder::new()
        .terminator(Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        debug_assert_eq!(row.len(), header.len());
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 cells")
}

pub fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), AppError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(AppError::io(&path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reals_round_trip() {
        for x in [0.1, -1.0 / 3.0, 1e-300, 12345.678, f64::MIN_POSITIVE, 0.0] {
            let s = real(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
        assert_eq!(real(0.5), "5.0000000000000000e-1");
        assert_eq!(opt_real(None), "");
    }

    #[test]
    fn tables_use_lf() {
        let s = csv_string(&["a", "b"], vec![vec!["1".into(), "x,y".into()]]);
        assert_eq!(s, "a,b\n1,\"x,y\"\n");
    }
}
