//! Shared numeric text formatting.

use crate::error::{Error, Result};

/// Scientific notation with 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Parses whitespace-separated floats from one line, reporting `line` on failure.
pub(crate) fn parse_f64s(text: &str, line: usize) -> Result<Vec<f64>> {
    text.split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|e| Error::Parse { line, msg: format!("bad number {t:?}: {e}") })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formatting_round_trips() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 123_456_789.123_456_79, 0.0] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap(), v);
            let digits = s.split('e').next().unwrap().chars().filter(char::is_ascii_digit).count();
            assert!(digits >= 17, "{s}");
        }
    }
}
