//! Comma-separated trace files.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::textio::fmt_f64;

pub const CENTRAL_HEADER: &str = "k,alpha,f,f_gap,dist_ref,bregman_ref,step_norm,monitor_slack";
pub const DIST_HEADER: &str = "k,alpha,f_centroid,f_gap,consensus_error,max_pairwise,contraction_slack";

/// Renders rows whose first column is the iteration counter.
pub(crate) fn render(header: &str, rows: impl Iterator<Item = (usize, Vec<f64>)>) -> String {
    let mut s = String::from(header);
    s.push('\n');
    for (k, values) in rows {
        let _ = write!(s, "{k}");
        for v in values {
            s.push(',');
            s.push_str(&fmt_f64(v));
        }
        s.push('\n');
    }
    s
}

/// A parsed trace file: named columns of numbers.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl TraceTable {
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(Error::Parse { line: 1, msg: "empty trace file".into() })?;
        let columns: Vec<String> = header.split(',').map(|c| c.trim().to_string()).collect();
        if columns.first().map(String::as_str) != Some("k") {
            return Err(Error::Parse { line: 1, msg: "trace header must start with \"k\"".into() });
        }
        let mut rows = Vec::new();
        let mut last_k = None;
        for (n, line) in lines {
            let row: Vec<f64> = line
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse { line: n + 1, msg: format!("bad number: {e}") })?;
            if row.len() != columns.len() {
                return Err(Error::Parse {
                    line: n + 1,
                    msg: format!("expected {} fields, found {}", columns.len(), row.len()),
                });
            }
            if last_k.is_some_and(|k| row[0] <= k) {
                return Err(Error::Parse { line: n + 1, msg: "iteration counter must increase".into() });
            }
            last_k = Some(row[0]);
            rows.push(row);
        }
        Ok(TraceTable { columns, rows })
    }

    pub fn read_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// First `k` whose `f_gap` is at most `level`.
    pub fn first_at_or_below(&self, level: f64) -> Result<Option<u64>> {
        let col = self
            .column("f_gap")
            .ok_or_else(|| Error::Parse { line: 1, msg: "trace has no f_gap column".into() })?;
        Ok(self.rows.iter().find(|r| r[col] <= level).map(|r| r[0] as u64))
    }
}

/// First iterations at which each trace reaches `f_gap <= gap_level`.
pub fn compare_runs(a: &TraceTable, b: &TraceTable, gap_level: f64) -> Result<(Option<u64>, Option<u64>)> {
    Ok((a.first_at_or_below(gap_level)?, b.first_at_or_below(gap_level)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_then_parse() {
        let text = render("k,a,f_gap", [(0, vec![0.5, 2.0]), (3, vec![0.25, f64::NAN])].into_iter());
        let t = TraceTable::parse(&text).unwrap();
        assert_eq!(t.rows.len(), 2);
        assert_eq!(t.rows[1][0], 3.0);
        assert!(t.rows[1][2].is_nan());
        assert_eq!(t.first_at_or_below(2.0).unwrap(), Some(0));
        assert_eq!(t.first_at_or_below(1.0).unwrap(), None);
    }

    #[test]
    fn identical_traces_compare_equal() {
        let text = render("k,f_gap", (0..5).map(|k| (k, vec![1.0 / (k + 1) as f64])));
        let t = TraceTable::parse(&text).unwrap();
        assert_eq!(compare_runs(&t, &t, 0.3).unwrap(), (Some(3), Some(3)));
    }

    #[test]
    fn malformed_traces() {
        assert!(TraceTable::parse("").is_err());
        assert!(TraceTable::parse("x,y\n1,2\n").is_err());
        assert!(matches!(TraceTable::parse("k,f_gap\n0,1\n1\n"), Err(Error::Parse { line: 3, .. })));
        assert!(matches!(TraceTable::parse("k,f_gap\n1,1\n1,0\n"), Err(Error::Parse { line: 3, .. })));
        let t = TraceTable::parse("k,f\n0,1\n").unwrap();
        assert!(t.first_at_or_below(1.0).is_err());
    }
}
