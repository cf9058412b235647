//! CSV emission.
//!
//! Every result file starts with a header row naming its columns, uses LF
//! line endings, prints reals with 17 significant digits (so values
//! round-trip through the decimal text exactly), and leaves fields whose
//! quantity is undefined for the run empty.

use std::io;
use std::path::Path;

/// Column names of the standard result schema, shared by `simulate`,
/// `filter`, `xi`, `fig1`, and `fig2`.
pub const RESULT_HEADER: &str =
    "t,S,Y,yhat,G_partial,G_full,G_diff,pi_myopic,pi_hedge,xi,xi_stderr,G_stderr";

/// One output row at a grid checkpoint.  `t` is always present; every
/// other column is optional and rendered as an empty field when the
/// quantity is undefined for the subcommand or model at hand.
#[derive(Debug, Clone, Default)]
pub struct ResultRow {
    /// Checkpoint time.
    pub t: f64,
    /// Asset price `S(t)`.
    pub s: Option<f64>,
    /// True factor `Y(t)`.
    pub y: Option<f64>,
    /// Filter mean `Ŷ(t)`.
    pub yhat: Option<f64>,
    /// Partial-information value factor `G(t)`.
    pub g_partial: Option<f64>,
    /// Full-information value factor `G̃(t, Y(t))`.
    pub g_full: Option<f64>,
    /// `G(t) − G̃(t, Y(t))`.
    pub g_diff: Option<f64>,
    /// Myopic component of the optimal fraction in the risky asset.
    pub pi_myopic: Option<f64>,
    /// Hedging correction of the optimal fraction.
    pub pi_hedge: Option<f64>,
    /// Nested Monte Carlo estimate of `ξ(t)`.
    pub xi: Option<f64>,
    /// Standard error of the `ξ(t)` estimate.
    pub xi_stderr: Option<f64>,
    /// Delta-method standard error of `G(t) = ξ(t)^γ`.
    pub g_stderr: Option<f64>,
}

/// Formats a real with 17 significant digits.  Negative zero (which the
/// closed forms produce at exact terminal conditions) collapses to zero so
/// equal values always print identically.
pub fn fmt_float(v: f64) -> String {
    let v = if v == 0.0 { 0.0 } else { v };
    format!("{v:.16e}")
}

/// Formats an optional field: empty when undefined.
pub fn fmt_field(v: Option<f64>) -> String {
    v.map(fmt_float).unwrap_or_default()
}

/// Joins optional fields into one CSV line (no trailing newline).
pub fn csv_line(fields: &[Option<f64>]) -> String {
    fields
        .iter()
        .map(|&v| fmt_field(v))
        .collect::<Vec<_>>()
        .join(",")
}

impl ResultRow {
    fn to_line(&self) -> String {
        csv_line(&[
            Some(self.t),
            self.s,
            self.y,
            self.yhat,
            self.g_partial,
            self.g_full,
            self.g_diff,
            self.pi_myopic,
            self.pi_hedge,
            self.xi,
            self.xi_stderr,
            self.g_stderr,
        ])
    }
}

/// Writes rows in the standard schema to `path`.
pub fn write_rows(path: &Path, rows: &[ResultRow]) -> io::Result<()> {
    let mut buf = String::with_capacity(64 * (rows.len() + 1));
    buf.push_str(RESULT_HEADER);
    buf.push('\n');
    for row in rows {
        buf.push_str(&row.to_line());
        buf.push('\n');
    }
    std::fs::write(path, buf)
}

/// Writes a CSV with a caller-supplied header and prebuilt lines.
pub fn write_table(path: &Path, header: &str, lines: &[String]) -> io::Result<()> {
    let mut buf = String::with_capacity(header.len() + 1 + 64 * lines.len());
    buf.push_str(header);
    buf.push('\n');
    for line in lines {
        buf.push_str(line);
        buf.push('\n');
    }
    std::fs::write(path, buf)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn test_float_format_carries_17_significant_digits() {
        assert_eq!(fmt_float(0.5), "5.0000000000000000e-1");
        assert_eq!(fmt_float(1.0), "1.0000000000000000e0");
        // 17 significant digits of the stored binary value, so the decimal
        // text recovers the exact double.
        assert_eq!(fmt_float(0.15), "1.4999999999999999e-1");
        assert_eq!(fmt_float(-0.0), "0.0000000000000000e0");
        for v in [0.1 + 0.2, std::f64::consts::PI, 1.0 / 3.0, 6.02e23] {
            let text = fmt_float(v);
            assert_eq!(
                text.parse::<f64>().unwrap(),
                v,
                "format must round-trip exactly"
            );
        }
    }

    #[test]
    fn test_undefined_fields_render_empty() {
        let row = ResultRow {
            t: 0.5,
            s: Some(1.0),
            ..Default::default()
        };
        let line = row.to_line();
        assert_eq!(line, "5.0000000000000000e-1,1.0000000000000000e0,,,,,,,,,,");
    }

    #[test]
    fn test_written_file_uses_lf_and_leads_with_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rows.csv");
        let rows = vec![ResultRow {
            t: 0.0,
            ..Default::default()
        }];
        write_rows(&path, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(RESULT_HEADER));
        assert!(!text.contains('\r'));
        assert_eq!(text.lines().count(), 2);
    }
}
