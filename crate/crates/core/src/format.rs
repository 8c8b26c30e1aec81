//! Number formatting for serialized output.
//!
//! Every floating-point value written to JSON or CSV is rounded to
//! [`SIGNIFICANT_DIGITS`] significant digits, so regression diffs ignore
//! last-bit noise.

use serde::Serializer;

pub const SIGNIFICANT_DIGITS: usize = 9;

/// Rounds `v` to `digits` significant decimal digits.
pub fn round_sig(v: f64, digits: usize) -> f64 {
    if !v.is_finite() || v == 0.0 {
        return v;
    }
    format!("{:.*e}", digits.saturating_sub(1), v)
        .parse()
        .expect("formatted float parses")
}

/// Shortest decimal text of `v` rounded to nine significant digits.
pub fn fmt9(v: f64) -> String {
    round_sig(v, SIGNIFICANT_DIGITS).to_string()
}

pub fn serialize_f64<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64(round_sig(*v, SIGNIFICANT_DIGITS))
}

pub fn serialize_vec<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|x| round_sig(*x, SIGNIFICANT_DIGITS)))
}

pub fn serialize_matrix<S: Serializer>(rows: &[Vec<f64>], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(
        rows.iter()
            .map(|r| r.iter().map(|x| round_sig(*x, SIGNIFICANT_DIGITS)).collect::<Vec<_>>()),
    )
}
