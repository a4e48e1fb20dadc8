//! Fixed-precision decimal output shared by the dataset and curve writers.

/// Significant digits kept when writing reals.
pub const SIG_DIGITS: usize = 9;

/// Rounds `v` to [`SIG_DIGITS`] significant digits. Non-finite values pass
/// through unchanged.
pub fn round_sig(v: f64) -> f64 {
    if !v.is_finite() || v == 0.0 {
        return v;
    }
    format!("{:.*e}", SIG_DIGITS - 1, v)
        .parse()
        .expect("formatted float parses")
}

/// Shortest decimal text of `round_sig(v)`.
pub fn format_sig(v: f64) -> String {
    let r = round_sig(v);
    if r == 0.0 {
        // normalizes -0.0
        return "0".to_string();
    }
    format!("{r}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding() {
        assert_eq!(format_sig(0.5), "0.5");
        assert_eq!(format_sig(1.0 / 3.0), "0.333333333");
        assert_eq!(format_sig(123456789012.0), "123456789000");
        assert_eq!(format_sig(-0.0), "0");
        assert_eq!(round_sig(2.0 / 3.0), 0.666666667);
    }
}
