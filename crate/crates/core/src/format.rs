//! Fixed float rendering shared by CSV, summaries and console output.

/// Significant digits used for every rendered float.
pub const SIG_DIGITS: usize = 6;

/// Renders `x` with [`SIG_DIGITS`] significant digits; non-finite values
/// become `NA`.
pub fn sig(x: f64) -> String {
    sig_digits(x, SIG_DIGITS)
}

pub fn sig_digits(x: f64, digits: usize) -> String {
    if !x.is_finite() {
        return "NA".to_string();
    }
    if x == 0.0 {
        return "0".to_string();
    }
    let digits = digits.max(1);
    // Scientific rendering settles the post-rounding exponent.
    let sci = format!("{:.*e}", digits - 1, x);
    let exp: i32 = sci
        .rsplit_once('e')
        .and_then(|(_, e)| e.parse().ok())
        .unwrap_or(0);
    if !(-5..=15).contains(&exp) {
        return sci;
    }
    let decimals = (digits as i32 - 1 - exp).max(0) as usize;
    format!("{x:.decimals$}")
}

pub fn sig_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), sig)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_six_significant_digits() {
        assert_eq!(sig(0.6208540361686828), "0.620854");
        assert_eq!(sig(31.51771657131745), "31.5177");
        assert_eq!(sig(12.0), "12.0000");
        assert_eq!(sig(5000.0), "5000.00");
        assert_eq!(sig(-0.00271), "-0.00271000");
        assert_eq!(sig(0.0), "0");
    }

    #[test]
    fn rounding_carries_into_next_decade() {
        assert_eq!(sig(9.9999996), "10.0000");
        assert_eq!(sig(0.99999996), "1.00000");
    }

    #[test]
    fn extremes_and_missing() {
        assert_eq!(sig(f64::NAN), "NA");
        assert_eq!(sig(f64::INFINITY), "NA");
        assert_eq!(sig_opt(None), "NA");
        assert_eq!(sig(1.5e-9), "1.50000e-9");
        assert_eq!(sig(2.0e20), "2.00000e20");
    }
}
