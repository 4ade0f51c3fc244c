//! Number formatting for CSV output.

/// `v` with `digits` significant digits, in the style of C's `%g`: fixed
/// notation for moderate exponents, scientific otherwise, trailing zeros
/// removed.
pub fn format_sig(v: f64, digits: usize) -> String {
    assert!(digits >= 1);
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let sci = format!("{:.*e}", digits - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -5 || exp >= digits as i32 {
        format!("{}e{}", trim_zeros(mantissa), exp)
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{v:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(format_sig(1.0, 6), "1");
        assert_eq!(format_sig(7.0 / 6.0, 6), "1.16667");
        assert_eq!(format_sig(-0.000123456789, 6), "-0.000123457");
        assert_eq!(format_sig(1.5e-9, 6), "1.5e-9");
        assert_eq!(format_sig(123456789.0, 6), "1.23457e8");
        assert_eq!(format_sig(999999.7, 6), "1e6");
        assert_eq!(format_sig(100.0, 6), "100");
        assert_eq!(format_sig(0.0, 6), "0");
    }
}
