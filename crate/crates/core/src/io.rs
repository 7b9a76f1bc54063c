//! Plain-text number formatting shared by all writers.

/// Locale-independent decimal with 12 significant digits. Very large or very
/// small magnitudes fall back to scientific notation.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let e = x.abs().log10().floor() as i32;
    if (-5..15).contains(&e) {
        let decimals = (11 - e).max(0) as usize;
        let s = format!("{:.*}", decimals, x);
        trim_zeros(s)
    } else {
        let s = format!("{:.11e}", x);
        match s.split_once('e') {
            Some((mant, exp)) => format!("{}e{}", trim_zeros(mant.to_string()), exp),
            None => s,
        }
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        let t = s.trim_end_matches('0').trim_end_matches('.');
        if t == "-0" {
            "0".to_string()
        } else {
            t.to_string()
        }
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_digits() {
        assert_eq!(fmt_num(1.0), "1");
        assert_eq!(fmt_num(std::f64::consts::PI), "3.14159265359");
        assert_eq!(fmt_num(-0.000123456789012345), "-0.000123456789012");
        assert_eq!(fmt_num(1234567.0), "1234567");
        assert_eq!(fmt_num(1e20), "1e20");
        assert_eq!(fmt_num(0.0), "0");
    }
}
