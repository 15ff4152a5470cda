/// Formats like C's `%g` with six significant digits: fixed notation for
/// decimal exponents in `[-4, 6)`, scientific otherwise, trailing zeros
/// removed.
pub fn format_sig(v: f64) -> String {
    format_sig_n(v, 6)
}

pub fn format_sig_n(v: f64, digits: usize) -> String {
    assert!(digits >= 1);
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return if v.is_sign_negative() {
            "-0".into()
        } else {
            "0".into()
        };
    }
    let sci = format!("{:.*e}", digits - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= digits as i32 {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{}{:02}", trim_zeros(mantissa), sign, exp.abs())
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
    fn matches_printf_g() {
        let cases = [
            (0.0, "0"),
            (1.0, "1"),
            (10000.0, "10000"),
            (141.421_356_237_309_5, "141.421"),
            (std::f64::consts::FRAC_PI_4, "0.785398"),
            (9.0, "9"),
            (4.242640687119285, "4.24264"),
            (123456789.0, "1.23457e+08"),
            (999999.5, "1e+06"),
            (0.0001234567, "0.000123457"),
            (0.00001234567, "1.23457e-05"),
            (-2.5, "-2.5"),
            (12.0, "12"),
        ];
        for (v, want) in cases {
            assert_eq!(format_sig(v), want, "{v}");
        }
    }
}
