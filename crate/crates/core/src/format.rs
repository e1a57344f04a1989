//! Locale-independent numeric serialization.
//!
//! All report files carry numbers rounded to 12 significant digits and printed
//! in shortest round-trip form, so outputs are byte-stable across platforms.

/// Round to 12 significant digits. Non-finite values pass through.
pub fn round12(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.11e}").parse().expect("scientific notation parses")
}

/// Text form used in CSV cells. Non-finite values print as `NA`.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        let r = round12(x);
        // normalise negative zero
        if r == 0.0 {
            "0".to_string()
        } else {
            format!("{r}")
        }
    } else {
        "NA".to_string()
    }
}

/// JSON form: rounded number, or `null` for non-finite values.
pub fn json_num(x: f64) -> serde_json::Value {
    if x.is_finite() {
        serde_json::Value::from(round12(x) + 0.0)
    } else {
        serde_json::Value::Null
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(num(0.1 + 0.2), "0.3");
        assert_eq!(num(1.0 / 3.0), "0.333333333333");
        assert_eq!(num(123456789.123456789), "123456789.123");
        assert_eq!(num(-0.0), "0");
        assert_eq!(num(f64::NAN), "NA");
        assert_eq!(json_num(f64::INFINITY), serde_json::Value::Null);
    }
}
