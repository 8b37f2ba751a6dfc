//! Deterministic JSON emission: sorted keys, fixed float formatting,
//! non-finite numbers rejected.
//!
//! serde_json's default map is ordered, so objects built through
//! [`serde_json::Value`] already iterate with sorted keys; this module adds a
//! writer with %.17g-style float text (17 significant digits, trailing zeros
//! trimmed) so that identical values always serialize to identical bytes.

use crate::error::{Error, Result};
use serde_json::{Map, Value};

/// Wrap a float, rejecting NaN and infinities.
pub fn num(label: &str, x: f64) -> Result<Value> {
    if !x.is_finite() {
        return Err(Error::NonFinite(label.to_string()));
    }
    Ok(Value::from(x))
}

pub fn num_vec(label: &str, v: &[f64]) -> Result<Value> {
    let mut out = Vec::with_capacity(v.len());
    for (i, &x) in v.iter().enumerate() {
        out.push(num(&format!("{label}[{i}]"), x)?);
    }
    Ok(Value::Array(out))
}

pub fn obj(pairs: Vec<(&str, Value)>) -> Value {
    let mut map = Map::new();
    for (k, v) in pairs {
        map.insert(k.to_string(), v);
    }
    Value::Object(map)
}

/// 17-significant-digit float text in the style of printf %g: scientific
/// notation for very large/small magnitudes, otherwise positional, with
/// trailing zeros (and a bare trailing point) removed.
pub fn fmt_g17(x: f64) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() {
            "-0".to_string()
        } else {
            "0".to_string()
        };
    }
    // {:.16e} always yields d.dddddddddddddddde<exp> with 17 significant digits.
    let sci = format!("{:.16e}", x);
    let epos = sci.find('e').expect("scientific format");
    let exp: i32 = sci[epos + 1..].parse().expect("exponent");
    if exp < -4 || exp >= 17 {
        let mantissa = sci[..epos].trim_end_matches('0').trim_end_matches('.');
        format!("{mantissa}e{exp}")
    } else {
        let decimals = (16 - exp).max(0) as usize;
        let fixed = format!("{:.*}", decimals, x);
        let trimmed = if fixed.contains('.') {
            fixed.trim_end_matches('0').trim_end_matches('.')
        } else {
            &fixed
        };
        trimmed.to_string()
    }
}

/// Serialize a value tree to canonical text.
pub fn to_canonical_string(v: &Value) -> Result<String> {
    let mut out = String::new();
    write_value(v, &mut out)?;
    Ok(out)
}

fn write_value(v: &Value, out: &mut String) -> Result<()> {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                out.push_str(&i.to_string());
            } else if let Some(u) = n.as_u64() {
                out.push_str(&u.to_string());
            } else {
                let x = n.as_f64().ok_or_else(|| Error::NonFinite("number".into()))?;
                if !x.is_finite() {
                    return Err(Error::NonFinite("number".into()));
                }
                out.push_str(&fmt_g17(x));
            }
        }
        Value::String(s) => {
            out.push_str(&serde_json::to_string(s).expect("string escapes"));
        }
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_value(item, out)?;
            }
            out.push(']');
        }
        Value::Object(map) => {
            out.push('{');
            // serde_json's default map is BTree-backed, so iteration is in
            // sorted key order already.
            for (i, (k, item)) in map.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(k).expect("key escapes"));
                out.push(':');
                write_value(item, out)?;
            }
            out.push('}');
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_to_stable_text() {
        assert_eq!(fmt_g17(0.0), "0");
        assert_eq!(fmt_g17(1.0), "1");
        assert_eq!(fmt_g17(-0.5), "-0.5");
        assert_eq!(fmt_g17(2.5), "2.5");
        for &x in &[1.0 / 3.0, 1e-7, 3.25e19, -9.875e-12, 123456.789] {
            let s = fmt_g17(x);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits(), "text {s} for {x}");
        }
    }

    #[test]
    fn keys_emit_sorted() {
        let v = obj(vec![("zeta", Value::from(1)), ("alpha", Value::from(2))]);
        assert_eq!(to_canonical_string(&v).unwrap(), "{\"alpha\":2,\"zeta\":1}");
    }

    #[test]
    fn nan_rejected() {
        assert!(num("margin", f64::NAN).is_err());
        assert!(num("margin", f64::INFINITY).is_err());
    }
}
