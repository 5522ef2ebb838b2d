//! Number formatting for command outputs: nine significant digits, no
//! locale, no negative zero.

use serde_json::Value;

/// `x` rounded to nine significant digits.
pub fn sig9(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return if x == 0.0 { 0.0 } else { x };
    }
    format!("{x:.8e}").parse::<f64>().expect("formatted float parses") + 0.0
}

/// Text form of `sig9(x)`: plain decimals for moderate magnitudes,
/// exponent notation otherwise.
pub fn num(x: f64) -> String {
    let r = sig9(x);
    let a = r.abs();
    if r == 0.0 || (1e-4..1e9).contains(&a) || !r.is_finite() {
        format!("{r}")
    } else {
        format!("{r:e}")
    }
}

pub fn json(x: f64) -> Value {
    serde_json::Number::from_f64(sig9(x)).map(Value::Number).unwrap_or(Value::Null)
}

pub fn json_vec(v: &[f64]) -> Value {
    Value::Array(v.iter().map(|&x| json(x)).collect())
}

pub fn json_opt(x: Option<f64>) -> Value {
    x.map(json).unwrap_or(Value::Null)
}
