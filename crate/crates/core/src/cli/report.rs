//! Report values: numbers rounded to 12 significant digits, rendered as JSON
//! for `--out` and as indented text for the terminal.

use nalgebra::DMatrix;
use serde_json::{Map, Value};

use crate::linalg::SymMatrix;

pub const SIGNIFICANT_DIGITS: usize = 12;

/// `x` with 12 significant digits, in plain notation when the exponent is
/// moderate.
pub fn format_number(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..SIGNIFICANT_DIGITS as i32).contains(&exp) {
        let decimals = (SIGNIFICANT_DIGITS as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa))
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        let t = s.trim_end_matches('0').trim_end_matches('.');
        if t == "-0" { "0".into() } else { t.into() }
    } else {
        s.into()
    }
}

/// JSON number rounded to 12 significant digits; non-finite values become strings.
pub fn num(x: f64) -> Value {
    let s = format_number(x);
    match s.parse::<f64>() {
        Ok(r) if r.is_finite() => serde_json::Number::from_f64(r).map_or(Value::String(s), Value::Number),
        _ => Value::String(s),
    }
}

pub fn nums(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|&x| num(x)).collect())
}

/// Row-major nested arrays.
pub fn matrix(m: &DMatrix<f64>) -> Value {
    Value::Array(
        (0..m.nrows())
            .map(|i| Value::Array((0..m.ncols()).map(|j| num(m[(i, j)])).collect()))
            .collect(),
    )
}

pub fn sym(m: &SymMatrix) -> Value {
    matrix(m.matrix())
}

/// 1-based labels.
pub fn labels(assignment: &[usize]) -> Value {
    Value::Array(assignment.iter().map(|&t| Value::from(t + 1)).collect())
}

/// Insertion-ordered JSON object builder.
#[derive(Debug, Default, Clone)]
pub struct Obj(Map<String, Value>);

impl Obj {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.0.insert(key.to_string(), value.into());
        self
    }

    pub fn put(&mut self, key: &str, value: impl Into<Value>) {
        self.0.insert(key.to_string(), value.into());
    }
}

impl From<Obj> for Value {
    fn from(o: Obj) -> Value {
        Value::Object(o.0)
    }
}

fn scalar_text(v: &Value) -> Option<String> {
    match v {
        Value::Null => Some("-".into()),
        Value::Bool(b) => Some(b.to_string()),
        Value::Number(n) => Some(match n.as_f64() {
            Some(f) if !n.is_i64() && !n.is_u64() => format_number(f),
            _ => n.to_string(),
        }),
        Value::String(s) => Some(s.clone()),
        _ => None,
    }
}

fn inline_array(items: &[Value]) -> Option<String> {
    let parts: Option<Vec<String>> = items.iter().map(scalar_text).collect();
    parts.map(|p| format!("[{}]", p.join(", ")))
}

fn is_matrix(items: &[Value]) -> bool {
    !items.is_empty()
        && items
            .iter()
            .all(|r| matches!(r, Value::Array(row) if !row.is_empty() && inline_array(row).is_some()))
}

/// Indented `key: value` text; numeric rows stay on one line and matrices
/// get one line per row.
pub fn render_text(value: &Value) -> String {
    let mut out = String::new();
    render_into(&mut out, value, 0);
    out
}

fn render_into(out: &mut String, value: &Value, indent: usize) {
    let pad = "  ".repeat(indent);
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                match v {
                    Value::Object(_) => {
                        out.push_str(&format!("{pad}{k}:\n"));
                        render_into(out, v, indent + 1);
                    }
                    Value::Array(items) => {
                        if let Some(line) = inline_array(items) {
                            out.push_str(&format!("{pad}{k}: {line}\n"));
                        } else if is_matrix(items) {
                            out.push_str(&format!("{pad}{k}:\n"));
                            for row in items {
                                let Value::Array(row) = row else { unreachable!() };
                                out.push_str(&format!("{pad}  {}\n", inline_array(row).unwrap_or_default()));
                            }
                        } else {
                            out.push_str(&format!("{pad}{k}:\n"));
                            render_into(out, v, indent + 1);
                        }
                    }
                    _ => out.push_str(&format!("{pad}{k}: {}\n", scalar_text(v).unwrap_or_default())),
                }
            }
        }
        Value::Array(items) => {
            for item in items {
                match item {
                    Value::Object(_) | Value::Array(_) => {
                        let mut inner = String::new();
                        render_into(&mut inner, item, indent + 1);
                        // Put the first line on the bullet.
                        let trimmed = inner.trim_start();
                        out.push_str(&format!("{pad}- {trimmed}"));
                    }
                    _ => out.push_str(&format!("{pad}- {}\n", scalar_text(item).unwrap_or_default())),
                }
            }
        }
        _ => out.push_str(&format!("{pad}{}\n", scalar_text(value).unwrap_or_default())),
    }
}
