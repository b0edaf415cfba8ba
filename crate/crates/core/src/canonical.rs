//! Canonical text encoding shared by every file format in the crate.
//!
//! Documents are JSON with object keys in sorted order, two-space
//! indentation, integers written as integers and every other number written
//! with exactly nine decimals. Output always ends with a newline. Reading a
//! canonical document back and re-encoding it reproduces the same bytes.

use std::fmt::Write as _;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

pub const DECIMALS: usize = 9;

#[derive(Debug, Error)]
pub enum CanonicalError {
    #[error("cannot encode value: {0}")]
    Encode(String),
    #[error("malformed document: {0}")]
    Decode(#[from] serde_json::Error),
}

/// Encodes `value` in canonical form.
pub fn to_string<T: Serialize + ?Sized>(value: &T) -> Result<String, CanonicalError> {
    let v = serde_json::to_value(value).map_err(|e| CanonicalError::Encode(e.to_string()))?;
    let mut out = String::new();
    write_value(&mut out, &v, 0)?;
    out.push('\n');
    Ok(out)
}

/// Encodes `value` on a single line (no trailing newline), for line-delimited logs.
pub fn to_line<T: Serialize + ?Sized>(value: &T) -> Result<String, CanonicalError> {
    let v = serde_json::to_value(value).map_err(|e| CanonicalError::Encode(e.to_string()))?;
    let mut out = String::new();
    write_compact(&mut out, &v)?;
    Ok(out)
}

pub fn from_str<T: DeserializeOwned>(text: &str) -> Result<T, CanonicalError> {
    Ok(serde_json::from_str(text)?)
}

pub fn from_slice<T: DeserializeOwned>(bytes: &[u8]) -> Result<T, CanonicalError> {
    Ok(serde_json::from_slice(bytes)?)
}

/// Fixed-point rendering of a float, with negative zero folded to zero.
pub fn format_number(x: f64) -> Result<String, CanonicalError> {
    if !x.is_finite() {
        return Err(CanonicalError::Encode(format!("non-finite number {x}")));
    }
    let s = format!("{x:.DECIMALS$}");
    if s.starts_with('-') && s[1..].bytes().all(|b| b == b'0' || b == b'.') {
        Ok(s[1..].to_string())
    } else {
        Ok(s)
    }
}

fn write_scalar(out: &mut String, v: &Value) -> Result<(), CanonicalError> {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                write!(out, "{i}").unwrap();
            } else if let Some(u) = n.as_u64() {
                write!(out, "{u}").unwrap();
            } else {
                let x = n
                    .as_f64()
                    .ok_or_else(|| CanonicalError::Encode(format!("unrepresentable number {n}")))?;
                out.push_str(&format_number(x)?);
            }
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("string encoding")),
        Value::Array(_) | Value::Object(_) => unreachable!("containers handled by caller"),
    }
    Ok(())
}

fn indent(out: &mut String, level: usize) {
    for _ in 0..level {
        out.push_str("  ");
    }
}

fn is_flat_array(items: &[Value]) -> bool {
    items.iter().all(|v| !matches!(v, Value::Array(_) | Value::Object(_)))
}

fn write_value(out: &mut String, v: &Value, level: usize) -> Result<(), CanonicalError> {
    match v {
        Value::Array(items) if items.is_empty() => out.push_str("[]"),
        // short numeric tuples (positions, quaternions, trail points) stay on one line
        Value::Array(items) if is_flat_array(items) => write_compact(out, v)?,
        Value::Array(items) => {
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                indent(out, level + 1);
                write_value(out, item, level + 1)?;
                if i + 1 < items.len() {
                    out.push(',');
                }
                out.push('\n');
            }
            indent(out, level);
            out.push(']');
        }
        Value::Object(map) if map.is_empty() => out.push_str("{}"),
        Value::Object(map) => {
            out.push_str("{\n");
            // serde_json's default Map is ordered by key
            let n = map.len();
            for (i, (k, item)) in map.iter().enumerate() {
                indent(out, level + 1);
                out.push_str(&serde_json::to_string(k).expect("key encoding"));
                out.push_str(": ");
                write_value(out, item, level + 1)?;
                if i + 1 < n {
                    out.push(',');
                }
                out.push('\n');
            }
            indent(out, level);
            out.push('}');
        }
        _ => write_scalar(out, v)?,
    }
    Ok(())
}

fn write_compact(out: &mut String, v: &Value) -> Result<(), CanonicalError> {
    match v {
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_compact(out, item)?;
            }
            out.push(']');
        }
        Value::Object(map) => {
            out.push('{');
            for (i, (k, item)) in map.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                out.push_str(&serde_json::to_string(k).expect("key encoding"));
                out.push_str(": ");
                write_compact(out, item)?;
            }
            out.push('}');
        }
        _ => write_scalar(out, v)?,
    }
    Ok(())
}
