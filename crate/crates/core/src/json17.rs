//! JSON writer that renders every float with 17 significant digits.
//!
//! Checkpoint files must survive a save/load round trip bit-exactly; 17
//! significant decimal digits are sufficient to reproduce any finite f64.
//! Integers pass through untouched and object keys come out in sorted order,
//! so output is deterministic for a given value.

use serde::Serialize;
use serde_json::Value;

#[derive(Debug, thiserror::Error)]
pub enum Json17Error {
    #[error(transparent)]
    Serde(#[from] serde_json::Error),
    #[error("non-finite float cannot be serialized")]
    NonFinite,
}

/// Serialize a value to a JSON string with 17-significant-digit floats.
pub fn to_string_17<T: Serialize>(value: &T) -> Result<String, Json17Error> {
    let v = serde_json::to_value(value)?;
    let mut out = String::new();
    write_value(&mut out, &v)?;
    Ok(out)
}

fn write_value(out: &mut String, v: &Value) -> Result<(), Json17Error> {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                out.push_str(&i.to_string());
            } else if let Some(u) = n.as_u64() {
                out.push_str(&u.to_string());
            } else {
                let f = n.as_f64().ok_or(Json17Error::NonFinite)?;
                if !f.is_finite() {
                    return Err(Json17Error::NonFinite);
                }
                // One digit before the point plus 16 after: 17 significant.
                out.push_str(&format!("{f:.16e}"));
            }
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s)?),
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_value(out, item)?;
            }
            out.push(']');
        }
        Value::Object(map) => {
            out.push('{');
            for (i, (k, item)) in map.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(k)?);
                out.push(':');
                write_value(out, item)?;
            }
            out.push('}');
        }
    }
    Ok(())
}
