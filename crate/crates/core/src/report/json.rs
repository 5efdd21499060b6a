//! Canonical JSON: sorted keys, two-space indent, floats as 17 significant digits in
//! scientific notation, trailing newline. Equal values always give equal bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Number, Value};

use super::ReportError;

pub fn to_canonical_string<T: Serialize + ?Sized>(value: &T) -> Result<String, ReportError> {
    let value = serde_json::to_value(value)?;
    let mut out = String::new();
    write_value(&mut out, &value, 0);
    out.push('\n');
    Ok(out)
}

fn write_number(out: &mut String, n: &Number) {
    if n.is_f64() {
        let v = n.as_f64().unwrap_or(f64::NAN);
        let _ = write!(out, "{v:.16e}");
    } else {
        let _ = write!(out, "{n}");
    }
}

fn indent(out: &mut String, level: usize) {
    out.extend(std::iter::repeat_n(' ', 2 * level));
}

fn write_value(out: &mut String, value: &Value, level: usize) {
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => write_number(out, n),
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(items) if items.is_empty() => out.push_str("[]"),
        Value::Array(items) => {
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                indent(out, level + 1);
                write_value(out, item, level + 1);
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            indent(out, level);
            out.push(']');
        }
        Value::Object(map) if map.is_empty() => out.push_str("{}"),
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push_str("{\n");
            for (i, key) in keys.iter().enumerate() {
                indent(out, level + 1);
                out.push_str(&Value::String((*key).clone()).to_string());
                out.push_str(": ");
                write_value(out, &map[*key], level + 1);
                out.push_str(if i + 1 < keys.len() { ",\n" } else { "\n" });
            }
            indent(out, level);
            out.push('}');
        }
    }
}

pub fn write_report<T: Serialize + ?Sized>(value: &T, path: impl AsRef<Path>) -> Result<(), ReportError> {
    let path = path.as_ref();
    let text = to_canonical_string(value)?;
    fs::write(path, text).map_err(|source| ReportError::Io { path: path.display().to_string(), source })
}

pub fn read_report<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T, ReportError> {
    let path = path.as_ref();
    let text =
        fs::read_to_string(path).map_err(|source| ReportError::Io { path: path.display().to_string(), source })?;
    Ok(serde_json::from_str(&text)?)
}

/// FNV-1a 64 of the canonical JSON form, as 16 hex digits.
pub fn fingerprint<T: Serialize + ?Sized>(value: &T) -> Result<String, ReportError> {
    Ok(format!("{:016x}", fnv1a(to_canonical_string(value)?.as_bytes())))
}

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use serde_json::json;

    #[test]
    fn sorted_and_formatted() {
        let v = json!({"b": 1.5, "a": [1, "x\"y"], "c": {}, "d": []});
        assert_eq!(
            to_canonical_string(&v).unwrap(),
            "{\n  \"a\": [\n    1,\n    \"x\\\"y\"\n  ],\n  \"b\": 1.5000000000000000e0,\n  \"c\": {},\n  \"d\": []\n}\n"
        );
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a(b"a"), 0xaf63_dc4c_8601_ec8c);
    }

    proptest! {
        #[test]
        fn floats_round_trip(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
            let text = to_canonical_string(&vec![x]).unwrap();
            let back: Vec<f64> = serde_json::from_str(&text).unwrap();
            prop_assert_eq!(back[0].to_bits(), x.to_bits());
            prop_assert_eq!(to_canonical_string(&back).unwrap(), text);
        }
    }
}
