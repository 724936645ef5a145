//! Canonical JSON text and path-projection filters.
//!
//! Every equality test in the pipeline compares canonical strings, so two
//! trees that differ only in key order or number spelling compare equal.
//!
//! Canonical form:
//! - object keys sorted by byte order, no insignificant whitespace
//! - integers (and integral floats below 2^53) written bare: `2`, not `2.0`
//! - other floats in shortest round-trip decimal
//! - strings escaped as `serde_json` escapes them

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Number, Value};
use thiserror::Error;

/// Largest magnitude at which every integer is exactly representable in f64.
const EXACT_INT_LIMIT: f64 = 9_007_199_254_740_992.0;

#[derive(Debug, Error, PartialEq)]
pub enum CanonicalError {
    #[error("non-finite number at {path}")]
    NonFiniteNumber { path: String },
    #[error("invalid filter path {0:?}")]
    InvalidPath(String),
    #[error("filter must contain at least one path")]
    EmptyFilter,
    #[error("json: {0}")]
    Json(String),
}

/// The unique canonical serialization of a JSON tree.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CanonicalJson(String);

impl CanonicalJson {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }

    /// Re-parses the text. Canonical text is always valid JSON.
    pub fn to_value(&self) -> Value {
        serde_json::from_str(&self.0).expect("canonical text is valid json")
    }

    /// Parses arbitrary JSON text and canonicalizes it.
    pub fn parse(text: &str) -> Result<Self, CanonicalError> {
        let v: Value = serde_json::from_str(text).map_err(|e| CanonicalError::Json(e.to_string()))?;
        canonicalize(&v)
    }
}

impl fmt::Display for CanonicalJson {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for CanonicalJson {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

pub fn canonicalize(tree: &Value) -> Result<CanonicalJson, CanonicalError> {
    let mut out = String::new();
    write_value(tree, &mut out, &mut Vec::new())?;
    Ok(CanonicalJson(out))
}

/// Canonicalizes any serializable value.
///
/// `serde_json` maps NaN and infinities to `null` when building a `Value`,
/// so callers holding raw floats must check finiteness first (see
/// [`check_finite`]).
pub fn canonicalize_serialize<T: Serialize>(value: &T) -> Result<CanonicalJson, CanonicalError> {
    let v = serde_json::to_value(value).map_err(|e| CanonicalError::Json(e.to_string()))?;
    canonicalize(&v)
}

/// Returns `NonFiniteNumber` naming `path` when `x` is NaN or infinite.
pub fn check_finite(path: &str, x: f64) -> Result<(), CanonicalError> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(CanonicalError::NonFiniteNumber { path: path.to_string() })
    }
}

fn write_value(v: &Value, out: &mut String, path: &mut Vec<String>) -> Result<(), CanonicalError> {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => write_number(n, out, path)?,
        Value::String(s) => write_string(s, out),
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                path.push(i.to_string());
                write_value(item, out, path)?;
                path.pop();
            }
            out.push(']');
        }
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_string(k, out);
                out.push(':');
                path.push(k.clone());
                write_value(&map[k], out, path)?;
                path.pop();
            }
            out.push('}');
        }
    }
    Ok(())
}

fn write_number(n: &Number, out: &mut String, path: &[String]) -> Result<(), CanonicalError> {
    if let Some(u) = n.as_u64() {
        out.push_str(&u.to_string());
    } else if let Some(i) = n.as_i64() {
        out.push_str(&i.to_string());
    } else {
        let x = n.as_f64().unwrap_or(f64::NAN);
        if !x.is_finite() {
            return Err(CanonicalError::NonFiniteNumber { path: path.join(".") });
        }
        out.push_str(&format_f64(x));
    }
    Ok(())
}

/// Shortest round-trip text for a finite float; integral values print bare.
pub fn format_f64(x: f64) -> String {
    if x == x.trunc() && x.abs() < EXACT_INT_LIMIT {
        // also folds -0.0 into 0
        return (x as i64).to_string();
    }
    Number::from_f64(x).map(|n| n.to_string()).unwrap_or_else(|| "null".to_string())
}

fn write_string(s: &str, out: &mut String) {
    out.push_str(&serde_json::to_string(s).expect("string serialization is infallible"));
}

/// Equality of JSON trees with numbers compared by value, so `1` equals `1.0`.
pub fn structurally_equal(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => match (x.as_i64(), y.as_i64()) {
            (Some(p), Some(q)) => p == q,
            _ => match (x.as_u64(), y.as_u64()) {
                (Some(p), Some(q)) => p == q,
                _ => x.as_f64() == y.as_f64(),
            },
        },
        (Value::Array(x), Value::Array(y)) => {
            x.len() == y.len() && x.iter().zip(y).all(|(p, q)| structurally_equal(p, q))
        }
        (Value::Object(x), Value::Object(y)) => {
            x.len() == y.len()
                && x.iter().all(|(k, v)| y.get(k).is_some_and(|w| structurally_equal(v, w)))
        }
        _ => a == b,
    }
}

/// A set of dot-separated key paths selecting the part of a model tree the
/// GUI must be aware of.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct FilterSpec {
    paths: BTreeSet<String>,
}

impl FilterSpec {
    pub fn new<I, S>(paths: I) -> Result<Self, CanonicalError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut set = BTreeSet::new();
        for p in paths {
            let p = p.into();
            if p.is_empty() || p.split('.').any(str::is_empty) {
                return Err(CanonicalError::InvalidPath(p));
            }
            set.insert(p);
        }
        if set.is_empty() {
            return Err(CanonicalError::EmptyFilter);
        }
        Ok(Self { paths: set })
    }

    /// The filter used throughout the case study: only the warning mode.
    pub fn warning_mode() -> Self {
        Self::new(["warningMode"]).expect("static path is valid")
    }

    pub fn paths(&self) -> impl Iterator<Item = &str> {
        self.paths.iter().map(String::as_str)
    }

    /// Returns the sub-tree holding exactly the addressed nodes, nesting kept.
    pub fn project(&self, tree: &Value) -> Value {
        let mut out = Map::new();
        // BTreeSet order visits a prefix before its extensions.
        for path in &self.paths {
            let segments: Vec<&str> = path.split('.').collect();
            if let Some(found) = lookup(tree, &segments) {
                insert_at(&mut out, &segments, found.clone());
            }
        }
        Value::Object(out)
    }
}

impl TryFrom<Vec<String>> for FilterSpec {
    type Error = CanonicalError;

    fn try_from(paths: Vec<String>) -> Result<Self, Self::Error> {
        Self::new(paths)
    }
}

impl From<FilterSpec> for Vec<String> {
    fn from(f: FilterSpec) -> Self {
        f.paths.into_iter().collect()
    }
}

impl Default for FilterSpec {
    fn default() -> Self {
        Self::warning_mode()
    }
}

fn lookup<'a>(tree: &'a Value, segments: &[&str]) -> Option<&'a Value> {
    let mut cur = tree;
    for seg in segments {
        cur = cur.as_object()?.get(*seg)?;
    }
    Some(cur)
}

fn insert_at(out: &mut Map<String, Value>, segments: &[&str], value: Value) {
    let (last, parents) = segments.split_last().expect("paths are non-empty");
    let mut cur = out;
    for seg in parents {
        let slot = cur.entry(seg.to_string()).or_insert_with(|| Value::Object(Map::new()));
        match slot {
            Value::Object(m) => cur = m,
            // a shorter path already copied this whole sub-tree
            _ => return,
        }
    }
    cur.insert(last.to_string(), value);
}

/// Projects `tree` through `f` and canonicalizes the result.
pub fn apply_filter(f: &FilterSpec, tree: &Value) -> CanonicalJson {
    canonicalize(&f.project(tree)).expect("projection of a serde_json value holds only finite numbers")
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn sorts_keys() {
        let c = canonicalize(&json!({"b": 1, "a": 2})).unwrap();
        assert_eq!(c.as_str(), r#"{"a":2,"b":1}"#);
    }

    #[test]
    fn empty_object() {
        assert_eq!(canonicalize(&json!({})).unwrap().as_str(), "{}");
    }

    #[test]
    fn number_spelling() {
        let c = canonicalize(&json!({"a": 2.0, "b": -0.0, "c": 0.1, "d": 1e300, "e": -7})).unwrap();
        assert_eq!(c.as_str(), r#"{"a":2,"b":0,"c":0.1,"d":1e+300,"e":-7}"#);
    }

    #[test]
    fn nested_and_escaped() {
        let c = canonicalize(&json!({"z": [1, {"y": true, "x": null}], "q": "a\"b\n"})).unwrap();
        assert_eq!(c.as_str(), r#"{"q":"a\"b\n","z":[1,{"x":null,"y":true}]}"#);
    }

    #[test]
    fn non_finite_is_rejected() {
        assert!(matches!(
            check_finite("drone.alt_m", f64::NAN),
            Err(CanonicalError::NonFiniteNumber { .. })
        ));
        assert!(check_finite("x", 1.5).is_ok());
    }

    #[test]
    fn filter_warning_mode() {
        let tree = json!({"seq": 3, "warningMode": 2, "drone": {"alt_m": 120}});
        let out = apply_filter(&FilterSpec::warning_mode(), &tree);
        assert_eq!(out.as_str(), r#"{"warningMode":2}"#);
    }

    #[test]
    fn filter_absent_path_is_empty() {
        let f = FilterSpec::new(["drone.alt_m"]).unwrap();
        assert_eq!(apply_filter(&f, &json!({"warningMode": 1})).as_str(), "{}");
    }

    #[test]
    fn filter_keeps_nesting_and_prefixes() {
        let tree = json!({"drone": {"pos": {"lat": 1.5, "lon": 2.5}, "alt_m": 3}, "w": 0});
        let f = FilterSpec::new(["drone.pos.lat", "drone.alt_m"]).unwrap();
        assert_eq!(apply_filter(&f, &tree).as_str(), r#"{"drone":{"alt_m":3,"pos":{"lat":1.5}}}"#);
        let f = FilterSpec::new(["drone", "drone.pos.lat"]).unwrap();
        assert_eq!(apply_filter(&f, &tree), canonicalize(&json!({"drone": tree["drone"]})).unwrap());
    }

    #[test]
    fn filter_path_through_scalar_is_absent() {
        let f = FilterSpec::new(["warningMode.level"]).unwrap();
        assert_eq!(apply_filter(&f, &json!({"warningMode": 2})).as_str(), "{}");
    }

    #[test]
    fn invalid_filters() {
        assert_eq!(FilterSpec::new(Vec::<String>::new()), Err(CanonicalError::EmptyFilter));
        assert!(matches!(FilterSpec::new(["a..b"]), Err(CanonicalError::InvalidPath(_))));
        assert!(matches!(FilterSpec::new([""]), Err(CanonicalError::InvalidPath(_))));
        let f = FilterSpec::new(["a", "a", "b"]).unwrap();
        assert_eq!(f.paths().count(), 2);
    }

    #[test]
    fn filter_serde() {
        let f: FilterSpec = serde_json::from_str(r#"["warningMode","drone.alt_m"]"#).unwrap();
        assert_eq!(serde_json::to_string(&f).unwrap(), r#"["drone.alt_m","warningMode"]"#);
        assert!(serde_json::from_str::<FilterSpec>("[]").is_err());
    }
}
