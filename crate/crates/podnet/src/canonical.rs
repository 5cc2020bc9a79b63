//! Canonical JSON: compact, object keys sorted, one trailing newline.

use podnet_core::crypto::{hash, Digest};
use serde::Serialize;

pub fn to_string<T: Serialize>(value: &T) -> serde_json::Result<String> {
    // serde_json's Map is a BTreeMap unless `preserve_order` is enabled,
    // so routing through Value sorts every object.
    let v = serde_json::to_value(value)?;
    let mut s = serde_json::to_string(&v)?;
    s.push('\n');
    Ok(s)
}

pub fn digest<T: Serialize>(value: &T) -> serde_json::Result<Digest> {
    Ok(hash(to_string(value)?.as_bytes()))
}
