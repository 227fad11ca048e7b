//! Config files: JSON, layered over defaults, unknown fields rejected.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::error::CliError;
use crate::Result;

/// Parses a config file as a patch over `base`: absent fields keep the base
/// value, present ones override it, and fields the type does not have are
/// errors (silent typos would otherwise revert a setting to its default).
pub fn load_over<T>(base: T, path: Option<&Path>, what: &str) -> Result<T>
where
    T: Serialize + DeserializeOwned,
{
    let Some(path) = path else { return Ok(base) };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read {what} config {}: {e}", path.display())))?;
    let patch: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::usage(format!("{what} config {}: {e}", path.display())))?;

    let mut resolved = serde_json::to_value(&base)
        .map_err(|e| CliError::data(format!("serializing {what} defaults: {e}")))?;
    check_fields(&resolved, &patch, what, "")?;
    merge(&mut resolved, patch);
    serde_path_to_error::deserialize(resolved).map_err(|e| {
        CliError::usage(format!(
            "{what} config {}: field `{}`: {}",
            path.display(),
            e.path(),
            e.inner()
        ))
    })
}

/// Field names are validated against the serialized base, section by
/// section, so error messages carry the full dotted path.
fn check_fields(known: &Value, given: &Value, what: &str, path: &str) -> Result<()> {
    let (Some(known), Some(given)) = (known.as_object(), given.as_object()) else {
        return Ok(());
    };
    for (key, value) in given {
        match known.get(key) {
            None => {
                return Err(CliError::usage(format!(
                    "{what} config: unknown field `{path}{key}`"
                )))
            }
            Some(base) => check_fields(base, value, what, &format!("{path}{key}."))?,
        }
    }
    Ok(())
}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(base), Value::Object(patch)) => {
            for (key, value) in patch {
                match base.get_mut(&key) {
                    Some(slot) => merge(slot, value),
                    None => {
                        base.insert(key, value);
                    }
                }
            }
        }
        (base, patch) => *base = patch,
    }
}
