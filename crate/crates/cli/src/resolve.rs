use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;
use splab::{Error, Result};

/// Recursively overlays `top` onto `base`; objects merge key-wise, everything else replaces.
pub fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, t) => *b = t,
    }
}

fn set_path(v: &mut Value, path: &str, val: Value) {
    let mut cur = v;
    for key in path.split('.') {
        if !cur.is_object() {
            *cur = Value::Object(Default::default());
        }
        cur = cur.as_object_mut().unwrap().entry(key.to_string()).or_insert(Value::Null);
    }
    *cur = val;
}

/// Loads a config file; a run manifest is accepted and its `config` is used.
pub fn read_config_file(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
    let mut v: Value = serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
    if v.get("subcommand").is_some() {
        if let Some(c) = v.get_mut("config") {
            return Ok(c.take());
        }
    }
    Ok(v)
}

/// Overrides applied by command-line flags, as dotted paths into the config JSON.
#[derive(Default)]
pub struct Overrides(Vec<(String, Value)>);

impl Overrides {
    pub fn set(&mut self, path: &str, v: Option<impl Serialize>) -> &mut Self {
        if let Some(v) = v {
            self.0.push((path.to_string(), serde_json::to_value(v).expect("flag values serialize")));
        }
        self
    }
}

/// Defaults, then the environment seed, then the config file, then flags.
pub fn resolve<T: Serialize + DeserializeOwned>(
    defaults: T,
    env_seed: &Overrides,
    file: Option<&Path>,
    flags: &Overrides,
) -> Result<(T, Value)> {
    let mut v = serde_json::to_value(defaults)?;
    for (p, x) in &env_seed.0 {
        set_path(&mut v, p, x.clone());
    }
    if let Some(f) = file {
        merge(&mut v, read_config_file(f)?);
    }
    for (p, x) in &flags.0 {
        set_path(&mut v, p, x.clone());
    }
    let typed: T = serde_json::from_value(v).map_err(|e| Error::config(format!("invalid configuration: {e}")))?;
    let canonical = serde_json::to_value(&typed)?;
    Ok((typed, canonical))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn merge_is_deep() {
        let mut a = json!({"a": {"b": 1, "c": 2}, "d": [1]});
        merge(&mut a, json!({"a": {"c": 3}, "d": [2, 3]}));
        assert_eq!(a, json!({"a": {"b": 1, "c": 3}, "d": [2, 3]}));
    }

    #[test]
    fn set_path_creates_objects() {
        let mut a = json!({});
        set_path(&mut a, "x.y", json!(4));
        assert_eq!(a, json!({"x": {"y": 4}}));
    }
}
