use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::CliError;

/// Deep-merges `over` into `base`; objects merge key by key, anything else
/// replaces.
pub fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

pub fn read_config_file(path: &Path) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    if !v.is_object() {
        return Err(CliError::Input(format!("{}: config must be a JSON object", path.display())));
    }
    Ok(v)
}

/// Defaults, then the config file, then flags. Unknown keys fail at the
/// final deserialization.
pub fn resolve<C: Serialize + DeserializeOwned>(base: &C, file: Option<Value>, flags: Map<String, Value>) -> Result<C, CliError> {
    let mut v = serde_json::to_value(base).map_err(|e| CliError::Input(e.to_string()))?;
    if let Some(f) = file {
        merge(&mut v, f);
    }
    merge(&mut v, Value::Object(flags));
    serde_json::from_value(v).map_err(|e| CliError::Input(format!("config: {e}")))
}

/// Collects `Some` flag values under their config keys; `path` nests them.
#[derive(Default)]
pub struct Flags(Map<String, Value>);

impl Flags {
    pub fn set<V: Serialize>(&mut self, path: &[&str], v: Option<V>) -> &mut Self {
        let Some(v) = v else { return self };
        let mut map = &mut self.0;
        for key in &path[..path.len() - 1] {
            map = map
                .entry(key.to_string())
                .or_insert_with(|| Value::Object(Map::new()))
                .as_object_mut()
                .expect("flag paths nest objects");
        }
        map.insert(path[path.len() - 1].to_string(), serde_json::to_value(v).expect("flag values serialize"));
        self
    }

    pub fn into_map(self) -> Map<String, Value> {
        self.0
    }
}

/// `<file>.resolved.json` beside a single output file.
pub fn sidecar(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".resolved.json");
    out.with_file_name(name)
}

pub fn write_json<V: Serialize>(path: &Path, v: &V) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(v).map_err(|e| CliError::Numeric(e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Input(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;
    use serde_json::json;

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Inner {
        a: u32,
        b: f64,
    }

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Outer {
        name: String,
        inner: Inner,
    }

    fn base() -> Outer {
        Outer { name: "x".into(), inner: Inner { a: 1, b: 2.0 } }
    }

    #[test]
    fn layering_order() {
        let file = json!({"name": "file", "inner": {"a": 5}});
        let mut flags = Flags::default();
        flags.set(&["inner", "b"], Some(9.5)).set(&["name"], None::<String>);
        let c: Outer = resolve(&base(), Some(file), flags.into_map()).unwrap();
        assert_eq!(c, Outer { name: "file".into(), inner: Inner { a: 5, b: 9.5 } });
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(resolve(&base(), Some(json!({"bogus": 1})), Map::new()).is_err());
        assert!(resolve(&base(), Some(json!({"inner": {"c": 1}})), Map::new()).is_err());
    }

    #[test]
    fn sidecar_name() {
        assert_eq!(sidecar(Path::new("out/t.csv")), PathBuf::from("out/t.csv.resolved.json"));
    }
}
