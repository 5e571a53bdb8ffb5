//! The optional JSON config document. Each command reads the object under
//! its own name (`"eval"` nests one object per subcommand); keys are the
//! long flag names.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::{CliError, CliResult};

#[derive(Debug, Clone, Default)]
pub struct ConfigFile {
    root: Map<String, Value>,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        match serde_json::from_str(&text) {
            Ok(Value::Object(root)) => Ok(ConfigFile { root }),
            Ok(_) => Err(CliError::Usage(format!("config {} must be a JSON object", path.display()))),
            Err(e) => Err(CliError::Usage(format!("config {}: {e}", path.display()))),
        }
    }

    /// Section `a.b` is `root["a"]["b"]`.
    fn section(&self, name: &str) -> Option<&Map<String, Value>> {
        let mut parts = name.split('.');
        let mut cur = self.root.get(parts.next()?)?.as_object()?;
        for p in parts {
            cur = cur.get(p)?.as_object()?;
        }
        Some(cur)
    }

    /// Fills every flag left unset on the command line from the section.
    pub fn merge<T: Serialize + DeserializeOwned>(&self, section: &str, cli: T) -> CliResult<T> {
        let Some(cfg) = self.section(section) else { return Ok(cli) };
        let Value::Object(mut args) = serde_json::to_value(&cli).expect("argument structs serialize") else {
            unreachable!("argument structs serialize to objects")
        };
        for (k, v) in cfg {
            let unset = args.get(k).is_none_or(|cur| cur.is_null() || cur == &Value::Bool(false));
            if !args.contains_key(k) {
                return Err(CliError::Usage(format!("config section `{section}` has unknown key `{k}`")));
            }
            if unset {
                args.insert(k.clone(), v.clone());
            }
        }
        serde_json::from_value(Value::Object(args)).map_err(|e| CliError::Usage(format!("config section `{section}`: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, Serialize, Deserialize, PartialEq)]
    #[serde(rename_all = "kebab-case")]
    struct A {
        plan: Option<String>,
        seed: Option<u64>,
    }

    fn cfg(v: Value) -> ConfigFile {
        ConfigFile { root: v.as_object().unwrap().clone() }
    }

    #[test]
    fn flags_override_config() {
        let c = cfg(serde_json::json!({"train": {"plan": "p.json", "seed": 3}}));
        let a = c.merge("train", A { plan: None, seed: Some(9) }).unwrap();
        assert_eq!(a, A { plan: Some("p.json".into()), seed: Some(9) });
    }

    #[test]
    fn nested_sections_and_unknown_keys() {
        let c = cfg(serde_json::json!({"eval": {"serve": {"seed": 1}}, "x": {"nope": 1}}));
        assert_eq!(c.merge("eval.serve", A { plan: None, seed: None }).unwrap().seed, Some(1));
        assert!(c.merge("x", A { plan: None, seed: None }).is_err());
        assert_eq!(c.merge("absent", A { plan: None, seed: None }).unwrap().seed, None);
    }
}
