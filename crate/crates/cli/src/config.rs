//! Server settings from a TOML file, overridden by `PANELWISE_*` variables.
//!
//! ```toml
//! port = 8080
//! data_dir = "./data"
//! locale = "en"
//! templates_dir = "./templates"   # optional, built-in templates otherwise
//! mock_script = "./mock.json"     # optional, replaces the provider
//!
//! [provider]
//! endpoint = "https://api.example.com/v1/chat/completions"
//! model = "some-model"
//! timeout_secs = 30
//! max_repair_retries = 1
//! ```
//!
//! | variable                      | field                   |
//! |-------------------------------|-------------------------|
//! | `PANELWISE_PORT`              | `port`                  |
//! | `PANELWISE_DATA_DIR`          | `data_dir`              |
//! | `PANELWISE_LOCALE`            | `locale`                |
//! | `PANELWISE_TEMPLATES_DIR`     | `templates_dir`         |
//! | `PANELWISE_MOCK_SCRIPT`       | `mock_script`           |
//! | `PANELWISE_PROVIDER_ENDPOINT` | `provider.endpoint`     |
//! | `PANELWISE_PROVIDER_MODEL`    | `provider.model`        |
//! | `PANELWISE_PROVIDER_TIMEOUT`  | `provider.timeout_secs` |
//! | `PANELWISE_API_KEY`           | `provider.api_key`      |

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use panelwise_core::clock::{SystemClock, UuidIds};
use panelwise_core::gateway::{
    ChatCompletionProvider, Gateway, GatewayConfig, MockProvider, MockScript, Provider, ProviderConfig, Templates,
    BUILTIN_LOCALE,
};
use panelwise_core::store::{FileStore, Store};
use panelwise_core::{Engine, EngineConfig};
use serde::Deserialize;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {message}")]
    Read { path: PathBuf, message: String },
    #[error("`{name}`: {message}")]
    Value { name: String, message: String },
    #[error("no provider: set `mock_script` or a `[provider]` section")]
    NoProvider,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default = "default_port")]
    pub port: u16,
    #[serde(default = "default_data_dir")]
    pub data_dir: PathBuf,
    #[serde(default = "default_locale")]
    pub locale: String,
    #[serde(default)]
    pub templates_dir: Option<PathBuf>,
    #[serde(default)]
    pub mock_script: Option<PathBuf>,
    #[serde(default)]
    pub provider: Option<ProviderConfig>,
    #[serde(default)]
    pub engine: EngineConfig,
}

fn default_port() -> u16 {
    8080
}

fn default_data_dir() -> PathBuf {
    PathBuf::from("data")
}

fn default_locale() -> String {
    BUILTIN_LOCALE.to_string()
}

impl Default for Config {
    fn default() -> Self {
        toml::from_str("").expect("all fields have defaults")
    }
}

fn parsed<T: std::str::FromStr>(name: &str, raw: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    raw.trim().parse().map_err(|e: T::Err| ConfigError::Value {
        name: name.to_string(),
        message: e.to_string(),
    })
}

impl Config {
    /// Reads `file` if given, then applies variables from `env`.
    pub fn load(file: Option<&Path>, env: impl Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        let mut cfg = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
                    path: path.to_path_buf(),
                    message: e.to_string(),
                })?;
                toml::from_str(&text).map_err(|e| ConfigError::Read {
                    path: path.to_path_buf(),
                    message: e.to_string(),
                })?
            }
            None => Config::default(),
        };
        if let Some(v) = env("PANELWISE_PORT") {
            cfg.port = parsed("PANELWISE_PORT", &v)?;
        }
        if let Some(v) = env("PANELWISE_DATA_DIR") {
            cfg.data_dir = v.into();
        }
        if let Some(v) = env("PANELWISE_LOCALE") {
            cfg.locale = v;
        }
        if let Some(v) = env("PANELWISE_TEMPLATES_DIR") {
            cfg.templates_dir = Some(v.into());
        }
        if let Some(v) = env("PANELWISE_MOCK_SCRIPT") {
            cfg.mock_script = Some(v.into());
        }
        let endpoint = env("PANELWISE_PROVIDER_ENDPOINT");
        let model = env("PANELWISE_PROVIDER_MODEL");
        if cfg.provider.is_none() && (endpoint.is_some() || model.is_some()) {
            cfg.provider = Some(ProviderConfig {
                endpoint: String::new(),
                model: String::new(),
                timeout_secs: 30,
                max_repair_retries: 1,
                api_key: None,
                temperature: 0.0,
            });
        }
        if let Some(p) = cfg.provider.as_mut() {
            if let Some(v) = endpoint {
                p.endpoint = v;
            }
            if let Some(v) = model {
                p.model = v;
            }
            if let Some(v) = env("PANELWISE_PROVIDER_TIMEOUT") {
                p.timeout_secs = parsed("PANELWISE_PROVIDER_TIMEOUT", &v)?;
            }
            if let Some(v) = env("PANELWISE_API_KEY") {
                p.api_key = Some(v);
            }
        }
        Ok(cfg)
    }

    pub fn templates(&self) -> Result<Templates, ConfigError> {
        match &self.templates_dir {
            Some(dir) => Templates::load_dir(dir).map_err(|e| ConfigError::Value {
                name: "templates_dir".into(),
                message: e.to_string(),
            }),
            None => Ok(Templates::builtin()),
        }
    }

    pub fn store(&self) -> Result<Store, ConfigError> {
        let files = FileStore::open(&self.data_dir).map_err(|e| ConfigError::Value {
            name: "data_dir".into(),
            message: e.to_string(),
        })?;
        Ok(Store::new(Arc::new(files)))
    }

    /// The mock script wins over a configured provider.
    pub fn gateway(&self) -> Result<Gateway, ConfigError> {
        let (provider, gw): (Arc<dyn Provider>, GatewayConfig) = match (&self.mock_script, &self.provider) {
            (Some(path), _) => {
                let script = MockScript::load(path).map_err(|e| ConfigError::Read {
                    path: path.clone(),
                    message: e.to_string(),
                })?;
                (Arc::new(MockProvider::new(script)), GatewayConfig::default())
            }
            (None, Some(p)) => {
                let gw = GatewayConfig {
                    timeout: Duration::from_secs(p.timeout_secs),
                    max_repair_retries: p.max_repair_retries,
                };
                let provider = ChatCompletionProvider::new(p.clone()).map_err(|message| ConfigError::Value {
                    name: "provider".into(),
                    message,
                })?;
                (Arc::new(provider), gw)
            }
            (None, None) => return Err(ConfigError::NoProvider),
        };
        Gateway::new(provider, Arc::new(self.templates()?), self.locale.clone(), gw).map_err(|e| {
            ConfigError::Value {
                name: "locale".into(),
                message: e.to_string(),
            }
        })
    }

    pub fn engine(&self) -> Result<Engine, ConfigError> {
        Ok(Engine::new(
            Arc::new(self.gateway()?),
            self.store()?,
            Arc::new(SystemClock),
            Arc::new(UuidIds),
            self.engine.clone(),
        ))
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use super::*;

    fn env(pairs: &[(&str, &str)]) -> impl Fn(&str) -> Option<String> {
        let map: HashMap<String, String> = pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        move |k| map.get(k).cloned()
    }

    #[test]
    fn defaults_without_file_or_env() {
        let cfg = Config::load(None, env(&[])).unwrap();
        assert_eq!(cfg.port, 8080);
        assert_eq!(cfg.locale, "en");
        assert!(cfg.provider.is_none());
        assert!(matches!(cfg.gateway(), Err(ConfigError::NoProvider)));
    }

    #[test]
    fn env_overrides_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("panelwise.toml");
        std::fs::write(
            &path,
            "port = 9000\ndata_dir = \"/srv/pw\"\n[provider]\nendpoint = \"http://a\"\nmodel = \"m\"\n",
        )
        .unwrap();
        let cfg = Config::load(
            Some(&path),
            env(&[("PANELWISE_PORT", "9100"), ("PANELWISE_API_KEY", "k"), ("PANELWISE_PROVIDER_TIMEOUT", "5")]),
        )
        .unwrap();
        assert_eq!(cfg.port, 9100);
        assert_eq!(cfg.data_dir, PathBuf::from("/srv/pw"));
        let p = cfg.provider.unwrap();
        assert_eq!((p.endpoint.as_str(), p.model.as_str()), ("http://a", "m"));
        assert_eq!((p.api_key.as_deref(), p.timeout_secs), (Some("k"), 5));
    }

    #[test]
    fn provider_from_env_alone() {
        let cfg = Config::load(
            None,
            env(&[("PANELWISE_PROVIDER_ENDPOINT", "http://b"), ("PANELWISE_PROVIDER_MODEL", "m2")]),
        )
        .unwrap();
        assert!(cfg.gateway().is_ok());
    }

    #[test]
    fn bad_values_are_named() {
        let err = Config::load(None, env(&[("PANELWISE_PORT", "eighty")])).unwrap_err();
        assert!(err.to_string().contains("PANELWISE_PORT"));
        let err = Config::load(None, env(&[("PANELWISE_LOCALE", "xx"), ("PANELWISE_PROVIDER_ENDPOINT", "http://b")]))
            .unwrap()
            .gateway()
            .unwrap_err();
        assert!(err.to_string().contains("locale"));
    }

    #[test]
    fn full_file_parses() {
        let cfg: Config = toml::from_str(
            "port = 8081\nmock_script = \"m.json\"\n[provider]\nendpoint = \"http://a\"\nmodel = \"m\"\ntemperature = 0.0\n\
             [engine.caps]\narticulation_turns = 4\nelaboration_cycles = 9\n",
        )
        .unwrap();
        assert_eq!(cfg.engine.caps.articulation_turns, 4);
        assert_eq!(cfg.engine.caps.elaboration_cycles, 9);
        assert_eq!(cfg.mock_script, Some(PathBuf::from("m.json")));
    }

    #[test]
    fn unknown_file_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "prot = 1\n").unwrap();
        assert!(matches!(Config::load(Some(&path), env(&[])), Err(ConfigError::Read { .. })));
    }
}
