use std::path::Path;

use anyhow::{bail, Context, Result};
use ran_core::nets::NetworkConfig;
use ran_core::train::TrainConfig;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    /// Corpus manifest used by `train`; empty means "pass --manifest".
    pub manifest: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub paths: Paths,
}

/// Name of the config snapshot written next to checkpoints.
pub const SNAPSHOT: &str = "config.toml";

impl RunConfig {
    /// Defaults, then the file (if any), then each `key=value` override.
    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table = match file {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                text.parse::<Table>()
                    .map_err(|e| crate::FormatError(format!("{}: {e}", p.display())))?
            }
            None => Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: RunConfig = Value::Table(table)
            .try_into()
            .map_err(|e| anyhow::anyhow!("invalid config: {e}"))?;
        cfg.network.validate()?;
        cfg.train.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// `a.b.c=value`; the value is read as a TOML literal, falling back to a bare string.
fn apply_override(table: &mut Table, spec: &str) -> Result<()> {
    let Some((key, raw)) = spec.split_once('=') else {
        bail!("override {spec:?} is not key=value");
    };
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        bail!("bad config key {key:?}");
    }
    let value = format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let slot = cur.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
        cur = match slot {
            Value::Table(t) => t,
            _ => bail!("config key {key:?} descends into a non-table"),
        };
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    match v {
        Value::Table(t) => {
            for (k, v) in t {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

/// Every config key with its default, one per line.
pub fn keys_help() -> String {
    let mut keys = Vec::new();
    flatten("", &Value::try_from(RunConfig::default()).expect("config serializes"), &mut keys);
    let width = keys.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let mut s = String::from("Config keys (TOML sections; override any with --set key=value):\n");
    for (k, v) in keys {
        s.push_str(&format!("  {k:width$}  {v}\n"));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_and_unknown_keys() {
        let cfg = RunConfig::load(None, &["network.restorator.n_blocks=3".into(), "train.phase3_lr=0.5".into()]).unwrap();
        assert_eq!(cfg.network.restorator.n_blocks, 3);
        assert_eq!(cfg.train.phase3_lr, 0.5);
        let cfg = RunConfig::load(None, &["network.adv_mode=loggan".into()]).unwrap();
        assert_eq!(cfg.network.adv_mode, ran_core::nets::AdvMode::Loggan);
        assert!(RunConfig::load(None, &["network.bogus=1".into()]).is_err());
        assert!(RunConfig::load(None, &["train.critic_steps=0".into()]).is_err());
        assert!(RunConfig::load(None, &["nokey".into()]).is_err());
    }

    #[test]
    fn snapshot_round_trips() {
        let cfg = RunConfig::load(None, &["train.seed=9".into()]).unwrap();
        let back: RunConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn help_lists_nested_keys() {
        let h = keys_help();
        for k in ["network.restorator.n_blocks", "train.split.seed", "paths.manifest", "network.evaluator.shared_trunk"] {
            assert!(h.contains(k), "{k}");
        }
    }

    #[test]
    fn shipped_desk_config_parses() {
        let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.toml");
        let cfg = RunConfig::load(Some(&p), &[]).unwrap();
        assert_eq!(cfg.network, NetworkConfig::desk());
        assert_eq!(cfg.train, TrainConfig::desk());
    }
}
