//! TOML scenario files and `HETMIMO_*` environment overrides.

use std::path::Path;

use anyhow::{bail, Context, Result};
use hetmimo_core::ScenarioConfig;
use toml::{Table, Value};

pub const ENV_PREFIX: &str = "HETMIMO_";

/// Parses a scenario. Accepts either a bare config table or a run metadata file,
/// whose `[config]` table is the resolved scenario.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let table: Table = text.parse().context("not valid TOML")?;
    let table = match table.get("config") {
        Some(Value::Table(inner)) if table.contains_key("run") => inner.clone(),
        _ => table,
    };
    Value::Table(table).try_into().context("not a complete scenario")
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_config(&text).with_context(|| format!("in {}", path.display()))
}

pub fn to_toml(cfg: &ScenarioConfig) -> String {
    toml::to_string(cfg).expect("scenario serializes")
}

fn config_table(cfg: &ScenarioConfig) -> Table {
    match Value::try_from(cfg).expect("scenario serializes") {
        Value::Table(t) => t,
        _ => unreachable!("scenario is a table"),
    }
}

/// Environment variable names for every config key, nested keys joined with `_`.
pub fn env_keys() -> Vec<(String, Vec<String>)> {
    fn walk(t: &Table, path: &mut Vec<String>, out: &mut Vec<(String, Vec<String>)>) {
        for (k, v) in t {
            path.push(k.clone());
            match v {
                Value::Table(inner) => walk(inner, path, out),
                _ => out.push((format!("{ENV_PREFIX}{}", path.join("_").to_uppercase()), path.clone())),
            }
            path.pop();
        }
    }
    let mut out = Vec::new();
    walk(&config_table(&hetmimo_core::Preset::HeteroQuarter.config()), &mut Vec::new(), &mut out);
    out
}

fn parse_scalar(raw: &str, like: &Value) -> Value {
    let trimmed = raw.trim();
    let parsed = format!("v = {trimmed}").parse::<Table>().ok().and_then(|mut t| t.remove("v"));
    match (like, parsed) {
        (Value::Float(_), Some(Value::Integer(i))) => Value::Float(i as f64),
        (Value::String(_), _) => Value::String(trimmed.to_string()),
        (_, Some(v)) => v,
        (_, None) => Value::String(trimmed.to_string()),
    }
}

/// Applies every `HETMIMO_<KEY>` in `vars` to `cfg`. Returns the names of
/// prefixed variables that match no key.
pub fn apply_env<I>(cfg: &ScenarioConfig, vars: I) -> Result<(ScenarioConfig, Vec<String>)>
where
    I: IntoIterator<Item = (String, String)>,
{
    let keys = env_keys();
    let mut table = config_table(cfg);
    let mut unknown = Vec::new();
    let mut vars: Vec<(String, String)> = vars.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
    vars.sort();
    for (name, raw) in vars {
        let Some((_, path)) = keys.iter().find(|(k, _)| *k == name) else {
            unknown.push(name);
            continue;
        };
        let mut slot = &mut table;
        for key in &path[..path.len() - 1] {
            slot = match slot.get_mut(key) {
                Some(Value::Table(t)) => t,
                _ => bail!("{name}: no table `{key}`"),
            };
        }
        let leaf = &path[path.len() - 1];
        let like = slot.get(leaf).cloned().unwrap_or(Value::String(String::new()));
        slot.insert(leaf.clone(), parse_scalar(&raw, &like));
    }
    let cfg = Value::Table(table).try_into().context("environment override has the wrong type")?;
    Ok((cfg, unknown))
}
