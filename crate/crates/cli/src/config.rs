//! Seed and simulator settings from flags, the config file and the environment.

use std::path::Path;

use cril_core::sim::{parse_key_values, SimConfig};

pub struct UsageError(pub String);

pub struct Resolved {
    pub seed: u64,
    pub seed_source: &'static str,
    pub sim: SimConfig,
}

/// Seed priority: flag, then `seed=` in the config file, then `CRIL_SEED`, then 0.
pub fn resolve(config: Option<&Path>, flag: Option<u64>, env: Option<&str>) -> Result<Resolved, UsageError> {
    let mut sim = SimConfig::default();
    let mut file_seed = None;
    if let Some(path) = config {
        let text = std::fs::read_to_string(path).map_err(|e| UsageError(format!("{}: {e}", path.display())))?;
        let entries = parse_key_values(&text).map_err(|e| UsageError(e.to_string()))?;
        let rest = sim.apply_overrides(entries).map_err(|e| UsageError(e.to_string()))?;
        for (key, value) in rest {
            match key {
                "seed" => file_seed = Some(parse_seed(value, "config seed")?),
                _ => return Err(UsageError(format!("{}: unknown key {key:?}", path.display()))),
            }
        }
    }
    let env_seed = env.map(|v| parse_seed(v, "CRIL_SEED")).transpose()?;
    let (seed, seed_source) = match (flag, file_seed, env_seed) {
        (Some(s), _, _) => (s, "flag"),
        (None, Some(s), _) => (s, "config"),
        (None, None, Some(s)) => (s, "CRIL_SEED"),
        (None, None, None) => (0, "default"),
    };
    Ok(Resolved { seed, seed_source, sim })
}

fn parse_seed(value: &str, what: &str) -> Result<u64, UsageError> {
    value.trim().parse().map_err(|_| UsageError(format!("{what}: not an unsigned integer: {value:?}")))
}
