use std::collections::BTreeMap;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{GeneratorConfig, SchedulerConfig};
use crate::error::{Error, Result};
use crate::model::{Condition, TaskDomain};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    /// Relative weights keyed by condition label (`H3`, `H2_S`, ...).
    pub condition_weights: BTreeMap<String, f64>,
    /// Relative weights keyed by task code (`SR`, `ED`, `CSW`).
    pub task_weights: BTreeMap<String, f64>,
    pub duration_s: f64,
    pub match_interval_s: f64,
    pub familiarisation_s: f64,
    pub evaluation_timeout_s: Option<f64>,
    pub timer_interval_s: f64,
    pub tick_ms: u64,
    pub pseudonyms: Vec<String>,
    pub compose_delay_s: f64,
    pub seed: u64,
    pub scheduler: SchedulerConfig,
    pub generator: GeneratorConfig,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            condition_weights: Condition::all().iter().map(|c| (c.label().to_string(), 1.0)).collect(),
            task_weights: TaskDomain::ALL.iter().map(|t| (t.code().to_string(), 1.0)).collect(),
            duration_s: 600.0,
            match_interval_s: 300.0,
            familiarisation_s: 120.0,
            evaluation_timeout_s: None,
            timer_interval_s: 30.0,
            tick_ms: 1000,
            pseudonyms: ["Kevin", "Stuart", "Bob"].map(String::from).to_vec(),
            compose_delay_s: 0.0,
            seed: 0,
            scheduler: SchedulerConfig::default(),
            generator: GeneratorConfig::default(),
        }
    }
}

impl EngineConfig {
    /// Reads TOML or JSON, chosen by file extension.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: EngineConfig = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => {
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
            }
            _ => toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.scheduler.validate()?;
        if self.pseudonyms.len() < 3 {
            return Err(Error::Config("need at least three pseudonyms".into()));
        }
        let mut p = self.pseudonyms.clone();
        p.sort();
        p.dedup();
        if p.len() != self.pseudonyms.len() {
            return Err(Error::Config("pseudonyms must be distinct".into()));
        }
        if !(self.duration_s > 0.0) || self.familiarisation_s < 0.0 || !(self.match_interval_s > 0.0) {
            return Err(Error::Config("durations must be positive".into()));
        }
        if !(self.timer_interval_s > 0.0) || self.tick_ms == 0 || self.compose_delay_s < 0.0 {
            return Err(Error::Config("timer interval, tick and compose delay must be positive".into()));
        }
        self.conditions()?;
        self.tasks()?;
        Ok(())
    }

    pub fn conditions(&self) -> Result<Vec<(Condition, f64)>> {
        weighted(&self.condition_weights, |k| k.parse::<Condition>())
    }

    pub fn tasks(&self) -> Result<Vec<(TaskDomain, f64)>> {
        weighted(&self.task_weights, |k| k.parse::<TaskDomain>())
    }
}

fn weighted<T>(m: &BTreeMap<String, f64>, parse: impl Fn(&str) -> Result<T>) -> Result<Vec<(T, f64)>> {
    let mut out = Vec::new();
    for (k, &w) in m {
        if !(w >= 0.0) || !w.is_finite() {
            return Err(Error::Config(format!("weight for `{k}` must be finite and nonnegative")));
        }
        if w > 0.0 {
            out.push((parse(k)?, w));
        }
    }
    if out.is_empty() {
        return Err(Error::Config("at least one positive weight required".into()));
    }
    Ok(out)
}

/// Draws a condition and a task from the configured weights.
pub fn draw_assignment(cfg: &EngineConfig, rng: &mut impl Rng) -> Result<(Condition, TaskDomain)> {
    let conds = cfg.conditions()?;
    let tasks = cfg.tasks()?;
    let ci = WeightedIndex::new(conds.iter().map(|c| c.1)).map_err(|e| Error::Config(e.to_string()))?;
    let ti = WeightedIndex::new(tasks.iter().map(|t| t.1)).map_err(|e| Error::Config(e.to_string()))?;
    Ok((conds[ci.sample(rng)].0, tasks[ti.sample(rng)].0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn defaults_validate_and_round_trip_through_toml() {
        let cfg = EngineConfig::default();
        cfg.validate().unwrap();
        let text = toml::to_string(&cfg).unwrap();
        let back: EngineConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn zero_weights_are_never_drawn() {
        let mut cfg = EngineConfig::default();
        for (k, w) in cfg.condition_weights.iter_mut() {
            *w = if k == "H2_C" { 1.0 } else { 0.0 };
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert_eq!(draw_assignment(&cfg, &mut rng).unwrap().0.label(), "H2_C");
        }
    }

    #[test]
    fn bad_configs_are_rejected() {
        let cfg = EngineConfig { pseudonyms: vec!["A".into(), "A".into(), "B".into()], ..Default::default() };
        assert!(cfg.validate().is_err());
        let mut cfg = EngineConfig::default();
        cfg.condition_weights.insert("H4".into(), 1.0);
        assert!(cfg.validate().is_err());
    }
}
