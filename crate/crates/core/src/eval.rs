//! Closed-loop evaluation over seeded episodes.

use std::fmt::Write as _;

use crate::model::MixedModel;
use crate::par;
use crate::record::{run_episode, ModelPolicy, Policy};
use crate::sim::{SimConfig, SimError};

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub seeds: Vec<u64>,
    pub rewards: Vec<f64>,
    pub steps: Vec<u32>,
    pub average: f64,
}

impl EvalReport {
    /// One `episode,seed,steps,reward` line per episode, then `average,<value>`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, ((seed, steps), reward)) in self.seeds.iter().zip(&self.steps).zip(&self.rewards).enumerate() {
            writeln!(out, "{i},{seed},{steps},{reward:.6}").unwrap();
        }
        writeln!(out, "average,{:.6}", self.average).unwrap();
        out
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("at least one episode is required")]
    NoEpisodes,
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Model(#[from] crate::nn::NnError),
}

/// Runs episode `i` on the track for `base_seed + i` until it ends and sums
/// its rewards.
pub fn evaluate_policy<P: Policy + ?Sized>(
    policy: &P,
    episodes: usize,
    base_seed: u64,
    config: SimConfig,
) -> Result<EvalReport, EvalError> {
    if episodes == 0 {
        return Err(EvalError::NoEpisodes);
    }
    let seeds: Vec<u64> = (0..episodes).map(|i| base_seed.wrapping_add(i as u64)).collect();
    let results = par::map_slice(&seeds, |_, &seed| run_episode(policy, seed, config, |_, _| {}));
    let mut rewards = Vec::with_capacity(episodes);
    let mut steps = Vec::with_capacity(episodes);
    for r in results {
        let state = r?;
        rewards.push(state.total_reward);
        steps.push(state.step_index);
    }
    let average = rewards.iter().sum::<f64>() / episodes as f64;
    Ok(EvalReport { seeds, rewards, steps, average })
}

pub fn evaluate(
    model: &MixedModel<f32>,
    episodes: usize,
    base_seed: u64,
    config: SimConfig,
) -> Result<EvalReport, EvalError> {
    evaluate_policy(&ModelPolicy::new(model)?, episodes, base_seed, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_mixed, ModelConfig};
    use crate::sim::InputMode;

    fn short() -> SimConfig {
        SimConfig { max_steps: 80, ..SimConfig::default() }
    }

    #[test]
    fn single_episode_average() {
        let m = build_mixed(&ModelConfig::new(InputMode::Gray, 1));
        let r = evaluate(&m, 1, 40, short()).unwrap();
        assert_eq!(r.rewards.len(), 1);
        assert_eq!(r.average, r.rewards[0]);
        assert_eq!(r.seeds, vec![40]);
    }

    #[test]
    fn average_is_mean_and_deterministic() {
        let m = build_mixed(&ModelConfig::new(InputMode::Rgb, 2));
        let a = evaluate(&m, 3, 7, short()).unwrap();
        assert_eq!(a.average, a.rewards.iter().sum::<f64>() / 3.0);
        assert_eq!(a.seeds, vec![7, 8, 9]);
        assert_eq!(a.to_text(), evaluate(&m, 3, 7, short()).unwrap().to_text());
        assert_eq!(a.to_text().lines().count(), 4);
        assert!(a.to_text().ends_with(&format!("average,{:.6}\n", a.average)));
    }

    #[test]
    fn zero_episodes_rejected() {
        let m = build_mixed(&ModelConfig::new(InputMode::Gray, 1));
        assert!(matches!(evaluate(&m, 0, 0, short()), Err(EvalError::NoEpisodes)));
    }
}
