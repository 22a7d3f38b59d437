//! Episode recording with an arbitrary driving policy.

use crate::dataset::{Dataset, Sample};
use crate::expert::ScriptedExpert;
use crate::model::MixedModel;
use crate::nn::NnError;
use crate::par;
use crate::sim::{ContinuousAction, InputMode, SimConfig, SimError, SimState, OBS_SIZE};

/// Anything that can drive the car from the full simulator state.
pub trait Policy: Sync {
    fn act(&self, state: &SimState) -> ContinuousAction;
}

impl Policy for ScriptedExpert {
    fn act(&self, state: &SimState) -> ContinuousAction {
        ScriptedExpert::act(self, state)
    }
}

/// Drives with a classifier: render, read sensors, pick the most likely
/// label and apply its canonical command.
#[derive(Debug, Clone, Copy)]
pub struct ModelPolicy<'a> {
    model: &'a MixedModel<f32>,
}

impl<'a> ModelPolicy<'a> {
    pub fn new(model: &'a MixedModel<f32>) -> Result<Self, NnError> {
        if model.arch.input_size != OBS_SIZE || model.arch.in_channels != model.mode.channels() {
            return Err(NnError::Shape(format!(
                "model expects {0}x{0}x{1} input, observations are {2}x{2}",
                model.arch.input_size, model.arch.in_channels, OBS_SIZE
            )));
        }
        Ok(Self { model })
    }
}

impl Policy for ModelPolicy<'_> {
    fn act(&self, state: &SimState) -> ContinuousAction {
        let obs = state.observe(self.model.mode);
        let label = self.model.predict_label(&obs, &state.sensors()).expect("input shape checked at construction");
        crate::dataset::label_to_action(label)
    }
}

/// Runs `policy` to completion on the track for `seed`, calling `on_step`
/// with each state and the command applied to it. Returns the final state.
pub fn run_episode<P: Policy + ?Sized>(
    policy: &P,
    seed: u64,
    config: SimConfig,
    mut on_step: impl FnMut(&SimState, &ContinuousAction),
) -> Result<SimState, SimError> {
    let mut state = SimState::new_episode(seed, config)?;
    while !state.done {
        let action = policy.act(&state);
        on_step(&state, &action);
        state = state.step(&action)?;
    }
    Ok(state)
}

/// Records `count` episodes on seeds `base_seed + i`. Sample `k` of an
/// episode holds the frame and sensors seen at step `k` and the command
/// applied on that step.
pub fn record_episodes<P: Policy + ?Sized>(
    policy: &P,
    count: usize,
    base_seed: u64,
    config: SimConfig,
) -> Result<Dataset, SimError> {
    let episodes = par::map_range(count, |i| {
        let seed = base_seed.wrapping_add(i as u64);
        let mut samples = Vec::new();
        run_episode(policy, seed, config, |state, action| {
            samples.push(Sample::new(state.observe(InputMode::Rgb), state.sensors(), *action, state.step_index));
        })?;
        Ok((seed, samples))
    });
    let mut ds = Dataset::new(InputMode::Rgb);
    for (i, episode) in episodes.into_iter().enumerate() {
        let (seed, samples) = episode?;
        ds.samples.extend(samples);
        ds.provenance.push((i as u32, seed));
    }
    Ok(ds)
}
