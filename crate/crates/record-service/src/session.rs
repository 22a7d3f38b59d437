//! Episode bookkeeping for one connected client, independent of the transport.

use std::path::{Path, PathBuf};

use cril_core::dataset::{write_dataset, Dataset, Sample};
use cril_core::sim::{InputMode, SimConfig, SimState};

use crate::protocol::{keymask_to_action, FrameMessage};

struct Running {
    seed: u64,
    state: SimState,
    samples: Vec<Sample>,
}

/// One client's recording state: at most one running episode and at most
/// one finished episode waiting to be saved.
pub struct Session {
    config: SimConfig,
    running: Option<Running>,
    finished: Option<(u64, Dataset)>,
}

fn frame_of(state: &SimState) -> FrameMessage {
    FrameMessage {
        frame_index: state.step_index,
        reward: state.last_reward as f32,
        done: state.done,
        sensors: state.sensors(),
        pixels: state.observe(InputMode::Rgb).pixels,
    }
}

impl Session {
    pub fn new(config: SimConfig) -> Self {
        Self { config, running: None, finished: None }
    }

    pub fn is_running(&self) -> bool {
        self.running.is_some()
    }

    /// Begins an episode on the track for `seed` and returns frame 0.
    pub fn start(&mut self, seed: u64) -> Result<FrameMessage, String> {
        if self.running.is_some() {
            return Err("an episode is already running".into());
        }
        let state = SimState::new_episode(seed, self.config).map_err(|e| e.to_string())?;
        let frame = frame_of(&state);
        self.finished = None;
        self.running = Some(Running { seed, state, samples: Vec::new() });
        Ok(frame)
    }

    /// Records the current frame with the command `keymask` maps to, applies
    /// that command and returns the next frame. The episode moves to the
    /// finished slot once the simulator reports it done.
    pub fn tick(&mut self, keymask: u8) -> Option<FrameMessage> {
        let run = self.running.as_mut()?;
        let action = keymask_to_action(keymask);
        let s = &run.state;
        run.samples.push(Sample::new(s.observe(InputMode::Rgb), s.sensors(), action, s.step_index));
        run.state = run.state.step(&action).expect("keymask actions are valid and the episode is live");
        let frame = frame_of(&run.state);
        if run.state.done {
            self.finish();
        }
        Some(frame)
    }

    /// Ends the running episode early, keeping what was recorded.
    pub fn stop(&mut self) -> Result<usize, String> {
        let n = self.running.as_ref().ok_or("no episode is running")?.samples.len();
        self.finish();
        Ok(n)
    }

    fn finish(&mut self) {
        if let Some(run) = self.running.take() {
            let mut ds = Dataset::new(InputMode::Rgb);
            ds.samples = run.samples;
            ds.provenance.push((0, run.seed));
            self.finished = Some((run.seed, ds));
        }
    }

    /// Writes the finished episode to `dir/episode_<seed>_<n>.cril`.
    pub fn save(&mut self, dir: &Path, n: u32) -> Result<PathBuf, String> {
        if self.running.is_some() {
            return Err("stop the running episode before saving".into());
        }
        let (seed, ds) = self.finished.as_ref().ok_or("no finished episode to save")?;
        let path = dir.join(format!("episode_{seed}_{n}.cril"));
        write_dataset(ds, &path).map_err(|e| format!("{}: {e}", path.display()))?;
        self.finished = None;
        Ok(path)
    }
}
