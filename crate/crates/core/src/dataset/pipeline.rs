use super::{augment_dataset, balance, discard_intro, grayscale_dataset, Dataset, DatasetError};
use crate::seed;

/// Preprocessing switches. Enabled stages always run in the order
/// discard-intro, balance, grayscale, augment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PrepareOptions {
    pub discard_intro: bool,
    pub balance: bool,
    pub grayscale: bool,
    pub augment: bool,
    pub seed: u64,
}

impl PrepareOptions {
    pub fn all(seed: u64) -> Self {
        Self { discard_intro: true, balance: true, grayscale: true, augment: true, seed }
    }

    /// Names of the enabled stages in execution order.
    pub fn stages(&self) -> Vec<&'static str> {
        [
            (self.discard_intro, "discard-intro"),
            (self.balance, "balance"),
            (self.grayscale, "grayscale"),
            (self.augment, "augment"),
        ]
        .into_iter()
        .filter_map(|(on, name)| on.then_some(name))
        .collect()
    }
}

pub fn prepare(ds: Dataset, opts: &PrepareOptions) -> Result<Dataset, DatasetError> {
    let mut ds = ds;
    if opts.discard_intro {
        ds.samples = discard_intro(ds.samples);
    }
    if opts.balance {
        ds = balance(ds, &mut seed::stream(opts.seed, &[1]));
    }
    if opts.grayscale {
        ds = grayscale_dataset(ds)?;
    }
    if opts.augment {
        ds = augment_dataset(&ds, seed::derive(opts.seed, &[2]));
    }
    Ok(ds)
}
