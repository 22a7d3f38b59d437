use rand::seq::index::sample;

use crate::seed;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Floor on the relative-error denominator.
pub const REL_ERROR_FLOOR: f64 = 1e-8;

/// A model whose loss can be probed one flat parameter at a time in 64-bit.
pub trait GradCheck {
    type Batch: ?Sized;

    fn num_params(&self) -> usize;
    fn param(&self, index: usize) -> f64;
    fn set_param(&mut self, index: usize, value: f64);
    fn loss(&self, batch: &Self::Batch) -> f64;
    /// Analytic gradient of [`GradCheck::loss`], flattened in parameter order.
    fn gradient(&self, batch: &Self::Batch) -> Vec<f64>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckFailure {
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub tolerance: f64,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub failures: Vec<GradCheckFailure>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Compares analytic gradients against central differences for up to
/// `max_params` parameters drawn without replacement using `seed`
/// (all parameters when the model is smaller).
pub fn grad_check<M: GradCheck>(
    model: &mut M,
    batch: &M::Batch,
    tolerance: f64,
    max_params: usize,
    seed: u64,
) -> GradCheckReport {
    let analytic = model.gradient(batch);
    let n = model.num_params();
    assert_eq!(analytic.len(), n, "gradient length disagrees with parameter count");
    let mut indices: Vec<usize> = if max_params >= n {
        (0..n).collect()
    } else {
        sample(&mut seed::rng(seed), n, max_params).into_vec()
    };
    indices.sort_unstable();

    let mut report = GradCheckReport {
        checked: indices.len(),
        tolerance,
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        failures: Vec::new(),
    };
    for index in indices {
        let orig = model.param(index);
        model.set_param(index, orig + FD_STEP);
        let up = model.loss(batch);
        model.set_param(index, orig - FD_STEP);
        let down = model.loss(batch);
        model.set_param(index, orig);
        let numeric = (up - down) / (2.0 * FD_STEP);
        let a = analytic[index];
        let rel = relative_error(a, numeric);
        report.max_rel_error = report.max_rel_error.max(rel);
        report.max_abs_error = report.max_abs_error.max((a - numeric).abs());
        if rel >= tolerance || !rel.is_finite() {
            report.failures.push(GradCheckFailure { index, analytic: a, numeric, rel_error: rel });
        }
    }
    report
}
