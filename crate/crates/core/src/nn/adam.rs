use super::{NnError, Real};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-5, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// First and second moment estimates, one buffer per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub t: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn new(config: AdamConfig, sizes: &[usize]) -> Self {
        Self {
            config,
            t: 0,
            m: sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
            v: sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
        }
    }
}

/// A named parameter tensor paired with its gradient.
pub struct Param<'a, T> {
    pub name: &'static str,
    pub value: &'a mut [T],
    pub grad: &'a [T],
}

/// One bias-corrected Adam update. Gradients are checked for finiteness
/// before anything is written, so a failed step leaves the state untouched.
pub fn adam_step<T: Real>(params: &mut [Param<'_, T>], state: &mut AdamState<T>) -> Result<(), NnError> {
    if params.len() != state.m.len() {
        return Err(NnError::Shape(format!("{} parameters, optimizer tracks {}", params.len(), state.m.len())));
    }
    for (p, m) in params.iter().zip(&state.m) {
        if p.value.len() != p.grad.len() || p.value.len() != m.len() {
            return Err(NnError::Shape(format!("parameter {} size mismatch", p.name)));
        }
        if p.grad.iter().any(|g| !g.is_finite()) {
            return Err(NnError::NonFiniteGradient(p.name.to_string()));
        }
    }
    state.t += 1;
    let c = state.config;
    let t = state.t as i32;
    let bc1 = 1.0 - c.beta1.powi(t);
    let bc2 = 1.0 - c.beta2.powi(t);
    let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
    let (one_b1, one_b2) = (T::of(1.0 - c.beta1), T::of(1.0 - c.beta2));
    let (inv_bc1, inv_bc2) = (T::of(1.0 / bc1), T::of(1.0 / bc2));
    let (lr, eps) = (T::of(c.lr), T::of(c.epsilon));
    for ((p, m), v) in params.iter_mut().zip(&mut state.m).zip(&mut state.v) {
        for (((w, &g), mi), vi) in p.value.iter_mut().zip(p.grad).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = b1 * *mi + one_b1 * g;
            *vi = b2 * *vi + one_b2 * g * g;
            let m_hat = *mi * inv_bc1;
            let v_hat = *vi * inv_bc2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_identity() {
        let mut w = vec![0.5f32, -1.25, 3.0];
        let before = w.clone();
        let g = vec![0.0f32; 3];
        let mut st = AdamState::new(AdamConfig::with_lr(1e-3), &[3]);
        for _ in 0..5 {
            adam_step(&mut [Param { name: "w", value: &mut w, grad: &g }], &mut st).unwrap();
        }
        assert_eq!(w, before);
        assert_eq!(st.t, 5);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut w = vec![2.0f64];
        let mut st = AdamState::new(AdamConfig::default(), &[1]);
        adam_step(&mut [Param { name: "w", value: &mut w, grad: &[1.0] }], &mut st).unwrap();
        // m̂ = 1, v̂ = 1 after bias correction, so the step is lr / (1 + eps).
        let expected = 2.0 - 1e-5 / (1.0 + 1e-8);
        assert!((w[0] - expected).abs() < 1e-15);
        assert!((2.0 - w[0] - 1e-5).abs() < 1e-12);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut a = vec![1.0f32];
        let mut b = vec![1.0f32];
        let mut st = AdamState::new(AdamConfig::default(), &[1, 1]);
        let err = adam_step(
            &mut [Param { name: "a", value: &mut a, grad: &[0.1] }, Param { name: "b", value: &mut b, grad: &[f32::NAN] }],
            &mut st,
        )
        .unwrap_err();
        assert_eq!(err, NnError::NonFiniteGradient("b".into()));
        assert_eq!((a[0], b[0], st.t), (1.0, 1.0, 0));
    }

    #[test]
    fn deterministic() {
        let run = || {
            let mut w = vec![0.3f32, -0.7];
            let mut st = AdamState::new(AdamConfig::with_lr(1e-2), &[2]);
            for k in 0..50 {
                let g = [w[0] * 2.0 + k as f32 * 0.01, w[1] - 1.0];
                adam_step(&mut [Param { name: "w", value: &mut w, grad: &g }], &mut st).unwrap();
            }
            w
        };
        assert_eq!(run().iter().map(|v| v.to_bits()).collect::<Vec<_>>(), run().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn minimizes_quadratic() {
        let mut w = vec![5.0f64];
        let mut st = AdamState::new(AdamConfig::with_lr(0.1), &[1]);
        for _ in 0..500 {
            let g = [2.0 * (w[0] - 1.0)];
            adam_step(&mut [Param { name: "w", value: &mut w, grad: &g }], &mut st).unwrap();
        }
        assert!((w[0] - 1.0).abs() < 1e-2);
    }
}
