use super::loss::softmax_in_place;
use super::{NnError, Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Linear,
    Softmax,
}

impl Activation {
    pub const fn code(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Linear => 1,
            Activation::Softmax => 2,
        }
    }

    pub const fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Linear),
            2 => Some(Activation::Softmax),
            _ => None,
        }
    }
}

/// Fully connected layer, weights `[in, out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrads<T> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Real> Dense<T> {
    pub fn zeros(inputs: usize, units: usize, activation: Activation) -> Self {
        Self { weights: Tensor::zeros(&[inputs, units]), bias: Tensor::zeros(&[units]), activation }
    }

    pub fn from_parts(weights: Tensor<T>, bias: Tensor<T>, activation: Activation) -> Result<Self, NnError> {
        if weights.shape().len() != 2 || bias.shape() != [weights.shape()[1]] {
            return Err(NnError::Shape(format!("weights {:?} / bias {:?}", weights.shape(), bias.shape())));
        }
        Ok(Self { weights, bias, activation })
    }

    pub fn inputs(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn units(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    /// Pre-activation output for one row.
    pub fn affine_single(&self, x: &[T], out: &mut [T]) {
        let u = self.units();
        out.copy_from_slice(&self.bias.data);
        for (f, &xv) in x.iter().enumerate() {
            if xv == T::zero() {
                continue;
            }
            for (o, &w) in out.iter_mut().zip(&self.weights.data[f * u..(f + 1) * u]) {
                *o += xv * w;
            }
        }
    }

    /// Accumulates weight and bias gradients for one row given the gradient
    /// with respect to the pre-activation output; writes the input gradient
    /// into `grad_x` when given.
    pub fn backward_single(
        &self,
        x: &[T],
        grad_pre: &[T],
        grad_w: &mut [T],
        grad_b: &mut [T],
        grad_x: Option<&mut [T]>,
    ) {
        let u = self.units();
        for (gb, &g) in grad_b.iter_mut().zip(grad_pre) {
            *gb += g;
        }
        for (f, &xv) in x.iter().enumerate() {
            if xv == T::zero() {
                continue;
            }
            for (gw, &g) in grad_w[f * u..(f + 1) * u].iter_mut().zip(grad_pre) {
                *gw += xv * g;
            }
        }
        if let Some(gx) = grad_x {
            for (f, out) in gx.iter_mut().enumerate() {
                let mut acc = T::zero();
                for (&w, &g) in self.weights.data[f * u..(f + 1) * u].iter().zip(grad_pre) {
                    acc += w * g;
                }
                *out = acc;
            }
        }
    }

    fn check(&self, input: &Tensor<T>) -> Result<usize, NnError> {
        match input.shape() {
            [b, f] if *f == self.inputs() => Ok(*b),
            sh => Err(NnError::Shape(format!("dense input {sh:?}, expected [B, {}]", self.inputs()))),
        }
    }

    /// Affine map plus activation over `[B, F]`.
    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let b = self.check(input)?;
        let u = self.units();
        let mut out = vec![T::zero(); b * u];
        for (x, o) in input.data.chunks_exact(self.inputs()).zip(out.chunks_exact_mut(u)) {
            self.affine_single(x, o);
            match self.activation {
                Activation::Relu => o.iter_mut().for_each(|v| *v = v.max(T::zero())),
                Activation::Linear => {}
                Activation::Softmax => softmax_in_place(o),
            }
        }
        Tensor::new(&[b, u], out)
    }

    /// Backward from the gradient with respect to the pre-activation output.
    pub fn backward(&self, input: &Tensor<T>, grad_pre: &Tensor<T>) -> Result<DenseGrads<T>, NnError> {
        let b = self.check(input)?;
        if grad_pre.shape() != [b, self.units()] {
            return Err(NnError::Shape(format!("grad {:?}, expected [{b}, {}]", grad_pre.shape(), self.units())));
        }
        let mut gi = Tensor::zeros(input.shape());
        let mut gw = Tensor::zeros(self.weights.shape());
        let mut gb = Tensor::zeros(self.bias.shape());
        for ((x, g), gx) in input
            .data
            .chunks_exact(self.inputs())
            .zip(grad_pre.data.chunks_exact(self.units()))
            .zip(gi.data.chunks_exact_mut(self.inputs()))
        {
            self.backward_single(x, g, &mut gw.data, &mut gb.data, Some(gx));
        }
        Ok(DenseGrads { input: gi, weights: gw, bias: gb })
    }
}
