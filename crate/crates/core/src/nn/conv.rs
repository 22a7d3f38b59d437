use super::{NnError, Real, Tensor};

/// Valid (unpadded) strided 2D cross-correlation.
///
/// Filters are laid out `[kh, kw, cin, cout]` so the innermost loop of both
/// passes runs contiguously over output channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T> {
    pub filters: Tensor<T>,
    pub bias: Tensor<T>,
    pub stride: usize,
}

/// Gradients of a batched backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads<T> {
    pub input: Tensor<T>,
    pub filters: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Real> Conv2d<T> {
    pub fn zeros(kh: usize, kw: usize, cin: usize, cout: usize, stride: usize) -> Self {
        assert!(stride >= 1, "stride must be at least 1");
        Self { filters: Tensor::zeros(&[kh, kw, cin, cout]), bias: Tensor::zeros(&[cout]), stride }
    }

    pub fn from_parts(filters: Tensor<T>, bias: Tensor<T>, stride: usize) -> Result<Self, NnError> {
        if filters.shape().len() != 4 || bias.shape() != [filters.shape()[3]] || stride == 0 {
            return Err(NnError::Shape(format!(
                "filters {:?} / bias {:?} / stride {stride}",
                filters.shape(),
                bias.shape()
            )));
        }
        Ok(Self { filters, bias, stride })
    }

    pub fn kernel(&self) -> (usize, usize) {
        (self.filters.shape()[0], self.filters.shape()[1])
    }

    pub fn in_channels(&self) -> usize {
        self.filters.shape()[2]
    }

    pub fn out_channels(&self) -> usize {
        self.filters.shape()[3]
    }

    pub fn param_count(&self) -> usize {
        self.filters.len() + self.bias.len()
    }

    /// Output spatial size for an `h × w` input, `None` if the kernel does not fit.
    pub fn output_hw(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let (kh, kw) = self.kernel();
        (h >= kh && w >= kw).then(|| ((h - kh) / self.stride + 1, (w - kw) / self.stride + 1))
    }

    /// One image `h × w × cin` into `out` (`oh × ow × cout`), overwriting it.
    pub fn forward_single(&self, input: &[T], h: usize, w: usize, out: &mut [T]) {
        let (kh, kw) = self.kernel();
        let (cin, cout, s) = (self.in_channels(), self.out_channels(), self.stride);
        let (oh, ow) = self.output_hw(h, w).expect("kernel larger than input");
        debug_assert_eq!(input.len(), h * w * cin);
        debug_assert_eq!(out.len(), oh * ow * cout);
        let filters = &self.filters.data;
        for oy in 0..oh {
            for ox in 0..ow {
                let o = &mut out[(oy * ow + ox) * cout..][..cout];
                o.copy_from_slice(&self.bias.data);
                for ky in 0..kh {
                    let row = (oy * s + ky) * w;
                    for kx in 0..kw {
                        let px = &input[(row + ox * s + kx) * cin..][..cin];
                        let wbase = (ky * kw + kx) * cin * cout;
                        for (ci, &x) in px.iter().enumerate() {
                            if x == T::zero() {
                                continue;
                            }
                            let wrow = &filters[wbase + ci * cout..][..cout];
                            for (acc, &wv) in o.iter_mut().zip(wrow) {
                                *acc += x * wv;
                            }
                        }
                    }
                }
            }
        }
    }

    /// Accumulates gradients for one image. `grad_input`, when given, is
    /// accumulated into as well; pass `None` for the first layer.
    pub fn backward_single(
        &self,
        input: &[T],
        h: usize,
        w: usize,
        grad_out: &[T],
        grad_filters: &mut [T],
        grad_bias: &mut [T],
        mut grad_input: Option<&mut [T]>,
    ) {
        let (kh, kw) = self.kernel();
        let (cin, cout, s) = (self.in_channels(), self.out_channels(), self.stride);
        let (oh, ow) = self.output_hw(h, w).expect("kernel larger than input");
        let filters = &self.filters.data;
        for oy in 0..oh {
            for ox in 0..ow {
                let g = &grad_out[(oy * ow + ox) * cout..][..cout];
                for (gb, &gv) in grad_bias.iter_mut().zip(g) {
                    *gb += gv;
                }
                for ky in 0..kh {
                    let row = (oy * s + ky) * w;
                    for kx in 0..kw {
                        let pix = (row + ox * s + kx) * cin;
                        let wbase = (ky * kw + kx) * cin * cout;
                        for ci in 0..cin {
                            let x = input[pix + ci];
                            let off = wbase + ci * cout;
                            if x != T::zero() {
                                for (gw, &gv) in grad_filters[off..off + cout].iter_mut().zip(g) {
                                    *gw += x * gv;
                                }
                            }
                            if let Some(gi) = grad_input.as_deref_mut() {
                                let mut acc = T::zero();
                                for (&wv, &gv) in filters[off..off + cout].iter().zip(g) {
                                    acc += wv * gv;
                                }
                                gi[pix + ci] += acc;
                            }
                        }
                    }
                }
            }
        }
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<(usize, usize, usize, usize, usize), NnError> {
        let sh = input.shape();
        if sh.len() != 4 {
            return Err(NnError::Shape(format!("conv input must be [B,H,W,C], got {sh:?}")));
        }
        let (b, h, w, c) = (sh[0], sh[1], sh[2], sh[3]);
        if c != self.in_channels() {
            return Err(NnError::Shape(format!("input has {c} channels, filters expect {}", self.in_channels())));
        }
        let (oh, ow) = self
            .output_hw(h, w)
            .ok_or_else(|| NnError::Shape(format!("{h}x{w} input smaller than kernel {:?}", self.kernel())))?;
        Ok((b, h, w, oh, ow))
    }

    /// Batched forward over `[B, H, W, Cin]`.
    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let (b, h, w, oh, ow) = self.check_input(input)?;
        let cout = self.out_channels();
        let in_len = h * w * self.in_channels();
        let out_len = oh * ow * cout;
        let mut out = vec![T::zero(); b * out_len];
        for (x, o) in input.data.chunks_exact(in_len).zip(out.chunks_exact_mut(out_len)) {
            self.forward_single(x, h, w, o);
        }
        Tensor::new(&[b, oh, ow, cout], out)
    }

    pub fn backward(&self, input: &Tensor<T>, grad_out: &Tensor<T>) -> Result<ConvGrads<T>, NnError> {
        let (b, h, w, oh, ow) = self.check_input(input)?;
        let cout = self.out_channels();
        if grad_out.shape() != [b, oh, ow, cout] {
            return Err(NnError::Shape(format!(
                "grad_out {:?}, expected {:?}",
                grad_out.shape(),
                [b, oh, ow, cout]
            )));
        }
        let in_len = h * w * self.in_channels();
        let mut grad_input = Tensor::zeros(input.shape());
        let mut grad_filters = Tensor::zeros(self.filters.shape());
        let mut grad_bias = Tensor::zeros(self.bias.shape());
        for ((x, g), gi) in input
            .data
            .chunks_exact(in_len)
            .zip(grad_out.data.chunks_exact(oh * ow * cout))
            .zip(grad_input.data.chunks_exact_mut(in_len))
        {
            self.backward_single(x, h, w, g, &mut grad_filters.data, &mut grad_bias.data, Some(gi));
        }
        Ok(ConvGrads { input: grad_input, filters: grad_filters, bias: grad_bias })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use rand::Rng;

    fn random(shape: &[usize], rng: &mut impl Rng) -> Tensor<f64> {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Direct formula, written independently of the optimized kernel.
    fn reference_forward(conv: &Conv2d<f64>, x: &Tensor<f64>) -> Vec<f64> {
        let [b, h, w, cin] = x.shape().try_into().unwrap();
        let [kh, kw, _, cout] = conv.filters.shape().try_into().unwrap();
        let s = conv.stride;
        let (oh, ow) = ((h - kh) / s + 1, (w - kw) / s + 1);
        let mut out = Vec::new();
        for n in 0..b {
            for oy in 0..oh {
                for ox in 0..ow {
                    for co in 0..cout {
                        let mut acc = conv.bias.data[co];
                        for ky in 0..kh {
                            for kx in 0..kw {
                                for ci in 0..cin {
                                    let xi = ((n * h + oy * s + ky) * w + ox * s + kx) * cin + ci;
                                    let wi = ((ky * kw + kx) * cin + ci) * cout + co;
                                    acc += x.data[xi] * conv.filters.data[wi];
                                }
                            }
                        }
                        out.push(acc);
                    }
                }
            }
        }
        out
    }

    #[test]
    fn table_shapes() {
        let c1 = Conv2d::<f32>::zeros(5, 5, 1, 16, 4);
        assert_eq!(c1.output_hw(96, 96), Some((23, 23)));
        let c2 = Conv2d::<f32>::zeros(3, 3, 16, 32, 2);
        assert_eq!(c2.output_hw(23, 23), Some((11, 11)));
        let out = c1.forward(&Tensor::zeros(&[1, 96, 96, 1])).unwrap();
        assert_eq!(out.shape(), &[1, 23, 23, 16]);
        let out = c2.forward(&out).unwrap();
        assert_eq!(out.shape(), &[1, 11, 11, 32]);
        assert!(out.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_channel_mismatch() {
        let c = Conv2d::<f32>::zeros(3, 3, 2, 4, 1);
        assert!(c.forward(&Tensor::zeros(&[1, 8, 8, 3])).is_err());
        assert!(c.forward(&Tensor::zeros(&[1, 2, 8, 2])).is_err());
    }

    #[test]
    fn matches_reference_forward() {
        let mut rng = seed::rng(11);
        for (h, k, cin, cout, s) in [(9, 3, 2, 3, 2), (8, 5, 1, 4, 1), (12, 5, 3, 2, 4)] {
            let conv = Conv2d::from_parts(random(&[k, k, cin, cout], &mut rng), random(&[cout], &mut rng), s).unwrap();
            let x = random(&[2, h, h, cin], &mut rng);
            let out = conv.forward(&x).unwrap();
            for (a, b) in out.data.iter().zip(reference_forward(&conv, &x)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_grad_out_gives_zero_grads() {
        let mut rng = seed::rng(3);
        let conv = Conv2d::from_parts(random(&[2, 2, 1, 1], &mut rng), random(&[1], &mut rng), 2).unwrap();
        let x = random(&[1, 4, 4, 1], &mut rng);
        let g = conv.backward(&x, &Tensor::zeros(&[1, 2, 2, 1])).unwrap();
        assert!(g.input.data.iter().chain(&g.filters.data).chain(&g.bias.data).all(|&v| v == 0.0));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = seed::rng(5);
        let mut conv = Conv2d::from_parts(random(&[2, 2, 1, 1], &mut rng), random(&[1], &mut rng), 2).unwrap();
        let mut x = random(&[1, 4, 4, 1], &mut rng);
        let r = random(&[1, 2, 2, 1], &mut rng);
        // Scalar objective L = <forward(x), r>, so dL/dout = r.
        let objective = |c: &Conv2d<f64>, x: &Tensor<f64>| -> f64 {
            c.forward(x).unwrap().data.iter().zip(&r.data).map(|(a, b)| a * b).sum()
        };
        let grads = conv.backward(&x, &r).unwrap();
        let h = 1e-5;
        for i in 0..x.len() {
            let orig = x.data[i];
            x.data[i] = orig + h;
            let up = objective(&conv, &x);
            x.data[i] = orig - h;
            let down = objective(&conv, &x);
            x.data[i] = orig;
            assert!(((up - down) / (2.0 * h) - grads.input.data[i]).abs() < 1e-6);
        }
        for i in 0..conv.filters.len() {
            let orig = conv.filters.data[i];
            conv.filters.data[i] = orig + h;
            let up = objective(&conv, &x);
            conv.filters.data[i] = orig - h;
            let down = objective(&conv, &x);
            conv.filters.data[i] = orig;
            assert!(((up - down) / (2.0 * h) - grads.filters.data[i]).abs() < 1e-6);
        }
        // Bias gradient is the per-channel sum of grad_out.
        let sum: f64 = r.data.iter().sum();
        assert!((grads.bias.data[0] - sum).abs() < 1e-12);
        let orig = conv.bias.data[0];
        conv.bias.data[0] = orig + h;
        let up = objective(&conv, &x);
        conv.bias.data[0] = orig - h;
        let down = objective(&conv, &x);
        assert!(((up - down) / (2.0 * h) - sum).abs() < 1e-6);
    }

    #[test]
    fn bias_grad_is_channel_sum_multi_channel() {
        let mut rng = seed::rng(8);
        let conv = Conv2d::from_parts(random(&[3, 3, 2, 3], &mut rng), random(&[3], &mut rng), 2).unwrap();
        let x = random(&[2, 9, 9, 2], &mut rng);
        let g = random(&[2, 4, 4, 3], &mut rng);
        let grads = conv.backward(&x, &g).unwrap();
        for co in 0..3 {
            let s: f64 = g.data.iter().skip(co).step_by(3).sum();
            assert!((grads.bias.data[co] - s).abs() < 1e-12);
        }
    }
}
