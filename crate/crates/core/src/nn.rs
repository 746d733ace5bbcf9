//! Differentiable primitives: dilated 3x3 convolution, ReLU, channel
//! concatenation, the MSE objective and He-uniform initialization.
//!
//! Every forward op has a matching analytic backward op. Convolution is
//! cross-correlation (no kernel flip) with zero padding:
//!
//! ```text
//! out[n,o,y,x] = bias[o] + Σ_{c,i,j} in[n, c, y + l*i - p, x + l*j - p] * w[o,c,i,j]
//! ```
//!
//! where `l` is the dilation, `p` the padding and `i, j ∈ {0,1,2}`. With
//! `p == l` the spatial size is preserved.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{shape_err, Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Spatial size of every convolution kernel.
pub const KERNEL: usize = 3;
const TAPS: usize = KERNEL * KERNEL;

/// Weights and geometry of one 3x3 dilated convolution.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvParams<T> {
    /// `(c_out, c_in, 3, 3)`.
    pub weight: Tensor<T>,
    pub bias: Vec<T>,
    pub dilation: usize,
    pub padding: usize,
}

/// Gradients produced by [`dilated_conv2d_backward`].
#[derive(Clone, Debug, PartialEq)]
pub struct ConvGrads<T> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> ConvParams<T> {
    pub fn new(weight: Tensor<T>, bias: Vec<T>, dilation: usize, padding: usize) -> Result<Self> {
        let [c_out, _, kh, kw] = weight.dims();
        if kh != KERNEL || kw != KERNEL {
            return Err(shape_err!("kernel must be 3x3, got {kh}x{kw}"));
        }
        if bias.len() != c_out {
            return Err(shape_err!("bias length {} for {c_out} output channels", bias.len()));
        }
        if dilation == 0 {
            return Err(Error::Argument("dilation must be >= 1".into()));
        }
        Ok(ConvParams { weight, bias, dilation, padding })
    }

    /// All-zero "same" convolution (`padding == dilation`).
    pub fn zeros(c_in: usize, c_out: usize, dilation: usize) -> Result<Self> {
        Self::new(Tensor::zeros([c_out, c_in, KERNEL, KERNEL])?, vec![T::zero(); c_out], dilation, dilation)
    }

    pub fn in_channels(&self) -> usize {
        self.weight.dims()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.dims()[0]
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    /// Output spatial size for an `h x w` input.
    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let extent = 2 * self.dilation + 1;
        let (ph, pw) = (h + 2 * self.padding, w + 2 * self.padding);
        if ph < extent || pw < extent {
            return Err(shape_err!(
                "padded input {ph}x{pw} smaller than dilated kernel extent {extent}"
            ));
        }
        Ok((ph + 1 - extent, pw + 1 - extent))
    }

    pub fn cast<U: Scalar>(&self) -> ConvParams<U> {
        ConvParams {
            weight: self.weight.cast(),
            bias: self.bias.iter().map(|&b| U::from_f64(b.as_f64())).collect(),
            dilation: self.dilation,
            padding: self.padding,
        }
    }
}

struct Geometry {
    c_in: usize,
    h: usize,
    w: usize,
    ho: usize,
    wo: usize,
    dilation: usize,
    padding: usize,
}

impl Geometry {
    fn new<T: Scalar>(input: &Tensor<T>, p: &ConvParams<T>) -> Result<Self> {
        let [_, c, h, w] = input.dims();
        if c != p.in_channels() {
            return Err(shape_err!("input has {c} channels, kernel expects {}", p.in_channels()));
        }
        let (ho, wo) = p.output_hw(h, w)?;
        Ok(Geometry { c_in: c, h, w, ho, wo, dilation: p.dilation, padding: p.padding })
    }

    fn rows(&self) -> usize {
        self.c_in * TAPS
    }

    fn cols(&self) -> usize {
        self.ho * self.wo
    }

    /// Shift of tap `k` relative to the output coordinate.
    fn shift(&self, k: usize) -> isize {
        (k * self.dilation) as isize - self.padding as isize
    }

    /// Output columns `x` whose source `x + dx` is inside `0..w`.
    fn valid_range(&self, dx: isize, out: usize, len: usize) -> (usize, usize) {
        let lo = (-dx).max(0) as usize;
        let hi = (len as isize - dx).clamp(0, out as isize) as usize;
        (lo.min(hi), hi)
    }

    /// Unfolds one sample into a `(c_in * 9) x (ho * wo)` patch matrix.
    fn im2col<T: Scalar>(&self, sample: &[T], cols: &mut [T]) {
        let n_cols = self.cols();
        for c in 0..self.c_in {
            let plane = &sample[c * self.h * self.w..(c + 1) * self.h * self.w];
            for i in 0..KERNEL {
                let dy = self.shift(i);
                for j in 0..KERNEL {
                    let dx = self.shift(j);
                    let row = (c * TAPS + i * KERNEL + j) * n_cols;
                    let dst = &mut cols[row..row + n_cols];
                    let (x0, x1) = self.valid_range(dx, self.wo, self.w);
                    for y in 0..self.ho {
                        let line = &mut dst[y * self.wo..(y + 1) * self.wo];
                        let sy = y as isize + dy;
                        if sy < 0 || sy >= self.h as isize || x0 == x1 {
                            line.fill(T::zero());
                            continue;
                        }
                        let src = &plane[sy as usize * self.w..(sy as usize + 1) * self.w];
                        line[..x0].fill(T::zero());
                        let s0 = (x0 as isize + dx) as usize;
                        line[x0..x1].copy_from_slice(&src[s0..s0 + (x1 - x0)]);
                        line[x1..].fill(T::zero());
                    }
                }
            }
        }
    }

    /// Adjoint of [`Geometry::im2col`]: scatters patch gradients back onto one sample.
    fn col2im<T: Scalar>(&self, cols: &[T], sample: &mut [T]) {
        let n_cols = self.cols();
        for c in 0..self.c_in {
            let plane = &mut sample[c * self.h * self.w..(c + 1) * self.h * self.w];
            for i in 0..KERNEL {
                let dy = self.shift(i);
                for j in 0..KERNEL {
                    let dx = self.shift(j);
                    let row = (c * TAPS + i * KERNEL + j) * n_cols;
                    let src = &cols[row..row + n_cols];
                    let (x0, x1) = self.valid_range(dx, self.wo, self.w);
                    if x0 == x1 {
                        continue;
                    }
                    for y in 0..self.ho {
                        let sy = y as isize + dy;
                        if sy < 0 || sy >= self.h as isize {
                            continue;
                        }
                        let s0 = sy as usize * self.w + (x0 as isize + dx) as usize;
                        let dst = &mut plane[s0..s0 + (x1 - x0)];
                        let line = &src[y * self.wo + x0..y * self.wo + x1];
                        dst.iter_mut().zip(line).for_each(|(d, &g)| *d = *d + g);
                    }
                }
            }
        }
    }
}

pub fn dilated_conv2d_forward<T: Scalar>(input: &Tensor<T>, p: &ConvParams<T>) -> Result<Tensor<T>> {
    let g = Geometry::new(input, p)?;
    let c_out = p.out_channels();
    let mut out = Tensor::zeros([input.batch(), c_out, g.ho, g.wo])?;
    let (rows, cols) = (g.rows(), g.cols());
    out.data_mut().par_chunks_mut(c_out * cols).enumerate().for_each(|(n, out_n)| {
        let mut patches = vec![T::zero(); rows * cols];
        g.im2col(input.sample(n), &mut patches);
        for (o, line) in out_n.chunks_mut(cols).enumerate() {
            line.fill(p.bias[o]);
        }
        T::gemm(
            c_out,
            rows,
            cols,
            T::one(),
            (p.weight.data(), rows as isize, 1),
            (&patches, cols as isize, 1),
            T::one(),
            (out_n, cols as isize, 1),
        );
    });
    Ok(out)
}

pub fn dilated_conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    p: &ConvParams<T>,
    grad_out: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    let g = Geometry::new(input, p)?;
    let c_out = p.out_channels();
    let expected = [input.batch(), c_out, g.ho, g.wo];
    if grad_out.dims() != expected {
        return Err(shape_err!("grad_out dims {:?}, forward output is {expected:?}", grad_out.dims()));
    }
    let (rows, cols) = (g.rows(), g.cols());
    let chw = input.channels() * input.height() * input.width();

    let per_sample: Vec<(Vec<T>, Vec<T>, Vec<T>)> = (0..input.batch())
        .into_par_iter()
        .map(|n| {
            let go = grad_out.sample(n);
            let mut patches = vec![T::zero(); rows * cols];
            g.im2col(input.sample(n), &mut patches);

            let mut gw = vec![T::zero(); c_out * rows];
            T::gemm(
                c_out,
                cols,
                rows,
                T::one(),
                (go, cols as isize, 1),
                (&patches, 1, cols as isize),
                T::zero(),
                (&mut gw, rows as isize, 1),
            );

            // Reuse the patch buffer for the patch-space gradient.
            T::gemm(
                rows,
                c_out,
                cols,
                T::one(),
                (p.weight.data(), 1, rows as isize),
                (go, cols as isize, 1),
                T::zero(),
                (&mut patches, cols as isize, 1),
            );
            let mut gin = vec![T::zero(); chw];
            g.col2im(&patches, &mut gin);

            let gb = go.chunks(cols).map(|line| line.iter().copied().sum()).collect();
            (gin, gw, gb)
        })
        .collect();

    let mut grad_input = Vec::with_capacity(input.len());
    let mut grad_weight = vec![T::zero(); c_out * rows];
    let mut grad_bias = vec![T::zero(); c_out];
    for (gin, gw, gb) in per_sample {
        grad_input.extend_from_slice(&gin);
        grad_weight.iter_mut().zip(&gw).for_each(|(a, &b)| *a = *a + b);
        grad_bias.iter_mut().zip(&gb).for_each(|(a, &b)| *a = *a + b);
    }
    Ok(ConvGrads {
        input: Tensor::from_vec(input.dims(), grad_input)?,
        weight: Tensor::from_vec(p.weight.dims(), grad_weight)?,
        bias: grad_bias,
    })
}

pub fn relu_forward<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| v.max(T::zero()))
}

/// Passes `grad_out` where `x > 0`; the subgradient at exactly 0 is 0.
///
/// `x` may be either the pre-activation or the ReLU output, both give the
/// same mask.
pub fn relu_backward<T: Scalar>(x: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    if x.dims() != grad_out.dims() {
        return Err(shape_err!("relu_backward {:?} vs {:?}", x.dims(), grad_out.dims()));
    }
    let data = x
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&v, &g)| if v > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::from_vec(x.dims(), data)
}

/// Concatenates along the channel axis, in list order.
pub fn concat_channels<T: Scalar>(inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let first = inputs.first().ok_or_else(|| Error::Argument("concat of empty list".into()))?;
    let [n, _, h, w] = first.dims();
    for t in inputs {
        let [tn, _, th, tw] = t.dims();
        if (tn, th, tw) != (n, h, w) {
            return Err(shape_err!("concat {:?} with {:?}", first.dims(), t.dims()));
        }
    }
    let c_total: usize = inputs.iter().map(|t| t.channels()).sum();
    let mut data = Vec::with_capacity(n * c_total * h * w);
    for s in 0..n {
        for t in inputs {
            data.extend_from_slice(t.sample(s));
        }
    }
    Tensor::from_vec([n, c_total, h, w], data)
}

/// Splits along the channel axis into consecutive groups of `sizes` channels.
pub fn split_channels<T: Scalar>(grad_out: &Tensor<T>, sizes: &[usize]) -> Result<Vec<Tensor<T>>> {
    let [n, c, h, w] = grad_out.dims();
    if sizes.iter().sum::<usize>() != c || sizes.contains(&0) {
        return Err(shape_err!("split sizes {sizes:?} for {c} channels"));
    }
    let hw = h * w;
    let mut parts: Vec<Vec<T>> = sizes.iter().map(|&s| Vec::with_capacity(n * s * hw)).collect();
    for s in 0..n {
        let sample = grad_out.sample(s);
        let mut start = 0;
        for (part, &size) in parts.iter_mut().zip(sizes) {
            part.extend_from_slice(&sample[start * hw..(start + size) * hw]);
            start += size;
        }
    }
    parts
        .into_iter()
        .zip(sizes)
        .map(|(data, &size)| Tensor::from_vec([n, size, h, w], data))
        .collect()
}

/// Mean squared error halved: `Σ (pred - target)² / (2 * len)`.
///
/// Normalizing by the element count (batch size times per-sample size) keeps
/// the loss comparable across patch and batch sizes. Returns the loss and
/// its exact gradient with respect to `pred`.
pub fn mse_loss<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(T, Tensor<T>)> {
    let diff = pred.sub(target)?;
    let len = T::from_f64(diff.len() as f64);
    let loss = diff.reduce_mean_square() / T::from_f64(2.0);
    let grad = diff.map(|d| d / len);
    Ok((loss, grad))
}

/// Samples `Uniform(-b, b)` with `b = sqrt(6 / fan_in)`.
pub fn he_uniform_init<T: Scalar, R: Rng + ?Sized>(
    dims: [usize; 4],
    fan_in: usize,
    rng: &mut R,
) -> Result<Tensor<T>> {
    if fan_in == 0 {
        return Err(Error::Argument("fan_in must be >= 1".into()));
    }
    let bound = (6.0 / fan_in as f64).sqrt();
    let mut t = Tensor::zeros(dims)?;
    for v in t.data_mut() {
        *v = T::from_f64(rng.gen_range(-bound..=bound));
    }
    Ok(t)
}
