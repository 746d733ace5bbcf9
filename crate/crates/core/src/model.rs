//! The multi-scale super-resolution network.
//!
//! Topology, for branch width `n`, `m` enhancement blocks and `c` image
//! channels:
//!
//! ```text
//! x ─ inception(c → 3n) ─ fuse(3n → 3n) ─ [inception(3n → 3n) ─ fuse(3n → 3n)] × m ─ recon(3n → c) ─ residual
//! ```
//!
//! An inception module runs three 3x3 convolutions with dilations 1, 2 and 3
//! side by side and concatenates their (ReLU'd) outputs. Fusion convolutions
//! are ordinary 3x3 convolutions followed by ReLU. The reconstruction
//! convolution has no activation, since the predicted high-frequency residual
//! must be able to go negative. The super-resolved image is the
//! interpolated input plus the residual.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{shape_err, Error, Result};
use crate::nn::{
    concat_channels, dilated_conv2d_backward, dilated_conv2d_forward, he_uniform_init, relu_backward,
    relu_forward, split_channels, ConvParams, KERNEL,
};
use crate::tensor::{Scalar, Tensor};

/// Dilations of the three inception branches.
pub const BRANCH_DILATIONS: [usize; 3] = [1, 2, 3];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NetConfig {
    /// Filters per inception branch; each inception emits `3n` channels.
    pub n: usize,
    /// Number of enhancement blocks.
    pub m: usize,
    /// Image channels (1 for luminance).
    pub c: usize,
    pub seed: u64,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig { n: 8, m: 5, c: 1, seed: 0 }
    }
}

impl NetConfig {
    pub fn new(n: usize, m: usize, c: usize, seed: u64) -> Self {
        NetConfig { n, m, c, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Argument("n must be >= 1".into()));
        }
        if self.c != 1 && self.c != 3 {
            return Err(Error::Argument(format!("c must be 1 or 3, got {}", self.c)));
        }
        Ok(())
    }

    /// Number of inception modules, `m + 1`.
    pub fn inception_count(&self) -> usize {
        self.m + 1
    }

    /// Number of plain (dilation 1) convolutions, `m + 2`.
    pub fn plain_conv_count(&self) -> usize {
        self.m + 2
    }
}

/// Side length of the input window that can influence one output pixel.
///
/// Each inception contributes its widest branch (dilation 3, +6) and each
/// plain 3x3 convolution +2.
pub fn receptive_field(cfg: &NetConfig) -> usize {
    1 + 6 * cfg.inception_count() + 2 * cfg.plain_conv_count()
}

/// Closed-form count of weight and bias elements.
pub fn parameter_count(cfg: &NetConfig) -> usize {
    let (n, m, c) = (cfg.n, cfg.m, cfg.c);
    let taps = KERNEL * KERNEL;
    let wide = 3 * n;
    3 * (taps * c * n + n)
        + (m + 1) * (taps * wide * wide + wide)
        + m * 3 * (taps * wide * n + n)
        + (taps * wide * c + c)
}

/// Three parallel dilated 3x3 convolutions whose outputs are concatenated.
#[derive(Clone, Debug, PartialEq)]
pub struct InceptionModule<T> {
    pub branches: [ConvParams<T>; 3],
}

impl<T: Scalar> InceptionModule<T> {
    pub fn zeros(c_in: usize, width: usize) -> Result<Self> {
        let [a, b, c] = BRANCH_DILATIONS;
        Ok(InceptionModule {
            branches: [
                ConvParams::zeros(c_in, width, a)?,
                ConvParams::zeros(c_in, width, b)?,
                ConvParams::zeros(c_in, width, c)?,
            ],
        })
    }

    pub fn out_channels(&self) -> usize {
        self.branches.iter().map(|b| b.out_channels()).sum()
    }

    fn widths(&self) -> [usize; 3] {
        [0, 1, 2].map(|i| self.branches[i].out_channels())
    }

    /// Per-branch conv + ReLU, then channel concatenation.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let outs = self
            .branches
            .iter()
            .map(|b| dilated_conv2d_forward(x, b).map(|y| relu_forward(&y)))
            .collect::<Result<Vec<_>>>()?;
        concat_channels(&outs.iter().collect::<Vec<_>>())
    }

    /// `out` is the concatenated post-ReLU output of [`InceptionModule::forward`].
    fn backward(
        &self,
        x: &Tensor<T>,
        out: &Tensor<T>,
        grad_out: &Tensor<T>,
        grads: &mut Vec<ParamGrad<T>>,
    ) -> Result<Tensor<T>> {
        let masked = relu_backward(out, grad_out)?;
        let parts = split_channels(&masked, &self.widths())?;
        let mut grad_x: Option<Tensor<T>> = None;
        // Pushed in reverse; the caller flips the list once at the end.
        for (branch, g) in self.branches.iter().zip(&parts).rev() {
            let cg = dilated_conv2d_backward(x, branch, g)?;
            grads.push(ParamGrad { weight: cg.weight, bias: cg.bias });
            match grad_x.as_mut() {
                Some(acc) => acc.add_assign(&cg.input)?,
                None => grad_x = Some(cg.input),
            }
        }
        Ok(grad_x.expect("three branches"))
    }
}

/// One enhancement block: inception followed by a fusion convolution.
#[derive(Clone, Debug, PartialEq)]
pub struct Block<T> {
    pub inception: InceptionModule<T>,
    pub fuse: ConvParams<T>,
}

impl<T: Scalar> Block<T> {
    fn zeros(c_in: usize, n: usize) -> Result<Self> {
        Ok(Block { inception: InceptionModule::zeros(c_in, n)?, fuse: ConvParams::zeros(3 * n, 3 * n, 1)? })
    }
}

/// Gradient of one convolution's weight and bias.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGrad<T> {
    pub weight: Tensor<T>,
    pub bias: Vec<T>,
}

/// Gradients for every convolution, in build order.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    pub convs: Vec<ParamGrad<T>>,
}

impl<T: Scalar> Gradients<T> {
    /// Flat views in the same order as [`Mssrnet::params_mut`].
    pub fn slices(&self) -> Vec<&[T]> {
        self.convs.iter().flat_map(|g| [g.weight.data(), &g.bias[..]]).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_zero()))
    }
}

/// Activations retained by [`Mssrnet::forward`] for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache<T> {
    generation: u64,
    config: NetConfig,
    /// `[x, inception_0, fuse_0, inception_1, fuse_1, ...]`, all post-ReLU.
    activations: Vec<Tensor<T>>,
}

impl<T> ForwardCache<T> {
    pub fn input(&self) -> &Tensor<T> {
        &self.activations[0]
    }

    /// Input followed by every post-ReLU feature map, in forward order.
    pub fn activations(&self) -> &[Tensor<T>] {
        &self.activations
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mssrnet<T> {
    config: NetConfig,
    pub fe_inception: InceptionModule<T>,
    pub fe_fuse: ConvParams<T>,
    pub blocks: Vec<Block<T>>,
    pub recon: ConvParams<T>,
    generation: u64,
}

impl<T: Scalar> Mssrnet<T> {
    /// All-zero network with the topology of `cfg`.
    pub fn zeros(cfg: &NetConfig) -> Result<Self> {
        cfg.validate()?;
        let wide = 3 * cfg.n;
        Ok(Mssrnet {
            config: *cfg,
            fe_inception: InceptionModule::zeros(cfg.c, cfg.n)?,
            fe_fuse: ConvParams::zeros(wide, wide, 1)?,
            blocks: (0..cfg.m).map(|_| Block::zeros(wide, cfg.n)).collect::<Result<_>>()?,
            recon: ConvParams::zeros(wide, cfg.c, 1)?,
            generation: 0,
        })
    }

    /// He-uniform weights, zero biases, deterministic in `cfg.seed`.
    ///
    /// Weights are drawn in build order from one ChaCha8 stream, in `f64`
    /// and then rounded, so the `f32` and `f64` builds of a seed agree up to
    /// rounding.
    pub fn build(cfg: &NetConfig) -> Result<Self> {
        let mut net = Self::zeros(cfg)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        for conv in net.convs_mut() {
            let dims = conv.weight.dims();
            conv.weight = he_uniform_init(dims, dims[1] * KERNEL * KERNEL, &mut rng)?;
        }
        Ok(net)
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn inception_count(&self) -> usize {
        1 + self.blocks.len()
    }

    pub fn plain_conv_count(&self) -> usize {
        2 + self.blocks.len()
    }

    /// Convolutions in build order: first inception branches, first fusion,
    /// then per block its branches and fusion, then reconstruction.
    pub fn convs(&self) -> Vec<&ConvParams<T>> {
        let mut out: Vec<&ConvParams<T>> = self.fe_inception.branches.iter().collect();
        out.push(&self.fe_fuse);
        for b in &self.blocks {
            out.extend(b.inception.branches.iter());
            out.push(&b.fuse);
        }
        out.push(&self.recon);
        out
    }

    /// Mutable access in build order. Invalidates outstanding forward caches.
    pub fn convs_mut(&mut self) -> Vec<&mut ConvParams<T>> {
        self.generation += 1;
        let mut out: Vec<&mut ConvParams<T>> = self.fe_inception.branches.iter_mut().collect();
        out.push(&mut self.fe_fuse);
        for b in &mut self.blocks {
            out.extend(b.inception.branches.iter_mut());
            out.push(&mut b.fuse);
        }
        out.push(&mut self.recon);
        out
    }

    /// Flat parameter slices (weight, bias, weight, bias, ...) in build order.
    pub fn params_mut(&mut self) -> Vec<&mut [T]> {
        self.convs_mut()
            .into_iter()
            .flat_map(|c| [c.weight.data_mut(), &mut c.bias[..]])
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.convs().iter().map(|c| c.param_count()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> Mssrnet<U> {
        let inc = |m: &InceptionModule<T>| InceptionModule { branches: m.branches.each_ref().map(|b| b.cast()) };
        Mssrnet {
            config: self.config,
            fe_inception: inc(&self.fe_inception),
            fe_fuse: self.fe_fuse.cast(),
            blocks: self.blocks.iter().map(|b| Block { inception: inc(&b.inception), fuse: b.fuse.cast() }).collect(),
            recon: self.recon.cast(),
            generation: 0,
        }
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        if x.channels() != self.config.c {
            return Err(shape_err!("input has {} channels, network expects {}", x.channels(), self.config.c));
        }
        Ok(())
    }

    fn stages(&self) -> impl Iterator<Item = (&InceptionModule<T>, &ConvParams<T>)> {
        std::iter::once((&self.fe_inception, &self.fe_fuse)).chain(self.blocks.iter().map(|b| (&b.inception, &b.fuse)))
    }

    /// Predicted residual plus the activations needed by [`Mssrnet::backward`].
    pub fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, ForwardCache<T>)> {
        self.check_input(x)?;
        let mut activations = vec![x.clone()];
        for (inception, fuse) in self.stages() {
            let y = inception.forward(activations.last().expect("non-empty"))?;
            let z = relu_forward(&dilated_conv2d_forward(&y, fuse)?);
            activations.push(y);
            activations.push(z);
        }
        let residual = dilated_conv2d_forward(activations.last().expect("non-empty"), &self.recon)?;
        Ok((residual, ForwardCache { generation: self.generation, config: self.config, activations }))
    }

    /// Forward pass without retaining activations.
    pub fn residual(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let mut h = x.clone();
        for (inception, fuse) in self.stages() {
            let y = inception.forward(&h)?;
            h = relu_forward(&dilated_conv2d_forward(&y, fuse)?);
        }
        dilated_conv2d_forward(&h, &self.recon)
    }

    /// `clamp(lr_interp + residual, 0, 1)`.
    pub fn predict_hr(&self, lr_interp: &Tensor<T>) -> Result<Tensor<T>> {
        let residual = self.residual(lr_interp)?;
        Ok(lr_interp.add(&residual)?.map(|v| v.max(T::zero()).min(T::one())))
    }

    /// Gradients of a scalar loss with respect to every parameter, given
    /// the loss gradient with respect to the predicted residual.
    pub fn backward(&self, cache: &ForwardCache<T>, grad_residual: &Tensor<T>) -> Result<Gradients<T>> {
        if cache.generation != self.generation || cache.config != self.config {
            return Err(Error::State("forward cache does not belong to this network state".into()));
        }
        if cache.activations.len() != 1 + 2 * self.inception_count() {
            return Err(Error::State("forward cache has the wrong number of activations".into()));
        }
        if grad_residual.dims() != cache.input().dims() {
            return Err(shape_err!(
                "grad_residual dims {:?}, input dims {:?}",
                grad_residual.dims(),
                cache.input().dims()
            ));
        }
        let acts = &cache.activations;
        let mut grads = Vec::with_capacity(self.convs().len());

        let last = acts.last().expect("non-empty");
        let cg = dilated_conv2d_backward(last, &self.recon, grad_residual)?;
        grads.push(ParamGrad { weight: cg.weight, bias: cg.bias });
        let mut g = cg.input;

        let stages: Vec<_> = self.stages().collect();
        for (s, (inception, fuse)) in stages.iter().enumerate().rev() {
            let (x, y, z) = (&acts[2 * s], &acts[2 * s + 1], &acts[2 * s + 2]);
            let gz = relu_backward(z, &g)?;
            let cg = dilated_conv2d_backward(y, fuse, &gz)?;
            grads.push(ParamGrad { weight: cg.weight, bias: cg.bias });
            g = inception.backward(x, y, &cg.input, &mut grads)?;
        }
        grads.reverse();
        Ok(Gradients { convs: grads })
    }
}
