//! Training corpus: eight-fold augmentation, degradation and random patch
//! batches.

use rand::Rng;

use crate::error::{Error, Result};
use crate::imaging::{degrade, ColorSpace, Degraded, ImagePlane};
use crate::tensor::{Scalar, Tensor};

pub const DEFAULT_PATCH: usize = 48;

/// One of the eight square symmetries: `quarter_turns` rotations followed by
/// an optional horizontal flip.
///
/// A quarter turn maps output `(x, y)` to input `(y, H - 1 - x)`; a one-column
/// image `[a; b]` (a on top) becomes the row `[b a]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Transform {
    pub quarter_turns: u8,
    pub flip: bool,
}

impl Transform {
    pub const IDENTITY: Transform = Transform { quarter_turns: 0, flip: false };

    /// All eight transforms, index `k` is `(k / 2) turns, flip = k odd`.
    pub fn all() -> [Transform; 8] {
        std::array::from_fn(|k| Transform { quarter_turns: (k / 2) as u8, flip: k % 2 == 1 })
    }

    /// Output dims for a `w x h` input.
    pub fn output_dims(self, w: usize, h: usize) -> (usize, usize) {
        if self.quarter_turns % 2 == 1 {
            (h, w)
        } else {
            (w, h)
        }
    }

    /// Input coordinate read by output `(x, y)`, for a `w x h` input.
    pub fn source_coord(self, x: usize, y: usize, w: usize, h: usize) -> (usize, usize) {
        let (mut cw, mut ch) = self.output_dims(w, h);
        let (mut x, mut y) = (if self.flip { cw - 1 - x } else { x }, y);
        for _ in 0..self.quarter_turns % 4 {
            // Output (x, y) of a cw x ch turn came from input (y, cw - 1 - x)
            // of a ch x cw image.
            (x, y) = (y, cw - 1 - x);
            (cw, ch) = (ch, cw);
        }
        debug_assert_eq!((cw, ch), (w, h));
        (x, y)
    }

    pub fn apply_grid(self, w: usize, h: usize, data: &[f64]) -> (usize, usize, Vec<f64>) {
        let (ow, oh) = self.output_dims(w, h);
        let mut out = Vec::with_capacity(ow * oh);
        for y in 0..oh {
            for x in 0..ow {
                let (sx, sy) = self.source_coord(x, y, w, h);
                out.push(data[sy * w + sx]);
            }
        }
        (ow, oh, out)
    }

    pub fn apply(self, img: &ImagePlane) -> ImagePlane {
        let (w, h) = (img.width(), img.height());
        let (ow, oh) = self.output_dims(w, h);
        let channels: Vec<Vec<f64>> =
            (0..img.channel_count()).map(|c| self.apply_grid(w, h, img.channel(c)).2).collect();
        ImagePlane::from_channels(ow, oh, img.space(), &channels).expect("permutation keeps dims valid")
    }
}

/// `rot0, rot0+flip, rot90, rot90+flip, rot180, ..., rot270+flip`.
pub fn augment(img: &ImagePlane) -> Vec<ImagePlane> {
    Transform::all().iter().map(|t| t.apply(img)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum CorpusMode {
    /// Degrade all eight variants of every source up front.
    #[default]
    Eager,
    /// Degrade each source once and transform patches on extraction.
    Lazy,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CorpusConfig {
    pub scale: usize,
    pub patch: usize,
    pub mode: CorpusMode,
}

impl CorpusConfig {
    pub fn new(scale: usize) -> Self {
        CorpusConfig { scale, patch: DEFAULT_PATCH, mode: CorpusMode::Eager }
    }
}

/// Top-left corner of a patch in selectable image `image`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PatchOrigin {
    pub image: usize,
    pub x: usize,
    pub y: usize,
}

/// Aligned patch triple; `x + y == hr` up to rounding.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    pub lr_interp: Vec<f64>,
    pub residual: Vec<f64>,
    pub hr: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainCorpus {
    config: CorpusConfig,
    source_count: usize,
    /// Eager: one entry per (source, transform). Lazy: one per source.
    pairs: Vec<Degraded>,
}

impl TrainCorpus {
    /// Builds a corpus from luminance images. Sources too small to yield a
    /// patch after cropping to a multiple of the scale are skipped.
    pub fn build(images: &[ImagePlane], config: CorpusConfig) -> Result<Self> {
        if config.patch == 0 || config.scale == 0 {
            return Err(Error::Argument("patch and scale must be >= 1".into()));
        }
        let mut pairs = Vec::new();
        let mut source_count = 0;
        for (i, img) in images.iter().enumerate() {
            if img.space() != ColorSpace::Y {
                return Err(Error::Argument(format!("source {i} is {:?}, expected luminance", img.space())));
            }
            let cropped = |d: usize| d - d % config.scale;
            if cropped(img.width()) < config.patch || cropped(img.height()) < config.patch {
                log::warn!(
                    "skipping {}x{} training image {i}: smaller than a {} patch at scale {}",
                    img.width(),
                    img.height(),
                    config.patch,
                    config.scale
                );
                continue;
            }
            source_count += 1;
            match config.mode {
                CorpusMode::Eager => {
                    for variant in augment(img) {
                        pairs.push(degrade(&variant, config.scale)?);
                    }
                }
                CorpusMode::Lazy => pairs.push(degrade(img, config.scale)?),
            }
        }
        if source_count == 0 {
            return Err(Error::State("training corpus is empty".into()));
        }
        Ok(TrainCorpus { config, source_count, pairs })
    }

    pub fn config(&self) -> &CorpusConfig {
        &self.config
    }

    pub fn source_count(&self) -> usize {
        self.source_count
    }

    /// Number of selectable (augmented) images, `8 * source_count`.
    pub fn len(&self) -> usize {
        8 * self.source_count
    }

    pub fn is_empty(&self) -> bool {
        self.source_count == 0
    }

    fn locate(&self, image: usize) -> (&Degraded, Transform) {
        match self.config.mode {
            CorpusMode::Eager => (&self.pairs[image], Transform::IDENTITY),
            CorpusMode::Lazy => (&self.pairs[image / 8], Transform::all()[image % 8]),
        }
    }

    /// Dims of selectable image `image`.
    pub fn image_dims(&self, image: usize) -> (usize, usize) {
        let (d, t) = self.locate(image);
        t.output_dims(d.hr.width(), d.hr.height())
    }

    /// Draws `batch` origins: image uniformly, then offset uniformly.
    pub fn sample_origins<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Vec<PatchOrigin>> {
        if self.is_empty() {
            return Err(Error::State("cannot sample from an empty corpus".into()));
        }
        let p = self.config.patch;
        Ok((0..batch)
            .map(|_| {
                let image = rng.gen_range(0..self.len());
                let (w, h) = self.image_dims(image);
                let y = rng.gen_range(0..=h - p);
                let x = rng.gen_range(0..=w - p);
                PatchOrigin { image, x, y }
            })
            .collect())
    }

    pub fn patch(&self, origin: PatchOrigin) -> Patch {
        let (d, t) = self.locate(origin.image);
        let (w, h) = (d.hr.width(), d.hr.height());
        let p = self.config.patch;
        let mut out = Patch {
            lr_interp: Vec::with_capacity(p * p),
            residual: Vec::with_capacity(p * p),
            hr: Vec::with_capacity(p * p),
        };
        for y in origin.y..origin.y + p {
            for x in origin.x..origin.x + p {
                let (sx, sy) = t.source_coord(x, y, w, h);
                let i = sy * w + sx;
                out.lr_interp.push(d.lr_interp.samples()[i]);
                out.residual.push(d.residual.data[i]);
                out.hr.push(d.hr.samples()[i]);
            }
        }
        out
    }

    /// Stacks patches into `(x, y)` tensors of dims `(B, 1, patch, patch)`.
    pub fn assemble<T: Scalar>(&self, origins: &[PatchOrigin]) -> Result<(Tensor<T>, Tensor<T>)> {
        let p = self.config.patch;
        let mut xs = Vec::with_capacity(origins.len() * p * p);
        let mut ys = Vec::with_capacity(origins.len() * p * p);
        for &o in origins {
            let patch = self.patch(o);
            xs.extend(patch.lr_interp.iter().map(|&v| T::from_f64(v)));
            ys.extend(patch.residual.iter().map(|&v| T::from_f64(v)));
        }
        let dims = [origins.len(), 1, p, p];
        Ok((Tensor::from_vec(dims, xs)?, Tensor::from_vec(dims, ys)?))
    }

    pub fn sample_batch<T: Scalar, R: Rng + ?Sized>(
        &self,
        batch: usize,
        rng: &mut R,
    ) -> Result<(Tensor<T>, Tensor<T>)> {
        let origins = self.sample_origins(batch, rng)?;
        self.assemble(&origins)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn numbered(w: usize, h: usize) -> ImagePlane {
        let s = (0..w * h).map(|i| i as f64 / (w * h) as f64).collect();
        ImagePlane::new(w, h, ColorSpace::Y, s).unwrap()
    }

    fn rot90(img: &ImagePlane) -> ImagePlane {
        Transform { quarter_turns: 1, flip: false }.apply(img)
    }

    #[test]
    fn column_rotates_to_reversed_row() {
        let col = ImagePlane::new(1, 2, ColorSpace::Y, vec![0.25, 0.75]).unwrap();
        let r = rot90(&col);
        assert_eq!((r.width(), r.height()), (2, 1));
        assert_eq!(r.samples(), &[0.75, 0.25]);
    }

    #[test]
    fn group_properties() {
        let img = numbered(5, 3);
        assert_eq!(rot90(&rot90(&rot90(&rot90(&img)))), img);
        let flip = Transform { quarter_turns: 0, flip: true };
        assert_eq!(flip.apply(&flip.apply(&img)), img);
        let variants = augment(&img);
        assert_eq!(variants.len(), 8);
        for i in 0..8 {
            for j in i + 1..8 {
                assert_ne!(variants[i], variants[j], "variants {i} and {j}");
            }
        }
        // Composite transforms agree with repeated single steps.
        let t = Transform { quarter_turns: 3, flip: true };
        assert_eq!(t.apply(&img), flip.apply(&rot90(&rot90(&rot90(&img)))));
    }

    #[test]
    fn augmentation_permutes_pixels() {
        let img = numbered(4, 6);
        let mut base = img.samples().to_vec();
        base.sort_by(f64::total_cmp);
        for v in augment(&img) {
            let mut s = v.samples().to_vec();
            s.sort_by(f64::total_cmp);
            assert_eq!(s, base);
        }
    }

    #[test]
    fn too_small_sources_are_skipped() {
        let imgs = vec![numbered(60, 50), numbered(47, 60)];
        let corpus = TrainCorpus::build(&imgs, CorpusConfig::new(2)).unwrap();
        assert_eq!(corpus.source_count(), 1);
        assert_eq!(corpus.len(), 8);
        assert!(matches!(
            TrainCorpus::build(&[numbered(10, 10)], CorpusConfig::new(2)),
            Err(Error::State(_))
        ));
    }

    #[test]
    fn sampling_is_deterministic() {
        let corpus = TrainCorpus::build(&[numbered(64, 56)], CorpusConfig::new(3)).unwrap();
        let a = corpus.sample_batch::<f32, _>(4, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = corpus.sample_batch::<f32, _>(4, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.0.dims(), [4, 1, 48, 48]);
    }
}
