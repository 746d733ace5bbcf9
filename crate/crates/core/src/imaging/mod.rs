//! Image planes, file I/O, color conversion, resampling and the
//! low-resolution degradation pipeline.

mod bmp;
mod color;
mod io;
mod resize;

use crate::error::{shape_err, Error, Result};
use crate::tensor::{Scalar, Tensor};

pub use bmp::{decode_bmp, encode_bmp};
pub use color::{rgb_to_y, rgb_to_ycbcr, ycbcr_to_rgb};
pub use io::{load_image, save_image};
pub use resize::{bicubic_resize, cubic_kernel, resize_channel};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ColorSpace {
    Rgb,
    /// Luminance only.
    Y,
    YCbCr,
}

impl ColorSpace {
    pub fn channels(self) -> usize {
        match self {
            ColorSpace::Y => 1,
            ColorSpace::Rgb | ColorSpace::YCbCr => 3,
        }
    }
}

/// Planar floating-point image with samples in `[0, 1]`.
///
/// Channel `c` occupies `samples[c * w * h..(c + 1) * w * h]`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ImagePlane {
    width: usize,
    height: usize,
    space: ColorSpace,
    samples: Vec<f64>,
}

fn clamp01(v: f64) -> f64 {
    // NaN maps to 0.
    if v > 0.0 {
        v.min(1.0)
    } else {
        0.0
    }
}

impl ImagePlane {
    /// Builds an image, clamping every sample into `[0, 1]`.
    pub fn new(width: usize, height: usize, space: ColorSpace, mut samples: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Argument(format!("image dims must be >= 1, got {width}x{height}")));
        }
        let expected = width * height * space.channels();
        if samples.len() != expected {
            return Err(shape_err!("{} samples for {width}x{height} {space:?}", samples.len()));
        }
        samples.iter_mut().for_each(|v| *v = clamp01(*v));
        Ok(ImagePlane { width, height, space, samples })
    }

    pub fn filled(width: usize, height: usize, space: ColorSpace, value: f64) -> Result<Self> {
        Self::new(width, height, space, vec![value; width * height * space.channels()])
    }

    /// Builds an image from per-channel planes.
    pub fn from_channels(width: usize, height: usize, space: ColorSpace, channels: &[Vec<f64>]) -> Result<Self> {
        Self::new(width, height, space, channels.concat())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn space(&self) -> ColorSpace {
        self.space
    }

    pub fn channel_count(&self) -> usize {
        self.space.channels()
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.width * self.height;
        &self.samples[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn get(&self, c: usize, x: usize, y: usize) -> f64 {
        self.samples[(c * self.height + y) * self.width + x]
    }

    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<ImagePlane> {
        if width == 0 || height == 0 || x0 + width > self.width || y0 + height > self.height {
            return Err(Error::Argument(format!(
                "crop {width}x{height}+{x0}+{y0} outside {}x{}",
                self.width, self.height
            )));
        }
        let mut samples = Vec::with_capacity(width * height * self.channel_count());
        for c in 0..self.channel_count() {
            let plane = self.channel(c);
            for y in y0..y0 + height {
                samples.extend_from_slice(&plane[y * self.width + x0..y * self.width + x0 + width]);
            }
        }
        Ok(ImagePlane { width, height, space: self.space, samples })
    }

    /// Keeps the top-left region whose sides are multiples of `scale`.
    pub fn crop_to_multiple(&self, scale: usize) -> Result<ImagePlane> {
        if scale == 0 || self.width < scale || self.height < scale {
            return Err(Error::Argument(format!(
                "{}x{} image cannot be cropped to a multiple of {scale}",
                self.width, self.height
            )));
        }
        self.crop(0, 0, self.width - self.width % scale, self.height - self.height % scale)
    }

    /// `(1, C, H, W)` tensor.
    pub fn to_tensor<T: Scalar>(&self) -> Tensor<T> {
        Tensor::from_f64_slice([1, self.channel_count(), self.height, self.width], &self.samples)
            .expect("image dims are valid tensor dims")
    }

    /// Reads sample `n` of a `(N, C, H, W)` tensor, clamping into `[0, 1]`.
    pub fn from_tensor<T: Scalar>(t: &Tensor<T>, n: usize, space: ColorSpace) -> Result<ImagePlane> {
        if t.channels() != space.channels() || n >= t.batch() {
            return Err(shape_err!("tensor {:?} sample {n} as {space:?}", t.dims()));
        }
        let samples = t.sample(n).iter().map(|v| v.as_f64()).collect();
        Self::new(t.width(), t.height(), space, samples)
    }

    fn map_channels(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> Vec<Vec<f64>> {
        (0..self.channel_count()).map(|c| f(self.channel(c))).collect()
    }
}

/// Signed single-channel grid, `hr - interpolated`, values in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Residual {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Residual {
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>() / self.data.len() as f64
    }
}

/// Network input and training target derived from one luminance image.
#[derive(Clone, Debug, PartialEq)]
pub struct Degraded {
    /// The cropped ground truth.
    pub hr: ImagePlane,
    /// Bicubic down- then up-sampled image, same size as `hr`.
    pub lr_interp: ImagePlane,
    pub residual: Residual,
}

/// Crops `hr` to a multiple of `scale`, bicubic-downsamples by `scale`, and
/// upsamples back to the cropped size.
pub fn degrade(hr: &ImagePlane, scale: usize) -> Result<Degraded> {
    if scale == 0 {
        return Err(Error::Argument("scale must be >= 1".into()));
    }
    if hr.space() != ColorSpace::Y {
        return Err(Error::Argument(format!("degrade expects a luminance image, got {:?}", hr.space())));
    }
    let hr = hr.crop_to_multiple(scale)?;
    let (w, h) = (hr.width(), hr.height());
    let lr = bicubic_resize(&hr, w / scale, h / scale)?;
    let lr_interp = bicubic_resize(&lr, w, h)?;
    let data = hr.samples().iter().zip(lr_interp.samples()).map(|(a, b)| a - b).collect();
    Ok(Degraded { residual: Residual { width: w, height: h, data }, hr, lr_interp })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize) -> ImagePlane {
        let s = (0..w * h).map(|i| (i % w) as f64 / w as f64).collect();
        ImagePlane::new(w, h, ColorSpace::Y, s).unwrap()
    }

    #[test]
    fn construction_clamps_and_validates() {
        let img = ImagePlane::new(2, 1, ColorSpace::Y, vec![-0.5, 1.5]).unwrap();
        assert_eq!(img.samples(), &[0.0, 1.0]);
        assert!(ImagePlane::new(2, 1, ColorSpace::Rgb, vec![0.0; 2]).is_err());
        assert!(ImagePlane::new(0, 1, ColorSpace::Y, vec![]).is_err());
    }

    #[test]
    fn modular_crop_dims() {
        let d = degrade(&ramp(100, 100), 3).unwrap();
        assert_eq!((d.hr.width(), d.hr.height()), (99, 99));
        assert_eq!((d.lr_interp.width(), d.lr_interp.height()), (99, 99));
        assert!(degrade(&ramp(2, 5), 3).is_err());
        assert!(degrade(&ImagePlane::filled(8, 8, ColorSpace::Rgb, 0.5).unwrap(), 2).is_err());
    }

    #[test]
    fn constant_image_has_zero_residual() {
        let d = degrade(&ImagePlane::filled(30, 24, ColorSpace::Y, 0.37).unwrap(), 4).unwrap();
        assert!(d.residual.data.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn degrade_is_deterministic() {
        let a = degrade(&ramp(33, 20), 2).unwrap();
        let b = degrade(&ramp(33, 20), 2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn residual_concentrates_on_edges() {
        let (w, h) = (48, 48);
        let checker: Vec<f64> = (0..w * h).map(|i| if ((i % w) / 4 + (i / w) / 4) % 2 == 0 { 0.9 } else { 0.1 }).collect();
        let sharp = ImagePlane::new(w, h, ColorSpace::Y, checker).unwrap();
        let blurred = bicubic_resize(&bicubic_resize(&sharp, 12, 12).unwrap(), w, h).unwrap();
        let e_sharp = degrade(&sharp, 2).unwrap().residual.energy();
        let e_blur = degrade(&blurred, 2).unwrap().residual.energy();
        assert!(e_sharp > 0.0);
        assert!(e_sharp > e_blur, "{e_sharp} vs {e_blur}");
    }

    #[test]
    fn tensor_roundtrip() {
        let img = ramp(5, 3);
        let t = img.to_tensor::<f64>();
        assert_eq!(t.dims(), [1, 1, 3, 5]);
        assert_eq!(ImagePlane::from_tensor(&t, 0, ColorSpace::Y).unwrap(), img);
    }
}
