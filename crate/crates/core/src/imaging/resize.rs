//! Separable bicubic resampling with the Keys kernel (`a = -0.5`).
//!
//! Output pixel `d` samples the source at `(d + 0.5) * in / out - 0.5`. When
//! shrinking, the kernel is stretched by `in / out` so it acts as a low-pass
//! filter, and the taps of every output pixel are renormalized to sum to one.
//! Source indices outside the image are clamped to the nearest edge.

use super::ImagePlane;
use crate::error::{Error, Result};

/// Keys cubic convolution kernel with `a = -0.5`.
pub fn cubic_kernel(d: f64) -> f64 {
    let x = d.abs();
    if x <= 1.0 {
        1.5 * x * x * x - 2.5 * x * x + 1.0
    } else if x <= 2.0 {
        -0.5 * x * x * x + 2.5 * x * x - 4.0 * x + 2.0
    } else {
        0.0
    }
}

/// Per-output-pixel taps: `(first source index, weights)`, indices unclamped.
struct Taps {
    first: Vec<isize>,
    weights: Vec<Vec<f64>>,
}

impl Taps {
    fn new(len_in: usize, len_out: usize) -> Taps {
        let ratio = len_in as f64 / len_out as f64;
        let stretch = ratio.max(1.0);
        let support = 2.0 * stretch;
        let mut first = Vec::with_capacity(len_out);
        let mut weights = Vec::with_capacity(len_out);
        for d in 0..len_out {
            let center = (d as f64 + 0.5) * ratio - 0.5;
            let lo = (center - support).ceil() as isize;
            let hi = (center + support).floor() as isize;
            let mut w: Vec<f64> = (lo..=hi).map(|s| cubic_kernel((s as f64 - center) / stretch)).collect();
            let sum: f64 = w.iter().sum();
            w.iter_mut().for_each(|v| *v /= sum);
            first.push(lo);
            weights.push(w);
        }
        Taps { first, weights }
    }

    fn apply(&self, src: &[f64], stride: usize, len_in: usize, dst: &mut [f64], dst_stride: usize) {
        let last = len_in as isize - 1;
        for (d, (lo, w)) in self.first.iter().zip(&self.weights).enumerate() {
            let mut acc = 0.0;
            for (k, wk) in w.iter().enumerate() {
                let s = (lo + k as isize).clamp(0, last) as usize;
                acc += wk * src[s * stride];
            }
            dst[d * dst_stride] = acc;
        }
    }
}

/// Resizes one `w x h` row-major channel. No clamping of the result.
pub fn resize_channel(src: &[f64], w: usize, h: usize, out_w: usize, out_h: usize) -> Vec<f64> {
    let row_taps = Taps::new(w, out_w);
    let mut tmp = vec![0.0; out_w * h];
    for y in 0..h {
        row_taps.apply(&src[y * w..(y + 1) * w], 1, w, &mut tmp[y * out_w..(y + 1) * out_w], 1);
    }
    let col_taps = Taps::new(h, out_h);
    let mut out = vec![0.0; out_w * out_h];
    for x in 0..out_w {
        col_taps.apply(&tmp[x..], out_w, h, &mut out[x..], out_w);
    }
    out
}

/// Bicubic resize of every channel, output clamped into `[0, 1]`.
pub fn bicubic_resize(img: &ImagePlane, out_width: usize, out_height: usize) -> Result<ImagePlane> {
    if out_width == 0 || out_height == 0 {
        return Err(Error::Argument(format!("output dims must be >= 1, got {out_width}x{out_height}")));
    }
    let channels =
        img.map_channels(|c| resize_channel(c, img.width(), img.height(), out_width, out_height));
    ImagePlane::from_channels(out_width, out_height, img.space(), &channels)
}
