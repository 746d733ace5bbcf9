//! PSNR and SSIM on 8-bit-scaled samples with a shaved border.

use std::fmt::Write as _;

use crate::error::{shape_err, Error, Result};
use crate::imaging::ImagePlane;

const PEAK: f64 = 255.0;
const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

/// Both images cropped by `shave` on every side, as `[0, 255]` channels.
fn shaved(a: &ImagePlane, b: &ImagePlane, shave: usize) -> Result<(usize, usize, Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    if (a.width(), a.height(), a.channel_count()) != (b.width(), b.height(), b.channel_count()) {
        return Err(shape_err!(
            "metric operands {}x{}x{} vs {}x{}x{}",
            a.width(),
            a.height(),
            a.channel_count(),
            b.width(),
            b.height(),
            b.channel_count()
        ));
    }
    if 2 * shave >= a.width().min(a.height()) {
        return Err(Error::Argument(format!("shave {shave} too large for {}x{}", a.width(), a.height())));
    }
    let (w, h) = (a.width() - 2 * shave, a.height() - 2 * shave);
    let crop = |img: &ImagePlane| -> Vec<Vec<f64>> {
        (0..img.channel_count())
            .map(|c| {
                let plane = img.channel(c);
                let mut out = Vec::with_capacity(w * h);
                for y in shave..shave + h {
                    let row = &plane[y * img.width() + shave..y * img.width() + shave + w];
                    out.extend(row.iter().map(|v| v * PEAK));
                }
                out
            })
            .collect()
    };
    Ok((w, h, crop(a), crop(b)))
}

/// `10 log10(255² / mse)` over the shaved region. Identical images give
/// `f64::INFINITY`.
pub fn psnr(a: &ImagePlane, b: &ImagePlane, shave: usize) -> Result<f64> {
    let (_, _, pa, pb) = shaved(a, b, shave)?;
    let (mut sum, mut count) = (0.0, 0usize);
    for (ca, cb) in pa.iter().zip(&pb) {
        sum += ca.iter().zip(cb).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
        count += ca.len();
    }
    let mse = sum / count as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (PEAK * PEAK / mse).log10())
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let r = (SSIM_WINDOW / 2) as f64;
    let mut g = [0.0; SSIM_WINDOW];
    for (i, v) in g.iter_mut().enumerate() {
        let d = i as f64 - r;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = g.iter().sum();
    g.iter_mut().for_each(|v| *v /= s);
    g
}

/// Valid-mode separable filtering with the normalized Gaussian window.
fn filter_valid(src: &[f64], w: usize, h: usize, g: &[f64; SSIM_WINDOW]) -> (usize, usize, Vec<f64>) {
    let (ow, oh) = (w + 1 - SSIM_WINDOW, h + 1 - SSIM_WINDOW);
    let mut tmp = vec![0.0; ow * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..ow {
            tmp[y * ow + x] = g.iter().zip(&row[x..x + SSIM_WINDOW]).map(|(k, v)| k * v).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = g.iter().enumerate().map(|(k, gk)| gk * tmp[(y + k) * ow + x]).sum();
        }
    }
    (ow, oh, out)
}

fn ssim_channel(a: &[f64], b: &[f64], w: usize, h: usize) -> f64 {
    let g = gaussian_window();
    let c1 = (K1 * PEAK).powi(2);
    let c2 = (K2 * PEAK).powi(2);
    let prod = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(p, q)| p * q).collect() };
    let (_, _, mu_a) = filter_valid(a, w, h, &g);
    let (_, _, mu_b) = filter_valid(b, w, h, &g);
    let (_, _, e_aa) = filter_valid(&prod(a, a), w, h, &g);
    let (_, _, e_bb) = filter_valid(&prod(b, b), w, h, &g);
    let (_, _, e_ab) = filter_valid(&prod(a, b), w, h, &g);
    let mut total = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let var_a = e_aa[i] - ma * ma;
        let var_b = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        let num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
        let den = (ma * ma + mb * mb + c1) * (var_a + var_b + c2);
        total += num / den;
    }
    total / mu_a.len() as f64
}

/// Mean SSIM over the shaved region (11x11 Gaussian window, σ = 1.5,
/// no padding), averaged across channels.
pub fn ssim(a: &ImagePlane, b: &ImagePlane, shave: usize) -> Result<f64> {
    let (w, h, pa, pb) = shaved(a, b, shave)?;
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::Argument(format!("{w}x{h} region is smaller than the SSIM window")));
    }
    let sum: f64 = pa.iter().zip(&pb).map(|(ca, cb)| ssim_channel(ca, cb, w, h)).sum();
    Ok(sum / pa.len() as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalEntry {
    pub image: String,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub scale: usize,
    pub shave: usize,
    pub entries: Vec<EvalEntry>,
}

impl EvalReport {
    pub fn new(scale: usize, shave: usize) -> Self {
        EvalReport { scale, shave, entries: Vec::new() }
    }

    /// Mean PSNR over entries with a finite PSNR.
    pub fn mean_psnr(&self) -> f64 {
        let finite: Vec<f64> = self.entries.iter().map(|e| e.psnr).filter(|p| p.is_finite()).collect();
        finite.iter().sum::<f64>() / finite.len() as f64
    }

    /// Mean SSIM over the same entries as [`EvalReport::mean_psnr`].
    pub fn mean_ssim(&self) -> f64 {
        let kept: Vec<f64> = self.entries.iter().filter(|e| e.psnr.is_finite()).map(|e| e.ssim).collect();
        kept.iter().sum::<f64>() / kept.len() as f64
    }

    /// Entries excluded from the averages.
    pub fn excluded(&self) -> impl Iterator<Item = &EvalEntry> {
        self.entries.iter().filter(|e| !e.psnr.is_finite())
    }

    /// `image<TAB>psnr_db<TAB>ssim` per entry.
    pub fn to_lines(&self) -> String {
        let mut s = String::new();
        for e in &self.entries {
            writeln!(s, "{}\t{:.4}\t{:.4}", e.image, e.psnr, e.ssim).expect("string write");
        }
        s
    }

    pub fn to_table(&self) -> String {
        let width = self.entries.iter().map(|e| e.image.len()).max().unwrap_or(5).max(7);
        let mut s = String::new();
        writeln!(s, "scale x{}, shave {}", self.scale, self.shave).unwrap();
        writeln!(s, "{:<width$}  {:>9}  {:>7}", "image", "PSNR(dB)", "SSIM").unwrap();
        for e in &self.entries {
            writeln!(s, "{:<width$}  {:>9.4}  {:>7.4}", e.image, e.psnr, e.ssim).unwrap();
        }
        writeln!(s, "{:<width$}  {:>9.4}  {:>7.4}", "average", self.mean_psnr(), self.mean_ssim()).unwrap();
        s
    }
}
