//! BT.601 studio-swing RGB <-> YCbCr, on `[0, 1]` samples.

use super::{ColorSpace, ImagePlane};

const OFFSET: [f64; 3] = [16.0, 128.0, 128.0];
const FORWARD: [[f64; 3]; 3] = [
    [65.481, 128.553, 24.966],
    [-37.797, -74.203, 112.0],
    [112.0, -93.786, -18.214],
];

fn inverse(m: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    let cof = |r0: usize, r1: usize, c0: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
    [
        [cof(1, 2, 1, 2) / det, -cof(0, 2, 1, 2) / det, cof(0, 1, 1, 2) / det],
        [-cof(1, 2, 0, 2) / det, cof(0, 2, 0, 2) / det, -cof(0, 1, 0, 2) / det],
        [cof(1, 2, 0, 1) / det, -cof(0, 2, 0, 1) / det, cof(0, 1, 0, 1) / det],
    ]
}

fn ycbcr_of(rgb: [f64; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (k, row) in FORWARD.iter().enumerate() {
        out[k] = (OFFSET[k] + row[0] * rgb[0] + row[1] * rgb[1] + row[2] * rgb[2]) / 255.0;
    }
    out
}

fn convert(img: &ImagePlane, space: ColorSpace, f: impl Fn([f64; 3]) -> [f64; 3]) -> ImagePlane {
    let (a, b, c) = (img.channel(0), img.channel(1), img.channel(2));
    let n = a.len();
    let mut out = vec![0.0; 3 * n];
    for i in 0..n {
        let px = f([a[i], b[i], c[i]]);
        out[i] = px[0];
        out[n + i] = px[1];
        out[2 * n + i] = px[2];
    }
    ImagePlane::new(img.width(), img.height(), space, out).expect("same dims")
}

/// Luminance channel. Grayscale input passes through unchanged.
pub fn rgb_to_y(img: &ImagePlane) -> ImagePlane {
    match img.space() {
        ColorSpace::Y => img.clone(),
        ColorSpace::YCbCr => ImagePlane::new(img.width(), img.height(), ColorSpace::Y, img.channel(0).to_vec())
            .expect("same dims"),
        ColorSpace::Rgb => {
            let (r, g, b) = (img.channel(0), img.channel(1), img.channel(2));
            let row = FORWARD[0];
            let y = (0..r.len()).map(|i| (OFFSET[0] + row[0] * r[i] + row[1] * g[i] + row[2] * b[i]) / 255.0).collect();
            ImagePlane::new(img.width(), img.height(), ColorSpace::Y, y).expect("same dims")
        }
    }
}

pub fn rgb_to_ycbcr(img: &ImagePlane) -> ImagePlane {
    match img.space() {
        ColorSpace::YCbCr => img.clone(),
        ColorSpace::Y => {
            // Gray: Y as stored, neutral chroma.
            let n = img.width() * img.height();
            let mut s = img.samples().to_vec();
            s.resize(3 * n, 128.0 / 255.0);
            ImagePlane::new(img.width(), img.height(), ColorSpace::YCbCr, s).expect("same dims")
        }
        ColorSpace::Rgb => convert(img, ColorSpace::YCbCr, ycbcr_of),
    }
}

/// Exact inverse of [`rgb_to_ycbcr`], clamped into `[0, 1]`.
pub fn ycbcr_to_rgb(img: &ImagePlane) -> ImagePlane {
    match img.space() {
        ColorSpace::Rgb => img.clone(),
        ColorSpace::Y => ycbcr_to_rgb(&rgb_to_ycbcr(img)),
        ColorSpace::YCbCr => {
            let inv = inverse(&FORWARD);
            convert(img, ColorSpace::Rgb, |p| {
                let d = [p[0] * 255.0 - OFFSET[0], p[1] * 255.0 - OFFSET[1], p[2] * 255.0 - OFFSET[2]];
                let mut out = [0.0; 3];
                for (k, row) in inv.iter().enumerate() {
                    out[k] = row[0] * d[0] + row[1] * d[1] + row[2] * d[2];
                }
                out
            })
        }
    }
}
