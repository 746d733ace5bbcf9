#![allow(dead_code)]

use std::path::{Path, PathBuf};

use mssrnet::cli::{holdout_indices, list_images, load_named};
use mssrnet::imaging::ImagePlane;
use mssrnet::nn::ConvParams;
use mssrnet::{Scalar, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor<T: Scalar>(dims: [usize; 4], rng: &mut impl Rng) -> Tensor<T> {
    let n = dims.iter().product();
    let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::from_f64_slice(dims, &v).unwrap()
}

pub fn random_conv<T: Scalar>(c_in: usize, c_out: usize, dilation: usize, rng: &mut impl Rng) -> ConvParams<T> {
    let weight = random_tensor([c_out, c_in, 3, 3], rng);
    let bias = (0..c_out).map(|_| T::from_f64(rng.gen_range(-1.0..1.0))).collect();
    ConvParams::new(weight, bias, dilation, dilation).unwrap()
}

/// Literal convolution sum: `out(p) = b + Σ_{s + l·t = p} F(s) k(t)` over
/// every input site `s` and tap `t ∈ {-1,0,1}²`, in f64. Stored taps are
/// the reflected kernel, `k(t) = w[1 - t]`, which makes the layer a
/// cross-correlation with `w`. Out-of-range sites contribute zero.
pub fn naive_conv<T: Scalar>(input: &Tensor<T>, p: &ConvParams<T>) -> Vec<f64> {
    let [n, c_in, h, w] = input.dims();
    let c_out = p.out_channels();
    let l = p.dilation as isize;
    let pad = p.padding as isize;
    let oh = h as isize + 2 * pad - 2 * l;
    let ow = w as isize + 2 * pad - 2 * l;
    let mut out = Vec::new();
    for b in 0..n {
        for o in 0..c_out {
            for py in 0..oh {
                for px in 0..ow {
                    // Output (py, px) is centred on padded input (py + l, px + l).
                    let (cy, cx) = (py + l - pad, px + l - pad);
                    let mut acc = p.bias[o].as_f64();
                    for c in 0..c_in {
                        for sy in 0..h as isize {
                            for sx in 0..w as isize {
                                for ty in -1isize..=1 {
                                    for tx in -1isize..=1 {
                                        if sy + l * ty == cy && sx + l * tx == cx {
                                            let k = p.weight.get(o, c, (1 - ty) as usize, (1 - tx) as usize);
                                            acc += input.get(b, c, sy as usize, sx as usize).as_f64() * k.as_f64();
                                        }
                                    }
                                }
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

pub fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data")
}

/// The bundled 24-image lossless corpus.
pub fn desk_corpus() -> Vec<(String, ImagePlane)> {
    load_named(&list_images(&data_dir().join("desk-corpus")).unwrap()).unwrap()
}

/// Splits named images into (train, holdout) with the CLI's selection rule.
pub fn split(images: Vec<(String, ImagePlane)>, fraction: f64) -> (Vec<(String, ImagePlane)>, Vec<(String, ImagePlane)>) {
    let held = holdout_indices(images.len(), fraction);
    let (mut train, mut holdout) = (Vec::new(), Vec::new());
    for (i, img) in images.into_iter().enumerate() {
        if held.contains(&i) {
            holdout.push(img);
        } else {
            train.push(img);
        }
    }
    (train, holdout)
}
