mod common;

use common::{data_dir, desk_corpus};
use mssrnet::imaging::{
    decode_bmp, degrade, encode_bmp, load_image, resize_channel, rgb_to_y, rgb_to_ycbcr, save_image, ycbcr_to_rgb,
    ColorSpace, ImagePlane,
};

fn pattern(w: usize, h: usize) -> Vec<f64> {
    (0..h).flat_map(|y| (0..w).map(move |x| ((x * 7 + y * 13) % 17) as f64 / 16.0)).collect()
}

/// Interior samples from an independent bicubic implementation (PIL, float
/// mode, which uses the same a = -0.5 kernel and pixel-centre mapping).
/// Only pixels whose whole support lies inside the image are frozen, as
/// border handling differs.
#[test]
fn bicubic_matches_reference_interior() {
    #[rustfmt::skip]
    let cases: [(&str, (usize, usize), (usize, usize), &[(usize, usize, f64)]); 4] = [
        ("up2", (12, 10), (24, 20),
         &[(4, 4, 0.5096397), (7, 5, 0.7589874), (10, 6, 0.5096397), (13, 7, 0.7589874), (16, 8, 0.5096397),
           (19, 9, 0.7589874), (6, 11, 0.2941856), (9, 12, 0.3946381), (12, 13, 0.2941856), (15, 14, 0.3946381)]),
        ("up3", (12, 10), (36, 30),
         &[(6, 6, 0.5442387), (25, 7, 0.875), (20, 9, 0.4543038), (15, 11, 0.4504458), (10, 13, 0.3125),
           (29, 14, 0.7292524), (24, 16, 0.2939815), (19, 18, 0.06712963), (14, 20, 0.2250514), (9, 22, 0.5185185)]),
        ("up4", (12, 10), (48, 40),
         &[(8, 8, 0.5537261), (20, 10, 0.4868152), (32, 12, 0.6113045), (12, 15, 0.3954175), (24, 17, 0.3746857),
           (36, 19, 0.5939166), (16, 22, 0.2890415), (28, 24, 0.3775239), (8, 27, 0.2364473), (20, 29, 0.2444015)]),
        ("down2", (24, 20), (12, 10),
         &[(2, 2, 0.5359564), (6, 2, 0.4384108), (2, 3, 0.4182625), (6, 3, 0.5817375), (2, 4, 0.5615892),
           (6, 4, 0.4640436), (2, 5, 0.5051298), (6, 5, 0.454114), (2, 6, 0.4419422), (6, 6, 0.5493546)]),
    ];
    for (name, (w, h), (ow, oh), expected) in cases {
        let out = resize_channel(&pattern(w, h), w, h, ow, oh);
        for &(x, y, want) in expected {
            let got = out[y * ow + x];
            assert!((got - want).abs() < 1e-6, "{name} ({x},{y}): {got} vs {want}");
        }
    }
}

#[test]
fn corpus_loads_with_known_pixels() {
    let dir = data_dir().join("desk-corpus");
    // (file, x, y, rgb) read with an independent decoder.
    let probes = [
        ("astronaut_0.bmp", 0, 0, [167, 164, 146]),
        ("astronaut_0.bmp", 143, 0, [147, 130, 96]),
        ("astronaut_0.bmp", 0, 143, [173, 158, 150]),
        ("coffee_1.bmp", 70, 31, [187, 48, 16]),
        ("camera_0.png", 0, 143, [28, 28, 28]),
        ("moon_1.png", 70, 31, [110, 110, 110]),
    ];
    for (file, x, y, rgb) in probes {
        let img = load_image(dir.join(file)).unwrap();
        assert_eq!((img.width(), img.height(), img.space()), (144, 144, ColorSpace::Rgb));
        for (c, &v) in rgb.iter().enumerate() {
            assert_eq!((img.get(c, x, y) * 255.0).round() as u8, v, "{file} ({x},{y}) channel {c}");
        }
    }
    let all = desk_corpus();
    assert_eq!(all.len(), 24);
    assert!(all.iter().all(|(_, img)| (img.width(), img.height()) == (144, 144)));
}

fn interleaved_u8(img: &ImagePlane) -> Vec<u8> {
    let n = img.width() * img.height();
    (0..n).flat_map(|i| (0..3).map(move |c| (img.channel(c)[i] * 255.0).round() as u8)).collect()
}

#[test]
fn bmp_roundtrip_is_lossless_on_corpus() {
    for (name, img) in desk_corpus() {
        let bytes = encode_bmp(img.width(), img.height(), &interleaved_u8(&img));
        let back = decode_bmp(&bytes).unwrap();
        assert_eq!(back, img, "{name}");
    }
}

#[test]
fn save_and_reload_both_formats() {
    let dir = tempfile::tempdir().unwrap();
    let (_, img) = desk_corpus().swap_remove(3);
    for ext in ["png", "bmp"] {
        let path = dir.path().join(format!("x.{ext}"));
        save_image(&img, &path).unwrap();
        assert_eq!(load_image(&path).unwrap(), img, "{ext}");
    }
    // Luminance is written as gray and reloads as equal RGB channels.
    let y = rgb_to_y(&img);
    let path = dir.path().join("y.png");
    save_image(&y, &path).unwrap();
    let back = load_image(&path).unwrap();
    for c in 0..3 {
        for (a, b) in back.channel(c).iter().zip(y.samples()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }
}

#[test]
fn color_roundtrip_on_corpus() {
    for (name, img) in desk_corpus() {
        let back = ycbcr_to_rgb(&rgb_to_ycbcr(&img));
        let worst = img.samples().iter().zip(back.samples()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-6, "{name}: {worst}");
    }
}

#[test]
fn degradation_is_exactly_aligned() {
    for (name, img) in desk_corpus().into_iter().take(6) {
        for scale in 2..=4 {
            let d = degrade(&rgb_to_y(&img), scale).unwrap();
            assert_eq!(d.hr.width() % scale, 0);
            for ((h, l), r) in d.hr.samples().iter().zip(d.lr_interp.samples()).zip(&d.residual.data) {
                assert!((l + r - h).abs() < 1e-12, "{name} x{scale}");
            }
            assert!(d.residual.energy() > 0.0);
        }
    }
}
