use std::fs;
use std::io::{BufWriter, Cursor};
use std::path::Path;

use super::{bmp, ycbcr_to_rgb, ColorSpace, ImagePlane};
use crate::error::{Error, Result};

const PNG_SIGNATURE: [u8; 8] = [137, 80, 78, 71, 13, 10, 26, 10];

fn png_err(e: png::DecodingError) -> Error {
    match e {
        png::DecodingError::IoError(io) => Error::Io(io),
        other => Error::Format(format!("PNG: {other}")),
    }
}

fn decode_png(bytes: &[u8]) -> Result<ImagePlane> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(png_err)?;
    let size = reader.output_buffer_size().ok_or_else(|| Error::Format("PNG too large".into()))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(png_err)?;
    let (w, h) = (info.width as usize, info.height as usize);
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        png::ColorType::Indexed => return Err(Error::Format("unexpanded palette PNG".into())),
    };
    let sample: fn(&[u8], usize) -> f64 = match info.bit_depth {
        png::BitDepth::Eight => |row, i| f64::from(row[i]) / 255.0,
        png::BitDepth::Sixteen => |row, i| f64::from(u16::from_be_bytes([row[2 * i], row[2 * i + 1]])) / 65535.0,
        other => return Err(Error::Format(format!("unsupported PNG bit depth {other:?}"))),
    };
    let n = w * h;
    let mut samples = vec![0.0; 3 * n];
    for y in 0..h {
        let row = &buf[y * info.line_size..(y + 1) * info.line_size];
        for x in 0..w {
            let i = y * w + x;
            for k in 0..3 {
                // Gray replicates; alpha is ignored.
                let src = if channels < 3 { x * channels } else { x * channels + k };
                samples[k * n + i] = sample(row, src);
            }
        }
    }
    ImagePlane::new(w, h, ColorSpace::Rgb, samples)
}

/// Loads a BMP or PNG file as RGB, detecting the format from its magic bytes.
pub fn load_image(path: impl AsRef<Path>) -> Result<ImagePlane> {
    let bytes = fs::read(path.as_ref())?;
    if bytes.starts_with(b"BM") {
        bmp::decode_bmp(&bytes)
    } else if bytes.starts_with(&PNG_SIGNATURE) {
        decode_png(&bytes)
    } else {
        Err(Error::Format(format!("{}: neither BMP nor PNG", path.as_ref().display())))
    }
}

/// `round(s * 255)` after clamping, halves rounded away from zero.
pub(crate) fn quantize(s: f64) -> u8 {
    (s.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes 8-bit BMP or PNG depending on the extension. Luminance images are
/// written as gray; YCbCr is converted to RGB first.
pub fn save_image(img: &ImagePlane, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    let rgb_img;
    let img = if img.space() == ColorSpace::YCbCr {
        rgb_img = ycbcr_to_rgb(img);
        &rgb_img
    } else {
        img
    };
    let (w, h) = (img.width(), img.height());
    let n = w * h;
    let interleaved = |channels: usize| -> Vec<u8> {
        let mut out = Vec::with_capacity(n * channels);
        for i in 0..n {
            for k in 0..channels {
                let c = if img.channel_count() == 1 { 0 } else { k };
                out.push(quantize(img.samples()[c * n + i]));
            }
        }
        out
    };
    match ext.as_deref() {
        Some("bmp") => fs::write(path, bmp::encode_bmp(w, h, &interleaved(3)))?,
        Some("png") => {
            let file = BufWriter::new(fs::File::create(path)?);
            let mut enc = png::Encoder::new(file, w as u32, h as u32);
            let channels = if img.space() == ColorSpace::Y { 1 } else { 3 };
            enc.set_color(if channels == 1 { png::ColorType::Grayscale } else { png::ColorType::Rgb });
            enc.set_depth(png::BitDepth::Eight);
            let enc_err = |e: png::EncodingError| match e {
                png::EncodingError::IoError(io) => Error::Io(io),
                other => Error::Format(format!("PNG: {other}")),
            };
            let mut writer = enc.write_header().map_err(enc_err)?;
            writer.write_image_data(&interleaved(channels)).map_err(enc_err)?;
            writer.finish().map_err(enc_err)?;
        }
        _ => return Err(Error::Argument(format!("{}: extension must be .bmp or .png", path.display()))),
    }
    Ok(())
}
