//! 24-bit uncompressed BMP.

use std::io::{Error as IoError, ErrorKind};

use super::{ColorSpace, ImagePlane};
use crate::error::{Error, Result};

const FILE_HEADER: usize = 14;
const INFO_HEADER: usize = 40;

fn truncated(what: &str) -> Error {
    Error::Io(IoError::new(ErrorKind::UnexpectedEof, format!("truncated BMP: {what}")))
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

fn row_stride(width: usize) -> usize {
    (3 * width + 3) & !3
}

/// Decodes a 24-bit `BI_RGB` bitmap into an RGB plane (`s / 255`).
pub fn decode_bmp(bytes: &[u8]) -> Result<ImagePlane> {
    if bytes.len() < 2 || &bytes[..2] != b"BM" {
        return Err(Error::Format("not a BMP file (bad magic)".into()));
    }
    if bytes.len() < FILE_HEADER + INFO_HEADER {
        return Err(truncated("header"));
    }
    let data_offset = u32_at(bytes, 10) as usize;
    let dib = u32_at(bytes, 14) as usize;
    if dib < INFO_HEADER {
        return Err(Error::Format(format!("unsupported BMP info header of {dib} bytes")));
    }
    let width = u32_at(bytes, 18) as i32;
    let height = u32_at(bytes, 22) as i32;
    let planes = u16_at(bytes, 26);
    let bpp = u16_at(bytes, 28);
    let compression = u32_at(bytes, 30);
    if planes != 1 {
        return Err(Error::Format(format!("BMP with {planes} planes")));
    }
    if bpp != 24 {
        return Err(Error::Format(format!("unsupported BMP bit depth {bpp}, only 24 is supported")));
    }
    if compression != 0 {
        return Err(Error::Format(format!("unsupported BMP compression {compression}")));
    }
    if width <= 0 || height == 0 {
        return Err(Error::Format(format!("invalid BMP dims {width}x{height}")));
    }
    let (w, h) = (width as usize, height.unsigned_abs() as usize);
    let top_down = height < 0;
    let stride = row_stride(w);
    let needed = stride
        .checked_mul(h)
        .and_then(|n| n.checked_add(data_offset))
        .ok_or_else(|| Error::Format("BMP dims overflow".into()))?;
    if bytes.len() < needed {
        return Err(truncated("pixel data"));
    }
    let n = w * h;
    let mut samples = vec![0.0; 3 * n];
    for row in 0..h {
        let y = if top_down { row } else { h - 1 - row };
        let line = &bytes[data_offset + row * stride..data_offset + row * stride + 3 * w];
        for x in 0..w {
            let (b, g, r) = (line[3 * x], line[3 * x + 1], line[3 * x + 2]);
            let i = y * w + x;
            samples[i] = f64::from(r) / 255.0;
            samples[n + i] = f64::from(g) / 255.0;
            samples[2 * n + i] = f64::from(b) / 255.0;
        }
    }
    ImagePlane::new(w, h, ColorSpace::Rgb, samples)
}

/// Encodes 8-bit RGB bytes (`rgb[3 * (y * w + x) + k]`) as a bottom-up 24-bit BMP.
pub fn encode_bmp(width: usize, height: usize, rgb: &[u8]) -> Vec<u8> {
    assert_eq!(rgb.len(), 3 * width * height);
    let stride = row_stride(width);
    let image_size = stride * height;
    let file_size = FILE_HEADER + INFO_HEADER + image_size;
    let mut out = Vec::with_capacity(file_size);
    out.extend_from_slice(b"BM");
    out.extend_from_slice(&(file_size as u32).to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    out.extend_from_slice(&((FILE_HEADER + INFO_HEADER) as u32).to_le_bytes());
    out.extend_from_slice(&(INFO_HEADER as u32).to_le_bytes());
    out.extend_from_slice(&(width as i32).to_le_bytes());
    out.extend_from_slice(&(height as i32).to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&24u16.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    out.extend_from_slice(&(image_size as u32).to_le_bytes());
    // 72 dpi.
    out.extend_from_slice(&2835i32.to_le_bytes());
    out.extend_from_slice(&2835i32.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    for y in (0..height).rev() {
        let start = out.len();
        for px in rgb[3 * y * width..3 * (y + 1) * width].chunks(3) {
            out.extend_from_slice(&[px[2], px[1], px[0]]);
        }
        out.resize(start + stride, 0);
    }
    out
}
