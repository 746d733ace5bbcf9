//! Inference and evaluation on whole images.

use rayon::prelude::*;

use crate::error::Result;
use crate::imaging::{bicubic_resize, degrade, rgb_to_y, rgb_to_ycbcr, ycbcr_to_rgb, ColorSpace, ImagePlane};
use crate::metrics::{psnr, ssim, EvalEntry, EvalReport};
use crate::model::Mssrnet;
use crate::tensor::Scalar;

/// `clamp(lr_interp + residual)` for a luminance image. The residual is
/// computed in `T`, the addition in `f64`.
pub fn super_resolve_y<T: Scalar>(net: &Mssrnet<T>, lr_interp: &ImagePlane) -> Result<ImagePlane> {
    let residual = net.residual(&lr_interp.to_tensor::<T>())?;
    let samples = lr_interp.samples().iter().zip(residual.data()).map(|(&x, r)| x + r.as_f64()).collect();
    ImagePlane::new(lr_interp.width(), lr_interp.height(), ColorSpace::Y, samples)
}

/// Upscales an RGB (or gray) image by `scale`: every YCbCr channel is
/// bicubic-interpolated, the network refines Y, and the result is merged
/// back to RGB. `net = None` gives the plain bicubic result.
pub fn upscale_rgb<T: Scalar>(net: Option<&Mssrnet<T>>, img: &ImagePlane, scale: usize) -> Result<ImagePlane> {
    let ycc = rgb_to_ycbcr(img);
    let up = bicubic_resize(&ycc, img.width() * scale, img.height() * scale)?;
    let Some(net) = net else {
        return Ok(ycbcr_to_rgb(&up));
    };
    let y = rgb_to_y(&up);
    let refined = super_resolve_y(net, &y)?;
    let merged = ImagePlane::from_channels(
        up.width(),
        up.height(),
        ColorSpace::YCbCr,
        &[refined.samples().to_vec(), up.channel(1).to_vec(), up.channel(2).to_vec()],
    )?;
    Ok(ycbcr_to_rgb(&merged))
}

/// Degrades each HR luminance image by `scale`, reconstructs it with the
/// network (or bicubic only) and scores it with a border shave of `scale`.
pub fn evaluate<T: Scalar>(
    images: &[(String, ImagePlane)],
    scale: usize,
    net: Option<&Mssrnet<T>>,
) -> Result<EvalReport> {
    let entries = images
        .par_iter()
        .map(|(name, img)| {
            let d = degrade(&rgb_to_y(img), scale)?;
            let recon = match net {
                Some(net) => super_resolve_y(net, &d.lr_interp)?,
                None => d.lr_interp.clone(),
            };
            Ok(EvalEntry { image: name.clone(), psnr: psnr(&d.hr, &recon, scale)?, ssim: ssim(&d.hr, &recon, scale)? })
        })
        .collect::<Result<Vec<_>>>()?;
    let report = EvalReport { scale, shave: scale, entries };
    for e in report.excluded() {
        log::warn!("{}: reconstruction is exact, PSNR is infinite and excluded from averages", e.image);
    }
    Ok(report)
}
