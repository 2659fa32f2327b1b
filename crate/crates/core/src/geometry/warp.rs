//! Image warping by inverse mapping with bilinear interpolation.

use image::GrayImage;

use super::{GeometryError, Homography};

/// Warped image plus a per-pixel validity mask (255 = valid, 0 = sampled
/// outside the source or mapped to infinity).
#[derive(Debug, Clone)]
pub struct WarpOutput {
    pub image: GrayImage,
    pub mask: GrayImage,
}

impl WarpOutput {
    pub fn is_valid(&self, x: u32, y: u32) -> bool {
        self.mask.get_pixel(x, y).0[0] != 0
    }
}

/// Warps `img` by `h`: each output pixel samples the source at `H⁻¹·pixel`
/// with bilinear interpolation. In pipeline terms `h` maps source pixels to
/// output pixels, so warping a query image by the query→reference homography
/// resamples it into the reference frame.
///
/// Out-of-bounds samples produce value 0 and clear the validity mask.
pub fn warp_image(
    img: &GrayImage,
    h: &Homography,
    out_size: (u32, u32),
) -> Result<WarpOutput, GeometryError> {
    let inv = h.inverse()?;
    let m = *inv.matrix();
    let (out_w, out_h) = out_size;
    let (src_w, src_h) = img.dimensions();
    let mut out = GrayImage::new(out_w, out_h);
    let mut mask = GrayImage::new(out_w, out_h);

    for y in 0..out_h {
        for x in 0..out_w {
            let (xf, yf) = (x as f64, y as f64);
            let w = m[(2, 0)] * xf + m[(2, 1)] * yf + m[(2, 2)];
            if w.abs() < 1e-12 {
                continue; // at infinity: invalid
            }
            let u = (m[(0, 0)] * xf + m[(0, 1)] * yf + m[(0, 2)]) / w;
            let v = (m[(1, 0)] * xf + m[(1, 1)] * yf + m[(1, 2)]) / w;
            if let Some(value) = sample_bilinear(img, src_w, src_h, u, v) {
                out.put_pixel(x, y, image::Luma([value]));
                mask.put_pixel(x, y, image::Luma([255]));
            }
        }
    }
    Ok(WarpOutput { image: out, mask })
}

fn sample_bilinear(img: &GrayImage, w: u32, h: u32, u: f64, v: f64) -> Option<u8> {
    if !(u.is_finite() && v.is_finite()) {
        return None;
    }
    if u < 0.0 || v < 0.0 || u > (w - 1) as f64 || v > (h - 1) as f64 {
        return None;
    }
    let x0 = u.floor() as u32;
    let y0 = v.floor() as u32;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fu = u - x0 as f64;
    let fv = v - y0 as f64;

    let p00 = img.get_pixel(x0, y0).0[0] as f64;
    let p10 = img.get_pixel(x1, y0).0[0] as f64;
    let p01 = img.get_pixel(x0, y1).0[0] as f64;
    let p11 = img.get_pixel(x1, y1).0[0] as f64;

    let top = p00 * (1.0 - fu) + p10 * fu;
    let bottom = p01 * (1.0 - fu) + p11 * fu;
    let value = top * (1.0 - fv) + bottom * fv;
    Some((value + 0.5).floor().clamp(0.0, 255.0) as u8)
}
