//! Pixel and geometric operations on [`RasterImage`].
//!
//! Magnitude `M` in `[0, 30]` maps to per-op strength through `m = M / 30`:
//!
//! | op            | parameter                                   | signed |
//! |---------------|---------------------------------------------|--------|
//! | AutoContrast  | none                                        |        |
//! | Brightness    | factor `1 ± 0.9 m`, scale towards black     | yes    |
//! | Color         | factor `1 ± 0.9 m`, blend with grayscale    | yes    |
//! | Contrast      | factor `1 ± 0.9 m`, blend with mean gray    | yes    |
//! | Cutout        | square side `round(m · min(H, W) / 2)`      |        |
//! | Equalize      | none                                        |        |
//! | Invert        | none                                        |        |
//! | Sharpness     | factor `1 ± 0.9 m`, blend with 3x3 smooth   | yes    |
//! | Posterize     | keep `8 - floor(4 m)` bits                  |        |
//! | Solarize      | invert pixels above `1 - m`                 |        |
//! | Rotate        | `30 m` degrees                              | yes    |
//! | ShearX/Y      | shear coefficient `0.3 m`                   | yes    |
//! | TranslateX/Y  | `0.45 m` of the image width/height          | yes    |
//!
//! Geometric ops resample bilinearly about the image centre and fill with 0.5.

use rand::Rng;

use super::{AugmentOp, RasterImage};
use crate::seed;

pub const MAX_MAGNITUDE: u32 = 30;
const FILL: f64 = 0.5;

fn strength(magnitude: u32) -> f64 {
    magnitude.min(MAX_MAGNITUDE) as f64 / MAX_MAGNITUDE as f64
}

fn quantize(v: f64) -> usize {
    (v.clamp(0.0, 1.0) * 255.0).round() as usize
}

/// Applies `op` at `magnitude`. Random choices (sign, cutout position) come from `seed`.
pub fn apply_op(img: &RasterImage, op: AugmentOp, magnitude: u32, seed: u64) -> RasterImage {
    let m = strength(magnitude);
    let mut rng = seed::rng(seed);
    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
    let factor = 1.0 + sign * 0.9 * m;
    let mut out = match op {
        AugmentOp::AutoContrast => auto_contrast(img),
        AugmentOp::Brightness => img.map_pixels(|v| v * factor),
        AugmentOp::Color => color(img, factor),
        AugmentOp::Contrast => contrast(img, factor),
        AugmentOp::Cutout => {
            let side = (m * img.height.min(img.width) as f64 / 2.0).round() as usize;
            cutout(img, side, &mut rng)
        }
        AugmentOp::Equalize => equalize(img),
        AugmentOp::Invert => img.map_pixels(|v| 1.0 - v),
        AugmentOp::Sharpness => sharpness(img, factor),
        AugmentOp::Posterize => {
            let bits = 8 - (4.0 * m).floor() as u32;
            let mask: usize = (0xFFusize << (8 - bits)) & 0xFF;
            img.map_pixels(|v| (quantize(v) & mask) as f64 / 255.0)
        }
        AugmentOp::Solarize => {
            let threshold = 1.0 - m;
            img.map_pixels(|v| if v > threshold { 1.0 - v } else { v })
        }
        AugmentOp::Rotate => {
            let theta = (sign * 30.0 * m).to_radians();
            let (s, c) = theta.sin_cos();
            // Inverse rotation maps output coordinates back into the source.
            affine(img, [c, s, -s, c], [0.0, 0.0])
        }
        AugmentOp::ShearX => affine(img, [1.0, sign * 0.3 * m, 0.0, 1.0], [0.0, 0.0]),
        AugmentOp::ShearY => affine(img, [1.0, 0.0, sign * 0.3 * m, 1.0], [0.0, 0.0]),
        AugmentOp::TranslateX => {
            let dx = sign * 0.45 * m * img.width as f64;
            affine(img, [1.0, 0.0, 0.0, 1.0], [-dx, 0.0])
        }
        AugmentOp::TranslateY => {
            let dy = sign * 0.45 * m * img.height as f64;
            affine(img, [1.0, 0.0, 0.0, 1.0], [0.0, -dy])
        }
    };
    out.clamp();
    out
}

/// Per-channel minimum and maximum over the 256-bin quantisation.
fn channel_range(img: &RasterImage, ch: usize) -> (usize, usize) {
    img.channel_values(ch)
        .map(quantize)
        .fold((255, 0), |(lo, hi), q| (lo.min(q), hi.max(q)))
}

fn auto_contrast(img: &RasterImage) -> RasterImage {
    let mut out = img.clone();
    for ch in 0..img.channels {
        let (lo, hi) = channel_range(img, ch);
        if hi <= lo {
            continue;
        }
        let lo = lo as f64 / 255.0;
        let span = (hi as f64 / 255.0) - lo;
        out.map_channel(ch, |v| (v - lo) / span);
    }
    out
}

fn luma(img: &RasterImage, y: usize, x: usize) -> f64 {
    if img.channels == 1 {
        img.get(y, x, 0)
    } else {
        0.299 * img.get(y, x, 0) + 0.587 * img.get(y, x, 1) + 0.114 * img.get(y, x, 2)
    }
}

fn color(img: &RasterImage, factor: f64) -> RasterImage {
    let mut out = img.clone();
    for y in 0..img.height {
        for x in 0..img.width {
            let g = luma(img, y, x);
            for ch in 0..img.channels {
                let v = img.get(y, x, ch);
                out.set(y, x, ch, g + factor * (v - g));
            }
        }
    }
    out
}

fn contrast(img: &RasterImage, factor: f64) -> RasterImage {
    let n = (img.height * img.width) as f64;
    let mut mean = 0.0;
    for y in 0..img.height {
        for x in 0..img.width {
            mean += luma(img, y, x);
        }
    }
    mean /= n;
    img.map_pixels(|v| mean + factor * (v - mean))
}

fn sharpness(img: &RasterImage, factor: f64) -> RasterImage {
    let mut out = img.clone();
    if img.height < 3 || img.width < 3 {
        return out;
    }
    for y in 1..img.height - 1 {
        for x in 1..img.width - 1 {
            for ch in 0..img.channels {
                let mut acc = 0.0;
                for dy in 0..3 {
                    for dx in 0..3 {
                        let w = if dy == 1 && dx == 1 { 5.0 } else { 1.0 };
                        acc += w * img.get(y + dy - 1, x + dx - 1, ch);
                    }
                }
                let smooth = acc / 13.0;
                let v = img.get(y, x, ch);
                out.set(y, x, ch, smooth + factor * (v - smooth));
            }
        }
    }
    out
}

/// Histogram equalisation per channel on 256 bins.
fn equalize(img: &RasterImage) -> RasterImage {
    let mut out = img.clone();
    for ch in 0..img.channels {
        let mut hist = [0usize; 256];
        for v in img.channel_values(ch) {
            hist[quantize(v)] += 1;
        }
        let nonzero: Vec<usize> = hist.iter().copied().filter(|&h| h > 0).collect();
        if nonzero.len() <= 1 {
            continue;
        }
        let total: usize = nonzero.iter().sum();
        let step = (total - nonzero[nonzero.len() - 1]) / 255;
        if step == 0 {
            continue;
        }
        let mut lut = [0usize; 256];
        let mut n = step / 2;
        for (slot, &h) in lut.iter_mut().zip(&hist) {
            *slot = (n / step).min(255);
            n += h;
        }
        out.map_channel(ch, |v| lut[quantize(v)] as f64 / 255.0);
    }
    out
}

fn cutout<R: Rng>(img: &RasterImage, side: usize, rng: &mut R) -> RasterImage {
    let mut out = img.clone();
    if side == 0 {
        return out;
    }
    let cy = rng.random_range(0..img.height) as isize;
    let cx = rng.random_range(0..img.width) as isize;
    let half = (side / 2) as isize;
    let y0 = (cy - half).max(0) as usize;
    let x0 = (cx - half).max(0) as usize;
    let y1 = ((cy - half + side as isize) as usize).min(img.height);
    let x1 = ((cx - half + side as isize) as usize).min(img.width);
    for y in y0..y1 {
        for x in x0..x1 {
            for ch in 0..img.channels {
                out.set(y, x, ch, FILL);
            }
        }
    }
    out
}

/// Resamples with `src = A (dst - centre) + centre + t`, `A = [a, b; c, d]`
/// acting on `(x, y)`.
fn affine(img: &RasterImage, a: [f64; 4], t: [f64; 2]) -> RasterImage {
    let cx = (img.width as f64 - 1.0) / 2.0;
    let cy = (img.height as f64 - 1.0) / 2.0;
    let mut out = img.clone();
    for y in 0..img.height {
        for x in 0..img.width {
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            let sx = a[0] * dx + a[1] * dy + cx + t[0];
            let sy = a[2] * dx + a[3] * dy + cy + t[1];
            for ch in 0..img.channels {
                out.set(y, x, ch, bilinear(img, sx, sy, ch));
            }
        }
    }
    out
}

fn bilinear(img: &RasterImage, sx: f64, sy: f64, ch: usize) -> f64 {
    let x0 = sx.floor();
    let y0 = sy.floor();
    let fx = sx - x0;
    let fy = sy - y0;
    let at = |yy: f64, xx: f64| -> f64 {
        if yy < 0.0 || xx < 0.0 || yy >= img.height as f64 || xx >= img.width as f64 {
            FILL
        } else {
            img.get(yy as usize, xx as usize, ch)
        }
    };
    let mut v = at(y0, x0) * (1.0 - fx) * (1.0 - fy);
    if fx != 0.0 {
        v += at(y0, x0 + 1.0) * fx * (1.0 - fy);
    }
    if fy != 0.0 {
        v += at(y0 + 1.0, x0) * (1.0 - fx) * fy;
    }
    if fx != 0.0 && fy != 0.0 {
        v += at(y0 + 1.0, x0 + 1.0) * fx * fy;
    }
    v
}
