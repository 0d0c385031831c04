//! Random geometric and intensity augmentation of 2-D slices.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{preprocess::zscore, DataError, Slice};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineConfig {
    pub probability: f64,
    /// Rotation drawn from `±rotation_deg`.
    pub rotation_deg: f64,
    pub scale: (f64, f64),
    /// Translation drawn from `±shift_px` per axis.
    pub shift_px: f64,
    pub shear_deg: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElasticConfig {
    pub probability: f64,
    /// Spacing of the random displacement grid, pixels.
    pub sigma_px: f64,
    /// Displacement magnitude range, pixels.
    pub alpha_px: (f64, f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SharpenConfig {
    pub probability: f64,
    /// Unsharp-mask amount range.
    pub amount: (f64, f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub affine: AffineConfig,
    pub elastic: ElasticConfig,
    pub sharpen: SharpenConfig,
    /// Probability of re-normalizing the slice and clipping to `±clip_sigma`.
    pub contrast_probability: f64,
    pub clip_sigma: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            affine: AffineConfig {
                probability: 0.5,
                rotation_deg: 15.0,
                scale: (0.9, 1.1),
                shift_px: 10.0,
                shear_deg: 5.0,
            },
            elastic: ElasticConfig { probability: 0.3, sigma_px: 10.0, alpha_px: (0.0, 20.0) },
            sharpen: SharpenConfig { probability: 0.3, amount: (0.0, 0.5) },
            contrast_probability: 0.5,
            clip_sigma: 4.0,
        }
    }
}

impl AugmentConfig {
    /// Every transform disabled.
    pub fn none() -> Self {
        let mut c = Self::default();
        c.affine.probability = 0.0;
        c.elastic.probability = 0.0;
        c.sharpen.probability = 0.0;
        c.contrast_probability = 0.0;
        c
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: &str| Err(DataError::InvalidAugment(m.to_string()));
        let probs =
            [self.affine.probability, self.elastic.probability, self.sharpen.probability, self.contrast_probability];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return bad("probabilities must lie in [0, 1]");
        }
        let ordered = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo <= hi;
        if !ordered(self.affine.scale) || self.affine.scale.0 <= 0.0 {
            return bad("affine scale range must be positive and ordered");
        }
        if !ordered(self.elastic.alpha_px) || self.elastic.alpha_px.0 < 0.0 {
            return bad("elastic alpha range must be non-negative and ordered");
        }
        if !ordered(self.sharpen.amount) {
            return bad("sharpen amount range must be ordered");
        }
        let finite = [self.affine.rotation_deg, self.affine.shift_px, self.affine.shear_deg, self.clip_sigma];
        if finite.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return bad("affine extents and clip_sigma must be finite and non-negative");
        }
        if !(self.elastic.sigma_px.is_finite() && self.elastic.sigma_px > 0.0) {
            return bad("elastic sigma must be positive");
        }
        Ok(())
    }
}

/// One concrete affine transform about the slice center.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineParams {
    pub rotation_deg: f64,
    pub scale: f64,
    /// `(rows, cols)` translation in pixels.
    pub shift: (f64, f64),
    pub shear_deg: f64,
}

impl AffineParams {
    pub fn rotation(deg: f64) -> Self {
        Self { rotation_deg: deg, scale: 1.0, shift: (0.0, 0.0), shear_deg: 0.0 }
    }

    /// Inverse of the linear part, mapping output offsets to input offsets,
    /// as `[[a, b], [c, d]]` acting on `(x, y)`.
    fn inverse(&self) -> [f64; 4] {
        let (s, c) = self.rotation_deg.to_radians().sin_cos();
        let k = self.shear_deg.to_radians().tan();
        // Forward: R · Shear · Scale.
        let m = [c * self.scale, (c * k - s) * self.scale, s * self.scale, (s * k + c) * self.scale];
        let det = m[0] * m[3] - m[1] * m[2];
        [m[3] / det, -m[1] / det, -m[2] / det, m[0] / det]
    }
}

/// Dense sampling field: output pixel `p` reads input coordinate `map(p)`.
fn warp(slice: &Slice, map: impl Fn(f64, f64) -> (f64, f64)) -> Slice {
    let (h, w) = (slice.h, slice.w);
    let fill = slice.image.iter().copied().fold(f32::INFINITY, f32::min);
    let mut image = Vec::with_capacity(h * w);
    let mut label = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let (sy, sx) = map(y as f64, x as f64);
            image.push(sample_bilinear(&slice.image, h, w, sy, sx).unwrap_or(fill));
            let (ny, nx) = (sy.round(), sx.round());
            let inside = ny >= 0.0 && nx >= 0.0 && ny < h as f64 && nx < w as f64;
            label.push(if inside { slice.label[ny as usize * w + nx as usize] } else { 0 });
        }
    }
    Slice { image, label, ..slice.clone() }
}

fn sample_bilinear(plane: &[f32], h: usize, w: usize, y: f64, x: f64) -> Option<f32> {
    if !(y > -0.5 && x > -0.5 && y < h as f64 - 0.5 && x < w as f64 - 0.5) {
        return None;
    }
    let y = y.clamp(0.0, (h - 1) as f64);
    let x = x.clamp(0.0, (w - 1) as f64);
    let (y0, x0) = (y.floor() as usize, x.floor() as usize);
    let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
    let (fy, fx) = ((y - y0 as f64) as f32, (x - x0 as f64) as f32);
    let at = |r: usize, c: usize| plane[r * w + c];
    let top = at(y0, x0) + fx * (at(y0, x1) - at(y0, x0));
    let bot = at(y1, x0) + fx * (at(y1, x1) - at(y1, x0));
    Some(top + fy * (bot - top))
}

/// Applies `p` to image (bilinear) and label (nearest neighbor).
pub fn apply_affine(slice: &Slice, p: &AffineParams) -> Slice {
    let inv = p.inverse();
    let cy = (slice.h as f64 - 1.0) / 2.0;
    let cx = (slice.w as f64 - 1.0) / 2.0;
    warp(slice, |y, x| {
        let (dx, dy) = (x - cx - p.shift.1, y - cy - p.shift.0);
        (cy + inv[2] * dx + inv[3] * dy, cx + inv[0] * dx + inv[1] * dy)
    })
}

/// `[1, 2, 1] / 4` smoothing along both axes, edges clamped.
fn smooth(plane: &[f64], h: usize, w: usize) -> Vec<f64> {
    let mut tmp = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let l = plane[y * w + x.saturating_sub(1)];
            let r = plane[y * w + (x + 1).min(w - 1)];
            tmp[y * w + x] = 0.25 * l + 0.5 * plane[y * w + x] + 0.25 * r;
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let u = tmp[y.saturating_sub(1) * w + x];
            let d = tmp[(y + 1).min(h - 1) * w + x];
            out[y * w + x] = 0.25 * u + 0.5 * tmp[y * w + x] + 0.25 * d;
        }
    }
    out
}

fn elastic(slice: &Slice, sigma: f64, alpha: f64, rng: &mut ChaCha8Rng) -> Slice {
    let gh = (slice.h as f64 / sigma).ceil() as usize + 2;
    let gw = (slice.w as f64 / sigma).ceil() as usize + 2;
    let mut field = || {
        let raw: Vec<f64> = (0..gh * gw).map(|_| StandardNormal.sample(&mut *rng)).collect();
        smooth(&raw, gh, gw).into_iter().map(|v| v * alpha).collect::<Vec<f64>>()
    };
    let (dy, dx) = (field(), field());
    let lerp = |g: &[f64], y: f64, x: f64| {
        let (gy, gx) = (y / sigma, x / sigma);
        let (y0, x0) = (gy.floor() as usize, gx.floor() as usize);
        let (fy, fx) = (gy - y0 as f64, gx - x0 as f64);
        let at = |r: usize, c: usize| g[r * gw + c];
        let top = at(y0, x0) + fx * (at(y0, x0 + 1) - at(y0, x0));
        let bot = at(y0 + 1, x0) + fx * (at(y0 + 1, x0 + 1) - at(y0 + 1, x0));
        top + fy * (bot - top)
    };
    warp(slice, |y, x| (y + lerp(&dy, y, x), x + lerp(&dx, y, x)))
}

fn sharpen(image: &mut [f32], h: usize, w: usize, amount: f64) {
    let plane: Vec<f64> = image.iter().map(|&v| f64::from(v)).collect();
    let blurred = smooth(&plane, h, w);
    for ((v, &p), &b) in image.iter_mut().zip(&plane).zip(&blurred) {
        *v = (p + amount * (p - b)) as f32;
    }
}

fn draw(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo < hi {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

/// Deterministic in `(slice, cfg, seed)`. Geometric transforms move image
/// and label together; intensity transforms touch only the image.
pub fn augment(slice: &Slice, cfg: &AugmentConfig, seed: u64) -> Slice {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = slice.clone();
    if rng.gen_bool(cfg.affine.probability) {
        let a = &cfg.affine;
        let p = AffineParams {
            rotation_deg: draw(&mut rng, (-a.rotation_deg, a.rotation_deg)),
            scale: draw(&mut rng, a.scale),
            shift: (draw(&mut rng, (-a.shift_px, a.shift_px)), draw(&mut rng, (-a.shift_px, a.shift_px))),
            shear_deg: draw(&mut rng, (-a.shear_deg, a.shear_deg)),
        };
        out = apply_affine(&out, &p);
    }
    if rng.gen_bool(cfg.elastic.probability) {
        let alpha = draw(&mut rng, cfg.elastic.alpha_px);
        out = elastic(&out, cfg.elastic.sigma_px, alpha, &mut rng);
    }
    if rng.gen_bool(cfg.sharpen.probability) {
        let amount = draw(&mut rng, cfg.sharpen.amount);
        sharpen(&mut out.image, out.h, out.w, amount);
    }
    if rng.gen_bool(cfg.contrast_probability) {
        zscore(&mut out.image);
        let c = cfg.clip_sigma as f32;
        out.image.iter_mut().for_each(|v| *v = v.clamp(-c, c));
    }
    out
}
