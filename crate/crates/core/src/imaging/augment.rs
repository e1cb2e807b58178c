use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Clip, Frame};
use crate::scalar::Scalar;

/// Training-time augmentation ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub hflip: bool,
    pub crop: bool,
    /// Smallest crop side as a fraction of the frame side.
    pub min_crop_fraction: f64,
    pub max_rotation_deg: f64,
    pub saturation_range: [f64; 2],
    pub max_brightness_delta: f64,
    pub contrast_range: [f64; 2],
    pub max_hue_delta: f64,
}

impl AugmentConfig {
    /// Still-image augmentation used for the full-scale image model.
    pub fn paper_image() -> Self {
        Self {
            hflip: true,
            crop: true,
            min_crop_fraction: 0.8,
            max_rotation_deg: 45.0,
            saturation_range: [0.38, 1.4],
            max_brightness_delta: 0.52,
            contrast_range: [0.34, 1.35],
            max_hue_delta: 0.13,
        }
    }

    /// Horizontal flips only. The desk-scale synthetic cohort carries GA in
    /// physical object size and echogenicity; crop-and-resize rescales the
    /// former and rotation fill shifts the latter.
    pub fn desk() -> Self {
        Self {
            hflip: true,
            ..Self::disabled()
        }
    }

    pub fn disabled() -> Self {
        Self {
            hflip: false,
            crop: false,
            min_crop_fraction: 1.0,
            max_rotation_deg: 0.0,
            saturation_range: [1.0, 1.0],
            max_brightness_delta: 0.0,
            contrast_range: [1.0, 1.0],
            max_hue_delta: 0.0,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.saturation_range[0] <= self.saturation_range[1]
            && self.contrast_range[0] <= self.contrast_range[1]
            && self.max_brightness_delta >= 0.0
            && self.max_hue_delta >= 0.0
            && self.max_rotation_deg >= 0.0
            && (0.0..=1.0).contains(&self.min_crop_fraction)
            && self.min_crop_fraction > 0.0
    }

    /// Draws one parameter set. Disabled or degenerate ranges yield neutral
    /// parameters without consuming randomness for them.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> AugmentParams {
        let uniform = |rng: &mut R, lo: f64, hi: f64| {
            if hi > lo {
                rng.random_range(lo..hi)
            } else {
                lo
            }
        };
        let hflip = self.hflip && rng.random_bool(0.5);
        let crop = if self.crop && self.min_crop_fraction < 1.0 {
            let frac = uniform(rng, self.min_crop_fraction, 1.0);
            Some((frac, rng.random::<f64>(), rng.random::<f64>()))
        } else {
            None
        };
        let rotation_deg = uniform(rng, -self.max_rotation_deg, self.max_rotation_deg);
        AugmentParams {
            hflip,
            crop,
            rotation_deg,
            saturation: uniform(rng, self.saturation_range[0], self.saturation_range[1]),
            contrast: uniform(rng, self.contrast_range[0], self.contrast_range[1]),
            brightness: uniform(rng, -self.max_brightness_delta, self.max_brightness_delta),
            hue: uniform(rng, -self.max_hue_delta, self.max_hue_delta),
        }
    }
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self::paper_image()
    }
}

/// One concrete draw of augmentation parameters, shared by every frame of a
/// clip.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentParams {
    pub hflip: bool,
    /// (side fraction, x position in [0,1), y position in [0,1))
    pub crop: Option<(f64, f64, f64)>,
    pub rotation_deg: f64,
    pub saturation: f64,
    pub contrast: f64,
    pub brightness: f64,
    pub hue: f64,
}

impl AugmentParams {
    pub fn identity() -> Self {
        Self {
            hflip: false,
            crop: None,
            rotation_deg: 0.0,
            saturation: 1.0,
            contrast: 1.0,
            brightness: 0.0,
            hue: 0.0,
        }
    }

    fn photometric_is_neutral(&self) -> bool {
        self.saturation == 1.0 && self.contrast == 1.0 && self.brightness == 0.0 && self.hue == 0.0
    }

    /// Order: flip, crop (resized back), rotation, photometric.
    pub fn apply<T: Scalar>(&self, frame: &Frame<T>) -> Frame<T> {
        let mut out = frame.clone();
        if self.hflip {
            out = hflip(&out);
        }
        if let Some((frac, px, py)) = self.crop {
            out = crop_resize(&out, frac, px, py);
        }
        if self.rotation_deg != 0.0 {
            out = rotate(&out, self.rotation_deg);
        }
        if !self.photometric_is_neutral() {
            photometric(&mut out, self);
        }
        out
    }
}

pub fn augment_frame<T: Scalar, R: Rng + ?Sized>(
    frame: &Frame<T>,
    config: &AugmentConfig,
    rng: &mut R,
) -> Frame<T> {
    config.draw(rng).apply(frame)
}

pub fn augment_clip<T: Scalar, R: Rng + ?Sized>(
    clip: &Clip<T>,
    config: &AugmentConfig,
    rng: &mut R,
) -> Clip<T> {
    let params = config.draw(rng);
    Clip {
        start: clip.start,
        frames: clip.frames.iter().map(|f| params.apply(f)).collect(),
    }
}

fn hflip<T: Scalar>(frame: &Frame<T>) -> Frame<T> {
    let (w, h) = (frame.width(), frame.height());
    let mut out = frame.clone();
    for y in 0..h {
        for x in 0..w {
            out.set(x, y, frame.get(w - 1 - x, y));
        }
    }
    out
}

fn crop_resize<T: Scalar>(frame: &Frame<T>, frac: f64, px: f64, py: f64) -> Frame<T> {
    let (w, h) = (frame.width() as f64, frame.height() as f64);
    let (cw, ch) = (w * frac, h * frac);
    let x0 = (w - cw) * px;
    let y0 = (h - ch) * py;
    let mut out = frame.clone();
    for y in 0..frame.height() {
        let sy = y0 + (y as f64 + 0.5) * frac - 0.5;
        for x in 0..frame.width() {
            let sx = x0 + (x as f64 + 0.5) * frac - 0.5;
            out.set(x, y, frame.sample_bilinear(T::lit(sx), T::lit(sy)));
        }
    }
    out
}

fn rotate<T: Scalar>(frame: &Frame<T>, degrees: f64) -> Frame<T> {
    let (w, h) = (frame.width() as f64, frame.height() as f64);
    let (cx, cy) = (w / 2.0 - 0.5, h / 2.0 - 0.5);
    let (s, c) = degrees.to_radians().sin_cos();
    let mut out = frame.clone();
    for y in 0..frame.height() {
        for x in 0..frame.width() {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            // inverse mapping: rotate output coordinates back into the source
            let sx = c * dx + s * dy + cx;
            let sy = -s * dx + c * dy + cy;
            let v = if sx < -0.5 || sy < -0.5 || sx > w - 0.5 || sy > h - 0.5 {
                T::zero()
            } else {
                frame.sample_bilinear(T::lit(sx), T::lit(sy))
            };
            out.set(x, y, v);
        }
    }
    out
}

/// Gray is replicated to RGB, adjusted, and folded back by luminance.
fn photometric<T: Scalar>(frame: &mut Frame<T>, p: &AugmentParams) {
    let mean = frame.mean().to_f64_lossy();
    for px in frame.pixels_mut() {
        let g = px.to_f64_lossy();
        let mut rgb = [g, g, g];
        if p.saturation != 1.0 || p.hue != 0.0 {
            let (hue, sat, val) = rgb_to_hsv(rgb);
            let hue = (hue + p.hue).rem_euclid(1.0);
            let sat = (sat * p.saturation).clamp(0.0, 1.0);
            rgb = hsv_to_rgb(hue, sat, val);
        }
        if p.contrast != 1.0 {
            for ch in &mut rgb {
                *ch = (*ch - mean) * p.contrast + mean;
            }
        }
        for ch in &mut rgb {
            *ch += p.brightness;
        }
        let gray = 0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2];
        *px = T::lit(gray.clamp(0.0, 1.0));
    }
}

fn rgb_to_hsv([r, g, b]: [f64; 3]) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let sat = if max > 0.0 { delta / max } else { 0.0 };
    let hue = if delta == 0.0 {
        0.0
    } else if max == r {
        ((g - b) / delta).rem_euclid(6.0) / 6.0
    } else if max == g {
        ((b - r) / delta + 2.0) / 6.0
    } else {
        ((r - g) / delta + 4.0) / 6.0
    };
    (hue, sat, max)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    if s == 0.0 {
        return [v, v, v];
    }
    let h6 = h * 6.0;
    let sector = h6.floor();
    let f = h6 - sector;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match sector as i64 % 6 {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}
