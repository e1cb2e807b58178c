//! Synthetic ultrasound-like rendering of the standard planes.
//!
//! A frame shows a bright ring (head, abdomen), rod (femur) or filled ellipse
//! (crown-rump) whose physical size follows the fetus' true biometry, on a
//! speckled background whose echogenicity rises with tissue maturity. Frames
//! of lower acquisition quality carry more speckle, a gain error and an
//! off-plane (smaller) cross-section.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::types::{Anatomy, BiometryMeasurements, Device, GA_RANGE_DAYS};
use crate::error::{Error, Result};
use crate::imaging::{Frame, TargetGeometry};
use crate::scalar::Scalar;

/// Acquisition geometry per device; both cover 19.2 x 14.4 cm.
pub fn native_geometry(device: Device) -> TargetGeometry {
    match device {
        Device::GE => TargetGeometry::new(64, 48, 0.3),
        Device::Sonosite => TargetGeometry::new(48, 36, 0.4),
    }
}

/// Background echogenicity for a given GA plus maturity jitter.
pub fn maturity_level(ga_days: f64, offset_days: f64) -> f64 {
    let span = (GA_RANGE_DAYS.1 - GA_RANGE_DAYS.0) as f64;
    let m = ((ga_days + offset_days - GA_RANGE_DAYS.0 as f64) / span).clamp(0.0, 1.0);
    0.12 + 0.5 * m
}

/// Frame as stored on disk: 8-bit pixels plus geometry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawFrame {
    pub width: usize,
    pub height: usize,
    /// bit pattern of the cm/pixel spacing
    spacing_bits: u64,
    pub data: Vec<u8>,
}

impl RawFrame {
    pub fn from_frame<T: Scalar>(frame: &Frame<T>) -> Self {
        Self {
            width: frame.width(),
            height: frame.height(),
            spacing_bits: frame.pixel_spacing().to_bits(),
            data: frame.to_u8(),
        }
    }

    pub fn pixel_spacing(&self) -> f64 {
        f64::from_bits(self.spacing_bits)
    }

    pub fn to_frame<T: Scalar>(&self) -> Result<Frame<T>> {
        Frame::from_u8(self.width, self.height, self.pixel_spacing(), &self.data)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scene {
    pub anatomy: Anatomy,
    pub geometry: TargetGeometry,
    pub device: Device,
    /// Background echogenicity, see [`maturity_level`].
    pub echogenicity: f64,
    /// Acquisition quality in [0, 1]; 1 is the frozen standard plane.
    pub quality: f64,
    /// Object centre relative to the field-of-view centre, cm.
    pub center: (f64, f64),
    /// Object orientation, radians.
    pub angle: f64,
    /// Cross-section shrink factor of an off-plane slice.
    pub section_scale: f64,
    /// Multiplicative gain error.
    pub gain: f64,
}

#[derive(Debug, Clone)]
pub struct RenderedFrame {
    pub frame: Frame<f64>,
    /// Anti-aliased pixel coverage of the object's outer outline.
    pub object_area_px: f64,
}

/// Signed distance (cm, approximate) to the outline plus the wall thickness.
fn shape(anatomy: Anatomy, bio: &BiometryMeasurements) -> Result<(Shape, f64)> {
    let need = |name: &str| {
        bio.get(name).ok_or_else(|| {
            Error::InvalidInput(format!("rendering {} needs `{name}`", anatomy.as_str()))
        })
    };
    Ok(match anatomy {
        Anatomy::Head => {
            let r = need("hc")? / (2.0 * PI);
            (Shape::Ellipse(r * 1.12, r * 0.87), 0.3)
        }
        Anatomy::Abdomen => {
            let r = need("ac")? / (2.0 * PI);
            (Shape::Ellipse(r, r), 0.3)
        }
        Anatomy::Femur => (Shape::Rod(need("fl")? / 2.0, 0.2), 0.0),
        Anatomy::CrownRump => {
            let crl = need("crl")?;
            (Shape::Ellipse(crl / 2.0, crl / 4.5), 0.0)
        }
    })
}

#[derive(Debug, Clone, Copy)]
enum Shape {
    Ellipse(f64, f64),
    /// half length, half thickness
    Rod(f64, f64),
}

impl Shape {
    fn scaled(self, k: f64) -> Self {
        match self {
            Shape::Ellipse(a, b) => Shape::Ellipse(a * k, b * k),
            Shape::Rod(l, t) => Shape::Rod(l * k, t),
        }
    }

    fn distance(self, x: f64, y: f64) -> f64 {
        match self {
            Shape::Ellipse(a, b) => {
                let r = ((x / a).powi(2) + (y / b).powi(2)).sqrt();
                // first-order distance to the ellipse outline
                let gx = x / (a * a);
                let gy = y / (b * b);
                let g = (gx * gx + gy * gy).sqrt().max(1e-12);
                (r * r - 1.0) / (2.0 * g)
            }
            Shape::Rod(l, t) => {
                let px = (x.abs() - l).max(0.0);
                (px * px + y * y).sqrt() - t
            }
        }
    }
}

/// Renders one frame of `scene` for a fetus with the given true biometry.
pub fn render_frame<R: Rng + ?Sized>(
    scene: &Scene,
    biometry: &BiometryMeasurements,
    rng: &mut R,
) -> Result<RenderedFrame> {
    let (outline, wall) = shape(scene.anatomy, biometry)?;
    let outline = outline.scaled(scene.section_scale);
    let g = scene.geometry;
    let px = g.pixel_spacing;
    let (cos, sin) = (scene.angle.cos(), scene.angle.sin());
    let b = scene.echogenicity;
    let speckle = 0.18
        + 0.4 * (1.0 - scene.quality)
        + if scene.device == Device::Sonosite { 0.04 } else { 0.0 };
    let bright = (b + 0.38).min(0.97);
    let mut pixels = Vec::with_capacity(g.width * g.height);
    let mut area = 0.0;
    for iy in 0..g.height {
        for ix in 0..g.width {
            let wx = (ix as f64 + 0.5 - g.width as f64 / 2.0) * px - scene.center.0;
            let wy = (iy as f64 + 0.5 - g.height as f64 / 2.0) * px - scene.center.1;
            let x = cos * wx + sin * wy;
            let y = -sin * wx + cos * wy;
            let d = outline.distance(x, y);
            let inside = (0.5 - d / px).clamp(0.0, 1.0);
            area += inside;
            let base = if wall > 0.0 {
                let in_wall = (0.5 - (d.abs() - wall / 2.0) / px).clamp(0.0, 1.0);
                let interior = 0.55 * b;
                let fill = b + (interior - b) * inside;
                fill + (bright - fill) * in_wall
            } else {
                b + (bright - b) * inside
            };
            let n: f64 = rng.sample(StandardNormal);
            pixels.push((base * scene.gain * (1.0 + speckle * n)).clamp(0.0, 1.0));
        }
    }
    Ok(RenderedFrame {
        frame: Frame::new(g.width, g.height, px, pixels)?,
        object_area_px: area,
    })
}

/// Scene parameters for a still image or for every frame of a fly-to video.
/// Video quality ramps up towards the final, standard-plane frame.
pub fn scenes<R: Rng + ?Sized>(
    anatomy: Anatomy,
    device: Device,
    echogenicity: f64,
    n_frames: Option<usize>,
    rng: &mut R,
) -> Vec<Scene> {
    let geometry = native_geometry(device);
    let center = (rng.random_range(-1.5..1.5), rng.random_range(-1.0..1.0));
    let angle = rng.random_range(0.0..PI);
    match n_frames {
        None => {
            let gain = 1.0 + 0.01 * rng.sample::<f64, _>(StandardNormal);
            vec![Scene {
                anatomy,
                geometry,
                device,
                echogenicity,
                quality: 1.0,
                center,
                angle,
                section_scale: 1.0,
                gain,
            }]
        }
        Some(n) => {
            let q0: f64 = rng.random_range(0.05..0.5);
            let drift = (rng.random_range(-2.0..2.0), rng.random_range(-1.5..1.5));
            let gain_walk: f64 = rng.sample(StandardNormal);
            (0..n)
                .map(|i| {
                    let s = if n > 1 { i as f64 / (n - 1) as f64 } else { 1.0 };
                    let q = q0 + (1.0 - q0) * s * s;
                    let off = 1.0 - q;
                    let jitter: f64 = rng.sample(StandardNormal);
                    Scene {
                        anatomy,
                        geometry,
                        device,
                        echogenicity,
                        quality: q,
                        center: (center.0 + off * drift.0, center.1 + off * drift.1),
                        angle: angle + off * 0.6,
                        section_scale: 0.55 + 0.45 * q,
                        gain: 1.0 + off * (0.03 * gain_walk + 0.02 * jitter),
                    }
                })
                .collect()
        }
    }
}
