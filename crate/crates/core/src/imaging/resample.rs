use serde::{Deserialize, Serialize};

use super::Frame;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Output geometry of the physical-scale resampler.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetGeometry {
    pub width: usize,
    pub height: usize,
    /// cm/pixel
    pub pixel_spacing: f64,
}

impl TargetGeometry {
    pub const fn new(width: usize, height: usize, pixel_spacing: f64) -> Self {
        Self {
            width,
            height,
            pixel_spacing,
        }
    }
}

/// Rescales `frame` so that one output pixel covers `target.pixel_spacing`
/// centimetres, then centre-crops or zero-pads the result to the target
/// dimensions.
///
/// The content is resized by `frame.pixel_spacing / target.pixel_spacing`
/// with bilinear interpolation at pixel centres.
pub fn resample_to_physical_scale<T: Scalar>(
    frame: &Frame<T>,
    target: &TargetGeometry,
) -> Result<Frame<T>> {
    if !(target.pixel_spacing > 0.0 && target.pixel_spacing.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "target pixel spacing must be positive, got {}",
            target.pixel_spacing
        )));
    }
    if target.width == 0 || target.height == 0 {
        return Err(Error::InvalidInput("target dimensions must be positive".into()));
    }
    let scale = frame.pixel_spacing() / target.pixel_spacing;
    let content_w = ((frame.width() as f64 * scale).round() as usize).max(1);
    let content_h = ((frame.height() as f64 * scale).round() as usize).max(1);
    let off_x = (target.width as i64 - content_w as i64).div_euclid(2);
    let off_y = (target.height as i64 - content_h as i64).div_euclid(2);
    // exact per-axis factors so that identical geometry maps pixel centres onto
    // themselves
    let sx = T::lit(frame.width() as f64 / content_w as f64);
    let sy = T::lit(frame.height() as f64 / content_h as f64);
    let half = T::lit(0.5);

    let mut out = vec![T::zero(); target.width * target.height];
    for oy in 0..target.height {
        let cy = oy as i64 - off_y;
        if cy < 0 || cy >= content_h as i64 {
            continue;
        }
        let src_y = (T::from_usize_lossy(cy as usize) + half) * sy - half;
        for ox in 0..target.width {
            let cx = ox as i64 - off_x;
            if cx < 0 || cx >= content_w as i64 {
                continue;
            }
            let src_x = (T::from_usize_lossy(cx as usize) + half) * sx - half;
            out[oy * target.width + ox] = frame.sample_bilinear(src_x, src_y);
        }
    }
    Frame::new(target.width, target.height, target.pixel_spacing, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn disc(w: usize, h: usize, spacing: f64, radius_px: f64) -> Frame<f64> {
        let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
        let mut f = Frame::filled(w, h, spacing, 0.0).unwrap();
        for y in 0..h {
            for x in 0..w {
                let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                if dx * dx + dy * dy <= radius_px * radius_px {
                    f.set(x, y, 1.0);
                }
            }
        }
        f
    }

    fn measured_radius(f: &Frame<f64>) -> f64 {
        let n = f.pixels().iter().filter(|&&p| p >= 0.5).count();
        (n as f64 / std::f64::consts::PI).sqrt()
    }

    #[test]
    fn constant_frame_stays_constant() {
        let f = Frame::<f64>::filled(100, 80, 0.07, 0.5).unwrap();
        let g = resample_to_physical_scale(&f, &TargetGeometry::new(64, 48, 0.3)).unwrap();
        // 100x80 at 0.07 covers 7x5.6 cm → 23x19 px of content inside 64x48
        let content: Vec<f64> = g.pixels().iter().copied().filter(|&p| p != 0.0).collect();
        assert_eq!(content.len(), 23 * 19);
        assert!(content.iter().all(|&p| p == 0.5));
    }

    #[test]
    fn disc_radius_doubles_when_spacing_halves() {
        let f = disc(64, 64, 0.06, 10.0);
        let g = resample_to_physical_scale(&f, &TargetGeometry::new(160, 160, 0.03)).unwrap();
        let r = measured_radius(&g);
        assert!((r - 20.0).abs() <= 1.0, "radius {r}");
    }

    #[test]
    fn padding_is_zero_outside_content() {
        let f = Frame::<f64>::filled(100, 100, 0.06, 0.8).unwrap();
        let g = resample_to_physical_scale(&f, &TargetGeometry::new(320, 240, 0.06)).unwrap();
        // content occupies x in [110, 210), y in [70, 170)
        for y in 0..240 {
            for x in 0..320 {
                let inside = (110..210).contains(&x) && (70..170).contains(&y);
                assert_eq!(g.get(x, y) != 0.0, inside, "({x},{y})");
            }
        }
    }

    #[test]
    fn identity_when_geometry_matches() {
        let px: Vec<f64> = (0..48 * 36).map(|i| (i % 17) as f64 / 17.0).collect();
        let f = Frame::new(48, 36, 0.4, px).unwrap();
        let g = resample_to_physical_scale(&f, &TargetGeometry::new(48, 36, 0.4)).unwrap();
        assert_eq!(f, g);
    }

    #[test]
    fn crop_when_content_larger() {
        let f = Frame::<f64>::filled(100, 100, 0.1, 1.0).unwrap();
        let g = resample_to_physical_scale(&f, &TargetGeometry::new(50, 40, 0.1)).unwrap();
        assert!(g.pixels().iter().all(|&p| p == 1.0));
    }

    #[test]
    fn rejects_bad_target() {
        let f = Frame::<f64>::filled(4, 4, 0.1, 1.0).unwrap();
        assert!(resample_to_physical_scale(&f, &TargetGeometry::new(4, 4, 0.0)).is_err());
        assert!(resample_to_physical_scale(&f, &TargetGeometry::new(4, 4, -0.2)).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn scale_is_physically_correct(r in 5.0f64..30.0, in_sp in 0.03f64..0.12, ratio in 0.5f64..2.0) {
            let size = (2.0 * r + 8.0).ceil() as usize;
            let f = disc(size, size, in_sp, r);
            let out_sp = in_sp / ratio;
            let out_size = ((size as f64) * ratio).ceil() as usize + 4;
            let g = resample_to_physical_scale(&f, &TargetGeometry::new(out_size, out_size, out_sp)).unwrap();
            let expected = measured_radius(&f) * ratio;
            let got = measured_radius(&g);
            prop_assert!((got - expected).abs() <= 1.0, "r={} ratio={} expected {} got {}", r, ratio, expected, got);
        }
    }
}
