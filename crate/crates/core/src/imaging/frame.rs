use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Grayscale frame with isotropic physical pixel spacing (cm/pixel).
///
/// Intensities live in `[0, 1]`; on disk they are stored as 8-bit values.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame<T> {
    width: usize,
    height: usize,
    pixel_spacing: f64,
    pixels: Vec<T>,
}

impl<T: Scalar> Frame<T> {
    pub fn new(width: usize, height: usize, pixel_spacing: f64, pixels: Vec<T>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput(format!(
                "frame dimensions must be positive, got {width}x{height}"
            )));
        }
        if width * height != pixels.len() {
            return Err(Error::ShapeMismatch(format!(
                "{width}x{height} frame with {} pixels",
                pixels.len()
            )));
        }
        if !(pixel_spacing > 0.0 && pixel_spacing.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "pixel spacing must be positive, got {pixel_spacing}"
            )));
        }
        Ok(Self {
            width,
            height,
            pixel_spacing,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, pixel_spacing: f64, value: T) -> Result<Self> {
        Self::new(width, height, pixel_spacing, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Physical size of one pixel edge in centimetres.
    pub fn pixel_spacing(&self) -> f64 {
        self.pixel_spacing
    }

    pub fn pixels(&self) -> &[T] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [T] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<T> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: T) {
        self.pixels[y * self.width + x] = v;
    }

    /// Bilinear sample at continuous pixel-centre coordinates, clamping to the
    /// border.
    pub fn sample_bilinear(&self, x: T, y: T) -> T {
        let max_x = T::from_usize_lossy(self.width - 1);
        let max_y = T::from_usize_lossy(self.height - 1);
        let x = x.max(T::zero()).min(max_x);
        let y = y.max(T::zero()).min(max_y);
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let x0 = x0.to_usize().unwrap_or(0);
        let y0 = y0.to_usize().unwrap_or(0);
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let lerp = |a: T, b: T, t: T| a + (b - a) * t;
        let top = lerp(self.get(x0, y0), self.get(x1, y0), fx);
        let bottom = lerp(self.get(x0, y1), self.get(x1, y1), fx);
        lerp(top, bottom, fy)
    }

    /// Same geometry, different scalar type.
    pub fn cast<U: Scalar>(&self) -> Frame<U> {
        Frame {
            width: self.width,
            height: self.height,
            pixel_spacing: self.pixel_spacing,
            pixels: self
                .pixels
                .iter()
                .map(|p| U::from(*p).unwrap_or_else(U::zero))
                .collect(),
        }
    }

    /// 8-bit quantisation used for storage.
    pub fn to_u8(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .map(|p| {
                let v = p.to_f64_lossy().clamp(0.0, 1.0) * 255.0;
                v.round() as u8
            })
            .collect()
    }

    pub fn from_u8(width: usize, height: usize, pixel_spacing: f64, data: &[u8]) -> Result<Self> {
        let scale = T::lit(1.0 / 255.0);
        Self::new(
            width,
            height,
            pixel_spacing,
            data.iter().map(|b| T::lit(f64::from(*b)) * scale).collect(),
        )
    }

    pub fn mean(&self) -> T {
        self.pixels.iter().copied().sum::<T>() / T::from_usize_lossy(self.pixels.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_geometry() {
        assert!(Frame::<f32>::new(2, 2, 0.1, vec![0.0; 3]).is_err());
        assert!(Frame::<f32>::new(2, 2, 0.0, vec![0.0; 4]).is_err());
        assert!(Frame::<f32>::new(2, 2, -1.0, vec![0.0; 4]).is_err());
        assert!(Frame::<f32>::new(0, 2, 1.0, vec![]).is_err());
    }

    #[test]
    fn bilinear_midpoint() {
        let f = Frame::<f64>::new(2, 1, 1.0, vec![0.0, 1.0]).unwrap();
        assert_eq!(f.sample_bilinear(0.5, 0.0), 0.5);
        assert_eq!(f.sample_bilinear(-3.0, 0.0), 0.0);
        assert_eq!(f.sample_bilinear(9.0, 0.0), 1.0);
    }

    #[test]
    fn u8_round_trip() {
        let data: Vec<u8> = (0..=255).collect();
        let f = Frame::<f32>::from_u8(16, 16, 0.2, &data).unwrap();
        assert_eq!(f.to_u8(), data);
    }
}
