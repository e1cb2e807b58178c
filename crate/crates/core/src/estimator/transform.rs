use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    /// `t = m · (ln g + b)`
    LogAffine,
    /// `t = m · g`
    Linear,
}

/// Invertible map between GA in days and the network's regression target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelTransform {
    pub kind: TransformKind,
    pub multiplier: f64,
    pub offset: f64,
}

impl LabelTransform {
    /// Video model: log labels with offset −5.2 and multiplier 3.43.
    pub const VIDEO: Self = Self {
        kind: TransformKind::LogAffine,
        multiplier: 3.43,
        offset: -5.2,
    };

    /// Image model: linear multiplier 0.01.
    pub const IMAGE: Self = Self {
        kind: TransformKind::Linear,
        multiplier: 0.01,
        offset: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        if self.multiplier == 0.0 || !self.multiplier.is_finite() {
            return Err(Error::Config("label multiplier must be finite and non-zero".into()));
        }
        Ok(())
    }

    pub fn forward<T: Scalar>(&self, ga_days: T) -> Result<T> {
        let m = T::lit(self.multiplier);
        match self.kind {
            TransformKind::LogAffine => {
                if !(ga_days > T::zero()) {
                    return Err(Error::Domain(format!(
                        "log label transform needs a positive GA, got {ga_days}"
                    )));
                }
                Ok(m * (ga_days.ln() + T::lit(self.offset)))
            }
            TransformKind::Linear => Ok(m * ga_days),
        }
    }

    pub fn inverse<T: Scalar>(&self, t: T) -> Result<T> {
        if !t.is_finite() {
            return Err(Error::Domain(format!("non-finite model output {t}")));
        }
        let m = T::lit(self.multiplier);
        Ok(match self.kind {
            TransformKind::LogAffine => (t / m - T::lit(self.offset)).exp(),
            TransformKind::Linear => t / m,
        })
    }

    /// d ga / d t at transformed value `t`.
    pub fn inverse_derivative<T: Scalar>(&self, t: T) -> Result<T> {
        let m = T::lit(self.multiplier);
        Ok(match self.kind {
            TransformKind::LogAffine => self.inverse(t)? / m,
            TransformKind::Linear => {
                if !t.is_finite() {
                    return Err(Error::Domain(format!("non-finite model output {t}")));
                }
                m.recip()
            }
        })
    }

    /// Maps a transformed-space (mean, variance) pair to days with the
    /// first-order delta rule `var_ga = var_t · (d ga/d t)²`.
    pub fn inverse_with_variance<T: Scalar>(&self, t: T, var_t: T) -> Result<(T, T)> {
        let ga = self.inverse(t)?;
        let d = self.inverse_derivative(t)?;
        Ok((ga, var_t * d * d))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn video_forward_inverse_example() {
        // 3.43 * (ln 200 - 5.2) evaluated at high precision: 0.337229...
        let t = LabelTransform::VIDEO.forward(200.0f64).unwrap();
        assert!((t - 0.337229).abs() < 1e-6, "{t}");
        let g = LabelTransform::VIDEO.inverse(0.337229f64).unwrap();
        assert!((g - 200.0).abs() < 1e-3);
    }

    #[test]
    fn image_examples() {
        assert_eq!(LabelTransform::IMAGE.forward(250.0f64).unwrap(), 2.5);
        assert_eq!(LabelTransform::IMAGE.inverse(0.0f64).unwrap(), 0.0);
    }

    #[test]
    fn delta_method_variance() {
        let (ga, var) = LabelTransform::VIDEO
            .inverse_with_variance(0.337229f64, 0.01)
            .unwrap();
        let expected = 0.01 * (ga / 3.43f64).powi(2);
        assert!((var - expected).abs() < 1e-12);
        assert!((var - 34.0).abs() < 0.1, "{var}");
        let (_, var_img) = LabelTransform::IMAGE.inverse_with_variance(2.0f64, 1e-4).unwrap();
        assert!((var_img - 1.0).abs() < 1e-9);
    }

    #[test]
    fn domain_errors() {
        assert!(LabelTransform::VIDEO.forward(0.0f64).is_err());
        assert!(LabelTransform::VIDEO.forward(-3.0f64).is_err());
        assert!(LabelTransform::VIDEO.inverse(f64::NAN).is_err());
        assert!(LabelTransform::IMAGE.inverse(f64::INFINITY).is_err());
        let bad = LabelTransform { multiplier: 0.0, ..LabelTransform::IMAGE };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn round_trip(g in 42.0f64..=315.0) {
            for tr in [LabelTransform::VIDEO, LabelTransform::IMAGE] {
                let back = tr.inverse(tr.forward(g).unwrap()).unwrap();
                prop_assert!(((back - g) / g).abs() < 1e-9);
            }
        }
    }
}
