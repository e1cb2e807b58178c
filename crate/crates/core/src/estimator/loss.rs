//! Gaussian mean-variance negative log-likelihood and its output activations.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Smallest transformed-space variance a head may emit.
pub const VAR_FLOOR: f64 = 1e-6;

/// `ln(1 + eˣ)` without overflow.
pub fn softplus<T: Scalar>(x: T) -> T {
    // max(x, 0) + ln(1 + e^{-|x|})
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

/// Derivative of [`softplus`], the logistic sigmoid.
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        (T::one() + (-x).exp()).recip()
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `0.5·ln(var) + (target − mu)² / (2·var)`; the constant term is dropped.
pub fn nll_loss<T: Scalar>(mu: T, var: T, target: T) -> Result<T> {
    check_var(var)?;
    let half = T::lit(0.5);
    let r = target - mu;
    Ok(half * var.ln() + r * r / (var + var))
}

/// Analytic gradient of [`nll_loss`] with respect to `(mu, var)`.
pub fn nll_grad<T: Scalar>(mu: T, var: T, target: T) -> Result<(T, T)> {
    check_var(var)?;
    let r = target - mu;
    let dmu = (mu - target) / var;
    let dvar = (var + var).recip() - r * r / (T::lit(2.0) * var * var);
    Ok((dmu, dvar))
}

fn check_var<T: Scalar>(var: T) -> Result<()> {
    if var > T::zero() && var.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("variance must be positive, got {var}")))
    }
}
