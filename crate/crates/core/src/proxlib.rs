//! Convex functions with cheap proximal maps.
//!
//! `prox(x, γ)` is `argmin_p g(p) + ‖p − x‖²/(2γ)`. The conjugate prox
//! `prox_{γg*}` has a closed form for every shipped function; the generic
//! Moreau-decomposition route is kept in [`moreau_conj_prox`] so the two can
//! be checked against each other.

use std::fmt::Debug;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::spaces::BlockVector;

pub trait ProxFunction<T: Real>: Debug + Send + Sync {
    /// Function value; `+∞` outside the domain.
    fn eval(&self, x: &BlockVector<T>) -> Result<T>;

    /// Proximal map with step `γ > 0`.
    fn prox(&self, x: &BlockVector<T>, step: T) -> Result<BlockVector<T>>;

    /// Lipschitz constant w.r.t. the Euclidean norm on a space with `len`
    /// elements, if the function is Lipschitz there.
    fn lipschitz(&self, len: usize) -> Option<T>;

    /// `prox_{γ g*}(x)`.
    fn conj_prox(&self, x: &BlockVector<T>, step: T) -> Result<BlockVector<T>> {
        moreau_conj_prox(self, x, step)
    }
}

pub type Prox<T> = Arc<dyn ProxFunction<T>>;

pub(crate) fn check_step<T: Real>(step: T) -> Result<()> {
    if step > T::zero() && step.is_finite() {
        Ok(())
    } else {
        Err(Error::param(format!("prox step must be positive and finite, got {step}")))
    }
}

/// `prox_{γg*}(x) = x − γ·prox_{g/γ}(x/γ)`.
pub fn moreau_conj_prox<T: Real, G: ProxFunction<T> + ?Sized>(
    g: &G,
    x: &BlockVector<T>,
    step: T,
) -> Result<BlockVector<T>> {
    check_step(step)?;
    let inner = g.prox(&x.scaled(T::one() / step), T::one() / step)?;
    BlockVector::lincomb(T::one(), x, -step, &inner)
}

pub fn conj_prox<T: Real>(g: &dyn ProxFunction<T>, x: &BlockVector<T>, step: T) -> Result<BlockVector<T>> {
    g.conj_prox(x, step)
}

/// `λ‖·‖₁`.
#[derive(Debug, Clone)]
pub struct L1Norm<T> {
    weight: T,
}

pub fn l1_norm<T: Real>(weight: T) -> Result<L1Norm<T>> {
    if !(weight >= T::zero()) || !weight.is_finite() {
        return Err(Error::param(format!("l1 weight must be >= 0, got {weight}")));
    }
    Ok(L1Norm { weight })
}

fn soft_threshold<T: Real>(v: T, thresh: T) -> T {
    if v > thresh {
        v - thresh
    } else if v < -thresh {
        v + thresh
    } else {
        T::zero()
    }
}

impl<T: Real> ProxFunction<T> for L1Norm<T> {
    fn eval(&self, x: &BlockVector<T>) -> Result<T> {
        Ok(self.weight * x.iter().map(|v| v.abs()).sum::<T>())
    }

    fn prox(&self, x: &BlockVector<T>, step: T) -> Result<BlockVector<T>> {
        check_step(step)?;
        let thresh = self.weight * step;
        Ok(x.map(|v| soft_threshold(v, thresh)))
    }

    /// `λ√d`: the ℓ1 norm is `√d`-Lipschitz w.r.t. ℓ2 on `d` elements.
    fn lipschitz(&self, len: usize) -> Option<T> {
        Some(self.weight * T::from_count(len).sqrt())
    }

    /// Projection onto the ℓ∞ ball of radius `λ`, independent of the step.
    fn conj_prox(&self, x: &BlockVector<T>, step: T) -> Result<BlockVector<T>> {
        check_step(step)?;
        let w = self.weight;
        Ok(x.map(|v| v.max(-w).min(w)))
    }
}

/// `α‖· − b‖₂` (the norm, not its square).
#[derive(Debug, Clone)]
pub struct L2Distance<T: Real> {
    weight: T,
    center: BlockVector<T>,
}

pub fn l2_dist<T: Real>(weight: T, center: BlockVector<T>) -> Result<L2Distance<T>> {
    if !(weight > T::zero()) || !weight.is_finite() {
        return Err(Error::param(format!("l2 distance weight must be > 0, got {weight}")));
    }
    Ok(L2Distance { weight, center })
}

impl<T: Real> L2Distance<T> {
    pub fn center(&self) -> &BlockVector<T> {
        &self.center
    }
}

impl<T: Real> ProxFunction<T> for L2Distance<T> {
    fn eval(&self, x: &BlockVector<T>) -> Result<T> {
        Ok(self.weight * x.dist(&self.center)?)
    }

    /// Block soft-thresholding of `x − b` towards `b`; returns `b` at `x = b`.
    fn prox(&self, x: &BlockVector<T>, step: T) -> Result<BlockVector<T>> {
        check_step(step)?;
        let r = x.dist(&self.center)?;
        let thresh = step * self.weight;
        if r <= thresh {
            return Ok(self.center.clone());
        }
        let factor = T::one() - thresh / r;
        self.center.zip_map(x, |b, v| b + factor * (v - b))
    }

    fn lipschitz(&self, _len: usize) -> Option<T> {
        Some(self.weight)
    }

    /// `g*(y) = ⟨y, b⟩ + ι_{‖y‖ ≤ α}`, hence `prox_{γg*}(x) = P_{B(0,α)}(x − γb)`.
    fn conj_prox(&self, x: &BlockVector<T>, step: T) -> Result<BlockVector<T>> {
        check_step(step)?;
        let mut shifted = BlockVector::lincomb(T::one(), x, -step, &self.center)?;
        let n = shifted.norm2();
        if n > self.weight {
            shifted.scale_mut(self.weight / n);
        }
        Ok(shifted)
    }
}

/// The zero function.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroFunction;

pub fn zero_function() -> ZeroFunction {
    ZeroFunction
}

impl<T: Real> ProxFunction<T> for ZeroFunction {
    fn eval(&self, _x: &BlockVector<T>) -> Result<T> {
        Ok(T::zero())
    }

    fn prox(&self, x: &BlockVector<T>, step: T) -> Result<BlockVector<T>> {
        check_step(step)?;
        Ok(x.clone())
    }

    fn lipschitz(&self, _len: usize) -> Option<T> {
        Some(T::zero())
    }

    // conjugate is the indicator of {0}
    fn conj_prox(&self, x: &BlockVector<T>, step: T) -> Result<BlockVector<T>> {
        check_step(step)?;
        Ok(x.scaled(T::zero()))
    }
}
