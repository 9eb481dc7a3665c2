//! Moreau envelopes `^μg`, their gradients, and smoothed objectives.
//!
//! The envelope is evaluated in infimal-convolution form
//! `^μg(x) = g(p) + ‖x − p‖²/(2μ)` with `p = prox_{μg}(x)`, and its gradient
//! is `(x − p)/μ = prox_{μ⁻¹g*}(x/μ)`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linops::{LinearOperator, Operator};
use crate::proxlib::{Prox, ProxFunction};
use crate::scalar::Real;
use crate::spaces::BlockVector;

/// A nonsmooth Lipschitz function composed with a linear operator, `g ∘ K`.
#[derive(Debug, Clone)]
pub struct SmoothedTerm<T: Real> {
    pub g: Prox<T>,
    pub op: Operator<T>,
    lipschitz: T,
}

impl<T: Real> SmoothedTerm<T> {
    /// Takes `L_g` from `g` on the codomain of `op`; fails if `g` is not
    /// Lipschitz there.
    pub fn new(g: Prox<T>, op: Operator<T>) -> Result<Self> {
        let len = op.codomain().iter().map(|s| s.len()).sum();
        let lipschitz = g
            .lipschitz(len)
            .ok_or_else(|| Error::param("smoothed term needs a Lipschitz function"))?;
        Ok(SmoothedTerm { g, op, lipschitz })
    }

    pub fn from_parts<G, K>(g: G, op: K) -> Result<Self>
    where
        G: ProxFunction<T> + 'static,
        K: LinearOperator<T> + 'static,
    {
        SmoothedTerm::new(Arc::new(g), Arc::new(op))
    }

    pub fn lipschitz(&self) -> T {
        self.lipschitz
    }

    /// `g(Kx)`.
    pub fn value(&self, x: &BlockVector<T>) -> Result<T> {
        self.g.eval(&self.op.apply(x)?)
    }

    /// `prox_{μ⁻¹g*}(Kx/μ) = ∇(^μg)(Kx)`; lies in `B(0, L_g)`.
    pub fn dual_point(&self, mu: T, x: &BlockVector<T>) -> Result<BlockVector<T>> {
        check_mu(mu)?;
        let kx = self.op.apply(x)?;
        self.g.conj_prox(&kx.scaled(T::one() / mu), T::one() / mu)
    }
}

fn check_mu<T: Real>(mu: T) -> Result<()> {
    if mu > T::zero() && mu.is_finite() {
        Ok(())
    } else {
        Err(Error::param(format!("smoothing parameter must be > 0, got {mu}")))
    }
}

pub fn envelope_value<T: Real>(g: &dyn ProxFunction<T>, mu: T, x: &BlockVector<T>) -> Result<T> {
    check_mu(mu)?;
    let p = g.prox(x, mu)?;
    let d = x.dist(&p)?;
    Ok(g.eval(&p)? + d * d / (T::lit(2.0) * mu))
}

pub fn envelope_grad<T: Real>(g: &dyn ProxFunction<T>, mu: T, x: &BlockVector<T>) -> Result<BlockVector<T>> {
    check_mu(mu)?;
    let p = g.prox(x, mu)?;
    let inv = T::one() / mu;
    BlockVector::lincomb(inv, x, -inv, &p)
}

/// `∇(^μg ∘ K)(x) = K* prox_{μ⁻¹g*}(Kx/μ)`.
pub fn composite_grad<T: Real>(term: &SmoothedTerm<T>, mu: T, x: &BlockVector<T>) -> Result<BlockVector<T>> {
    let dual = term.dual_point(mu, x)?;
    term.op.adjoint(&dual)
}

/// `∂/∂μ ^μg(x) = −½‖∇^μg(x)‖²`.
pub fn envelope_dmu<T: Real>(g: &dyn ProxFunction<T>, mu: T, x: &BlockVector<T>) -> Result<T> {
    let grad = envelope_grad(g, mu, x)?;
    Ok(-grad.norm_sq() / T::lit(2.0))
}

/// `F^μ(x) = f(x) + Σ ^μg_i(K_i x)`.
pub fn smoothed_objective<T: Real>(
    f: &dyn ProxFunction<T>,
    terms: &[SmoothedTerm<T>],
    mu: T,
    x: &BlockVector<T>,
) -> Result<T> {
    let mut total = f.eval(x)?;
    for term in terms {
        total += envelope_value(term.g.as_ref(), mu, &term.op.apply(x)?)?;
    }
    Ok(total)
}

/// `F(x) = f(x) + Σ g_i(K_i x)`.
pub fn objective<T: Real>(f: &dyn ProxFunction<T>, terms: &[SmoothedTerm<T>], x: &BlockVector<T>) -> Result<T> {
    let mut total = f.eval(x)?;
    for term in terms {
        total += term.value(x)?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linops::{Diagonal, Identity, Scaled};
    use crate::proxlib::{l1_norm, l2_dist, zero_function};
    use crate::spaces::{gaussian_like, RngStream, Shape};

    fn v(data: &[f64]) -> BlockVector<f64> {
        BlockVector::from_slice(data).unwrap()
    }

    /// `sup_{|p| ≤ 1} xp − μp²/2` by dense grid (conjugate form of `^μ|·|`).
    fn sup_form_abs(x: f64, mu: f64) -> f64 {
        let n = 400_000;
        (0..=n)
            .map(|i| -1.0 + 2.0 * i as f64 / n as f64)
            .map(|p| x * p - mu * p * p / 2.0)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn huber_values_match_sup_form() {
        let g = l1_norm(1.0).unwrap();
        for (x, expect) in [(0.5, 0.125), (2.0, 1.5)] {
            let oracle = sup_form_abs(x, 1.0);
            assert!((oracle - expect).abs() < 1e-8);
            assert!((envelope_value(&g, 1.0, &v(&[x])).unwrap() - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn huber_gradient_values() {
        let g = l1_norm(1.0).unwrap();
        // derivative of the sup-form oracle by central differences
        for (x, expect) in [(2.0, 1.0), (0.5, 0.5)] {
            let h = 1e-4;
            let fd = (sup_form_abs(x + h, 1.0) - sup_form_abs(x - h, 1.0)) / (2.0 * h);
            assert!((fd - expect).abs() < 1e-4);
            assert_eq!(envelope_grad(&g, 1.0, &v(&[x])).unwrap().block(0), &[expect]);
        }
        assert_eq!(envelope_dmu(&g, 1.0, &v(&[2.0])).unwrap(), -0.5);
    }

    #[test]
    fn zero_function_envelope_vanishes() {
        let g = zero_function();
        let x = v(&[1.0, -4.0]);
        for mu in [1e-3, 1.0, 50.0] {
            assert_eq!(envelope_value::<f64>(&g, mu, &x).unwrap(), 0.0);
            assert!(envelope_grad::<f64>(&g, mu, &x).unwrap().iter().all(|&c| c == 0.0));
            assert_eq!(envelope_dmu::<f64>(&g, mu, &x).unwrap(), 0.0);
        }
    }

    #[test]
    fn nonpositive_mu_rejected() {
        let g = l1_norm(1.0).unwrap();
        assert!(matches!(envelope_value(&g, 0.0, &v(&[1.0])), Err(Error::Parameter(_))));
        assert!(envelope_grad(&g, -1.0, &v(&[1.0])).is_err());
        assert!(envelope_dmu(&g, 0.0, &v(&[1.0])).is_err());
    }

    #[test]
    fn composite_grad_with_identity_is_envelope_grad() {
        let mut rng = RngStream::new(10);
        let s = vec![Shape::vector(6).unwrap()];
        let term = SmoothedTerm::from_parts(l1_norm(1.0).unwrap(), Identity::new(s.clone())).unwrap();
        let x = gaussian_like::<f64>(&s, 2.0, &mut rng).unwrap();
        let a = composite_grad(&term, 0.7, &x).unwrap();
        let b = envelope_grad(term.g.as_ref(), 0.7, &x).unwrap();
        assert!(a.dist(&b).unwrap() < 1e-15);
    }

    #[test]
    fn composite_grad_through_scaled_identity() {
        let id: Operator<f64> = Arc::new(Identity::new(vec![Shape::vector(1).unwrap()]));
        let term = SmoothedTerm::new(Arc::new(l1_norm(1.0).unwrap()), Arc::new(Scaled::new(id, 2.0))).unwrap();
        assert_eq!(composite_grad(&term, 1.0, &v(&[2.0])).unwrap().block(0), &[2.0]);
    }

    #[test]
    fn composite_grad_shape_mismatch() {
        let term = SmoothedTerm::from_parts(l1_norm(1.0).unwrap(), Diagonal::new(vec![1.0, 2.0]).unwrap()).unwrap();
        assert!(matches!(composite_grad(&term, 1.0, &v(&[1.0])), Err(Error::Shape(_))));
    }

    #[test]
    fn non_lipschitz_g_is_rejected() {
        #[derive(Debug)]
        struct Indicator;
        impl ProxFunction<f64> for Indicator {
            fn eval(&self, _x: &BlockVector<f64>) -> Result<f64> {
                Ok(0.0)
            }
            fn prox(&self, x: &BlockVector<f64>, _s: f64) -> Result<BlockVector<f64>> {
                Ok(x.clone())
            }
            fn lipschitz(&self, _len: usize) -> Option<f64> {
                None
            }
        }
        let r = SmoothedTerm::<f64>::from_parts(Indicator, Identity::new(vec![Shape::vector(2).unwrap()]));
        assert!(r.is_err());
    }

    #[test]
    fn smoothed_objective_sandwich_for_small_mu() {
        let mut rng = RngStream::new(3);
        let s = vec![Shape::vector(5).unwrap()];
        let b = gaussian_like::<f64>(&s, 1.0, &mut rng).unwrap();
        let f = l2_dist(0.5, b.clone()).unwrap();
        let terms = vec![
            SmoothedTerm::from_parts(l1_norm(1.0).unwrap(), Identity::new(s.clone())).unwrap(),
            SmoothedTerm::from_parts(l2_dist(2.0, b).unwrap(), Diagonal::new(vec![1.0, 2.0, 3.0, 4.0, 5.0]).unwrap()).unwrap(),
        ];
        let l2: f64 = terms.iter().map(|t| t.lipschitz().powi(2)).sum();
        let x = gaussian_like::<f64>(&s, 1.0, &mut rng).unwrap();
        let full = objective(&f, &terms, &x).unwrap();
        for mu in [1e-8, 1e-3, 1.0] {
            let sm = smoothed_objective(&f, &terms, mu, &x).unwrap();
            assert!(sm <= full + 1e-14);
            assert!(full <= sm + mu * l2 / 2.0 + 1e-14);
        }
        let sm = smoothed_objective(&f, &terms, 1e-8, &x).unwrap();
        assert!((sm - full).abs() <= 1e-8 * l2 / 2.0 + 1e-14);
    }

    #[test]
    fn empty_sum_with_zero_f() {
        let x = v(&[1.0, 2.0]);
        assert_eq!(smoothed_objective::<f64>(&zero_function(), &[], 1.0, &x).unwrap(), 0.0);
    }
}
