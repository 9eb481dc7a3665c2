//! Parameter sequences `(t_k, μ_k, γ_k)`.
//!
//! Three regimes are provided:
//!
//! * [`ScheduleVariant::VastDefault`]: `t⁺ = √(t² + 2t)` with
//!   `μ⁺ = μ·t²/(t⁺² − t⁺)`, so that `μ_k` decays like `1/k`.
//! * [`ScheduleVariant::NesterovConstMu`]: the classical Nesterov sequence
//!   with `μ` frozen at `b‖K‖²`.
//! * [`ScheduleVariant::Svast`]: Nesterov `t` with `μ_k = b‖K‖²k^{-3/2}`.
//!
//! In every regime `γ_k = μ_k/‖K‖²`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// `exp(4π²/6)`, the growth constant in the upper bound on `μ_k·t_k`.
pub fn mu_growth_constant() -> f64 {
    (4.0 * std::f64::consts::PI.powi(2) / 6.0).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ScheduleVariant<T> {
    VastDefault { b: T },
    NesterovConstMu { b: T },
    Svast { b: T },
}

impl<T: Real> ScheduleVariant<T> {
    pub fn b(&self) -> T {
        match *self {
            ScheduleVariant::VastDefault { b }
            | ScheduleVariant::NesterovConstMu { b }
            | ScheduleVariant::Svast { b } => b,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ScheduleVariant::VastDefault { .. } => "vast",
            ScheduleVariant::NesterovConstMu { .. } => "vast-constmu",
            ScheduleVariant::Svast { .. } => "svast",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleKind<T> {
    pub variant: ScheduleVariant<T>,
    /// The value used as `‖K‖²`.
    pub norm_k2: T,
}

impl<T: Real> ScheduleKind<T> {
    pub fn new(variant: ScheduleVariant<T>, norm_k2: T) -> Result<Self> {
        let kind = ScheduleKind { variant, norm_k2 };
        kind.validate()?;
        Ok(kind)
    }

    pub fn vast(b: T, norm_k2: T) -> Result<Self> {
        Self::new(ScheduleVariant::VastDefault { b }, norm_k2)
    }

    pub fn const_mu(b: T, norm_k2: T) -> Result<Self> {
        Self::new(ScheduleVariant::NesterovConstMu { b }, norm_k2)
    }

    pub fn svast(b: T, norm_k2: T) -> Result<Self> {
        Self::new(ScheduleVariant::Svast { b }, norm_k2)
    }

    pub fn validate(&self) -> Result<()> {
        let b = self.variant.b();
        if !(b > T::zero() && b.is_finite()) {
            return Err(Error::param(format!("schedule b must be > 0, got {b}")));
        }
        if !(self.norm_k2 > T::zero() && self.norm_k2.is_finite()) {
            return Err(Error::param(format!("operator norm bound must be > 0, got {}", self.norm_k2)));
        }
        Ok(())
    }

    /// Iterates `state_1, state_2, …` without end.
    pub fn iter(&self) -> Result<ScheduleIter<T>> {
        Ok(ScheduleIter {
            kind: *self,
            next: Some(init(self)?),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleState<T> {
    pub k: usize,
    pub t: T,
    pub mu: T,
    pub gamma: T,
    /// `t_{k-1}² − t_k² + t_k`; zero at `k = 1`.
    pub rho: T,
}

pub fn init<T: Real>(kind: &ScheduleKind<T>) -> Result<ScheduleState<T>> {
    kind.validate()?;
    let b = kind.variant.b();
    Ok(ScheduleState {
        k: 1,
        t: T::one(),
        mu: b * kind.norm_k2,
        gamma: b,
        rho: T::zero(),
    })
}

fn nesterov_t<T: Real>(t: T) -> T {
    (T::one() + (T::one() + T::lit(4.0) * t * t).sqrt()) / T::lit(2.0)
}

pub fn advance<T: Real>(state: &ScheduleState<T>, kind: &ScheduleKind<T>) -> ScheduleState<T> {
    let t = state.t;
    let k1 = state.k + 1;
    let (t_next, mu, gamma) = match kind.variant {
        ScheduleVariant::VastDefault { .. } => {
            let tn = (t * t + T::lit(2.0) * t).sqrt();
            let mu = state.mu * (t * t / (tn * tn - tn));
            (tn, mu, mu / kind.norm_k2)
        }
        ScheduleVariant::NesterovConstMu { .. } => (nesterov_t(t), state.mu, state.gamma),
        ScheduleVariant::Svast { b } => {
            let decay = T::from_count(k1).powf(T::lit(-1.5));
            (nesterov_t(t), b * kind.norm_k2 * decay, b * decay)
        }
    };
    ScheduleState {
        k: k1,
        t: t_next,
        mu,
        gamma,
        rho: t * t - t_next * t_next + t_next,
    }
}

#[derive(Debug, Clone)]
pub struct ScheduleIter<T: Real> {
    kind: ScheduleKind<T>,
    next: Option<ScheduleState<T>>,
}

impl<T: Real> Iterator for ScheduleIter<T> {
    type Item = ScheduleState<T>;

    fn next(&mut self) -> Option<Self::Item> {
        let cur = self.next?;
        self.next = Some(advance(&cur, &self.kind));
        Some(cur)
    }
}

/// Worst violations of the schedule identities over the first `steps` states.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    /// `max |(1 − 1/t⁺)γ⁺t⁺² − γt²| / (γt²)`.
    pub coupling_rel: f64,
    /// `max (μ − μ⁺ − μ⁺/t⁺)`.
    pub smoothing_max: f64,
    /// `max |t² − (t⁺² − t⁺)| / t²` under the Nesterov rule.
    pub nesterov_rel: f64,
    /// Count of states outside `(k+1)/2 ≤ t_k ≤ k`.
    pub t_bound_violations: usize,
    /// Count of states outside `b‖K‖²/t ≤ μ ≤ b‖K‖²e^{4π²/6}/t`.
    pub mu_bound_violations: usize,
}

/// Walks `steps` transitions and measures how well the regime's defining
/// identities hold.
pub fn identity_report(kind: &ScheduleKind<f64>, steps: usize) -> Result<IdentityReport> {
    let mut rep = IdentityReport {
        smoothing_max: f64::NEG_INFINITY,
        ..Default::default()
    };
    let b = kind.variant.b();
    let nk = kind.norm_k2;
    let c = mu_growth_constant();
    let mut s = init(kind)?;
    for _ in 0..=steps {
        let k = s.k as f64;
        if s.t < (k + 1.0) / 2.0 - 1e-12 * k || s.t > k + 1e-12 * k {
            rep.t_bound_violations += 1;
        }
        if let ScheduleVariant::VastDefault { .. } = kind.variant {
            let lo = b * nk / s.t;
            let hi = b * nk * c / s.t;
            if s.mu < lo * (1.0 - 1e-12) || s.mu > hi * (1.0 + 1e-12) {
                rep.mu_bound_violations += 1;
            }
        }
        let n = advance(&s, kind);
        match kind.variant {
            ScheduleVariant::VastDefault { .. } => {
                let lhs = (1.0 - 1.0 / n.t) * n.gamma * n.t * n.t;
                let rhs = s.gamma * s.t * s.t;
                rep.coupling_rel = rep.coupling_rel.max((lhs - rhs).abs() / rhs);
                rep.smoothing_max = rep.smoothing_max.max(s.mu - n.mu - n.mu / n.t);
            }
            ScheduleVariant::NesterovConstMu { .. } | ScheduleVariant::Svast { .. } => {
                let r = (s.t * s.t - (n.t * n.t - n.t)).abs() / (s.t * s.t);
                rep.nesterov_rel = rep.nesterov_rel.max(r);
            }
        }
        s = n;
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn init_values() {
        let s = init(&ScheduleKind::vast(1.0, 8.0).unwrap()).unwrap();
        assert_eq!((s.k, s.t, s.mu, s.gamma), (1, 1.0, 8.0, 1.0));
        let s = init(&ScheduleKind::svast(0.5, 8.0).unwrap()).unwrap();
        assert_eq!((s.t, s.mu, s.gamma), (1.0, 4.0, 0.5));
        let s = init(&ScheduleKind::const_mu(3.0, 2.0).unwrap()).unwrap();
        assert_eq!(s.t, 1.0);
    }

    #[test]
    fn invalid_kinds() {
        assert!(matches!(ScheduleKind::vast(0.0, 8.0), Err(Error::Parameter(_))));
        assert!(ScheduleKind::vast(1.0, -1.0).is_err());
        assert!(ScheduleKind::svast(f64::NAN, 1.0).is_err());
        let bad = ScheduleKind {
            variant: ScheduleVariant::VastDefault { b: -1.0 },
            norm_k2: 8.0,
        };
        assert!(init(&bad).is_err());
    }

    #[test]
    fn vast_second_step() {
        let kind = ScheduleKind::vast(1.0, 8.0).unwrap();
        let s2 = advance(&init(&kind).unwrap(), &kind);
        assert!((s2.t - 3f64.sqrt()).abs() < 1e-15);
        assert!((s2.t - 1.7320508).abs() < 1e-7);
        assert!((s2.mu / 8.0 - 1.0 / (3.0 - 3f64.sqrt())).abs() < 1e-15);
        assert!((s2.mu / 8.0 - 0.7886751).abs() < 1e-7);
        assert_eq!(s2.gamma, s2.mu / 8.0);
        // smoothing condition at k = 1 is strictly negative
        let slack = 8.0 - s2.mu - s2.mu / s2.t;
        assert!((slack / 8.0 - (1.0 - 0.7886751345948129 * (1.0 + 1.0 / 3f64.sqrt()))).abs() < 1e-12);
        assert!(slack < 0.0);
    }

    #[test]
    fn nesterov_second_step_is_golden_ratio() {
        let kind = ScheduleKind::const_mu(1.0, 8.0).unwrap();
        let s2 = advance(&init(&kind).unwrap(), &kind);
        assert!((s2.t - (1.0 + 5f64.sqrt()) / 2.0).abs() < 1e-15);
        assert!((s2.t - 1.6180340).abs() < 1e-7);
        assert!(s2.rho.abs() < 1e-15);
        assert_eq!((s2.mu, s2.gamma), (8.0, 1.0));
    }

    #[test]
    fn svast_fourth_step() {
        let kind = ScheduleKind::<f64>::svast(1.0, 8.0).unwrap();
        let s4 = kind.iter().unwrap().nth(3).unwrap();
        assert_eq!(s4.k, 4);
        assert!((s4.mu - 1.0).abs() < 1e-15);
        assert!((s4.gamma - 0.125).abs() < 1e-15);
    }

    #[test]
    fn growth_constant() {
        assert!((mu_growth_constant() - 720.349_324_589_656_6).abs() < 1e-9);
    }

    #[test]
    fn svast_mu_nonincreasing_and_rho_zero() {
        let kind = ScheduleKind::<f64>::svast(0.3, 5.0).unwrap();
        let states: Vec<_> = kind.iter().unwrap().take(2000).collect();
        for w in states.windows(2) {
            assert!(w[1].mu <= w[0].mu);
            assert!(w[1].rho.abs() <= 1e-9 * w[1].t * w[1].t);
            assert!((w[1].gamma * 5.0 - w[1].mu).abs() <= 1e-15 * w[1].mu);
        }
    }

    #[test]
    fn identities_hold_for_long_runs() {
        let rep = identity_report(&ScheduleKind::vast(0.7, 8.0).unwrap(), 100_000).unwrap();
        assert!(rep.coupling_rel <= 1e-12, "{rep:?}");
        assert!(rep.smoothing_max <= 1e-14, "{rep:?}");
        assert_eq!(rep.t_bound_violations, 0);
        assert_eq!(rep.mu_bound_violations, 0);
        let rep = identity_report(&ScheduleKind::const_mu(0.7, 8.0).unwrap(), 100_000).unwrap();
        assert!(rep.nesterov_rel <= 1e-10, "{rep:?}");
        assert_eq!(rep.t_bound_violations, 0);
    }

    #[test]
    fn f32_schedule() {
        let kind = ScheduleKind::<f32>::vast(1.0, 8.0).unwrap();
        let s = kind.iter().unwrap().nth(10).unwrap();
        assert!(s.mu > 0.0 && s.t > 5.0);
    }

    proptest! {
        #[test]
        fn gamma_tracks_mu(b in 1e-3f64..10.0, nk in 1e-2f64..100.0, steps in 1usize..300) {
            let kind = ScheduleKind::vast(b, nk).unwrap();
            let s = kind.iter().unwrap().nth(steps).unwrap();
            prop_assert!((s.gamma * nk - s.mu).abs() <= 1e-14 * s.mu);
            // ρ = t⁺ − 2t under this rule
            prop_assert!(s.rho < 0.0);
        }
    }
}
