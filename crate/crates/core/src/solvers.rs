//! VAST, sVAST, PDHG and sPDHG over a shared composite problem
//! `min_x f(x) + Σ_i g_i(K_i x)`.

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moreau::{self, SmoothedTerm};
use crate::proxlib::{Prox, ProxFunction};
use crate::scalar::Real;
use crate::schedules::{self, ScheduleKind, ScheduleVariant};
use crate::spaces::{check_structure, BlockVector, RngStream, Shape};

#[derive(Debug, Clone)]
pub struct CompositeProblem<T: Real> {
    pub f: Prox<T>,
    pub terms: Vec<SmoothedTerm<T>>,
    /// The value used as `‖K‖²`.
    pub norm_k2: T,
}

impl<T: Real> CompositeProblem<T> {
    /// Uses `Σ_i ‖K_i‖²` from the operators' analytic bounds as `‖K‖²`.
    pub fn new(f: Prox<T>, terms: Vec<SmoothedTerm<T>>) -> Result<Self> {
        let mut norm_k2 = T::zero();
        for (i, term) in terms.iter().enumerate() {
            let nb = term
                .op
                .norm_bound()
                .ok_or_else(|| Error::param(format!("term {i} has no operator norm bound; supply one explicitly")))?;
            norm_k2 += nb * nb;
        }
        Self::with_norm_k2(f, terms, norm_k2)
    }

    pub fn with_norm_k2(f: Prox<T>, terms: Vec<SmoothedTerm<T>>, norm_k2: T) -> Result<Self> {
        let first = terms
            .first()
            .ok_or_else(|| Error::param("a composite problem needs at least one term"))?;
        let dom = first.op.domain();
        if let Some(i) = terms.iter().position(|t| t.op.domain() != dom) {
            return Err(Error::shape(format!("term {i} operates on a different domain than term 0")));
        }
        if !(norm_k2 > T::zero() && norm_k2.is_finite()) {
            return Err(Error::param(format!("operator norm bound must be > 0, got {norm_k2}")));
        }
        Ok(CompositeProblem { f, terms, norm_k2 })
    }

    pub fn from_parts<F: ProxFunction<T> + 'static>(f: F, terms: Vec<SmoothedTerm<T>>) -> Result<Self> {
        Self::new(Arc::new(f), terms)
    }

    pub fn domain(&self) -> &[Shape] {
        self.terms[0].op.domain()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    /// `L² = Σ_i L_i²`.
    pub fn lipschitz_sq(&self) -> T {
        self.terms.iter().map(|t| t.lipschitz() * t.lipschitz()).sum()
    }

    /// Analytic `‖K_i‖` bounds, falling back to `√normK2` for operators without one.
    pub fn block_norms(&self) -> Vec<T> {
        self.terms
            .iter()
            .map(|t| t.op.norm_bound().unwrap_or_else(|| self.norm_k2.sqrt()))
            .collect()
    }

    pub fn objective(&self, x: &BlockVector<T>) -> Result<T> {
        moreau::objective(self.f.as_ref(), &self.terms, x)
    }

    pub fn smoothed_objective(&self, mu: T, x: &BlockVector<T>) -> Result<T> {
        moreau::smoothed_objective(self.f.as_ref(), &self.terms, mu, x)
    }

    /// `Σ_i K_i* prox_{μ⁻¹g_i*}(K_i y/μ)`.
    pub fn smooth_grad(&self, mu: T, y: &BlockVector<T>) -> Result<BlockVector<T>> {
        let mut grad = BlockVector::zeros(self.domain());
        for term in &self.terms {
            grad.axpy(T::one(), &moreau::composite_grad(term, mu, y)?)?;
        }
        Ok(grad)
    }
}

/// How the gradient of the smoothed sum is formed each iteration.
#[derive(Debug, Clone)]
pub enum GradEstimator<T> {
    Full,
    /// Term `i` is included with probability `p_i` and reweighted by `1/p_i`.
    Bernoulli { probs: Vec<T>, rng: RngStream },
}

impl<T: Real> GradEstimator<T> {
    pub fn bernoulli(probs: Vec<T>, seed: u64) -> Result<Self> {
        if let Some(p) = probs.iter().find(|p| !(**p > T::zero() && **p <= T::one())) {
            return Err(Error::param(format!("inclusion probabilities must lie in (0, 1], got {p}")));
        }
        Ok(GradEstimator::Bernoulli {
            probs,
            rng: RngStream::new(seed),
        })
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            GradEstimator::Full => None,
            GradEstimator::Bernoulli { rng, .. } => Some(rng.seed()),
        }
    }

    fn check_len(&self, terms: usize) -> Result<()> {
        match self {
            GradEstimator::Bernoulli { probs, .. } if probs.len() != terms => Err(Error::param(format!(
                "{} inclusion probabilities for {terms} terms",
                probs.len()
            ))),
            _ => Ok(()),
        }
    }

    /// One draw of `ξ = Σ_i (ε_i/p_i) K_i* prox_{μ⁻¹g_i*}(K_i y/μ)`, with the
    /// number of per-term evaluations it cost.
    pub fn estimate(&mut self, p: &CompositeProblem<T>, mu: T, y: &BlockVector<T>) -> Result<(BlockVector<T>, u64)> {
        self.check_len(p.num_terms())?;
        let mut grad = BlockVector::zeros(p.domain());
        let mut evals = 0;
        for (i, term) in p.terms.iter().enumerate() {
            let w = match self {
                GradEstimator::Full => T::one(),
                GradEstimator::Bernoulli { probs, rng } => {
                    if rng.bernoulli(probs[i].as_f64()) {
                        T::one() / probs[i]
                    } else {
                        continue;
                    }
                }
            };
            grad.axpy(w, &moreau::composite_grad(term, mu, y)?)?;
            evals += 1;
        }
        Ok((grad, evals))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow<T> {
    pub k: usize,
    pub wall_ms: f64,
    pub objective: T,
    /// `F^{μ_k}(x_k)`; smoothing methods only.
    pub smoothed: Option<T>,
    pub mu: Option<T>,
    /// `γ_k`, or `τ` for the primal-dual methods.
    pub gamma: T,
    pub t: Option<T>,
    pub dist_to_ref: Option<T>,
    /// Cumulative count of per-term conjugate-prox evaluations.
    pub grad_evals: u64,
    /// `max_i ‖y_i‖/L_i` over the dual blocks; primal-dual methods only.
    pub dual_radius: Option<T>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace<T> {
    pub rows: Vec<TraceRow<T>>,
}

impl<T: Real> Trace<T> {
    pub fn last(&self) -> Option<&TraceRow<T>> {
        self.rows.last()
    }

    pub fn min_objective(&self) -> Option<T> {
        self.rows.iter().map(|r| r.objective).reduce(T::min)
    }

    pub fn at(&self, k: usize) -> Option<&TraceRow<T>> {
        self.rows.iter().find(|r| r.k == k)
    }
}

#[derive(Debug, Clone)]
pub struct TraceOptions<T: Real> {
    /// Record every `every` iterations, plus `k = 0` and the final one.
    pub every: usize,
    pub reference: Option<BlockVector<T>>,
}

impl<T: Real> TraceOptions<T> {
    pub fn every(every: usize) -> Self {
        TraceOptions { every, reference: None }
    }

    pub fn with_reference(mut self, x_ref: BlockVector<T>) -> Self {
        self.reference = Some(x_ref);
        self
    }
}

#[derive(Debug, Clone)]
pub struct SolverResult<T: Real> {
    pub x_final: BlockVector<T>,
    pub trace: Trace<T>,
    pub iterations: usize,
    pub seed: Option<u64>,
}

#[derive(Debug, thiserror::Error)]
pub enum SolverError<T: Real> {
    #[error(transparent)]
    Core(#[from] Error),

    /// The objective became non-finite or grew past `10⁶·F(x₀)`; carries the
    /// trace up to and including the offending row.
    #[error("diverged at iteration {k}")]
    Diverged { k: usize, trace: Trace<T> },
}

pub type SolverOutcome<T> = std::result::Result<SolverResult<T>, SolverError<T>>;

const DIVERGENCE_FACTOR: f64 = 1e6;

/// Smallest smoothing parameter handed to the envelope gradients.
pub const MU_FLOOR: f64 = 1e-12;

struct Recorder<'a, T: Real> {
    p: &'a CompositeProblem<T>,
    opts: &'a TraceOptions<T>,
    iters: usize,
    start: Instant,
    f0: T,
    trace: Trace<T>,
}

struct RowParams<T> {
    mu: Option<T>,
    gamma: T,
    t: Option<T>,
    grad_evals: u64,
    dual_radius: Option<T>,
}

impl<'a, T: Real> Recorder<'a, T> {
    fn new(p: &'a CompositeProblem<T>, x0: &BlockVector<T>, iters: usize, opts: &'a TraceOptions<T>) -> Result<Self> {
        if iters == 0 {
            return Err(Error::param("iteration count must be ≥ 1"));
        }
        if opts.every == 0 {
            return Err(Error::param("trace interval must be ≥ 1"));
        }
        check_structure(p.domain(), x0, "initial point")?;
        if let Some(r) = &opts.reference {
            check_structure(p.domain(), r, "reference point")?;
        }
        Ok(Recorder {
            p,
            opts,
            iters,
            start: Instant::now(),
            f0: p.objective(x0)?,
            trace: Trace::default(),
        })
    }

    fn due(&self, k: usize) -> bool {
        k % self.opts.every == 0 || k == self.iters
    }

    fn record(&mut self, k: usize, x: &BlockVector<T>, rp: RowParams<T>) -> std::result::Result<(), SolverError<T>> {
        let objective = self.p.objective(x)?;
        let smoothed = match rp.mu {
            Some(mu) => Some(self.p.smoothed_objective(mu, x)?),
            None => None,
        };
        let dist_to_ref = match &self.opts.reference {
            Some(r) => Some(x.dist(r)?),
            None => None,
        };
        self.trace.rows.push(TraceRow {
            k,
            wall_ms: self.start.elapsed().as_secs_f64() * 1e3,
            objective,
            smoothed,
            mu: rp.mu,
            gamma: rp.gamma,
            t: rp.t,
            dist_to_ref,
            grad_evals: rp.grad_evals,
            dual_radius: rp.dual_radius,
        });
        let blown = self.f0 > T::zero() && objective > self.f0 * T::lit(DIVERGENCE_FACTOR);
        if !objective.is_finite() || blown {
            return Err(SolverError::Diverged {
                k,
                trace: std::mem::take(&mut self.trace),
            });
        }
        Ok(())
    }
}

/// Deterministic VAST with the full gradient of the smoothed sum.
pub fn run_vast<T: Real>(
    p: &CompositeProblem<T>,
    kind: &ScheduleKind<T>,
    x0: &BlockVector<T>,
    iters: usize,
    opts: &TraceOptions<T>,
) -> SolverOutcome<T> {
    accelerated(p, kind, GradEstimator::Full, x0, iters, opts)
}

/// sVAST; requires the `k^{-3/2}` schedule.
pub fn run_svast<T: Real>(
    p: &CompositeProblem<T>,
    kind: &ScheduleKind<T>,
    est: GradEstimator<T>,
    x0: &BlockVector<T>,
    iters: usize,
    opts: &TraceOptions<T>,
) -> SolverOutcome<T> {
    if !matches!(kind.variant, ScheduleVariant::Svast { .. }) {
        return Err(Error::param("the stochastic method needs the k^{-3/2} schedule").into());
    }
    accelerated(p, kind, est, x0, iters, opts)
}

fn accelerated<T: Real>(
    p: &CompositeProblem<T>,
    kind: &ScheduleKind<T>,
    mut est: GradEstimator<T>,
    x0: &BlockVector<T>,
    iters: usize,
    opts: &TraceOptions<T>,
) -> SolverOutcome<T> {
    est.check_len(p.num_terms())?;
    let mut rec = Recorder::new(p, x0, iters, opts)?;
    let mut state = schedules::init(kind)?;
    let mut evals = 0;
    rec.record(0, x0, smoothing_row(&state, evals))?;

    let mut x_prev = x0.clone();
    let mut y = x0.clone();
    for k in 1..=iters {
        let (grad, n) = est.estimate(p, state.mu.max(T::lit(MU_FLOOR)), &y)?;
        evals += n;
        let step = BlockVector::lincomb(T::one(), &y, -state.gamma, &grad)?;
        let x = p.f.prox(&step, state.gamma)?;
        let next = schedules::advance(&state, kind);
        let beta = (state.t - T::one()) / next.t;
        y = BlockVector::lincomb(T::one() + beta, &x, -beta, &x_prev)?;
        if rec.due(k) {
            rec.record(k, &x, smoothing_row(&state, evals))?;
        }
        x_prev = x;
        state = next;
    }
    Ok(SolverResult {
        x_final: x_prev,
        trace: rec.trace,
        iterations: iters,
        seed: est.seed(),
    })
}

fn smoothing_row<T: Real>(s: &schedules::ScheduleState<T>, evals: u64) -> RowParams<T> {
    RowParams {
        mu: Some(s.mu.max(T::lit(MU_FLOOR))),
        gamma: s.gamma,
        t: Some(s.t),
        grad_evals: evals,
        dual_radius: None,
    }
}

/// Step sizes `(τ, σ)` for PDHG: `τ = σ_i = γ/‖K‖`.
pub fn pdhg_default_steps<T: Real>(p: &CompositeProblem<T>, gamma: T) -> (T, Vec<T>) {
    let s = gamma / p.norm_k2.sqrt();
    (s, vec![s; p.num_terms()])
}

/// Step sizes `(τ, σ)` for sPDHG: `τ = γ/(m·max_i ‖K_i‖)` and `σ_i = γ/‖K‖`,
/// or `σ_i = γ/‖K_i‖` when `per_block` is set.
pub fn spdhg_default_steps<T: Real>(p: &CompositeProblem<T>, gamma: T, per_block: bool) -> (T, Vec<T>) {
    let norms = p.block_norms();
    let max = norms.iter().copied().fold(T::zero(), T::max);
    let tau = gamma / (T::from_count(p.num_terms()) * max);
    let sigma = if per_block {
        norms.iter().map(|&n| gamma / n).collect()
    } else {
        vec![gamma / p.norm_k2.sqrt(); p.num_terms()]
    };
    (tau, sigma)
}

pub fn run_pdhg<T: Real>(
    p: &CompositeProblem<T>,
    tau: T,
    sigma: &[T],
    x0: &BlockVector<T>,
    iters: usize,
    opts: &TraceOptions<T>,
) -> SolverOutcome<T> {
    primal_dual(p, tau, sigma, Sampling::All, x0, iters, opts)
}

/// Serial sampling: one dual block per iteration, index drawn with
/// probability `probs_i/Σ probs`.
#[allow(clippy::too_many_arguments)]
pub fn run_spdhg<T: Real>(
    p: &CompositeProblem<T>,
    tau: T,
    sigma: &[T],
    probs: &[T],
    rng: RngStream,
    x0: &BlockVector<T>,
    iters: usize,
    opts: &TraceOptions<T>,
) -> SolverOutcome<T> {
    if probs.len() != p.num_terms() {
        return Err(Error::param(format!("{} sampling probabilities for {} terms", probs.len(), p.num_terms())).into());
    }
    if let Some(q) = probs.iter().find(|q| !(**q > T::zero() && **q <= T::one())) {
        return Err(Error::param(format!("sampling probabilities must lie in (0, 1], got {q}")).into());
    }
    let total: T = probs.iter().copied().sum();
    let normalized = probs.iter().map(|&q| q / total).collect();
    primal_dual(p, tau, sigma, Sampling::Serial { probs: normalized, rng }, x0, iters, opts)
}

enum Sampling<T> {
    All,
    Serial { probs: Vec<T>, rng: RngStream },
}

fn primal_dual<T: Real>(
    p: &CompositeProblem<T>,
    tau: T,
    sigma: &[T],
    mut sampling: Sampling<T>,
    x0: &BlockVector<T>,
    iters: usize,
    opts: &TraceOptions<T>,
) -> SolverOutcome<T> {
    if !(tau > T::zero() && tau.is_finite()) {
        return Err(Error::param(format!("primal step must be > 0, got {tau}")).into());
    }
    if sigma.len() != p.num_terms() || sigma.iter().any(|s| !(*s > T::zero() && s.is_finite())) {
        return Err(Error::param("need one positive dual step per term").into());
    }
    let mut rec = Recorder::new(p, x0, iters, opts)?;
    let mut duals: Vec<BlockVector<T>> = p.terms.iter().map(|t| BlockVector::zeros(t.op.codomain())).collect();
    let mut evals = 0;
    let radius = |duals: &[BlockVector<T>]| {
        duals
            .iter()
            .zip(&p.terms)
            .map(|(y, t)| y.norm2() / t.lipschitz())
            .fold(T::zero(), T::max)
    };
    let row = |evals, r| RowParams {
        mu: None,
        gamma: tau,
        t: None,
        grad_evals: evals,
        dual_radius: Some(r),
    };
    rec.record(0, x0, row(evals, radius(&duals)))?;

    let mut x = x0.clone();
    let mut z = BlockVector::zeros(p.domain());
    let mut z_bar = z.clone();
    let mut picked = Vec::with_capacity(p.num_terms());
    for k in 1..=iters {
        let step = BlockVector::lincomb(T::one(), &x, -tau, &z_bar)?;
        x = p.f.prox(&step, tau)?;

        picked.clear();
        match &mut sampling {
            Sampling::All => picked.extend((0..p.num_terms()).map(|i| (i, T::one()))),
            Sampling::Serial { probs, rng } => {
                let w: Vec<f64> = probs.iter().map(|q| q.as_f64()).collect();
                let i = rng.categorical(&w);
                picked.push((i, T::one() / probs[i]));
            }
        }
        let mut deltas = Vec::with_capacity(picked.len());
        for &(i, w) in &picked {
            let term = &p.terms[i];
            let kx = term.op.apply(&x)?;
            let arg = BlockVector::lincomb(T::one(), &duals[i], sigma[i], &kx)?;
            let y_new = term.g.conj_prox(&arg, sigma[i])?;
            let dy = BlockVector::lincomb(T::one(), &y_new, -T::one(), &duals[i])?;
            deltas.push((term.op.adjoint(&dy)?, w));
            duals[i] = y_new;
            evals += 1;
        }
        for (dz, _) in &deltas {
            z.axpy(T::one(), dz)?;
        }
        z_bar = z.clone();
        for (dz, w) in &deltas {
            z_bar.axpy(*w, dz)?;
        }
        if rec.due(k) {
            rec.record(k, &x, row(evals, radius(&duals)))?;
        }
    }
    let seed = match &sampling {
        Sampling::All => None,
        Sampling::Serial { rng, .. } => Some(rng.seed()),
    };
    Ok(SolverResult {
        x_final: x,
        trace: rec.trace,
        iterations: iters,
        seed,
    })
}
