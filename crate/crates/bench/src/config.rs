//! Flat `key=value` experiment configuration.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use varsmooth::problems::{BlurSpec, ImageProblemSpec};

#[derive(Debug, thiserror::Error)]
#[error("config line {line}: {message}")]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

fn err(line: usize, message: impl Into<String>) -> ConfigError {
    ConfigError {
        line,
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    Denoise,
    Deblur,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    Vast,
    VastConstMu,
    Svast,
    Pdhg,
    Spdhg,
}

impl FromStr for ProblemKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "denoise" => Ok(ProblemKind::Denoise),
            "deblur" => Ok(ProblemKind::Deblur),
            _ => Err(format!("unknown problem {s:?} (expected denoise or deblur)")),
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProblemKind::Denoise => "denoise",
            ProblemKind::Deblur => "deblur",
        })
    }
}

impl FromStr for SolverKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "vast" => Ok(SolverKind::Vast),
            "vast-constmu" => Ok(SolverKind::VastConstMu),
            "svast" => Ok(SolverKind::Svast),
            "pdhg" => Ok(SolverKind::Pdhg),
            "spdhg" => Ok(SolverKind::Spdhg),
            _ => Err(format!("unknown solver {s:?} (expected vast, vast-constmu, svast, pdhg or spdhg)")),
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolverKind::Vast => "vast",
            SolverKind::VastConstMu => "vast-constmu",
            SolverKind::Svast => "svast",
            SolverKind::Pdhg => "pdhg",
            SolverKind::Spdhg => "spdhg",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: ProblemKind,
    pub solver: SolverKind,
    pub m: usize,
    pub n: usize,
    /// Defaults to 2 for denoising and 10 for deblurring.
    pub alpha: Option<f64>,
    pub noise_sigma: f64,
    pub blur_size: usize,
    pub blur_sigma: f64,
    pub b_param: f64,
    pub iters: usize,
    pub trace_every: usize,
    pub seed: u64,
    pub ref_iters: usize,
    /// Per-term probabilities for the stochastic solvers.
    pub probs: Option<Vec<f64>>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            problem: ProblemKind::Denoise,
            solver: SolverKind::Vast,
            m: 64,
            n: 64,
            alpha: None,
            noise_sigma: 0.1,
            blur_size: 9,
            blur_sigma: 1.5,
            b_param: 1.0,
            iters: 2000,
            trace_every: 10,
            seed: 0,
            ref_iters: 20_000,
            probs: None,
        }
    }
}

const KEYS: [&str; 14] = [
    "problem",
    "solver",
    "m",
    "n",
    "alpha",
    "noise_sigma",
    "blur_size",
    "blur_sigma",
    "b_param",
    "iters",
    "trace_every",
    "seed",
    "ref_iters",
    "probs",
];

fn parse<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e| err(line, format!("{key}: {e}")))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        let mut seen = BTreeSet::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| err(line, format!("expected key=value, got {content:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(err(line, format!("unknown key {key:?}")));
            }
            if !seen.insert(key.to_string()) {
                return Err(err(line, format!("duplicate key {key:?}")));
            }
            match key {
                "problem" => cfg.problem = parse(line, key, value)?,
                "solver" => cfg.solver = parse(line, key, value)?,
                "m" => cfg.m = parse(line, key, value)?,
                "n" => cfg.n = parse(line, key, value)?,
                "alpha" => cfg.alpha = Some(parse(line, key, value)?),
                "noise_sigma" => cfg.noise_sigma = parse(line, key, value)?,
                "blur_size" => cfg.blur_size = parse(line, key, value)?,
                "blur_sigma" => cfg.blur_sigma = parse(line, key, value)?,
                "b_param" => cfg.b_param = parse(line, key, value)?,
                "iters" => cfg.iters = parse(line, key, value)?,
                "trace_every" => cfg.trace_every = parse(line, key, value)?,
                "seed" => cfg.seed = parse(line, key, value)?,
                "ref_iters" => cfg.ref_iters = parse(line, key, value)?,
                "probs" => {
                    let probs = value
                        .split(',')
                        .map(|p| parse::<f64>(line, key, p.trim()))
                        .collect::<Result<Vec<_>, _>>()?;
                    cfg.probs = Some(probs);
                }
                _ => unreachable!("key list checked above"),
            }
        }
        cfg.validate().map_err(|m| err(0, m))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.m < 8 || self.n < 8 {
            return Err(format!("image must be at least 8x8, got {}x{}", self.m, self.n));
        }
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(format!("{name} must be > 0, got {v}"))
            }
        };
        positive("alpha", self.alpha())?;
        positive("b_param", self.b_param)?;
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(format!("noise_sigma must be ≥ 0, got {}", self.noise_sigma));
        }
        if self.problem == ProblemKind::Deblur {
            if self.blur_size % 2 == 0 {
                return Err(format!("blur_size must be odd, got {}", self.blur_size));
            }
            positive("blur_sigma", self.blur_sigma)?;
        }
        if self.iters == 0 || self.trace_every == 0 || self.ref_iters == 0 {
            return Err("iters, trace_every and ref_iters must be ≥ 1".into());
        }
        if let Some(p) = &self.probs {
            if p.len() != self.num_terms() {
                return Err(format!("probs has {} entries, the problem has {} terms", p.len(), self.num_terms()));
            }
            if p.iter().any(|&q| !(q > 0.0 && q <= 1.0)) {
                return Err("probs entries must lie in (0, 1]".into());
            }
        }
        Ok(())
    }

    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(match self.problem {
            ProblemKind::Denoise => 2.0,
            ProblemKind::Deblur => 10.0,
        })
    }

    pub fn num_terms(&self) -> usize {
        match self.problem {
            ProblemKind::Denoise => 2,
            ProblemKind::Deblur => 3,
        }
    }

    /// Explicit `probs`, else 1/2 each for sVAST and uniform for sPDHG.
    pub fn probs(&self) -> Vec<f64> {
        self.probs.clone().unwrap_or_else(|| {
            let m = self.num_terms();
            match self.solver {
                SolverKind::Spdhg => vec![1.0 / m as f64; m],
                _ => vec![0.5; m],
            }
        })
    }

    pub fn problem_spec(&self) -> ImageProblemSpec {
        ImageProblemSpec {
            m: self.m,
            n: self.n,
            alpha: self.alpha(),
            noise_sigma: self.noise_sigma,
            blur: match self.problem {
                ProblemKind::Denoise => None,
                ProblemKind::Deblur => Some(BlurSpec {
                    size: self.blur_size,
                    std_dev: self.blur_sigma,
                    symmetric_boundary: true,
                }),
            },
            seed: self.seed,
        }
    }
}
