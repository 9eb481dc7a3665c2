//! Operator norm estimates for the imaging operators.

use std::str::FromStr;
use std::sync::Arc;

use varsmooth::linops::{conv2d, d1_rows, d2_cols, estimate_norm, stack, Boundary, Kernel, Operator};
use varsmooth::spaces::RngStream;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OpKind {
    D1,
    D2,
    GradStack,
    Blur { size: usize, sigma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpSpec {
    pub kind: OpKind,
    pub m: usize,
    pub n: usize,
}

/// `"256x256"` → `(256, 256)`.
pub fn parse_dims(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("dimensions must look like 64x48, got {s:?}"))?;
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("bad dimension {v:?}: {e}"));
    let dims = (parse(a)?, parse(b)?);
    if dims.0 == 0 || dims.1 == 0 {
        return Err(format!("dimensions must be positive, got {s:?}"));
    }
    Ok(dims)
}

impl OpKind {
    pub fn parse(name: &str, blur_size: usize, blur_sigma: f64) -> Result<Self, String> {
        match name {
            "d1" => Ok(OpKind::D1),
            "d2" => Ok(OpKind::D2),
            "grad-stack" => Ok(OpKind::GradStack),
            "blur" => Ok(OpKind::Blur {
                size: blur_size,
                sigma: blur_sigma,
            }),
            _ => Err(format!("unknown operator {name:?} (expected d1, d2, grad-stack or blur)")),
        }
    }
}

impl FromStr for OpSpec {
    type Err = String;

    /// `name:MxN`, with the default 9×9, σ = 1.5 kernel for `blur`.
    fn from_str(s: &str) -> Result<Self, String> {
        let (name, dims) = s.split_once(':').ok_or_else(|| format!("expected NAME:MxN, got {s:?}"))?;
        let (m, n) = parse_dims(dims)?;
        Ok(OpSpec {
            kind: OpKind::parse(name, 9, 1.5)?,
            m,
            n,
        })
    }
}

impl OpSpec {
    pub fn build(&self) -> Result<Operator<f64>, varsmooth::Error> {
        let (m, n) = (self.m, self.n);
        Ok(match self.kind {
            OpKind::D1 => Arc::new(d1_rows(m, n)?),
            OpKind::D2 => Arc::new(d2_cols(m, n)?),
            OpKind::GradStack => Arc::new(stack(vec![Arc::new(d1_rows(m, n)?), Arc::new(d2_cols(m, n)?)])?),
            OpKind::Blur { size, sigma } => Arc::new(conv2d(&Kernel::gaussian(size, sigma)?, m, n, Boundary::Symmetric)?),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormReport {
    pub estimate: f64,
    pub bound: Option<f64>,
}

pub const POWER_ITERS: usize = 1000;
pub const POWER_TOL: f64 = 1e-9;

pub fn report(spec: &OpSpec, seed: u64) -> Result<NormReport, varsmooth::Error> {
    let op = spec.build()?;
    let estimate = estimate_norm(op.as_ref(), POWER_ITERS, POWER_TOL, &mut RngStream::new(seed))?;
    Ok(NormReport {
        estimate,
        bound: op.norm_bound(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parsing() {
        assert_eq!(parse_dims("256x128"), Ok((256, 128)));
        assert!(parse_dims("256").is_err());
        assert!(parse_dims("0x3").is_err());
        let s: OpSpec = "grad-stack:32x16".parse().unwrap();
        assert_eq!((s.kind, s.m, s.n), (OpKind::GradStack, 32, 16));
        assert!("sobel:8x8".parse::<OpSpec>().is_err());
        assert!("d1".parse::<OpSpec>().is_err());
    }

    #[test]
    fn small_estimates_respect_bounds() {
        for name in ["d1", "d2", "grad-stack", "blur"] {
            let spec: OpSpec = format!("{name}:24x20").parse().unwrap();
            let r = report(&spec, 3).unwrap();
            let bound = r.bound.unwrap();
            assert!(r.estimate > 0.5 * bound && r.estimate <= bound * (1.0 + 1e-9), "{name}: {r:?}");
        }
    }
}
