//! Log–log slope of the relative objective over an iteration window.

use crate::trace_csv::CsvTrace;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// Rows in the window that entered the fit.
    pub used: usize,
    /// Rows in the window dropped for a missing or non-positive value.
    pub clipped: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum RateError {
    #[error("need at least {need} usable rows in [{k_min}, {k_max}], found {found} ({clipped} clipped as non-positive or missing)")]
    TooFew {
        need: usize,
        found: usize,
        clipped: usize,
        k_min: usize,
        k_max: usize,
    },
    #[error("empty window: k_min {0} > k_max {1}")]
    Window(usize, usize),
}

pub const MIN_ROWS: usize = 10;

/// Ordinary least squares of `ln v` against `ln k`.
pub fn fit_power_law(points: &[(usize, Option<f64>)], k_min: usize, k_max: usize) -> Result<RateFit, RateError> {
    if k_min > k_max {
        return Err(RateError::Window(k_min, k_max));
    }
    let window = points.iter().filter(|(k, _)| (k_min..=k_max).contains(k) && *k > 0);
    let mut xy = Vec::new();
    let mut clipped = 0;
    for &(k, v) in window {
        match v {
            Some(v) if v > 0.0 && v.is_finite() => xy.push(((k as f64).ln(), v.ln())),
            _ => clipped += 1,
        }
    }
    if xy.len() < MIN_ROWS {
        return Err(RateError::TooFew {
            need: MIN_ROWS,
            found: xy.len(),
            clipped,
            k_min,
            k_max,
        });
    }
    let n = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / n;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = xy.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xy.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    Ok(RateFit {
        slope,
        intercept: my - slope * mx,
        used: xy.len(),
        clipped,
    })
}

pub fn fit_trace(trace: &CsvTrace, k_min: usize, k_max: usize) -> Result<RateFit, RateError> {
    let points: Vec<_> = trace.rows.iter().map(|r| (r.k, r.rel_objective)).collect();
    fit_power_law(&points, k_min, k_max)
}
