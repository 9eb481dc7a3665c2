//! Total-variation benchmark problems and synthetic data.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linops::{conv2d, d1_rows, d2_cols, Boundary, Kernel, LinearOperator};
use crate::moreau::SmoothedTerm;
use crate::proxlib::{l1_norm, l2_dist, zero_function};
use crate::scalar::Real;
use crate::solvers::CompositeProblem;
use crate::spaces::{gaussian, BlockVector, RngStream, Shape};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlurSpec {
    /// Odd side length of the Gaussian kernel.
    pub size: usize,
    pub std_dev: f64,
    pub symmetric_boundary: bool,
}

impl Default for BlurSpec {
    fn default() -> Self {
        BlurSpec {
            size: 9,
            std_dev: 1.5,
            symmetric_boundary: true,
        }
    }
}

impl BlurSpec {
    pub fn kernel<T: Real>(&self) -> Result<Kernel<T>> {
        Kernel::gaussian(self.size, T::lit(self.std_dev))
    }

    pub fn boundary(&self) -> Boundary {
        if self.symmetric_boundary {
            Boundary::Symmetric
        } else {
            Boundary::Zero
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageProblemSpec {
    pub m: usize,
    pub n: usize,
    pub alpha: f64,
    pub noise_sigma: f64,
    pub blur: Option<BlurSpec>,
    pub seed: u64,
}

impl ImageProblemSpec {
    pub fn denoising(m: usize, n: usize, seed: u64) -> Self {
        ImageProblemSpec {
            m,
            n,
            alpha: 2.0,
            noise_sigma: 0.1,
            blur: None,
            seed,
        }
    }

    pub fn deblurring(m: usize, n: usize, seed: u64) -> Self {
        ImageProblemSpec {
            m,
            n,
            alpha: 10.0,
            noise_sigma: 0.1,
            blur: Some(BlurSpec::default()),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        Shape::image(self.m, self.n)?;
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::param(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::param(format!("noise sigma must be ≥ 0, got {}", self.noise_sigma)));
        }
        if let Some(b) = &self.blur {
            b.kernel::<f64>()?;
        }
        Ok(())
    }

    fn noise_seed(&self) -> u64 {
        self.seed.wrapping_add(0x9e37_79b9_7f4a_7c15)
    }
}

fn image_dims<T: Real>(b: &BlockVector<T>) -> Result<(usize, usize)> {
    match b.blocks() {
        [blk] => blk
            .shape
            .as_image()
            .ok_or_else(|| Error::shape(format!("expected an image, got shape {}", blk.shape))),
        _ => Err(Error::shape("expected a single image block")),
    }
}

/// `α‖x − b‖₂ + ‖D₁x‖₁ + ‖D₂x‖₁`.
pub fn build_denoising<T: Real>(b_img: &BlockVector<T>, alpha: T) -> Result<CompositeProblem<T>> {
    let (m, n) = image_dims(b_img)?;
    let terms = vec![
        SmoothedTerm::from_parts(l1_norm(T::one())?, d1_rows(m, n)?)?,
        SmoothedTerm::from_parts(l1_norm(T::one())?, d2_cols(m, n)?)?,
    ];
    CompositeProblem::from_parts(l2_dist(alpha, b_img.clone())?, terms)
}

/// `α‖Cx − b‖₂ + ‖D₁x‖₁ + ‖D₂x‖₁` with `C` a Gaussian blur; `f = 0`.
pub fn build_deblurring<T: Real>(b_img: &BlockVector<T>, alpha: T, blur: &BlurSpec) -> Result<CompositeProblem<T>> {
    let (m, n) = image_dims(b_img)?;
    let c = conv2d(&blur.kernel()?, m, n, blur.boundary())?;
    let terms = vec![
        SmoothedTerm::from_parts(l2_dist(alpha, b_img.clone())?, c)?,
        SmoothedTerm::from_parts(l1_norm(T::one())?, d1_rows(m, n)?)?,
        SmoothedTerm::from_parts(l1_norm(T::one())?, d2_cols(m, n)?)?,
    ];
    CompositeProblem::new(Arc::new(zero_function()), terms)
}

/// `α‖x − b‖₂ + Σ_i |x_{i+1} − x_i|` on a signal stored as an `n×1` image.
pub fn build_denoising_1d<T: Real>(b: &[T], alpha: T) -> Result<CompositeProblem<T>> {
    let n = b.len();
    let b_img = BlockVector::from_vec(Shape::image(n, 1)?, b.to_vec())?;
    let terms = vec![SmoothedTerm::from_parts(l1_norm(T::one())?, d1_rows(n, 1)?)?];
    CompositeProblem::from_parts(l2_dist(alpha, b_img)?, terms)
}

/// Piecewise-constant `m×n` test image in `[0, 1]`: a background, two
/// rectangles and a disc, with layout and grey levels drawn from `rng`.
pub fn make_phantom<T: Real>(m: usize, n: usize, rng: &mut RngStream) -> Result<BlockVector<T>> {
    if m < 8 || n < 8 {
        return Err(Error::param(format!("phantom needs at least 8x8 pixels, got {m}x{n}")));
    }
    let (mf, nf) = (m as f64, n as f64);
    // distinct grey levels, one per region
    let levels = [
        0.1 + 0.1 * rng.uniform(),
        0.4 + 0.1 * rng.uniform(),
        0.65 + 0.1 * rng.uniform(),
        0.85 + 0.1 * rng.uniform(),
    ];
    let mut img = vec![levels[0]; m * n];
    let mut rect = |level: f64, rng: &mut RngStream| {
        let h = ((0.25 + 0.25 * rng.uniform()) * mf).max(2.0) as usize;
        let w = ((0.25 + 0.25 * rng.uniform()) * nf).max(2.0) as usize;
        let i0 = 1 + (rng.uniform() * (m - h - 1) as f64) as usize;
        let j0 = 1 + (rng.uniform() * (n - w - 1) as f64) as usize;
        for i in i0..i0 + h {
            img[i * n + j0..i * n + j0 + w].fill(level);
        }
    };
    rect(levels[1], rng);
    rect(levels[2], rng);
    let ci = (0.3 + 0.4 * rng.uniform()) * mf;
    let cj = (0.3 + 0.4 * rng.uniform()) * nf;
    let r = (0.12 + 0.08 * rng.uniform()) * mf.min(nf);
    for i in 0..m {
        for j in 0..n {
            let (di, dj) = (i as f64 + 0.5 - ci, j as f64 + 0.5 - cj);
            if di * di + dj * dj <= r * r {
                img[i * n + j] = levels[3];
            }
        }
    }
    BlockVector::from_vec(Shape::image(m, n)?, img.into_iter().map(T::lit).collect())
}

/// Blur (if configured), then add `N(0, σ²)` noise; deterministic in `spec.seed`.
pub fn degrade<T: Real>(x: &BlockVector<T>, spec: &ImageProblemSpec) -> Result<BlockVector<T>> {
    spec.validate()?;
    let (m, n) = image_dims(x)?;
    let mut y = match &spec.blur {
        Some(b) => conv2d(&b.kernel()?, m, n, b.boundary())?.apply(x)?,
        None => x.clone(),
    };
    if spec.noise_sigma > 0.0 {
        let mut rng = RngStream::new(spec.noise_seed());
        let noise = gaussian(&Shape::image(m, n)?, T::lit(spec.noise_sigma), &mut rng)?;
        y.axpy(T::one(), &noise)?;
    }
    Ok(y)
}

/// A benchmark instance: ground truth, observed data and the problem built on it.
#[derive(Debug, Clone)]
pub struct Instance<T: Real> {
    pub clean: BlockVector<T>,
    pub data: BlockVector<T>,
    pub problem: CompositeProblem<T>,
}

/// Phantom from `spec.seed`, degraded per `spec`, then the denoising problem
/// (no blur) or the deblurring problem.
pub fn make_instance<T: Real>(spec: &ImageProblemSpec) -> Result<Instance<T>> {
    spec.validate()?;
    let clean = make_phantom(spec.m, spec.n, &mut RngStream::new(spec.seed))?;
    let data = degrade(&clean, spec)?;
    let alpha = T::lit(spec.alpha);
    let problem = match &spec.blur {
        Some(b) => build_deblurring(&data, alpha, b)?,
        None => build_denoising(&data, alpha)?,
    };
    Ok(Instance { clean, data, problem })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linops::Identity;
    use crate::schedules::ScheduleKind;
    use crate::solvers::{run_vast, TraceOptions};

    #[test]
    fn denoising_objective_at_data() {
        let mut rng = RngStream::new(4);
        let b = make_phantom::<f64>(10, 12, &mut rng).unwrap();
        let p = build_denoising(&b, 2.0).unwrap();
        assert_eq!(p.norm_k2, 8.0);
        let d1 = d1_rows(10, 12).unwrap();
        let d2 = d2_cols(10, 12).unwrap();
        let tv: f64 = d1.apply(&b).unwrap().iter().map(|v| v.abs()).sum::<f64>()
            + d2.apply(&b).unwrap().iter().map(|v| v.abs()).sum::<f64>();
        assert!((p.objective(&b).unwrap() - tv).abs() < 1e-12);
    }

    #[test]
    fn constant_image_is_optimal() {
        let s = [Shape::image(8, 8).unwrap()];
        let b = BlockVector::filled(&s, 0.3);
        let p = build_denoising(&b, 2.0).unwrap();
        assert_eq!(p.objective(&b).unwrap(), 0.0);
        let x0 = BlockVector::zeros(&s);
        let kind = ScheduleKind::vast(1.0, p.norm_k2).unwrap();
        let res = run_vast(&p, &kind, &x0, 3000, &TraceOptions::every(3000)).unwrap();
        assert!(res.trace.last().unwrap().objective < 5e-3);
    }

    #[test]
    fn deblurring_norm_and_zero_f() {
        let s = [Shape::image(16, 16).unwrap()];
        let b = BlockVector::filled(&s, 0.5f64);
        let p = build_deblurring(&b, 10.0, &BlurSpec::default()).unwrap();
        assert!((p.norm_k2 - 9.0).abs() < 1e-12);
        let x = gaussian_img(16, 16, 1);
        assert_eq!(p.f.prox(&x, 3.0).unwrap(), x);
    }

    fn gaussian_img(m: usize, n: usize, seed: u64) -> BlockVector<f64> {
        gaussian(&Shape::image(m, n).unwrap(), 1.0, &mut RngStream::new(seed)).unwrap()
    }

    #[test]
    fn identity_kernel_matches_denoising_data_term() {
        let b = gaussian_img(9, 9, 2);
        let x = gaussian_img(9, 9, 3);
        let one = BlurSpec {
            size: 1,
            std_dev: 1.0,
            symmetric_boundary: false,
        };
        let deblur = build_deblurring(&b, 2.0, &one).unwrap();
        let denoise = build_denoising(&b, 2.0).unwrap();
        assert!((deblur.objective(&x).unwrap() - denoise.objective(&x).unwrap()).abs() < 1e-12);
        let id = Identity::new(vec![Shape::image(9, 9).unwrap()]);
        let cx = deblur.terms[0].op.apply(&x).unwrap();
        assert_eq!(cx, LinearOperator::<f64>::apply(&id, &x).unwrap());
    }

    #[test]
    fn phantom_properties() {
        let a = make_phantom::<f64>(32, 24, &mut RngStream::new(9)).unwrap();
        let b = make_phantom::<f64>(32, 24, &mut RngStream::new(9)).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|&v| (0.0..=1.0).contains(&v)));
        let mut levels: Vec<f64> = a.iter().copied().collect();
        levels.sort_by(f64::total_cmp);
        levels.dedup();
        assert!(levels.len() >= 3, "{levels:?}");
        // differences are nonzero only at region boundaries
        let d1 = d1_rows(32, 24).unwrap();
        let nnz = d1.apply(&a).unwrap().iter().filter(|v| **v != 0.0).count();
        assert!(nnz > 0 && nnz < 32 * 24 / 4);
        assert!(make_phantom::<f64>(7, 20, &mut RngStream::new(1)).is_err());
    }

    #[test]
    fn degrade_identity_and_noise_level() {
        let x = make_phantom::<f64>(16, 16, &mut RngStream::new(1)).unwrap();
        let mut spec = ImageProblemSpec::denoising(16, 16, 5);
        spec.noise_sigma = 0.0;
        assert_eq!(degrade(&x, &spec).unwrap(), x);

        let zero = BlockVector::<f64>::zeros(&[Shape::image(300, 300).unwrap()]);
        spec.m = 300;
        spec.n = 300;
        spec.noise_sigma = 0.1;
        let y = degrade(&zero, &spec).unwrap();
        let std = (y.norm_sq() / y.len() as f64).sqrt();
        assert!((std - 0.1).abs() < 0.002, "{std}");
        assert_eq!(degrade(&zero, &spec).unwrap(), y);
    }

    #[test]
    fn degrade_blurs_before_noise() {
        let x = make_phantom::<f64>(16, 16, &mut RngStream::new(1)).unwrap();
        let spec = ImageProblemSpec::deblurring(16, 16, 8);
        let blur = spec.blur.unwrap();
        let c = conv2d(&blur.kernel::<f64>().unwrap(), 16, 16, blur.boundary()).unwrap();
        let mut noise_only = spec;
        noise_only.blur = None;
        let expect = degrade(&c.apply(&x).unwrap(), &noise_only).unwrap();
        assert_eq!(degrade(&x, &spec).unwrap(), expect);
    }

    #[test]
    fn one_dimensional_builder() {
        let p = build_denoising_1d(&[0.0, 0.0, 1.0, 1.0], 2.0).unwrap();
        assert_eq!(p.norm_k2, 4.0);
        assert_eq!(p.num_terms(), 1);
        let b = BlockVector::from_vec(Shape::image(4, 1).unwrap(), vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        assert_eq!(p.objective(&b).unwrap(), 1.0);
    }

    #[test]
    fn instance_is_deterministic() {
        let spec = ImageProblemSpec::denoising(12, 12, 3);
        let a = make_instance::<f64>(&spec).unwrap();
        let b = make_instance::<f64>(&spec).unwrap();
        assert_eq!(a.data, b.data);
        assert!(a.data.dist(&a.clean).unwrap() > 0.0);
        let bad = ImageProblemSpec { alpha: 0.0, ..spec };
        assert!(make_instance::<f64>(&bad).is_err());
    }
}
