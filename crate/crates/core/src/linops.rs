//! Matrix-free linear operators with adjoints.
//!
//! Every operator maps a block structure to a block structure and may carry
//! an analytic upper bound on its operator norm. [`estimate_norm`] provides a
//! power-iteration estimate when no bound is known (or as a cross-check).

use std::fmt::Debug;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::spaces::{check_structure, gaussian_like, BlockVector, RngStream, Shape};

pub trait LinearOperator<T: Real>: Debug + Send + Sync {
    fn domain(&self) -> &[Shape];
    fn codomain(&self) -> &[Shape];

    /// `K x`; `x` has already been checked against [`Self::domain`].
    fn apply_unchecked(&self, x: &BlockVector<T>) -> BlockVector<T>;

    /// `K* y`; `y` has already been checked against [`Self::codomain`].
    fn adjoint_unchecked(&self, y: &BlockVector<T>) -> BlockVector<T>;

    /// Upper bound on `‖K‖`, if one is known analytically.
    fn norm_bound(&self) -> Option<T>;

    fn apply(&self, x: &BlockVector<T>) -> Result<BlockVector<T>> {
        check_structure(self.domain(), x, "operator input")?;
        Ok(self.apply_unchecked(x))
    }

    fn adjoint(&self, y: &BlockVector<T>) -> Result<BlockVector<T>> {
        check_structure(self.codomain(), y, "adjoint input")?;
        Ok(self.adjoint_unchecked(y))
    }
}

pub type Operator<T> = Arc<dyn LinearOperator<T>>;

fn image_block<T: Real>(shape: Shape, data: Vec<T>) -> BlockVector<T> {
    BlockVector::from_vec(shape, data).expect("operator output matches its codomain")
}

#[derive(Debug, Clone)]
pub struct Identity {
    shapes: Vec<Shape>,
}

impl Identity {
    pub fn new(shapes: Vec<Shape>) -> Self {
        Identity { shapes }
    }
}

impl<T: Real> LinearOperator<T> for Identity {
    fn domain(&self) -> &[Shape] {
        &self.shapes
    }
    fn codomain(&self) -> &[Shape] {
        &self.shapes
    }
    fn apply_unchecked(&self, x: &BlockVector<T>) -> BlockVector<T> {
        x.clone()
    }
    fn adjoint_unchecked(&self, y: &BlockVector<T>) -> BlockVector<T> {
        y.clone()
    }
    fn norm_bound(&self) -> Option<T> {
        Some(T::one())
    }
}

/// `c · K`.
#[derive(Debug, Clone)]
pub struct Scaled<T: Real> {
    inner: Operator<T>,
    factor: T,
}

impl<T: Real> Scaled<T> {
    pub fn new(inner: Operator<T>, factor: T) -> Self {
        Scaled { inner, factor }
    }
}

impl<T: Real> LinearOperator<T> for Scaled<T> {
    fn domain(&self) -> &[Shape] {
        self.inner.domain()
    }
    fn codomain(&self) -> &[Shape] {
        self.inner.codomain()
    }
    fn apply_unchecked(&self, x: &BlockVector<T>) -> BlockVector<T> {
        self.inner.apply_unchecked(x).scaled(self.factor)
    }
    fn adjoint_unchecked(&self, y: &BlockVector<T>) -> BlockVector<T> {
        self.inner.adjoint_unchecked(y).scaled(self.factor)
    }
    fn norm_bound(&self) -> Option<T> {
        self.inner.norm_bound().map(|b| b * self.factor.abs())
    }
}

/// Diagonal matrix on a flat vector.
#[derive(Debug, Clone)]
pub struct Diagonal<T> {
    diag: Vec<T>,
    shape: [Shape; 1],
}

impl<T: Real> Diagonal<T> {
    pub fn new(diag: Vec<T>) -> Result<Self> {
        let shape = Shape::vector(diag.len())?;
        Ok(Diagonal { diag, shape: [shape] })
    }
}

impl<T: Real> LinearOperator<T> for Diagonal<T> {
    fn domain(&self) -> &[Shape] {
        &self.shape
    }
    fn codomain(&self) -> &[Shape] {
        &self.shape
    }
    fn apply_unchecked(&self, x: &BlockVector<T>) -> BlockVector<T> {
        let data = x.block(0).iter().zip(&self.diag).map(|(&a, &d)| a * d).collect();
        image_block(self.shape[0].clone(), data)
    }
    fn adjoint_unchecked(&self, y: &BlockVector<T>) -> BlockVector<T> {
        self.apply_unchecked(y)
    }
    fn norm_bound(&self) -> Option<T> {
        Some(self.diag.iter().fold(T::zero(), |m, d| m.max(d.abs())))
    }
}

/// Dense row-major matrix acting on flat vectors.
#[derive(Debug, Clone)]
pub struct DenseMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
    domain: [Shape; 1],
    codomain: [Shape; 1],
}

impl<T: Real> DenseMatrix<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(format!("{} entries for a {rows}x{cols} matrix", data.len())));
        }
        Ok(DenseMatrix {
            rows,
            cols,
            data,
            domain: [Shape::vector(cols)?],
            codomain: [Shape::vector(rows)?],
        })
    }

    /// Entries drawn i.i.d. from `N(0, σ²)`.
    pub fn gaussian(rows: usize, cols: usize, sigma: T, rng: &mut RngStream) -> Result<Self> {
        let data = (0..rows * cols).map(|_| T::lit(rng.standard_normal()) * sigma).collect();
        Self::new(rows, cols, data)
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
}

impl<T: Real> LinearOperator<T> for DenseMatrix<T> {
    fn domain(&self) -> &[Shape] {
        &self.domain
    }
    fn codomain(&self) -> &[Shape] {
        &self.codomain
    }
    fn apply_unchecked(&self, x: &BlockVector<T>) -> BlockVector<T> {
        let x = x.block(0);
        let data = self
            .data
            .chunks_exact(self.cols)
            .map(|row| row.iter().zip(x).map(|(&a, &b)| a * b).sum())
            .collect();
        image_block(self.codomain[0].clone(), data)
    }
    fn adjoint_unchecked(&self, y: &BlockVector<T>) -> BlockVector<T> {
        let mut out = vec![T::zero(); self.cols];
        for (row, &yi) in self.data.chunks_exact(self.cols).zip(y.block(0)) {
            for (o, &a) in out.iter_mut().zip(row) {
                *o += a * yi;
            }
        }
        image_block(self.domain[0].clone(), out)
    }
    /// Frobenius norm.
    fn norm_bound(&self) -> Option<T> {
        Some(self.data.iter().map(|&a| a * a).sum::<T>().sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Rows,
    Cols,
}

/// Forward difference along one image axis, zero in the last row (column).
#[derive(Debug, Clone)]
pub struct ForwardDifference {
    axis: Axis,
    rows: usize,
    cols: usize,
    shape: [Shape; 1],
}

impl ForwardDifference {
    pub fn new(axis: Axis, rows: usize, cols: usize) -> Result<Self> {
        let shape = Shape::image(rows, cols)?;
        Ok(ForwardDifference {
            axis,
            rows,
            cols,
            shape: [shape],
        })
    }
}

impl<T: Real> LinearOperator<T> for ForwardDifference {
    fn domain(&self) -> &[Shape] {
        &self.shape
    }
    fn codomain(&self) -> &[Shape] {
        &self.shape
    }

    fn apply_unchecked(&self, x: &BlockVector<T>) -> BlockVector<T> {
        let (m, n) = (self.rows, self.cols);
        let u = x.block(0);
        let mut out = vec![T::zero(); m * n];
        match self.axis {
            Axis::Rows => {
                for i in 0..m.saturating_sub(1) {
                    for j in 0..n {
                        out[i * n + j] = u[(i + 1) * n + j] - u[i * n + j];
                    }
                }
            }
            Axis::Cols => {
                for i in 0..m {
                    for j in 0..n.saturating_sub(1) {
                        out[i * n + j] = u[i * n + j + 1] - u[i * n + j];
                    }
                }
            }
        }
        image_block(self.shape[0].clone(), out)
    }

    // negative divergence: out[i] = p[i-1] - p[i], where p is taken as zero
    // outside 0..m-1 (the last row of a forward difference is identically zero)
    fn adjoint_unchecked(&self, y: &BlockVector<T>) -> BlockVector<T> {
        let (m, n) = (self.rows, self.cols);
        let p = y.block(0);
        let mut out = vec![T::zero(); m * n];
        match self.axis {
            Axis::Rows => {
                for i in 0..m {
                    for j in 0..n {
                        let up = if i >= 1 { p[(i - 1) * n + j] } else { T::zero() };
                        let here = if i + 1 < m { p[i * n + j] } else { T::zero() };
                        out[i * n + j] = up - here;
                    }
                }
            }
            Axis::Cols => {
                for i in 0..m {
                    for j in 0..n {
                        let left = if j >= 1 { p[i * n + j - 1] } else { T::zero() };
                        let here = if j + 1 < n { p[i * n + j] } else { T::zero() };
                        out[i * n + j] = left - here;
                    }
                }
            }
        }
        image_block(self.shape[0].clone(), out)
    }

    fn norm_bound(&self) -> Option<T> {
        Some(T::lit(2.0))
    }
}

/// Forward differences between consecutive rows: `(D₁u)[i,j] = u[i+1,j] − u[i,j]`.
pub fn d1_rows(m: usize, n: usize) -> Result<ForwardDifference> {
    ForwardDifference::new(Axis::Rows, m, n)
}

/// Forward differences between consecutive columns.
pub fn d2_cols(m: usize, n: usize) -> Result<ForwardDifference> {
    ForwardDifference::new(Axis::Cols, m, n)
}

/// `x ↦ (K₁x, …, K_m x)`. Parts may themselves have multi-block codomains;
/// the stacked codomain is the concatenation.
#[derive(Debug, Clone)]
pub struct StackedOperator<T: Real> {
    parts: Vec<Operator<T>>,
    codomain: Vec<Shape>,
    block_counts: Vec<usize>,
}

impl<T: Real> StackedOperator<T> {
    pub fn parts(&self) -> &[Operator<T>] {
        &self.parts
    }
}

pub fn stack<T: Real>(parts: Vec<Operator<T>>) -> Result<StackedOperator<T>> {
    let first = parts
        .first()
        .ok_or_else(|| Error::param("cannot stack an empty list of operators"))?;
    let domain = first.domain().to_vec();
    for (i, p) in parts.iter().enumerate() {
        if p.domain() != domain.as_slice() {
            return Err(Error::shape(format!("stacked part {i} has a different domain")));
        }
    }
    let codomain = parts.iter().flat_map(|p| p.codomain().iter().cloned()).collect();
    let block_counts = parts.iter().map(|p| p.codomain().len()).collect();
    Ok(StackedOperator {
        parts,
        codomain,
        block_counts,
    })
}

impl<T: Real> LinearOperator<T> for StackedOperator<T> {
    fn domain(&self) -> &[Shape] {
        self.parts[0].domain()
    }
    fn codomain(&self) -> &[Shape] {
        &self.codomain
    }
    fn apply_unchecked(&self, x: &BlockVector<T>) -> BlockVector<T> {
        let outs = self.parts.iter().map(|p| p.apply_unchecked(x)).collect();
        BlockVector::concat(outs).expect("at least one part")
    }
    fn adjoint_unchecked(&self, y: &BlockVector<T>) -> BlockVector<T> {
        let pieces = y
            .clone()
            .split(&self.block_counts)
            .expect("codomain structure was checked");
        let mut acc = BlockVector::zeros(self.domain());
        for (p, yi) in self.parts.iter().zip(&pieces) {
            acc.axpy(T::one(), &p.adjoint_unchecked(yi))
                .expect("adjoints land in the shared domain");
        }
        acc
    }
    /// `sqrt(Σ ‖K_i‖²)`, available when every part has a bound.
    fn norm_bound(&self) -> Option<T> {
        self.parts
            .iter()
            .map(|p| p.norm_bound().map(|b| b * b))
            .sum::<Option<T>>()
            .map(|s| s.sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// Pixels outside the image are zero.
    Zero,
    /// Half-sample mirror: `… u[1] u[0] | u[0] u[1] …`.
    Symmetric,
}

/// Dense 2-D filter with odd side lengths, centred on its middle entry.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Kernel<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if rows % 2 == 0 || cols % 2 == 0 {
            return Err(Error::param(format!("kernel dims must be odd, got {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(Error::param("kernel data does not match its dims"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("kernel entries must be finite"));
        }
        Ok(Kernel { rows, cols, data })
    }

    /// Isotropic Gaussian of the given side length, normalized to sum 1.
    pub fn gaussian(size: usize, std_dev: T) -> Result<Self> {
        if !(std_dev > T::zero()) {
            return Err(Error::param("gaussian kernel needs a positive std-dev"));
        }
        if size % 2 == 0 {
            return Err(Error::param(format!("kernel size must be odd, got {size}")));
        }
        let r = (size / 2) as isize;
        let two_s2 = T::lit(2.0) * std_dev * std_dev;
        let mut data = Vec::with_capacity(size * size);
        for di in -r..=r {
            for dj in -r..=r {
                let d2 = T::lit((di * di + dj * dj) as f64);
                data.push((-d2 / two_s2).exp());
            }
        }
        let total: T = data.iter().copied().sum();
        data.iter_mut().for_each(|v| *v /= total);
        Kernel::new(size, size, data)
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    fn abs_sum(&self) -> T {
        self.data.iter().map(|v| v.abs()).sum()
    }

    /// Symmetric under flipping either axis separately.
    fn is_axis_even(&self) -> bool {
        let (r, c) = (self.rows, self.cols);
        (0..r).all(|i| {
            (0..c).all(|j| {
                let v = self.data[i * c + j];
                v == self.data[(r - 1 - i) * c + j] && v == self.data[i * c + (c - 1 - j)]
            })
        })
    }
}

/// Discrete 2-D correlation `(Cu)[i,j] = Σ k[a,b] u[i+a-r, j+b-c]`.
#[derive(Debug, Clone)]
pub struct Conv2d<T> {
    kernel: Kernel<T>,
    rows: usize,
    cols: usize,
    boundary: Boundary,
    shape: [Shape; 1],
    bound: T,
}

fn reflect(i: isize, len: usize) -> usize {
    let len = len as isize;
    let r = if i < 0 {
        -i - 1
    } else if i >= len {
        2 * len - i - 1
    } else {
        i
    };
    r as usize
}

impl<T: Real> Conv2d<T> {
    fn source(&self, i: usize, a: usize, len: usize, radius: usize) -> Option<usize> {
        let p = i as isize + a as isize - radius as isize;
        if p >= 0 && p < len as isize {
            Some(p as usize)
        } else {
            match self.boundary {
                Boundary::Zero => None,
                Boundary::Symmetric => Some(reflect(p, len)),
            }
        }
    }

    fn correlate(&self, u: &[T], abs_kernel: bool) -> Vec<T> {
        let (m, n) = (self.rows, self.cols);
        let (kr, kc) = self.kernel.dims();
        let (rr, rc) = (kr / 2, kc / 2);
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            for j in 0..n {
                let mut acc = T::zero();
                for a in 0..kr {
                    let Some(si) = self.source(i, a, m, rr) else { continue };
                    for b in 0..kc {
                        let Some(sj) = self.source(j, b, n, rc) else { continue };
                        let w = self.kernel.data[a * kc + b];
                        let w = if abs_kernel { w.abs() } else { w };
                        acc += w * u[si * n + sj];
                    }
                }
                out[i * n + j] = acc;
            }
        }
        out
    }

    // transpose of `correlate`: scatter each output back to its sources
    fn scatter(&self, y: &[T], abs_kernel: bool) -> Vec<T> {
        let (m, n) = (self.rows, self.cols);
        let (kr, kc) = self.kernel.dims();
        let (rr, rc) = (kr / 2, kc / 2);
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            for j in 0..n {
                let v = y[i * n + j];
                for a in 0..kr {
                    let Some(si) = self.source(i, a, m, rr) else { continue };
                    for b in 0..kc {
                        let Some(sj) = self.source(j, b, n, rc) else { continue };
                        let w = self.kernel.data[a * kc + b];
                        let w = if abs_kernel { w.abs() } else { w };
                        out[si * n + sj] += w * v;
                    }
                }
            }
        }
        out
    }
}

/// Correlation with `kernel` on an `m × n` image.
///
/// The norm bound is the Schur bound `sqrt(max row sum · max column sum)` of
/// `|C|`, tightened to `Σ|k|` when that is known to hold: always for zero
/// boundaries, and for axis-even kernels under the symmetric boundary (the
/// operator is then diagonalized by the DCT-II). A nonnegative normalized
/// Gaussian therefore gets the bound 1 under either boundary rule.
pub fn conv2d<T: Real>(kernel: &Kernel<T>, m: usize, n: usize, boundary: Boundary) -> Result<Conv2d<T>> {
    let shape = Shape::image(m, n)?;
    let (kr, kc) = kernel.dims();
    if boundary == Boundary::Symmetric && (kr / 2 > m || kc / 2 > n) {
        return Err(Error::param(format!(
            "kernel {kr}x{kc} is too large for a mirrored {m}x{n} image"
        )));
    }
    let mut op = Conv2d {
        kernel: kernel.clone(),
        rows: m,
        cols: n,
        boundary,
        shape: [shape],
        bound: T::zero(),
    };
    let ones = vec![T::one(); m * n];
    let row_max = op.correlate(&ones, true).into_iter().fold(T::zero(), T::max);
    let col_max = op.scatter(&ones, true).into_iter().fold(T::zero(), T::max);
    let schur = (row_max * col_max).sqrt();
    let tight = boundary == Boundary::Zero || kernel.is_axis_even();
    op.bound = if tight { schur.min(kernel.abs_sum()) } else { schur };
    Ok(op)
}

impl<T: Real> LinearOperator<T> for Conv2d<T> {
    fn domain(&self) -> &[Shape] {
        &self.shape
    }
    fn codomain(&self) -> &[Shape] {
        &self.shape
    }
    fn apply_unchecked(&self, x: &BlockVector<T>) -> BlockVector<T> {
        image_block(self.shape[0].clone(), self.correlate(x.block(0), false))
    }
    fn adjoint_unchecked(&self, y: &BlockVector<T>) -> BlockVector<T> {
        image_block(self.shape[0].clone(), self.scatter(y.block(0), false))
    }
    fn norm_bound(&self) -> Option<T> {
        Some(self.bound)
    }
}

/// Power iteration on `K*K` from a random start.
///
/// Returns `‖K v‖` for the final unit vector `v`, which never exceeds the
/// true operator norm; iteration stops once successive estimates agree to
/// relative precision `tol` or after `iters` steps.
pub fn estimate_norm<T: Real>(op: &dyn LinearOperator<T>, iters: usize, tol: T, rng: &mut RngStream) -> Result<T> {
    if iters == 0 {
        return Err(Error::param("power iteration needs iters >= 1"));
    }
    if !(tol > T::zero()) {
        return Err(Error::param("power iteration needs tol > 0"));
    }
    let mut v = gaussian_like::<T>(op.domain(), T::one(), rng)?;
    let n0 = v.norm2();
    if n0 == T::zero() {
        return Ok(T::zero());
    }
    v.scale_mut(T::one() / n0);
    let mut estimate = T::zero();
    for _ in 0..iters {
        let kv = op.apply_unchecked(&v);
        let current = kv.norm2();
        let mut w = op.adjoint_unchecked(&kv);
        let wn = w.norm2();
        if wn == T::zero() {
            return Ok(T::zero());
        }
        w.scale_mut(T::one() / wn);
        v = w;
        let converged = (current - estimate).abs() <= tol * current;
        estimate = current;
        if converged {
            break;
        }
    }
    Ok(estimate.max(op.apply_unchecked(&v).norm2()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(m: usize, n: usize, data: Vec<f64>) -> BlockVector<f64> {
        BlockVector::from_vec(Shape::image(m, n).unwrap(), data).unwrap()
    }

    fn adjoint_gap(op: &dyn LinearOperator<f64>, rng: &mut RngStream) -> f64 {
        let x = gaussian_like::<f64>(op.domain(), 1.0, rng).unwrap();
        let y = gaussian_like::<f64>(op.codomain(), 1.0, rng).unwrap();
        let kx = op.apply(&x).unwrap();
        let lhs = kx.dot(&y).unwrap();
        let rhs = x.dot(&op.adjoint(&y).unwrap()).unwrap();
        (lhs - rhs).abs() / (1.0 + kx.norm2() * y.norm2())
    }

    #[test]
    fn dense_matrix_products() {
        let a = DenseMatrix::new(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let x = BlockVector::from_slice(&[1.0, 0.0, -1.0]).unwrap();
        assert_eq!(a.apply(&x).unwrap().block(0), &[-2.0, -2.0]);
        let y = BlockVector::from_slice(&[1.0, 1.0]).unwrap();
        assert_eq!(a.adjoint(&y).unwrap().block(0), &[5.0, 7.0, 9.0]);
        assert_eq!(LinearOperator::<f64>::norm_bound(&a), Some(91f64.sqrt()));
        let mut rng = RngStream::new(12);
        let g = DenseMatrix::<f64>::gaussian(4, 7, 1.0, &mut rng).unwrap();
        assert!(adjoint_gap(&g, &mut rng) < 1e-12);
        assert!(DenseMatrix::new(2, 2, vec![1.0f64]).is_err());
    }

    #[test]
    fn d1_example() {
        let d1 = d1_rows(2, 2).unwrap();
        let out = d1.apply(&img(2, 2, vec![1.0, 2.0, 3.0, 4.0])).unwrap();
        assert_eq!(out.block(0), &[2.0, 2.0, 0.0, 0.0]);
    }

    #[test]
    fn d2_example() {
        let d2 = d2_cols(2, 2).unwrap();
        let out = d2.apply(&img(2, 2, vec![1.0, 2.0, 3.0, 4.0])).unwrap();
        assert_eq!(out.block(0), &[1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn differences_of_constants_vanish() {
        let c = img(3, 5, vec![0.7; 15]);
        for op in [d1_rows(3, 5).unwrap(), d2_cols(3, 5).unwrap()] {
            assert!(LinearOperator::<f64>::apply(&op, &c).unwrap().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn difference_adjoints_on_5x4() {
        let mut rng = RngStream::new(3);
        for op in [d1_rows(5, 4).unwrap(), d2_cols(5, 4).unwrap()] {
            for _ in 0..20 {
                assert!(adjoint_gap(&op, &mut rng) < 1e-12);
            }
        }
    }

    #[test]
    fn single_row_or_column_images() {
        let mut rng = RngStream::new(8);
        for (m, n) in [(1, 1), (1, 6), (6, 1)] {
            let s = stack::<f64>(vec![Arc::new(d1_rows(m, n).unwrap()), Arc::new(d2_cols(m, n).unwrap())]).unwrap();
            assert!(adjoint_gap(&s, &mut rng) < 1e-12);
        }
    }

    #[test]
    fn stacked_gradient_bound_is_sqrt8() {
        let s = stack::<f64>(vec![Arc::new(d1_rows(4, 4).unwrap()), Arc::new(d2_cols(4, 4).unwrap())]).unwrap();
        assert!((s.norm_bound().unwrap() - 8f64.sqrt()).abs() < 1e-15);
        let mut rng = RngStream::new(11);
        for _ in 0..20 {
            assert!(adjoint_gap(&s, &mut rng) < 1e-12);
        }
    }

    #[test]
    fn stack_of_identity_is_identity() {
        let shape = Shape::vector(6).unwrap();
        let s = stack::<f64>(vec![Arc::new(Identity::new(vec![shape.clone()]))]).unwrap();
        let x = gaussian_like::<f64>(&[shape], 1.0, &mut RngStream::new(1)).unwrap();
        assert_eq!(s.apply(&x).unwrap(), x);
        assert_eq!(s.adjoint(&x).unwrap(), x);
    }

    #[test]
    fn stack_rejects_mismatched_domains() {
        let r = stack::<f64>(vec![Arc::new(d1_rows(3, 3).unwrap()), Arc::new(d1_rows(3, 4).unwrap())]);
        assert!(matches!(r, Err(Error::Shape(_))));
    }

    #[test]
    fn unit_kernel_is_identity() {
        let k = Kernel::new(1, 1, vec![1.0]).unwrap();
        let x = gaussian_like::<f64>(&[Shape::image(5, 7).unwrap()], 1.0, &mut RngStream::new(2)).unwrap();
        for b in [Boundary::Zero, Boundary::Symmetric] {
            let c = conv2d(&k, 5, 7, b).unwrap();
            assert_eq!(c.apply(&x).unwrap(), x);
            assert_eq!(c.norm_bound(), Some(1.0));
        }
    }

    #[test]
    fn even_kernels_rejected() {
        assert!(Kernel::<f64>::new(2, 3, vec![0.0; 6]).is_err());
        assert!(Kernel::<f64>::gaussian(4, 1.0).is_err());
        assert!(Kernel::new(1, 1, vec![f64::NAN]).is_err());
    }

    #[test]
    fn symmetric_boundary_preserves_constants() {
        let k = Kernel::gaussian(9, 1.5).unwrap();
        let c = conv2d(&k, 10, 12, Boundary::Symmetric).unwrap();
        let out = c.apply(&img(10, 12, vec![0.3; 120])).unwrap();
        assert!(out.iter().all(|&v| (v - 0.3).abs() < 1e-14));
        assert!((c.norm_bound().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn conv_adjoints_both_boundaries() {
        let mut rng = RngStream::new(4);
        let k = Kernel::new(3, 3, (0..9).map(|i| (i as f64 - 3.0) * 0.1).collect()).unwrap();
        for b in [Boundary::Zero, Boundary::Symmetric] {
            let c = conv2d(&k, 8, 8, b).unwrap();
            for _ in 0..20 {
                assert!(adjoint_gap(&c, &mut rng) < 1e-12);
            }
        }
    }

    #[test]
    fn lopsided_kernel_bound_still_dominates_norm() {
        let k = Kernel::new(3, 3, vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let c = conv2d(&k, 6, 6, Boundary::Symmetric).unwrap();
        let est = estimate_norm(&c, 500, 1e-12, &mut RngStream::new(5)).unwrap();
        assert!(est <= c.norm_bound().unwrap() + 1e-9, "{est} vs {:?}", c.norm_bound());
        assert!(est > 1.0);
    }

    #[test]
    fn oversized_kernel_rejected_for_mirror() {
        let k = Kernel::<f64>::gaussian(9, 1.5).unwrap();
        assert!(conv2d(&k, 3, 3, Boundary::Symmetric).is_err());
        assert!(conv2d(&k, 3, 3, Boundary::Zero).is_ok());
    }

    #[test]
    fn norm_of_identity_and_diagonal() {
        let mut rng = RngStream::new(6);
        let id = Identity::new(vec![Shape::vector(10).unwrap()]);
        let e = estimate_norm::<f64>(&id, 50, 1e-12, &mut rng).unwrap();
        assert!((e - 1.0).abs() < 1e-6);
        let d = Diagonal::new(vec![3.0, 1.0]).unwrap();
        let e = estimate_norm::<f64>(&d, 200, 1e-14, &mut rng).unwrap();
        assert!((e - 3.0).abs() < 1e-6);
    }

    #[test]
    fn zero_operator_norm_is_zero() {
        let id: Operator<f64> = Arc::new(Identity::new(vec![Shape::vector(4).unwrap()]));
        let z = Scaled::new(id, 0.0);
        assert_eq!(estimate_norm(&z, 10, 1e-6, &mut RngStream::new(0)).unwrap(), 0.0);
    }

    #[test]
    fn estimate_rejects_bad_parameters() {
        let d = Diagonal::new(vec![1.0f64]).unwrap();
        assert!(estimate_norm(&d, 0, 1e-6, &mut RngStream::new(0)).is_err());
        assert!(estimate_norm(&d, 5, 0.0, &mut RngStream::new(0)).is_err());
    }

    #[test]
    fn difference_norm_estimates_stay_below_two() {
        let mut rng = RngStream::new(12);
        for op in [d1_rows(32, 24).unwrap(), d2_cols(32, 24).unwrap()] {
            let e = estimate_norm::<f64>(&op, 300, 1e-10, &mut rng).unwrap();
            assert!(e <= 2.0 && e > 1.9, "{e}");
        }
    }
}
