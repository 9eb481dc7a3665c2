//! Finite-dimensional real containers and the reproducible random stream.
//!
//! A [`BlockVector`] is an element of a product of dense real arrays. Images
//! are single blocks of shape `[m, n]` stored row-major; dual variables of a
//! stacked operator are block vectors with one block per part.

use std::fmt;

use rand_xoshiro::rand_core::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Shape(Vec<usize>);

impl Shape {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() || dims.iter().any(|&d| d == 0) {
            return Err(Error::param(format!("shape dims must be >= 1, got {dims:?}")));
        }
        Ok(Shape(dims))
    }

    pub fn vector(n: usize) -> Result<Self> {
        Shape::new(vec![n])
    }

    pub fn image(m: usize, n: usize) -> Result<Self> {
        Shape::new(vec![m, n])
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    /// Number of elements.
    pub fn len(&self) -> usize {
        self.0.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `(rows, cols)` for a 2-D shape.
    pub fn as_image(&self) -> Option<(usize, usize)> {
        match self.0.as_slice() {
            [m, n] => Some((*m, *n)),
            _ => None,
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let dims: Vec<String> = self.0.iter().map(|d| d.to_string()).collect();
        write!(f, "{}", dims.join("x"))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Block<T> {
    pub shape: Shape,
    pub data: Vec<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockVector<T> {
    blocks: Vec<Block<T>>,
}

fn structure_string(shapes: &[Shape]) -> String {
    let parts: Vec<String> = shapes.iter().map(|s| s.to_string()).collect();
    format!("[{}]", parts.join(", "))
}

pub(crate) fn check_structure<T: Real>(expected: &[Shape], x: &BlockVector<T>, what: &str) -> Result<()> {
    let matches = expected.len() == x.blocks.len()
        && expected.iter().zip(&x.blocks).all(|(s, b)| *s == b.shape);
    if matches {
        Ok(())
    } else {
        Err(Error::shape(format!(
            "{what}: expected {}, got {}",
            structure_string(expected),
            structure_string(&x.structure())
        )))
    }
}

impl<T: Real> BlockVector<T> {
    pub fn new(blocks: Vec<Block<T>>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::shape("a block vector needs at least one block"));
        }
        for b in &blocks {
            if b.data.len() != b.shape.len() {
                return Err(Error::shape(format!(
                    "block of shape {} holds {} elements",
                    b.shape,
                    b.data.len()
                )));
            }
        }
        Ok(BlockVector { blocks })
    }

    pub fn from_vec(shape: Shape, data: Vec<T>) -> Result<Self> {
        BlockVector::new(vec![Block { shape, data }])
    }

    /// Flat vector of length `data.len()`.
    pub fn from_slice(data: &[T]) -> Result<Self> {
        BlockVector::from_vec(Shape::vector(data.len())?, data.to_vec())
    }

    pub fn zeros(structure: &[Shape]) -> Self {
        BlockVector {
            blocks: structure
                .iter()
                .map(|s| Block {
                    shape: s.clone(),
                    data: vec![T::zero(); s.len()],
                })
                .collect(),
        }
    }

    pub fn filled(structure: &[Shape], value: T) -> Self {
        let mut z = Self::zeros(structure);
        z.iter_mut().for_each(|v| *v = value);
        z
    }

    pub fn structure(&self) -> Vec<Shape> {
        self.blocks.iter().map(|b| b.shape.clone()).collect()
    }

    pub fn blocks(&self) -> &[Block<T>] {
        &self.blocks
    }

    pub fn into_blocks(self) -> Vec<Block<T>> {
        self.blocks
    }

    pub fn block(&self, i: usize) -> &[T] {
        &self.blocks[i].data
    }

    pub fn block_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.blocks[i].data
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Total element count over all blocks.
    pub fn len(&self) -> usize {
        self.blocks.iter().map(|b| b.data.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn same_structure(&self, other: &Self) -> bool {
        self.blocks.len() == other.blocks.len()
            && self
                .blocks
                .iter()
                .zip(&other.blocks)
                .all(|(a, b)| a.shape == b.shape)
    }

    fn require_same(&self, other: &Self, what: &str) -> Result<()> {
        if self.same_structure(other) {
            Ok(())
        } else {
            Err(Error::shape(format!(
                "{what}: {} vs {}",
                structure_string(&self.structure()),
                structure_string(&other.structure())
            )))
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.blocks.iter().flat_map(|b| b.data.iter())
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.blocks.iter_mut().flat_map(|b| b.data.iter_mut())
    }

    pub fn to_flat(&self) -> Vec<T> {
        self.iter().copied().collect()
    }

    pub fn dot(&self, other: &Self) -> Result<T> {
        self.require_same(other, "dot")?;
        Ok(self.iter().zip(other.iter()).map(|(&a, &b)| a * b).sum())
    }

    pub fn norm_sq(&self) -> T {
        self.iter().map(|&a| a * a).sum()
    }

    pub fn norm2(&self) -> T {
        self.norm_sq().sqrt()
    }

    /// `‖self − other‖`.
    pub fn dist(&self, other: &Self) -> Result<T> {
        self.require_same(other, "dist")?;
        Ok(self
            .iter()
            .zip(other.iter())
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum::<T>()
            .sqrt())
    }

    pub fn lincomb(alpha: T, a: &Self, beta: T, b: &Self) -> Result<Self> {
        a.require_same(b, "lincomb")?;
        let mut out = a.clone();
        out.iter_mut()
            .zip(b.iter())
            .for_each(|(o, &bv)| *o = alpha * *o + beta * bv);
        Ok(out)
    }

    /// `self += alpha * x`.
    pub fn axpy(&mut self, alpha: T, x: &Self) -> Result<()> {
        self.require_same(x, "axpy")?;
        self.iter_mut().zip(x.iter()).for_each(|(s, &v)| *s += alpha * v);
        Ok(())
    }

    pub fn scaled(&self, c: T) -> Self {
        self.map(|v| c * v)
    }

    pub fn scale_mut(&mut self, c: T) {
        self.iter_mut().for_each(|v| *v *= c);
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        BlockVector {
            blocks: self
                .blocks
                .iter()
                .map(|b| Block {
                    shape: b.shape.clone(),
                    data: b.data.iter().map(|&v| f(v)).collect(),
                })
                .collect(),
        }
    }

    /// Elementwise combination of two equally structured vectors.
    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.require_same(other, "zip_map")?;
        let mut out = self.clone();
        out.iter_mut().zip(other.iter()).for_each(|(o, &b)| *o = f(*o, b));
        Ok(out)
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }

    /// Concatenates the blocks of several vectors into one.
    pub fn concat(parts: Vec<Self>) -> Result<Self> {
        let blocks: Vec<Block<T>> = parts.into_iter().flat_map(|p| p.blocks).collect();
        BlockVector::new(blocks)
    }

    /// Splits into consecutive groups of `counts[i]` blocks.
    pub fn split(self, counts: &[usize]) -> Result<Vec<Self>> {
        if counts.iter().sum::<usize>() != self.blocks.len() || counts.contains(&0) {
            return Err(Error::shape(format!(
                "cannot split {} blocks into groups {counts:?}",
                self.blocks.len()
            )));
        }
        let mut rest = self.blocks.into_iter();
        Ok(counts
            .iter()
            .map(|&c| BlockVector {
                blocks: rest.by_ref().take(c).collect(),
            })
            .collect())
    }

    pub fn cast<U: Real>(&self) -> BlockVector<U> {
        BlockVector {
            blocks: self
                .blocks
                .iter()
                .map(|b| Block {
                    shape: b.shape.clone(),
                    data: b.data.iter().map(|v| U::lit(v.as_f64())).collect(),
                })
                .collect(),
        }
    }
}

pub fn dot<T: Real>(a: &BlockVector<T>, b: &BlockVector<T>) -> Result<T> {
    a.dot(b)
}

pub fn norm2<T: Real>(a: &BlockVector<T>) -> T {
    a.norm2()
}

pub fn lincomb<T: Real>(alpha: T, a: &BlockVector<T>, beta: T, b: &BlockVector<T>) -> Result<BlockVector<T>> {
    BlockVector::lincomb(alpha, a, beta, b)
}

/// Reproducible random stream: xoshiro256++ seeded through SplitMix64.
///
/// The full generator state (including a cached Box–Muller deviate) is
/// serializable, so a run can be suspended and resumed bit-exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RngStream {
    seed: u64,
    gen: Xoshiro256PlusPlus,
    spare_normal: Option<f64>,
}

const TWO_POW_M53: f64 = 1.0 / (1u64 << 53) as f64;

impl RngStream {
    pub fn new(seed: u64) -> Self {
        RngStream {
            seed,
            gen: Xoshiro256PlusPlus::seed_from_u64(seed),
            spare_normal: None,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.gen.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * TWO_POW_M53
    }

    /// Uniform on `(0, 1]`.
    fn uniform_open_low(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * TWO_POW_M53
    }

    /// Standard normal deviate by the Box–Muller transform; deviates are
    /// produced in pairs and the second one is cached.
    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = self.uniform_open_low();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    /// `true` with probability `p`.
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Index drawn with probability proportional to `weights`.
    pub fn categorical(&mut self, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().sum();
        let target = self.uniform() * total;
        let mut acc = 0.0;
        for (i, &w) in weights.iter().enumerate() {
            acc += w;
            if target < acc {
                return i;
            }
        }
        // rounding can leave target == total
        weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
    }
}

/// I.i.d. `N(0, sigma²)` entries.
pub fn gaussian<T: Real>(shape: &Shape, sigma: T, rng: &mut RngStream) -> Result<BlockVector<T>> {
    if !(sigma >= T::zero()) || !sigma.is_finite() {
        return Err(Error::param(format!("noise level must be >= 0, got {sigma}")));
    }
    let data = (0..shape.len())
        .map(|_| sigma * T::lit(rng.standard_normal()))
        .collect();
    BlockVector::from_vec(shape.clone(), data)
}

/// Like [`gaussian`] but for a multi-block structure.
pub fn gaussian_like<T: Real>(structure: &[Shape], sigma: T, rng: &mut RngStream) -> Result<BlockVector<T>> {
    let parts = structure
        .iter()
        .map(|s| gaussian(s, sigma, rng))
        .collect::<Result<Vec<_>>>()?;
    BlockVector::concat(parts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(data: &[f64]) -> BlockVector<f64> {
        BlockVector::from_slice(data).unwrap()
    }

    #[test]
    fn shape_validation() {
        assert!(Shape::new(vec![]).is_err());
        assert!(Shape::new(vec![3, 0]).is_err());
        assert_eq!(Shape::image(4, 5).unwrap().len(), 20);
    }

    #[test]
    fn dot_examples() {
        assert_eq!(v(&[1.0, 2.0]).dot(&v(&[3.0, 4.0])).unwrap(), 11.0);
        let x = v(&[0.3, -1.2, 5.0]);
        assert_eq!(x.dot(&v(&[0.0; 3])).unwrap(), 0.0);
        assert!(x.dot(&x).unwrap() >= 0.0);
        assert!(matches!(x.dot(&v(&[1.0, 2.0])), Err(Error::Shape(_))));
    }

    #[test]
    fn norm_examples() {
        assert_eq!(v(&[3.0, 4.0]).norm2(), 5.0);
        assert_eq!(v(&[0.0, 0.0]).norm2(), 0.0);
        let x = v(&[1.5, -2.0, 0.25]);
        assert!((x.scaled(-3.0).norm2() - 3.0 * x.norm2()).abs() < 1e-14);
    }

    #[test]
    fn lincomb_examples() {
        let x = v(&[1.0, -2.0]);
        let y = v(&[7.0, 0.5]);
        assert_eq!(lincomb(1.0, &x, 0.0, &y).unwrap(), x);
        assert_eq!(lincomb(1.0, &x, -1.0, &x).unwrap(), v(&[0.0, 0.0]));
        assert_eq!(lincomb(2.0, &v(&[1.0, 1.0]), 3.0, &v(&[0.0, 1.0])).unwrap(), v(&[2.0, 5.0]));
        let img = BlockVector::<f64>::zeros(&[Shape::image(1, 2).unwrap()]);
        assert!(lincomb(1.0, &x, 1.0, &img).is_err());
    }

    #[test]
    fn split_and_concat_are_inverse() {
        let a = v(&[1.0, 2.0]);
        let b = BlockVector::from_vec(Shape::image(2, 2).unwrap(), vec![3.0, 4.0, 5.0, 6.0]).unwrap();
        let joined = BlockVector::concat(vec![a.clone(), b.clone()]).unwrap();
        assert_eq!(joined.num_blocks(), 2);
        let parts = joined.split(&[1, 1]).unwrap();
        assert_eq!(parts, vec![a, b]);
    }

    #[test]
    fn gaussian_zero_sigma_and_determinism() {
        let shape = Shape::image(4, 3).unwrap();
        let z = gaussian::<f64>(&shape, 0.0, &mut RngStream::new(5)).unwrap();
        assert!(z.iter().all(|&x| x == 0.0));
        let a = gaussian::<f64>(&shape, 1.0, &mut RngStream::new(9)).unwrap();
        let b = gaussian::<f64>(&shape, 1.0, &mut RngStream::new(9)).unwrap();
        assert_eq!(a, b);
        assert!(gaussian::<f64>(&shape, -1.0, &mut RngStream::new(9)).is_err());
    }

    #[test]
    fn gaussian_empirical_variance() {
        let sigma = 0.7;
        let shape = Shape::vector(1_000_000).unwrap();
        let draws = gaussian::<f64>(&shape, sigma, &mut RngStream::new(2024)).unwrap();
        let n = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / n;
        let var = draws.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        assert!((var / (sigma * sigma) - 1.0).abs() < 0.01, "variance {var}");
        assert!(mean.abs() < 5.0 * sigma / n.sqrt());
    }

    #[test]
    fn rng_state_round_trips_through_serde() {
        let mut rng = RngStream::new(77);
        rng.standard_normal();
        let json = serde_json::to_string(&rng).unwrap();
        let mut restored: RngStream = serde_json::from_str(&json).unwrap();
        for _ in 0..10 {
            assert_eq!(rng.standard_normal().to_bits(), restored.standard_normal().to_bits());
        }
    }

    #[test]
    fn categorical_respects_zero_weights() {
        let mut rng = RngStream::new(1);
        for _ in 0..1000 {
            assert_eq!(rng.categorical(&[0.0, 2.0, 0.0]), 1);
        }
    }

    #[test]
    fn single_precision_container() {
        let x = BlockVector::<f32>::from_slice(&[3.0, 4.0]).unwrap();
        assert_eq!(x.norm2(), 5.0);
        assert_eq!(x.cast::<f64>().norm2(), 5.0);
    }

    proptest! {
        #[test]
        fn cauchy_schwarz(a in prop::collection::vec(-1e3f64..1e3, 1..20), seed in any::<u64>()) {
            let mut rng = RngStream::new(seed);
            let x = v(&a);
            let y = gaussian_like::<f64>(&x.structure(), 10.0, &mut rng).unwrap();
            let lhs = x.dot(&y).unwrap().abs();
            prop_assert!(lhs <= x.norm2() * y.norm2() * (1.0 + 1e-12) + 1e-12);
        }

        #[test]
        fn hilbert_space_inequality(seed in any::<u64>(), alpha in 1e-6f64..(1.0 - 1e-6), dim in 1usize..12) {
            let mut rng = RngStream::new(seed);
            let s = [Shape::vector(dim).unwrap()];
            let x = gaussian_like::<f64>(&s, 3.0, &mut rng).unwrap();
            let y = gaussian_like::<f64>(&s, 3.0, &mut rng).unwrap();
            let lhs = (1.0 - alpha) * x.dist(&y).unwrap().powi(2) + alpha * y.norm_sq();
            let rhs = alpha * (1.0 - alpha) * x.norm_sq();
            prop_assert!(lhs - rhs >= -1e-12);
        }
    }
}
