//! Laplacian prior sampling and the polynomial-chaos basis built on it.
//!
//! The basis is a sign-augmented Laguerre family: per coordinate, factors are
//! either `L_n(tau*|x|)` (even) or `sign(x) * L_n(tau*|x|)` (odd), where `tau`
//! is the prior rate. Laguerre polynomials are orthonormal for the exponential
//! weight, the rate scaling adapts them to rate `tau`, and the sign factor adds
//! the odd functions needed to represent monotone maps; orthonormality under
//! the Laplacian density survives both augmentations (the odd/even cross terms
//! integrate to zero by symmetry).

#[cfg(not(feature = "std"))]
use num_traits::Float;

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Product of i.i.d. Laplacian (double-exponential) marginals with a common rate.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianPrior {
    dim: usize,
    rate: f64,
}

impl LaplacianPrior {
    pub fn new(dim: usize, rate: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("prior dimension must be >= 1"));
        }
        if !(rate > 0.0) || !rate.is_finite() {
            return Err(Error::InvalidArgument("prior rate must be positive and finite"));
        }
        Ok(Self { dim, rate })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// Log density `sum_j log((tau/2) exp(-tau |x_j|))`.
    pub fn log_density(&self, x: &DVector<f64>) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        let l1: f64 = x.iter().map(|v| v.abs()).sum();
        Ok(self.dim as f64 * (self.rate / 2.0).ln() - self.rate * l1)
    }
}

/// One basis function: per-coordinate Laguerre degrees plus parity bits
/// (0 = even factor, 1 = odd sign-carrying factor).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiIndex {
    degrees: Vec<u32>,
    parities: Vec<u8>,
}

impl MultiIndex {
    pub fn degrees(&self) -> &[u32] {
        &self.degrees
    }

    pub fn parities(&self) -> &[u8] {
        &self.parities
    }

    /// Combined degree: each parity bit counts one on top of the Laguerre degree.
    pub fn combined_degree(&self) -> u32 {
        self.degrees.iter().sum::<u32>() + self.parities.iter().map(|&p| u32::from(p)).sum::<u32>()
    }

    pub fn is_constant(&self) -> bool {
        self.degrees.iter().all(|&d| d == 0) && self.parities.iter().all(|&p| p == 0)
    }
}

/// Truncated orthonormal basis for a [`LaplacianPrior`]: all multi-indices with
/// combined degree at most `order`, in graded-lexicographic order (constant first).
#[derive(Debug, Clone, PartialEq)]
pub struct PceBasis {
    prior: LaplacianPrior,
    order: u32,
    indices: Vec<MultiIndex>,
}

/// Enumerates every multi-index with combined degree at most `order`.
///
/// Grading is by combined degree; within a grade the per-coordinate combined
/// degrees are in lexicographic order, and for each of those the two factor
/// choices (odd with degree w-1, even with degree w) are expanded with the
/// lower Laguerre degree first.
pub fn build_multi_index_set(d: usize, order: u32) -> Result<PceBasis> {
    let prior = LaplacianPrior::new(d, 1.0)?;
    PceBasis::total_degree(prior, order)
}

impl PceBasis {
    /// Builds the total-degree basis of the given order for `prior`.
    pub fn total_degree(prior: LaplacianPrior, order: u32) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidArgument("basis order must be >= 1"));
        }
        let d = prior.dim();
        let mut indices = Vec::new();
        let mut weights = vec![0u32; d];
        for total in 0..=order {
            enumerate_weights(&mut weights, 0, total, &mut |w| {
                expand_parities(w, &mut indices);
            });
        }
        debug_assert!(indices[0].is_constant());
        Ok(Self { prior, order, indices })
    }

    /// Same index set bound to a prior with a different rate.
    pub fn with_rate(&self, rate: f64) -> Result<Self> {
        let prior = LaplacianPrior::new(self.prior.dim(), rate)?;
        Ok(Self { prior, order: self.order, indices: self.indices.clone() })
    }

    pub fn prior(&self) -> &LaplacianPrior {
        &self.prior
    }

    pub fn dim(&self) -> usize {
        self.prior.dim()
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    /// Number of basis functions K.
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    /// Evaluation vector `A(x)`: entry k is the product over coordinates of
    /// `sign(x_j)^parity * L_degree(tau*|x_j|)`, with `sign(0) = 0`.
    pub fn evaluate(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let d = self.dim();
        if x.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: x.len() });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("basis evaluation point must be finite"));
        }
        let tables = self.coordinate_tables(x, false);
        let mut out = DVector::zeros(self.len());
        for (k, idx) in self.indices.iter().enumerate() {
            let mut prod = 1.0;
            for j in 0..d {
                prod *= tables.factor(j, idx.degrees[j], idx.parities[j]);
            }
            out[k] = prod;
        }
        Ok(out)
    }

    /// Jacobian table `J(x)`: entry (k, j) is the partial derivative of basis
    /// function k with respect to coordinate j.
    pub fn jacobian_table(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let d = self.dim();
        if x.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: x.len() });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("basis evaluation point must be finite"));
        }
        let tables = self.coordinate_tables(x, true);
        let mut out = DMatrix::zeros(self.len(), d);
        let mut factors = vec![0.0; d];
        let mut suffix = vec![0.0; d + 1];
        for (k, idx) in self.indices.iter().enumerate() {
            for (j, slot) in factors.iter_mut().enumerate() {
                *slot = tables.factor(j, idx.degrees[j], idx.parities[j]);
            }
            // prefix/suffix products so each entry skips exactly one factor
            suffix[d] = 1.0;
            for j in (0..d).rev() {
                suffix[j] = suffix[j + 1] * factors[j];
            }
            let mut prefix = 1.0;
            for j in 0..d {
                let others = prefix * suffix[j + 1];
                out[(k, j)] = tables.dfactor(j, idx.degrees[j], idx.parities[j]) * others;
                prefix *= factors[j];
            }
        }
        Ok(out)
    }

    /// Coefficient matrix of the exact identity map, available for order >= 2:
    /// `x_j = (sign(x_j) L_0 - sign(x_j) L_1)(tau*|x_j|) / tau`.
    pub fn identity_coefficients(&self) -> Result<DMatrix<f64>> {
        let d = self.dim();
        if self.order < 2 {
            return Err(Error::InvalidArgument("identity map needs basis order >= 2"));
        }
        let inv_rate = 1.0 / self.prior.rate();
        let mut coeffs = DMatrix::zeros(d, self.len());
        for j in 0..d {
            let sign_idx = self
                .position(|idx| {
                    idx.degrees.iter().all(|&v| v == 0)
                        && idx.parities.iter().enumerate().all(|(l, &p)| (p == 1) == (l == j))
                })
                .ok_or(Error::Numerical("sign index missing from basis"))?;
            let odd_l1_idx = self
                .position(|idx| {
                    idx.degrees.iter().enumerate().all(|(l, &v)| v == u32::from(l == j))
                        && idx.parities.iter().enumerate().all(|(l, &p)| (p == 1) == (l == j))
                })
                .ok_or(Error::Numerical("odd degree-1 index missing from basis"))?;
            coeffs[(j, sign_idx)] = inv_rate;
            coeffs[(j, odd_l1_idx)] = -inv_rate;
        }
        Ok(coeffs)
    }

    /// Index groups whose coefficients must sum to zero for a map in this
    /// span to be continuous across each coordinate's sign kink.
    ///
    /// An odd factor `sign(x_j) L_n(tau |x_j|)` jumps by `2 L_n(0) = 2` at
    /// `x_j = 0`; for a combination to stay continuous, the odd coefficients
    /// sharing the same factors on every other coordinate must cancel there.
    /// Groups with a single member force that coefficient to zero.
    pub fn continuity_groups(&self) -> Vec<Vec<usize>> {
        use alloc::collections::BTreeMap;
        let d = self.dim();
        let mut groups = Vec::new();
        for j in 0..d {
            let mut by_signature: BTreeMap<Vec<u32>, Vec<usize>> = BTreeMap::new();
            for (k, idx) in self.indices.iter().enumerate() {
                if idx.parities[j] == 1 {
                    let mut key = Vec::with_capacity(2 * (d - 1));
                    for l in 0..d {
                        if l != j {
                            key.push(idx.degrees[l]);
                            key.push(u32::from(idx.parities[l]));
                        }
                    }
                    by_signature.entry(key).or_default().push(k);
                }
            }
            groups.extend(by_signature.into_values());
        }
        groups
    }

    fn position(&self, pred: impl Fn(&MultiIndex) -> bool) -> Option<usize> {
        self.indices.iter().position(pred)
    }

    fn coordinate_tables(&self, x: &DVector<f64>, with_derivs: bool) -> CoordinateTables {
        let d = self.dim();
        let n = self.order as usize + 1;
        let rate = self.prior.rate();
        let mut lag = vec![0.0; d * n];
        let mut dlag = if with_derivs { vec![0.0; d * n] } else { Vec::new() };
        let mut signs = vec![0.0; d];
        for j in 0..d {
            let s = sign(x[j]);
            signs[j] = s;
            let u = rate * x[j].abs();
            laguerre_row(u, &mut lag[j * n..(j + 1) * n]);
            if with_derivs {
                laguerre_deriv_row(u, &lag[j * n..(j + 1) * n], &mut dlag[j * n..(j + 1) * n]);
            }
        }
        CoordinateTables { stride: n, lag, dlag, signs, rate }
    }
}

/// Per-coordinate Laguerre values (and optionally derivatives) at one point.
struct CoordinateTables {
    stride: usize,
    lag: Vec<f64>,
    dlag: Vec<f64>,
    signs: Vec<f64>,
    rate: f64,
}

impl CoordinateTables {
    #[inline]
    fn factor(&self, j: usize, degree: u32, parity: u8) -> f64 {
        let v = self.lag[j * self.stride + degree as usize];
        if parity == 1 {
            self.signs[j] * v
        } else {
            v
        }
    }

    /// d/dx of the coordinate factor. For x != 0:
    /// even: `sign(x) * tau * L'(tau|x|)`, odd: `tau * L'(tau|x|)` (sign^2 = 1).
    #[inline]
    fn dfactor(&self, j: usize, degree: u32, parity: u8) -> f64 {
        let dv = self.rate * self.dlag[j * self.stride + degree as usize];
        if parity == 1 {
            dv
        } else {
            self.signs[j] * dv
        }
    }
}

#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn enumerate_weights(weights: &mut [u32], pos: usize, remaining: u32, emit: &mut impl FnMut(&[u32])) {
    if pos + 1 == weights.len() {
        weights[pos] = remaining;
        emit(weights);
        weights[pos] = 0;
        return;
    }
    for w in 0..=remaining {
        weights[pos] = w;
        enumerate_weights(weights, pos + 1, remaining - w, emit);
    }
    weights[pos] = 0;
}

fn expand_parities(weights: &[u32], out: &mut Vec<MultiIndex>) {
    let d = weights.len();
    let mut degrees = vec![0u32; d];
    let mut parities = vec![0u8; d];
    expand_rec(weights, 0, &mut degrees, &mut parities, out);
}

fn expand_rec(
    weights: &[u32],
    pos: usize,
    degrees: &mut Vec<u32>,
    parities: &mut Vec<u8>,
    out: &mut Vec<MultiIndex>,
) {
    if pos == weights.len() {
        out.push(MultiIndex { degrees: degrees.clone(), parities: parities.clone() });
        return;
    }
    let w = weights[pos];
    if w == 0 {
        degrees[pos] = 0;
        parities[pos] = 0;
        expand_rec(weights, pos + 1, degrees, parities, out);
    } else {
        // odd factor first: it carries the lower Laguerre degree
        degrees[pos] = w - 1;
        parities[pos] = 1;
        expand_rec(weights, pos + 1, degrees, parities, out);
        degrees[pos] = w;
        parities[pos] = 0;
        expand_rec(weights, pos + 1, degrees, parities, out);
    }
}

/// Standard Laguerre polynomial `L_n(t)` (orthonormal for the weight `exp(-t)`
/// on `[0, inf)`), by the three-term recurrence.
pub fn laguerre_eval(n: u32, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument("Laguerre argument must be >= 0"));
    }
    let mut row = vec![0.0; n as usize + 1];
    laguerre_row(t, &mut row);
    Ok(row[n as usize])
}

/// Derivative `dL_n/dt`, via `L_n'(t) = n (L_n(t) - L_{n-1}(t)) / t` with a
/// series fallback near zero (`L_n'(0) = -n`).
pub fn laguerre_deriv(n: u32, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument("Laguerre argument must be >= 0"));
    }
    let mut row = vec![0.0; n as usize + 1];
    laguerre_row(t, &mut row);
    let mut out = vec![0.0; n as usize + 1];
    laguerre_deriv_row(t, &row, &mut out);
    Ok(out[n as usize])
}

/// Fills `out[n] = L_n(t)` for `n = 0..out.len()`.
fn laguerre_row(t: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = 1.0;
    if out.len() == 1 {
        return;
    }
    out[1] = 1.0 - t;
    for n in 1..out.len() - 1 {
        let nf = n as f64;
        out[n + 1] = ((2.0 * nf + 1.0 - t) * out[n] - nf * out[n - 1]) / (nf + 1.0);
    }
}

/// Fills `out[n] = L_n'(t)` given the value row for the same `t`.
fn laguerre_deriv_row(t: f64, values: &[f64], out: &mut [f64]) {
    // Below the cutoff the t-division cancels catastrophically; the two-term
    // series L_n'(t) = -n + n(n-1)/2 * t + O(t^2) is exact enough there.
    const SMALL_T: f64 = 1e-8;
    out[0] = 0.0;
    for n in 1..out.len() {
        let nf = n as f64;
        out[n] = if t < SMALL_T {
            -nf + 0.5 * nf * (nf - 1.0) * t
        } else {
            nf * (values[n] - values[n - 1]) / t
        };
    }
}

/// A reproducible batch of prior draws (rows are samples).
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    samples: DMatrix<f64>,
    seed: u64,
    rate: f64,
}

impl SampleBatch {
    /// Row-major N x d matrix of draws.
    pub fn samples(&self) -> &DMatrix<f64> {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.samples.ncols()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn row(&self, i: usize) -> DVector<f64> {
        self.samples.row(i).transpose()
    }
}

/// Draws `n` i.i.d. samples from the prior by inverse CDF: one uniform per
/// coordinate is mapped to a signed exponential. Identical `(seed, n, d, rate)`
/// give an identical matrix.
pub fn sample_laplacian(prior: &LaplacianPrior, n: usize, seed: u64) -> Result<SampleBatch> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample count must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = DMatrix::zeros(n, prior.dim());
    for i in 0..n {
        for j in 0..prior.dim() {
            samples[(i, j)] = laplacian_inverse_cdf_draw(&mut rng, prior.rate());
        }
    }
    Ok(SampleBatch { samples, seed, rate: prior.rate() })
}

fn laplacian_inverse_cdf_draw(rng: &mut impl Rng, rate: f64) -> f64 {
    let mut u: f64 = rng.gen();
    while u == 0.0 {
        u = rng.gen();
    }
    let v = 2.0 * u - 1.0;
    -sign(v) * (1.0 - v.abs()).ln() / rate
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn laguerre_low_orders() {
        assert_abs_diff_eq!(laguerre_eval(0, 5.3).unwrap(), 1.0);
        assert_abs_diff_eq!(laguerre_eval(1, 1.0).unwrap(), 0.0);
        assert_abs_diff_eq!(laguerre_eval(2, 2.0).unwrap(), -1.0, epsilon = 1e-14);
        assert!(laguerre_eval(2, -0.1).is_err());
    }

    #[test]
    fn laguerre_deriv_low_orders() {
        for t in [0.0, 0.3, 1.0, 4.0] {
            assert_abs_diff_eq!(laguerre_deriv(1, t).unwrap(), -1.0, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(laguerre_deriv(2, 2.0).unwrap(), 0.0, epsilon = 1e-13);
        assert_abs_diff_eq!(laguerre_deriv(3, 0.0).unwrap(), -3.0);
        assert!(laguerre_deriv(2, -1.0).is_err());
    }

    #[test]
    fn laguerre_deriv_matches_finite_difference() {
        let h = 1e-6;
        let t = 0.7;
        let fd = (laguerre_eval(3, t + h).unwrap() - laguerre_eval(3, t - h).unwrap()) / (2.0 * h);
        assert_abs_diff_eq!(laguerre_deriv(3, t).unwrap(), fd, epsilon = 1e-6);
    }

    #[test]
    fn multi_index_enumeration_d1() {
        let basis = build_multi_index_set(1, 1).unwrap();
        assert_eq!(basis.len(), 3);
        let idx: Vec<(Vec<u32>, Vec<u8>)> = basis
            .indices()
            .iter()
            .map(|m| (m.degrees().to_vec(), m.parities().to_vec()))
            .collect();
        assert_eq!(idx, vec![(vec![0], vec![0]), (vec![0], vec![1]), (vec![1], vec![0])]);
    }

    #[test]
    fn multi_index_enumeration_d2() {
        let basis = build_multi_index_set(2, 1).unwrap();
        assert_eq!(basis.len(), 5);
        assert!(basis.indices()[0].is_constant());
    }

    // Exhaustive brute-force count over all (degrees, parities) pairs with
    // small bounds, independent of the recursive generator.
    fn brute_force_count(d: usize, order: u32) -> usize {
        let mut count = 0usize;
        let combos = (order as usize + 1) * 2;
        let mut stack = vec![0usize; d];
        'outer: loop {
            let mut total = 0u32;
            let mut valid = true;
            for &c in &stack {
                let deg = (c / 2) as u32;
                let par = (c % 2) as u32;
                total += deg + par;
                if total > order {
                    valid = false;
                    break;
                }
            }
            if valid && total <= order {
                count += 1;
            }
            for slot in stack.iter_mut() {
                *slot += 1;
                if *slot < combos {
                    continue 'outer;
                }
                *slot = 0;
            }
            break;
        }
        count
    }

    #[test]
    fn multi_index_count_matches_brute_force() {
        for (d, order) in [(1usize, 3u32), (2, 3), (3, 2), (10, 3)] {
            let basis = build_multi_index_set(d, order).unwrap();
            assert_eq!(basis.len(), brute_force_count(d, order), "d={d} order={order}");
        }
        // frozen value for the d=10, order=3 configuration
        assert_eq!(build_multi_index_set(10, 3).unwrap().len(), 1561);
    }

    #[test]
    fn multi_indices_unique() {
        let basis = build_multi_index_set(3, 3).unwrap();
        for (a, idx_a) in basis.indices().iter().enumerate() {
            for idx_b in basis.indices().iter().skip(a + 1) {
                assert_ne!(idx_a, idx_b);
            }
        }
    }

    #[test]
    fn evaluate_basis_d1_order1() {
        let basis = build_multi_index_set(1, 1).unwrap();
        let a = basis.evaluate(&DVector::from_element(1, -0.5)).unwrap();
        assert_abs_diff_eq!(a[0], 1.0);
        assert_abs_diff_eq!(a[1], -1.0);
        assert_abs_diff_eq!(a[2], 0.5);
    }

    #[test]
    fn evaluate_basis_symbolic_d2() {
        // independent straight-line expansion of each factor at x = (1, -1)
        let basis = build_multi_index_set(2, 2).unwrap();
        let x = DVector::from_vec(vec![1.0, -1.0]);
        let a = basis.evaluate(&x).unwrap();
        let l = |n: u32, t: f64| match n {
            0 => 1.0,
            1 => 1.0 - t,
            2 => 1.0 - 2.0 * t + 0.5 * t * t,
            _ => unreachable!(),
        };
        for (k, idx) in basis.indices().iter().enumerate() {
            let mut expect = 1.0;
            for j in 0..2 {
                let s: f64 = if x[j] > 0.0 { 1.0 } else { -1.0 };
                let factor = l(idx.degrees()[j], x[j].abs());
                expect *= if idx.parities()[j] == 1 { s * factor } else { factor };
            }
            assert_abs_diff_eq!(a[k], expect, epsilon = 1e-14);
        }
    }

    #[test]
    fn evaluate_dim_mismatch() {
        let basis = build_multi_index_set(2, 1).unwrap();
        assert!(basis.evaluate(&DVector::zeros(3)).is_err());
        assert!(basis.jacobian_table(&DVector::zeros(1)).is_err());
    }

    #[test]
    fn jacobian_d1_order1() {
        let basis = build_multi_index_set(1, 1).unwrap();
        let j = basis.jacobian_table(&DVector::from_element(1, -0.5)).unwrap();
        assert_abs_diff_eq!(j[(0, 0)], 0.0);
        assert_abs_diff_eq!(j[(1, 0)], 0.0);
        assert_abs_diff_eq!(j[(2, 0)], 1.0);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let prior = LaplacianPrior::new(2, 1.7).unwrap();
        let basis = PceBasis::total_degree(prior, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let x = DVector::from_fn(2, |_, _| rng.gen::<f64>() * 4.0 - 2.0);
            if x.iter().any(|v| v.abs() < 1e-3) {
                continue; // keep clear of the sign kink
            }
            let jac = basis.jacobian_table(&x).unwrap();
            let h = 1e-6;
            for j in 0..2 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += h;
                xm[j] -= h;
                let ap = basis.evaluate(&xp).unwrap();
                let am = basis.evaluate(&xm).unwrap();
                for k in 0..basis.len() {
                    let fd = (ap[k] - am[k]) / (2.0 * h);
                    assert_abs_diff_eq!(jac[(k, j)], fd, epsilon = 1e-5);
                }
            }
        }
    }

    #[test]
    fn identity_coefficients_reproduce_coordinates() {
        for rate in [1.0, 2.5] {
            let prior = LaplacianPrior::new(3, rate).unwrap();
            let basis = PceBasis::total_degree(prior, 2).unwrap();
            let coeffs = basis.identity_coefficients().unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            for _ in 0..20 {
                let x = DVector::from_fn(3, |_, _| rng.gen::<f64>() * 6.0 - 3.0);
                let a = basis.evaluate(&x).unwrap();
                let y = &coeffs * &a;
                for j in 0..3 {
                    assert_abs_diff_eq!(y[j], x[j], epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn identity_needs_order_two() {
        let basis = build_multi_index_set(2, 1).unwrap();
        assert!(basis.identity_coefficients().is_err());
    }

    #[test]
    fn sampling_is_deterministic() {
        let prior = LaplacianPrior::new(3, 2.0).unwrap();
        let a = sample_laplacian(&prior, 5, 42).unwrap();
        let b = sample_laplacian(&prior, 5, 42).unwrap();
        assert_eq!(a.samples(), b.samples());
        let c = sample_laplacian(&prior, 5, 43).unwrap();
        assert_ne!(a.samples(), c.samples());
    }

    #[test]
    fn sampling_rejects_bad_arguments() {
        let prior = LaplacianPrior::new(1, 1.0).unwrap();
        assert!(sample_laplacian(&prior, 0, 1).is_err());
        assert!(LaplacianPrior::new(1, 0.0).is_err());
        assert!(LaplacianPrior::new(0, 1.0).is_err());
    }

    // Reference generator with an unrelated uniform stream, for cross-checking
    // the variance of the shipped sampler.
    fn reference_laplacian_variance(n: usize) -> f64 {
        let mut state = 0x1234_5678_9abc_def0u64;
        let mut acc = 0.0;
        let mut acc2 = 0.0;
        for _ in 0..n {
            // SplitMix64
            state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
            z ^= z >> 31;
            let u = ((z >> 11) as f64 / (1u64 << 53) as f64).max(1e-12);
            let v = 2.0 * u - 1.0;
            let x = -v.signum() * (1.0 - v.abs()).ln();
            acc += x;
            acc2 += x * x;
        }
        acc2 / n as f64 - (acc / n as f64).powi(2)
    }

    #[test]
    fn sampling_variance_and_symmetry() {
        let n = 1_000_000;
        let prior = LaplacianPrior::new(1, 1.0).unwrap();
        let batch = sample_laplacian(&prior, n, 7).unwrap();
        let mean = batch.samples().iter().sum::<f64>() / n as f64;
        let var = batch.samples().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        assert!((var - 2.0).abs() < 0.02, "variance {var}");
        let frac_pos =
            batch.samples().iter().filter(|&&v| v > 0.0).count() as f64 / n as f64;
        assert!((frac_pos - 0.5).abs() < 0.002, "P(X>0) {frac_pos}");
        // independent generator agrees on the same moment
        let ref_var = reference_laplacian_variance(n);
        assert!((ref_var - 2.0).abs() < 0.02, "reference variance {ref_var}");
    }

    #[test]
    fn log_density_matches_direct_formula() {
        let prior = LaplacianPrior::new(2, 3.0).unwrap();
        let x = DVector::from_vec(vec![0.5, -2.0]);
        let expect = 2.0 * (3.0f64 / 2.0).ln() - 3.0 * 2.5;
        assert_abs_diff_eq!(prior.log_density(&x).unwrap(), expect, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn constant_entry_is_one(xs in proptest::collection::vec(-50.0f64..50.0, 3)) {
            let basis = build_multi_index_set(3, 2).unwrap();
            let a = basis.evaluate(&DVector::from_vec(xs)).unwrap();
            prop_assert!((a[0] - 1.0).abs() < 1e-15);
        }

        #[test]
        fn jacobian_constant_row_is_zero(xs in proptest::collection::vec(-50.0f64..50.0, 2)) {
            let basis = build_multi_index_set(2, 3).unwrap();
            let j = basis.jacobian_table(&DVector::from_vec(xs)).unwrap();
            prop_assert!(j[(0, 0)] == 0.0 && j[(0, 1)] == 0.0);
        }
    }
}
