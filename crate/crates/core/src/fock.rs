//! Permutation-symmetric two-group representation.
//!
//! The atoms are split into group A (first half) and group B (second half).
//! Within each group only the number of excited atoms (`|1⟩`) matters, so a
//! symmetric state is a vector over labels `(k, l)`: `k` excited atoms in
//! group A and `l` in group B. Vectors are flattened as
//! `index = k * (M + 1) + l`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{domain, Error, Result};

pub type C64 = Complex64;

/// Atoms per group, `M = N / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct GroupSize(usize);

impl GroupSize {
    pub fn new(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(domain("group size must be positive"));
        }
        Ok(GroupSize(m))
    }

    /// Builds the group size from the total atom count, which must be even and at least 2.
    pub fn from_atoms(n: usize) -> Result<Self> {
        if n < 2 || n % 2 != 0 {
            return Err(domain(format!("atom number must be even and >= 2, got {n}")));
        }
        Ok(GroupSize(n / 2))
    }

    pub fn m(self) -> usize {
        self.0
    }

    pub fn atoms(self) -> usize {
        2 * self.0
    }

    /// Dimension of the two-group symmetric space, `(M + 1)^2`.
    pub fn dim(self) -> usize {
        (self.0 + 1) * (self.0 + 1)
    }

    pub fn index(self, k: usize, l: usize) -> usize {
        k * (self.0 + 1) + l
    }

    pub(crate) fn shape(self) -> Shape {
        Shape::new(self.0, self.0)
    }
}

/// Group sizes that may differ; used for sub-instances of the classical
/// reduction where only some atoms of each group survive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub(crate) struct Shape {
    pub a: usize,
    pub b: usize,
}

impl Shape {
    pub fn new(a: usize, b: usize) -> Self {
        Shape { a, b }
    }

    pub fn dim(self) -> usize {
        (self.a + 1) * (self.b + 1)
    }

    pub fn index(self, k: usize, l: usize) -> usize {
        k * (self.b + 1) + l
    }

    pub fn atoms(self) -> usize {
        self.a + self.b
    }
}

/// Exact binomial coefficient. Intermediate products fit in `u128` for `n <= 120`.
pub fn binom(n: u64, k: u64) -> Result<u128> {
    if k > n {
        return Err(domain(format!("binom({n}, {k}): k exceeds n")));
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    Ok(acc)
}

/// Binomial coefficient as a float; callers guarantee `k <= n`.
pub(crate) fn binom_f64(n: usize, k: usize) -> f64 {
    binom(n as u64, k as u64).expect("k <= n") as f64
}

/// Binomial probability mass function over `0..=n` successes.
pub(crate) fn binomial_pmf(n: usize, q: f64) -> Vec<f64> {
    (0..=n)
        .map(|i| binom_f64(n, i) * q.powi(i as i32) * (1.0 - q).powi((n - i) as i32))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoGroupFockState {
    size: GroupSize,
    amplitudes: DVector<C64>,
}

impl TwoGroupFockState {
    /// Wraps an amplitude vector; the squared norm must be 1 within 1e-12.
    pub fn new(size: GroupSize, amplitudes: DVector<C64>) -> Result<Self> {
        if amplitudes.len() != size.dim() {
            return Err(domain(format!(
                "expected {} amplitudes, got {}",
                size.dim(),
                amplitudes.len()
            )));
        }
        let norm = amplitudes.norm_squared();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(domain(format!("state norm^2 is {norm}, expected 1")));
        }
        Ok(TwoGroupFockState { size, amplitudes })
    }

    pub(crate) fn new_unchecked(size: GroupSize, amplitudes: DVector<C64>) -> Self {
        TwoGroupFockState { size, amplitudes }
    }

    pub fn size(&self) -> GroupSize {
        self.size
    }

    pub fn amplitude(&self, k: usize, l: usize) -> C64 {
        self.amplitudes[self.size.index(k, l)]
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amplitudes
    }

    pub fn norm_squared(&self) -> f64 {
        self.amplitudes.norm_squared()
    }

    /// `|ψ⟩⟨ψ|` as a dense matrix.
    pub fn projector(&self) -> DMatrix<C64> {
        &self.amplitudes * self.amplitudes.adjoint()
    }
}

/// Probabilities of finding `k` excited atoms in group A and `l` in group B.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountDistribution {
    size: GroupSize,
    probabilities: Vec<f64>,
}

impl CountDistribution {
    /// Validates nonnegativity (round-off down to -1e-13 is clipped) and a
    /// total of 1 within 1e-10.
    pub fn new(size: GroupSize, mut probabilities: Vec<f64>) -> Result<Self> {
        if probabilities.len() != size.dim() {
            return Err(domain(format!(
                "expected {} probabilities, got {}",
                size.dim(),
                probabilities.len()
            )));
        }
        for p in probabilities.iter_mut() {
            if !p.is_finite() || *p < -1e-13 {
                return Err(domain(format!("invalid probability {p}")));
            }
            *p = p.max(0.0);
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(domain(format!("probabilities sum to {total}")));
        }
        Ok(CountDistribution {
            size,
            probabilities,
        })
    }

    pub fn size(&self) -> GroupSize {
        self.size
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn get(&self, k: usize, l: usize) -> f64 {
        self.probabilities[self.size.index(k, l)]
    }

    pub fn total(&self) -> f64 {
        self.probabilities.iter().sum()
    }
}

/// Amplitudes `sqrt(C(M,k) C(M,l)) / 2^M` of the state after the first Hadamard layer.
pub fn initial_state(size: GroupSize) -> TwoGroupFockState {
    TwoGroupFockState::new_unchecked(size, initial_amplitudes(size.shape()))
}

pub(crate) fn initial_amplitudes(shape: Shape) -> DVector<C64> {
    let scale = 0.5f64.powf(shape.atoms() as f64 / 2.0);
    DVector::from_fn(shape.dim(), |idx, _| {
        let (k, l) = (idx / (shape.b + 1), idx % (shape.b + 1));
        C64::new(
            (binom_f64(shape.a, k) * binom_f64(shape.b, l)).sqrt() * scale,
            0.0,
        )
    })
}

/// `H^{⊗M}` restricted to one group's symmetric subspace, entry `(k', k)`.
pub fn hadamard_symmetric(size: GroupSize) -> DMatrix<f64> {
    symmetric_hadamard(size.m())
}

/// Krawtchouk form: `sqrt(C(M,k)/C(M,k')) K_{k'}(k) / 2^{M/2}` where
/// `K_{k'}(k) = Σ_i (-1)^i C(k,i) C(M-k,k'-i)`.
pub(crate) fn symmetric_hadamard(m: usize) -> DMatrix<f64> {
    let scale = 0.5f64.powf(m as f64 / 2.0);
    DMatrix::from_fn(m + 1, m + 1, |kp, k| {
        let kraw = krawtchouk(m, kp, k);
        (binom_f64(m, k) / binom_f64(m, kp)).sqrt() * kraw as f64 * scale
    })
}

fn krawtchouk(m: usize, degree: usize, x: usize) -> i128 {
    (0..=degree.min(x))
        .filter(|&i| degree - i <= m - x)
        .map(|i| {
            let term = binom(x as u64, i as u64).unwrap() as i128
                * binom((m - x) as u64, (degree - i) as u64).unwrap() as i128;
            if i % 2 == 0 {
                term
            } else {
                -term
            }
        })
        .sum()
}

/// Column-stochastic matrix of independent per-atom readout flips with
/// probability `(1 - eta) / 2`; column `k` is the true excited count.
pub fn readout_flip_matrix(m: usize, eta: f64) -> Result<DMatrix<f64>> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(domain(format!("readout fidelity {eta} outside [0, 1]")));
    }
    let f = (1.0 - eta) / 2.0;
    let mut mat = DMatrix::zeros(m + 1, m + 1);
    for k in 0..=m {
        // a of the k excited atoms read as ground, b of the m - k ground atoms read as excited
        for a in 0..=k {
            for b in 0..=(m - k) {
                let flips = (a + b) as i32;
                mat[(k - a + b, k)] += binom_f64(k, a)
                    * binom_f64(m - k, b)
                    * f.powi(flips)
                    * (1.0 - f).powi(m as i32 - flips);
            }
        }
    }
    Ok(mat)
}

/// Applies independent count channels to each group of a (possibly signed)
/// vector indexed like a [`CountDistribution`].
pub(crate) fn apply_group_channels(
    ch_a: &DMatrix<f64>,
    ch_b: &DMatrix<f64>,
    values: &[f64],
) -> Vec<f64> {
    let grid = DMatrix::from_row_slice(ch_a.ncols(), ch_b.ncols(), values);
    let out = ch_a * grid * ch_b.transpose();
    let mut flat = Vec::with_capacity(out.len());
    for r in 0..out.nrows() {
        for c in 0..out.ncols() {
            flat.push(out[(r, c)]);
        }
    }
    flat
}

/// Per-atom symmetric readout errors acting on count statistics.
pub fn misclassify_counts(p: &CountDistribution, eta_m: f64) -> Result<CountDistribution> {
    let flip = readout_flip_matrix(p.size.m(), eta_m)?;
    let out = apply_group_channels(&flip, &flip, &p.probabilities);
    CountDistribution::new(p.size, out)
}

/// Same channel on a signed derivative vector.
pub(crate) fn misclassify_values(m: usize, eta_m: f64, values: &[f64]) -> Result<Vec<f64>> {
    let flip = readout_flip_matrix(m, eta_m)?;
    Ok(apply_group_channels(&flip, &flip, values))
}

pub(crate) fn check_fidelity(name: &str, eta: f64) -> Result<()> {
    if (0.0..=1.0).contains(&eta) {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} = {eta} outside [0, 1]")))
    }
}
