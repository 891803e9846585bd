//! Closed-form dynamics under collective dephasing alone.
//!
//! With `k`, `l` the excited counts of groups A and B, the collective operator
//! is `L = 2(k - l)` and the Hamiltonian `H = δ(k + l) + δ̃(l - k)`. Both are
//! diagonal in the two-group basis, so every density-matrix entry evolves by
//! a scalar factor:
//!
//! ```text
//! ρ_{(k,l),(j,n)}(t) = 2^{-N} sqrt(c_k c_l c_j c_n)
//!                      · exp(-γt (l-k+j-n)^2) · exp(-iδ̃t (l-k+j-n)) · exp(-iδt (k+l-j-n))
//! ```
//!
//! Grouping basis states by the sector `d = l - k` gives a compact form
//! `ρ = Σ_{d,d'} C_{dd'} |v_d⟩⟨v_{d'}|` with `C_{dd} = 1`. The stationary
//! state keeps only the diagonal sectors.

use nalgebra::{DMatrix, DVector};

use crate::error::{domain, Result};
use crate::fock::{
    binom_f64, symmetric_hadamard, CountDistribution, GroupSize, Shape, TwoGroupFockState, C64,
};
use crate::metrology::{qfi, CountModel, Engine};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DephasingParams {
    pub gamma: f64,
    pub t: f64,
    pub delta: f64,
    pub delta_tilde: f64,
}

impl DephasingParams {
    pub fn new(gamma: f64, t: f64, delta: f64, delta_tilde: f64) -> Result<Self> {
        if !(gamma >= 0.0) || !(t >= 0.0) {
            return Err(domain(format!("need gamma >= 0 and t >= 0 (gamma = {gamma}, t = {t})")));
        }
        if !delta.is_finite() || !delta_tilde.is_finite() || !gamma.is_finite() || !t.is_finite() {
            return Err(domain("dephasing parameters must be finite"));
        }
        Ok(DephasingParams {
            gamma,
            t,
            delta,
            delta_tilde,
        })
    }

    pub fn regime(&self) -> DephasingRegime {
        DephasingRegime::Finite {
            gamma_t: self.gamma * self.t,
            delta_tilde_t: self.delta_tilde * self.t,
        }
    }
}

/// How far dephasing has progressed, in dimensionless form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DephasingRegime {
    /// `γt → ∞`: coherences between different `L` sectors are gone.
    Stationary,
    Finite { gamma_t: f64, delta_tilde_t: f64 },
}

impl DephasingRegime {
    /// Weight `C_{dd'}` multiplying `|v_d⟩⟨v_{d'}|`.
    fn coupling(self, d: i64, dp: i64) -> C64 {
        if d == dp {
            return C64::new(1.0, 0.0);
        }
        match self {
            DephasingRegime::Stationary => C64::new(0.0, 0.0),
            DephasingRegime::Finite {
                gamma_t,
                delta_tilde_t,
            } => {
                let diff = (d - dp) as f64;
                C64::from_polar((-gamma_t * diff * diff).exp(), -delta_tilde_t * diff)
            }
        }
    }
}

/// Density matrix over the two-group basis, indexed by flattened `(k, l)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoGroupDensityMatrix {
    size: GroupSize,
    entries: DMatrix<C64>,
}

impl TwoGroupDensityMatrix {
    pub fn new(size: GroupSize, entries: DMatrix<C64>) -> Result<Self> {
        if entries.nrows() != size.dim() || entries.ncols() != size.dim() {
            return Err(domain("density matrix shape does not match group size"));
        }
        Ok(TwoGroupDensityMatrix { size, entries })
    }

    pub fn size(&self) -> GroupSize {
        self.size
    }

    pub fn entries(&self) -> &DMatrix<C64> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<C64> {
        self.entries
    }

    pub fn get(&self, ket: (usize, usize), bra: (usize, usize)) -> C64 {
        self.entries[(self.size.index(ket.0, ket.1), self.size.index(bra.0, bra.1))]
    }

    pub fn trace(&self) -> C64 {
        self.entries.trace()
    }

    pub fn hermiticity_deviation(&self) -> f64 {
        hermiticity_deviation(&self.entries)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.entries)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().into_iter().fold(f64::INFINITY, f64::min)
    }
}

pub(crate) fn hermiticity_deviation(m: &DMatrix<C64>) -> f64 {
    let mut worst = 0.0f64;
    for c in 0..m.ncols() {
        for r in 0..=c {
            worst = worst.max((m[(r, c)] - m[(c, r)].conj()).norm());
        }
    }
    worst
}

/// Ascending eigenvalues of a Hermitian matrix.
pub(crate) fn hermitian_eigenvalues(m: &DMatrix<C64>) -> Vec<f64> {
    let mut ev: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

fn weights(shape: Shape) -> Vec<f64> {
    let scale = 0.5f64.powf(shape.atoms() as f64 / 2.0);
    (0..shape.dim())
        .map(|idx| {
            let (k, l) = (idx / (shape.b + 1), idx % (shape.b + 1));
            (binom_f64(shape.a, k) * binom_f64(shape.b, l)).sqrt() * scale
        })
        .collect()
}

/// Dense state and its derivative with respect to the dimensionless phase `x = δt`.
pub(crate) fn dense_state(
    shape: Shape,
    regime: DephasingRegime,
    x: f64,
) -> (DMatrix<C64>, DMatrix<C64>) {
    let dim = shape.dim();
    let w = weights(shape);
    let label = |idx: usize| (idx / (shape.b + 1), idx % (shape.b + 1));
    let mut rho = DMatrix::zeros(dim, dim);
    let mut drho = DMatrix::zeros(dim, dim);
    for col in 0..dim {
        let (j, n) = label(col);
        for row in 0..dim {
            let (k, l) = label(row);
            let d = l as i64 - k as i64;
            let dp = n as i64 - j as i64;
            let c = regime.coupling(d, dp);
            if c.norm() == 0.0 {
                continue;
            }
            let s = (k + l) as f64 - (j + n) as f64;
            let v = c * C64::from_polar(w[row] * w[col], -x * s);
            rho[(row, col)] = v;
            drho[(row, col)] = v * C64::new(0.0, -s);
        }
    }
    (rho, drho)
}

/// Closed-form `ρ(t)` under collective dephasing.
pub fn rho_t(size: GroupSize, params: &DephasingParams) -> TwoGroupDensityMatrix {
    let (rho, _) = dense_state(size.shape(), params.regime(), params.delta * params.t);
    TwoGroupDensityMatrix {
        size,
        entries: rho,
    }
}

/// Stationary state; depends on detuning and time only through `δt`.
pub fn rho_stationary(size: GroupSize, delta_t: f64) -> TwoGroupDensityMatrix {
    let (rho, _) = dense_state(size.shape(), DephasingRegime::Stationary, delta_t);
    TwoGroupDensityMatrix {
        size,
        entries: rho,
    }
}

/// `∂ρ_stat/∂ω`, i.e. the stationary entries times `-i t (k + l - j - n)`.
pub fn rho_stationary_derivative(size: GroupSize, t: f64, delta_t: f64) -> DMatrix<C64> {
    let (_, drho) = dense_state(size.shape(), DephasingRegime::Stationary, delta_t);
    drho * C64::new(t, 0.0)
}

/// Right-hand side of the collective-dephasing dissipator
/// `(γ/2)(LρL - ½L²ρ - ½ρL²)` for a matrix in the two-group basis.
pub fn dephasing_dissipator(size: GroupSize, gamma: f64, rho: &DMatrix<C64>) -> DMatrix<C64> {
    let m = size.m();
    let ell = |idx: usize| 2.0 * ((idx / (m + 1)) as f64 - (idx % (m + 1)) as f64);
    DMatrix::from_fn(rho.nrows(), rho.ncols(), |r, c| {
        let (la, lb) = (ell(r), ell(c));
        rho[(r, c)] * (gamma / 2.0 * (la * lb - 0.5 * la * la - 0.5 * lb * lb))
    })
}

/// Analytic eigendecomposition of the stationary state: the nonzero
/// eigenvalues `f_p = C(N,p)/2^N` with eigenvectors `φ_p` (`p = 0..=M`) and
/// `φ̃_p` (`p = 0..M`).
#[derive(Debug, Clone)]
pub struct StatEigensystem {
    pub size: GroupSize,
    pub phi: Vec<(f64, TwoGroupFockState)>,
    pub phi_tilde: Vec<(f64, TwoGroupFockState)>,
}

impl StatEigensystem {
    pub fn eigenvalue_sum(&self) -> f64 {
        self.phi.iter().chain(&self.phi_tilde).map(|(f, _)| f).sum()
    }

    pub fn vectors(&self) -> impl Iterator<Item = &(f64, TwoGroupFockState)> {
        self.phi.iter().chain(&self.phi_tilde)
    }

    pub fn reconstruct(&self) -> DMatrix<C64> {
        let dim = self.size.dim();
        self.vectors()
            .fold(DMatrix::zeros(dim, dim), |acc, (f, v)| acc + v.projector() * C64::new(*f, 0.0))
    }
}

pub fn stat_eigensystem(size: GroupSize, delta_t: f64) -> StatEigensystem {
    let m = size.m();
    let n = size.atoms();
    let scale = 0.5f64.powi(n as i32);
    let build = |p: usize, tilde: bool| {
        let norm = binom_f64(n, p).sqrt();
        let mut amps = DVector::zeros(size.dim());
        for j in 0..=p {
            let c = (binom_f64(m, j) * binom_f64(m, p - j)).sqrt() / norm;
            let (idx, phase) = if tilde {
                (size.index(m - j, p - j), 2.0 * j as f64 * delta_t)
            } else {
                (size.index(j, m - p + j), -2.0 * j as f64 * delta_t)
            };
            amps[idx] = C64::from_polar(c, phase);
        }
        (binom_f64(n, p) * scale, TwoGroupFockState::new_unchecked(size, amps))
    };
    StatEigensystem {
        size,
        phi: (0..=m).map(|p| build(p, false)).collect(),
        phi_tilde: (0..m).map(|p| build(p, true)).collect(),
    }
}

struct Sector {
    d: i64,
    // (k, l, amplitude weight)
    entries: Vec<(usize, usize, f64)>,
}

/// Outcome statistics of the two-group state after the second (perfect)
/// Hadamard layer, evaluated sector by sector without forming `ρ`.
#[derive(Clone)]
pub(crate) struct SectorCounts {
    shape: Shape,
    had_a: DMatrix<f64>,
    had_b: DMatrix<f64>,
    sectors: std::sync::Arc<Vec<Sector>>,
    regime: DephasingRegime,
}

impl SectorCounts {
    pub fn new(shape: Shape, regime: DephasingRegime) -> Self {
        let w = weights(shape);
        let mut sectors = Vec::new();
        for d in -(shape.a as i64)..=(shape.b as i64) {
            let entries: Vec<_> = (0..=shape.a)
                .filter_map(|k| {
                    let l = k as i64 + d;
                    (0..=shape.b as i64)
                        .contains(&l)
                        .then(|| (k, l as usize, w[shape.index(k, l as usize)]))
                })
                .collect();
            sectors.push(Sector { d, entries });
        }
        SectorCounts {
            shape,
            had_a: symmetric_hadamard(shape.a),
            had_b: symmetric_hadamard(shape.b),
            sectors: std::sync::Arc::new(sectors),
            regime,
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    /// Outcome probabilities and their derivative with respect to `x = δt`.
    pub fn statistics(&self, x: f64) -> (Vec<f64>, Vec<f64>) {
        let dim = self.shape.dim();
        let nb = self.shape.b + 1;
        let mut amps = Vec::with_capacity(self.sectors.len());
        for sector in self.sectors.iter() {
            let mut w = vec![C64::new(0.0, 0.0); dim];
            let mut dw = vec![C64::new(0.0, 0.0); dim];
            for &(k, l, c) in &sector.entries {
                let s = (k + l) as f64;
                let amp = C64::from_polar(c, -x * s);
                let damp = amp * C64::new(0.0, -s);
                for kp in 0..=self.shape.a {
                    let ha = self.had_a[(kp, k)];
                    if ha == 0.0 {
                        continue;
                    }
                    let row = kp * nb;
                    for lp in 0..nb {
                        let h = ha * self.had_b[(lp, l)];
                        w[row + lp] += amp * h;
                        dw[row + lp] += damp * h;
                    }
                }
            }
            amps.push((sector.d, w, dw));
        }

        let mut p = vec![0.0; dim];
        let mut dp = vec![0.0; dim];
        for (_, w, dw) in &amps {
            for i in 0..dim {
                p[i] += w[i].norm_sqr();
                dp[i] += 2.0 * (w[i].conj() * dw[i]).re;
            }
        }
        if let DephasingRegime::Finite { .. } = self.regime {
            for (ia, (d, w, dw)) in amps.iter().enumerate() {
                for (dp_, w2, dw2) in &amps[ia + 1..] {
                    let c = self.regime.coupling(*d, *dp_);
                    if c.norm() == 0.0 {
                        continue;
                    }
                    for i in 0..dim {
                        let cross = c * w[i] * w2[i].conj();
                        let dcross = c * (dw[i] * w2[i].conj() + w[i] * dw2[i].conj());
                        p[i] += 2.0 * cross.re;
                        dp[i] += 2.0 * dcross.re;
                    }
                }
            }
        }
        (p, dp)
    }
}

/// Ideal pipeline: perfect gates and readout, collective dephasing only.
#[derive(Clone)]
pub struct AnalyticModel {
    size: GroupSize,
    counts: SectorCounts,
}

impl AnalyticModel {
    pub fn new(size: GroupSize, regime: DephasingRegime) -> Self {
        AnalyticModel {
            size,
            counts: SectorCounts::new(size.shape(), regime),
        }
    }

    pub fn stationary(size: GroupSize) -> Self {
        Self::new(size, DephasingRegime::Stationary)
    }
}

impl CountModel for AnalyticModel {
    fn group_size(&self) -> GroupSize {
        self.size
    }

    fn engine(&self) -> Engine {
        Engine::Analytic
    }

    fn distribution(&self, delta_t: f64) -> Result<(CountDistribution, Vec<f64>)> {
        let (p, dp) = self.counts.statistics(delta_t);
        Ok((CountDistribution::new(self.size, p)?, dp))
    }

    fn scaled_qfi(&self, delta_t: f64) -> Result<Option<f64>> {
        let (rho, drho) = dense_state(self.counts.shape(), self.counts.regime, delta_t);
        qfi(&rho, &drho).map(Some)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn gs(m: usize) -> GroupSize {
        GroupSize::new(m).unwrap()
    }

    fn max_diff(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
        (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn rho_t_at_zero_is_initial_projector() {
        for m in 1..=4 {
            let params = DephasingParams::new(1.3, 0.0, 0.7, -0.4).unwrap();
            let rho = rho_t(gs(m), &params);
            let proj = crate::fock::initial_state(gs(m)).projector();
            assert!(max_diff(rho.entries(), &proj) < 1e-14);
        }
    }

    #[test]
    fn rho_t_large_gamma_t_is_stationary() {
        for &dtil in &[0.0, 0.9, -3.1] {
            let params = DephasingParams::new(50.0, 1.0, 0.37, dtil).unwrap();
            let a = rho_t(gs(3), &params);
            let b = rho_stationary(gs(3), 0.37);
            assert!(max_diff(a.entries(), b.entries()) < 1e-12);
        }
        for &dtil in &[0.0, 2.0, -5.0] {
            let params = DephasingParams::new(30.0, 1.0, 1.1, dtil).unwrap();
            let a = rho_t(gs(4), &params);
            let b = rho_stationary(gs(4), 1.1);
            assert!(max_diff(a.entries(), b.entries()) < 1e-10);
        }
    }

    #[test]
    fn rho_t_single_pair_entries() {
        let params = DephasingParams::new(1.0, 1.0, 0.0, 0.0).unwrap();
        let rho = rho_t(gs(1), &params);
        assert_abs_diff_eq!(rho.get((0, 0), (1, 1)).re, 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(rho.get((0, 1), (0, 0)).re, 0.25 * (-1.0f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn stationary_spectra() {
        let ev = rho_stationary(gs(1), 0.0).eigenvalues();
        let expect = [0.0, 0.25, 0.25, 0.5];
        for (a, b) in ev.iter().zip(expect) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
        // Bell-state eigenvector (|00⟩+|11⟩)/√2 for the 1/2 eigenvalue
        let rho = rho_stationary(gs(1), 0.0);
        let mut bell = DVector::zeros(4);
        bell[0] = C64::new(0.5f64.sqrt(), 0.0);
        bell[3] = C64::new(0.5f64.sqrt(), 0.0);
        let rb = rho.entries() * &bell;
        assert!((rb - &bell * C64::new(0.5, 0.0)).norm() < 1e-12);

        let ev = rho_stationary(gs(2), 0.0).eigenvalues();
        let nonzero: Vec<f64> = ev.into_iter().filter(|v| v.abs() > 1e-12).collect();
        let expect = [1.0 / 16.0, 1.0 / 16.0, 0.25, 0.25, 3.0 / 8.0];
        assert_eq!(nonzero.len(), expect.len());
        for (a, b) in nonzero.iter().zip(expect) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn stationary_spectrum_ignores_phase() {
        for m in 1..=4 {
            let a = rho_stationary(gs(m), 0.0).eigenvalues();
            let b = rho_stationary(gs(m), 2.3).eigenvalues();
            for (x, y) in a.iter().zip(&b) {
                assert_abs_diff_eq!(x, y, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn derivative_properties() {
        let size = gs(2);
        let t = 1.7;
        let x = 0.83;
        let d = rho_stationary_derivative(size, t, x);
        for i in 0..size.dim() {
            assert_eq!(d[(i, i)], C64::new(0.0, 0.0));
        }
        assert!(d.trace().norm() < 1e-15);
        assert!(hermiticity_deviation(&d) < 1e-15);

        // central difference in δ with step 1e-6 / t
        let h = 1e-6 / t;
        let plus = rho_stationary(size, (x / t + h) * t);
        let minus = rho_stationary(size, (x / t - h) * t);
        let fd = (plus.entries() - minus.entries()) / C64::new(2.0 * h, 0.0);
        let scale = d.iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(max_diff(&fd, &d) / scale < 1e-7);
    }

    #[test]
    fn eigensystem_examples() {
        let es = stat_eigensystem(gs(1), 0.0);
        assert_abs_diff_eq!(es.phi[0].0, 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(es.phi[1].0, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(es.phi_tilde[0].0, 0.25, epsilon = 1e-15);
        for m in 1..=20 {
            let es = stat_eigensystem(gs(m), 0.4);
            assert_abs_diff_eq!(es.eigenvalue_sum(), 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn eigensystem_reconstructs_and_is_orthonormal() {
        for m in 1..=6 {
            for &x in &[0.0, 0.61, 2.9] {
                let es = stat_eigensystem(gs(m), x);
                let rho = rho_stationary(gs(m), x);
                assert!(max_diff(&es.reconstruct(), rho.entries()) < 1e-12);
                let vecs: Vec<_> = es.vectors().map(|(_, v)| v.amplitudes().clone()).collect();
                for (i, a) in vecs.iter().enumerate() {
                    for (j, b) in vecs.iter().enumerate() {
                        let ip = a.dotc(b);
                        let expect = if i == j { 1.0 } else { 0.0 };
                        assert!((ip - C64::new(expect, 0.0)).norm() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn rho_t_is_a_state() {
        for m in 1..=4 {
            for &(g, t, d, dt) in &[(0.3, 1.0, 0.2, 0.0), (1.0, 2.0, -1.0, 0.5), (5.0, 0.1, 3.0, 1.0)] {
                let rho = rho_t(gs(m), &DephasingParams::new(g, t, d, dt).unwrap());
                assert!(rho.hermiticity_deviation() < 1e-12);
                assert_abs_diff_eq!(rho.trace().re, 1.0, epsilon = 1e-12);
                assert!(rho.min_eigenvalue() > -1e-10);
            }
        }
    }

    #[test]
    fn closed_form_matches_dissipator_rates() {
        // the generator is diagonal, so d/dt of each entry at γ, with δ = δ̃ = 0,
        // must equal -γ (l-k+j-n)^2 times the entry
        let size = gs(3);
        let gamma = 0.7;
        let rho0 = crate::fock::initial_state(size).projector();
        let d = dephasing_dissipator(size, gamma, &rho0);
        let m = size.m();
        for r in 0..size.dim() {
            for c in 0..size.dim() {
                let (k, l) = (r / (m + 1), r % (m + 1));
                let (j, n) = (c / (m + 1), c % (m + 1));
                let e = l as f64 - k as f64 + j as f64 - n as f64;
                let expect = rho0[(r, c)] * (-gamma * e * e);
                assert!((d[(r, c)] - expect).norm() < 1e-14);
            }
        }
        let stat = rho_stationary(size, 0.9);
        let zero = dephasing_dissipator(size, gamma, stat.entries());
        assert!(zero.iter().all(|z| z.norm() < 1e-12));
    }

    fn dense_counts(shape: Shape, regime: DephasingRegime, x: f64) -> (Vec<f64>, Vec<f64>) {
        let (rho, drho) = dense_state(shape, regime, x);
        let u = symmetric_hadamard(shape.a).kronecker(&symmetric_hadamard(shape.b));
        let u = u.map(|v| C64::new(v, 0.0));
        let p = (&u * rho * &u).diagonal();
        let dp = (&u * drho * &u).diagonal();
        (p.iter().map(|z| z.re).collect(), dp.iter().map(|z| z.re).collect())
    }

    #[test]
    fn sector_counts_match_dense_path() {
        let regimes = [
            DephasingRegime::Stationary,
            DephasingRegime::Finite {
                gamma_t: 0.4,
                delta_tilde_t: 1.3,
            },
        ];
        for &(a, b) in &[(1, 1), (2, 3), (3, 0), (4, 4)] {
            for regime in regimes {
                for &x in &[0.0, 0.77, 4.0] {
                    let shape = Shape::new(a, b);
                    let (p1, d1) = SectorCounts::new(shape, regime).statistics(x);
                    let (p2, d2) = dense_counts(shape, regime, x);
                    for i in 0..shape.dim() {
                        assert_abs_diff_eq!(p1[i], p2[i], epsilon = 1e-13);
                        assert_abs_diff_eq!(d1[i], d2[i], epsilon = 1e-12);
                    }
                    assert_abs_diff_eq!(p1.iter().sum::<f64>(), 1.0, epsilon = 1e-13);
                }
            }
        }
    }
}
