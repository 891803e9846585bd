//! Master-equation dynamics over the full `2^N` atomic basis, including
//! per-atom spontaneous emission.
//!
//! Bit `N-1-j` of a basis index is atom `j` (1 = excited), so group A sits in
//! the high bits. The Hamiltonian and the collective dephasing act entrywise:
//! `ρ_ab` picks up `exp(-iΔ_ab t - (γt/4)(L_a - L_b)²)`. Emission maps
//! `(a, b)` to `(a - e_j, b - e_j)` and decays at `Γ(n_a + n_b)/2`; both moves
//! leave `E_a - E_b` and `L_a - L_b` unchanged, so emission commutes with that
//! diagonal factor. The engine integrates emission alone on the transformed
//! state `ρ̃ = exp(-ℒ_0 t) ρ` and applies the diagonal factor exactly at the
//! end. `ρ̃` is independent of `γ`, `δ` and `δ̃`, which lets one trajectory
//! serve every working point and dephasing rate.

use std::io::Write;

use log::debug;
use nalgebra::DMatrix;
use serde::Serialize;

use crate::dephasing::{hermiticity_deviation, hermitian_eigenvalues, DephasingParams, TwoGroupDensityMatrix};
use crate::error::{domain, Error, Result};
use crate::fock::{binom_f64, check_fidelity, misclassify_values, CountDistribution, GroupSize, C64};
use crate::metrology::{
    maximize_f, optimal_time_search, qfi, CountModel, Engine, ExperimentParams, TimeOptimum, TimeSearch,
};
use crate::noise::GateFidelities;

pub const DEFAULT_ATOM_CAP: usize = 12;

/// Largest atom number for which [`AtomicModel`] diagonalises the full state
/// to report a quantum Fisher information.
pub const QFI_ATOM_CAP: usize = 8;

fn popcount(x: usize) -> i64 {
    x.count_ones() as i64
}

/// Excited counts `(k, l)` of groups A and B in a basis pattern.
pub fn group_counts(n_atoms: usize, pattern: usize) -> (usize, usize) {
    let m = n_atoms / 2;
    let low = (1usize << m) - 1;
    ((pattern >> m).count_ones() as usize, (pattern & low).count_ones() as usize)
}

/// Eigenvalue of `L = -Σ_A σ_z + Σ_B σ_z` with `σ_z|0⟩ = +|0⟩`.
pub fn dephasing_eigenvalue(n_atoms: usize, pattern: usize) -> i64 {
    let (k, l) = group_counts(n_atoms, pattern);
    2 * (k as i64 - l as i64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AtomicDensityMatrix {
    n_atoms: usize,
    entries: DMatrix<C64>,
}

impl AtomicDensityMatrix {
    pub fn new(n_atoms: usize, entries: DMatrix<C64>) -> Result<Self> {
        GroupSize::from_atoms(n_atoms)?;
        let dim = 1usize << n_atoms;
        if entries.shape() != (dim, dim) {
            return Err(domain(format!("expected a {dim}x{dim} matrix for {n_atoms} atoms")));
        }
        let deviation = hermiticity_deviation(&entries);
        if deviation > 1e-10 {
            return Err(Error::NonHermitian { deviation });
        }
        let trace = entries.trace();
        if (trace - C64::new(1.0, 0.0)).norm() > 1e-10 {
            return Err(domain(format!("trace {trace} differs from 1")));
        }
        Ok(AtomicDensityMatrix { n_atoms, entries })
    }

    /// Product state after the first Hadamard layer acting on `|0…0⟩`:
    /// `ρ_ab = 2^{-N} η^{|a ⊕ b|}`.
    pub fn initial(n_atoms: usize, eta_h: f64) -> Result<Self> {
        GroupSize::from_atoms(n_atoms)?;
        check_fidelity("eta_h", eta_h)?;
        let dim = 1usize << n_atoms;
        let scale = 1.0 / dim as f64;
        let powers: Vec<f64> = (0..=n_atoms).map(|w| eta_h.powi(w as i32)).collect();
        let entries = DMatrix::from_fn(dim, dim, |a, b| {
            C64::new(scale * powers[(a ^ b).count_ones() as usize], 0.0)
        });
        Ok(AtomicDensityMatrix { n_atoms, entries })
    }

    /// Embeds a two-group state through normalised Dicke states of each group.
    pub fn from_fock(rho: &TwoGroupDensityMatrix) -> Self {
        let size = rho.size();
        let (m, n_atoms) = (size.m(), size.atoms());
        let dim = 1usize << n_atoms;
        let label: Vec<(usize, usize, f64)> = (0..dim)
            .map(|a| {
                let (k, l) = group_counts(n_atoms, a);
                (k, l, (binom_f64(m, k) * binom_f64(m, l)).sqrt())
            })
            .collect();
        let entries = DMatrix::from_fn(dim, dim, |a, b| {
            let (k, l, na) = label[a];
            let (j, n, nb) = label[b];
            rho.get((k, l), (j, n)) / (na * nb)
        });
        AtomicDensityMatrix { n_atoms, entries }
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<C64> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<C64> {
        self.entries
    }

    pub fn trace(&self) -> C64 {
        self.entries.trace()
    }

    pub fn purity(&self) -> f64 {
        self.entries.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn hermiticity_deviation(&self) -> f64 {
        hermiticity_deviation(&self.entries)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        hermitian_eigenvalues(&self.entries)[0]
    }

    /// Relabels atoms: atom `j` moves to position `perm[j]`.
    pub fn permute_atoms(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n_atoms;
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(domain("not a permutation of the atoms"));
        }
        let map = |a: usize| {
            (0..n).fold(0usize, |acc, j| {
                if a >> (n - 1 - j) & 1 == 1 {
                    acc | 1 << (n - 1 - perm[j])
                } else {
                    acc
                }
            })
        };
        let targets: Vec<usize> = (0..self.dim()).map(map).collect();
        let mut entries = DMatrix::zeros(self.dim(), self.dim());
        for b in 0..self.dim() {
            for a in 0..self.dim() {
                entries[(targets[a], targets[b])] = self.entries[(a, b)];
            }
        }
        Ok(AtomicDensityMatrix {
            n_atoms: n,
            entries,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LindbladParams {
    pub gamma: f64,
    /// Spontaneous emission rate Γ per atom.
    pub emission: f64,
    pub delta: f64,
    pub delta_tilde: f64,
    pub t_final: f64,
}

impl LindbladParams {
    pub fn new(gamma: f64, emission: f64, delta: f64, delta_tilde: f64, t_final: f64) -> Result<Self> {
        let all = [gamma, emission, delta, delta_tilde, t_final];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(domain("parameters must be finite"));
        }
        if gamma < 0.0 || emission < 0.0 || t_final < 0.0 {
            return Err(domain("rates and time must be nonnegative"));
        }
        Ok(LindbladParams {
            gamma,
            emission,
            delta,
            delta_tilde,
            t_final,
        })
    }
}

impl From<DephasingParams> for LindbladParams {
    fn from(p: DephasingParams) -> Self {
        LindbladParams {
            gamma: p.gamma,
            emission: 0.0,
            delta: p.delta,
            delta_tilde: p.delta_tilde,
            t_final: p.t,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SensitivityPair {
    pub rho: AtomicDensityMatrix,
    pub drho_domega: DMatrix<C64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Integrator {
    /// Fixed-step classical RK4 on the transformed state, halving the step
    /// until successive refinements agree.
    #[default]
    Rk4,
    /// Closed-form per-atom amplitude damping; serves as the oracle for `Rk4`.
    ExactChannel,
}

#[derive(Debug, Clone, Copy)]
pub struct EngineConfig {
    pub max_atoms: usize,
    pub integrator: Integrator,
    /// Agreement required between successive RK4 refinements, as a bound on
    /// the trace-norm difference.
    pub tolerance: f64,
    pub max_refinements: usize,
}

/// Largest atom number for which [`EngineConfig::auto`] keeps RK4; beyond it
/// the refinement loop costs minutes per trajectory on one core.
pub const RK4_ATOM_LIMIT: usize = 6;

impl EngineConfig {
    /// RK4 up to [`RK4_ATOM_LIMIT`] atoms, the exact channel above.
    pub fn auto(n_atoms: usize) -> Self {
        let integrator = if n_atoms <= RK4_ATOM_LIMIT {
            Integrator::Rk4
        } else {
            Integrator::ExactChannel
        };
        EngineConfig {
            integrator,
            ..EngineConfig::default()
        }
    }
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            max_atoms: DEFAULT_ATOM_CAP,
            integrator: Integrator::Rk4,
            tolerance: 1e-9,
            max_refinements: 12,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LindbladEngine {
    config: EngineConfig,
}

/// Emission generator applied to a column-major `2^N × 2^N` buffer, one
/// atom at a time so the inner loops run over contiguous runs.
fn emission_rhs(n: usize, rate: f64, src: &[C64], dst: &mut [C64]) {
    let dim = 1usize << n;
    let half_rate: Vec<f64> = (0..dim).map(|a| -0.5 * rate * popcount(a) as f64).collect();
    for b in 0..dim {
        let col = b * dim;
        let hb = half_rate[b];
        for a in 0..dim {
            dst[col + a] = src[col + a] * (half_rate[a] + hb);
        }
    }
    for j in 0..n {
        let bit = 1usize << j;
        for b in (0..dim).filter(|b| b & bit == 0) {
            let (to, from) = (b * dim, (b | bit) * dim);
            for run in (0..dim).step_by(2 * bit) {
                for a in run..run + bit {
                    dst[to + a] += src[from + a + bit] * rate;
                }
            }
        }
    }
}

/// One classical RK4 step. For an autonomous linear generator the four
/// stages collapse to the fourth-order Taylor polynomial of `exp(hD)`.
fn rk4_step(n: usize, rate: f64, h: f64, y: &mut [C64], term: &mut [C64], tmp: &mut [C64]) {
    term.copy_from_slice(y);
    for i in 1..=4 {
        emission_rhs(n, rate, term, tmp);
        let scale = h / i as f64;
        for (t, (&d, acc)) in term.iter_mut().zip(tmp.iter().zip(y.iter_mut())) {
            *t = d * scale;
            *acc += *t;
        }
    }
}

/// Exact per-atom amplitude damping after decay exponent `Γt`.
fn amplitude_damping(n: usize, gamma_t: f64, m: &mut [C64]) {
    let dim = 1usize << n;
    let p = -(-gamma_t).exp_m1();
    let survive = (-gamma_t).exp();
    let keep = (-0.5 * gamma_t).exp();
    for j in 0..n {
        let bit = 1usize << j;
        for b in 0..dim {
            for a in 0..dim {
                let idx = b * dim + a;
                match (a & bit != 0, b & bit != 0) {
                    (false, false) => {
                        let src = m[(b | bit) * dim + (a | bit)];
                        m[idx] += src * p;
                    }
                    (true, true) => {}
                    _ => m[idx] *= keep,
                }
            }
        }
        for b in (0..dim).filter(|b| b & bit != 0) {
            for a in (0..dim).filter(|a| a & bit != 0) {
                m[b * dim + a] *= survive;
            }
        }
    }
}

fn trace_norm_bound(a: &[C64], b: &[C64], dim: usize) -> f64 {
    let frob: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
    (dim as f64).sqrt() * frob
}

/// Entrywise factor of the Hamiltonian and dephasing part, in dimensionless
/// form.
pub fn apply_dephasing_frame(
    n_atoms: usize,
    frame: &DMatrix<C64>,
    gamma_t: f64,
    delta_t: f64,
    delta_tilde_t: f64,
) -> DMatrix<C64> {
    let dim = frame.nrows();
    let labels: Vec<(i64, i64, i64)> = (0..dim)
        .map(|a| {
            let (k, l) = group_counts(n_atoms, a);
            let (k, l) = (k as i64, l as i64);
            (2 * (k - l), k + l, l - k)
        })
        .collect();
    DMatrix::from_fn(dim, dim, |a, b| {
        let (la, na, da) = labels[a];
        let (lb, nb, db) = labels[b];
        let dl = (la - lb) as f64;
        let phase = delta_t * (na - nb) as f64 + delta_tilde_t * (da - db) as f64;
        frame[(a, b)] * C64::from_polar((-0.25 * gamma_t * dl * dl).exp(), -phase)
    })
}

impl LindbladEngine {
    pub fn new(config: EngineConfig) -> Self {
        LindbladEngine { config }
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    fn check(&self, rho0: &AtomicDensityMatrix) -> Result<()> {
        if rho0.n_atoms > self.config.max_atoms {
            return Err(Error::TooManyAtoms {
                atoms: rho0.n_atoms,
                cap: self.config.max_atoms,
            });
        }
        let deviation = rho0.hermiticity_deviation();
        if deviation > 1e-10 {
            return Err(Error::NonHermitian { deviation });
        }
        Ok(())
    }

    /// Transformed state `ρ̃` at each of the (ascending) `times`.
    pub fn emission_frames(
        &self,
        rho0: &AtomicDensityMatrix,
        emission: f64,
        times: &[f64],
    ) -> Result<Vec<DMatrix<C64>>> {
        self.check(rho0)?;
        if times.iter().any(|t| !(*t >= 0.0)) || times.windows(2).any(|w| w[1] < w[0]) {
            return Err(domain("checkpoint times must be ascending and nonnegative"));
        }
        if emission == 0.0 || times.is_empty() {
            return Ok(vec![rho0.entries.clone(); times.len()]);
        }
        match self.config.integrator {
            Integrator::ExactChannel => Ok(times
                .iter()
                .map(|&t| {
                    let mut m = rho0.entries.clone();
                    amplitude_damping(rho0.n_atoms, emission * t, m.as_mut_slice());
                    m
                })
                .collect()),
            Integrator::Rk4 => self.rk4_frames(rho0, emission, times),
        }
    }

    fn rk4_trajectory(&self, rho0: &AtomicDensityMatrix, rate: f64, times: &[f64], h: f64) -> Vec<DMatrix<C64>> {
        let n = rho0.n_atoms;
        let mut y = rho0.entries.clone();
        let len = y.len();
        let mut term = vec![C64::new(0.0, 0.0); len];
        let mut tmp = vec![C64::new(0.0, 0.0); len];
        let mut now = 0.0;
        let mut out = Vec::with_capacity(times.len());
        for &target in times {
            let span = target - now;
            if span > 0.0 {
                let steps = (span / h - 1e-9).ceil().max(1.0) as usize;
                let dt = span / steps as f64;
                for _ in 0..steps {
                    rk4_step(n, rate, dt, y.as_mut_slice(), &mut term, &mut tmp);
                }
            }
            now = target;
            out.push(y.clone());
        }
        out
    }

    fn rk4_frames(&self, rho0: &AtomicDensityMatrix, rate: f64, times: &[f64]) -> Result<Vec<DMatrix<C64>>> {
        let t_last = *times.last().unwrap();
        if t_last == 0.0 {
            return Ok(vec![rho0.entries.clone(); times.len()]);
        }
        let dim = rho0.dim();
        let mut h = (0.02 / rate).min(t_last / 200.0);
        let mut prev = self.rk4_trajectory(rho0, rate, times, h);
        let mut difference = f64::INFINITY;
        for _ in 0..self.config.max_refinements {
            h /= 2.0;
            let next = self.rk4_trajectory(rho0, rate, times, h);
            difference = prev
                .iter()
                .zip(&next)
                .map(|(a, b)| trace_norm_bound(a.as_slice(), b.as_slice(), dim))
                .fold(0.0, f64::max);
            if difference <= self.config.tolerance {
                debug!("rk4 accepted dt = {h:.3e} (refinement difference {difference:.2e})");
                return Ok(next);
            }
            prev = next;
        }
        Err(Error::Integration {
            reason: "step refinement did not converge".into(),
            dt: h,
            difference,
        })
    }

    pub fn evolve(&self, rho0: &AtomicDensityMatrix, params: &LindbladParams) -> Result<AtomicDensityMatrix> {
        self.evolve_observed(rho0, params, &[], |_, _| {})
    }

    /// Evolves to `params.t_final`, handing the state at each checkpoint (and
    /// at the final time) to `observer`.
    pub fn evolve_observed<F>(
        &self,
        rho0: &AtomicDensityMatrix,
        params: &LindbladParams,
        checkpoints: &[f64],
        mut observer: F,
    ) -> Result<AtomicDensityMatrix>
    where
        F: FnMut(f64, &AtomicDensityMatrix),
    {
        let mut times: Vec<f64> = checkpoints.iter().copied().filter(|&t| t < params.t_final).collect();
        times.push(params.t_final);
        let frames = self.emission_frames(rho0, params.emission, &times)?;
        let mut last = None;
        for (&t, frame) in times.iter().zip(frames) {
            let state = self.physical_state(rho0.n_atoms, &frame, params, t)?;
            observer(t, &state);
            last = Some(state);
        }
        Ok(last.expect("final time is always present"))
    }

    fn physical_state(
        &self,
        n_atoms: usize,
        frame: &DMatrix<C64>,
        params: &LindbladParams,
        t: f64,
    ) -> Result<AtomicDensityMatrix> {
        let entries = apply_dephasing_frame(n_atoms, frame, params.gamma * t, params.delta * t, params.delta_tilde * t);
        let deviation = hermiticity_deviation(&entries);
        if deviation > 1e-10 {
            return Err(Error::NonHermitian { deviation });
        }
        Ok(AtomicDensityMatrix { n_atoms, entries })
    }

    /// State and `∂ρ/∂ω`. The sensitivity obeys `σ̇ = ℒσ - i[∂H/∂δ, ρ]`; since
    /// emission is independent of `δ` and commutes with the diagonal factor,
    /// the transformed sensitivity stays zero and `σ_ab = -i t (n_a - n_b) ρ_ab`.
    pub fn evolve_with_sensitivity(
        &self,
        rho0: &AtomicDensityMatrix,
        params: &LindbladParams,
    ) -> Result<SensitivityPair> {
        let rho = self.evolve(rho0, params)?;
        let drho_domega = excitation_sensitivity(&rho.entries, params.t_final);
        Ok(SensitivityPair { rho, drho_domega })
    }
}

/// `-i t (n_a - n_b) ρ_ab`, the derivative of the `exp(-iδt(n_a - n_b))` factor.
fn excitation_sensitivity(rho: &DMatrix<C64>, t: f64) -> DMatrix<C64> {
    DMatrix::from_fn(rho.nrows(), rho.ncols(), |a, b| {
        rho[(a, b)] * C64::new(0.0, -t * (popcount(a) - popcount(b)) as f64)
    })
}

/// `r(c) = Σ_a m_{a, a⊕c}`.
fn xor_diagonal(m: &DMatrix<C64>) -> Vec<f64> {
    let dim = m.nrows();
    (0..dim)
        .map(|c| (0..dim).map(|a| m[(a, a ^ c)].re).sum())
        .collect()
}

fn walsh_hadamard(values: &mut [f64]) {
    let mut h = 1;
    while h < values.len() {
        for block in values.chunks_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (x, y) in lo.iter_mut().zip(hi.iter_mut()) {
                let (u, v) = (*x, *y);
                *x = u + v;
                *y = u - v;
            }
        }
        h *= 2;
    }
}

/// Outcome counts from the XOR-diagonal sums: the second Hadamard layer is a
/// Walsh–Hadamard transform, and its depolarising part damps weight-`w`
/// components by `η_H^w`.
fn outcome_counts(n_atoms: usize, mut r: Vec<f64>, eta_h: f64, eta_m: f64) -> Result<Vec<f64>> {
    let powers: Vec<f64> = (0..=n_atoms).map(|w| eta_h.powi(w as i32)).collect();
    for (c, v) in r.iter_mut().enumerate() {
        *v *= powers[c.count_ones() as usize];
    }
    walsh_hadamard(&mut r);
    let m = n_atoms / 2;
    let size = GroupSize::new(m)?;
    let scale = 1.0 / r.len() as f64;
    let mut grid = vec![0.0; size.dim()];
    for (x, v) in r.iter().enumerate() {
        let (k, l) = group_counts(n_atoms, x);
        grid[size.index(k, l)] += v * scale;
    }
    if eta_m == 1.0 {
        Ok(grid)
    } else {
        misclassify_values(m, eta_m, &grid)
    }
}

/// Excited-count statistics after an imperfect second Hadamard layer and
/// imperfect readout.
pub fn count_distribution(rho: &AtomicDensityMatrix, eta_h: f64, eta_m: f64) -> Result<CountDistribution> {
    check_fidelity("eta_h", eta_h)?;
    check_fidelity("eta_m", eta_m)?;
    let p = outcome_counts(rho.n_atoms, xor_diagonal(&rho.entries), eta_h, eta_m)?;
    CountDistribution::new(GroupSize::from_atoms(rho.n_atoms)?, p)
}

/// Same statistics together with `dp/dω`.
pub fn count_distribution_with_derivative(
    pair: &SensitivityPair,
    eta_h: f64,
    eta_m: f64,
) -> Result<(CountDistribution, Vec<f64>)> {
    let p = count_distribution(&pair.rho, eta_h, eta_m)?;
    let dp = outcome_counts(pair.rho.n_atoms, xor_diagonal(&pair.drho_domega), eta_h, eta_m)?;
    Ok((p, dp))
}

/// Full-basis pipeline at a fixed evolution time. Entries are grouped by
/// `c = a ⊕ b` and `s = n_a - n_b`, the only data the counts depend on, so
/// each working point `δt` costs `O(2^N N)`.
#[derive(Debug, Clone)]
pub struct AtomicModel {
    n_atoms: usize,
    size: GroupSize,
    classes: Vec<C64>,
    fidelities: GateFidelities,
    state: Option<DMatrix<C64>>,
}

impl AtomicModel {
    /// `frame` is the transformed state `ρ̃` at the evolution time, already
    /// including the imperfect first Hadamard layer.
    pub fn new(
        n_atoms: usize,
        frame: &DMatrix<C64>,
        gamma_t: f64,
        delta_tilde_t: f64,
        fidelities: GateFidelities,
    ) -> Result<Self> {
        let size = GroupSize::from_atoms(n_atoms)?;
        let fidelities = GateFidelities::new(fidelities.eta_h, fidelities.eta_m)?;
        let rho = apply_dephasing_frame(n_atoms, frame, gamma_t, 0.0, delta_tilde_t);
        let width = 2 * n_atoms + 1;
        let dim = rho.nrows();
        let mut classes = vec![C64::new(0.0, 0.0); dim * width];
        for b in 0..dim {
            for a in 0..dim {
                let s = popcount(a) - popcount(b) + n_atoms as i64;
                classes[(a ^ b) * width + s as usize] += rho[(a, b)];
            }
        }
        let state = (n_atoms <= QFI_ATOM_CAP).then_some(rho);
        Ok(AtomicModel {
            n_atoms,
            size,
            classes,
            fidelities,
            state,
        })
    }

    fn xor_sums(&self, delta_t: f64) -> (Vec<f64>, Vec<f64>) {
        let n = self.n_atoms as i64;
        let width = 2 * self.n_atoms + 1;
        let phases: Vec<C64> = (-n..=n).map(|s| C64::from_polar(1.0, -delta_t * s as f64)).collect();
        let mut r = Vec::with_capacity(self.classes.len() / width);
        let mut dr = Vec::with_capacity(self.classes.len() / width);
        for chunk in self.classes.chunks(width) {
            let mut v = C64::new(0.0, 0.0);
            let mut dv = C64::new(0.0, 0.0);
            for (i, (&z, &ph)) in chunk.iter().zip(&phases).enumerate() {
                let term = z * ph;
                v += term;
                dv += term * C64::new(0.0, -((i as i64 - n) as f64));
            }
            r.push(v.re);
            dr.push(dv.re);
        }
        (r, dr)
    }
}

impl CountModel for AtomicModel {
    fn group_size(&self) -> GroupSize {
        self.size
    }

    fn engine(&self) -> Engine {
        Engine::Lindblad
    }

    fn distribution(&self, delta_t: f64) -> Result<(CountDistribution, Vec<f64>)> {
        let (r, dr) = self.xor_sums(delta_t);
        let GateFidelities { eta_h, eta_m } = self.fidelities;
        let p = outcome_counts(self.n_atoms, r, eta_h, eta_m)?;
        let dp = outcome_counts(self.n_atoms, dr, eta_h, eta_m)?;
        Ok((CountDistribution::new(self.size, p)?, dp))
    }

    fn scaled_qfi(&self, delta_t: f64) -> Result<Option<f64>> {
        let Some(rho0) = &self.state else {
            return Ok(None);
        };
        let rho = DMatrix::from_fn(rho0.nrows(), rho0.ncols(), |a, b| {
            rho0[(a, b)] * C64::from_polar(1.0, -delta_t * (popcount(a) - popcount(b)) as f64)
        });
        qfi(&rho, &excitation_sensitivity(&rho, 1.0)).map(Some)
    }
}

/// `f_max` at each evolution time along one emission trajectory, with the
/// imperfect first Hadamard folded into the initial state.
pub fn f_max_along_trajectory(
    engine: &LindbladEngine,
    n_atoms: usize,
    gamma: f64,
    emission: f64,
    fidelities: GateFidelities,
    times: &[f64],
) -> Result<Vec<f64>> {
    let rho0 = AtomicDensityMatrix::initial(n_atoms, fidelities.eta_h)?;
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&i, &j| times[i].total_cmp(&times[j]));
    let sorted: Vec<f64> = order.iter().map(|&i| times[i]).collect();
    let frames = engine.emission_frames(&rho0, emission, &sorted)?;
    let mut out = vec![0.0; times.len()];
    for ((&i, &t), frame) in order.iter().zip(&sorted).zip(&frames) {
        let model = AtomicModel::new(n_atoms, frame, gamma * t, 0.0, fidelities)?;
        let horizon = t.max(f64::MIN_POSITIVE);
        out[i] = match maximize_f(&model, horizon, horizon) {
            Ok(r) => r.f_max,
            // every bin's information is below resolution, e.g. after many decay times
            Err(Error::FlatInformation) => {
                debug!("f_max below resolution at t = {t}");
                0.0
            }
            Err(e) => return Err(e),
        };
    }
    Ok(out)
}

/// Optimal evolution time with emission, in units where `γ = 1`; the
/// improvement factor does not depend on the total time.
pub fn emission_time_optimum(
    engine: &LindbladEngine,
    n_atoms: usize,
    gamma_over_emission: f64,
    fidelities: GateFidelities,
    search: &TimeSearch,
) -> Result<TimeOptimum> {
    if !(gamma_over_emission > 0.0) || !gamma_over_emission.is_finite() {
        return Err(domain("gamma / Gamma must be positive and finite"));
    }
    let emission = 1.0 / gamma_over_emission;
    let params = ExperimentParams {
        emission,
        eta_h: fidelities.eta_h,
        eta_m: fidelities.eta_m,
        ..ExperimentParams::ideal(n_atoms, 1.0, 1.0)
    };
    optimal_time_search(
        |ts| f_max_along_trajectory(engine, n_atoms, 1.0, emission, fidelities, ts),
        &params,
        search,
    )
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TrajectoryRecord {
    pub t: f64,
    pub trace_re: f64,
    pub purity: f64,
}

impl TrajectoryRecord {
    pub fn of(t: f64, rho: &AtomicDensityMatrix) -> Self {
        TrajectoryRecord {
            t,
            trace_re: rho.trace().re,
            purity: rho.purity(),
        }
    }
}

/// Debug dump of checkpoint diagnostics as CSV with columns `t, trace_re, purity`.
pub fn write_trajectory_csv<W: Write>(out: W, records: &[TrajectoryRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Io(e.to_string()))
}
