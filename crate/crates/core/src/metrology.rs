//! Estimation theory on top of the count statistics: classical and quantum
//! Fisher information, Cramér–Rao bounds, benchmark protocols, improvement
//! factors and the optimisations over the working point `δt` and the free
//! evolution time `t`.
//!
//! Every pipeline reports its Fisher information in the dimensionless form
//! `f(δt) = F / t²`: the outcome distribution depends on `ω` only through the
//! phase `x = δt`, hence `dp/dω = t · dp/dx`.

use std::f64::consts::{E, PI};
use std::fmt;

use log::debug;
use nalgebra::DMatrix;
use serde::Serialize;

use crate::dephasing::hermiticity_deviation;
use crate::error::{domain, Error, Result};
use crate::fock::{check_fidelity, CountDistribution, GroupSize, C64};

/// Which numerical route produced a result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Analytic,
    Reduction,
    Lindblad,
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Engine::Analytic => "analytic",
            Engine::Reduction => "reduction",
            Engine::Lindblad => "lindblad",
        })
    }
}

/// A measurement pipeline: maps the working point `δt` to the outcome
/// distribution and its derivative `dp/d(δt)`.
pub trait CountModel {
    fn group_size(&self) -> GroupSize;

    fn engine(&self) -> Engine;

    fn distribution(&self, delta_t: f64) -> Result<(CountDistribution, Vec<f64>)>;

    /// Quantum Fisher information of the pre-measurement state divided by
    /// `t²`, when the pipeline can afford to build that state.
    fn scaled_qfi(&self, _delta_t: f64) -> Result<Option<f64>> {
        Ok(None)
    }
}

/// `Σ dp² / p` over all bins.
///
/// Bins with `p < 1e-14` contribute nothing when `|dp| < 1e-12` and are
/// rejected otherwise.
pub fn fisher_information(p: &CountDistribution, dp: &[f64]) -> Result<f64> {
    let probs = p.probabilities();
    if dp.len() != probs.len() {
        return Err(domain("derivative length does not match distribution"));
    }
    let sum: f64 = dp.iter().sum();
    let scale: f64 = dp.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
    if sum.abs() > 1e-9 * scale {
        return Err(Error::InvalidDerivative { sum });
    }
    let mut total = 0.0;
    for (index, (&pi, &di)) in probs.iter().zip(dp).enumerate() {
        if pi < 1e-14 {
            if di.abs() >= 1e-12 {
                return Err(Error::DegenerateBin {
                    index,
                    derivative: di,
                });
            }
            continue;
        }
        total += di * di / pi;
    }
    Ok(total)
}

/// Quantum Fisher information from the eigendecomposition of `rho`:
/// `Σ_{p_j + p_k > 1e-12} 2 |⟨φ_j|dρ|φ_k⟩|² / (p_j + p_k)`.
pub fn qfi(rho: &DMatrix<C64>, drho: &DMatrix<C64>) -> Result<f64> {
    if !rho.is_square() || rho.shape() != drho.shape() {
        return Err(domain("qfi needs square matrices of equal shape"));
    }
    let scale = |m: &DMatrix<C64>| m.iter().map(|z| z.norm()).fold(1.0f64, f64::max);
    for m in [rho, drho] {
        let deviation = hermiticity_deviation(m);
        if deviation > 1e-10 * scale(m) {
            return Err(Error::NonHermitian { deviation });
        }
    }
    let eig = rho.clone().symmetric_eigen();
    let v = &eig.eigenvectors;
    let d = v.adjoint() * drho * v;
    let p = &eig.eigenvalues;
    let mut total = 0.0;
    for k in 0..p.len() {
        for j in 0..p.len() {
            let s = p[j] + p[k];
            if s > 1e-12 {
                total += 2.0 * d[(j, k)].norm_sqr() / s;
            }
        }
    }
    Ok(total)
}

/// Cramér–Rao and quantum Cramér–Rao bounds `1/sqrt(T F / t)` for total time `T`.
pub fn cr_bounds(fisher: f64, qfi: f64, t: f64, total_time: f64) -> Result<(f64, f64)> {
    Ok((cr_bound(fisher, t, total_time)?, cr_bound(qfi, t, total_time)?))
}

pub fn cr_bound(information: f64, t: f64, total_time: f64) -> Result<f64> {
    if !(information > 0.0) || !(t > 0.0) || !(total_time >= t) {
        return Err(domain(format!(
            "bounds need F > 0 and T >= t > 0 (F = {information}, t = {t}, T = {total_time})"
        )));
    }
    Ok(1.0 / (total_time * information / t).sqrt())
}

#[derive(Debug, Clone, Serialize)]
pub struct FisherResult {
    pub f_max: f64,
    pub delta_t_opt: f64,
    pub fisher: f64,
    pub qfi: Option<f64>,
    pub dw_cr: f64,
    pub dw_qcr: Option<f64>,
    pub grid_local_maxima: usize,
    pub engine: Engine,
}

impl FisherResult {
    pub fn cr_ratio(&self) -> Option<f64> {
        self.dw_qcr.map(|q| self.dw_cr / q)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ScanSettings {
    pub grid_points: usize,
    pub tolerance: f64,
}

impl Default for ScanSettings {
    fn default() -> Self {
        ScanSettings {
            grid_points: 256,
            tolerance: 1e-6,
        }
    }
}

/// `f(δt) = F / t²`; `None` where a zero-probability bin has a nonzero slope.
pub fn scaled_fisher(model: &dyn CountModel, delta_t: f64) -> Result<Option<f64>> {
    let (p, dp) = model.distribution(delta_t)?;
    match fisher_information(&p, &dp) {
        Ok(f) => Ok(Some(f)),
        Err(Error::DegenerateBin { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

pub fn maximize_f(model: &dyn CountModel, t: f64, total_time: f64) -> Result<FisherResult> {
    maximize_f_with(model, t, total_time, &ScanSettings::default())
}

/// Uniform scan of `δt` over `[0, 2π)` followed by golden-section refinement
/// of the best bracket. Ties go to the smaller `δt`.
pub fn maximize_f_with(
    model: &dyn CountModel,
    t: f64,
    total_time: f64,
    settings: &ScanSettings,
) -> Result<FisherResult> {
    let n = settings.grid_points.max(3);
    let step = 2.0 * PI / n as f64;
    let values = (0..n)
        .map(|i| Ok(scaled_fisher(model, i as f64 * step)?.unwrap_or(f64::NEG_INFINITY)))
        .collect::<Result<Vec<f64>>>()?;

    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    if !(values[best] > 0.0) {
        return Err(Error::FlatInformation);
    }
    let local_maxima = (0..n)
        .filter(|&i| {
            let v = values[i];
            v > 0.0 && v >= values[(i + n - 1) % n] && v > values[(i + 1) % n]
        })
        .count();
    debug!(
        "{} grid-local maxima of f(δt) for {} (best grid value {:.6} at {:.4})",
        local_maxima,
        model.engine(),
        values[best],
        best as f64 * step
    );

    let centre = best as f64 * step;
    let objective = |x: f64| -> Result<f64> {
        Ok(scaled_fisher(model, x)?.unwrap_or(f64::NEG_INFINITY))
    };
    let (x_gs, f_gs) = golden_section_max(objective, centre - step, centre + step, settings.tolerance)?;
    let (x_opt, f_max) = if f_gs > values[best] {
        (x_gs.rem_euclid(2.0 * PI), f_gs)
    } else {
        (centre, values[best])
    };

    let fisher = t * t * f_max;
    let qfi = model.scaled_qfi(x_opt)?.map(|q| q * t * t);
    let dw_cr = cr_bound(fisher, t, total_time)?;
    let dw_qcr = match qfi {
        Some(q) => Some(cr_bound(q, t, total_time)?),
        None => None,
    };
    Ok(FisherResult {
        f_max,
        delta_t_opt: x_opt,
        fisher,
        qfi,
        dw_cr,
        dw_qcr,
        grid_local_maxima: local_maxima,
        engine: model.engine(),
    })
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section search for a maximum inside `[lo, hi]`, stopping once the
/// bracket is narrower than `tol`.
pub fn golden_section_max<F>(mut f: F, lo: f64, hi: f64, tol: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while (b - a).abs() > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if fc >= fd { (c, fc) } else { (d, fd) })
}

/// Physical parameters of one protocol run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExperimentParams {
    pub n_atoms: usize,
    /// Collective dephasing rate γ.
    pub gamma: f64,
    /// Spontaneous emission rate Γ per atom.
    pub emission: f64,
    /// Free evolution time.
    pub t: f64,
    /// Total experiment time `T = ν t`.
    pub total_time: f64,
    pub delta: f64,
    pub delta_tilde: f64,
    pub eta_h: f64,
    pub eta_m: f64,
}

impl ExperimentParams {
    /// Ideal gates, no emission, zero detunings and `T = t`.
    pub fn ideal(n_atoms: usize, gamma: f64, t: f64) -> Self {
        ExperimentParams {
            n_atoms,
            gamma,
            emission: 0.0,
            t,
            total_time: t,
            delta: 0.0,
            delta_tilde: 0.0,
            eta_h: 1.0,
            eta_m: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        GroupSize::from_atoms(self.n_atoms)?;
        if !(self.gamma >= 0.0) || !(self.emission >= 0.0) {
            return Err(domain("rates must be nonnegative"));
        }
        if !(self.t > 0.0) || !(self.total_time >= self.t) {
            return Err(domain("need T >= t > 0"));
        }
        check_fidelity("eta_h", self.eta_h)?;
        check_fidelity("eta_m", self.eta_m)
    }

    fn fidelity_product(&self) -> Result<f64> {
        let prod = self.eta_m * self.eta_h * self.eta_h;
        if prod > 0.0 {
            Ok(prod)
        } else {
            Err(domain("benchmark undefined for eta_m * eta_h^2 = 0"))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BenchmarkSet {
    /// Product-state Ramsey limit under uncorrelated dephasing, `sqrt(2γe/NT)`.
    pub bench_uncorrelated: f64,
    /// Product-state limit under correlated dephasing with equal states.
    pub bench_correlated: f64,
    /// Uncorrelated benchmark with emission and gate/readout errors.
    pub bench_noisy: f64,
    pub improvement_i: f64,
    pub improvement_i_tilde: f64,
    pub improvement_i_full: f64,
}

pub fn bench_uncorrelated(n_atoms: usize, gamma: f64, total_time: f64) -> f64 {
    (2.0 * gamma * E / (n_atoms as f64 * total_time)).sqrt()
}

pub fn bench_correlated(n_atoms: usize, gamma: f64, total_time: f64) -> f64 {
    (1.41 + 0.87 / (n_atoms as f64).powf(0.90)) * (gamma / total_time).sqrt()
}

/// Includes `Γ`; reduces to the gate-error form when `Γ = 0`.
pub fn bench_noisy(params: &ExperimentParams) -> Result<f64> {
    let base = ((2.0 * params.gamma + params.emission) * E
        / (params.n_atoms as f64 * params.total_time))
        .sqrt();
    Ok(base / params.fidelity_product()?)
}

pub fn benchmarks(params: &ExperimentParams, dw_cr: f64) -> Result<BenchmarkSet> {
    params.validate()?;
    if !(dw_cr > 0.0) {
        return Err(domain("dw_cr must be positive"));
    }
    let bu = bench_uncorrelated(params.n_atoms, params.gamma, params.total_time);
    let bc = bench_correlated(params.n_atoms, params.gamma, params.total_time);
    let bn = bench_noisy(params)?;
    Ok(BenchmarkSet {
        bench_uncorrelated: bu,
        bench_correlated: bc,
        bench_noisy: bn,
        improvement_i: bu / dw_cr,
        improvement_i_tilde: bc / dw_cr,
        improvement_i_full: bn / dw_cr,
    })
}

/// `sqrt(γ/Γ + 1/2) sqrt(2e/N) sqrt(Γ t f_max) / (η_M η_H²)`, written as
/// `sqrt((γ + Γ/2) t f_max)` so that `Γ = 0` is the continuous limit.
pub fn improvement_full(params: &ExperimentParams, f_max: f64) -> Result<f64> {
    let prod = params.fidelity_product()?;
    Ok(((params.gamma + params.emission / 2.0) * params.t * f_max).sqrt()
        * (2.0 * E / params.n_atoms as f64).sqrt()
        / prod)
}

#[derive(Debug, Clone, Copy)]
pub struct TimeSearch {
    pub points: usize,
    pub gamma_t_min: f64,
    pub gamma_t_max: f64,
}

impl Default for TimeSearch {
    fn default() -> Self {
        TimeSearch {
            points: 40,
            gamma_t_min: 1.0,
            gamma_t_max: 400.0,
        }
    }
}

impl TimeSearch {
    /// Logarithmic grid of evolution times for dephasing rate `gamma`.
    pub fn times(&self, gamma: f64) -> Vec<f64> {
        let n = self.points.max(2);
        let ratio = (self.gamma_t_max / self.gamma_t_min).ln();
        (0..n)
            .map(|i| self.gamma_t_min * (ratio * i as f64 / (n - 1) as f64).exp() / gamma)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TimePoint {
    pub t: f64,
    pub f_max: f64,
    pub improvement: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TimeOptimum {
    pub t_opt: f64,
    pub gamma_t_opt: f64,
    pub f_max: f64,
    pub improvement: f64,
    /// The best grid point was the first or last one.
    pub at_boundary: bool,
    pub curve: Vec<TimePoint>,
}

/// Maximises `Γ t f_max(t)` over a logarithmic time grid with a parabolic
/// refinement (in `ln t`) of the best triple.
///
/// `f_max_at` receives a batch of times and returns `f_max` for each, so
/// trajectory-based pipelines can serve the whole grid from one integration.
pub fn optimal_time_search<F>(
    mut f_max_at: F,
    params: &ExperimentParams,
    search: &TimeSearch,
) -> Result<TimeOptimum>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    if !(params.emission > 0.0) || !(params.gamma > 0.0) {
        return Err(domain("optimal time search needs gamma > 0 and Gamma > 0"));
    }
    let times = search.times(params.gamma);
    let fmax = f_max_at(&times)?;
    if fmax.len() != times.len() {
        return Err(domain("pipeline returned the wrong number of points"));
    }
    let at = |t: f64, f: f64| -> Result<TimePoint> {
        let p = ExperimentParams { t, total_time: params.total_time.max(t), ..*params };
        Ok(TimePoint {
            t,
            f_max: f,
            improvement: improvement_full(&p, f)?,
        })
    };
    let curve = times
        .iter()
        .zip(&fmax)
        .map(|(&t, &f)| at(t, f))
        .collect::<Result<Vec<_>>>()?;
    let objective: Vec<f64> = curve.iter().map(|p| params.emission * p.t * p.f_max).collect();
    let mut best = 0;
    for i in 1..objective.len() {
        if objective[i] > objective[best] {
            best = i;
        }
    }
    let at_boundary = best == 0 || best + 1 == objective.len();
    let mut opt = curve[best];
    if !at_boundary {
        let (y0, y1, y2) = (objective[best - 1], objective[best], objective[best + 1]);
        let u = |i: usize| times[i].ln();
        let h = u(best) - u(best - 1);
        let denom = y0 - 2.0 * y1 + y2;
        if denom < 0.0 {
            let shift = (0.5 * h * (y0 - y2) / denom).clamp(-h, h);
            let t_star = (u(best) + shift).exp();
            let f_star = f_max_at(&[t_star])?[0];
            if params.emission * t_star * f_star > y1 {
                opt = at(t_star, f_star)?;
            }
        }
    }
    Ok(TimeOptimum {
        t_opt: opt.t,
        gamma_t_opt: params.gamma * opt.t,
        f_max: opt.f_max,
        improvement: opt.improvement,
        at_boundary,
        curve,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitResult {
    pub a0: f64,
    pub a1: f64,
    /// Root-mean-square residual.
    pub residual: f64,
}

/// Ordinary least squares for `y = a0 x + a1`.
pub fn linear_fit(points: &[(f64, f64)]) -> Result<FitResult> {
    if points.len() < 3 {
        return Err(domain("linear fit needs at least 3 points"));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx <= f64::EPSILON * n * mx.abs().max(1.0) {
        return Err(Error::DegenerateFit);
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let a0 = sxy / sxx;
    let a1 = my - a0 * mx;
    let residual = (points
        .iter()
        .map(|p| (p.1 - a0 * p.0 - a1).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(FitResult { a0, a1, residual })
}
