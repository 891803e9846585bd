//! Gate and readout imperfections, and the classical reduction they admit.
//!
//! A failed Hadamard leaves its atom maximally mixed. That atom then commutes
//! with every generator, drops out of the collective dynamics, and reads out
//! as a fair coin. Each atom is therefore "good" with probability `η_H²`
//! (both pulses succeed), and the count statistics are a binomial mixture of
//! smaller ideal instances with coin-flip atoms added, followed by the
//! per-atom readout flips.

use nalgebra::{DMatrix, Matrix2};
use serde::Serialize;

use crate::dephasing::{DephasingParams, DephasingRegime, SectorCounts};
use crate::error::{Error, Result};
use crate::fock::{
    apply_group_channels, binomial_pmf, check_fidelity, readout_flip_matrix,
    CountDistribution, GroupSize, Shape, C64,
};
use crate::lindblad::LindbladParams;
use crate::metrology::{CountModel, Engine};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GateFidelities {
    pub eta_h: f64,
    pub eta_m: f64,
}

impl GateFidelities {
    pub const PERFECT: GateFidelities = GateFidelities {
        eta_h: 1.0,
        eta_m: 1.0,
    };

    pub fn new(eta_h: f64, eta_m: f64) -> Result<Self> {
        check_fidelity("eta_h", eta_h)?;
        check_fidelity("eta_m", eta_m)?;
        Ok(GateFidelities { eta_h, eta_m })
    }

    pub fn is_perfect(&self) -> bool {
        self.eta_h == 1.0 && self.eta_m == 1.0
    }
}

fn hadamard_gate() -> Matrix2<C64> {
    let r = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    Matrix2::new(r, r, r, -r)
}

/// `η H ρ H + (1 - η) tr(ρ) 𝟙/2`.
pub fn imperfect_hadamard(rho: &Matrix2<C64>, eta_h: f64) -> Result<Matrix2<C64>> {
    check_fidelity("eta_h", eta_h)?;
    let h = hadamard_gate();
    let mixed = Matrix2::identity() * (rho.trace() * 0.5);
    Ok(h * rho * h * C64::new(eta_h, 0.0) + mixed * C64::new(1.0 - eta_h, 0.0))
}

/// Readout operators `(Π_0, Π_1)`, diagonal with entries `(1 ± η)/2`.
pub fn measurement_povm(eta_m: f64) -> Result<(Matrix2<f64>, Matrix2<f64>)> {
    check_fidelity("eta_m", eta_m)?;
    let hi = (1.0 + eta_m) / 2.0;
    let lo = (1.0 - eta_m) / 2.0;
    Ok((
        Matrix2::new(hi, 0.0, 0.0, lo),
        Matrix2::new(lo, 0.0, 0.0, hi),
    ))
}

/// Convolution of a sub-instance grid with coin-flip atoms, for every good-atom split.
#[derive(Clone)]
struct SubInstance {
    weight: f64,
    counts: SectorCounts,
    coins_a: DMatrix<f64>,
    coins_b: DMatrix<f64>,
}

/// Count statistics with imperfect gates and readout under collective dephasing.
#[derive(Clone)]
pub struct ReductionModel {
    size: GroupSize,
    fidelities: GateFidelities,
    flip: DMatrix<f64>,
    subs: Vec<SubInstance>,
}

/// `(M+1) × (g+1)` matrix adding `M - g` fair coins to a count of `g` atoms.
fn coin_embedding(m: usize, g: usize) -> DMatrix<f64> {
    let coins = binomial_pmf(m - g, 0.5);
    let mut mat = DMatrix::zeros(m + 1, g + 1);
    for k in 0..=g {
        for (c, &w) in coins.iter().enumerate() {
            mat[(k + c, k)] = w;
        }
    }
    mat
}

impl ReductionModel {
    pub fn new(size: GroupSize, regime: DephasingRegime, fidelities: GateFidelities) -> Result<Self> {
        let fidelities = GateFidelities::new(fidelities.eta_h, fidelities.eta_m)?;
        let m = size.m();
        let good = binomial_pmf(m, fidelities.eta_h * fidelities.eta_h);
        let mut subs = Vec::new();
        for ga in 0..=m {
            for gb in 0..=m {
                let weight = good[ga] * good[gb];
                if weight == 0.0 {
                    continue;
                }
                subs.push(SubInstance {
                    weight,
                    counts: SectorCounts::new(Shape::new(ga, gb), regime),
                    coins_a: coin_embedding(m, ga),
                    coins_b: coin_embedding(m, gb),
                });
            }
        }
        Ok(ReductionModel {
            size,
            fidelities,
            flip: readout_flip_matrix(m, fidelities.eta_m)?,
            subs,
        })
    }

    pub fn fidelities(&self) -> GateFidelities {
        self.fidelities
    }

    fn statistics(&self, delta_t: f64) -> (Vec<f64>, Vec<f64>) {
        let dim = self.size.dim();
        let mut p = vec![0.0; dim];
        let mut dp = vec![0.0; dim];
        for sub in &self.subs {
            let (sp, sdp) = sub.counts.statistics(delta_t);
            let ep = apply_group_channels(&sub.coins_a, &sub.coins_b, &sp);
            let edp = apply_group_channels(&sub.coins_a, &sub.coins_b, &sdp);
            for i in 0..dim {
                p[i] += sub.weight * ep[i];
                dp[i] += sub.weight * edp[i];
            }
        }
        (
            apply_group_channels(&self.flip, &self.flip, &p),
            apply_group_channels(&self.flip, &self.flip, &dp),
        )
    }
}

impl CountModel for ReductionModel {
    fn group_size(&self) -> GroupSize {
        self.size
    }

    fn engine(&self) -> Engine {
        Engine::Reduction
    }

    fn distribution(&self, delta_t: f64) -> Result<(CountDistribution, Vec<f64>)> {
        let (p, dp) = self.statistics(delta_t);
        Ok((CountDistribution::new(self.size, p)?, dp))
    }
}

/// Outcome distribution through the classical reduction. Emission is not
/// covered: a decaying atom does not stay maximally mixed.
pub fn classical_reduction_distribution(
    size: GroupSize,
    params: &LindbladParams,
    fidelities: GateFidelities,
) -> Result<CountDistribution> {
    if params.emission != 0.0 {
        return Err(Error::Unsupported(
            "classical reduction requires Gamma = 0".into(),
        ));
    }
    let dephasing = DephasingParams::new(params.gamma, params.t_final, params.delta, params.delta_tilde)?;
    let model = ReductionModel::new(size, dephasing.regime(), fidelities)?;
    Ok(model.distribution(params.delta * params.t_final)?.0)
}

/// Ideal-instance precision divided by this one, `1 / (η_M η_H²)`, for the
/// product-state benchmark.
pub fn benchmark_rescaling(fidelities: GateFidelities) -> f64 {
    1.0 / (fidelities.eta_m * fidelities.eta_h * fidelities.eta_h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dephasing::AnalyticModel;
    use crate::fock::binom_f64;
    use approx::assert_abs_diff_eq;
    use nalgebra::Matrix4;

    fn good_probability(m: usize, g: usize, eta_h: f64) -> f64 {
        let q = eta_h * eta_h;
        binom_f64(m, g) * q.powi(g as i32) * (1.0 - q).powi((m - g) as i32)
    }

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn hadamard_channel_examples() {
        let zero = Matrix2::new(c(1.0), c(0.0), c(0.0), c(0.0));
        let out = imperfect_hadamard(&zero, 1.0).unwrap();
        for z in out.iter() {
            assert_abs_diff_eq!(z.re, 0.5, epsilon = 1e-15);
        }
        let rho = Matrix2::new(c(0.3), C64::new(0.1, 0.2), C64::new(0.1, -0.2), c(0.7));
        let out = imperfect_hadamard(&rho, 0.0).unwrap();
        assert_abs_diff_eq!((out - Matrix2::identity() * c(0.5)).norm(), 0.0, epsilon = 1e-15);
        let out = imperfect_hadamard(&zero, 0.99).unwrap();
        assert_abs_diff_eq!(out[(0, 0)].re, 0.99 * 0.5 + 0.005, epsilon = 1e-15);
        assert_abs_diff_eq!(out[(0, 1)].re, 0.99 * 0.5, epsilon = 1e-15);
        assert!(imperfect_hadamard(&zero, 1.5).is_err());
    }

    #[test]
    fn hadamard_channel_is_cptp() {
        for &eta in &[0.0, 0.3, 0.9, 0.99, 1.0] {
            // Choi matrix Σ |i⟩⟨j| ⊗ E(|i⟩⟨j|)
            let mut choi = Matrix4::<C64>::zeros();
            for i in 0..2 {
                for j in 0..2 {
                    let mut e = Matrix2::zeros();
                    e[(i, j)] = c(1.0);
                    let out = imperfect_hadamard(&e, eta).unwrap();
                    if i == j {
                        assert_abs_diff_eq!(out.trace().re, 1.0, epsilon = 1e-15);
                    }
                    for r in 0..2 {
                        for s in 0..2 {
                            choi[(2 * i + r, 2 * j + s)] = out[(r, s)];
                        }
                    }
                }
            }
            let eig = choi.symmetric_eigenvalues();
            assert!(eig.min() > -1e-12, "eta {eta}: {eig}");
        }
    }

    #[test]
    fn povm_examples() {
        let (p0, p1) = measurement_povm(1.0).unwrap();
        assert_eq!(p0, Matrix2::new(1.0, 0.0, 0.0, 0.0));
        assert_eq!(p1, Matrix2::new(0.0, 0.0, 0.0, 1.0));
        let (p0, p1) = measurement_povm(0.0).unwrap();
        assert_eq!(p0, Matrix2::identity() * 0.5);
        assert_eq!(p1, p0);
        for &eta in &[0.0, 0.37, 0.99, 1.0] {
            let (p0, p1) = measurement_povm(eta).unwrap();
            assert_eq!(p0 + p1, Matrix2::identity());
        }
        assert_abs_diff_eq!(measurement_povm(0.99).unwrap().0[(0, 0)], 0.995, epsilon = 1e-15);
    }

    #[test]
    fn perfect_gates_match_analytic() {
        let size = GroupSize::new(3).unwrap();
        let regime = DephasingRegime::Finite {
            gamma_t: 0.7,
            delta_tilde_t: 0.4,
        };
        let a = AnalyticModel::new(size, regime);
        let r = ReductionModel::new(size, regime, GateFidelities::PERFECT).unwrap();
        for &x in &[0.0, 0.5, 2.2] {
            let (pa, da) = a.distribution(x).unwrap();
            let (pr, dr) = r.distribution(x).unwrap();
            for i in 0..size.dim() {
                assert_abs_diff_eq!(pa.probabilities()[i], pr.probabilities()[i], epsilon = 1e-14);
                assert_abs_diff_eq!(da[i], dr[i], epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn dead_hadamards_give_coins() {
        let size = GroupSize::new(3).unwrap();
        let params = LindbladParams::new(1.0, 0.0, 0.3, 0.0, 2.0).unwrap();
        let p = classical_reduction_distribution(size, &params, GateFidelities::new(0.0, 0.8).unwrap()).unwrap();
        for k in 0..=3 {
            for l in 0..=3 {
                assert_abs_diff_eq!(p.get(k, l), binom_f64(3, k) * binom_f64(3, l) / 64.0, epsilon = 1e-15);
            }
        }
        let emitting = LindbladParams::new(1.0, 0.1, 0.3, 0.0, 2.0).unwrap();
        assert!(matches!(
            classical_reduction_distribution(size, &emitting, GateFidelities::PERFECT),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn good_atom_weights_sum_to_one() {
        let total: f64 = (0..=5).map(|g| good_probability(5, g, 0.93)).sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(
            benchmark_rescaling(GateFidelities::new(0.99, 0.99).unwrap()),
            1.0 / 0.99f64.powi(3),
            epsilon = 1e-15
        );
    }
}
