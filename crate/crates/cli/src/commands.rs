//! Command implementations. All quantities use units where the evolution
//! time is `t = 1`, so `γ = γt`, `Γ = Γt`, `T = ν` and bounds are in `1/t`.

use log::info;
use rayon::prelude::*;
use ramsey_core::{
    benchmarks, cr_bound, emission_time_optimum, linear_fit, maximize_f, AnalyticModel,
    AtomicDensityMatrix, AtomicModel, CountModel, DephasingRegime, Error, ExperimentParams,
    FisherResult, GateFidelities, GroupSize, LindbladEngine, ReductionModel, Result, TimeSearch,
};

use crate::config::{Command, RunConfig};
use crate::output::Row;

/// One working point of the protocol.
#[derive(Debug, Clone, Copy)]
struct Point {
    n: usize,
    gamma_t: Option<f64>,
    gamma_over_emission: Option<f64>,
    fid: GateFidelities,
    nu: f64,
}

impl Point {
    fn emission_t(&self) -> Option<f64> {
        Some(self.gamma_t? / self.gamma_over_emission?)
    }

    fn base_row(&self, command: Command) -> Row {
        Row {
            command: command.name(),
            n: Some(self.n),
            gamma_t: Some(self.gamma_t.unwrap_or(f64::INFINITY)),
            emission_t: Some(self.emission_t().unwrap_or(0.0)),
            eta_h: Some(self.fid.eta_h),
            eta_m: Some(self.fid.eta_m),
            t_over_t: Some(self.nu),
            ..Row::default()
        }
    }
}

/// Analytic for ideal dephasing-only runs, the classical reduction when
/// gates are imperfect, and the full Lindblad pipeline with emission.
fn model(cfg: &RunConfig, p: &Point) -> Result<Box<dyn CountModel>> {
    let size = GroupSize::from_atoms(p.n)?;
    match (p.gamma_t, p.emission_t()) {
        (Some(gamma_t), Some(emission_t)) => {
            let engine = LindbladEngine::new(cfg.integrator.engine_config(p.n));
            let rho0 = AtomicDensityMatrix::initial(p.n, p.fid.eta_h)?;
            let frame = engine.emission_frames(&rho0, emission_t, &[1.0])?.remove(0);
            Ok(Box::new(AtomicModel::new(p.n, &frame, gamma_t, 0.0, p.fid)?))
        }
        (gamma_t, _) => {
            let regime = match gamma_t {
                Some(gamma_t) => DephasingRegime::Finite { gamma_t, delta_tilde_t: 0.0 },
                None => DephasingRegime::Stationary,
            };
            if p.fid.is_perfect() {
                Ok(Box::new(AnalyticModel::new(size, regime)))
            } else {
                Ok(Box::new(ReductionModel::new(size, regime, p.fid)?))
            }
        }
    }
}

fn fisher_row(cfg: &RunConfig, p: &Point, r: &FisherResult) -> Row {
    Row {
        delta_t_opt: Some(r.delta_t_opt),
        f_max: Some(r.f_max),
        fisher: Some(r.fisher),
        dw_cr: Some(r.dw_cr),
        engine: Some(r.engine.to_string()),
        ..p.base_row(cfg.command)
    }
}

fn full_row(cfg: &RunConfig, p: &Point) -> Result<Row> {
    let r = maximize_f(model(cfg, p)?.as_ref(), 1.0, cfg.nu)?;
    let mut row = Row {
        qfi: r.qfi,
        dw_qcr: r.dw_qcr,
        ..fisher_row(cfg, p, &r)
    };
    // benchmarks need a finite dephasing rate
    if let Some(gamma_t) = p.gamma_t {
        let params = ExperimentParams {
            emission: p.emission_t().unwrap_or(0.0),
            total_time: cfg.nu,
            eta_h: p.fid.eta_h,
            eta_m: p.fid.eta_m,
            ..ExperimentParams::ideal(p.n, gamma_t, 1.0)
        };
        let b = benchmarks(&params, r.dw_cr)?;
        row.bench_uncorrelated = Some(b.bench_uncorrelated);
        row.bench_correlated = Some(b.bench_correlated);
        row.bench_noisy = Some(b.bench_noisy);
        row.improvement_i = Some(b.improvement_i);
        row.improvement_i_tilde = Some(b.improvement_i_tilde);
        row.improvement_i_full = Some(b.improvement_i_full);
    }
    Ok(row)
}

fn qfi_row(cfg: &RunConfig, p: &Point) -> Result<Row> {
    let m = model(cfg, p)?;
    let q = m
        .scaled_qfi(0.0)?
        .ok_or_else(|| Error::Unsupported(format!("no quantum Fisher information for the {} engine at N = {}", m.engine(), p.n)))?;
    Ok(Row {
        qfi: Some(q),
        dw_qcr: Some(cr_bound(q, 1.0, cfg.nu)?),
        engine: Some(m.engine().to_string()),
        ..p.base_row(cfg.command)
    })
}

fn fig5_rows(cfg: &RunConfig, p: &Point) -> Result<Vec<Row>> {
    let ratio = p.gamma_over_emission.expect("fig5 config always has an emission ratio");
    let engine = LindbladEngine::new(cfg.integrator.engine_config(p.n));
    let opt = emission_time_optimum(&engine, p.n, ratio, p.fid, &TimeSearch::default())?;
    let row = |t: f64, f_max: f64, improvement: f64, note: &str| Row {
        gamma_t: Some(t),
        emission_t: Some(t / ratio),
        f_max: Some(f_max),
        improvement_i_full: Some(improvement),
        engine: Some("lindblad".into()),
        note: Some(note.into()),
        ..p.base_row(cfg.command)
    };
    let mut rows: Vec<Row> = opt.curve.iter().map(|c| row(c.t, c.f_max, c.improvement, "curve")).collect();
    let note = if opt.at_boundary { "optimum,boundary" } else { "optimum" };
    rows.push(row(opt.t_opt, opt.f_max, opt.improvement, note));
    Ok(rows)
}

fn rows_for(cfg: &RunConfig, n: usize) -> Result<Vec<Row>> {
    let fid = GateFidelities::new(cfg.eta_h, cfg.eta_m)?;
    let point = Point {
        n,
        gamma_t: cfg.gamma_t,
        gamma_over_emission: cfg.gamma_over_emission,
        fid,
        nu: cfg.nu,
    };
    match cfg.command {
        Command::Fisher => {
            let r = maximize_f(model(cfg, &point)?.as_ref(), 1.0, cfg.nu)?;
            Ok(vec![Row { qfi: r.qfi, dw_qcr: r.dw_qcr, ..fisher_row(cfg, &point, &r) }])
        }
        Command::Fit => {
            let r = maximize_f(model(cfg, &point)?.as_ref(), 1.0, cfg.nu)?;
            Ok(vec![fisher_row(cfg, &point, &r)])
        }
        Command::Qfi => Ok(vec![qfi_row(cfg, &point)?]),
        Command::Benchmark | Command::Sweep | Command::Fig2 => Ok(vec![full_row(cfg, &point)?]),
        Command::Fig3 => {
            let ideal = Point { fid: GateFidelities::PERFECT, ..point };
            Ok(vec![full_row(cfg, &ideal)?, full_row(cfg, &point)?])
        }
        Command::Fig4 => {
            let ratios = match cfg.gamma_over_emission {
                Some(r) => vec![None, Some(r)],
                None => vec![None, Some(200.0), Some(100.0), Some(10.0)],
            };
            ratios
                .into_iter()
                .map(|gamma_over_emission| full_row(cfg, &Point { gamma_over_emission, ..point }))
                .collect()
        }
        Command::Fig5 => fig5_rows(cfg, &point),
    }
}

/// Runs the command over all atom numbers in parallel; row order follows the
/// atom numbers, so output is deterministic.
pub fn run(cfg: &RunConfig) -> Result<Vec<Row>> {
    info!("{} over N = {:?}", cfg.command.name(), cfg.atoms);
    let per_n = cfg
        .atoms
        .par_iter()
        .map(|&n| rows_for(cfg, n))
        .collect::<Result<Vec<_>>>()?;
    let mut rows: Vec<Row> = per_n.into_iter().flatten().collect();
    if cfg.command == Command::Fit {
        let points: Vec<(f64, f64)> = rows.iter().map(|r| (r.n.unwrap() as f64, r.f_max.unwrap())).collect();
        let fit = linear_fit(&points)?;
        rows.push(Row {
            command: cfg.command.name(),
            gamma_t: Some(cfg.gamma_t.unwrap_or(f64::INFINITY)),
            emission_t: Some(rows[0].emission_t.unwrap_or(0.0)),
            eta_h: Some(cfg.eta_h),
            eta_m: Some(cfg.eta_m),
            t_over_t: Some(cfg.nu),
            a0: Some(fit.a0),
            a1: Some(fit.a1),
            fit_rms: Some(fit.residual),
            note: Some("fit".into()),
            ..Row::default()
        });
    }
    Ok(rows)
}
