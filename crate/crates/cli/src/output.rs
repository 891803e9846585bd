use std::io::Write;

use serde::Serialize;

use crate::config::Format;

/// One output record. Fields a command does not compute stay `None` and are
/// written as empty CSV cells (JSON `null`).
#[derive(Debug, Clone, Default, Serialize)]
pub struct Row {
    pub command: &'static str,
    #[serde(rename = "N")]
    pub n: Option<usize>,
    pub gamma_t: Option<f64>,
    #[serde(rename = "Gamma_t")]
    pub emission_t: Option<f64>,
    pub eta_h: Option<f64>,
    pub eta_m: Option<f64>,
    pub delta_t_opt: Option<f64>,
    pub f_max: Option<f64>,
    pub fisher: Option<f64>,
    pub qfi: Option<f64>,
    pub dw_cr: Option<f64>,
    pub dw_qcr: Option<f64>,
    pub bench_uncorrelated: Option<f64>,
    pub bench_correlated: Option<f64>,
    pub bench_noisy: Option<f64>,
    #[serde(rename = "improvement_I")]
    pub improvement_i: Option<f64>,
    #[serde(rename = "improvement_I_tilde")]
    pub improvement_i_tilde: Option<f64>,
    #[serde(rename = "improvement_I_full")]
    pub improvement_i_full: Option<f64>,
    pub engine: Option<String>,
    #[serde(rename = "T_over_t")]
    pub t_over_t: Option<f64>,
    pub a0: Option<f64>,
    pub a1: Option<f64>,
    pub fit_rms: Option<f64>,
    pub note: Option<String>,
}

pub fn write_rows<W: Write>(out: W, rows: &[Row], format: Format) -> std::io::Result<()> {
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            for row in rows {
                w.serialize(row)?;
            }
            w.flush()
        }
        Format::Json => {
            let mut out = out;
            serde_json::to_writer_pretty(&mut out, rows)?;
            writeln!(out)
        }
    }
}
