//! Artifact files. Everything here replays byte-identically for a fixed seed;
//! wall-clock measurements go to separate sidecar files so the deterministic
//! artifacts never embed volatile data.

use crate::config::RunConfig;
use crate::error::CliError;
use dfrc_core::comms::CommSpec;
use dfrc_core::model::{Filter, Scenario, Waveform};
use dfrc_core::solver::DesignResult;
use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};

type C64 = Complex<f64>;

/// Floats in CSV files carry 12 significant digits.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.11e}")
}

pub fn write_csv(
    path: &Path,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<(), CliError> {
    let mut text = String::new();
    text.push_str(&header.join(","));
    text.push('\n');
    for row in rows {
        debug_assert_eq!(row.len(), header.len());
        text.push_str(&row.join(","));
        text.push('\n');
    }
    write_atomic(path, text.as_bytes())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Run(format!("cannot create {}: {e}", dir.display())))?;
    }
    let mut f = std::fs::File::create(path)
        .map_err(|e| CliError::Run(format!("cannot create {}: {e}", path.display())))?;
    f.write_all(bytes)
        .map_err(|e| CliError::Run(format!("cannot write {}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Run(format!("cannot serialize {}: {e}", path.display())))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn complex_pairs(v: &DVector<C64>) -> Vec<[f64; 2]> {
    v.iter().map(|c| [c.re, c.im]).collect()
}

fn matrix_pairs(m: &DMatrix<C64>) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

fn pairs_matrix(rows: &[Vec<[f64; 2]>]) -> DMatrix<C64> {
    let nrows = rows.len();
    let ncols = rows.first().map(|r| r.len()).unwrap_or(0);
    DMatrix::from_fn(nrows, ncols, |i, j| C64::new(rows[i][j][0], rows[i][j][1]))
}

/// The design record: final figures of merit plus every realization needed to
/// re-verify them offline (code phases, filter, channel, symbol streams, seeds).
#[derive(Clone, Debug, Deserialize, Serialize)]
pub struct DesignArtifact {
    pub seed: u64,
    pub channel_seed: u64,
    pub config: RunConfig,
    pub sinr_db: f64,
    pub sinr_linear: f64,
    pub converged: bool,
    pub outer_iterations: usize,
    pub mui_per_user: Vec<f64>,
    pub budgets: Vec<f64>,
    pub feasible_per_user: Vec<bool>,
    pub feasible: bool,
    pub sample_power: f64,
    pub x_phases: Vec<f64>,
    pub x_magnitudes: Vec<f64>,
    pub w: Vec<[f64; 2]>,
    pub channel: Vec<Vec<[f64; 2]>>,
    pub symbols: Vec<Vec<[f64; 2]>>,
    pub constellations: Vec<String>,
}

impl DesignArtifact {
    pub fn from_result(
        result: &DesignResult,
        config: &RunConfig,
        spec: &CommSpec,
        seed: u64,
        channel_seed: u64,
    ) -> DesignArtifact {
        let channel = DMatrix::from_fn(spec.n_users(), spec.n_tx(), |i, j| {
            spec.channel_row(i)[j]
        });
        let symbols = DMatrix::from_fn(spec.n_users(), spec.code_length(), |i, j| {
            spec.symbol_row(i)[j]
        });
        DesignArtifact {
            seed,
            channel_seed,
            config: config.clone(),
            sinr_db: dfrc_core::to_db(result.sinr),
            sinr_linear: result.sinr,
            converged: result.converged,
            outer_iterations: result.outer_iterations,
            mui_per_user: result.mui_per_user.clone(),
            budgets: spec.budgets.clone(),
            feasible_per_user: result.feasible.clone(),
            feasible: result.feasible.iter().all(|&f| f),
            sample_power: result.x.magnitude(0).powi(2),
            x_phases: result.x.phases().to_vec(),
            x_magnitudes: result.x.magnitudes(),
            w: complex_pairs(&result.w.weights),
            channel: matrix_pairs(&channel),
            symbols: matrix_pairs(&symbols),
            constellations: config.comm.users.iter().map(|u| u.constellation.clone()).collect(),
        }
    }

    pub fn load(path: &Path) -> Result<DesignArtifact, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::MissingArtifact(format!("cannot read {}: {e}", path.display()))
        })?;
        serde_json::from_str(&text).map_err(|e| {
            CliError::MissingArtifact(format!("cannot parse {}: {e}", path.display()))
        })
    }

    pub fn waveform(&self) -> Waveform {
        Waveform::with_magnitudes(self.x_phases.clone(), self.x_magnitudes.clone())
    }

    pub fn filter(&self) -> Result<Filter, CliError> {
        let w = DVector::from_fn(self.w.len(), |i, _| C64::new(self.w[i][0], self.w[i][1]));
        Filter::new(w).map_err(CliError::from)
    }

    pub fn scenario(&self) -> Result<Scenario, CliError> {
        self.config.scenario.build()
    }

    pub fn comm_spec(&self) -> Result<CommSpec, CliError> {
        if self.channel.is_empty() {
            let sc = &self.config.scenario;
            return Ok(CommSpec::empty(sc.n_tx, sc.code_length));
        }
        CommSpec::new(
            pairs_matrix(&self.channel),
            pairs_matrix(&self.symbols),
            self.budgets.clone(),
            self.config.comm.users.iter().map(|u| u.noise_power).collect(),
        )
        .map_err(CliError::from)
    }
}

pub fn design_path(out: &Path) -> PathBuf {
    out.join("design.json")
}
