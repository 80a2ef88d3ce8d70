//! Run configuration: a single strict TOML tree with the experiment defaults
//! baked in, resolved into the library's validated domain types.

use crate::error::CliError;
use dfrc_core::comms::{gen_channel, gen_symbols, CommSpec, Constellation};
use dfrc_core::from_db;
use dfrc_core::model::{ArrayConfig, Scenario, Waveform};
use dfrc_core::rng::{substream, DOMAIN_INIT, DOMAIN_SYMBOLS};
use dfrc_core::solver::{ConstraintMode, SolverParams};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Top-level seed; every random draw in a run derives from it.
    pub seed: u64,
    pub scenario: ScenarioConfig,
    pub comm: CommConfig,
    pub solver: SolverConfig,
    pub init: InitKind,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            scenario: ScenarioConfig::default(),
            comm: CommConfig::default(),
            solver: SolverConfig::default(),
            init: InitKind::Lfm,
            output: OutputConfig::default(),
        }
    }
}

/// Radar-side geometry and powers. Powers are quoted in dB; energies linear.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub n_tx: usize,
    pub n_rx: usize,
    pub spacing_wavelengths: f64,
    pub target_angle_deg: f64,
    pub target_power_db: f64,
    /// (angle_deg, power_db) per interferer.
    pub interferers: Vec<(f64, f64)>,
    pub noise_power_db: f64,
    pub total_energy: f64,
    pub code_length: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_tx: 16,
            n_rx: 8,
            spacing_wavelengths: 0.5,
            target_angle_deg: 20.0,
            target_power_db: 0.0,
            interferers: vec![(-40.0, 30.0), (-20.0, 30.0), (40.0, 30.0), (50.0, 30.0)],
            noise_power_db: 0.0,
            total_energy: 20.0,
            code_length: 20,
        }
    }
}

impl ScenarioConfig {
    pub fn build(&self) -> Result<Scenario, CliError> {
        let array = ArrayConfig::new(self.n_tx, self.n_rx, self.spacing_wavelengths)
            .map_err(|e| CliError::Config(format!("scenario.array: {e}")))?;
        Scenario::new(
            array,
            self.target_angle_deg,
            from_db(self.target_power_db),
            self.interferers.iter().map(|&(a, p)| (a, from_db(p))).collect(),
            from_db(self.noise_power_db),
            self.total_energy,
            self.code_length,
        )
        .map_err(|e| CliError::Config(format!("scenario: {e}")))
    }
}

/// Communication side: per-user settings plus the channel source. Energies,
/// budgets, and receiver noise powers are linear.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct CommConfig {
    pub users: Vec<UserConfig>,
    /// Seed for the channel and symbol realizations; defaults to the top seed.
    pub channel_seed: Option<u64>,
    /// Reuse the channel and symbols recorded in an earlier design artifact.
    pub channel_file: Option<PathBuf>,
}

impl Default for CommConfig {
    fn default() -> Self {
        Self {
            users: vec![
                UserConfig {
                    constellation: "qpsk".into(),
                    energy: 20.0,
                    budget: 1e-3,
                    noise_power: 1.0,
                },
                UserConfig {
                    constellation: "8qam".into(),
                    energy: 20.0,
                    budget: 5e-3,
                    noise_power: 1.0,
                },
            ],
            channel_seed: None,
            channel_file: None,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct UserConfig {
    pub constellation: String,
    pub energy: f64,
    pub budget: f64,
    pub noise_power: f64,
}

/// Solver knobs; omitted keys take the library defaults.
#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub mu: Option<f64>,
    pub eps_primal: Option<f64>,
    pub eps_dual: Option<f64>,
    pub tol_outer: Option<f64>,
    pub tol_inner: Option<f64>,
    pub max_outer: Option<usize>,
    pub max_dinkelbach: Option<usize>,
    pub max_admm: Option<usize>,
    pub max_mm: Option<usize>,
    pub beta_margin: Option<f64>,
    /// Per-antenna peak-to-average power cap; absent means constant modulus.
    pub papr: Option<f64>,
}

impl SolverConfig {
    pub fn build(&self) -> SolverParams {
        let d = SolverParams::default();
        SolverParams {
            mu: self.mu.unwrap_or(d.mu),
            eps_primal: self.eps_primal.unwrap_or(d.eps_primal),
            eps_dual: self.eps_dual.unwrap_or(d.eps_dual),
            tol_outer: self.tol_outer.unwrap_or(d.tol_outer),
            tol_inner: self.tol_inner.unwrap_or(d.tol_inner),
            max_outer: self.max_outer.unwrap_or(d.max_outer),
            max_dinkelbach: self.max_dinkelbach.unwrap_or(d.max_dinkelbach),
            max_admm: self.max_admm.unwrap_or(d.max_admm),
            max_mm: self.max_mm.unwrap_or(d.max_mm),
            beta_margin: self.beta_margin.unwrap_or(d.beta_margin),
            constraint_mode: match self.papr {
                Some(rho) => ConstraintMode::Papr(rho),
                None => ConstraintMode::ConstantModulus,
            },
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum InitKind {
    /// Chirp code (deterministic).
    Lfm,
    /// Random constant-modulus phases drawn from the top seed.
    Random,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: PathBuf,
    /// Write sinr_trace.csv and the timing sidecar alongside design.json.
    pub emit_trace: bool,
    /// Chain the beampattern/detection/symbol-error artifacts after a design run.
    pub emit_beampattern: bool,
    pub emit_pd: bool,
    pub emit_ser: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("out"),
            emit_trace: true,
            emit_beampattern: false,
            emit_pd: false,
            emit_ser: false,
        }
    }
}

/// Everything a run needs, validated and materialized.
pub struct ResolvedRun {
    pub scenario: Scenario,
    pub spec: CommSpec,
    pub params: SolverParams,
    pub x0: Waveform,
    pub seed: u64,
    pub channel_seed: u64,
    pub constellations: Vec<Constellation>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))
    }

    pub fn resolve(&self) -> Result<ResolvedRun, CliError> {
        let scenario = self.scenario.build()?;
        let params = self.solver.build();
        params
            .validate(scenario.code_length)
            .map_err(|e| CliError::Config(format!("solver: {e}")))?;

        let mut constellations = Vec::with_capacity(self.comm.users.len());
        for u in &self.comm.users {
            constellations.push(
                Constellation::from_name(&u.constellation)
                    .map_err(|e| CliError::Config(format!("comm.users: {e}")))?,
            );
        }

        let channel_seed = self.comm.channel_seed.unwrap_or(self.seed);
        let spec = if let Some(file) = &self.comm.channel_file {
            if self.comm.channel_seed.is_some() {
                return Err(CliError::Config(
                    "comm.channel_seed and comm.channel_file are mutually exclusive".into(),
                ));
            }
            let art = crate::artifacts::DesignArtifact::load(file)?;
            let spec = art.comm_spec()?;
            if spec.n_users() != self.comm.users.len() {
                return Err(CliError::Config(format!(
                    "channel file holds {} users, config lists {}",
                    spec.n_users(),
                    self.comm.users.len()
                )));
            }
            if spec.n_tx() != scenario.array.n_tx {
                return Err(CliError::Config(format!(
                    "channel file was drawn for {} transmit antennas, scenario has {}",
                    spec.n_tx(),
                    scenario.array.n_tx
                )));
            }
            spec
        } else {
            build_spec(&scenario, &self.comm.users, &constellations, channel_seed)?
        };

        let x0 = match self.init {
            InitKind::Lfm => scenario.lfm(),
            InitKind::Random => {
                let mut rng = substream(self.seed, DOMAIN_INIT, 0);
                scenario.random_cm(&mut rng)
            }
        };

        Ok(ResolvedRun {
            scenario,
            spec,
            params,
            x0,
            seed: self.seed,
            channel_seed,
            constellations,
        })
    }
}

fn build_spec(
    scenario: &Scenario,
    users: &[UserConfig],
    constellations: &[Constellation],
    channel_seed: u64,
) -> Result<CommSpec, CliError> {
    let m = users.len();
    let l = scenario.code_length;
    if m == 0 {
        return Ok(CommSpec::empty(scenario.array.n_tx, l));
    }
    let channel = gen_channel(m, scenario.array.n_tx, channel_seed);
    let mut symbols = DMatrix::zeros(m, l);
    for (i, u) in users.iter().enumerate() {
        let mut rng = substream(channel_seed, DOMAIN_SYMBOLS, i as u64);
        let row = gen_symbols(constellations[i], l, u.energy, &mut rng);
        symbols.row_mut(i).tr_copy_from(&row);
    }
    CommSpec::new(
        channel,
        symbols,
        users.iter().map(|u| u.budget).collect(),
        users.iter().map(|u| u.noise_power).collect(),
    )
    .map_err(|e| CliError::Config(format!("comm: {e}")))
}
