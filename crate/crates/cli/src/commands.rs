//! Subcommand implementations. Every run's randomness flows from the top-level
//! seed; artifacts replay byte-identically, with wall-clock data in sidecars.

use crate::artifacts::{design_path, fmt_float, write_csv, write_json, DesignArtifact};
use crate::config::{RunConfig, UserConfig};
use crate::error::CliError;
use dfrc_core::comms::{mui_all, ser_simulate};
use dfrc_core::detect::{detection_probability, erfcinv};
use dfrc_core::model::{beampattern, sinr_optimal};
use dfrc_core::rng::{substream, DOMAIN_SWEEP};
use dfrc_core::solver::design;
use dfrc_core::to_db;
use rand::RngCore;
use rayon::prelude::*;
use serde::Serialize;
use std::path::Path;

pub fn init_threads(threads: usize) {
    if threads > 0 {
        // A second in-process call keeps the first pool; that only happens in
        // tests, where the pool size is irrelevant to the artifacts.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
}

/// "start:step:stop" inclusive within half a step of the endpoint.
pub fn parse_colon_grid(text: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(CliError::Config(format!("grid '{text}' is not start:step:stop")));
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| p.parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Config(format!("grid '{text}': {e}")))?;
    let (start, step, stop) = (nums[0], nums[1], nums[2]);
    if !(step > 0.0) || stop < start {
        return Err(CliError::Config(format!("grid '{text}' must ascend with positive step")));
    }
    let count = ((stop - start) / step + 0.5).floor() as usize + 1;
    Ok((0..count).map(|i| start + step * i as f64).collect())
}

pub fn parse_float_list(text: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|e| CliError::Config(format!("value '{t}': {e}")))
        })
        .collect()
}

/// Either "logspace:<first exp>:<last exp>:<points>" or an explicit comma list.
pub fn parse_pfa_grid(text: &str) -> Result<Vec<f64>, CliError> {
    if let Some(rest) = text.strip_prefix("logspace:") {
        let parts: Vec<&str> = rest.split(':').collect();
        if parts.len() != 3 {
            return Err(CliError::Config(format!(
                "'{text}' is not logspace:<first exp>:<last exp>:<points>"
            )));
        }
        let a: f64 = parts[0]
            .parse()
            .map_err(|e| CliError::Config(format!("pfa grid '{text}': {e}")))?;
        let b: f64 = parts[1]
            .parse()
            .map_err(|e| CliError::Config(format!("pfa grid '{text}': {e}")))?;
        let n: usize = parts[2]
            .parse()
            .map_err(|e| CliError::Config(format!("pfa grid '{text}': {e}")))?;
        if n < 2 || b <= a {
            return Err(CliError::Config(format!("pfa grid '{text}' must ascend over ≥ 2 points")));
        }
        Ok((0..n)
            .map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64))
            .collect())
    } else {
        parse_float_list(text)
    }
}

struct TraceFiles<'a> {
    out: &'a Path,
    emit_trace: bool,
}

fn write_design_outputs(
    result: &dfrc_core::solver::DesignResult,
    artifact: &DesignArtifact,
    files: &TraceFiles,
) -> Result<(), CliError> {
    write_json(&design_path(files.out), artifact)?;
    if files.emit_trace {
        write_csv(
            &files.out.join("sinr_trace.csv"),
            &["outer_iter", "sinr_db"],
            result
                .sinr_trace_db
                .iter()
                .enumerate()
                .map(|(i, s)| vec![i.to_string(), fmt_float(*s)]),
        )?;
        // Volatile sidecars: wall-clock numbers never enter the replayable files.
        write_csv(
            &files.out.join("trace_timing.csv"),
            &["outer_iter", "cumulative_seconds"],
            result
                .outer_seconds
                .iter()
                .enumerate()
                .map(|(i, s)| vec![i.to_string(), fmt_float(*s)]),
        )?;
        #[derive(Serialize)]
        struct Meta {
            wall_seconds: f64,
        }
        write_json(&files.out.join("design_meta.json"), &Meta { wall_seconds: result.wall_seconds })?;
    }
    Ok(())
}

pub fn cmd_design(config: &RunConfig, out: &Path) -> Result<(), CliError> {
    let run = config.resolve()?;
    let result = design(&run.scenario, &run.spec, &run.x0, &run.params)?;
    let artifact =
        DesignArtifact::from_result(&result, config, &run.spec, run.seed, run.channel_seed);
    write_design_outputs(
        &result,
        &artifact,
        &TraceFiles { out, emit_trace: config.output.emit_trace },
    )?;
    eprintln!(
        "design: sinr {:.4} dB over {} outer iterations, converged {}, feasible {}, {:.1}s",
        artifact.sinr_db, artifact.outer_iterations, artifact.converged, artifact.feasible,
        result.wall_seconds
    );
    if !artifact.converged {
        eprintln!("design: iteration cap reached before the outer tolerance; results recorded");
    }
    if config.output.emit_beampattern {
        cmd_beampattern(&design_path(out), None, out)?;
    }
    if config.output.emit_pd {
        cmd_pd(config, &[artifact.sinr_db], "logspace:-8:-1:71", out)?;
    }
    if config.output.emit_ser {
        cmd_ser(&design_path(out), "0:2:12", 2000, None, out)?;
    }
    Ok(())
}

pub fn cmd_beampattern(
    design_file: &Path,
    grid_spec: Option<&str>,
    out: &Path,
) -> Result<(), CliError> {
    let artifact = DesignArtifact::load(design_file)?;
    let scenario = artifact.scenario()?;
    let grid = match grid_spec {
        Some(text) => parse_colon_grid(text)?,
        // The steering model is defined strictly inside (−90°, 90°), so the
        // default grid stops one step short of the endpoints.
        None => parse_colon_grid("-89.9:0.1:89.9")?,
    };
    if let Some(bad) = grid.iter().find(|a| !(a.abs() < 90.0)) {
        return Err(CliError::Config(format!(
            "grid angle {bad} deg lies outside the open interval (-90, 90)"
        )));
    }
    let x = artifact.waveform();
    let w = artifact.filter()?;
    let bp = beampattern(&x, &w, &grid, &scenario)?;
    write_csv(
        &out.join("beampattern.csv"),
        &["angle_deg", "power_db", "power_db_normalized"],
        bp.angles_deg
            .iter()
            .zip(bp.power_db.iter().zip(bp.normalized_db.iter()))
            .map(|(a, (p, n))| vec![fmt_float(*a), fmt_float(*p), fmt_float(*n)]),
    )
}

pub fn cmd_pd(
    config: &RunConfig,
    sinr_db_list: &[f64],
    pfa_spec: &str,
    out: &Path,
) -> Result<(), CliError> {
    let scenario = config.scenario.build()?;
    let pfa_grid = parse_pfa_grid(pfa_spec)?;
    for &p in &pfa_grid {
        // Surface the domain check before any column work.
        erfcinv(2.0 * p).map_err(|e| CliError::Config(format!("pfa {p}: {e}")))?;
    }
    let lfm_sinr_db = to_db(sinr_optimal(&scenario.lfm(), &scenario)?);
    let mut header: Vec<String> = vec!["pfa".into()];
    for s in sinr_db_list {
        header.push(format!("pd_{s}db"));
    }
    header.push(format!("pd_lfm_{lfm_sinr_db:.2}db"));
    let mut columns = Vec::new();
    for &s in sinr_db_list.iter().chain(std::iter::once(&lfm_sinr_db)) {
        let mut col = Vec::with_capacity(pfa_grid.len());
        for &pfa in &pfa_grid {
            col.push(
                detection_probability(dfrc_core::from_db(s), pfa)
                    .map_err(|e| CliError::Run(e.to_string()))?,
            );
        }
        columns.push(col);
    }
    let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    write_csv(
        &out.join("pd.csv"),
        &header_refs,
        pfa_grid.iter().enumerate().map(|(i, pfa)| {
            let mut row = vec![fmt_float(*pfa)];
            row.extend(columns.iter().map(|c| fmt_float(c[i])));
            row
        }),
    )
}

pub fn cmd_ser(
    design_file: &Path,
    snr_spec: &str,
    trials: usize,
    seed_override: Option<u64>,
    out: &Path,
) -> Result<(), CliError> {
    let artifact = DesignArtifact::load(design_file)?;
    let spec = artifact.comm_spec()?;
    if spec.n_users() == 0 {
        return Err(CliError::Config("symbol-error curves need at least one user".into()));
    }
    let grid = parse_colon_grid(snr_spec)?;
    let constellations = artifact
        .constellations
        .iter()
        .map(|n| dfrc_core::comms::Constellation::from_name(n))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::MissingArtifact(format!("artifact constellations: {e}")))?;
    let seed = seed_override.unwrap_or(artifact.seed);
    let x = artifact.waveform();
    let curves = ser_simulate(&x, &spec, &constellations, &grid, trials, seed)?;
    for m in 0..spec.n_users() {
        write_csv(
            &out.join(format!("ser_user{}.csv", m + 1)),
            &["snr_db", "ser_synthesized", "ser_ideal"],
            grid.iter().enumerate().map(|(i, s)| {
                vec![
                    fmt_float(*s),
                    fmt_float(curves.synthesized[m][i]),
                    fmt_float(curves.ideal[m][i]),
                ]
            }),
        )?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum SweepAxis {
    CommEnergy,
    Users,
    CodeLength,
    Antennas,
    Budget,
    Papr,
}

impl SweepAxis {
    fn name(self) -> &'static str {
        match self {
            SweepAxis::CommEnergy => "comm_energy",
            SweepAxis::Users => "users",
            SweepAxis::CodeLength => "code_length",
            SweepAxis::Antennas => "antennas",
            SweepAxis::Budget => "budget",
            SweepAxis::Papr => "papr",
        }
    }
}

fn parse_tuple(token: &str) -> Result<Vec<f64>, CliError> {
    token
        .split(':')
        .map(|t| {
            t.parse::<f64>()
                .map_err(|e| CliError::Config(format!("token '{token}': {e}")))
        })
        .collect()
}

/// Scalar tokens apply to every user; colon tuples go per-user (or per array
/// side for the antennas axis).
fn per_user_values(token: &str, n_users: usize, what: &str) -> Result<Vec<f64>, CliError> {
    let vals = parse_tuple(token)?;
    if vals.len() == 1 {
        Ok(vec![vals[0]; n_users])
    } else if vals.len() == n_users {
        Ok(vals)
    } else {
        Err(CliError::Config(format!(
            "{what} token '{token}' lists {} entries for {} users",
            vals.len(),
            n_users
        )))
    }
}

fn apply_axis(base: &RunConfig, axis: SweepAxis, token: &str) -> Result<RunConfig, CliError> {
    let mut cfg = base.clone();
    match axis {
        SweepAxis::CommEnergy => {
            let vals = per_user_values(token, cfg.comm.users.len(), "comm_energy")?;
            for (u, v) in cfg.comm.users.iter_mut().zip(vals) {
                if !(v > 0.0) {
                    return Err(CliError::Config(format!("energy {v} must be positive")));
                }
                u.energy = v;
            }
        }
        SweepAxis::Users => {
            let m: usize = token
                .parse()
                .map_err(|e| CliError::Config(format!("users token '{token}': {e}")))?;
            resize_users(&mut cfg.comm.users, m)?;
        }
        SweepAxis::CodeLength => {
            cfg.scenario.code_length = token
                .parse()
                .map_err(|e| CliError::Config(format!("code_length token '{token}': {e}")))?;
        }
        SweepAxis::Antennas => {
            let vals = parse_tuple(token)?;
            if vals.len() != 2 {
                return Err(CliError::Config(format!(
                    "antennas token '{token}' must be n_tx:n_rx"
                )));
            }
            if vals.iter().any(|v| v.fract() != 0.0 || *v < 1.0) {
                return Err(CliError::Config(format!(
                    "antennas token '{token}' must hold positive integers"
                )));
            }
            cfg.scenario.n_tx = vals[0] as usize;
            cfg.scenario.n_rx = vals[1] as usize;
        }
        SweepAxis::Budget => {
            let vals = per_user_values(token, cfg.comm.users.len(), "budget")?;
            for (u, v) in cfg.comm.users.iter_mut().zip(vals) {
                if !(v > 0.0) {
                    return Err(CliError::Config(format!("budget {v} must be positive")));
                }
                u.budget = v;
            }
        }
        SweepAxis::Papr => {
            let rho: f64 = token
                .parse()
                .map_err(|e| CliError::Config(format!("papr token '{token}': {e}")))?;
            cfg.solver.papr = Some(rho);
        }
    }
    Ok(cfg)
}

/// Growing the user list cycles the configured constellations and repeats the
/// last user's energy, budget, and noise settings.
fn resize_users(users: &mut Vec<UserConfig>, m: usize) -> Result<(), CliError> {
    if users.is_empty() && m > 0 {
        return Err(CliError::Config(
            "cannot extend an empty user list; configure at least one user".into(),
        ));
    }
    let cycle: Vec<String> = users.iter().map(|u| u.constellation.clone()).collect();
    let last = users.last().cloned();
    users.truncate(m);
    while users.len() < m {
        let idx = users.len();
        let template = last.as_ref().unwrap();
        users.push(UserConfig {
            constellation: cycle[idx % cycle.len()].clone(),
            ..template.clone()
        });
    }
    Ok(())
}

struct SweepRow {
    value: String,
    seed: u64,
    sinr_db: f64,
    outer_iterations: usize,
    converged: bool,
    feasible: bool,
    wall_seconds: f64,
}

pub fn cmd_sweep(
    base: &RunConfig,
    axis: SweepAxis,
    value_tokens: &[String],
    seeds: &[u64],
    redraw_channel: bool,
    out: &Path,
) -> Result<(), CliError> {
    if value_tokens.is_empty() || seeds.is_empty() {
        return Err(CliError::Config("sweep needs at least one value and one seed".into()));
    }
    if base.comm.channel_file.is_some() {
        return Err(CliError::Config(
            "sweeps draw channels from seeds; comm.channel_file is not supported here".into(),
        ));
    }
    // Build every point up front so failures surface before any run starts.
    let mut points = Vec::new();
    for token in value_tokens {
        for (si, &seed) in seeds.iter().enumerate() {
            let mut cfg = apply_axis(base, axis, token)?;
            cfg.seed = seed;
            // Fixed-channel default: all points of one seed share the seed's
            // realization. Redraw mode derives a fresh channel per point.
            cfg.comm.channel_seed = if redraw_channel {
                let index = (points.len() / seeds.len()) as u64;
                Some(substream(seed, DOMAIN_SWEEP, index).next_u64())
            } else {
                Some(seed)
            };
            cfg.resolve().map_err(|e| {
                CliError::Config(format!("{} = {token}, seed {seed}: {e}", axis.name()))
            })?;
            let _ = si;
            points.push((token.clone(), seed, cfg));
        }
    }
    let rows: Vec<SweepRow> = points
        .into_par_iter()
        .map(|(token, seed, cfg)| -> Result<SweepRow, CliError> {
            let run = cfg.resolve()?;
            let result = design(&run.scenario, &run.spec, &run.x0, &run.params)?;
            let psi = mui_all(&result.x, &run.spec);
            let feasible = psi
                .iter()
                .zip(&run.spec.budgets)
                .all(|(p, b)| p <= &(b * (1.0 + 1e-3)));
            Ok(SweepRow {
                value: token,
                seed,
                sinr_db: to_db(result.sinr),
                outer_iterations: result.outer_iterations,
                converged: result.converged,
                feasible,
                wall_seconds: result.wall_seconds,
            })
        })
        .collect::<Result<_, _>>()?;

    write_csv(
        &out.join("sweep.csv"),
        &["axis", "value", "seed", "sinr_db", "outer_iterations", "converged", "feasible"],
        rows.iter().map(|r| {
            vec![
                axis.name().to_string(),
                r.value.clone(),
                r.seed.to_string(),
                fmt_float(r.sinr_db),
                r.outer_iterations.to_string(),
                r.converged.to_string(),
                r.feasible.to_string(),
            ]
        }),
    )?;
    write_csv(
        &out.join("sweep_timing.csv"),
        &["axis", "value", "seed", "wall_seconds"],
        rows.iter().map(|r| {
            vec![
                axis.name().to_string(),
                r.value.clone(),
                r.seed.to_string(),
                fmt_float(r.wall_seconds),
            ]
        }),
    )?;
    write_csv(
        &out.join("sweep_summary.csv"),
        &["axis", "value", "n_seeds", "mean_sinr_db", "min_sinr_db", "max_sinr_db"],
        value_tokens.iter().map(|token| {
            let vals: Vec<f64> =
                rows.iter().filter(|r| &r.value == token).map(|r| r.sinr_db).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            vec![
                axis.name().to_string(),
                token.clone(),
                vals.len().to_string(),
                fmt_float(mean),
                fmt_float(min),
                fmt_float(max),
            ]
        }),
    )?;
    Ok(())
}
