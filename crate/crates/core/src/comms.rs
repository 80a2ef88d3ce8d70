//! Communication-side model: flat-fading channel draws, constellations and symbol
//! streams, per-user synthesis error, rate bounds, and Monte-Carlo symbol error
//! rates.
//!
//! The per-user synthesis operator never materializes: with the code vector stacked
//! per subpulse, user m observes h_m^⊤·x_l at instant l, so the stacked operator is
//! I_L ⊗ h_m^⊤ and its adjoint scatters conj(h_m)·v_l back into block l.

use crate::error::{Error, Result};
use crate::model::Waveform;
use crate::rng::{complex_gaussian, substream, DOMAIN_CHANNEL, DOMAIN_SER};
use crate::{CMatrix, CVector, Complex64};
use rand::Rng;
use rayon::prelude::*;

/// Symbol alphabets, unit average power.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Constellation {
    Qpsk,
    /// Rectangular 8-point QAM: {±1, ±3} × {±1} scaled to unit average power.
    Qam8,
}

impl Constellation {
    pub fn points(&self) -> Vec<Complex64> {
        match self {
            Constellation::Qpsk => {
                let s = 0.5f64.sqrt();
                vec![
                    Complex64::new(s, s),
                    Complex64::new(s, -s),
                    Complex64::new(-s, s),
                    Complex64::new(-s, -s),
                ]
            }
            Constellation::Qam8 => {
                let s = (1.0 / 6.0f64).sqrt();
                let mut pts = Vec::with_capacity(8);
                for re in [-3.0, -1.0, 1.0, 3.0] {
                    for im in [-1.0, 1.0] {
                        pts.push(Complex64::new(re * s, im * s));
                    }
                }
                pts
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Constellation::Qpsk => "qpsk",
            Constellation::Qam8 => "8qam",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "qpsk" => Ok(Constellation::Qpsk),
            "8qam" | "qam8" => Ok(Constellation::Qam8),
            other => Err(Error::InvalidParameter(format!(
                "unknown constellation '{other}' (expected qpsk or 8qam)"
            ))),
        }
    }
}

/// Channel, desired streams, and per-user budgets for M users.
#[derive(Clone, Debug)]
pub struct CommSpec {
    /// M×N_T flat-fading channel, row m = h_m^⊤.
    pub channel: CMatrix,
    /// M×L desired symbols, row m = s_m^⊤.
    pub symbols: CMatrix,
    /// Synthesis-error budgets ς_m.
    pub budgets: Vec<f64>,
    /// Receiver noise powers σ_{z,m}².
    pub noise_powers: Vec<f64>,
}

impl CommSpec {
    pub fn new(channel: CMatrix, symbols: CMatrix, budgets: Vec<f64>, noise_powers: Vec<f64>) -> Result<Self> {
        let m = channel.nrows();
        if symbols.nrows() != m || budgets.len() != m || noise_powers.len() != m {
            return Err(Error::DimensionMismatch {
                what: "per-user rows",
                expected: m,
                got: symbols.nrows().min(budgets.len()).min(noise_powers.len()),
            });
        }
        for (idx, &b) in budgets.iter().enumerate() {
            if !(b > 0.0) {
                return Err(Error::InvalidParameter(format!("budget for user {idx} must be positive")));
            }
        }
        for (idx, &z) in noise_powers.iter().enumerate() {
            if !(z > 0.0) {
                return Err(Error::InvalidParameter(format!("noise power for user {idx} must be positive")));
            }
        }
        for idx in 0..m {
            if symbols.row(idx).iter().map(|v| v.norm_sqr()).sum::<f64>() <= 0.0 {
                return Err(Error::InvalidParameter(format!("symbol stream for user {idx} has zero energy")));
            }
        }
        Ok(Self { channel, symbols, budgets, noise_powers })
    }

    /// Radar-only configuration: no users, no constraints.
    pub fn empty(n_tx: usize, code_length: usize) -> Self {
        Self {
            channel: CMatrix::zeros(0, n_tx),
            symbols: CMatrix::zeros(0, code_length),
            budgets: vec![],
            noise_powers: vec![],
        }
    }

    pub fn n_users(&self) -> usize {
        self.channel.nrows()
    }

    pub fn n_tx(&self) -> usize {
        self.channel.ncols()
    }

    pub fn code_length(&self) -> usize {
        self.symbols.ncols()
    }

    /// h_m as a column vector of the row-m entries (untransposed storage).
    pub fn channel_row(&self, m: usize) -> CVector {
        CVector::from_fn(self.n_tx(), |j, _| self.channel[(m, j)])
    }

    pub fn symbol_row(&self, m: usize) -> CVector {
        CVector::from_fn(self.code_length(), |l, _| self.symbols[(m, l)])
    }

    /// ‖s_m‖², the per-user stream energy.
    pub fn energy(&self, m: usize) -> f64 {
        self.symbols.row(m).iter().map(|v| v.norm_sqr()).sum()
    }
}

/// M×N_T channel with i.i.d. CN(0,1) entries. Row m draws from substream m of the
/// seed, so enlarging either dimension preserves all previously drawn entries.
pub fn gen_channel(m_users: usize, n_tx: usize, seed: u64) -> CMatrix {
    let mut h = CMatrix::zeros(m_users, n_tx);
    for m in 0..m_users {
        let mut rng = substream(seed, DOMAIN_CHANNEL, m as u64);
        for j in 0..n_tx {
            h[(m, j)] = complex_gaussian(&mut rng, 1.0);
        }
    }
    h
}

/// L uniform constellation draws rescaled so the realized stream energy is exactly
/// `energy` (the nominal per-symbol scale is √(energy/L); the realized correction
/// matters only for alphabets with unequal point powers).
pub fn gen_symbols<R: Rng>(constellation: Constellation, code_length: usize, energy: f64, rng: &mut R) -> CVector {
    assert!(code_length >= 1 && energy > 0.0);
    let points = constellation.points();
    let draws: Vec<Complex64> = (0..code_length)
        .map(|_| points[rng.gen_range(0..points.len())])
        .collect();
    let raw_energy: f64 = draws.iter().map(|p| p.norm_sqr()).sum();
    let scale = (energy / raw_energy).sqrt();
    CVector::from_vec(draws.into_iter().map(|p| p * scale).collect())
}

/// Symbols user m would observe noiselessly: y_l = h_m^⊤·x_l.
pub fn synthesized_stream(x: &Waveform, h: &CVector, code_length: usize) -> CVector {
    let n_tx = h.len();
    assert_eq!(x.len(), code_length * n_tx, "code vector length mismatch");
    CVector::from_fn(code_length, |l, _| {
        (0..n_tx).map(|n| h[n] * x.sample(l * n_tx + n)).sum()
    })
}

/// Per-user synthesis error ψ_m = Σ_l |h_m^⊤·x_l − s_{m,l}|², evaluated blockwise.
pub fn mui(x: &Waveform, h: &CVector, s: &CVector) -> f64 {
    let synth = synthesized_stream(x, h, s.len());
    (0..s.len()).map(|l| (synth[l] - s[l]).norm_sqr()).sum()
}

pub fn mui_all(x: &Waveform, spec: &CommSpec) -> Vec<f64> {
    (0..spec.n_users())
        .map(|m| mui(x, &spec.channel_row(m), &spec.symbol_row(m)))
        .collect()
}

/// Empirical per-user SINR, achievable rate, and the budget-implied rate floor.
///
/// The realized per-symbol synthesis error ψ_m/L stands in for its expectation, so
/// sinr = (e_m/L)/(ψ_m/L + σ_z²); the floor replaces ψ_m by the budget ς_m.
pub fn comm_sinr_and_rate(x: &Waveform, spec: &CommSpec, m: usize) -> (f64, f64, f64) {
    let l = spec.code_length() as f64;
    let p_m = spec.energy(m) / l;
    let psi = mui(x, &spec.channel_row(m), &spec.symbol_row(m));
    let sigma_z = spec.noise_powers[m];
    let sinr = p_m / (psi / l + sigma_z);
    let rate = (1.0 + sinr).log2();
    let floor = (1.0 + p_m / (spec.budgets[m] / l + sigma_z)).log2();
    (sinr, rate, floor)
}

/// Index of the nearest constellation point; ties break to the lowest index.
pub fn demodulate(observed: Complex64, scaled_points: &[Complex64]) -> usize {
    assert!(!scaled_points.is_empty());
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (idx, p) in scaled_points.iter().enumerate() {
        let d = (observed - p).norm_sqr();
        if d < best_d {
            best_d = d;
            best = idx;
        }
    }
    best
}

/// Per-user symbol-error-rate curves for the synthesized signals and for the ideal
/// (desired) signals under the same noise draws.
#[derive(Clone, Debug)]
pub struct SerCurves {
    pub snr_db: Vec<f64>,
    /// [user][snr point].
    pub synthesized: Vec<Vec<f64>>,
    pub ideal: Vec<Vec<f64>>,
}

/// Monte-Carlo SER over a per-user SNR grid. The signal amplitudes stay fixed; each
/// grid point sets the noise power to (per-symbol power)/SNR. Trials are independent
/// substreams of the seed, so parallel and serial execution count identically.
pub fn ser_simulate(
    x: &Waveform,
    spec: &CommSpec,
    constellations: &[Constellation],
    snr_grid_db: &[f64],
    trials: usize,
    seed: u64,
) -> Result<SerCurves> {
    if constellations.len() != spec.n_users() {
        return Err(Error::DimensionMismatch {
            what: "constellations per user",
            expected: spec.n_users(),
            got: constellations.len(),
        });
    }
    if trials < 1 {
        return Err(Error::InvalidParameter("trial count must be at least 1".into()));
    }
    if !snr_grid_db.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidInput("SNR grid must be finite".into()));
    }
    assert!(spec.n_users() < 1 << 8 && snr_grid_db.len() < 1 << 16 && trials < 1 << 32);
    let l = spec.code_length();
    let mut synthesized = Vec::with_capacity(spec.n_users());
    let mut ideal = Vec::with_capacity(spec.n_users());
    for m in 0..spec.n_users() {
        let h = spec.channel_row(m);
        let s = spec.symbol_row(m);
        let synth = synthesized_stream(x, &h, l);
        let p_m = spec.energy(m) / l as f64;
        let scale = p_m.sqrt();
        let points: Vec<Complex64> = constellations[m].points().iter().map(|p| p * scale).collect();
        let truth: Vec<usize> = (0..l).map(|idx| demodulate(s[idx], &points)).collect();
        let mut user_synth = Vec::with_capacity(snr_grid_db.len());
        let mut user_ideal = Vec::with_capacity(snr_grid_db.len());
        for (gi, &snr_db) in snr_grid_db.iter().enumerate() {
            let sigma_z = p_m / crate::from_db(snr_db);
            let (errs_synth, errs_ideal) = (0..trials)
                .into_par_iter()
                .map(|t| {
                    let index = ((m as u64) << 48) | ((gi as u64) << 32) | t as u64;
                    let mut rng = substream(seed, DOMAIN_SER, index);
                    let mut es = 0u64;
                    let mut ei = 0u64;
                    for idx in 0..l {
                        let noise = complex_gaussian(&mut rng, sigma_z);
                        if demodulate(synth[idx] + noise, &points) != truth[idx] {
                            es += 1;
                        }
                        if demodulate(s[idx] + noise, &points) != truth[idx] {
                            ei += 1;
                        }
                    }
                    (es, ei)
                })
                .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
            let denom = (trials * l) as f64;
            user_synth.push(errs_synth as f64 / denom);
            user_ideal.push(errs_ideal as f64 / denom);
        }
        synthesized.push(user_synth);
        ideal.push(user_ideal);
    }
    Ok(SerCurves { snr_db: snr_grid_db.to_vec(), synthesized, ideal })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::DOMAIN_SYMBOLS;

    #[test]
    fn constellations_unit_average_power() {
        for c in [Constellation::Qpsk, Constellation::Qam8] {
            let pts = c.points();
            let mean: f64 = pts.iter().map(|p| p.norm_sqr()).sum::<f64>() / pts.len() as f64;
            assert!((mean - 1.0).abs() < 1e-12, "{:?} mean power {mean}", c);
            for i in 0..pts.len() {
                for j in 0..i {
                    assert!((pts[i] - pts[j]).norm() > 1e-6);
                }
            }
        }
    }

    #[test]
    fn channel_is_reproducible_and_row_stable() {
        let a = gen_channel(2, 4, 11);
        let b = gen_channel(2, 4, 11);
        assert_eq!(a, b);
        let wider = gen_channel(3, 6, 11);
        for m in 0..2 {
            for j in 0..4 {
                assert_eq!(a[(m, j)], wider[(m, j)]);
            }
        }
        let other = gen_channel(2, 4, 12);
        assert_ne!(a, other);
    }

    #[test]
    fn channel_sample_variance() {
        let h = gen_channel(10, 1000, 3);
        let var = h.iter().map(|v| v.norm_sqr()).sum::<f64>() / (h.nrows() * h.ncols()) as f64;
        assert!((0.95..1.05).contains(&var), "sample variance {var}");
    }

    #[test]
    fn symbols_energy_and_magnitudes() {
        let mut rng = substream(5, DOMAIN_SYMBOLS, 0);
        let s = gen_symbols(Constellation::Qpsk, 20, 20.0, &mut rng);
        assert!((s.norm_squared() - 20.0).abs() < 1e-12 * 20.0);
        for l in 0..20 {
            assert!((s[l].norm() - 1.0).abs() < 1e-12);
        }
        let mut rng = substream(5, DOMAIN_SYMBOLS, 1);
        let s8 = gen_symbols(Constellation::Qam8, 40, 40.0, &mut rng);
        assert!((s8.norm_squared() - 40.0).abs() < 1e-12 * 40.0);
        // Ring magnitudes stay in a two-valued set (inner/outer), scaled commonly.
        let mut mags: Vec<f64> = s8.iter().map(|v| v.norm()).collect();
        mags.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let distinct = mags.windows(2).filter(|w| (w[1] - w[0]).abs() > 1e-9).count() + 1;
        assert!(distinct <= 2, "8QAM magnitudes should form at most two rings");
    }

    #[test]
    fn mui_zero_channel_gives_symbol_energy() {
        let sc = crate::model::Scenario::default();
        let x = sc.lfm();
        let h = CVector::zeros(16);
        let mut rng = substream(1, DOMAIN_SYMBOLS, 0);
        let s = gen_symbols(Constellation::Qpsk, 20, 20.0, &mut rng);
        let e = mui(&x, &h, &s);
        assert!((e - s.norm_squared()).abs() < 1e-12 * s.norm_squared());
    }

    #[test]
    fn comm_rate_floor_boundary() {
        // When the realized error equals the budget, rate equals the floor.
        let n_tx = 2;
        let l = 4;
        let channel = CMatrix::from_fn(1, n_tx, |_, j| Complex64::new(if j == 0 { 1.0 } else { 0.0 }, 0.0));
        // Code with x_l(0) = known values; choose symbols offset so each term errs equally.
        let phases = vec![0.0; l * n_tx];
        let x = Waveform::constant_modulus(phases, 1.0);
        let synth = synthesized_stream(&x, &CVector::from_fn(n_tx, |j, _| channel[(0, j)]), l);
        let delta = 0.05f64;
        let s = CVector::from_fn(l, |idx, _| synth[idx] - Complex64::new(delta, 0.0));
        let psi: f64 = (0..l).map(|idx| (synth[idx] - s[idx]).norm_sqr()).sum();
        let spec = CommSpec::new(channel, CMatrix::from_fn(1, l, |_, j| s[j]), vec![psi], vec![0.3]).unwrap();
        let (_, rate, floor) = comm_sinr_and_rate(&x, &spec, 0);
        assert!((rate - floor).abs() < 1e-12);
    }

    #[test]
    fn demodulate_ties_break_low() {
        let pts = [Complex64::new(-1.0, 0.0), Complex64::new(1.0, 0.0)];
        assert_eq!(demodulate(Complex64::new(0.0, 0.0), &pts), 0);
        assert_eq!(demodulate(pts[1], &pts), 1);
    }

    #[test]
    fn demodulate_recovers_within_half_min_distance() {
        let pts = Constellation::Qam8.points();
        let min_d = {
            let mut d = f64::INFINITY;
            for i in 0..pts.len() {
                for j in 0..i {
                    d = d.min((pts[i] - pts[j]).norm());
                }
            }
            d
        };
        let mut rng = substream(9, DOMAIN_SER, 0);
        for _ in 0..200 {
            let idx = rng.gen_range(0..pts.len());
            let r = 0.49 * min_d * rng.gen::<f64>();
            let ang = rng.gen_range(0.0..std::f64::consts::TAU);
            let perturbed = pts[idx] + Complex64::from_polar(r, ang);
            assert_eq!(demodulate(perturbed, &pts), idx);
        }
    }
}
