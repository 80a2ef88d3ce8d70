//! Radar-side signal model: uniform-linear-array steering, the per-subpulse
//! target/interference operator, interference-plus-noise covariance, SINR, and
//! beampattern evaluation.
//!
//! The code vector x stacks subpulses: x[l·N_T + n] is subpulse l at transmit
//! element n, i.e. x = vec(X) where the columns of the N_T×L matrix X are the
//! subpulses. The stacked operator for direction θ acts blockwise per subpulse as
//! a_R(θ)·(a_T^⊤(θ)·x_l), which this module never materializes.

use crate::error::{Error, Result};
use crate::linalg::LowRankPlusIdentity;
use crate::{CVector, Complex64};
use rand::Rng;

/// Transmit/receive uniform linear array geometry.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ArrayConfig {
    pub n_tx: usize,
    pub n_rx: usize,
    pub spacing_wavelengths: f64,
}

impl ArrayConfig {
    pub fn new(n_tx: usize, n_rx: usize, spacing_wavelengths: f64) -> Result<Self> {
        if n_tx < 1 || n_rx < 1 {
            return Err(Error::InvalidParameter("element counts must be at least 1".into()));
        }
        if !(spacing_wavelengths > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "element spacing must be positive, got {spacing_wavelengths}"
            )));
        }
        Ok(Self { n_tx, n_rx, spacing_wavelengths })
    }
}

/// Target/interference geometry, power levels, and transmit resources.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub array: ArrayConfig,
    pub target_angle_deg: f64,
    /// Target power σ₀² (linear).
    pub target_power: f64,
    /// (angle in degrees, power linear) per interference source.
    pub interferers: Vec<(f64, f64)>,
    /// Receiver noise power σ_n² (linear).
    pub noise_power: f64,
    /// Total transmit energy e_T.
    pub total_energy: f64,
    /// Code length L (subpulses).
    pub code_length: usize,
}

impl Scenario {
    pub fn new(
        array: ArrayConfig,
        target_angle_deg: f64,
        target_power: f64,
        interferers: Vec<(f64, f64)>,
        noise_power: f64,
        total_energy: f64,
        code_length: usize,
    ) -> Result<Self> {
        check_angle(target_angle_deg)?;
        for &(angle, power) in &interferers {
            check_angle(angle)?;
            if angle == target_angle_deg {
                return Err(Error::InvalidParameter(format!(
                    "interferer direction {angle} deg coincides with the target direction"
                )));
            }
            if !(power > 0.0) {
                return Err(Error::InvalidParameter("interferer powers must be positive".into()));
            }
        }
        if !(target_power > 0.0) || !(noise_power > 0.0) || !(total_energy > 0.0) {
            return Err(Error::InvalidParameter("powers and energy must be positive".into()));
        }
        if code_length < 1 {
            return Err(Error::InvalidParameter("code length must be at least 1".into()));
        }
        Ok(Self {
            array,
            target_angle_deg,
            target_power,
            interferers,
            noise_power,
            total_energy,
            code_length,
        })
    }

    /// Code vector length L·N_T.
    pub fn code_len(&self) -> usize {
        self.code_length * self.array.n_tx
    }

    /// Filter length L·N_R.
    pub fn filter_len(&self) -> usize {
        self.code_length * self.array.n_rx
    }

    /// Per-sample power p_s = e_T/(L·N_T).
    pub fn sample_power(&self) -> f64 {
        self.total_energy / self.code_len() as f64
    }

    /// Chirp reference code: phase π·k²/(L·N_T) at sample k, constant modulus.
    pub fn lfm(&self) -> Waveform {
        let n = self.code_len();
        let phases = (0..n).map(|k| std::f64::consts::PI * (k * k) as f64 / n as f64).collect();
        Waveform::constant_modulus(phases, self.sample_power())
    }

    /// Constant-modulus code with independent uniform phases.
    pub fn random_cm<R: Rng>(&self, rng: &mut R) -> Waveform {
        let n = self.code_len();
        let phases = (0..n).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect();
        Waveform::constant_modulus(phases, self.sample_power())
    }
}

/// The default desk-scale experiment configuration: 16×8 half-wavelength arrays,
/// target at 20° with unit power, four 30 dB interferers at {−40°, −20°, 40°, 50°},
/// unit noise power, e_T = 20, L = 20.
impl Default for Scenario {
    fn default() -> Self {
        Scenario::new(
            ArrayConfig::new(16, 8, 0.5).unwrap(),
            20.0,
            1.0,
            vec![(-40.0, 1000.0), (-20.0, 1000.0), (40.0, 1000.0), (50.0, 1000.0)],
            1.0,
            20.0,
            20,
        )
        .unwrap()
    }
}

/// Phase-parameterized transmit code. Constant-modulus codes share one stored
/// amplitude, so |x(k)| = √p_s holds exactly by construction; the per-sample
/// variant carries the magnitudes of peak-constrained codes.
#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    phases: Vec<f64>,
    amplitude: Amplitude,
}

#[derive(Clone, Debug, PartialEq)]
enum Amplitude {
    Uniform(f64),
    PerSample(Vec<f64>),
}

impl Waveform {
    pub fn constant_modulus(phases: Vec<f64>, sample_power: f64) -> Self {
        assert!(sample_power > 0.0);
        Self { phases, amplitude: Amplitude::Uniform(sample_power.sqrt()) }
    }

    pub fn with_magnitudes(phases: Vec<f64>, magnitudes: Vec<f64>) -> Self {
        assert_eq!(phases.len(), magnitudes.len());
        Self { phases, amplitude: Amplitude::PerSample(magnitudes) }
    }

    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn is_constant_modulus(&self) -> bool {
        matches!(self.amplitude, Amplitude::Uniform(_))
    }

    pub fn magnitude(&self, k: usize) -> f64 {
        match &self.amplitude {
            Amplitude::Uniform(a) => *a,
            Amplitude::PerSample(m) => m[k],
        }
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.magnitude(k)).collect()
    }

    pub fn sample(&self, k: usize) -> Complex64 {
        Complex64::from_polar(self.magnitude(k), self.phases[k])
    }

    pub fn to_vector(&self) -> CVector {
        CVector::from_fn(self.len(), |k, _| self.sample(k))
    }

    pub fn energy(&self) -> f64 {
        (0..self.len()).map(|k| self.magnitude(k).powi(2)).sum()
    }
}

/// Receive filter taps, length L·N_R.
#[derive(Clone, Debug)]
pub struct Filter {
    pub weights: CVector,
}

impl Filter {
    pub fn new(weights: CVector) -> Result<Self> {
        if !weights.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
            return Err(Error::InvalidInput("filter weights must be finite".into()));
        }
        if weights.iter().all(|v| v.re == 0.0 && v.im == 0.0) {
            return Err(Error::InvalidInput("filter weights must not all be zero".into()));
        }
        Ok(Self { weights })
    }
}

fn check_angle(angle_deg: f64) -> Result<()> {
    if !(angle_deg.abs() < 90.0) {
        return Err(Error::InvalidAngle(angle_deg));
    }
    Ok(())
}

/// ULA steering vector: element k responds with phase 2π·spacing·k·sin(θ).
pub fn steering(n_elems: usize, angle_deg: f64, spacing_wavelengths: f64) -> Result<CVector> {
    check_angle(angle_deg)?;
    let step = std::f64::consts::TAU * spacing_wavelengths * angle_deg.to_radians().sin();
    Ok(CVector::from_fn(n_elems, |k, _| Complex64::from_polar(1.0, step * k as f64)))
}

/// Applies the stacked direction-θ operator to a code vector, blockwise per
/// subpulse: output block l = a_R·(a_T^⊤·x_l). Output length L·N_R.
pub fn apply_steering_op(x: &CVector, angle_deg: f64, scenario: &Scenario) -> Result<CVector> {
    let (l, n_tx, n_rx) = (scenario.code_length, scenario.array.n_tx, scenario.array.n_rx);
    if x.len() != l * n_tx {
        return Err(Error::DimensionMismatch { what: "code vector", expected: l * n_tx, got: x.len() });
    }
    let a_t = steering(n_tx, angle_deg, scenario.array.spacing_wavelengths)?;
    let a_r = steering(n_rx, angle_deg, scenario.array.spacing_wavelengths)?;
    let mut out = CVector::zeros(l * n_rx);
    for block in 0..l {
        let s: Complex64 = (0..n_tx).map(|n| a_t[n] * x[block * n_tx + n]).sum();
        for k in 0..n_rx {
            out[block * n_rx + k] = a_r[k] * s;
        }
    }
    Ok(out)
}

/// Adjoint of `apply_steering_op`: input length L·N_R, output length L·N_T,
/// block l = conj(a_T)·(a_R†·w_l).
pub fn apply_steering_op_adjoint(w: &CVector, angle_deg: f64, scenario: &Scenario) -> Result<CVector> {
    let (l, n_tx, n_rx) = (scenario.code_length, scenario.array.n_tx, scenario.array.n_rx);
    if w.len() != l * n_rx {
        return Err(Error::DimensionMismatch { what: "filter vector", expected: l * n_rx, got: w.len() });
    }
    let a_t = steering(n_tx, angle_deg, scenario.array.spacing_wavelengths)?;
    let a_r = steering(n_rx, angle_deg, scenario.array.spacing_wavelengths)?;
    let mut out = CVector::zeros(l * n_tx);
    for block in 0..l {
        let t: Complex64 = (0..n_rx).map(|k| a_r[k].conj() * w[block * n_rx + k]).sum();
        for n in 0..n_tx {
            out[block * n_tx + n] = a_t[n].conj() * t;
        }
    }
    Ok(out)
}

/// Interference-plus-noise covariance of the filter input for a given code:
/// σ_n²·I + Σ_q σ_q²·g_q g_q† with g_q the stacked interferer response to x.
pub fn interference_cov(x: &Waveform, scenario: &Scenario) -> Result<LowRankPlusIdentity> {
    let xv = x.to_vector();
    let mut columns = Vec::with_capacity(scenario.interferers.len());
    let mut weights = Vec::with_capacity(scenario.interferers.len());
    for &(angle, power) in &scenario.interferers {
        columns.push(apply_steering_op(&xv, angle, scenario)?);
        weights.push(power);
    }
    Ok(LowRankPlusIdentity::new(scenario.filter_len(), scenario.noise_power, columns, weights))
}

/// Radar output SINR for a code/filter pair:
/// σ₀²·|w†·A(θ₀)·x|² over w†·(interference covariance)·w.
pub fn sinr(x: &Waveform, w: &Filter, scenario: &Scenario) -> Result<f64> {
    let target = apply_steering_op(&x.to_vector(), scenario.target_angle_deg, scenario)?;
    let cov = interference_cov(x, scenario)?;
    let num = scenario.target_power * w.weights.dotc(&target).norm_sqr();
    let denom = cov.quad_form(&w.weights);
    Ok(num / denom)
}

/// SINR under the best filter for this code, computed by solving against the
/// structured covariance rather than maximizing over filters explicitly.
pub fn sinr_optimal(x: &Waveform, scenario: &Scenario) -> Result<f64> {
    let target = apply_steering_op(&x.to_vector(), scenario.target_angle_deg, scenario)?;
    let cov = interference_cov(x, scenario)?;
    let solved = crate::linalg::woodbury_solve(&cov, &target)?;
    Ok(scenario.target_power * target.dotc(&solved).re)
}

/// Joint transmit/receive pattern over an angle grid.
pub struct Beampattern {
    pub angles_deg: Vec<f64>,
    /// 10·log10(|w†·A(θ)·x|² + 1e-30).
    pub power_db: Vec<f64>,
    /// Same, shifted so the grid peak sits at 0 dB.
    pub normalized_db: Vec<f64>,
}

const BEAMPATTERN_FLOOR: f64 = 1e-30;

pub fn beampattern(x: &Waveform, w: &Filter, angles_deg: &[f64], scenario: &Scenario) -> Result<Beampattern> {
    if angles_deg.is_empty() {
        return Err(Error::InvalidInput("beampattern grid must be nonempty".into()));
    }
    let xv = x.to_vector();
    let mut power_db = Vec::with_capacity(angles_deg.len());
    for &angle in angles_deg {
        let response = apply_steering_op(&xv, angle, scenario)?;
        let p = w.weights.dotc(&response).norm_sqr();
        power_db.push(10.0 * (p + BEAMPATTERN_FLOOR).log10());
    }
    let peak = power_db.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let normalized_db = power_db.iter().map(|p| p - peak).collect();
    Ok(Beampattern { angles_deg: angles_deg.to_vec(), power_db, normalized_db })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn steering_broadside_is_all_ones() {
        let v = steering(8, 0.0, 0.5).unwrap();
        for k in 0..8 {
            assert!((v[k] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn steering_phase_convention() {
        // Element 1 at 20 degrees, half-wavelength spacing: phase π·sin(20°).
        let v = steering(4, 20.0, 0.5).unwrap();
        let expected = 1.074_487_969_651_649_05_f64;
        assert!((v[1].arg() - expected).abs() < 1e-12);
        assert!((v[1].norm() - 1.0).abs() < 1e-15);
        assert!((v[0] - Complex64::new(1.0, 0.0)).norm() == 0.0);
    }

    #[test]
    fn steering_endfire_limit() {
        let v = steering(2, 90.0 - 1e-9, 0.5).unwrap();
        assert!((v[1] - Complex64::new(-1.0, 0.0)).norm() < 1e-6);
        assert!(matches!(steering(2, 90.0, 0.5), Err(Error::InvalidAngle(_))));
        assert!(matches!(steering(2, -95.0, 0.5), Err(Error::InvalidAngle(_))));
    }

    fn tiny_scenario(l: usize, n_tx: usize, n_rx: usize) -> Scenario {
        Scenario::new(
            ArrayConfig::new(n_tx, n_rx, 0.5).unwrap(),
            10.0,
            1.0,
            vec![],
            1.0,
            2.0,
            l,
        )
        .unwrap()
    }

    #[test]
    fn steering_op_scalar_case() {
        let sc = tiny_scenario(1, 1, 1);
        let x = CVector::from_vec(vec![Complex64::new(0.3, -0.4)]);
        let y = apply_steering_op(&x, 10.0, &sc).unwrap();
        // Single elements: both steering entries are 1, so the output is x itself.
        assert!((y[0] - x[0]).norm() < 1e-15);
    }

    #[test]
    fn steering_op_annihilates_orthogonal_subpulse() {
        let sc = tiny_scenario(1, 2, 3);
        let a_t = steering(2, 10.0, 0.5).unwrap();
        // x with a_T^⊤ x = 0.
        let x = CVector::from_vec(vec![a_t[1], -a_t[0]]);
        let y = apply_steering_op(&x, 10.0, &sc).unwrap();
        assert!(y.norm() < 1e-15);
    }

    #[test]
    fn adjoint_identity() {
        let sc = tiny_scenario(3, 4, 2);
        let x = CVector::from_fn(12, |k, _| Complex64::new(0.1 * k as f64 - 0.5, 0.3 - 0.05 * k as f64));
        let w = CVector::from_fn(6, |k, _| Complex64::new((k as f64).cos(), (k as f64 * 0.7).sin()));
        let ax = apply_steering_op(&x, -35.0, &sc).unwrap();
        let aw = apply_steering_op_adjoint(&w, -35.0, &sc).unwrap();
        let lhs = w.dotc(&ax);
        let rhs = aw.dotc(&x);
        assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn sinr_is_filter_scale_invariant() {
        let sc = Scenario::default();
        let x = sc.lfm();
        let w0 = apply_steering_op(&x.to_vector(), sc.target_angle_deg, &sc).unwrap();
        let w1 = Filter::new(w0.clone()).unwrap();
        let w2 = Filter::new(w0 * Complex64::new(3.0, 4.0)).unwrap();
        let s1 = sinr(&x, &w1, &sc).unwrap();
        let s2 = sinr(&x, &w2, &sc).unwrap();
        assert!((s1 - s2).abs() <= 1e-12 * s1.abs());
    }

    #[test]
    fn sinr_matched_filter_no_interference() {
        let sc = tiny_scenario(2, 3, 2);
        let x = Waveform::constant_modulus(vec![0.1, 0.9, -0.3, 0.7, 1.1, -1.2], sc.sample_power());
        let target = apply_steering_op(&x.to_vector(), sc.target_angle_deg, &sc).unwrap();
        let w = Filter::new(target.clone()).unwrap();
        let got = sinr(&x, &w, &sc).unwrap();
        let expected = sc.target_power * target.norm_squared() / sc.noise_power;
        assert!((got - expected).abs() < 1e-10 * expected);
        let opt = sinr_optimal(&x, &sc).unwrap();
        assert!((opt - expected).abs() < 1e-10 * expected);
    }

    #[test]
    fn constant_modulus_exact_by_storage() {
        let sc = Scenario::default();
        let x = sc.lfm();
        let amp = sc.sample_power().sqrt();
        for k in 0..x.len() {
            assert_eq!(x.magnitude(k), amp);
        }
        let rel = (x.energy() - sc.total_energy).abs() / sc.total_energy;
        assert!(rel < 1e-12);
    }

    #[test]
    fn beampattern_peaks_at_match() {
        let sc = tiny_scenario(2, 4, 3);
        // Transmit phases conjugate-matched to the target steering vector, so both
        // ends of the pattern align at the target and the joint peak is there.
        let a_t = steering(sc.array.n_tx, sc.target_angle_deg, 0.5).unwrap();
        let mut phases = Vec::with_capacity(sc.code_len());
        for _ in 0..sc.code_length {
            phases.extend((0..sc.array.n_tx).map(|n| -a_t[n].arg()));
        }
        let x = Waveform::constant_modulus(phases, sc.sample_power());
        let w = Filter::new(apply_steering_op(&x.to_vector(), sc.target_angle_deg, &sc).unwrap()).unwrap();
        let grid: Vec<f64> = (-89..=89).map(|a| a as f64).collect();
        let bp = beampattern(&x, &w, &grid, &sc).unwrap();
        let (argmax, _) = bp
            .power_db
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &p)| if p > acc.1 { (i, p) } else { acc });
        assert_eq!(grid[argmax], sc.target_angle_deg);
        let peak = bp.normalized_db.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(peak.abs() < 1e-12);
        assert!(bp.power_db.iter().all(|p| p.is_finite()));
    }
}
