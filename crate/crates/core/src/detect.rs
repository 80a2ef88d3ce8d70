//! Detection performance for the Gaussian linear detector: P_D as a function of
//! output SINR at a fixed false-alarm probability.

use crate::error::{Error, Result};

/// Complementary error function. Delegates to a sub-ulp double-precision kernel for
/// x ≥ 0 and reflects for x < 0, so erfc(-x) + erfc(x) recovers 2 at machine
/// precision.
pub fn erfc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else if x < 0.0 {
        2.0 - libm::erfc(-x)
    } else {
        libm::erfc(x)
    }
}

/// Inverse of [`erfc`] on (0, 2). A rational-approximation initial guess is polished
/// with Newton steps against `erfc` itself until the residual reaches relative
/// machine precision, so erfc(erfcinv(p)) round-trips to ~1e-15 even in the far
/// tails.
pub fn erfcinv(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 2.0) {
        return Err(Error::Domain(format!("erfcinv argument {p} outside (0, 2)")));
    }
    let mut z = statrs::function::erf::erfc_inv(p);
    if !z.is_finite() {
        // Far-tail asymptotic start: erfc(z) ≈ exp(-z²)/(z√π).
        let q = if p < 1.0 { p } else { 2.0 - p };
        let mut guess = (-(q * std::f64::consts::PI.sqrt()).ln()).max(1.0).sqrt();
        for _ in 0..4 {
            guess = ((1.0 / (q * std::f64::consts::PI.sqrt() * guess)).ln()).max(1.0).sqrt();
        }
        z = if p < 1.0 { guess } else { -guess };
    }
    let two_over_sqrt_pi = 2.0 / std::f64::consts::PI.sqrt();
    for _ in 0..8 {
        let r = erfc(z) - p;
        if r == 0.0 {
            break;
        }
        // d/dz erfc(z) = -2/√π · exp(-z²)
        let step = r / (two_over_sqrt_pi * (-z * z).exp());
        z += step;
        if step.abs() <= 1e-16 * z.abs().max(1.0) {
            break;
        }
    }
    Ok(z)
}

/// Detection probability of the coherent detector at output SINR `sinr` (linear)
/// and false-alarm probability `pfa`: P_D = ½·erfc(erfcinv(2·pfa) − √sinr).
pub fn detection_probability(sinr: f64, pfa: f64) -> Result<f64> {
    if !(sinr.is_finite() && sinr >= 0.0) {
        return Err(Error::Domain(format!("SINR {sinr} must be finite and non-negative")));
    }
    if !(pfa > 0.0 && pfa < 1.0) {
        return Err(Error::Domain(format!("false-alarm probability {pfa} outside (0, 1)")));
    }
    let z = erfcinv(2.0 * pfa)?;
    Ok(0.5 * erfc(z - sinr.sqrt()))
}

/// P_D sampled over a grid of SINR values (dB) at fixed P_FA.
#[derive(Clone, Debug)]
pub struct DetectionCurve {
    pub pfa: f64,
    pub sinr_db: Vec<f64>,
    pub p_d: Vec<f64>,
}

pub fn detection_curve(pfa: f64, sinr_db: &[f64]) -> Result<DetectionCurve> {
    let p_d = sinr_db
        .iter()
        .map(|&s| detection_probability(crate::from_db(s), pfa))
        .collect::<Result<Vec<f64>>>()?;
    Ok(DetectionCurve { pfa, sinr_db: sinr_db.to_vec(), p_d })
}
