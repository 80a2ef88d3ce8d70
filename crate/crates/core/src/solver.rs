//! Joint code/filter optimizer.
//!
//! Structure: an outer cyclic loop alternates the closed-form filter update with a
//! waveform update at fixed filter. The waveform step is a fractional program
//! (quadratic ratio over the code) handled by ratio ascent: each step fixes the
//! current ratio g and maximizes x†(R₀ − g·R₁)x over the feasible codes. After a
//! diagonal shift makes that quadratic PSD, the shifted problem splits by ADMM into
//! a fixed-magnitude quadratic piece (solved by majorization-minimization), a
//! closed-form scaled update, and per-user ball projections.
//!
//! R₀ and R₁ are never materialized: both are low-rank outer products of steering
//! responses plus a scaled identity, so every operator here works through matvecs
//! that cost O(n·rank) instead of O(n²). Dense forms exist as reference paths and
//! are checked against the structured ones by tests.

use crate::comms::{self, CommSpec};
use crate::error::{Error, Result};
use crate::linalg::{hermitian_eig, woodbury_solve, HermitianMatrix};
use crate::model::{self, Filter, Scenario, Waveform};
use crate::{CMatrix, CVector, Complex64};
use std::time::Instant;

/// Relative slack on λ_max when building the majorizer, covering eigenvalue
/// round-off so the majorization inequality survives in floating point.
const LAMBDA_SLACK: f64 = 1e-12;

/// Relative tolerance treated as "no ascent" when monitoring the ratio sequence.
const ASCENT_SLACK: f64 = 1e-6;

/// Relative slack on the per-user budgets when reporting feasibility.
const FEASIBILITY_SLACK: f64 = 1e-3;

/// Ratio of T's spectral norm to the channel Gram's top eigenvalue when both
/// consensus blocks are present; the free filter scale is spent on this balance.
const T_BALANCE: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ConstraintMode {
    ConstantModulus,
    /// Per-antenna peak-to-average power ratio cap ρ ∈ [1, L]; ρ = 1 collapses to
    /// the constant-modulus constraint and is routed through the same projection.
    Papr(f64),
}

#[derive(Clone, Debug)]
pub struct SolverParams {
    /// ADMM penalty weight; must exceed 2 for the scaled update to be a minimizer.
    /// Smaller values push the code harder per splitting pass at the cost of a
    /// slower consensus contraction (rate |1 − μ/(μ−2)|), so the default sits
    /// close to the μ = 4 stability knee.
    pub mu: f64,
    pub eps_primal: f64,
    pub eps_dual: f64,
    /// Relative SINR change that stops the outer filter/code alternation.
    pub tol_outer: f64,
    /// Relative change that stops both the ratio-ascent loop and the MM loop.
    pub tol_inner: f64,
    pub max_outer: usize,
    pub max_dinkelbach: usize,
    pub max_admm: usize,
    pub max_mm: usize,
    /// Relative margin pushing the diagonal shift strictly below λ_min.
    pub beta_margin: f64,
    pub constraint_mode: ConstraintMode,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            mu: 4.2,
            eps_primal: 1e-4,
            eps_dual: 1e-2,
            tol_outer: 1e-5,
            tol_inner: 1e-5,
            max_outer: 200,
            max_dinkelbach: 50,
            max_admm: 2000,
            max_mm: 500,
            beta_margin: 1e-10,
            constraint_mode: ConstraintMode::ConstantModulus,
        }
    }
}

impl SolverParams {
    pub fn validate(&self, code_length: usize) -> Result<()> {
        if !(self.mu > 2.0 && self.mu.is_finite()) {
            return Err(Error::InvalidParameter(format!("penalty mu = {} must be finite and > 2", self.mu)));
        }
        for (name, v) in [
            ("eps_primal", self.eps_primal),
            ("eps_dual", self.eps_dual),
            ("tol_outer", self.tol_outer),
            ("tol_inner", self.tol_inner),
            ("beta_margin", self.beta_margin),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} = {v} must be finite and positive")));
            }
        }
        for (name, v) in [
            ("max_outer", self.max_outer),
            ("max_dinkelbach", self.max_dinkelbach),
            ("max_admm", self.max_admm),
            ("max_mm", self.max_mm),
        ] {
            if v < 1 {
                return Err(Error::InvalidParameter(format!("{name} must be at least 1")));
            }
        }
        if let ConstraintMode::Papr(rho) = self.constraint_mode {
            if !(rho >= 1.0 && rho <= code_length as f64) {
                return Err(Error::InvalidParameter(format!(
                    "papr bound {rho} must lie in [1, L] = [1, {code_length}]"
                )));
            }
        }
        Ok(())
    }
}

/// Hermitian PSD operator abstraction shared by the dense reference path and the
/// shifted low-rank fast path.
pub trait QuadraticForm {
    fn dim(&self) -> usize;
    fn apply(&self, x: &CVector) -> CVector;
    fn materialize(&self) -> HermitianMatrix;
    /// Largest eigenvalue, or a certified upper bound on it.
    fn lambda_max_upper(&self) -> Result<f64>;
}

impl QuadraticForm for HermitianMatrix {
    fn dim(&self) -> usize {
        self.n()
    }

    fn apply(&self, x: &CVector) -> CVector {
        self.matvec(x)
    }

    fn materialize(&self) -> HermitianMatrix {
        self.clone()
    }

    fn lambda_max_upper(&self) -> Result<f64> {
        let (evals, _) = hermitian_eig(self)?;
        Ok(*evals.last().unwrap())
    }
}

/// shift·I + V·diag(values)·V† with V orthonormal (n×r, r ≤ n). Eigenvalues are
/// shift + values_i plus shift itself with multiplicity n − r.
#[derive(Clone, Debug)]
pub struct ShiftedLowRank {
    shift: f64,
    basis: CMatrix,
    values: Vec<f64>,
}

impl ShiftedLowRank {
    pub fn new(shift: f64, basis: CMatrix, values: Vec<f64>) -> Self {
        assert_eq!(basis.ncols(), values.len());
        assert!(basis.ncols() <= basis.nrows());
        Self { shift, basis, values }
    }

    pub fn rank(&self) -> usize {
        self.values.len()
    }

    pub fn lambda_min(&self) -> f64 {
        let inner = self.values.iter().cloned().fold(f64::INFINITY, f64::min);
        if self.rank() < self.dim() {
            self.shift + inner.min(0.0)
        } else {
            self.shift + inner
        }
    }

    pub fn lambda_max(&self) -> f64 {
        let inner = self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if self.rank() < self.dim() {
            self.shift + inner.max(0.0)
        } else {
            self.shift + inner
        }
    }

    /// Principal square root; requires every eigenvalue to be non-negative.
    pub fn sqrt(&self) -> Result<ShiftedLowRank> {
        if self.lambda_min() < 0.0 {
            return Err(Error::NotPsd { min_eig: self.lambda_min(), tol: 0.0 });
        }
        if self.rank() < self.dim() {
            let root = self.shift.sqrt();
            let values = self.values.iter().map(|&v| (self.shift + v).sqrt() - root).collect();
            Ok(ShiftedLowRank { shift: root, basis: self.basis.clone(), values })
        } else {
            // Full-rank basis: the identity part never acts alone.
            let values = self.values.iter().map(|&v| (self.shift + v).sqrt()).collect();
            Ok(ShiftedLowRank { shift: 0.0, basis: self.basis.clone(), values })
        }
    }

    pub fn quad_form(&self, x: &CVector) -> f64 {
        let proj = self.basis.ad_mul(x);
        let low: f64 = (0..self.rank()).map(|i| self.values[i] * proj[i].norm_sqr()).sum();
        self.shift * x.norm_squared() + low
    }

    /// The same operator scaled by c > 0; eigenvalues scale linearly.
    pub fn scaled(&self, c: f64) -> ShiftedLowRank {
        assert!(c > 0.0 && c.is_finite());
        ShiftedLowRank {
            shift: c * self.shift,
            basis: self.basis.clone(),
            values: self.values.iter().map(|&v| c * v).collect(),
        }
    }
}

impl QuadraticForm for ShiftedLowRank {
    fn dim(&self) -> usize {
        self.basis.nrows()
    }

    fn apply(&self, x: &CVector) -> CVector {
        let mut proj = self.basis.ad_mul(x);
        for i in 0..self.rank() {
            proj[i] *= self.values[i];
        }
        let mut y = &self.basis * proj;
        y.axpy(Complex64::new(self.shift, 0.0), x, Complex64::new(1.0, 0.0));
        y
    }

    fn materialize(&self) -> HermitianMatrix {
        let mut h = HermitianMatrix::scaled_identity(self.dim(), self.shift);
        for (i, &v) in self.values.iter().enumerate() {
            h.add_scaled_outer(v, &CVector::from_fn(self.dim(), |k, _| self.basis[(k, i)]));
        }
        h
    }

    fn lambda_max_upper(&self) -> Result<f64> {
        Ok(self.lambda_max())
    }
}

/// Factored form of the SINR ratio at a fixed filter: numerator |u₀†x|², denominator
/// Σ_q w_q·|u_q†x|² + ident·‖x‖², all steering responses pulled back to code space.
#[derive(Clone, Debug)]
pub struct RatioFactors {
    u0: CVector,
    interferers: Vec<CVector>,
    weights: Vec<f64>,
    ident: f64,
}

impl RatioFactors {
    pub fn dim(&self) -> usize {
        self.u0.len()
    }

    /// Numerator matrix u₀u₀† in dense form.
    pub fn r0_dense(&self) -> HermitianMatrix {
        let mut h = HermitianMatrix::zeros(self.dim());
        h.add_scaled_outer(1.0, &self.u0);
        h
    }

    /// Denominator matrix Σ_q w_q·u_q u_q† + ident·I in dense form.
    pub fn r1_dense(&self) -> HermitianMatrix {
        let mut h = HermitianMatrix::scaled_identity(self.dim(), self.ident);
        for (u, &w) in self.interferers.iter().zip(&self.weights) {
            h.add_scaled_outer(w, u);
        }
        h
    }

    pub fn ratio(&self, x: &CVector) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { what: "code vector", expected: self.dim(), got: x.len() });
        }
        let num = self.u0.dotc(x).norm_sqr();
        let mut den = self.ident * x.norm_squared();
        for (u, &w) in self.interferers.iter().zip(&self.weights) {
            den += w * u.dotc(x).norm_sqr();
        }
        if !(den > 0.0) {
            return Err(Error::DegenerateInput(format!("ratio denominator {den} is not positive")));
        }
        Ok(num / den)
    }
}

/// Ratio factors for the current filter: u₀ and u_q are the adjoint steering
/// responses of w at the target and interferer angles; ident = σ_n²·‖w‖²/e_T folds
/// the noise term into code space using the fixed transmit energy.
pub fn ratio_factors(w: &Filter, scenario: &Scenario) -> Result<RatioFactors> {
    let u0 = model::apply_steering_op_adjoint(&w.weights, scenario.target_angle_deg, scenario)?;
    let mut interferers = Vec::with_capacity(scenario.interferers.len());
    let mut weights = Vec::with_capacity(scenario.interferers.len());
    for &(angle, power) in &scenario.interferers {
        interferers.push(model::apply_steering_op_adjoint(&w.weights, angle, scenario)?);
        weights.push(power);
    }
    let ident = scenario.noise_power * w.weights.norm_squared() / scenario.total_energy;
    Ok(RatioFactors { u0, interferers, weights, ident })
}

/// Rayleigh-style ratio x†R₀x / x†R₁x from dense matrices (reference form).
pub fn dinkelbach_ratio(x: &CVector, r0: &HermitianMatrix, r1: &HermitianMatrix) -> Result<f64> {
    if x.len() != r0.n() || x.len() != r1.n() {
        return Err(Error::DimensionMismatch { what: "code vector", expected: r0.n(), got: x.len() });
    }
    let den = r1.quad_form(x);
    if !(den > 0.0) {
        return Err(Error::DegenerateInput(format!("ratio denominator {den} is not positive")));
    }
    Ok(r0.quad_form(x) / den)
}

/// Best receive filter for a fixed code: solves the structured covariance against
/// the target response (matched filter whitened by interference plus noise).
pub fn update_filter(x: &Waveform, scenario: &Scenario) -> Result<Filter> {
    let target = model::apply_steering_op(&x.to_vector(), scenario.target_angle_deg, scenario)?;
    let cov = model::interference_cov(x, scenario)?;
    Filter::new(woodbury_solve(&cov, &target)?)
}

/// Dense reference: T = R₀ − g·R₁ − β·I with β strictly below λ_min(R₀ − g·R₁).
/// Returns (T, β).
pub fn build_t_dense(factors: &RatioFactors, g: f64, beta_margin: f64) -> Result<(HermitianMatrix, f64)> {
    let mut t = HermitianMatrix::scaled_identity(factors.dim(), -g * factors.ident);
    t.add_scaled_outer(1.0, &factors.u0);
    for (u, &w) in factors.interferers.iter().zip(&factors.weights) {
        t.add_scaled_outer(-g * w, u);
    }
    let (evals, _) = hermitian_eig(&t)?;
    let lam_min = evals[0];
    let beta = lam_min - beta_margin * lam_min.abs().max(1.0);
    t.add_scaled_identity(-beta);
    Ok((t, beta))
}

/// Structured form of the same shift: R₀ − g·R₁ is a rank-(Q+1) perturbation of
/// −g·ident·I, so its spectrum comes from a (Q+1)-dimensional projected eigensolve.
/// Returns (T, T^{1/2}, β) with both operators sharing one orthonormal basis.
pub fn build_t_structured(
    factors: &RatioFactors,
    g: f64,
    beta_margin: f64,
) -> Result<(ShiftedLowRank, ShiftedLowRank, f64)> {
    let n = factors.dim();
    let r0 = 1 + factors.interferers.len();
    let mut u = CMatrix::zeros(n, r0);
    u.column_mut(0).copy_from(&factors.u0);
    let mut d = vec![1.0];
    for (j, (col, &w)) in factors.interferers.iter().zip(&factors.weights).enumerate() {
        u.column_mut(j + 1).copy_from(col);
        d.push(-g * w);
    }
    let qr = nalgebra::linalg::QR::new(u);
    let q = qr.q();
    let r = qr.r();
    let k = q.ncols();
    // C = R·diag(d)·R† carries the entire non-identity spectrum.
    let mut rd = r.clone();
    for j in 0..r0 {
        let w = Complex64::new(d[j], 0.0);
        rd.column_mut(j).scale_mut(1.0);
        for i in 0..k {
            rd[(i, j)] *= w;
        }
    }
    let c_raw = &rd * r.adjoint();
    let c = HermitianMatrix::from_dense(&c_raw);
    let (m, p) = hermitian_eig(&c)?;
    let basis = &q * &p;
    let base = -g * factors.ident;
    let lam_min = if k < n { base + m[0].min(0.0) } else { base + m[0] };
    let beta = lam_min - beta_margin * lam_min.abs().max(1.0);
    let shift = base - beta;
    let t = ShiftedLowRank::new(shift, basis, m);
    let t_sqrt = t.sqrt()?;
    Ok((t, t_sqrt, beta))
}

/// N_T×N_T channel Gram Σ_m conj(h_m)·h_m^⊤; the stacked penalty operator applies
/// it once per subpulse block. None when there are no users.
pub fn channel_gram(spec: &CommSpec) -> Option<HermitianMatrix> {
    if spec.n_users() == 0 {
        return None;
    }
    let mut g = HermitianMatrix::zeros(spec.n_tx());
    for m in 0..spec.n_users() {
        g.add_scaled_outer(1.0, &CVector::from_fn(spec.n_tx(), |j, _| spec.channel[(m, j)].conj()));
    }
    Some(g)
}

fn gram_block_apply(gram: &CMatrix, x: &CVector, out: &mut CVector) {
    let k = gram.nrows();
    debug_assert_eq!(x.len() % k, 0);
    for base in (0..x.len()).step_by(k) {
        for i in 0..k {
            let mut acc = Complex64::new(0.0, 0.0);
            for j in 0..k {
                acc += gram[(i, j)] * x[base + j];
            }
            out[base + i] += acc;
        }
    }
}

/// y_l = h^⊤·x_l per subpulse block (transpose, not conjugated).
pub fn channel_apply(h: &CVector, x: &CVector, code_length: usize) -> CVector {
    let n_tx = h.len();
    debug_assert_eq!(x.len(), code_length * n_tx);
    CVector::from_fn(code_length, |l, _| {
        let base = l * n_tx;
        (0..n_tx).map(|n| h[n] * x[base + n]).sum()
    })
}

/// out_l += conj(h)·v_l per subpulse block (adjoint of `channel_apply`).
pub fn channel_adjoint_accumulate(out: &mut CVector, h: &CVector, v: &CVector) {
    let n_tx = h.len();
    debug_assert_eq!(out.len(), v.len() * n_tx);
    for (l, val) in v.iter().enumerate() {
        let base = l * n_tx;
        for n in 0..n_tx {
            out[base + n] += h[n].conj() * val;
        }
    }
}

/// Right-hand side of the fixed-magnitude subproblem:
/// b = T^{1/2}·(x̂ + ν) + Σ_m H_m†·(x̃_m + s_m + υ_m).
pub fn admm_rhs<T: QuadraticForm>(
    t_sqrt: &T,
    x_hat: &CVector,
    nu: &CVector,
    spec: &CommSpec,
    x_tilde: &[CVector],
    upsilon: &[CVector],
) -> CVector {
    let mut b = t_sqrt.apply(&(x_hat + nu));
    for m in 0..spec.n_users() {
        let combo = &x_tilde[m] + &spec.symbol_row(m) + &upsilon[m];
        channel_adjoint_accumulate(&mut b, &spec.channel_row(m), &combo);
    }
    b
}

/// Closed-form scaled update: x̂ = μ/(μ−2)·q minimizes −‖x̂‖² + (μ/2)‖q − x̂‖².
pub fn admm_step_xhat(q: &CVector, mu: f64) -> Result<CVector> {
    if !(mu > 2.0) {
        return Err(Error::InvalidParameter(format!("penalty mu = {mu} must exceed 2")));
    }
    Ok(q * Complex64::new(mu / (mu - 2.0), 0.0))
}

/// Euclidean projection onto the ball ‖x̃‖² ≤ budget; the bound holds exactly even
/// after rescaling round-off.
pub fn admm_step_xtilde(p: &CVector, budget: f64) -> CVector {
    assert!(budget > 0.0);
    let ns = p.norm_squared();
    if ns <= budget {
        return p.clone();
    }
    let mut out = p * Complex64::new((budget / ns).sqrt(), 0.0);
    let mut guard = 0;
    while out.norm_squared() > budget && guard < 4 {
        out *= Complex64::new((budget / out.norm_squared()).sqrt(), 0.0);
        guard += 1;
    }
    out
}

/// Magnitude layout for the fixed-magnitude subproblem.
#[derive(Clone, Debug)]
pub enum Projection {
    ConstantModulus { sample_power: f64 },
    /// Per-antenna peak and total-energy constraints; antenna n owns the strided
    /// samples {l·N_T + n}.
    PeakConstrained { n_tx: usize, peak_power: f64, block_energy: f64 },
}

impl Projection {
    /// Derived from the constraint mode and the (already validated) initial code.
    pub fn for_waveform(params: &SolverParams, x: &Waveform, n_tx: usize) -> Result<Projection> {
        match params.constraint_mode {
            ConstraintMode::ConstantModulus => {
                if !x.is_constant_modulus() {
                    return Err(Error::InvalidInput("initial code must be constant-modulus".into()));
                }
                Ok(Projection::ConstantModulus { sample_power: x.magnitude(0) * x.magnitude(0) })
            }
            ConstraintMode::Papr(rho) => {
                if x.len() % n_tx != 0 {
                    return Err(Error::DimensionMismatch { what: "code vector", expected: n_tx, got: x.len() });
                }
                let code_length = x.len() / n_tx;
                let block_energy = x.energy() / n_tx as f64;
                if rho == 1.0 {
                    // Identical to the constant-modulus branch, bit for bit.
                    return Ok(Projection::ConstantModulus { sample_power: block_energy / code_length as f64 });
                }
                Ok(Projection::PeakConstrained {
                    n_tx,
                    peak_power: rho * block_energy / code_length as f64,
                    block_energy,
                })
            }
        }
    }
}

/// Exact maximizer of Σ_l v_l·m_l over m_l ≥ 0, Σ m_l² = energy, m_l² ≤ peak:
/// clip-and-rescale water filling. Entries with v_l = 0 stay at zero unless every
/// positive entry caps, in which case the leftover energy spreads equally.
fn waterfill(v: &[f64], energy: f64, peak: f64) -> Vec<f64> {
    let l = v.len();
    debug_assert!(energy > 0.0 && peak > 0.0 && energy <= peak * l as f64 * (1.0 + 1e-9));
    let sqrt_peak = peak.sqrt();
    let mut capped = vec![false; l];
    let mut out = vec![0.0; l];
    loop {
        let mut s2 = 0.0;
        let mut ncap = 0usize;
        for i in 0..l {
            if capped[i] {
                ncap += 1;
            } else {
                s2 += v[i] * v[i];
            }
        }
        let free_energy = (energy - ncap as f64 * peak).max(0.0);
        if s2 == 0.0 {
            let zeros: Vec<usize> = (0..l).filter(|&i| !capped[i]).collect();
            if !zeros.is_empty() && free_energy > 0.0 {
                let m = (free_energy / zeros.len() as f64).sqrt();
                for i in zeros {
                    out[i] = m;
                }
            }
            break;
        }
        let t = (free_energy / s2).sqrt();
        let mut newly = false;
        for i in 0..l {
            if !capped[i] && v[i] > 0.0 && t * v[i] > sqrt_peak {
                capped[i] = true;
                newly = true;
            }
        }
        if !newly {
            for i in 0..l {
                if !capped[i] {
                    out[i] = t * v[i];
                }
            }
            break;
        }
    }
    for i in 0..l {
        if capped[i] {
            out[i] = sqrt_peak;
        }
    }
    out
}

/// Projection of one antenna block onto {‖m‖² = energy, |m_l|² ≤ ρ·energy/L}:
/// water-filled magnitudes aligned with the input phases (zero entries get phase 0).
pub fn papr_project(block: &CVector, rho: f64, energy: f64) -> Result<CVector> {
    let l = block.len();
    if l == 0 {
        return Err(Error::InvalidInput("empty block".into()));
    }
    if !(rho >= 1.0 && rho <= l as f64) {
        return Err(Error::InvalidParameter(format!("papr bound {rho} must lie in [1, {l}]")));
    }
    if !(energy > 0.0) {
        return Err(Error::InvalidParameter(format!("block energy {energy} must be positive")));
    }
    let peak = rho * energy / l as f64;
    let mags: Vec<f64> = block.iter().map(|v| v.norm()).collect();
    let filled = waterfill(&mags, energy, peak);
    Ok(CVector::from_fn(l, |i, _| Complex64::from_polar(filled[i], block[i].arg())))
}

#[derive(Clone, Debug)]
pub struct MmOutcome {
    pub x: Waveform,
    pub iterations: usize,
    pub objective: f64,
    /// Objective after the initial point and after each accepted iterate.
    pub trace: Vec<f64>,
}

fn mm_objective(xv: &CVector, bx: &CVector, b: &CVector) -> f64 {
    xv.dotc(bx).re - 2.0 * b.dotc(xv).re
}

/// Majorization-minimization for min x†Bx − 2Re(b†x) over fixed-magnitude codes.
/// Linearizing around x_t with majorizer λ_u·I − B reduces each step to maximizing
/// Re⟨c_t, x⟩, solved in closed form by the projection. λ_u must dominate λ_max(B).
pub fn mm_with_operator<F: Fn(&CVector) -> CVector>(
    matvec: F,
    lambda_u: f64,
    b: &CVector,
    x0: &Waveform,
    projection: &Projection,
    tol_inner: f64,
    max_mm: usize,
) -> MmOutcome {
    let n = x0.len();
    debug_assert_eq!(b.len(), n);
    let mut x = x0.clone();
    let mut xv = x.to_vector();
    let mut bx = matvec(&xv);
    let mut obj = mm_objective(&xv, &bx, b);
    let mut trace = vec![obj];
    let mut iterations = 0;
    for _ in 0..max_mm {
        iterations += 1;
        let c = CVector::from_fn(n, |k, _| Complex64::new(lambda_u, 0.0) * xv[k] - bx[k] + b[k]);
        let x_new = match projection {
            Projection::ConstantModulus { sample_power } => {
                let phases: Vec<f64> = (0..n)
                    .map(|k| {
                        if c[k].re == 0.0 && c[k].im == 0.0 {
                            x.phases()[k]
                        } else {
                            c[k].arg()
                        }
                    })
                    .collect();
                Waveform::constant_modulus(phases, *sample_power)
            }
            Projection::PeakConstrained { n_tx, peak_power, block_energy } => {
                let code_length = n / n_tx;
                let mut phases = vec![0.0; n];
                let mut mags = vec![0.0; n];
                for antenna in 0..*n_tx {
                    let idx: Vec<usize> = (0..code_length).map(|l| l * n_tx + antenna).collect();
                    if idx.iter().all(|&k| c[k].re == 0.0 && c[k].im == 0.0) {
                        // No descent information for this antenna: keep its block.
                        for &k in &idx {
                            phases[k] = x.phases()[k];
                            mags[k] = x.magnitude(k);
                        }
                        continue;
                    }
                    let cmags: Vec<f64> = idx.iter().map(|&k| c[k].norm()).collect();
                    let filled = waterfill(&cmags, *block_energy, *peak_power);
                    for (pos, &k) in idx.iter().enumerate() {
                        mags[k] = filled[pos];
                        phases[k] = if cmags[pos] > 0.0 { c[k].arg() } else { x.phases()[k] };
                    }
                }
                Waveform::with_magnitudes(phases, mags)
            }
        };
        let xv_new = x_new.to_vector();
        let bx_new = matvec(&xv_new);
        let obj_new = mm_objective(&xv_new, &bx_new, b);
        debug_assert!(
            obj_new <= obj + 1e-10 * obj.abs().max(1.0),
            "majorized objective increased: {obj} -> {obj_new}"
        );
        let rel = (obj_new - obj).abs() / obj.abs().max(f64::MIN_POSITIVE);
        x = x_new;
        xv = xv_new;
        bx = bx_new;
        obj = obj_new;
        trace.push(obj);
        if rel < tol_inner {
            break;
        }
    }
    MmOutcome { x, iterations, objective: obj, trace }
}

/// Dense-entry MM solver for min x†Bx − 2Re(b†x) over constant-modulus codes; the
/// majorizer level is computed here from a full eigensolve of B.
pub fn mm_uqp(b_mat: &HermitianMatrix, b: &CVector, x0: &Waveform, params: &SolverParams) -> Result<MmOutcome> {
    if b_mat.n() != x0.len() || b.len() != x0.len() {
        return Err(Error::DimensionMismatch { what: "quadratic form", expected: x0.len(), got: b_mat.n() });
    }
    if !x0.is_constant_modulus() {
        return Err(Error::InvalidInput("initial code must be constant-modulus".into()));
    }
    let (evals, _) = hermitian_eig(b_mat)?;
    let lambda_u = evals.last().unwrap() * (1.0 + LAMBDA_SLACK);
    let projection = Projection::ConstantModulus { sample_power: x0.magnitude(0) * x0.magnitude(0) };
    Ok(mm_with_operator(
        |x| b_mat.matvec(x),
        lambda_u,
        b,
        x0,
        &projection,
        params.tol_inner,
        params.max_mm,
    ))
}

#[derive(Clone, Debug)]
pub struct AdmmOutcome {
    pub x: Waveform,
    pub iterations: usize,
    pub converged: bool,
    /// Final per-residual norms: M user couplings plus the x̂ coupling.
    pub primal_norms: Vec<f64>,
    /// Final per-variable change norms: M user slacks, x̂, and x.
    pub dual_norms: Vec<f64>,
    pub mm_iterations: usize,
    pub primal_trace: Vec<f64>,
    pub dual_trace: Vec<f64>,
}

/// Consensus splitting for max x†Tx subject to the magnitude constraints and the
/// per-user synthesis budgets. Couplings: x̂ = T^{1/2}x and x̃_m = H_m x − s_m with
/// ‖x̃_m‖² ≤ ς_m. Stops when every primal residual norm is below eps_primal and
/// every dual change norm is below eps_dual; otherwise runs to max_admm and reports
/// converged = false with the last iterate.
pub fn admm_solve<T: QuadraticForm>(
    t: &T,
    t_sqrt: &T,
    spec: &CommSpec,
    x_init: &Waveform,
    params: &SolverParams,
) -> Result<AdmmOutcome> {
    let n = x_init.len();
    if t.dim() != n || t_sqrt.dim() != n {
        return Err(Error::DimensionMismatch { what: "quadratic form", expected: n, got: t.dim() });
    }
    let code_length = spec.code_length();
    let n_tx = spec.n_tx();
    if n != code_length * n_tx {
        return Err(Error::DimensionMismatch { what: "code vector", expected: code_length * n_tx, got: n });
    }
    params.validate(code_length)?;
    let projection = Projection::for_waveform(params, x_init, n_tx)?;
    let m_users = spec.n_users();
    let gram = channel_gram(spec);

    // Majorizer level for the full penalty quadratic B = T + Σ H_m†H_m, computed
    // once per run. λ_max(T) + λ_max(C_h) certifies the level without assembling
    // B; the two summands live on well-separated scales, so the slack it adds
    // over the exact maximum is marginal.
    let gram_top = match &gram {
        Some(g) => {
            let (evals, _) = hermitian_eig(g)?;
            *evals.last().unwrap()
        }
        None => 0.0,
    };
    let lambda_u = (t.lambda_max_upper()? + gram_top.max(0.0)) * (1.0 + LAMBDA_SLACK);

    let gram_mat = gram.as_ref().map(|g| g.as_matrix().clone());
    let b_matvec = |x: &CVector| {
        let mut y = t.apply(x);
        if let Some(g) = &gram_mat {
            gram_block_apply(g, x, &mut y);
        }
        y
    };

    let rows: Vec<CVector> = (0..m_users).map(|m| spec.channel_row(m)).collect();
    let symbols: Vec<CVector> = (0..m_users).map(|m| spec.symbol_row(m)).collect();

    let mut x = x_init.clone();
    let mut xv = x.to_vector();
    let mut x_hat = t_sqrt.apply(&xv);
    let mut x_tilde: Vec<CVector> = (0..m_users)
        .map(|m| admm_step_xtilde(&(channel_apply(&rows[m], &xv, code_length) - &symbols[m]), spec.budgets[m]))
        .collect();
    let mut nu = CVector::zeros(n);
    let mut upsilon: Vec<CVector> = (0..m_users).map(|_| CVector::zeros(code_length)).collect();

    let mut iterations = 0;
    let mut converged = false;
    let mut mm_total = 0;
    let mut primal_norms = vec![0.0; m_users + 1];
    let mut dual_norms = vec![0.0; m_users + 2];
    let mut primal_trace = Vec::new();
    let mut dual_trace = Vec::new();

    for _ in 0..params.max_admm {
        iterations += 1;
        let b = admm_rhs(t_sqrt, &x_hat, &nu, spec, &x_tilde, &upsilon);
        let mm = mm_with_operator(&b_matvec, lambda_u, &b, &x, &projection, params.tol_inner, params.max_mm);
        mm_total += mm.iterations;
        let x_new = mm.x;
        let xv_new = x_new.to_vector();

        let tsx = t_sqrt.apply(&xv_new);
        let x_hat_new = admm_step_xhat(&(&tsx - &nu), params.mu)?;
        let mut x_tilde_new = Vec::with_capacity(m_users);
        let mut synthesized = Vec::with_capacity(m_users);
        for m in 0..m_users {
            let y = channel_apply(&rows[m], &xv_new, code_length);
            let p = &y - &upsilon[m] - &symbols[m];
            x_tilde_new.push(admm_step_xtilde(&p, spec.budgets[m]));
            synthesized.push(y);
        }

        for m in 0..m_users {
            let r = &synthesized[m] - &symbols[m] - &x_tilde_new[m];
            primal_norms[m] = r.norm();
            dual_norms[m] = (&x_tilde_new[m] - &x_tilde[m]).norm();
            upsilon[m] -= &r;
        }
        let r_hat = &tsx - &x_hat_new;
        primal_norms[m_users] = r_hat.norm();
        dual_norms[m_users] = (&x_hat_new - &x_hat).norm();
        dual_norms[m_users + 1] = (&xv_new - &xv).norm();
        nu -= &r_hat;

        x = x_new;
        xv = xv_new;
        x_hat = x_hat_new;
        x_tilde = x_tilde_new;

        let max_primal = primal_norms.iter().cloned().fold(0.0, f64::max);
        let max_dual = dual_norms.iter().cloned().fold(0.0, f64::max);
        primal_trace.push(max_primal);
        dual_trace.push(max_dual);
        if primal_norms.iter().all(|&r| r <= params.eps_primal) && dual_norms.iter().all(|&d| d <= params.eps_dual) {
            converged = true;
            break;
        }
    }

    Ok(AdmmOutcome {
        x,
        iterations,
        converged,
        primal_norms,
        dual_norms,
        mm_iterations: mm_total,
        primal_trace,
        dual_trace,
    })
}

#[derive(Clone, Debug)]
pub struct AdmmRunSummary {
    pub outer_iteration: usize,
    pub dinkelbach_step: usize,
    pub admm_iterations: usize,
    pub mm_iterations: usize,
    pub admm_converged: bool,
    pub final_primal: f64,
    pub final_dual: f64,
}

#[derive(Clone, Debug)]
pub struct DinkelbachOutcome {
    pub x: Waveform,
    /// Ratio after the initial point and after each inner solve.
    pub g_trace: Vec<f64>,
    pub iterations: usize,
    /// An inner solve lowered the ratio beyond slack; the previous iterate was kept.
    pub non_ascent: bool,
}

/// Ratio-ascent loop at a fixed filter. Each step solves the shifted subproblem by
/// ADMM from the current code; the sequence is monitored and the best-ratio iterate
/// (including the initial code) is returned, so the outer SINR trace cannot regress.
pub fn dinkelbach_loop(
    factors: &RatioFactors,
    x0: &Waveform,
    spec: &CommSpec,
    params: &SolverParams,
) -> Result<(DinkelbachOutcome, Vec<AdmmRunSummary>)> {
    let mut g_cur = factors.ratio(&x0.to_vector())?;
    let mut best_x = x0.clone();
    let mut best_g = g_cur;
    let mut g_trace = vec![g_cur];
    let mut x_cur = x0.clone();
    let mut summaries = Vec::new();
    let mut iterations = 0;
    let mut non_ascent = false;
    // Target spectral norm for T when synthesis constraints are active; see below.
    let balance_target = match channel_gram(spec) {
        Some(g) => {
            let (evals, _) = hermitian_eig(&g)?;
            Some(evals.last().unwrap().max(1.0) * T_BALANCE)
        }
        None => None,
    };
    for step in 1..=params.max_dinkelbach {
        iterations = step;
        let (t_raw, t_sqrt_raw, _beta) = build_t_structured(factors, g_cur, params.beta_margin)?;
        // The filter scale is a free constant, so the shifted objective may be
        // normalized at will. With synthesis constraints active, T is rescaled
        // to a fixed multiple of the channel Gram's top eigenvalue: much larger
        // and the interference powers drown the communication blocks inside the
        // splitting, much smaller and the fixed absolute tolerances stop each
        // subproblem long before the radar objective has moved. In radar-only
        // runs there is nothing to balance and the raw scale is kept.
        let (t, t_sqrt);
        let top = t_raw.lambda_max();
        if let Some(target) = balance_target.filter(|_| top.is_finite() && top > 0.0) {
            t = t_raw.scaled(target / top);
            t_sqrt = t.sqrt()?;
        } else {
            t = t_raw;
            t_sqrt = t_sqrt_raw;
        }
        let out = admm_solve(&t, &t_sqrt, spec, &x_cur, params)?;
        let g_new = factors.ratio(&out.x.to_vector())?;
        g_trace.push(g_new);
        summaries.push(AdmmRunSummary {
            outer_iteration: 0,
            dinkelbach_step: step,
            admm_iterations: out.iterations,
            mm_iterations: out.mm_iterations,
            admm_converged: out.converged,
            final_primal: out.primal_norms.iter().cloned().fold(0.0, f64::max),
            final_dual: out.dual_norms.iter().cloned().fold(0.0, f64::max),
        });
        if g_new > best_g {
            best_g = g_new;
            best_x = out.x.clone();
        }
        if g_new < g_cur * (1.0 - ASCENT_SLACK) {
            non_ascent = true;
            break;
        }
        let rel = (g_new - g_cur).abs() / g_cur.abs().max(f64::MIN_POSITIVE);
        x_cur = out.x;
        g_cur = g_new;
        if rel < params.tol_inner {
            break;
        }
    }
    Ok((DinkelbachOutcome { x: best_x, g_trace, iterations, non_ascent }, summaries))
}

#[derive(Clone, Debug)]
pub struct DesignResult {
    pub x: Waveform,
    pub w: Filter,
    /// Output SINR of the final pair, linear.
    pub sinr: f64,
    /// SINR in dB after each filter update, starting from the initial code.
    pub sinr_trace_db: Vec<f64>,
    pub mui_per_user: Vec<f64>,
    /// ψ_m ≤ ς_m up to a small relative slack.
    pub feasible: Vec<bool>,
    /// Ratio traces of each outer iteration's ascent loop.
    pub dinkelbach_trace: Vec<Vec<f64>>,
    pub residual_trace: Vec<AdmmRunSummary>,
    pub outer_iterations: usize,
    pub converged: bool,
    pub wall_seconds: f64,
    /// Cumulative seconds at each `sinr_trace_db` entry.
    pub outer_seconds: Vec<f64>,
}

fn validate_initial_code(x0: &Waveform, scenario: &Scenario, params: &SolverParams) -> Result<()> {
    let n = scenario.code_len();
    if x0.len() != n {
        return Err(Error::DimensionMismatch { what: "initial code", expected: n, got: x0.len() });
    }
    match params.constraint_mode {
        ConstraintMode::ConstantModulus => {
            if !x0.is_constant_modulus() {
                return Err(Error::InvalidInput("initial code must be constant-modulus".into()));
            }
            let p = x0.magnitude(0) * x0.magnitude(0);
            if (p - scenario.sample_power()).abs() > 1e-9 * scenario.sample_power() {
                return Err(Error::InvalidInput(format!(
                    "initial sample power {p} does not match the energy budget {}",
                    scenario.sample_power()
                )));
            }
        }
        ConstraintMode::Papr(rho) => {
            let n_tx = scenario.array.n_tx;
            let block_energy = scenario.total_energy / n_tx as f64;
            let peak = rho * block_energy / scenario.code_length as f64;
            for antenna in 0..n_tx {
                let e: f64 = (0..scenario.code_length)
                    .map(|l| x0.magnitude(l * n_tx + antenna).powi(2))
                    .sum();
                if (e - block_energy).abs() > 1e-9 * block_energy {
                    return Err(Error::InvalidInput(format!(
                        "initial per-antenna energy {e} does not match the budget {block_energy}"
                    )));
                }
            }
            for k in 0..n {
                if x0.magnitude(k).powi(2) > peak * (1.0 + 1e-9) {
                    return Err(Error::InvalidInput("initial code exceeds the peak-power bound".into()));
                }
            }
        }
    }
    Ok(())
}

/// Full joint design: cyclic filter/code updates from an initial code, with the
/// ratio-ascent/ADMM stack as the code step. Stops when the SINR after consecutive
/// filter updates changes by less than tol_outer (relative) or at max_outer.
/// Synthesis-first warm start: when the incoming code violates a budget, drive
/// Σ_m ‖H_m x − s_m‖² down over the magnitude constraint set before any radar
/// shaping. Starting the ascent loop inside (or near) the synthesis balls keeps
/// later subproblem solutions comparable under the ratio, which a code that owes
/// orders of magnitude of synthesis error does not.
fn comm_feasible_start(x0: &Waveform, spec: &CommSpec, params: &SolverParams, n_tx: usize) -> Result<Waveform> {
    const CHUNK: usize = 500;
    const ROUNDS: usize = 40;
    // Aim slightly inside the balls so the splitting starts with slack.
    const HEADROOM: f64 = 0.9;

    let within = |x: &Waveform, margin: f64| {
        comms::mui_all(x, spec)
            .iter()
            .zip(&spec.budgets)
            .all(|(&psi, &budget)| psi <= budget * margin)
    };
    if spec.n_users() == 0 || within(x0, 1.0) {
        return Ok(x0.clone());
    }
    let gram = match channel_gram(spec) {
        Some(g) => g,
        None => return Ok(x0.clone()),
    };
    let (evals, _) = hermitian_eig(&gram)?;
    let gram_top = evals.last().unwrap().max(0.0);
    if gram_top <= 0.0 {
        return Ok(x0.clone());
    }
    let lambda_u = gram_top * (1.0 + LAMBDA_SLACK);
    let code_length = spec.code_length();
    let mut b = CVector::zeros(x0.len());
    for m in 0..spec.n_users() {
        channel_adjoint_accumulate(&mut b, &spec.channel_row(m), &spec.symbol_row(m));
    }
    let gram_mat = gram.as_matrix().clone();
    let matvec = |v: &CVector| {
        let mut y = CVector::zeros(v.len());
        gram_block_apply(&gram_mat, v, &mut y);
        y
    };
    let projection = Projection::for_waveform(params, x0, n_tx)?;
    let mut x = x0.clone();
    let mut prev_worst = f64::INFINITY;
    for _ in 0..ROUNDS {
        let out = mm_with_operator(&matvec, lambda_u, &b, &x, &projection, 1e-14, CHUNK);
        x = out.x;
        if within(&x, HEADROOM) {
            break;
        }
        let worst = comms::mui_all(&x, spec)
            .iter()
            .zip(&spec.budgets)
            .map(|(&psi, &budget)| psi / budget)
            .fold(0.0, f64::max);
        if worst >= prev_worst * (1.0 - 1e-9) {
            break;
        }
        prev_worst = worst;
    }
    debug_assert_eq!(x.len(), code_length * n_tx);
    Ok(x)
}

pub fn design(scenario: &Scenario, spec: &CommSpec, x0: &Waveform, params: &SolverParams) -> Result<DesignResult> {
    params.validate(scenario.code_length)?;
    validate_initial_code(x0, scenario, params)?;
    if spec.n_tx() != scenario.array.n_tx {
        return Err(Error::DimensionMismatch {
            what: "channel columns",
            expected: scenario.array.n_tx,
            got: spec.n_tx(),
        });
    }
    if spec.n_users() > 0 && spec.code_length() != scenario.code_length {
        return Err(Error::DimensionMismatch {
            what: "symbol stream length",
            expected: scenario.code_length,
            got: spec.code_length(),
        });
    }
    let start = Instant::now();
    let mut x = comm_feasible_start(x0, spec, params, scenario.array.n_tx)?;
    let mut w = update_filter(&x, scenario)?;
    let mut s_prev = model::sinr(&x, &w, scenario)?;
    let mut sinr_trace_db = vec![crate::to_db(s_prev)];
    let mut outer_seconds = vec![start.elapsed().as_secs_f64()];
    let mut dinkelbach_trace = Vec::new();
    let mut residual_trace = Vec::new();
    let mut converged = false;
    let mut outer_iterations = 0;
    for outer in 1..=params.max_outer {
        outer_iterations = outer;
        let factors = ratio_factors(&w, scenario)?;
        let (inner, mut summaries) = dinkelbach_loop(&factors, &x, spec, params)?;
        for s in &mut summaries {
            s.outer_iteration = outer;
        }
        residual_trace.extend(summaries);
        dinkelbach_trace.push(inner.g_trace);
        x = inner.x;
        w = update_filter(&x, scenario)?;
        let s_now = model::sinr(&x, &w, scenario)?;
        sinr_trace_db.push(crate::to_db(s_now));
        outer_seconds.push(start.elapsed().as_secs_f64());
        let rel = (s_now - s_prev).abs() / s_prev.abs().max(f64::MIN_POSITIVE);
        s_prev = s_now;
        if rel < params.tol_outer {
            converged = true;
            break;
        }
    }
    let mui_per_user = comms::mui_all(&x, spec);
    let feasible = mui_per_user
        .iter()
        .zip(&spec.budgets)
        .map(|(&psi, &budget)| psi <= budget * (1.0 + FEASIBILITY_SLACK))
        .collect();
    Ok(DesignResult {
        x,
        w,
        sinr: s_prev,
        sinr_trace_db,
        mui_per_user,
        feasible,
        dinkelbach_trace,
        residual_trace,
        outer_iterations,
        converged,
        wall_seconds: start.elapsed().as_secs_f64(),
        outer_seconds,
    })
}
