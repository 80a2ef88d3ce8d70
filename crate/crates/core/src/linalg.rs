//! Dense complex Hermitian linear-algebra kernels with explicit accuracy contracts,
//! plus a low-rank-plus-identity form whose solves avoid the dense inverse.
//!
//! Eigendecompositions are delegated to faer (forced to sequential mode so results
//! are identical regardless of thread configuration); factorizations to nalgebra.

use crate::error::{Error, Result};
use crate::{CMatrix, CVector, Complex64};
use std::sync::Once;

/// Hermitian matrix with conjugate symmetry exact by storage: constructors fill the
/// lower triangle and mirror the conjugate into the upper one, diagonal forced real.
#[derive(Clone, Debug)]
pub struct HermitianMatrix {
    data: CMatrix,
}

impl HermitianMatrix {
    /// Symmetrizes an arbitrary square matrix as (A + A†)/2.
    pub fn from_dense(a: &CMatrix) -> Self {
        assert_eq!(a.nrows(), a.ncols(), "square matrix required");
        Self::from_fn(a.nrows(), |i, j| (a[(i, j)] + a[(j, i)].conj()) * 0.5)
    }

    /// Builds from a generator evaluated on the lower triangle (i ≥ j).
    pub fn from_fn<F: FnMut(usize, usize) -> Complex64>(n: usize, mut f: F) -> Self {
        assert!(n >= 1, "dimension must be at least 1");
        let mut data = CMatrix::zeros(n, n);
        for j in 0..n {
            data[(j, j)] = Complex64::new(f(j, j).re, 0.0);
            for i in j + 1..n {
                let v = f(i, j);
                data[(i, j)] = v;
                data[(j, i)] = v.conj();
            }
        }
        Self { data }
    }

    pub fn zeros(n: usize) -> Self {
        assert!(n >= 1);
        Self { data: CMatrix::zeros(n, n) }
    }

    pub fn scaled_identity(n: usize, c: f64) -> Self {
        let mut m = Self::zeros(n);
        m.add_scaled_identity(c);
        m
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn as_matrix(&self) -> &CMatrix {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[(i, j)]
    }

    pub fn add_scaled_identity(&mut self, c: f64) {
        for i in 0..self.n() {
            self.data[(i, i)] += c;
        }
    }

    /// Adds `block` at every diagonal block position; n must divide evenly.
    pub fn add_block_diagonal(&mut self, block: &HermitianMatrix) {
        let k = block.n();
        assert!(k > 0 && self.n() % k == 0, "block size must divide dimension");
        for base in (0..self.n()).step_by(k) {
            for j in 0..k {
                self.data[(base + j, base + j)] += Complex64::new(block.get(j, j).re, 0.0);
                for i in j + 1..k {
                    let v = block.get(i, j);
                    self.data[(base + i, base + j)] += v;
                    self.data[(base + j, base + i)] += v.conj();
                }
            }
        }
    }

    /// Accumulates `weight · g g†`, preserving exact symmetry.
    pub fn add_scaled_outer(&mut self, weight: f64, g: &CVector) {
        let n = self.n();
        assert_eq!(g.len(), n, "vector length must match dimension");
        for j in 0..n {
            self.data[(j, j)] += Complex64::new(weight * g[j].norm_sqr(), 0.0);
            for i in j + 1..n {
                let v = g[i] * g[j].conj() * weight;
                self.data[(i, j)] += v;
                self.data[(j, i)] += v.conj();
            }
        }
    }

    pub fn matvec(&self, x: &CVector) -> CVector {
        &self.data * x
    }

    /// Re(x† H x); exactly real for Hermitian H.
    pub fn quad_form(&self, x: &CVector) -> f64 {
        x.dotc(&(&self.data * x)).re
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.norm()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }
}

fn force_sequential_eig() {
    static ONCE: Once = Once::new();
    ONCE.call_once(|| faer::set_global_parallelism(faer::Par::Seq));
}

/// Eigendecomposition H = V diag(λ) V† with λ ascending and V unitary.
///
/// Contract: ‖HV − V diag(λ)‖_F ≤ 1e-10·‖H‖_F, columns orthonormal to 1e-12.
pub fn hermitian_eig(h: &HermitianMatrix) -> Result<(Vec<f64>, CMatrix)> {
    if !h.is_finite() {
        return Err(Error::InvalidInput("non-finite entries in eigendecomposition input".into()));
    }
    force_sequential_eig();
    let n = h.n();
    let fm = faer::Mat::from_fn(n, n, |i, j| h.get(i, j));
    let eig = faer::linalg::solvers::SelfAdjointEigen::new(fm.as_ref(), faer::Side::Lower)
        .map_err(|_| Error::InvalidInput("eigendecomposition did not converge".into()))?;
    let s = eig.S();
    let u = eig.U();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| s[a].re.partial_cmp(&s[b].re).unwrap());
    let values: Vec<f64> = order.iter().map(|&k| s[k].re).collect();
    let vectors = CMatrix::from_fn(n, n, |i, j| u[(i, order[j])]);
    Ok((values, vectors))
}

/// Hermitian PSD square root S with S·S = T within 1e-8 relative Frobenius error.
///
/// Eigenvalues inside the band [−1e-8·max(1, ‖T‖₂), 0) are clamped to zero; anything
/// below the band is a hard failure.
pub fn psd_sqrt(t: &HermitianMatrix) -> Result<HermitianMatrix> {
    let (values, vectors) = hermitian_eig(t)?;
    let spectral = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let tol = 1e-8 * spectral.max(1.0);
    let min_eig = values[0];
    if min_eig < -tol {
        return Err(Error::NotPsd { min_eig, tol });
    }
    let roots: Vec<f64> = values.iter().map(|&v| v.max(0.0).sqrt()).collect();
    Ok(reconstruct(&roots, &vectors))
}

/// Rebuilds V diag(d) V† as an exactly Hermitian matrix.
pub fn reconstruct(d: &[f64], v: &CMatrix) -> HermitianMatrix {
    let n = v.nrows();
    assert_eq!(d.len(), v.ncols());
    HermitianMatrix::from_fn(n, |i, j| {
        (0..d.len())
            .map(|k| v[(i, k)] * v[(j, k)].conj() * d[k])
            .sum()
    })
}

/// Solves R z = y for Hermitian positive definite R via Cholesky.
pub fn solve_hpd(r: &HermitianMatrix, y: &CVector) -> Result<CVector> {
    if y.len() != r.n() {
        return Err(Error::DimensionMismatch { what: "solve_hpd rhs", expected: r.n(), got: y.len() });
    }
    let chol = nalgebra::linalg::Cholesky::new(r.data.clone()).ok_or(Error::NotPositiveDefinite)?;
    Ok(chol.solve(y))
}

/// The form c·I + Σ_k weight_k · g_k g_k†.
#[derive(Clone, Debug)]
pub struct LowRankPlusIdentity {
    c: f64,
    columns: Vec<CVector>,
    weights: Vec<f64>,
    n: usize,
}

impl LowRankPlusIdentity {
    pub fn new(n: usize, c: f64, columns: Vec<CVector>, weights: Vec<f64>) -> Self {
        assert_eq!(columns.len(), weights.len(), "one weight per column");
        for g in &columns {
            assert_eq!(g.len(), n, "column length must match dimension");
        }
        Self { c, columns, weights, n }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rank(&self) -> usize {
        self.columns.len()
    }

    pub fn identity_coeff(&self) -> f64 {
        self.c
    }

    pub fn columns(&self) -> &[CVector] {
        &self.columns
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn materialize(&self) -> HermitianMatrix {
        let mut m = HermitianMatrix::scaled_identity(self.n, self.c);
        for (g, &w) in self.columns.iter().zip(&self.weights) {
            m.add_scaled_outer(w, g);
        }
        m
    }

    pub fn matvec(&self, x: &CVector) -> CVector {
        let mut y = x * Complex64::new(self.c, 0.0);
        for (g, &w) in self.columns.iter().zip(&self.weights) {
            let coeff = g.dotc(x) * w;
            y.axpy(coeff, g, Complex64::new(1.0, 0.0));
        }
        y
    }

    /// Re(x† S x).
    pub fn quad_form(&self, x: &CVector) -> f64 {
        let mut acc = self.c * x.norm_squared();
        for (g, &w) in self.columns.iter().zip(&self.weights) {
            acc += w * g.dotc(x).norm_sqr();
        }
        acc
    }
}

/// Solves (c·I + GΣG†) z = y in O(n·r² + r³) via the matrix inversion lemma:
/// z = (1/c)·[y − G(cΣ⁻¹ + G†G)⁻¹ G†y].
pub fn woodbury_solve(s: &LowRankPlusIdentity, y: &CVector) -> Result<CVector> {
    if s.c <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "identity coefficient must be positive, got {}",
            s.c
        )));
    }
    if y.len() != s.n {
        return Err(Error::DimensionMismatch { what: "woodbury rhs", expected: s.n, got: y.len() });
    }
    let r = s.rank();
    if r == 0 {
        return Ok(y / Complex64::new(s.c, 0.0));
    }
    let g = CMatrix::from_fn(s.n, r, |i, k| s.columns[k][i]);
    let mut k = g.adjoint() * &g;
    for (idx, &w) in s.weights.iter().enumerate() {
        if w == 0.0 {
            return Err(Error::InvalidInput("zero weight in low-rank term".into()));
        }
        k[(idx, idx)] += s.c / w;
    }
    let gty = g.adjoint() * y;
    let small = nalgebra::linalg::Cholesky::new(k)
        .ok_or(Error::NotPositiveDefinite)?
        .solve(&gty);
    let correction = &g * small;
    Ok((y - correction) / Complex64::new(s.c, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eig_identity_and_diagonal() {
        let id = HermitianMatrix::scaled_identity(3, 1.0);
        let (vals, _) = hermitian_eig(&id).unwrap();
        for v in vals {
            assert!((v - 1.0).abs() < 1e-14);
        }
        let d = HermitianMatrix::from_fn(2, |i, j| {
            if i == j {
                Complex64::new(if i == 0 { 2.0 } else { -1.0 }, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        let (vals, _) = hermitian_eig(&d).unwrap();
        assert!((vals[0] + 1.0).abs() < 1e-14 && (vals[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn eig_rejects_non_finite() {
        let mut bad = HermitianMatrix::scaled_identity(2, 1.0);
        bad.add_scaled_identity(f64::NAN);
        assert!(matches!(hermitian_eig(&bad), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn psd_sqrt_diagonal() {
        let t = HermitianMatrix::from_fn(2, |i, j| {
            if i == j {
                Complex64::new(if i == 0 { 4.0 } else { 9.0 }, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        let s = psd_sqrt(&t).unwrap();
        assert!((s.get(0, 0).re - 2.0).abs() < 1e-12);
        assert!((s.get(1, 1).re - 3.0).abs() < 1e-12);
    }

    #[test]
    fn psd_sqrt_rejects_indefinite() {
        let t = HermitianMatrix::scaled_identity(3, -1.0);
        assert!(matches!(psd_sqrt(&t), Err(Error::NotPsd { .. })));
    }

    #[test]
    fn solve_hpd_diagonal() {
        let r = HermitianMatrix::scaled_identity(2, 2.0);
        let y = CVector::from_vec(vec![Complex64::new(2.0, 0.0), Complex64::new(4.0, 0.0)]);
        let z = solve_hpd(&r, &y).unwrap();
        assert!((z[0].re - 1.0).abs() < 1e-12 && (z[1].re - 2.0).abs() < 1e-12);
    }

    #[test]
    fn woodbury_identity_case() {
        let s = LowRankPlusIdentity::new(4, 2.5, vec![], vec![]);
        let y = CVector::from_fn(4, |i, _| Complex64::new(i as f64 + 1.0, -1.0));
        let z = woodbury_solve(&s, &y).unwrap();
        for i in 0..4 {
            assert!((z[i] - y[i] / 2.5).norm() < 1e-14);
        }
    }

    #[test]
    fn woodbury_rejects_nonpositive_coeff() {
        let s = LowRankPlusIdentity::new(2, 0.0, vec![], vec![]);
        let y = CVector::zeros(2);
        assert!(matches!(woodbury_solve(&s, &y), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn hermitian_symmetry_exact_by_storage() {
        let mut m = HermitianMatrix::from_fn(5, |i, j| Complex64::new(i as f64 * 0.3, j as f64 - 1.7));
        let g = CVector::from_fn(5, |i, _| Complex64::new(0.1 * i as f64 - 0.2, 1.0 / (i as f64 + 1.0)));
        m.add_scaled_outer(1.7, &g);
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(m.get(i, j), m.get(j, i).conj());
            }
        }
    }
}
