//! Linear receivers: channel-matched, clutter zero-forcing, LMMSE and full
//! zero-forcing.
//!
//! Every receiver reduces to a weight vector `w` and a complex scale, with
//! soft output `scale * w^H y`. Zero-forcing bases are built from the
//! normalized generators of the subspace to null (clutter steering vectors
//! with nonzero weight, plus the other users' channel estimates for FZF)
//! rather than from an eigendecomposition of the assembled covariance, so that
//! weak generators are nulled exactly however large the dynamic range.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, Dyn, SymmetricEigen};
use num_complex::Complex64;

use crate::clutter::ClutterCovariance;
use crate::linalg::{hermitian_defect, CMatrix, CVector};
use crate::{Error, Result};

/// Default relative eigenvalue threshold for [`null_basis`].
pub const DEFAULT_NULL_TOL: f64 = 1e-10;

/// Residual norm below which a normalized generator is considered dependent
/// on the ones before it.
pub const GENERATOR_RANK_TOL: f64 = 1e-10;

/// Projected estimates shorter than this fraction of the original are
/// treated as lying inside the nulled subspace.
pub const DEGENERATE_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ReceiverKind {
    Cm,
    Zf,
    Lmmse,
    Fzf,
}

impl ReceiverKind {
    pub const ALL: [ReceiverKind; 4] = [ReceiverKind::Cm, ReceiverKind::Zf, ReceiverKind::Lmmse, ReceiverKind::Fzf];

    pub fn name(self) -> &'static str {
        match self {
            ReceiverKind::Cm => "cm",
            ReceiverKind::Zf => "zf",
            ReceiverKind::Lmmse => "lmmse",
            ReceiverKind::Fzf => "fzf",
        }
    }
}

impl fmt::Display for ReceiverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ReceiverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cm" => Ok(ReceiverKind::Cm),
            "zf" => Ok(ReceiverKind::Zf),
            "lmmse" => Ok(ReceiverKind::Lmmse),
            "fzf" => Ok(ReceiverKind::Fzf),
            other => Err(Error::InvalidArgument(format!("unknown receiver `{other}` (cm|zf|lmmse|fzf)"))),
        }
    }
}

/// Weight vector and output scale of one receiver for one symbol.
#[derive(Clone, Debug, PartialEq)]
pub struct ReceiverWeights {
    pub kind: ReceiverKind,
    pub w: CVector,
    pub scale: Complex64,
}

impl ReceiverWeights {
    /// Soft symbol `scale * w^H y`.
    pub fn soft(&self, y: &CVector) -> Complex64 {
        self.scale * self.w.dotc(y)
    }
}

/// Orthonormal basis of a subspace to be nulled.
#[derive(Clone, Debug, PartialEq)]
pub struct NullBasis {
    /// `M x r`, orthonormal columns.
    pub u: CMatrix,
}

impl NullBasis {
    pub fn empty(antennas: usize) -> Self {
        NullBasis { u: CMatrix::zeros(antennas, 0) }
    }

    pub fn rank(&self) -> usize {
        self.u.ncols()
    }

    pub fn antennas(&self) -> usize {
        self.u.nrows()
    }

    /// Orthonormal basis of `span{v_i}` by Gram-Schmidt with one round of
    /// re-orthogonalization. Each generator is normalized first; a generator
    /// whose residual after projection is below `GENERATOR_RANK_TOL` is
    /// treated as dependent. Zero vectors are ignored.
    pub fn from_generators<'a, I>(antennas: usize, generators: I) -> Self
    where
        I: IntoIterator<Item = &'a CVector>,
    {
        let mut cols: Vec<CVector> = Vec::new();
        for v in generators {
            if cols.len() == antennas {
                break;
            }
            let n = v.norm();
            if n == 0.0 {
                continue;
            }
            let mut r = v / Complex64::from(n);
            for _ in 0..2 {
                for u in &cols {
                    let c = u.dotc(&r);
                    r.axpy(-c, u, Complex64::new(1.0, 0.0));
                }
            }
            let rn = r.norm();
            if rn >= GENERATOR_RANK_TOL {
                cols.push(r / Complex64::from(rn));
            }
        }
        if cols.is_empty() {
            return NullBasis::empty(antennas);
        }
        NullBasis { u: CMatrix::from_columns(&cols) }
    }

    /// `(I - U U^H) v`.
    pub fn project_out(&self, v: &CVector) -> CVector {
        if self.rank() == 0 {
            return v.clone();
        }
        let coeffs = self.u.ad_mul(v);
        v - &self.u * coeffs
    }

    /// `U U^H v`.
    pub fn project_onto(&self, v: &CVector) -> CVector {
        if self.rank() == 0 {
            return CVector::zeros(v.len());
        }
        &self.u * self.u.ad_mul(v)
    }
}

/// Eigenvectors of a Hermitian PSD matrix whose eigenvalues are at least
/// `rel_tol` times the largest one.
pub fn null_basis(a: &CMatrix, rel_tol: f64) -> Result<NullBasis> {
    if !a.is_square() {
        return Err(Error::InvalidArgument(format!("{}x{} matrix is not square", a.nrows(), a.ncols())));
    }
    let defect = hermitian_defect(a);
    if defect > 1e-10 {
        return Err(Error::NotHermitian(defect));
    }
    let m = a.nrows();
    let sym = (a + a.adjoint()) * Complex64::from(0.5);
    let eig = SymmetricEigen::new(sym);
    let lambda_max = eig.eigenvalues.iter().fold(0.0f64, |mx, &v| mx.max(v));
    if lambda_max <= 0.0 {
        return Ok(NullBasis::empty(m));
    }
    let cols: Vec<CVector> = eig
        .eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, &v)| v >= rel_tol * lambda_max)
        .map(|(i, _)| eig.eigenvectors.column(i).into_owned())
        .collect();
    if cols.is_empty() {
        return Ok(NullBasis::empty(m));
    }
    Ok(NullBasis { u: CMatrix::from_columns(&cols) })
}

/// Basis of the clutter subspace: steering vectors with nonzero weight.
pub fn zf_basis(clutter: &ClutterCovariance, antennas: usize) -> NullBasis {
    NullBasis::from_generators(antennas, clutter.support())
}

/// Basis of the clutter subspace plus the other users' estimated channels.
pub fn fzf_basis(h_hat_all: &[&CVector], k: usize, clutter: &ClutterCovariance, antennas: usize) -> NullBasis {
    let others = h_hat_all.iter().enumerate().filter(|&(j, _)| j != k).map(|(_, h)| *h);
    NullBasis::from_generators(antennas, clutter.support().into_iter().chain(others))
}

fn check_power(p_k: f64) -> Result<()> {
    if p_k > 0.0 && p_k.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("user power {p_k} must be positive")))
    }
}

pub fn cm_weights(h_hat: &CVector, p_k: f64) -> Result<ReceiverWeights> {
    check_power(p_k)?;
    let e = h_hat.norm_squared();
    if e == 0.0 {
        return Err(Error::InvalidArgument("zero channel estimate".into()));
    }
    Ok(ReceiverWeights {
        kind: ReceiverKind::Cm,
        w: h_hat.clone(),
        scale: Complex64::from(1.0 / (p_k.sqrt() * e)),
    })
}

/// Projection receiver shared by ZF and FZF: `w = (I - U U^H) h_hat`.
pub fn projected_weights(kind: ReceiverKind, h_hat: &CVector, basis: &NullBasis, p_k: f64) -> Result<ReceiverWeights> {
    check_power(p_k)?;
    let norm = h_hat.norm();
    if norm == 0.0 {
        return Err(Error::InvalidArgument("zero channel estimate".into()));
    }
    if basis.rank() >= basis.antennas() {
        return Err(Error::DegenerateProjection);
    }
    let w = basis.project_out(h_hat);
    let e = w.norm_squared();
    if e.sqrt() <= DEGENERATE_TOL * norm {
        return Err(Error::DegenerateProjection);
    }
    Ok(ReceiverWeights { kind, w, scale: Complex64::from(1.0 / (p_k.sqrt() * e)) })
}

pub fn zf_weights(h_hat: &CVector, clutter: &ClutterCovariance, p_k: f64) -> Result<ReceiverWeights> {
    projected_weights(ReceiverKind::Zf, h_hat, &zf_basis(clutter, h_hat.len()), p_k)
}

pub fn fzf_weights(h_hat_all: &[&CVector], clutter: &ClutterCovariance, powers: &[f64], k: usize) -> Result<ReceiverWeights> {
    let m = h_hat_all[k].len();
    projected_weights(ReceiverKind::Fzf, h_hat_all[k], &fzf_basis(h_hat_all, k, clutter, m), powers[k])
}

/// Solver for `K_y = sum_j p_j h_j h_j^H + sigma^2 I + K_C`.
///
/// With `F = [sqrt(p_j) h_j, sqrt(w_q) b_q]` of rank `r < M`, the
/// matrix-inversion lemma gives
/// `K_y^{-1} v = (v - F (sigma^2 I + F^H F)^{-1} F^H v) / sigma^2`,
/// which only needs an `r x r` Cholesky. Otherwise `K_y` is factored directly.
pub struct LmmseSolver {
    sigma_w2: f64,
    form: SolverForm,
}

enum SolverForm {
    LowRank { f: CMatrix, chol: Cholesky<Complex64, Dyn> },
    Dense { chol: Cholesky<Complex64, Dyn> },
}

impl LmmseSolver {
    pub fn new(h_hat_all: &[&CVector], powers: &[f64], sigma_w2: f64, clutter: &ClutterCovariance) -> Result<Self> {
        if !(sigma_w2 > 0.0) {
            return Err(Error::InvalidArgument("noise power must be positive".into()));
        }
        let m = h_hat_all.first().map(|h| h.len()).or_else(|| clutter.steering.first().map(|b| b.len()));
        let Some(m) = m else {
            return Err(Error::Empty);
        };
        let mut cols: Vec<CVector> = h_hat_all
            .iter()
            .zip(powers)
            .filter(|(_, &p)| p > 0.0)
            .map(|(h, &p)| *h * Complex64::from(p.sqrt()))
            .collect();
        cols.extend(clutter.generators());
        let r = cols.len();
        let form = if r == 0 {
            SolverForm::LowRank { f: CMatrix::zeros(m, 0), chol: Cholesky::new(CMatrix::zeros(0, 0)).ok_or(Error::Factorization)? }
        } else {
            let f = CMatrix::from_columns(&cols);
            if r < m {
                let mut s = f.ad_mul(&f);
                for i in 0..r {
                    s[(i, i)] += sigma_w2;
                }
                let chol = Cholesky::new(s).ok_or(Error::Factorization)?;
                SolverForm::LowRank { f, chol }
            } else {
                let mut k = &f * f.adjoint();
                for i in 0..m {
                    k[(i, i)] += sigma_w2;
                }
                SolverForm::Dense { chol: Cholesky::new(k).ok_or(Error::Factorization)? }
            }
        };
        Ok(LmmseSolver { sigma_w2, form })
    }

    /// `K_y^{-1} v`.
    pub fn solve(&self, v: &CVector) -> CVector {
        match &self.form {
            SolverForm::Dense { chol } => chol.solve(v),
            SolverForm::LowRank { f, chol } => {
                if f.ncols() == 0 {
                    return v / Complex64::from(self.sigma_w2);
                }
                let inner = chol.solve(&f.ad_mul(v));
                (v - f * inner) / Complex64::from(self.sigma_w2)
            }
        }
    }

    pub fn weights(&self, h_hat_k: &CVector, p_k: f64) -> Result<ReceiverWeights> {
        check_power(p_k)?;
        let w = self.solve(h_hat_k);
        if w.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Factorization);
        }
        Ok(ReceiverWeights { kind: ReceiverKind::Lmmse, w, scale: Complex64::from(p_k.sqrt()) })
    }
}

pub fn lmmse_weights(
    h_hat_all: &[&CVector],
    clutter: &ClutterCovariance,
    powers: &[f64],
    sigma_w2: f64,
    k: usize,
) -> Result<ReceiverWeights> {
    LmmseSolver::new(h_hat_all, powers, sigma_w2, clutter)?.weights(h_hat_all[k], powers[k])
}

pub fn cm_detect(h_hat: &CVector, y: &CVector, p_k: f64) -> Result<Complex64> {
    Ok(cm_weights(h_hat, p_k)?.soft(y))
}

pub fn zf_detect(h_hat: &CVector, y: &CVector, clutter: &ClutterCovariance, p_k: f64) -> Result<Complex64> {
    Ok(zf_weights(h_hat, clutter, p_k)?.soft(y))
}

pub fn lmmse_detect(
    h_hat_all: &[&CVector],
    y: &CVector,
    clutter: &ClutterCovariance,
    powers: &[f64],
    sigma_w2: f64,
    k: usize,
) -> Result<Complex64> {
    Ok(lmmse_weights(h_hat_all, clutter, powers, sigma_w2, k)?.soft(y))
}

pub fn fzf_detect(
    h_hat_all: &[&CVector],
    y: &CVector,
    clutter: &ClutterCovariance,
    powers: &[f64],
    k: usize,
) -> Result<Complex64> {
    Ok(fzf_weights(h_hat_all, clutter, powers, k)?.soft(y))
}

/// Weights of receiver `kind` for user `k`.
pub fn receiver_weights(
    kind: ReceiverKind,
    h_hat_all: &[&CVector],
    clutter: &ClutterCovariance,
    powers: &[f64],
    sigma_w2: f64,
    k: usize,
) -> Result<ReceiverWeights> {
    match kind {
        ReceiverKind::Cm => cm_weights(h_hat_all[k], powers[k]),
        ReceiverKind::Zf => zf_weights(h_hat_all[k], clutter, powers[k]),
        ReceiverKind::Lmmse => lmmse_weights(h_hat_all, clutter, powers, sigma_w2, k),
        ReceiverKind::Fzf => fzf_weights(h_hat_all, clutter, powers, k),
    }
}
