//! Coding-rate evaluation over unit-norm embedding matrices.
//!
//! The coding rate of a d×n column matrix `E` at distortion `ε` is
//!
//! ```text
//! C(E, ε) = ½·ln det(I + 1/(ε²·n)·EᵀE)
//! ```
//!
//! computed here with the natural logarithm. By the Sylvester determinant
//! identity the n×n Gram form and the d×d scatter form agree, so the kernel
//! always factorizes whichever matrix is smaller. Higher values mean the
//! columns span more volume, i.e. the set is more diverse.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on the Euclidean norm of ingested columns.
pub const UNIT_NORM_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum CodingRateError {
    #[error("non-finite entry in embedding vector")]
    NonFinite,
    #[error("embedding has length {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("embedding norm {norm} is not within {UNIT_NORM_TOL} of 1")]
    NotUnitNorm { norm: f64 },
    #[error("epsilon must be strictly positive, got {0}")]
    InvalidEpsilon(f64),
    #[error("jitter must lie in [0, 1e-6], got {0}")]
    InvalidJitter(f64),
    #[error("symmetric factorization failed even after jitter retry")]
    FactorizationFailed,
    #[error("candidate set is empty")]
    Empty,
}

/// Distortion and regularization parameters for coding-rate evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodingRateParams {
    /// Distortion parameter ε of the rate computation.
    pub epsilon: f64,
    /// Diagonal regularizer applied once if the factorization fails.
    pub jitter: f64,
}

impl CodingRateParams {
    pub const DEFAULT_EPSILON: f64 = 0.5;
    pub const DEFAULT_JITTER: f64 = 1e-9;
    pub const MAX_JITTER: f64 = 1e-6;

    pub fn new(epsilon: f64, jitter: f64) -> Result<Self, CodingRateError> {
        if !epsilon.is_finite() || epsilon <= 0.0 {
            return Err(CodingRateError::InvalidEpsilon(epsilon));
        }
        if !(0.0..=Self::MAX_JITTER).contains(&jitter) {
            return Err(CodingRateError::InvalidJitter(jitter));
        }
        Ok(Self { epsilon, jitter })
    }

    pub fn with_epsilon(epsilon: f64) -> Result<Self, CodingRateError> {
        Self::new(epsilon, Self::DEFAULT_JITTER)
    }
}

impl Default for CodingRateParams {
    fn default() -> Self {
        Self {
            epsilon: Self::DEFAULT_EPSILON,
            jitter: Self::DEFAULT_JITTER,
        }
    }
}

/// Column matrix of unit-norm embeddings, the `E` of the rate computation.
///
/// Columns are validated at ingestion: finite entries, matching dimension,
/// unit Euclidean norm within [`UNIT_NORM_TOL`]. The empty matrix (n = 0) is
/// legal and has coding rate exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    columns: Vec<DVector<f64>>,
}

impl EmbeddingMatrix {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            columns: Vec::new(),
        }
    }

    pub fn from_columns<I, C>(dim: usize, columns: I) -> Result<Self, CodingRateError>
    where
        I: IntoIterator<Item = C>,
        C: AsRef<[f64]>,
    {
        let mut m = Self::new(dim);
        for c in columns {
            m.push_column(c.as_ref())?;
        }
        Ok(m)
    }

    pub fn push_column(&mut self, column: &[f64]) -> Result<(), CodingRateError> {
        self.columns.push(validate_column(self.dim, column)?);
        Ok(())
    }

    /// Copy of `self` with one extra column appended.
    pub fn with_column(&self, column: &[f64]) -> Result<Self, CodingRateError> {
        let mut next = self.clone();
        next.push_column(column)?;
        Ok(next)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of columns n.
    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn column(&self, i: usize) -> &DVector<f64> {
        &self.columns[i]
    }

    pub fn columns(&self) -> &[DVector<f64>] {
        &self.columns
    }

    /// Dense d×n matrix with the stored columns in order.
    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.columns.len());
        for (j, c) in self.columns.iter().enumerate() {
            m.set_column(j, c);
        }
        m
    }
}

fn validate_column(dim: usize, column: &[f64]) -> Result<DVector<f64>, CodingRateError> {
    if column.len() != dim {
        return Err(CodingRateError::DimensionMismatch {
            expected: dim,
            got: column.len(),
        });
    }
    if column.iter().any(|x| !x.is_finite()) {
        return Err(CodingRateError::NonFinite);
    }
    let v = DVector::from_column_slice(column);
    let norm = v.norm();
    if (norm - 1.0).abs() > UNIT_NORM_TOL {
        return Err(CodingRateError::NotUnitNorm { norm });
    }
    Ok(v)
}

/// Scale a raw vector to unit norm, rejecting zero and non-finite input.
pub fn normalize(raw: &[f64]) -> Result<Vec<f64>, CodingRateError> {
    if raw.iter().any(|x| !x.is_finite()) {
        return Err(CodingRateError::NonFinite);
    }
    let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(CodingRateError::NotUnitNorm { norm });
    }
    Ok(raw.iter().map(|x| x / norm).collect())
}

/// ln det of a symmetric positive-definite matrix via Cholesky, with one
/// jittered retry. Consumes the matrix.
fn spd_log_det(mut m: DMatrix<f64>, jitter: f64) -> Result<f64, CodingRateError> {
    match Cholesky::new(m.clone()) {
        Some(chol) => Ok(chol_log_det(&chol)),
        None => {
            for i in 0..m.nrows() {
                m[(i, i)] += jitter;
            }
            Cholesky::new(m)
                .map(|chol| chol_log_det(&chol))
                .ok_or(CodingRateError::FactorizationFailed)
        }
    }
}

fn chol_log_det(chol: &Cholesky<f64, nalgebra::Dyn>) -> f64 {
    // det(M) = prod L_ii², so ln det = 2·Σ ln L_ii.
    2.0 * chol.l_dirty().diagonal().iter().map(|x| x.ln()).sum::<f64>()
}

/// Coding rate C(E, ε) of a unit-norm column matrix.
///
/// Returns exactly 0 for the empty matrix. Internally factorizes the n×n
/// Gram when n ≤ d and the d×d scatter otherwise; the two agree by the
/// Sylvester determinant identity.
pub fn coding_rate(
    matrix: &EmbeddingMatrix,
    params: &CodingRateParams,
) -> Result<f64, CodingRateError> {
    let n = matrix.len();
    if n == 0 {
        return Ok(0.0);
    }
    let d = matrix.dim();
    let e = matrix.to_dmatrix();
    let alpha = 1.0 / (params.epsilon * params.epsilon * n as f64);
    let m = if n <= d {
        let mut gram = e.tr_mul(&e) * alpha;
        for i in 0..n {
            gram[(i, i)] += 1.0;
        }
        gram
    } else {
        let mut scatter = &e * e.transpose() * alpha;
        for i in 0..d {
            scatter[(i, i)] += 1.0;
        }
        scatter
    };
    Ok(0.5 * spd_log_det(m, params.jitter)?)
}

/// Marginal coding-rate gain of appending `candidate` to `base`:
/// `C(base ∪ {candidate}) − C(base)`, by naive recomputation.
///
/// May be negative: the 1/n normalization makes the rate non-monotone.
pub fn marginal_gain(
    base: &EmbeddingMatrix,
    candidate: &[f64],
    params: &CodingRateParams,
) -> Result<f64, CodingRateError> {
    let extended = base.with_column(candidate)?;
    Ok(coding_rate(&extended, params)? - coding_rate(base, params)?)
}

/// Shared-factorization gain evaluator for one greedy step.
///
/// All candidates appended to a fixed base of k columns see the same
/// `I + β·Gram(base)` (β = 1/(ε²·(k+1))), so that matrix is factorized once
/// and each candidate costs one triangular solve plus a determinant-ratio
/// term. Gains match [`marginal_gain`] within 1e-9.
pub struct GainScanner<'a> {
    base: &'a EmbeddingMatrix,
    base_rate: f64,
    beta: f64,
    form: ScannerForm,
}

enum ScannerForm {
    /// (k×k) bordered-Gram path: det(M') = det(A)·(1 + β − β²·gᵀA⁻¹g).
    Gram { chol: Cholesky<f64, nalgebra::Dyn>, log_det: f64 },
    /// (d×d) scatter path: det(M') = det(A)·(1 + β·vᵀA⁻¹v).
    Scatter { chol: Cholesky<f64, nalgebra::Dyn>, log_det: f64 },
}

impl<'a> GainScanner<'a> {
    pub fn new(
        base: &'a EmbeddingMatrix,
        params: &CodingRateParams,
    ) -> Result<Self, CodingRateError> {
        let k = base.len();
        let d = base.dim();
        let beta = 1.0 / (params.epsilon * params.epsilon * (k + 1) as f64);
        let base_rate = coding_rate(base, params)?;
        let e = base.to_dmatrix();

        let form = if k < d {
            let mut a = e.tr_mul(&e) * beta;
            for i in 0..k {
                a[(i, i)] += 1.0;
            }
            let chol = spd_cholesky(a, params.jitter)?;
            let log_det = chol_log_det(&chol);
            ScannerForm::Gram { chol, log_det }
        } else {
            let mut a = &e * e.transpose() * beta;
            for i in 0..d {
                a[(i, i)] += 1.0;
            }
            let chol = spd_cholesky(a, params.jitter)?;
            let log_det = chol_log_det(&chol);
            ScannerForm::Scatter { chol, log_det }
        };

        Ok(Self {
            base,
            base_rate,
            beta,
            form,
        })
    }

    /// Coding rate of the base alone, cached at construction.
    pub fn base_rate(&self) -> f64 {
        self.base_rate
    }

    /// Gain of appending one unit-norm candidate to the base.
    pub fn gain(&self, candidate: &[f64]) -> Result<f64, CodingRateError> {
        let v = validate_column(self.base.dim(), candidate)?;
        let beta = self.beta;
        let extended_rate = match &self.form {
            ScannerForm::Gram { chol, log_det } => {
                let g = DVector::from_iterator(
                    self.base.len(),
                    self.base.columns().iter().map(|c| c.dot(&v)),
                );
                let z = chol.solve(&g);
                let corner = 1.0 + beta - beta * beta * g.dot(&z);
                if corner <= 0.0 {
                    return Err(CodingRateError::FactorizationFailed);
                }
                0.5 * (log_det + corner.ln())
            }
            ScannerForm::Scatter { chol, log_det } => {
                let z = chol.solve(&v);
                let factor = 1.0 + beta * v.dot(&z);
                if factor <= 0.0 {
                    return Err(CodingRateError::FactorizationFailed);
                }
                0.5 * (log_det + factor.ln())
            }
        };
        Ok(extended_rate - self.base_rate)
    }
}

fn spd_cholesky(
    mut m: DMatrix<f64>,
    jitter: f64,
) -> Result<Cholesky<f64, nalgebra::Dyn>, CodingRateError> {
    match Cholesky::new(m.clone()) {
        Some(chol) => Ok(chol),
        None => {
            for i in 0..m.nrows() {
                m[(i, i)] += jitter;
            }
            Cholesky::new(m).ok_or(CodingRateError::FactorizationFailed)
        }
    }
}
