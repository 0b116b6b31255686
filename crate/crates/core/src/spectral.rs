//! Dense spectral kernel: graph Laplacians, heat kernels, von Neumann
//! entropy, PSD projection and the Schur complement.
//!
//! Everything here operates on small (≤ ~40×40) symmetric matrices and is a
//! pure function of its inputs. Entropies are reported in bits.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Maximum tolerated `|A_ij - A_ji|` for a matrix to count as symmetric.
pub const SYMMETRY_TOL: f64 = 1e-8;

/// Smallest `|eigenvalue|` of `W_II + εI` accepted before ε is escalated.
pub const SINGULARITY_TOL: f64 = 1e-9;

/// Upper bound for ε escalation in [`schur_complement`].
pub const MAX_EPSILON: f64 = 1e-1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("matrix must be square with n >= 1 (got {rows}x{cols})")]
    Shape { rows: usize, cols: usize },
    #[error("expected {expected} values for a {n}x{n} matrix, got {got}")]
    ValueCount { n: usize, expected: usize, got: usize },
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("matrix not symmetric: |A[{row},{col}] - A[{col},{row}]| = {deviation:e}")]
    Asymmetric { row: usize, col: usize, deviation: f64 },
    #[error("symmetric eigendecomposition did not converge")]
    Eigen,
    #[error("trace must be positive to form a density matrix (got {0:e})")]
    NonPositiveTrace(f64),
    #[error("not a density matrix: eigenvalue {0:e} below clip tolerance")]
    NotDensity(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("W_II + eps*I singular even at eps = {epsilon:e} (min |eigenvalue| {min_abs_eig:e})")]
    Singular { epsilon: f64, min_abs_eig: f64 },
    #[error("invalid spectral config: {0}")]
    Config(String),
}

/// A validated square, symmetric, finite real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Builds a matrix from row-major values.
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self, SpectralError> {
        if n == 0 {
            return Err(SpectralError::Shape { rows: 0, cols: 0 });
        }
        if values.len() != n * n {
            return Err(SpectralError::ValueCount { n, expected: n * n, got: values.len() });
        }
        Self::from_matrix(DMatrix::from_row_slice(n, n, &values))
    }

    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self, SpectralError> {
        validate(&m)?;
        Ok(SymMatrix(m))
    }

    /// Averages `m` with its transpose, then validates finiteness.
    pub fn symmetrized(m: DMatrix<f64>) -> Result<Self, SpectralError> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(SpectralError::Shape { rows: m.nrows(), cols: m.ncols() });
        }
        let sym = (&m + m.transpose()) * 0.5;
        Self::from_matrix(sym)
    }

    pub fn identity(n: usize) -> Self {
        assert!(n > 0, "dimension must be positive");
        SymMatrix(DMatrix::identity(n, n))
    }

    pub fn ones(n: usize) -> Self {
        assert!(n > 0, "dimension must be positive");
        SymMatrix(DMatrix::from_element(n, n, 1.0))
    }

    pub fn zeros(n: usize) -> Self {
        assert!(n > 0, "dimension must be positive");
        SymMatrix(DMatrix::zeros(n, n))
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self, SpectralError> {
        if diag.is_empty() {
            return Err(SpectralError::Shape { rows: 0, cols: 0 });
        }
        Self::from_matrix(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    /// Block-diagonal matrix with an all-ones block per entry of `sizes`.
    pub fn block_ones(sizes: &[usize]) -> Self {
        let n: usize = sizes.iter().sum();
        assert!(n > 0, "dimension must be positive");
        let mut m = DMatrix::zeros(n, n);
        let mut start = 0;
        for &b in sizes {
            m.view_mut((start, start), (b, b)).fill(1.0);
            start += b;
        }
        SymMatrix(m)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn values_row_major(&self) -> Vec<f64> {
        let n = self.dim();
        (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| self.0[(i, j)]).collect()
    }

    /// Simultaneous row/column relabelling: `out[i][j] = self[perm[i]][perm[j]]`.
    pub fn permuted(&self, perm: &[usize]) -> SymMatrix {
        let n = self.dim();
        assert_eq!(perm.len(), n, "permutation length mismatch");
        SymMatrix(DMatrix::from_fn(n, n, |i, j| self.0[(perm[i], perm[j])]))
    }

    pub fn eigen(&self) -> Result<SymmetricEigen<f64, nalgebra::Dyn>, SpectralError> {
        SymmetricEigen::try_new(self.0.clone(), f64::EPSILON, 10_000).ok_or(SpectralError::Eigen)
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>, SpectralError> {
        Ok(self.eigen()?.eigenvalues.iter().copied().collect())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn max_abs_diff(&self, other: &SymMatrix) -> f64 {
        (&self.0 - &other.0).amax()
    }
}

fn validate(m: &DMatrix<f64>) -> Result<(), SpectralError> {
    let (rows, cols) = m.shape();
    if rows != cols || rows == 0 {
        return Err(SpectralError::Shape { rows, cols });
    }
    for i in 0..rows {
        for j in 0..cols {
            if !m[(i, j)].is_finite() {
                return Err(SpectralError::NonFinite { row: i, col: j });
            }
        }
    }
    for i in 0..rows {
        for j in (i + 1)..cols {
            let deviation = (m[(i, j)] - m[(j, i)]).abs();
            if deviation > SYMMETRY_TOL {
                return Err(SpectralError::Asymmetric { row: i, col: j, deviation });
            }
        }
    }
    Ok(())
}

/// How the Schur residual is turned into a graph before the entropy recipe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ResidualGraph {
    /// Conditional-correlation normalisation of the PSD residual with
    /// negative entries clamped to zero (see [`residual_similarity`]).
    #[default]
    Correlation,
    /// Feed the PSD residual to the Laplacian as-is.
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralConfig {
    pub tau: f64,
    pub epsilon: f64,
    pub eig_clip_tol: f64,
    #[serde(default)]
    pub residual: ResidualGraph,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        SpectralConfig { tau: 10.0, epsilon: 1e-3, eig_clip_tol: 1e-10, residual: ResidualGraph::Correlation }
    }
}

impl SpectralConfig {
    pub fn with_tau(tau: f64) -> Self {
        SpectralConfig { tau, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), SpectralError> {
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(SpectralError::Config(format!("tau must be > 0 (got {})", self.tau)));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(SpectralError::Config(format!("epsilon must be > 0 (got {})", self.epsilon)));
        }
        if !(self.eig_clip_tol.is_finite() && self.eig_clip_tol >= 0.0) {
            return Err(SpectralError::Config(format!(
                "eig_clip_tol must be >= 0 (got {})",
                self.eig_clip_tol
            )));
        }
        Ok(())
    }
}

/// `L = D - W`, where `D_ii` is the full row sum of `W` (diagonal included).
pub fn laplacian(w: &SymMatrix) -> SymMatrix {
    let m = w.as_matrix();
    let n = m.nrows();
    let mut l = -m.clone();
    for i in 0..n {
        let degree: f64 = m.row(i).iter().sum();
        l[(i, i)] += degree;
    }
    SymMatrix(l)
}

/// Validating variant of [`laplacian`] for raw matrices.
pub fn laplacian_checked(w: DMatrix<f64>) -> Result<SymMatrix, SpectralError> {
    Ok(laplacian(&SymMatrix::from_matrix(w)?))
}

/// `K = exp(-tau L)` via the eigendecomposition of `L`.
pub fn heat_kernel(l: &SymMatrix, tau: f64) -> Result<SymMatrix, SpectralError> {
    let eig = l.eigen()?;
    let weights = eig.eigenvalues.map(|lambda| (-tau * lambda).exp());
    reconstruct(&eig.eigenvectors, &weights)
}

fn reconstruct(q: &DMatrix<f64>, diag: &DVector<f64>) -> Result<SymMatrix, SpectralError> {
    let scaled = q * DMatrix::from_diagonal(diag);
    SymMatrix::symmetrized(scaled * q.transpose())
}

/// `rho = K / Tr(K)`.
pub fn density_matrix(k: &SymMatrix) -> Result<SymMatrix, SpectralError> {
    let tr = k.trace();
    if tr.is_nan() || tr <= 0.0 {
        return Err(SpectralError::NonPositiveTrace(tr));
    }
    Ok(SymMatrix(k.as_matrix() / tr))
}

/// Shannon entropy (bits) of a probability vector, with `0 log 0 = 0`.
pub(crate) fn shannon_bits(p: impl IntoIterator<Item = f64>) -> f64 {
    p.into_iter().filter(|&x| x > 0.0).map(|x| -x * x.log2()).sum()
}

/// von Neumann entropy `-Tr(rho log2 rho)` in bits.
///
/// Eigenvalues in `[-eig_clip_tol, 0)` are clipped to zero and the spectrum
/// renormalised; anything more negative is rejected.
pub fn von_neumann_entropy(rho: &SymMatrix, eig_clip_tol: f64) -> Result<f64, SpectralError> {
    let mut eigs = rho.eigenvalues()?;
    for e in eigs.iter_mut() {
        if *e < -eig_clip_tol {
            return Err(SpectralError::NotDensity(*e));
        }
        if *e < 0.0 {
            *e = 0.0;
        }
    }
    let total: f64 = eigs.iter().sum();
    if total.is_nan() || total <= 0.0 {
        return Err(SpectralError::NonPositiveTrace(total));
    }
    let h = shannon_bits(eigs.iter().map(|e| e / total));
    Ok(h.clamp(0.0, (rho.dim() as f64).log2()))
}

/// Eigenvalues of the heat-kernel density matrix of `w`, i.e. a softmax of
/// `-tau * spec(L)`. Shifting by the smallest Laplacian eigenvalue keeps the
/// exponentials in range for Laplacians with negative eigenvalues.
pub fn heat_density_spectrum(w: &SymMatrix, tau: f64) -> Result<Vec<f64>, SpectralError> {
    let lambdas = laplacian(w).eigenvalues()?;
    let min = lambdas.iter().copied().fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = lambdas.iter().map(|l| (-tau * (l - min)).exp()).collect();
    let z: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|x| x / z).collect())
}

/// Kernel language entropy of a similarity graph: the von Neumann entropy of
/// the trace-normalised heat kernel of its Laplacian.
///
/// The heat kernel shares eigenvectors with `L`, so the density spectrum is
/// computed directly from the Laplacian eigenvalues.
pub fn kle_entropy(w: &SymMatrix, cfg: &SpectralConfig) -> Result<f64, SpectralError> {
    cfg.validate()?;
    let spectrum = heat_density_spectrum(w, cfg.tau)?;
    let h = shannon_bits(spectrum);
    Ok(h.clamp(0.0, (w.dim() as f64).log2()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchurComplement {
    pub matrix: SymMatrix,
    /// Ridge actually used; differs from the requested one after escalation.
    pub epsilon: f64,
    pub escalated: bool,
}

/// `S = W_RR - W_IRᵀ (W_II + εI)⁻¹ W_IR`.
///
/// `w_ir` is the `N × R` coupling block. When `W_II + εI` is numerically
/// singular, ε is multiplied by 10 until it is not (at most [`MAX_EPSILON`]).
pub fn schur_complement(
    w_rr: &SymMatrix,
    w_ir: &DMatrix<f64>,
    w_ii: &SymMatrix,
    epsilon: f64,
) -> Result<SchurComplement, SpectralError> {
    let (n, r) = w_ir.shape();
    if n != w_ii.dim() || r != w_rr.dim() {
        return Err(SpectralError::Dimension(format!(
            "W_IR is {n}x{r} but W_II is {0}x{0} and W_RR is {1}x{1}",
            w_ii.dim(),
            w_rr.dim()
        )));
    }
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(SpectralError::Config(format!("epsilon must be > 0 (got {epsilon})")));
    }

    let mut eps = epsilon;
    let mut escalated = false;
    let eig = loop {
        let shifted = w_ii.as_matrix() + DMatrix::identity(n, n) * eps;
        let eig = SymmetricEigen::try_new(shifted, f64::EPSILON, 10_000).ok_or(SpectralError::Eigen)?;
        let min_abs = eig.eigenvalues.iter().fold(f64::INFINITY, |acc, e| acc.min(e.abs()));
        if min_abs >= SINGULARITY_TOL {
            break eig;
        }
        let next = eps * 10.0;
        if next > MAX_EPSILON * (1.0 + 1e-12) {
            return Err(SpectralError::Singular { epsilon: eps, min_abs_eig: min_abs });
        }
        log::warn!("W_II + eps*I near-singular (min |eig| {min_abs:e}); escalating eps {eps:e} -> {next:e}");
        eps = next;
        escalated = true;
    };

    let inv_diag = eig.eigenvalues.map(|e| 1.0 / e);
    let inverse = &eig.eigenvectors * DMatrix::from_diagonal(&inv_diag) * eig.eigenvectors.transpose();
    let projection = w_ir.transpose() * inverse * w_ir;
    let matrix = SymMatrix::symmetrized(w_rr.as_matrix() - projection)?;
    Ok(SchurComplement { matrix, epsilon: eps, escalated })
}

/// Nearest PSD matrix in Frobenius norm: negative eigenvalues clipped to 0.
pub fn psd_project(s: &SymMatrix) -> Result<SymMatrix, SpectralError> {
    let eig = s.eigen()?;
    let clipped = eig.eigenvalues.map(|e| e.max(0.0));
    reconstruct(&eig.eigenvectors, &clipped)
}

/// Converts a PSD residual into a similarity graph with unit diagonal:
/// `W_ij = clamp(S_ij / sqrt(S_ii S_jj), 0, 1)`.
///
/// Items whose residual variance is (numerically) zero become isolated nodes.
pub fn residual_similarity(s: &SymMatrix) -> SymMatrix {
    let m = s.as_matrix();
    let n = m.nrows();
    let scale = m.diagonal().iter().fold(1.0_f64, |acc, d| acc.max(d.abs()));
    let floor = 1e-12 * scale;
    let d: Vec<f64> = m.diagonal().iter().map(|&v| if v > floor { v.sqrt() } else { 0.0 }).collect();
    let out = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else if d[i] == 0.0 || d[j] == 0.0 {
            0.0
        } else {
            (m[(i, j)] / (d[i] * d[j])).clamp(0.0, 1.0)
        }
    });
    // symmetric by construction: same expression for (i, j) and (j, i) up to rounding
    SymMatrix((&out + out.transpose()) * 0.5)
}

/// Entropy of the Schur residual under the configured residual-graph mode.
pub fn residual_entropy(s: &SymMatrix, cfg: &SpectralConfig) -> Result<f64, SpectralError> {
    let projected = psd_project(s)?;
    match cfg.residual {
        ResidualGraph::Raw => kle_entropy(&projected, cfg),
        ResidualGraph::Correlation => kle_entropy(&residual_similarity(&projected), cfg),
    }
}
