//! Recovery of identifiable latent factors from `M` and `Q` alone.
//!
//! For every realized pattern `S`, the columns of `M` indexed by `R(S)` span
//! `V_S = span{Θ_k : k ∈ S}`, and `V_S ∩ V_S' = V_{S ∩ S'}`. Intersecting
//! `V_S` over all realized patterns containing `k` therefore leaves
//! `span{Θ_k}` exactly when `k` masks no other factor.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::design::{DesignError, DesignMatrix};
use crate::linalg;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RecoveryError {
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error("subspaces live in different ambient dimensions ({0} vs {1})")]
    AmbientMismatch(usize, usize),
    #[error("data matrix has {found} columns, design matrix has {expected} items")]
    ItemMismatch { found: usize, expected: usize },
    #[error("factor {factor}: intersected subspace has dimension {dim}, expected 1")]
    NotOneDimensional { factor: usize, dim: usize },
    #[error("factor {0} has empty support; nothing to intersect")]
    EmptySupport(usize),
    #[error("factor estimate is {rows}x{cols}, expected {n}x{k}")]
    ThetaShape {
        rows: usize,
        cols: usize,
        n: usize,
        k: usize,
    },
    #[error("factor estimate does not have numerically independent columns")]
    RankDeficientTheta,
}

/// A linear subspace of `R^N` held as an orthonormal basis.
#[derive(Debug, Clone, PartialEq)]
pub struct Subspace {
    basis: DMatrix<f64>,
    tol: f64,
}

impl Subspace {
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn is_zero(&self) -> bool {
        self.dim() == 0
    }

    /// The whole of `R^n`.
    pub fn full(n: usize, tol: f64) -> Self {
        Subspace {
            basis: DMatrix::identity(n, n),
            tol,
        }
    }

    /// Orthonormal basis of the numerical column space of `cols` at relative
    /// tolerance `tol`. All-zero input gives the zero subspace.
    pub fn column_space(cols: &DMatrix<f64>, tol: f64) -> Self {
        Subspace {
            basis: linalg::column_basis(cols, tol),
            tol,
        }
    }

    /// Directions shared by `self` and `other`: the principal vectors whose
    /// principal angle has cosine `>= 1 - tol`.
    pub fn intersect(&self, other: &Subspace, tol: f64) -> Result<Subspace, RecoveryError> {
        if self.ambient_dim() != other.ambient_dim() {
            return Err(RecoveryError::AmbientMismatch(
                self.ambient_dim(),
                other.ambient_dim(),
            ));
        }
        if self.is_zero() || other.is_zero() {
            return Ok(Subspace {
                basis: DMatrix::zeros(self.ambient_dim(), 0),
                tol,
            });
        }
        let cross = self.basis.transpose() * &other.basis;
        let (u, cosines, _) = linalg::svd_sorted(&cross);
        let shared = cosines.iter().take_while(|&&c| c >= 1.0 - tol).count();
        let directions = &self.basis * u.columns(0, shared);
        Ok(Subspace {
            basis: linalg::column_basis(&directions, tol),
            tol,
        })
    }

    /// Orthogonal projection of `x` onto the subspace.
    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.basis * (self.basis.transpose() * x)
    }
}

/// Flips `v` so its first coordinate with magnitude above `tol` is positive.
fn canonical_sign(mut v: DVector<f64>, tol: f64) -> DVector<f64> {
    if let Some(first) = v.iter().copied().find(|x| x.abs() > tol) {
        if first < 0.0 {
            v.neg_mut();
        }
    }
    v
}

fn check_items(m: &DMatrix<f64>, q: &DesignMatrix) -> Result<(), RecoveryError> {
    if m.ncols() != q.n_items() {
        return Err(RecoveryError::ItemMismatch {
            found: m.ncols(),
            expected: q.n_items(),
        });
    }
    Ok(())
}

/// `V_S` for the realized pattern `S` with items `items`.
fn pattern_space(m: &DMatrix<f64>, items: &[usize], tol: f64) -> Subspace {
    let cols: Vec<_> = items.iter().map(|&j| m.column(j).into_owned()).collect();
    Subspace::column_space(&DMatrix::from_columns(&cols), tol)
}

/// Intersection of `V_S` over the realized patterns containing `factor`,
/// folded in lexicographic pattern order. A factor with empty support gets
/// the whole ambient space.
pub fn factor_subspace(
    m: &DMatrix<f64>,
    q: &DesignMatrix,
    factor: usize,
    tol: f64,
) -> Result<Subspace, RecoveryError> {
    check_items(m, q)?;
    q.intersection_set(factor)?;
    let mut acc: Option<Subspace> = None;
    for pattern in q.realized_patterns() {
        if !pattern.factors.contains(&factor) {
            continue;
        }
        let space = pattern_space(m, &pattern.items, tol);
        acc = Some(match acc {
            None => space,
            Some(prev) => prev.intersect(&space, tol)?,
        });
    }
    Ok(acc.unwrap_or_else(|| Subspace::full(m.nrows(), tol)))
}

/// Unit vector spanning the recovered `span{Θ_factor}`, with its first
/// nonzero coordinate positive.
pub fn recover_theta(
    m: &DMatrix<f64>,
    q: &DesignMatrix,
    factor: usize,
    tol: f64,
) -> Result<DVector<f64>, RecoveryError> {
    q.intersection_set(factor)?;
    if q.has_empty_support(factor) {
        return Err(RecoveryError::EmptySupport(factor + 1));
    }
    let space = factor_subspace(m, q, factor, tol)?;
    if space.dim() != 1 {
        return Err(RecoveryError::NotOneDimensional {
            factor: factor + 1,
            dim: space.dim(),
        });
    }
    Ok(canonical_sign(space.basis.column(0).into_owned(), tol))
}

/// Loadings recovered row by row against a factor estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadingRecovery {
    /// `J × K`, exact zeros outside the support of `Q`.
    pub loadings: DMatrix<f64>,
    /// `‖Θ̂[:, S_j] x_j − M_j‖` per item.
    pub residuals: Vec<f64>,
}

/// Solves `theta_hat[:, S_j] x = M_j` in the least-squares sense for every
/// item `j` with row pattern `S_j`.
pub fn recover_a(
    m: &DMatrix<f64>,
    q: &DesignMatrix,
    theta_hat: &DMatrix<f64>,
    tol: f64,
) -> Result<LoadingRecovery, RecoveryError> {
    check_items(m, q)?;
    let (n, k) = (m.nrows(), q.n_factors());
    if theta_hat.shape() != (n, k) {
        return Err(RecoveryError::ThetaShape {
            rows: theta_hat.nrows(),
            cols: theta_hat.ncols(),
            n,
            k,
        });
    }
    if linalg::numerical_rank(theta_hat, tol) != k {
        return Err(RecoveryError::RankDeficientTheta);
    }
    let mut loadings = DMatrix::zeros(q.n_items(), k);
    let mut residuals = Vec::with_capacity(q.n_items());
    for item in 0..q.n_items() {
        let pattern: Vec<usize> = q.row_pattern(item).into_iter().collect();
        let target = m.column(item).into_owned();
        let sub = theta_hat.select_columns(&pattern);
        let x = linalg::solve_least_squares(&sub, &target, tol)
            .ok_or(RecoveryError::RankDeficientTheta)?;
        residuals.push((&sub * &x - &target).norm());
        for (slot, &factor) in pattern.iter().enumerate() {
            loadings[(item, factor)] = x[slot];
        }
    }
    Ok(LoadingRecovery {
        loadings,
        residuals,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryResult {
    /// `(factor, unit direction)` for every identifiable factor, in order.
    pub directions: Vec<(usize, DVector<f64>)>,
    /// Factors that are not identifiable from `Q`.
    pub skipped: Vec<usize>,
    /// Present only when every factor is identifiable.
    pub loadings: Option<LoadingRecovery>,
    /// Dimension of the intersected subspace for every factor. A factor with
    /// empty support reports the ambient dimension.
    pub intersection_dims: Vec<usize>,
}

impl RecoveryResult {
    /// Recovered directions as columns of an `N × K` matrix, when all factors
    /// were recovered.
    pub fn theta_hat(&self) -> Option<DMatrix<f64>> {
        if !self.skipped.is_empty() || self.directions.is_empty() {
            return None;
        }
        let cols: Vec<_> = self.directions.iter().map(|(_, d)| d.clone()).collect();
        Some(DMatrix::from_columns(&cols))
    }
}

/// Recovers every identifiable factor, and the loadings when all factors are
/// identifiable. An identifiable factor whose subspace is not a line means
/// the data contradict the model assumptions and is an error.
pub fn recover(m: &DMatrix<f64>, q: &DesignMatrix, tol: f64) -> Result<RecoveryResult, RecoveryError> {
    check_items(m, q)?;
    let mut directions = Vec::new();
    let mut skipped = Vec::new();
    let mut intersection_dims = Vec::new();
    for factor in 0..q.n_factors() {
        let space = factor_subspace(m, q, factor, tol)?;
        intersection_dims.push(space.dim());
        if !q.theta_identifiable(factor)? {
            skipped.push(factor);
            continue;
        }
        if space.dim() != 1 {
            return Err(RecoveryError::NotOneDimensional {
                factor: factor + 1,
                dim: space.dim(),
            });
        }
        directions.push((factor, canonical_sign(space.basis.column(0).into_owned(), tol)));
    }
    let mut result = RecoveryResult {
        directions,
        skipped,
        loadings: None,
        intersection_dims,
    };
    if let Some(theta_hat) = result.theta_hat() {
        result.loadings = Some(recover_a(m, q, &theta_hat, tol)?);
    }
    Ok(result)
}
