//! The factor model `M = Θ Aᵀ` tied to a design matrix, and numerical checks
//! of the four model assumptions.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::design::{DesignMatrix, FactorSet};
use crate::linalg;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("theta has {found} columns, design matrix has {expected}")]
    ThetaColumns { found: usize, expected: usize },
    #[error("loadings are {rows}x{cols}, design matrix is {j}x{k}")]
    LoadingShape {
        rows: usize,
        cols: usize,
        j: usize,
        k: usize,
    },
    #[error("bound C must be positive and finite, got {0}")]
    BadBound(f64),
    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),
}

/// Latent factors `Θ` (`N × K`), loadings `A` (`J × K`) and the design matrix
/// `Q` constraining the support of `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    theta: DMatrix<f64>,
    a: DMatrix<f64>,
    q: DesignMatrix,
    bound_c: Option<f64>,
}

impl FactorModel {
    /// Checks shapes only. Assumption violations are reported by
    /// [`FactorModel::check_assumptions`], not rejected here.
    pub fn new(
        theta: DMatrix<f64>,
        a: DMatrix<f64>,
        q: DesignMatrix,
        bound_c: Option<f64>,
    ) -> Result<Self, ModelError> {
        let (j, k) = (q.n_items(), q.n_factors());
        if theta.ncols() != k {
            return Err(ModelError::ThetaColumns {
                found: theta.ncols(),
                expected: k,
            });
        }
        if a.nrows() != j || a.ncols() != k {
            return Err(ModelError::LoadingShape {
                rows: a.nrows(),
                cols: a.ncols(),
                j,
                k,
            });
        }
        if let Some(c) = bound_c {
            if !(c.is_finite() && c > 0.0) {
                return Err(ModelError::BadBound(c));
            }
        }
        if theta.iter().any(|x| !x.is_finite()) {
            return Err(ModelError::NonFinite("theta"));
        }
        if a.iter().any(|x| !x.is_finite()) {
            return Err(ModelError::NonFinite("loadings"));
        }
        Ok(FactorModel {
            theta,
            a,
            q,
            bound_c,
        })
    }

    pub fn theta(&self) -> &DMatrix<f64> {
        &self.theta
    }

    pub fn loadings(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn design(&self) -> &DesignMatrix {
        &self.q
    }

    /// The bound as supplied, if any.
    pub fn explicit_bound(&self) -> Option<f64> {
        self.bound_c
    }

    /// The bound `C`; defaults to `1 + max |entry|` over `Θ` and `A`.
    pub fn bound_c(&self) -> f64 {
        self.bound_c.unwrap_or_else(|| 1.0 + self.max_abs_entry())
    }

    pub fn max_abs_entry(&self) -> f64 {
        linalg::max_abs(&self.theta).max(linalg::max_abs(&self.a))
    }

    pub fn n_rows(&self) -> usize {
        self.theta.nrows()
    }

    pub fn n_items(&self) -> usize {
        self.q.n_items()
    }

    pub fn n_factors(&self) -> usize {
        self.q.n_factors()
    }

    /// `M = Θ Aᵀ`, `N × J`.
    pub fn compose(&self) -> DMatrix<f64> {
        &self.theta * self.a.transpose()
    }

    pub fn check_assumptions(&self, tol: f64) -> AssumptionReport {
        let k = self.n_factors();

        let sv = linalg::singular_values(&self.theta);
        let theta_rank = linalg::numerical_rank(&self.theta, tol);
        let theta_min_singular = if sv.len() < k {
            0.0
        } else {
            sv.last().copied().unwrap_or(0.0)
        };
        let a1_ok = theta_rank == k;

        let mut a2_failures = Vec::new();
        for pattern in self.q.realized_patterns() {
            let cols: Vec<usize> = pattern.factors.iter().copied().collect();
            let sub = DMatrix::from_fn(pattern.items.len(), cols.len(), |r, c| {
                self.a[(pattern.items[r], cols[c])]
            });
            let rank = linalg::numerical_rank(&sub, tol);
            if rank != cols.len() {
                a2_failures.push(RankFailure {
                    pattern: pattern.factors,
                    rank,
                    required: cols.len(),
                });
            }
        }

        let mut a3_violations = Vec::new();
        for item in 0..self.n_items() {
            for factor in 0..k {
                if !self.q.get(item, factor) && self.a[(item, factor)] != 0.0 {
                    a3_violations.push((item, factor));
                }
            }
        }

        let max_entry = self.max_abs_entry();
        let bound_c = self.bound_c();
        let a4_ok = max_entry < bound_c;

        AssumptionReport {
            a1_theta_rank_ok: a1_ok,
            theta_rank,
            theta_min_singular,
            a2_failures: a2_failures.clone(),
            a3_violations: a3_violations.clone(),
            a4_max_entry: max_entry,
            bound_c,
            a4_ok,
            overall: a1_ok && a2_failures.is_empty() && a3_violations.is_empty() && a4_ok,
        }
    }
}

/// A realized pattern `S` whose loading block `A[R(S), S]` has rank below `|S|`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankFailure {
    pub pattern: FactorSet,
    pub rank: usize,
    pub required: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    /// Columns of `Θ` numerically independent.
    pub a1_theta_rank_ok: bool,
    pub theta_rank: usize,
    pub theta_min_singular: f64,
    /// Realized patterns whose loading block is rank deficient.
    pub a2_failures: Vec<RankFailure>,
    /// `(item, factor)` pairs where `Q` is zero but `A` is not.
    pub a3_violations: Vec<(usize, usize)>,
    pub a4_max_entry: f64,
    pub bound_c: f64,
    pub a4_ok: bool,
    pub overall: bool,
}
