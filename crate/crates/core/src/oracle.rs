//! Deliberately naive reference implementations for cross-checking.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::design::{DesignError, DesignMatrix, FactorSet};
use crate::linalg;
use crate::model::FactorModel;

/// Largest `K` the subset enumeration accepts.
pub const MAX_ENUMERATED_FACTORS: usize = 24;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error("subset enumeration limited to K <= {MAX_ENUMERATED_FACTORS}, got K = {0}")]
    TooManyFactors(usize),
}

/// Intersection of every `S ⊆ {0..K}` containing `factor` whose item set
/// `R(S)` is non-empty, found by enumerating all `2^K` subsets. No such `S`
/// gives the full set.
pub fn intersection_set_bruteforce(q: &DesignMatrix, factor: usize) -> Result<FactorSet, OracleError> {
    let k = q.n_factors();
    if k > MAX_ENUMERATED_FACTORS {
        return Err(OracleError::TooManyFactors(k));
    }
    if factor >= k {
        return Err(DesignError::FactorOutOfRange { index: factor + 1, k }.into());
    }
    let mut acc: u32 = (1u32 << k) - 1;
    for subset in 0u32..(1u32 << k) {
        if subset & (1 << factor) == 0 {
            continue;
        }
        let nonempty = (0..q.n_items()).any(|item| {
            (0..k).all(|f| q.get(item, f) == (subset & (1 << f) != 0))
        });
        if nonempty {
            acc &= subset;
        }
    }
    Ok((0..k).filter(|&f| acc & (1 << f) != 0).collect())
}

/// Looks for coefficients `c`, not all zero, with `Σ_{k'≠k} c_k' A_k'(R_k) = 0`
/// where `R_k` are the items outside `supp(Q_k)`. A witness means `A_k` can
/// be mixed with other loadings without leaving its support. Rank is judged
/// relative to the largest singular value of the restricted block.
pub fn a_nonidentifiability_witness(model: &FactorModel, factor: usize, tol: f64) -> Option<DVector<f64>> {
    let q = model.design();
    let k = q.n_factors();
    if factor >= k || k == 1 {
        return None;
    }
    let others: Vec<usize> = (0..k).filter(|&f| f != factor).collect();
    let roots: Vec<usize> = (0..q.n_items()).filter(|&j| !q.get(j, factor)).collect();
    if roots.is_empty() {
        let mut c = DVector::zeros(others.len());
        c[0] = 1.0;
        return Some(c);
    }
    let a = model.loadings();
    let block = DMatrix::from_fn(roots.len(), others.len(), |r, c| a[(roots[r], others[c])]);
    let largest = linalg::singular_values(&block).first().copied().unwrap_or(0.0);
    let (c, smallest) = linalg::smallest_right_singular(&block);
    (smallest <= tol * largest).then_some(c)
}
