//! Alternative factorizations of the same `M` witnessing non-identifiability.
//!
//! Both constructions apply an elementary gauge `B = I ± ε e_a e_bᵀ`: one
//! column of `Θ` absorbs a multiple of another while the matching column of
//! `A` absorbs the compensating multiple, so `Θ̃ Ãᵀ = Θ Aᵀ`. Masking keeps the
//! perturbed loading inside its allowed support.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::design::DesignError;
use crate::linalg;
use crate::model::{AssumptionReport, FactorModel, ModelError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CounterexampleError {
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("construction inapplicable: factor {masker} does not mask factor {masked}")]
    Inapplicable { masker: usize, masked: usize },
    #[error("factor {0} has empty support; its loading cannot witness a loading counterexample")]
    EmptyMaskerSupport(usize),
    #[error("no slack under the bound: max |entry| {max_entry} is not below C = {bound_c}")]
    NoSlack { max_entry: f64, bound_c: f64 },
    #[error("epsilon {eps} outside the admissible range [0, {budget}]")]
    BadEpsilon { eps: f64, budget: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CounterexampleKind {
    /// `Θ_k` is not identifiable because `k` masks `k'`.
    Theta,
    /// `A_k` is not identifiable because `k'` masks `k`.
    Loading,
}

impl CounterexampleKind {
    pub fn tag(self) -> &'static str {
        match self {
            CounterexampleKind::Theta => "theta-counterexample",
            CounterexampleKind::Loading => "a-counterexample",
        }
    }
}

/// The gauge step that produced an alternative factorization. Indices are
/// 0-based; `k` is the column whose identifiability is refuted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Perturbation {
    pub k: usize,
    pub k_prime: usize,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlternativeFactorization {
    pub theta_tilde: DMatrix<f64>,
    pub a_tilde: DMatrix<f64>,
    pub perturbation: Perturbation,
    pub kind: CounterexampleKind,
}

/// Recomposition error and assumption check of an alternative factorization.
#[derive(Debug, Clone, PartialEq)]
pub struct Verification {
    pub recomposition_error: f64,
    pub assumptions: AssumptionReport,
}

impl AlternativeFactorization {
    /// The alternative as a model sharing `base`'s design matrix and bound.
    pub fn to_model(&self, base: &FactorModel) -> FactorModel {
        FactorModel::new(
            self.theta_tilde.clone(),
            self.a_tilde.clone(),
            base.design().clone(),
            Some(base.bound_c()),
        )
        .expect("perturbation preserves shapes")
    }

    pub fn verify(&self, base: &FactorModel, tol: f64) -> Verification {
        let alt = self.to_model(base);
        Verification {
            recomposition_error: linalg::relative_frobenius_error(&alt.compose(), &base.compose()),
            assumptions: alt.check_assumptions(tol),
        }
    }

    /// Angle between the refuted column and its perturbed counterpart.
    pub fn perturbed_angle(&self, base: &FactorModel) -> f64 {
        let k = self.perturbation.k;
        let (before, after): (DVector<f64>, DVector<f64>) = match self.kind {
            CounterexampleKind::Theta => (
                base.theta().column(k).into_owned(),
                self.theta_tilde.column(k).into_owned(),
            ),
            CounterexampleKind::Loading => (
                base.loadings().column(k).into_owned(),
                self.a_tilde.column(k).into_owned(),
            ),
        };
        linalg::line_angle(&before, &after)
    }
}

fn column_max(m: &DMatrix<f64>, c: usize) -> f64 {
    m.column(c).iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// Largest safe step for adding multiples of `Θ_theta_source` and
/// `A_loading_source` without breaching the strict bound `C`:
/// `min(0.1, slack / (2 g))` with `slack = C − max |entry|` and
/// `g = max(1, max |entry| of the two source columns)`.
pub fn epsilon_budget(
    model: &FactorModel,
    theta_source: usize,
    loading_source: usize,
) -> Result<f64, CounterexampleError> {
    let k = model.n_factors();
    for f in [theta_source, loading_source] {
        if f >= k {
            return Err(DesignError::FactorOutOfRange { index: f + 1, k }.into());
        }
    }
    let max_entry = model.max_abs_entry();
    let bound_c = model.bound_c();
    let slack = bound_c - max_entry;
    if slack <= 0.0 {
        return Err(CounterexampleError::NoSlack { max_entry, bound_c });
    }
    let g = 1.0_f64
        .max(column_max(model.theta(), theta_source))
        .max(column_max(model.loadings(), loading_source));
    Ok(0.1_f64.min(slack / (2.0 * g)))
}

fn resolve_epsilon(eps: Option<f64>, budget: f64) -> Result<f64, CounterexampleError> {
    match eps {
        None => Ok(budget),
        Some(e) if e.is_finite() && (0.0..=budget).contains(&e) => Ok(e),
        Some(e) => Err(CounterexampleError::BadEpsilon { eps: e, budget }),
    }
}

fn require_masking(model: &FactorModel, masker: usize, masked: usize) -> Result<(), CounterexampleError> {
    if model.design().masks(masker, masked)? {
        Ok(())
    } else {
        Err(CounterexampleError::Inapplicable {
            masker: masker + 1,
            masked: masked + 1,
        })
    }
}

/// Refutes identifiability of `Θ_k` given that `k` masks `k_prime`:
/// `Θ̃_k = Θ_k − ε Θ_k'` and `Ã_k' = A_k' + ε A_k`.
pub fn theta_counterexample(
    model: &FactorModel,
    k: usize,
    k_prime: usize,
    eps: Option<f64>,
) -> Result<AlternativeFactorization, CounterexampleError> {
    require_masking(model, k, k_prime)?;
    let epsilon = resolve_epsilon(eps, epsilon_budget(model, k_prime, k)?)?;

    let mut theta_tilde = model.theta().clone();
    let mut a_tilde = model.loadings().clone();
    let shift = model.theta().column(k_prime) * epsilon;
    theta_tilde.column_mut(k).axpy(-1.0, &shift, 1.0);
    let shift = model.loadings().column(k) * epsilon;
    a_tilde.column_mut(k_prime).axpy(1.0, &shift, 1.0);

    Ok(AlternativeFactorization {
        theta_tilde,
        a_tilde,
        perturbation: Perturbation { k, k_prime, epsilon },
        kind: CounterexampleKind::Theta,
    })
}

/// Refutes identifiability of `A_k` given that `k_prime` masks `k`:
/// `Θ̃_k' = Θ_k' − ε Θ_k` and `Ã_k = A_k + ε A_k'`.
pub fn a_counterexample(
    model: &FactorModel,
    k: usize,
    k_prime: usize,
    eps: Option<f64>,
) -> Result<AlternativeFactorization, CounterexampleError> {
    require_masking(model, k_prime, k)?;
    if model.design().has_empty_support(k_prime) {
        return Err(CounterexampleError::EmptyMaskerSupport(k_prime + 1));
    }
    let epsilon = resolve_epsilon(eps, epsilon_budget(model, k, k_prime)?)?;

    let mut theta_tilde = model.theta().clone();
    let mut a_tilde = model.loadings().clone();
    let shift = model.theta().column(k) * epsilon;
    theta_tilde.column_mut(k_prime).axpy(-1.0, &shift, 1.0);
    let shift = model.loadings().column(k_prime) * epsilon;
    a_tilde.column_mut(k).axpy(1.0, &shift, 1.0);

    Ok(AlternativeFactorization {
        theta_tilde,
        a_tilde,
        perturbation: Perturbation { k, k_prime, epsilon },
        kind: CounterexampleKind::Loading,
    })
}

/// First partner `k'` for which the construction of `kind` applies to
/// column `k`, if any.
pub fn default_partner(model: &FactorModel, k: usize, kind: CounterexampleKind) -> Option<usize> {
    let q = model.design();
    (0..q.n_factors()).filter(|&other| other != k).find(|&other| match kind {
        CounterexampleKind::Theta => q.masks(k, other).unwrap_or(false),
        CounterexampleKind::Loading => {
            q.masks(other, k).unwrap_or(false) && !q.has_empty_support(other)
        }
    })
}
