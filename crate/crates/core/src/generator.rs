//! Seeded random instances: design matrices with controlled masking, models
//! satisfying every assumption, and the slowly decaying two-column example.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::design::{DesignError, DesignMatrix, FactorSet};
use crate::linalg;
use crate::model::FactorModel;
use crate::DEFAULT_TOL;

/// Resampling attempts before [`random_model`] gives up.
pub const MAX_ATTEMPTS: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeneratorError {
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
    #[error("infeasible masking plant: {0}")]
    InfeasiblePlant(String),
    #[error("{needed} items are needed for the requested patterns, only {j} available")]
    TooFewItems { needed: usize, j: usize },
    #[error("pattern {pattern} has {items} items, needs at least {needed}")]
    UnderfilledPattern {
        pattern: String,
        items: usize,
        needed: usize,
    },
    #[error("no valid model after {0} attempts")]
    RetriesExhausted(usize),
    #[error("decay statistics need 1 <= m < n, got n = {n}, m = {m}")]
    BadSplit { n: usize, m: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum PatternPolicy {
    /// Rows are random non-empty patterns.
    UniformRandom,
    /// `(masker, masked)` pairs, 0-based: `supp(Q_masker) ⊊ supp(Q_masked)`.
    /// The transitive closure of the pairs holds and no other masking occurs.
    PlantedMasking(Vec<(usize, usize)>),
    /// The first `K` rows form the identity; no column masks another.
    IdentityAnchored,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    pub n: usize,
    pub j: usize,
    pub k: usize,
    pub seed: u64,
    pub policy: PatternPolicy,
    pub entry_scale: f64,
}

impl GeneratorSpec {
    pub fn new(n: usize, j: usize, k: usize, seed: u64, policy: PatternPolicy) -> Self {
        GeneratorSpec {
            n,
            j,
            k,
            seed,
            policy,
            entry_scale: 1.0,
        }
    }

    fn validate(&self) -> Result<(), GeneratorError> {
        if self.n == 0 || self.j == 0 || self.k == 0 {
            return Err(GeneratorError::InvalidSpec(
                "n, j and k must be positive".into(),
            ));
        }
        if !(self.entry_scale.is_finite() && self.entry_scale > 0.0) {
            return Err(GeneratorError::InvalidSpec(format!(
                "entry scale must be positive, got {}",
                self.entry_scale
            )));
        }
        Ok(())
    }
}

/// Transitive closure of the planted relation; errors on out-of-range
/// indices, self pairs and cycles.
fn planted_closure(k: usize, pairs: &[(usize, usize)]) -> Result<Vec<Vec<bool>>, GeneratorError> {
    let mut rel = vec![vec![false; k]; k];
    for &(a, b) in pairs {
        if a >= k || b >= k {
            return Err(DesignError::FactorOutOfRange {
                index: a.max(b) + 1,
                k,
            }
            .into());
        }
        if a == b {
            return Err(GeneratorError::InfeasiblePlant(format!(
                "factor {} cannot mask itself",
                a + 1
            )));
        }
        rel[a][b] = true;
    }
    for via in 0..k {
        for a in 0..k {
            if rel[a][via] {
                for b in 0..k {
                    if rel[via][b] {
                        rel[a][b] = true;
                    }
                }
            }
        }
    }
    if let Some(a) = (0..k).find(|&a| rel[a][a]) {
        return Err(GeneratorError::InfeasiblePlant(format!(
            "cyclic containment through factor {}",
            a + 1
        )));
    }
    Ok(rel)
}

fn random_pattern(rng: &mut ChaCha8Rng, k: usize) -> FactorSet {
    loop {
        let s: FactorSet = (0..k).filter(|_| rng.gen_bool(0.5)).collect();
        if !s.is_empty() {
            return s;
        }
    }
}

/// Extends `s` so that whenever a masker is present, everything it masks is
/// too. Rows with such patterns never break a planted masking pair.
fn up_closure(mut s: FactorSet, rel: &[Vec<bool>]) -> FactorSet {
    let members: Vec<usize> = s.iter().copied().collect();
    for a in members {
        s.extend((0..rel.len()).filter(|&b| rel[a][b]));
    }
    s
}

/// Random design matrix following `spec.policy`. Every realized pattern `S`
/// is carried by at least `|S|` items, so [`random_model`] can satisfy the
/// loading rank condition.
pub fn random_design(spec: &GeneratorSpec) -> Result<DesignMatrix, GeneratorError> {
    spec.validate()?;
    let k = spec.k;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let relation = match &spec.policy {
        PatternPolicy::UniformRandom => None,
        PatternPolicy::IdentityAnchored => Some(vec![vec![false; k]; k]),
        PatternPolicy::PlantedMasking(pairs) => Some(planted_closure(k, pairs)?),
    };

    // One witness pattern per factor: the factor plus everything it masks.
    // Its items separate the factor from every column it must not mask.
    let mut anchored: Vec<FactorSet> = Vec::new();
    if let Some(rel) = &relation {
        for c in 0..k {
            let pattern = up_closure(FactorSet::from([c]), rel);
            for _ in 0..pattern.len() {
                anchored.push(pattern.clone());
            }
        }
    }
    if anchored.len() > spec.j {
        return Err(GeneratorError::TooFewItems {
            needed: anchored.len(),
            j: spec.j,
        });
    }

    let mut filler: Vec<FactorSet> = Vec::new();
    let mut remaining = spec.j - anchored.len();
    while remaining > 0 {
        let mut pattern = random_pattern(&mut rng, k);
        if let Some(rel) = &relation {
            pattern = up_closure(pattern, rel);
        }
        if pattern.len() <= remaining {
            for _ in 0..pattern.len() {
                filler.push(pattern.clone());
            }
            remaining -= pattern.len();
        } else {
            // Not enough room for a new block: repeat an existing pattern.
            let existing: Vec<&FactorSet> = anchored.iter().chain(filler.iter()).collect();
            let repeat = match existing.choose(&mut rng) {
                Some(p) => (*p).clone(),
                None => FactorSet::from([rng.gen_range(0..k)]),
            };
            filler.push(repeat);
            remaining -= 1;
        }
    }
    filler.shuffle(&mut rng);

    anchored.extend(filler);
    Ok(DesignMatrix::from_patterns(k, &anchored)?)
}

/// Random model on design `q`: entries uniform in `(−s, s)`, loadings masked
/// to the support of `q` with exact zeros. Resamples until every assumption
/// holds.
pub fn random_model(spec: &GeneratorSpec, q: &DesignMatrix) -> Result<FactorModel, GeneratorError> {
    random_model_with(spec, q, |_, _, _| {}).map(|(model, _)| model)
}

/// [`random_model`] with a hook that may edit each draw before it is checked.
/// Returns the model and the number of attempts used.
pub fn random_model_with<F>(
    spec: &GeneratorSpec,
    q: &DesignMatrix,
    mut tamper: F,
) -> Result<(FactorModel, usize), GeneratorError>
where
    F: FnMut(usize, &mut DMatrix<f64>, &mut DMatrix<f64>),
{
    spec.validate()?;
    let (j, k) = (q.n_items(), q.n_factors());
    if spec.n < k {
        return Err(GeneratorError::InvalidSpec(format!(
            "n = {} is below the number of factors {}",
            spec.n, k
        )));
    }
    for pattern in q.realized_patterns() {
        if pattern.items.len() < pattern.factors.len() {
            return Err(GeneratorError::UnderfilledPattern {
                pattern: format!(
                    "{:?}",
                    pattern.factors.iter().map(|f| f + 1).collect::<Vec<_>>()
                ),
                items: pattern.items.len(),
                needed: pattern.factors.len(),
            });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(1);
    let s = spec.entry_scale;
    for attempt in 0..MAX_ATTEMPTS {
        let mut theta = DMatrix::from_fn(spec.n, k, |_, _| rng.gen_range(-s..s));
        let mut a = DMatrix::from_fn(j, k, |_, _| rng.gen_range(-s..s));
        for item in 0..j {
            for factor in 0..k {
                if !q.get(item, factor) {
                    a[(item, factor)] = 0.0;
                }
            }
        }
        tamper(attempt, &mut theta, &mut a);
        let model = FactorModel::new(theta, a, q.clone(), None)
            .map_err(|e| GeneratorError::InvalidSpec(e.to_string()))?;
        if model.check_assumptions(DEFAULT_TOL).overall {
            return Ok((model, attempt + 1));
        }
    }
    Err(GeneratorError::RetriesExhausted(MAX_ATTEMPTS))
}

/// `n × 2` matrix with disjoint supports: row `j` (1-based) holds `1/j` in
/// the first column when `j` is even and in the second when `j` is odd.
pub fn decay_example(n: usize) -> DMatrix<f64> {
    let mut b = DMatrix::zeros(n, 2);
    for row in 0..n {
        let j = row + 1;
        let col = if j % 2 == 0 { 0 } else { 1 };
        b[(row, col)] = 1.0 / j as f64;
    }
    b
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayStats {
    pub n: usize,
    pub m: usize,
    /// Smallest singular value of `decay_example(n) / √n`.
    pub sigma_min: f64,
    /// Squared Frobenius norm of `decay_example(n) / √n`.
    pub frobenius_sq: f64,
    /// `2m/n + 2(n − m)/(m² n)`.
    pub bound: f64,
}

impl DecayStats {
    pub fn bound_holds(&self) -> bool {
        self.frobenius_sq <= self.bound && self.sigma_min <= self.frobenius_sq.sqrt()
    }
}

/// `⌈√n⌉`, clamped below `n`.
pub fn default_split(n: usize) -> usize {
    let mut r = (n as f64).sqrt() as usize;
    while r * r < n {
        r += 1;
    }
    while r > 1 && (r - 1) * (r - 1) >= n {
        r -= 1;
    }
    r.min(n.saturating_sub(1)).max(1)
}

pub fn decay_bound(n: usize, m: usize) -> f64 {
    let (n, m) = (n as f64, m as f64);
    2.0 * m / n + 2.0 * (n - m) / (m * m * n)
}

pub fn decay_stats(n: usize, m: Option<usize>) -> Result<DecayStats, GeneratorError> {
    let m = m.unwrap_or_else(|| default_split(n));
    if m == 0 || m >= n {
        return Err(GeneratorError::BadSplit { n, m });
    }
    let b = decay_example(n) / (n as f64).sqrt();
    let sigma_min = linalg::singular_values(&b).last().copied().unwrap_or(0.0);
    Ok(DecayStats {
        n,
        m,
        sigma_min,
        frobenius_sq: b.norm_squared(),
        bound: decay_bound(n, m),
    })
}
