//! Combinatorics of the binary design matrix `Q`: supports, row patterns,
//! the item sets `R(S)`, masking, and the identifiability verdicts.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

/// A subset of factor indices (0-based), ordered.
pub type FactorSet = BTreeSet<usize>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DesignError {
    #[error("design matrix must have at least one row and one column")]
    Empty,
    #[error("row {row} has {found} entries, expected {expected}")]
    Ragged {
        row: usize,
        found: usize,
        expected: usize,
    },
    #[error("entry ({row}, {col}) is {value}, expected 0 or 1")]
    NotBinary { row: usize, col: usize, value: i64 },
    #[error("factor index {index} out of range 1..={k}")]
    FactorOutOfRange { index: usize, k: usize },
    #[error("masking is defined between distinct factors, got {0} twice")]
    SameFactor(usize),
}

/// Binary `J × K` design matrix. Rows are items, columns are factors, and a
/// zero at `(j, k)` forces the loading `A_k(j)` to vanish.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DesignMatrix {
    j: usize,
    k: usize,
    entries: Vec<bool>,
}

/// A row pattern `S` that occurs in `Q`, with the items that carry it.
/// The item list is exactly `R(S)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct RealizedPattern {
    pub factors: FactorSet,
    pub items: Vec<usize>,
}

/// Identifiability verdict for a loading column. `Undefined` is returned when
/// some column of `Q` has empty support, which the loading criterion excludes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    Identifiable,
    NotIdentifiable,
    Undefined,
}

impl Verdict {
    pub fn from_bool(identifiable: bool) -> Self {
        if identifiable {
            Verdict::Identifiable
        } else {
            Verdict::NotIdentifiable
        }
    }

    pub fn as_bool(self) -> Option<bool> {
        match self {
            Verdict::Identifiable => Some(true),
            Verdict::NotIdentifiable => Some(false),
            Verdict::Undefined => None,
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Identifiable => f.write_str("true"),
            Verdict::NotIdentifiable => f.write_str("false"),
            Verdict::Undefined => f.write_str("undefined"),
        }
    }
}

/// Everything [`DesignMatrix::analyze`] can say about `Q`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdentifiabilityReport {
    pub j: usize,
    pub k: usize,
    /// `masking[a][b]` is true iff factor `a` masks factor `b` (`a != b`).
    pub masking: Vec<Vec<bool>>,
    pub theta_identifiable: Vec<bool>,
    pub a_identifiable: Vec<Verdict>,
    pub intersection_sets: Vec<FactorSet>,
    /// Sorted.
    pub warnings: Vec<String>,
}

impl DesignMatrix {
    /// Builds `Q` from rows of integers, each 0 or 1.
    pub fn new<R: AsRef<[i64]>>(rows: &[R]) -> Result<Self, DesignError> {
        let j = rows.len();
        let k = rows.first().map_or(0, |r| r.as_ref().len());
        if j == 0 || k == 0 {
            return Err(DesignError::Empty);
        }
        let mut entries = Vec::with_capacity(j * k);
        for (row, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != k {
                return Err(DesignError::Ragged {
                    row: row + 1,
                    found: r.len(),
                    expected: k,
                });
            }
            for (col, &value) in r.iter().enumerate() {
                match value {
                    0 => entries.push(false),
                    1 => entries.push(true),
                    _ => {
                        return Err(DesignError::NotBinary {
                            row: row + 1,
                            col: col + 1,
                            value,
                        })
                    }
                }
            }
        }
        Ok(DesignMatrix { j, k, entries })
    }

    pub fn from_bool_rows<R: AsRef<[bool]>>(rows: &[R]) -> Result<Self, DesignError> {
        let ints: Vec<Vec<i64>> = rows
            .iter()
            .map(|r| r.as_ref().iter().map(|&b| i64::from(b)).collect())
            .collect();
        Self::new(&ints)
    }

    /// `J × K` matrix whose rows are the given patterns.
    pub fn from_patterns(k: usize, patterns: &[FactorSet]) -> Result<Self, DesignError> {
        if k == 0 || patterns.is_empty() {
            return Err(DesignError::Empty);
        }
        let mut entries = vec![false; patterns.len() * k];
        for (row, pattern) in patterns.iter().enumerate() {
            for &f in pattern {
                if f >= k {
                    return Err(DesignError::FactorOutOfRange { index: f + 1, k });
                }
                entries[row * k + f] = true;
            }
        }
        Ok(DesignMatrix {
            j: patterns.len(),
            k,
            entries,
        })
    }

    pub fn identity(k: usize) -> Result<Self, DesignError> {
        let patterns: Vec<FactorSet> = (0..k).map(|f| FactorSet::from([f])).collect();
        Self::from_patterns(k, &patterns)
    }

    /// Number of items `J`.
    pub fn n_items(&self) -> usize {
        self.j
    }

    /// Number of factors `K`.
    pub fn n_factors(&self) -> usize {
        self.k
    }

    pub fn get(&self, item: usize, factor: usize) -> bool {
        self.entries[item * self.k + factor]
    }

    pub fn to_rows(&self) -> Vec<Vec<u8>> {
        self.entries
            .chunks(self.k)
            .map(|r| r.iter().map(|&b| u8::from(b)).collect())
            .collect()
    }

    fn check_factor(&self, factor: usize) -> Result<(), DesignError> {
        if factor < self.k {
            Ok(())
        } else {
            Err(DesignError::FactorOutOfRange {
                index: factor + 1,
                k: self.k,
            })
        }
    }

    pub fn row_pattern(&self, item: usize) -> FactorSet {
        (0..self.k).filter(|&f| self.get(item, f)).collect()
    }

    /// Items `j` with `Q_k(j) = 1`.
    pub fn support(&self, factor: usize) -> Vec<usize> {
        (0..self.j).filter(|&i| self.get(i, factor)).collect()
    }

    pub fn has_empty_support(&self, factor: usize) -> bool {
        (0..self.j).all(|i| !self.get(i, factor))
    }

    /// Items whose row pattern is all zero.
    pub fn zero_rows(&self) -> Vec<usize> {
        (0..self.j)
            .filter(|&i| (0..self.k).all(|f| !self.get(i, f)))
            .collect()
    }

    /// True iff `supp(Q_masker) ⊆ supp(Q_masked)`. Inclusion is non-strict, so
    /// columns with identical supports mask each other.
    pub fn masks(&self, masker: usize, masked: usize) -> Result<bool, DesignError> {
        self.check_factor(masker)?;
        self.check_factor(masked)?;
        if masker == masked {
            return Err(DesignError::SameFactor(masker + 1));
        }
        Ok(self.masks_unchecked(masker, masked))
    }

    fn masks_unchecked(&self, masker: usize, masked: usize) -> bool {
        (0..self.j).all(|i| !self.get(i, masker) || self.get(i, masked))
    }

    /// `R(S)`: the items whose row pattern is exactly `s`.
    pub fn r_set(&self, s: &FactorSet) -> Result<Vec<usize>, DesignError> {
        if let Some(&f) = s.iter().find(|&&f| f >= self.k) {
            return Err(DesignError::FactorOutOfRange {
                index: f + 1,
                k: self.k,
            });
        }
        Ok((0..self.j)
            .filter(|&i| (0..self.k).all(|f| self.get(i, f) == s.contains(&f)))
            .collect())
    }

    /// The non-empty patterns `S` with `R(S)` non-empty, sorted
    /// lexicographically, each with its items. All-zero rows are left out
    /// (see [`DesignMatrix::zero_rows`]).
    pub fn realized_patterns(&self) -> Vec<RealizedPattern> {
        let mut by_pattern: BTreeMap<FactorSet, Vec<usize>> = BTreeMap::new();
        for i in 0..self.j {
            let pattern = self.row_pattern(i);
            if !pattern.is_empty() {
                by_pattern.entry(pattern).or_default().push(i);
            }
        }
        by_pattern
            .into_iter()
            .map(|(factors, items)| RealizedPattern { factors, items })
            .collect()
    }

    /// Intersection of every realized pattern containing `factor`. When no
    /// realized pattern contains it (empty support) the empty intersection is
    /// taken to be the full set `{0..K}`.
    pub fn intersection_set(&self, factor: usize) -> Result<FactorSet, DesignError> {
        self.check_factor(factor)?;
        let mut acc: Option<Vec<bool>> = None;
        for i in 0..self.j {
            if !self.get(i, factor) {
                continue;
            }
            let row = &self.entries[i * self.k..(i + 1) * self.k];
            match acc.as_mut() {
                None => acc = Some(row.to_vec()),
                Some(a) => a.iter_mut().zip(row).for_each(|(x, &y)| *x &= y),
            }
        }
        Ok(match acc {
            None => (0..self.k).collect(),
            Some(a) => (0..self.k).filter(|&f| a[f]).collect(),
        })
    }

    /// Whether `Θ_factor` is identifiable: `factor` masks no other factor.
    pub fn theta_identifiable(&self, factor: usize) -> Result<bool, DesignError> {
        self.check_factor(factor)?;
        Ok((0..self.k)
            .filter(|&other| other != factor)
            .all(|other| !self.masks_unchecked(factor, other)))
    }

    /// Whether `A_factor` is identifiable: no other factor masks `factor`.
    /// Undefined when any column of `Q` has empty support.
    pub fn a_identifiable(&self, factor: usize) -> Result<Verdict, DesignError> {
        self.check_factor(factor)?;
        if (0..self.k).any(|f| self.has_empty_support(f)) {
            return Ok(Verdict::Undefined);
        }
        Ok(Verdict::from_bool(
            (0..self.k)
                .filter(|&other| other != factor)
                .all(|other| !self.masks_unchecked(other, factor)),
        ))
    }

    pub fn analyze(&self) -> IdentifiabilityReport {
        let k = self.k;
        let masking: Vec<Vec<bool>> = (0..k)
            .map(|a| {
                (0..k)
                    .map(|b| a != b && self.masks_unchecked(a, b))
                    .collect()
            })
            .collect();
        let any_empty = (0..k).any(|f| self.has_empty_support(f));
        let theta_identifiable: Vec<bool> = masking.iter().map(|row| !row.contains(&true)).collect();
        let a_identifiable = (0..k)
            .map(|b| {
                if any_empty {
                    Verdict::Undefined
                } else {
                    Verdict::from_bool((0..k).all(|a| !masking[a][b]))
                }
            })
            .collect();
        let intersection_sets = (0..k)
            .map(|f| self.intersection_set(f).expect("index in range"))
            .collect();

        let mut warnings = Vec::new();
        for i in self.zero_rows() {
            warnings.push(format!("item {}: all-zero row pattern", i + 1));
        }
        for f in (0..k).filter(|&f| self.has_empty_support(f)) {
            warnings.push(format!(
                "factor {}: empty support; latent factor not identifiable, loading verdicts undefined",
                f + 1
            ));
        }
        for a in 0..k {
            for b in a + 1..k {
                if masking[a][b] && masking[b][a] {
                    warnings.push(format!(
                        "factors {} and {}: identical supports (mutual masking)",
                        a + 1,
                        b + 1
                    ));
                }
            }
        }
        warnings.sort();

        IdentifiabilityReport {
            j: self.j,
            k,
            masking,
            theta_identifiable,
            a_identifiable,
            intersection_sets,
            warnings,
        }
    }
}
