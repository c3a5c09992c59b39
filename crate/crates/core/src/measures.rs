//! Discrete probability measures on the line and on `R^n`.
//!
//! Both types are canonical after construction: atoms sorted, exact duplicates
//! merged, zero-weight atoms dropped and weights divided by their computed sum.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance for mass-balance assertions over `count` atoms.
pub fn mass_tolerance(count: usize) -> f64 {
    1e-12 * count.max(1) as f64
}

// `-0.0 + 0.0 == +0.0`, so signed zeros collapse onto one atom.
fn canonical(x: f64) -> f64 {
    x + 0.0
}

fn check_weights(weights: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for &w in weights {
        if !w.is_finite() {
            return Err(Error::NonFinite("weights"));
        }
        if w < 0.0 {
            return Err(Error::NegativeWeight(w));
        }
        total += w;
    }
    if total <= 0.0 {
        return Err(Error::ZeroMass);
    }
    Ok(total)
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Probability measure on `R` with finitely many atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure1D {
    atoms: Vec<f64>,
    weights: Vec<f64>,
    // cumulative[i] = F(atoms[i]); the last entry is pinned to exactly 1.
    cumulative: Vec<f64>,
}

impl DiscreteMeasure1D {
    pub fn new(atoms: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::Empty);
        }
        if atoms.len() != weights.len() {
            return Err(Error::LengthMismatch(atoms.len(), weights.len()));
        }
        if atoms.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("atoms"));
        }
        check_weights(&weights)?;

        let mut pairs: Vec<(f64, f64)> = atoms
            .into_iter()
            .map(canonical)
            .zip(weights)
            .filter(|&(_, w)| w > 0.0)
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut merged_atoms: Vec<f64> = Vec::with_capacity(pairs.len());
        let mut merged_weights: Vec<f64> = Vec::with_capacity(pairs.len());
        for (x, w) in pairs {
            match merged_atoms.last() {
                Some(&last) if last == x => *merged_weights.last_mut().unwrap() += w,
                _ => {
                    merged_atoms.push(x);
                    merged_weights.push(w);
                }
            }
        }
        let total: f64 = merged_weights.iter().sum();
        for w in &mut merged_weights {
            *w /= total;
        }
        Ok(Self::from_sorted(merged_atoms, merged_weights))
    }

    fn from_sorted(atoms: Vec<f64>, weights: Vec<f64>) -> Self {
        let mut cumulative = Vec::with_capacity(weights.len());
        let mut acc = 0.0;
        for &w in &weights {
            acc += w;
            cumulative.push(acc);
        }
        *cumulative.last_mut().unwrap() = 1.0;
        Self {
            atoms,
            weights,
            cumulative,
        }
    }

    /// Dirac mass at `x`.
    pub fn dirac(x: f64) -> Result<Self> {
        Self::new(vec![x], vec![1.0])
    }

    /// Equal weights on the given atoms.
    pub fn uniform(atoms: Vec<f64>) -> Result<Self> {
        let weights = vec![1.0; atoms.len()];
        Self::new(atoms, weights)
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Values of the CDF at each atom, i.e. the jump points of the quantile
    /// function in `(0, 1]`. The last value is exactly 1.
    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    /// `F(x) = mu((-inf, x])`.
    pub fn cdf(&self, x: f64) -> Result<f64> {
        if !x.is_finite() {
            return Err(Error::NonFinite("cdf argument"));
        }
        let below = self.atoms.partition_point(|&a| a <= x);
        Ok(if below == 0 {
            0.0
        } else {
            self.cumulative[below - 1]
        })
    }

    /// Generalized inverse `inf { x : F(x) >= u }` for `u` in `(0, 1]`.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u <= 1.0) {
            return Err(Error::Domain(format!("quantile level {u} not in (0, 1]")));
        }
        Ok(self.atoms[self.quantile_index(u)])
    }

    /// Index of the atom returned by `quantile(u)`; `u` is assumed in `(0, 1]`.
    pub(crate) fn quantile_index(&self, u: f64) -> usize {
        self.cumulative
            .partition_point(|&c| c < u)
            .min(self.atoms.len() - 1)
    }

    /// Image under `x -> scale * x + shift`.
    pub fn map(&self, map: AffineMap) -> Result<Self> {
        map.check()?;
        Self::new(
            self.atoms.iter().map(|&x| map.apply(x)).collect(),
            self.weights.clone(),
        )
    }

    /// Largest per-atom weight difference, atoms missing on one side counting
    /// as weight zero.
    pub fn weight_discrepancy(&self, other: &Self) -> f64 {
        let (mut i, mut j) = (0, 0);
        let mut worst: f64 = 0.0;
        while i < self.len() || j < other.len() {
            let ord = match (self.atoms.get(i), other.atoms.get(j)) {
                (Some(a), Some(b)) => a.total_cmp(b),
                (Some(_), None) => Ordering::Less,
                _ => Ordering::Greater,
            };
            let diff = match ord {
                Ordering::Less => {
                    i += 1;
                    self.weights[i - 1]
                }
                Ordering::Greater => {
                    j += 1;
                    other.weights[j - 1]
                }
                Ordering::Equal => {
                    i += 1;
                    j += 1;
                    (self.weights[i - 1] - other.weights[j - 1]).abs()
                }
            };
            worst = worst.max(diff);
        }
        worst
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let repr: MeasureRepr = serde_json::from_str(s)?;
        Self::try_from(repr)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(&MeasureRepr::from(self.clone())).expect("measure serializes")
    }
}

/// Strictly increasing affine map `x -> scale * x + shift`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub scale: f64,
    pub shift: f64,
}

impl AffineMap {
    pub const IDENTITY: AffineMap = AffineMap {
        scale: 1.0,
        shift: 0.0,
    };

    pub fn new(scale: f64, shift: f64) -> Result<Self> {
        let map = Self { scale, shift };
        map.check()?;
        Ok(map)
    }

    pub fn scaling(scale: f64) -> Result<Self> {
        Self::new(scale, 0.0)
    }

    fn check(&self) -> Result<()> {
        if !self.scale.is_finite() || !self.shift.is_finite() {
            return Err(Error::NonFinite("affine map"));
        }
        if self.scale <= 0.0 {
            return Err(Error::Domain(format!(
                "affine map scale {} is not positive",
                self.scale
            )));
        }
        Ok(())
    }

    pub fn apply(&self, x: f64) -> f64 {
        self.scale * x + self.shift
    }
}

/// Probability measure on `R^n` with finitely many atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct MultivariateMeasure {
    dim: usize,
    atoms: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl MultivariateMeasure {
    pub fn new(atoms: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::Empty);
        }
        if atoms.len() != weights.len() {
            return Err(Error::LengthMismatch(atoms.len(), weights.len()));
        }
        let dim = atoms[0].len();
        if dim == 0 {
            return Err(Error::Domain(
                "atoms must have at least one coordinate".into(),
            ));
        }
        for (index, atom) in atoms.iter().enumerate() {
            if atom.len() != dim {
                return Err(Error::AtomDimension {
                    index,
                    expected: dim,
                    found: atom.len(),
                });
            }
            if atom.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("atoms"));
            }
        }
        check_weights(&weights)?;

        let mut pairs: Vec<(Vec<f64>, f64)> = atoms
            .into_iter()
            .map(|a| a.into_iter().map(canonical).collect())
            .zip(weights)
            .filter(|&(_, w)| w > 0.0)
            .collect();
        pairs.sort_by(|a, b| lex_cmp(&a.0, &b.0));

        let mut merged_atoms: Vec<Vec<f64>> = Vec::with_capacity(pairs.len());
        let mut merged_weights: Vec<f64> = Vec::with_capacity(pairs.len());
        for (x, w) in pairs {
            match merged_atoms.last() {
                Some(last) if *last == x => *merged_weights.last_mut().unwrap() += w,
                _ => {
                    merged_atoms.push(x);
                    merged_weights.push(w);
                }
            }
        }
        let total: f64 = merged_weights.iter().sum();
        for w in &mut merged_weights {
            *w /= total;
        }
        Ok(Self {
            dim,
            atoms: merged_atoms,
            weights: merged_weights,
        })
    }

    pub fn dirac(x: Vec<f64>) -> Result<Self> {
        Self::new(vec![x], vec![1.0])
    }

    pub fn uniform(atoms: Vec<Vec<f64>>) -> Result<Self> {
        let weights = vec![1.0; atoms.len()];
        Self::new(atoms, weights)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn atoms(&self) -> &[Vec<f64>] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Pushforward under the projection onto coordinate `index` (0-based).
    pub fn marginal(&self, index: usize) -> Result<DiscreteMeasure1D> {
        if index >= self.dim {
            return Err(Error::IndexOutOfRange {
                index,
                dim: self.dim,
            });
        }
        DiscreteMeasure1D::new(
            self.atoms.iter().map(|a| a[index]).collect(),
            self.weights.clone(),
        )
    }

    pub fn marginals(&self) -> Vec<DiscreteMeasure1D> {
        (0..self.dim)
            .map(|i| self.marginal(i).expect("index in range"))
            .collect()
    }

    /// Image under a coordinatewise increasing affine map, one map per axis.
    pub fn map_coordinates(&self, maps: &[AffineMap]) -> Result<Self> {
        if maps.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: maps.len(),
            });
        }
        for m in maps {
            m.check()?;
        }
        let atoms = self
            .atoms
            .iter()
            .map(|a| a.iter().zip(maps).map(|(&x, m)| m.apply(x)).collect())
            .collect();
        Self::new(atoms, self.weights.clone())
    }

    /// Largest per-atom weight difference over the union of both supports.
    pub fn weight_discrepancy(&self, other: &Self) -> f64 {
        let (mut i, mut j) = (0, 0);
        let mut worst: f64 = 0.0;
        while i < self.len() || j < other.len() {
            let ord = match (self.atoms.get(i), other.atoms.get(j)) {
                (Some(a), Some(b)) => lex_cmp(a, b),
                (Some(_), None) => Ordering::Less,
                _ => Ordering::Greater,
            };
            let diff = match ord {
                Ordering::Less => {
                    i += 1;
                    self.weights[i - 1]
                }
                Ordering::Greater => {
                    j += 1;
                    other.weights[j - 1]
                }
                Ordering::Equal => {
                    i += 1;
                    j += 1;
                    (self.weights[i - 1] - other.weights[j - 1]).abs()
                }
            };
            worst = worst.max(diff);
        }
        worst
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let repr: MeasureRepr = serde_json::from_str(s)?;
        Self::try_from(repr)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(&MeasureRepr::from(self.clone())).expect("measure serializes")
    }
}

impl From<DiscreteMeasure1D> for MultivariateMeasure {
    fn from(m: DiscreteMeasure1D) -> Self {
        Self {
            dim: 1,
            atoms: m.atoms.iter().map(|&x| vec![x]).collect(),
            weights: m.weights,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum AtomRepr {
    Vector(Vec<f64>),
    Scalar(f64),
}

impl AtomRepr {
    fn into_vec(self) -> Vec<f64> {
        match self {
            AtomRepr::Vector(v) => v,
            AtomRepr::Scalar(x) => vec![x],
        }
    }
}

/// Wire format shared by both measure types: `{"atoms": [[..], ..], "weights": [..]}`.
/// Bare numbers are accepted as 1-D atoms on input.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MeasureRepr {
    atoms: Vec<AtomRepr>,
    weights: Vec<f64>,
}

impl TryFrom<MeasureRepr> for MultivariateMeasure {
    type Error = Error;

    fn try_from(repr: MeasureRepr) -> Result<Self> {
        MultivariateMeasure::new(
            repr.atoms.into_iter().map(AtomRepr::into_vec).collect(),
            repr.weights,
        )
    }
}

impl TryFrom<MeasureRepr> for DiscreteMeasure1D {
    type Error = Error;

    fn try_from(repr: MeasureRepr) -> Result<Self> {
        let mut atoms = Vec::with_capacity(repr.atoms.len());
        for (index, a) in repr.atoms.into_iter().enumerate() {
            let v = a.into_vec();
            if v.len() != 1 {
                return Err(Error::AtomDimension {
                    index,
                    expected: 1,
                    found: v.len(),
                });
            }
            atoms.push(v[0]);
        }
        DiscreteMeasure1D::new(atoms, repr.weights)
    }
}

impl From<MultivariateMeasure> for MeasureRepr {
    fn from(m: MultivariateMeasure) -> Self {
        Self {
            atoms: m.atoms.into_iter().map(AtomRepr::Vector).collect(),
            weights: m.weights,
        }
    }
}

impl From<DiscreteMeasure1D> for MeasureRepr {
    fn from(m: DiscreteMeasure1D) -> Self {
        MultivariateMeasure::from(m).into()
    }
}

impl Serialize for MultivariateMeasure {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MeasureRepr::from(self.clone()).serialize(s)
    }
}

impl<'de> Deserialize<'de> for MultivariateMeasure {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = MeasureRepr::deserialize(d)?;
        Self::try_from(repr).map_err(serde::de::Error::custom)
    }
}

impl Serialize for DiscreteMeasure1D {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MeasureRepr::from(self.clone()).serialize(s)
    }
}

impl<'de> Deserialize<'de> for DiscreteMeasure1D {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = MeasureRepr::deserialize(d)?;
        Self::try_from(repr).map_err(serde::de::Error::custom)
    }
}
