//! Copulas at finite resolution (checkerboards) plus the two singular
//! monotone copulas, and the Sklar composition of a copula with marginals.
//!
//! Checkerboard tensors are stored row-major with the last coordinate varying
//! fastest. Cell `r` on an axis covers `[r/k, (r+1)/k]`; its midpoint is
//! `(2r+1)/(2k)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{DiscreteMeasure1D, MultivariateMeasure};

/// Slice sums must match `1/k` to this absolute tolerance.
pub const MARGIN_TOLERANCE: f64 = 1e-10;

/// Refinement points closer than this are treated as one point.
const BREAK_TOLERANCE: f64 = 1e-13;

/// Upper bound on tensor size accepted by the constructors.
pub const MAX_CELLS: usize = 1 << 22;

fn cell_count(n: usize, k: usize) -> Result<usize> {
    if n == 0 || k == 0 {
        return Err(Error::InvalidCopula(format!(
            "dimension and resolution must be positive (n = {n}, k = {k})"
        )));
    }
    u32::try_from(n)
        .ok()
        .and_then(|e| k.checked_pow(e))
        .filter(|&c| c <= MAX_CELLS)
        .ok_or_else(|| Error::InvalidCopula(format!("k^n = {k}^{n} cells exceeds {MAX_CELLS}")))
}

/// Midpoint of cell `r` at resolution `k`.
pub fn cell_midpoint(r: usize, k: usize) -> f64 {
    (2 * r + 1) as f64 / (2 * k) as f64
}

/// Lower Frechet-Hoeffding bound `(sum u_i - n + 1)^+`.
pub fn lower_bound(u: &[f64]) -> f64 {
    let n = u.len() as f64;
    (u.iter().sum::<f64>() - n + 1.0).max(0.0)
}

/// Upper Frechet-Hoeffding bound `min_i u_i`.
pub fn upper_bound(u: &[f64]) -> f64 {
    u.iter().copied().fold(1.0, f64::min)
}

/// Piecewise-uniform copula on the `k^n` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkerboard {
    n: usize,
    k: usize,
    masses: Vec<f64>,
}

impl Checkerboard {
    pub fn new(n: usize, k: usize, masses: Vec<f64>) -> Result<Self> {
        let cb = Self::new_unchecked(n, k, masses)?;
        cb.validate()?;
        Ok(cb)
    }

    /// Shape-checked only; marginal uniformity and sign are not enforced.
    /// Used to exercise the bound checks on deliberately broken tensors.
    pub fn new_unchecked(n: usize, k: usize, masses: Vec<f64>) -> Result<Self> {
        let cells = cell_count(n, k)?;
        if masses.len() != cells {
            return Err(Error::InvalidCopula(format!(
                "expected {cells} masses for n = {n}, k = {k}, found {}",
                masses.len()
            )));
        }
        Ok(Self { n, k, masses })
    }

    fn validate(&self) -> Result<()> {
        for &m in &self.masses {
            if !m.is_finite() {
                return Err(Error::NonFinite("copula masses"));
            }
            if m < 0.0 {
                return Err(Error::InvalidCopula(format!("negative cell mass {m}")));
            }
        }
        let target = 1.0 / self.k as f64;
        for axis in 0..self.n {
            for (r, s) in self.slice_sums(axis).into_iter().enumerate() {
                if (s - target).abs() > MARGIN_TOLERANCE {
                    return Err(Error::InvalidCopula(format!(
                        "slice {r} of axis {axis} has mass {s}, expected {target}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn resolution(&self) -> usize {
        self.k
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    fn stride(&self, axis: usize) -> usize {
        self.k.pow((self.n - 1 - axis) as u32)
    }

    pub fn flat_index(&self, cell: &[usize]) -> usize {
        cell.iter().fold(0, |acc, &r| acc * self.k + r)
    }

    pub fn cell_of(&self, mut flat: usize) -> Vec<usize> {
        let mut cell = vec![0; self.n];
        for slot in cell.iter_mut().rev() {
            *slot = flat % self.k;
            flat /= self.k;
        }
        cell
    }

    pub fn mass(&self, cell: &[usize]) -> f64 {
        self.masses[self.flat_index(cell)]
    }

    /// Cells with positive mass, as `(cell indices, mass)`.
    pub fn support(&self) -> impl Iterator<Item = (Vec<usize>, f64)> + '_ {
        self.masses
            .iter()
            .enumerate()
            .filter(|(_, &m)| m > 0.0)
            .map(|(flat, &m)| (self.cell_of(flat), m))
    }

    /// Mass of each slice `{cell : cell[axis] = r}`.
    pub fn slice_sums(&self, axis: usize) -> Vec<f64> {
        let stride = self.stride(axis);
        let mut sums = vec![0.0; self.k];
        for (flat, &m) in self.masses.iter().enumerate() {
            sums[(flat / stride) % self.k] += m;
        }
        sums
    }

    fn cdf(&self, u: &[f64]) -> f64 {
        let k = self.k as f64;
        // Fraction of each cell of each axis lying inside [0, u_d].
        let fractions: Vec<Vec<f64>> = u
            .iter()
            .map(|&ud| {
                (0..self.k)
                    .map(|r| (ud * k - r as f64).clamp(0.0, 1.0))
                    .collect()
            })
            .collect();
        self.masses
            .iter()
            .enumerate()
            .filter(|(_, &m)| m != 0.0)
            .map(|(flat, &m)| {
                let mut rest = flat;
                let mut w = m;
                for axis in (0..self.n).rev() {
                    w *= fractions[axis][rest % self.k];
                    rest /= self.k;
                }
                w
            })
            .sum()
    }

    /// Sum out every axis except `i` and `j` (`i < j`).
    pub fn bivariate_margin(&self, i: usize, j: usize) -> Result<Self> {
        check_pair(i, j, self.n)?;
        let mut masses = vec![0.0; self.k * self.k];
        for (flat, &m) in self.masses.iter().enumerate() {
            let cell = self.cell_of(flat);
            masses[cell[i] * self.k + cell[j]] += m;
        }
        Ok(Self {
            n: 2,
            k: self.k,
            masses,
        })
    }

    /// Reorder axes: axis `a` of the result is axis `order[a]` of `self`.
    pub fn permute_axes(&self, order: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.n];
        if order.len() != self.n
            || order
                .iter()
                .any(|&a| a >= self.n || std::mem::replace(&mut seen[a], true))
        {
            return Err(Error::Domain(format!(
                "{order:?} is not a permutation of {} axes",
                self.n
            )));
        }
        let mut masses = vec![0.0; self.masses.len()];
        for (flat, &m) in self.masses.iter().enumerate() {
            let cell = self.cell_of(flat);
            let permuted: Vec<usize> = order.iter().map(|&a| cell[a]).collect();
            masses[self.flat_index(&permuted)] = m;
        }
        Ok(Self {
            n: self.n,
            k: self.k,
            masses,
        })
    }

    /// Per-axis sub-intervals of each cell after cutting at `breakpoints`,
    /// as `(midpoint, fraction of the cell)`.
    fn cell_pieces(&self, breakpoints: &[f64]) -> Vec<Vec<(f64, f64)>> {
        let k = self.k as f64;
        (0..self.k)
            .map(|r| {
                let lo = r as f64 / k;
                let hi = (r + 1) as f64 / k;
                let start = breakpoints.partition_point(|&b| b <= lo + BREAK_TOLERANCE);
                let mut points = vec![lo];
                points.extend(
                    breakpoints[start..]
                        .iter()
                        .copied()
                        .take_while(|&b| b < hi - BREAK_TOLERANCE),
                );
                points.push(hi);
                points
                    .windows(2)
                    .map(|w| (0.5 * (w[0] + w[1]), (w[1] - w[0]) * k))
                    .collect()
            })
            .collect()
    }
}

fn check_pair(i: usize, j: usize, n: usize) -> Result<()> {
    if j >= n {
        return Err(Error::IndexOutOfRange { index: j, dim: n });
    }
    if i >= j {
        return Err(Error::Domain(format!(
            "coordinate pair ({i}, {j}) needs i < j"
        )));
    }
    Ok(())
}

/// A copula: a checkerboard at finite resolution, or one of the singular
/// monotone copulas `C^+_n` and `C^-_2`.
#[derive(Debug, Clone, PartialEq)]
pub enum Copula {
    Checkerboard(Checkerboard),
    Comonotone { n: usize },
    Countermonotone,
}

impl Copula {
    pub fn checkerboard(n: usize, k: usize, masses: Vec<f64>) -> Result<Self> {
        Checkerboard::new(n, k, masses).map(Copula::Checkerboard)
    }

    pub fn independence(n: usize, k: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidCopula(format!(
                "independence needs n >= 2, got {n}"
            )));
        }
        let cells = cell_count(n, k)?;
        Self::checkerboard(n, k, vec![1.0 / cells as f64; cells])
    }

    pub fn comonotone(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidCopula(format!(
                "comonotone needs n >= 2, got {n}"
            )));
        }
        Ok(Copula::Comonotone { n })
    }

    pub fn countermonotone() -> Self {
        Copula::Countermonotone
    }

    /// Countermonotone copula of a requested dimension; only `n = 2` exists,
    /// since `(u_1 + ... + u_n - n + 1)^+` is not a copula for `n >= 3`.
    pub fn countermonotone_in(n: usize) -> Result<Self> {
        if n != 2 {
            return Err(Error::CountermonotoneDimension(n));
        }
        Ok(Copula::Countermonotone)
    }

    pub fn dim(&self) -> usize {
        match self {
            Copula::Checkerboard(cb) => cb.n,
            Copula::Comonotone { n } => *n,
            Copula::Countermonotone => 2,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Copula::Checkerboard(cb) => format!("checkerboard(n={},k={})", cb.n, cb.k),
            Copula::Comonotone { n } => format!("comonotone(n={n})"),
            Copula::Countermonotone => "countermonotone(n=2)".to_string(),
        }
    }

    /// `C(u) = dC([0, u_1] x ... x [0, u_n])`.
    pub fn cdf(&self, u: &[f64]) -> Result<f64> {
        if u.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: u.len(),
            });
        }
        if u.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
            return Err(Error::Domain(format!("{u:?} is outside the unit cube")));
        }
        Ok(match self {
            Copula::Checkerboard(cb) => cb.cdf(u),
            Copula::Comonotone { .. } => upper_bound(u),
            Copula::Countermonotone => lower_bound(u),
        })
    }

    /// Frechet-Hoeffding bounds at every point of the `g^n` lattice
    /// `{0, 1/(g-1), ..., 1}^n`.
    pub fn frechet_check(&self, g: usize) -> bool {
        let g = g.max(2);
        let n = self.dim();
        let mut idx = vec![0usize; n];
        let mut u = vec![0.0; n];
        loop {
            for (ud, &i) in u.iter_mut().zip(&idx) {
                *ud = i as f64 / (g - 1) as f64;
            }
            let c = self.cdf(&u).expect("lattice point inside the cube");
            if c < lower_bound(&u) - 1e-12 || c > upper_bound(&u) + 1e-12 {
                return false;
            }
            // odometer
            let mut axis = n;
            loop {
                if axis == 0 {
                    return true;
                }
                axis -= 1;
                idx[axis] += 1;
                if idx[axis] < g {
                    break;
                }
                idx[axis] = 0;
            }
        }
    }

    /// Bivariate margin `(u_i, u_j) -> C(1, .., u_i, .., u_j, .., 1)`, 0-based `i < j`.
    pub fn bivariate_margin(&self, i: usize, j: usize) -> Result<Copula> {
        check_pair(i, j, self.dim())?;
        Ok(match self {
            Copula::Checkerboard(cb) => Copula::Checkerboard(cb.bivariate_margin(i, j)?),
            Copula::Comonotone { .. } => Copula::Comonotone { n: 2 },
            Copula::Countermonotone => Copula::Countermonotone,
        })
    }

    /// Conditional law of the other coordinate of a bivariate copula given
    /// coordinate `given` (0 or 1) equals `u`. Checkerboards return the law on
    /// cell midpoints of the complementary axis.
    pub fn conditional(&self, given: usize, u: f64) -> Result<DiscreteMeasure1D> {
        if self.dim() != 2 {
            return Err(Error::DimensionMismatch {
                expected: 2,
                found: self.dim(),
            });
        }
        if given > 1 {
            return Err(Error::IndexOutOfRange {
                index: given,
                dim: 2,
            });
        }
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::Domain(format!(
                "conditioning value {u} not in [0, 1]"
            )));
        }
        match self {
            Copula::Comonotone { .. } => DiscreteMeasure1D::dirac(u),
            Copula::Countermonotone => DiscreteMeasure1D::dirac(1.0 - u),
            Copula::Checkerboard(cb) => {
                let scaled = u * cb.k as f64;
                if u <= 0.0 || u >= 1.0 || scaled == scaled.floor() {
                    return Err(Error::CellBoundary(u));
                }
                let r = scaled as usize;
                let k = cb.k;
                let weights: Vec<f64> = (0..k)
                    .map(|s| {
                        let cell = if given == 0 { [r, s] } else { [s, r] };
                        k as f64 * cb.mass(&cell)
                    })
                    .collect();
                let atoms = (0..k).map(|s| cell_midpoint(s, k)).collect();
                DiscreteMeasure1D::new(atoms, weights)
            }
        }
    }

    /// Discrete carrier at resolution `k`: checkerboards are returned as is
    /// (their own resolution wins), monotone copulas become the diagonal or
    /// antidiagonal tensor, which is exact at cell-midpoint level.
    pub fn carrier(&self, k: usize) -> Result<Checkerboard> {
        match self {
            Copula::Checkerboard(cb) => Ok(cb.clone()),
            Copula::Comonotone { n } => {
                let cells = cell_count(*n, k)?;
                let mut masses = vec![0.0; cells];
                let mut cb = Checkerboard {
                    n: *n,
                    k,
                    masses: Vec::new(),
                };
                for r in 0..k {
                    masses[cb.flat_index(&vec![r; *n])] = 1.0 / k as f64;
                }
                cb.masses = masses;
                Ok(cb)
            }
            Copula::Countermonotone => {
                let cells = cell_count(2, k)?;
                let mut masses = vec![0.0; cells];
                for r in 0..k {
                    masses[r * k + (k - 1 - r)] = 1.0 / k as f64;
                }
                Ok(Checkerboard { n: 2, k, masses })
            }
        }
    }

    /// Partition `[0,1]^n` (restricted to the support of `dC`) into pieces on
    /// which the copula density is constant and no axis crosses one of its
    /// `breakpoints`. Returns one `(representative point, mass)` per piece; the
    /// representative is interior to every cut interval.
    pub(crate) fn refined_boxes(&self, breakpoints: &[Vec<f64>]) -> Vec<(Vec<f64>, f64)> {
        debug_assert_eq!(breakpoints.len(), self.dim());
        match self {
            Copula::Checkerboard(cb) => {
                let pieces: Vec<Vec<Vec<(f64, f64)>>> = breakpoints
                    .iter()
                    .map(|b| cb.cell_pieces(&merge_points(b.clone())))
                    .collect();
                let mut out = Vec::new();
                for (cell, mass) in cb.support() {
                    let axes: Vec<&[(f64, f64)]> = cell
                        .iter()
                        .enumerate()
                        .map(|(d, &r)| pieces[d][r].as_slice())
                        .collect();
                    let mut choice = vec![0usize; cb.n];
                    loop {
                        let mut point = Vec::with_capacity(cb.n);
                        let mut w = mass;
                        for (d, &c) in choice.iter().enumerate() {
                            let (mid, frac) = axes[d][c];
                            point.push(mid);
                            w *= frac;
                        }
                        out.push((point, w));
                        let mut axis = cb.n;
                        let done = loop {
                            if axis == 0 {
                                break true;
                            }
                            axis -= 1;
                            choice[axis] += 1;
                            if choice[axis] < axes[axis].len() {
                                break false;
                            }
                            choice[axis] = 0;
                        };
                        if done {
                            break;
                        }
                    }
                }
                out
            }
            Copula::Comonotone { n } => {
                let points = merge_points(breakpoints.concat());
                points
                    .windows(2)
                    .map(|w| (vec![0.5 * (w[0] + w[1]); *n], w[1] - w[0]))
                    .collect()
            }
            Copula::Countermonotone => {
                let mut all = breakpoints[0].clone();
                all.extend(breakpoints[1].iter().map(|b| 1.0 - b));
                let points = merge_points(all);
                points
                    .windows(2)
                    .map(|w| {
                        let t = 0.5 * (w[0] + w[1]);
                        (vec![t, 1.0 - t], w[1] - w[0])
                    })
                    .collect()
            }
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let repr: CopulaRepr = serde_json::from_str(s)?;
        Self::try_from(repr)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(&CopulaRepr::from(self.clone())).expect("copula serializes")
    }
}

/// Sorted points of `[0, 1]` including both endpoints, near-duplicates dropped.
fn merge_points(mut points: Vec<f64>) -> Vec<f64> {
    points.retain(|p| *p > BREAK_TOLERANCE && *p < 1.0 - BREAK_TOLERANCE);
    points.sort_by(f64::total_cmp);
    let mut out = Vec::with_capacity(points.len() + 2);
    out.push(0.0);
    for p in points {
        if p - out.last().unwrap() > BREAK_TOLERANCE {
            out.push(p);
        }
    }
    out.push(1.0);
    out
}

/// Discretized Lebesgue measure on `[0,1]`: weight `1/k` at each cell midpoint.
pub fn uniform_grid_measure(k: usize) -> Result<DiscreteMeasure1D> {
    if k < 1 {
        return Err(Error::Domain("grid resolution must be at least 1".into()));
    }
    DiscreteMeasure1D::uniform((0..k).map(|r| cell_midpoint(r, k)).collect())
}

/// Rank-based checkerboard of an equally weighted, tie-free sample: each
/// coordinate is replaced by its normalized rank `(r - 1/2)/N` and binned on
/// the `k`-grid.
pub fn empirical_copula(sample: &MultivariateMeasure, k: usize) -> Result<Copula> {
    let count = sample.len();
    if k == 0 || !count.is_multiple_of(k) {
        return Err(Error::Domain(format!(
            "resolution {k} does not divide the sample size {count}"
        )));
    }
    let expected = 1.0 / count as f64;
    if sample
        .weights()
        .iter()
        .any(|w| (w - expected).abs() > crate::measures::mass_tolerance(1))
    {
        return Err(Error::Domain("empirical copula needs equal weights".into()));
    }
    let n = sample.dim();
    let mut bins = vec![vec![0usize; count]; n];
    for (axis, axis_bins) in bins.iter_mut().enumerate() {
        let mut order: Vec<usize> = (0..count).collect();
        order.sort_by(|&a, &b| sample.atoms()[a][axis].total_cmp(&sample.atoms()[b][axis]));
        for w in order.windows(2) {
            if sample.atoms()[w[0]][axis] == sample.atoms()[w[1]][axis] {
                return Err(Error::Domain(format!("tied values on coordinate {axis}")));
            }
        }
        for (rank, &atom) in order.iter().enumerate() {
            axis_bins[atom] = ((2 * rank + 1) * k) / (2 * count);
        }
    }
    let cells = cell_count(n, k)?;
    let mut counts = vec![0usize; cells];
    for atom in 0..count {
        let flat = bins
            .iter()
            .fold(0, |acc, axis_bins| acc * k + axis_bins[atom]);
        counts[flat] += 1;
    }
    let masses = counts
        .into_iter()
        .map(|c| c as f64 / count as f64)
        .collect();
    Copula::checkerboard(n, k, masses)
}

/// Pushforward of `dC` under `u -> (F_1^{-1}(u_1), ..., F_n^{-1}(u_n))`.
pub fn sklar_compose(
    copula: &Copula,
    marginals: &[DiscreteMeasure1D],
) -> Result<MultivariateMeasure> {
    if marginals.len() != copula.dim() {
        return Err(Error::DimensionMismatch {
            expected: copula.dim(),
            found: marginals.len(),
        });
    }
    let breakpoints: Vec<Vec<f64>> = marginals.iter().map(|m| m.cumulative().to_vec()).collect();
    let (atoms, weights): (Vec<Vec<f64>>, Vec<f64>) = copula
        .refined_boxes(&breakpoints)
        .into_iter()
        .map(|(u, w)| {
            let atom = u
                .iter()
                .zip(marginals)
                .map(|(&ud, m)| m.atoms()[m.quantile_index(ud)])
                .collect();
            (atom, w)
        })
        .unzip();
    MultivariateMeasure::new(atoms, weights)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "lowercase", deny_unknown_fields)]
enum CopulaRepr {
    Checkerboard {
        n: usize,
        k: usize,
        masses: Vec<f64>,
    },
    Comonotone {
        n: usize,
    },
    Countermonotone {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n: Option<usize>,
    },
}

impl TryFrom<CopulaRepr> for Copula {
    type Error = Error;

    fn try_from(repr: CopulaRepr) -> Result<Self> {
        match repr {
            CopulaRepr::Checkerboard { n, k, masses } => Copula::checkerboard(n, k, masses),
            CopulaRepr::Comonotone { n } => Copula::comonotone(n),
            CopulaRepr::Countermonotone { n } => Copula::countermonotone_in(n.unwrap_or(2)),
        }
    }
}

impl From<Copula> for CopulaRepr {
    fn from(c: Copula) -> Self {
        match c {
            Copula::Checkerboard(cb) => CopulaRepr::Checkerboard {
                n: cb.n,
                k: cb.k,
                masses: cb.masses,
            },
            Copula::Comonotone { n } => CopulaRepr::Comonotone { n },
            Copula::Countermonotone => CopulaRepr::Countermonotone { n: None },
        }
    }
}

impl Serialize for Copula {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        CopulaRepr::from(self.clone()).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Copula {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = CopulaRepr::deserialize(d)?;
        Self::try_from(repr).map_err(serde::de::Error::custom)
    }
}
