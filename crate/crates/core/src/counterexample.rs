//! Explicit instances where the quantile coupling through a shared copula is
//! not optimal for `||x - y||_q^p` with `p != q`.
//!
//! With `(U_1, ..., U_n)` distributed as the cell-midpoint law of a copula
//! and `eps` in `(0, 1)`:
//!
//! ```text
//! Y   = (U_1,       eps U_2, eps U_3,  ..., eps U_n)
//! Z   = (eps U_1,   U_2,     eps U_3,  ..., eps U_n)
//! Z'  = (eps U'_1,  U'_2,    eps U'_3, ..., eps U'_n)
//! ```
//!
//! where `U'_2` is `U_1` (comonotone adversary, `q > p`) or `1 - U_1`
//! (countermonotone adversary, `q < p`), and `U'_1, U'_3, ...` are drawn from
//! the copula's conditional kernels given `U'_2`. `Z` and `Z'` have the same
//! law, `(Y, Z)` is the quantile coupling, and for small `eps` the competitor
//! `(Y, Z')` is strictly cheaper. Roles 1 and 2 may be played by any pair of
//! coordinates `(i, j)`.

use serde::{Deserialize, Serialize};

use crate::copulas::{cell_midpoint, lower_bound, upper_bound, Checkerboard, Copula};
use crate::error::{Error, Result};
use crate::measures::MultivariateMeasure;
use crate::transport::{self, plan_cost, validate_plan, CostSpec, TransportPlan, DEFAULT_PAIR_CAP};

/// Gaps at or below `GAP_THRESHOLD * max(1, diamond_cost)` count as rounding.
pub const GAP_THRESHOLD: f64 = 1e-9;

const CAVEAT: &str = "marginals are atomic, so the copula of the constructed measures is not \
unique; the gap shows non-optimality of the quantile coupling built from the supplied copula";

/// `d^2/du1 du2` of `-(u1^q + u2^q)^(p/q)`:
/// `p (q - p) u1^(q-1) u2^(q-1) (u1^q + u2^q)^(p/q - 2)`.
pub fn monge_cross_partial(p: f64, q: f64, u1: f64, u2: f64) -> Result<f64> {
    CostSpec::new(p, q)?;
    for u in [u1, u2] {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::Domain(format!(
                "{u} is not in the open interval (0, 1)"
            )));
        }
    }
    if p == q {
        return Ok(0.0);
    }
    let s = u1.powf(q) + u2.powf(q);
    Ok(p * (q - p) * u1.powf(q - 1.0) * u2.powf(q - 1.0) * s.powf(p / q - 2.0))
}

/// Bivariate copula used to pair `U_1` with `U'_2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Adversary {
    /// `U'_2 = U_1`, optimal when `q > p`.
    Comonotone,
    /// `U'_2 = 1 - U_1`, optimal when `q < p`.
    Countermonotone,
}

impl Adversary {
    /// Image of cell index `r` under `u -> u` or `u -> 1 - u`.
    fn partner(self, r: usize, k: usize) -> usize {
        match self {
            Adversary::Comonotone => r,
            Adversary::Countermonotone => k - 1 - r,
        }
    }
}

pub fn adversary_copula(p: f64, q: f64) -> Result<Adversary> {
    CostSpec::new(p, q)?;
    match q.partial_cmp(&p) {
        Some(std::cmp::Ordering::Less) => Ok(Adversary::Countermonotone),
        Some(std::cmp::Ordering::Greater) => Ok(Adversary::Comonotone),
        _ => Err(Error::EqualExponents),
    }
}

/// Coordinate pair (0-based, `i < j`) whose bivariate margin is not the
/// extremal copula the adversary would reproduce, with a witness point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViolatingPair {
    pub i: usize,
    pub j: usize,
    pub u_i: f64,
    pub u_j: f64,
}

/// Scan pairs `i < j` over the lattice `{0, 1/(g-1), ..., 1}^2`. For `q < p`
/// look for a margin strictly above `C^-_2`, for `q > p` strictly below
/// `C^+_2`. `None` means the copula is pairwise extremal for this `(p, q)`.
pub fn find_violating_pair(
    copula: &Copula,
    p: f64,
    q: f64,
    g: usize,
) -> Result<Option<ViolatingPair>> {
    let adversary = adversary_copula(p, q)?;
    let g = g.max(2);
    let n = copula.dim();
    for i in 0..n {
        for j in i + 1..n {
            let margin = copula.bivariate_margin(i, j)?;
            for a in 1..g {
                for b in 1..g {
                    let u = [a as f64 / (g - 1) as f64, b as f64 / (g - 1) as f64];
                    let c = margin.cdf(&u)?;
                    let strict = match adversary {
                        Adversary::Countermonotone => c > lower_bound(&u) + 1e-12,
                        Adversary::Comonotone => c < upper_bound(&u) - 1e-12,
                    };
                    if strict {
                        return Ok(Some(ViolatingPair {
                            i,
                            j,
                            u_i: u[0],
                            u_j: u[1],
                        }));
                    }
                }
            }
        }
    }
    Ok(None)
}

/// Output of [`build_pair`]: `mu = law(Y)`, `rho = law(Z) = law(Z')`, the
/// quantile coupling `(Y, Z)` and the competitor `(Y, Z')`.
#[derive(Debug, Clone)]
pub struct EpsilonPair {
    pub mu: MultivariateMeasure,
    pub rho: MultivariateMeasure,
    pub diamond_plan: TransportPlan,
    pub alt_plan: TransportPlan,
}

fn check_epsilon(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Domain(format!(
            "epsilon {eps} must lie in (0, 1); at 0 both measures have a constant coordinate"
        )));
    }
    Ok(())
}

/// Axis order putting `i` first and `j` second, the rest in their order.
fn pair_order(n: usize, i: usize, j: usize) -> Vec<usize> {
    let mut order = vec![i, j];
    order.extend((0..n).filter(|&d| d != i && d != j));
    order
}

/// Build the construction for coordinates `(i, j)` with the adversary chosen
/// from `(p, q)`.
pub fn build_pair(
    cb: &Checkerboard,
    p: f64,
    q: f64,
    i: usize,
    j: usize,
    eps: f64,
) -> Result<EpsilonPair> {
    build_pair_with(cb, adversary_copula(p, q)?, i, j, eps)
}

/// Build the construction with an explicit adversary (also usable for `p = q`).
pub fn build_pair_with(
    cb: &Checkerboard,
    adversary: Adversary,
    i: usize,
    j: usize,
    eps: f64,
) -> Result<EpsilonPair> {
    check_epsilon(eps)?;
    let n = cb.dim();
    if n < 2 {
        return Err(Error::Domain("construction needs n >= 2".into()));
    }
    if i >= j || j >= n {
        return Err(Error::Domain(format!(
            "invalid coordinate pair ({i}, {j}) for n = {n}"
        )));
    }
    let order = pair_order(n, i, j);
    let relabeled = cb.permute_axes(&order)?;
    let k = relabeled.resolution();

    // Relabeled coordinates -> original coordinates.
    let place = |v: Vec<f64>| -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (a, x) in v.into_iter().enumerate() {
            out[order[a]] = x;
        }
        out
    };
    // Midpoints, with every axis except `keep` scaled by eps.
    let scaled = |cell: &[usize], keep: usize| -> Vec<f64> {
        cell.iter()
            .enumerate()
            .map(|(a, &r)| {
                let m = cell_midpoint(r, k);
                if a == keep {
                    m
                } else {
                    eps * m
                }
            })
            .collect()
    };

    let support: Vec<(Vec<usize>, f64)> = relabeled.support().collect();
    let second_slices = relabeled.slice_sums(1);
    let mut by_second: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (idx, (cell, _)) in support.iter().enumerate() {
        by_second[cell[1]].push(idx);
    }

    let mu = MultivariateMeasure::new(
        support.iter().map(|(c, _)| place(scaled(c, 0))).collect(),
        support.iter().map(|(_, m)| *m).collect(),
    )?;
    let rho = MultivariateMeasure::new(
        support.iter().map(|(c, _)| place(scaled(c, 1))).collect(),
        support.iter().map(|(_, m)| *m).collect(),
    )?;

    let mut alt = Vec::new();
    let mut z_prime = Vec::new();
    for (cell, mass) in &support {
        let y = place(scaled(cell, 0));
        let s = adversary.partner(cell[0], k);
        for &idx in &by_second[s] {
            let (other, other_mass) = &support[idx];
            // P(U = cell) * P(U'_1, U'_3.. = other | U'_2 = s)
            let w = mass * other_mass / second_slices[s];
            let z = place(scaled(other, 1));
            z_prime.push((z.clone(), w));
            alt.push((y.clone(), z, w));
        }
    }
    let alt_plan = TransportPlan::from_pairs(alt)?;

    let law_z_prime = MultivariateMeasure::new(
        z_prime.iter().map(|(z, _)| z.clone()).collect(),
        z_prime.iter().map(|(_, w)| *w).collect(),
    )?;
    if law_z_prime.atoms() != rho.atoms()
        || law_z_prime.weight_discrepancy(&rho) > transport::PLAN_TOLERANCE
    {
        return Err(Error::InvalidPlan(
            "competitor target law differs from the quantile coupling's target".into(),
        ));
    }

    let diamond_plan = transport::diamond(
        &Copula::Checkerboard(cb.clone()),
        &mu.marginals(),
        &rho.marginals(),
    )?;
    for plan in [&diamond_plan, &alt_plan] {
        if !validate_plan(plan, &mu, &rho) {
            return Err(Error::InvalidPlan(
                "constructed plan has wrong marginals".into(),
            ));
        }
    }
    Ok(EpsilonPair {
        mu,
        rho,
        diamond_plan,
        alt_plan,
    })
}

/// `eps -> 0` limits of both costs: `E[(U_i^q + U_j^q)^(p/q)]` under the
/// midpoint law of the `(i, j)` margin, and the same functional with `U_j`
/// replaced by the adversary's partner of `U_i`.
pub fn limit_scores(cb: &Checkerboard, i: usize, j: usize, p: f64, q: f64) -> Result<(f64, f64)> {
    limit_scores_with(cb, adversary_copula(p, q)?, i, j, &CostSpec::new(p, q)?)
}

pub fn limit_scores_with(
    cb: &Checkerboard,
    adversary: Adversary,
    i: usize,
    j: usize,
    spec: &CostSpec,
) -> Result<(f64, f64)> {
    let margin = cb.bivariate_margin(i, j)?;
    let k = margin.resolution();
    let origin = [0.0, 0.0];
    let limit_diamond = margin
        .support()
        .map(|(cell, m)| {
            let u = [cell_midpoint(cell[0], k), cell_midpoint(cell[1], k)];
            m * transport::norm_cost(&u, &origin, spec).expect("same dimension")
        })
        .sum();
    let limit_alt = margin
        .slice_sums(0)
        .into_iter()
        .enumerate()
        .map(|(r, w)| {
            let u = [
                cell_midpoint(r, k),
                cell_midpoint(adversary.partner(r, k), k),
            ];
            w * transport::norm_cost(&u, &origin, spec).expect("same dimension")
        })
        .sum();
    Ok((limit_diamond, limit_alt))
}

/// Geometric sequence `start, start * ratio, ...` of `steps` values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub ratio: f64,
    pub steps: usize,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self {
            start: 0.5,
            ratio: 0.5,
            steps: 16,
        }
    }
}

impl EpsilonSchedule {
    pub fn values(&self) -> Vec<f64> {
        std::iter::successors(Some(self.start), |e| Some(e * self.ratio))
            .take(self.steps)
            .collect()
    }
}

/// One evaluated schedule point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapPoint {
    pub epsilon: f64,
    pub diamond_cost: f64,
    pub alt_cost: f64,
    pub gap: f64,
    pub exact_cost: Option<f64>,
}

/// Costs of both plans at every point of the schedule, in schedule order.
pub fn gap_curve(
    cb: &Checkerboard,
    adversary: Adversary,
    i: usize,
    j: usize,
    spec: &CostSpec,
    schedule: &EpsilonSchedule,
) -> Result<Vec<GapPoint>> {
    schedule
        .values()
        .into_iter()
        .map(|eps| {
            let built = build_pair_with(cb, adversary, i, j, eps)?;
            let diamond_cost = plan_cost(&built.diamond_plan, spec);
            let alt_cost = plan_cost(&built.alt_plan, spec);
            Ok(GapPoint {
                epsilon: eps,
                diamond_cost,
                alt_cost,
                gap: diamond_cost - alt_cost,
                exact_cost: None,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleReport {
    pub p: f64,
    pub q: f64,
    pub copula: String,
    /// 0-based coordinate pair playing the roles of the first two axes.
    pub pair: (usize, usize),
    pub epsilon: f64,
    pub diamond_cost: f64,
    pub alt_cost: f64,
    pub exact_cost: Option<f64>,
    pub gap: f64,
    pub limit_diamond: f64,
    pub limit_alt: f64,
    pub adversary: Adversary,
    pub resolution: usize,
    pub caveat: String,
}

impl CounterexampleReport {
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOptions {
    /// Resolution used to discretize monotone copulas; checkerboards keep their own.
    pub resolution: usize,
    /// Lattice size for [`find_violating_pair`]; defaults to the cell lattice
    /// `k + 1` for checkerboards and 9 otherwise.
    pub grid: Option<usize>,
    pub schedule: EpsilonSchedule,
    /// Attach the exact optimum when `|supp mu| * |supp rho|` is at most this.
    pub exact_cap: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            resolution: 16,
            grid: None,
            schedule: EpsilonSchedule::default(),
            exact_cap: DEFAULT_PAIR_CAP,
        }
    }
}

/// Result of [`gap_search`]: the report plus the whole evaluated curve.
#[derive(Debug, Clone, PartialEq)]
pub struct GapSearch {
    pub report: CounterexampleReport,
    pub curve: Vec<GapPoint>,
}

/// Find a violating pair, evaluate the schedule and accept the first `eps`
/// whose gap exceeds [`GAP_THRESHOLD`]` * max(1, diamond_cost)`.
///
/// Errors with [`Error::NoViolatingPair`] for pairwise-extremal copulas and
/// with [`Error::ScheduleExhausted`] (carrying the full curve and a report for
/// the largest gap seen) when no point qualifies.
pub fn gap_search(copula: &Copula, p: f64, q: f64, options: &SearchOptions) -> Result<GapSearch> {
    let spec = CostSpec::new(p, q)?;
    let adversary = adversary_copula(p, q)?;
    let carrier = copula.carrier(options.resolution)?;
    let grid = options.grid.unwrap_or(match copula {
        Copula::Checkerboard(cb) => cb.resolution() + 1,
        _ => 9,
    });
    let pair = find_violating_pair(copula, p, q, grid)?.ok_or(Error::NoViolatingPair)?;
    let (limit_diamond, limit_alt) = limit_scores_with(&carrier, adversary, pair.i, pair.j, &spec)?;
    let mut curve = gap_curve(
        &carrier,
        adversary,
        pair.i,
        pair.j,
        &spec,
        &options.schedule,
    )?;

    let accepted = curve
        .iter()
        .position(|pt| pt.gap > GAP_THRESHOLD * pt.diamond_cost.max(1.0));
    let chosen = accepted.unwrap_or_else(|| {
        (0..curve.len())
            .max_by(|&a, &b| curve[a].gap.total_cmp(&curve[b].gap))
            .unwrap_or(0)
    });
    if accepted.is_some() {
        let built = build_pair_with(&carrier, adversary, pair.i, pair.j, curve[chosen].epsilon)?;
        if built.mu.len().saturating_mul(built.rho.len()) <= options.exact_cap {
            let solved =
                transport::exact_ot_capped(&built.mu, &built.rho, &spec, options.exact_cap)?;
            curve[chosen].exact_cost = Some(solved.value);
        }
    }
    let point = curve
        .get(chosen)
        .cloned()
        .ok_or(Error::Domain("empty schedule".into()))?;
    let report = CounterexampleReport {
        p,
        q,
        copula: copula.describe(),
        pair: (pair.i, pair.j),
        epsilon: point.epsilon,
        diamond_cost: point.diamond_cost,
        alt_cost: point.alt_cost,
        exact_cost: point.exact_cost,
        gap: point.gap,
        limit_diamond,
        limit_alt,
        adversary,
        resolution: carrier.resolution(),
        caveat: CAVEAT.to_string(),
    };
    let search = GapSearch { report, curve };
    if accepted.is_none() {
        return Err(Error::ScheduleExhausted(Box::new(search)));
    }
    Ok(search)
}
