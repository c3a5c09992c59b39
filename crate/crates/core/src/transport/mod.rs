//! Costs `||x - y||_q^p`, transport plans, the quantile (diamond) coupling,
//! the closed-form one-dimensional cost and an exact discrete solver.
//!
//! All costs here are unrooted: `plan_cost` returns `int ||x - y||_q^p dnu`
//! and the `1/p` root is left to reporting code.

mod simplex;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::copulas::Copula;
use crate::error::{Error, Result};
use crate::measures::{mass_tolerance, DiscreteMeasure1D, MultivariateMeasure};

/// Default bound on `|supp mu| * |supp rho|` for [`exact_ot`].
pub const DEFAULT_PAIR_CAP: usize = 250_000;

/// Per-atom tolerance used by [`validate_plan`].
pub const PLAN_TOLERANCE: f64 = 1e-10;

/// Ground cost `c(x, y) = ||x - y||_q^p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostSpec {
    p: f64,
    q: f64,
}

impl CostSpec {
    pub fn new(p: f64, q: f64) -> Result<Self> {
        if !(p.is_finite() && q.is_finite() && p >= 1.0 && q >= 1.0) {
            return Err(Error::InvalidCost { p, q });
        }
        Ok(Self { p, q })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    /// `p == q`: the cost is a sum of coordinatewise costs `|x_i - y_i|^p`.
    pub fn is_separable(&self) -> bool {
        self.p == self.q
    }

    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        if self.is_separable() {
            return x
                .iter()
                .zip(y)
                .map(|(a, b)| (a - b).abs().powf(self.p))
                .sum();
        }
        let s: f64 = x
            .iter()
            .zip(y)
            .map(|(a, b)| (a - b).abs().powf(self.q))
            .sum();
        s.powf(self.p / self.q)
    }
}

/// `||x - y||_q^p`.
pub fn norm_cost(x: &[f64], y: &[f64], spec: &CostSpec) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    Ok(spec.eval(x, y))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanEntry {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub w: f64,
}

/// A coupling of two discrete measures: weighted `(x, y)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    dim: usize,
    entries: Vec<PlanEntry>,
}

impl TransportPlan {
    pub fn new(entries: Vec<PlanEntry>) -> Result<Self> {
        let Some(first) = entries.first() else {
            return Err(Error::InvalidPlan("no entries".into()));
        };
        let dim = first.x.len();
        if dim == 0 {
            return Err(Error::InvalidPlan("zero-dimensional atoms".into()));
        }
        let mut total = 0.0;
        for (idx, e) in entries.iter().enumerate() {
            if e.x.len() != dim || e.y.len() != dim {
                return Err(Error::InvalidPlan(format!(
                    "entry {idx} has dimensions ({}, {}), expected {dim}",
                    e.x.len(),
                    e.y.len()
                )));
            }
            if e.x.iter().chain(&e.y).any(|v| !v.is_finite()) || !e.w.is_finite() {
                return Err(Error::NonFinite("plan entry"));
            }
            if e.w <= 0.0 {
                return Err(Error::InvalidPlan(format!(
                    "entry {idx} has weight {}",
                    e.w
                )));
            }
            total += e.w;
        }
        if (total - 1.0).abs() > mass_tolerance(entries.len()) {
            return Err(Error::InvalidPlan(format!("weights sum to {total}")));
        }
        Ok(Self { dim, entries })
    }

    /// Build from raw pairs: identical `(x, y)` pairs are merged and
    /// non-positive weights dropped.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (Vec<f64>, Vec<f64>, f64)>) -> Result<Self> {
        let mut raw: Vec<PlanEntry> = pairs
            .into_iter()
            .filter(|(_, _, w)| *w > 0.0)
            .map(|(x, y, w)| PlanEntry { x, y, w })
            .collect();
        raw.sort_by(|a, b| lex_cmp(&a.x, &b.x).then_with(|| lex_cmp(&a.y, &b.y)));
        let mut entries: Vec<PlanEntry> = Vec::with_capacity(raw.len());
        for e in raw {
            match entries.last_mut() {
                Some(last) if last.x == e.x && last.y == e.y => last.w += e.w,
                _ => entries.push(e),
            }
        }
        Self::new(entries)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[PlanEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// First marginal (projection onto `x`).
    pub fn source(&self) -> MultivariateMeasure {
        MultivariateMeasure::new(
            self.entries.iter().map(|e| e.x.clone()).collect(),
            self.entries.iter().map(|e| e.w).collect(),
        )
        .expect("plan entries form a measure")
    }

    /// Second marginal (projection onto `y`).
    pub fn target(&self) -> MultivariateMeasure {
        MultivariateMeasure::new(
            self.entries.iter().map(|e| e.y.clone()).collect(),
            self.entries.iter().map(|e| e.w).collect(),
        )
        .expect("plan entries form a measure")
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let repr: PlanRepr = serde_json::from_str(s)?;
        Self::new(repr.entries)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(self).expect("plan serializes")
    }
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanRepr {
    entries: Vec<PlanEntry>,
}

impl Serialize for TransportPlan {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("TransportPlan", 1)?;
        st.serialize_field("entries", &self.entries)?;
        st.end()
    }
}

impl<'de> Deserialize<'de> for TransportPlan {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = PlanRepr::deserialize(d)?;
        Self::new(repr.entries).map_err(serde::de::Error::custom)
    }
}

/// `sum_e w_e ||x_e - y_e||_q^p` (unrooted).
pub fn plan_cost(plan: &TransportPlan, spec: &CostSpec) -> f64 {
    plan.entries
        .iter()
        .map(|e| e.w * spec.eval(&e.x, &e.y))
        .sum()
}

/// `sum_e w_e <x_e, y_e>`.
pub fn inner_product_score(plan: &TransportPlan) -> f64 {
    plan.entries
        .iter()
        .map(|e| e.w * e.x.iter().zip(&e.y).map(|(a, b)| a * b).sum::<f64>())
        .sum()
}

/// True iff the plan's projections reproduce `mu` and `rho`, atom by atom,
/// within [`PLAN_TOLERANCE`].
pub fn validate_plan(
    plan: &TransportPlan,
    mu: &MultivariateMeasure,
    rho: &MultivariateMeasure,
) -> bool {
    plan.dim == mu.dim()
        && plan.dim == rho.dim()
        && plan.source().weight_discrepancy(mu) <= PLAN_TOLERANCE
        && plan.target().weight_discrepancy(rho) <= PLAN_TOLERANCE
}

/// Image of `dC` under `u -> (F_mu^{-1}(u), F_rho^{-1}(u))` applied coordinatewise:
/// the coupling obtained by pairing quantiles through the shared copula.
pub fn diamond(
    copula: &Copula,
    mu_marginals: &[DiscreteMeasure1D],
    rho_marginals: &[DiscreteMeasure1D],
) -> Result<TransportPlan> {
    let n = copula.dim();
    for found in [mu_marginals.len(), rho_marginals.len()] {
        if found != n {
            return Err(Error::DimensionMismatch { expected: n, found });
        }
    }
    let breakpoints: Vec<Vec<f64>> = mu_marginals
        .iter()
        .zip(rho_marginals)
        .map(|(a, b)| [a.cumulative(), b.cumulative()].concat())
        .collect();
    let quantiles = |marginals: &[DiscreteMeasure1D], u: &[f64]| -> Vec<f64> {
        u.iter()
            .zip(marginals)
            .map(|(&ud, m)| m.atoms()[m.quantile_index(ud)])
            .collect()
    };
    TransportPlan::from_pairs(
        copula
            .refined_boxes(&breakpoints)
            .into_iter()
            .map(|(u, w)| (quantiles(mu_marginals, &u), quantiles(rho_marginals, &u), w)),
    )
}

/// `int_0^1 |F_mu^{-1}(u) - F_rho^{-1}(u)|^p du`, evaluated exactly on the
/// common refinement of both quantile step functions.
pub fn wasserstein_1d(mu: &DiscreteMeasure1D, rho: &DiscreteMeasure1D, p: f64) -> Result<f64> {
    CostSpec::new(p, p)?;
    let (cm, cr) = (mu.cumulative(), rho.cumulative());
    let (mut i, mut j) = (0, 0);
    let mut previous = 0.0;
    let mut total = 0.0;
    while i < cm.len() && j < cr.len() {
        let next = cm[i].min(cr[j]);
        let len = next - previous;
        if len > 0.0 {
            total += len * (mu.atoms()[i] - rho.atoms()[j]).abs().powf(p);
        }
        previous = next;
        if cm[i] == next {
            i += 1;
        }
        if cr[j] == next {
            j += 1;
        }
    }
    Ok(total)
}

/// Optimal value and an optimal plan.
#[derive(Debug, Clone)]
pub struct OtSolution {
    pub value: f64,
    pub plan: TransportPlan,
}

/// Exact optimal transport for `||x - y||_q^p` with the default pair cap.
pub fn exact_ot(
    mu: &MultivariateMeasure,
    rho: &MultivariateMeasure,
    spec: &CostSpec,
) -> Result<OtSolution> {
    exact_ot_capped(mu, rho, spec, DEFAULT_PAIR_CAP)
}

pub fn exact_ot_capped(
    mu: &MultivariateMeasure,
    rho: &MultivariateMeasure,
    spec: &CostSpec,
    cap: usize,
) -> Result<OtSolution> {
    exact_ot_with_cost(mu, rho, cap, |x, y| spec.eval(x, y))
}

/// Exact minimizer of `sum w c(x, y)` over all couplings of `mu` and `rho`,
/// for an arbitrary (possibly negative) ground cost.
pub fn exact_ot_with_cost(
    mu: &MultivariateMeasure,
    rho: &MultivariateMeasure,
    cap: usize,
    cost: impl Fn(&[f64], &[f64]) -> f64,
) -> Result<OtSolution> {
    if mu.dim() != rho.dim() {
        return Err(Error::DimensionMismatch {
            expected: mu.dim(),
            found: rho.dim(),
        });
    }
    let pairs = mu.len().saturating_mul(rho.len());
    if pairs > cap {
        return Err(Error::SizeCap { pairs, cap });
    }
    let matrix: Vec<f64> = mu
        .atoms()
        .iter()
        .flat_map(|x| rho.atoms().iter().map(|y| cost(x, y)).collect::<Vec<_>>())
        .collect();
    let solution = simplex::solve(mu.weights(), rho.weights(), &matrix)?;
    let n = rho.len();
    let value = solution
        .flows
        .iter()
        .map(|&(i, j, f)| f * matrix[i * n + j])
        .sum();
    let plan = TransportPlan::new(
        solution
            .flows
            .into_iter()
            .map(|(i, j, w)| PlanEntry {
                x: mu.atoms()[i].clone(),
                y: rho.atoms()[j].clone(),
                w,
            })
            .collect(),
    )?;
    Ok(OtSolution { value, plan })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(p: f64, q: f64) -> CostSpec {
        CostSpec::new(p, q).unwrap()
    }

    fn entry(x: &[f64], y: &[f64], w: f64) -> PlanEntry {
        PlanEntry {
            x: x.to_vec(),
            y: y.to_vec(),
            w,
        }
    }

    #[test]
    fn cost_spec_domain() {
        assert!(CostSpec::new(0.5, 1.0).is_err());
        assert!(CostSpec::new(1.0, f64::INFINITY).is_err());
        assert!(CostSpec::new(f64::NAN, 2.0).is_err());
        assert!(CostSpec::new(1.0, 1.0).is_ok());
    }

    #[test]
    fn norm_costs() {
        assert_eq!(
            norm_cost(&[1.0, 2.0], &[1.0, 2.0], &spec(3.0, 1.5)).unwrap(),
            0.0
        );
        assert_eq!(
            norm_cost(&[0.0, 0.0], &[3.0, 4.0], &spec(2.0, 2.0)).unwrap(),
            25.0
        );
        let c = norm_cost(&[0.0, 0.0], &[1.0, 1.0], &spec(1.0, 2.0)).unwrap();
        assert!((c - std::f64::consts::SQRT_2).abs() < 1e-15);
        assert!(norm_cost(&[0.0], &[1.0, 1.0], &spec(1.0, 2.0)).is_err());
    }

    #[test]
    fn plan_costs() {
        let id = TransportPlan::new(vec![entry(&[0.0], &[0.0], 0.5), entry(&[1.0], &[1.0], 0.5)])
            .unwrap();
        assert_eq!(plan_cost(&id, &spec(2.0, 2.0)), 0.0);
        let one = TransportPlan::new(vec![entry(&[0.0], &[1.0], 1.0)]).unwrap();
        assert_eq!(plan_cost(&one, &spec(3.0, 3.0)), 1.0);
        let two = TransportPlan::new(vec![entry(&[0.0], &[1.0], 0.5), entry(&[0.0], &[2.0], 0.5)])
            .unwrap();
        assert_eq!(plan_cost(&two, &spec(1.0, 1.0)), 1.5);
    }

    #[test]
    fn plan_construction_errors() {
        assert!(TransportPlan::new(vec![]).is_err());
        assert!(TransportPlan::new(vec![entry(&[0.0], &[1.0], 0.5)]).is_err());
        assert!(TransportPlan::new(vec![
            entry(&[0.0], &[1.0], 1.5),
            entry(&[0.0], &[1.0], -0.5)
        ])
        .is_err());
        assert!(TransportPlan::new(vec![entry(&[0.0, 1.0], &[1.0], 1.0)]).is_err());
        let merged = TransportPlan::from_pairs(vec![
            (vec![0.0], vec![1.0], 0.25),
            (vec![0.0], vec![1.0], 0.25),
            (vec![1.0], vec![0.0], 0.5),
            (vec![2.0], vec![0.0], 0.0),
        ])
        .unwrap();
        assert_eq!(merged.len(), 2);
    }

    #[test]
    fn inner_products() {
        let id = TransportPlan::new(vec![
            entry(&[0.0, 0.0], &[0.0, 0.0], 0.5),
            entry(&[1.0, 1.0], &[1.0, 1.0], 0.5),
        ])
        .unwrap();
        assert_eq!(inner_product_score(&id), 1.0);
        let swap = TransportPlan::new(vec![entry(&[1.0, 0.0], &[0.0, 1.0], 1.0)]).unwrap();
        assert_eq!(inner_product_score(&swap), 0.0);
        let u01 = DiscreteMeasure1D::uniform(vec![0.0, 1.0]).unwrap();
        let cb1 = Copula::checkerboard(1, 1, vec![1.0]).unwrap();
        let plan = diamond(&cb1, std::slice::from_ref(&u01), std::slice::from_ref(&u01)).unwrap();
        assert_eq!(inner_product_score(&plan), 0.5);
    }

    #[test]
    fn diamond_examples() {
        let u01 = DiscreteMeasure1D::uniform(vec![0.0, 1.0]).unwrap();
        let u02 = DiscreteMeasure1D::uniform(vec![0.0, 2.0]).unwrap();
        let cb1 = Copula::checkerboard(1, 1, vec![1.0]).unwrap();
        let plan = diamond(&cb1, std::slice::from_ref(&u01), std::slice::from_ref(&u02)).unwrap();
        assert_eq!(
            plan.entries(),
            &[entry(&[0.0], &[0.0], 0.5), entry(&[1.0], &[2.0], 0.5)]
        );

        let ind = Copula::independence(2, 2).unwrap();
        let plan = diamond(
            &ind,
            &[u01.clone(), u01.clone()],
            &[u02.clone(), u02.clone()],
        )
        .unwrap();
        assert_eq!(plan.len(), 4);
        for e in plan.entries() {
            assert_eq!(e.w, 0.25);
            assert_eq!(e.y, e.x.iter().map(|v| 2.0 * v).collect::<Vec<_>>());
        }

        let same = diamond(
            &ind,
            &[u01.clone(), u02.clone()],
            &[u01.clone(), u02.clone()],
        )
        .unwrap();
        assert!(same.entries().iter().all(|e| e.x == e.y));
        assert_eq!(plan_cost(&same, &spec(2.0, 1.0)), 0.0);

        assert!(diamond(
            &ind,
            std::slice::from_ref(&u01),
            &[u01.clone(), u01.clone()]
        )
        .is_err());
    }

    #[test]
    fn one_dimensional_closed_form() {
        let u01 = DiscreteMeasure1D::uniform(vec![0.0, 1.0]).unwrap();
        let u02 = DiscreteMeasure1D::uniform(vec![0.0, 2.0]).unwrap();
        assert_eq!(wasserstein_1d(&u01, &u01, 2.0).unwrap(), 0.0);
        let d0 = DiscreteMeasure1D::dirac(0.0).unwrap();
        let d1 = DiscreteMeasure1D::dirac(1.0).unwrap();
        for p in [1.0, 2.0, 3.5] {
            assert_eq!(wasserstein_1d(&d0, &d1, p).unwrap(), 1.0);
        }
        // the 2x2 polytope has two extreme points: sorted pairing (cost
        // 0.5 |1 - 2|^p = 0.5) and crossed pairing (0.5 * 2^p + 0.5 * 1)
        for p in [1.0, 2.0] {
            let sorted: f64 = 0.5 * 0.0 + 0.5 * 1.0f64.powf(p);
            let crossed: f64 = 0.5 * 2.0f64.powf(p) + 0.5 * 1.0;
            assert_eq!(wasserstein_1d(&u01, &u02, p).unwrap(), sorted.min(crossed));
        }
        assert!(wasserstein_1d(&u01, &u02, 0.5).is_err());
    }

    #[test]
    fn exact_small_instances() {
        let m = MultivariateMeasure::uniform(vec![vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
        let sol = exact_ot(&m, &m, &spec(2.0, 2.0)).unwrap();
        assert_eq!(sol.value, 0.0);
        assert!(validate_plan(&sol.plan, &m, &m));

        let swap = MultivariateMeasure::uniform(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let sol = exact_ot(&m, &swap, &spec(2.0, 2.0)).unwrap();
        assert!((sol.value - 1.0).abs() < 1e-15);
        assert!(validate_plan(&sol.plan, &m, &swap));

        let d0 = MultivariateMeasure::dirac(vec![0.0]).unwrap();
        let d1 = MultivariateMeasure::dirac(vec![1.0]).unwrap();
        assert_eq!(exact_ot(&d0, &d1, &spec(2.0, 2.0)).unwrap().value, 1.0);

        assert!(matches!(
            exact_ot_capped(&m, &swap, &spec(1.0, 1.0), 3),
            Err(Error::SizeCap { pairs: 4, cap: 3 })
        ));
        assert!(exact_ot(&m, &d0, &spec(1.0, 1.0)).is_err());
    }

    #[test]
    fn validation_detects_perturbation() {
        let u01 = DiscreteMeasure1D::uniform(vec![0.0, 1.0]).unwrap();
        let u02 = DiscreteMeasure1D::uniform(vec![0.0, 2.0]).unwrap();
        let ind = Copula::independence(2, 2).unwrap();
        let mu_m = [u01.clone(), u02.clone()];
        let rho_m = [u02, u01];
        let plan = diamond(&ind, &mu_m, &rho_m).unwrap();
        let mu = crate::copulas::sklar_compose(&ind, &mu_m).unwrap();
        let rho = crate::copulas::sklar_compose(&ind, &rho_m).unwrap();
        assert!(validate_plan(&plan, &mu, &rho));
        assert!(!validate_plan(&plan, &rho, &mu));

        let mut entries = plan.entries().to_vec();
        entries[0].w += 1e-3;
        entries[1].w -= 1e-3;
        let bent = TransportPlan::new(entries).unwrap();
        assert!(!validate_plan(&bent, &mu, &rho));
    }

    #[test]
    fn plan_json() {
        let plan = TransportPlan::from_json_str(
            r#"{"entries":[{"x":[0],"y":[1],"w":0.25},{"x":[1],"y":[1],"w":0.75}]}"#,
        )
        .unwrap();
        assert_eq!(plan.len(), 2);
        assert_eq!(
            TransportPlan::from_json_str(&plan.to_json_string()).unwrap(),
            plan
        );
        assert!(TransportPlan::from_json_str(r#"{"entries":[]}"#).is_err());
        assert!(
            TransportPlan::from_json_str(r#"{"entries":[{"x":[0],"y":[1],"w":0.5}]}"#).is_err()
        );
        assert!(TransportPlan::from_json_str(r#"{"entries":[{"x":[0],"y":[1]}]}"#).is_err());
    }
}
