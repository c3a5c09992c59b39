//! Deterministic random instances for verification campaigns.
//!
//! Every instance uses integer weights over a small common denominator and
//! atoms on the integer lattice `[-3, 3]^n`, which keeps the exact solver
//! away from near-ties that exist only because of floating-point noise.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::copulas::{sklar_compose, Copula};
use crate::error::Result;
use crate::measures::{DiscreteMeasure1D, MultivariateMeasure};
use crate::transport::TransportPlan;

/// Largest checkerboard resolution drawn.
pub const MAX_RESOLUTION: usize = 4;
/// Largest number of atoms in a drawn marginal.
pub const MAX_ATOMS: usize = 5;
/// Atoms are drawn from `-LATTICE..=LATTICE`.
pub const LATTICE: i32 = 3;

/// Generator for the `stream`-th instance of a campaign seeded with `seed`.
pub fn instance_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// 1 to [`MAX_ATOMS`] distinct lattice atoms with integer weights in `1..=8`.
pub fn random_marginal(rng: &mut impl Rng) -> DiscreteMeasure1D {
    let mut lattice: Vec<i32> = (-LATTICE..=LATTICE).collect();
    lattice.shuffle(rng);
    let count = rng.gen_range(1..=MAX_ATOMS);
    let atoms = lattice[..count].iter().map(|&a| a as f64).collect();
    let weights = (0..count).map(|_| rng.gen_range(1..=8) as f64).collect();
    DiscreteMeasure1D::new(atoms, weights).expect("positive weights")
}

/// Checkerboard built as a mixture of 1 to 3 "permutation tensors" (one cell
/// per slice on every axis) with integer weights in `1..=4`, so every slice
/// sum is exactly `1/k` up to rounding of the cell masses.
pub fn random_checkerboard(rng: &mut impl Rng, n: usize, k: usize) -> Copula {
    let terms = rng.gen_range(1..=3);
    let cells = k.pow(n as u32);
    let mut counts = vec![0u32; cells];
    let mut denominator = 0u32;
    for _ in 0..terms {
        let weight = rng.gen_range(1..=4u32);
        denominator += weight;
        let perms: Vec<Vec<usize>> = (1..n)
            .map(|_| {
                let mut p: Vec<usize> = (0..k).collect();
                p.shuffle(rng);
                p
            })
            .collect();
        for r in 0..k {
            let flat = perms.iter().fold(r, |acc, p| acc * k + p[r]);
            counts[flat] += weight;
        }
    }
    let scale = (k as u32 * denominator) as f64;
    let masses = counts.into_iter().map(|c| c as f64 / scale).collect();
    Copula::checkerboard(n, k, masses).expect("permutation mixtures have uniform margins")
}

/// Two measures sharing one copula, with their marginals.
#[derive(Debug, Clone)]
pub struct Instance {
    pub copula: Copula,
    pub mu_marginals: Vec<DiscreteMeasure1D>,
    pub rho_marginals: Vec<DiscreteMeasure1D>,
    pub mu: MultivariateMeasure,
    pub rho: MultivariateMeasure,
}

pub fn random_instance(rng: &mut impl Rng, n: usize) -> Instance {
    let k = rng.gen_range(1..=MAX_RESOLUTION);
    let copula = random_checkerboard(rng, n, k);
    let mu_marginals: Vec<_> = (0..n).map(|_| random_marginal(rng)).collect();
    let rho_marginals: Vec<_> = (0..n).map(|_| random_marginal(rng)).collect();
    let mu = sklar_compose(&copula, &mu_marginals).expect("dimensions agree");
    let rho = sklar_compose(&copula, &rho_marginals).expect("dimensions agree");
    Instance {
        copula,
        mu_marginals,
        rho_marginals,
        mu,
        rho,
    }
}

/// The `index`-th instance of dimension `n` in a campaign. Streams depend on
/// `(n, index)` only, so every exponent in a campaign sees the same instances.
pub fn campaign_instance(seed: u64, n: usize, index: u64) -> Instance {
    random_instance(&mut instance_rng(seed, ((n as u64) << 32) | index), n)
}

/// A feasible coupling of `mu` and `rho`: the northwest-corner plan for
/// randomly shuffled atom orders.
pub fn random_coupling(
    rng: &mut impl Rng,
    mu: &MultivariateMeasure,
    rho: &MultivariateMeasure,
) -> Result<TransportPlan> {
    let mut rows: Vec<usize> = (0..mu.len()).collect();
    let mut cols: Vec<usize> = (0..rho.len()).collect();
    rows.shuffle(rng);
    cols.shuffle(rng);
    let mut rest_r: Vec<f64> = rows.iter().map(|&i| mu.weights()[i]).collect();
    let mut rest_c: Vec<f64> = cols.iter().map(|&j| rho.weights()[j]).collect();
    let mut pairs = Vec::new();
    let (mut a, mut b) = (0, 0);
    while a < rows.len() && b < cols.len() {
        let f = rest_r[a].min(rest_c[b]);
        pairs.push((mu.atoms()[rows[a]].clone(), rho.atoms()[cols[b]].clone(), f));
        rest_r[a] -= f;
        rest_c[b] -= f;
        if rest_r[a] <= rest_c[b] && a + 1 < rows.len() || b + 1 == cols.len() {
            a += 1;
        } else {
            b += 1;
        }
    }
    TransportPlan::from_pairs(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::validate_plan;

    #[test]
    fn streams_are_deterministic_and_distinct() {
        let a = random_instance(&mut instance_rng(42, 7), 3);
        let b = random_instance(&mut instance_rng(42, 7), 3);
        let c = random_instance(&mut instance_rng(42, 8), 3);
        assert_eq!(a.mu, b.mu);
        assert_eq!(a.copula, b.copula);
        assert!(a.mu != c.mu || a.rho != c.rho || a.copula != c.copula);
    }

    #[test]
    fn checkerboard_margins_are_tight() {
        let mut rng = instance_rng(1, 0);
        for _ in 0..200 {
            let n = rng.gen_range(2..=3);
            let k = rng.gen_range(1..=MAX_RESOLUTION);
            let Copula::Checkerboard(cb) = random_checkerboard(&mut rng, n, k) else {
                unreachable!()
            };
            for axis in 0..n {
                for s in cb.slice_sums(axis) {
                    assert!((s - 1.0 / k as f64).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn random_couplings_are_feasible() {
        let mut rng = instance_rng(3, 0);
        for _ in 0..50 {
            let inst = random_instance(&mut rng, 2);
            let plan = random_coupling(&mut rng, &inst.mu, &inst.rho).unwrap();
            assert!(validate_plan(&plan, &inst.mu, &inst.rho));
        }
    }
}
