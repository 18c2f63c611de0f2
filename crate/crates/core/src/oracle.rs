//! Independent reference computations used by `ndg validate` and the tests.
//!
//! Nothing here reuses the planner's value tables: optima come from
//! exhaustive search over explicit histories, and policies are scored by
//! enumerating every opponent reply sequence.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::game::{reward, Demand, JointState, Role};
use crate::opponent::{make_prior, uniform_model, DemandDistribution, DemandModel, HeuristicModel, PriorKind};
use crate::planner::{greedy_rule, solve_values, DecisionRule};

/// Best expected `h`-step total from `s` over every history-dependent plan,
/// found by searching the full tree of own demands and opponent replies.
pub fn tree_optimum(model: &DemandModel, omega: f64, h: u32, s: JointState) -> f64 {
    if h == 0 {
        return 0.0;
    }
    let q = model.q();
    let row = model.distribution(s);
    Demand::all(q)
        .map(|a| {
            Demand::all(q)
                .filter(|b| row.prob(*b) > 0.0)
                .map(|b| {
                    let r = reward(a, b, omega, q).expect("demands are in range");
                    row.prob(b) * (r + tree_optimum(model, omega, h - 1, JointState::new(a, b)))
                })
                .sum::<f64>()
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Exact expected total of a non-stationary policy (`rules[0]` acts first).
pub fn policy_value(model: &DemandModel, omega: f64, rules: &[DecisionRule], s: JointState) -> f64 {
    let Some((rule, rest)) = rules.split_first() else {
        return 0.0;
    };
    let q = model.q();
    let a = rule.action(s);
    let row = model.distribution(s);
    Demand::all(q)
        .filter(|b| row.prob(*b) > 0.0)
        .map(|b| {
            let r = reward(a, b, omega, q).expect("demands are in range");
            row.prob(b) * (r + policy_value(model, omega, rest, JointState::new(a, b)))
        })
        .sum()
}

/// The planner's full `h`-stage policy, first stage first.
pub fn dp_policy(model: &DemandModel, omega: f64, h: u32) -> Result<Vec<DecisionRule>> {
    let values = solve_values(model, omega, h)?;
    Ok((1..=h).rev().map(|k| greedy_rule(model, &values, omega, k)).collect())
}

/// A random conditional table with some zero entries.
pub fn random_model<R: Rng>(q: u32, rng: &mut R) -> DemandModel {
    let n = q as usize - 1;
    DemandModel::from_fn(q, |_| {
        let mut w: Vec<f64> = (0..n).map(|_| if rng.gen_bool(0.2) { 0.0 } else { rng.gen::<f64>() }).collect();
        if w.iter().all(|x| *x == 0.0) {
            w[rng.gen_range(0..n)] = 1.0;
        }
        DemandDistribution::from_weights(&w)
    })
    .expect("random rows are valid")
}

#[derive(Clone, Debug)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Planner optimum and planner policy against the tree search, from every
/// start state.
pub fn dp_checks(qs: &[u32], horizons: &[u32], omegas: &[f64], models_per_case: usize, seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();
    for &q in qs {
        for &h in horizons {
            for &omega in omegas {
                let mut worst: f64 = 0.0;
                let mut failure = None;
                for _ in 0..models_per_case {
                    let model = random_model(q, &mut rng);
                    let policy = match dp_policy(&model, omega, h) {
                        Ok(p) => p,
                        Err(e) => {
                            failure = Some(e.to_string());
                            break;
                        }
                    };
                    for s in JointState::all(q) {
                        let best = tree_optimum(&model, omega, h, s);
                        let got = policy_value(&model, omega, &policy, s);
                        worst = worst.max((best - got).abs());
                    }
                }
                let passed = failure.is_none() && worst <= 1e-9;
                checks.push(Check {
                    name: format!("dp-vs-tree q={q} h={h} omega={omega}"),
                    passed,
                    detail: failure.unwrap_or_else(|| format!("max gap {worst:.3e}")),
                });
            }
        }
    }
    checks
}

/// Every distribution the crate can produce sums to one with no negative
/// entries.
pub fn normalisation_checks() -> Vec<Check> {
    let mut checks = Vec::new();
    for q in [4u32, 10] {
        let mut tables: Vec<(String, DemandModel)> = vec![(
            "uniform".to_string(),
            DemandModel::uniform(q).expect("q >= 2"),
        )];
        for sigma in [0.5, 1.0, 3.0] {
            let h = HeuristicModel::new(sigma, q).expect("positive sigma");
            for role in [Role::A, Role::B] {
                tables.push((format!("heuristic sigma={sigma} {role:?}"), DemandModel::heuristic(&h, role).expect("valid")));
                let prior = make_prior(PriorKind::Heuristic { sigma, modeled: role }, q).expect("valid");
                tables.push((format!("heuristic prior sigma={sigma} {role:?}"), prior.estimate_model()));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(u64::from(q));
        tables.push(("random".to_string(), random_model(q, &mut rng)));
        let u = uniform_model(q).expect("q >= 2");
        let uniform_err = (u.probs().iter().sum::<f64>() - 1.0).abs();
        for (name, table) in tables {
            let worst = JointState::all(q)
                .map(|s| {
                    let row = table.row(s);
                    if row.iter().any(|p| *p < 0.0) {
                        f64::INFINITY
                    } else {
                        (row.iter().sum::<f64>() - 1.0).abs()
                    }
                })
                .fold(uniform_err, f64::max);
            checks.push(Check {
                name: format!("normalisation q={q} {name}"),
                passed: worst <= 1e-12,
                detail: format!("max error {worst:.3e}"),
            });
        }
    }
    checks
}
