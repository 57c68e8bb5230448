//! Exact engine and explanation layer cross-checked against exhaustive
//! enumeration on random small models and on small domain instances.

use std::collections::BTreeSet;

use medsched_core::engine::{
    brute_force, brute_force_decision, solve, Decision, SolveConfig, SolveStatus,
};
use medsched_core::explain::{
    extract_mus, justify, verify_mus, Atom, AtomStatus, ExplainConfig, JustNode,
};
use medsched_core::io::{generate_oracle_sized, Instance, ProblemKind};
use medsched_core::model::{
    check_assignment, Assignment, Constraint, ConstraintModel, Flags, Label, Lit,
};
use medsched_core::{cts, ors, poac};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_lit(rng: &mut ChaCha8Rng, model: &ConstraintModel) -> Lit {
    let var = rng.gen_range(0..model.vars.len());
    let values = model.vars[var]
        .domain
        .iter()
        .copied()
        .filter(|_| rng.gen_bool(0.4));
    Lit::among(var, values)
}

fn random_lits(rng: &mut ChaCha8Rng, model: &ConstraintModel, max: usize) -> Vec<Lit> {
    let n = rng.gen_range(1..=max);
    (0..n).map(|_| random_lit(rng, model)).collect()
}

fn random_constraint(rng: &mut ChaCha8Rng, model: &ConstraintModel, levels: u32) -> Constraint {
    match rng.gen_range(0..8) {
        0 => Constraint::ExactlyOne(random_lits(rng, model, 3)),
        1 => Constraint::AtMostOne(random_lits(rng, model, 3)),
        2 => Constraint::LinearLeq {
            terms: random_lits(rng, model, 3)
                .into_iter()
                .map(|l| (l, rng.gen_range(0..4)))
                .collect(),
            bound: rng.gen_range(-1..5),
        },
        3 => Constraint::Ordering {
            before: rng.gen_range(0..model.vars.len()),
            after: rng.gen_range(0..model.vars.len()),
            offset: rng.gen_range(0..3),
        },
        4 => Constraint::AtMostKCount {
            lits: random_lits(rng, model, 4),
            k: rng.gen_range(0..3),
        },
        5 => {
            let premises = random_lits(rng, model, 2);
            let keep = rng.gen_range(0..=premises.len());
            Constraint::Implication {
                premises: premises[..keep].to_vec(),
                conclusion: random_lit(rng, model),
            }
        }
        6 => Constraint::Forbid(random_lits(rng, model, 2)),
        _ => Constraint::CostCap {
            level: rng.gen_range(1..=levels.max(1)),
            bound: rng.gen_range(0..4),
        },
    }
}

/// Random model with up to four variables; `removable` marks every hard
/// constraint removable.
fn random_model(seed: u64, removable: bool) -> ConstraintModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let levels = rng.gen_range(0..=2);
    let mut model = ConstraintModel::with_levels(levels);
    for v in 0..rng.gen_range(1..=4) {
        let domain: Vec<i64> = (0..5).filter(|_| rng.gen_bool(0.6)).collect();
        let domain = if domain.is_empty() { vec![rng.gen_range(0..5)] } else { domain };
        model.add_var(Label::new("x", [v]), domain).unwrap();
    }
    for c in 0..rng.gen_range(0..=6) {
        let constraint = loop {
            let candidate = random_constraint(&mut rng, &model, levels);
            let cost_cap = matches!(candidate, Constraint::CostCap { .. });
            let empty_exactly_one = matches!(&candidate, Constraint::ExactlyOne(l) if l.is_empty());
            if !(cost_cap && levels == 0) && !empty_exactly_one {
                break candidate;
            }
        };
        let flags = if removable { Flags::REMOVABLE } else { Flags::NONE };
        model.add_constraint(Label::new("c", [c]), constraint, flags).unwrap();
    }
    if levels > 0 {
        for s in 0..rng.gen_range(0..=3) {
            let constraint = loop {
                let candidate = random_constraint(&mut rng, &model, levels);
                if !matches!(candidate, Constraint::CostCap { .. }) {
                    break candidate;
                }
            };
            let level = rng.gen_range(1..=levels);
            let weight = rng.gen_range(1..=3);
            model.add_soft(Label::new("s", [s]), level, weight, constraint).unwrap();
        }
    }
    model
}

/// Per-kind evaluation written from the counting definitions, independent of
/// `Constraint::holds`.
fn satisfied(c: &Constraint, values: &[i64], costs: &[u64]) -> bool {
    let count = |lits: &[Lit]| lits.iter().filter(|l| l.values.contains(&values[l.var])).count();
    match c {
        Constraint::ExactlyOne(lits) => count(lits) == 1,
        Constraint::AtMostOne(lits) => count(lits) < 2,
        Constraint::LinearLeq { terms, bound } => {
            let sum: i64 = terms
                .iter()
                .filter(|(l, _)| l.values.contains(&values[l.var]))
                .map(|(_, w)| *w as i64)
                .sum();
            sum <= *bound
        }
        Constraint::Ordering {
            before,
            after,
            offset,
        } => values[*before] + offset <= values[*after],
        Constraint::AtMostKCount { lits, k } => count(lits) <= *k as usize,
        Constraint::Implication {
            premises,
            conclusion,
        } => count(premises) < premises.len() || count(std::slice::from_ref(conclusion)) == 1,
        Constraint::Forbid(lits) => count(lits) < lits.len(),
        Constraint::CostCap { level, bound } => {
            costs.get(*level as usize - 1).copied().unwrap_or(0) <= *bound
        }
    }
}

fn all_assignments(model: &ConstraintModel) -> Vec<Vec<i64>> {
    let mut out = vec![Vec::new()];
    for var in &model.vars {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                var.domain.iter().map(move |&v| {
                    let mut next = prefix.clone();
                    next.push(v);
                    next
                })
            })
            .collect();
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn check_assignment_matches_per_constraint_evaluation(seed in any::<u64>()) {
        let model = random_model(seed, false);
        for values in all_assignments(&model) {
            let report = check_assignment(&model, &Assignment(values.clone())).unwrap();
            let mut costs = vec![0u64; model.objective_len()];
            for s in &model.soft {
                if !satisfied(&s.constraint, &values, &[]) {
                    costs[s.level as usize - 1] += s.weight;
                }
            }
            let expected: Vec<Label> = model
                .hard
                .iter()
                .filter(|c| !satisfied(&c.constraint, &values, &costs))
                .map(|c| c.label.clone())
                .collect();
            prop_assert_eq!(report.violations, expected);
            prop_assert_eq!(report.objective.0.clone(), costs);
        }
    }

    #[test]
    fn solve_matches_brute_force(seed in any::<u64>()) {
        let model = random_model(seed, false);
        let exact = solve(&model, &SolveConfig::with_secs(10.0)).unwrap();
        let oracle = brute_force(&model).unwrap();
        prop_assert_eq!(exact.status, oracle.status);
        prop_assert_eq!(exact.best, oracle.best);
    }

    #[test]
    fn mus_is_minimal_and_among_all_minimal_subsets(seed in any::<u64>()) {
        let model = random_model(seed, true);
        let labels: Vec<Label> = model.hard.iter().map(|c| c.label.clone()).collect();
        let all: BTreeSet<Label> = labels.iter().cloned().collect();
        let unsat = |set: &BTreeSet<Label>| brute_force_decision(&model, set).unwrap().is_unsat();
        let config = ExplainConfig::default();
        if !unsat(&all) {
            prop_assert!(extract_mus(&model, &config).is_err());
            return Ok(());
        }
        let mus = extract_mus(&model, &config).unwrap();
        let set: BTreeSet<Label> = mus.labels.iter().cloned().collect();
        prop_assert!(unsat(&set));
        for l in &mus.labels {
            let mut smaller = set.clone();
            smaller.remove(l);
            prop_assert!(!unsat(&smaller), "removing {} stays unsat", l);
        }
        prop_assert!(verify_mus(&model, &mus, &config).unwrap());
        // Enumerate every subset; the result must be one of the minimal ones.
        let minimal: Vec<BTreeSet<Label>> = (0u32..1 << labels.len())
            .map(|bits| {
                labels
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| bits >> i & 1 == 1)
                    .map(|(_, l)| l.clone())
                    .collect::<BTreeSet<Label>>()
            })
            .filter(|s| unsat(s))
            .filter(|s| s.iter().all(|l| {
                let mut t = s.clone();
                t.remove(l);
                !unsat(&t)
            }))
            .collect();
        prop_assert!(minimal.contains(&set));
    }
}

/// Rebuilds the negation query of a justified atom from scratch: the
/// supporting facts and atoms, caps at the solution's objective, and the
/// negated atom itself.
fn support_model(
    model: &ConstraintModel,
    objective: &[u64],
    atom: Atom,
    supports: &[Label],
    atoms: &[Atom],
) -> ConstraintModel {
    let mut m = ConstraintModel::with_levels(model.levels);
    for v in &model.vars {
        m.add_var_full(v.name.clone(), v.domain.clone(), v.value_names.clone(), v.auxiliary)
            .unwrap();
    }
    for s in &model.soft {
        m.add_soft(s.label.clone(), s.level, s.weight, s.constraint.clone()).unwrap();
    }
    for label in supports {
        let constraint = match model.hard_constraint(label) {
            Some(c) => c.constraint.clone(),
            // Domains hold without a constraint.
            None if label.family == "domain" => continue,
            None => {
                assert_eq!(label.family, "objective-cap", "unknown support {label}");
                let level: u32 = label.args[0].parse().unwrap();
                Constraint::CostCap {
                    level,
                    bound: objective.get(level as usize - 1).copied().unwrap_or(0),
                }
            }
        };
        m.add_constraint(label.clone(), constraint, Flags::NONE).unwrap();
    }
    for (i, a) in atoms.iter().enumerate() {
        let unit = Constraint::Implication {
            premises: Vec::new(),
            conclusion: Lit::eq(a.var, a.value),
        };
        m.add_constraint(Label::new("support-atom", [i]), unit, Flags::NONE).unwrap();
    }
    m.add_constraint(
        Label::atom("negation"),
        Constraint::Forbid(vec![Lit::eq(atom.var, atom.value)]),
        Flags::NONE,
    )
    .unwrap();
    m
}

fn check_justifications(model: &ConstraintModel) {
    let exact = solve(model, &SolveConfig::with_secs(10.0)).unwrap();
    let Some(solution) = exact.best else { return };
    let config = ExplainConfig::default();
    let targets: Vec<Atom> = (0..model.vars.len())
        .filter(|&v| !model.vars[v].auxiliary)
        .map(|v| Atom::new(v, solution.assignment.value(v)))
        .collect();
    let graph = justify(model, &solution, &targets, &config).unwrap();
    assert!(graph.is_acyclic());
    assert!(graph.leaves_are_facts());
    for node in &graph.nodes {
        let JustNode::Atom { atom, status, supports } = node else { continue };
        match status {
            AtomStatus::Unforced | AtomStatus::Truncated => assert!(supports.is_empty()),
            AtomStatus::Justified => {
                let mut facts = Vec::new();
                let mut atoms = Vec::new();
                for &s in supports {
                    match &graph.nodes[s] {
                        JustNode::Fact { label } => facts.push(label.clone()),
                        JustNode::Atom { atom, .. } => atoms.push(*atom),
                    }
                }
                let query = support_model(model, &solution.objective.0, *atom, &facts, &atoms);
                let verdict = brute_force(&query).unwrap();
                assert_eq!(verdict.status, SolveStatus::Unsat, "{}", atom.render(model));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(150))]

    #[test]
    fn justifications_are_sound(seed in any::<u64>()) {
        let mut model = random_model(seed, false);
        // Justifications explain facts; mark the hard constraints as such.
        model.facts = model.hard.iter().map(|c| c.label.clone()).collect();
        model.removable = model.facts.clone();
        check_justifications(&model);
    }
}

fn domain_model(instance: &Instance) -> ConstraintModel {
    match instance {
        Instance::Cts(i) => cts::encode_cts(i).unwrap().model,
        Instance::Ors(i) => ors::encode_ors(i).unwrap().model,
        Instance::Poac(i) => poac::encode_poac(i).unwrap().model,
    }
}

/// Decodes and independently verifies a solver result.
fn verified_objective(instance: &Instance, solution: &medsched_core::engine::Solution) -> Vec<u64> {
    let report = match instance {
        Instance::Cts(i) => {
            let enc = cts::encode_cts(i).unwrap();
            cts::verify_cts(i, &cts::decode_cts(i, &enc.table, solution).unwrap()).unwrap()
        }
        Instance::Ors(i) => {
            let enc = ors::encode_ors(i).unwrap();
            ors::verify_ors(i, &ors::decode_ors(i, &enc.table, solution).unwrap()).unwrap()
        }
        Instance::Poac(i) => {
            let enc = poac::encode_poac(i).unwrap();
            poac::verify_poac(i, &poac::decode_poac(i, &enc.table, solution).unwrap()).unwrap()
        }
    };
    assert!(report.is_valid(), "{:?}", report.violations);
    report.objective.0
}

#[test]
fn domain_instances_match_brute_force() {
    for kind in ProblemKind::ALL {
        let mut checked = 0;
        let mut statuses = BTreeSet::new();
        for seed in 0.. {
            if checked == 40 {
                break;
            }
            let Some(instance) = generate_oracle_sized(kind, seed) else { continue };
            let model = domain_model(&instance);
            let exact = solve(&model, &SolveConfig::with_secs(30.0)).unwrap();
            let oracle = brute_force(&model).unwrap();
            assert_eq!(exact.status, oracle.status, "{kind} seed {seed}");
            assert_eq!(exact.best, oracle.best, "{kind} seed {seed}");
            if let Some(best) = &exact.best {
                let objective = verified_objective(&instance, best);
                assert_eq!(
                    medsched_core::model::ObjectiveVector(objective),
                    best.objective,
                    "{kind} seed {seed}"
                );
            }
            statuses.insert(exact.status.as_str());
            checked += 1;
        }
        assert!(statuses.contains("optimal"), "{kind}: {statuses:?}");
    }
}

#[test]
fn domain_justifications_are_sound() {
    for kind in ProblemKind::ALL {
        let mut checked = 0;
        for seed in 0.. {
            if checked == 5 {
                break;
            }
            let Some(instance) = generate_oracle_sized(kind, seed) else { continue };
            let model = domain_model(&instance);
            if medsched_core::engine::search_space(&model) > 20_000 {
                continue;
            }
            check_justifications(&model);
            checked += 1;
        }
    }
}

#[test]
fn decision_oracle_agrees_on_removable_subsets() {
    for seed in 0..200 {
        let model = random_model(seed, true);
        let labels: Vec<Label> = model.hard.iter().map(|c| c.label.clone()).collect();
        let oracle = medsched_core::engine::DecisionOracle::new(&model).unwrap();
        for bits in 0u32..1 << labels.len() {
            let enabled: BTreeSet<Label> = labels
                .iter()
                .enumerate()
                .filter(|(i, _)| bits >> i & 1 == 1)
                .map(|(_, l)| l.clone())
                .collect();
            let fast = oracle.query(&enabled, &SolveConfig::with_secs(10.0)).unwrap();
            let slow = brute_force_decision(&model, &enabled).unwrap();
            assert_eq!(
                matches!(fast, Decision::Unsat),
                slow.is_unsat(),
                "seed {seed} bits {bits:b}"
            );
        }
    }
}
