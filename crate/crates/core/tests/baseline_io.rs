//! Greedy references against the exact engine, generator properties, and
//! the document and CSV writers driven through the kind-independent
//! pipeline.

use medsched_core::baseline::{cts_capacity_witness, greedy_cts, greedy_ors};
use medsched_core::cts::{
    phase2_histogram, verify_cts, CtsInstance, CtsPatient, CtsResource, CtsRoom, ResourceType,
};
use medsched_core::engine::{SolveConfig, SolveStatus};
use medsched_core::explain::ExplainConfig;
use medsched_core::io::{
    generate, generate_cts, parse_explanation, parse_solution, write_explanation,
    write_histogram_csv, write_solution, ExplanationBody, GenParams, Instance, ProblemKind,
    Schedule,
};
use medsched_core::ors::{verify_ors, OrsInstance, Registration, Shift};
use medsched_core::pipeline::{verify_schedule, Prepared};

fn identical_patients(n: usize, capacity: u32) -> CtsInstance {
    CtsInstance {
        slots: 12,
        slot_minutes: 10,
        day_start: "07:40".into(),
        capacities: [capacity; 3],
        patients: (0..n)
            .map(|i| CtsPatient {
                id: format!("p{}", i + 1),
                durations: [1, 1, 1, 2],
                preferred: ResourceType::Chair,
                scalp_cooling: false,
                isolation: false,
                drug_ready: None,
            })
            .collect(),
        resources: (0..n)
            .map(|i| CtsResource {
                id: format!("c{}", i + 1),
                kind: ResourceType::Chair,
                room: "main".into(),
                scalp_cooling: false,
            })
            .collect(),
        rooms: vec![CtsRoom {
            id: "main".into(),
            resources: (0..n).map(|i| format!("c{}", i + 1)).collect(),
        }],
    }
}

#[test]
fn greedy_piles_identical_patients_into_one_slot() {
    let inst = identical_patients(5, 5);
    let greedy = greedy_cts(&inst);
    assert!(greedy.feasible);
    let hist = phase2_histogram(&greedy.schedule, &inst);
    assert_eq!(hist.iter().max(), Some(&5));
    assert!(verify_cts(&inst, &greedy.schedule).unwrap().is_valid());

    let prepared = Prepared::new(&Instance::Cts(inst.clone())).unwrap();
    let report = prepared.solve(&SolveConfig::with_secs(30.0)).unwrap();
    assert_eq!(report.outcome.status, SolveStatus::Optimal);
    let Some(Schedule::Cts(exact)) = &report.schedule else { panic!("no schedule") };
    assert_eq!(exact.objective.level(2), 1);
    assert!(verify_cts(&inst, exact).unwrap().is_valid());
}

fn registration(id: &str, specialty: &str, duration: u32, priority: u8) -> Registration {
    Registration {
        id: id.into(),
        specialty: specialty.into(),
        duration,
        priority,
        scu: None,
    }
}

fn shift(id: &str, specialty: &str, length: u32) -> Shift {
    Shift {
        id: id.into(),
        room: "or1".into(),
        day: 0,
        specialty: specialty.into(),
        length,
    }
}

#[test]
fn ors_greedy_orders_by_priority_then_length() {
    let inst = OrsInstance {
        horizon: 1,
        registrations: vec![
            registration("r1", "gen", 60, 3),
            registration("r2", "gen", 100, 2),
            registration("r3", "gen", 90, 2),
        ],
        shifts: vec![shift("s1", "gen", 200)],
        units: vec![],
    };
    let g = greedy_ors(&inst);
    let placed: Vec<Option<&str>> = g.schedule.registrations.iter().map(|a| a.shift.as_deref()).collect();
    assert_eq!(placed, vec![None, Some("s1"), Some("s1")]);
    assert_eq!(g.schedule.objective.0, vec![0, 1]);
    assert!(verify_ors(&inst, &g.schedule).unwrap().is_valid());
}

#[test]
fn ors_greedy_counts_unplaceable_priority_one_as_virtual() {
    let inst = OrsInstance {
        horizon: 1,
        registrations: vec![registration("r1", "gen", 300, 1), registration("r2", "ent", 30, 1)],
        shifts: vec![shift("s1", "gen", 240)],
        units: vec![],
    };
    let g = greedy_ors(&inst);
    assert_eq!(g.virtual_resources, 2);
    assert!(!g.feasible);
}

#[test]
fn ors_greedy_can_be_beaten_by_first_fit_order() {
    // Longest-first puts r1 (150) in s1 and strands r2 and r3 (100 each);
    // the optimum places r2 and r3 together in s1 and r1 in s2.
    let inst = OrsInstance {
        horizon: 1,
        registrations: vec![
            registration("r1", "gen", 150, 2),
            registration("r2", "gen", 100, 2),
            registration("r3", "gen", 100, 2),
        ],
        shifts: vec![shift("s1", "gen", 200), shift("s2", "gen", 160)],
        units: vec![],
    };
    let g = greedy_ors(&inst);
    assert_eq!(g.schedule.objective.level(1), 1);
    let report = Prepared::new(&Instance::Ors(inst)).unwrap().solve(&SolveConfig::default()).unwrap();
    assert_eq!(report.outcome.status, SolveStatus::Optimal);
    assert_eq!(report.outcome.best.unwrap().objective.level(1), 0);
}

#[test]
fn exact_never_loses_to_a_feasible_greedy() {
    for seed in 0..12 {
        for kind in [ProblemKind::Cts, ProblemKind::Ors] {
            let size = if kind == ProblemKind::Cts { 8 } else { 10 };
            let inst = generate(kind, &GenParams::new(seed, size, 0.6)).unwrap();
            let prepared = Prepared::new(&inst).unwrap();
            let report = prepared.solve(&SolveConfig::with_secs(5.0)).unwrap();
            let (greedy, virtuals) = medsched_core::pipeline::greedy(&inst).unwrap();
            let Some(exact) = report.schedule else { continue };
            assert!(verify_schedule(&inst, &exact).unwrap().is_valid());
            if virtuals == 0 {
                assert!(
                    exact.objective() <= greedy.objective(),
                    "seed {seed} {kind}: exact {} greedy {}",
                    exact.objective(),
                    greedy.objective()
                );
            }
        }
    }
}

#[test]
fn capacity_witnesses_admit_zero_wrong_resource_optima() {
    let mut witnessed = 0;
    for seed in 0..10 {
        let inst = generate_cts(&GenParams::new(seed, 12, 0.5)).unwrap();
        if !cts_capacity_witness(&inst) {
            continue;
        }
        witnessed += 1;
        let report = Prepared::new(&Instance::Cts(inst)).unwrap().solve(&SolveConfig::with_secs(20.0)).unwrap();
        assert_eq!(report.outcome.best.unwrap().objective.level(1), 0, "seed {seed}");
    }
    assert!(witnessed >= 5, "only {witnessed} witnesses");
}

#[test]
fn overloaded_operating_rooms_leave_registrations_unassigned() {
    let inst = generate(ProblemKind::Ors, &GenParams::new(4, 8, 1.5)).unwrap();
    let report = Prepared::new(&inst).unwrap().solve(&SolveConfig::with_secs(20.0)).unwrap();
    assert_eq!(report.outcome.status, SolveStatus::Optimal);
    let Some(Schedule::Ors(s)) = &report.schedule else { panic!("no schedule") };
    assert!(s.registrations.iter().any(|a| a.shift.is_none()));
}

#[test]
fn solution_documents_round_trip() {
    for kind in ProblemKind::ALL {
        let size = if kind == ProblemKind::Poac { 20 } else { 6 };
        let inst = generate(kind, &GenParams::new(7, size, 0.8)).unwrap();
        let report = Prepared::new(&inst).unwrap().solve(&SolveConfig::with_secs(20.0)).unwrap();
        let doc = report.document().expect("solution");
        let text = write_solution(&doc);
        let back = parse_solution(&text).unwrap();
        assert_eq!(back, doc);
        assert_eq!(write_solution(&back), text);
        assert!(verify_schedule(&inst, &back.schedule).unwrap().is_valid());
    }
}

#[test]
fn three_way_conflict_document_lists_three_entries() {
    // Two priority-1 registrations of 120 minutes and one shift of 200.
    let inst = Instance::Ors(OrsInstance {
        horizon: 1,
        registrations: vec![registration("r1", "gen", 120, 1), registration("r2", "gen", 120, 1)],
        shifts: vec![shift("s1", "gen", 200)],
        units: vec![],
    });
    let prepared = Prepared::new(&inst).unwrap();
    let (mus, doc) = prepared.explain_unsat(&ExplainConfig::default()).unwrap();
    assert_eq!(mus.len(), 3);
    assert!(prepared.verify_mus(&mus, &ExplainConfig::default()).unwrap());
    let ExplanationBody::Mus { entries } = &doc.body else { panic!("not a MUS document") };
    assert_eq!(entries.len(), 3);
    assert!(entries.iter().all(|e| !e.description.is_empty()));
    let text = write_explanation(&doc);
    assert_eq!(parse_explanation(&text).unwrap(), doc);
}

#[test]
fn histogram_csv_has_one_row_per_slot() {
    let inst = generate_cts(&GenParams::new(5, 12, 0.5)).unwrap();
    assert_eq!(inst.slots, 26);
    let greedy = greedy_cts(&inst);
    let base = phase2_histogram(&greedy.schedule, &inst);
    let csv = write_histogram_csv(&inst, &base, &base);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "slot,baseline,exact");
    assert_eq!(lines.len(), 27);
    assert!(lines[1].starts_with("07:40,"));
    let total: u32 = lines[1..]
        .iter()
        .map(|l| l.split(',').nth(1).unwrap().parse::<u32>().unwrap())
        .sum();
    assert_eq!(total as usize, inst.patients.len());
}

#[test]
fn background_facts_constrain_the_solve() {
    let inst = Instance::Cts(identical_patients(2, 2));
    let plain = Prepared::new(&inst).unwrap().solve(&SolveConfig::default()).unwrap();
    let Some(Schedule::Cts(s)) = plain.schedule else { panic!() };
    let first = s.patients[0].starts[0];
    let fact = format!("start(p1,1)!={first}");
    let constrained = Prepared::with_background(&inst, &[fact]).unwrap();
    let report = constrained.solve(&SolveConfig::default()).unwrap();
    let Some(Schedule::Cts(t)) = report.schedule else { panic!() };
    assert_ne!(t.patients[0].starts[0], first);
    assert!(Prepared::with_background(&inst, &["nonsense".to_string()]).is_err());
}
