//! Greedy reference schedulers standing in for a manual hospital process,
//! used as the comparison arm and as feasibility witnesses.

use crate::cts::{verify_cts, CtsAssignment, CtsInstance, CtsSchedule, PHASES};
use crate::domain::BaselineReport;
use crate::model::ObjectiveVector;
use crate::ors::{verify_ors, OrsAssignment, OrsInstance, OrsSchedule};

/// Prefix of the ids given to fictitious therapy resources.
pub const VIRTUAL_PREFIX: &str = "virtual-";

struct Occupancy {
    /// `busy[resource][slot]`: patient index, if any.
    busy: Vec<Vec<Option<usize>>>,
    staff: [Vec<u32>; 3],
}

/// Patients in input order; every phase at its earliest slot that respects
/// staff capacity and leaves room for the rest of the pathway; the therapy
/// on the first free preferred-type resource (earliest time first), else the
/// first free resource of any type, else a fresh virtual resource.
pub fn greedy_cts(inst: &CtsInstance) -> BaselineReport<CtsSchedule> {
    let slots = inst.slots;
    let mut occ = Occupancy {
        busy: vec![vec![None; slots as usize]; inst.resources.len()],
        staff: std::array::from_fn(|_| vec![0; slots as usize]),
    };
    let mut virtual_resources = 0u32;
    let mut rows = Vec::with_capacity(inst.patients.len());
    for (pi, p) in inst.patients.iter().enumerate() {
        let mut starts = [0u32; PHASES];
        let mut earliest = 0;
        for phase in 0..3 {
            let d = p.durations[phase];
            let latest = inst.window(pi, phase).1;
            let fits = |t: u32| (t..t + d).all(|s| occ.staff[phase][s as usize] < inst.capacities[phase]);
            let t = match (earliest..=latest).find(|&t| fits(t)) {
                Some(t) => t,
                None => {
                    virtual_resources += 1;
                    earliest.min(latest)
                }
            };
            for s in t..t + d {
                occ.staff[phase][s as usize] += 1;
            }
            starts[phase] = t;
            earliest = t + d;
        }
        let d4 = p.durations[3];
        let first = earliest.max(p.drug_ready.unwrap_or(0));
        let last = slots.saturating_sub(d4);
        let eligible = |r: usize| !p.scalp_cooling || inst.resources[r].scalp_cooling;
        let free = |r: usize, t: u32| {
            let span = t as usize..(t + d4) as usize;
            if occ.busy[r][span.clone()].iter().any(Option::is_some) {
                return false;
            }
            let room = &inst.resources[r].room;
            inst.resources.iter().enumerate().all(|(o, res)| {
                if o == r || &res.room != room {
                    return true;
                }
                occ.busy[o][span.clone()].iter().flatten().all(|&q| {
                    !p.isolation && !inst.patients[q].isolation
                })
            })
        };
        let search = |preferred: bool| {
            (first..=last).find_map(|t| {
                (0..inst.resources.len())
                    .filter(|&r| eligible(r))
                    .filter(|&r| !preferred || inst.resources[r].kind == p.preferred)
                    .find(|&r| free(r, t))
                    .map(|r| (r, t))
            })
        };
        let placed = if first <= last { search(true).or_else(|| search(false)) } else { None };
        let resource = match placed {
            Some((r, t)) => {
                for s in t..t + d4 {
                    occ.busy[r][s as usize] = Some(pi);
                }
                starts[3] = t;
                inst.resources[r].id.clone()
            }
            None => {
                virtual_resources += 1;
                starts[3] = first.min(last);
                format!("{VIRTUAL_PREFIX}{virtual_resources}")
            }
        };
        rows.push(CtsAssignment {
            patient: p.id.clone(),
            starts,
            resource,
        });
    }
    let mut schedule = CtsSchedule {
        patients: rows,
        objective: ObjectiveVector::default(),
    };
    if let Ok(report) = verify_cts(inst, &schedule) {
        schedule.objective = report.objective;
    }
    BaselineReport {
        schedule,
        virtual_resources,
        feasible: virtual_resources == 0,
    }
}

/// Sufficient-capacity witness: the greedy, run over a few patient orders,
/// places every patient on a real resource of the preferred type in at
/// least one of them, so a zero wrong-resource optimum exists.
pub fn cts_capacity_witness(inst: &CtsInstance) -> bool {
    let therapy = |i: usize| std::cmp::Reverse(inst.patients[i].durations[3]);
    let input: Vec<usize> = (0..inst.patients.len()).collect();
    let mut longest = input.clone();
    longest.sort_by_key(|&i| (therapy(i), i));
    let mut constrained = input.clone();
    constrained.sort_by_key(|&i| {
        let p = &inst.patients[i];
        (!p.isolation, !p.scalp_cooling, therapy(i), i)
    });
    [input, constrained, longest].into_iter().any(|order| {
        let mut permuted = inst.clone();
        permuted.patients = order.iter().map(|&i| inst.patients[i].clone()).collect();
        let report = greedy_cts(&permuted);
        report.feasible && report.schedule.objective.level(1) == 0
    })
}

/// First fit by (priority, longest first) into specialty-matched shifts in
/// input order, respecting shift length and unit beds. Priority-1
/// registrations left over count as virtual capacity.
pub fn greedy_ors(inst: &OrsInstance) -> BaselineReport<OrsSchedule> {
    let mut order: Vec<usize> = (0..inst.registrations.len()).collect();
    order.sort_by_key(|&i| {
        let r = &inst.registrations[i];
        (r.priority, std::cmp::Reverse(r.duration), i)
    });
    let mut used = vec![0u64; inst.shifts.len()];
    let mut beds = vec![vec![0u32; inst.horizon as usize]; inst.units.len()];
    let mut chosen: Vec<Option<usize>> = vec![None; inst.registrations.len()];
    let mut virtual_resources = 0;
    for i in order {
        let r = &inst.registrations[i];
        let unit = r
            .scu
            .as_ref()
            .and_then(|n| inst.units.iter().position(|u| u.id == n.unit).map(|u| (u, n.days)));
        let stay = |day: u32, days: u32| day..(day + days).min(inst.horizon);
        let fits = |s: usize| {
            let shift = &inst.shifts[s];
            shift.specialty == r.specialty
                && used[s] + r.duration as u64 <= shift.length as u64
                && unit.is_none_or(|(u, days)| {
                    stay(shift.day, days).all(|d| beds[u][d as usize] < inst.units[u].beds)
                })
        };
        match (0..inst.shifts.len()).find(|&s| fits(s)) {
            Some(s) => {
                used[s] += r.duration as u64;
                if let Some((u, days)) = unit {
                    for d in stay(inst.shifts[s].day, days) {
                        beds[u][d as usize] += 1;
                    }
                }
                chosen[i] = Some(s);
            }
            None if r.priority == 1 => virtual_resources += 1,
            None => {}
        }
    }
    let mut schedule = OrsSchedule {
        registrations: inst
            .registrations
            .iter()
            .zip(&chosen)
            .map(|(r, s)| OrsAssignment {
                registration: r.id.clone(),
                shift: s.map(|s| inst.shifts[s].id.clone()),
            })
            .collect(),
        objective: ObjectiveVector::default(),
    };
    if let Ok(report) = verify_ors(inst, &schedule) {
        schedule.objective = report.objective;
    }
    BaselineReport {
        schedule,
        virtual_resources,
        feasible: virtual_resources == 0,
    }
}
