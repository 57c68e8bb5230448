//! Deterministic synthetic instances.
//!
//! All randomness comes from ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded with
//! `seed_from_u64(seed)` and consumed only through integer draws, so output
//! is identical across platforms for a given crate version.
//!
//! `tightness` is the ratio of total demand to total capacity:
//! - CTS: therapy slots requested / (resources × slots);
//! - ORS: surgery minutes requested / shift minutes offered;
//! - POAC: patient-area visits / (Σ area capacities × days).
//!
//! Generators adjust durations or capacities until the achieved ratio is
//! within ±10% of the request, and fail if that is impossible.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Instance, ProblemKind};
use crate::cts::{CtsInstance, CtsPatient, CtsResource, CtsRoom, ResourceType, DEFAULT_DAY_START, DEFAULT_SLOT_MINUTES};
use crate::ors::{OrsInstance, Registration, ScuNeed, Shift, Unit};
use crate::poac::{Area, Exam, PoacInstance, PoacPatient};

pub const DEFAULT_CTS_SLOTS: u32 = 26;
pub const DEFAULT_ORS_DAYS: u32 = 5;
pub const DEFAULT_POAC_DAYS: u32 = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenParams {
    pub seed: u64,
    /// Patients (CTS, POAC) or registrations (ORS).
    pub size: usize,
    pub tightness: f64,
    /// Slots per day (CTS) or days (ORS, POAC); kind default when absent.
    #[serde(default)]
    pub horizon: Option<u32>,
    /// Scalp cooling, isolation and late drugs (CTS); unit stays (ORS).
    #[serde(default = "yes")]
    pub extensions: bool,
}

fn yes() -> bool {
    true
}

impl GenParams {
    pub fn new(seed: u64, size: usize, tightness: f64) -> Self {
        GenParams {
            seed,
            size,
            tightness,
            horizon: None,
            extensions: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum GenError {
    #[error("tightness must be a positive finite number, got {0}")]
    Tightness(f64),
    #[error("horizon of {0} is too short for this kind")]
    Horizon(u32),
    #[error("cannot reach tightness {requested} (best {achieved:.3}) with these knobs")]
    Unreachable { requested: f64, achieved: f64 },
}

pub fn generate(kind: ProblemKind, params: &GenParams) -> Result<Instance, GenError> {
    Ok(match kind {
        ProblemKind::Cts => Instance::Cts(generate_cts(params)?),
        ProblemKind::Ors => Instance::Ors(generate_ors(params)?),
        ProblemKind::Poac => Instance::Poac(generate_poac(params)?),
    })
}

/// Small instances whose encodings stay within the brute-force limit, for
/// cross-checking the solver against exhaustive enumeration. Sizes, horizon
/// and tightness are derived from `seed`; `None` when the draw cannot be
/// generated or its encoding is too large to enumerate.
pub fn generate_oracle_sized(kind: ProblemKind, seed: u64) -> Option<Instance> {
    let pick = |options: &[f64]| options[(seed / 6) as usize % options.len()];
    let mut params = match kind {
        ProblemKind::Cts => {
            let mut p = GenParams::new(seed, 1 + seed as usize % 3, pick(&[0.3, 0.5, 0.9, 1.4]));
            p.horizon = Some(6 + (seed / 3) as u32 % 2);
            p
        }
        ProblemKind::Ors => {
            let mut p = GenParams::new(seed, 2 + seed as usize % 5, pick(&[0.7, 0.9, 1.2, 1.6]));
            p.horizon = Some(1 + seed as u32 % 2);
            p
        }
        ProblemKind::Poac => {
            let mut p = GenParams::new(seed, 1 + seed as usize % 4, pick(&[0.6, 0.9, 1.3]));
            p.horizon = Some(2 + seed as u32 % 2);
            p
        }
    };
    params.extensions = seed.is_multiple_of(2);
    let instance = generate(kind, &params).ok()?;
    let space = match &instance {
        Instance::Cts(i) => crate::cts::encode_cts(i).ok()?.model,
        Instance::Ors(i) => crate::ors::encode_ors(i).ok()?.model,
        Instance::Poac(i) => crate::poac::encode_poac(i).ok()?.model,
    };
    (crate::engine::search_space(&space) <= crate::engine::BRUTE_FORCE_LIMIT).then_some(instance)
}

fn check_tightness(t: f64) -> Result<(), GenError> {
    if t.is_finite() && t > 0.0 {
        Ok(())
    } else {
        Err(GenError::Tightness(t))
    }
}

fn within(achieved: f64, requested: f64) -> bool {
    within_tol(achieved, requested, 0.1)
}

fn within_tol(achieved: f64, requested: f64, tol: f64) -> bool {
    (achieved - requested).abs() <= tol * requested + 1e-12
}

/// Tolerance on the inverse ratio that keeps the ratio itself within ±10%.
const INVERSE_TOL: f64 = 0.09;

/// Nudges integer `amounts` one unit at a time (round-robin, within bounds)
/// until `sum / capacity` is within `tol` (relative) of `target`.
fn nudge(
    amounts: &mut [u32],
    bounds: impl Fn(usize) -> (u32, u32),
    capacity: f64,
    target: f64,
    tol: f64,
) -> Result<(), GenError> {
    let ratio = |a: &[u32]| a.iter().map(|&x| x as f64).sum::<f64>() / capacity;
    let mut idle_rounds = 0;
    let mut i = 0;
    // Unit steps move the sum monotonically towards the target; turning back
    // twice means no reachable sum lies inside the tolerance window.
    let mut last_up = None;
    let mut turns = 0;
    while !within_tol(ratio(amounts), target, tol) && !amounts.is_empty() {
        let up = ratio(amounts) < target;
        if last_up.is_some_and(|prev| prev != up) {
            turns += 1;
            if turns >= 2 {
                return Err(GenError::Unreachable {
                    requested: target,
                    achieved: ratio(amounts),
                });
            }
        }
        last_up = Some(up);
        let (lo, hi) = bounds(i);
        let moved = if up && amounts[i] < hi {
            amounts[i] += 1;
            true
        } else if !up && amounts[i] > lo {
            amounts[i] -= 1;
            true
        } else {
            false
        };
        idle_rounds = if moved { 0 } else { idle_rounds + 1 };
        if idle_rounds > amounts.len() {
            return Err(GenError::Unreachable {
                requested: target,
                achieved: ratio(amounts),
            });
        }
        i = (i + 1) % amounts.len();
    }
    Ok(())
}

pub fn generate_cts(params: &GenParams) -> Result<CtsInstance, GenError> {
    check_tightness(params.tightness)?;
    let slots = params.horizon.unwrap_or(DEFAULT_CTS_SLOTS);
    if slots < 6 {
        return Err(GenError::Horizon(slots));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let n = params.size;
    let max_therapy = (slots / 3).clamp(2, 8);
    let mut patients: Vec<CtsPatient> = (0..n)
        .map(|i| {
            let durations = [
                1,
                rng.gen_range(1..=2),
                rng.gen_range(1..=2),
                rng.gen_range(2..=max_therapy),
            ];
            let preferred = if rng.gen_bool(0.5) { ResourceType::Bed } else { ResourceType::Chair };
            let (mut scalp_cooling, mut isolation, mut drug_ready) = (false, false, None);
            if params.extensions {
                scalp_cooling = rng.gen_ratio(1, 10);
                isolation = rng.gen_ratio(1, 25);
                if rng.gen_ratio(1, 10) {
                    drug_ready = Some(rng.gen_range(slots / 4..=slots / 2));
                }
            }
            CtsPatient {
                id: format!("p{}", i + 1),
                durations,
                preferred,
                scalp_cooling,
                isolation,
                drug_ready,
            }
        })
        .collect();

    // Resources per type in proportion to that type's therapy demand.
    let demand = |kind: ResourceType, ps: &[CtsPatient]| -> u32 {
        ps.iter().filter(|p| p.preferred == kind).map(|p| p.durations[3]).sum()
    };
    let per_type = |kind| {
        let d = demand(kind, &patients) as f64;
        if d == 0.0 {
            0
        } else {
            ((d / (params.tightness * slots as f64)).round() as u32).max(1)
        }
    };
    let (beds, chairs) = (per_type(ResourceType::Bed), per_type(ResourceType::Chair));
    let total = beds + chairs;
    if n > 0 {
        let capacity = (total * slots) as f64;
        let mut therapy: Vec<u32> = patients.iter().map(|p| p.durations[3]).collect();
        let bounds = |i: usize| {
            let p = &patients[i];
            let lead: u32 = p.durations[..3].iter().sum();
            let latest_end = slots - lead.max(p.drug_ready.unwrap_or(0));
            (1, latest_end.min(2 * max_therapy).max(1))
        };
        for (i, d) in therapy.iter_mut().enumerate() {
            let (lo, hi) = bounds(i);
            *d = (*d).clamp(lo, hi);
        }
        nudge(&mut therapy, bounds, capacity, params.tightness, 0.1)?;
        for (p, d) in patients.iter_mut().zip(therapy) {
            p.durations[3] = d;
        }
    }

    let mut resources = Vec::with_capacity(total as usize);
    for (kind, count, prefix) in [(ResourceType::Bed, beds, "bed"), (ResourceType::Chair, chairs, "chair")] {
        for i in 0..count {
            resources.push(CtsResource {
                id: format!("{prefix}{}", i + 1),
                kind,
                room: String::new(),
                scalp_cooling: params.extensions && i % 3 == 0,
            });
        }
    }
    // Shuffle so rooms mix beds and chairs, then pair them into rooms.
    resources.shuffle(&mut rng);
    let mut rooms: Vec<CtsRoom> = Vec::new();
    for (i, r) in resources.iter_mut().enumerate() {
        let room = format!("room{}", i / 2 + 1);
        r.room = room.clone();
        match rooms.last_mut().filter(|last| last.id == room) {
            Some(last) => last.resources.push(r.id.clone()),
            None => rooms.push(CtsRoom {
                id: room,
                resources: vec![r.id.clone()],
            }),
        }
    }
    let staff = ((3 * n as u32).div_ceil(slots)).max(1);
    Ok(CtsInstance {
        slots,
        slot_minutes: DEFAULT_SLOT_MINUTES,
        day_start: DEFAULT_DAY_START.to_string(),
        capacities: [staff, staff, staff],
        patients,
        resources,
        rooms,
    })
}

const SPECIALTIES: [&str; 4] = ["general", "orthopedics", "cardiac", "neuro"];
const SHIFT_STEP: u32 = 30;

pub fn generate_ors(params: &GenParams) -> Result<OrsInstance, GenError> {
    check_tightness(params.tightness)?;
    let horizon = params.horizon.unwrap_or(DEFAULT_ORS_DAYS);
    if horizon == 0 {
        return Err(GenError::Horizon(horizon));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let n = params.size;
    let specialties = &SPECIALTIES[..(n / 8).clamp(1, SPECIALTIES.len())];
    let units = if params.extensions {
        vec![
            Unit { id: "icu".into(), beds: 0 },
            Unit { id: "scu".into(), beds: 0 },
        ]
    } else {
        Vec::new()
    };
    let registrations: Vec<Registration> = (0..n)
        .map(|i| {
            let specialty = specialties[rng.gen_range(0..specialties.len())].to_string();
            let duration = 15 * rng.gen_range(2..=16);
            let priority = match rng.gen_range(0..20) {
                0..=2 => 1,
                3..=11 => 2,
                _ => 3,
            };
            let scu = (!units.is_empty() && rng.gen_ratio(1, 5)).then(|| ScuNeed {
                unit: units[rng.gen_range(0..units.len())].id.clone(),
                days: rng.gen_range(1..=3),
            });
            Registration {
                id: format!("r{}", i + 1),
                specialty,
                duration,
                priority,
                scu,
            }
        })
        .collect();
    let mut units = units;
    for u in &mut units {
        let stay: u32 = registrations
            .iter()
            .filter_map(|r| r.scu.as_ref().filter(|s| s.unit == u.id))
            .map(|s| s.days)
            .sum();
        u.beds = stay.div_ceil(horizon).max(1);
    }

    const BASE_LENGTH: u32 = 480;
    let mut shifts = Vec::new();
    for (si, spec) in specialties.iter().enumerate() {
        let demand: u32 = registrations
            .iter()
            .filter(|r| r.specialty == *spec)
            .map(|r| r.duration)
            .sum();
        if demand == 0 {
            continue;
        }
        let count = ((demand as f64 / (params.tightness * BASE_LENGTH as f64)).round() as u32).max(1);
        for k in 0..count {
            let idx = shifts.len();
            shifts.push(Shift {
                id: format!("s{}", idx + 1),
                room: format!("or{}", (idx % 4) + 1),
                day: (k + si as u32) % horizon,
                specialty: spec.to_string(),
                length: BASE_LENGTH,
            });
        }
    }
    if !shifts.is_empty() {
        // Adjust shift lengths in 30-minute steps: demand is fixed, so the
        // amounts nudged are capacities and the ratio is inverted.
        let demand: u32 = registrations.iter().map(|r| r.duration).sum();
        let mut steps: Vec<u32> = shifts.iter().map(|s| s.length / SHIFT_STEP).collect();
        let inverse_target = 1.0 / params.tightness;
        nudge(&mut steps, |_| (4, 24), demand as f64 / SHIFT_STEP as f64, inverse_target, INVERSE_TOL)?;
        for (s, k) in shifts.iter_mut().zip(steps) {
            s.length = k * SHIFT_STEP;
        }
        let offered: u32 = shifts.iter().map(|s| s.length).sum();
        let achieved = demand as f64 / offered as f64;
        if !within(achieved, params.tightness) {
            return Err(GenError::Unreachable {
                requested: params.tightness,
                achieved,
            });
        }
    }
    Ok(OrsInstance {
        horizon,
        registrations,
        shifts,
        units,
    })
}

const AREAS: [(&str, [&str; 2]); 4] = [
    ("cardiology", ["ecg", "echo"]),
    ("laboratory", ["blood", "urine"]),
    ("radiology", ["xray", "ct"]),
    ("anesthesia", ["consult", "airway"]),
];

pub fn generate_poac(params: &GenParams) -> Result<PoacInstance, GenError> {
    check_tightness(params.tightness)?;
    let days = params.horizon.unwrap_or(DEFAULT_POAC_DAYS);
    if days == 0 {
        return Err(GenError::Horizon(days));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let n = params.size;
    let area_count = (2 + n / 6).min(AREAS.len());
    let exams: Vec<Exam> = AREAS[..area_count]
        .iter()
        .flat_map(|(area, ex)| {
            ex.iter().map(|e| Exam {
                id: e.to_string(),
                area: area.to_string(),
            })
        })
        .collect();
    let patients: Vec<PoacPatient> = (0..n)
        .map(|i| {
            let k = rng.gen_range(1..=3.min(exams.len()));
            let mut chosen: Vec<String> = exams
                .choose_multiple(&mut rng, k)
                .map(|e| e.id.clone())
                .collect();
            chosen.sort_by_key(|id| exams.iter().position(|e| &e.id == id));
            PoacPatient {
                id: format!("p{}", i + 1),
                due: rng.gen_range(days / 2..days),
                exams: chosen,
            }
        })
        .collect();
    let mut inst = PoacInstance {
        days,
        doctors: (area_count as u32 - 1).max(1),
        patients,
        exams,
        areas: AREAS[..area_count]
            .iter()
            .map(|(id, _)| Area {
                id: id.to_string(),
                capacity: 1,
            })
            .collect(),
    };
    // Enough doctors for any single patient's areas, one short of all areas
    // when that leaves the limit binding.
    let widest = (0..n).map(|p| inst.areas_of(p).len() as u32).max().unwrap_or(1);
    inst.doctors = inst.doctors.max(widest);
    let visits: Vec<u32> = (0..area_count)
        .map(|a| (0..n).filter(|&p| inst.areas_of(p).contains(&a)).count() as u32)
        .collect();
    // Capacity counts only the share of areas the doctor pool can open on
    // a day, so that tightness 1 is a full clinic rather than an
    // overbooked one.
    let open_share = (inst.doctors as f64 / area_count as f64).min(1.0);
    let total_visits: u32 = visits.iter().sum();
    if total_visits > 0 {
        let per_day = params.tightness * days as f64 * open_share;
        let mut caps: Vec<u32> = visits
            .iter()
            .map(|&v| ((v as f64 / per_day).round() as u32).max(1))
            .collect();
        let inverse_target = 1.0 / params.tightness;
        let demand_per_day = total_visits as f64 / (days as f64 * open_share);
        nudge(&mut caps, |_| (1, u32::MAX), demand_per_day, inverse_target, INVERSE_TOL)?;
        for (a, c) in inst.areas.iter_mut().zip(caps) {
            a.capacity = c;
        }
    }
    Ok(inst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::write_instance;

    #[test]
    fn same_seed_same_bytes() {
        for kind in ProblemKind::ALL {
            let p = GenParams::new(7, 20, 0.8);
            let a = write_instance(&generate(kind, &p).unwrap());
            let b = write_instance(&generate(kind, &p).unwrap());
            assert_eq!(a, b);
        }
    }

    #[test]
    fn generated_instances_validate_and_hit_tightness() {
        for seed in 0..20 {
            let p = GenParams::new(seed, 20, 0.7);
            let cts = generate_cts(&p).unwrap();
            cts.validate().unwrap();
            let demand: u32 = cts.patients.iter().map(|p| p.durations[3]).sum();
            let ratio = demand as f64 / (cts.resources.len() as u32 * cts.slots) as f64;
            assert!(within(ratio, 0.7), "cts ratio {ratio}");
            let mut short = p.clone();
            short.horizon = Some(6);
            short.size = 2;
            if let Ok(small) = generate_cts(&short) {
                small.validate().unwrap();
            }

            let ors = generate_ors(&p).unwrap();
            ors.validate().unwrap();
            let demand: u32 = ors.registrations.iter().map(|r| r.duration).sum();
            let offered: u32 = ors.shifts.iter().map(|s| s.length).sum();
            assert!(within(demand as f64 / offered as f64, 0.7));

            let poac = generate_poac(&p).unwrap();
            poac.validate().unwrap();
            let visits: usize = (0..poac.patients.len()).map(|i| poac.areas_of(i).len()).sum();
            let share = (poac.doctors as f64 / poac.areas.len() as f64).min(1.0);
            let cap = poac.areas.iter().map(|a| a.capacity).sum::<u32>() as f64 * poac.days as f64 * share;
            assert!(within(visits as f64 / cap, 0.7));
        }
    }

    #[test]
    fn bad_tightness_rejected() {
        assert_eq!(
            generate_cts(&GenParams::new(1, 5, 0.0)).unwrap_err(),
            GenError::Tightness(0.0)
        );
    }
}
