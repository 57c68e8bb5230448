//! Chemotherapy treatment scheduling: four ordered phases per patient
//! (registration, blood collection, medical check, therapy), staff pools for
//! the first three, beds and chairs for the therapy.
//!
//! Objective: level 1 counts patients on a resource of the wrong type,
//! level 2 is the largest number of phase-2 starts in any one slot.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::domain::{check_unique_ids, shape_error, Encoded, InstanceError, Verification, Violation};
use crate::engine::Solution;
use crate::model::{
    Constraint, ConstraintModel, Flags, Label, Lit, ModelError, ObjectiveVector, VarId,
};

pub const PHASES: usize = 4;

/// Earliest and latest start of each phase.
type Windows = [(u32, u32); PHASES];
pub const DEFAULT_SLOT_MINUTES: u32 = 10;
pub const DEFAULT_DAY_START: &str = "07:40";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResourceType {
    Bed,
    Chair,
}

impl ResourceType {
    pub fn as_str(self) -> &'static str {
        match self {
            ResourceType::Bed => "bed",
            ResourceType::Chair => "chair",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CtsPatient {
    pub id: String,
    /// Phase durations in slots.
    pub durations: [u32; PHASES],
    pub preferred: ResourceType,
    #[serde(default)]
    pub scalp_cooling: bool,
    #[serde(default)]
    pub isolation: bool,
    /// Earliest slot the therapy may start, when drugs arrive late.
    #[serde(default)]
    pub drug_ready: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CtsResource {
    pub id: String,
    #[serde(rename = "type")]
    pub kind: ResourceType,
    pub room: String,
    #[serde(default)]
    pub scalp_cooling: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CtsRoom {
    pub id: String,
    pub resources: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CtsInstance {
    pub slots: u32,
    #[serde(default = "default_slot_minutes")]
    pub slot_minutes: u32,
    #[serde(default = "default_day_start")]
    pub day_start: String,
    /// Staff capacity (concurrent patients per slot) for phases 1 to 3.
    pub capacities: [u32; 3],
    pub patients: Vec<CtsPatient>,
    pub resources: Vec<CtsResource>,
    pub rooms: Vec<CtsRoom>,
}

fn default_slot_minutes() -> u32 {
    DEFAULT_SLOT_MINUTES
}

fn default_day_start() -> String {
    DEFAULT_DAY_START.to_string()
}

fn parse_clock(text: &str) -> Option<u32> {
    let (h, m) = text.split_once(':')?;
    if h.len() != 2 || m.len() != 2 {
        return None;
    }
    let (h, m): (u32, u32) = (h.parse().ok()?, m.parse().ok()?);
    (h < 24 && m < 60).then_some(h * 60 + m)
}

impl CtsInstance {
    pub fn validate(&self) -> Result<(), InstanceError> {
        if self.slots == 0 {
            return Err(InstanceError::new("slots", "must be at least 1"));
        }
        if self.slot_minutes == 0 {
            return Err(InstanceError::new("slot_minutes", "must be at least 1"));
        }
        if parse_clock(&self.day_start).is_none() {
            return Err(InstanceError::new("day_start", "expected HH:MM"));
        }
        for (i, &c) in self.capacities.iter().enumerate() {
            if c == 0 {
                return Err(InstanceError::new(format!("capacities[{i}]"), "must be at least 1"));
            }
        }
        check_unique_ids("patients", self.patients.iter().map(|p| p.id.as_str()))?;
        check_unique_ids("resources", self.resources.iter().map(|r| r.id.as_str()))?;
        check_unique_ids("rooms", self.rooms.iter().map(|r| r.id.as_str()))?;
        for (i, p) in self.patients.iter().enumerate() {
            if p.durations.contains(&0) {
                return Err(InstanceError::new(
                    format!("patients[{i}].durations"),
                    format!("patient `{}` has a zero-length phase", p.id),
                ));
            }
            let total: u64 = p.durations.iter().map(|&d| d as u64).sum();
            if total > self.slots as u64 {
                return Err(InstanceError::new(
                    format!("patients[{i}].durations"),
                    format!("pathway of patient `{}` is longer than the day", p.id),
                ));
            }
            if p.drug_ready.is_some_and(|r| r >= self.slots) {
                return Err(InstanceError::new(
                    format!("patients[{i}].drug_ready"),
                    format!("slot is outside the day for patient `{}`", p.id),
                ));
            }
        }
        if !self.patients.is_empty() && self.resources.is_empty() {
            return Err(InstanceError::new("resources", "patients need at least one resource"));
        }
        let mut listed: HashMap<&str, &str> = HashMap::new();
        for (i, room) in self.rooms.iter().enumerate() {
            for res in &room.resources {
                if listed.insert(res.as_str(), room.id.as_str()).is_some() {
                    return Err(InstanceError::new(
                        format!("rooms[{i}].resources"),
                        format!("resource `{res}` is listed in more than one room"),
                    ));
                }
                if !self.resources.iter().any(|r| &r.id == res) {
                    return Err(InstanceError::new(
                        format!("rooms[{i}].resources"),
                        format!("unknown resource `{res}`"),
                    ));
                }
            }
        }
        for (i, r) in self.resources.iter().enumerate() {
            if listed.get(r.id.as_str()) != Some(&r.room.as_str()) {
                return Err(InstanceError::new(
                    format!("resources[{i}].room"),
                    format!("resource `{}` is not listed by room `{}`", r.id, r.room),
                ));
            }
        }
        Ok(())
    }

    /// Label of slot `i`, e.g. `07:40` for slot 0 with the defaults.
    pub fn slot_label(&self, slot: u32) -> String {
        let start = parse_clock(&self.day_start).unwrap_or(0);
        let minutes = (start + slot * self.slot_minutes) % (24 * 60);
        format!("{:02}:{:02}", minutes / 60, minutes % 60)
    }

    /// Feasible start window of phase `phase` (0-based) ignoring all
    /// interactions: enough time before for earlier phases and after for
    /// later ones.
    pub fn window(&self, patient: usize, phase: usize) -> (u32, u32) {
        let d = &self.patients[patient].durations;
        let before: u32 = d[..phase].iter().sum();
        let from_here: u32 = d[phase..].iter().sum();
        (before, self.slots - from_here)
    }

    fn resource_index(&self, id: &str) -> Option<usize> {
        self.resources.iter().position(|r| r.id == id)
    }

    fn room_of(&self, resource: usize) -> &str {
        &self.resources[resource].room
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CtsAssignment {
    pub patient: String,
    pub starts: [u32; PHASES],
    pub resource: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CtsSchedule {
    pub patients: Vec<CtsAssignment>,
    pub objective: ObjectiveVector,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CtsPatientVars {
    pub starts: [VarId; PHASES],
    pub resource: VarId,
    /// Auxiliary `rank * slots + therapy start`.
    pub therapy: VarId,
    /// Resource indices in value order of `resource`.
    pub ranking: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CtsTable {
    pub patients: Vec<CtsPatientVars>,
    pub peak: VarId,
    /// Lower bound on the phase-2 start peak implied by the start windows.
    pub peak_floor: u32,
}

fn p_label(family: &str, patient: &CtsPatient) -> Label {
    Label::new(family, [patient.id.as_str()])
}

fn range(lo: u32, hi: u32) -> Vec<i64> {
    (lo as i64..=hi as i64).collect()
}

/// Largest ceil(k / len) over slot intervals, k being the patients whose
/// whole phase-2 window lies in the interval.
fn start_peak_floor(windows: &[(u32, u32)]) -> u32 {
    let mut points: Vec<u32> = windows.iter().flat_map(|&(lo, hi)| [lo, hi]).collect();
    points.sort_unstable();
    points.dedup();
    let mut best = 0;
    for &a in &points {
        for &b in points.iter().filter(|&&b| b >= a) {
            let inside = windows.iter().filter(|&&(lo, hi)| lo >= a && hi <= b).count() as u32;
            best = best.max(inside.div_ceil(b - a + 1));
        }
    }
    best
}

struct Builder<'a> {
    inst: &'a CtsInstance,
    model: ConstraintModel,
    vars: Vec<CtsPatientVars>,
    windows: Vec<[(u32, u32); PHASES]>,
}

impl Builder<'_> {
    fn slots(&self) -> i64 {
        self.inst.slots as i64
    }

    /// `start(p, phase) ∈ [t - d + 1, t]`: the phase occupies slot `t`.
    fn occupying(&self, p: usize, phase: usize, t: u32) -> Option<Lit> {
        let d = self.inst.patients[p].durations[phase];
        let (lo, hi) = self.windows[p][phase];
        let from = (t + 1).saturating_sub(d).max(lo);
        let to = t.min(hi);
        (from <= to).then(|| Lit::among(self.vars[p].starts[phase], range(from, to)))
    }

    /// Therapy of `p` occupies slot `t` on one of `resources`.
    fn therapy_on(&self, p: usize, resources: &[usize], t: u32) -> Option<Lit> {
        let d = self.inst.patients[p].durations[3];
        let (lo, hi) = self.windows[p][3];
        let from = (t + 1).saturating_sub(d).max(lo);
        let to = t.min(hi);
        if from > to {
            return None;
        }
        let pv = &self.vars[p];
        let mut values = Vec::new();
        for (rank, r) in pv.ranking.iter().enumerate() {
            if resources.contains(r) {
                values.extend((from..=to).map(|s| rank as i64 * self.slots() + s as i64));
            }
        }
        (!values.is_empty()).then(|| Lit::among(pv.therapy, values))
    }

    fn add(&mut self, label: Label, c: Constraint, flags: Flags, note: String) -> Result<(), ModelError> {
        self.model.note(&label, note);
        self.model.add_constraint(label, c, flags)
    }
}

pub fn encode_cts(inst: &CtsInstance) -> Result<Encoded<CtsTable>, InstanceError> {
    inst.validate()?;
    encode_valid(inst).map_err(|e| InstanceError::new("model", e.to_string()))
}

fn encode_valid(inst: &CtsInstance) -> Result<Encoded<CtsTable>, ModelError> {
    let n = inst.patients.len();
    let s = inst.slots as i64;
    let mut b = Builder {
        inst,
        model: ConstraintModel::with_levels(2),
        vars: Vec::with_capacity(n),
        windows: Vec::with_capacity(n),
    };
    let resource_ids: Vec<String> = inst.resources.iter().map(|r| r.id.clone()).collect();

    // Variables are created longest pathway first: the search fixes them in
    // id order, so the hardest-to-place patients claim early slots first.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&pi| (std::cmp::Reverse(inst.patients[pi].durations.iter().sum::<u32>()), pi));
    let mut created: Vec<Option<(CtsPatientVars, Windows)>> = vec![None; n];
    for pi in order {
        let p = &inst.patients[pi];
        let windows: [(u32, u32); PHASES] = std::array::from_fn(|i| inst.window(pi, i));
        let mut starts = [0; PHASES];
        for phase in 0..3 {
            let (lo, hi) = windows[phase];
            starts[phase] = b
                .model
                .add_var(Label::new("start", [p.id.clone(), (phase + 1).to_string()]), range(lo, hi))?;
        }
        let (lo4, hi4) = windows[3];
        starts[3] = b
            .model
            .add_var(Label::new("start", [p.id.clone(), "4".to_string()]), range(lo4, hi4))?;
        let mut ranking: Vec<usize> = (0..inst.resources.len()).collect();
        ranking.sort_by_key(|&r| (inst.resources[r].kind != p.preferred, r));
        let names = ranking.iter().map(|&r| resource_ids[r].clone()).collect();
        let resource = b.model.add_var_full(
            p_label("resource", p),
            (0..ranking.len() as i64).collect(),
            Some(names),
            false,
        )?;
        let therapy_domain: Vec<i64> = (0..ranking.len() as i64)
            .flat_map(|rank| (lo4 as i64..=hi4 as i64).map(move |t| rank * s + t))
            .collect();
        let therapy = b
            .model
            .add_var_full(p_label("therapy", p), therapy_domain, None, true)?;
        created[pi] = Some((
            CtsPatientVars {
                starts,
                resource,
                therapy,
                ranking,
            },
            windows,
        ));
    }
    for (vars, windows) in created.into_iter().flatten() {
        b.vars.push(vars);
        b.windows.push(windows);
    }

    let phase2: Vec<(u32, u32)> = b.windows.iter().map(|w| w[1]).collect();
    let floor = start_peak_floor(&phase2);
    let max_peak = (n as u32).min(inst.capacities[1]).max(floor);
    let peak = b.model.add_var_full(
        Label::atom("peak"),
        range(0, max_peak),
        None,
        true,
    )?;

    for (pi, p) in inst.patients.iter().enumerate() {
        let pv = b.vars[pi].clone();
        // Therapy channels: resource(p) = rank ⇔ therapy in that rank's block,
        // start(p,4) = t ⇔ therapy in that start's column.
        let (lo4, hi4) = b.windows[pi][3];
        for rank in 0..pv.ranking.len() as i64 {
            let block = Lit::among(pv.therapy, (lo4 as i64..=hi4 as i64).map(|t| rank * s + t));
            let on = Lit::eq(pv.resource, rank);
            let r = &resource_ids[pv.ranking[rank as usize]];
            b.add(
                Label::new("therapy-on", [p.id.as_str(), r.as_str()]),
                Constraint::Implication { premises: vec![on.clone()], conclusion: block.clone() },
                Flags::NONE,
                format!("therapy of {} on {r} uses that resource", p.id),
            )?;
            b.add(
                Label::new("on-therapy", [p.id.as_str(), r.as_str()]),
                Constraint::Implication { premises: vec![block], conclusion: on },
                Flags::NONE,
                format!("resource of {} is {r} when its therapy is placed there", p.id),
            )?;
        }
        for t in lo4..=hi4 {
            let column = Lit::among(pv.therapy, (0..pv.ranking.len() as i64).map(|r| r * s + t as i64));
            let at = Lit::eq(pv.starts[3], t as i64);
            b.add(
                Label::new("therapy-at", [p.id.clone(), t.to_string()]),
                Constraint::Implication { premises: vec![at.clone()], conclusion: column.clone() },
                Flags::NONE,
                format!("therapy of {} starts at slot {t}", p.id),
            )?;
            b.add(
                Label::new("at-therapy", [p.id.clone(), t.to_string()]),
                Constraint::Implication { premises: vec![column], conclusion: at },
                Flags::NONE,
                format!("phase 4 of {} starts when its therapy does", p.id),
            )?;
        }
        for phase in 0..3 {
            let d = p.durations[phase];
            b.add(
                Label::new("phase-order", [p.id.clone(), (phase + 1).to_string()]),
                Constraint::Ordering {
                    before: pv.starts[phase],
                    after: pv.starts[phase + 1],
                    offset: d as i64,
                },
                Flags::FACT,
                format!(
                    "patient {} finishes phase {} ({d} slots) before phase {} starts",
                    p.id,
                    phase + 1,
                    phase + 2
                ),
            )?;
        }
        if p.scalp_cooling {
            let without: Vec<i64> = pv
                .ranking
                .iter()
                .enumerate()
                .filter(|(_, &r)| !inst.resources[r].scalp_cooling)
                .map(|(rank, _)| rank as i64)
                .collect();
            if !without.is_empty() {
                b.add(
                    p_label("scalp-cooling", p),
                    Constraint::Forbid(vec![Lit::among(pv.resource, without)]),
                    Flags::FACT,
                    format!("patient {} needs a resource with scalp cooling", p.id),
                )?;
            }
        }
        if let Some(ready) = p.drug_ready.filter(|&r| r > lo4) {
            b.add(
                p_label("drug-ready", p),
                Constraint::Forbid(vec![Lit::among(pv.starts[3], range(lo4, ready - 1))]),
                Flags::FACT,
                format!("drugs for patient {} are ready at slot {ready}", p.id),
            )?;
        }
    }

    for phase in 0..3 {
        let cap = inst.capacities[phase];
        for t in 0..inst.slots {
            let lits: Vec<Lit> = (0..n).filter_map(|p| b.occupying(p, phase, t)).collect();
            if lits.len() > cap as usize {
                b.add(
                    Label::new("phase-capacity", [(phase + 1) as u32, t]),
                    Constraint::AtMostKCount { lits, k: cap },
                    Flags::FACT,
                    format!(
                        "at most {cap} patients in phase {} at {}",
                        phase + 1,
                        inst.slot_label(t)
                    ),
                )?;
            }
        }
    }

    for (ri, res) in inst.resources.iter().enumerate() {
        for t in 0..inst.slots {
            let lits: Vec<Lit> = (0..n).filter_map(|p| b.therapy_on(p, &[ri], t)).collect();
            if lits.len() > 1 {
                b.add(
                    Label::new("resource-busy", [res.id.clone(), t.to_string()]),
                    Constraint::AtMostOne(lits),
                    Flags::FACT,
                    format!("{} {} holds one patient at {}", res.kind.as_str(), res.id, inst.slot_label(t)),
                )?;
            }
        }
    }

    // Implied by the per-resource limits: no more therapies in progress
    // than there are resources, which prunes before resources are chosen.
    let total = inst.resources.len() as u32;
    for t in 0..inst.slots {
        let lits: Vec<Lit> = (0..n).filter_map(|p| b.occupying(p, 3, t)).collect();
        if lits.len() > total as usize {
            b.add(
                Label::new("therapy-load", [t]),
                Constraint::AtMostKCount { lits, k: total },
                Flags::NONE,
                format!("at most {total} therapies in progress at {}", inst.slot_label(t)),
            )?;
        }
    }

    for (pi, p) in inst.patients.iter().enumerate().filter(|(_, p)| p.isolation) {
        for room in &inst.rooms {
            let members: Vec<usize> = room
                .resources
                .iter()
                .filter_map(|r| inst.resource_index(r))
                .collect();
            for t in 0..inst.slots {
                let Some(own) = b.therapy_on(pi, &members, t) else {
                    continue;
                };
                let others: Vec<Lit> = (0..n)
                    .filter(|&q| q != pi)
                    .filter_map(|q| b.therapy_on(q, &members, t))
                    .collect();
                if others.is_empty() {
                    continue;
                }
                let k = others.len() as u64;
                let mut terms = vec![(own, k)];
                terms.extend(others.into_iter().map(|l| (l, 1)));
                b.add(
                    Label::new("isolation", [p.id.clone(), room.id.clone(), t.to_string()]),
                    Constraint::LinearLeq { terms, bound: k as i64 },
                    Flags::FACT,
                    format!(
                        "patient {} is alone in room {} while treated at {}",
                        p.id,
                        room.id,
                        inst.slot_label(t)
                    ),
                )?;
            }
        }
    }

    // peak ≥ number of phase-2 starts in every slot.
    for t in 0..inst.slots {
        let starts: Vec<Lit> = (0..n)
            .filter(|&p| {
                let (lo, hi) = b.windows[p][1];
                (lo..=hi).contains(&t)
            })
            .map(|p| Lit::eq(b.vars[p].starts[1], t as i64))
            .collect();
        let m = starts.len() as u32;
        for j in 1..=max_peak.min(m) {
            let mut terms: Vec<(Lit, u64)> = starts.iter().map(|l| (l.clone(), 1)).collect();
            terms.push((Lit::among(peak, range(0, j - 1)), (m - j + 1) as u64));
            b.add(
                Label::new("peak-link", [t, j]),
                Constraint::LinearLeq { terms, bound: m as i64 },
                Flags::NONE,
                format!("peak below {j} allows fewer than {j} phase-2 starts at {}", inst.slot_label(t)),
            )?;
        }
    }
    if floor > 0 {
        b.add(
            Label::atom("peak-floor"),
            Constraint::Forbid(vec![Lit::among(peak, range(0, floor - 1))]),
            Flags::NONE,
            format!("start windows force a phase-2 peak of at least {floor}"),
        )?;
    }

    for (pi, p) in inst.patients.iter().enumerate() {
        let pv = &b.vars[pi];
        let wrong: Vec<i64> = pv
            .ranking
            .iter()
            .enumerate()
            .filter(|(_, &r)| inst.resources[r].kind != p.preferred)
            .map(|(rank, _)| rank as i64)
            .collect();
        if !wrong.is_empty() {
            let label = p_label("preferred", p);
            b.model.note(&label, format!("patient {} prefers a {}", p.id, p.preferred.as_str()));
            b.model
                .add_soft(label, 1, 1, Constraint::Forbid(vec![Lit::among(pv.resource, wrong)]))?;
        }
    }
    for j in 1..=max_peak {
        let label = Label::new("peak", [j]);
        b.model.note(&label, format!("fewer than {j} phase-2 starts per slot"));
        b.model
            .add_soft(label, 2, 1, Constraint::Forbid(vec![Lit::among(peak, range(j, max_peak))]))?;
    }

    Ok(Encoded {
        model: b.model,
        table: CtsTable {
            patients: b.vars,
            peak,
            peak_floor: floor,
        },
    })
}

pub fn decode_cts(
    inst: &CtsInstance,
    table: &CtsTable,
    solution: &Solution,
) -> Result<CtsSchedule, InstanceError> {
    let values = solution.assignment.values();
    let needed = table.patients.iter().map(|p| p.therapy + 1).max().unwrap_or(0).max(table.peak + 1);
    if values.len() < needed || table.patients.len() != inst.patients.len() {
        return Err(shape_error("assignment does not match the encoding"));
    }
    let patients = inst
        .patients
        .iter()
        .zip(&table.patients)
        .map(|(p, pv)| {
            let rank = values[pv.resource] as usize;
            CtsAssignment {
                patient: p.id.clone(),
                starts: pv.starts.map(|v| values[v] as u32),
                resource: inst.resources[pv.ranking[rank]].id.clone(),
            }
        })
        .collect();
    Ok(CtsSchedule {
        patients,
        objective: solution.objective.clone(),
    })
}

/// Per-schedule counts recomputed from scratch.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CtsMetrics {
    pub wrong_resource: u64,
    /// Largest number of phase-2 starts in one slot.
    pub start_peak: u64,
    /// Largest number of patients in phase 2 during one slot.
    pub occupancy_peak: u64,
}

fn check_shape(inst: &CtsInstance, schedule: &CtsSchedule) -> Result<(), InstanceError> {
    if schedule.patients.len() != inst.patients.len() {
        return Err(shape_error(format!(
            "{} patients scheduled, instance has {}",
            schedule.patients.len(),
            inst.patients.len()
        )));
    }
    for (i, (a, p)) in schedule.patients.iter().zip(&inst.patients).enumerate() {
        if a.patient != p.id {
            return Err(InstanceError::new(
                format!("schedule.patients[{i}].patient"),
                format!("expected `{}`, found `{}`", p.id, a.patient),
            ));
        }
    }
    Ok(())
}

pub fn phase2_histogram(schedule: &CtsSchedule, inst: &CtsInstance) -> Vec<u32> {
    let mut counts = vec![0u32; inst.slots as usize];
    for a in &schedule.patients {
        if let Some(c) = counts.get_mut(a.starts[1] as usize) {
            *c += 1;
        }
    }
    counts
}

pub fn cts_metrics(inst: &CtsInstance, schedule: &CtsSchedule) -> Result<CtsMetrics, InstanceError> {
    check_shape(inst, schedule)?;
    let wrong_resource = schedule
        .patients
        .iter()
        .zip(&inst.patients)
        .filter(|(a, p)| {
            inst.resource_index(&a.resource)
                .is_some_and(|r| inst.resources[r].kind != p.preferred)
        })
        .count() as u64;
    let start_peak = phase2_histogram(schedule, inst).into_iter().max().unwrap_or(0) as u64;
    let mut occupancy = vec![0u64; inst.slots as usize];
    for (a, p) in schedule.patients.iter().zip(&inst.patients) {
        for t in a.starts[1]..a.starts[1] + p.durations[1] {
            if let Some(c) = occupancy.get_mut(t as usize) {
                *c += 1;
            }
        }
    }
    Ok(CtsMetrics {
        wrong_resource,
        start_peak,
        occupancy_peak: occupancy.into_iter().max().unwrap_or(0),
    })
}

pub fn verify_cts(inst: &CtsInstance, schedule: &CtsSchedule) -> Result<Verification, InstanceError> {
    let metrics = cts_metrics(inst, schedule)?;
    let mut violations = Vec::new();
    let slots = inst.slots;
    let rows = schedule.patients.iter().zip(&inst.patients);
    for (a, p) in rows.clone() {
        for phase in 0..PHASES {
            if a.starts[phase] + p.durations[phase] > slots {
                violations.push(Violation::new(
                    "horizon",
                    format!("patient {} phase {}", p.id, phase + 1),
                ));
            }
        }
        for phase in 0..3 {
            if a.starts[phase] + p.durations[phase] > a.starts[phase + 1] {
                violations.push(Violation::new(
                    "phase-order",
                    format!("patient {} phase {} before phase {}", p.id, phase + 2, phase + 1),
                ));
            }
        }
        match inst.resource_index(&a.resource) {
            None => violations.push(Violation::new(
                "unknown-resource",
                format!("patient {} on {}", p.id, a.resource),
            )),
            Some(r) => {
                if p.scalp_cooling && !inst.resources[r].scalp_cooling {
                    violations.push(Violation::new(
                        "scalp-cooling",
                        format!("patient {} on {}", p.id, a.resource),
                    ));
                }
            }
        }
        if p.drug_ready.is_some_and(|ready| a.starts[3] < ready) {
            violations.push(Violation::new("drug-ready", format!("patient {}", p.id)));
        }
    }
    for phase in 0..3 {
        let mut load = vec![0u32; slots as usize];
        for (a, p) in rows.clone() {
            for t in a.starts[phase]..(a.starts[phase] + p.durations[phase]).min(slots) {
                load[t as usize] += 1;
            }
        }
        for (t, &l) in load.iter().enumerate() {
            if l > inst.capacities[phase] {
                violations.push(Violation::new(
                    "phase-capacity",
                    format!("phase {} at slot {t}", phase + 1),
                ));
            }
        }
    }
    let interval = |a: &CtsAssignment, p: &CtsPatient| a.starts[3]..(a.starts[3] + p.durations[3]).min(slots);
    let mut by_resource: BTreeMap<usize, Vec<u32>> = BTreeMap::new();
    for (a, p) in rows.clone() {
        if let Some(r) = inst.resource_index(&a.resource) {
            by_resource.entry(r).or_default().extend(interval(a, p));
        }
    }
    for (r, mut ts) in by_resource {
        ts.sort_unstable();
        let mut last = None;
        for t in ts {
            if last == Some(t) {
                violations.push(Violation::new(
                    "resource-busy",
                    format!("{} at slot {t}", inst.resources[r].id),
                ));
            }
            last = Some(t);
        }
    }
    for (i, (a, p)) in rows.clone().enumerate().filter(|(_, (_, p))| p.isolation) {
        let Some(r) = inst.resource_index(&a.resource) else {
            continue;
        };
        let room = inst.room_of(r);
        for (j, (b, q)) in rows.clone().enumerate() {
            if i == j {
                continue;
            }
            let shares_room = inst
                .resource_index(&b.resource)
                .is_some_and(|r2| inst.room_of(r2) == room);
            let overlap = interval(a, p).any(|t| interval(b, q).contains(&t));
            if shares_room && overlap {
                violations.push(Violation::new(
                    "isolation",
                    format!("patient {} shares room {room} with {}", p.id, q.id),
                ));
            }
        }
    }
    violations.sort();
    violations.dedup();
    Ok(Verification {
        violations,
        objective: ObjectiveVector(vec![metrics.wrong_resource, metrics.start_peak]),
    })
}
