//! Operating room scheduling: registrations go to specialty-matched OR
//! shifts within shift length, priority-1 registrations must all be placed,
//! and post-surgery special-care-unit beds are limited per day.
//!
//! Objective: level 1 counts unassigned priority-2 registrations, level 2
//! unassigned priority-3 ones.

use serde::{Deserialize, Serialize};

use crate::domain::{check_unique_ids, shape_error, Encoded, InstanceError, Verification, Violation};
use crate::engine::Solution;
use crate::model::{Constraint, ConstraintModel, Flags, Label, Lit, ModelError, ObjectiveVector, VarId};

pub const UNASSIGNED: &str = "unassigned";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScuNeed {
    pub unit: String,
    /// Days in the unit, the surgery day included.
    pub days: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Registration {
    pub id: String,
    pub specialty: String,
    /// Predicted duration in minutes.
    pub duration: u32,
    /// 1 is the highest priority.
    pub priority: u8,
    #[serde(default)]
    pub scu: Option<ScuNeed>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Shift {
    pub id: String,
    pub room: String,
    pub day: u32,
    pub specialty: String,
    /// Length in minutes.
    pub length: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Unit {
    pub id: String,
    pub beds: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrsInstance {
    pub horizon: u32,
    pub registrations: Vec<Registration>,
    pub shifts: Vec<Shift>,
    pub units: Vec<Unit>,
}

impl OrsInstance {
    pub fn validate(&self) -> Result<(), InstanceError> {
        check_unique_ids("registrations", self.registrations.iter().map(|r| r.id.as_str()))?;
        check_unique_ids("shifts", self.shifts.iter().map(|s| s.id.as_str()))?;
        check_unique_ids("units", self.units.iter().map(|u| u.id.as_str()))?;
        for (i, s) in self.shifts.iter().enumerate() {
            if s.id == UNASSIGNED {
                return Err(InstanceError::new(format!("shifts[{i}].id"), "reserved id"));
            }
            if s.day >= self.horizon {
                return Err(InstanceError::new(
                    format!("shifts[{i}].day"),
                    format!("shift `{}` is outside the horizon", s.id),
                ));
            }
        }
        for (i, r) in self.registrations.iter().enumerate() {
            if r.duration == 0 {
                return Err(InstanceError::new(
                    format!("registrations[{i}].duration"),
                    format!("registration `{}` has zero duration", r.id),
                ));
            }
            if !(1..=3).contains(&r.priority) {
                return Err(InstanceError::new(
                    format!("registrations[{i}].priority"),
                    format!("registration `{}` has priority {}; expected 1, 2 or 3", r.id, r.priority),
                ));
            }
            if let Some(scu) = &r.scu {
                if scu.days == 0 {
                    return Err(InstanceError::new(
                        format!("registrations[{i}].scu.days"),
                        "stay must be at least one day",
                    ));
                }
                if !self.units.iter().any(|u| u.id == scu.unit) {
                    return Err(InstanceError::new(
                        format!("registrations[{i}].scu.unit"),
                        format!("registration `{}` needs unknown unit `{}`", r.id, scu.unit),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Copy with every special-care-unit requirement dropped.
    pub fn without_scu(&self) -> OrsInstance {
        let mut copy = self.clone();
        for r in &mut copy.registrations {
            r.scu = None;
        }
        copy
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrsAssignment {
    pub registration: String,
    /// Shift id, or `None` when unassigned.
    pub shift: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrsSchedule {
    pub registrations: Vec<OrsAssignment>,
    pub objective: ObjectiveVector,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OrsTable {
    /// `assign(r)` per registration; value `shifts.len()` means unassigned.
    pub assign: Vec<VarId>,
    pub unassigned_value: i64,
}

fn add(
    model: &mut ConstraintModel,
    label: Label,
    c: Constraint,
    note: String,
) -> Result<(), ModelError> {
    model.note(&label, note);
    model.add_constraint(label, c, Flags::FACT)
}

pub fn encode_ors(inst: &OrsInstance) -> Result<Encoded<OrsTable>, InstanceError> {
    inst.validate()?;
    encode_valid(inst).map_err(|e| InstanceError::new("model", e.to_string()))
}

fn encode_valid(inst: &OrsInstance) -> Result<Encoded<OrsTable>, ModelError> {
    let m = inst.shifts.len() as i64;
    let mut model = ConstraintModel::with_levels(2);
    let mut names: Vec<String> = inst.shifts.iter().map(|s| s.id.clone()).collect();
    names.push(UNASSIGNED.to_string());
    let mut assign = Vec::with_capacity(inst.registrations.len());
    for r in &inst.registrations {
        assign.push(model.add_var_full(
            Label::new("assign", [r.id.as_str()]),
            (0..=m).collect(),
            Some(names.clone()),
            false,
        )?);
    }
    for (ri, r) in inst.registrations.iter().enumerate() {
        let mut allowed: Vec<i64> = inst
            .shifts
            .iter()
            .enumerate()
            .filter(|(_, s)| s.specialty == r.specialty)
            .map(|(si, _)| si as i64)
            .collect();
        if allowed.len() < inst.shifts.len() {
            allowed.push(m);
            add(
                &mut model,
                Label::new("specialty", [r.id.as_str()]),
                Constraint::Implication {
                    premises: vec![],
                    conclusion: Lit::among(assign[ri], allowed),
                },
                format!("registration {} goes to a {} shift", r.id, r.specialty),
            )?;
        }
        if r.priority == 1 {
            add(
                &mut model,
                Label::new("assign-all-p1", [r.id.as_str()]),
                Constraint::Forbid(vec![Lit::eq(assign[ri], m)]),
                format!("priority-1 registration {} is operated", r.id),
            )?;
        }
    }
    for (si, s) in inst.shifts.iter().enumerate() {
        let terms: Vec<(Lit, u64)> = inst
            .registrations
            .iter()
            .enumerate()
            .map(|(ri, r)| (Lit::eq(assign[ri], si as i64), r.duration as u64))
            .collect();
        let total: u64 = terms.iter().map(|(_, d)| d).sum();
        if total > s.length as u64 {
            add(
                &mut model,
                Label::new("capacity", [s.id.as_str()]),
                Constraint::LinearLeq {
                    terms,
                    bound: s.length as i64,
                },
                format!("surgeries in shift {} fit in {} minutes", s.id, s.length),
            )?;
        }
    }
    for unit in &inst.units {
        for day in 0..inst.horizon {
            let lits: Vec<Lit> = inst
                .registrations
                .iter()
                .enumerate()
                .filter_map(|(ri, r)| {
                    let scu = r.scu.as_ref().filter(|n| n.unit == unit.id)?;
                    let shifts: Vec<i64> = inst
                        .shifts
                        .iter()
                        .enumerate()
                        .filter(|(_, s)| s.day <= day && day < s.day + scu.days)
                        .map(|(si, _)| si as i64)
                        .collect();
                    (!shifts.is_empty()).then(|| Lit::among(assign[ri], shifts))
                })
                .collect();
            if lits.len() > unit.beds as usize {
                add(
                    &mut model,
                    Label::new("scu", [unit.id.clone(), day.to_string()]),
                    Constraint::AtMostKCount { lits, k: unit.beds },
                    format!("unit {} has {} beds on day {day}", unit.id, unit.beds),
                )?;
            }
        }
    }
    for (ri, r) in inst.registrations.iter().enumerate() {
        if r.priority >= 2 {
            let label = Label::new("unassigned", [r.id.as_str()]);
            model.note(&label, format!("priority-{} registration {} is operated", r.priority, r.id));
            model.add_soft(
                label,
                r.priority as u32 - 1,
                1,
                Constraint::Forbid(vec![Lit::eq(assign[ri], m)]),
            )?;
        }
    }
    Ok(Encoded {
        model,
        table: OrsTable {
            assign,
            unassigned_value: m,
        },
    })
}

pub fn decode_ors(
    inst: &OrsInstance,
    table: &OrsTable,
    solution: &Solution,
) -> Result<OrsSchedule, InstanceError> {
    let values = solution.assignment.values();
    if table.assign.len() != inst.registrations.len()
        || table.assign.iter().any(|&v| v >= values.len())
    {
        return Err(shape_error("assignment does not match the encoding"));
    }
    let registrations = inst
        .registrations
        .iter()
        .zip(&table.assign)
        .map(|(r, &var)| {
            let v = values[var];
            OrsAssignment {
                registration: r.id.clone(),
                shift: (v != table.unassigned_value).then(|| inst.shifts[v as usize].id.clone()),
            }
        })
        .collect();
    Ok(OrsSchedule {
        registrations,
        objective: solution.objective.clone(),
    })
}

pub fn verify_ors(inst: &OrsInstance, schedule: &OrsSchedule) -> Result<Verification, InstanceError> {
    if schedule.registrations.len() != inst.registrations.len() {
        return Err(shape_error(format!(
            "{} registrations scheduled, instance has {}",
            schedule.registrations.len(),
            inst.registrations.len()
        )));
    }
    let mut violations = Vec::new();
    let mut used = vec![0u64; inst.shifts.len()];
    let mut beds: Vec<Vec<u32>> = vec![vec![0; inst.horizon as usize]; inst.units.len()];
    let mut costs = [0u64; 2];
    for (i, (a, r)) in schedule.registrations.iter().zip(&inst.registrations).enumerate() {
        if a.registration != r.id {
            return Err(InstanceError::new(
                format!("schedule.registrations[{i}].registration"),
                format!("expected `{}`, found `{}`", r.id, a.registration),
            ));
        }
        let Some(shift_id) = &a.shift else {
            match r.priority {
                1 => violations.push(Violation::new("assign-all-p1", r.id.clone())),
                p => costs[p as usize - 2] += 1,
            }
            continue;
        };
        let Some(si) = inst.shifts.iter().position(|s| &s.id == shift_id) else {
            violations.push(Violation::new("unknown-shift", format!("{} in {shift_id}", r.id)));
            continue;
        };
        let shift = &inst.shifts[si];
        used[si] += r.duration as u64;
        if shift.specialty != r.specialty {
            violations.push(Violation::new("specialty", format!("{} in {}", r.id, shift.id)));
        }
        if let Some(scu) = &r.scu {
            if let Some(u) = inst.units.iter().position(|u| u.id == scu.unit) {
                for day in shift.day..(shift.day + scu.days).min(inst.horizon) {
                    beds[u][day as usize] += 1;
                }
            }
        }
    }
    for (si, s) in inst.shifts.iter().enumerate() {
        if used[si] > s.length as u64 {
            violations.push(Violation::new("capacity", s.id.clone()));
        }
    }
    for (u, unit) in inst.units.iter().enumerate() {
        for (day, &n) in beds[u].iter().enumerate() {
            if n > unit.beds {
                violations.push(Violation::new("scu", format!("{} day {day}", unit.id)));
            }
        }
    }
    Ok(Verification {
        violations,
        objective: ObjectiveVector(costs.to_vec()),
    })
}
