//! Pre-operative assessment clinic: each patient gets one day, on or before
//! the due day, for all of their exams; each exam area used that day must be
//! activated, and every activation takes one doctor from the day's pool.
//!
//! Objective: level 1 counts activations, level 2 sums assigned day indices.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::domain::{check_unique_ids, shape_error, Encoded, InstanceError, Verification, Violation};
use crate::engine::Solution;
use crate::model::{Constraint, ConstraintModel, Flags, Label, Lit, ModelError, ObjectiveVector, VarId};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoacPatient {
    pub id: String,
    pub due: u32,
    pub exams: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Exam {
    pub id: String,
    pub area: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Area {
    pub id: String,
    /// Patients the area can see per day.
    pub capacity: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoacInstance {
    pub days: u32,
    /// Doctors available each day; each active area needs one.
    pub doctors: u32,
    pub patients: Vec<PoacPatient>,
    pub exams: Vec<Exam>,
    pub areas: Vec<Area>,
}

impl PoacInstance {
    pub fn validate(&self) -> Result<(), InstanceError> {
        if self.days == 0 {
            return Err(InstanceError::new("days", "must be at least 1"));
        }
        check_unique_ids("patients", self.patients.iter().map(|p| p.id.as_str()))?;
        check_unique_ids("exams", self.exams.iter().map(|e| e.id.as_str()))?;
        check_unique_ids("areas", self.areas.iter().map(|a| a.id.as_str()))?;
        for (i, a) in self.areas.iter().enumerate() {
            if a.capacity == 0 {
                return Err(InstanceError::new(format!("areas[{i}].capacity"), "must be at least 1"));
            }
        }
        for (i, e) in self.exams.iter().enumerate() {
            if !self.areas.iter().any(|a| a.id == e.area) {
                return Err(InstanceError::new(
                    format!("exams[{i}].area"),
                    format!("exam `{}` references unknown area `{}`", e.id, e.area),
                ));
            }
        }
        for (i, p) in self.patients.iter().enumerate() {
            if p.due >= self.days {
                return Err(InstanceError::new(
                    format!("patients[{i}].due"),
                    format!("due day of patient `{}` is outside the horizon", p.id),
                ));
            }
            for exam in &p.exams {
                if !self.exams.iter().any(|e| &e.id == exam) {
                    return Err(InstanceError::new(
                        format!("patients[{i}].exams"),
                        format!("patient `{}` needs unknown exam `{exam}`", p.id),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Area indices a patient visits, ascending and deduplicated.
    pub fn areas_of(&self, patient: usize) -> Vec<usize> {
        let areas: BTreeSet<usize> = self.patients[patient]
            .exams
            .iter()
            .filter_map(|x| self.exams.iter().find(|e| &e.id == x))
            .filter_map(|e| self.areas.iter().position(|a| a.id == e.area))
            .collect();
        areas.into_iter().collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoacAssignment {
    pub patient: String,
    pub day: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Activation {
    pub area: String,
    pub day: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoacSchedule {
    pub patients: Vec<PoacAssignment>,
    /// Active (area, day) pairs, area-major in instance order.
    pub active: Vec<Activation>,
    pub objective: ObjectiveVector,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PoacTable {
    pub day: Vec<VarId>,
    /// `active[area][day]`.
    pub active: Vec<Vec<VarId>>,
}

fn add(model: &mut ConstraintModel, label: Label, c: Constraint, note: String) -> Result<(), ModelError> {
    model.note(&label, note);
    model.add_constraint(label, c, Flags::FACT)
}

pub fn encode_poac(inst: &PoacInstance) -> Result<Encoded<PoacTable>, InstanceError> {
    inst.validate()?;
    encode_valid(inst).map_err(|e| InstanceError::new("model", e.to_string()))
}

fn encode_valid(inst: &PoacInstance) -> Result<Encoded<PoacTable>, ModelError> {
    let mut model = ConstraintModel::with_levels(2);
    let days = inst.days as i64;
    let mut day = Vec::with_capacity(inst.patients.len());
    for p in &inst.patients {
        day.push(model.add_var(Label::new("day", [p.id.as_str()]), (0..days).collect())?);
    }
    let mut active = Vec::with_capacity(inst.areas.len());
    for a in &inst.areas {
        let mut row = Vec::with_capacity(inst.days as usize);
        for d in 0..inst.days {
            row.push(model.add_var(Label::new("active", [a.id.clone(), d.to_string()]), vec![0, 1])?);
        }
        active.push(row);
    }
    let areas_of: Vec<Vec<usize>> = (0..inst.patients.len()).map(|p| inst.areas_of(p)).collect();
    for (pi, p) in inst.patients.iter().enumerate() {
        if p.due + 1 < inst.days {
            add(
                &mut model,
                Label::new("due", [p.id.as_str()]),
                Constraint::Forbid(vec![Lit::among(day[pi], (p.due as i64 + 1)..days)]),
                format!("patient {} is seen by day {}", p.id, p.due),
            )?;
        }
        for &a in &areas_of[pi] {
            for d in 0..inst.days {
                add(
                    &mut model,
                    Label::new("needs-area", [p.id.clone(), inst.areas[a].id.clone(), d.to_string()]),
                    Constraint::Implication {
                        premises: vec![Lit::eq(day[pi], d as i64)],
                        conclusion: Lit::eq(active[a][d as usize], 1),
                    },
                    format!("area {} is active on day {d} if patient {} comes then", inst.areas[a].id, p.id),
                )?;
            }
        }
    }
    for (a, area) in inst.areas.iter().enumerate() {
        let visitors: Vec<usize> = (0..inst.patients.len()).filter(|p| areas_of[*p].contains(&a)).collect();
        if visitors.len() <= area.capacity as usize {
            continue;
        }
        for d in 0..inst.days {
            add(
                &mut model,
                Label::new("area-capacity", [area.id.clone(), d.to_string()]),
                Constraint::AtMostKCount {
                    lits: visitors.iter().map(|&p| Lit::eq(day[p], d as i64)).collect(),
                    k: area.capacity,
                },
                format!("area {} sees at most {} patients on day {d}", area.id, area.capacity),
            )?;
        }
    }
    if inst.areas.len() > inst.doctors as usize {
        for d in 0..inst.days {
            add(
                &mut model,
                Label::new("doctors", [d]),
                Constraint::AtMostKCount {
                    lits: active.iter().map(|row| Lit::eq(row[d as usize], 1)).collect(),
                    k: inst.doctors,
                },
                format!("{} doctors staff at most {} areas on day {d}", inst.doctors, inst.doctors),
            )?;
        }
    }
    for (a, area) in inst.areas.iter().enumerate() {
        for d in 0..inst.days {
            let label = Label::new("activation", [area.id.clone(), d.to_string()]);
            model.note(&label, format!("area {} stays closed on day {d}", area.id));
            model.add_soft(label, 1, 1, Constraint::Forbid(vec![Lit::eq(active[a][d as usize], 1)]))?;
        }
    }
    for (pi, p) in inst.patients.iter().enumerate() {
        for d in 1..inst.days {
            let label = Label::new("earliness", [p.id.clone(), d.to_string()]);
            model.note(&label, format!("patient {} is not pushed to day {d}", p.id));
            model.add_soft(label, 2, d as u64, Constraint::Forbid(vec![Lit::eq(day[pi], d as i64)]))?;
        }
    }
    Ok(Encoded {
        model,
        table: PoacTable { day, active },
    })
}

pub fn decode_poac(
    inst: &PoacInstance,
    table: &PoacTable,
    solution: &Solution,
) -> Result<PoacSchedule, InstanceError> {
    let values = solution.assignment.values();
    let in_range = table.day.iter().chain(table.active.iter().flatten()).all(|&v| v < values.len());
    if !in_range || table.day.len() != inst.patients.len() || table.active.len() != inst.areas.len() {
        return Err(shape_error("assignment does not match the encoding"));
    }
    let patients = inst
        .patients
        .iter()
        .zip(&table.day)
        .map(|(p, &v)| PoacAssignment {
            patient: p.id.clone(),
            day: values[v] as u32,
        })
        .collect();
    let mut active = Vec::new();
    for (area, row) in inst.areas.iter().zip(&table.active) {
        for (d, &v) in row.iter().enumerate() {
            if values[v] == 1 {
                active.push(Activation {
                    area: area.id.clone(),
                    day: d as u32,
                });
            }
        }
    }
    Ok(PoacSchedule {
        patients,
        active,
        objective: solution.objective.clone(),
    })
}

pub fn verify_poac(inst: &PoacInstance, schedule: &PoacSchedule) -> Result<Verification, InstanceError> {
    if schedule.patients.len() != inst.patients.len() {
        return Err(shape_error(format!(
            "{} patients scheduled, instance has {}",
            schedule.patients.len(),
            inst.patients.len()
        )));
    }
    let mut violations = Vec::new();
    let days = inst.days as usize;
    let mut is_active = vec![vec![false; days]; inst.areas.len()];
    for act in &schedule.active {
        match inst.areas.iter().position(|a| a.id == act.area) {
            Some(a) if (act.day as usize) < days => is_active[a][act.day as usize] = true,
            _ => violations.push(Violation::new("unknown-activation", format!("{} day {}", act.area, act.day))),
        }
    }
    let mut load = vec![vec![0u32; days]; inst.areas.len()];
    let mut earliness = 0u64;
    for (i, (a, p)) in schedule.patients.iter().zip(&inst.patients).enumerate() {
        if a.patient != p.id {
            return Err(InstanceError::new(
                format!("schedule.patients[{i}].patient"),
                format!("expected `{}`, found `{}`", p.id, a.patient),
            ));
        }
        if a.day as usize >= days {
            violations.push(Violation::new("horizon", p.id.clone()));
            continue;
        }
        earliness += a.day as u64;
        if a.day > p.due {
            violations.push(Violation::new("due", p.id.clone()));
        }
        for area in inst.areas_of(i) {
            load[area][a.day as usize] += 1;
            if !is_active[area][a.day as usize] {
                violations.push(Violation::new(
                    "needs-area",
                    format!("{} on day {} needs {}", p.id, a.day, inst.areas[area].id),
                ));
            }
        }
    }
    for (a, area) in inst.areas.iter().enumerate() {
        for d in 0..days {
            if load[a][d] > area.capacity {
                violations.push(Violation::new("area-capacity", format!("{} day {d}", area.id)));
            }
        }
    }
    let mut activations = 0u64;
    for d in 0..days {
        let open = is_active.iter().filter(|row| row[d]).count() as u64;
        activations += open;
        if open > inst.doctors as u64 {
            violations.push(Violation::new("doctors", format!("day {d}")));
        }
    }
    Ok(Verification {
        violations,
        objective: ObjectiveVector(vec![activations, earliness]),
    })
}
