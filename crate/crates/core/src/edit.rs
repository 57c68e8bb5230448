//! What-if edits: small patches applied to an instance, validated as a whole
//! so that a rejected patch leaves the original untouched.
//!
//! Entities are addressed by id. `patient` means CTS or POAC patients,
//! `resource` means CTS beds and chairs, ORS units or POAC areas, and
//! `registration` and `shift` exist for ORS only. Capacities are named
//! `phase1`..`phase3` (CTS), by unit id (ORS beds), or by area id or
//! `doctors` (POAC).

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::cts::{CtsInstance, CtsRoom};
use crate::domain::InstanceError;
use crate::io::{Instance, ProblemKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum EditOp {
    AddPatient { patient: Value },
    RemovePatient { id: String },
    /// Shallow merge: listed fields replace the current ones.
    ModifyPatient { id: String, fields: Map<String, Value> },
    AddResource { resource: Value },
    RemoveResource { id: String },
    ModifyResource { id: String, fields: Map<String, Value> },
    AddRegistration { registration: Value },
    RemoveRegistration { id: String },
    ModifyRegistration { id: String, fields: Map<String, Value> },
    AddShift { shift: Value },
    RemoveShift { id: String },
    ModifyShift { id: String, fields: Map<String, Value> },
    SetCapacity { name: String, value: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EditError {
    #[error("op {index}: {kind} instances have no {entity} entities")]
    NotApplicable {
        index: usize,
        kind: ProblemKind,
        entity: &'static str,
    },
    #[error("op {index}: no {entity} with id `{id}`")]
    UnknownId {
        index: usize,
        entity: &'static str,
        id: String,
    },
    #[error("op {index}: unknown capacity `{name}`")]
    UnknownCapacity { index: usize, name: String },
    #[error("op {index}: malformed {entity} at `{path}`: {message}")]
    Malformed {
        index: usize,
        entity: &'static str,
        path: String,
        message: String,
    },
    #[error("edited instance is invalid: {0}")]
    Invalid(#[from] InstanceError),
}

/// Applies `ops` in order and validates the result.
pub fn apply_edits(instance: &Instance, ops: &[EditOp]) -> Result<Instance, EditError> {
    let mut current = instance.clone();
    for (index, op) in ops.iter().enumerate() {
        current = apply_one(&current, index, op)?;
    }
    current.validate()?;
    Ok(current)
}

fn collection(kind: ProblemKind, entity: &'static str) -> Option<&'static str> {
    match (kind, entity) {
        (ProblemKind::Cts, "patient") => Some("patients"),
        (ProblemKind::Cts, "resource") => Some("resources"),
        (ProblemKind::Ors, "resource") => Some("units"),
        (ProblemKind::Ors, "registration") => Some("registrations"),
        (ProblemKind::Ors, "shift") => Some("shifts"),
        (ProblemKind::Poac, "patient") => Some("patients"),
        (ProblemKind::Poac, "resource") => Some("areas"),
        _ => None,
    }
}

enum Change<'a> {
    Add(&'a Value),
    Remove(&'a str),
    Modify(&'a str, &'a Map<String, Value>),
}

fn apply_one(instance: &Instance, index: usize, op: &EditOp) -> Result<Instance, EditError> {
    use EditOp::*;
    let (entity, change) = match op {
        SetCapacity { name, value } => return set_capacity(instance, index, name, *value),
        AddPatient { patient } => ("patient", Change::Add(patient)),
        RemovePatient { id } => ("patient", Change::Remove(id)),
        ModifyPatient { id, fields } => ("patient", Change::Modify(id, fields)),
        AddResource { resource } => ("resource", Change::Add(resource)),
        RemoveResource { id } => ("resource", Change::Remove(id)),
        ModifyResource { id, fields } => ("resource", Change::Modify(id, fields)),
        AddRegistration { registration } => ("registration", Change::Add(registration)),
        RemoveRegistration { id } => ("registration", Change::Remove(id)),
        ModifyRegistration { id, fields } => ("registration", Change::Modify(id, fields)),
        AddShift { shift } => ("shift", Change::Add(shift)),
        RemoveShift { id } => ("shift", Change::Remove(id)),
        ModifyShift { id, fields } => ("shift", Change::Modify(id, fields)),
    };
    let kind = instance.kind();
    let key = collection(kind, entity).ok_or(EditError::NotApplicable { index, kind, entity })?;
    let mut body = to_value(instance);
    let items = body[key].as_array_mut().expect("entity collections are arrays");
    let position = |items: &[Value], id: &str| {
        items
            .iter()
            .position(|v| v["id"] == id)
            .ok_or_else(|| EditError::UnknownId {
                index,
                entity,
                id: id.to_string(),
            })
    };
    match change {
        Change::Add(item) => items.push(item.clone()),
        Change::Remove(id) => {
            let at = position(items, id)?;
            items.remove(at);
        }
        Change::Modify(id, fields) => {
            let at = position(items, id)?;
            let target = items[at].as_object_mut().ok_or_else(|| EditError::Malformed {
                index,
                entity,
                path: key.to_string(),
                message: "expected an object".to_string(),
            })?;
            for (k, v) in fields {
                target.insert(k.clone(), v.clone());
            }
        }
    }
    let mut edited = from_value(kind, body).map_err(|(path, message)| EditError::Malformed {
        index,
        entity,
        path,
        message,
    })?;
    if let Instance::Cts(cts) = &mut edited {
        sync_rooms(cts);
    }
    Ok(edited)
}

fn set_capacity(instance: &Instance, index: usize, name: &str, value: u32) -> Result<Instance, EditError> {
    let unknown = || EditError::UnknownCapacity {
        index,
        name: name.to_string(),
    };
    let mut edited = instance.clone();
    match &mut edited {
        Instance::Cts(i) => {
            let phase = match name {
                "phase1" => 0,
                "phase2" => 1,
                "phase3" => 2,
                _ => return Err(unknown()),
            };
            i.capacities[phase] = value;
        }
        Instance::Ors(i) => {
            let unit = i.units.iter_mut().find(|u| u.id == name).ok_or_else(unknown)?;
            unit.beds = value;
        }
        Instance::Poac(i) if name == "doctors" => i.doctors = value,
        Instance::Poac(i) => {
            let area = i.areas.iter_mut().find(|a| a.id == name).ok_or_else(unknown)?;
            area.capacity = value;
        }
    }
    Ok(edited)
}

fn to_value(instance: &Instance) -> Value {
    let value = match instance {
        Instance::Cts(i) => serde_json::to_value(i),
        Instance::Ors(i) => serde_json::to_value(i),
        Instance::Poac(i) => serde_json::to_value(i),
    };
    value.expect("instances serialize")
}

fn from_value(kind: ProblemKind, body: Value) -> Result<Instance, (String, String)> {
    fn typed<T: serde::de::DeserializeOwned>(body: Value) -> Result<T, (String, String)> {
        serde_path_to_error::deserialize(body).map_err(|e| (e.path().to_string(), e.inner().to_string()))
    }
    Ok(match kind {
        ProblemKind::Cts => Instance::Cts(typed(body)?),
        ProblemKind::Ors => Instance::Ors(typed(body)?),
        ProblemKind::Poac => Instance::Poac(typed(body)?),
    })
}

/// Makes room listings follow each resource's `room` field: existing
/// listing order is kept, newcomers are appended, and rooms left empty are
/// dropped.
fn sync_rooms(inst: &mut CtsInstance) {
    let room_of = |id: &str| inst.resources.iter().find(|r| r.id == id).map(|r| r.room.clone());
    let mut rooms: Vec<CtsRoom> = inst
        .rooms
        .iter()
        .map(|room| CtsRoom {
            id: room.id.clone(),
            resources: room
                .resources
                .iter()
                .filter(|res| room_of(res).as_deref() == Some(room.id.as_str()))
                .cloned()
                .collect(),
        })
        .collect();
    for r in &inst.resources {
        if rooms.iter().any(|room| room.resources.contains(&r.id)) {
            continue;
        }
        match rooms.iter_mut().find(|room| room.id == r.room) {
            Some(room) => room.resources.push(r.id.clone()),
            None => rooms.push(CtsRoom {
                id: r.room.clone(),
                resources: vec![r.id.clone()],
            }),
        }
    }
    rooms.retain(|room| !room.resources.is_empty());
    inst.rooms = rooms;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::{generate, parse_instance, write_instance, GenParams};
    use serde_json::json;

    fn ops(v: Value) -> Vec<EditOp> {
        serde_json::from_value(v).unwrap()
    }

    #[test]
    fn ops_round_trip_through_json() {
        let list = ops(json!([
            {"op": "set_capacity", "name": "phase2", "value": 4},
            {"op": "remove_patient", "id": "p1"},
            {"op": "modify_shift", "id": "s1", "fields": {"length": 480}},
        ]));
        let text = serde_json::to_string(&list).unwrap();
        assert_eq!(serde_json::from_str::<Vec<EditOp>>(&text).unwrap(), list);
        assert!(serde_json::from_value::<EditOp>(json!({"op": "drop_table"})).is_err());
    }

    #[test]
    fn cts_resource_moves_keep_rooms_consistent() {
        let inst = generate(ProblemKind::Cts, &GenParams::new(3, 6, 0.5)).unwrap();
        let Instance::Cts(cts) = &inst else { unreachable!() };
        let first = cts.resources[0].id.clone();
        let edited = apply_edits(
            &inst,
            &ops(json!([
                {"op": "modify_resource", "id": first, "fields": {"room": "annex"}},
                {"op": "add_resource", "resource": {"id": "x1", "type": "bed", "room": "annex"}},
            ])),
        )
        .unwrap();
        let Instance::Cts(after) = &edited else { unreachable!() };
        let annex = after.rooms.iter().find(|r| r.id == "annex").unwrap();
        assert_eq!(annex.resources, vec![first.clone(), "x1".to_string()]);
        let back = apply_edits(
            &edited,
            &ops(json!([
                {"op": "remove_resource", "id": "x1"},
                {"op": "remove_resource", "id": first},
            ])),
        )
        .unwrap();
        let Instance::Cts(back) = &back else { unreachable!() };
        assert!(back.rooms.iter().all(|r| r.id != "annex"));
    }

    #[test]
    fn capacities_by_kind() {
        let ors = generate(ProblemKind::Ors, &GenParams::new(1, 4, 1.0)).unwrap();
        let Instance::Ors(o) = &ors else { unreachable!() };
        let unit = o.units[0].id.clone();
        let Instance::Ors(edited) = apply_edits(&ors, &ops(json!([{"op": "set_capacity", "name": unit, "value": 9}]))).unwrap()
        else {
            unreachable!()
        };
        assert_eq!(edited.units[0].beds, 9);
        let poac = generate(ProblemKind::Poac, &GenParams::new(7, 20, 0.8)).unwrap();
        let Instance::Poac(edited) = apply_edits(&poac, &ops(json!([{"op": "set_capacity", "name": "doctors", "value": 7}]))).unwrap()
        else {
            unreachable!()
        };
        assert_eq!(edited.doctors, 7);
        let err = apply_edits(&poac, &ops(json!([{"op": "set_capacity", "name": "phase1", "value": 1}])));
        assert!(matches!(err, Err(EditError::UnknownCapacity { index: 0, .. })));
    }

    #[test]
    fn rejected_patches_name_the_problem() {
        let inst = generate(ProblemKind::Ors, &GenParams::new(2, 4, 1.0)).unwrap();
        let missing = apply_edits(&inst, &ops(json!([{"op": "remove_shift", "id": "nope"}])));
        assert!(matches!(missing, Err(EditError::UnknownId { entity: "shift", .. })));
        let wrong_kind = apply_edits(&inst, &ops(json!([{"op": "remove_patient", "id": "p1"}])));
        assert!(matches!(wrong_kind, Err(EditError::NotApplicable { .. })));
        let malformed = apply_edits(
            &inst,
            &ops(json!([{"op": "add_registration", "registration": {"id": "r99", "specialty": "x"}}])),
        );
        assert!(matches!(malformed, Err(EditError::Malformed { .. })), "{malformed:?}");
        let invalid = apply_edits(
            &inst,
            &ops(json!([{"op": "modify_registration", "id": "r1", "fields": {"priority": 7}}])),
        );
        assert!(matches!(invalid, Err(EditError::Invalid(_))), "{invalid:?}");
    }

    #[test]
    fn replaying_an_edit_log_reproduces_the_instance() {
        let inst = generate(ProblemKind::Cts, &GenParams::new(11, 8, 0.6)).unwrap();
        let Instance::Cts(cts) = &inst else { unreachable!() };
        let log = ops(json!([
            {"op": "remove_patient", "id": cts.patients[0].id},
            {"op": "add_patient", "patient": {"id": "late", "durations": [1, 1, 1, 2], "preferred": "chair"}},
            {"op": "modify_patient", "id": "late", "fields": {"drug_ready": 5}},
            {"op": "set_capacity", "name": "phase1", "value": 3},
        ]));
        let once = apply_edits(&inst, &log).unwrap();
        let stepwise = log
            .iter()
            .fold(inst.clone(), |acc, op| apply_edits(&acc, std::slice::from_ref(op)).unwrap());
        assert_eq!(once, stepwise);
        let text = write_instance(&once);
        assert_eq!(parse_instance(&text).unwrap(), once);
        assert_eq!(write_instance(&apply_edits(&inst, &log).unwrap()), text);
    }
}
