//! Types shared by the three scheduling problems.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ConstraintModel, ObjectiveVector};

/// A semantic problem with an instance or schedule, located by field path.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("{path}: {message}")]
pub struct InstanceError {
    pub path: String,
    pub message: String,
}

impl InstanceError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        InstanceError {
            path: path.into(),
            message: message.into(),
        }
    }
}

/// One broken rule found by a domain verifier.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Violation {
    pub rule: String,
    pub subject: String,
}

impl Violation {
    pub fn new(rule: &str, subject: impl Into<String>) -> Self {
        Violation {
            rule: rule.to_string(),
            subject: subject.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.rule, self.subject)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Verification {
    pub violations: Vec<Violation>,
    pub objective: ObjectiveVector,
}

impl Verification {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// A model produced by an encoder plus what is needed to read solutions back.
#[derive(Clone, Debug)]
pub struct Encoded<T> {
    pub model: ConstraintModel,
    pub table: T,
}

/// Outcome of a greedy reference scheduler.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BaselineReport<S> {
    pub schedule: S,
    /// Fictitious resources (or capacity overflows) the greedy needed.
    pub virtual_resources: u32,
    pub feasible: bool,
}

pub(crate) fn check_unique_ids<'a>(
    path: &str,
    ids: impl IntoIterator<Item = &'a str>,
) -> Result<(), InstanceError> {
    let mut seen = HashSet::new();
    for (i, id) in ids.into_iter().enumerate() {
        if id.is_empty() {
            return Err(InstanceError::new(format!("{path}[{i}].id"), "empty id"));
        }
        if !seen.insert(id) {
            return Err(InstanceError::new(
                format!("{path}[{i}].id"),
                format!("duplicate id `{id}`"),
            ));
        }
    }
    Ok(())
}

pub(crate) fn shape_error(message: impl Into<String>) -> InstanceError {
    InstanceError::new("schedule", message)
}
