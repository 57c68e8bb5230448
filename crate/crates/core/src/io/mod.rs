//! Textual documents (instances, solutions, explanations), seeded instance
//! generators and CSV output.
//!
//! Every document is JSON with the envelope
//! `{"format": ..., "version": 1, "kind": "cts"|"ors"|"poac", "body": ...}`.
//! Unknown fields are rejected; writers emit canonical pretty-printed JSON
//! with a trailing newline, so `write(parse(doc)) == doc` for canonical docs.

mod explanation;
mod generate;

use std::fmt;

use serde::de::{DeserializeOwned, IgnoredAny};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use explanation::{
    contrast_doc, justification_doc, mus_doc, session_doc, write_histogram_csv, ContrastDoc,
    ExplanationBody, ExplanationDoc, JustificationDoc, JustificationNodeDoc, LabeledEntry,
    SessionDoc, SessionStepDoc,
};
pub use generate::{generate, generate_cts, generate_oracle_sized, generate_ors, generate_poac, GenError, GenParams};

use crate::cts::{CtsInstance, CtsSchedule};
use crate::domain::InstanceError;
use crate::engine::SolveStatus;
use crate::model::ObjectiveVector;
use crate::ors::{OrsInstance, OrsSchedule};
use crate::poac::{PoacInstance, PoacSchedule};

pub const FORMAT_INSTANCE: &str = "medsched/instance";
pub const FORMAT_SOLUTION: &str = "medsched/solution";
pub const FORMAT_EXPLANATION: &str = "medsched/explanation";
pub const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Cts,
    Ors,
    Poac,
}

impl ProblemKind {
    pub const ALL: [ProblemKind; 3] = [ProblemKind::Cts, ProblemKind::Ors, ProblemKind::Poac];

    pub fn as_str(self) -> &'static str {
        match self {
            ProblemKind::Cts => "cts",
            ProblemKind::Ors => "ors",
            ProblemKind::Poac => "poac",
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ProblemKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cts" => Ok(ProblemKind::Cts),
            "ors" => Ok(ProblemKind::Ors),
            "poac" => Ok(ProblemKind::Poac),
            other => Err(format!("unknown problem kind `{other}`; expected cts, ors or poac")),
        }
    }
}

#[derive(Debug, Error)]
pub enum DocError {
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("line {line}, column {column}, at `{path}`: {message}")]
    Schema {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("expected a `{expected}` document, found `{found}`")]
    Format { expected: String, found: String },
    #[error("unsupported version {0}; this build reads version {VERSION}")]
    Version(u32),
    #[error("expected a {expected} document, found {found}")]
    KindMismatch { expected: ProblemKind, found: ProblemKind },
    #[error("invalid instance: {0}")]
    Semantic(#[from] InstanceError),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Instance {
    Cts(CtsInstance),
    Ors(OrsInstance),
    Poac(PoacInstance),
}

impl Instance {
    pub fn kind(&self) -> ProblemKind {
        match self {
            Instance::Cts(_) => ProblemKind::Cts,
            Instance::Ors(_) => ProblemKind::Ors,
            Instance::Poac(_) => ProblemKind::Poac,
        }
    }

    pub fn validate(&self) -> Result<(), InstanceError> {
        match self {
            Instance::Cts(i) => i.validate(),
            Instance::Ors(i) => i.validate(),
            Instance::Poac(i) => i.validate(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Schedule {
    Cts(CtsSchedule),
    Ors(OrsSchedule),
    Poac(PoacSchedule),
}

impl Schedule {
    pub fn kind(&self) -> ProblemKind {
        match self {
            Schedule::Cts(_) => ProblemKind::Cts,
            Schedule::Ors(_) => ProblemKind::Ors,
            Schedule::Poac(_) => ProblemKind::Poac,
        }
    }

    pub fn objective(&self) -> &ObjectiveVector {
        match self {
            Schedule::Cts(s) => &s.objective,
            Schedule::Ors(s) => &s.objective,
            Schedule::Poac(s) => &s.objective,
        }
    }
}

/// Solution document body; the wall time is deliberately left out so that
/// repeated runs produce identical bytes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SolutionDoc {
    pub status: SolveStatus,
    pub schedule: Schedule,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Envelope<T> {
    format: String,
    version: u32,
    kind: ProblemKind,
    body: T,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SolutionBody<S> {
    status: SolveStatus,
    schedule: S,
}

fn syntax(e: serde_json::Error) -> DocError {
    DocError::Syntax {
        line: e.line(),
        column: e.column(),
        message: strip_position(&e),
    }
}

fn strip_position(e: &serde_json::Error) -> String {
    let text = e.to_string();
    match text.rfind(" at line ") {
        Some(i) => text[..i].to_string(),
        None => text,
    }
}

fn typed<T: DeserializeOwned>(text: &str) -> Result<T, DocError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let value: T = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if inner.is_syntax() || inner.is_eof() {
            syntax(inner)
        } else {
            DocError::Schema {
                path,
                line: inner.line(),
                column: inner.column(),
                message: strip_position(&inner),
            }
        }
    })?;
    de.end().map_err(syntax)?;
    Ok(value)
}

/// Reads the envelope and checks format and version.
fn header(text: &str, expected: &str) -> Result<ProblemKind, DocError> {
    let env: Envelope<IgnoredAny> = typed(text)?;
    if env.format != expected {
        return Err(DocError::Format {
            expected: expected.to_string(),
            found: env.format,
        });
    }
    if env.version != VERSION {
        return Err(DocError::Version(env.version));
    }
    Ok(env.kind)
}

fn write<T: Serialize>(format: &str, kind: ProblemKind, body: &T) -> String {
    let env = Envelope {
        format: format.to_string(),
        version: VERSION,
        kind,
        body,
    };
    let mut text = serde_json::to_string_pretty(&env).expect("documents serialize");
    text.push('\n');
    text
}

pub fn parse_instance(text: &str) -> Result<Instance, DocError> {
    let instance = match header(text, FORMAT_INSTANCE)? {
        ProblemKind::Cts => Instance::Cts(typed::<Envelope<CtsInstance>>(text)?.body),
        ProblemKind::Ors => Instance::Ors(typed::<Envelope<OrsInstance>>(text)?.body),
        ProblemKind::Poac => Instance::Poac(typed::<Envelope<PoacInstance>>(text)?.body),
    };
    instance.validate()?;
    Ok(instance)
}

pub fn write_instance(instance: &Instance) -> String {
    match instance {
        Instance::Cts(i) => write(FORMAT_INSTANCE, ProblemKind::Cts, i),
        Instance::Ors(i) => write(FORMAT_INSTANCE, ProblemKind::Ors, i),
        Instance::Poac(i) => write(FORMAT_INSTANCE, ProblemKind::Poac, i),
    }
}

pub fn parse_solution(text: &str) -> Result<SolutionDoc, DocError> {
    fn body<S: DeserializeOwned>(text: &str) -> Result<(SolveStatus, S), DocError> {
        let b = typed::<Envelope<SolutionBody<S>>>(text)?.body;
        Ok((b.status, b.schedule))
    }
    let (status, schedule) = match header(text, FORMAT_SOLUTION)? {
        ProblemKind::Cts => {
            let (st, s) = body(text)?;
            (st, Schedule::Cts(s))
        }
        ProblemKind::Ors => {
            let (st, s) = body(text)?;
            (st, Schedule::Ors(s))
        }
        ProblemKind::Poac => {
            let (st, s) = body(text)?;
            (st, Schedule::Poac(s))
        }
    };
    Ok(SolutionDoc { status, schedule })
}

pub fn write_solution(doc: &SolutionDoc) -> String {
    fn out<S: Serialize>(kind: ProblemKind, status: SolveStatus, schedule: &S) -> String {
        write(FORMAT_SOLUTION, kind, &SolutionBody { status, schedule })
    }
    match &doc.schedule {
        Schedule::Cts(s) => out(ProblemKind::Cts, doc.status, s),
        Schedule::Ors(s) => out(ProblemKind::Ors, doc.status, s),
        Schedule::Poac(s) => out(ProblemKind::Poac, doc.status, s),
    }
}

pub fn parse_explanation(text: &str) -> Result<ExplanationDoc, DocError> {
    let kind = header(text, FORMAT_EXPLANATION)?;
    let body = typed::<Envelope<ExplanationBody>>(text)?.body;
    Ok(ExplanationDoc { kind, body })
}

pub fn write_explanation(doc: &ExplanationDoc) -> String {
    write(FORMAT_EXPLANATION, doc.kind, &doc.body)
}
