use serde::{Deserialize, Serialize};

use super::ProblemKind;
use crate::cts::CtsInstance;
use crate::explain::{
    AtomStatus, ContrastResult, ContrastVerdict, JustNode, JustificationGraph, Mus, Reanalysis,
    SessionState,
};
use crate::model::{ConstraintModel, Label, ObjectiveVector};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExplanationDoc {
    pub kind: ProblemKind,
    pub body: ExplanationBody,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabeledEntry {
    pub label: Label,
    pub description: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExplanationBody {
    Mus { entries: Vec<LabeledEntry> },
    Justification(JustificationDoc),
    Contrast(ContrastDoc),
    Session(SessionDoc),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JustificationDoc {
    pub roots: Vec<usize>,
    pub nodes: Vec<JustificationNodeDoc>,
    /// `[from, to]`: `from` is supported by `to`.
    pub edges: Vec<[usize; 2]>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case", deny_unknown_fields)]
pub enum JustificationNodeDoc {
    Atom {
        id: usize,
        atom: String,
        status: String,
    },
    Fact {
        id: usize,
        label: Label,
        description: String,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContrastDoc {
    pub a: String,
    pub b: String,
    pub verdict: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mus: Option<Vec<LabeledEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub original: Option<ObjectiveVector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alternative: Option<ObjectiveVector>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionDoc {
    pub steps: Vec<SessionStepDoc>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionStepDoc {
    pub added: Vec<LabeledEntry>,
    pub consistent: bool,
    pub mus: Vec<LabeledEntry>,
}

fn describe(model: &ConstraintModel, label: &Label) -> String {
    if model.contains_label(label) {
        return model.describe(label);
    }
    match (label.family.as_str(), label.args.as_slice()) {
        ("objective-cap", [level]) => {
            format!("objective level {level} stays at its optimal value")
        }
        ("domain", [var]) => format!("`{var}` has no other value in its domain"),
        _ => label.to_string(),
    }
}

fn entries(model: &ConstraintModel, labels: &[Label]) -> Vec<LabeledEntry> {
    labels
        .iter()
        .map(|l| LabeledEntry {
            label: l.clone(),
            description: describe(model, l),
        })
        .collect()
}

pub fn mus_doc(kind: ProblemKind, model: &ConstraintModel, mus: &Mus) -> ExplanationDoc {
    ExplanationDoc {
        kind,
        body: ExplanationBody::Mus {
            entries: entries(model, &mus.labels),
        },
    }
}

fn status_name(status: AtomStatus) -> &'static str {
    match status {
        AtomStatus::Justified => "justified",
        AtomStatus::Unforced => "unforced",
        AtomStatus::Truncated => "truncated",
    }
}

pub fn justification_doc(
    kind: ProblemKind,
    model: &ConstraintModel,
    graph: &JustificationGraph,
) -> ExplanationDoc {
    let nodes = graph
        .nodes
        .iter()
        .enumerate()
        .map(|(id, n)| match n {
            JustNode::Atom { atom, status, .. } => JustificationNodeDoc::Atom {
                id,
                atom: atom.render(model),
                status: status_name(*status).to_string(),
            },
            JustNode::Fact { label } => JustificationNodeDoc::Fact {
                id,
                label: label.clone(),
                description: describe(model, label),
            },
        })
        .collect();
    ExplanationDoc {
        kind,
        body: ExplanationBody::Justification(JustificationDoc {
            roots: graph.roots.clone(),
            nodes,
            edges: graph.edges().map(|(a, b)| [a, b]).collect(),
        }),
    }
}

pub fn contrast_doc(
    kind: ProblemKind,
    model: &ConstraintModel,
    result: &ContrastResult,
) -> ExplanationDoc {
    let mut doc = ContrastDoc {
        a: result.a.render(model),
        b: result.b.render(model),
        verdict: String::new(),
        mus: None,
        original: None,
        alternative: None,
    };
    match &result.verdict {
        ContrastVerdict::AlternativeInfeasible(mus) => {
            doc.verdict = "alternative_infeasible".into();
            doc.mus = Some(entries(model, &mus.labels));
        }
        ContrastVerdict::AlternativeWorse {
            original,
            alternative,
        } => {
            doc.verdict = "alternative_worse".into();
            doc.original = Some(original.clone());
            doc.alternative = Some(alternative.clone());
        }
        ContrastVerdict::AlternativeEquivalent { objective } => {
            doc.verdict = "alternative_equivalent".into();
            doc.original = Some(objective.clone());
            doc.alternative = Some(objective.clone());
        }
    }
    ExplanationDoc {
        kind,
        body: ExplanationBody::Contrast(doc),
    }
}

pub fn session_doc(kind: ProblemKind, session: &SessionState) -> ExplanationDoc {
    let model = session.augmented().unwrap_or_else(|_| session.base.clone());
    let steps = session
        .history
        .iter()
        .map(|h| {
            let (consistent, mus) = match &h.outcome {
                Reanalysis::Consistent => (true, Vec::new()),
                Reanalysis::Inconsistent(m) => (false, entries(&model, &m.labels)),
            };
            SessionStepDoc {
                added: entries(&model, &h.added),
                consistent,
                mus,
            }
        })
        .collect();
    ExplanationDoc {
        kind,
        body: ExplanationBody::Session(SessionDoc { steps }),
    }
}

/// `slot,baseline,exact` rows, one per slot; header only when the instance
/// has no patients.
pub fn write_histogram_csv(inst: &CtsInstance, baseline: &[u32], exact: &[u32]) -> String {
    let mut out = String::from("slot,baseline,exact\n");
    if inst.patients.is_empty() {
        return out;
    }
    for slot in 0..inst.slots {
        let at = |v: &[u32]| v.get(slot as usize).copied().unwrap_or(0);
        out.push_str(&format!(
            "{},{},{}\n",
            inst.slot_label(slot),
            at(baseline),
            at(exact)
        ));
    }
    out
}
