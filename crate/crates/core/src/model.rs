//! Finite-domain constraint model shared by every domain encoder.
//!
//! A model is a set of integer variables with explicit finite domains, a list
//! of labeled hard constraints and a list of leveled soft constraints. Soft
//! constraints cost their weight when violated; costs are compared level by
//! level with level 1 the most important.

use std::cmp::Ordering as CmpOrdering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Dense variable index.
pub type VarId = usize;

/// Structured constraint or variable name: a family plus an argument tuple,
/// rendered as `family(arg1,arg2)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Label {
    pub family: String,
    pub args: Vec<String>,
}

impl Label {
    pub fn new<I, S>(family: impl Into<String>, args: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: ToString,
    {
        Label {
            family: family.into(),
            args: args.into_iter().map(|a| a.to_string()).collect(),
        }
    }

    pub fn atom(family: impl Into<String>) -> Self {
        Label {
            family: family.into(),
            args: Vec::new(),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.args.is_empty() {
            write!(f, "{}", self.family)
        } else {
            write!(f, "{}({})", self.family, self.args.join(","))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed label `{0}`")]
pub struct LabelParseError(pub String);

impl FromStr for Label {
    type Err = LabelParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let bad = || LabelParseError(s.to_string());
        match s.find('(') {
            None => {
                if s.is_empty() || s.contains(')') || s.contains(',') {
                    return Err(bad());
                }
                Ok(Label::atom(s))
            }
            Some(open) => {
                if !s.ends_with(')') || open == 0 {
                    return Err(bad());
                }
                let family = &s[..open];
                let inner = &s[open + 1..s.len() - 1];
                if inner.contains('(') || inner.contains(')') {
                    return Err(bad());
                }
                let args: Vec<String> = if inner.is_empty() {
                    Vec::new()
                } else {
                    inner.split(',').map(|a| a.trim().to_string()).collect()
                };
                if args.iter().any(String::is_empty) {
                    return Err(bad());
                }
                Ok(Label {
                    family: family.trim().to_string(),
                    args,
                })
            }
        }
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Var {
    pub id: VarId,
    pub name: Label,
    /// Strictly ascending candidate values.
    pub domain: Vec<i64>,
    /// Optional display name per domain value, parallel to `domain`.
    pub value_names: Option<Vec<String>>,
    /// Auxiliary variables are fully determined by the primary ones; they are
    /// never offered as supporting atoms in justifications.
    pub auxiliary: bool,
}

impl Var {
    pub fn value_name(&self, value: i64) -> String {
        match (&self.value_names, self.domain.binary_search(&value)) {
            (Some(names), Ok(idx)) => names[idx].clone(),
            _ => value.to_string(),
        }
    }

    /// Resolves a display name or an integer literal to a domain value.
    pub fn resolve_value(&self, text: &str) -> Option<i64> {
        let text = text.trim();
        if let Some(names) = &self.value_names {
            if let Some(idx) = names.iter().position(|n| n == text) {
                return Some(self.domain[idx]);
            }
        }
        text.parse().ok()
    }
}

/// `var ∈ values`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Lit {
    pub var: VarId,
    pub values: Vec<i64>,
}

impl Lit {
    pub fn eq(var: VarId, value: i64) -> Self {
        Lit {
            var,
            values: vec![value],
        }
    }

    pub fn among(var: VarId, values: impl IntoIterator<Item = i64>) -> Self {
        let mut values: Vec<i64> = values.into_iter().collect();
        values.sort_unstable();
        values.dedup();
        Lit { var, values }
    }

    pub fn holds(&self, value: i64) -> bool {
        self.values.binary_search(&value).is_ok()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ConstraintKind {
    ExactlyOne,
    AtMostOne,
    LinearLeq,
    Ordering,
    AtMostKCount,
    Implication,
    Forbid,
    /// Bound on the total soft cost of one level. Never produced by the
    /// domain encoders; the explanation layer uses it to pin an objective.
    CostCap,
}

/// Constraint semantics over literal indicators `[x ∈ S]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Constraint {
    /// Exactly one literal holds.
    ExactlyOne(Vec<Lit>),
    /// At most one literal holds.
    AtMostOne(Vec<Lit>),
    /// `Σ coef·[lit] ≤ bound`, coefficients non-negative.
    LinearLeq { terms: Vec<(Lit, u64)>, bound: i64 },
    /// `before + offset ≤ after`, offset ≥ 0.
    Ordering {
        before: VarId,
        after: VarId,
        offset: i64,
    },
    /// Number of holding literals ≤ k.
    AtMostKCount { lits: Vec<Lit>, k: u32 },
    /// All premises hold ⇒ conclusion holds. No premises makes it unary.
    Implication { premises: Vec<Lit>, conclusion: Lit },
    /// The literals never hold simultaneously.
    Forbid(Vec<Lit>),
    /// Soft cost at `level` is at most `bound`.
    CostCap { level: u32, bound: u64 },
}

impl Constraint {
    pub fn kind(&self) -> ConstraintKind {
        match self {
            Constraint::ExactlyOne(_) => ConstraintKind::ExactlyOne,
            Constraint::AtMostOne(_) => ConstraintKind::AtMostOne,
            Constraint::LinearLeq { .. } => ConstraintKind::LinearLeq,
            Constraint::Ordering { .. } => ConstraintKind::Ordering,
            Constraint::AtMostKCount { .. } => ConstraintKind::AtMostKCount,
            Constraint::Implication { .. } => ConstraintKind::Implication,
            Constraint::Forbid(_) => ConstraintKind::Forbid,
            Constraint::CostCap { .. } => ConstraintKind::CostCap,
        }
    }

    /// Literals mentioned by the constraint, in declaration order.
    pub fn lits(&self) -> Vec<&Lit> {
        match self {
            Constraint::ExactlyOne(lits)
            | Constraint::AtMostOne(lits)
            | Constraint::Forbid(lits)
            | Constraint::AtMostKCount { lits, .. } => lits.iter().collect(),
            Constraint::LinearLeq { terms, .. } => terms.iter().map(|(l, _)| l).collect(),
            Constraint::Implication {
                premises,
                conclusion,
            } => premises.iter().chain(std::iter::once(conclusion)).collect(),
            Constraint::Ordering { .. } | Constraint::CostCap { .. } => Vec::new(),
        }
    }

    /// Variables in scope, deduplicated, ascending.
    pub fn scope(&self) -> Vec<VarId> {
        let mut vars: Vec<VarId> = match self {
            Constraint::Ordering { before, after, .. } => vec![*before, *after],
            _ => self.lits().iter().map(|l| l.var).collect(),
        };
        vars.sort_unstable();
        vars.dedup();
        vars
    }

    fn check_params(&self) -> Result<(), String> {
        match self {
            Constraint::ExactlyOne(lits) if lits.is_empty() => {
                Err("ExactlyOne over an empty scope".into())
            }
            Constraint::Ordering { offset, .. } if *offset < 0 => {
                Err(format!("Ordering offset {offset} is negative"))
            }
            _ => {
                for lit in self.lits() {
                    if lit.values.windows(2).any(|w| w[0] >= w[1]) {
                        return Err(format!(
                            "value set of var {} is not strictly ascending",
                            lit.var
                        ));
                    }
                }
                Ok(())
            }
        }
    }

    /// Evaluates the constraint on a total assignment. `CostCap` needs the
    /// soft costs and is handled by [`check_assignment`].
    pub fn holds(&self, values: &[i64]) -> bool {
        let lit = |l: &Lit| l.holds(values[l.var]);
        match self {
            Constraint::ExactlyOne(lits) => lits.iter().filter(|l| lit(l)).count() == 1,
            Constraint::AtMostOne(lits) => lits.iter().filter(|l| lit(l)).count() <= 1,
            Constraint::LinearLeq { terms, bound } => {
                let sum: i128 = terms
                    .iter()
                    .filter(|(l, _)| lit(l))
                    .map(|(_, c)| *c as i128)
                    .sum();
                sum <= *bound as i128
            }
            Constraint::Ordering {
                before,
                after,
                offset,
            } => values[*before] + offset <= values[*after],
            Constraint::AtMostKCount { lits, k } => {
                lits.iter().filter(|l| lit(l)).count() <= *k as usize
            }
            Constraint::Implication {
                premises,
                conclusion,
            } => !premises.iter().all(lit) || lit(conclusion),
            Constraint::Forbid(lits) => !lits.iter().all(lit),
            Constraint::CostCap { .. } => true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConstraintInstance {
    pub label: Label,
    pub constraint: Constraint,
}

/// Cost `weight` is paid at `level` iff `constraint` is violated.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SoftConstraint {
    pub label: Label,
    pub level: u32,
    pub weight: u64,
    pub constraint: Constraint,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Flags {
    pub removable: bool,
    pub fact: bool,
}

impl Flags {
    pub const NONE: Flags = Flags {
        removable: false,
        fact: false,
    };
    pub const REMOVABLE: Flags = Flags {
        removable: true,
        fact: false,
    };
    pub const FACT: Flags = Flags {
        removable: true,
        fact: true,
    };
}

/// Total assignment indexed by variable id.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Assignment(pub Vec<i64>);

impl Assignment {
    pub fn value(&self, var: VarId) -> i64 {
        self.0[var]
    }

    pub fn values(&self) -> &[i64] {
        &self.0
    }
}

/// Per-level costs, level 1 first. Comparison pads the shorter vector with
/// zeros, so `[1]` and `[1, 0]` are equal.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectiveVector(pub Vec<u64>);

impl ObjectiveVector {
    pub fn level(&self, level: u32) -> u64 {
        self.0.get(level as usize - 1).copied().unwrap_or(0)
    }

    fn trimmed(&self) -> &[u64] {
        let end = self
            .0
            .iter()
            .rposition(|&c| c != 0)
            .map_or(0, |i| i + 1);
        &self.0[..end]
    }
}

impl PartialEq for ObjectiveVector {
    fn eq(&self, other: &Self) -> bool {
        self.trimmed() == other.trimmed()
    }
}

impl Eq for ObjectiveVector {}

impl Hash for ObjectiveVector {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.trimmed().hash(state);
    }
}

impl Ord for ObjectiveVector {
    fn cmp(&self, other: &Self) -> CmpOrdering {
        let n = self.0.len().max(other.0.len());
        for i in 0..n {
            let a = self.0.get(i).copied().unwrap_or(0);
            let b = other.0.get(i).copied().unwrap_or(0);
            match a.cmp(&b) {
                CmpOrdering::Equal => continue,
                ord => return ord,
            }
        }
        CmpOrdering::Equal
    }
}

impl PartialOrd for ObjectiveVector {
    fn partial_cmp(&self, other: &Self) -> Option<CmpOrdering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for ObjectiveVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(u64::to_string).collect();
        write!(f, "[{}]", parts.join(","))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("variable `{0}` has an empty domain")]
    EmptyDomain(Label),
    #[error("domain of `{0}` is not strictly ascending")]
    UnsortedDomain(Label),
    #[error("value names of `{0}` do not match its domain")]
    ValueNames(Label),
    #[error("duplicate label `{0}`")]
    DuplicateLabel(Label),
    #[error("constraint `{label}` refers to unknown variable {var}")]
    UnknownVar { label: Label, var: VarId },
    #[error("constraint `{label}` is malformed: {reason}")]
    MalformedParams { label: Label, reason: String },
    #[error("soft constraint `{0}` needs level ≥ 1 and weight ≥ 1")]
    BadSoft(Label),
    #[error("assignment covers {got} variables, model has {expected}")]
    PartialAssignment { expected: usize, got: usize },
    #[error("value {value} is outside the domain of `{var}`")]
    ValueOutsideDomain { var: Label, value: i64 },
    #[error("unknown label `{0}`")]
    UnknownLabel(Label),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Defect {
    DanglingVar { label: Label, var: VarId },
    DuplicateLabel(Label),
    MalformedParams { label: Label, reason: String },
    NonDenseIds { position: usize, id: VarId },
    EmptyDomain(VarId),
    UnsortedDomain(VarId),
    BadSoft(Label),
    /// A removable or fact label that names no hard constraint.
    StrayLabel(Label),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CheckReport {
    pub violations: Vec<Label>,
    pub objective: ObjectiveVector,
}

#[derive(Clone, Debug, Default)]
pub struct ConstraintModel {
    pub vars: Vec<Var>,
    pub hard: Vec<ConstraintInstance>,
    pub soft: Vec<SoftConstraint>,
    pub removable: BTreeSet<Label>,
    pub facts: BTreeSet<Label>,
    /// Declared objective length; the objective vector has
    /// `max(levels, highest soft level)` entries.
    pub levels: u32,
    /// Human-readable gloss per constraint label.
    pub notes: BTreeMap<Label, String>,
    labels: HashMap<Label, LabelSlot>,
    var_names: HashMap<Label, VarId>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum LabelSlot {
    Hard(usize),
    Soft(usize),
}

impl ConstraintModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_levels(levels: u32) -> Self {
        ConstraintModel {
            levels,
            ..Self::default()
        }
    }

    pub fn add_var(&mut self, name: Label, domain: Vec<i64>) -> Result<VarId, ModelError> {
        self.add_var_full(name, domain, None, false)
    }

    pub fn add_var_full(
        &mut self,
        name: Label,
        domain: Vec<i64>,
        value_names: Option<Vec<String>>,
        auxiliary: bool,
    ) -> Result<VarId, ModelError> {
        if domain.is_empty() {
            return Err(ModelError::EmptyDomain(name));
        }
        if domain.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ModelError::UnsortedDomain(name));
        }
        if value_names.as_ref().is_some_and(|n| n.len() != domain.len()) {
            return Err(ModelError::ValueNames(name));
        }
        let id = self.vars.len();
        self.var_names.insert(name.clone(), id);
        self.vars.push(Var {
            id,
            name,
            domain,
            value_names,
            auxiliary,
        });
        Ok(id)
    }

    pub fn var_by_name(&self, name: &Label) -> Option<VarId> {
        self.var_names.get(name).copied().or_else(|| {
            self.vars.iter().find(|v| &v.name == name).map(|v| v.id)
        })
    }

    fn check_constraint(&self, label: &Label, constraint: &Constraint) -> Result<(), ModelError> {
        if self.labels.contains_key(label) {
            return Err(ModelError::DuplicateLabel(label.clone()));
        }
        for var in constraint.scope() {
            if var >= self.vars.len() {
                return Err(ModelError::UnknownVar {
                    label: label.clone(),
                    var,
                });
            }
        }
        constraint
            .check_params()
            .map_err(|reason| ModelError::MalformedParams {
                label: label.clone(),
                reason,
            })
    }

    pub fn add_constraint(
        &mut self,
        label: Label,
        constraint: Constraint,
        flags: Flags,
    ) -> Result<(), ModelError> {
        self.check_constraint(&label, &constraint)?;
        if flags.removable {
            self.removable.insert(label.clone());
        }
        if flags.fact {
            self.facts.insert(label.clone());
        }
        self.labels
            .insert(label.clone(), LabelSlot::Hard(self.hard.len()));
        self.hard.push(ConstraintInstance { label, constraint });
        Ok(())
    }

    pub fn add_soft(
        &mut self,
        label: Label,
        level: u32,
        weight: u64,
        constraint: Constraint,
    ) -> Result<(), ModelError> {
        if level == 0 || weight == 0 {
            return Err(ModelError::BadSoft(label));
        }
        self.check_constraint(&label, &constraint)?;
        self.labels
            .insert(label.clone(), LabelSlot::Soft(self.soft.len()));
        self.soft.push(SoftConstraint {
            label,
            level,
            weight,
            constraint,
        });
        Ok(())
    }

    pub fn note(&mut self, label: &Label, text: impl Into<String>) {
        self.notes.insert(label.clone(), text.into());
    }

    pub fn hard_constraint(&self, label: &Label) -> Option<&ConstraintInstance> {
        match self.slot(label)? {
            LabelSlot::Hard(i) => Some(&self.hard[i]),
            LabelSlot::Soft(_) => None,
        }
    }

    pub fn soft_constraint(&self, label: &Label) -> Option<&SoftConstraint> {
        match self.slot(label)? {
            LabelSlot::Soft(i) => Some(&self.soft[i]),
            LabelSlot::Hard(_) => None,
        }
    }

    fn slot(&self, label: &Label) -> Option<LabelSlot> {
        if let Some(slot) = self.labels.get(label) {
            return Some(*slot);
        }
        // Models assembled by hand bypass the index.
        if let Some(i) = self.hard.iter().position(|c| &c.label == label) {
            return Some(LabelSlot::Hard(i));
        }
        self.soft
            .iter()
            .position(|c| &c.label == label)
            .map(LabelSlot::Soft)
    }

    pub fn contains_label(&self, label: &Label) -> bool {
        self.slot(label).is_some()
    }

    /// Length of objective vectors produced for this model.
    pub fn objective_len(&self) -> usize {
        let top = self.soft.iter().map(|s| s.level).max().unwrap_or(0);
        top.max(self.levels) as usize
    }

    /// Per-level soft cost of a total assignment.
    pub fn objective_of(&self, values: &[i64]) -> ObjectiveVector {
        let mut costs = vec![0u64; self.objective_len()];
        for soft in &self.soft {
            if !soft.constraint.holds(values) {
                costs[soft.level as usize - 1] += soft.weight;
            }
        }
        ObjectiveVector(costs)
    }

    /// Renders a constraint with variable and value names.
    pub fn describe(&self, label: &Label) -> String {
        if let Some(note) = self.notes.get(label) {
            return note.clone();
        }
        let constraint = match self.slot(label) {
            Some(LabelSlot::Hard(i)) => &self.hard[i].constraint,
            Some(LabelSlot::Soft(i)) => &self.soft[i].constraint,
            None => return format!("unknown constraint {label}"),
        };
        self.render(constraint)
    }

    pub fn render_lit(&self, lit: &Lit) -> String {
        let var = &self.vars[lit.var];
        let names: Vec<String> = lit.values.iter().map(|v| var.value_name(*v)).collect();
        if names.len() == 1 {
            format!("{}={}", var.name, names[0])
        } else {
            format!("{}∈{{{}}}", var.name, names.join(","))
        }
    }

    pub fn render(&self, constraint: &Constraint) -> String {
        let join = |lits: &[Lit], sep: &str| {
            lits.iter()
                .map(|l| self.render_lit(l))
                .collect::<Vec<_>>()
                .join(sep)
        };
        match constraint {
            Constraint::ExactlyOne(lits) => format!("exactly one of {}", join(lits, ", ")),
            Constraint::AtMostOne(lits) => format!("at most one of {}", join(lits, ", ")),
            Constraint::LinearLeq { terms, bound } => {
                let parts: Vec<String> = terms
                    .iter()
                    .map(|(l, c)| format!("{c}·[{}]", self.render_lit(l)))
                    .collect();
                format!("{} ≤ {bound}", parts.join(" + "))
            }
            Constraint::Ordering {
                before,
                after,
                offset,
            } => format!(
                "{} + {offset} ≤ {}",
                self.vars[*before].name, self.vars[*after].name
            ),
            Constraint::AtMostKCount { lits, k } => {
                format!("at most {k} of {}", join(lits, ", "))
            }
            Constraint::Implication {
                premises,
                conclusion,
            } if premises.is_empty() => self.render_lit(conclusion),
            Constraint::Implication {
                premises,
                conclusion,
            } => format!(
                "{} ⇒ {}",
                join(premises, " ∧ "),
                self.render_lit(conclusion)
            ),
            Constraint::Forbid(lits) => format!("not ({})", join(lits, " ∧ ")),
            Constraint::CostCap { level, bound } => {
                format!("cost at level {level} ≤ {bound}")
            }
        }
    }
}

/// Verifies a total assignment against every constraint.
pub fn check_assignment(
    model: &ConstraintModel,
    assignment: &Assignment,
) -> Result<CheckReport, ModelError> {
    let values = assignment.values();
    if values.len() != model.vars.len() {
        return Err(ModelError::PartialAssignment {
            expected: model.vars.len(),
            got: values.len(),
        });
    }
    for (var, &value) in model.vars.iter().zip(values) {
        if var.domain.binary_search(&value).is_err() {
            return Err(ModelError::ValueOutsideDomain {
                var: var.name.clone(),
                value,
            });
        }
    }
    let objective = model.objective_of(values);
    let violations = model
        .hard
        .iter()
        .filter(|c| match &c.constraint {
            Constraint::CostCap { level, bound } => objective.level(*level) > *bound,
            other => !other.holds(values),
        })
        .map(|c| c.label.clone())
        .collect();
    Ok(CheckReport {
        violations,
        objective,
    })
}

/// Structural sanity check; returns every defect found.
pub fn validate_model(model: &ConstraintModel) -> Result<(), Vec<Defect>> {
    let mut defects = Vec::new();
    for (pos, var) in model.vars.iter().enumerate() {
        if var.id != pos {
            defects.push(Defect::NonDenseIds {
                position: pos,
                id: var.id,
            });
        }
        if var.domain.is_empty() {
            defects.push(Defect::EmptyDomain(pos));
        } else if var.domain.windows(2).any(|w| w[0] >= w[1]) {
            defects.push(Defect::UnsortedDomain(pos));
        }
    }
    let mut seen = BTreeSet::new();
    let hard = model.hard.iter().map(|c| (&c.label, &c.constraint));
    let soft = model.soft.iter().map(|c| (&c.label, &c.constraint));
    for (label, constraint) in hard.chain(soft) {
        if !seen.insert(label.clone()) {
            defects.push(Defect::DuplicateLabel(label.clone()));
        }
        for var in constraint.scope() {
            if var >= model.vars.len() {
                defects.push(Defect::DanglingVar {
                    label: label.clone(),
                    var,
                });
            }
        }
        if let Err(reason) = constraint.check_params() {
            defects.push(Defect::MalformedParams {
                label: label.clone(),
                reason,
            });
        }
    }
    for soft in &model.soft {
        if soft.level == 0 || soft.weight == 0 {
            defects.push(Defect::BadSoft(soft.label.clone()));
        }
    }
    let hard_labels: BTreeSet<&Label> = model.hard.iter().map(|c| &c.label).collect();
    for label in model.removable.iter().chain(model.facts.iter()) {
        if !hard_labels.contains(label) {
            defects.push(Defect::StrayLabel(label.clone()));
        }
    }
    if defects.is_empty() {
        Ok(())
    } else {
        Err(defects)
    }
}
