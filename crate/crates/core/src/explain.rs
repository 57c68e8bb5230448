//! Explanations: minimal unsatisfiable subsets, justification graphs for
//! assignments in an optimal solution, contrastive "why A and not B" queries
//! and an incremental background-knowledge session.

use std::collections::{BTreeSet, HashMap, HashSet};

use thiserror::Error;

use crate::engine::{
    solve, Decision, DecisionOracle, EngineError, Solution, SolveConfig, SolveStatus,
};
use crate::model::{
    Constraint, ConstraintInstance, ConstraintModel, Flags, Label, Lit, ModelError,
    ObjectiveVector, VarId,
};

pub const DEFAULT_MAX_DEPTH: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExplainError {
    #[error("the model is satisfiable; there is no conflict to explain")]
    NotUnsat,
    #[error("`{0}` does not hold in the solution")]
    TargetNotInSolution(String),
    #[error("both sides of the contrast are the same assignment `{0}`")]
    SameAssignment(String),
    #[error("`{0}` already holds in the solution")]
    AlreadyHolds(String),
    #[error("value {value} is not in the domain of `{var}`")]
    ValueOutsideDomain { var: String, value: i64 },
    #[error("unknown variable `{0}`")]
    UnknownVar(String),
    #[error("cannot parse atom `{0}`; expected name=value or name!=value")]
    BadAtom(String),
    #[error("label `{0}` is already in use")]
    LabelCollision(Label),
    #[error("the solution is not optimal: the alternative scores {0}")]
    SolutionNotOptimal(ObjectiveVector),
    #[error("a solver call hit its time limit")]
    Timeout,
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Debug)]
pub struct ExplainConfig {
    /// Limit applied to each individual solver call.
    pub solve: SolveConfig,
    pub max_depth: usize,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        ExplainConfig {
            solve: SolveConfig::default(),
            max_depth: DEFAULT_MAX_DEPTH,
        }
    }
}

/// A 1-minimal set of removable constraints that cannot hold together.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mus {
    pub labels: Vec<Label>,
}

impl Mus {
    pub fn contains(&self, label: &Label) -> bool {
        self.labels.contains(label)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

fn decide(
    oracle: &DecisionOracle<'_>,
    enabled: &BTreeSet<Label>,
    config: &SolveConfig,
) -> Result<bool, ExplainError> {
    match oracle.query(enabled, config)? {
        Decision::Unsat => Ok(true),
        Decision::Sat(_) => Ok(false),
        Decision::UnknownTimeout => Err(ExplainError::Timeout),
    }
}

/// Deletion-based shrink: candidates are tried for removal in order, so
/// later candidates are the ones preferentially kept.
fn shrink(
    oracle: &DecisionOracle<'_>,
    candidates: &[Label],
    config: &SolveConfig,
) -> Result<Vec<Label>, ExplainError> {
    let mut kept: BTreeSet<Label> = candidates.iter().cloned().collect();
    if !decide(oracle, &kept, config)? {
        return Err(ExplainError::NotUnsat);
    }
    for label in candidates {
        kept.remove(label);
        if !decide(oracle, &kept, config)? {
            kept.insert(label.clone());
        }
    }
    Ok(candidates
        .iter()
        .filter(|l| kept.contains(*l))
        .cloned()
        .collect())
}

/// MUS over the model's removable constraints, tried in declaration order.
pub fn extract_mus(model: &ConstraintModel, config: &ExplainConfig) -> Result<Mus, ExplainError> {
    let order: Vec<Label> = model
        .hard
        .iter()
        .map(|c| c.label.clone())
        .filter(|l| model.removable.contains(l))
        .collect();
    extract_mus_over(model, &order, config)
}

/// MUS restricted to `candidates`; other removable constraints stay off.
pub fn extract_mus_over(
    model: &ConstraintModel,
    candidates: &[Label],
    config: &ExplainConfig,
) -> Result<Mus, ExplainError> {
    let oracle = DecisionOracle::new(model)?;
    Ok(Mus {
        labels: shrink(&oracle, candidates, &config.solve)?,
    })
}

/// Confirms 1-minimality with `|mus| + 1` decision calls.
pub fn verify_mus(
    model: &ConstraintModel,
    mus: &Mus,
    config: &ExplainConfig,
) -> Result<bool, ExplainError> {
    let oracle = DecisionOracle::new(model)?;
    let all: BTreeSet<Label> = mus.labels.iter().cloned().collect();
    if !decide(&oracle, &all, &config.solve)? {
        return Ok(false);
    }
    for label in &mus.labels {
        let mut without = all.clone();
        without.remove(label);
        if decide(&oracle, &without, &config.solve)? {
            return Ok(false);
        }
    }
    Ok(true)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Atom {
    pub var: VarId,
    pub value: i64,
}

impl Atom {
    pub fn new(var: VarId, value: i64) -> Self {
        Atom { var, value }
    }

    pub fn render(&self, model: &ConstraintModel) -> String {
        let var = &model.vars[self.var];
        format!("{}={}", var.name, var.value_name(self.value))
    }
}

/// Parses `name=value`, where value may be a display name or an integer.
pub fn parse_atom(model: &ConstraintModel, text: &str) -> Result<Atom, ExplainError> {
    let (name, value) = text
        .split_once('=')
        .ok_or_else(|| ExplainError::BadAtom(text.to_string()))?;
    let label: Label = name
        .trim()
        .parse()
        .map_err(|_| ExplainError::BadAtom(text.to_string()))?;
    let var = model
        .var_by_name(&label)
        .ok_or_else(|| ExplainError::UnknownVar(label.to_string()))?;
    let value = model.vars[var]
        .resolve_value(value)
        .ok_or_else(|| ExplainError::BadAtom(text.to_string()))?;
    if model.vars[var].domain.binary_search(&value).is_err() {
        return Err(ExplainError::ValueOutsideDomain {
            var: label.to_string(),
            value,
        });
    }
    Ok(Atom { var, value })
}

/// Turns a user line `name=value` or `name!=value` into a labeled hard
/// constraint.
pub fn parse_fact(
    model: &ConstraintModel,
    label: Label,
    line: &str,
) -> Result<ConstraintInstance, ExplainError> {
    let line = line.trim();
    let (negated, atom_text) = match line.split_once("!=") {
        Some((name, value)) => (true, format!("{name}={value}")),
        None => (false, line.to_string()),
    };
    let atom = parse_atom(model, &atom_text)?;
    let lit = Lit::eq(atom.var, atom.value);
    let constraint = if negated {
        Constraint::Forbid(vec![lit])
    } else {
        Constraint::Implication {
            premises: vec![],
            conclusion: lit,
        }
    };
    Ok(ConstraintInstance { label, constraint })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AtomStatus {
    /// Negating the atom is infeasible at the solution's objective.
    Justified,
    /// Another value is feasible at equal objective; a tie-break, not expanded.
    Unforced,
    /// Depth cap reached before expansion.
    Truncated,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum JustNode {
    Atom {
        atom: Atom,
        status: AtomStatus,
        /// Indices of the supporting nodes.
        supports: Vec<usize>,
    },
    Fact {
        label: Label,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct JustificationGraph {
    pub nodes: Vec<JustNode>,
    pub roots: Vec<usize>,
}

impl JustificationGraph {
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.nodes.iter().enumerate().flat_map(|(i, n)| match n {
            JustNode::Atom { supports, .. } => supports.iter().map(move |&s| (i, s)).collect(),
            JustNode::Fact { .. } => Vec::new(),
        })
    }

    pub fn is_acyclic(&self) -> bool {
        // Kahn's algorithm over supported-by edges.
        let n = self.nodes.len();
        let mut indegree = vec![0usize; n];
        for (_, to) in self.edges() {
            indegree[to] += 1;
        }
        let mut stack: Vec<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
        let mut seen = 0;
        while let Some(i) = stack.pop() {
            seen += 1;
            if let JustNode::Atom { supports, .. } = &self.nodes[i] {
                for &s in supports {
                    indegree[s] -= 1;
                    if indegree[s] == 0 {
                        stack.push(s);
                    }
                }
            }
        }
        seen == n
    }

    /// Leaves are facts, or atoms deliberately left unexpanded.
    pub fn leaves_are_facts(&self) -> bool {
        self.nodes.iter().all(|n| match n {
            JustNode::Fact { .. } => true,
            JustNode::Atom {
                status, supports, ..
            } => match status {
                AtomStatus::Justified => !supports.is_empty(),
                AtomStatus::Unforced | AtomStatus::Truncated => supports.is_empty(),
            },
        })
    }

    pub fn atom_node(&self, atom: Atom) -> Option<usize> {
        self.nodes.iter().position(|n| match n {
            JustNode::Atom { atom: a, .. } => *a == atom,
            JustNode::Fact { .. } => false,
        })
    }

    /// Fact labels reachable from `node`.
    pub fn frontier(&self, node: usize) -> BTreeSet<Label> {
        let mut out = BTreeSet::new();
        let mut stack = vec![node];
        let mut seen = HashSet::new();
        while let Some(i) = stack.pop() {
            if !seen.insert(i) {
                continue;
            }
            match &self.nodes[i] {
                JustNode::Fact { label } => {
                    out.insert(label.clone());
                }
                JustNode::Atom { supports, .. } => stack.extend(supports),
            }
        }
        out
    }
}

fn cap_label(level: usize) -> Label {
    Label::new("objective-cap", [level])
}

fn unit_label(model: &ConstraintModel, var: VarId, value: i64) -> Label {
    Label::new("holds", [model.vars[var].name.to_string(), value.to_string()])
}

fn negation_label(atom: Atom) -> Label {
    Label::new("negated", [atom.var as i64, atom.value])
}

/// The model every justification query starts from: all hard constraints
/// removable, per-level cost caps at the solution's objective, and one
/// removable unit per primary variable fixing it to its solution value.
struct JustificationBase {
    model: ConstraintModel,
    hard_rules: Vec<Label>,
    hard_facts: Vec<Label>,
    caps: Vec<Label>,
    units: HashMap<VarId, Label>,
}

impl JustificationBase {
    fn new(model: &ConstraintModel, solution: &Solution) -> Result<Self, ExplainError> {
        let mut base = model.clone();
        let mut hard_rules = Vec::new();
        let mut hard_facts = Vec::new();
        for c in &model.hard {
            base.removable.insert(c.label.clone());
            if model.facts.contains(&c.label) {
                hard_facts.push(c.label.clone());
            } else {
                hard_rules.push(c.label.clone());
            }
        }
        let mut caps = Vec::new();
        for level in 1..=model.objective_len() {
            let label = cap_label(level);
            let bound = solution.objective.level(level as u32);
            base.add_constraint(
                label.clone(),
                Constraint::CostCap {
                    level: level as u32,
                    bound,
                },
                Flags::FACT,
            )?;
            base.note(&label, format!("objective level {level} stays at {bound}"));
            caps.push(label);
        }
        let mut units = HashMap::new();
        for var in model.vars.iter().filter(|v| !v.auxiliary) {
            let value = solution.assignment.value(var.id);
            let label = unit_label(model, var.id, value);
            let unit = Constraint::Implication {
                premises: vec![],
                conclusion: Lit::eq(var.id, value),
            };
            base.add_constraint(label.clone(), unit, Flags::REMOVABLE)?;
            units.insert(var.id, label);
        }
        Ok(JustificationBase {
            model: base,
            hard_rules,
            hard_facts,
            caps,
            units,
        })
    }

    fn with_negation(&self, atom: Atom) -> Result<ConstraintModel, ExplainError> {
        let mut m = self.model.clone();
        m.add_constraint(
            negation_label(atom),
            Constraint::Forbid(vec![Lit::eq(atom.var, atom.value)]),
            Flags::NONE,
        )?;
        Ok(m)
    }
}

struct Justifier<'a> {
    original: &'a ConstraintModel,
    base: JustificationBase,
    config: &'a ExplainConfig,
    graph: JustificationGraph,
    atoms: HashMap<Atom, usize>,
    facts: HashMap<Label, usize>,
    in_progress: HashSet<VarId>,
    unit_owner: HashMap<Label, VarId>,
    solution: &'a Solution,
}

impl Justifier<'_> {
    fn fact_node(&mut self, label: Label) -> usize {
        if let Some(&i) = self.facts.get(&label) {
            return i;
        }
        let i = self.graph.nodes.len();
        self.graph.nodes.push(JustNode::Fact {
            label: label.clone(),
        });
        self.facts.insert(label, i);
        i
    }

    fn atom_node(&mut self, atom: Atom, depth: usize) -> Result<usize, ExplainError> {
        if let Some(&i) = self.atoms.get(&atom) {
            return Ok(i);
        }
        let i = self.graph.nodes.len();
        self.graph.nodes.push(JustNode::Atom {
            atom,
            status: AtomStatus::Truncated,
            supports: Vec::new(),
        });
        self.atoms.insert(atom, i);
        if depth >= self.config.max_depth {
            return Ok(i);
        }
        let (status, supports) = self.expand(atom, depth)?;
        self.graph.nodes[i] = JustNode::Atom {
            atom,
            status,
            supports,
        };
        Ok(i)
    }

    fn expand(&mut self, atom: Atom, depth: usize) -> Result<(AtomStatus, Vec<usize>), ExplainError> {
        let negated = self.base.with_negation(atom)?;
        let oracle = DecisionOracle::new(&negated)?;
        let no_units: BTreeSet<Label> = self
            .base
            .hard_rules
            .iter()
            .chain(&self.base.hard_facts)
            .chain(&self.base.caps)
            .cloned()
            .collect();
        if !decide(&oracle, &no_units, &self.config.solve)? {
            return Ok((AtomStatus::Unforced, Vec::new()));
        }
        self.in_progress.insert(atom.var);
        let mut order: Vec<Label> = Vec::new();
        order.extend(self.base.hard_rules.iter().cloned());
        order.extend(self.base.hard_facts.iter().cloned());
        let mut unit_vars: Vec<VarId> = self
            .base
            .units
            .keys()
            .copied()
            .filter(|v| !self.in_progress.contains(v))
            .collect();
        unit_vars.sort_unstable();
        order.extend(unit_vars.iter().map(|v| self.base.units[v].clone()));
        order.extend(self.base.caps.iter().cloned());
        let mus = shrink(&oracle, &order, &self.config.solve)?;
        let mut supports = Vec::with_capacity(mus.len().max(1));
        if mus.is_empty() {
            // The variable's domain admits no other value.
            let name = self.original.vars[atom.var].name.to_string();
            supports.push(self.fact_node(domain_label(&name)));
        }
        for label in mus {
            let node = match self.unit_owner.get(&label) {
                Some(&var) => {
                    let value = self.solution.assignment.value(var);
                    self.atom_node(Atom::new(var, value), depth + 1)?
                }
                None => self.fact_node(label),
            };
            supports.push(node);
        }
        self.in_progress.remove(&atom.var);
        Ok((AtomStatus::Justified, supports))
    }
}

/// Fact standing for a variable's domain when it alone forces an atom.
pub fn domain_label(var_name: &str) -> Label {
    Label::new("domain", [var_name])
}

fn check_atom(model: &ConstraintModel, atom: Atom) -> Result<(), ExplainError> {
    let var = model
        .vars
        .get(atom.var)
        .ok_or_else(|| ExplainError::UnknownVar(atom.var.to_string()))?;
    if var.domain.binary_search(&atom.value).is_err() {
        return Err(ExplainError::ValueOutsideDomain {
            var: var.name.to_string(),
            value: atom.value,
        });
    }
    Ok(())
}

/// Justifies each target by negating it under the solution's objective caps
/// and shrinking the conflict to constraints, caps and other solution atoms;
/// atoms found this way are justified in turn.
pub fn justify(
    model: &ConstraintModel,
    solution: &Solution,
    targets: &[Atom],
    config: &ExplainConfig,
) -> Result<JustificationGraph, ExplainError> {
    for &t in targets {
        check_atom(model, t)?;
        if solution.assignment.value(t.var) != t.value {
            return Err(ExplainError::TargetNotInSolution(t.render(model)));
        }
    }
    let base = JustificationBase::new(model, solution)?;
    let unit_owner = base.units.iter().map(|(v, l)| (l.clone(), *v)).collect();
    let mut j = Justifier {
        original: model,
        base,
        config,
        graph: JustificationGraph::default(),
        atoms: HashMap::new(),
        facts: HashMap::new(),
        in_progress: HashSet::new(),
        unit_owner,
        solution,
    };
    for &t in targets {
        let root = j.atom_node(t, 0)?;
        if !j.graph.roots.contains(&root) {
            j.graph.roots.push(root);
        }
    }
    debug_assert!(j.original.vars.len() == model.vars.len());
    Ok(j.graph)
}

/// Re-checks every justified atom: negating it with only its supporting set
/// (caps included) must be infeasible.
pub fn verify_justification(
    model: &ConstraintModel,
    solution: &Solution,
    graph: &JustificationGraph,
    config: &ExplainConfig,
) -> Result<bool, ExplainError> {
    let base = JustificationBase::new(model, solution)?;
    for node in &graph.nodes {
        let JustNode::Atom {
            atom,
            status: AtomStatus::Justified,
            supports,
        } = node
        else {
            continue;
        };
        let negated = base.with_negation(*atom)?;
        let oracle = DecisionOracle::new(&negated)?;
        let enabled: BTreeSet<Label> = supports
            .iter()
            .filter_map(|&s| match &graph.nodes[s] {
                JustNode::Fact { label } if label.family == "domain" => None,
                JustNode::Fact { label } => Some(label.clone()),
                JustNode::Atom { atom, .. } => Some(base.units[&atom.var].clone()),
            })
            .collect();
        if !decide(&oracle, &enabled, &config.solve)? {
            return Ok(false);
        }
    }
    Ok(true)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ContrastVerdict {
    AlternativeInfeasible(Mus),
    AlternativeWorse {
        original: ObjectiveVector,
        alternative: ObjectiveVector,
    },
    AlternativeEquivalent {
        objective: ObjectiveVector,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContrastResult {
    pub a: Atom,
    pub b: Atom,
    pub verdict: ContrastVerdict,
    /// Optimal solution with `b` forced, when one exists.
    pub alternative: Option<Solution>,
}

fn forced_label(atom: Atom) -> Label {
    Label::new("forced", [atom.var as i64, atom.value])
}

/// Answers "why `a` rather than `b`" for an optimal solution.
pub fn contrast(
    model: &ConstraintModel,
    solution: &Solution,
    a: Atom,
    b: Atom,
    config: &ExplainConfig,
) -> Result<ContrastResult, ExplainError> {
    check_atom(model, a)?;
    check_atom(model, b)?;
    if a == b {
        return Err(ExplainError::SameAssignment(a.render(model)));
    }
    if solution.assignment.value(a.var) != a.value {
        return Err(ExplainError::TargetNotInSolution(a.render(model)));
    }
    if solution.assignment.value(b.var) == b.value {
        return Err(ExplainError::AlreadyHolds(b.render(model)));
    }
    let mut forced = model.clone();
    let hard_order: Vec<Label> = model.hard.iter().map(|c| c.label.clone()).collect();
    forced.removable.extend(hard_order.iter().cloned());
    forced.add_constraint(
        forced_label(b),
        Constraint::Implication {
            premises: vec![],
            conclusion: Lit::eq(b.var, b.value),
        },
        Flags::NONE,
    )?;
    let oracle = DecisionOracle::new(&forced)?;
    let all: BTreeSet<Label> = hard_order.iter().cloned().collect();
    if decide(&oracle, &all, &config.solve)? {
        let labels = shrink(&oracle, &hard_order, &config.solve)?;
        return Ok(ContrastResult {
            a,
            b,
            verdict: ContrastVerdict::AlternativeInfeasible(Mus { labels }),
            alternative: None,
        });
    }
    let out = solve(&forced, &config.solve)?;
    let alt = match (out.status, out.best) {
        (SolveStatus::Optimal, Some(best)) => best,
        (SolveStatus::Unsat, _) => unreachable!("decision query found the forced model satisfiable"),
        _ => return Err(ExplainError::Timeout),
    };
    let verdict = match solution.objective.cmp(&alt.objective) {
        std::cmp::Ordering::Less => ContrastVerdict::AlternativeWorse {
            original: solution.objective.clone(),
            alternative: alt.objective.clone(),
        },
        std::cmp::Ordering::Equal => ContrastVerdict::AlternativeEquivalent {
            objective: alt.objective.clone(),
        },
        std::cmp::Ordering::Greater => {
            return Err(ExplainError::SolutionNotOptimal(alt.objective));
        }
    };
    Ok(ContrastResult {
        a,
        b,
        verdict,
        alternative: Some(alt),
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Reanalysis {
    Consistent,
    Inconsistent(Mus),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HistoryEntry {
    pub added: Vec<Label>,
    pub outcome: Reanalysis,
}

/// Interactive loop state: the base model plus user-supplied background
/// facts, re-analysed after every addition.
#[derive(Clone, Debug)]
pub struct SessionState {
    pub base: ConstraintModel,
    pub background: Vec<ConstraintInstance>,
    pub history: Vec<HistoryEntry>,
}

impl SessionState {
    pub fn new(base: ConstraintModel) -> Self {
        SessionState {
            base,
            background: Vec::new(),
            history: Vec::new(),
        }
    }

    /// Base model with every background fact added as a removable fact.
    pub fn augmented(&self) -> Result<ConstraintModel, ExplainError> {
        let mut m = self.base.clone();
        for fact in &self.background {
            m.add_constraint(fact.label.clone(), fact.constraint.clone(), Flags::FACT)?;
        }
        Ok(m)
    }

    pub fn next_label(&self) -> Label {
        let mut n = self.background.len() + 1;
        loop {
            let label = Label::new("background", [n]);
            if !self.base.contains_label(&label) {
                return label;
            }
            n += 1;
        }
    }

    pub fn add_background(
        &mut self,
        facts: Vec<ConstraintInstance>,
        config: &ExplainConfig,
    ) -> Result<&Reanalysis, ExplainError> {
        let mut fresh = HashSet::new();
        for fact in &facts {
            let taken = self.base.contains_label(&fact.label)
                || self.background.iter().any(|b| b.label == fact.label)
                || !fresh.insert(fact.label.clone());
            if taken {
                return Err(ExplainError::LabelCollision(fact.label.clone()));
            }
        }
        let added: Vec<Label> = facts.iter().map(|f| f.label.clone()).collect();
        let previous = self.background.len();
        self.background.extend(facts);
        let outcome = match self.reanalyse(config) {
            Ok(outcome) => outcome,
            Err(e) => {
                self.background.truncate(previous);
                return Err(e);
            }
        };
        self.history.push(HistoryEntry { added, outcome });
        Ok(&self.history.last().unwrap().outcome)
    }

    fn reanalyse(&self, config: &ExplainConfig) -> Result<Reanalysis, ExplainError> {
        let model = self.augmented()?;
        let oracle = DecisionOracle::new(&model)?;
        let order: Vec<Label> = model
            .hard
            .iter()
            .map(|c| c.label.clone())
            .filter(|l| model.removable.contains(l))
            .collect();
        let all: BTreeSet<Label> = order.iter().cloned().collect();
        if !decide(&oracle, &all, &config.solve)? {
            return Ok(Reanalysis::Consistent);
        }
        Ok(Reanalysis::Inconsistent(Mus {
            labels: shrink(&oracle, &order, &config.solve)?,
        }))
    }
}
