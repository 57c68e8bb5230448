//! Kind-independent glue: encode an instance, solve it (optionally with
//! user background facts), decode and verify the result, and run the
//! explanation queries in domain terms.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::baseline::{greedy_cts, greedy_ors};
use crate::cts::{decode_cts, encode_cts, verify_cts, CtsTable};
use crate::domain::{InstanceError, Verification};
use crate::engine::{
    solve, solve_decision, solve_from, Decision, EngineError, Solution, SolveConfig, SolveOutcome,
    SolveStatus,
};
use crate::explain::{
    contrast, extract_mus, justify, parse_atom, parse_fact, verify_mus, ContrastResult,
    ExplainConfig, ExplainError, JustificationGraph, Mus, SessionState,
};
use crate::io::{
    contrast_doc, justification_doc, mus_doc, ExplanationDoc, Instance, ProblemKind, Schedule,
    SolutionDoc,
};
use crate::model::{
    Assignment, Constraint, ConstraintInstance, ConstraintModel, Flags, Label, Lit, ModelError,
    VarId,
};
use crate::ors::{decode_ors, encode_ors, verify_ors, OrsTable};
use crate::poac::{decode_poac, encode_poac, verify_poac, PoacTable};

/// Node budget for completing a greedy schedule into a full assignment;
/// with the primary variables fixed, propagation does nearly all the work.
const HINT_NODES: u64 = 100_000;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid instance: {0}")]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Explain(#[from] ExplainError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("schedule is for a {found} instance, expected {expected}")]
    KindMismatch { expected: ProblemKind, found: ProblemKind },
    #[error("the instance is unsatisfiable; nothing to explain about a solution")]
    Unsat,
    #[error("no solution was found within the limits")]
    NoSolution,
    #[error("the solve stopped before proving optimality; explanations need an optimal solution")]
    NotOptimal,
}

#[derive(Clone, Debug)]
enum Table {
    Cts(CtsTable),
    Ors(OrsTable),
    Poac(PoacTable),
}

/// An encoded instance, ready for solving and decoding.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub instance: Instance,
    pub model: ConstraintModel,
    table: Table,
}

impl Prepared {
    pub fn new(instance: &Instance) -> Result<Self, PipelineError> {
        let (model, table) = match instance {
            Instance::Cts(i) => {
                let e = encode_cts(i)?;
                (e.model, Table::Cts(e.table))
            }
            Instance::Ors(i) => {
                let e = encode_ors(i)?;
                (e.model, Table::Ors(e.table))
            }
            Instance::Poac(i) => {
                let e = encode_poac(i)?;
                (e.model, Table::Poac(e.table))
            }
        };
        Ok(Prepared {
            instance: instance.clone(),
            model,
            table,
        })
    }

    /// Encodes and appends background facts such as `start(p1,2)!=3`.
    pub fn with_background(instance: &Instance, facts: &[String]) -> Result<Self, PipelineError> {
        let mut prepared = Prepared::new(instance)?;
        for fact in background_facts(&prepared.model, facts)? {
            prepared.model.add_constraint(fact.label, fact.constraint, Flags::FACT)?;
        }
        Ok(prepared)
    }

    pub fn kind(&self) -> ProblemKind {
        self.instance.kind()
    }

    pub fn decode(&self, solution: &Solution) -> Result<Schedule, PipelineError> {
        Ok(match (&self.instance, &self.table) {
            (Instance::Cts(i), Table::Cts(t)) => Schedule::Cts(decode_cts(i, t, solution)?),
            (Instance::Ors(i), Table::Ors(t)) => Schedule::Ors(decode_ors(i, t, solution)?),
            (Instance::Poac(i), Table::Poac(t)) => Schedule::Poac(decode_poac(i, t, solution)?),
            _ => unreachable!("table built from the same instance"),
        })
    }

    /// Exact solve, warm-started from the greedy schedule when that one is
    /// feasible. The greedy time counts against the limit.
    pub fn solve(&self, config: &SolveConfig) -> Result<SolveReport, PipelineError> {
        let started = Instant::now();
        let outcome = match self.greedy_hint(config) {
            Some(hint) => {
                let mut rest = config.clone();
                rest.time_limit = config.time_limit.saturating_sub(started.elapsed());
                solve_from(&self.model, &rest, &hint)?
            }
            None => solve(&self.model, config)?,
        };
        let schedule = outcome.best.as_ref().map(|b| self.decode(b)).transpose()?;
        Ok(SolveReport { outcome, schedule })
    }

    /// Full assignment matching the greedy schedule, auxiliary variables
    /// filled in by a decision query with the primary variables fixed.
    fn greedy_hint(&self, config: &SolveConfig) -> Option<Assignment> {
        let fixed: Vec<(VarId, i64)> = match (&self.instance, &self.table) {
            (Instance::Cts(i), Table::Cts(t)) => {
                let report = greedy_cts(i);
                if !report.feasible {
                    return None;
                }
                let mut fixed = Vec::new();
                for (a, pv) in report.schedule.patients.iter().zip(&t.patients) {
                    let r = i.resources.iter().position(|r| r.id == a.resource)?;
                    let rank = pv.ranking.iter().position(|&x| x == r)?;
                    fixed.extend(pv.starts.iter().zip(a.starts).map(|(&v, s)| (v, s as i64)));
                    fixed.push((pv.resource, rank as i64));
                }
                fixed
            }
            (Instance::Ors(i), Table::Ors(t)) => {
                let report = greedy_ors(i);
                if !report.feasible {
                    return None;
                }
                let mut fixed = Vec::new();
                for (a, &var) in report.schedule.registrations.iter().zip(&t.assign) {
                    let value = match &a.shift {
                        Some(id) => i.shifts.iter().position(|s| &s.id == id)? as i64,
                        None => t.unassigned_value,
                    };
                    fixed.push((var, value));
                }
                fixed
            }
            _ => return None,
        };
        let mut pinned = self.model.clone();
        for (n, (var, value)) in fixed.into_iter().enumerate() {
            if pinned.vars[var].domain.binary_search(&value).is_err() {
                return None;
            }
            let conclusion = Lit::eq(var, value);
            let label = Label::new("greedy-hint", [n]);
            let unit = Constraint::Implication { premises: vec![], conclusion };
            pinned.add_constraint(label, unit, Flags::NONE).ok()?;
        }
        let limit = SolveConfig {
            time_limit: config.time_limit.min(Duration::from_secs(1)),
            node_limit: Some(HINT_NODES),
        };
        match solve_decision(&pinned, &BTreeSet::new(), &limit).ok()? {
            Decision::Sat(assignment) => Some(assignment),
            _ => None,
        }
    }

    /// Solves and insists on a proven optimum, as explanations require.
    pub fn optimal(&self, config: &SolveConfig) -> Result<Solution, PipelineError> {
        let report = self.solve(config)?;
        match report.outcome.status {
            SolveStatus::Optimal => Ok(report.outcome.best.expect("optimal has a solution")),
            SolveStatus::Unsat => Err(PipelineError::Unsat),
            SolveStatus::FeasibleTimeout => Err(PipelineError::NotOptimal),
            SolveStatus::UnknownTimeout => Err(PipelineError::NoSolution),
        }
    }

    pub fn explain_unsat(&self, config: &ExplainConfig) -> Result<(Mus, ExplanationDoc), PipelineError> {
        let mus = extract_mus(&self.model, config)?;
        let doc = mus_doc(self.kind(), &self.model, &mus);
        Ok((mus, doc))
    }

    pub fn verify_mus(&self, mus: &Mus, config: &ExplainConfig) -> Result<bool, PipelineError> {
        Ok(verify_mus(&self.model, mus, config)?)
    }

    /// Justifies `name=value` atoms of the optimal solution.
    pub fn explain_why(
        &self,
        atoms: &[String],
        config: &ExplainConfig,
    ) -> Result<(Solution, JustificationGraph, ExplanationDoc), PipelineError> {
        let targets = atoms
            .iter()
            .map(|a| parse_atom(&self.model, a))
            .collect::<Result<Vec<_>, _>>()?;
        let solution = self.optimal(&config.solve)?;
        let graph = justify(&self.model, &solution, &targets, config)?;
        let doc = justification_doc(self.kind(), &self.model, &graph);
        Ok((solution, graph, doc))
    }

    /// Answers "why `a` rather than `b`" against the optimal solution.
    pub fn explain_contrast(
        &self,
        a: &str,
        b: &str,
        config: &ExplainConfig,
    ) -> Result<(ContrastResult, ExplanationDoc), PipelineError> {
        let a = parse_atom(&self.model, a)?;
        let b = parse_atom(&self.model, b)?;
        let solution = self.optimal(&config.solve)?;
        let result = contrast(&self.model, &solution, a, b, config)?;
        let doc = contrast_doc(self.kind(), &self.model, &result);
        Ok((result, doc))
    }
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub outcome: SolveOutcome,
    pub schedule: Option<Schedule>,
}

impl SolveReport {
    pub fn document(&self) -> Option<SolutionDoc> {
        self.schedule.clone().map(|schedule| SolutionDoc {
            status: self.outcome.status,
            schedule,
        })
    }
}

/// Parses background fact lines into labelled constraints `background(n)`,
/// numbered from 1 in order.
pub fn background_facts(
    model: &ConstraintModel,
    facts: &[String],
) -> Result<Vec<ConstraintInstance>, PipelineError> {
    facts
        .iter()
        .enumerate()
        .map(|(i, text)| Ok(parse_fact(model, Label::new("background", [i + 1]), text)?))
        .collect()
}

/// Replays background fact lines through an explanation session, one
/// re-analysis per line.
pub fn replay_session(
    instance: &Instance,
    facts: &[String],
    config: &ExplainConfig,
) -> Result<SessionState, PipelineError> {
    let prepared = Prepared::new(instance)?;
    let mut session = SessionState::new(prepared.model);
    for text in facts {
        let label = session.next_label();
        let fact = parse_fact(&session.base, label, text)?;
        session.add_background(vec![fact], config)?;
    }
    Ok(session)
}

/// Independent re-check of a schedule against its instance.
pub fn verify_schedule(instance: &Instance, schedule: &Schedule) -> Result<Verification, PipelineError> {
    Ok(match (instance, schedule) {
        (Instance::Cts(i), Schedule::Cts(s)) => verify_cts(i, s)?,
        (Instance::Ors(i), Schedule::Ors(s)) => verify_ors(i, s)?,
        (Instance::Poac(i), Schedule::Poac(s)) => verify_poac(i, s)?,
        _ => {
            return Err(PipelineError::KindMismatch {
                expected: instance.kind(),
                found: schedule.kind(),
            })
        }
    })
}

/// Greedy reference schedule, where one exists for the kind.
pub fn greedy(instance: &Instance) -> Option<(Schedule, u32)> {
    match instance {
        Instance::Cts(i) => {
            let r = greedy_cts(i);
            Some((Schedule::Cts(r.schedule), r.virtual_resources))
        }
        Instance::Ors(i) => {
            let r = greedy_ors(i);
            Some((Schedule::Ors(r.schedule), r.virtual_resources))
        }
        Instance::Poac(_) => None,
    }
}
