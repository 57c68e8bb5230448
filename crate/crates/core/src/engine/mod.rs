//! Exact solver: depth-first branch and bound with forward checking.
//!
//! Variables are branched in ascending id order and values in ascending
//! order. Objectives are minimized one level at a time; each level's optimum
//! becomes a cap for the next one and the previous incumbent seeds the next
//! level, so incumbents only ever improve and the returned optimum is the
//! lexicographically smallest optimal assignment.

mod brute;
mod store;

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::model::{validate_model, Assignment, Constraint, ConstraintModel, Defect, Label, ObjectiveVector};
use store::{Compiled, Domains, Prop};

pub use brute::{brute_force, brute_force_decision, search_space, BRUTE_FORCE_LIMIT};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SolveConfig {
    pub time_limit: Duration,
    /// Search-node budget. Unlike the wall-clock limit it stops the search
    /// at the same point on every run, keeping timed-out results
    /// reproducible.
    pub node_limit: Option<u64>,
}

impl SolveConfig {
    pub fn with_secs(secs: f64) -> Self {
        SolveConfig {
            time_limit: Duration::from_secs_f64(secs),
            node_limit: None,
        }
    }

    pub fn with_node_limit(mut self, nodes: Option<u64>) -> Self {
        self.node_limit = nodes;
        self
    }
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig::with_secs(60.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    FeasibleTimeout,
    Unsat,
    UnknownTimeout,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::FeasibleTimeout => "feasible_timeout",
            SolveStatus::Unsat => "unsat",
            SolveStatus::UnknownTimeout => "unknown_timeout",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Solution {
    pub assignment: Assignment,
    pub objective: ObjectiveVector,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SolveStats {
    pub nodes: u64,
    pub wall_ms: u64,
    /// Objective of every incumbent in the order found.
    pub incumbents: Vec<ObjectiveVector>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    pub best: Option<Solution>,
    pub stats: SolveStats,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Decision {
    Sat(Assignment),
    Unsat,
    UnknownTimeout,
}

impl Decision {
    pub fn is_unsat(&self) -> bool {
        matches!(self, Decision::Unsat)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("invalid model: {0:?}")]
    InvalidModel(Vec<Defect>),
    #[error("label `{0}` is not removable")]
    NotRemovable(Label),
    #[error("search space of {0} assignments exceeds the brute-force limit")]
    SpaceTooLarge(u128),
}

/// Finds a lexicographically optimal assignment.
pub fn solve(model: &ConstraintModel, config: &SolveConfig) -> Result<SolveOutcome, EngineError> {
    validate_model(model).map_err(EngineError::InvalidModel)?;
    let compiled = Compiled::new(model);
    let active = vec![true; compiled.n_hard];
    Ok(Search::new(model, &compiled, active, config).optimize())
}

/// Like [`solve`], starting from a known feasible assignment. The hint
/// bounds the search from the outset, so a timed-out solve returns at
/// least the hint, while a completed one still returns the
/// lexicographically smallest optimum. An infeasible hint is ignored.
pub fn solve_from(
    model: &ConstraintModel,
    config: &SolveConfig,
    hint: &Assignment,
) -> Result<SolveOutcome, EngineError> {
    validate_model(model).map_err(EngineError::InvalidModel)?;
    let compiled = Compiled::new(model);
    let active = vec![true; compiled.n_hard];
    let mut search = Search::new(model, &compiled, active, config);
    if hint_is_feasible(model, hint) {
        search.incumbent = Some(Solution {
            objective: model.objective_of(hint.values()),
            assignment: hint.clone(),
        });
        search.incumbent_is_first = false;
    }
    Ok(search.optimize())
}

fn hint_is_feasible(model: &ConstraintModel, hint: &Assignment) -> bool {
    let values = hint.values();
    values.len() == model.vars.len()
        && model
            .vars
            .iter()
            .zip(values)
            .all(|(v, x)| v.domain.binary_search(x).is_ok())
        && model.hard.iter().all(|c| match c.constraint {
            Constraint::CostCap { level, bound } => model.objective_of(values).level(level) <= bound,
            _ => c.constraint.holds(values),
        })
}

/// Satisfiability with removable constraints switched on iff listed in
/// `enabled`. Soft constraints are ignored except through enabled cost caps.
pub fn solve_decision(
    model: &ConstraintModel,
    enabled: &BTreeSet<Label>,
    config: &SolveConfig,
) -> Result<Decision, EngineError> {
    DecisionOracle::new(model)?.query(enabled, config)
}

/// Compiles a model once for repeated assumption queries.
pub struct DecisionOracle<'m> {
    model: &'m ConstraintModel,
    compiled: Compiled,
}

impl<'m> DecisionOracle<'m> {
    pub fn new(model: &'m ConstraintModel) -> Result<Self, EngineError> {
        validate_model(model).map_err(EngineError::InvalidModel)?;
        Ok(DecisionOracle {
            model,
            compiled: Compiled::new(model),
        })
    }

    pub fn model(&self) -> &ConstraintModel {
        self.model
    }

    pub fn query(
        &self,
        enabled: &BTreeSet<Label>,
        config: &SolveConfig,
    ) -> Result<Decision, EngineError> {
        if let Some(stray) = enabled.iter().find(|l| !self.model.removable.contains(*l)) {
            return Err(EngineError::NotRemovable(stray.clone()));
        }
        let active = self
            .model
            .hard
            .iter()
            .zip(&self.compiled.hard_removable)
            .map(|(c, &removable)| !removable || enabled.contains(&c.label))
            .collect();
        Ok(Search::new(self.model, &self.compiled, active, config).decide())
    }
}

enum Flow {
    Continue,
    /// Stop the current descent: either the stage is proven or the first
    /// solution of a decision query was found.
    Done,
    Timeout,
}

struct Search<'a> {
    model: &'a ConstraintModel,
    dom: Domains<'a>,
    bounds: Vec<u64>,
    /// Level being minimized, 1-based; 0 for pure decision.
    level: usize,
    incumbent: Option<Solution>,
    /// Whether the incumbent is the first solution in search order within
    /// its bounds; false for an externally supplied hint.
    incumbent_is_first: bool,
    start: Instant,
    deadline: Instant,
    node_limit: u64,
    stats: SolveStats,
}

impl<'a> Search<'a> {
    fn new(
        model: &'a ConstraintModel,
        compiled: &'a Compiled,
        active: Vec<bool>,
        config: &SolveConfig,
    ) -> Self {
        let mut bounds = vec![u64::MAX; compiled.levels];
        for (cap, &on) in compiled.caps.iter().zip(&active) {
            if let (Some((level, bound)), true) = (cap, on) {
                if let Some(b) = bounds.get_mut(*level as usize - 1) {
                    *b = (*b).min(*bound);
                }
            }
        }
        let start = Instant::now();
        Search {
            model,
            dom: Domains::new(compiled, active),
            bounds,
            level: 0,
            incumbent: None,
            incumbent_is_first: true,
            start,
            deadline: start.checked_add(config.time_limit).unwrap_or(start + Duration::from_secs(86_400 * 365)),
            node_limit: config.node_limit.unwrap_or(u64::MAX),
            stats: SolveStats::default(),
        }
    }

    fn finish(mut self, status: SolveStatus) -> SolveOutcome {
        self.stats.wall_ms = self.start.elapsed().as_millis() as u64;
        let best = match status {
            SolveStatus::Optimal | SolveStatus::FeasibleTimeout => self.incumbent.take(),
            _ => None,
        };
        SolveOutcome {
            status,
            best,
            stats: self.stats,
        }
    }

    fn decide(mut self) -> Decision {
        self.level = 0;
        match self.stage() {
            Flow::Timeout => Decision::UnknownTimeout,
            _ => match self.incumbent {
                Some(s) => Decision::Sat(s.assignment),
                None => Decision::Unsat,
            },
        }
    }

    fn optimize(mut self) -> SolveOutcome {
        let levels = self.bounds.len();
        if levels == 0 {
            self.level = 0;
            return match self.stage() {
                Flow::Timeout => self.finish(SolveStatus::UnknownTimeout),
                _ if self.incumbent.is_some() => self.finish(SolveStatus::Optimal),
                _ => self.finish(SolveStatus::Unsat),
            };
        }
        for level in 1..=levels {
            self.level = level;
            if let Some(inc) = &self.incumbent {
                let cost = inc.objective.level(level as u32);
                if !self.incumbent_is_first {
                    // Admit equal-cost solutions so the search can replace
                    // the hint with the first one in search order.
                    self.bounds[level - 1] = cost;
                } else if cost == 0 {
                    self.bounds[level - 1] = 0;
                    continue;
                } else {
                    self.bounds[level - 1] = cost - 1;
                }
            }
            let flow = self.stage();
            if let Flow::Timeout = flow {
                return if self.incumbent.is_some() {
                    self.finish(SolveStatus::FeasibleTimeout)
                } else {
                    self.finish(SolveStatus::UnknownTimeout)
                };
            }
            match &self.incumbent {
                None => return self.finish(SolveStatus::Unsat),
                Some(inc) => self.bounds[level - 1] = inc.objective.level(level as u32),
            }
        }
        self.finish(SolveStatus::Optimal)
    }

    /// One full depth-first descent from the root under the current bounds.
    fn stage(&mut self) -> Flow {
        self.dom.undo_to(0);
        self.dom.enqueue_all();
        if self.propagate().is_err() {
            self.dom.undo_to(0);
            return Flow::Continue;
        }
        let flow = self.dfs(0);
        self.dom.undo_to(0);
        flow
    }

    fn bounded(&self) -> bool {
        self.bounds.iter().any(|&b| b != u64::MAX)
    }

    /// Propagation fixpoint including cost reasoning on bounded levels.
    fn propagate(&mut self) -> Prop {
        loop {
            self.dom.fixpoint()?;
            if !self.bounded() {
                return Ok(());
            }
            let c = self.dom.c;
            let mut lb = vec![0u64; self.bounds.len()];
            let n_soft = c.soft_level.len();
            for s in 0..n_soft {
                let level = c.soft_level[s] as usize - 1;
                if self.bounds[level] == u64::MAX {
                    continue;
                }
                if self.dom.status(c.n_hard + s) == Some(false) {
                    lb[level] += c.soft_weight[s];
                }
            }
            if lb.iter().zip(&self.bounds).any(|(l, b)| l > b) {
                return Err(store::Conflict);
            }
            let mut forced_any = false;
            for s in 0..n_soft {
                let level = c.soft_level[s] as usize - 1;
                let bound = self.bounds[level];
                if bound == u64::MAX || self.dom.forced[s] {
                    continue;
                }
                if lb[level].saturating_add(c.soft_weight[s]) > bound
                    && self.dom.status(c.n_hard + s).is_none()
                {
                    self.dom.force_soft(s);
                    forced_any = true;
                }
            }
            if !forced_any {
                return Ok(());
            }
        }
    }

    fn dfs(&mut self, from: usize) -> Flow {
        let nvars = self.dom.c.nvars;
        let Some(var) = (from..nvars).find(|&v| self.dom.size[v] > 1) else {
            return self.leaf();
        };
        for idx in self.dom.alive(var) {
            self.stats.nodes += 1;
            if self.stats.nodes > self.node_limit || Instant::now() >= self.deadline {
                return Flow::Timeout;
            }
            let mark = self.dom.mark();
            let ok = self.dom.fix(var, idx).is_ok() && self.propagate().is_ok();
            let flow = if ok { self.dfs(var + 1) } else { Flow::Continue };
            self.dom.undo_to(mark);
            match flow {
                Flow::Continue => {}
                other => return other,
            }
        }
        Flow::Continue
    }

    fn leaf(&mut self) -> Flow {
        let values: Vec<i64> = (0..self.dom.c.nvars).map(|v| self.dom.value(v)).collect();
        debug_assert!(self
            .model
            .hard
            .iter()
            .zip(&self.dom.active)
            .all(|(c, &on)| !on || c.constraint.holds(&values)));
        let objective = self.model.objective_of(&values);
        self.stats.incumbents.push(objective.clone());
        let done = if self.level == 0 {
            true
        } else {
            let cost = objective.level(self.level as u32);
            if cost == 0 {
                true
            } else {
                self.bounds[self.level - 1] = cost - 1;
                false
            }
        };
        self.incumbent = Some(Solution {
            assignment: Assignment(values),
            objective,
        });
        self.incumbent_is_first = true;
        if done {
            Flow::Done
        } else {
            Flow::Continue
        }
    }
}
