//! Exhaustive enumeration oracle. Shares no code with the search beyond the
//! model's own constraint semantics.

use std::collections::BTreeSet;

use super::{Decision, EngineError, Solution, SolveOutcome, SolveStats, SolveStatus};
use crate::model::{check_assignment, validate_model, Assignment, ConstraintModel, Label};

pub const BRUTE_FORCE_LIMIT: u128 = 1_000_000;

/// Product of domain sizes.
pub fn search_space(model: &ConstraintModel) -> u128 {
    model
        .vars
        .iter()
        .map(|v| v.domain.len() as u128)
        .fold(1u128, |acc, n| acc.saturating_mul(n))
}

fn enumerate(
    model: &ConstraintModel,
    mut visit: impl FnMut(&Assignment) -> bool,
) -> Result<u64, EngineError> {
    validate_model(model).map_err(EngineError::InvalidModel)?;
    let space = search_space(model);
    if space > BRUTE_FORCE_LIMIT {
        return Err(EngineError::SpaceTooLarge(space));
    }
    let n = model.vars.len();
    let mut idx = vec![0usize; n];
    let mut current = Assignment(model.vars.iter().map(|v| v.domain[0]).collect());
    let mut count = 0u64;
    loop {
        count += 1;
        if !visit(&current) {
            return Ok(count);
        }
        // Odometer with the last variable fastest: lexicographic order.
        let mut pos = n;
        loop {
            if pos == 0 {
                return Ok(count);
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < model.vars[pos].domain.len() {
                current.0[pos] = model.vars[pos].domain[idx[pos]];
                break;
            }
            idx[pos] = 0;
            current.0[pos] = model.vars[pos].domain[0];
        }
    }
}

/// Lexicographically smallest optimal assignment by full enumeration.
pub fn brute_force(model: &ConstraintModel) -> Result<SolveOutcome, EngineError> {
    let mut best: Option<Solution> = None;
    let nodes = enumerate(model, |a| {
        let report = check_assignment(model, a).expect("enumerated assignments are total");
        if report.violations.is_empty()
            && best.as_ref().is_none_or(|b| report.objective < b.objective)
        {
            best = Some(Solution {
                assignment: a.clone(),
                objective: report.objective,
            });
        }
        true
    })?;
    Ok(SolveOutcome {
        status: if best.is_some() {
            SolveStatus::Optimal
        } else {
            SolveStatus::Unsat
        },
        best,
        stats: SolveStats {
            nodes,
            ..SolveStats::default()
        },
    })
}

/// Enumeration counterpart of `solve_decision`: removable constraints count
/// only when enabled; soft constraints only through enabled cost caps.
pub fn brute_force_decision(
    model: &ConstraintModel,
    enabled: &BTreeSet<Label>,
) -> Result<Decision, EngineError> {
    if let Some(stray) = enabled.iter().find(|l| !model.removable.contains(*l)) {
        return Err(EngineError::NotRemovable(stray.clone()));
    }
    let mut found = None;
    enumerate(model, |a| {
        let report = check_assignment(model, a).expect("enumerated assignments are total");
        let ok = report
            .violations
            .iter()
            .all(|l| model.removable.contains(l) && !enabled.contains(l));
        if ok {
            found = Some(a.clone());
        }
        !ok
    })?;
    Ok(match found {
        Some(a) => Decision::Sat(a),
        None => Decision::Unsat,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Constraint, Flags, Lit};

    #[test]
    fn empty_model_is_optimal() {
        let out = brute_force(&ConstraintModel::new()).unwrap();
        assert_eq!(out.status, SolveStatus::Optimal);
        assert_eq!(out.best.unwrap().assignment.0, Vec::<i64>::new());
    }

    #[test]
    fn guard_rejects_large_spaces() {
        let mut m = ConstraintModel::new();
        for i in 0..21 {
            m.add_var(Label::new("b", [i]), vec![0, 1]).unwrap();
        }
        assert_eq!(
            brute_force(&m).unwrap_err(),
            EngineError::SpaceTooLarge(1 << 21)
        );
    }

    #[test]
    fn decision_respects_enabled_set() {
        let mut m = ConstraintModel::new();
        let x = m.add_var(Label::atom("x"), vec![0, 1]).unwrap();
        for v in [0, 1] {
            let unit = Constraint::Implication {
                premises: vec![],
                conclusion: Lit::eq(x, v),
            };
            m.add_constraint(Label::new("is", [v]), unit, Flags::REMOVABLE)
                .unwrap();
        }
        let all: BTreeSet<Label> = m.removable.clone();
        assert_eq!(brute_force_decision(&m, &all).unwrap(), Decision::Unsat);
        let one: BTreeSet<Label> = [Label::new("is", [1])].into();
        assert_eq!(
            brute_force_decision(&m, &one).unwrap(),
            Decision::Sat(Assignment(vec![1]))
        );
    }
}
