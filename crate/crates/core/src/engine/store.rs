//! Compiled constraints over bitset domains with a backtracking trail.

use crate::model::{Constraint, ConstraintModel, Lit};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Conflict;

pub(crate) type Prop<T = ()> = Result<T, Conflict>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Truth {
    True,
    False,
    Unknown,
}

impl Truth {
    fn negate(self) -> Truth {
        match self {
            Truth::True => Truth::False,
            Truth::False => Truth::True,
            Truth::Unknown => Truth::Unknown,
        }
    }
}

/// Watch marker for propagators that react to any domain change.
const ALWAYS: u32 = u32::MAX;

#[derive(Clone, Copy, Debug)]
pub(crate) struct CLit {
    pub var: u32,
    pub mask: u32,
    /// Words `lo..hi` hold every set bit of the mask.
    pub lo: u16,
    pub hi: u16,
}

#[derive(Clone, Debug)]
pub(crate) enum CCons {
    /// `lower ≤ Σ coef·[lit] ≤ upper`.
    Pb {
        lits: Vec<CLit>,
        coefs: Vec<u64>,
        upper: i128,
        lower: i128,
    },
    Ord {
        x: u32,
        y: u32,
        offset: i64,
    },
    /// Disjunction of (possibly negated) literals.
    Clause { lits: Vec<(CLit, bool)> },
    Cap,
}

pub(crate) struct Compiled {
    pub nvars: usize,
    pub values: Vec<Vec<i64>>,
    pub offs: Vec<usize>,
    pub nwords: Vec<usize>,
    pub init_words: Vec<u64>,
    pub init_size: Vec<u32>,
    pub masks: Vec<u64>,
    /// Hard constraints first, then soft ones.
    pub cons: Vec<CCons>,
    pub n_hard: usize,
    /// Per variable: constraints to wake, with the literal mask whose truth
    /// change matters (`ALWAYS` for bound-based propagators).
    pub watch: Vec<Vec<(u32, u32)>>,
    /// Literals referenced from `watch`.
    pub watch_lits: Vec<CLit>,
    pub hard_removable: Vec<bool>,
    pub caps: Vec<Option<(u32, u64)>>,
    pub soft_level: Vec<u32>,
    pub soft_weight: Vec<u64>,
    pub levels: usize,
}

impl Compiled {
    pub fn new(model: &ConstraintModel) -> Self {
        let nvars = model.vars.len();
        let mut values = Vec::with_capacity(nvars);
        let mut offs = Vec::with_capacity(nvars);
        let mut nwords = Vec::with_capacity(nvars);
        let mut init_words = Vec::new();
        let mut init_size = Vec::with_capacity(nvars);
        for var in &model.vars {
            let n = var.domain.len();
            let w = n.div_ceil(64);
            offs.push(init_words.len());
            nwords.push(w);
            for i in 0..w {
                let bits = (n - i * 64).min(64);
                init_words.push(if bits == 64 { u64::MAX } else { (1u64 << bits) - 1 });
            }
            init_size.push(n as u32);
            values.push(var.domain.clone());
        }
        let mut compiled = Compiled {
            nvars,
            values,
            offs,
            nwords,
            init_words,
            init_size,
            masks: Vec::new(),
            cons: Vec::new(),
            n_hard: model.hard.len(),
            watch: vec![Vec::new(); nvars],
            watch_lits: Vec::new(),
            hard_removable: Vec::new(),
            caps: Vec::new(),
            soft_level: Vec::new(),
            soft_weight: Vec::new(),
            levels: model.objective_len(),
        };
        for hard in &model.hard {
            let c = compiled.compile(&hard.constraint);
            compiled.hard_removable.push(model.removable.contains(&hard.label));
            compiled.caps.push(match hard.constraint {
                Constraint::CostCap { level, bound } => Some((level, bound)),
                _ => None,
            });
            compiled.push(c);
        }
        for soft in &model.soft {
            let c = compiled.compile(&soft.constraint);
            compiled.soft_level.push(soft.level);
            compiled.soft_weight.push(soft.weight);
            compiled.push(c);
        }
        compiled
    }

    fn push(&mut self, c: CCons) {
        let id = self.cons.len() as u32;
        let mut lits: Vec<CLit> = match &c {
            CCons::Pb { lits, .. } => lits.clone(),
            CCons::Clause { lits } => lits.iter().map(|(l, _)| *l).collect(),
            CCons::Ord { x, y, .. } => {
                self.watch[*x as usize].push((id, ALWAYS));
                self.watch[*y as usize].push((id, ALWAYS));
                Vec::new()
            }
            CCons::Cap => Vec::new(),
        };
        lits.sort_unstable_by_key(|l| (l.var, l.mask));
        lits.dedup_by_key(|l| (l.var, l.mask));
        for lit in lits {
            let at = self.watch_lits.len() as u32;
            self.watch_lits.push(lit);
            self.watch[lit.var as usize].push((id, at));
        }
        self.cons.push(c);
    }

    fn lit(&mut self, lit: &Lit) -> CLit {
        let var = lit.var;
        let mask = self.masks.len();
        self.masks.extend(std::iter::repeat_n(0, self.nwords[var]));
        let (mut lo, mut hi) = (usize::MAX, 0);
        for value in &lit.values {
            if let Ok(idx) = self.values[var].binary_search(value) {
                self.masks[mask + idx / 64] |= 1u64 << (idx % 64);
                lo = lo.min(idx / 64);
                hi = hi.max(idx / 64 + 1);
            }
        }
        CLit {
            var: var as u32,
            mask: mask as u32,
            lo: lo.min(hi) as u16,
            hi: hi as u16,
        }
    }

    fn compile(&mut self, constraint: &Constraint) -> CCons {
        let card = |this: &mut Self, lits: &[Lit], upper: i128, lower: i128| CCons::Pb {
            lits: lits.iter().map(|l| this.lit(l)).collect(),
            coefs: vec![1; lits.len()],
            upper,
            lower,
        };
        match constraint {
            Constraint::ExactlyOne(lits) => card(self, lits, 1, 1),
            Constraint::AtMostOne(lits) => card(self, lits, 1, i128::MIN),
            Constraint::AtMostKCount { lits, k } => card(self, lits, *k as i128, i128::MIN),
            Constraint::LinearLeq { terms, bound } => CCons::Pb {
                lits: terms.iter().map(|(l, _)| self.lit(l)).collect(),
                coefs: terms.iter().map(|(_, c)| *c).collect(),
                upper: *bound as i128,
                lower: i128::MIN,
            },
            Constraint::Ordering {
                before,
                after,
                offset,
            } => CCons::Ord {
                x: *before as u32,
                y: *after as u32,
                offset: *offset,
            },
            Constraint::Implication {
                premises,
                conclusion,
            } => {
                let mut lits: Vec<(CLit, bool)> =
                    premises.iter().map(|p| (self.lit(p), false)).collect();
                lits.push((self.lit(conclusion), true));
                CCons::Clause { lits }
            }
            Constraint::Forbid(lits) => CCons::Clause {
                lits: lits.iter().map(|l| (self.lit(l), false)).collect(),
            },
            Constraint::CostCap { .. } => CCons::Cap,
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Undo {
    Word(u32, u64),
    Size(u32, u32),
    Forced(u32),
}

/// Mutable domains plus propagation queue.
pub(crate) struct Domains<'c> {
    pub c: &'c Compiled,
    pub words: Vec<u64>,
    pub size: Vec<u32>,
    trail: Vec<Undo>,
    pub forced: Vec<bool>,
    queue: Vec<u32>,
    in_queue: Vec<bool>,
    pub active: Vec<bool>,
    /// Pre-change words of the variable being filtered.
    before: Vec<u64>,
}

impl<'c> Domains<'c> {
    pub fn new(c: &'c Compiled, active: Vec<bool>) -> Self {
        Domains {
            c,
            words: c.init_words.clone(),
            size: c.init_size.clone(),
            trail: Vec::new(),
            forced: vec![false; c.cons.len() - c.n_hard],
            queue: Vec::new(),
            in_queue: vec![false; c.cons.len()],
            active,
            before: Vec::new(),
        }
    }

    pub fn mark(&self) -> usize {
        self.trail.len()
    }

    pub fn undo_to(&mut self, mark: usize) {
        while self.trail.len() > mark {
            match self.trail.pop().unwrap() {
                Undo::Word(i, w) => self.words[i as usize] = w,
                Undo::Size(v, s) => self.size[v as usize] = s,
                Undo::Forced(s) => self.forced[s as usize] = false,
            }
        }
        for &ci in &self.queue {
            self.in_queue[ci as usize] = false;
        }
        self.queue.clear();
    }

    pub fn enqueue(&mut self, ci: u32) {
        if !self.in_queue[ci as usize] {
            self.in_queue[ci as usize] = true;
            self.queue.push(ci);
        }
    }

    pub fn enqueue_all(&mut self) {
        for ci in 0..self.c.cons.len() as u32 {
            self.enqueue(ci);
        }
    }

    pub fn force_soft(&mut self, soft: usize) {
        self.forced[soft] = true;
        self.trail.push(Undo::Forced(soft as u32));
        self.enqueue((self.c.n_hard + soft) as u32);
    }

    fn is_active(&self, ci: usize) -> bool {
        if ci < self.c.n_hard {
            self.active[ci]
        } else {
            self.forced[ci - self.c.n_hard]
        }
    }

    pub fn first(&self, var: usize) -> Option<usize> {
        let o = self.c.offs[var];
        (0..self.c.nwords[var]).find_map(|w| {
            let word = self.words[o + w];
            (word != 0).then(|| w * 64 + word.trailing_zeros() as usize)
        })
    }

    pub fn last(&self, var: usize) -> Option<usize> {
        let o = self.c.offs[var];
        (0..self.c.nwords[var]).rev().find_map(|w| {
            let word = self.words[o + w];
            (word != 0).then(|| w * 64 + 63 - word.leading_zeros() as usize)
        })
    }

    pub fn alive(&self, var: usize) -> Vec<usize> {
        let o = self.c.offs[var];
        let mut out = Vec::with_capacity(self.size[var] as usize);
        for w in 0..self.c.nwords[var] {
            let mut word = self.words[o + w];
            while word != 0 {
                out.push(w * 64 + word.trailing_zeros() as usize);
                word &= word - 1;
            }
        }
        out
    }

    pub fn value(&self, var: usize) -> i64 {
        self.c.values[var][self.first(var).expect("value of an empty domain")]
    }

    pub fn truth(&self, lit: CLit) -> Truth {
        let o = self.c.offs[lit.var as usize];
        let m = lit.mask as usize;
        let mut inside = 0;
        for w in lit.lo as usize..lit.hi as usize {
            inside += (self.words[o + w] & self.c.masks[m + w]).count_ones();
        }
        if inside == 0 {
            Truth::False
        } else if inside == self.size[lit.var as usize] {
            Truth::True
        } else {
            Truth::Unknown
        }
    }

    /// Intersects the domain with `keep`; `keep` is produced word by word.
    fn filter(&mut self, var: usize, keep: impl Fn(usize) -> u64) -> Prop<bool> {
        let c = self.c;
        let o = c.offs[var];
        let n = c.nwords[var];
        let mut changed = false;
        let mut size = 0u32;
        self.before.clear();
        for w in 0..n {
            let old = self.words[o + w];
            self.before.push(old);
            let new = old & keep(w);
            if new != old {
                self.trail.push(Undo::Word((o + w) as u32, old));
                self.words[o + w] = new;
                changed = true;
            }
            size += new.count_ones();
        }
        if changed {
            let old_size = self.size[var];
            self.trail.push(Undo::Size(var as u32, old_size));
            self.size[var] = size;
            if size == 0 {
                return Err(Conflict);
            }
            for &(ci, lit) in &c.watch[var] {
                if lit == ALWAYS || self.truth_changed(o, c.watch_lits[lit as usize], old_size, size) {
                    self.enqueue(ci);
                }
            }
        }
        Ok(changed)
    }

    /// Whether the literal with `mask` was undecided before the current
    /// filter and is decided now.
    fn truth_changed(&self, o: usize, lit: CLit, old_size: u32, size: u32) -> bool {
        let m = lit.mask as usize;
        let (mut before, mut after) = (0, 0);
        for w in lit.lo as usize..lit.hi as usize {
            let mask = self.c.masks[m + w];
            before += (self.before[w] & mask).count_ones();
            after += (self.words[o + w] & mask).count_ones();
        }
        (before > 0 && before < old_size) && (after == 0 || after == size)
    }

    pub fn set_lit(&mut self, lit: CLit, positive: bool) -> Prop<bool> {
        let m = lit.mask as usize;
        let c = self.c;
        let masks = &c.masks;
        if positive {
            self.filter(lit.var as usize, |w| masks[m + w])
        } else {
            self.filter(lit.var as usize, |w| !masks[m + w])
        }
    }

    pub fn fix(&mut self, var: usize, idx: usize) -> Prop<bool> {
        self.filter(var, |w| {
            if w == idx / 64 {
                1u64 << (idx % 64)
            } else {
                0
            }
        })
    }

    fn keep_from(&mut self, var: usize, from: usize) -> Prop<bool> {
        self.filter(var, |w| {
            let lo = w * 64;
            if from <= lo {
                u64::MAX
            } else if from >= lo + 64 {
                0
            } else {
                u64::MAX << (from - lo)
            }
        })
    }

    fn keep_through(&mut self, var: usize, through: usize) -> Prop<bool> {
        self.filter(var, |w| {
            let lo = w * 64;
            if through >= lo + 63 {
                u64::MAX
            } else if through < lo {
                0
            } else {
                u64::MAX >> (63 - (through - lo))
            }
        })
    }

    /// Runs queued propagators to a fixpoint.
    pub fn fixpoint(&mut self) -> Prop {
        while let Some(ci) = self.queue.pop() {
            self.in_queue[ci as usize] = false;
            if !self.is_active(ci as usize) {
                continue;
            }
            if let Err(e) = self.run(ci as usize) {
                self.undo_queue();
                return Err(e);
            }
        }
        Ok(())
    }

    fn undo_queue(&mut self) {
        for &ci in &self.queue {
            self.in_queue[ci as usize] = false;
        }
        self.queue.clear();
    }

    fn run(&mut self, ci: usize) -> Prop {
        let c = self.c;
        match &c.cons[ci] {
            CCons::Pb {
                lits,
                coefs,
                upper,
                lower,
            } => {
                let mut min = 0i128;
                let mut max = 0i128;
                let mut unknown: Vec<usize> = Vec::new();
                for (i, lit) in lits.iter().enumerate() {
                    let coef = coefs[i] as i128;
                    match self.truth(*lit) {
                        Truth::True => {
                            min += coef;
                            max += coef;
                        }
                        Truth::Unknown => {
                            max += coef;
                            unknown.push(i);
                        }
                        Truth::False => {}
                    }
                }
                if min > *upper || max < *lower {
                    return Err(Conflict);
                }
                for i in unknown {
                    let coef = coefs[i] as i128;
                    if coef == 0 {
                        continue;
                    }
                    if min + coef > *upper {
                        self.set_lit(lits[i], false)?;
                    } else if max - coef < *lower {
                        self.set_lit(lits[i], true)?;
                    }
                }
                Ok(())
            }
            CCons::Ord { x, y, offset } => {
                let (x, y) = (*x as usize, *y as usize);
                let min_x = c.values[x][self.first(x).ok_or(Conflict)?];
                let threshold = min_x + offset;
                let from = c.values[y].partition_point(|&v| v < threshold);
                self.keep_from(y, from)?;
                let max_y = c.values[y][self.last(y).ok_or(Conflict)?];
                let limit = max_y - offset;
                let upto = c.values[x].partition_point(|&v| v <= limit);
                if upto == 0 {
                    return Err(Conflict);
                }
                self.keep_through(x, upto - 1)?;
                Ok(())
            }
            CCons::Clause { lits } => {
                let mut open = None;
                let mut n_open = 0;
                for &(lit, positive) in lits {
                    let t = self.truth(lit);
                    let t = if positive { t } else { t.negate() };
                    match t {
                        Truth::True => return Ok(()),
                        Truth::Unknown => {
                            n_open += 1;
                            open = Some((lit, positive));
                        }
                        Truth::False => {}
                    }
                }
                match (n_open, open) {
                    (0, _) => Err(Conflict),
                    (1, Some((lit, positive))) => self.set_lit(lit, positive).map(|_| ()),
                    _ => Ok(()),
                }
            }
            CCons::Cap => Ok(()),
        }
    }

    /// Entailment status of constraint `ci`: `Some(true)` satisfied in every
    /// completion, `Some(false)` violated in every completion.
    pub fn status(&self, ci: usize) -> Option<bool> {
        let c = self.c;
        match &c.cons[ci] {
            CCons::Pb {
                lits,
                coefs,
                upper,
                lower,
            } => {
                let mut min = 0i128;
                let mut max = 0i128;
                for (lit, coef) in lits.iter().zip(coefs) {
                    match self.truth(*lit) {
                        Truth::True => {
                            min += *coef as i128;
                            max += *coef as i128;
                        }
                        Truth::Unknown => max += *coef as i128,
                        Truth::False => {}
                    }
                }
                if min > *upper || max < *lower {
                    Some(false)
                } else if max <= *upper && min >= *lower {
                    Some(true)
                } else {
                    None
                }
            }
            CCons::Ord { x, y, offset } => {
                let (x, y) = (*x as usize, *y as usize);
                let (fx, lx, fy, ly) = (self.first(x)?, self.last(x)?, self.first(y)?, self.last(y)?);
                if c.values[x][fx] + offset > c.values[y][ly] {
                    Some(false)
                } else if c.values[x][lx] + offset <= c.values[y][fy] {
                    Some(true)
                } else {
                    None
                }
            }
            CCons::Clause { lits } => {
                let mut open = false;
                for &(lit, positive) in lits {
                    let t = self.truth(lit);
                    let t = if positive { t } else { t.negate() };
                    match t {
                        Truth::True => return Some(true),
                        Truth::Unknown => open = true,
                        Truth::False => {}
                    }
                }
                if open {
                    None
                } else {
                    Some(false)
                }
            }
            CCons::Cap => Some(true),
        }
    }
}
