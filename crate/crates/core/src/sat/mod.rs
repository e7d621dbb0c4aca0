//! CDCL SAT solver with assumptions and DRUP proof logging.
//!
//! A [`Solver`] is an incremental session over a fixed formula. Each call to
//! [`Solver::solve`] takes a set of assumption literals. UNSAT answers carry a
//! self-contained proof: the session's full add/delete history followed by
//! the empty clause. The proof checks against the formula plus one unit
//! clause per assumption, so a checker never needs to know about assumptions.

mod heap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::cnf::{lit_value, CnfFormula, Lit, Var};
use crate::proof::{ClausalProof, ProofStep};
use heap::VarHeap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SolverConfig {
    /// Maximum conflicts per `solve` call; `None` is unbounded.
    pub conflict_budget: Option<u64>,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            conflict_budget: Some(1_000_000),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SolverError {
    #[error("conflict budget of {budget} exceeded")]
    BudgetExceeded { budget: u64 },
    #[error("internal solver error: {0}")]
    Internal(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SolveResult {
    /// `assignment[v]` is the value of variable `v`; slot 0 is unused.
    Sat { assignment: Vec<bool> },
    /// `core` is the subset of the assumptions that was refuted.
    Unsat { proof: ClausalProof, core: Vec<Lit> },
}

impl SolveResult {
    pub fn is_sat(&self) -> bool {
        matches!(self, SolveResult::Sat { .. })
    }
}

/// One-shot solve.
pub fn solve(formula: &CnfFormula, assumptions: &[Lit], config: SolverConfig) -> Result<SolveResult, SolverError> {
    Solver::new(formula, config).solve(assumptions)
}

#[derive(Debug, Clone)]
struct ClauseData {
    lits: Vec<Lit>,
    learnt: bool,
    deleted: bool,
    activity: f64,
}

#[derive(Debug, Clone, Copy)]
struct Watcher {
    clause: usize,
    blocker: Lit,
}

const VAR_DECAY: f64 = 0.95;
const CLAUSE_DECAY: f64 = 0.999;
const RESTART_UNIT: u64 = 100;

/// An incremental CDCL session.
pub struct Solver {
    config: SolverConfig,
    formula: CnfFormula,
    num_vars: usize,
    clauses: Vec<ClauseData>,
    learnts: Vec<usize>,
    /// Indexed by literal code: clauses watching that literal.
    watches: Vec<Vec<Watcher>>,
    /// Per variable (0-based): 1 true, -1 false, 0 unassigned.
    values: Vec<i8>,
    levels: Vec<usize>,
    reasons: Vec<Option<usize>>,
    trail: Vec<Lit>,
    trail_lim: Vec<usize>,
    qhead: usize,
    activity: Vec<f64>,
    var_inc: f64,
    clause_inc: f64,
    polarity: Vec<bool>,
    heap: VarHeap,
    seen: Vec<bool>,
    max_learnts: f64,
    history: Vec<ProofStep>,
    /// Set once the formula itself is refuted.
    refuted: bool,
    total_conflicts: u64,
}

impl Solver {
    pub fn new(formula: &CnfFormula, config: SolverConfig) -> Self {
        let num_vars = formula.num_vars() as usize;
        let mut solver = Solver {
            config,
            formula: formula.clone(),
            num_vars: 0,
            clauses: Vec::new(),
            learnts: Vec::new(),
            watches: Vec::new(),
            values: Vec::new(),
            levels: Vec::new(),
            reasons: Vec::new(),
            trail: Vec::new(),
            trail_lim: Vec::new(),
            qhead: 0,
            activity: Vec::new(),
            var_inc: 1.0,
            clause_inc: 1.0,
            polarity: Vec::new(),
            heap: VarHeap::default(),
            seen: Vec::new(),
            max_learnts: (formula.len() as f64 / 3.0).max(100.0),
            history: Vec::new(),
            refuted: false,
            total_conflicts: 0,
        };
        solver.grow_to(num_vars);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        for v in 0..num_vars {
            // seed-dependent initial order, far below any bumped activity
            solver.activity[v] = rng.random::<f64>() * 1e-6;
            solver.heap.update(v, &solver.activity);
        }
        for clause in formula.clauses() {
            if !solver.add_original(clause) {
                solver.refuted = true;
                break;
            }
        }
        solver
    }

    pub fn formula(&self) -> &CnfFormula {
        &self.formula
    }

    pub fn num_conflicts(&self) -> u64 {
        self.total_conflicts
    }

    fn grow_to(&mut self, n: usize) {
        if n <= self.num_vars {
            return;
        }
        for v in self.num_vars..n {
            self.values.push(0);
            self.levels.push(0);
            self.reasons.push(None);
            self.activity.push(0.0);
            self.polarity.push(false);
            self.seen.push(false);
            self.watches.push(Vec::new());
            self.watches.push(Vec::new());
            self.heap.grow(v + 1);
            self.heap.insert(v, &self.activity);
        }
        self.num_vars = n;
    }

    fn var_of(lit: Lit) -> usize {
        lit.var().index() as usize - 1
    }

    fn value(&self, lit: Lit) -> i8 {
        let v = self.values[Self::var_of(lit)];
        if lit.is_positive() {
            v
        } else {
            -v
        }
    }

    fn level(&self) -> usize {
        self.trail_lim.len()
    }

    /// Adds an input clause at level 0. Returns false if the formula is refuted.
    fn add_original(&mut self, clause: &[Lit]) -> bool {
        let mut lits: Vec<Lit> = clause.to_vec();
        lits.sort_unstable();
        lits.dedup();
        if lits.iter().any(|&l| lits.binary_search(&!l).is_ok()) {
            return true;
        }
        if let Some(max) = lits.iter().map(|l| Self::var_of(*l) + 1).max() {
            self.grow_to(max);
        }
        // drop literals already false at level 0; the checker re-derives those units
        lits.retain(|&l| self.value(l) != -1 || self.levels[Self::var_of(l)] != 0);
        if lits.iter().any(|&l| self.value(l) == 1) {
            return true;
        }
        match lits.len() {
            0 => false,
            1 => {
                self.enqueue(lits[0], None);
                self.propagate().is_none()
            }
            _ => {
                self.attach(ClauseData {
                    lits,
                    learnt: false,
                    deleted: false,
                    activity: 0.0,
                });
                true
            }
        }
    }

    fn attach(&mut self, data: ClauseData) -> usize {
        let id = self.clauses.len();
        let (a, b) = (data.lits[0], data.lits[1]);
        self.watches[(!a).code()].push(Watcher { clause: id, blocker: b });
        self.watches[(!b).code()].push(Watcher { clause: id, blocker: a });
        self.clauses.push(data);
        id
    }

    fn enqueue(&mut self, lit: Lit, reason: Option<usize>) {
        let v = Self::var_of(lit);
        self.values[v] = if lit.is_positive() { 1 } else { -1 };
        self.levels[v] = self.level();
        self.reasons[v] = reason;
        self.trail.push(lit);
    }

    /// Returns the conflicting clause, if any.
    fn propagate(&mut self) -> Option<usize> {
        while self.qhead < self.trail.len() {
            let p = self.trail[self.qhead];
            self.qhead += 1;
            // clauses watching !p, i.e. with a literal that just became false
            let false_lit = !p;
            let mut ws = std::mem::take(&mut self.watches[p.code()]);
            let mut i = 0;
            let mut j = 0;
            let mut conflict = None;
            while i < ws.len() {
                let w = ws[i];
                i += 1;
                if self.clauses[w.clause].deleted {
                    continue;
                }
                if self.value(w.blocker) == 1 {
                    ws[j] = w;
                    j += 1;
                    continue;
                }
                let clause = &mut self.clauses[w.clause].lits;
                if clause[0] == false_lit {
                    clause.swap(0, 1);
                }
                let first = clause[0];
                let watcher = Watcher {
                    clause: w.clause,
                    blocker: first,
                };
                if first != w.blocker && self.value(first) == 1 {
                    ws[j] = watcher;
                    j += 1;
                    continue;
                }
                let mut moved = false;
                for k in 2..self.clauses[w.clause].lits.len() {
                    let lit = self.clauses[w.clause].lits[k];
                    if self.value(lit) != -1 {
                        let clause = &mut self.clauses[w.clause].lits;
                        clause.swap(1, k);
                        self.watches[(!lit).code()].push(watcher);
                        moved = true;
                        break;
                    }
                }
                if moved {
                    continue;
                }
                ws[j] = watcher;
                j += 1;
                match self.value(first) {
                    -1 => {
                        conflict = Some(w.clause);
                        while i < ws.len() {
                            ws[j] = ws[i];
                            i += 1;
                            j += 1;
                        }
                    }
                    0 => self.enqueue(first, Some(w.clause)),
                    _ => {}
                }
            }
            ws.truncate(j);
            let added = std::mem::replace(&mut self.watches[p.code()], ws);
            self.watches[p.code()].extend(added);
            if conflict.is_some() {
                self.qhead = self.trail.len();
                return conflict;
            }
        }
        None
    }

    fn bump_var(&mut self, v: usize) {
        self.activity[v] += self.var_inc;
        if self.activity[v] > 1e100 {
            for a in &mut self.activity {
                *a *= 1e-100;
            }
            self.var_inc *= 1e-100;
        }
        self.heap.update(v, &self.activity);
    }

    fn bump_clause(&mut self, id: usize) {
        self.clauses[id].activity += self.clause_inc;
        if self.clauses[id].activity > 1e20 {
            for &l in &self.learnts {
                self.clauses[l].activity *= 1e-20;
            }
            self.clause_inc *= 1e-20;
        }
    }

    /// First-UIP conflict analysis. Returns the learnt clause (asserting
    /// literal first) and the backjump level.
    fn analyze(&mut self, mut conflict: usize) -> (Vec<Lit>, usize) {
        let mut learnt: Vec<Lit> = vec![Lit::from_dimacs(1)];
        let mut path = 0usize;
        let mut p: Option<Lit> = None;
        let mut index = self.trail.len();
        loop {
            if self.clauses[conflict].learnt {
                self.bump_clause(conflict);
            }
            let start = usize::from(p.is_some());
            let lits = self.clauses[conflict].lits.clone();
            for &q in &lits[start..] {
                let v = Self::var_of(q);
                if !self.seen[v] && self.levels[v] > 0 {
                    self.seen[v] = true;
                    self.bump_var(v);
                    if self.levels[v] >= self.level() {
                        path += 1;
                    } else {
                        learnt.push(q);
                    }
                }
            }
            loop {
                index -= 1;
                if self.seen[Self::var_of(self.trail[index])] {
                    break;
                }
            }
            let lit = self.trail[index];
            p = Some(lit);
            self.seen[Self::var_of(lit)] = false;
            path -= 1;
            if path == 0 {
                break;
            }
            conflict = self.reasons[Self::var_of(lit)].expect("implied literal has a reason");
            // reason clauses keep their implied literal in slot 0
            debug_assert_eq!(self.clauses[conflict].lits[0], lit);
        }
        learnt[0] = !p.expect("analysis visits at least one literal");

        // recursive minimization
        let abstract_levels = learnt[1..]
            .iter()
            .fold(0u64, |acc, &l| acc | 1 << (self.levels[Self::var_of(l)] & 63));
        let original: Vec<Lit> = learnt.clone();
        let mut keep = vec![learnt[0]];
        for &l in &learnt[1..] {
            let v = Self::var_of(l);
            if self.reasons[v].is_none() || !self.redundant(l, abstract_levels) {
                keep.push(l);
            }
        }
        for &l in &original {
            self.seen[Self::var_of(l)] = false;
        }
        let mut learnt = keep;

        let backjump = if learnt.len() == 1 {
            0
        } else {
            let (best, _) = learnt
                .iter()
                .enumerate()
                .skip(1)
                .max_by_key(|(i, l)| (self.levels[Self::var_of(**l)], std::cmp::Reverse(*i)))
                .expect("learnt clause has a second literal");
            learnt.swap(1, best);
            self.levels[Self::var_of(learnt[1])]
        };
        (learnt, backjump)
    }

    /// Is `lit` implied by other literals of the learnt clause (marked seen)?
    fn redundant(&mut self, lit: Lit, abstract_levels: u64) -> bool {
        let mut stack = vec![lit];
        let mut marked: Vec<usize> = Vec::new();
        while let Some(current) = stack.pop() {
            let reason = self.reasons[Self::var_of(current)].expect("only implied literals are expanded");
            let lits = self.clauses[reason].lits.clone();
            for &q in &lits[1..] {
                let v = Self::var_of(q);
                if self.seen[v] || self.levels[v] == 0 {
                    continue;
                }
                if self.reasons[v].is_some() && (abstract_levels >> (self.levels[v] & 63)) & 1 == 1 {
                    self.seen[v] = true;
                    marked.push(v);
                    stack.push(q);
                } else {
                    for v in marked {
                        self.seen[v] = false;
                    }
                    return false;
                }
            }
        }
        // marked stay seen; they are cleared with the caller's bookkeeping
        for v in marked {
            self.seen[v] = false;
        }
        true
    }

    /// Collects the assumptions responsible for `failed` being false.
    fn analyze_final(&mut self, failed: Lit, assumptions: &[Lit]) -> Vec<Lit> {
        let mut involved = vec![false; self.num_vars];
        involved[Self::var_of(failed)] = true;
        let mut core = vec![failed];
        if self.level() == 0 {
            return core;
        }
        for index in (self.trail_lim[0]..self.trail.len()).rev() {
            let lit = self.trail[index];
            let v = Self::var_of(lit);
            if !involved[v] {
                continue;
            }
            match self.reasons[v] {
                None => {
                    if self.levels[v] > 0 && assumptions.contains(&lit) && lit != failed {
                        core.push(lit);
                    }
                }
                Some(reason) => {
                    for &q in &self.clauses[reason].lits[1..] {
                        let u = Self::var_of(q);
                        if self.levels[u] > 0 {
                            involved[u] = true;
                        }
                    }
                }
            }
        }
        core
    }

    fn cancel_until(&mut self, level: usize) {
        if self.level() <= level {
            return;
        }
        let lim = self.trail_lim[level];
        for index in (lim..self.trail.len()).rev() {
            let lit = self.trail[index];
            let v = Self::var_of(lit);
            self.values[v] = 0;
            self.reasons[v] = None;
            self.polarity[v] = lit.is_positive();
            self.heap.insert(v, &self.activity);
        }
        self.trail.truncate(lim);
        self.trail_lim.truncate(level);
        self.qhead = lim;
    }

    fn pick_branch(&mut self) -> Option<Lit> {
        while let Some(v) = self.heap.pop(&self.activity) {
            if self.values[v] == 0 {
                return Some(Var::new(v as u32 + 1).lit(self.polarity[v]));
            }
        }
        None
    }

    fn locked(&self, id: usize) -> bool {
        let first = self.clauses[id].lits[0];
        let v = Self::var_of(first);
        self.value(first) == 1 && self.reasons[v] == Some(id)
    }

    fn reduce_db(&mut self) {
        let mut candidates: Vec<usize> = self
            .learnts
            .iter()
            .copied()
            .filter(|&id| self.clauses[id].lits.len() > 2 && !self.locked(id))
            .collect();
        candidates.sort_by(|&a, &b| {
            self.clauses[a]
                .activity
                .partial_cmp(&self.clauses[b].activity)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        let remove = candidates.len() / 2;
        for &id in &candidates[..remove] {
            self.clauses[id].deleted = true;
            self.history.push(ProofStep::Delete(self.clauses[id].lits.clone()));
        }
        self.learnts.retain(|&id| !self.clauses[id].deleted);
    }

    fn refutation(&self) -> ClausalProof {
        let mut steps = self.history.clone();
        steps.push(ProofStep::Add(Vec::new()));
        ClausalProof { steps }
    }

    /// Decides the formula under `assumptions`.
    pub fn solve(&mut self, assumptions: &[Lit]) -> Result<SolveResult, SolverError> {
        if let Some(max) = assumptions.iter().map(|l| Self::var_of(*l) + 1).max() {
            self.grow_to(max);
        }
        if self.refuted {
            return Ok(SolveResult::Unsat {
                proof: self.refutation(),
                core: Vec::new(),
            });
        }
        let mut conflicts = 0u64;
        let mut restart = 0u32;
        loop {
            let limit = luby(restart) * RESTART_UNIT;
            match self.search(assumptions, limit, &mut conflicts)? {
                Some(result) => {
                    self.cancel_until(0);
                    return self.certify(result, assumptions);
                }
                None => restart += 1,
            }
        }
    }

    /// Runs CDCL until a result, or `None` when the restart limit hits.
    fn search(&mut self, assumptions: &[Lit], limit: u64, conflicts: &mut u64) -> Result<Option<SolveResult>, SolverError> {
        let mut local = 0u64;
        loop {
            if let Some(conflict) = self.propagate() {
                self.total_conflicts += 1;
                if self.level() == 0 {
                    self.refuted = true;
                    return Ok(Some(SolveResult::Unsat {
                        proof: self.refutation(),
                        core: Vec::new(),
                    }));
                }
                if let Some(budget) = self.config.conflict_budget {
                    if *conflicts >= budget {
                        self.cancel_until(0);
                        return Err(SolverError::BudgetExceeded { budget });
                    }
                }
                *conflicts += 1;
                local += 1;
                let (learnt, backjump) = self.analyze(conflict);
                self.cancel_until(backjump);
                self.history.push(ProofStep::Add(learnt.clone()));
                if learnt.len() == 1 {
                    self.enqueue(learnt[0], None);
                } else {
                    let asserting = learnt[0];
                    let id = self.attach(ClauseData {
                        lits: learnt,
                        learnt: true,
                        deleted: false,
                        activity: 0.0,
                    });
                    self.bump_clause(id);
                    self.learnts.push(id);
                    self.enqueue(asserting, Some(id));
                }
                self.var_inc /= VAR_DECAY;
                self.clause_inc /= CLAUSE_DECAY;
                continue;
            }
            if local >= limit {
                self.cancel_until(0);
                return Ok(None);
            }
            if self.learnts.len() as f64 - self.trail.len() as f64 >= self.max_learnts {
                self.reduce_db();
                self.max_learnts *= 1.1;
            }
            let mut next = None;
            while self.level() < assumptions.len() {
                let p = assumptions[self.level()];
                match self.value(p) {
                    1 => self.trail_lim.push(self.trail.len()),
                    -1 => {
                        let core = self.analyze_final(p, assumptions);
                        return Ok(Some(SolveResult::Unsat {
                            proof: self.refutation(),
                            core,
                        }));
                    }
                    _ => {
                        next = Some(p);
                        break;
                    }
                }
            }
            let decision = match next {
                Some(p) => p,
                None => match self.pick_branch() {
                    Some(p) => p,
                    None => {
                        let mut assignment = vec![false; self.num_vars + 1];
                        for v in 0..self.num_vars {
                            assignment[v + 1] = self.values[v] == 1;
                        }
                        return Ok(Some(SolveResult::Sat { assignment }));
                    }
                },
            };
            self.trail_lim.push(self.trail.len());
            self.enqueue(decision, None);
        }
    }

    /// SAT answers are re-evaluated against every clause and assumption.
    fn certify(&self, result: SolveResult, assumptions: &[Lit]) -> Result<SolveResult, SolverError> {
        if let SolveResult::Sat { assignment } = &result {
            if !self.formula.satisfied_by(assignment) {
                return Err(SolverError::Internal("model violates an input clause".into()));
            }
            if let Some(bad) = assumptions.iter().find(|&&a| !lit_value(assignment, a)) {
                return Err(SolverError::Internal(format!("model violates assumption {bad}")));
            }
        }
        Ok(result)
    }
}

/// Luby restart sequence 1, 1, 2, 1, 1, 2, 4, ...
fn luby(index: u32) -> u64 {
    let mut size = 1u64;
    let mut seq = 0u32;
    while size < index as u64 + 1 {
        seq += 1;
        size = 2 * size + 1;
    }
    let mut x = index as u64;
    while size - 1 != x {
        size = (size - 1) >> 1;
        seq -= 1;
        x %= size;
    }
    1u64 << seq
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnf::pigeonhole;
    use crate::proof::check_proof;

    fn lits(v: &[i32]) -> Vec<Lit> {
        v.iter().map(|&x| Lit::from_dimacs(x)).collect()
    }

    fn formula(clauses: &[&[i32]]) -> CnfFormula {
        let mut f = CnfFormula::new();
        for c in clauses {
            f.add_clause(lits(c));
        }
        f
    }

    #[test]
    fn luby_sequence() {
        let seq: Vec<u64> = (0..15).map(luby).collect();
        assert_eq!(seq, vec![1, 1, 2, 1, 1, 2, 4, 1, 1, 2, 1, 1, 2, 4, 8]);
    }

    #[test]
    fn unit_against_assumption() {
        let f = formula(&[&[1]]);
        let result = solve(&f, &lits(&[-1]), SolverConfig::default()).unwrap();
        match result {
            SolveResult::Unsat { proof, core } => {
                assert!(proof.len() <= 2);
                assert!(proof.ends_with_refutation());
                assert_eq!(core, lits(&[-1]));
                assert!(check_proof(&f, &lits(&[-1]), &proof).is_accept());
            }
            other => panic!("expected UNSAT, got {other:?}"),
        }
    }

    #[test]
    fn simple_sat() {
        let f = formula(&[&[1, 2], &[-1]]);
        match solve(&f, &[], SolverConfig::default()).unwrap() {
            SolveResult::Sat { assignment } => {
                assert!(!assignment[1]);
                assert!(assignment[2]);
            }
            other => panic!("expected SAT, got {other:?}"),
        }
    }

    #[test]
    fn pigeonhole_proof_checks() {
        let f = pigeonhole(4, 3);
        match solve(&f, &[], SolverConfig::default()).unwrap() {
            SolveResult::Unsat { proof, .. } => assert!(check_proof(&f, &[], &proof).is_accept()),
            other => panic!("expected UNSAT, got {other:?}"),
        }
    }

    #[test]
    fn zero_budget_on_pigeonhole() {
        let f = pigeonhole(5, 4);
        let config = SolverConfig {
            conflict_budget: Some(0),
            ..Default::default()
        };
        assert_eq!(solve(&f, &[], config), Err(SolverError::BudgetExceeded { budget: 0 }));
    }

    #[test]
    fn empty_clause_in_input() {
        let f = formula(&[&[1, 2], &[]]);
        match solve(&f, &[], SolverConfig::default()).unwrap() {
            SolveResult::Unsat { proof, core } => {
                assert!(core.is_empty());
                assert!(check_proof(&f, &[], &proof).is_accept());
            }
            other => panic!("expected UNSAT, got {other:?}"),
        }
    }

    #[test]
    fn incremental_calls_keep_proofs_self_contained() {
        // x1 -> x2 -> x3 -> x4; plus PHP(3,2) guarded by x5
        let mut f = formula(&[&[-1, 2], &[-2, 3], &[-3, 4]]);
        let php = pigeonhole(3, 2);
        for clause in php.clauses() {
            let mut c: Vec<Lit> = clause.iter().map(|l| Lit::from_dimacs(l.to_dimacs().signum() * (l.var().index() as i32 + 10))).collect();
            c.push(Lit::from_dimacs(-5));
            f.add_clause(c);
        }
        let mut solver = Solver::new(&f, SolverConfig::default());
        let queries: Vec<Vec<Lit>> = vec![lits(&[1, -4]), lits(&[5]), lits(&[1]), lits(&[5, 1]), lits(&[-5, 1, -4]), lits(&[5])];
        for q in &queries {
            let once = solve(&f, q, SolverConfig::default()).unwrap();
            let result = solver.solve(q).unwrap();
            assert_eq!(once.is_sat(), result.is_sat(), "query {q:?}");
            if let SolveResult::Unsat { proof, core } = result {
                assert!(check_proof(&f, q, &proof).is_accept(), "query {q:?}");
                assert!(core.iter().all(|l| q.contains(l)));
            }
        }
    }

    #[test]
    fn determinism() {
        let f = pigeonhole(5, 4);
        let a = solve(&f, &[], SolverConfig::default()).unwrap();
        let b = solve(&f, &[], SolverConfig::default()).unwrap();
        assert_eq!(a, b);
    }
}
