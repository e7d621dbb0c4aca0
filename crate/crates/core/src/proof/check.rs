//! Forward DRUP checking by reverse unit propagation.
//!
//! This propagator is written separately from the solver's; the two must not
//! share code so that agreement between them means something.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{ClausalProof, ProofStep};
use crate::cnf::{Clause, CnfFormula, Lit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RejectReason {
    /// The added clause does not follow by unit propagation.
    NotRup,
    /// The proof never adds the empty clause.
    NoRefutation,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RejectReason::NotRup => "not-rup",
            RejectReason::NoRefutation => "no-refutation",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CheckOutcome {
    Accept,
    Reject { step: usize, reason: RejectReason },
}

impl CheckOutcome {
    pub fn is_accept(&self) -> bool {
        matches!(self, CheckOutcome::Accept)
    }
}

const UNASSIGNED: i8 = 0;

struct ClauseDb {
    clauses: Vec<Clause>,
    active: Vec<bool>,
    /// Sorted literal list -> ids of live copies.
    index: HashMap<Clause, Vec<usize>>,
    /// Watch lists by literal code; the literal is one of the two watched.
    watches: Vec<Vec<usize>>,
    units: Vec<usize>,
    empty_clauses: usize,
    values: Vec<i8>,
    trail: Vec<Lit>,
}

impl ClauseDb {
    fn new() -> Self {
        ClauseDb {
            clauses: Vec::new(),
            active: Vec::new(),
            index: HashMap::new(),
            watches: Vec::new(),
            units: Vec::new(),
            empty_clauses: 0,
            values: vec![UNASSIGNED],
            trail: Vec::new(),
        }
    }

    fn ensure_var(&mut self, lit: Lit) {
        let var = lit.var().index() as usize;
        if self.values.len() <= var {
            self.values.resize(var + 1, UNASSIGNED);
            self.watches.resize(2 * var, Vec::new());
        }
    }

    fn normalize(clause: &[Lit]) -> Option<Clause> {
        let mut c: Clause = clause.to_vec();
        c.sort_unstable();
        c.dedup();
        // tautology
        if c.windows(2).any(|w| w[0] == !w[1]) || c.iter().any(|&l| c.binary_search(&!l).is_ok()) {
            return None;
        }
        Some(c)
    }

    fn insert(&mut self, clause: &[Lit]) {
        for &lit in clause {
            self.ensure_var(lit);
        }
        let key = {
            let mut k = clause.to_vec();
            k.sort_unstable();
            k.dedup();
            k
        };
        let id = self.clauses.len();
        let Some(norm) = Self::normalize(clause) else {
            // satisfied by every assignment; kept only so deletions match
            self.clauses.push(key.clone());
            self.active.push(false);
            self.index.entry(key).or_default().push(id);
            return;
        };
        match norm.len() {
            0 => self.empty_clauses += 1,
            1 => self.units.push(id),
            _ => {
                self.watches[norm[0].code()].push(id);
                self.watches[norm[1].code()].push(id);
            }
        }
        self.clauses.push(norm);
        self.active.push(true);
        self.index.entry(key).or_default().push(id);
    }

    fn remove(&mut self, clause: &[Lit]) {
        let mut key = clause.to_vec();
        key.sort_unstable();
        key.dedup();
        let Some(ids) = self.index.get_mut(&key) else {
            return;
        };
        let Some(id) = ids.pop() else {
            return;
        };
        if ids.is_empty() {
            self.index.remove(&key);
        }
        if !self.active[id] {
            return;
        }
        self.active[id] = false;
        match self.clauses[id].len() {
            0 => self.empty_clauses -= 1,
            1 => self.units.retain(|&u| u != id),
            // watch entries are dropped lazily during propagation
            _ => {}
        }
    }

    fn value(&self, lit: Lit) -> i8 {
        let v = self.values[lit.var().index() as usize];
        if lit.is_positive() {
            v
        } else {
            -v
        }
    }

    /// Makes `lit` true; returns false if it is already false.
    fn assign(&mut self, lit: Lit) -> bool {
        match self.value(lit) {
            1 => true,
            -1 => false,
            _ => {
                self.values[lit.var().index() as usize] = if lit.is_positive() { 1 } else { -1 };
                self.trail.push(lit);
                true
            }
        }
    }

    fn reset(&mut self) {
        for lit in self.trail.drain(..) {
            self.values[lit.var().index() as usize] = UNASSIGNED;
        }
    }

    /// Unit propagation from the current trail; true on conflict.
    fn propagate(&mut self) -> bool {
        let mut head = 0;
        while head < self.trail.len() {
            let falsified = !self.trail[head];
            head += 1;
            let code = falsified.code();
            let mut watchers = std::mem::take(&mut self.watches[code]);
            let mut i = 0;
            let mut conflict = false;
            while i < watchers.len() {
                let id = watchers[i];
                if !self.active[id] {
                    watchers.swap_remove(i);
                    continue;
                }
                // keep the falsified watch in slot 1
                if self.clauses[id][0] == falsified {
                    self.clauses[id].swap(0, 1);
                }
                let first = self.clauses[id][0];
                if self.value(first) == 1 {
                    i += 1;
                    continue;
                }
                let replacement = (2..self.clauses[id].len()).find(|&k| self.value(self.clauses[id][k]) != -1);
                if let Some(k) = replacement {
                    self.clauses[id].swap(1, k);
                    let new_watch = self.clauses[id][1];
                    self.watches[new_watch.code()].push(id);
                    watchers.swap_remove(i);
                    continue;
                }
                if !self.assign(first) {
                    conflict = true;
                    break;
                }
                i += 1;
            }
            let moved = std::mem::replace(&mut self.watches[code], watchers);
            self.watches[code].extend(moved);
            if conflict {
                return true;
            }
        }
        false
    }

    /// Is `lemma` implied by reverse unit propagation?
    fn is_rup(&mut self, lemma: &[Lit]) -> bool {
        if self.empty_clauses > 0 {
            return true;
        }
        for &lit in lemma {
            self.ensure_var(lit);
        }
        let mut conflict = false;
        let units: Vec<Lit> = self.units.iter().map(|&id| self.clauses[id][0]).collect();
        for lit in units.into_iter().chain(lemma.iter().map(|&l| !l)) {
            if !self.assign(lit) {
                conflict = true;
                break;
            }
        }
        if !conflict {
            conflict = self.propagate();
        }
        self.reset();
        conflict
    }
}

/// Checks `proof` against `premises` plus one unit clause per assumption.
///
/// Accepts iff every added clause up to the first empty clause is RUP with
/// respect to the premises and the clauses added (and not deleted) so far.
/// Deletions are honored, including deletions of unit clauses.
pub fn check_proof(premises: &CnfFormula, assumptions: &[Lit], proof: &ClausalProof) -> CheckOutcome {
    let mut db = ClauseDb::new();
    for clause in premises.clauses() {
        db.insert(clause);
    }
    for &lit in assumptions {
        db.insert(&[lit]);
    }
    for (step, entry) in proof.steps.iter().enumerate() {
        match entry {
            ProofStep::Add(clause) => {
                if !db.is_rup(clause) {
                    return CheckOutcome::Reject {
                        step,
                        reason: RejectReason::NotRup,
                    };
                }
                if clause.is_empty() {
                    return CheckOutcome::Accept;
                }
                db.insert(clause);
            }
            ProofStep::Delete(clause) => db.remove(clause),
        }
    }
    CheckOutcome::Reject {
        step: proof.steps.len(),
        reason: RejectReason::NoRefutation,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lits(v: &[i32]) -> Clause {
        v.iter().map(|&x| Lit::from_dimacs(x)).collect()
    }

    fn formula(clauses: &[&[i32]]) -> CnfFormula {
        let mut f = CnfFormula::new();
        for c in clauses {
            f.add_clause(lits(c));
        }
        f
    }

    fn proof(steps: &[&[i32]]) -> ClausalProof {
        ClausalProof {
            steps: steps.iter().map(|c| ProofStep::Add(lits(c))).collect(),
        }
    }

    #[test]
    fn empty_premise_clause_accepts_empty_lemma() {
        let f = formula(&[&[1, 2], &[]]);
        assert_eq!(check_proof(&f, &[], &proof(&[&[]])), CheckOutcome::Accept);
    }

    #[test]
    fn direct_unit_conflict() {
        let f = formula(&[&[1], &[-1]]);
        assert_eq!(check_proof(&f, &[], &proof(&[&[]])), CheckOutcome::Accept);
    }

    #[test]
    fn assumptions_act_as_units() {
        let f = formula(&[&[1]]);
        let p = proof(&[&[]]);
        assert!(!check_proof(&f, &[], &p).is_accept());
        assert_eq!(check_proof(&f, &[Lit::from_dimacs(-1)], &p), CheckOutcome::Accept);
    }

    #[test]
    fn no_refutation_is_rejected() {
        let f = formula(&[&[1, 2]]);
        assert_eq!(
            check_proof(&f, &[], &ClausalProof::new()),
            CheckOutcome::Reject {
                step: 0,
                reason: RejectReason::NoRefutation
            }
        );
    }

    #[test]
    fn non_rup_lemma_is_rejected_at_its_step() {
        // (1 v 2), (-1 v 2), (1 v -2), (-1 v -2) is UNSAT; lemma (2) is RUP, lemma (3) is not
        let f = formula(&[&[1, 2], &[-1, 2], &[1, -2], &[-1, -2]]);
        assert_eq!(check_proof(&f, &[], &proof(&[&[2], &[]])), CheckOutcome::Accept);
        assert_eq!(
            check_proof(&f, &[], &proof(&[&[3], &[2], &[]])),
            CheckOutcome::Reject {
                step: 0,
                reason: RejectReason::NotRup
            }
        );
    }

    #[test]
    fn deletions_are_honored() {
        let f = formula(&[&[1, 2], &[-1, 2], &[1, -2], &[-1, -2]]);
        let mut p = ClausalProof::new();
        p.add(lits(&[2]));
        p.delete(lits(&[2]));
        p.delete(lits(&[-1, 2]));
        p.add(vec![]);
        // without (2) and (-1 v 2) the remaining clauses are satisfiable
        assert!(!check_proof(&f, &[], &p).is_accept());
    }

    #[test]
    fn tautologies_and_duplicates_are_harmless() {
        let f = formula(&[&[1, -1], &[2, 2], &[-2]]);
        assert_eq!(check_proof(&f, &[], &proof(&[&[]])), CheckOutcome::Accept);
    }
}
