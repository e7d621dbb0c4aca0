//! Solver answers against brute force, and solver proofs against the checker.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xpval::cnf::{pigeonhole, Clause, CnfFormula, Lit};
use xpval::proof::{check_proof, CheckOutcome, ClausalProof, ProofStep, RejectReason};
use xpval::sat::{solve, SolveResult, Solver, SolverConfig};

fn random_formula(rng: &mut ChaCha8Rng, vars: u32, clauses: usize, width: usize) -> CnfFormula {
    let mut f = CnfFormula::with_vars(vars);
    for _ in 0..clauses {
        let clause: Clause = (0..width)
            .map(|_| {
                let v = rng.random_range(1..=vars) as i32;
                Lit::from_dimacs(if rng.random_bool(0.5) { v } else { -v })
            })
            .collect();
        f.add_clause(clause);
    }
    f
}

fn brute_force_sat(f: &CnfFormula, assumptions: &[Lit]) -> bool {
    let n = f.num_vars();
    (0u64..1 << n).any(|mask| {
        let assignment: Vec<bool> = std::iter::once(false).chain((0..n).map(|i| mask >> i & 1 == 1)).collect();
        f.satisfied_by(&assignment) && assumptions.iter().all(|&a| xpval::cnf::lit_value(&assignment, a))
    })
}

#[test]
fn random_3sat_agrees_with_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut unsat = 0;
    for _ in 0..400 {
        let vars = rng.random_range(3..=10);
        let clauses = (vars as f64 * rng.random_range(3.0..6.0)) as usize;
        let f = random_formula(&mut rng, vars, clauses, 3);
        let expected = brute_force_sat(&f, &[]);
        match solve(&f, &[], SolverConfig::default()).unwrap() {
            SolveResult::Sat { assignment } => {
                assert!(expected);
                assert!(f.satisfied_by(&assignment));
            }
            SolveResult::Unsat { proof, .. } => {
                assert!(!expected);
                unsat += 1;
                assert_eq!(check_proof(&f, &[], &proof), CheckOutcome::Accept);
            }
        }
    }
    assert!(unsat > 50, "too few UNSAT instances ({unsat}) to be meaningful");
}

#[test]
fn incremental_assumptions_agree_with_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..60 {
        let vars = rng.random_range(4..=10);
        let f = random_formula(&mut rng, vars, (vars * 3) as usize, 3);
        let mut session = Solver::new(&f, SolverConfig::default());
        for _ in 0..15 {
            let k = rng.random_range(0..=4);
            let assumptions: Vec<Lit> = (0..k)
                .map(|_| {
                    let v = rng.random_range(1..=vars) as i32;
                    Lit::from_dimacs(if rng.random_bool(0.5) { v } else { -v })
                })
                .collect();
            let expected = brute_force_sat(&f, &assumptions);
            match session.solve(&assumptions).unwrap() {
                SolveResult::Sat { assignment } => {
                    assert!(expected);
                    assert!(f.satisfied_by(&assignment));
                }
                SolveResult::Unsat { proof, core } => {
                    assert!(!expected);
                    assert!(core.iter().all(|l| assumptions.contains(l)));
                    assert!(!brute_force_sat(&f, &core), "core must itself be refuted");
                    assert_eq!(check_proof(&f, &assumptions, &proof), CheckOutcome::Accept);
                }
            }
        }
    }
}

#[test]
fn same_query_twice_same_status() {
    let f = pigeonhole(4, 3);
    let mut session = Solver::new(&f, SolverConfig::default());
    let first = session.solve(&[]).unwrap().is_sat();
    let second = session.solve(&[]).unwrap().is_sat();
    assert_eq!(first, second);
    assert!(!first);
}

#[test]
fn larger_pigeonhole_proofs_check() {
    for (p, h) in [(5, 4), (6, 5)] {
        let f = pigeonhole(p, h);
        match solve(&f, &[], SolverConfig::default()).unwrap() {
            SolveResult::Unsat { proof, .. } => {
                assert_eq!(check_proof(&f, &[], &proof), CheckOutcome::Accept);
                let reparsed = ClausalProof::parse_drat(&proof.emit_drat()).unwrap();
                assert_eq!(reparsed, proof);
            }
            SolveResult::Sat { .. } => panic!("PHP({p},{h}) is unsatisfiable"),
        }
    }
}

#[test]
fn flipped_literal_in_pigeonhole_proof_is_rejected_at_that_step() {
    let f = pigeonhole(4, 3);
    let SolveResult::Unsat { proof, .. } = solve(&f, &[], SolverConfig::default()).unwrap() else {
        panic!("PHP(4,3) is unsatisfiable");
    };
    let mut rejected_at_step = 0;
    let mut candidates = 0;
    for (index, step) in proof.steps.iter().enumerate() {
        let ProofStep::Add(clause) = step else { continue };
        if clause.is_empty() {
            continue;
        }
        candidates += 1;
        let mut mutated = proof.clone();
        if let ProofStep::Add(c) = &mut mutated.steps[index] {
            c[0] = !c[0];
        }
        match check_proof(&f, &[], &mutated) {
            CheckOutcome::Reject { step, reason: RejectReason::NotRup } if step == index => rejected_at_step += 1,
            _ => {}
        }
    }
    assert!(candidates > 0);
    assert!(rejected_at_step > 0);
}
