//! Shared generators and independent oracles for the randomized suites.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use zfauto_core::congruence::{MatchCaps, RewriteTable, Substitution, TermId};
use zfauto_core::kernel::consts::mk_eq;
use zfauto_core::kernel::{assume, SimpleType, Term};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn ty_i() -> SimpleType {
    SimpleType::Set
}

/// A random instance: a pool of ground terms and a list of equations.
pub struct RandomInstance {
    pub universe: Vec<Term>,
    pub equations: Vec<(Term, Term)>,
}

/// Builds random ground terms over `n_consts` constants and `n_ops`
/// operators (alternating unary/binary).
pub fn random_instance(
    rng: &mut ChaCha8Rng,
    n_consts: usize,
    n_ops: usize,
    n_eqs: usize,
    pool_size: usize,
) -> RandomInstance {
    let consts: Vec<Term> = (0..n_consts)
        .map(|i| Term::free(&format!("c{}", i), ty_i()))
        .collect();
    let ops: Vec<(Term, usize)> = (0..n_ops)
        .map(|i| {
            let arity = if i % 2 == 0 { 1 } else { 2 };
            let ty = match arity {
                1 => SimpleType::arrow(ty_i(), ty_i()),
                _ => SimpleType::arrows(&[ty_i(), ty_i()], ty_i()),
            };
            (Term::free(&format!("op{}", i), ty), arity)
        })
        .collect();
    let mut pool: Vec<Term> = consts.clone();
    let mut tries = 0;
    while pool.len() < pool_size && tries < pool_size * 8 {
        tries += 1;
        if ops.is_empty() {
            break;
        }
        let (op, arity) = ops[rng.gen_range(0..ops.len())].clone();
        let args: Vec<Term> = (0..arity)
            .map(|_| pool[rng.gen_range(0..pool.len())].clone())
            .collect();
        let t = Term::apps(op, args);
        if t.size() <= 7 && !pool.contains(&t) {
            pool.push(t);
        }
    }
    let equations = (0..n_eqs)
        .map(|_| {
            let a = pool[rng.gen_range(0..pool.len())].clone();
            let b = pool[rng.gen_range(0..pool.len())].clone();
            (a, b)
        })
        .collect();
    RandomInstance {
        universe: pool,
        equations,
    }
}

/// All subterms (as trees) of the instance's pool, deduplicated.
pub fn closure_universe(inst: &RandomInstance) -> Vec<Term> {
    fn subterms(t: &Term, out: &mut Vec<Term>) {
        if !out.contains(t) {
            out.push(t.clone());
        }
        if let Term::App(f, a) = t {
            subterms(f, out);
            subterms(a, out);
        }
    }
    let mut out = Vec::new();
    for t in &inst.universe {
        subterms(t, &mut out);
    }
    for (a, b) in &inst.equations {
        subterms(a, &mut out);
        subterms(b, &mut out);
    }
    out
}

/// Naive congruence-closure oracle: repeatedly applies symmetry,
/// transitivity and congruence over the finite universe until fixpoint.
/// Returns the class index of each universe element.
pub fn naive_closure(universe: &[Term], equations: &[(Term, Term)]) -> Vec<usize> {
    let n = universe.len();
    let index = |t: &Term| universe.iter().position(|u| u == t).unwrap();
    // Adjacency matrix of the equivalence relation.
    let mut rel = vec![false; n * n];
    for i in 0..n {
        rel[i * n + i] = true;
    }
    for (a, b) in equations {
        let (i, j) = (index(a), index(b));
        rel[i * n + j] = true;
        rel[j * n + i] = true;
    }
    loop {
        let mut changed = false;
        // Transitivity (symmetry is maintained by symmetric insertion).
        for i in 0..n {
            for j in 0..n {
                if !rel[i * n + j] {
                    continue;
                }
                for k in 0..n {
                    if rel[j * n + k] && !rel[i * n + k] {
                        rel[i * n + k] = true;
                        rel[k * n + i] = true;
                        changed = true;
                    }
                }
            }
        }
        // Congruence over applications in the universe.
        for i in 0..n {
            for j in 0..n {
                if rel[i * n + j] {
                    continue;
                }
                if let (Term::App(f1, a1), Term::App(f2, a2)) = (&universe[i], &universe[j]) {
                    let (fi, ai) = (index(f1), index(a1));
                    let (fj, aj) = (index(f2), index(a2));
                    if rel[fi * n + fj] && rel[ai * n + aj] {
                        rel[i * n + j] = true;
                        rel[j * n + i] = true;
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    // Convert to class indices.
    let mut class = vec![usize::MAX; n];
    let mut next = 0;
    for i in 0..n {
        if class[i] == usize::MAX {
            for j in 0..n {
                if rel[i * n + j] {
                    class[j] = next;
                }
            }
            next += 1;
        }
    }
    class
}

/// Loads an instance into a fresh rewrite table.
pub fn load_table(inst: &RandomInstance) -> RewriteTable {
    let mut tbl = RewriteTable::new();
    for t in &inst.universe {
        tbl.intern(t).unwrap();
    }
    for (a, b) in &inst.equations {
        let th = assume(mk_eq(a.clone(), b.clone())).unwrap();
        tbl.assert_equal(&th).unwrap();
    }
    tbl
}

/// Generates a random first-order pattern over the instance's operators.
pub fn random_pattern(rng: &mut ChaCha8Rng, n_ops: usize, depth: usize) -> Term {
    if depth == 0 || rng.gen_bool(0.4) {
        if rng.gen_bool(0.7) {
            let v = rng.gen_range(0..3);
            return Term::schematic(&format!("x{}", v), ty_i());
        }
        return Term::free(&format!("c{}", rng.gen_range(0..4)), ty_i());
    }
    let i = rng.gen_range(0..n_ops.max(1));
    let arity = if i % 2 == 0 { 1 } else { 2 };
    let ty = match arity {
        1 => SimpleType::arrow(ty_i(), ty_i()),
        _ => SimpleType::arrows(&[ty_i(), ty_i()], ty_i()),
    };
    let op = Term::free(&format!("op{}", i), ty);
    let args: Vec<Term> = (0..arity)
        .map(|_| random_pattern(rng, n_ops, depth - 1))
        .collect();
    Term::apps(op, args)
}

/// Brute-force e-matching oracle: enumerates every assignment of interned
/// nodes to the pattern's schematics and keeps those whose instance resolves
/// into one of the root classes.
pub fn brute_force_ematch(
    tbl: &RewriteTable,
    pattern: &Term,
    roots: &[TermId],
) -> Vec<Vec<(String, TermId)>> {
    let mut schems = Vec::new();
    pattern.schematics(&mut schems);
    schems.sort_by(|a, b| a.0.cmp(&b.0));
    let nodes: Vec<TermId> = tbl.all_nodes().collect();
    let root_classes: Vec<TermId> = roots.iter().map(|r| tbl.find(*r)).collect();
    let mut out = Vec::new();
    let mut assignment: Vec<(String, TermId)> = Vec::new();
    fn recurse(
        tbl: &RewriteTable,
        pattern: &Term,
        schems: &[(std::sync::Arc<str>, SimpleType)],
        nodes: &[TermId],
        root_classes: &[TermId],
        assignment: &mut Vec<(String, TermId)>,
        out: &mut Vec<Vec<(String, TermId)>>,
    ) {
        if assignment.len() == schems.len() {
            let subst: Vec<(std::sync::Arc<str>, Term)> = assignment
                .iter()
                .map(|(n, id)| (std::sync::Arc::from(n.as_str()), tbl.term(*id).clone()))
                .collect();
            let inst = pattern.subst_schematics(&subst);
            if let Some(class) = tbl.lookup_class(&inst) {
                if root_classes.contains(&class) {
                    out.push(assignment.clone());
                }
            }
            return;
        }
        let (name, ty) = &schems[assignment.len()];
        for &n in nodes {
            if tbl.node_type(n) == ty {
                assignment.push((name.to_string(), n));
                recurse(tbl, pattern, schems, nodes, root_classes, assignment, out);
                assignment.pop();
            }
        }
    }
    recurse(
        tbl,
        pattern,
        &schems,
        &nodes,
        &root_classes,
        &mut assignment,
        &mut out,
    );
    out.sort();
    out.dedup();
    out
}

/// Normalizes e-match output for comparison with the brute-force oracle.
pub fn normalize_subs(subs: &[Substitution]) -> Vec<Vec<(String, TermId)>> {
    let mut out: Vec<Vec<(String, TermId)>> = subs
        .iter()
        .map(|s| {
            let mut v: Vec<(String, TermId)> = s
                .binds
                .iter()
                .map(|(n, id)| (n.to_string(), *id))
                .collect();
            v.sort();
            v
        })
        .collect();
    out.sort();
    out.dedup();
    out
}

/// Runs one congruence-closure oracle comparison with up to 40 sampled
/// queries; returns false on mismatch.
pub fn check_closure_instance(seed: u64) -> bool {
    let mut r = rng(seed);
    let n_consts = r.gen_range(2..=8);
    let n_ops = r.gen_range(1..=3);
    let n_eqs = r.gen_range(1..=12);
    let inst = random_instance(&mut r, n_consts, n_ops, n_eqs, 10);
    let universe = closure_universe(&inst);
    let classes = naive_closure(&universe, &inst.equations);
    let mut tbl = load_table(&inst);
    let ids: Vec<TermId> = universe.iter().map(|t| tbl.intern(t).unwrap()).collect();
    for _ in 0..40 {
        let i = r.gen_range(0..universe.len());
        let j = r.gen_range(0..universe.len());
        let oracle = classes[i] == classes[j];
        let table = tbl.find(ids[i]) == tbl.find(ids[j]);
        if oracle != table {
            eprintln!(
                "closure mismatch (seed {}): {} ~ {} oracle={} table={}",
                seed, universe[i], universe[j], oracle, table
            );
            return false;
        }
    }
    true
}

/// Runs one e-matching oracle comparison; returns false on mismatch.
pub fn check_ematch_instance(seed: u64) -> bool {
    let mut r = rng(seed);
    let n_consts = r.gen_range(2..=4);
    let n_ops = r.gen_range(1..=2);
    let n_eqs = r.gen_range(1..=5);
    let inst = random_instance(&mut r, n_consts, n_ops, n_eqs, 8);
    let tbl = load_table(&inst);
    let caps = MatchCaps {
        class_members: 100_000,
        pattern_depth: 8,
        max_results: 1_000_000,
    };
    for pat_try in 0..4 {
        let pattern = random_pattern(&mut r, n_ops, 2);
        let roots: Vec<TermId> = tbl.classes_of_type(&SimpleType::Set);
        let got = match tbl.e_match(&pattern, &roots, &caps) {
            Ok(s) => normalize_subs(&s),
            Err(_) => continue,
        };
        let want = brute_force_ematch(&tbl, &pattern, &roots);
        if got != want {
            eprintln!(
                "ematch mismatch (seed {}, try {}): pattern {} got {} want {}",
                seed,
                pat_try,
                pattern,
                got.len(),
                want.len()
            );
            return false;
        }
    }
    true
}
