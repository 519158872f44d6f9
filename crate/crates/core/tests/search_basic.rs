//! End-to-end checks of the saturation engine on small propositional goals.

use std::sync::Arc;

use zfauto_core::kernel::consts::*;
use zfauto_core::kernel::{replay_check, set_recording, Signature, SimpleType, Term};
use zfauto_core::state::{prove, SearchConfig, SearchOutcome};
use zfauto_core::steps::Registry;
use zfauto_core::tables::TableDecls;
use zfauto_core::wfconv::NormalizerRegistry;

fn run(assumptions: &[Term], goal: &Term) -> SearchOutcome {
    set_recording(true);
    let sig = Arc::new(Signature::new());
    let registry = Arc::new(Registry::new());
    let decls = Arc::new(TableDecls::new());
    let normalizers = Arc::new(NormalizerRegistry::default());
    let cfg = SearchConfig {
        timeout_ms: 5_000,
        ..SearchConfig::default()
    };
    let (outcome, _, _) = prove(sig, registry, decls, normalizers, assumptions, goal, cfg).unwrap();
    outcome
}

fn prop(name: &str) -> Term {
    Term::free(name, SimpleType::Prop)
}

#[test]
fn conj_commutes() {
    let (a, b) = (prop("A"), prop("B"));
    let goal = mk_conj(b.clone(), a.clone());
    let hyp = mk_conj(a.clone(), b.clone());
    match run(&[hyp.clone()], &goal) {
        SearchOutcome::Proved(th) => {
            assert_eq!(th.concl(), &goal);
            assert_eq!(th.hyps(), &[hyp]);
            replay_check(&th, &Signature::new()).unwrap();
        }
        SearchOutcome::Failed(_) => panic!("expected a proof"),
    }
}

#[test]
fn disjunction_case_split() {
    let (a, b, c) = (prop("A"), prop("B"), prop("C"));
    let hyps = [
        mk_disj(a.clone(), b.clone()),
        mk_imp(a.clone(), c.clone()),
        mk_imp(b.clone(), c.clone()),
    ];
    match run(&hyps, &c) {
        SearchOutcome::Proved(th) => {
            assert_eq!(th.concl(), &c);
            replay_check(&th, &Signature::new()).unwrap();
        }
        SearchOutcome::Failed(_) => panic!("expected a proof"),
    }
}

#[test]
fn unprovable_goal_fails_with_stats() {
    let goal = mk_false();
    match run(&[], &goal) {
        SearchOutcome::Proved(_) => panic!("should not prove False from nothing"),
        SearchOutcome::Failed(rep) => {
            assert!(rep.failed_step.is_none());
        }
    }
}

#[test]
fn immediate_contradiction() {
    let p = prop("P");
    match run(&[p.clone()], &p) {
        SearchOutcome::Proved(th) => {
            assert_eq!(th.concl(), &p);
            assert_eq!(th.hyps(), &[p]);
        }
        SearchOutcome::Failed(_) => panic!("expected a proof"),
    }
}

#[test]
fn iff_both_directions() {
    let (a, b) = (prop("A"), prop("B"));
    let hyps = [mk_iff(a.clone(), b.clone()), a.clone()];
    match run(&hyps, &b) {
        SearchOutcome::Proved(th) => replay_check(&th, &Signature::new()).unwrap(),
        SearchOutcome::Failed(_) => panic!("expected a proof"),
    }
}

#[test]
fn quantifier_roundtrip() {
    // From !x. x : S, prove c : S.
    let s = Term::free("S", SimpleType::Set);
    let c = Term::free("c", SimpleType::Set);
    let all = mk_all("x", mk_mem(Term::free("x", SimpleType::Set), s.clone()));
    let goal = mk_mem(c, s);
    match run(&[all], &goal) {
        SearchOutcome::Proved(th) => replay_check(&th, &Signature::new()).unwrap(),
        SearchOutcome::Failed(rep) => panic!("expected a proof; snapshot: {:?}", rep.snapshot),
    }
}

#[test]
fn determinism_two_runs_identical() {
    let (a, b, c) = (prop("A"), prop("B"), prop("C"));
    let hyps = [
        mk_disj(a.clone(), b.clone()),
        mk_imp(a.clone(), c.clone()),
        mk_imp(b.clone(), c.clone()),
    ];
    let sig = Arc::new(Signature::new());
    let mut counts = Vec::new();
    for _ in 0..2 {
        let (outcome, stats, _) = prove(
            sig.clone(),
            Arc::new(Registry::new()),
            Arc::new(TableDecls::new()),
            Arc::new(NormalizerRegistry::default()),
            &hyps,
            &c,
            SearchConfig::default(),
        )
        .unwrap();
        assert!(matches!(outcome, SearchOutcome::Proved(_)));
        counts.push((stats.items, stats.steps_fired));
    }
    assert_eq!(counts[0], counts[1]);
}
