//! Randomized oracle checks for the rewrite table: the union-find closure
//! against naive fixpoint saturation, and e-matching against brute-force
//! enumeration. The full-size runs live in the acceptance suite; these keep
//! a smaller count for quick feedback.

mod common;

use zfauto_core::kernel::set_recording;

#[test]
fn closure_matches_naive_saturation() {
    set_recording(false);
    for seed in 0..150 {
        assert!(common::check_closure_instance(seed), "seed {}", seed);
    }
}

#[test]
fn ematch_matches_brute_force() {
    set_recording(false);
    for seed in 0..100 {
        assert!(common::check_ematch_instance(seed), "seed {}", seed);
    }
}

#[test]
fn equal_is_equivalence_and_monotone() {
    set_recording(false);
    for seed in 200..230 {
        let mut r = common::rng(seed);
        let inst = common::random_instance(&mut r, 5, 2, 6, 10);
        let mut tbl = common::load_table(&inst);
        let terms: Vec<_> = common::closure_universe(&inst)
            .into_iter()
            .filter(|t| t.typecheck().ok() == Some(zfauto_core::SimpleType::Set))
            .collect();
        // Reflexive and symmetric.
        for t in &terms {
            assert!(tbl.equal(t, t).is_some());
        }
        let mut known = Vec::new();
        for a in &terms {
            for b in &terms {
                if tbl.equal(a, b).is_some() {
                    assert!(tbl.equal(b, a).is_some());
                    known.push((a.clone(), b.clone()));
                }
            }
        }
        // Monotone under further assertions.
        use zfauto_core::kernel::consts::mk_eq;
        use zfauto_core::kernel::assume;
        let extra = assume(mk_eq(terms[0].clone(), terms[terms.len() - 1].clone())).unwrap();
        tbl.assert_equal(&extra).unwrap();
        for (a, b) in &known {
            assert!(
                tbl.equal(a, b).is_some(),
                "monotonicity violated on seed {}",
                seed
            );
        }
    }
}

#[test]
fn justifications_replay() {
    use zfauto_core::kernel::{replay_check, set_recording, Signature};
    set_recording(true);
    let sig = Signature::new();
    for seed in 300..320 {
        let mut r = common::rng(seed);
        let inst = common::random_instance(&mut r, 4, 2, 5, 8);
        let mut tbl = common::load_table(&inst);
        let terms = common::closure_universe(&inst);
        for a in &terms {
            for b in &terms {
                if let Some(th) = tbl.equal(a, b) {
                    replay_check(&th, &sig).unwrap();
                }
            }
        }
    }
}
