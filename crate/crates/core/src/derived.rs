//! Derived inference rules built from kernel primitives.
//!
//! Nothing here is trusted: every function produces its result through
//! `kernel::infer`, so the theorems carry ordinary replayable derivations.

use crate::kernel::consts::*;
use crate::kernel::{assume, infer, KernelError, Param, Rule, SimpleType, Term, Theorem};

type Result<T> = std::result::Result<T, KernelError>;

/// Discharges hypothesis `h` of `main` using `provider |- h`.
pub fn cut(main: &Theorem, h: &Term, provider: &Theorem) -> Result<Theorem> {
    if provider.concl() != h {
        return Err(KernelError::RuleShapeMismatch {
            rule: "cut".into(),
            detail: format!("provider proves {}, wanted {}", provider.concl(), h),
        });
    }
    let imp = infer(Rule::ImpI, &[main], &[Param::Term(h.clone())])?;
    infer(Rule::Mp, &[&imp, provider], &[])
}

/// Adds `p` to the hypotheses.
pub fn weaken(th: &Theorem, p: &Term) -> Result<Theorem> {
    if th.has_hyp(p) {
        return Ok(th.clone());
    }
    let imp = infer(Rule::ImpI, &[th], &[Param::Term(p.clone())])?;
    infer(Rule::Mp, &[&imp, &assume(p.clone())?], &[])
}

/// From `|- ~~A` derives `|- A`.
pub fn neg_neg_elim(th: &Theorem) -> Result<Theorem> {
    let inner = dest_not(th.concl())
        .and_then(dest_not)
        .ok_or_else(|| shape("neg_neg_elim", th))?
        .clone();
    let na = assume(mk_not(inner.clone()))?;
    let fls = infer(Rule::NotE, &[th, &na], &[])?;
    infer(Rule::Ccontr, &[&fls], &[Param::Term(inner)])
}

/// `|- P | ~P`.
pub fn excluded_middle(p: &Term) -> Result<Theorem> {
    let goal = mk_disj(p.clone(), mk_not(p.clone()));
    let nd = assume(mk_not(goal.clone()))?;
    let d1 = infer(
        Rule::DisjI1,
        &[&assume(p.clone())?],
        &[Param::Term(mk_not(p.clone()))],
    )?;
    let f1 = infer(Rule::NotE, &[&nd, &d1], &[])?;
    let np = infer(Rule::NotI, &[&f1], &[Param::Term(p.clone())])?;
    let d2 = infer(Rule::DisjI2, &[&np], &[Param::Term(p.clone())])?;
    let f2 = infer(Rule::NotE, &[&nd, &d2], &[])?;
    infer(Rule::Ccontr, &[&f2], &[Param::Term(goal)])
}

/// From `|- ~(A & B)` derives `|- ~A | ~B`.
pub fn neg_conj_cases(th: &Theorem) -> Result<Theorem> {
    let (a, b) = dest_not(th.concl())
        .and_then(dest_conj)
        .map(|(a, b)| (a.clone(), b.clone()))
        .ok_or_else(|| shape("neg_conj_cases", th))?;
    let goal = mk_disj(mk_not(a.clone()), mk_not(b.clone()));
    let nd = assume(mk_not(goal.clone()))?;
    let pa = {
        let nside = assume(mk_not(a.clone()))?;
        let dis = infer(Rule::DisjI1, &[&nside], &[Param::Term(mk_not(b.clone()))])?;
        let fls = infer(Rule::NotE, &[&nd, &dis], &[])?;
        infer(Rule::Ccontr, &[&fls], &[Param::Term(a.clone())])?
    };
    let pb = {
        let nside = assume(mk_not(b.clone()))?;
        let dis = infer(Rule::DisjI2, &[&nside], &[Param::Term(mk_not(a))])?;
        let fls = infer(Rule::NotE, &[&nd, &dis], &[])?;
        infer(Rule::Ccontr, &[&fls], &[Param::Term(b)])?
    };
    let conj = infer(Rule::ConjI, &[&pa, &pb], &[])?;
    let fls = infer(Rule::NotE, &[th, &conj], &[])?;
    infer(Rule::Ccontr, &[&fls], &[Param::Term(goal)])
}

/// From `|- ~(A | B)` derives `(|- ~A, |- ~B)`.
pub fn neg_disj_components(th: &Theorem) -> Result<(Theorem, Theorem)> {
    let (a, b) = dest_not(th.concl())
        .and_then(dest_disj)
        .map(|(a, b)| (a.clone(), b.clone()))
        .ok_or_else(|| shape("neg_disj_components", th))?;
    let na = {
        let d = infer(
            Rule::DisjI1,
            &[&assume(a.clone())?],
            &[Param::Term(b.clone())],
        )?;
        let fls = infer(Rule::NotE, &[th, &d], &[])?;
        infer(Rule::NotI, &[&fls], &[Param::Term(a.clone())])?
    };
    let nb = {
        let d = infer(Rule::DisjI2, &[&assume(b.clone())?], &[Param::Term(a)])?;
        let fls = infer(Rule::NotE, &[th, &d], &[])?;
        infer(Rule::NotI, &[&fls], &[Param::Term(b)])?
    };
    Ok((na, nb))
}

/// From `|- ~(A --> B)` derives `(|- A, |- ~B)`.
pub fn neg_imp_components(th: &Theorem) -> Result<(Theorem, Theorem)> {
    let (a, b) = dest_not(th.concl())
        .and_then(dest_imp)
        .map(|(a, b)| (a.clone(), b.clone()))
        .ok_or_else(|| shape("neg_imp_components", th))?;
    let pos_a = {
        let na = assume(mk_not(a.clone()))?;
        let fls0 = infer(Rule::NotE, &[&na, &assume(a.clone())?], &[])?;
        let bogus_b = infer(Rule::FalseE, &[&fls0], &[Param::Term(b.clone())])?;
        let imp = infer(Rule::ImpI, &[&bogus_b], &[Param::Term(a.clone())])?;
        let fls = infer(Rule::NotE, &[th, &imp], &[])?;
        infer(Rule::Ccontr, &[&fls], &[Param::Term(a.clone())])?
    };
    let neg_b = {
        let imp = infer(Rule::ImpI, &[&assume(b.clone())?], &[Param::Term(a)])?;
        let fls = infer(Rule::NotE, &[th, &imp], &[])?;
        infer(Rule::NotI, &[&fls], &[Param::Term(b)])?
    };
    Ok((pos_a, neg_b))
}

/// From `|- ~(A <-> B)` derives `|- (A & ~B) | (~A & B)`.
pub fn neg_iff_cases(th: &Theorem) -> Result<Theorem> {
    let (a, b) = dest_not(th.concl())
        .and_then(dest_iff)
        .map(|(a, b)| (a.clone(), b.clone()))
        .ok_or_else(|| shape("neg_iff_cases", th))?;
    let left = mk_conj(a.clone(), mk_not(b.clone()));
    let right = mk_conj(mk_not(a.clone()), b.clone());
    let goal = mk_disj(left.clone(), right.clone());
    let nd = assume(mk_not(goal.clone()))?;
    let fwd = {
        let nb = assume(mk_not(b.clone()))?;
        let c = infer(Rule::ConjI, &[&assume(a.clone())?, &nb], &[])?;
        let d = infer(Rule::DisjI1, &[&c], &[Param::Term(right.clone())])?;
        let fls = infer(Rule::NotE, &[&nd, &d], &[])?;
        let bth = infer(Rule::Ccontr, &[&fls], &[Param::Term(b.clone())])?;
        infer(Rule::ImpI, &[&bth], &[Param::Term(a.clone())])?
    };
    let bwd = {
        let na = assume(mk_not(a.clone()))?;
        let c = infer(Rule::ConjI, &[&na, &assume(b.clone())?], &[])?;
        let d = infer(Rule::DisjI2, &[&c], &[Param::Term(left)])?;
        let fls = infer(Rule::NotE, &[&nd, &d], &[])?;
        let ath = infer(Rule::Ccontr, &[&fls], &[Param::Term(a)])?;
        infer(Rule::ImpI, &[&ath], &[Param::Term(b)])?
    };
    let iff = infer(Rule::IffI, &[&fwd, &bwd], &[])?;
    let fls = infer(Rule::NotE, &[th, &iff], &[])?;
    infer(Rule::Ccontr, &[&fls], &[Param::Term(goal)])
}

/// From `|- ~(!x. P(x))` derives `|- ?x. ~P(x)`. The fresh name must not
/// occur in the theorem.
pub fn not_all_to_ex_not(th: &Theorem, fresh: &str) -> Result<Theorem> {
    let abs = dest_not(th.concl())
        .and_then(dest_all)
        .cloned()
        .ok_or_else(|| shape("not_all_to_ex_not", th))?;
    let c = Term::free(fresh, SimpleType::Set);
    let p_c = Term::app(abs.clone(), c.clone()).beta_normalize();
    let goal = mk_ex_abs(Term::abs(
        fresh,
        SimpleType::Set,
        mk_not(p_c.clone()).abstract_free(fresh),
    ));
    let ne = assume(mk_not(goal.clone()))?;
    let np = assume(mk_not(p_c.clone()))?;
    let ex = infer(
        Rule::ExI,
        &[&np],
        &[Param::Term(goal.clone()), Param::Term(c.clone())],
    )?;
    let fls = infer(Rule::NotE, &[&ne, &ex], &[])?;
    let p = infer(Rule::Ccontr, &[&fls], &[Param::Term(p_c)])?;
    let all = infer(Rule::AllI, &[&p], &[Param::Term(c)])?;
    let fls2 = infer(Rule::NotE, &[th, &all], &[])?;
    infer(Rule::Ccontr, &[&fls2], &[Param::Term(goal)])
}

/// From `|- ~(?x. P(x))` derives `|- !x. ~P(x)`.
pub fn not_ex_to_all_not(th: &Theorem, fresh: &str) -> Result<Theorem> {
    let abs = dest_not(th.concl())
        .and_then(dest_ex)
        .cloned()
        .ok_or_else(|| shape("not_ex_to_all_not", th))?;
    let c = Term::free(fresh, SimpleType::Set);
    let p_c = Term::app(abs.clone(), c.clone()).beta_normalize();
    let ex = infer(
        Rule::ExI,
        &[&assume(p_c.clone())?],
        &[Param::Term(mk_ex_abs(abs.clone())), Param::Term(c.clone())],
    )?;
    let fls = infer(Rule::NotE, &[th, &ex], &[])?;
    let np = infer(Rule::NotI, &[&fls], &[Param::Term(p_c)])?;
    infer(Rule::AllI, &[&np], &[Param::Term(c)])
}

/// From `|- A --> B` and `|- ~B` derives `|- ~A`.
pub fn contrapose(imp: &Theorem, nb: &Theorem) -> Result<Theorem> {
    let (a, _) = dest_imp(imp.concl())
        .map(|(a, b)| (a.clone(), b.clone()))
        .ok_or_else(|| shape("contrapose", imp))?;
    let b_th = infer(Rule::Mp, &[imp, &assume(a.clone())?], &[])?;
    let fls = infer(Rule::NotE, &[nb, &b_th], &[])?;
    infer(Rule::NotI, &[&fls], &[Param::Term(a)])
}

/// Splits a conjunction into its two components.
pub fn conj_components(th: &Theorem) -> Result<(Theorem, Theorem)> {
    Ok((
        infer(Rule::ConjE1, &[th], &[])?,
        infer(Rule::ConjE2, &[th], &[])?,
    ))
}

/// Rewrites the conclusion of `th` into `target` by substituting equal
/// closed set-sort subterms. `eq_for(a, b)` must return a theorem `|- a = b`
/// for each differing pair the walk encounters.
pub fn rewrite_concl_to(
    th: &Theorem,
    target: &Term,
    eq_for: &mut dyn FnMut(&Term, &Term) -> Option<Theorem>,
) -> Option<Theorem> {
    if th.concl() == target {
        return Some(th.clone());
    }
    let mut jobs: Vec<(Vec<u8>, Term, Term)> = Vec::new();
    if !collect_diffs(th.concl(), target, &mut Vec::new(), &mut jobs) {
        return None;
    }
    let mut cur = th.clone();
    for (path, from, to) in jobs {
        let eq = eq_for(&from, &to)?;
        cur = infer(Rule::Subst, &[&eq, &cur], &[Param::Path(path)]).ok()?;
    }
    (cur.concl() == target).then_some(cur)
}

/// Walks two terms in parallel, recording the highest differing positions
/// that are closed set-sort subterms on both sides. Fails on any other
/// mismatch.
pub fn collect_diffs(
    a: &Term,
    b: &Term,
    path: &mut Vec<u8>,
    out: &mut Vec<(Vec<u8>, Term, Term)>,
) -> bool {
    if a == b {
        return true;
    }
    if a.is_closed()
        && b.is_closed()
        && a.typecheck().ok() == Some(SimpleType::Set)
        && b.typecheck().ok() == Some(SimpleType::Set)
    {
        out.push((path.clone(), a.clone(), b.clone()));
        return true;
    }
    match (a, b) {
        (Term::App(f1, a1), Term::App(f2, a2)) => {
            path.push(0);
            let ok = collect_diffs(f1, f2, path, out);
            path.pop();
            if !ok {
                return false;
            }
            path.push(1);
            let ok = collect_diffs(a1, a2, path, out);
            path.pop();
            ok
        }
        (Term::Abs(_, t1, b1), Term::Abs(_, t2, b2)) if t1 == t2 => {
            path.push(0);
            let ok = collect_diffs(b1, b2, path, out);
            path.pop();
            ok
        }
        _ => false,
    }
}

fn shape(name: &str, th: &Theorem) -> KernelError {
    KernelError::RuleShapeMismatch {
        rule: name.into(),
        detail: format!("unexpected conclusion {}", th.concl()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prop(name: &str) -> Term {
        Term::free(name, SimpleType::Prop)
    }

    #[test]
    fn excluded_middle_has_no_hyps() {
        let th = excluded_middle(&prop("P")).unwrap();
        assert!(th.hyps().is_empty());
    }

    #[test]
    fn neg_conj_gives_disjunction() {
        let a = prop("A");
        let b = prop("B");
        let th = assume(mk_not(mk_conj(a.clone(), b.clone()))).unwrap();
        let got = neg_conj_cases(&th).unwrap();
        assert_eq!(got.concl(), &mk_disj(mk_not(a), mk_not(b)));
    }

    #[test]
    fn quantifier_negation_roundtrip() {
        let s = Term::free("s", SimpleType::Set);
        let body = mk_mem(Term::free("x", SimpleType::Set), s);
        let all = mk_all("x", body.clone());
        let th = assume(mk_not(all)).unwrap();
        let ex = not_all_to_ex_not(&th, "c").unwrap();
        assert!(dest_ex(ex.concl()).is_some());
    }

    #[test]
    fn cut_discharges_hypothesis() {
        let a = prop("A");
        let b = prop("B");
        let main = weaken(&assume(b.clone()).unwrap(), &a).unwrap();
        let provided = assume(a.clone()).unwrap();
        let got = cut(&main, &a, &provided).unwrap();
        assert!(got.has_hyp(&a));
        assert_eq!(got.concl(), &b);
    }
}
