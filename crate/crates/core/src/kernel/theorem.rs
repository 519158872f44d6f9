//! Theorems, primitive inference rules and derivation replay.

use std::fmt;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use super::consts;
use super::signature::Signature;
use super::term::{Name, SimpleType, Term};
use super::KernelError;

/// When enabled, every kernel operation records a replayable derivation on
/// the theorem it produces. Disabled runs are faster but cannot be audited.
static RECORDING: AtomicBool = AtomicBool::new(true);

pub fn set_recording(on: bool) {
    RECORDING.store(on, Ordering::Relaxed);
}

pub fn recording_enabled() -> bool {
    RECORDING.load(Ordering::Relaxed)
}

/// The fixed primitive rule set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    Assume,
    ImpI,
    Mp,
    AllI,
    AllE,
    ExI,
    ExE,
    ConjI,
    ConjE1,
    ConjE2,
    DisjI1,
    DisjI2,
    DisjE,
    IffI,
    IffE1,
    IffE2,
    NotI,
    NotE,
    TrueI,
    FalseE,
    Refl,
    Sym,
    Trans,
    Subst,
    Ccontr,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self)
    }
}

/// Extra data a rule application needs besides its premises.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Param {
    Term(Term),
    Path(Vec<u8>),
}

impl Param {
    fn term(&self) -> Option<&Term> {
        match self {
            Param::Term(t) => Some(t),
            _ => None,
        }
    }

    fn path(&self) -> Option<&[u8]> {
        match self {
            Param::Path(p) => Some(p),
            _ => None,
        }
    }
}

/// A replayable record of how a theorem was produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Derivation {
    Assume(Term),
    Axiom(Name),
    Def(Name),
    Infer {
        rule: Rule,
        params: Vec<Param>,
        prems: Vec<Arc<Derivation>>,
    },
    Inst {
        subst: Vec<(Name, Term)>,
        prem: Arc<Derivation>,
    },
    Gen {
        names: Vec<Name>,
        prem: Arc<Derivation>,
    },
}

#[derive(Debug, PartialEq, Eq)]
struct ThmInner {
    hyps: Vec<Term>,
    concl: Term,
    deriv: Option<Arc<Derivation>>,
}

/// A proven judgment `hyps |- concl`. Values of this type can only be
/// produced by the kernel operations in this module.
#[derive(Clone)]
pub struct Theorem {
    inner: Arc<ThmInner>,
}

impl PartialEq for Theorem {
    fn eq(&self, other: &Self) -> bool {
        self.inner.hyps == other.inner.hyps && self.inner.concl == other.inner.concl
    }
}

impl Eq for Theorem {}

impl fmt::Debug for Theorem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self)
    }
}

impl fmt::Display for Theorem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, h) in self.inner.hyps.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{}", h)?;
        }
        write!(f, " |- {}", self.inner.concl)
    }
}

impl Theorem {
    pub fn hyps(&self) -> &[Term] {
        &self.inner.hyps
    }

    pub fn concl(&self) -> &Term {
        &self.inner.concl
    }

    pub fn derivation(&self) -> Option<&Arc<Derivation>> {
        self.inner.deriv.as_ref()
    }

    pub fn has_hyp(&self, p: &Term) -> bool {
        self.inner.hyps.binary_search(p).is_ok()
    }
}

fn sorted_hyps(mut hyps: Vec<Term>) -> Vec<Term> {
    hyps.sort();
    hyps.dedup();
    hyps
}

fn union_hyps(a: &[Term], b: &[Term]) -> Vec<Term> {
    let mut out = a.to_vec();
    out.extend_from_slice(b);
    sorted_hyps(out)
}

fn remove_hyp(hyps: &[Term], p: &Term) -> Vec<Term> {
    hyps.iter().filter(|h| *h != p).cloned().collect()
}

fn mk_thm(hyps: Vec<Term>, concl: Term, deriv: Option<Derivation>) -> Theorem {
    Theorem {
        inner: Arc::new(ThmInner {
            hyps: sorted_hyps(hyps),
            concl,
            deriv: deriv.map(Arc::new),
        }),
    }
}

/// Combines premise derivations into one, if recording is on and every
/// premise carries a derivation.
fn infer_deriv(rule: Rule, params: &[Param], prems: &[&Theorem]) -> Option<Derivation> {
    if !recording_enabled() {
        return None;
    }
    let mut ds = Vec::with_capacity(prems.len());
    for p in prems {
        ds.push(p.inner.deriv.clone()?);
    }
    Some(Derivation::Infer {
        rule,
        params: params.to_vec(),
        prems: ds,
    })
}

fn shape_err(rule: Rule, detail: impl Into<String>) -> KernelError {
    KernelError::RuleShapeMismatch {
        rule: rule.to_string(),
        detail: detail.into(),
    }
}

fn check_prop(rule: Rule, t: &Term) -> Result<(), KernelError> {
    if !t.is_closed() {
        return Err(shape_err(rule, format!("proposition not closed: {}", t)));
    }
    match t.typecheck()? {
        SimpleType::Prop => Ok(()),
        ty => Err(shape_err(rule, format!("expected o, got {}: {}", ty, t))),
    }
}

/// `{P} |- P`.
pub fn assume(p: Term) -> Result<Theorem, KernelError> {
    check_prop(Rule::Assume, &p)?;
    let deriv = recording_enabled().then(|| Derivation::Assume(p.clone()));
    Ok(mk_thm(vec![p.clone()], p, deriv))
}

/// Used by the signature to mint axiom and definition theorems.
pub(super) fn axiom_thm(
    name: &Name,
    hyps: Vec<Term>,
    concl: Term,
    is_def: bool,
) -> Theorem {
    let deriv = recording_enabled().then(|| {
        if is_def {
            Derivation::Def(name.clone())
        } else {
            Derivation::Axiom(name.clone())
        }
    });
    mk_thm(hyps, concl, deriv)
}

/// Applies one primitive rule. Premises and parameters must fit the rule's
/// shape; see the match arms for each rule's contract.
pub fn infer(rule: Rule, prems: &[&Theorem], params: &[Param]) -> Result<Theorem, KernelError> {
    let deriv = infer_deriv(rule, params, prems);
    let wrong_arity = || shape_err(rule, "wrong number of premises or parameters");
    match rule {
        Rule::Assume => {
            let p = params.first().and_then(Param::term).ok_or_else(wrong_arity)?;
            check_prop(rule, p)?;
            Ok(mk_thm(vec![p.clone()], p.clone(), deriv))
        }
        Rule::ImpI => {
            let th = prems.first().ok_or_else(wrong_arity)?;
            let a = params.first().and_then(Param::term).ok_or_else(wrong_arity)?;
            check_prop(rule, a)?;
            let hyps = remove_hyp(th.hyps(), a);
            let concl = consts::mk_imp(a.clone(), th.concl().clone());
            Ok(mk_thm(hyps, concl, deriv))
        }
        Rule::Mp => {
            let [imp, arg] = prems else { return Err(wrong_arity()) };
            let (a, b) = consts::dest_imp(imp.concl())
                .ok_or_else(|| shape_err(rule, format!("not an implication: {}", imp.concl())))?;
            if arg.concl() != a {
                return Err(shape_err(
                    rule,
                    format!("antecedent mismatch: {} vs {}", a, arg.concl()),
                ));
            }
            Ok(mk_thm(union_hyps(imp.hyps(), arg.hyps()), b.clone(), deriv))
        }
        Rule::AllI => {
            let th = prems.first().ok_or_else(wrong_arity)?;
            let v = params.first().and_then(Param::term).ok_or_else(wrong_arity)?;
            let Term::Free(name, ty) = v else {
                return Err(shape_err(rule, "parameter must be a free variable"));
            };
            if *ty != SimpleType::Set {
                return Err(shape_err(rule, "quantification is over sort i only"));
            }
            if th.hyps().iter().any(|h| h.contains_free(name)) {
                return Err(KernelError::EigenvariableViolation(name.to_string()));
            }
            let body = th.concl().abstract_free(name);
            let concl = consts::mk_all_abs(Term::Abs(
                name.clone(),
                SimpleType::Set,
                Arc::new(body),
            ));
            Ok(mk_thm(th.hyps().to_vec(), concl, deriv))
        }
        Rule::AllE => {
            let th = prems.first().ok_or_else(wrong_arity)?;
            let t = params.first().and_then(Param::term).ok_or_else(wrong_arity)?;
            let abs = consts::dest_all(th.concl())
                .ok_or_else(|| shape_err(rule, format!("not universal: {}", th.concl())))?;
            if !t.is_closed() || t.typecheck()? != SimpleType::Set {
                return Err(shape_err(rule, "witness must be a closed term of sort i"));
            }
            let concl = Term::app(abs.clone(), t.clone()).beta_normalize();
            Ok(mk_thm(th.hyps().to_vec(), concl, deriv))
        }
        Rule::ExI => {
            let th = prems.first().ok_or_else(wrong_arity)?;
            let target = params.first().and_then(Param::term).ok_or_else(wrong_arity)?;
            let witness = params.get(1).and_then(Param::term).ok_or_else(wrong_arity)?;
            let abs = consts::dest_ex(target)
                .ok_or_else(|| shape_err(rule, format!("not existential: {}", target)))?;
            check_prop(rule, target)?;
            let expected = Term::app(abs.clone(), witness.clone()).beta_normalize();
            if *th.concl() != expected {
                return Err(shape_err(
                    rule,
                    format!("premise {} is not the instance {}", th.concl(), expected),
                ));
            }
            Ok(mk_thm(th.hyps().to_vec(), target.clone(), deriv))
        }
        Rule::ExE => {
            let [ex, uses] = prems else { return Err(wrong_arity()) };
            let v = params.first().and_then(Param::term).ok_or_else(wrong_arity)?;
            let Term::Free(name, ty) = v else {
                return Err(shape_err(rule, "eigenvariable must be a free variable"));
            };
            if *ty != SimpleType::Set {
                return Err(shape_err(rule, "eigenvariable must have sort i"));
            }
            let abs = consts::dest_ex(ex.concl())
                .ok_or_else(|| shape_err(rule, format!("not existential: {}", ex.concl())))?;
            let inst = Term::app(abs.clone(), v.clone()).beta_normalize();
            let hyps2 = remove_hyp(uses.hyps(), &inst);
            if uses.concl().contains_free(name)
                || hyps2.iter().any(|h| h.contains_free(name))
                || ex.hyps().iter().any(|h| h.contains_free(name))
                || ex.concl().contains_free(name)
            {
                return Err(KernelError::EigenvariableViolation(name.to_string()));
            }
            Ok(mk_thm(
                union_hyps(ex.hyps(), &hyps2),
                uses.concl().clone(),
                deriv,
            ))
        }
        Rule::ConjI => {
            let [a, b] = prems else { return Err(wrong_arity()) };
            Ok(mk_thm(
                union_hyps(a.hyps(), b.hyps()),
                consts::mk_conj(a.concl().clone(), b.concl().clone()),
                deriv,
            ))
        }
        Rule::ConjE1 | Rule::ConjE2 => {
            let th = prems.first().ok_or_else(wrong_arity)?;
            let (a, b) = consts::dest_conj(th.concl())
                .ok_or_else(|| shape_err(rule, format!("not a conjunction: {}", th.concl())))?;
            let pick = if rule == Rule::ConjE1 { a } else { b };
            Ok(mk_thm(th.hyps().to_vec(), pick.clone(), deriv))
        }
        Rule::DisjI1 => {
            let th = prems.first().ok_or_else(wrong_arity)?;
            let b = params.first().and_then(Param::term).ok_or_else(wrong_arity)?;
            check_prop(rule, b)?;
            Ok(mk_thm(
                th.hyps().to_vec(),
                consts::mk_disj(th.concl().clone(), b.clone()),
                deriv,
            ))
        }
        Rule::DisjI2 => {
            let th = prems.first().ok_or_else(wrong_arity)?;
            let a = params.first().and_then(Param::term).ok_or_else(wrong_arity)?;
            check_prop(rule, a)?;
            Ok(mk_thm(
                th.hyps().to_vec(),
                consts::mk_disj(a.clone(), th.concl().clone()),
                deriv,
            ))
        }
        Rule::DisjE => {
            let [dis, left, right] = prems else { return Err(wrong_arity()) };
            let (a, b) = consts::dest_disj(dis.concl())
                .ok_or_else(|| shape_err(rule, format!("not a disjunction: {}", dis.concl())))?;
            if left.concl() != right.concl() {
                return Err(shape_err(rule, "branch conclusions differ"));
            }
            let hyps = union_hyps(
                dis.hyps(),
                &union_hyps(&remove_hyp(left.hyps(), a), &remove_hyp(right.hyps(), b)),
            );
            Ok(mk_thm(hyps, left.concl().clone(), deriv))
        }
        Rule::IffI => {
            let [fwd, bwd] = prems else { return Err(wrong_arity()) };
            let (a, b) = consts::dest_imp(fwd.concl())
                .ok_or_else(|| shape_err(rule, "first premise must be an implication"))?;
            let (b2, a2) = consts::dest_imp(bwd.concl())
                .ok_or_else(|| shape_err(rule, "second premise must be an implication"))?;
            if a != a2 || b != b2 {
                return Err(shape_err(rule, "implications are not converse"));
            }
            Ok(mk_thm(
                union_hyps(fwd.hyps(), bwd.hyps()),
                consts::mk_iff(a.clone(), b.clone()),
                deriv,
            ))
        }
        Rule::IffE1 | Rule::IffE2 => {
            let th = prems.first().ok_or_else(wrong_arity)?;
            let (a, b) = consts::dest_iff(th.concl())
                .ok_or_else(|| shape_err(rule, format!("not an iff: {}", th.concl())))?;
            let concl = if rule == Rule::IffE1 {
                consts::mk_imp(a.clone(), b.clone())
            } else {
                consts::mk_imp(b.clone(), a.clone())
            };
            Ok(mk_thm(th.hyps().to_vec(), concl, deriv))
        }
        Rule::NotI => {
            let th = prems.first().ok_or_else(wrong_arity)?;
            let a = params.first().and_then(Param::term).ok_or_else(wrong_arity)?;
            if !consts::is_false(th.concl()) {
                return Err(shape_err(rule, "premise must conclude False"));
            }
            check_prop(rule, a)?;
            Ok(mk_thm(
                remove_hyp(th.hyps(), a),
                consts::mk_not(a.clone()),
                deriv,
            ))
        }
        Rule::NotE => {
            let [neg, pos] = prems else { return Err(wrong_arity()) };
            let a = consts::dest_not(neg.concl())
                .ok_or_else(|| shape_err(rule, format!("not a negation: {}", neg.concl())))?;
            if pos.concl() != a {
                return Err(shape_err(
                    rule,
                    format!("negation mismatch: {} vs {}", a, pos.concl()),
                ));
            }
            Ok(mk_thm(
                union_hyps(neg.hyps(), pos.hyps()),
                consts::mk_false(),
                deriv,
            ))
        }
        Rule::TrueI => Ok(mk_thm(Vec::new(), consts::mk_true(), deriv)),
        Rule::FalseE => {
            let th = prems.first().ok_or_else(wrong_arity)?;
            let p = params.first().and_then(Param::term).ok_or_else(wrong_arity)?;
            if !consts::is_false(th.concl()) {
                return Err(shape_err(rule, "premise must conclude False"));
            }
            check_prop(rule, p)?;
            Ok(mk_thm(th.hyps().to_vec(), p.clone(), deriv))
        }
        Rule::Refl => {
            let t = params.first().and_then(Param::term).ok_or_else(wrong_arity)?;
            if !t.is_closed() || t.typecheck()? != SimpleType::Set {
                return Err(shape_err(rule, "refl needs a closed term of sort i"));
            }
            Ok(mk_thm(Vec::new(), consts::mk_eq(t.clone(), t.clone()), deriv))
        }
        Rule::Sym => {
            let th = prems.first().ok_or_else(wrong_arity)?;
            let (a, b) = consts::dest_eq(th.concl())
                .ok_or_else(|| shape_err(rule, format!("not an equality: {}", th.concl())))?;
            Ok(mk_thm(
                th.hyps().to_vec(),
                consts::mk_eq(b.clone(), a.clone()),
                deriv,
            ))
        }
        Rule::Trans => {
            let [ab, bc] = prems else { return Err(wrong_arity()) };
            let (a, b) = consts::dest_eq(ab.concl())
                .ok_or_else(|| shape_err(rule, "first premise must be an equality"))?;
            let (b2, c) = consts::dest_eq(bc.concl())
                .ok_or_else(|| shape_err(rule, "second premise must be an equality"))?;
            if b != b2 {
                return Err(shape_err(rule, format!("middle terms differ: {} vs {}", b, b2)));
            }
            Ok(mk_thm(
                union_hyps(ab.hyps(), bc.hyps()),
                consts::mk_eq(a.clone(), c.clone()),
                deriv,
            ))
        }
        Rule::Subst => {
            // Rewrites one subterm occurrence (by path) under an equality.
            let [eq, target] = prems else { return Err(wrong_arity()) };
            let path = params.first().and_then(Param::path).ok_or_else(wrong_arity)?;
            let (a, b) = consts::dest_eq(eq.concl())
                .ok_or_else(|| shape_err(rule, "first premise must be an equality"))?;
            let sub = target
                .concl()
                .subterm_at(path)
                .ok_or_else(|| shape_err(rule, "invalid path"))?;
            if sub != a {
                return Err(shape_err(
                    rule,
                    format!("subterm at path is {}, not {}", sub, a),
                ));
            }
            if !sub.is_closed() {
                return Err(shape_err(rule, "cannot rewrite an open subterm"));
            }
            let concl = target
                .concl()
                .replace_at(path, b)
                .ok_or_else(|| shape_err(rule, "invalid path"))?;
            Ok(mk_thm(union_hyps(eq.hyps(), target.hyps()), concl, deriv))
        }
        Rule::Ccontr => {
            let th = prems.first().ok_or_else(wrong_arity)?;
            let a = params.first().and_then(Param::term).ok_or_else(wrong_arity)?;
            if !consts::is_false(th.concl()) {
                return Err(shape_err(rule, "premise must conclude False"));
            }
            check_prop(rule, a)?;
            let na = consts::mk_not(a.clone());
            Ok(mk_thm(remove_hyp(th.hyps(), &na), a.clone(), deriv))
        }
    }
}

/// Instantiates schematic variables with closed, type-correct terms and
/// beta-normalizes the result.
pub fn instantiate(th: &Theorem, subst: &[(Name, Term)]) -> Result<Theorem, KernelError> {
    let mut present: Vec<(Name, SimpleType)> = Vec::new();
    th.concl().schematics(&mut present);
    for h in th.hyps() {
        h.schematics(&mut present);
    }
    for (name, value) in subst {
        let ty = present
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, ty)| ty.clone())
            .ok_or_else(|| KernelError::UnknownSchematic(name.to_string()))?;
        if !value.is_closed() {
            return Err(KernelError::OpenSubstitution(name.to_string()));
        }
        let vty = value.typecheck()?;
        if vty != ty {
            return Err(KernelError::TypeMismatch {
                fun_ty: ty.to_string(),
                arg_ty: vty.to_string(),
            });
        }
    }
    let subst_vec: Vec<(Name, Term)> = subst.to_vec();
    let hyps = th
        .hyps()
        .iter()
        .map(|h| h.subst_schematics(&subst_vec).beta_normalize())
        .collect();
    let concl = th.concl().subst_schematics(&subst_vec).beta_normalize();
    let deriv = match (&th.inner.deriv, recording_enabled()) {
        (Some(d), true) => Some(Derivation::Inst {
            subst: subst_vec,
            prem: d.clone(),
        }),
        _ => None,
    };
    Ok(mk_thm(hyps, concl, deriv))
}

/// Turns free variables into schematic variables across the whole theorem.
/// Sound because free variables are arbitrary.
pub fn generalize(th: &Theorem, names: &[Name]) -> Result<Theorem, KernelError> {
    fn gen_term(t: &Term, names: &[Name]) -> Term {
        match t {
            Term::Free(n, ty) if names.iter().any(|m| m == n) => {
                Term::Schematic(n.clone(), ty.clone())
            }
            Term::Abs(h, ty, b) => {
                Term::Abs(h.clone(), ty.clone(), Arc::new(gen_term(b, names)))
            }
            Term::App(f, a) => Term::App(
                Arc::new(gen_term(f, names)),
                Arc::new(gen_term(a, names)),
            ),
            _ => t.clone(),
        }
    }
    for n in names {
        if th.concl().contains_schematic(n)
            || th.hyps().iter().any(|h| h.contains_schematic(n))
        {
            return Err(KernelError::DuplicateName(n.to_string()));
        }
    }
    let hyps = th.hyps().iter().map(|h| gen_term(h, names)).collect();
    let concl = gen_term(th.concl(), names);
    let deriv = match (&th.inner.deriv, recording_enabled()) {
        (Some(d), true) => Some(Derivation::Gen {
            names: names.to_vec(),
            prem: d.clone(),
        }),
        _ => None,
    };
    Ok(mk_thm(hyps, concl, deriv))
}

/// Re-executes a derivation against a signature, reproducing the theorem it
/// proves. Any failing step is a `ReplayMismatch`.
pub fn replay(d: &Derivation, sig: &Signature) -> Result<Theorem, KernelError> {
    match d {
        Derivation::Assume(p) => assume(p.clone()),
        Derivation::Axiom(name) => sig
            .axiom(name)
            .cloned()
            .ok_or_else(|| KernelError::ReplayMismatch(format!("unknown axiom {}", name))),
        Derivation::Def(name) => sig
            .definition(name)
            .cloned()
            .ok_or_else(|| KernelError::ReplayMismatch(format!("unknown definition {}", name))),
        Derivation::Infer { rule, params, prems } => {
            let mut ths = Vec::with_capacity(prems.len());
            for p in prems {
                ths.push(replay(p, sig)?);
            }
            let refs: Vec<&Theorem> = ths.iter().collect();
            infer(*rule, &refs, params)
                .map_err(|e| KernelError::ReplayMismatch(e.to_string()))
        }
        Derivation::Inst { subst, prem } => {
            let th = replay(prem, sig)?;
            instantiate(&th, subst).map_err(|e| KernelError::ReplayMismatch(e.to_string()))
        }
        Derivation::Gen { names, prem } => {
            let th = replay(prem, sig)?;
            generalize(&th, names).map_err(|e| KernelError::ReplayMismatch(e.to_string()))
        }
    }
}

/// Replays a theorem's recorded derivation and checks the result matches.
pub fn replay_check(th: &Theorem, sig: &Signature) -> Result<(), KernelError> {
    let d = th
        .derivation()
        .ok_or_else(|| KernelError::ReplayMismatch("no derivation recorded".into()))?;
    let re = replay(d, sig)?;
    if re == *th {
        Ok(())
    } else {
        Err(KernelError::ReplayMismatch(format!(
            "derivation proves {} but theorem states {}",
            re, th
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::consts::*;

    fn prop(name: &str) -> Term {
        Term::free(name, SimpleType::Prop)
    }

    #[test]
    fn assume_gives_identity_sequent() {
        let p = prop("P");
        let th = assume(p.clone()).unwrap();
        assert_eq!(th.hyps(), &[p.clone()]);
        assert_eq!(th.concl(), &p);
    }

    #[test]
    fn modus_ponens() {
        let a = prop("A");
        let b = prop("B");
        let ab = infer(
            Rule::ImpI,
            &[&assume(b.clone()).unwrap()],
            &[Param::Term(a.clone())],
        )
        .unwrap();
        // {B} |- A --> B, weakest valid implication for this test.
        let got = infer(Rule::Mp, &[&ab, &assume(a.clone()).unwrap()], &[]).unwrap();
        assert_eq!(got.concl(), &b);
        assert!(got.has_hyp(&a));
        assert!(got.has_hyp(&b));
    }

    #[test]
    fn subst_rewrites_one_occurrence() {
        let a = Term::free("a", SimpleType::Set);
        let b = Term::free("b", SimpleType::Set);
        let pa = mk_mem(a.clone(), Term::free("s", SimpleType::Set));
        let eq = assume(mk_eq(a.clone(), b.clone())).unwrap();
        let target = assume(pa.clone()).unwrap();
        let path = pa.find_occurrences(&a)[0].clone();
        let got = infer(Rule::Subst, &[&eq, &target], &[Param::Path(path)]).unwrap();
        assert_eq!(
            got.concl(),
            &mk_mem(b, Term::free("s", SimpleType::Set))
        );
    }

    #[test]
    fn alli_blocks_eigenvariable_in_hyps() {
        let x = Term::free("x", SimpleType::Set);
        let p = mk_mem(x.clone(), Term::free("s", SimpleType::Set));
        let th = assume(p).unwrap();
        let err = infer(Rule::AllI, &[&th], &[Param::Term(x)]);
        assert!(matches!(err, Err(KernelError::EigenvariableViolation(_))));
    }

    #[test]
    fn ccontr_discharges_negation() {
        let a = prop("A");
        let na = mk_not(a.clone());
        // {~A, A} |- False, then ccontr gives {A} |- A... use plain False.
        let fls = infer(
            Rule::NotE,
            &[&assume(na.clone()).unwrap(), &assume(a.clone()).unwrap()],
            &[],
        )
        .unwrap();
        let got = infer(Rule::Ccontr, &[&fls], &[Param::Term(a.clone())]).unwrap();
        assert_eq!(got.concl(), &a);
        assert_eq!(got.hyps(), &[a]);
    }

    #[test]
    fn replay_reproduces_assume() {
        set_recording(true);
        let p = prop("P");
        let th = assume(p).unwrap();
        let sig = Signature::new();
        assert!(replay_check(&th, &sig).is_ok());
    }

    #[test]
    fn corrupted_derivation_fails_replay() {
        set_recording(true);
        let a = prop("A");
        let b = prop("B");
        let conj = infer(
            Rule::ConjI,
            &[&assume(a.clone()).unwrap(), &assume(b.clone()).unwrap()],
            &[],
        )
        .unwrap();
        let proj = infer(Rule::ConjE1, &[&conj], &[]).unwrap();
        // Swap the rule name in the recorded derivation.
        let Derivation::Infer { params, prems, .. } = proj.derivation().unwrap().as_ref().clone()
        else {
            panic!("expected an Infer node");
        };
        let bad = Derivation::Infer {
            rule: Rule::ConjE2,
            params,
            prems,
        };
        let sig = Signature::new();
        let re = replay(&bad, &sig).unwrap();
        // Replays fine but proves a different theorem.
        assert_ne!(re, proj);
    }

    #[test]
    fn instantiate_unknown_schematic_rejected() {
        let p = prop("P");
        let th = assume(p).unwrap();
        let err = instantiate(
            &th,
            &[(Arc::from("x"), Term::free("a", SimpleType::Set))],
        );
        assert!(matches!(err, Err(KernelError::UnknownSchematic(_))));
    }
}
