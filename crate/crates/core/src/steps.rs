//! Standard proof steps compiled from attributed theorems.
//!
//! A step's theorem is split into main patterns (matched against one or two
//! items, up to rewriting) and side conditions discharged from the property,
//! well-form and rewrite tables. The registry supports registration and
//! deletion at any point between proofs.

use std::fmt;
use std::sync::Arc;

use indexmap::IndexMap;
use thiserror::Error;

use crate::congruence::MatchCaps;
use crate::derived;
use crate::kernel::consts;
use crate::kernel::{infer, instantiate, Name, Param, Rule, SimpleType, Term, Theorem};
use crate::tables::{TableDecls, Tables};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StepError {
    #[error("too many main patterns in {0} (at most 2 after classification)")]
    TooManyMainPatterns(String),
    #[error("no main pattern in {0}")]
    NoMainPattern(String),
    #[error("unknown step id: {0}")]
    UnknownId(String),
    #[error("attribute {0} cannot compile this theorem: {1}")]
    BadShape(String, String),
}

/// The attribute a theorem is registered with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Attribute {
    Rewrite,
    Forward,
    Backward,
    Resolve,
    Typing,
}

impl Attribute {
    pub fn parse(s: &str) -> Option<Attribute> {
        match s {
            "rewrite" => Some(Attribute::Rewrite),
            "forward" => Some(Attribute::Forward),
            "backward" => Some(Attribute::Backward),
            "resolve" => Some(Attribute::Resolve),
            "typing" => Some(Attribute::Typing),
            _ => None,
        }
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Attribute::Rewrite => "rewrite",
            Attribute::Forward => "forward",
            Attribute::Backward => "backward",
            Attribute::Resolve => "resolve",
            Attribute::Typing => "typing",
        };
        write!(f, "{}", s)
    }
}

/// Built-in special steps (implemented as procedures, not compiled).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpecialKind {
    /// Case split on the condition of an `ite` term occurrence.
    IteSplit,
    /// Normalize two terms over the same structure; equal forms emit s = t.
    EquateNormalize,
    /// Ordered-ring comparison step: a <= b with ~(c <= d) closes the box
    /// when b - a and d - c normalize identically.
    OrdRingContra,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    Rewrite,
    Forward,
    Backward,
    Resolve,
    Typing,
    Special(SpecialKind),
}

impl StepKind {
    /// Priority penalty added to an application's score; lower fires earlier.
    pub fn penalty(&self) -> u64 {
        match self {
            StepKind::Resolve => 0,
            StepKind::Rewrite => 1,
            StepKind::Typing => 2,
            StepKind::Forward => 4,
            StepKind::Backward => 6,
            StepKind::Special(SpecialKind::OrdRingContra) => 1,
            StepKind::Special(SpecialKind::EquateNormalize) => 3,
            StepKind::Special(SpecialKind::IteSplit) => 8,
        }
    }
}

/// A main pattern: matched against a PROP item's statement or a TERM item.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MainPattern {
    Prop(Term),
    TermPat(Term),
}

impl MainPattern {
    pub fn term(&self) -> &Term {
        match self {
            MainPattern::Prop(t) | MainPattern::TermPat(t) => t,
        }
    }
}

/// A compiled proof step.
#[derive(Debug, Clone)]
pub struct ProofStepSpec {
    pub id: String,
    pub origin: Theorem,
    pub kind: StepKind,
    pub patterns: Vec<MainPattern>,
    /// Side conditions whose head is a registered property.
    pub property_conds: Vec<Term>,
    /// Side conditions instantiating registered well-form conditions.
    pub wellform_conds: Vec<Term>,
    /// Equality assumptions resolved by e-matching or a table check.
    pub binding_conds: Vec<Term>,
    /// Remaining side conditions checked against recorded facts.
    pub check_conds: Vec<Term>,
    /// BACKWARD only: the assumption emitted (negated) as the new goal.
    pub goal_assumption: Option<Term>,
    /// Extra conclusion conjuncts emitted alongside a rewrite.
    pub extra_concls: Vec<Term>,
    /// The conclusion part driving the step (equality/iff for rewrites).
    pub main_concl: Term,
    /// Plain (Miller) matching only; never matched modulo the table.
    pub higher_order: bool,
}

/// A special step registered in the registry.
pub fn special_spec(id: &str, kind: SpecialKind) -> ProofStepSpec {
    ProofStepSpec {
        id: id.to_string(),
        origin: crate::kernel::infer(Rule::TrueI, &[], &[]).expect("TrueI"),
        kind: StepKind::Special(kind),
        patterns: Vec::new(),
        property_conds: Vec::new(),
        wellform_conds: Vec::new(),
        binding_conds: Vec::new(),
        check_conds: Vec::new(),
        goal_assumption: None,
        extra_concls: Vec::new(),
        main_concl: consts::mk_true(),
        higher_order: false,
    }
}

/// Classifies the assumptions of `th` and produces a proof-step spec.
pub fn compile(
    th: &Theorem,
    attr: Attribute,
    id: &str,
    decls: &TableDecls,
) -> Result<ProofStepSpec, StepError> {
    let concl = th.concl().clone();
    let mut property_conds = Vec::new();
    let mut wellform_conds = Vec::new();
    let mut binding_conds = Vec::new();
    let mut mains: Vec<Term> = Vec::new();

    // Split a conjunction conclusion into the main part and extras.
    let (main_concl, extra_concls) = split_concl(&concl, attr);

    // First pass: property conditions.
    let mut rest: Vec<Term> = Vec::new();
    for h in th.hyps() {
        let is_prop_cond = h
            .head_const()
            .is_some_and(|n| decls.is_property(n) && consts::dest_not(h).is_none());
        if is_prop_cond {
            property_conds.push(h.clone());
        } else {
            rest.push(h.clone());
        }
    }

    // Second pass: equality assumptions with a bare schematic side become
    // binding conditions (solved by e-matching during application).
    let mut rest2: Vec<Term> = Vec::new();
    for h in rest {
        let is_binding = consts::dest_eq(&h)
            .map(|(l, r)| {
                matches!(l, Term::Schematic(..)) || matches!(r, Term::Schematic(..))
            })
            .unwrap_or(false);
        if is_binding {
            binding_conds.push(h.clone());
        } else {
            rest2.push(h);
        }
    }

    // Third pass: assumptions instantiating a registered well-form condition
    // of a subterm of the other assumptions or the conclusion.
    let mut rest3: Vec<Term> = Vec::new();
    for (i, h) in rest2.iter().enumerate() {
        let mut carriers: Vec<&Term> = vec![&concl];
        for (j, other) in rest2.iter().enumerate() {
            if i != j {
                carriers.push(other);
            }
        }
        if is_wellform_instance(h, &carriers, decls) {
            wellform_conds.push(h.clone());
        } else {
            rest3.push(h.clone());
        }
    }
    mains.extend(rest3);

    // Assemble patterns by kind.
    let mut patterns: Vec<MainPattern> = Vec::new();
    let mut goal_assumption = None;
    let mut check_conds: Vec<Term> = Vec::new();
    let kind = match attr {
        Attribute::Rewrite => {
            let lhs = match (consts::dest_eq(&main_concl), consts::dest_iff(&main_concl)) {
                (Some((l, _)), _) => MainPattern::TermPat(l.clone()),
                (_, Some((l, _))) => MainPattern::Prop(l.clone()),
                _ => {
                    return Err(StepError::BadShape(
                        attr.to_string(),
                        format!("{} is not an equality or iff", main_concl),
                    ))
                }
            };
            patterns.push(lhs);
            // Remaining main assumptions become a partner or checks.
            if let Some(first) = mains.first() {
                patterns.push(MainPattern::Prop(first.clone()));
            }
            check_conds.extend(mains.iter().skip(1).cloned());
            StepKind::Rewrite
        }
        Attribute::Forward => {
            if mains.is_empty() {
                return Err(StepError::NoMainPattern(id.to_string()));
            }
            if mains.len() > 2 {
                return Err(StepError::TooManyMainPatterns(id.to_string()));
            }
            for m in &mains {
                patterns.push(MainPattern::Prop(m.clone()));
            }
            // Conclusion schematics not bound by any pattern or condition
            // are matched against the existing term universe.
            let missing = missing_schematics(&concl, &patterns, &[
                &property_conds,
                &wellform_conds,
                &binding_conds,
            ]);
            if !missing.is_empty() {
                if patterns.len() >= 2 {
                    return Err(StepError::TooManyMainPatterns(id.to_string()));
                }
                let carrier = smallest_covering_subterm(&main_concl, &missing)
                    .ok_or_else(|| {
                        StepError::BadShape(
                            attr.to_string(),
                            format!("cannot cover schematics of {}", main_concl),
                        )
                    })?;
                patterns.push(MainPattern::TermPat(carrier));
            }
            StepKind::Forward
        }
        Attribute::Backward => {
            patterns.push(MainPattern::Prop(consts::mk_not(main_concl.clone())));
            if let Some(goal) = mains.pop() {
                goal_assumption = Some(goal);
            }
            if mains.len() > 1 {
                return Err(StepError::TooManyMainPatterns(id.to_string()));
            }
            if let Some(first) = mains.first() {
                patterns.push(MainPattern::Prop(first.clone()));
            }
            StepKind::Backward
        }
        Attribute::Resolve => {
            if consts::is_false(&main_concl) {
                if mains.is_empty() {
                    return Err(StepError::NoMainPattern(id.to_string()));
                }
                if mains.len() > 2 {
                    return Err(StepError::TooManyMainPatterns(id.to_string()));
                }
                for m in &mains {
                    patterns.push(MainPattern::Prop(m.clone()));
                }
            } else if let Some(inner) = consts::dest_not(&main_concl) {
                patterns.push(MainPattern::Prop(inner.clone()));
                if mains.len() > 1 {
                    return Err(StepError::TooManyMainPatterns(id.to_string()));
                }
                if let Some(first) = mains.first() {
                    patterns.push(MainPattern::Prop(first.clone()));
                }
            } else {
                patterns.push(MainPattern::Prop(consts::mk_not(main_concl.clone())));
                if mains.len() > 1 {
                    return Err(StepError::TooManyMainPatterns(id.to_string()));
                }
                if let Some(first) = mains.first() {
                    patterns.push(MainPattern::Prop(first.clone()));
                }
            }
            StepKind::Resolve
        }
        Attribute::Typing => {
            // Trigger on the TERM item of the conclusion's subject.
            let subject = typing_subject(&main_concl).ok_or_else(|| {
                StepError::BadShape(
                    attr.to_string(),
                    format!("no subject term in {}", main_concl),
                )
            })?;
            patterns.push(MainPattern::TermPat(subject));
            if mains.len() > 1 {
                return Err(StepError::TooManyMainPatterns(id.to_string()));
            }
            if let Some(first) = mains.first() {
                patterns.push(MainPattern::Prop(first.clone()));
            }
            StepKind::Typing
        }
    };
    if patterns.is_empty() {
        return Err(StepError::NoMainPattern(id.to_string()));
    }
    if patterns.len() > 2 {
        return Err(StepError::TooManyMainPatterns(id.to_string()));
    }
    let higher_order = patterns.iter().any(|p| has_higher_order(p.term()));
    Ok(ProofStepSpec {
        id: id.to_string(),
        origin: th.clone(),
        kind,
        patterns,
        property_conds,
        wellform_conds,
        binding_conds,
        check_conds,
        goal_assumption,
        extra_concls,
        main_concl,
        higher_order,
    })
}

fn split_concl(concl: &Term, attr: Attribute) -> (Term, Vec<Term>) {
    if attr == Attribute::Rewrite {
        if let Some((a, b)) = consts::dest_conj(concl) {
            let mut extras = Vec::new();
            let mut cur = b.clone();
            loop {
                if let Some((x, y)) = consts::dest_conj(&cur) {
                    extras.push(x.clone());
                    cur = y.clone();
                } else {
                    extras.push(cur);
                    break;
                }
            }
            return (a.clone(), extras);
        }
    }
    (concl.clone(), Vec::new())
}

/// True when `h` instantiates a registered well-form condition of a subterm
/// occurring in the given carrier propositions.
fn is_wellform_instance(h: &Term, carriers: &[&Term], decls: &TableDecls) -> bool {
    let mut found = false;
    for c in carriers {
        visit_subterms(c, &mut |sub| {
            if found {
                return;
            }
            if sub.head_const().is_some_and(|n| decls.has_wellform(n)) {
                for cond in decls.conditions_for_pattern(sub) {
                    if cond == *h {
                        found = true;
                        return;
                    }
                }
            }
        });
        if found {
            return true;
        }
    }
    false
}

fn visit_subterms(t: &Term, f: &mut impl FnMut(&Term)) {
    f(t);
    match t {
        Term::App(a, b) => {
            visit_subterms(a, f);
            visit_subterms(b, f);
        }
        Term::Abs(_, _, b) => visit_subterms(b, f),
        _ => {}
    }
}

fn missing_schematics(
    concl: &Term,
    patterns: &[MainPattern],
    cond_groups: &[&Vec<Term>],
) -> Vec<Name> {
    let mut have: Vec<(Name, SimpleType)> = Vec::new();
    for p in patterns {
        p.term().schematics(&mut have);
    }
    for g in cond_groups {
        for c in g.iter() {
            c.schematics(&mut have);
        }
    }
    let mut all = Vec::new();
    concl.schematics(&mut all);
    all.into_iter()
        .filter(|(n, _)| !have.iter().any(|(m, _)| m == n))
        .map(|(n, _)| n)
        .collect()
}

/// The smallest set-sort subterm of `concl` containing all missing names.
fn smallest_covering_subterm(concl: &Term, missing: &[Name]) -> Option<Term> {
    let mut best: Option<Term> = None;
    visit_subterms(concl, &mut |sub| {
        if sub.typecheck().ok() != Some(SimpleType::Set) {
            return;
        }
        let covers = missing.iter().all(|n| sub.contains_schematic(n));
        if covers {
            let better = match &best {
                None => true,
                Some(b) => sub.size() < b.size(),
            };
            if better {
                best = Some(sub.clone());
            }
        }
    });
    best
}

/// The trigger term of a typing conclusion: the smallest set-sort subterm
/// covering all of the conclusion's schematics, falling back to the
/// membership subject.
fn typing_subject(concl: &Term) -> Option<Term> {
    let mut schems = Vec::new();
    concl.schematics(&mut schems);
    let names: Vec<Name> = schems.into_iter().map(|(n, _)| n).collect();
    if !names.is_empty() {
        if let Some(t) = smallest_covering_subterm(concl, &names) {
            return Some(t);
        }
    }
    if let Some((x, _)) = consts::dest_mem(concl) {
        return Some(x.clone());
    }
    let (_, args) = concl.spine();
    args.first().map(|t| (*t).clone())
}

pub fn has_higher_order(t: &Term) -> bool {
    match t {
        Term::App(f, a) => {
            matches!(f.as_ref(), Term::Schematic(..)) || has_higher_order(f) || has_higher_order(a)
        }
        Term::Abs(_, _, b) => !b.is_ground() || has_higher_order(b),
        _ => false,
    }
}

/// Plain first-order matching extended with Miller patterns (a schematic
/// applied to distinct bound variables).
pub fn plain_match(
    pat: &Term,
    tgt: &Term,
    subst: &mut Vec<(Name, Term)>,
) -> bool {
    plain_match_at(pat, tgt, 0, subst)
}

fn plain_match_at(pat: &Term, tgt: &Term, depth: u32, subst: &mut Vec<(Name, Term)>) -> bool {
    // Miller pattern: ?F applied to distinct bound variables.
    if let Term::App(_, _) = pat {
        let (head, args) = pat.spine();
        if let Term::Schematic(name, ty) = head {
            let mut bound_args = Vec::new();
            let mut distinct = true;
            for a in &args {
                if let Term::Bound(k) = a {
                    if bound_args.contains(k) {
                        distinct = false;
                    }
                    bound_args.push(*k);
                } else {
                    distinct = false;
                }
            }
            if distinct && !bound_args.is_empty() {
                if let Some(body) = abstract_bounds(tgt, &bound_args, 0) {
                    let (arg_tys, _) = ty.flatten();
                    let mut value = body;
                    for aty in arg_tys.iter().rev().take(bound_args.len()) {
                        value = Term::abs("x", (*aty).clone(), value);
                    }
                    return bind(name, &value, subst);
                }
                return false;
            }
        }
    }
    match (pat, tgt) {
        (Term::Schematic(name, _), _) => {
            // A bare schematic only binds closed targets.
            if !tgt.is_closed_above(depth) {
                return false;
            }
            bind(name, tgt, subst)
        }
        (Term::Const(a, s), Term::Const(b, t))
        | (Term::Free(a, s), Term::Free(b, t)) => a == b && s == t,
        (Term::Bound(a), Term::Bound(b)) => a == b,
        (Term::Abs(_, s, pb), Term::Abs(_, t, tb)) => {
            s == t && plain_match_at(pb, tb, depth + 1, subst)
        }
        (Term::App(pf, pa), Term::App(tf, ta)) => {
            plain_match_at(pf, tf, depth, subst) && plain_match_at(pa, ta, depth, subst)
        }
        _ => false,
    }
}

fn bind(name: &Name, value: &Term, subst: &mut Vec<(Name, Term)>) -> bool {
    if let Some((_, existing)) = subst.iter().find(|(n, _)| n == name) {
        return existing == value;
    }
    subst.push((name.clone(), value.clone()));
    true
}

/// Remaps the loose bound variables of `t` (which must be among `args`) into
/// the argument positions of a new abstraction.
fn abstract_bounds(t: &Term, args: &[u32], depth: u32) -> Option<Term> {
    match t {
        Term::Bound(k) => {
            if *k >= depth {
                let ctx = k - depth;
                let j = args.iter().position(|a| *a == ctx)?;
                Some(Term::Bound((args.len() - 1 - j) as u32 + depth))
            } else {
                Some(t.clone())
            }
        }
        Term::Const(..) | Term::Free(..) | Term::Schematic(..) => Some(t.clone()),
        Term::Abs(h, ty, b) => Some(Term::Abs(
            h.clone(),
            ty.clone(),
            Arc::new(abstract_bounds(b, args, depth + 1)?),
        )),
        Term::App(f, a) => Some(Term::App(
            Arc::new(abstract_bounds(f, args, depth)?),
            Arc::new(abstract_bounds(a, args, depth)?),
        )),
    }
}

/// The ordered step registry. Deleted ids never fire; re-registration is
/// allowed.
#[derive(Clone, Default)]
pub struct Registry {
    entries: IndexMap<String, (Arc<ProofStepSpec>, bool)>,
    deletion_log: Vec<String>,
}

impl Registry {
    pub fn new() -> Registry {
        Registry::default()
    }

    pub fn register(&mut self, spec: ProofStepSpec) {
        self.entries
            .insert(spec.id.clone(), (Arc::new(spec), true));
    }

    pub fn delete(&mut self, id: &str) -> Result<(), StepError> {
        match self.entries.get_mut(id) {
            Some((_, live)) => {
                *live = false;
                self.deletion_log.push(id.to_string());
                Ok(())
            }
            None => Err(StepError::UnknownId(id.to_string())),
        }
    }

    pub fn is_live(&self, id: &str) -> bool {
        self.entries.get(id).map(|(_, l)| *l).unwrap_or(false)
    }

    pub fn get(&self, id: &str) -> Option<&Arc<ProofStepSpec>> {
        self.entries
            .get(id)
            .and_then(|(s, live)| live.then_some(s))
    }

    pub fn live_steps(&self) -> impl Iterator<Item = &Arc<ProofStepSpec>> {
        self.entries
            .values()
            .filter_map(|(s, live)| live.then_some(s))
    }

    pub fn deletion_log(&self) -> &[String] {
        &self.deletion_log
    }
}

/// One fully matched application of a step, before condition discharge.
#[derive(Debug, Clone)]
pub struct Instantiation {
    pub subst: Vec<(Name, Term)>,
    /// The partner item matched for a second prop pattern, if any.
    pub partner: Option<usize>,
}

impl Instantiation {
    /// Deterministic digest used to avoid re-firing the same application.
    pub fn digest(&self, step_id: &str) -> String {
        let mut s = String::from(step_id);
        let mut binds: Vec<_> = self
            .subst
            .iter()
            .map(|(n, t)| format!("{}={}", n, t))
            .collect();
        binds.sort();
        for b in binds {
            s.push(';');
            s.push_str(&b);
        }
        if let Some(p) = self.partner {
            s.push_str(&format!("#partner{}", p));
        }
        s
    }
}

/// Matches a prop pattern against a statement, up to the rewrite table on
/// set-sort atom arguments. Quantified or higher-order pattern parts fall
/// back to plain matching.
pub fn prop_pattern_match(
    pat: &Term,
    tgt: &Term,
    tables: &mut Tables,
    init: Vec<(Name, Term)>,
    caps: &MatchCaps,
) -> Vec<Vec<(Name, Term)>> {
    let mut out = Vec::new();
    ppm(pat, tgt, tables, init, caps, &mut out);
    out
}

fn ppm(
    pat: &Term,
    tgt: &Term,
    tables: &mut Tables,
    subst: Vec<(Name, Term)>,
    caps: &MatchCaps,
    out: &mut Vec<Vec<(Name, Term)>>,
) {
    // Dual negation strip.
    if let (Some(p), Some(t)) = (consts::dest_not(pat), consts::dest_not(tgt)) {
        return ppm(p, t, tables, subst, caps, out);
    }
    // Binary connectives matched structurally.
    let conns: [fn(&Term) -> Option<(&Term, &Term)>; 4] = [
        consts::dest_conj,
        consts::dest_disj,
        consts::dest_imp,
        consts::dest_iff,
    ];
    for dest in conns {
        if let (Some((p1, p2)), Some((t1, t2))) = (dest(pat), dest(tgt)) {
            let mut lhs = Vec::new();
            ppm(p1, t1, tables, subst, caps, &mut lhs);
            for s in lhs {
                ppm(p2, t2, tables, s, caps, out);
            }
            return;
        }
    }
    // Atom level: same head constant, argument-wise matching.
    let (ph, pargs) = pat.spine();
    let (th, targs) = tgt.spine();
    match (ph, th) {
        (Term::Const(a, _), Term::Const(b, _)) if a == b && pargs.len() == targs.len() => {}
        _ => {
            // Bare schematic pattern at prop level.
            if let Term::Schematic(name, ty) = pat {
                if tgt.is_closed() && tgt.typecheck().ok().as_ref() == Some(ty) {
                    let mut s2 = subst;
                    if bind(name, tgt, &mut s2) {
                        out.push(s2);
                    }
                }
            }
            return;
        }
    }
    // Match arguments left to right, threading substitutions.
    let mut states = vec![subst];
    for (parg, targ) in pargs.iter().zip(targs.iter()) {
        let mut next = Vec::new();
        for s in states {
            match_arg(parg, targ, tables, s, caps, &mut next);
        }
        states = next;
        if states.is_empty() {
            return;
        }
    }
    out.extend(states);
}

fn match_arg(
    parg: &Term,
    targ: &Term,
    tables: &mut Tables,
    subst: Vec<(Name, Term)>,
    caps: &MatchCaps,
    out: &mut Vec<Vec<(Name, Term)>>,
) {
    let pty = match parg.typecheck() {
        Ok(t) => t,
        Err(_) => return,
    };
    let ematchable = pty == SimpleType::Set
        && parg.is_closed()
        && targ.is_closed()
        && targ.is_ground()
        && !has_higher_order(parg)
        && parg_schematics_closed(parg);
    if ematchable {
        // E-match the set-sort argument against the target's class.
        let pre = pre_bind_ids(&subst, parg, tables);
        if let (Some(init), Ok(root)) = (pre, tables.intern_term(targ)) {
            if let Ok(subs) = tables
                .rewrite
                .e_match_with(parg, &[root], &init, caps)
            {
                for s in subs {
                    let mut merged = subst.clone();
                    let mut ok = true;
                    for (n, id) in &s.binds {
                        let t = tables.rewrite.term(*id).clone();
                        if !bind(n, &t, &mut merged) {
                            ok = false;
                            break;
                        }
                    }
                    if ok {
                        out.push(merged);
                    }
                }
                return;
            }
        }
    }
    // Fallback: plain matching (handles props, binders, higher-order).
    let inst = parg.subst_schematics(&subst).beta_normalize();
    let mut s2 = subst.clone();
    if plain_match(&inst, targ, &mut s2) {
        out.push(s2);
    } else if pty == SimpleType::Prop {
        // Prop arguments may themselves need structural descent.
        ppm(&inst, targ, tables, subst, caps, out);
    }
}

fn parg_schematics_closed(parg: &Term) -> bool {
    // Schematics under a binder cannot be e-matched.
    fn walk(t: &Term, under: bool) -> bool {
        match t {
            Term::Schematic(..) => !under,
            Term::Abs(_, _, b) => walk(b, true),
            Term::App(f, a) => walk(f, under) && walk(a, under),
            _ => true,
        }
    }
    walk(parg, false)
}

/// Interns the already-bound schematics of a pattern so e-matching can treat
/// them as fixed classes.
fn pre_bind_ids(
    subst: &[(Name, Term)],
    pattern: &Term,
    tables: &mut Tables,
) -> Option<crate::congruence::Substitution> {
    let mut schems = Vec::new();
    pattern.schematics(&mut schems);
    let mut init = crate::congruence::Substitution::new();
    for (n, _) in schems {
        if let Some((_, t)) = subst.iter().find(|(m, _)| *m == n) {
            let id = tables.rewrite.intern(t).ok()?;
            init.binds.push((n.clone(), id));
        }
    }
    Some(init)
}

/// The result of discharging all conditions of a candidate application.
pub enum ConditionOutcome {
    /// Every condition discharged; providers for the origin's hypotheses.
    Ready(Vec<(Term, Theorem)>),
    /// Some fully instantiated condition is not yet satisfied.
    Blocked,
}

/// Solves binding conditions and discharges side conditions for a matched
/// substitution. Extends the substitution in place.
pub fn discharge_conditions(
    spec: &ProofStepSpec,
    subst: &mut Vec<(Name, Term)>,
    tables: &mut Tables,
    caps: &MatchCaps,
) -> ConditionOutcome {
    let mut providers: Vec<(Term, Theorem)> = Vec::new();
    // Binding conditions first: they may extend the substitution.
    for cond in &spec.binding_conds {
        let inst = cond.subst_schematics(subst).beta_normalize();
        let (l, r) = match consts::dest_eq(&inst) {
            Some(x) => x,
            None => return ConditionOutcome::Blocked,
        };
        let (l, r) = (l.clone(), r.clone());
        if l.is_ground() && r.is_ground() {
            match tables.rewrite.equal(&l, &r) {
                Some(th) => providers.push((inst.clone(), th)),
                None => return ConditionOutcome::Blocked,
            }
            continue;
        }
        // One side ground: e-match the schematic side against its class.
        let (ground, pat, flip) = if l.is_ground() {
            (l.clone(), r.clone(), false)
        } else if r.is_ground() {
            (r.clone(), l.clone(), true)
        } else {
            return ConditionOutcome::Blocked;
        };
        let Ok(root) = tables.intern_term(&ground) else {
            return ConditionOutcome::Blocked;
        };
        let Some(init) = pre_bind_ids(subst, &pat, tables) else {
            return ConditionOutcome::Blocked;
        };
        let subs = match tables.rewrite.e_match_with(&pat, &[root], &init, caps) {
            Ok(s) if !s.is_empty() => s,
            _ => return ConditionOutcome::Blocked,
        };
        // Deterministic choice: first solution.
        let chosen = &subs[0];
        for (n, id) in &chosen.binds {
            let t = tables.rewrite.term(*id).clone();
            if !bind(n, &t, subst) {
                return ConditionOutcome::Blocked;
            }
        }
        let inst = cond.subst_schematics(subst).beta_normalize();
        let (l2, r2) = match consts::dest_eq(&inst) {
            Some((a, b)) => (a.clone(), b.clone()),
            None => return ConditionOutcome::Blocked,
        };
        let _ = flip;
        match tables.rewrite.equal(&l2, &r2) {
            Some(th) => providers.push((inst, th)),
            None => return ConditionOutcome::Blocked,
        }
    }
    // Property, well-form and check conditions.
    for cond in spec
        .property_conds
        .iter()
        .chain(&spec.wellform_conds)
        .chain(&spec.check_conds)
    {
        let inst = cond.subst_schematics(subst).beta_normalize();
        if !inst.is_closed() || !inst.is_ground() {
            return ConditionOutcome::Blocked;
        }
        // Side-condition instances are interned so later term-triggered
        // rewrites can work on them.
        for sub in closed_set_subterms(&inst) {
            let _ = tables.intern_term(&sub);
        }
        match tables.condition_holds(&inst) {
            Some(th) => providers.push((inst, th)),
            None => return ConditionOutcome::Blocked,
        }
    }
    ConditionOutcome::Ready(providers)
}

/// Closed set-sort subterms of a proposition (not under binders).
pub fn closed_set_subterms(t: &Term) -> Vec<Term> {
    let mut out = Vec::new();
    fn walk(t: &Term, out: &mut Vec<Term>) {
        match t {
            Term::App(f, a) => {
                if t.typecheck().ok() == Some(SimpleType::Set) && t.is_closed() && t.is_ground() {
                    if !out.contains(t) {
                        out.push(t.clone());
                    }
                    return;
                }
                walk(f, out);
                walk(a, out);
            }
            Term::Free(_, ty) | Term::Const(_, ty) => {
                if *ty == SimpleType::Set && !out.contains(t) {
                    out.push(t.clone());
                }
            }
            _ => {}
        }
    }
    walk(t, &mut out);
    out
}

/// Builds the instantiated origin theorem with every hypothesis discharged
/// from the providers (matched items and side conditions).
pub fn discharge_origin(
    spec: &ProofStepSpec,
    subst: &[(Name, Term)],
    providers: &[(Term, Theorem)],
    tables: &mut Tables,
) -> Option<Theorem> {
    let inst = instantiate(&spec.origin, subst).ok()?;
    let mut th = inst;
    let hyps: Vec<Term> = th.hyps().to_vec();
    for h in hyps {
        let provider = providers
            .iter()
            .find(|(p, _)| *p == h)
            .map(|(_, t)| t.clone())
            .or_else(|| {
                providers.iter().find_map(|(p, t)| {
                    if tables.rewrite.props_congruent(p, &h) {
                        tables.rewrite.lift_prop(t, &h)
                    } else {
                        None
                    }
                })
            })
            .or_else(|| {
                // Last resort: the condition tables.
                tables.condition_holds(&h)
            })?;
        th = derived::cut(&th, &h, &provider).ok()?;
    }
    Some(th)
}

/// From `|- A1 --> ... --> C` shape helpers: negate the goal assumption of a
/// backward step, given the trigger's negated-conclusion theorem.
pub fn backward_goal(
    discharged: &Theorem,
    goal_assumption: &Term,
    neg_concl_thm: &Theorem,
) -> Option<Theorem> {
    // discharged: {goal_assumption} |- C (all other hyps discharged)
    let imp = infer(
        Rule::ImpI,
        &[discharged],
        &[Param::Term(goal_assumption.clone())],
    )
    .ok()?;
    derived::contrapose(&imp, neg_concl_thm).ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::consts::*;
    use crate::kernel::assume;

    fn ty_i() -> SimpleType {
        SimpleType::Set
    }

    #[test]
    fn plain_match_binds_first_order() {
        let f = Term::free("f", SimpleType::arrow(ty_i(), ty_i()));
        let pat = Term::app(f.clone(), Term::schematic("x", ty_i()));
        let tgt = Term::app(f, Term::free("a", ty_i()));
        let mut s = Vec::new();
        assert!(plain_match(&pat, &tgt, &mut s));
        assert_eq!(s[0].1, Term::free("a", ty_i()));
    }

    #[test]
    fn miller_pattern_abstracts_bound() {
        // Pattern: all(%x. ?P(x)); target: all(%x. x : a).
        let p = Term::schematic("P", SimpleType::arrow(ty_i(), SimpleType::Prop));
        let pat = mk_all_abs(Term::abs(
            "x",
            ty_i(),
            Term::app(p, Term::Bound(0)),
        ));
        let tgt = mk_all("x", mk_mem(Term::free("x", ty_i()), Term::free("a", ty_i())));
        let mut s = Vec::new();
        assert!(plain_match(&pat, &tgt, &mut s));
        let bound = &s[0].1;
        // ?P := %x. x : a
        let expect = Term::abs(
            "x",
            ty_i(),
            mk_mem(Term::Bound(0), Term::free("a", ty_i())),
        );
        assert_eq!(bound, &expect);
    }

    #[test]
    fn registry_delete_and_reregister() {
        let mut reg = Registry::new();
        let th = assume(Term::free("P", SimpleType::Prop)).unwrap();
        let decls = TableDecls::new();
        let spec = compile(&th, Attribute::Resolve, "p_res", &decls);
        // {P} |- P with resolve attr: conclusion P, trigger ~P plus main P.
        let spec = spec.unwrap();
        reg.register(spec.clone());
        assert!(reg.is_live("p_res"));
        reg.delete("p_res").unwrap();
        assert!(!reg.is_live("p_res"));
        assert!(matches!(
            reg.delete("nonexistent"),
            Err(StepError::UnknownId(_))
        ));
        reg.register(spec);
        assert!(reg.is_live("p_res"));
    }
}
