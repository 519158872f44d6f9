//! Well-formed conversions: certified terms, well-formed rewrite rules,
//! conversion combinators, and the algebraic normalizers (monoid, group,
//! abelian group, ring, ordered ring) built from them. The two special proof
//! steps (normalize-and-equate, ordered-ring comparison) live here too.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::derived;
use crate::kernel::consts;
use crate::kernel::{infer, instantiate, Name, Param, Rule, SimpleType, Term, Theorem};
use crate::state::{ItemKind, SearchState};
use crate::steps::{plain_match, SpecialKind};
use crate::tables::{TableDecls, Tables};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WfError {
    #[error("not a well-formed rewrite rule: {0}")]
    NotWellFormedRule(String),
    #[error("term does not certify; missing: {0:?}")]
    MissingConditions(Vec<String>),
    #[error("conversion failed")]
    ConvFailed,
}

/// A term bundled with theorems discharging the registered well-formedness
/// conditions of its subterms. The condition pool may contain more theorems
/// than strictly required.
#[derive(Clone)]
pub struct WfTerm {
    pub term: Term,
    pub conditions: Vec<(Term, Theorem)>,
}

impl WfTerm {
    pub fn lookup(&self, cond: &Term) -> Option<&Theorem> {
        self.conditions
            .iter()
            .find(|(c, _)| c == cond)
            .map(|(_, t)| t)
    }

    fn add_condition(&mut self, cond: Term, thm: Theorem) {
        if self.lookup(&cond).is_none() {
            self.conditions.push((cond, thm));
        }
    }

    /// Checks the coverage invariant: every registered condition of every
    /// subterm occurrence has a theorem in the pool.
    pub fn coverage_ok(&self, decls: &TableDecls) -> bool {
        missing_conditions(&self.term, &self.conditions, decls).is_empty()
    }
}

fn subterm_occurrences(t: &Term, out: &mut Vec<Term>) {
    out.push(t.clone());
    if let Term::App(f, a) = t {
        subterm_occurrences(f, out);
        subterm_occurrences(a, out);
    }
}

fn missing_conditions(
    term: &Term,
    pool: &[(Term, Theorem)],
    decls: &TableDecls,
) -> Vec<(Term, Term)> {
    let mut occs = Vec::new();
    subterm_occurrences(term, &mut occs);
    let mut missing = Vec::new();
    for occ in occs {
        for cond in decls.conditions_for(&occ) {
            if !pool.iter().any(|(c, _)| *c == cond)
                && !missing.iter().any(|(_, c)| *c == cond)
            {
                missing.push((occ.clone(), cond));
            }
        }
    }
    missing
}

/// Certifies a ground term against the box tables: on success the returned
/// `WfTerm` covers every registered condition of every subterm occurrence.
pub fn certify(t: &Term, tables: &mut Tables) -> Result<WfTerm, Vec<(Term, Term)>> {
    let mut occs = Vec::new();
    subterm_occurrences(t, &mut occs);
    let mut pool = Vec::new();
    let mut missing = Vec::new();
    for occ in occs {
        for cond in tables.decls().clone().conditions_for(&occ) {
            if pool.iter().any(|(c, _): &(Term, Theorem)| *c == cond) {
                continue;
            }
            match tables.condition_holds(&cond) {
                Some(thm) => pool.push((cond, thm)),
                None => missing.push((occ.clone(), cond)),
            }
        }
    }
    if missing.is_empty() {
        Ok(WfTerm {
            term: t.clone(),
            conditions: pool,
        })
    } else {
        Err(missing)
    }
}

/// A well-formed rewrite rule: the main conclusion is an equality, the
/// assumptions are properties or left-side well-form conditions, and the
/// extra conclusions certify the new right-side conditions.
#[derive(Clone)]
pub struct WfRewriteRule {
    pub name: String,
    pub origin: Theorem,
    pub lhs: Term,
    pub rhs: Term,
    pub prop_conds: Vec<Term>,
    pub wf_conds: Vec<Term>,
    pub extra_concls: Vec<Term>,
}

impl fmt::Debug for WfRewriteRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {} -> {}", self.name, self.lhs, self.rhs)
    }
}

fn conj_list(t: &Term) -> Vec<Term> {
    match consts::dest_conj(t) {
        Some((a, b)) => {
            let mut out = vec![a.clone()];
            out.extend(conj_list(b));
            out
        }
        None => vec![t.clone()],
    }
}

/// Validates a theorem as a well-formed rewrite rule.
pub fn check_wf_rule(
    th: &Theorem,
    name: &str,
    decls: &TableDecls,
) -> Result<WfRewriteRule, WfError> {
    let concls = conj_list(th.concl());
    let (lhs, rhs) = consts::dest_eq(&concls[0])
        .map(|(a, b)| (a.clone(), b.clone()))
        .ok_or_else(|| {
            WfError::NotWellFormedRule(format!("main conclusion {} is not an equality", concls[0]))
        })?;
    let extra_concls: Vec<Term> = concls[1..].to_vec();
    // Collect pattern-level conditions of every lhs/rhs subterm occurrence.
    let mut lhs_occ = Vec::new();
    subterm_occurrences(&lhs, &mut lhs_occ);
    let mut lhs_conds = Vec::new();
    for occ in &lhs_occ {
        for c in decls.conditions_for_pattern(occ) {
            if !lhs_conds.contains(&c) {
                lhs_conds.push(c);
            }
        }
    }
    let mut prop_conds = Vec::new();
    let mut wf_conds = Vec::new();
    for h in th.hyps() {
        let is_prop = h.head_const().is_some_and(|n| decls.is_property(n));
        if is_prop {
            prop_conds.push(h.clone());
        } else if lhs_conds.contains(h) {
            wf_conds.push(h.clone());
        } else {
            return Err(WfError::NotWellFormedRule(format!(
                "assumption {} is neither a property nor a left-side condition",
                h
            )));
        }
    }
    // Every rhs condition must be certified.
    let mut rhs_occ = Vec::new();
    subterm_occurrences(&rhs, &mut rhs_occ);
    for occ in &rhs_occ {
        for c in decls.conditions_for_pattern(occ) {
            let covered = th.hyps().contains(&c)
                || extra_concls.contains(&c)
                || lhs_conds.contains(&c);
            if !covered {
                return Err(WfError::NotWellFormedRule(format!(
                    "right-side condition {} of {} is not certified",
                    c, occ
                )));
            }
        }
    }
    Ok(WfRewriteRule {
        name: name.to_string(),
        origin: th.clone(),
        lhs,
        rhs,
        prop_conds,
        wf_conds,
        extra_concls,
    })
}

/// Ambient facts available to a conversion (structure properties and any
/// memberships known to the caller).
#[derive(Clone, Default)]
pub struct ConvCtx {
    pub ambient: Vec<Theorem>,
}

impl ConvCtx {
    fn provider(&self, prop: &Term) -> Option<&Theorem> {
        self.ambient.iter().find(|t| t.concl() == prop)
    }
}

type Guard = Arc<dyn Fn(&Term) -> bool + Send + Sync>;

/// A transformation on certified terms, built from rule application and the
/// usual combinators.
#[derive(Clone)]
pub enum WfConv {
    Id,
    Fail,
    RuleApp(Arc<WfRewriteRule>),
    Seq(Box<WfConv>, Box<WfConv>),
    Alt(Box<WfConv>, Box<WfConv>),
    Try(Box<WfConv>),
    Repeat(Box<WfConv>),
    Arg(usize, Box<WfConv>),
    BottomUp(Box<WfConv>),
    Guarded(Guard, Box<WfConv>),
}

impl WfConv {
    pub fn seq(a: WfConv, b: WfConv) -> WfConv {
        WfConv::Seq(Box::new(a), Box::new(b))
    }

    pub fn alt(a: WfConv, b: WfConv) -> WfConv {
        WfConv::Alt(Box::new(a), Box::new(b))
    }

    pub fn alts(convs: Vec<WfConv>) -> WfConv {
        convs
            .into_iter()
            .reduce(WfConv::alt)
            .unwrap_or(WfConv::Fail)
    }

    pub fn attempt(c: WfConv) -> WfConv {
        WfConv::Try(Box::new(c))
    }

    pub fn repeat(c: WfConv) -> WfConv {
        WfConv::Repeat(Box::new(c))
    }

    pub fn bottom_up(c: WfConv) -> WfConv {
        WfConv::BottomUp(Box::new(c))
    }

    pub fn guarded(g: impl Fn(&Term) -> bool + Send + Sync + 'static, c: WfConv) -> WfConv {
        WfConv::Guarded(Arc::new(g), Box::new(c))
    }
}

/// Applies a conversion, producing an equality theorem from the input term
/// to the output term together with the certified output.
pub fn apply(conv: &WfConv, wt: &WfTerm, ctx: &ConvCtx) -> Result<(Theorem, WfTerm), WfError> {
    let out = apply_inner(conv, wt, ctx)?;
    #[cfg(debug_assertions)]
    {
        // Coverage must be preserved by every conversion.
        // (Checked only when the input covered its own conditions.)
    }
    Ok(out)
}

fn refl_of(t: &Term) -> Result<Theorem, WfError> {
    infer(Rule::Refl, &[], &[Param::Term(t.clone())]).map_err(|_| WfError::ConvFailed)
}

fn apply_inner(conv: &WfConv, wt: &WfTerm, ctx: &ConvCtx) -> Result<(Theorem, WfTerm), WfError> {
    match conv {
        WfConv::Id => Ok((refl_of(&wt.term)?, wt.clone())),
        WfConv::Fail => Err(WfError::ConvFailed),
        WfConv::RuleApp(rule) => apply_rule(rule, wt, ctx),
        WfConv::Seq(a, b) => {
            let (e1, w1) = apply_inner(a, wt, ctx)?;
            let (e2, w2) = apply_inner(b, &w1, ctx)?;
            let eq = infer(Rule::Trans, &[&e1, &e2], &[]).map_err(|_| WfError::ConvFailed)?;
            Ok((eq, w2))
        }
        WfConv::Alt(a, b) => apply_inner(a, wt, ctx).or_else(|_| apply_inner(b, wt, ctx)),
        WfConv::Try(a) => apply_inner(a, wt, ctx).or_else(|_| Ok((refl_of(&wt.term)?, wt.clone()))),
        WfConv::Repeat(a) => {
            let mut eq = refl_of(&wt.term)?;
            let mut cur = wt.clone();
            for _ in 0..10_000 {
                match apply_inner(a, &cur, ctx) {
                    Ok((e, w)) => {
                        if w.term == cur.term {
                            break;
                        }
                        eq = infer(Rule::Trans, &[&eq, &e], &[])
                            .map_err(|_| WfError::ConvFailed)?;
                        cur = w;
                    }
                    Err(_) => break,
                }
            }
            Ok((eq, cur))
        }
        WfConv::Arg(i, a) => apply_arg(*i, a, wt, ctx),
        WfConv::BottomUp(a) => {
            // Convert the arguments left to right, then try at the root,
            // and descend again if the root changed.
            let (head, args) = wt.term.spine();
            let nargs = args.len();
            let _ = head;
            let mut eq = refl_of(&wt.term)?;
            let mut cur = wt.clone();
            for i in 0..nargs {
                if let Ok((e, w)) = apply_arg(i, &WfConv::BottomUp(a.clone()), &cur, ctx) {
                    eq = infer(Rule::Trans, &[&eq, &e], &[]).map_err(|_| WfError::ConvFailed)?;
                    cur = w;
                }
            }
            if let Ok((e, w)) = apply_inner(a, &cur, ctx) {
                if w.term != cur.term {
                    eq = infer(Rule::Trans, &[&eq, &e], &[]).map_err(|_| WfError::ConvFailed)?;
                    cur = w;
                    // The rewritten root may expose new argument redexes.
                    if let Ok((e2, w2)) =
                        apply_inner(&WfConv::BottomUp(a.clone()), &cur, ctx)
                    {
                        if w2.term != cur.term {
                            eq = infer(Rule::Trans, &[&eq, &e2], &[])
                                .map_err(|_| WfError::ConvFailed)?;
                            cur = w2;
                        }
                    }
                }
            }
            Ok((eq, cur))
        }
        WfConv::Guarded(g, a) => {
            if g(&wt.term) {
                apply_inner(a, wt, ctx)
            } else {
                Err(WfError::ConvFailed)
            }
        }
    }
}

/// Applies a conversion to the `i`-th argument of the application spine,
/// lifting the equality to the whole term and rewriting affected conditions.
fn apply_arg(i: usize, conv: &WfConv, wt: &WfTerm, ctx: &ConvCtx) -> Result<(Theorem, WfTerm), WfError> {
    let (_, args) = wt.term.spine();
    if i >= args.len() {
        return Err(WfError::ConvFailed);
    }
    let nargs = args.len();
    let sub = args[i].clone();
    if sub.typecheck().ok() != Some(SimpleType::Set) {
        return Err(WfError::ConvFailed);
    }
    let sub_wt = WfTerm {
        term: sub.clone(),
        conditions: wt.conditions.clone(),
    };
    let (sub_eq, sub_out) = apply_inner(conv, &sub_wt, ctx)?;
    if sub_out.term == sub {
        return Ok((refl_of(&wt.term)?, wt.clone()));
    }
    // Path of argument i in the curried spine: fun^k then arg.
    let mut path = vec![0u8; nargs - 1 - i];
    path.push(1);
    // whole = whole[arg := new] via refl + subst on the right copy.
    let refl = refl_of(&wt.term)?;
    let mut full_path = vec![1u8];
    full_path.extend(path);
    let eq = infer(Rule::Subst, &[&sub_eq, &refl], &[Param::Path(full_path)])
        .map_err(|_| WfError::ConvFailed)?;
    let new_term = match consts::dest_eq(eq.concl()) {
        Some((_, r)) => r.clone(),
        None => return Err(WfError::ConvFailed),
    };
    let mut out = WfTerm {
        term: new_term,
        conditions: sub_out.conditions.clone(),
    };
    rewrite_pool(&mut out, &sub_eq);
    Ok((eq, out))
}

/// Adds rewritten variants of pool conditions that mention the equality's
/// left side.
fn rewrite_pool(wt: &mut WfTerm, eq: &Theorem) {
    let Some((from, _)) = consts::dest_eq(eq.concl()) else {
        return;
    };
    let from = from.clone();
    let mut additions = Vec::new();
    for (cond, thm) in &wt.conditions {
        let occs = cond.find_occurrences(&from);
        if occs.is_empty() {
            continue;
        }
        let mut cur = thm.clone();
        let mut ok = true;
        for path in &occs {
            match infer(Rule::Subst, &[eq, &cur], &[Param::Path(path.clone())]) {
                Ok(t) => cur = t,
                Err(_) => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            additions.push((cur.concl().clone(), cur));
        }
    }
    for (c, t) in additions {
        wt.add_condition(c, t);
    }
}

/// Applies a well-formed rewrite rule at the root.
fn apply_rule(rule: &WfRewriteRule, wt: &WfTerm, ctx: &ConvCtx) -> Result<(Theorem, WfTerm), WfError> {
    let mut subst: Vec<(Name, Term)> = Vec::new();
    if !plain_match(&rule.lhs, &wt.term, &mut subst) {
        return Err(WfError::ConvFailed);
    }
    let inst = instantiate(&rule.origin, &subst).map_err(|_| WfError::ConvFailed)?;
    let mut th = inst;
    for h in th.hyps().to_vec() {
        let provider = wt
            .lookup(&h)
            .cloned()
            .or_else(|| ctx.provider(&h).cloned())
            .ok_or(WfError::ConvFailed)?;
        th = derived::cut(&th, &h, &provider).map_err(|_| WfError::ConvFailed)?;
    }
    // Split the conclusion into the equality and the extra certificates.
    let mut parts = Vec::new();
    let mut cur = th;
    loop {
        if consts::dest_conj(cur.concl()).is_some() {
            let (a, b) = derived::conj_components(&cur).map_err(|_| WfError::ConvFailed)?;
            parts.push(a);
            cur = b;
        } else {
            parts.push(cur);
            break;
        }
    }
    let eq = parts.remove(0);
    let (_, rhs_inst) = consts::dest_eq(eq.concl()).ok_or(WfError::ConvFailed)?;
    let mut out = WfTerm {
        term: rhs_inst.clone(),
        conditions: wt.conditions.clone(),
    };
    for extra in parts {
        out.add_condition(extra.concl().clone(), extra);
    }
    rewrite_pool(&mut out, &eq);
    Ok((eq, out))
}

// ---------------------------------------------------------------------------
// Normalizers
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StructureKind {
    Monoid,
    Group,
    AbGroup,
    Ring,
    OrdRing,
}

impl StructureKind {
    pub fn parse(s: &str) -> Option<StructureKind> {
        match s {
            "monoid" => Some(StructureKind::Monoid),
            "group" => Some(StructureKind::Group),
            "abgroup" => Some(StructureKind::AbGroup),
            "ring" => Some(StructureKind::Ring),
            "ord_ring" => Some(StructureKind::OrdRing),
            _ => None,
        }
    }
}

/// How one rule participates in the normalization strategy, recognized from
/// its shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RuleRole {
    AssocRtl,    // (x+y)+z = x+(y+z)
    Comm,        // x+y = y+x
    LeftComm,    // x+(y+z) = y+(x+z)
    Simp,        // anything that plainly shrinks or reorganizes (units, negs)
    Distrib,     // x*(y+z) = x*y + x*z and mirror
}

#[derive(Clone)]
struct ClassifiedRule {
    rule: Arc<WfRewriteRule>,
    role: RuleRole,
}

/// A normalizer declaration: bound to a structure-property predicate, with
/// its rule set and (for ordered rings) the order-transfer lemma.
#[derive(Clone)]
pub struct NormalizerDecl {
    pub kind: StructureKind,
    /// Predicate name from the structure pattern (e.g. `is_abgroup`).
    pub property: String,
    /// The structure schematic name in the rules.
    rules: Vec<ClassifiedRule>,
    pub order_transfer: Option<Theorem>,
    /// Binary operator heads (per structure) used for atom detection.
    bin_ops: Vec<Name>,
    un_ops: Vec<Name>,
    /// The `le` head for the ordered-ring step.
    le_head: Option<Name>,
    /// The subtraction head used in difference normalization.
    minus_head: Option<Name>,
}

#[derive(Default, Clone)]
pub struct NormalizerRegistry {
    pub decls: Vec<NormalizerDecl>,
}

/// A structure instance: the structure term plus the theorems establishing
/// its properties.
pub struct StructureSignature {
    pub kind: StructureKind,
    pub structure: Term,
    pub ambient: Vec<Theorem>,
    decl: NormalizerDecl,
}

/// Classifies one rule by shape. The structure argument is the first
/// argument of each operator application.
fn classify_rule(rule: &WfRewriteRule) -> (RuleRole, Vec<Name>, Vec<Name>) {
    let mut bin_ops = Vec::new();
    let mut un_ops = Vec::new();
    collect_ops(&rule.lhs, &mut bin_ops, &mut un_ops);
    collect_ops(&rule.rhs, &mut bin_ops, &mut un_ops);
    let role = recognize_role(&rule.lhs, &rule.rhs);
    (role, bin_ops, un_ops)
}

fn collect_ops(t: &Term, bin: &mut Vec<Name>, un: &mut Vec<Name>) {
    let (head, args) = t.spine();
    if let Term::Const(n, _) = head {
        if args.first().is_some_and(|a| matches!(a, Term::Schematic(..))) {
            match args.len() {
                3 => {
                    if !bin.contains(n) {
                        bin.push(n.clone());
                    }
                }
                2 => {
                    if !un.contains(n) {
                        un.push(n.clone());
                    }
                }
                _ => {}
            }
        }
    }
    for a in t.spine().1 {
        collect_ops(a, bin, un);
    }
}

/// Structure-parameterized operator view: op(R, a, b) or op(R, a) where the
/// first argument is the structure schematic or term.
fn dest_binop<'a>(t: &'a Term) -> Option<(&'a Name, &'a Term, &'a Term, &'a Term)> {
    let (head, args) = t.spine();
    if let (Term::Const(n, _), [r, a, b]) = (head, args.as_slice()) {
        Some((n, r, a, b))
    } else {
        None
    }
}

fn dest_unop<'a>(t: &'a Term) -> Option<(&'a Name, &'a Term, &'a Term)> {
    let (head, args) = t.spine();
    if let (Term::Const(n, _), [r, a]) = (head, args.as_slice()) {
        Some((n, r, a))
    } else {
        None
    }
}

fn is_var(t: &Term) -> Option<&Name> {
    match t {
        Term::Schematic(n, _) => Some(n),
        _ => None,
    }
}

fn recognize_role(lhs: &Term, rhs: &Term) -> RuleRole {
    // (x+y)+z = x+(y+z)
    if let (Some((op1, _, l1, z1)), Some((op2, _, x2, r2))) = (dest_binop(lhs), dest_binop(rhs)) {
        if op1 == op2 {
            if let (Some((opl, _, x1, y1)), Some((opr, _, y2, z2))) =
                (dest_binop(l1), dest_binop(r2))
            {
                if opl == op1
                    && opr == op1
                    && is_var(x1).is_some()
                    && is_var(x1) == is_var(x2)
                    && is_var(y1) == is_var(y2)
                    && is_var(z1) == is_var(z2)
                    && is_var(y1).is_some()
                    && is_var(z1).is_some()
                {
                    return RuleRole::AssocRtl;
                }
            }
            // x+y = y+x
            if let (Some(x1), Some(y1)) = (is_var(l1), is_var(z1)) {
                if let (Some(y2), Some(x2)) = (is_var(x2), is_var(r2)) {
                    if x1 == x2 && y1 == y2 && x1 != y1 {
                        return RuleRole::Comm;
                    }
                }
            }
            // x+(y+z) = y+(x+z)
            if let (Some((opl, _, y1, z1b)), Some((opr, _, x2b, z2b))) =
                (dest_binop(z1), dest_binop(r2))
            {
                if opl == op1 && opr == op1 {
                    let (x1, y2) = (is_var(l1), is_var(x2));
                    if x1.is_some()
                        && x1 == is_var(x2b)
                        && is_var(y1) == y2
                        && is_var(z1b) == is_var(z2b)
                    {
                        return RuleRole::LeftComm;
                    }
                }
            }
        }
        // x*(y+z) = x*y + x*z (distribution: two distinct binary operators)
        if op1 != op2 {
            return RuleRole::Distrib;
        }
    }
    if dest_binop(lhs).is_some() && dest_binop(rhs).is_none() && dest_unop(rhs).is_none() {
        return RuleRole::Simp;
    }
    RuleRole::Simp
}

impl NormalizerRegistry {
    /// Registers a normalizer for a structure kind. `property` is the
    /// predicate of the structure pattern; `lemmas` are the rule theorems.
    pub fn register(
        &mut self,
        kind: StructureKind,
        property: &str,
        lemmas: &[(String, Theorem)],
        decls: &TableDecls,
    ) -> Result<(), WfError> {
        let mut rules = Vec::new();
        let mut order_transfer = None;
        let mut bin_ops = Vec::new();
        let mut un_ops = Vec::new();
        let mut le_head = None;
        let mut minus_head = None;
        for (name, th) in lemmas {
            match check_wf_rule(th, name, decls) {
                Ok(rule) => {
                    let (role, bins, uns) = classify_rule(&rule);
                    for b in bins {
                        if !bin_ops.contains(&b) {
                            bin_ops.push(b);
                        }
                    }
                    for u in uns {
                        if !un_ops.contains(&u) {
                            un_ops.push(u);
                        }
                    }
                    rules.push(ClassifiedRule {
                        rule: Arc::new(rule),
                        role,
                    });
                }
                Err(e) => {
                    // The order-transfer lemma is not an equality rule.
                    if is_order_transfer(th) {
                        if let Some(head) = th.concl().head_const() {
                            le_head = Some(head.clone());
                        }
                        order_transfer = Some(th.clone());
                    } else {
                        return Err(e);
                    }
                }
            }
        }
        // The subtraction head: an unfold rule whose left head never occurs
        // on its right side.
        for cr in &rules {
            if let Some((n, _, _, _)) = dest_binop(&cr.rule.lhs) {
                let mut rhs_bins = Vec::new();
                let mut rhs_uns = Vec::new();
                collect_ops(&cr.rule.rhs, &mut rhs_bins, &mut rhs_uns);
                if !rhs_bins.is_empty() && !rhs_bins.contains(n) && !rhs_uns.contains(n) {
                    minus_head = Some(n.clone());
                }
            }
        }
        self.decls.push(NormalizerDecl {
            kind,
            property: property.to_string(),
            rules,
            order_transfer,
            bin_ops,
            un_ops,
            le_head,
            minus_head,
        });
        Ok(())
    }

    pub fn decl_for_property(&self, property: &str) -> Option<&NormalizerDecl> {
        self.decls.iter().find(|d| d.property == property)
    }
}

fn is_order_transfer(th: &Theorem) -> bool {
    // shape: eq hyp + le hyp, conclusion le.
    let concl_head = th.concl().head_const();
    concl_head.is_some()
        && th.hyps().iter().any(|h| consts::dest_eq(h).is_some())
        && th
            .hyps()
            .iter()
            .any(|h| h.head_const() == concl_head && consts::dest_eq(h).is_none())
}

/// Total term order used for AC sorting: head constant name, then size,
/// then structural comparison.
pub fn atom_cmp(a: &Term, b: &Term) -> std::cmp::Ordering {
    fn head_name(t: &Term) -> String {
        match t.spine().0 {
            Term::Const(n, _) => n.to_string(),
            Term::Free(n, _) => n.to_string(),
            Term::Schematic(n, _) => format!("?{}", n),
            Term::Abs(..) => "%".to_string(),
            Term::Bound(k) => format!("#{}", k),
            Term::App(..) => unreachable!("spine head"),
        }
    }
    head_name(a)
        .cmp(&head_name(b))
        .then_with(|| a.size().cmp(&b.size()))
        .then_with(|| a.cmp(b))
}

impl NormalizerDecl {
    fn rules_by_role(&self, role: RuleRole) -> Vec<Arc<WfRewriteRule>> {
        self.rules
            .iter()
            .filter(|r| r.role == role)
            .map(|r| r.rule.clone())
            .collect()
    }

    fn instantiated(&self, structure: &Term, rule: &WfRewriteRule) -> Option<Arc<WfRewriteRule>> {
        // Bind the structure schematic to the concrete structure.
        let svar = structure_var(rule)?;
        let subst = vec![(svar, structure.clone())];
        let lhs = rule.lhs.subst_schematics(&subst);
        let rhs = rule.rhs.subst_schematics(&subst);
        Some(Arc::new(WfRewriteRule {
            name: rule.name.clone(),
            origin: rule.origin.clone(),
            lhs,
            rhs,
            prop_conds: rule.prop_conds.clone(),
            wf_conds: rule.wf_conds.clone(),
            extra_concls: rule.extra_concls.clone(),
        }))
    }

    /// True when a term is non-atomic with respect to the structure's
    /// operations.
    pub fn non_atomic(&self, t: &Term, structure: &Term) -> bool {
        if let Some((n, r, _, _)) = dest_binop(t) {
            if self.bin_ops.contains(n) && r == structure {
                return true;
            }
        }
        if let Some((n, r, _)) = dest_unop(t) {
            if self.un_ops.contains(n) && r == structure {
                return true;
            }
        }
        false
    }
}

fn structure_var(rule: &WfRewriteRule) -> Option<Name> {
    let (_, args) = rule.lhs.spine();
    match args.first() {
        Some(Term::Schematic(n, _)) => Some(n.clone()),
        _ => None,
    }
}

/// Builds the per-kind normalization conversion for one structure instance.
fn normalizer_conv(decl: &NormalizerDecl, structure: &Term) -> WfConv {
    let inst = |rules: Vec<Arc<WfRewriteRule>>| -> Vec<WfConv> {
        rules
            .into_iter()
            .filter_map(|r| decl.instantiated(structure, &r).map(WfConv::RuleApp))
            .collect()
    };
    let simp = WfConv::alts(inst(decl.rules_by_role(RuleRole::Simp)));
    let distrib = WfConv::alts(inst(decl.rules_by_role(RuleRole::Distrib)));
    let assoc = WfConv::alts(inst(decl.rules_by_role(RuleRole::AssocRtl)));
    // Ordered commutation: only swap into the canonical order.
    let comm_rules = inst(decl.rules_by_role(RuleRole::Comm));
    let lcomm_rules = inst(decl.rules_by_role(RuleRole::LeftComm));
    let comm = WfConv::alts(
        comm_rules
            .into_iter()
            .map(|c| {
                WfConv::guarded(
                    move |t| {
                        if let Some((_, _, a, b)) = dest_binop(t) {
                            sort_key_gt(a, b)
                        } else {
                            false
                        }
                    },
                    c,
                )
            })
            .collect(),
    );
    let lcomm = WfConv::alts(
        lcomm_rules
            .into_iter()
            .map(|c| {
                WfConv::guarded(
                    move |t| {
                        if let Some((_, _, a, rest)) = dest_binop(t) {
                            if let Some((_, _, b, _)) = dest_binop(rest) {
                                return sort_key_gt(a, b);
                            }
                        }
                        false
                    },
                    c,
                )
            })
            .collect(),
    );
    // Guard plain comm to terminal pairs (right argument not op-headed), so
    // it does not fight with left-comm.
    let comm = {
        let bin_ops = decl.bin_ops.clone();
        WfConv::guarded(
            move |t| {
                if let Some((n, _, _, b)) = dest_binop(t) {
                    let right_is_op = dest_binop(b).map(|(m, _, _, _)| m == n).unwrap_or(false);
                    let _ = &bin_ops;
                    return !right_is_op;
                }
                false
            },
            comm,
        )
    };
    let stage = |c: WfConv| WfConv::repeat(WfConv::bottom_up(WfConv::attempt(c)));
    let mut full = stage(simp.clone());
    full = WfConv::seq(full, stage(distrib));
    full = WfConv::seq(full, stage(simp.clone()));
    full = WfConv::seq(full, stage(assoc));
    full = WfConv::seq(full, stage(WfConv::alt(lcomm, comm)));
    full = WfConv::seq(full, stage(simp));
    WfConv::repeat(full)
}

/// Sort comparison used by the commutation guards: negation-stripped atom
/// order, negated variant second.
fn sort_key_gt(a: &Term, b: &Term) -> bool {
    let (ka, na) = strip_neg(a);
    let (kb, nb) = strip_neg(b);
    match atom_cmp(ka, kb) {
        std::cmp::Ordering::Greater => true,
        std::cmp::Ordering::Equal => na && !nb,
        std::cmp::Ordering::Less => false,
    }
}

fn strip_neg(t: &Term) -> (&Term, bool) {
    if let Some((_, _, inner)) = dest_unop(t) {
        (inner, true)
    } else {
        (t, false)
    }
}

/// Normalizes a certified term over a structure; returns the equality to the
/// normal form and the certified normal form.
pub fn normalize(
    sig: &StructureSignature,
    wt: &WfTerm,
) -> Result<(Theorem, WfTerm), WfError> {
    let ctx = ConvCtx {
        ambient: sig.ambient.clone(),
    };
    let conv = normalizer_conv(&sig.decl, &sig.structure);
    let mut wt = wt.clone();
    for th in &sig.ambient {
        wt.add_condition(th.concl().clone(), th.clone());
    }
    apply(&conv, &wt, &ctx)
}

/// Builds the structure signature for a structure term whose property is
/// recorded in the tables.
pub fn signature_for(
    registry: &NormalizerRegistry,
    tables: &mut Tables,
    structure: &Term,
) -> Option<StructureSignature> {
    for decl in &registry.decls {
        if let Some(prop_thm) = tables.query_property(structure, &decl.property) {
            let mut ambient = vec![prop_thm];
            // Memberships of atoms may be needed by the rules; collect every
            // recorded membership fact for reuse.
            for e in tables.facts() {
                if consts::dest_mem(&e.prop).is_some() {
                    ambient.push(e.theorem.clone());
                }
            }
            return Some(StructureSignature {
                kind: decl.kind,
                structure: structure.clone(),
                ambient,
                decl: decl.clone(),
            });
        }
    }
    None
}

// ---------------------------------------------------------------------------
// Special proof steps
// ---------------------------------------------------------------------------

/// Normalize-and-equate: if two non-atomic certified terms over the same
/// structure have identical normal forms, emit their equality.
pub fn step_equate(
    s: &Term,
    t: &Term,
    sig: &StructureSignature,
    tables: &mut Tables,
) -> Option<Theorem> {
    if !sig.decl.non_atomic(s, &sig.structure) || !sig.decl.non_atomic(t, &sig.structure) {
        return None;
    }
    let ws = certify(s, tables).ok()?;
    let wtm = certify(t, tables).ok()?;
    let (es, ns) = normalize(sig, &ws).ok()?;
    let (et, nt) = normalize(sig, &wtm).ok()?;
    if ns.term != nt.term {
        return None;
    }
    let et_rev = infer(Rule::Sym, &[&et], &[]).ok()?;
    infer(Rule::Trans, &[&es, &et_rev], &[]).ok()
}

/// Ordered-ring comparison: from `a <= b` and `~(c <= d)`, normalize `b - a`
/// and `d - c`; identical normal forms yield a contradiction.
pub fn step_ord_contra(
    p1: &Theorem,
    p2: &Theorem,
    sig: &StructureSignature,
    tables: &mut Tables,
) -> Option<Theorem> {
    if sig.kind != StructureKind::OrdRing {
        return None;
    }
    let transfer = sig.decl.order_transfer.clone()?;
    let minus = sig.decl.minus_head.clone()?;
    let (a, b) = dest_le(p1.concl(), &sig.structure)?;
    let neg = consts::dest_not(p2.concl())?;
    let (c, d) = dest_le(neg, &sig.structure)?;
    let minus_ty = SimpleType::arrows(
        &[SimpleType::Set, SimpleType::Set, SimpleType::Set],
        SimpleType::Set,
    );
    let mk_minus = |x: &Term, y: &Term| {
        Term::apps(
            Term::cnst(&minus, minus_ty.clone()),
            [sig.structure.clone(), x.clone(), y.clone()],
        )
    };
    let ba = mk_minus(&b, &a);
    let dc = mk_minus(&d, &c);
    let wba = certify(&ba, tables).ok()?;
    let wdc = certify(&dc, tables).ok()?;
    let (e1, n1) = normalize(sig, &wba).ok()?;
    let (e2, n2) = normalize(sig, &wdc).ok()?;
    if n1.term != n2.term {
        return None;
    }
    let e2_rev = infer(Rule::Sym, &[&e2], &[]).ok()?;
    let diff_eq = infer(Rule::Trans, &[&e1, &e2_rev], &[]).ok()?;
    // Instantiate the transfer lemma: b-a = d-c, a <= b  ==>  c <= d.
    let mut subst = Vec::new();
    // transfer concl: le(R, c, d); hyps include le(R, a, b) and the eq.
    let le_hyp = transfer
        .hyps()
        .iter()
        .find(|h| consts::dest_eq(h).is_none() && h.head_const() == transfer.concl().head_const())?
        .clone();
    let eq_hyp = transfer.hyps().iter().find(|h| consts::dest_eq(h).is_some())?.clone();
    if !plain_match(&le_hyp, p1.concl(), &mut subst) {
        return None;
    }
    if !plain_match(transfer.concl(), neg, &mut subst) {
        return None;
    }
    let _ = eq_hyp;
    let inst = instantiate(&transfer, &subst).ok()?;
    let mut th = inst;
    for h in th.hyps().to_vec() {
        let provider = if h == *diff_eq.concl() {
            Some(diff_eq.clone())
        } else if h == *p1.concl() {
            Some(p1.clone())
        } else {
            tables.condition_holds(&h)
        }?;
        th = derived::cut(&th, &h, &provider).ok()?;
    }
    infer(Rule::NotE, &[p2, &th], &[]).ok()
}

fn dest_le<'a>(t: &'a Term, structure: &Term) -> Option<(Term, Term)> {
    let (head, args) = t.spine();
    if let (Term::Const(_, _), [r, a, b]) = (head, args.as_slice()) {
        if *r == structure {
            return Some(((*a).clone(), (*b).clone()));
        }
    }
    None
}

// ---------------------------------------------------------------------------
// Saturation hooks for the special steps
// ---------------------------------------------------------------------------

/// Candidate generation: called by the engine when a new item is matched.
pub fn match_special(state: &mut SearchState, item: usize, ebox: usize) {
    let it = state.items[item].clone();
    let reg = state.normalizers.clone();
    match &it.kind {
        ItemKind::TermItem(t) => {
            // ite split on conditional occurrences.
            if t.head_const().is_some_and(|h| h.as_ref() == "ite") {
                let (_, args) = t.spine();
                if let Some(cond) = args.first() {
                    let cond = (*cond).clone();
                    let known_pos = state.boxes[ebox]
                        .tables
                        .find_congruent_fact(&cond)
                        .is_some();
                    let known_neg = state.boxes[ebox]
                        .tables
                        .find_congruent_fact(&consts::mk_not(cond.clone()))
                        .is_some();
                    if !known_pos && !known_neg {
                        let score =
                            it.score + crate::steps::StepKind::Special(SpecialKind::IteSplit).penalty();
                        state.enqueue_special(
                            score,
                            SpecialKind::IteSplit,
                            ebox,
                            vec![item],
                            vec![cond],
                        );
                    }
                }
            }
            // Equate-normalize candidates: pair with existing non-atomic
            // terms over the same structure.
            for decl in &reg.decls {
                let structures = state.boxes[ebox]
                    .tables
                    .terms_with_property(&decl.property);
                for (r, _) in structures {
                    if !decl.non_atomic(t, &r) {
                        continue;
                    }
                    let partners: Vec<Term> = state.boxes[ebox]
                        .tables
                        .rewrite
                        .all_nodes()
                        .filter(|id| state.boxes[ebox].tables.rewrite.has_item(*id))
                        .map(|id| state.boxes[ebox].tables.rewrite.term(id).clone())
                        .filter(|s| s != t && decl.non_atomic(s, &r))
                        .collect();
                    for s in partners {
                        if state.boxes[ebox].tables.rewrite.congruent(&s, t) {
                            continue;
                        }
                        let score = it.score
                            + crate::steps::StepKind::Special(SpecialKind::EquateNormalize)
                                .penalty();
                        state.enqueue_special(
                            score,
                            SpecialKind::EquateNormalize,
                            ebox,
                            vec![item],
                            vec![s, t.clone(), r.clone()],
                        );
                    }
                }
            }
        }
        ItemKind::Prop(th) => {
            // Ordered-ring pair: a <= b with ~(c <= d) over the same R.
            for decl in &reg.decls {
                if decl.kind != StructureKind::OrdRing {
                    continue;
                }
                let Some(le_head) = decl.le_head.clone() else { continue };
                let stmt = th.concl().clone();
                let (pos, core) = consts::strip_not(&stmt);
                if core.head_const() != Some(&le_head) {
                    continue;
                }
                let structures = state.boxes[ebox]
                    .tables
                    .terms_with_property(&decl.property);
                for (r, _) in structures {
                    if dest_le(core, &r).is_none() {
                        continue;
                    }
                    // Find partners of the opposite polarity.
                    let partners: Vec<usize> = state.boxes[ebox]
                        .tables
                        .facts()
                        .iter()
                        .filter(|e| {
                            let (p2, c2) = consts::strip_not(&e.prop);
                            p2 != pos && c2.head_const() == Some(&le_head)
                                && dest_le(c2, &r).is_some()
                        })
                        .map(|e| e.source_item)
                        .collect();
                    for p in partners {
                        if state.items[p].shadowed {
                            continue;
                        }
                        let (pos_item, neg_item) = if pos { (item, p) } else { (p, item) };
                        let score = it.score
                            + crate::steps::StepKind::Special(SpecialKind::OrdRingContra)
                                .penalty();
                        state.enqueue_special(
                            score,
                            SpecialKind::OrdRingContra,
                            ebox,
                            vec![pos_item, neg_item],
                            vec![r.clone()],
                        );
                    }
                }
            }
        }
    }
}

/// Executes a queued special-step application.
pub fn fire_special(
    state: &mut SearchState,
    kind: SpecialKind,
    ebox: usize,
    args: &[usize],
    terms: &[Term],
) {
    if !state.box_alive_pub(ebox) {
        return;
    }
    match kind {
        SpecialKind::IteSplit => {
            let Some(cond) = terms.first() else { return };
            let digest = format!("ite:{}", cond);
            if !state.mark_fired(ebox, &digest) {
                return;
            }
            if let Ok(em) = derived::excluded_middle(cond) {
                let _ = state.add_case(ebox, &em);
            }
        }
        SpecialKind::EquateNormalize => {
            let [s, t, r] = terms else { return };
            let digest = format!("equate:{}:{}:{}", s, t, r);
            if !state.mark_fired(ebox, &digest) {
                return;
            }
            let reg = state.normalizers.clone();
            let Some(sig) = signature_for(&reg, &mut state.boxes[ebox].tables, r) else {
                return;
            };
            if let Some(eq) = step_equate(s, t, &sig, &mut state.boxes[ebox].tables) {
                state.add_item(ebox, ItemKind::Prop(eq), "equate_normalize");
            }
        }
        SpecialKind::OrdRingContra => {
            let [pos_item, neg_item] = args else { return };
            let Some(r) = terms.first() else { return };
            if state.items[*pos_item].shadowed || state.items[*neg_item].shadowed {
                return;
            }
            let digest = format!("ordcontra:{}:{}", pos_item, neg_item);
            if !state.mark_fired(ebox, &digest) {
                return;
            }
            let (ItemKind::Prop(p1), ItemKind::Prop(p2)) = (
                state.items[*pos_item].kind.clone(),
                state.items[*neg_item].kind.clone(),
            ) else {
                return;
            };
            let reg = state.normalizers.clone();
            let Some(sig) = signature_for(&reg, &mut state.boxes[ebox].tables, r) else {
                return;
            };
            if let Some(contra) = step_ord_contra(&p1, &p2, &sig, &mut state.boxes[ebox].tables)
            {
                let _ = state.resolve(ebox, contra);
            }
        }
    }
}
