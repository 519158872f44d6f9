//! Ground rewrite table: union-find congruence closure over a hash-consed
//! term DAG, with theorem-producing merge justifications, plus E-matching of
//! schematic patterns modulo the closure.
//!
//! The table holds ground terms only (free variables are fine, schematics are
//! not). Abstraction bodies are opaque: lambdas compare alpha-structurally
//! and never merge except as whole leaves. Equalities are between set-sort
//! terms; arrow-sorted partial applications participate in congruence
//! propagation internally but never carry equality theorems (the logic has no
//! equality at arrow sorts).

use std::collections::HashMap;
use std::collections::VecDeque;

use thiserror::Error;

use crate::kernel::consts;
use crate::kernel::{infer, KernelError, Name, Param, Rule, SimpleType, Term, Theorem};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CongruenceError {
    #[error("term contains schematic variables: {0}")]
    NonGroundTerm(String),
    #[error("not a ground set-sort equality: {0}")]
    NotAnEquality(String),
    #[error("unsupported pattern for e-matching: {0}")]
    UnsupportedPattern(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// Index of an interned term node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TermId(pub u32);

impl TermId {
    fn ix(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum NodeKind {
    Leaf,
    App(TermId, TermId),
}

#[derive(Clone)]
struct Node {
    term: Term,
    kind: NodeKind,
    ty: SimpleType,
    /// Theorem `term = find(term).term`; `None` when this node is its own
    /// representative or the node is arrow-sorted.
    to_rep: Option<Theorem>,
}

/// How a merge was justified, for the trace hook.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MergeKind {
    Asserted,
    Congruence,
}

/// One merge of two set-sort classes.
#[derive(Clone)]
pub struct MergeEvent {
    pub lhs: TermId,
    pub rhs: TermId,
    pub old_rep: TermId,
    pub new_rep: TermId,
    pub kind: MergeKind,
    /// `lhs.term = rhs.term`, replayable.
    pub theorem: Theorem,
}

/// A substitution produced by e-matching: schematic name to interned node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Substitution {
    pub binds: Vec<(Name, TermId)>,
}

impl Substitution {
    pub fn new() -> Substitution {
        Substitution { binds: Vec::new() }
    }

    pub fn get(&self, name: &str) -> Option<TermId> {
        self.binds
            .iter()
            .find(|(n, _)| n.as_ref() == name)
            .map(|(_, id)| *id)
    }

    /// Resolves bindings to their terms, sorted by name.
    pub fn to_terms(&self, tbl: &RewriteTable) -> Vec<(Name, Term)> {
        let mut out: Vec<(Name, Term)> = self
            .binds
            .iter()
            .map(|(n, id)| (n.clone(), tbl.term(*id).clone()))
            .collect();
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }
}

impl Default for Substitution {
    fn default() -> Self {
        Self::new()
    }
}

/// Caps keeping e-matching terminating and predictable.
#[derive(Debug, Clone, Copy)]
pub struct MatchCaps {
    pub class_members: usize,
    pub pattern_depth: usize,
    pub max_results: usize,
}

impl Default for MatchCaps {
    fn default() -> Self {
        MatchCaps {
            class_members: 256,
            pattern_depth: 8,
            max_results: 4096,
        }
    }
}

/// The congruence-closure rewrite table of one proof attempt (or one box).
#[derive(Clone)]
pub struct RewriteTable {
    nodes: Vec<Node>,
    hash: HashMap<Term, TermId>,
    parent: Vec<TermId>,
    /// Members per representative, in intern order.
    members: Vec<Vec<TermId>>,
    /// Application nodes whose function or argument is in this class.
    uses: Vec<Vec<TermId>>,
    /// Congruence signature (find(fun), find(arg)) -> app node.
    lookup: HashMap<(TermId, TermId), TermId>,
    pending: VecDeque<(TermId, TermId, MergeKind)>,
    merge_log: Vec<MergeEvent>,
    /// Marks nodes that have a TERM item in the owning box's scope.
    has_item: Vec<bool>,
}

impl Default for RewriteTable {
    fn default() -> Self {
        Self::new()
    }
}

impl RewriteTable {
    pub fn new() -> RewriteTable {
        RewriteTable {
            nodes: Vec::new(),
            hash: HashMap::new(),
            parent: Vec::new(),
            members: Vec::new(),
            uses: Vec::new(),
            lookup: HashMap::new(),
            pending: VecDeque::new(),
            merge_log: Vec::new(),
            has_item: Vec::new(),
        }
    }

    pub fn term(&self, id: TermId) -> &Term {
        &self.nodes[id.ix()].term
    }

    pub fn node_type(&self, id: TermId) -> &SimpleType {
        &self.nodes[id.ix()].ty
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn merge_log(&self) -> &[MergeEvent] {
        &self.merge_log
    }

    pub fn find(&self, mut id: TermId) -> TermId {
        while self.parent[id.ix()] != id {
            id = self.parent[id.ix()];
        }
        id
    }

    /// Member nodes of the class of `id`, in intern order.
    pub fn class_members(&self, id: TermId) -> &[TermId] {
        &self.members[self.find(id).ix()]
    }

    pub fn all_nodes(&self) -> impl Iterator<Item = TermId> + '_ {
        (0..self.nodes.len() as u32).map(TermId)
    }

    pub fn mark_item(&mut self, id: TermId) {
        self.has_item[id.ix()] = true;
    }

    pub fn has_item(&self, id: TermId) -> bool {
        self.has_item[id.ix()]
    }

    /// Interns a ground, closed, well-typed term, maintaining congruence for
    /// the new nodes. Idempotent.
    pub fn intern(&mut self, t: &Term) -> Result<TermId, CongruenceError> {
        if !t.is_ground() {
            return Err(CongruenceError::NonGroundTerm(t.to_string()));
        }
        if !t.is_closed() {
            return Err(CongruenceError::NonGroundTerm(format!(
                "open term: {}",
                t
            )));
        }
        let id = self.intern_rec(t)?;
        self.process_pending();
        Ok(id)
    }

    fn intern_rec(&mut self, t: &Term) -> Result<TermId, CongruenceError> {
        if let Some(&id) = self.hash.get(t) {
            return Ok(id);
        }
        let ty = t.typecheck()?;
        let (kind, id) = match t {
            Term::App(f, a) => {
                let fid = self.intern_rec(f)?;
                let aid = self.intern_rec(a)?;
                (NodeKind::App(fid, aid), self.push_node(t, ty, NodeKind::App(fid, aid)))
            }
            Term::Const(..) | Term::Free(..) | Term::Abs(..) => {
                (NodeKind::Leaf, self.push_node(t, ty, NodeKind::Leaf))
            }
            Term::Bound(_) => {
                return Err(CongruenceError::NonGroundTerm(format!("open term: {}", t)))
            }
            Term::Schematic(..) => {
                return Err(CongruenceError::NonGroundTerm(t.to_string()))
            }
        };
        if let NodeKind::App(fid, aid) = kind {
            let frep = self.find(fid);
            let arep = self.find(aid);
            self.uses[frep.ix()].push(id);
            self.uses[arep.ix()].push(id);
            if let Some(&other) = self.lookup.get(&(frep, arep)) {
                if self.find(other) != self.find(id) {
                    // A congruent application already exists.
                    self.pending.push_back((id, other, MergeKind::Congruence));
                }
            } else {
                self.lookup.insert((frep, arep), id);
            }
        }
        Ok(id)
    }

    fn push_node(&mut self, t: &Term, ty: SimpleType, kind: NodeKind) -> TermId {
        let id = TermId(self.nodes.len() as u32);
        self.nodes.push(Node {
            term: t.clone(),
            kind,
            ty,
            to_rep: None,
        });
        self.parent.push(id);
        self.members.push(vec![id]);
        self.uses.push(Vec::new());
        self.has_item.push(false);
        self.hash.insert(t.clone(), id);
        id
    }

    /// Asserts an equality theorem `|- s = t` (both sides ground set-sort
    /// terms), restoring congruence. Returns the induced set-sort merges.
    pub fn assert_equal(&mut self, eq: &Theorem) -> Result<Vec<MergeEvent>, CongruenceError> {
        let (s, t) = consts::dest_eq(eq.concl())
            .ok_or_else(|| CongruenceError::NotAnEquality(eq.concl().to_string()))?;
        let (s, t) = (s.clone(), t.clone());
        let sid = self.intern(&s)?;
        let tid = self.intern(&t)?;
        let log_start = self.merge_log.len();
        if self.find(sid) != self.find(tid) {
            self.merge(sid, tid, MergeKind::Asserted, Some(eq.clone()));
            self.process_pending();
        }
        Ok(self.merge_log[log_start..].to_vec())
    }

    fn process_pending(&mut self) {
        while let Some((a, b, kind)) = self.pending.pop_front() {
            if self.find(a) == self.find(b) {
                continue;
            }
            self.merge(a, b, kind, None);
        }
    }

    /// Merges the class of `x` into the class of `y`. `cause` must prove
    /// `x.term = y.term` when given; for congruence merges it is built from
    /// the argument equalities.
    fn merge(&mut self, x: TermId, y: TermId, kind: MergeKind, cause: Option<Theorem>) {
        let rx = self.find(x);
        let ry = self.find(y);
        debug_assert_ne!(rx, ry);
        let set_sorted = self.nodes[x.ix()].ty == SimpleType::Set;
        let cause = if set_sorted {
            Some(cause.unwrap_or_else(|| {
                self.congruence_eq(x, y)
                    .expect("congruent applications must have an equality proof")
            }))
        } else {
            None
        };
        if let Some(eq) = &cause {
            // x.term = y.term  lifts to  rx.term = ry.term.
            let rx_eq_ry = self
                .compose_to_rep(x, eq.clone(), y)
                .expect("justification composition");
            // Update justifications of the absorbed class.
            let moved = std::mem::take(&mut self.members[rx.ix()]);
            for &m in &moved {
                let m_eq_ry = if m == rx {
                    rx_eq_ry.clone()
                } else {
                    let m_eq_rx = self.nodes[m.ix()]
                        .to_rep
                        .clone()
                        .expect("member justification");
                    infer(Rule::Trans, &[&m_eq_rx, &rx_eq_ry], &[])
                        .expect("trans")
                };
                self.nodes[m.ix()].to_rep = Some(m_eq_ry);
                self.parent[m.ix()] = ry;
            }
            self.nodes[ry.ix()].to_rep = None;
            self.members[ry.ix()].extend(moved);
            self.merge_log.push(MergeEvent {
                lhs: x,
                rhs: y,
                old_rep: rx,
                new_rep: ry,
                kind,
                theorem: eq.clone(),
            });
        } else {
            // Arrow-sorted class: structural bookkeeping only.
            let moved = std::mem::take(&mut self.members[rx.ix()]);
            for &m in &moved {
                self.parent[m.ix()] = ry;
            }
            self.members[ry.ix()].extend(moved);
        }
        // Re-canonicalize congruence signatures of applications using rx.
        let moved_uses = std::mem::take(&mut self.uses[rx.ix()]);
        for &u in &moved_uses {
            let NodeKind::App(f, a) = self.nodes[u.ix()].kind else {
                continue;
            };
            let key = (self.find(f), self.find(a));
            if let Some(&other) = self.lookup.get(&key) {
                if self.find(other) != self.find(u) {
                    self.pending.push_back((u, other, MergeKind::Congruence));
                }
            } else {
                self.lookup.insert(key, u);
            }
        }
        self.uses[ry.ix()].extend(moved_uses);
    }

    /// Lifts `x.term = y.term` to `find(x).term = find(y).term` using the
    /// stored member justifications. Only valid before the merge updates.
    fn compose_to_rep(
        &self,
        x: TermId,
        x_eq_y: Theorem,
        y: TermId,
    ) -> Result<Theorem, KernelError> {
        let rx = self.find(x);
        let ry = self.find(y);
        // rx = x
        let mut th = match &self.nodes[x.ix()].to_rep {
            Some(x_eq_rx) => {
                let rx_eq_x = infer(Rule::Sym, &[x_eq_rx], &[])?;
                infer(Rule::Trans, &[&rx_eq_x, &x_eq_y], &[])?
            }
            None => {
                debug_assert_eq!(x, rx);
                x_eq_y
            }
        };
        // rx = y, then rx = ry
        if let Some(y_eq_ry) = &self.nodes[y.ix()].to_rep {
            th = infer(Rule::Trans, &[&th, y_eq_ry], &[])?;
        } else {
            debug_assert_eq!(y, ry);
        }
        Ok(th)
    }

    /// Builds `x.term = y.term` for two congruent application nodes by
    /// rewriting the differing set-sort argument positions.
    fn congruence_eq(&self, x: TermId, y: TermId) -> Option<Theorem> {
        let mut diffs: Vec<(Vec<u8>, TermId, TermId)> = Vec::new();
        self.collect_app_diffs(x, y, &mut Vec::new(), &mut diffs)?;
        let xt = self.nodes[x.ix()].term.clone();
        let mut th = infer(Rule::Refl, &[], &[Param::Term(xt)]).ok()?;
        for (pos, a, b) in diffs {
            let eq = self.stored_eq(a, b)?;
            // Rewrite inside the right-hand copy of the refl equation.
            let mut path = vec![1u8];
            path.extend(pos);
            th = infer(Rule::Subst, &[&eq, &th], &[Param::Path(path)]).ok()?;
        }
        Some(th)
    }

    /// `x` and `y` are congruent application nodes; records the set-sort
    /// argument positions where their trees differ. Function positions are
    /// arrow-sorted and recurse; arrow-sorted arguments recurse likewise.
    fn collect_app_diffs(
        &self,
        x: TermId,
        y: TermId,
        path: &mut Vec<u8>,
        out: &mut Vec<(Vec<u8>, TermId, TermId)>,
    ) -> Option<()> {
        if x == y {
            return Some(());
        }
        let (NodeKind::App(f1, a1), NodeKind::App(f2, a2)) =
            (self.nodes[x.ix()].kind, self.nodes[y.ix()].kind)
        else {
            return None;
        };
        path.push(0);
        self.collect_app_diffs(f1, f2, path, out)?;
        path.pop();
        path.push(1);
        if a1 != a2 {
            if self.nodes[a1.ix()].ty == SimpleType::Set {
                out.push((path.clone(), a1, a2));
            } else {
                self.collect_app_diffs(a1, a2, path, out)?;
            }
        }
        path.pop();
        Some(())
    }

    /// `a.term = b.term` for same-class set-sort nodes, via stored
    /// justifications.
    fn stored_eq(&self, a: TermId, b: TermId) -> Option<Theorem> {
        if a == b {
            let t = self.nodes[a.ix()].term.clone();
            return infer(Rule::Refl, &[], &[Param::Term(t)]).ok();
        }
        debug_assert_eq!(self.find(a), self.find(b));
        match (&self.nodes[a.ix()].to_rep, &self.nodes[b.ix()].to_rep) {
            (Some(ar), Some(br)) => {
                let rb = infer(Rule::Sym, &[br], &[]).ok()?;
                infer(Rule::Trans, &[ar, &rb], &[]).ok()
            }
            (Some(ar), None) => Some(ar.clone()),
            (None, Some(br)) => infer(Rule::Sym, &[br], &[]).ok(),
            (None, None) => None,
        }
    }

    /// Returns a justification theorem `|- s = t` when the two ground terms
    /// are in the same congruence class (interning them on demand).
    pub fn equal(&mut self, s: &Term, t: &Term) -> Option<Theorem> {
        if !s.is_ground() || !t.is_ground() || !s.is_closed() || !t.is_closed() {
            return None;
        }
        if s.typecheck().ok()? != SimpleType::Set || t.typecheck().ok()? != SimpleType::Set {
            return None;
        }
        if s == t {
            return infer(Rule::Refl, &[], &[Param::Term(s.clone())]).ok();
        }
        let sid = self.intern(s).ok()?;
        let tid = self.intern(t).ok()?;
        if self.find(sid) != self.find(tid) {
            return None;
        }
        self.stored_eq(sid, tid)
    }

    /// Non-mutating class resolution: the class a term would end up in, if
    /// all of its pieces are already represented.
    pub fn lookup_class(&self, t: &Term) -> Option<TermId> {
        if let Some(&id) = self.hash.get(t) {
            return Some(self.find(id));
        }
        match t {
            Term::App(f, a) => {
                let cf = self.lookup_class(f)?;
                let ca = self.lookup_class(a)?;
                let &node = self.lookup.get(&(cf, ca))?;
                Some(self.find(node))
            }
            _ => None,
        }
    }

    /// True when the two ground terms are congruent. Non-mutating; terms not
    /// represented in the table compare structurally.
    pub fn congruent(&self, s: &Term, t: &Term) -> bool {
        if s == t {
            return true;
        }
        match (self.lookup_class(s), self.lookup_class(t)) {
            (Some(a), Some(b)) => a == b,
            _ => false,
        }
    }

    /// Compares two propositions up to the table's set-sort equalities.
    /// Closed set-sort subterms compare by class, everything else
    /// structurally (descending under binders).
    pub fn props_congruent(&self, p: &Term, q: &Term) -> bool {
        if p == q {
            return true;
        }
        if p.is_closed()
            && q.is_closed()
            && p.typecheck().ok() == Some(SimpleType::Set)
            && q.typecheck().ok() == Some(SimpleType::Set)
        {
            return self.congruent(p, q);
        }
        match (p, q) {
            (Term::App(f1, a1), Term::App(f2, a2)) => {
                self.props_congruent(f1, f2) && self.props_congruent(a1, a2)
            }
            (Term::Abs(_, t1, b1), Term::Abs(_, t2, b2)) => {
                t1 == t2 && self.props_congruent(b1, b2)
            }
            _ => false,
        }
    }

    /// Transforms `th` into a theorem of `target`, where `target` is
    /// congruent to the conclusion of `th`, justifying each rewritten subterm
    /// from the table.
    pub fn lift_prop(&mut self, th: &Theorem, target: &Term) -> Option<Theorem> {
        crate::derived::rewrite_concl_to(th, target, &mut |a, b| self.equal(a, b))
    }

    /// E-matches a first-order pattern against the classes of `roots`,
    /// returning every substitution (schematic -> interned node) whose
    /// instance lands in one of the root classes.
    pub fn e_match(
        &self,
        pattern: &Term,
        roots: &[TermId],
        caps: &MatchCaps,
    ) -> Result<Vec<Substitution>, CongruenceError> {
        check_pattern(pattern, 0, caps.pattern_depth)?;
        let mut out = Vec::new();
        let mut seen_roots = Vec::new();
        for &r in roots {
            let rep = self.find(r);
            if seen_roots.contains(&rep) {
                continue;
            }
            seen_roots.push(rep);
            self.match_class(pattern, rep, Substitution::new(), caps, &mut out);
            if out.len() >= caps.max_results {
                break;
            }
        }
        out.truncate(caps.max_results);
        dedup_subs(&mut out);
        Ok(out)
    }

    /// E-matches starting from a partial substitution.
    pub fn e_match_with(
        &self,
        pattern: &Term,
        roots: &[TermId],
        init: &Substitution,
        caps: &MatchCaps,
    ) -> Result<Vec<Substitution>, CongruenceError> {
        check_pattern(pattern, 0, caps.pattern_depth)?;
        let mut out = Vec::new();
        for &r in roots {
            let rep = self.find(r);
            self.match_class(pattern, rep, init.clone(), caps, &mut out);
            if out.len() >= caps.max_results {
                break;
            }
        }
        out.truncate(caps.max_results);
        dedup_subs(&mut out);
        Ok(out)
    }

    fn match_class(
        &self,
        pat: &Term,
        class: TermId,
        sub: Substitution,
        caps: &MatchCaps,
        out: &mut Vec<Substitution>,
    ) {
        if out.len() >= caps.max_results {
            return;
        }
        match pat {
            Term::Schematic(name, ty) => {
                if let Some(bound) = sub.get(name) {
                    if self.find(bound) == class {
                        out.push(sub);
                    }
                    return;
                }
                for &m in self.members[class.ix()].iter().take(caps.class_members) {
                    if self.nodes[m.ix()].ty == *ty {
                        let mut s2 = sub.clone();
                        s2.binds.push((name.clone(), m));
                        out.push(s2);
                        if out.len() >= caps.max_results {
                            return;
                        }
                    }
                }
            }
            Term::Const(..) | Term::Free(..) | Term::Abs(..) => {
                if let Some(&id) = self.hash.get(pat) {
                    if self.find(id) == class {
                        out.push(sub);
                    }
                }
            }
            Term::App(pf, pa) => {
                for &m in self.members[class.ix()].iter().take(caps.class_members) {
                    let NodeKind::App(f, a) = self.nodes[m.ix()].kind else {
                        continue;
                    };
                    let mut fun_subs = Vec::new();
                    self.match_class(pf, self.find(f), sub.clone(), caps, &mut fun_subs);
                    for s in fun_subs {
                        self.match_class(pa, self.find(a), s, caps, out);
                        if out.len() >= caps.max_results {
                            return;
                        }
                    }
                }
            }
            Term::Bound(_) => {}
        }
    }

    /// Root classes that could match a pattern of the given type, for
    /// matching a pattern against the whole term universe.
    pub fn classes_of_type(&self, ty: &SimpleType) -> Vec<TermId> {
        let mut out = Vec::new();
        for id in self.all_nodes() {
            let rep = self.find(id);
            if rep == id && self.nodes[id.ix()].ty == *ty {
                out.push(id);
            }
        }
        out
    }
}

fn check_pattern(pat: &Term, depth: usize, max_depth: usize) -> Result<(), CongruenceError> {
    if depth > max_depth {
        return Err(CongruenceError::UnsupportedPattern(format!(
            "pattern exceeds depth cap: {}",
            pat
        )));
    }
    match pat {
        Term::App(f, a) => {
            if matches!(f.as_ref(), Term::Schematic(..)) {
                return Err(CongruenceError::UnsupportedPattern(format!(
                    "schematic in function position: {}",
                    pat
                )));
            }
            check_pattern(f, depth + 1, max_depth)?;
            check_pattern(a, depth + 1, max_depth)
        }
        Term::Abs(..) => {
            if !pat.is_ground() {
                return Err(CongruenceError::UnsupportedPattern(format!(
                    "schematic under a binder: {}",
                    pat
                )));
            }
            Ok(())
        }
        Term::Bound(_) => Err(CongruenceError::UnsupportedPattern(
            "loose bound variable in pattern".into(),
        )),
        _ => Ok(()),
    }
}

fn dedup_subs(subs: &mut Vec<Substitution>) {
    let mut seen: Vec<Vec<(Name, TermId)>> = Vec::new();
    subs.retain(|s| {
        let mut key = s.binds.clone();
        key.sort_by(|a, b| a.0.cmp(&b.0));
        if seen.contains(&key) {
            false
        } else {
            seen.push(key);
            true
        }
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::consts::*;
    use crate::kernel::{assume, replay_check, set_recording, Signature};

    fn c(name: &str) -> Term {
        Term::free(name, SimpleType::Set)
    }

    fn f1(f: &str, a: Term) -> Term {
        Term::app(
            Term::free(f, SimpleType::arrow(SimpleType::Set, SimpleType::Set)),
            a,
        )
    }

    fn assert_eq_thm(tbl: &mut RewriteTable, a: Term, b: Term) {
        let th = assume(mk_eq(a, b)).unwrap();
        tbl.assert_equal(&th).unwrap();
    }

    #[test]
    fn intern_is_idempotent() {
        let mut tbl = RewriteTable::new();
        let t = f1("f", c("a"));
        let id1 = tbl.intern(&t).unwrap();
        let id2 = tbl.intern(&t).unwrap();
        assert_eq!(id1, id2);
    }

    #[test]
    fn congruence_after_late_intern() {
        let mut tbl = RewriteTable::new();
        tbl.intern(&f1("f", c("a"))).unwrap();
        assert_eq_thm(&mut tbl, c("a"), c("b"));
        let fb = tbl.intern(&f1("f", c("b"))).unwrap();
        let fa = tbl.intern(&f1("f", c("a"))).unwrap();
        assert_eq!(tbl.find(fa), tbl.find(fb));
    }

    #[test]
    fn schematic_rejected() {
        let mut tbl = RewriteTable::new();
        let t = Term::schematic("x", SimpleType::Set);
        assert!(matches!(
            tbl.intern(&t),
            Err(CongruenceError::NonGroundTerm(_))
        ));
    }

    #[test]
    fn transitive_equality_justified() {
        set_recording(true);
        let mut tbl = RewriteTable::new();
        assert_eq_thm(&mut tbl, c("a"), c("b"));
        assert_eq_thm(&mut tbl, c("b"), c("c"));
        let th = tbl.equal(&c("a"), &c("c")).unwrap();
        assert_eq!(th.concl(), &mk_eq(c("a"), c("c")));
        replay_check(&th, &Signature::new()).unwrap();
    }

    #[test]
    fn nested_congruence_justified() {
        set_recording(true);
        let mut tbl = RewriteTable::new();
        let gfa = f1("g", f1("f", c("a")));
        let gfb = f1("g", f1("f", c("b")));
        tbl.intern(&gfa).unwrap();
        tbl.intern(&gfb).unwrap();
        assert_eq_thm(&mut tbl, c("a"), c("b"));
        let th = tbl.equal(&gfa, &gfb).unwrap();
        assert_eq!(th.concl(), &mk_eq(gfa, gfb));
        replay_check(&th, &Signature::new()).unwrap();
    }

    #[test]
    fn unrelated_terms_not_equal() {
        let mut tbl = RewriteTable::new();
        assert!(tbl.equal(&c("a"), &c("b")).is_none());
    }

    #[test]
    fn e_match_through_asserted_equality() {
        let mut tbl = RewriteTable::new();
        let op = Term::free(
            "op",
            SimpleType::arrows(&[SimpleType::Set, SimpleType::Set], SimpleType::Set),
        );
        let ab = Term::apps(op.clone(), [c("a"), c("b")]);
        assert_eq_thm(&mut tbl, c("c"), ab);
        let cid = tbl.intern(&c("c")).unwrap();
        let pat = Term::apps(
            op,
            [
                Term::schematic("x", SimpleType::Set),
                Term::schematic("y", SimpleType::Set),
            ],
        );
        let subs = tbl
            .e_match(&pat, &[cid], &MatchCaps::default())
            .unwrap();
        assert_eq!(subs.len(), 1);
        let terms = subs[0].to_terms(&tbl);
        assert_eq!(terms[0].1, c("a"));
        assert_eq!(terms[1].1, c("b"));
    }

    #[test]
    fn e_match_wrong_head_is_empty() {
        let mut tbl = RewriteTable::new();
        let ga = f1("g", c("a"));
        let gid = tbl.intern(&ga).unwrap();
        let pat = f1("f", Term::schematic("x", SimpleType::Set));
        let subs = tbl.e_match(&pat, &[gid], &MatchCaps::default()).unwrap();
        assert!(subs.is_empty());
    }

    #[test]
    fn lookup_class_resolves_uninterned_instances() {
        let mut tbl = RewriteTable::new();
        let fa = f1("f", c("a"));
        tbl.intern(&fa).unwrap();
        assert_eq_thm(&mut tbl, c("a"), c("b"));
        let fb = f1("f", c("b"));
        assert!(tbl.congruent(&fa, &fb));
    }
}
