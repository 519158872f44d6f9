//! Property and well-form tables.
//!
//! The property table records, per term, which registered unary predicates it
//! satisfies; facts propagate through the rewrite table's equalities. The
//! well-form table records which registered well-formedness conditions of
//! each term occurrence have been discharged. Together with the rewrite table
//! they answer the side-condition queries of proof steps.

use std::collections::HashMap;
use std::sync::Arc;

use indexmap::IndexMap;
use thiserror::Error;

use crate::congruence::{MergeEvent, RewriteTable, TermId};
use crate::kernel::consts;
use crate::kernel::{Name, SimpleType, Term, Theorem};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TableError {
    #[error("predicate {0} must have type i => o")]
    WrongArity(String),
    #[error("bad well-form pattern: {0}")]
    BadPattern(String),
}

/// A registered well-formedness rule: the head constant applied to distinct
/// schematic arguments, with condition patterns over those arguments.
#[derive(Debug, Clone)]
pub struct WellformRule {
    pub head: Name,
    pub arity: usize,
    pub args: Vec<Name>,
    pub conditions: Vec<Term>,
}

/// Registered predicates and well-form rules. Extended between proofs,
/// shared read-only during a search.
#[derive(Debug, Clone, Default)]
pub struct TableDecls {
    properties: Vec<Name>,
    wellform: IndexMap<Name, Vec<WellformRule>>,
}

impl TableDecls {
    pub fn new() -> TableDecls {
        TableDecls::default()
    }

    /// Registers a unary predicate (type `i => o`) as a property. Idempotent.
    pub fn register_property(&mut self, name: &str, ty: &SimpleType) -> Result<(), TableError> {
        let expected = SimpleType::arrow(SimpleType::Set, SimpleType::Prop);
        if *ty != expected {
            return Err(TableError::WrongArity(name.to_string()));
        }
        if !self.properties.iter().any(|p| p.as_ref() == name) {
            self.properties.push(Arc::from(name));
        }
        Ok(())
    }

    pub fn is_property(&self, name: &str) -> bool {
        self.properties.iter().any(|p| p.as_ref() == name)
    }

    /// Registers well-formedness conditions for a pattern such as
    /// `feval(?f, ?x)`. The pattern must be a constant applied to distinct
    /// schematics and every condition may mention only those schematics.
    pub fn register_wellform(
        &mut self,
        pattern: &Term,
        conditions: &[Term],
    ) -> Result<(), TableError> {
        let (head, args) = pattern.spine();
        let Term::Const(head, _) = head else {
            return Err(TableError::BadPattern(format!(
                "pattern head must be a constant: {}",
                pattern
            )));
        };
        let mut names = Vec::new();
        for a in &args {
            let Term::Schematic(n, _) = a else {
                return Err(TableError::BadPattern(format!(
                    "pattern arguments must be schematics: {}",
                    pattern
                )));
            };
            if names.contains(n) {
                return Err(TableError::BadPattern(format!(
                    "duplicate argument {} in {}",
                    n, pattern
                )));
            }
            names.push(n.clone());
        }
        for c in conditions {
            let mut schems = Vec::new();
            c.schematics(&mut schems);
            for (n, _) in schems {
                if !names.contains(&n) {
                    return Err(TableError::BadPattern(format!(
                        "condition {} mentions {} not bound by {}",
                        c, n, pattern
                    )));
                }
            }
        }
        let rule = WellformRule {
            head: head.clone(),
            arity: args.len(),
            args: names,
            conditions: conditions.to_vec(),
        };
        self.wellform.entry(head.clone()).or_default().push(rule);
        Ok(())
    }

    pub fn wellform_rules(&self, head: &str) -> &[WellformRule] {
        self.wellform
            .get(head)
            .map(|v| v.as_slice())
            .unwrap_or(&[])
    }

    pub fn has_wellform(&self, head: &str) -> bool {
        self.wellform.contains_key(head)
    }

    /// The registered condition instances for one term occurrence.
    pub fn conditions_for(&self, t: &Term) -> Vec<Term> {
        self.conditions_inst(t, true)
    }

    /// Like `conditions_for`, for pattern terms with schematic arguments.
    pub fn conditions_for_pattern(&self, t: &Term) -> Vec<Term> {
        self.conditions_inst(t, false)
    }

    fn conditions_inst(&self, t: &Term, require_closed: bool) -> Vec<Term> {
        let (head, args) = t.spine();
        let Term::Const(head, _) = head else {
            return Vec::new();
        };
        let mut out = Vec::new();
        for rule in self.wellform_rules(head) {
            if rule.arity != args.len() {
                continue;
            }
            let subst: Vec<(Name, Term)> = rule
                .args
                .iter()
                .cloned()
                .zip(args.iter().map(|a| (*a).clone()))
                .collect();
            for c in &rule.conditions {
                let inst = c.subst_schematics(&subst).beta_normalize();
                if (!require_closed || inst.is_closed()) && !out.contains(&inst) {
                    out.push(inst);
                }
            }
        }
        out
    }
}

/// One recorded proposition, with its justification and originating item.
#[derive(Clone)]
pub struct FactEntry {
    pub prop: Term,
    pub theorem: Theorem,
    pub source_item: usize,
}

/// What changed when a fact or term was added; drives re-application.
#[derive(Default)]
pub struct TableEvents {
    pub merges: Vec<MergeEvent>,
    pub wf_recorded: Vec<(TermId, Term)>,
    pub prop_recorded: Vec<(TermId, Name)>,
    pub fact_added: bool,
}

impl TableEvents {
    pub fn is_empty(&self) -> bool {
        self.merges.is_empty()
            && self.wf_recorded.is_empty()
            && self.prop_recorded.is_empty()
            && !self.fact_added
    }
}

/// The tables owned by one box: rewrite table plus property and well-form
/// tables. Children copy their parent's tables at creation.
#[derive(Clone)]
pub struct Tables {
    pub rewrite: RewriteTable,
    decls: Arc<TableDecls>,
    /// Property facts keyed on class representatives.
    prop_facts: HashMap<TermId, Vec<(Name, Theorem)>>,
    fact_log: Vec<FactEntry>,
    facts_by_head: HashMap<(bool, Name), Vec<usize>>,
    /// Discharged condition instances per term occurrence (node).
    wf_satisfied: HashMap<TermId, Vec<(Term, Theorem)>>,
    /// Nodes whose head has registered well-form rules.
    wf_nodes: Vec<TermId>,
    scanned_nodes: usize,
}

impl Tables {
    pub fn new(decls: Arc<TableDecls>) -> Tables {
        Tables {
            rewrite: RewriteTable::new(),
            decls,
            prop_facts: HashMap::new(),
            fact_log: Vec::new(),
            facts_by_head: HashMap::new(),
            wf_satisfied: HashMap::new(),
            wf_nodes: Vec::new(),
            scanned_nodes: 0,
        }
    }

    pub fn decls(&self) -> &TableDecls {
        &self.decls
    }

    pub fn facts(&self) -> &[FactEntry] {
        &self.fact_log
    }

    /// Interns a term, tracking new nodes with registered well-form heads.
    pub fn intern_term(
        &mut self,
        t: &Term,
    ) -> Result<TermId, crate::congruence::CongruenceError> {
        let id = self.rewrite.intern(t)?;
        let mut events = TableEvents::default();
        self.scan_new_nodes(&mut events);
        Ok(id)
    }

    fn scan_new_nodes(&mut self, events: &mut TableEvents) {
        while self.scanned_nodes < self.rewrite.node_count() {
            let id = TermId(self.scanned_nodes as u32);
            self.scanned_nodes += 1;
            let term = self.rewrite.term(id).clone();
            if let Some(head) = term.head_const() {
                if self.decls.has_wellform(head) {
                    self.wf_nodes.push(id);
                    self.check_node(id, events);
                }
            }
        }
    }

    /// Records a new proposition: equalities go to the rewrite table, the
    /// rest are logged; property facts are indexed per class and the
    /// well-form table is rescanned.
    pub fn add_fact(&mut self, prop: &Term, theorem: &Theorem, source_item: usize) -> TableEvents {
        let mut events = TableEvents::default();
        if consts::dest_eq(prop).is_some() {
            if let Ok(merges) = self.rewrite.assert_equal(theorem) {
                events.merges = merges;
            }
            self.after_merges(&mut events);
        }
        // Every proposition, equalities included, enters the fact log.
        if let Some(key) = atom_head(prop) {
            self.facts_by_head
                .entry(key)
                .or_default()
                .push(self.fact_log.len());
        }
        self.fact_log.push(FactEntry {
            prop: prop.clone(),
            theorem: theorem.clone(),
            source_item,
        });
        events.fact_added = true;
        // Property fact?
        if let Some((pred, arg)) = dest_property(prop) {
            if self.decls.is_property(&pred) {
                if let Ok(id) = self.rewrite.intern(&arg) {
                    let rep = self.rewrite.find(id);
                    let entry = self.prop_facts.entry(rep).or_default();
                    if !entry.iter().any(|(p, _)| *p == pred) {
                        entry.push((pred.clone(), theorem.clone()));
                        events.prop_recorded.push((rep, pred));
                    }
                }
            }
        }
        self.scan_new_nodes(&mut events);
        self.rescan_wellform(&mut events);
        events
    }

    /// Re-keys property facts and rescans well-form conditions after merges.
    fn after_merges(&mut self, events: &mut TableEvents) {
        for m in &events.merges {
            if let Some(facts) = self.prop_facts.remove(&m.old_rep) {
                let entry = self.prop_facts.entry(m.new_rep).or_default();
                for (pred, thm) in facts {
                    if !entry.iter().any(|(p, _)| *p == pred) {
                        entry.push((pred, thm));
                    }
                }
            }
        }
        if !events.merges.is_empty() {
            self.rescan_wellform(events);
        }
    }

    fn rescan_wellform(&mut self, events: &mut TableEvents) {
        let nodes: Vec<TermId> = self.wf_nodes.clone();
        for id in nodes {
            self.check_node(id, events);
        }
    }

    /// Checks every not-yet-satisfied condition of one occurrence.
    fn check_node(&mut self, id: TermId, events: &mut TableEvents) {
        let term = self.rewrite.term(id).clone();
        let conds = self.decls.conditions_for(&term);
        for cond in conds {
            let already = self
                .wf_satisfied
                .get(&id)
                .is_some_and(|v| v.iter().any(|(c, _)| *c == cond));
            if already {
                continue;
            }
            if let Some(thm) = self.condition_holds(&cond) {
                self.wf_satisfied
                    .entry(id)
                    .or_default()
                    .push((cond.clone(), thm));
                events.wf_recorded.push((id, cond));
            }
        }
    }

    /// Looks up a justification for a closed condition instance: equalities
    /// from the rewrite table, everything else from the fact log up to
    /// congruence.
    pub fn condition_holds(&mut self, cond: &Term) -> Option<Theorem> {
        if let Some((s, t)) = consts::dest_eq(cond) {
            let (s, t) = (s.clone(), t.clone());
            if let Some(th) = self.rewrite.equal(&s, &t) {
                return Some(th);
            }
        }
        let key = atom_head(cond)?;
        let idxs = self.facts_by_head.get(&key)?.clone();
        for i in idxs {
            let entry = &self.fact_log[i];
            if self.rewrite.props_congruent(&entry.prop, cond) {
                let thm = entry.theorem.clone();
                if let Some(lifted) = self.rewrite.lift_prop(&thm, cond) {
                    return Some(lifted);
                }
            }
        }
        None
    }

    /// Finds a recorded fact congruent to `prop` (for deduplication).
    pub fn find_congruent_fact(&self, prop: &Term) -> Option<&FactEntry> {
        let key = atom_head(prop)?;
        let idxs = self.facts_by_head.get(&key)?;
        idxs.iter()
            .map(|&i| &self.fact_log[i])
            .find(|e| self.rewrite.props_congruent(&e.prop, prop))
    }

    /// Returns a theorem of `pred(term)` if recorded for the term's class.
    pub fn query_property(&mut self, term: &Term, pred: &str) -> Option<Theorem> {
        let id = self.rewrite.intern(term).ok()?;
        let rep = self.rewrite.find(id);
        let (_, thm) = self
            .prop_facts
            .get(&rep)?
            .iter()
            .find(|(p, _)| p.as_ref() == pred)?
            .clone();
        let pred_term = match thm.concl() {
            Term::App(f, _) => (**f).clone(),
            _ => return None,
        };
        let target = Term::app(pred_term, term.clone());
        self.rewrite.lift_prop(&thm, &target)
    }

    /// The satisfied condition instances recorded for one term occurrence.
    pub fn query_wellform(&mut self, term: &Term) -> Vec<(Term, Theorem)> {
        let Ok(id) = self.intern_term(term) else {
            return Vec::new();
        };
        let mut events = TableEvents::default();
        self.check_node(id, &mut events);
        self.wf_satisfied.get(&id).cloned().unwrap_or_default()
    }

    /// Terms recorded with the given property, in fact order (for the
    /// special steps that look up structures).
    pub fn terms_with_property(&self, pred: &str) -> Vec<(Term, Theorem)> {
        let mut out = Vec::new();
        for e in &self.fact_log {
            if let Some((p, arg)) = dest_property(&e.prop) {
                if p.as_ref() == pred && !out.iter().any(|(t, _)| *t == arg) {
                    out.push((arg.clone(), e.theorem.clone()));
                }
            }
        }
        out
    }
}

/// Splits `P(t)` for a constant head `P : i => o`.
pub fn dest_property(prop: &Term) -> Option<(Name, Term)> {
    if let Term::App(f, a) = prop {
        if let Term::Const(n, ty) = f.as_ref() {
            if *ty == SimpleType::arrow(SimpleType::Set, SimpleType::Prop) {
                return Some((n.clone(), (**a).clone()));
            }
        }
    }
    None
}

/// The (polarity, head) index key of a proposition.
pub fn atom_head(prop: &Term) -> Option<(bool, Name)> {
    let (pos, core) = consts::strip_not(prop);
    let (head, _) = core.spine();
    match head {
        Term::Const(n, _) | Term::Free(n, _) => Some((pos, n.clone())),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::assume;
    use crate::kernel::consts::*;

    fn ty_i() -> SimpleType {
        SimpleType::Set
    }

    fn prop_ty() -> SimpleType {
        SimpleType::arrow(ty_i(), SimpleType::Prop)
    }

    fn decls_with_property() -> Arc<TableDecls> {
        let mut d = TableDecls::new();
        d.register_property("is_monoid", &prop_ty()).unwrap();
        Arc::new(d)
    }

    #[test]
    fn property_registration_checks_arity() {
        let mut d = TableDecls::new();
        let bad = SimpleType::arrows(&[ty_i(), ty_i()], SimpleType::Prop);
        assert!(matches!(
            d.register_property("le", &bad),
            Err(TableError::WrongArity(_))
        ));
        d.register_property("is_monoid", &prop_ty()).unwrap();
        d.register_property("is_monoid", &prop_ty()).unwrap();
        assert!(d.is_property("is_monoid"));
    }

    #[test]
    fn property_fact_recorded_and_queried() {
        let mut t = Tables::new(decls_with_property());
        let g = Term::free("G", ty_i());
        let fact = Term::app(Term::cnst("is_monoid", prop_ty()), g.clone());
        let thm = assume(fact.clone()).unwrap();
        let ev = t.add_fact(&fact, &thm, 0);
        assert_eq!(ev.prop_recorded.len(), 1);
        assert!(t.query_property(&g, "is_monoid").is_some());
    }

    #[test]
    fn property_propagates_through_equality() {
        let mut t = Tables::new(decls_with_property());
        let a = Term::free("a", ty_i());
        let b = Term::free("b", ty_i());
        let fact = Term::app(Term::cnst("is_monoid", prop_ty()), a.clone());
        t.add_fact(&fact, &assume(fact.clone()).unwrap(), 0);
        let eq = mk_eq(a, b.clone());
        t.add_fact(&eq, &assume(eq.clone()).unwrap(), 1);
        let got = t.query_property(&b, "is_monoid").unwrap();
        assert_eq!(
            got.concl(),
            &Term::app(Term::cnst("is_monoid", prop_ty()), b)
        );
    }

    #[test]
    fn wellform_condition_discharged_by_fact() {
        let mut d = TableDecls::new();
        let feval_ty = SimpleType::arrows(&[ty_i(), ty_i()], ty_i());
        let source_ty = SimpleType::arrow(ty_i(), ty_i());
        let pattern = Term::apps(
            Term::cnst("feval", feval_ty.clone()),
            [Term::schematic("f", ty_i()), Term::schematic("x", ty_i())],
        );
        let cond = mk_mem(
            Term::schematic("x", ty_i()),
            Term::app(
                Term::cnst("source", source_ty.clone()),
                Term::schematic("f", ty_i()),
            ),
        );
        d.register_wellform(&pattern, &[cond]).unwrap();
        let mut t = Tables::new(Arc::new(d));
        let f = Term::free("f0", ty_i());
        let x = Term::free("x0", ty_i());
        let fx = Term::apps(Term::cnst("feval", feval_ty), [f.clone(), x.clone()]);
        t.intern_term(&fx).unwrap();
        assert!(t.query_wellform(&fx).is_empty());
        let fact = mk_mem(x, Term::app(Term::cnst("source", source_ty), f));
        let ev = t.add_fact(&fact, &assume(fact.clone()).unwrap(), 0);
        assert_eq!(ev.wf_recorded.len(), 1);
        assert_eq!(t.query_wellform(&fx).len(), 1);
    }

    #[test]
    fn unregistered_predicate_not_recorded_as_property() {
        let mut t = Tables::new(decls_with_property());
        let g = Term::free("G", ty_i());
        let fact = Term::app(Term::cnst("weird", prop_ty()), g.clone());
        let ev = t.add_fact(&fact, &assume(fact.clone()).unwrap(), 0);
        assert!(ev.prop_recorded.is_empty());
        assert!(t.query_property(&g, "weird").is_none());
    }
}
