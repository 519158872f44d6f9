//! The saturation engine: items, the box tree, the pending-application
//! queue, the best-first main loop and contradiction propagation.
//!
//! A proof attempt works in contradiction form: the home box assumes the
//! negated goal, proof steps add items and case splits, and a box is
//! resolved by deriving `False` under its assumption chain. Resolving every
//! box of a case group propagates a contradiction to the parent; resolving
//! the home box finishes the proof.

use std::collections::{BinaryHeap, HashSet};
use std::sync::Arc;
use std::time::Instant;

use thiserror::Error;

use crate::congruence::MatchCaps;
use crate::derived;
use crate::kernel::consts;
use crate::kernel::{
    assume, infer, KernelError, Name, Param, Rule, Signature, SimpleType, Term, Theorem,
};
use crate::steps::{
    closed_set_subterms, discharge_conditions, discharge_origin, plain_match, prop_pattern_match,
    ConditionOutcome, Instantiation, MainPattern, ProofStepSpec, Registry, SpecialKind, StepKind,
};
use crate::tables::{TableDecls, TableEvents, Tables};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StateError {
    #[error("ill-typed statement: {0}")]
    IllTyped(String),
    #[error("not a disjunction: {0}")]
    NotADisjunction(String),
    #[error("hypothesis escapes the box assumptions: {0}")]
    HypothesisEscape(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// Search limits and score weights.
#[derive(Debug, Clone)]
pub struct SearchConfig {
    pub timeout_ms: u64,
    pub max_items: usize,
    pub weight_size: u64,
    pub weight_depth: u64,
    pub match_caps: MatchCaps,
    pub trace: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            timeout_ms: 10_000,
            max_items: 20_000,
            weight_size: 1,
            weight_depth: 3,
            match_caps: MatchCaps::default(),
            trace: false,
        }
    }
}

#[derive(Debug, Clone)]
pub enum ItemKind {
    Prop(Theorem),
    TermItem(Term),
}

#[derive(Clone)]
pub struct Item {
    pub id: usize,
    pub kind: ItemKind,
    pub box_id: usize,
    pub score: u64,
    pub shadowed: bool,
    pub origin: String,
}

impl Item {
    pub fn statement(&self) -> Term {
        match &self.kind {
            ItemKind::Prop(th) => th.concl().clone(),
            ItemKind::TermItem(t) => t.clone(),
        }
    }
}

/// An undischarged introduction recorded on a box; applied in reverse order
/// when the box resolves.
enum Obligation {
    /// Eigenvariable destruction of an existential: discharge via exE.
    Exists { ex_thm: Theorem, eigen: Term },
    /// A local abbreviation `c = t`: discharged by the the universal trick.
    LetDef { var: Term, rhs: Term },
}

/// Links the boxes produced by one case split.
struct CaseGroup {
    parent: usize,
    disj: Theorem,
    boxes: [usize; 2],
}

pub struct BoxNode {
    pub id: usize,
    pub parent: Option<usize>,
    pub depth: u32,
    pub assumptions: Vec<Term>,
    pub resolved: bool,
    pub dead: bool,
    pub tables: Tables,
    pub contra: Option<Theorem>,
    case_group: Option<usize>,
    children: Vec<usize>,
    obligations: Vec<Obligation>,
    fired: HashSet<String>,
    blocked: Vec<Application>,
    // Per-box cumulative indexes (cloned into children at creation).
    forall_items: Vec<usize>,
    imp_items: Vec<usize>,
    neg_eq_watch: Vec<usize>,
    neg_facts: Vec<usize>,
}

/// One pending step application.
#[derive(Clone)]
struct Application {
    step_id: String,
    ebox: usize,
    trigger: usize,
    partner: Option<usize>,
    subst: Vec<(Name, Term)>,
}

enum Task {
    MatchItem { item: usize, ebox: usize },
    Fire(Application),
    Split { item: usize, ebox: usize },
    ImpForward { imp: usize, fact: usize, ebox: usize },
    ImpContra { imp: usize, fact: usize, ebox: usize },
    AllInst { item: usize, witness: Term, ebox: usize },
    SpecialFire { kind: SpecialKind, ebox: usize, args: Vec<usize>, terms: Vec<Term> },
}

struct QEntry {
    score: u64,
    seq: u64,
    task: Task,
}

impl PartialEq for QEntry {
    fn eq(&self, other: &Self) -> bool {
        self.score == other.score && self.seq == other.seq
    }
}
impl Eq for QEntry {}
impl PartialOrd for QEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for QEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Reversed: BinaryHeap is a max-heap, we want lowest (score, seq).
        (other.score, other.seq).cmp(&(self.score, self.seq))
    }
}

/// Statistics reported per proof attempt.
#[derive(Debug, Clone, Default)]
pub struct SearchStats {
    pub items: usize,
    pub steps_fired: usize,
    pub ms: u64,
}

/// Why and where a (sub-)search failed, with a snapshot of what it derived.
#[derive(Debug, Clone)]
pub struct FailureReport {
    pub failed_step: Option<usize>,
    pub snapshot: Vec<String>,
    pub stats: SearchStats,
}

pub enum SearchOutcome {
    Proved(Theorem),
    Failed(FailureReport),
}

pub struct SearchState {
    pub sig: Arc<Signature>,
    pub registry: Arc<Registry>,
    pub decls: Arc<TableDecls>,
    pub normalizers: Arc<crate::wfconv::NormalizerRegistry>,
    pub cfg: SearchConfig,
    pub items: Vec<Item>,
    pub boxes: Vec<BoxNode>,
    queue: BinaryHeap<QEntry>,
    seq: u64,
    pub steps_fired: usize,
    used_names: HashSet<String>,
    pub trace_lines: Vec<String>,
    goal: Option<Term>,
    base_assumptions: Vec<Term>,
    case_groups: Vec<CaseGroup>,
    deadline: Option<Instant>,
}

impl SearchState {
    pub fn new(
        sig: Arc<Signature>,
        registry: Arc<Registry>,
        decls: Arc<TableDecls>,
        normalizers: Arc<crate::wfconv::NormalizerRegistry>,
        cfg: SearchConfig,
    ) -> SearchState {
        let home = BoxNode {
            id: 0,
            parent: None,
            depth: 0,
            assumptions: Vec::new(),
            resolved: false,
            dead: false,
            tables: Tables::new(decls.clone()),
            contra: None,
            case_group: None,
            children: Vec::new(),
            obligations: Vec::new(),
            fired: HashSet::new(),
            blocked: Vec::new(),
            forall_items: Vec::new(),
            imp_items: Vec::new(),
            neg_eq_watch: Vec::new(),
            neg_facts: Vec::new(),
        };
        SearchState {
            sig,
            registry,
            decls,
            normalizers,
            cfg,
            items: Vec::new(),
            boxes: vec![home],
            queue: BinaryHeap::new(),
            seq: 0,
            steps_fired: 0,
            used_names: HashSet::new(),
            trace_lines: Vec::new(),
            goal: None,
            base_assumptions: Vec::new(),
            case_groups: Vec::new(),
            deadline: None,
        }
    }

    /// Sets up the home box: each assumption and the negated goal become
    /// PROP items; their subterms become TERM items.
    pub fn init(&mut self, assumptions: &[Term], goal: &Term) -> Result<(), StateError> {
        for p in assumptions.iter().chain(std::iter::once(goal)) {
            if !p.is_closed() || !p.is_ground() {
                return Err(StateError::IllTyped(p.to_string()));
            }
            match p.typecheck() {
                Ok(SimpleType::Prop) => {}
                _ => return Err(StateError::IllTyped(p.to_string())),
            }
            let mut frees = Vec::new();
            p.free_vars(&mut frees);
            for f in frees {
                self.used_names.insert(f.to_string());
            }
        }
        self.goal = Some(goal.clone());
        self.base_assumptions = assumptions.to_vec();
        for a in assumptions {
            self.assume_in_box(0, a)?;
        }
        let ng = consts::mk_not(goal.clone());
        self.assume_in_box(0, &ng)?;
        Ok(())
    }

    /// Adds `prop` as a local assumption of a box, with its PROP item.
    pub fn assume_in_box(&mut self, ebox: usize, prop: &Term) -> Result<(), StateError> {
        self.boxes[ebox].assumptions.push(prop.clone());
        let th = assume(prop.clone())?;
        self.add_item(ebox, ItemKind::Prop(th), "assume");
        Ok(())
    }

    pub fn home_resolved(&self) -> bool {
        self.boxes[0].resolved
    }

    fn fresh_name(&mut self, hint: &str) -> String {
        let base = if hint.is_empty() { "c" } else { hint };
        let mut name = base.to_string();
        let mut k = 0;
        while self.used_names.contains(&name) {
            k += 1;
            name = format!("{}{}", base, k);
        }
        self.used_names.insert(name.clone());
        name
    }

    fn enqueue(&mut self, score: u64, task: Task) {
        let seq = self.seq;
        self.seq += 1;
        self.queue.push(QEntry { score, seq, task });
    }

    fn box_alive(&self, b: usize) -> bool {
        let bx = &self.boxes[b];
        if bx.dead || bx.resolved {
            return false;
        }
        // Any resolved or dead ancestor kills the subtree's work.
        let mut cur = bx.parent;
        while let Some(p) = cur {
            if self.boxes[p].dead || self.boxes[p].resolved {
                return false;
            }
            cur = self.boxes[p].parent;
        }
        true
    }

    fn live_descendants(&self, b: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = self.boxes[b].children.clone();
        while let Some(c) = stack.pop() {
            if !self.boxes[c].dead && !self.boxes[c].resolved {
                out.push(c);
                stack.extend(self.boxes[c].children.iter().copied());
            }
        }
        out.sort();
        out
    }

    fn chain_assumptions(&self, b: usize) -> Vec<Term> {
        let mut out = Vec::new();
        let mut cur = Some(b);
        while let Some(i) = cur {
            out.extend(self.boxes[i].assumptions.iter().cloned());
            cur = self.boxes[i].parent;
        }
        out
    }

    fn item_score(&self, statement_size: usize, depth: u32) -> u64 {
        self.cfg.weight_size * statement_size as u64
            + self.cfg.weight_depth * depth as u64
    }

    /// Adds an item to a box (deduplicated), forwards its content to the
    /// box's and live descendants' tables, and enqueues matching work.
    pub fn add_item(&mut self, ebox: usize, kind: ItemKind, origin: &str) -> Option<usize> {
        if !self.box_alive(ebox) {
            return None;
        }
        match kind {
            ItemKind::Prop(th) => self.add_prop_item(ebox, th, origin),
            ItemKind::TermItem(t) => self.add_term_item(ebox, &t, origin),
        }
    }

    fn add_prop_item(&mut self, ebox: usize, th: Theorem, origin: &str) -> Option<usize> {
        let stmt = th.concl().clone();
        if consts::is_true(&stmt) {
            return None;
        }
        if consts::is_false(&stmt) {
            let _ = self.resolve(ebox, th);
            return None;
        }
        // Eager double-negation elimination.
        if consts::dest_not(&stmt).and_then(consts::dest_not).is_some() {
            if let Ok(inner) = derived::neg_neg_elim(&th) {
                return self.add_prop_item(ebox, inner, origin);
            }
        }
        // Dedup: congruence-equal to an existing unshadowed PROP in scope.
        let dup = self.boxes[ebox]
            .tables
            .find_congruent_fact(&stmt)
            .map(|e| e.source_item)
            .filter(|src| !self.items.get(*src).map(|i| i.shadowed).unwrap_or(true));
        if dup.is_some() {
            return None;
        }
        let id = self.items.len();
        let score = self.item_score(stmt.size(), self.boxes[ebox].depth);
        self.items.push(Item {
            id,
            kind: ItemKind::Prop(th.clone()),
            box_id: ebox,
            score,
            shadowed: false,
            origin: origin.to_string(),
        });
        if self.cfg.trace {
            self.trace_lines
                .push(format!("STEP {} IN {} => prop {}", origin, ebox, stmt));
        }
        // Record eigenvariable names so later fresh names avoid them.
        let mut frees = Vec::new();
        stmt.free_vars(&mut frees);
        for f in frees {
            self.used_names.insert(f.to_string());
        }
        // Forward the fact to this box and every live descendant.
        let mut targets = vec![ebox];
        targets.extend(self.live_descendants(ebox));
        for b in targets.clone() {
            let events = self.boxes[b].tables.add_fact(&stmt, &th, id);
            self.integrate_events(b, events);
        }
        // Classify for builtin handling.
        self.builtin_on_prop(ebox, id, &th, &targets);
        // Subterms become TERM items.
        for sub in closed_set_subterms(&stmt) {
            self.add_term_item(ebox, &sub, origin);
        }
        // Enqueue match work in this box and every live descendant.
        for b in targets {
            self.enqueue(score, Task::MatchItem { item: id, ebox: b });
        }
        Some(id)
    }

    fn add_term_item(&mut self, ebox: usize, t: &Term, origin: &str) -> Option<usize> {
        if t.typecheck().ok() != Some(SimpleType::Set) {
            return None;
        }
        let tid = self.boxes[ebox].tables.intern_term(t).ok()?;
        if self.boxes[ebox].tables.rewrite.has_item(tid) {
            return None;
        }
        let id = self.items.len();
        let score = self.item_score(t.size(), self.boxes[ebox].depth);
        self.items.push(Item {
            id,
            kind: ItemKind::TermItem(t.clone()),
            box_id: ebox,
            score,
            shadowed: false,
            origin: origin.to_string(),
        });
        let mut targets = vec![ebox];
        targets.extend(self.live_descendants(ebox));
        for b in targets {
            if let Ok(tid) = self.boxes[b].tables.intern_term(t) {
                self.boxes[b].tables.rewrite.mark_item(tid);
            }
            self.enqueue(score, Task::MatchItem { item: id, ebox: b });
        }
        // Subterms too (arguments may trigger their own steps).
        if let Term::App(f, a) = t {
            for sub in [f.as_ref(), a.as_ref()] {
                if sub.typecheck().ok() == Some(SimpleType::Set) {
                    self.add_term_item(ebox, sub, origin);
                }
            }
        }
        Some(id)
    }

    /// Eager decompositions and watch registration for a new PROP item.
    fn builtin_on_prop(&mut self, ebox: usize, id: usize, th: &Theorem, targets: &[usize]) {
        let stmt = th.concl().clone();
        // Conjunction: split eagerly.
        if consts::dest_conj(&stmt).is_some() {
            if let Ok((a, b)) = derived::conj_components(th) {
                self.add_prop_item(ebox, a, "conj");
                self.add_prop_item(ebox, b, "conj");
            }
            return;
        }
        // Iff: both implications.
        if consts::dest_iff(&stmt).is_some() {
            if let Ok(fwd) = infer(Rule::IffE1, &[th], &[]) {
                self.add_prop_item(ebox, fwd, "iff");
            }
            if let Ok(bwd) = infer(Rule::IffE2, &[th], &[]) {
                self.add_prop_item(ebox, bwd, "iff");
            }
            return;
        }
        // Existential: destruct with a fresh eigenvariable.
        if let Some(abs) = consts::dest_ex(&stmt) {
            let hint = match abs {
                Term::Abs(h, _, _) => h.to_string(),
                _ => "c".to_string(),
            };
            let fresh = self.fresh_name(&hint);
            let c = Term::free(&fresh, SimpleType::Set);
            let inst = Term::app(abs.clone(), c.clone()).beta_normalize();
            self.boxes[ebox].obligations.push(Obligation::Exists {
                ex_thm: th.clone(),
                eigen: c.clone(),
            });
            self.boxes[ebox].assumptions.push(inst.clone());
            if let Ok(ith) = assume(inst) {
                self.add_prop_item(ebox, ith, "exists");
            }
            return;
        }
        if let Some(inner) = consts::dest_not(&stmt) {
            // Negated disjunction: both components.
            if consts::dest_disj(inner).is_some() {
                if let Ok((na, nb)) = derived::neg_disj_components(th) {
                    self.add_prop_item(ebox, na, "neg_disj");
                    self.add_prop_item(ebox, nb, "neg_disj");
                }
                return;
            }
            // Negated implication: components.
            if consts::dest_imp(inner).is_some() {
                if let Ok((a, nb)) = derived::neg_imp_components(th) {
                    self.add_prop_item(ebox, a, "neg_imp");
                    self.add_prop_item(ebox, nb, "neg_imp");
                }
                return;
            }
            // Negated existential: universal of the negation.
            if consts::dest_ex(inner).is_some() {
                let fresh = self.fresh_name("x");
                if let Ok(all) = derived::not_ex_to_all_not(th, &fresh) {
                    self.add_prop_item(ebox, all, "neg_ex");
                }
                return;
            }
            // Negated universal: existential of the negation (then destruct).
            if consts::dest_all(inner).is_some() {
                let fresh = self.fresh_name("x");
                if let Ok(ex) = derived::not_all_to_ex_not(th, &fresh) {
                    self.add_prop_item(ebox, ex, "neg_all");
                }
                return;
            }
            // Negated equality: watch the rewrite table.
            if consts::dest_eq(inner).is_some() {
                for &b in targets {
                    self.boxes[b].neg_eq_watch.push(id);
                }
                for &b in targets {
                    self.check_neg_eq(b, id);
                    if self.boxes[b].resolved {
                        break;
                    }
                }
            }
            // Negated conjunction / iff split late via the queue.
            if consts::dest_conj(inner).is_some() || consts::dest_iff(inner).is_some() {
                let score = self.items[id].score + StepKind::Special(SpecialKind::IteSplit).penalty();
                for &b in targets {
                    self.enqueue(score, Task::Split { item: id, ebox: b });
                }
            }
            for &b in targets {
                self.boxes[b].neg_facts.push(id);
            }
        }
        // Disjunction: case split (queued late).
        if consts::dest_disj(&stmt).is_some() {
            let score = self.items[id].score + StepKind::Special(SpecialKind::IteSplit).penalty();
            for &b in targets {
                self.enqueue(score, Task::Split { item: id, ebox: b });
            }
            return;
        }
        // Implication: register and pair with facts.
        if consts::dest_imp(&stmt).is_some() {
            for &b in targets {
                self.boxes[b].imp_items.push(id);
            }
        }
        // Universal: register for instantiation.
        if consts::dest_all(&stmt).is_some() {
            for &b in targets {
                self.boxes[b].forall_items.push(id);
            }
        }
        // Contradiction with an existing fact (both polarities).
        for &b in targets {
            self.check_contradiction(b, id, th);
            if self.boxes[b].resolved {
                break;
            }
        }
    }

    /// Reacts to table events: blocked applications retry, negated-equality
    /// watches re-check.
    fn integrate_events(&mut self, ebox: usize, events: TableEvents) {
        if events.is_empty() {
            return;
        }
        if self.cfg.trace {
            for m in &events.merges {
                let lhs = self.boxes[ebox].tables.rewrite.term(m.lhs).clone();
                let rhs = self.boxes[ebox].tables.rewrite.term(m.rhs).clone();
                let kind = match m.kind {
                    crate::congruence::MergeKind::Asserted => "asserted",
                    crate::congruence::MergeKind::Congruence => "congruence",
                };
                self.trace_lines
                    .push(format!("EQ {} = {} BY {}", lhs, rhs, kind));
            }
        }
        if !events.merges.is_empty() {
            let watches = self.boxes[ebox].neg_eq_watch.clone();
            for w in watches {
                if self.boxes[ebox].resolved {
                    return;
                }
                self.check_neg_eq(ebox, w);
            }
            // Merges can complete contradiction pairs on negative facts.
            let negs = self.boxes[ebox].neg_facts.clone();
            for n in negs {
                if self.boxes[ebox].resolved {
                    return;
                }
                if self.items[n].shadowed {
                    continue;
                }
                if let ItemKind::Prop(th) = &self.items[n].kind.clone() {
                    self.check_contradiction(ebox, n, th);
                }
            }
        }
        // Retry blocked applications.
        let blocked = std::mem::take(&mut self.boxes[ebox].blocked);
        for app in blocked {
            let score = self.items[app.trigger].score
                + self
                    .registry
                    .get(&app.step_id)
                    .map(|s| s.kind.penalty())
                    .unwrap_or(0);
            self.enqueue(score, Task::Fire(app));
        }
    }

    /// Closes the box if the negated equality item's sides have merged.
    fn check_neg_eq(&mut self, ebox: usize, item: usize) {
        if !self.box_alive(ebox) || self.items[item].shadowed {
            return;
        }
        let ItemKind::Prop(th) = self.items[item].kind.clone() else {
            return;
        };
        let Some(inner) = consts::dest_not(th.concl()) else {
            return;
        };
        let Some((s, t)) = consts::dest_eq(inner) else {
            return;
        };
        let (s, t) = (s.clone(), t.clone());
        if let Some(eq) = self.boxes[ebox].tables.rewrite.equal(&s, &t) {
            if let Ok(contra) = infer(Rule::NotE, &[&th, &eq], &[]) {
                let _ = self.resolve(ebox, contra);
            }
        }
    }

    /// Closes the box when a fact congruent to the negation of this item's
    /// statement is in scope.
    fn check_contradiction(&mut self, ebox: usize, _item: usize, th: &Theorem) {
        if !self.box_alive(ebox) {
            return;
        }
        let stmt = th.concl();
        let (neg_th, pos_th);
        if let Some(inner) = consts::dest_not(stmt) {
            // Find a positive fact congruent to the inner statement.
            let hit = self.boxes[ebox]
                .tables
                .find_congruent_fact(inner)
                .map(|e| (e.prop.clone(), e.theorem.clone()));
            let Some((_, fact_th)) = hit else { return };
            let Some(lifted) = self.boxes[ebox]
                .tables
                .rewrite
                .lift_prop(&fact_th, inner)
            else {
                return;
            };
            neg_th = th.clone();
            pos_th = lifted;
        } else {
            let neg = consts::mk_not(stmt.clone());
            let hit = self.boxes[ebox]
                .tables
                .find_congruent_fact(&neg)
                .map(|e| e.theorem.clone());
            let Some(fact_th) = hit else { return };
            let Some(lifted) = self.boxes[ebox].tables.rewrite.lift_prop(&fact_th, &neg)
            else {
                return;
            };
            neg_th = lifted;
            pos_th = th.clone();
        }
        if let Ok(contra) = infer(Rule::NotE, &[&neg_th, &pos_th], &[]) {
            let _ = self.resolve(ebox, contra);
        }
    }

    /// Splits a box over a disjunction theorem; returns the two child boxes.
    pub fn add_case(&mut self, ebox: usize, disj: &Theorem) -> Result<Vec<usize>, StateError> {
        let (a, b) = consts::dest_disj(disj.concl())
            .map(|(a, b)| (a.clone(), b.clone()))
            .ok_or_else(|| StateError::NotADisjunction(disj.concl().to_string()))?;
        if !self.box_alive(ebox) {
            return Ok(Vec::new());
        }
        let gid = self.case_groups.len();
        let mut ids = Vec::new();
        for _ in 0..2 {
            let id = self.boxes.len();
            let parent = &self.boxes[ebox];
            let node = BoxNode {
                id,
                parent: Some(ebox),
                depth: parent.depth + 1,
                assumptions: Vec::new(),
                resolved: false,
                dead: false,
                tables: parent.tables.clone(),
                contra: None,
                case_group: Some(gid),
                children: Vec::new(),
                obligations: Vec::new(),
                fired: parent.fired.clone(),
                blocked: Vec::new(),
                forall_items: parent.forall_items.clone(),
                imp_items: parent.imp_items.clone(),
                neg_eq_watch: parent.neg_eq_watch.clone(),
                neg_facts: parent.neg_facts.clone(),
            };
            self.boxes.push(node);
            self.boxes[ebox].children.push(id);
            ids.push(id);
        }
        self.case_groups.push(CaseGroup {
            parent: ebox,
            disj: disj.clone(),
            boxes: [ids[0], ids[1]],
        });
        // Adding the case assumptions may resolve a child immediately, so
        // the group must already be registered.
        self.assume_in_box(ids[0], &a)?;
        self.assume_in_box(ids[1], &b)?;
        if self.cfg.trace {
            self.trace_lines.push(format!(
                "STEP case_split IN {} => boxes {:?} on {}",
                ebox,
                ids,
                disj.concl()
            ));
        }
        Ok(ids)
    }

    /// Creates a plain child box (used by sub-searches) assuming `prop`.
    pub fn push_scope(&mut self, ebox: usize, prop: &Term) -> Result<usize, StateError> {
        let id = self.boxes.len();
        let parent = &self.boxes[ebox];
        let node = BoxNode {
            id,
            parent: Some(ebox),
            depth: parent.depth + 1,
            assumptions: Vec::new(),
            resolved: false,
            dead: false,
            tables: parent.tables.clone(),
            contra: None,
            case_group: None,
            children: Vec::new(),
            obligations: Vec::new(),
            fired: parent.fired.clone(),
            blocked: Vec::new(),
            forall_items: parent.forall_items.clone(),
            imp_items: parent.imp_items.clone(),
            neg_eq_watch: parent.neg_eq_watch.clone(),
            neg_facts: parent.neg_facts.clone(),
        };
        self.boxes.push(node);
        self.boxes[ebox].children.push(id);
        self.assume_in_box(id, prop)?;
        Ok(id)
    }

    /// Kills a sub-search box and everything derived under it.
    pub fn pop_scope(&mut self, scope_box: usize) {
        let mut stack = vec![scope_box];
        while let Some(b) = stack.pop() {
            self.boxes[b].dead = true;
            stack.extend(self.boxes[b].children.iter().copied());
        }
    }

    /// Marks a box resolved by a contradiction theorem, discharging its
    /// pending obligations and propagating case-group completion upward.
    pub fn resolve(&mut self, ebox: usize, contra: Theorem) -> Result<(), StateError> {
        if self.boxes[ebox].resolved || self.boxes[ebox].dead {
            return Ok(());
        }
        let mut th = contra;
        // Discharge introductions in reverse order.
        while let Some(ob) = self.boxes[ebox].obligations.pop() {
            th = match ob {
                Obligation::Exists { ex_thm, eigen } => {
                    infer(Rule::ExE, &[&ex_thm, &th], &[Param::Term(eigen)])?
                }
                Obligation::LetDef { var, rhs } => {
                    let eq = consts::mk_eq(var.clone(), rhs.clone());
                    let imp = infer(Rule::ImpI, &[&th], &[Param::Term(eq)])?;
                    let all = infer(Rule::AllI, &[&imp], &[Param::Term(var)])?;
                    let inst = infer(Rule::AllE, &[&all], &[Param::Term(rhs.clone())])?;
                    let refl = infer(Rule::Refl, &[], &[Param::Term(rhs)])?;
                    infer(Rule::Mp, &[&inst, &refl], &[])?
                }
            };
        }
        // Hypotheses must be covered by the box's assumption chain.
        let chain = self.chain_assumptions(ebox);
        for h in th.hyps() {
            if !chain.contains(h) {
                return Err(StateError::HypothesisEscape(h.to_string()));
            }
        }
        self.boxes[ebox].resolved = true;
        self.boxes[ebox].contra = Some(th.clone());
        if self.cfg.trace {
            self.trace_lines
                .push(format!("STEP resolve IN {} => contradiction", ebox));
        }
        // Case-group completion.
        if let Some(gid) = self.boxes[ebox].case_group {
            let group = &self.case_groups[gid];
            let [l, r] = group.boxes;
            if self.boxes[l].resolved && self.boxes[r].resolved {
                let disj = group.disj.clone();
                let parent = group.parent;
                let (lt, rt) = (
                    self.boxes[l].contra.clone().unwrap(),
                    self.boxes[r].contra.clone().unwrap(),
                );
                let contra = infer(Rule::DisjE, &[&disj, &lt, &rt], &[])?;
                self.resolve(parent, contra)?;
            }
        }
        Ok(())
    }

    /// Marks an item as shadowed: it is never used as a step input again.
    pub fn shadow(&mut self, item: usize) {
        self.items[item].shadowed = true;
    }

    /// Introduces a local abbreviation `var = rhs`: an assumption item whose
    /// hypothesis is discharged automatically when the box resolves.
    pub(crate) fn script_let_impl(
        &mut self,
        ebox: usize,
        var: &Term,
        rhs: &Term,
    ) -> Result<(), StateError> {
        let Term::Free(name, _) = var else {
            return Err(StateError::IllTyped(format!("not a variable: {}", var)));
        };
        if !rhs.is_ground() || !rhs.is_closed() {
            return Err(StateError::IllTyped(rhs.to_string()));
        }
        self.used_names.insert(name.to_string());
        self.boxes[ebox].obligations.push(Obligation::LetDef {
            var: var.clone(),
            rhs: rhs.clone(),
        });
        let eq = consts::mk_eq(var.clone(), rhs.clone());
        self.assume_in_box(ebox, &eq)?;
        self.add_term_item(ebox, rhs, "let");
        Ok(())
    }

    /// Runs the main loop until the target box resolves, the queue drains,
    /// or a budget is hit. Returns the contradiction theorem on success.
    pub fn run_until(&mut self, target: usize, deadline: Instant) -> Option<Theorem> {
        self.deadline = Some(deadline);
        let mut since_check = 0u32;
        while let Some(entry) = self.queue.pop() {
            if self.boxes[target].resolved {
                break;
            }
            since_check += 1;
            if since_check >= 64 {
                since_check = 0;
                if Instant::now() >= deadline {
                    return None;
                }
            }
            if self.items.len() > self.cfg.max_items {
                return None;
            }
            self.dispatch(entry.task);
        }
        self.boxes[target].contra.clone()
    }

    fn dispatch(&mut self, task: Task) {
        match task {
            Task::MatchItem { item, ebox } => self.match_item(item, ebox),
            Task::Fire(app) => self.fire(app),
            Task::Split { item, ebox } => self.fire_split(item, ebox),
            Task::ImpForward { imp, fact, ebox } => self.fire_imp(imp, fact, ebox, false),
            Task::ImpContra { imp, fact, ebox } => self.fire_imp(imp, fact, ebox, true),
            Task::AllInst { item, witness, ebox } => self.fire_all_inst(item, witness, ebox),
            Task::SpecialFire { kind, ebox, args, terms } => {
                crate::wfconv::fire_special(self, kind, ebox, &args, &terms)
            }
        }
    }

    fn match_item(&mut self, item: usize, ebox: usize) {
        if !self.box_alive(ebox) || self.items[item].shadowed {
            return;
        }
        let it = self.items[item].clone();
        match &it.kind {
            ItemKind::Prop(th) => {
                self.match_prop_builtins(item, ebox, th);
                self.match_registry(item, ebox);
                crate::wfconv::match_special(self, item, ebox);
            }
            ItemKind::TermItem(_) => {
                self.match_term_forall(item, ebox);
                self.match_registry(item, ebox);
                crate::wfconv::match_special(self, item, ebox);
            }
        }
    }

    /// Pairs a new PROP item with registered implication and universal items
    /// (and vice versa when the new item itself is one of those).
    fn match_prop_builtins(&mut self, item: usize, ebox: usize, th: &Theorem) {
        let stmt = th.concl().clone();
        // New implication: match antecedent/negated consequent against facts.
        if let Some((a, b)) = consts::dest_imp(&stmt) {
            let (a, b) = (a.clone(), b.clone());
            let facts: Vec<(usize, Term)> = self.boxes[ebox]
                .tables
                .facts()
                .iter()
                .map(|e| (e.source_item, e.prop.clone()))
                .collect();
            for (src, prop) in facts {
                if src == item || self.items[src].shadowed {
                    continue;
                }
                if self.boxes[ebox].tables.rewrite.props_congruent(&prop, &a) {
                    let score = it_score(self, item, 3);
                    self.enqueue(score, Task::ImpForward { imp: item, fact: src, ebox });
                }
                let nb = consts::mk_not(b.clone());
                if self.boxes[ebox].tables.rewrite.props_congruent(&prop, &nb) {
                    let score = it_score(self, item, 3);
                    self.enqueue(score, Task::ImpContra { imp: item, fact: src, ebox });
                }
            }
        }
        // New universal: instantiate against existing facts and terms.
        if consts::dest_all(&stmt).is_some() {
            self.match_forall_against_box(item, ebox);
        }
        // New plain fact: offer it to registered implications and universals.
        let imps = self.boxes[ebox].imp_items.clone();
        for imp in imps {
            if imp == item || self.items[imp].shadowed {
                continue;
            }
            let ItemKind::Prop(ith) = self.items[imp].kind.clone() else {
                continue;
            };
            let Some((a, b)) = consts::dest_imp(ith.concl()) else {
                continue;
            };
            if self.boxes[ebox].tables.rewrite.props_congruent(&stmt, a) {
                let score = it_score(self, item, 3);
                self.enqueue(score, Task::ImpForward { imp, fact: item, ebox });
            }
            let nb = consts::mk_not(b.clone());
            if self.boxes[ebox].tables.rewrite.props_congruent(&stmt, &nb) {
                let score = it_score(self, item, 3);
                self.enqueue(score, Task::ImpContra { imp, fact: item, ebox });
            }
        }
        let alls = self.boxes[ebox].forall_items.clone();
        for fa in alls {
            if fa == item || self.items[fa].shadowed {
                continue;
            }
            self.match_forall_trigger_fact(fa, item, ebox);
        }
    }

    /// For a new TERM item, instantiate universal equalities whose left side
    /// matches it.
    fn match_term_forall(&mut self, item: usize, ebox: usize) {
        let alls = self.boxes[ebox].forall_items.clone();
        for fa in alls {
            if self.items[fa].shadowed {
                continue;
            }
            self.match_forall_trigger_term(fa, item, ebox);
        }
    }

    /// Trigger patterns of a universal item's body, with `Bound 0`
    /// schematized away.
    fn forall_triggers(&self, th: &Theorem) -> Option<(Name, Vec<MainPattern>)> {
        let abs = consts::dest_all(th.concl())?;
        let Term::Abs(_, _, body) = abs else { return None };
        let var: Name = Arc::from("_W");
        let schem = Term::Schematic(var.clone(), SimpleType::Set);
        let body = body.open(&schem);
        let mut pats = Vec::new();
        if let Some((guard, _)) = consts::dest_imp(&body) {
            pats.push(MainPattern::Prop(guard.clone()));
        } else {
            let (pos, core) = consts::strip_not(&body);
            if let Some((l, r)) = consts::dest_eq(core) {
                pats.push(MainPattern::TermPat(l.clone()));
                pats.push(MainPattern::TermPat(r.clone()));
            }
            if pos {
                // Positive body: its negation appearing as a fact closes it.
                pats.push(MainPattern::Prop(consts::mk_not(body.clone())));
            } else {
                pats.push(MainPattern::Prop(core.clone()));
            }
        }
        Some((var, pats))
    }

    fn match_forall_against_box(&mut self, fa: usize, ebox: usize) {
        let facts: Vec<usize> = self.boxes[ebox]
            .tables
            .facts()
            .iter()
            .map(|e| e.source_item)
            .collect();
        for f in facts {
            if f != fa && !self.items.get(f).map(|i| i.shadowed).unwrap_or(true) {
                self.match_forall_trigger_fact(fa, f, ebox);
            }
        }
        // Term-pattern triggers against the whole universe.
        let ItemKind::Prop(th) = self.items[fa].kind.clone() else {
            return;
        };
        let Some((var, pats)) = self.forall_triggers(&th) else {
            return;
        };
        for p in pats {
            if let MainPattern::TermPat(tp) = p {
                if !tp.is_ground() || has_schematic_not(&tp, &var) {
                    self.ematch_forall_term_pattern(fa, ebox, &var, &tp);
                }
            }
        }
    }

    fn ematch_forall_term_pattern(&mut self, fa: usize, ebox: usize, var: &Name, tp: &Term) {
        let caps = self.cfg.match_caps;
        let roots = self.boxes[ebox]
            .tables
            .rewrite
            .classes_of_type(&SimpleType::Set);
        let subs = match self.boxes[ebox].tables.rewrite.e_match(tp, &roots, &caps) {
            Ok(s) => s,
            Err(_) => return,
        };
        for s in subs {
            if let Some(id) = s.get(var) {
                let witness = self.boxes[ebox].tables.rewrite.term(id).clone();
                let score = it_score(self, fa, 4);
                self.enqueue(score, Task::AllInst { item: fa, witness, ebox });
            }
        }
    }

    fn match_forall_trigger_fact(&mut self, fa: usize, fact: usize, ebox: usize) {
        let ItemKind::Prop(th) = self.items[fa].kind.clone() else {
            return;
        };
        let ItemKind::Prop(fact_th) = self.items[fact].kind.clone() else {
            return;
        };
        let Some((var, pats)) = self.forall_triggers(&th) else {
            return;
        };
        let caps = self.cfg.match_caps;
        for p in pats {
            let MainPattern::Prop(pp) = p else { continue };
            let tables = &mut self.boxes[ebox].tables;
            let subs = prop_pattern_match(&pp, fact_th.concl(), tables, Vec::new(), &caps);
            for s in subs {
                if let Some((_, w)) = s.iter().find(|(n, _)| n == &var) {
                    if w.is_ground() && w.is_closed() {
                        let score = it_score(self, fa, 4);
                        self.enqueue(
                            score,
                            Task::AllInst { item: fa, witness: w.clone(), ebox },
                        );
                    }
                }
            }
        }
    }

    fn match_forall_trigger_term(&mut self, fa: usize, term_item: usize, ebox: usize) {
        let ItemKind::Prop(th) = self.items[fa].kind.clone() else {
            return;
        };
        let ItemKind::TermItem(t) = self.items[term_item].kind.clone() else {
            return;
        };
        let Some((var, pats)) = self.forall_triggers(&th) else {
            return;
        };
        let caps = self.cfg.match_caps;
        for p in pats {
            let MainPattern::TermPat(tp) = p else { continue };
            let Ok(root) = self.boxes[ebox].tables.intern_term(&t) else {
                continue;
            };
            let subs = match self.boxes[ebox].tables.rewrite.e_match(&tp, &[root], &caps) {
                Ok(s) => s,
                Err(_) => continue,
            };
            for s in subs {
                if let Some(id) = s.get(&var) {
                    let witness = self.boxes[ebox].tables.rewrite.term(id).clone();
                    let score = it_score(self, fa, 4);
                    self.enqueue(score, Task::AllInst { item: fa, witness, ebox });
                }
            }
        }
    }

    /// Matches a new item against every live registry step.
    fn match_registry(&mut self, item: usize, ebox: usize) {
        let specs: Vec<Arc<ProofStepSpec>> =
            self.registry.live_steps().cloned().collect();
        for spec in specs {
            self.match_step(&spec, item, ebox);
        }
    }

    fn match_step(&mut self, spec: &ProofStepSpec, item: usize, ebox: usize) {
        let caps = self.cfg.match_caps;
        let it = self.items[item].clone();
        for slot in 0..spec.patterns.len() {
            let subs: Vec<Vec<(Name, Term)>> = match (&spec.patterns[slot], &it.kind) {
                (MainPattern::Prop(pp), ItemKind::Prop(th)) => {
                    if crate::steps::has_higher_order(pp) {
                        let mut s = Vec::new();
                        if plain_match(pp, th.concl(), &mut s) {
                            vec![s]
                        } else {
                            Vec::new()
                        }
                    } else {
                        let tables = &mut self.boxes[ebox].tables;
                        prop_pattern_match(pp, th.concl(), tables, Vec::new(), &caps)
                    }
                }
                (MainPattern::TermPat(tp), ItemKind::TermItem(t)) => {
                    if crate::steps::has_higher_order(tp) {
                        let mut s = Vec::new();
                        if plain_match(tp, t, &mut s) {
                            vec![s]
                        } else {
                            Vec::new()
                        }
                    } else {
                        let tables = &mut self.boxes[ebox].tables;
                        match tables.intern_term(t) {
                            Ok(root) => tables
                                .rewrite
                                .e_match(tp, &[root], &caps)
                                .map(|subs| {
                                    subs.iter()
                                        .map(|s| s.to_terms(&tables.rewrite))
                                        .collect()
                                })
                                .unwrap_or_default(),
                            Err(_) => Vec::new(),
                        }
                    }
                }
                _ => Vec::new(),
            };
            for sub in subs {
                // Fill the other pattern slot (if any) from partners.
                if spec.patterns.len() == 1 {
                    let app = Application {
                        step_id: spec.id.clone(),
                        ebox,
                        trigger: item,
                        partner: None,
                        subst: sub,
                    };
                    let score = it.score + spec.kind.penalty();
                    self.enqueue(score, Task::Fire(app));
                } else {
                    let other = 1 - slot;
                    self.match_partner(spec, item, ebox, other, sub);
                }
            }
        }
    }

    fn match_partner(
        &mut self,
        spec: &ProofStepSpec,
        item: usize,
        ebox: usize,
        other_slot: usize,
        sub: Vec<(Name, Term)>,
    ) {
        let caps = self.cfg.match_caps;
        let it_score0 = self.items[item].score;
        match &spec.patterns[other_slot].clone() {
            MainPattern::Prop(pp) => {
                let facts: Vec<(usize, Term)> = self.boxes[ebox]
                    .tables
                    .facts()
                    .iter()
                    .map(|e| (e.source_item, e.prop.clone()))
                    .collect();
                for (src, prop) in facts {
                    if src == item || self.items.get(src).map(|i| i.shadowed).unwrap_or(true) {
                        continue;
                    }
                    let matches = if crate::steps::has_higher_order(pp) {
                        let mut s2 = sub.clone();
                        let inst = pp.subst_schematics(&sub).beta_normalize();
                        if plain_match(&inst, &prop, &mut s2) {
                            vec![s2]
                        } else {
                            Vec::new()
                        }
                    } else {
                        let tables = &mut self.boxes[ebox].tables;
                        prop_pattern_match(pp, &prop, tables, sub.clone(), &caps)
                    };
                    for s2 in matches {
                        let app = Application {
                            step_id: spec.id.clone(),
                            ebox,
                            trigger: item,
                            partner: Some(src),
                            subst: s2,
                        };
                        self.enqueue(it_score0 + spec.kind.penalty(), Task::Fire(app));
                    }
                }
            }
            MainPattern::TermPat(tp) => {
                // Matched against the whole term universe of the box.
                let tables = &mut self.boxes[ebox].tables;
                let Ok(ty) = tp.typecheck() else { return };
                let roots = tables.rewrite.classes_of_type(&ty);
                let init: Option<crate::congruence::Substitution> = {
                    let mut ok = true;
                    let mut init = crate::congruence::Substitution::new();
                    let mut schems = Vec::new();
                    tp.schematics(&mut schems);
                    for (n, _) in schems {
                        if let Some((_, t)) = sub.iter().find(|(m, _)| *m == n) {
                            match tables.rewrite.intern(t) {
                                Ok(id) => init.binds.push((n.clone(), id)),
                                Err(_) => {
                                    ok = false;
                                    break;
                                }
                            }
                        }
                    }
                    ok.then_some(init)
                };
                let Some(init) = init else { return };
                let subs = tables
                    .rewrite
                    .e_match_with(tp, &roots, &init, &caps)
                    .unwrap_or_default();
                for s in subs {
                    let mut merged = sub.clone();
                    let mut ok = true;
                    for (n, id) in &s.binds {
                        let t = self.boxes[ebox].tables.rewrite.term(*id).clone();
                        if let Some((_, existing)) = merged.iter().find(|(m, _)| m == n) {
                            if *existing != t {
                                ok = false;
                                break;
                            }
                        } else {
                            merged.push((n.clone(), t));
                        }
                    }
                    if ok {
                        let app = Application {
                            step_id: spec.id.clone(),
                            ebox,
                            trigger: item,
                            partner: None,
                            subst: merged,
                        };
                        self.enqueue(it_score0 + spec.kind.penalty(), Task::Fire(app));
                    }
                }
            }
        }
    }

    /// Fires a matched application: discharge side conditions, build the
    /// output theorem and integrate the updates.
    fn fire(&mut self, app: Application) {
        if !self.box_alive(app.ebox) {
            return;
        }
        let Some(spec) = self.registry.get(&app.step_id).cloned() else {
            return;
        };
        if self.items[app.trigger].shadowed {
            return;
        }
        if let Some(p) = app.partner {
            if self.items[p].shadowed {
                return;
            }
        }
        let inst = Instantiation {
            subst: app.subst.clone(),
            partner: app.partner,
        };
        let digest = inst.digest(&app.step_id);
        if self.boxes[app.ebox].fired.contains(&digest) {
            return;
        }
        let mut subst = app.subst.clone();
        let caps = self.cfg.match_caps;
        let providers = {
            let tables = &mut self.boxes[app.ebox].tables;
            match discharge_conditions(&spec, &mut subst, tables, &caps) {
                ConditionOutcome::Ready(p) => p,
                ConditionOutcome::Blocked => {
                    self.boxes[app.ebox].blocked.push(app);
                    return;
                }
            }
        };
        self.boxes[app.ebox].fired.insert(digest);
        self.steps_fired += 1;
        self.fire_with_providers(&spec, app, subst, providers);
    }

    fn fire_with_providers(
        &mut self,
        spec: &ProofStepSpec,
        app: Application,
        subst: Vec<(Name, Term)>,
        mut providers: Vec<(Term, Theorem)>,
    ) {
        let ebox = app.ebox;
        // Lift the trigger (and partner) theorems to their pattern instances
        // and add them as hypothesis providers.
        let trigger_slot = match (&self.items[app.trigger].kind, &spec.patterns[0]) {
            (ItemKind::Prop(_), MainPattern::Prop(_)) => 0,
            (ItemKind::TermItem(_), MainPattern::TermPat(_)) => 0,
            _ => {
                if spec.patterns.len() == 2 {
                    1
                } else {
                    0
                }
            }
        };
        for (slot, source) in [
            (trigger_slot, Some(app.trigger)),
            (1 - trigger_slot, app.partner),
        ] {
            if slot >= spec.patterns.len() {
                continue;
            }
            let Some(src) = source else { continue };
            if let (MainPattern::Prop(pp), ItemKind::Prop(th)) =
                (&spec.patterns[slot], &self.items[src].kind.clone())
            {
                let target = pp.subst_schematics(&subst).beta_normalize();
                let lifted = if *th.concl() == target {
                    Some(th.clone())
                } else {
                    self.boxes[ebox].tables.rewrite.lift_prop(th, &target)
                };
                if let Some(l) = lifted {
                    providers.push((target, l));
                }
            }
        }
        match spec.kind {
            StepKind::Forward | StepKind::Typing => {
                let Some(th) =
                    discharge_origin(spec, &subst, &providers, &mut self.boxes[ebox].tables)
                else {
                    return;
                };
                if !th.hyps().iter().all(|h| self.hyp_in_chain(ebox, h)) {
                    return;
                }
                self.add_prop_item(ebox, th, &spec.id);
            }
            StepKind::Rewrite => {
                self.fire_rewrite(spec, &app, &subst, &providers);
            }
            StepKind::Backward => {
                self.fire_backward(spec, &app, &subst, &providers);
            }
            StepKind::Resolve => {
                self.fire_resolve(spec, &app, &subst, &providers);
            }
            StepKind::Special(_) => {}
        }
    }

    fn hyp_in_chain(&self, ebox: usize, h: &Term) -> bool {
        self.chain_assumptions(ebox).contains(h)
    }

    fn fire_rewrite(
        &mut self,
        spec: &ProofStepSpec,
        app: &Application,
        subst: &[(Name, Term)],
        providers: &[(Term, Theorem)],
    ) {
        let ebox = app.ebox;
        let Some(th) = discharge_origin(spec, subst, providers, &mut self.boxes[ebox].tables)
        else {
            return;
        };
        if !th.hyps().iter().all(|h| self.hyp_in_chain(ebox, h)) {
            return;
        }
        // Split conjunction conclusions into the equality and the extras.
        let mut parts = vec![th.clone()];
        if consts::dest_conj(th.concl()).is_some() {
            parts.clear();
            let mut cur = th.clone();
            loop {
                if consts::dest_conj(cur.concl()).is_some() {
                    if let Ok((a, b)) = derived::conj_components(&cur) {
                        parts.push(a);
                        cur = b;
                        continue;
                    }
                }
                parts.push(cur);
                break;
            }
        }
        let main = parts.remove(0);
        if consts::dest_eq(main.concl()).is_some() {
            // Term rewrite: assert the instance equality.
            self.add_prop_item(ebox, main, &spec.id);
        } else if consts::dest_iff(main.concl()).is_some() {
            // Propositional rewrite: transform the trigger item.
            let ItemKind::Prop(item_th) = self.items[app.trigger].kind.clone() else {
                return;
            };
            let (lhs, _) = match consts::dest_iff(main.concl()) {
                Some((a, b)) => (a.clone(), b.clone()),
                None => return,
            };
            let stmt = item_th.concl().clone();
            let produced = if let Some(inner) = consts::dest_not(&stmt) {
                // ~lhs item: contrapose to ~rhs.
                let _ = inner;
                let lifted = self.boxes[ebox]
                    .tables
                    .rewrite
                    .lift_prop(&item_th, &consts::mk_not(lhs.clone()));
                lifted.and_then(|neg_lhs| {
                    infer(Rule::IffE2, &[&main], &[])
                        .ok()
                        .and_then(|bwd| derived::contrapose(&bwd, &neg_lhs).ok())
                })
            } else {
                let lifted = self.boxes[ebox].tables.rewrite.lift_prop(&item_th, &lhs);
                lifted.and_then(|pos| {
                    infer(Rule::IffE1, &[&main], &[])
                        .ok()
                        .and_then(|fwd| infer(Rule::Mp, &[&fwd, &pos], &[]).ok())
                })
            };
            if let Some(out) = produced {
                self.shadow(app.trigger);
                self.add_prop_item(ebox, out, &spec.id);
            }
        }
        for part in parts {
            self.add_prop_item(ebox, part, &spec.id);
        }
    }

    fn fire_backward(
        &mut self,
        spec: &ProofStepSpec,
        app: &Application,
        subst: &[(Name, Term)],
        providers: &[(Term, Theorem)],
    ) {
        let ebox = app.ebox;
        // The trigger matched ~conclusion; lift the trigger theorem to it.
        let ItemKind::Prop(item_th) = self.items[app.trigger].kind.clone() else {
            return;
        };
        let neg_pat = spec.patterns[0].term().subst_schematics(subst).beta_normalize();
        let Some(neg_thm) = ({
            if *item_th.concl() == neg_pat {
                Some(item_th.clone())
            } else {
                self.boxes[ebox].tables.rewrite.lift_prop(&item_th, &neg_pat)
            }
        }) else {
            return;
        };
        match &spec.goal_assumption {
            Some(goal) => {
                let goal_inst = goal.subst_schematics(subst).beta_normalize();
                let Some(discharged) =
                    discharge_origin(spec, subst, providers, &mut self.boxes[ebox].tables)
                else {
                    return;
                };
                // discharged still carries the goal assumption.
                let Some(new_goal) =
                    crate::steps::backward_goal(&discharged, &goal_inst, &neg_thm)
                else {
                    return;
                };
                if !new_goal.hyps().iter().all(|h| self.hyp_in_chain(ebox, h)) {
                    return;
                }
                self.add_prop_item(ebox, new_goal, &spec.id);
            }
            None => {
                let Some(th) =
                    discharge_origin(spec, subst, providers, &mut self.boxes[ebox].tables)
                else {
                    return;
                };
                if let Ok(contra) = infer(Rule::NotE, &[&neg_thm, &th], &[]) {
                    let _ = self.resolve(ebox, contra);
                }
            }
        }
    }

    fn fire_resolve(
        &mut self,
        spec: &ProofStepSpec,
        app: &Application,
        subst: &[(Name, Term)],
        providers: &[(Term, Theorem)],
    ) {
        let ebox = app.ebox;
        let Some(th) = discharge_origin(spec, subst, providers, &mut self.boxes[ebox].tables)
        else {
            return;
        };
        let contra = if consts::is_false(th.concl()) {
            Some(th)
        } else if let Some(inner) = consts::dest_not(th.concl()) {
            // Conclusion ~A refutes the matched item (congruent to A).
            let inner = inner.clone();
            let pos = self.boxes[ebox]
                .tables
                .find_congruent_fact(&inner)
                .map(|e| e.theorem.clone())
                .and_then(|f| self.boxes[ebox].tables.rewrite.lift_prop(&f, &inner));
            pos.and_then(|p| infer(Rule::NotE, &[&th, &p], &[]).ok())
        } else {
            // Conclusion C with a matched ~C item.
            let neg = consts::mk_not(th.concl().clone());
            let nf = self.boxes[ebox]
                .tables
                .find_congruent_fact(&neg)
                .map(|e| e.theorem.clone())
                .and_then(|f| self.boxes[ebox].tables.rewrite.lift_prop(&f, &neg));
            nf.and_then(|n| infer(Rule::NotE, &[&n, &th], &[]).ok())
        };
        if let Some(contra) = contra {
            if contra.hyps().iter().all(|h| self.hyp_in_chain(ebox, h)) {
                let _ = self.resolve(ebox, contra);
            }
        }
    }

    fn fire_split(&mut self, item: usize, ebox: usize) {
        if !self.box_alive(ebox) || self.items[item].shadowed {
            return;
        }
        let ItemKind::Prop(th) = self.items[item].kind.clone() else {
            return;
        };
        let stmt = th.concl().clone();
        let disj = if consts::dest_disj(&stmt).is_some() {
            Some(th)
        } else if let Some(inner) = consts::dest_not(&stmt) {
            if consts::dest_conj(inner).is_some() {
                derived::neg_conj_cases(&th).ok()
            } else if consts::dest_iff(inner).is_some() {
                derived::neg_iff_cases(&th).ok()
            } else {
                None
            }
        } else {
            None
        };
        if let Some(d) = disj {
            self.steps_fired += 1;
            let _ = self.add_case(ebox, &d);
        }
    }

    fn fire_imp(&mut self, imp: usize, fact: usize, ebox: usize, contra: bool) {
        if !self.box_alive(ebox) || self.items[imp].shadowed || self.items[fact].shadowed {
            return;
        }
        let (ItemKind::Prop(ith), ItemKind::Prop(fth)) =
            (self.items[imp].kind.clone(), self.items[fact].kind.clone())
        else {
            return;
        };
        let Some((a, b)) = consts::dest_imp(ith.concl()).map(|(a, b)| (a.clone(), b.clone()))
        else {
            return;
        };
        let digest = format!("imp{}:{}:{}", imp, fact, contra);
        if self.boxes[ebox].fired.contains(&digest) {
            return;
        }
        self.boxes[ebox].fired.insert(digest);
        self.steps_fired += 1;
        if contra {
            let nb = consts::mk_not(b);
            let Some(lifted) = self.boxes[ebox].tables.rewrite.lift_prop(&fth, &nb) else {
                return;
            };
            if let Ok(na) = derived::contrapose(&ith, &lifted) {
                self.add_prop_item(ebox, na, "imp_contra");
            }
        } else {
            let Some(lifted) = self.boxes[ebox].tables.rewrite.lift_prop(&fth, &a) else {
                return;
            };
            if let Ok(out) = infer(Rule::Mp, &[&ith, &lifted], &[]) {
                self.add_prop_item(ebox, out, "imp_mp");
            }
        }
    }

    fn fire_all_inst(&mut self, item: usize, witness: Term, ebox: usize) {
        if !self.box_alive(ebox) || self.items[item].shadowed {
            return;
        }
        let ItemKind::Prop(th) = self.items[item].kind.clone() else {
            return;
        };
        let digest = format!("all{}:{}", item, witness);
        if self.boxes[ebox].fired.contains(&digest) {
            return;
        }
        self.boxes[ebox].fired.insert(digest);
        self.steps_fired += 1;
        if let Ok(inst) = infer(Rule::AllE, &[&th], &[Param::Term(witness)]) {
            self.add_prop_item(ebox, inst, "forall_inst");
        }
    }

    /// Builds the final theorem of a plain (non-scripted) search from the
    /// home box's contradiction.
    pub fn conclude(&mut self) -> Result<Theorem, StateError> {
        let contra = self.boxes[0]
            .contra
            .clone()
            .ok_or_else(|| StateError::IllTyped("home box not resolved".into()))?;
        let goal = self
            .goal
            .clone()
            .ok_or_else(|| StateError::IllTyped("no goal".into()))?;
        let mut th = infer(Rule::Ccontr, &[&contra], &[Param::Term(goal)])?;
        for a in self.base_assumptions.clone() {
            th = derived::weaken(&th, &a)?;
        }
        // Exactly the declared assumptions must remain.
        for h in th.hyps() {
            if !self.base_assumptions.contains(h) {
                return Err(StateError::HypothesisEscape(h.to_string()));
            }
        }
        Ok(th)
    }

    /// Queues a special-step application (used by the wfconv hooks).
    pub fn enqueue_special(
        &mut self,
        score: u64,
        kind: SpecialKind,
        ebox: usize,
        args: Vec<usize>,
        terms: Vec<Term>,
    ) {
        self.enqueue(score, Task::SpecialFire { kind, ebox, args, terms });
    }

    pub fn box_alive_pub(&self, b: usize) -> bool {
        self.box_alive(b)
    }

    /// Returns true when the digest was not fired before, marking it fired.
    pub fn mark_fired(&mut self, ebox: usize, digest: &str) -> bool {
        if self.boxes[ebox].fired.contains(digest) {
            false
        } else {
            self.boxes[ebox].fired.insert(digest.to_string());
            self.steps_fired += 1;
            true
        }
    }

    pub fn snapshot(&self, since_item: usize) -> Vec<String> {
        self.items[since_item..]
            .iter()
            .map(|i| match &i.kind {
                ItemKind::Prop(th) => format!("[box {}] {}", i.box_id, th.concl()),
                ItemKind::TermItem(t) => format!("[box {}] term {}", i.box_id, t),
            })
            .collect()
    }

    pub fn item_count(&self) -> usize {
        self.items.len()
    }
}

fn it_score(st: &SearchState, item: usize, penalty: u64) -> u64 {
    st.items[item].score + penalty
}

fn has_schematic_not(t: &Term, except: &Name) -> bool {
    let mut schems = Vec::new();
    t.schematics(&mut schems);
    schems.iter().any(|(n, _)| n != except)
}

/// Runs a complete proof attempt for `goal` under `assumptions`.
pub fn prove(
    sig: Arc<Signature>,
    registry: Arc<Registry>,
    decls: Arc<TableDecls>,
    normalizers: Arc<crate::wfconv::NormalizerRegistry>,
    assumptions: &[Term],
    goal: &Term,
    cfg: SearchConfig,
) -> Result<(SearchOutcome, SearchStats, Vec<String>), StateError> {
    let start = Instant::now();
    let timeout = cfg.timeout_ms;
    let mut state = SearchState::new(sig, registry, decls, normalizers, cfg);
    state.init(assumptions, goal)?;
    let deadline = start + std::time::Duration::from_millis(timeout);
    let outcome = match state.run_until(0, deadline) {
        Some(_) => SearchOutcome::Proved(state.conclude()?),
        None => SearchOutcome::Failed(FailureReport {
            failed_step: None,
            snapshot: state.snapshot(0),
            stats: SearchStats {
                items: state.item_count(),
                steps_fired: state.steps_fired,
                ms: start.elapsed().as_millis() as u64,
            },
        }),
    };
    let stats = SearchStats {
        items: state.item_count(),
        steps_fired: state.steps_fired,
        ms: start.elapsed().as_millis() as u64,
    };
    Ok((outcome, stats, std::mem::take(&mut state.trace_lines)))
}
