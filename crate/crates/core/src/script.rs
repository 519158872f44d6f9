//! The declarative proof-script language: LET, HAVE, CHOOSE, WITH, THEN.
//!
//! Scripts appear between `proof` and `qed` after a lemma statement. Each
//! HAVE/CHOOSE step runs a bounded sub-search in a child box; LET introduces
//! a local abbreviation. On failure the report names the first top-level
//! step that could not be proved.

use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::kernel::consts;
use crate::kernel::{infer, Param, Rule, Signature, SimpleType, Term, Theorem};
use crate::state::{FailureReport, SearchConfig, SearchState, SearchStats};
use crate::steps::Registry;
use crate::tables::TableDecls;
use crate::theory::{lex, parse_term, NotationTable, Sp, TheoryError, Tok};
use crate::wfconv::NormalizerRegistry;

/// Parsed script tree. The quoted strings are elaborated at execution time,
/// when local abbreviations are in scope.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScriptNode {
    Seq(Vec<ScriptNode>),
    Let {
        raw: String,
        line: u32,
    },
    Have {
        raw: String,
        with_script: Option<Box<ScriptNode>>,
        line: u32,
    },
    Choose {
        raw: String,
        with_script: Option<Box<ScriptNode>>,
        line: u32,
    },
    Group(Box<ScriptNode>),
}

impl ScriptNode {
    /// The top-level steps of a script (a non-Seq node is one step).
    pub fn steps(&self) -> Vec<&ScriptNode> {
        match self {
            ScriptNode::Seq(v) => v.iter().collect(),
            other => vec![other],
        }
    }
}

/// Parses a proof script from source text.
pub fn parse_script(src: &str, file: &str) -> Result<ScriptNode, TheoryError> {
    let toks = lex(src, file)?;
    parse_script_tokens(&toks, file)
}

/// Parses a proof script from pre-lexed tokens.
pub fn parse_script_tokens(toks: &[Sp], file: &str) -> Result<ScriptNode, TheoryError> {
    let mut p = ScriptParser {
        toks,
        pos: 0,
        file: file.to_string(),
    };
    let node = p.script()?;
    if p.pos < p.toks.len() {
        return p.err("trailing tokens after script");
    }
    Ok(node)
}

struct ScriptParser<'a> {
    toks: &'a [Sp],
    pos: usize,
    file: String,
}

impl<'a> ScriptParser<'a> {
    fn err<T>(&self, msg: impl Into<String>) -> Result<T, TheoryError> {
        let (line, col) = self
            .toks
            .get(self.pos.min(self.toks.len().saturating_sub(1)))
            .map(|s| (s.line, s.col))
            .unwrap_or((0, 0));
        Err(TheoryError::Syntax {
            file: self.file.clone(),
            line,
            col,
            msg: msg.into(),
        })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|s| &s.tok)
    }

    fn line(&self) -> u32 {
        self.toks.get(self.pos).map(|s| s.line).unwrap_or(0)
    }

    fn script(&mut self) -> Result<ScriptNode, TheoryError> {
        let mut steps = vec![self.step()?];
        while matches!(self.peek(), Some(Tok::Ident(s)) if s == "THEN") {
            self.pos += 1;
            steps.push(self.step()?);
        }
        if steps.len() == 1 {
            Ok(steps.pop().unwrap())
        } else {
            Ok(ScriptNode::Seq(steps))
        }
    }

    fn quoted(&mut self) -> Result<String, TheoryError> {
        match self.peek().cloned() {
            Some(Tok::Str(s)) => {
                self.pos += 1;
                Ok(s)
            }
            _ => self.err("expected quoted string"),
        }
    }

    fn step(&mut self) -> Result<ScriptNode, TheoryError> {
        let line = self.line();
        match self.peek().cloned() {
            Some(Tok::Ident(kw)) if kw == "LET" => {
                self.pos += 1;
                let raw = self.quoted()?;
                Ok(ScriptNode::Let { raw, line })
            }
            Some(Tok::Ident(kw)) if kw == "HAVE" || kw == "CHOOSE" => {
                self.pos += 1;
                let raw = self.quoted()?;
                let with_script = if matches!(self.peek(), Some(Tok::Ident(s)) if s == "WITH") {
                    self.pos += 1;
                    Some(Box::new(self.step_or_group()?))
                } else {
                    None
                };
                if kw == "HAVE" {
                    Ok(ScriptNode::Have { raw, with_script, line })
                } else {
                    Ok(ScriptNode::Choose { raw, with_script, line })
                }
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let inner = self.script()?;
                if self.peek() != Some(&Tok::RParen) {
                    return self.err("unbalanced parenthesis in script");
                }
                self.pos += 1;
                Ok(ScriptNode::Group(Box::new(inner)))
            }
            _ => self.err("expected LET, HAVE, CHOOSE or ("),
        }
    }

    /// A WITH body is a single step or a parenthesized script.
    fn step_or_group(&mut self) -> Result<ScriptNode, TheoryError> {
        self.step()
    }
}

/// Splits a quoted binding list on top-level commas (commas inside any kind
/// of bracket do not split).
fn split_top_commas(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut cur = String::new();
    let mut angle = 0i32;
    for c in s.chars() {
        match c {
            '(' | '{' | '[' => depth += 1,
            ')' | '}' | ']' => depth -= 1,
            '<' => angle += 1,
            '>' => angle -= 1,
            ',' if depth == 0 && angle <= 0 => {
                out.push(cur.trim().to_string());
                cur.clear();
                continue;
            }
            _ => {}
        }
        cur.push(c);
    }
    if !cur.trim().is_empty() {
        out.push(cur.trim().to_string());
    }
    out
}

/// Execution context threaded through a script run.
pub struct ScriptCtx<'a> {
    pub notations: &'a NotationTable,
    pub sig: &'a Signature,
    /// Free variables in scope with their types (statement frees plus
    /// accumulated LET/CHOOSE names).
    pub env: Vec<(String, SimpleType)>,
    pub deadline: Instant,
    pub file: String,
}

pub enum StepFailure {
    /// The sub-search for this step failed; snapshot of derived items.
    Unproved(Vec<String>),
    /// The step itself is malformed.
    Bad(String),
}

/// Executes one script step in `ebox`. Returns Ok(()) on success.
fn exec_step(
    node: &ScriptNode,
    state: &mut SearchState,
    ctx: &mut ScriptCtx,
    ebox: usize,
    step_deadline: Instant,
) -> Result<(), StepFailure> {
    match node {
        ScriptNode::Seq(_) | ScriptNode::Group(_) => {
            exec_seq_inner(node, state, ctx, ebox, step_deadline)
        }
        ScriptNode::Let { raw, .. } => {
            for binding in split_top_commas(raw) {
                exec_let_binding(&binding, state, ctx, ebox, step_deadline)?;
            }
            Ok(())
        }
        ScriptNode::Have { raw, with_script, .. } => {
            let (prop, _) = parse_term(
                raw,
                ctx.notations,
                ctx.sig,
                &ctx.file,
                &ctx.env,
                Some(&SimpleType::Prop),
            )
            .map_err(|e| StepFailure::Bad(e.to_string()))?;
            let th = sub_search(&prop, state, ctx, ebox, with_script.as_deref(), step_deadline)?;
            state.add_item(ebox, crate::state::ItemKind::Prop(th), "script_have");
            Ok(())
        }
        ScriptNode::Choose { raw, with_script, .. } => {
            // "x1, ..., xk, prop": the longest identifier prefix is the
            // variable list.
            let parts = split_top_commas(raw);
            let mut vars: Vec<String> = Vec::new();
            let mut idx = 0;
            while idx + 1 < parts.len() && is_fresh_ident(&parts[idx], ctx) {
                vars.push(parts[idx].clone());
                idx += 1;
            }
            if vars.is_empty() {
                return Err(StepFailure::Bad(format!(
                    "CHOOSE needs fresh variables: {}",
                    raw
                )));
            }
            let prop_src = parts[idx..].join(", ");
            let mut env = ctx.env.clone();
            for v in &vars {
                env.push((v.clone(), SimpleType::Set));
            }
            let (prop, _) = parse_term(
                &prop_src,
                ctx.notations,
                ctx.sig,
                &ctx.file,
                &env,
                Some(&SimpleType::Prop),
            )
            .map_err(|e| StepFailure::Bad(e.to_string()))?;
            // Goal: ?x1...?xk. prop.
            let mut goal = prop;
            for v in vars.iter().rev() {
                goal = consts::mk_ex(v, goal);
            }
            let th = sub_search(&goal, state, ctx, ebox, with_script.as_deref(), step_deadline)?;
            // Adding the existential item destructs it with eigenvariables
            // named after the binders (fresh by construction).
            state.add_item(ebox, crate::state::ItemKind::Prop(th), "script_choose");
            ctx.env.extend(vars.into_iter().map(|v| (v, SimpleType::Set)));
            Ok(())
        }
    }
}

fn exec_seq_inner(
    node: &ScriptNode,
    state: &mut SearchState,
    ctx: &mut ScriptCtx,
    ebox: usize,
    deadline: Instant,
) -> Result<(), StepFailure> {
    match node {
        ScriptNode::Seq(steps) => {
            for s in steps {
                exec_seq_inner(s, state, ctx, ebox, deadline)?;
            }
            Ok(())
        }
        ScriptNode::Group(inner) => exec_seq_inner(inner, state, ctx, ebox, deadline),
        other => exec_step(other, state, ctx, ebox, deadline),
    }
}

fn is_fresh_ident(s: &str, ctx: &ScriptCtx) -> bool {
    let mut chars = s.chars();
    let Some(c0) = chars.next() else { return false };
    if !c0.is_ascii_alphabetic() {
        return false;
    }
    if !chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '\'') {
        return false;
    }
    ctx.env.iter().all(|(n, _)| n != s) && ctx.sig.constant_type(s).is_none()
}

fn exec_let_binding(
    binding: &str,
    state: &mut SearchState,
    ctx: &mut ScriptCtx,
    ebox: usize,
    deadline: Instant,
) -> Result<(), StepFailure> {
    let Some(eq_pos) = top_level_eq(binding) else {
        return Err(StepFailure::Bad(format!("LET needs an equation: {}", binding)));
    };
    let (lhs_src, rhs_src) = binding.split_at(eq_pos);
    let rhs_src = &rhs_src[1..];
    let lhs_src = lhs_src.trim();
    if is_fresh_ident(lhs_src, ctx) {
        // Fresh abbreviation.
        let (rhs, _) = parse_term(
            rhs_src,
            ctx.notations,
            ctx.sig,
            &ctx.file,
            &ctx.env,
            Some(&SimpleType::Set),
        )
        .map_err(|e| StepFailure::Bad(e.to_string()))?;
        let var = Term::free(lhs_src, SimpleType::Set);
        state
            .script_let(ebox, &var, &rhs)
            .map_err(|e| StepFailure::Bad(e.to_string()))?;
        ctx.env.push((lhs_src.to_string(), SimpleType::Set));
        Ok(())
    } else {
        // Pattern equality: prove ?v1...?vk. pattern = rhs, then destructure.
        let mut env = ctx.env.clone();
        let (lhs_pat, lhs_frees) = parse_term(
            lhs_src,
            ctx.notations,
            ctx.sig,
            &ctx.file,
            &env,
            Some(&SimpleType::Set),
        )
        .map_err(|e| StepFailure::Bad(e.to_string()))?;
        let fresh: Vec<String> = lhs_frees
            .iter()
            .filter(|(n, _)| !ctx.env.iter().any(|(m, _)| m == n))
            .map(|(n, _)| n.clone())
            .collect();
        for f in &fresh {
            env.push((f.clone(), SimpleType::Set));
        }
        let (rhs, _) = parse_term(
            rhs_src,
            ctx.notations,
            ctx.sig,
            &ctx.file,
            &env,
            Some(&SimpleType::Set),
        )
        .map_err(|e| StepFailure::Bad(e.to_string()))?;
        let mut goal = consts::mk_eq(lhs_pat, rhs);
        for v in fresh.iter().rev() {
            goal = consts::mk_ex(v, goal);
        }
        let th = sub_search(&goal, state, ctx, ebox, None, deadline)?;
        state.add_item(ebox, crate::state::ItemKind::Prop(th), "script_let");
        ctx.env
            .extend(fresh.into_iter().map(|v| (v, SimpleType::Set)));
        Ok(())
    }
}

fn top_level_eq(s: &str) -> Option<usize> {
    let mut depth = 0i32;
    let mut angle = 0i32;
    let chars: Vec<char> = s.chars().collect();
    let mut byte = 0usize;
    for (i, c) in chars.iter().enumerate() {
        match c {
            '(' | '{' | '[' => depth += 1,
            ')' | '}' | ']' => depth -= 1,
            '<' => angle += 1,
            '>' => angle -= 1,
            '=' if depth == 0 && angle <= 0 => {
                // Reject ==, <=, >=, ~=, <->-like contexts.
                let prev = if i > 0 { chars[i - 1] } else { ' ' };
                let next = chars.get(i + 1).copied().unwrap_or(' ');
                if prev != '=' && prev != '<' && prev != '>' && prev != '~' && prev != '!'
                    && next != '='
                    && next != '>'
                {
                    return Some(byte);
                }
            }
            _ => {}
        }
        byte += c.len_utf8();
    }
    None
}

/// Runs a bounded sub-search proving `prop` in a child box of `ebox`,
/// executing `with_script` inside the child first.
fn sub_search(
    prop: &Term,
    state: &mut SearchState,
    ctx: &mut ScriptCtx,
    ebox: usize,
    with_script: Option<&ScriptNode>,
    deadline: Instant,
) -> Result<Theorem, StepFailure> {
    let snapshot_start = state.item_count();
    let child = state
        .push_scope(ebox, &consts::mk_not(prop.clone()))
        .map_err(|e| StepFailure::Bad(e.to_string()))?;
    if let Some(ws) = with_script {
        let mut sub_ctx = ScriptCtx {
            notations: ctx.notations,
            sig: ctx.sig,
            env: ctx.env.clone(),
            deadline: ctx.deadline,
            file: ctx.file.clone(),
        };
        exec_seq_inner(ws, state, &mut sub_ctx, child, deadline)?;
    }
    match state.run_until(child, deadline) {
        Some(contra) => {
            state.pop_scope(child);
            let th = infer(Rule::Ccontr, &[&contra], &[Param::Term(prop.clone())])
                .map_err(|e| StepFailure::Bad(e.to_string()))?;
            Ok(th)
        }
        None => {
            let snap = state.snapshot(snapshot_start);
            state.pop_scope(child);
            Err(StepFailure::Unproved(snap))
        }
    }
}

impl SearchState {
    /// Introduces a local abbreviation `var = rhs` in a box: the equality
    /// becomes an assumption item discharged automatically at resolution.
    pub fn script_let(
        &mut self,
        ebox: usize,
        var: &Term,
        rhs: &Term,
    ) -> Result<(), crate::state::StateError> {
        self.script_let_impl(ebox, var, rhs)
    }
}

/// Executes a lemma proof with a script: runs the steps, then the final
/// saturation, and assembles the theorem.
#[allow(clippy::too_many_arguments)]
pub fn execute_lemma(
    sig: Arc<Signature>,
    registry: Arc<Registry>,
    decls: Arc<TableDecls>,
    normalizers: Arc<NormalizerRegistry>,
    hyps: &[Term],
    concl: &Term,
    frees: &[(String, SimpleType)],
    script: &ScriptNode,
    cfg: SearchConfig,
) -> Result<(Theorem, SearchStats, Vec<String>), (FailureReport, Vec<String>)> {
    let start = Instant::now();
    let timeout = cfg.timeout_ms;
    let notations = NotationTable::with_builtins();
    let mut state = SearchState::new(sig.clone(), registry, decls, normalizers, cfg);
    let fail = |state: &mut SearchState, failed_step: Option<usize>, snapshot: Vec<String>| {
        let stats = SearchStats {
            items: state.item_count(),
            steps_fired: state.steps_fired,
            ms: start.elapsed().as_millis() as u64,
        };
        (
            FailureReport {
                failed_step,
                snapshot,
                stats,
            },
            std::mem::take(&mut state.trace_lines),
        )
    };
    if let Err(e) = state.init(hyps, concl) {
        let snapshot = vec![format!("init error: {}", e)];
        return Err(fail(&mut state, Some(1), snapshot));
    }
    let deadline = start + Duration::from_millis(timeout);
    let mut ctx = ScriptCtx {
        notations: &notations,
        sig: &sig,
        env: frees.to_vec(),
        deadline,
        file: "<script>".to_string(),
    };
    let steps = script.steps();
    let total = steps.len();
    for (i, s) in steps.iter().enumerate() {
        // Per-step budget: remaining time split evenly, at least 500ms.
        let remaining = deadline.saturating_duration_since(Instant::now());
        let per_step = remaining
            .checked_div((total - i) as u32)
            .unwrap_or(Duration::from_millis(500))
            .max(Duration::from_millis(500));
        let step_deadline = Instant::now() + per_step;
        match exec_step(s, &mut state, &mut ctx, 0, step_deadline) {
            Ok(()) => {}
            Err(StepFailure::Unproved(snap)) => {
                return Err(fail(&mut state, Some(i + 1), snap));
            }
            Err(StepFailure::Bad(msg)) => {
                return Err(fail(&mut state, Some(i + 1), vec![msg]));
            }
        }
    }
    // Final saturation closes the original goal.
    match state.run_until(0, deadline) {
        Some(_) => match state.conclude() {
            Ok(th) => {
                let stats = SearchStats {
                    items: state.item_count(),
                    steps_fired: state.steps_fired,
                    ms: start.elapsed().as_millis() as u64,
                };
                Ok((th, stats, std::mem::take(&mut state.trace_lines)))
            }
            Err(e) => {
                let snapshot = vec![format!("conclude error: {}", e)];
                Err(fail(&mut state, None, snapshot))
            }
        },
        None => {
            let snap = state.snapshot(0);
            Err(fail(&mut state, None, snap))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nested_with_parses() {
        let s = parse_script("HAVE \"P\" WITH HAVE \"Q\"", "t").unwrap();
        match s {
            ScriptNode::Have { with_script, .. } => {
                assert!(matches!(
                    with_script.as_deref(),
                    Some(ScriptNode::Have { .. })
                ));
            }
            _ => panic!("expected HAVE"),
        }
    }

    #[test]
    fn unbalanced_paren_rejected() {
        let err = parse_script("(HAVE \"P\" THEN HAVE \"Q\"", "t");
        assert!(err.is_err());
    }

    #[test]
    fn then_chain_counts_steps() {
        let s = parse_script(
            "LET \"a = b\" THEN HAVE \"P\" THEN (HAVE \"Q\" THEN HAVE \"R\")",
            "t",
        )
        .unwrap();
        assert_eq!(s.steps().len(), 3);
    }

    #[test]
    fn comma_split_respects_brackets() {
        let parts = split_top_commas("X_B = X -- X_A, Y_A = f``X_A, Y_B = Y -- Y_A");
        assert_eq!(parts.len(), 3);
        let parts = split_top_commas("x, P(<a,b>, c)");
        assert_eq!(parts.len(), 2);
    }
}
