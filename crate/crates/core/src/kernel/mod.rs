//! The trusted core: term language, theorems, primitive inference rules,
//! signature management and derivation replay.
//!
//! `Theorem` values can only be produced by the operations in this module
//! (assumption, the primitive rules, instantiation, generalization, and axiom
//! or definition registration), so trusting a proof reduces to trusting this
//! module and the registered axioms.

mod signature;
mod term;
mod theorem;

pub use signature::Signature;
pub use term::{Name, SimpleType, Term};
pub use theorem::{
    assume, generalize, infer, instantiate, recording_enabled, replay, replay_check,
    set_recording, Derivation, Param, Rule, Theorem,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KernelError {
    #[error("undeclared constant: {0}")]
    UndeclaredConstant(String),
    #[error("type mismatch: cannot apply {fun_ty} to {arg_ty}")]
    TypeMismatch { fun_ty: String, arg_ty: String },
    #[error("unbound de Bruijn index {0}")]
    UnboundIndex(u32),
    #[error("unknown schematic variable: {0}")]
    UnknownSchematic(String),
    #[error("rule {rule} applied to premises of the wrong shape: {detail}")]
    RuleShapeMismatch { rule: String, detail: String },
    #[error("eigenvariable {0} occurs in remaining hypotheses or conclusion")]
    EigenvariableViolation(String),
    #[error("duplicate name: {0}")]
    DuplicateName(String),
    #[error("ill-formed definition: {0}")]
    IllFormedDefinition(String),
    #[error("replay mismatch: {0}")]
    ReplayMismatch(String),
    #[error("substitution value for {0} must be closed")]
    OpenSubstitution(String),
}

/// Constructors and destructors for the built-in logical constants.
pub mod consts {
    use super::term::{SimpleType, Term};

    fn ty_i() -> SimpleType {
        SimpleType::Set
    }
    fn ty_o() -> SimpleType {
        SimpleType::Prop
    }
    fn binop_o() -> SimpleType {
        SimpleType::arrows(&[ty_o(), ty_o()], ty_o())
    }

    pub const EQ: &str = "eq";
    pub const IMP: &str = "imp";
    pub const CONJ: &str = "conj";
    pub const DISJ: &str = "disj";
    pub const IFF: &str = "iff";
    pub const NOT: &str = "not";
    pub const ALL: &str = "all";
    pub const EX: &str = "ex";
    pub const TRUE: &str = "True";
    pub const FALSE: &str = "False";
    pub const MEM: &str = "mem";

    /// The constants every signature starts with.
    pub fn base_decls() -> Vec<(&'static str, SimpleType)> {
        let quant = SimpleType::arrow(SimpleType::arrow(ty_i(), ty_o()), ty_o());
        vec![
            (EQ, SimpleType::arrows(&[ty_i(), ty_i()], ty_o())),
            (IMP, binop_o()),
            (CONJ, binop_o()),
            (DISJ, binop_o()),
            (IFF, binop_o()),
            (NOT, SimpleType::arrow(ty_o(), ty_o())),
            (ALL, quant.clone()),
            (EX, quant),
            (TRUE, ty_o()),
            (FALSE, ty_o()),
            (MEM, SimpleType::arrows(&[ty_i(), ty_i()], ty_o())),
        ]
    }

    pub fn mem() -> Term {
        Term::cnst(MEM, SimpleType::arrows(&[ty_i(), ty_i()], ty_o()))
    }

    pub fn mk_mem(x: Term, s: Term) -> Term {
        Term::apps(mem(), [x, s])
    }

    pub fn mk_eq(a: Term, b: Term) -> Term {
        Term::apps(
            Term::cnst(EQ, SimpleType::arrows(&[ty_i(), ty_i()], ty_o())),
            [a, b],
        )
    }

    pub fn mk_imp(a: Term, b: Term) -> Term {
        Term::apps(Term::cnst(IMP, binop_o()), [a, b])
    }

    pub fn mk_conj(a: Term, b: Term) -> Term {
        Term::apps(Term::cnst(CONJ, binop_o()), [a, b])
    }

    pub fn mk_disj(a: Term, b: Term) -> Term {
        Term::apps(Term::cnst(DISJ, binop_o()), [a, b])
    }

    pub fn mk_iff(a: Term, b: Term) -> Term {
        Term::apps(Term::cnst(IFF, binop_o()), [a, b])
    }

    pub fn mk_not(a: Term) -> Term {
        Term::app(Term::cnst(NOT, SimpleType::arrow(ty_o(), ty_o())), a)
    }

    pub fn mk_true() -> Term {
        Term::cnst(TRUE, ty_o())
    }

    pub fn mk_false() -> Term {
        Term::cnst(FALSE, ty_o())
    }

    fn quant_ty() -> SimpleType {
        SimpleType::arrow(SimpleType::arrow(ty_i(), ty_o()), ty_o())
    }

    /// `!x. body` where `body` abstracts the variable `name`.
    pub fn mk_all(name: &str, body: Term) -> Term {
        let abs = Term::abs(name, ty_i(), body.abstract_free(name));
        Term::app(Term::cnst(ALL, quant_ty()), abs)
    }

    /// `all` applied to an existing abstraction.
    pub fn mk_all_abs(abs: Term) -> Term {
        Term::app(Term::cnst(ALL, quant_ty()), abs)
    }

    pub fn mk_ex(name: &str, body: Term) -> Term {
        let abs = Term::abs(name, ty_i(), body.abstract_free(name));
        Term::app(Term::cnst(EX, quant_ty()), abs)
    }

    pub fn mk_ex_abs(abs: Term) -> Term {
        Term::app(Term::cnst(EX, quant_ty()), abs)
    }

    fn dest_binop<'a>(t: &'a Term, name: &str) -> Option<(&'a Term, &'a Term)> {
        if let Term::App(f, b) = t {
            if let Term::App(g, a) = f.as_ref() {
                if let Term::Const(n, _) = g.as_ref() {
                    if n.as_ref() == name {
                        return Some((a.as_ref(), b.as_ref()));
                    }
                }
            }
        }
        None
    }

    pub fn dest_eq(t: &Term) -> Option<(&Term, &Term)> {
        dest_binop(t, EQ)
    }

    pub fn dest_imp(t: &Term) -> Option<(&Term, &Term)> {
        dest_binop(t, IMP)
    }

    pub fn dest_conj(t: &Term) -> Option<(&Term, &Term)> {
        dest_binop(t, CONJ)
    }

    pub fn dest_disj(t: &Term) -> Option<(&Term, &Term)> {
        dest_binop(t, DISJ)
    }

    pub fn dest_iff(t: &Term) -> Option<(&Term, &Term)> {
        dest_binop(t, IFF)
    }

    pub fn dest_mem(t: &Term) -> Option<(&Term, &Term)> {
        dest_binop(t, MEM)
    }

    pub fn dest_not(t: &Term) -> Option<&Term> {
        if let Term::App(f, a) = t {
            if let Term::Const(n, _) = f.as_ref() {
                if n.as_ref() == NOT {
                    return Some(a.as_ref());
                }
            }
        }
        None
    }

    fn dest_quant<'a>(t: &'a Term, name: &str) -> Option<&'a Term> {
        if let Term::App(f, a) = t {
            if let Term::Const(n, _) = f.as_ref() {
                if n.as_ref() == name {
                    return Some(a.as_ref());
                }
            }
        }
        None
    }

    /// Returns the abstraction under a universal quantifier.
    pub fn dest_all(t: &Term) -> Option<&Term> {
        dest_quant(t, ALL)
    }

    pub fn dest_ex(t: &Term) -> Option<&Term> {
        dest_quant(t, EX)
    }

    pub fn is_false(t: &Term) -> bool {
        matches!(t, Term::Const(n, _) if n.as_ref() == FALSE)
    }

    pub fn is_true(t: &Term) -> bool {
        matches!(t, Term::Const(n, _) if n.as_ref() == TRUE)
    }

    /// Strips any number of leading negations, returning (polarity, core).
    pub fn strip_not(t: &Term) -> (bool, &Term) {
        let mut pos = true;
        let mut cur = t;
        while let Some(inner) = dest_not(cur) {
            pos = !pos;
            cur = inner;
        }
        (pos, cur)
    }
}
