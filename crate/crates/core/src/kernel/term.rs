//! Term language of the trusted core.
//!
//! Terms are simply typed over two base sorts: `i` for sets and `o` for
//! propositions. Bound variables use de Bruijn indices; the name stored in an
//! abstraction is only a printing hint and is ignored by equality, hashing
//! and ordering, so structural equality is alpha-equivalence.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use super::KernelError;

/// A simple type: `i`, `o`, or a function type between simple types.
#[derive(Clone, PartialEq, Eq, Hash)]
pub enum SimpleType {
    /// The sort of sets (the object universe).
    Set,
    /// The sort of propositions.
    Prop,
    Arrow(Arc<SimpleType>, Arc<SimpleType>),
}

impl SimpleType {
    pub fn arrow(dom: SimpleType, cod: SimpleType) -> SimpleType {
        SimpleType::Arrow(Arc::new(dom), Arc::new(cod))
    }

    /// Builds `t1 => t2 => ... => tn => cod`.
    pub fn arrows(doms: &[SimpleType], cod: SimpleType) -> SimpleType {
        doms.iter()
            .rev()
            .fold(cod, |acc, d| SimpleType::arrow(d.clone(), acc))
    }

    pub fn is_arrow(&self) -> bool {
        matches!(self, SimpleType::Arrow(_, _))
    }

    /// Splits an arrow chain into argument types and final codomain.
    pub fn flatten(&self) -> (Vec<&SimpleType>, &SimpleType) {
        let mut args = Vec::new();
        let mut cur = self;
        while let SimpleType::Arrow(a, b) = cur {
            args.push(a.as_ref());
            cur = b.as_ref();
        }
        (args, cur)
    }
}

impl fmt::Debug for SimpleType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self)
    }
}

impl fmt::Display for SimpleType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimpleType::Set => write!(f, "i"),
            SimpleType::Prop => write!(f, "o"),
            SimpleType::Arrow(a, b) => {
                if a.is_arrow() {
                    write!(f, "({}) => {}", a, b)
                } else {
                    write!(f, "{} => {}", a, b)
                }
            }
        }
    }
}

/// Interned name type used throughout the kernel.
pub type Name = Arc<str>;

/// A term of the logic.
#[derive(Clone)]
pub enum Term {
    /// Declared constant with its declared type.
    Const(Name, SimpleType),
    /// Free variable (acts as an opaque local constant during a proof).
    Free(Name, SimpleType),
    /// Schematic variable, instantiable by `instantiate`.
    Schematic(Name, SimpleType),
    /// de Bruijn index referring to an enclosing abstraction.
    Bound(u32),
    /// Abstraction; the name is a printing hint only.
    Abs(Name, SimpleType, Arc<Term>),
    App(Arc<Term>, Arc<Term>),
}

impl Term {
    pub fn cnst(name: &str, ty: SimpleType) -> Term {
        Term::Const(Arc::from(name), ty)
    }

    pub fn free(name: &str, ty: SimpleType) -> Term {
        Term::Free(Arc::from(name), ty)
    }

    pub fn schematic(name: &str, ty: SimpleType) -> Term {
        Term::Schematic(Arc::from(name), ty)
    }

    pub fn abs(hint: &str, ty: SimpleType, body: Term) -> Term {
        Term::Abs(Arc::from(hint), ty, Arc::new(body))
    }

    pub fn app(fun: Term, arg: Term) -> Term {
        Term::App(Arc::new(fun), Arc::new(arg))
    }

    /// Applies `head` to each argument in order.
    pub fn apps(head: Term, args: impl IntoIterator<Item = Term>) -> Term {
        args.into_iter().fold(head, Term::app)
    }

    /// Decomposes an application spine into the head and argument list.
    pub fn spine(&self) -> (&Term, Vec<&Term>) {
        let mut args = Vec::new();
        let mut cur = self;
        while let Term::App(f, a) = cur {
            args.push(a.as_ref());
            cur = f.as_ref();
        }
        args.reverse();
        (cur, args)
    }

    /// Name of the head constant, if the spine head is a constant.
    pub fn head_const(&self) -> Option<&Name> {
        match self.spine().0 {
            Term::Const(n, _) => Some(n),
            _ => None,
        }
    }

    pub fn size(&self) -> usize {
        match self {
            Term::Const(..) | Term::Free(..) | Term::Schematic(..) | Term::Bound(_) => 1,
            Term::Abs(_, _, b) => 1 + b.size(),
            Term::App(f, a) => 1 + f.size() + a.size(),
        }
    }

    /// True if the term contains no schematic variable.
    pub fn is_ground(&self) -> bool {
        match self {
            Term::Schematic(..) => false,
            Term::Const(..) | Term::Free(..) | Term::Bound(_) => true,
            Term::Abs(_, _, b) => b.is_ground(),
            Term::App(f, a) => f.is_ground() && a.is_ground(),
        }
    }

    /// True if no de Bruijn index escapes the term.
    pub fn is_closed(&self) -> bool {
        self.closed_above(0)
    }

    /// True if no de Bruijn index at or above `depth` escapes.
    pub fn is_closed_above(&self, depth: u32) -> bool {
        self.closed_above(depth)
    }

    fn closed_above(&self, depth: u32) -> bool {
        match self {
            Term::Bound(k) => *k < depth,
            Term::Abs(_, _, b) => b.closed_above(depth + 1),
            Term::App(f, a) => f.closed_above(depth) && a.closed_above(depth),
            _ => true,
        }
    }

    /// Collects the names of free variables.
    pub fn free_vars(&self, out: &mut Vec<Name>) {
        match self {
            Term::Free(n, _) => {
                if !out.iter().any(|m| m == n) {
                    out.push(n.clone());
                }
            }
            Term::Abs(_, _, b) => b.free_vars(out),
            Term::App(f, a) => {
                f.free_vars(out);
                a.free_vars(out);
            }
            _ => {}
        }
    }

    pub fn contains_free(&self, name: &str) -> bool {
        match self {
            Term::Free(n, _) => n.as_ref() == name,
            Term::Abs(_, _, b) => b.contains_free(name),
            Term::App(f, a) => f.contains_free(name) || a.contains_free(name),
            _ => false,
        }
    }

    pub fn contains_schematic(&self, name: &str) -> bool {
        match self {
            Term::Schematic(n, _) => n.as_ref() == name,
            Term::Abs(_, _, b) => b.contains_schematic(name),
            Term::App(f, a) => f.contains_schematic(name) || a.contains_schematic(name),
            _ => false,
        }
    }

    pub fn schematics(&self, out: &mut Vec<(Name, SimpleType)>) {
        match self {
            Term::Schematic(n, ty) => {
                if !out.iter().any(|(m, _)| m == n) {
                    out.push((n.clone(), ty.clone()));
                }
            }
            Term::Abs(_, _, b) => b.schematics(out),
            Term::App(f, a) => {
                f.schematics(out);
                a.schematics(out);
            }
            _ => {}
        }
    }

    /// Shifts loose de Bruijn indices >= `cutoff` by `amount`.
    fn shift(&self, cutoff: u32, amount: i64) -> Term {
        match self {
            Term::Bound(k) if *k >= cutoff => Term::Bound((*k as i64 + amount) as u32),
            Term::Bound(_) | Term::Const(..) | Term::Free(..) | Term::Schematic(..) => {
                self.clone()
            }
            Term::Abs(h, ty, b) => {
                Term::Abs(h.clone(), ty.clone(), Arc::new(b.shift(cutoff + 1, amount)))
            }
            Term::App(f, a) => Term::App(
                Arc::new(f.shift(cutoff, amount)),
                Arc::new(a.shift(cutoff, amount)),
            ),
        }
    }

    /// Substitutes `value` for `Bound(depth)` and unbinds indices above it.
    fn subst_bound(&self, depth: u32, value: &Term) -> Term {
        match self {
            Term::Bound(k) => {
                if *k == depth {
                    value.shift(0, depth as i64)
                } else if *k > depth {
                    Term::Bound(k - 1)
                } else {
                    self.clone()
                }
            }
            Term::Const(..) | Term::Free(..) | Term::Schematic(..) => self.clone(),
            Term::Abs(h, ty, b) => {
                Term::Abs(h.clone(), ty.clone(), Arc::new(b.subst_bound(depth + 1, value)))
            }
            Term::App(f, a) => Term::App(
                Arc::new(f.subst_bound(depth, value)),
                Arc::new(a.subst_bound(depth, value)),
            ),
        }
    }

    /// Instantiates the body of an abstraction with `value`.
    pub fn open(&self, value: &Term) -> Term {
        self.subst_bound(0, value)
    }

    /// Replaces every occurrence of `Free(name)` by `Bound` at the proper
    /// depth, producing the body of a new abstraction.
    pub fn abstract_free(&self, name: &str) -> Term {
        self.abstract_at(name, 0)
    }

    fn abstract_at(&self, name: &str, depth: u32) -> Term {
        match self {
            Term::Free(n, _) if n.as_ref() == name => Term::Bound(depth),
            Term::Bound(k) if *k >= depth => Term::Bound(k + 1),
            Term::Const(..) | Term::Free(..) | Term::Schematic(..) | Term::Bound(_) => {
                self.clone()
            }
            Term::Abs(h, ty, b) => {
                Term::Abs(h.clone(), ty.clone(), Arc::new(b.abstract_at(name, depth + 1)))
            }
            Term::App(f, a) => Term::App(
                Arc::new(f.abstract_at(name, depth)),
                Arc::new(a.abstract_at(name, depth)),
            ),
        }
    }

    /// Replaces every occurrence of `Free(name)` by `value` (which must be
    /// closed).
    pub fn subst_free(&self, name: &str, value: &Term) -> Term {
        match self {
            Term::Free(n, _) if n.as_ref() == name => value.clone(),
            Term::Const(..) | Term::Free(..) | Term::Schematic(..) | Term::Bound(_) => {
                self.clone()
            }
            Term::Abs(h, ty, b) => {
                Term::Abs(h.clone(), ty.clone(), Arc::new(b.subst_free(name, value)))
            }
            Term::App(f, a) => Term::App(
                Arc::new(f.subst_free(name, value)),
                Arc::new(a.subst_free(name, value)),
            ),
        }
    }

    /// Replaces every occurrence of a schematic by its assigned value. Values
    /// must be closed; no index adjustment is performed.
    pub fn subst_schematics(&self, subst: &[(Name, Term)]) -> Term {
        match self {
            Term::Schematic(n, _) => {
                for (m, v) in subst {
                    if m == n {
                        return v.clone();
                    }
                }
                self.clone()
            }
            Term::Const(..) | Term::Free(..) | Term::Bound(_) => self.clone(),
            Term::Abs(h, ty, b) => Term::Abs(
                h.clone(),
                ty.clone(),
                Arc::new(b.subst_schematics(subst)),
            ),
            Term::App(f, a) => Term::App(
                Arc::new(f.subst_schematics(subst)),
                Arc::new(a.subst_schematics(subst)),
            ),
        }
    }

    /// Returns the subterm at `path` (each element selects the function (0)
    /// or argument (1) of an application, or the body (0) of an abstraction).
    pub fn subterm_at(&self, path: &[u8]) -> Option<&Term> {
        let mut cur = self;
        for step in path {
            cur = match (cur, step) {
                (Term::App(f, _), 0) => f.as_ref(),
                (Term::App(_, a), 1) => a.as_ref(),
                (Term::Abs(_, _, b), 0) => b.as_ref(),
                _ => return None,
            };
        }
        Some(cur)
    }

    /// Replaces the subterm at `path` with `value`.
    pub fn replace_at(&self, path: &[u8], value: &Term) -> Option<Term> {
        if path.is_empty() {
            return Some(value.clone());
        }
        match (self, path[0]) {
            (Term::App(f, a), 0) => Some(Term::App(
                Arc::new(f.replace_at(&path[1..], value)?),
                a.clone(),
            )),
            (Term::App(f, a), 1) => Some(Term::App(
                f.clone(),
                Arc::new(a.replace_at(&path[1..], value)?),
            )),
            (Term::Abs(h, ty, b), 0) => Some(Term::Abs(
                h.clone(),
                ty.clone(),
                Arc::new(b.replace_at(&path[1..], value)?),
            )),
            _ => None,
        }
    }

    /// Collects paths of all occurrences of `target` (closed subterms only).
    pub fn find_occurrences(&self, target: &Term) -> Vec<Vec<u8>> {
        let mut out = Vec::new();
        let mut path = Vec::new();
        self.find_occ(target, &mut path, &mut out);
        out
    }

    fn find_occ(&self, target: &Term, path: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
        if self == target && self.is_closed() {
            out.push(path.clone());
            return;
        }
        match self {
            Term::App(f, a) => {
                path.push(0);
                f.find_occ(target, path, out);
                path.pop();
                path.push(1);
                a.find_occ(target, path, out);
                path.pop();
            }
            Term::Abs(_, _, b) => {
                path.push(0);
                b.find_occ(target, path, out);
                path.pop();
            }
            _ => {}
        }
    }

    /// Beta-normalizes the term. Simply typed terms always normalize.
    pub fn beta_normalize(&self) -> Term {
        match self {
            Term::Const(..) | Term::Free(..) | Term::Schematic(..) | Term::Bound(_) => {
                self.clone()
            }
            Term::Abs(h, ty, b) => Term::Abs(h.clone(), ty.clone(), Arc::new(b.beta_normalize())),
            Term::App(f, a) => {
                let f = f.beta_normalize();
                let a = a.beta_normalize();
                if let Term::Abs(_, _, body) = &f {
                    body.open(&a).beta_normalize()
                } else {
                    Term::App(Arc::new(f), Arc::new(a))
                }
            }
        }
    }

    /// Infers the type of the term, checking well-formedness along the way.
    pub fn typecheck(&self) -> Result<SimpleType, KernelError> {
        self.typecheck_in(&mut Vec::new())
    }

    fn typecheck_in(&self, bound: &mut Vec<SimpleType>) -> Result<SimpleType, KernelError> {
        match self {
            Term::Const(_, ty) | Term::Free(_, ty) | Term::Schematic(_, ty) => Ok(ty.clone()),
            Term::Bound(k) => {
                let idx = bound.len().checked_sub(1 + *k as usize);
                idx.map(|i| bound[i].clone())
                    .ok_or(KernelError::UnboundIndex(*k))
            }
            Term::Abs(_, ty, b) => {
                bound.push(ty.clone());
                let body = b.typecheck_in(bound)?;
                bound.pop();
                Ok(SimpleType::arrow(ty.clone(), body))
            }
            Term::App(f, a) => {
                let fty = f.typecheck_in(bound)?;
                let aty = a.typecheck_in(bound)?;
                match fty {
                    SimpleType::Arrow(dom, cod) if *dom == aty => Ok((*cod).clone()),
                    _ => Err(KernelError::TypeMismatch {
                        fun_ty: fty.to_string(),
                        arg_ty: aty.to_string(),
                    }),
                }
            }
        }
    }
}

impl PartialEq for Term {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Term::Const(a, s), Term::Const(b, t)) => a == b && s == t,
            (Term::Free(a, s), Term::Free(b, t)) => a == b && s == t,
            (Term::Schematic(a, s), Term::Schematic(b, t)) => a == b && s == t,
            (Term::Bound(a), Term::Bound(b)) => a == b,
            // Hint names are ignored: equality is alpha-equivalence.
            (Term::Abs(_, s, a), Term::Abs(_, t, b)) => s == t && a == b,
            (Term::App(f, a), Term::App(g, b)) => f == g && a == b,
            _ => false,
        }
    }
}

impl Eq for Term {}

impl Hash for Term {
    fn hash<H: Hasher>(&self, state: &mut H) {
        match self {
            Term::Const(n, ty) => {
                0u8.hash(state);
                n.hash(state);
                ty.hash(state);
            }
            Term::Free(n, ty) => {
                1u8.hash(state);
                n.hash(state);
                ty.hash(state);
            }
            Term::Schematic(n, ty) => {
                2u8.hash(state);
                n.hash(state);
                ty.hash(state);
            }
            Term::Bound(k) => {
                3u8.hash(state);
                k.hash(state);
            }
            Term::Abs(_, ty, b) => {
                4u8.hash(state);
                ty.hash(state);
                b.hash(state);
            }
            Term::App(f, a) => {
                5u8.hash(state);
                f.hash(state);
                a.hash(state);
            }
        }
    }
}

impl PartialOrd for Term {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Term {
    fn cmp(&self, other: &Self) -> Ordering {
        fn rank(t: &Term) -> u8 {
            match t {
                Term::Const(..) => 0,
                Term::Free(..) => 1,
                Term::Schematic(..) => 2,
                Term::Bound(_) => 3,
                Term::Abs(..) => 4,
                Term::App(..) => 5,
            }
        }
        fn ty_cmp(a: &SimpleType, b: &SimpleType) -> Ordering {
            match (a, b) {
                (SimpleType::Set, SimpleType::Set) | (SimpleType::Prop, SimpleType::Prop) => {
                    Ordering::Equal
                }
                (SimpleType::Set, _) => Ordering::Less,
                (_, SimpleType::Set) => Ordering::Greater,
                (SimpleType::Prop, _) => Ordering::Less,
                (_, SimpleType::Prop) => Ordering::Greater,
                (SimpleType::Arrow(a1, a2), SimpleType::Arrow(b1, b2)) => {
                    ty_cmp(a1, b1).then_with(|| ty_cmp(a2, b2))
                }
            }
        }
        rank(self).cmp(&rank(other)).then_with(|| match (self, other) {
            (Term::Const(a, s), Term::Const(b, t))
            | (Term::Free(a, s), Term::Free(b, t))
            | (Term::Schematic(a, s), Term::Schematic(b, t)) => {
                a.cmp(b).then_with(|| ty_cmp(s, t))
            }
            (Term::Bound(a), Term::Bound(b)) => a.cmp(b),
            (Term::Abs(_, s, a), Term::Abs(_, t, b)) => {
                ty_cmp(s, t).then_with(|| a.cmp(b))
            }
            (Term::App(f, a), Term::App(g, b)) => f.cmp(g).then_with(|| a.cmp(b)),
            _ => Ordering::Equal,
        })
    }
}

impl fmt::Debug for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self)
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_at(f, &mut Vec::new())
    }
}

impl Term {
    fn fmt_at(&self, f: &mut fmt::Formatter<'_>, bound: &mut Vec<String>) -> fmt::Result {
        match self {
            Term::Const(n, _) => write!(f, "{}", n),
            Term::Free(n, _) => write!(f, "{}", n),
            Term::Schematic(n, _) => write!(f, "?{}", n),
            Term::Bound(k) => {
                let idx = bound.len().checked_sub(1 + *k as usize);
                match idx {
                    Some(i) => write!(f, "{}", bound[i]),
                    None => write!(f, "B{}", k),
                }
            }
            Term::Abs(h, _, b) => {
                // Make the hint unambiguous against enclosing binders.
                let mut name = h.to_string();
                if name.is_empty() {
                    name = "x".to_string();
                }
                while bound.iter().any(|n| *n == name) {
                    name.push('\'');
                }
                write!(f, "(%{}. ", name)?;
                bound.push(name);
                b.fmt_at(f, bound)?;
                bound.pop();
                write!(f, ")")
            }
            Term::App(_, _) => {
                let (head, args) = self.spine();
                match head {
                    Term::Abs(..) => {
                        head.fmt_at(f, bound)?;
                    }
                    _ => head.fmt_at(f, bound)?,
                }
                write!(f, "(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    a.fmt_at(f, bound)?;
                }
                write!(f, ")")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::consts;

    fn ty_i() -> SimpleType {
        SimpleType::Set
    }

    #[test]
    fn typecheck_mem_application() {
        let mem = consts::mem();
        let t = Term::apps(mem, [Term::free("x", ty_i()), Term::free("y", ty_i())]);
        assert_eq!(t.typecheck().unwrap(), SimpleType::Prop);
    }

    #[test]
    fn typecheck_identity_abs() {
        let t = Term::abs("x", ty_i(), Term::Bound(0));
        assert_eq!(t.typecheck().unwrap(), SimpleType::arrow(ty_i(), ty_i()));
    }

    #[test]
    fn typecheck_set_applied_to_set_fails() {
        let t = Term::app(Term::free("x", ty_i()), Term::free("y", ty_i()));
        assert!(matches!(t.typecheck(), Err(KernelError::TypeMismatch { .. })));
    }

    #[test]
    fn beta_single_redex() {
        let f = Term::free("f", SimpleType::arrow(ty_i(), ty_i()));
        let a = Term::free("a", ty_i());
        let t = Term::app(
            Term::abs("x", ty_i(), Term::app(f.clone(), Term::Bound(0))),
            a.clone(),
        );
        assert_eq!(t.beta_normalize(), Term::app(f, a));
    }

    #[test]
    fn beta_no_redex_is_identity() {
        let t = Term::apps(
            consts::mem(),
            [Term::free("x", ty_i()), Term::free("y", ty_i())],
        );
        assert_eq!(t.beta_normalize(), t);
    }

    #[test]
    fn beta_k_combinator() {
        let a = Term::free("a", ty_i());
        let b = Term::free("b", ty_i());
        let k = Term::abs("x", ty_i(), Term::abs("y", ty_i(), Term::Bound(1)));
        let t = Term::app(Term::app(k, a.clone()), b);
        assert_eq!(t.beta_normalize(), a);
    }

    #[test]
    fn alpha_equality_ignores_hints() {
        let t1 = Term::abs("x", ty_i(), Term::Bound(0));
        let t2 = Term::abs("y", ty_i(), Term::Bound(0));
        assert_eq!(t1, t2);
    }

    #[test]
    fn unbound_index_rejected() {
        let t = Term::Bound(0);
        assert!(matches!(t.typecheck(), Err(KernelError::UnboundIndex(0))));
    }

    #[test]
    fn replace_at_roundtrip() {
        let a = Term::free("a", ty_i());
        let b = Term::free("b", ty_i());
        let t = Term::apps(consts::mem(), [a.clone(), b.clone()]);
        let occ = t.find_occurrences(&a);
        assert_eq!(occ.len(), 1);
        let t2 = t.replace_at(&occ[0], &b).unwrap();
        assert_eq!(t2, Term::apps(consts::mem(), [b.clone(), b]));
    }
}
