//! Signature: declared constants, axioms, and definitional equations.

use indexmap::IndexMap;
use std::sync::Arc;

use super::consts;
use super::term::{Name, SimpleType, Term};
use super::theorem::{axiom_thm, Theorem};
use super::KernelError;

/// What a declared name stands for, in declaration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeclKind {
    Constant,
    Axiom,
    Definition,
}

/// The global signature of a session. Extended only between proofs; frozen
/// (shared immutably) while searches run.
#[derive(Clone)]
pub struct Signature {
    constants: IndexMap<Name, SimpleType>,
    axioms: IndexMap<Name, Theorem>,
    definitions: IndexMap<Name, Theorem>,
    order: Vec<(DeclKind, Name)>,
}

impl Default for Signature {
    fn default() -> Self {
        Self::new()
    }
}

impl Signature {
    /// A signature containing the built-in logical constants.
    pub fn new() -> Signature {
        let mut constants = IndexMap::new();
        let mut order = Vec::new();
        for (name, ty) in consts::base_decls() {
            let n: Name = Arc::from(name);
            order.push((DeclKind::Constant, n.clone()));
            constants.insert(n, ty);
        }
        Signature {
            constants,
            axioms: IndexMap::new(),
            definitions: IndexMap::new(),
            order,
        }
    }

    pub fn constant_type(&self, name: &str) -> Option<&SimpleType> {
        self.constants.get(name)
    }

    pub fn constant(&self, name: &str) -> Option<Term> {
        self.constants
            .get(name)
            .map(|ty| Term::cnst(name, ty.clone()))
    }

    pub fn axiom(&self, name: &str) -> Option<&Theorem> {
        self.axioms.get(name)
    }

    pub fn definition(&self, name: &str) -> Option<&Theorem> {
        self.definitions.get(name)
    }

    pub fn axioms(&self) -> impl Iterator<Item = (&Name, &Theorem)> {
        self.axioms.iter()
    }

    pub fn declaration_order(&self) -> &[(DeclKind, Name)] {
        &self.order
    }

    /// Checks that every constant in `t` is declared at its declared type.
    pub fn check_constants(&self, t: &Term) -> Result<(), KernelError> {
        match t {
            Term::Const(n, ty) => match self.constants.get(n) {
                Some(decl) if decl == ty => Ok(()),
                Some(decl) => Err(KernelError::TypeMismatch {
                    fun_ty: decl.to_string(),
                    arg_ty: ty.to_string(),
                }),
                None => Err(KernelError::UndeclaredConstant(n.to_string())),
            },
            Term::Abs(_, _, b) => self.check_constants(b),
            Term::App(f, a) => {
                self.check_constants(f)?;
                self.check_constants(a)
            }
            _ => Ok(()),
        }
    }

    /// Infers the type of `t` after verifying all constants are declared.
    pub fn typecheck(&self, t: &Term) -> Result<SimpleType, KernelError> {
        self.check_constants(t)?;
        t.typecheck()
    }

    pub fn declare_constant(
        &mut self,
        name: &str,
        ty: SimpleType,
    ) -> Result<Term, KernelError> {
        if let Some(existing) = self.constants.get(name) {
            if *existing != ty {
                return Err(KernelError::DuplicateName(name.to_string()));
            }
            return Ok(Term::cnst(name, ty));
        }
        let n: Name = Arc::from(name);
        self.order.push((DeclKind::Constant, n.clone()));
        self.constants.insert(n, ty.clone());
        Ok(Term::cnst(name, ty))
    }

    /// Registers an axiom stated in rule form (`hyps ==> concl`), with all
    /// free variables generalized to schematics.
    pub fn add_axiom(
        &mut self,
        name: &str,
        hyps: Vec<Term>,
        concl: Term,
    ) -> Result<Theorem, KernelError> {
        if self.axioms.contains_key(name) || self.definitions.contains_key(name) {
            return Err(KernelError::DuplicateName(name.to_string()));
        }
        for p in hyps.iter().chain(std::iter::once(&concl)) {
            if self.typecheck(p)? != SimpleType::Prop {
                return Err(KernelError::IllFormedDefinition(format!(
                    "axiom {} statement is not a proposition",
                    name
                )));
            }
            if !p.is_closed() {
                return Err(KernelError::IllFormedDefinition(format!(
                    "axiom {} statement is not closed",
                    name
                )));
            }
        }
        let mut frees = Vec::new();
        concl.free_vars(&mut frees);
        for h in &hyps {
            h.free_vars(&mut frees);
        }
        let hyps: Vec<Term> = hyps
            .iter()
            .map(|h| schematize(h, &frees).beta_normalize())
            .collect();
        let concl = schematize(&concl, &frees).beta_normalize();
        let n: Name = Arc::from(name);
        let th = axiom_thm(&n, hyps, concl, false);
        self.order.push((DeclKind::Axiom, n.clone()));
        self.axioms.insert(n, th.clone());
        Ok(th)
    }

    /// Declares a constant together with its defining equation
    /// `c(x1,...,xn) = rhs` (or `<->` for a propositional constant). The
    /// right-hand side may mention only previously declared constants and the
    /// argument variables.
    pub fn add_definition(
        &mut self,
        name: &str,
        args: &[(Name, SimpleType)],
        rhs: Term,
    ) -> Result<Theorem, KernelError> {
        if self.definitions.contains_key(name)
            || self.axioms.contains_key(name)
            || self.constants.contains_key(name)
        {
            return Err(KernelError::DuplicateName(name.to_string()));
        }
        // The rhs may use only earlier constants and the argument variables.
        self.check_constants(&rhs)?;
        let mut frees = Vec::new();
        rhs.free_vars(&mut frees);
        for f in &frees {
            if !args.iter().any(|(n, _)| n == f) {
                return Err(KernelError::IllFormedDefinition(format!(
                    "definition {} mentions undeclared variable {}",
                    name, f
                )));
            }
        }
        if !rhs.is_closed() {
            return Err(KernelError::IllFormedDefinition(format!(
                "definition {} right-hand side is not closed",
                name
            )));
        }
        let rhs_ty = rhs.typecheck()?;
        let arg_tys: Vec<SimpleType> = args.iter().map(|(_, ty)| ty.clone()).collect();
        let const_ty = SimpleType::arrows(&arg_tys, rhs_ty.clone());
        let c = self.declare_constant(name, const_ty)?;
        let lhs = Term::apps(
            c,
            args.iter()
                .map(|(n, ty)| Term::Schematic(n.clone(), ty.clone())),
        );
        let rhs = schematize(&rhs, &args.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>())
            .beta_normalize();
        let equation = match rhs_ty {
            SimpleType::Prop => consts::mk_iff(lhs, rhs),
            SimpleType::Set => consts::mk_eq(lhs, rhs),
            ty => {
                return Err(KernelError::IllFormedDefinition(format!(
                    "definition {} must produce sort i or o, got {}",
                    name, ty
                )))
            }
        };
        let n: Name = Arc::from(name);
        let th = axiom_thm(&n, Vec::new(), equation, true);
        self.order.push((DeclKind::Definition, n.clone()));
        self.definitions.insert(n, th.clone());
        Ok(th)
    }
}

fn schematize(t: &Term, names: &[Name]) -> Term {
    match t {
        Term::Free(n, ty) if names.iter().any(|m| m == n) => {
            Term::Schematic(n.clone(), ty.clone())
        }
        Term::Abs(h, ty, b) => Term::Abs(h.clone(), ty.clone(), Arc::new(schematize(b, names))),
        Term::App(f, a) => Term::App(
            Arc::new(schematize(f, names)),
            Arc::new(schematize(a, names)),
        ),
        _ => t.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::consts::*;

    #[test]
    fn definition_registers_equation() {
        let mut sig = Signature::new();
        sig.declare_constant(
            "fst",
            SimpleType::arrow(SimpleType::Set, SimpleType::Set),
        )
        .unwrap();
        let arg: Name = Arc::from("F");
        let rhs = Term::app(
            sig.constant("fst").unwrap(),
            Term::free("F", SimpleType::Set),
        );
        let th = sig
            .add_definition("source", &[(arg, SimpleType::Set)], rhs)
            .unwrap();
        let (lhs, _) = dest_eq(th.concl()).unwrap();
        assert_eq!(lhs.head_const().unwrap().as_ref(), "source");
    }

    #[test]
    fn duplicate_definition_rejected() {
        let mut sig = Signature::new();
        let arg: Name = Arc::from("x");
        let x = Term::free("x", SimpleType::Set);
        sig.add_definition("idset", &[(arg.clone(), SimpleType::Set)], x.clone())
            .unwrap();
        let err = sig.add_definition("idset", &[(arg, SimpleType::Set)], x);
        assert!(matches!(err, Err(KernelError::DuplicateName(_))));
    }

    #[test]
    fn axiom_generalizes_frees() {
        let mut sig = Signature::new();
        let x = Term::free("x", SimpleType::Set);
        let th = sig
            .add_axiom("triv", vec![], mk_eq(x.clone(), x))
            .unwrap();
        let mut schems = Vec::new();
        th.concl().schematics(&mut schems);
        assert_eq!(schems.len(), 1);
    }
}
