//! Quantified first-order formulas over integer and boolean variables.
//!
//! Variables carry an optional copy index (the trace they belong to in a
//! self-composition) and a prime flag (next-state copy). Formulas are plain
//! trees; the only normalisation performed anywhere is constant folding.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Sort {
    Int,
    Bool,
}

impl fmt::Display for Sort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sort::Int => f.write_str("Int"),
            Sort::Bool => f.write_str("Bool"),
        }
    }
}

/// A program variable, possibly indexed by a copy (1-based) and primed.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var {
    pub base: Arc<str>,
    pub copy: Option<u32>,
    pub primed: bool,
    pub sort: Sort,
}

impl Var {
    pub fn new(base: &str, sort: Sort) -> Self {
        Var { base: Arc::from(base), copy: None, primed: false, sort }
    }

    pub fn int(base: &str) -> Self {
        Var::new(base, Sort::Int)
    }

    pub fn boolean(base: &str) -> Self {
        Var::new(base, Sort::Bool)
    }

    pub fn indexed(&self, copy: u32) -> Self {
        Var { copy: Some(copy), ..self.clone() }
    }

    pub fn primed(&self) -> Self {
        Var { primed: true, ..self.clone() }
    }

    pub fn unprimed(&self) -> Self {
        Var { primed: false, ..self.clone() }
    }

    /// The variable with copy index and prime removed.
    pub fn plain(&self) -> Self {
        Var { copy: None, primed: false, ..self.clone() }
    }

    /// Name used in SMT-LIB scripts and in solver models.
    pub fn smt_name(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.base)?;
        if let Some(c) = self.copy {
            write!(f, "@{c}")?;
        }
        if self.primed {
            f.write_str("'")?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CmpOp {
    Eq,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    fn apply(self, a: i64, b: i64) -> bool {
        match self {
            CmpOp::Eq => a == b,
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Gt => a > b,
            CmpOp::Ge => a >= b,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Formula {
    Bool(bool),
    Int(i64),
    Var(Var),
    Not(Box<Formula>),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Iff(Box<Formula>, Box<Formula>),
    Cmp(CmpOp, Box<Formula>, Box<Formula>),
    Add(Vec<Formula>),
    Sub(Box<Formula>, Box<Formula>),
    Neg(Box<Formula>),
    Mul(Box<Formula>, Box<Formula>),
    Ite(Box<Formula>, Box<Formula>, Box<Formula>),
    Forall(Vec<Var>, Box<Formula>),
    Exists(Vec<Var>, Box<Formula>),
}

pub fn var(v: &Var) -> Formula {
    Formula::Var(v.clone())
}

pub fn int(n: i64) -> Formula {
    Formula::Int(n)
}

pub fn not(f: Formula) -> Formula {
    Formula::Not(Box::new(f))
}

pub fn and(fs: Vec<Formula>) -> Formula {
    Formula::And(fs)
}

pub fn or(fs: Vec<Formula>) -> Formula {
    Formula::Or(fs)
}

pub fn implies(a: Formula, b: Formula) -> Formula {
    Formula::Implies(Box::new(a), Box::new(b))
}

pub fn iff(a: Formula, b: Formula) -> Formula {
    Formula::Iff(Box::new(a), Box::new(b))
}

pub fn cmp(op: CmpOp, a: Formula, b: Formula) -> Formula {
    Formula::Cmp(op, Box::new(a), Box::new(b))
}

pub fn eq(a: Formula, b: Formula) -> Formula {
    cmp(CmpOp::Eq, a, b)
}

pub fn ite(c: Formula, t: Formula, e: Formula) -> Formula {
    Formula::Ite(Box::new(c), Box::new(t), Box::new(e))
}

/// Equality at the variable's sort: `=` for integers, `iff` for booleans.
pub fn same(v: &Var, w: &Var) -> Formula {
    match v.sort {
        Sort::Int => eq(var(v), var(w)),
        Sort::Bool => iff(var(v), var(w)),
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LogicError {
    #[error("variable {0} is already indexed")]
    AlreadyIndexed(String),
    #[error("variable {0} is already primed")]
    AlreadyPrimed(String),
    #[error("variable {0} must be indexed before priming")]
    NotIndexed(String),
    #[error("sort mismatch in {context}: expected {expected}, found {found}")]
    SortMismatch { context: String, expected: Sort, found: Sort },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("no value for variable {0}")]
    Unbound(String),
    #[error("integer overflow")]
    Overflow,
    #[error("cannot evaluate quantified formula")]
    Quantifier,
    #[error("ill-sorted term")]
    IllSorted,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Bool(bool),
    Int(i64),
}

impl Value {
    pub fn as_bool(self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(b),
            Value::Int(_) => None,
        }
    }

    pub fn as_int(self) -> Option<i64> {
        match self {
            Value::Int(n) => Some(n),
            Value::Bool(_) => None,
        }
    }

    pub fn sort(self) -> Sort {
        match self {
            Value::Bool(_) => Sort::Bool,
            Value::Int(_) => Sort::Int,
        }
    }

    pub fn to_formula(self) -> Formula {
        match self {
            Value::Bool(b) => Formula::Bool(b),
            Value::Int(n) => Formula::Int(n),
        }
    }

    /// The default inhabitant of a sort.
    pub fn default_of(sort: Sort) -> Value {
        match sort {
            Sort::Int => Value::Int(0),
            Sort::Bool => Value::Bool(false),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(n) => write!(f, "{n}"),
        }
    }
}

/// A variable assignment.
pub type Assignment = BTreeMap<Var, Value>;

impl Formula {
    pub fn is_true(&self) -> bool {
        matches!(self, Formula::Bool(true))
    }

    pub fn is_false(&self) -> bool {
        matches!(self, Formula::Bool(false))
    }

    /// Number of nodes in the tree.
    pub fn size(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_| n += 1);
        n
    }

    /// Pre-order traversal.
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a Formula)) {
        f(self);
        match self {
            Formula::Bool(_) | Formula::Int(_) | Formula::Var(_) => {}
            Formula::Not(a) | Formula::Neg(a) | Formula::Forall(_, a) | Formula::Exists(_, a) => a.visit(f),
            Formula::And(xs) | Formula::Or(xs) | Formula::Add(xs) => xs.iter().for_each(|x| x.visit(f)),
            Formula::Implies(a, b)
            | Formula::Iff(a, b)
            | Formula::Cmp(_, a, b)
            | Formula::Sub(a, b)
            | Formula::Mul(a, b) => {
                a.visit(f);
                b.visit(f);
            }
            Formula::Ite(c, t, e) => {
                c.visit(f);
                t.visit(f);
                e.visit(f);
            }
        }
    }

    /// Rebuilds the tree bottom-up, giving `f` the chance to replace each node
    /// after its children have been rebuilt.
    pub fn map(&self, f: &mut impl FnMut(Formula) -> Formula) -> Formula {
        let rebuilt = match self {
            Formula::Bool(_) | Formula::Int(_) | Formula::Var(_) => self.clone(),
            Formula::Not(a) => Formula::Not(Box::new(a.map(f))),
            Formula::Neg(a) => Formula::Neg(Box::new(a.map(f))),
            Formula::And(xs) => Formula::And(xs.iter().map(|x| x.map(f)).collect()),
            Formula::Or(xs) => Formula::Or(xs.iter().map(|x| x.map(f)).collect()),
            Formula::Add(xs) => Formula::Add(xs.iter().map(|x| x.map(f)).collect()),
            Formula::Implies(a, b) => Formula::Implies(Box::new(a.map(f)), Box::new(b.map(f))),
            Formula::Iff(a, b) => Formula::Iff(Box::new(a.map(f)), Box::new(b.map(f))),
            Formula::Cmp(op, a, b) => Formula::Cmp(*op, Box::new(a.map(f)), Box::new(b.map(f))),
            Formula::Sub(a, b) => Formula::Sub(Box::new(a.map(f)), Box::new(b.map(f))),
            Formula::Mul(a, b) => Formula::Mul(Box::new(a.map(f)), Box::new(b.map(f))),
            Formula::Ite(c, t, e) => Formula::Ite(Box::new(c.map(f)), Box::new(t.map(f)), Box::new(e.map(f))),
            Formula::Forall(vs, a) => Formula::Forall(vs.clone(), Box::new(a.map(f))),
            Formula::Exists(vs, a) => Formula::Exists(vs.clone(), Box::new(a.map(f))),
        };
        f(rebuilt)
    }

    /// Applies `f` to every variable occurrence, bound or free, including binders.
    pub fn rename_vars<E>(&self, f: &mut impl FnMut(&Var) -> Result<Var, E>) -> Result<Formula, E> {
        Ok(match self {
            Formula::Var(v) => Formula::Var(f(v)?),
            Formula::Bool(_) | Formula::Int(_) => self.clone(),
            Formula::Not(a) => Formula::Not(Box::new(a.rename_vars(f)?)),
            Formula::Neg(a) => Formula::Neg(Box::new(a.rename_vars(f)?)),
            Formula::And(xs) => Formula::And(xs.iter().map(|x| x.rename_vars(f)).collect::<Result<_, _>>()?),
            Formula::Or(xs) => Formula::Or(xs.iter().map(|x| x.rename_vars(f)).collect::<Result<_, _>>()?),
            Formula::Add(xs) => Formula::Add(xs.iter().map(|x| x.rename_vars(f)).collect::<Result<_, _>>()?),
            Formula::Implies(a, b) => Formula::Implies(Box::new(a.rename_vars(f)?), Box::new(b.rename_vars(f)?)),
            Formula::Iff(a, b) => Formula::Iff(Box::new(a.rename_vars(f)?), Box::new(b.rename_vars(f)?)),
            Formula::Cmp(op, a, b) => Formula::Cmp(*op, Box::new(a.rename_vars(f)?), Box::new(b.rename_vars(f)?)),
            Formula::Sub(a, b) => Formula::Sub(Box::new(a.rename_vars(f)?), Box::new(b.rename_vars(f)?)),
            Formula::Mul(a, b) => Formula::Mul(Box::new(a.rename_vars(f)?), Box::new(b.rename_vars(f)?)),
            Formula::Ite(c, t, e) => Formula::Ite(
                Box::new(c.rename_vars(f)?),
                Box::new(t.rename_vars(f)?),
                Box::new(e.rename_vars(f)?),
            ),
            Formula::Forall(vs, a) => Formula::Forall(
                vs.iter().map(&mut *f).collect::<Result<_, _>>()?,
                Box::new(a.rename_vars(f)?),
            ),
            Formula::Exists(vs, a) => Formula::Exists(
                vs.iter().map(&mut *f).collect::<Result<_, _>>()?,
                Box::new(a.rename_vars(f)?),
            ),
        })
    }

    pub fn free_vars(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.collect_free(&mut Vec::new(), &mut out);
        out
    }

    fn collect_free(&self, bound: &mut Vec<Var>, out: &mut BTreeSet<Var>) {
        match self {
            Formula::Var(v) => {
                if !bound.contains(v) {
                    out.insert(v.clone());
                }
            }
            Formula::Forall(vs, a) | Formula::Exists(vs, a) => {
                let mark = bound.len();
                bound.extend(vs.iter().cloned());
                a.collect_free(bound, out);
                bound.truncate(mark);
            }
            Formula::Bool(_) | Formula::Int(_) => {}
            Formula::Not(a) | Formula::Neg(a) => a.collect_free(bound, out),
            Formula::And(xs) | Formula::Or(xs) | Formula::Add(xs) => {
                xs.iter().for_each(|x| x.collect_free(bound, out))
            }
            Formula::Implies(a, b)
            | Formula::Iff(a, b)
            | Formula::Cmp(_, a, b)
            | Formula::Sub(a, b)
            | Formula::Mul(a, b) => {
                a.collect_free(bound, out);
                b.collect_free(bound, out);
            }
            Formula::Ite(c, t, e) => {
                c.collect_free(bound, out);
                t.collect_free(bound, out);
                e.collect_free(bound, out);
            }
        }
    }

    pub fn has_quantifier(&self) -> bool {
        let mut found = false;
        self.visit(&mut |f| found |= matches!(f, Formula::Forall(..) | Formula::Exists(..)));
        found
    }

    /// True when every product has a constant factor.
    pub fn is_linear(&self) -> bool {
        let mut ok = true;
        self.visit(&mut |f| {
            if let Formula::Mul(a, b) = f {
                ok &= a.is_constant_term() || b.is_constant_term();
            }
        });
        ok
    }

    fn is_constant_term(&self) -> bool {
        let mut ok = true;
        self.visit(&mut |f| ok &= !matches!(f, Formula::Var(_)));
        ok
    }

    /// Maximal subformulas that are not boolean connectives: comparisons and
    /// boolean variables. Returned in first-occurrence order without duplicates.
    pub fn atoms(&self) -> Vec<Formula> {
        let mut out = Vec::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms(&self, out: &mut Vec<Formula>) {
        match self {
            Formula::Not(a) => a.collect_atoms(out),
            Formula::And(xs) | Formula::Or(xs) => xs.iter().for_each(|x| x.collect_atoms(out)),
            Formula::Implies(a, b) | Formula::Iff(a, b) => {
                a.collect_atoms(out);
                b.collect_atoms(out);
            }
            Formula::Ite(c, t, e) if self.is_boolean_ite() => {
                c.collect_atoms(out);
                t.collect_atoms(out);
                e.collect_atoms(out);
            }
            Formula::Bool(_) => {}
            _ => {
                if !out.contains(self) {
                    out.push(self.clone());
                }
            }
        }
    }

    fn is_boolean_ite(&self) -> bool {
        match self {
            Formula::Ite(_, t, _) => matches!(
                **t,
                Formula::Bool(_)
                    | Formula::Not(_)
                    | Formula::And(_)
                    | Formula::Or(_)
                    | Formula::Implies(..)
                    | Formula::Iff(..)
                    | Formula::Cmp(..)
                    | Formula::Forall(..)
                    | Formula::Exists(..)
            ) || matches!(&**t, Formula::Var(v) if v.sort == Sort::Bool)
                || t.is_boolean_ite(),
            _ => false,
        }
    }

    /// Commutative operands sorted, giving a stable key for syntactically
    /// equivalent formulas.
    pub fn canonical(&self) -> Formula {
        self.map(&mut |f| match f {
            Formula::And(mut xs) => {
                xs.sort();
                Formula::And(xs)
            }
            Formula::Or(mut xs) => {
                xs.sort();
                Formula::Or(xs)
            }
            Formula::Add(mut xs) => {
                xs.sort();
                Formula::Add(xs)
            }
            Formula::Cmp(CmpOp::Eq, a, b) if b < a => Formula::Cmp(CmpOp::Eq, b, a),
            Formula::Iff(a, b) if b < a => Formula::Iff(b, a),
            Formula::Mul(a, b) if b < a => Formula::Mul(b, a),
            other => other,
        })
    }

    /// Constant folding. Never changes the meaning of the formula.
    pub fn simplify(&self) -> Formula {
        self.map(&mut fold)
    }

    /// Replaces free occurrences of variables by formulas, renaming binders
    /// that would capture a variable of a replacement.
    pub fn substitute(&self, map: &BTreeMap<Var, Formula>) -> Formula {
        if map.is_empty() {
            return self.clone();
        }
        let mut incoming = BTreeSet::new();
        for f in map.values() {
            incoming.extend(f.free_vars());
        }
        self.subst_rec(map, &incoming)
    }

    fn subst_rec(&self, map: &BTreeMap<Var, Formula>, incoming: &BTreeSet<Var>) -> Formula {
        match self {
            Formula::Var(v) => map.get(v).cloned().unwrap_or_else(|| self.clone()),
            Formula::Forall(vs, body) | Formula::Exists(vs, body) => {
                let mut inner = map.clone();
                for v in vs {
                    inner.remove(v);
                }
                let mut renaming = BTreeMap::new();
                let mut new_vs = Vec::with_capacity(vs.len());
                let body_free = body.free_vars();
                for v in vs {
                    if incoming.contains(v) {
                        let fresh = fresh_var(v, |c| incoming.contains(c) || body_free.contains(c) || vs.contains(c));
                        renaming.insert(v.clone(), Formula::Var(fresh.clone()));
                        new_vs.push(fresh);
                    } else {
                        new_vs.push(v.clone());
                    }
                }
                let body = if renaming.is_empty() { (**body).clone() } else { body.subst_rec(&renaming, &BTreeSet::new()) };
                let body = Box::new(body.subst_rec(&inner, incoming));
                match self {
                    Formula::Forall(..) => Formula::Forall(new_vs, body),
                    _ => Formula::Exists(new_vs, body),
                }
            }
            Formula::Bool(_) | Formula::Int(_) => self.clone(),
            Formula::Not(a) => Formula::Not(Box::new(a.subst_rec(map, incoming))),
            Formula::Neg(a) => Formula::Neg(Box::new(a.subst_rec(map, incoming))),
            Formula::And(xs) => Formula::And(xs.iter().map(|x| x.subst_rec(map, incoming)).collect()),
            Formula::Or(xs) => Formula::Or(xs.iter().map(|x| x.subst_rec(map, incoming)).collect()),
            Formula::Add(xs) => Formula::Add(xs.iter().map(|x| x.subst_rec(map, incoming)).collect()),
            Formula::Implies(a, b) => {
                Formula::Implies(Box::new(a.subst_rec(map, incoming)), Box::new(b.subst_rec(map, incoming)))
            }
            Formula::Iff(a, b) => Formula::Iff(Box::new(a.subst_rec(map, incoming)), Box::new(b.subst_rec(map, incoming))),
            Formula::Cmp(op, a, b) => {
                Formula::Cmp(*op, Box::new(a.subst_rec(map, incoming)), Box::new(b.subst_rec(map, incoming)))
            }
            Formula::Sub(a, b) => Formula::Sub(Box::new(a.subst_rec(map, incoming)), Box::new(b.subst_rec(map, incoming))),
            Formula::Mul(a, b) => Formula::Mul(Box::new(a.subst_rec(map, incoming)), Box::new(b.subst_rec(map, incoming))),
            Formula::Ite(c, t, e) => Formula::Ite(
                Box::new(c.subst_rec(map, incoming)),
                Box::new(t.subst_rec(map, incoming)),
                Box::new(e.subst_rec(map, incoming)),
            ),
        }
    }

    /// Evaluates under an assignment. Quantifiers are rejected.
    pub fn eval(&self, env: &impl Fn(&Var) -> Option<Value>) -> Result<Value, EvalError> {
        use Formula::*;
        let b = |f: &Formula| f.eval(env)?.as_bool().ok_or(EvalError::IllSorted);
        let n = |f: &Formula| f.eval(env)?.as_int().ok_or(EvalError::IllSorted);
        Ok(match self {
            Bool(x) => Value::Bool(*x),
            Int(x) => Value::Int(*x),
            Var(v) => env(v).ok_or_else(|| EvalError::Unbound(v.to_string()))?,
            Not(a) => Value::Bool(!b(a)?),
            And(xs) => {
                for x in xs {
                    if !b(x)? {
                        return Ok(Value::Bool(false));
                    }
                }
                Value::Bool(true)
            }
            Or(xs) => {
                for x in xs {
                    if b(x)? {
                        return Ok(Value::Bool(true));
                    }
                }
                Value::Bool(false)
            }
            Implies(x, y) => Value::Bool(!b(x)? || b(y)?),
            Iff(x, y) => Value::Bool(b(x)? == b(y)?),
            Cmp(op, x, y) => Value::Bool(op.apply(n(x)?, n(y)?)),
            Add(xs) => {
                let mut acc: i64 = 0;
                for x in xs {
                    acc = acc.checked_add(n(x)?).ok_or(EvalError::Overflow)?;
                }
                Value::Int(acc)
            }
            Sub(x, y) => Value::Int(n(x)?.checked_sub(n(y)?).ok_or(EvalError::Overflow)?),
            Neg(x) => Value::Int(n(x)?.checked_neg().ok_or(EvalError::Overflow)?),
            Mul(x, y) => Value::Int(n(x)?.checked_mul(n(y)?).ok_or(EvalError::Overflow)?),
            Ite(c, t, e) => {
                if b(c)? {
                    t.eval(env)?
                } else {
                    e.eval(env)?
                }
            }
            Forall(..) | Exists(..) => return Err(EvalError::Quantifier),
        })
    }

    pub fn eval_in(&self, assignment: &Assignment) -> Result<Value, EvalError> {
        self.eval(&|v| assignment.get(v).copied())
    }

    pub fn holds_in(&self, assignment: &Assignment) -> Result<bool, EvalError> {
        self.eval_in(assignment)?.as_bool().ok_or(EvalError::IllSorted)
    }

    /// Renders in SMT-LIB syntax: quoted symbols, negative literals as `(- n)`.
    pub fn to_smtlib(&self) -> String {
        let mut s = String::new();
        write_sexpr(self, &mut s, true);
        s
    }
}

fn fresh_var(v: &Var, taken: impl Fn(&Var) -> bool) -> Var {
    (0..)
        .map(|i| Var { base: Arc::from(format!("{}!{}", v.base, i)), ..v.clone() })
        .find(|c| !taken(c))
        .expect("unbounded search")
}

fn fold(f: Formula) -> Formula {
    use Formula::*;
    match f {
        Not(a) => match *a {
            Bool(x) => Bool(!x),
            a => Not(Box::new(a)),
        },
        And(xs) => {
            let mut out = Vec::with_capacity(xs.len());
            for x in xs {
                match x {
                    Bool(true) => {}
                    Bool(false) => return Bool(false),
                    x => out.push(x),
                }
            }
            match out.len() {
                0 => Bool(true),
                1 => out.pop().unwrap(),
                _ => And(out),
            }
        }
        Or(xs) => {
            let mut out = Vec::with_capacity(xs.len());
            for x in xs {
                match x {
                    Bool(false) => {}
                    Bool(true) => return Bool(true),
                    x => out.push(x),
                }
            }
            match out.len() {
                0 => Bool(false),
                1 => out.pop().unwrap(),
                _ => Or(out),
            }
        }
        Implies(a, b) => match (*a, *b) {
            (Bool(false), _) | (_, Bool(true)) => Bool(true),
            (Bool(true), b) => b,
            (a, Bool(false)) => fold(Not(Box::new(a))),
            (a, b) => Implies(Box::new(a), Box::new(b)),
        },
        Iff(a, b) => match (*a, *b) {
            (Bool(x), Bool(y)) => Bool(x == y),
            (Bool(true), o) | (o, Bool(true)) => o,
            (Bool(false), o) | (o, Bool(false)) => fold(Not(Box::new(o))),
            (a, b) => Iff(Box::new(a), Box::new(b)),
        },
        Cmp(op, a, b) => match (&*a, &*b) {
            (Int(x), Int(y)) => Bool(op.apply(*x, *y)),
            _ => Cmp(op, a, b),
        },
        Add(xs) => {
            if xs.iter().all(|x| matches!(x, Int(_))) {
                let mut acc: i64 = 0;
                for x in &xs {
                    if let Int(n) = x {
                        match acc.checked_add(*n) {
                            Some(v) => acc = v,
                            None => return Add(xs),
                        }
                    }
                }
                Int(acc)
            } else {
                Add(xs)
            }
        }
        Sub(a, b) => match (&*a, &*b) {
            (Int(x), Int(y)) => x.checked_sub(*y).map(Int).unwrap_or(Sub(a, b)),
            _ => Sub(a, b),
        },
        Neg(a) => match &*a {
            Int(x) => x.checked_neg().map(Int).unwrap_or(Neg(a)),
            _ => Neg(a),
        },
        Mul(a, b) => match (&*a, &*b) {
            (Int(x), Int(y)) => x.checked_mul(*y).map(Int).unwrap_or(Mul(a, b)),
            _ => Mul(a, b),
        },
        Ite(c, t, e) => match *c {
            Bool(true) => *t,
            Bool(false) => *e,
            c => Ite(Box::new(c), t, e),
        },
        other => other,
    }
}

/// Copies every unindexed variable into copy `copy` (θ_⟨π⟩).
pub fn index_formula(f: &Formula, copy: u32) -> Result<Formula, LogicError> {
    f.rename_vars(&mut |v: &Var| {
        if v.copy.is_some() {
            Err(LogicError::AlreadyIndexed(v.to_string()))
        } else {
            Ok(v.indexed(copy))
        }
    })
}

/// Primes every variable. Variables must be indexed and not yet primed.
pub fn prime_formula(f: &Formula) -> Result<Formula, LogicError> {
    f.rename_vars(&mut |v: &Var| {
        if v.primed {
            Err(LogicError::AlreadyPrimed(v.to_string()))
        } else if v.copy.is_none() {
            Err(LogicError::NotIndexed(v.to_string()))
        } else {
            Ok(v.primed())
        }
    })
}

/// Index a transition formula over X ∪ X′: `x` becomes `x@i`, `x'` becomes `x@i'`.
pub fn index_step(f: &Formula, copy: u32) -> Result<Formula, LogicError> {
    index_formula(f, copy)
}

/// Checks that the formula is well sorted and returns its sort.
pub fn check_sorts(f: &Formula) -> Result<Sort, LogicError> {
    fn expect(f: &Formula, want: Sort, ctx: &str) -> Result<(), LogicError> {
        let got = check_sorts(f)?;
        if got != want {
            return Err(LogicError::SortMismatch { context: ctx.to_string(), expected: want, found: got });
        }
        Ok(())
    }
    use Formula::*;
    Ok(match f {
        Bool(_) => Sort::Bool,
        Int(_) => Sort::Int,
        Var(v) => v.sort,
        Not(a) => {
            expect(a, Sort::Bool, "not")?;
            Sort::Bool
        }
        And(xs) | Or(xs) => {
            for x in xs {
                expect(x, Sort::Bool, "and/or")?;
            }
            Sort::Bool
        }
        Implies(a, b) | Iff(a, b) => {
            expect(a, Sort::Bool, "=>/iff")?;
            expect(b, Sort::Bool, "=>/iff")?;
            Sort::Bool
        }
        Cmp(op, a, b) => {
            expect(a, Sort::Int, op.symbol())?;
            expect(b, Sort::Int, op.symbol())?;
            Sort::Bool
        }
        Add(xs) => {
            for x in xs {
                expect(x, Sort::Int, "+")?;
            }
            Sort::Int
        }
        Sub(a, b) | Mul(a, b) => {
            expect(a, Sort::Int, "arithmetic")?;
            expect(b, Sort::Int, "arithmetic")?;
            Sort::Int
        }
        Neg(a) => {
            expect(a, Sort::Int, "-")?;
            Sort::Int
        }
        Ite(c, t, e) => {
            expect(c, Sort::Bool, "ite condition")?;
            let s = check_sorts(t)?;
            expect(e, s, "ite branches")?;
            s
        }
        Forall(_, a) | Exists(_, a) => {
            expect(a, Sort::Bool, "quantifier body")?;
            Sort::Bool
        }
    })
}

fn write_sexpr(f: &Formula, out: &mut String, smt: bool) {
    use std::fmt::Write;
    use Formula::*;
    let list = |out: &mut String, head: &str, xs: &[&Formula]| {
        out.push('(');
        out.push_str(head);
        for x in xs {
            out.push(' ');
            write_sexpr(x, out, smt);
        }
        out.push(')');
    };
    match f {
        Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Int(n) => {
            if smt && *n < 0 {
                let _ = write!(out, "(- {})", n.unsigned_abs());
            } else {
                let _ = write!(out, "{n}");
            }
        }
        Var(v) => {
            if smt {
                let _ = write!(out, "|{v}|");
            } else {
                let _ = write!(out, "{v}");
            }
        }
        Not(a) => list(out, "not", &[a]),
        Neg(a) => list(out, "-", &[a]),
        And(xs) if smt && xs.is_empty() => out.push_str("true"),
        Or(xs) if smt && xs.is_empty() => out.push_str("false"),
        Add(xs) if smt && xs.is_empty() => out.push('0'),
        And(xs) if smt && xs.len() == 1 => write_sexpr(&xs[0], out, smt),
        Or(xs) if smt && xs.len() == 1 => write_sexpr(&xs[0], out, smt),
        Add(xs) if smt && xs.len() == 1 => write_sexpr(&xs[0], out, smt),
        And(xs) => list(out, "and", &xs.iter().collect::<Vec<_>>()),
        Or(xs) => list(out, "or", &xs.iter().collect::<Vec<_>>()),
        Add(xs) => list(out, "+", &xs.iter().collect::<Vec<_>>()),
        Implies(a, b) => list(out, "=>", &[a, b]),
        Iff(a, b) => list(out, "=", &[a, b]),
        Cmp(op, a, b) => list(out, op.symbol(), &[a, b]),
        Sub(a, b) => list(out, "-", &[a, b]),
        Mul(a, b) => list(out, "*", &[a, b]),
        Ite(c, t, e) => list(out, "ite", &[c, t, e]),
        Forall(vs, a) | Exists(vs, a) => {
            out.push_str(if matches!(f, Forall(..)) { "(forall (" } else { "(exists (" });
            for (i, v) in vs.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                if smt {
                    let _ = write!(out, "(|{v}| {})", v.sort);
                } else {
                    let _ = write!(out, "({v} {})", v.sort);
                }
            }
            out.push_str(") ");
            write_sexpr(a, out, smt);
            out.push(')');
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        write_sexpr(self, &mut s, false);
        f.write_str(&s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x() -> Var {
        Var::int("x")
    }

    #[test]
    fn indexing_then_priming() {
        let f = cmp(CmpOp::Gt, var(&x()), int(0));
        let g = prime_formula(&index_formula(&f, 2).unwrap()).unwrap();
        assert_eq!(g.to_string(), "(> x@2' 0)");
        assert!(matches!(index_formula(&g, 1), Err(LogicError::AlreadyIndexed(_))));
        assert!(matches!(prime_formula(&g), Err(LogicError::AlreadyPrimed(_))));
        assert!(matches!(prime_formula(&f), Err(LogicError::NotIndexed(_))));
    }

    #[test]
    fn substitution_avoids_capture() {
        let y = Var::int("y");
        // forall y. x < y, substitute x := y + 1
        let f = Formula::Forall(vec![y.clone()], Box::new(cmp(CmpOp::Lt, var(&x()), var(&y))));
        let mut map = BTreeMap::new();
        map.insert(x(), Formula::Add(vec![var(&y), int(1)]));
        let g = f.substitute(&map);
        let Formula::Forall(vs, _) = &g else { panic!() };
        assert_ne!(vs[0], y);
        assert_eq!(g.free_vars(), BTreeSet::from([y]));
    }

    #[test]
    fn free_vars_skip_bound() {
        let y = Var::int("y");
        let f = and(vec![
            Formula::Exists(vec![y.clone()], Box::new(eq(var(&y), var(&x())))),
            cmp(CmpOp::Le, var(&y), int(3)),
        ]);
        assert_eq!(f.free_vars(), BTreeSet::from([x(), y]));
    }

    #[test]
    fn sorts_are_checked() {
        let b = Var::boolean("b");
        assert_eq!(check_sorts(&iff(var(&b), Formula::Bool(true))), Ok(Sort::Bool));
        assert!(check_sorts(&eq(var(&b), int(1))).is_err());
        assert!(check_sorts(&ite(var(&b), int(1), Formula::Bool(false))).is_err());
    }

    #[test]
    fn linearity() {
        assert!(Formula::Mul(Box::new(int(2)), Box::new(var(&x()))).is_linear());
        assert!(!Formula::Mul(Box::new(var(&x())), Box::new(var(&x()))).is_linear());
    }

    #[test]
    fn evaluation_and_folding_agree() {
        let f = and(vec![
            cmp(CmpOp::Ge, Formula::Add(vec![int(2), int(3)]), int(5)),
            or(vec![Formula::Bool(false), not(Formula::Bool(false))]),
        ]);
        assert_eq!(f.simplify(), Formula::Bool(true));
        assert_eq!(f.eval(&|_| None), Ok(Value::Bool(true)));
        assert_eq!(
            Formula::Mul(Box::new(int(i64::MAX)), Box::new(int(2))).eval(&|_| None),
            Err(EvalError::Overflow)
        );
    }

    #[test]
    fn canonical_sorts_commutative_operands() {
        let y = Var::int("y");
        let a = and(vec![eq(var(&y), var(&x())), Formula::Bool(true)]);
        let b = and(vec![Formula::Bool(true), eq(var(&x()), var(&y))]);
        assert_eq!(a.canonical(), b.canonical());
    }

    #[test]
    fn smtlib_rendering() {
        let f = cmp(CmpOp::Lt, var(&x().indexed(1).primed()), int(-4));
        assert_eq!(f.to_smtlib(), "(< |x@1'| (- 4))");
        assert_eq!(and(vec![]).to_smtlib(), "true");
    }

    #[test]
    fn atoms_stop_at_comparisons() {
        let b = Var::boolean("b");
        let f = implies(var(&b), and(vec![eq(var(&x()), int(1)), not(var(&b))]));
        assert_eq!(f.atoms(), vec![var(&b), eq(var(&x()), int(1))]);
    }
}
