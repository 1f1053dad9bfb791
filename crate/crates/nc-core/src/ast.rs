//! Abstract syntax of programs and values.
//!
//! Expressions form an immutable tree shared behind [`Arc`], so an evaluator
//! can keep sub-terms alive without cloning and substitution can reuse
//! untouched branches. Anonymous functions carry a [`Tag`] assigned by
//! [`tag_anonymous_functions`]; function values compare equal exactly when
//! they have the same name (tag for closures, declared name for `def`s,
//! operator name for built-ins).

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

pub type Ident = Arc<str>;

/// Device identifiers, totally ordered (folds visit neighbours in increasing
/// id order).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DeviceId(pub u64);

impl fmt::Display for DeviceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Identity of an anonymous function: compilation unit plus the occurrence
/// index of its `=>` in source order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Tag {
    pub unit: Ident,
    pub index: u32,
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.unit, self.index)
    }
}

/// Stable id for an expression node, used to key spans and inferred types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

/// Built-in functions. Pure operators are a closed set; sensors and
/// relational sensors are open-ended and named by the scenario.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Builtin {
    Add,
    Sub,
    Mul,
    Div,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    And,
    Or,
    Not,
    Min,
    Max,
    Mux,
    Pair,
    Fst,
    Snd,
    Cons,
    Head,
    Tail,
    Consthood,
    Map,
    Sensor(Ident),
    RelationalSensor(Ident),
}

/// The three operational classes of built-ins.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BuiltinKind {
    /// Depends on argument values only.
    PureOperator,
    /// Additionally depends on the firing device and its sensor state.
    Sensor,
    /// Additionally depends on the neighbour the expression is evaluated
    /// against.
    RelationalSensor,
}

impl Builtin {
    pub fn name(&self) -> &str {
        match self {
            Builtin::Add => "+",
            Builtin::Sub => "-",
            Builtin::Mul => "*",
            Builtin::Div => "/",
            Builtin::Lt => "<",
            Builtin::Le => "<=",
            Builtin::Gt => ">",
            Builtin::Ge => ">=",
            Builtin::Eq => "==",
            Builtin::Ne => "!=",
            Builtin::And => "and",
            Builtin::Or => "or",
            Builtin::Not => "not",
            Builtin::Min => "min",
            Builtin::Max => "max",
            Builtin::Mux => "mux",
            Builtin::Pair => "pair",
            Builtin::Fst => "fst",
            Builtin::Snd => "snd",
            Builtin::Cons => "cons",
            Builtin::Head => "head",
            Builtin::Tail => "tail",
            Builtin::Consthood => "consthood",
            Builtin::Map => "map",
            Builtin::Sensor(s) => s,
            Builtin::RelationalSensor(r) => r,
        }
    }

    pub fn kind(&self) -> BuiltinKind {
        match self {
            Builtin::Sensor(_) => BuiltinKind::Sensor,
            Builtin::RelationalSensor(_) => BuiltinKind::RelationalSensor,
            _ => BuiltinKind::PureOperator,
        }
    }

    /// Infix spelling, if this operator is printed infix.
    pub fn infix(&self) -> Option<&str> {
        match self {
            Builtin::Add => Some("+"),
            Builtin::Sub => Some("-"),
            Builtin::Mul => Some("*"),
            Builtin::Div => Some("/"),
            Builtin::Lt => Some("<"),
            Builtin::Le => Some("<="),
            Builtin::Gt => Some(">"),
            Builtin::Ge => Some(">="),
            Builtin::Eq => Some("=="),
            Builtin::Ne => Some("!="),
            Builtin::And => Some("&&"),
            Builtin::Or => Some("||"),
            _ => None,
        }
    }
}

/// Closed anonymous function value.
#[derive(Debug, Clone)]
pub struct LambdaVal {
    pub params: Vec<Ident>,
    pub tag: Option<Tag>,
    pub body: Expr,
}

/// Function values: built-ins, declared functions and closures.
#[derive(Debug, Clone)]
pub enum FunValue {
    Builtin(Builtin),
    Defined(Ident),
    Anon(Arc<LambdaVal>),
}

impl FunValue {
    /// Function name, the unit of function-value equality. Untagged closures
    /// only occur before tagging and never during evaluation.
    pub fn name(&self) -> String {
        match self {
            FunValue::Builtin(b) => b.name().to_string(),
            FunValue::Defined(d) => d.to_string(),
            FunValue::Anon(l) => match &l.tag {
                Some(t) => t.to_string(),
                None => "<untagged>".to_string(),
            },
        }
    }
}

impl PartialEq for FunValue {
    fn eq(&self, other: &Self) -> bool {
        self.name() == other.name()
    }
}
impl Eq for FunValue {}

/// Cons-cell lists built from `Null` and `Cons`.
#[derive(Debug, Clone, PartialEq)]
pub enum ListVal {
    Null,
    Cons(Value, Arc<ListVal>),
}

/// Data and function values. Numbers are double precision, with
/// `PositiveInfinity` as a first-class numeral.
#[derive(Debug, Clone)]
pub enum Value {
    Num(f64),
    Bool(bool),
    Pair(Arc<(Value, Value)>),
    List(Arc<ListVal>),
    Fun(FunValue),
}

impl Value {
    pub fn num(n: f64) -> Value {
        Value::Num(n)
    }
    pub fn pair(a: Value, b: Value) -> Value {
        Value::Pair(Arc::new((a, b)))
    }
    pub fn nil() -> Value {
        Value::List(Arc::new(ListVal::Null))
    }
    pub fn builtin(b: Builtin) -> Value {
        Value::Fun(FunValue::Builtin(b))
    }

    pub fn as_num(&self) -> Option<f64> {
        match self {
            Value::Num(n) => Some(*n),
            _ => None,
        }
    }
    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }
    pub fn as_fun(&self) -> Option<&FunValue> {
        match self {
            Value::Fun(f) => Some(f),
            _ => None,
        }
    }

    /// Deterministic total order: numbers via `total_cmp`, pairs and lists
    /// lexicographically, functions by name, variants by discriminant.
    /// Backs the `min`/`max`/`==` built-ins.
    pub fn total_cmp(&self, other: &Value) -> std::cmp::Ordering {
        use std::cmp::Ordering;
        use Value::*;
        fn rank(v: &Value) -> u8 {
            match v {
                Num(_) => 0,
                Bool(_) => 1,
                Pair(_) => 2,
                List(_) => 3,
                Fun(_) => 4,
            }
        }
        match (self, other) {
            (Num(a), Num(b)) => a.total_cmp(b),
            (Bool(a), Bool(b)) => a.cmp(b),
            (Pair(a), Pair(b)) => a
                .0
                .total_cmp(&b.0)
                .then_with(|| a.1.total_cmp(&b.1)),
            (List(a), List(b)) => {
                let (mut x, mut y) = (a.as_ref(), b.as_ref());
                loop {
                    match (x, y) {
                        (ListVal::Null, ListVal::Null) => return Ordering::Equal,
                        (ListVal::Null, _) => return Ordering::Less,
                        (_, ListVal::Null) => return Ordering::Greater,
                        (ListVal::Cons(va, ta), ListVal::Cons(vb, tb)) => {
                            let c = va.total_cmp(vb);
                            if c != Ordering::Equal {
                                return c;
                            }
                            x = ta;
                            y = tb;
                        }
                    }
                }
            }
            (Fun(a), Fun(b)) => a.name().cmp(&b.name()),
            (a, b) => rank(a).cmp(&rank(b)),
        }
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        self.total_cmp(other) == std::cmp::Ordering::Equal
    }
}
impl Eq for Value {}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Num(n) => {
                if n.is_infinite() && *n > 0.0 {
                    write!(f, "PositiveInfinity")
                } else {
                    write!(f, "{}", n)
                }
            }
            Value::Bool(true) => write!(f, "True"),
            Value::Bool(false) => write!(f, "False"),
            Value::Pair(p) => write!(f, "Pair({}, {})", p.0, p.1),
            Value::List(l) => {
                let mut cur = l.as_ref();
                write!(f, "[")?;
                let mut first = true;
                while let ListVal::Cons(v, rest) = cur {
                    if !first {
                        write!(f, ", ")?;
                    }
                    write!(f, "{}", v)?;
                    first = false;
                    cur = rest;
                }
                write!(f, "]")
            }
            Value::Fun(fun) => write!(f, "{}", fun.name()),
        }
    }
}

pub type Expr = Arc<ExprNode>;

#[derive(Debug)]
pub struct ExprNode {
    pub kind: ExprKind,
    pub id: NodeId,
}

#[derive(Debug)]
pub enum ExprKind {
    Var(Ident),
    Val(Value),
    Lambda {
        params: Vec<Ident>,
        tag: Option<Tag>,
        body: Expr,
    },
    Apply {
        callee: Expr,
        args: Vec<Expr>,
    },
    Rep {
        init: Expr,
        update: Expr,
    },
    Nbr {
        body: Expr,
    },
    Foldhood {
        init: Expr,
        aggregator: Expr,
        body: Expr,
    },
}

/// `def d(params) { body }`
#[derive(Debug, Clone)]
pub struct FunctionDecl {
    pub name: Ident,
    pub params: Vec<Ident>,
    pub body: Expr,
}

/// A sequence of function declarations plus a closed main expression.
#[derive(Debug, Clone)]
pub struct Program {
    pub functions: Vec<FunctionDecl>,
    pub main: Expr,
}

impl Program {
    pub fn function(&self, name: &str) -> Option<&FunctionDecl> {
        self.functions.iter().find(|f| f.name.as_ref() == name)
    }
}

// ---------------------------------------------------------------------------
// Node construction
// ---------------------------------------------------------------------------

/// Hands out fresh [`NodeId`]s during parsing and rewriting.
#[derive(Debug, Default)]
pub struct NodeIdGen {
    next: std::cell::Cell<u32>,
}

impl NodeIdGen {
    pub fn new() -> Self {
        Self::default()
    }
    pub fn starting_at(n: u32) -> Self {
        let g = Self::default();
        g.next.set(n);
        g
    }
    pub fn fresh(&self) -> NodeId {
        let n = self.next.get();
        self.next.set(n + 1);
        NodeId(n)
    }
    pub fn mk(&self, kind: ExprKind) -> Expr {
        Arc::new(ExprNode {
            kind,
            id: self.fresh(),
        })
    }
}

// ---------------------------------------------------------------------------
// Tagging
// ---------------------------------------------------------------------------

/// Annotate every anonymous function with `(unit, n)` where `n` is its `=>`
/// occurrence index in source order, counting across declarations (in order)
/// and then the main expression. Re-tagging is idempotent.
pub fn tag_anonymous_functions(program: &Program, unit: &str) -> Program {
    let unit: Ident = Arc::from(unit);
    let mut counter = 0u32;
    let functions = program
        .functions
        .iter()
        .map(|f| FunctionDecl {
            name: f.name.clone(),
            params: f.params.clone(),
            body: tag_expr(&f.body, &unit, &mut counter),
        })
        .collect();
    let main = tag_expr(&program.main, &unit, &mut counter);
    Program { functions, main }
}

fn tag_expr(e: &Expr, unit: &Ident, counter: &mut u32) -> Expr {
    let kind = match &e.kind {
        ExprKind::Var(x) => ExprKind::Var(x.clone()),
        ExprKind::Val(v) => ExprKind::Val(tag_value(v, unit, counter)),
        ExprKind::Lambda { params, body, .. } => {
            *counter += 1;
            let tag = Tag {
                unit: unit.clone(),
                index: *counter,
            };
            let body = tag_expr(body, unit, counter);
            ExprKind::Lambda {
                params: params.clone(),
                tag: Some(tag),
                body,
            }
        }
        ExprKind::Apply { callee, args } => ExprKind::Apply {
            callee: tag_expr(callee, unit, counter),
            args: args.iter().map(|a| tag_expr(a, unit, counter)).collect(),
        },
        ExprKind::Rep { init, update } => ExprKind::Rep {
            init: tag_expr(init, unit, counter),
            update: tag_expr(update, unit, counter),
        },
        ExprKind::Nbr { body } => ExprKind::Nbr {
            body: tag_expr(body, unit, counter),
        },
        ExprKind::Foldhood {
            init,
            aggregator,
            body,
        } => ExprKind::Foldhood {
            init: tag_expr(init, unit, counter),
            aggregator: tag_expr(aggregator, unit, counter),
            body: tag_expr(body, unit, counter),
        },
    };
    Arc::new(ExprNode { kind, id: e.id })
}

fn tag_value(v: &Value, unit: &Ident, counter: &mut u32) -> Value {
    match v {
        Value::Fun(FunValue::Anon(l)) => {
            *counter += 1;
            let tag = Tag {
                unit: unit.clone(),
                index: *counter,
            };
            let body = tag_expr(&l.body, unit, counter);
            Value::Fun(FunValue::Anon(Arc::new(LambdaVal {
                params: l.params.clone(),
                tag: Some(tag),
                body,
            })))
        }
        other => other.clone(),
    }
}

// ---------------------------------------------------------------------------
// Free variables and substitution
// ---------------------------------------------------------------------------

pub fn free_vars(e: &Expr) -> BTreeSet<Ident> {
    let mut acc = BTreeSet::new();
    collect_free(e, &mut Vec::new(), &mut acc);
    acc
}

fn collect_free(e: &Expr, bound: &mut Vec<Ident>, acc: &mut BTreeSet<Ident>) {
    match &e.kind {
        ExprKind::Var(x) => {
            if !bound.iter().any(|b| b == x) {
                acc.insert(x.clone());
            }
        }
        ExprKind::Val(Value::Fun(FunValue::Anon(l))) => {
            let n = bound.len();
            bound.extend(l.params.iter().cloned());
            collect_free(&l.body, bound, acc);
            bound.truncate(n);
        }
        ExprKind::Val(_) => {}
        ExprKind::Lambda { params, body, .. } => {
            let n = bound.len();
            bound.extend(params.iter().cloned());
            collect_free(body, bound, acc);
            bound.truncate(n);
        }
        ExprKind::Apply { callee, args } => {
            collect_free(callee, bound, acc);
            for a in args {
                collect_free(a, bound, acc);
            }
        }
        ExprKind::Rep { init, update } => {
            collect_free(init, bound, acc);
            collect_free(update, bound, acc);
        }
        ExprKind::Nbr { body } => collect_free(body, bound, acc),
        ExprKind::Foldhood {
            init,
            aggregator,
            body,
        } => {
            collect_free(init, bound, acc);
            collect_free(aggregator, bound, acc);
            collect_free(body, bound, acc);
        }
    }
}

/// Simultaneous substitution of closed values for free variables. Untouched
/// sub-terms are shared, so the result aliases the input wherever possible.
pub fn substitute(e: &Expr, bindings: &std::collections::BTreeMap<Ident, Value>) -> Expr {
    subst(e, bindings, &mut Vec::new())
}

fn subst(
    e: &Expr,
    bindings: &std::collections::BTreeMap<Ident, Value>,
    shadowed: &mut Vec<Ident>,
) -> Expr {
    let rebuilt = match &e.kind {
        ExprKind::Var(x) => {
            if shadowed.iter().any(|s| s == x) {
                None
            } else {
                bindings
                    .get(x)
                    .map(|v| ExprKind::Val(v.clone()))
            }
        }
        ExprKind::Val(_) => None,
        ExprKind::Lambda { params, tag, body } => {
            let n = shadowed.len();
            shadowed.extend(params.iter().cloned());
            let new_body = subst(body, bindings, shadowed);
            shadowed.truncate(n);
            if Arc::ptr_eq(&new_body, body) {
                None
            } else {
                Some(ExprKind::Lambda {
                    params: params.clone(),
                    tag: tag.clone(),
                    body: new_body,
                })
            }
        }
        ExprKind::Apply { callee, args } => {
            let new_callee = subst(callee, bindings, shadowed);
            let new_args: Vec<Expr> = args.iter().map(|a| subst(a, bindings, shadowed)).collect();
            if Arc::ptr_eq(&new_callee, callee)
                && new_args.iter().zip(args).all(|(a, b)| Arc::ptr_eq(a, b))
            {
                None
            } else {
                Some(ExprKind::Apply {
                    callee: new_callee,
                    args: new_args,
                })
            }
        }
        ExprKind::Rep { init, update } => {
            let ni = subst(init, bindings, shadowed);
            let nu = subst(update, bindings, shadowed);
            if Arc::ptr_eq(&ni, init) && Arc::ptr_eq(&nu, update) {
                None
            } else {
                Some(ExprKind::Rep {
                    init: ni,
                    update: nu,
                })
            }
        }
        ExprKind::Nbr { body } => {
            let nb = subst(body, bindings, shadowed);
            if Arc::ptr_eq(&nb, body) {
                None
            } else {
                Some(ExprKind::Nbr { body: nb })
            }
        }
        ExprKind::Foldhood {
            init,
            aggregator,
            body,
        } => {
            let ni = subst(init, bindings, shadowed);
            let na = subst(aggregator, bindings, shadowed);
            let nb = subst(body, bindings, shadowed);
            if Arc::ptr_eq(&ni, init) && Arc::ptr_eq(&na, aggregator) && Arc::ptr_eq(&nb, body) {
                None
            } else {
                Some(ExprKind::Foldhood {
                    init: ni,
                    aggregator: na,
                    body: nb,
                })
            }
        }
    };
    match rebuilt {
        None => e.clone(),
        Some(kind) => Arc::new(ExprNode { kind, id: e.id }),
    }
}

// ---------------------------------------------------------------------------
// Auxiliary accessors on function values
// ---------------------------------------------------------------------------

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum FunAccessError {
    #[error("built-in function `{0}` has no accessible parameters or body")]
    BuiltinHasNoBody(String),
    #[error("undefined function `{0}`")]
    Undefined(String),
}

pub fn function_name(f: &FunValue) -> String {
    f.name()
}

pub fn function_args(f: &FunValue, program: &Program) -> Result<Vec<Ident>, FunAccessError> {
    match f {
        FunValue::Builtin(b) => Err(FunAccessError::BuiltinHasNoBody(b.name().into())),
        FunValue::Defined(d) => program
            .function(d)
            .map(|decl| decl.params.clone())
            .ok_or_else(|| FunAccessError::Undefined(d.to_string())),
        FunValue::Anon(l) => Ok(l.params.clone()),
    }
}

pub fn function_body(f: &FunValue, program: &Program) -> Result<Expr, FunAccessError> {
    match f {
        FunValue::Builtin(b) => Err(FunAccessError::BuiltinHasNoBody(b.name().into())),
        FunValue::Defined(d) => program
            .function(d)
            .map(|decl| decl.body.clone())
            .ok_or_else(|| FunAccessError::Undefined(d.to_string())),
        FunValue::Anon(l) => Ok(l.body.clone()),
    }
}

// ---------------------------------------------------------------------------
// Structural equality modulo node ids
// ---------------------------------------------------------------------------

/// Structural equality ignoring [`NodeId`]s; tags and binder names are
/// compared verbatim (tags are canonical after tagging, so this is the
/// α-equality used by round-trip tests).
pub fn expr_eq(a: &Expr, b: &Expr) -> bool {
    match (&a.kind, &b.kind) {
        (ExprKind::Var(x), ExprKind::Var(y)) => x == y,
        (ExprKind::Val(u), ExprKind::Val(v)) => value_eq_structural(u, v),
        (
            ExprKind::Lambda {
                params: p1,
                tag: t1,
                body: b1,
            },
            ExprKind::Lambda {
                params: p2,
                tag: t2,
                body: b2,
            },
        ) => p1 == p2 && t1 == t2 && expr_eq(b1, b2),
        (
            ExprKind::Apply {
                callee: c1,
                args: a1,
            },
            ExprKind::Apply {
                callee: c2,
                args: a2,
            },
        ) => expr_eq(c1, c2) && a1.len() == a2.len() && a1.iter().zip(a2).all(|(x, y)| expr_eq(x, y)),
        (
            ExprKind::Rep {
                init: i1,
                update: u1,
            },
            ExprKind::Rep {
                init: i2,
                update: u2,
            },
        ) => expr_eq(i1, i2) && expr_eq(u1, u2),
        (ExprKind::Nbr { body: b1 }, ExprKind::Nbr { body: b2 }) => expr_eq(b1, b2),
        (
            ExprKind::Foldhood {
                init: i1,
                aggregator: g1,
                body: b1,
            },
            ExprKind::Foldhood {
                init: i2,
                aggregator: g2,
                body: b2,
            },
        ) => expr_eq(i1, i2) && expr_eq(g1, g2) && expr_eq(b1, b2),
        _ => false,
    }
}

/// Value equality that inspects closures structurally (unlike `PartialEq`,
/// which is name-based per the function-value equality convention).
fn value_eq_structural(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Fun(FunValue::Anon(x)), Value::Fun(FunValue::Anon(y))) => {
            x.params == y.params && x.tag == y.tag && expr_eq(&x.body, &y.body)
        }
        _ => a == b,
    }
}

pub fn program_eq(a: &Program, b: &Program) -> bool {
    a.functions.len() == b.functions.len()
        && a.functions.iter().zip(&b.functions).all(|(f, g)| {
            f.name == g.name && f.params == g.params && expr_eq(&f.body, &g.body)
        })
        && expr_eq(&a.main, &b.main)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn var(g: &NodeIdGen, x: &str) -> Expr {
        g.mk(ExprKind::Var(Arc::from(x)))
    }
    fn num(g: &NodeIdGen, n: f64) -> Expr {
        g.mk(ExprKind::Val(Value::Num(n)))
    }

    fn plus(g: &NodeIdGen, a: Expr, b: Expr) -> Expr {
        g.mk(ExprKind::Apply {
            callee: g.mk(ExprKind::Val(Value::builtin(Builtin::Add))),
            args: vec![a, b],
        })
    }

    #[test]
    fn tags_follow_source_order_and_are_idempotent() {
        let g = NodeIdGen::new();
        // ((x) => x)((y) => y)
        let l1 = g.mk(ExprKind::Lambda {
            params: vec![Arc::from("x")],
            tag: None,
            body: var(&g, "x"),
        });
        let l2 = g.mk(ExprKind::Lambda {
            params: vec![Arc::from("y")],
            tag: None,
            body: var(&g, "y"),
        });
        let main = g.mk(ExprKind::Apply {
            callee: l1,
            args: vec![l2],
        });
        let p = Program {
            functions: vec![],
            main,
        };
        let tagged = tag_anonymous_functions(&p, "main");
        let retagged = tag_anonymous_functions(&tagged, "main");
        let indices = |p: &Program| -> Vec<u32> {
            fn walk(e: &Expr, out: &mut Vec<u32>) {
                if let ExprKind::Lambda { tag, body, .. } = &e.kind {
                    out.push(tag.as_ref().unwrap().index);
                    walk(body, out);
                } else if let ExprKind::Apply { callee, args } = &e.kind {
                    walk(callee, out);
                    for a in args {
                        walk(a, out);
                    }
                }
            }
            let mut out = Vec::new();
            walk(&p.main, &mut out);
            out
        };
        assert_eq!(indices(&tagged), vec![1, 2]);
        assert!(program_eq(&tagged, &retagged));
    }

    #[test]
    fn tagging_without_lambdas_is_identity() {
        let g = NodeIdGen::new();
        let p = Program {
            functions: vec![],
            main: plus(&g, num(&g, 1.0), num(&g, 2.0)),
        };
        let tagged = tag_anonymous_functions(&p, "main");
        assert!(program_eq(&p, &tagged));
    }

    #[test]
    fn free_vars_base_and_binder() {
        let g = NodeIdGen::new();
        let x = var(&g, "x");
        assert_eq!(
            free_vars(&x).into_iter().collect::<Vec<_>>(),
            vec![Arc::from("x") as Ident]
        );
        // (x) => x + y  has free variable y only
        let lam = g.mk(ExprKind::Lambda {
            params: vec![Arc::from("x")],
            tag: None,
            body: plus(&g, var(&g, "x"), var(&g, "y")),
        });
        let fv = free_vars(&lam);
        assert!(fv.contains("y") && !fv.contains("x") && fv.len() == 1);
    }

    #[test]
    fn substitute_replaces_and_respects_shadowing() {
        let g = NodeIdGen::new();
        let mut bindings = std::collections::BTreeMap::new();
        bindings.insert(Arc::from("x") as Ident, Value::Num(3.0));

        // (x + 1)[x := 3] = 3 + 1
        let e = plus(&g, var(&g, "x"), num(&g, 1.0));
        let s = substitute(&e, &bindings);
        let expected = plus(&g, num(&g, 3.0), num(&g, 1.0));
        assert!(expr_eq(&s, &expected));

        // ((x) => x)[x := 5] unchanged, and shares the original node
        let lam = g.mk(ExprKind::Lambda {
            params: vec![Arc::from("x")],
            tag: None,
            body: var(&g, "x"),
        });
        let mut b2 = std::collections::BTreeMap::new();
        b2.insert(Arc::from("x") as Ident, Value::Num(5.0));
        let s2 = substitute(&lam, &b2);
        assert!(Arc::ptr_eq(&s2, &lam));
    }

    #[test]
    fn substitution_commutes_with_free_vars() {
        let g = NodeIdGen::new();
        let e = plus(&g, var(&g, "x"), plus(&g, var(&g, "y"), num(&g, 1.0)));
        let mut bindings = std::collections::BTreeMap::new();
        bindings.insert(Arc::from("x") as Ident, Value::Num(2.0));
        let s = substitute(&e, &bindings);
        let fv = free_vars(&s);
        assert!(fv.contains("y") && !fv.contains("x"));
    }

    #[test]
    fn function_value_equality_is_by_name() {
        let g = NodeIdGen::new();
        let t = Tag {
            unit: Arc::from("main"),
            index: 1,
        };
        let l1 = FunValue::Anon(Arc::new(LambdaVal {
            params: vec![Arc::from("x")],
            tag: Some(t.clone()),
            body: var(&g, "x"),
        }));
        let l2 = FunValue::Anon(Arc::new(LambdaVal {
            params: vec![Arc::from("x")],
            tag: Some(t),
            body: plus(&g, var(&g, "x"), num(&g, 0.0)),
        }));
        assert_eq!(l1, l2);
        assert_eq!(
            FunValue::Builtin(Builtin::Min),
            FunValue::Builtin(Builtin::Min)
        );
        assert_ne!(
            FunValue::Builtin(Builtin::Min),
            FunValue::Builtin(Builtin::Max)
        );
    }

    #[test]
    fn builtin_args_signal_usage_error() {
        let p = Program {
            functions: vec![],
            main: NodeIdGen::new().mk(ExprKind::Val(Value::Num(0.0))),
        };
        let err = function_args(&FunValue::Builtin(Builtin::Add), &p).unwrap_err();
        assert_eq!(err, FunAccessError::BuiltinHasNoBody("+".into()));
    }
}
