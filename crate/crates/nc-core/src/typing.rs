//! Hindley-Milner type inference.
//!
//! Types are `num`, `bool`, `pair<T1, T2>`, `list<T>`, n-ary arrows and
//! type variables; schemes quantify over variables. Inference is Robinson
//! unification with occurs check, no subtyping. Functions are typed in
//! declaration order with monomorphic recursion (a function's own assumption
//! is unquantified) and generalised afterwards.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::ast::{
    Builtin, Expr, ExprKind, FunValue, Ident, ListVal, NodeId, Program, Value,
};
use crate::parser::SourceSpan;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TvId(pub u32);

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Type {
    Var(TvId),
    Num,
    Bool,
    Pair(Box<Type>, Box<Type>),
    List(Box<Type>),
    Arrow(Vec<Type>, Box<Type>),
}

impl Type {
    pub fn arrow(args: Vec<Type>, ret: Type) -> Type {
        Type::Arrow(args, Box::new(ret))
    }
    pub fn pair(a: Type, b: Type) -> Type {
        Type::Pair(Box::new(a), Box::new(b))
    }
    pub fn list(e: Type) -> Type {
        Type::List(Box::new(e))
    }

    pub fn free_vars(&self, acc: &mut Vec<TvId>) {
        match self {
            Type::Var(v) => {
                if !acc.contains(v) {
                    acc.push(*v);
                }
            }
            Type::Num | Type::Bool => {}
            Type::Pair(a, b) => {
                a.free_vars(acc);
                b.free_vars(acc);
            }
            Type::List(e) => e.free_vars(acc),
            Type::Arrow(args, ret) => {
                for a in args {
                    a.free_vars(acc);
                }
                ret.free_vars(acc);
            }
        }
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Type::Var(TvId(n)) => write!(f, "t{}", n),
            Type::Num => write!(f, "num"),
            Type::Bool => write!(f, "bool"),
            Type::Pair(a, b) => write!(f, "pair<{}, {}>", a, b),
            Type::List(e) => write!(f, "list<{}>", e),
            Type::Arrow(args, ret) => {
                write!(f, "(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{}", a)?;
                }
                write!(f, ") -> {}", ret)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypeScheme {
    pub vars: Vec<TvId>,
    pub body: Type,
}

impl TypeScheme {
    pub fn mono(t: Type) -> TypeScheme {
        TypeScheme {
            vars: vec![],
            body: t,
        }
    }
}

impl fmt::Display for TypeScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.vars.is_empty() {
            write!(f, "forall")?;
            for v in &self.vars {
                write!(f, " t{}", v.0)?;
            }
            write!(f, ". ")?;
        }
        write!(f, "{}", self.body)
    }
}

/// Value types of the declared sensors (the value a local sensor yields, or
/// a relational sensor yields per neighbour).
#[derive(Debug, Clone)]
pub struct SensorTypes {
    pub types: BTreeMap<Ident, Type>,
}

impl SensorTypes {
    pub fn standard() -> Self {
        let mut types = BTreeMap::new();
        types.insert(Arc::from("temperature") as Ident, Type::Num);
        types.insert(Arc::from("mid"), Type::Num);
        types.insert(Arc::from("randomKey"), Type::Num);
        types.insert(Arc::from("nbrRange"), Type::Num);
        SensorTypes { types }
    }

    pub fn declare(&mut self, name: &str, t: Type) {
        self.types.insert(Arc::from(name), t);
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TypeError {
    #[error("{}type mismatch: `{left}` vs `{right}`", at(.span))]
    Mismatch {
        left: String,
        right: String,
        span: Option<SourceSpan>,
    },
    #[error("{}occurs check failed: t{var} in `{ty}`", at(.span))]
    Occurs {
        var: u32,
        ty: String,
        span: Option<SourceSpan>,
    },
    #[error("{}unknown sensor `{0}`", at(.1))]
    UnknownSensor(String, Option<SourceSpan>),
    #[error("{}`{name}` expects {expected} arguments, got {got}", at(.span))]
    Arity {
        name: String,
        expected: usize,
        got: usize,
        span: Option<SourceSpan>,
    },
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
}

fn at(span: &Option<SourceSpan>) -> String {
    match span {
        Some(s) => format!("{}: ", s),
        None => String::new(),
    }
}

// ---------------------------------------------------------------------------
// Built-in type schemes
// ---------------------------------------------------------------------------

/// Type scheme of a built-in at the given application arity (the arity only
/// matters for the variadic `map`). Schemes use variables numbered from 0;
/// they are instantiated with fresh variables before use.
///
/// The core table follows the standard constructor/operator schemes; `max`,
/// the comparison and arithmetic extensions, `consthood` and `map` are
/// additions required by the block library. `min` and `max` are polymorphic
/// over an ordered structural comparison so that blocks folding pairs of
/// (distance, value) type-check.
pub fn builtin_scheme(
    b: &Builtin,
    arity: usize,
    sensors: &SensorTypes,
) -> Result<TypeScheme, TypeError> {
    use Type::*;
    let v = |n: u32| Type::Var(TvId(n));
    let scheme = |vars: &[u32], args: Vec<Type>, ret: Type| TypeScheme {
        vars: vars.iter().map(|n| TvId(*n)).collect(),
        body: Type::arrow(args, ret),
    };
    Ok(match b {
        Builtin::Add | Builtin::Sub | Builtin::Mul | Builtin::Div => {
            scheme(&[], vec![Num, Num], Num)
        }
        Builtin::Lt | Builtin::Le | Builtin::Gt | Builtin::Ge => {
            scheme(&[], vec![Num, Num], Bool)
        }
        Builtin::Eq | Builtin::Ne => scheme(&[0], vec![v(0), v(0)], Bool),
        Builtin::And | Builtin::Or => scheme(&[], vec![Bool, Bool], Bool),
        Builtin::Not => scheme(&[], vec![Bool], Bool),
        Builtin::Min | Builtin::Max => scheme(&[0], vec![v(0), v(0)], v(0)),
        Builtin::Mux => scheme(&[0], vec![Bool, v(0), v(0)], v(0)),
        Builtin::Pair => scheme(&[0, 1], vec![v(0), v(1)], Type::pair(v(0), v(1))),
        Builtin::Fst => scheme(&[0, 1], vec![Type::pair(v(0), v(1))], v(0)),
        Builtin::Snd => scheme(&[0, 1], vec![Type::pair(v(0), v(1))], v(1)),
        Builtin::Cons => scheme(&[0], vec![v(0), Type::list(v(0))], Type::list(v(0))),
        Builtin::Head => scheme(&[0], vec![Type::list(v(0))], v(0)),
        Builtin::Tail => scheme(&[0], vec![Type::list(v(0))], Type::list(v(0))),
        Builtin::Consthood => scheme(&[0], vec![v(0)], v(0)),
        Builtin::Map => {
            // map(f, x1, ..., xk) applies f pointwise; erased it is plain
            // application. The scheme depends on the call arity.
            let k = arity.saturating_sub(1).max(1);
            let vars: Vec<u32> = (0..=k as u32).collect();
            let args: Vec<Type> = (0..k as u32).map(v).collect();
            let f = Type::arrow(args.clone(), v(k as u32));
            let mut all = vec![f];
            all.extend(args);
            scheme(&vars, all, v(k as u32))
        }
        Builtin::Sensor(name) | Builtin::RelationalSensor(name) => {
            let t = sensors
                .types
                .get(name)
                .ok_or_else(|| TypeError::UnknownSensor(name.to_string(), None))?;
            TypeScheme::mono(Type::arrow(vec![], t.clone()))
        }
    })
}

// ---------------------------------------------------------------------------
// Inference engine
// ---------------------------------------------------------------------------

#[derive(Default)]
struct Subst {
    bindings: Vec<Option<Type>>,
}

impl Subst {
    fn fresh(&mut self) -> Type {
        self.bindings.push(None);
        Type::Var(TvId(self.bindings.len() as u32 - 1))
    }

    fn resolve_shallow(&self, mut t: Type) -> Type {
        while let Type::Var(TvId(n)) = t {
            match &self.bindings[n as usize] {
                Some(bound) => t = bound.clone(),
                None => return t,
            }
        }
        t
    }

    fn resolve(&self, t: &Type) -> Type {
        let t = self.resolve_shallow(t.clone());
        match t {
            Type::Var(_) | Type::Num | Type::Bool => t,
            Type::Pair(a, b) => Type::pair(self.resolve(&a), self.resolve(&b)),
            Type::List(e) => Type::list(self.resolve(&e)),
            Type::Arrow(args, ret) => Type::Arrow(
                args.iter().map(|a| self.resolve(a)).collect(),
                Box::new(self.resolve(&ret)),
            ),
        }
    }

    fn occurs(&self, var: TvId, t: &Type) -> bool {
        match self.resolve_shallow(t.clone()) {
            Type::Var(v) => v == var,
            Type::Num | Type::Bool => false,
            Type::Pair(a, b) => self.occurs(var, &a) || self.occurs(var, &b),
            Type::List(e) => self.occurs(var, &e),
            Type::Arrow(args, ret) => {
                args.iter().any(|a| self.occurs(var, a)) || self.occurs(var, &ret)
            }
        }
    }

    fn unify(&mut self, a: &Type, b: &Type, span: Option<&SourceSpan>) -> Result<(), TypeError> {
        let a = self.resolve_shallow(a.clone());
        let b = self.resolve_shallow(b.clone());
        match (&a, &b) {
            (Type::Var(x), Type::Var(y)) if x == y => Ok(()),
            (Type::Var(x), t) | (t, Type::Var(x)) => {
                if self.occurs(*x, t) {
                    return Err(TypeError::Occurs {
                        var: x.0,
                        ty: self.resolve(t).to_string(),
                        span: span.cloned(),
                    });
                }
                self.bindings[x.0 as usize] = Some(t.clone());
                Ok(())
            }
            (Type::Num, Type::Num) | (Type::Bool, Type::Bool) => Ok(()),
            (Type::Pair(a1, b1), Type::Pair(a2, b2)) => {
                self.unify(a1, a2, span)?;
                self.unify(b1, b2, span)
            }
            (Type::List(e1), Type::List(e2)) => self.unify(e1, e2, span),
            (Type::Arrow(args1, r1), Type::Arrow(args2, r2)) => {
                if args1.len() != args2.len() {
                    return Err(TypeError::Mismatch {
                        left: self.resolve(&a).to_string(),
                        right: self.resolve(&b).to_string(),
                        span: span.cloned(),
                    });
                }
                for (x, y) in args1.iter().zip(args2) {
                    self.unify(x, y, span)?;
                }
                self.unify(r1, r2, span)
            }
            _ => Err(TypeError::Mismatch {
                left: self.resolve(&a).to_string(),
                right: self.resolve(&b).to_string(),
                span: span.cloned(),
            }),
        }
    }
}

/// Scheme environment: built-in table plus previously typed functions.
pub struct InferCtx<'a> {
    sensors: &'a SensorTypes,
    spans: Option<&'a BTreeMap<NodeId, SourceSpan>>,
    schemes: BTreeMap<Ident, TypeScheme>,
    subst: Subst,
    node_types: BTreeMap<NodeId, Type>,
}

impl<'a> InferCtx<'a> {
    pub fn new(
        sensors: &'a SensorTypes,
        spans: Option<&'a BTreeMap<NodeId, SourceSpan>>,
    ) -> Self {
        InferCtx {
            sensors,
            spans,
            schemes: BTreeMap::new(),
            subst: Subst::default(),
            node_types: BTreeMap::new(),
        }
    }

    fn span_of(&self, e: &Expr) -> Option<SourceSpan> {
        self.spans.and_then(|s| s.get(&e.id).cloned())
    }

    fn instantiate(&mut self, scheme: &TypeScheme) -> Type {
        let mut mapping = BTreeMap::new();
        for v in &scheme.vars {
            mapping.insert(*v, self.subst.fresh());
        }
        fn walk(t: &Type, m: &BTreeMap<TvId, Type>) -> Type {
            match t {
                Type::Var(v) => m.get(v).cloned().unwrap_or_else(|| Type::Var(*v)),
                Type::Num => Type::Num,
                Type::Bool => Type::Bool,
                Type::Pair(a, b) => Type::pair(walk(a, m), walk(b, m)),
                Type::List(e) => Type::list(walk(e, m)),
                Type::Arrow(args, ret) => Type::Arrow(
                    args.iter().map(|a| walk(a, m)).collect(),
                    Box::new(walk(ret, m)),
                ),
            }
        }
        walk(&scheme.body, &mapping)
    }

    fn value_type(&mut self, v: &Value, arity_hint: usize) -> Result<Type, TypeError> {
        Ok(match v {
            Value::Num(_) => Type::Num,
            Value::Bool(_) => Type::Bool,
            Value::Pair(p) => Type::pair(self.value_type(&p.0, 0)?, self.value_type(&p.1, 0)?),
            Value::List(l) => {
                let elem = self.subst.fresh();
                let mut cur = l.as_ref();
                while let ListVal::Cons(h, t) = cur {
                    let ht = self.value_type(h, 0)?;
                    self.subst.unify(&elem, &ht, None)?;
                    cur = t;
                }
                Type::list(elem)
            }
            Value::Fun(FunValue::Builtin(b)) => {
                let scheme = builtin_scheme(b, arity_hint, self.sensors)?;
                self.instantiate(&scheme)
            }
            Value::Fun(FunValue::Defined(d)) => {
                let scheme = self
                    .schemes
                    .get(d)
                    .cloned()
                    .ok_or_else(|| TypeError::UnknownFunction(d.to_string()))?;
                self.instantiate(&scheme)
            }
            Value::Fun(FunValue::Anon(l)) => {
                let mut env = BTreeMap::new();
                let params: Vec<Type> = l
                    .params
                    .iter()
                    .map(|p| {
                        let t = self.subst.fresh();
                        env.insert(p.clone(), t.clone());
                        t
                    })
                    .collect();
                let body = self.infer(&env, &l.body)?;
                Type::Arrow(params, Box::new(body))
            }
        })
    }

    pub fn infer(&mut self, env: &BTreeMap<Ident, Type>, e: &Expr) -> Result<Type, TypeError> {
        let t = match &e.kind {
            ExprKind::Var(x) => env
                .get(x)
                .cloned()
                .unwrap_or_else(|| panic!("unbound variable `{}` reached typing", x)),
            ExprKind::Val(v) => self.value_type(v, 1)?,
            ExprKind::Lambda { params, body, .. } => {
                let mut inner = env.clone();
                let param_types: Vec<Type> = params
                    .iter()
                    .map(|p| {
                        let t = self.subst.fresh();
                        inner.insert(p.clone(), t.clone());
                        t
                    })
                    .collect();
                let body_t = self.infer(&inner, body)?;
                Type::Arrow(param_types, Box::new(body_t))
            }
            ExprKind::Apply { callee, args } => {
                let callee_t = match &callee.kind {
                    // `map` is variadic: its scheme depends on the call arity.
                    ExprKind::Val(v @ Value::Fun(FunValue::Builtin(_))) => {
                        let t = self.value_type(v, args.len())?;
                        self.node_types.insert(callee.id, t.clone());
                        t
                    }
                    _ => self.infer(env, callee)?,
                };
                let arg_ts: Vec<Type> = args
                    .iter()
                    .map(|a| self.infer(env, a))
                    .collect::<Result<_, _>>()?;
                let ret = self.subst.fresh();
                let want = Type::Arrow(arg_ts, Box::new(ret.clone()));
                self.subst
                    .unify(&callee_t, &want, self.span_of(e).as_ref())?;
                ret
            }
            ExprKind::Rep { init, update } => {
                let t_init = self.infer(env, init)?;
                let t_update = self.infer(env, update)?;
                let want = Type::arrow(vec![t_init.clone()], t_init.clone());
                self.subst
                    .unify(&t_update, &want, self.span_of(e).as_ref())?;
                t_init
            }
            ExprKind::Nbr { body } => self.infer(env, body)?,
            ExprKind::Foldhood {
                init,
                aggregator,
                body,
            } => {
                let t = self.infer(env, init)?;
                let t_aggr = self.infer(env, aggregator)?;
                let want = Type::arrow(vec![t.clone(), t.clone()], t.clone());
                self.subst
                    .unify(&t_aggr, &want, self.span_of(e).as_ref())?;
                let t_body = self.infer(env, body)?;
                self.subst
                    .unify(&t_body, &t, self.span_of(e).as_ref())?;
                t
            }
        };
        self.node_types.insert(e.id, t.clone());
        Ok(t)
    }

    fn finish_node_types(&mut self) {
        let resolved: BTreeMap<NodeId, Type> = self
            .node_types
            .iter()
            .map(|(k, v)| (*k, self.subst.resolve(v)))
            .collect();
        self.node_types = resolved;
    }
}

/// Inference result for a whole program.
#[derive(Debug)]
pub struct ProgramTypes {
    pub functions: Vec<(Ident, TypeScheme)>,
    pub main: Type,
    /// Resolved types for every expression node.
    pub node_types: BTreeMap<NodeId, Type>,
}

impl ProgramTypes {
    pub fn scheme_of(&self, name: &str) -> Option<&TypeScheme> {
        self.functions
            .iter()
            .find(|(n, _)| n.as_ref() == name)
            .map(|(_, s)| s)
    }
}

/// Infer an expression in isolation under the built-in environment.
pub fn infer_expr(
    sensors: &SensorTypes,
    env: &BTreeMap<Ident, Type>,
    e: &Expr,
) -> Result<Type, TypeError> {
    let mut ctx = InferCtx::new(sensors, None);
    let t = ctx.infer(env, e)?;
    Ok(ctx.subst.resolve(&t))
}

/// Type every function in declaration order (monomorphic recursion, then
/// generalisation) and the main expression.
pub fn infer_program(
    program: &Program,
    sensors: &SensorTypes,
    spans: Option<&BTreeMap<NodeId, SourceSpan>>,
) -> Result<ProgramTypes, TypeError> {
    let mut ctx = InferCtx::new(sensors, spans);
    let mut functions = Vec::new();
    for f in &program.functions {
        let mut env = BTreeMap::new();
        let params: Vec<Type> = f
            .params
            .iter()
            .map(|p| {
                let t = ctx.subst.fresh();
                env.insert(p.clone(), t.clone());
                t
            })
            .collect();
        let ret = ctx.subst.fresh();
        let self_type = Type::Arrow(params.clone(), Box::new(ret.clone()));
        ctx.schemes
            .insert(f.name.clone(), TypeScheme::mono(self_type.clone()));
        let body_t = ctx.infer(&env, &f.body)?;
        ctx.subst.unify(&body_t, &ret, None)?;
        let resolved = ctx.subst.resolve(&self_type);
        let mut vars = Vec::new();
        resolved.free_vars(&mut vars);
        let scheme = TypeScheme {
            vars,
            body: resolved,
        };
        ctx.schemes.insert(f.name.clone(), scheme.clone());
        functions.push((f.name.clone(), scheme));
    }
    let main = ctx.infer(&BTreeMap::new(), &program.main)?;
    let main = ctx.subst.resolve(&main);
    ctx.finish_node_types();
    Ok(ProgramTypes {
        functions,
        main,
        node_types: ctx.node_types,
    })
}

/// Does closed value `v` admit type `t`? Used by the type-preservation
/// checks on evaluation results. `fn_schemes` supplies schemes for declared
/// function values that may occur inside `v`.
pub fn value_has_type(
    v: &Value,
    t: &Type,
    sensors: &SensorTypes,
    fn_schemes: &[(Ident, TypeScheme)],
) -> bool {
    let mut ctx = InferCtx::new(sensors, None);
    for (name, scheme) in fn_schemes {
        ctx.schemes.insert(name.clone(), scheme.clone());
    }
    match ctx.value_type(v, arrow_arity(t)) {
        Ok(vt) => {
            // The value's type must be at least as general: unify after
            // renaming `t`'s variables fresh.
            let mut vars = Vec::new();
            t.free_vars(&mut vars);
            let scheme = TypeScheme {
                vars,
                body: t.clone(),
            };
            let t2 = ctx.instantiate(&scheme);
            ctx.subst.unify(&vt, &t2, None).is_ok()
        }
        Err(_) => false,
    }
}

fn arrow_arity(t: &Type) -> usize {
    match t {
        Type::Arrow(args, _) => args.len() + 1,
        _ => 1,
    }
}
