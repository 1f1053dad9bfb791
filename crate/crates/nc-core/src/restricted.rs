//! The restricted four-kind type system shared by the aligned fragments of
//! both calculi, plus the erasure map back to plain types.
//!
//! Types are split into four categories: general `T`, local `L` (storable in
//! variables captured by functions), return `R` (allowed as function
//! results) and local-return `S` (both). `field<S>` wraps local-return types
//! only and is a return type but not local; arrows returning fields are
//! local but not return types. Type variables carry a kind (`t`, `l`, `r`,
//! `s`) and unification demotes kinds as constraints accumulate.
//!
//! Checking runs in two modes: [`Mode::Hfc`] applies the kind discipline
//! only, while [`Mode::Aligned`] additionally requires rep updates to be
//! literal lambdas and free variables of fold bodies to be local — the
//! restrictions that make a program mean the same thing under both
//! evaluators.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::ast::{Builtin, Expr, ExprKind, FunValue, Ident, ListVal, NodeId, Program, Value};
use crate::parser::SourceSpan;
use crate::typing::{SensorTypes, TvId, Type};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RvId(pub u32);

/// Variable kinds: `Any` = t, `Local` = l, `Return` = r, `LocalReturn` = s.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Any,
    Local,
    Return,
    LocalReturn,
}

impl Kind {
    pub fn letter(self) -> char {
        match self {
            Kind::Any => 't',
            Kind::Local => 'l',
            Kind::Return => 'r',
            Kind::LocalReturn => 's',
        }
    }

    /// Greatest lower bound: the kind satisfying both requirements.
    fn meet(self, other: Kind) -> Kind {
        use Kind::*;
        match (self, other) {
            (Any, k) | (k, Any) => k,
            (Local, Local) => Local,
            (Return, Return) => Return,
            _ => LocalReturn,
        }
    }

    /// Does a variable of kind `self` already satisfy requirement `req`?
    fn satisfies(self, req: Kind) -> bool {
        self.meet(req) == self
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RType {
    Var(RvId),
    Num,
    Bool,
    Pair(Box<RType>, Box<RType>),
    List(Box<RType>),
    Arrow(Vec<RType>, Box<RType>),
    Field(Box<RType>),
}

impl RType {
    pub fn arrow(args: Vec<RType>, ret: RType) -> RType {
        RType::Arrow(args, Box::new(ret))
    }
    pub fn pair(a: RType, b: RType) -> RType {
        RType::Pair(Box::new(a), Box::new(b))
    }
    pub fn list(e: RType) -> RType {
        RType::List(Box::new(e))
    }
    pub fn field(s: RType) -> RType {
        RType::Field(Box::new(s))
    }

    fn free_vars(&self, acc: &mut Vec<RvId>) {
        match self {
            RType::Var(v) => {
                if !acc.contains(v) {
                    acc.push(*v);
                }
            }
            RType::Num | RType::Bool => {}
            RType::Pair(a, b) => {
                a.free_vars(acc);
                b.free_vars(acc);
            }
            RType::List(e) => e.free_vars(acc),
            RType::Field(s) => s.free_vars(acc),
            RType::Arrow(args, ret) => {
                for a in args {
                    a.free_vars(acc);
                }
                ret.free_vars(acc);
            }
        }
    }
}

/// Renders with kind-letter variables, e.g. `(bool, () -> field<num>) -> num`.
pub struct RTypeDisplay<'a> {
    pub ty: &'a RType,
    pub kinds: &'a KindTable,
}

impl fmt::Display for RTypeDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn go(t: &RType, kinds: &KindTable, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            match t {
                RType::Var(v) => write!(f, "{}{}", kinds.kind(*v).letter(), v.0),
                RType::Num => write!(f, "num"),
                RType::Bool => write!(f, "bool"),
                RType::Pair(a, b) => {
                    write!(f, "pair<")?;
                    go(a, kinds, f)?;
                    write!(f, ", ")?;
                    go(b, kinds, f)?;
                    write!(f, ">")
                }
                RType::List(e) => {
                    write!(f, "list<")?;
                    go(e, kinds, f)?;
                    write!(f, ">")
                }
                RType::Field(s) => {
                    write!(f, "field<")?;
                    go(s, kinds, f)?;
                    write!(f, ">")
                }
                RType::Arrow(args, ret) => {
                    write!(f, "(")?;
                    for (i, a) in args.iter().enumerate() {
                        if i > 0 {
                            write!(f, ", ")?;
                        }
                        go(a, kinds, f)?;
                    }
                    write!(f, ") -> ")?;
                    go(ret, kinds, f)
                }
            }
        }
        go(self.ty, self.kinds, f)
    }
}

/// Why a locality/kind demand was made; reported verbatim on failure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Demand {
    LambdaCapture(Ident),
    FoldCapture(Ident),
    RepLocalReturn,
    NbrBody,
    FoldOperands,
    FunctionResult,
    BuiltinSignature,
    DataComponent,
}

#[derive(Debug, thiserror::Error)]
pub enum FragmentError {
    #[error("{}anonymous function captures `{name}` of field type `{ty}`", at(.span))]
    FieldCaptureInLambda {
        name: String,
        ty: String,
        span: Option<SourceSpan>,
    },
    #[error("{}foldhood body captures `{name}` of field type `{ty}`", at(.span))]
    FieldCaptureInFold {
        name: String,
        ty: String,
        span: Option<SourceSpan>,
    },
    #[error("{}rep requires a local-return type, got `{ty}`", at(.span))]
    RepNonLocalReturn { ty: String, span: Option<SourceSpan> },
    #[error("{}rep update must be a literal one-argument anonymous function", at(.span))]
    RepUpdateNotLambda { span: Option<SourceSpan> },
    #[error("{}nbr body must have local-return type; `{ty}` nests a field inside a field", at(.span))]
    FieldOfField { ty: String, span: Option<SourceSpan> },
    #[error("{}`{ty}` is not a {req} type ({context})", at(.span))]
    KindMismatch {
        ty: String,
        req: String,
        context: String,
        span: Option<SourceSpan>,
    },
    #[error("{}type mismatch: `{left}` vs `{right}`", at(.span))]
    Mismatch {
        left: String,
        right: String,
        span: Option<SourceSpan>,
    },
    #[error("{}occurs check failed in `{ty}`", at(.span))]
    Occurs { ty: String, span: Option<SourceSpan> },
    #[error("unknown sensor `{0}`")]
    UnknownSensor(String),
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
}

fn at(span: &Option<SourceSpan>) -> String {
    match span {
        Some(s) => format!("{}: ", s),
        None => String::new(),
    }
}

/// Which alternative of the fold body rule applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FoldBranch {
    FieldBody,
    LocalBody,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Kind discipline only (the unrestricted higher-order calculus).
    Hfc,
    /// Full aligned-fragment checks (shared by both calculi).
    Aligned,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RScheme {
    pub vars: Vec<(RvId, Kind)>,
    pub body: RType,
}

impl RScheme {
    fn mono(t: RType) -> RScheme {
        RScheme { vars: vec![], body: t }
    }
}

#[derive(Debug, Clone, Default)]
pub struct KindTable {
    kinds: Vec<Kind>,
}

impl KindTable {
    pub fn kind(&self, v: RvId) -> Kind {
        self.kinds[v.0 as usize]
    }
}

// ---------------------------------------------------------------------------
// Built-in restricted schemes
// ---------------------------------------------------------------------------

/// Restricted scheme of a built-in. Only `map` and the fold construct accept
/// field arguments; relational sensors yield fields; `consthood` builds one.
/// These erase to the plain schemes in the erased table.
fn builtin_rscheme(
    b: &Builtin,
    arity: usize,
    sensors: &SensorTypes,
    checker: &mut Checker,
) -> Result<RScheme, FragmentError> {
    use RType::*;
    let v = |n: u32| RType::Var(RvId(n));
    let s_scheme = |nvars: u32, args: Vec<RType>, ret: RType| RScheme {
        vars: (0..nvars).map(|n| (RvId(n), Kind::LocalReturn)).collect(),
        body: RType::arrow(args, ret),
    };
    Ok(match b {
        Builtin::Add | Builtin::Sub | Builtin::Mul | Builtin::Div => {
            s_scheme(0, vec![Num, Num], Num)
        }
        Builtin::Lt | Builtin::Le | Builtin::Gt | Builtin::Ge => {
            s_scheme(0, vec![Num, Num], Bool)
        }
        Builtin::Eq | Builtin::Ne => s_scheme(1, vec![v(0), v(0)], Bool),
        Builtin::And | Builtin::Or => s_scheme(0, vec![Bool, Bool], Bool),
        Builtin::Not => s_scheme(0, vec![Bool], Bool),
        Builtin::Min | Builtin::Max => s_scheme(1, vec![v(0), v(0)], v(0)),
        Builtin::Mux => s_scheme(1, vec![Bool, v(0), v(0)], v(0)),
        Builtin::Pair => s_scheme(2, vec![v(0), v(1)], RType::pair(v(0), v(1))),
        Builtin::Fst => s_scheme(2, vec![RType::pair(v(0), v(1))], v(0)),
        Builtin::Snd => s_scheme(2, vec![RType::pair(v(0), v(1))], v(1)),
        Builtin::Cons => s_scheme(1, vec![v(0), RType::list(v(0))], RType::list(v(0))),
        Builtin::Head => s_scheme(1, vec![RType::list(v(0))], v(0)),
        Builtin::Tail => s_scheme(1, vec![RType::list(v(0))], RType::list(v(0))),
        Builtin::Consthood => s_scheme(1, vec![v(0)], RType::field(v(0))),
        Builtin::Map => {
            let k = arity.saturating_sub(1).max(1);
            let vars: Vec<(RvId, Kind)> = (0..=k as u32)
                .map(|n| (RvId(n), Kind::LocalReturn))
                .collect();
            let elems: Vec<RType> = (0..k as u32).map(v).collect();
            let f = RType::arrow(elems.clone(), v(k as u32));
            let mut args = vec![f];
            args.extend(elems.into_iter().map(RType::field));
            RScheme {
                vars,
                body: RType::arrow(args, RType::field(v(k as u32))),
            }
        }
        Builtin::Sensor(name) => {
            let t = sensors
                .types
                .get(name)
                .ok_or_else(|| FragmentError::UnknownSensor(name.to_string()))?;
            RScheme::mono(RType::arrow(vec![], checker.rtype_of(t)))
        }
        Builtin::RelationalSensor(name) => {
            let t = sensors
                .types
                .get(name)
                .ok_or_else(|| FragmentError::UnknownSensor(name.to_string()))?;
            RScheme::mono(RType::arrow(vec![], RType::field(checker.rtype_of(t))))
        }
    })
}

// ---------------------------------------------------------------------------
// Checker
// ---------------------------------------------------------------------------

struct Checker<'a> {
    mode: Mode,
    sensors: &'a SensorTypes,
    spans: Option<&'a BTreeMap<NodeId, SourceSpan>>,
    bindings: Vec<Option<RType>>,
    kinds: Vec<Kind>,
    /// Why each variable's kind was last demoted; reused when the demotion
    /// later conflicts with a concrete type, so the original restriction is
    /// the one reported.
    reasons: Vec<Option<Demand>>,
    schemes: BTreeMap<Ident, RScheme>,
    fold_branches: BTreeMap<NodeId, FoldBranch>,
}

impl<'a> Checker<'a> {
    fn fresh(&mut self, kind: Kind) -> RType {
        self.bindings.push(None);
        self.kinds.push(kind);
        self.reasons.push(None);
        RType::Var(RvId(self.bindings.len() as u32 - 1))
    }

    fn span_of(&self, e: &Expr) -> Option<SourceSpan> {
        self.spans.and_then(|s| s.get(&e.id).cloned())
    }

    /// Convert a plain (sensor-declared) type into a restricted one; data
    /// types convert directly, arrows get local-return results.
    fn rtype_of(&mut self, t: &Type) -> RType {
        match t {
            Type::Var(_) => self.fresh(Kind::LocalReturn),
            Type::Num => RType::Num,
            Type::Bool => RType::Bool,
            Type::Pair(a, b) => RType::pair(self.rtype_of(a), self.rtype_of(b)),
            Type::List(e) => RType::list(self.rtype_of(e)),
            Type::Arrow(args, ret) => RType::Arrow(
                args.iter().map(|a| self.rtype_of(a)).collect(),
                Box::new(self.rtype_of(ret)),
            ),
        }
    }

    fn resolve_shallow(&self, mut t: RType) -> RType {
        while let RType::Var(RvId(n)) = t {
            match &self.bindings[n as usize] {
                Some(bound) => t = bound.clone(),
                None => return t,
            }
        }
        t
    }

    fn resolve(&self, t: &RType) -> RType {
        let t = self.resolve_shallow(t.clone());
        match t {
            RType::Var(_) | RType::Num | RType::Bool => t,
            RType::Pair(a, b) => RType::pair(self.resolve(&a), self.resolve(&b)),
            RType::List(e) => RType::list(self.resolve(&e)),
            RType::Field(s) => RType::field(self.resolve(&s)),
            RType::Arrow(args, ret) => RType::Arrow(
                args.iter().map(|a| self.resolve(a)).collect(),
                Box::new(self.resolve(&ret)),
            ),
        }
    }

    fn display(&self, t: &RType) -> String {
        let table = KindTable {
            kinds: self.kinds.clone(),
        };
        format!(
            "{}",
            RTypeDisplay {
                ty: &self.resolve(t),
                kinds: &table
            }
        )
    }

    fn occurs(&self, var: RvId, t: &RType) -> bool {
        match self.resolve_shallow(t.clone()) {
            RType::Var(v) => v == var,
            RType::Num | RType::Bool => false,
            RType::Pair(a, b) => self.occurs(var, &a) || self.occurs(var, &b),
            RType::List(e) => self.occurs(var, &e),
            RType::Field(s) => self.occurs(var, &s),
            RType::Arrow(args, ret) => {
                args.iter().any(|a| self.occurs(var, a)) || self.occurs(var, &ret)
            }
        }
    }

    fn demand_error(
        &self,
        t: &RType,
        req: Kind,
        why: &Demand,
        span: Option<SourceSpan>,
    ) -> FragmentError {
        let ty = self.display(t);
        match why {
            Demand::LambdaCapture(name) => FragmentError::FieldCaptureInLambda {
                name: name.to_string(),
                ty,
                span,
            },
            Demand::FoldCapture(name) => FragmentError::FieldCaptureInFold {
                name: name.to_string(),
                ty,
                span,
            },
            Demand::RepLocalReturn => FragmentError::RepNonLocalReturn { ty, span },
            Demand::NbrBody => FragmentError::FieldOfField { ty, span },
            _ => FragmentError::KindMismatch {
                ty,
                req: match req {
                    Kind::Any => "general",
                    Kind::Local => "local",
                    Kind::Return => "return",
                    Kind::LocalReturn => "local-return",
                }
                .into(),
                context: format!("{:?}", why),
                span,
            },
        }
    }

    /// Require `t` to satisfy kind `req`, demoting variable kinds as needed.
    fn demand(
        &mut self,
        t: &RType,
        req: Kind,
        why: &Demand,
        span: Option<&SourceSpan>,
    ) -> Result<(), FragmentError> {
        if req == Kind::Any {
            return Ok(());
        }
        let t = self.resolve_shallow(t.clone());
        match &t {
            RType::Var(v) => {
                let k = self.kinds[v.0 as usize];
                let met = k.meet(req);
                if met != k {
                    self.kinds[v.0 as usize] = met;
                    self.reasons[v.0 as usize] = Some(why.clone());
                }
                Ok(())
            }
            RType::Num | RType::Bool | RType::Pair(..) | RType::List(..) => Ok(()),
            RType::Arrow(_, ret) => match req {
                Kind::Local => Ok(()),
                Kind::Return | Kind::LocalReturn => {
                    self.demand(ret, Kind::LocalReturn, why, span)
                }
                Kind::Any => Ok(()),
            },
            RType::Field(_) => match req {
                Kind::Return => Ok(()),
                Kind::Local | Kind::LocalReturn => {
                    Err(self.demand_error(&t, req, why, span.cloned()))
                }
                Kind::Any => Ok(()),
            },
        }
    }

    fn unify(
        &mut self,
        a: &RType,
        b: &RType,
        span: Option<&SourceSpan>,
    ) -> Result<(), FragmentError> {
        let a = self.resolve_shallow(a.clone());
        let b = self.resolve_shallow(b.clone());
        match (&a, &b) {
            (RType::Var(x), RType::Var(y)) if x == y => Ok(()),
            (RType::Var(x), t) | (t, RType::Var(x)) => {
                if self.occurs(*x, t) {
                    return Err(FragmentError::Occurs {
                        ty: self.display(t),
                        span: span.cloned(),
                    });
                }
                let kind = self.kinds[x.0 as usize];
                let why = self.reasons[x.0 as usize]
                    .clone()
                    .unwrap_or(Demand::BuiltinSignature);
                self.demand(t, kind, &why, span)?;
                self.bindings[x.0 as usize] = Some(t.clone());
                Ok(())
            }
            (RType::Num, RType::Num) | (RType::Bool, RType::Bool) => Ok(()),
            (RType::Pair(a1, b1), RType::Pair(a2, b2)) => {
                self.unify(a1, a2, span)?;
                self.unify(b1, b2, span)
            }
            (RType::List(e1), RType::List(e2)) => self.unify(e1, e2, span),
            (RType::Field(s1), RType::Field(s2)) => self.unify(s1, s2, span),
            (RType::Arrow(args1, r1), RType::Arrow(args2, r2)) => {
                if args1.len() != args2.len() {
                    return Err(FragmentError::Mismatch {
                        left: self.display(&a),
                        right: self.display(&b),
                        span: span.cloned(),
                    });
                }
                for (x, y) in args1.iter().zip(args2) {
                    self.unify(x, y, span)?;
                }
                self.unify(r1, r2, span)
            }
            _ => Err(FragmentError::Mismatch {
                left: self.display(&a),
                right: self.display(&b),
                span: span.cloned(),
            }),
        }
    }

    fn instantiate(&mut self, scheme: &RScheme) -> RType {
        let mut mapping = BTreeMap::new();
        for (v, k) in &scheme.vars {
            mapping.insert(*v, self.fresh(*k));
        }
        fn walk(t: &RType, m: &BTreeMap<RvId, RType>) -> RType {
            match t {
                RType::Var(v) => m.get(v).cloned().unwrap_or_else(|| RType::Var(*v)),
                RType::Num => RType::Num,
                RType::Bool => RType::Bool,
                RType::Pair(a, b) => RType::pair(walk(a, m), walk(b, m)),
                RType::List(e) => RType::list(walk(e, m)),
                RType::Field(s) => RType::field(walk(s, m)),
                RType::Arrow(args, ret) => RType::Arrow(
                    args.iter().map(|x| walk(x, m)).collect(),
                    Box::new(walk(ret, m)),
                ),
            }
        }
        walk(&scheme.body, &mapping)
    }

    fn value_rtype(&mut self, v: &Value, arity_hint: usize) -> Result<RType, FragmentError> {
        Ok(match v {
            Value::Num(_) => RType::Num,
            Value::Bool(_) => RType::Bool,
            Value::Pair(p) => {
                let a = self.value_rtype(&p.0, 0)?;
                let b = self.value_rtype(&p.1, 0)?;
                self.demand(&a, Kind::LocalReturn, &Demand::DataComponent, None)?;
                self.demand(&b, Kind::LocalReturn, &Demand::DataComponent, None)?;
                RType::pair(a, b)
            }
            Value::List(l) => {
                let elem = self.fresh(Kind::LocalReturn);
                let mut cur = l.as_ref();
                while let ListVal::Cons(h, t) = cur {
                    let ht = self.value_rtype(h, 0)?;
                    self.unify(&elem, &ht, None)?;
                    cur = t;
                }
                RType::list(elem)
            }
            Value::Fun(FunValue::Builtin(b)) => {
                let scheme = builtin_rscheme(b, arity_hint, self.sensors, self)?;
                self.instantiate(&scheme)
            }
            Value::Fun(FunValue::Defined(d)) => {
                let scheme = self
                    .schemes
                    .get(d)
                    .cloned()
                    .ok_or_else(|| FragmentError::UnknownFunction(d.to_string()))?;
                self.instantiate(&scheme)
            }
            Value::Fun(FunValue::Anon(l)) => {
                let env = BTreeMap::new();
                self.check_lambda(&env, &l.params, &l.body, None)?
            }
        })
    }

    fn check_lambda(
        &mut self,
        env: &BTreeMap<Ident, RType>,
        params: &[Ident],
        body: &Expr,
        span: Option<SourceSpan>,
    ) -> Result<RType, FragmentError> {
        // Captured variables must be local.
        let mut shadow: Vec<Ident> = params.to_vec();
        let mut captured = std::collections::BTreeSet::new();
        collect_captures(body, &mut shadow, &mut captured);
        for y in &captured {
            if let Some(t) = env.get(y) {
                let t = t.clone();
                self.demand(
                    &t,
                    Kind::Local,
                    &Demand::LambdaCapture(y.clone()),
                    span.as_ref(),
                )?;
            }
        }
        let mut inner = env.clone();
        let param_ts: Vec<RType> = params
            .iter()
            .map(|p| {
                let t = self.fresh(Kind::Any);
                inner.insert(p.clone(), t.clone());
                t
            })
            .collect();
        let body_t = self.check(&inner, body)?;
        self.demand(
            &body_t,
            Kind::Return,
            &Demand::FunctionResult,
            span.as_ref(),
        )?;
        Ok(RType::Arrow(param_ts, Box::new(body_t)))
    }

    fn check(
        &mut self,
        env: &BTreeMap<Ident, RType>,
        e: &Expr,
    ) -> Result<RType, FragmentError> {
        let span = self.span_of(e);
        match &e.kind {
            ExprKind::Var(x) => Ok(env
                .get(x)
                .cloned()
                .unwrap_or_else(|| panic!("unbound variable `{}` reached fragment check", x))),
            ExprKind::Val(v) => self.value_rtype(v, 1),
            ExprKind::Lambda { params, body, .. } => {
                self.check_lambda(env, params, body, span)
            }
            ExprKind::Apply { callee, args } => {
                let callee_t = match &callee.kind {
                    ExprKind::Val(v @ Value::Fun(FunValue::Builtin(_))) => {
                        self.value_rtype(v, args.len())?
                    }
                    _ => self.check(env, callee)?,
                };
                let arg_ts: Vec<RType> = args
                    .iter()
                    .map(|a| self.check(env, a))
                    .collect::<Result<_, _>>()?;
                let ret = self.fresh(Kind::Return);
                let want = RType::Arrow(arg_ts, Box::new(ret.clone()));
                self.unify(&callee_t, &want, span.as_ref())?;
                Ok(ret)
            }
            ExprKind::Rep { init, update } => {
                let t_init = self.check(env, init)?;
                self.demand(
                    &t_init,
                    Kind::LocalReturn,
                    &Demand::RepLocalReturn,
                    span.as_ref(),
                )?;
                match &update.kind {
                    ExprKind::Lambda { params, .. } if params.len() == 1 => {}
                    _ => return Err(FragmentError::RepUpdateNotLambda { span }),
                }
                let t_update = self.check(env, update)?;
                let want = RType::arrow(vec![t_init.clone()], t_init.clone());
                self.unify(&t_update, &want, span.as_ref())?;
                // The rule also forces the update's domain/range local-return.
                self.demand(
                    &t_init,
                    Kind::LocalReturn,
                    &Demand::RepLocalReturn,
                    span.as_ref(),
                )?;
                Ok(t_init)
            }
            ExprKind::Nbr { body } => {
                let t = self.check(env, body)?;
                self.demand(&t, Kind::LocalReturn, &Demand::NbrBody, span.as_ref())?;
                Ok(RType::field(t))
            }
            ExprKind::Foldhood {
                init,
                aggregator,
                body,
            } => {
                let t = self.check(env, init)?;
                self.demand(&t, Kind::LocalReturn, &Demand::FoldOperands, span.as_ref())?;
                let t_aggr = self.check(env, aggregator)?;
                let want = RType::arrow(vec![t.clone(), t.clone()], t.clone());
                self.unify(&t_aggr, &want, span.as_ref())?;
                if self.mode == Mode::Aligned {
                    for y in crate::ast::free_vars(body) {
                        if let Some(ty) = env.get(&y) {
                            let ty = ty.clone();
                            self.demand(
                                &ty,
                                Kind::Local,
                                &Demand::FoldCapture(y.clone()),
                                span.as_ref(),
                            )?;
                        }
                    }
                }
                let t_body = self.check(env, body)?;
                // Body may be a field of the element type or the element
                // type itself; try the field alternative first.
                let snapshot = (
                    self.bindings.clone(),
                    self.kinds.clone(),
                    self.reasons.clone(),
                );
                let as_field = RType::field(t.clone());
                match self.unify(&t_body, &as_field, span.as_ref()) {
                    Ok(()) => {
                        self.fold_branches.insert(e.id, FoldBranch::FieldBody);
                    }
                    Err(_) => {
                        self.bindings = snapshot.0;
                        self.kinds = snapshot.1;
                        self.reasons = snapshot.2;
                        self.unify(&t_body, &t, span.as_ref())?;
                        self.fold_branches.insert(e.id, FoldBranch::LocalBody);
                    }
                }
                Ok(t)
            }
        }
    }
}

fn collect_captures(
    e: &Expr,
    bound: &mut Vec<Ident>,
    acc: &mut std::collections::BTreeSet<Ident>,
) {
    match &e.kind {
        ExprKind::Var(x) => {
            if !bound.iter().any(|b| b == x) {
                acc.insert(x.clone());
            }
        }
        ExprKind::Val(Value::Fun(FunValue::Anon(l))) => {
            let n = bound.len();
            bound.extend(l.params.iter().cloned());
            collect_captures(&l.body, bound, acc);
            bound.truncate(n);
        }
        ExprKind::Val(_) => {}
        ExprKind::Lambda { params, body, .. } => {
            let n = bound.len();
            bound.extend(params.iter().cloned());
            collect_captures(body, bound, acc);
            bound.truncate(n);
        }
        ExprKind::Apply { callee, args } => {
            collect_captures(callee, bound, acc);
            for a in args {
                collect_captures(a, bound, acc);
            }
        }
        ExprKind::Rep { init, update } => {
            collect_captures(init, bound, acc);
            collect_captures(update, bound, acc);
        }
        ExprKind::Nbr { body } => collect_captures(body, bound, acc),
        ExprKind::Foldhood {
            init,
            aggregator,
            body,
        } => {
            collect_captures(init, bound, acc);
            collect_captures(aggregator, bound, acc);
            collect_captures(body, bound, acc);
        }
    }
}

// ---------------------------------------------------------------------------
// Program-level checking and reports
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub struct FragmentReport {
    pub functions: Vec<(Ident, RScheme, KindTable)>,
    pub main: RType,
    pub main_kinds: KindTable,
    /// Which alternative of the fold body rule fired, per foldhood node.
    pub fold_branches: BTreeMap<NodeId, FoldBranch>,
}

impl FragmentReport {
    pub fn display_main(&self) -> String {
        format!(
            "{}",
            RTypeDisplay {
                ty: &self.main,
                kinds: &self.main_kinds
            }
        )
    }

    pub fn display_function(&self, name: &str) -> Option<String> {
        self.functions.iter().find(|(n, _, _)| n.as_ref() == name).map(
            |(_, scheme, kinds)| {
                format!(
                    "{}",
                    RTypeDisplay {
                        ty: &scheme.body,
                        kinds
                    }
                )
            },
        )
    }
}

/// Check a whole program against the restricted type system.
pub fn check_program(
    program: &Program,
    sensors: &SensorTypes,
    spans: Option<&BTreeMap<NodeId, SourceSpan>>,
    mode: Mode,
) -> Result<FragmentReport, FragmentError> {
    let mut checker = Checker {
        mode,
        sensors,
        spans,
        bindings: Vec::new(),
        kinds: Vec::new(),
        reasons: Vec::new(),
        schemes: BTreeMap::new(),
        fold_branches: BTreeMap::new(),
    };
    let mut functions = Vec::new();
    for f in &program.functions {
        let mut env = BTreeMap::new();
        let params: Vec<RType> = f
            .params
            .iter()
            .map(|p| {
                let t = checker.fresh(Kind::Any);
                env.insert(p.clone(), t.clone());
                t
            })
            .collect();
        let ret = checker.fresh(Kind::Return);
        let self_type = RType::Arrow(params.clone(), Box::new(ret.clone()));
        checker
            .schemes
            .insert(f.name.clone(), RScheme::mono(self_type.clone()));
        let body_t = checker.check(&env, &f.body)?;
        checker.unify(&body_t, &ret, None)?;
        let resolved = checker.resolve(&self_type);
        let mut vars = Vec::new();
        resolved.free_vars(&mut vars);
        let scheme = RScheme {
            vars: vars
                .into_iter()
                .map(|v| (v, checker.kinds[v.0 as usize]))
                .collect(),
            body: resolved,
        };
        checker.schemes.insert(f.name.clone(), scheme.clone());
        let table = KindTable {
            kinds: checker.kinds.clone(),
        };
        functions.push((f.name.clone(), scheme, table));
    }
    let main = checker.check(&BTreeMap::new(), &program.main)?;
    let main = checker.resolve(&main);
    Ok(FragmentReport {
        functions,
        main,
        main_kinds: KindTable {
            kinds: checker.kinds.clone(),
        },
        fold_branches: checker.fold_branches,
    })
}

/// Check a single expression under given restricted assumptions.
pub fn check_expr(
    sensors: &SensorTypes,
    env_schemes: &BTreeMap<Ident, RScheme>,
    env: &BTreeMap<Ident, RType>,
    e: &Expr,
    mode: Mode,
) -> Result<(RType, KindTable), FragmentError> {
    let mut checker = Checker {
        mode,
        sensors,
        spans: None,
        bindings: Vec::new(),
        kinds: Vec::new(),
        reasons: Vec::new(),
        schemes: env_schemes.clone(),
        fold_branches: BTreeMap::new(),
    };
    let t = checker.check(env, e)?;
    let t = checker.resolve(&t);
    Ok((
        t,
        KindTable {
            kinds: checker.kinds,
        },
    ))
}

// ---------------------------------------------------------------------------
// Erasure
// ---------------------------------------------------------------------------

/// Replace `field<S>` by `S` and collapse all variable kinds to plain type
/// variables.
pub fn erase(rt: &RType) -> Type {
    match rt {
        RType::Var(RvId(n)) => Type::Var(TvId(*n)),
        RType::Num => Type::Num,
        RType::Bool => Type::Bool,
        RType::Pair(a, b) => Type::pair(erase(a), erase(b)),
        RType::List(e) => Type::list(erase(e)),
        RType::Field(s) => erase(s),
        RType::Arrow(args, ret) => {
            Type::Arrow(args.iter().map(erase).collect(), Box::new(erase(ret)))
        }
    }
}

/// Erase a restricted scheme to a plain scheme.
pub fn erase_scheme(rs: &RScheme) -> crate::typing::TypeScheme {
    crate::typing::TypeScheme {
        vars: rs.vars.iter().map(|(RvId(n), _)| TvId(*n)).collect(),
        body: erase(&rs.body),
    }
}

/// Erase a restricted type environment.
pub fn erase_env(env: &BTreeMap<Ident, RType>) -> BTreeMap<Ident, Type> {
    env.iter().map(|(k, v)| (k.clone(), erase(v))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn erase_examples() {
        // field<num> -> num
        assert_eq!(erase(&RType::field(RType::Num)), Type::Num);
        // (bool) -> field<num>  ->  (bool) -> num
        let t = RType::arrow(vec![RType::Bool], RType::field(RType::Num));
        assert_eq!(
            erase(&t),
            Type::arrow(vec![Type::Bool], Type::Num)
        );
        // num is a fixed point
        assert_eq!(erase(&RType::Num), Type::Num);
    }

    #[test]
    fn kind_meet_laws() {
        use Kind::*;
        assert_eq!(Any.meet(Local), Local);
        assert_eq!(Local.meet(Return), LocalReturn);
        assert_eq!(Return.meet(LocalReturn), LocalReturn);
        assert!(LocalReturn.satisfies(Local));
        assert!(LocalReturn.satisfies(Return));
        assert!(!Local.satisfies(Return));
        assert!(!Return.satisfies(Local));
    }
}
