//! Big-step device evaluation: one firing of an expression on a device
//! against a neighbour, producing a value-tree.
//!
//! Evaluation against the device itself (`nbr_id == self_id`) is total on
//! well-typed closed programs; evaluation against a neighbour may yield
//! [`EvalOutcome::Fail`] when the neighbour is missing from the aligned
//! environment of an `nbr` expression or relational-sensor call, in which
//! case the enclosing fold skips that neighbour.
//!
//! `rep` and `foldhood` outcomes do not depend on the neighbour the
//! expression is evaluated against, so they are memoised per firing, keyed
//! by expression node and (pointer-identical) environment.

use std::cell::{Cell, RefCell};
use std::collections::{BTreeMap, HashMap};
use std::rc::Rc;
use std::sync::Arc;

use crate::ast::{
    substitute, Builtin, DeviceId, Expr, ExprKind, FunValue, Ident, LambdaVal, ListVal, NodeId,
    Program, Value,
};
use crate::tree::{root, Tree, ValueTree, ValueTreeEnv};

// ---------------------------------------------------------------------------
// Sensor state
// ---------------------------------------------------------------------------

/// Values a relational sensor yields per neighbour, with an optional default
/// for neighbours outside the table (stale entries about departed devices).
#[derive(Debug, Clone, Default)]
pub struct RelTable {
    pub entries: BTreeMap<DeviceId, Value>,
    pub default: Option<Value>,
}

impl RelTable {
    pub fn lookup(&self, d: DeviceId) -> Option<Value> {
        self.entries
            .get(&d)
            .cloned()
            .or_else(|| self.default.clone())
    }
}

/// Per-device sensor state for one firing: local sensor values and
/// relational sensor tables.
#[derive(Debug, Clone, Default)]
pub struct SensorState {
    pub locals: BTreeMap<Ident, Value>,
    pub relationals: BTreeMap<Ident, RelTable>,
}

impl SensorState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_local(mut self, name: &str, v: Value) -> Self {
        self.locals.insert(Arc::from(name), v);
        self
    }

    pub fn with_relational(mut self, name: &str, table: RelTable) -> Self {
        self.relationals.insert(Arc::from(name), table);
        self
    }
}

// ---------------------------------------------------------------------------
// Outcomes and errors
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub enum EvalOutcome {
    Tree(Rc<ValueTree>),
    Fail,
}

impl EvalOutcome {
    pub fn tree(&self) -> Option<Rc<ValueTree>> {
        match self {
            EvalOutcome::Tree(t) => Some(t.clone()),
            EvalOutcome::Fail => None,
        }
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("step budget exhausted ({0} rule applications)")]
    StepBudget(u64),
    #[error("runtime error: {0}")]
    Runtime(String),
    #[error("internal evaluation error: {0}")]
    Internal(String),
}

#[derive(Debug, Clone, Copy)]
pub struct EvalConfig {
    /// Maximum number of evaluation-rule applications per firing.
    pub step_budget: u64,
    pub memoise: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            step_budget: 1_000_000,
            memoise: true,
        }
    }
}

// ---------------------------------------------------------------------------
// Evaluator
// ---------------------------------------------------------------------------

pub struct Evaluator<'a> {
    program: &'a Program,
    config: EvalConfig,
    steps: Cell<u64>,
    memo: RefCell<HashMap<(usize, usize), Rc<ValueTree>>>,
}

impl<'a> Evaluator<'a> {
    pub fn new(program: &'a Program) -> Self {
        Self::with_config(program, EvalConfig::default())
    }

    pub fn with_config(program: &'a Program, config: EvalConfig) -> Self {
        Evaluator {
            program,
            config,
            steps: Cell::new(0),
            memo: RefCell::new(HashMap::new()),
        }
    }

    /// One firing: evaluate the main expression on `device` against itself.
    /// Never observes `Fail`.
    pub fn fire(
        &self,
        device: DeviceId,
        env: &ValueTreeEnv,
        sensors: &SensorState,
    ) -> Result<Rc<ValueTree>, EvalError> {
        match self.evaluate(device, device, env, sensors, &self.program.main)? {
            EvalOutcome::Tree(t) => Ok(t),
            EvalOutcome::Fail => Err(EvalError::Internal(
                "evaluation against the device itself failed".into(),
            )),
        }
    }

    /// Evaluate `expr` on `device` against `nbr`. Resets the per-firing step
    /// budget and memo table.
    pub fn evaluate(
        &self,
        device: DeviceId,
        nbr: DeviceId,
        env: &ValueTreeEnv,
        sensors: &SensorState,
        expr: &Expr,
    ) -> Result<EvalOutcome, EvalError> {
        self.steps.set(0);
        self.memo.borrow_mut().clear();
        self.eval(device, nbr, env, sensors, expr)
    }

    fn tick(&self) -> Result<(), EvalError> {
        let n = self.steps.get() + 1;
        if n > self.config.step_budget {
            return Err(EvalError::StepBudget(self.config.step_budget));
        }
        self.steps.set(n);
        Ok(())
    }

    fn eval(
        &self,
        device: DeviceId,
        nbr: DeviceId,
        env: &ValueTreeEnv,
        sensors: &SensorState,
        expr: &Expr,
    ) -> Result<EvalOutcome, EvalError> {
        self.tick()?;
        match &expr.kind {
            ExprKind::Var(x) => Err(EvalError::Internal(format!(
                "unsubstituted variable `{}`",
                x
            ))),
            ExprKind::Val(v) => Ok(EvalOutcome::Tree(Tree::leaf(v.clone()))),
            ExprKind::Lambda { params, tag, body } => {
                if tag.is_none() {
                    return Err(EvalError::Internal(
                        "anonymous function reached evaluation untagged".into(),
                    ));
                }
                Ok(EvalOutcome::Tree(Tree::leaf(Value::Fun(FunValue::Anon(
                    Arc::new(LambdaVal {
                        params: params.clone(),
                        tag: tag.clone(),
                        body: body.clone(),
                    }),
                )))))
            }
            ExprKind::Apply { callee, args } => {
                self.eval_apply(device, nbr, env, sensors, callee, args)
            }
            ExprKind::Rep { init, update } => {
                let key = (Arc::as_ptr(expr) as *const u8 as usize, env.key());
                if self.config.memoise {
                    if let Some(hit) = self.memo.borrow().get(&key) {
                        return Ok(EvalOutcome::Tree(hit.clone()));
                    }
                }
                let init_tree = self
                    .eval(device, device, &env.proj_i(1), sensors, init)?
                    .tree()
                    .ok_or_else(|| {
                        EvalError::Internal("self evaluation of rep init failed".into())
                    })?;
                let prev = env.proj_i(2).get(device).map(|t| root(&t));
                let v0 = prev.unwrap_or_else(|| root(&init_tree));
                let call = Arc::new(crate::ast::ExprNode {
                    kind: ExprKind::Apply {
                        callee: update.clone(),
                        args: vec![Arc::new(crate::ast::ExprNode {
                            kind: ExprKind::Val(v0),
                            id: NodeId(u32::MAX),
                        })],
                    },
                    id: NodeId(u32::MAX),
                });
                let update_tree = self
                    .eval(device, device, &env.proj_i(2), sensors, &call)?
                    .tree()
                    .ok_or_else(|| {
                        EvalError::Internal("self evaluation of rep update failed".into())
                    })?;
                let tree = Tree::node(root(&update_tree), vec![init_tree, update_tree]);
                if self.config.memoise {
                    self.memo.borrow_mut().insert(key, tree.clone());
                }
                Ok(EvalOutcome::Tree(tree))
            }
            ExprKind::Nbr { body } => {
                if nbr == device {
                    let t = self
                        .eval(device, device, &env.proj_i(1), sensors, body)?
                        .tree()
                        .ok_or_else(|| {
                            EvalError::Internal("self evaluation of nbr body failed".into())
                        })?;
                    Ok(EvalOutcome::Tree(Tree::node(root(&t), vec![t])))
                } else {
                    match env.get(nbr) {
                        Some(stored) => Ok(EvalOutcome::Tree(stored)),
                        None => Ok(EvalOutcome::Fail),
                    }
                }
            }
            ExprKind::Foldhood {
                init,
                aggregator,
                body,
            } => {
                let key = (Arc::as_ptr(expr) as *const u8 as usize, env.key());
                if self.config.memoise {
                    if let Some(hit) = self.memo.borrow().get(&key) {
                        return Ok(EvalOutcome::Tree(hit.clone()));
                    }
                }
                let init_tree = self
                    .eval(device, device, &env.proj_i(1), sensors, init)?
                    .tree()
                    .ok_or_else(|| {
                        EvalError::Internal("self evaluation of fold init failed".into())
                    })?;
                let aggr_tree = self
                    .eval(device, device, &env.proj_i(2), sensors, aggregator)?
                    .tree()
                    .ok_or_else(|| {
                        EvalError::Internal("self evaluation of fold aggregator failed".into())
                    })?;
                let f = match root(&aggr_tree) {
                    Value::Fun(f) => f,
                    other => {
                        return Err(EvalError::Internal(format!(
                            "fold aggregator evaluated to non-function `{}`",
                            other
                        )))
                    }
                };
                let env3 = env.proj_i(3);
                let self_tree = self
                    .eval(device, device, &env3, sensors, body)?
                    .tree()
                    .ok_or_else(|| {
                        EvalError::Internal("self evaluation of fold body failed".into())
                    })?;
                let mut acc = root(&init_tree);
                for d in env3.domain() {
                    if d == device {
                        continue;
                    }
                    match self.eval(device, d, &env3, sensors, body)? {
                        EvalOutcome::Tree(t) => {
                            acc = self.pure_apply(device, sensors, &f, &[acc, root(&t)])?;
                        }
                        EvalOutcome::Fail => {}
                    }
                }
                let tree = Tree::node(acc, vec![init_tree, aggr_tree, self_tree]);
                if self.config.memoise {
                    self.memo.borrow_mut().insert(key, tree.clone());
                }
                Ok(EvalOutcome::Tree(tree))
            }
        }
    }

    fn eval_apply(
        &self,
        device: DeviceId,
        nbr: DeviceId,
        env: &ValueTreeEnv,
        sensors: &SensorState,
        callee: &Expr,
        args: &[Expr],
    ) -> Result<EvalOutcome, EvalError> {
        // The callee is evaluated against the device itself.
        let callee_tree = self
            .eval(device, device, &env.proj_i(1), sensors, callee)?
            .tree()
            .ok_or_else(|| EvalError::Internal("self evaluation of callee failed".into()))?;
        let f = match root(&callee_tree) {
            Value::Fun(f) => f,
            other => {
                return Err(EvalError::Internal(format!(
                    "applied non-function value `{}`",
                    other
                )))
            }
        };
        let mut arg_trees = Vec::with_capacity(args.len());
        for (i, a) in args.iter().enumerate() {
            match self.eval(device, nbr, &env.proj_i(i + 2), sensors, a)? {
                EvalOutcome::Tree(t) => arg_trees.push(t),
                EvalOutcome::Fail => return Ok(EvalOutcome::Fail),
            }
        }
        let arg_roots: Vec<Value> = arg_trees.iter().map(|t| root(t)).collect();
        match &f {
            FunValue::Builtin(b) => {
                let env_b = env.proj_f(b.name());
                if b.kind() == crate::ast::BuiltinKind::RelationalSensor
                    && nbr != device
                    && !env_b.contains(nbr)
                {
                    return Ok(EvalOutcome::Fail);
                }
                let v = self.apply_builtin(b, device, nbr, &env_b, sensors, &arg_roots)?;
                let mut children = vec![callee_tree];
                children.extend(arg_trees);
                children.push(Tree::leaf(v.clone()));
                Ok(EvalOutcome::Tree(Tree::node(v, children)))
            }
            FunValue::Defined(_) | FunValue::Anon(_) => {
                let params = crate::ast::function_args(&f, self.program)
                    .map_err(|e| EvalError::Internal(e.to_string()))?;
                if params.len() != arg_roots.len() {
                    return Err(EvalError::Runtime(format!(
                        "`{}` expects {} arguments, got {}",
                        f.name(),
                        params.len(),
                        arg_roots.len()
                    )));
                }
                let body = crate::ast::function_body(&f, self.program)
                    .map_err(|e| EvalError::Internal(e.to_string()))?;
                let bindings: BTreeMap<Ident, Value> = params
                    .iter()
                    .cloned()
                    .zip(arg_roots.iter().cloned())
                    .collect();
                let substituted = substitute(&body, &bindings);
                let env_f = env.proj_f(&f.name());
                match self.eval(device, nbr, &env_f, sensors, &substituted)? {
                    EvalOutcome::Fail => Ok(EvalOutcome::Fail),
                    EvalOutcome::Tree(body_tree) => {
                        let mut children = vec![callee_tree];
                        children.extend(arg_trees);
                        children.push(body_tree.clone());
                        Ok(EvalOutcome::Tree(Tree::node(root(&body_tree), children)))
                    }
                }
            }
        }
    }

    /// Apply a function value to argument values with respect to the device
    /// itself and the empty environment (how fold aggregators and pointwise
    /// `map` run).
    pub fn pure_apply(
        &self,
        device: DeviceId,
        sensors: &SensorState,
        f: &FunValue,
        args: &[Value],
    ) -> Result<Value, EvalError> {
        self.tick()?;
        match f {
            FunValue::Builtin(b) => {
                self.apply_builtin(b, device, device, &ValueTreeEnv::empty(), sensors, args)
            }
            FunValue::Defined(_) | FunValue::Anon(_) => {
                let params = crate::ast::function_args(f, self.program)
                    .map_err(|e| EvalError::Internal(e.to_string()))?;
                if params.len() != args.len() {
                    return Err(EvalError::Runtime(format!(
                        "`{}` expects {} arguments, got {}",
                        f.name(),
                        params.len(),
                        args.len()
                    )));
                }
                let body = crate::ast::function_body(f, self.program)
                    .map_err(|e| EvalError::Internal(e.to_string()))?;
                let bindings: BTreeMap<Ident, Value> =
                    params.iter().cloned().zip(args.iter().cloned()).collect();
                let substituted = substitute(&body, &bindings);
                match self.eval(
                    device,
                    device,
                    &ValueTreeEnv::empty(),
                    sensors,
                    &substituted,
                )? {
                    EvalOutcome::Tree(t) => Ok(root(&t)),
                    EvalOutcome::Fail => Err(EvalError::Internal(
                        "pure application failed against the device itself".into(),
                    )),
                }
            }
        }
    }

    fn apply_builtin(
        &self,
        b: &Builtin,
        device: DeviceId,
        nbr: DeviceId,
        env_b: &ValueTreeEnv,
        sensors: &SensorState,
        args: &[Value],
    ) -> Result<Value, EvalError> {
        let _ = env_b;
        apply_pure_builtin(b, args, || self.map_apply(device, sensors, args)).and_then(|v| match v
        {
            Some(v) => Ok(v),
            None => match b {
                Builtin::Sensor(name) => sensors.locals.get(name).cloned().ok_or_else(|| {
                    EvalError::Runtime(format!("unresolved sensor `{}` on device {}", name, device))
                }),
                Builtin::RelationalSensor(name) => sensors
                    .relationals
                    .get(name)
                    .and_then(|t| t.lookup(nbr))
                    .ok_or_else(|| {
                        EvalError::Runtime(format!(
                            "unresolved relational sensor `{}` for neighbour {}",
                            name, nbr
                        ))
                    }),
                _ => Err(EvalError::Internal(format!(
                    "built-in `{}` applied to ill-typed arguments",
                    b.name()
                ))),
            },
        })
    }

    fn map_apply(
        &self,
        device: DeviceId,
        sensors: &SensorState,
        args: &[Value],
    ) -> Result<Value, EvalError> {
        let f = match args.first().and_then(|v| v.as_fun()) {
            Some(f) => f.clone(),
            None => {
                return Err(EvalError::Runtime(
                    "map expects a function as first argument".into(),
                ))
            }
        };
        self.pure_apply(device, sensors, &f, &args[1..])
    }
}

/// Shared interpretation of the pure operators; returns `Ok(None)` for
/// built-ins that need sensor state (handled by the caller) and `Err` on
/// argument type misuse. `map_fallback` runs the `map` application in the
/// caller's evaluator.
pub fn apply_pure_builtin(
    b: &Builtin,
    args: &[Value],
    map_fallback: impl FnOnce() -> Result<Value, EvalError>,
) -> Result<Option<Value>, EvalError> {
    use std::cmp::Ordering;
    let misuse = || {
        EvalError::Internal(format!(
            "built-in `{}` applied to ill-typed arguments",
            b.name()
        ))
    };
    let num2 = |f: fn(f64, f64) -> f64| -> Result<Option<Value>, EvalError> {
        match (args.first().and_then(Value::as_num), args.get(1).and_then(Value::as_num)) {
            (Some(a), Some(c)) if args.len() == 2 => Ok(Some(Value::Num(f(a, c)))),
            _ => Err(misuse()),
        }
    };
    let cmp2 = |f: fn(Ordering) -> bool| -> Result<Option<Value>, EvalError> {
        match (args.first().and_then(Value::as_num), args.get(1).and_then(Value::as_num)) {
            (Some(a), Some(c)) if args.len() == 2 => {
                Ok(Some(Value::Bool(f(a.total_cmp(&c)))))
            }
            _ => Err(misuse()),
        }
    };
    let bool2 = |f: fn(bool, bool) -> bool| -> Result<Option<Value>, EvalError> {
        match (args.first().and_then(Value::as_bool), args.get(1).and_then(Value::as_bool)) {
            (Some(a), Some(c)) if args.len() == 2 => Ok(Some(Value::Bool(f(a, c)))),
            _ => Err(misuse()),
        }
    };
    match b {
        Builtin::Add => num2(|a, b| a + b),
        Builtin::Sub => num2(|a, b| a - b),
        Builtin::Mul => num2(|a, b| a * b),
        Builtin::Div => num2(|a, b| a / b),
        Builtin::Lt => cmp2(|o| o == Ordering::Less),
        Builtin::Le => cmp2(|o| o != Ordering::Greater),
        Builtin::Gt => cmp2(|o| o == Ordering::Greater),
        Builtin::Ge => cmp2(|o| o != Ordering::Less),
        Builtin::Eq => match args {
            [a, b] => Ok(Some(Value::Bool(a == b))),
            _ => Err(misuse()),
        },
        Builtin::Ne => match args {
            [a, b] => Ok(Some(Value::Bool(a != b))),
            _ => Err(misuse()),
        },
        Builtin::And => bool2(|a, b| a && b),
        Builtin::Or => bool2(|a, b| a || b),
        Builtin::Not => match args.first().and_then(Value::as_bool) {
            Some(a) if args.len() == 1 => Ok(Some(Value::Bool(!a))),
            _ => Err(misuse()),
        },
        // min/max use the deterministic structural order; ties keep the
        // first argument (the fold accumulator).
        Builtin::Min => match args {
            [a, b] => Ok(Some(if b.total_cmp(a) == Ordering::Less {
                b.clone()
            } else {
                a.clone()
            })),
            _ => Err(misuse()),
        },
        Builtin::Max => match args {
            [a, b] => Ok(Some(if b.total_cmp(a) == Ordering::Greater {
                b.clone()
            } else {
                a.clone()
            })),
            _ => Err(misuse()),
        },
        Builtin::Mux => match args {
            [Value::Bool(c), t, e] => Ok(Some(if *c { t.clone() } else { e.clone() })),
            _ => Err(misuse()),
        },
        Builtin::Pair => match args {
            [a, b] => Ok(Some(Value::pair(a.clone(), b.clone()))),
            _ => Err(misuse()),
        },
        Builtin::Fst => match args {
            [Value::Pair(p)] => Ok(Some(p.0.clone())),
            _ => Err(misuse()),
        },
        Builtin::Snd => match args {
            [Value::Pair(p)] => Ok(Some(p.1.clone())),
            _ => Err(misuse()),
        },
        Builtin::Cons => match args {
            [h, Value::List(t)] => Ok(Some(Value::List(Arc::new(ListVal::Cons(
                h.clone(),
                t.clone(),
            ))))),
            _ => Err(misuse()),
        },
        Builtin::Head => match args {
            [Value::List(l)] => match l.as_ref() {
                ListVal::Cons(h, _) => Ok(Some(h.clone())),
                ListVal::Null => Err(EvalError::Runtime("head of Null".into())),
            },
            _ => Err(misuse()),
        },
        Builtin::Tail => match args {
            [Value::List(l)] => match l.as_ref() {
                ListVal::Cons(_, t) => Ok(Some(Value::List(t.clone()))),
                ListVal::Null => Err(EvalError::Runtime("tail of Null".into())),
            },
            _ => Err(misuse()),
        },
        Builtin::Consthood => match args {
            [v] => Ok(Some(v.clone())),
            _ => Err(misuse()),
        },
        Builtin::Map => map_fallback().map(Some),
        Builtin::Sensor(_) | Builtin::RelationalSensor(_) => Ok(None),
    }
}

// ---------------------------------------------------------------------------
// Well-formedness of value-trees (tree shapes per expression)
// ---------------------------------------------------------------------------

/// Check that `tree` is a plausible evaluation outcome of `expr`: leaf for
/// values and variables, one child under `nbr`, two under `rep` (the second
/// application-shaped), three under `foldhood`, callee + arguments + result
/// under applications, recursing into declared-function bodies.
pub fn well_formed(program: &Program, expr: &Expr, tree: &ValueTree) -> Result<(), String> {
    match &expr.kind {
        ExprKind::Var(_) | ExprKind::Val(_) | ExprKind::Lambda { .. } => {
            if tree.children.is_empty() {
                Ok(())
            } else {
                Err(format!(
                    "expected a leaf for a value expression, got {} children",
                    tree.children.len()
                ))
            }
        }
        ExprKind::Nbr { body } => {
            if tree.children.len() != 1 {
                return Err(format!(
                    "nbr tree must have exactly 1 child, got {}",
                    tree.children.len()
                ));
            }
            if root(&tree.children[0]) != tree.root {
                return Err("nbr root must equal its child's root".into());
            }
            well_formed(program, body, &tree.children[0])
        }
        ExprKind::Rep { init, update } => {
            if tree.children.len() != 2 {
                return Err(format!(
                    "rep tree must have exactly 2 children, got {}",
                    tree.children.len()
                ));
            }
            well_formed(program, init, &tree.children[0])?;
            well_formed_apply(program, update, 1, &tree.children[1])?;
            if root(&tree.children[1]) != tree.root {
                return Err("rep root must equal the update application's root".into());
            }
            Ok(())
        }
        ExprKind::Foldhood {
            init,
            aggregator,
            body,
        } => {
            if tree.children.len() != 3 {
                return Err(format!(
                    "foldhood tree must have exactly 3 children, got {}",
                    tree.children.len()
                ));
            }
            well_formed(program, init, &tree.children[0])?;
            well_formed(program, aggregator, &tree.children[1])?;
            well_formed(program, body, &tree.children[2])
        }
        ExprKind::Apply { callee, args } => {
            if tree.children.len() != args.len() + 2 {
                return Err(format!(
                    "application tree must have {} children, got {}",
                    args.len() + 2,
                    tree.children.len()
                ));
            }
            well_formed(program, callee, &tree.children[0])?;
            for (i, a) in args.iter().enumerate() {
                well_formed(program, a, &tree.children[i + 1])?;
            }
            let last = tree.children.last().unwrap();
            match root(&tree.children[0]) {
                Value::Fun(FunValue::Builtin(_)) => {
                    if !last.children.is_empty() {
                        return Err("built-in application result must be a leaf".into());
                    }
                    if root(last) != tree.root {
                        return Err("built-in result leaf must equal the root".into());
                    }
                    Ok(())
                }
                Value::Fun(f) => {
                    if root(last) != tree.root {
                        return Err("application root must equal its body's root".into());
                    }
                    let body = crate::ast::function_body(&f, program)
                        .map_err(|e| e.to_string())?;
                    well_formed(program, &body, last)
                }
                other => Err(format!("callee evaluated to non-function `{}`", other)),
            }
        }
    }
}

/// Validate a tree against the application `callee(arg1..argN)` where the
/// arguments are values (used for the rep update application).
fn well_formed_apply(
    program: &Program,
    callee: &Expr,
    nargs: usize,
    tree: &ValueTree,
) -> Result<(), String> {
    if tree.children.len() != nargs + 2 {
        return Err(format!(
            "application tree must have {} children, got {}",
            nargs + 2,
            tree.children.len()
        ));
    }
    well_formed(program, callee, &tree.children[0])?;
    for i in 0..nargs {
        if !tree.children[i + 1].children.is_empty() {
            return Err("value argument must evaluate to a leaf".into());
        }
    }
    let last = tree.children.last().unwrap();
    match root(&tree.children[0]) {
        Value::Fun(FunValue::Builtin(_)) => Ok(()),
        Value::Fun(f) => {
            let body = crate::ast::function_body(&f, program).map_err(|e| e.to_string())?;
            well_formed(program, &body, last)
        }
        other => Err(format!("callee evaluated to non-function `{}`", other)),
    }
}
