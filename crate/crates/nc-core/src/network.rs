//! Small-step network evolution: computation rounds, message broadcast,
//! environment changes and message-decay filtering.
//!
//! A configuration pairs an environment (reflexive topology and per-device
//! sensor state) with a status (per-device value-tree environments and an
//! activation predicate). Three transitions evolve it: a computation round
//! at a sleeping device, the message send ending a round, and a wholesale
//! environment change. Per-device computation and send strictly alternate,
//! enforced by the activation predicate.

use std::collections::{BTreeMap, BTreeSet};
use std::rc::Rc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::ast::{DeviceId, Program, Value};
use crate::device::{EvalConfig, EvalError, Evaluator, SensorState};
use crate::tree::{root, Env, ValueTree, ValueTreeEnv};

// ---------------------------------------------------------------------------
// Configurations
// ---------------------------------------------------------------------------

/// Topology (out-edge sets, reflexive) plus distributed sensor state.
#[derive(Debug, Clone, Default)]
pub struct Environment {
    pub topology: BTreeMap<DeviceId, BTreeSet<DeviceId>>,
    pub sensors: BTreeMap<DeviceId, SensorState>,
}

impl Environment {
    /// Well-formedness: every device has a self-loop and edges stay within
    /// the device set.
    pub fn well_formed(&self) -> bool {
        let devices: BTreeSet<DeviceId> = self.sensors.keys().copied().collect();
        if self.topology.keys().any(|d| !devices.contains(d)) {
            return false;
        }
        for d in &devices {
            match self.topology.get(d) {
                None => return false,
                Some(out) => {
                    if !out.contains(d) || out.iter().any(|o| !devices.contains(o)) {
                        return false;
                    }
                }
            }
        }
        true
    }

    pub fn devices(&self) -> Vec<DeviceId> {
        self.sensors.keys().copied().collect()
    }
}

/// A stored neighbour tree plus the global step at which it arrived.
#[derive(Debug, Clone)]
pub struct FieldEntry {
    pub tree: Rc<ValueTree>,
    pub stored_at: u64,
}

pub type DeviceField = BTreeMap<DeviceId, FieldEntry>;

/// Message-decay policy: entries older than the horizon (in global steps)
/// are cleared before a firing; the device's own latest tree is never
/// removed.
#[derive(Debug, Clone, Copy, Default)]
pub struct FilterPolicy {
    pub horizon: Option<u64>,
}

impl FilterPolicy {
    pub fn keep_all() -> Self {
        FilterPolicy { horizon: None }
    }
    pub fn horizon(steps: u64) -> Self {
        FilterPolicy {
            horizon: Some(steps),
        }
    }

    fn keeps(&self, now: u64, entry_stored_at: u64) -> bool {
        match self.horizon {
            None => true,
            Some(h) => now.saturating_sub(entry_stored_at) <= h,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Comp(DeviceId),
    Send(DeviceId),
    Env,
}

impl std::fmt::Display for Action {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Action::Comp(d) => write!(f, "+ {}", d),
            Action::Send(d) => write!(f, "- {}", d),
            Action::Env => write!(f, "env -"),
        }
    }
}

/// Append-only log of applied transitions.
#[derive(Debug, Default, Clone)]
pub struct EventLog {
    pub events: Vec<(u64, Action)>,
}

impl EventLog {
    pub fn push(&mut self, step: u64, action: Action) {
        self.events.push((step, action));
    }

    /// Line-oriented export: `step action device`.
    pub fn export(&self) -> String {
        let mut out = String::new();
        for (step, action) in &self.events {
            out.push_str(&format!("{} {}\n", step, action));
        }
        out
    }
}

#[derive(Debug, thiserror::Error)]
pub enum NetError {
    #[error("scheduler bug: {0}")]
    Scheduler(String),
    #[error("ill-formed environment")]
    IllFormedEnvironment,
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// A whole network: environment, value-tree field, activation, step count.
#[derive(Debug, Clone)]
pub struct NetworkConfig {
    pub env: Environment,
    pub field: BTreeMap<DeviceId, DeviceField>,
    pub activation: BTreeMap<DeviceId, bool>,
    pub now: u64,
}

impl NetworkConfig {
    pub fn new(env: Environment) -> Result<Self, NetError> {
        if !env.well_formed() {
            return Err(NetError::IllFormedEnvironment);
        }
        let field = env.devices().iter().map(|d| (*d, DeviceField::new())).collect();
        let activation = env.devices().iter().map(|d| (*d, false)).collect();
        Ok(NetworkConfig {
            env,
            field,
            activation,
            now: 0,
        })
    }

    pub fn well_formed(&self) -> bool {
        let devices: BTreeSet<DeviceId> = self.env.sensors.keys().copied().collect();
        self.env.well_formed()
            && self.field.keys().copied().collect::<BTreeSet<_>>() == devices
            && self.activation.keys().copied().collect::<BTreeSet<_>>() == devices
    }

    /// The current root value at a device (its own entry's root), if it has
    /// fired at least once.
    pub fn root_of(&self, d: DeviceId) -> Option<Value> {
        self.field
            .get(&d)
            .and_then(|f| f.get(&d))
            .map(|e| root(&e.tree))
    }

    pub fn roots(&self) -> BTreeMap<DeviceId, Option<Value>> {
        self.env
            .devices()
            .into_iter()
            .map(|d| (d, self.root_of(d)))
            .collect()
    }

    /// A computation round at a sleeping device: filter the stored field,
    /// fire, store the result locally, mark the device active.
    pub fn step_comp(
        &mut self,
        d: DeviceId,
        evaluator: &Evaluator,
        policy: FilterPolicy,
    ) -> Result<(), NetError> {
        match self.activation.get(&d) {
            Some(false) => {}
            Some(true) => {
                return Err(NetError::Scheduler(format!(
                    "device {} is already computing",
                    d
                )))
            }
            None => return Err(NetError::Scheduler(format!("unknown device {}", d))),
        }
        self.now += 1;
        let now = self.now;
        let stored = self.field.get(&d).cloned().unwrap_or_default();
        let filtered: DeviceField = stored
            .into_iter()
            .filter(|(from, entry)| *from == d || policy.keeps(now, entry.stored_at))
            .collect();
        let env: ValueTreeEnv = Env::from_map(
            filtered
                .iter()
                .map(|(from, entry)| (*from, entry.tree.clone()))
                .collect(),
        );
        let sensors = self
            .env
            .sensors
            .get(&d)
            .cloned()
            .ok_or_else(|| NetError::Scheduler(format!("no sensor state for {}", d)))?;
        let tree = evaluator.fire(d, &env, &sensors)?;
        let mut new_field = filtered;
        new_field.insert(
            d,
            FieldEntry {
                tree,
                stored_at: now,
            },
        );
        self.field.insert(d, new_field);
        self.activation.insert(d, true);
        Ok(())
    }

    /// Message send ending a round: broadcast the device's own tree to every
    /// current out-neighbour (including itself), mark the device sleeping.
    pub fn step_send(&mut self, d: DeviceId) -> Result<(), NetError> {
        match self.activation.get(&d) {
            Some(true) => {}
            Some(false) => {
                return Err(NetError::Scheduler(format!(
                    "device {} has not computed yet",
                    d
                )))
            }
            None => return Err(NetError::Scheduler(format!("unknown device {}", d))),
        }
        self.now += 1;
        let now = self.now;
        let tree = self
            .field
            .get(&d)
            .and_then(|f| f.get(&d))
            .map(|e| e.tree.clone())
            .ok_or_else(|| NetError::Scheduler(format!("device {} has no own tree", d)))?;
        let recipients: Vec<DeviceId> = self
            .env
            .topology
            .get(&d)
            .map(|out| out.iter().copied().collect())
            .unwrap_or_default();
        for r in recipients {
            if let Some(f) = self.field.get_mut(&r) {
                f.insert(
                    d,
                    FieldEntry {
                        tree: tree.clone(),
                        stored_at: now,
                    },
                );
            }
        }
        self.activation.insert(d, false);
        Ok(())
    }

    /// Environment change: new devices get an empty field and sleeping
    /// activation, surviving devices keep theirs, removed devices are
    /// dropped. Stale entries about removed neighbours persist until
    /// filtered.
    pub fn step_env(&mut self, new_env: Environment) -> Result<(), NetError> {
        if !new_env.well_formed() {
            return Err(NetError::IllFormedEnvironment);
        }
        self.now += 1;
        let mut field = BTreeMap::new();
        let mut activation = BTreeMap::new();
        for d in new_env.devices() {
            field.insert(d, self.field.get(&d).cloned().unwrap_or_default());
            activation.insert(d, self.activation.get(&d).copied().unwrap_or(false));
        }
        self.env = new_env;
        self.field = field;
        self.activation = activation;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Schedulers
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub enum SchedulerPolicy {
    /// Devices in increasing id order, compute then send.
    RoundRobin,
    /// Uniformly random choice among enabled compute/send actions.
    UniformRandom { seed: u64 },
    /// A fixed list of actions, consumed in order.
    ExplicitTrace(Vec<Action>),
}

pub struct Scheduler {
    policy: SchedulerPolicy,
    rng: ChaCha8Rng,
    trace_pos: usize,
    rr_queue: Vec<Action>,
}

impl Scheduler {
    pub fn new(policy: SchedulerPolicy) -> Self {
        let seed = match &policy {
            SchedulerPolicy::UniformRandom { seed } => *seed,
            _ => 0,
        };
        Scheduler {
            policy,
            rng: ChaCha8Rng::seed_from_u64(seed),
            trace_pos: 0,
            rr_queue: Vec::new(),
        }
    }

    /// The next device action; `None` when an explicit trace is exhausted.
    pub fn next(&mut self, net: &NetworkConfig) -> Option<Action> {
        match &self.policy {
            SchedulerPolicy::ExplicitTrace(actions) => {
                let a = actions.get(self.trace_pos).copied();
                self.trace_pos += 1;
                a
            }
            SchedulerPolicy::RoundRobin => {
                loop {
                    if let Some(a) = self.rr_queue.pop() {
                        // Skip devices that disappeared in an env change.
                        let valid = match a {
                            Action::Comp(d) | Action::Send(d) => {
                                net.activation.contains_key(&d)
                            }
                            Action::Env => true,
                        };
                        if valid {
                            return Some(a);
                        }
                        continue;
                    }
                    let mut queue = Vec::new();
                    for d in net.env.devices().into_iter().rev() {
                        queue.push(Action::Send(d));
                        queue.push(Action::Comp(d));
                    }
                    if queue.is_empty() {
                        return None;
                    }
                    self.rr_queue = queue;
                }
            }
            SchedulerPolicy::UniformRandom { .. } => {
                let enabled: Vec<Action> = net
                    .activation
                    .iter()
                    .map(|(d, active)| {
                        if *active {
                            Action::Send(*d)
                        } else {
                            Action::Comp(*d)
                        }
                    })
                    .collect();
                if enabled.is_empty() {
                    None
                } else {
                    let i = self.rng.gen_range(0..enabled.len());
                    Some(enabled[i])
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Runs
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct StopCondition {
    pub max_steps: u64,
    /// Stop once this many consecutive full rounds leave every device's
    /// root unchanged.
    pub stable_rounds: Option<u32>,
}

impl StopCondition {
    pub fn max_steps(n: u64) -> Self {
        StopCondition {
            max_steps: n,
            stable_rounds: None,
        }
    }
    pub fn stable(window: u32, max_steps: u64) -> Self {
        StopCondition {
            max_steps,
            stable_rounds: Some(window),
        }
    }
}

#[derive(Debug)]
pub struct RunOutcome {
    pub log: EventLog,
    pub net: NetworkConfig,
    /// Step at which the stability window was first satisfied.
    pub converged_at: Option<u64>,
    /// Number of completed full rounds (every device fired at least once).
    pub full_rounds: u64,
}

/// Drive a network with a scheduler and timed environment changes until the
/// stop condition holds. `observer` sees the configuration after every
/// transition.
pub fn run(
    program: &Program,
    mut net: NetworkConfig,
    scheduler: &mut Scheduler,
    mut env_script: Vec<(u64, Environment)>,
    policy: FilterPolicy,
    stop: &StopCondition,
    eval_config: EvalConfig,
    mut observer: impl FnMut(&NetworkConfig, u64, &Action),
) -> Result<RunOutcome, NetError> {
    let evaluator = Evaluator::with_config(program, eval_config);
    let mut log = EventLog::default();
    env_script.sort_by_key(|(at, _)| *at);
    let mut script_pos = 0usize;

    let mut fired_since_boundary: BTreeSet<DeviceId> = BTreeSet::new();
    let mut last_roots: Option<BTreeMap<DeviceId, Option<Value>>> = None;
    let mut stable_streak = 0u32;
    let mut converged_at = None;
    let mut full_rounds = 0u64;

    while net.now < stop.max_steps {
        let action = if script_pos < env_script.len() && env_script[script_pos].0 <= net.now {
            let (_, env) = env_script[script_pos].clone();
            script_pos += 1;
            net.step_env(env)?;
            Action::Env
        } else {
            match scheduler.next(&net) {
                Some(Action::Comp(d)) => {
                    net.step_comp(d, &evaluator, policy)?;
                    fired_since_boundary.insert(d);
                    Action::Comp(d)
                }
                Some(Action::Send(d)) => {
                    net.step_send(d)?;
                    Action::Send(d)
                }
                Some(Action::Env) => {
                    return Err(NetError::Scheduler(
                        "schedulers cannot emit env actions".into(),
                    ))
                }
                None => break,
            }
        };
        log.push(net.now, action);
        observer(&net, net.now, &action);

        // Full-round boundary: every current device has fired since the
        // previous boundary and no device is mid-round.
        let all: BTreeSet<DeviceId> = net.env.devices().into_iter().collect();
        if fired_since_boundary.is_superset(&all)
            && net.activation.values().all(|a| !a)
        {
            full_rounds += 1;
            fired_since_boundary.clear();
            let roots = net.roots();
            if let Some(prev) = &last_roots {
                if *prev == roots {
                    stable_streak += 1;
                } else {
                    stable_streak = 0;
                }
            }
            last_roots = Some(roots);
            if let Some(window) = stop.stable_rounds {
                if stable_streak >= window {
                    converged_at.get_or_insert(net.now);
                    break;
                }
            }
        }
    }

    Ok(RunOutcome {
        log,
        net,
        converged_at,
        full_rounds,
    })
}

// ---------------------------------------------------------------------------
// Topology helpers
// ---------------------------------------------------------------------------

/// Symmetric edge set plus self-loops from an undirected edge list.
pub fn topology_from_edges(
    devices: &[DeviceId],
    edges: &[(DeviceId, DeviceId)],
) -> BTreeMap<DeviceId, BTreeSet<DeviceId>> {
    let mut topo: BTreeMap<DeviceId, BTreeSet<DeviceId>> = devices
        .iter()
        .map(|d| (*d, BTreeSet::from([*d])))
        .collect();
    for (a, b) in edges {
        topo.entry(*a).or_default().insert(*b);
        topo.entry(*b).or_default().insert(*a);
    }
    topo
}
