//! Value-trees and value-tree environments, generic over the root value so
//! the same projection machinery serves both evaluators.
//!
//! `pi_i` extracts the i-th subtree (1-based), `pi_f` the last subtree when
//! the first child's root is a function with the same name as `f`. Both lift
//! pointwise to environments, dropping devices where the projection is
//! absent. Environments memoise their projections, so re-projecting the same
//! environment yields the identical (pointer-equal) result — which the
//! evaluator uses as a sound memoisation key.

use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::rc::Rc;

use crate::ast::{DeviceId, Value};

#[derive(Debug, Clone, PartialEq)]
pub struct Tree<V> {
    pub root: V,
    pub children: Vec<Rc<Tree<V>>>,
}

impl<V> Tree<V> {
    pub fn leaf(root: V) -> Rc<Tree<V>> {
        Rc::new(Tree {
            root,
            children: vec![],
        })
    }
    pub fn node(root: V, children: Vec<Rc<Tree<V>>>) -> Rc<Tree<V>> {
        Rc::new(Tree { root, children })
    }
}

/// Root-value access needed by the alignment projections.
pub trait TreeRoot {
    /// The function name of the root, when the root is a function value.
    fn fun_name(&self) -> Option<String>;
}

impl TreeRoot for Value {
    fn fun_name(&self) -> Option<String> {
        self.as_fun().map(|f| f.name())
    }
}

/// Extract the root value.
pub fn root<V: Clone>(t: &Tree<V>) -> V {
    t.root.clone()
}

/// i-th subtree, 1-based; absent when out of range.
pub fn subtree_i<V>(t: &Tree<V>, i: usize) -> Option<Rc<Tree<V>>> {
    if i >= 1 {
        t.children.get(i - 1).cloned()
    } else {
        None
    }
}

/// Last subtree, provided the tree has at least callee and result children
/// and the first child's root bears the function name `fun_name`.
pub fn subtree_f<V: TreeRoot>(t: &Tree<V>, fun_name: &str) -> Option<Rc<Tree<V>>> {
    if t.children.len() < 2 {
        return None;
    }
    match t.children[0].root.fun_name() {
        Some(n) if n == fun_name => t.children.last().cloned(),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Proj {
    Index(usize),
    Fun(String),
}

struct EnvData<V> {
    map: BTreeMap<DeviceId, Rc<Tree<V>>>,
    proj_cache: RefCell<HashMap<Proj, Env<V>>>,
}

/// A value-tree environment `delta -> tree`, immutable once built.
pub struct Env<V>(Rc<EnvData<V>>);

impl<V> Clone for Env<V> {
    fn clone(&self) -> Self {
        Env(self.0.clone())
    }
}

impl<V: TreeRoot> Env<V> {
    pub fn empty() -> Self {
        Env::from_map(BTreeMap::new())
    }

    pub fn from_map(map: BTreeMap<DeviceId, Rc<Tree<V>>>) -> Self {
        Env(Rc::new(EnvData {
            map,
            proj_cache: RefCell::new(HashMap::new()),
        }))
    }

    pub fn get(&self, d: DeviceId) -> Option<Rc<Tree<V>>> {
        self.0.map.get(&d).cloned()
    }

    pub fn contains(&self, d: DeviceId) -> bool {
        self.0.map.contains_key(&d)
    }

    pub fn is_empty(&self) -> bool {
        self.0.map.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.map.len()
    }

    /// Device ids in increasing order.
    pub fn domain(&self) -> Vec<DeviceId> {
        self.0.map.keys().copied().collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (DeviceId, Rc<Tree<V>>)> + '_ {
        self.0.map.iter().map(|(d, t)| (*d, t.clone()))
    }

    /// Identity for memoisation: environments are only ever reached by
    /// projection from a root environment, so pointer equality implies map
    /// equality.
    pub fn key(&self) -> usize {
        Rc::as_ptr(&self.0) as usize
    }

    fn project(&self, proj: Proj, f: impl Fn(&Tree<V>) -> Option<Rc<Tree<V>>>) -> Env<V> {
        if let Some(hit) = self.0.proj_cache.borrow().get(&proj) {
            return hit.clone();
        }
        let mut out = BTreeMap::new();
        for (d, t) in &self.0.map {
            if let Some(sub) = f(t) {
                out.insert(*d, sub);
            }
        }
        let env = Env::from_map(out);
        self.0
            .proj_cache
            .borrow_mut()
            .insert(proj, env.clone());
        env
    }

    /// Pointwise `pi_i`, dropping devices without an i-th subtree.
    pub fn proj_i(&self, i: usize) -> Env<V> {
        self.project(Proj::Index(i), |t| subtree_i(t, i))
    }

    /// Pointwise `pi_f`, dropping devices that applied a different function.
    pub fn proj_f(&self, fun_name: &str) -> Env<V> {
        self.project(Proj::Fun(fun_name.to_string()), |t| {
            subtree_f(t, fun_name)
        })
    }
}

impl<V: fmt::Display> fmt::Display for Tree<V> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{}>", self.root)?;
        if !self.children.is_empty() {
            write!(f, "(")?;
            for (i, c) in self.children.iter().enumerate() {
                if i > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{}", c)?;
            }
            write!(f, ")")?;
        }
        Ok(())
    }
}

/// Canonical textual serialization: `<root>` for leaves,
/// `<root>(child, ...)` otherwise.
pub fn serialize<V: fmt::Display>(t: &Tree<V>) -> String {
    format!("{}", t)
}

pub type ValueTree = Tree<Value>;
pub type ValueTreeEnv = Env<Value>;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::{Builtin, Value};

    fn num_leaf(n: f64) -> Rc<ValueTree> {
        Tree::leaf(Value::Num(n))
    }

    /// The comparison tree `<True>(<, -2, 5, True)`.
    fn cmp_tree() -> Rc<ValueTree> {
        Tree::node(
            Value::Bool(true),
            vec![
                Tree::leaf(Value::builtin(Builtin::Lt)),
                num_leaf(-2.0),
                num_leaf(5.0),
                Tree::leaf(Value::Bool(true)),
            ],
        )
    }

    /// `<4>(f, 3, <4>(+, 3, 1, 4))` for a declared function named `f`.
    fn app_tree() -> Rc<ValueTree> {
        let inner = Tree::node(
            Value::Num(4.0),
            vec![
                Tree::leaf(Value::builtin(Builtin::Add)),
                num_leaf(3.0),
                num_leaf(1.0),
                num_leaf(4.0),
            ],
        );
        Tree::node(
            Value::Num(4.0),
            vec![
                Tree::leaf(Value::Fun(crate::ast::FunValue::Defined(
                    std::sync::Arc::from("f"),
                ))),
                num_leaf(3.0),
                inner,
            ],
        )
    }

    #[test]
    fn subtree_index_matches_worked_tree() {
        let t = cmp_tree();
        let second = subtree_i(&t, 2).unwrap();
        assert_eq!(second.root, Value::Num(-2.0));
        assert!(second.children.is_empty());
        assert!(subtree_i(&t, 5).is_none());
    }

    #[test]
    fn subtree_fun_checks_first_child_name() {
        let t = app_tree();
        let body = subtree_f(&t, "f").unwrap();
        assert_eq!(body.root, Value::Num(4.0));
        assert_eq!(body.children.len(), 4);
        assert!(subtree_f(&t, "g").is_none());
    }

    #[test]
    fn env_projection_drops_absent_and_caches() {
        let mut m = BTreeMap::new();
        m.insert(DeviceId(1), app_tree());
        m.insert(DeviceId(2), num_leaf(7.0));
        let env: ValueTreeEnv = Env::from_map(m);
        let p = env.proj_f("f");
        assert!(p.contains(DeviceId(1)));
        assert!(!p.contains(DeviceId(2)));
        let p2 = env.proj_f("f");
        assert_eq!(p.key(), p2.key());
    }

    #[test]
    fn serialization_is_stable() {
        assert_eq!(serialize(&cmp_tree()), "<True>(<<>, <-2>, <5>, <True>)");
    }
}
