use std::collections::BTreeMap;

use crate::expr::{Symbol, VarKey};

/// A time value together with coordinate values `x_j^(k)` and auxiliary values.
#[derive(Clone, Debug, PartialEq)]
pub struct Point<T = f64> {
    pub t: T,
    pub values: BTreeMap<VarKey, T>,
}

impl<T: Copy> Point<T> {
    pub fn new(t: T) -> Self {
        Point { t, values: BTreeMap::new() }
    }

    pub fn set(&mut self, key: VarKey, v: T) {
        self.values.insert(key, v);
    }

    pub fn with(mut self, name: &str, order: u32, v: T) -> Self {
        self.set(VarKey::new(name, order), v);
        self
    }

    pub fn get(&self, key: &VarKey) -> Option<T> {
        self.values.get(key).copied()
    }

    pub fn get_parts(&self, name: &Symbol, order: u32) -> Option<T> {
        self.values.get(&VarKey { name: name.clone(), order }).copied()
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Point<U> {
        Point { t: f(self.t), values: self.values.iter().map(|(k, v)| (k.clone(), f(*v))).collect() }
    }
}
