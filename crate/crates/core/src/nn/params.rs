//! Named parameter collections.

use std::collections::BTreeMap;

use rand::Rng;

use super::graph::{Gradients, Graph, Var};
use super::tensor::{Real, Tensor};
use super::NnError;

/// Ordered, uniquely named tensors. Insertion order is the serialization
/// order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<T> {
    entries: Vec<(String, Tensor<T>)>,
    index: BTreeMap<String, usize>,
}

impl<T: Real> Default for ParamSet<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> ParamSet<T> {
    pub fn new() -> Self {
        Self {
            entries: Vec::new(),
            index: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor<T>) -> Result<(), NnError> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(NnError::Config(format!("duplicate parameter name {name}")));
        }
        self.index.insert(name.clone(), self.entries.len());
        self.entries.push((name, t));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.index.get(name).map(|&i| &self.entries[i].1)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.index.get(name).map(|&i| &mut self.entries[i].1)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<T>)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_elements(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    /// Appends every entry of `other`; names must stay unique.
    pub fn merge(&mut self, other: &ParamSet<T>) -> Result<(), NnError> {
        for (n, t) in other.iter() {
            self.insert(n, t.clone())?;
        }
        Ok(())
    }

    /// Entries whose names start with `prefix`.
    pub fn subset(&self, prefix: &str) -> ParamSet<T> {
        let mut out = ParamSet::new();
        for (n, t) in self.iter().filter(|(n, _)| n.starts_with(prefix)) {
            out.insert(n, t.clone()).expect("names already unique");
        }
        out
    }

    /// Same names and shapes, all zeros.
    pub fn zeros_like(&self) -> ParamSet<T> {
        let mut out = ParamSet::new();
        for (n, t) in self.iter() {
            out.insert(n, Tensor::zeros(t.shape())).expect("names already unique");
        }
        out
    }

    pub fn same_layout(&self, other: &ParamSet<T>) -> bool {
        self.len() == other.len()
            && self
                .iter()
                .zip(other.iter())
                .all(|((a, ta), (b, tb))| a == b && ta.shape() == tb.shape())
    }

    /// `self = tau * source + (1 - tau) * self`, matched by name.
    pub fn polyak_update(&mut self, source: &ParamSet<T>, tau: T) -> Result<(), NnError> {
        for (name, t) in self.entries.iter_mut() {
            let s = source
                .get(name)
                .ok_or_else(|| NnError::Config(format!("polyak source lacks {name}")))?;
            if s.shape() != t.shape() {
                return Err(NnError::Shape(format!("polyak {name}: {:?} vs {:?}", s.shape(), t.shape())));
            }
            for (d, &v) in t.data_mut().iter_mut().zip(s.data()) {
                *d = tau * v + (T::one() - tau) * *d;
            }
        }
        Ok(())
    }

    /// Overwrites each entry of `self` with the same-named entry of `source`.
    pub fn copy_from(&mut self, source: &ParamSet<T>) -> Result<(), NnError> {
        self.polyak_update(source, T::one())
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|(_, t)| t.is_finite())
    }

    pub fn cast<U: Real>(&self) -> ParamSet<U> {
        let mut out = ParamSet::new();
        for (n, t) in self.iter() {
            out.insert(n, t.cast()).expect("names already unique");
        }
        out
    }

    /// Registers every entry as a trainable leaf of `g`.
    pub fn bind(&self, g: &mut Graph<T>) -> Bound {
        let vars = self.iter().map(|(n, t)| (n.to_string(), g.param(t.clone()))).collect();
        Bound { vars }
    }

    /// Registers every entry as a constant of `g`.
    pub fn bind_const(&self, g: &mut Graph<T>) -> Bound {
        let vars = self.iter().map(|(n, t)| (n.to_string(), g.input(t.clone()))).collect();
        Bound { vars }
    }

    /// Adds a dense layer `name.w [out, inp]`, `name.b [out]` with the usual
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))` initialization.
    pub fn add_linear<R: Rng>(&mut self, rng: &mut R, name: &str, inp: usize, out: usize) -> Result<(), NnError> {
        let bound = 1.0 / (inp as f64).sqrt();
        self.insert(format!("{name}.w"), uniform(rng, &[out, inp], bound))?;
        self.insert(format!("{name}.b"), uniform(rng, &[out], bound))
    }

    /// Adds a square-kernel convolution `name.w [out, inp, k, k]`,
    /// `name.b [out]`.
    pub fn add_conv<R: Rng>(
        &mut self,
        rng: &mut R,
        name: &str,
        inp: usize,
        out: usize,
        k: usize,
    ) -> Result<(), NnError> {
        let bound = 1.0 / ((inp * k * k) as f64).sqrt();
        self.insert(format!("{name}.w"), uniform(rng, &[out, inp, k, k], bound))?;
        self.insert(format!("{name}.b"), uniform(rng, &[out], bound))
    }
}

fn uniform<T: Real, R: Rng>(rng: &mut R, shape: &[usize], bound: f64) -> Tensor<T> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| T::c(rng.random_range(-bound..bound))).collect())
}

/// Graph variables for a bound [`ParamSet`].
#[derive(Debug, Clone)]
pub struct Bound {
    vars: Vec<(String, Var)>,
}

impl Bound {
    pub fn var(&self, name: &str) -> Var {
        self.vars
            .iter()
            .find(|(n, _)| n == name)
            .map(|&(_, v)| v)
            .unwrap_or_else(|| panic!("parameter {name} not bound"))
    }

    /// Collects gradients into a set shaped like `params`; entries the loss
    /// does not reach come back as zeros.
    pub fn grads<T: Real>(&self, params: &ParamSet<T>, grads: &mut Gradients<T>) -> ParamSet<T> {
        let mut out = ParamSet::new();
        for ((name, var), (_, t)) in self.vars.iter().zip(params.iter()) {
            let g = grads.take(*var).unwrap_or_else(|| Tensor::zeros(t.shape()));
            out.insert(name.clone(), g).expect("names already unique");
        }
        out
    }
}
