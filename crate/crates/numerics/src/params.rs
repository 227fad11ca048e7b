//! Named parameter collections.
//!
//! Iteration order is insertion order everywhere; checkpoints and optimizer
//! sweeps rely on it for reproducibility.

use std::collections::HashMap;

use rand::Rng;

use crate::error::NumericsError;
use crate::scalar::Scalar;
use crate::tape::{Tape, ValueId};
use crate::tensor::Tensor;
use crate::Result;

#[derive(Clone)]
pub struct Params<S: Scalar> {
    entries: Vec<(String, Tensor<S>)>,
    index: HashMap<String, usize>,
}

impl<S: Scalar> Default for Params<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Params<S> {
    pub fn new() -> Self {
        Self { entries: Vec::new(), index: HashMap::new() }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, name: &str, tensor: Tensor<S>) -> Result<()> {
        if self.index.contains_key(name) {
            return Err(NumericsError::InvalidShape(format!("duplicate parameter {name}")));
        }
        self.index.insert(name.to_string(), self.entries.len());
        self.entries.push((name.to_string(), tensor.with_requires_grad(true)));
        Ok(())
    }

    /// Inserts a `rows x cols` matrix with entries drawn uniformly from
    /// `[-limit, limit]`.
    pub fn insert_uniform(
        &mut self,
        name: &str,
        rows: usize,
        cols: usize,
        limit: f64,
        rng: &mut impl Rng,
    ) -> Result<()> {
        let data: Vec<S> =
            (0..rows * cols).map(|_| S::from_f64(rng.gen_range(-limit..=limit))).collect();
        self.insert(name, Tensor::matrix(rows, cols, data)?)
    }

    /// Inserts a vector filled with `fill`.
    pub fn insert_filled(&mut self, name: &str, len: usize, fill: f64) -> Result<()> {
        self.insert(name, Tensor::vector(vec![S::from_f64(fill); len])?)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<S>> {
        self.index.get(name).map(|&i| &self.entries[i].1)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<S>> {
        let i = *self.index.get(name)?;
        Some(&mut self.entries[i].1)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<S>)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<S>)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn numel(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }

    /// Registers every parameter as a gradient-bearing leaf on `tape`.
    pub fn bind(&self, tape: &mut Tape<S>) -> Binding {
        let mut ids = Vec::with_capacity(self.entries.len());
        let mut index = HashMap::with_capacity(self.entries.len());
        for (name, tensor) in &self.entries {
            let id = tape.leaf(tensor.clone());
            index.insert(name.clone(), ids.len());
            ids.push((name.clone(), id));
        }
        Binding { ids, index }
    }

    /// Converts all values to a different precision.
    pub fn convert<T: Scalar>(&self) -> Params<T> {
        let mut out = Params::new();
        for (name, tensor) in &self.entries {
            let data: Vec<T> = tensor.data().iter().map(|&v| T::from_f64(v.to_f64())).collect();
            let t = Tensor::new(tensor.shape().to_vec(), data).expect("same shape");
            out.insert(name, t).expect("names unique");
        }
        out
    }
}

/// Tape ids for one traversal's bound parameters.
pub struct Binding {
    ids: Vec<(String, ValueId)>,
    index: HashMap<String, usize>,
}

impl Binding {
    pub fn id(&self, name: &str) -> ValueId {
        match self.index.get(name) {
            Some(&i) => self.ids[i].1,
            None => panic!("unbound parameter {name}"),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, ValueId)> {
        self.ids.iter().map(|(n, id)| (n.as_str(), *id))
    }

    /// Collects gradients left on `tape` by the last `backward` call.
    pub fn collect_grads<S: Scalar>(&self, tape: &Tape<S>) -> GradMap<S> {
        let mut out = GradMap::new();
        for (name, id) in &self.ids {
            if let Some(g) = tape.grad(*id) {
                out.add(name, g);
            }
        }
        out
    }
}

/// Accumulated gradients keyed by parameter name. Absent entries mean zero.
pub struct GradMap<S: Scalar> {
    map: HashMap<String, Vec<S>>,
}

impl<S: Scalar> Default for GradMap<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> GradMap<S> {
    pub fn new() -> Self {
        Self { map: HashMap::new() }
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&[S]> {
        self.map.get(name).map(|v| v.as_slice())
    }

    pub fn add(&mut self, name: &str, grad: &[S]) {
        match self.map.get_mut(name) {
            Some(acc) => {
                for (a, &g) in acc.iter_mut().zip(grad) {
                    *a += g;
                }
            }
            None => {
                self.map.insert(name.to_string(), grad.to_vec());
            }
        }
    }

    /// Merges another accumulator into this one.
    pub fn merge(&mut self, other: GradMap<S>) {
        for (name, grad) in other.map {
            self.add(&name, &grad);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        let f = S::from_f64(factor);
        for grad in self.map.values_mut() {
            for g in grad.iter_mut() {
                *g *= f;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.map.values().all(|g| g.iter().all(|v| v.is_finite()))
    }

    /// Names with any nonzero entry, sorted; used in NaN diagnostics and
    /// coverage checks.
    pub fn names(&self) -> Vec<&str> {
        let mut names: Vec<&str> = self.map.keys().map(|s| s.as_str()).collect();
        names.sort_unstable();
        names
    }

    /// First offending parameter if any gradient is NaN or infinite.
    pub fn first_non_finite(&self) -> Option<&str> {
        self.names()
            .into_iter()
            .find(|name| self.map[*name].iter().any(|v| !v.is_finite()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn insertion_order_is_preserved() {
        let mut p: Params<f32> = Params::new();
        p.insert("b", Tensor::vector(vec![1.0]).unwrap()).unwrap();
        p.insert("a", Tensor::vector(vec![2.0]).unwrap()).unwrap();
        let names: Vec<&str> = p.iter().map(|(n, _)| n).collect();
        assert_eq!(names, ["b", "a"]);
    }

    #[test]
    fn duplicate_insert_is_rejected() {
        let mut p: Params<f32> = Params::new();
        p.insert("w", Tensor::vector(vec![1.0]).unwrap()).unwrap();
        assert!(p.insert("w", Tensor::vector(vec![2.0]).unwrap()).is_err());
    }

    #[test]
    fn uniform_init_respects_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut p: Params<f64> = Params::new();
        p.insert_uniform("w", 8, 8, 0.1, &mut rng).unwrap();
        assert!(p.get("w").unwrap().data().iter().all(|v| v.abs() <= 0.1));
    }

    #[test]
    fn bind_collects_grads_through_tape() {
        let mut p: Params<f64> = Params::new();
        p.insert("w", Tensor::vector(vec![3.0, 4.0]).unwrap()).unwrap();
        let mut tape = Tape::new();
        let bound = p.bind(&mut tape);
        let sq = tape.mul(bound.id("w"), bound.id("w")).unwrap();
        let loss = tape.sum_all(sq);
        tape.backward(loss).unwrap();
        let grads = bound.collect_grads(&tape);
        assert_eq!(grads.get("w").unwrap(), &[6.0, 8.0]);
    }

    #[test]
    fn gradmap_merge_accumulates() {
        let mut a: GradMap<f64> = GradMap::new();
        a.add("w", &[1.0, 2.0]);
        let mut b: GradMap<f64> = GradMap::new();
        b.add("w", &[10.0, 20.0]);
        b.add("v", &[5.0]);
        a.merge(b);
        assert_eq!(a.get("w").unwrap(), &[11.0, 22.0]);
        assert_eq!(a.get("v").unwrap(), &[5.0]);
    }
}
