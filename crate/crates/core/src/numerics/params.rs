use std::collections::BTreeMap;

use super::tensor::{Float, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named collection of trainable tensors, in registration order.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet<T> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
    by_name: BTreeMap<String, ParamId>,
}

impl<T: Float> Default for ParamSet<T> {
    fn default() -> Self {
        Self {
            names: Vec::new(),
            tensors: Vec::new(),
            by_name: BTreeMap::new(),
        }
    }
}

impl<T: Float> ParamSet<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: Tensor<T>) -> Result<ParamId> {
        if self.by_name.contains_key(name) {
            return Err(Error::Invalid(format!("duplicate parameter `{name}`")));
        }
        let id = ParamId(self.tensors.len());
        self.names.push(name.to_string());
        self.tensors.push(value);
        self.by_name.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor<T>> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor<T>)> {
        self.ids()
            .map(move |id| (id, self.names[id.0].as_str(), &self.tensors[id.0]))
    }

    pub fn total_len(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }
}

/// Gradient of one parameter: dense, or a sparse set of rows for lookup tables.
#[derive(Clone, Debug, PartialEq)]
pub enum GradSlot<T> {
    Dense(Vec<T>),
    Rows {
        width: usize,
        rows: BTreeMap<usize, Vec<T>>,
    },
}

impl<T: Float> GradSlot<T> {
    fn for_each(&self, mut f: impl FnMut(usize, T)) {
        match self {
            GradSlot::Dense(v) => v.iter().enumerate().for_each(|(i, &g)| f(i, g)),
            GradSlot::Rows { width, rows } => {
                for (&r, vals) in rows {
                    for (c, &g) in vals.iter().enumerate() {
                        f(r * width + c, g);
                    }
                }
            }
        }
    }
}

/// Per-parameter gradients produced by a backward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    slots: Vec<Option<GradSlot<T>>>,
}

impl<T: Float> Gradients<T> {
    pub fn new(num_params: usize) -> Self {
        Self {
            slots: vec![None; num_params],
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&GradSlot<T>> {
        self.slots[id.0].as_ref()
    }

    pub(crate) fn add_dense(&mut self, id: ParamId, g: &[T]) {
        match &mut self.slots[id.0] {
            slot @ None => *slot = Some(GradSlot::Dense(g.to_vec())),
            Some(GradSlot::Dense(acc)) => acc.iter_mut().zip(g).for_each(|(a, &b)| *a += b),
            Some(GradSlot::Rows { width, rows }) => {
                let mut dense = vec![T::zero(); g.len()];
                for (&r, vals) in rows.iter() {
                    dense[r * *width..(r + 1) * *width].copy_from_slice(vals);
                }
                dense.iter_mut().zip(g).for_each(|(a, &b)| *a += b);
                self.slots[id.0] = Some(GradSlot::Dense(dense));
            }
        }
    }

    pub(crate) fn add_row(&mut self, id: ParamId, row: usize, width: usize, g: &[T]) {
        let slot = self.slots[id.0].get_or_insert_with(|| GradSlot::Rows {
            width,
            rows: BTreeMap::new(),
        });
        match slot {
            GradSlot::Dense(acc) => acc[row * width..(row + 1) * width]
                .iter_mut()
                .zip(g)
                .for_each(|(a, &b)| *a += b),
            GradSlot::Rows { rows, .. } => {
                let acc = rows.entry(row).or_insert_with(|| vec![T::zero(); width]);
                acc.iter_mut().zip(g).for_each(|(a, &b)| *a += b);
            }
        }
    }

    /// Accumulates `other` into `self`.
    pub fn merge(&mut self, other: &Gradients<T>) {
        for (i, slot) in other.slots.iter().enumerate() {
            match slot {
                None => {}
                Some(GradSlot::Dense(g)) => self.add_dense(ParamId(i), g),
                Some(GradSlot::Rows { width, rows }) => {
                    for (&r, g) in rows {
                        self.add_row(ParamId(i), r, *width, g);
                    }
                }
            }
        }
    }

    pub fn scale(&mut self, c: T) {
        for slot in self.slots.iter_mut().flatten() {
            match slot {
                GradSlot::Dense(v) => v.iter_mut().for_each(|x| *x *= c),
                GradSlot::Rows { rows, .. } => rows
                    .values_mut()
                    .flat_map(|v| v.iter_mut())
                    .for_each(|x| *x *= c),
            }
        }
    }

    /// Dense copy of one parameter's gradient (zeros when untouched).
    pub fn dense(&self, id: ParamId, len: usize) -> Vec<T> {
        let mut out = vec![T::zero(); len];
        if let Some(slot) = &self.slots[id.0] {
            slot.for_each(|i, g| out[i] = g);
        }
        out
    }

    pub fn squared_norm(&self) -> T {
        let mut total = T::zero();
        for slot in self.slots.iter().flatten() {
            slot.for_each(|_, g| total += g * g);
        }
        total
    }

    /// First parameter holding a NaN or infinite gradient entry.
    pub fn first_non_finite(&self) -> Option<ParamId> {
        self.slots.iter().enumerate().find_map(|(i, slot)| {
            let mut bad = false;
            if let Some(s) = slot {
                s.for_each(|_, g| bad |= !g.is_finite());
            }
            bad.then_some(ParamId(i))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparse_and_dense_merge_agree() {
        let mut a = Gradients::<f64>::new(1);
        a.add_row(ParamId(0), 1, 2, &[1.0, 2.0]);
        let mut b = Gradients::<f64>::new(1);
        b.add_dense(ParamId(0), &[1.0, 1.0, 1.0, 1.0]);
        a.merge(&b);
        assert_eq!(a.dense(ParamId(0), 4), vec![1.0, 1.0, 2.0, 3.0]);
        a.scale(2.0);
        assert_eq!(a.squared_norm(), 4.0 + 4.0 + 16.0 + 36.0);
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut p = ParamSet::<f32>::new();
        p.insert("w", Tensor::zeros(&[1])).unwrap();
        assert!(p.insert("w", Tensor::zeros(&[1])).is_err());
    }
}
