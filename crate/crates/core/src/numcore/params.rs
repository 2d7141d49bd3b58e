use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::Rng;

use super::{NumError, Tensor};

/// Index of an entry inside a [`ParamSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Entry {
    pub(crate) name: String,
    pub(crate) value: Tensor,
    pub(crate) grad: Tensor,
    pub(crate) m: Tensor,
    pub(crate) v: Tensor,
}

/// Named parameter tensors with paired gradient and Adam moment storage.
///
/// Entries keep insertion order, which fixes the order of every traversal
/// (optimizer, serialization, soft updates) and so keeps runs reproducible.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ParamSet {
    pub(crate) entries: Vec<Entry>,
    pub(crate) adam_steps: u64,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a parameter. Names must be unique.
    pub fn insert(&mut self, name: &str, value: Tensor) -> Result<ParamId, NumError> {
        if self.id(name).is_some() {
            return Err(NumError::DuplicateName(name.to_string()));
        }
        if !value.is_finite() {
            return Err(NumError::NonFinite { op: "insert" });
        }
        let shape = value.shape().to_vec();
        self.entries.push(Entry {
            name: name.to_string(),
            grad: Tensor::zeros(&shape),
            m: Tensor::zeros(&shape),
            v: Tensor::zeros(&shape),
            value,
        });
        Ok(ParamId(self.entries.len() - 1))
    }

    /// Affine weight `[fan_in × fan_out]` drawn uniformly from ±sqrt(6/(fan_in+fan_out))
    /// and a zero bias `[fan_out]`.
    pub fn insert_affine<R: Rng>(
        &mut self,
        prefix: &str,
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> Result<(ParamId, ParamId), NumError> {
        let limit = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
        let data = (0..fan_in * fan_out)
            .map(|_| rng.random_range(-limit..limit))
            .collect();
        let w = self.insert(&alloc::format!("{prefix}.w"), Tensor::matrix(fan_in, fan_out, data)?)?;
        let b = self.insert(&alloc::format!("{prefix}.b"), Tensor::zeros(&[fan_out]))?;
        Ok((w, b))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|e| e.name == name).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].grad
    }

    pub(crate) fn grad_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].grad
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.id(name).map(|id| self.value(id))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|e| (e.name.as_str(), &e.value))
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for e in &mut self.entries {
            e.grad.fill(0.0);
        }
    }

    /// Number of Adam updates applied so far.
    pub fn adam_steps(&self) -> u64 {
        self.adam_steps
    }

    /// True when both sets hold the same names with the same shapes, in order.
    pub fn same_layout(&self, other: &ParamSet) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|(a, b)| a.name == b.name && a.value.shape() == b.value.shape())
    }

    /// Copy of the parameter values only, with fresh gradients and optimizer state.
    pub fn detached(&self) -> ParamSet {
        let mut out = ParamSet::new();
        for e in &self.entries {
            let shape = e.value.shape().to_vec();
            out.entries.push(Entry {
                name: e.name.clone(),
                value: e.value.clone(),
                grad: Tensor::zeros(&shape),
                m: Tensor::zeros(&shape),
                v: Tensor::zeros(&shape),
            });
        }
        out
    }

    /// Flattened view of a single scalar, addressed by entry and element index.
    pub fn scalar(&self, id: ParamId, k: usize) -> f64 {
        self.entries[id.0].value.data()[k]
    }

    pub fn set_scalar(&mut self, id: ParamId, k: usize, v: f64) {
        self.entries[id.0].value.data_mut()[k] = v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn duplicate_names_rejected() {
        let mut p = ParamSet::new();
        p.insert("a", Tensor::zeros(&[2])).unwrap();
        assert!(matches!(p.insert("a", Tensor::zeros(&[2])), Err(NumError::DuplicateName(_))));
    }

    #[test]
    fn affine_init_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = ParamSet::new();
        let (w, b) = p.insert_affine("l", 10, 6, &mut rng).unwrap();
        let lim = libm::sqrt(6.0 / 16.0);
        assert!(p.value(w).data().iter().all(|v| v.abs() <= lim));
        assert!(p.value(b).data().iter().all(|v| *v == 0.0));
        assert_eq!(p.grad(w).shape(), &[10, 6]);
    }
}
