use std::collections::BTreeMap;

use super::{NumError, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub value: Tensor,
    pub trainable: bool,
}

/// Named parameters addressed by dotted path. Iteration order is the sorted
/// path order, which keeps checkpoints and reductions deterministic.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    entries: BTreeMap<String, Param>,
}

/// Gradient per trainable parameter path.
pub type Gradients = BTreeMap<String, Tensor>;

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a new parameter; paths must be unique.
    pub fn insert(&mut self, path: impl Into<String>, value: Tensor, trainable: bool) -> Result<(), NumError> {
        let path = path.into();
        if self.entries.contains_key(&path) {
            return Err(NumError::DuplicateParam(path));
        }
        self.entries.insert(path, Param { value, trainable });
        Ok(())
    }

    pub fn trainable(&mut self, path: impl Into<String>, value: Tensor) -> Result<(), NumError> {
        self.insert(path, value, true)
    }

    pub fn frozen(&mut self, path: impl Into<String>, value: Tensor) -> Result<(), NumError> {
        self.insert(path, value, false)
    }

    pub fn get(&self, path: &str) -> Option<&Tensor> {
        self.entries.get(path).map(|p| &p.value)
    }

    pub fn get_mut(&mut self, path: &str) -> Option<&mut Tensor> {
        self.entries.get_mut(path).map(|p| &mut p.value)
    }

    pub fn param(&self, path: &str) -> Option<&Param> {
        self.entries.get(path)
    }

    pub fn contains(&self, path: &str) -> bool {
        self.entries.contains_key(path)
    }

    pub fn set_trainable(&mut self, path: &str, trainable: bool) -> Result<(), NumError> {
        let p = self.entries.get_mut(path).ok_or_else(|| NumError::UnknownParam(path.to_string()))?;
        p.trainable = trainable;
        Ok(())
    }

    pub fn is_trainable(&self, path: &str) -> bool {
        self.entries.get(path).is_some_and(|p| p.trainable)
    }

    pub fn remove(&mut self, path: &str) -> Option<Param> {
        self.entries.remove(path)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn paths(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn trainable_paths(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().filter(|(_, p)| p.trainable).map(|(k, _)| k.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn element_count(&self) -> usize {
        self.entries.values().map(|p| p.value.len()).sum()
    }
}

/// Sums gradient maps in the given order.
pub fn sum_gradients<'a>(parts: impl IntoIterator<Item = &'a Gradients>) -> Gradients {
    let mut out = Gradients::new();
    for g in parts {
        for (k, v) in g {
            match out.get_mut(k) {
                Some(acc) => acc.add_assign(v),
                None => {
                    out.insert(k.clone(), v.clone());
                }
            }
        }
    }
    out
}
