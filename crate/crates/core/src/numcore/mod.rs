//! Dense `f64` tensors, a reverse-mode tape, finite-difference checking,
//! AdamW and the `VPW1` parameter checkpoint format.

mod checkpoint;
mod gradcheck;
mod optim;
mod params;
mod tape;
mod tensor;

use std::collections::BTreeMap;

use thiserror::Error;

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use gradcheck::{finite_diff_check, relative_error, GradCheckReport, ParamCheck};
pub use optim::{adamw_step, AdamState, AdamW};
pub use params::{sum_gradients, Gradients, Param, ParamSet};
pub use tape::{Tape, TapeGrads, Var, LAYER_NORM_EPS};
pub use tensor::Tensor;

#[derive(Debug, Error)]
pub enum NumError {
    #[error("dimension error: {0}")]
    Shape(String),
    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("duplicate parameter path `{0}`")]
    DuplicateParam(String),
    #[error("unknown parameter path `{0}`")]
    UnknownParam(String),
    #[error("checkpoint format error at byte {offset}: {reason}")]
    Checkpoint { offset: u64, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Parameters placed on a tape: trainable ones as leaves, frozen ones as
/// constants.
#[derive(Debug, Default)]
pub struct Bound {
    vars: BTreeMap<String, Var>,
}

impl Bound {
    pub fn bind(tape: &mut Tape, params: &ParamSet) -> Self {
        let vars = params
            .iter()
            .map(|(path, p)| {
                let v = if p.trainable { tape.leaf(p.value.clone()) } else { tape.input(p.value.clone()) };
                (path.to_string(), v)
            })
            .collect();
        Self { vars }
    }

    pub fn get(&self, path: &str) -> Result<Var, NumError> {
        self.vars.get(path).copied().ok_or_else(|| NumError::UnknownParam(path.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Collects adjoints for every trainable parameter; unused ones get zeros.
    pub fn collect(&self, params: &ParamSet, grads: &mut TapeGrads) -> Gradients {
        let mut out = Gradients::new();
        for (path, p) in params.iter() {
            if !p.trainable {
                continue;
            }
            let g = self
                .vars
                .get(path)
                .and_then(|&v| grads.take(v))
                .unwrap_or_else(|| Tensor::zeros(p.value.shape()));
            out.insert(path.to_string(), g);
        }
        out
    }
}

/// Value and gradient of a scalar loss built on a fresh tape.
pub fn grad<E, F>(params: &ParamSet, loss_fn: F) -> Result<(f64, Gradients), E>
where
    E: From<NumError>,
    F: FnOnce(&mut Tape, &Bound) -> Result<Var, E>,
{
    let mut tape = Tape::new();
    let bound = Bound::bind(&mut tape, params);
    let loss = loss_fn(&mut tape, &bound)?;
    let value = tape.value(loss).item().ok_or_else(|| NumError::NonScalarLoss(tape.shape(loss).to_vec()))?;
    let mut tg = tape.backward(loss)?;
    Ok((value, bound.collect(params, &mut tg)))
}

/// A scalar function of a [`ParamSet`] with an analytic gradient.
pub trait Objective: Sync {
    type Error: From<NumError> + Send;

    fn value(&self, params: &ParamSet) -> Result<f64, Self::Error>;

    fn value_and_grad(&self, params: &ParamSet) -> Result<(f64, Gradients), Self::Error>;
}

/// Adapts a tape-building closure into an [`Objective`].
pub struct TapeObjective<F>(pub F);

impl<F> Objective for TapeObjective<F>
where
    F: Fn(&mut Tape, &Bound) -> Result<Var, NumError> + Sync,
{
    type Error = NumError;

    fn value(&self, params: &ParamSet) -> Result<f64, NumError> {
        let mut tape = Tape::new();
        let bound = Bound::bind(&mut tape, params);
        let loss = (self.0)(&mut tape, &bound)?;
        tape.value(loss).item().ok_or_else(|| NumError::NonScalarLoss(tape.shape(loss).to_vec()))
    }

    fn value_and_grad(&self, params: &ParamSet) -> Result<(f64, Gradients), NumError> {
        grad(params, |t, b| (self.0)(t, b))
    }
}
