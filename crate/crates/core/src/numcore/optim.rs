use std::collections::BTreeMap;

use super::{Gradients, NumError, ParamSet, Tensor};

/// AdamW hyper-parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamW {
    fn default() -> Self {
        Self { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.0 }
    }
}

/// First and second moments per parameter, plus the step counter.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamState {
    pub step: u64,
    m: BTreeMap<String, Tensor>,
    v: BTreeMap<String, Tensor>,
}

impl AdamState {
    pub fn new() -> Self {
        Self::default()
    }
}

/// One decoupled-weight-decay Adam update with bias correction. Frozen
/// parameters and parameters without a gradient are left untouched.
pub fn adamw_step(params: &mut ParamSet, grads: &Gradients, state: &mut AdamState, hp: &AdamW) -> Result<(), NumError> {
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - hp.beta1.powi(t);
    let bc2 = 1.0 - hp.beta2.powi(t);
    let paths: Vec<String> = params.trainable_paths().map(str::to_string).collect();
    for path in paths {
        let Some(g) = grads.get(&path) else { continue };
        let p = params.get_mut(&path).expect("listed path");
        if g.shape() != p.shape() {
            return Err(NumError::Shape(format!(
                "gradient for `{path}` has shape {:?}, parameter {:?}",
                g.shape(),
                p.shape()
            )));
        }
        let m = state.m.entry(path.clone()).or_insert_with(|| Tensor::zeros(g.shape()));
        let v = state.v.entry(path.clone()).or_insert_with(|| Tensor::zeros(g.shape()));
        let (pd, md, vd) = (p.data_mut(), m.data_mut(), v.data_mut());
        for (k, &gk) in g.data().iter().enumerate() {
            md[k] = hp.beta1 * md[k] + (1.0 - hp.beta1) * gk;
            vd[k] = hp.beta2 * vd[k] + (1.0 - hp.beta2) * gk * gk;
            let mhat = md[k] / bc1;
            let vhat = vd[k] / bc2;
            pd[k] -= hp.lr * hp.weight_decay * pd[k];
            pd[k] -= hp.lr * mhat / (vhat.sqrt() + hp.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(path: &str, v: f64, trainable: bool) -> ParamSet {
        let mut p = ParamSet::new();
        p.insert(path, Tensor::scalar(v), trainable).unwrap();
        p
    }

    fn grads(path: &str, g: f64) -> Gradients {
        let mut out = Gradients::new();
        out.insert(path.into(), Tensor::scalar(g));
        out
    }

    #[test]
    fn zero_gradient_no_decay_is_noop() {
        let mut p = one("w", 1.5, true);
        let mut s = AdamState::new();
        adamw_step(&mut p, &grads("w", 0.0), &mut s, &AdamW { lr: 0.1, ..AdamW::default() }).unwrap();
        assert_eq!(p.get("w").unwrap().data()[0], 1.5);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = one("w", 0.0, true);
        let mut s = AdamState::new();
        adamw_step(&mut p, &grads("w", 1.0), &mut s, &AdamW { lr: 0.1, ..AdamW::default() }).unwrap();
        // m̂ = v̂ = 1 after bias correction
        let dp = p.get("w").unwrap().data()[0];
        assert!((dp + 0.1 / (1.0 + 1e-8)).abs() < 1e-15, "{dp}");
    }

    #[test]
    fn decoupled_decay() {
        let mut p = one("w", 2.0, true);
        let mut s = AdamState::new();
        let hp = AdamW { lr: 0.1, weight_decay: 0.5, ..AdamW::default() };
        adamw_step(&mut p, &grads("w", 0.0), &mut s, &hp).unwrap();
        assert!((p.get("w").unwrap().data()[0] - 2.0 * (1.0 - 0.1 * 0.5)).abs() < 1e-15);
    }

    #[test]
    fn frozen_untouched() {
        let mut p = one("w", 2.0, false);
        let mut s = AdamState::new();
        let hp = AdamW { lr: 0.1, weight_decay: 0.5, ..AdamW::default() };
        adamw_step(&mut p, &grads("w", 3.0), &mut s, &hp).unwrap();
        assert_eq!(p.get("w").unwrap().data()[0], 2.0);
    }
}
