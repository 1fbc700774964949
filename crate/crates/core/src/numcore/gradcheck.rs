use std::collections::BTreeMap;

use super::{Objective, ParamSet};
use crate::exec::Exec;

/// Worst element of one parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamCheck {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub epsilon: f64,
    pub tolerance: f64,
    pub per_param: BTreeMap<String, ParamCheck>,
    pub elements_checked: usize,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.per_param.values().map(|c| c.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.per_param.values().all(|c| c.max_rel_error <= self.tolerance)
    }

    pub fn failures(&self) -> impl Iterator<Item = (&str, &ParamCheck)> {
        self.per_param
            .iter()
            .filter(|(_, c)| c.max_rel_error > self.tolerance)
            .map(|(k, c)| (k.as_str(), c))
    }
}

/// `|a - n| / max(1e-8, |a| + |n|)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Compares the objective's analytic gradient with central differences,
/// element by element, for every trainable parameter. Elements are
/// perturbed independently, so `exec` may spread them over threads.
pub fn finite_diff_check<O: Objective>(
    objective: &O,
    params: &ParamSet,
    epsilon: f64,
    tolerance: f64,
    exec: Exec,
) -> Result<GradCheckReport, O::Error> {
    assert!(epsilon > 0.0, "epsilon must be positive");
    let (_, analytic) = objective.value_and_grad(params)?;
    let mut jobs = Vec::new();
    for path in params.trainable_paths() {
        let n = params.get(path).map_or(0, |t| t.len());
        jobs.extend((0..n).map(|i| (path.to_string(), i)));
    }
    let numeric: Vec<Result<f64, O::Error>> = exec.map(&jobs, |(path, i)| {
        let mut p = params.clone();
        let x0 = p.get(path).expect("path exists").data()[*i];
        p.get_mut(path).expect("path exists").data_mut()[*i] = x0 + epsilon;
        let up = objective.value(&p)?;
        p.get_mut(path).expect("path exists").data_mut()[*i] = x0 - epsilon;
        let down = objective.value(&p)?;
        Ok((up - down) / (2.0 * epsilon))
    });
    let mut per_param: BTreeMap<String, ParamCheck> = BTreeMap::new();
    for ((path, i), num) in jobs.iter().zip(numeric) {
        let num = num?;
        let a = analytic.get(path).map_or(0.0, |g| g.data()[*i]);
        let err = relative_error(a, num);
        let entry = per_param.entry(path.clone()).or_insert(ParamCheck {
            max_rel_error: 0.0,
            worst_index: 0,
            analytic: a,
            numeric: num,
        });
        if err > entry.max_rel_error {
            *entry = ParamCheck { max_rel_error: err, worst_index: *i, analytic: a, numeric: num };
        }
    }
    Ok(GradCheckReport { epsilon, tolerance, per_param, elements_checked: jobs.len() })
}
