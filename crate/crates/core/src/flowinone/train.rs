//! Training: split-tape gradients, AdamW with a warmup-cosine schedule, loss
//! CSV and periodic checkpoints.
//!
//! Each example gets its own tape. The contrastive term couples the batch
//! only through the posterior samples `z0`, so it is differentiated on a
//! small tape of its own and its adjoints are fed back into each example
//! tape as extra seeds. Per-example gradients are reduced in index order.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::flow::clip_contrastive_loss;
use super::model::Net;
use super::pipeline::{batch_loss, example_graph, Example, ExampleNoise, LossComponents};
use super::{FlowError, FlowInOne, ModelConfig, TrainConfig};
use crate::dataset::{BalancedSampler, DatasetError, PairRecord};
use crate::exec::Exec;
use crate::numcore::{
    adamw_step, sum_gradients, write_checkpoint, AdamState, AdamW, Bound, Gradients, Objective, ParamSet, Tape, Tensor,
};

pub const LOSS_CSV_HEADER: &str = "step,fm,kld,clip,total,lr";

/// Random stream for example `index` of step `step`.
pub fn example_rng(seed: u64, step: usize, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((step as u64) << 24) ^ index as u64);
    rng
}

/// Batch loss and its gradient for every trainable parameter.
pub(crate) fn loss_and_grad(
    config: &ModelConfig,
    params: &ParamSet,
    examples: &[&Example],
    noises: &[ExampleNoise],
    exec: Exec,
) -> Result<(LossComponents, Gradients), FlowError> {
    let b = examples.len();
    if b == 0 || b != noises.len() {
        return Err(FlowError::Contract(format!("{b} examples with {} noise draws", noises.len())));
    }
    let jobs: Vec<(&Example, &ExampleNoise)> = examples.iter().copied().zip(noises).collect();
    let forward = exec.map(&jobs, |(ex, noise)| {
        let mut t = Tape::new();
        let bound = Bound::bind(&mut t, params);
        let g = example_graph(&mut t, &Net { config, bound: &bound }, ex, noise)?;
        Ok::<_, FlowError>((t, bound, g))
    });
    let forward: Vec<_> = forward.into_iter().collect::<Result<_, _>>()?;

    let mut ct = Tape::new();
    let z0s: Vec<_> = forward.iter().map(|(t, _, g)| ct.leaf(t.value(g.z0).clone())).collect();
    let z1s: Vec<_> = examples.iter().map(|e| ct.input(e.z1.clone())).collect();
    let tau = params.get("clip.log_tau").ok_or_else(|| FlowError::Contract("missing clip.log_tau".into()))?.clone();
    let learn_tau = params.is_trainable("clip.log_tau");
    let log_tau = if learn_tau { ct.leaf(tau) } else { ct.input(tau) };
    let clip = clip_contrastive_loss(&mut ct, &z0s, &z1s, log_tau)?;
    let clip_value = ct.value(clip).data()[0];
    let cg = ct.backward(clip)?;

    let (mut fm, mut kld) = (0.0, 0.0);
    for (t, _, g) in &forward {
        fm += t.value(g.fm).data()[0];
        kld += t.value(g.kld).data()[0];
    }
    let seeded: Vec<_> = forward
        .into_iter()
        .zip(&z0s)
        .map(|((t, bound, g), &zv)| {
            let dz = cg.get(zv).map(|d| d.scale(config.beta2)).unwrap_or_else(|| Tensor::zeros(t.shape(g.z0)));
            (t, bound, vec![(g.local, Tensor::scalar(1.0 / b as f64)), (g.z0, dz)])
        })
        .collect();
    let parts = exec.map_owned(seeded, |_, (t, bound, seeds)| {
        let mut tg = t.backward_seeded(&seeds)?;
        Ok::<_, FlowError>(bound.collect(params, &mut tg))
    });
    let parts: Vec<Gradients> = parts.into_iter().collect::<Result<_, _>>()?;
    let mut grads = sum_gradients(&parts);
    if learn_tau {
        let g = cg.get(log_tau).map(|g| g.scale(config.beta2)).unwrap_or_else(|| Tensor::zeros(&[1]));
        grads.insert("clip.log_tau".to_string(), g);
    }
    let n = b as f64;
    Ok((LossComponents::combine(fm / n, kld / n, clip_value, config.beta1, config.beta2), grads))
}

/// The batch loss at fixed noise as a function of the parameters.
pub struct BatchObjective {
    pub config: ModelConfig,
    pub examples: Vec<Example>,
    pub noises: Vec<ExampleNoise>,
    pub exec: Exec,
}

impl Objective for BatchObjective {
    type Error = FlowError;

    fn value(&self, params: &ParamSet) -> Result<f64, FlowError> {
        let refs: Vec<&Example> = self.examples.iter().collect();
        Ok(batch_loss(&self.config, params, &refs, &self.noises, self.exec)?.total)
    }

    fn value_and_grad(&self, params: &ParamSet) -> Result<(f64, Gradients), FlowError> {
        let refs: Vec<&Example> = self.examples.iter().collect();
        let (l, g) = loss_and_grad(&self.config, params, &refs, &self.noises, self.exec)?;
        Ok((l.total, g))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossRow {
    pub step: usize,
    pub fm: f64,
    pub kld: f64,
    pub clip: f64,
    pub total: f64,
    pub lr: f64,
}

impl LossRow {
    pub fn csv(&self) -> String {
        format!("{},{},{},{},{},{}", self.step, self.fm, self.kld, self.clip, self.total, self.lr)
    }
}

/// Parses a loss CSV written by [`train`].
pub fn read_loss_csv(text: &str) -> Result<Vec<LossRow>, FlowError> {
    let mut lines = text.lines();
    if lines.next() != Some(LOSS_CSV_HEADER) {
        return Err(FlowError::Contract("loss CSV header missing".into()));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let bad = || FlowError::Contract(format!("loss CSV row {}: `{line}`", i + 1));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(bad());
            }
            let num = |k: usize| f[k].parse::<f64>().map_err(|_| bad());
            Ok(LossRow {
                step: f[0].parse().map_err(|_| bad())?,
                fm: num(1)?,
                kld: num(2)?,
                clip: num(3)?,
                total: num(4)?,
                lr: num(5)?,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    pub step: usize,
    pub loss: LossComponents,
    pub lr: f64,
}

impl StepOutcome {
    pub fn row(&self) -> LossRow {
        let l = self.loss;
        LossRow { step: self.step, fm: l.fm, kld: l.kld, clip: l.clip, total: l.total, lr: self.lr }
    }
}

/// Optimiser state around a model.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub model: FlowInOne,
    pub config: TrainConfig,
    pub adam: AdamState,
    pub step: usize,
    pub exec: Exec,
}

impl Trainer {
    pub fn new(model: FlowInOne, config: TrainConfig, exec: Exec) -> Self {
        Self { model, config, adam: AdamState::new(), step: 0, exec }
    }

    pub fn noise_for(&self, batch_len: usize) -> Vec<ExampleNoise> {
        (0..batch_len)
            .map(|i| ExampleNoise::draw(&self.model.config, &mut example_rng(self.config.seed, self.step, i)))
            .collect()
    }

    /// One optimisation step. A non-finite loss aborts before any update.
    pub fn step(&mut self, batch: &[&Example]) -> Result<StepOutcome, FlowError> {
        let noises = self.noise_for(batch.len());
        let (loss, grads) = loss_and_grad(&self.model.config, &self.model.params, batch, &noises, self.exec)?;
        if !loss.is_finite() {
            return Err(FlowError::NonFinite { step: self.step, fm: loss.fm, kld: loss.kld, clip: loss.clip });
        }
        let c = &self.config;
        let lr = c.lr_at(self.step);
        let hp = AdamW { lr, beta1: c.adam_beta1, beta2: c.adam_beta2, eps: c.adam_eps, weight_decay: c.weight_decay };
        adamw_step(&mut self.model.params, &grads, &mut self.adam, &hp)?;
        let out = StepOutcome { step: self.step, loss, lr };
        self.step += 1;
        Ok(out)
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: FlowInOne,
    pub losses: Vec<LossRow>,
}

fn save_params(params: &ParamSet, path: &Path) -> Result<(), FlowError> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    write_checkpoint(params, &mut w)?;
    w.flush()?;
    Ok(())
}

/// Trains on balanced batches drawn from `records`. With `out_dir`, writes
/// `loss.csv`, `model.json`, `ckpt-<step>.vpw` every `checkpoint_every`
/// steps and the final `model.vpw`.
pub fn train(
    model: FlowInOne,
    records: &[PairRecord],
    config: &TrainConfig,
    out_dir: Option<&Path>,
    exec: Exec,
) -> Result<TrainOutcome, FlowError> {
    if records.is_empty() {
        return Err(DatasetError::Empty.into());
    }
    if config.batch_size == 0 {
        return Err(FlowError::Config("batch size must be positive".into()));
    }
    let examples: Vec<Example> = exec.map(records, |r| model.prepare(r)).into_iter().collect::<Result<_, _>>()?;
    let categories: Vec<_> = records.iter().map(PairRecord::category).collect();
    let mut sampler = BalancedSampler::new(&categories, config.batch_size, config.seed)?;
    let mut csv = match out_dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let json = serde_json::to_string_pretty(&model.config).map_err(|e| FlowError::Contract(e.to_string()))?;
            fs::write(dir.join("model.json"), json + "\n")?;
            let mut w = BufWriter::new(fs::File::create(dir.join("loss.csv"))?);
            writeln!(w, "{LOSS_CSV_HEADER}")?;
            Some(w)
        }
        None => None,
    };
    let mut trainer = Trainer::new(model, config.clone(), exec);
    let mut losses = Vec::with_capacity(config.steps);
    for _ in 0..config.steps {
        let batch = sampler.next().expect("endless sampler");
        let refs: Vec<&Example> = batch.members.iter().map(|&i| &examples[i]).collect();
        let row = trainer.step(&refs)?.row();
        if let Some(w) = csv.as_mut() {
            writeln!(w, "{}", row.csv())?;
        }
        losses.push(row);
        if let (Some(dir), k) = (out_dir, config.checkpoint_every) {
            if k > 0 && trainer.step % k == 0 {
                save_params(&trainer.model.params, &dir.join(format!("ckpt-{:06}.vpw", trainer.step)))?;
            }
        }
    }
    if let Some(mut w) = csv {
        w.flush()?;
    }
    if let Some(dir) = out_dir {
        save_params(&trainer.model.params, &dir.join("model.vpw"))?;
    }
    Ok(TrainOutcome { model: trainer.model, losses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::finite_diff_check;
    use crate::render::Canvas;
    use rand::Rng;

    fn canvas(seed: u64) -> Canvas {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let px: Vec<u8> = (0..3 * 16 * 16).map(|_| rng.random()).collect();
        Canvas::from_rgb(16, 16, &px).unwrap()
    }

    /// Miniature model with every zero-initialised weight perturbed so that
    /// no gradient path is trivially dead.
    fn perturbed() -> FlowInOne {
        let mut m = FlowInOne::new(ModelConfig::miniature()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let paths: Vec<String> = m.params.trainable_paths().map(String::from).collect();
        for p in paths {
            for v in m.params.get_mut(&p).unwrap().data_mut() {
                *v += 0.2 * (rng.random::<f64>() - 0.5);
            }
        }
        m
    }

    fn objective(m: &FlowInOne, exec: Exec) -> BatchObjective {
        let examples: Vec<Example> = (0..3).map(|i| m.example(&canvas(i), &canvas(100 + i), i != 0).unwrap()).collect();
        let noises = (0..3)
            .map(|i| ExampleNoise { drop: false, ..ExampleNoise::draw(&m.config, &mut example_rng(4, 0, i)) })
            .collect();
        BatchObjective { config: m.config.clone(), examples, noises, exec }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let m = perturbed();
        let obj = objective(&m, Exec::Parallel);
        let report = finite_diff_check(&obj, &m.params, 1e-5, 1e-4, Exec::Parallel).unwrap();
        let worst: Vec<_> = report.failures().map(|(p, c)| (p.to_string(), c.clone())).collect();
        assert!(report.passed(), "{worst:?}");
        assert!(report.per_param.contains_key("clip.log_tau"));
        assert!(report.per_param.keys().any(|k| k.contains("xattn")));
    }

    #[test]
    fn split_gradient_matches_value() {
        let m = perturbed();
        let obj = objective(&m, Exec::Sequential);
        let (v, _) = obj.value_and_grad(&m.params).unwrap();
        assert!((v - obj.value(&m.params).unwrap()).abs() < 1e-12);
        let par = objective(&m, Exec::Parallel).value_and_grad(&m.params).unwrap();
        assert_eq!(obj.value_and_grad(&m.params).unwrap().1, par.1);
    }

    #[test]
    fn first_step_is_a_no_op_and_csv_round_trips() {
        let m = FlowInOne::new(ModelConfig::miniature()).unwrap();
        let ex: Vec<Example> = (0..2).map(|i| m.example(&canvas(i), &canvas(9 + i), false).unwrap()).collect();
        let refs: Vec<&Example> = ex.iter().collect();
        let cfg = TrainConfig { steps: 10, warmup: 2, batch_size: 2, lr: 1e-2, ..TrainConfig::default() };
        let mut tr = Trainer::new(m.clone(), cfg, Exec::Parallel);
        let s0 = tr.step(&refs).unwrap();
        assert_eq!(s0.lr, 0.0);
        assert_eq!(tr.model.params, m.params);
        let s1 = tr.step(&refs).unwrap();
        assert_eq!(s1.lr, 5e-3);
        assert_ne!(tr.model.params, m.params);
        let text = format!("{LOSS_CSV_HEADER}\n{}\n{}\n", s0.row().csv(), s1.row().csv());
        assert_eq!(read_loss_csv(&text).unwrap(), vec![s0.row(), s1.row()]);
    }

    #[test]
    fn non_finite_loss_aborts() {
        let mut m = FlowInOne::new(ModelConfig::miniature()).unwrap();
        m.params.get_mut("head.b").unwrap().data_mut()[0] = f64::NAN;
        let ex = m.example(&canvas(1), &canvas(2), false).unwrap();
        let mut tr = Trainer::new(m, TrainConfig::default(), Exec::Sequential);
        match tr.step(&[&ex]) {
            Err(FlowError::NonFinite { step: 0, fm, .. }) => assert!(fm.is_nan()),
            other => panic!("expected abort, got {other:?}"),
        }
    }
}
