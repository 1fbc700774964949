//! Per-example forward graphs, batch losses and the model handle.

use rand::Rng;

use super::flow::{self, PosteriorParams};
use super::model::{init_params, Net};
use super::{patchify, Codec, FlowError, ModelConfig};
use crate::dataset::PairRecord;
use crate::exec::Exec;
use crate::numcore::{Bound, ParamSet, Tape, Tensor, Var};
use crate::render::Canvas;

/// A training pair reduced to tensors: encoder patches of the instruction
/// canvas, the target latent and, for editing pairs, the source latent.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub patches: Tensor,
    pub z1: Tensor,
    pub z_src: Option<Tensor>,
}

/// Randomness consumed by one example in one step.
#[derive(Clone, Debug, PartialEq)]
pub struct ExampleNoise {
    pub t: f64,
    pub eps: Tensor,
    /// Conditioning dropped: the example trains the unconditional branch.
    pub drop: bool,
}

impl ExampleNoise {
    pub fn draw<R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> Self {
        let t = rng.random::<f64>();
        let drop = config.p_drop > 0.0 && rng.random::<f64>() < config.p_drop;
        let eps = flow::standard_normal(&[config.tokens(), config.width], rng);
        Self { t, eps, drop }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossComponents {
    pub fm: f64,
    pub kld: f64,
    pub clip: f64,
    pub total: f64,
}

impl LossComponents {
    pub fn combine(fm: f64, kld: f64, clip: f64, beta1: f64, beta2: f64) -> Self {
        Self { fm, kld, clip, total: fm + beta1 * kld + beta2 * clip }
    }

    pub fn is_finite(&self) -> bool {
        self.fm.is_finite() && self.kld.is_finite() && self.clip.is_finite() && self.total.is_finite()
    }
}

/// Nodes of one example's graph needed by the batch-level losses.
pub(crate) struct ExampleGraph {
    pub z0: Var,
    pub fm: Var,
    pub kld: Var,
    /// `fm + β1·kld`
    pub local: Var,
}

pub(crate) fn example_graph(
    t: &mut Tape,
    net: &Net<'_>,
    ex: &Example,
    noise: &ExampleNoise,
) -> Result<ExampleGraph, FlowError> {
    let c = net.config;
    let patches = t.input(ex.patches.clone());
    let x = net.encode_visual(t, patches)?;
    let x = net.compress(t, x)?;
    let (mu, log_sigma) = net.posterior(t, x)?;
    let sigma = t.exp(log_sigma);
    let eps = t.input(noise.eps.clone());
    let se = t.mul(sigma, eps)?;
    let z0 = t.add(mu, se)?;
    let z1 = t.input(ex.z1.clone());
    let a = t.scale(z1, noise.t);
    let b = t.scale(z0, 1.0 - (1.0 - c.sigma_min) * noise.t);
    let zt = t.add(a, b)?;
    let b = t.scale(z0, 1.0 - c.sigma_min);
    let v_star = t.sub(z1, b)?;
    let src = match (&ex.z_src, noise.drop) {
        (Some(s), false) => Some(t.input(s.clone())),
        _ => None,
    };
    let v = net.velocity(t, zt, noise.t, src, src.is_some())?;
    let fm = flow::fm_loss(t, v, v_star)?;
    let kld = flow::kld_loss(t, mu, log_sigma)?;
    let w = t.scale(kld, c.beta1);
    let local = t.add(fm, w)?;
    Ok(ExampleGraph { z0, fm, kld, local })
}

fn scalar(t: &Tape, v: Var) -> f64 {
    t.value(v).data()[0]
}

/// Forward-only batch loss: per-example terms averaged in index order, plus
/// the contrastive term over the whole batch.
pub(crate) fn batch_loss(
    config: &ModelConfig,
    params: &ParamSet,
    examples: &[&Example],
    noises: &[ExampleNoise],
    exec: Exec,
) -> Result<LossComponents, FlowError> {
    if examples.is_empty() || examples.len() != noises.len() {
        return Err(FlowError::Contract(format!("{} examples with {} noise draws", examples.len(), noises.len())));
    }
    let jobs: Vec<(&Example, &ExampleNoise)> = examples.iter().copied().zip(noises).collect();
    let parts = exec.map(&jobs, |(ex, noise)| -> Result<(f64, f64, Tensor), FlowError> {
        let mut t = Tape::new();
        let bound = Bound::bind(&mut t, params);
        let g = example_graph(&mut t, &Net { config, bound: &bound }, ex, noise)?;
        Ok((scalar(&t, g.fm), scalar(&t, g.kld), t.value(g.z0).clone()))
    });
    let (mut fm, mut kld, mut z0s) = (0.0, 0.0, Vec::with_capacity(parts.len()));
    for p in parts {
        let (f, k, z) = p?;
        fm += f;
        kld += k;
        z0s.push(z);
    }
    let b = examples.len() as f64;
    let z1s: Vec<Tensor> = examples.iter().map(|e| e.z1.clone()).collect();
    let log_tau = params.get("clip.log_tau").ok_or_else(|| FlowError::Contract("missing clip.log_tau".into()))?;
    let clip = flow::clip_contrastive_value(&z0s, &z1s, log_tau.data()[0].exp())?;
    Ok(LossComponents::combine(fm / b, kld / b, clip, config.beta1, config.beta2))
}

/// Keeps the first `n` tokens and `d` features, zero-padding when short.
/// The naive alternative to the learned compression.
pub fn truncate_tokens(x: &Tensor, n: usize, d: usize) -> Result<Tensor, FlowError> {
    let (rows, cols) = x.dims2()?;
    let mut out = Tensor::zeros(&[n, d]);
    for i in 0..n.min(rows) {
        for j in 0..d.min(cols) {
            out.data_mut()[i * d + j] = x.data()[i * cols + j];
        }
    }
    Ok(out)
}

/// Configuration, frozen codec and parameters of one model.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowInOne {
    pub config: ModelConfig,
    pub codec: Codec,
    pub params: ParamSet,
}

impl FlowInOne {
    pub fn new(config: ModelConfig) -> Result<Self, FlowError> {
        let params = init_params(&config)?;
        Ok(Self { codec: Codec::new(&config), config, params })
    }

    /// Adopts loaded parameters after checking them against the layout the
    /// configuration implies.
    pub fn with_params(config: ModelConfig, params: ParamSet) -> Result<Self, FlowError> {
        let reference = init_params(&config)?;
        for (path, p) in reference.iter() {
            match params.get(path) {
                Some(v) if v.shape() == p.value.shape() => {}
                Some(v) => {
                    return Err(FlowError::Contract(format!(
                        "parameter `{path}` has shape {:?}, expected {:?}",
                        v.shape(),
                        p.value.shape()
                    )))
                }
                None => return Err(FlowError::Contract(format!("parameter `{path}` missing"))),
            }
        }
        if let Some(extra) = params.paths().find(|p| !reference.contains(p)) {
            return Err(FlowError::Contract(format!("unexpected parameter `{extra}`")));
        }
        Ok(Self { codec: Codec::new(&config), config, params })
    }

    fn check_canvas(&self, canvas: &Canvas) -> Result<(), FlowError> {
        let s = self.config.image_side;
        if (canvas.width(), canvas.height()) != (s, s) {
            return Err(FlowError::Contract(format!(
                "canvas is {}x{}, model expects {s}x{s}",
                canvas.width(),
                canvas.height()
            )));
        }
        Ok(())
    }

    pub fn visual_patches(&self, canvas: &Canvas) -> Result<Tensor, FlowError> {
        self.check_canvas(canvas)?;
        patchify(canvas, self.config.enc_patch)
    }

    pub fn encode_target(&self, canvas: &Canvas) -> Result<Tensor, FlowError> {
        self.codec.encode(canvas)
    }

    pub fn decode_target(&self, z: &Tensor) -> Result<Canvas, FlowError> {
        self.codec.decode(z)
    }

    /// Builds the example for an instruction canvas and its target. The
    /// annotated canvas doubles as the editing source.
    pub fn example(&self, input: &Canvas, target: &Canvas, editing: bool) -> Result<Example, FlowError> {
        let z_src = if editing { Some(self.codec.encode(input)?) } else { None };
        Ok(Example { patches: self.visual_patches(input)?, z1: self.codec.encode(target)?, z_src })
    }

    pub fn prepare(&self, record: &PairRecord) -> Result<Example, FlowError> {
        self.example(&record.input, &record.target, record.category().is_editing())
    }

    fn with_net<T>(&self, f: impl FnOnce(&mut Tape, &Net<'_>) -> Result<T, FlowError>) -> Result<T, FlowError> {
        let mut t = Tape::new();
        let bound = Bound::bind(&mut t, &self.params);
        f(&mut t, &Net { config: &self.config, bound: &bound })
    }

    /// Visual encoder output for a canvas, `[N_enc, D_enc]`.
    pub fn encode_visual(&self, canvas: &Canvas) -> Result<Tensor, FlowError> {
        let patches = self.visual_patches(canvas)?;
        self.with_net(|t, net| {
            let p = t.input(patches);
            let x = net.encode_visual(t, p)?;
            Ok(t.value(x).clone())
        })
    }

    pub fn compress(&self, x_fuse: &Tensor) -> Result<Tensor, FlowError> {
        let want = [self.config.enc_tokens(), self.config.enc_dim];
        if x_fuse.shape() != want {
            return Err(FlowError::Contract(format!("encoder output {:?}, expected {want:?}", x_fuse.shape())));
        }
        self.with_net(|t, net| {
            let x = t.input(x_fuse.clone());
            let y = net.compress(t, x)?;
            Ok(t.value(y).clone())
        })
    }

    pub fn posterior_of(&self, x: &Tensor) -> Result<PosteriorParams, FlowError> {
        self.with_net(|t, net| {
            let x = t.input(x.clone());
            let (mu, ls) = net.posterior(t, x)?;
            Ok(PosteriorParams::from_log_sigma(t.value(mu).clone(), t.value(ls)))
        })
    }

    /// Posterior of the instruction latent for a canvas.
    pub fn posterior(&self, canvas: &Canvas) -> Result<PosteriorParams, FlowError> {
        let x = self.encode_visual(canvas)?;
        let x = self.compress(&x)?;
        self.posterior_of(&x)
    }

    pub fn velocity(&self, zt: &Tensor, time: f64, src: Option<&Tensor>, i_edit: bool) -> Result<Tensor, FlowError> {
        if !(0.0..=1.0).contains(&time) {
            return Err(FlowError::Contract(format!("time {time} outside [0, 1]")));
        }
        self.with_net(|t, net| {
            let z = t.input(zt.clone());
            let s = src.map(|s| t.input(s.clone()));
            let v = net.velocity(t, z, time, s, i_edit)?;
            Ok(t.value(v).clone())
        })
    }

    /// Batch loss with explicit per-example noise.
    pub fn loss_with_noise(&self, batch: &[&Example], noises: &[ExampleNoise], exec: Exec) -> Result<LossComponents, FlowError> {
        batch_loss(&self.config, &self.params, batch, noises, exec)
    }

    /// Batch loss with `t`, `ε` and dropout drawn from `rng` in example order.
    pub fn total_loss<R: Rng + ?Sized>(&self, batch: &[&Example], rng: &mut R, exec: Exec) -> Result<LossComponents, FlowError> {
        let noises: Vec<ExampleNoise> = batch.iter().map(|_| ExampleNoise::draw(&self.config, rng)).collect();
        self.loss_with_noise(batch, &noises, exec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::Rgba;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn noise_canvas(side: u32, seed: u64) -> Canvas {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let px: Vec<u8> = (0..3 * side * side).map(|_| rng.random()).collect();
        Canvas::from_rgb(side, side, &px).unwrap()
    }

    fn mini() -> FlowInOne {
        FlowInOne::new(ModelConfig::miniature()).unwrap()
    }

    #[test]
    fn encoder_shapes_and_positions() {
        let m = FlowInOne::new(ModelConfig::default()).unwrap();
        let x = m.encode_visual(&noise_canvas(64, 1)).unwrap();
        assert_eq!(x.shape(), [64, 96]);
        assert_eq!(m.compress(&x).unwrap().shape(), [64, 64]);
        let mut z = mini();
        let paths: Vec<String> = z.params.paths().filter(|p| p.starts_with("enc.") && *p != "enc.pos").map(String::from).collect();
        for p in paths {
            z.params.get_mut(&p).unwrap().data_mut().fill(0.0);
        }
        let black = Canvas::new(16, 16, Rgba::BLACK).unwrap();
        assert_eq!(&z.encode_visual(&black).unwrap(), z.params.get("enc.pos").unwrap());
        assert!(z.encode_visual(&noise_canvas(32, 2)).is_err());
    }

    #[test]
    fn identity_compression() {
        let c = ModelConfig { enc_patch: 8, patch: 8, enc_dim: 8, width: 8, ..ModelConfig::miniature() };
        let m = FlowInOne::new(c).unwrap();
        let x = Tensor::new(&[4, 8], (0..32).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        assert!(m.compress(&x).unwrap().max_abs_diff(&x) < 1e-15);
    }

    #[test]
    fn truncation_differs_from_learned_map() {
        let mut m = FlowInOne::new(ModelConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for p in ["cmp.tok.w2", "cmp.feat.w2"] {
            let w = m.params.get_mut(p).unwrap();
            w.data_mut().iter_mut().for_each(|v| *v = rng.random::<f64>() - 0.5);
        }
        let x = m.encode_visual(&noise_canvas(64, 4)).unwrap();
        let learned = m.compress(&x).unwrap();
        let cut = truncate_tokens(&x, 64, 64).unwrap();
        assert_eq!(cut.shape(), learned.shape());
        assert!(cut.max_abs_diff(&learned) > 1e-3);
    }

    #[test]
    fn velocity_is_deterministic() {
        let m = mini();
        let z = flow::standard_normal(&[4, 8], &mut ChaCha8Rng::seed_from_u64(5));
        let src = z.map(|v| v * 0.5);
        let a = m.velocity(&z, 0.3, Some(&src), true).unwrap();
        assert_eq!(a.shape(), z.shape());
        assert_eq!(a, m.velocity(&z, 0.3, Some(&src), true).unwrap());
        assert!(m.velocity(&z, 1.5, None, false).is_err());
    }

    #[test]
    fn components_recombine() {
        let m = mini();
        let exs: Vec<Example> = (0..3)
            .map(|i| m.example(&noise_canvas(16, 10 + i), &noise_canvas(16, 20 + i), i == 1).unwrap())
            .collect();
        let refs: Vec<&Example> = exs.iter().collect();
        let l = m.total_loss(&refs, &mut ChaCha8Rng::seed_from_u64(0), Exec::Sequential).unwrap();
        assert!((l.total - (l.fm + 1e-2 * l.kld + l.clip)).abs() <= 1e-12);
        let zero = FlowInOne { config: ModelConfig { beta1: 0.0, beta2: 0.0, ..m.config.clone() }, ..m.clone() };
        let z = zero.total_loss(&refs, &mut ChaCha8Rng::seed_from_u64(0), Exec::Parallel).unwrap();
        assert_eq!(z.total, z.fm);
        assert_eq!(z.fm, l.fm);
    }
}
