//! Network definition: visual encoder, MLP compression, latent posterior and
//! the velocity transformer built from gated dual-path blocks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{FlowError, ModelConfig};
use crate::numcore::{Bound, NumError, ParamSet, Tape, Tensor, Var};

fn normal(shape: &[usize], std: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let dist = Normal::new(0.0, std).expect("finite std");
    Tensor::new(shape, (0..n).map(|_| dist.sample(rng)).collect()).expect("shape")
}

fn identity_like(rows: usize, cols: usize) -> Tensor {
    let mut t = Tensor::zeros(&[rows, cols]);
    for i in 0..rows.min(cols) {
        t.data_mut()[i * cols + i] = 1.0;
    }
    t
}

/// Seeded initial parameters. Compression skips start as (truncated)
/// identities with zero residual branches; gate outputs start at zero so
/// every gate opens halfway.
pub fn init_params(c: &ModelConfig) -> Result<ParamSet, FlowError> {
    c.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(c.init_seed);
    let mut p = ParamSet::new();
    let (de, d, ne, n) = (c.enc_dim, c.width, c.enc_tokens(), c.tokens());
    let he = 1.0 / (c.enc_patch_dim() as f64).sqrt();
    let lin = |p: &mut ParamSet, name: &str, i: usize, o: usize, rng: &mut ChaCha8Rng| -> Result<(), NumError> {
        p.trainable(format!("{name}.w"), normal(&[i, o], 1.0 / (i as f64).sqrt(), rng))?;
        p.trainable(format!("{name}.b"), Tensor::zeros(&[o]))
    };
    p.trainable("enc.patch.w", normal(&[c.enc_patch_dim(), de], he, &mut rng))?;
    p.trainable("enc.patch.b", Tensor::zeros(&[de]))?;
    p.trainable("enc.pos", normal(&[ne, de], 0.02, &mut rng))?;
    lin(&mut p, "enc.proj1", de, de, &mut rng)?;
    p.trainable("enc.proj2.w", Tensor::zeros(&[de, de]))?;
    p.trainable("enc.proj2.b", Tensor::zeros(&[de]))?;
    for (name, i, o) in [("cmp.tok", ne, n), ("cmp.feat", de, d)] {
        p.trainable(format!("{name}.skip"), identity_like(i, o))?;
        p.trainable(format!("{name}.b"), Tensor::zeros(&[o]))?;
        p.trainable(format!("{name}.w1"), normal(&[i, o], 1.0 / (i as f64).sqrt(), &mut rng))?;
        p.trainable(format!("{name}.b1"), Tensor::zeros(&[o]))?;
        p.trainable(format!("{name}.w2"), Tensor::zeros(&[o, o]))?;
    }
    lin(&mut p, "post.mu", d, d, &mut rng)?;
    p.trainable("post.logsig.w", normal(&[d, d], 0.01, &mut rng))?;
    p.trainable("post.logsig.b", Tensor::full(&[d], -1.0))?;
    lin(&mut p, "time", c.time_dim, d, &mut rng)?;
    let hd = 1.0 / (d as f64).sqrt();
    for l in 0..c.layers {
        for m in ["q", "k", "v", "o"] {
            p.trainable(format!("blk{l}.attn.{m}.w"), normal(&[d, d], hd, &mut rng))?;
        }
        p.trainable(format!("blk{l}.ln.g"), Tensor::ones(&[d]))?;
        p.trainable(format!("blk{l}.ln.b"), Tensor::zeros(&[d]))?;
        for m in ["q", "k", "v"] {
            p.trainable(format!("blk{l}.xattn.{m}.w"), normal(&[d, d], hd, &mut rng))?;
        }
        p.trainable(format!("blk{l}.gate.w1"), normal(&[2 * d, d], 1.0 / (2.0 * d as f64).sqrt(), &mut rng))?;
        p.trainable(format!("blk{l}.gate.b1"), Tensor::zeros(&[d]))?;
        p.trainable(format!("blk{l}.gate.w2"), Tensor::zeros(&[d, 1]))?;
        p.trainable(format!("blk{l}.gate.b2"), Tensor::zeros(&[1]))?;
    }
    p.trainable("head.w", normal(&[d, d], 0.1 * hd, &mut rng))?;
    p.trainable("head.b", Tensor::zeros(&[d]))?;
    p.insert("clip.log_tau", Tensor::scalar(c.tau_init.ln()).reshape(&[1])?, c.learn_tau)?;
    Ok(p)
}

/// Whether a parameter belongs to the cross-attention or gate branch.
pub fn is_edit_branch(path: &str) -> bool {
    path.contains(".xattn.") || path.contains(".gate.")
}

/// `[1, dim]` sinusoidal features of `t` (scaled by 1000), sines then cosines.
pub fn time_features(t: f64, dim: usize) -> Tensor {
    let half = dim / 2;
    let mut v = vec![0.0; dim];
    for i in 0..half {
        let freq = (-(10_000f64).ln() * i as f64 / half as f64).exp();
        let a = 1000.0 * t * freq;
        v[i] = a.sin();
        v[half + i] = a.cos();
    }
    Tensor::new(&[1, dim], v).expect("shape")
}

/// Tape-level network over bound parameters.
pub struct Net<'a> {
    pub config: &'a ModelConfig,
    pub bound: &'a Bound,
}

impl Net<'_> {
    fn p(&self, path: &str) -> Result<Var, NumError> {
        self.bound.get(path)
    }

    fn linear(&self, t: &mut Tape, x: Var, name: &str) -> Result<Var, NumError> {
        let y = t.matmul(x, self.p(&format!("{name}.w"))?)?;
        t.add(y, self.p(&format!("{name}.b"))?)
    }

    /// Patch embedding plus positions, then a residual two-layer projector.
    pub fn encode_visual(&self, t: &mut Tape, patches: Var) -> Result<Var, NumError> {
        let x = self.linear(t, patches, "enc.patch")?;
        let x = t.add(x, self.p("enc.pos")?)?;
        let h = self.linear(t, x, "enc.proj1")?;
        let h = t.gelu(h);
        let h = self.linear(t, h, "enc.proj2")?;
        t.add(x, h)
    }

    /// `x·skip + b + gelu(x·w1 + b1)·w2`, acting on rows of `x`.
    fn skip_mlp(&self, t: &mut Tape, x: Var, name: &str) -> Result<Var, NumError> {
        let s = t.matmul(x, self.p(&format!("{name}.skip"))?)?;
        let s = t.add(s, self.p(&format!("{name}.b"))?)?;
        let h = t.matmul(x, self.p(&format!("{name}.w1"))?)?;
        let h = t.add(h, self.p(&format!("{name}.b1"))?)?;
        let h = t.gelu(h);
        let h = t.matmul(h, self.p(&format!("{name}.w2"))?)?;
        t.add(s, h)
    }

    /// Token-axis MLP (`N_enc → N`) followed by a feature-axis MLP
    /// (`D_enc → D`).
    pub fn compress(&self, t: &mut Tape, x: Var) -> Result<Var, NumError> {
        let xt = t.transpose(x)?;
        let y = self.skip_mlp(t, xt, "cmp.tok")?;
        let y = t.transpose(y)?;
        self.skip_mlp(t, y, "cmp.feat")
    }

    /// Mean and log standard deviation of the latent posterior.
    pub fn posterior(&self, t: &mut Tape, x: Var) -> Result<(Var, Var), NumError> {
        Ok((self.linear(t, x, "post.mu")?, self.linear(t, x, "post.logsig")?))
    }

    pub fn time_embedding(&self, t: &mut Tape, time: f64) -> Result<Var, NumError> {
        let f = t.input(time_features(time, self.config.time_dim));
        let e = self.linear(t, f, "time")?;
        t.reshape(e, &[self.config.width])
    }

    fn self_attention(&self, t: &mut Tape, l: usize, h: Var) -> Result<Var, NumError> {
        let d = self.config.width;
        let dh = d / self.config.heads;
        let q = t.matmul(h, self.p(&format!("blk{l}.attn.q.w"))?)?;
        let k = t.matmul(h, self.p(&format!("blk{l}.attn.k.w"))?)?;
        let v = t.matmul(h, self.p(&format!("blk{l}.attn.v.w"))?)?;
        let mut heads = Vec::with_capacity(self.config.heads);
        for i in 0..self.config.heads {
            let qi = t.narrow_cols(q, i * dh, dh)?;
            let ki = t.narrow_cols(k, i * dh, dh)?;
            let vi = t.narrow_cols(v, i * dh, dh)?;
            let s = t.matmul_nt(qi, ki)?;
            let s = t.scale(s, 1.0 / (dh as f64).sqrt());
            let a = t.softmax(s);
            heads.push(t.matmul(a, vi)?);
        }
        let cat = if heads.len() == 1 { heads[0] } else { t.concat(&heads)? };
        t.matmul(cat, self.p(&format!("blk{l}.attn.o.w"))?)
    }

    /// `LayerNorm(H + SelfAttn(H))` with a learned gain and bias.
    pub fn self_path(&self, t: &mut Tape, l: usize, h: Var) -> Result<Var, NumError> {
        let a = self.self_attention(t, l, h)?;
        let r = t.add(h, a)?;
        let n = t.layer_norm(r);
        let n = t.mul(n, self.p(&format!("blk{l}.ln.g"))?)?;
        t.add(n, self.p(&format!("blk{l}.ln.b"))?)
    }

    /// Cross-attention increment from the source sequence and its per-token
    /// gate in `[0, 1]`, shape `[N, 1]`.
    pub fn edit_path(&self, t: &mut Tape, l: usize, ht: Var, src: Var) -> Result<(Var, Var), NumError> {
        let q = t.matmul(ht, self.p(&format!("blk{l}.xattn.q.w"))?)?;
        let k = t.matmul(src, self.p(&format!("blk{l}.xattn.k.w"))?)?;
        let v = t.matmul(src, self.p(&format!("blk{l}.xattn.v.w"))?)?;
        let s = t.matmul_nt(q, k)?;
        let s = t.scale(s, 1.0 / (self.config.width as f64).sqrt());
        let a = t.softmax(s);
        let dh = t.matmul(a, v)?;
        let cat = t.concat(&[ht, dh])?;
        let g = t.matmul(cat, self.p(&format!("blk{l}.gate.w1"))?)?;
        let g = t.add(g, self.p(&format!("blk{l}.gate.b1"))?)?;
        let g = t.gelu(g);
        let g = t.matmul(g, self.p(&format!("blk{l}.gate.w2"))?)?;
        let g = t.add(g, self.p(&format!("blk{l}.gate.b2"))?)?;
        let lambda = t.sigmoid(g);
        debug_assert!(t.value(lambda).data().iter().all(|x| (0.0..=1.0).contains(x)), "gate left [0, 1]");
        Ok((dh, lambda))
    }

    /// One dual-path block. The time embedding is added first; with the
    /// indicator off the block is the self path alone.
    pub fn sam_block(&self, t: &mut Tape, l: usize, h: Var, src: Option<Var>, i_edit: bool, temb: Var) -> Result<Var, FlowError> {
        let h = t.add(h, temb)?;
        let ht = self.self_path(t, l, h)?;
        if !i_edit {
            return Ok(ht);
        }
        let src = src.ok_or_else(|| FlowError::Contract("editing block needs a source latent".into()))?;
        let (dh, lambda) = self.edit_path(t, l, ht, src)?;
        let m = t.mul(dh, lambda)?;
        Ok(t.add(ht, m)?)
    }

    /// Velocity at `z_t`: the block stack followed by a linear head.
    pub fn velocity(&self, t: &mut Tape, zt: Var, time: f64, src: Option<Var>, i_edit: bool) -> Result<Var, FlowError> {
        let temb = self.time_embedding(t, time)?;
        let mut h = zt;
        for l in 0..self.config.layers {
            h = self.sam_block(t, l, h, src, i_edit, temb)?;
        }
        Ok(self.linear(t, h, "head")?)
    }
}

/// Reference network holding only the self-attention path: it never touches
/// (or needs) any cross-attention or gate weight.
pub fn velocity_excised(t: &mut Tape, net: &Net<'_>, zt: Var, time: f64) -> Result<Var, FlowError> {
    let temb = net.time_embedding(t, time)?;
    let mut h = zt;
    for l in 0..net.config.layers {
        let x = t.add(h, temb)?;
        h = net.self_path(t, l, x)?;
    }
    Ok(net.linear(t, h, "head")?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_inventory() {
        let c = ModelConfig::default();
        let p = init_params(&c).unwrap();
        for path in ["enc.pos", "cmp.tok.skip", "post.logsig.b", "blk1.gate.w2", "head.w", "clip.log_tau"] {
            assert!(p.contains(path), "{path}");
        }
        assert_eq!(p.get("cmp.feat.skip").unwrap().shape(), [96, 64]);
        assert!((p.get("clip.log_tau").unwrap().data()[0] - 0.07f64.ln()).abs() < 1e-15);
        assert_eq!(init_params(&c).unwrap(), p);
        let frozen = init_params(&ModelConfig { learn_tau: false, ..c }).unwrap();
        assert!(!frozen.is_trainable("clip.log_tau"));
    }

    fn rand_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
        normal(shape, 1.0, rng)
    }

    #[test]
    fn zero_gate_opens_halfway() {
        let c = ModelConfig::miniature();
        let p = init_params(&c).unwrap();
        assert!(p.get("blk0.gate.w2").unwrap().data().iter().all(|&v| v == 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (h0, s0, te) = (rand_tensor(&[4, 8], &mut rng), rand_tensor(&[4, 8], &mut rng), rand_tensor(&[8], &mut rng));
        let mut t = Tape::new();
        let bound = Bound::bind(&mut t, &p);
        let net = Net { config: &c, bound: &bound };
        let (h, src, temb) = (t.input(h0), t.input(s0), t.input(te));
        let out = net.sam_block(&mut t, 0, h, Some(src), true, temb).unwrap();
        let x = t.add(h, temb).unwrap();
        let ht = net.self_path(&mut t, 0, x).unwrap();
        let (dh, lambda) = net.edit_path(&mut t, 0, ht, src).unwrap();
        assert!(t.value(lambda).data().iter().all(|&g| g == 0.5));
        let want = t.value(ht).zip_map(t.value(dh), |a, b| a + 0.5 * b).unwrap();
        assert!(t.value(out).max_abs_diff(&want) < 1e-15);
        let off = net.sam_block(&mut t, 0, h, None, false, temb).unwrap();
        assert_eq!(t.value(off), t.value(ht));
        assert!(matches!(net.sam_block(&mut t, 0, h, None, true, temb), Err(FlowError::Contract(_))));
    }

    #[test]
    fn indicator_off_matches_excised_network() {
        let c = ModelConfig::miniature();
        let full = init_params(&c).unwrap();
        let mut cut = full.clone();
        let edit: Vec<String> = full.paths().filter(|p| is_edit_branch(p)).map(String::from).collect();
        assert!(!edit.is_empty());
        for p in &edit {
            cut.remove(p);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let z = rand_tensor(&[4, 8], &mut rng);
            let time = rand::Rng::random::<f64>(&mut rng);
            let mut t = Tape::new();
            let b = Bound::bind(&mut t, &full);
            let zv = t.input(z.clone());
            let a = Net { config: &c, bound: &b }.velocity(&mut t, zv, time, None, false).unwrap();
            let mut u = Tape::new();
            let b2 = Bound::bind(&mut u, &cut);
            let zv = u.input(z);
            let e = velocity_excised(&mut u, &Net { config: &c, bound: &b2 }, zv, time).unwrap();
            assert_eq!(t.value(a), u.value(e));
        }
    }

    #[test]
    fn time_features_are_bounded() {
        let f = time_features(0.37, 128);
        assert_eq!(f.shape(), [1, 128]);
        assert!(f.data().iter().all(|x| x.abs() <= 1.0));
        assert_eq!(time_features(0.0, 4).data(), [0.0, 0.0, 1.0, 1.0]);
    }
}
