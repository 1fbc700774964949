//! Probability path, target velocity and the three training losses.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::FlowError;
use crate::numcore::{NumError, Tape, Tensor, Var};

/// A point on the path: an `N x D` latent and its time.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentState {
    pub z: Tensor,
    pub t: f64,
}

/// Diagonal Gaussian over the instruction latent.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorParams {
    pub mu: Tensor,
    pub sigma: Tensor,
}

impl PosteriorParams {
    pub fn from_log_sigma(mu: Tensor, log_sigma: &Tensor) -> Self {
        Self { mu, sigma: log_sigma.map(f64::exp) }
    }
}

/// `ε ~ N(0, I)` of the given shape.
pub fn standard_normal<R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| StandardNormal.sample(rng)).collect()).expect("shape")
}

/// `μ + σ ⊙ ε`; `None` for `ε` returns the mean.
pub fn reparameterize(post: &PosteriorParams, eps: Option<&Tensor>) -> Result<Tensor, FlowError> {
    match eps {
        None => Ok(post.mu.clone()),
        Some(e) => {
            let se = post.sigma.zip_map(e, |s, e| s * e)?;
            Ok(post.mu.add(&se)?)
        }
    }
}

pub fn sample_z0<R: Rng + ?Sized>(post: &PosteriorParams, rng: &mut R) -> Result<LatentState, FlowError> {
    let eps = standard_normal(post.mu.shape(), rng);
    Ok(LatentState { z: reparameterize(post, Some(&eps))?, t: 0.0 })
}

fn check_t(t: f64) -> Result<(), FlowError> {
    if !(0.0..=1.0).contains(&t) {
        return Err(FlowError::Contract(format!("time {t} outside [0, 1]")));
    }
    Ok(())
}

/// `z_t = t·z1 + (1 − (1 − σ_min)·t)·z0`
pub fn interpolate(z0: &Tensor, z1: &Tensor, t: f64, sigma_min: f64) -> Result<Tensor, FlowError> {
    check_t(t)?;
    let a = 1.0 - (1.0 - sigma_min) * t;
    Ok(z1.zip_map(z0, |x1, x0| t * x1 + a * x0)?)
}

/// `v* = z1 − (1 − σ_min)·z0`
pub fn target_velocity(z0: &Tensor, z1: &Tensor, sigma_min: f64) -> Result<Tensor, FlowError> {
    Ok(z1.zip_map(z0, |x1, x0| x1 - (1.0 - sigma_min) * x0)?)
}

pub fn fm_loss_value(v_pred: &Tensor, v_star: &Tensor) -> Result<f64, FlowError> {
    Ok(v_pred.zip_map(v_star, |a, b| (a - b) * (a - b))?.mean())
}

/// Mean over elements of `½(μ² + σ² − 1 − ln σ²)`.
pub fn kld_loss_value(post: &PosteriorParams) -> Result<f64, FlowError> {
    if post.sigma.data().iter().any(|&s| s <= 0.0) {
        return Err(FlowError::Contract("posterior sigma must be positive".into()));
    }
    Ok(post.mu.zip_map(&post.sigma, |m, s| 0.5 * (m * m + s * s - 1.0 - (s * s).ln()))?.mean())
}

/// Tape form of the flow-matching loss: mean squared error.
pub fn fm_loss(t: &mut Tape, v_pred: Var, v_star: Var) -> Result<Var, NumError> {
    let d = t.sub(v_pred, v_star)?;
    let sq = t.mul(d, d)?;
    Ok(t.mean(sq))
}

/// Tape form of the KL term from the mean and log standard deviation.
pub fn kld_loss(t: &mut Tape, mu: Var, log_sigma: Var) -> Result<Var, NumError> {
    let mu2 = t.mul(mu, mu)?;
    let two_ls = t.scale(log_sigma, 2.0);
    let var = t.exp(two_ls);
    let s = t.add(mu2, var)?;
    let s = t.sub(s, two_ls)?;
    let s = t.add_scalar(s, -1.0);
    let m = t.mean(s);
    Ok(t.scale(m, 0.5))
}

/// Stacks latents into rows and L2-normalises each row.
fn unit_rows(t: &mut Tape, zs: &[Var]) -> Result<Var, FlowError> {
    let mut cols = Vec::with_capacity(zs.len());
    for (i, &z) in zs.iter().enumerate() {
        let v = t.value(z);
        if v.norm() == 0.0 {
            return Err(FlowError::DegenerateLatent(i));
        }
        cols.push(t.reshape(z, &[v.len(), 1])?);
    }
    let m = if cols.len() == 1 { cols[0] } else { t.concat(&cols)? };
    let m = t.transpose(m)?;
    let sq = t.mul(m, m)?;
    let n2 = t.sum_lastdim(sq)?;
    let n = t.sqrt(n2);
    Ok(t.div(m, n)?)
}

fn diag_mean(t: &mut Tape, m: Var, b: usize) -> Result<Var, NumError> {
    let eye = t.input(Tensor::eye(b));
    let d = t.mul(m, eye)?;
    let s = t.sum(d);
    Ok(t.scale(s, 1.0 / b as f64))
}

/// Symmetric cross-entropy over cosine similarities divided by
/// `τ = exp(log_tau)`; row `i` of one side matches row `i` of the other.
pub fn clip_contrastive_loss(t: &mut Tape, z_ti: &[Var], z_i: &[Var], log_tau: Var) -> Result<Var, FlowError> {
    let b = z_ti.len();
    if b == 0 || b != z_i.len() {
        return Err(FlowError::Contract(format!("contrastive batch sizes {b} and {}", z_i.len())));
    }
    let a = unit_rows(t, z_ti)?;
    let c = unit_rows(t, z_i)?;
    let s = t.matmul_nt(a, c)?;
    let tau = t.exp(log_tau);
    let logits = t.div(s, tau)?;
    let rows = t.log_softmax(logits);
    let lt = t.transpose(logits)?;
    let cols = t.log_softmax(lt);
    let r = diag_mean(t, rows, b)?;
    let c = diag_mean(t, cols, b)?;
    let sum = t.add(r, c)?;
    Ok(t.scale(sum, -0.5))
}

/// Value-only contrastive loss on plain tensors.
pub fn clip_contrastive_value(z_ti: &[Tensor], z_i: &[Tensor], tau: f64) -> Result<f64, FlowError> {
    let mut t = Tape::new();
    let a: Vec<Var> = z_ti.iter().map(|z| t.input(z.clone())).collect();
    let b: Vec<Var> = z_i.iter().map(|z| t.input(z.clone())).collect();
    let lt = t.input(Tensor::new(&[1], vec![tau.ln()])?);
    let l = clip_contrastive_loss(&mut t, &a, &b, lt)?;
    Ok(t.value(l).data()[0])
}
