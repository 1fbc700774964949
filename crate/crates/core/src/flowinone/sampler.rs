//! Forward-Euler integration of the velocity field with linear guidance.

use rand::Rng;

use super::flow::{reparameterize, sample_z0};
use super::{FlowError, FlowInOne};
use crate::numcore::Tensor;
use crate::render::Canvas;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleOptions {
    pub steps: usize,
    pub cfg_scale: f64,
    /// Start from the posterior mean instead of a random draw.
    pub mean_start: bool,
}

impl SampleOptions {
    pub fn from_config(c: &super::ModelConfig) -> Self {
        Self { steps: c.sample_steps, cfg_scale: c.cfg_scale, mean_start: false }
    }
}

/// `s·v_c + (1 − s)·v_u`, which is `v_u + s(v_c − v_u)` and returns `v_c`
/// exactly at `s = 1`.
pub fn guided_velocity(v_uncond: &Tensor, v_cond: &Tensor, scale: f64) -> Result<Tensor, FlowError> {
    Ok(v_cond.zip_map(v_uncond, |c, u| scale * c + (1.0 - scale) * u)?)
}

/// Integrates `dz/dt = v(z, t)` from 0 to 1 in `steps` equal steps.
pub fn euler_integrate<F>(z0: &Tensor, steps: usize, mut v: F) -> Result<Tensor, FlowError>
where
    F: FnMut(&Tensor, f64) -> Result<Tensor, FlowError>,
{
    if steps == 0 {
        return Err(FlowError::Contract("sampler needs at least one step".into()));
    }
    let dt = 1.0 / steps as f64;
    let mut z = z0.clone();
    for k in 0..steps {
        let vel = v(&z, k as f64 * dt)?;
        z = z.zip_map(&vel, |a, b| a + dt * b)?;
    }
    Ok(z)
}

impl FlowInOne {
    /// Final latent for an instruction canvas. Editing requests are guided
    /// against the source-free pass; generation requests have no second pass
    /// because their conditional and unconditional velocities coincide.
    pub fn sample_latent<R: Rng + ?Sized>(
        &self,
        input: &Canvas,
        editing: bool,
        opts: &SampleOptions,
        rng: &mut R,
    ) -> Result<Tensor, FlowError> {
        let post = self.posterior(input)?;
        let z0 = if opts.mean_start { reparameterize(&post, None)? } else { sample_z0(&post, rng)?.z };
        let src = if editing { Some(self.codec.encode(input)?) } else { None };
        euler_integrate(&z0, opts.steps, |z, t| match &src {
            Some(s) => {
                let vc = self.velocity(z, t, Some(s), true)?;
                if opts.cfg_scale == 1.0 {
                    return Ok(vc);
                }
                let vu = self.velocity(z, t, None, false)?;
                guided_velocity(&vu, &vc, opts.cfg_scale)
            }
            None => self.velocity(z, t, None, false),
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, input: &Canvas, editing: bool, opts: &SampleOptions, rng: &mut R) -> Result<Canvas, FlowError> {
        let z = self.sample_latent(input, editing, opts, rng)?;
        self.decode_target(&z)
    }
}

#[cfg(test)]
mod tests {
    use super::super::{target_velocity, ModelConfig};
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn guidance_arithmetic() {
        let u = Tensor::zeros(&[2]);
        let c = Tensor::ones(&[2]);
        assert_eq!(guided_velocity(&u, &c, 0.0).unwrap().data(), [0.0, 0.0]);
        assert_eq!(guided_velocity(&u, &c, 7.0).unwrap().data(), [7.0, 7.0]);
        let u = Tensor::new(&[3], vec![0.3, -1.7, 2.9]).unwrap();
        let c = Tensor::new(&[3], vec![0.1, 0.2, -5.5]).unwrap();
        assert_eq!(guided_velocity(&u, &c, 1.0).unwrap(), c);
    }

    #[test]
    fn euler_is_exact_on_constant_fields() {
        let z0 = Tensor::new(&[2, 2], vec![0.5, -1.0, 2.0, 0.0]).unwrap();
        let z1 = Tensor::new(&[2, 2], vec![1.0, 1.0, -3.0, 0.25]).unwrap();
        let sigma = 0.1;
        let v = target_velocity(&z0, &z1, sigma).unwrap();
        let want = z1.zip_map(&z0, |a, b| a + sigma * b).unwrap();
        for steps in [1, 5, 50] {
            let z = euler_integrate(&z0, steps, |_, _| Ok(v.clone())).unwrap();
            assert!(z.max_abs_diff(&want) <= 1e-9);
        }
        assert!(euler_integrate(&z0, 0, |_, _| Ok(v.clone())).is_err());
    }

    #[test]
    fn sampling_is_seeded() {
        let m = FlowInOne::new(ModelConfig::miniature()).unwrap();
        let c = Canvas::new(16, 16, crate::render::Rgba::rgb(200, 30, 30)).unwrap();
        let opts = SampleOptions { steps: 3, cfg_scale: 7.0, mean_start: false };
        let a = m.sample(&c, true, &opts, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = m.sample(&c, true, &opts, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.width(), a.height()), (16, 16));
    }
}
