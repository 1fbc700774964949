use proptest::prelude::*;
use vispflow::exec::Exec;
use vispflow::flowinone::{
    clip_contrastive_value, euler_integrate, fm_loss, interpolate, kld_loss, kld_loss_value, target_velocity,
    FlowInOne, ModelConfig, PosteriorParams,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vispflow::dataset::synthetic_dataset;
use vispflow::flowinone::Net;
use vispflow::numcore::{finite_diff_check, Bound, NumError, ParamSet, Tape, TapeObjective, Tensor, Var};

fn tensor(n: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(-3.0f64..3.0, n).prop_map(move |v| Tensor::new(&[n], v).unwrap())
}

proptest! {
    #[test]
    fn path_endpoints_and_constant_velocity(
        z0 in tensor(6), z1 in tensor(6), t in 0.0f64..=1.0, s in 0.0f64..0.5, h in 1e-3f64..0.1,
    ) {
        prop_assert_eq!(interpolate(&z0, &z1, 0.0, s).unwrap(), z0.clone());
        let end = interpolate(&z0, &z1, 1.0, 0.0).unwrap();
        prop_assert!(end.max_abs_diff(&z1) < 1e-15);
        let v = target_velocity(&z0, &z1, s).unwrap();
        let t2 = (t + h).min(1.0);
        if t2 > t {
            let a = interpolate(&z0, &z1, t, s).unwrap();
            let b = interpolate(&z0, &z1, t2, s).unwrap();
            let slope = b.zip_map(&a, |x, y| (x - y) / (t2 - t)).unwrap();
            prop_assert!(slope.max_abs_diff(&v) < 1e-9);
        }
    }

    #[test]
    fn euler_with_target_velocity_lands_on_the_shifted_endpoint(
        z0 in tensor(5), z1 in tensor(5), s in 0.0f64..0.5, steps in 1usize..60,
    ) {
        let v = target_velocity(&z0, &z1, s).unwrap();
        let z = euler_integrate(&z0, steps, |_, _| Ok(v.clone())).unwrap();
        let want = z1.zip_map(&z0, |a, b| a + s * b).unwrap();
        prop_assert!(z.max_abs_diff(&want) <= 1e-9);
    }

    #[test]
    fn kld_is_non_negative(mu in tensor(8), ls in prop::collection::vec(-4.0f64..2.0, 8)) {
        let sigma = Tensor::new(&[8], ls.iter().map(|x| x.exp()).collect()).unwrap();
        let post = PosteriorParams { mu, sigma };
        prop_assert!(kld_loss_value(&post).unwrap() >= -1e-15);
    }

    #[test]
    fn contrastive_loss_is_non_negative(
        a in prop::collection::vec(tensor(4), 1..6), tau in 0.01f64..2.0,
    ) {
        let b: Vec<Tensor> = a.iter().map(|t| t.map(|x| x.sin() + 0.1)).collect();
        prop_assume!(a.iter().all(|t| t.norm() > 1e-6));
        prop_assert!(clip_contrastive_value(&a, &b, tau).unwrap() >= -1e-12);
    }
}

#[test]
fn loss_gradients_match_hand_derivatives() {
    let vp = Tensor::new(&[2, 3], vec![0.5, -1.0, 2.0, 0.0, 1.5, -0.25]).unwrap();
    let vs = Tensor::new(&[2, 3], vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
    let mut t = Tape::new();
    let a = t.leaf(vp.clone());
    let b = t.input(vs.clone());
    let l = fm_loss(&mut t, a, b).unwrap();
    let g = t.backward(l).unwrap();
    let want = vp.zip_map(&vs, |p, s| 2.0 * (p - s) / 6.0).unwrap();
    assert!(g.get(a).unwrap().max_abs_diff(&want) < 1e-15);

    let mut p = ParamSet::new();
    p.trainable("mu", Tensor::new(&[3], vec![0.3, -0.7, 1.1]).unwrap()).unwrap();
    p.trainable("ls", Tensor::new(&[3], vec![-0.5, 0.2, 0.9]).unwrap()).unwrap();
    let obj = TapeObjective(|t: &mut Tape, b: &Bound| -> Result<Var, _> {
        kld_loss(t, b.get("mu")?, b.get("ls")?)
    });
    assert!(finite_diff_check(&obj, &p, 1e-6, 1e-6, Exec::Sequential).unwrap().passed());
}

#[test]
fn velocity_gradient_wrt_latent_matches_finite_differences() {
    let m = FlowInOne::new(ModelConfig::miniature()).unwrap();
    let src = Tensor::new(&[4, 8], (0..32).map(|i| (i as f64 * 0.7).cos()).collect()).unwrap();
    let mut p = ParamSet::new();
    p.trainable("z", Tensor::new(&[4, 8], (0..32).map(|i| (i as f64 * 0.3).sin()).collect()).unwrap()).unwrap();
    let obj = TapeObjective(|t: &mut Tape, b: &Bound| {
        let params_bound = Bound::bind(t, &m.params);
        let net = Net { config: &m.config, bound: &params_bound };
        let s = t.input(src.clone());
        let v = net
            .velocity(t, b.get("z")?, 0.4, Some(s), true)
            .map_err(|e| NumError::Shape(e.to_string()))?;
        let w = t.input(Tensor::new(&[4, 8], (0..32).map(|i| 1.0 + i as f64 / 32.0).collect()).unwrap());
        let y = t.mul(v, w)?;
        Ok(t.sum(y))
    });
    let report = finite_diff_check(&obj, &p, 1e-6, 1e-4, Exec::Parallel).unwrap();
    assert!(report.passed(), "max rel error {}", report.max_rel_error());
}

#[test]
fn total_loss_components() {
    let m = FlowInOne::new(ModelConfig::miniature()).unwrap();
    let recs = synthetic_dataset(1, 16, 3).unwrap();
    let exs: Vec<_> = recs.iter().map(|r| m.prepare(r).unwrap()).collect();
    let refs: Vec<_> = exs.iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let l = m.total_loss(&refs, &mut rng, Exec::Parallel).unwrap();
    assert!((l.total - (l.fm + 1e-2 * l.kld + 1.0 * l.clip)).abs() <= 1e-12);
}
