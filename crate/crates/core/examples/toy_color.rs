//! Trains the toy colour task and compares sample error before and after.
//!
//! `cargo run --release --example toy_color -- [steps] [out_dir]`

use std::path::PathBuf;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vispflow::dataset::toy_color_dataset;
use vispflow::exec::Exec;
use vispflow::flowinone::{train, FlowInOne, ModelConfig, SampleOptions, TrainConfig};

fn sample_mse(model: &FlowInOne, records: &[vispflow::dataset::PairRecord]) -> f64 {
    let opts = SampleOptions { steps: 20, cfg_scale: 1.0, mean_start: false };
    let mut total = 0.0;
    for (i, r) in records.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(i as u64);
        let out = model.sample(&r.input, false, &opts, &mut rng).expect("sample");
        let sq: f64 = out
            .rgb_bytes()
            .iter()
            .zip(r.target.rgb_bytes())
            .map(|(&a, b)| (a as f64 - b as f64).powi(2))
            .sum();
        total += sq / out.rgb_bytes().len() as f64;
    }
    total / records.len() as f64
}

fn main() {
    let mut args = std::env::args().skip(1);
    let steps: usize = args.next().map_or(2000, |s| s.parse().expect("steps"));
    let out = args.next().map(PathBuf::from);
    let config = ModelConfig::toy();
    let records = toy_color_dataset(512, config.image_side, 0).expect("dataset");
    let model = FlowInOne::new(config).expect("model");
    let probe: Vec<_> = records.iter().step_by(16).cloned().collect();
    let before = sample_mse(&model, &probe);
    let tc = TrainConfig { steps, ..TrainConfig::toy() };
    let start = Instant::now();
    let run = train(model, &records, &tc, out.as_deref(), Exec::Parallel).expect("train");
    let secs = start.elapsed().as_secs_f64();
    let first = run.losses.first().map_or(f64::NAN, |r| r.total);
    let last = run.losses.last().map_or(f64::NAN, |r| r.total);
    let after = sample_mse(&run.model, &probe);
    println!("steps {steps} in {secs:.1}s; loss {first:.4} -> {last:.4}; sample mse {before:.1} -> {after:.1}");
    for r in run.losses.iter().step_by((steps / 20).max(1)) {
        println!("{:5} fm {:.4} kld {:.4} clip {:.4} total {:.4}", r.step, r.fm, r.kld, r.clip, r.total);
    }
}
