use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::PairRecord;
use crate::exec::Exec;
use crate::qc::{cosine, Embedder};

pub const DEFAULT_TAU_SPLIT: f64 = 0.92;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub train_roots: Vec<String>,
    pub bench_roots: Vec<String>,
    pub tau_split: f64,
    /// What was embedded for the similarity check.
    pub embedding_source: String,
    pub train_ids: Vec<String>,
    pub bench_ids: Vec<String>,
    pub dropped_ids: Vec<String>,
    pub dropped: usize,
    /// Highest train-vs-bench cosine among the kept train records.
    pub max_kept_similarity: Option<f64>,
}

/// Partitions by root id using an explicit bench root set, then drops train
/// records whose input canvas is more similar than `tau` to any bench input.
pub fn split_with_bench_roots(
    records: &[PairRecord],
    bench_roots: &BTreeSet<String>,
    embedder: &dyn Embedder,
    tau: f64,
    exec: Exec,
) -> SplitManifest {
    let emb = exec.map(records, |r| embedder.embed(&r.input));
    let (bench, train): (Vec<usize>, Vec<usize>) =
        (0..records.len()).partition(|&i| bench_roots.contains(&records[i].meta.root_id));
    let sims = exec.map(&train, |&i| bench.iter().map(|&j| cosine(&emb[i], &emb[j])).fold(f64::NEG_INFINITY, f64::max));
    let mut manifest = SplitManifest {
        train_roots: Vec::new(),
        bench_roots: Vec::new(),
        tau_split: tau,
        embedding_source: "input_canvas".into(),
        train_ids: Vec::new(),
        bench_ids: bench.iter().map(|&j| records[j].meta.id.clone()).collect(),
        dropped_ids: Vec::new(),
        dropped: 0,
        max_kept_similarity: None,
    };
    let mut train_roots = BTreeSet::new();
    for (&i, &s) in train.iter().zip(&sims) {
        let id = records[i].meta.id.clone();
        if s > tau {
            manifest.dropped_ids.push(id);
        } else {
            manifest.train_ids.push(id);
            train_roots.insert(records[i].meta.root_id.clone());
            if s.is_finite() {
                manifest.max_kept_similarity = Some(manifest.max_kept_similarity.map_or(s, |m: f64| m.max(s)));
            }
        }
    }
    manifest.dropped = manifest.dropped_ids.len();
    manifest.train_roots = train_roots.into_iter().collect();
    let present: BTreeSet<&str> = records.iter().map(|r| r.meta.root_id.as_str()).collect();
    manifest.bench_roots = bench_roots.iter().filter(|r| present.contains(r.as_str())).cloned().collect();
    manifest
}

/// Shuffles the distinct root ids with `seed` and sends a `bench_fraction`
/// share of them (at least one when there are two or more roots) to the bench.
pub fn split_by_root(
    records: &[PairRecord],
    embedder: &dyn Embedder,
    tau: f64,
    bench_fraction: f64,
    seed: u64,
    exec: Exec,
) -> SplitManifest {
    let mut roots: Vec<String> =
        records.iter().map(|r| r.meta.root_id.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    roots.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = roots.len();
    let mut k = (bench_fraction.clamp(0.0, 1.0) * n as f64).round() as usize;
    if n >= 2 && bench_fraction > 0.0 {
        k = k.clamp(1, n - 1);
    }
    let bench: BTreeSet<String> = roots.into_iter().take(k).collect();
    split_with_bench_roots(records, &bench, embedder, tau, exec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{synthetic_dataset, Category, PairMeta};
    use crate::qc::GridEmbedder;
    use crate::render::{Canvas, Rgba};

    fn rec(id: &str, root: &str, c: Rgba) -> PairRecord {
        let meta = PairMeta {
            id: id.into(),
            category: Category::TIE,
            root_id: root.into(),
            instruction: String::new(),
            markers: vec![],
            boxes: vec![],
        };
        let mut a = Canvas::new(8, 8, Rgba::BLACK).unwrap();
        a.set(0, 0, c);
        PairRecord::new(meta, a.clone(), a).unwrap()
    }

    struct Axis;
    impl Embedder for Axis {
        fn dim(&self) -> usize {
            3
        }
        fn embed(&self, c: &Canvas) -> Vec<f64> {
            let p = c.get(0, 0).0;
            let k = p.iter().take(3).position(|&v| v > 0).unwrap_or(0);
            let mut v = vec![0.0; 3];
            v[k] = 1.0;
            v
        }
    }

    #[test]
    fn orthogonal_roots_drop_nothing() {
        let recs = [rec("a", "r1", Rgba::rgb(255, 0, 0)), rec("b", "r2", Rgba::rgb(0, 255, 0))];
        let bench = BTreeSet::from(["r2".to_string()]);
        let m = split_with_bench_roots(&recs, &bench, &Axis, 0.92, Exec::Sequential);
        assert_eq!((m.train_ids.clone(), m.bench_ids.clone(), m.dropped), (vec!["a".into()], vec!["b".into()], 0));
    }

    #[test]
    fn duplicate_under_other_root_is_dropped() {
        let recs = [rec("a", "r1", Rgba::rgb(255, 0, 0)), rec("b", "r2", Rgba::rgb(255, 0, 0))];
        let bench = BTreeSet::from(["r2".to_string()]);
        let m = split_with_bench_roots(&recs, &bench, &Axis, 0.92, Exec::Sequential);
        assert_eq!(m.dropped_ids, ["a"]);
        assert!(m.train_ids.is_empty());
    }

    #[test]
    fn single_root_lands_in_one_split() {
        let recs = [rec("a", "r", Rgba::WHITE), rec("b", "r", Rgba::BLACK)];
        let m = split_by_root(&recs, &GridEmbedder::default(), 0.92, 0.2, 0, Exec::Sequential);
        assert!(m.bench_ids.is_empty() || m.train_ids.is_empty());
        assert_eq!(m.bench_ids.len() + m.train_ids.len() + m.dropped, 2);
    }

    #[test]
    fn roots_disjoint_and_similarity_bounded() {
        let recs = synthetic_dataset(4, 32, 11).unwrap();
        let e = GridEmbedder::default();
        let m = split_by_root(&recs, &e, 0.92, 0.3, 4, Exec::Parallel);
        assert!(m.train_roots.iter().all(|r| !m.bench_roots.contains(r)));
        let by_id = |id: &String| recs.iter().find(|r| &r.meta.id == id).unwrap();
        for t in &m.train_ids {
            for b in &m.bench_ids {
                assert!(cosine(&e.embed(&by_id(t).input), &e.embed(&by_id(b).input)) <= 0.92);
            }
        }
    }
}
