use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Category, DatasetError};

/// One balanced batch: record indices grouped by category in index order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Batch {
    pub index: usize,
    pub members: Vec<usize>,
    /// Categories that ran out and were reshuffled while filling this batch,
    /// with the epoch that started.
    pub wrapped: Vec<(Category, usize)>,
}

#[derive(Debug)]
struct Pool {
    category: Category,
    items: Vec<usize>,
    cursor: usize,
    epoch: usize,
    rng: ChaCha8Rng,
}

impl Pool {
    fn take(&mut self, wrapped: &mut Vec<(Category, usize)>) -> usize {
        if self.cursor == self.items.len() {
            self.items.shuffle(&mut self.rng);
            self.cursor = 0;
            self.epoch += 1;
            wrapped.push((self.category, self.epoch));
        }
        self.cursor += 1;
        self.items[self.cursor - 1]
    }
}

/// Endless iterator of batches holding `B / K` records from each of the `K`
/// categories. When `K` does not divide `B` the `B mod K` extra slots go
/// round-robin by category index, starting one batch's worth further along
/// each time. Categories are consumed in a per-category shuffled order and
/// reshuffled whenever they run out.
#[derive(Debug)]
pub struct BalancedSampler {
    pools: Vec<Pool>,
    batch_size: usize,
    next: usize,
}

impl BalancedSampler {
    /// Balances over the categories that occur in `categories` (one entry
    /// per record).
    pub fn new(categories: &[Category], batch_size: usize, seed: u64) -> Result<Self, DatasetError> {
        let mut present: Vec<Category> = categories.to_vec();
        present.sort();
        present.dedup();
        Self::over(categories, &present, batch_size, seed)
    }

    /// Balances over an explicit category set; every listed category must
    /// have at least one record.
    pub fn over(categories: &[Category], over: &[Category], batch_size: usize, seed: u64) -> Result<Self, DatasetError> {
        if batch_size == 0 {
            return Err(DatasetError::Sampler("batch size must be positive".into()));
        }
        let mut cats = over.to_vec();
        cats.sort();
        cats.dedup();
        if cats.is_empty() {
            return Err(DatasetError::Sampler("no records".into()));
        }
        let mut pools = Vec::with_capacity(cats.len());
        for c in cats {
            let items: Vec<usize> = (0..categories.len()).filter(|&i| categories[i] == c).collect();
            if items.is_empty() {
                return Err(DatasetError::Sampler(format!("category {c} has no records")));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c.index() as u64 + 1);
            let mut items = items;
            items.shuffle(&mut rng);
            pools.push(Pool { category: c, items, cursor: 0, epoch: 0, rng });
        }
        Ok(Self { pools, batch_size, next: 0 })
    }

    pub fn categories(&self) -> Vec<Category> {
        self.pools.iter().map(|p| p.category).collect()
    }

    /// How many records batch `index` takes from each category.
    pub fn counts(&self, index: usize) -> Vec<usize> {
        let k = self.pools.len();
        let (base, rem) = (self.batch_size / k, self.batch_size % k);
        let start = (index * rem) % k;
        (0..k).map(|j| base + usize::from((j + k - start) % k < rem)).collect()
    }
}

impl Iterator for BalancedSampler {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        let counts = self.counts(self.next);
        let mut members = Vec::with_capacity(self.batch_size);
        let mut wrapped = Vec::new();
        for (pool, n) in self.pools.iter_mut().zip(counts) {
            for _ in 0..n {
                members.push(pool.take(&mut wrapped));
            }
        }
        let batch = Batch { index: self.next, members, wrapped };
        self.next += 1;
        Some(batch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cats(per: usize) -> Vec<Category> {
        Category::ALL.iter().flat_map(|&c| std::iter::repeat_n(c, per)).collect()
    }

    fn per_category(labels: &[Category], b: &Batch) -> Vec<usize> {
        Category::ALL.iter().map(|&c| b.members.iter().filter(|&&i| labels[i] == c).count()).collect()
    }

    #[test]
    fn exact_division() {
        let labels = cats(10);
        for (bsz, each) in [(16, 2), (512, 64)] {
            let s = BalancedSampler::new(&labels, bsz, 0).unwrap();
            for b in s.take(5) {
                assert_eq!(per_category(&labels, &b), vec![each; 8]);
            }
        }
    }

    #[test]
    fn remainder_rotates() {
        let labels = cats(10);
        let mut s = BalancedSampler::new(&labels, 12, 0).unwrap();
        assert_eq!(per_category(&labels, &s.next().unwrap()), [2, 2, 2, 2, 1, 1, 1, 1]);
        assert_eq!(per_category(&labels, &s.next().unwrap()), [1, 1, 1, 1, 2, 2, 2, 2]);
    }

    #[test]
    fn deterministic_and_wraps() {
        let labels = cats(3);
        let a: Vec<_> = BalancedSampler::new(&labels, 16, 5).unwrap().take(4).collect();
        let b: Vec<_> = BalancedSampler::new(&labels, 16, 5).unwrap().take(4).collect();
        assert_eq!(a, b);
        assert_eq!(a[0].wrapped, vec![]);
        assert!(a[1].wrapped.iter().all(|&(_, e)| e == 1));
        assert_eq!(a[1].wrapped.len(), 8);
        let c: Vec<_> = BalancedSampler::new(&labels, 16, 6).unwrap().take(4).collect();
        assert_ne!(a, c);
    }

    #[test]
    fn two_present_categories() {
        let labels = [Category::C2I, Category::T2I, Category::T2I, Category::C2I];
        let s = BalancedSampler::new(&labels, 6, 1).unwrap();
        assert_eq!(s.categories(), [Category::C2I, Category::T2I]);
        assert!(BalancedSampler::over(&labels, &Category::ALL, 8, 1).is_err());
    }

    #[test]
    fn running_counts_stay_within_one() {
        let labels = cats(7);
        for bsz in [5, 12, 13, 30] {
            let mut totals = [0usize; 8];
            for (k, b) in BalancedSampler::new(&labels, bsz, 2).unwrap().take(40).enumerate() {
                for (t, n) in totals.iter_mut().zip(per_category(&labels, &b)) {
                    *t += n;
                }
                let ideal = (k + 1) as f64 * bsz as f64 / 8.0;
                assert!(totals.iter().all(|&t| (t as f64 - ideal).abs() < 1.0 + 1e-9), "{bsz} {totals:?}");
            }
        }
    }
}
