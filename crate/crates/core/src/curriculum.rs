//! Warmup schedule mixing seed and generated data, and batch composition.
//!
//! At meta-iteration `i_meta` the first `i_w` learner iterations are warmup
//! iterations, each batch holding `n_wb` seed examples:
//!
//! ```text
//! i_w  = floor((I_warmup - i_meta) / I_warmup * I_learner)
//! n_wb = floor(|b_gen| / I_warmup * (I_warmup - i_meta))
//! ```
//!
//! Both reach zero at `i_meta = I_warmup`, after which batches are fully
//! generated.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datamodel::LabeledExample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurriculumPlan {
    pub i_meta: usize,
    /// Warmup learner iterations in this meta-iteration.
    pub i_w: usize,
    /// Seed examples per warmup batch.
    pub n_wb: usize,
    pub warmup_horizon: usize,
    pub learner_iterations: usize,
    pub batch_size: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CurriculumError {
    #[error("{0} must be at least 1")]
    NonPositive(&'static str),
    #[error("warmup batch needs seed examples but the seed pool is empty")]
    EmptySeedPool,
    #[error("generated pool exhausted: {needed} more usable datapoints required")]
    NeedMoreGenerated { needed: usize },
}

/// Evaluates the warmup schedule with exact integer floor division.
pub fn plan(
    i_meta: usize,
    warmup_horizon: usize,
    learner_iterations: usize,
    batch_size: usize,
) -> Result<CurriculumPlan, CurriculumError> {
    if warmup_horizon == 0 {
        return Err(CurriculumError::NonPositive("I_warmup"));
    }
    if learner_iterations == 0 {
        return Err(CurriculumError::NonPositive("I_learner"));
    }
    if batch_size == 0 {
        return Err(CurriculumError::NonPositive("batch_size"));
    }
    let remaining = warmup_horizon.saturating_sub(i_meta);
    let i_w = (remaining * learner_iterations / warmup_horizon).min(learner_iterations);
    let n_wb = (batch_size * remaining / warmup_horizon).min(batch_size);
    Ok(CurriculumPlan {
        i_meta,
        i_w,
        n_wb,
        warmup_horizon,
        learner_iterations,
        batch_size,
    })
}

impl CurriculumPlan {
    /// Seed examples in the batch of learner iteration `learner_iter`.
    pub fn seed_count(&self, learner_iter: usize) -> usize {
        if learner_iter < self.i_w {
            self.n_wb
        } else {
            0
        }
    }

    /// Total seed exposure over the meta-iteration.
    pub fn total_seed(&self) -> usize {
        self.i_w * self.n_wb
    }

    /// Generated examples consumed over the meta-iteration.
    pub fn total_generated(&self) -> usize {
        self.learner_iterations * self.batch_size - self.total_seed()
    }

    /// Share of seed data over all batches of the meta-iteration.
    pub fn seed_fraction(&self) -> f64 {
        self.total_seed() as f64 / (self.learner_iterations * self.batch_size) as f64
    }
}

/// Cycles through the seed pool, reshuffling at the end of every pass.
#[derive(Debug, Clone)]
pub struct SeedCycler {
    order: Vec<usize>,
    cursor: usize,
}

impl SeedCycler {
    pub fn new<R: Rng + ?Sized>(pool_size: usize, rng: &mut R) -> Self {
        let mut order: Vec<usize> = (0..pool_size).collect();
        order.shuffle(rng);
        Self { order, cursor: 0 }
    }

    pub fn next_index<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Option<usize> {
        if self.order.is_empty() {
            return None;
        }
        if self.cursor == self.order.len() {
            self.order.shuffle(rng);
            self.cursor = 0;
        }
        self.cursor += 1;
        Some(self.order[self.cursor - 1])
    }
}

/// Generated examples handed out in order, each at most once per
/// meta-iteration.
#[derive(Debug, Clone)]
pub struct GeneratedCursor<'a> {
    pool: &'a [LabeledExample],
    next: usize,
}

impl<'a> GeneratedCursor<'a> {
    pub fn new(pool: &'a [LabeledExample]) -> Self {
        Self { pool, next: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.pool.len() - self.next
    }

    pub fn consumed(&self) -> usize {
        self.next
    }
}

/// Where a batch entry came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Seed,
    Generated,
}

/// Builds the batch of learner iteration `learner_iter`: exactly
/// `plan.seed_count(learner_iter)` seed examples and generated examples for
/// the rest, in shuffled order.
pub fn compose_batch<R: Rng + ?Sized>(
    plan: &CurriculumPlan,
    learner_iter: usize,
    seed_pool: &[LabeledExample],
    seeds: &mut SeedCycler,
    generated: &mut GeneratedCursor<'_>,
    rng: &mut R,
) -> Result<Vec<(LabeledExample, Origin)>, CurriculumError> {
    let n_seed = plan.seed_count(learner_iter);
    let n_generated = plan.batch_size - n_seed;
    if n_seed > 0 && seed_pool.is_empty() {
        return Err(CurriculumError::EmptySeedPool);
    }
    if generated.remaining() < n_generated {
        return Err(CurriculumError::NeedMoreGenerated {
            needed: n_generated - generated.remaining(),
        });
    }
    let mut batch = Vec::with_capacity(plan.batch_size);
    for _ in 0..n_seed {
        let i = seeds.next_index(rng).ok_or(CurriculumError::EmptySeedPool)?;
        batch.push((seed_pool[i].clone(), Origin::Seed));
    }
    for _ in 0..n_generated {
        batch.push((generated.pool[generated.next].clone(), Origin::Generated));
        generated.next += 1;
    }
    batch.shuffle(rng);
    Ok(batch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::TaskKind;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn schedule_examples() {
        let p = plan(0, 15, 100, 10).unwrap();
        assert_eq!((p.i_w, p.n_wb), (100, 10));
        let p = plan(15, 15, 100, 10).unwrap();
        assert_eq!((p.i_w, p.n_wb), (0, 0));
        let p = plan(6, 15, 100, 10).unwrap();
        assert_eq!((p.i_w, p.n_wb), (60, 6));
        let p = plan(40, 15, 100, 10).unwrap();
        assert_eq!((p.i_w, p.n_wb), (0, 0));
    }

    #[test]
    fn rejects_zero_parameters() {
        assert!(plan(0, 0, 100, 10).is_err());
        assert!(plan(0, 5, 0, 10).is_err());
        assert!(plan(0, 5, 100, 0).is_err());
    }

    fn pool(n: usize, tag: &str) -> Vec<LabeledExample> {
        (0..n)
            .map(|i| LabeledExample::new(TaskKind::IntentDetection, tag, &format!("{tag} {i}")))
            .collect()
    }

    fn run(plan: &CurriculumPlan, seed_pool: &[LabeledExample], gen: &[LabeledExample]) -> Vec<Vec<Origin>> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut seeds = SeedCycler::new(seed_pool.len(), &mut rng);
        let mut cursor = GeneratedCursor::new(gen);
        (0..plan.learner_iterations)
            .map(|it| {
                compose_batch(plan, it, seed_pool, &mut seeds, &mut cursor, &mut rng)
                    .unwrap()
                    .into_iter()
                    .map(|(_, o)| o)
                    .collect()
            })
            .collect()
    }

    #[test]
    fn warmup_batches_hold_exact_seed_counts() {
        let p = plan(6, 15, 100, 10).unwrap();
        let batches = run(&p, &pool(3, "seed"), &pool(p.total_generated(), "gen"));
        for (it, b) in batches.iter().enumerate() {
            let seeds = b.iter().filter(|&&o| o == Origin::Seed).count();
            assert_eq!(b.len(), 10);
            assert_eq!(seeds, if it < 60 { 6 } else { 0 });
        }
        let total: usize = batches.iter().flatten().filter(|&&o| o == Origin::Seed).count();
        assert_eq!(total, p.total_seed());
    }

    #[test]
    fn first_meta_iteration_is_pure_seed() {
        let p = plan(0, 5, 20, 10).unwrap();
        let batches = run(&p, &pool(4, "seed"), &[]);
        assert!(batches.iter().flatten().all(|&o| o == Origin::Seed));
    }

    #[test]
    fn signals_when_generated_data_runs_out() {
        let p = plan(5, 5, 3, 10).unwrap();
        let gen = pool(25, "gen");
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut seeds = SeedCycler::new(0, &mut rng);
        let mut cursor = GeneratedCursor::new(&gen);
        for it in 0..2 {
            compose_batch(&p, it, &[], &mut seeds, &mut cursor, &mut rng).unwrap();
        }
        assert_eq!(
            compose_batch(&p, 2, &[], &mut seeds, &mut cursor, &mut rng),
            Err(CurriculumError::NeedMoreGenerated { needed: 5 })
        );
    }

    #[test]
    fn seed_cycler_covers_pool_each_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut c = SeedCycler::new(5, &mut rng);
        for _ in 0..3 {
            let mut pass: Vec<usize> = (0..5).map(|_| c.next_index(&mut rng).unwrap()).collect();
            pass.sort();
            assert_eq!(pass, vec![0, 1, 2, 3, 4]);
        }
    }

    #[test]
    fn schedule_is_monotone_exhaustively() {
        for horizon in 1..=50 {
            let mut prev = (usize::MAX, usize::MAX);
            for i_meta in 0..=horizon {
                let p = plan(i_meta, horizon, 100, 10).unwrap();
                assert!(p.i_w <= prev.0 && p.n_wb <= prev.1);
                prev = (p.i_w, p.n_wb);
            }
            assert_eq!(prev, (0, 0));
        }
    }
}
