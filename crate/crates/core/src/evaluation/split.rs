//! Seeded random train/test splits.
//!
//! Iteration `i` of a run seeded with `s` draws its split from a ChaCha8
//! stream seeded (via `seed_from_u64`) with
//! `splitmix64_finalize(s + (i + 1) * 0x9E3779B97F4A7C15)` (wrapping).
//! A Fisher-Yates shuffle (`for k in (1..n).rev() { swap(k, uniform(k + 1)) }`)
//! permutes the row indices, where `uniform(b)` rejects draws of `next_u64`
//! at or above the largest multiple of `b` and returns the draw modulo `b`.
//! The first `floor(train_fraction * n)` shuffled indices form the training
//! set. Both index sets are returned in ascending order.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use super::EvaluationError;
use crate::embedding::hashed::splitmix64_finalize;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// One uniform split over all answers.
    #[default]
    Answer,
    /// Each question's answers are split separately.
    PerQuestion,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub iterations: usize,
    pub seed: u64,
    #[serde(default)]
    pub mode: SplitMode,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.7,
            iterations: 1000,
            seed: 0,
            mode: SplitMode::Answer,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<(), EvaluationError> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(EvaluationError::InvalidSplit(format!(
                "train fraction {} is not in (0, 1)",
                self.train_fraction
            )));
        }
        if self.iterations == 0 {
            return Err(EvaluationError::InvalidSplit("iterations must be at least 1".into()));
        }
        Ok(())
    }

    pub fn train_size(&self, n: usize) -> usize {
        (self.train_fraction * n as f64).floor() as usize
    }
}

pub fn iteration_seed(seed: u64, iteration: usize) -> u64 {
    splitmix64_finalize(seed.wrapping_add((iteration as u64).wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

fn uniform(rng: &mut ChaCha8Rng, bound: u64) -> u64 {
    let zone = u64::MAX - (u64::MAX % bound);
    loop {
        let r = rng.next_u64();
        if r < zone {
            return r % bound;
        }
    }
}

fn shuffle(rng: &mut ChaCha8Rng, items: &mut [usize]) {
    for k in (1..items.len()).rev() {
        let j = uniform(rng, k as u64 + 1) as usize;
        items.swap(k, j);
    }
}

/// Train and test indices for one iteration. `groups` gives each row's
/// question and is only consulted in [`SplitMode::PerQuestion`].
pub fn split_indices(
    n: usize,
    groups: Option<&[&str]>,
    spec: &SplitSpec,
    iteration: usize,
) -> Result<(Vec<usize>, Vec<usize>), EvaluationError> {
    let mut rng = ChaCha8Rng::seed_from_u64(iteration_seed(spec.seed, iteration));
    let (mut train, mut test) = match (spec.mode, groups) {
        (SplitMode::Answer, _) | (SplitMode::PerQuestion, None) => {
            let mut perm: Vec<usize> = (0..n).collect();
            shuffle(&mut rng, &mut perm);
            let test = perm.split_off(spec.train_size(n));
            (perm, test)
        }
        (SplitMode::PerQuestion, Some(groups)) => {
            let mut order: Vec<&str> = Vec::new();
            let mut members: std::collections::HashMap<&str, Vec<usize>> = Default::default();
            for (i, g) in groups.iter().enumerate() {
                members
                    .entry(g)
                    .or_insert_with(|| {
                        order.push(g);
                        Vec::new()
                    })
                    .push(i);
            }
            let (mut train, mut test) = (Vec::new(), Vec::new());
            for g in order {
                let mut idx = members.remove(g).expect("grouped above");
                shuffle(&mut rng, &mut idx);
                let rest = idx.split_off(spec.train_size(idx.len()));
                train.extend(idx);
                test.extend(rest);
            }
            (train, test)
        }
    };
    if train.len() < 2 || test.len() < 2 {
        return Err(EvaluationError::InvalidSplit(format!(
            "split of {n} rows gives {} training and {} test rows; need at least 2 of each",
            train.len(),
            test.len()
        )));
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}
