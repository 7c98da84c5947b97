use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::DataError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.70,
            val: 0.15,
            test: 0.15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl DatasetSplit {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.val.len(), self.test.len())
    }
}

/// Shuffles `0..n` under `seed` and cuts it into train/val/test.
///
/// The test size is `round(n * test)`; the validation size is rounded from
/// what is left, in proportion to `val / (train + val)`; train takes the rest.
/// Each part gets at least one sample.
pub fn split_dataset(n: usize, ratios: SplitRatios, seed: u64) -> Result<DatasetSplit, DataError> {
    let r = [ratios.train, ratios.val, ratios.test];
    if r.iter().any(|x| !(*x > 0.0)) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(DataError::BadRatios(r));
    }
    if n < 3 {
        return Err(DataError::TooFewSamples(n));
    }
    let n_test = ((n as f64 * ratios.test).round() as usize).clamp(1, n - 2);
    let rest = n - n_test;
    let share = ratios.val / (ratios.train + ratios.val);
    let n_val = ((rest as f64 * share).round() as usize).clamp(1, rest - 1);

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = rest - n_val;
    let part = |range: std::ops::Range<usize>| {
        let mut v = order[range].to_vec();
        v.sort_unstable();
        v
    };
    Ok(DatasetSplit {
        train: part(0..n_train),
        val: part(n_train..rest),
        test: part(rest..n),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn documented_sizes() {
        let r = SplitRatios::default();
        assert_eq!(split_dataset(1800, r, 0).unwrap().sizes(), (1260, 270, 270));
        assert_eq!(split_dataset(200, r, 0).unwrap().sizes(), (140, 30, 30));
        assert_eq!(split_dataset(10, r, 0).unwrap().sizes(), (7, 1, 2));
        assert_eq!(split_dataset(3, r, 0).unwrap().sizes(), (1, 1, 1));
    }

    #[test]
    fn deterministic_partition() {
        let a = split_dataset(57, SplitRatios::default(), 42).unwrap();
        assert_eq!(a, split_dataset(57, SplitRatios::default(), 42).unwrap());
        let mut all: Vec<usize> = a.train.iter().chain(&a.val).chain(&a.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..57).collect::<Vec<_>>());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            split_dataset(2, SplitRatios::default(), 0),
            Err(DataError::TooFewSamples(2))
        ));
        let bad = SplitRatios {
            train: 0.5,
            val: 0.1,
            test: 0.1,
        };
        assert!(matches!(split_dataset(10, bad, 0), Err(DataError::BadRatios(_))));
    }
}
