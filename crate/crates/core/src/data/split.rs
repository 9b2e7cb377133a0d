use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::DataError;

/// Train/validation/test fractions; must be positive and sum to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl SplitFractions {
    pub fn new(train: f64, val: f64, test: f64) -> Self {
        Self { train, val, test }
    }

    fn check(&self) -> Result<(), DataError> {
        let all = [self.train, self.val, self.test];
        if all.iter().any(|f| !f.is_finite() || *f <= 0.0) {
            return Err(DataError::Precondition("split fractions must be positive".into()));
        }
        let sum: f64 = all.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(DataError::Precondition(format!("split fractions sum to {sum}, not 1")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split<T> {
    pub train: Vec<T>,
    pub val: Vec<T>,
    pub test: Vec<T>,
}

/// Seeded shuffle followed by a cut. Validation and test sizes are floored;
/// the leftover goes to train.
pub fn split_dataset<T>(records: Vec<T>, fractions: SplitFractions, seed: u64) -> Result<Split<T>, DataError> {
    fractions.check()?;
    let n = records.len();
    if n < 3 {
        return Err(DataError::Precondition(format!("need at least 3 records to split, got {n}")));
    }
    // Guard against products like 10 * 0.7 = 6.999999999999999.
    let floor = |f: f64| ((n as f64) * f + 1e-9).floor() as usize;
    let n_val = floor(fractions.val);
    let n_test = floor(fractions.test);
    let n_train = n - n_val - n_test;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shuffled = records;
    shuffled.shuffle(&mut rng);
    let test = shuffled.split_off(n_train + n_val);
    let val = shuffled.split_off(n_train);
    Ok(Split { train: shuffled, val, test })
}
