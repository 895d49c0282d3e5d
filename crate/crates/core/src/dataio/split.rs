use serde::{Deserialize, Serialize};

use crate::numcore::{streams, Rng};
use crate::{Error, Result};

/// Train-pool share: 94 of every 124 samples (94n of 124n).
pub const POOL_NUMERATOR: usize = 94;
pub const POOL_DENOMINATOR: usize = 124;
/// Train : validation = 4 : 1 inside the pool.
pub const VAL_DIVISOR: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub seed: u64,
    /// Early-cycle count per battery; informational, the split only sees sample counts.
    pub n_cycles: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Sample-level split: shuffle, first `⌊count·94/124⌋` to the pool and the rest
/// to test; reshuffle the pool and cut it 4:1 into train/validation.
pub fn split_indices(count: usize, spec: &SplitSpec) -> Result<SplitIndices> {
    if count == 0 {
        return Err(Error::Data("cannot split an empty sample set".into()));
    }
    let base = Rng::seed_from(spec.seed);
    let mut order: Vec<usize> = (0..count).collect();
    base.substream(streams::SPLIT).shuffle(&mut order);

    let pool_len = count * POOL_NUMERATOR / POOL_DENOMINATOR;
    let test = order.split_off(pool_len);
    let mut pool = order;
    base.substream(streams::SPLIT_POOL).shuffle(&mut pool);
    let train_len = pool_len - pool_len / VAL_DIVISOR;
    let val = pool.split_off(train_len);
    Ok(SplitIndices {
        train: pool,
        val,
        test,
    })
}

/// [`split_indices`] applied to owned samples.
pub fn split<T: Clone>(samples: &[T], spec: &SplitSpec) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
    let idx = split_indices(samples.len(), spec)?;
    let take = |ix: &[usize]| ix.iter().map(|&i| samples[i].clone()).collect();
    Ok((take(&idx.train), take(&idx.val), take(&idx.test)))
}
