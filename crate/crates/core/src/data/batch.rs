use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Index batches over `0..n`: a seeded permutation when `shuffle`, the
/// identity order otherwise. The last batch may be partial. Each epoch
/// draws from its own stream of the seed, so the order is a pure function
/// of `(seed, epoch)`.
pub fn batch_indices(n: usize, batch_size: usize, seed: u64, epoch: u64, shuffle: bool) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::Input("batch size must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    if shuffle {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(epoch);
        order.shuffle(&mut rng);
    }
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

/// Batches of references into `items`, ordered as by [`batch_indices`].
pub fn batch_iter<'a, T>(
    items: &'a [T],
    batch_size: usize,
    seed: u64,
    epoch: u64,
    shuffle: bool,
) -> Result<impl Iterator<Item = Vec<&'a T>>> {
    let batches = batch_indices(items.len(), batch_size, seed, epoch, shuffle)?;
    Ok(batches.into_iter().map(move |b| b.into_iter().map(|i| &items[i]).collect()))
}
