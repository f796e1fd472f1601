use rand::seq::index::sample;
use rand::Rng;

use crate::error::{bail, Result};
use crate::numcore::SeededRng;

/// Candidates per turn: the gold template and nine distractors.
pub const NUM_CANDIDATES: usize = 10;

/// Samples `NUM_CANDIDATES - 1` distinct distractors uniformly without
/// replacement and inserts the gold id at a uniform position. Returns the
/// candidate ids and the gold position.
pub fn make_candidates(gold: usize, catalog_size: usize, rng: &mut SeededRng) -> Result<(Vec<usize>, usize)> {
    if catalog_size < NUM_CANDIDATES {
        bail!(Config, "catalog has {catalog_size} templates; candidate sampling needs at least {NUM_CANDIDATES}");
    }
    if gold >= catalog_size {
        bail!(Argument, "gold id {gold} outside catalog of {catalog_size}");
    }
    let mut ids: Vec<usize> = sample(rng, catalog_size - 1, NUM_CANDIDATES - 1)
        .into_iter()
        .map(|i| if i >= gold { i + 1 } else { i })
        .collect();
    let pos = rng.gen_range(0..NUM_CANDIDATES);
    ids.insert(pos, gold);
    Ok((ids, pos))
}

/// [`make_candidates`], except that with `allow_small` a catalog smaller
/// than `NUM_CANDIDATES` yields the whole catalog in id order.
pub fn candidate_set(
    gold: usize,
    catalog_size: usize,
    rng: &mut SeededRng,
    allow_small: bool,
) -> Result<(Vec<usize>, usize)> {
    if allow_small && catalog_size < NUM_CANDIDATES {
        if gold >= catalog_size {
            bail!(Argument, "gold id {gold} outside catalog of {catalog_size}");
        }
        return Ok(((0..catalog_size).collect(), gold));
    }
    make_candidates(gold, catalog_size, rng)
}
