//! Seeded sampling helpers. Every sample index gets its own generator so
//! results do not depend on evaluation order or thread count.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::calculus::NodeField;
use crate::space::{Domain, NodeIdx};

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent generator for stream `stream` of `seed`.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix(seed ^ splitmix(stream.wrapping_add(1))))
}

/// Deterministic sample of `count` distinct items (all of them if fewer).
pub fn choose<T: Copy>(items: &[T], count: usize, seed: u64) -> Vec<T> {
    if count >= items.len() {
        return items.to_vec();
    }
    let mut rng = rng_for(seed, u64::MAX);
    let mut pool = items.to_vec();
    for i in 0..count {
        let j = rng.random_range(i..pool.len());
        pool.swap(i, j);
    }
    pool.truncate(count);
    pool
}

/// Trial field number `k`: cycles through uniform random values,
/// coordinate functions and distance functions.
pub fn trial_field(domain: &Domain, seed: u64, k: usize) -> NodeField {
    let mut rng = rng_for(seed, k as u64);
    let n = domain.node_count();
    let dim = domain.graph().node(0).coords.as_ref().map_or(0, |c| c.len());
    match k % 3 {
        1 if dim > 0 => {
            let axis = (k / 3) % dim;
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            NodeField::new(
                (0..n)
                    .map(|i| {
                        sign * domain
                            .graph()
                            .node(i)
                            .coords
                            .as_ref()
                            .map_or(0.0, |c| c.get(axis).copied().unwrap_or(0.0))
                    })
                    .collect(),
            )
        }
        1 | 2 => {
            let closure = domain.closure();
            let src: NodeIdx = closure[rng.random_range(0..closure.len())];
            let d = domain.graph().distances_from(src);
            NodeField::new(d.into_iter().map(|x| if x.is_finite() { x } else { 0.0 }).collect())
        }
        _ => NodeField::new((0..n).map(|_| rng.random_range(-1.0..1.0)).collect()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn choose_is_deterministic_and_distinct() {
        let items: Vec<usize> = (0..50).collect();
        let a = choose(&items, 10, 3);
        assert_eq!(a, choose(&items, 10, 3));
        let mut s = a.clone();
        s.sort();
        s.dedup();
        assert_eq!(s.len(), 10);
        assert_ne!(a, choose(&items, 10, 4));
    }
}
