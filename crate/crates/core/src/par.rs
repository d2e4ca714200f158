//! Sequential or rayon-backed execution of the embarrassingly parallel loops
//! (Monte Carlo sessions, corpus sessions, scene batches).
//!
//! Every caller derives per-item randomness from the item index, so both
//! strategies produce identical results. Without the `parallel` feature,
//! [`Strategy::Parallel`] runs sequentially.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Strategy {
    Sequential,
    #[default]
    Parallel,
}

impl Strategy {
    pub fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match self {
            Strategy::Sequential => items.iter().map(f).collect(),
            #[cfg(feature = "parallel")]
            Strategy::Parallel => items.par_iter().map(f).collect(),
            #[cfg(not(feature = "parallel"))]
            Strategy::Parallel => items.iter().map(f).collect(),
        }
    }

    pub fn map_range<R, F>(&self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        match self {
            Strategy::Sequential => (0..n).map(f).collect(),
            #[cfg(feature = "parallel")]
            Strategy::Parallel => (0..n).into_par_iter().map(f).collect(),
            #[cfg(not(feature = "parallel"))]
            Strategy::Parallel => (0..n).map(f).collect(),
        }
    }
}

/// SplitMix64 finaliser; used to derive independent sub-seeds.
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategies_agree() {
        let items: Vec<u64> = (0..1000).collect();
        let f = |x: &u64| mix_seed(7, *x) % 97;
        assert_eq!(Strategy::Sequential.map(&items, f), Strategy::Parallel.map(&items, f));
        assert_eq!(
            Strategy::Sequential.map_range(50, |i| i * i),
            Strategy::Parallel.map_range(50, |i| i * i)
        );
    }

    #[test]
    fn sub_seeds_differ() {
        assert_ne!(mix_seed(1, 0), mix_seed(1, 1));
        assert_ne!(mix_seed(1, 0), mix_seed(2, 0));
    }
}
