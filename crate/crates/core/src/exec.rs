//! Batch execution helpers.
//!
//! Every fan-out in the crate (perimetry sweeps, participants, trials,
//! Monte-Carlo seeds) goes through [`map_ordered`]. With the `parallel`
//! feature (default) it runs on the rayon pool; without it, it is a plain
//! sequential map. Results always come back in input order, so outputs are
//! byte-identical across both modes.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `items`, preserving input order in the output.
#[cfg(feature = "parallel")]
pub fn map_ordered<T, R, F>(items: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    items.into_par_iter().map(f).collect()
}

/// Maps `f` over `items`, preserving input order in the output.
#[cfg(not(feature = "parallel"))]
pub fn map_ordered<T, R, F>(items: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    items.into_iter().map(f).collect()
}

/// Sequential map with the same signature as [`map_ordered`]. Compiled in
/// both modes; the criterion benches use it as the baseline when comparing
/// parallel against sequential execution.
pub fn map_ordered_seq<T, R, F>(items: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    items.into_iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordering_matches_sequential() {
        let items: Vec<u64> = (0..1000).collect();
        let par = map_ordered(items.clone(), |x| x * x + 1);
        let seq = map_ordered_seq(items, |x| x * x + 1);
        assert_eq!(par, seq);
    }
}
