//! Shared sample generation for the benchmarks.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sbn_core::{TaxonSet, UnrootedTopology};

/// `k` independent uniform random topologies on `n` taxa, unit weights.
pub fn random_sample(n: usize, k: usize, seed: u64) -> Vec<(UnrootedTopology, f64)> {
    let taxa: Arc<TaxonSet> = TaxonSet::numbered(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..k)
        .map(|_| (UnrootedTopology::random(&taxa, &mut rng).unwrap(), 1.0))
        .collect()
}

pub fn refs(sample: &[(UnrootedTopology, f64)]) -> Vec<(&UnrootedTopology, f64)> {
    sample.iter().map(|(t, w)| (t, *w)).collect()
}
