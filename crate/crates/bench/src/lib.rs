//! Synthetic fixtures shared by the benchmarks.

use patchforge::Raster;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A reproducible random patch with 8-bit-valued samples.
pub fn random_patch(size: usize, channels: usize, seed: u64) -> Raster {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Raster::from_fn(size, size, channels, |_, _, _| {
        f64::from(rng.random::<u8>())
    })
}

/// A manifest of `n` records with seeded grad scores, ready for selection.
pub fn scored_manifest(n: usize, seed: u64) -> patchforge::Manifest {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let records = (0..n)
        .map(|i| {
            let mut r =
                patchforge::PatchRecord::new(format!("img{:04}", i / 200), (i % 200) * 120, 0, 96);
            r.scores
                .set(patchforge::MetricKind::Grad, rng.random::<f64>() * 1000.0);
            r
        })
        .collect();
    patchforge::Manifest::new(patchforge::Provenance::default(), records)
}
