#![allow(dead_code)]

use std::path::Path;

use patchforge::ingest::save_png;
use patchforge::Raster;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Smooth gradient plus seeded texture, so patches differ in their metrics.
pub fn synthetic_image(h: usize, w: usize, c: usize, seed: u64) -> Raster {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let amp: f64 = rng.random_range(5.0..60.0);
    Raster::from_fn(h, w, c, |y, x, ch| {
        let base = (x + 2 * y + 30 * ch) as f64 * 0.4;
        let texture = if (x / 8 + y / 8) % 3 == 0 { amp } else { 0.0 };
        (base + texture + rng.random_range(0.0..amp))
            .clamp(0.0, 255.0)
            .round()
    })
}

pub fn write_png(dir: &Path, name: &str, raster: &Raster) {
    save_png(raster, dir.join(name)).unwrap();
}

/// `count` RGB images of `size x size` named img0.png, img1.png, ...
pub fn toy_dir(dir: &Path, count: usize, size: usize) {
    for i in 0..count {
        write_png(
            dir,
            &format!("img{i}.png"),
            &synthetic_image(size, size, 3, i as u64),
        );
    }
}

use patchforge::manifest::Provenance;
use patchforge::metrics::{score_patch, MetricKind};
use patchforge::{Manifest, PatchRecord};

/// Records `p0..pN` scored on the given in-memory patches.
pub fn scored_manifest(patches: &[Raster], metrics: &[MetricKind]) -> Manifest {
    let records = patches
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut r = PatchRecord::new(format!("p{i:03}"), 0, 0, p.height());
            r.scores = score_patch(p, metrics).unwrap();
            r
        })
        .collect();
    Manifest::new(Provenance::default(), records)
}

/// Records whose grad scores are given directly.
pub fn manifest_from_scores(scores: &[f64]) -> Manifest {
    let records = scores
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let mut r = PatchRecord::new(format!("p{i:03}"), 0, 0, 8);
            r.scores.set(MetricKind::Grad, s);
            r
        })
        .collect();
    Manifest::new(Provenance::default(), records)
}
