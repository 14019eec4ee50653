mod oracles;
mod support;

use oracles::grid_scan;
use patchforge::ingest::{extract_with, ExtractOptions};
use patchforge::{enumerate_grid, extract_all, load_image, Error, GridSpec};
use proptest::prelude::*;
use support::*;

#[test]
fn two_images_give_eight_records() {
    let dir = tempfile::tempdir().unwrap();
    toy_dir(dir.path(), 2, 240);
    let m = extract_all(dir.path(), &GridSpec::new(96, 120)).unwrap();
    assert_eq!(m.len(), 8);
    let ids: Vec<&str> = m.records.iter().map(|r| r.patch_id.as_str()).collect();
    assert_eq!(
        ids,
        [
            "img0_x0_y0",
            "img0_x120_y0",
            "img0_x0_y120",
            "img0_x120_y120",
            "img1_x0_y0",
            "img1_x120_y0",
            "img1_x0_y120",
            "img1_x120_y120",
        ]
    );
    assert!(m
        .records
        .iter()
        .all(|r| r.selected && r.scores == Default::default()));
    assert_eq!(m.provenance.sources.len(), 2);
    assert_eq!(m.provenance.sources[0].channels, 3);
    assert!(m.provenance.source_dir_digest.as_ref().unwrap().len() == 64);
    m.validate().unwrap();
}

#[test]
fn small_image_warns_and_yields_nothing() {
    let dir = tempfile::tempdir().unwrap();
    write_png(dir.path(), "tiny.png", &synthetic_image(90, 90, 1, 0));
    let m = extract_all(dir.path(), &GridSpec::new(96, 120)).unwrap();
    assert!(m.is_empty());
    assert!(m
        .provenance
        .warnings
        .iter()
        .any(|w| w.contains("smaller than patch")));
}

#[test]
fn empty_dir_is_input_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("notes.txt"), "hi").unwrap();
    assert!(matches!(
        extract_all(dir.path(), &GridSpec::new(96, 120)),
        Err(Error::Input(_))
    ));
}

#[test]
fn undecodable_file_is_skipped_with_warning() {
    let dir = tempfile::tempdir().unwrap();
    toy_dir(dir.path(), 1, 240);
    std::fs::write(dir.path().join("broken.png"), b"not a png").unwrap();
    let m = extract_all(dir.path(), &GridSpec::new(96, 120)).unwrap();
    assert_eq!(m.len(), 4);
    assert!(m
        .provenance
        .warnings
        .iter()
        .any(|w| w.contains("broken.png")));
}

#[test]
fn manifests_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    toy_dir(dir.path(), 5, 200);
    let grid = GridSpec::new(48, 40).with_cover_edges(true);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| extract_all(dir.path(), &grid).unwrap())
            .to_jsonl()
    };
    let one = run(1);
    assert_eq!(one, run(8));
    assert_eq!(one, run(3));
}

#[test]
fn saved_patches_equal_crops() {
    let dir = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    toy_dir(dir.path(), 1, 240);
    let opts = ExtractOptions {
        save_patches: Some(out.path().to_path_buf()),
    };
    let m = extract_with(dir.path(), &GridSpec::new(96, 120), &opts).unwrap();
    let src = load_image(dir.path().join("img0.png")).unwrap();
    for r in &m.records {
        let saved = load_image(out.path().join(format!("{}.png", r.patch_id))).unwrap();
        let crop = patchforge::crop_patch(&src, r.x, r.y, r.size).unwrap();
        assert_eq!(saved.raster, crop.pixels);
    }
}

#[test]
fn grayscale_images_keep_one_channel() {
    let dir = tempfile::tempdir().unwrap();
    write_png(dir.path(), "g.png", &synthetic_image(100, 100, 1, 3));
    let m = extract_all(dir.path(), &GridSpec::new(96, 120)).unwrap();
    assert_eq!(m.provenance.sources[0].channels, 1);
    assert_eq!(m.len(), 1);
}

proptest! {
    #[test]
    fn grid_matches_brute_force_scan(
        h in 0usize..400, w in 0usize..400, p in 2usize..120, s in 1usize..150, cover in any::<bool>()
    ) {
        let grid = GridSpec::new(p, s).with_cover_edges(cover);
        prop_assert_eq!(enumerate_grid(h, w, &grid), grid_scan(h, w, p, s, 1, cover));
        if !cover {
            let per_axis = |l: usize| if l >= p { (l - p) / s + 1 } else { 0 };
            prop_assert_eq!(enumerate_grid(h, w, &grid).len(), per_axis(h) * per_axis(w));
        }
    }

    #[test]
    fn aligned_grids_emit_multiples(
        h in 0usize..400, w in 0usize..400, align in 2usize..=4, pm in 1usize..30, sm in 1usize..40, cover in any::<bool>()
    ) {
        let grid = GridSpec::new(align * pm.max(1) + if align * pm < 2 { align } else { 0 }, align * sm)
            .with_scale_align(align)
            .with_cover_edges(cover);
        grid.validate().unwrap();
        let pos = enumerate_grid(h, w, &grid);
        prop_assert!(pos.iter().all(|&(x, y)| x % align == 0 && y % align == 0));
        prop_assert!(pos.iter().all(|&(x, y)| x + grid.patch_size <= w && y + grid.patch_size <= h));
        prop_assert_eq!(pos, grid_scan(h, w, grid.patch_size, grid.stride, align, cover));
    }
}

#[test]
fn sources_follow_file_name_order() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a.png", "a-b.png", "B.png"] {
        write_png(dir.path(), name, &synthetic_image(96, 96, 1, 1));
    }
    let m = extract_all(dir.path(), &GridSpec::new(96, 120)).unwrap();
    let ids: Vec<&str> = m.provenance.sources.iter().map(|s| s.id.as_str()).collect();
    assert_eq!(ids, ["B", "a-b", "a"]);
    let records: Vec<&str> = m.records.iter().map(|r| r.source_id.as_str()).collect();
    assert_eq!(records, ids);
}
