use std::path::Path;

use crate::error::{Error, Result};
use crate::ingest::{map_hr_patches, save_png};
use crate::manifest::{Manifest, StageRecord, TRANSFORM_SUFFIX};

use super::DihedralTransform;

/// Message returned when augmentation is requested without the invariance acknowledgement.
pub const INVARIANCE_CAVEAT: &str = "flip/rotation augmentation is only valid for restoration \
tasks whose degradation is itself invariant under flips and rotations (e.g. bicubic \
super-resolution or white-noise denoising); confirm this holds for the task and pass the \
invariance acknowledgement (`--assert-invariant`)";

/// Parses `0,1,4` style transform lists.
pub fn parse_transform_list(s: &str) -> Result<Vec<DihedralTransform>> {
    let mut out: Vec<DihedralTransform> = s
        .split(',')
        .filter(|p| !p.trim().is_empty())
        .map(str::parse)
        .collect::<Result<_>>()?;
    out.sort();
    out.dedup();
    if out.is_empty() {
        return Err(Error::Config("empty transform list".into()));
    }
    Ok(out)
}

/// Expands every selected record into one tagged record per transform.
///
/// Scores are copied unchanged. Unselected records are dropped. Copies made
/// with a non-identity transform get the id suffix `#t<id>`.
pub fn augment_manifest(
    mut manifest: Manifest,
    transforms: &[DihedralTransform],
    invariance_ack: bool,
) -> Result<Manifest> {
    if !invariance_ack {
        return Err(Error::Refused(INVARIANCE_CAVEAT.to_string()));
    }
    let mut transforms = transforms.to_vec();
    transforms.sort();
    transforms.dedup();
    if transforms.is_empty() {
        return Err(Error::Config("no transforms requested".into()));
    }

    let records = std::mem::take(&mut manifest.records);
    let mut out = Vec::with_capacity(records.len() * transforms.len());
    for rec in records.into_iter().filter(|r| r.selected) {
        let base = rec.base_patch_id().to_string();
        for &t in &transforms {
            let mut copy = rec.clone();
            copy.transform = rec.transform.then(t);
            copy.patch_id = if copy.transform.is_identity() {
                base.clone()
            } else {
                format!("{base}{TRANSFORM_SUFFIX}{}", copy.transform.id())
            };
            copy.augmented = true;
            out.push(copy);
        }
    }
    manifest.records = out;
    manifest.provenance.stages.push(StageRecord::Augment {
        transforms,
        records: manifest.records.len(),
        materialized: None,
    });
    Ok(manifest)
}

/// Writes every record's transformed HR patch as `<patch_id>.png`.
pub fn materialize(manifest: &mut Manifest, dir: impl AsRef<Path>) -> Result<usize> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let written = map_hr_patches(manifest, |rec, patch| {
        save_png(&patch.pixels, dir.join(format!("{}.png", rec.patch_id)))
    })?;
    if let Some(StageRecord::Augment { materialized, .. }) = manifest.provenance.stages.last_mut() {
        *materialized = Some(dir.to_string_lossy().into_owned());
    }
    Ok(written.len())
}
