//! Ranking, selection and flip/rotation augmentation of patch manifests.

mod augment;
mod dihedral;
pub mod guideline;
mod select;

pub use augment::{augment_manifest, materialize, parse_transform_list, INVARIANCE_CAVEAT};
pub use dihedral::{dihedral_apply, DihedralTransform};
pub use guideline::{guideline_check, GuidelineCheck, GuidelineReport};
pub use select::{fraction_count, select, SelectionMode, SelectionPolicy};
