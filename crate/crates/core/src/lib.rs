//! Training-patch extraction, scoring, mining and augmentation for image
//! restoration datasets.
//!
//! The pipeline crops HR patches on a deterministic grid ([`ingest`]), scores
//! each patch ([`metrics`]), synthesizes degraded inputs ([`degradation`]),
//! ranks, selects and augments patches ([`curation`]), and summarizes score
//! distributions ([`report`]). Stages exchange [`manifest::Manifest`] files.

pub mod curation;
pub mod degradation;
pub mod error;
pub mod ingest;
pub mod manifest;
pub mod metrics;
pub mod pipeline;
pub mod raster;
pub mod report;
pub mod tensor_file;

pub use curation::{
    augment_manifest, dihedral_apply, guideline_check, select, DihedralTransform, GuidelineReport,
    SelectionMode, SelectionPolicy,
};
pub use degradation::{
    awgn, bicubic_downsample, degrade_manifest, DegradationSpec, DegradeOptions,
};
pub use error::{Error, Result};
pub use ingest::{crop_patch, enumerate_grid, extract_all, load_image, GridSpec};
pub use manifest::{
    read_manifest, write_manifest, Manifest, PatchRecord, Provenance, SCHEMA_VERSION, TOOL_VERSION,
};
pub use metrics::{
    freq_metric, grad_metric, mse_loss, psnr, score_manifest, std_metric, LossSource, MetricKind,
    MetricScores,
};
pub use pipeline::{run_pipeline, PipelineConfig, PipelineOutcome, RunOptions};
pub use raster::{Image, Patch, Raster};
pub use report::{histogram, metric_correlation_matrix, pearson, summary, Histogram};
