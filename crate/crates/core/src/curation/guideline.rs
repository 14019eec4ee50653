//! Audits a manifest against the patch-mining guideline: enough patches,
//! about half kept by gradient magnitude, flip/rotation augmentation, and a
//! non-overlapping extraction grid.

use std::collections::HashSet;
use std::fmt::Write as _;

use serde::Serialize;

use crate::manifest::{Manifest, StageRecord};
use crate::metrics::MetricKind;

/// Fewest distinct selected patches that avoid overfitting with augmentation.
pub const MIN_SELECTED_PATCHES: usize = 30_000;

/// Acceptable fraction of candidates kept by the gradient selection.
pub const KEEP_FRACTION_BAND: (f64, f64) = (0.4, 0.7);

pub const OVERFITTING_RISK: &str = "OVERFITTING_RISK";
pub const SELECTION_NOT_HALF_BY_GRAD: &str = "SELECTION_NOT_HALF_BY_GRAD";
pub const NO_AUGMENTATION: &str = "NO_AUGMENTATION";
pub const OVERLAPPING_GRID: &str = "OVERLAPPING_GRID";
pub const GRID_UNKNOWN: &str = "GRID_UNKNOWN";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GuidelineCheck {
    pub name: &'static str,
    pub passed: bool,
    /// Warning code when the check fails.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub code: Option<&'static str>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GuidelineReport {
    pub selected_patches: usize,
    pub total_candidates: Option<usize>,
    pub checks: Vec<GuidelineCheck>,
}

impl GuidelineReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn warnings(&self) -> Vec<&'static str> {
        self.checks.iter().filter_map(|c| c.code).collect()
    }

    pub fn has_warning(&self, code: &str) -> bool {
        self.warnings().contains(&code)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "guideline check: {}",
            if self.passed() { "PASS" } else { "WARN" }
        );
        for c in &self.checks {
            let mark = if c.passed { "ok  " } else { "WARN" };
            let code = c.code.map(|c| format!(" [{c}]")).unwrap_or_default();
            let _ = writeln!(s, "  {mark} {:<20}{code} {}", c.name, c.detail);
        }
        s
    }
}

fn check(name: &'static str, passed: bool, code: &'static str, detail: String) -> GuidelineCheck {
    GuidelineCheck {
        name,
        passed,
        code: (!passed).then_some(code),
        detail,
    }
}

pub fn guideline_check(manifest: &Manifest) -> GuidelineReport {
    let selected: HashSet<&str> = manifest.selected().map(|r| r.base_patch_id()).collect();
    let selected_patches = selected.len();
    let mut checks = Vec::with_capacity(4);

    checks.push(check(
        "patch_count",
        selected_patches >= MIN_SELECTED_PATCHES,
        OVERFITTING_RISK,
        format!("{selected_patches} distinct selected patches (need >= {MIN_SELECTED_PATCHES})"),
    ));

    let (lo, hi) = KEEP_FRACTION_BAND;
    let (half_ok, detail, total) = match manifest.provenance.last_selection() {
        Some(StageRecord::Select {
            metric,
            total,
            selected,
            mode,
            ..
        }) => {
            let frac = if *total == 0 {
                0.0
            } else {
                *selected as f64 / *total as f64
            };
            (
                *metric == MetricKind::Grad && *total > 0 && (lo..=hi).contains(&frac),
                format!(
                    "kept {selected} of {total} ({:.1}%) by {metric} via {mode}; expected grad with {:.0}-{:.0}%",
                    100.0 * frac,
                    100.0 * lo,
                    100.0 * hi
                ),
                Some(*total),
            )
        }
        _ => (false, "no selection stage recorded".to_string(), None),
    };
    checks.push(check(
        "half_by_grad",
        half_ok,
        SELECTION_NOT_HALF_BY_GRAD,
        detail,
    ));

    let augmented = manifest.records.iter().filter(|r| r.augmented).count();
    let distinct_transforms: HashSet<u8> = manifest
        .records
        .iter()
        .filter(|r| r.augmented)
        .map(|r| r.transform.id())
        .collect();
    checks.push(check(
        "augmentation",
        augmented > 0,
        NO_AUGMENTATION,
        format!(
            "{augmented} augmented records using {} distinct transforms",
            distinct_transforms.len()
        ),
    ));

    checks.push(match manifest.provenance.grid {
        Some(g) => check(
            "grid_stride",
            g.stride >= g.patch_size,
            OVERLAPPING_GRID,
            format!(
                "patch {} stride {}; non-overlapping strides suit large datasets, overlap only scarce ones",
                g.patch_size, g.stride
            ),
        ),
        None => check(
            "grid_stride",
            false,
            GRID_UNKNOWN,
            "no extraction grid recorded".to_string(),
        ),
    });

    GuidelineReport {
        selected_patches,
        total_candidates: total,
        checks,
    }
}
