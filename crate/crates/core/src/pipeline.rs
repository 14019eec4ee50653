//! Declarative multi-stage runs driven by a TOML config.
//!
//! ```toml
//! input_dir = "images"
//! output_root = "run1"
//! seed = 7
//!
//! [[stage]]
//! kind = "extract"
//! patch_size = 96
//! stride = 120
//!
//! [[stage]]
//! kind = "score"
//! metrics = ["grad"]
//!
//! [[stage]]
//! kind = "select"
//! metric = "grad"
//! keep_fraction = 0.5
//!
//! [[stage]]
//! kind = "augment"
//! dihedral8 = true
//! assert_invariant = true
//!
//! [[stage]]
//! kind = "report"
//! histogram = "grad"
//! ```
//!
//! Stages run in the fixed order extract, degrade, score, select, augment,
//! report; each kind may appear at most once and only `extract` is required.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::curation::{
    augment_manifest, guideline_check, materialize, select, DihedralTransform, GuidelineReport,
    SelectionMode, SelectionPolicy,
};
use crate::degradation::{degrade_manifest, DegradationSpec, DegradeOptions};
use crate::error::{Error, Result};
use crate::ingest::{extract_with, ExtractOptions, GridSpec};
use crate::manifest::{write_manifest, Manifest};
use crate::metrics::{score_manifest, LossSource, MetricKind};
use crate::report::{
    histogram, metric_column, metric_correlation_matrix, summary, BinScale, HistogramOptions,
    ValueTransform,
};

fn default_patch_size() -> usize {
    96
}
fn default_stride() -> usize {
    120
}
fn default_one() -> usize {
    1
}
fn default_bins() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractStage {
    #[serde(default = "default_patch_size")]
    pub patch_size: usize,
    #[serde(default = "default_stride")]
    pub stride: usize,
    #[serde(default = "default_one")]
    pub scale_align: usize,
    #[serde(default)]
    pub cover_edges: bool,
    /// Also write HR patches under `<output_root>/patches`.
    #[serde(default)]
    pub save_patches: bool,
}

impl Default for ExtractStage {
    fn default() -> Self {
        Self {
            patch_size: default_patch_size(),
            stride: default_stride(),
            scale_align: 1,
            cover_edges: false,
            save_patches: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DegradeStage {
    /// `bicubic`, `awgn`, or a `+`-joined chain such as `bicubic+awgn`.
    pub model: String,
    #[serde(default)]
    pub scale: Option<usize>,
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default)]
    pub clip: bool,
    #[serde(default)]
    pub raw: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreStage {
    pub metrics: Vec<MetricKind>,
    #[serde(default)]
    pub restored_dir: Option<PathBuf>,
    #[serde(default)]
    pub loss_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectStage {
    pub metric: MetricKind,
    #[serde(default)]
    pub keep_fraction: Option<f64>,
    #[serde(default)]
    pub top_k: Option<usize>,
    #[serde(default)]
    pub threshold: Option<f64>,
    /// Random selection of this many records.
    #[serde(default)]
    pub random: Option<usize>,
    #[serde(default)]
    pub prune: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentStage {
    #[serde(default)]
    pub dihedral8: bool,
    #[serde(default)]
    pub transforms: Vec<u8>,
    #[serde(default)]
    pub assert_invariant: bool,
    /// Also write transformed patches under `<output_root>/augmented`.
    #[serde(default)]
    pub materialize: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportStage {
    #[serde(default)]
    pub histogram: Option<MetricKind>,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default)]
    pub log: bool,
    #[serde(default)]
    pub transform: Option<ValueTransform>,
    #[serde(default)]
    pub correlate: Vec<MetricKind>,
    #[serde(default)]
    pub summary: Option<MetricKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Stage {
    Extract(ExtractStage),
    Degrade(DegradeStage),
    Score(ScoreStage),
    Select(SelectStage),
    Augment(AugmentStage),
    Report(ReportStage),
}

impl Stage {
    pub fn name(&self) -> &'static str {
        match self {
            Stage::Extract(_) => "extract",
            Stage::Degrade(_) => "degrade",
            Stage::Score(_) => "score",
            Stage::Select(_) => "select",
            Stage::Augment(_) => "augment",
            Stage::Report(_) => "report",
        }
    }

    fn rank(&self) -> usize {
        match self {
            Stage::Extract(_) => 0,
            Stage::Degrade(_) => 1,
            Stage::Score(_) => 2,
            Stage::Select(_) => 3,
            Stage::Augment(_) => 4,
            Stage::Report(_) => 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub input_dir: PathBuf,
    pub output_root: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; `None` uses every logical CPU.
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(rename = "stage")]
    pub stages: Vec<Stage>,
}

impl PipelineConfig {
    /// Patch 96, stride 120, grad scoring, keep half, all eight flips/rotations, grad histogram.
    pub fn default_for(input_dir: impl Into<PathBuf>, output_root: impl Into<PathBuf>) -> Self {
        Self {
            input_dir: input_dir.into(),
            output_root: output_root.into(),
            seed: 0,
            workers: None,
            stages: vec![
                Stage::Extract(ExtractStage::default()),
                Stage::Score(ScoreStage {
                    metrics: vec![MetricKind::Grad],
                    restored_dir: None,
                    loss_csv: None,
                }),
                Stage::Select(SelectStage {
                    metric: MetricKind::Grad,
                    keep_fraction: Some(0.5),
                    top_k: None,
                    threshold: None,
                    random: None,
                    prune: false,
                }),
                Stage::Augment(AugmentStage {
                    dihedral8: true,
                    transforms: Vec::new(),
                    assert_invariant: true,
                    materialize: false,
                }),
                Stage::Report(ReportStage {
                    histogram: Some(MetricKind::Grad),
                    bins: default_bins(),
                    log: false,
                    transform: None,
                    correlate: Vec::new(),
                    summary: Some(MetricKind::Grad),
                }),
            ],
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self =
            toml::from_str(text).map_err(|e| Error::Config(format!("pipeline config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        // Relative paths in a config file are relative to the file.
        if let Some(base) = path.parent() {
            for p in [&mut cfg.input_dir, &mut cfg.output_root] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn validate(&self) -> Result<()> {
        match self.stages.first() {
            Some(Stage::Extract(_)) => {}
            Some(other) => {
                return Err(Error::Config(format!(
                    "first stage must be extract, found {}",
                    other.name()
                )))
            }
            None => return Err(Error::Config("pipeline has no stages".into())),
        }
        for pair in self.stages.windows(2) {
            if pair[1].rank() <= pair[0].rank() {
                return Err(Error::Config(format!(
                    "stage {} cannot follow {} (order is extract, degrade, score, select, augment, report; each at most once)",
                    pair[1].name(),
                    pair[0].name()
                )));
            }
        }
        let scored: Vec<MetricKind> = self
            .stages
            .iter()
            .find_map(|s| match s {
                Stage::Score(sc) => Some(sc.metrics.clone()),
                _ => None,
            })
            .unwrap_or_default();
        for stage in &self.stages {
            match stage {
                Stage::Extract(e) => self.grid(e).validate()?,
                Stage::Degrade(d) => {
                    degradation_spec(d, self.seed)?;
                }
                Stage::Score(s) => {
                    if s.metrics.is_empty() {
                        return Err(Error::Config("score stage lists no metrics".into()));
                    }
                    let wants_loss = s.metrics.contains(&MetricKind::Loss);
                    match (wants_loss, &s.restored_dir, &s.loss_csv) {
                        (true, None, None) => {
                            return Err(Error::Config(
                                "score stage requests loss without restored_dir or loss_csv".into(),
                            ))
                        }
                        (_, Some(_), Some(_)) => {
                            return Err(Error::Config(
                                "score stage: give restored_dir or loss_csv, not both".into(),
                            ))
                        }
                        _ => {}
                    }
                }
                Stage::Select(s) => {
                    let policy = selection_policy(s, self.seed)?;
                    if !matches!(policy.mode, SelectionMode::Random { .. })
                        && !scored.contains(&s.metric)
                    {
                        return Err(Error::Config(format!(
                            "select ranks by {} but no earlier score stage computes it",
                            s.metric
                        )));
                    }
                }
                Stage::Augment(a) => {
                    augment_transforms(a)?;
                }
                Stage::Report(r) => {
                    for m in r.histogram.iter().chain(&r.correlate).chain(&r.summary) {
                        if !scored.contains(m) {
                            return Err(Error::Config(format!(
                                "report uses {m} but no score stage computes it"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn grid(&self, e: &ExtractStage) -> GridSpec {
        GridSpec {
            patch_size: e.patch_size,
            stride: e.stride,
            scale_align: e.scale_align,
            cover_edges: e.cover_edges,
        }
    }
}

/// Builds a degradation chain from a `model` string such as `bicubic+awgn`.
pub fn degradation_spec(stage: &DegradeStage, seed: u64) -> Result<DegradationSpec> {
    let mut steps = Vec::new();
    for part in stage.model.split('+').map(str::trim) {
        steps.push(match part {
            "bicubic" => DegradationSpec::BicubicDown {
                scale: stage
                    .scale
                    .ok_or_else(|| Error::Config("bicubic model needs a scale".into()))?,
            },
            "awgn" => DegradationSpec::Awgn {
                sigma: stage
                    .sigma
                    .ok_or_else(|| Error::Config("awgn model needs a sigma".into()))?,
                seed,
            },
            other => {
                return Err(Error::Config(format!(
                    "unknown degradation model `{other}` (expected bicubic or awgn)"
                )))
            }
        });
    }
    let spec = if steps.len() == 1 {
        steps.pop().expect("one step")
    } else {
        DegradationSpec::Compose { steps }
    };
    spec.validate()?;
    Ok(spec)
}

pub fn selection_policy(stage: &SelectStage, seed: u64) -> Result<SelectionPolicy> {
    let modes: Vec<SelectionMode> = [
        stage.keep_fraction.map(SelectionMode::KeepFraction),
        stage.top_k.map(SelectionMode::TopK),
        stage.threshold.map(SelectionMode::Threshold),
        stage.random.map(|k| SelectionMode::Random { k, seed }),
    ]
    .into_iter()
    .flatten()
    .collect();
    if modes.len() != 1 {
        return Err(Error::Config(format!(
            "select needs exactly one of keep_fraction, top_k, threshold, random (got {})",
            modes.len()
        )));
    }
    let policy = SelectionPolicy::new(stage.metric, modes[0]);
    policy.validate()?;
    Ok(policy)
}

pub fn augment_transforms(stage: &AugmentStage) -> Result<Vec<DihedralTransform>> {
    match (stage.dihedral8, stage.transforms.is_empty()) {
        (true, true) => Ok(DihedralTransform::all().to_vec()),
        (false, false) => stage
            .transforms
            .iter()
            .map(|&t| DihedralTransform::new(t))
            .collect(),
        (true, false) => Err(Error::Config(
            "augment: give dihedral8 or transforms, not both".into(),
        )),
        (false, true) => Err(Error::Config("augment: no transforms requested".into())),
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overwrite an output root that already holds stage manifests.
    pub force: bool,
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub manifest: Manifest,
    pub report: GuidelineReport,
    pub stage_manifests: Vec<PathBuf>,
    pub artifacts: Vec<PathBuf>,
}

/// Runs every stage in order, writing `stage_<n>.jsonl` after each one and
/// `guideline.json` / `guideline.txt` at the end.
pub fn run_pipeline(config: &PipelineConfig, options: &RunOptions) -> Result<PipelineOutcome> {
    config.validate()?;
    if !config.input_dir.is_dir() {
        return Err(Error::Input(format!(
            "input directory {} does not exist",
            config.input_dir.display()
        )));
    }
    let root = &config.output_root;
    let first = root.join("stage_1.jsonl");
    if first.exists() && !options.force {
        return Err(Error::Config(format!(
            "{} already exists; pass --force to overwrite",
            first.display()
        )));
    }
    std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;

    let mut manifest = Manifest::default();
    let mut stage_manifests = Vec::new();
    let mut artifacts = Vec::new();
    for (n, stage) in config.stages.iter().enumerate() {
        tracing::info!(stage = stage.name(), "running stage {}", n + 1);
        let fail =
            |e: Error| Error::Input(format!("stage {} ({}) failed: {e}", n + 1, stage.name()));
        manifest = run_stage(config, stage, manifest, &mut artifacts).map_err(fail)?;
        let path = root.join(format!("stage_{}.jsonl", n + 1));
        write_manifest(&manifest, &path)?;
        stage_manifests.push(path);
    }

    let report = guideline_check(&manifest);
    let json_path = root.join("guideline.json");
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    std::fs::write(&json_path, json + "\n").map_err(|e| Error::io(&json_path, e))?;
    let txt_path = root.join("guideline.txt");
    std::fs::write(&txt_path, report.to_text()).map_err(|e| Error::io(&txt_path, e))?;
    artifacts.push(json_path);
    artifacts.push(txt_path);

    Ok(PipelineOutcome {
        manifest,
        report,
        stage_manifests,
        artifacts,
    })
}

fn run_stage(
    config: &PipelineConfig,
    stage: &Stage,
    manifest: Manifest,
    artifacts: &mut Vec<PathBuf>,
) -> Result<Manifest> {
    let root = &config.output_root;
    match stage {
        Stage::Extract(e) => {
            let options = ExtractOptions {
                save_patches: e.save_patches.then(|| root.join("patches")),
            };
            extract_with(&config.input_dir, &config.grid(e), &options)
        }
        Stage::Degrade(d) => {
            let spec = degradation_spec(d, config.seed)?;
            let options = DegradeOptions {
                clip: d.clip,
                raw: d.raw,
            };
            degrade_manifest(manifest, &spec, root.join("degraded"), &options)
        }
        Stage::Score(s) => {
            let source = match (&s.restored_dir, &s.loss_csv) {
                (Some(d), _) => Some(LossSource::RestoredDir(d.clone())),
                (None, Some(p)) => Some(LossSource::from_csv(p)?),
                (None, None) => None,
            };
            score_manifest(manifest, &s.metrics, source.as_ref())
        }
        Stage::Select(s) => select(manifest, &selection_policy(s, config.seed)?, s.prune),
        Stage::Augment(a) => {
            let mut out = augment_manifest(manifest, &augment_transforms(a)?, a.assert_invariant)?;
            if a.materialize {
                materialize(&mut out, root.join("augmented"))?;
            }
            Ok(out)
        }
        Stage::Report(r) => {
            if let Some(m) = r.histogram {
                let opts = HistogramOptions {
                    bins: r.bins,
                    scale: if r.log {
                        BinScale::Log10
                    } else {
                        BinScale::Linear
                    },
                    transform: r.transform.unwrap_or_default(),
                    range: None,
                };
                let hist = histogram(&metric_column(&manifest, m)?, &opts)?;
                let csv_path = root.join(format!("report_histogram_{m}.csv"));
                let file = std::fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
                hist.write_csv(file)?;
                let svg_path = root.join(format!("report_histogram_{m}.svg"));
                std::fs::write(&svg_path, hist.to_svg(&format!("{m} histogram")))
                    .map_err(|e| Error::io(&svg_path, e))?;
                artifacts.extend([csv_path, svg_path]);
            }
            if !r.correlate.is_empty() {
                let matrix = metric_correlation_matrix(&manifest, &r.correlate)?;
                let path = root.join("report_correlation.csv");
                let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
                matrix.write_csv(file)?;
                artifacts.push(path);
            }
            if let Some(m) = r.summary {
                let s = summary(&manifest, m)?;
                let path = root.join(format!("report_summary_{m}.csv"));
                let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
                s.write_csv(m, file)?;
                artifacts.push(path);
            }
            Ok(manifest)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips_through_toml() {
        let cfg = PipelineConfig::default_for("imgs", "out");
        cfg.validate().unwrap();
        let text = cfg.to_toml();
        assert_eq!(PipelineConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn select_before_score_is_rejected() {
        let text = r#"
input_dir = "imgs"
output_root = "out"

[[stage]]
kind = "extract"

[[stage]]
kind = "select"
metric = "grad"
keep_fraction = 0.5

[[stage]]
kind = "score"
metrics = ["grad"]
"#;
        let err = PipelineConfig::from_toml(text).unwrap_err();
        assert!(err.to_string().contains("cannot follow"), "{err}");
    }

    #[test]
    fn select_needs_its_metric_scored() {
        let mut cfg = PipelineConfig::default_for("imgs", "out");
        if let Stage::Select(s) = &mut cfg.stages[2] {
            s.metric = MetricKind::Freq;
        }
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn selection_mode_must_be_unique() {
        let s = SelectStage {
            metric: MetricKind::Grad,
            keep_fraction: Some(0.5),
            top_k: Some(3),
            threshold: None,
            random: None,
            prune: false,
        };
        assert!(selection_policy(&s, 0).is_err());
    }

    #[test]
    fn degradation_chain_parsing() {
        let stage = DegradeStage {
            model: "bicubic+awgn".into(),
            scale: Some(2),
            sigma: Some(25.0),
            clip: false,
            raw: false,
        };
        let spec = degradation_spec(&stage, 9).unwrap();
        assert_eq!(spec.to_string(), "bicubic_down(2) + awgn(25, seed=9)");
        let bad = DegradeStage {
            model: "jpeg".into(),
            ..stage
        };
        assert!(degradation_spec(&bad, 0).is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = "input_dir = \"a\"\noutput_root = \"b\"\n[[stage]]\nkind = \"extract\"\npatchsize = 3\n";
        assert!(PipelineConfig::from_toml(text).is_err());
    }
}
