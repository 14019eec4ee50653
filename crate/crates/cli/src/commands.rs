use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use patchforge::curation::{materialize, parse_transform_list};
use patchforge::ingest::{extract_with, ExtractOptions};
use patchforge::manifest::{export_csv, CSV_COLUMNS};
use patchforge::pipeline::{degradation_spec, selection_policy, DegradeStage, SelectStage};
use patchforge::report::{metric_column, BinScale, HistogramOptions, ValueTransform};
use patchforge::{
    augment_manifest, degrade_manifest, guideline_check, histogram, metric_correlation_matrix,
    read_manifest, run_pipeline, score_manifest, select, summary, write_manifest, DegradeOptions,
    DihedralTransform, GridSpec, GuidelineReport, LossSource, PipelineConfig, RunOptions,
    SCHEMA_VERSION, TOOL_VERSION,
};
use tracing::{info, warn};

use crate::{
    AugmentArgs, CheckArgs, Cli, Command, DegradeArgs, ExtractArgs, ReportArgs, RunArgs, ScoreArgs,
    SelectArgs, VersionArgs,
};

const STRICT_FAILURE: u8 = 2;

pub fn dispatch(cli: &Cli) -> Result<ExitCode> {
    let seed = cli.seed.unwrap_or(0);
    match &cli.command {
        Command::Run(args) => run(args, cli),
        Command::Version(args) => version(args),
        other => {
            install_pool(cli.workers)?;
            match other {
                Command::Extract(a) => extract(a),
                Command::Degrade(a) => degrade(a, seed),
                Command::Score(a) => score(a),
                Command::Select(a) => select_cmd(a, seed),
                Command::Augment(a) => augment(a),
                Command::Check(a) => check(a),
                Command::Report(a) => report(a),
                Command::Run(_) | Command::Version(_) => unreachable!(),
            }
        }
    }
}

fn install_pool(workers: Option<usize>) -> Result<()> {
    if let Some(n) = workers {
        if n == 0 {
            bail!("--workers must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("failed to start worker pool")?;
    }
    Ok(())
}

fn ok() -> Result<ExitCode> {
    Ok(ExitCode::SUCCESS)
}

fn strict_exit(report: &GuidelineReport, strict: bool) -> ExitCode {
    if report.passed() {
        return ExitCode::SUCCESS;
    }
    for code in report.warnings() {
        warn!(code, "guideline warning");
    }
    if strict {
        ExitCode::from(STRICT_FAILURE)
    } else {
        ExitCode::SUCCESS
    }
}

fn extract(a: &ExtractArgs) -> Result<ExitCode> {
    let grid = GridSpec::new(a.patch_size, a.stride)
        .with_scale_align(a.scale_align)
        .with_cover_edges(a.cover_edges);
    let opts = ExtractOptions {
        save_patches: a.save_patches.clone(),
    };
    let m = extract_with(&a.input_dir, &grid, &opts)?;
    for w in &m.provenance.warnings {
        warn!("{w}");
    }
    write_manifest(&m, &a.out)?;
    info!(
        patches = m.len(),
        images = m.provenance.sources.len(),
        "wrote {}",
        a.out.display()
    );
    ok()
}

fn degrade(a: &DegradeArgs, seed: u64) -> Result<ExitCode> {
    let stage = DegradeStage {
        model: a.model.clone(),
        scale: a.scale,
        sigma: a.sigma,
        clip: a.clip,
        raw: a.raw,
    };
    let spec = degradation_spec(&stage, seed)?;
    let m = read_manifest(&a.manifest)?;
    let opts = DegradeOptions {
        clip: a.clip,
        raw: a.raw,
    };
    let m = degrade_manifest(m, &spec, &a.out_dir, &opts)?;
    write_manifest(&m, &a.out)?;
    info!(patches = m.len(), model = %spec, "wrote {}", a.out.display());
    ok()
}

fn score(a: &ScoreArgs) -> Result<ExitCode> {
    let source = match (&a.restored_dir, &a.loss_csv) {
        (Some(dir), _) => Some(LossSource::RestoredDir(dir.clone())),
        (None, Some(csv)) => Some(LossSource::from_csv(csv)?),
        (None, None) => None,
    };
    let m = score_manifest(read_manifest(&a.manifest)?, &a.metrics.0, source.as_ref())?;
    write_manifest(&m, &a.out)?;
    info!(patches = m.len(), "wrote {}", a.out.display());
    ok()
}

fn select_cmd(a: &SelectArgs, seed: u64) -> Result<ExitCode> {
    let stage = SelectStage {
        metric: a.metric,
        keep_fraction: a.keep_fraction,
        top_k: a.top_k,
        threshold: a.threshold,
        random: a.random,
        prune: a.prune,
    };
    let policy = selection_policy(&stage, seed)?;
    let m = select(read_manifest(&a.manifest)?, &policy, a.prune)?;
    write_manifest(&m, &a.out)?;
    info!(
        selected = m.selected().count(),
        total = m.len(),
        "wrote {}",
        a.out.display()
    );
    ok()
}

fn augment(a: &AugmentArgs) -> Result<ExitCode> {
    let transforms = match &a.transforms {
        Some(list) => parse_transform_list(list)?,
        None => DihedralTransform::all().to_vec(),
    };
    let mut m = augment_manifest(read_manifest(&a.manifest)?, &transforms, a.assert_invariant)?;
    if let Some(dir) = &a.materialize {
        let n = materialize(&mut m, dir)?;
        info!(files = n, "materialized into {}", dir.display());
    }
    write_manifest(&m, &a.out)?;
    info!(patches = m.len(), "wrote {}", a.out.display());
    ok()
}

fn check(a: &CheckArgs) -> Result<ExitCode> {
    let report = guideline_check(&read_manifest(&a.manifest)?);
    if a.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        print!("{}", report.to_text());
    }
    Ok(strict_exit(&report, a.strict))
}

fn parse_range(s: &str) -> Result<(f64, f64)> {
    let (lo, hi) = s
        .split_once(',')
        .with_context(|| format!("range `{s}` must be `lo,hi`"))?;
    Ok((lo.trim().parse()?, hi.trim().parse()?))
}

/// Where the `index`-th requested table goes.
fn table_path(out: &Path, suffix: &str, index: usize) -> PathBuf {
    if index == 0 {
        return out.to_path_buf();
    }
    let stem = out.file_stem().unwrap_or_default().to_string_lossy();
    out.with_file_name(format!("{stem}_{suffix}.csv"))
}

fn table_writer(out: Option<&Path>, suffix: &str, index: usize) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(out) => {
            let path = table_path(out, suffix, index);
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent)?;
            }
            info!("writing {}", path.display());
            Box::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?)
        }
        None => Box::new(std::io::stdout()),
    })
}

fn report(a: &ReportArgs) -> Result<ExitCode> {
    let m = read_manifest(&a.manifest)?;
    if a.histogram.is_none() && a.correlate.is_none() && a.summary.is_none() && a.export.is_none() {
        bail!("nothing to report: give --histogram, --correlate, --summary or --export");
    }
    if a.svg.is_some() && a.histogram.is_none() {
        bail!("--svg needs --histogram");
    }
    let out = a.out.as_deref();
    let mut tables = 0;

    if let Some(metric) = a.histogram {
        let transform = match a.transform.as_deref() {
            None | Some("identity") => ValueTransform::Identity,
            Some("sqrt") => ValueTransform::Sqrt,
            Some(other) => bail!("unknown transform `{other}` (expected identity or sqrt)"),
        };
        let opts = HistogramOptions {
            bins: a.bins,
            scale: if a.log {
                BinScale::Log10
            } else {
                BinScale::Linear
            },
            transform,
            range: a.range.as_deref().map(parse_range).transpose()?,
        };
        let hist = histogram(&metric_column(&m, metric)?, &opts)?;
        hist.write_csv(table_writer(out, "histogram", tables)?)?;
        tables += 1;
        if let Some(svg) = &a.svg {
            std::fs::write(svg, hist.to_svg(&format!("{metric} histogram")))
                .with_context(|| format!("writing {}", svg.display()))?;
        }
    }
    if let Some(metrics) = &a.correlate {
        let matrix = metric_correlation_matrix(&m, &metrics.0)?;
        matrix.write_csv(table_writer(out, "correlation", tables)?)?;
        tables += 1;
    }
    if let Some(metric) = a.summary {
        summary(&m, metric)?.write_csv(metric, table_writer(out, "summary", tables)?)?;
    }
    if let Some(path) = &a.export {
        let columns: Vec<String> = match &a.columns {
            Some(list) => list.split(',').map(|c| c.trim().to_string()).collect(),
            None => CSV_COLUMNS.iter().map(|c| c.to_string()).collect(),
        };
        export_csv(&m, &columns, path)?;
        info!(records = m.len(), "exported {}", path.display());
    }
    ok()
}

fn run(a: &RunArgs, cli: &Cli) -> Result<ExitCode> {
    let mut config = match (&a.config, &a.input_dir, &a.out_root) {
        (Some(path), _, _) => {
            let mut c = PipelineConfig::load(path)?;
            if let Some(root) = &a.out_root {
                c.output_root = root.clone();
            }
            c
        }
        (None, Some(input), Some(root)) => PipelineConfig::default_for(input, root),
        _ => bail!("run needs a config file or --input-dir with --out-root"),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if cli.workers.is_some() {
        config.workers = cli.workers;
    }
    install_pool(config.workers)?;
    let outcome = run_pipeline(&config, &RunOptions { force: a.force })?;
    info!(
        patches = outcome.manifest.len(),
        stages = outcome.stage_manifests.len(),
        "pipeline finished in {}",
        config.output_root.display()
    );
    print!("{}", outcome.report.to_text());
    Ok(strict_exit(&outcome.report, a.strict))
}

fn version(a: &VersionArgs) -> Result<ExitCode> {
    let profile = if cfg!(debug_assertions) {
        "debug"
    } else {
        "release"
    };
    let target = format!("{}-{}", std::env::consts::ARCH, std::env::consts::OS);
    if a.json {
        let v = serde_json::json!({
            "tool": "patchforge",
            "version": TOOL_VERSION,
            "schema": SCHEMA_VERSION,
            "target": target,
            "profile": profile,
        });
        println!("{v}");
    } else {
        println!(
            "patchforge {TOOL_VERSION} (manifest schema {SCHEMA_VERSION}, {target}, {profile})"
        );
    }
    ok()
}
