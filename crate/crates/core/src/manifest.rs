//! Manifests: the ordered record of patches exchanged between pipeline stages.
//!
//! On disk a manifest is a JSON-lines file. Line 1 holds the provenance
//! header; every following line is one [`PatchRecord`]. Keys are emitted in
//! declaration order and reals use the shortest representation that
//! round-trips, so writing the same manifest twice gives identical bytes.
//! Keys this version does not know about are kept in `extras` and written
//! back unchanged.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::curation::{DihedralTransform, SelectionMode};
use crate::degradation::DegradationSpec;
use crate::error::{Error, Result};
use crate::ingest::GridSpec;
use crate::metrics::{MetricKind, MetricScores};

pub const SCHEMA_VERSION: &str = "patchforge/1";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Separator between a base patch id and its augmentation suffix.
pub const TRANSFORM_SUFFIX: &str = "#t";

/// Flag set on records whose loss could not be found in the loss source.
pub const FLAG_LOSS_MISSING: &str = "loss_missing";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegradationRecord {
    pub spec: DegradationSpec,
    /// Per-patch noise seeds, one per AWGN step in application order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub seeds: Vec<u64>,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchRecord {
    pub patch_id: String,
    pub source_id: String,
    pub x: usize,
    pub y: usize,
    pub size: usize,
    #[serde(default)]
    pub scores: MetricScores,
    #[serde(default = "default_true")]
    pub selected: bool,
    #[serde(default)]
    pub transform: DihedralTransform,
    #[serde(default, skip_serializing_if = "is_false")]
    pub augmented: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degradation: Option<DegradationRecord>,
    #[serde(flatten)]
    pub extras: BTreeMap<String, Value>,
}

fn default_true() -> bool {
    true
}

fn is_false(b: &bool) -> bool {
    !*b
}

impl PatchRecord {
    pub fn new(source_id: impl Into<String>, x: usize, y: usize, size: usize) -> Self {
        let source_id = source_id.into();
        Self {
            patch_id: crate::raster::patch_id(&source_id, x, y),
            source_id,
            x,
            y,
            size,
            scores: MetricScores::default(),
            selected: true,
            transform: DihedralTransform::IDENTITY,
            augmented: false,
            flags: Vec::new(),
            degradation: None,
            extras: BTreeMap::new(),
        }
    }

    /// The id of the un-augmented patch this record derives from.
    pub fn base_patch_id(&self) -> &str {
        base_patch_id(&self.patch_id)
    }

    pub fn has_flag(&self, flag: &str) -> bool {
        self.flags.iter().any(|f| f == flag)
    }

    pub fn set_flag(&mut self, flag: &str) {
        if !self.has_flag(flag) {
            self.flags.push(flag.to_string());
        }
    }

    pub fn clear_flag(&mut self, flag: &str) {
        self.flags.retain(|f| f != flag);
    }
}

pub fn base_patch_id(patch_id: &str) -> &str {
    match patch_id.rfind(TRANSFORM_SUFFIX) {
        Some(i) if patch_id[i + TRANSFORM_SUFFIX.len()..].parse::<u8>().is_ok() => &patch_id[..i],
        _ => patch_id,
    }
}

/// Dimensions of one decoded source image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceInfo {
    pub id: String,
    pub file: String,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

/// One entry in the provenance trail, appended by each stage that touches the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "stage", rename_all = "snake_case")]
pub enum StageRecord {
    Extract {
        images: usize,
        records: usize,
    },
    Degrade {
        spec: DegradationSpec,
        out_dir: String,
        raw: bool,
        clip: bool,
    },
    Score {
        metrics: Vec<MetricKind>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        loss_source: Option<String>,
        #[serde(default)]
        loss_missing: usize,
    },
    Select {
        metric: MetricKind,
        mode: SelectionMode,
        total: usize,
        selected: usize,
        pruned: bool,
    },
    Augment {
        transforms: Vec<DihedralTransform>,
        records: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        materialized: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub schema: String,
    pub tool_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_dir: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_dir_digest: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub sources: Vec<SourceInfo>,
    #[serde(default)]
    pub warnings: Vec<String>,
    #[serde(default)]
    pub stages: Vec<StageRecord>,
    #[serde(flatten)]
    pub extras: BTreeMap<String, Value>,
}

impl Default for Provenance {
    fn default() -> Self {
        Self {
            schema: SCHEMA_VERSION.to_string(),
            tool_version: TOOL_VERSION.to_string(),
            input_dir: None,
            source_dir_digest: None,
            grid: None,
            sources: Vec::new(),
            warnings: Vec::new(),
            stages: Vec::new(),
            extras: BTreeMap::new(),
        }
    }
}

impl Provenance {
    pub fn source(&self, id: &str) -> Option<&SourceInfo> {
        self.sources.iter().find(|s| s.id == id)
    }

    pub fn last_selection(&self) -> Option<&StageRecord> {
        self.stages
            .iter()
            .rev()
            .find(|s| matches!(s, StageRecord::Select { .. }))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Manifest {
    pub provenance: Provenance,
    pub records: Vec<PatchRecord>,
}

impl Manifest {
    pub fn new(provenance: Provenance, records: Vec<PatchRecord>) -> Self {
        Self {
            provenance,
            records,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn selected(&self) -> impl Iterator<Item = &PatchRecord> {
        self.records.iter().filter(|r| r.selected)
    }

    /// Checks id uniqueness and that every crop fits its recorded source.
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for r in &self.records {
            if !seen.insert(r.patch_id.as_str()) {
                return Err(Error::Input(format!("duplicate patch id `{}`", r.patch_id)));
            }
            if let Some(src) = self.provenance.source(&r.source_id) {
                if r.x + r.size > src.width || r.y + r.size > src.height {
                    return Err(Error::Bounds {
                        x: r.x,
                        y: r.y,
                        size: r.size,
                        width: src.width,
                        height: src.height,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)
            .expect("writing to a Vec cannot fail");
        buf
    }

    fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        serde_json::to_writer(&mut w, &self.provenance)?;
        w.write_all(b"\n")?;
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }
}

pub fn write_manifest(manifest: &Manifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    manifest
        .write_to(BufWriter::new(file))
        .map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(BufReader::new(file)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn parse_manifest<R: BufRead>(reader: R) -> Result<Manifest> {
    let mut lines = reader.lines().enumerate();
    let header = match lines.next() {
        Some((_, line)) => line.map_err(|e| Error::io("<manifest>", e))?,
        None => {
            return Err(Error::Parse {
                line: 1,
                message: "empty file, expected provenance header".into(),
            })
        }
    };
    let header: Value = serde_json::from_str(&header).map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    match header.get("schema").and_then(Value::as_str) {
        Some(SCHEMA_VERSION) => {}
        other => {
            return Err(Error::Version {
                found: other.unwrap_or("<missing>").to_string(),
                expected: SCHEMA_VERSION.to_string(),
            })
        }
    }
    let provenance: Provenance = serde_json::from_value(header).map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;

    let mut records = Vec::new();
    for (idx, line) in lines {
        let line = line.map_err(|e| Error::io("<manifest>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: PatchRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(Manifest {
        provenance,
        records,
    })
}

/// Columns understood by [`export_csv`].
pub const CSV_COLUMNS: &[&str] = &[
    "patch_id",
    "source_id",
    "x",
    "y",
    "size",
    "selected",
    "transform",
    "augmented",
    "loss",
    "grad",
    "std",
    "freq",
    "flags",
];

fn csv_cell(r: &PatchRecord, column: &str) -> String {
    let score = |k: MetricKind| r.scores.get(k).map(|v| v.to_string()).unwrap_or_default();
    match column {
        "patch_id" => r.patch_id.clone(),
        "source_id" => r.source_id.clone(),
        "x" => r.x.to_string(),
        "y" => r.y.to_string(),
        "size" => r.size.to_string(),
        "selected" => r.selected.to_string(),
        "transform" => r.transform.id().to_string(),
        "augmented" => r.augmented.to_string(),
        "loss" => score(MetricKind::Loss),
        "grad" => score(MetricKind::Grad),
        "std" => score(MetricKind::Std),
        "freq" => score(MetricKind::Freq),
        "flags" => r.flags.join(";"),
        _ => unreachable!("column validated by caller"),
    }
}

pub fn export_csv<S: AsRef<str>>(
    manifest: &Manifest,
    columns: &[S],
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    export_csv_to(manifest, columns, file)
}

pub fn export_csv_to<S: AsRef<str>, W: Write>(
    manifest: &Manifest,
    columns: &[S],
    writer: W,
) -> Result<()> {
    if let Some(bad) = columns
        .iter()
        .map(AsRef::as_ref)
        .find(|c| !CSV_COLUMNS.contains(c))
    {
        return Err(Error::Config(format!(
            "unknown column `{bad}` (known: {})",
            CSV_COLUMNS.join(", ")
        )));
    }
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(columns.iter().map(AsRef::as_ref))?;
    for r in &manifest.records {
        w.write_record(columns.iter().map(|c| csv_cell(r, c.as_ref())))?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> Manifest {
        let mut a = PatchRecord::new("img", 0, 0, 96);
        a.scores.set(MetricKind::Grad, 0.5);
        a.scores.set(MetricKind::Std, 12.25);
        let mut b = PatchRecord::new("img", 120, 0, 96);
        b.selected = false;
        b.set_flag(FLAG_LOSS_MISSING);
        let mut prov = Provenance {
            grid: Some(GridSpec::new(96, 120)),
            ..Provenance::default()
        };
        prov.sources.push(SourceInfo {
            id: "img".into(),
            file: "img.png".into(),
            height: 240,
            width: 240,
            channels: 3,
        });
        Manifest::new(prov, vec![a, b])
    }

    #[test]
    fn empty_manifest_is_header_only() {
        let m = Manifest::default();
        let text = String::from_utf8(m.to_jsonl()).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with("{\"schema\":\"patchforge/1\""));
    }

    #[test]
    fn half_serializes_literally() {
        let text = String::from_utf8(sample().to_jsonl()).unwrap();
        let line = text.lines().nth(1).unwrap();
        assert!(line.contains("\"grad\":0.5"), "{line}");
        assert!(line.starts_with("{\"patch_id\":\"img_x0_y0\",\"source_id\":\"img\",\"x\":0"));
    }

    #[test]
    fn round_trip_through_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        let m = sample();
        write_manifest(&m, &path).unwrap();
        assert_eq!(read_manifest(&path).unwrap(), m);
    }

    #[test]
    fn truncated_last_line_names_line() {
        let text = String::from_utf8(sample().to_jsonl()).unwrap();
        let cut = &text[..text.len() - 10];
        match parse_manifest(cut.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_preserved() {
        let text = String::from_utf8(sample().to_jsonl()).unwrap();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        lines[1] = lines[1].replacen('{', "{\"note\":\"hand checked\",", 1);
        lines[0] = lines[0].replacen('{', "{\"operator\":\"lab-3\",", 1);
        let joined = lines.join("\n");
        let m = parse_manifest(joined.as_bytes()).unwrap();
        assert_eq!(m.records[0].extras["note"], Value::from("hand checked"));
        assert_eq!(m.provenance.extras["operator"], Value::from("lab-3"));
        let again = parse_manifest(&m.to_jsonl()[..]).unwrap();
        assert_eq!(again, m);
    }

    #[test]
    fn schema_mismatch_is_version_error() {
        let bad = "{\"schema\":\"patchforge/0\"}\n";
        assert!(matches!(
            parse_manifest(bad.as_bytes()),
            Err(Error::Version { .. })
        ));
        let missing = "{\"tool_version\":\"x\"}\n";
        assert!(matches!(
            parse_manifest(missing.as_bytes()),
            Err(Error::Version { .. })
        ));
        assert!(matches!(
            parse_manifest(&b""[..]),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn base_id_strips_transform_suffix_only() {
        assert_eq!(base_patch_id("a_x0_y0#t3"), "a_x0_y0");
        assert_eq!(base_patch_id("a_x0_y0"), "a_x0_y0");
        assert_eq!(base_patch_id("a#tx_x0_y0"), "a#tx_x0_y0");
    }

    #[test]
    fn csv_export() {
        let m = sample();
        let mut out = Vec::new();
        export_csv_to(&m, &["patch_id", "grad", "flags"], &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(
            text,
            "patch_id,grad,flags\nimg_x0_y0,0.5,\nimg_x120_y0,,loss_missing\n"
        );

        let mut out = Vec::new();
        export_csv_to(&Manifest::default(), &["patch_id"], &mut out).unwrap();
        assert_eq!(out, b"patch_id\n");

        let err = export_csv_to(&m, &["foo"], Vec::new()).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn csv_scores_round_trip() {
        let mut m = sample();
        m.records[0].scores.set(MetricKind::Freq, 1.0 / 3.0);
        m.records[1].scores.set(MetricKind::Freq, 123456.789e-7);
        let mut out = Vec::new();
        export_csv_to(&m, &["freq"], &mut out).unwrap();
        let mut rdr = csv::Reader::from_reader(&out[..]);
        for (row, rec) in rdr.records().zip(&m.records) {
            let parsed: f64 = row.unwrap()[0].parse().unwrap();
            let want = rec.scores.get(MetricKind::Freq).unwrap();
            assert!((parsed - want).abs() <= 1e-12 * want.abs());
        }
    }

    fn arb_score() -> impl Strategy<Value = Option<f64>> {
        prop_oneof![
            Just(None),
            (0.0f64..1e6).prop_map(Some),
            any::<f64>()
                .prop_map(|v| Some(v.abs()))
                .prop_filter("finite", |v| v.unwrap().is_finite()),
        ]
    }

    prop_compose! {
        fn arb_record()(
            src in "[a-z0-9]{1,6}",
            x in 0usize..5000,
            y in 0usize..5000,
            size in 2usize..200,
            scores in proptest::array::uniform4(arb_score()),
            selected in any::<bool>(),
            t in 0u8..8,
            augmented in any::<bool>(),
            missing in any::<bool>(),
        ) -> PatchRecord {
            let mut r = PatchRecord::new(src, x, y, size);
            for (k, s) in MetricKind::ALL.into_iter().zip(scores) {
                if let Some(v) = s { r.scores.set(k, v); }
            }
            r.selected = selected;
            r.transform = DihedralTransform::new(t).unwrap();
            r.augmented = augmented;
            if missing { r.set_flag(FLAG_LOSS_MISSING); }
            r
        }
    }

    proptest! {
        #[test]
        fn read_write_identity(records in proptest::collection::vec(arb_record(), 0..20)) {
            let m = Manifest::new(Provenance::default(), records);
            let bytes = m.to_jsonl();
            let back = parse_manifest(&bytes[..]).unwrap();
            prop_assert_eq!(&back, &m);
            prop_assert_eq!(back.to_jsonl(), bytes);
        }
    }
}
