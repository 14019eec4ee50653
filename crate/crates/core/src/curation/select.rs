use std::cmp::Ordering;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifest::{Manifest, PatchRecord, StageRecord};
use crate::metrics::MetricKind;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    /// Keep the top `ceil(f * N)` records, `0 < f <= 1`.
    KeepFraction(f64),
    /// Keep the top `min(k, N)` records.
    TopK(usize),
    /// Keep every record scoring at least `t`.
    Threshold(f64),
    /// Keep `k` records chosen by a seeded shuffle, ignoring scores.
    Random { k: usize, seed: u64 },
}

impl fmt::Display for SelectionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SelectionMode::KeepFraction(v) => write!(f, "keep_fraction({v})"),
            SelectionMode::TopK(k) => write!(f, "top_k({k})"),
            SelectionMode::Threshold(t) => write!(f, "threshold({t})"),
            SelectionMode::Random { k, seed } => write!(f, "random({k}, seed={seed})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionPolicy {
    pub metric: MetricKind,
    pub mode: SelectionMode,
}

impl SelectionPolicy {
    pub fn new(metric: MetricKind, mode: SelectionMode) -> Self {
        Self { metric, mode }
    }

    pub fn validate(&self) -> Result<()> {
        match self.mode {
            SelectionMode::KeepFraction(f) if !(f > 0.0 && f <= 1.0) => Err(Error::Config(
                format!("keep fraction must lie in (0, 1], got {f}"),
            )),
            SelectionMode::TopK(0) | SelectionMode::Random { k: 0, .. } => {
                Err(Error::Config("k must be at least 1".into()))
            }
            SelectionMode::Threshold(t) if !(t.is_finite() && t >= 0.0) => Err(Error::Config(
                format!("threshold must be finite and >= 0, got {t}"),
            )),
            _ => Ok(()),
        }
    }
}

/// `ceil(f * n)`, treating products within rounding noise of an integer as exact.
pub fn fraction_count(f: f64, n: usize) -> usize {
    let x = f * n as f64;
    let nearest = x.round();
    let k = if (x - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest
    } else {
        x.ceil()
    };
    (k as usize).min(n)
}

/// Ordering key for ties: base patch id, then transform id.
fn tie_key(r: &PatchRecord) -> (&str, u8) {
    (r.base_patch_id(), r.transform.id())
}

/// Ranks records by the policy metric (descending, ties by ascending id) and
/// marks the kept ones `selected`. Rejected records stay in the manifest with
/// `selected = false` unless `prune` is set.
pub fn select(mut manifest: Manifest, policy: &SelectionPolicy, prune: bool) -> Result<Manifest> {
    policy.validate()?;
    let n = manifest.records.len();
    let metric = policy.metric;

    let kept = match policy.mode {
        SelectionMode::Random { k, seed } => {
            manifest.records.sort_by(|a, b| tie_key(a).cmp(&tie_key(b)));
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            for r in &mut manifest.records {
                r.selected = false;
            }
            for &i in order.iter().take(k) {
                manifest.records[i].selected = true;
            }
            k.min(n)
        }
        mode => {
            let missing: Vec<String> = manifest
                .records
                .iter()
                .filter(|r| r.scores.get(metric).is_none())
                .map(|r| r.patch_id.clone())
                .collect();
            if !missing.is_empty() {
                return Err(Error::ScoringGap {
                    metric: metric.to_string(),
                    ids: missing,
                });
            }
            let score = |r: &PatchRecord| r.scores.get(metric).expect("checked above");
            manifest.records.sort_by(|a, b| {
                score(b)
                    .total_cmp(&score(a))
                    .then_with(|| tie_key(a).cmp(&tie_key(b)))
            });
            let kept = match mode {
                SelectionMode::KeepFraction(f) => fraction_count(f, n),
                SelectionMode::TopK(k) => k.min(n),
                SelectionMode::Threshold(t) => manifest
                    .records
                    .iter()
                    .take_while(|r| score(r).partial_cmp(&t) != Some(Ordering::Less))
                    .count(),
                SelectionMode::Random { .. } => unreachable!(),
            };
            for (i, r) in manifest.records.iter_mut().enumerate() {
                r.selected = i < kept;
            }
            kept
        }
    };

    if prune {
        manifest.records.retain(|r| r.selected);
    }
    manifest.provenance.stages.push(StageRecord::Select {
        metric,
        mode: policy.mode,
        total: n,
        selected: kept,
        pruned: prune,
    });
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::Provenance;
    use std::collections::BTreeSet;

    fn scored(pairs: &[(&str, f64)]) -> Manifest {
        let records = pairs
            .iter()
            .map(|&(id, s)| {
                let mut r = PatchRecord::new("img", 0, 0, 2);
                r.patch_id = id.to_string();
                r.scores.set(MetricKind::Grad, s);
                r
            })
            .collect();
        Manifest::new(Provenance::default(), records)
    }

    fn chosen(m: &Manifest) -> BTreeSet<String> {
        m.selected().map(|r| r.patch_id.clone()).collect()
    }

    fn set(ids: &[&str]) -> BTreeSet<String> {
        ids.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn keep_half() {
        let m = scored(&[("a", 3.0), ("b", 1.0), ("c", 2.0), ("d", 5.0)]);
        let out = select(
            m,
            &SelectionPolicy::new(MetricKind::Grad, SelectionMode::KeepFraction(0.5)),
            false,
        )
        .unwrap();
        assert_eq!(chosen(&out), set(&["d", "a"]));
        let order: Vec<&str> = out.records.iter().map(|r| r.patch_id.as_str()).collect();
        assert_eq!(order, ["d", "a", "c", "b"]);
        assert_eq!(out.records.len(), 4);
    }

    #[test]
    fn ties_break_by_id() {
        let m = scored(&[("c", 1.0), ("b", 1.0), ("a", 1.0)]);
        let out = select(
            m,
            &SelectionPolicy::new(MetricKind::Grad, SelectionMode::TopK(2)),
            true,
        )
        .unwrap();
        assert_eq!(chosen(&out), set(&["a", "b"]));
        assert_eq!(out.records.len(), 2);
    }

    #[test]
    fn zero_threshold_keeps_all() {
        let m = scored(&[("a", 0.0), ("b", 7.0)]);
        let out = select(
            m,
            &SelectionPolicy::new(MetricKind::Grad, SelectionMode::Threshold(0.0)),
            false,
        )
        .unwrap();
        assert_eq!(out.selected().count(), 2);
    }

    #[test]
    fn single_record_half_keeps_one() {
        assert_eq!(fraction_count(0.5, 1), 1);
        assert_eq!(fraction_count(0.1, 30), 3);
        assert_eq!(fraction_count(0.5, 151_300), 75_650);
        assert_eq!(fraction_count(1.0, 7), 7);
    }

    #[test]
    fn missing_metric_lists_ids() {
        let mut m = scored(&[("a", 1.0), ("b", 2.0)]);
        m.records[1].scores.clear(MetricKind::Grad);
        match select(
            m,
            &SelectionPolicy::new(MetricKind::Grad, SelectionMode::TopK(1)),
            false,
        ) {
            Err(Error::ScoringGap { ids, .. }) => assert_eq!(ids, vec!["b".to_string()]),
            other => panic!("expected scoring gap, got {other:?}"),
        }
    }

    #[test]
    fn random_is_seeded_and_ignores_scores() {
        let mut m = scored(&[("a", 1.0), ("b", 2.0), ("c", 3.0), ("d", 4.0), ("e", 5.0)]);
        m.records[0].scores.clear(MetricKind::Grad);
        let policy =
            SelectionPolicy::new(MetricKind::Grad, SelectionMode::Random { k: 2, seed: 11 });
        let a = select(m.clone(), &policy, false).unwrap();
        m.records.reverse();
        let b = select(m, &policy, false).unwrap();
        assert_eq!(chosen(&a), chosen(&b));
        assert_eq!(chosen(&a).len(), 2);
    }

    #[test]
    fn policy_ranges() {
        let bad = [
            SelectionMode::KeepFraction(0.0),
            SelectionMode::KeepFraction(1.5),
            SelectionMode::TopK(0),
            SelectionMode::Threshold(-1.0),
            SelectionMode::Random { k: 0, seed: 1 },
        ];
        for mode in bad {
            assert!(
                SelectionPolicy::new(MetricKind::Grad, mode)
                    .validate()
                    .is_err(),
                "{mode}"
            );
        }
    }
}
