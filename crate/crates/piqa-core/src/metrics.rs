//! Scene-wise rank correlation evaluation.
//!
//! Correlations are computed independently per scene (scores are never
//! compared across scenes) and aggregated two ways: the median of each
//! metric over scenes, and the median over scenes of the per-scene average
//! of the three metrics. The latter is the single leaderboard number.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Deserialize;
use thiserror::Error;

use crate::data::Manifest;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricError {
    #[error("input lengths differ: {x} vs {y}")]
    LengthMismatch { x: usize, y: usize },
    #[error("correlation needs at least 2 samples, got {0}")]
    TooShort(usize),
    #[error("no prediction for image {0:?}")]
    MissingPrediction(String),
}

fn check_lengths(x: &[f64], y: &[f64]) -> Result<(), MetricError> {
    if x.len() != y.len() {
        return Err(MetricError::LengthMismatch {
            x: x.len(),
            y: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(MetricError::TooShort(x.len()));
    }
    Ok(())
}

/// Tie-averaged ranks, 1-based.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let shared = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[order[k]] = shared;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mean_x = x.iter().sum::<f64>() / n;
    let mean_y = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        let dx = a - mean_x;
        let dy = b - mean_y;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        None
    } else {
        Some(sxy / (sxx * syy).sqrt())
    }
}

/// Spearman rank correlation: Pearson over tie-averaged ranks. `None`
/// when either side is constant.
pub fn srcc(x: &[f64], y: &[f64]) -> Result<Option<f64>, MetricError> {
    check_lengths(x, y)?;
    Ok(pearson(&average_ranks(x), &average_ranks(y)))
}

/// Pearson linear correlation. `None` when either side has zero variance.
pub fn plcc(x: &[f64], y: &[f64]) -> Result<Option<f64>, MetricError> {
    check_lengths(x, y)?;
    Ok(pearson(x, y))
}

// Merge-count the discordant pairs of `y` (which is pre-sorted by (x, y)):
// every inversion under strict ordering is one discordant pair.
fn count_inversions(y: &mut [f64], buf: &mut Vec<f64>) -> u64 {
    let n = y.len();
    let mut swaps = 0u64;
    let mut width = 1;
    while width < n {
        let mut start = 0;
        while start + width < n {
            let mid = start + width;
            let end = (start + 2 * width).min(n);
            buf.clear();
            let (mut i, mut j) = (start, mid);
            while i < mid && j < end {
                if y[i] <= y[j] {
                    buf.push(y[i]);
                    i += 1;
                } else {
                    swaps += (mid - i) as u64;
                    buf.push(y[j]);
                    j += 1;
                }
            }
            buf.extend_from_slice(&y[i..mid]);
            buf.extend_from_slice(&y[j..end]);
            y[start..end].copy_from_slice(buf);
            start += 2 * width;
        }
        width *= 2;
    }
    swaps
}

fn tie_pairs(sorted: &[f64]) -> u64 {
    let mut total = 0u64;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let run = (j - i + 1) as u64;
        total += run * (run - 1) / 2;
        i = j + 1;
    }
    total
}

/// Kendall rank correlation, tau-b (tie corrected). Reduces to
/// `(concordant - discordant) / C(n,2)` when there are no ties. `None`
/// when either side is fully tied.
pub fn krcc(x: &[f64], y: &[f64]) -> Result<Option<f64>, MetricError> {
    check_lengths(x, y)?;
    let n = x.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(y[a].total_cmp(&y[b])));

    let xs: Vec<f64> = order.iter().map(|&i| x[i]).collect();
    let mut ys: Vec<f64> = order.iter().map(|&i| y[i]).collect();

    let n0 = (n as u64) * (n as u64 - 1) / 2;
    let ties_x = tie_pairs(&xs);
    let mut ys_sorted = ys.clone();
    ys_sorted.sort_by(f64::total_cmp);
    let ties_y = tie_pairs(&ys_sorted);
    if ties_x == n0 || ties_y == n0 {
        return Ok(None);
    }

    // Joint ties: runs where both coordinates repeat.
    let mut ties_xy = 0u64;
    {
        let mut i = 0;
        while i < n {
            let mut j = i;
            while j + 1 < n && xs[j + 1] == xs[i] && ys[j + 1] == ys[i] {
                j += 1;
            }
            let run = (j - i + 1) as u64;
            ties_xy += run * (run - 1) / 2;
            i = j + 1;
        }
    }

    let mut buf = Vec::with_capacity(n);
    let discordant = count_inversions(&mut ys, &mut buf);
    let distinct_both = n0 - ties_x - ties_y + ties_xy;
    let p_minus_q = distinct_both as i64 - 2 * discordant as i64;

    let denom = ((n0 - ties_x) as f64 * (n0 - ties_y) as f64).sqrt();
    Ok(Some(p_minus_q as f64 / denom))
}

/// Median with the even case averaged over the two middle values.
pub fn median_f64(values: &[f64]) -> f64 {
    debug_assert!(!values.is_empty());
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Correlations of one scene. A `None` metric means the scene was
/// degenerate (constant predictions or constant ground truth).
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct SceneMetrics {
    pub scene_id: String,
    pub srcc: Option<f64>,
    pub plcc: Option<f64>,
    pub krcc: Option<f64>,
    pub n: usize,
}

impl SceneMetrics {
    pub fn is_defined(&self) -> bool {
        self.srcc.is_some() && self.plcc.is_some() && self.krcc.is_some()
    }

    /// Per-scene average of the three metrics.
    pub fn average(&self) -> Option<f64> {
        match (self.srcc, self.plcc, self.krcc) {
            (Some(s), Some(p), Some(k)) => Some((s + p + k) / 3.0),
            _ => None,
        }
    }
}

/// The full evaluation: per-scene metrics plus both median aggregates.
/// Scenes with undefined metrics are excluded from every median and
/// listed in `excluded_scenes`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct MetricReport {
    pub per_scene: Vec<SceneMetrics>,
    pub median_srcc: Option<f64>,
    pub median_plcc: Option<f64>,
    pub median_krcc: Option<f64>,
    /// Median over scenes of the per-scene (srcc + plcc + krcc) / 3.
    pub final_metric: Option<f64>,
    pub excluded_scenes: Vec<String>,
}

impl MetricReport {
    /// Aggregate per-scene metrics into the two median modes.
    pub fn from_scene_metrics(per_scene: Vec<SceneMetrics>) -> Self {
        let defined: Vec<&SceneMetrics> = per_scene.iter().filter(|m| m.is_defined()).collect();
        let excluded_scenes = per_scene
            .iter()
            .filter(|m| !m.is_defined())
            .map(|m| m.scene_id.clone())
            .collect();
        let collect = |f: fn(&SceneMetrics) -> Option<f64>| -> Option<f64> {
            let values: Vec<f64> = defined.iter().filter_map(|m| f(m)).collect();
            if values.is_empty() {
                None
            } else {
                Some(median_f64(&values))
            }
        };
        let median_srcc = collect(|m| m.srcc);
        let median_plcc = collect(|m| m.plcc);
        let median_krcc = collect(|m| m.krcc);
        let final_metric = collect(SceneMetrics::average);
        Self {
            per_scene,
            median_srcc,
            median_plcc,
            median_krcc,
            final_metric,
            excluded_scenes,
        }
    }

    /// Deterministic JSON with reals at 6 decimals, `null` for undefined.
    pub fn to_json(&self) -> String {
        fn opt(v: Option<f64>) -> String {
            match v {
                Some(v) => format!("{v:.6}"),
                None => "null".to_string(),
            }
        }
        let mut out = String::from("{\"per_scene\":[");
        for (i, scene) in self.per_scene.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(
                out,
                "{{\"scene_id\":{},\"srcc\":{},\"plcc\":{},\"krcc\":{},\"n\":{}}}",
                serde_json::to_string(&scene.scene_id).expect("string encodes"),
                opt(scene.srcc),
                opt(scene.plcc),
                opt(scene.krcc),
                scene.n
            );
        }
        let _ = write!(
            out,
            "],\"median_srcc\":{},\"median_plcc\":{},\"median_krcc\":{},\"final_metric\":{},\"excluded_scenes\":[",
            opt(self.median_srcc),
            opt(self.median_plcc),
            opt(self.median_krcc),
            opt(self.final_metric)
        );
        for (i, scene) in self.excluded_scenes.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            out.push_str(&serde_json::to_string(scene).expect("string encodes"));
        }
        out.push_str("]}\n");
        out
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Score a prediction map against a manifest, scene by scene.
pub fn evaluate(
    predictions: &BTreeMap<String, f64>,
    manifest: &Manifest,
) -> Result<MetricReport, MetricError> {
    for rec in manifest.records() {
        if !predictions.contains_key(&rec.image_id) {
            return Err(MetricError::MissingPrediction(rec.image_id.clone()));
        }
    }
    let mut per_scene = Vec::with_capacity(manifest.n_scenes());
    for (scene_id, members) in manifest.scenes() {
        let mut preds = Vec::with_capacity(members.len());
        let mut gts = Vec::with_capacity(members.len());
        for &idx in members {
            let rec = &manifest.records()[idx];
            preds.push(predictions[&rec.image_id]);
            gts.push(rec.jod_overall);
        }
        per_scene.push(SceneMetrics {
            scene_id: scene_id.to_string(),
            srcc: srcc(&preds, &gts)?,
            plcc: plcc(&preds, &gts)?,
            krcc: krcc(&preds, &gts)?,
            n: members.len(),
        });
    }
    Ok(MetricReport::from_scene_metrics(per_scene))
}

/// One leaderboard row.
#[derive(Debug, Clone, PartialEq)]
pub struct LeaderboardEntry {
    pub rank: usize,
    pub name: String,
    pub final_metric: Option<f64>,
    pub median_srcc: Option<f64>,
    pub median_plcc: Option<f64>,
    pub median_krcc: Option<f64>,
}

/// Rank reports by final metric, descending; undefined finals sort last
/// and ties break alphabetically by name.
pub fn leaderboard(reports: &[(String, MetricReport)]) -> Vec<LeaderboardEntry> {
    let mut entries: Vec<LeaderboardEntry> = reports
        .iter()
        .map(|(name, report)| LeaderboardEntry {
            rank: 0,
            name: name.clone(),
            final_metric: report.final_metric,
            median_srcc: report.median_srcc,
            median_plcc: report.median_plcc,
            median_krcc: report.median_krcc,
        })
        .collect();
    entries.sort_by(|a, b| {
        match (a.final_metric, b.final_metric) {
            (Some(x), Some(y)) => y.total_cmp(&x),
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => std::cmp::Ordering::Equal,
        }
        .then_with(|| a.name.cmp(&b.name))
    });
    for (i, entry) in entries.iter_mut().enumerate() {
        entry.rank = i + 1;
    }
    entries
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ImageRecord, Manifest};

    #[test]
    fn srcc_perfect_monotone() {
        assert_eq!(srcc(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap(), Some(1.0));
    }

    #[test]
    fn srcc_hand_computed_rank_difference() {
        // ranks y = [3,1,2], sum of squared rank differences = 6,
        // rho = 1 - 6*6/(3*8) = -0.5
        assert_eq!(srcc(&[1.0, 2.0, 3.0], &[3.0, 1.0, 2.0]).unwrap(), Some(-0.5));
    }

    #[test]
    fn srcc_constant_side_is_undefined() {
        assert_eq!(srcc(&[1.0, 2.0, 3.0], &[5.0, 5.0, 5.0]).unwrap(), None);
    }

    #[test]
    fn srcc_handles_ties_with_average_ranks() {
        let r = srcc(&[1.0, 1.0, 2.0], &[1.0, 1.0, 2.0]).unwrap().unwrap();
        assert!((r - 1.0).abs() < 1e-15);
        assert_eq!(average_ranks(&[1.0, 1.0, 2.0]), vec![1.5, 1.5, 3.0]);
    }

    #[test]
    fn plcc_exact_linearity() {
        let x = [0.5, 1.0, 4.0, -2.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        assert_eq!(plcc(&x, &y).unwrap(), Some(1.0));
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert_eq!(plcc(&x, &neg).unwrap(), Some(-1.0));
    }

    #[test]
    fn plcc_matches_direct_covariance_formula() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [0.0, 1.0, 2.0, 10.0];
        let n = x.len() as f64;
        let sx: f64 = x.iter().sum();
        let sy: f64 = y.iter().sum();
        let sxy: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        let sxx: f64 = x.iter().map(|a| a * a).sum();
        let syy: f64 = y.iter().map(|b| b * b).sum();
        let oracle = (n * sxy - sx * sy) / ((n * sxx - sx * sx) * (n * syy - sy * sy)).sqrt();
        let got = plcc(&x, &y).unwrap().unwrap();
        assert!((got - oracle).abs() < 1e-12, "{got} vs {oracle}");
    }

    #[test]
    fn krcc_hand_counted() {
        // pairs: (1,2)&(1,3) C, (1,3)&(1,2) C, (2,3)&(3,2) D -> (2-1)/3
        assert_eq!(krcc(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap(), Some(1.0 / 3.0));
    }

    #[test]
    fn krcc_identity_is_one() {
        let x = [4.0, -1.0, 2.5, 0.0, 9.0];
        assert_eq!(krcc(&x, &x).unwrap(), Some(1.0));
    }

    #[test]
    fn krcc_fully_tied_side_is_undefined() {
        assert_eq!(krcc(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).unwrap(), None);
    }

    /// O(n^2) pair-counting tau-b, independent of the merge-sort path.
    fn krcc_brute(x: &[f64], y: &[f64]) -> Option<f64> {
        let n = x.len();
        let (mut p, mut q, mut tx, mut ty, mut txy) = (0u64, 0u64, 0u64, 0u64, 0u64);
        for i in 0..n {
            for j in (i + 1)..n {
                let cx = x[i].total_cmp(&x[j]);
                let cy = y[i].total_cmp(&y[j]);
                use std::cmp::Ordering::Equal;
                match (cx == Equal, cy == Equal) {
                    (true, true) => txy += 1,
                    (true, false) => tx += 1,
                    (false, true) => ty += 1,
                    (false, false) => {
                        if cx == cy {
                            p += 1;
                        } else {
                            q += 1;
                        }
                    }
                }
            }
        }
        let n0 = (n as u64) * (n as u64 - 1) / 2;
        let ties_x = tx + txy;
        let ties_y = ty + txy;
        if ties_x == n0 || ties_y == n0 {
            return None;
        }
        let denom = ((n0 - ties_x) as f64 * (n0 - ties_y) as f64).sqrt();
        Some((p as i64 - q as i64) as f64 / denom)
    }

    #[test]
    fn krcc_matches_pair_counting_oracle_with_ties() {
        let cases: &[(&[f64], &[f64])] = &[
            (&[1.0, 2.0, 2.0, 3.0], &[1.0, 1.0, 2.0, 2.0]),
            (&[1.0, 1.0, 2.0, 2.0, 3.0], &[5.0, 4.0, 4.0, 3.0, 1.0]),
            (&[3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0], &[2.0, 7.0, 1.0, 8.0, 2.0, 8.0, 1.0, 8.0]),
        ];
        for (x, y) in cases {
            assert_eq!(krcc(x, y).unwrap(), krcc_brute(x, y), "x={x:?} y={y:?}");
        }
    }

    fn fixture_manifest() -> Manifest {
        let mut records = Vec::new();
        let scenes: [(&str, &[f64]); 3] = [
            ("alpha", &[1.0, 2.0, 3.0, 4.0]),
            ("beta", &[0.5, -0.5, 1.5]),
            ("gamma", &[10.0, 30.0, 20.0, 40.0, 50.0]),
        ];
        for (scene, jods) in scenes {
            for (i, &jod) in jods.iter().enumerate() {
                records.push(ImageRecord {
                    image_id: format!("{scene}_{i}"),
                    scene_id: scene.to_string(),
                    source: "synthetic".to_string(),
                    jod_overall: jod,
                    jod_detail: None,
                    jod_exposure: None,
                });
            }
        }
        Manifest::from_records(records).unwrap()
    }

    #[test]
    fn evaluate_identity_predictions_scores_one() {
        let manifest = fixture_manifest();
        let preds: BTreeMap<String, f64> = manifest
            .records()
            .iter()
            .map(|r| (r.image_id.clone(), r.jod_overall))
            .collect();
        let report = evaluate(&preds, &manifest).unwrap();
        for scene in &report.per_scene {
            assert_eq!(scene.srcc, Some(1.0));
            assert_eq!(scene.krcc, Some(1.0));
            assert!((scene.plcc.unwrap() - 1.0).abs() < 1e-12);
        }
        assert!((report.final_metric.unwrap() - 1.0).abs() < 1e-12);
        assert!(report.excluded_scenes.is_empty());
    }

    #[test]
    fn evaluate_scene_affine_predictions_keep_rank_metrics() {
        let manifest = fixture_manifest();
        let transforms: BTreeMap<&str, (f64, f64)> =
            [("alpha", (2.0, -1.0)), ("beta", (0.5, 10.0)), ("gamma", (3.0, 0.0))]
                .into_iter()
                .collect();
        let preds: BTreeMap<String, f64> = manifest
            .records()
            .iter()
            .map(|r| {
                let (a, b) = transforms[r.scene_id.as_str()];
                (r.image_id.clone(), a * r.jod_overall + b)
            })
            .collect();
        let report = evaluate(&preds, &manifest).unwrap();
        for scene in &report.per_scene {
            assert_eq!(scene.srcc, Some(1.0), "{}", scene.scene_id);
            assert_eq!(scene.krcc, Some(1.0), "{}", scene.scene_id);
        }
    }

    #[test]
    fn evaluate_reports_missing_prediction() {
        let manifest = fixture_manifest();
        let mut preds: BTreeMap<String, f64> = manifest
            .records()
            .iter()
            .map(|r| (r.image_id.clone(), r.jod_overall))
            .collect();
        preds.remove("beta_1");
        assert_eq!(
            evaluate(&preds, &manifest).unwrap_err(),
            MetricError::MissingPrediction("beta_1".to_string())
        );
    }

    #[test]
    fn evaluate_excludes_degenerate_scene() {
        let manifest = fixture_manifest();
        let preds: BTreeMap<String, f64> = manifest
            .records()
            .iter()
            .map(|r| {
                let v = if r.scene_id == "beta" { 7.0 } else { r.jod_overall };
                (r.image_id.clone(), v)
            })
            .collect();
        let report = evaluate(&preds, &manifest).unwrap();
        assert_eq!(report.excluded_scenes, vec!["beta".to_string()]);
        // Medians are over the two defined scenes only.
        assert!((report.final_metric.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn evaluate_ignores_record_order() {
        let manifest = fixture_manifest();
        let preds: BTreeMap<String, f64> = manifest
            .records()
            .iter()
            .enumerate()
            .map(|(i, r)| (r.image_id.clone(), (i as f64 * 0.7).sin()))
            .collect();
        let base = evaluate(&preds, &manifest).unwrap();
        let mut records = manifest.records().to_vec();
        records.reverse();
        let permuted = Manifest::from_records(records).unwrap();
        let again = evaluate(&preds, &permuted).unwrap();
        assert_eq!(base.per_scene, again.per_scene);
    }

    #[test]
    fn aggregation_median_of_scene_averages() {
        let mk = |id: &str, s: f64, p: f64, k: f64| SceneMetrics {
            scene_id: id.to_string(),
            srcc: Some(s),
            plcc: Some(p),
            krcc: Some(k),
            n: 5,
        };
        // Scene averages 0.5, 0.7, 0.9 -> final metric 0.7.
        let report = MetricReport::from_scene_metrics(vec![
            mk("a", 0.5, 0.5, 0.5),
            mk("b", 0.7, 0.7, 0.7),
            mk("c", 0.9, 0.9, 0.9),
        ]);
        assert!((report.final_metric.unwrap() - 0.7).abs() < 1e-12);
        assert_eq!(report.median_srcc, Some(0.7));
    }

    #[test]
    fn json_round_trip_with_six_decimals() {
        let manifest = fixture_manifest();
        let preds: BTreeMap<String, f64> = manifest
            .records()
            .iter()
            .map(|r| (r.image_id.clone(), r.jod_overall * 0.731 + 0.1))
            .collect();
        let report = evaluate(&preds, &manifest).unwrap();
        let json = report.to_json();
        assert!(json.contains("\"final_metric\":1.000000"), "{json}");
        let parsed = MetricReport::from_json(&json).unwrap();
        assert_eq!(parsed.per_scene.len(), report.per_scene.len());
        assert_eq!(parsed.final_metric, Some(1.0));
    }

    #[test]
    fn json_encodes_undefined_as_null() {
        let report = MetricReport::from_scene_metrics(vec![SceneMetrics {
            scene_id: "flat".to_string(),
            srcc: None,
            plcc: None,
            krcc: None,
            n: 3,
        }]);
        let json = report.to_json();
        assert!(json.contains("\"srcc\":null"));
        assert!(json.contains("\"excluded_scenes\":[\"flat\"]"));
        let parsed = MetricReport::from_json(&json).unwrap();
        assert_eq!(parsed.final_metric, None);
    }

    #[test]
    fn leaderboard_orders_and_breaks_ties_by_name() {
        let mk = |f: f64| {
            MetricReport::from_scene_metrics(vec![SceneMetrics {
                scene_id: "s".to_string(),
                srcc: Some(f),
                plcc: Some(f),
                krcc: Some(f),
                n: 4,
            }])
        };
        let reports = vec![
            ("SEM-HyperIQA".to_string(), mk(0.501)),
            ("RQ-Net".to_string(), mk(0.517)),
            ("FHIQA".to_string(), mk(0.515)),
        ];
        let rows = leaderboard(&reports);
        let names: Vec<&str> = rows.iter().map(|r| r.name.as_str()).collect();
        assert_eq!(names, vec!["RQ-Net", "FHIQA", "SEM-HyperIQA"]);
        assert_eq!(rows[0].rank, 1);

        let tied = vec![
            ("zeta".to_string(), mk(0.4)),
            ("alpha".to_string(), mk(0.4)),
        ];
        let rows = leaderboard(&tied);
        assert_eq!(rows[0].name, "alpha");
        assert_eq!(rows[1].name, "zeta");
    }

    #[test]
    fn single_entry_leaderboard() {
        let report = MetricReport::from_scene_metrics(vec![]);
        let rows = leaderboard(&[("only".to_string(), report)]);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].rank, 1);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn paired_vecs() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
            (2..10usize).prop_flat_map(|n| {
                (
                    proptest::collection::vec(-8..8i32, n..=n),
                    proptest::collection::vec(-8..8i32, n..=n),
                )
            })
            .prop_map(|(a, b)| {
                (
                    a.into_iter().map(f64::from).collect(),
                    b.into_iter().map(f64::from).collect(),
                )
            })
        }

        proptest! {
            #[test]
            fn rank_metrics_invariant_under_increasing_transforms((x, y) in paired_vecs()) {
                let fx: Vec<f64> = x.iter().map(|v| (0.3 * v).exp()).collect();
                let gy: Vec<f64> = y.iter().map(|v| 2.5 * v + 7.0).collect();
                prop_assert_eq!(srcc(&x, &y).unwrap(), srcc(&fx, &gy).unwrap());
                prop_assert_eq!(krcc(&x, &y).unwrap(), krcc(&fx, &gy).unwrap());
            }

            #[test]
            fn plcc_invariant_under_positive_affine((x, y) in paired_vecs()) {
                let fx: Vec<f64> = x.iter().map(|v| 3.0 * v - 2.0).collect();
                if let (Some(a), Some(b)) = (plcc(&x, &y).unwrap(), plcc(&fx, &y).unwrap()) {
                    prop_assert!((a - b).abs() < 1e-12);
                }
            }

            #[test]
            fn metrics_are_symmetric((x, y) in paired_vecs()) {
                prop_assert_eq!(srcc(&x, &y).unwrap(), srcc(&y, &x).unwrap());
                prop_assert_eq!(krcc(&x, &y).unwrap(), krcc(&y, &x).unwrap());
                prop_assert_eq!(plcc(&x, &y).unwrap(), plcc(&y, &x).unwrap());
            }

            #[test]
            fn krcc_always_matches_brute_force((x, y) in paired_vecs()) {
                prop_assert_eq!(krcc(&x, &y).unwrap(), krcc_brute(&x, &y));
            }

            #[test]
            fn correlations_stay_in_range((x, y) in paired_vecs()) {
                for r in [srcc(&x, &y).unwrap(), plcc(&x, &y).unwrap(), krcc(&x, &y).unwrap()]
                    .into_iter()
                    .flatten()
                {
                    prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&r), "r={r}");
                }
            }
        }
    }
}
