//! Ground-truth comparison of ego tracks: greedy center-distance matching,
//! per-class average precision and per-tick error accounting.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BoundingBox3D, ClassLabel, Vec3};
use crate::tracking::Track;

/// Number of recall points of the interpolated precision-recall curve.
pub const AP_RECALL_POINTS: usize = 101;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    #[serde(default = "default_range_gate")]
    pub range_gate: f64,
    #[serde(default = "default_burn_in")]
    pub burn_in: f64,
    #[serde(default = "default_match_distance")]
    pub match_distance: f64,
    #[serde(default = "default_classes")]
    pub classes: Vec<ClassLabel>,
}

fn default_range_gate() -> f64 {
    75.0
}
fn default_burn_in() -> f64 {
    2.0
}
fn default_match_distance() -> f64 {
    2.0
}
fn default_classes() -> Vec<ClassLabel> {
    ClassLabel::ALL.to_vec()
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            range_gate: default_range_gate(),
            burn_in: default_burn_in(),
            match_distance: default_match_distance(),
            classes: default_classes(),
        }
    }
}

impl EvalConfig {
    /// `duration` is the scenario length the config will be applied to.
    pub fn validate(&self, duration: Option<f64>) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.range_gate) || !positive(self.match_distance) || !positive(self.burn_in) {
            return Err(Error::Validation("evaluation distances and burn_in must be > 0".into()));
        }
        if self.classes.is_empty() {
            return Err(Error::Validation("evaluation needs at least one class".into()));
        }
        if let Some(d) = duration {
            if self.burn_in >= d {
                return Err(Error::Validation(format!("burn_in {} must be shorter than the scenario ({d} s)", self.burn_in)));
            }
        }
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: EvalConfig = serde_json::from_str(&text)?;
        cfg.validate(None)?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub track_id: u64,
    pub object_id: u64,
    pub class_label: ClassLabel,
    pub score: f64,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FalsePositive {
    pub track_id: u64,
    pub class_label: ClassLabel,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FalseNegative {
    pub object_id: u64,
    pub class_label: ClassLabel,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameMatch {
    pub true_positives: Vec<MatchedPair>,
    pub false_positives: Vec<FalsePositive>,
    pub false_negatives: Vec<FalseNegative>,
}

impl FrameMatch {
    pub fn truth_count(&self) -> usize {
        self.true_positives.len() + self.false_negatives.len()
    }

    pub fn rms_error(&self) -> Option<f64> {
        if self.true_positives.is_empty() {
            return None;
        }
        let sq: f64 = self.true_positives.iter().map(|p| p.distance * p.distance).sum();
        Some((sq / self.true_positives.len() as f64).sqrt())
    }
}

fn planar_distance(a: &Vec3, b: &Vec3) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

/// Greedy nearest-neighbour matching of tracks to the in-gate truth of one
/// frame. Candidate pairs must share a class and lie within
/// `match_distance`; they are taken in order of (distance, track_id,
/// object_id). Unmatched tracks beyond the range gate are not counted.
pub fn match_frame(tracks: &[Track], truth: &[BoundingBox3D], ego_position: &Vec3, cfg: &EvalConfig) -> FrameMatch {
    let in_scope = |c: ClassLabel| cfg.classes.contains(&c);
    let gated: Vec<&BoundingBox3D> = truth
        .iter()
        .filter(|o| in_scope(o.class_label) && planar_distance(&o.center, ego_position) <= cfg.range_gate)
        .collect();
    let tracks: Vec<&Track> = tracks.iter().filter(|t| in_scope(t.class_label)).collect();

    let mut candidates = Vec::new();
    for (ti, t) in tracks.iter().enumerate() {
        let p = t.estimate.position_vec();
        for (oi, o) in gated.iter().enumerate() {
            if o.class_label != t.class_label {
                continue;
            }
            let d = (p - o.center).norm();
            if d <= cfg.match_distance {
                candidates.push((d, t.track_id, o.object_id, ti, oi));
            }
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut track_used = vec![false; tracks.len()];
    let mut truth_used = vec![false; gated.len()];
    let mut out = FrameMatch::default();
    for (d, _, _, ti, oi) in candidates {
        if track_used[ti] || truth_used[oi] {
            continue;
        }
        track_used[ti] = true;
        truth_used[oi] = true;
        out.true_positives.push(MatchedPair {
            track_id: tracks[ti].track_id,
            object_id: gated[oi].object_id,
            class_label: tracks[ti].class_label,
            score: tracks[ti].score,
            distance: d,
        });
    }
    out.true_positives.sort_by_key(|p| p.track_id);
    for (t, used) in tracks.iter().zip(&track_used) {
        if !used && planar_distance(&t.estimate.position_vec(), ego_position) <= cfg.range_gate {
            out.false_positives.push(FalsePositive {
                track_id: t.track_id,
                class_label: t.class_label,
                score: t.score,
            });
        }
    }
    out.false_positives.sort_by_key(|f| f.track_id);
    for (o, used) in gated.iter().zip(&truth_used) {
        if !used {
            out.false_negatives.push(FalseNegative {
                object_id: o.object_id,
                class_label: o.class_label,
            });
        }
    }
    out
}

/// One evaluated track instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredInstance {
    pub score: f64,
    pub is_true_positive: bool,
}

/// 101-point interpolated AP. `None` when there is no ground truth.
pub fn average_precision(instances: &[ScoredInstance], truth_count: usize) -> Option<f64> {
    if truth_count == 0 {
        return None;
    }
    let mut sorted = instances.to_vec();
    // Stable sort keeps the caller's order among equal scores.
    sorted.sort_by(|a, b| b.score.total_cmp(&a.score));
    let mut curve = Vec::with_capacity(sorted.len());
    let mut tp = 0usize;
    for (i, inst) in sorted.iter().enumerate() {
        if inst.is_true_positive {
            tp += 1;
        }
        curve.push((tp as f64 / truth_count as f64, tp as f64 / (i + 1) as f64));
    }
    // Running max from the right gives the interpolated precision.
    let mut best = 0.0f64;
    for point in curve.iter_mut().rev() {
        best = best.max(point.1);
        point.1 = best;
    }
    let steps = (AP_RECALL_POINTS - 1) as f64;
    let mut sum = 0.0;
    let mut k = 0;
    for r in 0..AP_RECALL_POINTS {
        let level = r as f64 / steps;
        while k < curve.len() && curve[k].0 < level - 1e-12 {
            k += 1;
        }
        if k < curve.len() {
            sum += curve[k].1;
        }
    }
    Some(sum / AP_RECALL_POINTS as f64)
}

/// Unweighted mean of the defined APs.
pub fn mean_ap(per_class: &BTreeMap<ClassLabel, Option<f64>>) -> Option<f64> {
    let defined: Vec<f64> = per_class.values().flatten().copied().collect();
    if defined.is_empty() {
        None
    } else {
        Some(defined.iter().sum::<f64>() / defined.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub per_class_ap: BTreeMap<ClassLabel, Option<f64>>,
    pub map: Option<f64>,
    pub ticks: Vec<u64>,
    pub true_positives: Vec<usize>,
    pub false_positives: Vec<usize>,
    pub false_negatives: Vec<usize>,
    pub rms_error: Vec<Option<f64>>,
}

impl RunMetrics {
    pub fn total_true_positives(&self) -> usize {
        self.true_positives.iter().sum()
    }

    pub fn total_false_positives(&self) -> usize {
        self.false_positives.iter().sum()
    }

    pub fn total_false_negatives(&self) -> usize {
        self.false_negatives.iter().sum()
    }

    /// Plot-ready CSV: tick, TP, FP, FN, RMS error (empty when nothing matched).
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "tick,tp,fp,fn,rms_error")?;
        for i in 0..self.ticks.len() {
            let rms = self.rms_error[i].map(|r| format!("{r:.6}")).unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{},{}",
                self.ticks[i], self.true_positives[i], self.false_positives[i], self.false_negatives[i], rms
            )?;
        }
        Ok(())
    }
}

/// Per-tick matches plus everything needed for AP.
#[derive(Debug, Clone, Default)]
pub struct Evaluator {
    pub cfg: EvalConfig,
    ticks: Vec<u64>,
    frames: Vec<FrameMatch>,
}

impl Evaluator {
    pub fn new(cfg: EvalConfig) -> Self {
        Evaluator {
            cfg,
            ticks: Vec::new(),
            frames: Vec::new(),
        }
    }

    /// Adds one frame. Frames before the burn-in are ignored; only confirmed
    /// tracks are evaluated.
    pub fn push(&mut self, tick: u64, time: f64, tracks: &[Track], truth: &[BoundingBox3D], ego_position: &Vec3) {
        if time < self.cfg.burn_in - 1e-9 {
            return;
        }
        let confirmed: Vec<Track> = tracks.iter().filter(|t| t.is_confirmed()).cloned().collect();
        self.ticks.push(tick);
        self.frames.push(match_frame(&confirmed, truth, ego_position, &self.cfg));
    }

    pub fn frames(&self) -> &[FrameMatch] {
        &self.frames
    }

    pub fn finish(&self) -> RunMetrics {
        aggregate(&self.cfg.classes, &self.ticks, &self.frames)
    }
}

/// Pools the frames per class, computes AP and mAP and the per-tick series.
pub fn aggregate(classes: &[ClassLabel], ticks: &[u64], frames: &[FrameMatch]) -> RunMetrics {
    let mut per_class_ap = BTreeMap::new();
    for &c in classes {
        let mut instances = Vec::new();
        let mut truth = 0;
        for f in frames {
            for p in f.true_positives.iter().filter(|p| p.class_label == c) {
                instances.push(ScoredInstance {
                    score: p.score,
                    is_true_positive: true,
                });
                truth += 1;
            }
            for p in f.false_positives.iter().filter(|p| p.class_label == c) {
                instances.push(ScoredInstance {
                    score: p.score,
                    is_true_positive: false,
                });
            }
            truth += f.false_negatives.iter().filter(|n| n.class_label == c).count();
        }
        per_class_ap.insert(c, average_precision(&instances, truth));
    }
    RunMetrics {
        map: mean_ap(&per_class_ap),
        per_class_ap,
        ticks: ticks.to_vec(),
        true_positives: frames.iter().map(|f| f.true_positives.len()).collect(),
        false_positives: frames.iter().map(|f| f.false_positives.len()).collect(),
        false_negatives: frames.iter().map(|f| f.false_negatives.len()).collect(),
        rms_error: frames.iter().map(FrameMatch::rms_error).collect(),
    }
}
