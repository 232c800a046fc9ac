//! Ego fusion strategies.
//!
//! - `local`: the ego tracker only sees its own detections.
//! - `fusion_at_tracking`: remote tracks are converted to position detections
//!   and pushed through the ordinary associate-and-update path, as if they
//!   were fresh uncorrelated measurements.
//! - `fusion_post_tracking`: remote tracks are associated with ego tracks and
//!   merged by covariance intersection, which stays consistent under unknown
//!   cross-correlation.

use nalgebra::Cholesky;
use serde::{Deserialize, Serialize};

use crate::association::{mahalanobis_cost, solve_assignment, AssignmentProblem};
use crate::error::{Error, Result};
use crate::network::TrackReport;
use crate::sensing::Detection;
use crate::tracking::{symmetrize, GaussianEstimate, StateCovariance, TrackStatus, Tracker};

/// Covariance intersection blending weight in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct FusionWeight(f64);

impl FusionWeight {
    pub fn new(omega: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&omega) {
            Ok(FusionWeight(omega))
        } else {
            Err(Error::Validation(format!("fusion weight {omega} outside [0, 1]")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EgoModel {
    Local,
    FusionAtTracking,
    FusionPostTracking,
}

impl EgoModel {
    pub const ALL: [EgoModel; 3] = [EgoModel::Local, EgoModel::FusionAtTracking, EgoModel::FusionPostTracking];

    /// Short name used on the command line and in tables.
    pub fn cli_name(self) -> &'static str {
        match self {
            EgoModel::Local => "local",
            EgoModel::FusionAtTracking => "track-fusion",
            EgoModel::FusionPostTracking => "ddf",
        }
    }
}

/// Scalar criterion minimized over the CI weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiCriterion {
    #[default]
    Trace,
    Determinant,
}

/// Search tolerance on the CI weight.
pub const OMEGA_TOLERANCE: f64 = 1e-4;

fn information(p: &StateCovariance) -> Result<StateCovariance> {
    Cholesky::new(symmetrize(p))
        .map(|c| c.inverse())
        .ok_or(Error::SingularCovariance)
}

struct CiProblem {
    info_a: StateCovariance,
    info_b: StateCovariance,
    criterion: CiCriterion,
}

impl CiProblem {
    fn fused_covariance(&self, omega: f64) -> Option<StateCovariance> {
        let info = self.info_a * omega + self.info_b * (1.0 - omega);
        Cholesky::new(symmetrize(&info)).map(|c| c.inverse())
    }

    fn objective(&self, omega: f64) -> f64 {
        match self.fused_covariance(omega) {
            Some(p) => match self.criterion {
                CiCriterion::Trace => p.trace(),
                CiCriterion::Determinant => p.determinant(),
            },
            None => f64::INFINITY,
        }
    }

    /// Golden-section search, then the endpoints and the midpoint as candidates.
    /// A candidate must improve strictly to replace an earlier one, so flat
    /// objectives resolve to the symmetric weight 0.5.
    fn best_omega(&self) -> f64 {
        let inv_phi = (5.0_f64.sqrt() - 1.0) / 2.0;
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        let mut c = hi - inv_phi * (hi - lo);
        let mut d = lo + inv_phi * (hi - lo);
        let mut fc = self.objective(c);
        let mut fd = self.objective(d);
        while hi - lo > OMEGA_TOLERANCE {
            if fc <= fd {
                hi = d;
                d = c;
                fd = fc;
                c = hi - inv_phi * (hi - lo);
                fc = self.objective(c);
            } else {
                lo = c;
                c = d;
                fc = fd;
                d = lo + inv_phi * (hi - lo);
                fd = self.objective(d);
            }
        }
        let mut best = 0.5;
        let mut best_f = self.objective(best);
        for cand in [0.5 * (lo + hi), 0.0, 1.0] {
            let f = self.objective(cand);
            if f < best_f - 1e-12 * best_f.abs().max(1.0) {
                best = cand;
                best_f = f;
            }
        }
        best
    }
}

/// Covariance intersection with the trace criterion.
pub fn covariance_intersection(a: &GaussianEstimate, b: &GaussianEstimate) -> Result<(GaussianEstimate, FusionWeight)> {
    covariance_intersection_with(a, b, CiCriterion::Trace)
}

pub fn covariance_intersection_with(
    a: &GaussianEstimate,
    b: &GaussianEstimate,
    criterion: CiCriterion,
) -> Result<(GaussianEstimate, FusionWeight)> {
    let problem = CiProblem {
        info_a: information(&a.covariance)?,
        info_b: information(&b.covariance)?,
        criterion,
    };
    let omega = problem.best_omega();
    let fused_cov = problem.fused_covariance(omega).ok_or(Error::SingularCovariance)?;
    let mean = fused_cov * (problem.info_a * a.mean * omega + problem.info_b * b.mean * (1.0 - omega));
    Ok((GaussianEstimate::new(mean, fused_cov), FusionWeight(omega)))
}

/// Fuses `b` into `a` as if `b` were an independent direct measurement of the
/// full state (information sum). This is the algebra behind fusion at tracking.
pub fn naive_fusion(a: &GaussianEstimate, b: &GaussianEstimate) -> Result<GaussianEstimate> {
    let info = information(&a.covariance)? + information(&b.covariance)?;
    let cov = information(&info)?;
    let mean = cov * (information(&a.covariance)? * a.mean + information(&b.covariance)? * b.mean);
    Ok(GaussianEstimate::new(mean, cov))
}

/// Remote track as a position detection attributed to its sender.
pub fn report_to_detection(r: &TrackReport, sender: &str, tick: u64) -> Detection {
    Detection {
        sensor_id: sender.to_string(),
        agent_id: sender.to_string(),
        tick,
        position: r.estimate.mean.fixed_rows::<3>(0).into_owned(),
        covariance: r.estimate.covariance.fixed_view::<3, 3>(0, 0).into_owned(),
        class_label: r.class_label,
        is_clutter: false,
    }
}

/// Naive fusion: one payload is one batch through associate-and-update.
/// Call once per delivered message.
pub fn fuse_at_tracking(tracker: &mut Tracker, payload: &[TrackReport], sender: &str, tick: u64) -> Result<()> {
    if payload.is_empty() {
        return Ok(());
    }
    let detections: Vec<Detection> = payload.iter().map(|r| report_to_detection(r, sender, tick)).collect();
    let assoc = tracker.associate(&detections);
    let first_birth = tracker.tracks.len();
    tracker.apply(&detections, &assoc)?;
    // Provenance follows the report, not just its sender.
    for &(i, j) in &assoc.pairs {
        tracker.tracks[i].contributors.extend(payload[j].sources.iter().cloned());
    }
    for (k, &j) in assoc.unassigned_cols.iter().enumerate() {
        tracker.tracks[first_birth + k].contributors.extend(payload[j].sources.iter().cloned());
    }
    Ok(())
}

/// Covariance-inflation factor for tracks seeded from remote reports.
pub const REMOTE_BIRTH_INFLATION: f64 = 2.0;

/// Post-tracking DDF: associate ego tracks with remote tracks, merge matches by
/// covariance intersection and seed new tentative tracks from the rest. Seeded
/// tracks go through the same confirmation as locally born ones.
pub fn fuse_post_tracking(tracker: &mut Tracker, payload: &[TrackReport]) -> Result<()> {
    if payload.is_empty() {
        return Ok(());
    }
    let problem = AssignmentProblem::from_fn(tracker.tracks.len(), payload.len(), tracker.config.gate, |i, j| {
        let t = &tracker.tracks[i];
        let r = &payload[j];
        if t.class_label != r.class_label {
            return f64::INFINITY;
        }
        mahalanobis_cost(&t.estimate, &r.estimate).unwrap_or(f64::INFINITY)
    });
    let assoc = solve_assignment(&problem);
    for &(i, j) in &assoc.pairs {
        let (fused, _) = covariance_intersection(&tracker.tracks[i].estimate, &payload[j].estimate)?;
        let t = &mut tracker.tracks[i];
        t.estimate = fused;
        t.hits += 1;
        t.misses = 0;
        t.hit_this_tick = true;
        t.contributors.extend(payload[j].sources.iter().cloned());
    }
    for &j in &assoc.unassigned_cols {
        let r = &payload[j];
        let est = GaussianEstimate::new(r.estimate.mean, r.estimate.covariance * REMOTE_BIRTH_INFLATION);
        tracker.spawn(est, r.class_label, TrackStatus::Tentative, r.sources.clone());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{ClassLabel, Mat3, Vec3};
    use crate::tracking::{StateVector, TrackerConfig};
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn est(x: f64, var: f64) -> GaussianEstimate {
        let mut m = StateVector::zeros();
        m[0] = x;
        GaussianEstimate::new(m, StateCovariance::identity() * var)
    }

    fn report(e: GaussianEstimate, id: u64, sender: &str) -> TrackReport {
        TrackReport {
            track_id: id,
            estimate: e,
            class_label: ClassLabel::Car,
            sources: [sender.to_string()].into(),
        }
    }

    fn tracker_with(estimates: &[GaussianEstimate]) -> Tracker {
        let mut t = Tracker::new("ego", TrackerConfig::default());
        for e in estimates {
            t.spawn(e.clone(), ClassLabel::Car, TrackStatus::Confirmed, ["ego".to_string()].into());
        }
        t
    }

    #[test]
    fn ci_idempotent() {
        let a = GaussianEstimate::new(
            StateVector::from_fn(|i, _| i as f64),
            StateCovariance::from_fn(|i, j| if i == j { 1.0 + i as f64 } else { 0.1 }),
        );
        let (f, _) = covariance_intersection(&a, &a).unwrap();
        assert!((f.mean - a.mean).amax() < 1e-9);
        assert!((f.covariance - a.covariance).amax() < 1e-9);
    }

    #[test]
    fn ci_dominant_input_wins() {
        let a = est(0.0, 1.0);
        let b = est(3.0, 4.0);
        // Oracle: trace(P(w)) = 6 / (w + (1 - w) / 4) on a fine grid.
        let grid_best = (0..=10_000)
            .map(|k| k as f64 / 10_000.0)
            .min_by(|x, y| {
                let f = |w: f64| 6.0 / (w + (1.0 - w) / 4.0);
                f(*x).total_cmp(&f(*y))
            })
            .unwrap();
        assert_eq!(grid_best, 1.0);
        let (f, w) = covariance_intersection(&a, &b).unwrap();
        assert_eq!(w.value(), 1.0);
        assert!((f.mean - a.mean).amax() < 1e-12);
        assert!((f.covariance - a.covariance).amax() < 1e-12);
    }

    #[test]
    fn ci_symmetric_inputs() {
        let (f, w) = covariance_intersection(&est(0.0, 1.0), &est(2.0, 1.0)).unwrap();
        assert_eq!(w.value(), 0.5);
        assert!((f.mean[0] - 1.0).abs() < 1e-12);
        assert!((f.covariance - StateCovariance::identity()).amax() < 1e-12);
    }

    #[test]
    fn ci_singular_input() {
        let z = GaussianEstimate::new_unchecked(StateVector::zeros(), StateCovariance::zeros());
        assert!(matches!(covariance_intersection(&z, &est(0.0, 1.0)), Err(Error::SingularCovariance)));
    }

    #[test]
    fn determinant_criterion_available() {
        let a = est(0.0, 1.0);
        let b = est(1.0, 2.0);
        let (_, w) = covariance_intersection_with(&a, &b, CiCriterion::Determinant).unwrap();
        assert_eq!(w.value(), 1.0);
    }

    #[test]
    fn fusion_weight_bounds() {
        assert!(FusionWeight::new(0.3).is_ok());
        assert!(FusionWeight::new(-0.1).is_err());
        assert!(FusionWeight::new(1.1).is_err());
    }

    fn arb_spd() -> impl Strategy<Value = StateCovariance> {
        (prop::collection::vec(-1.0f64..1.0, 36), prop::collection::vec(0.05f64..3.0, 6)).prop_map(|(a, d)| {
            let a = StateCovariance::from_vec(a);
            a * a.transpose() * 0.5 + StateCovariance::from_diagonal(&nalgebra::Vector6::from_vec(d))
        })
    }

    proptest! {
        #[test]
        fn ci_trace_bounded_and_omega_optimal(pa in arb_spd(), pb in arb_spd()) {
            let a = GaussianEstimate::new(StateVector::zeros(), pa);
            let b = GaussianEstimate::new(StateVector::repeat(1.0), pb);
            let (f, w) = covariance_intersection(&a, &b).unwrap();
            prop_assert!(f.covariance.trace() <= a.covariance.trace().max(b.covariance.trace()) + 1e-9);
            prop_assert!(f.is_spd());
            let ia = a.covariance.try_inverse().unwrap();
            let ib = b.covariance.try_inverse().unwrap();
            let trace_at = |w: f64| (ia * w + ib * (1.0 - w)).try_inverse().unwrap().trace();
            let grid = (0..=10_000).map(|k| trace_at(k as f64 * 1e-4)).fold(f64::INFINITY, f64::min);
            prop_assert!(trace_at(w.value()) <= grid + 1e-3);
        }
    }

    #[test]
    fn naive_fusion_scalar() {
        let f = naive_fusion(&est(0.0, 1.0), &est(2.0, 1.0)).unwrap();
        assert!((f.mean[0] - 1.0).abs() < 1e-12);
        assert!((f.covariance[(0, 0)] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn fuse_at_tracking_empty_payload() {
        let mut t = tracker_with(&[est(0.0, 1.0)]);
        let before = t.tracks.clone();
        fuse_at_tracking(&mut t, &[], "infra", 0).unwrap();
        assert_eq!(t.tracks, before);
    }

    #[test]
    fn fuse_at_tracking_shrinks_and_double_counts() {
        let mut t = tracker_with(&[est(0.0, 1.0)]);
        let r = report(est(0.2, 1.0), 7, "infra");
        let p0 = t.tracks[0].estimate.clone();
        fuse_at_tracking(&mut t, std::slice::from_ref(&r), "infra", 0).unwrap();
        let p1 = t.tracks[0].estimate.clone();
        assert!(p1.position_trace() < p0.position_trace());
        fuse_at_tracking(&mut t, std::slice::from_ref(&r), "infra", 0).unwrap();
        let p2 = t.tracks[0].estimate.clone();
        assert_eq!(t.tracks.len(), 1);
        // Oracle: two sequential scalar Kalman updates, P = 1 -> 1/2 -> 1/3 per axis.
        assert!((p1.covariance[(0, 0)] - 0.5).abs() < 1e-12);
        assert!((p2.covariance[(0, 0)] - 1.0 / 3.0).abs() < 1e-12);
        let m1 = 0.2 * 0.5;
        let m2 = m1 + (0.2 - m1) * (0.5 / 1.5);
        assert!((p2.mean[0] - m2).abs() < 1e-12);
        assert!(t.tracks[0].contributors.contains("infra"));
    }

    #[test]
    fn post_tracking_disjoint_sets_only_add_births() {
        let mut t = tracker_with(&[est(0.0, 1.0)]);
        let before = t.tracks[0].estimate.clone();
        let far = report(est(100.0, 1.0), 3, "infra");
        fuse_post_tracking(&mut t, &[far]).unwrap();
        assert_eq!(t.tracks.len(), 2);
        assert_eq!(t.tracks[0].estimate, before);
        let born = &t.tracks[1];
        assert_eq!(born.status, TrackStatus::Tentative);
        assert!((born.estimate.covariance - StateCovariance::identity() * 2.0).amax() < 1e-12);
        assert_eq!(born.contributors, BTreeSet::from(["infra".to_string()]));
    }

    #[test]
    fn post_tracking_identical_sets_fixed_point() {
        let ests = [est(0.0, 1.0), est(30.0, 2.0)];
        let mut t = tracker_with(&ests);
        let payload: Vec<TrackReport> = ests.iter().enumerate().map(|(i, e)| report(e.clone(), i as u64, "infra")).collect();
        fuse_post_tracking(&mut t, &payload).unwrap();
        fuse_post_tracking(&mut t, &payload).unwrap();
        assert_eq!(t.tracks.len(), 2);
        for (tr, e) in t.tracks.iter().zip(&ests) {
            assert!((tr.estimate.mean - e.mean).amax() < 1e-9);
            assert!((tr.estimate.covariance - e.covariance).amax() < 1e-9);
        }
    }

    #[test]
    fn post_tracking_overlapping_pair() {
        let mut t = tracker_with(&[est(0.0, 1.0)]);
        fuse_post_tracking(&mut t, &[report(est(1.0, 1.0), 0, "infra")]).unwrap();
        let f = &t.tracks[0].estimate;
        // CI at w = 0.5: mean midway, P = (0.5 I + 0.5 I)^-1 = I.
        assert!((f.mean[0] - 0.5).abs() < 1e-12);
        assert!((f.covariance - StateCovariance::identity()).amax() < 1e-12);
        assert!(f.covariance.trace() >= 6.0 - 1e-12);
        assert!(t.tracks[0].hit_this_tick);
    }

    #[test]
    fn report_detection_uses_position_block() {
        let mut e = est(4.0, 2.0);
        e.covariance[(3, 3)] = 50.0;
        let d = report_to_detection(&report(e, 1, "x"), "x", 9);
        assert_eq!(d.position, Vec3::new(4.0, 0.0, 0.0));
        assert_eq!(d.covariance, Mat3::identity() * 2.0);
        assert_eq!(d.tick, 9);
    }
}
