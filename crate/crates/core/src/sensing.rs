//! Parametric noisy-detection model.
//!
//! Stands in for trained perception: every in-range, in-view object is missed
//! with a probability set by its occlusion category, otherwise reported at its
//! true center plus isotropic Gaussian noise with an honest covariance. Clutter
//! is Poisson-distributed and uniform over the sensor's ground footprint.

use nalgebra::Matrix3;
use rand::{Rng, RngCore};
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BoundingBox3D, CameraCalibration, ClassLabel, Mat3, Pose, Vec3, WORLD_FRAME};
use crate::rng::{key_of, substream, RngKind};
use crate::scenario::{AgentSpec, Snapshot};
use crate::visibility::{OcclusionCategory, OcclusionResult, SensorView, VisibilityConfig};

/// Variance floor keeping noiseless covariances positive definite.
pub const MIN_VARIANCE: f64 = 1e-10;

/// Height of clutter detections above ground, meters.
const CLUTTER_HEIGHT: f64 = 0.75;
const CLUTTER_ATTEMPTS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MissRates {
    #[serde(rename = "NONE")]
    pub none: f64,
    #[serde(rename = "PARTIAL")]
    pub partial: f64,
    #[serde(rename = "MOST")]
    pub most: f64,
    #[serde(rename = "COMPLETE")]
    pub complete: f64,
}

impl Default for MissRates {
    fn default() -> Self {
        MissRates {
            none: 0.05,
            partial: 0.3,
            most: 0.8,
            complete: 1.0,
        }
    }
}

impl MissRates {
    pub fn get(&self, category: OcclusionCategory) -> f64 {
        match category {
            OcclusionCategory::None => self.none,
            OcclusionCategory::Partial => self.partial,
            OcclusionCategory::Most => self.most,
            OcclusionCategory::Complete | OcclusionCategory::NotInView => 1.0_f64.max(self.complete),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionModel {
    #[serde(default = "default_sigma")]
    pub position_noise_sigma: f64,
    #[serde(default = "default_base_miss")]
    pub base_miss_rate: f64,
    #[serde(default)]
    pub miss_rate_by_occlusion: MissRates,
    #[serde(default = "default_clutter")]
    pub clutter_rate: f64,
    #[serde(default = "default_max_range")]
    pub max_range: f64,
}

fn default_sigma() -> f64 {
    0.5
}
fn default_base_miss() -> f64 {
    0.05
}
fn default_clutter() -> f64 {
    0.5
}
fn default_max_range() -> f64 {
    100.0
}

impl Default for DetectionModel {
    fn default() -> Self {
        DetectionModel {
            position_noise_sigma: default_sigma(),
            base_miss_rate: default_base_miss(),
            miss_rate_by_occlusion: MissRates::default(),
            clutter_rate: default_clutter(),
            max_range: default_max_range(),
        }
    }
}

impl DetectionModel {
    pub fn validate(&self) -> Result<()> {
        let m = &self.miss_rate_by_occlusion;
        let probs = [self.base_miss_rate, m.none, m.partial, m.most, m.complete];
        let ok = probs.iter().all(|p| (0.0..=1.0).contains(p))
            && self.position_noise_sigma >= 0.0
            && self.clutter_rate >= 0.0
            && self.max_range > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Validation(
                "detection model: probabilities in [0,1], sigma >= 0, clutter_rate >= 0, max_range > 0".into(),
            ))
        }
    }

    /// Miss probability for an object in `category`; never below the base rate.
    pub fn miss_probability(&self, category: OcclusionCategory) -> f64 {
        self.base_miss_rate.max(self.miss_rate_by_occlusion.get(category))
    }

    pub fn covariance(&self) -> Mat3 {
        Mat3::identity() * self.position_noise_sigma.powi(2).max(MIN_VARIANCE)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub sensor_id: String,
    pub agent_id: String,
    pub tick: u64,
    /// World frame, meters.
    pub position: Vec3,
    pub covariance: Mat3,
    pub class_label: ClassLabel,
    /// Ground truth for evaluation only; fusion never reads it.
    pub is_clutter: bool,
}

/// Detections of one camera whose occlusion state has already been computed
/// (one result per object).
pub fn sense_sensor(
    objects: &[BoundingBox3D],
    occlusion: &[OcclusionResult],
    cam: &CameraCalibration,
    sensor_to_world: &Pose,
    model: &DetectionModel,
    ids: (&str, &str),
    tick: u64,
    rng: &mut dyn RngCore,
) -> Vec<Detection> {
    let (agent_id, sensor_id) = ids;
    let world_to_sensor = sensor_to_world.inverse();
    let cov_sensor = model.covariance();
    let cov_world = {
        let r = sensor_to_world.rotation;
        let c = r * cov_sensor * r.transpose();
        (c + c.transpose()) * 0.5
    };
    let noise = Normal::new(0.0, model.position_noise_sigma).expect("sigma validated");
    let detection = |position: Vec3, class_label: ClassLabel, is_clutter: bool| Detection {
        sensor_id: sensor_id.to_string(),
        agent_id: agent_id.to_string(),
        tick,
        position,
        covariance: cov_world,
        class_label,
        is_clutter,
    };

    let mut out = Vec::new();
    for (obj, occ) in objects.iter().zip(occlusion) {
        if occ.category == OcclusionCategory::NotInView {
            continue;
        }
        if (obj.center - sensor_to_world.translation).norm() > model.max_range {
            continue;
        }
        let missed = rng.random::<f64>() < model.miss_probability(occ.category);
        let n = Vec3::new(noise.sample(rng), noise.sample(rng), noise.sample(rng));
        if missed {
            continue;
        }
        // Measure in the sensor frame, then register into the world.
        let measured = world_to_sensor.transform_point(&obj.center) + n;
        out.push(detection(sensor_to_world.transform_point(&measured), obj.class_label, false));
    }

    if model.clutter_rate > 0.0 {
        let count = Poisson::new(model.clutter_rate).expect("rate validated").sample(rng) as usize;
        let origin = sensor_to_world.translation;
        for _ in 0..count {
            let class_label = ClassLabel::ALL[rng.random_range(0..ClassLabel::ALL.len())];
            for _ in 0..CLUTTER_ATTEMPTS {
                let r = model.max_range * rng.random::<f64>().sqrt();
                let theta = std::f64::consts::TAU * rng.random::<f64>();
                let p = Vec3::new(origin.x + r * theta.cos(), origin.y + r * theta.sin(), CLUTTER_HEIGHT);
                if (p - origin).norm() > model.max_range {
                    continue;
                }
                let in_view = cam
                    .project_point(&world_to_sensor.transform_point(&p))
                    .is_some_and(|(u, v)| {
                        u >= -0.5 && v >= -0.5 && u < f64::from(cam.width) - 0.5 && v < f64::from(cam.height) - 0.5
                    });
                if in_view {
                    out.push(detection(p, class_label, true));
                    break;
                }
            }
        }
    }
    out
}

/// World pose and per-object occlusion of each sensor of `agent`, in sensor
/// order. Depends on the scene only, not on the seed.
pub fn agent_views(
    snapshot: &Snapshot,
    occluders: &[BoundingBox3D],
    agent: &AgentSpec,
    visibility: &VisibilityConfig,
) -> Result<Vec<(Pose, Vec<OcclusionResult>)>> {
    agent
        .sensors
        .iter()
        .map(|s| {
            let pose = snapshot.frames.transform_to(&s.sensor_id, WORLD_FRAME)?;
            let view = SensorView::compute(&snapshot.objects, occluders, &s.calibration, &pose, visibility);
            Ok((pose, view.occlusion))
        })
        .collect()
}

/// Detections of one agent from views made by [`agent_views`], drawn from the
/// `(seed, "sense", agent, tick)` substream.
pub fn sense_views(
    snapshot: &Snapshot,
    agent: &AgentSpec,
    views: &[(Pose, Vec<OcclusionResult>)],
    rng_kind: RngKind,
    seed: u64,
) -> Vec<Detection> {
    let mut rng = substream(rng_kind, seed, "sense", &[key_of(&agent.agent_id), snapshot.tick]);
    let mut out = Vec::new();
    for (s, (pose, occlusion)) in agent.sensors.iter().zip(views) {
        out.extend(sense_sensor(
            &snapshot.objects,
            occlusion,
            &s.calibration,
            pose,
            &s.detection,
            (&agent.agent_id, &s.sensor_id),
            snapshot.tick,
            &mut rng,
        ));
    }
    out
}

/// All detections of one agent at the snapshot's tick.
pub fn sense(
    snapshot: &Snapshot,
    occluders: &[BoundingBox3D],
    agent: &AgentSpec,
    visibility: &VisibilityConfig,
    rng_kind: RngKind,
    seed: u64,
) -> Result<Vec<Detection>> {
    let views = agent_views(snapshot, occluders, agent, visibility)?;
    Ok(sense_views(snapshot, agent, &views, rng_kind, seed))
}

/// Symmetric positive-definite check used by invariant tests.
pub fn is_spd(m: &Matrix3<f64>) -> bool {
    (m - m.transpose()).amax() <= 1e-12 && m.symmetric_eigenvalues().min() > 1e-12
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{body_from_optical, Dimensions};
    use crate::rng::RngKind;
    use crate::visibility::OcclusionResult;

    fn cam() -> CameraCalibration {
        CameraCalibration {
            fx: 200.0,
            fy: 200.0,
            cx: 160.0,
            cy: 120.0,
            width: 320,
            height: 240,
            frame_id: "cam".into(),
        }
    }

    fn car(id: u64, x: f64, y: f64) -> BoundingBox3D {
        BoundingBox3D {
            center: Vec3::new(x, y, 0.75),
            dimensions: Dimensions::new(4.5, 1.8, 1.5),
            yaw: 0.0,
            object_id: id,
            class_label: ClassLabel::Car,
        }
    }

    fn pose() -> Pose {
        Pose::new(body_from_optical(), Vec3::new(0.0, 0.0, 1.5))
    }

    fn perfect() -> DetectionModel {
        DetectionModel {
            position_noise_sigma: 0.0,
            base_miss_rate: 0.0,
            miss_rate_by_occlusion: MissRates {
                none: 0.0,
                partial: 0.0,
                most: 0.0,
                complete: 1.0,
            },
            clutter_rate: 0.0,
            max_range: 100.0,
        }
    }

    fn run(objects: &[BoundingBox3D], occluders: &[BoundingBox3D], model: &DetectionModel, key: u64) -> Vec<Detection> {
        let vis = VisibilityConfig::default();
        let view = SensorView::compute(objects, occluders, &cam(), &pose(), &vis);
        let mut rng = substream(RngKind::ChaCha8, 42, "test", &[key]);
        sense_sensor(objects, &view.occlusion, &cam(), &pose(), model, ("a", "s"), 0, &mut rng)
    }

    #[test]
    fn noiseless_limit_returns_truth() {
        let objects = [car(1, 20.0, 0.0), car(2, 30.0, 6.0)];
        let dets = run(&objects, &[], &perfect(), 0);
        assert_eq!(dets.len(), 2);
        for (d, o) in dets.iter().zip(&objects) {
            assert!((d.position - o.center).norm() < 1e-9);
            assert!(is_spd(&d.covariance));
            assert!(!d.is_clutter);
        }
    }

    #[test]
    fn completely_occluded_never_detected() {
        let objects = [car(1, 40.0, 0.0)];
        let wall = [car(99, 10.0, 0.0)].map(|mut b| {
            b.dimensions = Dimensions::new(0.5, 20.0, 10.0);
            b
        });
        for k in 0..200 {
            assert!(run(&objects, &wall, &perfect(), k).is_empty());
        }
    }

    #[test]
    fn beyond_max_range_never_detected() {
        let model = DetectionModel {
            max_range: 30.0,
            ..perfect()
        };
        assert!(run(&[car(1, 40.0, 0.0)], &[], &model, 0).is_empty());
    }

    #[test]
    fn monte_carlo_miss_rate_and_noise() {
        let model = DetectionModel {
            clutter_rate: 0.0,
            ..DetectionModel::default()
        };
        let objects = [car(1, 20.0, 0.0)];
        let vis = VisibilityConfig::default();
        let view = SensorView::compute(&objects, &[], &cam(), &pose(), &vis);
        assert_eq!(view.occlusion[0].category, OcclusionCategory::None);
        let trials = 10_000;
        let mut hits = 0usize;
        let mut sq = 0.0;
        for k in 0..trials {
            let mut rng = substream(RngKind::ChaCha8, 7, "mc", &[k]);
            let d = sense_sensor(&objects, &view.occlusion, &cam(), &pose(), &model, ("a", "s"), 0, &mut rng);
            if let Some(d) = d.first() {
                hits += 1;
                sq += (d.position - objects[0].center).norm_squared();
            }
        }
        let miss = 1.0 - hits as f64 / trials as f64;
        assert!((miss - 0.05).abs() <= 0.01, "{miss}");
        let rms_per_axis = (sq / (3.0 * hits as f64)).sqrt();
        assert!((rms_per_axis - 0.5).abs() <= 0.05 * 0.5, "{rms_per_axis}");
    }

    #[test]
    fn clutter_lands_in_view_and_range() {
        let model = DetectionModel {
            clutter_rate: 5.0,
            max_range: 60.0,
            ..perfect()
        };
        let mut total = 0;
        for k in 0..100 {
            for d in run(&[], &[], &model, k) {
                assert!(d.is_clutter);
                let pc = pose().inverse().transform_point(&d.position);
                assert!(pc.z > 0.0);
                assert!((d.position - pose().translation).norm() <= 60.0);
                total += 1;
            }
        }
        assert!(total > 300, "{total}");
    }

    #[test]
    fn same_stream_same_detections() {
        let objects = [car(1, 20.0, 0.0), car(2, 25.0, -4.0)];
        let a = run(&objects, &[], &DetectionModel::default(), 3);
        let b = run(&objects, &[], &DetectionModel::default(), 3);
        assert_eq!(a, b);
    }

    #[test]
    fn miss_probability_uses_category_map() {
        let m = DetectionModel::default();
        assert_eq!(m.miss_probability(OcclusionCategory::None), 0.05);
        assert_eq!(m.miss_probability(OcclusionCategory::Partial), 0.3);
        assert_eq!(m.miss_probability(OcclusionCategory::Complete), 1.0);
        let _ = OcclusionResult::not_in_view();
    }
}
