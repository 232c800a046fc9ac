//! Scenario documents and kinematic world propagation.
//!
//! Objects move on the flat ground plane along their initial heading. The
//! longitudinal speed is the initial speed plus every active acceleration step
//! (overlapping steps add up); lateral motion is a linear ramp toward the
//! target of the most recent lane change. Positions are closed-form in time,
//! so any tick can be evaluated independently and bit-reproducibly.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    body_from_optical, BoundingBox3D, CameraCalibration, ClassLabel, Dimensions, FrameTree, Pose,
    Vec3, WORLD_FRAME,
};
use crate::rng::RngKind;
use crate::sensing::DetectionModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub name: String,
    /// Seconds.
    pub duration: f64,
    /// Hz.
    #[serde(default = "default_tick_rate")]
    pub tick_rate: f64,
    pub seed: u64,
    #[serde(default)]
    pub rng: RngKind,
    pub objects: Vec<ObjectSpec>,
    pub agents: Vec<AgentSpec>,
    /// Static scene geometry (buildings, walls) that occludes but is never a target.
    #[serde(default)]
    pub occluders: Vec<OccluderSpec>,
}

fn default_tick_rate() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub object_id: u64,
    pub class_label: ClassLabel,
    /// Ground-plane position (x, y) in meters.
    pub position: [f64; 2],
    pub heading: f64,
    pub speed: f64,
    pub dimensions: Dimensions,
    #[serde(default)]
    pub events: Vec<ManeuverEvent>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManeuverEvent {
    pub time: f64,
    pub kind: ManeuverKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ManeuverKind {
    /// Shift left (positive) or right by `lateral_offset` meters over `duration` seconds.
    LaneChange { lateral_offset: f64, duration: f64 },
    /// Add `delta` m/s² to the longitudinal acceleration for `hold` seconds.
    AccelStep { delta: f64, hold: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    EgoVehicle,
    Infrastructure,
}

/// Position and orientation of a mount relative to its parent frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MountSpec {
    #[serde(default)]
    pub position: [f64; 3],
    #[serde(default)]
    pub yaw: f64,
    /// Positive pitch tilts the view downward.
    #[serde(default)]
    pub pitch: f64,
}

impl Default for MountSpec {
    fn default() -> Self {
        MountSpec {
            position: [0.0; 3],
            yaw: 0.0,
            pitch: 0.0,
        }
    }
}

impl MountSpec {
    pub fn pose(&self) -> Pose {
        let [x, y, z] = self.position;
        Pose::from_yaw_pitch(Vec3::new(x, y, z), self.yaw, self.pitch)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySpec {
    pub position: [f64; 2],
    pub heading: f64,
    pub speed: f64,
    #[serde(default)]
    pub events: Vec<ManeuverEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorSpec {
    pub sensor_id: String,
    /// Relative to the agent mount; the camera looks along the mount's +x.
    #[serde(default)]
    pub mount: MountSpec,
    pub calibration: CameraCalibration,
    #[serde(default)]
    pub detection: DetectionModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub agent_id: String,
    pub kind: AgentKind,
    /// Infrastructure: pose in the world. Ego: pose on the vehicle body.
    #[serde(default)]
    pub mount: MountSpec,
    /// Ego vehicle motion; required for the ego, absent for infrastructure.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<TrajectorySpec>,
    pub sensors: Vec<SensorSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OccluderSpec {
    pub position: [f64; 2],
    pub dimensions: Dimensions,
    #[serde(default)]
    pub yaw: f64,
}

/// World state at one tick.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub tick: u64,
    pub time: f64,
    /// Targets in the world frame, in scenario order.
    pub objects: Vec<BoundingBox3D>,
    /// Ego vehicle body pose in the world.
    pub ego_pose: Pose,
    /// world <- ego vehicle <- agents <- sensors (optical frames).
    pub frames: FrameTree,
}

impl Snapshot {
    pub fn ego_position(&self) -> Vec3 {
        self.ego_pose.translation
    }

    /// World pose of a sensor's optical frame.
    pub fn sensor_pose(&self, sensor_id: &str) -> Result<Pose> {
        self.frames.transform_to(sensor_id, WORLD_FRAME)
    }
}

pub const EGO_VEHICLE_FRAME: &str = "ego_vehicle";

/// Flat-ground state of a moving body: position (x, y) and current speed.
fn kinematics(position: [f64; 2], heading: f64, speed: f64, events: &[ManeuverEvent], t: f64) -> (f64, f64, f64) {
    let mut longitudinal = speed * t;
    let mut current_speed = speed;
    let mut lane_changes: Vec<(f64, f64, f64)> = Vec::new();
    for e in events {
        match e.kind {
            ManeuverKind::AccelStep { delta, hold } => {
                let active = (t - e.time).clamp(0.0, hold);
                current_speed += delta * active;
                longitudinal += if t <= e.time {
                    0.0
                } else if t <= e.time + hold {
                    0.5 * delta * (t - e.time).powi(2)
                } else {
                    0.5 * delta * hold * hold + delta * hold * (t - e.time - hold)
                };
            }
            ManeuverKind::LaneChange {
                lateral_offset,
                duration,
            } => lane_changes.push((e.time, lateral_offset, duration)),
        }
    }
    // Stable sort keeps document order for simultaneous lane changes.
    lane_changes.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut ramp = (0.0_f64, 0.0_f64, 0.0_f64, 1.0_f64); // from, to, start, duration
    let ramp_at = |(from, to, start, dur): (f64, f64, f64, f64), time: f64| {
        if time >= start + dur {
            to
        } else if time <= start {
            from
        } else {
            from + (to - from) * (time - start) / dur
        }
    };
    for &(start, offset, dur) in lane_changes.iter().take_while(|lc| lc.0 <= t) {
        let from = ramp_at(ramp, start);
        ramp = (from, from + offset, start, dur);
    }
    let lateral = ramp_at(ramp, t);
    let (s, c) = heading.sin_cos();
    let x = position[0] + longitudinal * c - lateral * s;
    let y = position[1] + longitudinal * s + lateral * c;
    (x, y, current_speed)
}

impl ObjectSpec {
    pub fn state_at(&self, t: f64) -> (f64, f64, f64) {
        kinematics(self.position, self.heading, self.speed, &self.events, t)
    }

    pub fn box_at(&self, t: f64) -> BoundingBox3D {
        let (x, y, _) = self.state_at(t);
        BoundingBox3D {
            center: Vec3::new(x, y, 0.5 * self.dimensions.height),
            dimensions: self.dimensions,
            yaw: self.heading,
            object_id: self.object_id,
            class_label: self.class_label,
        }
    }
}

impl TrajectorySpec {
    pub fn pose_at(&self, t: f64) -> Pose {
        let (x, y, _) = kinematics(self.position, self.heading, self.speed, &self.events, t);
        Pose::from_yaw_pitch(Vec3::new(x, y, 0.0), self.heading, 0.0)
    }
}

impl OccluderSpec {
    pub fn to_box(&self, index: usize) -> BoundingBox3D {
        BoundingBox3D {
            center: Vec3::new(self.position[0], self.position[1], 0.5 * self.dimensions.height),
            dimensions: self.dimensions,
            yaw: self.yaw,
            object_id: u64::MAX - index as u64,
            class_label: ClassLabel::Car,
        }
    }
}

impl ScenarioConfig {
    pub fn max_tick(&self) -> u64 {
        (self.duration * self.tick_rate + 1e-9).floor() as u64
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.tick_rate
    }

    pub fn time_of(&self, tick: u64) -> f64 {
        tick as f64 / self.tick_rate
    }

    pub fn ego(&self) -> &AgentSpec {
        self.agents
            .iter()
            .find(|a| a.kind == AgentKind::EgoVehicle)
            .expect("validated scenario has an ego vehicle")
    }

    pub fn infrastructure(&self) -> impl Iterator<Item = &AgentSpec> {
        self.agents.iter().filter(|a| a.kind == AgentKind::Infrastructure)
    }

    pub fn occluder_boxes(&self) -> Vec<BoundingBox3D> {
        self.occluders.iter().enumerate().map(|(i, o)| o.to_box(i)).collect()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        parse_scenario(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Validation(m));
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return fail("duration must be > 0".into());
        }
        if !(self.tick_rate > 0.0 && self.tick_rate.is_finite()) {
            return fail("tick_rate must be > 0".into());
        }
        let check_events = |owner: &str, events: &[ManeuverEvent]| -> Result<()> {
            for e in events {
                if !(0.0..=self.duration).contains(&e.time) {
                    return Err(Error::Validation(format!(
                        "{owner}: event time {} outside [0, duration]",
                        e.time
                    )));
                }
                let positive = match e.kind {
                    ManeuverKind::LaneChange { duration, .. } => duration > 0.0,
                    ManeuverKind::AccelStep { hold, .. } => hold > 0.0,
                };
                if !positive {
                    return Err(Error::Validation(format!("{owner}: event durations must be > 0")));
                }
            }
            Ok(())
        };
        let mut ids = BTreeSet::new();
        for o in &self.objects {
            if !ids.insert(o.object_id) {
                return fail("duplicate object_id".into());
            }
            if !o.dimensions.is_valid() {
                return fail(format!("object {}: dimensions must be positive", o.object_id));
            }
            check_events(&format!("object {}", o.object_id), &o.events)?;
        }
        for (i, o) in self.occluders.iter().enumerate() {
            if !o.dimensions.is_valid() {
                return fail(format!("occluder {i}: dimensions must be positive"));
            }
        }
        let egos = self.agents.iter().filter(|a| a.kind == AgentKind::EgoVehicle).count();
        if egos != 1 {
            return fail(format!("exactly one ego_vehicle agent required, found {egos}"));
        }
        let mut frame_ids: BTreeSet<&str> = [WORLD_FRAME, EGO_VEHICLE_FRAME].into_iter().collect();
        for a in &self.agents {
            if !frame_ids.insert(a.agent_id.as_str()) {
                return fail(format!("duplicate agent or frame id `{}`", a.agent_id));
            }
            match (a.kind, &a.trajectory) {
                (AgentKind::EgoVehicle, None) => {
                    return fail(format!("ego agent `{}` needs a trajectory", a.agent_id))
                }
                (AgentKind::Infrastructure, Some(_)) => {
                    return fail(format!(
                        "infrastructure agent `{}` must be static (no trajectory)",
                        a.agent_id
                    ))
                }
                (_, Some(t)) => check_events(&a.agent_id, &t.events)?,
                _ => {}
            }
            for s in &a.sensors {
                if !frame_ids.insert(s.sensor_id.as_str()) {
                    return fail(format!("duplicate sensor or frame id `{}`", s.sensor_id));
                }
                s.calibration.validate()?;
                s.detection.validate()?;
            }
        }
        Ok(())
    }
}

/// Parses and validates a scenario document (JSON, strict keys).
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig> {
    let mut cfg: ScenarioConfig = serde_json::from_str(text)?;
    for a in &mut cfg.agents {
        for s in &mut a.sensors {
            s.calibration.frame_id = s.sensor_id.clone();
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Deterministic world state at `tick`.
pub fn world_state_at(cfg: &ScenarioConfig, tick: u64) -> Result<Snapshot> {
    let max = cfg.max_tick();
    if tick > max {
        return Err(Error::TickOutOfRange { tick, max });
    }
    let t = cfg.time_of(tick);
    let objects = cfg.objects.iter().map(|o| o.box_at(t)).collect();
    let ego = cfg.ego();
    let ego_pose = ego
        .trajectory
        .as_ref()
        .expect("validated ego has a trajectory")
        .pose_at(t);

    let mut frames = FrameTree::new();
    frames.add(EGO_VEHICLE_FRAME, WORLD_FRAME, ego_pose)?;
    for a in &cfg.agents {
        let parent = match a.kind {
            AgentKind::EgoVehicle => EGO_VEHICLE_FRAME,
            AgentKind::Infrastructure => WORLD_FRAME,
        };
        frames.add(&a.agent_id, parent, a.mount.pose())?;
        for s in &a.sensors {
            let optical = s.mount.pose().compose(&Pose::new(body_from_optical(), Vec3::zeros()));
            frames.add(&s.sensor_id, &a.agent_id, optical)?;
        }
    }
    Ok(Snapshot {
        tick,
        time: t,
        objects,
        ego_pose,
        frames,
    })
}
