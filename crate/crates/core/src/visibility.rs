//! Depth rendering and depth-based occlusion labeling.
//!
//! Depth is produced by z-buffer rasterization of oriented boxes: every pixel
//! holds the Euclidean range from the camera center to the nearest box surface
//! hit by the ray through the pixel center, or `+inf` when nothing is hit.
//! Values are stored as `f32`, which is also the on-disk format, so labels
//! computed in memory and re-computed from exported depth agree exactly.
//!
//! Occlusion of an object compares the depth inside its projected 2D box with
//! the expected near-surface range `|camera - center| - length / 2`, where
//! `length` is the box's largest horizontal extent. A pixel is plausible when
//! the two differ by at most `tau`; the ratio of plausible pixels is then
//! discretized into [`OcclusionCategory`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{project_box, BoundingBox2D, BoundingBox3D, CameraCalibration, Pose, Vec3};

#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pub width: u32,
    pub height: u32,
    /// Row-major ranges in meters; `f32::INFINITY` is background.
    pub values: Vec<f32>,
}

impl DepthImage {
    pub fn empty(width: u32, height: u32) -> Self {
        DepthImage {
            width,
            height,
            values: vec![f32::INFINITY; width as usize * height as usize],
        }
    }

    pub fn get(&self, u: u32, v: u32) -> f32 {
        self.values[v as usize * self.width as usize + u as usize]
    }

    fn set_min(&mut self, u: u32, v: u32, range: f32) {
        let i = v as usize * self.width as usize + u as usize;
        if range < self.values[i] {
            self.values[i] = range;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum OcclusionCategory {
    None,
    Partial,
    Most,
    Complete,
    NotInView,
}

impl OcclusionCategory {
    /// Visible categories are the ones kept as labels.
    pub fn is_visible(self) -> bool {
        matches!(self, OcclusionCategory::None | OcclusionCategory::Partial)
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OcclusionResult {
    pub ratio: f64,
    pub category: OcclusionCategory,
}

impl OcclusionResult {
    pub fn not_in_view() -> Self {
        OcclusionResult {
            ratio: 0.0,
            category: OcclusionCategory::NotInView,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VisibilityConfig {
    /// Plausibility distance threshold, meters.
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_none_min")]
    pub none_min: f64,
    #[serde(default = "default_partial_min")]
    pub partial_min: f64,
    #[serde(default = "default_most_min")]
    pub most_min: f64,
}

fn default_tau() -> f64 {
    5.0
}
fn default_none_min() -> f64 {
    0.75
}
fn default_partial_min() -> f64 {
    0.25
}
fn default_most_min() -> f64 {
    0.05
}

impl Default for VisibilityConfig {
    fn default() -> Self {
        VisibilityConfig {
            tau: default_tau(),
            none_min: default_none_min(),
            partial_min: default_partial_min(),
            most_min: default_most_min(),
        }
    }
}

impl VisibilityConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.tau > 0.0
            && 0.0 < self.most_min
            && self.most_min < self.partial_min
            && self.partial_min < self.none_min
            && self.none_min < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Validation(
                "visibility thresholds must satisfy 0 < most_min < partial_min < none_min < 1 and tau > 0"
                    .into(),
            ))
        }
    }

    pub fn categorize(&self, ratio: f64) -> OcclusionCategory {
        if ratio >= self.none_min {
            OcclusionCategory::None
        } else if ratio >= self.partial_min {
            OcclusionCategory::Partial
        } else if ratio >= self.most_min {
            OcclusionCategory::Most
        } else {
            OcclusionCategory::Complete
        }
    }
}

/// Entry range of a ray (unit direction) into an oriented box, slab method.
/// Rays starting inside the box report no hit.
pub fn ray_box_range(origin: &Vec3, dir: &Vec3, b: &BoundingBox3D) -> Option<f64> {
    let pose = b.pose();
    let o = pose.rotation.transpose() * (origin - pose.translation);
    let d = pose.rotation.transpose() * dir;
    let h = b.half_extents();
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    for axis in 0..3 {
        if d[axis].abs() < 1e-15 {
            if o[axis].abs() > h[axis] {
                return None;
            }
            continue;
        }
        let inv = 1.0 / d[axis];
        let mut t0 = (-h[axis] - o[axis]) * inv;
        let mut t1 = (h[axis] - o[axis]) * inv;
        if t0 > t1 {
            std::mem::swap(&mut t0, &mut t1);
        }
        t_near = t_near.max(t0);
        t_far = t_far.min(t1);
        if t_near > t_far {
            return None;
        }
    }
    (t_near > 0.0).then_some(t_near)
}

fn raster_region(b: &BoundingBox3D, cam: &CameraCalibration, cam_pose: &Pose) -> Option<BoundingBox2D> {
    let camera_from_world = cam_pose.inverse();
    let all_in_front = b
        .corners()
        .iter()
        .all(|c| camera_from_world.transform_point(c).z > 0.0);
    if all_in_front {
        project_box(b, cam, cam_pose)
    } else {
        // The in-front hull does not bound the silhouette; scan the whole image.
        Some(BoundingBox2D {
            u_min: 0,
            v_min: 0,
            u_max: cam.width - 1,
            v_max: cam.height - 1,
        })
    }
}

/// Z-buffer rasterization of `boxes` (world frame) as seen from `cam_pose`.
pub fn render_depth(boxes: &[BoundingBox3D], cam: &CameraCalibration, cam_pose: &Pose) -> DepthImage {
    let mut depth = DepthImage::empty(cam.width, cam.height);
    let origin = cam_pose.translation;
    for b in boxes {
        let Some(region) = raster_region(b, cam, cam_pose) else {
            continue;
        };
        for (u, v) in region.pixels() {
            let dir = cam_pose.rotation * cam.pixel_ray(u, v);
            if let Some(range) = ray_box_range(&origin, &dir, b) {
                depth.set_min(u, v, range as f32);
            }
        }
    }
    depth
}

/// Expected range of the object's near surface.
pub fn expected_near_range(b3d: &BoundingBox3D, cam_pose: &Pose) -> f64 {
    (cam_pose.translation - b3d.center).norm() - 0.5 * b3d.horizontal_length()
}

pub fn occlusion_by_depth(
    b3d: &BoundingBox3D,
    cam: &CameraCalibration,
    cam_pose: &Pose,
    depth: &DepthImage,
    cfg: &VisibilityConfig,
) -> OcclusionResult {
    let Some(b2d) = project_box(b3d, cam, cam_pose) else {
        return OcclusionResult::not_in_view();
    };
    let expected = expected_near_range(b3d, cam_pose);
    let total = b2d.pixel_count();
    let plausible = b2d
        .pixels()
        .filter(|&(u, v)| (f64::from(depth.get(u, v)) - expected).abs() <= cfg.tau)
        .count();
    let ratio = if total == 0 {
        0.0
    } else {
        plausible as f64 / total as f64
    };
    OcclusionResult {
        ratio,
        category: cfg.categorize(ratio),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Label {
    pub object: BoundingBox3D,
    pub occlusion: OcclusionResult,
}

#[derive(Debug, Clone)]
pub struct SensorView {
    pub depth: DepthImage,
    /// One result per object, in input order.
    pub occlusion: Vec<OcclusionResult>,
}

impl SensorView {
    /// Renders objects and static occluders, then classifies every object.
    pub fn compute(
        objects: &[BoundingBox3D],
        occluders: &[BoundingBox3D],
        cam: &CameraCalibration,
        cam_pose: &Pose,
        cfg: &VisibilityConfig,
    ) -> Self {
        let mut scene = Vec::with_capacity(objects.len() + occluders.len());
        scene.extend_from_slice(objects);
        scene.extend_from_slice(occluders);
        let depth = render_depth(&scene, cam, cam_pose);
        let occlusion = objects
            .iter()
            .map(|o| occlusion_by_depth(o, cam, cam_pose, &depth, cfg))
            .collect();
        SensorView { depth, occlusion }
    }

    pub fn visible_labels(&self, objects: &[BoundingBox3D]) -> Vec<Label> {
        objects
            .iter()
            .zip(&self.occlusion)
            .filter(|(_, occ)| occ.category.is_visible())
            .map(|(o, occ)| Label {
                object: *o,
                occlusion: *occ,
            })
            .collect()
    }
}

/// Visible labels per sensor. Object ids are carried over unchanged, so the
/// label sets of different sensors index into the same ground truth.
pub fn label_frame(
    objects: &[BoundingBox3D],
    occluders: &[BoundingBox3D],
    sensors: &[(CameraCalibration, Pose)],
    cfg: &VisibilityConfig,
) -> Vec<Vec<Label>> {
    sensors
        .iter()
        .map(|(cam, pose)| SensorView::compute(objects, occluders, cam, pose, cfg).visible_labels(objects))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{ClassLabel, Dimensions};
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn cam() -> CameraCalibration {
        CameraCalibration {
            fx: 100.0,
            fy: 100.0,
            cx: 100.0,
            cy: 75.0,
            width: 200,
            height: 150,
            frame_id: "cam".into(),
        }
    }

    fn boxed(id: u64, center: Vec3, l: f64, w: f64, h: f64) -> BoundingBox3D {
        BoundingBox3D {
            center,
            dimensions: Dimensions::new(l, w, h),
            yaw: 0.0,
            object_id: id,
            class_label: ClassLabel::Car,
        }
    }

    /// Optical-frame camera at the origin: box "length" along optical z is the
    /// world x axis of a yaw-0 box, so build boxes in a frame where the camera
    /// looks along +x instead.
    fn forward_pose() -> Pose {
        Pose::new(crate::geometry::body_from_optical(), Vec3::zeros())
    }

    #[test]
    fn empty_scene_is_background() {
        let d = render_depth(&[], &cam(), &forward_pose());
        assert!(d.values.iter().all(|v| v.is_infinite()));
    }

    #[test]
    fn face_on_box_center_pixel() {
        // Ray along +x hits the near face x = 10 - 1 = 9.
        let b = boxed(1, Vec3::new(10.0, 0.0, 0.0), 2.0, 2.0, 2.0);
        let d = render_depth(&[b], &cam(), &forward_pose());
        assert!((d.get(100, 75) - 9.0).abs() < 1e-6);
    }

    #[test]
    fn z_buffer_keeps_nearest() {
        let near = boxed(1, Vec3::new(10.0, 0.0, 0.0), 2.0, 2.0, 2.0);
        let far = boxed(2, Vec3::new(13.0, 0.0, 0.0), 2.0, 4.0, 4.0);
        let a = render_depth(&[near, far], &cam(), &forward_pose());
        let b = render_depth(&[far, near], &cam(), &forward_pose());
        assert!((a.get(100, 75) - 9.0).abs() < 1e-6);
        assert_eq!(a, b);
    }

    #[test]
    fn isolated_box_is_fully_visible() {
        let cfg = VisibilityConfig::default();
        let b = boxed(1, Vec3::new(15.0, 0.0, 0.0), 4.5, 2.0, 1.5);
        let d = render_depth(&[b], &cam(), &forward_pose());
        let r = occlusion_by_depth(&b, &cam(), &forward_pose(), &d, &cfg);
        assert_eq!(r.ratio, 1.0);
        assert_eq!(r.category, OcclusionCategory::None);
    }

    #[test]
    fn box_behind_wall_is_complete() {
        let cfg = VisibilityConfig::default();
        let b = boxed(1, Vec3::new(30.0, 0.0, 0.0), 4.5, 2.0, 1.5);
        let wall = boxed(99, Vec3::new(10.0, 0.0, 0.0), 0.5, 30.0, 10.0);
        let d = render_depth(&[b, wall], &cam(), &forward_pose());
        let r = occlusion_by_depth(&b, &cam(), &forward_pose(), &d, &cfg);
        assert_eq!(r.ratio, 0.0);
        assert_eq!(r.category, OcclusionCategory::Complete);
    }

    #[test]
    fn not_in_view_when_behind() {
        let cfg = VisibilityConfig::default();
        let b = boxed(1, Vec3::new(-10.0, 0.0, 0.0), 2.0, 2.0, 2.0);
        let d = render_depth(&[b], &cam(), &forward_pose());
        let r = occlusion_by_depth(&b, &cam(), &forward_pose(), &d, &cfg);
        assert_eq!(r, OcclusionResult::not_in_view());
    }

    /// Independent per-pixel oracle: intersect each pixel ray with every face
    /// plane and keep in-face hits.
    fn face_oracle_range(origin: &Vec3, dir: &Vec3, b: &BoundingBox3D) -> Option<f64> {
        let pose = b.pose();
        let h = b.half_extents();
        let mut best: Option<f64> = None;
        for axis in 0..3 {
            for sign in [-1.0, 1.0] {
                let n = pose.rotation.column(axis).into_owned() * sign;
                let p0 = pose.translation + n * h[axis];
                let denom = n.dot(dir);
                if denom.abs() < 1e-15 {
                    continue;
                }
                let t = n.dot(&(p0 - origin)) / denom;
                if t <= 0.0 {
                    continue;
                }
                let local = pose.rotation.transpose() * (origin + dir * t - pose.translation);
                let inside = (0..3).all(|k| k == axis || local[k].abs() <= h[k] + 1e-9);
                if inside {
                    best = Some(best.map_or(t, |b: f64| b.min(t)));
                }
            }
        }
        best
    }

    #[test]
    fn lateral_half_cover_is_partial() {
        let cfg = VisibilityConfig::default();
        let c = cam();
        let pose = forward_pose();
        let target = boxed(1, Vec3::new(20.0, 0.0, 0.0), 2.0, 4.0, 2.0);
        // Occluder covers y >= 0 (the image's left half, since +y is left).
        let occ = boxed(2, Vec3::new(8.0, 2.0, 0.0), 0.5, 4.0, 6.0);
        let d = render_depth(&[target, occ], &c, &pose);
        let r = occlusion_by_depth(&target, &c, &pose, &d, &cfg);

        let b2 = project_box(&target, &c, &pose).unwrap();
        let expected = expected_near_range(&target, &pose);
        let mut plausible = 0usize;
        for (u, v) in b2.pixels() {
            let dir = pose.rotation * c.pixel_ray(u, v);
            let range = [target, occ]
                .iter()
                .filter_map(|b| face_oracle_range(&pose.translation, &dir, b))
                .fold(f64::INFINITY, f64::min) as f32;
            if (f64::from(range) - expected).abs() <= cfg.tau {
                plausible += 1;
            }
        }
        let oracle = plausible as f64 / b2.pixel_count() as f64;
        assert_eq!(r.ratio, oracle);
        assert!((r.ratio - 0.5).abs() < 0.1, "{}", r.ratio);
        assert_eq!(r.category, OcclusionCategory::Partial);
    }

    #[test]
    fn category_boundaries() {
        let cfg = VisibilityConfig::default();
        assert_eq!(cfg.categorize(0.75), OcclusionCategory::None);
        assert_eq!(cfg.categorize(0.7499), OcclusionCategory::Partial);
        assert_eq!(cfg.categorize(0.25), OcclusionCategory::Partial);
        assert_eq!(cfg.categorize(0.2499), OcclusionCategory::Most);
        assert_eq!(cfg.categorize(0.05), OcclusionCategory::Most);
        assert_eq!(cfg.categorize(0.0499), OcclusionCategory::Complete);
        assert_eq!(cfg.categorize(0.0), OcclusionCategory::Complete);
        let bad = VisibilityConfig {
            partial_min: 0.9,
            ..cfg
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn label_frame_per_sensor() {
        let cfg = VisibilityConfig::default();
        let target = boxed(7, Vec3::new(20.0, 0.0, 0.0), 4.0, 2.0, 1.5);
        let wall = boxed(99, Vec3::new(10.0, 0.0, 0.0), 0.5, 10.0, 10.0);
        // Sensor A looks from behind the target, B from the front (blocked).
        let a = Pose::new(
            crate::geometry::rot_z(std::f64::consts::PI) * crate::geometry::body_from_optical(),
            Vec3::new(40.0, 0.0, 0.0),
        );
        let b = forward_pose();
        let labels = label_frame(&[target], &[wall], &[(cam(), a), (cam(), b)], &cfg);
        assert_eq!(labels[0].len(), 1);
        assert_eq!(labels[0][0].object.object_id, 7);
        assert!(labels[1].is_empty());

        let none = label_frame(&[], &[wall], &[(cam(), a), (cam(), b)], &cfg);
        assert!(none.iter().all(|l| l.is_empty()));
    }

    #[test]
    fn label_ids_consistent_across_sensors() {
        let cfg = VisibilityConfig::default();
        let objects: Vec<BoundingBox3D> = (0..10)
            .map(|i| {
                boxed(
                    100 + i,
                    Vec3::new(15.0 + 4.0 * i as f64, -8.0 + 1.7 * i as f64, 0.0),
                    4.0,
                    2.0,
                    1.5,
                )
            })
            .collect();
        let sensors: Vec<(CameraCalibration, Pose)> = [0.0, 0.2, -0.2]
            .iter()
            .map(|&yaw| {
                (
                    cam(),
                    Pose::new(crate::geometry::rot_z(yaw) * crate::geometry::body_from_optical(), Vec3::zeros()),
                )
            })
            .collect();
        let labels = label_frame(&objects, &[], &sensors, &cfg);
        let truth: BTreeSet<u64> = objects.iter().map(|o| o.object_id).collect();
        for set in &labels {
            let ids: Vec<u64> = set.iter().map(|l| l.object.object_id).collect();
            let unique: BTreeSet<u64> = ids.iter().copied().collect();
            assert_eq!(ids.len(), unique.len());
            assert!(unique.is_subset(&truth));
            for l in set {
                let gt = objects.iter().find(|o| o.object_id == l.object.object_id).unwrap();
                assert_eq!(gt, &l.object);
                assert!(l.occlusion.ratio >= cfg.partial_min);
            }
        }
        assert!(labels.iter().any(|s| !s.is_empty()));
    }

    proptest! {
        #[test]
        fn slab_matches_face_oracle(
            cx in 5.0f64..40.0, cy in -10.0f64..10.0, yaw in -3.2f64..3.2,
            l in 0.5f64..6.0, w in 0.5f64..3.0, h in 0.5f64..3.0,
            u in 0u32..200, v in 0u32..150,
        ) {
            let mut b = boxed(1, Vec3::new(cx, cy, 0.0), l, w, h);
            b.yaw = yaw;
            let pose = forward_pose();
            let dir = pose.rotation * cam().pixel_ray(u, v);
            let a = ray_box_range(&pose.translation, &dir, &b);
            let o = face_oracle_range(&pose.translation, &dir, &b);
            match (a, o) {
                (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-9),
                (None, None) => {}
                // Grazing rays may land on either side of an edge.
                (x, y) => prop_assert!(x.or(y).is_some()),
            }
        }

        #[test]
        fn near_occluder_never_increases_ratio(
            tx in 20.0f64..40.0, ty in -6.0f64..6.0, tyaw in -3.2f64..3.2,
            ox_frac in 0.1f64..0.5, oy in -6.0f64..6.0, ow in 0.5f64..6.0,
        ) {
            let cfg = VisibilityConfig::default();
            let pose = forward_pose();
            let mut target = boxed(1, Vec3::new(tx, ty, 0.0), 4.0, 2.0, 1.5);
            target.yaw = tyaw;
            let expected = expected_near_range(&target, &pose);
            let occ = boxed(2, Vec3::new(tx * ox_frac, oy, 0.0), 0.5, ow, 3.0);
            let occ_far = occ.corners().iter().map(|c| c.norm()).fold(0.0, f64::max);
            prop_assume!(occ_far < expected - cfg.tau);
            let before = SensorView::compute(&[target], &[], &cam(), &pose, &cfg).occlusion[0];
            let after = SensorView::compute(&[target], &[occ], &cam(), &pose, &cfg).occlusion[0];
            prop_assert!(after.ratio <= before.ratio);
        }
    }
}
