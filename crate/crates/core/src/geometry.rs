//! Rigid poses, reference-frame trees and pinhole projection.
//!
//! Conventions:
//! - World and vehicle bodies are right-handed with +x forward, +y left, +z up.
//! - Camera (optical) frames are +z forward, +x right, +y down.
//! - A [`Pose`] maps points expressed in a child frame into its parent frame:
//!   `p_parent = R * p_child + t`.
//! - Pixel `(u, v)` has its center at integer coordinates `(u, v)`.

use std::collections::{BTreeMap, HashMap};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Tolerance on orthonormality drift before a rotation is re-orthonormalized.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

pub const WORLD_FRAME: &str = "world";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl Default for Pose {
    fn default() -> Self {
        Pose::identity()
    }
}

pub fn rot_x(angle: f64) -> Mat3 {
    let (s, c) = angle.sin_cos();
    Mat3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn rot_y(angle: f64) -> Mat3 {
    let (s, c) = angle.sin_cos();
    Mat3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn rot_z(angle: f64) -> Mat3 {
    let (s, c) = angle.sin_cos();
    Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Rotation taking optical-frame vectors into a body frame looking along its +x.
pub fn body_from_optical() -> Mat3 {
    Mat3::new(0.0, 0.0, 1.0, -1.0, 0.0, 0.0, 0.0, -1.0, 0.0)
}

fn orthonormality_error(r: &Mat3) -> f64 {
    let e = r.transpose() * r - Mat3::identity();
    let det = (r.determinant() - 1.0).abs();
    e.amax().max(det)
}

/// Gram-Schmidt on the columns; the third column is rebuilt as a cross product.
pub fn orthonormalize(r: &Mat3) -> Mat3 {
    let c0 = r.column(0).normalize();
    let c1 = r.column(1) - c0 * c0.dot(&r.column(1));
    let c1 = c1.normalize();
    let c2 = c0.cross(&c1);
    Mat3::from_columns(&[c0, c1, c2])
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(rotation: Mat3, translation: Vec3) -> Self {
        let rotation = if orthonormality_error(&rotation) > ROTATION_TOLERANCE {
            orthonormalize(&rotation)
        } else {
            rotation
        };
        Pose {
            rotation,
            translation,
        }
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Pose::new(Mat3::identity(), translation)
    }

    /// Rotation about +z by `yaw`, then about the rotated +y by `pitch` (positive pitch looks down).
    pub fn from_yaw_pitch(translation: Vec3, yaw: f64, pitch: f64) -> Self {
        Pose::new(rot_z(yaw) * rot_y(pitch), translation)
    }

    pub fn is_valid(&self) -> bool {
        orthonormality_error(&self.rotation) <= ROTATION_TOLERANCE
            && self.translation.iter().all(|v| v.is_finite())
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose::new(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose::new(rt, -(rt * self.translation))
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn transform_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    pub fn approx_eq(&self, other: &Pose, tol: f64) -> bool {
        (self.rotation - other.rotation).amax() <= tol
            && (self.translation - other.translation).amax() <= tol
    }
}

pub fn compose(a: &Pose, b: &Pose) -> Pose {
    a.compose(b)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceFrame {
    pub id: String,
    pub parent: Option<String>,
    pub pose_in_parent: Pose,
}

/// A forest of reference frames. Frames must be inserted after their parent,
/// which rules out cycles.
#[derive(Debug, Clone)]
pub struct FrameTree {
    frames: BTreeMap<String, ReferenceFrame>,
}

impl Default for FrameTree {
    fn default() -> Self {
        FrameTree::new()
    }
}

impl FrameTree {
    /// A tree holding only the world frame.
    pub fn new() -> Self {
        let mut frames = BTreeMap::new();
        frames.insert(
            WORLD_FRAME.to_string(),
            ReferenceFrame {
                id: WORLD_FRAME.to_string(),
                parent: None,
                pose_in_parent: Pose::identity(),
            },
        );
        FrameTree { frames }
    }

    pub fn insert(&mut self, frame: ReferenceFrame) -> Result<()> {
        if self.frames.contains_key(&frame.id) {
            return Err(Error::InvalidFrameTree(format!(
                "duplicate frame id `{}`",
                frame.id
            )));
        }
        if let Some(parent) = &frame.parent {
            if !self.frames.contains_key(parent) {
                return Err(Error::UnknownFrame(parent.clone()));
            }
        }
        self.frames.insert(frame.id.clone(), frame);
        Ok(())
    }

    pub fn add(&mut self, id: &str, parent: &str, pose_in_parent: Pose) -> Result<()> {
        self.insert(ReferenceFrame {
            id: id.to_string(),
            parent: Some(parent.to_string()),
            pose_in_parent,
        })
    }

    pub fn get(&self, id: &str) -> Option<&ReferenceFrame> {
        self.frames.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.frames.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Ancestors of `id` (itself first) with the pose mapping `id` into each.
    fn chain(&self, id: &str) -> Result<Vec<(&str, Pose)>> {
        let mut out = Vec::new();
        let mut current = self
            .frames
            .get(id)
            .ok_or_else(|| Error::UnknownFrame(id.to_string()))?;
        let mut acc = Pose::identity();
        loop {
            out.push((current.id.as_str(), acc));
            match &current.parent {
                None => break,
                Some(p) => {
                    acc = current.pose_in_parent.compose(&acc);
                    current = self
                        .frames
                        .get(p)
                        .ok_or_else(|| Error::UnknownFrame(p.clone()))?;
                }
            }
        }
        Ok(out)
    }

    /// Rigid transform mapping points expressed in `from` into `to`.
    pub fn transform_to(&self, from: &str, to: &str) -> Result<Pose> {
        let from_chain = self.chain(from)?;
        let to_chain = self.chain(to)?;
        let lookup: HashMap<&str, &Pose> = from_chain.iter().map(|(id, p)| (*id, p)).collect();
        for (id, anc_from_to) in &to_chain {
            if let Some(anc_from_from) = lookup.get(id) {
                return Ok(anc_from_to.inverse().compose(anc_from_from));
            }
        }
        Err(Error::DisconnectedFrames {
            from: from.to_string(),
            to: to.to_string(),
        })
    }
}

pub fn transform_to(tree: &FrameTree, from: &str, to: &str) -> Result<Pose> {
    tree.transform_to(from, to)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassLabel {
    Car,
    Pedestrian,
    Truck,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 3] = [ClassLabel::Car, ClassLabel::Pedestrian, ClassLabel::Truck];

    pub fn as_str(self) -> &'static str {
        match self {
            ClassLabel::Car => "car",
            ClassLabel::Pedestrian => "pedestrian",
            ClassLabel::Truck => "truck",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dimensions {
    pub length: f64,
    pub width: f64,
    pub height: f64,
}

impl Dimensions {
    pub fn new(length: f64, width: f64, height: f64) -> Self {
        Dimensions {
            length,
            width,
            height,
        }
    }

    pub fn is_valid(&self) -> bool {
        [self.length, self.width, self.height]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0)
    }
}

/// Oriented box; `center` is the volumetric center, `yaw` rotates about +z.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox3D {
    pub center: Vec3,
    pub dimensions: Dimensions,
    pub yaw: f64,
    pub object_id: u64,
    pub class_label: ClassLabel,
}

impl BoundingBox3D {
    /// Pose mapping box-local coordinates into the frame the box is expressed in.
    pub fn pose(&self) -> Pose {
        Pose::new(rot_z(self.yaw), self.center)
    }

    pub fn half_extents(&self) -> Vec3 {
        Vec3::new(
            0.5 * self.dimensions.length,
            0.5 * self.dimensions.width,
            0.5 * self.dimensions.height,
        )
    }

    pub fn corners(&self) -> [Vec3; 8] {
        let h = self.half_extents();
        let pose = self.pose();
        let mut out = [Vec3::zeros(); 8];
        for (i, c) in out.iter_mut().enumerate() {
            let sx = if i & 1 == 0 { -1.0 } else { 1.0 };
            let sy = if i & 2 == 0 { -1.0 } else { 1.0 };
            let sz = if i & 4 == 0 { -1.0 } else { 1.0 };
            *c = pose.transform_point(&Vec3::new(sx * h.x, sy * h.y, sz * h.z));
        }
        out
    }

    /// Largest horizontal extent (the box "length" used by depth plausibility).
    pub fn horizontal_length(&self) -> f64 {
        self.dimensions.length.max(self.dimensions.width)
    }
}

/// Inclusive pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox2D {
    pub u_min: u32,
    pub v_min: u32,
    pub u_max: u32,
    pub v_max: u32,
}

impl BoundingBox2D {
    pub fn width(&self) -> u32 {
        self.u_max - self.u_min + 1
    }

    pub fn height(&self) -> u32 {
        self.v_max - self.v_min + 1
    }

    pub fn pixel_count(&self) -> usize {
        self.width() as usize * self.height() as usize
    }

    pub fn contains(&self, u: u32, v: u32) -> bool {
        u >= self.u_min && u <= self.u_max && v >= self.v_min && v <= self.v_max
    }

    pub fn pixels(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (self.v_min..=self.v_max).flat_map(move |v| (self.u_min..=self.u_max).map(move |u| (u, v)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraCalibration {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub frame_id: String,
}

impl CameraCalibration {
    pub fn intrinsics(&self) -> Mat3 {
        Mat3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.width > 0
            && self.height > 0
            && self.cx > 0.0
            && self.cx < f64::from(self.width)
            && self.cy > 0.0
            && self.cy < f64::from(self.height);
        if ok {
            Ok(())
        } else {
            Err(Error::Validation(format!(
                "camera calibration `{}` violates fx, fy > 0 and 0 < c < size",
                self.frame_id
            )))
        }
    }

    /// Unit ray direction (optical frame) through the center of pixel `(u, v)`.
    pub fn pixel_ray(&self, u: u32, v: u32) -> Vec3 {
        Vec3::new(
            (f64::from(u) - self.cx) / self.fx,
            (f64::from(v) - self.cy) / self.fy,
            1.0,
        )
        .normalize()
    }

    /// Pinhole projection of an optical-frame point; `None` behind the image plane.
    pub fn project_point(&self, p: &Vec3) -> Option<(f64, f64)> {
        if p.z <= 0.0 {
            return None;
        }
        Some((self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy))
    }
}

/// Continuous pixel hull `(u_min, v_min, u_max, v_max)` of the in-front corners.
pub fn project_hull(
    b3d: &BoundingBox3D,
    cam: &CameraCalibration,
    cam_pose: &Pose,
) -> Option<[f64; 4]> {
    let camera_from_world = cam_pose.inverse();
    let mut hull: Option<[f64; 4]> = None;
    for corner in b3d.corners() {
        let pc = camera_from_world.transform_point(&corner);
        if let Some((u, v)) = cam.project_point(&pc) {
            hull = Some(match hull {
                None => [u, v, u, v],
                Some(h) => [h[0].min(u), h[1].min(v), h[2].max(u), h[3].max(v)],
            });
        }
    }
    hull
}

/// Axis-aligned pixel hull of the projected box, clamped to the image.
///
/// Corners behind the image plane are dropped before the hull is taken, so a
/// box straddling the plane is approximated by its in-front part.
pub fn project_box(
    b3d: &BoundingBox3D,
    cam: &CameraCalibration,
    cam_pose: &Pose,
) -> Option<BoundingBox2D> {
    let [hu0, hv0, hu1, hv1] = project_hull(b3d, cam, cam_pose)?;
    let max_u = f64::from(cam.width - 1);
    let max_v = f64::from(cam.height - 1);
    let u0 = hu0.ceil().max(0.0);
    let v0 = hv0.ceil().max(0.0);
    let u1 = hu1.floor().min(max_u);
    let v1 = hv1.floor().min(max_v);
    if !(u0 <= u1 && v0 <= v1) {
        return None;
    }
    Some(BoundingBox2D {
        u_min: u0 as u32,
        v_min: v0 as u32,
        u_max: u1 as u32,
        v_max: v1 as u32,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn cam_800x600() -> CameraCalibration {
        CameraCalibration {
            fx: 500.0,
            fy: 500.0,
            cx: 400.0,
            cy: 300.0,
            width: 800,
            height: 600,
            frame_id: "cam".into(),
        }
    }

    fn cube_at(center: Vec3, side: f64) -> BoundingBox3D {
        BoundingBox3D {
            center,
            dimensions: Dimensions::new(side, side, side),
            yaw: 0.0,
            object_id: 1,
            class_label: ClassLabel::Car,
        }
    }

    #[test]
    fn compose_identity_and_inverse() {
        let p = Pose::from_yaw_pitch(Vec3::new(1.0, -2.0, 3.0), 0.3, -0.2);
        assert!(compose(&Pose::identity(), &p).approx_eq(&p, 1e-12));
        assert!(compose(&p, &p.inverse()).approx_eq(&Pose::identity(), 1e-9));
    }

    #[test]
    fn compose_quarter_turns() {
        // Hand product: R = Rz(90)Rz(90) = Rz(180); t = Rz(90)(1,0,0) + (1,0,0) = (1,1,0).
        let a = Pose::new(rot_z(FRAC_PI_2), Vec3::new(1.0, 0.0, 0.0));
        let c = compose(&a, &a);
        let expected = Pose::new(
            Mat3::new(-1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 1.0),
            Vec3::new(1.0, 1.0, 0.0),
        );
        assert!(c.approx_eq(&expected, 1e-12), "{c:?}");
    }

    #[test]
    fn drifted_rotation_is_reorthonormalized() {
        let mut r = rot_z(0.4);
        r[(0, 0)] += 1e-6;
        let p = Pose::new(r, Vec3::zeros());
        assert!(p.is_valid());
    }

    fn three_deep() -> (FrameTree, Pose, Pose) {
        let agent = Pose::from_yaw_pitch(Vec3::new(10.0, 5.0, 0.0), 0.7, 0.0);
        let sensor = Pose::from_yaw_pitch(Vec3::new(1.5, 0.0, 1.8), -0.2, 0.1);
        let mut t = FrameTree::new();
        t.add("agent", WORLD_FRAME, agent).unwrap();
        t.add("sensor", "agent", sensor).unwrap();
        (t, agent, sensor)
    }

    #[test]
    fn transform_to_identity_roundtrip_and_chain() {
        let (t, agent, sensor) = three_deep();
        assert!(t
            .transform_to(WORLD_FRAME, WORLD_FRAME)
            .unwrap()
            .approx_eq(&Pose::identity(), 1e-12));
        let ab = t.transform_to("sensor", "agent").unwrap();
        let ba = t.transform_to("agent", "sensor").unwrap();
        assert!(ab.compose(&ba).approx_eq(&Pose::identity(), 1e-9));

        // Explicit homogeneous matrix product oracle.
        let hom = |p: &Pose| {
            let mut m = nalgebra::Matrix4::<f64>::identity();
            m.fixed_view_mut::<3, 3>(0, 0).copy_from(&p.rotation);
            m.fixed_view_mut::<3, 1>(0, 3).copy_from(&p.translation);
            m
        };
        let expected = hom(&agent) * hom(&sensor);
        let got = hom(&t.transform_to("sensor", WORLD_FRAME).unwrap());
        assert!((expected - got).amax() < 1e-9);
    }

    #[test]
    fn transform_to_errors() {
        let (mut t, _, _) = three_deep();
        assert!(matches!(
            t.transform_to("nope", WORLD_FRAME),
            Err(Error::UnknownFrame(_))
        ));
        t.insert(ReferenceFrame {
            id: "island".into(),
            parent: None,
            pose_in_parent: Pose::identity(),
        })
        .unwrap();
        assert!(matches!(
            t.transform_to("island", "sensor"),
            Err(Error::DisconnectedFrames { .. })
        ));
        assert!(t.add("orphan", "missing", Pose::identity()).is_err());
        assert!(t.add("agent", WORLD_FRAME, Pose::identity()).is_err());
    }

    #[test]
    fn on_axis_cube_projection() {
        let cam = cam_800x600();
        let b = cube_at(Vec3::new(0.0, 0.0, 10.0), 1.0);
        let b2 = project_box(&b, &cam, &Pose::identity()).unwrap();
        // Near face at z = 9.5 bounds the hull: half-width 500 * 0.5 / 9.5 px.
        let half: f64 = 500.0 * 0.5 / 9.5;
        assert_eq!(b2.u_min, (400.0 - half).ceil() as u32);
        assert_eq!(b2.u_max, (400.0 + half).floor() as u32);
        assert_eq!(b2.v_min, (300.0 - half).ceil() as u32);
        assert_eq!(b2.v_max, (300.0 + half).floor() as u32);
        assert_eq!((b2.u_min + b2.u_max) / 2, 400);
        assert_eq!((b2.v_min + b2.v_max) / 2, 300);
        // Within the depth-extent correction of the thin-box estimate fx / distance = 50 px.
        let hull = project_hull(&b, &cam, &Pose::identity()).unwrap();
        let w = hull[2] - hull[0];
        assert!((w - 50.0).abs() < 3.0, "{w}");
    }

    #[test]
    fn box_behind_camera_is_absent() {
        let cam = cam_800x600();
        let b = cube_at(Vec3::new(0.0, 0.0, -10.0), 1.0);
        assert!(project_box(&b, &cam, &Pose::identity()).is_none());
    }

    #[test]
    fn box_straddling_edge_is_clamped() {
        let cam = cam_800x600();
        // u = 400 + 500 * 7.5 / z for the hull; far right edge lies beyond 800.
        let b = cube_at(Vec3::new(7.5, 0.0, 10.0), 2.0);
        let b2 = project_box(&b, &cam, &Pose::identity()).unwrap();
        let mut u_min = f64::INFINITY;
        for c in b.corners() {
            u_min = u_min.min(500.0 * c.x / c.z + 400.0);
        }
        assert_eq!(b2.u_min, u_min.ceil() as u32);
        assert_eq!(b2.u_max, 799);
        assert!(b2.v_max < 600);
    }

    #[test]
    fn body_from_optical_axes() {
        let r = body_from_optical();
        assert!((r * Vec3::z() - Vec3::x()).norm() < 1e-15);
        assert!((r * Vec3::x() + Vec3::y()).norm() < 1e-15);
        assert!((r * Vec3::y() + Vec3::z()).norm() < 1e-15);
        assert!(Pose::new(r, Vec3::zeros()).is_valid());
    }

    fn arb_pose() -> impl Strategy<Value = Pose> {
        (
            -3.2f64..3.2,
            -1.5f64..1.5,
            -3.2f64..3.2,
            prop::array::uniform3(-50.0f64..50.0),
        )
            .prop_map(|(yaw, pitch, roll, t)| {
                Pose::new(
                    rot_z(yaw) * rot_y(pitch) * rot_x(roll),
                    Vec3::new(t[0], t[1], t[2]),
                )
            })
    }

    proptest! {
        #[test]
        fn frame_chain_matches_pairwise_composition(
            poses in prop::collection::vec(arb_pose(), 1..=6),
            split in 0usize..6,
        ) {
            // Linear chain world <- f0 <- f1 ... ; transform between two nodes via
            // the tree must equal the explicit product along the chain.
            let mut t = FrameTree::new();
            let mut parent = WORLD_FRAME.to_string();
            for (i, p) in poses.iter().enumerate() {
                let id = format!("f{i}");
                t.add(&id, &parent, *p).unwrap();
                parent = id;
            }
            let n = poses.len();
            let lo = split.min(n - 1);
            let mut expected = Pose::identity();
            for p in &poses[lo + 1..n] {
                expected = expected.compose(p);
            }
            let got = t.transform_to(&format!("f{}", n - 1), &format!("f{lo}")).unwrap();
            prop_assert!(got.approx_eq(&expected, 1e-9));
            prop_assert!(got.is_valid());
            let back = t.transform_to(&format!("f{lo}"), &format!("f{}", n - 1)).unwrap();
            prop_assert!(back.compose(&got).approx_eq(&Pose::identity(), 1e-9));
        }

        #[test]
        fn branching_tree_via_common_ancestor(
            trunk in prop::collection::vec(arb_pose(), 1..=3),
            left in prop::collection::vec(arb_pose(), 1..=3),
            right in prop::collection::vec(arb_pose(), 1..=3),
        ) {
            let mut t = FrameTree::new();
            let mut parent = WORLD_FRAME.to_string();
            for (i, p) in trunk.iter().enumerate() {
                let id = format!("t{i}");
                t.add(&id, &parent, *p).unwrap();
                parent = id;
            }
            let base = parent.clone();
            let mut build = |prefix: &str, poses: &[Pose]| {
                let mut parent = base.clone();
                for (i, p) in poses.iter().enumerate() {
                    let id = format!("{prefix}{i}");
                    t.add(&id, &parent, *p).unwrap();
                    parent = id;
                }
                parent
            };
            let l = build("l", &left);
            let r = build("r", &right);
            let via_world = t.transform_to(WORLD_FRAME, &r).unwrap()
                .compose(&t.transform_to(&l, WORLD_FRAME).unwrap());
            let direct = t.transform_to(&l, &r).unwrap();
            prop_assert!(direct.approx_eq(&via_world, 1e-9));
        }

        #[test]
        fn doubling_distance_halves_width(d in 10.0f64..40.0, side in 0.25f64..1.0) {
            let cam = cam_800x600();
            let near = project_hull(&cube_at(Vec3::new(0.0, 0.0, d), side), &cam, &Pose::identity()).unwrap();
            let far = project_hull(&cube_at(Vec3::new(0.0, 0.0, 2.0 * d), side), &cam, &Pose::identity()).unwrap();
            let wn = near[2] - near[0];
            let wf = far[2] - far[0];
            prop_assert!((wn / 2.0 - wf).abs() <= 1.0);
        }
    }
}
