//! Articulated 14-joint body model and a constrained random pose sampler.

use rand::Rng;

use crate::error::{Error, Result};

pub const NUM_JOINTS: usize = 14;
pub const NUM_LIMBS: usize = 13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum Joint {
    Head = 0,
    Neck,
    LShoulder,
    RShoulder,
    LElbow,
    RElbow,
    LWrist,
    RWrist,
    LHip,
    RHip,
    LKnee,
    RKnee,
    LAnkle,
    RAnkle,
}

impl Joint {
    pub const ALL: [Joint; NUM_JOINTS] = [
        Joint::Head,
        Joint::Neck,
        Joint::LShoulder,
        Joint::RShoulder,
        Joint::LElbow,
        Joint::RElbow,
        Joint::LWrist,
        Joint::RWrist,
        Joint::LHip,
        Joint::RHip,
        Joint::LKnee,
        Joint::RKnee,
        Joint::LAnkle,
        Joint::RAnkle,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Joint> {
        Joint::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Joint::Head => "head",
            Joint::Neck => "neck",
            Joint::LShoulder => "l_shoulder",
            Joint::RShoulder => "r_shoulder",
            Joint::LElbow => "l_elbow",
            Joint::RElbow => "r_elbow",
            Joint::LWrist => "l_wrist",
            Joint::RWrist => "r_wrist",
            Joint::LHip => "l_hip",
            Joint::RHip => "r_hip",
            Joint::LKnee => "l_knee",
            Joint::RKnee => "r_knee",
            Joint::LAnkle => "l_ankle",
            Joint::RAnkle => "r_ankle",
        }
    }

    /// The same joint on the other side of the body.
    pub fn mirrored(self) -> Joint {
        use Joint::*;
        match self {
            LShoulder => RShoulder,
            RShoulder => LShoulder,
            LElbow => RElbow,
            RElbow => LElbow,
            LWrist => RWrist,
            RWrist => LWrist,
            LHip => RHip,
            RHip => LHip,
            LKnee => RKnee,
            RKnee => LKnee,
            LAnkle => RAnkle,
            RAnkle => LAnkle,
            other => other,
        }
    }
}

/// Limb tree as (parent, child) pairs, in assembly order.
pub const LIMBS: [(Joint, Joint); NUM_LIMBS] = [
    (Joint::Neck, Joint::Head),
    (Joint::Neck, Joint::LShoulder),
    (Joint::Neck, Joint::RShoulder),
    (Joint::LShoulder, Joint::LElbow),
    (Joint::RShoulder, Joint::RElbow),
    (Joint::LElbow, Joint::LWrist),
    (Joint::RElbow, Joint::RWrist),
    (Joint::Neck, Joint::LHip),
    (Joint::Neck, Joint::RHip),
    (Joint::LHip, Joint::LKnee),
    (Joint::RHip, Joint::RKnee),
    (Joint::LKnee, Joint::LAnkle),
    (Joint::RKnee, Joint::RAnkle),
];

/// Index of the limb whose endpoints are the mirror images of limb `l`'s.
pub fn mirrored_limb(l: usize) -> usize {
    let (a, b) = LIMBS[l];
    let (ma, mb) = (a.mirrored(), b.mirrored());
    LIMBS
        .iter()
        .position(|&(p, c)| p == ma && c == mb)
        .expect("limb tree is left/right symmetric")
}

/// Body dimensions in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct BodyShape {
    pub head_radius: f64,
    /// Neck joint to head centre.
    pub neck_length: f64,
    pub shoulder_half_width: f64,
    pub upper_arm: f64,
    pub forearm: f64,
    /// Pelvis centre to neck joint.
    pub torso_length: f64,
    pub hip_half_width: f64,
    pub thigh: f64,
    pub shin: f64,
    /// Ankle joint to sole.
    pub foot_height: f64,
    /// Lateral, vertical and front-back semi-axes of the torso ellipsoid.
    pub torso_semi_axes: [f64; 3],
    /// Capsule radius per limb; the neck-hip entries are unused (covered by the torso).
    pub limb_radius: [f64; NUM_LIMBS],
}

impl BodyShape {
    /// Proportional body of the given standing height; `girth` scales widths and radii.
    pub fn from_height(height: f64, girth: f64) -> Self {
        let h = height;
        let torso_length = 0.31 * h;
        let w = girth;
        BodyShape {
            head_radius: 0.06 * h,
            neck_length: 0.085 * h,
            shoulder_half_width: 0.1 * h,
            upper_arm: 0.17 * h,
            forearm: 0.15 * h,
            torso_length,
            hip_half_width: 0.055 * h,
            thigh: 0.245 * h,
            shin: 0.25 * h,
            foot_height: 0.05 * h,
            torso_semi_axes: [0.095 * h * w, 0.55 * torso_length, 0.065 * h * w],
            limb_radius: [
                0.03 * h * w,
                0.028 * h * w,
                0.028 * h * w,
                0.026 * h * w,
                0.026 * h * w,
                0.022 * h * w,
                0.022 * h * w,
                0.065 * h * w,
                0.065 * h * w,
                0.04 * h * w,
                0.04 * h * w,
                0.03 * h * w,
                0.03 * h * w,
            ],
        }
    }

    pub fn rest_length(&self, limb: usize) -> f64 {
        match limb {
            0 => self.neck_length,
            1 | 2 => self.shoulder_half_width,
            3 | 4 => self.upper_arm,
            5 | 6 => self.forearm,
            7 | 8 => self.torso_length.hypot(self.hip_half_width),
            9 | 10 => self.thigh,
            11 | 12 => self.shin,
            _ => panic!("limb index {limb} out of range"),
        }
    }

    /// Sole to top of head when standing straight.
    pub fn standing_height(&self) -> f64 {
        self.foot_height
            + self.shin
            + self.thigh
            + self.torso_length
            + self.neck_length
            + self.head_radius
    }

    /// Height of the pelvis centre above the floor when standing straight.
    pub fn pelvis_height(&self) -> f64 {
        self.foot_height + self.shin + self.thigh
    }
}

/// Joint positions in the camera frame (meters), indexed by [`Joint`].
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonPose3D {
    pub joints: [[f64; 3]; NUM_JOINTS],
}

impl SkeletonPose3D {
    pub fn joint(&self, j: Joint) -> [f64; 3] {
        self.joints[j.index()]
    }

    pub fn limb_length(&self, limb: usize) -> f64 {
        let (a, b) = LIMBS[limb];
        dist(self.joint(a), self.joint(b))
    }

    /// Centre of the pelvis (midpoint of the hips).
    pub fn pelvis(&self) -> [f64; 3] {
        lerp(self.joint(Joint::LHip), self.joint(Joint::RHip), 0.5)
    }
}

/// Articulation parameters in radians. All zeros is a T-pose facing the camera.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PoseAngles {
    pub yaw: f64,
    pub lean: f64,
    pub head_pitch: f64,
    /// Per side, index 0 = left, 1 = right.
    pub arm_elevation: [f64; 2],
    pub arm_swing: [f64; 2],
    pub elbow_flex: [f64; 2],
    pub hip_flex: [f64; 2],
    pub hip_abduction: [f64; 2],
    pub knee_flex: [f64; 2],
}

/// Closed interval `[min, max]`.
pub type Range = (f64, f64);

#[derive(Debug, Clone, PartialEq)]
pub struct PoseConstraints {
    pub yaw: Range,
    pub lean: Range,
    pub head_pitch: Range,
    pub arm_elevation: Range,
    pub arm_swing: Range,
    pub elbow_flex: Range,
    pub hip_flex: Range,
    pub hip_abduction: Range,
    pub knee_flex: Range,
    /// Lateral pelvis position (m).
    pub root_x: Range,
    /// Pelvis depth (m).
    pub root_z: Range,
    /// Camera height above the floor (m).
    pub camera_height: f64,
}

impl Default for PoseConstraints {
    fn default() -> Self {
        let deg = |a: f64, b: f64| (a.to_radians(), b.to_radians());
        PoseConstraints {
            yaw: deg(-60.0, 60.0),
            lean: deg(-5.0, 15.0),
            head_pitch: deg(-15.0, 15.0),
            arm_elevation: deg(-80.0, 60.0),
            arm_swing: deg(-30.0, 80.0),
            elbow_flex: deg(0.0, 120.0),
            hip_flex: deg(-20.0, 35.0),
            hip_abduction: deg(0.0, 15.0),
            knee_flex: deg(0.0, 50.0),
            root_x: (-0.6, 0.6),
            root_z: (2.3, 2.75),
            camera_height: 1.0,
        }
    }
}

impl PoseConstraints {
    /// Every range pinned to its rest value (zero angle).
    pub fn rest(root_x: f64, root_z: f64, camera_height: f64) -> Self {
        let zero = (0.0, 0.0);
        PoseConstraints {
            yaw: zero,
            lean: zero,
            head_pitch: zero,
            arm_elevation: zero,
            arm_swing: zero,
            elbow_flex: zero,
            hip_flex: zero,
            hip_abduction: zero,
            knee_flex: zero,
            root_x: (root_x, root_x),
            root_z: (root_z, root_z),
            camera_height,
        }
    }

    fn named_ranges(&self) -> [(&'static str, Range); 11] {
        [
            ("yaw", self.yaw),
            ("lean", self.lean),
            ("head_pitch", self.head_pitch),
            ("arm_elevation", self.arm_elevation),
            ("arm_swing", self.arm_swing),
            ("elbow_flex", self.elbow_flex),
            ("hip_flex", self.hip_flex),
            ("hip_abduction", self.hip_abduction),
            ("knee_flex", self.knee_flex),
            ("root_x", self.root_x),
            ("root_z", self.root_z),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in self.named_ranges() {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::Config(format!(
                    "{name}: infeasible range [{lo}, {hi}]"
                )));
            }
        }
        if !(self.root_z.0 > 0.0) {
            return Err(Error::Config(
                "root_z must be in front of the camera".into(),
            ));
        }
        if !self.camera_height.is_finite() {
            return Err(Error::Config("camera_height must be finite".into()));
        }
        Ok(())
    }

    /// True when every articulation angle lies inside its range.
    pub fn admits(&self, a: &PoseAngles) -> bool {
        let inside = |v: f64, (lo, hi): Range| v >= lo && v <= hi;
        inside(a.yaw, self.yaw)
            && inside(a.lean, self.lean)
            && inside(a.head_pitch, self.head_pitch)
            && (0..2).all(|s| {
                inside(a.arm_elevation[s], self.arm_elevation)
                    && inside(a.arm_swing[s], self.arm_swing)
                    && inside(a.elbow_flex[s], self.elbow_flex)
                    && inside(a.hip_flex[s], self.hip_flex)
                    && inside(a.hip_abduction[s], self.hip_abduction)
                    && inside(a.knee_flex[s], self.knee_flex)
            })
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): Range) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

pub fn sample_angles<R: Rng + ?Sized>(rng: &mut R, c: &PoseConstraints) -> PoseAngles {
    let pair = |rng: &mut R, r: Range| [uniform(rng, r), uniform(rng, r)];
    let yaw = uniform(rng, c.yaw);
    let lean = uniform(rng, c.lean);
    let head_pitch = uniform(rng, c.head_pitch);
    PoseAngles {
        yaw,
        lean,
        head_pitch,
        arm_elevation: pair(rng, c.arm_elevation),
        arm_swing: pair(rng, c.arm_swing),
        elbow_flex: pair(rng, c.elbow_flex),
        hip_flex: pair(rng, c.hip_flex),
        hip_abduction: pair(rng, c.hip_abduction),
        knee_flex: pair(rng, c.knee_flex),
    }
}

/// Samples a pose by drawing angles and a root position uniformly inside `constraints`
/// and running forward kinematics.
pub fn sample_pose<R: Rng + ?Sized>(
    rng: &mut R,
    constraints: &PoseConstraints,
    body: &BodyShape,
) -> Result<(SkeletonPose3D, PoseAngles)> {
    constraints.validate()?;
    let angles = sample_angles(rng, constraints);
    let root_x = uniform(rng, constraints.root_x);
    let root_z = uniform(rng, constraints.root_z);
    let pelvis = [
        root_x,
        constraints.camera_height - body.pelvis_height(),
        root_z,
    ];
    Ok((forward_kinematics(body, &angles, pelvis), angles))
}

/// Orthonormal body axes: left, up and forward, in camera coordinates.
#[derive(Debug, Clone, Copy)]
pub struct BodyFrame {
    pub left: [f64; 3],
    pub up: [f64; 3],
    pub forward: [f64; 3],
}

impl BodyFrame {
    /// Upright frame rotated by `yaw` about the vertical; yaw 0 faces the camera.
    pub fn upright(yaw: f64) -> Self {
        BodyFrame {
            left: [yaw.cos(), 0.0, -yaw.sin()],
            up: [0.0, -1.0, 0.0],
            forward: [-yaw.sin(), 0.0, -yaw.cos()],
        }
    }

    /// Tilts up/forward about the left axis by `angle` (positive leans forward).
    pub fn pitched(&self, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        BodyFrame {
            left: self.left,
            up: add(scale(self.up, c), scale(self.forward, s)),
            forward: sub(scale(self.forward, c), scale(self.up, s)),
        }
    }
}

/// Places all joints for the given body, angles and pelvis centre.
pub fn forward_kinematics(body: &BodyShape, a: &PoseAngles, pelvis: [f64; 3]) -> SkeletonPose3D {
    let base = BodyFrame::upright(a.yaw);
    let upper = base.pitched(a.lean);
    let mut joints = [[0.0; 3]; NUM_JOINTS];
    let mut put = |j: Joint, p: [f64; 3]| joints[j.index()] = p;

    let neck = add(pelvis, scale(upper.up, body.torso_length));
    put(Joint::Neck, neck);
    let head_frame = upper.pitched(a.head_pitch);
    put(
        Joint::Head,
        add(neck, scale(head_frame.up, body.neck_length)),
    );

    let sides = [
        (
            Joint::LShoulder,
            Joint::LElbow,
            Joint::LWrist,
            Joint::LHip,
            Joint::LKnee,
            Joint::LAnkle,
            1.0,
        ),
        (
            Joint::RShoulder,
            Joint::RElbow,
            Joint::RWrist,
            Joint::RHip,
            Joint::RKnee,
            Joint::RAnkle,
            -1.0,
        ),
    ];
    for (s, &(shoulder, elbow, wrist, hip, knee, ankle, sign)) in sides.iter().enumerate() {
        let lateral = scale(upper.left, sign);
        let sh = add(neck, scale(lateral, body.shoulder_half_width));
        put(shoulder, sh);

        let (se, ce) = a.arm_elevation[s].sin_cos();
        let (sw, cw) = a.arm_swing[s].sin_cos();
        let arm = add(
            add(scale(lateral, ce * cw), scale(upper.up, se)),
            scale(upper.forward, ce * sw),
        );
        let el = add(sh, scale(arm, body.upper_arm));
        put(elbow, el);
        let bend = perpendicular_towards(arm, upper.forward, upper.up);
        let (sf, cf) = a.elbow_flex[s].sin_cos();
        let fore = add(scale(arm, cf), scale(bend, sf));
        put(wrist, add(el, scale(fore, body.forearm)));

        let lateral = scale(base.left, sign);
        let hp = add(pelvis, scale(lateral, body.hip_half_width));
        put(hip, hp);
        let (sh_, ch) = a.hip_flex[s].sin_cos();
        let (sa, ca) = a.hip_abduction[s].sin_cos();
        let down = scale(base.up, -1.0);
        let thigh = add(
            scale(add(scale(down, ch), scale(base.forward, sh_)), ca),
            scale(lateral, sa),
        );
        let kn = add(hp, scale(thigh, body.thigh));
        put(knee, kn);
        let back = scale(base.forward, -1.0);
        let bend = perpendicular_towards(thigh, back, back);
        let (sk, ck) = a.knee_flex[s].sin_cos();
        let shin = add(scale(thigh, ck), scale(bend, sk));
        put(ankle, add(kn, scale(shin, body.shin)));
    }
    SkeletonPose3D { joints }
}

/// Unit vector orthogonal to unit `d` in the direction of `towards`, or of `fallback` when
/// `towards` is (nearly) parallel to `d`.
fn perpendicular_towards(d: [f64; 3], towards: [f64; 3], fallback: [f64; 3]) -> [f64; 3] {
    for candidate in [towards, fallback] {
        let p = sub(candidate, scale(d, dot(candidate, d)));
        let n = norm(p);
        if n > 1e-6 {
            return scale(p, 1.0 / n);
        }
    }
    // d is parallel to both; any orthogonal axis will do.
    let axis = if d[0].abs() < 0.9 {
        [1.0, 0.0, 0.0]
    } else {
        [0.0, 1.0, 0.0]
    };
    let p = sub(axis, scale(d, dot(axis, d)));
    scale(p, 1.0 / norm(p))
}

#[inline]
pub fn add(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn scale(a: [f64; 3], s: f64) -> [f64; 3] {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    norm(sub(a, b))
}

#[inline]
pub fn lerp(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    add(a, scale(sub(b, a), t))
}
