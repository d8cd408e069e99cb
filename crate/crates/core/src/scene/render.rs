//! Ray casting of body primitives (limb capsules, torso ellipsoid, head sphere) and a
//! fronto-parallel background plane.

use super::skeleton::{dot, lerp, norm, scale, sub, BodyFrame, Joint, LIMBS, NUM_LIMBS};
use super::{Person, Scene};
use crate::camera::Intrinsics;
use crate::map::Map;

/// Value stored in depth maps where a ray hits nothing.
pub const NO_HIT: f32 = f32::INFINITY;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Capsule {
        a: [f64; 3],
        b: [f64; 3],
        radius: f64,
    },
    Sphere {
        center: [f64; 3],
        radius: f64,
    },
    Ellipsoid {
        center: [f64; 3],
        axes: [[f64; 3]; 3],
        semi: [f64; 3],
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    Limb(usize),
    Torso,
    Head,
}

#[derive(Debug, Clone, Copy)]
pub struct Primitive {
    pub shape: Shape,
    pub person: usize,
    pub part: Part,
}

/// Nearest intersection along a ray. `t` is measured in units of the (unnormalised) ray
/// direction, so for camera rays with unit z component it equals the z-depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub t: f64,
    /// `None` for the background plane.
    pub person: Option<usize>,
    pub reflectivity: f32,
}

#[derive(Debug, Clone)]
pub struct RenderOutput {
    pub zdepth: Map,
    pub radial: Map,
    pub reflectivity: Map,
    /// Person index per pixel, -1 for background or no hit.
    pub owner: Vec<i8>,
}

/// Primitives making up one person's body.
pub fn person_primitives(person: &Person, index: usize) -> Vec<Primitive> {
    let body = &person.body;
    let pose = &person.pose;
    let mut out = Vec::with_capacity(NUM_LIMBS + 2);
    for (l, &(p, c)) in LIMBS.iter().enumerate() {
        if matches!(c, Joint::LHip | Joint::RHip) {
            continue;
        }
        out.push(Primitive {
            shape: Shape::Capsule {
                a: pose.joint(p),
                b: pose.joint(c),
                radius: body.limb_radius[l],
            },
            person: index,
            part: Part::Limb(l),
        });
    }
    out.push(Primitive {
        shape: Shape::Sphere {
            center: pose.joint(Joint::Head),
            radius: body.head_radius,
        },
        person: index,
        part: Part::Head,
    });

    // Torso frame recovered from the joints: left along the hip line, up pelvis -> neck.
    let pelvis = pose.pelvis();
    let neck = pose.joint(Joint::Neck);
    let up_raw = sub(neck, pelvis);
    let up = scale(up_raw, 1.0 / norm(up_raw));
    let hip_dir = sub(pose.joint(Joint::LHip), pose.joint(Joint::RHip));
    let left_raw = sub(hip_dir, scale(up, dot(hip_dir, up)));
    let left = if norm(left_raw) > 1e-9 {
        scale(left_raw, 1.0 / norm(left_raw))
    } else {
        BodyFrame::upright(0.0).left
    };
    let forward = cross(left, up);
    out.push(Primitive {
        shape: Shape::Ellipsoid {
            center: lerp(pelvis, neck, 0.5),
            axes: [left, up, forward],
            semi: body.torso_semi_axes,
        },
        person: index,
        part: Part::Torso,
    });
    out
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Smallest positive root of `a t^2 + 2 b t + c = 0`.
fn nearest_root(a: f64, b: f64, c: f64) -> Option<f64> {
    let disc = b * b - a * c;
    if disc < 0.0 || a <= 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    let t0 = (-b - sq) / a;
    if t0 > 1e-9 {
        return Some(t0);
    }
    let t1 = (-b + sq) / a;
    (t1 > 1e-9).then_some(t1)
}

fn sphere_hit(o: [f64; 3], d: [f64; 3], center: [f64; 3], r: f64) -> Option<f64> {
    let oc = sub(o, center);
    nearest_root(dot(d, d), dot(oc, d), dot(oc, oc) - r * r)
}

fn capsule_hit(o: [f64; 3], d: [f64; 3], pa: [f64; 3], pb: [f64; 3], r: f64) -> Option<f64> {
    let ba = sub(pb, pa);
    let oa = sub(o, pa);
    let baba = dot(ba, ba);
    if baba < 1e-18 {
        return sphere_hit(o, d, pa, r);
    }
    let bard = dot(ba, d);
    let baoa = dot(ba, oa);
    let rdoa = dot(d, oa);
    let dd = dot(d, d);
    let oaoa = dot(oa, oa);
    // Infinite cylinder around the segment, restricted to the segment's extent.
    let a = baba * dd - bard * bard;
    let b = baba * rdoa - baoa * bard;
    let c = baba * oaoa - baoa * baoa - r * r * baba;
    let mut best: Option<f64> = None;
    if a > 1e-18 {
        let disc = b * b - a * c;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            for t in [(-b - sq) / a, (-b + sq) / a] {
                if t > 1e-9 {
                    let y = baoa + t * bard;
                    if y > 0.0 && y < baba {
                        best = Some(best.map_or(t, |bt: f64| bt.min(t)));
                        break;
                    }
                }
            }
        }
    }
    for cap in [pa, pb] {
        if let Some(t) = sphere_hit(o, d, cap, r) {
            best = Some(best.map_or(t, |bt| bt.min(t)));
        }
    }
    best
}

fn ellipsoid_hit(
    o: [f64; 3],
    d: [f64; 3],
    center: [f64; 3],
    axes: &[[f64; 3]; 3],
    semi: [f64; 3],
) -> Option<f64> {
    let oc = sub(o, center);
    let lo = [
        dot(oc, axes[0]) / semi[0],
        dot(oc, axes[1]) / semi[1],
        dot(oc, axes[2]) / semi[2],
    ];
    let ld = [
        dot(d, axes[0]) / semi[0],
        dot(d, axes[1]) / semi[1],
        dot(d, axes[2]) / semi[2],
    ];
    nearest_root(dot(ld, ld), dot(lo, ld), dot(lo, lo) - 1.0)
}

impl Shape {
    pub fn intersect(&self, o: [f64; 3], d: [f64; 3]) -> Option<f64> {
        match *self {
            Shape::Capsule { a, b, radius } => capsule_hit(o, d, a, b, radius),
            Shape::Sphere { center, radius } => sphere_hit(o, d, center, radius),
            Shape::Ellipsoid {
                center,
                ref axes,
                semi,
            } => ellipsoid_hit(o, d, center, axes, semi),
        }
    }

    /// Centre and radius of a sphere enclosing the shape.
    fn bounds(&self) -> ([f64; 3], f64) {
        match *self {
            Shape::Capsule { a, b, radius } => (lerp(a, b, 0.5), norm(sub(b, a)) / 2.0 + radius),
            Shape::Sphere { center, radius } => (center, radius),
            Shape::Ellipsoid { center, semi, .. } => {
                (center, semi.iter().copied().fold(0.0, f64::max))
            }
        }
    }
}

/// All primitives of a scene, ready for repeated ray queries.
pub struct Caster<'a> {
    scene: &'a Scene,
    prims: Vec<Primitive>,
    bounds: Vec<([f64; 3], f64)>,
}

impl<'a> Caster<'a> {
    pub fn new(scene: &'a Scene) -> Self {
        let prims: Vec<Primitive> = scene
            .persons
            .iter()
            .enumerate()
            .flat_map(|(i, p)| person_primitives(p, i))
            .collect();
        let bounds = prims.iter().map(|p| p.shape.bounds()).collect();
        Caster {
            scene,
            prims,
            bounds,
        }
    }

    pub fn primitives(&self) -> &[Primitive] {
        &self.prims
    }

    /// Nearest hit of the ray `o + t d`, `t > 0`.
    pub fn cast(&self, o: [f64; 3], d: [f64; 3]) -> Option<Hit> {
        let mut best: Option<Hit> = None;
        let dd = dot(d, d);
        for (prim, &(c, r)) in self.prims.iter().zip(&self.bounds) {
            // Cheap rejection: distance from the bounding centre to the ray line.
            let oc = sub(c, o);
            let along = dot(oc, d);
            let perp2 = dot(oc, oc) - along * along / dd;
            if perp2 > r * r {
                continue;
            }
            if let Some(t) = prim.shape.intersect(o, d) {
                if best.is_none_or(|b| t < b.t) {
                    best = Some(Hit {
                        t,
                        person: Some(prim.person),
                        reflectivity: self.scene.body_reflectivity,
                    });
                }
            }
        }
        if let Some(z) = self.scene.background_depth {
            if d[2] > 0.0 {
                let t = (z - o[2]) / d[2];
                if t > 1e-9 && best.is_none_or(|b| t < b.t) {
                    best = Some(Hit {
                        t,
                        person: None,
                        reflectivity: self.scene.background_reflectivity,
                    });
                }
            }
        }
        best
    }
}

/// Renders z-depth, radial distance, reflectivity and per-pixel owner maps.
pub fn render_depth(scene: &Scene, intrinsics: &Intrinsics) -> RenderOutput {
    let (w, h) = (intrinsics.width, intrinsics.height);
    let caster = Caster::new(scene);
    let mut zdepth = Map::filled(w, h, NO_HIT);
    let mut radial = Map::filled(w, h, NO_HIT);
    let mut reflectivity = Map::filled(w, h, 0.0);
    let mut owner = vec![-1i8; w * h];
    for row in 0..h {
        for col in 0..w {
            let d = intrinsics.ray(col as f64, row as f64);
            if let Some(hit) = caster.cast([0.0; 3], d) {
                zdepth.set(col, row, hit.t as f32);
                radial.set(col, row, (hit.t * norm(d)) as f32);
                reflectivity.set(col, row, hit.reflectivity);
                owner[row * w + col] = hit.person.map_or(-1, |p| p as i8);
            }
        }
    }
    RenderOutput {
        zdepth,
        radial,
        reflectivity,
        owner,
    }
}
