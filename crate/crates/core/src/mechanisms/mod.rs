//! Curated test mechanisms and their closed-form or numeric oracles.
//!
//! Every mechanism is described by its nominal assembly: the world pose of each
//! link frame and each joint coordinate at that pose. Joint origins and cut-frame
//! offsets follow from those, so all loops close exactly at the home state.

mod oracles;

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra as na;
use na::{Matrix3, Rotation3, Unit, Vector3};

use crate::io::mech::{ActuatorRecord, ContactRecord, JointRecord, LinkRecord, LoopRecord, MechanismDocument, MASK_NAMES};
use crate::kinematics::FramePose;
use crate::math::matrix_to_rpy;
use crate::model::{JointKind, MechanismModel};

pub use oracles::{ClosureOracle, CrankOracle, DiffOracle, KneeOracle};

pub const CRANK_R: f64 = 0.1;
pub const CRANK_L: f64 = 0.2;

fn nm(prefix: &str, s: &str) -> String {
    if prefix.is_empty() {
        s.to_string()
    } else {
        format!("{prefix}_{s}")
    }
}

fn arr(v: &Vector3<f64>) -> [f64; 3] {
    [v.x, v.y, v.z]
}

pub fn pose(rot: Matrix3<f64>, pos: Vector3<f64>) -> FramePose {
    FramePose { rotation: rot, position: pos }
}

pub fn at(x: f64, y: f64, z: f64) -> FramePose {
    pose(Matrix3::identity(), Vector3::new(x, y, z))
}

fn apply(p: &FramePose, x: f64, y: f64, z: f64) -> Vector3<f64> {
    p.position + p.rotation * Vector3::new(x, y, z)
}

pub fn rot_z(a: f64) -> Matrix3<f64> {
    Rotation3::from_axis_angle(&Vector3::z_axis(), a).into_inner()
}

/// Rotation whose y axis is `axis`.
fn frame_y(axis: &Vector3<f64>) -> Matrix3<f64> {
    let y = axis.normalize();
    let v = if y.z.abs() < 0.9 { Vector3::z() } else { Vector3::x() };
    let x = (v - y * v.dot(&y)).normalize();
    let z = x.cross(&y);
    Matrix3::from_columns(&[x, y, z])
}

/// Thin cylinder of radius 1 cm between two points: (com, inertia about com in world axes).
pub fn rod_inertia(mass: f64, a: &Vector3<f64>, b: &Vector3<f64>) -> (Vector3<f64>, Matrix3<f64>) {
    let r = 0.01;
    let d = b - a;
    let l = d.norm();
    let u = d / l;
    let axial = u * u.transpose();
    let perp = Matrix3::identity() - axial;
    let inertia = perp * (mass * (l * l / 12.0 + r * r / 4.0)) + axial * (mass * r * r / 2.0);
    ((a + b) * 0.5, inertia)
}

pub fn box_inertia(mass: f64, dims: [f64; 3]) -> Matrix3<f64> {
    let [x, y, z] = dims;
    Matrix3::from_diagonal(&Vector3::new(y * y + z * z, x * x + z * z, x * x + y * y)) * (mass / 12.0)
}

/// Mass properties of a link in world terms at the nominal pose.
#[derive(Clone, Debug)]
pub struct BodySpec {
    pub name: String,
    pub mass: f64,
    pub com: Vector3<f64>,
    pub inertia: Matrix3<f64>,
}

impl BodySpec {
    pub fn boxed(name: &str, mass: f64, com: Vector3<f64>, dims: [f64; 3]) -> Self {
        BodySpec { name: name.to_string(), mass, com, inertia: box_inertia(mass, dims) }
    }
}

/// Incremental builder working in world coordinates at the nominal pose.
pub struct Assembly {
    doc: MechanismDocument,
    poses: HashMap<String, FramePose>,
}

impl Assembly {
    pub fn new(name: &str, gravity: [f64; 3]) -> Self {
        let doc = MechanismDocument { name: name.to_string(), gravity, ..Default::default() };
        Assembly { doc, poses: HashMap::new() }
    }

    fn pose_of(&self, link: &str) -> &FramePose {
        self.poses.get(link).unwrap_or_else(|| panic!("link `{link}` not yet placed"))
    }

    pub fn body(&mut self, spec: &BodySpec, at: FramePose) {
        let rt = at.rotation.transpose();
        let com = rt * (spec.com - at.position);
        let i = rt * spec.inertia * at.rotation;
        let i = (i + i.transpose()) * 0.5;
        self.doc.links.push(LinkRecord {
            name: spec.name.clone(),
            mass: spec.mass,
            com: arr(&com),
            inertia: [i[(0, 0)], i[(1, 1)], i[(2, 2)], i[(0, 1)], i[(0, 2)], i[(1, 2)]],
        });
        self.poses.insert(spec.name.clone(), at);
    }

    /// Small box-shaped body.
    pub fn small(&mut self, name: &str, mass: f64, at: FramePose) {
        let spec = BodySpec::boxed(name, mass, at.position, [0.02, 0.02, 0.02]);
        self.body(&spec, at);
    }

    /// Slender body between two world points, frame at `at`.
    pub fn segment(&mut self, name: &str, mass: f64, a: &Vector3<f64>, b: &Vector3<f64>, at: FramePose) {
        let (com, inertia) = rod_inertia(mass, a, b);
        self.body(&BodySpec { name: name.to_string(), mass, com, inertia }, at);
    }

    pub fn floating(&mut self, name: &str, child: &str) {
        let p = self.pose_of(child).clone();
        self.doc.joints.push(JointRecord {
            name: name.to_string(),
            kind: JointKind::Floating,
            parent: None,
            child: child.to_string(),
            xyz: arr(&p.position),
            rpy: arr(&matrix_to_rpy(&p.rotation)),
            axis: [0.0, 0.0, 1.0],
            actuated: false,
            limits: None,
            home: 0.0,
        });
    }

    #[allow(clippy::too_many_arguments)]
    fn joint(
        &mut self,
        name: &str,
        kind: JointKind,
        parent: &str,
        child: &str,
        axis_world: Vector3<f64>,
        home: f64,
        actuated: bool,
        limits: Option<(f64, f64)>,
    ) {
        let tp = self.pose_of(parent);
        let tc = self.pose_of(child);
        let axis = (tc.rotation.transpose() * axis_world).normalize();
        // origin = Tp^-1 Tc M(home)^-1
        let rel_rot = tp.rotation.transpose() * tc.rotation;
        let rel_pos = tp.rotation.transpose() * (tc.position - tp.position);
        let (rot, pos) = match kind {
            JointKind::Revolute => {
                let m = Rotation3::from_axis_angle(&Unit::new_normalize(axis), home).into_inner();
                (rel_rot * m.transpose(), rel_pos)
            }
            JointKind::Prismatic => (rel_rot, rel_pos - rel_rot * axis * home),
            JointKind::Floating => unreachable!(),
        };
        self.doc.joints.push(JointRecord {
            name: name.to_string(),
            kind,
            parent: Some(parent.to_string()),
            child: child.to_string(),
            xyz: arr(&pos),
            rpy: arr(&matrix_to_rpy(&rot)),
            axis: arr(&axis),
            actuated,
            limits,
            home,
        });
    }

    pub fn revolute(&mut self, name: &str, parent: &str, child: &str, axis: Vector3<f64>, home: f64, limits: Option<(f64, f64)>) {
        self.joint(name, JointKind::Revolute, parent, child, axis, home, false, limits);
    }

    pub fn prismatic(&mut self, name: &str, parent: &str, child: &str, axis: Vector3<f64>, actuated: bool, limits: Option<(f64, f64)>) {
        self.joint(name, JointKind::Prismatic, parent, child, axis, 0.0, actuated, limits);
    }

    /// Loop cut: both frames coincide with `at` in the nominal assembly.
    pub fn cut(&mut self, name: &str, a: &str, u: &str, at: &FramePose, mask: &str) {
        let local = |link: &str| {
            let t = self.pose_of(link);
            let rt = t.rotation.transpose();
            (arr(&(rt * (at.position - t.position))), arr(&matrix_to_rpy(&(rt * at.rotation))))
        };
        let (a_xyz, a_rpy) = local(a);
        let (u_xyz, u_rpy) = local(u);
        let mut m = [false; 6];
        for tok in mask.split_whitespace() {
            m[MASK_NAMES.iter().position(|&k| k == tok).expect("mask token")] = true;
        }
        let count = m.iter().filter(|&&b| b).count();
        self.doc.loops.push(LoopRecord {
            name: name.to_string(),
            a_link: a.to_string(),
            a_xyz,
            a_rpy,
            u_link: u.to_string(),
            u_xyz,
            u_rpy,
            mask: m,
            constants: vec![0.0; count],
        });
    }

    pub fn contact(&mut self, name: &str, link: &str, point: Vector3<f64>, mu: f64) {
        let t = self.pose_of(link);
        let rt = t.rotation.transpose();
        self.doc.contacts.push(ContactRecord {
            name: name.to_string(),
            link: link.to_string(),
            point: arr(&(rt * (point - t.position))),
            normal: arr(&(rt * Vector3::z())),
            mu,
        });
    }

    pub fn actuator(&mut self, name: &str, joint: &str, lead: f64, efficiency: f64) {
        self.doc.actuators.push(ActuatorRecord { name: name.to_string(), joint: joint.to_string(), lead, efficiency });
    }

    pub fn select(&mut self, joints: &[&str]) {
        self.doc.selection.extend(joints.iter().map(|s| s.to_string()));
    }

    pub fn document(self) -> MechanismDocument {
        self.doc
    }
}

/// Geometry of a slider-crank: the rod hangs on the crank pin and the loop is cut at the slider.
pub struct SliderCrank<'a> {
    pub prefix: &'a str,
    /// Link carrying the slide.
    pub parent: &'a str,
    /// Existing crank link.
    pub crank: &'a str,
    pub pin: Vector3<f64>,
    pub slider: Vector3<f64>,
    pub slide: Vector3<f64>,
    pub axis: Vector3<f64>,
    pub rod_home: f64,
    pub limits: (f64, f64),
    /// Cut-frame orientation; its masked axes span the mechanism plane.
    pub cut_rot: Matrix3<f64>,
    pub mask: &'a str,
}

pub fn slider_crank(asm: &mut Assembly, s: &SliderCrank) {
    let rod = nm(s.prefix, "rod");
    let slider = nm(s.prefix, "slider");
    let z = s.axis.normalize();
    let x = (s.slider - s.pin).normalize();
    let rod_rot = Matrix3::from_columns(&[x, z.cross(&x), z]);
    asm.segment(&rod, 0.2, &s.pin, &s.slider, pose(rod_rot, s.pin));
    asm.revolute(&rod, s.crank, &rod, s.axis, s.rod_home, None);
    asm.small(&slider, 0.3, pose(s.cut_rot, s.slider));
    asm.prismatic(&slider, s.parent, &slider, s.slide, true, Some(s.limits));
    let at = pose(s.cut_rot, s.slider);
    asm.cut(&nm(s.prefix, "loop"), &slider, &rod, &at, s.mask);
}

#[derive(Clone, Debug)]
pub struct DiffParams {
    /// Half spacing of the two legs.
    pub w: f64,
    /// Forward offset of the legs.
    pub x0: f64,
    /// Anchor height above the output joint.
    pub h: f64,
    pub stroke: f64,
    pub roll: (f64, f64),
    pub pitch: (f64, f64),
}

impl Default for DiffParams {
    fn default() -> Self {
        DiffParams {
            w: 0.08,
            x0: 0.08,
            h: 0.25,
            stroke: 0.04,
            roll: (-27f64.to_radians(), 27f64.to_radians()),
            pitch: (-40f64.to_radians(), 42f64.to_radians()),
        }
    }
}

pub const DIFF_SIDES: [(&str, f64); 2] = [("l", 1.0), ("r", -1.0)];

/// Two-leg differential: output universal joint (roll then pitch) driven by two
/// U-P-R legs whose ends slide and turn on pins along the output's y axis.
pub fn diff_unit(asm: &mut Assembly, prefix: &str, parent: &str, out: &BodySpec, place: &FramePose, p: &DiffParams) {
    let r = place.rotation;
    let (ex, ey, ez) = (r.column(0).into_owned(), r.column(1).into_owned(), r.column(2).into_owned());
    let cross = nm(prefix, "cross");
    asm.small(&cross, 0.1, place.clone());
    asm.revolute(&nm(prefix, "roll"), parent, &cross, ex, 0.0, Some(p.roll));
    asm.body(out, place.clone());
    asm.revolute(&nm(prefix, "pitch"), &cross, &out.name, ey, 0.0, Some(p.pitch));
    for (side, sign) in DIFF_SIDES {
        let leg = nm(prefix, side);
        let a = apply(place, p.x0, sign * p.w, p.h);
        let e = apply(place, p.x0, sign * p.w, 0.0);
        let (ua, cyl, rod, end) = (nm(&leg, "ua"), nm(&leg, "cyl"), nm(&leg, "rod"), nm(&leg, "end"));
        asm.small(&ua, 0.05, pose(r, a));
        asm.revolute(&nm(&leg, "ux"), parent, &ua, ex, 0.0, None);
        asm.segment(&cyl, 0.4, &a, &(a - ez * (p.h * 0.5)), pose(r, a));
        asm.revolute(&nm(&leg, "uy"), &ua, &cyl, ey, 0.0, None);
        asm.segment(&rod, 0.2, &a, &e, pose(r, a));
        asm.prismatic(&nm(&leg, "act"), &cyl, &rod, -ez, true, Some((-p.stroke, p.stroke)));
        asm.small(&end, 0.05, pose(r, e));
        asm.revolute(&nm(&leg, "spin"), &rod, &end, ez, 0.0, None);
        asm.cut(&nm(&leg, "pin"), &out.name, &end, &pose(r, e), "x z rx rz");
    }
}

/// Knee linkage points in the unit frame (plane xz, axes along y).
pub mod knee_points {
    pub const O1: [f64; 3] = [0.0, 0.0, -0.1];
    pub const Q1: [f64; 3] = [0.05, 0.0, -0.1];
    pub const R1: [f64; 3] = [-0.05, 0.0, -0.1];
    pub const S: [f64; 3] = [0.05, 0.0, 0.0];
    pub const T2: [f64; 3] = [-0.04, 0.0, -0.25];
    pub const O2: [f64; 3] = [0.0, 0.0, -0.25];
    pub const U2: [f64; 3] = [0.05, 0.0, -0.25];
    pub const V: [f64; 3] = [0.06, 0.0, -0.4];
    pub const O3: [f64; 3] = [0.0, 0.0, -0.4];
    pub const STROKE: f64 = 0.025;
}

/// Three coupled planar loops: slider-crank into a bellcrank, two couplers down to the knee.
pub fn knee_unit(asm: &mut Assembly, prefix: &str, thigh: &str, shank: &BodySpec, place: &FramePose) {
    use knee_points::*;
    let r = place.rotation;
    let ey = r.column(1).into_owned();
    let ez = r.column(2).into_owned();
    let pt = |v: [f64; 3]| apply(place, v[0], v[1], v[2]);
    let cut_rot = r * frame_y(&Vector3::y());
    let c1 = nm(prefix, "c1");
    let c2 = nm(prefix, "c2");
    let k1 = nm(prefix, "k1");
    let k2 = nm(prefix, "k2");
    asm.segment(&c1, 0.1, &pt(R1), &pt(Q1), pose(r, pt(O1)));
    asm.revolute(&c1, thigh, &c1, ey, 0.0, None);
    slider_crank(
        asm,
        &SliderCrank {
            prefix: &nm(prefix, "k0"),
            parent: thigh,
            crank: &c1,
            pin: pt(Q1),
            slider: pt(S),
            slide: ez,
            axis: ey,
            rod_home: 0.0,
            limits: (-STROKE, STROKE),
            cut_rot,
            mask: "x z",
        },
    );
    asm.segment(&c2, 0.1, &pt(T2), &pt(U2), pose(r, pt(O2)));
    asm.revolute(&c2, thigh, &c2, ey, 0.0, None);
    asm.segment(&k1, 0.1, &pt(R1), &pt(T2), pose(r, pt(R1)));
    asm.revolute(&k1, &c1, &k1, ey, 0.0, None);
    asm.cut(&nm(prefix, "k1_loop"), &c2, &k1, &pose(cut_rot, pt(T2)), "x z");
    asm.body(shank, pose(r, pt(O3)));
    asm.revolute(&nm(prefix, "knee"), thigh, &shank.name, ey, 0.0, Some((-1.2, 1.2)));
    asm.segment(&k2, 0.1, &pt(U2), &pt(V), pose(r, pt(U2)));
    asm.revolute(&k2, &c2, &k2, ey, 0.0, None);
    asm.cut(&nm(prefix, "k2_loop"), &shank.name, &k2, &pose(cut_rot, pt(V)), "x z");
}

/// Passive four-bar between `ground` and `out`: arm pivoted at `g`, coupler from `b` to `c`.
#[allow(clippy::too_many_arguments)]
pub fn follower(asm: &mut Assembly, prefix: &str, ground: &str, out: &str, g: Vector3<f64>, b: Vector3<f64>, c: Vector3<f64>, axis: Vector3<f64>) {
    let rot = frame_y(&axis);
    let arm = nm(prefix, "arm");
    let link = nm(prefix, "link");
    asm.segment(&arm, 0.05, &g, &b, pose(rot, g));
    asm.revolute(&arm, ground, &arm, axis, 0.0, None);
    asm.segment(&link, 0.05, &b, &c, pose(rot, b));
    asm.revolute(&link, &arm, &link, axis, 0.0, None);
    asm.cut(&nm(prefix, "loop"), out, &link, &pose(rot, c), "x z");
}

/// Slider-crank, plane xy, crank angle measured from +x, slider along x.
pub fn crank() -> MechanismDocument {
    let (r, l) = (CRANK_R, CRANK_L);
    let d0 = (l * l - r * r).sqrt();
    let mut asm = Assembly::new("crank", [0.0, -9.81, 0.0]);
    asm.small("base", 2.0, at(0.0, 0.0, 0.0));
    let pin = Vector3::new(0.0, r, 0.0);
    asm.segment("crank", 0.5, &Vector3::zeros(), &pin, pose(rot_z(PI / 2.0), Vector3::zeros()));
    asm.revolute("crank", "base", "crank", Vector3::z(), PI / 2.0, None);
    slider_crank(
        &mut asm,
        &SliderCrank {
            prefix: "",
            parent: "base",
            crank: "crank",
            pin,
            slider: Vector3::new(d0, 0.0, 0.0),
            slide: Vector3::x(),
            axis: Vector3::z(),
            rod_home: -2.0 * PI / 3.0,
            limits: (-0.02, 0.02),
            cut_rot: Matrix3::identity(),
            mask: "x y",
        },
    );
    asm.actuator("screw", "slider", 0.1, 0.95);
    asm.select(&["crank"]);
    asm.document()
}

/// Two-DOF differential on a fixed base.
pub fn diff() -> MechanismDocument {
    let mut asm = Assembly::new("diff", [0.0, 0.0, -9.81]);
    asm.body(&BodySpec::boxed("base", 3.0, Vector3::new(0.04, 0.0, 0.2), [0.2, 0.3, 0.1]), at(0.0, 0.0, 0.0));
    let out = BodySpec::boxed("output", 1.0, Vector3::new(0.04, 0.0, -0.03), [0.2, 0.2, 0.04]);
    diff_unit(&mut asm, "", "base", &out, &at(0.0, 0.0, 0.0), &DiffParams::default());
    for (side, _) in DIFF_SIDES {
        asm.actuator(&format!("{side}_screw"), &format!("{side}_act"), 0.05, 0.95);
    }
    asm.select(&["roll", "pitch"]);
    asm.document()
}

/// Planar knee with three coupled loops, thigh fixed.
pub fn knee() -> MechanismDocument {
    let mut asm = Assembly::new("knee", [0.0, 0.0, -9.81]);
    asm.body(&BodySpec::boxed("thigh", 4.0, Vector3::new(0.0, 0.0, -0.2), [0.08, 0.08, 0.4]), at(0.0, 0.0, 0.0));
    let shank = BodySpec::boxed("shank", 2.0, Vector3::new(0.02, 0.0, -0.6), [0.06, 0.06, 0.35]);
    knee_unit(&mut asm, "", "thigh", &shank, &at(0.0, 0.0, 0.0));
    asm.actuator("screw", "k0_slider", 0.1, 0.95);
    asm.select(&["knee"]);
    asm.document()
}

/// Knee-forward tilt of both leg segments at the nominal stance.
pub const MINILEG_CROUCH: f64 = 0.4;
pub const MINILEG_SEGMENT: f64 = 0.35;
const MINILEG_ANKLE_HEIGHT: f64 = 0.06;

pub fn minileg_height() -> f64 {
    MINILEG_ANKLE_HEIGHT + 2.0 * MINILEG_SEGMENT * MINILEG_CROUCH.cos()
}

/// Floating biped standing crouched: hip, knee and ankle pitch each driven by a slider-crank.
pub fn minileg() -> MechanismDocument {
    let z0 = minileg_height();
    let (sb, cb) = MINILEG_CROUCH.sin_cos();
    let seg = MINILEG_SEGMENT;
    let mut asm = Assembly::new("minileg", [0.0, 0.0, -9.81]);
    asm.body(&BodySpec::boxed("pelvis", 14.0, Vector3::new(0.02, 0.0, z0 + 0.1), [0.2, 0.3, 0.2]), at(0.0, 0.0, z0));
    asm.floating("base", "pelvis");
    for (side, sign) in [("l", 1.0), ("r", -1.0)] {
        let y = 0.1 * sign;
        let hip = Vector3::new(0.0, y, z0);
        let knee = hip + Vector3::new(seg * sb, 0.0, -seg * cb);
        let ankle = knee + Vector3::new(-seg * sb, 0.0, -seg * cb);
        let links = [
            (format!("{side}_thigh"), 5.0, hip, knee, 0.05, "pelvis".to_string(), format!("{side}_hip")),
            (format!("{side}_shank"), 3.0, knee, ankle, 0.06, format!("{side}_thigh"), format!("{side}_knee")),
            (format!("{side}_foot"), 1.5, ankle, ankle, 0.05, format!("{side}_shank"), format!("{side}_ankle")),
        ];
        for (link, mass, pivot, end, arm, parent, joint) in links {
            let com = if link.ends_with("foot") { pivot + Vector3::new(0.02, 0.0, -0.04) } else { (pivot + end) * 0.5 + Vector3::new(0.02, 0.0, 0.0) };
            let dims = if link.ends_with("foot") { [0.2, 0.1, 0.05] } else { [0.06, 0.06, 0.35] };
            asm.body(&BodySpec::boxed(&link, mass, com, dims), pose(Matrix3::identity(), pivot));
            asm.revolute(&joint, &parent, &link, Vector3::y(), 0.0, Some((-1.5, 1.5)));
            let pin = pivot + Vector3::new(arm, 0.0, 0.0);
            slider_crank(
                &mut asm,
                &SliderCrank {
                    prefix: &joint,
                    parent: &parent,
                    crank: &link,
                    pin,
                    slider: pin + Vector3::new(0.0, 0.0, 0.12),
                    slide: Vector3::z(),
                    axis: Vector3::y(),
                    rod_home: 0.0,
                    limits: (-0.03, 0.03),
                    cut_rot: frame_y(&Vector3::y()),
                    mask: "x z",
                },
            );
            let lead = if joint.ends_with("knee") { 0.1 } else { 0.05 };
            asm.actuator(&format!("{joint}_screw"), &format!("{joint}_slider"), lead, 0.95);
        }
        let foot = format!("{side}_foot");
        let mut k = 0;
        for x in [-0.08, 0.12] {
            for dy in [0.05, -0.05] {
                asm.contact(&format!("{side}_c{k}"), &foot, Vector3::new(x, y + dy, 0.0), 0.8);
                k += 1;
            }
        }
    }
    asm.select(&["l_hip", "l_knee", "l_ankle", "r_hip", "r_knee", "r_ankle"]);
    asm.document()
}

pub const SYNTH_HEIGHT: f64 = 0.9;

/// 76-DOF biped: per leg a hip-yaw slider-crank, hip differential, planar knee and
/// ankle differential with four follower four-bars.
pub fn synth76() -> MechanismDocument {
    let z0 = SYNTH_HEIGHT;
    let (r, l) = (CRANK_R, CRANK_L);
    let d0 = (l * l - r * r).sqrt();
    let mut asm = Assembly::new("synth76", [0.0, 0.0, -9.81]);
    asm.body(&BodySpec::boxed("pelvis", 20.0, Vector3::new(0.02, 0.0, z0 + 0.1), [0.2, 0.3, 0.2]), at(0.0, 0.0, z0));
    asm.floating("base", "pelvis");
    let mut selection = Vec::new();
    for (side, sign) in [("l", 1.0), ("r", -1.0)] {
        let hip = Vector3::new(0.0, 0.1 * sign, z0);
        let yaw = format!("{side}_yaw");
        let pin = hip + Vector3::new(0.0, r, 0.0);
        asm.segment(&yaw, 1.0, &hip, &pin, pose(rot_z(PI / 2.0), hip));
        asm.revolute(&yaw, "pelvis", &yaw, Vector3::z(), PI / 2.0, None);
        slider_crank(
            &mut asm,
            &SliderCrank {
                prefix: &yaw,
                parent: "pelvis",
                crank: &yaw,
                pin,
                slider: hip + Vector3::new(d0, 0.0, 0.0),
                slide: Vector3::x(),
                axis: Vector3::z(),
                rod_home: -2.0 * PI / 3.0,
                limits: (-0.02, 0.02),
                cut_rot: Matrix3::identity(),
                mask: "x y",
            },
        );
        let h2 = hip - Vector3::new(0.0, 0.0, 0.05);
        let thigh = BodySpec::boxed(&format!("{side}_thigh"), 5.0, h2 + Vector3::new(0.02, 0.0, -0.2), [0.08, 0.08, 0.4]);
        diff_unit(&mut asm, &format!("{side}_hip"), &yaw, &thigh, &pose(Matrix3::identity(), h2), &DiffParams::default());
        let shank = BodySpec::boxed(&format!("{side}_shank"), 3.0, h2 + Vector3::new(0.02, 0.0, -0.6), [0.06, 0.06, 0.35]);
        knee_unit(&mut asm, &format!("{side}_knee"), &thigh.name, &shank, &pose(Matrix3::identity(), h2));
        let ankle = h2 - Vector3::new(0.0, 0.0, 0.8);
        let foot = BodySpec::boxed(&format!("{side}_foot"), 1.5, ankle + Vector3::new(0.02, 0.0, -0.03), [0.2, 0.1, 0.05]);
        diff_unit(&mut asm, &format!("{side}_ankle"), &shank.name, &foot, &pose(Matrix3::identity(), ankle), &DiffParams::default());
        let bars = [
            ("front", Vector3::new(0.06, 0.0, 0.1), Vector3::new(0.1, 0.0, 0.1), Vector3::new(0.1, 0.0, -0.03), Vector3::y()),
            ("back", Vector3::new(-0.06, 0.0, 0.1), Vector3::new(-0.1, 0.0, 0.1), Vector3::new(-0.1, 0.0, -0.03), Vector3::y()),
            ("inner", Vector3::new(0.0, 0.06, 0.1), Vector3::new(0.0, 0.1, 0.1), Vector3::new(0.0, 0.1, -0.03), Vector3::x()),
            ("outer", Vector3::new(0.0, -0.06, 0.1), Vector3::new(0.0, -0.1, 0.1), Vector3::new(0.0, -0.1, -0.03), Vector3::x()),
        ];
        for (name, g, b, c, axis) in bars {
            follower(&mut asm, &format!("{side}_{name}"), &shank.name, &foot.name, ankle + g, ankle + b, ankle + c, axis);
        }
        let mut k = 0;
        for x in [-0.08, 0.12] {
            for dy in [0.05, -0.05] {
                asm.contact(&format!("{side}_c{k}"), &foot.name, Vector3::new(x, hip.y + dy, ankle.z - 0.05), 0.8);
                k += 1;
            }
        }
        for j in ["hip_roll", "hip_pitch", "knee_knee", "ankle_roll", "ankle_pitch"] {
            selection.push(format!("{side}_{j}"));
        }
        selection.insert(selection.len() - 5, yaw.clone());
    }
    let sel: Vec<&str> = selection.iter().map(String::as_str).collect();
    asm.select(&sel);
    asm.document()
}

/// Every fixture with its file stem.
pub fn catalog() -> Vec<(&'static str, MechanismDocument)> {
    vec![("crank", crank()), ("diff", diff()), ("knee", knee()), ("minileg", minileg()), ("synth76", synth76())]
}

pub fn model_of(doc: &MechanismDocument) -> MechanismModel {
    doc.to_model().expect("fixture documents are valid")
}
