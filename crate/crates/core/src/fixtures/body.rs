//! Analytic descriptions of the procedural characters: capsule geometry,
//! joint placement, skinning weights and canonical landmark points.

use std::f64::consts::PI;

use super::surface_nets::{dot, norm, sub, Blend, Capsule};
use super::IdentityParams;

/// Fraction of a bone's length covered by the weight blend band.
pub const BLEND_BAND: f64 = 0.2;

/// A limb-attached joint: the limb starts at `joint` and extends along
/// `dir` for `length`, with the given capsule radius.
pub(crate) struct Limb {
    pub joint: [f64; 3],
    pub dir: [f64; 3],
    pub length: f64,
    pub radius: f64,
}

impl Limb {
    /// Weight of the limb at `p` before normalization: a cosine ramp across
    /// the joint, gated by distance from the limb axis.
    fn influence(&self, p: [f64; 3]) -> f64 {
        let rel = sub(p, self.joint);
        let s = dot(rel, self.dir);
        let radial = norm([rel[0] - s * self.dir[0], rel[1] - s * self.dir[1], rel[2] - s * self.dir[2]]);
        let gate = 1.0 - ramp(radial, 1.3 * self.radius, 2.0 * self.radius);
        let band = BLEND_BAND * self.length;
        ramp(s, -0.5 * band, 0.5 * band) * gate
    }
}

/// Smooth 0→1 transition over `[a, b]`.
pub(crate) fn ramp(x: f64, a: f64, b: f64) -> f64 {
    if x <= a {
        0.0
    } else if x >= b {
        1.0
    } else {
        0.5 - 0.5 * (PI * (x - a) / (b - a)).cos()
    }
}

pub(crate) struct Body {
    pub sdf: Blend,
    pub names: Vec<String>,
    pub parents: Vec<Option<usize>>,
    pub joints: Vec<[f64; 3]>,
    pub landmark_names: Vec<&'static str>,
    pub landmark_points: Vec<[f64; 3]>,
    /// Approximate surface area, used to pick the grid spacing.
    pub area: f64,
    kind: Weighting,
}

enum Weighting {
    /// Root plus independent limbs hanging off it.
    Star(Vec<Limb>),
    /// A chain of ramps along one axis; entry `q` starts joint `q + 1`.
    Chain(Vec<Limb>),
}

impl Body {
    /// Dense weight row at `p`, summing to one.
    pub fn weights(&self, p: [f64; 3]) -> Vec<f64> {
        let q = self.joints.len();
        let mut w = vec![0.0; q];
        match &self.kind {
            Weighting::Star(limbs) => {
                let mut total = 0.0;
                for (l, limb) in limbs.iter().enumerate() {
                    w[l + 1] = limb.influence(p);
                    total += w[l + 1];
                }
                if total > 1.0 {
                    w.iter_mut().for_each(|x| *x /= total);
                } else {
                    w[0] = 1.0 - total;
                }
            }
            Weighting::Chain(limbs) => {
                let m: Vec<f64> = limbs.iter().map(|l| l.influence(p)).collect();
                w[0] = 1.0 - m[0];
                for l in 0..m.len() {
                    let next = m.get(l + 1).copied().unwrap_or(0.0);
                    w[l + 1] = (m[l] - next).max(0.0);
                }
                let s: f64 = w.iter().sum();
                w.iter_mut().for_each(|x| *x /= s);
            }
        }
        w
    }
}

/// Five-joint capsule humanoid standing on the `y = 0` plane, facing `+z`,
/// with its left side on `+x`.
pub(crate) fn humanoid(id: &IdentityParams) -> Body {
    let rt = 0.17 * id.torso_radius;
    let rh = 0.11 * id.head_radius;
    let ra = 0.085 * id.limb_radius;
    let rl = 0.09 * id.limb_radius;
    let arm = 0.65 * id.limb_length;
    let leg = 0.77 * id.limb_length;
    let ys = 1.38;
    let (xs, xh, yh) = (0.2, 0.15, 0.85);
    // Feet rest on the ground regardless of leg length.
    let lift = leg - 0.77 + rl - 0.09;
    let up = |p: [f64; 3]| [p[0], p[1] + lift, p[2]];
    let head_c = up([0.0, 1.52 + rh, 0.0]);

    let mut parts = vec![
        Capsule { a: up([0.0, 0.95, 0.0]), b: up([0.0, 1.35, 0.0]), r: rt },
        Capsule { a: head_c, b: head_c, r: rh },
    ];
    let mut limbs = Vec::new();
    let mut joints = vec![up([0.0, 1.15, 0.0])];
    for sx in [1.0, -1.0] {
        let j = up([sx * xs, ys, 0.0]);
        parts.push(Capsule { a: up([sx * 0.12, ys, 0.0]), b: [j[0] + sx * arm, j[1], 0.0], r: ra });
        limbs.push(Limb { joint: j, dir: [sx, 0.0, 0.0], length: arm, radius: ra });
        joints.push(j);
    }
    for sx in [1.0, -1.0] {
        let j = up([sx * xh, yh, 0.0]);
        parts.push(Capsule { a: j, b: [j[0], j[1] - leg, 0.0], r: rl });
        limbs.push(Limb { joint: j, dir: [0.0, -1.0, 0.0], length: leg, radius: rl });
        joints.push(j);
    }
    let chest = up([0.0, 1.2, 0.0]);
    let landmark_points = vec![
        [head_c[0], head_c[1] + rh, 0.0],
        [joints[1][0] + arm + ra, ys + lift, 0.0],
        [joints[2][0] - arm - ra, ys + lift, 0.0],
        [xh, yh + lift - leg - rl, 0.0],
        [-xh, yh + lift - leg - rl, 0.0],
        [0.0, chest[1], rt],
        [0.0, chest[1], -rt],
    ];
    let tau = 2.0 * PI;
    let area = tau * rt * 0.4
        + 2.0 * tau * rt * rt
        + 2.0 * tau * rh * rh
        + 2.0 * (tau * ra * (arm + 0.08) + 2.0 * tau * ra * ra)
        + 2.0 * (tau * rl * leg + 2.0 * tau * rl * rl);
    Body {
        sdf: Blend { parts, k: 0.04 },
        names: ["root", "l_shoulder", "r_shoulder", "l_hip", "r_hip"].map(String::from).to_vec(),
        parents: vec![None, Some(0), Some(0), Some(0), Some(0)],
        joints,
        landmark_names: vec!["head", "l_hand", "r_hand", "l_foot", "r_foot", "chest_front", "back"],
        landmark_points,
        area,
        kind: Weighting::Star(limbs),
    }
}

/// Straight capsule along `+x` from the shoulder at the origin, with the
/// elbow at mid-length and the wrist at the far end of the axis.
pub(crate) fn arm(id: &IdentityParams) -> Body {
    let len = id.limb_length;
    let r = 0.1 * id.limb_radius;
    let half = 0.5 * len;
    let joints = vec![[0.0; 3], [half, 0.0, 0.0], [len, 0.0, 0.0]];
    let limbs = vec![
        Limb { joint: joints[1], dir: [1.0, 0.0, 0.0], length: half, radius: r },
        Limb { joint: joints[2], dir: [1.0, 0.0, 0.0], length: half, radius: r },
    ];
    // Points at distinct angles around the axis break its rotational symmetry.
    let around = |x: f64, a: f64| [x, r * a.cos(), r * a.sin()];
    let landmark_points = vec![
        [-r, 0.0, 0.0],
        [len + r, 0.0, 0.0],
        around(half, 0.0),
        around(half, 0.5 * PI),
        around(0.25 * len, PI),
        around(0.75 * len, 1.5 * PI),
        around(0.9 * len, 0.25 * PI),
    ];
    Body {
        sdf: Blend { parts: vec![Capsule { a: joints[0], b: joints[2], r }], k: 0.04 },
        names: ["shoulder", "elbow", "wrist"].map(String::from).to_vec(),
        parents: vec![None, Some(0), Some(1)],
        joints,
        landmark_names: vec![
            "shoulder_end",
            "hand_end",
            "elbow_top",
            "elbow_side",
            "upper_back",
            "fore_side",
            "wrist_top",
        ],
        landmark_points,
        area: 2.0 * PI * r * len + 4.0 * PI * r * r,
        kind: Weighting::Chain(limbs),
    }
}
