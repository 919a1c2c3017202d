//! Wire-path geometry and rotation utilities.
//!
//! The task path is a uniform Catmull-Rom spline through a handful of control
//! points. An arc-length table maps the global spline parameter `u ∈ [0, 1]`
//! to travelled distance, and every table node carries a tangent-aligned frame
//! built by parallel transport (double reflection) plus a linear twist about
//! the tangent. All quantities are SI: meters and radians.

use nalgebra::{Matrix3, Quaternion, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;
pub type Quat = UnitQuaternion<f64>;

/// Intervals in the coarse projection pass.
const COARSE_INTERVALS: usize = 512;
const NEWTON_MAX_ITER: usize = 20;
const NEWTON_TOL: f64 = 1e-10;

/// Gimbal-lock band around |pitch| = π/2 in which roll is pinned to zero.
const GIMBAL_BAND: f64 = 1e-6;

// 8-point Gauss-Legendre nodes and weights on [-1, 1].
const GL_NODES: [f64; 8] = [
    -0.960_289_856_497_536_3,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL_WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_26,
    0.222_381_034_453_374_47,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_47,
    0.101_228_536_290_376_26,
];

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("a wire path needs at least 3 control points, got {0}")]
    TooFewControlPoints(usize),
    #[error("control point {0} is not finite")]
    NonFinitePoint(usize),
    #[error("consecutive control points {0} and {1} coincide")]
    DuplicatePoint(usize, usize),
    #[error("sample count must be at least {min}, got {got}")]
    TooFewSamples { min: usize, got: usize },
}

/// Rigid pose: translation in meters plus a unit quaternion.
///
/// The quaternion is kept on the `w ≥ 0` hemisphere so that `q` and `-q`
/// produce the same stored value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "PoseRepr", into = "PoseRepr")]
pub struct Pose {
    translation: Vec3,
    rotation: Quat,
}

#[derive(Serialize, Deserialize)]
struct PoseRepr {
    t: [f64; 3],
    /// `[w, x, y, z]`
    q: [f64; 4],
}

impl From<PoseRepr> for Pose {
    fn from(r: PoseRepr) -> Self {
        let q = Quaternion::new(r.q[0], r.q[1], r.q[2], r.q[3]);
        Pose::new(Vec3::from(r.t), UnitQuaternion::new_unchecked(q))
    }
}

impl From<Pose> for PoseRepr {
    fn from(p: Pose) -> Self {
        let q = p.rotation.quaternion();
        PoseRepr {
            t: [p.translation.x, p.translation.y, p.translation.z],
            q: [q.w, q.i, q.j, q.k],
        }
    }
}

impl Pose {
    pub fn new(translation: Vec3, rotation: Quat) -> Self {
        Self {
            translation,
            rotation: canonicalize(rotation),
        }
    }

    pub fn identity() -> Self {
        Self::new(Vec3::zeros(), Quat::identity())
    }

    pub fn translation(&self) -> Vec3 {
        self.translation
    }

    pub fn rotation(&self) -> Quat {
        self.rotation
    }

    /// `self ∘ other`: apply `other` in the local frame of `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose::new(
            self.translation + self.rotation * other.translation,
            self.rotation * other.rotation,
        )
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.rotation.inverse();
        Pose::new(-(inv * self.translation), inv)
    }

    pub fn is_finite(&self) -> bool {
        self.translation.iter().all(|v| v.is_finite())
            && self.rotation.coords.iter().all(|v| v.is_finite())
    }
}

/// Linear (m/s) and angular (rad/s, world frame) velocity.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Twist {
    pub linear: Vec3,
    pub angular: Vec3,
}

impl Twist {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn is_finite(&self) -> bool {
        self.linear.iter().chain(self.angular.iter()).all(|v| v.is_finite())
    }
}

/// Flip a quaternion onto the `w ≥ 0` hemisphere. Negation is exact, so the
/// represented rotation is unchanged bit for bit.
pub fn canonicalize(q: Quat) -> Quat {
    if q.w < 0.0 || (q.w == 0.0 && q.coords.iter().find(|c| **c != 0.0).is_some_and(|c| *c < 0.0)) {
        UnitQuaternion::new_unchecked(-q.into_inner())
    } else {
        q
    }
}

/// Rotation matrix of a unit quaternion, written out from its components.
pub fn quat_to_matrix(q: &Quat) -> Matrix3<f64> {
    let (w, x, y, z) = (q.w, q.i, q.j, q.k);
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

fn wrap_half_open(a: f64) -> f64 {
    if a <= -std::f64::consts::PI {
        a + 2.0 * std::f64::consts::PI
    } else {
        a
    }
}

/// Roll-pitch-yaw of `q` under the intrinsic Z-Y-X convention
/// (`R = Rz(yaw) · Ry(pitch) · Rx(roll)`), returned as `(roll, pitch, yaw)`.
///
/// Inside the gimbal-lock band roll is fixed at 0 and the remaining rotation
/// about the vertical is reported as yaw.
pub fn rpy_from_quat(q: &Quat) -> Vec3 {
    let m = quat_to_matrix(q);
    let cos_pitch = m[(2, 1)].hypot(m[(2, 2)]);
    let pitch = (-m[(2, 0)]).atan2(cos_pitch);
    if (pitch.abs() - std::f64::consts::FRAC_PI_2).abs() < GIMBAL_BAND {
        let yaw = (-m[(0, 1)]).atan2(m[(1, 1)]);
        return Vec3::new(0.0, pitch, wrap_half_open(yaw));
    }
    let roll = m[(2, 1)].atan2(m[(2, 2)]);
    let yaw = m[(1, 0)].atan2(m[(0, 0)]);
    Vec3::new(wrap_half_open(roll), pitch, wrap_half_open(yaw))
}

/// Roll-pitch-yaw of the relative rotation `desired · current⁻¹`.
pub fn quat_error_rpy(desired: &Quat, current: &Quat) -> Vec3 {
    rpy_from_quat(&(desired * current.inverse()))
}

/// Geodesic angle between two rotations, in `[0, π]`.
///
/// Uses the chord/sum form `4·atan2(|a − b|, |a + b|)` on the aligned
/// hemisphere, which is exactly zero for identical inputs and stays accurate
/// near both ends of the range.
pub fn rotation_angle(q1: &Quat, q2: &Quat) -> f64 {
    let a = q1.coords;
    let mut b = q2.coords;
    if a.dot(&b) < 0.0 {
        b = -b;
    }
    4.0 * (a - b).norm().atan2((a + b).norm())
}

/// Shortest-arc spherical interpolation.
pub fn slerp(a: &Quat, b: &Quat, t: f64) -> Quat {
    let qa = a.into_inner();
    let mut qb = b.into_inner();
    let mut dot = qa.coords.dot(&qb.coords);
    if dot < 0.0 {
        qb = -qb;
        dot = -dot;
    }
    if dot > 0.9995 {
        return UnitQuaternion::from_quaternion(qa.lerp(&qb, t));
    }
    let theta = dot.min(1.0).acos();
    let sin_theta = theta.sin();
    let wa = ((1.0 - t) * theta).sin() / sin_theta;
    let wb = (t * theta).sin() / sin_theta;
    UnitQuaternion::from_quaternion(qa * wa + qb * wb)
}

/// Serializable description of a wire path. Both the simulator and any
/// renderer rebuild the identical curve from it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathSpec {
    pub control_points: Vec<[f64; 3]>,
    /// Total twist about the tangent from start to end, radians.
    pub twist_angle: f64,
    /// Number of arc-length table intervals.
    pub sample_count: usize,
}

/// Exported wire for rendering.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathExport {
    pub spec: PathSpec,
    pub hash: String,
    /// Meters.
    pub length: f64,
    /// Wire frames at equal arc-length spacing, start and end included.
    pub poses: Vec<Pose>,
}

impl PathSpec {
    /// The fixed S-shaped task wire.
    pub fn canonical() -> Self {
        Self {
            control_points: vec![
                [0.00, 0.00, 0.00],
                [0.04, 0.02, 0.01],
                [0.07, 0.04, 0.04],
                [0.10, 0.02, 0.06],
                [0.13, -0.02, 0.05],
                [0.16, -0.04, 0.02],
                [0.19, -0.02, 0.00],
                [0.22, 0.00, 0.01],
            ],
            twist_angle: 120f64.to_radians(),
            sample_count: 2048,
        }
    }
}

/// Cubic `a + b t + c t² + d t³` on `t ∈ [0, 1]`.
#[derive(Clone, Copy, Debug)]
struct CubicSegment {
    a: Vec3,
    b: Vec3,
    c: Vec3,
    d: Vec3,
}

impl CubicSegment {
    fn catmull_rom(p0: Vec3, p1: Vec3, p2: Vec3, p3: Vec3) -> Self {
        Self {
            a: p1,
            b: 0.5 * (p2 - p0),
            c: 0.5 * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3),
            d: 0.5 * (-p0 + 3.0 * p1 - 3.0 * p2 + p3),
        }
    }

    fn point(&self, t: f64) -> Vec3 {
        self.a + t * (self.b + t * (self.c + t * self.d))
    }

    fn d1(&self, t: f64) -> Vec3 {
        self.b + t * (2.0 * self.c + 3.0 * t * self.d)
    }

    fn d2(&self, t: f64) -> Vec3 {
        2.0 * self.c + 6.0 * t * self.d
    }
}

/// Result of projecting a point onto the wire.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection {
    /// Arc length of the closest point, meters.
    pub s_star: f64,
    /// Spline parameter of the closest point.
    pub u: f64,
    /// Closest point and the path frame there.
    pub desired: Pose,
    /// Euclidean distance from the query, meters.
    pub distance: f64,
}

/// Piecewise-cubic reference wire with arc-length table and frames.
#[derive(Clone, Debug)]
pub struct WirePath {
    spec: PathSpec,
    control_points: Vec<Vec3>,
    segments: Vec<CubicSegment>,
    /// Cumulative arc length at `u = k / sample_count`.
    lut: Vec<f64>,
    frames: Vec<Quat>,
    coarse: Vec<Vec3>,
    coarse_step: f64,
}

impl WirePath {
    pub fn from_spec(spec: &PathSpec) -> Result<Self, GeometryError> {
        let n = spec.control_points.len();
        if n < 3 {
            return Err(GeometryError::TooFewControlPoints(n));
        }
        let pts: Vec<Vec3> = spec.control_points.iter().map(|p| Vec3::from(*p)).collect();
        for (i, p) in pts.iter().enumerate() {
            if !p.iter().all(|v| v.is_finite()) {
                return Err(GeometryError::NonFinitePoint(i));
            }
        }
        for i in 1..n {
            if (pts[i] - pts[i - 1]).norm() == 0.0 {
                return Err(GeometryError::DuplicatePoint(i - 1, i));
            }
        }
        let nseg = n - 1;
        if spec.sample_count < nseg * 8 {
            return Err(GeometryError::TooFewSamples { min: nseg * 8, got: spec.sample_count });
        }

        // Reflected phantom points at both ends.
        let before = 2.0 * pts[0] - pts[1];
        let after = 2.0 * pts[n - 1] - pts[n - 2];
        let at = |i: isize| -> Vec3 {
            if i < 0 {
                before
            } else if i as usize >= n {
                after
            } else {
                pts[i as usize]
            }
        };
        let segments = (0..nseg as isize)
            .map(|i| CubicSegment::catmull_rom(at(i - 1), at(i), at(i + 1), at(i + 2)))
            .collect();

        let mut path = WirePath {
            spec: spec.clone(),
            control_points: pts,
            segments,
            lut: Vec::new(),
            frames: Vec::new(),
            coarse: Vec::new(),
            coarse_step: 0.0,
        };
        path.build_lut();
        path.build_frames();
        path.build_coarse();
        Ok(path)
    }

    pub fn spec(&self) -> &PathSpec {
        &self.spec
    }

    pub fn control_points(&self) -> &[Vec3] {
        &self.control_points
    }

    pub fn segment_count(&self) -> usize {
        self.segments.len()
    }

    pub fn length(&self) -> f64 {
        *self.lut.last().expect("lut is never empty")
    }

    /// Arc-length table, one entry per node `u = k / sample_count`.
    pub fn lut(&self) -> &[f64] {
        &self.lut
    }

    /// Frames at the arc-length table nodes.
    pub fn frames(&self) -> &[Quat] {
        &self.frames
    }

    /// Hex SHA-256 of the JSON path description.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(&self.spec).expect("path spec serializes");
        hex::encode(Sha256::digest(&json))
    }

    /// Description plus `samples` poses at equal arc-length spacing, for
    /// clients that draw the wire.
    pub fn export(&self, samples: usize) -> PathExport {
        let n = samples.max(2);
        let step = self.length() / (n - 1) as f64;
        PathExport {
            spec: self.spec.clone(),
            hash: self.hash(),
            length: self.length(),
            poses: (0..n).map(|i| self.pose_at(i as f64 * step)).collect(),
        }
    }

    fn locate(&self, u: f64) -> (usize, f64) {
        let n = self.segments.len();
        let x = u.clamp(0.0, 1.0) * n as f64;
        let i = (x.floor() as usize).min(n - 1);
        (i, x - i as f64)
    }

    pub fn point_at_u(&self, u: f64) -> Vec3 {
        let (i, t) = self.locate(u);
        self.segments[i].point(t)
    }

    /// `dC/du`.
    pub fn derivative_at_u(&self, u: f64) -> Vec3 {
        let (i, t) = self.locate(u);
        self.segments[i].d1(t) * self.segments.len() as f64
    }

    /// `d²C/du²`.
    pub fn second_derivative_at_u(&self, u: f64) -> Vec3 {
        let (i, t) = self.locate(u);
        let n = self.segments.len() as f64;
        self.segments[i].d2(t) * n * n
    }

    /// Derivative at the end of segment `i` and at the start of segment `i + 1`.
    pub fn joint_derivatives(&self, i: usize) -> (Vec3, Vec3) {
        let n = self.segments.len() as f64;
        (self.segments[i].d1(1.0) * n, self.segments[i + 1].d1(0.0) * n)
    }

    pub fn unit_tangent_at_u(&self, u: f64) -> Vec3 {
        self.derivative_at_u(u).normalize()
    }

    fn speed_integral(&self, u0: f64, u1: f64) -> f64 {
        let half = 0.5 * (u1 - u0);
        let mid = 0.5 * (u0 + u1);
        GL_NODES
            .iter()
            .zip(GL_WEIGHTS.iter())
            .map(|(x, w)| w * self.derivative_at_u(mid + half * x).norm())
            .sum::<f64>()
            * half
    }

    fn build_lut(&mut self) {
        let m = self.spec.sample_count;
        let mut lut = Vec::with_capacity(m + 1);
        lut.push(0.0);
        let mut acc = 0.0;
        for k in 0..m {
            acc += self.speed_integral(k as f64 / m as f64, (k + 1) as f64 / m as f64);
            lut.push(acc);
        }
        self.lut = lut;
    }

    fn build_frames(&mut self) {
        let m = self.spec.sample_count;
        let total = self.length();
        let t0 = self.unit_tangent_at_u(0.0);
        let mut normal = reject(&Vec3::z(), &t0);
        if normal.norm() < 1e-6 {
            normal = reject(&Vec3::y(), &t0);
        }
        let mut normal = normal.normalize();
        let mut x_prev = self.point_at_u(0.0);
        let mut t_prev = t0;
        let mut frames = Vec::with_capacity(m + 1);
        for k in 0..=m {
            let u = k as f64 / m as f64;
            let x = self.point_at_u(u);
            let t = self.unit_tangent_at_u(u);
            if k > 0 {
                normal = double_reflect(&x_prev, &t_prev, &normal, &x, &t);
            }
            normal = reject(&normal, &t).normalize();
            let phi = self.spec.twist_angle * self.lut[k] / total;
            let binormal = t.cross(&normal);
            let n_tw = phi.cos() * normal + phi.sin() * binormal;
            let b_tw = t.cross(&n_tw);
            let rot = Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[t, n_tw, b_tw]));
            frames.push(canonicalize(UnitQuaternion::from_rotation_matrix(&rot)));
            x_prev = x;
            t_prev = t;
        }
        self.frames = frames;
    }

    fn build_coarse(&mut self) {
        self.coarse = (0..=COARSE_INTERVALS)
            .map(|k| self.point_at_u(k as f64 / COARSE_INTERVALS as f64))
            .collect();
        self.coarse_step = self
            .coarse
            .windows(2)
            .map(|w| (w[1] - w[0]).norm())
            .fold(0.0, f64::max);
    }

    /// Arc length at parameter `u`.
    pub fn s_at_u(&self, u: f64) -> f64 {
        let m = self.spec.sample_count;
        let u = u.clamp(0.0, 1.0);
        let k = ((u * m as f64).floor() as usize).min(m - 1);
        let uk = k as f64 / m as f64;
        self.lut[k] + self.speed_integral(uk, u)
    }

    /// Parameter at arc length `s` (clamped to the path).
    pub fn u_at_s(&self, s: f64) -> f64 {
        let m = self.spec.sample_count;
        if s <= 0.0 {
            return 0.0;
        }
        if s >= self.length() {
            return 1.0;
        }
        let k = self.lut.partition_point(|v| *v <= s).saturating_sub(1).min(m - 1);
        let uk = k as f64 / m as f64;
        let (mut lo, mut hi) = (uk, (k + 1) as f64 / m as f64);
        let span = self.lut[k + 1] - self.lut[k];
        let mut u = lo + (hi - lo) * (s - self.lut[k]) / span;
        for _ in 0..NEWTON_MAX_ITER {
            let f = self.lut[k] + self.speed_integral(uk, u) - s;
            if f > 0.0 {
                hi = u;
            } else {
                lo = u;
            }
            let speed = self.derivative_at_u(u).norm();
            let mut next = u - f / speed;
            if !(next >= lo && next <= hi) {
                next = 0.5 * (lo + hi);
            }
            let done = (next - u).abs() < 1e-14;
            u = next;
            if done {
                break;
            }
        }
        u
    }

    pub fn point_at(&self, s: f64) -> Vec3 {
        self.point_at_u(self.u_at_s(s))
    }

    fn frame_at_u(&self, u: f64) -> Quat {
        let m = self.spec.sample_count;
        let x = u.clamp(0.0, 1.0) * m as f64;
        let k = (x.floor() as usize).min(m - 1);
        canonicalize(slerp(&self.frames[k], &self.frames[k + 1], x - k as f64))
    }

    pub fn frame_at(&self, s: f64) -> Quat {
        self.frame_at_u(self.u_at_s(s))
    }

    pub fn pose_at(&self, s: f64) -> Pose {
        let u = self.u_at_s(s);
        Pose::new(self.point_at_u(u), self.frame_at_u(u))
    }

    /// Angular velocity of the path frame per meter of arc length (world frame).
    pub fn frame_rate_at(&self, s: f64) -> Vec3 {
        let h = 1e-4;
        let (a, b) = if s + h <= self.length() { (s, s + h) } else { (s - h, s) };
        let dq = self.frame_at(b) * self.frame_at(a).inverse();
        canonicalize(dq).scaled_axis() / h
    }

    /// Axis-aligned bounds of the control polygon and curve.
    pub fn bounding_box(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for p in &self.coarse {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        (lo, hi)
    }

    /// Closest point on the wire and the desired pose there.
    ///
    /// A coarse sweep finds every basin that could hold the global minimum;
    /// each is refined with a bracketed Newton iteration on the derivative of
    /// the squared distance.
    pub fn closest_pose(&self, query: &Vec3) -> Projection {
        let d2: Vec<f64> = self.coarse.iter().map(|p| (p - query).norm_squared()).collect();
        let dist: Vec<f64> = d2.iter().map(|v| v.sqrt()).collect();
        let best = dist.iter().cloned().fold(f64::INFINITY, f64::min);
        let bound = best + self.coarse_step;
        let last = COARSE_INTERVALS;

        let mut best_u = 0.0;
        let mut best_d2 = f64::INFINITY;
        for i in 0..=last {
            let is_local_min = (i == 0 || d2[i] <= d2[i - 1]) && (i == last || d2[i] <= d2[i + 1]);
            if !is_local_min || dist[i] - self.coarse_step > best {
                continue;
            }
            let a = i.saturating_sub(1) as f64 / last as f64;
            let b = (i + 1).min(last) as f64 / last as f64;
            let u = self.refine(query, a, b, i as f64 / last as f64);
            for cand in [u, a, b] {
                let dd = (self.point_at_u(cand) - query).norm_squared();
                if dd < best_d2 {
                    best_d2 = dd;
                    best_u = cand;
                }
            }
        }
        debug_assert!(best_d2.sqrt() <= bound);

        let point = self.point_at_u(best_u);
        Projection {
            s_star: self.s_at_u(best_u),
            u: best_u,
            desired: Pose::new(point, self.frame_at_u(best_u)),
            distance: (point - query).norm(),
        }
    }

    fn refine(&self, q: &Vec3, mut a: f64, mut b: f64, start: f64) -> f64 {
        let mut u = start;
        for _ in 0..NEWTON_MAX_ITER {
            let diff = self.point_at_u(u) - q;
            let d1 = self.derivative_at_u(u);
            let g = diff.dot(&d1);
            if g > 0.0 {
                b = u;
            } else {
                a = u;
            }
            let gp = d1.norm_squared() + diff.dot(&self.second_derivative_at_u(u));
            let mut next = if gp > 0.0 { u - g / gp } else { f64::NAN };
            if !(next >= a && next <= b) {
                next = 0.5 * (a + b);
            }
            let step = (next - u).abs();
            u = next;
            if step < NEWTON_TOL {
                break;
            }
        }
        u
    }
}

fn reject(v: &Vec3, axis: &Vec3) -> Vec3 {
    v - axis * v.dot(axis)
}

/// One step of the double-reflection rotation-minimizing frame update.
fn double_reflect(x0: &Vec3, t0: &Vec3, r0: &Vec3, x1: &Vec3, t1: &Vec3) -> Vec3 {
    let v1 = x1 - x0;
    let c1 = v1.norm_squared();
    if c1 == 0.0 {
        return *r0;
    }
    let r_l = r0 - v1 * (2.0 / c1 * v1.dot(r0));
    let t_l = t0 - v1 * (2.0 / c1 * v1.dot(t0));
    let v2 = t1 - t_l;
    let c2 = v2.norm_squared();
    if c2 < 1e-300 {
        return r_l;
    }
    r_l - v2 * (2.0 / c2 * v2.dot(&r_l))
}

/// The task wire used by every trial.
pub fn build_canonical_path() -> WirePath {
    WirePath::from_spec(&PathSpec::canonical()).expect("canonical path spec is valid")
}

/// Free-function form of [`WirePath::closest_pose`].
pub fn closest_pose(path: &WirePath, query: &Vec3) -> Projection {
    path.closest_pose(query)
}
