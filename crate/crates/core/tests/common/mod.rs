//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use rand::Rng;

pub type V3 = Vector3<f64>;

/// Uniform Catmull-Rom through `ctrl` with mirrored end points, evaluated at
/// global parameter `u ∈ [0, 1]`.
pub fn catmull_rom(ctrl: &[[f64; 3]], u: f64) -> V3 {
    let p: Vec<V3> = ctrl.iter().map(|c| V3::new(c[0], c[1], c[2])).collect();
    let n = p.len();
    let segs = n - 1;
    let x = u.clamp(0.0, 1.0) * segs as f64;
    let i = (x.floor() as usize).min(segs - 1);
    let t = x - i as f64;
    let get = |k: isize| -> V3 {
        if k < 0 {
            p[0] * 2.0 - p[1]
        } else if k as usize >= n {
            p[n - 1] * 2.0 - p[n - 2]
        } else {
            p[k as usize]
        }
    };
    let (p0, p1, p2, p3) = (get(i as isize - 1), get(i as isize), get(i as isize + 1), get(i as isize + 2));
    let t2 = t * t;
    let t3 = t2 * t;
    (p1 * 2.0 + (p2 - p0) * t + (p0 * 2.0 - p1 * 5.0 + p2 * 4.0 - p3) * t2 + (p1 * 3.0 - p0 - p2 * 3.0 + p3) * t3) * 0.5
}

pub fn dense_curve(ctrl: &[[f64; 3]], samples: usize) -> Vec<V3> {
    (0..=samples).map(|k| catmull_rom(ctrl, k as f64 / samples as f64)).collect()
}

pub fn polyline_length(pts: &[V3]) -> f64 {
    pts.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
}

/// Distance from `q` to the nearest sample point.
pub fn brute_distance(pts: &[V3], q: &V3) -> f64 {
    pts.iter().map(|p| (p - q).norm_squared()).fold(f64::INFINITY, f64::min).sqrt()
}

/// Uniformly distributed rotation (Shoemake).
pub fn random_quat(rng: &mut impl Rng) -> UnitQuaternion<f64> {
    let (u1, u2, u3): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
    let tau = std::f64::consts::TAU;
    let a = (1.0 - u1).sqrt();
    let b = u1.sqrt();
    UnitQuaternion::from_quaternion(Quaternion::new(
        b * (tau * u3).cos(),
        a * (tau * u2).sin(),
        a * (tau * u2).cos(),
        b * (tau * u3).sin(),
    ))
}

/// `Rz(yaw)·Ry(pitch)·Rx(roll)` written out element by element.
pub fn zyx_matrix(roll: f64, pitch: f64, yaw: f64) -> Matrix3<f64> {
    let (sr, cr) = roll.sin_cos();
    let (sp, cp) = pitch.sin_cos();
    let (sy, cy) = yaw.sin_cos();
    Matrix3::new(
        cy * cp,
        cy * sp * sr - sy * cr,
        cy * sp * cr + sy * sr,
        sy * cp,
        sy * sp * sr + cy * cr,
        sy * sp * cr - cy * sr,
        -sp,
        cp * sr,
        cp * cr,
    )
}

/// Rotation matrix from quaternion components.
pub fn quat_matrix(q: &UnitQuaternion<f64>) -> Matrix3<f64> {
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

/// Mid-rank of every value by direct counting: `#less + (#equal + 1)/2`.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    values
        .iter()
        .map(|v| {
            let less = values.iter().filter(|x| *x < v).count() as f64;
            let equal = values.iter().filter(|x| *x == v).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect()
}

/// `Σ(t³ − t)` over tie groups, by counting.
pub fn tie_term(values: &[f64]) -> f64 {
    let mut seen: Vec<f64> = Vec::new();
    let mut sum = 0.0;
    for v in values {
        if seen.contains(v) {
            continue;
        }
        seen.push(*v);
        let t = values.iter().filter(|x| *x == v).count() as f64;
        sum += t * t * t - t;
    }
    sum
}

/// Kruskal-Wallis H in the rank-sum form, tie-corrected.
pub fn kw_h(groups: &[Vec<f64>]) -> f64 {
    let pooled: Vec<f64> = groups.iter().flatten().copied().collect();
    let ranks = midranks(&pooled);
    let n = pooled.len() as f64;
    let mut off = 0;
    let mut sum = 0.0;
    for g in groups {
        let r: f64 = ranks[off..off + g.len()].iter().sum();
        sum += r * r / g.len() as f64;
        off += g.len();
    }
    let h = 12.0 / (n * (n + 1.0)) * sum - 3.0 * (n + 1.0);
    let c = 1.0 - tie_term(&pooled) / (n * n * n - n);
    h / c
}

/// Dunn's Z for groups `a` and `b` with pooled tie-corrected variance.
pub fn dunn_z(groups: &[Vec<f64>], a: usize, b: usize) -> f64 {
    let pooled: Vec<f64> = groups.iter().flatten().copied().collect();
    let ranks = midranks(&pooled);
    let n = pooled.len() as f64;
    let mut means = Vec::new();
    let mut off = 0;
    for g in groups {
        means.push(ranks[off..off + g.len()].iter().sum::<f64>() / g.len() as f64);
        off += g.len();
    }
    let var = n * (n + 1.0) / 12.0 - tie_term(&pooled) / (12.0 * (n - 1.0));
    let se = (var * (1.0 / groups[a].len() as f64 + 1.0 / groups[b].len() as f64)).sqrt();
    (means[a] - means[b]) / se
}

/// Signed-rank statistic and two-sided p by walking all `2ⁿ` sign patterns.
pub fn wilcoxon_enumerate(diffs: &[f64]) -> (f64, f64) {
    let nz: Vec<f64> = diffs.iter().copied().filter(|d| *d != 0.0).collect();
    let mags: Vec<f64> = nz.iter().map(|d| d.abs()).collect();
    let ranks = midranks(&mags);
    let plus: f64 = nz.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let total: f64 = ranks.iter().sum();
    let w = plus.min(total - plus);
    let n = ranks.len();
    let mut hits = 0u64;
    for mask in 0u64..(1 << n) {
        let p: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
        if p.min(total - p) <= w + 1e-9 {
            hits += 1;
        }
    }
    (w, hits as f64 / (1u64 << n) as f64)
}
