//! Reference implementations written straight from the defining formulas on
//! plain arrays. Nothing here calls the production pipeline.
#![allow(clippy::needless_range_loop)]

use std::f64::consts::PI;

pub type V3 = [f64; 3];
pub type M3 = [[f64; 3]; 3];

/// Brute-force weighted first and second moments.
pub fn weighted_moments(points: &[V3], weights: &[f64]) -> (V3, M3) {
    let total: f64 = weights.iter().sum();
    let mut mean = [0.0; 3];
    for (p, w) in points.iter().zip(weights) {
        for i in 0..3 {
            mean[i] += w * p[i];
        }
    }
    for m in &mut mean {
        *m /= total;
    }
    let mut cov = [[0.0; 3]; 3];
    for (p, w) in points.iter().zip(weights) {
        for i in 0..3 {
            for j in 0..3 {
                cov[i][j] += w * (p[i] - mean[i]) * (p[j] - mean[j]);
            }
        }
    }
    for row in &mut cov {
        for c in row.iter_mut() {
            *c /= total;
        }
    }
    (mean, cov)
}

/// Cyclic Jacobi eigenvalues of a symmetric 3×3 matrix, descending.
pub fn jacobi_eigenvalues(m: &M3) -> V3 {
    let mut a = *m;
    for _ in 0..100 {
        let off = a[0][1].powi(2) + a[0][2].powi(2) + a[1][2].powi(2);
        let diag = a[0][0].powi(2) + a[1][1].powi(2) + a[2][2].powi(2);
        if off <= 1e-36 * diag || off == 0.0 {
            break;
        }
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            if a[p][q] == 0.0 {
                continue;
            }
            let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            // a ← Jᵀ a J with the rotation in the (p, q) plane.
            let mut b = a;
            for k in 0..3 {
                b[k][p] = c * a[k][p] - s * a[k][q];
                b[k][q] = s * a[k][p] + c * a[k][q];
            }
            let mut r = b;
            for k in 0..3 {
                r[p][k] = c * b[p][k] - s * b[q][k];
                r[q][k] = s * b[p][k] + c * b[q][k];
            }
            a = r;
        }
    }
    let mut ev = [a[0][0], a[1][1], a[2][2]];
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

/// Constant-velocity Kalman filter on a dense row-major 6×6 covariance,
/// standard (non-Joseph) update.
#[derive(Debug, Clone)]
pub struct DenseKf {
    pub x: Vec<f64>,
    pub p: Vec<Vec<f64>>,
}

fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let (n, m, k) = (a.len(), b[0].len(), b.len());
    (0..n)
        .map(|i| (0..m).map(|j| (0..k).map(|l| a[i][l] * b[l][j]).sum()).collect())
        .collect()
}

fn transpose(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    (0..a[0].len()).map(|j| a.iter().map(|row| row[j]).collect()).collect()
}

fn inverse3(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    let c = |r0: usize, c0: usize, r1: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
    vec![
        vec![c(1, 1, 2, 2) / det, -c(0, 1, 2, 2) / det, c(0, 1, 1, 2) / det],
        vec![-c(1, 0, 2, 2) / det, c(0, 0, 2, 2) / det, -c(0, 0, 1, 2) / det],
        vec![c(1, 0, 2, 1) / det, -c(0, 0, 2, 1) / det, c(0, 0, 1, 1) / det],
    ]
}

impl DenseKf {
    pub fn new(z: V3, p0_pos: f64, p0_vel: f64) -> Self {
        let mut p = vec![vec![0.0; 6]; 6];
        for i in 0..3 {
            p[i][i] = p0_pos;
            p[i + 3][i + 3] = p0_vel;
        }
        Self {
            x: vec![z[0], z[1], z[2], 0.0, 0.0, 0.0],
            p,
        }
    }

    pub fn predict(&mut self, dt: f64, q_pos: f64, q_vel: f64) {
        let mut f = vec![vec![0.0; 6]; 6];
        for i in 0..6 {
            f[i][i] = 1.0;
        }
        for i in 0..3 {
            f[i][i + 3] = dt;
        }
        self.x = (0..6).map(|i| (0..6).map(|j| f[i][j] * self.x[j]).sum()).collect();
        self.p = matmul(&matmul(&f, &self.p), &transpose(&f));
        for i in 0..3 {
            self.p[i][i] += q_pos;
            self.p[i + 3][i + 3] += q_vel;
        }
    }

    pub fn update(&mut self, z: V3, r_diag: V3) {
        let s: Vec<Vec<f64>> = (0..3)
            .map(|i| (0..3).map(|j| self.p[i][j] + if i == j { r_diag[i] } else { 0.0 }).collect())
            .collect();
        let s_inv = inverse3(&s);
        let ph_t: Vec<Vec<f64>> = self.p.iter().map(|row| row[..3].to_vec()).collect();
        let k = matmul(&ph_t, &s_inv);
        let innov: Vec<f64> = (0..3).map(|i| z[i] - self.x[i]).collect();
        for i in 0..6 {
            self.x[i] += (0..3).map(|j| k[i][j] * innov[j]).sum::<f64>();
        }
        let mut ikh = vec![vec![0.0; 6]; 6];
        for i in 0..6 {
            ikh[i][i] = 1.0;
            for j in 0..3 {
                ikh[i][j] -= k[i][j];
            }
        }
        self.p = matmul(&ikh, &self.p);
    }
}

/// Image-plane noise mapped to metric noise at depth `z`.
pub fn measurement_variances(z: f64, fx: f64, fy: f64, sigma_u: f64, sigma_v: f64, sigma_z: f64) -> V3 {
    [(z * sigma_u / fx).powi(2), (z * sigma_v / fy).powi(2), sigma_z * sigma_z]
}

/// `P(ρ) = p_end + (p_start − p_end)·exp(−λρ)`.
pub fn asc_schedule(rho: f64, start: f64, end: f64, lambda: f64) -> f64 {
    end + (start - end) * (-lambda * rho).exp()
}

pub fn wrap(a: f64) -> f64 {
    let mut d = a;
    while d > PI {
        d -= 2.0 * PI;
    }
    while d <= -PI {
        d += 2.0 * PI;
    }
    d
}

/// Success/failure bounds on `(x, y, yaw, pitch)`.
#[derive(Debug, Clone, Copy)]
pub struct Bounds {
    pub eps: [f64; 4],
    pub delta: [f64; 4],
}

/// Absolute `(Δx, Δy, Δyaw, Δpitch)`; Euler order is roll, pitch, yaw.
fn deviations(p: V3, theta: V3, p_opt: V3, theta_opt: V3) -> [f64; 4] {
    [
        (p[0] - p_opt[0]).abs(),
        (p[1] - p_opt[1]).abs(),
        wrap(theta[2] - theta_opt[2]).abs(),
        wrap(theta[1] - theta_opt[1]).abs(),
    ]
}

pub fn success_indicator(p: V3, theta: V3, p_opt: V3, theta_opt: V3, b: &Bounds) -> bool {
    let d = deviations(p, theta, p_opt, theta_opt);
    (0..4).all(|i| d[i] < b.eps[i])
}

pub fn fail_indicator(p: V3, theta: V3, p_opt: V3, theta_opt: V3, b: &Bounds, timeout: bool) -> bool {
    let d = deviations(p, theta, p_opt, theta_opt);
    timeout && (0..4).any(|i| d[i] >= b.delta[i])
}

pub struct RewardInputs {
    pub p: V3,
    pub theta: V3,
    pub p_opt: V3,
    pub theta_opt: V3,
    pub p_hint: V3,
    pub w_p: V3,
    pub w_r: V3,
    pub gravity: V3,
    pub lin_vel: V3,
    pub ang_vel: V3,
    pub action: [f64; 4],
    pub prev_action: [f64; 4],
    pub out_fov: bool,
}

pub struct RewardParams {
    pub sigma_track: f64,
    pub k: f64,
    pub clip: [f64; 4],
    pub bounds: Bounds,
}

/// Unweighted `[hint, opt, miss, roll, ang, smooth, limit]`.
pub fn reward_terms(i: &RewardInputs, prm: &RewardParams) -> [f64; 7] {
    let e = |sq: f64| (-sq / prm.sigma_track).exp();
    let dp: Vec<f64> = (0..3).map(|k| i.p[k] - i.p_opt[k]).collect();
    let dth: Vec<f64> = (0..3).map(|k| wrap(i.theta[k] - i.theta_opt[k])).collect();
    let e_pos_sq: f64 = (0..3).map(|k| i.w_p[k] * dp[k] * dp[k]).sum();
    let e_rot_sq: f64 = (0..3).map(|k| i.w_r[k] * dth[k] * dth[k]).sum();

    let seg: Vec<f64> = (0..3).map(|k| i.p_opt[k] - i.p_hint[k]).collect();
    let rel: Vec<f64> = (0..3).map(|k| i.p[k] - i.p_hint[k]).collect();
    let seg_sq: f64 = seg.iter().map(|s| s * s).sum();
    let t = if seg_sq > 0.0 {
        ((0..3).map(|k| rel[k] * seg[k]).sum::<f64>() / seg_sq).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let d_path_sq: f64 = (0..3).map(|k| (rel[k] - t * seg[k]).powi(2)).sum();

    let success = success_indicator(i.p, i.theta, i.p_opt, i.theta_opt, &prm.bounds);
    let v_base_sq = i.lin_vel[0].powi(2) + i.lin_vel[1].powi(2) + i.ang_vel[2].powi(2);
    let clipped: Vec<f64> = (0..4).map(|k| i.action[k].clamp(-prm.clip[k], prm.clip[k])).collect();

    [
        e(d_path_sq) * e(e_rot_sq) * (1.0 + prm.k * e(e_pos_sq)),
        if success { e(e_pos_sq) * e(e_rot_sq) * e(v_base_sq) } else { 0.0 },
        if i.out_fov { 1.0 } else { 0.0 },
        i.gravity[1].powi(2),
        i.ang_vel[0].powi(2) + i.ang_vel[1].powi(2),
        (0..4).map(|k| (clipped[k] - i.prev_action[k]).powi(2)).sum(),
        (0..4).map(|k| (clipped[k] - i.action[k]).powi(2)).sum(),
    ]
}
