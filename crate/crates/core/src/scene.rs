//! Gaussian primitives, cameras, and the projection of 3D Gaussians to
//! screen-space splats.

use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::math::{self, Mat2, Mat3, Vec3};
use crate::sh;

/// Added to the diagonal of every screen-space covariance (pixels²).
pub const COV2D_REGULARIZATION: f64 = 0.3;
/// Camera-space depth at or below which a Gaussian is culled.
pub const NEAR_PLANE: f64 = 0.01;

/// One scene primitive in its unconstrained (pre-activation) parameterization.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    pub position: Vec3,
    /// Quaternion `(w, x, y, z)`; normalized before use.
    pub rotation: [f64; 4],
    pub log_scale: Vec3,
    pub opacity_logit: f64,
    /// `(degree + 1)²` coefficients, each holding the three colour channels.
    pub sh: Vec<[f64; 3]>,
}

impl Gaussian {
    pub fn scale(&self) -> Vec3 {
        self.log_scale.map(math::exp)
    }

    pub fn opacity(&self) -> f64 {
        math::sigmoid(self.opacity_logit)
    }

    pub fn covariance(&self) -> Result<Mat3> {
        build_covariance(self.rotation, self.log_scale)
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.rotation.iter().all(|v| v.is_finite())
            && self.log_scale.iter().all(|v| v.is_finite())
            && self.opacity_logit.is_finite()
            && self.sh.iter().flatten().all(|v| v.is_finite())
    }
}

/// A set of Gaussians sharing one SH degree.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub sh_degree: usize,
    pub gaussians: Vec<Gaussian>,
}

impl Scene {
    pub fn new(sh_degree: usize, gaussians: Vec<Gaussian>) -> Result<Self> {
        let scene = Self { sh_degree, gaussians };
        scene.validate()?;
        Ok(scene)
    }

    pub fn empty(sh_degree: usize) -> Self {
        Self { sh_degree, gaussians: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.sh_degree > sh::MAX_SH_DEGREE {
            return Err(invalid("SH degree must be in 0..=3"));
        }
        let k = sh::coeff_count(self.sh_degree);
        for (i, g) in self.gaussians.iter().enumerate() {
            if g.sh.len() != k {
                return Err(invalid(alloc::format!(
                    "gaussian {i} has {} SH coefficients, degree {} needs {k}",
                    g.sh.len(),
                    self.sh_degree
                )));
            }
            let qn = g.rotation.iter().map(|v| v * v).sum::<f64>();
            if !(qn > 0.0) {
                return Err(invalid(alloc::format!("gaussian {i} has a zero quaternion")));
            }
        }
        Ok(())
    }
}

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub min: Vec3,
    pub max: Vec3,
}

impl Bounds {
    pub fn diagonal(&self) -> f64 {
        math::norm(math::sub(self.max, self.min))
    }

    pub fn contains(&self, p: Vec3) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] && p[k] <= self.max[k])
    }
}

/// Pinhole camera with a rigid world-to-camera transform.
///
/// Camera space follows the usual vision convention: x right, y down,
/// z forward. Pixel `(i, j)` is sampled at coordinate `(i, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    pub rotation: Mat3,
    pub translation: Vec3,
    pub timestamp: f64,
}

impl Camera {
    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(invalid("focal lengths must be positive"));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64 && self.cy >= 0.0 && self.cy < self.height as f64) {
            return Err(invalid("principal point must lie inside the sensor"));
        }
        let r = &self.rotation;
        let rrt = math::mat_mul(r, &math::transpose(r));
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { 1.0 } else { 0.0 };
                if (rrt[i][j] - expected).abs() > 1e-9 {
                    return Err(invalid("camera rotation is not orthonormal"));
                }
            }
        }
        if (math::det3(r) - 1.0).abs() > 1e-9 {
            return Err(invalid("camera rotation must have determinant +1"));
        }
        Ok(())
    }

    /// Camera at `eye` looking at `target`; `up` fixes the roll.
    #[allow(clippy::too_many_arguments)]
    pub fn look_at(
        eye: Vec3,
        target: Vec3,
        up: Vec3,
        fx: f64,
        fy: f64,
        width: u32,
        height: u32,
        timestamp: f64,
    ) -> Self {
        let forward = normalize(math::sub(target, eye));
        let right = normalize(math::cross(forward, up));
        let down = math::cross(forward, right);
        let rotation = [right, down, forward];
        let translation = math::scale(math::mat_vec(&rotation, eye), -1.0);
        Self {
            fx,
            fy,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            width,
            height,
            rotation,
            translation,
            timestamp,
        }
    }

    /// World-space position of the optical centre.
    pub fn center(&self) -> Vec3 {
        math::scale(math::mat_t_vec(&self.rotation, self.translation), -1.0)
    }

    pub fn world_to_camera(&self, p: Vec3) -> Vec3 {
        math::add(math::mat_vec(&self.rotation, p), self.translation)
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// Row-major 3x4 `[R | t]`.
    pub fn to_row_major(&self) -> [f64; 12] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[0][0], r[0][1], r[0][2], t[0], r[1][0], r[1][1], r[1][2], t[1], r[2][0], r[2][1],
            r[2][2], t[2],
        ]
    }

    pub fn set_row_major(&mut self, m: &[f64; 12]) {
        for i in 0..3 {
            self.rotation[i] = [m[4 * i], m[4 * i + 1], m[4 * i + 2]];
            self.translation[i] = m[4 * i + 3];
        }
    }
}

fn normalize(v: Vec3) -> Vec3 {
    math::scale(v, 1.0 / math::norm(v))
}

/// Screen-space splat of one Gaussian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedGaussian {
    pub mean2d: [f64; 2],
    pub cov2d: Mat2,
    pub depth: f64,
    pub color: [f64; 3],
    pub alpha: f64,
}

/// Rotation matrix of the normalized quaternion `(w, x, y, z)`.
pub fn quat_to_rotation(q: [f64; 4]) -> Result<Mat3> {
    let n = math::sqrt(q.iter().map(|v| v * v).sum::<f64>());
    if !(n > 0.0) || !n.is_finite() {
        return Err(invalid("quaternion must have positive finite norm"));
    }
    Ok(unit_quat_to_rotation(q.map(|v| v / n)))
}

pub(crate) fn unit_quat_to_rotation([w, x, y, z]: [f64; 4]) -> Mat3 {
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

/// `Σ = R S Sᵀ Rᵀ` with `S = diag(exp(log_scale))`.
pub fn build_covariance(q: [f64; 4], log_scale: Vec3) -> Result<Mat3> {
    let r = quat_to_rotation(q)?;
    Ok(covariance_from(&r, log_scale.map(math::exp)))
}

pub(crate) fn covariance_from(r: &Mat3, s: Vec3) -> Mat3 {
    let mut m = *r;
    for row in m.iter_mut() {
        for k in 0..3 {
            row[k] *= s[k];
        }
    }
    math::mat_mul(&m, &math::transpose(&m))
}

/// Intermediates of one projection, kept for the backward pass.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ProjectionCache {
    pub unit_quat: [f64; 4],
    pub quat_norm: f64,
    pub rotation: Mat3,
    pub scale: Vec3,
    pub cov3d: Mat3,
    pub cam_point: Vec3,
    /// `J W_R`, 2x3.
    pub jw: [Vec3; 2],
    /// Unnormalized view direction (Gaussian minus camera centre).
    pub view: Vec3,
    pub dir: Vec3,
    /// Channels where the `max(0, ·)` clamp on colour was active.
    pub color_clamped: [bool; 3],
    pub opacity: f64,
}

pub(crate) fn project_cached(
    g: &Gaussian,
    cam: &Camera,
    sh_degree: usize,
) -> Option<(ProjectedGaussian, ProjectionCache)> {
    let p = cam.world_to_camera(g.position);
    let z = p[2];
    if z <= NEAR_PLANE {
        return None;
    }
    let qn = math::sqrt(g.rotation.iter().map(|v| v * v).sum::<f64>());
    let unit_quat = g.rotation.map(|v| v / qn);
    let rotation = unit_quat_to_rotation(unit_quat);
    let scale = g.log_scale.map(math::exp);
    let cov3d = covariance_from(&rotation, scale);

    let inv_z = 1.0 / z;
    let j = [
        [cam.fx * inv_z, 0.0, -cam.fx * p[0] * inv_z * inv_z],
        [0.0, cam.fy * inv_z, -cam.fy * p[1] * inv_z * inv_z],
    ];
    let w = &cam.rotation;
    let mut jw = [[0.0; 3]; 2];
    for r in 0..2 {
        for c in 0..3 {
            jw[r][c] = j[r][0] * w[0][c] + j[r][1] * w[1][c] + j[r][2] * w[2][c];
        }
    }
    let t0 = math::mat_vec(&cov3d, jw[0]);
    let t1 = math::mat_vec(&cov3d, jw[1]);
    let a = math::dot(jw[0], t0) + COV2D_REGULARIZATION;
    let b = math::dot(jw[0], t1);
    let c = math::dot(jw[1], t1) + COV2D_REGULARIZATION;

    let view = math::sub(g.position, cam.center());
    let dir = math::scale(view, 1.0 / math::norm(view));
    let raw = sh::eval_raw(&g.sh, dir, sh_degree);
    let color_clamped = raw.map(|v| v + 0.5 < 0.0);
    let color = raw.map(|v| (v + 0.5).max(0.0));
    let opacity = math::sigmoid(g.opacity_logit);

    let projected = ProjectedGaussian {
        mean2d: [cam.fx * p[0] * inv_z + cam.cx, cam.fy * p[1] * inv_z + cam.cy],
        cov2d: [[a, b], [b, c]],
        depth: z,
        color,
        alpha: opacity,
    };
    let cache = ProjectionCache {
        unit_quat,
        quat_norm: qn,
        rotation,
        scale,
        cov3d,
        cam_point: p,
        jw,
        view,
        dir,
        color_clamped,
        opacity,
    };
    Some((projected, cache))
}

/// Project a Gaussian into `cam`. Returns `None` when it lies behind the near plane.
pub fn project_gaussian(g: &Gaussian, cam: &Camera, sh_degree: usize) -> Option<ProjectedGaussian> {
    project_cached(g, cam, sh_degree).map(|(p, _)| p)
}
