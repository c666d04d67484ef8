//! Finite-difference checks of the training objective.
//!
//! The renderer is only piecewise smooth. [`near_discontinuity`] flags
//! scenes where a small parameter step could cross one of the kinks (splat
//! cutoff, opacity or pixel clamps, early termination, depth reordering), so
//! that checks run on scenes where finite differences are meaningful.

use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::events::{accumulate, counts_to_log, simulate_events, EventMap, EventModelParams};
use crate::loss::{pair_loss, LossConfig};
use crate::math::{self, logit};
use crate::sh::{coeff_count, rgb_to_dc, MAX_SH_DEGREE};
use crate::raster::{backward, render, Image, ALPHA_MAX, CUTOFF_MAHALANOBIS_SQ, TRANSMITTANCE_MIN};
use crate::scene::{project_gaussian, Camera, Gaussian, Scene};
use crate::GradientSet;

/// Everything needed to evaluate the loss of one training pair.
#[derive(Debug, Clone)]
pub struct PairProblem {
    pub cameras: [Camera; 2],
    pub bright: [Image; 2],
    pub e_gt: EventMap,
    pub loss: LossConfig,
    pub params: EventModelParams,
    pub background: [f64; 3],
}

impl PairProblem {
    pub fn loss(&self, scene: &Scene) -> Result<f64> {
        let r1 = crate::render_image(scene, &self.cameras[0], self.background);
        let r2 = crate::render_image(scene, &self.cameras[1], self.background);
        let pl = pair_loss(&r1, &r2, &self.bright[0], &self.bright[1], &self.e_gt, &self.loss, &self.params)?;
        Ok(pl.total)
    }

    /// Loss and its analytic gradient.
    pub fn loss_and_grad(&self, scene: &Scene) -> Result<(f64, GradientSet)> {
        let (r1, g1) = render(scene, &self.cameras[0], self.background);
        let (r2, g2) = render(scene, &self.cameras[1], self.background);
        let pl = pair_loss(&r1, &r2, &self.bright[0], &self.bright[1], &self.e_gt, &self.loss, &self.params)?;
        let mut grads = backward(&g1, &pl.d_r1, scene, &self.cameras[0])?;
        grads.add_assign(&backward(&g2, &pl.d_r2, scene, &self.cameras[1])?);
        Ok((pl.total, grads))
    }
}

/// Parameter groups in optimizer order.
pub const PARAM_GROUPS: [&str; 5] = ["position", "rotation", "scaling", "opacity", "features"];

/// Number of scalar parameters of `g`.
pub fn param_count(g: &Gaussian) -> usize {
    11 + 3 * g.sh.len()
}

/// Mutable access to scalar `k` of `g`, with its group name.
pub fn param_mut(g: &mut Gaussian, k: usize) -> (&mut f64, &'static str) {
    match k {
        0..=2 => (&mut g.position[k], PARAM_GROUPS[0]),
        3..=6 => (&mut g.rotation[k - 3], PARAM_GROUPS[1]),
        7..=9 => (&mut g.log_scale[k - 7], PARAM_GROUPS[2]),
        10 => (&mut g.opacity_logit, PARAM_GROUPS[3]),
        _ => {
            let j = k - 11;
            (&mut g.sh[j / 3][j % 3], PARAM_GROUPS[4])
        }
    }
}

/// Worst disagreement between analytic and numerical gradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub gaussian: usize,
    pub param: usize,
    pub group: &'static str,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

/// Compare every analytic partial derivative with a fourth-order central
/// difference of step `h`. The relative error of each entry is
/// `|a − n| / max(|a|, |n|, floor)`.
pub fn check_gradients(problem: &PairProblem, scene: &Scene, h: f64, floor: f64) -> Result<GradCheck> {
    let (_, grads) = problem.loss_and_grad(scene)?;
    let mut worst =
        GradCheck { max_rel_error: 0.0, gaussian: 0, param: 0, group: PARAM_GROUPS[0], analytic: 0.0, numeric: 0.0, checked: 0 };
    let mut probe = scene.clone();
    for i in 0..scene.len() {
        for k in 0..param_count(&scene.gaussians[i]) {
            let base = *param_mut(&mut scene.gaussians[i].clone(), k).0;
            let mut at = |offset: f64| -> Result<f64> {
                *param_mut(&mut probe.gaussians[i], k).0 = base + offset;
                let v = problem.loss(&probe);
                *param_mut(&mut probe.gaussians[i], k).0 = base;
                v
            };
            let numeric = (8.0 * (at(h)? - at(-h)?) - (at(2.0 * h)? - at(-2.0 * h)?)) / (12.0 * h);
            let mut g = grads.gaussians[i].clone();
            let (analytic, group) = param_mut(&mut g, k);
            let analytic = *analytic;
            let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor);
            worst.checked += 1;
            if err > worst.max_rel_error || !err.is_finite() {
                worst = GradCheck { max_rel_error: err, gaussian: i, param: k, group, analytic, numeric, checked: worst.checked };
            }
        }
    }
    Ok(worst)
}

/// Whether a parameter change of roughly `margin` (relative) could move the
/// render of `scene` across a non-smooth point.
pub fn near_discontinuity(scene: &Scene, cam: &Camera, background: [f64; 3], margin: f64) -> bool {
    let mut projected = Vec::with_capacity(scene.len());
    for g in &scene.gaussians {
        match project_gaussian(g, cam, scene.sh_degree) {
            Some(p) => projected.push(p),
            // Behind the near plane: only safe well behind the camera.
            None => {
                if cam.world_to_camera(g.position)[2] > -0.1 {
                    return true;
                }
            }
        }
    }
    let mut depths: Vec<f64> = projected.iter().map(|p| p.depth).collect();
    depths.sort_by(f64::total_cmp);
    if depths.windows(2).any(|w| w[1] - w[0] < margin) || depths.first().is_some_and(|d| *d < 0.1) {
        return true;
    }
    for p in &projected {
        if p.color.iter().any(|c| *c < margin) || p.alpha > ALPHA_MAX - margin {
            return true;
        }
        let [[a, b], [_, c]] = p.cov2d;
        let det = a * c - b * b;
        if !(det > 0.0) {
            return true;
        }
        let conic = [c / det, -b / det, a / det];
        for y in 0..cam.height {
            for x in 0..cam.width {
                let dx = x as f64 - p.mean2d[0];
                let dy = y as f64 - p.mean2d[1];
                let m2 = conic[0] * dx * dx + 2.0 * conic[1] * dx * dy + conic[2] * dy * dy;
                if (m2 - CUTOFF_MAHALANOBIS_SQ).abs() < margin * CUTOFF_MAHALANOBIS_SQ {
                    return true;
                }
            }
        }
    }
    let (img, graph) = render(scene, cam, background);
    if img.data.iter().any(|v| *v > 1.0 - margin) {
        return true;
    }
    for y in 0..cam.height {
        for x in 0..cam.width {
            if graph.final_transmittance(x, y) < 10.0 * TRANSMITTANCE_MIN {
                return true;
            }
        }
    }
    false
}

fn random_gaussian(rng: &mut ChaCha8Rng, sh_degree: usize) -> Gaussian {
    let mut rotation: [f64; 4] = [(); 4].map(|_| StandardNormal.sample(rng));
    let n = math::sqrt(rotation.iter().map(|v| v * v).sum());
    rotation.iter_mut().for_each(|v| *v /= n);
    let mut sh = alloc::vec![[0.0; 3]; coeff_count(sh_degree)];
    sh[0] = [(); 3].map(|_| rgb_to_dc(rng.random_range(0.25..0.75)));
    for c in sh.iter_mut().skip(1) {
        *c = [(); 3].map(|_| rng.random_range(-0.05..0.05));
    }
    Gaussian {
        position: [(); 3].map(|_| rng.random_range(-0.5..0.5)),
        rotation,
        log_scale: [(); 3].map(|_| math::ln(rng.random_range(0.12..0.35))),
        opacity_logit: logit(rng.random_range(0.15..0.5)),
        sh,
    }
}

fn perturb(g: &Gaussian, rng: &mut ChaCha8Rng) -> Gaussian {
    let mut out = g.clone();
    out.position.iter_mut().for_each(|v| *v += rng.random_range(-0.05..0.05));
    out.rotation.iter_mut().for_each(|v| *v += rng.random_range(-0.05..0.05));
    out.log_scale.iter_mut().for_each(|v| *v += rng.random_range(-0.1..0.1));
    out.opacity_logit += rng.random_range(-0.2..0.2);
    out.sh.iter_mut().flatten().for_each(|v| *v += rng.random_range(-0.03..0.03));
    out
}

/// A random pair problem with an oracle target and all loss terms active,
/// plus a perturbed copy of the target scene to differentiate at.
///
/// Targets come from a ground-truth scene of up to `max_gaussians` splats
/// viewed by two `size`×`size` cameras 6° apart; the events between the two
/// target frames are simulated. Draws that land near a non-smooth point of
/// the renderer are rejected and redrawn.
pub fn random_pair_problem(seed: u64, max_gaussians: usize, size: u32) -> Result<(PairProblem, Scene)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = EventModelParams::default();
    loop {
        let n = rng.random_range(1..=max_gaussians.max(1));
        let degree = rng.random_range(0..=MAX_SH_DEGREE);
        let target = Scene { sh_degree: degree, gaussians: (0..n).map(|_| random_gaussian(&mut rng, degree)).collect() };
        let scene = Scene { sh_degree: degree, gaussians: target.gaussians.iter().map(|g| perturb(g, &mut rng)).collect() };
        let theta = rng.random_range(0.0..2.0 * PI);
        let focal = 1.25 * size as f64;
        let cameras = [0.0, PI / 30.0].map(|d| {
            let eye = [3.0 * math::cos(theta + d), 3.0 * math::sin(theta + d), 0.5];
            Camera::look_at(eye, [0.0; 3], [0.0, 0.0, 1.0], focal, focal, size, size, d / PI)
        });
        let bg = [0.0; 3];
        if cameras.iter().any(|c| near_discontinuity(&scene, c, bg, 1e-3)) {
            continue;
        }
        let bright = [crate::render_image(&target, &cameras[0], bg), crate::render_image(&target, &cameras[1], bg)];
        let (t1, t2) = (cameras[0].timestamp, cameras[1].timestamp);
        let events = simulate_events(&bright[0], &bright[1], t1, t2, &params)?;
        let e_gt = counts_to_log(&accumulate(&events, t1, t2)?, params.epsilon)?;
        let problem = PairProblem { cameras, bright, e_gt, loss: LossConfig::default(), params, background: bg };
        return Ok((problem, scene));
    }
}
