//! Optimization loop: random initialization, per-group Adam, optional
//! densification, metrics, and the loss ablation harness.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::events::{accumulate, counts_to_log, y_noise_filter, EventMap, EventModelParams, NoiseFilterParams};
use crate::loss::{pair_loss, LossConfig, LossParts};
use crate::math::{self, logit, Vec3};
use crate::metrics::{psnr, ssim};
use crate::provider::{FrameRef, PseudoBrightSource};
use crate::raster::{backward, render, render_image, GradientSet};
use crate::scene::{Bounds, Gaussian, Scene};
use crate::sh::{self, rgb_to_dc};
use crate::synth::Dataset;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensifyConfig {
    pub enabled: bool,
    /// Iterations between densification passes.
    pub interval: usize,
    /// First iteration at which densification may run.
    pub start: usize,
    /// Densification stops after this fraction of the total iterations.
    pub stop_fraction: f64,
    /// Mean screen-space positional gradient norm that triggers split/clone.
    pub grad_threshold: f64,
    /// Gaussians with activated opacity below this are removed.
    pub prune_opacity: f64,
    /// Gaussians whose largest scale exceeds this fraction of the bounds
    /// diagonal are split; smaller ones are cloned.
    pub dense_fraction: f64,
}

impl Default for DensifyConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            interval: 300,
            start: 500,
            stop_fraction: 0.7,
            grad_threshold: 2e-4,
            prune_opacity: 0.005,
            dense_fraction: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub iterations: usize,
    pub init_points: usize,
    pub lr_position_start: f64,
    pub lr_position_end: f64,
    pub lr_features: f64,
    pub lr_opacity: f64,
    pub lr_scaling: f64,
    pub lr_rotation: f64,
    pub loss: LossConfig,
    pub event_params: EventModelParams,
    pub filter: NoiseFilterParams,
    pub densify: DensifyConfig,
    pub seed: u64,
    pub sh_degree: usize,
    pub background: [f64; 3],
    /// Every n-th view (starting at 0) is held out of training; 0 disables.
    pub holdout_every: usize,
    pub log_interval: usize,
    /// Number of initial iterations during which the event and mix terms are
    /// switched off. Only applies when the frame term is enabled.
    pub aux_warmup: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 30_000,
            init_points: 1000,
            lr_position_start: 1.6e-4,
            lr_position_end: 1.6e-6,
            lr_features: 2.5e-3,
            lr_opacity: 5e-2,
            lr_scaling: 5e-3,
            lr_rotation: 1e-3,
            loss: LossConfig::default(),
            event_params: EventModelParams::default(),
            filter: NoiseFilterParams::default(),
            densify: DensifyConfig::default(),
            seed: 0,
            sh_degree: 1,
            background: [0.0; 3],
            holdout_every: 6,
            log_interval: 100,
            aux_warmup: 500,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let lrs = [
            self.lr_position_start,
            self.lr_position_end,
            self.lr_features,
            self.lr_opacity,
            self.lr_scaling,
            self.lr_rotation,
        ];
        if lrs.iter().any(|lr| !(*lr > 0.0)) {
            return Err(invalid("learning rates must be positive"));
        }
        if self.lr_position_end > self.lr_position_start {
            return Err(invalid("position learning rate must not increase"));
        }
        if self.sh_degree > sh::MAX_SH_DEGREE {
            return Err(invalid("SH degree must be in 0..=3"));
        }
        if self.init_points == 0 {
            return Err(invalid("init_points must be positive"));
        }
        self.loss.validate()?;
        self.event_params.validate()?;
        self.filter.validate()
    }

    /// Loss weights in effect at 1-based iteration `it`.
    pub fn loss_at(&self, it: usize) -> LossConfig {
        if self.loss.holistic && it <= self.aux_warmup {
            LossConfig { lambda1: 0.0, lambda2: 0.0, holistic: true }
        } else {
            self.loss
        }
    }

    pub fn is_held_out(&self, view: usize) -> bool {
        self.holdout_every > 0 && view % self.holdout_every == 0
    }
}

/// Optimizer state: the scene plus Adam moments stored in the same layout.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub scene: Scene,
    pub first_moment: Vec<Gaussian>,
    pub second_moment: Vec<Gaussian>,
    /// Completed optimizer steps.
    pub iteration: usize,
}

fn zero_like(g: &Gaussian) -> Gaussian {
    Gaussian {
        position: [0.0; 3],
        rotation: [0.0; 4],
        log_scale: [0.0; 3],
        opacity_logit: 0.0,
        sh: vec![[0.0; 3]; g.sh.len()],
    }
}

impl TrainState {
    pub fn new(scene: Scene) -> Self {
        let zeros: Vec<Gaussian> = scene.gaussians.iter().map(zero_like).collect();
        Self { first_moment: zeros.clone(), second_moment: zeros, scene, iteration: 0 }
    }
}

/// `n` Gaussians uniformly placed in `bounds`, isotropic at 5% of the bounds
/// diagonal, opacity 0.1, random base colour.
pub fn init_random_cloud(n: usize, bounds: &Bounds, sh_degree: usize, seed: u64) -> Result<Scene> {
    if n == 0 {
        return Err(invalid("point count must be positive"));
    }
    if (0..3).any(|k| !(bounds.max[k] > bounds.min[k])) {
        return Err(invalid("bounds must have positive extent on every axis"));
    }
    if sh_degree > sh::MAX_SH_DEGREE {
        return Err(invalid("SH degree must be in 0..=3"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let log_scale = math::ln(0.05 * bounds.diagonal());
    let k = sh::coeff_count(sh_degree);
    let gaussians = (0..n)
        .map(|_| {
            let position: Vec3 = core::array::from_fn(|a| rng.random_range(bounds.min[a]..=bounds.max[a]));
            let mut coeffs = vec![[0.0; 3]; k];
            coeffs[0] = [(); 3].map(|_| rgb_to_dc(rng.random_range(0.0..=1.0)));
            Gaussian {
                position,
                rotation: [1.0, 0.0, 0.0, 0.0],
                log_scale: [log_scale; 3],
                opacity_logit: logit(0.1),
                sh: coeffs,
            }
        })
        .collect();
    Ok(Scene { sh_degree, gaussians })
}

/// Log-linear decay from `start` at iteration 0 to `end` at `total`.
pub fn position_lr(iter: usize, total: usize, start: f64, end: f64) -> f64 {
    if total == 0 {
        return start;
    }
    let t = (iter.min(total)) as f64 / total as f64;
    start * math::powf(end / start, t)
}

struct AdamGroup {
    lr: f64,
    bias1: f64,
    bias2: f64,
}

impl AdamGroup {
    #[inline]
    fn update(&self, p: &mut f64, m: &mut f64, v: &mut f64, g: f64) {
        *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
        *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = *m / self.bias1;
        let v_hat = *v / self.bias2;
        *p -= self.lr * m_hat / (math::sqrt(v_hat) + ADAM_EPSILON);
    }
}

fn first_non_finite_group(grads: &GradientSet) -> Option<&'static str> {
    let gs = &grads.gaussians;
    if gs.iter().any(|g| g.position.iter().any(|v| !v.is_finite())) {
        return Some("position");
    }
    if gs.iter().any(|g| g.rotation.iter().any(|v| !v.is_finite())) {
        return Some("rotation");
    }
    if gs.iter().any(|g| g.log_scale.iter().any(|v| !v.is_finite())) {
        return Some("scaling");
    }
    if gs.iter().any(|g| !g.opacity_logit.is_finite()) {
        return Some("opacity");
    }
    if gs.iter().any(|g| g.sh.iter().flatten().any(|v| !v.is_finite())) {
        return Some("features");
    }
    None
}

/// One bias-corrected Adam step with per-group learning rates. Quaternions
/// are re-normalized afterwards.
pub fn adam_step(state: &mut TrainState, grads: &GradientSet, config: &TrainConfig) -> Result<()> {
    if grads.len() != state.scene.len() {
        return Err(invalid("gradient set does not match the scene"));
    }
    if let Some(group) = first_non_finite_group(grads) {
        return Err(Error::TrainingDiverged {
            iteration: state.iteration,
            reason: alloc::format!("non-finite gradient in parameter group `{group}`"),
        });
    }
    let t = (state.iteration + 1) as i32;
    let bias1 = 1.0 - libm::pow(ADAM_BETA1, t as f64);
    let bias2 = 1.0 - libm::pow(ADAM_BETA2, t as f64);
    let group = |lr| AdamGroup { lr, bias1, bias2 };
    let pos = group(position_lr(
        state.iteration,
        config.iterations,
        config.lr_position_start,
        config.lr_position_end,
    ));
    let feat = group(config.lr_features);
    let opac = group(config.lr_opacity);
    let scal = group(config.lr_scaling);
    let rot = group(config.lr_rotation);

    for (((p, m), v), g) in state
        .scene
        .gaussians
        .iter_mut()
        .zip(state.first_moment.iter_mut())
        .zip(state.second_moment.iter_mut())
        .zip(&grads.gaussians)
    {
        for k in 0..3 {
            pos.update(&mut p.position[k], &mut m.position[k], &mut v.position[k], g.position[k]);
            scal.update(&mut p.log_scale[k], &mut m.log_scale[k], &mut v.log_scale[k], g.log_scale[k]);
        }
        for k in 0..4 {
            rot.update(&mut p.rotation[k], &mut m.rotation[k], &mut v.rotation[k], g.rotation[k]);
        }
        opac.update(&mut p.opacity_logit, &mut m.opacity_logit, &mut v.opacity_logit, g.opacity_logit);
        for j in 0..p.sh.len() {
            for ch in 0..3 {
                feat.update(&mut p.sh[j][ch], &mut m.sh[j][ch], &mut v.sh[j][ch], g.sh[j][ch]);
            }
        }
        let n = math::sqrt(p.rotation.iter().map(|x| x * x).sum());
        if n > 0.0 {
            p.rotation.iter_mut().for_each(|x| *x /= n);
        } else {
            p.rotation = [1.0, 0.0, 0.0, 0.0];
        }
    }
    state.iteration += 1;
    Ok(())
}

/// Running screen-space gradient statistics used to pick densification candidates.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DensifyStats {
    pub grad_norm_sum: Vec<f64>,
    pub observations: Vec<u32>,
}

impl DensifyStats {
    pub fn new(n: usize) -> Self {
        Self { grad_norm_sum: vec![0.0; n], observations: vec![0; n] }
    }

    /// Record one render's gradients; `visible[i]` marks Gaussians that were drawn.
    pub fn record(&mut self, grads: &GradientSet, visible: &[bool]) {
        for (i, g) in grads.screen_mean.iter().enumerate() {
            if visible[i] {
                self.grad_norm_sum[i] += math::sqrt(g[0] * g[0] + g[1] * g[1]);
                self.observations[i] += 1;
            }
        }
    }

    fn mean(&self, i: usize) -> f64 {
        if self.observations[i] == 0 {
            0.0
        } else {
            self.grad_norm_sum[i] / self.observations[i] as f64
        }
    }
}

/// Outcome of one densification pass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DensifyReport {
    pub split: usize,
    pub cloned: usize,
    pub pruned: usize,
}

/// Split or clone Gaussians with large mean screen-space gradients, then
/// drop nearly transparent ones. New Gaussians start with zero moments.
pub fn densify_and_prune(
    state: &mut TrainState,
    stats: &DensifyStats,
    config: &DensifyConfig,
    bounds: &Bounds,
) -> Result<DensifyReport> {
    let n = state.scene.len();
    if stats.grad_norm_sum.len() != n || stats.observations.len() != n {
        return Err(invalid("densification statistics do not match the scene"));
    }
    let large = config.dense_fraction * bounds.diagonal();
    let mut report = DensifyReport::default();
    let mut gaussians = Vec::with_capacity(n);
    let mut m1 = Vec::with_capacity(n);
    let mut m2 = Vec::with_capacity(n);
    let old = core::mem::take(&mut state.scene.gaussians);
    let old_m1 = core::mem::take(&mut state.first_moment);
    let old_m2 = core::mem::take(&mut state.second_moment);
    let mut born = Vec::new();
    for (i, ((g, a), b)) in old.into_iter().zip(old_m1).zip(old_m2).enumerate() {
        if stats.mean(i) <= config.grad_threshold {
            gaussians.push(g);
            m1.push(a);
            m2.push(b);
            continue;
        }
        let scale = g.scale();
        let (axis, &sigma) = scale
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.total_cmp(y.1))
            .expect("three axes");
        if sigma > large {
            let r = crate::scene::quat_to_rotation(g.rotation)?;
            let dir = [r[0][axis], r[1][axis], r[2][axis]];
            for sign in [-1.0, 1.0] {
                let mut child = g.clone();
                child.position = math::add(g.position, math::scale(dir, sign * 0.5 * sigma));
                child.log_scale = g.log_scale.map(|s| s - math::ln(1.6));
                born.push(child);
            }
            report.split += 1;
        } else {
            born.push(g.clone());
            gaussians.push(g);
            m1.push(a);
            m2.push(b);
            report.cloned += 1;
        }
    }
    for g in born {
        m1.push(zero_like(&g));
        m2.push(zero_like(&g));
        gaussians.push(g);
    }
    let mut keep = gaussians.iter().map(|g| g.opacity() >= config.prune_opacity);
    let mask: Vec<bool> = keep.by_ref().collect();
    report.pruned = mask.iter().filter(|k| !**k).count();
    let filter = |v: Vec<Gaussian>| v.into_iter().zip(&mask).filter(|(_, k)| **k).map(|(g, _)| g).collect::<Vec<_>>();
    state.scene.gaussians = filter(gaussians);
    state.first_moment = filter(m1);
    state.second_moment = filter(m2);
    if state.scene.is_empty() {
        log::warn!("densify_and_prune removed every Gaussian; training is degenerate");
    }
    Ok(report)
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub iteration: usize,
    pub loss_total: f64,
    pub loss_hol: f64,
    pub loss_event: f64,
    pub loss_mix: f64,
    /// Mean PSNR over held-out views, when bright ground truth exists.
    pub psnr: Option<f64>,
    pub n_gaussians: usize,
}

/// Hooks invoked while training runs.
pub trait TrainObserver {
    fn on_metrics(&mut self, _row: &MetricsRow) {}
    fn on_iteration(&mut self, _iteration: usize, _scene: &Scene) {}
}

/// Observer that ignores everything.
pub struct NoopObserver;

impl TrainObserver for NoopObserver {}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutput {
    pub scene: Scene,
    pub metrics: Vec<MetricsRow>,
}

/// Consecutive training-view pairs `(a, b)` along the trajectory.
pub fn training_pairs(dataset: &Dataset, config: &TrainConfig) -> Vec<(usize, usize)> {
    let views: Vec<usize> = (0..dataset.len()).filter(|v| !config.is_held_out(*v)).collect();
    views.windows(2).map(|w| (w[0], w[1])).collect()
}

pub fn held_out_views(dataset: &Dataset, config: &TrainConfig) -> Vec<usize> {
    (0..dataset.len()).filter(|v| config.is_held_out(*v)).collect()
}

/// Supervisory event maps (log units) for every training pair, built from
/// the filtered stream.
pub fn supervisory_maps(dataset: &Dataset, config: &TrainConfig, pairs: &[(usize, usize)]) -> Result<Vec<EventMap>> {
    let filtered = y_noise_filter(&dataset.events, &config.filter)?;
    pairs
        .iter()
        .map(|&(a, b)| {
            let counts = accumulate(&filtered, dataset.cameras[a].timestamp, dataset.cameras[b].timestamp)?;
            counts_to_log(&counts, config.event_params.epsilon)
        })
        .collect()
}

/// Mean PSNR and SSIM of renders of `views` against the bright frames.
pub fn evaluate_views(scene: &Scene, dataset: &Dataset, views: &[usize], background: [f64; 3]) -> Result<(f64, f64)> {
    let bright = dataset
        .bright_frames
        .as_ref()
        .ok_or_else(|| Error::Configuration("evaluation needs bright frames".into()))?;
    if views.is_empty() {
        return Err(Error::Configuration("no views to evaluate".into()));
    }
    let (mut p, mut s) = (0.0, 0.0);
    for &v in views {
        let img = render_image(scene, &dataset.cameras[v], background);
        p += psnr(&img, &bright[v])?;
        s += ssim(&img, &bright[v])?;
    }
    Ok((p / views.len() as f64, s / views.len() as f64))
}

fn diverged(iteration: usize, reason: impl Into<String>) -> Error {
    Error::TrainingDiverged { iteration, reason: reason.into() }
}

/// Run the full optimization. With `iterations == 0` the initial cloud is returned.
pub fn train(
    dataset: &Dataset,
    config: &TrainConfig,
    provider: &dyn PseudoBrightSource,
    observer: &mut dyn TrainObserver,
) -> Result<TrainOutput> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(invalid("dataset has no views"));
    }
    let init = init_random_cloud(config.init_points, &dataset.bounds, config.sh_degree, config.seed)?;
    train_from(dataset, config, provider, observer, init)
}

/// Like [`train`], but starting from a given scene instead of a random cloud.
pub fn train_from(
    dataset: &Dataset,
    config: &TrainConfig,
    provider: &dyn PseudoBrightSource,
    observer: &mut dyn TrainObserver,
    init: Scene,
) -> Result<TrainOutput> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(invalid("dataset has no views"));
    }
    dataset.validate()?;
    init.validate()?;
    if init.sh_degree != config.sh_degree {
        return Err(invalid("initial scene SH degree differs from the configuration"));
    }
    let mut state = TrainState::new(init);
    let mut metrics = Vec::new();
    if config.iterations == 0 {
        return Ok(TrainOutput { scene: state.scene, metrics });
    }

    let pairs = training_pairs(dataset, config);
    if pairs.is_empty() {
        return Err(invalid("dataset has fewer than two training views"));
    }
    let e_gt = supervisory_maps(dataset, config, &pairs)?;
    let held_out = held_out_views(dataset, config);
    let can_eval = dataset.bright_frames.is_some() && !held_out.is_empty();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(2);
    let mut stats = DensifyStats::new(state.scene.len());
    let densify_stop = (config.densify.stop_fraction * config.iterations as f64) as usize;
    let mut window = LossParts::default();
    let mut window_total = 0.0;
    let mut window_len = 0usize;

    for it in 1..=config.iterations {
        let pair_idx = rng.random_range(0..pairs.len());
        let (a, b) = pairs[pair_idx];
        let (cam_a, cam_b) = (&dataset.cameras[a], &dataset.cameras[b]);
        let (r1, g1) = render(&state.scene, cam_a, config.background);
        let (r2, g2) = render(&state.scene, cam_b, config.background);
        let pb = provider.pair(
            FrameRef { view: a, timestamp: cam_a.timestamp, dark: &dataset.dark_frames[a] },
            FrameRef { view: b, timestamp: cam_b.timestamp, dark: &dataset.dark_frames[b] },
            &e_gt[pair_idx],
        )?;
        let loss_cfg = config.loss_at(it);
        let pl = pair_loss(&r1, &r2, &pb.b1, &pb.b2, &e_gt[pair_idx], &loss_cfg, &config.event_params)?;
        if !pl.total.is_finite() {
            return Err(diverged(it, "non-finite loss"));
        }
        let mut grads = backward(&g1, &pl.d_r1, &state.scene, cam_a)?;
        let grads_b = backward(&g2, &pl.d_r2, &state.scene, cam_b)?;
        if config.densify.enabled {
            let mut vis = vec![false; state.scene.len()];
            for s in 0..g1.visible_count() {
                vis[g1.gaussian_index(s as u32)] = true;
            }
            stats.record(&grads, &vis);
            vis.iter_mut().for_each(|v| *v = false);
            for s in 0..g2.visible_count() {
                vis[g2.gaussian_index(s as u32)] = true;
            }
            stats.record(&grads_b, &vis);
        }
        grads.add_assign(&grads_b);
        adam_step(&mut state, &grads, config).map_err(|e| match e {
            Error::TrainingDiverged { reason, .. } => diverged(it, reason),
            other => other,
        })?;
        if state.scene.gaussians.iter().any(|g| !g.is_finite()) {
            return Err(diverged(it, "non-finite parameters after update"));
        }

        let d = &config.densify;
        if d.enabled && it >= d.start && it <= densify_stop && d.interval > 0 && it % d.interval == 0 {
            let report = densify_and_prune(&mut state, &stats, d, &dataset.bounds)?;
            log::debug!("iteration {it}: densify {report:?}, {} gaussians", state.scene.len());
            stats = DensifyStats::new(state.scene.len());
        }

        window.hol += pl.parts.hol;
        window.event += pl.parts.event;
        window.mix += pl.parts.mix;
        window_total += pl.total;
        window_len += 1;
        let log_now = (config.log_interval > 0 && it % config.log_interval == 0) || it == config.iterations;
        if log_now {
            let n = window_len as f64;
            let psnr = if can_eval {
                Some(evaluate_psnr(&state.scene, dataset, &held_out, config.background)?)
            } else {
                None
            };
            let row = MetricsRow {
                iteration: it,
                loss_total: window_total / n,
                loss_hol: window.hol / n,
                loss_event: window.event / n,
                loss_mix: window.mix / n,
                psnr,
                n_gaussians: state.scene.len(),
            };
            observer.on_metrics(&row);
            metrics.push(row);
            window = LossParts::default();
            window_total = 0.0;
            window_len = 0;
        }
        observer.on_iteration(it, &state.scene);
    }
    Ok(TrainOutput { scene: state.scene, metrics })
}

fn evaluate_psnr(scene: &Scene, dataset: &Dataset, views: &[usize], background: [f64; 3]) -> Result<f64> {
    let bright = dataset.bright_frames.as_ref().expect("checked by caller");
    let mut total = 0.0;
    for &v in views {
        total += psnr(&render_image(scene, &dataset.cameras[v], background), &bright[v])?;
    }
    Ok(total / views.len() as f64)
}

/// Which loss terms an ablation run keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LossSelection {
    pub hol: bool,
    pub event: bool,
    pub mix: bool,
}

/// The seven non-empty term subsets in the order of the published ablation
/// table: singles, then pairs, then all three.
pub const ABLATION_ROWS: [LossSelection; 7] = [
    LossSelection { hol: true, event: false, mix: false },
    LossSelection { hol: false, event: true, mix: false },
    LossSelection { hol: false, event: false, mix: true },
    LossSelection { hol: true, event: true, mix: false },
    LossSelection { hol: true, event: false, mix: true },
    LossSelection { hol: false, event: true, mix: true },
    LossSelection { hol: true, event: true, mix: true },
];

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub selection: LossSelection,
    pub psnr: f64,
    pub ssim: f64,
}

impl LossSelection {
    /// Apply this selection to a base configuration; disabled terms get zero weight.
    pub fn apply(&self, base: &TrainConfig) -> TrainConfig {
        let mut cfg = base.clone();
        cfg.loss.holistic = self.hol;
        if !self.event {
            cfg.loss.lambda1 = 0.0;
        }
        if !self.mix {
            cfg.loss.lambda2 = 0.0;
        }
        cfg
    }
}

/// Train once per selection and score held-out views.
pub fn ablate_rows(
    dataset: &Dataset,
    base: &TrainConfig,
    provider: &dyn PseudoBrightSource,
    rows: &[LossSelection],
) -> Result<Vec<AblationRow>> {
    let views = held_out_views(dataset, base);
    rows.iter()
        .map(|sel| {
            let cfg = sel.apply(base);
            let out = train(dataset, &cfg, provider, &mut NoopObserver)?;
            let (psnr, ssim) = evaluate_views(&out.scene, dataset, &views, cfg.background)?;
            Ok(AblationRow { selection: *sel, psnr, ssim })
        })
        .collect()
}

/// All seven rows of the loss ablation.
pub fn ablate(dataset: &Dataset, base: &TrainConfig, provider: &dyn PseudoBrightSource) -> Result<Vec<AblationRow>> {
    ablate_rows(dataset, base, provider, &ABLATION_ROWS)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn unit_bounds() -> Bounds {
        Bounds { min: [-1.0; 3], max: [1.0; 3] }
    }

    #[test]
    fn random_cloud_contract() {
        let b = unit_bounds();
        let s = init_random_cloud(1000, &b, 1, 3).unwrap();
        assert_eq!(s.len(), 1000);
        assert!(s.gaussians.iter().all(|g| b.contains(g.position)));
        assert_eq!(s, init_random_cloud(1000, &b, 1, 3).unwrap());
        let g = &s.gaussians[0];
        assert_abs_diff_eq!(g.opacity(), 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(g.scale()[0], 0.05 * b.diagonal(), epsilon = 1e-12);
        assert!(g.sh[1..].iter().flatten().all(|v| *v == 0.0));
        assert!(init_random_cloud(0, &b, 1, 0).is_err());
    }

    #[test]
    fn position_schedule() {
        assert_abs_diff_eq!(position_lr(0, 30_000, 1.6e-4, 1.6e-6), 1.6e-4, epsilon = 1e-18);
        assert_abs_diff_eq!(position_lr(30_000, 30_000, 1.6e-4, 1.6e-6), 1.6e-6, epsilon = 1e-18);
        assert_abs_diff_eq!(position_lr(15_000, 30_000, 1.6e-4, 1.6e-6), 1.6e-5, epsilon = 1e-17);
    }

    fn one_gaussian_state() -> TrainState {
        TrainState::new(init_random_cloud(1, &unit_bounds(), 1, 0).unwrap())
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut state = one_gaussian_state();
        let before = state.scene.clone();
        let mut grads = GradientSet::zeros_like(&state.scene);
        grads.gaussians[0].opacity_logit = 1.0;
        let cfg = TrainConfig::default();
        adam_step(&mut state, &grads, &cfg).unwrap();
        let delta = state.scene.gaussians[0].opacity_logit - before.gaussians[0].opacity_logit;
        assert_abs_diff_eq!(delta, -cfg.lr_opacity / (1.0 + ADAM_EPSILON), epsilon = 1e-15);
        assert_eq!(state.scene.gaussians[0].position, before.gaussians[0].position);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut state = one_gaussian_state();
        let before = state.scene.clone();
        let grads = GradientSet::zeros_like(&state.scene);
        adam_step(&mut state, &grads, &TrainConfig::default()).unwrap();
        assert_eq!(state.scene, before);
        assert_eq!(state.iteration, 1);
    }

    #[test]
    fn rotation_stays_normalized() {
        let mut state = one_gaussian_state();
        let mut grads = GradientSet::zeros_like(&state.scene);
        grads.gaussians[0].rotation = [0.3, -2.0, 0.7, 5.0];
        for _ in 0..5 {
            adam_step(&mut state, &grads, &TrainConfig::default()).unwrap();
            let n: f64 = state.scene.gaussians[0].rotation.iter().map(|v| v * v).sum();
            assert_abs_diff_eq!(n, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn non_finite_gradient_names_group() {
        let mut state = one_gaussian_state();
        let mut grads = GradientSet::zeros_like(&state.scene);
        grads.gaussians[0].log_scale[1] = f64::NAN;
        match adam_step(&mut state, &grads, &TrainConfig::default()) {
            Err(Error::TrainingDiverged { reason, .. }) => assert!(reason.contains("scaling")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn adam_commutes_with_permutation() {
        let scene = init_random_cloud(5, &unit_bounds(), 1, 9).unwrap();
        let mut grads = GradientSet::zeros_like(&scene);
        for (i, g) in grads.gaussians.iter_mut().enumerate() {
            g.position = [i as f64, -0.5, 0.25];
            g.opacity_logit = 0.1 * i as f64;
            g.sh[0] = [0.2, -(i as f64), 1.0];
        }
        let perm = [3usize, 0, 4, 1, 2];
        let mut a = TrainState::new(scene.clone());
        let mut b = TrainState::new(Scene {
            sh_degree: 1,
            gaussians: perm.iter().map(|&i| scene.gaussians[i].clone()).collect(),
        });
        let pg = GradientSet {
            gaussians: perm.iter().map(|&i| grads.gaussians[i].clone()).collect(),
            screen_mean: perm.iter().map(|&i| grads.screen_mean[i]).collect(),
        };
        let cfg = TrainConfig::default();
        for _ in 0..3 {
            adam_step(&mut a, &grads, &cfg).unwrap();
            adam_step(&mut b, &pg, &cfg).unwrap();
        }
        for (k, &i) in perm.iter().enumerate() {
            assert_eq!(b.scene.gaussians[k], a.scene.gaussians[i]);
        }
    }

    fn densify_cfg() -> DensifyConfig {
        DensifyConfig { enabled: true, ..Default::default() }
    }

    #[test]
    fn densify_without_candidates_is_noop() {
        let mut state = TrainState::new(init_random_cloud(4, &unit_bounds(), 0, 1).unwrap());
        let before = state.clone();
        let stats = DensifyStats::new(4);
        let report = densify_and_prune(&mut state, &stats, &densify_cfg(), &unit_bounds()).unwrap();
        assert_eq!(report, DensifyReport::default());
        assert_eq!(state, before);
    }

    #[test]
    fn large_gaussian_is_split_in_two() {
        let mut state = TrainState::new(init_random_cloud(3, &unit_bounds(), 0, 1).unwrap());
        let parent = state.scene.gaussians[1].clone();
        let mut stats = DensifyStats::new(3);
        stats.grad_norm_sum[1] = 1.0;
        stats.observations[1] = 1;
        let report = densify_and_prune(&mut state, &stats, &densify_cfg(), &unit_bounds()).unwrap();
        assert_eq!(report.split, 1);
        assert_eq!(state.scene.len(), 4);
        assert_eq!(state.first_moment.len(), 4);
        let children = &state.scene.gaussians[2..];
        let sigma = parent.scale()[0];
        for c in children {
            assert_abs_diff_eq!(math::norm(math::sub(c.position, parent.position)), 0.5 * sigma, epsilon = 1e-12);
            assert_abs_diff_eq!(c.scale()[0], sigma / 1.6, epsilon = 1e-12);
        }
    }

    #[test]
    fn small_gaussian_is_cloned() {
        let mut scene = init_random_cloud(2, &unit_bounds(), 0, 1).unwrap();
        scene.gaussians[0].log_scale = [math::ln(1e-3); 3];
        let mut state = TrainState::new(scene);
        let mut stats = DensifyStats::new(2);
        stats.grad_norm_sum[0] = 1.0;
        stats.observations[0] = 2;
        let report = densify_and_prune(&mut state, &stats, &densify_cfg(), &unit_bounds()).unwrap();
        assert_eq!(report.cloned, 1);
        assert_eq!(state.scene.len(), 3);
        assert_eq!(state.scene.gaussians[2], state.scene.gaussians[0]);
    }

    #[test]
    fn transparent_gaussians_are_pruned() {
        let mut scene = init_random_cloud(3, &unit_bounds(), 0, 1).unwrap();
        scene.gaussians.iter_mut().for_each(|g| g.opacity_logit = logit(0.001));
        let mut state = TrainState::new(scene);
        let report = densify_and_prune(&mut state, &DensifyStats::new(3), &densify_cfg(), &unit_bounds()).unwrap();
        assert_eq!(report.pruned, 3);
        assert!(state.scene.is_empty());
    }

    #[test]
    fn ablation_rows_follow_table_order() {
        let pattern: Vec<(bool, bool, bool)> = ABLATION_ROWS.iter().map(|r| (r.hol, r.event, r.mix)).collect();
        assert_eq!(
            pattern,
            vec![
                (true, false, false),
                (false, true, false),
                (false, false, true),
                (true, true, false),
                (true, false, true),
                (false, true, true),
                (true, true, true),
            ]
        );
        let base = TrainConfig::default();
        let cfg = ABLATION_ROWS[1].apply(&base);
        assert!(!cfg.loss.holistic);
        assert_eq!(cfg.loss.lambda1, 0.25);
        assert_eq!(cfg.loss.lambda2, 0.0);
    }

    #[test]
    fn shipped_defaults() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.iterations, 30_000);
        assert_eq!(cfg.init_points, 1000);
        assert_eq!((cfg.lr_position_start, cfg.lr_position_end), (1.6e-4, 1.6e-6));
        assert_eq!((cfg.lr_features, cfg.lr_opacity, cfg.lr_scaling, cfg.lr_rotation), (2.5e-3, 5e-2, 5e-3, 1e-3));
        assert_eq!((cfg.loss.lambda1, cfg.loss.lambda2), (0.25, 0.25));
        assert_eq!((cfg.event_params.gamma, cfg.event_params.kappa), (2.2, 1e-5));
    }
}
