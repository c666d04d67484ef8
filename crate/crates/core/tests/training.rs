use darksplat_core::loss::loss_hol;
use darksplat_core::provider::ProviderMode;
use darksplat_core::synth::generate_turntable;
use darksplat_core::train::{ablate, init_random_cloud, training_pairs, TrainObserver, ABLATION_ROWS};
use darksplat_core::{
    render_image, train, Dataset, Error, ProviderConfig, PseudoBrightProvider, Scene, TrainConfig, TurntableConfig,
};

fn small_dataset(seed: u64) -> Dataset {
    let cfg = TurntableConfig { views: 12, width: 24, height: 24, focal: 27.0, seed, ..Default::default() };
    generate_turntable(&cfg).unwrap().1
}

fn oracle(d: &Dataset) -> PseudoBrightProvider {
    let cfg = ProviderConfig { mode: ProviderMode::Oracle, ..Default::default() };
    PseudoBrightProvider::new(cfg, d.bright_frames.clone()).unwrap()
}

fn quick_config(seed: u64) -> TrainConfig {
    TrainConfig { iterations: 20, init_points: 100, seed, log_interval: 5, ..Default::default() }
}

/// Scenes captured every `every` iterations.
struct Snapshots {
    every: usize,
    scenes: Vec<Scene>,
    sizes: Vec<usize>,
}

impl TrainObserver for Snapshots {
    fn on_iteration(&mut self, iteration: usize, scene: &Scene) {
        self.sizes.push(scene.len());
        if iteration % self.every == 0 {
            self.scenes.push(scene.clone());
        }
    }
}

fn full_batch_hol(scene: &Scene, d: &Dataset, views: &[usize]) -> f64 {
    let bright = d.bright_frames.as_ref().unwrap();
    let total: f64 = views
        .iter()
        .map(|&v| loss_hol(&render_image(scene, &d.cameras[v], [0.0; 3]), &bright[v]).unwrap().0)
        .sum();
    total / views.len() as f64
}

#[test]
fn image_only_training_decreases_loss_on_most_seeds() {
    let mut monotone = 0;
    for seed in 0..20 {
        let (_, d) = generate_turntable(&TurntableConfig { seed, ..Default::default() }).unwrap();
        let mut cfg = TrainConfig { iterations: 100, seed, ..Default::default() };
        cfg.loss.lambda1 = 0.0;
        cfg.loss.lambda2 = 0.0;
        let mut views: Vec<usize> = training_pairs(&d, &cfg).into_iter().flat_map(|(a, b)| [a, b]).collect();
        views.dedup();
        let init = init_random_cloud(cfg.init_points, &d.bounds, cfg.sh_degree, seed).unwrap();
        let mut snaps = Snapshots { every: 10, scenes: vec![init], sizes: Vec::new() };
        train(&d, &cfg, &oracle(&d), &mut snaps).unwrap();
        let losses: Vec<f64> = snaps.scenes.iter().map(|s| full_batch_hol(s, &d, &views)).collect();
        if losses.windows(2).all(|w| w[1] <= w[0]) {
            monotone += 1;
        } else {
            eprintln!("seed {seed}: {losses:?}");
        }
    }
    assert!(monotone >= 19, "monotone on {monotone}/20 seeds");
}

#[test]
fn cardinality_is_constant_without_densification() {
    let d = small_dataset(1);
    let cfg = quick_config(1);
    let mut snaps = Snapshots { every: usize::MAX, scenes: Vec::new(), sizes: Vec::new() };
    let out = train(&d, &cfg, &oracle(&d), &mut snaps).unwrap();
    assert_eq!(snaps.sizes.len(), cfg.iterations);
    assert!(snaps.sizes.iter().all(|n| *n == cfg.init_points));
    assert_eq!(out.scene.len(), cfg.init_points);
}

#[test]
fn zero_iterations_return_the_initial_cloud() {
    let d = small_dataset(2);
    let cfg = TrainConfig { iterations: 0, ..quick_config(2) };
    let out = train(&d, &cfg, &oracle(&d), &mut darksplat_core::train::NoopObserver).unwrap();
    assert_eq!(out.scene, init_random_cloud(cfg.init_points, &d.bounds, cfg.sh_degree, 2).unwrap());
    assert!(out.metrics.is_empty());
}

#[test]
fn same_seed_gives_identical_metrics() {
    let d = small_dataset(3);
    let cfg = quick_config(3);
    let a = train(&d, &cfg, &oracle(&d), &mut darksplat_core::train::NoopObserver).unwrap();
    let b = train(&d, &cfg, &oracle(&d), &mut darksplat_core::train::NoopObserver).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.metrics.len(), 4);
    assert!(a.metrics.iter().all(|r| r.psnr.is_some()));
}

#[test]
fn runaway_learning_rate_is_reported_as_divergence() {
    let d = small_dataset(4);
    let cfg = TrainConfig { lr_scaling: 1e306, lr_position_start: 1e306, lr_position_end: 1e306, ..quick_config(4) };
    struct Finite;
    impl TrainObserver for Finite {
        fn on_iteration(&mut self, _: usize, scene: &Scene) {
            assert!(scene.gaussians.iter().all(|g| g.is_finite()));
        }
    }
    match train(&d, &cfg, &oracle(&d), &mut Finite) {
        Err(Error::TrainingDiverged { iteration, .. }) => assert!(iteration >= 1),
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn ablation_has_one_row_per_term_subset() {
    let d = small_dataset(5);
    let cfg = TrainConfig { iterations: 3, ..quick_config(5) };
    let rows = ablate(&d, &cfg, &oracle(&d)).unwrap();
    assert_eq!(rows.len(), 7);
    for (r, sel) in rows.iter().zip(ABLATION_ROWS) {
        assert_eq!(r.selection, sel);
        assert!(r.psnr.is_finite() && r.ssim.is_finite());
    }
}
