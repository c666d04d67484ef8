use darksplat_core::ctmb::{ctmb_forward, ctmb_forward_with_attention, CtmbWeights, FeatureMap};
use darksplat_core::events::log_map;
use darksplat_core::gradcheck::{check_gradients, random_pair_problem};
use darksplat_core::loss::{loss_mix, total_loss};
use darksplat_core::metrics::{psnr, ssim};
use darksplat_core::scene::project_gaussian;
use darksplat_core::sh::{coeff_count, rgb_to_dc};
use darksplat_core::train::{adam_step, TrainState};
use darksplat_core::{
    render, Camera, EventModelParams, Gaussian, GradientSet, Image, LossConfig, LossParts, Scene, TrainConfig,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn camera(size: u32) -> Camera {
    Camera::look_at([0.0, -3.0, 0.4], [0.0; 3], [0.0, 0.0, 1.0], 1.2 * size as f64, 1.2 * size as f64, size, size, 0.0)
}

fn random_scene(seed: u64, n: usize, degree: usize) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gaussians = (0..n)
        .map(|_| {
            let mut sh = vec![[0.0; 3]; coeff_count(degree)];
            sh[0] = [(); 3].map(|_| rgb_to_dc(rng.random_range(0.0..1.2)));
            for c in sh.iter_mut().skip(1) {
                *c = [(); 3].map(|_| rng.random_range(-0.2..0.2));
            }
            Gaussian {
                position: [(); 3].map(|_| rng.random_range(-0.8..0.8)),
                rotation: [(); 4].map(|_| rng.random_range(-1.0..1.0)),
                log_scale: [(); 3].map(|_| rng.random_range(-3.0..-0.8)),
                opacity_logit: rng.random_range(-3.0..6.0),
                sh,
            }
        })
        .collect();
    Scene { sh_degree: degree, gaussians }
}

fn random_image(seed: u64, w: u32, h: u32) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..w * h * 3).map(|_| rng.random_range(0.0..1.0)).collect();
    Image::from_data(w, h, data).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn compositing_conserves_energy(seed in any::<u64>(), n in 0usize..40, px in 0u32..20, py in 0u32..20) {
        let scene = random_scene(seed, n, 1);
        let cam = camera(20);
        let bg = [0.2, 0.4, 0.6];
        let (img, graph) = render(&scene, &cam, bg);
        let contribs = graph.contributions(px, py);
        let t_final = graph.final_transmittance(px, py);
        let total: f64 = contribs.iter().map(|c| c.alpha * c.transmittance).sum::<f64>() + t_final;
        prop_assert!((total - 1.0).abs() <= 1e-9, "total {total}");

        // The pixel is a convex combination of splat colours and the background.
        let colors: Vec<[f64; 3]> = contribs
            .iter()
            .map(|c| project_gaussian(&scene.gaussians[graph.gaussian_index(c.splat)], &cam, 1).unwrap().color)
            .chain([bg])
            .collect();
        let rgb = img.pixel(px, py);
        for ch in 0..3 {
            let lo = colors.iter().map(|c| c[ch]).fold(f64::INFINITY, f64::min);
            let hi = colors.iter().map(|c| c[ch]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(rgb[ch] >= lo.min(1.0) - 1e-12 && rgb[ch] <= hi.min(1.0) + 1e-12);
        }
    }

    #[test]
    fn render_is_identical_across_thread_counts(seed in any::<u64>(), n in 1usize..30) {
        let scene = random_scene(seed, n, 2);
        let cam = camera(24);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let many = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| render(&scene, &cam, [0.0; 3]).0);
        let b = many.install(|| render(&scene, &cam, [0.0; 3]).0);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn mix_loss_is_symmetric_under_joint_swap(seed in any::<u64>()) {
        let [r1, r2, b1, b2] = [0, 1, 2, 3].map(|k| random_image(seed.wrapping_add(k), 6, 5));
        let p = EventModelParams::default();
        let (l, _, _) = loss_mix(&r1, &r2, &b1, &b2, &p).unwrap();
        let (s, _, _) = loss_mix(&r2, &r1, &b2, &b1, &p).unwrap();
        prop_assert_eq!(l, s);
    }

    #[test]
    fn total_loss_is_monotone_in_each_part(
        parts in prop::array::uniform3(0.0f64..10.0),
        bump in 0.0f64..5.0,
        l1 in 0.0f64..2.0,
        l2 in 0.0f64..2.0,
        which in 0usize..3,
    ) {
        let cfg = LossConfig { lambda1: l1, lambda2: l2, holistic: true };
        let base = LossParts { hol: parts[0], event: parts[1], mix: parts[2] };
        let mut more = base;
        match which {
            0 => more.hol += bump,
            1 => more.event += bump,
            _ => more.mix += bump,
        }
        prop_assert!(total_loss(&more, &cfg) >= total_loss(&base, &cfg));
    }

    #[test]
    fn adam_commutes_with_permutation(seed in any::<u64>(), n in 1usize..8) {
        let scene = random_scene(seed, n, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let mut grads = GradientSet::zeros_like(&scene);
        for g in grads.gaussians.iter_mut() {
            g.position = [(); 3].map(|_| rng.random_range(-1.0..1.0));
            g.rotation = [(); 4].map(|_| rng.random_range(-1.0..1.0));
            g.log_scale = [(); 3].map(|_| rng.random_range(-1.0..1.0));
            g.opacity_logit = rng.random_range(-1.0..1.0);
            g.sh.iter_mut().flatten().for_each(|v| *v = rng.random_range(-1.0..1.0));
        }
        let mut perm: Vec<usize> = (0..n).collect();
        perm.reverse();
        perm.rotate_left(seed as usize % n);
        let permute = |v: &[Gaussian]| perm.iter().map(|&i| v[i].clone()).collect::<Vec<_>>();

        let cfg = TrainConfig::default();
        let mut a = TrainState::new(scene.clone());
        let mut b = TrainState::new(Scene { sh_degree: 1, gaussians: permute(&scene.gaussians) });
        let grads_b = GradientSet {
            gaussians: permute(&grads.gaussians),
            screen_mean: perm.iter().map(|&i| grads.screen_mean[i]).collect(),
        };
        for _ in 0..3 {
            adam_step(&mut a, &grads, &cfg).unwrap();
            adam_step(&mut b, &grads_b, &cfg).unwrap();
        }
        prop_assert_eq!(permute(&a.scene.gaussians), b.scene.gaussians);
    }

    #[test]
    fn metrics_are_symmetric(seed in any::<u64>(), w in 11u32..20, h in 11u32..20) {
        let a = random_image(seed, w, h);
        let b = random_image(seed ^ 7, w, h);
        prop_assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
        prop_assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn log_map_is_monotone_in_luminance(v in 0.0f64..1.0, d in 1e-6f64..0.5) {
        let p = EventModelParams::default();
        let lo = log_map(&Image::filled(1, 1, [v; 3]), &p).values[0];
        let hi = log_map(&Image::filled(1, 1, [(v + d).min(1.0); 3]), &p).values[0];
        prop_assert!(hi > lo);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn analytic_gradients_match_finite_differences(seed in any::<u64>()) {
        let (problem, scene) = random_pair_problem(seed, 10, 16).unwrap();
        let check = check_gradients(&problem, &scene, 1e-5, 1e-8).unwrap();
        prop_assert!(check.max_rel_error < 1e-4, "{check:?}");
    }
}

fn random_features(seed: u64) -> FeatureMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, w, c) = (rng.random_range(1..9), rng.random_range(1..9), rng.random_range(1..7));
    let data = (0..h * w * c).map(|_| rng.random_range(-2.0..2.0)).collect();
    FeatureMap::new(h, w, c, data).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn ctmb_preserves_shape_and_normalizes_rows(seed in any::<u64>()) {
        let f = random_features(seed);
        let (out, attn) = ctmb_forward_with_attention(&f, &CtmbWeights::random(f.channels, seed)).unwrap();
        prop_assert_eq!((out.height, out.width, out.channels), (f.height, f.width, f.channels));
        prop_assert_eq!(attn.len(), f.channels * f.channels);
        for row in attn.chunks_exact(f.channels) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(row.iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn ctmb_identity_weights_are_the_identity(seed in any::<u64>()) {
        let f = random_features(seed);
        prop_assert_eq!(ctmb_forward(&f, &CtmbWeights::identity(f.channels)).unwrap(), f);
    }

    #[test]
    fn single_channel_ctmb_ignores_query_and_key(seed in any::<u64>(), qk in -3.0f64..3.0) {
        let mut f = random_features(seed);
        f.channels = 1;
        f.data.truncate(f.height * f.width);
        let w = CtmbWeights::random(1, seed);
        let (out, attn) = ctmb_forward_with_attention(&f, &w).unwrap();
        prop_assert_eq!(attn, vec![1.0]);
        let mut other = w.clone();
        other.q_proj = vec![qk];
        other.k_proj = vec![-qk];
        other.q_depthwise[0] = [qk; 9];
        prop_assert_eq!(ctmb_forward(&f, &other).unwrap(), out);
    }
}
