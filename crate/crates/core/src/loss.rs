//! Frame, event and mixed-modality losses with gradients.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::events::{predicted_event_map, EventMap, EventModelParams, MapUnits};
use crate::raster::{Image, LUMA_WEIGHTS};

/// Weights of the combined objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    /// Weight of the event loss.
    pub lambda1: f64,
    /// Weight of the mixed-modality loss.
    pub lambda2: f64,
    /// Whether the frame loss is part of the objective at all.
    pub holistic: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { lambda1: 0.25, lambda2: 0.25, holistic: true }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda1 >= 0.0 && self.lambda2 >= 0.0) {
            return Err(invalid("loss weights must be non-negative"));
        }
        Ok(())
    }
}

/// The three loss terms before weighting.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossParts {
    pub hol: f64,
    pub event: f64,
    pub mix: f64,
}

/// Mean squared error over all pixel-channels.
pub fn loss_hol(render: &Image, bright: &Image) -> Result<(f64, Vec<f64>)> {
    render.check_same_shape(bright)?;
    let n = render.data.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(render.data.len());
    for (r, b) in render.data.iter().zip(&bright.data) {
        let d = r - b;
        loss += d * d;
        grad.push(2.0 * d / n);
    }
    Ok((loss / n, grad))
}

/// Mean squared difference of two log-intensity maps, divided by `n_views`
/// so that summing over a batch of view pairs yields the batch average.
pub fn loss_event(e_pred: &EventMap, e_gt: &EventMap, n_views: usize) -> Result<(f64, Vec<f64>)> {
    e_pred.check_compatible(e_gt)?;
    if e_pred.units != MapUnits::LogIntensity {
        return Err(invalid("event loss compares log-intensity maps"));
    }
    if n_views == 0 {
        return Err(invalid("n_views must be positive"));
    }
    let n = e_pred.values.len() as f64 * n_views as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(e_pred.values.len());
    for (p, g) in e_pred.values.iter().zip(&e_gt.values) {
        let d = p - g;
        loss += d * d;
        grad.push(2.0 * d / n);
    }
    Ok((loss / n, grad))
}

/// Mixed-modality sharpening loss: mean over pixels of
/// `(L(|Y(r1) − Y(r2)|) − L(|Y(b1) − Y(b2)|))²`.
///
/// Returns the loss and gradients with respect to `r1` and `r2`.
pub fn loss_mix(
    r1: &Image,
    r2: &Image,
    b1: &Image,
    b2: &Image,
    params: &EventModelParams,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    r1.check_same_shape(r2)?;
    r1.check_same_shape(b1)?;
    r1.check_same_shape(b2)?;
    let (y1, y2, c1, c2) = (r1.luminance(), r2.luminance(), b1.luminance(), b2.luminance());
    let n = y1.len() as f64;
    let mut loss = 0.0;
    let mut g1 = vec![0.0; r1.data.len()];
    let mut g2 = vec![0.0; r1.data.len()];
    for i in 0..y1.len() {
        let dr = y1[i] - y2[i];
        let db = c1[i] - c2[i];
        let diff = params.log_intensity(dr.abs()) - params.log_intensity(db.abs());
        loss += diff * diff;
        // Subgradient of |·| is taken as 0 at exactly 0.
        let sign = if dr > 0.0 {
            1.0
        } else if dr < 0.0 {
            -1.0
        } else {
            0.0
        };
        let d_dr = 2.0 * diff / n * params.log_intensity_grad(dr.abs()) * sign;
        for ch in 0..3 {
            g1[i * 3 + ch] = d_dr * LUMA_WEIGHTS[ch];
            g2[i * 3 + ch] = -d_dr * LUMA_WEIGHTS[ch];
        }
    }
    Ok((loss / n, g1, g2))
}

/// `hol + λ₁·event + λ₂·mix`, with `hol` dropped when disabled.
pub fn total_loss(parts: &LossParts, cfg: &LossConfig) -> f64 {
    let hol = if cfg.holistic { parts.hol } else { 0.0 };
    hol + cfg.lambda1 * parts.event + cfg.lambda2 * parts.mix
}

/// Loss of one adjacent view pair and its gradients w.r.t. both renders.
#[derive(Debug, Clone)]
pub struct PairLoss {
    pub parts: LossParts,
    pub total: f64,
    pub d_r1: Vec<f64>,
    pub d_r2: Vec<f64>,
}

/// Full objective for a pair of renders `(r1, r2)` against pseudo-bright
/// frames `(b1, b2)` and the supervisory event map `e_gt` (log units).
///
/// The frame term is the mean of the two per-frame MSEs. Terms with zero
/// weight are still reported in `parts` but contribute no gradient.
pub fn pair_loss(
    r1: &Image,
    r2: &Image,
    b1: &Image,
    b2: &Image,
    e_gt: &EventMap,
    cfg: &LossConfig,
    params: &EventModelParams,
) -> Result<PairLoss> {
    let n = r1.data.len();
    let mut d_r1 = vec![0.0; n];
    let mut d_r2 = vec![0.0; n];

    let (h1, gh1) = loss_hol(r1, b1)?;
    let (h2, gh2) = loss_hol(r2, b2)?;
    let hol = 0.5 * (h1 + h2);
    if cfg.holistic {
        for i in 0..n {
            d_r1[i] += 0.5 * gh1[i];
            d_r2[i] += 0.5 * gh2[i];
        }
    }

    let e_pred = predicted_event_map(r1, r2, params)?;
    let (event, ge) = loss_event(&e_pred, e_gt, 1)?;
    if cfg.lambda1 != 0.0 {
        let (y1, y2) = (r1.luminance(), r2.luminance());
        for (p, g) in ge.iter().enumerate() {
            let a = cfg.lambda1 * g * params.log_intensity_grad(y2[p]);
            let b = cfg.lambda1 * g * params.log_intensity_grad(y1[p]);
            for ch in 0..3 {
                d_r2[p * 3 + ch] += a * LUMA_WEIGHTS[ch];
                d_r1[p * 3 + ch] -= b * LUMA_WEIGHTS[ch];
            }
        }
    }

    let (mix, gm1, gm2) = loss_mix(r1, r2, b1, b2, params)?;
    if cfg.lambda2 != 0.0 {
        for i in 0..n {
            d_r1[i] += cfg.lambda2 * gm1[i];
            d_r2[i] += cfg.lambda2 * gm2[i];
        }
    }

    let parts = LossParts { hol, event, mix };
    Ok(PairLoss { total: total_loss(&parts, cfg), parts, d_r1, d_r2 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gray(v: f64) -> Image {
        Image::filled(4, 3, [v; 3])
    }

    fn random_image(rng: &mut ChaCha8Rng, w: u32, h: u32) -> Image {
        let data = (0..w * h * 3).map(|_| rng.random_range(0.02..0.98)).collect();
        Image::from_data(w, h, data).unwrap()
    }

    fn log_map_of(v: f64) -> EventMap {
        EventMap { width: 4, height: 3, units: MapUnits::LogIntensity, values: vec![v; 12] }
    }

    #[test]
    fn hol_examples() {
        let (l, g) = loss_hol(&gray(0.3), &gray(0.3)).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|v| *v == 0.0));
        let (l, _) = loss_hol(&gray(0.5), &gray(0.25)).unwrap();
        assert_abs_diff_eq!(l, 0.0625, epsilon = 1e-15);
        assert!(loss_hol(&gray(0.5), &Image::new(2, 2)).is_err());
    }

    #[test]
    fn event_examples() {
        let (l, _) = loss_event(&log_map_of(0.7), &log_map_of(0.7), 1).unwrap();
        assert_eq!(l, 0.0);
        let (l, _) = loss_event(&log_map_of(0.5), &log_map_of(0.3), 1).unwrap();
        assert_abs_diff_eq!(l, 0.04, epsilon = 1e-12);
        let (a, _) = loss_event(&log_map_of(0.9), &log_map_of(-0.2), 1).unwrap();
        let (b, _) = loss_event(&log_map_of(-0.9), &log_map_of(0.2), 1).unwrap();
        assert_eq!(a, b);
        let counts = EventMap::zeros(4, 3, MapUnits::Counts);
        assert!(loss_event(&log_map_of(0.0), &counts, 1).is_err());
    }

    #[test]
    fn mix_examples() {
        let p = EventModelParams::default();
        let (a, b) = (gray(0.6), gray(0.2));
        assert_eq!(loss_mix(&a, &b, &a, &b, &p).unwrap().0, 0.0);
        assert_eq!(loss_mix(&a, &a, &b, &b, &p).unwrap().0, 0.0);
        let (l, _, _) = loss_mix(&gray(0.75), &gray(0.25), &gray(0.4), &gray(0.4), &p).unwrap();
        // ln(0.5^2.2 + 1e-5) = -1.52487, ln(1e-5) = -11.51293
        assert_abs_diff_eq!(l, 99.761, epsilon = 1e-3);
        let expected = (p.log_intensity(0.5) - p.log_intensity(0.0)).powi(2);
        assert_abs_diff_eq!(l, expected, epsilon = 1e-9);
    }

    #[test]
    fn total_examples() {
        let cfg = LossConfig::default();
        assert_eq!(total_loss(&LossParts::default(), &cfg), 0.0);
        assert_eq!(total_loss(&LossParts { hol: 1.0, event: 1.0, mix: 1.0 }, &cfg), 1.5);
        let off = LossConfig { lambda1: 0.0, lambda2: 0.0, holistic: true };
        assert_eq!(total_loss(&LossParts { hol: 0.3, event: 5.0, mix: 7.0 }, &off), 0.3);
    }

    #[test]
    fn mix_is_symmetric_under_joint_swap() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = EventModelParams::default();
        let (r1, r2, b1, b2) = (
            random_image(&mut rng, 8, 8),
            random_image(&mut rng, 8, 8),
            random_image(&mut rng, 8, 8),
            random_image(&mut rng, 8, 8),
        );
        let a = loss_mix(&r1, &r2, &b1, &b2, &p).unwrap().0;
        let b = loss_mix(&r2, &r1, &b2, &b1, &p).unwrap().0;
        assert_eq!(a, b);
    }

    fn check_fd(f: impl Fn(&Image) -> f64, x: &Image, grad: &[f64]) {
        let h = 1e-5;
        for i in 0..x.data.len() {
            let mut p = x.clone();
            p.data[i] += h;
            let mut m = x.clone();
            m.data[i] -= h;
            let fd = (f(&p) - f(&m)) / (2.0 * h);
            let tol = 1e-5 * fd.abs().max(grad[i].abs()) + 1e-9;
            assert!((fd - grad[i]).abs() < tol, "entry {i}: analytic {} vs fd {fd}", grad[i]);
        }
    }

    #[test]
    fn loss_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = EventModelParams::default();
        let (r1, r2, b1, b2) = (
            random_image(&mut rng, 8, 8),
            random_image(&mut rng, 8, 8),
            random_image(&mut rng, 8, 8),
            random_image(&mut rng, 8, 8),
        );
        let (_, g) = loss_hol(&r1, &b1).unwrap();
        check_fd(|x| loss_hol(x, &b1).unwrap().0, &r1, &g);

        let gt = predicted_event_map(&b1, &b2, &p).unwrap();
        let e_pred = predicted_event_map(&r1, &r2, &p).unwrap();
        let (_, ge) = loss_event(&e_pred, &gt, 1).unwrap();
        let h = 1e-6;
        for i in 0..e_pred.values.len() {
            let mut plus = e_pred.clone();
            plus.values[i] += h;
            let mut minus = e_pred.clone();
            minus.values[i] -= h;
            let fd = (loss_event(&plus, &gt, 1).unwrap().0 - loss_event(&minus, &gt, 1).unwrap().0) / (2.0 * h);
            assert!((fd - ge[i]).abs() / fd.abs().max(1e-8) < 1e-5);
        }

        let (_, g1, g2) = loss_mix(&r1, &r2, &b1, &b2, &p).unwrap();
        check_fd(|x| loss_mix(x, &r2, &b1, &b2, &p).unwrap().0, &r1, &g1);
        check_fd(|x| loss_mix(&r1, x, &b1, &b2, &p).unwrap().0, &r2, &g2);

        let cfg = LossConfig::default();
        let pl = pair_loss(&r1, &r2, &b1, &b2, &gt, &cfg, &p).unwrap();
        check_fd(|x| pair_loss(x, &r2, &b1, &b2, &gt, &cfg, &p).unwrap().total, &r1, &pl.d_r1);
        check_fd(|x| pair_loss(&r1, x, &b1, &b2, &gt, &cfg, &p).unwrap().total, &r2, &pl.d_r2);
    }

    #[test]
    fn total_is_monotone_in_each_part() {
        let cfg = LossConfig::default();
        let base = LossParts { hol: 0.2, event: 0.3, mix: 0.4 };
        let t = total_loss(&base, &cfg);
        assert!(total_loss(&LossParts { hol: 0.3, ..base }, &cfg) >= t);
        assert!(total_loss(&LossParts { event: 0.4, ..base }, &cfg) >= t);
        assert!(total_loss(&LossParts { mix: 0.5, ..base }, &cfg) >= t);
    }
}
