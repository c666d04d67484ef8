//! Datasets and the synthetic turntable generator.

use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{invalid, Result};
use crate::events::{inject_dark_noise, simulate_events, EventModelParams, EventStream};
use crate::math::{self, logit};
use crate::raster::{render_image, Image};
use crate::scene::{Bounds, Camera, Gaussian, Scene};
use crate::sh::{self, rgb_to_dc};

/// Time-ordered views with dark frames, the event stream recorded alongside
/// them, and optionally the bright ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub cameras: Vec<Camera>,
    pub dark_frames: Vec<Image>,
    pub events: EventStream,
    pub bright_frames: Option<Vec<Image>>,
    pub bounds: Bounds,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.cameras.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cameras.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.cameras.len() != self.dark_frames.len() {
            return Err(invalid("cameras and dark frames differ in length"));
        }
        if let Some(b) = &self.bright_frames {
            if b.len() != self.cameras.len() {
                return Err(invalid("cameras and bright frames differ in length"));
            }
        }
        for (i, cam) in self.cameras.iter().enumerate() {
            cam.validate()?;
            if i > 0 && !(cam.timestamp > self.cameras[i - 1].timestamp) {
                return Err(invalid("camera timestamps must be strictly increasing"));
            }
            if self.dark_frames[i].width != cam.width || self.dark_frames[i].height != cam.height {
                return Err(invalid(alloc::format!("dark frame {i} does not match its camera")));
            }
        }
        self.events.validate()
    }
}

/// Round every value to the nearest 16-bit level, the precision of stored frames.
pub fn quantize16(img: &mut Image) {
    for v in img.data.iter_mut() {
        *v = (math::floor(v.clamp(0.0, 1.0) * 65535.0 + 0.5) as u16) as f64 / 65535.0;
    }
}

/// Parameters of the synthetic capture.
#[derive(Debug, Clone, PartialEq)]
pub struct TurntableConfig {
    pub gaussians: usize,
    /// Camera circle radius (world units).
    pub radius: f64,
    /// Camera height above the turntable plane.
    pub elevation: f64,
    pub views: usize,
    pub width: u32,
    pub height: u32,
    /// Focal length in pixels (both axes).
    pub focal: f64,
    /// Seconds between consecutive views.
    pub frame_interval: f64,
    pub dark_gain: f64,
    /// Standard deviation of additive dark-frame noise.
    pub sensor_noise: f64,
    /// Background-activity event rate (events / pixel / second).
    pub noise_rate: f64,
    pub event_params: EventModelParams,
    pub sh_degree: usize,
    /// Half-extent of the cubic scene bounds.
    pub half_extent: f64,
    pub seed: u64,
}

impl Default for TurntableConfig {
    fn default() -> Self {
        Self {
            gaussians: 20,
            radius: 4.0,
            elevation: 1.0,
            views: 60,
            width: 48,
            height: 48,
            focal: 54.0,
            frame_interval: 0.008,
            dark_gain: 0.1,
            sensor_noise: 0.005,
            noise_rate: 1.0,
            event_params: EventModelParams::default(),
            sh_degree: 1,
            half_extent: 1.0,
            seed: 0,
        }
    }
}

/// Cameras evenly spaced on a circle around the origin, all looking at it.
pub fn turntable_cameras(cfg: &TurntableConfig) -> Vec<Camera> {
    (0..cfg.views)
        .map(|k| {
            let theta = 2.0 * PI * k as f64 / cfg.views as f64;
            let eye = [cfg.radius * math::cos(theta), cfg.radius * math::sin(theta), cfg.elevation];
            Camera::look_at(
                eye,
                [0.0; 3],
                [0.0, 0.0, 1.0],
                cfg.focal,
                cfg.focal,
                cfg.width,
                cfg.height,
                k as f64 * cfg.frame_interval,
            )
        })
        .collect()
}

fn random_scene(cfg: &TurntableConfig, rng: &mut ChaCha8Rng) -> Scene {
    let k = sh::coeff_count(cfg.sh_degree);
    let spread = 0.6 * cfg.half_extent;
    let gaussians = (0..cfg.gaussians)
        .map(|_| {
            let position = [(); 3].map(|_| rng.random_range(-spread..spread));
            let mut rotation: [f64; 4] = [(); 4].map(|_| StandardNormal.sample(rng));
            let n = math::sqrt(rotation.iter().map(|v| v * v).sum());
            rotation.iter_mut().for_each(|v| *v /= n);
            let log_scale = [(); 3].map(|_| math::ln(rng.random_range(0.12..0.3) * cfg.half_extent));
            let opacity_logit = logit(rng.random_range(0.6..0.95));
            let mut coeffs = Vec::with_capacity(k);
            coeffs.push([(); 3].map(|_| rgb_to_dc(rng.random_range(0.15..0.95))));
            for _ in 1..k {
                coeffs.push([(); 3].map(|_| rng.random_range(-0.1..0.1)));
            }
            Gaussian { position, rotation, log_scale, opacity_logit, sh: coeffs }
        })
        .collect();
    Scene { sh_degree: cfg.sh_degree, gaussians }
}

/// Build a random ground-truth scene and the dark-frame + event capture of it.
///
/// Bright frames are ground-truth renders on black; dark frames are
/// `bright · dark_gain` plus Gaussian sensor noise. Frames are quantized to
/// 16-bit levels. Events come from consecutive bright frames, then random
/// background activity is merged in.
pub fn generate_turntable(cfg: &TurntableConfig) -> Result<(Scene, Dataset)> {
    if cfg.views < 8 {
        return Err(invalid("a turntable capture needs at least 8 views"));
    }
    if !(cfg.dark_gain >= 0.0 && cfg.sensor_noise >= 0.0 && cfg.noise_rate >= 0.0) {
        return Err(invalid("lighting and noise parameters must be non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let scene = random_scene(cfg, &mut rng);
    let cameras = turntable_cameras(cfg);
    for cam in &cameras {
        cam.validate()?;
    }

    let bright: Vec<Image> = cameras
        .iter()
        .map(|cam| {
            let mut img = render_image(&scene, cam, [0.0; 3]);
            quantize16(&mut img);
            img
        })
        .collect();

    let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    noise_rng.set_stream(1);
    let sensor = if cfg.sensor_noise > 0.0 { Some(Normal::new(0.0, cfg.sensor_noise).expect("positive sigma")) } else { None };
    let dark: Vec<Image> = bright
        .iter()
        .map(|b| {
            let mut d = b.clone();
            for v in d.data.iter_mut() {
                let n = sensor.map_or(0.0, |s| s.sample(&mut noise_rng));
                *v = *v * cfg.dark_gain + n;
            }
            quantize16(&mut d);
            d
        })
        .collect();

    let mut events = EventStream::new(cfg.width, cfg.height);
    for k in 1..cameras.len() {
        let chunk =
            simulate_events(&bright[k - 1], &bright[k], cameras[k - 1].timestamp, cameras[k].timestamp, &cfg.event_params)?;
        events.events.extend(chunk.events);
    }
    let t_end = cameras.last().map_or(0.0, |c| c.timestamp);
    let events = inject_dark_noise(&events, cfg.noise_rate, cameras[0].timestamp, t_end, cfg.seed ^ 0x5eed_0e0e)?;

    let h = cfg.half_extent;
    let dataset = Dataset {
        cameras,
        dark_frames: dark,
        events,
        bright_frames: Some(bright),
        bounds: Bounds { min: [-h; 3], max: [h; 3] },
    };
    Ok((scene, dataset))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::{accumulate, counts_to_log, predicted_event_map};

    fn small() -> TurntableConfig {
        TurntableConfig { views: 12, width: 24, height: 24, focal: 28.0, ..Default::default() }
    }

    #[test]
    fn cameras_are_evenly_spaced() {
        let cfg = TurntableConfig::default();
        let cams = turntable_cameras(&cfg);
        assert_eq!(cams.len(), 60);
        for (k, cam) in cams.iter().enumerate() {
            assert_eq!(cam.timestamp, k as f64 * cfg.frame_interval);
            let c = cam.center();
            let angle = libm::atan2(c[1], c[0]).to_degrees().rem_euclid(360.0);
            let expected = 6.0 * k as f64;
            let diff = (angle - expected).abs();
            assert!(diff < 1e-9 || (360.0 - diff) < 1e-9, "view {k}: {angle}");
        }
    }

    #[test]
    fn too_few_views_is_rejected() {
        assert!(generate_turntable(&TurntableConfig { views: 4, ..small() }).is_err());
    }

    #[test]
    fn unit_gain_without_noise_gives_bright_frames() {
        let cfg = TurntableConfig { dark_gain: 1.0, sensor_noise: 0.0, ..small() };
        let (_, d) = generate_turntable(&cfg).unwrap();
        assert_eq!(Some(&d.dark_frames), d.bright_frames.as_ref());
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_turntable(&small()).unwrap();
        let b = generate_turntable(&small()).unwrap();
        assert_eq!(a, b);
        a.1.validate().unwrap();
        assert!(!a.1.events.is_empty());
    }

    #[test]
    fn clean_events_respect_round_trip_bound() {
        let cfg = TurntableConfig { noise_rate: 0.0, ..small() };
        let (_, d) = generate_turntable(&cfg).unwrap();
        let bright = d.bright_frames.as_ref().unwrap();
        let eps = cfg.event_params.epsilon;
        for k in 1..d.len() {
            let (t1, t2) = (d.cameras[k - 1].timestamp, d.cameras[k].timestamp);
            let rec = counts_to_log(&accumulate(&d.events, t1, t2).unwrap(), eps).unwrap();
            let pred = predicted_event_map(&bright[k - 1], &bright[k], &cfg.event_params).unwrap();
            for (r, p) in rec.values.iter().zip(&pred.values) {
                assert!((r - p).abs() <= eps);
            }
        }
    }
}
