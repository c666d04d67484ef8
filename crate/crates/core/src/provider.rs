//! Pseudo-bright frame providers.
//!
//! Training needs a bright estimate for each dark input frame. Any model can
//! be plugged in through [`PseudoBrightSource`]; the built-in
//! [`PseudoBrightProvider`] offers ground-truth, degraded ground-truth, and a
//! plain gain fallback.

use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{invalid, Error, Result};
use crate::events::EventMap;
use crate::math;
use crate::raster::Image;

/// Bright estimates for the two ends of a view pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoBrightPair {
    pub b1: Image,
    pub b2: Image,
    pub t1: f64,
    pub t2: f64,
}

/// One input frame handed to a provider.
#[derive(Debug, Clone, Copy)]
pub struct FrameRef<'a> {
    /// View index in the dataset.
    pub view: usize,
    pub timestamp: f64,
    pub dark: &'a Image,
}

/// Anything that turns a pair of dark frames (plus the events between them)
/// into bright estimates.
pub trait PseudoBrightSource {
    fn pair(&self, first: FrameRef<'_>, second: FrameRef<'_>, e_gt: &EventMap) -> Result<PseudoBrightPair>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProviderMode {
    /// Configured ground-truth frames, returned as-is.
    Oracle,
    /// Ground truth blurred and corrupted with additive Gaussian noise.
    OracleDegraded,
    /// Dark frames multiplied by a fixed gain and clamped.
    Gain,
}

impl core::str::FromStr for ProviderMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(Self::Oracle),
            "oracle-degraded" => Ok(Self::OracleDegraded),
            "gain" => Ok(Self::Gain),
            other => Err(Error::Configuration(alloc::format!("unknown provider mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProviderConfig {
    pub mode: ProviderMode,
    /// Blur standard deviation in pixels (degraded mode).
    pub blur_sigma: f64,
    /// Additive noise standard deviation (degraded mode).
    pub noise_sigma: f64,
    pub gain: f64,
    pub seed: u64,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self { mode: ProviderMode::OracleDegraded, blur_sigma: 1.5, noise_sigma: 0.01, gain: 8.0, seed: 0 }
    }
}

/// Built-in provider. Oracle modes look frames up by view index.
#[derive(Debug, Clone)]
pub struct PseudoBrightProvider {
    pub config: ProviderConfig,
    oracle: Option<Vec<Image>>,
}

impl PseudoBrightProvider {
    pub fn new(config: ProviderConfig, oracle: Option<Vec<Image>>) -> Result<Self> {
        if matches!(config.mode, ProviderMode::Oracle | ProviderMode::OracleDegraded) && oracle.is_none() {
            return Err(Error::Configuration("oracle provider modes need ground-truth bright frames".into()));
        }
        if !(config.blur_sigma >= 0.0 && config.noise_sigma >= 0.0 && config.gain >= 0.0) {
            return Err(invalid("provider parameters must be non-negative"));
        }
        Ok(Self { config, oracle })
    }

    /// Bright estimate for a single view.
    pub fn frame(&self, frame: FrameRef<'_>) -> Result<Image> {
        match self.config.mode {
            ProviderMode::Oracle => self.oracle_frame(frame.view).cloned(),
            ProviderMode::OracleDegraded => {
                let base = self.oracle_frame(frame.view)?;
                let blurred = gaussian_blur(base, self.config.blur_sigma);
                Ok(add_noise(blurred, self.config.noise_sigma, self.config.seed))
            }
            ProviderMode::Gain => {
                let mut img = frame.dark.clone();
                for v in img.data.iter_mut() {
                    *v = (*v * self.config.gain).clamp(0.0, 1.0);
                }
                Ok(img)
            }
        }
    }

    fn oracle_frame(&self, view: usize) -> Result<&Image> {
        self.oracle
            .as_ref()
            .and_then(|frames| frames.get(view))
            .ok_or_else(|| Error::Configuration(alloc::format!("no ground-truth bright frame for view {view}")))
    }
}

impl PseudoBrightSource for PseudoBrightProvider {
    fn pair(&self, first: FrameRef<'_>, second: FrameRef<'_>, _e_gt: &EventMap) -> Result<PseudoBrightPair> {
        first.dark.check_same_shape(second.dark)?;
        if !(second.timestamp > first.timestamp) {
            return Err(invalid("pseudo-bright pair must be time ordered"));
        }
        let b1 = self.frame(first)?;
        let b2 = self.frame(second)?;
        b1.check_same_shape(first.dark)?;
        b2.check_same_shape(second.dark)?;
        Ok(PseudoBrightPair { b1, b2, t1: first.timestamp, t2: second.timestamp })
    }
}

/// Separable Gaussian blur with edge clamping. `sigma == 0` is the identity.
pub fn gaussian_blur(img: &Image, sigma: f64) -> Image {
    if sigma <= 0.0 {
        return img.clone();
    }
    let radius = libm::ceil(3.0 * sigma) as isize;
    let mut kernel: Vec<f64> =
        (-radius..=radius).map(|i| math::exp(-0.5 * (i * i) as f64 / (sigma * sigma))).collect();
    let sum: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= sum);

    let (w, h) = (img.width as isize, img.height as isize);
    let at = |x: isize, y: isize| (y.clamp(0, h - 1) * w + x.clamp(0, w - 1)) as usize * 3;
    let mut tmp = vec![0.0; img.data.len()];
    for y in 0..h {
        for x in 0..w {
            for (k, kv) in kernel.iter().enumerate() {
                let src = at(x + k as isize - radius, y);
                for ch in 0..3 {
                    tmp[(y * w + x) as usize * 3 + ch] += kv * img.data[src + ch];
                }
            }
        }
    }
    let mut out = vec![0.0; img.data.len()];
    for y in 0..h {
        for x in 0..w {
            for (k, kv) in kernel.iter().enumerate() {
                let src = at(x, y + k as isize - radius);
                for ch in 0..3 {
                    out[(y * w + x) as usize * 3 + ch] += kv * tmp[src + ch];
                }
            }
        }
    }
    Image { width: img.width, height: img.height, data: out }
}

/// The noise field depends only on the seed, so every view carries the same
/// pattern: pseudo-bright errors are consistent between nearby frames.
fn add_noise(mut img: Image, sigma: f64, seed: u64) -> Image {
    if sigma <= 0.0 {
        return img;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).expect("sigma is positive");
    for v in img.data.iter_mut() {
        *v = (*v + normal.sample(&mut rng)).clamp(0.0, 1.0);
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::MapUnits;

    fn frames() -> Vec<Image> {
        (0..3)
            .map(|k| {
                let mut img = Image::new(12, 12);
                img.set_pixel(4 + k, 6, [0.9, 0.5, 0.1]);
                img
            })
            .collect()
    }

    fn frame_ref(view: usize, dark: &Image) -> FrameRef<'_> {
        FrameRef { view, timestamp: view as f64 * 0.1, dark }
    }

    #[test]
    fn oracle_returns_configured_frames() {
        let gt = frames();
        let p = PseudoBrightProvider::new(ProviderConfig { mode: ProviderMode::Oracle, ..Default::default() }, Some(gt.clone()))
            .unwrap();
        let dark = Image::new(12, 12);
        let e = EventMap::zeros(12, 12, MapUnits::LogIntensity);
        let pair = p.pair(frame_ref(1, &dark), frame_ref(2, &dark), &e).unwrap();
        assert_eq!(pair.b1, gt[1]);
        assert_eq!(pair.b2, gt[2]);
    }

    #[test]
    fn degraded_without_blur_or_noise_matches_oracle() {
        let gt = frames();
        let cfg = ProviderConfig { blur_sigma: 0.0, noise_sigma: 0.0, ..Default::default() };
        let p = PseudoBrightProvider::new(cfg, Some(gt.clone())).unwrap();
        let dark = Image::new(12, 12);
        assert_eq!(p.frame(frame_ref(0, &dark)).unwrap(), gt[0]);

        let cfg = ProviderConfig { blur_sigma: 1e-3, noise_sigma: 1e-9, ..Default::default() };
        let p = PseudoBrightProvider::new(cfg, Some(gt.clone())).unwrap();
        let out = p.frame(frame_ref(0, &dark)).unwrap();
        for (a, b) in out.data.iter().zip(&gt[0].data) {
            assert!((a - b).abs() < 1e-7);
        }
    }

    #[test]
    fn degraded_frames_are_deterministic_per_view() {
        let gt = frames();
        let p = PseudoBrightProvider::new(ProviderConfig::default(), Some(gt)).unwrap();
        let dark = Image::new(12, 12);
        assert_eq!(p.frame(frame_ref(1, &dark)).unwrap(), p.frame(frame_ref(1, &dark)).unwrap());
        assert_ne!(p.frame(frame_ref(1, &dark)).unwrap(), p.frame(frame_ref(2, &dark)).unwrap());
    }

    #[test]
    fn gain_mode_amplifies_dark_frames() {
        let p = PseudoBrightProvider::new(ProviderConfig { mode: ProviderMode::Gain, gain: 8.0, ..Default::default() }, None)
            .unwrap();
        let dark = Image::filled(4, 4, [0.05; 3]);
        let out = p.frame(frame_ref(0, &dark)).unwrap();
        assert!(out.data.iter().all(|v| (*v - 0.4).abs() < 1e-15));
    }

    #[test]
    fn oracle_modes_require_frames() {
        assert!(matches!(PseudoBrightProvider::new(ProviderConfig::default(), None), Err(Error::Configuration(_))));
        let p = PseudoBrightProvider::new(ProviderConfig { mode: ProviderMode::Oracle, ..Default::default() }, Some(frames()))
            .unwrap();
        let dark = Image::new(12, 12);
        assert!(matches!(p.frame(frame_ref(7, &dark)), Err(Error::Configuration(_))));
    }

    #[test]
    fn blur_preserves_constant_images() {
        let img = Image::filled(9, 7, [0.3, 0.6, 0.9]);
        let out = gaussian_blur(&img, 1.5);
        for (a, b) in out.data.iter().zip(&img.data) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
