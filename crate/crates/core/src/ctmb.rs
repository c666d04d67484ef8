//! Colour-tone matching block: channel-wise (C×C) transposed self-attention
//! over a feature map, with 1×1 + depthwise 3×3 projections and a residual.
//!
//! Only the forward pass is provided; the weights are not trained here.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::math;

/// Feature tensor stored as `(y * width + x) * channels + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(invalid("feature data length does not match shape"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(invalid("feature map contains non-finite values"));
        }
        Ok(Self { height, width, channels, data })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self { height, width, channels, data: vec![0.0; height * width * channels] }
    }

    fn positions(&self) -> usize {
        self.height * self.width
    }
}

/// Learnable parameters of the block for `channels` channels.
#[derive(Debug, Clone, PartialEq)]
pub struct CtmbWeights {
    pub channels: usize,
    /// `C×C` row-major, `out[o] = Σ_i w[o*C + i] · in[i]`.
    pub q_proj: Vec<f64>,
    pub k_proj: Vec<f64>,
    pub v_proj: Vec<f64>,
    /// One 3×3 kernel per channel, row-major.
    pub q_depthwise: Vec<[f64; 9]>,
    pub k_depthwise: Vec<[f64; 9]>,
    pub v_depthwise: Vec<[f64; 9]>,
    pub out_proj: Vec<f64>,
    pub temperature: f64,
}

const DELTA_KERNEL: [f64; 9] = [0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0];

impl CtmbWeights {
    /// Identity projections, delta depthwise kernels, zero output projection.
    pub fn identity(channels: usize) -> Self {
        let mut eye = vec![0.0; channels * channels];
        for i in 0..channels {
            eye[i * channels + i] = 1.0;
        }
        Self {
            channels,
            q_proj: eye.clone(),
            k_proj: eye.clone(),
            v_proj: eye,
            q_depthwise: vec![DELTA_KERNEL; channels],
            k_depthwise: vec![DELTA_KERNEL; channels],
            v_depthwise: vec![DELTA_KERNEL; channels],
            out_proj: vec![0.0; channels * channels],
            temperature: math::sqrt(channels as f64),
        }
    }

    /// Deterministic uniform initialization scaled by fan-in.
    pub fn random(channels: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 1.0 / math::sqrt(channels as f64);
        let mat = |rng: &mut ChaCha8Rng| (0..channels * channels).map(|_| rng.random_range(-bound..bound)).collect();
        let q_proj = mat(&mut rng);
        let k_proj = mat(&mut rng);
        let v_proj = mat(&mut rng);
        let out_proj = mat(&mut rng);
        let dw = |rng: &mut ChaCha8Rng| {
            (0..channels).map(|_| core::array::from_fn(|_| rng.random_range(-1.0 / 3.0..1.0 / 3.0))).collect()
        };
        let q_depthwise = dw(&mut rng);
        let k_depthwise = dw(&mut rng);
        let v_depthwise = dw(&mut rng);
        Self {
            channels,
            q_proj,
            k_proj,
            v_proj,
            q_depthwise,
            k_depthwise,
            v_depthwise,
            out_proj,
            temperature: math::sqrt(channels as f64),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.channels;
        let mats = [&self.q_proj, &self.k_proj, &self.v_proj, &self.out_proj];
        if mats.iter().any(|m| m.len() != c * c) {
            return Err(invalid("projection kernels must be C×C"));
        }
        let kernels = [&self.q_depthwise, &self.k_depthwise, &self.v_depthwise];
        if kernels.iter().any(|k| k.len() != c) {
            return Err(invalid("depthwise kernels must have one entry per channel"));
        }
        let finite = mats.iter().all(|m| m.iter().all(|v| v.is_finite()))
            && kernels.iter().all(|k| k.iter().flatten().all(|v| v.is_finite()));
        if !finite || !(self.temperature > 0.0) {
            return Err(invalid("weights must be finite with positive temperature"));
        }
        Ok(())
    }
}

fn pointwise(f: &FeatureMap, w: &[f64]) -> FeatureMap {
    let c = f.channels;
    let mut out = FeatureMap::zeros(f.height, f.width, c);
    for (src, dst) in f.data.chunks_exact(c).zip(out.data.chunks_exact_mut(c)) {
        for o in 0..c {
            dst[o] = (0..c).map(|i| w[o * c + i] * src[i]).sum();
        }
    }
    out
}

/// Reflect an index into `0..n` without repeating the edge sample.
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let r = if i < 0 {
        -i
    } else if i >= n {
        2 * n - 2 - i
    } else {
        i
    };
    r.clamp(0, n - 1) as usize
}

fn depthwise(f: &FeatureMap, kernels: &[[f64; 9]]) -> FeatureMap {
    let (h, w, c) = (f.height, f.width, f.channels);
    let mut out = FeatureMap::zeros(h, w, c);
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let k = &kernels[ch];
                let mut acc = 0.0;
                for dy in 0..3 {
                    let sy = reflect(y as isize + dy as isize - 1, h);
                    for dx in 0..3 {
                        let sx = reflect(x as isize + dx as isize - 1, w);
                        acc += k[dy * 3 + dx] * f.data[(sy * w + sx) * c + ch];
                    }
                }
                out.data[(y * w + x) * c + ch] = acc;
            }
        }
    }
    out
}

/// Forward pass returning the output feature map and the `C×C` attention map.
pub fn ctmb_forward_with_attention(f: &FeatureMap, w: &CtmbWeights) -> Result<(FeatureMap, Vec<f64>)> {
    w.validate()?;
    if f.channels != w.channels {
        return Err(invalid("feature channels do not match block weights"));
    }
    if f.data.len() != f.positions() * f.channels {
        return Err(invalid("feature data length does not match shape"));
    }
    let c = f.channels;
    let q = depthwise(&pointwise(f, &w.q_proj), &w.q_depthwise);
    let k = depthwise(&pointwise(f, &w.k_proj), &w.k_depthwise);
    let v = depthwise(&pointwise(f, &w.v_proj), &w.v_depthwise);

    // Attention over channels: logits[i][j] = <Q_i, K_j> / τ.
    let mut attn = vec![0.0; c * c];
    for (qp, kp) in q.data.chunks_exact(c).zip(k.data.chunks_exact(c)) {
        for i in 0..c {
            for j in 0..c {
                attn[i * c + j] += qp[i] * kp[j];
            }
        }
    }
    for row in attn.chunks_exact_mut(c) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max) / w.temperature;
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = math::exp(*v / w.temperature - max);
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }

    let mut mixed = FeatureMap::zeros(f.height, f.width, c);
    for (vp, dst) in v.data.chunks_exact(c).zip(mixed.data.chunks_exact_mut(c)) {
        for i in 0..c {
            dst[i] = (0..c).map(|j| attn[i * c + j] * vp[j]).sum();
        }
    }
    let mut out = pointwise(&mixed, &w.out_proj);
    for (o, x) in out.data.iter_mut().zip(&f.data) {
        *o += x;
    }
    Ok((out, attn))
}

/// Colour-corrected features `F_out`.
pub fn ctmb_forward(f: &FeatureMap, w: &CtmbWeights) -> Result<FeatureMap> {
    ctmb_forward_with_attention(f, w).map(|(out, _)| out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_features(h: usize, w: usize, c: usize, seed: u64) -> FeatureMap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..h * w * c).map(|_| rng.random_range(-1.0..1.0)).collect();
        FeatureMap::new(h, w, c, data).unwrap()
    }

    #[test]
    fn shape_and_row_normalization() {
        let f = random_features(5, 7, 4, 1);
        let (out, attn) = ctmb_forward_with_attention(&f, &CtmbWeights::random(4, 2)).unwrap();
        assert_eq!((out.height, out.width, out.channels), (5, 7, 4));
        for row in attn.chunks_exact(4) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_channel_collapses_to_value_path() {
        let f = random_features(4, 3, 1, 5);
        let w = CtmbWeights::random(1, 9);
        let (out, attn) = ctmb_forward_with_attention(&f, &w).unwrap();
        assert_eq!(attn, vec![1.0]);
        let v = depthwise(&pointwise(&f, &w.v_proj), &w.v_depthwise);
        for i in 0..out.data.len() {
            assert_eq!(out.data[i], w.out_proj[0] * v.data[i] + f.data[i]);
        }
    }

    #[test]
    fn identity_weights_leave_features_unchanged() {
        let f = random_features(6, 5, 3, 11);
        let out = ctmb_forward(&f, &CtmbWeights::identity(3)).unwrap();
        assert_eq!(out, f);
    }

    #[test]
    fn channel_mismatch_is_rejected() {
        let f = random_features(3, 3, 2, 0);
        assert!(ctmb_forward(&f, &CtmbWeights::random(3, 0)).is_err());
    }

    #[test]
    fn reflect_padding() {
        assert_eq!(reflect(-1, 5), 1);
        assert_eq!(reflect(5, 5), 3);
        assert_eq!(reflect(-1, 1), 0);
        assert_eq!(reflect(2, 3), 2);
    }
}
