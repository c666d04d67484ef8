//! Depth-sorted alpha compositing of projected Gaussians and its analytic
//! backward pass.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::math::{self, Mat3};
use crate::par;
use crate::scene::{project_cached, Camera, Gaussian, ProjectedGaussian, ProjectionCache, Scene};
use crate::sh;

/// Upper clamp on per-splat alpha.
pub const ALPHA_MAX: f64 = 0.99;
/// Compositing stops once transmittance would fall below this.
pub const TRANSMITTANCE_MIN: f64 = 1e-4;
/// Squared Mahalanobis radius beyond which a splat contributes nothing (3σ).
pub const CUTOFF_MAHALANOBIS_SQ: f64 = 9.0;

/// Row-major RGB image of linear intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: u32,
    pub height: u32,
    /// `(y * width + x) * 3 + channel`
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(width: u32, height: u32) -> Self {
        Self::filled(width, height, [0.0; 3])
    }

    pub fn filled(width: u32, height: u32, rgb: [f64; 3]) -> Self {
        let n = width as usize * height as usize;
        let mut data = Vec::with_capacity(n * 3);
        for _ in 0..n {
            data.extend_from_slice(&rgb);
        }
        Self { width, height, data }
    }

    pub fn from_data(width: u32, height: u32, data: Vec<f64>) -> Result<Self> {
        if data.len() != width as usize * height as usize * 3 {
            return Err(invalid("image data length does not match dimensions"));
        }
        Ok(Self { width, height, data })
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn pixel(&self, x: u32, y: u32) -> [f64; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: u32, y: u32, rgb: [f64; 3]) {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn check_same_shape(&self, other: &Image) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(invalid(alloc::format!(
                "image dimensions differ: {}x{} vs {}x{}",
                self.width,
                self.height,
                other.width,
                other.height
            )))
        }
    }

    /// Rec.601 luma of each pixel.
    pub fn luminance(&self) -> Vec<f64> {
        self.data.chunks_exact(3).map(|p| luminance(p[0], p[1], p[2])).collect()
    }
}

pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

#[inline]
pub fn luminance(r: f64, g: f64, b: f64) -> f64 {
    LUMA_WEIGHTS[0] * r + LUMA_WEIGHTS[1] * g + LUMA_WEIGHTS[2] * b
}

/// Indices ordered by ascending depth; equal depths keep their input order.
pub fn sort_by_depth(projected: &[ProjectedGaussian]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..projected.len()).collect();
    order.sort_by(|&a, &b| projected[a].depth.total_cmp(&projected[b].depth));
    order
}

/// Inverse of a 2x2 symmetric covariance as `(a, b, c)` = `[[a, b], [b, c]]`.
fn conic_of(pg: &ProjectedGaussian) -> Option<[f64; 3]> {
    let [[a, b], [_, c]] = pg.cov2d;
    let det = a * c - b * b;
    if !(det > 0.0) || !det.is_finite() {
        return None;
    }
    let inv = 1.0 / det;
    Some([c * inv, -b * inv, a * inv])
}

/// Opacity-weighted Gaussian falloff at `pixel`, clamped to `[0, 0.99]`.
pub fn splat_weight(pg: &ProjectedGaussian, pixel: [f64; 2]) -> Result<f64> {
    let conic = conic_of(pg).ok_or_else(|| Error::NumericDegeneracy("singular 2D covariance".into()))?;
    let dx = pixel[0] - pg.mean2d[0];
    let dy = pixel[1] - pg.mean2d[1];
    let m2 = conic[0] * dx * dx + 2.0 * conic[1] * dx * dy + conic[2] * dy * dy;
    if m2 > CUTOFF_MAHALANOBIS_SQ {
        return Ok(0.0);
    }
    Ok((pg.alpha * math::exp(-0.5 * m2)).min(ALPHA_MAX))
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct VisibleSplat {
    pub gaussian: usize,
    pub projected: ProjectedGaussian,
    pub cache: ProjectionCache,
    pub conic: [f64; 3],
    /// Inclusive pixel bounds `[x0, x1, y0, y1]`.
    pub bbox: [i64; 4],
}

/// One splat's contribution to a pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contribution {
    /// Index into the graph's visible-splat list.
    pub splat: u32,
    pub alpha: f64,
    /// Transmittance in front of this splat, `∏(1 - α_j)` over nearer splats.
    pub transmittance: f64,
    /// Unclamped Gaussian falloff `exp(-m²/2)` at the pixel.
    pub falloff: f64,
}

/// Everything the backward pass needs from a forward render.
#[derive(Debug, Clone)]
pub struct RenderGraph {
    pub width: u32,
    pub height: u32,
    pub background: [f64; 3],
    pub(crate) splats: Vec<VisibleSplat>,
    entries: Vec<Contribution>,
    offsets: Vec<usize>,
    final_transmittance: Vec<f64>,
    /// Pixel-channels whose composite fell outside `[0, 1]` and was clamped.
    clamped: Vec<bool>,
    n_gaussians: usize,
}

impl RenderGraph {
    /// Ordered contributions at pixel `(x, y)`, nearest first.
    pub fn contributions(&self, x: u32, y: u32) -> &[Contribution] {
        let p = y as usize * self.width as usize + x as usize;
        &self.entries[self.offsets[p]..self.offsets[p + 1]]
    }

    pub fn final_transmittance(&self, x: u32, y: u32) -> f64 {
        self.final_transmittance[y as usize * self.width as usize + x as usize]
    }

    /// Scene index of a visible splat.
    pub fn gaussian_index(&self, splat: u32) -> usize {
        self.splats[splat as usize].gaussian
    }

    pub fn visible_count(&self) -> usize {
        self.splats.len()
    }

    pub fn scene_len(&self) -> usize {
        self.n_gaussians
    }
}

fn visible_splats(scene: &Scene, cam: &Camera) -> Vec<VisibleSplat> {
    let (w, h) = (cam.width as i64, cam.height as i64);
    let mut projected = Vec::new();
    let mut caches = Vec::new();
    let mut owners = Vec::new();
    for (i, g) in scene.gaussians.iter().enumerate() {
        if let Some((pg, cache)) = project_cached(g, cam, scene.sh_degree) {
            projected.push(pg);
            caches.push(cache);
            owners.push(i);
        }
    }
    let order = sort_by_depth(&projected);
    let mut out = Vec::with_capacity(order.len());
    for k in order {
        let pg = projected[k];
        let Some(conic) = conic_of(&pg) else { continue };
        // The 3σ ellipse lies inside ±3·sqrt(diag); one extra pixel of margin
        // leaves the exact cutoff decision to the per-pixel test.
        let rx = 3.0 * math::sqrt(pg.cov2d[0][0]);
        let ry = 3.0 * math::sqrt(pg.cov2d[1][1]);
        let x0 = libm::floor(pg.mean2d[0] - rx) as i64 - 1;
        let x1 = libm::ceil(pg.mean2d[0] + rx) as i64 + 1;
        let y0 = libm::floor(pg.mean2d[1] - ry) as i64 - 1;
        let y1 = libm::ceil(pg.mean2d[1] + ry) as i64 + 1;
        if x1 < 0 || y1 < 0 || x0 >= w || y0 >= h {
            continue;
        }
        out.push(VisibleSplat {
            gaussian: owners[k],
            projected: pg,
            cache: caches[k],
            conic,
            bbox: [x0.max(0), x1.min(w - 1), y0.max(0), y1.min(h - 1)],
        });
    }
    out
}

/// Pixel columns of row `y` that can lie inside the splat's 3σ ellipse, with
/// one pixel of margin so the exact decision stays with the per-pixel test.
fn row_span(sp: &VisibleSplat, y: f64) -> Option<(usize, usize)> {
    let [ca, cb, cc] = sp.conic;
    let dy = y - sp.projected.mean2d[1];
    let disc = cb * cb * dy * dy - ca * (cc * dy * dy - CUTOFF_MAHALANOBIS_SQ);
    let r = math::sqrt(disc.max(0.0));
    let lo = sp.projected.mean2d[0] + (-cb * dy - r) / ca;
    let hi = sp.projected.mean2d[0] + (-cb * dy + r) / ca;
    let x0 = (libm::floor(lo) as i64 - 1).max(sp.bbox[0]);
    let x1 = (libm::ceil(hi) as i64 + 1).min(sp.bbox[1]);
    if x0 > x1 {
        return None;
    }
    Some((x0 as usize, x1 as usize))
}

struct RowOutput {
    colors: Vec<f64>,
    clamped: Vec<bool>,
    entries: Vec<Contribution>,
    counts: Vec<usize>,
    final_t: Vec<f64>,
}

/// Composite `scene` as seen from `cam` over `background`.
pub fn render(scene: &Scene, cam: &Camera, background: [f64; 3]) -> (Image, RenderGraph) {
    let splats = visible_splats(scene, cam);
    let (w, h) = (cam.width as usize, cam.height as usize);

    // Per-row candidate lists, preserving depth order.
    let mut rows: Vec<Vec<u32>> = vec![Vec::new(); h];
    for (s, sp) in splats.iter().enumerate() {
        for y in sp.bbox[2]..=sp.bbox[3] {
            rows[y as usize].push(s as u32);
        }
    }

    let row_outputs = par::map_indexed(h, |y| {
        let mut out = RowOutput {
            colors: Vec::with_capacity(w * 3),
            clamped: Vec::with_capacity(w * 3),
            entries: Vec::new(),
            counts: Vec::with_capacity(w),
            final_t: Vec::with_capacity(w),
        };
        let mut t = vec![1.0; w];
        let mut done = vec![false; w];
        let mut c = vec![[0.0; 3]; w];
        let mut lists: Vec<Vec<Contribution>> = vec![Vec::new(); w];
        let yf = y as f64;
        // Splat-major within the row: each pixel still sees its splats in depth order.
        for &s in &rows[y] {
            let sp = &splats[s as usize];
            let Some((x0, x1)) = row_span(sp, yf) else { continue };
            let dy = yf - sp.projected.mean2d[1];
            for x in x0..=x1 {
                if done[x] {
                    continue;
                }
                let dx = x as f64 - sp.projected.mean2d[0];
                let m2 = sp.conic[0] * dx * dx + 2.0 * sp.conic[1] * dx * dy + sp.conic[2] * dy * dy;
                if m2 > CUTOFF_MAHALANOBIS_SQ {
                    continue;
                }
                let falloff = math::exp(-0.5 * m2);
                let alpha = (sp.projected.alpha * falloff).min(ALPHA_MAX);
                let next_t = t[x] * (1.0 - alpha);
                if next_t < TRANSMITTANCE_MIN {
                    done[x] = true;
                    continue;
                }
                for ch in 0..3 {
                    c[x][ch] += sp.projected.color[ch] * alpha * t[x];
                }
                lists[x].push(Contribution { splat: s, alpha, transmittance: t[x], falloff });
                t[x] = next_t;
            }
        }
        for x in 0..w {
            for ch in 0..3 {
                let v = c[x][ch] + t[x] * background[ch];
                let clamped = v.clamp(0.0, 1.0);
                out.clamped.push(clamped != v);
                out.colors.push(clamped);
            }
            out.counts.push(lists[x].len());
            out.entries.extend_from_slice(&lists[x]);
            out.final_t.push(t[x]);
        }
        out
    });

    let mut data = Vec::with_capacity(w * h * 3);
    let mut clamped = Vec::with_capacity(w * h * 3);
    let mut entries = Vec::new();
    let mut offsets = Vec::with_capacity(w * h + 1);
    let mut final_transmittance = Vec::with_capacity(w * h);
    offsets.push(0);
    for row in row_outputs {
        data.extend_from_slice(&row.colors);
        clamped.extend_from_slice(&row.clamped);
        entries.extend_from_slice(&row.entries);
        for n in row.counts {
            let last = *offsets.last().unwrap();
            offsets.push(last + n);
        }
        final_transmittance.extend_from_slice(&row.final_t);
    }

    let image = Image { width: cam.width, height: cam.height, data };
    let graph = RenderGraph {
        width: cam.width,
        height: cam.height,
        background,
        splats,
        entries,
        offsets,
        final_transmittance,
        clamped,
        n_gaussians: scene.len(),
    };
    (image, graph)
}

/// Render and drop the graph.
pub fn render_image(scene: &Scene, cam: &Camera, background: [f64; 3]) -> Image {
    render(scene, cam, background).0
}

/// Gradients for every Gaussian parameter, laid out like the scene itself.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub gaussians: Vec<Gaussian>,
    /// Gradient with respect to each splat's screen-space mean (pixels).
    pub screen_mean: Vec<[f64; 2]>,
}

impl GradientSet {
    pub fn zeros_like(scene: &Scene) -> Self {
        let k = sh::coeff_count(scene.sh_degree);
        let zero = Gaussian {
            position: [0.0; 3],
            rotation: [0.0; 4],
            log_scale: [0.0; 3],
            opacity_logit: 0.0,
            sh: vec![[0.0; 3]; k],
        };
        Self { gaussians: vec![zero; scene.len()], screen_mean: vec![[0.0; 2]; scene.len()] }
    }

    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }

    pub fn add_assign(&mut self, other: &GradientSet) {
        for (a, b) in self.gaussians.iter_mut().zip(&other.gaussians) {
            for k in 0..3 {
                a.position[k] += b.position[k];
                a.log_scale[k] += b.log_scale[k];
            }
            for k in 0..4 {
                a.rotation[k] += b.rotation[k];
            }
            a.opacity_logit += b.opacity_logit;
            for (x, y) in a.sh.iter_mut().zip(&b.sh) {
                for ch in 0..3 {
                    x[ch] += y[ch];
                }
            }
        }
        for (a, b) in self.screen_mean.iter_mut().zip(&other.screen_mean) {
            a[0] += b[0];
            a[1] += b[1];
        }
    }

    pub fn is_finite(&self) -> bool {
        self.gaussians.iter().all(Gaussian::is_finite)
            && self.screen_mean.iter().flatten().all(|v| v.is_finite())
    }
}

/// Per-splat gradients with respect to screen-space quantities.
#[derive(Debug, Clone, Copy, Default)]
struct SplatGrad {
    mean: [f64; 2],
    conic: [f64; 3],
    opacity: f64,
    color: [f64; 3],
}

impl SplatGrad {
    fn add(&mut self, o: &SplatGrad) {
        self.mean[0] += o.mean[0];
        self.mean[1] += o.mean[1];
        for k in 0..3 {
            self.conic[k] += o.conic[k];
            self.color[k] += o.color[k];
        }
        self.opacity += o.opacity;
    }
}

/// Chain `d_image` (same layout as [`Image::data`]) back to every Gaussian
/// parameter. `graph` must come from `render` on the same scene and camera.
pub fn backward(graph: &RenderGraph, d_image: &[f64], scene: &Scene, cam: &Camera) -> Result<GradientSet> {
    let (w, h) = (graph.width as usize, graph.height as usize);
    if d_image.len() != w * h * 3 {
        return Err(invalid("upstream gradient does not match image size"));
    }
    if graph.n_gaussians != scene.len() {
        return Err(invalid("render graph was built for a different scene"));
    }
    let n_splats = graph.splats.len();

    // Each row accumulates into its own buffer; rows are summed in order so the
    // result does not depend on how rows were scheduled.
    let row_grads = par::map_indexed(h, |y| {
        let mut acc = vec![SplatGrad::default(); n_splats];
        for x in 0..w {
            let p = y * w + x;
            let mut g = [0.0; 3];
            let mut any = false;
            for ch in 0..3 {
                if !graph.clamped[p * 3 + ch] {
                    g[ch] = d_image[p * 3 + ch];
                    any |= g[ch] != 0.0;
                }
            }
            if !any {
                continue;
            }
            let t_final = graph.final_transmittance[p];
            let mut behind = graph.background.map(|b| b * t_final);
            for e in graph.entries[graph.offsets[p]..graph.offsets[p + 1]].iter().rev() {
                let sp = &graph.splats[e.splat as usize];
                let sg = &mut acc[e.splat as usize];
                let c = sp.projected.color;
                let (alpha, t) = (e.alpha, e.transmittance);
                let mut d_alpha = 0.0;
                for ch in 0..3 {
                    sg.color[ch] += g[ch] * alpha * t;
                    d_alpha += g[ch] * (c[ch] * t - behind[ch] / (1.0 - alpha));
                    behind[ch] += c[ch] * alpha * t;
                }
                let dx = x as f64 - sp.projected.mean2d[0];
                let dy = y as f64 - sp.projected.mean2d[1];
                let [ca, cb, cc] = sp.conic;
                let falloff = e.falloff;
                if sp.projected.alpha * falloff > ALPHA_MAX {
                    continue;
                }
                sg.opacity += d_alpha * falloff;
                let d_power = d_alpha * alpha;
                sg.mean[0] += d_power * (ca * dx + cb * dy);
                sg.mean[1] += d_power * (cb * dx + cc * dy);
                sg.conic[0] += d_power * (-0.5 * dx * dx);
                sg.conic[1] += d_power * (-dx * dy);
                sg.conic[2] += d_power * (-0.5 * dy * dy);
            }
        }
        acc
    });
    let mut splat_grads = vec![SplatGrad::default(); n_splats];
    for row in &row_grads {
        for (a, b) in splat_grads.iter_mut().zip(row) {
            a.add(b);
        }
    }

    let mut out = GradientSet::zeros_like(scene);
    for (sp, sg) in graph.splats.iter().zip(&splat_grads) {
        let g = &scene.gaussians[sp.gaussian];
        let grad = &mut out.gaussians[sp.gaussian];
        out.screen_mean[sp.gaussian] = sg.mean;
        chain_splat(sp, sg, g, cam, scene.sh_degree, grad);
    }
    Ok(out)
}

/// Screen-space splat gradients to the Gaussian's own parameters.
fn chain_splat(sp: &VisibleSplat, sg: &SplatGrad, g: &Gaussian, cam: &Camera, degree: usize, out: &mut Gaussian) {
    let cache = &sp.cache;
    let [ca, cb, cc] = sp.conic;
    let conic = [[ca, cb], [cb, cc]];
    // Symmetric dL/dX with the shared off-diagonal split evenly.
    let gx = [[sg.conic[0], 0.5 * sg.conic[1]], [0.5 * sg.conic[1], sg.conic[2]]];
    // dL/dΣ' = -X G X
    let mut xg = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            xg[i][j] = conic[i][0] * gx[0][j] + conic[i][1] * gx[1][j];
        }
    }
    let mut g_cov2 = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            g_cov2[i][j] = -(xg[i][0] * conic[0][j] + xg[i][1] * conic[1][j]);
        }
    }

    // Σ' = T Σ Tᵀ, T = J W (2x3).
    let t = cache.jw;
    let sigma = &cache.cov3d;
    let mut g_sigma: Mat3 = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let mut v = 0.0;
            for a in 0..2 {
                for b in 0..2 {
                    v += t[a][i] * g_cov2[a][b] * t[b][j];
                }
            }
            g_sigma[i][j] = v;
        }
    }
    // dL/dT = 2 G' T Σ
    let mut g_t = [[0.0; 3]; 2];
    let ts = [math::mat_t_vec(sigma, t[0]), math::mat_t_vec(sigma, t[1])];
    for a in 0..2 {
        for c in 0..3 {
            g_t[a][c] = 2.0 * (g_cov2[a][0] * ts[0][c] + g_cov2[a][1] * ts[1][c]);
        }
    }
    // dL/dJ = dL/dT Wᵀ
    let wr = &cam.rotation;
    let mut g_j = [[0.0; 3]; 2];
    for a in 0..2 {
        for k in 0..3 {
            g_j[a][k] = g_t[a][0] * wr[k][0] + g_t[a][1] * wr[k][1] + g_t[a][2] * wr[k][2];
        }
    }
    let [px, py, pz] = cache.cam_point;
    let (fx, fy) = (cam.fx, cam.fy);
    let iz = 1.0 / pz;
    let iz2 = iz * iz;
    let iz3 = iz2 * iz;
    let mut d_cam = [0.0; 3];
    d_cam[0] += g_j[0][2] * (-fx * iz2);
    d_cam[1] += g_j[1][2] * (-fy * iz2);
    d_cam[2] += g_j[0][0] * (-fx * iz2)
        + g_j[0][2] * (2.0 * fx * px * iz3)
        + g_j[1][1] * (-fy * iz2)
        + g_j[1][2] * (2.0 * fy * py * iz3);
    // Screen-space mean.
    d_cam[0] += sg.mean[0] * fx * iz;
    d_cam[1] += sg.mean[1] * fy * iz;
    d_cam[2] += sg.mean[0] * (-fx * px * iz2) + sg.mean[1] * (-fy * py * iz2);
    let mut d_pos = math::mat_t_vec(wr, d_cam);

    // Colour through SH and the view direction.
    let basis = sh::basis(cache.dir, degree);
    let basis_grad = sh::basis_grad(cache.dir, degree);
    let mut d_dir = [0.0; 3];
    for ch in 0..3 {
        if cache.color_clamped[ch] {
            continue;
        }
        let gc = sg.color[ch];
        for (j, coeff) in g.sh.iter().enumerate() {
            out.sh[j][ch] += gc * basis[j];
            for k in 0..3 {
                d_dir[k] += gc * coeff[ch] * basis_grad[j][k];
            }
        }
    }
    let vn = math::norm(cache.view);
    let proj = math::dot(cache.dir, d_dir);
    for k in 0..3 {
        d_pos[k] += (d_dir[k] - cache.dir[k] * proj) / vn;
    }
    for k in 0..3 {
        out.position[k] += d_pos[k];
    }

    // Σ = M Mᵀ, M = R S.
    let r = &cache.rotation;
    let s = cache.scale;
    let mut g_m = [[0.0; 3]; 3];
    for i in 0..3 {
        for k in 0..3 {
            let mut v = 0.0;
            for j in 0..3 {
                v += g_sigma[i][j] * r[j][k] * s[k];
            }
            g_m[i][k] = 2.0 * v;
        }
    }
    let mut g_r = [[0.0; 3]; 3];
    for k in 0..3 {
        let mut d_s = 0.0;
        for i in 0..3 {
            d_s += g_m[i][k] * r[i][k];
            g_r[i][k] = g_m[i][k] * s[k];
        }
        out.log_scale[k] += d_s * s[k];
    }
    let d_q = rotation_grad_to_quat(&g_r, cache.unit_quat);
    let dot_q: f64 = (0..4).map(|k| d_q[k] * cache.unit_quat[k]).sum();
    for k in 0..4 {
        out.rotation[k] += (d_q[k] - cache.unit_quat[k] * dot_q) / cache.quat_norm;
    }

    let o = cache.opacity;
    out.opacity_logit += sg.opacity * o * (1.0 - o);
}

/// Pull `dL/dR` back to the unit quaternion `(w, x, y, z)`.
fn rotation_grad_to_quat(g: &Mat3, [w, x, y, z]: [f64; 4]) -> [f64; 4] {
    let dw = 2.0 * (-z * g[0][1] + y * g[0][2] + z * g[1][0] - x * g[1][2] - y * g[2][0] + x * g[2][1]);
    let dx = 2.0
        * (y * g[0][1] + z * g[0][2] + y * g[1][0] - 2.0 * x * g[1][1] - w * g[1][2] + z * g[2][0] + w * g[2][1]
            - 2.0 * x * g[2][2]);
    let dy = 2.0
        * (-2.0 * y * g[0][0] + x * g[0][1] + w * g[0][2] + x * g[1][0] + z * g[1][2] - w * g[2][0] + z * g[2][1]
            - 2.0 * y * g[2][2]);
    let dz = 2.0
        * (-2.0 * z * g[0][0] - w * g[0][1] + x * g[0][2] + w * g[1][0] - 2.0 * z * g[1][1] + y * g[1][2]
            + x * g[2][0]
            + y * g[2][1]);
    [dw, dx, dy, dz]
}
