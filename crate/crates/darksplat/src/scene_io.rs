//! Binary scene files.
//!
//! Layout (little-endian): magic `DSGS`, `u32` version, `u32` SH degree,
//! `u64` Gaussian count, 32-byte SHA-256 of the creating configuration, then
//! per Gaussian: position (3), rotation (4), log-scale (3), opacity logit (1)
//! and SH coefficients (3 per coefficient), all `f64`.

use std::fs;
use std::path::Path;

use darksplat_core::sh::coeff_count;
use darksplat_core::{Gaussian, Scene};
use sha2::{Digest, Sha256};

use crate::error::{DataError, Result};

pub const SCENE_MAGIC: &[u8; 4] = b"DSGS";
pub const SCENE_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 8 + 32;

/// A scene plus the hash of the configuration that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneFile {
    pub scene: Scene,
    pub config_hash: [u8; 32],
}

/// SHA-256 of a configuration's textual form.
pub fn config_hash(text: &str) -> [u8; 32] {
    Sha256::digest(text.as_bytes()).into()
}

pub fn encode_scene(file: &SceneFile) -> Vec<u8> {
    let k = coeff_count(file.scene.sh_degree);
    let mut out = Vec::with_capacity(HEADER_LEN + file.scene.len() * (11 + 3 * k) * 8);
    out.extend_from_slice(SCENE_MAGIC);
    out.extend_from_slice(&SCENE_VERSION.to_le_bytes());
    out.extend_from_slice(&(file.scene.sh_degree as u32).to_le_bytes());
    out.extend_from_slice(&(file.scene.len() as u64).to_le_bytes());
    out.extend_from_slice(&file.config_hash);
    for g in &file.scene.gaussians {
        let values = g.position.iter().chain(&g.rotation).chain(&g.log_scale).chain([&g.opacity_logit]);
        for v in values.chain(g.sh.iter().flatten()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(DataError::corrupt(self.path, self.pos as u64, "truncated scene file"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s<const N: usize>(&mut self) -> Result<[f64; N]> {
        let mut out = [0.0; N];
        for v in &mut out {
            *v = self.f64()?;
        }
        Ok(out)
    }
}

pub fn decode_scene(path: &Path, bytes: &[u8]) -> Result<SceneFile> {
    let mut r = Reader { path, bytes, pos: 0 };
    if r.take(4)? != SCENE_MAGIC {
        return Err(DataError::corrupt(path, 0, "bad magic, not a scene file"));
    }
    let version = r.u32()?;
    if version != SCENE_VERSION {
        return Err(DataError::UnsupportedVersion { path: path.to_path_buf(), found: version, expected: SCENE_VERSION });
    }
    let degree = r.u32()? as usize;
    if degree > darksplat_core::sh::MAX_SH_DEGREE {
        return Err(DataError::corrupt(path, 8, format!("SH degree {degree} out of range")));
    }
    let count = r.u64()?;
    let config_hash: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
    let k = coeff_count(degree);
    let per = (11 + 3 * k) * 8;
    let expected = (count as u128) * per as u128;
    if expected != (bytes.len() - HEADER_LEN) as u128 {
        let msg = format!("header announces {count} gaussians but the body holds {} bytes", bytes.len() - HEADER_LEN);
        return Err(DataError::corrupt(path, HEADER_LEN as u64, msg));
    }
    let mut gaussians = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let position = r.f64s::<3>()?;
        let rotation = r.f64s::<4>()?;
        let log_scale = r.f64s::<3>()?;
        let opacity_logit = r.f64()?;
        let sh = (0..k).map(|_| r.f64s::<3>()).collect::<Result<Vec<_>>>()?;
        gaussians.push(Gaussian { position, rotation, log_scale, opacity_logit, sh });
    }
    let scene = Scene::new(degree, gaussians).map_err(|e| DataError::core(path, e))?;
    Ok(SceneFile { scene, config_hash })
}

pub fn save_scene(path: &Path, file: &SceneFile) -> Result<()> {
    fs::write(path, encode_scene(file)).map_err(|e| DataError::io(path, e))
}

pub fn load_scene(path: &Path) -> Result<SceneFile> {
    let bytes = fs::read(path).map_err(|e| DataError::io(path, e))?;
    decode_scene(path, &bytes)
}

/// Load and insist on a particular SH degree.
pub fn load_scene_with_degree(path: &Path, sh_degree: usize) -> Result<SceneFile> {
    let file = load_scene(path)?;
    if file.scene.sh_degree != sh_degree {
        let msg = format!("scene has SH degree {}, expected {sh_degree}", file.scene.sh_degree);
        return Err(DataError::corrupt(path, 8, msg));
    }
    Ok(file)
}

#[cfg(test)]
mod tests {
    use super::*;
    use darksplat_core::scene::Bounds;
    use darksplat_core::train::init_random_cloud;

    fn sample(degree: usize) -> SceneFile {
        let b = Bounds { min: [-1.0; 3], max: [1.0; 3] };
        let mut scene = init_random_cloud(7, &b, degree, 3).unwrap();
        scene.gaussians[2].position[0] = -0.0;
        scene.gaussians[3].log_scale[1] = f64::MIN_POSITIVE;
        SceneFile { scene, config_hash: config_hash("seed=3") }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        for degree in 0..=3 {
            let f = sample(degree);
            let back = decode_scene(Path::new("s"), &encode_scene(&f)).unwrap();
            assert_eq!(encode_scene(&back), encode_scene(&f));
            assert_eq!(back, f);
        }
    }

    #[test]
    fn truncation_and_trailing_bytes_are_corrupt() {
        let bytes = encode_scene(&sample(1));
        for cut in [3, 10, HEADER_LEN - 1, HEADER_LEN + 5, bytes.len() - 1] {
            assert!(matches!(decode_scene(Path::new("s"), &bytes[..cut]), Err(DataError::Corrupt { .. })), "cut {cut}");
        }
        let mut longer = bytes.clone();
        longer.push(0);
        assert!(decode_scene(Path::new("s"), &longer).is_err());
    }

    #[test]
    fn version_bump_is_rejected() {
        let mut bytes = encode_scene(&sample(1));
        bytes[4] = 2;
        assert!(matches!(
            decode_scene(Path::new("s"), &bytes),
            Err(DataError::UnsupportedVersion { found: 2, expected: 1, .. })
        ));
    }

    #[test]
    fn degree_mismatch_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.gs");
        save_scene(&path, &sample(2)).unwrap();
        assert!(load_scene_with_degree(&path, 2).is_ok());
        assert!(load_scene_with_degree(&path, 1).is_err());
    }

    #[test]
    fn empty_scene() {
        let f = SceneFile { scene: Scene::empty(1), config_hash: [0; 32] };
        assert_eq!(decode_scene(Path::new("s"), &encode_scene(&f)).unwrap(), f);
    }
}
