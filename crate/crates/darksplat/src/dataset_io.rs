//! Dataset directories.
//!
//! ```text
//! poses.json          intrinsics, per-view timestamp and 3×4 world-to-camera pose
//! dark/0000.png ...   16-bit linear dark frames
//! bright/0000.png     optional ground truth
//! events.evs          binary events (or events.csv)
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use darksplat_core::scene::{Bounds, Camera};
use darksplat_core::synth::Dataset;
use darksplat_core::Image;
use serde::{Deserialize, Serialize};

use crate::error::{DataError, Result};
use crate::event_io::{read_events, write_events};
use crate::image_io::{load_png, save_png};

pub const POSES_FILE: &str = "poses.json";
pub const DARK_DIR: &str = "dark";
pub const BRIGHT_DIR: &str = "bright";
pub const EVENTS_BINARY: &str = "events.evs";
pub const EVENTS_TEXT: &str = "events.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewPose {
    pub timestamp: f64,
    pub world_to_camera: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsJson {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

/// Contents of `poses.json`. `bounds` is an optional extension; without it
/// the scene box is derived from the camera positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosesFile {
    pub intrinsics: Intrinsics,
    pub views: Vec<ViewPose>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<BoundsJson>,
}

impl PosesFile {
    pub fn from_cameras(cameras: &[Camera], bounds: Option<Bounds>) -> Option<Self> {
        let first = cameras.first()?;
        Some(Self {
            intrinsics: Intrinsics {
                fx: first.fx,
                fy: first.fy,
                cx: first.cx,
                cy: first.cy,
                width: first.width,
                height: first.height,
            },
            views: cameras
                .iter()
                .map(|c| ViewPose { timestamp: c.timestamp, world_to_camera: c.to_row_major().to_vec() })
                .collect(),
            bounds: bounds.map(|b| BoundsJson { min: b.min, max: b.max }),
        })
    }

    pub fn cameras(&self, path: &Path) -> Result<Vec<Camera>> {
        let k = &self.intrinsics;
        self.views
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let m: [f64; 12] = v.world_to_camera.as_slice().try_into().map_err(|_| {
                    DataError::parse(path, 0, format!("view {i}: world_to_camera needs 12 numbers"))
                })?;
                let mut cam = Camera {
                    fx: k.fx,
                    fy: k.fy,
                    cx: k.cx,
                    cy: k.cy,
                    width: k.width,
                    height: k.height,
                    rotation: [[0.0; 3]; 3],
                    translation: [0.0; 3],
                    timestamp: v.timestamp,
                };
                cam.set_row_major(&m);
                cam.validate().map_err(|e| DataError::parse(path, 0, format!("view {i}: {e}")))?;
                Ok(cam)
            })
            .collect()
    }

    /// Stored bounds, or a cube around the camera centroid reaching a quarter
    /// of the mean camera distance.
    pub fn bounds_or_default(&self, cameras: &[Camera]) -> Bounds {
        if let Some(b) = &self.bounds {
            return Bounds { min: b.min, max: b.max };
        }
        let n = cameras.len().max(1) as f64;
        let centers: Vec<[f64; 3]> = cameras.iter().map(Camera::center).collect();
        let c: [f64; 3] = std::array::from_fn(|k| centers.iter().map(|p| p[k]).sum::<f64>() / n);
        let dist = centers
            .iter()
            .map(|p| ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2) + (p[2] - c[2]).powi(2)).sqrt())
            .sum::<f64>()
            / n;
        let h = (0.25 * dist).max(1e-3);
        Bounds { min: c.map(|v| v - h), max: c.map(|v| v + h) }
    }
}

pub fn frame_name(index: usize) -> String {
    format!("{index:04}.png")
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| DataError::io(path, e))
}

pub fn write_poses(path: &Path, poses: &PosesFile) -> Result<()> {
    let mut text = serde_json::to_string_pretty(poses).expect("poses serialize");
    text.push('\n');
    write_text(path, &text)
}

pub fn read_poses(path: &Path) -> Result<PosesFile> {
    let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| DataError::parse(path, e.line(), e.to_string()))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| DataError::io(path, e))
}

/// Write `dataset` under `dir`; events use the binary format unless `text_events`.
pub fn save_dataset(dataset: &Dataset, dir: &Path, text_events: bool) -> Result<()> {
    create_dir(dir)?;
    let poses = PosesFile::from_cameras(&dataset.cameras, Some(dataset.bounds))
        .ok_or_else(|| DataError::core(dir, darksplat_core::Error::InvalidParameter("dataset has no views".into())))?;
    write_poses(&dir.join(POSES_FILE), &poses)?;
    save_frames(&dir.join(DARK_DIR), &dataset.dark_frames)?;
    if let Some(bright) = &dataset.bright_frames {
        save_frames(&dir.join(BRIGHT_DIR), bright)?;
    }
    let events = dir.join(if text_events { EVENTS_TEXT } else { EVENTS_BINARY });
    write_events(&events, &dataset.events)
}

pub fn save_frames(dir: &Path, frames: &[Image]) -> Result<()> {
    create_dir(dir)?;
    for (i, f) in frames.iter().enumerate() {
        save_png(&dir.join(frame_name(i)), f)?;
    }
    Ok(())
}

fn load_frames(dir: &Path, n: usize) -> Result<Vec<Image>> {
    (0..n).map(|i| load_png(&dir.join(frame_name(i)))).collect()
}

fn events_path(dir: &Path) -> PathBuf {
    let bin = dir.join(EVENTS_BINARY);
    if bin.exists() {
        bin
    } else {
        dir.join(EVENTS_TEXT)
    }
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let poses_path = dir.join(POSES_FILE);
    let poses = read_poses(&poses_path)?;
    let cameras = poses.cameras(&poses_path)?;
    let bounds = poses.bounds_or_default(&cameras);
    let dark_frames = load_frames(&dir.join(DARK_DIR), cameras.len())?;
    let bright_dir = dir.join(BRIGHT_DIR);
    let bright_frames = if bright_dir.is_dir() { Some(load_frames(&bright_dir, cameras.len())?) } else { None };
    let events_file = events_path(dir);
    let events = read_events(&events_file)?;
    let dataset = Dataset { cameras, dark_frames, events, bright_frames, bounds };
    dataset.validate().map_err(|e| DataError::core(dir, e))?;
    Ok(dataset)
}
