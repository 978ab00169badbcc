//! On-disk dataset layout:
//!
//! ```text
//! <dir>/images/00000.pgm ...   8-bit binary PGM frames
//! <dir>/poses.csv              index,timestamp,px,py,pz,qw,qx,qy,qz,arclength,section
//! <dir>/expert_labels.txt      start_index end_index zone_name[:subclass_count]
//! <dir>/manifest.txt           key=value
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;

use super::trajectory::Trajectory;
use super::world::TubeWorld;
use super::SimError;
use crate::geom::{CameraIntrinsics, Pose, Rotation};
use crate::image::Raster;
use crate::par::{self, Execution};

pub const POSES_HEADER: &str = "index,timestamp,px,py,pz,qw,qx,qy,qz,arclength,section";

/// One row of `poses.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseRecord {
    pub index: usize,
    pub timestamp: f64,
    pub position: [f64; 3],
    /// `[w, x, y, z]`, unit norm, `w ≥ 0`.
    pub quaternion: [f64; 4],
    pub arclength: f64,
    pub section: String,
}

impl PoseRecord {
    pub fn from_pose(index: usize, timestamp: f64, pose: &Pose, arclength: f64, section: &str) -> Self {
        PoseRecord {
            index,
            timestamp,
            position: [pose.position.x, pose.position.y, pose.position.z],
            quaternion: pose.rotation.to_quaternion(),
            arclength,
            section: section.to_string(),
        }
    }

    pub fn pose(&self) -> Pose {
        Pose::new(Rotation::from_quaternion(self.quaternion), Vector3::from(self.position))
    }

    pub fn to_csv_row(&self) -> String {
        let [px, py, pz] = self.position;
        let [qw, qx, qy, qz] = self.quaternion;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.index, self.timestamp, px, py, pz, qw, qx, qy, qz, self.arclength, self.section
        )
    }

    pub fn from_csv_row(row: &str) -> Result<Self, SimError> {
        let cols: Vec<&str> = row.split(',').collect();
        if cols.len() != 11 {
            return Err(SimError::Format(format!("poses row needs 11 columns: {row}")));
        }
        let f = |i: usize| cols[i].parse::<f64>().map_err(|e| SimError::Format(format!("column {i} of {row}: {e}")));
        Ok(PoseRecord {
            index: cols[0].parse().map_err(|e| SimError::Format(format!("index of {row}: {e}")))?,
            timestamp: f(1)?,
            position: [f(2)?, f(3)?, f(4)?],
            quaternion: [f(5)?, f(6)?, f(7)?, f(8)?],
            arclength: f(9)?,
            section: cols[10].to_string(),
        })
    }
}

pub fn write_poses_csv(records: &[PoseRecord]) -> String {
    let mut out = String::from(POSES_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.to_csv_row());
        out.push('\n');
    }
    out
}

pub fn read_poses_csv(text: &str) -> Result<Vec<PoseRecord>, SimError> {
    let mut lines = text.lines();
    if lines.next() != Some(POSES_HEADER) {
        return Err(SimError::Format("poses.csv header mismatch".into()));
    }
    lines.filter(|l| !l.is_empty()).map(PoseRecord::from_csv_row).collect()
}

/// Images plus ground truth for one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub intrinsics: CameraIntrinsics,
    pub records: Vec<PoseRecord>,
    /// Frames after 8-bit quantization, identical to what is written to disk.
    pub images: Vec<Raster>,
    pub world_seed: u64,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn poses(&self) -> Vec<Pose> {
        self.records.iter().map(PoseRecord::pose).collect()
    }

    pub fn image_path(dir: &Path, index: usize) -> PathBuf {
        dir.join("images").join(format!("{index:05}.pgm"))
    }
}

/// Renders every trajectory sample. Frames are quantized to 8 bits.
pub fn render_dataset(
    world: &TubeWorld,
    trajectory: &Trajectory,
    intrinsics: &CameraIntrinsics,
    exec: Execution,
) -> Result<Dataset, SimError> {
    let images = par::map(exec, &trajectory.samples, |s| {
        world.render(&s.pose, intrinsics).map(|img| Raster::from_u8(img.width, img.height, &img.to_u8()))
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    let records = trajectory
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| PoseRecord::from_pose(i, s.timestamp, &s.pose, s.arclength, world.section_name(s.arclength)))
        .collect();
    Ok(Dataset { intrinsics: *intrinsics, records, images, world_seed: world.seed })
}

/// One line of the expert-label file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelRange {
    pub start: usize,
    pub end: usize,
    pub name: String,
    pub subclasses: usize,
}

impl LabelRange {
    pub fn to_line(&self) -> String {
        if self.subclasses > 1 {
            format!("{} {} {}:{}", self.start, self.end, self.name, self.subclasses)
        } else {
            format!("{} {} {}", self.start, self.end, self.name)
        }
    }
}

/// Groups consecutive frames by section and splits the larger sections so
/// the total zone count equals `zone_count` (largest-remainder allocation,
/// at least one zone per section and at least two frames per zone).
pub fn expert_labels(records: &[PoseRecord], zone_count: usize) -> Result<Vec<LabelRange>, SimError> {
    let mut ranges: Vec<LabelRange> = Vec::new();
    for r in records {
        match ranges.last_mut() {
            Some(last) if last.name == r.section => last.end = r.index,
            _ => ranges.push(LabelRange { start: r.index, end: r.index, name: r.section.clone(), subclasses: 1 }),
        }
    }
    if zone_count < ranges.len() {
        return Err(SimError::InvalidConfig(format!(
            "{zone_count} expert zones cannot cover {} sections",
            ranges.len()
        )));
    }
    let total = records.len() as f64;
    let sizes: Vec<usize> = ranges.iter().map(|r| r.end - r.start + 1).collect();
    let extra = zone_count - ranges.len();
    // ideal share of the extra zones, then largest remainders
    let ideal: Vec<f64> = sizes.iter().map(|&n| n as f64 / total * zone_count as f64 - 1.0).collect();
    let mut alloc: Vec<usize> = ideal.iter().map(|v| v.max(0.0).floor() as usize).collect();
    let mut given: usize = alloc.iter().sum();
    while given > extra {
        let i = (0..alloc.len()).filter(|&i| alloc[i] > 0).max_by(|&a, &b| {
            (alloc[a] as f64 - ideal[a]).total_cmp(&(alloc[b] as f64 - ideal[b]))
        });
        let Some(i) = i else { break };
        alloc[i] -= 1;
        given -= 1;
    }
    while given < extra {
        let i = (0..alloc.len())
            .filter(|&i| sizes[i] >= 2 * (alloc[i] + 2))
            .max_by(|&a, &b| (ideal[a] - alloc[a] as f64).total_cmp(&(ideal[b] - alloc[b] as f64)).then(b.cmp(&a)))
            .ok_or_else(|| SimError::InvalidConfig(format!("too few frames for {zone_count} expert zones")))?;
        alloc[i] += 1;
        given += 1;
    }
    for (r, a) in ranges.iter_mut().zip(alloc) {
        r.subclasses = a + 1;
    }
    Ok(ranges)
}

pub fn write_labels(ranges: &[LabelRange]) -> String {
    ranges.iter().map(|r| r.to_line() + "\n").collect()
}

fn manifest_text(entries: &BTreeMap<String, String>) -> String {
    entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}

pub fn read_manifest(text: &str) -> BTreeMap<String, String> {
    text.lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect()
}

/// Writes the dataset and its expert-label file. `extra` entries are echoed
/// into the manifest.
pub fn write_dataset(
    dataset: &Dataset,
    dir: &Path,
    expert_zones: usize,
    extra: &BTreeMap<String, String>,
) -> Result<(), SimError> {
    fs::create_dir_all(dir.join("images"))?;
    for (r, img) in dataset.records.iter().zip(&dataset.images) {
        img.write_pgm(&Dataset::image_path(dir, r.index))?;
    }
    fs::write(dir.join("poses.csv"), write_poses_csv(&dataset.records))?;
    fs::write(dir.join("expert_labels.txt"), write_labels(&expert_labels(&dataset.records, expert_zones)?))?;
    let k = &dataset.intrinsics;
    let mut m = extra.clone();
    for (key, v) in [
        ("world_seed", dataset.world_seed.to_string()),
        ("frames", dataset.len().to_string()),
        ("width", k.width.to_string()),
        ("height", k.height.to_string()),
        ("fx", k.fx.to_string()),
        ("fy", k.fy.to_string()),
        ("cx", k.cx.to_string()),
        ("cy", k.cy.to_string()),
        ("expert_zones", expert_zones.to_string()),
    ] {
        m.insert(key.to_string(), v);
    }
    fs::write(dir.join("manifest.txt"), manifest_text(&m))?;
    Ok(())
}

pub fn read_dataset(dir: &Path) -> Result<Dataset, SimError> {
    let manifest = read_manifest(&fs::read_to_string(dir.join("manifest.txt"))?);
    let get = |k: &str| manifest.get(k).ok_or_else(|| SimError::Format(format!("manifest lacks {k}")));
    let num = |k: &str| -> Result<f64, SimError> { get(k)?.parse().map_err(|e| SimError::Format(format!("{k}: {e}"))) };
    let int = |k: &str| -> Result<u64, SimError> { get(k)?.parse().map_err(|e| SimError::Format(format!("{k}: {e}"))) };
    let intrinsics = CameraIntrinsics::new(
        num("fx")?,
        num("fy")?,
        num("cx")?,
        num("cy")?,
        int("width")? as usize,
        int("height")? as usize,
    )
    .map_err(|e| SimError::Format(e.to_string()))?;
    let records = read_poses_csv(&fs::read_to_string(dir.join("poses.csv"))?)?;
    let images = records
        .iter()
        .map(|r| Raster::read_pgm(&Dataset::image_path(dir, r.index)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Dataset { intrinsics, records, images, world_seed: int("world_seed")? })
}
