use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{Zone, ZoneError, ZonePartition};
use crate::features::{detect_and_describe, DetectorParams, FrameFeatures};
use crate::geom::{
    build_zone_map_with, read_zone_map, write_zone_map, CameraIntrinsics, GeomError, Pose, Rotation, SolverConfig,
    ZoneMapFile,
};
use crate::image::Raster;
use crate::par::{self, Execution};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MapParams {
    /// Frames selected per zone for triangulation (≥ 3).
    pub m_select: usize,
    /// Re-projection error bound for keeping a map point (px).
    pub delta_r: f64,
    pub detector: DetectorParams,
    pub solver: SolverConfig,
}

impl Default for MapParams {
    fn default() -> Self {
        MapParams { m_select: 12, delta_r: 10.0, detector: DetectorParams::default(), solver: SolverConfig::default() }
    }
}

/// A zone whose map could not be built; the zone keeps an empty map.
#[derive(Debug, Clone, PartialEq)]
pub struct MapWarning {
    pub zone_id: usize,
    pub reason: GeomError,
}

/// `m` evenly spaced offsets into a zone of `len` images, endpoints
/// included: `⌊k(len−1)/(m−1)⌋`. Duplicates collapse when `len < m`.
pub fn even_selection(len: usize, m: usize) -> Vec<usize> {
    if len == 0 || m == 0 {
        return Vec::new();
    }
    if m == 1 {
        return vec![0];
    }
    let mut out: Vec<usize> = (0..m).map(|k| k * (len - 1) / (m - 1)).collect();
    out.dedup();
    out
}

/// Triangulates a landmark map for every zone from evenly selected training
/// frames. Zones whose map comes out empty are reported, not failed.
pub fn build_all_maps(
    mut partition: ZonePartition,
    images: &[Raster],
    poses: &[Pose],
    intrinsics: &CameraIntrinsics,
    params: &MapParams,
    exec: Execution,
) -> Result<(ZonePartition, Vec<MapWarning>), ZoneError> {
    if params.m_select < 3 {
        return Err(ZoneError::Geom(GeomError::TooFewFrames(params.m_select)));
    }
    partition.validate(images.len())?;
    let built = par::map(exec, &partition.zones, |zone| -> Result<_, ZoneError> {
        let picks: Vec<usize> = even_selection(zone.members.len(), params.m_select)
            .into_iter()
            .map(|o| zone.members.start + o)
            .collect();
        let frames: Vec<FrameFeatures> = picks
            .iter()
            .map(|&i| detect_and_describe(&images[i], &params.detector, i))
            .collect::<Result<_, _>>()?;
        let frame_poses: Vec<Pose> = picks.iter().map(|&i| poses[i]).collect();
        Ok(build_zone_map_with(
            zone.zone_id,
            &frames,
            &frame_poses,
            intrinsics,
            params.delta_r,
            params.detector.ratio,
            &params.solver,
            Execution::Sequential,
        ))
    });
    let mut warnings = Vec::new();
    for (zone, result) in partition.zones.iter_mut().zip(built) {
        match result? {
            Ok(map) => zone.map = map,
            Err(reason) => {
                log::warn!("zone {}: no map ({reason})", zone.zone_id);
                zone.map.clear();
                warnings.push(MapWarning { zone_id: zone.zone_id, reason });
            }
        }
    }
    Ok((partition, warnings))
}

const MANIFEST: &str = "zones.txt";

fn map_path(dir: &Path, zone_id: usize) -> std::path::PathBuf {
    dir.join("maps").join(format!("zone_{zone_id:03}.map"))
}

/// Writes `zones.txt` (members, median poses, labels) and one map file per
/// zone under `maps/`.
pub fn write_partition(dir: &Path, partition: &ZonePartition, delta_r: f64) -> Result<(), ZoneError> {
    fs::create_dir_all(dir.join("maps"))?;
    let mut text = format!("delta_r {delta_r}\n# zone_id start end median_index diameter label px py pz qw qx qy qz\n");
    for z in &partition.zones {
        let p = &z.median_pose.position;
        let q = z.median_pose.rotation.to_quaternion();
        let _ = writeln!(
            text,
            "{} {} {} {} {} {} {} {} {} {} {} {} {}",
            z.zone_id,
            z.members.start,
            z.members.end - 1,
            z.median_index(),
            z.diameter,
            z.label.as_deref().unwrap_or("-"),
            p.x,
            p.y,
            p.z,
            q[0],
            q[1],
            q[2],
            q[3]
        );
        let file = ZoneMapFile { zone_id: z.zone_id, delta_r, points: z.map.clone() };
        fs::write(map_path(dir, z.zone_id), write_zone_map(&file))?;
    }
    fs::write(dir.join(MANIFEST), text)?;
    Ok(())
}

/// Reads a partition written by [`write_partition`]; returns it with the
/// stored `delta_r`.
pub fn read_partition(dir: &Path) -> Result<(ZonePartition, f64), ZoneError> {
    let text = fs::read_to_string(dir.join(MANIFEST))?;
    let mut lines = text.lines();
    let bad = |m: &str| ZoneError::Format(m.to_string());
    let delta_r: f64 = lines
        .next()
        .and_then(|l| l.strip_prefix("delta_r "))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| bad("zone manifest lacks delta_r"))?;
    let mut zones = Vec::new();
    for line in lines.filter(|l| !l.starts_with('#') && !l.trim().is_empty()) {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 13 {
            return Err(bad(&format!("zone row `{line}`")));
        }
        let u = |i: usize| f[i].parse::<usize>().map_err(|_| bad(&format!("zone row `{line}`")));
        let x = |i: usize| f[i].parse::<f64>().map_err(|_| bad(&format!("zone row `{line}`")));
        let zone_id = u(0)?;
        let map = read_zone_map(&fs::read_to_string(map_path(dir, zone_id))?)?;
        if map.zone_id != zone_id {
            return Err(bad(&format!("map file of zone {zone_id} claims zone {}", map.zone_id)));
        }
        zones.push(Zone {
            zone_id,
            members: u(1)?..u(2)? + 1,
            median_pose: Pose::new(
                Rotation::from_quaternion([x(9)?, x(10)?, x(11)?, x(12)?]),
                Vector3::new(x(6)?, x(7)?, x(8)?),
            ),
            diameter: x(4)?,
            map: map.points,
            label: (f[5] != "-").then(|| f[5].to_string()),
        });
    }
    let partition = ZonePartition { zones };
    partition.validate(partition.image_count())?;
    Ok((partition, delta_r))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selection_examples() {
        assert_eq!(even_selection(3, 3), [0, 1, 2]);
        assert_eq!(even_selection(52, 5), [0, 12, 25, 38, 51]);
        assert_eq!(even_selection(2, 5), [0, 1]);
        assert_eq!(even_selection(10, 2), [0, 9]);
    }
}
