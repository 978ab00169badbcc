//! Partitioning the training trajectory into zones, building and storing one
//! landmark map per zone, and localizing query images against them.

mod localize;
mod maps;

use std::ops::Range;

use thiserror::Error;

use crate::classifier::ClassifierError;
use crate::features::FeatureError;
use crate::geom::{GeomError, MapPoint, Pose};

pub use localize::{localize, localize_in_zone, LocalizationResult, Localizer, RobustConfig, Status, Thresholds};
pub use maps::{build_all_maps, even_selection, read_partition, write_partition, MapParams, MapWarning};

#[derive(Debug, Error)]
pub enum ZoneError {
    #[error("{zones} zones requested for {images} images; every zone needs at least 2")]
    TooManyZones { zones: usize, images: usize },
    #[error("label ranges have a gap or overlap: {0}")]
    GapOrOverlap(String),
    #[error("malformed zone file: {0}")]
    Format(String),
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Zone {
    pub zone_id: usize,
    /// Contiguous training-image indices.
    pub members: Range<usize>,
    pub median_pose: Pose,
    /// Largest distance between two member camera positions (mm).
    pub diameter: f64,
    pub map: Vec<MapPoint>,
    pub label: Option<String>,
}

impl Zone {
    fn new(zone_id: usize, members: Range<usize>, poses: &[Pose], label: Option<String>) -> Zone {
        let median = members.start + (members.len() - 1) / 2;
        let mut diameter: f64 = 0.0;
        for i in members.clone() {
            for j in i + 1..members.end {
                diameter = diameter.max((poses[i].position - poses[j].position).norm());
            }
        }
        Zone { zone_id, members, median_pose: poses[median], diameter, map: Vec::new(), label }
    }

    pub fn median_index(&self) -> usize {
        self.members.start + (self.members.len() - 1) / 2
    }
}

/// Ordered, disjoint zones covering `0..image_count`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZonePartition {
    pub zones: Vec<Zone>,
}

impl ZonePartition {
    pub fn len(&self) -> usize {
        self.zones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zones.is_empty()
    }

    pub fn image_count(&self) -> usize {
        self.zones.last().map_or(0, |z| z.members.end)
    }

    pub fn member_ranges(&self) -> Vec<Range<usize>> {
        self.zones.iter().map(|z| z.members.clone()).collect()
    }

    /// Zone id of every training image, in image order.
    pub fn zone_of_images(&self) -> Vec<usize> {
        self.zones.iter().flat_map(|z| z.members.clone().map(move |_| z.zone_id)).collect()
    }

    /// Checks ids, ordering, coverage and disjointness.
    pub fn validate(&self, image_count: usize) -> Result<(), ZoneError> {
        let mut next = 0;
        for (k, z) in self.zones.iter().enumerate() {
            if z.zone_id != k {
                return Err(ZoneError::Format(format!("zone {k} carries id {}", z.zone_id)));
            }
            if z.members.start != next || z.members.is_empty() {
                return Err(ZoneError::GapOrOverlap(format!("zone {k} starts at {}, expected {next}", z.members.start)));
            }
            next = z.members.end;
        }
        if next != image_count {
            return Err(ZoneError::GapOrOverlap(format!("zones cover {next} of {image_count} images")));
        }
        Ok(())
    }
}

/// Splits `range` into `parts` contiguous blocks whose sizes differ by at
/// most one; the leading blocks take the remainder.
fn split_even(range: Range<usize>, parts: usize) -> Vec<Range<usize>> {
    let (base, extra) = (range.len() / parts, range.len() % parts);
    let mut start = range.start;
    (0..parts)
        .map(|k| {
            let len = base + usize::from(k < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

/// `n_zones` contiguous blocks of near-equal size.
pub fn partition_uniform(poses: &[Pose], n_zones: usize) -> Result<ZonePartition, ZoneError> {
    if n_zones == 0 || 2 * n_zones > poses.len() {
        return Err(ZoneError::TooManyZones { zones: n_zones, images: poses.len() });
    }
    let zones = split_even(0..poses.len(), n_zones)
        .into_iter()
        .enumerate()
        .map(|(k, r)| Zone::new(k, r, poses, None))
        .collect();
    let p = ZonePartition { zones };
    p.validate(poses.len())?;
    Ok(p)
}

/// Zones from an expert-label file: lines `start end name[:subclasses]`
/// with inclusive index ranges. A section with `k` subclasses is split into
/// `k` near-equal zones labelled `name/0 … name/{k-1}`.
pub fn partition_from_labels(poses: &[Pose], text: &str) -> Result<ZonePartition, ZoneError> {
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = || ZoneError::Format(format!("label line {}: `{line}`", n + 1));
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 3 {
            return Err(bad());
        }
        let start: usize = f[0].parse().map_err(|_| bad())?;
        let end: usize = f[1].parse().map_err(|_| bad())?;
        let (name, k) = match f[2].split_once(':') {
            Some((name, k)) => (name, k.parse::<usize>().map_err(|_| bad())?),
            None => (f[2], 1),
        };
        if end < start || k == 0 || k > end - start + 1 {
            return Err(bad());
        }
        rows.push((start, end, name.to_string(), k));
    }
    rows.sort_by_key(|r| r.0);
    let mut next = 0;
    let mut zones = Vec::new();
    for (start, end, name, k) in rows {
        if start != next {
            let what = if start < next { "overlap" } else { "gap" };
            return Err(ZoneError::GapOrOverlap(format!("{what} before index {start} (`{name}`)")));
        }
        for (i, r) in split_even(start..end + 1, k).into_iter().enumerate() {
            let label = if k > 1 { format!("{name}/{i}") } else { name.clone() };
            zones.push(Zone::new(zones.len(), r, poses, Some(label)));
        }
        next = end + 1;
    }
    if next != poses.len() {
        return Err(ZoneError::GapOrOverlap(format!("labels cover {next} of {} images", poses.len())));
    }
    Ok(ZonePartition { zones })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    fn poses(n: usize) -> Vec<Pose> {
        (0..n).map(|i| Pose::new(crate::geom::Rotation::identity(), Vector3::new(i as f64, 0.0, 0.0))).collect()
    }

    #[test]
    fn uniform_ten_in_two() {
        let p = partition_uniform(&poses(10), 2).unwrap();
        assert_eq!(p.member_ranges(), vec![0..5, 5..10]);
        assert_eq!(p.zones.iter().map(Zone::median_index).collect::<Vec<_>>(), [2, 7]);
        assert_eq!(p.zones[1].median_pose.position.x, 7.0);
        assert_eq!(p.zones[0].diameter, 4.0);
    }

    #[test]
    fn uniform_boundary_and_sizes() {
        let p = partition_uniform(&poses(12), 6).unwrap();
        assert!(p.zones.iter().all(|z| z.members.len() == 2));
        assert!(matches!(partition_uniform(&poses(12), 7), Err(ZoneError::TooManyZones { .. })));
        let p = partition_uniform(&poses(2610), 50).unwrap();
        assert!(p.zones.iter().all(|z| (52..=53).contains(&z.members.len())));
        p.validate(2610).unwrap();
    }

    #[test]
    fn labels_with_subclasses() {
        let p = partition_from_labels(&poses(200), "100 199 B\n0 99 A:3\n").unwrap();
        assert_eq!(p.member_ranges(), vec![0..34, 34..67, 67..100, 100..200]);
        assert_eq!(p.zones[1].label.as_deref(), Some("A/1"));
        assert_eq!(p.zones[3].label.as_deref(), Some("B"));
        assert_eq!(p.zone_of_images()[150], 3);
    }

    #[test]
    fn label_gaps_and_overlaps_are_errors() {
        for text in ["0 99 A\n99 199 B\n", "0 98 A\n100 199 B\n", "0 99 A\n100 150 B\n"] {
            assert!(matches!(partition_from_labels(&poses(200), text), Err(ZoneError::GapOrOverlap(_))), "{text}");
        }
        assert!(matches!(partition_from_labels(&poses(10), "0 9"), Err(ZoneError::Format(_))));
    }
}
