use std::fmt::Write as _;

use crate::geom::Pose;
use crate::zones::{LocalizationResult, Status};

/// Position error (mm) and geodesic orientation error (degrees).
pub fn pose_errors(estimate: &Pose, truth: &Pose) -> (f64, f64) {
    let position = (estimate.position - truth.position).norm();
    // atan2-based angle keeps full precision near zero, unlike acos of the trace
    let angle = estimate.rotation.compose(&truth.rotation.inverse()).angle();
    (position, angle.to_degrees())
}

/// Order statistics of one error column. Quartiles interpolate linearly
/// between order statistics. All fields are NaN when `count` is 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub min: f64,
    pub max: f64,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(values: &[f64]) -> Summary {
    if values.is_empty() {
        return Summary { count: 0, mean: f64::NAN, median: f64::NAN, q1: f64::NAN, q3: f64::NAN, min: f64::NAN, max: f64::NAN };
    }
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    Summary {
        count: s.len(),
        mean: values.iter().sum::<f64>() / s.len() as f64,
        median: quantile(&s, 0.5),
        q1: quantile(&s, 0.25),
        q3: quantile(&s, 0.75),
        min: s[0],
        max: s[s.len() - 1],
    }
}

/// One localized test image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRow {
    pub index: usize,
    pub zone_id: usize,
    pub status: Status,
    /// Error of the reported estimate: refined pose, or the zone's median
    /// pose when refinement was unavailable or rejected.
    pub position_mm: f64,
    pub orientation_deg: f64,
    /// Error of the classification-only estimate (zone median pose).
    pub initial_position_mm: f64,
    pub initial_orientation_deg: f64,
    pub matches: usize,
    pub inliers: usize,
    pub final_rms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub rows: Vec<ImageRow>,
}

/// Which error columns an aggregate is taken over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Group {
    /// Every image, rejected ones counted with their classification-only error.
    Headline,
    /// Images whose refined pose was accepted.
    Refined,
    /// Every image at its zone's median pose.
    ClassificationOnly,
}

impl Group {
    pub const ALL: [Group; 3] = [Group::Headline, Group::Refined, Group::ClassificationOnly];

    pub fn as_str(self) -> &'static str {
        match self {
            Group::Headline => "headline",
            Group::Refined => "refined",
            Group::ClassificationOnly => "classification_only",
        }
    }
}

impl ErrorReport {
    pub fn from_results(indices: &[usize], results: &[LocalizationResult], truths: &[Pose]) -> Self {
        let rows = indices
            .iter()
            .zip(results)
            .zip(truths)
            .map(|((&index, r), truth)| {
                let (p, o) = pose_errors(&r.estimate(), truth);
                let (ip, io) = pose_errors(&r.initial_pose, truth);
                ImageRow {
                    index,
                    zone_id: r.zone_id,
                    status: r.status,
                    position_mm: p,
                    orientation_deg: o,
                    initial_position_mm: ip,
                    initial_orientation_deg: io,
                    matches: r.matches,
                    inliers: r.inliers,
                    final_rms: r.final_rms,
                }
            })
            .collect();
        ErrorReport { rows }
    }

    fn column(&self, group: Group, orientation: bool) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| group != Group::Refined || r.status == Status::Refined)
            .map(|r| match (group, orientation) {
                (Group::ClassificationOnly, false) => r.initial_position_mm,
                (Group::ClassificationOnly, true) => r.initial_orientation_deg,
                (_, false) => r.position_mm,
                (_, true) => r.orientation_deg,
            })
            .collect()
    }

    pub fn position(&self, group: Group) -> Summary {
        summarize(&self.column(group, false))
    }

    pub fn orientation(&self, group: Group) -> Summary {
        summarize(&self.column(group, true))
    }

    pub fn count(&self, status: Status) -> usize {
        self.rows.iter().filter(|r| r.status == status).count()
    }

    pub fn results_csv(&self) -> String {
        let mut s = String::from(
            "index,zone_id,status,position_mm,orientation_deg,initial_position_mm,initial_orientation_deg,matches,inliers,final_rms\n",
        );
        for r in &self.rows {
            let rms = r.final_rms.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                r.index,
                r.zone_id,
                r.status.as_str(),
                r.position_mm,
                r.orientation_deg,
                r.initial_position_mm,
                r.initial_orientation_deg,
                r.matches,
                r.inliers,
                rms
            );
        }
        s
    }

    pub fn summary_csv(&self) -> String {
        let mut s = String::from("group,metric,count,mean,median,q1,q3,min,max\n");
        for g in Group::ALL {
            for (metric, m) in [("position_mm", self.position(g)), ("orientation_deg", self.orientation(g))] {
                let _ = writeln!(
                    s,
                    "{},{metric},{},{},{},{},{},{},{}",
                    g.as_str(),
                    m.count,
                    m.mean,
                    m.median,
                    m.q1,
                    m.q3,
                    m.min,
                    m.max
                );
            }
        }
        for st in [Status::Refined, Status::ClassificationOnly, Status::Rejected] {
            let _ = writeln!(s, "status,{},{},,,,,,", st.as_str(), self.count(st));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Rotation;
    use nalgebra::Vector3;

    #[test]
    fn error_examples() {
        let a = Pose::identity();
        assert_eq!(pose_errors(&a, &a), (0.0, 0.0));
        let b = Pose::new(Rotation::identity(), Vector3::new(3.0, 4.0, 0.0));
        assert_eq!(pose_errors(&b, &a), (5.0, 0.0));
        for axis in [Vector3::x(), Vector3::y(), Vector3::new(1.0, 1.0, 1.0).normalize()] {
            let r = Pose::new(Rotation::exp(&(axis * std::f64::consts::FRAC_PI_2)), Vector3::zeros());
            assert!((pose_errors(&r, &a).1 - 90.0).abs() < 1e-9);
        }
        let flip = Pose::new(Rotation::exp(&(Vector3::z() * std::f64::consts::PI)), Vector3::zeros());
        assert!((pose_errors(&flip, &a).1 - 180.0).abs() < 1e-6);
    }

    #[test]
    fn quartiles_interpolate() {
        let s = summarize(&[4.0, 1.0, 3.0, 2.0]);
        assert_eq!((s.min, s.q1, s.median, s.q3, s.max, s.mean), (1.0, 1.75, 2.5, 3.25, 4.0, 2.5));
        assert_eq!(summarize(&[]).count, 0);
    }
}
