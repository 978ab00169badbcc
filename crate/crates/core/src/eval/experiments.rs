use std::fmt::Write as _;

use super::config::PipelineConfig;
use super::pipeline::{
    build_maps, classify_all, detect_all, localize_all, make_partition, train_classifier, Datasets, PipelineRun,
};
use super::report::{summarize, ErrorReport, Group};
use super::EvalError;
use crate::classifier::TrainConfig;
use crate::zones::Status;

/// One (zone count, repeat) cell of the sweep. Failed cells keep their error.
#[derive(Debug, Clone)]
pub struct SweepCell {
    pub n_zones: usize,
    pub repeat: usize,
    pub report: Result<ErrorReport, String>,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub repeats: usize,
    /// Sorted by `(n_zones, repeat)`.
    pub cells: Vec<SweepCell>,
}

impl SweepResult {
    pub fn zone_counts(&self) -> Vec<usize> {
        let mut c: Vec<usize> = self.cells.iter().map(|c| c.n_zones).collect();
        c.dedup();
        c
    }

    /// Headline position errors of every image over every successful repeat.
    pub fn pooled_positions(&self, n_zones: usize) -> Vec<f64> {
        self.cells
            .iter()
            .filter(|c| c.n_zones == n_zones)
            .filter_map(|c| c.report.as_ref().ok())
            .flat_map(|r| r.rows.iter().map(|row| row.position_mm))
            .collect()
    }

    /// Per-cell aggregates.
    pub fn cells_csv(&self) -> String {
        let mut s = String::from(
            "n_zones,repeat,ok,mean_position_mm,median_position_mm,mean_orientation_deg,median_orientation_deg,refined,classification_only,rejected,error\n",
        );
        for c in &self.cells {
            match &c.report {
                Ok(r) => {
                    let (p, o) = (r.position(Group::Headline), r.orientation(Group::Headline));
                    let _ = writeln!(
                        s,
                        "{},{},true,{},{},{},{},{},{},{},",
                        c.n_zones,
                        c.repeat,
                        p.mean,
                        p.median,
                        o.mean,
                        o.median,
                        r.count(Status::Refined),
                        r.count(Status::ClassificationOnly),
                        r.count(Status::Rejected)
                    );
                }
                Err(e) => {
                    let _ = writeln!(s, "{},{},false,,,,,,,,\"{}\"", c.n_zones, c.repeat, e.replace('"', "'"));
                }
            }
        }
        s
    }

    /// Box-plot statistics of the pooled headline errors per zone count.
    pub fn box_csv(&self) -> String {
        let mut s = String::from("n_zones,metric,count,min,q1,median,q3,max,mean\n");
        for n in self.zone_counts() {
            let reports: Vec<&ErrorReport> =
                self.cells.iter().filter(|c| c.n_zones == n).filter_map(|c| c.report.as_ref().ok()).collect();
            let pos: Vec<f64> = reports.iter().flat_map(|r| r.rows.iter().map(|x| x.position_mm)).collect();
            let ori: Vec<f64> = reports.iter().flat_map(|r| r.rows.iter().map(|x| x.orientation_deg)).collect();
            for (metric, v) in [("position_mm", pos), ("orientation_deg", ori)] {
                let m = summarize(&v);
                let _ = writeln!(s, "{n},{metric},{},{},{},{},{},{},{}", m.count, m.min, m.q1, m.median, m.q3, m.max, m.mean);
            }
        }
        s
    }
}

/// Full pipeline for every zone count × repeat. Maps depend only on the
/// partition and are built once per count; each repeat retrains the
/// classifier with shifted seeds.
pub fn zone_sweep(cfg: &PipelineConfig, data: &Datasets, zone_counts: &[usize], repeats: usize) -> Result<SweepResult, EvalError> {
    if repeats == 0 {
        return Err(EvalError::Config("sweep needs at least one repeat".into()));
    }
    let train_cfg = TrainConfig { epochs: cfg.sweep.epochs.unwrap_or(cfg.classifier.train.epochs), ..cfg.classifier.train };
    let features = detect_all(cfg, &data.test.images)?;
    let truths = data.test.poses();
    let idx: Vec<usize> = data.test.records.iter().map(|r| r.index).collect();
    let mut counts = zone_counts.to_vec();
    counts.sort_unstable();
    counts.dedup();
    let mut cells = Vec::with_capacity(counts.len() * repeats);
    for &n in &counts {
        let maps = make_partition(cfg, &data.train, Some(n)).and_then(|p| build_maps(cfg, &data.train, p));
        for repeat in 0..repeats {
            let report = match &maps {
                Err(e) => Err(e.to_string()),
                Ok((partition, _)) => train_classifier(cfg, &data.train, partition, &train_cfg, repeat as u64)
                    .and_then(|clf| {
                        let zones = classify_all(cfg, &clf, &data.test.images)?;
                        let results = localize_all(cfg, &clf, partition, &data.test.intrinsics, &features, &zones);
                        Ok(ErrorReport::from_results(&idx, &results, &truths))
                    })
                    .map_err(|e| e.to_string()),
            };
            if let Err(e) = &report {
                log::warn!("sweep cell ({n} zones, repeat {repeat}) failed: {e}");
            }
            cells.push(SweepCell { n_zones: n, repeat, report });
        }
    }
    Ok(SweepResult { repeats, cells })
}

#[derive(Debug, Clone)]
pub struct PerturbationResult {
    /// `(e, report)` in the requested order.
    pub rows: Vec<(usize, ErrorReport)>,
}

impl PerturbationResult {
    pub fn csv(&self) -> String {
        let mut s = String::from(
            "e,mean_position_mm,median_position_mm,mean_orientation_deg,median_orientation_deg,refined,classification_only,rejected\n",
        );
        for (e, r) in &self.rows {
            let (p, o) = (r.position(Group::Headline), r.orientation(Group::Headline));
            let _ = writeln!(
                s,
                "{e},{},{},{},{},{},{},{}",
                p.mean,
                p.median,
                o.mean,
                o.median,
                r.count(Status::Refined),
                r.count(Status::ClassificationOnly),
                r.count(Status::Rejected)
            );
        }
        s
    }
}

/// Forced misclassification by `±e` zones on top of a finished run.
pub fn perturbation_study(cfg: &PipelineConfig, run: &PipelineRun, e_values: &[usize]) -> PerturbationResult {
    PerturbationResult { rows: e_values.iter().map(|&e| (e, run.perturbed(cfg, e))).collect() }
}
