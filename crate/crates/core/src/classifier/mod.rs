//! Zone classification: a shared-weight embedding network trained with a
//! contrastive loss, and nearest-neighbour lookup in a database of training
//! embeddings.

mod net;
mod pairs;
mod train;

use std::fmt::Write as _;
use std::io;

use thiserror::Error;

use crate::image::Raster;

pub use net::{ArchConfig, ConvSpec, EmbedModel, Trace};
pub use pairs::{generate_pairs, positive_pair_pool, PairLabel, PairSample};
pub use train::{batch_loss, batch_loss_and_gradient, train, Adam, TrainConfig, TrainReport};

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("network input must be {expected}×{expected}, got {width}×{height}")]
    ShapeMismatch { expected: usize, width: usize, height: usize },
    #[error("zone {zone} has {size} image(s); pairs need at least 2")]
    ZoneTooSmall { zone: usize, size: usize },
    #[error("requested {requested} pairs of one kind but only {available} exist")]
    PairPoolExhausted { requested: u64, available: u64 },
    #[error("loss became non-finite in epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("invalid classifier configuration: {0}")]
    InvalidConfig(String),
    #[error("descriptor database is empty")]
    EmptyDatabase,
    #[error("malformed classifier file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Network output for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(pub Vec<f64>);

impl Embedding {
    pub fn distance(&self, other: &Embedding) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    }
}

/// Bilinear resize to `size × size`, then zero mean and unit variance.
/// Constant images become all zeros.
pub fn preprocess(image: &Raster, size: usize) -> Raster {
    let mut out = image.resize(size, size);
    let first = out.data[0];
    if out.data.iter().all(|&v| v == first) {
        out.data.fill(0.0);
        return out;
    }
    let n = out.data.len() as f64;
    let mean = out.data.iter().sum::<f64>() / n;
    let var = out.data.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let div = var.sqrt().max(1e-6);
    for v in &mut out.data {
        *v = (*v - mean) / div;
    }
    out
}

/// `(1 − x)·½d² + x·½·max(0, margin − d)²` with `x = 0` for same-zone pairs.
pub fn contrastive_loss(x: f64, d: f64, margin: f64) -> f64 {
    let hinge = (margin - d).max(0.0);
    (1.0 - x) * 0.5 * d * d + x * 0.5 * hinge * hinge
}

/// Gradient of the contrastive loss with respect to both embeddings. At
/// `d = 0` the dissimilar branch has no defined direction and contributes 0.
pub fn contrastive_gradient(x: f64, a: &Embedding, b: &Embedding, margin: f64) -> (Vec<f64>, Vec<f64>) {
    let d = a.distance(b);
    let mut coef = 1.0 - x;
    if d > 0.0 && d < margin {
        coef -= x * (margin - d) / d;
    }
    let ga: Vec<f64> = a.0.iter().zip(&b.0).map(|(p, q)| coef * (p - q)).collect();
    let gb = ga.iter().map(|g| -g).collect();
    (ga, gb)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DbEntry {
    pub image_index: usize,
    pub zone_id: usize,
    pub embedding: Embedding,
}

/// Embeddings of the training images with their zone labels.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DescriptorDb {
    pub entries: Vec<DbEntry>,
}

impl DescriptorDb {
    /// Embeds every preprocessed training image.
    pub fn build(model: &EmbedModel, images: &[Raster], zone_of: &[usize]) -> Result<Self, ClassifierError> {
        let entries = images
            .iter()
            .zip(zone_of)
            .enumerate()
            .map(|(i, (img, &z))| Ok(DbEntry { image_index: i, zone_id: z, embedding: model.embed(img)? }))
            .collect::<Result<_, ClassifierError>>()?;
        Ok(DescriptorDb { entries })
    }

    /// Zone of the nearest entry; exact distance ties go to the lowest zone id.
    pub fn nearest(&self, query: &Embedding) -> Result<(usize, f64), ClassifierError> {
        self.entries
            .iter()
            .map(|e| (e.zone_id, e.embedding.distance(query)))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .ok_or(ClassifierError::EmptyDatabase)
    }

    /// One row per image: `image_index zone_id e_0 … e_{k-1}`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for e in &self.entries {
            let _ = write!(s, "{} {}", e.image_index, e.zone_id);
            for v in &e.embedding.0 {
                let _ = write!(s, " {v:e}");
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, ClassifierError> {
        let entries = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(n, line)| {
                let bad = || ClassifierError::Format(format!("descriptor row {}", n + 1));
                let mut it = line.split_whitespace();
                let image_index = it.next().and_then(|t| t.parse().ok()).ok_or_else(bad)?;
                let zone_id = it.next().and_then(|t| t.parse().ok()).ok_or_else(bad)?;
                let e: Vec<f64> = it.map(|t| t.parse().map_err(|_| bad())).collect::<Result<_, _>>()?;
                if e.is_empty() {
                    return Err(bad());
                }
                Ok(DbEntry { image_index, zone_id, embedding: Embedding(e) })
            })
            .collect::<Result<_, _>>()?;
        Ok(DescriptorDb { entries })
    }
}

/// Preprocesses and embeds `image`, then returns the nearest zone and its
/// embedding distance.
pub fn classify(model: &EmbedModel, db: &DescriptorDb, image: &Raster) -> Result<(usize, f64), ClassifierError> {
    let e = model.embed(&preprocess(image, model.config().input_size))?;
    db.nearest(&e)
}
