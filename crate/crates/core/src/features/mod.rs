//! Interest points, descriptors and descriptor matching.

mod detect;
mod matching;

use nalgebra::Vector2;
use thiserror::Error;

pub use detect::{detect_and_describe, DetectorParams, MIN_IMAGE_SIZE};
pub use matching::{match_descriptors, match_to_map, match_tracks, Track};

pub const DESCRIPTOR_LEN: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("image is {width}x{height}, detection needs at least {MIN_IMAGE_SIZE}x{MIN_IMAGE_SIZE}")]
    ImageTooSmall { width: usize, height: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    /// Position in full-resolution pixel coordinates.
    pub pixel: Vector2<f64>,
    /// Octave the keypoint was detected in.
    pub scale: usize,
    /// Detection blur in full-resolution pixels.
    pub sigma: f64,
    pub response: f64,
}

/// L2-normalized feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor(Vec<f64>);

impl Descriptor {
    /// Normalizes `v`; `None` if it is (numerically) zero or non-finite.
    pub fn normalized(mut v: Vec<f64>) -> Option<Self> {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(n > 1e-12) || !n.is_finite() {
            return None;
        }
        v.iter_mut().for_each(|x| *x /= n);
        Some(Descriptor(v))
    }

    /// Wraps stored values without renormalizing them.
    pub fn from_raw(v: Vec<f64>) -> Self {
        Descriptor(v)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn distance_squared(&self, other: &Descriptor) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b) * (a - b)).sum()
    }
}

/// Keypoints and descriptors of one image, in parallel vectors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameFeatures {
    pub image_index: usize,
    pub keypoints: Vec<Keypoint>,
    pub descriptors: Vec<Descriptor>,
}

impl FrameFeatures {
    pub fn len(&self) -> usize {
        self.keypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keypoints.is_empty()
    }
}
