use std::collections::HashMap;

use super::{Descriptor, FrameFeatures};
use crate::geom::{MapPoint, Observation2D};

/// Nearest and second-nearest squared distances with the nearest index.
#[derive(Clone, Copy)]
struct Nearest {
    index: usize,
    best: f64,
    second: f64,
}

impl Nearest {
    fn empty() -> Self {
        Nearest { index: usize::MAX, best: f64::INFINITY, second: f64::INFINITY }
    }

    fn offer(&mut self, index: usize, d: f64) {
        if d < self.best {
            self.second = self.best;
            self.best = d;
            self.index = index;
        } else if d < self.second {
            self.second = d;
        }
    }

    fn passes(&self, ratio: f64) -> bool {
        // d1 / d2 < ratio on distances, compared in squared form
        self.best < ratio * ratio * self.second
    }
}

/// Mutual nearest neighbours that pass the ratio test from both sides,
/// sorted by the index into `a`.
fn mutual_ratio_matches(a: &[&Descriptor], b: &[&Descriptor], ratio: f64) -> Vec<(usize, usize)> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut rows = vec![Nearest::empty(); a.len()];
    let mut cols = vec![Nearest::empty(); b.len()];
    for (i, da) in a.iter().enumerate() {
        for (j, db) in b.iter().enumerate() {
            let d = da.distance_squared(db);
            rows[i].offer(j, d);
            cols[j].offer(i, d);
        }
    }
    rows.iter()
        .enumerate()
        .filter_map(|(i, r)| {
            let j = r.index;
            (j != usize::MAX && cols[j].index == i && r.passes(ratio) && cols[j].passes(ratio)).then_some((i, j))
        })
        .collect()
}

/// One-to-one matches `(index_a, index_b)` between two frames.
pub fn match_descriptors(a: &FrameFeatures, b: &FrameFeatures, ratio: f64) -> Vec<(usize, usize)> {
    assert!(ratio > 0.0 && ratio < 1.0, "ratio must lie in (0, 1)");
    let da: Vec<&Descriptor> = a.descriptors.iter().collect();
    let db: Vec<&Descriptor> = b.descriptors.iter().collect();
    mutual_ratio_matches(&da, &db, ratio)
}

/// A keypoint followed through several frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    /// `(image_index, keypoint_index)`, in frame order.
    pub observations: Vec<(usize, usize)>,
    /// Descriptor of the first observation.
    pub descriptor: Descriptor,
}

/// Chains matches between consecutive frames into tracks of length ≥ 2.
pub fn match_tracks(frames: &[FrameFeatures], ratio: f64) -> Vec<Track> {
    // Each chain holds (frame position, keypoint index) pairs.
    let mut chains: Vec<Vec<(usize, usize)>> = Vec::new();
    let mut open: HashMap<usize, usize> = HashMap::new();
    for f in 0..frames.len().saturating_sub(1) {
        let mut next_open = HashMap::new();
        for (i, j) in match_descriptors(&frames[f], &frames[f + 1], ratio) {
            let chain = match open.get(&i) {
                Some(&c) => c,
                None => {
                    chains.push(vec![(f, i)]);
                    chains.len() - 1
                }
            };
            chains[chain].push((f + 1, j));
            next_open.insert(j, chain);
        }
        open = next_open;
    }

    let mut claims: HashMap<(usize, usize), usize> = HashMap::new();
    for chain in &chains {
        for obs in chain {
            *claims.entry(*obs).or_default() += 1;
        }
    }
    chains
        .into_iter()
        .filter(|c| c.len() >= 2 && c.iter().all(|o| claims[o] == 1))
        .map(|c| {
            let (f0, k0) = c[0];
            Track {
                descriptor: frames[f0].descriptors[k0].clone(),
                observations: c.into_iter().map(|(f, k)| (frames[f].image_index, k)).collect(),
            }
        })
        .collect()
}

/// Registers a frame's keypoints against a zone map.
pub fn match_to_map<'m>(frame: &FrameFeatures, map: &'m [MapPoint], ratio: f64) -> Vec<(&'m MapPoint, Observation2D)> {
    let dm: Vec<&Descriptor> = map.iter().map(|p| &p.descriptor).collect();
    let df: Vec<&Descriptor> = frame.descriptors.iter().collect();
    mutual_ratio_matches(&dm, &df, ratio)
        .into_iter()
        .map(|(i, j)| {
            (&map[i], Observation2D { pixel: frame.keypoints[j].pixel, image_index: frame.image_index })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::Keypoint;
    use nalgebra::Vector2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn frame(index: usize, descs: Vec<Vec<f64>>) -> FrameFeatures {
        let n = descs.len();
        FrameFeatures {
            image_index: index,
            keypoints: (0..n)
                .map(|i| Keypoint { pixel: Vector2::new(i as f64, 0.0), scale: 0, sigma: 1.0, response: 1.0 })
                .collect(),
            descriptors: descs.into_iter().map(|d| Descriptor::normalized(d).unwrap()).collect(),
        }
    }

    fn random_frame(index: usize, n: usize, seed: u64) -> FrameFeatures {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        frame(index, (0..n).map(|_| (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect())
    }

    fn basis(k: usize) -> Vec<f64> {
        let mut v = vec![0.0; 64];
        v[k] = 1.0;
        v
    }

    #[test]
    fn self_matching_is_the_identity() {
        let f = random_frame(0, 40, 1);
        let m = match_descriptors(&f, &f, 0.8);
        assert_eq!(m, (0..40).map(|i| (i, i)).collect::<Vec<_>>());
    }

    #[test]
    fn unrelated_random_descriptors_rarely_match() {
        let a = random_frame(0, 50, 2);
        let b = random_frame(1, 50, 3);
        assert!(match_descriptors(&a, &b, 0.8).len() <= 2);
    }

    #[test]
    fn matching_is_symmetric() {
        let a = random_frame(0, 30, 4);
        let mut b = random_frame(1, 30, 5);
        // share some descriptors, perturbed
        for i in 0..10 {
            let mut v = a.descriptors[i].as_slice().to_vec();
            v[i] += 0.05;
            b.descriptors[i + 5] = Descriptor::normalized(v).unwrap();
        }
        let ab = match_descriptors(&a, &b, 0.8);
        let mut ba: Vec<_> = match_descriptors(&b, &a, 0.8).into_iter().map(|(j, i)| (i, j)).collect();
        ba.sort();
        assert_eq!(ab, ba);
        assert!(ab.len() >= 10);
    }

    #[test]
    fn three_frame_chain_forms_one_track() {
        let f0 = frame(10, vec![basis(0), basis(1)]);
        let f1 = frame(11, vec![basis(2), basis(0)]);
        let f2 = frame(12, vec![basis(0), basis(5)]);
        let tracks = match_tracks(&[f0.clone(), f1, f2], 0.8);
        let long: Vec<_> = tracks.iter().filter(|t| t.observations.len() == 3).collect();
        assert_eq!(long.len(), 1);
        assert_eq!(long[0].observations, vec![(10, 0), (11, 1), (12, 0)]);
        assert_eq!(long[0].descriptor, f0.descriptors[0]);
    }

    #[test]
    fn broken_chain_gives_a_pair_track() {
        let f0 = frame(0, vec![basis(0), basis(7)]);
        let f1 = frame(1, vec![basis(0), basis(8)]);
        let f2 = frame(2, vec![basis(3), basis(9)]);
        let tracks = match_tracks(&[f0, f1, f2], 0.8);
        assert!(tracks.iter().any(|t| t.observations == vec![(0, 0), (1, 0)]));
        assert!(tracks.iter().all(|t| t.observations.len() == 2));
    }
}
