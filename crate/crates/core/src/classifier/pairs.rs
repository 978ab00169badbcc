use std::collections::HashSet;
use std::ops::Range;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ClassifierError;

/// `Similar` pairs share a zone, `Dissimilar` pairs do not.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PairLabel {
    Similar,
    Dissimilar,
}

impl PairLabel {
    /// Numeric label: 0 for similar, 1 for dissimilar.
    pub fn x(self) -> f64 {
        match self {
            PairLabel::Similar => 0.0,
            PairLabel::Dissimilar => 1.0,
        }
    }
}

/// Two image indices (into the preprocessed training set) and their label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PairSample {
    pub a: usize,
    pub b: usize,
    pub label: PairLabel,
}

fn choose2(n: u64) -> u64 {
    n * n.saturating_sub(1) / 2
}

/// Number of distinct same-zone pairs: `Σ C(n_z, 2)`.
pub fn positive_pair_pool(zone_sizes: &[usize]) -> u64 {
    zone_sizes.iter().map(|&n| choose2(n as u64)).sum()
}

/// The `r`-th unordered pair `(i, j)`, `i < j < n`, in lexicographic order.
fn unrank_pair(mut r: u64, n: u64) -> (u64, u64) {
    let mut i = 0;
    loop {
        let row = n - 1 - i;
        if r < row {
            return (i, i + 1 + r);
        }
        r -= row;
        i += 1;
    }
}

/// `count / 2` same-zone and `count / 2` cross-zone pairs, drawn uniformly
/// without repetition of unordered pairs, then shuffled.
pub fn generate_pairs(zones: &[Range<usize>], count: usize, seed: u64) -> Result<Vec<PairSample>, ClassifierError> {
    if let Some((zone, r)) = zones.iter().enumerate().find(|(_, r)| r.len() < 2) {
        return Err(ClassifierError::ZoneTooSmall { zone, size: r.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = count / 2;
    let sizes: Vec<usize> = zones.iter().map(Range::len).collect();

    let pos_pool = positive_pair_pool(&sizes);
    if half as u64 > pos_pool {
        return Err(ClassifierError::PairPoolExhausted { requested: half as u64, available: pos_pool });
    }
    let mut pairs = Vec::with_capacity(2 * half);
    for q in index::sample(&mut rng, pos_pool as usize, half).into_iter() {
        let mut q = q as u64;
        for (z, r) in zones.iter().enumerate() {
            let c = choose2(sizes[z] as u64);
            if q < c {
                let (i, j) = unrank_pair(q, sizes[z] as u64);
                pairs.push(PairSample { a: r.start + i as usize, b: r.start + j as usize, label: PairLabel::Similar });
                break;
            }
            q -= c;
        }
    }

    let members: Vec<(usize, usize)> = zones.iter().enumerate().flat_map(|(z, r)| r.clone().map(move |i| (i, z))).collect();
    let neg_pool = choose2(members.len() as u64) - pos_pool;
    if half as u64 > neg_pool {
        return Err(ClassifierError::PairPoolExhausted { requested: half as u64, available: neg_pool });
    }
    if 2 * half as u64 <= neg_pool {
        // sparse request: rejection sampling is cheap
        let mut seen = HashSet::with_capacity(half);
        while seen.len() < half {
            let x = rng.gen_range(0..members.len());
            let y = rng.gen_range(0..members.len());
            if members[x].1 == members[y].1 {
                continue;
            }
            let key = (x.min(y), x.max(y));
            if seen.insert(key) {
                pairs.push(PairSample { a: members[key.0].0, b: members[key.1].0, label: PairLabel::Dissimilar });
            }
        }
    } else {
        let mut all = Vec::with_capacity(neg_pool as usize);
        for x in 0..members.len() {
            for y in x + 1..members.len() {
                if members[x].1 != members[y].1 {
                    all.push((members[x].0, members[y].0));
                }
            }
        }
        for k in index::sample(&mut rng, all.len(), half).into_iter() {
            pairs.push(PairSample { a: all[k].0, b: all[k].1, label: PairLabel::Dissimilar });
        }
    }
    pairs.shuffle(&mut rng);
    Ok(pairs)
}
