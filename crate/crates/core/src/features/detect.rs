//! Determinant-of-Hessian blob detector over an octave/level scale space
//! with a gradient-grid descriptor.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use super::{Descriptor, FeatureError, FrameFeatures, Keypoint, DESCRIPTOR_LEN};
use crate::image::Raster;

pub const MIN_IMAGE_SIZE: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorParams {
    /// Minimum scale-normalized Hessian determinant for a keypoint.
    pub response_threshold: f64,
    pub octaves: usize,
    pub levels: usize,
    /// Lowe ratio used by every matcher built from these params.
    pub ratio: f64,
    /// Blur of level 0 in octave pixels.
    pub base_sigma: f64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        DetectorParams {
            response_threshold: 8e-5,
            octaves: 4,
            levels: 6,
            ratio: 0.8,
            base_sigma: 1.0,
        }
    }
}

impl DetectorParams {
    fn sigma(&self, level: usize) -> f64 {
        // levels 1..levels-2 are the ones that can host extrema; they span one
        // octave so consecutive octaves tile the scale axis.
        let interior = (self.levels.max(3) - 2) as f64;
        self.base_sigma * 2f64.powf(level as f64 / interior)
    }
}

struct Level {
    blurred: Raster,
    response: Vec<f64>,
    sigma: f64,
}

fn hessian_response(img: &Raster, sigma: f64) -> Vec<f64> {
    let (w, h) = (img.width as isize, img.height as isize);
    let norm = sigma.powi(4);
    let mut out = vec![0.0; img.data.len()];
    for y in 0..h {
        for x in 0..w {
            let c = img.get_clamped(x, y);
            let dxx = img.get_clamped(x + 1, y) + img.get_clamped(x - 1, y) - 2.0 * c;
            let dyy = img.get_clamped(x, y + 1) + img.get_clamped(x, y - 1) - 2.0 * c;
            let dxy = 0.25
                * (img.get_clamped(x + 1, y + 1) + img.get_clamped(x - 1, y - 1)
                    - img.get_clamped(x + 1, y - 1)
                    - img.get_clamped(x - 1, y + 1));
            out[(y * w + x) as usize] = norm * (dxx * dyy - dxy * dxy);
        }
    }
    out
}

fn build_octave(img: &Raster, params: &DetectorParams) -> Vec<Level> {
    (0..params.levels)
        .map(|l| {
            let sigma = params.sigma(l);
            let blurred = img.gaussian_blur(sigma);
            let response = hessian_response(&blurred, sigma);
            Level { blurred, response, sigma }
        })
        .collect()
}

fn is_local_max(levels: &[Level], l: usize, x: usize, y: usize, w: usize) -> bool {
    let v = levels[l].response[y * w + x];
    for ll in l - 1..=l + 1 {
        for yy in y - 1..=y + 1 {
            for xx in x - 1..=x + 1 {
                if (ll, yy, xx) == (l, y, x) {
                    continue;
                }
                let o = levels[ll].response[yy * w + xx];
                // Strict on one side so plateaus produce exactly one maximum.
                let earlier = (ll, yy, xx) < (l, y, x);
                if o > v || (earlier && o == v) {
                    return false;
                }
            }
        }
    }
    true
}

fn parabola_offset(m: f64, c: f64, p: f64) -> f64 {
    let denom = m - 2.0 * c + p;
    if denom.abs() < 1e-300 {
        0.0
    } else {
        (0.5 * (m - p) / denom).clamp(-0.5, 0.5)
    }
}

/// SURF-style descriptor: a 4×4 grid of cells, each summarizing
/// `(Σdx, Σdy, Σ|dx|, Σ|dy|)` of Gaussian-weighted gradients sampled on an
/// upright 20×20 lattice spanning ten blur widths.
fn describe(img: &Raster, x: f64, y: f64, sigma: f64) -> Option<Descriptor> {
    let step = 0.5 * sigma;
    let mut d = [0.0f64; DESCRIPTOR_LEN];
    // 3.3σ expressed in lattice steps of σ/2
    let weight_sigma = 6.6;
    for j in 0..20 {
        for i in 0..20 {
            let ox = (i as f64 - 9.5) * step;
            let oy = (j as f64 - 9.5) * step;
            let sx = x + ox;
            let sy = y + oy;
            let h = step.max(0.5);
            let dx = img.sample(sx + h, sy) - img.sample(sx - h, sy);
            let dy = img.sample(sx, sy + h) - img.sample(sx, sy - h);
            let r2 = (ox * ox + oy * oy) / (step * step);
            let wgt = (-r2 / (2.0 * weight_sigma * weight_sigma)).exp();
            let cell = (j / 5) * 4 + i / 5;
            d[4 * cell] += wgt * dx;
            d[4 * cell + 1] += wgt * dy;
            d[4 * cell + 2] += wgt * dx.abs();
            d[4 * cell + 3] += wgt * dy.abs();
        }
    }
    Descriptor::normalized(d.to_vec())
}

/// Detects keypoints and computes descriptors. Output is sorted by
/// decreasing response, ties broken by pixel (row, then column).
pub fn detect_and_describe(image: &Raster, params: &DetectorParams, image_index: usize) -> Result<FrameFeatures, FeatureError> {
    if image.width < MIN_IMAGE_SIZE || image.height < MIN_IMAGE_SIZE {
        return Err(FeatureError::ImageTooSmall { width: image.width, height: image.height });
    }
    let mut found: Vec<(Keypoint, Descriptor)> = Vec::new();
    let mut octave_img = image.clone();
    for octave in 0..params.octaves {
        if octave > 0 {
            octave_img = octave_img.downsample2();
        }
        let (w, h) = (octave_img.width, octave_img.height);
        if w < 5 || h < 5 || params.levels < 3 {
            break;
        }
        let levels = build_octave(&octave_img, params);
        let factor = (1usize << octave) as f64;
        for l in 1..params.levels - 1 {
            for y in 1..h - 1 {
                for x in 1..w - 1 {
                    let r = levels[l].response[y * w + x];
                    if r <= params.response_threshold || !is_local_max(&levels, l, x, y, w) {
                        continue;
                    }
                    let resp = &levels[l].response;
                    let ox = parabola_offset(resp[y * w + x - 1], r, resp[y * w + x + 1]);
                    let oy = parabola_offset(resp[(y - 1) * w + x], r, resp[(y + 1) * w + x]);
                    let (xo, yo) = (x as f64 + ox, y as f64 + oy);
                    let Some(desc) = describe(&levels[l].blurred, xo, yo, levels[l].sigma) else {
                        continue;
                    };
                    let pixel = Vector2::new((xo + 0.5) * factor - 0.5, (yo + 0.5) * factor - 0.5);
                    found.push((
                        Keypoint { pixel, scale: octave, sigma: levels[l].sigma * factor, response: r },
                        desc,
                    ));
                }
            }
        }
    }
    found.sort_by(|a, b| {
        b.0.response
            .total_cmp(&a.0.response)
            .then(a.0.pixel.y.total_cmp(&b.0.pixel.y))
            .then(a.0.pixel.x.total_cmp(&b.0.pixel.x))
    });
    let (keypoints, descriptors) = found.into_iter().unzip();
    Ok(FrameFeatures { image_index, keypoints, descriptors })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs(size: usize) -> Raster {
        let centers = [(12.0, 14.0, 2.0), (40.0, 20.0, 3.0), (25.0, 45.0, 2.5), (50.0, 50.0, 1.8)];
        Raster::from_fn(size, size, |x, y| {
            let mut v = 0.2;
            for &(cx, cy, s) in &centers {
                let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                v += 0.6 * (-d2 / (2.0 * s * s)).exp();
            }
            v
        })
    }

    #[test]
    fn constant_image_has_no_keypoints() {
        let img = Raster::from_fn(64, 64, |_, _| 0.5);
        let f = detect_and_describe(&img, &DetectorParams::default(), 0).unwrap();
        assert!(f.keypoints.is_empty());
    }

    #[test]
    fn small_images_are_rejected() {
        let img = Raster::new(31, 64);
        assert!(matches!(
            detect_and_describe(&img, &DetectorParams::default(), 0),
            Err(FeatureError::ImageTooSmall { .. })
        ));
    }

    #[test]
    fn isolated_blobs_are_found_near_their_centers() {
        let f = detect_and_describe(&blobs(64), &DetectorParams::default(), 3).unwrap();
        assert_eq!(f.image_index, 3);
        for &(cx, cy) in &[(12.0, 14.0), (40.0, 20.0), (25.0, 45.0), (50.0, 50.0)] {
            let hit = f.keypoints.iter().any(|k| (k.pixel - Vector2::new(cx, cy)).norm() < 1.0);
            assert!(hit, "no keypoint near ({cx}, {cy})");
        }
        for d in &f.descriptors {
            assert!((d.norm() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn detection_is_deterministic() {
        let a = detect_and_describe(&blobs(64), &DetectorParams::default(), 0).unwrap();
        let b = detect_and_describe(&blobs(64), &DetectorParams::default(), 0).unwrap();
        assert_eq!(a, b);
    }
}
