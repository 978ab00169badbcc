//! Procedural tube: a smooth centerline with a varying radius and a seeded
//! surface texture, split into named sections.

use nalgebra::Vector3;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SimError;

/// Section names and their share of the tube length, proximal to distal.
pub const SECTIONS: [(&str, f64); 13] = [
    ("anal_canal", 0.03),
    ("rectum", 0.08),
    ("rectosigmoid_junction", 0.04),
    ("sigmoid_colon", 0.16),
    ("sigmoid_flexure", 0.06),
    ("descending_colon", 0.14),
    ("splenic_flexure", 0.05),
    ("transverse_colon", 0.18),
    ("hepatic_flexure", 0.05),
    ("ascending_colon", 0.12),
    ("ileocecal_valve", 0.02),
    ("cecum", 0.04),
    ("appendix_orifice", 0.03),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub length_mm: f64,
    pub radius_mean_mm: f64,
    /// Peak deviation of the radius from its mean.
    pub radius_variation_mm: f64,
    /// Distance between centerline control points.
    pub control_spacing_mm: f64,
    /// Maximum heading change between consecutive control points.
    pub max_turn_deg: f64,
    /// Centerline sampling step, also the length of each ray-casting cylinder.
    pub segment_mm: f64,
    /// Sections rendered with their texture amplitude scaled by 0.05.
    pub low_texture_sections: Vec<String>,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            length_mm: 1500.0,
            radius_mean_mm: 16.0,
            radius_variation_mm: 3.0,
            control_spacing_mm: 90.0,
            max_turn_deg: 35.0,
            segment_mm: 1.0,
            low_texture_sections: vec!["rectosigmoid_junction".into(), "hepatic_flexure".into()],
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let positive = [self.length_mm, self.radius_mean_mm, self.control_spacing_mm, self.segment_mm];
        if positive.iter().any(|v| !(*v > 0.0)) {
            return Err(SimError::InvalidConfig("lengths and radii must be positive".into()));
        }
        if !(self.radius_variation_mm >= 0.0) || self.radius_variation_mm >= self.radius_mean_mm {
            return Err(SimError::InvalidConfig("radius variation must be in [0, mean radius)".into()));
        }
        for name in &self.low_texture_sections {
            if !SECTIONS.iter().any(|(s, _)| s == name) {
                return Err(SimError::InvalidConfig(format!("unknown section {name}")));
            }
        }
        Ok(())
    }
}

/// Surface appearance of one section.
#[derive(Debug, Clone, PartialEq)]
pub struct SectionStyle {
    pub name: String,
    pub start: f64,
    pub end: f64,
    pub base: f64,
    pub amplitude: f64,
    /// Spatial frequency of the finest noise octave (1/mm).
    pub frequency: f64,
    pub fold_spacing: f64,
    pub fold_strength: f64,
    /// Probability that a spot slot of the lattice is occupied.
    pub spot_density: f64,
    /// Support radius of a spot (mm).
    pub spot_radius: f64,
    /// Fraction of spots darker than the surrounding wall.
    pub spot_dark: f64,
    pub spot_amplitude: f64,
    /// Weight of the shared fine-detail layer: 1, or the low-texture scale.
    pub detail: f64,
}

/// Centerline sample with a rotation-minimizing frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Station {
    pub arclength: f64,
    pub point: Vector3<f64>,
    pub tangent: Vector3<f64>,
    pub normal: Vector3<f64>,
    pub binormal: Vector3<f64>,
    pub radius: f64,
}

#[derive(Debug, Clone)]
pub struct TubeWorld {
    pub seed: u64,
    pub config: WorldConfig,
    pub stations: Vec<Station>,
    pub sections: Vec<SectionStyle>,
    radius_waves: [(f64, f64, f64); 3],
    /// Slow drifts of the texture parameters along the tube; each row holds
    /// two (wavelength, phase) pairs.
    drifts: [[(f64, f64); 2]; DRIFTS],
    noise_seed: u64,
}

/// Spot lattice spacing; twice the largest spot radius, so only the 2×2×2
/// nearest cells can touch a point.
const SPOT_CELL_MM: f64 = 10.0;
const SPOTS_PER_CELL: u64 = 3;
/// Texture parameters that drift along the tube: noise scale, spot density,
/// spot size, spot polarity and fold strength.
const DRIFTS: usize = 5;
const DRIFT_WAVELENGTH_MM: (f64, f64) = (50.0, 200.0);
/// Faint fine-scale noise shared by every section, so that no stretch of a
/// textured wall is smooth enough to starve the detector.
const DETAIL_FREQUENCY: f64 = 0.3;
const DETAIL_AMPLITUDE: f64 = 0.2;

fn catmull_rom(p0: &Vector3<f64>, p1: &Vector3<f64>, p2: &Vector3<f64>, p3: &Vector3<f64>, t: f64) -> Vector3<f64> {
    let t2 = t * t;
    let t3 = t2 * t;
    0.5 * ((2.0 * p1) + (-p0 + p2) * t + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * t2 + (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * t3)
}

fn rotate_about(v: &Vector3<f64>, axis: &Vector3<f64>, angle: f64) -> Vector3<f64> {
    let (s, c) = angle.sin_cos();
    v * c + axis.cross(v) * s + axis * axis.dot(v) * (1.0 - c)
}

impl TubeWorld {
    pub fn generate(seed: u64, config: &WorldConfig) -> Result<TubeWorld, SimError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _attempt in 0..64 {
            let stations = Self::centerline(&mut rng, config);
            let radius_waves = [
                (rng.gen_range(120.0..220.0), rng.gen_range(0.0..std::f64::consts::TAU), 0.5),
                (rng.gen_range(45.0..80.0), rng.gen_range(0.0..std::f64::consts::TAU), 0.3),
                (rng.gen_range(17.0..29.0), rng.gen_range(0.0..std::f64::consts::TAU), 0.2),
            ];
            let mut drifts = [[(0.0, 0.0); 2]; DRIFTS];
            for d in drifts.iter_mut().flatten() {
                *d = (rng.gen_range(DRIFT_WAVELENGTH_MM.0..DRIFT_WAVELENGTH_MM.1), rng.gen_range(0.0..std::f64::consts::TAU));
            }
            let mut world = TubeWorld {
                seed,
                config: config.clone(),
                stations,
                sections: Vec::new(),
                radius_waves,
                drifts,
                noise_seed: rng.gen(),
            };
            for st in world.stations.iter_mut() {
                st.radius = Self::radius_profile(&radius_waves, config, st.arclength);
            }
            if world.self_clearance_ok() {
                world.sections = Self::styles(&mut rng, config);
                return Ok(world);
            }
        }
        Err(SimError::InvalidConfig("could not draw a non-intersecting centerline".into()))
    }

    fn radius_profile(waves: &[(f64, f64, f64); 3], config: &WorldConfig, s: f64) -> f64 {
        let wobble: f64 = waves.iter().map(|(l, p, w)| w * (std::f64::consts::TAU * s / l + p).sin()).sum();
        config.radius_mean_mm + config.radius_variation_mm * wobble
    }

    fn centerline(rng: &mut ChaCha8Rng, config: &WorldConfig) -> Vec<Station> {
        let n_ctrl = (config.length_mm / config.control_spacing_mm).ceil() as usize + 4;
        let mut heading = Vector3::x();
        let mut up = Vector3::z();
        let mut ctrl = vec![Vector3::zeros() - heading * config.control_spacing_mm, Vector3::zeros()];
        let max_turn = config.max_turn_deg.to_radians();
        for _ in 0..n_ctrl {
            let yaw = rng.gen_range(-max_turn..max_turn);
            let pitch = rng.gen_range(-0.35 * max_turn..0.35 * max_turn);
            heading = rotate_about(&heading, &up, yaw);
            let side = heading.cross(&up).normalize();
            heading = rotate_about(&heading, &side, pitch).normalize();
            // keep the curve roughly planar, like a body cavity
            up = (up - heading * heading.dot(&up)).normalize();
            let last = *ctrl.last().unwrap();
            ctrl.push(last + heading * config.control_spacing_mm);
        }

        // dense spline samples, then resample at uniform arclength
        let mut dense = vec![ctrl[1]];
        for k in 1..ctrl.len() - 2 {
            for i in 1..=200 {
                let t = i as f64 / 200.0;
                dense.push(catmull_rom(&ctrl[k - 1], &ctrl[k], &ctrl[k + 1], &ctrl[k + 2], t));
            }
        }
        let mut cum = vec![0.0];
        for w in dense.windows(2) {
            cum.push(cum.last().unwrap() + (w[1] - w[0]).norm());
        }
        let n = (config.length_mm / config.segment_mm).round() as usize;
        let mut points = Vec::with_capacity(n + 1);
        let mut j = 0;
        for i in 0..=n {
            let s = i as f64 * config.segment_mm;
            while j + 2 < cum.len() && cum[j + 1] < s {
                j += 1;
            }
            let f = ((s - cum[j]) / (cum[j + 1] - cum[j])).clamp(0.0, 1.0);
            points.push(dense[j] + (dense[j + 1] - dense[j]) * f);
        }

        let mut stations = Vec::with_capacity(points.len());
        let mut normal: Option<Vector3<f64>> = None;
        for i in 0..points.len() {
            let a = points[i.saturating_sub(1)];
            let b = points[(i + 1).min(points.len() - 1)];
            let tangent = (b - a).normalize();
            let nrm = match normal {
                None => {
                    let seed_dir = if tangent.z.abs() < 0.9 { Vector3::z() } else { Vector3::x() };
                    (seed_dir - tangent * tangent.dot(&seed_dir)).normalize()
                }
                // parallel transport: strip the component along the new tangent
                Some(prev) => (prev - tangent * tangent.dot(&prev)).normalize(),
            };
            normal = Some(nrm);
            stations.push(Station {
                arclength: i as f64 * config.segment_mm,
                point: points[i],
                tangent,
                normal: nrm,
                binormal: tangent.cross(&nrm),
                radius: 0.0,
            });
        }
        stations
    }

    fn self_clearance_ok(&self) -> bool {
        let step = 10;
        for i in (0..self.stations.len()).step_by(step) {
            for j in (i..self.stations.len()).step_by(step) {
                let a = &self.stations[i];
                let b = &self.stations[j];
                let r = a.radius.max(b.radius);
                if b.arclength - a.arclength > 6.0 * r && (a.point - b.point).norm() < 3.0 * r {
                    return false;
                }
            }
        }
        true
    }

    /// Section styles. Each section draws a distinct combination of coarse
    /// levels (noise scale, fold strength, spot layout, spot polarity), so
    /// sections differ in texture statistics and not only in detail.
    fn styles(rng: &mut ChaCha8Rng, config: &WorldConfig) -> Vec<SectionStyle> {
        const SCALE: [f64; 3] = [0.06, 0.12, 0.22];
        const FOLDS: [(f64, f64); 3] = [(0.0, 20.0), (0.12, 9.0), (0.25, 22.0)];
        const SPOTS: [(f64, f64); 3] = [(0.2, 3.0), (0.5, 4.0), (0.9, 5.0)];
        const DARK: [f64; 2] = [0.85, 0.3];
        let mut combos: Vec<[usize; 4]> = (0..54).map(|c| [c % 3, c / 3 % 3, c / 9 % 3, c / 27]).collect();
        combos.shuffle(rng);
        let mut start = 0.0;
        SECTIONS
            .iter()
            .zip(combos)
            .map(|(&(name, share), [sc, fo, sp, dk])| {
                let end = start + share * config.length_mm;
                let low = config.low_texture_sections.iter().any(|s| s == name);
                let amp_scale = if low { 0.05 } else { 1.0 };
                let style = SectionStyle {
                    name: name.to_string(),
                    start,
                    end,
                    base: rng.gen_range(0.45..0.75),
                    amplitude: rng.gen_range(0.55..0.85) * amp_scale,
                    frequency: SCALE[sc] * rng.gen_range(0.9..1.1),
                    fold_spacing: FOLDS[fo].1 * rng.gen_range(0.9..1.1),
                    fold_strength: FOLDS[fo].0 * amp_scale,
                    spot_density: SPOTS[sp].0,
                    spot_radius: SPOTS[sp].1,
                    spot_dark: DARK[dk],
                    spot_amplitude: rng.gen_range(0.4..0.55) * amp_scale,
                    detail: if low { 0.05 } else { 1.0 },
                };
                start = end;
                style
            })
            .collect()
    }

    pub fn length(&self) -> f64 {
        self.stations.last().map_or(0.0, |s| s.arclength)
    }

    pub fn radius_at(&self, s: f64) -> f64 {
        Self::radius_profile(&self.radius_waves, &self.config, s)
    }

    /// Interpolated centerline station at arclength `s`.
    pub fn station_at(&self, s: f64) -> Station {
        let h = self.config.segment_mm;
        let s = s.clamp(0.0, self.length());
        let i = ((s / h).floor() as usize).min(self.stations.len() - 2);
        let f = (s - i as f64 * h) / h;
        let a = &self.stations[i];
        let b = &self.stations[i + 1];
        let tangent = (a.tangent * (1.0 - f) + b.tangent * f).normalize();
        let n = a.normal * (1.0 - f) + b.normal * f;
        let normal = (n - tangent * tangent.dot(&n)).normalize();
        Station {
            arclength: s,
            point: a.point * (1.0 - f) + b.point * f,
            tangent,
            normal,
            binormal: tangent.cross(&normal),
            radius: self.radius_at(s),
        }
    }

    /// Index of the nearest station, searching the whole centerline.
    pub fn nearest_station(&self, p: &Vector3<f64>) -> usize {
        let mut best = (0, f64::INFINITY);
        for (i, st) in self.stations.iter().enumerate() {
            let d = (st.point - p).norm_squared();
            if d < best.1 {
                best = (i, d);
            }
        }
        best.0
    }

    pub fn section_index(&self, s: f64) -> usize {
        self.sections.iter().position(|sec| s < sec.end).unwrap_or(self.sections.len() - 1)
    }

    pub fn section_name(&self, s: f64) -> &str {
        &self.sections[self.section_index(s)].name
    }

    /// Smooth drift in `[-1, 1]` of texture parameter `k` at arclength `s`.
    fn drift(&self, k: usize, s: f64) -> f64 {
        self.drifts[k].iter().map(|(l, p)| 0.5 * (std::f64::consts::TAU * s / l + p).sin()).sum()
    }

    /// Albedo at a surface point with arclength `s`: multi-octave value
    /// noise, circumferential fold bands and a sparse layer of smooth spots.
    pub fn albedo(&self, p: &Vector3<f64>, s: f64) -> f64 {
        let sec = &self.sections[self.section_index(s)];
        let mut noise = 0.0;
        let mut weight = 0.0;
        let mut f = sec.frequency * 2f64.powf(0.3 * self.drift(0, s));
        let mut w = 1.0;
        for octave in 0..3u64 {
            noise += w * value_noise(p * f, self.noise_seed.wrapping_add(octave));
            weight += w;
            f *= 0.5;
            w *= 0.6;
        }
        let noise = noise / weight - 0.5;
        let folds = sec.fold_strength * (1.0 + 0.3 * self.drift(4, s)) * (std::f64::consts::TAU * s / sec.fold_spacing).cos();
        let density = (sec.spot_density * (1.0 + 0.3 * self.drift(1, s))).clamp(0.0, 1.0);
        let radius = sec.spot_radius * 2f64.powf(-0.25 + 0.25 * self.drift(2, s).min(1.0));
        let dark = (sec.spot_dark + 0.15 * self.drift(3, s)).clamp(0.0, 1.0);
        let spots = sec.spot_amplitude * self.spots(p, density, radius, dark);
        let detail = DETAIL_AMPLITUDE * sec.detail * (value_noise(p * DETAIL_FREQUENCY, self.noise_seed ^ 0xDE7A11) - 0.5);
        (sec.base + sec.amplitude * noise + folds + spots + detail).clamp(0.02, 1.0)
    }

    /// Sum of compact `(1 − d²/r²)³` bumps, a fraction `dark` of them dark, centred at seeded
    /// positions of a jittered lattice.
    fn spots(&self, p: &Vector3<f64>, density: f64, radius: f64, dark: f64) -> f64 {
        let q = p / SPOT_CELL_MM;
        let base = q.map(|v| v.floor());
        // the nearer neighbour along each axis
        let side = (q - base).map(|v| if v < 0.5 { -1.0 } else { 0.0 });
        let seed = self.noise_seed ^ 0x5107_5EED;
        let mut total = 0.0;
        for corner in 0..8u32 {
            let cell = Vector3::new(
                base.x + side.x + f64::from(corner & 1),
                base.y + side.y + f64::from((corner >> 1) & 1),
                base.z + side.z + f64::from((corner >> 2) & 1),
            );
            for slot in 0..SPOTS_PER_CELL {
                let h = |k: u64| hash3(cell.x as i64, cell.y as i64, cell.z as i64, seed.wrapping_add(slot * 8 + k));
                if h(0) >= density {
                    continue;
                }
                let centre = (cell + Vector3::new(h(1), h(2), h(3))) * SPOT_CELL_MM;
                let r = radius * (0.7 + 0.3 * h(4));
                let d2 = (p - centre).norm_squared() / (r * r);
                if d2 < 1.0 {
                    let bump = (1.0 - d2).powi(3);
                    total += if h(5) < dark { -bump } else { 0.6 * bump };
                }
            }
        }
        total
    }

    /// Digest of the texture sampled on a fixed grid; equal worlds agree.
    pub fn texture_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let n = self.stations.len();
        for i in (0..n).step_by(7) {
            let st = &self.stations[i];
            for k in 0..16 {
                let a = k as f64 * std::f64::consts::TAU / 16.0;
                let p = st.point + (st.normal * a.cos() + st.binormal * a.sin()) * st.radius;
                for b in self.albedo(&p, st.arclength).to_bits().to_le_bytes() {
                    h ^= b as u64;
                    h = h.wrapping_mul(0x100000001b3);
                }
            }
        }
        h
    }
}

fn hash3(x: i64, y: i64, z: i64, seed: u64) -> f64 {
    let mut h = seed ^ 0x9E3779B97F4A7C15;
    for v in [x, y, z] {
        h ^= v as u64;
        h = h.wrapping_mul(0xBF58476D1CE4E5B9);
        h ^= h >> 31;
        h = h.wrapping_mul(0x94D049BB133111EB);
        h ^= h >> 29;
    }
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn fade(t: f64) -> f64 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

/// Lattice value noise in `[0, 1)` with quintic interpolation.
pub fn value_noise(p: Vector3<f64>, seed: u64) -> f64 {
    let (fx, fy, fz) = (p.x.floor(), p.y.floor(), p.z.floor());
    let (ix, iy, iz) = (fx as i64, fy as i64, fz as i64);
    let (tx, ty, tz) = (fade(p.x - fx), fade(p.y - fy), fade(p.z - fz));
    let lerp = |a: f64, b: f64, t: f64| a + (b - a) * t;
    let c = |dx, dy, dz| hash3(ix + dx, iy + dy, iz + dz, seed);
    let x00 = lerp(c(0, 0, 0), c(1, 0, 0), tx);
    let x10 = lerp(c(0, 1, 0), c(1, 1, 0), tx);
    let x01 = lerp(c(0, 0, 1), c(1, 0, 1), tx);
    let x11 = lerp(c(0, 1, 1), c(1, 1, 1), tx);
    lerp(lerp(x00, x10, ty), lerp(x01, x11, ty), tz)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_world_shape() {
        let w = TubeWorld::generate(7, &WorldConfig::default()).unwrap();
        assert!((w.length() - 1500.0).abs() < 1e-9);
        assert_eq!(w.sections.len(), 13);
        assert!((w.sections.last().unwrap().end - 1500.0).abs() < 1e-9);
        assert!(w.stations.iter().all(|s| s.radius > 0.0));
    }

    #[test]
    fn same_seed_same_world() {
        let a = TubeWorld::generate(11, &WorldConfig::default()).unwrap();
        let b = TubeWorld::generate(11, &WorldConfig::default()).unwrap();
        let c = TubeWorld::generate(12, &WorldConfig::default()).unwrap();
        assert_eq!(a.texture_hash(), b.texture_hash());
        assert_ne!(a.texture_hash(), c.texture_hash());
    }

    #[test]
    fn frames_are_orthonormal() {
        let w = TubeWorld::generate(3, &WorldConfig::default()).unwrap();
        for st in w.stations.iter().step_by(37) {
            assert!((st.tangent.norm() - 1.0).abs() < 1e-12);
            assert!(st.tangent.dot(&st.normal).abs() < 1e-12);
            assert!((st.tangent.cross(&st.normal) - st.binormal).norm() < 1e-12);
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let cfg = WorldConfig { radius_mean_mm: -1.0, ..WorldConfig::default() };
        assert!(matches!(TubeWorld::generate(0, &cfg), Err(SimError::InvalidConfig(_))));
        let cfg = WorldConfig { low_texture_sections: vec!["stomach".into()], ..WorldConfig::default() };
        assert!(TubeWorld::generate(0, &cfg).is_err());
    }
}

