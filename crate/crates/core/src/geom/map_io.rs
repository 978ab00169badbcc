//! Columnar text format for one zone map:
//!
//! ```text
//! zone_id n_points descriptor_len delta_r
//! x y z max_err d_0 ... d_{k-1}
//! ```
//!
//! Floats are written with nine significant digits, so a file read back and
//! written again reproduces the same bytes.

use std::fmt::Write as _;
use std::io;

use nalgebra::Vector3;

use super::camera::MapPoint;
use crate::features::Descriptor;

#[derive(Debug, Clone, PartialEq)]
pub struct ZoneMapFile {
    pub zone_id: usize,
    pub delta_r: f64,
    pub points: Vec<MapPoint>,
}

fn fmt_float(out: &mut String, v: f64) {
    write!(out, "{v:.8e}").unwrap();
}

pub fn write_zone_map(map: &ZoneMapFile) -> String {
    let k = map.points.first().map_or(0, |p| p.descriptor.len());
    let mut out = format!("{} {} {} ", map.zone_id, map.points.len(), k);
    fmt_float(&mut out, map.delta_r);
    out.push('\n');
    for p in &map.points {
        let values = [p.position.x, p.position.y, p.position.z, p.max_reproj_error];
        for (i, v) in values.iter().chain(p.descriptor.as_slice()).enumerate() {
            if i > 0 {
                out.push(' ');
            }
            fmt_float(&mut out, *v);
        }
        out.push('\n');
    }
    out
}

fn invalid(msg: String) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg)
}

pub fn read_zone_map(text: &str) -> io::Result<ZoneMapFile> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or_else(|| invalid("empty zone map".into()))?.split_whitespace().collect();
    if header.len() != 4 {
        return Err(invalid(format!("bad zone map header: {header:?}")));
    }
    let parse_usize = |s: &str| s.parse::<usize>().map_err(|e| invalid(format!("{s}: {e}")));
    let parse_f64 = |s: &str| s.parse::<f64>().map_err(|e| invalid(format!("{s}: {e}")));
    let zone_id = parse_usize(header[0])?;
    let n = parse_usize(header[1])?;
    let k = parse_usize(header[2])?;
    let delta_r = parse_f64(header[3])?;

    let mut points = Vec::with_capacity(n);
    for (row, line) in lines.enumerate() {
        let values = line.split_whitespace().map(parse_f64).collect::<io::Result<Vec<f64>>>()?;
        if values.len() != 4 + k {
            return Err(invalid(format!("row {row}: expected {} columns, got {}", 4 + k, values.len())));
        }
        points.push(MapPoint {
            position: Vector3::new(values[0], values[1], values[2]),
            max_reproj_error: values[3],
            descriptor: Descriptor::from_raw(values[4..].to_vec()),
            zone_id,
        });
    }
    if points.len() != n {
        return Err(invalid(format!("header promises {n} points, found {}", points.len())));
    }
    Ok(ZoneMapFile { zone_id, delta_r, points })
}
