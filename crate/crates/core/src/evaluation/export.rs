use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use serde::Serialize;

use super::Trajectory;
use crate::data::image_io::write_depth_mm;
use crate::error::{Error, Result};
use crate::geometry::DepthMap;

pub const TRAJECTORY_CSV_HEADER: &str = "frame,x,y,z,qw,qx,qy,qz";

pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut out = format!("{TRAJECTORY_CSV_HEADER}\n");
    for (f, p) in traj.frames.iter().zip(&traj.poses) {
        let t = p.translation();
        let q = p.quaternion();
        writeln!(
            out,
            "{f},{},{},{},{},{},{},{}",
            t[0], t[1], t[2], q[0], q[1], q[2], q[3]
        )
        .expect("string write");
    }
    out
}

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
];

/// Top-down (x, z) plot of labelled trajectories.
pub fn trajectory_svg(series: &[(&str, &Trajectory)]) -> String {
    let points: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|(_, t)| t.translations())
        .map(|t| (t[0], t[2]))
        .collect();
    let (mut x0, mut x1, mut z0, mut z1) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for &(x, z) in &points {
        x0 = x0.min(x);
        x1 = x1.max(x);
        z0 = z0.min(z);
        z1 = z1.max(z);
    }
    let span = (x1 - x0).max(z1 - z0).max(1e-6);
    let (size, margin) = (480.0, 40.0);
    let scale = (size - 2.0 * margin) / span;
    // z grows upwards on the page
    let map = |x: f64, z: f64| (margin + (x - x0) * scale, size - margin - (z - z0) * scale);
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{size}\" height=\"{size}\" viewBox=\"0 0 {size} {size}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    );
    for (i, (label, traj)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = traj
            .translations()
            .iter()
            .map(|t| {
                let (u, v) = map(t[0], t[2]);
                format!("{u:.2},{v:.2}")
            })
            .collect();
        writeln!(
            svg,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>",
            pts.join(" ")
        )
        .expect("string write");
        writeln!(
            svg,
            "<text x=\"{margin}\" y=\"{}\" fill=\"{color}\" font-family=\"sans-serif\" font-size=\"14\">{}</text>",
            20.0 + 16.0 * i as f64,
            xml_escape(label)
        )
        .expect("string write");
    }
    svg.push_str("</svg>\n");
    svg
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Inverse depth mapped through a dark-to-bright palette; invalid pixels
/// are black.
pub fn depth_false_color(depth: &DepthMap) -> RgbImage {
    const STOPS: [[f64; 3]; 5] = [
        [0.0, 0.0, 4.0],
        [81.0, 18.0, 124.0],
        [183.0, 55.0, 121.0],
        [252.0, 137.0, 97.0],
        [252.0, 253.0, 191.0],
    ];
    let inv: Vec<Option<f64>> = depth
        .values()
        .iter()
        .zip(depth.valid())
        .map(|(d, v)| (*v && *d > 0.0).then(|| 1.0 / d))
        .collect();
    let (lo, hi) = inv
        .iter()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(*v), hi.max(*v))
        });
    let range = (hi - lo).max(1e-12);
    let w = depth.width();
    RgbImage::from_fn(w as u32, depth.height() as u32, |x, y| {
        let Some(v) = inv[y as usize * w + x as usize] else {
            return Rgb([0, 0, 0]);
        };
        let t = ((v - lo) / range).clamp(0.0, 1.0) * (STOPS.len() - 1) as f64;
        let i = (t.floor() as usize).min(STOPS.len() - 2);
        let f = t - i as f64;
        let c = |k: usize| (STOPS[i][k] * (1.0 - f) + STOPS[i + 1][k] * f).round() as u8;
        Rgb([c(0), c(1), c(2)])
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Named inputs for [`export_artifacts`].
pub struct Artifacts<'a, M: Serialize> {
    /// `(name, predicted, ground truth)`.
    pub trajectories: Vec<(String, &'a Trajectory, Option<&'a Trajectory>)>,
    pub depth_maps: Vec<(String, &'a DepthMap)>,
    pub metrics: Option<&'a M>,
}

impl<M: Serialize> Default for Artifacts<'_, M> {
    fn default() -> Self {
        Self {
            trajectories: Vec::new(),
            depth_maps: Vec::new(),
            metrics: None,
        }
    }
}

/// Writes `<name>.csv` and `<name>.svg` per trajectory, `<name>.png`
/// (16-bit millimetres) and `<name>_color.png` per depth map, and
/// `metrics.json`. Returns the paths written.
pub fn export_artifacts<M: Serialize>(
    out_dir: &Path,
    artifacts: &Artifacts<'_, M>,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    for (name, pred, gt) in &artifacts.trajectories {
        let csv = out_dir.join(format!("{name}.csv"));
        write_text(&csv, &trajectory_csv(pred))?;
        let mut series = vec![("prediction", *pred)];
        if let Some(gt) = gt {
            series.push(("ground truth", *gt));
        }
        let svg = out_dir.join(format!("{name}.svg"));
        write_text(&svg, &trajectory_svg(&series))?;
        written.extend([csv, svg]);
    }
    for (name, depth) in &artifacts.depth_maps {
        let png = out_dir.join(format!("{name}.png"));
        write_depth_mm(&png, depth)?;
        let color = out_dir.join(format!("{name}_color.png"));
        depth_false_color(depth)
            .save(&color)
            .map_err(|e| Error::Image {
                path: color.clone(),
                source: e,
            })?;
        written.extend([png, color]);
    }
    if let Some(metrics) = artifacts.metrics {
        let path = out_dir.join("metrics.json");
        let json = serde_json::to_string_pretty(metrics)
            .map_err(|e| Error::Data(format!("metrics serialization: {e}")))?;
        write_text(&path, &(json + "\n"))?;
        written.push(path);
    }
    Ok(written)
}
