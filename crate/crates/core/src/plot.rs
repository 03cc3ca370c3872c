//! Minimal PNG rendering of run artifacts: scatter plots, heat maps,
//! learning curves and maze trajectories. No axes or text; the data files
//! next to each image carry the numbers.

use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};

use crate::config::RunConfig;
use crate::envs::{constants::MAZE_LAYOUT, GaussianMixture, MazeLayout};
use crate::error::{DqsError, Result};
use crate::eval::{self, MetricsRow};

const SIZE: u32 = 512;
const WHITE: Rgb<u8> = Rgb([255, 255, 255]);

/// An image with a linear world-to-pixel map.
pub struct Canvas {
    pub img: RgbImage,
    x_range: [f64; 2],
    y_range: [f64; 2],
}

impl Canvas {
    pub fn new(x_range: [f64; 2], y_range: [f64; 2]) -> Self {
        Self {
            img: RgbImage::from_pixel(SIZE, SIZE, WHITE),
            x_range,
            y_range,
        }
    }

    fn to_px(&self, x: f64, y: f64) -> (i64, i64) {
        let fx = (x - self.x_range[0]) / (self.x_range[1] - self.x_range[0]);
        let fy = (y - self.y_range[0]) / (self.y_range[1] - self.y_range[0]);
        let w = SIZE as f64 - 1.0;
        ((fx * w).round() as i64, ((1.0 - fy) * w).round() as i64)
    }

    fn put(&mut self, px: i64, py: i64, c: Rgb<u8>) {
        if px >= 0 && py >= 0 && px < SIZE as i64 && py < SIZE as i64 {
            self.img.put_pixel(px as u32, py as u32, c);
        }
    }

    pub fn dot(&mut self, x: f64, y: f64, radius: i64, c: Rgb<u8>) {
        let (cx, cy) = self.to_px(x, y);
        for dy in -radius..=radius {
            for dx in -radius..=radius {
                if dx * dx + dy * dy <= radius * radius {
                    self.put(cx + dx, cy + dy, c);
                }
            }
        }
    }

    pub fn line(&mut self, a: [f64; 2], b: [f64; 2], c: Rgb<u8>) {
        let (x0, y0) = self.to_px(a[0], a[1]);
        let (x1, y1) = self.to_px(b[0], b[1]);
        let n = (x1 - x0).abs().max((y1 - y0).abs()).max(1);
        for i in 0..=n {
            let t = i as f64 / n as f64;
            let px = x0 as f64 + t * (x1 - x0) as f64;
            let py = y0 as f64 + t * (y1 - y0) as f64;
            self.put(px.round() as i64, py.round() as i64, c);
        }
    }

    pub fn fill_rect(&mut self, lo: [f64; 2], hi: [f64; 2], c: Rgb<u8>) {
        let (x0, y1) = self.to_px(lo[0], lo[1]);
        let (x1, y0) = self.to_px(hi[0], hi[1]);
        for py in y0.min(y1)..=y0.max(y1) {
            for px in x0.min(x1)..=x0.max(x1) {
                self.put(px, py, c);
            }
        }
    }

    /// Colours every pixel by `f` evaluated at its world coordinate.
    pub fn shade<F: Fn(f64, f64) -> Rgb<u8>>(&mut self, f: F) {
        let w = SIZE as f64 - 1.0;
        for py in 0..SIZE {
            for px in 0..SIZE {
                let x = self.x_range[0] + px as f64 / w * (self.x_range[1] - self.x_range[0]);
                let y = self.y_range[0] + (1.0 - py as f64 / w) * (self.y_range[1] - self.y_range[0]);
                self.img.put_pixel(px, py, f(x, y));
            }
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.img
            .save(path)
            .map_err(|e| DqsError::io(path, std::io::Error::other(e.to_string())))
    }
}

/// Blue-to-yellow ramp for `t ∈ [0, 1]`.
pub fn ramp(t: f64) -> Rgb<u8> {
    let t = t.clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    Rgb([lerp(40.0, 250.0), lerp(30.0, 220.0), lerp(120.0, 40.0)])
}

fn palette(i: usize) -> Rgb<u8> {
    const P: [[u8; 3]; 6] = [
        [31, 119, 180],
        [255, 127, 14],
        [44, 160, 44],
        [214, 39, 40],
        [148, 103, 189],
        [140, 86, 75],
    ];
    Rgb(P[i % P.len()])
}

/// Terminal samples (red) and ground truth (grey) over the mixture density.
pub fn plot_gmm_samples(
    mixture: &GaussianMixture,
    samples: &[[f64; 2]],
    truth: &[[f64; 2]],
    path: &Path,
) -> Result<()> {
    let r = [-50.0, 50.0];
    let mut c = Canvas::new(r, r);
    c.shade(|x, y| {
        let d = mixture.log_density([x, y]);
        // contour bands of the log-density
        let t = ((d + 30.0) / 30.0).clamp(0.0, 1.0);
        let v = (255.0 - 60.0 * t) as u8;
        Rgb([v, v, 255])
    });
    for p in truth {
        c.dot(p[0], p[1], 1, Rgb([120, 120, 120]));
    }
    for p in samples {
        c.dot(p[0], p[1], 2, Rgb([220, 30, 30]));
    }
    c.save(path)
}

/// Heat map of `(x, y, value)` cells on a regular grid.
pub fn plot_heat(cells: &[[f64; 3]], path: &Path) -> Result<()> {
    if cells.is_empty() {
        return Err(DqsError::Domain("no cells to plot".into()));
    }
    let fold = |i: usize, f: fn(f64, f64) -> f64, init: f64| cells.iter().map(|c| c[i]).fold(init, f);
    let (x0, x1) = (fold(0, f64::min, f64::INFINITY), fold(0, f64::max, f64::NEG_INFINITY));
    let (y0, y1) = (fold(1, f64::min, f64::INFINITY), fold(1, f64::max, f64::NEG_INFINITY));
    let (v0, v1) = (fold(2, f64::min, f64::INFINITY), fold(2, f64::max, f64::NEG_INFINITY));
    let n = (cells.len() as f64).sqrt().round().max(1.0);
    let hx = (x1 - x0) / (n - 1.0).max(1.0);
    let hy = (y1 - y0) / (n - 1.0).max(1.0);
    let mut c = Canvas::new([x0 - hx / 2.0, x1 + hx / 2.0], [y0 - hy / 2.0, y1 + hy / 2.0]);
    let span = (v1 - v0).max(1e-12);
    for cell in cells {
        c.fill_rect(
            [cell[0] - hx / 2.0, cell[1] - hy / 2.0],
            [cell[0] + hx / 2.0, cell[1] + hy / 2.0],
            ramp((cell[2] - v0) / span),
        );
    }
    c.save(path)
}

/// One polyline per episode over the wall grid.
pub fn plot_maze(layout: &MazeLayout, episodes: &[Vec<[f64; 2]>], path: &Path) -> Result<()> {
    let (hw, hh) = (layout.half_width(), layout.half_height());
    let mut c = Canvas::new([-hw, hw], [-hh, hh]);
    for r in 0..layout.rows() {
        for col in 0..layout.cols() {
            if layout.is_wall(r, col) {
                let ctr = layout.cell_center(r, col);
                c.fill_rect([ctr[0] - 0.5, ctr[1] - 0.5], [ctr[0] + 0.5, ctr[1] + 0.5], Rgb([60, 60, 60]));
            }
        }
    }
    for g in &layout.goals {
        c.dot(g[0], g[1], 12, Rgb([120, 220, 120]));
    }
    for (i, ep) in episodes.iter().enumerate() {
        for w in ep.windows(2) {
            c.line(w[0], w[1], palette(i));
        }
    }
    c.save(path)
}

/// Episode returns (top half) and critic loss on a log scale (bottom half).
pub fn plot_curves(rows: &[MetricsRow], path: &Path) -> Result<()> {
    let steps: Vec<f64> = rows.iter().map(|r| r.step as f64).collect();
    let max_step = steps.iter().copied().fold(1.0, f64::max);
    let mut c = Canvas::new([0.0, max_step], [0.0, 2.0]);
    let series: [(Vec<(f64, f64)>, Rgb<u8>, f64); 2] = [
        (
            rows.iter().filter_map(|r| r.episode_return.map(|v| (r.step as f64, v))).collect(),
            palette(0),
            1.0,
        ),
        (
            rows.iter()
                .filter_map(|r| r.critic_loss.filter(|v| *v > 0.0).map(|v| (r.step as f64, v.ln())))
                .collect(),
            palette(3),
            0.0,
        ),
    ];
    for (pts, colour, base) in series.iter() {
        if pts.len() < 2 {
            continue;
        }
        let lo = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let hi = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        let span = (hi - lo).max(1e-12);
        let y = |v: f64| base + 0.05 + 0.9 * (v - lo) / span;
        for w in pts.windows(2) {
            c.line([w[0].0, y(w[0].1)], [w[1].0, y(w[1].1)], *colour);
        }
    }
    c.save(path)
}

/// Lists the required files that are missing under `dir`.
pub fn missing(dir: &Path, names: &[&str]) -> Vec<PathBuf> {
    names.iter().map(|n| dir.join(n)).filter(|p| !p.exists()).collect()
}

/// Images written by [`plot_run`] plus anything that was skipped.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlotSummary {
    pub written: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

/// Reads a CSV with a header line into rows of `n_cols` numbers.
pub fn read_numeric_csv(path: &Path, n_cols: usize) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path).map_err(|e| DqsError::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| DqsError::Domain(format!("{}:{}: {e}", path.display(), i + 1)))?;
        if row.len() != n_cols {
            return Err(DqsError::Domain(format!(
                "{}:{}: expected {n_cols} fields, got {}",
                path.display(),
                i + 1,
                row.len()
            )));
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Groups `episode,t,x,y,...` rows into one position list per episode.
pub fn read_episodes(path: &Path) -> Result<Vec<Vec<[f64; 2]>>> {
    let mut episodes: Vec<Vec<[f64; 2]>> = Vec::new();
    for r in read_numeric_csv(path, 7)? {
        let e = r[0] as usize;
        if episodes.len() <= e {
            episodes.resize(e + 1, Vec::new());
        }
        episodes[e].push([r[2], r[3]]);
    }
    Ok(episodes)
}

/// Renders every image a run directory supports. Fails listing every
/// missing input by name.
pub fn plot_run(run_dir: &Path) -> Result<PlotSummary> {
    let base = missing(run_dir, &["config.cfg", "metrics.csv"]);
    if !base.is_empty() {
        return Err(missing_error(&base));
    }
    let cfg = RunConfig::load(&run_dir.join("config.cfg"), &[])?;
    let needed: &[&str] = match cfg.env.as_str() {
        "gmm" => &["samples.csv", "ground_truth.csv", "logz.csv"],
        "maze" => &["trajectories.csv"],
        other => return Err(DqsError::Unsupported(format!("no plots for environment {other}"))),
    };
    let absent = missing(run_dir, needed);
    if !absent.is_empty() {
        return Err(missing_error(&absent));
    }
    let mut out = PlotSummary::default();
    let rows = eval::read_metrics(&run_dir.join("metrics.csv"))?;
    if rows.is_empty() {
        out.warnings.push("metrics.csv has no rows; learning curves skipped".into());
    } else {
        let p = run_dir.join("curves.png");
        plot_curves(&rows, &p)?;
        out.written.push(p);
    }
    if cfg.env == "gmm" {
        let samples = eval::read_points(&run_dir.join("samples.csv"))?;
        let truth = eval::read_points(&run_dir.join("ground_truth.csv"))?;
        let p = run_dir.join("samples.png");
        plot_gmm_samples(&GaussianMixture::standard(), &samples, &truth, &p)?;
        out.written.push(p);
        let cells: Vec<[f64; 3]> = read_numeric_csv(&run_dir.join("logz.csv"), 3)?
            .into_iter()
            .map(|r| [r[0], r[1], r[2]])
            .collect();
        let p = run_dir.join("logZ.png");
        plot_heat(&cells, &p)?;
        out.written.push(p);
    } else {
        let episodes = read_episodes(&run_dir.join("trajectories.csv"))?;
        let p = run_dir.join("trajectories.png");
        plot_maze(&MazeLayout::parse(MAZE_LAYOUT)?, &episodes, &p)?;
        out.written.push(p);
    }
    Ok(out)
}

fn missing_error(paths: &[PathBuf]) -> DqsError {
    let names: Vec<String> = paths.iter().map(|p| p.display().to_string()).collect();
    DqsError::Domain(format!("missing artifacts: {}", names.join(", ")))
}
