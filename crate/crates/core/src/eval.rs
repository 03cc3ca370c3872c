//! Sample-quality metrics, log-partition grids and the metrics file.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::critic::QEnsemble;
use crate::error::{DqsError, Result};
use crate::ndmath::{log_sum_exp, pairwise_sum, DenseArray};

pub const METRICS_HEADER: &str = "step,episode_return,critic_loss,policy_loss,temperature,mmd,mode_coverage";
const BANDWIDTH_FLOOR: f64 = 1e-6;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Median pairwise Euclidean distance over all distinct pairs of `X ∪ Y`,
/// floored at `1e-6`.
pub fn median_bandwidth(x: &DenseArray, y: &DenseArray) -> f64 {
    let rows: Vec<&[f64]> = (0..x.rows())
        .map(|r| x.row_slice(r))
        .chain((0..y.rows()).map(|r| y.row_slice(r)))
        .collect();
    let mut d = Vec::with_capacity(rows.len() * rows.len().saturating_sub(1) / 2);
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            d.push(sq_dist(rows[i], rows[j]));
        }
    }
    if d.is_empty() {
        return BANDWIDTH_FLOOR;
    }
    let mid = d.len() / 2;
    let (_, m, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    m.sqrt().max(BANDWIDTH_FLOOR)
}

/// Unbiased squared MMD with the RBF kernel `exp(−‖a−b‖² / 2h²)`.
pub fn mmd_squared_with_bandwidth(x: &DenseArray, y: &DenseArray, h: f64) -> Result<f64> {
    let (m, n) = (x.rows(), y.rows());
    if m < 2 || n < 2 {
        return Err(DqsError::Domain(format!("MMD needs at least two samples per set, got {m} and {n}")));
    }
    if x.cols() != y.cols() {
        return Err(DqsError::dim(x.cols(), y.cols()));
    }
    let inv = 1.0 / (2.0 * h * h);
    let k = |a: &[f64], b: &[f64]| (-sq_dist(a, b) * inv).exp();
    let within = |s: &DenseArray| {
        let mut acc = 0.0;
        for i in 0..s.rows() {
            for j in i + 1..s.rows() {
                acc += k(s.row_slice(i), s.row_slice(j));
            }
        }
        2.0 * acc / (s.rows() * (s.rows() - 1)) as f64
    };
    // Summing the sorted cross terms makes the result exactly symmetric in X and Y.
    let mut cross = Vec::with_capacity(m * n);
    for i in 0..m {
        for j in 0..n {
            cross.push(k(x.row_slice(i), y.row_slice(j)));
        }
    }
    cross.sort_unstable_by(f64::total_cmp);
    Ok(within(x) + within(y) - 2.0 * pairwise_sum(&cross) / (m * n) as f64)
}

/// `sqrt(max(0, MMD²))` with the median-heuristic bandwidth.
pub fn mmd(x: &DenseArray, y: &DenseArray) -> Result<f64> {
    let h = median_bandwidth(x, y);
    Ok(mmd_squared_with_bandwidth(x, y, h)?.max(0.0).sqrt())
}

/// Fraction of `means` with at least one sample within `radius`.
pub fn mode_coverage(samples: &[[f64; 2]], means: &[[f64; 2]], radius: f64) -> Result<f64> {
    if !(radius > 0.0) {
        return Err(DqsError::Domain(format!("coverage radius must be positive, got {radius}")));
    }
    if samples.is_empty() || means.is_empty() {
        return Ok(0.0);
    }
    let r2 = radius * radius;
    let hit = means
        .iter()
        .filter(|m| samples.iter().any(|s| (s[0] - m[0]).powi(2) + (s[1] - m[1]).powi(2) <= r2))
        .count();
    Ok(hit as f64 / means.len() as f64)
}

/// Midpoint-rule estimate of `log ∫ exp(f(a)) da` over a 2-D box.
#[derive(Debug, Clone, PartialEq)]
pub struct LogPartition {
    pub log_z: f64,
    /// `|estimate(n) − estimate(n/2)|`; an error scale for the grid.
    pub refinement_delta: f64,
    /// `(x, y, log_z_cell)` per cell, where `log_z_cell = f + log(cell area)`.
    pub cells: Vec<[f64; 3]>,
}

fn grid_estimate<F>(f: &F, bounds: [[f64; 2]; 2], n: usize) -> Result<(f64, Vec<[f64; 3]>)>
where
    F: Fn(&DenseArray) -> Result<Vec<f64>>,
{
    let hx = (bounds[0][1] - bounds[0][0]) / n as f64;
    let hy = (bounds[1][1] - bounds[1][0]) / n as f64;
    let log_cell = (hx * hy).ln();
    let mut pts = Vec::with_capacity(2 * n * n);
    for i in 0..n {
        for j in 0..n {
            pts.push(bounds[0][0] + (i as f64 + 0.5) * hx);
            pts.push(bounds[1][0] + (j as f64 + 0.5) * hy);
        }
    }
    let pts = DenseArray::from_vec(&[n * n, 2], pts)?;
    let vals = f(&pts)?;
    if vals.len() != n * n {
        return Err(DqsError::dim(n * n, vals.len()));
    }
    let cells = (0..n * n)
        .map(|r| {
            let p = pts.row_slice(r);
            [p[0], p[1], vals[r] + log_cell]
        })
        .collect();
    Ok((log_sum_exp(&vals) + log_cell, cells))
}

/// Log-partition of an arbitrary batched log-integrand over `bounds`
/// (`[[x_lo, x_hi], [y_lo, y_hi]]`).
pub fn log_partition_of<F>(f: F, bounds: [[f64; 2]; 2], n_per_axis: usize) -> Result<LogPartition>
where
    F: Fn(&DenseArray) -> Result<Vec<f64>>,
{
    if n_per_axis < 8 {
        return Err(DqsError::Domain(format!("log-partition grid needs n >= 8, got {n_per_axis}")));
    }
    if bounds.iter().any(|b| !(b[1] > b[0])) {
        return Err(DqsError::Domain(format!("empty integration box {bounds:?}")));
    }
    let (log_z, cells) = grid_estimate(&f, bounds, n_per_axis)?;
    let (coarse, _) = grid_estimate(&f, bounds, n_per_axis / 2)?;
    Ok(LogPartition {
        log_z,
        refinement_delta: (log_z - coarse).abs(),
        cells,
    })
}

/// `log ∫ exp(min Q(s, a)) da` over a 2-D action box, online heads.
pub fn log_partition_grid(
    q: &QEnsemble,
    state: &[f64],
    bounds: [[f64; 2]; 2],
    n_per_axis: usize,
) -> Result<LogPartition> {
    if q.action_dim() != 2 {
        return Err(DqsError::Unsupported(format!(
            "log-partition grids need 2-D actions, got {}",
            q.action_dim()
        )));
    }
    let states_for = |n: usize| {
        let mut d = Vec::with_capacity(n * state.len());
        for _ in 0..n {
            d.extend_from_slice(state);
        }
        DenseArray::from_vec(&[n, state.len()], d)
    };
    log_partition_of(
        |pts| q.min_q_batch(&states_for(pts.rows())?, pts, false),
        bounds,
        n_per_axis,
    )
}

/// Summary of a batch of evaluation episodes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub episodes: usize,
    pub mean_return: Option<f64>,
    pub mmd: Option<f64>,
    pub mode_coverage: Option<f64>,
    /// Fraction of episodes that ended at each goal.
    pub goal_rates: Vec<f64>,
    pub mmd_kernel: String,
    pub samples_path: Option<PathBuf>,
}

impl EvalReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "episodes = {}", self.episodes);
        let fields = [("mean_return", self.mean_return), ("mmd", self.mmd), ("mode_coverage", self.mode_coverage)];
        for (name, v) in fields {
            if let Some(v) = v {
                let _ = writeln!(s, "{name} = {v}");
            }
        }
        if !self.mmd_kernel.is_empty() {
            let _ = writeln!(s, "mmd_kernel = {}", self.mmd_kernel);
        }
        for (i, r) in self.goal_rates.iter().enumerate() {
            let _ = writeln!(s, "goal_{i}_rate = {r}");
        }
        if let Some(p) = &self.samples_path {
            let _ = writeln!(s, "samples = {}", p.display());
        }
        s
    }
}

/// One line of the metrics file. Missing values are empty fields.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsRow {
    pub step: u64,
    pub episode_return: Option<f64>,
    pub critic_loss: Option<f64>,
    pub policy_loss: Option<f64>,
    pub temperature: Option<f64>,
    pub mmd: Option<f64>,
    pub mode_coverage: Option<f64>,
}

impl MetricsRow {
    pub fn to_line(&self) -> String {
        let f = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
        format!(
            "{},{},{},{},{},{},{}",
            self.step,
            f(self.episode_return),
            f(self.critic_loss),
            f(self.policy_loss),
            f(self.temperature),
            f(self.mmd),
            f(self.mode_coverage)
        )
    }

    pub fn parse(line: &str) -> std::result::Result<Self, String> {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(format!("expected 7 fields, got {}", fields.len()));
        }
        let opt = |s: &str| -> std::result::Result<Option<f64>, String> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|e| format!("`{s}`: {e}"))
            }
        };
        Ok(Self {
            step: fields[0].parse().map_err(|e| format!("step `{}`: {e}", fields[0]))?,
            episode_return: opt(fields[1])?,
            critic_loss: opt(fields[2])?,
            policy_loss: opt(fields[3])?,
            temperature: opt(fields[4])?,
            mmd: opt(fields[5])?,
            mode_coverage: opt(fields[6])?,
        })
    }
}

/// Metrics file writer; the header is written on creation.
pub struct MetricsWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| DqsError::io(dir, e))?;
        }
        let file = File::create(path).map_err(|e| DqsError::io(path, e))?;
        let mut w = Self {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        };
        writeln!(w.out, "{METRICS_HEADER}").map_err(|e| DqsError::io(path, e))?;
        w.flush()?;
        Ok(w)
    }

    pub fn append(&mut self, row: &MetricsRow) -> Result<()> {
        writeln!(self.out, "{}", row.to_line()).map_err(|e| DqsError::io(&self.path, e))
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush().map_err(|e| DqsError::io(&self.path, e))
    }
}

/// Writes a complete metrics file.
pub fn write_metrics(rows: &[MetricsRow], path: &Path) -> Result<()> {
    let mut w = MetricsWriter::create(path)?;
    for r in rows {
        w.append(r)?;
    }
    w.flush()
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let file = File::open(path).map_err(|e| DqsError::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| DqsError::io(path, e))?;
        if i == 0 {
            if line != METRICS_HEADER {
                return Err(DqsError::Config(format!("{}: unexpected metrics header `{line}`", path.display())));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        rows.push(
            MetricsRow::parse(&line)
                .map_err(|e| DqsError::Config(format!("{} line {}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(rows)
}

/// Writes `x,y` lines.
pub fn write_points(points: &[[f64; 2]], path: &Path) -> Result<()> {
    let mut s = String::from("x,y\n");
    for p in points {
        let _ = writeln!(s, "{},{}", p[0], p[1]);
    }
    write_text(path, &s)
}

pub fn read_points(path: &Path) -> Result<Vec<[f64; 2]>> {
    let text = std::fs::read_to_string(path).map_err(|e| DqsError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let mut it = line.split(',').map(str::parse::<f64>);
        match (it.next(), it.next()) {
            (Some(Ok(x)), Some(Ok(y))) => out.push([x, y]),
            _ => {
                return Err(DqsError::Config(format!("{} line {}: expected `x,y`", path.display(), i + 1)))
            }
        }
    }
    Ok(out)
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| DqsError::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| DqsError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    use crate::rng::seeded;

    fn normal_set(n: usize, shift: f64, seed: u64) -> DenseArray {
        let mut rng = seeded(seed);
        let d: Vec<f64> = (0..2 * n).map(|_| shift + rng.sample::<f64, _>(StandardNormal)).collect();
        DenseArray::from_vec(&[n, 2], d).unwrap()
    }

    #[test]
    fn mmd_identity_and_symmetry() {
        let x = normal_set(60, 0.0, 1);
        let y = normal_set(50, 0.5, 2);
        assert!(mmd(&x, &x).unwrap() < 1e-6);
        assert_eq!(mmd(&x, &y).unwrap(), mmd(&y, &x).unwrap());
        assert!(mmd(&DenseArray::zeros(&[1, 2]), &y).is_err());
        // identical points: bandwidth floor keeps everything finite
        let z = DenseArray::filled(&[5, 2], 3.0);
        assert!(mmd(&z, &z).unwrap().is_finite());
    }

    #[test]
    fn coverage_cases() {
        let means: Vec<[f64; 2]> = (0..40).map(|i| [i as f64 * 10.0, 0.0]).collect();
        assert_eq!(mode_coverage(&means, &means, 2.0).unwrap(), 1.0);
        assert_eq!(mode_coverage(&[means[3]; 10], &means, 2.0).unwrap(), 1.0 / 40.0);
        assert_eq!(mode_coverage(&[], &means, 2.0).unwrap(), 0.0);
        assert!(mode_coverage(&means, &means, 0.0).is_err());
    }

    #[test]
    fn constant_integrand_partition() {
        let lp = log_partition_of(|p| Ok(vec![1.5; p.rows()]), [[-1.0, 3.0], [0.0, 2.0]], 16).unwrap();
        assert!((lp.log_z - (1.5 + 8f64.ln())).abs() < 1e-12);
        assert!(log_partition_of(|p| Ok(vec![0.0; p.rows()]), [[0.0, 1.0], [0.0, 1.0]], 7).is_err());
    }

    #[test]
    fn metrics_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("metrics.csv");
        write_metrics(&[], &p).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), format!("{METRICS_HEADER}\n"));
        let rows = vec![
            MetricsRow {
                step: 10,
                critic_loss: Some(0.1 + 0.2),
                temperature: Some(1.0 / 3.0),
                ..Default::default()
            },
            MetricsRow {
                step: 20,
                episode_return: Some(-1e-300),
                mmd: Some(0.25),
                mode_coverage: Some(0.5),
                ..Default::default()
            },
        ];
        write_metrics(&rows, &p).unwrap();
        assert_eq!(read_metrics(&p).unwrap(), rows);
    }
}
