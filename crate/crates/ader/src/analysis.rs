//! Post-hoc state-diversity analysis: PCA projection of visited states to a
//! low-dimensional plane and 2-D visitation histograms.
//!
//! The eigenpairs come from power iteration with deflation; only the top
//! couple of components are ever needed, so a full eigensolver would be
//! overkill. Covariances are population covariances (divide by n), matching
//! the population convention used for the critic-ensemble statistics.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITERS: usize = 10_000;

/// Centered linear projection onto the top principal axes.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// Orthonormal axes, one per component, highest variance first.
    pub axes: Vec<Vec<f64>>,
    /// Eigenvalues of the population covariance, descending.
    pub variances: Vec<f64>,
}

fn covariance(states: &[Vec<f64>], mean: &[f64]) -> Vec<f64> {
    let d = mean.len();
    let n = states.len() as f64;
    let mut cov = vec![0.0; d * d];
    let mut centered = vec![0.0; d];
    for x in states {
        for (c, (v, m)) in centered.iter_mut().zip(x.iter().zip(mean)) {
            *c = v - m;
        }
        for i in 0..d {
            let ci = centered[i];
            for j in 0..d {
                cov[i * d + j] += ci * centered[j];
            }
        }
    }
    for v in &mut cov {
        *v /= n;
    }
    cov
}

fn mat_vec(m: &[f64], v: &[f64], out: &mut [f64]) {
    let d = v.len();
    for i in 0..d {
        let row = &m[i * d..(i + 1) * d];
        out[i] = row.iter().zip(v).map(|(a, b)| a * b).sum();
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Removes the components of `v` along each of `axes`, then renormalizes.
/// Returns false when nothing of `v` survives.
fn orthonormalize(v: &mut [f64], axes: &[Vec<f64>]) -> bool {
    for axis in axes {
        let c = dot(v, axis);
        for (vi, ai) in v.iter_mut().zip(axis) {
            *vi -= c * ai;
        }
    }
    let n = norm(v);
    if n < 1e-12 {
        return false;
    }
    for vi in v.iter_mut() {
        *vi /= n;
    }
    true
}

/// A unit vector orthogonal to all of `axes`, for eigenvalue-zero
/// components where power iteration has nothing to converge to.
fn orthogonal_filler(d: usize, axes: &[Vec<f64>]) -> Vec<f64> {
    for i in 0..d {
        let mut v = vec![0.0; d];
        v[i] = 1.0;
        if orthonormalize(&mut v, axes) {
            return v;
        }
    }
    unreachable!("fewer than d axes fixed, some basis vector must survive");
}

/// Fits a `k`-component PCA to the states: centers the data and extracts the
/// top-k eigenpairs of the population covariance by power iteration with
/// deflation (tolerance 1e-10, at most 10^4 iterations per component).
///
/// Data with no variance in any direction is rejected.
pub fn pca_fit(states: &[Vec<f64>], k: usize) -> Result<PcaModel> {
    if states.len() < 2 {
        return Err(Error::InvalidConfig(
            "PCA needs at least 2 states".into(),
        ));
    }
    let d = states[0].len();
    if d == 0 {
        return Err(Error::InvalidConfig("PCA needs nonempty states".into()));
    }
    if states.iter().any(|s| s.len() != d) {
        return Err(Error::DimMismatch {
            what: "PCA states",
            expected: d,
            got: states.iter().map(Vec::len).find(|&l| l != d).unwrap_or(0),
        });
    }
    if k == 0 || k > d {
        return Err(Error::InvalidConfig(format!(
            "component count must be in 1..={d}, got {k}"
        )));
    }

    let n = states.len() as f64;
    let mut mean = vec![0.0; d];
    for x in states {
        for (m, v) in mean.iter_mut().zip(x) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }

    let mut cov = covariance(states, &mean);
    let trace: f64 = (0..d).map(|i| cov[i * d + i]).sum();
    if trace <= 0.0 {
        return Err(Error::DegenerateData { directions: d });
    }
    let scale = trace / d as f64;

    let mut rng = ChaCha8Rng::seed_from_u64(0x9e3779b97f4a7c15);
    let mut axes: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut variances = Vec::with_capacity(k);
    for _ in 0..k {
        // Residual spectral mass of the deflated matrix.
        let residual: f64 = (0..d).map(|i| cov[i * d + i]).sum();
        if residual <= 1e-14 * scale.max(1.0) {
            let v = orthogonal_filler(d, &axes);
            axes.push(v);
            variances.push(0.0);
            continue;
        }

        let mut v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        if !orthonormalize(&mut v, &axes) {
            v = orthogonal_filler(d, &axes);
        }
        let mut w = vec![0.0; d];
        for _ in 0..POWER_MAX_ITERS {
            mat_vec(&cov, &v, &mut w);
            let mut next = w.clone();
            if !orthonormalize(&mut next, &axes) || norm(&w) < 1e-300 {
                break;
            }
            let delta = next
                .iter()
                .zip(&v)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            let delta_flipped = next
                .iter()
                .zip(&v)
                .map(|(a, b)| (a + b).abs())
                .fold(0.0f64, f64::max);
            v = next;
            if delta.min(delta_flipped) < POWER_TOL {
                break;
            }
        }

        mat_vec(&cov, &v, &mut w);
        let lambda = dot(&v, &w).max(0.0);
        for i in 0..d {
            for j in 0..d {
                cov[i * d + j] -= lambda * v[i] * v[j];
            }
        }
        axes.push(v);
        variances.push(lambda);
    }

    // Deflation yields components largest-first; enforce it exactly in case
    // of near-ties.
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| variances[b].total_cmp(&variances[a]));
    let axes = order.iter().map(|&i| axes[i].clone()).collect();
    let variances = order.iter().map(|&i| variances[i]).collect();

    Ok(PcaModel {
        mean,
        axes,
        variances,
    })
}

/// Projects states onto the model's axes: `(x - mean) . axis` per component.
pub fn pca_project(model: &PcaModel, states: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let d = model.mean.len();
    let mut out = Vec::with_capacity(states.len());
    let mut centered = vec![0.0; d];
    for x in states {
        if x.len() != d {
            return Err(Error::DimMismatch {
                what: "projection input",
                expected: d,
                got: x.len(),
            });
        }
        for (c, (v, m)) in centered.iter_mut().zip(x.iter().zip(&model.mean)) {
            *c = v - m;
        }
        out.push(model.axes.iter().map(|axis| dot(&centered, axis)).collect());
    }
    Ok(out)
}

/// Equal-width 2-D histogram spanning the data's bounding box.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram2d {
    pub bins: usize,
    /// Row-major counts: `counts[y_bin * bins + x_bin]`.
    pub counts: Vec<u64>,
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
}

impl Histogram2d {
    #[inline]
    pub fn count(&self, x_bin: usize, y_bin: usize) -> u64 {
        self.counts[y_bin * self.bins + x_bin]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

fn bin_index(v: f64, min: f64, max: f64, bins: usize) -> usize {
    if max <= min {
        return 0;
    }
    let frac = (v - min) / (max - min);
    (((frac * bins as f64) as usize).min(bins - 1)).max(0)
}

/// Bins the points into a `bins x bins` grid over their bounding box.
/// Points sitting exactly on the top edges land in the last bin, so every
/// point is counted exactly once.
pub fn histogram2d(points: &[(f64, f64)], bins: usize) -> Result<Histogram2d> {
    if points.is_empty() {
        return Err(Error::InvalidConfig("histogram needs points".into()));
    }
    if bins == 0 {
        return Err(Error::InvalidConfig("bins must be >= 1".into()));
    }
    let mut x_min = f64::INFINITY;
    let mut x_max = f64::NEG_INFINITY;
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for &(x, y) in points {
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::NonFinite("histogram point"));
        }
        x_min = x_min.min(x);
        x_max = x_max.max(x);
        y_min = y_min.min(y);
        y_max = y_max.max(y);
    }
    let mut counts = vec![0u64; bins * bins];
    for &(x, y) in points {
        let xb = bin_index(x, x_min, x_max, bins);
        let yb = bin_index(y, y_min, y_max, bins);
        counts[yb * bins + xb] += 1;
    }
    Ok(Histogram2d {
        bins,
        counts,
        x_range: (x_min, x_max),
        y_range: (y_min, y_max),
    })
}

/// Reads a flat little-endian `f64` state file with `dim` values per record.
pub fn read_states_f64(path: &Path, dim: usize) -> Result<Vec<Vec<f64>>> {
    if dim == 0 {
        return Err(Error::InvalidConfig("state dimension must be >= 1".into()));
    }
    let bytes = fs::read(path)?;
    if bytes.len() % (8 * dim) != 0 {
        return Err(Error::Snapshot(format!(
            "state file holds {} bytes, not a multiple of {} per record",
            bytes.len(),
            8 * dim
        )));
    }
    Ok(bytes
        .chunks_exact(8 * dim)
        .map(|rec| {
            rec.chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect()
        })
        .collect())
}

/// Writes the histogram as `row,col,count` CSV (row = y bin, col = x bin).
pub fn write_heatmap_csv(path: &Path, hist: &Histogram2d) -> Result<()> {
    let mut out = String::from("row,col,count\n");
    for row in 0..hist.bins {
        for col in 0..hist.bins {
            out.push_str(&format!("{row},{col},{}\n", hist.count(col, row)));
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// Writes the model as plain text: mean, then one axis line and one
/// variance line per component.
pub fn write_pca_txt(path: &Path, model: &PcaModel) -> Result<()> {
    let join = |v: &[f64]| {
        v.iter()
            .map(|x| x.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    };
    let mut f = fs::File::create(path)?;
    writeln!(f, "mean {}", join(&model.mean))?;
    for (i, axis) in model.axes.iter().enumerate() {
        writeln!(f, "axis{i} {}", join(axis))?;
    }
    for (i, var) in model.variances.iter().enumerate() {
        writeln!(f, "variance{i} {var}")?;
    }
    Ok(())
}
