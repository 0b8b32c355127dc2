//! Brute-force ground truths: the exact reward-tilted target on a grid,
//! exhaustive enumeration of multinomial resampling outcomes, and the exact
//! survivor-count law for independent Bernoulli survival.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FvdError, Result};
use crate::priors::GaussianMixture;
use crate::rewards::RewardSpec;

/// Evaluation lattice: 1D points or a 2D Cartesian product, strictly
/// increasing along each axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Grid {
    OneD { points: Vec<f64> },
    TwoD { xs: Vec<f64>, ys: Vec<f64> },
}

impl Grid {
    /// Uniform 1D grid of n points over [lo, hi].
    pub fn regular_1d(lo: f64, hi: f64, n: usize) -> Result<Grid> {
        if n < 2 || !(hi > lo) {
            return Err(FvdError::parameter("grid", "need n >= 2 and hi > lo"));
        }
        let step = (hi - lo) / (n - 1) as f64;
        Ok(Grid::OneD {
            points: (0..n).map(|i| lo + step * i as f64).collect(),
        })
    }

    /// Uniform 2D lattice of n x n points over the given box.
    pub fn regular_2d(lo: [f64; 2], hi: [f64; 2], n: usize) -> Result<Grid> {
        let ax = |l: f64, h: f64| -> Result<Vec<f64>> {
            if n < 2 || !(h > l) {
                return Err(FvdError::parameter("grid", "need n >= 2 and hi > lo"));
            }
            let step = (h - l) / (n - 1) as f64;
            Ok((0..n).map(|i| l + step * i as f64).collect())
        };
        Ok(Grid::TwoD {
            xs: ax(lo[0], hi[0])?,
            ys: ax(lo[1], hi[1])?,
        })
    }

    /// Default lattice for a prior: 6 pooled standard deviations on each
    /// side of the prior mean, 2048 points in 1D or 256x256 in 2D.
    pub fn default_for_prior(prior: &GaussianMixture) -> Result<Grid> {
        Self::for_prior(prior, 2048, 256)
    }

    /// Lattice over the prior's 6-sigma box with a chosen resolution per
    /// dimensionality.
    pub fn for_prior(prior: &GaussianMixture, n_1d: usize, n_2d: usize) -> Result<Grid> {
        let d = prior.dim();
        if d > 2 {
            return Err(FvdError::parameter("prior", "grids support 1D and 2D only"));
        }
        let mut mean = vec![0.0; d];
        for k in 0..prior.n_components() {
            for j in 0..d {
                mean[j] += prior.weights[k] * prior.means[k][j];
            }
        }
        let mut std = vec![0.0; d];
        for j in 0..d {
            let mut second = 0.0;
            for k in 0..prior.n_components() {
                let m = prior.means[k][j];
                second += prior.weights[k] * (prior.variances[k][j] + m * m);
            }
            std[j] = (second - mean[j] * mean[j]).max(1e-12).sqrt();
        }
        if d == 1 {
            Grid::regular_1d(mean[0] - 6.0 * std[0], mean[0] + 6.0 * std[0], n_1d)
        } else {
            Grid::regular_2d(
                [mean[0] - 6.0 * std[0], mean[1] - 6.0 * std[1]],
                [mean[0] + 6.0 * std[0], mean[1] + 6.0 * std[1]],
                n_2d,
            )
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Grid::OneD { .. } => 1,
            Grid::TwoD { .. } => 2,
        }
    }

    pub fn n_cells(&self) -> usize {
        match self {
            Grid::OneD { points } => points.len(),
            Grid::TwoD { xs, ys } => xs.len() * ys.len(),
        }
    }

    fn validate(&self) -> Result<()> {
        let check = |points: &[f64]| -> Result<()> {
            if points.len() < 2 {
                return Err(FvdError::parameter("grid", "need >= 2 points per axis"));
            }
            if !points.windows(2).all(|w| w[0] < w[1]) {
                return Err(FvdError::parameter("grid", "points must be strictly increasing"));
            }
            Ok(())
        };
        match self {
            Grid::OneD { points } => check(points),
            Grid::TwoD { xs, ys } => {
                check(xs)?;
                check(ys)
            }
        }
    }

    /// Coordinates of cell i (cells are Voronoi regions of grid points).
    fn point(&self, i: usize) -> Vec<f64> {
        match self {
            Grid::OneD { points } => vec![points[i]],
            Grid::TwoD { xs, ys } => vec![xs[i / ys.len()], ys[i % ys.len()]],
        }
    }

    /// Integration weight of cell i (cell lengths/areas from midpoints).
    fn cell_weight(&self, i: usize) -> f64 {
        match self {
            Grid::OneD { points } => axis_cell_width(points, i),
            Grid::TwoD { xs, ys } => {
                axis_cell_width(xs, i / ys.len()) * axis_cell_width(ys, i % ys.len())
            }
        }
    }

    /// Cell index of a sample, or None when it lies outside the covered box.
    fn cell_of(&self, x: &[f64]) -> Option<usize> {
        match self {
            Grid::OneD { points } => axis_cell_of(points, x[0]),
            Grid::TwoD { xs, ys } => {
                let ix = axis_cell_of(xs, x[0])?;
                let iy = axis_cell_of(ys, x[1])?;
                Some(ix * ys.len() + iy)
            }
        }
    }

    /// Bounds of cell i along every axis.
    fn cell_bounds(&self, i: usize) -> Vec<(f64, f64)> {
        match self {
            Grid::OneD { points } => vec![axis_cell_bounds(points, i)],
            Grid::TwoD { xs, ys } => vec![
                axis_cell_bounds(xs, i / ys.len()),
                axis_cell_bounds(ys, i % ys.len()),
            ],
        }
    }

    /// Axis-aligned bounding box covered by the cells.
    fn bounding_box(&self) -> Vec<(f64, f64)> {
        match self {
            Grid::OneD { points } => vec![(
                axis_cell_bounds(points, 0).0,
                axis_cell_bounds(points, points.len() - 1).1,
            )],
            Grid::TwoD { xs, ys } => vec![
                (axis_cell_bounds(xs, 0).0, axis_cell_bounds(xs, xs.len() - 1).1),
                (axis_cell_bounds(ys, 0).0, axis_cell_bounds(ys, ys.len() - 1).1),
            ],
        }
    }
}

fn axis_cell_width(points: &[f64], i: usize) -> f64 {
    let (lo, hi) = axis_cell_bounds(points, i);
    hi - lo
}

fn axis_cell_bounds(points: &[f64], i: usize) -> (f64, f64) {
    let n = points.len();
    let lo = if i == 0 {
        points[0] - (points[1] - points[0]) / 2.0
    } else {
        (points[i - 1] + points[i]) / 2.0
    };
    let hi = if i == n - 1 {
        points[n - 1] + (points[n - 1] - points[n - 2]) / 2.0
    } else {
        (points[i] + points[i + 1]) / 2.0
    };
    (lo, hi)
}

fn axis_cell_of(points: &[f64], x: f64) -> Option<usize> {
    let n = points.len();
    let (lo, _) = axis_cell_bounds(points, 0);
    let (_, hi) = axis_cell_bounds(points, n - 1);
    if !(x >= lo && x < hi) {
        return None;
    }
    // nearest grid point = Voronoi cell
    let idx = points.partition_point(|p| *p <= x);
    if idx == 0 {
        return Some(0);
    }
    if idx == n {
        return Some(n - 1);
    }
    if (x - points[idx - 1]).abs() <= (points[idx] - x).abs() {
        Some(idx - 1)
    } else {
        Some(idx)
    }
}

/// A probability vector over the cells of a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDistribution {
    pub grid: Grid,
    pub probs: Vec<f64>,
}

impl GridDistribution {
    /// Mean along each axis.
    pub fn mean(&self) -> Vec<f64> {
        let d = self.grid.dim();
        let mut m = vec![0.0; d];
        for (i, p) in self.probs.iter().enumerate() {
            let x = self.grid.point(i);
            for j in 0..d {
                m[j] += p * x[j];
            }
        }
        m
    }

    /// Variance along each axis.
    pub fn variance(&self) -> Vec<f64> {
        let d = self.grid.dim();
        let m = self.mean();
        let mut v = vec![0.0; d];
        for (i, p) in self.probs.iter().enumerate() {
            let x = self.grid.point(i);
            for j in 0..d {
                v[j] += p * (x[j] - m[j]) * (x[j] - m[j]);
            }
        }
        v
    }

    /// Inverse-CDF draw of n samples, uniform within the selected cell.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<Vec<f64>> {
        let mut cdf = Vec::with_capacity(self.probs.len());
        let mut acc = 0.0;
        for p in &self.probs {
            acc += p;
            cdf.push(acc);
        }
        let total = acc;
        (0..n)
            .map(|_| {
                let u: f64 = rng.random::<f64>() * total;
                let cell = cdf.partition_point(|c| *c <= u).min(self.probs.len() - 1);
                self.grid
                    .cell_bounds(cell)
                    .into_iter()
                    .map(|(lo, hi)| lo + rng.random::<f64>() * (hi - lo))
                    .collect()
            })
            .collect()
    }
}

/// Exact reward-tilted target on a grid: density(x) * exp(lambda * r(x)),
/// cell-weight normalized. Errors when the grid covers less than 0.9999 of
/// the prior mass.
pub fn tilted_target(
    prior: &GaussianMixture,
    reward: &RewardSpec,
    lambda: f64,
    grid: &Grid,
) -> Result<GridDistribution> {
    grid.validate()?;
    if prior.dim() != grid.dim() {
        return Err(FvdError::parameter("grid", "dimension mismatch with prior"));
    }
    let covered = prior_mass_in_box(prior, &grid.bounding_box());
    if covered < 0.9999 {
        return Err(FvdError::GridCoverage {
            covered,
            required: 0.9999,
        });
    }
    let n = grid.n_cells();
    let mut log_masses = Vec::with_capacity(n);
    for i in 0..n {
        let x = grid.point(i);
        let log_density = prior.log_density(&x)?;
        let r = reward.eval(&x)?;
        log_masses.push(log_density + lambda * r + grid.cell_weight(i).ln());
    }
    let lse = crate::util::log_sum_exp(&log_masses);
    if !lse.is_finite() {
        return Err(FvdError::Invariant {
            context: "tilted_target",
            reason: "all grid masses vanished".to_string(),
        });
    }
    let probs: Vec<f64> = log_masses.iter().map(|lm| (lm - lse).exp()).collect();
    Ok(GridDistribution {
        grid: grid.clone(),
        probs,
    })
}

fn prior_mass_in_box(prior: &GaussianMixture, bbox: &[(f64, f64)]) -> f64 {
    let mut mass = 0.0;
    for k in 0..prior.n_components() {
        let mut comp = prior.weights[k];
        for (d, (lo, hi)) in bbox.iter().enumerate() {
            let mu = prior.means[k][d];
            let sd = prior.variances[k][d].sqrt();
            comp *= normal_cdf((hi - mu) / sd) - normal_cdf((lo - mu) / sd);
        }
        mass += comp;
    }
    mass
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + libm::erf(z / std::f64::consts::SQRT_2))
}

/// Half the L1 distance between the binned empirical law of `samples` and a
/// grid target. Samples outside the grid land in an overflow cell with zero
/// target mass, so escaped mass counts fully.
pub fn tv_distance(samples: &[Vec<f64>], target: &GridDistribution) -> Result<f64> {
    if samples.is_empty() {
        return Err(FvdError::parameter("samples", "must be nonempty"));
    }
    let d = target.grid.dim();
    let mut counts = vec![0u64; target.probs.len()];
    let mut overflow = 0u64;
    for s in samples {
        if s.len() != d {
            return Err(FvdError::input("samples", "dimension mismatch with grid"));
        }
        match target.grid.cell_of(s) {
            Some(c) => counts[c] += 1,
            None => overflow += 1,
        }
    }
    let n = samples.len() as f64;
    let mut l1 = overflow as f64 / n;
    for (c, p) in counts.iter().zip(&target.probs) {
        l1 += (*c as f64 / n - p).abs();
    }
    // rounding in the probability sums can push half the L1 a hair past 1
    Ok((0.5 * l1).min(1.0))
}

/// Exact law of the number of distinct ancestors when K ancestors are drawn
/// i.i.d. uniformly with replacement, by enumerating all K^K outcomes.
/// Capped at K = 6 (6^6 = 46656 outcomes).
pub fn multinomial_distinct_distribution(k: usize) -> Result<BTreeMap<usize, f64>> {
    if !(2..=6).contains(&k) {
        return Err(FvdError::parameter("k", "enumeration supports 2 <= K <= 6"));
    }
    let total = (k as u64).pow(k as u32);
    let mut counts: BTreeMap<usize, u64> = BTreeMap::new();
    let mut draws = vec![0usize; k];
    loop {
        let mut seen = 0u8;
        for &d in &draws {
            seen |= 1 << d;
        }
        *counts.entry(seen.count_ones() as usize).or_insert(0) += 1;
        // odometer over base-K digits
        let mut pos = 0;
        loop {
            if pos == k {
                let probs = counts
                    .into_iter()
                    .map(|(d, c)| (d, c as f64 / total as f64))
                    .collect();
                return Ok(probs);
            }
            draws[pos] += 1;
            if draws[pos] < k {
                break;
            }
            draws[pos] = 0;
            pos += 1;
        }
    }
}

/// Exact law of the survivor count for independent Bernoulli survivals, by
/// dynamic-programming convolution. Returns probabilities indexed 0..=K.
pub fn fv_survivor_count_distribution(surv: &[f64]) -> Result<Vec<f64>> {
    if surv.is_empty() {
        return Err(FvdError::parameter("surv", "must be nonempty"));
    }
    if surv.len() > 10_000 {
        return Err(FvdError::parameter("surv", "K capped at 10^4"));
    }
    if surv.iter().any(|s| !(*s > 0.0 && *s <= 1.0)) {
        return Err(FvdError::parameter("surv", "entries must lie in (0, 1]"));
    }
    let mut dist = vec![0.0; surv.len() + 1];
    dist[0] = 1.0;
    for (i, s) in surv.iter().enumerate() {
        for c in (0..=i + 1).rev() {
            let stay = if c <= i { dist[c] * (1.0 - s) } else { 0.0 };
            let up = if c > 0 { dist[c - 1] * s } else { 0.0 };
            dist[c] = stay + up;
        }
    }
    Ok(dist)
}

/// Mean of a distribution returned as count -> probability pairs.
pub fn distribution_mean<'a>(dist: impl IntoIterator<Item = (&'a usize, &'a f64)>) -> f64 {
    dist.into_iter().map(|(k, p)| *k as f64 * p).sum()
}
