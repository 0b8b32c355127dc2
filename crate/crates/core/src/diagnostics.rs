//! Lineage and removal statistics, plus kernel and pairwise-distance
//! distribution metrics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::Particle;
use crate::error::{FvdError, Result};
use crate::resampling::ResampleEvent;
use crate::util::squared_distance;

/// Aggregate removal statistics over a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeathStats {
    pub mean_death_rate: f64,
    pub final_distinct_lineages: usize,
    pub mean_killed_rank: f64,
    /// (threshold, fraction of killed with rank above it)
    pub frac_killed_rank_above: Vec<(f64, f64)>,
}

/// Number of distinct lineage identifiers in a population.
pub fn distinct_lineages(population: &[Particle]) -> usize {
    let mut ids: Vec<usize> = population.iter().map(|p| p.lineage_id).collect();
    ids.sort_unstable();
    ids.dedup();
    ids.len()
}

/// Normalized ascending reward ranks of the killed particles.
///
/// Ranks are positions in the ascending sort divided by (K - 1); tied
/// rewards share the mean of their tied positions. Returned in ascending
/// killed-index order.
pub fn killed_reward_ranks(rewards: &[f64], death_mask: &[bool]) -> Result<Vec<f64>> {
    let k = rewards.len();
    if k < 2 {
        return Err(FvdError::parameter("rewards", "need K >= 2 to rank"));
    }
    if death_mask.len() != k {
        return Err(FvdError::parameter("death_mask", "length must match rewards"));
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| rewards[a].partial_cmp(&rewards[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut rank = vec![0.0; k];
    let mut i = 0;
    while i < k {
        let mut j = i;
        while j + 1 < k && rewards[order[j + 1]] == rewards[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0;
        for &idx in &order[i..=j] {
            rank[idx] = mid / (k - 1) as f64;
        }
        i = j + 1;
    }
    Ok((0..k).filter(|i| death_mask[*i]).map(|i| rank[i]).collect())
}

/// Summarize the removal record of a run.
pub fn death_stats(
    events: &[ResampleEvent],
    final_distinct_lineages: usize,
    thresholds: &[f64],
) -> DeathStats {
    let mean_death_rate = if events.is_empty() {
        0.0
    } else {
        events.iter().map(|e| e.alpha_t).sum::<f64>() / events.len() as f64
    };
    let all_ranks: Vec<f64> = events.iter().flat_map(|e| e.killed_ranks.iter().copied()).collect();
    let mean_killed_rank = if all_ranks.is_empty() {
        f64::NAN
    } else {
        all_ranks.iter().sum::<f64>() / all_ranks.len() as f64
    };
    let frac_killed_rank_above = thresholds
        .iter()
        .map(|&th| {
            let frac = if all_ranks.is_empty() {
                f64::NAN
            } else {
                all_ranks.iter().filter(|r| **r > th).count() as f64 / all_ranks.len() as f64
            };
            (th, frac)
        })
        .collect();
    DeathStats {
        mean_death_rate,
        final_distinct_lineages,
        mean_killed_rank,
        frac_killed_rank_above,
    }
}

/// Bandwidth choice for the RBF kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    /// Median pairwise distance of the pooled sample.
    Median,
    Fixed(f64),
}

/// Unbiased squared maximum mean discrepancy with the RBF kernel
/// k(x, y) = exp(-||x - y||^2 / (2 h^2)).
///
/// The estimate can be slightly negative and is reported as-is. Each sample
/// set needs at least two points.
pub fn mmd_rbf(samples_a: &[Vec<f64>], samples_b: &[Vec<f64>], bandwidth: Bandwidth) -> Result<f64> {
    let (m, n) = (samples_a.len(), samples_b.len());
    if m < 2 || n < 2 {
        return Err(FvdError::parameter(
            "samples",
            "unbiased estimate needs >= 2 points per set",
        ));
    }
    let d = samples_a[0].len();
    if samples_a.iter().chain(samples_b).any(|s| s.len() != d) {
        return Err(FvdError::input("samples", "dimension mismatch"));
    }
    let h = match bandwidth {
        Bandwidth::Fixed(h) if h > 0.0 => h,
        Bandwidth::Fixed(_) => {
            return Err(FvdError::parameter("bandwidth", "must be positive"));
        }
        Bandwidth::Median => median_pairwise_distance(samples_a, samples_b)?,
    };
    let gamma = 1.0 / (2.0 * h * h);

    // row sums computed in parallel, rows combined serially so the result is
    // independent of the worker count
    let within = |s: &[Vec<f64>]| -> f64 {
        let rows: Vec<f64> = s
            .par_iter()
            .enumerate()
            .map(|(i, xi)| {
                s.iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, xj)| (-gamma * squared_distance(xi, xj)).exp())
                    .sum()
            })
            .collect();
        rows.iter().sum()
    };
    let cross: f64 = {
        let rows: Vec<f64> = samples_a
            .par_iter()
            .map(|xi| {
                samples_b
                    .iter()
                    .map(|xj| (-gamma * squared_distance(xi, xj)).exp())
                    .sum()
            })
            .collect();
        rows.iter().sum()
    };
    let mm = (m * (m - 1)) as f64;
    let nn = (n * (n - 1)) as f64;
    Ok(within(samples_a) / mm + within(samples_b) / nn - 2.0 * cross / (m as f64 * n as f64))
}

/// Median pairwise distance of the pooled sample. Large pools are thinned
/// to a deterministic stride of at most 1000 points per set before the
/// quadratic pass.
fn median_pairwise_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    const CAP: usize = 1000;
    let thin = |s: &[Vec<f64>]| -> Vec<Vec<f64>> {
        let stride = s.len().div_ceil(CAP);
        s.iter().step_by(stride.max(1)).cloned().collect()
    };
    let mut pooled = thin(a);
    pooled.extend(thin(b));
    let mut dists = Vec::with_capacity(pooled.len() * (pooled.len() - 1) / 2);
    for i in 0..pooled.len() {
        for j in (i + 1)..pooled.len() {
            let d = squared_distance(&pooled[i], &pooled[j]).sqrt();
            if d > 0.0 {
                dists.push(d);
            }
        }
    }
    if dists.is_empty() {
        return Err(FvdError::parameter(
            "bandwidth",
            "all pooled points coincide; median heuristic undefined",
        ));
    }
    dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(dists[dists.len() / 2])
}

/// Mean Euclidean distance over all unordered pairs.
pub fn pairwise_diversity(samples: &[Vec<f64>]) -> Result<f64> {
    let n = samples.len();
    if n < 2 {
        return Err(FvdError::parameter("samples", "need >= 2 samples"));
    }
    let rows: Vec<f64> = samples
        .par_iter()
        .enumerate()
        .map(|(i, xi)| {
            samples[i + 1..]
                .iter()
                .map(|xj| squared_distance(xi, xj).sqrt())
                .sum()
        })
        .collect();
    let total: f64 = rows.iter().sum();
    Ok(total / (n * (n - 1) / 2) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, StreamKind};
    use rand_distr::{Distribution, StandardNormal};

    fn particle(lineage_id: usize) -> Particle {
        Particle {
            x: vec![0.0],
            lineage_id,
            cum_log_potential: 0.0,
        }
    }

    #[test]
    fn lineage_counting() {
        let pop: Vec<Particle> = (0..5).map(particle).collect();
        assert_eq!(distinct_lineages(&pop), 5);
        let collapsed: Vec<Particle> = (0..5).map(|_| particle(2)).collect();
        assert_eq!(distinct_lineages(&collapsed), 1);
    }

    #[test]
    fn distinct_after_uniform_multinomial_barrier() {
        use crate::resampling::multinomial_resample;
        let k = 1000;
        let lw = vec![0.0; k];
        let mut rng = stream(41, StreamKind::Ancestor, 0, 0);
        let trials = 200;
        let mut acc = 0.0;
        for _ in 0..trials {
            let ancestors = multinomial_resample(&lw, &mut rng).unwrap();
            let pop: Vec<Particle> = ancestors.into_iter().map(particle).collect();
            acc += distinct_lineages(&pop) as f64;
        }
        let mean = acc / trials as f64;
        // K(1 - (1 - 1/K)^K) = 632.3 at K = 1000
        assert!((mean - 632.3).abs() < 13.0, "mean = {mean}");
    }

    #[test]
    fn rank_extremes() {
        let rewards = [0.5, -1.0, 2.0, 0.0];
        let bottom = killed_reward_ranks(&rewards, &[false, true, false, false]).unwrap();
        assert_eq!(bottom, vec![0.0]);
        let top = killed_reward_ranks(&rewards, &[false, false, true, false]).unwrap();
        assert_eq!(top, vec![1.0]);
    }

    #[test]
    fn tied_rewards_share_mid_rank() {
        let rewards = [1.0, 1.0, 0.0, 2.0];
        let ranks = killed_reward_ranks(&rewards, &[true, true, false, false]).unwrap();
        // positions 1 and 2 in the ascending sort -> mid 1.5, over K-1 = 3
        assert_eq!(ranks, vec![0.5, 0.5]);
        assert!(killed_reward_ranks(&[1.0], &[true]).is_err());
    }

    #[test]
    fn fv_removal_is_reward_aware() {
        use crate::potentials::{survival_probs, PotentialConfig};
        use crate::resampling::fv_death_draw;
        let k = 1000;
        let cfg = PotentialConfig::new(1.0, [1]).unwrap();
        let mut rank_acc = 0.0;
        let mut rank_n = 0usize;
        for trial in 0..50u64 {
            let mut rng = stream(trial, StreamKind::Death, 1, 0);
            let rewards: Vec<f64> = (0..k).map(|i| -(i as f64) / (k - 1) as f64).collect();
            let surv = survival_probs(&cfg, &rewards).unwrap();
            let mask = fv_death_draw(&surv, &mut rng).unwrap();
            for r in killed_reward_ranks(&rewards, &mask).unwrap() {
                // the unique maximum survives with probability one
                assert!(r < 1.0, "top-ranked particle was killed");
                rank_acc += r;
                rank_n += 1;
            }
        }
        let mean = rank_acc / rank_n as f64;
        assert!(mean < 0.5, "mean killed rank = {mean}");
    }

    #[test]
    fn death_stats_aggregation() {
        let events = vec![
            ResampleEvent {
                step: 10,
                death_mask: vec![true, false],
                revived: Default::default(),
                donors: Default::default(),
                alpha_t: 0.5,
                killed_ranks: vec![0.0],
                lambda_used: 1.0,
            },
            ResampleEvent {
                step: 5,
                death_mask: vec![true, true],
                revived: Default::default(),
                donors: Default::default(),
                alpha_t: 1.0,
                killed_ranks: vec![0.8, 1.0],
                lambda_used: 1.0,
            },
        ];
        let stats = death_stats(&events, 7, &[0.7]);
        assert!((stats.mean_death_rate - 0.75).abs() < 1e-15);
        assert_eq!(stats.final_distinct_lineages, 7);
        assert!((stats.mean_killed_rank - 0.6).abs() < 1e-15);
        assert!((stats.frac_killed_rank_above[0].1 - 2.0 / 3.0).abs() < 1e-15);
    }

    fn gaussian_cloud(n: usize, shift: f64, salt: u64) -> Vec<Vec<f64>> {
        let mut rng = stream(salt, StreamKind::TargetSample, 0, 0);
        (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                vec![z + shift]
            })
            .collect()
    }

    #[test]
    fn mmd_of_identical_sets_is_nonpositive() {
        let a = gaussian_cloud(200, 0.0, 51);
        let v = mmd_rbf(&a, &a, Bandwidth::Median).unwrap();
        assert!(v <= 0.0, "mmd = {v}");
    }

    #[test]
    fn mmd_null_fluctuation_is_small() {
        let a = gaussian_cloud(2000, 0.0, 52);
        let b = gaussian_cloud(2000, 0.0, 53);
        let v = mmd_rbf(&a, &b, Bandwidth::Median).unwrap();
        // null standard error is O(1/n); allow three of them
        assert!(v.abs() < 3.0 * 1.5e-3, "mmd = {v}");
    }

    #[test]
    fn mmd_separates_distant_gaussians() {
        let a = gaussian_cloud(1000, 0.0, 54);
        let b = gaussian_cloud(1000, 5.0, 55);
        let v = mmd_rbf(&a, &b, Bandwidth::Median).unwrap();
        assert!(v > 0.5, "mmd = {v}");
        // frozen reference value for these seeded clouds
        assert!((v - 1.291201046496774).abs() < 1e-9, "mmd = {v}");
    }

    #[test]
    fn mmd_is_symmetric() {
        let a = gaussian_cloud(150, 0.0, 56);
        let b = gaussian_cloud(170, 1.0, 57);
        let ab = mmd_rbf(&a, &b, Bandwidth::Median).unwrap();
        let ba = mmd_rbf(&b, &a, Bandwidth::Median).unwrap();
        assert!((ab - ba).abs() < 1e-12);
    }

    #[test]
    fn mmd_rejects_bad_bandwidth_and_small_sets() {
        let a = gaussian_cloud(10, 0.0, 58);
        assert!(mmd_rbf(&a, &a, Bandwidth::Fixed(0.0)).is_err());
        assert!(mmd_rbf(&a[..1], &a, Bandwidth::Median).is_err());
    }

    #[test]
    fn diversity_values() {
        assert_eq!(
            pairwise_diversity(&[vec![1.0], vec![1.0], vec![1.0]]).unwrap(),
            0.0
        );
        assert_eq!(pairwise_diversity(&[vec![0.0], vec![2.0]]).unwrap(), 2.0);
        let v = pairwise_diversity(&[vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        assert!((v - 4.0 / 3.0).abs() < 1e-15);
        assert!(pairwise_diversity(&[vec![0.0]]).is_err());
    }
}
