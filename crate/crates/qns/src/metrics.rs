//! Delay statistics, empirical delay CDFs, Jain's fairness index and the
//! normalized fairness gain used to compare schedulers.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::SimulationResult;
use crate::traffic::RequestStatus;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("delay list is empty")]
    Empty,
    #[error("delays must be strictly positive, got {0}")]
    NonPositive(f64),
    #[error("normalized gain needs at least two distinct index values")]
    DegenerateRange,
}

/// Jain's fairness index: (Σd)² / (n·Σd²). 1 means perfectly equal delays.
pub fn jain_index(delays: &[f64]) -> Result<f64, MetricsError> {
    if delays.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for &d in delays {
        if d <= 0.0 {
            return Err(MetricsError::NonPositive(d));
        }
        sum += d;
        sum_sq += d * d;
    }
    Ok(sum * sum / (delays.len() as f64 * sum_sq))
}

/// Empirical CDF as (delay, cumulative fraction) steps at distinct delays.
pub fn delay_cdf(delays: &[u64]) -> Result<Vec<(u64, f64)>, MetricsError> {
    if delays.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut sorted = delays.to_vec();
    sorted.sort_unstable();
    let n = sorted.len() as f64;
    let mut out: Vec<(u64, f64)> = Vec::new();
    for (i, d) in sorted.iter().enumerate() {
        let frac = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == *d => last.1 = frac,
            _ => out.push((*d, frac)),
        }
    }
    Ok(out)
}

/// (j_a − j_b) / (max − min) over the compared index values.
pub fn normalized_gain(j_a: f64, j_b: f64, j_all: &[f64]) -> Result<f64, MetricsError> {
    let max = j_all.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = j_all.iter().copied().fold(f64::INFINITY, f64::min);
    let range = max - min;
    if !(range > 0.0) {
        return Err(MetricsError::DegenerateRange);
    }
    Ok((j_a - j_b) / range)
}

/// Summary statistics of one simulation run. Dropped and unresolved requests
/// are excluded from delay and fairness figures and reported as counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub completed_count: usize,
    pub drop_count: usize,
    pub unresolved_count: usize,
    pub total_arrivals: u64,
    pub mean_delay_ns: f64,
    pub jain: f64,
    pub cdf: Vec<(u64, f64)>,
}

impl RunMetrics {
    pub fn from_result(result: &SimulationResult) -> Result<Self, MetricsError> {
        let delays: Vec<u64> = result
            .completed
            .iter()
            .map(|r| match r.status {
                RequestStatus::Completed { t_f } => t_f - r.t_gen,
                _ => unreachable!("completed list holds completed requests"),
            })
            .collect();
        if delays.is_empty() {
            return Err(MetricsError::Empty);
        }
        let delays_f: Vec<f64> = delays.iter().map(|&d| d.max(1) as f64).collect();
        Ok(RunMetrics {
            completed_count: delays.len(),
            drop_count: result.dropped.len(),
            unresolved_count: result.unresolved.len(),
            total_arrivals: result.total_arrivals,
            mean_delay_ns: delays_f.iter().sum::<f64>() / delays_f.len() as f64,
            jain: jain_index(&delays_f)?,
            cdf: delay_cdf(&delays)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn equal_delays_give_one() {
        assert!((jain_index(&[3.0, 3.0, 3.0, 3.0]).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn two_value_example() {
        assert!((jain_index(&[1.0, 3.0]).unwrap() - 0.8).abs() < 1e-15);
    }

    #[test]
    fn empty_or_nonpositive_rejected() {
        assert!(jain_index(&[]).is_err());
        assert!(jain_index(&[1.0, 0.0]).is_err());
        assert!(jain_index(&[1.0, -2.0]).is_err());
    }

    #[test]
    fn jain_matches_direct_summation_oracle() {
        for seed in 0..1000u64 {
            let mut rng = crate::rngutil::stream(seed, "test.jain", &[]);
            use rand::Rng;
            let n = rng.random_range(1..200usize);
            let v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 1e6 + 1e-3).collect();
            let direct = {
                let s: f64 = v.iter().sum();
                let ss: f64 = v.iter().map(|x| x * x).sum();
                s * s / (n as f64 * ss)
            };
            assert!((jain_index(&v).unwrap() - direct).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn jain_scale_invariant(
            v in proptest::collection::vec(1.0f64..1e6, 1..50),
            c in 1e-3f64..1e3,
        ) {
            let scaled: Vec<f64> = v.iter().map(|x| x * c).collect();
            let a = jain_index(&v).unwrap();
            let b = jain_index(&scaled).unwrap();
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn jain_bounds(v in proptest::collection::vec(1.0f64..1e6, 1..50)) {
            let j = jain_index(&v).unwrap();
            let n = v.len() as f64;
            prop_assert!(j >= 1.0 / n - 1e-12 && j <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn jain_is_one_iff_all_equal() {
        assert!((jain_index(&[5.0; 7]).unwrap() - 1.0).abs() < 1e-15);
        assert!(jain_index(&[5.0, 5.0, 5.1]).unwrap() < 1.0);
    }

    #[test]
    fn cdf_single_value() {
        assert_eq!(delay_cdf(&[5]).unwrap(), vec![(5, 1.0)]);
    }

    #[test]
    fn cdf_counts_duplicates() {
        let cdf = delay_cdf(&[1, 2, 2, 4]).unwrap();
        assert_eq!(cdf, vec![(1, 0.25), (2, 0.75), (4, 1.0)]);
    }

    #[test]
    fn cdf_ends_at_one_and_is_monotone() {
        let cdf = delay_cdf(&[9, 3, 3, 7, 1, 9, 2]).unwrap();
        assert!((cdf.last().unwrap().1 - 1.0).abs() < 1e-15);
        for w in cdf.windows(2) {
            assert!(w[0].0 < w[1].0 && w[0].1 < w[1].1);
        }
    }

    #[test]
    fn cdf_empty_rejected() {
        assert!(delay_cdf(&[]).is_err());
    }

    #[test]
    fn normalized_gain_reported_row() {
        // Medium-load row: Greedy 0.4704, DQN 0.4893, FIFO 0.5457, PF 0.5776.
        let all = [0.4704, 0.4893, 0.5457, 0.5776];
        let gain = normalized_gain(0.4893, 0.4704, &all).unwrap();
        assert!((gain - 0.0189 / 0.1072).abs() < 1e-9);
        assert!(gain > 0.14);
    }

    #[test]
    fn normalized_gain_zero_and_antisymmetric() {
        let all = [0.4, 0.5, 0.6];
        assert_eq!(normalized_gain(0.5, 0.5, &all).unwrap(), 0.0);
        let g1 = normalized_gain(0.6, 0.4, &all).unwrap();
        let g2 = normalized_gain(0.4, 0.6, &all).unwrap();
        assert!((g1 + g2).abs() < 1e-15);
    }

    #[test]
    fn normalized_gain_degenerate_range_rejected() {
        assert!(normalized_gain(0.5, 0.5, &[0.4, 0.4]).is_err());
    }
}
