//! Episode reward: delay term against a brute-force permutation oracle plus
//! a fairness term from Jain's index of the realized delays.

use super::DeepqError;
use crate::metrics;

/// Per-request delays under sequential service in the given order. Entry i
/// is the completion time of request i (not of the i-th served request).
pub fn sequential_delays(durations: &[f64], order: &[usize]) -> Result<Vec<f64>, DeepqError> {
    validate_order(durations.len(), order)?;
    let mut delays = vec![0.0; durations.len()];
    let mut clock = 0.0;
    for &i in order {
        clock += durations[i];
        delays[i] = clock;
    }
    Ok(delays)
}

/// Total delay (sum of completion times) for one order.
pub fn total_delay(durations: &[f64], order: &[usize]) -> Result<f64, DeepqError> {
    Ok(sequential_delays(durations, order)?.iter().sum())
}

/// Brute-force min/max total delay over all k! orderings (k <= 8).
pub fn min_max_total_delay(durations: &[f64]) -> Result<(f64, f64), DeepqError> {
    let k = durations.len();
    if k == 0 || k > 8 {
        return Err(DeepqError::BadEpisodeSize(k));
    }
    let mut min_d = f64::INFINITY;
    let mut max_d = f64::NEG_INFINITY;
    let mut order: Vec<usize> = (0..k).collect();
    permute(&mut order, 0, &mut |perm| {
        let mut clock = 0.0;
        let mut sum = 0.0;
        for &i in perm.iter() {
            clock += durations[i];
            sum += clock;
        }
        min_d = min_d.min(sum);
        max_d = max_d.max(sum);
    });
    Ok((min_d, max_d))
}

fn permute(items: &mut Vec<usize>, start: usize, visit: &mut impl FnMut(&[usize])) {
    if start == items.len() {
        visit(items);
        return;
    }
    for i in start..items.len() {
        items.swap(start, i);
        permute(items, start + 1, visit);
        items.swap(start, i);
    }
}

/// The two reward components: r1 = (min_d - cur_d) / max_d and
/// r2 = J(realized delays) - 1.
pub fn reward_components(
    durations: &[f64],
    realized_order: &[usize],
) -> Result<(f64, f64), DeepqError> {
    if durations.iter().any(|&d| d <= 0.0) {
        return Err(DeepqError::NonPositiveDuration);
    }
    let delays = sequential_delays(durations, realized_order)?;
    let cur_d: f64 = delays.iter().sum();
    let (min_d, max_d) = min_max_total_delay(durations)?;
    let r1 = (min_d - cur_d) / max_d;
    let r2 = metrics::jain_index(&delays).map_err(|_| DeepqError::NonPositiveDuration)? - 1.0;
    Ok((r1, r2))
}

/// r = c_d * r1 + c_j * r2.
pub fn episode_reward(
    durations: &[f64],
    realized_order: &[usize],
    c_d: f64,
    c_j: f64,
) -> Result<f64, DeepqError> {
    let (r1, r2) = reward_components(durations, realized_order)?;
    Ok(c_d * r1 + c_j * r2)
}

fn validate_order(len: usize, order: &[usize]) -> Result<(), DeepqError> {
    let mut seen = vec![false; len];
    let ok = order.len() == len
        && order.iter().all(|&i| {
            if i >= len || seen[i] {
                false
            } else {
                seen[i] = true;
                true
            }
        });
    if ok {
        Ok(())
    } else {
        Err(DeepqError::NotAPermutation(order.to_vec()))
    }
}
