//! Scheduling policies.
//!
//! All policies implement one ordering contract: given the slot's new
//! arrivals and some context, return a service order as a permutation of
//! input indices. Carryover requests are never reordered; the engine serves
//! them first in their existing order.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::deepq::{encode_state, DqnModelBank};
use crate::nettopo::Topology;
use crate::traffic::Request;
use crate::rngutil;

#[derive(Debug, Error)]
pub enum SchedError {
    #[error("unknown scheduler spec {0:?} (expected fifo | greedy | pfair | dqn:delay | dqn:fair)")]
    UnknownSpec(String),
    #[error("no DQN model available for {0} requests")]
    MissingModel(usize),
    #[error("request endpoints out of range: ({0}, {1})")]
    EndpointOutOfRange(usize, usize),
}

/// Read-only inputs a policy may consult while ordering a slot's arrivals.
pub struct SchedulerContext<'a> {
    pub topology: &'a Topology,
    /// Mean single-attempt service duration per hop count, indexed by hops.
    pub hop_mean_duration_ns: &'a [f64],
    pub clock_ns: u64,
}

impl SchedulerContext<'_> {
    fn hops(&self, r: &Request) -> u32 {
        self.topology.hop_distance(r.src, r.dst).unwrap_or(0)
    }

    fn weight(&self, r: &Request) -> f64 {
        let h = self.hops(r) as usize;
        self.hop_mean_duration_ns
            .get(h)
            .copied()
            .unwrap_or(1.0)
            .max(f64::MIN_POSITIVE)
    }
}

pub trait Scheduler {
    fn name(&self) -> &str;

    /// Return a permutation of `0..requests.len()` giving the service order.
    fn order(&mut self, requests: &[Request], ctx: &SchedulerContext) -> Vec<usize>;
}

/// Serve requests in arrival order.
pub fn fifo_order(requests: &[Request]) -> Vec<usize> {
    (0..requests.len()).collect()
}

/// Ascending hop distance, ties broken by ascending request id.
pub fn greedy_order(requests: &[Request], ctx: &SchedulerContext) -> Vec<usize> {
    let mut order: Vec<usize> = (0..requests.len()).collect();
    order.sort_by_key(|&i| (ctx.hops(&requests[i]), requests[i].id));
    order
}

/// Weighted sampling without replacement: at each round request i is picked
/// with probability w_i / sum(w) over the remaining set, where w_i is the
/// mean service duration at its hop distance. Longer expected service time
/// means higher priority.
pub fn proportional_fair_order(
    requests: &[Request],
    ctx: &SchedulerContext,
    rng: &mut impl Rng,
) -> Vec<usize> {
    let mut remaining: Vec<usize> = (0..requests.len()).collect();
    let mut order = Vec::with_capacity(requests.len());
    while !remaining.is_empty() {
        let weights: Vec<f64> = remaining.iter().map(|&i| ctx.weight(&requests[i])).collect();
        let total: f64 = weights.iter().sum();
        let mut u = rng.random::<f64>() * total;
        let mut pick = remaining.len() - 1;
        for (pos, w) in weights.iter().enumerate() {
            if u < *w {
                pick = pos;
                break;
            }
            u -= w;
        }
        order.push(remaining.remove(pick));
    }
    order
}

/// Which baseline a DQN policy falls back to when fewer than 3 requests
/// arrive, and which reward bias its models were trained with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DqnBias {
    DelayBiased,
    FairnessBiased,
}

/// Greedy inference over a trained model bank: encode the arrivals, then
/// repeatedly take the highest-Q legal action, zeroing out selected rows.
pub fn dqn_order(
    requests: &[Request],
    ctx: &SchedulerContext,
    bank: &DqnModelBank,
    bias: DqnBias,
    rng: &mut impl Rng,
) -> Result<Vec<usize>, SchedError> {
    let k = requests.len();
    if k <= 2 {
        return Ok(match bias {
            DqnBias::DelayBiased => greedy_order(requests, ctx),
            DqnBias::FairnessBiased => proportional_fair_order(requests, ctx, rng),
        });
    }
    let model = bank.model(k).ok_or(SchedError::MissingModel(k))?;
    let v = ctx.topology.node_count();
    for r in requests {
        if r.src >= v || r.dst >= v {
            return Err(SchedError::EndpointOutOfRange(r.src, r.dst));
        }
    }
    let pairs: Vec<(usize, usize)> = requests.iter().map(|r| (r.src, r.dst)).collect();
    let mut resolved = vec![false; k];
    let mut order = Vec::with_capacity(k);
    for _ in 0..k {
        let state = encode_state(&pairs, &resolved, v).expect("validated endpoints");
        let q = model.forward(&state.flat());
        let pick = q
            .iter()
            .enumerate()
            .filter(|(i, _)| !resolved[*i])
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
            .expect("at least one unresolved request");
        resolved[pick] = true;
        order.push(pick);
    }
    Ok(order)
}

/// Named policy instances behind the engine's `Scheduler` trait.
pub enum Policy {
    Fifo,
    Greedy,
    ProportionalFair { rng: ChaCha12Rng },
    Dqn {
        bank: DqnModelBank,
        bias: DqnBias,
        rng: ChaCha12Rng,
    },
}

impl Policy {
    /// Build a policy from its config name: "fifo" | "greedy" | "pfair" |
    /// "dqn:delay" | "dqn:fair". The seed feeds the randomized policies.
    pub fn from_spec(
        spec: &str,
        seed: u64,
        bank: Option<DqnModelBank>,
    ) -> Result<Policy, SchedError> {
        match spec {
            "fifo" => Ok(Policy::Fifo),
            "greedy" => Ok(Policy::Greedy),
            "pfair" => Ok(Policy::ProportionalFair {
                rng: rngutil::stream(seed, "sched.pfair", &[]),
            }),
            "dqn:delay" | "dqn:fair" => {
                let bias = if spec == "dqn:delay" {
                    DqnBias::DelayBiased
                } else {
                    DqnBias::FairnessBiased
                };
                Ok(Policy::Dqn {
                    bank: bank.ok_or(SchedError::MissingModel(3))?,
                    bias,
                    rng: rngutil::stream(seed, "sched.dqn", &[]),
                })
            }
            other => Err(SchedError::UnknownSpec(other.to_string())),
        }
    }
}

impl Scheduler for Policy {
    fn name(&self) -> &str {
        match self {
            Policy::Fifo => "fifo",
            Policy::Greedy => "greedy",
            Policy::ProportionalFair { .. } => "pfair",
            Policy::Dqn {
                bias: DqnBias::DelayBiased,
                ..
            } => "dqn:delay",
            Policy::Dqn {
                bias: DqnBias::FairnessBiased,
                ..
            } => "dqn:fair",
        }
    }

    fn order(&mut self, requests: &[Request], ctx: &SchedulerContext) -> Vec<usize> {
        match self {
            Policy::Fifo => fifo_order(requests),
            Policy::Greedy => greedy_order(requests, ctx),
            Policy::ProportionalFair { rng } => proportional_fair_order(requests, ctx, rng),
            Policy::Dqn { bank, bias, rng } => dqn_order(requests, ctx, bank, *bias, rng)
                .unwrap_or_else(|_| fifo_order(requests)),
        }
    }
}

/// Placeholder bank check used when constructing DQN policies from config.
pub fn required_ks() -> [usize; 3] {
    [3, 4, 5]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deepq::QNetworkModel;
    use crate::nettopo::{self, WsParams};

    fn topo() -> Topology {
        nettopo::generate(&WsParams {
            node_count: 10,
            ring_degree: 2,
            rewire_prob: 0.0,
            seed: 0,
        })
        .unwrap()
    }

    fn ctx<'a>(topology: &'a Topology, means: &'a [f64]) -> SchedulerContext<'a> {
        SchedulerContext {
            topology,
            hop_mean_duration_ns: means,
            clock_ns: 0,
        }
    }

    fn req(id: u64, src: usize, dst: usize) -> Request {
        Request::new(id, src, dst, 0)
    }

    #[test]
    fn fifo_is_identity() {
        assert_eq!(fifo_order(&[]), Vec::<usize>::new());
        let rs = [req(0, 0, 1), req(1, 0, 2), req(2, 0, 3)];
        assert_eq!(fifo_order(&rs), vec![0, 1, 2]);
    }

    #[test]
    fn greedy_sorts_by_hop_distance() {
        let t = topo();
        let means = vec![0.0; 8];
        // On the 10-cycle: distances 3, 1, 2.
        let rs = [req(0, 0, 3), req(1, 0, 1), req(2, 0, 2)];
        assert_eq!(greedy_order(&rs, &ctx(&t, &means)), vec![1, 2, 0]);
    }

    #[test]
    fn greedy_ties_break_by_id() {
        let t = topo();
        let means = vec![0.0; 8];
        let rs = [req(5, 0, 2), req(6, 1, 3), req(7, 4, 6)];
        assert_eq!(greedy_order(&rs, &ctx(&t, &means)), vec![0, 1, 2]);
    }

    #[test]
    fn greedy_invariant_under_monotone_duration_rescaling() {
        // Greedy orders by hop distance only, so any positive monotone map of
        // per-hop durations leaves its output unchanged.
        let t = topo();
        let means_a: Vec<f64> = (0..8).map(|h| 100.0 * h as f64 + 1.0).collect();
        let means_b: Vec<f64> = means_a.iter().map(|d| d * 7.5 + 3.0).collect();
        let rs = [req(0, 0, 5), req(1, 2, 3), req(2, 9, 5)];
        assert_eq!(
            greedy_order(&rs, &ctx(&t, &means_a)),
            greedy_order(&rs, &ctx(&t, &means_b))
        );
    }

    #[test]
    fn greedy_is_spt_optimal_for_single_attempt_monotone_durations() {
        // Exhaustive 4! oracle over 200 random instances: when each request's
        // service time is a fixed increasing function of its hop distance,
        // the greedy order minimizes total sequential delay.
        let t = topo();
        let means: Vec<f64> = (0..8).map(|h| 1_000.0 * h as f64).collect();
        let perms4: Vec<Vec<usize>> = permutations(4);
        for seed in 0..200u64 {
            let mut rng = rngutil::stream(seed, "test.spt", &[]);
            let rs: Vec<Request> = (0..4)
                .map(|i| {
                    let src = rng.random_range(0..10);
                    let mut dst = rng.random_range(0..9);
                    if dst >= src {
                        dst += 1;
                    }
                    req(i, src, dst)
                })
                .collect();
            let c = ctx(&t, &means);
            let dur =
                |i: usize| means[t.hop_distance(rs[i].src, rs[i].dst).unwrap() as usize] + 1.0;
            let total = |order: &[usize]| {
                let mut clock = 0.0;
                let mut sum = 0.0;
                for &i in order {
                    clock += dur(i);
                    sum += clock;
                }
                sum
            };
            let greedy_total = total(&greedy_order(&rs, &c));
            let best = perms4
                .iter()
                .map(|p| total(p))
                .fold(f64::INFINITY, f64::min);
            assert!(
                greedy_total <= best + 1e-9,
                "seed {seed}: greedy {greedy_total} vs best {best}"
            );
        }
    }

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, n - 1);
                out.push(q);
            }
        }
        out
    }

    #[test]
    fn pfair_single_request() {
        let t = topo();
        let means = vec![10.0; 8];
        let mut rng = rngutil::stream(1, "test", &[]);
        let rs = [req(0, 0, 1)];
        assert_eq!(
            proportional_fair_order(&rs, &ctx(&t, &means), &mut rng),
            vec![0]
        );
    }

    #[test]
    fn pfair_first_pick_marginals() {
        // Weights (10, 30): the heavier request goes first with P = 0.75.
        let t = topo();
        let means = vec![0.0, 10.0, 30.0, 0.0, 0.0, 0.0];
        let rs = [req(0, 0, 1), req(1, 0, 2)];
        let c = ctx(&t, &means);
        let mut rng = rngutil::stream(2, "test", &[]);
        let n = 100_000;
        let mut second_first = 0u64;
        for _ in 0..n {
            if proportional_fair_order(&rs, &c, &mut rng)[0] == 1 {
                second_first += 1;
            }
        }
        let p = second_first as f64 / n as f64;
        let sigma = (0.75 * 0.25 / n as f64).sqrt();
        assert!((p - 0.75).abs() < 3.0 * sigma, "p {p}");
    }

    #[test]
    fn pfair_equal_weights_is_uniform_over_orders() {
        let t = topo();
        let means = vec![50.0; 8];
        let rs = [req(0, 0, 1), req(1, 1, 2), req(2, 2, 3)];
        let c = ctx(&t, &means);
        let mut rng = rngutil::stream(3, "test", &[]);
        let n = 60_000;
        let mut counts = std::collections::BTreeMap::new();
        for _ in 0..n {
            *counts
                .entry(proportional_fair_order(&rs, &c, &mut rng))
                .or_insert(0u64) += 1;
        }
        assert_eq!(counts.len(), 6);
        let expected = n as f64 / 6.0;
        let chi2: f64 = counts
            .values()
            .map(|&o| (o as f64 - expected).powi(2) / expected)
            .sum();
        // df=5, far cutoff.
        assert!(chi2 < 25.0, "chi2 {chi2}");
    }

    #[test]
    fn policies_always_return_permutations() {
        let t = topo();
        let means: Vec<f64> = (0..8).map(|h| h as f64 + 1.0).collect();
        let c = ctx(&t, &means);
        let mut rng = rngutil::stream(4, "test", &[]);
        for k in 0..=8usize {
            let rs: Vec<Request> = (0..k as u64).map(|i| req(i, (i as usize) % 9, 9)).collect();
            for order in [
                fifo_order(&rs),
                greedy_order(&rs, &c),
                proportional_fair_order(&rs, &c, &mut rng),
            ] {
                let mut sorted = order.clone();
                sorted.sort_unstable();
                assert_eq!(sorted, (0..k).collect::<Vec<_>>());
            }
        }
    }

    fn bank_of_zeros(v: usize) -> DqnModelBank {
        let mut bank = DqnModelBank::new(v);
        for k in required_ks() {
            bank.insert(k, QNetworkModel::zeros(&[2 * k * v, 4, k]).unwrap())
                .unwrap();
        }
        bank
    }

    #[test]
    fn dqn_small_slots_fall_back_to_baseline() {
        let t = topo();
        let means: Vec<f64> = (0..8).map(|h| 100.0 * h as f64).collect();
        let c = ctx(&t, &means);
        let bank = bank_of_zeros(10);
        let rs = [req(0, 0, 3)];
        let mut rng = rngutil::stream(5, "test", &[]);
        let got = dqn_order(&rs, &c, &bank, DqnBias::DelayBiased, &mut rng).unwrap();
        assert_eq!(got, greedy_order(&rs, &c));
        // Fairness bias falls back to proportional fair with the same stream.
        let rs2 = [req(0, 0, 3), req(1, 0, 1)];
        let mut a = rngutil::stream(6, "test", &[]);
        let mut b = rngutil::stream(6, "test", &[]);
        let got = dqn_order(&rs2, &c, &bank, DqnBias::FairnessBiased, &mut a).unwrap();
        assert_eq!(got, proportional_fair_order(&rs2, &c, &mut b));
    }

    #[test]
    fn dqn_inference_yields_permutations() {
        let t = topo();
        let means = vec![1.0; 8];
        let c = ctx(&t, &means);
        let mut bank = DqnModelBank::new(10);
        for k in required_ks() {
            bank.insert(k, QNetworkModel::new(&[2 * k * 10, 16, k], k as u64).unwrap())
                .unwrap();
        }
        let mut rng = rngutil::stream(7, "test", &[]);
        for k in required_ks() {
            let rs: Vec<Request> = (0..k as u64).map(|i| req(i, i as usize, 9)).collect();
            let order = dqn_order(&rs, &c, &bank, DqnBias::DelayBiased, &mut rng).unwrap();
            let mut sorted = order.clone();
            sorted.sort_unstable();
            assert_eq!(sorted, (0..k).collect::<Vec<_>>());
        }
    }

    #[test]
    fn dqn_crafted_biases_fix_the_order() {
        // Zero weights and output biases (1, 0, 5): picks 2, then 0, then 1.
        let t = topo();
        let means = vec![1.0; 8];
        let c = ctx(&t, &means);
        let mut net = QNetworkModel::zeros(&[60, 3]).unwrap();
        let mut params = net.params();
        let n = params.len();
        params[n - 3] = 1.0;
        params[n - 2] = 0.0;
        params[n - 1] = 5.0;
        net.set_params(&params);
        let mut bank = DqnModelBank::new(10);
        bank.insert(3, net).unwrap();
        let rs = [req(0, 0, 1), req(1, 2, 3), req(2, 4, 5)];
        let mut rng = rngutil::stream(8, "test", &[]);
        let order = dqn_order(&rs, &c, &bank, DqnBias::DelayBiased, &mut rng).unwrap();
        assert_eq!(order, vec![2, 0, 1]);
    }

    #[test]
    fn dqn_missing_model_is_an_error() {
        let t = topo();
        let means = vec![1.0; 8];
        let c = ctx(&t, &means);
        let bank = DqnModelBank::new(10);
        let rs: Vec<Request> = (0..3).map(|i| req(i, i as usize, 9)).collect();
        let mut rng = rngutil::stream(9, "test", &[]);
        assert!(dqn_order(&rs, &c, &bank, DqnBias::DelayBiased, &mut rng).is_err());
    }

    #[test]
    fn unknown_spec_rejected() {
        assert!(Policy::from_spec("lifo", 0, None).is_err());
        assert!(Policy::from_spec("fifo", 0, None).is_ok());
    }
}
