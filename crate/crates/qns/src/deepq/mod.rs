//! Double-DQN trainer and inference for request ordering: one-hot state
//! encoding, masked action selection, a permutation-oracle reward, a
//! from-scratch MLP with experience replay and a periodically synced target
//! network.

mod mlp;
mod reward;
mod train;

pub use mlp::{Dense, Gradients, QNetworkModel};
pub use reward::{
    episode_reward, min_max_total_delay, reward_components, sequential_delays, total_delay,
};
pub use train::{
    sync_target, train, train_step, EngineEpisodeSampler, EpisodeSampler, EpochStats,
    ReplayBuffer, TrainConfig, Transition,
};

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MODEL_FILE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DeepqError {
    #[error("bad network architecture {0:?}")]
    BadArchitecture(Vec<usize>),
    #[error("endpoint index out of range for {0} nodes")]
    EndpointOutOfRange(usize),
    #[error("episode size {0} unsupported (need 1..=8)")]
    BadEpisodeSize(usize),
    #[error("order {0:?} is not a permutation")]
    NotAPermutation(Vec<usize>),
    #[error("service durations must be positive")]
    NonPositiveDuration,
    #[error("no legal action available")]
    NoLegalAction,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("invalid model file: {0}")]
    InvalidModelFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("model parse error: {0}")]
    Parse(#[from] serde_json::Error),
}

/// The binary k x 2V request matrix: row i holds one-hot(src_i) followed by
/// one-hot(dst_i); resolved rows are all-zero.
#[derive(Debug, Clone, PartialEq)]
pub struct StateMatrix {
    pub k: usize,
    pub node_count: usize,
    bits: Vec<f64>,
}

impl StateMatrix {
    pub fn flat(&self) -> &[f64] {
        &self.bits
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.bits[i * 2 * self.node_count..(i + 1) * 2 * self.node_count]
    }
}

/// Encode k (src, dst) pairs over V nodes, zeroing resolved rows.
pub fn encode_state(
    pairs: &[(usize, usize)],
    resolved: &[bool],
    node_count: usize,
) -> Result<StateMatrix, DeepqError> {
    assert_eq!(pairs.len(), resolved.len());
    let k = pairs.len();
    let mut bits = vec![0.0; k * 2 * node_count];
    for (i, &(src, dst)) in pairs.iter().enumerate() {
        if src >= node_count || dst >= node_count {
            return Err(DeepqError::EndpointOutOfRange(node_count));
        }
        if resolved[i] {
            continue;
        }
        let base = i * 2 * node_count;
        bits[base + src] = 1.0;
        bits[base + node_count + dst] = 1.0;
    }
    Ok(StateMatrix {
        k,
        node_count,
        bits,
    })
}

/// Epsilon-greedy masked action selection: explore uniformly over legal
/// actions, otherwise take the legal argmax (lowest index wins ties).
pub fn select_action(
    model: &QNetworkModel,
    state: &StateMatrix,
    legal_mask: &[bool],
    epsilon: f64,
    rng: &mut impl Rng,
) -> Result<usize, DeepqError> {
    let legal: Vec<usize> = legal_mask
        .iter()
        .enumerate()
        .filter(|(_, &m)| m)
        .map(|(i, _)| i)
        .collect();
    if legal.is_empty() {
        return Err(DeepqError::NoLegalAction);
    }
    if rng.random::<f64>() < epsilon {
        return Ok(legal[rng.random_range(0..legal.len())]);
    }
    let q = model.forward(state.flat());
    Ok(masked_argmax(&q, legal_mask).expect("legal set checked non-empty"))
}

/// Highest-Q legal index; ties broken by the lowest index.
pub fn masked_argmax(q: &[f64], legal_mask: &[bool]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, (&qi, &legal)) in q.iter().zip(legal_mask).enumerate() {
        if !legal {
            continue;
        }
        match best {
            Some((_, bq)) if qi <= bq => {}
            _ => best = Some((i, qi)),
        }
    }
    best.map(|(i, _)| i)
}

/// Trained policy networks per arrival count k, all over the same topology
/// size, plus their provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct DqnModelBank {
    node_count: usize,
    models: BTreeMap<usize, QNetworkModel>,
}

impl DqnModelBank {
    pub fn new(node_count: usize) -> Self {
        Self {
            node_count,
            models: BTreeMap::new(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn insert(&mut self, k: usize, model: QNetworkModel) -> Result<(), DeepqError> {
        if model.input_dim() != 2 * k * self.node_count || model.output_dim() != k {
            return Err(DeepqError::BadArchitecture(model.dims()));
        }
        self.models.insert(k, model);
        Ok(())
    }

    pub fn model(&self, k: usize) -> Option<&QNetworkModel> {
        self.models.get(&k)
    }

    pub fn ks(&self) -> Vec<usize> {
        self.models.keys().copied().collect()
    }
}

/// Versioned on-disk model: architecture, weights and training provenance.
#[derive(Serialize, Deserialize)]
pub struct ModelFile {
    pub version: u32,
    pub k: usize,
    pub node_count: usize,
    pub layer_dims: Vec<usize>,
    pub layers: Vec<Dense>,
    pub training_config: TrainConfig,
    pub final_epoch_stats: Option<EpochStats>,
}

pub fn save_model(
    model: &QNetworkModel,
    k: usize,
    node_count: usize,
    training_config: &TrainConfig,
    final_epoch_stats: Option<&EpochStats>,
    path: &Path,
) -> Result<(), DeepqError> {
    let file = ModelFile {
        version: MODEL_FILE_VERSION,
        k,
        node_count,
        layer_dims: model.dims(),
        layers: model.layers().to_vec(),
        training_config: training_config.clone(),
        final_epoch_stats: final_epoch_stats.cloned(),
    };
    fs::write(path, serde_json::to_string_pretty(&file)?)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<(QNetworkModel, usize, usize), DeepqError> {
    let file: ModelFile = serde_json::from_str(&fs::read_to_string(path)?)?;
    if file.version != MODEL_FILE_VERSION {
        return Err(DeepqError::InvalidModelFile(format!(
            "unsupported model version {}",
            file.version
        )));
    }
    let model = QNetworkModel::from_layers(file.layers)?;
    if model.dims() != file.layer_dims
        || model.input_dim() != 2 * file.k * file.node_count
        || model.output_dim() != file.k
    {
        return Err(DeepqError::InvalidModelFile(
            "layer dimensions disagree with header".into(),
        ));
    }
    Ok((model, file.k, file.node_count))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rngutil;

    #[test]
    fn encoding_matches_hand_example() {
        // V=4, k=2, requests [(0,2),(1,3)].
        let s = encode_state(&[(0, 2), (1, 3)], &[false, false], 4).unwrap();
        assert_eq!(
            s.row(0),
            &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0]
        );
        assert_eq!(
            s.row(1),
            &[0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]
        );
    }

    #[test]
    fn resolved_rows_are_zero() {
        let s = encode_state(&[(0, 2), (1, 3)], &[true, false], 4).unwrap();
        assert!(s.row(0).iter().all(|&b| b == 0.0));
        assert_eq!(s.row(1).iter().sum::<f64>(), 2.0);
    }

    #[test]
    fn unresolved_rows_sum_to_two() {
        let mut rng = rngutil::stream(5, "test", &[]);
        use rand::Rng;
        for _ in 0..200 {
            let v = rng.random_range(3..12usize);
            let k = rng.random_range(1..6usize);
            let pairs: Vec<(usize, usize)> = (0..k)
                .map(|_| {
                    let s = rng.random_range(0..v);
                    let mut d = rng.random_range(0..v - 1);
                    if d >= s {
                        d += 1;
                    }
                    (s, d)
                })
                .collect();
            let resolved: Vec<bool> = (0..k).map(|_| rng.random()).collect();
            let state = encode_state(&pairs, &resolved, v).unwrap();
            for i in 0..k {
                let sum: f64 = state.row(i).iter().sum();
                assert_eq!(sum, if resolved[i] { 0.0 } else { 2.0 });
            }
        }
    }

    #[test]
    fn endpoint_out_of_range_rejected() {
        assert!(encode_state(&[(0, 4)], &[false], 4).is_err());
    }

    #[test]
    fn greedy_action_is_masked_argmax() {
        let model = QNetworkModel::zeros(&[6, 3]).unwrap();
        let q = [1.0, 5.0, 3.0];
        assert_eq!(masked_argmax(&q, &[true, true, true]), Some(1));
        assert_eq!(masked_argmax(&q, &[true, false, true]), Some(2));
        assert_eq!(masked_argmax(&q, &[false, false, false]), None);
        // epsilon=0 path via select_action on the zero net: all-equal Q,
        // lowest legal index wins.
        let state = encode_state(&[(0, 1)], &[false], 3).unwrap();
        let mut rng = rngutil::stream(0, "test", &[]);
        let a = select_action(&model, &state, &[false, true, true], 0.0, &mut rng).unwrap();
        assert_eq!(a, 1);
    }

    #[test]
    fn full_exploration_is_uniform_over_legal_set() {
        let model = QNetworkModel::zeros(&[6, 3]).unwrap();
        let state = encode_state(&[(0, 1)], &[false], 3).unwrap();
        let mask = [true, false, true];
        let mut rng = rngutil::stream(1, "test", &[]);
        let n = 100_000;
        let mut counts = [0u64; 3];
        for _ in 0..n {
            counts[select_action(&model, &state, &mask, 1.0, &mut rng).unwrap()] += 1;
        }
        assert_eq!(counts[1], 0);
        let sigma = (n as f64 * 0.25).sqrt();
        for &c in &[counts[0], counts[2]] {
            assert!((c as f64 - n as f64 * 0.5).abs() < 3.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn empty_mask_is_an_error() {
        let model = QNetworkModel::zeros(&[6, 3]).unwrap();
        let state = encode_state(&[(0, 1)], &[false], 3).unwrap();
        let mut rng = rngutil::stream(2, "test", &[]);
        assert!(select_action(&model, &state, &[false, false, false], 0.5, &mut rng).is_err());
    }

    #[test]
    fn bank_rejects_mismatched_architecture() {
        let mut bank = DqnModelBank::new(10);
        let wrong = QNetworkModel::new(&[10, 4, 3], 0).unwrap();
        assert!(bank.insert(3, wrong).is_err());
        let right = QNetworkModel::new(&[60, 8, 3], 0).unwrap();
        assert!(bank.insert(3, right).is_ok());
        assert!(bank.model(3).is_some());
        assert!(bank.model(4).is_none());
    }

    #[test]
    fn model_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let model = QNetworkModel::new(&[60, 16, 3], 9).unwrap();
        let cfg = TrainConfig::default_for(3, 10);
        save_model(&model, 3, 10, &cfg, None, &path).unwrap();
        let (back, k, v) = load_model(&path).unwrap();
        assert_eq!(back, model);
        assert_eq!((k, v), (3, 10));
    }
}
