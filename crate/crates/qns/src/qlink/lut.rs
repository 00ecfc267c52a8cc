//! Per-hop-count lookup tables of (fidelity, attempt duration) samples.
//!
//! The tables store raw Monte-Carlo samples; consumers draw uniformly with
//! replacement. Generation is keyed per (hop, sample index), so fanning the
//! work out across threads cannot change the resulting multiset.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{simulate_chain, NoiseParams, QlinkError, TimingParams};
use crate::rngutil;

pub const LUT_FILE_VERSION: u32 = 1;

/// One end-to-end attempt result: final fidelity and wall time consumed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkSample {
    pub fidelity: f64,
    pub duration_ns: u64,
}

/// Generation parameters recorded alongside the samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LutProvenance {
    pub noise: NoiseParams,
    pub timing: TimingParams,
    pub samples_per_hop: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LookupTable {
    max_hops: u32,
    samples: BTreeMap<u32, Vec<LinkSample>>,
    provenance: LutProvenance,
}

#[derive(Serialize, Deserialize)]
struct LutFile {
    version: u32,
    noise: NoiseParams,
    timing: TimingParams,
    seed: u64,
    samples_per_hop: u64,
    samples: BTreeMap<u32, Vec<(f64, u64)>>,
}

impl LookupTable {
    pub fn max_hops(&self) -> u32 {
        self.max_hops
    }

    pub fn provenance(&self) -> &LutProvenance {
        &self.provenance
    }

    pub fn samples(&self, hops: u32) -> Result<&[LinkSample], QlinkError> {
        self.samples
            .get(&hops)
            .map(Vec::as_slice)
            .ok_or(QlinkError::InvalidLookupTable(format!(
                "hop count {hops} outside table range 1..={}",
                self.max_hops
            )))
    }

    pub fn mean_fidelity(&self, hops: u32) -> Result<f64, QlinkError> {
        let s = self.samples(hops)?;
        Ok(s.iter().map(|x| x.fidelity).sum::<f64>() / s.len() as f64)
    }

    /// Mean single-attempt duration at a hop count; the weight used by the
    /// proportional-fair policy.
    pub fn mean_duration_ns(&self, hops: u32) -> Result<f64, QlinkError> {
        let s = self.samples(hops)?;
        Ok(s.iter().map(|x| x.duration_ns as f64).sum::<f64>() / s.len() as f64)
    }

    /// Fraction of samples whose fidelity exceeds `threshold` (strict).
    pub fn success_fraction(&self, hops: u32, threshold: f64) -> Result<f64, QlinkError> {
        let s = self.samples(hops)?;
        Ok(s.iter().filter(|x| x.fidelity > threshold).count() as f64 / s.len() as f64)
    }

    fn validate(&self) -> Result<(), QlinkError> {
        if self.max_hops < 1 {
            return Err(QlinkError::InvalidLookupTable("max_hops < 1".into()));
        }
        for h in 1..=self.max_hops {
            let s = self
                .samples
                .get(&h)
                .ok_or_else(|| QlinkError::InvalidLookupTable(format!("missing hop {h}")))?;
            if s.is_empty() {
                return Err(QlinkError::InvalidLookupTable(format!("hop {h} empty")));
            }
            for x in s {
                if !(0.0..=1.0).contains(&x.fidelity) || x.duration_ns == 0 {
                    return Err(QlinkError::InvalidLookupTable(format!(
                        "bad sample at hop {h}: ({}, {})",
                        x.fidelity, x.duration_ns
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), QlinkError> {
        let file = LutFile {
            version: LUT_FILE_VERSION,
            noise: self.provenance.noise,
            timing: self.provenance.timing,
            seed: self.provenance.seed,
            samples_per_hop: self.provenance.samples_per_hop,
            samples: self
                .samples
                .iter()
                .map(|(&h, v)| (h, v.iter().map(|s| (s.fidelity, s.duration_ns)).collect()))
                .collect(),
        };
        fs::write(path, serde_json::to_string_pretty(&file)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, QlinkError> {
        let file: LutFile = serde_json::from_str(&fs::read_to_string(path)?)?;
        if file.version != LUT_FILE_VERSION {
            return Err(QlinkError::InvalidLookupTable(format!(
                "unsupported lookup-table version {}",
                file.version
            )));
        }
        let samples: BTreeMap<u32, Vec<LinkSample>> = file
            .samples
            .into_iter()
            .map(|(h, v)| {
                (
                    h,
                    v.into_iter()
                        .map(|(fidelity, duration_ns)| LinkSample {
                            fidelity,
                            duration_ns,
                        })
                        .collect(),
                )
            })
            .collect();
        let max_hops = samples.keys().max().copied().unwrap_or(0);
        let table = LookupTable {
            max_hops,
            samples,
            provenance: LutProvenance {
                noise: file.noise,
                timing: file.timing,
                samples_per_hop: file.samples_per_hop,
                seed: file.seed,
            },
        };
        table.validate()?;
        Ok(table)
    }
}

/// Run `samples_per_hop` chain attempts per hop count in [1, max_hops].
/// Deterministic for a fixed seed and independent of evaluation order.
pub fn build_lookup_table(
    max_hops: u32,
    samples_per_hop: u64,
    noise: &NoiseParams,
    timing: &TimingParams,
    seed: u64,
) -> Result<LookupTable, QlinkError> {
    if max_hops < 1 || samples_per_hop < 1 {
        return Err(QlinkError::InvalidLookupTable(
            "max_hops and samples_per_hop must be at least 1".into(),
        ));
    }
    noise.validate()?;
    timing.validate()?;
    let mut samples = BTreeMap::new();
    for hops in 1..=max_hops {
        let mut list = Vec::with_capacity(samples_per_hop as usize);
        for i in 0..samples_per_hop {
            let mut rng = rngutil::stream(seed, "qlink.lut", &[hops as u64, i]);
            list.push(simulate_chain(hops, noise, timing, &mut rng)?);
        }
        samples.insert(hops, list);
    }
    let table = LookupTable {
        max_hops,
        samples,
        provenance: LutProvenance {
            noise: *noise,
            timing: *timing,
            samples_per_hop,
            seed,
        },
    };
    table.validate()?;
    Ok(table)
}
