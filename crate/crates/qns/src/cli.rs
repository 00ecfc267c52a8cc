//! Subcommand orchestration: build lookup tables, train models, run
//! simulations, compare schedulers on shared replayed traces and print
//! report summaries. Kept in the library so runs are scriptable from tests.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::deepq::{
    load_model, save_model, train, DqnModelBank, EngineEpisodeSampler, EpochStats, TrainConfig,
};
use crate::engine::{run_simulation, EngineContext, SimulationResult};
use crate::metrics::{delay_cdf, normalized_gain, RunMetrics};
use crate::nettopo::{self, Topology};
use crate::qlink::{build_lookup_table, LookupTable};
use crate::sched::{DqnBias, Policy};
use crate::traffic::{arrivals_for_slot, Request, RequestStatus};

pub const SUMMARY_FILE_VERSION: u32 = 1;
pub const METRICS_FILE_VERSION: u32 = 1;

#[derive(Parser)]
#[command(name = "qns", about = "Entanglement-request scheduling simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Monte-Carlo sample the per-hop (fidelity, duration) lookup table.
    BuildLut {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 6)]
        max_hops: u32,
        #[arg(long, default_value_t = 2000)]
        samples: u64,
    },
    /// Train one DQN model for a fixed arrival count k.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        c_d: f64,
        #[arg(long)]
        c_j: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        curves: PathBuf,
        #[arg(long)]
        epochs: Option<u32>,
        #[arg(long)]
        episodes: Option<u32>,
    },
    /// Run one full simulation and write its artifacts.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run several schedulers against shared per-replicate request traces.
    Compare {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated scheduler specs.
        #[arg(long, value_delimiter = ',')]
        schedulers: Vec<String>,
        #[arg(long)]
        replicates: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the summary table of a compare output directory.
    Report {
        #[arg(long)]
        dir: PathBuf,
    },
}

/// Canonical model file name inside a model directory.
pub fn model_file_name(bias: DqnBias, k: usize) -> String {
    match bias {
        DqnBias::DelayBiased => format!("dqn_delay_k{k}.json"),
        DqnBias::FairnessBiased => format!("dqn_fair_k{k}.json"),
    }
}

#[derive(Serialize, Deserialize)]
pub struct MetricsFile {
    pub version: u32,
    pub scheduler: String,
    pub metrics: Option<RunMetrics>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchedulerSummary {
    pub scheduler: String,
    pub mean_delay_ns: f64,
    pub mean_jain: f64,
    pub drop_rate: f64,
    pub completed: usize,
    pub dropped: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GainEntry {
    pub a: String,
    pub b: String,
    pub gain: f64,
}

#[derive(Serialize, Deserialize)]
pub struct SummaryFile {
    pub version: u32,
    pub replicates: u64,
    pub trace_hashes: Vec<String>,
    pub schedulers: Vec<SchedulerSummary>,
    pub gains: Vec<GainEntry>,
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::BuildLut {
            config,
            out,
            max_hops,
            samples,
        } => cmd_build_lut(&config, &out, max_hops, samples),
        Command::Train {
            config,
            k,
            c_d,
            c_j,
            out,
            curves,
            epochs,
            episodes,
        } => cmd_train(&config, k, c_d, c_j, &out, &curves, epochs, episodes),
        Command::Simulate { config, out } => cmd_simulate(&config, &out),
        Command::Compare {
            config,
            schedulers,
            replicates,
            out,
        } => cmd_compare(&config, &schedulers, replicates, &out),
        Command::Report { dir } => cmd_report(&dir),
    }
}

fn cmd_build_lut(config: &Path, out: &Path, max_hops: u32, samples: u64) -> anyhow::Result<()> {
    let cfg = RunConfig::load(config).context("loading config")?;
    let table = build_lookup_table(max_hops, samples, &cfg.noise, &cfg.timing, cfg.lut_seed())?;
    table.save(out).context("writing lookup table")?;
    println!("lookup table: {} hops x {} samples", max_hops, samples);
    for h in 1..=max_hops {
        println!(
            "hops {h}: mean fidelity {:.4}, mean duration {:.0} ns, success {:.3}",
            table.mean_fidelity(h)?,
            table.mean_duration_ns(h)?,
            table.success_fraction(h, 0.5)?,
        );
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_train(
    config: &Path,
    k: usize,
    c_d: f64,
    c_j: f64,
    out: &Path,
    curves: &Path,
    epochs: Option<u32>,
    episodes: Option<u32>,
) -> anyhow::Result<()> {
    if !(3..=5).contains(&k) {
        bail!("k must be 3, 4 or 5, got {k}");
    }
    let cfg = RunConfig::load(config).context("loading config")?;
    let topology = nettopo::generate(&cfg.ws_params())?;
    let lut = load_lut(&cfg, &topology)?;
    let mut tc = TrainConfig::default_for(k, topology.node_count());
    tc.c_d = c_d;
    tc.c_j = c_j;
    tc.seed = cfg.train_seed(k as u64);
    if let Some(e) = epochs {
        tc.epochs = e;
    }
    if let Some(e) = episodes {
        tc.episodes_per_epoch = e;
    }
    let sampler = EngineEpisodeSampler {
        topology: &topology,
        lut: &lut,
        cfg: cfg.slot,
    };
    let (model, curve) = train(&sampler, &tc)?;
    save_model(&model, k, topology.node_count(), &tc, curve.last(), out)?;
    write_curves(curves, &curve)?;
    if let Some(last) = curve.last() {
        println!(
            "trained k={k}: final epoch mean reward {:.4}, mean loss {:.6}",
            last.mean_reward, last.mean_loss
        );
    }
    Ok(())
}

fn write_curves(path: &Path, curve: &[EpochStats]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "mean_loss", "mean_reward"])?;
    for s in curve {
        w.write_record([
            s.epoch.to_string(),
            format!("{:.9}", s.mean_loss),
            format!("{:.9}", s.mean_reward),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn load_lut(cfg: &RunConfig, topology: &Topology) -> anyhow::Result<LookupTable> {
    let lut = LookupTable::load(&cfg.lut_path)
        .with_context(|| format!("loading lookup table {}", cfg.lut_path.display()))?;
    let diameter = topology.diameter();
    if lut.max_hops() < diameter {
        bail!(
            "lookup table covers {} hops but the topology diameter is {diameter}",
            lut.max_hops()
        );
    }
    Ok(lut)
}

fn load_bank(dir: &Path, bias: DqnBias, node_count: usize) -> anyhow::Result<DqnModelBank> {
    let mut bank = DqnModelBank::new(node_count);
    for k in [3usize, 4, 5] {
        let path = dir.join(model_file_name(bias, k));
        let (model, file_k, file_v) =
            load_model(&path).with_context(|| format!("loading model {}", path.display()))?;
        if file_k != k || file_v != node_count {
            bail!(
                "model {} is for k={file_k}, V={file_v}, expected k={k}, V={node_count}",
                path.display()
            );
        }
        bank.insert(k, model)?;
    }
    Ok(bank)
}

fn make_policy(cfg: &RunConfig, spec: &str, replicate: u64, node_count: usize) -> anyhow::Result<Policy> {
    let bank = if spec.starts_with("dqn:") {
        let dir = cfg
            .model_dir
            .as_ref()
            .context("dqn schedulers need model_dir in the config")?;
        let bias = if spec == "dqn:delay" {
            DqnBias::DelayBiased
        } else {
            DqnBias::FairnessBiased
        };
        Some(load_bank(dir, bias, node_count)?)
    } else {
        None
    };
    Ok(Policy::from_spec(spec, cfg.sched_seed(replicate), bank)?)
}

fn build_trace(cfg: &RunConfig, node_count: usize, replicate: u64) -> anyhow::Result<Vec<Vec<Request>>> {
    let model = cfg.arrival_model(replicate);
    let mut next_id = 0u64;
    let mut slots = Vec::with_capacity(cfg.slot.num_slots as usize);
    for slot in 0..cfg.slot.num_slots {
        slots.push(arrivals_for_slot(
            &model,
            node_count,
            slot,
            slot * cfg.slot.slot_interval_ns,
            &mut next_id,
        )?);
    }
    Ok(slots)
}

fn trace_hash(trace: &[Vec<Request>]) -> String {
    let mut hasher = Sha256::new();
    for (slot, requests) in trace.iter().enumerate() {
        for r in requests {
            hasher.update(format!("{},{},{},{}\n", r.id, slot, r.src, r.dst));
        }
    }
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn run_one(
    cfg: &RunConfig,
    topology: &Topology,
    lut: &LookupTable,
    spec: &str,
    trace: &[Vec<Request>],
    replicate: u64,
) -> anyhow::Result<SimulationResult> {
    let mut policy = make_policy(cfg, spec, replicate, topology.node_count())?;
    let ctx = EngineContext::new(topology, lut, &cfg.slot, cfg.attempt_seed(replicate))?;
    Ok(run_simulation(trace, &mut policy, &ctx)?)
}

fn write_cdf(path: &Path, delays: &[u64]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["delay_ns", "fraction"])?;
    if !delays.is_empty() {
        for (d, f) in delay_cdf(delays)? {
            w.write_record([d.to_string(), format!("{f:.9}")])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn completed_delays(result: &SimulationResult) -> Vec<u64> {
    result
        .completed
        .iter()
        .map(|r| match r.status {
            RequestStatus::Completed { t_f } => t_f - r.t_gen,
            _ => unreachable!("completed list holds completed requests"),
        })
        .collect()
}

fn cmd_simulate(config: &Path, out: &Path) -> anyhow::Result<()> {
    let cfg = RunConfig::load(config).context("loading config")?;
    let topology = nettopo::generate(&cfg.ws_params())?;
    let lut = load_lut(&cfg, &topology)?;
    let trace = build_trace(&cfg, topology.node_count(), 0)?;
    let result = run_one(&cfg, &topology, &lut, &cfg.scheduler, &trace, 0)?;

    fs::create_dir_all(out)?;
    cfg.save(&out.join("config.toml"))?;

    let mut all: Vec<&Request> = result
        .completed
        .iter()
        .chain(&result.dropped)
        .chain(&result.unresolved)
        .collect();
    all.sort_by_key(|r| r.id);
    let mut log = String::new();
    for r in &all {
        log.push_str(&serde_json::to_string(r)?);
        log.push('\n');
    }
    fs::write(out.join("requests.jsonl"), log)?;

    let metrics = if result.completed.is_empty() {
        None
    } else {
        Some(RunMetrics::from_result(&result)?)
    };
    let file = MetricsFile {
        version: METRICS_FILE_VERSION,
        scheduler: cfg.scheduler.clone(),
        metrics,
    };
    fs::write(
        out.join("metrics.json"),
        serde_json::to_string_pretty(&file)?,
    )?;
    write_cdf(&out.join("cdf.csv"), &completed_delays(&result))?;

    match &file.metrics {
        Some(m) => println!(
            "{}: {} completed, {} dropped, mean delay {:.0} ns, jain {:.4}",
            cfg.scheduler, m.completed_count, m.drop_count, m.mean_delay_ns, m.jain
        ),
        None => println!("{}: no completed requests", cfg.scheduler),
    }
    Ok(())
}

fn cmd_compare(
    config: &Path,
    schedulers: &[String],
    replicates: u64,
    out: &Path,
) -> anyhow::Result<()> {
    if replicates == 0 {
        bail!("replicates must be at least 1");
    }
    if schedulers.is_empty() {
        bail!("at least one scheduler is required");
    }
    let cfg = RunConfig::load(config).context("loading config")?;
    let topology = nettopo::generate(&cfg.ws_params())?;
    let lut = load_lut(&cfg, &topology)?;

    fs::create_dir_all(out)?;
    cfg.save(&out.join("config.toml"))?;

    let mut trace_hashes = Vec::with_capacity(replicates as usize);
    let mut rows: Vec<(String, u64, RunMetrics)> = Vec::new();
    let mut pooled_delays: Vec<Vec<u64>> = vec![Vec::new(); schedulers.len()];
    for replicate in 0..replicates {
        let trace = build_trace(&cfg, topology.node_count(), replicate)?;
        trace_hashes.push(trace_hash(&trace));
        for (si, spec) in schedulers.iter().enumerate() {
            let result = run_one(&cfg, &topology, &lut, spec, &trace, replicate)?;
            pooled_delays[si].extend(completed_delays(&result));
            rows.push((spec.clone(), replicate, RunMetrics::from_result(&result)?));
        }
    }

    let mut w = csv::Writer::from_path(out.join("comparison.csv"))?;
    w.write_record([
        "scheduler",
        "replicate",
        "completed",
        "dropped",
        "mean_delay_ns",
        "jain",
    ])?;
    for (spec, replicate, m) in &rows {
        w.write_record([
            spec.clone(),
            replicate.to_string(),
            m.completed_count.to_string(),
            m.drop_count.to_string(),
            format!("{:.3}", m.mean_delay_ns),
            format!("{:.6}", m.jain),
        ])?;
    }
    w.flush()?;

    let mut summaries = Vec::with_capacity(schedulers.len());
    for (si, spec) in schedulers.iter().enumerate() {
        let mine: Vec<&RunMetrics> = rows
            .iter()
            .filter(|(s, _, _)| s == spec)
            .map(|(_, _, m)| m)
            .collect();
        let n = mine.len() as f64;
        let completed: usize = mine.iter().map(|m| m.completed_count).sum();
        let dropped: usize = mine.iter().map(|m| m.drop_count).sum();
        summaries.push(SchedulerSummary {
            scheduler: spec.clone(),
            mean_delay_ns: mine.iter().map(|m| m.mean_delay_ns).sum::<f64>() / n,
            mean_jain: mine.iter().map(|m| m.jain).sum::<f64>() / n,
            drop_rate: dropped as f64 / (completed + dropped).max(1) as f64,
            completed,
            dropped,
        });
        write_cdf(
            &out.join(format!("cdf_{}.csv", spec.replace(':', "_"))),
            &pooled_delays[si],
        )?;
    }

    let jains: Vec<f64> = summaries.iter().map(|s| s.mean_jain).collect();
    let mut gains = Vec::new();
    if summaries.len() > 1 {
        for i in 0..summaries.len() {
            for j in i + 1..summaries.len() {
                if let Ok(g) = normalized_gain(jains[i], jains[j], &jains) {
                    gains.push(GainEntry {
                        a: summaries[i].scheduler.clone(),
                        b: summaries[j].scheduler.clone(),
                        gain: g,
                    });
                }
            }
        }
    }

    let summary = SummaryFile {
        version: SUMMARY_FILE_VERSION,
        replicates,
        trace_hashes,
        schedulers: summaries,
        gains,
    };
    fs::write(
        out.join("summary.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    print_summary(&summary);
    Ok(())
}

fn cmd_report(dir: &Path) -> anyhow::Result<()> {
    let path = dir.join("summary.json");
    let summary: SummaryFile = serde_json::from_str(
        &fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?,
    )?;
    if summary.version != SUMMARY_FILE_VERSION {
        bail!("unsupported summary version {}", summary.version);
    }
    print_summary(&summary);
    Ok(())
}

fn print_summary(summary: &SummaryFile) {
    println!(
        "{} replicates, shared traces {}",
        summary.replicates,
        if summary.trace_hashes.len() as u64 == summary.replicates {
            "verified"
        } else {
            "MISSING"
        }
    );
    println!(
        "{:<12} {:>14} {:>8} {:>10} {:>10}",
        "scheduler", "mean_delay_ns", "jain", "completed", "drop_rate"
    );
    for s in &summary.schedulers {
        println!(
            "{:<12} {:>14.0} {:>8.4} {:>10} {:>10.4}",
            s.scheduler, s.mean_delay_ns, s.mean_jain, s.completed, s.drop_rate
        );
    }
    for g in &summary.gains {
        println!("gain {} vs {}: {:+.4}", g.a, g.b, g.gain);
    }
}
