//! Multi-seed training runs and their per-episode metrics.

use std::io;
use std::path::{Path, PathBuf};

use ecoach_core::agents::{build_agent, Agent, AgentCheckpoint};
use ecoach_core::episode::{run_episode, EpisodeError};
use ecoach_core::feedback::SyntheticTrainer;
use ecoach_core::mdp::TabularMdp;
use ecoach_core::rng::derive;
use ecoach_core::solvers::{value_iteration, THEOREM_TOL};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig};

pub const CSV_HEADER: [&str; 5] = ["seed", "episode", "steps", "total_reward", "discounted_return"];

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("seed {seed}: {source}")]
    Episode {
        seed: usize,
        #[source]
        source: EpisodeError,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: malformed row {row}: {reason}")]
    Malformed { path: PathBuf, row: usize, reason: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub seed: usize,
    pub episode: usize,
    pub steps: usize,
    pub total_reward: f64,
    pub discounted_return: f64,
}

/// Mean and standard error of one quantity across seeds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aggregate {
    pub mean: f64,
    pub se: f64,
}

impl Aggregate {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        if xs.is_empty() {
            return Self { mean: f64::NAN, se: f64::NAN };
        }
        let mean = xs.iter().sum::<f64>() / n;
        let se = if xs.len() < 2 {
            0.0
        } else {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        };
        Self { mean, se }
    }
}

/// Raw per-(seed, episode) records in seed-major order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunMetrics {
    pub seeds: usize,
    pub episodes: usize,
    pub records: Vec<EpisodeRecord>,
}

impl RunMetrics {
    pub fn record(&self, seed: usize, episode: usize) -> &EpisodeRecord {
        &self.records[seed * self.episodes + episode]
    }

    fn across_seeds(&self, episode: usize, pick: impl Fn(&EpisodeRecord) -> f64) -> Aggregate {
        let xs: Vec<f64> = (0..self.seeds).map(|s| pick(self.record(s, episode))).collect();
        Aggregate::of(&xs)
    }

    /// Per-episode total reward, aggregated over seeds.
    pub fn reward_curve(&self) -> Vec<Aggregate> {
        (0..self.episodes).map(|e| self.across_seeds(e, |r| r.total_reward)).collect()
    }

    pub fn discounted_curve(&self) -> Vec<Aggregate> {
        (0..self.episodes).map(|e| self.across_seeds(e, |r| r.discounted_return)).collect()
    }

    pub fn steps_curve(&self) -> Vec<Aggregate> {
        (0..self.episodes).map(|e| self.across_seeds(e, |r| r.steps as f64)).collect()
    }

    /// Mean total reward over the last `k` episodes of every seed.
    pub fn final_mean_reward(&self, k: usize) -> f64 {
        let k = k.min(self.episodes);
        let from = self.episodes - k;
        let rows: Vec<f64> = (0..self.seeds)
            .flat_map(|s| (from..self.episodes).map(move |e| (s, e)))
            .map(|(s, e)| self.record(s, e).total_reward)
            .collect();
        Aggregate::of(&rows).mean
    }
}

/// One seed's records and its final learned tables.
#[derive(Clone, Debug)]
pub struct SeedRun {
    pub records: Vec<EpisodeRecord>,
    pub checkpoint: AgentCheckpoint,
}

/// Trains a fresh agent for replicate `seed` with its own derived stream.
pub fn run_seed(cfg: &ExperimentConfig, mdp: &TabularMdp, seed: usize) -> Result<SeedRun, ExperimentError> {
    let agent_cfg = cfg.agent.resolve(mdp.gamma());
    let mut agent: Box<dyn Agent> = build_agent(cfg.agent.kind, mdp, &agent_cfg)
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
    let mut trainer = SyntheticTrainer::for_kind(cfg.feedback.scheme, mdp, cfg.feedback.advantage_refresh)
        .ok_or_else(|| ConfigError::Invalid("human feedback is only available through `serve`".into()))?;
    let mut rng = derive(cfg.run.master_seed, seed as u64);
    let mut records = Vec::with_capacity(cfg.run.episodes);
    for episode in 0..cfg.run.episodes {
        let stats = run_episode(mdp, agent.as_mut(), &mut trainer, cfg.run.step_cap, &mut rng)
            .map_err(|source| ExperimentError::Episode { seed, source })?;
        records.push(EpisodeRecord {
            seed,
            episode,
            steps: stats.steps,
            total_reward: stats.total_reward,
            discounted_return: stats.discounted_return,
        });
    }
    Ok(SeedRun {
        records,
        checkpoint: agent.checkpoint(),
    })
}

/// Runs every seed (in parallel) and joins the results in seed order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunMetrics, ExperimentError> {
    cfg.validate()?;
    let mdp = cfg.env.build()?;
    let runs: Vec<SeedRun> = (0..cfg.run.seeds)
        .into_par_iter()
        .map(|seed| run_seed(cfg, &mdp, seed))
        .collect::<Result<_, _>>()?;
    Ok(RunMetrics {
        seeds: cfg.run.seeds,
        episodes: cfg.run.episodes,
        records: runs.into_iter().flat_map(|r| r.records).collect(),
    })
}

/// Expected undiscounted reward of the value-iteration greedy policy over at
/// most `step_cap` steps: the ceiling a learner's episode reward is judged
/// against.
pub fn optimal_episode_reward(mdp: &TabularMdp, step_cap: usize) -> f64 {
    let pi = value_iteration(mdp, THEOREM_TOL).policy;
    let mut mass = vec![0.0; mdp.n_states()];
    mass[mdp.start().0] = 1.0;
    let mut total = 0.0;
    for _ in 0..step_cap {
        let mut next = vec![0.0; mdp.n_states()];
        for s in mdp.states() {
            let m = mass[s.0];
            if m == 0.0 || mdp.is_terminal(s) {
                continue;
            }
            let a = pi.action(s);
            total += m * mdp.reward(s, a);
            for (j, p) in mdp.successors(s, a) {
                next[*j] += m * p;
            }
        }
        mass = next;
    }
    total
}

/// Seventeen significant digits, enough to round-trip any `f64`.
fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_csv_to<W: io::Write>(metrics: &RunMetrics, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in &metrics.records {
        w.write_record([
            r.seed.to_string(),
            r.episode.to_string(),
            r.steps.to_string(),
            fmt_f64(r.total_reward),
            fmt_f64(r.discounted_return),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv(metrics: &RunMetrics, path: &Path) -> Result<(), ExperimentError> {
    let file = std::fs::File::create(path).map_err(|source| ExperimentError::Io {
        path: path.to_owned(),
        source,
    })?;
    write_csv_to(metrics, io::BufWriter::new(file)).map_err(|source| ExperimentError::Csv {
        path: path.to_owned(),
        source,
    })
}

/// Inverse of [`write_csv`]. Rows must be seed-major and rectangular.
pub fn read_csv(path: &Path) -> Result<RunMetrics, ExperimentError> {
    let csv_err = |source| ExperimentError::Csv {
        path: path.to_owned(),
        source,
    };
    let malformed = |row: usize, reason: String| ExperimentError::Malformed {
        path: path.to_owned(),
        row,
        reason,
    };
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = rdr.headers().map_err(csv_err)?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(malformed(0, format!("unexpected header {header:?}")));
    }
    let records: Vec<EpisodeRecord> = rdr.deserialize().collect::<Result<_, _>>().map_err(csv_err)?;
    let seeds = records.iter().map(|r| r.seed + 1).max().unwrap_or(0);
    let episodes = records.len().checked_div(seeds).unwrap_or(0);
    for (i, r) in records.iter().enumerate() {
        if episodes == 0 || r.seed != i / episodes || r.episode != i % episodes {
            return Err(malformed(i + 1, "rows are not seed-major and rectangular".into()));
        }
    }
    Ok(RunMetrics {
        seeds,
        episodes,
        records,
    })
}
