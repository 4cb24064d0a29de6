//! Runs the training, evaluation and sweep stages for every `(cell, seed)`
//! job of a configuration.
//!
//! Output layout under the output root:
//!
//! ```text
//! <env>/config.toml                 resolved configuration
//! <env>/metrics.csv                 all jobs, main protocol
//! <env>/sweep.csv                   all jobs, generalization sweep
//! <env>/<cell>/seed-<s>/meta.json
//! <env>/<cell>/seed-<s>/checkpoints/ep-<episode>.txt
//! <env>/<cell>/seed-<s>/metrics.csv
//! <env>/<cell>/seed-<s>/sweep.csv
//! ```
//!
//! A job whose `meta.json` carries the hash of the current training settings
//! is not retrained. Per-job CSV files are reused by `train` when the
//! `.hash` file beside them matches the current training and protocol
//! settings.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use qbelief_core::drqn::{drqn_run_with, Checkpoint, DrqnConfig};
use qbelief_core::nn::{CellKind, RnnSpec, RnnStack};
use qbelief_core::protocol::{
    evaluate_checkpoint, generalization_sweep, BeliefModel, MetricRecord, MetricsRow, ProtocolConfig, RowKey,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{content_hash, EnvConfig, ModelVisitor, RunConfig};
use crate::formats::{self, FormatError, JobMetadata};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Format { path: PathBuf, source: FormatError },
    #[error(transparent)]
    Core(#[from] qbelief_core::Error),
    #[error("{0}")]
    Missing(String),
    #[error("worker pool: {0}")]
    Pool(String),
}

fn io_at(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn fmt_at(path: &Path) -> impl FnOnce(FormatError) -> RunError + '_ {
    move |source| RunError::Format {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes through a temporary file so readers never see partial output.
fn write_atomic(path: &Path, write: impl FnOnce(&mut BufWriter<File>) -> Result<(), RunError>) -> Result<(), RunError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_at(dir))?;
    }
    let tmp = path.with_extension("tmp");
    {
        let mut w = BufWriter::new(File::create(&tmp).map_err(io_at(&tmp))?);
        write(&mut w)?;
    }
    fs::rename(&tmp, path).map_err(io_at(path))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Job {
    pub cell: CellKind,
    pub seed: u64,
}

/// The part of a configuration a job's checkpoints depend on.
#[derive(Serialize)]
struct TrainingIdentity<'a> {
    env: &'a EnvConfig,
    cell: CellKind,
    seed: u64,
    drqn: &'a DrqnConfig,
}

/// Measurements additionally depend on the protocol settings.
#[derive(Serialize)]
struct EvaluationIdentity<'a> {
    training: String,
    protocol: &'a ProtocolConfig,
}

pub struct Runner {
    config: RunConfig,
    root: PathBuf,
}

impl Runner {
    pub fn new(config: RunConfig, root: PathBuf) -> Self {
        Self { config, root }
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn env_dir(&self) -> PathBuf {
        self.root.join(self.config.env.id())
    }

    pub fn job_dir(&self, job: Job) -> PathBuf {
        self.env_dir().join(job.cell.name()).join(format!("seed-{}", job.seed))
    }

    pub fn jobs(&self) -> Vec<Job> {
        let mut jobs: Vec<Job> = self
            .config
            .cells
            .iter()
            .flat_map(|&cell| self.config.seeds.iter().map(move |&seed| Job { cell, seed }))
            .collect();
        jobs.sort();
        jobs
    }

    /// Everything that determines a job's checkpoints, as TOML.
    fn training_identity(&self, job: Job) -> String {
        let id = TrainingIdentity {
            env: &self.config.env,
            cell: job.cell,
            seed: job.seed,
            drqn: &self.config.drqn,
        };
        toml::to_string(&id).expect("job identity serializes")
    }

    pub fn job_hash(&self, job: Job) -> String {
        content_hash(self.training_identity(job).as_bytes())
    }

    fn evaluation_hash(&self, job: Job) -> String {
        let id = EvaluationIdentity {
            training: self.job_hash(job),
            protocol: &self.config.protocol,
        };
        content_hash(toml::to_string(&id).expect("job identity serializes").as_bytes())
    }

    /// Whether `name` in the job directory was produced by the current configuration.
    fn stage_done(&self, job: Job, name: &str) -> bool {
        let dir = self.job_dir(job);
        dir.join(name).exists()
            && fs::read_to_string(dir.join(name).with_extension("hash"))
                .is_ok_and(|h| h.trim() == self.evaluation_hash(job))
    }

    fn pool(&self) -> Result<rayon::ThreadPool, RunError> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.workers)
            .build()
            .map_err(|e| RunError::Pool(e.to_string()))
    }

    fn for_jobs(&self, f: impl Fn(Job) -> Result<(), RunError> + Sync) -> Result<(), RunError> {
        let jobs = self.jobs();
        self.pool()?
            .install(|| jobs.par_iter().map(|&j| f(j)).collect::<Result<Vec<()>, RunError>>())?;
        Ok(())
    }

    fn write_resolved_config(&self) -> Result<(), RunError> {
        let path = self.env_dir().join("config.toml");
        let text = RunConfig {
            out: None,
            ..self.config.clone()
        }
        .to_toml();
        write_atomic(&path, |w| w.write_all(text.as_bytes()).map_err(io_at(&path)))
    }

    /// Trains every job (unless already trained under the same configuration)
    /// and evaluates each of its checkpoints.
    pub fn train(&self) -> Result<PathBuf, RunError> {
        self.write_resolved_config()?;
        self.for_jobs(|job| {
            if !self.is_trained(job) {
                self.train_job(job)?;
            }
            if !self.stage_done(job, "metrics.csv") {
                self.evaluate_job(job)?;
            }
            Ok(())
        })?;
        self.merge("metrics.csv")
    }

    /// Evaluates the stored checkpoints of every job again.
    pub fn eval_mi(&self) -> Result<PathBuf, RunError> {
        self.write_resolved_config()?;
        self.for_jobs(|job| self.evaluate_job(job))?;
        self.merge("metrics.csv")
    }

    /// Generalization sweep on the final checkpoint of every job.
    pub fn sweep(&self) -> Result<PathBuf, RunError> {
        self.write_resolved_config()?;
        self.for_jobs(|job| self.sweep_job(job))?;
        self.merge("sweep.csv")
    }

    fn read_meta(&self, job: Job) -> Option<JobMetadata> {
        let file = File::open(self.job_dir(job).join("meta.json")).ok()?;
        formats::read_metadata(BufReader::new(file)).ok()
    }

    fn is_trained(&self, job: Job) -> bool {
        self.read_meta(job).is_some_and(|m| m.config_hash == self.job_hash(job))
    }

    fn trained_meta(&self, job: Job) -> Result<JobMetadata, RunError> {
        match self.read_meta(job) {
            Some(m) if m.config_hash == self.job_hash(job) => Ok(m),
            _ => Err(RunError::Missing(format!(
                "{}: no checkpoints for the current configuration; run `train` first",
                self.job_dir(job).display()
            ))),
        }
    }

    fn checkpoint_path(&self, job: Job, episode: usize) -> PathBuf {
        self.job_dir(job)
            .join("checkpoints")
            .join(format!("ep-{episode:06}.txt"))
    }

    fn train_job(&self, job: Job) -> Result<(), RunError> {
        let dir = self.job_dir(job);
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(io_at(&dir))?;
        }
        let episodes = self.config.env.with_model(TrainVisitor { runner: self, job })??;
        let meta = JobMetadata {
            env: self.config.env.id(),
            cell: job.cell,
            seed: job.seed,
            config_hash: self.job_hash(job),
            config: self.training_identity(job),
            checkpoints: episodes,
        };
        let path = dir.join("meta.json");
        write_atomic(&path, |w| formats::write_metadata(w, &meta).map_err(io_at(&path)))
    }

    fn load_checkpoint(&self, job: Job, episode: usize) -> Result<(RnnSpec, Checkpoint), RunError> {
        let path = self.checkpoint_path(job, episode);
        let file = File::open(&path).map_err(io_at(&path))?;
        formats::read_checkpoint(BufReader::new(file)).map_err(fmt_at(&path))
    }

    fn evaluate_job(&self, job: Job) -> Result<(), RunError> {
        let meta = self.trained_meta(job)?;
        let rows = self.config.env.with_model(EvalVisitor {
            runner: self,
            job,
            episodes: &meta.checkpoints,
            sweep: false,
        })??;
        self.write_rows(job, "metrics.csv", &rows)
    }

    fn sweep_job(&self, job: Job) -> Result<(), RunError> {
        let meta = self.trained_meta(job)?;
        let last = *meta
            .checkpoints
            .last()
            .ok_or_else(|| RunError::Missing(format!("{}: no checkpoints", self.job_dir(job).display())))?;
        let rows = self.config.env.with_model(EvalVisitor {
            runner: self,
            job,
            episodes: &[last],
            sweep: true,
        })??;
        self.write_rows(job, "sweep.csv", &rows)
    }

    fn write_rows(&self, job: Job, name: &str, rows: &[MetricsRow]) -> Result<(), RunError> {
        let path = &self.job_dir(job).join(name);
        for row in rows {
            for note in &row.failures {
                eprintln!(
                    "warning: {} {} seed {} episode {}: {note}",
                    row.key.env, row.key.cell, row.key.seed, row.key.episode
                );
            }
        }
        let records: Vec<MetricRecord> = rows.iter().flat_map(|r| r.records()).collect();
        write_atomic(path, |w| formats::write_metrics(w, &records).map_err(fmt_at(path)))?;
        let hash_path = path.with_extension("hash");
        let hash = self.evaluation_hash(job);
        write_atomic(&hash_path, |w| writeln!(w, "{hash}").map_err(io_at(&hash_path)))
    }

    /// Concatenates the per-job files named `name` in job order.
    fn merge(&self, name: &str) -> Result<PathBuf, RunError> {
        let mut all = Vec::new();
        for job in self.jobs() {
            let path = self.job_dir(job).join(name);
            let file = File::open(&path).map_err(io_at(&path))?;
            all.extend(formats::read_metrics(BufReader::new(file)).map_err(fmt_at(&path))?);
        }
        let out = self.env_dir().join(name);
        write_atomic(&out, |w| formats::write_metrics(w, &all).map_err(fmt_at(&out)))?;
        Ok(out)
    }
}

struct TrainVisitor<'a> {
    runner: &'a Runner,
    job: Job,
}

impl ModelVisitor for TrainVisitor<'_> {
    type Output = Result<Vec<usize>, RunError>;

    fn visit<P>(self, _: &str, model: &P) -> Self::Output
    where
        P: BeliefModel + Sync,
        P::Observation: Send + Sync,
    {
        let cfg = &self.runner.config.drqn;
        let spec = cfg.rnn_spec(model, self.job.cell);
        let mut episodes = Vec::new();
        let mut failure = None;
        let mut save = |c: &Checkpoint| {
            let path = self.runner.checkpoint_path(self.job, c.episode);
            match write_atomic(&path, |w| formats::write_checkpoint(w, &spec, c).map_err(io_at(&path))) {
                Ok(()) => episodes.push(c.episode),
                Err(e) => failure = Some(e),
            }
            Ok(())
        };
        drqn_run_with(model, cfg, self.job.cell, self.job.seed, &mut save)?;
        match failure {
            Some(e) => Err(e),
            None => Ok(episodes),
        }
    }
}

struct EvalVisitor<'a> {
    runner: &'a Runner,
    job: Job,
    episodes: &'a [usize],
    sweep: bool,
}

impl ModelVisitor for EvalVisitor<'_> {
    type Output = Result<Vec<MetricsRow>, RunError>;

    fn visit<P>(self, env: &str, model: &P) -> Self::Output
    where
        P: BeliefModel + Sync,
        P::Observation: Send + Sync,
    {
        let cfg = &self.runner.config;
        let horizon = cfg.drqn.resolve_horizon(model)?;
        let expected = cfg.drqn.rnn_spec(model, self.job.cell);
        self.episodes
            .par_iter()
            .map(|&episode| {
                let (spec, ck) = self.runner.load_checkpoint(self.job, episode)?;
                if spec != expected {
                    return Err(RunError::Missing(format!(
                        "checkpoint {} does not match the configured network",
                        self.runner.checkpoint_path(self.job, episode).display()
                    )));
                }
                let net = RnnStack::from_params(spec, ck.params)?;
                let key = RowKey {
                    env: env.to_string(),
                    cell: self.job.cell,
                    seed: self.job.seed,
                    episode: episode as u64,
                };
                Ok(if self.sweep {
                    generalization_sweep(model, &net, key, horizon, &cfg.protocol)
                } else {
                    evaluate_checkpoint(model, &net, key, horizon, &cfg.protocol)
                })
            })
            .collect()
    }
}
