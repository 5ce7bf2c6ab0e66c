//! Batch episode execution.
//!
//! Episodes are independent, so a batch is an embarrassingly parallel map
//! over jobs. With the `parallel` feature the map runs on a rayon pool;
//! without it, [`run_batch`] falls back to a plain loop. Results always
//! come back in job order.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::episode::{run_episode, EpisodeResult};
use crate::error::Result;
use crate::policies::PolicyKind;
use crate::scenario::ScenarioConfig;
use crate::trace::write_trace;

#[derive(Debug, Clone)]
pub struct EpisodeJob {
    pub config: Arc<ScenarioConfig>,
    pub seed: u64,
    pub policy: PolicyKind,
}

/// Jobs for `episodes` consecutive seeds starting at `base_seed`.
pub fn seed_jobs(config: Arc<ScenarioConfig>, policy: PolicyKind, base_seed: u64, episodes: u64) -> Vec<EpisodeJob> {
    (0..episodes).map(|i| EpisodeJob { config: config.clone(), seed: base_seed.wrapping_add(i), policy }).collect()
}

pub fn trace_file_name(job: &EpisodeJob) -> String {
    format!("trace_n{}_{}_s{}.jsonl", job.config.fleet_size, job.policy.as_str(), job.seed)
}

fn run_job(job: &EpisodeJob, trace_dir: Option<&Path>) -> Result<EpisodeResult> {
    let mut policy = job.policy.build(job.seed);
    match trace_dir {
        None => run_episode(&job.config, job.seed, policy.as_mut()),
        Some(dir) => {
            let path: PathBuf = dir.join(trace_file_name(job));
            let sink = BufWriter::new(File::create(path)?);
            let (result, _) = write_trace(&job.config, job.seed, policy.as_mut(), sink)?;
            Ok(result)
        }
    }
}

pub fn run_batch_sequential(jobs: &[EpisodeJob], trace_dir: Option<&Path>) -> Result<Vec<EpisodeResult>> {
    jobs.iter().map(|j| run_job(j, trace_dir)).collect()
}

#[cfg(feature = "parallel")]
pub fn run_batch_parallel(jobs: &[EpisodeJob], workers: Option<usize>, trace_dir: Option<&Path>) -> Result<Vec<EpisodeResult>> {
    use rayon::prelude::*;

    let run = || jobs.par_iter().map(|j| run_job(j, trace_dir)).collect::<Result<Vec<_>>>();
    match workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| std::io::Error::other(e.to_string()))?
            .install(run),
        None => run(),
    }
}

/// Run every job, in parallel when the `parallel` feature is enabled and
/// more than one worker is allowed.
pub fn run_batch(jobs: &[EpisodeJob], workers: Option<usize>, trace_dir: Option<&Path>) -> Result<Vec<EpisodeResult>> {
    #[cfg(feature = "parallel")]
    {
        if workers != Some(1) {
            return run_batch_parallel(jobs, workers, trace_dir);
        }
    }
    let _ = workers;
    run_batch_sequential(jobs, trace_dir)
}
