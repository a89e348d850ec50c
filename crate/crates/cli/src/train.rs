//! `rail train`: behavior cloning or random-search imitation in a run directory.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};

use rail_core::io::{
    append_metrics, read_checkpoint, read_demonstrations, read_metrics, write_checkpoint, Checkpoint,
};
use rail_core::learners::{
    bc_accuracy, bc_train_with, DemonstrationSet, HighwayRollout, IterationReport, RailInit, RailTrainer,
};
use rail_core::policy::PolicyShape;
use rail_core::sim::DrivingAction;

use crate::config::{resolve_seed, RunConfig};
use crate::run::{self, RunManifest};
use crate::Usage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Algo {
    Bc,
    Rail,
}

impl Algo {
    fn as_str(self) -> &'static str {
        match self {
            Algo::Bc => "bc",
            Algo::Rail => "rail",
        }
    }
}

#[derive(Debug, clap::Args)]
pub struct TrainArgs {
    /// Run configuration (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub algo: Algo,
    /// Demonstration file; overrides the config's `demos`.
    #[arg(long)]
    pub demos: Option<PathBuf>,
    /// Checkpoint whose weights and normalizer start RAIL training.
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run directory; overrides the config's `output`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the configured iteration count.
    #[arg(long)]
    pub iterations: Option<u64>,
    /// Continue an existing run directory from its newest checkpoint.
    #[arg(long)]
    pub resume: bool,
    /// Stop after this many iterations in this invocation.
    #[arg(long)]
    pub stop_after: Option<u64>,
}

struct Prepared {
    cfg: RunConfig,
    digest: String,
    demos: DemonstrationSet,
    out: PathBuf,
}

fn prepare(args: &TrainArgs) -> Result<Prepared> {
    let mut cfg = RunConfig::load(args.config.as_deref())?;
    cfg.rail.seed = resolve_seed(args.seed, cfg.rail.seed)?;
    cfg.bc.seed = cfg.rail.seed;
    if let Some(w) = args.workers {
        if w == 0 {
            bail!(Usage("--workers must be at least 1".into()));
        }
        cfg.rail.workers = w;
    }
    if let Some(it) = args.iterations {
        cfg.rail.iterations = it;
    }
    if args.demos.is_some() {
        cfg.demos = args.demos.clone();
    }
    if args.out.is_some() {
        cfg.output = args.out.clone();
    }
    cfg.validate()?;
    let out = cfg.output.clone().ok_or_else(|| Usage("no output directory: pass --out or set `output`".into()))?;
    let demo_path = cfg.demos.clone().ok_or_else(|| Usage("no demonstrations: pass --demos or set `demos`".into()))?;
    if !demo_path.is_file() {
        bail!(Usage(format!("demonstration file {} does not exist", demo_path.display())));
    }
    let demos = read_demonstrations(&demo_path).with_context(|| format!("reading {}", demo_path.display()))?;
    check_demos(&cfg, &demos)?;
    let digest = cfg.digest()?;
    Ok(Prepared { cfg, digest, demos, out })
}

fn check_demos(cfg: &RunConfig, demos: &DemonstrationSet) -> Result<()> {
    let n = cfg.env.observation_len();
    if demos.n != n || demos.p != DrivingAction::COUNT {
        bail!(Usage(format!(
            "demonstrations have n={}, p={} but the config needs n={n}, p={}",
            demos.n,
            demos.p,
            DrivingAction::COUNT
        )));
    }
    let env_digest = cfg.env.digest()?;
    if demos.config_digest != env_digest {
        bail!(Usage(format!(
            "demonstrations were recorded under env digest {} but the config has {env_digest}",
            demos.config_digest
        )));
    }
    Ok(())
}

fn check_shape(found: PolicyShape, expected: PolicyShape, what: &str) -> Result<()> {
    if found != expected {
        bail!(Usage(format!("{what} has shape {found:?} but the config needs {expected:?}")));
    }
    Ok(())
}

pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    let p = prepare(args)?;
    match args.algo {
        Algo::Bc => train_bc(args, p),
        Algo::Rail => train_rail(args, p),
    }
}

fn config_json(cfg: &RunConfig) -> Result<Vec<u8>> {
    let mut text = serde_json::to_string_pretty(cfg)?;
    text.push('\n');
    Ok(text.into_bytes())
}

fn finish(out: &Path, digest: &str, algo: Algo, complete: bool, started: u64) -> Result<()> {
    let manifest = RunManifest {
        config_digest: digest.to_owned(),
        tool_version: env!("CARGO_PKG_VERSION").to_owned(),
        algo: algo.as_str().to_owned(),
        complete,
        started_unix: started,
        finished_unix: run::unix_now(),
        artifacts: run::inventory(out)?,
    };
    run::write_manifest(out, &manifest)
}

fn train_bc(args: &TrainArgs, p: Prepared) -> Result<()> {
    if args.resume || args.init.is_some() {
        bail!(Usage("--resume and --init apply to --algo rail only".into()));
    }
    let started = run::unix_now();
    let (params, normalizer) = bc_train_with(&p.demos, &p.cfg.bc)?;
    let accuracy = bc_accuracy(&params, &normalizer, &p.demos)?;
    let mut ck = Checkpoint::new(params, normalizer);
    ck.meta.config_digest = p.digest.clone();
    let summary = format!("epochs,train_accuracy\n{},{accuracy}\n", p.cfg.bc.epochs);
    run::create_run_dir(
        &p.out,
        &[
            (run::CONFIG, &config_json(&p.cfg)?),
            (run::FINAL_CHECKPOINT, &ck.to_bytes()?),
            ("bc_summary.csv", summary.as_bytes()),
        ],
    )?;
    finish(&p.out, &p.digest, Algo::Bc, true, started)?;
    println!("bc: train accuracy {accuracy:.4}, wrote {}", p.out.join(run::FINAL_CHECKPOINT).display());
    Ok(())
}

fn train_rail(args: &TrainArgs, p: Prepared) -> Result<()> {
    let started = run::unix_now();
    let env = HighwayRollout::new(p.cfg.env.clone(), p.cfg.rail.reward);
    let n = p.cfg.env.observation_len();
    let shape = p.cfg.rail.shape(n, DrivingAction::COUNT);
    let mut trainer = if args.resume {
        if args.init.is_some() {
            bail!(Usage("--init cannot be combined with --resume".into()));
        }
        resume_trainer(&env, &p, shape)?
    } else {
        let init = match &args.init {
            Some(path) => {
                let ck = read_checkpoint(path).with_context(|| format!("reading {}", path.display()))?;
                check_shape(ck.params.shape(), shape, "init checkpoint")?;
                Some(RailInit { params: ck.params, normalizer: ck.normalizer })
            }
            None => None,
        };
        let trainer = RailTrainer::new(&env, Some(&p.demos), &p.cfg.rail, init)?;
        let header = format!("{}\n", IterationReport::CSV_HEADER);
        run::create_run_dir(&p.out, &[(run::CONFIG, &config_json(&p.cfg)?), (run::METRICS, header.as_bytes())])?;
        trainer
    };
    let metrics = p.out.join(run::METRICS);
    let total = p.cfg.rail.iterations;
    let budget = args.stop_after.unwrap_or(u64::MAX);
    let mut done = 0;
    while trainer.state().iteration < total && done < budget {
        let t0 = Instant::now();
        let report = trainer.step()?;
        append_metrics(&metrics, &[report])?;
        done += 1;
        let t = report.iteration;
        if t % p.cfg.checkpoint_every == 0 || t == total {
            let ck = Checkpoint::from_trainer(trainer.state(), &p.digest);
            write_checkpoint(&p.out.join(run::checkpoint_name(t)), &ck)?;
        }
        if t % 10 == 0 || t == total {
            eprintln!(
                "iter {t}/{total}: mean reward {:.4}, disc loss {:.4}, nu {:.4} ({:.2}s)",
                report.mean_reward,
                report.disc_loss,
                report.nu,
                t0.elapsed().as_secs_f64()
            );
        }
    }
    let state = trainer.into_state();
    let complete = state.iteration >= total;
    if complete {
        let mut ck = Checkpoint::new(state.theta.clone(), state.normalizer.clone());
        ck.meta.iteration = state.iteration;
        ck.meta.config_digest = p.digest.clone();
        write_checkpoint(&p.out.join(run::FINAL_CHECKPOINT), &ck)?;
    }
    finish(&p.out, &p.digest, Algo::Rail, complete, started)?;
    println!("rail: {} iterations done, run directory {}", state.iteration, p.out.display());
    Ok(())
}

fn resume_trainer<'a>(env: &'a HighwayRollout, p: &Prepared, shape: PolicyShape) -> Result<RailTrainer<'a, HighwayRollout>> {
    if !p.out.is_dir() {
        bail!(Usage(format!("cannot resume: {} is not a run directory", p.out.display())));
    }
    let saved: RunConfig = serde_json::from_slice(&std::fs::read(p.out.join(run::CONFIG))?)
        .map_err(|e| Usage(format!("run config: {e}")))?;
    if saved.digest()? != p.digest {
        bail!(Usage("cannot resume: the configuration differs from the one the run was started with".into()));
    }
    let Some((iteration, path)) = run::list_checkpoints(&p.out)?.pop() else {
        bail!(Usage(format!("cannot resume: {} has no checkpoints", p.out.display())));
    };
    let ck = read_checkpoint(&path)?;
    if ck.meta.config_digest != p.digest {
        bail!(Usage(format!("checkpoint {} belongs to another configuration", path.display())));
    }
    check_shape(ck.params.shape(), shape, "checkpoint")?;
    let state = ck.trainer_state()?;
    if state.iteration != iteration {
        bail!("checkpoint {} holds iteration {}", path.display(), state.iteration);
    }
    // Drop metrics rows past the checkpoint; they are recomputed.
    let metrics = p.out.join(run::METRICS);
    let kept: Vec<IterationReport> =
        read_metrics(&metrics)?.into_iter().filter(|r| r.iteration <= iteration).collect();
    rail_core::io::write_metrics_header(&metrics)?;
    append_metrics(&metrics, &kept)?;
    eprintln!("resuming from iteration {iteration}");
    Ok(RailTrainer::resume(env, Some(&p.demos), &p.cfg.rail, state)?)
}
