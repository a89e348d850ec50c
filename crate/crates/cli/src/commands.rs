//! The smaller subcommands: expert recording, evaluation, weight export and
//! run verification.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use rail_core::io::{read_checkpoint, sha256_hex, write_demonstrations, Checkpoint};
use rail_core::learners::record_demonstrations;
use rail_core::policy::NormalizedPolicy;
use rail_core::sim::{evaluate_policy, DrivingAction, DrivingStats, EpisodeStats, ScriptedExpert};

use crate::config::{resolve_seed, RunConfig};
use crate::run;
use crate::Usage;

#[derive(Debug, clap::Args)]
pub struct GenExpertArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub episodes: u64,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Demonstration file to write; summary stats go to `<out>.stats.csv`.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn cmd_gen_expert(args: &GenExpertArgs) -> Result<()> {
    let cfg = RunConfig::load(args.config.as_deref())?;
    let seed = resolve_seed(args.seed, cfg.env.seed)?;
    let mut expert = ScriptedExpert::new(cfg.expert);
    let demos = record_demonstrations(&cfg.env, &mut expert, "scripted-expert", args.episodes as usize, seed)?;
    let per_episode: Vec<EpisodeStats> = demos.episodes.iter().map(EpisodeStats::from_trajectory).collect();
    let stats = DrivingStats::mean_of(&per_episode);
    write_demonstrations(&args.out, &demos).with_context(|| format!("writing {}", args.out.display()))?;
    std::fs::write(sidecar(&args.out, ".stats.csv"), stats.to_csv())?;
    println!("episodes: {}", demos.episodes.len());
    println!("mean expert speed: {:.2} km/h", stats.avg_speed);
    Ok(())
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

#[derive(Debug, clap::Args)]
#[command(group(clap::ArgGroup::new("policy").required(true).args(["checkpoint", "expert"])))]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Evaluate the scripted expert instead of a checkpoint.
    #[arg(long)]
    pub expert: bool,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 16, value_parser = clap::value_parser!(u64).range(1..))]
    pub episodes: u64,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write the statistics CSV here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let cfg = RunConfig::load(args.config.as_deref())?;
    let seed = resolve_seed(args.seed, 0)?;
    let episodes = args.episodes as usize;
    let stats = match &args.checkpoint {
        Some(path) => {
            let ck = read_checkpoint(path).with_context(|| format!("reading {}", path.display()))?;
            let shape = ck.params.shape();
            let n = cfg.env.observation_len();
            if shape.n != n || shape.p != DrivingAction::COUNT {
                bail!(Usage(format!(
                    "checkpoint expects n={}, p={} but the config gives n={n}, p={}",
                    shape.n,
                    shape.p,
                    DrivingAction::COUNT
                )));
            }
            let mut policy = NormalizedPolicy::new(&ck.params, &ck.normalizer)?;
            evaluate_policy(&mut policy, &cfg.env, episodes, seed)?
        }
        None => evaluate_policy(&mut ScriptedExpert::new(cfg.expert), &cfg.env, episodes, seed)?,
    };
    let csv = stats.to_csv();
    print!("{csv}");
    if let Some(out) = &args.out {
        std::fs::write(out, &csv).with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(())
}

#[derive(Debug, clap::Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// 1 for the input layer, 2 for the output layer of a two-layer policy.
    #[arg(long, default_value_t = 1)]
    pub layer: usize,
    /// Target shape `RxC`; defaults to the layer's own shape.
    #[arg(long)]
    pub reshape: Option<String>,
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
    pub bins: u64,
    /// Matrix CSV; the histogram goes to `<out>.hist.csv`.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn factorizations(len: usize) -> Vec<(usize, usize)> {
    (1..=len).filter(|r| len.is_multiple_of(*r)).map(|r| (r, len / r)).collect()
}

fn parse_shape(text: &str, len: usize) -> Result<(usize, usize)> {
    let parsed = text
        .split_once(['x', 'X'])
        .and_then(|(r, c)| Some((r.trim().parse::<usize>().ok()?, c.trim().parse::<usize>().ok()?)));
    match parsed {
        Some((r, c)) if r.checked_mul(c) == Some(len) => Ok((r, c)),
        _ => {
            let valid: Vec<String> = factorizations(len).iter().map(|(r, c)| format!("{r}x{c}")).collect();
            bail!(Usage(format!(
                "cannot reshape {len} weights as {text:?}; valid shapes: {}",
                valid.join(", ")
            )))
        }
    }
}

/// Equal-width histogram over the value range; a constant layer gets one bin.
pub fn histogram(values: &[f64], bins: usize) -> Vec<(f64, f64, usize)> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if values.is_empty() {
        return Vec::new();
    }
    if lo == hi {
        return vec![(lo, hi, values.len())];
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, c)| (lo + i as f64 * width, if i + 1 == bins { hi } else { lo + (i + 1) as f64 * width }, c))
        .collect()
}

pub fn cmd_export_weights(args: &ExportArgs) -> Result<()> {
    let ck = read_checkpoint(&args.checkpoint).with_context(|| format!("reading {}", args.checkpoint.display()))?;
    let layers = ck.params.layer_count();
    if args.layer == 0 || args.layer > layers {
        bail!(Usage(format!("--layer must be between 1 and {layers}")));
    }
    let m = ck.params.layer(args.layer - 1)?;
    let values = m.as_slice();
    let (rows, cols) = match &args.reshape {
        Some(s) => parse_shape(s, values.len())?,
        None => m.shape(),
    };
    let mut csv = String::new();
    for row in values.chunks(cols) {
        let cells: Vec<String> = row.iter().map(|&v| (v as f32).to_string()).collect();
        csv.push_str(&cells.join(","));
        csv.push('\n');
    }
    std::fs::write(&args.out, csv).with_context(|| format!("writing {}", args.out.display()))?;
    let mut hist = String::from("bin_start,bin_end,count\n");
    for (a, b, c) in histogram(values, args.bins as usize) {
        hist.push_str(&format!("{a},{b},{c}\n"));
    }
    std::fs::write(sidecar(&args.out, ".hist.csv"), hist)?;
    println!("layer {} ({}x{}) written as {rows}x{cols} to {}", args.layer, m.rows(), m.cols(), args.out.display());
    Ok(())
}

#[derive(Debug, clap::Args)]
pub struct VerifyArgs {
    /// Run directory to check.
    pub dir: PathBuf,
}

/// Checks every manifest entry against the files on disk and every
/// checkpoint header against the run's config digest.
pub fn cmd_verify(args: &VerifyArgs) -> Result<()> {
    let manifest = run::read_manifest(&args.dir)?;
    let mut problems = Vec::new();
    for a in &manifest.artifacts {
        match std::fs::read(args.dir.join(&a.path)) {
            Ok(bytes) if sha256_hex(&bytes) == a.sha256 => {}
            Ok(_) => problems.push(format!("{}: content does not match the manifest", a.path)),
            Err(e) => problems.push(format!("{}: {e}", a.path)),
        }
        if a.path.ends_with(".rckp") {
            match read_checkpoint(&args.dir.join(&a.path)) {
                Ok(Checkpoint { meta, .. }) if meta.config_digest == manifest.config_digest => {}
                Ok(_) => problems.push(format!("{}: written under a different config digest", a.path)),
                Err(e) => problems.push(format!("{}: {e}", a.path)),
            }
        }
    }
    match std::fs::read(args.dir.join(run::CONFIG)) {
        Ok(bytes) => match serde_json::from_slice::<RunConfig>(&bytes).map_err(anyhow::Error::from).and_then(|c| c.digest()) {
            Ok(d) if d == manifest.config_digest => {}
            Ok(_) => problems.push(format!("{}: digest differs from the manifest", run::CONFIG)),
            Err(e) => problems.push(format!("{}: {e}", run::CONFIG)),
        },
        Err(e) => problems.push(format!("{}: {e}", run::CONFIG)),
    }
    if problems.is_empty() {
        println!("ok: {} artifacts match digest {}", manifest.artifacts.len(), manifest.config_digest);
        Ok(())
    } else {
        for p in &problems {
            eprintln!("{p}");
        }
        bail!("{} problem(s) found in {}", problems.len(), args.dir.display())
    }
}
