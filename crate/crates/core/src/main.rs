use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use repeat::base::BaseKind;
use repeat::commands;
use repeat::encoder::{EncoderKind, WeightInit};
use repeat::eval::{CorpusKind, UncertaintyMethod};
use repeat::tensor::Shape;
use repeat::threshold::ThresholdMethod;
use repeat::RunConfig;

/// Importance and uncertainty maps for image encoders.
#[derive(Parser)]
#[command(name = "repeat", version)]
struct Cli {
    /// TOML run configuration (or a JSON config / report to rerun).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true, env = "REPEAT_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Explain one image.
    Explain {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        run: RunFlags,
    },
    /// Evaluate uncertainty maps over corpora.
    Eval {
        #[command(subcommand)]
        task: EvalTask,
    },
    /// Write a synthetic corpus as raw tensors plus a manifest.
    Synth {
        #[arg(long)]
        kind: CorpusKind,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 64)]
        height: usize,
        #[arg(long, default_value_t = 64)]
        width: usize,
        #[arg(long, default_value_t = 1)]
        channels: usize,
    },
    /// Print all four thresholds of one map and their foreground fractions.
    ThresholdDemo {
        /// A single-channel raw map, or an image explained by one base run.
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        run: RunFlags,
    },
}

#[derive(Subcommand)]
enum EvalTask {
    Ood {
        #[arg(long = "in")]
        in_dir: Option<PathBuf>,
        #[arg(long)]
        ood: Option<PathBuf>,
        #[arg(long)]
        method: Option<UncertaintyMethod>,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        histogram: Option<PathBuf>,
        #[command(flatten)]
        run: RunFlags,
    },
    Sanity {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        rand_seed: Option<u64>,
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        run: RunFlags,
    },
    Complexity {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        method: Option<UncertaintyMethod>,
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        run: RunFlags,
    },
}

/// Overrides of config-file values.
#[derive(Args)]
struct RunFlags {
    #[arg(long)]
    encoder: Option<EncoderKind>,
    #[arg(long)]
    init: Option<WeightInit>,
    #[arg(long)]
    encoder_seed: Option<u64>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    base: Option<BaseKind>,
    /// Number of realizations.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    threshold: Option<ThresholdMethod>,
    #[arg(long)]
    seed: Option<u64>,
    /// Masks per RELAX map.
    #[arg(long)]
    masks: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
}

impl RunFlags {
    fn apply(&self, cfg: &mut RunConfig) {
        fn set<T: Copy>(dst: &mut T, src: Option<T>) {
            if let Some(v) = src {
                *dst = v;
            }
        }
        set(&mut cfg.encoder.kind, self.encoder);
        set(&mut cfg.encoder.init, self.init);
        set(&mut cfg.encoder.seed, self.encoder_seed);
        set(&mut cfg.encoder.dim, self.dim);
        set(&mut cfg.base.method, self.base);
        set(&mut cfg.repeat.k, self.k);
        set(&mut cfg.repeat.threshold, self.threshold);
        set(&mut cfg.repeat.seed, self.seed);
        set(&mut cfg.masks.num_masks, self.masks);
        set(&mut cfg.image.height, self.height);
        set(&mut cfg.image.width, self.width);
    }
}

fn set_path(dst: &mut PathBuf, src: Option<PathBuf>) {
    if let Some(p) = src {
        *dst = p;
    }
}

fn main() -> ExitCode {
    match try_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::FAILURE
        }
    }
}

/// The error chain on one line, skipping causes already quoted by their parent.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !out.ends_with(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
    }
    out
}

fn try_main() -> Result<()> {
    let cli = Cli::parse();
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        anyhow::ensure!(n >= 1, "--threads must be at least 1");
        pool = pool.num_threads(n);
    }
    let pool = pool.build().context("cannot start worker pool")?;
    pool.install(|| run(cli.command, &mut cfg))
}

fn run(command: Command, cfg: &mut RunConfig) -> Result<()> {
    match command {
        Command::Explain { image, out, run } => {
            run.apply(cfg);
            let s = commands::cmd_explain(cfg, &image, &out)
                .with_context(|| format!("explaining {}", image.display()))?;
            let degenerate = s.flags.iter().filter(|f| f.is_degenerate()).count();
            println!(
                "{}: {} realizations ({degenerate} degenerate), mean uncertainty {:.6}, wrote {}",
                image.display(),
                s.thresholds.len(),
                s.uncertainty.mean,
                out.display()
            );
        }
        Command::Eval { task } => eval(task, cfg)?,
        Command::Synth { kind, n, out, seed, height, width, channels } => {
            let shape = Shape::new(channels, height, width);
            let m = commands::cmd_synth(kind, n, shape, seed, &out)
                .with_context(|| format!("writing corpus to {}", out.display()))?;
            println!("wrote {} {kind} images to {}", m.entries.len(), out.display());
        }
        Command::ThresholdDemo { input, run } => {
            run.apply(cfg);
            let map = commands::demo_map(cfg, &input)?;
            print!("{}", commands::format_threshold_table(&commands::threshold_demo(&map)?));
        }
    }
    Ok(())
}

fn eval(task: EvalTask, cfg: &mut RunConfig) -> Result<()> {
    match task {
        EvalTask::Ood { in_dir, ood, method, report, histogram, run } => {
            run.apply(cfg);
            cfg.eval.in_dir = in_dir.or(cfg.eval.in_dir.take());
            cfg.eval.ood = ood.or(cfg.eval.ood.take());
            cfg.eval.method = method.unwrap_or(cfg.eval.method);
            set_path(&mut cfg.eval.report, report);
            set_path(&mut cfg.eval.histogram, histogram);
            let r = commands::cmd_eval_ood(cfg)?;
            println!(
                "ood ({}): auroc {:.4}, mean score in {:.6} / ood {:.6}",
                r.summary.method, r.summary.auroc, r.summary.mean_score_in, r.summary.mean_score_ood
            );
        }
        EvalTask::Sanity { corpus, rand_seed, report, run } => {
            run.apply(cfg);
            cfg.eval.corpus = corpus.or(cfg.eval.corpus.take());
            cfg.eval.rand_seed = rand_seed.unwrap_or(cfg.eval.rand_seed);
            set_path(&mut cfg.eval.report, report);
            let r = commands::cmd_eval_sanity(cfg)?;
            println!(
                "sanity: median eMPRT {:.4} over {} images ({} undefined)",
                r.summary.median, r.summary.n, r.summary.undefined
            );
        }
        EvalTask::Complexity { corpus, method, report, run } => {
            run.apply(cfg);
            cfg.eval.corpus = corpus.or(cfg.eval.corpus.take());
            cfg.eval.method = method.unwrap_or(cfg.eval.method);
            set_path(&mut cfg.eval.report, report);
            let r = commands::cmd_eval_complexity(cfg)?;
            println!(
                "complexity ({}): mean {:.4}, median {:.4}, bound {:.4}",
                r.summary.method, r.summary.mean, r.summary.median, r.summary.max_possible
            );
        }
    }
    Ok(())
}
