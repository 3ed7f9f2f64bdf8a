//! Command-line front end. Every failure ends in a single stderr line
//! `error: kind=<kind> msg=<message>` and a nonzero exit code.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use super::config::{parse_config, RunConfig};
use super::pipeline::{run_baseline, run_compare, run_eval, run_train, Paradigm};
use super::verify::{gradcheck_suite, TOLERANCE};
use crate::error::{Error, Result};
use crate::taggraph::{write_synthetic, SynthConfig};

#[derive(Parser, Debug)]
#[command(name = "glem", version, about = "EM co-training of a text classifier and a graph network")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic text-attributed graph.
    GenSynth(GenSynthArgs),
    /// Pretrain both modules and run the EM alternation.
    Train(RunArgs),
    /// Train one comparison paradigm.
    TrainBaseline {
        #[arg(long, value_enum)]
        paradigm: ParadigmArg,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Evaluate a checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Also evaluate with every test-node edge removed.
        #[arg(long)]
        structure_free: bool,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every paradigm and GLEM; write compare.csv.
    Compare(RunArgs),
    /// Finite-difference check of every loss.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ParadigmArg {
    LmFt,
    Static,
    Joint,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides `out_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dataset directory; overrides the config's data source.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Comma-separated seeds; overrides the config.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
}

impl RunArgs {
    fn resolve(&self) -> Result<(RunConfig, PathBuf)> {
        let mut cfg = match &self.config {
            Some(p) => parse_config(p)?,
            None => RunConfig::default(),
        };
        if let Some(d) = &self.data {
            cfg.data.dir = Some(d.clone());
            cfg.data.synthetic = None;
        }
        if let Some(s) = &self.seeds {
            cfg.seeds = s.clone();
        }
        if let Some(o) = &self.out {
            cfg.out_dir = o.clone();
        }
        cfg.validate()?;
        let out = cfg.out_dir.clone();
        Ok((cfg, out))
    }
}

#[derive(Args, Debug)]
struct GenSynthArgs {
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    vocab: Option<usize>,
    #[arg(long)]
    text_len: Option<usize>,
    #[arg(long)]
    signal_ratio: Option<f64>,
    #[arg(long)]
    p_in: Option<f64>,
    #[arg(long)]
    p_out: Option<f64>,
    #[arg(long)]
    train_frac: Option<f64>,
    #[arg(long)]
    val_frac: Option<f64>,
    #[arg(long)]
    test_frac: Option<f64>,
    #[arg(long)]
    allow_heterophily: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

impl GenSynthArgs {
    fn to_config(&self) -> SynthConfig {
        let d = SynthConfig::default();
        SynthConfig {
            nodes: self.nodes.unwrap_or(d.nodes),
            classes: self.classes.unwrap_or(d.classes),
            vocab: self.vocab.unwrap_or(d.vocab),
            text_len: self.text_len.unwrap_or(d.text_len),
            signal_ratio: self.signal_ratio.unwrap_or(d.signal_ratio),
            p_in: self.p_in.unwrap_or(d.p_in),
            p_out: self.p_out.unwrap_or(d.p_out),
            train_frac: self.train_frac.unwrap_or(d.train_frac),
            val_frac: self.val_frac.unwrap_or(d.val_frac),
            test_frac: self.test_frac.unwrap_or(d.test_frac),
            seed: self.seed.unwrap_or(d.seed),
            allow_heterophily: self.allow_heterophily || d.allow_heterophily,
        }
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.4}")
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::GenSynth(a) => {
            let cfg = a.to_config();
            let g = write_synthetic(&cfg, &a.out)?;
            println!(
                "wrote {} nodes={} edges={} classes={}",
                a.out.display(),
                g.num_nodes(),
                g.num_edges(),
                g.num_classes()
            );
        }
        Command::Train(a) => {
            let (cfg, out) = a.resolve()?;
            for s in run_train(&cfg, &out)? {
                println!(
                    "seed={} first={} best_iter={} lm_test={} gnn_test={} checkpoint={}",
                    s.seed,
                    s.first_phase,
                    s.best_iter,
                    fmt(s.lm[2]),
                    fmt(s.gnn[2]),
                    s.checkpoint.display()
                );
            }
        }
        Command::TrainBaseline { paradigm, run } => {
            let (cfg, out) = run.resolve()?;
            let p = match paradigm {
                ParadigmArg::LmFt => Paradigm::LmFt,
                ParadigmArg::Static => Paradigm::Static,
                ParadigmArg::Joint => Paradigm::Joint,
            };
            for s in run_baseline(&cfg, p, &out)? {
                println!(
                    "paradigm={} seed={} test_acc={} checkpoint={}",
                    p.as_str(),
                    s.seed,
                    fmt(s.test_acc),
                    s.checkpoint.display()
                );
            }
        }
        Command::Eval {
            checkpoint,
            structure_free,
            config,
            out,
        } => {
            let cfg = config.as_deref().map(parse_config).transpose()?;
            let report = run_eval(&checkpoint, cfg.as_ref(), structure_free, &out)?;
            for r in &report.rows {
                println!(
                    "model={} features={} with_struct={} without_struct={} diff={}",
                    r.model,
                    r.features,
                    fmt(r.with_struct),
                    fmt(r.without_struct),
                    fmt(r.diff)
                );
            }
        }
        Command::Compare(a) => {
            let (cfg, out) = a.resolve()?;
            let rows = run_compare(&cfg, &out)?;
            for r in rows {
                println!("{},{},{}", r.paradigm, r.metric, super::metrics::sig6(r.value));
            }
        }
        Command::Gradcheck { trials, seed } => {
            let results = gradcheck_suite(trials, seed)?;
            let mut worst: f64 = 0.0;
            for r in &results {
                println!("loss={} trials={} max_rel_err={:.3e}", r.loss, r.trials, r.max_rel_err);
                worst = worst.max(r.max_rel_err);
            }
            println!("max relative error {worst:.3e} (tolerance {TOLERANCE:.0e})");
            if worst >= TOLERANCE {
                return Err(Error::Invalid(format!("gradient check failed: {worst:.3e}")));
            }
        }
    }
    Ok(())
}

fn error_line(kind: &str, msg: &str) -> String {
    let one_line = msg.split_whitespace().collect::<Vec<_>>().join(" ");
    format!("error: kind={kind} msg={one_line}")
}

/// Parses `argv` (program name first) and runs the subcommand. Returns the
/// process exit code.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let first = e.to_string();
            let first = first.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("{}", error_line("usage", first));
            return 2;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", error_line(e.kind(), &e.to_string()));
            1
        }
    }
}

