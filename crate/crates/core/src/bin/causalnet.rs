use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cate_core::datagen::{read_dataset, write_dataset, GeneratorKind};
use cate_core::error::{Error, Result};
use cate_core::eval::{mse_cate, relative_mse, scatter_export_as};
use cate_core::harness::appendix::{run_appendix, traces_csv, ToyConfig};
use cate_core::harness::gradsuite::{gradient_suite, GRADCHECK_TOLERANCE};
use cate_core::harness::{fit_method, parse_list, sweep_with_outcome, write_atomic, ExperimentConfig, Experiment, Fitted, Method};

#[derive(Parser)]
#[command(name = "causalnet", version, about = "Treatment effect estimation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ExperimentArgs {
    /// `key = value` configuration file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Training sizes, comma separated.
    #[arg(long)]
    grid: Option<String>,
    /// Methods, comma separated: causalnet, s-forest, t-forest, adj, adj-interaction.
    #[arg(long)]
    methods: Option<String>,
    #[arg(long)]
    generator: Option<GeneratorKind>,
    /// Use the full grid 2000..10000 and test size 10000.
    #[arg(long)]
    full_scale: bool,
    #[arg(long)]
    jobs: Option<usize>,
}

impl ExperimentArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::from_file(p)?,
            None => ExperimentConfig::new(GeneratorKind::CircleNoiseless),
        };
        if let Some(kind) = self.generator {
            cfg.set("generator", kind.name())?;
        }
        if self.full_scale {
            cfg = cfg.full_scale();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out_dir = o.clone();
        }
        if let Some(g) = &self.grid {
            cfg.grid = parse_list(g)?;
        }
        if let Some(m) = &self.methods {
            cfg.methods = parse_list(m)?;
        }
        if let Some(j) = self.jobs {
            cfg.jobs = j;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write a simulated dataset, hidden truth included, to a file.
    Generate {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Record count.
        #[arg(long)]
        n: usize,
        /// Output file.
        #[arg(long)]
        file: PathBuf,
    },
    /// Fit one method on a dataset file and save the model.
    Train {
        #[arg(long)]
        method: Method,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Configuration file for hyperparameter overrides.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Score a saved model against a dataset's hidden truth.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Optional scatter export of true against estimated effects.
        #[arg(long)]
        scatter: Option<PathBuf>,
    },
    /// Run the resumable sweep over methods and training sizes.
    Sweep {
        #[command(flatten)]
        exp: ExperimentArgs,
    },
    /// Finite-difference gradient checks of every primitive and network.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        seeds: usize,
    },
    /// Toy-network studies on the nine-dimensional generators.
    Appendix {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "appendix")]
        out: PathBuf,
        #[arg(long)]
        iterations: Option<usize>,
    },
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Generate { exp, n, file } => {
            if n == 0 {
                return Err(Error::Config("dataset size must be at least 1".into()));
            }
            let mut cfg = exp.resolve()?;
            cfg.test_size = 2;
            let data = Experiment::new(&cfg)?.train_set(n, 0)?;
            write_dataset(&data, &file)?;
            println!("wrote {n} records to {}", file.display());
        }
        Command::Train {
            method,
            data,
            model,
            seed,
            config,
        } => {
            let overrides = match config {
                Some(p) => ExperimentConfig::from_file(&p)?.overrides,
                None => Default::default(),
            };
            let d = read_dataset(&data)?;
            let fitted = fit_method(method, d.observed(), d.kind, &overrides, seed)?;
            fitted.save(&model)?;
            println!("saved {method} model to {}", model.display());
        }
        Command::Evaluate { model, data, scatter } => {
            let fitted = Fitted::load(&model)?;
            let d = read_dataset(&data)?;
            let est = fitted.cates(d.observed())?;
            let tau = &d.truth().tau;
            let mse = mse_cate(&est, tau)?;
            match relative_mse(&est, tau) {
                Ok(rel) => println!("method={} n={} mse={mse} relative_mse={rel}", fitted.method(), d.len()),
                Err(_) => println!("method={} n={} mse={mse} relative_mse=undefined", fitted.method(), d.len()),
            }
            if let Some(p) = scatter {
                let target = if d.kind.tau_is_substitute() { "tau_substitute" } else { "true_tau" };
                scatter_export_as(&est, tau, target, &p)?;
            }
        }
        Command::Sweep { exp } => {
            let cfg = exp.resolve()?;
            let out = sweep_with_outcome(&cfg)?;
            let failed = out.rows.iter().filter(|r| r.failed).count();
            println!(
                "{} cells computed, {} rows ({failed} failed) in {}; plot {}",
                out.computed.len(),
                out.rows.len(),
                out.results.display(),
                out.plot.display()
            );
        }
        Command::Gradcheck { seeds } => {
            let mut ok = true;
            for c in gradient_suite(seeds)? {
                ok &= c.passed();
                println!(
                    "{:<20} max_rel_error={:.3e} checked={} skipped_at_kink={} seeds={} {}",
                    c.name,
                    c.max_rel_error,
                    c.checked,
                    c.skipped_at_kink,
                    c.seeds,
                    if c.passed() { "ok" } else { "FAIL" }
                );
            }
            println!("tolerance {GRADCHECK_TOLERANCE:e}");
            return Ok(ok);
        }
        Command::Appendix { seed, out, iterations } => {
            let mut cfg = ToyConfig::default();
            if let Some(i) = iterations {
                cfg.iterations = i;
            }
            let studies = run_appendix(seed, &cfg)?;
            std::fs::create_dir_all(&out).map_err(|source| Error::Io { path: out.clone(), source })?;
            write_atomic(&out.join("appendix_losses.csv"), &traces_csv(&studies))?;
            for s in &studies {
                println!(
                    "{:<32} final_loss={:.4} test_loss={:.4} adjusted_regression_test_loss={:.4}",
                    s.name, s.final_loss, s.test_loss, s.baseline_test_loss
                );
            }
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
