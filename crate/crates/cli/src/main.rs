use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use cmrf::eval::KldReference;
use cmrf::experiment::{
    coefficient_csv, kld_reference, log_partition, score_model, score_row, write_report,
    ExperimentConfig, PartitionMode, TRIAL_HEADER,
};
use cmrf::learn::{fit, load_model, recover_coefficients, save_model, LearnedModel};
use cmrf::sample::mh_sample;
use cmrf::{load_dataset, save_dataset, BasisKind};

/// Learn continuous pairwise Markov random fields and reproduce the order-selection experiments.
#[derive(Parser, Debug)]
#[command(name = "cmrf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw a dataset from the generative model.
    Sample {
        #[command(flatten)]
        common: Common,
        /// Output CSV (default: <output-dir>/samples.csv).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit one model; writes model.txt, score.csv and coefficients.csv.
    Fit {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(short = 'K', long = "K")]
        k: usize,
        /// Also score the KL divergence from the generative model.
        #[arg(long)]
        with_kld: bool,
    },
    /// Score a saved model on a dataset; writes score.csv.
    Score {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// KL divergence per node from the generative model to a saved model; writes kld.csv.
    Kld {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
    },
    /// Sample, fit and score over trials and orders; writes trials.csv and aggregate.csv.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
}

/// Overrides applied on top of the config file (or the defaults).
#[derive(Args, Debug)]
struct Common {
    /// TOML experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, env = "CMRF_OUTPUT_DIR")]
    output_dir: Option<PathBuf>,
    /// `chain:<n>`, `grid:<r>x<c>` or `edges:<n>:<i>-<j>,...`.
    #[arg(long)]
    graph: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    lo: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    hi: Option<f64>,
    #[arg(long)]
    basis: Option<BasisKind>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Sample count `N`.
    #[arg(short = 'N', long = "N")]
    samples: Option<usize>,
    /// Comma separated orders, e.g. `0,1,2`.
    #[arg(long = "K-list", value_delimiter = ',')]
    k_list: Option<Vec<usize>>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    thinning: Option<usize>,
    #[arg(long)]
    negate_generative_energy: bool,
    /// Monte Carlo sample count for `ln Z`.
    #[arg(short = 'M', long = "M")]
    mc_samples: Option<usize>,
    /// `auto`, `mc` or `exact`.
    #[arg(long)]
    partition: Option<PartitionMode>,
    #[arg(long)]
    exact_grid: Option<usize>,
    #[arg(long)]
    kld: Option<bool>,
    #[arg(long)]
    kld_samples: Option<usize>,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| cmrf::Error::io(path, e))?;
                toml::from_str(&text)
                    .map_err(|e| ConfigError(format!("{}: {e}", path.display())))?
            }
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($src:expr, $dst:expr) => {
                if let Some(v) = $src.clone() {
                    $dst = v;
                }
            };
        }
        set!(self.graph, cfg.graph.shape);
        set!(self.lo, cfg.domain.lo);
        set!(self.hi, cfg.domain.hi);
        set!(self.basis, cfg.domain.basis);
        set!(self.seed, cfg.seed);
        set!(self.trials, cfg.trials);
        set!(self.samples, cfg.samples);
        set!(self.k_list, cfg.k_list);
        set!(self.epsilon, cfg.epsilon);
        set!(self.burn_in, cfg.sampler.burn_in);
        set!(self.thinning, cfg.sampler.thinning);
        set!(self.mc_samples, cfg.eval.mc_samples);
        set!(self.partition, cfg.eval.partition);
        set!(self.exact_grid, cfg.eval.exact_grid);
        set!(self.kld, cfg.eval.kld);
        set!(self.kld_samples, cfg.eval.kld_samples);
        if self.negate_generative_energy {
            cfg.sampler.negate_generative_energy = true;
        }
        if self.output_dir.is_some() {
            cfg.output_dir = self.output_dir.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug)]
struct ConfigError(String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "invalid config {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn output_dir(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let dir = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).map_err(|e| cmrf::Error::io(&dir, e))?;
    Ok(dir)
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| cmrf::Error::io(path, e))?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn check_model(cfg: &ExperimentConfig, model: &LearnedModel<f64>) -> Result<()> {
    let graph = cfg.graph()?;
    if model.graph() != &graph || model.interval() != cfg.interval()? {
        return Err(cmrf::Error::invalid(format!(
            "model is on {} over [{}, {}] but the config gives {} over [{}, {}]",
            model.graph().shape(),
            model.interval().lo,
            model.interval().hi,
            graph.shape(),
            cfg.domain.lo,
            cfg.domain.hi
        ))
        .into());
    }
    Ok(())
}

/// Config for a saved model: graph and interval default to the model's own.
fn config_for_model(common: &Common, model: &LearnedModel<f64>) -> Result<ExperimentConfig> {
    let mut cfg = common.resolve()?;
    if common.graph.is_none() && common.config.is_none() {
        cfg.graph.shape = model.graph().shape().to_string();
    }
    if common.config.is_none() {
        if common.lo.is_none() {
            cfg.domain.lo = model.interval().lo;
        }
        if common.hi.is_none() {
            cfg.domain.hi = model.interval().hi;
        }
    }
    cfg.validate()?;
    check_model(&cfg, model)?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Sample { common, out } => {
            let cfg = common.resolve()?;
            let gen = cfg.generative::<f64>()?;
            let data = mh_sample(&gen, cfg.samples, &cfg.sampler(cfg.data_seed(0)))?;
            let path = match out {
                Some(p) => p,
                None => output_dir(&cfg)?.join("samples.csv"),
            };
            save_dataset(&data, &path)?;
            eprintln!("wrote {}", path.display());
        }
        Command::Fit {
            common,
            data,
            k,
            with_kld,
        } => {
            let cfg = common.resolve()?;
            let dataset = load_dataset(&data, cfg.interval::<f64>()?)?;
            let graph = cfg.graph()?;
            if dataset.n() != graph.n() {
                return Err(cmrf::Error::invalid(format!(
                    "{} has {} columns but the graph has {} nodes",
                    data.display(),
                    dataset.n(),
                    graph.n()
                ))
                .into());
            }
            if k > cfg.domain.max_order {
                return Err(cmrf::Error::invalid(format!(
                    "K = {k} exceeds max_order {}",
                    cfg.domain.max_order
                ))
                .into());
            }
            let model = fit(&dataset, &graph, &cfg.basis()?, k, cfg.epsilon)?;
            let reference = if with_kld {
                Some(kld_reference::<f64>(&cfg)?)
            } else {
                None
            };
            let score = score_model(
                &model,
                &dataset,
                &cfg.eval,
                cfg.mc_seed(0),
                reference.as_ref(),
            )?;
            let coeffs = recover_coefficients(&model)?;
            let dir = output_dir(&cfg)?;
            let model_path = dir.join("model.txt");
            save_model(&model, &model_path)?;
            eprintln!("wrote {}", model_path.display());
            write(
                &dir.join("score.csv"),
                &format!("{TRIAL_HEADER}\n{}\n", score_row(0, &score)),
            )?;
            write(&dir.join("coefficients.csv"), &coefficient_csv(&coeffs))?;
        }
        Command::Score {
            common,
            model,
            data,
        } => {
            let model: LearnedModel<f64> = load_model(&model)?;
            let cfg = config_for_model(&common, &model)?;
            let dataset = load_dataset(&data, model.interval())?;
            let score = score_model(&model, &dataset, &cfg.eval, cfg.mc_seed(0), None)?;
            let dir = output_dir(&cfg)?;
            write(
                &dir.join("score.csv"),
                &format!("{TRIAL_HEADER}\n{}\n", score_row(0, &score)),
            )?;
        }
        Command::Kld { common, model } => {
            let model: LearnedModel<f64> = load_model(&model)?;
            let cfg = config_for_model(&common, &model)?;
            let reference: KldReference<f64> = kld_reference(&cfg)?;
            let (log_z, _) = log_partition(&model, &cfg.eval, cfg.mc_seed(0))?;
            let kld = reference.kld(&model, log_z)?;
            let gen_z = reference.log_z();
            let dir = output_dir(&cfg)?;
            write(
                &dir.join("kld.csv"),
                &format!(
                    "K,kld,kld_se,lnZ,lnZ_se,lnZ_gen,lnZ_gen_se,seed\n{},{},{},{},{},{},{},{}\n",
                    model.k(),
                    kld.value,
                    kld.se,
                    log_z.value,
                    log_z.se,
                    gen_z.value,
                    gen_z.se,
                    cfg.seed
                ),
            )?;
        }
        Command::Sweep { common } => {
            let cfg = common.resolve()?;
            let report = cmrf::experiment::run_sweep::<f64>(&cfg)?;
            for (trial, reason) in &report.failures {
                eprintln!("trial {trial} aborted: {reason}");
            }
            let (trials, agg) = write_report(&report, &output_dir(&cfg)?)?;
            eprintln!("wrote {}", trials.display());
            eprintln!("wrote {}", agg.display());
            if let Some(k) = report.modal_aic_argmin() {
                eprintln!("modal AIC argmin: K = {k}");
            }
        }
    }
    Ok(())
}

/// 2 for I/O problems, 3 for invalid input or config, 1 otherwise.
fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(e) = err.downcast_ref::<cmrf::Error>() {
        return match e {
            cmrf::Error::Io { .. } => 2,
            cmrf::Error::Numeric(_) => 1,
            _ => 3,
        };
    }
    if err.downcast_ref::<ConfigError>().is_some() {
        return 3;
    }
    if err.downcast_ref::<std::io::Error>().is_some() {
        return 2;
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
