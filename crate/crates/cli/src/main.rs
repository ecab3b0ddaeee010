use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use iterefine::codec::{decode_baseline, encode, format};
use iterefine::estimator::EstimatorKind;
use iterefine::harness::{
    apply_train_setting, evaluate, load_pgm, load_pgm_dir, make_synth, report_csv, report_text, save_pgm, short_hash, sweep_csv, Checkpoint,
    ConfigFile, NamedModel,
};
use iterefine::numerics::RNG_ALGORITHM;
use iterefine::patching::Corner;
use iterefine::refinement::{psnr_vs_k_sweep, reconstruct, RefinementConfig};
use iterefine::training::{gradient_check, train, TrainConfig, GRADCHECK_TOLERANCE};
use iterefine::Error;

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

/// Block-transform image codec with a learned iterative-refinement decoder.
#[derive(Parser, Debug)]
#[command(name = "iterefine", version)]
struct Cli {
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compress a PGM image into an NQC1 file.
    Encode {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 50)]
        quality: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decode an NQC1 file with the plain inverse transform.
    DecodeBaseline {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a decoder on a directory of PGM images.
    Train(Box<TrainArgs>),
    /// Decode an NQC1 file with a trained decoder.
    Refine {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Steps per episode (defaults to the value the model was trained with).
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value = "tl")]
        corner: Corner,
        /// Stop an episode once outputs move less than this.
        #[arg(long)]
        early_stop: Option<f64>,
    },
    /// Score the baseline decoder and any models on a directory of images.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long = "model")]
        models: Vec<PathBuf>,
        #[arg(long, default_value_t = 30)]
        quality: u32,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long)]
        dataset: Option<String>,
        /// Write the CSV report here; the aligned table goes to stdout.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Dataset PSNR as a function of steps per episode.
    SweepK {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1,3,5,7,9,11")]
        k: Vec<usize>,
        #[arg(long, default_value_t = 30)]
        quality: u32,
    },
    /// Compare back-propagated gradients with finite differences.
    Gradcheck {
        #[arg(long, default_value = "delta-rnn")]
        kind: EstimatorKind,
        #[arg(long, default_value_t = 4)]
        h: usize,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 4)]
        d: usize,
        #[arg(long, default_value_t = 2)]
        batch: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write deterministic synthetic PGM images.
    MakeSynth {
        #[arg(long, default_value_t = 20)]
        count: usize,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// `key = value` settings; flags given here override them.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Per-epoch CSV log.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Leave the wall-time column out of the log.
    #[arg(long)]
    no_timing: bool,
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    h: Option<String>,
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    tied: Option<String>,
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long)]
    schedule: Option<String>,
    #[arg(long)]
    eta0: Option<String>,
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long)]
    lr_period: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    batch: Option<String>,
    /// Single quality or an inclusive `lo-hi` range.
    #[arg(long)]
    quality: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    val_fraction: Option<String>,
}

impl TrainArgs {
    fn overrides(&self) -> Vec<(&'static str, &str)> {
        [
            ("kind", &self.kind),
            ("hidden", &self.h),
            ("k", &self.k),
            ("tied", &self.tied),
            ("lambda", &self.lambda),
            ("schedule", &self.schedule),
            ("eta0", &self.eta0),
            ("gamma", &self.gamma),
            ("lr_period", &self.lr_period),
            ("epochs", &self.epochs),
            ("batch", &self.batch),
            ("quality", &self.quality),
            ("seed", &self.seed),
            ("val_fraction", &self.val_fraction),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.as_deref().map(|v| (k, v)))
        .collect()
    }
}

/// Failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Data { .. } | Error::Io { .. } => EXIT_DATA,
            Error::Numeric(_) => EXIT_NUMERIC,
            Error::Shape { .. } | Error::Param(_) | Error::Config(_) | Error::State(_) => EXIT_USAGE,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    fs::write(path, bytes).map_err(|e| {
        Error::Io {
            path: path.into(),
            source: e,
        }
        .into()
    })
}

fn load_model(path: &Path) -> Result<NamedModel, Failure> {
    let ck = Checkpoint::<f64>::load(path)?;
    let name = path.file_stem().map_or_else(|| "model".into(), |s| s.to_string_lossy().into_owned());
    Ok(NamedModel { name, params: ck.params })
}

fn load_dataset(dir: &Path) -> Result<Vec<(String, iterefine::image::GrayImage)>, Failure> {
    let images = load_pgm_dir(dir)?;
    if images.is_empty() {
        return Err(Error::Data {
            message: format!("no .pgm images in {}", dir.display()),
            offset: None,
        }
        .into());
    }
    Ok(images)
}

fn run_train(args: &TrainArgs) -> Result<(), Failure> {
    let mut cfg = TrainConfig::default();
    let file = match &args.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    for (k, v) in file.entries.iter().map(|(k, v)| (k.as_str(), v.as_str())).chain(args.overrides()) {
        if !apply_train_setting(&mut cfg, k, v)? {
            return Err(Error::Config(format!("unknown training option '{k}'")).into());
        }
    }
    let images: Vec<_> = load_dataset(&args.data)?.into_iter().map(|(_, img)| img).collect();
    let outcome = train::<f64>(&images, &cfg)?;
    let mut ck = Checkpoint::new(outcome.params)
        .with_meta("config_hash", cfg.config_hash())
        .with_meta("rng", RNG_ALGORITHM);
    for (k, v) in cfg.to_kv() {
        ck = ck.with_meta(k, v);
    }
    ck.save(&args.out)?;
    let csv = outcome.log.to_csv(!args.no_timing);
    match &args.log {
        Some(p) => write_file(p, csv.as_bytes())?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Encode { input, quality, out } => {
            let coded = encode(&load_pgm(&input)?, quality)?;
            format::write(&coded, &out)?;
            println!("{:.6}", coded.estimated_bpp);
        }
        Command::DecodeBaseline { input, out } => {
            save_pgm(&decode_baseline(&format::read(&input)?)?, &out)?;
        }
        Command::Train(args) => run_train(&args)?,
        Command::Refine {
            model,
            input,
            out,
            k,
            corner,
            early_stop,
        } => {
            let ck = Checkpoint::<f64>::load(&model)?;
            let k = match k {
                Some(k) => k,
                None => ck.meta("k").and_then(|v| v.parse().ok()).unwrap_or(3),
            };
            let cfg = RefinementConfig::for_params(&ck.params, k)
                .with_corner(corner)
                .with_early_stop(early_stop);
            let refined = reconstruct(&format::read(&input)?, &ck.params, &cfg)?;
            save_pgm(&refined.to_gray_image(), &out)?;
        }
        Command::Eval {
            data,
            models,
            quality,
            k,
            dataset,
            csv,
        } => {
            let images = load_dataset(&data)?;
            let named = models.iter().map(|p| load_model(p)).collect::<Result<Vec<_>, _>>()?;
            let dataset = dataset.unwrap_or_else(|| data.file_name().map_or_else(|| "data".into(), |s| s.to_string_lossy().into_owned()));
            let rows = evaluate(&named, &images, &dataset, quality, k)?;
            let models_desc: Vec<String> = models
                .iter()
                .map(|p| {
                    let ck = Checkpoint::<f64>::load(p)?;
                    Ok(format!(
                        "{}:{}:{}",
                        p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
                        ck.meta("config_hash").unwrap_or("-"),
                        ck.meta("seed").unwrap_or("-")
                    ))
                })
                .collect::<Result<_, Failure>>()?;
            let settings = format!("dataset={dataset} quality={quality} k={k} models={}", models_desc.join(";"));
            let provenance = format!("iterefine report config_hash={} {settings}", short_hash(settings.as_bytes()));
            print!("{}", report_text(&rows));
            if let Some(p) = csv {
                write_file(&p, report_csv(&rows, &provenance).as_bytes())?;
            }
        }
        Command::SweepK { model, data, k, quality } => {
            let ck = Checkpoint::<f64>::load(&model)?;
            let pairs = load_dataset(&data)?
                .into_iter()
                .map(|(_, img)| encode(&img, quality).map(|c| (img, c)))
                .collect::<Result<Vec<_>, _>>()?;
            let base = RefinementConfig::for_params(&ck.params, 1);
            let points = psnr_vs_k_sweep(&pairs, &ck.params, &base, &k)?;
            let settings = format!(
                "quality={quality} model_config_hash={} seed={}",
                ck.meta("config_hash").unwrap_or("-"),
                ck.meta("seed").unwrap_or("-")
            );
            print!("{}", sweep_csv(&points, &format!("iterefine sweep {settings}")));
        }
        Command::Gradcheck { kind, h, k, d, batch, seed } => {
            let report = gradient_check(kind, h, d, k, batch, seed)?;
            println!("{:e}", report.max_rel_error);
            if !report.passed(GRADCHECK_TOLERANCE) {
                return Err(Failure {
                    code: EXIT_NUMERIC,
                    message: format!(
                        "gradient check failed: relative error {:e} in {}[{}] exceeds {GRADCHECK_TOLERANCE:e}",
                        report.max_rel_error, report.worst_tensor, report.worst_index
                    ),
                });
            }
        }
        Command::MakeSynth { count, size, seed, out } => {
            for p in make_synth(count, size, seed, &out)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    env_logger::Builder::new()
        .filter_level(if cli.verbose { log::LevelFilter::Info } else { log::LevelFilter::Warn })
        .parse_default_env()
        .init();
    match run(cli) {
        Ok(()) => {
            let _ = std::io::stdout().flush();
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
