use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use hwr_core::dataset::{ImageFormat, InventoryRules, Manifest, SplitSizes, MANIFEST_FILE};
use hwr_core::features::{extract_features, FeatureConfig, WeightMode};
use hwr_core::harness::{self, load_bundle, ExperimentConfig, Mode};
use hwr_core::oracle::{synthetic_corpus, write_synthetic_corpus};
use hwr_core::{BinaryImage, Recognizer};

#[derive(Parser)]
#[command(
    name = "hwr",
    version,
    about = "Handwritten character recognition with implicit segmentation"
)]
struct Cli {
    /// Repeat for more detail (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract features for every grid (w, h) into the cache.
    Extract(ExperimentArgs),
    /// Train one recognizer at the first grid point.
    Train(ExperimentArgs),
    /// Recognize a single image.
    Recognize(RecognizeArgs),
    /// Score a trained recognizer on the test split.
    Evaluate {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long)]
        bundle: PathBuf,
    },
    /// Train and test monolithic and decomposed models on the same split.
    CompareModes(ExperimentArgs),
    /// Accuracy against the number of training samples per character.
    LearningCurve {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long, value_delimiter = ',', default_value = "5,10,15")]
        n_train: Vec<usize>,
        /// Dataset root with extra samples per character.
        #[arg(long)]
        supplementary: Option<PathBuf>,
    },
    /// Cross-validated grid search, then a final test.
    Grid(ExperimentArgs),
    /// Write a synthetic corpus of composed glyphs with known boundaries.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 25)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = -1, allow_hyphen_values = true)]
        jitter_min: i32,
        #[arg(long, default_value_t = 3)]
        jitter_max: i32,
    },
    /// Write a manifest listing the subdirectories of a dataset root.
    InitManifest {
        #[arg(long)]
        root: PathBuf,
        #[arg(long, value_enum, default_value_t = FormatArg::Png)]
        format: FormatArg,
        #[arg(long, default_value_t = 25)]
        samples: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Png,
    Pnm,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Monolithic,
    Decomposed,
}

#[derive(Clone, Copy, ValueEnum)]
enum WeightArg {
    Unit,
    Magnitude,
}

#[derive(Clone, Copy, ValueEnum)]
enum InventoryArg {
    /// 13 vowels, 272 bases, 5 modifiers, 10 numerals, 569 entries.
    Kannada,
    /// Any well-formed schema.
    Any,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Dataset root containing manifest.tsv.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = InventoryArg::Kannada)]
    inventory: InventoryArg,
    #[arg(long, value_enum)]
    mode: ModeArg,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Window widths in pixels.
    #[arg(
        short = 'w',
        long = "window",
        value_delimiter = ',',
        default_value = "8"
    )]
    window: Vec<usize>,
    /// Cells per window.
    #[arg(long = "cells", value_delimiter = ',', default_value = "8")]
    cells: Vec<usize>,
    /// States per model.
    #[arg(
        short = 'S',
        long = "states",
        value_delimiter = ',',
        default_value = "10"
    )]
    states: Vec<usize>,
    /// Gaussian components per state (powers of two).
    #[arg(
        short = 'G',
        long = "mixtures",
        value_delimiter = ',',
        default_value = "4"
    )]
    mixtures: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    bins: usize,
    #[arg(long, value_enum, default_value_t = WeightArg::Unit)]
    weight: WeightArg,
    #[arg(long, default_value_t = 1)]
    stride: usize,
    #[arg(long, default_value_t = 64)]
    height: usize,
    /// Re-estimation sweeps per mixture level.
    #[arg(long, default_value_t = 2)]
    iterations: usize,
    /// Samples per character as train/validation/test.
    #[arg(long, default_value = "15/5/5", value_parser = parse_split)]
    split: SplitSizes,
    #[arg(long, default_value_t = 4)]
    folds: usize,
    #[arg(long)]
    no_cache: bool,
    /// Record wall-clock seconds in the metrics file.
    #[arg(long)]
    timing: bool,
}

fn parse_split(s: &str) -> Result<SplitSizes, String> {
    let parts: Vec<usize> = s
        .split('/')
        .map(|p| p.trim().parse().map_err(|_| format!("bad split `{s}`")))
        .collect::<Result<_, _>>()?;
    match parts.as_slice() {
        [a, b, c] => Ok(SplitSizes::new(*a, *b, *c)),
        _ => Err(format!("expected train/validation/test, got `{s}`")),
    }
}

impl ExperimentArgs {
    fn config(&self) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(&self.data, &self.out);
        cfg.schema_path = self.schema.clone();
        cfg.inventory = match self.inventory {
            InventoryArg::Kannada => Some(InventoryRules::kannada()),
            InventoryArg::Any => None,
        };
        cfg.base_features = FeatureConfig {
            bins: self.bins,
            weight_mode: match self.weight {
                WeightArg::Unit => WeightMode::Unit,
                WeightArg::Magnitude => WeightMode::Magnitude,
            },
            stride: self.stride,
            standard_height: self.height,
            ..FeatureConfig::default()
        };
        cfg.window_widths = self.window.clone();
        cfg.cell_counts = self.cells.clone();
        cfg.state_counts = self.states.clone();
        cfg.mixture_counts = self.mixtures.clone();
        cfg.iterations_per_level = self.iterations;
        cfg.split = self.split;
        cfg.n_folds = self.folds;
        cfg.mode = match self.mode {
            ModeArg::Monolithic => Mode::Monolithic,
            ModeArg::Decomposed => Mode::Decomposed,
        };
        cfg.seed = self.seed;
        cfg.cache_features = !self.no_cache;
        cfg.record_timing = self.timing;
        cfg
    }
}

#[derive(Args)]
struct RecognizeArgs {
    #[arg(long)]
    bundle: PathBuf,
    #[arg(long)]
    image: PathBuf,
    #[arg(long, default_value_t = 5)]
    n_best: usize,
    /// `text` prints one field per line; `tsv` prints a single record.
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    format: OutputFormat,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutputFormat {
    Text,
    Tsv,
}

fn recognize(args: &RecognizeArgs) -> Result<()> {
    let bundle = load_bundle(&args.bundle)?;
    let image = BinaryImage::load(&args.image)?;
    let obs = extract_features(&image, &bundle.features)
        .with_context(|| format!("extracting features from {}", args.image.display()))?;
    let rec = Recognizer::new(&bundle.models, &bundle.lexicon)?;
    let r = rec.recognize(&obs, args.n_best)?;
    let bounds: Vec<String> = r.boundaries.iter().map(usize::to_string).collect();
    match args.format {
        OutputFormat::Text => {
            println!("character\t{}", r.character_id);
            println!("log_likelihood\t{:.6}", r.log_likelihood);
            println!("frames\t{}", obs.len());
            println!("boundaries\t{}", bounds.join(","));
            for (rank, (id, score)) in r.n_best.iter().enumerate() {
                println!("n_best\t{}\t{id}\t{score:.6}", rank + 1);
            }
        }
        OutputFormat::Tsv => {
            let alts: Vec<String> = r
                .n_best
                .iter()
                .map(|(id, s)| format!("{id}:{s:.6}"))
                .collect();
            println!(
                "{}\t{}\t{:.6}\t{}\t{}",
                args.image.display(),
                r.character_id,
                r.log_likelihood,
                bounds.join(","),
                alts.join(";")
            );
        }
    }
    Ok(())
}

fn print_file(path: &Path) -> Result<()> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    print!("{text}");
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Extract(exp) => {
            let cfg = exp.config();
            if exp.no_cache {
                bail!("extract writes the feature cache; drop --no-cache");
            }
            let corpus = harness::load_corpus(&cfg)?;
            let tables = harness::extract_grid(&cfg, &corpus)?;
            let frames: usize = tables
                .iter()
                .flat_map(|t| t.sequences.iter().flatten())
                .map(|s| s.len())
                .sum();
            println!(
                "cached {} feature configurations, {frames} frames, under {}",
                tables.len(),
                cfg.out_dir.join("cache").display()
            );
        }
        Command::Train(exp) => {
            let cfg = exp.config();
            let corpus = harness::load_corpus(&cfg)?;
            let bundle = harness::train_bundle(&cfg, &corpus)?;
            println!(
                "trained {} class models for {} characters; wrote {}",
                bundle.models.len(),
                bundle.lexicon.len(),
                cfg.out_dir.join("model.bundle").display()
            );
        }
        Command::Recognize(args) => recognize(&args)?,
        Command::Evaluate { exp, bundle } => {
            let cfg = exp.config();
            let corpus = harness::load_corpus(&cfg)?;
            let bundle = load_bundle(&bundle)?;
            let m = harness::evaluate_bundle(&cfg, &corpus, &bundle)?;
            println!(
                "test accuracy {:.2}% ({}/{})",
                100.0 * m.accuracy,
                m.correct,
                m.total
            );
        }
        Command::CompareModes(exp) => {
            let mut cfg = exp.config();
            if exp.split == SplitSizes::standard() {
                cfg.split = SplitSizes::comparison();
            }
            harness::compare_modes(&cfg)?;
            print_file(&cfg.out_dir.join("comparison.txt"))?;
        }
        Command::LearningCurve {
            exp,
            n_train,
            supplementary,
        } => {
            let mut cfg = exp.config();
            cfg.supplementary_root = supplementary;
            harness::learning_curve(&cfg, &n_train)?;
            print_file(&cfg.out_dir.join("summary.txt"))?;
        }
        Command::Grid(exp) => {
            let cfg = exp.config();
            harness::run_experiment(&cfg)?;
            print_file(&cfg.out_dir.join("summary.txt"))?;
        }
        Command::Synth {
            out,
            samples,
            seed,
            jitter_min,
            jitter_max,
        } => {
            if jitter_min > jitter_max {
                bail!("--jitter-min exceeds --jitter-max");
            }
            let corpus = synthetic_corpus(samples, jitter_min..=jitter_max, seed);
            write_synthetic_corpus(&out, &corpus)?;
            println!(
                "wrote {} characters x {samples} samples to {}",
                corpus.dataset.groups.len(),
                out.display()
            );
        }
        Command::InitManifest {
            root,
            format,
            samples,
        } => {
            let fmt = match format {
                FormatArg::Png => ImageFormat::Png,
                FormatArg::Pnm => ImageFormat::Pnm,
            };
            let manifest = Manifest::discover(&root, fmt, samples)?;
            let path = root.join(MANIFEST_FILE);
            std::fs::write(&path, manifest.to_text())
                .with_context(|| format!("writing {}", path.display()))?;
            info!("{} characters", manifest.characters.len());
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
