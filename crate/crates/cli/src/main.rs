use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use recshape_core::ar_prior::{Combination, DEFAULT_ALPHA, DEFAULT_ORDER};
use recshape_core::conditional_model::{ModelConfig, Optimizer, TrainConfig, DEFAULT_EMBED_DIM, DEFAULT_HASH_SEED};
use recshape_core::pipeline::{
    evaluate_diff_fractions, evaluate_entropy_cd, evaluation_entries, fit_prior_with_sets, report_lines,
    split_dataset, train_cond_model, AblationFlags, ModelSet, SessionState, ShapeSets, DIFF_THRESHOLDS,
};
use recshape_core::text_phrases::{build_dataset, load_dataset, save_dataset, ChunkGrammar, Lexicon, DEFAULT_THRESHOLD};
use recshape_core::voxel_shapes::{export_mesh, gen_corpus, load_corpus, save_corpus, CorpusConfig};
use recshape_core::vq_codec::{train_codebook_with, Codebook, DEFAULT_RESTARTS};
use recshape_core::{Error, Result};

/// Recursive text-conditioned voxel shape generation.
#[derive(Parser)]
#[command(name = "recshape", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the procedural furniture corpus.
    GenCorpus {
        #[arg(long, default_value_t = 400)]
        chairs: usize,
        #[arg(long, default_value_t = 200)]
        tables: usize,
        #[arg(long, default_value_t = 32)]
        resolution: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Parse captions into phrase sequences and pair them with shapes.
    BuildDataset {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Learn the patch codebook.
    TrainCodebook {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 64)]
        k: usize,
        #[arg(long, default_value_t = 8)]
        grid: usize,
        #[arg(long, default_value_t = 50)]
        iterations: usize,
        #[arg(long, default_value_t = DEFAULT_RESTARTS)]
        restarts: usize,
        #[arg(long, default_value_t = 2)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the context-model shape prior.
    FitPrior {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = DEFAULT_ORDER)]
        order: usize,
        #[arg(long, default_value_t = DEFAULT_ALPHA)]
        alpha: f64,
        /// Share of prior training grids sampled from shape-set distributions.
        #[arg(long, default_value_t = 0.5)]
        set_ratio: f64,
        /// How the prior is combined with the per-cell distributions.
        #[arg(long, value_enum, default_value_t = Comb::Calibrated)]
        combination: Comb,
        #[arg(long, default_value_t = 3)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the conditional model.
    TrainCond {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 2)]
        epochs: usize,
        #[arg(long, default_value_t = 3e-3)]
        lr: f64,
        #[arg(long, value_enum, default_value_t = Opt::Adam)]
        optimizer: Opt,
        #[arg(long, default_value_t = 1)]
        batch: usize,
        /// Probability of feeding the model its own previous prediction.
        #[arg(long, default_value_t = 1.0)]
        self_feed: f64,
        /// Chains visited per epoch; 0 visits all.
        #[arg(long, default_value_t = 0)]
        max_chains: usize,
        #[arg(long, default_value_t = 64)]
        width: usize,
        #[arg(long, default_value_t = 2)]
        depth: usize,
        #[arg(long, default_value_t = DEFAULT_EMBED_DIM)]
        embed_dim: usize,
        #[arg(long, default_value_t = 5)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply phrases recursively and write sample meshes and Z grids.
    Generate {
        /// Directory holding codebook.json, cond_model.json and prior.json.
        #[arg(long)]
        models: PathBuf,
        #[arg(long = "phrase", required = true)]
        phrases: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        samples: usize,
        #[command(flatten)]
        flags: FlagArgs,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Print bucketed entropy/Chamfer and unchanged-cell tables as JSON lines.
    Evaluate {
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 8)]
        samples: usize,
        /// Held-out sequences per phrase-count bucket.
        #[arg(long, default_value_t = 60)]
        per_bucket: usize,
        #[arg(long, default_value_t = 11)]
        seed: u64,
        #[command(flatten)]
        flags: FlagArgs,
    },
    /// Run the session service.
    Serve {
        /// A model-set directory, or a directory of them.
        #[arg(long)]
        models: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Directory of static UI files.
        #[arg(long = "static")]
        static_dir: Option<PathBuf>,
        /// Sessions are restored from and saved to this file.
        #[arg(long)]
        snapshot: Option<PathBuf>,
    },
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    codebook: PathBuf,
}

#[derive(Args)]
struct FlagArgs {
    #[arg(long)]
    no_condition: bool,
    #[arg(long)]
    no_transformer: bool,
    #[arg(long)]
    no_reorder: bool,
}

impl From<&FlagArgs> for AblationFlags {
    fn from(f: &FlagArgs) -> Self {
        AblationFlags {
            no_condition: f.no_condition,
            no_transformer: f.no_transformer,
            no_reorder: f.no_reorder,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Comb {
    Product,
    Calibrated,
}

#[derive(Clone, Copy, ValueEnum)]
enum Opt {
    Sgd,
    Adam,
}

/// Codebook, encoded shapes and dataset shared by the prior and model trainers.
fn load_data(args: &DataArgs) -> Result<(Codebook, ShapeSets, Vec<recshape_core::text_phrases::DatasetEntry>)> {
    let codebook = Codebook::load(&args.codebook)?;
    let corpus = load_corpus(&args.corpus)?;
    let sets = ShapeSets::encode_corpus(&corpus, &codebook)?;
    let dataset = load_dataset(&args.dataset)?;
    Ok((codebook, sets, dataset))
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    Ok(())
}

fn write(path: &Path, text: &str) -> Result<()> {
    ensure_parent(path)?;
    std::fs::write(path, text)?;
    Ok(())
}

fn run(command: Command) -> Result<()> {
    if let Command::GenCorpus { out, .. }
    | Command::BuildDataset { out, .. }
    | Command::TrainCodebook { out, .. }
    | Command::FitPrior { out, .. }
    | Command::TrainCond { out, .. } = &command
    {
        ensure_parent(out)?;
    }
    match command {
        Command::GenCorpus {
            chairs,
            tables,
            resolution,
            seed,
            out,
        } => {
            let config = CorpusConfig {
                chairs,
                tables,
                resolution,
                ..CorpusConfig::default()
            };
            let corpus = gen_corpus(&config, seed)?;
            save_corpus(&out, &corpus)?;
            log::info!("wrote {} shapes to {}", corpus.len(), out.display());
        }
        Command::BuildDataset { corpus, threshold, out } => {
            let corpus = load_corpus(&corpus)?;
            let dataset = build_dataset(&corpus, &Lexicon::default(), &ChunkGrammar::default(), threshold)?;
            save_dataset(&out, &dataset)?;
            log::info!("wrote {} sequences to {}", dataset.len(), out.display());
        }
        Command::TrainCodebook {
            corpus,
            k,
            grid,
            iterations,
            restarts,
            seed,
            out,
        } => {
            let corpus = load_corpus(&corpus)?;
            let tsdfs: Vec<_> = corpus.iter().map(|e| e.tsdf.clone()).collect();
            let trained = train_codebook_with(&tsdfs, grid, k, iterations, restarts, seed)?;
            trained.codebook.save(&out)?;
            log::info!(
                "codebook K={k} after {} iterations, final distortion {:?}",
                trained.iterations,
                trained.distortion.last()
            );
        }
        Command::FitPrior {
            data,
            order,
            alpha,
            set_ratio,
            combination,
            seed,
            out,
        } => {
            let (_, sets, dataset) = load_data(&data)?;
            let (train, _) = split_dataset(&dataset);
            let combination = match combination {
                Comb::Product => Combination::Product,
                Comb::Calibrated => Combination::Calibrated,
            };
            let prior = fit_prior_with_sets(&sets, &train, order, alpha, set_ratio, seed)?.with_combination(combination);
            prior.save(&out)?;
            log::info!("prior with {} contexts written to {}", prior.context_count(), out.display());
        }
        Command::TrainCond {
            data,
            epochs,
            lr,
            optimizer,
            batch,
            self_feed,
            max_chains,
            width,
            depth,
            embed_dim,
            seed,
            out,
        } => {
            let (codebook, sets, dataset) = load_data(&data)?;
            let config = ModelConfig {
                g: codebook.g(),
                k: codebook.k(),
                embed_dim,
                width,
                depth,
                hash_seed: DEFAULT_HASH_SEED,
            };
            let train = TrainConfig {
                learning_rate: lr,
                epochs,
                batch_size: batch,
                seed,
                optimizer: match optimizer {
                    Opt::Sgd => Optimizer::Sgd,
                    Opt::Adam => Optimizer::Adam,
                },
                max_chains_per_epoch: max_chains,
                self_feed,
                ..TrainConfig::default()
            };
            let (model, report) = train_cond_model(&dataset, &sets, config, seed.wrapping_add(1), &train)?;
            model.save(&out)?;
            log::info!("trained {} steps, epoch losses {:?}", report.steps, report.epoch_loss);
        }
        Command::Generate {
            models,
            phrases,
            seed,
            samples,
            flags,
            out_dir,
        } => {
            let models = ModelSet::load(&models)?;
            let mut state = SessionState::new(&models, seed, (&flags).into());
            std::fs::create_dir_all(&out_dir)?;
            for phrase in &phrases {
                let (next, drawn) = state.step(&models, phrase, samples)?;
                state = next;
                let t = state.t();
                write(&out_dir.join(format!("z_{t:02}.json")), &state.current().to_json()?)?;
                for (i, shape) in drawn.shapes.iter().enumerate() {
                    write(&out_dir.join(format!("step{t:02}_sample{i:02}.obj")), &export_mesh(&shape.occupancy()))?;
                }
                println!(
                    "{}",
                    serde_json::json!({
                        "step": t,
                        "phrase": phrase,
                        "mean_entropy": recshape_core::distribution_grid::mean_entropy(state.current()),
                        "samples": drawn.shapes.len(),
                    })
                );
            }
        }
        Command::Evaluate {
            models,
            dataset,
            samples,
            per_bucket,
            seed,
            flags,
        } => {
            let models = ModelSet::load(&models)?;
            let dataset = load_dataset(&dataset)?;
            let entries = evaluation_entries(&dataset, per_bucket);
            if entries.is_empty() {
                return Err(Error::Format("dataset has no held-out sequences".into()));
            }
            let flags: AblationFlags = (&flags).into();
            let rows = evaluate_entropy_cd(&entries, &models, samples, seed, flags)?;
            print!("{}", report_lines("entropy_cd", &rows)?);
            let rows = evaluate_diff_fractions(&entries, &models, &DIFF_THRESHOLDS, flags)?;
            print!("{}", report_lines("unchanged_fraction", &rows)?);
        }
        Command::Serve {
            models,
            port,
            static_dir,
            snapshot,
        } => {
            let config = recshape_service::ServeConfig {
                models,
                port,
                static_dir,
                snapshot,
            };
            let runtime = tokio::runtime::Runtime::new()?;
            runtime
                .block_on(recshape_service::serve(config))
                .map_err(|e| match e.downcast::<Error>() {
                    Ok(core) => *core,
                    Err(other) => Error::Io(std::io::Error::other(other.to_string())),
                })?;
        }
    }
    Ok(())
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Validation(_) => 1,
        Error::Numeric(_) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
