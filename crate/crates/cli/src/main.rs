use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::Value;
use zsar_core::captioner::{
    build_caption_vocabulary, list_feature_videos, load_video_features, train_captioner, Architecture, Captioner,
    CaptionerConfig, Modality, TrainSchedule,
};
use zsar_core::classifier::{
    batch_classify, write_results, Aggregation, ClassifyOptions, JointSpace, VideoRepresentation,
};
use zsar_core::embedder::{load_provider, TableProvider};
use zsar_core::error::{Error, Result};
use zsar_core::evaluation::{
    embedder_sweep, observer_combination_sweep, prototype_param_sweep, representation_mode_sweep, Protocol,
};
use zsar_core::observers::{
    read_caption_records, read_fused, run_captioner, write_caption_records, write_fused, ObserverSet,
};
use zsar_core::pipeline::{
    build_prototypes, generate_fixture, render_report, render_sweep, run_pipeline, validate_config, Engine,
    FixtureSpec, PipelineConfig, PrototypeConfig,
};
use zsar_core::text::{load_documents, write_prototype_store, Origin, PrototypeMode, Sentence, StoreConfig};

#[derive(Parser)]
#[command(name = "zsar", version, about = "Sentence-based zero-shot action recognition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Sweep {
    Observers,
    Prototypes,
    Modes,
    Embedders,
}

#[derive(Subcommand)]
enum Command {
    /// Distill class prototypes from description documents.
    PrepPrototypes {
        #[arg(long)]
        descriptions: PathBuf,
        #[arg(long, default_value = "sentences")]
        mode: PrototypeMode,
        #[arg(long, default_value_t = 10)]
        min_words: usize,
        #[arg(long, default_value_t = 10)]
        max_sentences: usize,
        #[arg(long, default_value = "bow")]
        embedder: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a toy captioner on a directory holding captions.jsonl and features/.
    CaptionTrain {
        #[arg(long)]
        corpus: PathBuf,
        /// Caption records; defaults to CORPUS/captions.jsonl.
        #[arg(long)]
        captions: Option<PathBuf>,
        /// Feature directory; defaults to CORPUS/features.
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long, default_value = "transformer")]
        arch: Architecture,
        #[arg(long, default_value_t = 32)]
        d_model: usize,
        #[arg(long, default_value_t = 4)]
        heads: usize,
        #[arg(long, default_value_t = 100)]
        max_epochs: usize,
        #[arg(long, default_value_t = 20)]
        min_epochs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Caption every video in a feature directory with a trained model.
    CaptionRun {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        /// Observer id written into each record; defaults to the output file stem.
        #[arg(long)]
        observer_id: Option<String>,
        #[arg(long, default_value_t = 20)]
        max_len: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fuse the captions of several observers into one description per video.
    Describe {
        #[arg(long, value_delimiter = ',')]
        observers: Vec<String>,
        #[arg(long)]
        captions_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Embed every sentence of a JSON-lines file into a vector table.
    Embed {
        #[arg(long)]
        provider: String,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Nearest-prototype classification of fused descriptions.
    Classify {
        #[arg(long)]
        space: PathBuf,
        #[arg(long)]
        fused: PathBuf,
        #[arg(long)]
        provider: String,
        /// Restrict the space to these classes.
        #[arg(long, value_delimiter = ',')]
        classes: Vec<String>,
        #[arg(long, default_value = "max")]
        aggregation: Aggregation,
        #[arg(long, default_value = "fused")]
        representation: VideoRepresentation,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the pipeline under an evaluation protocol.
    Evaluate {
        #[arg(long)]
        protocol: PathBuf,
        #[arg(long)]
        pipeline: PathBuf,
        #[arg(long = "set")]
        overrides: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an ablation sweep and write <sweep>.csv and <sweep>.json.
    Ablate {
        #[arg(long)]
        sweep: Sweep,
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "set")]
        overrides: Vec<String>,
        /// Observer combinations, e.g. "OB1;OB1,OB3"; all non-empty subsets by default.
        #[arg(long)]
        combinations: Option<String>,
        #[arg(long, value_delimiter = ',', default_values_t = [1, 5, 10, 15, 20])]
        min_words: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = [1, 5, 10, 15, 20])]
        max_sentences: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "bow")]
        selection: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "bow")]
        joint: Vec<String>,
        /// Output directory; defaults to <run output>/sweeps.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render the tables of a results directory.
    Report { dir: PathBuf },
    /// Full pipeline from one config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "set")]
        overrides: Vec<String>,
    },
    /// Check a config and list every problem found.
    Validate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "set")]
        overrides: Vec<String>,
    },
    /// Write the synthetic five-class fixture.
    Fixture {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        videos_per_class: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn absolute(p: &Path) -> Result<PathBuf> {
    if p.is_absolute() {
        return Ok(p.to_path_buf());
    }
    let cwd = std::env::current_dir().map_err(|e| Error::io(".", e))?;
    Ok(cwd.join(p))
}

fn print_output_report(config: &PipelineConfig) -> Result<()> {
    println!("{}", render_report(&config.resolve(&config.paths.output))?);
    Ok(())
}

/// Every string under a "text" or "sentence" key, in file order, deduplicated.
fn collect_sentences(path: &Path) -> Result<Vec<String>> {
    fn walk(v: &Value, out: &mut Vec<String>) {
        match v {
            Value::Object(map) => {
                for (k, x) in map {
                    match x {
                        Value::String(s) if k == "text" || k == "sentence" => out.push(s.clone()),
                        _ => walk(x, out),
                    }
                }
            }
            Value::Array(xs) => xs.iter().for_each(|x| walk(x, out)),
            _ => {}
        }
    }
    let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut found = Vec::new();
    for (i, line) in content.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let v: Value = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        walk(&v, &mut found);
    }
    let mut seen = BTreeSet::new();
    found.retain(|s| seen.insert(s.clone()));
    if found.is_empty() {
        return Err(Error::EmptyInput(format!("{}: no sentences", path.display())));
    }
    Ok(found)
}

fn all_subsets(ids: &[String]) -> Vec<Vec<String>> {
    (1..1usize << ids.len())
        .map(|mask| {
            ids.iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, id)| id.clone())
                .collect()
        })
        .collect()
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::PrepPrototypes {
            descriptions,
            mode,
            min_words,
            max_sentences,
            embedder,
            out,
        } => {
            let docs = load_documents(&descriptions)?;
            let classes: Vec<String> = docs.iter().map(|d| d.class_label().to_string()).collect();
            let provider = load_provider(&embedder, None)?;
            let config = PrototypeConfig {
                mode,
                min_words,
                max_sentences,
            };
            let sets = build_prototypes(&docs, &classes, &config, provider.as_ref())?;
            let store = StoreConfig {
                min_words,
                max_sentences,
                embedder_id: provider.id().to_string(),
            };
            write_prototype_store(&out, &sets, &store)?;
            let total: usize = sets.iter().map(|s| s.len()).sum();
            println!("{} classes, {total} prototypes -> {}", sets.len(), out.display());
        }
        Command::CaptionTrain {
            corpus,
            captions,
            features,
            arch,
            d_model,
            heads,
            max_epochs,
            min_epochs,
            seed,
            out,
        } => {
            let captions = captions.unwrap_or_else(|| corpus.join("captions.jsonl"));
            let features = features.unwrap_or_else(|| corpus.join("features"));
            let asm = (arch == Architecture::Bmt).then_some(Modality::Audio);
            let pairs = read_caption_records(&captions)?
                .into_iter()
                .map(|r| {
                    let video = load_video_features(&features, &r.video_id, asm)?;
                    Ok((video, Sentence::new(&r.sentence, Origin::Observer)))
                })
                .collect::<Result<Vec<_>>>()?;
            let first = pairs
                .first()
                .ok_or_else(|| Error::EmptyInput("no caption records".into()))?;
            let d_visual = first.0.visual.dim();
            let d_asm = first.0.asm.as_ref().map_or(d_visual, |s| s.dim());
            let config = CaptionerConfig {
                arch,
                d_model,
                heads,
                d_ff: 2 * d_model,
                d_visual,
                d_asm,
                seed,
                ..CaptionerConfig::default()
            };
            let model = Captioner::new(config, build_caption_vocabulary(&pairs))?;
            let schedule = TrainSchedule {
                max_epochs,
                min_epochs,
                seed,
                ..TrainSchedule::default()
            };
            let trained = train_captioner(model, &pairs, &schedule)?;
            trained.model.save(&out)?;
            let best = &trained.history.epochs[trained.history.best_epoch - 1];
            println!(
                "best epoch {} of {}: loss {:.4}, Bleu@4 {:.4} -> {}",
                best.epoch,
                trained.history.epochs.len(),
                best.loss,
                best.bleu4,
                out.display()
            );
        }
        Command::CaptionRun {
            model,
            features,
            observer_id,
            max_len,
            out,
        } => {
            let model = Captioner::load(&model)?;
            let id = observer_id
                .or_else(|| out.file_stem().and_then(|s| s.to_str()).map(str::to_string))
                .ok_or_else(|| Error::Config("cannot infer observer id; pass --observer-id".into()))?;
            let videos = list_feature_videos(&features)?;
            let records = run_captioner(&model, &features, &videos, &id, Modality::Audio, max_len)?;
            write_caption_records(&out, &records)?;
            println!("{} captions -> {}", records.len(), out.display());
        }
        Command::Describe {
            observers,
            captions_dir,
            out,
        } => {
            let set = ObserverSet::from_caption_dir(&captions_dir)?;
            let ids = set.subset(&observers)?;
            let mut videos: Vec<String> = read_caption_records(&captions_dir.join(format!("{}.jsonl", ids[0])))?
                .into_iter()
                .map(|r| r.video_id)
                .collect();
            videos.sort();
            videos.dedup();
            let fused = set.observer_subset(&videos, &ids)?;
            write_fused(&out, &fused)?;
            println!(
                "{} videos fused from {} -> {}",
                fused.len(),
                ids.join("+"),
                out.display()
            );
        }
        Command::Embed { provider, input, out } => {
            let provider = load_provider(&provider, None)?;
            let records = collect_sentences(&input)?
                .into_iter()
                .map(|s| Ok((s.clone(), provider.embed_text(&s)?.values().to_vec())))
                .collect::<Result<Vec<_>>>()?;
            let table = TableProvider::render(provider.id(), provider.dim(), &records)?;
            std::fs::write(&out, table).map_err(|e| Error::io(&out, e))?;
            println!(
                "{} vectors of dim {} -> {}",
                records.len(),
                provider.dim(),
                out.display()
            );
        }
        Command::Classify {
            space,
            fused,
            provider,
            classes,
            aggregation,
            representation,
            out,
        } => {
            let mut space = JointSpace::load(&space)?;
            if !classes.is_empty() {
                space = space.restrict(&classes)?;
            }
            let fused = read_fused(&fused)?;
            let provider = load_provider(&provider, None)?;
            let options = ClassifyOptions {
                aggregation,
                representation,
            };
            let results = batch_classify(&fused, &space, provider.as_ref(), options)?;
            write_results(&out, &results)?;
            println!(
                "{} videos over {} classes -> {}",
                results.len(),
                space.classes().len(),
                out.display()
            );
        }
        Command::Evaluate {
            protocol,
            pipeline,
            overrides,
            out,
        } => {
            let text = std::fs::read_to_string(&protocol).map_err(|e| Error::io(&protocol, e))?;
            let protocol: Protocol =
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", protocol.display())))?;
            let mut config = PipelineConfig::load(&pipeline, &overrides)?;
            config.protocol = protocol;
            config.paths.output = absolute(&out)?;
            run_pipeline(&config)?;
            print_output_report(&config)?;
        }
        Command::Ablate {
            sweep,
            config,
            overrides,
            combinations,
            min_words,
            max_sentences,
            selection,
            joint,
            out,
        } => {
            let config = PipelineConfig::load(&config, &overrides)?;
            let out = match out {
                Some(o) => absolute(&o)?,
                None => config.resolve(&config.paths.output).join("sweeps"),
            };
            let engine = Engine::new(config)?;
            let table = match sweep {
                Sweep::Observers => {
                    let combos = match combinations {
                        Some(spec) => spec
                            .split(';')
                            .map(|c| c.split(',').map(|s| s.trim().to_string()).collect())
                            .collect(),
                        None => all_subsets(&engine.observers().ids()),
                    };
                    observer_combination_sweep(&engine, &combos)?
                }
                Sweep::Prototypes => prototype_param_sweep(&engine, &min_words, &max_sentences)?,
                Sweep::Modes => representation_mode_sweep(&engine)?,
                Sweep::Embedders => embedder_sweep(&engine, &selection, &joint)?,
            };
            table.save(&out)?;
            println!("{}", render_sweep(&table));
        }
        Command::Report { dir } => println!("{}", render_report(&dir)?),
        Command::Run { config, overrides } => {
            let config = PipelineConfig::load(&config, &overrides)?;
            let manifest = run_pipeline(&config)?;
            print_output_report(&config)?;
            println!(
                "{} artifacts, config hash {}",
                manifest.artifacts.len(),
                manifest.config_hash
            );
        }
        Command::Validate { config, overrides } => {
            let config = PipelineConfig::load(&config, &overrides)?;
            let issues = validate_config(&config);
            for issue in &issues {
                eprintln!("{issue}");
            }
            if !issues.is_empty() {
                return Err(Error::Config(format!("{} problem(s) in config", issues.len())));
            }
            println!("config ok");
        }
        Command::Fixture {
            out,
            videos_per_class,
            seed,
        } => {
            let spec = FixtureSpec {
                videos_per_class,
                seed,
                ..FixtureSpec::default()
            };
            generate_fixture(&out, &spec)?;
            println!("fixture written to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.family().exit_code() as u8)
        }
    }
}
