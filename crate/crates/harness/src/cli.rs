use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};
use distill_core::corpus::{format_training_record, load_corpus, synthetic_java_corpus, write_corpus, CodeSample};
use distill_core::metrics::{corpus_scores, load_texts, write_texts, Embedder, Oov};
use distill_core::stats::{preference_tally, render_stats_table};
use distill_core::teacher::{harvest, HarvestCache, HarvestOptions, HttpTeacher, MockTeacher, Teacher, TeacherClient};

use crate::config::{RunConfig, TeacherKind};
use crate::grid::{grid_report, run_experiment_grid, ExperimentGrid, Measure};
use crate::pipeline::{pairs, prepare_data, PipelineError, Student};
use crate::service::{serve, AppState};
use crate::survey::{
    export_responses, flag_low_effort, load_export, preference_answers, ratings_by_source, PoolItem, StudyPool,
    SurveyStore, LOW_EFFORT_SECONDS,
};

#[derive(Debug, Parser)]
#[command(name = "distill", about = "Distill teacher code summaries into small students")]
pub struct Cli {
    /// TOML or JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file or directory, depending on the command.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fill teacher summaries for a corpus (synthetic when --corpus is absent).
    Harvest {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        cache: Option<PathBuf>,
    },
    /// Filter, hold out a test set and write nested tiers.
    BuildData {
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Train one student on a tier file.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Model name from the config, or a preset name.
        #[arg(long, default_value = "d64")]
        model: String,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Summarize every sample of a corpus file with a trained student.
    Generate {
        #[arg(long)]
        student: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Score predictions against references ({"id","text"} lines).
    Eval {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        references: PathBuf,
        /// Token embedding table; hashed vectors otherwise.
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
    /// Run the model × tier grid end to end.
    Grid,
    /// Statistics over a survey export.
    Stats {
        #[arg(long)]
        export: PathBuf,
        /// The two compared sources, first one reported on the left.
        #[arg(long, value_delimiter = ',', default_values_t = ["teacher".to_string(), "reference".to_string()])]
        sources: Vec<String>,
    },
    /// Serve the survey over HTTP.
    Serve {
        /// Corpus whose samples carry both compared summaries.
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        store: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = ["reference".to_string(), "teacher".to_string()])]
        sources: Vec<String>,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        #[arg(long, env = "DISTILL_ADMIN_TOKEN", default_value = "")]
        admin_token: String,
    },
    /// Write the survey responses of a store as an export file.
    SurveyExport {
        #[arg(long)]
        store: PathBuf,
    },
}

pub type CliResult = Result<(), Box<dyn std::error::Error>>;

fn require_out(cli: &Cli) -> Result<&Path, PipelineError> {
    cli.out
        .as_deref()
        .ok_or_else(|| PipelineError::Invalid("--out is required for this command".into()))
}

fn writer(path: &Path) -> std::io::Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn teacher_for(cfg: &RunConfig) -> Result<Box<dyn Teacher>, PipelineError> {
    Ok(match cfg.teacher.kind {
        TeacherKind::Mock => Box::new(MockTeacher::new()),
        TeacherKind::Http => {
            let mut client = TeacherClient::new(cfg.teacher.endpoint.clone(), cfg.teacher.model.clone());
            client.api_key = std::env::var(&cfg.teacher.api_key_env).unwrap_or_default();
            client.max_parallel = cfg.teacher.max_parallel;
            Box::new(HttpTeacher::new(client))
        }
    })
}

fn source_corpus(cfg: &RunConfig, path: Option<&Path>) -> Result<Vec<CodeSample>, PipelineError> {
    match path.or(cfg.data.corpus.as_deref()) {
        Some(p) => Ok(load_corpus(p)?),
        None => Ok(synthetic_java_corpus(cfg.data.synthetic_samples, cfg.seed)),
    }
}

fn harvest_corpus(cfg: &RunConfig, corpus: &[CodeSample], cache: Option<&Path>) -> Result<Vec<CodeSample>, Box<dyn std::error::Error>> {
    let teacher = teacher_for(cfg)?;
    let mut cache = match cache.or(cfg.teacher.cache.as_deref()) {
        Some(p) => HarvestCache::open(p)?,
        None => HarvestCache::in_memory(),
    };
    let opts = HarvestOptions {
        max_parallel: cfg.teacher.max_parallel,
        ..Default::default()
    };
    let (out, report) = harvest(corpus, teacher.as_ref(), &mut cache, &opts)?;
    eprintln!(
        "harvest: {} cached, {} fresh, {} calls, {} failed",
        report.from_cache,
        report.fresh,
        report.calls,
        report.failed.len()
    );
    for (id, e) in &report.failed {
        eprintln!("  failed {id}: {e}");
    }
    Ok(out)
}

fn embedder(path: Option<&Path>, seed: u64) -> Result<Embedder, PipelineError> {
    match path {
        Some(p) => Ok(Embedder::load_token_table(p, Oov::Hashed(seed))?),
        None => Ok(Embedder::hashed(64, seed)),
    }
}

pub fn run(cli: Cli) -> CliResult {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    match &cli.command {
        Command::Harvest { corpus, cache } => {
            let out = require_out(&cli)?;
            let samples = source_corpus(&cfg, corpus.as_deref())?;
            let harvested = harvest_corpus(&cfg, &samples, cache.as_deref())?;
            write_corpus(writer(out)?, &harvested)?;
        }
        Command::BuildData { corpus } => {
            let out = require_out(&cli)?;
            let data = prepare_data(load_corpus(corpus)?, cfg.data.field, &cfg.tiers, cfg.data.test_size, cfg.seed)?;
            std::fs::create_dir_all(out)?;
            write_corpus(writer(&out.join("test.jsonl"))?, &data.test)?;
            let refs: BTreeMap<String, String> = data
                .test
                .iter()
                .filter_map(|s| s.summary(data.field).map(|t| (s.id.clone(), t.to_string())))
                .collect();
            write_texts(writer(&out.join("test_references.jsonl"))?, &refs)?;
            for (size, tier) in data.tier_sizes.iter().zip(&data.tiers) {
                write_corpus(writer(&out.join(format!("tier_{size}.jsonl")))?, tier)?;
                let mut w = writer(&out.join(format!("tier_{size}.txt")))?;
                for s in tier {
                    w.write_all(format_training_record(s, data.field)?.text.as_bytes())?;
                    w.write_all(b"\n")?;
                }
            }
            eprintln!(
                "dropped {} (empty {}, non-English {}, missing {}); test {}",
                data.dropped.total(),
                data.dropped.empty,
                data.dropped.non_english,
                data.dropped.missing,
                data.test.len()
            );
        }
        Command::Train { data, model, epochs } => {
            let out = require_out(&cli)?;
            let entry = cfg
                .models
                .iter()
                .find(|m| &m.name == model)
                .cloned()
                .unwrap_or_else(|| crate::config::ModelEntry::preset(model, model));
            let mut spec = entry.resolve()?;
            if let Some(e) = epochs {
                spec.config.epochs = *e;
            }
            let train = pairs(&load_corpus(data)?, cfg.data.field);
            let mut cb = |e: &distill_core::model::EpochStats| {
                eprintln!("epoch {} loss {:.4} ({:.1}s)", e.epoch, e.mean_loss, e.seconds);
            };
            let fitted = Student::fit(&spec, &train, cfg.seed, Some(&mut cb))?;
            fitted.student.save(out)?;
            eprintln!("saved {} ({} parameters)", out.display(), fitted.student.model().parameter_count());
        }
        Command::Generate { student, data } => {
            let out = require_out(&cli)?;
            let s = Student::load(student)?;
            let mut preds = BTreeMap::new();
            for sample in load_corpus(data)? {
                preds.insert(sample.id.clone(), s.summarize(&sample.code)?);
            }
            write_texts(writer(out)?, &preds)?;
        }
        Command::Eval {
            predictions,
            references,
            embeddings,
        } => {
            let emb = embedder(embeddings.as_deref().or(cfg.embeddings.as_deref()), cfg.seed)?;
            let r = corpus_scores(&load_texts(predictions)?, &load_texts(references)?, &emb)?;
            println!("METEOR {}", r.meteor_display());
            println!("USE {}", r.use_display());
            if let Some(out) = &cli.out {
                serde_json::to_writer_pretty(writer(out)?, &r)?;
            }
        }
        Command::Grid => {
            let out = cli.out.clone().unwrap_or_else(|| cfg.out.clone());
            std::fs::create_dir_all(&out)?;
            let samples = source_corpus(&cfg, None)?;
            let harvested = harvest_corpus(&cfg, &samples, Some(&out.join("teacher_cache.jsonl")))?;
            let data = prepare_data(harvested, cfg.data.field, &cfg.tiers, cfg.data.test_size, cfg.seed)?;
            let grid = ExperimentGrid {
                models: cfg.model_specs()?,
                tiers: cfg.tiers.clone(),
                seeds: cfg.seeds.clone(),
                out_dir: out.clone(),
            };
            let emb = embedder(cfg.embeddings.as_deref(), cfg.seed)?;
            let run = run_experiment_grid(&grid, &data, &emb, None)?;
            for line in &run.log {
                eprintln!("{line}");
            }
            for (m, file) in [
                (Measure::Meteor, "meteor.txt"),
                (Measure::Use, "use.txt"),
                (Measure::TrainSeconds, "time.txt"),
            ] {
                let text = grid_report(&grid, &run.cells, m).render();
                std::fs::write(out.join(file), &text)?;
                println!("{text}");
            }
        }
        Command::Stats { export, sources } => {
            let [a, b] = sources.as_slice() else {
                return Err(PipelineError::Invalid("--sources takes exactly two labels".into()).into());
            };
            let responses = load_export(export)?;
            let mut text = render_stats_table(a, b, &ratings_by_source(&responses, a, b))?;
            let tally = preference_tally(&preference_answers(&responses))?;
            text.push_str(&format!(
                "\npreferred: {a} {:.1}%, {b} {:.1}%, undecided {:.1}% (n = {})\n",
                tally.percent(a),
                tally.percent(b),
                tally.undecided_percent(),
                tally.total
            ));
            let flagged = flag_low_effort(&responses, LOW_EFFORT_SECONDS)?;
            text.push_str(&format!("low-effort sessions: {}\n", flagged.len()));
            for s in flagged {
                text.push_str(&format!("  {s}\n"));
            }
            print!("{text}");
            if let Some(out) = &cli.out {
                std::fs::write(out, text)?;
            }
        }
        Command::Serve {
            corpus,
            store,
            sources,
            addr,
            admin_token,
        } => {
            let [a, b] = sources.as_slice() else {
                return Err(PipelineError::Invalid("--sources takes exactly two labels".into()).into());
            };
            let items: Vec<PoolItem> = load_corpus(corpus)?
                .into_iter()
                .filter_map(|s| {
                    let get = |label: &str| match label {
                        "reference" => s.reference.clone(),
                        "teacher" => s.teacher.clone(),
                        _ => None,
                    };
                    Some(PoolItem {
                        summaries: [(a.clone(), get(a)?), (b.clone(), get(b)?)].into(),
                        method_id: s.id,
                        code: s.code,
                    })
                })
                .collect();
            let pool = StudyPool::new([a.clone(), b.clone()], items)?;
            let state = Arc::new(AppState::new(pool, SurveyStore::open(store)?, admin_token.clone(), cfg.seed));
            tokio::runtime::Runtime::new()?.block_on(serve(state, addr))?;
        }
        Command::SurveyExport { store } => {
            let out = require_out(&cli)?;
            let store = SurveyStore::open(store)?;
            export_responses(&store.responses(), writer(out)?)?;
        }
    }
    Ok(())
}
