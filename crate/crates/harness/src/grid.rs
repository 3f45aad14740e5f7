//! Model × dataset-tier experiment grid with resumable cells.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use distill_core::metrics::{corpus_scores, tier_label, write_texts, ColumnGroup, Embedder, GridReport};
use distill_core::model::ModelKind;
use serde::{Deserialize, Serialize};

use crate::pipeline::{pairs, ModelSpec, PipelineError, PreparedData, Student};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentGrid {
    pub models: Vec<ModelSpec>,
    /// Indices into the prepared data's tiers are matched by size.
    pub tiers: Vec<usize>,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
}

impl ExperimentGrid {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.models.is_empty() || self.tiers.is_empty() || self.seeds.is_empty() {
            return Err(PipelineError::Invalid("grid needs at least one model, tier and seed".into()));
        }
        let mut names: Vec<&str> = self.models.iter().map(|m| m.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(PipelineError::Invalid("model names must be unique".into()));
        }
        if let Some(bad) = names.iter().find(|n| n.is_empty() || n.contains(['/', '\\'])) {
            return Err(PipelineError::Invalid(format!("bad model name {bad:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellKey {
    pub model: String,
    pub tier: usize,
    pub seed: u64,
}

impl CellKey {
    fn dir_name(&self) -> String {
        format!("{}__{}__s{}", self.model, self.tier, self.seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CellOutcome {
    Done {
        /// ×100
        meteor: f64,
        /// ×100
        use_score: f64,
        train_seconds: f64,
        final_loss: f64,
    },
    Failed {
        error: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub key: CellKey,
    pub outcome: CellOutcome,
}

/// Called before a cell trains; an `Err` aborts that cell only.
pub type CellHook<'a> = &'a (dyn Fn(&CellKey) -> Result<(), String> + Sync);

pub struct GridRun {
    pub cells: Vec<CellRecord>,
    pub log: Vec<String>,
}

fn run_cell(
    spec: &ModelSpec,
    key: &CellKey,
    data: &PreparedData,
    emb: &Embedder,
    dir: &Path,
) -> Result<CellOutcome, PipelineError> {
    let tier = data
        .tier_sizes
        .iter()
        .position(|&t| t == key.tier)
        .ok_or_else(|| PipelineError::Invalid(format!("tier {} was not prepared", key.tier)))?;
    let train = pairs(&data.tiers[tier], data.field);
    let started = Instant::now();
    let fitted = Student::fit(spec, &train, key.seed, None)?;
    let train_seconds = started.elapsed().as_secs_f64();
    fitted.student.save(&dir.join("student"))?;

    let mut preds = BTreeMap::new();
    let mut refs = BTreeMap::new();
    for (s, (code, reference)) in data.test.iter().zip(pairs(&data.test, data.field)) {
        preds.insert(s.id.clone(), fitted.student.summarize(&code)?);
        refs.insert(s.id.clone(), reference);
    }
    write_texts(std::io::BufWriter::new(std::fs::File::create(dir.join("predictions.jsonl"))?), &preds)?;
    let report = corpus_scores(&preds, &refs, emb)?;
    Ok(CellOutcome::Done {
        meteor: report.meteor,
        use_score: report.use_score,
        train_seconds,
        final_loss: fitted.report.epoch_losses.last().copied().unwrap_or(f64::NAN),
    })
}

/// Runs every (model, tier, seed) cell in order. Finished cells found in
/// `out_dir` are reused; a failing cell is recorded and the rest continue.
pub fn run_experiment_grid(
    grid: &ExperimentGrid,
    data: &PreparedData,
    emb: &Embedder,
    hook: Option<CellHook>,
) -> Result<GridRun, PipelineError> {
    grid.validate()?;
    let cells_dir = grid.out_dir.join("cells");
    std::fs::create_dir_all(&cells_dir)?;
    let mut run = GridRun {
        cells: Vec::new(),
        log: Vec::new(),
    };
    for spec in &grid.models {
        for &tier in &grid.tiers {
            for &seed in &grid.seeds {
                let key = CellKey {
                    model: spec.name.clone(),
                    tier,
                    seed,
                };
                let dir = cells_dir.join(key.dir_name());
                let record_path = dir.join("cell.json");
                if let Ok(bytes) = std::fs::read(&record_path) {
                    if let Ok(rec) = serde_json::from_slice::<CellRecord>(&bytes) {
                        if rec.key == key && matches!(rec.outcome, CellOutcome::Done { .. }) {
                            run.log.push(format!("{}: reused", key.dir_name()));
                            run.cells.push(rec);
                            continue;
                        }
                    }
                }
                std::fs::create_dir_all(&dir)?;
                let outcome = match hook.map_or(Ok(()), |h| h(&key)) {
                    Err(e) => CellOutcome::Failed { error: e },
                    Ok(()) => run_cell(spec, &key, data, emb, &dir)
                        .unwrap_or_else(|e| CellOutcome::Failed { error: e.to_string() }),
                };
                run.log.push(match &outcome {
                    CellOutcome::Done {
                        meteor,
                        use_score,
                        train_seconds,
                        ..
                    } => format!(
                        "{}: meteor {meteor:.2} use {use_score:.2} train {train_seconds:.1}s",
                        key.dir_name()
                    ),
                    CellOutcome::Failed { error } => format!("{}: FAILED {error}", key.dir_name()),
                });
                let rec = CellRecord { key, outcome };
                std::fs::write(&record_path, serde_json::to_vec_pretty(&rec)?)?;
                run.cells.push(rec);
            }
        }
    }
    let log_text: String = run.log.iter().map(|l| format!("{l}\n")).collect();
    std::fs::write(grid.out_dir.join("run.log"), log_text)?;
    Ok(run)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Measure {
    Meteor,
    Use,
    TrainSeconds,
}

fn family(kind: ModelKind) -> &'static str {
    match kind {
        ModelKind::DecoderOnly => "decoder-only",
        ModelKind::EncoderDecoder => "encoder-decoder",
    }
}

/// Grid of one measure, averaged over seeds; cells with any failed seed
/// are left empty.
pub fn grid_report(grid: &ExperimentGrid, cells: &[CellRecord], measure: Measure) -> GridReport {
    let title = match measure {
        Measure::Meteor => "METEOR scores",
        Measure::Use => "USE scores",
        Measure::TrainSeconds => "Training time (seconds)",
    };
    let mut groups: Vec<ColumnGroup> = Vec::new();
    for m in &grid.models {
        let fam = family(m.config.kind);
        match groups.iter_mut().find(|g| g.name == fam) {
            Some(g) => g.columns.push(m.name.clone()),
            None => groups.push(ColumnGroup {
                name: fam.into(),
                columns: vec![m.name.clone()],
            }),
        }
    }
    let rows: Vec<String> = grid.tiers.iter().map(|&t| tier_label(t)).collect();
    let mut report = GridReport::new(title, groups, rows);
    for m in &grid.models {
        for &tier in &grid.tiers {
            let mut values = Vec::new();
            let mut failed = false;
            for c in cells.iter().filter(|c| c.key.model == m.name && c.key.tier == tier) {
                match &c.outcome {
                    CellOutcome::Done {
                        meteor,
                        use_score,
                        train_seconds,
                        ..
                    } => values.push(match measure {
                        Measure::Meteor => *meteor,
                        Measure::Use => *use_score,
                        Measure::TrainSeconds => *train_seconds,
                    }),
                    CellOutcome::Failed { .. } => failed = true,
                }
            }
            if !failed && !values.is_empty() {
                let mean = values.iter().sum::<f64>() / values.len() as f64;
                report
                    .set(&tier_label(tier), family(m.config.kind), &m.name, mean)
                    .expect("row and column come from the grid");
            }
        }
    }
    report
}
