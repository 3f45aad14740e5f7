use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::embed::{use_similarity, Embedder};
use super::meteor::{meteor, metric_tokens};
use super::MetricsError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextLine {
    pub id: String,
    pub text: String,
}

/// Reads a line-delimited `{"id", "text"}` file.
pub fn read_texts(r: impl BufRead) -> Result<BTreeMap<String, String>, MetricsError> {
    let mut out = BTreeMap::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let t: TextLine = serde_json::from_str(&line).map_err(|e| MetricsError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if out.insert(t.id.clone(), t.text).is_some() {
            return Err(MetricsError::Parse {
                line: i + 1,
                message: format!("duplicate id {:?}", t.id),
            });
        }
    }
    Ok(out)
}

pub fn load_texts(path: impl AsRef<Path>) -> Result<BTreeMap<String, String>, MetricsError> {
    read_texts(std::io::BufReader::new(std::fs::File::open(path)?))
}

pub fn write_texts(mut w: impl Write, texts: &BTreeMap<String, String>) -> Result<(), MetricsError> {
    for (id, text) in texts {
        let line = serde_json::to_string(&TextLine {
            id: id.clone(),
            text: text.clone(),
        })
        .map_err(std::io::Error::from)?;
        writeln!(w, "{line}")?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairScore {
    pub id: String,
    /// ×100
    pub meteor: f64,
    /// ×100
    pub use_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    /// Ordered by id.
    pub pairs: Vec<PairScore>,
    /// Mean per-pair METEOR ×100.
    pub meteor: f64,
    /// Mean per-pair USE ×100.
    pub use_score: f64,
}

impl MetricReport {
    pub fn meteor_display(&self) -> String {
        format!("{:.2}", self.meteor)
    }

    pub fn use_display(&self) -> String {
        format!("{:.2}", self.use_score)
    }
}

/// Scores every prediction against the reference with the same id. Pairs
/// are scored on worker threads; the means are reduced in id order.
pub fn corpus_scores(
    predictions: &BTreeMap<String, String>,
    references: &BTreeMap<String, String>,
    emb: &Embedder,
) -> Result<MetricReport, MetricsError> {
    if let Some(id) = predictions.keys().find(|k| !references.contains_key(*k)) {
        return Err(MetricsError::IdMismatch(format!("{id:?} has no reference")));
    }
    if let Some(id) = references.keys().find(|k| !predictions.contains_key(*k)) {
        return Err(MetricsError::IdMismatch(format!("{id:?} has no prediction")));
    }
    if predictions.is_empty() {
        return Err(MetricsError::Empty);
    }
    let jobs: Vec<(&String, &String, &String)> = predictions.iter().map(|(id, p)| (id, p, &references[id])).collect();
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(jobs.len());
    let chunk = jobs.len().div_ceil(threads);
    let results: Vec<Result<Vec<PairScore>, MetricsError>> = std::thread::scope(|s| {
        let handles: Vec<_> = jobs
            .chunks(chunk)
            .map(|part| {
                s.spawn(move || {
                    part.iter()
                        .map(|&(id, p, r)| {
                            Ok(PairScore {
                                id: id.clone(),
                                meteor: 100.0 * meteor(p, r),
                                // an empty prediction has no direction; it scores zero rather
                                // than failing the corpus
                                use_score: if metric_tokens(p).is_empty() {
                                    0.0
                                } else {
                                    100.0 * use_similarity(p, r, emb)?
                                },
                            })
                        })
                        .collect()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("scoring thread panicked")).collect()
    });
    let mut pairs = Vec::with_capacity(jobs.len());
    for r in results {
        pairs.extend(r?);
    }
    let n = pairs.len() as f64;
    let meteor = pairs.iter().map(|p| p.meteor).sum::<f64>() / n;
    let use_score = pairs.iter().map(|p| p.use_score).sum::<f64>() / n;
    Ok(MetricReport {
        pairs,
        meteor,
        use_score,
    })
}

/// Dataset-size label in the style `170k`, `1.25m`.
pub fn tier_label(n: usize) -> String {
    fn trim(x: f64) -> String {
        let s = format!("{x:.2}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
    if n >= 1_000_000 {
        format!("{}m", trim(n as f64 / 1e6))
    } else if n >= 1_000 {
        format!("{}k", trim(n as f64 / 1e3))
    } else {
        n.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnGroup {
    pub name: String,
    pub columns: Vec<String>,
}

/// Model × dataset table: rows are dataset tiers, columns are model
/// variants under family headings. Missing cells print as `-`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub title: String,
    pub groups: Vec<ColumnGroup>,
    pub rows: Vec<String>,
    cells: HashMap<String, f64>,
}

fn cell_key(row: &str, group: &str, column: &str) -> String {
    format!("{row}\u{1f}{group}\u{1f}{column}")
}

impl GridReport {
    pub fn new(title: impl Into<String>, groups: Vec<ColumnGroup>, rows: Vec<String>) -> Self {
        Self {
            title: title.into(),
            groups,
            rows,
            cells: HashMap::new(),
        }
    }

    pub fn set(&mut self, row: &str, group: &str, column: &str, value: f64) -> Result<(), MetricsError> {
        let known = self.rows.iter().any(|r| r == row)
            && self
                .groups
                .iter()
                .any(|g| g.name == group && g.columns.iter().any(|c| c == column));
        if !known {
            return Err(MetricsError::UnknownCell(format!("{row} / {group} / {column}")));
        }
        self.cells.insert(cell_key(row, group, column), value);
        Ok(())
    }

    pub fn get(&self, row: &str, group: &str, column: &str) -> Option<f64> {
        self.cells.get(&cell_key(row, group, column)).copied()
    }

    pub fn render(&self) -> String {
        let row_w = self.rows.iter().map(String::len).chain([7]).max().unwrap_or(7);
        // per group, per column widths
        let mut widths: Vec<Vec<usize>> = self
            .groups
            .iter()
            .map(|g| {
                g.columns
                    .iter()
                    .map(|c| {
                        self.rows
                            .iter()
                            .map(|r| self.get(r, &g.name, c).map_or(1, |v| format!("{v:.2}").len()))
                            .chain([c.len()])
                            .max()
                            .unwrap_or(1)
                    })
                    .collect()
            })
            .collect();
        for (g, w) in self.groups.iter().zip(widths.iter_mut()) {
            let span = w.iter().sum::<usize>() + 3 * w.len().saturating_sub(1);
            if g.name.len() > span {
                if let Some(last) = w.last_mut() {
                    *last += g.name.len() - span;
                }
            }
        }

        let mut out = String::new();
        out.push_str(&self.title);
        out.push('\n');
        let mut line = format!("{:row_w$}", "");
        for (g, w) in self.groups.iter().zip(&widths) {
            let span = w.iter().sum::<usize>() + 3 * w.len().saturating_sub(1);
            line.push_str(&format!(" | {:span$}", g.name));
        }
        out.push_str(line.trim_end());
        out.push('\n');
        let mut line = format!("{:row_w$}", "dataset");
        for (g, w) in self.groups.iter().zip(&widths) {
            for (c, cw) in g.columns.iter().zip(w) {
                line.push_str(&format!(" | {c:>cw$}"));
            }
        }
        out.push_str(&line);
        out.push('\n');
        let mut rule = "-".repeat(row_w);
        for w in &widths {
            for cw in w {
                rule.push_str(&format!("-+-{}", "-".repeat(*cw)));
            }
        }
        out.push_str(&rule);
        out.push('\n');
        for r in &self.rows {
            let mut line = format!("{r:row_w$}");
            for (g, w) in self.groups.iter().zip(&widths) {
                for (c, cw) in g.columns.iter().zip(w) {
                    let v = self.get(r, &g.name, c).map_or("-".to_string(), |v| format!("{v:.2}"));
                    line.push_str(&format!(" | {v:>cw$}"));
                }
            }
            out.push_str(&line);
            out.push('\n');
        }
        out
    }
}

/// Empty grid with the full-scale model columns and dataset-size rows.
pub fn standard_grid(title: &str) -> GridReport {
    let g = |name: &str, cols: &[&str]| ColumnGroup {
        name: name.into(),
        columns: cols.iter().map(|c| c.to_string()).collect(),
    };
    GridReport::new(
        title,
        vec![
            g("jam", &["38m", "110m", "350m"]),
            g("starcoder", &["15.5B"]),
            g("encoder-decoder", &["transformer"]),
        ],
        [170_000, 620_000, 1_250_000, 2_150_000].map(tier_label).to_vec(),
    )
}
