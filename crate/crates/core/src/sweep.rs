//! Grid sweeps: train one model per (objective, activation, corruption
//! level) cell on a shared dataset and tabulate the final sparsity and
//! reconstruction numbers. Every cell starts from the same seed so cells
//! differ only in the swept settings, which is what makes rows comparable.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activations::ActivationKind;
use crate::data::{standardize, DatasetSpec, StandardizeMode};
use crate::error::{Error, Result};
use crate::numerics::{ConstraintKind, Rng};
use crate::optimizer::{train, TrainConfig, TrainHistory};
use crate::regularizers::{ObjectiveKind, ObjectiveSpec};

fn default_hidden_units() -> usize {
    64
}
fn default_epochs() -> usize {
    15
}
fn default_batch_size() -> usize {
    50
}
fn default_learning_rate() -> f64 {
    0.003
}
fn default_momentum() -> f64 {
    0.9
}
fn default_dae_samples() -> usize {
    1
}
fn default_std_floor() -> f64 {
    0.1
}
fn default_save_histories() -> bool {
    true
}

/// A declarative sweep: the cross product of `models x activations x
/// sigma2_grid`, all trained with the same optimizer settings on the same
/// dataset. Deserializes from a plain TOML file whose keys mirror the field
/// names; command-line flags may override individual fields after parsing.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Objective tags: `ae`, `dae`, `cae`, `mdae`, `sae`, `edae`,
    /// `c1:<q>,<p>`, `c2:identity`, `c2:neg_log_one_minus`.
    #[serde(default)]
    pub models: Vec<String>,
    /// Activation names: `relu`, `sigmoid`, `softplus`, `tanh`.
    #[serde(default)]
    pub activations: Vec<String>,
    /// Swept strength: corruption variance for the corrupted and
    /// marginalized objectives, penalty coefficient for the rest.
    #[serde(default)]
    pub sigma2_grid: Vec<f64>,
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub standardize: Option<StandardizeMode>,
    #[serde(default = "default_std_floor")]
    pub std_floor: f64,
    #[serde(default = "default_hidden_units")]
    pub hidden_units: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default)]
    pub constraint: ConstraintKind,
    #[serde(default)]
    pub seed: u64,
    /// Corruption draws per batch for the sampled objectives.
    #[serde(default = "default_dae_samples")]
    pub dae_samples: usize,
    /// Target mean activation for the KL objective.
    #[serde(default)]
    pub sae_rho: f64,
    /// Where to write the aggregate table and per-cell histories; nothing is
    /// written when unset.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Worker threads for cell execution; unset or 1 means sequential.
    /// Cells share nothing, so the row order and content are identical
    /// either way.
    #[serde(default)]
    pub jobs: Option<usize>,
    #[serde(default = "default_save_histories")]
    pub save_histories: bool,
}

impl SweepSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: SweepSpec =
            toml::from_str(text).map_err(|e| Error::Config(format!("sweep config: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(Error::Config("models must be non-empty".into()));
        }
        if self.activations.is_empty() {
            return Err(Error::Config("activations must be non-empty".into()));
        }
        if self.sigma2_grid.is_empty() {
            return Err(Error::Config("sigma2_grid must be non-empty".into()));
        }
        for tag in &self.models {
            ObjectiveKind::parse_tag(tag, self.dae_samples, self.sae_rho)?;
        }
        for name in &self.activations {
            name.parse::<ActivationKind>().map_err(Error::Config)?;
        }
        for &s in &self.sigma2_grid {
            if !s.is_finite() || s < 0.0 {
                return Err(Error::Config(format!(
                    "sigma2_grid entries must be finite and non-negative, got {s}"
                )));
            }
        }
        if self.hidden_units == 0 || self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "hidden_units, epochs and batch_size must be positive".into(),
            ));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("momentum must lie in [0, 1)".into()));
        }
        if !(self.std_floor.is_finite() && self.std_floor >= 0.0) {
            return Err(Error::Config("std_floor must be non-negative".into()));
        }
        if self.dae_samples == 0 {
            return Err(Error::Config("dae_samples must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.sae_rho) {
            return Err(Error::Config("sae_rho must lie in [0, 1)".into()));
        }
        if self.jobs == Some(0) {
            return Err(Error::Config("jobs must be positive when set".into()));
        }
        Ok(())
    }

    fn cells(&self) -> Result<Vec<Cell>> {
        let mut cells = Vec::new();
        for model in &self.models {
            let kind = ObjectiveKind::parse_tag(model, self.dae_samples, self.sae_rho)?;
            for act_name in &self.activations {
                let activation: ActivationKind =
                    act_name.parse().map_err(Error::Config)?;
                for &sigma2 in &self.sigma2_grid {
                    cells.push(Cell {
                        model: model.clone(),
                        kind,
                        act_name: act_name.clone(),
                        activation,
                        sigma2,
                    });
                }
            }
        }
        Ok(cells)
    }

    fn train_config(&self, cell: &Cell) -> TrainConfig {
        let mut config = TrainConfig::new(
            ObjectiveSpec::new(cell.kind, cell.sigma2),
            cell.activation,
            self.hidden_units,
        );
        config.epochs = self.epochs;
        config.batch_size = self.batch_size;
        config.learning_rate = self.learning_rate;
        config.momentum = self.momentum;
        config.constraint = self.constraint;
        config.seed = self.seed;
        config
    }
}

#[derive(Debug, Clone)]
struct Cell {
    model: String,
    kind: ObjectiveKind,
    act_name: String,
    activation: ActivationKind,
    sigma2: f64,
}

impl Cell {
    fn label(&self) -> String {
        format!("{}/{}/sigma2={}", self.model, self.act_name, self.sigma2)
    }

    fn history_filename(&self) -> String {
        let sanitize = |s: &str| s.replace([':', ','], "-");
        format!(
            "history_{}_{}_{}.json",
            sanitize(&self.model),
            sanitize(&self.act_name),
            self.sigma2
        )
    }
}

/// One finished (or failed) sweep cell. The metric columns are the final
/// epoch's numbers; a failed cell keeps its place in the table with NaN
/// metrics so the grid shape survives.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub model: String,
    pub activation: String,
    pub sigma2: f64,
    pub constraint: String,
    pub act_fraction: f64,
    pub dead_fraction: f64,
    pub recon_loss: f64,
    pub seed: u64,
    pub epochs: usize,
    pub wall_secs: f64,
}

#[derive(Debug)]
pub struct SweepOutcome {
    /// One row per grid cell, in `models x activations x sigma2_grid` order.
    pub rows: Vec<SweepRow>,
    /// Histories aligned with `rows`; `None` where the cell failed.
    pub histories: Vec<Option<TrainHistory>>,
    /// `(cell label, error)` for every failed cell.
    pub failures: Vec<(String, String)>,
}

/// Run every cell of the sweep. Cells are independent: each trains from a
/// fresh seeded initialization with the sweep's seed, so any two cells form
/// a paired comparison. A failing cell is recorded and skipped, not fatal.
/// With `output_dir` set, writes `sweep.csv` and (unless disabled) one
/// history JSON per finished cell.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepOutcome> {
    spec.validate()?;
    let mut data_rng = Rng::stream(spec.seed, 10);
    let mut x = spec.dataset.load(&mut data_rng)?;
    if let Some(mode) = spec.standardize {
        standardize(&mut x, mode, spec.std_floor);
    }

    let cells = spec.cells()?;
    let run_cell = |cell: &Cell| -> (SweepRow, Option<TrainHistory>, Option<String>) {
        let started = Instant::now();
        let config = spec.train_config(cell);
        let (metrics, history, failure) = match train(&config, &x) {
            Ok(history) => {
                let last = history.records.last().expect("epochs >= 1");
                (
                    (last.act_fraction, last.dead_fraction, last.recon_loss),
                    Some(history),
                    None,
                )
            }
            Err(e) => ((f64::NAN, f64::NAN, f64::NAN), None, Some(e.to_string())),
        };
        let row = SweepRow {
            model: cell.model.clone(),
            activation: cell.act_name.clone(),
            sigma2: cell.sigma2,
            constraint: spec.constraint.to_string(),
            act_fraction: metrics.0,
            dead_fraction: metrics.1,
            recon_loss: metrics.2,
            seed: spec.seed,
            epochs: history.as_ref().map_or(0, |h| h.records.len()),
            wall_secs: started.elapsed().as_secs_f64(),
        };
        (row, history, failure)
    };

    let results: Vec<(SweepRow, Option<TrainHistory>, Option<String>)> = match spec.jobs {
        Some(jobs) if jobs > 1 => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs)
                .build()
                .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
            pool.install(|| cells.par_iter().map(run_cell).collect())
        }
        _ => cells.iter().map(run_cell).collect(),
    };

    let mut outcome = SweepOutcome {
        rows: Vec::with_capacity(results.len()),
        histories: Vec::with_capacity(results.len()),
        failures: Vec::new(),
    };
    for (cell, (row, history, failure)) in cells.iter().zip(results) {
        if let Some(msg) = failure {
            outcome.failures.push((cell.label(), msg));
        }
        outcome.rows.push(row);
        outcome.histories.push(history);
    }

    if let Some(dir) = &spec.output_dir {
        fs::create_dir_all(dir)?;
        write_table(&outcome.rows, &dir.join("sweep.csv"))?;
        if spec.save_histories {
            for (cell, history) in cells.iter().zip(&outcome.histories) {
                if let Some(h) = history {
                    fs::write(dir.join(cell.history_filename()), h.to_json()?)?;
                }
            }
        }
    }
    Ok(outcome)
}

pub const TABLE_HEADER: &str =
    "model,activation,sigma2,constraint,act_fraction,dead_fraction,recon_loss,seed";

/// Render rows as CSV. Floats print in Rust's shortest round-trip form, so
/// equal runs produce byte-identical tables and [`read_table`] recovers the
/// exact values. Timing stays out of the table on purpose.
pub fn emit_table(rows: &[SweepRow]) -> String {
    let mut out = String::from(TABLE_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.model,
            r.activation,
            r.sigma2,
            r.constraint,
            r.act_fraction,
            r.dead_fraction,
            r.recon_loss,
            r.seed
        ));
    }
    out
}

pub fn write_table(rows: &[SweepRow], path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(path, emit_table(rows))?;
    Ok(())
}

/// Parse a table written by [`write_table`]. Columns absent from the file
/// (`epochs`, `wall_secs`) come back zeroed.
pub fn read_table(path: &Path) -> Result<Vec<SweepRow>> {
    let text = fs::read_to_string(path)?;
    let mut rows = Vec::new();
    let mut offset = 0u64;
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line != TABLE_HEADER {
                return Err(Error::Format {
                    offset: 0,
                    msg: format!("expected header {TABLE_HEADER:?}, got {line:?}"),
                });
            }
            offset += line.len() as u64 + 1;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        // The constraint column never contains a comma, so a plain split is
        // unambiguous; model tags like c1:2,0 never round-trip through this
        // table (they are written by tag and re-read as opaque strings), so
        // splitting from the right keeps them intact.
        if fields.len() < 8 {
            return Err(Error::Format {
                offset,
                msg: format!("expected 8 columns, got {}", fields.len()),
            });
        }
        let tail = &fields[fields.len() - 6..];
        let model_and_act = &fields[..fields.len() - 6];
        let (model, activation) = match model_and_act.len() {
            2 => (model_and_act[0].to_string(), model_and_act[1].to_string()),
            // A comma inside the model tag (c1:<q>,<p>) splits it in two.
            3 => (
                format!("{},{}", model_and_act[0], model_and_act[1]),
                model_and_act[2].to_string(),
            ),
            _ => {
                return Err(Error::Format {
                    offset,
                    msg: format!("unparseable row {line:?}"),
                })
            }
        };
        let parse = |s: &str, what: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|_| Error::Format {
                offset,
                msg: format!("bad {what}: {s:?}"),
            })
        };
        rows.push(SweepRow {
            model,
            activation,
            sigma2: parse(tail[0], "sigma2")?,
            constraint: tail[1].to_string(),
            act_fraction: parse(tail[2], "act_fraction")?,
            dead_fraction: parse(tail[3], "dead_fraction")?,
            recon_loss: parse(tail[4], "recon_loss")?,
            seed: tail[5].parse::<u64>().map_err(|_| Error::Format {
                offset,
                msg: format!("bad seed: {:?}", tail[5]),
            })?,
            epochs: 0,
            wall_secs: 0.0,
        });
        offset += line.len() as u64 + 1;
    }
    Ok(rows)
}
