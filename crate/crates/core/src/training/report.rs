use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use super::data::SplitData;
use super::metrics::TaskMetrics;
use super::trainer::{evaluate, train, EpochRecord, TrainConfig, Trained};
use crate::models::{Model, ModelKind, ModelSpec, Task};
use crate::{Error, Result};

/// One trained model and its test-split scores.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub run_id: String,
    /// `STL` or `MTL` in comparisons; free-form elsewhere.
    pub arm: String,
    pub spec: ModelSpec,
    pub trained: Trained,
    pub metrics: Vec<(Task, TaskMetrics)>,
}

impl RunResult {
    pub fn metric(&self, task: Task) -> Option<&TaskMetrics> {
        self.metrics.iter().find(|(t, _)| *t == task).map(|(_, m)| m)
    }

    /// Trains `spec` from a fresh initialization seeded with `cfg.seed` and
    /// scores it on the test split.
    pub fn execute(run_id: &str, arm: &str, spec: &ModelSpec, cfg: &TrainConfig, data: &SplitData) -> Result<Self> {
        let model = Model::build(spec, cfg.seed)?;
        let trained = train(model, data, cfg)?;
        let metrics = evaluate(&trained, &data.test)?;
        log::info!("{run_id}: finished after {} epochs", trained.history.epochs.len());
        Ok(Self {
            run_id: run_id.to_string(),
            arm: arm.to_string(),
            spec: spec.clone(),
            trained,
            metrics,
        })
    }

    pub fn rows(&self) -> Vec<MetricRow> {
        self.metrics
            .iter()
            .map(|(task, m)| MetricRow {
                run: self.run_id.clone(),
                arm: self.arm.clone(),
                model: model_label(self.spec.kind).to_string(),
                task: *task,
                metrics: m.clone(),
            })
            .collect()
    }

    pub fn history_jsonl(&self) -> String {
        #[derive(Serialize)]
        struct Line<'a> {
            run: &'a str,
            #[serde(flatten)]
            record: &'a EpochRecord,
        }
        let mut out = String::new();
        for r in &self.trained.history.epochs {
            let line = Line {
                run: &self.run_id,
                record: r,
            };
            out.push_str(&serde_json::to_string(&line).expect("history serializes"));
            out.push('\n');
        }
        out
    }
}

/// Short architecture name used in report tables.
pub fn model_label(kind: ModelKind) -> &'static str {
    match kind {
        ModelKind::Mlp | ModelKind::MultitaskMlp => "MLP",
        ModelKind::Lstm => "LSTM",
        ModelKind::Cnn => "CNN",
        ModelKind::MultitaskCnnLstm => "CNN+LSTM",
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub run: String,
    pub arm: String,
    pub model: String,
    pub task: Task,
    pub metrics: TaskMetrics,
}

impl MetricRow {
    fn cells(&self) -> [String; 9] {
        let f = |v: f64| format!("{v:.4}");
        let (a, p, r, f1, mae, rmse) = match &self.metrics {
            TaskMetrics::Classification(c) => (f(c.accuracy), f(c.precision), f(c.recall), f(c.f1), String::new(), String::new()),
            TaskMetrics::Regression(m) => (String::new(), String::new(), String::new(), String::new(), f(m.mae), f(m.rmse)),
        };
        [self.arm.clone(), self.model.clone(), self.task.to_string(), a, p, r, f1, mae, rmse]
    }

    pub const HEADER: [&'static str; 9] = [
        "arm", "model", "task", "accuracy", "precision", "recall", "f1_macro", "mae", "rmse",
    ];

    /// Fixed-width plain-text table.
    pub fn render_text(rows: &[MetricRow]) -> String {
        let body: Vec<[String; 9]> = rows.iter().map(MetricRow::cells).collect();
        let mut widths = Self::HEADER.map(str::len);
        for r in &body {
            for (w, c) in widths.iter_mut().zip(r) {
                *w = (*w).max(c.len());
            }
        }
        let mut out = String::new();
        let line = |out: &mut String, cells: &[String]| {
            let parts: Vec<String> = cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect();
            let _ = writeln!(out, "{}", parts.join("  ").trim_end());
        };
        line(&mut out, &Self::HEADER.map(String::from));
        let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
        line(&mut out, &rule);
        for r in &body {
            line(&mut out, r);
        }
        out
    }

    pub fn render_csv(rows: &[MetricRow]) -> String {
        let mut out = Self::HEADER.join(",");
        out.push('\n');
        for r in rows {
            out.push_str(&r.cells().join(","));
            out.push('\n');
        }
        out
    }
}

/// Three single-task models and one multi-task model trained under one
/// configuration.
#[derive(Debug, Clone)]
pub struct ComparisonReport {
    pub config: TrainConfig,
    pub runs: Vec<RunResult>,
}

impl ComparisonReport {
    pub fn run(&self, run_id: &str) -> Option<&RunResult> {
        self.runs.iter().find(|r| r.run_id == run_id)
    }

    /// MTL rows first (one per task, profiling tasks then speaker), then the
    /// matching STL rows.
    pub fn rows(&self) -> Vec<MetricRow> {
        let mut rows = Vec::new();
        for arm in ["MTL", "STL"] {
            for task in [Task::Accent, Task::Gender, Task::Age, Task::Speaker] {
                for r in self.runs.iter().filter(|r| r.arm == arm) {
                    rows.extend(r.rows().into_iter().filter(|row| row.task == task));
                }
            }
        }
        rows
    }

    pub fn summary_text(&self) -> String {
        MetricRow::render_text(&self.rows())
    }

    pub fn summary_csv(&self) -> String {
        MetricRow::render_csv(&self.rows())
    }

    pub fn history_jsonl(&self) -> String {
        self.runs.iter().map(RunResult::history_jsonl).collect()
    }
}

/// Single-task counterparts of a multi-task MLP: same trunk widths, batchnorm
/// and dropout, one head each.
pub fn stl_specs_for(mtl: &ModelSpec) -> Result<Vec<ModelSpec>> {
    if mtl.kind != ModelKind::MultitaskMlp {
        return Err(Error::Config(format!(
            "no single-task counterpart is defined for {:?}",
            mtl.kind
        )));
    }
    Ok(mtl
        .tasks
        .iter()
        .map(|&task| {
            let mut s = mtl.clone();
            s.kind = ModelKind::Mlp;
            s.tasks = vec![task];
            s.hidden = Some(mtl.hidden_widths());
            s.batch_norm = Some(mtl.uses_batch_norm());
            s
        })
        .collect())
}

/// Trains every STL spec and the MTL spec from the same seed and data order.
/// The runs are independent and execute in parallel; results keep input order.
pub fn run_comparison(
    stl_specs: &[ModelSpec],
    mtl_spec: &ModelSpec,
    cfg: &TrainConfig,
    data: &SplitData,
) -> Result<ComparisonReport> {
    if !mtl_spec.kind.is_multitask() || stl_specs.iter().any(|s| s.kind.is_multitask()) {
        return Err(Error::Config(
            "comparison needs single-task STL specs and a multi-task MTL spec".into(),
        ));
    }
    let mut jobs: Vec<(String, &str, &ModelSpec)> = stl_specs
        .iter()
        .map(|s| (format!("stl-{}", s.tasks[0]), "STL", s))
        .collect();
    jobs.push(("mtl".into(), "MTL", mtl_spec));
    let runs = jobs
        .par_iter()
        .map(|(id, arm, spec)| RunResult::execute(id, arm, spec, cfg, data))
        .collect::<Result<Vec<_>>>()?;
    Ok(ComparisonReport {
        config: cfg.clone(),
        runs,
    })
}
