//! Multi-seed evaluation runs and their reports: SAE baseline, per-dialect
//! task-only and TADA-composed rows, ablation over loss modes.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::data::{dialect_split, gen_tasks, TaskDataset, TaskSizes};
use super::train::{compose, evaluate, train_task_adapter, TaskTrainConfig, TaskTrainOutcome};
use super::TaskError;
use crate::align::{train_tada, AlignTrainConfig, LossMode};
use crate::dialect::{gen_parallel, RuleProfile};
use crate::encoder::{AdapterModule, AdapterRole, AdapterStack, EncoderModel};
use crate::rng::derive_seed;
use crate::textproc::{Corpus, Vocab};

pub const DEFAULT_SEEDS: [u64; 3] = [13, 42, 1234];

/// Full-scale reference mean for the SAE baseline row.
pub const REFERENCE_SAE_MEAN: f64 = 83.5;

/// Mean and sample standard deviation over seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellStat {
    pub mean: f64,
    pub sd: f64,
}

impl CellStat {
    pub fn from_samples(samples: &[f64]) -> CellStat {
        let n = samples.len();
        assert!(n > 0, "empty sample");
        let mean = samples.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            let ss: f64 = samples.iter().map(|x| (x - mean) * (x - mean)).sum();
            (ss / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        CellStat { mean, sd }
    }
}

/// One table row: per-task stats plus the mean column and deltas against the
/// SAE baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantRow {
    pub scores: BTreeMap<String, CellStat>,
    pub mean: f64,
    pub delta: BTreeMap<String, f64>,
    pub delta_mean: f64,
}

impl VariantRow {
    fn build(scores: BTreeMap<String, CellStat>, sae: &BTreeMap<String, CellStat>) -> VariantRow {
        let mean = scores.values().map(|c| c.mean).sum::<f64>() / scores.len() as f64;
        let delta: BTreeMap<String, f64> = scores
            .iter()
            .map(|(task, c)| (task.clone(), c.mean - sae[task].mean))
            .collect();
        let delta_mean = delta.values().sum::<f64>() / delta.len() as f64;
        VariantRow { scores, mean, delta, delta_mean }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialectSection {
    pub profile: String,
    pub task_only: VariantRow,
    pub composed: VariantRow,
    /// composed mean minus task-only mean.
    pub improvement: f64,
}

/// Raw per-seed scores, kept so every aggregate in the report can be
/// recomputed from the report alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub sae: BTreeMap<String, f64>,
    pub task_only: BTreeMap<String, BTreeMap<String, f64>>,
    pub composed: BTreeMap<String, BTreeMap<String, f64>>,
}

/// The point of the comparison: one alignment adapter serves every task,
/// while the per-task route costs one adapter per task per dialect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamAccounting {
    pub tada_params: usize,
    pub per_task_params: usize,
    pub task_count: usize,
    pub task_params_total: usize,
}

/// Published full-scale result the toy run is compared against directionally.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub dialect: String,
    pub task_only: f64,
    pub composed: f64,
    pub delta: f64,
}

pub fn reference_rows() -> Vec<ReferenceRow> {
    let row = |dialect: &str, task_only: f64, composed: f64, delta: f64| ReferenceRow {
        dialect: dialect.to_string(),
        task_only,
        composed,
        delta,
    };
    vec![
        row("AAVE", 74.7, 77.5, 2.8),
        row("Indian", 74.4, 74.7, 0.3),
        row("Nigerian", 76.3, 76.7, 0.4),
        row("Singaporean", 70.9, 74.8, 3.9),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceAblation {
    pub full: f64,
    pub no_ms: f64,
    pub no_ms_delta: f64,
    pub no_seq: f64,
    pub no_seq_delta: f64,
}

pub fn reference_ablation() -> ReferenceAblation {
    ReferenceAblation {
        full: 77.5,
        no_ms: 77.2,
        no_ms_delta: -0.3,
        no_seq: 32.6,
        no_seq_delta: -44.9,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seeds: Vec<u64>,
    pub sizes: TaskSizes,
    pub align: AlignTrainConfig,
    pub task: TaskTrainConfig,
    /// Seed for dataset generation and dialect test translation, distinct
    /// from the training seeds so splits stay fixed across seeds.
    pub data_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seeds: DEFAULT_SEEDS.to_vec(),
            sizes: TaskSizes::default(),
            align: AlignTrainConfig::default(),
            task: TaskTrainConfig::default(),
            data_seed: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: String,
    pub seeds: Vec<u64>,
    pub tasks: Vec<String>,
    pub sae: BTreeMap<String, CellStat>,
    pub sae_mean: f64,
    pub dialects: Vec<DialectSection>,
    pub per_seed: Vec<SeedRun>,
    pub params: ParamAccounting,
    pub notes: Vec<String>,
    pub reference: Vec<ReferenceRow>,
    pub reference_sae_mean: f64,
}

impl EvalReport {
    pub fn composed_grand_mean(&self) -> f64 {
        self.dialects.iter().map(|d| d.composed.mean).sum::<f64>() / self.dialects.len() as f64
    }

    pub fn task_only_grand_mean(&self) -> f64 {
        self.dialects.iter().map(|d| d.task_only.mean).sum::<f64>() / self.dialects.len() as f64
    }

    pub fn section(&self, profile: &str) -> Option<&DialectSection> {
        self.dialects.iter().find(|d| d.profile == profile)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub full: EvalReport,
    pub no_ms: EvalReport,
    pub no_seq: EvalReport,
    pub reference: ReferenceAblation,
}

struct SeedOutput {
    run: SeedRun,
    notes: Vec<String>,
}

fn eval_seed(
    model: &EncoderModel,
    corpus: &Corpus,
    vocab: &Vocab,
    profiles: &[RuleProfile],
    tasks: &[TaskDataset],
    dialect_tests: &[Vec<Vec<super::data::Example>>],
    cfg: &ExperimentConfig,
    mode: LossMode,
    seed: u64,
) -> Result<SeedOutput, TaskError> {
    let mut notes = Vec::new();
    let note = |notes: &mut Vec<String>, scope: &str, row: &str, n: &Option<String>| {
        if let Some(n) = n {
            notes.push(format!("seed {seed}, {scope}, {row}: {n}"));
        }
    };

    let mut sae = BTreeMap::new();
    let mut trained: Vec<TaskTrainOutcome> = Vec::with_capacity(tasks.len());
    for data in tasks {
        let out = train_task_adapter(model, data, &cfg.task, seed)?;
        if out.aborted {
            return Err(TaskError::TrainingAborted {
                stage: format!("{} adapter", data.spec.name),
                seed,
            });
        }
        let stack = AdapterStack::single(out.adapter.clone());
        let score = evaluate(model, &stack, &out.head, &data.spec, &data.test)?;
        note(&mut notes, "sae", "task-only", &score.note);
        sae.insert(data.spec.name.to_string(), score.value);
        trained.push(out);
    }

    let mut task_only = BTreeMap::new();
    let mut composed = BTreeMap::new();
    for (ip, profile) in profiles.iter().enumerate() {
        let pairs = gen_parallel(
            corpus,
            profile,
            vocab,
            cfg.align.pairs,
            derive_seed(seed, "eval/pairs", ip as u64),
        )?;
        let tada = train_tada(model, &pairs, &cfg.align, mode, derive_seed(seed, "eval/align", ip as u64))?;
        if tada.aborted {
            return Err(TaskError::TrainingAborted {
                stage: format!("{} alignment", profile.name),
                seed,
            });
        }
        let mut only_row = BTreeMap::new();
        let mut comp_row = BTreeMap::new();
        for (t, data) in tasks.iter().enumerate() {
            let test = &dialect_tests[ip][t];
            let out = &trained[t];
            let stack = AdapterStack::single(out.adapter.clone());
            let s = evaluate(model, &stack, &out.head, &data.spec, test)?;
            note(&mut notes, &profile.name, "task-only", &s.note);
            only_row.insert(data.spec.name.to_string(), s.value);
            let stack = compose(&tada.adapter, &out.adapter)?;
            let s = evaluate(model, &stack, &out.head, &data.spec, test)?;
            note(&mut notes, &profile.name, "composed", &s.note);
            comp_row.insert(data.spec.name.to_string(), s.value);
        }
        task_only.insert(profile.name.clone(), only_row);
        composed.insert(profile.name.clone(), comp_row);
    }

    Ok(SeedOutput {
        run: SeedRun { seed, sae, task_only, composed },
        notes,
    })
}

/// Train and score everything for one loss mode: task adapters per seed,
/// one TADA per dialect per seed, then the three table rows aggregated as
/// mean and sd over seeds.
pub fn run_experiment(
    model: &EncoderModel,
    corpus: &Corpus,
    vocab: &Vocab,
    profiles: &[RuleProfile],
    cfg: &ExperimentConfig,
    mode: LossMode,
) -> Result<EvalReport, TaskError> {
    if cfg.seeds.is_empty() {
        return Err(TaskError::Config("at least one seed is required".into()));
    }
    if profiles.is_empty() {
        return Err(TaskError::Config("at least one dialect profile is required".into()));
    }
    cfg.task.validate()?;

    let tasks = gen_tasks(vocab, &cfg.sizes, cfg.data_seed)?;
    let task_names: Vec<String> = tasks.iter().map(|d| d.spec.name.to_string()).collect();

    // one fixed dialect rendering of each test split, shared by all seeds
    let dialect_tests: Vec<Vec<Vec<super::data::Example>>> = profiles
        .iter()
        .enumerate()
        .map(|(ip, profile)| {
            tasks
                .iter()
                .enumerate()
                .map(|(t, data)| {
                    let seed =
                        derive_seed(cfg.data_seed, "eval/test", (ip * tasks.len() + t) as u64);
                    dialect_split(&data.test, profile, vocab, seed)
                })
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;

    let outputs: Vec<SeedOutput> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            eval_seed(model, corpus, vocab, profiles, &tasks, &dialect_tests, cfg, mode, seed)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let stat_over_seeds = |pick: &dyn Fn(&SeedRun) -> f64| {
        CellStat::from_samples(&outputs.iter().map(|o| pick(&o.run)).collect::<Vec<_>>())
    };
    let sae: BTreeMap<String, CellStat> = task_names
        .iter()
        .map(|name| (name.clone(), stat_over_seeds(&|r: &SeedRun| r.sae[name])))
        .collect();
    let sae_mean = sae.values().map(|c| c.mean).sum::<f64>() / sae.len() as f64;

    let dialects: Vec<DialectSection> = profiles
        .iter()
        .map(|profile| {
            let row = |table: &'static str| -> VariantRow {
                let scores: BTreeMap<String, CellStat> = task_names
                    .iter()
                    .map(|name| {
                        let pick = |r: &SeedRun| {
                            let rows = if table == "task_only" { &r.task_only } else { &r.composed };
                            rows[&profile.name][name]
                        };
                        (name.clone(), stat_over_seeds(&pick))
                    })
                    .collect();
                VariantRow::build(scores, &sae)
            };
            let task_only = row("task_only");
            let composed = row("composed");
            let improvement = composed.mean - task_only.mean;
            DialectSection {
                profile: profile.name.clone(),
                task_only,
                composed,
                improvement,
            }
        })
        .collect();

    let proto = AdapterModule::init(AdapterRole::Alignment, "tada", model.cfg(), 0);
    let per_task = AdapterModule::init(AdapterRole::Task, "task", model.cfg(), 0);
    let params = ParamAccounting {
        tada_params: proto.param_count(),
        per_task_params: per_task.param_count(),
        task_count: tasks.len(),
        task_params_total: per_task.param_count() * tasks.len(),
    };

    let notes: Vec<String> = outputs.iter().flat_map(|o| o.notes.iter().cloned()).collect();
    let per_seed: Vec<SeedRun> = outputs.into_iter().map(|o| o.run).collect();

    Ok(EvalReport {
        mode: mode.as_str().to_string(),
        seeds: cfg.seeds.clone(),
        tasks: task_names,
        sae,
        sae_mean,
        dialects,
        per_seed,
        params,
        notes,
        reference: reference_rows(),
        reference_sae_mean: REFERENCE_SAE_MEAN,
    })
}

/// Three experiments with identical seeds and configs, differing only in the
/// alignment loss mode.
pub fn run_ablation(
    model: &EncoderModel,
    corpus: &Corpus,
    vocab: &Vocab,
    profiles: &[RuleProfile],
    cfg: &ExperimentConfig,
) -> Result<AblationReport, TaskError> {
    Ok(AblationReport {
        full: run_experiment(model, corpus, vocab, profiles, cfg, LossMode::Full)?,
        no_ms: run_experiment(model, corpus, vocab, profiles, cfg, LossMode::NoMs)?,
        no_seq: run_experiment(model, corpus, vocab, profiles, cfg, LossMode::NoSeq)?,
        reference: reference_ablation(),
    })
}

fn fmt_seed_list(seeds: &[u64]) -> String {
    seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(", ")
}

/// Plain-text table mirroring the report JSON.
pub fn render_text(report: &EvalReport) -> String {
    use std::fmt::Write;
    let mut s = String::new();
    let w = 16usize;
    writeln!(s, "alignment mode: {}", report.mode).unwrap();
    writeln!(s, "seeds: {}", fmt_seed_list(&report.seeds)).unwrap();
    writeln!(s).unwrap();

    writeln!(s, "SAE test, task adapter only").unwrap();
    write!(s, "  {:<w$}", "task").unwrap();
    writeln!(s, "{:>10} {:>10}", "mean", "sd").unwrap();
    for task in &report.tasks {
        let c = &report.sae[task];
        writeln!(s, "  {:<w$}{:>10.4} {:>10.4}", task, c.mean, c.sd).unwrap();
    }
    writeln!(s, "  {:<w$}{:>10.4}", "mean", report.sae_mean).unwrap();

    for section in &report.dialects {
        writeln!(s).unwrap();
        writeln!(s, "dialect {}", section.profile).unwrap();
        write!(s, "  {:<w$}", "row").unwrap();
        for task in &report.tasks {
            write!(s, "{:>18}", task).unwrap();
        }
        writeln!(s, "{:>10} {:>10}", "mean", "delta").unwrap();
        for (label, row) in [("task-only", &section.task_only), ("composed", &section.composed)] {
            write!(s, "  {:<w$}", label).unwrap();
            for task in &report.tasks {
                let c = &row.scores[task];
                write!(s, "{:>18}", format!("{:.4}+-{:.4}", c.mean, c.sd)).unwrap();
            }
            writeln!(s, "{:>10.4} {:>+10.4}", row.mean, row.delta_mean).unwrap();
        }
        writeln!(s, "  improvement (composed - task-only): {:+.4}", section.improvement).unwrap();
    }

    writeln!(s).unwrap();
    writeln!(
        s,
        "params: tada {} shared across {} tasks; per-task route {} x {} = {}",
        report.params.tada_params,
        report.params.task_count,
        report.params.per_task_params,
        report.params.task_count,
        report.params.task_params_total,
    )
    .unwrap();

    if !report.notes.is_empty() {
        writeln!(s).unwrap();
        writeln!(s, "notes:").unwrap();
        for n in &report.notes {
            writeln!(s, "  - {n}").unwrap();
        }
    }

    writeln!(s).unwrap();
    writeln!(s, "reference (RoBERTa-base scale, directional target only)").unwrap();
    write!(s, "  {:<w$}", "dialect").unwrap();
    writeln!(s, "{:>10} {:>10} {:>10}", "task-only", "composed", "delta").unwrap();
    for r in &report.reference {
        writeln!(
            s,
            "  {:<w$}{:>10.1} {:>10.1} {:>+10.1}",
            r.dialect, r.task_only, r.composed, r.delta
        )
        .unwrap();
    }
    writeln!(s, "  SAE mean at that scale: {:.1}", report.reference_sae_mean).unwrap();
    s
}

pub fn render_ablation(report: &AblationReport) -> String {
    use std::fmt::Write;
    let mut s = String::new();
    writeln!(s, "loss ablation, composed dialect means").unwrap();
    writeln!(s, "seeds: {}", fmt_seed_list(&report.full.seeds)).unwrap();
    writeln!(s).unwrap();
    let full_mean = report.full.composed_grand_mean();
    let rows = [
        ("full", &report.full),
        ("no_ms", &report.no_ms),
        ("no_seq", &report.no_seq),
    ];
    writeln!(
        s,
        "  {:<10}{:>12} {:>12} {:>14}",
        "mode", "composed", "vs full", "task-only"
    )
    .unwrap();
    for (label, rep) in rows {
        let m = rep.composed_grand_mean();
        writeln!(
            s,
            "  {:<10}{:>12.4} {:>+12.4} {:>14.4}",
            label,
            m,
            m - full_mean,
            rep.task_only_grand_mean(),
        )
        .unwrap();
    }
    writeln!(s).unwrap();
    let r = &report.reference;
    writeln!(
        s,
        "reference at full scale: full {:.1}; no_ms {:.1} ({:+.1}); no_seq {:.1} ({:+.1})",
        r.full, r.no_ms, r.no_ms_delta, r.no_seq, r.no_seq_delta
    )
    .unwrap();
    s
}
