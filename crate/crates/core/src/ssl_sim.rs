//! Threshold self-training, and the experiments that compare it across
//! unlabeled-pool variants.
//!
//! A round trains the base classifier on `L` plus the currently adopted
//! pseudo-labeled examples, measures test accuracy, then re-predicts the whole
//! unlabeled pool and adopts every example whose predicted-class decision
//! value exceeds the threshold. Adoptions take effect in the next round, so
//! round 1 is always the supervised-only model.

use std::collections::HashSet;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifiers::ClassifierConfig;
use crate::dataset::{self, EmbeddingDataset, LabelAssignment, Provenance, SplitSpec};
use crate::error::{Error, Result};
use crate::prune::{self, LabelMode, PseudoLabelOptions};
use crate::rng;
use crate::synthetic::{self, ScenarioKind};

pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const DEFAULT_ROUNDS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfTrainConfig {
    pub base_classifier: ClassifierConfig,
    /// Minimum predicted-class decision value for adoption.
    pub pseudo_label_threshold: f64,
    pub rounds: usize,
    pub seed: u64,
}

impl SelfTrainConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            base_classifier: ClassifierConfig::linear_svm(),
            pseudo_label_threshold: DEFAULT_THRESHOLD,
            rounds: DEFAULT_ROUNDS,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::param("self-training needs at least one round"));
        }
        if self.pseudo_label_threshold.is_nan() || self.pseudo_label_threshold == f64::NEG_INFINITY {
            return Err(Error::param("pseudo-label threshold must be a number"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolVariant {
    Full,
    Rand,
    Prune,
    Oracle,
    Coverage,
}

impl PoolVariant {
    pub const ALL: [PoolVariant; 5] = [
        PoolVariant::Full,
        PoolVariant::Rand,
        PoolVariant::Prune,
        PoolVariant::Oracle,
        PoolVariant::Coverage,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PoolVariant::Full => "full",
            PoolVariant::Rand => "rand",
            PoolVariant::Prune => "prune",
            PoolVariant::Oracle => "oracle",
            PoolVariant::Coverage => "coverage",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SslRunReport {
    pub pool_variant: Option<PoolVariant>,
    pub accuracy_per_round: Vec<f64>,
    /// Pseudo-labeled examples in the training set of each round.
    pub adopted_counts: Vec<usize>,
    pub final_accuracy: f64,
    /// Number of rounds in the first phase of a two-phase run.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phase_boundary: Option<usize>,
}

/// Running state of one self-training run; a run can switch pools between
/// calls to [`SelfTrainer::run`].
struct SelfTrainer<'a> {
    data: &'a EmbeddingDataset,
    labels: &'a LabelAssignment,
    labeled_rows: Vec<usize>,
    test_rows: Vec<usize>,
    base: &'a ClassifierConfig,
    threshold: f64,
    seed: u64,
    adopted: Vec<(usize, usize)>,
    round: usize,
    report: SslRunReport,
}

impl<'a> SelfTrainer<'a> {
    fn new(
        split: &SplitSpec,
        data: &'a EmbeddingDataset,
        labels: &'a LabelAssignment,
        config: &'a SelfTrainConfig,
    ) -> Result<Self> {
        config.validate()?;
        labels.check_len(data.len())?;
        if split.labeled_ids.is_empty() {
            return Err(Error::param("labeled pool is empty"));
        }
        if split.test_ids.is_empty() {
            return Err(Error::param("test split is empty"));
        }
        let labeled_rows = data.rows_for_ids(&split.labeled_ids)?;
        if labels.select_rows(&labeled_rows).populated_classes() < 2 {
            return Err(Error::SingleClass);
        }
        Ok(Self {
            data,
            labels,
            labeled_rows,
            test_rows: data.rows_for_ids(&split.test_ids)?,
            base: &config.base_classifier,
            threshold: config.pseudo_label_threshold,
            seed: config.seed,
            adopted: Vec::new(),
            round: 0,
            report: SslRunReport {
                pool_variant: None,
                accuracy_per_round: Vec::new(),
                adopted_counts: Vec::new(),
                final_accuracy: f64::NAN,
                phase_boundary: None,
            },
        })
    }

    fn run(&mut self, pool_rows: &[usize], rounds: usize) -> Result<()> {
        let pool = if pool_rows.is_empty() {
            None
        } else {
            Some(self.data.select_rows(pool_rows)?)
        };
        for _ in 0..rounds {
            let mut rows = self.labeled_rows.clone();
            let mut targets: Vec<usize> = rows.iter().map(|&r| self.labels.labels()[r]).collect();
            rows.extend(self.adopted.iter().map(|&(r, _)| r));
            targets.extend(self.adopted.iter().map(|&(_, l)| l));
            let train = self.data.select_rows(&rows)?;
            let train_labels = LabelAssignment::new(targets, self.labels.num_classes(), Provenance::External)?;
            let model = self.base.train(
                &train,
                &train_labels,
                rng::derive_seed(self.seed, "self-train-round", self.round as u64),
            )?;

            let test = self.data.select_rows(&self.test_rows)?;
            let correct = model
                .predict(&test)?
                .iter()
                .zip(&self.test_rows)
                .filter(|((pred, _), &r)| *pred == self.labels.labels()[r])
                .count();
            self.report.accuracy_per_round.push(correct as f64 / self.test_rows.len() as f64);
            self.report.adopted_counts.push(self.adopted.len());

            self.adopted = match &pool {
                None => Vec::new(),
                Some(pool) => model
                    .predict(pool)?
                    .into_iter()
                    .zip(pool_rows)
                    .filter(|((_, value), _)| *value > self.threshold)
                    .map(|((class, _), &r)| (r, class))
                    .collect(),
            };
            self.round += 1;
        }
        Ok(())
    }

    fn finish(mut self) -> SslRunReport {
        self.report.final_accuracy = *self.report.accuracy_per_round.last().expect("at least one round");
        self.report
    }
}

fn pool_rows(split: &SplitSpec, data: &EmbeddingDataset, pool: &[u64]) -> Result<Vec<usize>> {
    let unlabeled: HashSet<u64> = split.unlabeled_ids.iter().copied().collect();
    if let Some(&id) = pool.iter().find(|id| !unlabeled.contains(id)) {
        return Err(Error::param(format!("pool id {id} is not in the unlabeled split")));
    }
    data.rows_for_ids(pool)
}

/// Self-trains from `split.labeled_ids` using `unlabeled_pool` as the source of
/// pseudo-labels; test labels are read only to score each round.
pub fn self_train(
    split: &SplitSpec,
    data: &EmbeddingDataset,
    labels: &LabelAssignment,
    unlabeled_pool: &[u64],
    config: &SelfTrainConfig,
) -> Result<SslRunReport> {
    let mut trainer = SelfTrainer::new(split, data, labels, config)?;
    let rows = pool_rows(split, data, unlabeled_pool)?;
    trainer.run(&rows, config.rounds)?;
    Ok(trainer.finish())
}

/// A synthetic dataset together with how it is split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub n_per_class: usize,
    pub overlap: f64,
    pub dim: usize,
    pub per_class_labeled: usize,
    pub test_fraction: f64,
}

impl Scenario {
    /// Unit-variance Gaussians at `(+-1.5, 0)`, 2000 per class, 10 labels per class.
    pub fn overlapping_gaussians() -> Self {
        Self {
            kind: ScenarioKind::TwoGaussians,
            n_per_class: 2000,
            overlap: 1.5,
            dim: 2,
            per_class_labeled: 10,
            test_fraction: 0.2,
        }
    }

    /// Draws the dataset and split of one repetition.
    pub fn instantiate(&self, seed: u64) -> Result<(EmbeddingDataset, LabelAssignment, SplitSpec)> {
        let (data, labels) = synthetic::make_synthetic(
            self.kind,
            self.n_per_class,
            self.overlap,
            self.dim,
            rng::derive_seed(seed, "scenario-data", 0),
        )?;
        let split = dataset::make_split(
            &data,
            &labels,
            self.per_class_labeled,
            self.test_fraction,
            rng::derive_seed(seed, "scenario-split", 0),
        )?;
        Ok((data, labels, split))
    }
}

/// Everything a pool comparison needs besides the scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub keep_fraction: f64,
    pub repetitions: usize,
    pub seed: u64,
    pub base_classifier: ClassifierConfig,
    pub pseudo_label_threshold: f64,
    pub rounds: usize,
    /// Classifier whose confidence drives the prune and oracle pools.
    pub prune_classifier: ClassifierConfig,
    pub coverage_k: usize,
    pub variants: Vec<PoolVariant>,
}

impl SimulationConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            keep_fraction: prune::DEFAULT_KEEP_FRACTION,
            repetitions: 20,
            seed,
            base_classifier: ClassifierConfig::linear_svm(),
            pseudo_label_threshold: DEFAULT_THRESHOLD,
            rounds: DEFAULT_ROUNDS,
            prune_classifier: ClassifierConfig::rbf_svm(),
            coverage_k: prune::DEFAULT_COVERAGE_K,
            variants: PoolVariant::ALL.to_vec(),
        }
    }

    fn self_train_config(&self, rep_seed: u64, rounds: usize) -> SelfTrainConfig {
        SelfTrainConfig {
            base_classifier: self.base_classifier.clone(),
            pseudo_label_threshold: self.pseudo_label_threshold,
            rounds,
            seed: rng::derive_seed(rep_seed, "self-train", 0),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::param("repetitions must be at least 1"));
        }
        if !(self.keep_fraction > 0.0 && self.keep_fraction <= 1.0) {
            return Err(Error::param(format!(
                "keep fraction must lie in (0, 1], got {}",
                self.keep_fraction
            )));
        }
        Ok(())
    }

    fn repetition_seed(&self, rep: usize) -> u64 {
        rng::derive_seed(self.seed, "repetition", rep as u64)
    }
}

/// The unlabeled pool (sorted ids) of `variant` for one repetition.
pub fn build_pool(
    variant: PoolVariant,
    data: &EmbeddingDataset,
    labels: &LabelAssignment,
    split: &SplitSpec,
    config: &SimulationConfig,
    rep_seed: u64,
) -> Result<Vec<u64>> {
    let rows = data.rows_for_ids(&split.unlabeled_ids)?;
    let pool = data.select_rows(&rows)?;
    let pool_labels = labels.select_rows(&rows);
    let keep = config.keep_fraction;
    let result = match variant {
        PoolVariant::Full => return Ok(split.unlabeled_ids.clone()),
        PoolVariant::Rand => prune::prune_random(&pool, keep, rng::derive_seed(rep_seed, "pool-rand", 0))?,
        PoolVariant::Prune => prune::run_prunessl(
            &pool,
            LabelMode::Pseudo,
            None,
            &config.prune_classifier,
            keep,
            rng::derive_seed(rep_seed, "pool-prune", 0),
            &PseudoLabelOptions {
                k: Some(labels.num_classes()),
                l2_normalize: false,
            },
        )?,
        PoolVariant::Oracle => prune::run_prunessl(
            &pool,
            LabelMode::Oracle,
            Some(&pool_labels),
            &config.prune_classifier,
            keep,
            rng::derive_seed(rep_seed, "pool-oracle", 0),
            &PseudoLabelOptions::default(),
        )?,
        PoolVariant::Coverage => prune::prune_coverage(
            &pool,
            config.coverage_k,
            keep,
            rng::derive_seed(rep_seed, "pool-coverage", 0),
        )?,
    };
    Ok(result.kept_ids)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStderr {
    pub mean: f64,
    /// Sample standard deviation over `sqrt(n)`; 0 for a single value.
    pub stderr: f64,
    pub n: usize,
}

impl MeanStderr {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let stderr = if n > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, stderr, n }
    }

    /// `sqrt(se_a^2 + se_b^2)`, the standard error of a difference of means.
    pub fn pooled_stderr(&self, other: &Self) -> f64 {
        self.stderr.hypot(other.stderr)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: PoolVariant,
    pub final_accuracy: MeanStderr,
    pub pool_size: MeanStderr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionRuns {
    pub repetition: usize,
    pub seed: u64,
    pub runs: Vec<SslRunReport>,
    pub pool_sizes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub scenario: Scenario,
    pub config: SimulationConfig,
    pub summary: Vec<VariantSummary>,
    pub repetitions: Vec<RepetitionRuns>,
}

impl ComparisonReport {
    pub fn summary_for(&self, variant: PoolVariant) -> Option<&VariantSummary> {
        self.summary.iter().find(|s| s.variant == variant)
    }

    pub fn finals(&self, variant: PoolVariant) -> Vec<f64> {
        let idx = self.config.variants.iter().position(|&v| v == variant);
        idx.map_or_else(Vec::new, |i| {
            self.repetitions.iter().map(|r| r.runs[i].final_accuracy).collect()
        })
    }

    /// Long-format rows `variant,repetition,round,accuracy,adopted`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("variant,repetition,round,accuracy,adopted\n");
        for rep in &self.repetitions {
            for run in &rep.runs {
                let name = run.pool_variant.map_or("", PoolVariant::name);
                for (r, (acc, adopted)) in run.accuracy_per_round.iter().zip(&run.adopted_counts).enumerate() {
                    let _ = writeln!(out, "{name},{},{},{acc},{adopted}", rep.repetition, r + 1);
                }
            }
        }
        out
    }

    /// Summary JSON without per-round trajectories.
    pub fn summary_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Doc<'a> {
            scenario: &'a Scenario,
            config: &'a SimulationConfig,
            summary: &'a [VariantSummary],
        }
        Ok(serde_json::to_string_pretty(&Doc {
            scenario: &self.scenario,
            config: &self.config,
            summary: &self.summary,
        })?)
    }
}

/// Self-trains every configured pool variant on `repetitions` independent
/// draws of the scenario. Repetitions run in parallel and are merged in
/// repetition order.
pub fn compare_pools(scenario: &Scenario, config: &SimulationConfig) -> Result<ComparisonReport> {
    config.validate()?;
    if config.variants.is_empty() {
        return Err(Error::param("no pool variants requested"));
    }
    let repetitions = (0..config.repetitions)
        .into_par_iter()
        .map(|rep| {
            let seed = config.repetition_seed(rep);
            let (data, labels, split) = scenario.instantiate(seed)?;
            let st = config.self_train_config(seed, config.rounds);
            let mut runs = Vec::with_capacity(config.variants.len());
            let mut pool_sizes = Vec::with_capacity(config.variants.len());
            for &variant in &config.variants {
                let pool = build_pool(variant, &data, &labels, &split, config, seed)?;
                let mut report = self_train(&split, &data, &labels, &pool, &st)?;
                report.pool_variant = Some(variant);
                runs.push(report);
                pool_sizes.push(pool.len());
            }
            Ok(RepetitionRuns {
                repetition: rep,
                seed,
                runs,
                pool_sizes,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let summary = config
        .variants
        .iter()
        .enumerate()
        .map(|(i, &variant)| {
            let finals: Vec<f64> = repetitions.iter().map(|r| r.runs[i].final_accuracy).collect();
            let sizes: Vec<f64> = repetitions.iter().map(|r| r.pool_sizes[i] as f64).collect();
            VariantSummary {
                variant,
                final_accuracy: MeanStderr::of(&finals),
                pool_size: MeanStderr::of(&sizes),
            }
        })
        .collect();
    Ok(ComparisonReport {
        scenario: scenario.clone(),
        config: config.clone(),
        summary,
        repetitions,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumRun {
    pub repetition: usize,
    pub seed: u64,
    /// Phase 1 on the pruned pool, phase 2 on the full pool.
    pub two_phase: SslRunReport,
    /// The full pool for the same total number of rounds.
    pub never_pruned: SslRunReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumSummary {
    pub phase1_final: MeanStderr,
    pub phase1_peak: MeanStderr,
    pub phase2_final: MeanStderr,
    pub never_pruned_final: MeanStderr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumReport {
    pub scenario: Scenario,
    pub config: SimulationConfig,
    pub rounds_phase1: usize,
    pub rounds_phase2: usize,
    pub summary: CurriculumSummary,
    pub runs: Vec<CurriculumRun>,
}

impl CurriculumReport {
    /// Long-format rows `variant,repetition,round,accuracy,adopted,phase`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("variant,repetition,round,accuracy,adopted,phase\n");
        for run in &self.runs {
            for (name, report) in [("curriculum", &run.two_phase), ("full", &run.never_pruned)] {
                for (r, (acc, adopted)) in report
                    .accuracy_per_round
                    .iter()
                    .zip(&report.adopted_counts)
                    .enumerate()
                {
                    let phase = match report.phase_boundary {
                        Some(b) if r >= b => 2,
                        Some(_) => 1,
                        None => 0,
                    };
                    let _ = writeln!(out, "{name},{},{},{acc},{adopted},{phase}", run.repetition, r + 1);
                }
            }
        }
        out
    }

    pub fn summary_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Doc<'a> {
            scenario: &'a Scenario,
            config: &'a SimulationConfig,
            rounds_phase1: usize,
            rounds_phase2: usize,
            summary: &'a CurriculumSummary,
        }
        Ok(serde_json::to_string_pretty(&Doc {
            scenario: &self.scenario,
            config: &self.config,
            rounds_phase1: self.rounds_phase1,
            rounds_phase2: self.rounds_phase2,
            summary: &self.summary,
        })?)
    }
}

/// Self-trains on the pruned pool for `rounds_phase1` rounds, then puts the
/// pruned examples back and continues for `rounds_phase2` rounds. The adopted
/// set carries over the phase boundary.
pub fn curriculum_reintroduce(
    scenario: &Scenario,
    config: &SimulationConfig,
    rounds_phase1: usize,
    rounds_phase2: usize,
) -> Result<CurriculumReport> {
    config.validate()?;
    if rounds_phase1 == 0 || rounds_phase2 == 0 {
        return Err(Error::param("both phases need at least one round"));
    }
    let total = rounds_phase1 + rounds_phase2;
    let runs = (0..config.repetitions)
        .into_par_iter()
        .map(|rep| {
            let seed = config.repetition_seed(rep);
            let (data, labels, split) = scenario.instantiate(seed)?;
            let st = config.self_train_config(seed, total);
            let pruned = build_pool(PoolVariant::Prune, &data, &labels, &split, config, seed)?;

            let mut trainer = SelfTrainer::new(&split, &data, &labels, &st)?;
            trainer.run(&pool_rows(&split, &data, &pruned)?, rounds_phase1)?;
            trainer.run(&pool_rows(&split, &data, &split.unlabeled_ids)?, rounds_phase2)?;
            let mut two_phase = trainer.finish();
            two_phase.pool_variant = Some(PoolVariant::Prune);
            two_phase.phase_boundary = Some(rounds_phase1);

            let mut never_pruned = self_train(&split, &data, &labels, &split.unlabeled_ids, &st)?;
            never_pruned.pool_variant = Some(PoolVariant::Full);
            Ok(CurriculumRun {
                repetition: rep,
                seed,
                two_phase,
                never_pruned,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let collect = |f: &dyn Fn(&CurriculumRun) -> f64| MeanStderr::of(&runs.iter().map(f).collect::<Vec<_>>());
    let summary = CurriculumSummary {
        phase1_final: collect(&|r| r.two_phase.accuracy_per_round[rounds_phase1 - 1]),
        phase1_peak: collect(&|r| {
            r.two_phase.accuracy_per_round[..rounds_phase1]
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max)
        }),
        phase2_final: collect(&|r| r.two_phase.final_accuracy),
        never_pruned_final: collect(&|r| r.never_pruned.final_accuracy),
    };
    Ok(CurriculumReport {
        scenario: scenario.clone(),
        config: config.clone(),
        rounds_phase1,
        rounds_phase2,
        summary,
        runs,
    })
}
