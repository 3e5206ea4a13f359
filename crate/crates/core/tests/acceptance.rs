//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! The process exits 0 after reporting unless `PRUNESSL_ACCEPTANCE_STRICT=1`,
//! in which case any FAIL makes it exit 1.

mod common;

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use prunessl::classifiers::mlp::MlpModel;
use prunessl::classifiers::svm::{train_binary, SvmParams};
use prunessl::metrics::linear_probe;
use prunessl::prune::{keep_count, prune_confidence, run_prunessl, PseudoLabelOptions};
use prunessl::pseudo_label::{kmeans_assign, kmeans_fit, KMeansParams};
use prunessl::ssl_sim::{
    compare_pools, curriculum_reintroduce, ComparisonReport, MeanStderr, PoolVariant, Scenario, SimulationConfig,
};
use prunessl::{ClassifierConfig, ClassifierKind, ConfidenceScores, EmbeddingDataset, LabelMode, Provenance};
use rand::seq::SliceRandom;
use rand::Rng;

const SEED: u64 = 1;
const REPS: usize = 20;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn with_budget(outcome: Outcome, elapsed: Duration, budget: Option<Duration>) -> Outcome {
    match budget {
        Some(b) if elapsed > b => Outcome::new(
            false,
            format!("{}; over the {:.0} s budget", outcome.detail, b.as_secs_f64()),
        ),
        _ => outcome,
    }
}

fn main() {
    let criteria: Vec<(&str, Option<u64>, Box<dyn FnOnce(&mut Shared) -> Outcome>)> = vec![
        ("smo correctness", Some(60), Box::new(|_| smo_correctness())),
        ("k-means correctness", Some(10), Box::new(|_| kmeans_correctness())),
        ("mlp gradient check", Some(30), Box::new(|_| mlp_gradient_check())),
        ("pruning contracts", Some(5), Box::new(|_| pruning_contracts())),
        ("qualitative ordering", Some(300), Box::new(qualitative_ordering)),
        ("coverage inferiority", Some(180), Box::new(coverage_inferiority)),
        ("curriculum reintroduction", None, Box::new(|_| curriculum())),
        ("labeled-size trend", None, Box::new(labeled_size_trend)),
        ("separability gain", None, Box::new(|_| separability_gain())),
        ("determinism", None, Box::new(|_| determinism())),
    ];

    let mut shared = Shared::default();
    let mut failures = 0;
    for (i, (name, budget, check)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let outcome = check(&mut shared);
        let elapsed = start.elapsed();
        let outcome = with_budget(outcome, elapsed, budget.map(Duration::from_secs));
        if !outcome.pass {
            failures += 1;
        }
        println!(
            "criterion {:>2} {:<26} {} ({:.1} s) {}",
            i + 1,
            name,
            if outcome.pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            outcome.detail
        );
    }
    println!("acceptance: {} of 10 criteria pass", 10 - failures);
    let strict = std::env::var("PRUNESSL_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if strict && failures > 0 {
        std::process::exit(1);
    }
}

/// Results reused by later criteria.
#[derive(Default)]
struct Shared {
    comparison: Option<ComparisonReport>,
}

impl Shared {
    fn comparison(&mut self) -> &ComparisonReport {
        self.comparison.get_or_insert_with(|| {
            let config = SimulationConfig {
                repetitions: REPS,
                ..SimulationConfig::new(SEED)
            };
            compare_pools(&Scenario::overlapping_gaussians(), &config).expect("comparison run")
        })
    }
}

fn smo_correctness() -> Outcome {
    let mut rng = common::rng(101);
    let tol = 1e-3;
    let mut worst_kkt: f64 = 0.0;
    let mut worst_balance: f64 = 0.0;
    let mut problems = Vec::new();
    for p in 0..200 {
        let n = rng.random_range(2..=60);
        let d = rng.random_range(1..=5);
        let data = common::random_dataset(&mut rng, n, d, 2.0);
        let y = common::random_targets(&mut rng, n);
        let c = 10f64.powf(rng.random_range(-1.0..1.0));
        let base = if p % 2 == 0 {
            SvmParams::linear()
        } else {
            SvmParams::rbf().with_gamma(rng.random_range(0.1..2.0))
        };
        let params = base.with_c(c).with_seed(p);
        let model = match train_binary(&data, &y, &params) {
            Ok(m) => m,
            Err(e) => return Outcome::new(false, format!("problem {p}: {e}")),
        };
        if !model.stats.converged {
            problems.push(format!("problem {p} did not converge"));
        }
        if model.support_alphas.iter().any(|&a| !(0.0..=c).contains(&a)) {
            problems.push(format!("problem {p}: alpha outside [0, C]"));
        }
        let balance = model.support_alphas.iter().zip(&y).map(|(a, t)| a * t).sum::<f64>().abs();
        worst_balance = worst_balance.max(balance);
        worst_kkt = worst_kkt.max(common::kkt_violation(&model, &data));
    }
    if worst_balance > 1e-6 {
        problems.push(format!("|sum alpha y| reached {worst_balance:.2e}"));
    }
    if worst_kkt > tol {
        problems.push(format!("KKT violation reached {worst_kkt:.2e}"));
    }

    // Small instances against exhaustive enumeration of the dual.
    let mut compared = 0;
    let mut worst_gap: f64 = 0.0;
    for p in 0..40u64 {
        let rbf = p % 2 == 1;
        let n = rng.random_range(3..=if rbf { 6 } else { 5 });
        let d = if rbf { rng.random_range(1..=5) } else { rng.random_range(n..=5) };
        let data = common::random_dataset(&mut rng, n, d, 2.0);
        let y = common::random_targets(&mut rng, n);
        let c = 10f64.powf(rng.random_range(-1.0..1.0));
        let params = if rbf {
            SvmParams::rbf().with_gamma(rng.random_range(0.2..2.0))
        } else {
            SvmParams::linear()
        }
        .with_c(c)
        .with_seed(p);
        let model = train_binary(&data, &y, &params).expect("small problem trains");
        let kernel = model.kernel;
        let Some(oracle) = common::brute_force_svm(&data, &y, &kernel, c) else {
            problems.push(format!("small problem {p}: enumeration found no KKT point"));
            continue;
        };
        let k = common::gram(&data, &kernel);
        let gap = (common::dual_objective(&model.support_alphas, &y, &k) - oracle.objective).abs()
            / (1.0 + oracle.objective.abs());
        worst_gap = worst_gap.max(gap);
        let (b_lo, b_hi) = oracle.bias_range;
        if model.bias < b_lo - tol || model.bias > b_hi + tol {
            problems.push(format!("small problem {p}: bias outside the enumeration's KKT interval"));
        }
        // Only points whose sign is fixed over the whole bias interval count.
        let probes = common::random_dataset(&mut rng, 20, d, 3.0);
        let points: Vec<&[f32]> = data.rows().chain(probes.rows()).collect();
        for x in points {
            let (f_lo, f_hi) = common::decision_range(&oracle, &data, &y, &kernel, x);
            let f = model.decision(x);
            if (f_lo >= 0.05 && f <= 0.0) || (f_hi <= -0.05 && f >= 0.0) {
                problems.push(format!("small problem {p}: prediction differs from the enumeration"));
                break;
            }
        }
        compared += 1;
    }
    if worst_gap > 1e-3 {
        problems.push(format!("dual objective gap to enumeration reached {worst_gap:.2e}"));
    }
    let detail = format!(
        "max KKT {worst_kkt:.1e}, max |sum alpha y| {worst_balance:.1e}, {compared} small problems, max dual gap {worst_gap:.1e}"
    );
    outcome_from(problems, detail)
}

fn outcome_from(problems: Vec<String>, detail: String) -> Outcome {
    if problems.is_empty() {
        Outcome::new(true, detail)
    } else {
        Outcome::new(false, format!("{detail}; {}", problems.join("; ")))
    }
}

fn kmeans_correctness() -> Outcome {
    let mut rng = common::rng(202);
    let mut problems = Vec::new();
    let mut worst_mean_err: f64 = 0.0;
    for run in 0..100u64 {
        let n = rng.random_range(10..=200);
        let d = rng.random_range(1..=4);
        let k = rng.random_range(1..=8.min(n));
        let data = common::random_dataset(&mut rng, n, d, 5.0);
        let model = kmeans_fit(&data, &KMeansParams::new(k, run)).expect("k-means fits");
        if model
            .inertia_trace
            .windows(2)
            .any(|w| w[1] > w[0] * (1.0 + 1e-12) + 1e-12)
        {
            problems.push(format!("run {run}: inertia increased"));
        }
        if !model.converged {
            problems.push(format!("run {run}: did not converge"));
            continue;
        }
        let assignment = kmeans_assign(&model, &data).unwrap();
        for c in 0..k {
            let members: Vec<usize> = (0..n).filter(|&i| assignment.labels()[i] == c).collect();
            if members.is_empty() {
                continue;
            }
            for j in 0..d {
                let mean = members.iter().map(|&i| f64::from(data.row(i)[j])).sum::<f64>() / members.len() as f64;
                worst_mean_err = worst_mean_err.max((mean - model.centroid(c)[j]).abs());
            }
        }
    }
    if worst_mean_err > 1e-6 {
        problems.push(format!("centroid differs from member mean by {worst_mean_err:.2e}"));
    }

    let eps = 0.25f32;
    let rows = vec![vec![0.0, 0.0], vec![0.0, eps], vec![10.0, 10.0], vec![10.0, 10.0 + eps]];
    let data = EmbeddingDataset::from_rows(&rows).unwrap();
    for seed in 0..10 {
        let model = kmeans_fit(&data, &KMeansParams::new(2, seed)).unwrap();
        let mut cents: Vec<Vec<f64>> = (0..2).map(|c| model.centroid(c).to_vec()).collect();
        cents.sort_by(|a, b| a[0].total_cmp(&b[0]));
        let h = f64::from(eps) / 2.0;
        if cents != vec![vec![0.0, h], vec![10.0, 10.0 + h]] {
            problems.push(format!("two tight pairs, seed {seed}: centroids {cents:?}"));
        }
    }
    outcome_from(problems, format!("max centroid-mean error {worst_mean_err:.1e}"))
}

fn mlp_gradient_check() -> Outcome {
    let mut rng = common::rng(303);
    let mut worst: f64 = 0.0;
    for net in 0..50u64 {
        let inputs = rng.random_range(1..=4);
        let hidden_layers = rng.random_range(1..=2);
        let mut sizes = vec![inputs];
        for _ in 0..hidden_layers {
            sizes.push(rng.random_range(2..=6));
        }
        let classes = rng.random_range(2..=4);
        sizes.push(classes);
        let mut model = MlpModel::init(&sizes, net).unwrap();
        // Random biases keep pre-activations off the ReLU kink at exactly 0.
        let params: Vec<f64> = model
            .params_flat()
            .iter()
            .map(|&w| w + rng.random_range(-0.5..0.5))
            .collect();
        model.set_params_flat(&params);
        let data = common::random_dataset(&mut rng, 8, inputs, 2.0);
        let labels: Vec<usize> = (0..8).map(|_| rng.random_range(0..classes)).collect();
        let rows: Vec<usize> = (0..8).collect();
        let analytic = model.loss_and_gradient(&data, &labels, &rows).1.flatten();
        let numeric = common::finite_difference_gradient(&model, &data, &labels, &rows, 1e-5);
        worst = worst.max(common::relative_error(&analytic, &numeric));
    }
    Outcome::new(worst <= 1e-4, format!("max relative error {worst:.1e} over 50 networks"))
}

fn pruning_contracts() -> Outcome {
    let mut rng = common::rng(404);
    let keeps = [0.2, 0.4, 0.6, 0.8, 1.0];
    let mut problems = Vec::new();
    for v in 0..100 {
        let n = rng.random_range(1..=500);
        let mut ids: Vec<u64> = (0..n as u64).map(|i| i * 3 + 7).collect();
        ids.shuffle(&mut rng);
        let rows: Vec<Vec<f32>> = (0..n).map(|i| vec![i as f32]).collect();
        let data = EmbeddingDataset::new(ids.clone(), rows.concat(), 1).unwrap();
        // Every other vector draws from a few values so ties are common.
        let scores: Vec<f64> = (0..n)
            .map(|_| {
                if v % 2 == 0 {
                    rng.random_range(-3.0..3.0)
                } else {
                    f64::from(rng.random_range(-2i32..=2))
                }
            })
            .collect();
        let conf = ConfidenceScores {
            scores: scores.clone(),
            classifier_kind: ClassifierKind::LinearSvm,
            label_source: Provenance::Oracle,
        };
        let mut previous: Option<Vec<u64>> = None;
        for keep in keeps {
            let result = prune_confidence(&data, &conf, keep).unwrap();
            let expected = (keep * n as f64 - 1e-9).ceil() as usize;
            if result.kept_ids.len() != expected.max(1) || result.kept_ids.len() != keep_count(n, keep) {
                problems.push(format!("vector {v}, keep {keep}: kept {}", result.kept_ids.len()));
            }
            // Independent oracle: sort (id, score) pairs and take the prefix.
            let mut pairs: Vec<(u64, f64)> = ids.iter().copied().zip(scores.iter().copied()).collect();
            pairs.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            let mut oracle: Vec<u64> = pairs[..result.kept_ids.len()].iter().map(|p| p.0).collect();
            oracle.sort_unstable();
            if oracle != result.kept_ids {
                problems.push(format!("vector {v}, keep {keep}: kept set differs from re-sort"));
            }
            if result.threshold != Some(pairs[result.kept_ids.len() - 1].1) {
                problems.push(format!("vector {v}, keep {keep}: threshold differs from re-sort"));
            }
            if let Some(prev) = &previous {
                if !prev.iter().all(|id| result.kept_ids.binary_search(id).is_ok()) {
                    problems.push(format!("vector {v}, keep {keep}: not nested"));
                }
            }
            if keep == 1.0 {
                let mut all = ids.clone();
                all.sort_unstable();
                if result.kept_ids != all || !result.pruned_ids.is_empty() {
                    problems.push(format!("vector {v}: keep 1.0 is not the identity"));
                }
            }
            previous = Some(result.kept_ids);
        }
    }
    problems.truncate(5);
    outcome_from(problems, "100 vectors x 5 keep fractions".into())
}

fn describe(m: &MeanStderr) -> String {
    format!("{:.4}+-{:.4}", m.mean, m.stderr)
}

fn finals(report: &ComparisonReport, variant: PoolVariant) -> MeanStderr {
    MeanStderr::of(&report.finals(variant))
}

fn qualitative_ordering(shared: &mut Shared) -> Outcome {
    let report = shared.comparison();
    let full = finals(report, PoolVariant::Full);
    let rand = finals(report, PoolVariant::Rand);
    let prune = finals(report, PoolVariant::Prune);
    let oracle = finals(report, PoolVariant::Oracle);
    let mut problems = Vec::new();
    if oracle.mean < prune.mean {
        problems.push("oracle < prune".to_string());
    }
    if prune.mean - full.mean < prune.pooled_stderr(&full) {
        problems.push("prune - full below one pooled standard error".to_string());
    }
    if full.mean < rand.mean - rand.stderr {
        problems.push("full < rand - 1 standard error".to_string());
    }
    let detail = format!(
        "oracle {} prune {} full {} rand {}",
        describe(&oracle),
        describe(&prune),
        describe(&full),
        describe(&rand)
    );
    outcome_from(problems, detail)
}

fn coverage_inferiority(shared: &mut Shared) -> Outcome {
    let report = shared.comparison();
    let coverage = finals(report, PoolVariant::Coverage);
    let rand = finals(report, PoolVariant::Rand);
    let margin = rand.mean - coverage.mean;
    let pooled = coverage.pooled_stderr(&rand);
    Outcome::new(
        margin >= pooled,
        format!(
            "reuses criterion 5 runs; coverage {} rand {}; rand - coverage {:.4} vs pooled se {:.4}",
            describe(&coverage),
            describe(&rand),
            margin,
            pooled
        ),
    )
}

fn curriculum() -> Outcome {
    let config = SimulationConfig {
        repetitions: REPS,
        ..SimulationConfig::new(SEED)
    };
    let report = curriculum_reintroduce(&Scenario::overlapping_gaussians(), &config, 10, 10).expect("curriculum run");
    let s = &report.summary;
    let gap = (s.phase2_final.mean - s.never_pruned_final.mean).abs();
    let pooled = s.phase2_final.pooled_stderr(&s.never_pruned_final);
    let mut problems = Vec::new();
    if s.phase2_final.mean > s.phase1_final.mean {
        problems.push("phase 2 final above phase 1 final".to_string());
    }
    if gap > 2.0 * pooled {
        problems.push(format!("|phase 2 - never pruned| {gap:.4} exceeds 2 pooled se {:.4}", 2.0 * pooled));
    }
    let detail = format!(
        "phase 1 {} phase 2 {} never pruned {}",
        describe(&s.phase1_final),
        describe(&s.phase2_final),
        describe(&s.never_pruned_final)
    );
    outcome_from(problems, detail)
}

fn labeled_size_trend(shared: &mut Shared) -> Outcome {
    let mut gaps = Vec::new();
    for per_class in [5usize, 10, 50] {
        let gap = if per_class == 10 {
            let report = shared.comparison();
            finals(report, PoolVariant::Prune).mean - finals(report, PoolVariant::Full).mean
        } else {
            let scenario = Scenario {
                per_class_labeled: per_class,
                ..Scenario::overlapping_gaussians()
            };
            let config = SimulationConfig {
                repetitions: REPS,
                variants: vec![PoolVariant::Full, PoolVariant::Prune],
                ..SimulationConfig::new(SEED)
            };
            let report = compare_pools(&scenario, &config).expect("comparison run");
            finals(&report, PoolVariant::Prune).mean - finals(&report, PoolVariant::Full).mean
        };
        gaps.push(gap);
    }
    let pass = gaps.windows(2).all(|w| w[1] <= w[0]);
    Outcome::new(
        pass,
        format!(
            "prune - full at |L|/class 5, 10, 50: {:.4}, {:.4}, {:.4}",
            gaps[0], gaps[1], gaps[2]
        ),
    )
}

fn separability_gain() -> Outcome {
    let scenario = Scenario::overlapping_gaussians();
    let mut wins = 0;
    for seed in 0..20u64 {
        let (data, labels, split) = scenario.instantiate(seed).unwrap();
        let rows = data.rows_for_ids(&split.unlabeled_ids).unwrap();
        let pool = data.select_rows(&rows).unwrap();
        let pool_labels = labels.select_rows(&rows);
        let result = run_prunessl(
            &pool,
            LabelMode::Oracle,
            Some(&pool_labels),
            &ClassifierConfig::rbf_svm(),
            0.6,
            seed,
            &PseudoLabelOptions::default(),
        )
        .unwrap();
        let kept_rows = pool.rows_for_ids(&result.kept_ids).unwrap();
        let kept = pool.select_rows(&kept_rows).unwrap();
        let kept_labels = pool_labels.select_rows(&kept_rows);
        let full_acc = linear_probe(&pool, &pool_labels, 5, seed).unwrap();
        let kept_acc = linear_probe(&kept, &kept_labels, 5, seed).unwrap();
        if kept_acc > full_acc {
            wins += 1;
        }
    }
    Outcome::new(wins >= 18, format!("kept probe above full probe in {wins} of 20 seeds"))
}

fn prunessl(args: &[&str], threads: usize) -> bool {
    Command::new(env!("CARGO_BIN_EXE_prunessl"))
        .args(args)
        .arg("--threads")
        .arg(threads.to_string())
        .status()
        .map(|s| s.success())
        .unwrap_or(false)
}

fn primary_outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "manifest.json")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let data_dir = root.join("data");
    let path = |p: &PathBuf| p.to_str().unwrap().to_string();
    if !prunessl(
        &["generate", "--n-per-class", "200", "--seed", "3", "--out", &path(&data_dir)],
        1,
    ) {
        return Outcome::new(false, "generate failed");
    }
    let emb = path(&data_dir.join("embeddings.sepb"));
    let labels = path(&data_dir.join("labels.csv"));
    let commands: Vec<(&str, Vec<String>)> = vec![
        ("prune-pseudo", vec!["prune".into(), "--embeddings".into(), emb.clone(), "--labels".into(), labels.clone()]),
        (
            "prune-mlp",
            vec![
                "prune".into(),
                "--embeddings".into(),
                emb.clone(),
                "--mode".into(),
                "oracle".into(),
                "--labels".into(),
                labels.clone(),
                "--classifier".into(),
                "mlp".into(),
                "--epochs".into(),
                "20".into(),
            ],
        ),
        ("baseline-random", vec!["baseline".into(), "--embeddings".into(), emb.clone(), "--policy".into(), "random".into()]),
        (
            "baseline-coverage",
            vec!["baseline".into(), "--embeddings".into(), emb.clone(), "--policy".into(), "coverage".into(), "--labels".into(), labels.clone()],
        ),
        ("report", vec!["report".into(), "--embeddings".into(), emb.clone(), "--labels".into(), labels.clone()]),
        (
            "simulate",
            vec![
                "simulate".into(),
                "--n-per-class".into(),
                "200".into(),
                "--reps".into(),
                "4".into(),
                "--rounds".into(),
                "3".into(),
                "--curriculum".into(),
                "--phase1".into(),
                "2".into(),
                "--phase2".into(),
                "2".into(),
            ],
        ),
    ];
    let mut problems = Vec::new();
    let mut files = 0;
    for (name, args) in &commands {
        let mut outputs = Vec::new();
        for (run, threads) in [1usize, 4, 4].into_iter().enumerate() {
            let out = root.join(format!("{name}-{run}"));
            let mut full: Vec<&str> = args.iter().map(String::as_str).collect();
            let out_str = path(&out);
            full.extend(["--seed", "5", "--out", &out_str]);
            if !prunessl(&full, threads) {
                problems.push(format!("{name} failed with {threads} threads"));
                break;
            }
            outputs.push(primary_outputs(&out));
        }
        if outputs.len() == 3 {
            if outputs[0].is_empty() {
                problems.push(format!("{name}: no primary outputs"));
            } else if outputs[0] != outputs[1] || outputs[1] != outputs[2] {
                problems.push(format!("{name}: outputs differ"));
            }
            files += outputs[0].len();
        }
    }
    outcome_from(
        problems,
        format!("{} commands, {files} primary files identical at 1 and 4 threads", commands.len()),
    )
}
