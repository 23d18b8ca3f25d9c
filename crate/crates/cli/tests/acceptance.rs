//! One PASS/FAIL line per acceptance criterion. Exits nonzero if any fails.

use std::path::Path;
use std::time::{Duration, Instant};

use clap::Parser;
use streampop::data::{Dataset, Measure};
use streampop::experiments::{
    coefficient_table, leakage_audit, Analysis, AnalysisConfig, AucCurve, CellStatus, CoefficientTable,
};
use streampop::features::{Feature, N_FEATURES};
use streampop::labels::Task;
use streampop::oracle;
use streampop::synth::{generate, SynthConfig, DRIVING_FEATURES};

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const DELTAS: [u32; 3] = [2, 4, 6];

struct Line {
    id: u32,
    passed: bool,
    detail: String,
}

impl Line {
    fn print(&self) {
        println!(
            "{} criterion {:2}: {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.detail
        );
    }
}

fn from_oracle(id: u32, check: oracle::OracleCheck, budget: Option<Duration>) -> Line {
    let in_time = budget.is_none_or(|b| check.elapsed < b);
    Line {
        id,
        passed: check.passed && in_time,
        detail: format!("{} {} ({:.3}s)", check.name, check.detail, check.elapsed.as_secs_f64()),
    }
}

struct SeedRun {
    beta: f64,
    curve: AucCurve,
    coefficients: Option<CoefficientTable>,
    elapsed: Duration,
    audit_passed: bool,
}

fn run_seed(seed: u64, beta: f64, with_coefficients: bool) -> SeedRun {
    let start = Instant::now();
    let ds = generate(&SynthConfig {
        seed,
        beta,
        ..SynthConfig::default()
    })
    .expect("generator config");
    let analysis = Analysis::new(
        &ds,
        AnalysisConfig {
            split_seed: seed,
            ..AnalysisConfig::default()
        },
    )
    .expect("analysis");
    let curve = analysis
        .run_interval_sweep(Task::RelativeGrowth, Measure::Followers, &DELTAS)
        .expect("sweep");
    let elapsed = start.elapsed();
    let coefficients =
        with_coefficients.then(|| coefficient_table(&analysis, &[Measure::Followers], 2).expect("table"));
    let cells: Vec<_> = curve.cells.iter().collect();
    let audit_passed = leakage_audit(&analysis, &cells).expect("audit").passed();
    SeedRun {
        beta,
        curve,
        coefficients,
        elapsed,
        audit_passed,
    }
}

fn mean_gains(runs: &[&SeedRun]) -> (Vec<f64>, usize) {
    let mut gains = vec![0.0; DELTAS.len()];
    let mut bad = 0;
    for run in runs {
        for (i, cell) in run.curve.cells.iter().enumerate() {
            if cell.status == CellStatus::Ok {
                gains[i] += cell.gain() / runs.len() as f64;
            } else {
                bad += 1;
            }
        }
    }
    (gains, bad)
}

fn criterion_7(runs: &[SeedRun]) -> Line {
    let strong: Vec<_> = runs.iter().filter(|r| r.beta == 0.8).collect();
    let null: Vec<_> = runs.iter().filter(|r| r.beta == 0.0).collect();
    let (g8, bad8) = mean_gains(&strong);
    let (g0, bad0) = mean_gains(&null);
    let slowest = runs.iter().map(|r| r.elapsed).max().unwrap_or_default();
    let passed = bad8 == 0
        && bad0 == 0
        && g8.iter().all(|&g| g >= 0.05)
        && g0.iter().all(|&g| g.abs() <= 0.02)
        && slowest < Duration::from_secs(120);
    Line {
        id: 7,
        passed,
        detail: format!(
            "mean gain beta=0.8 {:.4?} beta=0 {:.4?} over deltas {DELTAS:?}, unusable cells {}, slowest seed {:.1}s",
            g8,
            g0,
            bad8 + bad0,
            slowest.as_secs_f64()
        ),
    }
}

fn criterion_8(runs: &[SeedRun]) -> Line {
    let tables: Vec<_> = runs.iter().filter_map(|r| r.coefficients.as_ref()).collect();
    let mut mean_abs = [0.0; N_FEATURES];
    let mut mean = [0.0; N_FEATURES];
    let mut significant = [0usize; N_FEATURES];
    let mut usable = true;
    for table in &tables {
        let m = &table.measures[0];
        usable &= m.status == CellStatus::Ok;
        for row in &m.rows {
            // dropped columns contribute nothing
            let c = if row.coefficient.is_nan() { 0.0 } else { row.coefficient };
            mean_abs[row.feature.index()] += c.abs() / tables.len() as f64;
            mean[row.feature.index()] += c / tables.len() as f64;
            if row.p_value < 0.05 {
                significant[row.feature.index()] += 1;
            }
        }
    }
    let smallest_driving = DRIVING_FEATURES
        .iter()
        .map(|f| mean[f.index()])
        .fold(f64::INFINITY, f64::min);
    let (worst_other, worst_value) = Feature::ALL
        .iter()
        .filter(|f| !DRIVING_FEATURES.contains(f))
        .map(|f| (f.name(), mean_abs[f.index()]))
        .fold(("", 0.0), |a, b| if b.1 > a.1 { b } else { a });
    let all_significant = DRIVING_FEATURES.iter().all(|f| significant[f.index()] == tables.len());
    let passed = usable
        && tables.len() == SEEDS.len()
        && all_significant
        && smallest_driving > 0.0
        && worst_value <= 0.5 * smallest_driving;
    let driving: Vec<String> = DRIVING_FEATURES
        .iter()
        .map(|f| {
            format!(
                "{}={:.3} sig {}/{}",
                f.name(),
                mean[f.index()],
                significant[f.index()],
                tables.len()
            )
        })
        .collect();
    Line {
        id: 8,
        passed,
        detail: format!(
            "driving [{}]; largest other mean |coef| {worst_other}={worst_value:.3} vs limit {:.3}",
            driving.join(", "),
            0.5 * smallest_driving
        ),
    }
}

fn criterion_9(runs: &[SeedRun]) -> Line {
    let mut fitted = 0;
    let mut violations = 0;
    let mut worst: f64 = f64::INFINITY;
    for cell in runs.iter().flat_map(|r| &r.curve.cells) {
        if cell.ll_cur.is_finite() && cell.ll_b.is_finite() {
            fitted += 1;
            worst = worst.min(cell.ll_b - cell.ll_cur);
            if cell.ll_b < cell.ll_cur {
                violations += 1;
            }
        }
    }
    Line {
        id: 9,
        passed: fitted > 0 && violations == 0,
        detail: format!("{fitted} fitted cells, {violations} with LL_b < LL_cur, min LL_b - LL_cur {worst:.4}"),
    }
}

fn criterion_10(runs: &[SeedRun]) -> Line {
    let failed = runs.iter().filter(|r| !r.audit_passed).count();
    Line {
        id: 10,
        passed: failed == 0,
        detail: format!("{} audits, {failed} failed", runs.len()),
    }
}

fn cli(args: &[&str]) {
    let cli = streampop_cli::Cli::try_parse_from(std::iter::once("streampop").chain(args.iter().copied()))
        .expect("arguments parse");
    streampop_cli::run(cli).expect("command succeeds");
}

fn synth_and_analyze(root: &Path, jobs: &str) -> (Vec<u8>, String) {
    let data = root.join("data");
    let out = root.join("report");
    let (data, out) = (data.to_str().unwrap(), out.to_str().unwrap());
    cli(&[
        "synth",
        "--out",
        data,
        "--seed",
        "11",
        "--n-streamers",
        "400",
        "--beta",
        "0.8",
    ]);
    cli(&[
        "analyze",
        "--dataset",
        data,
        "--out",
        out,
        "--task",
        "relative_growth,absolute",
        "--measure",
        "followers,cheers",
        "--delta",
        "2,5",
        "--ages",
        "1,4",
        "--bootstrap",
        "30",
        "--jobs",
        jobs,
    ]);
    let mut dataset = Vec::new();
    for rel in streampop_cli::manifest::list_files(Path::new(data)).unwrap() {
        dataset.extend(rel.as_bytes());
        dataset.extend(std::fs::read(Path::new(data).join(rel)).unwrap());
    }
    (
        dataset,
        std::fs::read_to_string(Path::new(out).join("manifest.txt")).unwrap(),
    )
}

fn criterion_11() -> Line {
    let start = Instant::now();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (data_a, manifest_a) = synth_and_analyze(a.path(), "1");
    let (data_b, manifest_b) = synth_and_analyze(b.path(), "2");
    let passed = data_a == data_b && manifest_a == manifest_b && !manifest_a.is_empty();
    Line {
        id: 11,
        passed,
        detail: format!(
            "datasets identical {}, manifests identical {} ({} files), jobs 1 vs 2 ({:.1}s)",
            data_a == data_b,
            manifest_a == manifest_b,
            manifest_a.lines().count(),
            start.elapsed().as_secs_f64()
        ),
    }
}

fn last_month(ds: &Dataset) -> u32 {
    (ds.min_months() - 1).min(12)
}

fn criterion_12() -> Line {
    let mut shares = Vec::new();
    let mut zeros = Vec::new();
    for seed in SEEDS {
        let ds = generate(&SynthConfig {
            seed,
            ..SynthConfig::default()
        })
        .expect("generator config");
        let m = last_month(&ds);
        let mut f: Vec<f64> = ds
            .streamers()
            .map(|s| s.measure_at(Measure::Followers, m).unwrap())
            .collect();
        f.sort_by(|a, b| b.total_cmp(a));
        let top = f.len().div_ceil(10);
        shares.push(f[..top].iter().sum::<f64>() / f.iter().sum::<f64>());
        let zero = ds
            .streamers()
            .filter(|s| s.measure_at(Measure::Cheers, m).unwrap() == 0.0)
            .count();
        zeros.push(zero as f64 / ds.len() as f64);
    }
    let passed = shares.iter().all(|s| (0.7..=0.9).contains(s)) && zeros.iter().all(|z| (0.4..=0.5).contains(z));
    Line {
        id: 12,
        passed,
        detail: format!("top-decile follower share {shares:.3?}, zero-cheer fraction {zeros:.3?}"),
    }
}

fn main() {
    // `cargo test -- --list` and filters are harness flags; keep them harmless
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let mut lines = Vec::new();
    let mut emit = |line: Line| {
        line.print();
        lines.push(line.passed);
    };
    emit(from_oracle(1, oracle::check_auc(1, 200), Some(Duration::from_secs(5))));
    emit(from_oracle(2, oracle::check_gradient(2, 50, 1e-5), None));
    emit(from_oracle(3, oracle::check_intercept(), None));
    emit(from_oracle(4, oracle::check_cutoffs(4, 100), None));
    emit(from_oracle(5, oracle::check_regularity(5, 100), None));
    emit(from_oracle(6, oracle::check_welch(), None));

    let mut runs = Vec::new();
    for beta in [0.8, 0.0] {
        for seed in SEEDS {
            runs.push(run_seed(seed, beta, beta == 0.8));
        }
    }
    emit(criterion_7(&runs));
    emit(criterion_8(&runs));
    emit(criterion_9(&runs));
    emit(criterion_10(&runs));
    emit(criterion_11());
    emit(criterion_12());

    let failed = lines.iter().filter(|p| !**p).count();
    println!("{} of {} criteria passed", lines.len() - failed, lines.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
