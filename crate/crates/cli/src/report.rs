use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use anyhow::{Context, Result};
use streampop::binarize::{cutoff_curve, write_cutoffs_csv};
use streampop::data::{load_dataset, Dataset, Measure, Platform};
use streampop::experiments::{
    coefficient_table, effort_analysis, leakage_audit, population_stats, social_timing_analysis, write_tests_csv,
    Analysis, AnalysisConfig, AucCurve, AuditReport, CellResult, CoefficientTable, EffortReport, PopulationReport,
    TimingReport,
};
use streampop::features::Feature;
use streampop::labels::{Task, HORIZON_MONTHS};
use streampop::svg::{BoxChart, LineChart, Scale, Series};

use crate::config::RunConfig;
use crate::manifest::{fingerprint, write_manifest};

/// Everything one analyze run produced, kept for callers that want to
/// inspect results without re-reading the files.
pub struct Report {
    pub curves: Vec<AucCurve>,
    pub coefficients: Option<CoefficientTable>,
    pub audit: AuditReport,
    pub manifest: String,
}

struct Bundle {
    root: PathBuf,
    written: Mutex<Vec<String>>,
}

impl Bundle {
    fn create(root: &Path) -> Result<Self> {
        for sub in ["", "cutoffs", "models", "charts"] {
            let dir = root.join(sub);
            std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        Ok(Self {
            root: root.to_path_buf(),
            written: Mutex::default(),
        })
    }

    fn write(&self, rel: &str, data: impl AsRef<[u8]>) -> Result<()> {
        let path = self.root.join(rel);
        std::fs::write(&path, data).with_context(|| format!("writing {}", path.display()))?;
        self.written.lock().expect("bundle lock").push(rel.to_string());
        Ok(())
    }

    fn write_with(
        &self,
        rel: &str,
        f: impl FnOnce(&mut Vec<u8>) -> std::result::Result<(), Box<dyn std::error::Error + Send + Sync>>,
    ) -> Result<()> {
        let mut buf = Vec::new();
        f(&mut buf).map_err(|e| anyhow::anyhow!("{rel}: {e}"))?;
        self.write(rel, buf)
    }
}

fn num(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        x.to_string()
    }
}

fn curves_csv(curves: &[AucCurve]) -> String {
    let mut s = String::from(
        "sweep,task,measure,delta,t,ts,n_train,n_test,status,note,auc_cur,auc_b,gain,se_cur,se_b,se_gain,ll_cur,ll_b,dropped\n",
    );
    for curve in curves {
        for c in &curve.cells {
            let ts = c.ts.iter().map(u32::to_string).collect::<Vec<_>>().join(";");
            let dropped = c
                .dropped
                .iter()
                .map(|(name, why)| format!("{name}:{}", why.replace(' ', "_")))
                .collect::<Vec<_>>()
                .join(";");
            let _ = writeln!(
                s,
                "{},{},{},{},{},{ts},{},{},{},\"{}\",{},{},{},{},{},{},{},{},{dropped}",
                c.sweep.name(),
                c.task.name(),
                c.measure.name(),
                c.delta,
                c.ts[0],
                c.n_train,
                c.n_test,
                c.status.name(),
                c.status.note().replace('"', "'"),
                num(c.auc_cur),
                num(c.auc_b),
                num(c.gain()),
                num(c.se_cur),
                num(c.se_b),
                num(c.se_gain),
                num(c.ll_cur),
                num(c.ll_b),
            );
        }
    }
    s
}

fn auc_chart(curve: &AucCurve) -> String {
    let x_label = match curve.sweep {
        streampop::experiments::SweepKind::Interval => "interval size (months)",
        streampop::experiments::SweepKind::Age => "start age (months)",
    };
    let mut chart = LineChart::new(
        format!(
            "{} {} ({} sweep)",
            curve.task.name(),
            curve.measure.name(),
            curve.sweep.name()
        ),
        x_label,
        "test AUC",
    );
    for (name, auc, se) in [
        (
            "F_cur",
            (|c: &CellResult| c.auc_cur) as fn(&CellResult) -> f64,
            (|c: &CellResult| c.se_cur) as fn(&CellResult) -> f64,
        ),
        ("F_cur+b", |c: &CellResult| c.auc_b, |c: &CellResult| c.se_b),
    ] {
        let points = curve.cells.iter().map(|c| (f64::from(c.x()), auc(c))).collect();
        let errors = curve.cells.iter().map(se).collect();
        chart.push(Series::new(name, points).with_errors(errors));
    }
    chart.render()
}

fn population_charts(bundle: &Bundle, population: &PopulationReport) -> Result<()> {
    let mut share = LineChart::new(
        "share held by the top streamers",
        "top fraction of streamers",
        "share of total",
    );
    for s in &population.shares {
        share.push(Series::new(s.measure.name(), s.curve.clone()));
    }
    bundle.write("charts/population_share.svg", share.render())?;
    for measure in Measure::ALL {
        let mut chart = LineChart::new(
            format!("{} CCDF by account age", measure.name()),
            measure.name(),
            "P(X >= x)",
        )
        .scales(Scale::Log, Scale::Log);
        let mut ages: Vec<u32> = population.ccdf.iter().filter(|c| c.0 == measure).map(|c| c.1).collect();
        ages.dedup();
        for age in ages {
            let points = population
                .ccdf
                .iter()
                .filter(|c| c.0 == measure && c.1 == age)
                .map(|c| (c.2, c.3))
                .collect();
            chart.push(Series::new(format!("month {age}"), points));
        }
        bundle.write(&format!("charts/ccdf_{}.svg", measure.name()), chart.render())?;
    }
    Ok(())
}

fn cutoff_chart(analysis: &Analysis<'_>, delta: u32) -> Option<String> {
    let (values, popular) = analysis.cutoff_inputs(Measure::Followers, 1, delta);
    let column: Vec<f64> = values.iter().map(|v| v.get(Feature::NTweet)).collect();
    let curve = cutoff_curve(&column, &popular).ok()?;
    let mut chart = LineChart::new(
        format!("n_tweet cutoff search, followers, months [1, {})", 1 + delta),
        "percentile k",
        "fraction above cutoff",
    );
    chart.push(Series::new("popular", curve.iter().map(|&(k, p, _)| (k, p)).collect()));
    chart.push(Series::new(
        "unpopular",
        curve.iter().map(|&(k, _, u)| (k, u)).collect(),
    ));
    chart.push(Series::new(
        "difference",
        curve.iter().map(|&(k, p, u)| (k, (p - u).abs())).collect(),
    ));
    Some(chart.render())
}

fn peak_followers(ds: &Dataset, id: &streampop::data::StreamerId) -> f64 {
    let s = ds.get(id).expect("row of this dataset");
    let last = s.months().saturating_sub(1).min(HORIZON_MONTHS);
    (0..=last)
        .filter_map(|m| s.measure_at(Measure::Followers, m))
        .fold(0.0, f64::max)
}

fn effort_charts(bundle: &Bundle, ds: &Dataset, effort: &EffortReport) -> Result<()> {
    let mut groups: Vec<(String, Vec<f64>)> = vec![
        ("below affiliate".into(), Vec::new()),
        ("affiliate".into(), Vec::new()),
        ("full-time".into(), Vec::new()),
    ];
    for row in &effort.rows {
        let g = if row.fulltime {
            2
        } else if row.affiliate {
            1
        } else {
            0
        };
        groups[g].1.push(peak_followers(ds, &row.streamer));
    }
    let chart = BoxChart {
        title: "peak first-year followers by broadcast effort".into(),
        y_label: "followers".into(),
        y_scale: Scale::Log,
        groups,
    };
    bundle.write("charts/effort_followers_box.svg", chart.render())?;

    let mut cdf = LineChart::new(
        "broadcasts without viewers",
        "fraction of broadcasts empty",
        "share of streamers",
    );
    cdf.push(Series::new("streamers", effort.empty_cdf.clone()));
    bundle.write("charts/empty_broadcast_cdf.svg", cdf.render())
}

fn timing_charts(bundle: &Bundle, timing: &TimingReport) -> Result<()> {
    for (file, label, mean, se) in [
        (
            "charts/timing_followers.svg",
            "peak followers",
            (|g: &streampop::experiments::GroupStats| g.followers_mean)
                as fn(&streampop::experiments::GroupStats) -> f64,
            (|g: &streampop::experiments::GroupStats| g.followers_se) as fn(&streampop::experiments::GroupStats) -> f64,
        ),
        (
            "charts/timing_concurrent_viewers.svg",
            "peak concurrent viewers",
            |g| g.ccv_mean,
            |g| g.ccv_se,
        ),
    ] {
        let mut chart = LineChart::new(
            format!("{label} by account creation relative to Twitch"),
            "months after Twitch account",
            label,
        );
        chart.markers_only = true;
        for platform in Platform::ALL {
            let groups: Vec<_> = timing.groups.iter().filter(|g| g.platform == platform).collect();
            chart.push(
                Series::new(
                    platform.name(),
                    groups.iter().map(|g| (g.offset as f64, mean(g))).collect(),
                )
                .with_errors(groups.iter().map(|g| se(g)).collect()),
            );
        }
        bundle.write(file, chart.render())?;
    }
    Ok(())
}

/// Runs every configured analysis and writes the report bundle.
pub fn analyze(config: &RunConfig) -> Result<Report> {
    let dataset = load_dataset(&config.dataset)?;
    let dataset_hash = fingerprint(&config.dataset)?;
    let bundle = Bundle::create(&config.out)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()
        .context("building worker pool")?;
    pool.install(|| run(config, &dataset, &dataset_hash, &bundle))
}

fn run(config: &RunConfig, dataset: &Dataset, dataset_hash: &str, bundle: &Bundle) -> Result<Report> {
    let analysis = Analysis::new(
        dataset,
        AnalysisConfig {
            split_seed: config.split_seed,
            cutoff_method: config.cutoff_method,
            bootstrap_resamples: config.bootstrap,
            least_squares: config.least_squares,
            ..AnalysisConfig::default()
        },
    )?;

    let mut curves = Vec::new();
    for &task in &config.tasks {
        for &measure in task.measures().iter().filter(|m| config.measures.contains(m)) {
            curves.push(analysis.run_interval_sweep(task, measure, &config.deltas)?);
            curves.push(analysis.run_age_sweep(task, measure, config.age_delta, &config.ages)?);
        }
    }
    let coefficients = if config.tasks.contains(&Task::RelativeGrowth) {
        Some(coefficient_table(
            &analysis,
            &config.measures,
            config.coefficient_delta,
        )?)
    } else {
        None
    };
    let effort = effort_analysis(dataset);
    let timing = social_timing_analysis(dataset);
    let population = population_stats(dataset);
    let cells: Vec<&CellResult> = curves.iter().flat_map(|c| &c.cells).collect();
    let audit = leakage_audit(&analysis, &cells)?;

    bundle.write("auc_curves.csv", curves_csv(&curves))?;
    if let Some(table) = &coefficients {
        bundle.write_with("coefficients.csv", |b| Ok(table.write_csv(b)?))?;
        bundle.write_with("coefficients_status.csv", |b| Ok(table.write_status_csv(b)?))?;
    }
    bundle.write_with("effort.csv", |b| Ok(effort.write_csv(b)?))?;
    bundle.write_with("effort_tests.csv", |b| Ok(write_tests_csv(&effort.tests, b)?))?;
    bundle.write_with("empty_broadcast_cdf.csv", |b| Ok(effort.write_cdf_csv(b)?))?;
    bundle.write_with("timing.csv", |b| Ok(timing.write_csv(b)?))?;
    bundle.write_with("timing_tests.csv", |b| Ok(write_tests_csv(&timing.tests, b)?))?;
    bundle.write_with("population.csv", |b| Ok(population.write_csv(b)?))?;
    bundle.write_with("population_ccdf.csv", |b| Ok(population.write_ccdf_csv(b)?))?;
    bundle.write("leakage_audit.txt", audit.render())?;

    for fitted in analysis.cached_cutoffs() {
        let t = &fitted.table;
        let rel = format!("cutoffs/{}_t{}_d{}.csv", t.measure.name(), t.t, t.delta);
        bundle.write_with(&rel, |b| Ok(write_cutoffs_csv([t], b)?))?;
    }
    for cell in &cells {
        for (suffix, fit) in [("cur", &cell.fit_cur), ("b", &cell.fit_b)] {
            if let Some(fit) = fit {
                bundle.write_with(
                    &format!("models/{}_{suffix}.csv", cell.key()),
                    |b| Ok(fit.write_csv(b)?),
                )?;
            }
        }
    }

    for curve in &curves {
        let name = format!(
            "charts/auc_{}_{}_{}.svg",
            curve.sweep.name(),
            curve.task.name(),
            curve.measure.name()
        );
        bundle.write(&name, auc_chart(curve))?;
    }
    population_charts(bundle, &population)?;
    if let Some(svg) = cutoff_chart(&analysis, config.coefficient_delta) {
        bundle.write("charts/cutoff_n_tweet.svg", svg)?;
    }
    effort_charts(bundle, dataset, &effort)?;
    timing_charts(bundle, &timing)?;

    bundle.write("runconfig.txt", config.render(dataset_hash))?;
    let manifest = write_manifest(&bundle.root, &bundle.written.lock().expect("bundle lock"))?;
    Ok(Report {
        curves,
        coefficients,
        audit,
        manifest,
    })
}
