//! Experiment orchestration: method sweeps over noise levels, front
//! post-processing (non-dominance filter, hull report, hypervolume) and
//! CSV/SVG/text artifacts.

pub mod hull;
pub mod seeds;
pub mod svg;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moo::{
    mgda_train, nondominated_indices, pareto_critical_measure, weighted_sum_train, write_front_csv, ws_alpha_grid,
    BiQuadratic, Method, ObjectivePoint, SweepTag,
};
use crate::network::write_snapshot;
use crate::nsga2::{evolve, hypervolume_2d, NSGAConfig};
use crate::problems::{LossWeights, PinnSetup, Problem};
use crate::train::{BiObjective, PinnObjective, SchedulerConfig, TrainConfig};

use hull::{convexity_report, convexity_report_loglog, ConvexityReport};
use svg::{emit_svg, PlotStyle, Scale, Series};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Spatial points (ignored by the logistic problem).
    pub n_x: usize,
    pub n_t: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { n_x: 20, n_t: 20 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WsConfig {
    pub n_alpha: usize,
    pub base: f64,
}

impl Default for WsConfig {
    fn default() -> Self {
        Self { n_alpha: 20, base: 80.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MgdaConfig {
    pub starts: usize,
    pub normalize: bool,
}

impl Default for MgdaConfig {
    fn default() -> Self {
        Self {
            starts: 20,
            normalize: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MethodConfig {
    Ws(WsConfig),
    Mgda(MgdaConfig),
    Nsga2(NSGAConfig),
}

impl MethodConfig {
    pub fn method(&self) -> Method {
        match self {
            MethodConfig::Ws(_) => Method::Ws,
            MethodConfig::Mgda(_) => Method::Mgda,
            MethodConfig::Nsga2(_) => Method::Nsga2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            MethodConfig::Ws(c) => ws_alpha_grid(c.n_alpha, c.base).map(|_| ()),
            MethodConfig::Mgda(c) if c.starts == 0 => Err(Error::Config("mgda needs at least one start".into())),
            MethodConfig::Mgda(_) => Ok(()),
            MethodConfig::Nsga2(c) => c.validate(),
        }
    }
}

/// Everything needed to reproduce one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: Problem,
    /// Layer widths, input first.
    pub layers: Vec<usize>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default = "default_sigmas")]
    pub sigmas: Vec<f64>,
    #[serde(default)]
    pub weights: LossWeights,
    pub method: MethodConfig,
    #[serde(default)]
    pub train: TrainConfig,
    /// Master seed; per-run seeds are derived from it.
    #[serde(default)]
    pub seed: u64,
    /// Seed of the noise draws; derived from the master seed when absent.
    #[serde(default)]
    pub data_seed: Option<u64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub workers: Option<usize>,
}

fn default_sigmas() -> Vec<f64> {
    vec![0.0]
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.problem.validate()?;
        if self.layers.len() < 2 || self.layers.contains(&0) {
            return Err(Error::Config(format!("invalid layer sizes {:?}", self.layers)));
        }
        if self.layers[0] != self.problem.input_dim() || self.layers[self.layers.len() - 1] != 1 {
            return Err(Error::Config(format!(
                "{} networks need input width {} and output width 1, got {:?}",
                self.problem.name(),
                self.problem.input_dim(),
                self.layers
            )));
        }
        if self.sigmas.is_empty() {
            return Err(Error::Config("sigma list is empty".into()));
        }
        if let Some(s) = self.sigmas.iter().find(|s| !(**s >= 0.0) || !s.is_finite()) {
            return Err(Error::Config(format!("noise level must be >= 0, got {s}")));
        }
        self.weights.validate()?;
        self.train.validate()?;
        self.method.validate()?;
        // Grid sizes are checked by building the grid.
        self.problem.grid(self.grid.n_x, self.grid.n_t).map(|_| ())
    }

    pub fn effective_data_seed(&self) -> u64 {
        self.data_seed.unwrap_or_else(|| seeds::data_seed(self.seed))
    }

    pub fn setup(&self, sigma: f64) -> Result<PinnSetup> {
        let base = PinnSetup::standard(self.problem, self.grid.n_x, self.grid.n_t, sigma, self.effective_data_seed())?;
        PinnSetup::new(base.problem, base.grid, base.dataset, self.weights)
    }
}

/// One row of `runs.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub epoch: usize,
    pub loss_data: f64,
    pub loss_physics: f64,
    pub loss_validation: Option<f64>,
    pub lr: Option<f64>,
}

/// A successful run: its reported points (with parameters) and its trace.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub method: Method,
    pub tag: SweepTag,
    pub points: Vec<(ObjectivePoint, Vec<f64>)>,
    pub trace: Vec<TraceRow>,
}

/// Outcome of a sweep; failed runs are kept as messages.
#[derive(Debug, Clone, Default)]
pub struct SweepResult {
    pub runs: Vec<RunResult>,
    pub failures: Vec<String>,
}

impl SweepResult {
    pub fn points(&self) -> Vec<ObjectivePoint> {
        self.runs.iter().flat_map(|r| r.points.iter().map(|(p, _)| p.clone())).collect()
    }
}

fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))
}

fn trained_result(method: Method, tag: SweepTag, run: crate::moo::TrainedRun) -> RunResult {
    let trace = run
        .outcome
        .history
        .records
        .iter()
        .map(|r| TraceRow {
            epoch: r.epoch,
            loss_data: r.loss_data,
            loss_physics: r.loss_physics,
            loss_validation: r.loss_validation,
            lr: Some(r.lr),
        })
        .collect();
    RunResult {
        method,
        tag,
        points: vec![(run.point, run.outcome.selected_params)],
        trace,
    }
}

fn collect(results: Vec<(String, Result<RunResult>)>) -> SweepResult {
    let mut out = SweepResult::default();
    for (name, r) in results {
        match r {
            Ok(run) => out.runs.push(run),
            Err(e) => {
                warn!("{name} failed and is excluded: {e}");
                out.failures.push(format!("{name}: {e}"));
            }
        }
    }
    out
}

/// Runs the sweep of `method` on `objective`: the α grid for WS, seeded
/// starts for MGDA, or a single seeded NSGA-II run.
pub fn sweep<O: BiObjective + ?Sized>(
    objective: &O,
    method: &MethodConfig,
    train: &TrainConfig,
    master_seed: u64,
    workers: usize,
) -> Result<SweepResult> {
    method.validate()?;
    let pool = thread_pool(workers)?;
    let results: Vec<(String, Result<RunResult>)> = match method {
        MethodConfig::Ws(c) => {
            let alphas = ws_alpha_grid(c.n_alpha, c.base)?;
            // Every α starts from the same initialization.
            let seed = seeds::run_seed(master_seed, Method::Ws, 0);
            pool.install(|| {
                alphas
                    .par_iter()
                    .map(|&alpha| {
                        let r = weighted_sum_train(objective, alpha, seed, train)
                            .map(|run| trained_result(Method::Ws, SweepTag::Alpha(alpha), run));
                        if r.is_ok() {
                            info!("ws run alpha={alpha} done");
                        }
                        (format!("ws alpha={alpha}"), r)
                    })
                    .collect()
            })
        }
        MethodConfig::Mgda(c) => pool.install(|| {
            (0..c.starts)
                .into_par_iter()
                .map(|i| {
                    let seed = seeds::run_seed(master_seed, Method::Mgda, i as u64);
                    let r = mgda_train(objective, seed, c.normalize, train)
                        .map(|run| trained_result(Method::Mgda, SweepTag::Seed(seed), run));
                    if r.is_ok() {
                        info!("mgda start {i} done");
                    }
                    (format!("mgda seed={seed}"), r)
                })
                .collect()
        }),
        MethodConfig::Nsga2(c) => {
            let cfg = NSGAConfig {
                seed: seeds::run_seed(master_seed, Method::Nsga2, 0),
                ..*c
            };
            let r = pool.install(|| nsga_result(objective, &cfg));
            vec![(format!("nsga2 seed={}", cfg.seed), r)]
        }
    };
    Ok(collect(results))
}

fn nsga_result<O: BiObjective + ?Sized>(objective: &O, cfg: &NSGAConfig) -> Result<RunResult> {
    let evo = evolve(objective, cfg)?;
    let mut points = Vec::with_capacity(evo.front.len());
    for ind in &evo.front {
        let losses = ind.objectives.expect("front members are evaluated");
        if losses.iter().any(|l| !l.is_finite()) {
            continue;
        }
        let eval = objective.evaluate(&ind.genome, true)?;
        let grads = eval.grads.expect("gradients requested");
        points.push((
            ObjectivePoint {
                losses,
                method: Method::Nsga2,
                tag: SweepTag::Seed(cfg.seed),
                epoch: cfg.generations,
                critical_measure: pareto_critical_measure(&grads)?,
                snapshot: None,
            },
            ind.genome.clone(),
        ));
    }
    let trace = evo
        .snapshots
        .iter()
        .enumerate()
        .flat_map(|(g, front)| {
            front.iter().map(move |l| TraceRow {
                epoch: g,
                loss_data: l[0],
                loss_physics: l[1],
                loss_validation: None,
                lr: None,
            })
        })
        .collect();
    Ok(RunResult {
        method: Method::Nsga2,
        tag: SweepTag::Seed(cfg.seed),
        points,
        trace,
    })
}

/// A post-processed front.
#[derive(Debug, Clone)]
pub struct FrontReport {
    pub label: String,
    pub raw: Vec<ObjectivePoint>,
    /// Non-dominated subset of `raw`, in input order.
    pub filtered: Vec<ObjectivePoint>,
    pub dominated: usize,
    /// Hull report over `filtered` in linear objective space.
    pub linear: ConvexityReport,
    /// The same points in log-log coordinates (display transform only).
    pub loglog: ConvexityReport,
    pub failures: Vec<String>,
}

impl FrontReport {
    pub fn new(label: impl Into<String>, raw: Vec<ObjectivePoint>, failures: Vec<String>) -> Self {
        let keep = nondominated_indices(&raw);
        let filtered: Vec<ObjectivePoint> = keep.iter().map(|&i| raw[i].clone()).collect();
        let losses: Vec<[f64; 2]> = filtered.iter().map(|p| p.losses).collect();
        Self {
            label: label.into(),
            dominated: raw.len() - filtered.len(),
            linear: convexity_report(&losses),
            loglog: convexity_report_loglog(&losses),
            raw,
            filtered,
            failures,
        }
    }

    pub fn filtered_losses(&self) -> Vec<[f64; 2]> {
        self.filtered.iter().map(|p| p.losses).collect()
    }

    /// Largest Euclidean distance between two filtered points.
    pub fn diameter(&self) -> f64 {
        let l = self.filtered_losses();
        let mut d: f64 = 0.0;
        for (i, a) in l.iter().enumerate() {
            for b in &l[i + 1..] {
                d = d.max((a[0] - b[0]).hypot(a[1] - b[1]));
            }
        }
        d
    }

    pub fn hypervolume(&self, reference: [f64; 2]) -> f64 {
        hypervolume_2d(&self.filtered_losses(), reference)
    }

    pub fn hypervolume_raw(&self, reference: [f64; 2]) -> f64 {
        let l: Vec<[f64; 2]> = self.raw.iter().map(|p| p.losses).collect();
        hypervolume_2d(&l, reference)
    }
}

/// Componentwise maximum of the finite points, scaled by 1.1.
pub fn reference_point<'a>(points: impl IntoIterator<Item = &'a ObjectivePoint>) -> [f64; 2] {
    let mut r = [0.0f64; 2];
    for p in points {
        for k in 0..2 {
            if p.losses[k].is_finite() {
                r[k] = r[k].max(p.losses[k]);
            }
        }
    }
    [1.1 * r[0], 1.1 * r[1]]
}

fn fmt_g(v: f64) -> String {
    format!("{v:.6e}")
}

fn write_report_block(out: &mut String, front: &FrontReport, reference: [f64; 2]) {
    let _ = writeln!(out, "[{}]", front.label);
    let _ = writeln!(out, "failed runs: {}", front.failures.len());
    for f in &front.failures {
        let _ = writeln!(out, "  {f}");
    }
    let _ = writeln!(out, "raw points: {}", front.raw.len());
    let _ = writeln!(out, "non-dominated: {} ({} dominated)", front.filtered.len(), front.dominated);
    let _ = writeln!(
        out,
        "hypervolume: {} (reference [{}, {}])",
        fmt_g(front.hypervolume(reference)),
        fmt_g(reference[0]),
        fmt_g(reference[1])
    );
    let _ = writeln!(out, "diameter: {}", fmt_g(front.diameter()));
    let convex = match front.linear.is_convex(hull::CONVEXITY_TOL) {
        Some(true) => "convex",
        Some(false) => "not convex",
        None => "undetermined",
    };
    let _ = writeln!(out, "hull {} -> {convex}", front.linear);
    let _ = writeln!(out, "hull {} (display transform, no convexity claim)", front.loglog);
    if let Some(flags) = front.linear.on_hull() {
        for (p, on) in front.filtered.iter().zip(flags) {
            let _ = writeln!(
                out,
                "  {} {} loss_data={} loss_physics={} on_hull={on}",
                p.method,
                p.tag,
                fmt_g(p.losses[0]),
                fmt_g(p.losses[1])
            );
        }
    }
    out.push('\n');
}

#[derive(Serialize)]
struct RunsRow<'a> {
    method: &'a str,
    label: &'a str,
    alpha_or_seed: String,
    epoch: usize,
    loss_data: f64,
    loss_physics: f64,
    loss_validation: Option<f64>,
    lr: Option<f64>,
}

fn write_runs_csv(path: &Path, groups: &[(String, &SweepResult)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut any = false;
    for (label, sweep) in groups {
        for run in &sweep.runs {
            for row in &run.trace {
                any = true;
                w.serialize(RunsRow {
                    method: run.method.as_str(),
                    label,
                    alpha_or_seed: run.tag.to_string(),
                    epoch: row.epoch,
                    loss_data: row.loss_data,
                    loss_physics: row.loss_physics,
                    loss_validation: row.loss_validation,
                    lr: row.lr,
                })?;
            }
        }
    }
    if !any {
        w.write_record([
            "method",
            "label",
            "alpha_or_seed",
            "epoch",
            "loss_data",
            "loss_physics",
            "loss_validation",
            "lr",
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes parameter snapshots under `dir/snapshots` and returns the points
/// with their snapshot references filled in.
fn write_snapshots(dir: &Path, sweep: &SweepResult) -> Result<Vec<ObjectivePoint>> {
    let snap_dir = dir.join("snapshots");
    fs::create_dir_all(&snap_dir)?;
    let mut points = Vec::new();
    for (r, run) in sweep.runs.iter().enumerate() {
        for (k, (p, params)) in run.points.iter().enumerate() {
            let name = if run.points.len() == 1 {
                format!("{}_{r:03}.txt", run.method)
            } else {
                format!("{}_{r:03}_{k:03}.txt", run.method)
            };
            write_snapshot(fs::File::create(snap_dir.join(&name))?, params)?;
            let mut p = p.clone();
            p.snapshot = Some(format!("snapshots/{name}"));
            points.push(p);
        }
    }
    Ok(points)
}

fn write_front_files(dir: &Path, title: &str, series: &[Series], front: &[ObjectivePoint]) -> Result<usize> {
    fs::create_dir_all(dir)?;
    write_front_csv(fs::File::create(dir.join("front.csv"))?, front)?;
    write_plots(dir, title, series)
}

fn write_plots(dir: &Path, title: &str, series: &[Series]) -> Result<usize> {
    let style = PlotStyle {
        title: title.to_string(),
        ..Default::default()
    };
    fs::write(dir.join("front_linear.svg"), emit_svg(series, Scale::Linear, &style).svg)?;
    let log = emit_svg(series, Scale::LogLog, &style);
    fs::write(dir.join("front_loglog.svg"), log.svg)?;
    Ok(log.dropped)
}

/// Per-noise-level result of an experiment.
#[derive(Debug, Clone)]
pub struct SigmaReport {
    pub sigma: f64,
    pub front: FrontReport,
    pub sweep: SweepResult,
    pub reference: [f64; 2],
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub sigmas: Vec<SigmaReport>,
}

fn sigma_label(sigma: f64) -> String {
    format!("sigma={sigma}")
}

/// Runs the configured method at every noise level and writes `runs.csv`,
/// `front.csv`, `front_linear.svg`, `front_loglog.svg` and `report.txt` to
/// `out`. With several noise levels the fronts go to `sigma_<σ>/`
/// subdirectories and the top-level plots overlay all of them.
pub fn run_experiment(config: &ExperimentConfig, out: &Path, workers: usize) -> Result<ExperimentReport> {
    config.validate()?;
    fs::create_dir_all(out)?;
    let multi = config.sigmas.len() > 1;
    let mut reports = Vec::new();
    for &sigma in &config.sigmas {
        let objective = PinnObjective::new(config.setup(sigma)?, &config.layers)?;
        info!("{} sigma={sigma}: starting {} sweep", config.problem.name(), config.method.method());
        let sweep_result = sweep(&objective, &config.method, &config.train, config.seed, workers)?;
        let dir = if multi { out.join(format!("sigma_{sigma}")) } else { out.to_path_buf() };
        fs::create_dir_all(&dir)?;
        let points = write_snapshots(&dir, &sweep_result)?;
        let front = FrontReport::new(sigma_label(sigma), points, sweep_result.failures.clone());
        let reference = reference_point(&front.raw);
        let series = [Series {
            label: sigma_label(sigma),
            points: front.filtered_losses(),
        }];
        let title = format!("{} {} {}", config.problem.name(), config.method.method(), sigma_label(sigma));
        write_front_files(&dir, &title, &series, &front.filtered)?;
        reports.push(SigmaReport {
            sigma,
            front,
            sweep: sweep_result,
            reference,
        });
    }

    let groups: Vec<(String, &SweepResult)> = reports.iter().map(|r| (sigma_label(r.sigma), &r.sweep)).collect();
    write_runs_csv(&out.join("runs.csv"), &groups)?;
    let mut dropped = 0;
    if multi {
        let series: Vec<Series> = reports
            .iter()
            .map(|r| Series {
                label: sigma_label(r.sigma),
                points: r.front.filtered_losses(),
            })
            .collect();
        let title = format!("{} {}", config.problem.name(), config.method.method());
        dropped = write_plots(out, &title, &series)?;
    } else if let Some(r) = reports.first() {
        dropped = r.front.filtered.iter().filter(|p| p.losses.iter().any(|&l| l <= 0.0)).count();
    }

    let mut text = String::new();
    let _ = writeln!(text, "problem: {}", config.problem.name());
    let _ = writeln!(text, "method: {}", config.method.method());
    let _ = writeln!(text, "layers: {:?}", config.layers);
    let _ = writeln!(text, "master seed: {}", config.seed);
    let _ = writeln!(text, "data seed: {}", config.effective_data_seed());
    let _ = writeln!(text, "epochs: {}", config.train.epochs);
    let _ = writeln!(text, "log-log plot: {dropped} non-positive point(s) dropped\n");
    for r in &reports {
        write_report_block(&mut text, &r.front, r.reference);
    }
    fs::write(out.join("report.txt"), &text)?;

    if reports.iter().all(|r| r.sweep.runs.is_empty()) {
        let failures: Vec<String> = reports.iter().flat_map(|r| r.front.failures.clone()).collect();
        return Err(Error::AllRunsFailed(failures.join("; ")));
    }
    Ok(ExperimentReport {
        config: config.clone(),
        sigmas: reports,
    })
}

#[derive(Debug, Clone)]
pub struct MethodEntry {
    pub label: String,
    pub front: FrontReport,
    pub hypervolume: f64,
    pub hypervolume_raw: f64,
}

#[derive(Debug, Clone)]
pub struct CompareReport {
    pub entries: Vec<MethodEntry>,
    /// Labels of methods without any successful run.
    pub omitted: Vec<String>,
    pub reference: [f64; 2],
    /// Non-dominated merge of all methods' fronts.
    pub merged: Vec<ObjectivePoint>,
}

fn check_shared(configs: &[ExperimentConfig]) -> Result<()> {
    let first = configs
        .first()
        .ok_or_else(|| Error::Config("compare needs at least one config".into()))?;
    for c in configs {
        c.validate()?;
        if c.sigmas.len() != 1 {
            return Err(Error::Config("compare configs must list exactly one sigma".into()));
        }
        if c.problem != first.problem
            || c.grid != first.grid
            || c.weights != first.weights
            || c.sigmas != first.sigmas
            || c.effective_data_seed() != first.effective_data_seed()
        {
            return Err(Error::Config(
                "compare configs must share problem, grid, weights, sigma and data seed".into(),
            ));
        }
    }
    Ok(())
}

fn method_labels(configs: &[(String, Method)]) -> Vec<String> {
    configs
        .iter()
        .map(|(layers, m)| {
            let repeated = configs.iter().filter(|(_, n)| n == m).count() > 1;
            if repeated {
                format!("{m} {layers}")
            } else {
                m.to_string()
            }
        })
        .collect()
}

/// Merges fronts of several methods and writes the comparison artifacts.
pub fn compare_results(
    sweeps: Vec<(String, SweepResult)>,
    out: &Path,
    title: &str,
    header: &str,
) -> Result<CompareReport> {
    fs::create_dir_all(out)?;
    let mut fronts = Vec::new();
    let mut omitted = Vec::new();
    for (label, s) in &sweeps {
        if s.runs.is_empty() {
            warn!("{label}: no successful run, omitted from the comparison");
            omitted.push(label.clone());
            continue;
        }
        let dir = out.join(label.replace([' ', ',', '[', ']'], "_"));
        let points = write_snapshots(&dir, s)?;
        fronts.push(FrontReport::new(label.clone(), points, s.failures.clone()));
    }
    if fronts.is_empty() {
        return Err(Error::AllRunsFailed("no method produced a front".into()));
    }
    let reference = reference_point(fronts.iter().flat_map(|f| f.raw.iter()));
    let entries: Vec<MethodEntry> = fronts
        .into_iter()
        .map(|f| MethodEntry {
            label: f.label.clone(),
            hypervolume: f.hypervolume(reference),
            hypervolume_raw: f.hypervolume_raw(reference),
            front: f,
        })
        .collect();
    let union: Vec<ObjectivePoint> = entries.iter().flat_map(|e| e.front.filtered.iter().cloned()).collect();
    let merged: Vec<ObjectivePoint> = nondominated_indices(&union).into_iter().map(|i| union[i].clone()).collect();

    let series: Vec<Series> = entries
        .iter()
        .map(|e| Series {
            label: e.label.clone(),
            points: e.front.filtered_losses(),
        })
        .collect();
    write_front_files(out, title, &series, &merged)?;
    let groups: Vec<(String, &SweepResult)> = sweeps.iter().map(|(l, s)| (l.clone(), s)).collect();
    write_runs_csv(&out.join("runs.csv"), &groups)?;

    let mut text = String::from(header);
    let _ = writeln!(
        text,
        "hypervolume reference: [{}, {}]",
        fmt_g(reference[0]),
        fmt_g(reference[1])
    );
    for e in &entries {
        let _ = writeln!(
            text,
            "{}: hypervolume {} ({} non-dominated, {} dominated, {} failed)",
            e.label,
            fmt_g(e.hypervolume),
            e.front.filtered.len(),
            e.front.dominated,
            e.front.failures.len()
        );
    }
    for o in &omitted {
        let _ = writeln!(text, "{o}: omitted (no successful run)");
    }
    let _ = writeln!(text, "merged front: {} points\n", merged.len());
    for e in &entries {
        write_report_block(&mut text, &e.front, reference);
    }
    fs::write(out.join("report.txt"), text)?;
    Ok(CompareReport {
        entries,
        omitted,
        reference,
        merged,
    })
}

/// Runs each config (sharing problem, grid, noise and data seed) and compares
/// the resulting fronts with hypervolumes against a shared reference point.
pub fn compare_methods(configs: &[ExperimentConfig], out: &Path, workers: usize) -> Result<CompareReport> {
    check_shared(configs)?;
    let first = &configs[0];
    let sigma = first.sigmas[0];
    let labels = method_labels(
        &configs
            .iter()
            .map(|c| (format!("{:?}", c.layers), c.method.method()))
            .collect::<Vec<_>>(),
    );
    let mut sweeps = Vec::new();
    for (c, label) in configs.iter().zip(labels) {
        let objective = PinnObjective::new(c.setup(sigma)?, &c.layers)?;
        info!("compare: running {label}");
        sweeps.push((label, sweep(&objective, &c.method, &c.train, c.seed, workers)?));
    }
    let mut header = String::new();
    let _ = writeln!(header, "problem: {}", first.problem.name());
    let _ = writeln!(header, "sigma: {sigma}");
    let _ = writeln!(header, "data seed: {}", first.effective_data_seed());
    let title = format!("{} comparison {}", first.problem.name(), sigma_label(sigma));
    compare_results(sweeps, out, &title, &header)
}

/// The bi-quadratic toy problem and the settings used by `selftest`.
pub fn selftest_problem() -> BiQuadratic {
    BiQuadratic::new(vec![1.0, 0.0], vec![0.0, 1.0]).expect("equal lengths")
}

pub fn selftest_train_config() -> TrainConfig {
    TrainConfig {
        lr: 0.01,
        epochs: 4000,
        scheduler: SchedulerConfig {
            patience: 100,
            min_lr: 1e-9,
            ..Default::default()
        },
        ..Default::default()
    }
}

#[derive(Debug, Clone)]
pub struct SelftestReport {
    pub compare: CompareReport,
    /// Largest |√L1 + √L2 − ‖a − b‖| over the WS front.
    pub ws_front_error: f64,
    /// Largest criticality measure over the MGDA points.
    pub mgda_max_critical: f64,
    /// Analytic hypervolume under the comparison's reference point.
    pub analytic_hypervolume: f64,
}

impl SelftestReport {
    pub fn hypervolume_ratio(&self, method: &str) -> Option<f64> {
        self.compare
            .entries
            .iter()
            .find(|e| e.label == method)
            .map(|e| e.hypervolume / self.analytic_hypervolume)
    }

    pub fn passed(&self) -> bool {
        self.ws_front_error < 1e-3 && self.mgda_max_critical < crate::moo::CRITICALITY_TOL
    }
}

/// Runs WS, MGDA and NSGA-II on the bi-quadratic toy problem, whose front is
/// known in closed form, and checks the gradient-based fronts against it.
pub fn selftest(out: &Path, master_seed: u64, workers: usize) -> Result<SelftestReport> {
    let toy = selftest_problem();
    let train = selftest_train_config();
    let methods = [
        ("ws", MethodConfig::Ws(WsConfig::default())),
        ("mgda", MethodConfig::Mgda(MgdaConfig::default())),
        (
            "nsga2",
            MethodConfig::Nsga2(NSGAConfig {
                generations: 100,
                ..Default::default()
            }),
        ),
    ];
    let mut sweeps = Vec::new();
    for (label, m) in &methods {
        sweeps.push((label.to_string(), sweep(&toy, m, &train, master_seed, workers)?));
    }
    let d = toy.anchor_distance();
    let ws_front_error = sweeps[0]
        .1
        .points()
        .iter()
        .map(|p| (p.losses[0].sqrt() + p.losses[1].sqrt() - d).abs())
        .fold(0.0, f64::max);
    let mgda_max_critical = sweeps[1].1.points().iter().map(|p| p.critical_measure).fold(0.0, f64::max);

    let mut header = String::new();
    let _ = writeln!(header, "problem: bi-quadratic toy, a = {:?}, b = {:?}", toy.a, toy.b);
    let _ = writeln!(header, "master seed: {master_seed}");
    let _ = writeln!(header, "ws max analytic front error: {}", fmt_g(ws_front_error));
    let _ = writeln!(header, "mgda max criticality measure: {}", fmt_g(mgda_max_critical));
    let compare_header_len = header.len();
    let mut compare = compare_results(sweeps, out, "bi-quadratic selftest", &header)?;
    let analytic = toy.front_hypervolume(compare.reference);
    // Append the analytic comparison to the report.
    let mut text = fs::read_to_string(out.join("report.txt"))?;
    let mut extra = format!("analytic hypervolume: {}\n", fmt_g(analytic));
    for e in &compare.entries {
        let _ = writeln!(extra, "{} hypervolume / analytic: {:.6}", e.label, e.hypervolume / analytic);
    }
    text.insert_str(compare_header_len, &extra);
    fs::write(out.join("report.txt"), text)?;
    compare.omitted.sort();
    Ok(SelftestReport {
        compare,
        ws_front_error,
        mgda_max_critical,
        analytic_hypervolume: analytic,
    })
}
