//! Orchestration of the four run modes and their artifacts.
//!
//! | exit code | meaning |
//! |---|---|
//! | 0 | success |
//! | 1 | other runtime failure (i/o, numerical breakdown) |
//! | 2 | configuration error, including unreadable tables and hash mismatches |
//! | 3 | the fixed-point iteration hit `max_iter` before converging |
//! | 4 | the grid would exceed `node_cap` |

use std::f64::consts::PI;
use std::fs;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::analytic::{
    inner_ball_radius, predicted_boundary, trapping_radius_bound, visibility_angle_bound, AnalyticError,
    ConstantCurvatureOracle, PredictedBoundary, Scenario,
};
use crate::config::{default_r_max, config_hash, Artifact, ConfigError, GridSpec, MetricTag, Mode, RunConfig};
use crate::export::{
    curve_csv, mask_csv, parse_metric_table, parse_profile_csv, profile_csv, sha256_hex, slice_csv, ArtifactWriter,
    ExportError, ManifestEntry, Num,
};
use crate::grid::{
    boundary_residual, classify_boundedness, distance_field, extract_profile, omega_fixed_point, time_slices,
    Boundedness, FixedPoint, GridDistanceOracle, GridError, GridParams, PolarGrid, RadialProfile, RegionMask,
};
use crate::metric::{ConformalType, MetricError, SurfaceMetric};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid configuration:\n{}", .0.iter().map(|e| format!("  {e}")).collect::<Vec<_>>().join("\n"))]
    Config(Vec<ConfigError>),
    #[error("metric table {path}: {message}")]
    Table { path: PathBuf, message: String },
    #[error("profile {path} was produced from config {found}, this config hashes to {expected}")]
    HashMismatch { path: PathBuf, expected: String, found: String },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Analytic(#[from] AnalyticError),
    #[error(transparent)]
    Export(#[from] ExportError),
    #[error("thread pool: {0}")]
    Pool(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) | RunError::Table { .. } | RunError::HashMismatch { .. } => 2,
            RunError::Grid(GridError::ResourceCap { .. }) => 4,
            RunError::Grid(GridError::InvalidParams(_)) => 2,
            _ => 1,
        }
    }
}

/// Builds the metric a config describes, with the table file's digest for
/// tabulated kinds.
pub fn build_metric(cfg: &RunConfig) -> Result<(SurfaceMetric, Option<String>), RunError> {
    let m = &cfg.metric;
    Ok(match m.kind {
        MetricTag::Euclidean => (SurfaceMetric::euclidean(), None),
        MetricTag::HyperbolicSinh => (SurfaceMetric::hyperbolic(), None),
        MetricTag::ScaledHyperbolic => (SurfaceMetric::scaled_hyperbolic(m.kappa.unwrap_or(f64::NAN))?, None),
        MetricTag::Tabulated => {
            let path = m.table.clone().unwrap_or_default();
            let bytes = fs::read(&path).map_err(|e| RunError::Table { path: path.clone(), message: e.to_string() })?;
            let text = String::from_utf8_lossy(&bytes);
            let samples = parse_metric_table(&text).map_err(|e| RunError::Table { path: path.clone(), message: e.to_string() })?;
            let metric = SurfaceMetric::tabulated(&samples, m.tail)
                .map_err(|e| RunError::Table { path: path.clone(), message: e.to_string() })?;
            (metric, Some(sha256_hex(&bytes)))
        }
    })
}

/// One fixed-point run at a given outer radius.
#[derive(Debug, Clone)]
pub struct Attempt {
    pub r_max: f64,
    pub verdict: Boundedness,
}

/// A converged (or flagged) run with its derived quantities.
#[derive(Debug, Clone)]
pub struct Solution {
    pub grid: PolarGrid,
    pub fixed: FixedPoint,
    pub profile: RadialProfile,
    pub verdict: Boundedness,
    pub residual: f64,
    /// every run of the doubling protocol, the last one being `grid`
    pub attempts: Vec<Attempt>,
}

fn grid_params(spec: &GridSpec, r_max: f64, n_r: usize, n_theta: usize) -> GridParams {
    let mut p = GridParams::new(r_max, n_r, n_theta, spec.stencil_order);
    p.node_cap = spec.node_cap;
    p
}

/// Runs the recursion once on a fixed grid.
pub fn solve_once(metric: &SurfaceMetric, scn: &Scenario, params: &GridParams, max_iter: usize) -> Result<Solution, RunError> {
    let grid = PolarGrid::build(metric, scn, params)?;
    let fixed = omega_fixed_point(&grid, scn, max_iter)?;
    let profile = extract_profile(&grid, &fixed.omega)?;
    let verdict = classify_boundedness(&profile, &grid);
    let residual = boundary_residual(&grid, &fixed.omega, scn)?;
    let attempts = vec![Attempt { r_max: grid.r_max(), verdict }];
    Ok(Solution { grid, fixed, profile, verdict, residual, attempts })
}

/// Solves at `r_max`; while the verdict is inconclusive, doubles `r_max` (same
/// cell counts) until two consecutive runs agree on a decisive verdict or the
/// doubling budget is spent.
pub fn solve_with_doubling(
    metric: &SurfaceMetric,
    scn: &Scenario,
    spec: &GridSpec,
    r_max: f64,
) -> Result<Solution, RunError> {
    let mut best = solve_once(metric, scn, &grid_params(spec, r_max, spec.n_r, spec.n_theta), spec.max_iter)?;
    if best.verdict != Boundedness::Inconclusive {
        return Ok(best);
    }
    let mut attempts = best.attempts.clone();
    let mut r = r_max;
    for _ in 0..spec.max_doublings {
        r *= 2.0;
        let next = match solve_once(metric, scn, &grid_params(spec, r, spec.n_r, spec.n_theta), spec.max_iter) {
            Ok(s) => s,
            // a larger domain that cannot be built or evaluated ends the protocol
            Err(RunError::Grid(_)) | Err(RunError::Metric(_)) => break,
            Err(e) => return Err(e),
        };
        let prev = attempts.last().map(|a| a.verdict.label());
        attempts.push(Attempt { r_max: next.grid.r_max(), verdict: next.verdict });
        let stable = next.verdict != Boundedness::Inconclusive && prev == Some(next.verdict.label());
        best = next;
        if stable {
            break;
        }
    }
    best.attempts = attempts;
    Ok(best)
}

/// `r_max` from the config or from the default rule.
pub fn resolve_r_max(cfg_r_max: Option<f64>, metric: &SurfaceMetric, scn: &Scenario) -> f64 {
    cfg_r_max.unwrap_or_else(|| default_r_max(metric, scn))
}

/// Analytic prediction of `∂Ω` for comparison, using the closed-form distance
/// when one exists and the obstacle-free grid field otherwise.
pub fn predict(metric: &SurfaceMetric, scn: &Scenario, grid: &PolarGrid) -> Result<PredictedBoundary, RunError> {
    Ok(match ConstantCurvatureOracle::for_metric(metric, scn) {
        Some(oracle) => predicted_boundary(metric, scn, &oracle, grid.r_max())?,
        None => {
            let field = distance_field(grid, grid.q_node(), &RegionMask::empty_for(grid))?;
            let oracle = GridDistanceOracle::new(grid, &field);
            predicted_boundary(metric, scn, &oracle, grid.r_max())?
        }
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct GridEcho {
    pub r_max: Num,
    pub n_r: usize,
    pub n_theta: usize,
    pub stencil_order: u8,
    pub dr: Num,
    pub dtheta: Num,
    pub q_ring: usize,
}

impl GridEcho {
    fn of(g: &PolarGrid) -> Self {
        GridEcho {
            r_max: Num(g.r_max()),
            n_r: g.n_r(),
            n_theta: g.n_theta(),
            stencil_order: g.stencil_order(),
            dr: Num(g.dr()),
            dtheta: Num(g.dtheta()),
            q_ring: g.q_ring(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioEcho {
    pub lambda: Num,
    pub ell: Num,
}

#[derive(Debug, Clone, Serialize)]
pub struct SectorEcho {
    pub first_theta: Num,
    pub last_theta: Num,
    pub columns: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct AttemptEcho {
    pub r_max: Num,
    pub classification: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalyticEcho {
    pub trapping_bound: Num,
    pub visibility_bound: Num,
    pub inner_ball_radius: Num,
    pub conformal_type: &'static str,
    pub visibility_angle: Option<Num>,
    pub closure_radius: Option<Num>,
    pub total_sweep: Option<Num>,
}

/// Contents of `summary.json`; field order is the serialization order.
#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub config_hash: String,
    pub classification: &'static str,
    pub escape_sector: Option<SectorEcho>,
    pub max_f: Option<Num>,
    pub iterations: usize,
    pub converged: bool,
    pub added: Vec<usize>,
    pub residual: Num,
    pub mirror_defect: Num,
    pub grid: GridEcho,
    pub scenario: ScenarioEcho,
    pub metric: &'static str,
    pub attempts: Vec<AttemptEcho>,
    pub analytic: AnalyticEcho,
}

fn conformal_label(metric: &SurfaceMetric) -> &'static str {
    match metric.conformal_classify(1.0 + metric_cut(metric)).map(|r| r.classification) {
        Ok(ConformalType::Parabolic) => "parabolic",
        Ok(ConformalType::Hyperbolic) => "hyperbolic",
        _ => "inconclusive",
    }
}

fn metric_cut(metric: &SurfaceMetric) -> f64 {
    match metric.kind() {
        crate::metric::MetricKind::Tabulated(t) => (t.last_r() - 1.0).max(0.0),
        _ => 49.0,
    }
}

pub fn summarize(
    hash: &str,
    metric: &SurfaceMetric,
    scn: &Scenario,
    sol: &Solution,
    prediction: Option<&PredictedBoundary>,
) -> Summary {
    let g = &sol.grid;
    let escape_sector = match sol.verdict {
        Boundedness::Escaping { first, last, width } => Some(SectorEcho {
            first_theta: Num(wrap(g.theta(first))),
            last_theta: Num(wrap(g.theta(last))),
            columns: width,
        }),
        _ => None,
    };
    Summary {
        config_hash: hash.to_string(),
        classification: sol.verdict.label(),
        escape_sector,
        max_f: sol.profile.max_finite().map(Num),
        iterations: sol.fixed.iterations,
        converged: sol.fixed.converged,
        added: sol.fixed.added.clone(),
        residual: Num(sol.residual),
        mirror_defect: Num(sol.profile.mirror_defect()),
        grid: GridEcho::of(g),
        scenario: ScenarioEcho { lambda: Num(scn.lambda), ell: Num(scn.ell) },
        metric: metric.kind_name(),
        attempts: sol.attempts.iter().map(|a| AttemptEcho { r_max: Num(a.r_max), classification: a.verdict.label() }).collect(),
        analytic: AnalyticEcho {
            trapping_bound: Num(trapping_radius_bound(metric, scn).unwrap_or(f64::NAN)),
            visibility_bound: Num(visibility_angle_bound(scn.lambda).unwrap_or(f64::NAN)),
            inner_ball_radius: Num(inner_ball_radius(scn)),
            conformal_type: conformal_label(metric),
            visibility_angle: prediction.map(|p| Num(p.visibility_angle)),
            closure_radius: prediction.and_then(|p| p.closure_radius).map(Num),
            total_sweep: prediction.map(|p| Num(p.total_sweep)),
        },
    }
}

/// Angle in `(−π, π]`.
pub fn wrap(theta: f64) -> f64 {
    let t = theta.rem_euclid(2.0 * PI);
    if t > PI {
        t - 2.0 * PI
    } else {
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegionDistance {
    pub hausdorff: Num,
    pub hausdorff_cells: Num,
    pub grid_points: usize,
    pub predicted_points: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonRegions {
    pub visible_arc: RegionDistance,
    pub spirals: RegionDistance,
}

/// Grid boundary against the predicted boundary.
#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub config_hash: String,
    pub profile_source: String,
    pub hausdorff: Num,
    pub hausdorff_cells: Num,
    pub regions: ComparisonRegions,
    pub escaping_columns: usize,
    pub residual: Num,
    pub classification: &'static str,
    pub predicted_bounded: bool,
    pub visibility_angle: Num,
    pub closure_radius: Option<Num>,
}

/// Length of the chart segment between two nearby points, with `G` frozen at the
/// mean radius.
fn chart_distance(metric: &SurfaceMetric, a: (f64, f64), b: (f64, f64)) -> f64 {
    let dth = wrap(a.1 - b.1);
    let g = metric.eval_g(0.5 * (a.0 + b.0)).unwrap_or(f64::INFINITY);
    (a.0 - b.0).hypot(g * dth)
}

fn directed(metric: &SurfaceMetric, from: &[(f64, f64)], to: &[(f64, f64)]) -> f64 {
    from.par_iter()
        .map(|&p| to.iter().map(|&q| chart_distance(metric, p, q)).fold(f64::INFINITY, f64::min))
        .reduce(|| 0.0, f64::max)
}

/// Symmetric Hausdorff distance between two point sets; zero when both are empty.
pub fn hausdorff(metric: &SurfaceMetric, a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    if a.is_empty() || b.is_empty() {
        return f64::INFINITY;
    }
    directed(metric, a, b).max(directed(metric, b, a))
}

/// Inserts chart-linear points so consecutive samples are at most `spacing` apart.
fn densify(metric: &SurfaceMetric, pts: &[(f64, f64)], spacing: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(pts.len());
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let n = (chart_distance(metric, a, b) / spacing).ceil().clamp(1.0, 1e4) as usize;
        for k in 0..n {
            let s = k as f64 / n as f64;
            out.push((a.0 + s * (b.0 - a.0), a.1 + s * (b.1 - a.1)));
        }
    }
    if let Some(&last) = pts.last() {
        out.push(last);
    }
    out
}

/// Compares a profile (`(θ, f)` per column) with the prediction, over the whole
/// boundary and split at the visibility angle.
pub fn compare_profile(
    metric: &SurfaceMetric,
    grid: &PolarGrid,
    points: &[(f64, f64)],
    prediction: &PredictedBoundary,
) -> (f64, RegionDistance, RegionDistance, usize) {
    let a = prediction.visibility_angle;
    let r_cap = grid.r_max();
    let spacing = 0.25 * grid.dr();
    let arc = densify(metric, &prediction.visible_arc, spacing);
    let mut spirals = Vec::new();
    for s in &prediction.spirals {
        let kept: Vec<_> = s.samples.iter().copied().filter(|p| p.0 <= r_cap).collect();
        spirals.extend(densify(metric, &kept, spacing));
    }
    let finite: Vec<(f64, f64)> = points.iter().filter(|p| p.1.is_finite()).map(|&(t, f)| (f, wrap(t))).collect();
    let escaping = points.len() - finite.len();
    let (g_arc, g_spiral): (Vec<_>, Vec<_>) = finite.iter().partition(|p| p.1.abs() <= a);
    let cells = |d: f64| d / grid.dr();
    let region = |g: &[(f64, f64)], p: &[(f64, f64)]| {
        let d = hausdorff(metric, g, p);
        RegionDistance { hausdorff: Num(d), hausdorff_cells: Num(cells(d)), grid_points: g.len(), predicted_points: p.len() }
    };
    let arc_d = region(&g_arc, &arc);
    let spiral_d = region(&g_spiral, &spirals);
    let all_pred: Vec<_> = arc.iter().chain(&spirals).copied().collect();
    (hausdorff(metric, &finite, &all_pred), arc_d, spiral_d, escaping)
}

/// What a run produced.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub config_hash: String,
    pub converged: bool,
    pub artifacts: Vec<ManifestEntry>,
    /// one line for the terminal
    pub headline: String,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.converged {
            0
        } else {
            3
        }
    }
}

fn pool(parallelism: usize) -> Result<rayon::ThreadPool, RunError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| RunError::Pool(e.to_string()))
}

/// Runs the mode recorded in `cfg`.
pub fn run(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let (metric, table_sha) = build_metric(cfg)?;
    let hash = config_hash(cfg, table_sha.as_deref());
    match cfg.mode {
        Mode::Solve => run_solve(cfg, &metric, &hash),
        Mode::Refine => run_refine(cfg, &metric, &hash),
        Mode::Sweep => run_sweep(cfg, &metric, &hash),
        Mode::Compare => run_compare(cfg, &metric, &hash),
    }
}

fn run_solve(cfg: &RunConfig, metric: &SurfaceMetric, hash: &str) -> Result<Outcome, RunError> {
    let scn = cfg.scenario;
    let r_max = resolve_r_max(cfg.grid.r_max, metric, &scn);
    let sol = solve_with_doubling(metric, &scn, &cfg.grid, r_max)?;
    let prediction = predict(metric, &scn, &sol.grid).ok();
    let wants = |a: Artifact| cfg.outputs.artifacts.contains(&a);
    let mut w = ArtifactWriter::new(&cfg.outputs.directory)?;
    let summary = summarize(hash, metric, &scn, &sol, prediction.as_ref());
    if wants(Artifact::Summary) {
        w.write_json("summary.json", &summary)?;
    }
    if wants(Artifact::Profile) {
        w.write("profile.csv", profile_csv(&sol.profile, hash).as_bytes())?;
    }
    if wants(Artifact::Mask) {
        w.write("mask.csv", mask_csv(&sol.grid, &sol.fixed.omega, hash).as_bytes())?;
    }
    if wants(Artifact::Curves) {
        if let Some(p) = &prediction {
            w.write("curves/visible_arc.csv", curve_csv(&p.visible_arc, hash, "visible_arc").as_bytes())?;
            w.write("curves/spiral_upper.csv", curve_csv(&p.spirals[0].samples, hash, "spiral_upper").as_bytes())?;
            w.write("curves/spiral_lower.csv", curve_csv(&p.spirals[1].samples, hash, "spiral_lower").as_bytes())?;
        }
    }
    if wants(Artifact::Slices) {
        let slices = time_slices(&sol.grid, &sol.fixed.omega, &scn, &cfg.outputs.slice_times)?;
        for (k, s) in slices.iter().enumerate() {
            w.write(&format!("slices/slice_{k:03}.csv"), slice_csv(&sol.grid, s, hash).as_bytes())?;
        }
    }
    let artifacts = w.finish(hash)?;
    let headline = format!(
        "solve: {} after {} iterations (max f = {}, residual = {})",
        summary.classification,
        summary.iterations,
        sol.profile.max_finite().map_or("none".into(), crate::export::fmt_num),
        crate::export::fmt_num(sol.residual)
    );
    Ok(Outcome { config_hash: hash.to_string(), converged: sol.fixed.converged, artifacts, headline })
}

/// One row of a refinement study.
#[derive(Debug, Clone, Serialize)]
pub struct RefineRow {
    pub n_r: usize,
    pub n_theta: usize,
    pub dr: Num,
    pub iterations: usize,
    pub converged: bool,
    pub residual: Num,
    pub max_f: Option<Num>,
    pub classification: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct RefineReport {
    pub config_hash: String,
    pub r_max: Num,
    pub rows: Vec<RefineRow>,
    /// least-squares slope of `ln residual` against `ln Δr`
    pub empirical_order: Num,
    pub monotone: bool,
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Solves at `2^k` times the base resolution (both cell counts) for each level,
/// with `r_max` fixed.
pub fn refinement_study(
    metric: &SurfaceMetric,
    scn: &Scenario,
    spec: &GridSpec,
    r_max: f64,
    base: (usize, usize),
    levels: usize,
    parallelism: usize,
) -> Result<Vec<Solution>, RunError> {
    let runs: Vec<(usize, usize)> = (0..levels).map(|k| (base.0 << k, base.1 << k)).collect();
    pool(parallelism)?.install(|| {
        runs.par_iter()
            .map(|&(n_r, n_t)| solve_once(metric, scn, &grid_params(spec, r_max, n_r, n_t), spec.max_iter))
            .collect()
    })
}

fn run_refine(cfg: &RunConfig, metric: &SurfaceMetric, hash: &str) -> Result<Outcome, RunError> {
    let scn = cfg.scenario;
    let r_max = resolve_r_max(cfg.grid.r_max, metric, &scn);
    let rf = &cfg.refine;
    let sols = refinement_study(metric, &scn, &cfg.grid, r_max, (rf.base_n_r, rf.base_n_theta), rf.levels, rf.parallelism)?;
    let rows: Vec<RefineRow> = sols
        .iter()
        .map(|s| RefineRow {
            n_r: s.grid.n_r(),
            n_theta: s.grid.n_theta(),
            dr: Num(s.grid.dr()),
            iterations: s.fixed.iterations,
            converged: s.fixed.converged,
            residual: Num(s.residual),
            max_f: s.profile.max_finite().map(Num),
            classification: s.verdict.label(),
        })
        .collect();
    let drs: Vec<f64> = sols.iter().map(|s| s.grid.dr()).collect();
    let res: Vec<f64> = sols.iter().map(|s| s.residual).collect();
    let order = log_slope(&drs, &res);
    let monotone = res.windows(2).all(|w| w[1] < w[0]);
    let report = RefineReport { config_hash: hash.to_string(), r_max: Num(r_max), rows, empirical_order: Num(order), monotone };

    let mut w = ArtifactWriter::new(&cfg.outputs.directory)?;
    let mut table = format!("# config_hash={hash}\nn_r,n_theta,dr,iterations,converged,residual,max_f,classification\n");
    for r in &report.rows {
        table.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.n_r,
            r.n_theta,
            crate::export::fmt_num(r.dr.0),
            r.iterations,
            r.converged,
            crate::export::fmt_num(r.residual.0),
            r.max_f.map_or("inf".into(), |m| crate::export::fmt_num(m.0)),
            r.classification
        ));
    }
    w.write("refine.csv", table.as_bytes())?;
    w.write_json("refine.json", &report)?;
    let artifacts = w.finish(hash)?;
    Ok(Outcome {
        config_hash: hash.to_string(),
        converged: sols.iter().all(|s| s.fixed.converged),
        artifacts,
        headline: format!(
            "refine: residuals {:?}, empirical order {}",
            res.iter().map(|&r| crate::export::fmt_num(r)).collect::<Vec<_>>(),
            crate::export::fmt_num(order)
        ),
    })
}

/// One `(λ, ℓ)` cell of a sweep.
#[derive(Debug, Clone)]
pub struct SweepCell {
    pub lambda: f64,
    pub ell: f64,
    pub solution: Solution,
    /// whether the analytic spirals close up; `None` when no prediction exists
    pub predicted_bounded: Option<bool>,
}

/// Solves every `(λ, ℓ)` pair; results come back in row-major order whatever the
/// execution order.
pub fn sweep(
    metric: &SurfaceMetric,
    spec: &GridSpec,
    lambdas: &[f64],
    ells: &[f64],
    parallelism: usize,
) -> Result<Vec<SweepCell>, RunError> {
    let cells: Vec<(f64, f64)> = lambdas.iter().flat_map(|&l| ells.iter().map(move |&e| (l, e))).collect();
    pool(parallelism)?.install(|| {
        cells
            .par_iter()
            .map(|&(lambda, ell)| {
                let scn = Scenario::new(lambda, ell)?;
                let r_max = resolve_r_max(spec.r_max, metric, &scn);
                let solution = solve_with_doubling(metric, &scn, spec, r_max)?;
                let predicted_bounded = predict(metric, &scn, &solution.grid).ok().map(|p| p.is_bounded());
                Ok(SweepCell { lambda, ell, solution, predicted_bounded })
            })
            .collect()
    })
}

fn run_sweep(cfg: &RunConfig, metric: &SurfaceMetric, hash: &str) -> Result<Outcome, RunError> {
    let cells = sweep(metric, &cfg.grid, &cfg.sweep.lambdas, &cfg.sweep.ells, cfg.sweep.parallelism)?;
    let mut table = format!("# config_hash={hash}\nlambda,ell,classification,max_f,r_max,iterations,converged,predicted\n");
    for c in &cells {
        let s = &c.solution;
        table.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            crate::export::fmt_num(c.lambda),
            crate::export::fmt_num(c.ell),
            s.verdict.label(),
            s.profile.max_finite().map_or("inf".into(), crate::export::fmt_num),
            crate::export::fmt_num(s.grid.r_max()),
            s.fixed.iterations,
            s.fixed.converged,
            match c.predicted_bounded {
                Some(true) => "bounded",
                Some(false) => "unbounded",
                None => "unavailable",
            }
        ));
    }
    let mut w = ArtifactWriter::new(&cfg.outputs.directory)?;
    w.write("phase.csv", table.as_bytes())?;
    let artifacts = w.finish(hash)?;
    let counts = ["bounded", "escaping", "inconclusive"]
        .map(|l| format!("{} {l}", cells.iter().filter(|c| c.solution.verdict.label() == l).count()));
    Ok(Outcome {
        config_hash: hash.to_string(),
        converged: cells.iter().all(|c| c.solution.fixed.converged),
        artifacts,
        headline: format!("sweep: {} cells, {}", cells.len(), counts.join(", ")),
    })
}

fn run_compare(cfg: &RunConfig, metric: &SurfaceMetric, hash: &str) -> Result<Outcome, RunError> {
    let scn = cfg.scenario;
    let r_max = resolve_r_max(cfg.grid.r_max, metric, &scn);
    let (sol, points, source) = match &cfg.compare.profile {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| ExportError::Io { path: path.clone(), source: e })?;
            let parsed = parse_profile_csv(&text)?;
            let found = parsed.config_hash.clone().unwrap_or_default();
            if found != hash {
                return Err(RunError::HashMismatch { path: path.clone(), expected: hash.to_string(), found });
            }
            // same hash, same grid: solve again for the residual and the mask
            let sol = solve_with_doubling(metric, &scn, &cfg.grid, r_max)?;
            (sol, parsed.points, path.display().to_string())
        }
        None => {
            let sol = solve_with_doubling(metric, &scn, &cfg.grid, r_max)?;
            let pts = (0..sol.grid.n_theta()).map(|j| (sol.grid.theta(j), sol.profile.f[j])).collect();
            (sol, pts, "solved".to_string())
        }
    };
    let prediction = predict(metric, &scn, &sol.grid)?;
    let report = comparison_report(hash, &source, metric, &sol, &points, &prediction);
    let mut w = ArtifactWriter::new(&cfg.outputs.directory)?;
    w.write_json("comparison.json", &report)?;
    let artifacts = w.finish(hash)?;
    Ok(Outcome {
        config_hash: hash.to_string(),
        converged: sol.fixed.converged,
        artifacts,
        headline: format!(
            "compare: hausdorff {} ({} cells); visible arc {} cells, spirals {} cells",
            crate::export::fmt_num(report.hausdorff.0),
            crate::export::fmt_num(report.hausdorff_cells.0),
            crate::export::fmt_num(report.regions.visible_arc.hausdorff_cells.0),
            crate::export::fmt_num(report.regions.spirals.hausdorff_cells.0)
        ),
    })
}

pub fn comparison_report(
    hash: &str,
    source: &str,
    metric: &SurfaceMetric,
    sol: &Solution,
    points: &[(f64, f64)],
    prediction: &PredictedBoundary,
) -> ComparisonReport {
    let (total, arc, spirals, escaping) = compare_profile(metric, &sol.grid, points, prediction);
    ComparisonReport {
        config_hash: hash.to_string(),
        profile_source: source.to_string(),
        hausdorff: Num(total),
        hausdorff_cells: Num(total / sol.grid.dr()),
        regions: ComparisonRegions { visible_arc: arc, spirals },
        escaping_columns: escaping,
        residual: Num(sol.residual),
        classification: sol.verdict.label(),
        predicted_bounded: prediction.is_bounded(),
        visibility_angle: Num(prediction.visibility_angle),
        closure_radius: prediction.closure_radius.map(Num),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::validate_config_with;

    const EUCLID: &str = "[metric]\nkind = \"euclidean\"\n[scenario]\nlambda = 2\nell = 1\n";

    fn cfg(text: &str, sets: &[&str], dir: &std::path::Path) -> RunConfig {
        let mut sets: Vec<String> = sets.iter().map(|s| s.to_string()).collect();
        sets.push(format!("outputs.directory={}", dir.display()));
        validate_config_with(text, &sets).unwrap()
    }

    #[test]
    fn solve_writes_every_artifact() {
        let dir = tempfile::tempdir().unwrap();
        let c = cfg(EUCLID, &["grid.n_r=100", "grid.n_theta=180"], dir.path());
        let out = run(&c).unwrap();
        assert_eq!(out.exit_code(), 0);
        let names: Vec<_> = out.artifacts.iter().map(|e| e.path.as_str()).collect();
        for n in ["summary.json", "profile.csv", "mask.csv", "curves/visible_arc.csv", "slices/slice_000.csv"] {
            assert!(names.contains(&n), "{n} missing from {names:?}");
        }
        let summary: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
        assert_eq!(summary["classification"], "bounded");
        assert_eq!(summary["config_hash"], out.config_hash.as_str());
        for e in &out.artifacts {
            let text = fs::read_to_string(dir.path().join(&e.path)).unwrap();
            assert!(text.contains(&out.config_hash), "{} lacks the hash", e.path);
        }
    }

    #[test]
    fn summary_is_byte_identical_across_runs() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let sets = ["grid.n_r=64", "grid.n_theta=96"];
        run(&cfg(EUCLID, &sets, a.path())).unwrap();
        run(&cfg(EUCLID, &sets, b.path())).unwrap();
        for f in ["summary.json", "profile.csv", "mask.csv", "manifest.json"] {
            assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
        }
    }

    #[test]
    fn compare_refuses_a_foreign_profile() {
        let dir = tempfile::tempdir().unwrap();
        run(&cfg(EUCLID, &["grid.n_r=64", "grid.n_theta=96"], dir.path())).unwrap();
        let profile = dir.path().join("profile.csv");
        let other = tempfile::tempdir().unwrap();
        let set = format!("compare.profile={}", profile.display());
        let c = cfg(EUCLID, &["grid.n_r=80", "grid.n_theta=96", "mode=compare", &set], other.path());
        let err = run(&c).unwrap_err();
        assert!(matches!(err, RunError::HashMismatch { .. }));
        assert_eq!(err.exit_code(), 2);
        // the matching config is accepted
        let c = cfg(EUCLID, &["grid.n_r=64", "grid.n_theta=96", "mode=compare", &set], other.path());
        assert_eq!(run(&c).unwrap().exit_code(), 0);
    }

    #[test]
    fn resource_cap_and_non_convergence_codes() {
        let dir = tempfile::tempdir().unwrap();
        let err = run(&cfg(EUCLID, &["grid.node_cap=1000"], dir.path())).unwrap_err();
        assert_eq!(err.exit_code(), 4);
        let out = run(&cfg(EUCLID, &["grid.n_r=64", "grid.n_theta=96", "grid.max_iter=1"], dir.path())).unwrap();
        assert_eq!(out.exit_code(), 3);
    }

    #[test]
    fn doubling_resolves_a_tight_domain() {
        let metric = SurfaceMetric::euclidean();
        let scn = Scenario::new(2.0, 1.0).unwrap();
        let mut spec = validate_config_with(EUCLID, &["grid.n_r=100".into(), "grid.n_theta=180".into()]).unwrap().grid;
        let sol = solve_with_doubling(&metric, &scn, &spec, 1.5).unwrap();
        assert_eq!(sol.attempts[0].verdict, Boundedness::Inconclusive);
        assert_eq!(sol.verdict.label(), "bounded");
        assert_eq!(sol.attempts.len(), 3);
        spec.max_doublings = 0;
        assert_eq!(solve_with_doubling(&metric, &scn, &spec, 1.5).unwrap().verdict, Boundedness::Inconclusive);
    }

    #[test]
    fn sweep_order_does_not_matter() {
        let metric = SurfaceMetric::euclidean();
        let spec = validate_config_with(EUCLID, &["grid.n_r=48".into(), "grid.n_theta=64".into()]).unwrap().grid;
        let a = sweep(&metric, &spec, &[1.5, 3.0], &[1.0, 2.0], 1).unwrap();
        let b = sweep(&metric, &spec, &[1.5, 3.0], &[1.0, 2.0], 4).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!((x.lambda, x.ell), (y.lambda, y.ell));
            assert_eq!(x.solution.profile, y.solution.profile);
        }
    }

    #[test]
    fn slope_fit() {
        let xs = [0.1, 0.05, 0.025];
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x * x).collect();
        assert!((log_slope(&xs, &ys) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn hausdorff_basics() {
        let m = SurfaceMetric::euclidean();
        let a = [(1.0, 0.0), (1.0, 0.5)];
        assert_eq!(hausdorff(&m, &a, &a), 0.0);
        let b = [(1.1, 0.0), (1.0, 0.5)];
        assert!((hausdorff(&m, &a, &b) - 0.1).abs() < 1e-12);
        assert_eq!(hausdorff(&m, &a, &[]), f64::INFINITY);
        assert!((wrap(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-15);
    }
}
