//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use growthfront::analytic::{
    inner_ball_radius, omega1_profile, predicted_boundary, trapping_radius_bound, visibility_angle,
    visibility_angle_bound, ConstantCurvatureOracle, Scenario,
};
use growthfront::grid::{
    boundary_residual, classify_boundedness, distance_field, extract_profile, omega_fixed_point_with, time_slices, Boundedness,
    GridParams, NodeId, PolarGrid, RadialProfile, RegionMask,
};
use growthfront::metric::{ConformalType, SurfaceMetric};
use growthfront::runner::log_slope;

/// One converged run with everything the structural checks need.
struct Run {
    label: String,
    scn: Scenario,
    grid: PolarGrid,
    chain: Vec<RegionMask>,
    profile: RadialProfile,
    verdict: Boundedness,
    elapsed: Duration,
}

impl Run {
    fn omega(&self) -> &RegionMask {
        self.chain.last().expect("at least one step")
    }
}

fn solve(label: &str, metric: &SurfaceMetric, lambda: f64, ell: f64, r_max: f64, n_r: usize, n_theta: usize) -> Run {
    let scn = Scenario::new(lambda, ell).unwrap();
    let start = Instant::now();
    let grid = PolarGrid::build(metric, &scn, &GridParams::new(r_max, n_r, n_theta, 2)).unwrap();
    let mut chain = Vec::new();
    let fp = omega_fixed_point_with(&grid, &scn, 10_000, |_, m| chain.push(m.clone())).unwrap();
    assert!(fp.converged, "{label} did not converge");
    let profile = extract_profile(&grid, &fp.omega).unwrap();
    let verdict = classify_boundedness(&profile, &grid);
    let elapsed = start.elapsed();
    Run { label: label.to_string(), scn, grid, chain, profile, verdict, elapsed }
}

fn signed(theta: f64) -> f64 {
    if theta > PI {
        theta - 2.0 * PI
    } else {
        theta
    }
}

struct Report {
    failures: usize,
}

impl Report {
    fn line(&mut self, n: usize, ok: bool, detail: String) {
        if !ok {
            self.failures += 1;
        }
        println!("{} criterion {n}: {detail}", if ok { "PASS" } else { "FAIL" });
    }
}

fn criterion_1(r: &mut Report, bench: &Run) {
    let g = &bench.grid;
    let oracle = ConstantCurvatureOracle::for_metric(g.metric(), &bench.scn).unwrap();
    let mut worst: f64 = 0.0;
    for j in 0..g.n_theta() {
        let theta = signed(g.theta(j));
        if theta.abs() <= PI / 2.0 - 2.0 * g.dtheta() {
            let f1 = omega1_profile(&bench.scn, &oracle, theta, 10.0);
            worst = worst.max((bench.profile.f[j] - f1).abs() / g.dr());
        }
    }
    let pred = predicted_boundary(g.metric(), &bench.scn, &oracle, g.r_max()).unwrap();
    let closure = pred.closure_radius.unwrap();
    let f_pi = bench.profile.f[g.column_at(PI)];
    let rel = (f_pi / 1.4301 - 1.0).abs();
    let f1_ok = (omega1_profile(&bench.scn, &oracle, 0.0, 10.0) - 1.0 / 3.0).abs() < 1e-9
        && (omega1_profile(&bench.scn, &oracle, PI / 2.0, 10.0) - 1.0 / 3f64.sqrt()).abs() < 1e-9;
    let ok = bench.verdict.label() == "bounded"
        && worst <= 2.0
        && rel <= 0.03
        && (closure - 1.4301).abs() < 5e-4
        && f1_ok
        && bench.elapsed < Duration::from_secs(60);
    r.line(
        1,
        ok,
        format!(
            "euclidean λ=2 ℓ=1 400x720 order 2: {}, visible-arc error {worst:.3} cells (≤ 2), f(π) = {f_pi:.5} vs 1.4301 ({:.2}% ≤ 3%), closure {closure:.6}, {:.2?}",
            bench.verdict.label(),
            100.0 * rel,
            bench.elapsed
        ),
    );
}

fn criterion_2(r: &mut Report, levels: &[&Run]) {
    let res: Vec<f64> = levels.iter().map(|run| boundary_residual(&run.grid, run.omega(), &run.scn).unwrap()).collect();
    let drs: Vec<f64> = levels.iter().map(|run| run.grid.dr()).collect();
    let order = log_slope(&drs, &res);
    let pairwise: Vec<f64> = (1..res.len()).map(|k| (res[k - 1] / res[k]).ln() / (drs[k - 1] / drs[k]).ln()).collect();
    let monotone = res.windows(2).all(|w| w[1] < w[0]);
    let ok = res[res.len() - 1] <= 0.05 && monotone && order >= 0.8;
    r.line(
        2,
        ok,
        format!(
            "residual {:?} at n_r 100/200/400 (last ≤ 0.05), monotone {monotone}, fitted order {order:.3} (≥ 0.8), pairwise {:?}",
            res.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>(),
            pairwise.iter().map(|v| format!("{v:.2}")).collect::<Vec<_>>()
        ),
    );
}

fn criterion_3(r: &mut Report, runs: &[&Run]) {
    let mut parts = Vec::new();
    let mut ok = true;
    for run in runs {
        let back = run.grid.column_at(PI);
        let hit = match run.verdict {
            Boundedness::Escaping { first, last, .. } => {
                let n = run.grid.n_theta();
                (back + n - first) % n <= (last + n - first) % n
            }
            _ => false,
        };
        ok &= hit;
        parts.push(format!("r_max {}: {:?}", run.grid.r_max().round(), run.verdict));
    }
    let scn = runs[0].scn;
    let metric = SurfaceMetric::hyperbolic();
    let oracle = ConstantCurvatureOracle::for_metric(&metric, &scn).unwrap();
    let a = visibility_angle(&scn, &oracle, 1e3).unwrap();
    let f1a = omega1_profile(&scn, &oracle, a, 1e3);
    let sweep = 3f64.sqrt() * -(0.5 * f1a).tanh().ln();
    let bound = visibility_angle_bound(2.0).unwrap() + sweep;
    ok &= bound < PI;
    r.line(
        3,
        ok,
        format!(
            "sinh λ=2 ℓ=5: {}; 2π/3 + √3·(−ln tanh(f₁(a)/2)) = {bound:.6} < π (a = {a:.6}, f₁(a) = {f1a:.6})",
            parts.join(", ")
        ),
    );
}

fn criterion_4(r: &mut Report, bench: &Run, family: &[Run]) {
    let metric = SurfaceMetric::euclidean();
    let t = trapping_radius_bound(&metric, &bench.scn).unwrap();
    let closed = (PI / 3f64.sqrt()).exp() - 1.0;
    let mut ok = (t - closed).abs() < 1e-9 && (t - 5.1337).abs() < 1e-3;
    let bench_max = bench.profile.max_finite().unwrap();
    ok &= bench_max < t;
    let mut parts = vec![format!("T = {t:.6}, benchmark max f = {bench_max:.4}")];
    for run in family {
        let tb = trapping_radius_bound(&metric, &run.scn).unwrap();
        let m = run.profile.max_finite().unwrap_or(f64::INFINITY);
        let good = run.verdict.label() == "bounded" && m < tb;
        ok &= good;
        parts.push(format!("{}: max f {m:.3} < T {tb:.3}{}", run.label, if good { "" } else { " (violated)" }));
    }
    r.line(4, ok, parts.join("; "));
}

// queue-based Bellman-Ford, adding edge lengths in path order like Dijkstra
fn bellman_ford(grid: &PolarGrid, source: NodeId, obstacle: &RegionMask) -> Vec<f64> {
    let mut d = vec![f64::INFINITY; grid.node_count()];
    d[source as usize] = 0.0;
    let mut queue = VecDeque::from([source]);
    while let Some(u) = queue.pop_front() {
        for (v, w) in grid.neighbors(u) {
            if !obstacle.contains(v) && d[u as usize] + w < d[v as usize] {
                d[v as usize] = d[u as usize] + w;
                queue.push_back(v);
            }
        }
    }
    d
}

fn criterion_5(r: &mut Report) {
    let scn = Scenario::new(2.0, 1.0).unwrap();
    let metrics = [SurfaceMetric::euclidean(), SurfaceMetric::hyperbolic()];
    let mut pairs = 0usize;
    let mut mismatches = 0usize;
    for seed in 0..20u64 {
        let metric = &metrics[seed as usize % 2];
        let order = (seed % 3) as u8 + 1;
        let grid = PolarGrid::build(metric, &scn, &GridParams::new(3.0, 16, 16, order)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let density = rng.random_range(0.05..0.5);
        let mut obstacle = RegionMask::empty_for(&grid);
        for node in 0..grid.node_count() as NodeId {
            if rng.random_bool(density) {
                obstacle.insert(node);
            }
        }
        for source in 0..grid.node_count() as NodeId {
            if obstacle.contains(source) {
                continue;
            }
            let field = distance_field(&grid, source, &obstacle).unwrap();
            let brute = bellman_ford(&grid, source, &obstacle);
            pairs += brute.len();
            mismatches += field.values().iter().zip(&brute).filter(|(a, b)| a != b).count();
        }
    }
    r.line(
        5,
        mismatches == 0,
        format!("16x16 grids, 20 seeds, random obstacles: {mismatches} mismatches in {pairs} source/target pairs"),
    );
}

/// Structural checks on one run; returns the problems found.
fn structure(run: &Run) -> Vec<String> {
    let mut issues = Vec::new();
    let g = &run.grid;
    let mut prev = RegionMask::empty_for(g);
    for (n, m) in run.chain.iter().enumerate() {
        if !prev.is_subset_of(m) {
            issues.push(format!("Ω_{n} ⊄ Ω_{}", n + 1));
        }
        if !m.is_star_shaped() {
            issues.push(format!("Ω_{} not star-shaped", n + 1));
        }
        prev = m.clone();
    }
    if run.chain.len() > g.node_count() {
        issues.push("more iterations than nodes".into());
    }
    let inner = inner_ball_radius(&run.scn) - g.dr();
    let omega1 = &run.chain[0];
    if (0..g.node_count() as NodeId).any(|x| g.radius(x) < inner && !omega1.contains(x)) {
        issues.push("inner ball not inside Ω₁".into());
    }
    let defect = run.profile.mirror_defect();
    if defect > g.dr() {
        issues.push(format!("mirror defect {defect}"));
    }
    let omega = run.omega();
    let times: Vec<f64> = [0.0, 0.1, 0.5, 1.0, 2.0, 4.0].iter().map(|k| k * run.scn.ell).collect();
    let slices = time_slices(g, omega, &run.scn, &times).unwrap();
    let field = distance_field(g, g.q_node(), omega).unwrap();
    for s in &slices {
        for u in &slices {
            if !s.a.is_disjoint_from(&u.b) {
                issues.push(format!("A_{} meets B_{}", s.t, u.t));
            }
        }
        if !s.b.iter().all(|x| x == g.pole() || g.radius(x) < s.t) {
            issues.push(format!("B_{} leaves the ball of radius t", s.t));
        }
        if !s.a.iter().all(|x| field.get(x) <= run.scn.lambda * s.t) {
            issues.push(format!("A_{} leaves the ball of radius λt", s.t));
        }
    }
    issues
}

fn criterion_6(r: &mut Report, runs: &[&Run]) {
    let mut bad = Vec::new();
    for run in runs {
        for issue in structure(run) {
            bad.push(format!("{}: {issue}", run.label));
        }
    }
    let detail = if bad.is_empty() {
        format!("monotone chain, star shape, inner ball, slices, mirror symmetry hold on {} runs", runs.len())
    } else {
        bad.join("; ")
    };
    r.line(6, bad.is_empty(), detail);
}

fn criterion_7(r: &mut Report, base: &Run, doubled: &Run) {
    let mut worst: f64 = 0.0;
    let mut mismatched_infinite = 0;
    for (a, b) in base.profile.f.iter().zip(&doubled.profile.f) {
        if a.is_finite() && b.is_finite() {
            worst = worst.max((b - 2.0 * a).abs() / doubled.grid.dr());
        } else if a.is_finite() != b.is_finite() {
            mismatched_infinite += 1;
        }
    }
    r.line(
        7,
        worst <= 1.0 && mismatched_infinite == 0,
        format!("ℓ=1 → ℓ=2 (r_max 3 → 6): max |f₂ − 2f₁| = {worst:.3} radial cells (≤ 1)"),
    );
}

fn criterion_8(r: &mut Report) {
    let cases = [
        ("euclidean", SurfaceMetric::euclidean(), ConformalType::Parabolic),
        ("sinh", SurfaceMetric::hyperbolic(), ConformalType::Hyperbolic),
        ("scaled κ=0.25", SurfaceMetric::scaled_hyperbolic(0.25).unwrap(), ConformalType::Hyperbolic),
        ("scaled κ=4", SurfaceMetric::scaled_hyperbolic(4.0).unwrap(), ConformalType::Hyperbolic),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, m, want) in &cases {
        let got = m.conformal_classify(50.0).unwrap().classification;
        ok &= got == *want;
        parts.push(format!("{name} {got:?}"));
    }
    let i = SurfaceMetric::hyperbolic().conformal_classify(50.0).unwrap().i_partial;
    let oracle = -(0.5f64).tanh().ln();
    ok &= (i - oracle).abs() <= 1e-6 && (i - 0.7719).abs() < 5e-5;
    r.line(8, ok, format!("{}; I_partial(sinh, 50) = {i:.10} vs −ln tanh(1/2) = {oracle:.10}", parts.join(", ")));
}

fn main() -> ExitCode {
    let euclid = SurfaceMetric::euclidean();
    let hyper = SurfaceMetric::hyperbolic();
    let mut report = Report { failures: 0 };

    let bench = solve("euclidean λ=2 ℓ=1", &euclid, 2.0, 1.0, 3.0, 400, 720);
    criterion_1(&mut report, &bench);

    let coarse = solve("euclidean 100x180", &euclid, 2.0, 1.0, 3.0, 100, 180);
    let medium = solve("euclidean 200x360", &euclid, 2.0, 1.0, 3.0, 200, 360);
    criterion_2(&mut report, &[&coarse, &medium, &bench]);

    let h12 = solve("sinh r_max 12", &hyper, 2.0, 5.0, 12.0, 400, 720);
    let h24 = solve("sinh r_max 24", &hyper, 2.0, 5.0, 24.0, 400, 720);
    criterion_3(&mut report, &[&h12, &h24]);

    let mut family = Vec::new();
    for lambda in [1.5, 2.0, 4.0] {
        for ell in [1.0, 2.0] {
            let scn = Scenario::new(lambda, ell).unwrap();
            let t = trapping_radius_bound(&euclid, &scn).unwrap();
            let r_max = (3.0 * ell).max(1.2 * t);
            family.push(solve(&format!("λ={lambda} ℓ={ell}"), &euclid, lambda, ell, r_max, 400, 720));
        }
    }
    criterion_4(&mut report, &bench, &family);

    criterion_5(&mut report);

    let mut all: Vec<&Run> = vec![&bench, &coarse, &medium, &h12, &h24];
    all.extend(family.iter());
    criterion_6(&mut report, &all);

    let doubled = solve("euclidean λ=2 ℓ=2", &euclid, 2.0, 2.0, 6.0, 400, 720);
    criterion_7(&mut report, &bench, &doubled);

    criterion_8(&mut report);

    if report.failures == 0 {
        println!("acceptance: all 8 criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {} of 8 criteria failed", report.failures);
        ExitCode::FAILURE
    }
}
