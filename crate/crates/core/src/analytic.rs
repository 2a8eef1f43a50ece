//! Closed-form curves for the competition with `p` at the origin and `q = (ℓ, 0)`.
//!
//! Everything here is independent of the grid solver: the Apollonius circle, the
//! radial profile `f₁` of the first region, speed-λ spirals with unit radial
//! speed, the escape path and trapping radius, and the predicted boundary of the
//! final region (visible arc of `∂Ω₁` plus two spirals).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metric::{MetricError, MetricKind, SurfaceMetric};

/// Default angular step for sampled curves.
pub const DEFAULT_ANGLE_STEP: f64 = 2.0 * PI / 720.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticError {
    #[error("lambda must exceed 1, got {0}")]
    InvalidLambda(f64),
    #[error("ell must be positive, got {0}")]
    InvalidEll(f64),
    #[error("{0} is only available for the euclidean metric")]
    Unsupported(&'static str),
    #[error("metric violates the nonpositive curvature hypothesis")]
    CurvatureHypothesis,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("warping function vanishes inside the integration range near r = {0}")]
    SingularMetric(f64),
    #[error("target angle {target} is unreachable: the sweep is bounded by {sup}")]
    Unreachable { target: f64, sup: f64 },
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// Speed ratio and seed separation; `p` is the origin and `q = (ℓ, θ = 0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub lambda: f64,
    pub ell: f64,
}

impl Scenario {
    pub fn new(lambda: f64, ell: f64) -> Result<Self, AnalyticError> {
        if !(lambda > 1.0 && lambda.is_finite()) {
            return Err(AnalyticError::InvalidLambda(lambda));
        }
        if !(ell > 0.0 && ell.is_finite()) {
            return Err(AnalyticError::InvalidEll(ell));
        }
        Ok(Scenario { lambda, ell })
    }

    /// `√(λ² − 1)`, the angular rate of a speed-λ curve with unit radial speed.
    pub fn spiral_rate(&self) -> f64 {
        spiral_rate(self.lambda)
    }
}

fn spiral_rate(lambda: f64) -> f64 {
    ((lambda - 1.0) * (lambda + 1.0)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Circle2D {
    pub center: [f64; 2],
    pub radius: f64,
}

impl Circle2D {
    pub fn contains(&self, x: [f64; 2]) -> bool {
        (x[0] - self.center[0]).hypot(x[1] - self.center[1]) < self.radius
    }

    pub fn point_at(&self, phi: f64) -> [f64; 2] {
        [
            self.center[0] + self.radius * phi.cos(),
            self.center[1] + self.radius * phi.sin(),
        ]
    }
}

/// The Apollonius circle `{x : |x − q| = λ|x − p|}`; `Ω₁` is its interior.
pub fn apollonius_omega1(scn: &Scenario, metric: &SurfaceMetric) -> Result<Circle2D, AnalyticError> {
    if !metric.is_euclidean() {
        return Err(AnalyticError::Unsupported("apollonius_omega1"));
    }
    let k = scn.lambda * scn.lambda - 1.0;
    Ok(Circle2D {
        center: [-scn.ell / k, 0.0],
        radius: scn.lambda * scn.ell / k,
    })
}

/// Distance to `q` as a function of polar position.
pub trait DistanceOracle {
    /// `d((r, θ), q)`.
    fn distance_to_q(&self, r: f64, theta: f64) -> f64;

    /// Angle at `q` between the geodesics towards `p` and towards `(r, θ)`, when the
    /// oracle can provide it.
    fn sweep_angle(&self, _r: f64, _theta: f64) -> Option<f64> {
        None
    }
}

impl<F: Fn(f64, f64) -> f64> DistanceOracle for F {
    fn distance_to_q(&self, r: f64, theta: f64) -> f64 {
        self(r, theta)
    }
}

/// Exact distances on constant-curvature planes (curvature `0` or `−κ`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantCurvatureOracle {
    /// `√κ`, zero for the euclidean plane
    scale: f64,
    ell: f64,
}

impl ConstantCurvatureOracle {
    pub fn for_metric(metric: &SurfaceMetric, scn: &Scenario) -> Option<Self> {
        let scale = match metric.kind() {
            MetricKind::Euclidean => 0.0,
            MetricKind::HyperbolicSinh => 1.0,
            MetricKind::ScaledHyperbolic { kappa } => kappa.sqrt(),
            MetricKind::Tabulated(_) => return None,
        };
        Some(ConstantCurvatureOracle { scale, ell: scn.ell })
    }
}

impl DistanceOracle for ConstantCurvatureOracle {
    fn distance_to_q(&self, r: f64, theta: f64) -> f64 {
        if self.scale == 0.0 {
            return (r * theta.cos() - self.ell).hypot(r * theta.sin());
        }
        // sinh²(s d/2) = sinh²(s(r−ℓ)/2) + sinh(s r) sinh(s ℓ) sin²(θ/2)
        let s = self.scale;
        let a = (0.5 * s * (r - self.ell)).sinh();
        let h = (0.5 * theta).sin();
        let inner = a * a + (s * r).sinh() * (s * self.ell).sinh() * h * h;
        2.0 * inner.sqrt().asinh() / s
    }

    fn sweep_angle(&self, r: f64, theta: f64) -> Option<f64> {
        if self.scale == 0.0 {
            let to_x = [r * theta.cos() - self.ell, r * theta.sin()];
            let to_p = [-self.ell, 0.0];
            let cross = to_p[0] * to_x[1] - to_p[1] * to_x[0];
            let dot = to_p[0] * to_x[0] + to_p[1] * to_x[1];
            return Some(cross.abs().atan2(dot));
        }
        let s = self.scale;
        let d = self.distance_to_q(r, theta) * s;
        let (l, rr) = (self.ell * s, r * s);
        if d == 0.0 {
            return None;
        }
        let cos_c = (l.cosh() * d.cosh() - rr.cosh()) / (l.sinh() * d.sinh());
        Some(cos_c.clamp(-1.0, 1.0).acos())
    }
}

/// Bisection tolerance for `f₁`.
pub fn profile_tolerance(scn: &Scenario) -> f64 {
    1e-10 * scn.ell.max(1.0)
}

/// `f₁(θ)`: the radius where `d((r, θ), q) = λ r`, or `+∞` when no sign change
/// occurs up to `r_max`.
pub fn omega1_profile<O: DistanceOracle + ?Sized>(
    scn: &Scenario,
    oracle: &O,
    theta: f64,
    r_max: f64,
) -> f64 {
    omega1_profile_with_tol(scn, oracle, theta, r_max, profile_tolerance(scn))
}

pub fn omega1_profile_with_tol<O: DistanceOracle + ?Sized>(
    scn: &Scenario,
    oracle: &O,
    theta: f64,
    r_max: f64,
    tol: f64,
) -> f64 {
    let excess = |r: f64| oracle.distance_to_q(r, theta) - scn.lambda * r;
    // the open ball of radius ℓ/(λ+1) lies inside Ω₁; climb a geometric ladder from there
    let mut lo = 0.0;
    let mut hi = scn.ell / (scn.lambda + 1.0);
    loop {
        if hi > r_max {
            if excess(r_max) < 0.0 {
                hi = r_max;
                break;
            }
            return f64::INFINITY;
        }
        if excess(hi) < 0.0 {
            break;
        }
        lo = hi;
        hi *= 2.0;
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if excess(mid) < 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Chirality {
    /// θ increases with r
    Positive,
    /// θ decreases with r
    Negative,
}

impl Chirality {
    pub fn sign(self) -> f64 {
        match self {
            Chirality::Positive => 1.0,
            Chirality::Negative => -1.0,
        }
    }
}

/// A speed-λ curve whose radius grows at unit rate:
/// `θ(r) = θ_start ± √(λ²−1) ∫_{r_start}^r ds/G(s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpiralCurve {
    /// `(r, θ)` with `r` strictly increasing
    pub samples: Vec<(f64, f64)>,
    pub chirality: Chirality,
    pub rate: f64,
    /// `θ` at the requested end radius (the limiting angle when that is `∞`)
    pub theta_end: f64,
}

impl SpiralCurve {
    pub fn r_start(&self) -> f64 {
        self.samples[0].0
    }

    pub fn theta_start(&self) -> f64 {
        self.samples[0].1
    }

    /// Exact `θ(r)` by quadrature from the first sample.
    pub fn theta_at(&self, metric: &SurfaceMetric, r: f64) -> Result<f64, AnalyticError> {
        let r0 = self.r_start();
        if r < r0 {
            return Err(AnalyticError::InvalidArgument(format!("r = {r} precedes the curve start {r0}")));
        }
        Ok(self.theta_start() + self.chirality.sign() * self.rate * metric.inv_g_integral(r0, r)?)
    }
}

fn sweep_integral(metric: &SurfaceMetric, a: f64, b: f64) -> Result<f64, AnalyticError> {
    if a == b {
        return Ok(0.0);
    }
    metric.inv_g_integral(a, b).map_err(|e| match e {
        MetricError::Singular(r) => AnalyticError::SingularMetric(r),
        MetricError::Quadrature(_) => AnalyticError::SingularMetric(a),
        other => AnalyticError::Metric(other),
    })
}

/// Radius beyond which the remaining sweep of a convergent spiral is negligible.
fn tail_cutoff(metric: &SurfaceMetric, rate: f64, r0: f64) -> Result<f64, AnalyticError> {
    let mut r = (2.0 * r0).max(r0 + 1.0);
    for _ in 0..64 {
        if rate * sweep_integral(metric, r, f64::INFINITY)? < 1e-9 {
            return Ok(r);
        }
        r *= 2.0;
    }
    Err(AnalyticError::Numeric("spiral tail does not decay".into()))
}

/// Samples the spiral from `(r_start, θ_start)` out to `r_end` (which may be `∞`
/// for a convergent tail). Consecutive samples differ by at most `max_step` in θ.
pub fn spiral_curve(
    metric: &SurfaceMetric,
    scn: &Scenario,
    r_start: f64,
    theta_start: f64,
    chirality: Chirality,
    r_end: f64,
) -> Result<SpiralCurve, AnalyticError> {
    spiral_curve_with_step(metric, scn, r_start, theta_start, chirality, r_end, DEFAULT_ANGLE_STEP)
}

pub fn spiral_curve_with_step(
    metric: &SurfaceMetric,
    scn: &Scenario,
    r_start: f64,
    theta_start: f64,
    chirality: Chirality,
    r_end: f64,
    max_step: f64,
) -> Result<SpiralCurve, AnalyticError> {
    if !(r_start > 0.0 && r_start.is_finite()) {
        return Err(AnalyticError::SingularMetric(r_start));
    }
    if r_end < r_start || r_end.is_nan() || max_step.is_nan() || max_step <= 0.0 {
        return Err(AnalyticError::InvalidArgument(format!(
            "need 0 < r_start <= r_end and a positive step (r_start = {r_start}, r_end = {r_end})"
        )));
    }
    let rate = scn.spiral_rate();
    let sign = chirality.sign();
    let total = rate * sweep_integral(metric, r_start, r_end)?;
    if total.is_infinite() {
        return Err(AnalyticError::InvalidArgument("an infinite spiral cannot be sampled".into()));
    }
    let sample_end = if r_end.is_finite() { r_end } else { tail_cutoff(metric, rate, r_start)? };
    let max_dr = ((sample_end - r_start) / 64.0).max(f64::MIN_POSITIVE);

    let mut samples = vec![(r_start, theta_start)];
    let (mut r, mut swept) = (r_start, 0.0);
    while r < sample_end {
        let g = metric.eval_g(r)?;
        let mut dr = (max_step * g / rate).min(max_dr).min(sample_end - r);
        loop {
            let next = if r + dr >= sample_end { sample_end } else { r + dr };
            let piece = rate * sweep_integral(metric, r, next)?;
            if piece <= max_step || dr <= f64::EPSILON * r {
                r = next;
                swept += piece;
                samples.push((r, theta_start + sign * swept));
                break;
            }
            dr *= 0.5;
        }
    }
    Ok(SpiralCurve { samples, chirality, rate, theta_end: theta_start + sign * total })
}

/// Smallest `r ≥ r0` with `rate ∫_{r0}^r ds/G = target`; `Unreachable` carries the
/// supremum of the sweep when it stays below the target.
fn radius_at_sweep(metric: &SurfaceMetric, rate: f64, r0: f64, target: f64) -> Result<f64, AnalyticError> {
    if target <= 0.0 {
        return Ok(r0);
    }
    match sweep_integral(metric, r0, f64::INFINITY) {
        Ok(sup) if rate * sup <= target => {
            return Err(AnalyticError::Unreachable { target, sup: rate * sup });
        }
        Ok(_) | Err(AnalyticError::Metric(MetricError::Extrapolation { .. })) => {}
        Err(e) => return Err(e),
    }
    let mut lo = r0;
    let mut step = r0.max(1.0);
    let mut hi = r0 + step;
    while rate * sweep_integral(metric, r0, hi)? < target {
        lo = hi;
        step *= 2.0;
        hi = r0 + step;
        if !hi.is_finite() {
            return Err(AnalyticError::Numeric("sweep bracket overflow".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= 1e-13 * hi.max(1.0) {
            break;
        }
        if rate * sweep_integral(metric, r0, mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EscapePath {
    /// time at which the path reaches angle τ
    pub time: f64,
    /// `t ↦ (ℓ + t, α(t))`, so `r − ℓ` is the elapsed time
    pub path: SpiralCurve,
}

/// The speed-λ path from `q` with radius `ℓ + t` and angle
/// `α(t) = √(λ²−1) ∫_0^t ds/G(ℓ+s)`, run until `α(T) = τ`.
pub fn escape_path(metric: &SurfaceMetric, scn: &Scenario, tau: f64) -> Result<EscapePath, AnalyticError> {
    if !(tau > 0.0 && tau <= PI) {
        return Err(AnalyticError::InvalidArgument(format!("tau must lie in (0, π], got {tau}")));
    }
    let rate = scn.spiral_rate();
    let r_hit = radius_at_sweep(metric, rate, scn.ell, tau)?;
    let time = r_hit - scn.ell;
    let path = spiral_curve(metric, scn, scn.ell, 0.0, Chirality::Positive, r_hit)?;
    Ok(EscapePath { time, path })
}

/// `T` with `B_∞ ⊆ B(p, T)` from the escape path that wraps angle π, or `+∞` when
/// that path never gets there.
pub fn trapping_radius_bound(metric: &SurfaceMetric, scn: &Scenario) -> Result<f64, AnalyticError> {
    match escape_path(metric, scn, PI) {
        Ok(e) => Ok(e.time),
        Err(AnalyticError::Unreachable { .. }) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

/// Upper bound `π − arccos(1/λ)` for the visibility angle.
pub fn visibility_angle_bound(lambda: f64) -> Result<f64, AnalyticError> {
    if lambda.is_nan() || lambda <= 1.0 {
        return Err(AnalyticError::InvalidLambda(lambda));
    }
    Ok(PI - (1.0 / lambda).acos())
}

/// Radius `ℓ/(λ+1)` of the ball about `p` contained in `Ω₁`.
pub fn inner_ball_radius(scn: &Scenario) -> f64 {
    scn.ell / (scn.lambda + 1.0)
}

/// `⟨γ̇, ∂/∂r⟩` at `(r, θ)` for the geodesic arriving from `q`, i.e. `∂_r d(·, q)`,
/// by central differences of the oracle.
pub fn radial_alignment<O: DistanceOracle + ?Sized>(oracle: &O, r: f64, theta: f64) -> f64 {
    let h = 1e-6 * r.max(1.0);
    (oracle.distance_to_q(r + h, theta) - oracle.distance_to_q(r - h, theta)) / (2.0 * h)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictedBoundary {
    /// visibility angle `a`
    pub visibility_angle: f64,
    /// `f₁(a)`, where both spirals start
    pub spiral_start: f64,
    /// `(r, θ)` for `|θ| ≤ a`
    pub visible_arc: Vec<(f64, f64)>,
    /// upper (θ increasing) and lower spiral
    pub spirals: [SpiralCurve; 2],
    /// radius where the spirals reach `θ = ±π`; `None` when they never do
    pub closure_radius: Option<f64>,
    /// `a + √(λ²−1) ∫_{f₁(a)}^∞ dr/G`
    pub total_sweep: f64,
}

impl PredictedBoundary {
    pub fn is_bounded(&self) -> bool {
        self.closure_radius.is_some()
    }

    /// Predicted `f(θ)` for `θ ∈ [−π, π]`; `+∞` where the spirals never reach.
    pub fn radius_at(&self, metric: &SurfaceMetric, scn: &Scenario, theta: f64) -> Result<f64, AnalyticError> {
        let t = theta.abs();
        if t <= self.visibility_angle {
            let oracle_free = self
                .visible_arc
                .iter()
                .min_by(|a, b| (a.1 - theta).abs().total_cmp(&(b.1 - theta).abs()))
                .map(|p| p.0);
            return oracle_free.ok_or_else(|| AnalyticError::Numeric("empty visible arc".into()));
        }
        match radius_at_sweep(metric, scn.spiral_rate(), self.spiral_start, t - self.visibility_angle) {
            Ok(r) => Ok(r),
            Err(AnalyticError::Unreachable { .. }) => Ok(f64::INFINITY),
            Err(e) => Err(e),
        }
    }
}

fn golden_section_max<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        }
    }
    0.5 * (lo + hi)
}

/// Locates the visibility angle `a`: the maximizer of the sweep angle at `q`
/// when the oracle provides it, otherwise the root of the tangency condition
/// `∂_r d = 1/λ` along `∂Ω₁`.
pub fn visibility_angle<O: DistanceOracle + ?Sized>(
    scn: &Scenario,
    oracle: &O,
    r_search: f64,
) -> Result<f64, AnalyticError> {
    let tol = 1e-15 * scn.ell.max(1.0);
    let f1 = |theta: f64| omega1_profile_with_tol(scn, oracle, theta, r_search, tol);
    if oracle.sweep_angle(scn.ell, PI / 2.0).is_some() {
        let a = golden_section_max(
            |theta| {
                let r = f1(theta);
                if r.is_finite() {
                    oracle.sweep_angle(r, theta).unwrap_or(f64::NEG_INFINITY)
                } else {
                    f64::NEG_INFINITY
                }
            },
            0.0,
            PI,
            1e-10,
        );
        return Ok(a);
    }
    let target = 1.0 / scn.lambda;
    let mismatch = |theta: f64| {
        let r = f1(theta);
        radial_alignment(oracle, r, theta) - target
    };
    let (mut lo, mut hi) = (1e-6, PI - 1e-6);
    let (m_lo, m_hi) = (mismatch(lo), mismatch(hi));
    if !(m_lo < 0.0 && m_hi > 0.0) {
        return Err(AnalyticError::Numeric(format!(
            "tangency search failed to bracket (mismatch {m_lo} at 0, {m_hi} at π)"
        )));
    }
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if mismatch(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Probe radii used to check the curvature hypothesis up to `r_end`.
fn curvature_probes(r_end: f64) -> Vec<f64> {
    let mut probes = Vec::new();
    let mut r = 1e-2;
    while r < r_end {
        probes.push(r);
        r *= 1.25;
    }
    probes.push(r_end);
    probes
}

/// Predicted `∂Ω`: `∂Ω₁` for `|θ| ≤ a`, then two speed-λ spirals out to the
/// closure point `θ = ±π` or to `r_end`.
pub fn predicted_boundary<O: DistanceOracle + ?Sized>(
    metric: &SurfaceMetric,
    scn: &Scenario,
    oracle: &O,
    r_end: f64,
) -> Result<PredictedBoundary, AnalyticError> {
    if !(r_end > 0.0 && r_end.is_finite()) {
        return Err(AnalyticError::InvalidArgument(format!("r_end must be positive and finite, got {r_end}")));
    }
    let report = metric.check_assumptions(&curvature_probes(r_end))?;
    if !report.nonpositive_curvature_ok {
        return Err(AnalyticError::CurvatureHypothesis);
    }
    let r_search = (1e3 * scn.ell).max(r_end);
    let a = visibility_angle(scn, oracle, r_search)?;
    let r0 = omega1_profile_with_tol(scn, oracle, a, r_search, 1e-15 * scn.ell.max(1.0));
    if !r0.is_finite() {
        return Err(AnalyticError::Numeric("∂Ω₁ not found at the visibility angle".into()));
    }

    let n_arc = ((2.0 * a / DEFAULT_ANGLE_STEP).ceil() as usize).max(2);
    let visible_arc = (0..=n_arc)
        .map(|k| {
            let theta = -a + 2.0 * a * k as f64 / n_arc as f64;
            (omega1_profile(scn, oracle, theta, r_search), theta)
        })
        .collect();

    let rate = scn.spiral_rate();
    let sup = match sweep_integral(metric, r0, f64::INFINITY) {
        Ok(v) => rate * v,
        Err(AnalyticError::Metric(MetricError::Extrapolation { .. })) => f64::NAN,
        Err(e) => return Err(e),
    };
    let closure_radius = match radius_at_sweep(metric, rate, r0, PI - a) {
        Ok(r) => Some(r),
        Err(AnalyticError::Unreachable { .. }) => None,
        Err(e) => return Err(e),
    };
    let spiral_end = match closure_radius {
        Some(r) => r.min(r_end.max(r0)),
        None => r_end.max(r0),
    };
    let upper = spiral_curve(metric, scn, r0, a, Chirality::Positive, spiral_end)?;
    let lower = spiral_curve(metric, scn, r0, -a, Chirality::Negative, spiral_end)?;
    Ok(PredictedBoundary {
        visibility_angle: a,
        spiral_start: r0,
        visible_arc,
        spirals: [upper, lower],
        closure_radius,
        total_sweep: a + sup,
    })
}
