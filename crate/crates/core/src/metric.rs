//! Rotationally symmetric surface metrics `g = dr² + G(r)² dθ²`.
//!
//! A [`SurfaceMetric`] is a warping function `G` plus a declared tail model. The
//! builtin kinds carry closed forms for `G`, its derivatives and the Gaussian
//! curvature `K = -G''/G`; tabulated metrics interpolate samples with a monotone
//! (PCHIP) cubic and take `G''` from centered second differences of the
//! interpolant.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quadrature::{self, QuadratureError, DEFAULT_ABS_TOL};

/// Radius at which `G(r)/r ≈ 1` is checked.
pub const ORIGIN_PROBE: f64 = 1e-3;
/// Allowed `|G(r)/r - 1|` at [`ORIGIN_PROBE`].
pub const ORIGIN_TOL: f64 = 1e-3;
/// Curvatures up to this value count as nonpositive.
pub const CURVATURE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("radius must be a nonnegative number, got {0}")]
    Domain(f64),
    #[error("r = {r} lies beyond the last tabulated sample r = {last} and no tail model is declared")]
    Extrapolation { r: f64, last: f64 },
    #[error("tabulated metric needs at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("invalid sample table: {0}")]
    InvalidTable(String),
    #[error("curvature parameter kappa must be positive and finite, got {0}")]
    InvalidKappa(f64),
    #[error("probe radii must be nonempty, sorted and positive")]
    InvalidProbes,
    #[error("warping function is not positive at r = {0}")]
    Singular(f64),
    #[error("R_cut must be at least 1, got {0}")]
    InvalidCutoff(f64),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

/// Declared behavior of `G` beyond the represented range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailModel {
    /// `∫^∞ dr/G = ∞`
    Divergent,
    /// `∫^∞ dr/G < ∞`
    Convergent,
    Unknown,
}

impl fmt::Display for TailModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TailModel::Divergent => "divergent",
            TailModel::Convergent => "convergent",
            TailModel::Unknown => "unknown",
        })
    }
}

/// Samples of `G` with a monotone cubic interpolant.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpTable {
    r: Vec<f64>,
    g: Vec<f64>,
    slope: Vec<f64>,
    /// number of samples supplied by the caller (the origin may have been prepended)
    supplied: usize,
}

impl WarpTable {
    /// Builds a table from `(r, G)` pairs. A sample `(0, 0)` is prepended when the
    /// table does not start at the origin.
    pub fn new(samples: &[(f64, f64)]) -> Result<Self, MetricError> {
        if samples.len() < 2 {
            return Err(MetricError::InsufficientData { needed: 2, got: samples.len() });
        }
        let mut r = Vec::with_capacity(samples.len() + 1);
        let mut g = Vec::with_capacity(samples.len() + 1);
        for (k, &(ri, gi)) in samples.iter().enumerate() {
            if !ri.is_finite() || !gi.is_finite() {
                return Err(MetricError::InvalidTable(format!("sample {k} is not finite")));
            }
            if ri < 0.0 {
                return Err(MetricError::InvalidTable(format!("sample {k} has negative r")));
            }
            if ri == 0.0 && gi != 0.0 {
                return Err(MetricError::InvalidTable("G(0) must be 0".into()));
            }
            if ri > 0.0 && gi <= 0.0 {
                return Err(MetricError::InvalidTable(format!(
                    "G must be positive for r > 0 (sample {k})"
                )));
            }
            if let Some(&prev) = r.last() {
                if ri <= prev {
                    return Err(MetricError::InvalidTable(format!(
                        "r must be strictly increasing (sample {k})"
                    )));
                }
            } else if ri > 0.0 {
                r.push(0.0);
                g.push(0.0);
            }
            r.push(ri);
            g.push(gi);
        }
        let slope = pchip_slopes(&r, &g);
        Ok(WarpTable { r, g, slope, supplied: samples.len() })
    }

    pub fn samples(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.r.iter().copied().zip(self.g.iter().copied())
    }

    pub fn supplied_len(&self) -> usize {
        self.supplied
    }

    pub fn last_r(&self) -> f64 {
        *self.r.last().expect("table is nonempty")
    }

    fn locate(&self, x: f64) -> usize {
        // index k with r[k] <= x <= r[k+1]
        match self.r.binary_search_by(|v| v.total_cmp(&x)) {
            Ok(k) => k.min(self.r.len() - 2),
            Err(k) => k.saturating_sub(1).min(self.r.len() - 2),
        }
    }

    fn interp(&self, x: f64) -> (f64, f64) {
        let k = self.locate(x);
        let h = self.r[k + 1] - self.r[k];
        let t = (x - self.r[k]) / h;
        let (y0, y1) = (self.g[k], self.g[k + 1]);
        let (m0, m1) = (self.slope[k] * h, self.slope[k + 1] * h);
        let t2 = t * t;
        let t3 = t2 * t;
        let value = (2.0 * t3 - 3.0 * t2 + 1.0) * y0
            + (t3 - 2.0 * t2 + t) * m0
            + (-2.0 * t3 + 3.0 * t2) * y1
            + (t3 - t2) * m1;
        let deriv = ((6.0 * t2 - 6.0 * t) * y0
            + (3.0 * t2 - 4.0 * t + 1.0) * m0
            + (-6.0 * t2 + 6.0 * t) * y1
            + (3.0 * t2 - 2.0 * t) * m1)
            / h;
        (value, deriv)
    }

    fn local_spacing(&self, x: f64) -> f64 {
        let k = self.locate(x);
        self.r[k + 1] - self.r[k]
    }
}

// Fritsch–Carlson/Butland slopes, same edge treatment as the usual PCHIP.
fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
    let mut d = vec![0.0; n];
    if n == 2 {
        d[0] = delta[0];
        d[1] = delta[0];
        return d;
    }
    for k in 1..n - 1 {
        if delta[k - 1] * delta[k] > 0.0 {
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            d[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
        }
    }
    d[0] = edge_slope(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = edge_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    d
}

fn edge_slope(h0: f64, h1: f64, m0: f64, m1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
    if d.signum() != m0.signum() || m0 == 0.0 {
        0.0
    } else if m0.signum() != m1.signum() && d.abs() > 3.0 * m0.abs() {
        3.0 * m0
    } else {
        d
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MetricKind {
    Euclidean,
    HyperbolicSinh,
    ScaledHyperbolic { kappa: f64 },
    Tabulated(WarpTable),
}

/// Warping function `G` of `g = dr² + G(r)² dθ²` plus its tail model.
///
/// Immutable after construction; evaluation takes `&self` only.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceMetric {
    kind: MetricKind,
    tail: TailModel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct AssumptionReport {
    pub positivity_ok: bool,
    pub origin_limit_ok: bool,
    pub nonpositive_curvature_ok: bool,
}

impl AssumptionReport {
    pub fn all_ok(&self) -> bool {
        self.positivity_ok && self.origin_limit_ok && self.nonpositive_curvature_ok
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConformalType {
    Parabolic,
    Hyperbolic,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConformalReport {
    /// `∫_1^{R_cut} dr / G(r)`
    pub i_partial: f64,
    pub r_cut: f64,
    pub tail_model: TailModel,
    pub classification: ConformalType,
}

impl SurfaceMetric {
    pub fn euclidean() -> Self {
        SurfaceMetric { kind: MetricKind::Euclidean, tail: TailModel::Divergent }
    }

    pub fn hyperbolic() -> Self {
        SurfaceMetric { kind: MetricKind::HyperbolicSinh, tail: TailModel::Convergent }
    }

    /// Constant curvature `-κ`: `G(r) = sinh(√κ r)/√κ`.
    pub fn scaled_hyperbolic(kappa: f64) -> Result<Self, MetricError> {
        if !(kappa.is_finite() && kappa > 0.0) {
            return Err(MetricError::InvalidKappa(kappa));
        }
        Ok(SurfaceMetric {
            kind: MetricKind::ScaledHyperbolic { kappa },
            tail: TailModel::Convergent,
        })
    }

    pub fn tabulated(samples: &[(f64, f64)], tail: TailModel) -> Result<Self, MetricError> {
        Ok(SurfaceMetric { kind: MetricKind::Tabulated(WarpTable::new(samples)?), tail })
    }

    pub fn kind(&self) -> &MetricKind {
        &self.kind
    }

    pub fn tail_model(&self) -> TailModel {
        self.tail
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            MetricKind::Euclidean => "euclidean",
            MetricKind::HyperbolicSinh => "hyperbolic_sinh",
            MetricKind::ScaledHyperbolic { .. } => "scaled_hyperbolic",
            MetricKind::Tabulated(_) => "tabulated",
        }
    }

    pub fn is_euclidean(&self) -> bool {
        matches!(self.kind, MetricKind::Euclidean)
    }

    fn check_radius(r: f64) -> Result<(), MetricError> {
        if r >= 0.0 {
            Ok(())
        } else {
            Err(MetricError::Domain(r))
        }
    }

    /// Tail continuation past the last sample: linear growth for a divergent
    /// tail, exponential growth for a convergent one.
    fn extrapolate(&self, table: &WarpTable, r: f64) -> Result<(f64, f64, f64), MetricError> {
        let last = table.last_r();
        let gn = *table.g.last().expect("nonempty");
        let dn = *table.slope.last().expect("nonempty");
        let s = r - last;
        match self.tail {
            TailModel::Unknown => Err(MetricError::Extrapolation { r, last }),
            TailModel::Divergent => {
                if dn <= 0.0 {
                    return Err(MetricError::Extrapolation { r, last });
                }
                Ok((gn + dn * s, dn, 0.0))
            }
            TailModel::Convergent => {
                let c = dn / gn;
                if c <= 0.0 {
                    return Err(MetricError::Extrapolation { r, last });
                }
                let v = gn * (c * s).exp();
                Ok((v, c * v, c * c * v))
            }
        }
    }

    /// `G(r)`.
    pub fn eval_g(&self, r: f64) -> Result<f64, MetricError> {
        Self::check_radius(r)?;
        Ok(match &self.kind {
            MetricKind::Euclidean => r,
            MetricKind::HyperbolicSinh => r.sinh(),
            MetricKind::ScaledHyperbolic { kappa } => {
                let s = kappa.sqrt();
                (s * r).sinh() / s
            }
            MetricKind::Tabulated(t) => {
                if r > t.last_r() {
                    self.extrapolate(t, r)?.0
                } else {
                    t.interp(r).0
                }
            }
        })
    }

    /// `G'(r)`.
    pub fn eval_g_prime(&self, r: f64) -> Result<f64, MetricError> {
        Self::check_radius(r)?;
        Ok(match &self.kind {
            MetricKind::Euclidean => 1.0,
            MetricKind::HyperbolicSinh => r.cosh(),
            MetricKind::ScaledHyperbolic { kappa } => (kappa.sqrt() * r).cosh(),
            MetricKind::Tabulated(t) => {
                if r > t.last_r() {
                    self.extrapolate(t, r)?.1
                } else {
                    t.interp(r).1
                }
            }
        })
    }

    /// `G''(r)`; centered second differences of the interpolant for tables.
    pub fn eval_g_double_prime(&self, r: f64) -> Result<f64, MetricError> {
        Self::check_radius(r)?;
        match &self.kind {
            MetricKind::Euclidean => Ok(0.0),
            MetricKind::HyperbolicSinh => Ok(r.sinh()),
            MetricKind::ScaledHyperbolic { kappa } => Ok(kappa * self.eval_g(r)?),
            MetricKind::Tabulated(t) => {
                if t.supplied_len() < 3 {
                    return Err(MetricError::InsufficientData { needed: 3, got: t.supplied_len() });
                }
                if r > t.last_r() {
                    return Ok(self.extrapolate(t, r)?.2);
                }
                let h = t.local_spacing(r);
                let lo = t.r[0];
                let hi = t.last_r();
                let (a, b, c) = if r - h < lo {
                    (lo, lo + h, lo + 2.0 * h)
                } else if r + h > hi {
                    (hi - 2.0 * h, hi - h, hi)
                } else {
                    (r - h, r, r + h)
                };
                let ga = self.eval_g(a.max(0.0))?;
                let gb = self.eval_g(b)?;
                let gc = self.eval_g(c)?;
                Ok((ga - 2.0 * gb + gc) / (h * h))
            }
        }
    }

    /// Gaussian curvature `K(r) = -G''(r)/G(r)`.
    pub fn curvature(&self, r: f64) -> Result<f64, MetricError> {
        match &self.kind {
            MetricKind::Euclidean => Self::check_radius(r).map(|_| 0.0),
            MetricKind::HyperbolicSinh => Self::check_radius(r).map(|_| -1.0),
            MetricKind::ScaledHyperbolic { kappa } => Self::check_radius(r).map(|_| -kappa),
            MetricKind::Tabulated(_) => {
                let g = self.eval_g(r)?;
                if g <= 0.0 {
                    return Err(MetricError::Singular(r));
                }
                Ok(-self.eval_g_double_prime(r)? / g)
            }
        }
    }

    /// Checks positivity of `G`, the origin limit `G(r)/r → 1` and the sign of the
    /// curvature at the probe radii.
    pub fn check_assumptions(&self, probes: &[f64]) -> Result<AssumptionReport, MetricError> {
        if probes.is_empty()
            || probes.iter().any(|&r| !(r > 0.0 && r.is_finite()))
            || probes.windows(2).any(|w| w[1] < w[0])
        {
            return Err(MetricError::InvalidProbes);
        }
        if let MetricKind::Tabulated(t) = &self.kind {
            if t.supplied_len() < 3 {
                return Err(MetricError::InsufficientData { needed: 3, got: t.supplied_len() });
            }
        }
        let mut positivity_ok = true;
        let mut nonpositive_curvature_ok = true;
        for &r in probes {
            let g = self.eval_g(r)?;
            if g <= 0.0 {
                positivity_ok = false;
                continue;
            }
            if self.curvature(r)? > CURVATURE_TOL {
                nonpositive_curvature_ok = false;
            }
        }
        let mut origin_limit_ok = true;
        for r in std::iter::once(ORIGIN_PROBE).chain(probes.iter().copied().filter(|&r| r < ORIGIN_PROBE)) {
            let ratio = self.eval_g(r)? / r;
            if (ratio - 1.0).abs() > ORIGIN_TOL {
                origin_limit_ok = false;
            }
        }
        Ok(AssumptionReport { positivity_ok, origin_limit_ok, nonpositive_curvature_ok })
    }

    fn inv_g(&self, r: f64) -> f64 {
        match self.eval_g(r) {
            Ok(g) if g > 0.0 => 1.0 / g,
            _ => f64::NAN,
        }
    }

    /// `∫_a^b dr / G(r)` for `0 < a ≤ b`, where `b` may be `+∞`.
    ///
    /// Finite ranges are split at powers of two so that the value for a longer
    /// range is the value for a shorter one plus nonnegative pieces.
    pub fn inv_g_integral(&self, a: f64, b: f64) -> Result<f64, MetricError> {
        if a.is_nan() || a <= 0.0 || a.is_infinite() {
            return Err(MetricError::Singular(a));
        }
        if b < a || b.is_nan() {
            return Err(MetricError::Domain(b));
        }
        if b.is_infinite() {
            return self.inv_g_tail(a);
        }
        let mut lo = a;
        let mut total = 0.0;
        // first power of two above a
        let mut edge = 2f64.powi(a.log2().floor() as i32 + 1);
        let mut breaks = Vec::new();
        if let MetricKind::Tabulated(t) = &self.kind {
            if t.last_r() > a && t.last_r() < b {
                breaks.push(t.last_r());
            }
        }
        while lo < b {
            let mut hi = edge.min(b);
            for &bk in &breaks {
                if bk > lo && bk < hi {
                    hi = bk;
                }
            }
            let g_lo = self.eval_g(lo)?;
            if g_lo <= 0.0 {
                return Err(MetricError::Singular(lo));
            }
            self.eval_g(hi)?;
            total += quadrature::integrate(|r| self.inv_g(r), lo, hi, DEFAULT_ABS_TOL / 64.0)?.value;
            lo = hi;
            if hi >= edge {
                edge *= 2.0;
            }
        }
        Ok(total)
    }

    fn inv_g_tail(&self, a: f64) -> Result<f64, MetricError> {
        match (&self.kind, self.tail) {
            (_, TailModel::Divergent) => Ok(f64::INFINITY),
            (MetricKind::Tabulated(t), TailModel::Convergent) => {
                let last = t.last_r();
                let start = a.max(last);
                let finite = if a < last { self.inv_g_integral(a, last)? } else { 0.0 };
                let (_, g1, _) = self.extrapolate(t, start)?;
                // ∫_start^∞ ds / (G0 e^{c s}) = 1 / (c G0) = 1 / G'(start)
                Ok(finite + 1.0 / g1)
            }
            (MetricKind::Tabulated(t), TailModel::Unknown) => Err(MetricError::Extrapolation {
                r: f64::INFINITY,
                last: t.last_r(),
            }),
            (_, _) => {
                let cut = a.max(1.0);
                let head = if a < cut { self.inv_g_integral(a, cut)? } else { 0.0 };
                let tail = quadrature::integrate_to_infinity(|r| self.inv_g(r), cut, DEFAULT_ABS_TOL / 4.0)?;
                Ok(head + tail.value)
            }
        }
    }

    /// Conformal type from the declared tail plus the partial integral
    /// `∫_1^{R_cut} dr/G`.
    pub fn conformal_classify(&self, r_cut: f64) -> Result<ConformalReport, MetricError> {
        if r_cut.is_nan() || r_cut < 1.0 || r_cut.is_infinite() {
            return Err(MetricError::InvalidCutoff(r_cut));
        }
        let i_partial = self.inv_g_integral(1.0, r_cut)?;
        let classification = match self.tail {
            TailModel::Divergent => ConformalType::Parabolic,
            TailModel::Convergent => ConformalType::Hyperbolic,
            TailModel::Unknown => ConformalType::Inconclusive,
        };
        Ok(ConformalReport { i_partial, r_cut, tail_model: self.tail, classification })
    }
}
