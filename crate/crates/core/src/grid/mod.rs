//! Polar-grid solver for the final region `Ω` of the slower set.
//!
//! The surface is discretized as rings `r_i = i·Δr` (`i = 1..=n_r`) of `n_θ` nodes
//! plus a pole node at `p`. Nodes are joined by a `k`-order neighbor stencil and
//! each edge carries the metric length of the straight `(r, θ)`-chart segment,
//! computed with 2-point Gauss quadrature. Obstacle distances are label-setting
//! shortest paths on that graph, and `Ω` is the fixed point of
//! `Ω_{n+1} = Ω_n ∪ {x : d_{Ω_n}(x, q) > λ r(x)}`.

mod distance;
mod mask;
mod omega;
mod profile;
mod slices;

pub use distance::{distance_field, DistanceField, GridDistanceOracle};
pub use mask::RegionMask;
pub use omega::{boundary_residual, omega_fixed_point, omega_fixed_point_with, omega_step, threshold_candidates, FixedPoint};
pub use profile::{classify_boundedness, extract_profile, Boundedness, RadialProfile, BOUNDARY_MARGIN_CELLS};
pub use slices::{time_slices, TimeSlice};

use std::f64::consts::PI;

use thiserror::Error;

use crate::analytic::Scenario;
use crate::metric::{MetricError, SurfaceMetric};

/// Default cap on the number of grid nodes.
pub const DEFAULT_NODE_CAP: usize = 20_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("invalid grid parameters: {0}")]
    InvalidParams(String),
    #[error("grid needs {nodes} nodes, above the configured cap of {cap}")]
    ResourceCap { nodes: usize, cap: usize },
    #[error("source node {0} lies inside the obstacle")]
    SourceInObstacle(u32),
    #[error("the q node was engulfed by the region")]
    QEngulfed,
    #[error("mask is not star-shaped along column {0}")]
    NotStarShaped(usize),
    #[error("mask dimensions {got:?} do not match the grid {expected:?}")]
    MaskShape { expected: (usize, usize), got: (usize, usize) },
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// Node index; `0` is the pole.
pub type NodeId = u32;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridParams {
    pub r_max: f64,
    pub n_r: usize,
    pub n_theta: usize,
    pub stencil_order: u8,
    pub node_cap: usize,
}

impl GridParams {
    pub fn new(r_max: f64, n_r: usize, n_theta: usize, stencil_order: u8) -> Self {
        GridParams { r_max, n_r, n_theta, stencil_order, node_cap: DEFAULT_NODE_CAP }
    }
}

/// Largest radial reach of a ring stencil.
pub const MAX_RADIAL_REACH: i32 = 16;
/// Largest angular reach of a ring stencil.
pub const MAX_ANGULAR_REACH: i32 = 64;

/// Widest allowed angle between neighboring stencil directions for an order:
/// 45° for order 1, `atan(1/(2k−1))` for order `k ≥ 2`.
pub fn stencil_gap_target(order: u8) -> f64 {
    if order <= 1 {
        PI / 4.0
    } else {
        (1.0 / (2 * order as i32 - 1) as f64).atan()
    }
}

/// Worst-case ratio of graph distance to true distance on a ring whose stencil
/// meets the order's gap target: `1/cos(β/2)`.
///
/// Order 1 gives 1.0824, order 2 gives 1.0131, order 3 gives 1.0049. Rings where
/// the reach caps are hit (next to the pole, or far out on strongly expanding
/// metrics) can exceed it.
pub fn stencil_overestimation_bound(order: u8) -> f64 {
    1.0 / (0.5 * stencil_gap_target(order)).cos()
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Coprime offsets `(di, dj)` with `|di| ≤ a`, `|dj| ≤ b`.
pub fn box_offsets(a: i32, b: i32) -> Vec<(i32, i32)> {
    let mut out = Vec::new();
    for di in -a..=a {
        for dj in -b..=b {
            if (di, dj) != (0, 0) && gcd(di.unsigned_abs(), dj.unsigned_abs()) == 1 {
                out.push((di, dj));
            }
        }
    }
    out
}

/// Widest gap between physical directions of the first-quadrant offsets of box
/// `(a, b)` on cells of aspect `G(r)Δθ/Δr`, with the gap's midpoint angle.
fn widest_gap(a: i32, b: i32, aspect: f64) -> (f64, f64) {
    let mut angles: Vec<f64> = box_offsets(a, b)
        .into_iter()
        .filter(|&(di, dj)| di >= 0 && dj >= 0)
        .map(|(di, dj)| (dj as f64 * aspect).atan2(di as f64))
        .collect();
    angles.sort_by(f64::total_cmp);
    angles
        .windows(2)
        .map(|w| (w[1] - w[0], 0.5 * (w[0] + w[1])))
        .fold((0.0, 0.0), |best, g| if g.0 > best.0 { g } else { best })
}

/// Smallest box, grown greedily towards the widest direction gap, whose
/// directions meet the order's gap target at this aspect (or the reach caps).
pub fn ring_reach(order: u8, aspect: f64) -> (i32, i32) {
    let target = stencil_gap_target(order) * (1.0 + 1e-9);
    let (mut a, mut b) = (1, 1);
    loop {
        let (gap, mid) = widest_gap(a, b, aspect);
        if gap <= target {
            return (a, b);
        }
        // index-space slope of the missing direction
        if mid.tan() >= aspect {
            if b >= MAX_ANGULAR_REACH {
                return (a, b);
            }
            b += 1;
        } else {
            if a >= MAX_RADIAL_REACH {
                return (a, b);
            }
            a += 1;
        }
    }
}

/// Overestimation bound actually achieved on a ring of the given aspect.
pub fn achieved_bound(order: u8, aspect: f64) -> f64 {
    let (a, b) = ring_reach(order, aspect);
    1.0 / (0.5 * widest_gap(a, b, aspect).0).cos()
}

const GAUSS2: f64 = 0.288_675_134_594_812_9; // 1/(2√3)

/// Polar discretization with precomputed edge lengths.
///
/// Every ring picks its own stencil box from its cell aspect; an edge exists when
/// either endpoint's stencil contains it, so the graph is undirected.
#[derive(Debug, Clone)]
pub struct PolarGrid {
    metric: SurfaceMetric,
    n_r: usize,
    n_theta: usize,
    dr: f64,
    dtheta: f64,
    q_ring: usize,
    stencil_order: u8,
    /// `ring_start[i]..ring_start[i + 1]` indexes the out-edges of ring `i`
    ring_start: Vec<usize>,
    offsets: Vec<(i32, i32)>,
    lengths: Vec<f64>,
}

/// Metric length of the chart segment from `(r0, θ)` to `(r0 + Δr_seg, θ + Δθ_seg)`
/// by 2-point Gauss quadrature of `√(Δr_seg² + G(r)² Δθ_seg²)`.
pub fn segment_length(metric: &SurfaceMetric, r0: f64, dr_seg: f64, dtheta_seg: f64) -> Result<f64, MetricError> {
    let mut total = 0.0;
    for s in [0.5 - GAUSS2, 0.5 + GAUSS2] {
        let g = metric.eval_g(r0 + s * dr_seg)?;
        total += 0.5 * dr_seg.hypot(g * dtheta_seg);
    }
    Ok(total)
}

impl PolarGrid {
    /// Builds the grid. `Δr` is adjusted so that `q` sits exactly on ring
    /// `round(ℓ·n_r/r_max)`; the effective outer radius is `n_r·Δr`.
    pub fn build(metric: &SurfaceMetric, scn: &Scenario, params: &GridParams) -> Result<Self, GridError> {
        let GridParams { r_max, n_r, n_theta, stencil_order, node_cap } = *params;
        if n_r < 16 || n_theta < 16 {
            return Err(GridError::InvalidParams(format!(
                "n_r and n_theta must be at least 16 (got {n_r}, {n_theta})"
            )));
        }
        if !(1..=3).contains(&stencil_order) {
            return Err(GridError::InvalidParams(format!("stencil_order must be 1, 2 or 3 (got {stencil_order})")));
        }
        if !(r_max.is_finite() && r_max > scn.ell) {
            return Err(GridError::InvalidParams(format!("r_max must exceed ell (got {r_max})")));
        }
        let nodes = n_r
            .checked_mul(n_theta)
            .and_then(|v| v.checked_add(1))
            .unwrap_or(usize::MAX);
        if nodes > node_cap || nodes > u32::MAX as usize {
            return Err(GridError::ResourceCap { nodes, cap: node_cap });
        }
        let q_ring = ((scn.ell * n_r as f64 / r_max).round() as usize).max(1);
        if q_ring >= n_r {
            return Err(GridError::InvalidParams("ell does not fit inside the grid".into()));
        }
        let dr = scn.ell / q_ring as f64;
        let dtheta = 2.0 * PI / n_theta as f64;
        let half = n_theta as i32 / 2;

        let mut per_ring: Vec<Vec<(i32, i32)>> = vec![Vec::new(); n_r + 1];
        for i in 1..=n_r {
            let aspect = metric.eval_g(i as f64 * dr)? * dtheta / dr;
            let (a, b) = ring_reach(stencil_order, aspect);
            for (di, dj) in box_offsets(a, b.min(half)) {
                let t = i as i64 + di as i64;
                if t < 1 || t > n_r as i64 {
                    continue;
                }
                per_ring[i].push((di, dj));
                per_ring[t as usize].push((-di, -dj));
            }
        }
        let mut ring_start = vec![0; n_r + 2];
        let mut offsets = Vec::new();
        let mut lengths = Vec::new();
        for i in 1..=n_r {
            ring_start[i] = offsets.len();
            let list = &mut per_ring[i];
            list.sort_unstable();
            list.dedup();
            for &(di, dj) in list.iter() {
                // measure from the inner endpoint so both directions agree bitwise
                let inner = if di < 0 { (i as i64 + di as i64) as usize } else { i };
                let len = segment_length(
                    metric,
                    inner as f64 * dr,
                    di.unsigned_abs() as f64 * dr,
                    dj.unsigned_abs() as f64 * dtheta,
                )?;
                if !(len > 0.0 && len.is_finite()) {
                    return Err(GridError::InvalidParams(format!("degenerate edge length {len} at ring {i}")));
                }
                offsets.push((di, dj));
                lengths.push(len);
            }
        }
        ring_start[n_r + 1] = offsets.len();
        ring_start[0] = 0;
        Ok(PolarGrid {
            metric: metric.clone(),
            n_r,
            n_theta,
            dr,
            dtheta,
            q_ring,
            stencil_order,
            ring_start,
            offsets,
            lengths,
        })
    }

    pub fn metric(&self) -> &SurfaceMetric {
        &self.metric
    }
    pub fn n_r(&self) -> usize {
        self.n_r
    }
    pub fn n_theta(&self) -> usize {
        self.n_theta
    }
    pub fn dr(&self) -> f64 {
        self.dr
    }
    pub fn dtheta(&self) -> f64 {
        self.dtheta
    }
    pub fn r_max(&self) -> f64 {
        self.n_r as f64 * self.dr
    }
    pub fn stencil_order(&self) -> u8 {
        self.stencil_order
    }
    pub fn node_count(&self) -> usize {
        self.n_r * self.n_theta + 1
    }
    pub fn edge_count(&self) -> usize {
        (self.offsets.len() * self.n_theta + 2 * self.n_theta) / 2
    }

    pub fn pole(&self) -> NodeId {
        0
    }

    /// Node `(i, j)` for ring `i ≥ 1` and column `j` (taken modulo `n_θ`).
    pub fn node(&self, i: usize, j: usize) -> NodeId {
        debug_assert!(i >= 1 && i <= self.n_r);
        (1 + (i - 1) * self.n_theta + j % self.n_theta) as NodeId
    }

    /// `(ring, column)`; the pole is `(0, 0)`.
    pub fn coords(&self, node: NodeId) -> (usize, usize) {
        if node == 0 {
            return (0, 0);
        }
        let k = node as usize - 1;
        (k / self.n_theta + 1, k % self.n_theta)
    }

    pub fn q_node(&self) -> NodeId {
        self.node(self.q_ring, 0)
    }

    pub fn q_ring(&self) -> usize {
        self.q_ring
    }

    /// Exact `d(x, p) = r(x)`.
    pub fn radius(&self, node: NodeId) -> f64 {
        self.coords(node).0 as f64 * self.dr
    }

    pub fn theta(&self, j: usize) -> f64 {
        j as f64 * self.dtheta
    }

    /// Column whose angle is closest to θ.
    pub fn column_at(&self, theta: f64) -> usize {
        let k = (theta.rem_euclid(2.0 * PI) / self.dtheta).round() as usize;
        k % self.n_theta
    }

    /// Column mirrored through θ ↔ −θ.
    pub fn mirror_column(&self, j: usize) -> usize {
        (self.n_theta - j) % self.n_theta
    }

    /// Out-edge offsets and lengths of ring `i`.
    pub fn ring_edges(&self, i: usize) -> impl Iterator<Item = ((i32, i32), f64)> + '_ {
        let range = if i == 0 || i > self.n_r { 0..0 } else { self.ring_start[i]..self.ring_start[i + 1] };
        self.offsets[range.clone()].iter().copied().zip(self.lengths[range].iter().copied())
    }

    /// Length of the edge leaving ring `i` with offset `(di, dj)`, if the graph has it.
    pub fn edge_length(&self, i: usize, di: i32, dj: i32) -> Option<f64> {
        self.ring_edges(i).find(|&(o, _)| o == (di, dj)).map(|(_, w)| w)
    }

    /// Calls `visit(neighbor, edge_length)` for every graph neighbor of `node`.
    #[inline]
    pub fn for_each_neighbor<F: FnMut(NodeId, f64)>(&self, node: NodeId, mut visit: F) {
        if node == 0 {
            for j in 0..self.n_theta {
                visit(self.node(1, j), self.dr);
            }
            return;
        }
        let (i, j) = self.coords(node);
        if i == 1 {
            visit(0, self.dr);
        }
        let n = self.n_theta as i64;
        let range = self.ring_start[i]..self.ring_start[i + 1];
        for (&(di, dj), &len) in self.offsets[range.clone()].iter().zip(&self.lengths[range]) {
            let ti = (i as i64 + di as i64) as usize;
            let tj = (j as i64 + dj as i64).rem_euclid(n) as usize;
            visit((1 + (ti - 1) * self.n_theta + tj) as NodeId, len);
        }
    }

    pub fn neighbors(&self, node: NodeId) -> Vec<(NodeId, f64)> {
        let mut out = Vec::new();
        self.for_each_neighbor(node, |v, w| out.push((v, w)));
        out
    }
}
