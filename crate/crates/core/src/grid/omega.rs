use super::{distance_field, DistanceField, GridError, NodeId, PolarGrid, RegionMask};
use crate::analytic::Scenario;

/// Raw threshold set `{x ∉ Ω_n : d_{Ω_n}(x, q) > λ r(x)}` for a given field
/// (ties stay outside).
pub fn threshold_candidates(
    grid: &PolarGrid,
    field: &DistanceField,
    omega: &RegionMask,
    scn: &Scenario,
) -> RegionMask {
    let mut out = RegionMask::empty_for(grid);
    for node in 0..grid.node_count() as NodeId {
        if !omega.contains(node) && field.get(node) > scn.lambda * grid.radius(node) {
            out.insert(node);
        }
    }
    out
}

fn step_with_field(
    grid: &PolarGrid,
    omega: &RegionMask,
    scn: &Scenario,
) -> Result<(RegionMask, DistanceField), GridError> {
    omega.check_shape(grid)?;
    let q = grid.q_node();
    if omega.contains(q) {
        return Err(GridError::QEngulfed);
    }
    let field = distance_field(grid, q, omega)?;
    let candidates = threshold_candidates(grid, &field, omega, scn);
    if candidates.contains(q) {
        return Err(GridError::QEngulfed);
    }
    let mut next = omega.clone();
    next.union_with(&candidates);
    next.rectify_columns();
    Ok((next, field))
}

/// One step of the recursion: `Ω_n` plus every node whose obstacle distance to
/// `q` exceeds `λ r`, column-rectified.
pub fn omega_step(grid: &PolarGrid, omega: &RegionMask, scn: &Scenario) -> Result<RegionMask, GridError> {
    step_with_field(grid, omega, scn).map(|(m, _)| m)
}

#[derive(Debug, Clone)]
pub struct FixedPoint {
    pub omega: RegionMask,
    /// number of recursion steps performed
    pub iterations: usize,
    /// nodes added by each step
    pub added: Vec<usize>,
    /// false when `max_iter` was reached while the last step still added nodes
    pub converged: bool,
}

/// Iterates [`omega_step`] from the empty set until nothing is added or
/// `max_iter` steps have run.
pub fn omega_fixed_point(grid: &PolarGrid, scn: &Scenario, max_iter: usize) -> Result<FixedPoint, GridError> {
    omega_fixed_point_with(grid, scn, max_iter, |_, _| {})
}

/// As [`omega_fixed_point`], calling `observe(n, Ω_n)` after every step.
pub fn omega_fixed_point_with<F: FnMut(usize, &RegionMask)>(
    grid: &PolarGrid,
    scn: &Scenario,
    max_iter: usize,
    mut observe: F,
) -> Result<FixedPoint, GridError> {
    if max_iter == 0 {
        return Err(GridError::InvalidParams("max_iter must be at least 1".into()));
    }
    let mut omega = RegionMask::empty_for(grid);
    let mut size = 0;
    let mut added = Vec::new();
    for n in 1..=max_iter {
        let next = omega_step(grid, &omega, scn)?;
        let next_size = next.len();
        added.push(next_size - size);
        observe(n, &next);
        let stalled = next_size == size;
        omega = next;
        size = next_size;
        if stalled {
            return Ok(FixedPoint { omega, iterations: n, added, converged: true });
        }
    }
    Ok(FixedPoint { omega, iterations: max_iter, added, converged: false })
}

/// Nodes outside `omega` with a radial, angular or pole neighbor inside it.
pub(crate) fn boundary_nodes(grid: &PolarGrid, omega: &RegionMask) -> Vec<NodeId> {
    let (n_r, n_t) = (grid.n_r(), grid.n_theta());
    let mut out = Vec::new();
    for i in 1..=n_r {
        for j in 0..n_t {
            let node = grid.node(i, j);
            if omega.contains(node) {
                continue;
            }
            let touches = omega.contains_cell(i - 1, j)
                || (i < n_r && omega.contains_cell(i + 1, j))
                || omega.contains_cell(i, (j + 1) % n_t)
                || omega.contains_cell(i, (j + n_t - 1) % n_t);
            if touches {
                out.push(node);
            }
        }
    }
    out
}

/// `max |d_Ω(x, q) − λ r(x)| / max(1, λ r(x))` over boundary nodes; zero when
/// there are none.
pub fn boundary_residual(grid: &PolarGrid, omega: &RegionMask, scn: &Scenario) -> Result<f64, GridError> {
    let nodes = boundary_nodes(grid, omega);
    if nodes.is_empty() {
        return Ok(0.0);
    }
    let field = distance_field(grid, grid.q_node(), omega)?;
    Ok(nodes
        .into_iter()
        .map(|x| {
            let target = scn.lambda * grid.radius(x);
            (field.get(x) - target).abs() / target.max(1.0)
        })
        .fold(0.0, f64::max))
}
