use super::{distance_field, GridError, NodeId, PolarGrid, RegionMask};
use crate::analytic::Scenario;

/// Both sets at one time.
#[derive(Debug, Clone)]
pub struct TimeSlice {
    pub t: f64,
    /// `{x ∉ Ω : d_Ω(x, q) ≤ λ t}`
    pub a: RegionMask,
    /// `Ω ∩ {r < t}`, with the pole always included
    pub b: RegionMask,
}

/// Reconstructs `(A_t, B_t)` from the converged region.
pub fn time_slices(grid: &PolarGrid, omega: &RegionMask, scn: &Scenario, times: &[f64]) -> Result<Vec<TimeSlice>, GridError> {
    if let Some(&t) = times.iter().find(|t| !(**t >= 0.0 && t.is_finite())) {
        return Err(GridError::InvalidParams(format!("slice times must be finite and nonnegative, got {t}")));
    }
    let field = distance_field(grid, grid.q_node(), omega)?;
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        let mut a = RegionMask::empty_for(grid);
        let mut b = RegionMask::empty_for(grid);
        for node in 0..grid.node_count() as NodeId {
            if omega.contains(node) {
                if node == grid.pole() || grid.radius(node) < t {
                    b.insert(node);
                }
            } else if field.get(node) <= scn.lambda * t {
                a.insert(node);
            }
        }
        out.push(TimeSlice { t, a, b });
    }
    Ok(out)
}
