use std::f64::consts::PI;

use serde::Serialize;

use super::{GridError, PolarGrid, RegionMask};

/// Clearance, in radial cells, required between `Ω` and the outer ring for a
/// bounded verdict.
pub const BOUNDARY_MARGIN_CELLS: usize = 5;

/// `f(θ_j)` per column: `Δr` times the first ring outside `Ω`, `+∞` when the whole
/// column is inside.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialProfile {
    pub f: Vec<f64>,
    pub exit: Vec<usize>,
    pub dr: f64,
    pub dtheta: f64,
}

impl RadialProfile {
    pub fn max_finite(&self) -> Option<f64> {
        self.f.iter().copied().filter(|v| v.is_finite()).reduce(f64::max)
    }

    /// Columns whose `f` is infinite.
    pub fn escape_directions(&self) -> Vec<usize> {
        (0..self.f.len()).filter(|&j| self.f[j].is_infinite()).collect()
    }

    pub fn theta(&self, j: usize) -> f64 {
        j as f64 * self.dtheta
    }

    /// `max_j |f_j − f_{−j}|`.
    pub fn mirror_defect(&self) -> f64 {
        let n = self.f.len();
        (0..n)
            .map(|j| {
                let (a, b) = (self.f[j], self.f[(n - j) % n]);
                if a == b {
                    0.0
                } else {
                    (a - b).abs()
                }
            })
            .fold(0.0, f64::max)
    }
}

/// Per-column exit radius of a star-shaped mask.
pub fn extract_profile(grid: &PolarGrid, omega: &RegionMask) -> Result<RadialProfile, GridError> {
    omega.check_shape(grid)?;
    if let Some(j) = omega.star_shape_violation() {
        return Err(GridError::NotStarShaped(j));
    }
    let n_r = grid.n_r();
    let exit: Vec<usize> = (0..grid.n_theta()).map(|j| omega.exit_index(j)).collect();
    let f = exit
        .iter()
        .map(|&e| if e > n_r { f64::INFINITY } else { e as f64 * grid.dr() })
        .collect();
    Ok(RadialProfile { f, exit, dr: grid.dr(), dtheta: grid.dtheta() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Boundedness {
    /// `Ω` stays clear of the outer ring by `margin`
    Bounded { margin: f64 },
    /// the columns `first..=last` (cyclic, containing θ = π) reach the outer ring
    Escaping { first: usize, last: usize, width: usize },
    Inconclusive,
}

impl Boundedness {
    pub fn label(&self) -> &'static str {
        match self {
            Boundedness::Bounded { .. } => "bounded",
            Boundedness::Escaping { .. } => "escaping",
            Boundedness::Inconclusive => "inconclusive",
        }
    }
}

/// Trichotomy from a converged profile: bounded with a margin of
/// [`BOUNDARY_MARGIN_CELLS`], escaping through a sector containing θ = π, or
/// inconclusive.
pub fn classify_boundedness(profile: &RadialProfile, grid: &PolarGrid) -> Boundedness {
    let n = profile.f.len();
    let escaping = profile.escape_directions();
    if escaping.is_empty() {
        let max_f = profile.max_finite().unwrap_or(0.0);
        let limit = grid.r_max() - BOUNDARY_MARGIN_CELLS as f64 * grid.dr();
        return if max_f <= limit {
            Boundedness::Bounded { margin: grid.r_max() - max_f }
        } else {
            Boundedness::Inconclusive
        };
    }
    let back = grid.column_at(PI);
    if !profile.f[back].is_infinite() {
        return Boundedness::Inconclusive;
    }
    if escaping.len() == n {
        return Boundedness::Escaping { first: 0, last: n - 1, width: n };
    }
    let mut first = back;
    while profile.f[(first + n - 1) % n].is_infinite() {
        first = (first + n - 1) % n;
    }
    let mut last = back;
    while profile.f[(last + 1) % n].is_infinite() {
        last = (last + 1) % n;
    }
    let width = (last + n - first) % n + 1;
    Boundedness::Escaping { first, last, width }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::Scenario;
    use crate::grid::{omega_fixed_point, GridParams};
    use crate::metric::SurfaceMetric;

    fn grid(r_max: f64) -> PolarGrid {
        PolarGrid::build(&SurfaceMetric::euclidean(), &Scenario::new(2.0, 1.0).unwrap(), &GridParams::new(r_max, 100, 64, 2))
            .unwrap()
    }

    #[test]
    fn empty_region_has_zero_profile() {
        let g = grid(3.0);
        let p = extract_profile(&g, &RegionMask::empty_for(&g)).unwrap();
        assert!(p.f.iter().all(|&f| f == 0.0));
        assert_eq!(p.max_finite(), Some(0.0));
        assert_eq!(p.mirror_defect(), 0.0);
    }

    #[test]
    fn holes_are_rejected() {
        let g = grid(3.0);
        let mut m = RegionMask::empty_for(&g);
        m.insert(g.pole());
        m.insert(g.node(2, 3));
        assert_eq!(extract_profile(&g, &m).unwrap_err(), GridError::NotStarShaped(3));
    }

    #[test]
    fn trichotomy() {
        let g = grid(3.0);
        let mut exit = vec![10; 64];
        let m = RegionMask::from_exit_indices(100, 64, &exit).unwrap();
        let p = extract_profile(&g, &m).unwrap();
        assert!(matches!(classify_boundedness(&p, &g), Boundedness::Bounded { .. }));

        // within the margin of the outer ring
        exit[5] = 97;
        let p = extract_profile(&g, &RegionMask::from_exit_indices(100, 64, &exit).unwrap()).unwrap();
        assert_eq!(classify_boundedness(&p, &g), Boundedness::Inconclusive);

        // full columns around π
        exit[5] = 10;
        for e in &mut exit[30..=35] {
            *e = 101;
        }
        let p = extract_profile(&g, &RegionMask::from_exit_indices(100, 64, &exit).unwrap()).unwrap();
        assert_eq!(classify_boundedness(&p, &g), Boundedness::Escaping { first: 30, last: 35, width: 6 });
        assert!(p.f[32].is_infinite());
        assert_eq!(p.escape_directions(), (30..=35).collect::<Vec<_>>());

        // an escape that misses π
        for e in &mut exit[30..=35] {
            *e = 10;
        }
        exit[3] = 101;
        let p = extract_profile(&g, &RegionMask::from_exit_indices(100, 64, &exit).unwrap()).unwrap();
        assert_eq!(classify_boundedness(&p, &g), Boundedness::Inconclusive);
    }

    #[test]
    fn escape_sector_wraps_around_zero() {
        let g = grid(3.0);
        let exit = vec![101; 64];
        let p = extract_profile(&g, &RegionMask::from_exit_indices(100, 64, &exit).unwrap()).unwrap();
        assert_eq!(classify_boundedness(&p, &g), Boundedness::Escaping { first: 0, last: 63, width: 64 });
    }

    #[test]
    fn benchmark_is_bounded_and_symmetric() {
        let g = grid(3.0);
        let scn = Scenario::new(2.0, 1.0).unwrap();
        let fp = omega_fixed_point(&g, &scn, 1000).unwrap();
        let p = extract_profile(&g, &fp.omega).unwrap();
        assert_eq!(classify_boundedness(&p, &g).label(), "bounded");
        assert!(p.mirror_defect() <= g.dr());
        let back = p.f[g.column_at(PI)];
        let side = p.f[g.column_at(PI / 2.0)];
        assert!((back / side / 2.476_632_271_1 - 1.0).abs() < 0.03, "{}", back / side);

        // r_max barely above max f
        let tight = grid(p.max_finite().unwrap() + 0.02);
        let fp = omega_fixed_point(&tight, &scn, 1000).unwrap();
        let p = extract_profile(&tight, &fp.omega).unwrap();
        assert_eq!(classify_boundedness(&p, &tight), Boundedness::Inconclusive);
    }
}
