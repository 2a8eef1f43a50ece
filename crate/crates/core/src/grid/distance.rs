use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::{GridError, NodeId, PolarGrid, RegionMask};
use crate::analytic::DistanceOracle;

/// Shortest-path distances from one source, `+∞` for obstacle and unreachable
/// nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField {
    values: Vec<f64>,
    source: NodeId,
}

impl DistanceField {
    pub fn source(&self) -> NodeId {
        self.source
    }

    #[inline]
    pub fn get(&self, node: NodeId) -> f64 {
        self.values[node as usize]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Label-setting (Dijkstra) distances from `source` on the grid graph restricted
/// to nodes outside `obstacle`.
pub fn distance_field(grid: &PolarGrid, source: NodeId, obstacle: &RegionMask) -> Result<DistanceField, GridError> {
    obstacle.check_shape(grid)?;
    if obstacle.contains(source) {
        return Err(GridError::SourceInObstacle(source));
    }
    let n = grid.node_count();
    let mut values = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    // nonnegative floats order like their bit patterns
    let mut heap = BinaryHeap::new();
    values[source as usize] = 0.0;
    heap.push(Reverse((0f64.to_bits(), source)));
    while let Some(Reverse((bits, u))) = heap.pop() {
        if done[u as usize] {
            continue;
        }
        done[u as usize] = true;
        let du = f64::from_bits(bits);
        grid.for_each_neighbor(u, |v, w| {
            let vi = v as usize;
            if done[vi] || obstacle.contains(v) {
                return;
            }
            let cand = du + w;
            if cand < values[vi] {
                values[vi] = cand;
                heap.push(Reverse((cand.to_bits(), v)));
            }
        });
    }
    Ok(DistanceField { values, source })
}

/// Bilinear interpolation of an obstacle-free field from `q` in `(r, θ)`; used as
/// the distance oracle on metrics without a closed form.
pub struct GridDistanceOracle<'a> {
    grid: &'a PolarGrid,
    field: &'a DistanceField,
}

impl<'a> GridDistanceOracle<'a> {
    pub fn new(grid: &'a PolarGrid, field: &'a DistanceField) -> Self {
        GridDistanceOracle { grid, field }
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        if i == 0 {
            self.field.get(0)
        } else {
            self.field.get(self.grid.node(i, j))
        }
    }
}

impl DistanceOracle for GridDistanceOracle<'_> {
    fn distance_to_q(&self, r: f64, theta: f64) -> f64 {
        let g = self.grid;
        let x = (r / g.dr()).clamp(0.0, g.n_r() as f64);
        let i0 = (x.floor() as usize).min(g.n_r() - 1);
        let fx = x - i0 as f64;
        let y = theta.rem_euclid(2.0 * std::f64::consts::PI) / g.dtheta();
        let j0 = (y.floor() as usize) % g.n_theta();
        let j1 = (j0 + 1) % g.n_theta();
        let fy = y - y.floor();
        let lo = self.at(i0, j0) * (1.0 - fy) + self.at(i0, j1) * fy;
        let hi = self.at(i0 + 1, j0) * (1.0 - fy) + self.at(i0 + 1, j1) * fy;
        lo * (1.0 - fx) + hi * fx
    }
}

#[cfg(test)]
mod tests {
    use std::collections::VecDeque;

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::analytic::Scenario;
    use crate::grid::GridParams;
    use crate::metric::SurfaceMetric;

    fn small(metric: &SurfaceMetric, order: u8) -> PolarGrid {
        PolarGrid::build(metric, &Scenario::new(2.0, 1.0).unwrap(), &GridParams::new(3.0, 16, 16, order)).unwrap()
    }

    // queue-based Bellman-Ford; sums along a path in the same order as Dijkstra
    fn bellman_ford(grid: &PolarGrid, source: NodeId, obstacle: &RegionMask) -> Vec<f64> {
        let mut d = vec![f64::INFINITY; grid.node_count()];
        d[source as usize] = 0.0;
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            for (v, w) in grid.neighbors(u) {
                if obstacle.contains(v) {
                    continue;
                }
                if d[u as usize] + w < d[v as usize] {
                    d[v as usize] = d[u as usize] + w;
                    queue.push_back(v);
                }
            }
        }
        d
    }

    #[test]
    fn matches_bellman_ford_with_random_obstacles() {
        let metric = SurfaceMetric::hyperbolic();
        for (seed, order) in [(1u64, 1u8), (2, 2), (3, 3)] {
            let grid = small(&metric, order);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut obstacle = RegionMask::empty_for(&grid);
            for node in 1..grid.node_count() as NodeId {
                if rng.random_bool(0.25) {
                    obstacle.insert(node);
                }
            }
            for source in (0..grid.node_count() as NodeId).filter(|&s| !obstacle.contains(s)).step_by(7) {
                let field = distance_field(&grid, source, &obstacle).unwrap();
                assert_eq!(field.values(), &bellman_ford(&grid, source, &obstacle)[..]);
            }
        }
    }

    #[test]
    fn radial_path_reaches_the_pole_exactly() {
        let m = SurfaceMetric::euclidean();
        let grid = PolarGrid::build(&m, &Scenario::new(2.0, 1.0).unwrap(), &GridParams::new(3.0, 400, 720, 2)).unwrap();
        let field = distance_field(&grid, grid.q_node(), &RegionMask::empty_for(&grid)).unwrap();
        assert!((field.get(grid.pole()) - 1.0).abs() < 1e-12);
        assert_eq!(field.get(grid.q_node()), 0.0);
        // exact distance √2 at (1, π/2)
        let x = grid.node(grid.q_ring(), grid.column_at(std::f64::consts::FRAC_PI_2));
        let ratio = field.get(x) / 2f64.sqrt();
        assert!(ratio >= 1.0 - 1e-12 && ratio <= crate::grid::stencil_overestimation_bound(2), "{ratio}");
    }

    #[test]
    fn order_one_within_its_bound() {
        let m = SurfaceMetric::euclidean();
        let grid = PolarGrid::build(&m, &Scenario::new(2.0, 1.0).unwrap(), &GridParams::new(3.0, 400, 720, 1)).unwrap();
        let field = distance_field(&grid, grid.q_node(), &RegionMask::empty_for(&grid)).unwrap();
        let x = grid.node(grid.q_ring(), grid.column_at(std::f64::consts::FRAC_PI_2));
        assert!(field.get(x) / 2f64.sqrt() <= 1.083);
    }

    #[test]
    fn full_obstacle_isolates_the_source() {
        let grid = small(&SurfaceMetric::euclidean(), 2);
        let mut obstacle = RegionMask::full_for(&grid);
        obstacle.remove(grid.q_node());
        let field = distance_field(&grid, grid.q_node(), &obstacle).unwrap();
        for node in 0..grid.node_count() as NodeId {
            if node != grid.q_node() {
                assert_eq!(field.get(node), f64::INFINITY);
            }
        }
        obstacle.insert(grid.q_node());
        assert!(matches!(
            distance_field(&grid, grid.q_node(), &obstacle),
            Err(GridError::SourceInObstacle(_))
        ));
    }

    #[test]
    fn lipschitz_along_edges() {
        let grid = small(&SurfaceMetric::hyperbolic(), 2);
        let mut obstacle = RegionMask::empty_for(&grid);
        for i in 1..=4 {
            obstacle.insert(grid.node(i, 8));
        }
        let field = distance_field(&grid, grid.q_node(), &obstacle).unwrap();
        for u in 0..grid.node_count() as NodeId {
            for (v, w) in grid.neighbors(u) {
                let (a, b) = (field.get(u), field.get(v));
                if a.is_finite() && b.is_finite() {
                    assert!((a - b).abs() <= w * (1.0 + 1e-12));
                }
            }
        }
    }

    #[test]
    fn interpolating_oracle_hits_nodes() {
        let grid = small(&SurfaceMetric::euclidean(), 2);
        let field = distance_field(&grid, grid.q_node(), &RegionMask::empty_for(&grid)).unwrap();
        let oracle = GridDistanceOracle::new(&grid, &field);
        let node = grid.node(3, 5);
        let got = oracle.distance_to_q(3.0 * grid.dr(), grid.theta(5));
        assert!((got - field.get(node)).abs() < 1e-12);
        assert!((oracle.distance_to_q(0.0, 1.0) - field.get(0)).abs() < 1e-12);
    }
}
