use super::{GridError, NodeId, PolarGrid};

/// A set of grid nodes (pole included) for a grid of `n_r × n_θ`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionMask {
    n_r: usize,
    n_theta: usize,
    cells: Vec<bool>,
}

impl RegionMask {
    pub fn empty(n_r: usize, n_theta: usize) -> Self {
        RegionMask { n_r, n_theta, cells: vec![false; n_r * n_theta + 1] }
    }

    pub fn empty_for(grid: &PolarGrid) -> Self {
        Self::empty(grid.n_r(), grid.n_theta())
    }

    pub fn full_for(grid: &PolarGrid) -> Self {
        RegionMask { n_r: grid.n_r(), n_theta: grid.n_theta(), cells: vec![true; grid.node_count()] }
    }

    /// Star-shaped mask whose column `j` holds rings `1..exit[j]`; the pole is a
    /// member unless every exit index is zero.
    pub fn from_exit_indices(n_r: usize, n_theta: usize, exit: &[usize]) -> Result<Self, GridError> {
        if exit.len() != n_theta {
            return Err(GridError::MaskShape { expected: (n_r, n_theta), got: (n_r, exit.len()) });
        }
        let mut mask = Self::empty(n_r, n_theta);
        let any = exit.iter().any(|&e| e > 0);
        mask.cells[0] = any;
        for (j, &e) in exit.iter().enumerate() {
            if e > n_r + 1 {
                return Err(GridError::NotStarShaped(j));
            }
            if e == 0 && any {
                // a nonempty mask contains the pole, so every column exits at ring 1 or later
                return Err(GridError::NotStarShaped(j));
            }
            for i in 1..e.min(n_r + 1) {
                mask.cells[1 + (i - 1) * n_theta + j] = true;
            }
        }
        Ok(mask)
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.n_r, self.n_theta)
    }

    pub fn check_shape(&self, grid: &PolarGrid) -> Result<(), GridError> {
        if self.dims() != (grid.n_r(), grid.n_theta()) {
            return Err(GridError::MaskShape { expected: (grid.n_r(), grid.n_theta()), got: self.dims() });
        }
        Ok(())
    }

    #[inline]
    pub fn contains(&self, node: NodeId) -> bool {
        self.cells[node as usize]
    }

    #[inline]
    pub fn contains_cell(&self, i: usize, j: usize) -> bool {
        if i == 0 {
            return self.cells[0];
        }
        self.cells[1 + (i - 1) * self.n_theta + j]
    }

    pub fn insert(&mut self, node: NodeId) {
        self.cells[node as usize] = true;
    }

    pub fn remove(&mut self, node: NodeId) {
        self.cells[node as usize] = false;
    }

    pub fn len(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.cells.iter().any(|&c| c)
    }

    pub fn iter(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.cells.iter().enumerate().filter(|(_, &c)| c).map(|(k, _)| k as NodeId)
    }

    pub fn is_subset_of(&self, other: &RegionMask) -> bool {
        self.dims() == other.dims() && self.cells.iter().zip(&other.cells).all(|(&a, &b)| !a || b)
    }

    pub fn is_disjoint_from(&self, other: &RegionMask) -> bool {
        self.cells.iter().zip(&other.cells).all(|(&a, &b)| !(a && b))
    }

    /// First ring index in column `j` that is not a member (0 when the pole is
    /// outside, `n_r + 1` when the whole column is inside).
    pub fn exit_index(&self, j: usize) -> usize {
        if !self.cells[0] {
            return 0;
        }
        (1..=self.n_r).find(|&i| !self.contains_cell(i, j)).unwrap_or(self.n_r + 1)
    }

    /// Columnwise prefix test: each column is a downward-closed run of rings
    /// containing the pole whenever it is nonempty.
    pub fn star_shape_violation(&self) -> Option<usize> {
        for j in 0..self.n_theta {
            let exit = self.exit_index(j);
            let start = exit.max(1);
            if (start..=self.n_r).any(|i| self.contains_cell(i, j)) {
                return Some(j);
            }
        }
        None
    }

    pub fn is_star_shaped(&self) -> bool {
        self.star_shape_violation().is_none()
    }

    /// Clamps every column to its maximal prefix of members.
    pub fn rectify_columns(&mut self) {
        if !self.cells[0] {
            self.cells.iter_mut().for_each(|c| *c = false);
            return;
        }
        for j in 0..self.n_theta {
            let exit = self.exit_index(j);
            for i in exit..=self.n_r {
                if i >= 1 {
                    self.cells[1 + (i - 1) * self.n_theta + j] = false;
                }
            }
        }
    }

    pub fn union_with(&mut self, other: &RegionMask) {
        for (a, &b) in self.cells.iter_mut().zip(&other.cells) {
            *a |= b;
        }
    }
}
