use crate::error::{Error, Result};
use crate::model::SubsystemPartition;

/// Prediction horizon and global dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HorizonSpec {
    horizon: usize,
    n: usize,
    p: usize,
}

/// What a row of `Phi` describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    /// State component `index` at prediction step `t`.
    State { t: usize, index: usize },
    /// Input component `index` at prediction step `t`.
    Input { t: usize, index: usize },
}

impl HorizonSpec {
    pub fn new(horizon: usize, n: usize, p: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be at least one step".into()));
        }
        Ok(Self { horizon, n, p })
    }

    pub fn for_partition(horizon: usize, partition: &SubsystemPartition) -> Result<Self> {
        Self::new(horizon, partition.n(), partition.p())
    }

    /// Number of prediction steps `T`.
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// `(T + 1) n`.
    pub fn state_rows(&self) -> usize {
        (self.horizon + 1) * self.n
    }

    /// `(T + 1) n + T p`.
    pub fn rows(&self) -> usize {
        self.state_rows() + self.horizon * self.p
    }

    pub fn x_row(&self, t: usize, k: usize) -> usize {
        debug_assert!(t <= self.horizon && k < self.n);
        t * self.n + k
    }

    pub fn u_row(&self, t: usize, k: usize) -> usize {
        debug_assert!(t < self.horizon && k < self.p);
        self.state_rows() + t * self.p + k
    }

    pub fn row_kind(&self, row: usize) -> RowKind {
        if row < self.state_rows() {
            RowKind::State { t: row / self.n, index: row % self.n }
        } else {
            let r = row - self.state_rows();
            RowKind::Input { t: r / self.p, index: r % self.p }
        }
    }

    /// Rows owned by subsystem `i`, in local trajectory order.
    pub fn owned_rows(&self, partition: &SubsystemPartition, i: usize) -> Vec<usize> {
        let xs = partition.state_range(i);
        let us = partition.input_range(i);
        let mut rows = Vec::with_capacity(TrajectoryLayout::of(self, partition, i).len());
        for t in 0..=self.horizon {
            rows.extend(xs.clone().map(|k| self.x_row(t, k)));
        }
        for t in 0..self.horizon {
            rows.extend(us.clone().map(|k| self.u_row(t, k)));
        }
        rows
    }
}

/// Index map of one subsystem's predicted trajectory
/// `[x_0; ...; x_T; u_0; ...; u_{T-1}]` restricted to its own components.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrajectoryLayout {
    pub horizon: usize,
    pub state_dim: usize,
    pub input_dim: usize,
}

impl TrajectoryLayout {
    pub fn of(h: &HorizonSpec, partition: &SubsystemPartition, i: usize) -> Self {
        Self { horizon: h.horizon(), state_dim: partition.state_dim(i), input_dim: partition.input_dim(i) }
    }

    pub fn len(&self) -> usize {
        (self.horizon + 1) * self.state_dim + self.horizon * self.input_dim
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn x(&self, t: usize, a: usize) -> usize {
        debug_assert!(t <= self.horizon && a < self.state_dim);
        t * self.state_dim + a
    }

    pub fn u(&self, t: usize, b: usize) -> usize {
        debug_assert!(t < self.horizon && b < self.input_dim);
        (self.horizon + 1) * self.state_dim + t * self.input_dim + b
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_counts_and_kinds() {
        let h = HorizonSpec::new(3, 4, 2).unwrap();
        assert_eq!(h.rows(), 4 * 4 + 3 * 2);
        assert_eq!(h.row_kind(h.x_row(2, 1)), RowKind::State { t: 2, index: 1 });
        assert_eq!(h.row_kind(h.u_row(1, 1)), RowKind::Input { t: 1, index: 1 });
        assert!(HorizonSpec::new(0, 1, 1).is_err());
    }

    #[test]
    fn owned_rows_follow_trajectory_layout() {
        let part = SubsystemPartition::new(vec![1, 2], vec![1, 0]).unwrap();
        let h = HorizonSpec::for_partition(2, &part).unwrap();
        let rows = h.owned_rows(&part, 1);
        let lay = TrajectoryLayout::of(&h, &part, 1);
        assert_eq!(rows.len(), lay.len());
        assert_eq!(rows[lay.x(1, 1)], h.x_row(1, 2));
        let rows0 = h.owned_rows(&part, 0);
        let lay0 = TrajectoryLayout::of(&h, &part, 0);
        assert_eq!(rows0[lay0.u(1, 0)], h.u_row(1, 0));
    }
}
