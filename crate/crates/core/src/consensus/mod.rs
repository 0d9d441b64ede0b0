//! Nested consensus loop for objectives that couple neighboring trajectories.
//!
//! Each subsystem holds copies of the neighbor trajectory entries its cost
//! and constraints reference. The owner of an entry averages its own value
//! and all copies into `Z`; every holder keeps a scaled dual `Y`.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::DMatrix;

use crate::admm::{ConsensusTarget, LocalProblem, RowSolution, RowSolver};
use crate::error::{Error, Result};
use crate::problem::SubsystemObjective;
use crate::Scalar;

/// Local problem whose objective may reference neighbor trajectories.
pub type CoupledLocalProblem<T> = LocalProblem<T>;

/// Penalty and stopping rule of the inner consensus loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsensusParams {
    pub mu: f64,
    pub eps_x: f64,
    pub max_inner: usize,
}

impl Default for ConsensusParams {
    fn default() -> Self {
        Self { mu: 1.0, eps_x: 1e-4, max_inner: 2000 }
    }
}

impl ConsensusParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu.is_finite() && self.mu > 0.0 && self.eps_x.is_finite() && self.eps_x > 0.0 && self.max_inner > 0) {
            return Err(Error::Config(format!("consensus parameters must be positive: {self:?}")));
        }
        Ok(())
    }
}

/// A neighbor trajectory entry held by this subsystem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct HeldEntry {
    pub owner: usize,
    /// Global row of `Phi`.
    pub row: usize,
}

/// An own trajectory entry that other subsystems hold copies of.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SharedEntry {
    /// Index in the owner's local trajectory.
    pub local: usize,
    pub row: usize,
    /// Other holders, ascending.
    pub holders: Vec<usize>,
}

/// Which trajectory entries one subsystem copies and which of its own are copied.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConsensusLayout {
    pub subsystem: usize,
    /// Sorted by `(owner, row)`.
    pub held: Vec<HeldEntry>,
    /// Sorted by local index.
    pub shared: Vec<SharedEntry>,
}

impl ConsensusLayout {
    pub fn held_index(&self, owner: usize, row: usize) -> Option<usize> {
        self.held.binary_search(&HeldEntry { owner, row }).ok()
    }

    /// Held entries grouped by owner: `(owner, indices into held)`.
    pub fn held_by_owner(&self) -> Vec<(usize, Vec<usize>)> {
        let mut out: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (k, e) in self.held.iter().enumerate() {
            out.entry(e.owner).or_default().push(k);
        }
        out.into_iter().collect()
    }

    /// Shared entries grouped by holder: `(holder, indices into shared)`.
    pub fn shared_by_holder(&self) -> Vec<(usize, Vec<usize>)> {
        let mut out: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (k, e) in self.shared.iter().enumerate() {
            for &h in &e.holders {
                out.entry(h).or_default().push(k);
            }
        }
        out.into_iter().collect()
    }

    pub fn is_trivial(&self) -> bool {
        self.held.is_empty() && self.shared.is_empty()
    }
}

/// Derives every subsystem's consensus layout from the entries the
/// objectives reference. Index `i` of the result belongs to subsystem `i`.
pub fn consensus_layouts<T: Scalar>(objectives: &[SubsystemObjective<T>]) -> Vec<ConsensusLayout> {
    let count = objectives.len();
    let mut layouts: Vec<ConsensusLayout> =
        (0..count).map(|i| ConsensusLayout { subsystem: i, ..ConsensusLayout::default() }).collect();
    let mut holders: Vec<BTreeMap<(usize, usize), Vec<usize>>> = vec![BTreeMap::new(); count];
    for (i, obj) in objectives.iter().enumerate() {
        let used = obj.referenced();
        for (k, &u) in used.iter().enumerate() {
            let (j, local) = obj.footprint.locate(k);
            if !u || j == i {
                continue;
            }
            let row = obj.footprint.global_row(k);
            layouts[i].held.push(HeldEntry { owner: j, row });
            holders[j].entry((local, row)).or_default().push(i);
        }
    }
    for (j, map) in holders.into_iter().enumerate() {
        layouts[j].held.sort();
        layouts[j].held.dedup();
        layouts[j].shared =
            map.into_iter().map(|((local, row), mut hs)| {
                hs.sort_unstable();
                hs.dedup();
                SharedEntry { local, row, holders: hs }
            }).collect();
    }
    layouts
}

/// Consensus variables of one subsystem.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusState<T: Scalar> {
    pub layout: ConsensusLayout,
    pub held_x: Vec<T>,
    pub held_y: Vec<T>,
    pub held_z: Vec<T>,
    pub own_x: Vec<T>,
    pub own_y: Vec<T>,
    pub own_z: Vec<T>,
    /// Per shared entry, the duals of its other holders in `holders` order.
    pub mirror_y: Vec<Vec<T>>,
}

impl<T: Scalar> ConsensusState<T> {
    pub fn new(layout: ConsensusLayout) -> Self {
        let (nh, ns) = (layout.held.len(), layout.shared.len());
        let mirror_y = layout.shared.iter().map(|e| vec![T::zero(); e.holders.len()]).collect();
        Self {
            layout,
            held_x: vec![T::zero(); nh],
            held_y: vec![T::zero(); nh],
            held_z: vec![T::zero(); nh],
            own_x: vec![T::zero(); ns],
            own_y: vec![T::zero(); ns],
            own_z: vec![T::zero(); ns],
            mirror_y,
        }
    }

    /// `(Z - Y)` for own shared entries and held copies.
    pub fn targets(&self) -> (Vec<T>, Vec<T>) {
        let own = self.own_z.iter().zip(&self.own_y).map(|(&z, &y)| z - y).collect();
        let held = self.held_z.iter().zip(&self.held_y).map(|(&z, &y)| z - y).collect();
        (own, held)
    }

    /// `sqrt(sum (X - Z)^2)` over every entry this subsystem holds.
    pub fn residual(&self) -> f64 {
        let own = self.own_x.iter().zip(&self.own_z);
        let held = self.held_x.iter().zip(&self.held_z);
        own.chain(held).fold(T::zero(), |acc, (&x, &z)| acc + (x - z) * (x - z)).sqrt().as_f64()
    }
}

/// Row update with consensus terms: returns `Phi_i` together with the
/// subsystem's trajectory and its held copies.
pub fn consensus_x_update<T: Scalar>(
    solver: &mut RowSolver<T>,
    psi: &DMatrix<T>,
    lambda: &DMatrix<T>,
    state: &ConsensusState<T>,
) -> Result<RowSolution<T>> {
    if psi.shape() != lambda.shape() {
        return Err(Error::Dimension("psi and lambda slices differ in shape".into()));
    }
    let (own, held) = state.targets();
    solver.solve(&(psi - lambda), Some(ConsensusTarget { own: &own, held: &held }))
}

/// Average of `X + Y` over all holders of one entry.
pub fn consensus_z_update<T: Scalar>(copies: &[T], duals: &[T]) -> Result<T> {
    if copies.is_empty() || copies.len() != duals.len() {
        return Err(Error::Protocol(format!("{} copies with {} duals for a consensus average", copies.len(), duals.len())));
    }
    let sum = copies.iter().zip(duals).fold(T::zero(), |acc, (&x, &y)| acc + x + y);
    Ok(sum / T::from_usize_lossy(copies.len()))
}

/// `Y + X - Z`.
pub fn consensus_y_update<T: Scalar>(x: T, z: T, y: T) -> T {
    y + x - z
}

/// One inner-loop record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerRecord {
    pub outer_iter: usize,
    pub inner_iter: usize,
    pub subsystem: usize,
    pub consensus_residual: f64,
}

/// Inner-loop CSV: `outer_iter,inner_iter,subsystem,consensus_residual`.
pub fn write_inner_csv<W: Write>(out: W, records: &[InnerRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["outer_iter", "inner_iter", "subsystem", "consensus_residual"])?;
    for r in records {
        w.write_record([
            r.outer_iter.to_string(),
            r.inner_iter.to_string(),
            r.subsystem.to_string(),
            format!("{:e}", r.consensus_residual),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn z_update_averages() {
        assert_eq!(consensus_z_update(&[2.0, 2.0, 2.0], &[0.0, 0.0, 0.0]).unwrap(), 2.0);
        assert_eq!(consensus_z_update(&[1.5, -1.5], &[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(consensus_z_update(&[1.0, 3.0], &[0.5, -0.5]).unwrap(), 2.0);
        assert!(matches!(consensus_z_update::<f64>(&[], &[]), Err(Error::Protocol(_))));
    }

    #[test]
    fn y_update_telescopes() {
        assert_eq!(consensus_y_update(1.0, 1.0, 0.25), 0.25);
        let y = consensus_y_update(1.0, 0.5, 0.0);
        assert_eq!(y, 0.5);
        assert_eq!(consensus_y_update(0.5, 1.0, y), 0.0);
    }
}
