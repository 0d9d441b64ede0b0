//! MPC problem data: per-subsystem quadratic objectives and polytopic
//! constraints over the predicted trajectories of a neighborhood.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernels::{Polytope, QuadraticCost};
use crate::model::{InterconnectionGraph, SubsystemPartition, SystemModel};
use crate::sls::{HorizonSpec, TrajectoryLayout};
use crate::Scalar;

/// Stacked predicted trajectories of a set of subsystems, each in
/// [`TrajectoryLayout`] order, concatenated in ascending subsystem order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FootprintLayout {
    horizon: HorizonSpec,
    subsystems: Vec<usize>,
    layouts: Vec<TrajectoryLayout>,
    offsets: Vec<usize>,
    state_offsets: Vec<usize>,
    input_offsets: Vec<usize>,
    len: usize,
}

impl FootprintLayout {
    pub fn new(h: &HorizonSpec, partition: &SubsystemPartition, subsystems: impl IntoIterator<Item = usize>) -> Result<Self> {
        let subsystems: Vec<usize> = subsystems.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        if subsystems.is_empty() {
            return Err(Error::InvalidArgument("footprint must contain at least one subsystem".into()));
        }
        for &j in &subsystems {
            partition.check_index(j)?;
        }
        let layouts: Vec<TrajectoryLayout> = subsystems.iter().map(|&j| TrajectoryLayout::of(h, partition, j)).collect();
        let mut offsets = Vec::with_capacity(layouts.len());
        let mut len = 0;
        for l in &layouts {
            offsets.push(len);
            len += l.len();
        }
        let state_offsets = subsystems.iter().map(|&j| partition.state_range(j).start).collect();
        let input_offsets = subsystems.iter().map(|&j| partition.input_range(j).start).collect();
        Ok(Self { horizon: *h, subsystems, layouts, offsets, state_offsets, input_offsets, len })
    }

    pub fn single(h: &HorizonSpec, partition: &SubsystemPartition, i: usize) -> Result<Self> {
        Self::new(h, partition, [i])
    }

    pub fn horizon(&self) -> &HorizonSpec {
        &self.horizon
    }

    pub fn subsystems(&self) -> &[usize] {
        &self.subsystems
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn position(&self, j: usize) -> Option<usize> {
        self.subsystems.binary_search(&j).ok()
    }

    pub fn contains(&self, j: usize) -> bool {
        self.position(j).is_some()
    }

    pub fn layout(&self, pos: usize) -> &TrajectoryLayout {
        &self.layouts[pos]
    }

    pub fn offset(&self, pos: usize) -> usize {
        self.offsets[pos]
    }

    /// Stacked index of state component `a` of subsystem `j` at step `t`.
    pub fn x(&self, j: usize, t: usize, a: usize) -> usize {
        let pos = self.position(j).expect("subsystem in footprint");
        self.offsets[pos] + self.layouts[pos].x(t, a)
    }

    pub fn u(&self, j: usize, t: usize, b: usize) -> usize {
        let pos = self.position(j).expect("subsystem in footprint");
        self.offsets[pos] + self.layouts[pos].u(t, b)
    }

    /// Owner subsystem and its local trajectory index for a stacked index.
    pub fn locate(&self, idx: usize) -> (usize, usize) {
        let pos = match self.offsets.binary_search(&idx) {
            Ok(p) => {
                let mut p = p;
                while p + 1 < self.offsets.len() && self.offsets[p + 1] == idx {
                    p += 1;
                }
                p
            }
            Err(p) => p - 1,
        };
        (self.subsystems[pos], idx - self.offsets[pos])
    }

    /// Global row of `Phi` (trajectory order) for a stacked index.
    pub fn global_row(&self, idx: usize) -> usize {
        let (j, local) = self.locate(idx);
        let pos = self.position(j).expect("located subsystem");
        let l = &self.layouts[pos];
        let x_len = (l.horizon + 1) * l.state_dim;
        if local < x_len {
            let (t, a) = (local / l.state_dim, local % l.state_dim);
            self.horizon.x_row(t, self.state_offsets[pos] + a)
        } else {
            let r = local - x_len;
            let (t, b) = (r / l.input_dim, r % l.input_dim);
            self.horizon.u_row(t, self.input_offsets[pos] + b)
        }
    }

    /// Picks the footprint entries out of a global stacked trajectory.
    pub fn gather<T: Scalar>(&self, global: &DVector<T>) -> DVector<T> {
        DVector::from_fn(self.len, |k, _| global[self.global_row(k)])
    }
}

/// Objective term and constraints owned by one subsystem.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsystemObjective<T: Scalar> {
    pub subsystem: usize,
    pub footprint: FootprintLayout,
    pub cost: QuadraticCost<T>,
    pub constraints: Polytope<T>,
}

impl<T: Scalar> SubsystemObjective<T> {
    pub fn new(subsystem: usize, footprint: FootprintLayout, cost: QuadraticCost<T>, constraints: Polytope<T>) -> Result<Self> {
        if !footprint.contains(subsystem) {
            return Err(Error::InvalidArgument(format!("footprint of subsystem {subsystem} must contain itself")));
        }
        if cost.dim() != footprint.len() || cost.h.shape() != (footprint.len(), footprint.len()) {
            return Err(Error::Dimension(format!("cost of subsystem {subsystem} does not match its footprint")));
        }
        if constraints.dim() != footprint.len() {
            return Err(Error::Dimension(format!("constraints of subsystem {subsystem} do not match its footprint")));
        }
        Ok(Self { subsystem, footprint, cost, constraints })
    }

    /// Whether cost and constraints touch only the subsystem's own trajectory.
    pub fn is_separable(&self) -> bool {
        self.footprint.subsystems() == [self.subsystem]
    }

    /// Whether the inequality constraints are empty.
    pub fn is_closed_form(&self) -> bool {
        self.constraints.inequalities() == 0
    }

    /// Footprint entries that appear in the cost or constraints.
    pub fn referenced(&self) -> Vec<bool> {
        let n = self.footprint.len();
        let nz = |v: &T| *v != T::zero();
        (0..n)
            .map(|k| {
                self.cost.h.column(k).iter().any(nz)
                    || self.cost.h.row(k).iter().any(nz)
                    || nz(&self.cost.g[k])
                    || self.constraints.g.column(k).iter().any(nz)
                    || self.constraints.aeq.column(k).iter().any(nz)
            })
            .collect()
    }

    /// Subsystems whose trajectory entries actually appear in the cost or constraints.
    pub fn coupled_subsystems(&self) -> Vec<usize> {
        let used = self.referenced();
        let mut out: BTreeSet<usize> =
            (0..used.len()).filter(|&k| used[k]).map(|k| self.footprint.locate(k).0).collect();
        out.insert(self.subsystem);
        out.into_iter().collect()
    }

    /// Checks that every coupled subsystem lies in `in_i(d)`.
    pub fn check_locality(&self, graph: &InterconnectionGraph, d: usize) -> Result<()> {
        let allowed = graph.d_incoming(self.subsystem, d)?;
        for j in self.coupled_subsystems() {
            if !allowed.contains(&j) {
                return Err(Error::InvalidArgument(format!(
                    "objective of subsystem {} couples subsystem {j}, outside its {d}-hop incoming set",
                    self.subsystem
                )));
            }
        }
        Ok(())
    }

    /// Cost value on a global stacked trajectory.
    pub fn eval(&self, global: &DVector<T>) -> T {
        self.cost.eval(&self.footprint.gather(global))
    }
}

/// Finite-horizon MPC instance at one measured initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcProblem<T: Scalar> {
    pub model: SystemModel<T>,
    pub horizon: HorizonSpec,
    /// One entry per subsystem, indexed by subsystem.
    pub objectives: Vec<SubsystemObjective<T>>,
    pub terminal_constraint: bool,
    pub x0: DVector<T>,
}

impl<T: Scalar> MpcProblem<T> {
    /// Validates shapes. With `terminal_constraint`, each objective gains the
    /// equality rows `[x_T]_i = 0` on its own trajectory.
    pub fn new(
        model: SystemModel<T>,
        horizon: usize,
        mut objectives: Vec<SubsystemObjective<T>>,
        terminal_constraint: bool,
        x0: DVector<T>,
    ) -> Result<Self> {
        let h = HorizonSpec::for_partition(horizon, model.partition())?;
        if objectives.len() != model.count() {
            return Err(Error::Dimension(format!("{} objectives for {} subsystems", objectives.len(), model.count())));
        }
        if x0.len() != model.n() {
            return Err(Error::Dimension(format!("x0 has {} entries, model has {} states", x0.len(), model.n())));
        }
        for (i, obj) in objectives.iter().enumerate() {
            if obj.subsystem != i || obj.footprint.horizon() != &h {
                return Err(Error::InvalidArgument(format!("objective {i} is out of order or built for another horizon")));
            }
        }
        if terminal_constraint {
            for obj in &mut objectives {
                let i = obj.subsystem;
                let rows: Vec<(Vec<(usize, T)>, T)> = (0..model.partition().state_dim(i))
                    .map(|a| (vec![(obj.footprint.x(i, h.horizon(), a), T::one())], T::zero()))
                    .collect();
                obj.constraints = append_equalities(&obj.constraints, &rows)?;
            }
        }
        Ok(Self { model, horizon: h, objectives, terminal_constraint, x0 })
    }

    /// Same instance at another initial state.
    pub fn with_x0(&self, x0: DVector<T>) -> Result<Self> {
        if x0.len() != self.model.n() {
            return Err(Error::Dimension(format!("x0 has {} entries, model has {} states", x0.len(), self.model.n())));
        }
        Ok(Self { x0, ..self.clone() })
    }

    pub fn is_separable(&self) -> bool {
        self.objectives.iter().all(SubsystemObjective::is_separable)
    }

    pub fn has_inequalities(&self) -> bool {
        self.objectives.iter().any(|o| o.constraints.inequalities() > 0)
    }

    /// Total objective on a global stacked trajectory (`Phi` row order).
    pub fn objective(&self, global: &DVector<T>) -> T {
        self.objectives.iter().fold(T::zero(), |acc, o| acc + o.eval(global))
    }

    /// Largest constraint violation on a global stacked trajectory.
    pub fn max_violation(&self, global: &DVector<T>) -> T {
        self.objectives.iter().fold(T::zero(), |acc, o| acc.max(o.constraints.max_violation(&o.footprint.gather(global))))
    }

    pub fn check_locality(&self, graph: &InterconnectionGraph, d: usize) -> Result<()> {
        self.objectives.iter().try_for_each(|o| o.check_locality(graph, d))
    }
}

fn append_equalities<T: Scalar>(p: &Polytope<T>, rows: &[(Vec<(usize, T)>, T)]) -> Result<Polytope<T>> {
    let dim = p.dim();
    let m = p.equalities();
    let mut aeq = DMatrix::zeros(m + rows.len(), dim);
    let mut beq = DVector::zeros(m + rows.len());
    aeq.view_mut((0, 0), (m, dim)).copy_from(&p.aeq);
    beq.rows_mut(0, m).copy_from(&p.beq);
    for (k, (coeffs, b)) in rows.iter().enumerate() {
        for &(c, v) in coeffs {
            aeq[(m + k, c)] = v;
        }
        beq[m + k] = *b;
    }
    Polytope::new(p.g.clone(), p.h.clone(), aeq, beq)
}

/// Source of MPC instances along a closed-loop run; `step` is the real time index.
pub trait ProblemTemplate<T: Scalar>: Send + Sync {
    fn model(&self) -> &SystemModel<T>;
    fn problem_at(&self, step: usize, x0: DVector<T>) -> Result<MpcProblem<T>>;
}

impl<T: Scalar> ProblemTemplate<T> for MpcProblem<T> {
    fn model(&self) -> &SystemModel<T> {
        &self.model
    }

    fn problem_at(&self, _step: usize, x0: DVector<T>) -> Result<MpcProblem<T>> {
        self.with_x0(x0)
    }
}

/// Quadratic stage cost `x_F' Q x_F + u_F' R u_F` of one subsystem, where
/// `x_F`, `u_F` stack the states and inputs of its footprint at one step.
/// The terminal step charges the state part only.
#[derive(Debug, Clone, PartialEq)]
pub struct StageCost<T: Scalar> {
    pub subsystem: usize,
    pub footprint: Vec<usize>,
    pub state_weight: DMatrix<T>,
    pub input_weight: DMatrix<T>,
}

impl<T: Scalar> StageCost<T> {
    fn state_indices(&self, partition: &SubsystemPartition) -> Vec<usize> {
        self.footprint.iter().flat_map(|&j| partition.state_range(j)).collect()
    }

    fn input_indices(&self, partition: &SubsystemPartition) -> Vec<usize> {
        self.footprint.iter().flat_map(|&j| partition.input_range(j)).collect()
    }

    fn check(&self, partition: &SubsystemPartition) -> Result<()> {
        let ns = self.state_indices(partition).len();
        let ps = self.input_indices(partition).len();
        if self.state_weight.shape() != (ns, ns) || self.input_weight.shape() != (ps, ps) {
            return Err(Error::Dimension(format!("stage cost weights of subsystem {} do not match its footprint", self.subsystem)));
        }
        Ok(())
    }

    /// Stage value at real or predicted `(x, u)`; `u = None` charges the state part only.
    pub fn eval(&self, partition: &SubsystemPartition, x: &DVector<T>, u: Option<&DVector<T>>) -> T {
        let xs = DVector::from_iterator(self.state_weight.nrows(), self.state_indices(partition).into_iter().map(|k| x[k]));
        let mut v = (xs.transpose() * &self.state_weight * &xs)[(0, 0)];
        if let Some(u) = u {
            let us = DVector::from_iterator(self.input_weight.nrows(), self.input_indices(partition).into_iter().map(|k| u[k]));
            v += (us.transpose() * &self.input_weight * &us)[(0, 0)];
        }
        v
    }

    /// Sum of stage costs over the horizon as a quadratic on the footprint layout.
    pub fn to_quadratic(&self, footprint: &FootprintLayout, partition: &SubsystemPartition) -> Result<QuadraticCost<T>> {
        self.check(partition)?;
        let steps = footprint.horizon().horizon();
        let two = T::lit(2.0);
        let mut cost = QuadraticCost::zeros(footprint.len());
        let xidx = |t: usize| -> Vec<usize> {
            self.footprint.iter().flat_map(|&j| (0..partition.state_dim(j)).map(move |a| footprint.x(j, t, a))).collect()
        };
        let uidx = |t: usize| -> Vec<usize> {
            self.footprint.iter().flat_map(|&j| (0..partition.input_dim(j)).map(move |b| footprint.u(j, t, b))).collect()
        };
        for t in 0..=steps {
            let idx = xidx(t);
            for (a, &ra) in idx.iter().enumerate() {
                for (b, &rb) in idx.iter().enumerate() {
                    cost.h[(ra, rb)] += two * self.state_weight[(a, b)];
                }
            }
        }
        for t in 0..steps {
            let idx = uidx(t);
            for (a, &ra) in idx.iter().enumerate() {
                for (b, &rb) in idx.iter().enumerate() {
                    cost.h[(ra, rb)] += two * self.input_weight[(a, b)];
                }
            }
        }
        cost.h = (&cost.h + cost.h.transpose()) * T::lit(0.5);
        Ok(cost)
    }
}

/// Rows `G_x x_F + G_u u_F <= bound` applied at selected prediction steps.
#[derive(Debug, Clone, PartialEq)]
pub struct StageConstraint<T: Scalar> {
    pub footprint: Vec<usize>,
    pub state_coeffs: DMatrix<T>,
    pub input_coeffs: DMatrix<T>,
    pub bound: DVector<T>,
}

impl<T: Scalar> StageConstraint<T> {
    /// Sparse rows on `layout` at prediction step `t`. Input coefficients
    /// are skipped at `t = T`.
    pub fn rows_at(&self, layout: &FootprintLayout, partition: &SubsystemPartition, t: usize) -> Result<Vec<(Vec<(usize, T)>, T)>> {
        let xs: Vec<usize> =
            self.footprint.iter().flat_map(|&j| (0..partition.state_dim(j)).map(move |a| layout.x(j, t, a))).collect();
        if self.state_coeffs.shape() != (self.bound.len(), xs.len()) {
            return Err(Error::Dimension("stage constraint state coefficients do not match the footprint".into()));
        }
        let steps = layout.horizon().horizon();
        let us: Vec<usize> = if t < steps {
            self.footprint.iter().flat_map(|&j| (0..partition.input_dim(j)).map(move |b| layout.u(j, t, b))).collect()
        } else {
            Vec::new()
        };
        let input_cols: usize = self.footprint.iter().map(|&j| partition.input_dim(j)).sum();
        if self.input_coeffs.shape() != (self.bound.len(), input_cols) {
            return Err(Error::Dimension("stage constraint input coefficients do not match the footprint".into()));
        }
        let mut out = Vec::with_capacity(self.bound.len());
        for r in 0..self.bound.len() {
            let mut coeffs: Vec<(usize, T)> = xs.iter().enumerate().map(|(c, &k)| (k, self.state_coeffs[(r, c)])).collect();
            coeffs.extend(us.iter().enumerate().map(|(c, &k)| (k, self.input_coeffs[(r, c)])));
            coeffs.retain(|&(_, v)| v != T::zero());
            if !coeffs.is_empty() {
                out.push((coeffs, self.bound[r]));
            }
        }
        Ok(out)
    }
}

/// Builds the objective of subsystem `stage.subsystem` from a stage cost and
/// stage constraints, each active on the listed prediction steps.
pub fn objective_from_stages<T: Scalar>(
    h: &HorizonSpec,
    partition: &SubsystemPartition,
    stage: &StageCost<T>,
    constraints: &[(StageConstraint<T>, Vec<usize>)],
) -> Result<SubsystemObjective<T>> {
    let mut subs: BTreeSet<usize> = stage.footprint.iter().copied().collect();
    subs.insert(stage.subsystem);
    for (c, _) in constraints {
        subs.extend(c.footprint.iter().copied());
    }
    let layout = FootprintLayout::new(h, partition, subs)?;
    let cost = stage.to_quadratic(&layout, partition)?;
    let mut rows = Vec::new();
    for (c, steps) in constraints {
        for &t in steps {
            if t > h.horizon() {
                return Err(Error::InvalidArgument(format!("constraint step {t} beyond horizon {}", h.horizon())));
            }
            rows.extend(c.rows_at(&layout, partition, t)?);
        }
    }
    let polytope = Polytope::from_rows(layout.len(), &rows, &[])?;
    SubsystemObjective::new(stage.subsystem, layout, cost, polytope)
}
