use nalgebra::{DMatrix, DVector};

use super::RowLayout;
use crate::consensus::ConsensusLayout;
use crate::error::{Error, Result};
use crate::kernels::{Polytope, PreparedQp, QpSettings, QpSolution};
use crate::problem::SubsystemObjective;
use crate::Scalar;

/// Data subsystem `i` needs for its row update at one MPC step.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalProblem<T: Scalar> {
    pub subsystem: usize,
    pub objective: SubsystemObjective<T>,
    /// Measured initial state on the row support.
    pub x0: DVector<T>,
}

/// Consensus terms of the row update: `Z - Y` for the shared own rows and
/// for the held copies, in [`ConsensusLayout`] order.
#[derive(Debug, Clone, Copy)]
pub struct ConsensusTarget<'a, T: Scalar> {
    pub own: &'a [T],
    pub held: &'a [T],
}

/// Result of one row update.
#[derive(Debug, Clone, PartialEq)]
pub struct RowSolution<T: Scalar> {
    pub phi: DMatrix<T>,
    /// Own trajectory `Phi_i x0` in local trajectory order.
    pub own: DVector<T>,
    /// Held copies of neighbor trajectory entries.
    pub held: DVector<T>,
}

/// Row update of one subsystem, prepared for a fixed initial state.
///
/// With `V = Psi - Lambda`, each row `r` only enters the objective through
/// `y_r = Phi_r x_r`, where `x_r` is the initial state on the row's allowed
/// columns. Minimizing the proximal term for fixed `y_r` gives
/// `Phi_r = V_r + (y_r - V_r x_r) x_r' / |x_r|^2` at cost
/// `rho / (2 |x_r|^2) (y_r - V_r x_r)^2`, so the update reduces to a QP over
/// the trajectory. Rows with `x_r = 0` keep `Phi_r = V_r` and `y_r = 0`.
pub struct RowSolver<T: Scalar> {
    allowed: Vec<Vec<usize>>,
    xs: Vec<DVector<T>>,
    xs_sq: Vec<T>,
    /// QP variable of each own row, `None` when the row is fixed at zero.
    own_var: Vec<Option<usize>>,
    shared_var: Vec<Option<usize>>,
    held_var: Vec<usize>,
    weight: Vec<T>,
    mu: T,
    g_cost: DVector<T>,
    qp: PreparedQp<T>,
    warm: Option<QpSolution<T>>,
}

impl<T: Scalar> RowSolver<T> {
    pub fn new(
        lp: &LocalProblem<T>,
        layout: &RowLayout,
        rho: T,
        consensus: Option<(&ConsensusLayout, T)>,
        settings: QpSettings,
    ) -> Result<Self> {
        let i = layout.subsystem;
        let obj = &lp.objective;
        if lp.subsystem != i || obj.subsystem != i {
            return Err(Error::InvalidArgument(format!("local problem of {} given to row solver of {i}", lp.subsystem)));
        }
        if lp.x0.len() != layout.width() {
            return Err(Error::Dimension(format!("x0 slice has {} entries, row support {}", lp.x0.len(), layout.width())));
        }
        let own_pos = obj.footprint.position(i).expect("footprint contains owner");
        if obj.footprint.layout(own_pos).len() != layout.len() {
            return Err(Error::Dimension("objective trajectory does not match the owned rows".into()));
        }

        let xs: Vec<DVector<T>> =
            layout.allowed.iter().map(|a| DVector::from_iterator(a.len(), a.iter().map(|&p| lp.x0[p]))).collect();
        let xs_sq: Vec<T> = xs.iter().map(|x| x.norm_squared()).collect();
        let mut nvar = 0;
        let own_var: Vec<Option<usize>> = xs_sq
            .iter()
            .map(|&s| {
                (s > T::zero()).then(|| {
                    nvar += 1;
                    nvar - 1
                })
            })
            .collect();
        let weight: Vec<T> = xs_sq.iter().filter(|&&s| s > T::zero()).map(|&s| rho / s).collect();

        let (cl, mu) = match consensus {
            Some((cl, mu)) => (Some(cl), mu),
            None => (None, T::zero()),
        };
        let held_var: Vec<usize> = match cl {
            Some(cl) => (0..cl.held.len()).map(|k| nvar + k).collect(),
            None => Vec::new(),
        };
        nvar += held_var.len();
        let shared_var: Vec<Option<usize>> = match cl {
            Some(cl) => cl.shared.iter().map(|s| own_var[s.local]).collect(),
            None => Vec::new(),
        };

        // Map footprint entries to QP variables.
        let own_offset = obj.footprint.offset(own_pos);
        let mut map: Vec<Option<usize>> = vec![None; obj.footprint.len()];
        let mut foreign_used = vec![false; obj.footprint.len()];
        for (k, slot) in map.iter_mut().enumerate() {
            let (j, local) = obj.footprint.locate(k);
            if j == i {
                *slot = own_var[k - own_offset];
                debug_assert_eq!(k - own_offset, local);
            } else if let Some(cl) = cl {
                let row = obj.footprint.global_row(k);
                if let Some(h) = cl.held_index(j, row) {
                    *slot = Some(held_var[h]);
                    foreign_used[k] = true;
                }
            }
        }
        let referenced = obj.referenced();
        for k in 0..obj.footprint.len() {
            let (j, _) = obj.footprint.locate(k);
            if j != i && !foreign_used[k] && referenced[k] {
                return Err(Error::InvalidArgument(format!(
                    "objective of subsystem {i} couples subsystem {j}; a consensus layout holding that entry is required"
                )));
            }
        }

        let mut h = DMatrix::zeros(nvar, nvar);
        let mut g_cost = DVector::zeros(nvar);
        for k in 0..map.len() {
            let Some(vk) = map[k] else { continue };
            g_cost[vk] += obj.cost.g[k];
            for l in 0..map.len() {
                if let Some(vl) = map[l] {
                    h[(vk, vl)] += obj.cost.h[(k, l)];
                }
            }
        }
        for (r, v) in own_var.iter().enumerate() {
            if let Some(v) = v {
                h[(*v, *v)] += rho / xs_sq[r];
            }
        }
        for v in shared_var.iter().flatten().chain(held_var.iter()) {
            h[(*v, *v)] += mu;
        }
        let remap = |m: &DMatrix<T>| {
            let mut out = DMatrix::zeros(m.nrows(), nvar);
            for (k, v) in map.iter().enumerate() {
                if let Some(v) = v {
                    for r in 0..m.nrows() {
                        out[(r, *v)] += m[(r, k)];
                    }
                }
            }
            out
        };
        let polytope = Polytope::new(
            remap(&obj.constraints.g),
            obj.constraints.h.clone(),
            remap(&obj.constraints.aeq),
            obj.constraints.beq.clone(),
        )?;
        let qp = PreparedQp::new(&h, &polytope, settings)?;
        Ok(Self {
            allowed: layout.allowed.clone(),
            xs,
            xs_sq,
            own_var,
            shared_var,
            held_var,
            weight,
            mu,
            g_cost,
            qp,
            warm: None,
        })
    }

    pub fn variables(&self) -> usize {
        self.qp.dim()
    }

    /// Carries the QP warm start over from a previous solver with the same structure.
    pub fn inherit_warm_start(&mut self, previous: &RowSolver<T>) {
        if self.qp.accepts_warm_start_of(&previous.qp) {
            self.warm = previous.warm.clone();
        }
    }

    /// Minimizes over `Phi_i` with `V = Psi - Lambda` on the row slice.
    pub fn solve(&mut self, v: &DMatrix<T>, target: Option<ConsensusTarget<'_, T>>) -> Result<RowSolution<T>> {
        if v.nrows() != self.allowed.len() {
            return Err(Error::Dimension(format!("row slice has {} rows, expected {}", v.nrows(), self.allowed.len())));
        }
        let vhat: Vec<T> = self
            .allowed
            .iter()
            .zip(&self.xs)
            .enumerate()
            .map(|(r, (a, x))| a.iter().zip(x.iter()).fold(T::zero(), |acc, (&p, &xv)| acc + v[(r, p)] * xv))
            .collect();
        let mut g = self.g_cost.clone();
        let mut w = self.weight.iter();
        for (r, var) in self.own_var.iter().enumerate() {
            if let Some(var) = var {
                g[*var] -= *w.next().expect("weight per free row") * vhat[r];
            }
        }
        match target {
            Some(t) => {
                if t.own.len() != self.shared_var.len() || t.held.len() != self.held_var.len() {
                    return Err(Error::Dimension("consensus target does not match the layout".into()));
                }
                for (var, &zy) in self.shared_var.iter().zip(t.own) {
                    if let Some(var) = var {
                        g[*var] -= self.mu * zy;
                    }
                }
                for (&var, &zy) in self.held_var.iter().zip(t.held) {
                    g[var] -= self.mu * zy;
                }
            }
            None if !self.held_var.is_empty() || !self.shared_var.is_empty() => {
                return Err(Error::InvalidArgument("consensus row update needs Z - Y targets".into()));
            }
            None => {}
        }
        let sol = self.qp.solve(&g, self.warm.as_ref())?;
        let mut phi = v.clone();
        let mut own = DVector::zeros(self.allowed.len());
        for (r, var) in self.own_var.iter().enumerate() {
            if let Some(var) = var {
                let y = sol.x[*var];
                own[r] = y;
                let scale = (y - vhat[r]) / self.xs_sq[r];
                for (&p, &xv) in self.allowed[r].iter().zip(self.xs[r].iter()) {
                    phi[(r, p)] += scale * xv;
                }
            }
        }
        let held = DVector::from_iterator(self.held_var.len(), self.held_var.iter().map(|&v| sol.x[v]));
        self.warm = Some(sol);
        Ok(RowSolution { phi, own, held })
    }
}

/// Row update without coupling: `argmin f_i(Phi_i x0) + rho/2 |Phi_i - Psi_i + Lambda_i|^2`
/// subject to the local polytope.
pub fn row_update<T: Scalar>(solver: &mut RowSolver<T>, psi: &DMatrix<T>, lambda: &DMatrix<T>) -> Result<DMatrix<T>> {
    if psi.shape() != lambda.shape() {
        return Err(Error::Dimension("psi and lambda slices differ in shape".into()));
    }
    Ok(solver.solve(&(psi - lambda), None)?.phi)
}
