use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernels::{Polytope, PreparedQp, QpSettings, QuadraticCost};
use crate::model::SystemModel;
use crate::problem::MpcProblem;
use crate::sls::{HorizonSpec, Trajectory};
use crate::Scalar;

/// The whole MPC instance as one QP over the stacked trajectory in `Phi` row
/// order, without dynamics. Identical constraint rows are merged.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalQp<T: Scalar> {
    pub cost: QuadraticCost<T>,
    pub constraints: Polytope<T>,
}

fn dedup_rows<T: Scalar>(dim: usize, rows: Vec<(Vec<T>, T)>) -> (DMatrix<T>, DVector<T>) {
    let mut seen = HashSet::new();
    let kept: Vec<(Vec<T>, T)> = rows
        .into_iter()
        .filter(|(a, b)| seen.insert(a.iter().chain(std::iter::once(b)).map(|v| v.as_f64().to_bits()).collect::<Vec<u64>>()))
        .collect();
    let m = DMatrix::from_fn(kept.len(), dim, |r, c| kept[r].0[c]);
    let v = DVector::from_iterator(kept.len(), kept.iter().map(|(_, b)| *b));
    (m, v)
}

/// Sums the subsystem objectives into one QP on the global trajectory.
pub fn assemble_global<T: Scalar>(problem: &MpcProblem<T>) -> Result<GlobalQp<T>> {
    let dim = problem.horizon.rows();
    let mut cost = QuadraticCost::zeros(dim);
    let mut ineq = Vec::new();
    let mut eq = Vec::new();
    for obj in &problem.objectives {
        let map: Vec<usize> = (0..obj.footprint.len()).map(|k| obj.footprint.global_row(k)).collect();
        for (a, &ra) in map.iter().enumerate() {
            cost.g[ra] += obj.cost.g[a];
            for (b, &rb) in map.iter().enumerate() {
                cost.h[(ra, rb)] += obj.cost.h[(a, b)];
            }
        }
        cost.c += obj.cost.c;
        let scatter = |row: nalgebra::DMatrixView<T>| {
            let mut out = vec![T::zero(); dim];
            for (a, &ra) in map.iter().enumerate() {
                out[ra] += row[(0, a)];
            }
            out
        };
        let p = &obj.constraints;
        for r in 0..p.inequalities() {
            ineq.push((scatter(p.g.rows(r, 1)), p.h[r]));
        }
        for r in 0..p.equalities() {
            eq.push((scatter(p.aeq.rows(r, 1)), p.beq[r]));
        }
    }
    let (g, h) = dedup_rows(dim, ineq);
    let (aeq, beq) = dedup_rows(dim, eq);
    Ok(GlobalQp { cost, constraints: Polytope::new(g, h, aeq, beq)? })
}

/// Oracle solution of one MPC instance.
#[derive(Debug, Clone, PartialEq)]
pub struct CentralizedSolution<T: Scalar> {
    /// Stacked trajectory in `Phi` row order.
    pub stacked: DVector<T>,
    pub trajectory: Trajectory<T>,
    pub objective: T,
    /// Largest primal or dual residual reported by the QP solver.
    pub residual: f64,
}

impl<T: Scalar> CentralizedSolution<T> {
    fn new(h: &HorizonSpec, stacked: DVector<T>, objective: T, residual: f64) -> Result<Self> {
        Ok(Self { trajectory: Trajectory::from_stacked(h, &stacked)?, stacked, objective, residual })
    }

    /// First input `u_0`.
    pub fn first_input(&self) -> &DVector<T> {
        &self.trajectory.inputs[0]
    }
}

fn oracle_settings(settings: QpSettings) -> QpSettings {
    QpSettings { tol: settings.tol.min(1e-10), ..settings }
}

fn dynamics_rows<T: Scalar>(model: &SystemModel<T>, h: &HorizonSpec, x0: &DVector<T>) -> (DMatrix<T>, DVector<T>) {
    let (n, p, steps) = (h.n(), h.p(), h.horizon());
    let a = model.dense_a();
    let b = model.dense_b();
    let mut m = DMatrix::zeros(n * (steps + 1), h.rows());
    let mut v = DVector::zeros(n * (steps + 1));
    for k in 0..n {
        m[(k, h.x_row(0, k))] = T::one();
        v[k] = x0[k];
    }
    for t in 0..steps {
        for k in 0..n {
            let r = n * (t + 1) + k;
            m[(r, h.x_row(t + 1, k))] = T::one();
            for l in 0..n {
                m[(r, h.x_row(t, l))] -= a[(k, l)];
            }
            for l in 0..p {
                m[(r, h.u_row(t, l))] -= b[(k, l)];
            }
        }
    }
    (m, v)
}

/// Solves the MPC instance over stacked `(x, u)` with the dynamics as
/// equality constraints.
pub fn solve_centralized<T: Scalar>(problem: &MpcProblem<T>) -> Result<CentralizedSolution<T>> {
    solve_centralized_with(problem, QpSettings::default())
}

pub fn solve_centralized_with<T: Scalar>(problem: &MpcProblem<T>, settings: QpSettings) -> Result<CentralizedSolution<T>> {
    let h = problem.horizon;
    let global = assemble_global(problem)?;
    let (dyn_m, dyn_v) = dynamics_rows(&problem.model, &h, &problem.x0);
    let c = &global.constraints;
    let aeq = DMatrix::from_fn(c.aeq.nrows() + dyn_m.nrows(), h.rows(), |r, k| {
        if r < dyn_m.nrows() { dyn_m[(r, k)] } else { c.aeq[(r - dyn_m.nrows(), k)] }
    });
    let beq = DVector::from_fn(aeq.nrows(), |r, _| if r < dyn_v.len() { dyn_v[r] } else { c.beq[r - dyn_v.len()] });
    let polytope = Polytope::new(c.g.clone(), c.h.clone(), aeq, beq)?;
    let qp = PreparedQp::new(&global.cost.h, &polytope, oracle_settings(settings))?;
    let sol = qp.solve(&global.cost.g, None)?;
    let objective = global.cost.eval(&sol.x);
    CentralizedSolution::new(&h, sol.x, objective, sol.primal_residual.max(sol.dual_residual))
}

struct Condensed<T: Scalar> {
    hessian: DMatrix<T>,
    g: DMatrix<T>,
    aeq: DMatrix<T>,
    qp: PreparedQp<T>,
}

/// Centralized solver in input variables only, `y = S u + E x0`, reusing its
/// factorization while the cost and constraint matrices stay the same.
pub struct CondensedOracle<T: Scalar> {
    horizon: HorizonSpec,
    settings: QpSettings,
    s: DMatrix<T>,
    e: DMatrix<T>,
    cached: Option<Condensed<T>>,
    rebuilds: usize,
}

impl<T: Scalar> CondensedOracle<T> {
    pub fn new(model: &SystemModel<T>, horizon: usize, settings: QpSettings) -> Result<Self> {
        let h = HorizonSpec::for_partition(horizon, model.partition())?;
        let (n, p, steps) = (h.n(), h.p(), h.horizon());
        let a = model.dense_a();
        let b = model.dense_b();
        let mut s = DMatrix::zeros(h.rows(), p * steps);
        let mut e = DMatrix::zeros(h.rows(), n);
        let mut power = DMatrix::identity(n, n);
        for t in 0..=steps {
            e.view_mut((h.x_row(t, 0), 0), (n, n)).copy_from(&power);
            power = &a * power;
        }
        // Column block of u_s: zero until t = s, then A^{t-1-s} B.
        for u in 0..steps {
            let mut block = b.clone();
            for t in (u + 1)..=steps {
                s.view_mut((h.x_row(t, 0), u * p), (n, p)).copy_from(&block);
                block = &a * block;
            }
            for l in 0..p {
                s[(h.u_row(u, l), u * p + l)] = T::one();
            }
        }
        Ok(Self { horizon: h, settings: oracle_settings(settings), s, e, cached: None, rebuilds: 0 })
    }

    /// Number of factorizations performed so far.
    pub fn rebuilds(&self) -> usize {
        self.rebuilds
    }

    pub fn solve(&mut self, problem: &MpcProblem<T>) -> Result<CentralizedSolution<T>> {
        if problem.horizon != self.horizon {
            return Err(Error::Dimension("problem horizon does not match the oracle".into()));
        }
        let global = assemble_global(problem)?;
        let c = &global.constraints;
        let stale = match &self.cached {
            Some(k) => k.hessian != global.cost.h || k.g != c.g || k.aeq != c.aeq,
            None => true,
        };
        if stale {
            let hu = self.s.transpose() * &global.cost.h * &self.s;
            let hu = (&hu + hu.transpose()) * T::lit(0.5);
            let gs = &c.g * &self.s;
            let aeqs = &c.aeq * &self.s;
            let polytope = Polytope::new(gs, c.h.clone(), aeqs, c.beq.clone())?;
            let qp = PreparedQp::new(&hu, &polytope, self.settings)?;
            self.cached = Some(Condensed { hessian: global.cost.h.clone(), g: c.g.clone(), aeq: c.aeq.clone(), qp });
            self.rebuilds += 1;
        }
        let cached = self.cached.as_ref().expect("cache filled above");
        let free = &self.e * &problem.x0;
        let gu = self.s.transpose() * (&global.cost.h * &free + &global.cost.g);
        let hb = &c.h - &c.g * &free;
        let beq = &c.beq - &c.aeq * &free;
        let sol = cached.qp.solve_with_bounds(&gu, Some(&hb), Some(&beq), None)?;
        let stacked = &self.s * &sol.x + free;
        let objective = global.cost.eval(&stacked);
        CentralizedSolution::new(&self.horizon, stacked, objective, sol.primal_residual.max(sol.dual_residual))
    }
}
