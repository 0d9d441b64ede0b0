use nalgebra::{Cholesky, DMatrix, DVector, Dyn, LU};
use petgraph::unionfind::UnionFind;

use crate::error::{Error, Result};
use crate::Scalar;

/// `1/2 z' H z + g' z + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticCost<T: Scalar> {
    pub h: DMatrix<T>,
    pub g: DVector<T>,
    pub c: T,
}

impl<T: Scalar> QuadraticCost<T> {
    pub fn zeros(dim: usize) -> Self {
        Self { h: DMatrix::zeros(dim, dim), g: DVector::zeros(dim), c: T::zero() }
    }

    pub fn dim(&self) -> usize {
        self.g.len()
    }

    pub fn eval(&self, z: &DVector<T>) -> T {
        (z.transpose() * &self.h * z)[(0, 0)] * T::lit(0.5) + self.g.dot(z) + self.c
    }

    /// Adds `weight * (a' z - b)^2` for a sparse row `a`.
    pub fn add_squared_residual(&mut self, a: &[(usize, T)], b: T, weight: T) {
        let two = T::lit(2.0);
        for &(i, ai) in a {
            for &(j, aj) in a {
                self.h[(i, j)] += two * weight * ai * aj;
            }
            self.g[i] -= two * weight * ai * b;
        }
        self.c += weight * b * b;
    }
}

/// `{z : G z <= h, A_eq z = b_eq}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Polytope<T: Scalar> {
    pub g: DMatrix<T>,
    pub h: DVector<T>,
    pub aeq: DMatrix<T>,
    pub beq: DVector<T>,
}

impl<T: Scalar> Polytope<T> {
    pub fn unconstrained(dim: usize) -> Self {
        Self { g: DMatrix::zeros(0, dim), h: DVector::zeros(0), aeq: DMatrix::zeros(0, dim), beq: DVector::zeros(0) }
    }

    pub fn new(g: DMatrix<T>, h: DVector<T>, aeq: DMatrix<T>, beq: DVector<T>) -> Result<Self> {
        if g.nrows() != h.len() || aeq.nrows() != beq.len() || g.ncols() != aeq.ncols() {
            return Err(Error::Dimension("polytope blocks have inconsistent shapes".into()));
        }
        let finite = g.iter().chain(h.iter()).chain(aeq.iter()).chain(beq.iter()).all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidArgument("polytope has non-finite entries".into()));
        }
        Ok(Self { g, h, aeq, beq })
    }

    /// Builds from sparse rows `(coefficients, bound)`.
    pub fn from_rows(dim: usize, ineq: &[(Vec<(usize, T)>, T)], eq: &[(Vec<(usize, T)>, T)]) -> Result<Self> {
        let dense = |rows: &[(Vec<(usize, T)>, T)]| -> Result<(DMatrix<T>, DVector<T>)> {
            let mut m = DMatrix::zeros(rows.len(), dim);
            let mut b = DVector::zeros(rows.len());
            for (r, (coeffs, bound)) in rows.iter().enumerate() {
                for &(c, v) in coeffs {
                    if c >= dim {
                        return Err(Error::Dimension(format!("constraint references variable {c} of {dim}")));
                    }
                    m[(r, c)] += v;
                }
                b[r] = *bound;
            }
            Ok((m, b))
        };
        let (g, h) = dense(ineq)?;
        let (aeq, beq) = dense(eq)?;
        Self::new(g, h, aeq, beq)
    }

    pub fn dim(&self) -> usize {
        self.g.ncols()
    }

    pub fn is_unconstrained(&self) -> bool {
        self.g.nrows() == 0 && self.aeq.nrows() == 0
    }

    pub fn inequalities(&self) -> usize {
        self.g.nrows()
    }

    pub fn equalities(&self) -> usize {
        self.aeq.nrows()
    }

    /// Largest violation of any row at `z` (zero when feasible).
    pub fn max_violation(&self, z: &DVector<T>) -> T {
        let ineq = (&self.g * z - &self.h).iter().copied().fold(T::zero(), T::max);
        let eq = if self.aeq.nrows() > 0 { (&self.aeq * z - &self.beq).amax() } else { T::zero() };
        ineq.max(eq)
    }
}

/// Operator-splitting parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpSettings {
    /// Fixed penalty on the inequality splitting.
    pub rho: f64,
    /// Proximal regularization of the primal step.
    pub sigma: f64,
    /// Relaxation; 1.0 disables over-relaxation.
    pub alpha: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Try an exact equality-constrained solve on the estimated active set.
    pub polish: bool,
    /// Residual, infeasibility and polish checks run every this many iterations.
    pub check_every: usize,
    /// Relative threshold for the infeasibility certificate.
    pub infeasibility_tol: f64,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            rho: 1.0,
            sigma: 1e-6,
            alpha: 1.0,
            tol: 1e-8,
            max_iter: 10_000,
            polish: true,
            check_every: 10,
            infeasibility_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution<T: Scalar> {
    pub x: DVector<T>,
    /// Multipliers of `G z <= h`, nonnegative.
    pub ineq_dual: DVector<T>,
    /// Multipliers of `A_eq z = b_eq` in the convention `H z + g + G' y + A_eq' nu = 0`.
    pub eq_dual: DVector<T>,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

enum Factor<T: Scalar> {
    Cholesky(Cholesky<T, Dyn>),
    Lu(LU<T, Dyn, Dyn>),
}

impl<T: Scalar> Factor<T> {
    fn solve(&self, rhs: &DVector<T>) -> DVector<T> {
        match self {
            Factor::Cholesky(c) => c.solve(rhs),
            Factor::Lu(lu) => lu.solve(rhs).expect("factorization checked for singularity"),
        }
    }
}

fn lu_checked<T: Scalar>(m: DMatrix<T>) -> Result<LU<T, Dyn, Dyn>> {
    let size = m.nrows();
    let lu = m.lu();
    let diag = lu.u().diagonal();
    let largest = diag.iter().map(|v| v.magnitude()).fold(T::zero(), T::max);
    let smallest = diag.iter().map(|v| v.magnitude()).fold(largest, T::min);
    let cutoff = largest * T::from_usize_lossy(size.max(1)) * T::machine_epsilon();
    if size > 0 && (largest == T::zero() || smallest <= cutoff) {
        let rank = diag.iter().filter(|v| v.magnitude() > cutoff).count();
        let ratio = if largest == T::zero() { 0.0 } else { (smallest / largest).as_f64() };
        return Err(Error::SingularKkt { size, rank, pivot_ratio: ratio });
    }
    Ok(lu)
}

/// Factors `[K A'; A 0]`, using Cholesky on `K` when there are no equalities.
fn factor_kkt<T: Scalar>(k: &DMatrix<T>, aeq: &DMatrix<T>) -> Result<Factor<T>> {
    let q = k.nrows();
    let m = aeq.nrows();
    if m == 0 {
        if let Some(c) = Cholesky::new(k.clone()) {
            return Ok(Factor::Cholesky(c));
        }
        return Ok(Factor::Lu(lu_checked(k.clone())?));
    }
    let mut kkt = DMatrix::zeros(q + m, q + m);
    kkt.view_mut((0, 0), (q, q)).copy_from(k);
    kkt.view_mut((q, 0), (m, q)).copy_from(aeq);
    kkt.view_mut((0, q), (q, m)).copy_from(&aeq.transpose());
    Ok(Factor::Lu(lu_checked(kkt)?))
}

fn stack<T: Scalar>(top: &DVector<T>, bottom: &DVector<T>) -> DVector<T> {
    let mut out = DVector::zeros(top.len() + bottom.len());
    out.rows_mut(0, top.len()).copy_from(top);
    out.rows_mut(top.len(), bottom.len()).copy_from(bottom);
    out
}

/// Minimizer and multipliers of `1/2 z'Hz + g'z` subject to `A z = b`, from
/// one KKT solve with a refinement step.
pub fn solve_eq_qp_with_duals<T: Scalar>(
    h: &DMatrix<T>,
    g: &DVector<T>,
    aeq: &DMatrix<T>,
    beq: &DVector<T>,
) -> Result<(DVector<T>, DVector<T>)> {
    let q = g.len();
    if h.shape() != (q, q) || aeq.ncols() != q || aeq.nrows() != beq.len() {
        return Err(Error::Dimension(format!(
            "QP data: H {:?}, g {}, A_eq {:?}, b_eq {}",
            h.shape(),
            q,
            aeq.shape(),
            beq.len()
        )));
    }
    let factor = factor_kkt(h, aeq)?;
    let rhs = stack(&-g, beq);
    let mut sol = factor.solve(&rhs);
    let residual = kkt_apply(h, aeq, &sol) - &rhs;
    sol -= factor.solve(&residual);
    let x = sol.rows(0, q).into_owned();
    let nu = sol.rows(q, aeq.nrows()).into_owned();
    Ok((x, nu))
}

fn kkt_apply<T: Scalar>(h: &DMatrix<T>, aeq: &DMatrix<T>, sol: &DVector<T>) -> DVector<T> {
    let q = h.nrows();
    let x = sol.rows(0, q);
    let nu = sol.rows(q, aeq.nrows());
    let top = h * x + aeq.transpose() * nu;
    let bottom = aeq * x;
    stack(&top, &bottom)
}

/// Minimizer of `1/2 z'Hz + g'z` subject to `A z = b`.
pub fn solve_eq_qp<T: Scalar>(h: &DMatrix<T>, g: &DVector<T>, aeq: &DMatrix<T>, beq: &DVector<T>) -> Result<DVector<T>> {
    solve_eq_qp_with_duals(h, g, aeq, beq).map(|(x, _)| x)
}

/// Minimizer of `1/2 z'Hz + g'z` over a polytope, with default settings.
pub fn solve_qp<T: Scalar>(h: &DMatrix<T>, g: &DVector<T>, p: &Polytope<T>) -> Result<DVector<T>> {
    Ok(PreparedQp::new(h, p, QpSettings::default())?.solve(g, None)?.x)
}

pub fn solve_qp_with<T: Scalar>(
    h: &DMatrix<T>,
    g: &DVector<T>,
    p: &Polytope<T>,
    settings: QpSettings,
    warm: Option<&QpSolution<T>>,
) -> Result<QpSolution<T>> {
    PreparedQp::new(h, p, settings)?.solve(g, warm)
}

/// Largest `variables + inequality rows` of a component solved by active-set steps before splitting.
const ACTIVE_SET_SIZE: usize = 64;

struct Component<T: Scalar> {
    vars: Vec<usize>,
    ineq: Vec<usize>,
    eq: Vec<usize>,
    h: DMatrix<T>,
    g: DMatrix<T>,
    bound: DVector<T>,
    aeq: DMatrix<T>,
    beq: DVector<T>,
    factor: Factor<T>,
}

/// A QP with fixed `H` and constraints, factored once and solved for many
/// linear terms.
///
/// Variables are split into independent groups (connected through `H`,
/// inequality rows or equality rows) which are solved separately.
pub struct PreparedQp<T: Scalar> {
    dim: usize,
    ineq_count: usize,
    eq_count: usize,
    empty_ineq: Vec<usize>,
    empty_eq: Vec<usize>,
    settings: QpSettings,
    components: Vec<Component<T>>,
}

impl<T: Scalar> PreparedQp<T> {
    pub fn new(h: &DMatrix<T>, p: &Polytope<T>, settings: QpSettings) -> Result<Self> {
        let q = p.dim();
        if h.shape() != (q, q) {
            return Err(Error::Dimension(format!("H is {:?}, polytope has {q} variables", h.shape())));
        }
        if !h.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("H has non-finite entries".into()));
        }
        let mut uf = UnionFind::<usize>::new(q);
        for i in 0..q {
            for j in i + 1..q {
                if h[(i, j)] != T::zero() || h[(j, i)] != T::zero() {
                    uf.union(i, j);
                }
            }
        }
        let row_vars = |m: &DMatrix<T>, r: usize| -> Vec<usize> { (0..q).filter(|&c| m[(r, c)] != T::zero()).collect() };
        let mut ineq_owner = Vec::with_capacity(p.inequalities());
        let mut empty_ineq = Vec::new();
        let mut empty_eq = Vec::new();
        for r in 0..p.inequalities() {
            let vars = row_vars(&p.g, r);
            if vars.is_empty() && p.h[r] < T::zero() {
                return Err(Error::QpInfeasible { iterations: 0, certificate: p.h[r].as_f64() });
            }
            for w in vars.windows(2) {
                uf.union(w[0], w[1]);
            }
            if vars.is_empty() {
                empty_ineq.push(r);
            }
            ineq_owner.push(vars.first().copied());
        }
        let mut eq_owner = Vec::with_capacity(p.equalities());
        for r in 0..p.equalities() {
            let vars = row_vars(&p.aeq, r);
            if vars.is_empty() && p.beq[r] != T::zero() {
                return Err(Error::QpInfeasible { iterations: 0, certificate: p.beq[r].magnitude().as_f64() });
            }
            for w in vars.windows(2) {
                uf.union(w[0], w[1]);
            }
            if vars.is_empty() {
                empty_eq.push(r);
            }
            eq_owner.push(vars.first().copied());
        }

        let labels = uf.into_labeling();
        let mut group_of = vec![usize::MAX; q];
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for v in 0..q {
            let root = labels[v];
            if group_of[root] == usize::MAX {
                group_of[root] = groups.len();
                groups.push(Vec::new());
            }
            groups[group_of[root]].push(v);
        }
        let mut ineq_rows = vec![Vec::new(); groups.len()];
        for (r, owner) in ineq_owner.iter().enumerate() {
            if let Some(v) = owner {
                ineq_rows[group_of[labels[*v]]].push(r);
            }
        }
        let mut eq_rows = vec![Vec::new(); groups.len()];
        for (r, owner) in eq_owner.iter().enumerate() {
            if let Some(v) = owner {
                eq_rows[group_of[labels[*v]]].push(r);
            }
        }

        let mut components = Vec::with_capacity(groups.len());
        for ((vars, ineq), eq) in groups.into_iter().zip(ineq_rows).zip(eq_rows) {
            let hc = DMatrix::from_fn(vars.len(), vars.len(), |a, b| h[(vars[a], vars[b])]);
            let gc = DMatrix::from_fn(ineq.len(), vars.len(), |a, b| p.g[(ineq[a], vars[b])]);
            let bound = DVector::from_fn(ineq.len(), |a, _| p.h[ineq[a]]);
            let aeq = DMatrix::from_fn(eq.len(), vars.len(), |a, b| p.aeq[(eq[a], vars[b])]);
            let beq = DVector::from_fn(eq.len(), |a, _| p.beq[eq[a]]);
            let factor = if ineq.is_empty() {
                factor_kkt(&hc, &aeq)?
            } else {
                let mut k = &hc + gc.transpose() * &gc * T::lit(settings.rho);
                for d in 0..vars.len() {
                    k[(d, d)] += T::lit(settings.sigma);
                }
                factor_kkt(&k, &aeq)?
            };
            components.push(Component { vars, ineq, eq, h: hc, g: gc, bound, aeq, beq, factor });
        }
        Ok(Self { dim: q, ineq_count: p.inequalities(), eq_count: p.equalities(), empty_ineq, empty_eq, settings, components })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn inequalities(&self) -> usize {
        self.ineq_count
    }

    pub fn equalities(&self) -> usize {
        self.eq_count
    }

    /// Whether a solution of `other` can warm-start this problem.
    pub fn accepts_warm_start_of(&self, other: &PreparedQp<T>) -> bool {
        self.dim == other.dim && self.ineq_count == other.ineq_count && self.eq_count == other.eq_count
    }

    /// Number of independent variable groups.
    pub fn component_count(&self) -> usize {
        self.components.len()
    }

    pub fn solve(&self, g: &DVector<T>, warm: Option<&QpSolution<T>>) -> Result<QpSolution<T>> {
        self.solve_with_bounds(g, None, None, warm)
    }

    /// Solves with the inequality bound `h` and/or equality right-hand side
    /// `beq` replaced; `G`, `Aeq` and the factorizations are reused.
    pub fn solve_with_bounds(
        &self,
        g: &DVector<T>,
        h: Option<&DVector<T>>,
        beq: Option<&DVector<T>>,
        warm: Option<&QpSolution<T>>,
    ) -> Result<QpSolution<T>> {
        if h.is_some_and(|h| h.len() != self.ineq_count) || beq.is_some_and(|b| b.len() != self.eq_count) {
            return Err(Error::Dimension("bound override does not match the constraint count".into()));
        }
        if let Some(h) = h {
            if let Some(&r) = self.empty_ineq.iter().find(|&&r| h[r] < T::zero()) {
                return Err(Error::QpInfeasible { iterations: 0, certificate: h[r].as_f64() });
            }
        }
        if let Some(beq) = beq {
            if let Some(&r) = self.empty_eq.iter().find(|&&r| beq[r] != T::zero()) {
                return Err(Error::QpInfeasible { iterations: 0, certificate: beq[r].magnitude().as_f64() });
            }
        }
        if g.len() != self.dim {
            return Err(Error::Dimension(format!("linear term has {} entries, expected {}", g.len(), self.dim)));
        }
        if let Some(w) = warm {
            if w.x.len() != self.dim || w.ineq_dual.len() != self.ineq_count || w.eq_dual.len() != self.eq_count {
                return Err(Error::Dimension("warm start does not match the problem".into()));
            }
        }
        let mut out = QpSolution {
            x: DVector::zeros(self.dim),
            ineq_dual: DVector::zeros(self.ineq_count),
            eq_dual: DVector::zeros(self.eq_count),
            iterations: 0,
            primal_residual: 0.0,
            dual_residual: 0.0,
        };
        for comp in &self.components {
            let gc = DVector::from_fn(comp.vars.len(), |a, _| g[comp.vars[a]]);
            let bound_c = h.map(|h| DVector::from_fn(comp.ineq.len(), |a, _| h[comp.ineq[a]]));
            let beq_c = beq.map(|b| DVector::from_fn(comp.eq.len(), |a, _| b[comp.eq[a]]));
            let bound_c = bound_c.as_ref().unwrap_or(&comp.bound);
            let beq_c = beq_c.as_ref().unwrap_or(&comp.beq);
            let sol = if comp.ineq.is_empty() {
                comp.solve_direct(&gc, beq_c)?
            } else {
                let warm_c = warm.map(|w| {
                    (
                        DVector::from_fn(comp.vars.len(), |a, _| w.x[comp.vars[a]]),
                        DVector::from_fn(comp.ineq.len(), |a, _| w.ineq_dual[comp.ineq[a]]),
                        DVector::from_fn(comp.eq.len(), |a, _| w.eq_dual[comp.eq[a]]),
                    )
                });
                comp.solve_splitting(bound_c, beq_c, &gc, warm_c, &self.settings)?
            };
            for (a, &v) in comp.vars.iter().enumerate() {
                out.x[v] = sol.x[a];
            }
            for (a, &r) in comp.ineq.iter().enumerate() {
                out.ineq_dual[r] = sol.ineq_dual[a];
            }
            for (a, &r) in comp.eq.iter().enumerate() {
                out.eq_dual[r] = sol.eq_dual[a];
            }
            out.iterations = out.iterations.max(sol.iterations);
            out.primal_residual = out.primal_residual.max(sol.primal_residual);
            out.dual_residual = out.dual_residual.max(sol.dual_residual);
        }
        Ok(out)
    }
}

impl<T: Scalar> Component<T> {
    fn solve_direct(&self, g: &DVector<T>, beq: &DVector<T>) -> Result<QpSolution<T>> {
        let rhs = stack(&-g, beq);
        let mut sol = self.factor.solve(&rhs);
        let residual = kkt_apply(&self.h, &self.aeq, &sol) - &rhs;
        sol -= self.factor.solve(&residual);
        let q = self.vars.len();
        let m = self.eq.len();
        let x = sol.rows(0, q).into_owned();
        let nu = sol.rows(q, m).into_owned();
        // Residuals before refinement bound the refined ones.
        let amax = |v: nalgebra::DVectorView<T>| if v.is_empty() { 0.0 } else { v.amax().as_f64() };
        let dual_residual = amax(residual.rows(0, q));
        let primal_residual = amax(residual.rows(q, m));
        Ok(QpSolution { x, ineq_dual: DVector::zeros(0), eq_dual: nu, iterations: 0, primal_residual, dual_residual })
    }

    /// Infinity-norm primal and dual residuals, with `z` the split copy of `G x`.
    fn residuals(&self, beq: &DVector<T>, g: &DVector<T>, x: &DVector<T>, z: DVector<T>, y: &DVector<T>, nu: &DVector<T>) -> (f64, f64) {
        let gx = &self.g * x;
        let mut primal = if gx.is_empty() { T::zero() } else { (&gx - z).amax() };
        if !self.eq.is_empty() {
            primal = primal.max((&self.aeq * x - beq).amax());
        }
        let stat = &self.h * x + g + self.g.transpose() * y + self.aeq.transpose() * nu;
        let dual = if stat.is_empty() { T::zero() } else { stat.amax() };
        (primal.as_f64(), dual.as_f64())
    }

    fn tolerances(&self, beq: &DVector<T>, g: &DVector<T>, x: &DVector<T>, z: &DVector<T>, y: &DVector<T>, tol: f64) -> (f64, f64) {
        let norm = |v: DVector<T>| if v.is_empty() { 0.0 } else { v.amax().as_f64() };
        let primal_scale = norm(&self.g * x).max(norm(z.clone())).max(norm(beq.clone()));
        let dual_scale = norm(&self.h * x).max(norm(g.clone())).max(norm(self.g.transpose() * y));
        (tol * (1.0 + primal_scale), tol * (1.0 + dual_scale))
    }

    /// Exact solve with the rows flagged in `active` held at equality.
    fn polish(&self, bound: &DVector<T>, beq: &DVector<T>, g: &DVector<T>, active: &[bool], tol: f64) -> Option<QpSolution<T>> {
        let act: Vec<usize> = (0..self.ineq.len()).filter(|&r| active[r]).collect();
        let q = self.vars.len();
        let m_eq = self.eq.len();
        let mut a = DMatrix::zeros(m_eq + act.len(), q);
        let mut b = DVector::zeros(m_eq + act.len());
        a.view_mut((0, 0), (m_eq, q)).copy_from(&self.aeq);
        b.rows_mut(0, m_eq).copy_from(beq);
        for (k, &r) in act.iter().enumerate() {
            a.row_mut(m_eq + k).copy_from(&self.g.row(r));
            b[m_eq + k] = bound[r];
        }
        let (x, mult) = solve_eq_qp_with_duals(&self.h, g, &a, &b).ok()?;
        let gx = &self.g * &x;
        let slack_tol = T::lit(tol) * (T::one() + bound.amax());
        if gx.iter().zip(bound.iter()).any(|(&lhs, &rhs)| lhs > rhs + slack_tol) {
            return None;
        }
        let dual_tol = T::lit(tol) * (T::one() + mult.amax());
        let mut y = DVector::zeros(self.ineq.len());
        for (k, &r) in act.iter().enumerate() {
            let v = mult[m_eq + k];
            if v < -dual_tol {
                return None;
            }
            y[r] = v.max(T::zero());
        }
        let nu = mult.rows(0, m_eq).into_owned();
        let z = gx.zip_map(bound, |l, u| l.min(u));
        let (primal_residual, dual_residual) = self.residuals(beq, g, &x, z, &y, &nu);
        let (tp, td) = self.tolerances(beq, g, &x, &gx, &y, tol);
        if primal_residual > tp || dual_residual > td {
            return None;
        }
        Some(QpSolution { x, ineq_dual: y, eq_dual: nu, iterations: 0, primal_residual, dual_residual })
    }

    /// Active-set iteration from `active`: adds the most violated row or
    /// drops the most negative multiplier until the KKT conditions hold.
    /// Gives up after a few steps or on a singular working set.
    fn active_set(&self, bound: &DVector<T>, beq: &DVector<T>, g: &DVector<T>, mut active: Vec<bool>, tol: f64) -> Option<QpSolution<T>> {
        let m = self.ineq.len();
        let slack_tol = T::lit(tol) * (T::one() + bound.amax());
        for _ in 0..(2 * m + 4) {
            let act: Vec<usize> = (0..m).filter(|&r| active[r]).collect();
            let q = self.vars.len();
            let m_eq = self.eq.len();
            let mut a = DMatrix::zeros(m_eq + act.len(), q);
            let mut b = DVector::zeros(m_eq + act.len());
            a.view_mut((0, 0), (m_eq, q)).copy_from(&self.aeq);
            b.rows_mut(0, m_eq).copy_from(beq);
            for (k, &r) in act.iter().enumerate() {
                a.row_mut(m_eq + k).copy_from(&self.g.row(r));
                b[m_eq + k] = bound[r];
            }
            let (x, mult) = solve_eq_qp_with_duals(&self.h, g, &a, &b).ok()?;
            let gx = &self.g * &x;
            let worst = (0..m).filter(|&r| !active[r]).map(|r| (r, gx[r] - bound[r])).max_by(|a, b| a.1.partial_cmp(&b.1).expect("finite"));
            if let Some((r, v)) = worst {
                if v > slack_tol {
                    active[r] = true;
                    continue;
                }
            }
            let dual_tol = T::lit(tol) * (T::one() + if mult.is_empty() { T::zero() } else { mult.amax() });
            let most_negative = act.iter().enumerate().map(|(k, &r)| (r, mult[m_eq + k])).min_by(|a, b| a.1.partial_cmp(&b.1).expect("finite"));
            if let Some((r, v)) = most_negative {
                if v < -dual_tol {
                    active[r] = false;
                    continue;
                }
            }
            let mut y = DVector::zeros(m);
            for (k, &r) in act.iter().enumerate() {
                y[r] = mult[m_eq + k].max(T::zero());
            }
            let nu = mult.rows(0, m_eq).into_owned();
            let z = gx.zip_map(bound, |l, u| l.min(u));
            let (primal_residual, dual_residual) = self.residuals(beq, g, &x, z, &y, &nu);
            let (tp, td) = self.tolerances(beq, g, &x, &gx, &y, tol);
            if primal_residual > tp || dual_residual > td {
                return None;
            }
            return Some(QpSolution { x, ineq_dual: y, eq_dual: nu, iterations: 0, primal_residual, dual_residual });
        }
        None
    }

    fn solve_splitting(
        &self,
        bound: &DVector<T>,
        beq: &DVector<T>,
        g: &DVector<T>,
        warm: Option<(DVector<T>, DVector<T>, DVector<T>)>,
        s: &QpSettings,
    ) -> Result<QpSolution<T>> {
        let rho = T::lit(s.rho);
        let sigma = T::lit(s.sigma);
        let alpha = T::lit(s.alpha);
        let q = self.vars.len();
        let (mut x, mut y, mut nu) = match warm {
            Some((x, y, nu)) => (x, y.map(|v| v.max(T::zero())), nu),
            None => (DVector::zeros(q), DVector::zeros(self.ineq.len()), DVector::zeros(self.eq.len())),
        };
        let mut last_active: Option<Vec<bool>> = None;
        if s.polish {
            let active: Vec<bool> = y.iter().map(|&v| v > T::zero()).collect();
            let sol = if q + self.ineq.len() <= ACTIVE_SET_SIZE {
                self.active_set(bound, beq, g, active.clone(), s.tol)
            } else if active.iter().any(|&a| a) {
                self.polish(bound, beq, g, &active, s.tol)
            } else {
                None
            };
            if let Some(sol) = sol {
                return Ok(sol);
            }
            last_active = Some(active);
        }
        let mut z = (&self.g * &x).zip_map(bound, |l, u| l.min(u));
        let mut prev_y = y.clone();
        let mut prev_nu = nu.clone();
        let check_every = s.check_every.max(1);
        for k in 1..=s.max_iter {
            let rhs_top = &x * sigma - g + self.g.transpose() * (&z * rho - &y);
            let sol = self.factor.solve(&stack(&rhs_top, beq));
            let x_tilde = sol.rows(0, q).into_owned();
            nu = sol.rows(q, self.eq.len()).into_owned();
            let z_tilde = &self.g * &x_tilde;
            x = &x_tilde * alpha + &x * (T::one() - alpha);
            let z_relaxed = &z_tilde * alpha + &z * (T::one() - alpha);
            let z_new = (&z_relaxed + &y / rho).zip_map(bound, |v, u| v.min(u));
            y = &y + (&z_relaxed - &z_new) * rho;
            z = z_new;

            if k % check_every != 0 && k != s.max_iter {
                continue;
            }
            let (primal, dual) = self.residuals(beq, g, &x, z.clone(), &y, &nu);
            let (tp, td) = self.tolerances(beq, g, &x, &z, &y, s.tol);
            if primal <= tp && dual <= td {
                if s.polish {
                    let active: Vec<bool> = y.iter().map(|&v| v > T::zero()).collect();
                    if let Some(mut sol) = self.polish(bound, beq, g, &active, s.tol) {
                        sol.iterations = k;
                        return Ok(sol);
                    }
                }
                return Ok(QpSolution {
                    x,
                    ineq_dual: y,
                    eq_dual: nu,
                    iterations: k,
                    primal_residual: primal,
                    dual_residual: dual,
                });
            }

            let dy = &y - &prev_y;
            let dnu = &nu - &prev_nu;
            let scale = dy.amax().max(if dnu.is_empty() { T::zero() } else { dnu.amax() });
            if scale > T::lit(1e-10) {
                let eps = T::lit(s.infeasibility_tol) * scale;
                let one_sided = dy.iter().all(|&v| v >= -eps);
                let lin = self.g.transpose() * &dy + self.aeq.transpose() * &dnu;
                let support = bound.dot(&dy.map(|v| v.max(T::zero()))) + beq.dot(&dnu);
                let small = lin.is_empty() || lin.amax() <= eps;
                if one_sided && small && support < -eps {
                    return Err(Error::QpInfeasible { iterations: k, certificate: (support / scale).as_f64() });
                }
            }
            prev_y = y.clone();
            prev_nu = nu.clone();

            if s.polish {
                let active: Vec<bool> = y.iter().map(|&v| v > T::zero()).collect();
                if last_active.as_ref() != Some(&active) {
                    if let Some(mut sol) = self.polish(bound, beq, g, &active, s.tol) {
                        sol.iterations = k;
                        return Ok(sol);
                    }
                    last_active = Some(active);
                }
            }
        }
        let (primal, dual) = self.residuals(beq, g, &x, z, &y, &nu);
        Err(Error::QpMaxIterations { iterations: s.max_iter, primal, dual })
    }
}
