use nalgebra::{DMatrix, DVector};

use super::{build_locality_mask, build_partitions, HorizonSpec, ResponseColumn};
use crate::error::{Error, Result};
use crate::model::{build_interconnection_graph, InterconnectionGraph, SystemModel};
use crate::Scalar;

/// Relative residual below which a masked achievability system counts as solvable.
pub const DEFAULT_LOCALIZABILITY_TOL: f64 = 1e-8;

/// Row-compressed sparse matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRows<T: Scalar> {
    ncols: usize,
    rows: Vec<Vec<(usize, T)>>,
}

impl<T: Scalar> SparseRows<T> {
    pub fn new(ncols: usize) -> Self {
        Self { ncols, rows: Vec::new() }
    }

    pub fn push_row(&mut self, mut entries: Vec<(usize, T)>) {
        entries.retain(|&(_, v)| v != T::zero());
        entries.sort_by_key(|&(c, _)| c);
        debug_assert!(entries.iter().all(|&(c, _)| c < self.ncols));
        self.rows.push(entries);
    }

    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn row(&self, r: usize) -> &[(usize, T)] {
        &self.rows[r]
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn to_dense(&self) -> DMatrix<T> {
        let mut m = DMatrix::zeros(self.nrows(), self.ncols);
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, v) in row {
                m[(r, c)] = v;
            }
        }
        m
    }

    pub fn mul_dense(&self, rhs: &DMatrix<T>) -> DMatrix<T> {
        assert_eq!(rhs.nrows(), self.ncols, "sparse product dimension mismatch");
        let mut out = DMatrix::zeros(self.nrows(), rhs.ncols());
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, v) in row {
                for k in 0..rhs.ncols() {
                    out[(r, k)] += v * rhs[(c, k)];
                }
            }
        }
        out
    }
}

/// `Z_AB Phi = E_1` restricted to the first block column.
///
/// Rows are the state equations: `Phi_x[0] = I` followed by
/// `Phi_x[t+1] - A Phi_x[t] - B Phi_u[t] = 0` for `t = 0..T`.
#[derive(Debug, Clone, PartialEq)]
pub struct AchievabilityOperator<T: Scalar> {
    pub horizon: HorizonSpec,
    pub z: SparseRows<T>,
    pub rhs: DMatrix<T>,
}

pub fn assemble_achievability<T: Scalar>(model: &SystemModel<T>, h: &HorizonSpec) -> Result<AchievabilityOperator<T>> {
    if h.n() != model.n() || h.p() != model.p() {
        return Err(Error::Dimension(format!(
            "horizon built for n={}, p={} but model has n={}, p={}",
            h.n(),
            h.p(),
            model.n(),
            model.p()
        )));
    }
    let (n, horizon) = (h.n(), h.horizon());
    let a = model.dense_a();
    let b = model.dense_b();
    let mut z = SparseRows::new(h.rows());
    for k in 0..n {
        z.push_row(vec![(h.x_row(0, k), T::one())]);
    }
    for t in 0..horizon {
        for k in 0..n {
            let mut row = vec![(h.x_row(t + 1, k), T::one())];
            row.extend((0..n).map(|l| (h.x_row(t, l), -a[(k, l)])));
            row.extend((0..h.p()).map(|l| (h.u_row(t, l), -b[(k, l)])));
            z.push_row(row);
        }
    }
    let mut rhs = DMatrix::zeros(h.state_rows(), n);
    rhs.view_mut((0, 0), (n, n)).fill_with_identity();
    Ok(AchievabilityOperator { horizon: *h, z, rhs })
}

impl<T: Scalar> AchievabilityOperator<T> {
    /// `|| Z Phi - E_1 ||_F` for a dense first block column.
    pub fn residual_dense(&self, phi: &DMatrix<T>) -> T {
        (self.z.mul_dense(phi) - &self.rhs).norm()
    }

    pub fn residual(&self, phi: &ResponseColumn<T>) -> T {
        self.residual_dense(&phi.to_dense())
    }
}

/// Outcome of the masked least-squares test.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalizabilityReport {
    pub feasible: bool,
    /// Largest per-column residual divided by `||E_1||_F`.
    pub worst_residual: f64,
    /// Absolute least-squares residual of every column of `Phi`.
    pub column_residuals: Vec<f64>,
    pub tolerance: f64,
}

pub fn check_localizability<T: Scalar>(model: &SystemModel<T>, d: usize, h: &HorizonSpec) -> Result<LocalizabilityReport> {
    let graph = build_interconnection_graph(model, T::zero());
    check_localizability_with(model, &graph, d, h, DEFAULT_LOCALIZABILITY_TOL)
}

/// Solves `min || Z_AB(:, S) phi - E_1(:, c) ||` for every column `c`, where
/// `S` is the masked support of that column, using column-pivoted QR.
pub fn check_localizability_with<T: Scalar>(
    model: &SystemModel<T>,
    graph: &InterconnectionGraph,
    d: usize,
    h: &HorizonSpec,
    tol: f64,
) -> Result<LocalizabilityReport> {
    let op = assemble_achievability(model, h)?;
    let mask = build_locality_mask(graph, model.partition(), d, *h)?;
    let sets = build_partitions(&mask, model.partition())?;
    let mut column_residuals = vec![0.0; h.n()];
    for j in 0..model.count() {
        let support = &sets.col_support[j];
        let cols = &sets.cols[j];
        let mut local_of = vec![usize::MAX; h.rows()];
        for (pos, &r) in support.iter().enumerate() {
            local_of[r] = pos;
        }
        let mut z_rows = Vec::new();
        let mut e_rows = Vec::new();
        for r in 0..op.z.nrows() {
            let entries: Vec<(usize, T)> =
                op.z.row(r).iter().filter(|(c, _)| local_of[*c] != usize::MAX).map(|&(c, v)| (local_of[c], v)).collect();
            let rhs: Vec<T> = cols.iter().map(|&c| op.rhs[(r, c)]).collect();
            if entries.is_empty() && rhs.iter().all(|v| *v == T::zero()) {
                continue;
            }
            z_rows.push(entries);
            e_rows.push(rhs);
        }
        let m = z_rows.len();
        let mut zs = DMatrix::<T>::zeros(m, support.len());
        let mut es = DMatrix::<T>::zeros(m, cols.len());
        for (r, (zr, er)) in z_rows.iter().zip(&e_rows).enumerate() {
            for &(c, v) in zr {
                zs[(r, c)] = v;
            }
            for (c, &v) in er.iter().enumerate() {
                es[(r, c)] = v;
            }
        }
        for (c, &col) in cols.iter().enumerate() {
            column_residuals[col] = least_squares_residual(&zs, &es.column(c).into_owned()).as_f64();
        }
    }
    let scale = (h.n() as f64).sqrt().max(f64::MIN_POSITIVE);
    let worst = column_residuals.iter().copied().fold(0.0, f64::max) / scale;
    Ok(LocalizabilityReport { feasible: worst <= tol, worst_residual: worst, column_residuals, tolerance: tol })
}

/// Residual norm of the least-squares problem `min ||M v - e||`.
fn least_squares_residual<T: Scalar>(m: &DMatrix<T>, e: &DVector<T>) -> T {
    if m.ncols() == 0 || m.nrows() == 0 {
        return e.norm();
    }
    let qr = m.clone().col_piv_qr();
    let r = qr.r();
    let q = qr.q();
    let diag = r.nrows().min(r.ncols());
    let lead = if diag > 0 { r[(0, 0)].magnitude() } else { T::zero() };
    let cutoff = lead * T::from_usize_lossy(m.nrows().max(m.ncols())) * T::machine_epsilon();
    let rank = (0..diag).take_while(|&k| r[(k, k)].magnitude() > cutoff).count();
    let basis = q.columns(0, rank);
    let proj = basis * (basis.transpose() * e);
    (e - proj).norm()
}
