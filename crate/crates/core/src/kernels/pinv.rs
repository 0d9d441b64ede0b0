use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::Scalar;

/// Relative tolerance on `Z Z^+ b - b` accepted when building a projector,
/// equal to the localizability tolerance.
pub const PROJECTOR_CONSISTENCY_TOL: f64 = crate::sls::DEFAULT_LOCALIZABILITY_TOL;

/// Moore-Penrose pseudo-inverse through the SVD, discarding singular values
/// below `sigma_max * max(rows, cols) * eps`.
pub fn pseudo_inverse<T: Scalar>(m: &DMatrix<T>) -> DMatrix<T> {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return DMatrix::zeros(cols, rows);
    }
    let svd = m.clone().svd(true, true);
    let u = svd.u.as_ref().expect("left singular vectors requested");
    let v_t = svd.v_t.as_ref().expect("right singular vectors requested");
    let sigma_max = svd.singular_values.iter().copied().fold(T::zero(), T::max);
    let cutoff = sigma_max * T::from_usize_lossy(rows.max(cols)) * T::machine_epsilon();
    let mut out = DMatrix::zeros(cols, rows);
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff {
            out += v_t.row(k).transpose() * u.column(k).transpose() * (T::one() / s);
        }
    }
    out
}

/// Closed-form Euclidean projection onto `{Psi : Z Psi = b}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnProjector<T: Scalar> {
    pub subsystem: usize,
    pub z: DMatrix<T>,
    pub z_pinv: DMatrix<T>,
    pub rhs: DMatrix<T>,
    /// Numerical rank of `z`.
    pub rank: usize,
    /// Ratio of largest to smallest retained singular value.
    pub condition: f64,
    /// `||Z Z^+ b - b||_F / max(1, ||b||_F)`.
    pub consistency_residual: f64,
}

impl<T: Scalar> ColumnProjector<T> {
    /// Precomputes the pseudo-inverse; fails when `Z Psi = b` has no solution.
    pub fn new(subsystem: usize, z: DMatrix<T>, rhs: DMatrix<T>) -> Result<Self> {
        if z.nrows() != rhs.nrows() {
            return Err(Error::Dimension(format!("constraint has {} rows, right-hand side {}", z.nrows(), rhs.nrows())));
        }
        let z_pinv = pseudo_inverse(&z);
        let (rank, condition) = rank_and_condition(&z);
        let rhs_norm = rhs.norm().as_f64();
        let consistency_residual = (&z * (&z_pinv * &rhs) - &rhs).norm().as_f64() / rhs_norm.max(1.0);
        if consistency_residual > PROJECTOR_CONSISTENCY_TOL {
            return Err(Error::InconsistentProjector { subsystem, residual: consistency_residual });
        }
        Ok(Self { subsystem, z, z_pinv, rhs, rank, condition, consistency_residual })
    }

    /// Number of unknowns per projected column.
    pub fn unknowns(&self) -> usize {
        self.z.ncols()
    }

    pub fn constraints(&self) -> usize {
        self.z.nrows()
    }

    pub fn project(&self, v: &DMatrix<T>) -> Result<DMatrix<T>> {
        if v.nrows() != self.z.ncols() || v.ncols() != self.rhs.ncols() {
            return Err(Error::Dimension(format!(
                "projector expects {}x{}, got {}x{}",
                self.z.ncols(),
                self.rhs.ncols(),
                v.nrows(),
                v.ncols()
            )));
        }
        Ok(v + &self.z_pinv * (&self.rhs - &self.z * v))
    }

    /// `||Z Psi - b||_F`.
    pub fn residual(&self, psi: &DMatrix<T>) -> T {
        (&self.z * psi - &self.rhs).norm()
    }
}

/// `V + Z^+ (b - Z V)`.
pub fn project_affine<T: Scalar>(proj: &ColumnProjector<T>, v: &DMatrix<T>) -> Result<DMatrix<T>> {
    proj.project(v)
}

fn rank_and_condition<T: Scalar>(m: &DMatrix<T>) -> (usize, f64) {
    if m.nrows() == 0 || m.ncols() == 0 {
        return (0, 1.0);
    }
    let sv = m.clone().singular_values();
    let sigma_max = sv.iter().copied().fold(T::zero(), T::max);
    let cutoff = sigma_max * T::from_usize_lossy(m.nrows().max(m.ncols())) * T::machine_epsilon();
    let kept: Vec<T> = sv.iter().copied().filter(|&s| s > cutoff).collect();
    let smallest = kept.iter().copied().fold(sigma_max, T::min);
    let condition = if kept.is_empty() { f64::INFINITY } else { (sigma_max / smallest).as_f64() };
    (kept.len(), condition)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;
    use proptest::prelude::*;

    fn penrose_errors(m: &DMatrix<f64>, p: &DMatrix<f64>) -> [f64; 4] {
        let scale = m.norm().max(1.0) * p.norm().max(1.0);
        [
            (m * p * m - m).norm() / scale,
            (p * m * p - p).norm() / scale,
            ((m * p).transpose() - m * p).norm() / scale,
            ((p * m).transpose() - p * m).norm() / scale,
        ]
    }

    #[test]
    fn identity_is_its_own_pseudo_inverse() {
        let i = DMatrix::<f64>::identity(4, 4);
        assert!((pseudo_inverse(&i) - &i).amax() < 1e-15);
    }

    #[test]
    fn rank_deficient_diagonal() {
        let m = dmatrix![2.0, 0.0; 0.0, 0.0];
        let p = pseudo_inverse(&m);
        assert!((p - dmatrix![0.5, 0.0; 0.0, 0.0]).amax() < 1e-15);
    }

    #[test]
    fn tall_full_rank_left_inverse() {
        let m = dmatrix![
            1.0, 2.0, 0.5;
            -1.0, 0.3, 2.0;
            0.7, -0.2, 1.1;
            3.0, 1.0, -1.0;
            0.0, 0.4, 0.9
        ];
        let p = pseudo_inverse(&m);
        assert!((&p * &m - DMatrix::identity(3, 3)).amax() < 1e-10);
        assert!(penrose_errors(&m, &p).iter().all(|&e| e < 1e-10));
    }

    #[test]
    fn deterministic_bits() {
        let m = dmatrix![1.0, 2.0, 3.0; 4.0, 5.0, 6.0];
        assert_eq!(pseudo_inverse(&m), pseudo_inverse(&m));
    }

    #[test]
    fn minimum_norm_projection_of_origin() {
        let proj = ColumnProjector::new(0, dmatrix![1.0, 1.0], dmatrix![1.0]).unwrap();
        let out = project_affine(&proj, &DMatrix::zeros(2, 1)).unwrap();
        assert!((out - dmatrix![0.5; 0.5]).amax() < 1e-15);
    }

    #[test]
    fn feasible_point_is_fixed() {
        let proj = ColumnProjector::new(0, dmatrix![1.0, 1.0, 0.0; 0.0, 1.0, -1.0], dmatrix![1.0; 0.0]).unwrap();
        let v = dmatrix![0.2; 0.8; 0.8];
        assert!((proj.project(&v).unwrap() - &v).amax() < 1e-14);
    }

    #[test]
    fn inconsistent_system_is_rejected() {
        let err = ColumnProjector::new(3, dmatrix![1.0, 1.0; 1.0, 1.0], dmatrix![1.0; 2.0]).unwrap_err();
        assert!(matches!(err, Error::InconsistentProjector { subsystem: 3, .. }));
    }

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*seed >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    }

    #[test]
    fn projection_is_closest_feasible_point() {
        let mut seed = 42;
        let z = DMatrix::from_fn(3, 6, |_, _| lcg(&mut seed));
        let b = DMatrix::from_fn(3, 2, |_, _| lcg(&mut seed));
        let proj = ColumnProjector::new(0, z.clone(), b).unwrap();
        let v = DMatrix::from_fn(6, 2, |_, _| lcg(&mut seed));
        let out = proj.project(&v).unwrap();
        assert!(proj.residual(&out) < 1e-10);
        let best = (&out - &v).norm();
        for _ in 0..100 {
            let w = proj.project(&DMatrix::from_fn(6, 2, |_, _| 5.0 * lcg(&mut seed))).unwrap();
            assert!(best <= (&w - &v).norm() + 1e-12);
        }
    }

    proptest! {
        #[test]
        fn projection_is_idempotent(vals in proptest::collection::vec(-3.0f64..3.0, 2 * 5 + 5)) {
            let z = DMatrix::from_row_slice(2, 5, &vals[..10]);
            let b = z.column(0).into_owned();
            let proj = ColumnProjector::new(0, z, DMatrix::from_column_slice(2, 1, b.as_slice())).unwrap();
            let v = DMatrix::from_column_slice(5, 1, &vals[10..]);
            let once = proj.project(&v).unwrap();
            let twice = proj.project(&once).unwrap();
            prop_assert!((&twice - &once).amax() <= 1e-12 * (1.0 + once.amax()));
        }

        #[test]
        fn penrose_identities(vals in proptest::collection::vec(-2.0f64..2.0, 12), rows in 1usize..4) {
            let cols = 12 / 4;
            let m = DMatrix::from_row_slice(rows, cols, &vals[..rows * cols]);
            let p = pseudo_inverse(&m);
            prop_assert!(penrose_errors(&m, &p).iter().all(|&e| e < 1e-10));
        }
    }
}
