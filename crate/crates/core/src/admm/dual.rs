use nalgebra::DMatrix;

use super::AdmmParams;
use crate::error::{Error, Result};
use crate::kernels::ColumnProjector;
use crate::Scalar;

/// `Psi_c = proj(Phi_c + Lambda_c)` onto the local achievability constraint.
pub fn column_update<T: Scalar>(proj: &ColumnProjector<T>, phi: &DMatrix<T>, lambda: &DMatrix<T>) -> Result<DMatrix<T>> {
    if phi.shape() != lambda.shape() {
        return Err(Error::Dimension("phi and lambda column slices differ in shape".into()));
    }
    proj.project(&(phi + lambda))
}

/// `Lambda + Phi - Psi`.
pub fn dual_update<T: Scalar>(phi: &DMatrix<T>, psi: &DMatrix<T>, lambda: &DMatrix<T>) -> Result<DMatrix<T>> {
    if phi.shape() != psi.shape() || phi.shape() != lambda.shape() {
        return Err(Error::Dimension("dual update operands differ in shape".into()));
    }
    Ok(lambda + phi - psi)
}

/// `(|Phi - Psi_new|_F, |Psi_new - Psi_old|_F)`.
pub fn residuals<T: Scalar>(phi: &DMatrix<T>, psi_new: &DMatrix<T>, psi_old: &DMatrix<T>) -> (f64, f64) {
    ((phi - psi_new).norm().as_f64(), (psi_new - psi_old).norm().as_f64())
}

/// Per-subsystem stopping rule; both residuals compared with `<=`.
pub fn converged<T: Scalar>(phi: &DMatrix<T>, psi_new: &DMatrix<T>, psi_old: &DMatrix<T>, params: &AdmmParams) -> bool {
    let (p, d) = residuals(phi, psi_new, psi_old);
    p <= params.eps_p && d <= params.eps_d
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn dual_update_accumulates() {
        let phi = dmatrix![1.0, 2.0];
        let psi = dmatrix![0.5, 2.5];
        let delta = &phi - &psi;
        let zero = DMatrix::<f64>::zeros(1, 2);
        assert_eq!(dual_update(&phi, &phi, &delta).unwrap(), delta);
        let once = dual_update(&phi, &psi, &zero).unwrap();
        assert_eq!(once, delta);
        assert_eq!(dual_update(&phi, &psi, &once).unwrap(), &delta * 2.0);
    }

    #[test]
    fn convergence_uses_non_strict_comparison() {
        let params = AdmmParams { eps_p: 0.5, eps_d: 0.25, ..AdmmParams::default() };
        let psi = dmatrix![0.0, 0.0];
        assert!(converged(&psi, &psi, &psi, &params));
        assert!(converged(&dmatrix![0.5, 0.0], &psi, &dmatrix![0.0, 0.25], &params));
        assert!(!converged(&dmatrix![1.0, 0.0], &psi, &psi, &params));
    }

    #[test]
    fn column_update_fixed_point_and_origin() {
        let proj = ColumnProjector::new(0, dmatrix![1.0, 1.0], dmatrix![1.0]).unwrap();
        let zero = DMatrix::<f64>::zeros(2, 1);
        let feasible = dmatrix![0.25; 0.75];
        assert!((column_update(&proj, &feasible, &zero).unwrap() - &feasible).amax() < 1e-15);
        assert!((column_update(&proj, &zero, &zero).unwrap() - dmatrix![0.5; 0.5]).amax() < 1e-15);
    }
}
