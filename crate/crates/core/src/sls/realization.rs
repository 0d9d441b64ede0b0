use nalgebra::{DMatrix, DVector};

use super::{HorizonSpec, Trajectory};
use crate::error::{Error, Result};
use crate::model::SystemModel;
use crate::Scalar;

/// Block lower-triangular responses over the whole horizon.
///
/// `phi_x` is `(T+1)n x (T+1)n` and `phi_u` is `Tp x (T+1)n`. Block column
/// `tau` maps the disturbance `w_tau` (with `w_0 = x_0`) to the trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct FullResponse<T: Scalar> {
    pub horizon: HorizonSpec,
    pub phi_x: DMatrix<T>,
    pub phi_u: DMatrix<T>,
}

impl<T: Scalar> FullResponse<T> {
    /// Rolls out `Phi_x` from the dynamics for a given causal `Phi_u`.
    ///
    /// The result satisfies the full achievability constraint exactly up to
    /// rounding: `Phi_x[tau, tau] = I` and
    /// `Phi_x[t+1, tau] = A Phi_x[t, tau] + B Phi_u[t, tau]`.
    pub fn from_inputs(model: &SystemModel<T>, h: &HorizonSpec, phi_u: DMatrix<T>) -> Result<Self> {
        let (n, p, steps) = (h.n(), h.p(), h.horizon());
        if phi_u.nrows() != steps * p || phi_u.ncols() != (steps + 1) * n {
            return Err(Error::Dimension(format!(
                "phi_u is {}x{}, expected {}x{}",
                phi_u.nrows(),
                phi_u.ncols(),
                steps * p,
                (steps + 1) * n
            )));
        }
        check_causal(&phi_u, p, n)?;
        let a = model.dense_a();
        let b = model.dense_b();
        let mut phi_x = DMatrix::zeros((steps + 1) * n, (steps + 1) * n);
        for tau in 0..=steps {
            phi_x.view_mut((tau * n, tau * n), (n, n)).fill_with_identity();
            for t in tau..steps {
                let xt = phi_x.view((t * n, tau * n), (n, n)).into_owned();
                let ut = phi_u.view((t * p, tau * n), (p, n)).into_owned();
                let next = &a * xt + &b * ut;
                phi_x.view_mut(((t + 1) * n, tau * n), (n, n)).copy_from(&next);
            }
        }
        Ok(Self { horizon: *h, phi_x, phi_u })
    }

    /// `|| Z_AB Phi - I ||_F` over all block columns.
    pub fn achievability_residual(&self, model: &SystemModel<T>) -> T {
        let (n, p, steps) = (self.horizon.n(), self.horizon.p(), self.horizon.horizon());
        let a = model.dense_a();
        let b = model.dense_b();
        let mut sq = T::zero();
        for tau in 0..=steps {
            let diag = self.phi_x.view((tau * n, tau * n), (n, n)).into_owned() - DMatrix::identity(n, n);
            sq += diag.norm_squared();
            for t in 0..steps {
                let lhs = self.phi_x.view(((t + 1) * n, tau * n), (n, n)).into_owned();
                let rhs = &a * self.phi_x.view((t * n, tau * n), (n, n)) + &b * self.phi_u.view((t * p, tau * n), (p, n));
                if t + 1 != tau {
                    sq += (lhs - rhs).norm_squared();
                }
            }
        }
        sq.sqrt()
    }

    /// `(Phi_x w, Phi_u w)` split by time.
    pub fn apply(&self, w: &DVector<T>) -> Result<Trajectory<T>> {
        let (n, steps) = (self.horizon.n(), self.horizon.horizon());
        if w.len() != (steps + 1) * n {
            return Err(Error::Dimension(format!("disturbance has {} entries, expected {}", w.len(), (steps + 1) * n)));
        }
        let x = &self.phi_x * w;
        let u = &self.phi_u * w;
        let mut stacked = DVector::zeros(self.horizon.rows());
        stacked.rows_mut(0, x.len()).copy_from(&x);
        stacked.rows_mut(x.len(), u.len()).copy_from(&u);
        Trajectory::from_stacked(&self.horizon, &stacked)
    }
}

fn check_causal<T: Scalar>(m: &DMatrix<T>, row_block: usize, col_block: usize) -> Result<()> {
    if row_block == 0 || col_block == 0 {
        return Ok(());
    }
    for rb in 0..m.nrows() / row_block {
        for cb in rb + 1..m.ncols() / col_block {
            let blk = m.view((rb * row_block, cb * col_block), (row_block, col_block));
            if blk.iter().any(|v| *v != T::zero()) {
                return Err(Error::NonCausal { row_block: rb, col_block: cb });
            }
        }
    }
    Ok(())
}

/// Runs the internal realization `u = Phi_u w_hat`, `x_hat = (Phi_x - I) w_hat`,
/// `w_hat = x - x_hat` step by step against a plant rollout driven by `w`
/// (`w_0 = x_0`, `x_{t+1} = A x_t + B u_t + w_{t+1}`).
pub fn realize_controller<T: Scalar>(full: &FullResponse<T>, model: &SystemModel<T>, w: &DVector<T>) -> Result<Trajectory<T>> {
    let h = &full.horizon;
    let (n, p, steps) = (h.n(), h.p(), h.horizon());
    if model.n() != n || model.p() != p {
        return Err(Error::Dimension("model does not match the response dimensions".into()));
    }
    if full.phi_x.shape() != ((steps + 1) * n, (steps + 1) * n) || full.phi_u.shape() != (steps * p, (steps + 1) * n) {
        return Err(Error::Dimension("response blocks do not match the horizon".into()));
    }
    if w.len() != (steps + 1) * n {
        return Err(Error::Dimension(format!("disturbance has {} entries, expected {}", w.len(), (steps + 1) * n)));
    }
    check_causal(&full.phi_x, n, n)?;
    check_causal(&full.phi_u, p, n)?;
    let tol = T::lit(1e-12);
    for tau in 0..=steps {
        let diag = full.phi_x.view((tau * n, tau * n), (n, n)).into_owned() - DMatrix::identity(n, n);
        if diag.amax() > tol {
            return Err(Error::InvalidArgument(format!("diagonal block {tau} of phi_x is not the identity")));
        }
    }

    let mut w_hat: Vec<DVector<T>> = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut inputs = Vec::with_capacity(steps);
    let mut x = w.rows(0, n).into_owned();
    for t in 0..=steps {
        let mut x_hat = DVector::zeros(n);
        for (tau, wh) in w_hat.iter().enumerate() {
            x_hat += full.phi_x.view((t * n, tau * n), (n, n)) * wh;
        }
        w_hat.push(&x - x_hat);
        states.push(x.clone());
        if t == steps {
            break;
        }
        let mut u = DVector::zeros(p);
        for (tau, wh) in w_hat.iter().enumerate() {
            u += full.phi_u.view((t * p, tau * n), (p, n)) * wh;
        }
        let w_next = w.rows((t + 1) * n, n).into_owned();
        x = model.step(&x, &u, Some(&w_next));
        inputs.push(u);
    }
    Ok(Trajectory { states, inputs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_benchmark_chain;

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*seed >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    }

    fn random_full(model: &SystemModel<f64>, steps: usize, seed: &mut u64) -> FullResponse<f64> {
        let h = HorizonSpec::for_partition(steps, model.partition()).unwrap();
        let (n, p) = (h.n(), h.p());
        let mut phi_u = DMatrix::zeros(steps * p, (steps + 1) * n);
        for t in 0..steps {
            for tau in 0..=t {
                for r in 0..p {
                    for c in 0..n {
                        phi_u[(t * p + r, tau * n + c)] = lcg(seed);
                    }
                }
            }
        }
        FullResponse::from_inputs(model, &h, phi_u).unwrap()
    }

    #[test]
    fn rollout_is_achievable() {
        let m = build_benchmark_chain::<f64>(2).unwrap();
        let full = random_full(&m, 4, &mut 7);
        assert!(full.achievability_residual(&m) < 1e-12);
    }

    #[test]
    fn zero_disturbance_gives_zero_signals() {
        let m = build_benchmark_chain::<f64>(2).unwrap();
        let full = random_full(&m, 3, &mut 11);
        let traj = realize_controller(&full, &m, &DVector::zeros(16)).unwrap();
        assert!(traj.stacked().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn initial_condition_only_matches_first_column() {
        let m = build_benchmark_chain::<f64>(2).unwrap();
        let full = random_full(&m, 3, &mut 3);
        let mut w = DVector::zeros(16);
        w.rows_mut(0, 4).copy_from(&DVector::from_vec(vec![1.0, -0.5, 0.25, 2.0]));
        let realized = realize_controller(&full, &m, &w).unwrap();
        let direct = full.apply(&w).unwrap();
        assert!((realized.stacked() - direct.stacked()).amax() < 1e-12);
    }

    #[test]
    fn random_disturbances_match_closed_loop_map() {
        let m = build_benchmark_chain::<f64>(2).unwrap();
        let mut seed = 99;
        for _ in 0..10 {
            let full = random_full(&m, 4, &mut seed);
            let w = DVector::from_fn(20, |_, _| lcg(&mut seed));
            let realized = realize_controller(&full, &m, &w).unwrap();
            let direct = full.apply(&w).unwrap();
            assert!((realized.stacked() - direct.stacked()).amax() < 1e-9);
        }
    }

    #[test]
    fn upper_blocks_are_rejected() {
        let m = build_benchmark_chain::<f64>(1).unwrap();
        let mut full = random_full(&m, 2, &mut 5);
        full.phi_u[(0, 3)] = 1.0;
        assert!(matches!(realize_controller(&full, &m, &DVector::zeros(6)), Err(Error::NonCausal { .. })));
        let mut full = random_full(&m, 2, &mut 5);
        full.phi_x[(0, 2)] = 1.0;
        assert!(matches!(realize_controller(&full, &m, &DVector::zeros(6)), Err(Error::NonCausal { .. })));
    }
}
