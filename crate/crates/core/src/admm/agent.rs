use nalgebra::{DMatrix, DVector};

use super::{column_update, dual_update, residuals, row_update, ColumnLayout, LocalProblem, RowLayout, RowSolver};
use crate::agents::{AccessLog, Message, ModelReader, Payload, RoundId};
use crate::consensus::{consensus_x_update, consensus_y_update, consensus_z_update, ConsensusLayout, ConsensusState};
use crate::error::{Error, Result};
use crate::kernels::{ColumnProjector, QpSettings};
use crate::model::{InterconnectionGraph, SystemModel};
use crate::problem::SubsystemObjective;
use crate::sls::{LocalityMask, PartitionSets, TrajectoryLayout};
use crate::Scalar;

/// One subsystem's solver state: its rows and columns of `Phi`, `Psi` and
/// `Lambda`, the column projector, and consensus variables.
pub struct Agent<T: Scalar> {
    id: usize,
    trajectory: TrajectoryLayout,
    row: RowLayout,
    /// `(global row, local row)` sorted by global row.
    row_index: Vec<(usize, usize)>,
    col: ColumnLayout,
    projector: ColumnProjector<T>,
    log: AccessLog,
    settings: QpSettings,

    x_support: DVector<T>,
    solver: Option<RowSolver<T>>,
    phi_r: DMatrix<T>,
    psi_r: DMatrix<T>,
    lambda_r: DMatrix<T>,
    residuals: (f64, f64),

    phi_c: DMatrix<T>,
    psi_c: DMatrix<T>,
    lambda_c: DMatrix<T>,
    column_residual: f64,

    consensus: Option<ConsensusState<T>>,
}

fn expect_senders<T: Scalar>(inbox: &[Message<T>], expected: impl Iterator<Item = usize>, agent: usize, what: &str) -> Result<()> {
    let got: Vec<usize> = inbox.iter().map(|m| m.sender).collect();
    let want: Vec<usize> = expected.collect();
    if got != want {
        return Err(Error::Protocol(format!("agent {agent} expected {what} from {want:?}, received from {got:?}")));
    }
    Ok(())
}

impl<T: Scalar> Agent<T> {
    /// Sets up the slices of subsystem `id`. The column projector is built
    /// from model blocks read through an access-logged reader.
    pub fn new(
        id: usize,
        model: &SystemModel<T>,
        graph: &InterconnectionGraph,
        mask: &LocalityMask,
        sets: &PartitionSets,
        settings: QpSettings,
    ) -> Result<Self> {
        let row = RowLayout::new(mask, sets, id);
        let col = ColumnLayout::new(mask, sets, id);
        let mut log = AccessLog::new(id);
        let projector = {
            let mut reader = ModelReader::new(model, &mut log);
            super::build_column_projector(&mut reader, graph, mask, &col)?
        };
        let mut row_index: Vec<(usize, usize)> = row.rows.iter().enumerate().map(|(l, &g)| (g, l)).collect();
        row_index.sort_unstable();
        let (l, s) = (row.len(), row.width());
        let (r, c) = (col.len(), col.cols.len());
        Ok(Self {
            id,
            trajectory: TrajectoryLayout::of(mask.horizon(), mask.partition(), id),
            row_index,
            projector,
            log,
            settings,
            x_support: DVector::zeros(s),
            solver: None,
            phi_r: DMatrix::zeros(l, s),
            psi_r: DMatrix::zeros(l, s),
            lambda_r: DMatrix::zeros(l, s),
            residuals: (0.0, 0.0),
            phi_c: DMatrix::zeros(r, c),
            psi_c: DMatrix::zeros(r, c),
            lambda_c: DMatrix::zeros(r, c),
            column_residual: 0.0,
            consensus: None,
            row,
            col,
        })
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn log(&self) -> &AccessLog {
        &self.log
    }

    pub fn row_layout(&self) -> &RowLayout {
        &self.row
    }

    pub fn column_layout(&self) -> &ColumnLayout {
        &self.col
    }

    pub fn projector(&self) -> &ColumnProjector<T> {
        &self.projector
    }

    /// Variables of the current row QP, if prepared.
    pub fn row_variables(&self) -> Option<usize> {
        self.solver.as_ref().map(RowSolver::variables)
    }

    pub fn phi_column(&self) -> &DMatrix<T> {
        &self.phi_c
    }

    pub fn psi_column(&self) -> &DMatrix<T> {
        &self.psi_c
    }

    pub fn phi_rows(&self) -> &DMatrix<T> {
        &self.phi_r
    }

    pub fn psi_rows(&self) -> &DMatrix<T> {
        &self.psi_r
    }

    pub fn lambda_rows(&self) -> &DMatrix<T> {
        &self.lambda_r
    }

    /// Latest `(primal, dual)` residuals of the row slice.
    pub fn residuals(&self) -> (f64, f64) {
        self.residuals
    }

    /// `|Z Psi_c - b|_F` of the latest column update.
    pub fn column_residual(&self) -> f64 {
        self.column_residual
    }

    pub fn consensus_state(&self) -> Option<&ConsensusState<T>> {
        self.consensus.as_ref()
    }

    /// Zeroes all iterates and consensus variables.
    pub fn reset(&mut self) {
        for m in [&mut self.phi_r, &mut self.psi_r, &mut self.lambda_r, &mut self.phi_c, &mut self.psi_c, &mut self.lambda_c] {
            m.fill(T::zero());
        }
        self.consensus = None;
        self.solver = None;
    }

    /// Own predicted trajectory `Phi_i x0` in local trajectory order.
    pub fn prediction(&self) -> DVector<T> {
        DVector::from_fn(self.row.len(), |r, _| {
            self.row.allowed[r].iter().fold(T::zero(), |acc, &p| acc + self.phi_r[(r, p)] * self.x_support[p])
        })
    }

    /// First predicted input of the subsystem.
    pub fn first_input(&self) -> DVector<T> {
        let y = self.prediction();
        DVector::from_fn(self.trajectory.input_dim, |b, _| y[self.trajectory.u(0, b)])
    }

    /// Sends the measured own state to every subsystem whose rows use it.
    pub fn measurement_messages(&self, x_own: &DVector<T>, round: RoundId) -> Result<Vec<Message<T>>> {
        if x_own.len() != self.col.cols.len() {
            return Err(Error::Dimension(format!("agent {} measured {} states, owns {}", self.id, x_own.len(), self.col.cols.len())));
        }
        Ok(self
            .col
            .by_row_owner
            .iter()
            .map(|(i, _)| Message {
                round,
                sender: self.id,
                receiver: *i,
                payload: Payload { rows: vec![], cols: self.col.cols.clone(), values: DMatrix::from_row_slice(1, x_own.len(), x_own.as_slice()) },
            })
            .collect())
    }

    pub fn receive_state(&mut self, inbox: Vec<Message<T>>) -> Result<()> {
        expect_senders(&inbox, self.row.by_column_owner.iter().map(|o| o.0), self.id, "state measurements")?;
        for m in inbox {
            self.log.record_x0(m.sender);
            for (k, &c) in m.payload.cols.iter().enumerate() {
                let p = self.row.support.binary_search(&c).map_err(|_| {
                    Error::Protocol(format!("agent {} received state component {c} outside its support", self.id))
                })?;
                self.x_support[p] = m.payload.values[(0, k)];
            }
        }
        Ok(())
    }

    /// Builds the row solver for the current measurement. Iterates and the
    /// QP warm start carry over from the previous step.
    pub fn prepare(&mut self, objective: SubsystemObjective<T>, rho: f64, consensus: Option<(ConsensusLayout, f64)>) -> Result<()> {
        let lp = LocalProblem { subsystem: self.id, objective, x0: self.x_support.clone() };
        let cl = consensus.as_ref().map(|(cl, mu)| (cl, T::lit(*mu)));
        let mut solver = RowSolver::new(&lp, &self.row, T::lit(rho), cl, self.settings)?;
        if let Some(prev) = &self.solver {
            solver.inherit_warm_start(prev);
        }
        self.solver = Some(solver);
        self.consensus = match consensus {
            Some((cl, _)) => match self.consensus.take() {
                Some(state) if state.layout == cl => Some(state),
                _ => Some(ConsensusState::new(cl)),
            },
            None => None,
        };
        Ok(())
    }

    fn solver(&mut self) -> Result<&mut RowSolver<T>> {
        self.solver.as_mut().ok_or_else(|| Error::InvalidArgument(format!("agent {} has no prepared row problem", self.id)))
    }

    /// Row update without coupling, then the `Phi` rows for column owners.
    pub fn row_phase(&mut self, round: RoundId) -> Result<Vec<Message<T>>> {
        let (psi, lambda) = (self.psi_r.clone(), self.lambda_r.clone());
        self.phi_r = row_update(self.solver()?, &psi, &lambda)?;
        Ok(self.phi_messages(round))
    }

    pub fn phi_messages(&self, round: RoundId) -> Vec<Message<T>> {
        self.row
            .by_column_owner
            .iter()
            .map(|(j, local, positions)| Message {
                round,
                sender: self.id,
                receiver: *j,
                payload: Payload {
                    rows: local.iter().map(|&r| self.row.rows[r]).collect(),
                    cols: positions.iter().map(|&p| self.row.support[p]).collect(),
                    values: DMatrix::from_fn(local.len(), positions.len(), |a, b| self.phi_r[(local[a], positions[b])]),
                },
            })
            .collect()
    }

    /// Assembles `Phi_c`, projects, updates the column dual and returns the
    /// `Psi` columns for the row owners.
    pub fn column_phase(&mut self, inbox: Vec<Message<T>>, round: RoundId) -> Result<Vec<Message<T>>> {
        expect_senders(&inbox, self.col.by_row_owner.iter().map(|o| o.0), self.id, "phi rows")?;
        let mut filled = 0;
        for m in &inbox {
            if m.payload.cols != self.col.cols {
                return Err(Error::Protocol(format!("agent {} received phi rows for foreign columns", self.id)));
            }
            for (a, &r) in m.payload.rows.iter().enumerate() {
                let p = self.col.position(r).ok_or_else(|| {
                    Error::Protocol(format!("agent {} received phi row {r} outside its column support", self.id))
                })?;
                self.phi_c.row_mut(p).copy_from(&m.payload.values.row(a));
                filled += 1;
            }
        }
        if filled != self.col.len() {
            return Err(Error::Protocol(format!("agent {} assembled {filled} of {} column rows", self.id, self.col.len())));
        }
        self.psi_c = column_update(&self.projector, &self.phi_c, &self.lambda_c)?;
        self.lambda_c = dual_update(&self.phi_c, &self.psi_c, &self.lambda_c)?;
        self.column_residual = self.projector.residual(&self.psi_c).as_f64();
        Ok(self
            .col
            .by_row_owner
            .iter()
            .map(|(i, positions)| Message {
                round,
                sender: self.id,
                receiver: *i,
                payload: Payload {
                    rows: positions.iter().map(|&p| self.col.rows[p]).collect(),
                    cols: self.col.cols.clone(),
                    values: DMatrix::from_fn(positions.len(), self.col.cols.len(), |a, b| self.psi_c[(positions[a], b)]),
                },
            })
            .collect())
    }

    /// Assembles `Psi_r`, updates the row dual and returns `(primal, dual)` residuals.
    pub fn dual_phase(&mut self, inbox: Vec<Message<T>>) -> Result<(f64, f64)> {
        expect_senders(&inbox, self.row.by_column_owner.iter().map(|o| o.0), self.id, "psi columns")?;
        let psi_old = self.psi_r.clone();
        for m in &inbox {
            let positions: Vec<usize> = m
                .payload
                .cols
                .iter()
                .map(|c| self.row.support.binary_search(c))
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Protocol(format!("agent {} received psi columns outside its support", self.id)))?;
            for (a, r) in m.payload.rows.iter().enumerate() {
                let local = self
                    .row_index
                    .binary_search_by_key(r, |e| e.0)
                    .map(|k| self.row_index[k].1)
                    .map_err(|_| Error::Protocol(format!("agent {} received psi row {r} it does not own", self.id)))?;
                for (b, &p) in positions.iter().enumerate() {
                    self.psi_r[(local, p)] = m.payload.values[(a, b)];
                }
            }
        }
        self.lambda_r = dual_update(&self.phi_r, &self.psi_r, &self.lambda_r)?;
        self.residuals = residuals(&self.phi_r, &self.psi_r, &psi_old);
        Ok(self.residuals)
    }

    /// Consensus row update; sends the held copies to their owners.
    pub fn consensus_x_phase(&mut self, round: RoundId) -> Result<Vec<Message<T>>> {
        let (psi, lambda) = (self.psi_r.clone(), self.lambda_r.clone());
        let state = self.consensus.take().ok_or_else(|| Error::InvalidArgument(format!("agent {} has no consensus state", self.id)))?;
        let solved = consensus_x_update(self.solver()?, &psi, &lambda, &state);
        let mut state = state;
        let sol = match solved {
            Ok(sol) => sol,
            Err(e) => {
                self.consensus = Some(state);
                return Err(e);
            }
        };
        self.phi_r = sol.phi;
        for (k, e) in state.layout.shared.iter().enumerate() {
            state.own_x[k] = sol.own[e.local];
        }
        state.held_x = sol.held.iter().copied().collect();
        let out = state
            .layout
            .held_by_owner()
            .into_iter()
            .map(|(owner, idx)| Message {
                round,
                sender: self.id,
                receiver: owner,
                payload: Payload {
                    rows: idx.iter().map(|&k| state.layout.held[k].row).collect(),
                    cols: vec![],
                    values: DMatrix::from_fn(idx.len(), 1, |a, _| state.held_x[idx[a]]),
                },
            })
            .collect();
        self.consensus = Some(state);
        Ok(out)
    }

    /// Owner side: averages own values and received copies, updates own and
    /// mirrored duals, and returns `Z` to the holders.
    pub fn consensus_z_phase(&mut self, inbox: Vec<Message<T>>, round: RoundId) -> Result<Vec<Message<T>>> {
        let id = self.id;
        let state = self.consensus.as_mut().ok_or_else(|| Error::InvalidArgument(format!("agent {id} has no consensus state")))?;
        let by_holder = state.layout.shared_by_holder();
        expect_senders(&inbox, by_holder.iter().map(|h| h.0), id, "x copies")?;
        let ns = state.layout.shared.len();
        let mut copies: Vec<Vec<Option<T>>> = state.layout.shared.iter().map(|e| vec![None; e.holders.len()]).collect();
        for m in &inbox {
            for (a, &row) in m.payload.rows.iter().enumerate() {
                let k = state
                    .layout
                    .shared
                    .iter()
                    .position(|e| e.row == row)
                    .ok_or_else(|| Error::Protocol(format!("agent {id} received a copy of row {row} it does not share")))?;
                let h = state.layout.shared[k]
                    .holders
                    .binary_search(&m.sender)
                    .map_err(|_| Error::Protocol(format!("agent {} is not a holder of row {row} of agent {id}", m.sender)))?;
                copies[k][h] = Some(m.payload.values[(a, 0)]);
            }
        }
        for k in 0..ns {
            let mut xs = vec![state.own_x[k]];
            let mut ys = vec![state.own_y[k]];
            for (h, c) in copies[k].iter().enumerate() {
                let x = c.ok_or_else(|| {
                    Error::Protocol(format!("agent {id} is missing the copy of row {} from agent {}", state.layout.shared[k].row, state.layout.shared[k].holders[h]))
                })?;
                xs.push(x);
                ys.push(state.mirror_y[k][h]);
            }
            let z = consensus_z_update(&xs, &ys)?;
            state.own_z[k] = z;
            state.own_y[k] = consensus_y_update(xs[0], z, ys[0]);
            for h in 0..state.mirror_y[k].len() {
                state.mirror_y[k][h] = consensus_y_update(xs[h + 1], z, ys[h + 1]);
            }
        }
        Ok(by_holder
            .into_iter()
            .map(|(holder, idx)| Message {
                round,
                sender: id,
                receiver: holder,
                payload: Payload {
                    rows: idx.iter().map(|&k| state.layout.shared[k].row).collect(),
                    cols: vec![],
                    values: DMatrix::from_fn(idx.len(), 1, |a, _| state.own_z[idx[a]]),
                },
            })
            .collect())
    }

    /// Holder side: stores received `Z`, updates held duals and returns the
    /// local consensus residual.
    pub fn consensus_y_phase(&mut self, inbox: Vec<Message<T>>) -> Result<f64> {
        let id = self.id;
        let state = self.consensus.as_mut().ok_or_else(|| Error::InvalidArgument(format!("agent {id} has no consensus state")))?;
        let by_owner = state.layout.held_by_owner();
        expect_senders(&inbox, by_owner.iter().map(|o| o.0), id, "z values")?;
        for (m, (owner, idx)) in inbox.iter().zip(&by_owner) {
            let rows: Vec<usize> = idx.iter().map(|&k| state.layout.held[k].row).collect();
            if m.sender != *owner || m.payload.rows != rows {
                return Err(Error::Protocol(format!("agent {id} received z values for unexpected rows from agent {}", m.sender)));
            }
            for (a, &k) in idx.iter().enumerate() {
                let z = m.payload.values[(a, 0)];
                state.held_z[k] = z;
                state.held_y[k] = consensus_y_update(state.held_x[k], z, state.held_y[k]);
            }
        }
        Ok(state.residual())
    }
}
