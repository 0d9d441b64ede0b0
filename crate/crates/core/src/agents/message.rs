use std::fmt;

use nalgebra::DMatrix;

use crate::Scalar;

/// Kind of data a message carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PayloadKind {
    /// Measured state components of the sender.
    StateMeasurement,
    /// Rows of `Phi` owned by the sender, restricted to the receiver's columns.
    PhiRows,
    /// Columns of `Psi` owned by the sender, restricted to the receiver's rows.
    PsiCols,
    /// The sender's local copies of trajectory entries owned by the receiver.
    XCopy,
    /// Consensus values of trajectory entries owned by the sender.
    ZValue,
}

impl PayloadKind {
    pub fn name(self) -> &'static str {
        match self {
            PayloadKind::StateMeasurement => "state_measurement",
            PayloadKind::PhiRows => "phi_rows",
            PayloadKind::PsiCols => "psi_cols",
            PayloadKind::XCopy => "x_copy",
            PayloadKind::ZValue => "z_value",
        }
    }
}

impl fmt::Display for PayloadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Communication round. `seq` increases strictly over the lifetime of a
/// network; the other fields are descriptive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RoundId {
    pub seq: u64,
    /// MPC step.
    pub step: usize,
    /// Outer ADMM iteration.
    pub outer: usize,
    /// Inner consensus iteration, when inside the consensus loop.
    pub inner: Option<usize>,
    pub kind: PayloadKind,
}

impl fmt::Display for RoundId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{} (step {}, iter {}", self.seq, self.step, self.outer)?;
        if let Some(n) = self.inner {
            write!(f, ", inner {n}")?;
        }
        write!(f, ", {})", self.kind)
    }
}

/// A slice of a matrix addressed by global indices.
///
/// For `Phi`/`Psi` slices `rows` are global rows of `Phi` and `cols` global
/// columns. Trajectory entries (`x_copy`, `z_value`) use `Phi` row numbers
/// and an empty `cols` with a single value column. State measurements use
/// `cols` for the state components and a single value row.
#[derive(Debug, Clone, PartialEq)]
pub struct Payload<T: Scalar> {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub values: DMatrix<T>,
}

impl<T: Scalar> Payload<T> {
    /// Size on the wire: values plus index sets.
    pub fn bytes(&self) -> usize {
        self.values.len() * std::mem::size_of::<T>() + (self.rows.len() + self.cols.len()) * std::mem::size_of::<u32>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Message<T: Scalar> {
    pub round: RoundId,
    pub sender: usize,
    pub receiver: usize,
    pub payload: Payload<T>,
}

impl<T: Scalar> Message<T> {
    pub fn kind(&self) -> PayloadKind {
        self.round.kind
    }
}
