//! Vector delay systems `ẋ = A(t)x + f(t, x(t), x(t - h_1), ...) + F0 e(t)`.

use thiserror::Error;

use crate::dde::{uniform_grid, DelayRhs, DelaySpec};
use crate::expr::{EvalError, TimeExpr, TimeVaryingMatrix};
use crate::linalg::matvec;
use crate::majorant::MonomialVectorField;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SystemError {
    #[error("{what} has dimension {found}, expected {expected}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("vector field uses {found} slots but the delays give {expected}")]
    Slots { expected: usize, found: usize },
    #[error("forcing amplitude must be finite and nonnegative, got {0}")]
    Forcing(f64),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DdeSystem {
    a: TimeVaryingMatrix,
    field: MonomialVectorField,
    delays: DelaySpec,
    f0: f64,
    envelope: Vec<TimeExpr>,
}

impl DdeSystem {
    pub fn new(
        a: TimeVaryingMatrix,
        field: MonomialVectorField,
        delays: DelaySpec,
        f0: f64,
        envelope: Vec<TimeExpr>,
    ) -> Result<Self, SystemError> {
        let n = a.dim();
        if field.dim() != n {
            return Err(SystemError::Dimension {
                what: "vector field",
                expected: n,
                found: field.dim(),
            });
        }
        if envelope.len() != n {
            return Err(SystemError::Dimension {
                what: "forcing envelope",
                expected: n,
                found: envelope.len(),
            });
        }
        if field.slots() != delays.len() + 1 {
            return Err(SystemError::Slots {
                expected: delays.len() + 1,
                found: field.slots(),
            });
        }
        if !(f0 >= 0.0) || !f0.is_finite() {
            return Err(SystemError::Forcing(f0));
        }
        Ok(Self {
            a,
            field,
            delays,
            f0,
            envelope,
        })
    }

    pub fn a(&self) -> &TimeVaryingMatrix {
        &self.a
    }

    pub fn field(&self) -> &MonomialVectorField {
        &self.field
    }

    pub fn f0(&self) -> f64 {
        self.f0
    }

    pub fn envelope(&self) -> &[TimeExpr] {
        &self.envelope
    }

    /// Same system with the forcing amplitude replaced.
    pub fn with_forcing(&self, f0: f64) -> Result<Self, SystemError> {
        Self::new(
            self.a.clone(),
            self.field.clone(),
            self.delays.clone(),
            f0,
            self.envelope.clone(),
        )
    }

    /// `|e(t)|`.
    pub fn envelope_norm(&self, t: f64) -> Result<f64, EvalError> {
        let mut acc = 0.0;
        for e in &self.envelope {
            let v = e.eval(t)?;
            acc += v * v;
        }
        Ok(acc.sqrt())
    }

    /// `sup |e(t)|` over a uniform grid on `[t0, t_end]`.
    pub fn envelope_sup(&self, t0: f64, t_end: f64, grid_step: f64) -> Result<f64, EvalError> {
        let mut sup: f64 = 0.0;
        for t in uniform_grid(t0, t_end, grid_step) {
            sup = sup.max(self.envelope_norm(t)?);
        }
        Ok(sup)
    }
}

impl DelayRhs for DdeSystem {
    fn dim(&self) -> usize {
        self.a.dim()
    }

    fn delays(&self) -> &DelaySpec {
        &self.delays
    }

    fn eval(&self, t: f64, slots: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        let n = self.a.dim();
        let mut buf = [0.0; 16];
        let mut heap;
        let m: &mut [f64] = if n * n <= buf.len() {
            &mut buf[..n * n]
        } else {
            heap = vec![0.0; n * n];
            &mut heap
        };
        self.a.eval_into(t, m)?;
        matvec(m, &slots[..n], out);
        self.field.add_eval(t, slots, out)?;
        if self.f0 != 0.0 {
            for (o, e) in out.iter_mut().zip(&self.envelope) {
                *o += self.f0 * e.eval(t)?;
            }
        }
        Ok(())
    }
}
