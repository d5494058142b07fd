//! Scalar comparison equations.
//!
//! The auxiliary equation
//!
//! ```text
//! ẏ = p(t) y + c(t) (L(t, y(t), y(t - h_1), ..., y(t - h_m)) + F0 |e(t)|)
//! ```
//!
//! started from `|φ|` bounds `|x(t)|` from above. Replacing every
//! coefficient by its sup gives the autonomous counterpart; linearizing `L`
//! on the ball `ζ <= ζ̄` gives a linear scalar DDE whose solution splits into
//! a homogeneous part and `F0` times a particular response.

use rayon::prelude::*;
use thiserror::Error;

use crate::dde::{
    integrate, uniform_grid, BlowUp, DdeError, DelayRhs, DelaySpec, HistoryFunction,
    IntegrateOptions, Trajectory,
};
use crate::expr::{EvalError, TimeExpr};
use crate::linear_system::FundamentalPath;
use crate::majorant::{Coefficient, LinearizedMajorant, Majorant};
use crate::path::SampledPath;
use crate::system::DdeSystem;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AuxError {
    #[error("requested horizon end {requested} exceeds the available {available}")]
    HorizonMismatch { requested: f64, available: f64 },
    #[error("expected {expected} slots, found {found}")]
    SlotMismatch { expected: usize, found: usize },
    #[error("empty sampling grid")]
    EmptyGrid,
    #[error("s = {s} outside [{t0}, {t_end})")]
    OutsideHorizon { s: f64, t0: f64, t_end: f64 },
    #[error("forcing amplitude must be finite and nonnegative, got {0}")]
    InvalidForcing(f64),
    #[error("scalar history must be one-dimensional and nonnegative")]
    InvalidHistory,
    #[error("condition factor {0} is below one")]
    ConditionBelowOne(f64),
    #[error("solution blew up at t = {t} (|y| = {magnitude:e})")]
    BlowUp { t: f64, magnitude: f64 },
    #[error(transparent)]
    Dde(#[from] DdeError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl From<BlowUp> for AuxError {
    fn from(b: BlowUp) -> Self {
        AuxError::BlowUp {
            t: b.t,
            magnitude: b.magnitude,
        }
    }
}

/// Scalar coefficient of `t`.
#[derive(Debug, Clone, PartialEq)]
pub enum ScalarFn {
    Const(f64),
    Expr(TimeExpr),
    Sampled(SampledPath),
    /// Euclidean norm of an expression vector.
    Norm(Vec<TimeExpr>),
}

/// Grid sup of a [`ScalarFn`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSup {
    pub value: f64,
    /// The sup sits at the right end of the grid with the function still
    /// rising, so a longer horizon would give a larger value.
    pub at_end: bool,
}

impl ScalarFn {
    pub fn eval(&self, t: f64) -> Result<f64, EvalError> {
        match self {
            ScalarFn::Const(v) => Ok(*v),
            ScalarFn::Expr(e) => e.eval(t),
            ScalarFn::Sampled(p) => Ok(p.eval(t)),
            ScalarFn::Norm(es) => {
                let mut acc = 0.0;
                for e in es {
                    let v = e.eval(t)?;
                    acc += v * v;
                }
                Ok(acc.sqrt())
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            ScalarFn::Const(_) => true,
            ScalarFn::Expr(e) => e.is_constant(),
            ScalarFn::Sampled(p) => p.values().windows(2).all(|w| w[0] == w[1]),
            ScalarFn::Norm(es) => es.iter().all(TimeExpr::is_constant),
        }
    }

    /// Euclidean norm of `es`, folded to a constant when possible.
    pub fn norm_of(es: &[TimeExpr]) -> Self {
        if es.iter().all(TimeExpr::is_constant) {
            let v = es
                .iter()
                .map(|e| e.constant_value().unwrap_or(0.0).powi(2))
                .sum::<f64>()
                .sqrt();
            ScalarFn::Const(v)
        } else {
            ScalarFn::Norm(es.to_vec())
        }
    }

    pub fn sup_over(&self, grid: &[f64]) -> Result<GridSup, AuxError> {
        if grid.is_empty() {
            return Err(AuxError::EmptyGrid);
        }
        if let ScalarFn::Const(v) = self {
            return Ok(GridSup {
                value: *v,
                at_end: false,
            });
        }
        let values = grid
            .iter()
            .map(|&t| self.eval(t))
            .collect::<Result<Vec<_>, _>>()?;
        let mut value = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (lo, hi) = (grid[0], grid[grid.len() - 1]);
        if let ScalarFn::Sampled(p) = self {
            for (&t, &v) in p.times().iter().zip(p.values()) {
                if t >= lo && t <= hi {
                    value = value.max(v);
                }
            }
        }
        Ok(GridSup {
            value,
            at_end: sup_at_end(&values, value),
        })
    }
}

fn sup_at_end(values: &[f64], sup: f64) -> bool {
    match values {
        [.., a, b] => *b >= sup && b > a,
        _ => false,
    }
}

/// `ẏ = p y + c (L(t, y, y(t - h_1), ...) + F0 |e(t)|)` on `[t0, t_end]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarAuxiliary {
    p: ScalarFn,
    c: ScalarFn,
    majorant: Majorant,
    delays: DelaySpec,
    f0: f64,
    envelope: ScalarFn,
    history: HistoryFunction,
    t0: f64,
    t_end: f64,
}

fn check_history(h: &HistoryFunction) -> Result<(), AuxError> {
    let ok = h.dim() == 1
        && match h {
            HistoryFunction::Constant(v) | HistoryFunction::ZeroWithInitial(v) => v[0] >= 0.0,
            HistoryFunction::Sampled { values, .. } => values.iter().all(|v| v[0] >= 0.0),
            HistoryFunction::Expr(_) => true,
        };
    if ok {
        Ok(())
    } else {
        Err(AuxError::InvalidHistory)
    }
}

fn check_forcing(f0: f64) -> Result<(), AuxError> {
    if f0 >= 0.0 && f0.is_finite() {
        Ok(())
    } else {
        Err(AuxError::InvalidForcing(f0))
    }
}

impl ScalarAuxiliary {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        p: ScalarFn,
        c: ScalarFn,
        majorant: Majorant,
        delays: DelaySpec,
        f0: f64,
        envelope: ScalarFn,
        history: HistoryFunction,
        t0: f64,
        t_end: f64,
    ) -> Result<Self, AuxError> {
        if majorant.slots() != delays.len() + 1 {
            return Err(AuxError::SlotMismatch {
                expected: delays.len() + 1,
                found: majorant.slots(),
            });
        }
        check_forcing(f0)?;
        check_history(&history)?;
        if let ScalarFn::Const(v) = c {
            if v < 1.0 {
                return Err(AuxError::ConditionBelowOne(v));
            }
        }
        if !(t_end > t0) {
            return Err(AuxError::HorizonMismatch {
                requested: t_end,
                available: t0,
            });
        }
        Ok(Self {
            p,
            c,
            majorant,
            delays,
            f0,
            envelope,
            history,
            t0,
            t_end,
        })
    }

    pub fn p(&self) -> &ScalarFn {
        &self.p
    }

    pub fn c(&self) -> &ScalarFn {
        &self.c
    }

    pub fn majorant(&self) -> &Majorant {
        &self.majorant
    }

    pub fn f0(&self) -> f64 {
        self.f0
    }

    pub fn envelope(&self) -> &ScalarFn {
        &self.envelope
    }

    pub fn history(&self) -> &HistoryFunction {
        &self.history
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn with_history(&self, history: HistoryFunction) -> Result<Self, AuxError> {
        check_history(&history)?;
        Ok(Self {
            history,
            ..self.clone()
        })
    }

    pub fn with_forcing(&self, f0: f64) -> Result<Self, AuxError> {
        check_forcing(f0)?;
        Ok(Self { f0, ..self.clone() })
    }

    /// Same equation with a different majorant (e.g. `L + L_R`).
    pub fn with_majorant(&self, majorant: Majorant) -> Result<Self, AuxError> {
        if majorant.slots() != self.delays.len() + 1 {
            return Err(AuxError::SlotMismatch {
                expected: self.delays.len() + 1,
                found: majorant.slots(),
            });
        }
        Ok(Self {
            majorant,
            ..self.clone()
        })
    }

    /// Same equation with a different delay specification of equal arity.
    pub fn with_delays(&self, delays: DelaySpec) -> Result<Self, AuxError> {
        if delays.len() != self.delays.len() {
            return Err(AuxError::SlotMismatch {
                expected: self.delays.len() + 1,
                found: delays.len() + 1,
            });
        }
        Ok(Self {
            delays,
            ..self.clone()
        })
    }
}

impl DelayRhs for ScalarAuxiliary {
    fn dim(&self) -> usize {
        1
    }

    fn delays(&self) -> &DelaySpec {
        &self.delays
    }

    fn eval(&self, t: f64, slots: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        let mut drive = self.majorant.eval_clamped(t, slots)?;
        if self.f0 != 0.0 {
            drive += self.f0 * self.envelope.eval(t)?;
        }
        out[0] = self.p.eval(t)? * slots[0] + self.c.eval(t)? * drive;
        Ok(())
    }
}

/// Auxiliary equation of `sys` with `p`, `c` from `fp` and history `|φ|`.
pub fn build_auxiliary(
    sys: &DdeSystem,
    fp: &FundamentalPath,
    l: &Majorant,
    hist: &HistoryFunction,
    t_end: f64,
    grid_step: f64,
) -> Result<ScalarAuxiliary, AuxError> {
    if t_end > fp.t_end() + 1e-9 {
        return Err(AuxError::HorizonMismatch {
            requested: t_end,
            available: fp.t_end(),
        });
    }
    let t0 = fp.t0();
    let history = hist.norm_history(t0, sys.delays().h_bar(), grid_step)?;
    ScalarAuxiliary::new(
        ScalarFn::Sampled(fp.p_path()),
        ScalarFn::Sampled(fp.c_path()),
        l.clone(),
        sys.delays().clone(),
        sys.f0(),
        ScalarFn::norm_of(sys.envelope()),
        history,
        t0,
        t_end,
    )
}

pub fn solve_auxiliary(aux: &ScalarAuxiliary, t_end: f64, step: f64) -> Result<Trajectory, AuxError> {
    solve_auxiliary_with(aux, t_end, IntegrateOptions::new(step))
}

pub fn solve_auxiliary_with(
    aux: &ScalarAuxiliary,
    t_end: f64,
    opts: IntegrateOptions,
) -> Result<Trajectory, AuxError> {
    if t_end > aux.t_end + 1e-9 {
        return Err(AuxError::HorizonMismatch {
            requested: t_end,
            available: aux.t_end,
        });
    }
    Ok(integrate(aux, &aux.history, aux.t0, t_end, opts)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutonomousAuxiliary {
    pub aux: ScalarAuxiliary,
    pub p_hat: f64,
    pub c_hat: f64,
    /// Some sup was attained at the horizon end while still rising.
    pub horizon_dependent: bool,
}

/// Replaces every coefficient by its sup over a grid on the horizon.
pub fn build_autonomous(aux: &ScalarAuxiliary, sup_grid_step: f64) -> Result<AutonomousAuxiliary, AuxError> {
    if !(sup_grid_step > 0.0) {
        return Err(AuxError::EmptyGrid);
    }
    let grid = uniform_grid(aux.t0, aux.t_end, sup_grid_step);
    let p = aux.p.sup_over(&grid)?;
    let c = aux.c.sup_over(&grid)?;
    let e = aux.envelope.sup_over(&grid)?;
    let mut horizon_dependent = p.at_end || c.at_end || e.at_end;
    let majorant = aux.majorant.map_coefficients(|coef| -> Result<_, AuxError> {
        if let Coefficient::Const(v) = coef {
            return Ok(Coefficient::Const(*v));
        }
        let values = grid
            .iter()
            .map(|&t| coef.eval(t))
            .collect::<Result<Vec<_>, _>>()?;
        let sup = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        horizon_dependent |= sup_at_end(&values, sup);
        Ok(Coefficient::Const(sup))
    })?;
    let out = ScalarAuxiliary {
        p: ScalarFn::Const(p.value),
        c: ScalarFn::Const(c.value.max(1.0)),
        majorant,
        envelope: ScalarFn::Const(e.value),
        ..aux.clone()
    };
    Ok(AutonomousAuxiliary {
        aux: out,
        p_hat: p.value,
        c_hat: c.value.max(1.0),
        horizon_dependent,
    })
}

/// Slot coefficients `μ_j(t)` of a linear scalar DDE.
#[derive(Debug, Clone, PartialEq)]
pub enum SlotCoefficients {
    Linearized(LinearizedMajorant),
    Explicit(Vec<ScalarFn>),
}

impl SlotCoefficients {
    fn len(&self) -> usize {
        match self {
            SlotCoefficients::Linearized(lm) => lm.slot_count(),
            SlotCoefficients::Explicit(v) => v.len(),
        }
    }

    fn eval(&self, j: usize, t: f64) -> Result<f64, EvalError> {
        match self {
            SlotCoefficients::Linearized(lm) => lm.mu(j, t),
            SlotCoefficients::Explicit(v) => v[j].eval(t),
        }
    }
}

/// `u̇ = P(t) u + Σ_j c(t) μ_j(t) u(t - h_j) + c(t) F0 |e(t)|`
/// with `P = p + c μ_1`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearScalarDde {
    p: ScalarFn,
    c: ScalarFn,
    mu: SlotCoefficients,
    delays: DelaySpec,
    f0: f64,
    envelope: ScalarFn,
    history: HistoryFunction,
    t0: f64,
    t_end: f64,
}

impl LinearScalarDde {
    /// A linear scalar DDE with explicit slot coefficients; delayed ones may
    /// be negative here, which voids the comparison property.
    #[allow(clippy::too_many_arguments)]
    pub fn explicit(
        p: ScalarFn,
        c: ScalarFn,
        mu: Vec<ScalarFn>,
        delays: DelaySpec,
        f0: f64,
        envelope: ScalarFn,
        history: HistoryFunction,
        t0: f64,
        t_end: f64,
    ) -> Result<Self, AuxError> {
        if mu.len() != delays.len() + 1 {
            return Err(AuxError::SlotMismatch {
                expected: delays.len() + 1,
                found: mu.len(),
            });
        }
        check_forcing(f0)?;
        if history.dim() != 1 {
            return Err(AuxError::InvalidHistory);
        }
        Ok(Self {
            p,
            c,
            mu: SlotCoefficients::Explicit(mu),
            delays,
            f0,
            envelope,
            history,
            t0,
            t_end,
        })
    }

    pub fn slot_coefficients(&self) -> &SlotCoefficients {
        &self.mu
    }

    /// Smallest delayed coefficient `c μ_j` (`j >= 2`) over `grid`.
    pub fn min_delayed_coefficient(&self, grid: &[f64]) -> Result<f64, EvalError> {
        let mut min = f64::INFINITY;
        for &t in grid {
            for j in 1..self.mu.len() {
                min = min.min(self.delayed_coefficient(j, t)?);
            }
        }
        Ok(min)
    }

    pub fn f0(&self) -> f64 {
        self.f0
    }

    pub fn history(&self) -> &HistoryFunction {
        &self.history
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    /// Linearization radius, when built from a majorant.
    pub fn zeta_bar(&self) -> Option<f64> {
        match &self.mu {
            SlotCoefficients::Linearized(lm) => Some(lm.zeta_bar()),
            SlotCoefficients::Explicit(_) => None,
        }
    }

    /// `P(t) = p(t) + c(t) μ_1(t)`.
    pub fn drift(&self, t: f64) -> Result<f64, EvalError> {
        Ok(self.p.eval(t)? + self.c.eval(t)? * self.mu.eval(0, t)?)
    }

    /// `c(t) μ_j(t)` for delayed slot `j >= 1`.
    pub fn delayed_coefficient(&self, j: usize, t: f64) -> Result<f64, EvalError> {
        Ok(self.c.eval(t)? * self.mu.eval(j, t)?)
    }

    pub fn with_forcing(&self, f0: f64) -> Result<Self, AuxError> {
        check_forcing(f0)?;
        Ok(Self { f0, ..self.clone() })
    }

    pub fn with_history(&self, history: HistoryFunction) -> Result<Self, AuxError> {
        check_history(&history)?;
        Ok(Self {
            history,
            ..self.clone()
        })
    }

    pub fn solve(&self, t_end: f64, step: f64) -> Result<Trajectory, AuxError> {
        if t_end > self.t_end + 1e-9 {
            return Err(AuxError::HorizonMismatch {
                requested: t_end,
                available: self.t_end,
            });
        }
        Ok(integrate(self, &self.history, self.t0, t_end, IntegrateOptions::new(step))?)
    }
}

impl DelayRhs for LinearScalarDde {
    fn dim(&self) -> usize {
        1
    }

    fn delays(&self) -> &DelaySpec {
        &self.delays
    }

    fn eval(&self, t: f64, slots: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        let c = self.c.eval(t)?;
        let mut acc = 0.0;
        for (j, y) in slots.iter().enumerate() {
            acc += self.mu.eval(j, t)? * y;
        }
        if self.f0 != 0.0 {
            acc += self.f0 * self.envelope.eval(t)?;
        }
        out[0] = self.p.eval(t)? * slots[0] + c * acc;
        Ok(())
    }
}

pub fn build_linearized(aux: &ScalarAuxiliary, lm: &LinearizedMajorant) -> Result<LinearScalarDde, AuxError> {
    if lm.slot_count() != aux.majorant.slots() {
        return Err(AuxError::SlotMismatch {
            expected: aux.majorant.slots(),
            found: lm.slot_count(),
        });
    }
    Ok(LinearScalarDde {
        p: aux.p.clone(),
        c: aux.c.clone(),
        mu: SlotCoefficients::Linearized(lm.clone()),
        delays: aux.delays.clone(),
        f0: aux.f0,
        envelope: aux.envelope.clone(),
        history: aux.history.clone(),
        t0: aux.t0,
        t_end: aux.t_end,
    })
}

/// `C(·, s)`: homogeneous solution from `s` with zero history and unit value.
pub fn cauchy_function(lin: &LinearScalarDde, s: f64, t_end: f64, step: f64) -> Result<Trajectory, AuxError> {
    if !(s >= lin.t0 && s < t_end) || t_end > lin.t_end + 1e-9 {
        return Err(AuxError::OutsideHorizon {
            s,
            t0: lin.t0,
            t_end: t_end.min(lin.t_end),
        });
    }
    let hom = lin.with_forcing(0.0)?;
    Ok(integrate(
        &hom,
        &HistoryFunction::ZeroWithInitial(vec![1.0]),
        s,
        t_end,
        IntegrateOptions::new(step),
    )?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticularResponse {
    pub trajectory: Trajectory,
    /// `max |u_nh|` over the knots.
    pub sup: f64,
    /// Still rising over the last tenth of the horizon.
    pub still_growing: bool,
}

/// `u_nh`: solution with zero history and `F0 = 1`.
pub fn particular_response(lin: &LinearScalarDde, t_end: f64, step: f64) -> Result<ParticularResponse, AuxError> {
    let forced = lin.with_forcing(1.0)?.with_history(HistoryFunction::zeros(1))?;
    let trajectory = forced.solve(t_end, step)?;
    if let Some(b) = trajectory.blowup() {
        return Err(b.into());
    }
    let values = trajectory.scalar_values();
    let sup = values.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let last = values[values.len() - 1];
    let earlier = trajectory.eval_scalar(t_end - 0.1 * (t_end - lin.t0))?;
    let still_growing = last - earlier > 1e-6 * sup.max(1.0);
    Ok(ParticularResponse {
        trajectory,
        sup,
        still_growing,
    })
}

/// `∫_{t0}^{t} C(t, s) c(s) |e(s)| ds` by the trapezoidal rule on a grid of
/// spacing `quad_step`; one Cauchy solve per node.
pub fn cauchy_quadrature(lin: &LinearScalarDde, t: f64, quad_step: f64, step: f64) -> Result<f64, AuxError> {
    if !(t > lin.t0) || t > lin.t_end + 1e-9 {
        return Err(AuxError::OutsideHorizon {
            s: t,
            t0: lin.t0,
            t_end: lin.t_end,
        });
    }
    let nodes = uniform_grid(lin.t0, t, quad_step);
    let integrand = nodes
        .par_iter()
        .map(|&s| -> Result<f64, AuxError> {
            let weight = lin.c.eval(s)? * lin.envelope.eval(s)?;
            if weight == 0.0 {
                return Ok(0.0);
            }
            let kernel = if s >= t {
                1.0
            } else {
                cauchy_function(lin, s, t, step)?.eval_scalar(t)?
            };
            Ok(kernel * weight)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut acc = 0.0;
    for k in 1..nodes.len() {
        acc += 0.5 * (nodes[k] - nodes[k - 1]) * (integrand[k] + integrand[k - 1]);
    }
    Ok(acc)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuperpositionReport {
    /// `max |u - (u_h + F0 u_nh)|` over the knots.
    pub residual: f64,
    pub full: Trajectory,
    pub homogeneous: Trajectory,
    pub particular: Trajectory,
}

pub fn superposition(
    lin: &LinearScalarDde,
    hist: &HistoryFunction,
    f0: f64,
    t_end: f64,
    step: f64,
) -> Result<SuperpositionReport, AuxError> {
    let full = lin.with_forcing(f0)?.with_history(hist.clone())?;
    let hom = lin.with_forcing(0.0)?.with_history(hist.clone())?;
    let part = lin.with_forcing(1.0)?.with_history(HistoryFunction::zeros(1))?;
    let (full, (homogeneous, particular)) = rayon::join(
        || full.solve(t_end, step),
        || rayon::join(|| hom.solve(t_end, step), || part.solve(t_end, step)),
    );
    let (full, homogeneous, particular) = (full?, homogeneous?, particular?);
    for tr in [&full, &homogeneous, &particular] {
        if let Some(b) = tr.blowup() {
            return Err(b.into());
        }
    }
    let (u, uh, unh) = (
        full.scalar_values(),
        homogeneous.scalar_values(),
        particular.scalar_values(),
    );
    let residual = u
        .iter()
        .zip(&uh)
        .zip(&unh)
        .map(|((a, b), c)| (a - (b + f0 * c)).abs())
        .fold(0.0, f64::max);
    Ok(SuperpositionReport {
        residual,
        full,
        homogeneous,
        particular,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse_expr, TimeVaryingMatrix};
    use crate::linear_system::compute_fundamental;
    use crate::majorant::{
        build_majorant, linearize, LinearBlock, MajorantTerm, MonomialFactor, MonomialTerm,
        MonomialVectorField,
    };

    fn const_majorant(slots: usize, terms: &[(f64, &[u32])]) -> Majorant {
        Majorant::new(
            slots,
            terms
                .iter()
                .map(|(c, e)| MajorantTerm {
                    coefficient: Coefficient::Const(*c),
                    exponents: e.to_vec(),
                })
                .collect(),
        )
        .unwrap()
    }

    fn scalar(p: f64, l: Majorant, delays: DelaySpec, f0: f64, hist: f64, t_end: f64) -> ScalarAuxiliary {
        ScalarAuxiliary::new(
            ScalarFn::Const(p),
            ScalarFn::Const(1.0),
            l,
            delays,
            f0,
            ScalarFn::Const(1.0),
            HistoryFunction::Constant(vec![hist]),
            0.0,
            t_end,
        )
        .unwrap()
    }

    fn sec5_system(lambda: &str, f0: f64) -> (DdeSystem, Majorant) {
        let a0 = TimeVaryingMatrix::from_rows(vec![
            vec![parse_expr(lambda).unwrap(), TimeExpr::Num(0.0)],
            vec![TimeExpr::Num(0.0), parse_expr(lambda).unwrap()],
        ])
        .unwrap();
        let a1 = TimeVaryingMatrix::parse_rows(&[
            vec!["0", "1"],
            vec!["-(1 + 0.1*(sin(t) + sin(pi*t)))", "-0.5"],
        ])
        .unwrap()
        .unwrap();
        let field = MonomialVectorField::new(
            2,
            2,
            vec![
                LinearBlock {
                    slot: 0,
                    scale: 1.0,
                    matrix: a1.clone(),
                },
                LinearBlock {
                    slot: 1,
                    scale: 0.1,
                    matrix: a1,
                },
            ],
            vec![MonomialTerm {
                component: 1,
                coefficient: TimeExpr::Num(0.1),
                factors: vec![MonomialFactor {
                    slot: 1,
                    component: 1,
                    exponent: 3,
                }],
            }],
        )
        .unwrap();
        let l = build_majorant(&field);
        let sys = DdeSystem::new(
            a0,
            field,
            DelaySpec::constant(&[0.5]).unwrap(),
            f0,
            vec![TimeExpr::Num(0.0), parse_expr("sin(10*t)").unwrap()],
        )
        .unwrap();
        (sys, l)
    }

    #[test]
    fn sec5_auxiliary_has_lambda_drift_and_unit_condition() {
        let (sys, l) = sec5_system("-3 + 0.1*sin(5*t)", 0.0);
        let fp = compute_fundamental(sys.a(), 0.0, 5.0, 1e-3).unwrap();
        let hist = HistoryFunction::Constant(vec![0.3, 0.4]);
        let aux = build_auxiliary(&sys, &fp, &l, &hist, 5.0, 1e-2).unwrap();
        assert_eq!(aux.history(), &HistoryFunction::Constant(vec![0.5]));
        for t in [0.0f64, 0.77, 2.5, 5.0] {
            let lambda = -3.0 + 0.1 * (5.0 * t).sin();
            assert!((aux.p().eval(t).unwrap() - lambda).abs() < 1e-4);
            assert!((aux.c().eval(t).unwrap() - 1.0).abs() < 1e-9);
        }
        assert!(matches!(
            build_auxiliary(&sys, &fp, &l, &hist, 6.0, 1e-2),
            Err(AuxError::HorizonMismatch { .. })
        ));
    }

    #[test]
    fn zero_field_reduces_to_linear_drift() {
        let aux = scalar(-1.0, Majorant::zero(1), DelaySpec::none(), 0.0, 1.0, 3.0);
        let tr = solve_auxiliary(&aux, 3.0, 1e-2).unwrap();
        for t in [0.5, 1.0, 3.0] {
            assert!((tr.eval_scalar(t).unwrap() - (-t).exp()).abs() < 1e-9);
        }
        let zero = aux.with_history(HistoryFunction::zeros(1)).unwrap();
        let tr = solve_auxiliary(&zero, 3.0, 1e-2).unwrap();
        assert!(tr.scalar_values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stays_nonnegative() {
        let l = const_majorant(2, &[(0.5, &[0, 1]), (0.2, &[0, 3])]);
        let aux = scalar(-4.0, l, DelaySpec::constant(&[0.5]).unwrap(), 0.0, 0.8, 20.0);
        let step = 0.01;
        let tr = solve_auxiliary(&aux, 20.0, step).unwrap();
        let min = tr.scalar_values().iter().copied().fold(f64::INFINITY, f64::min);
        assert!(min >= -10.0 * step.powi(4), "min {min}");
    }

    #[test]
    fn autonomous_sups() {
        let aux = ScalarAuxiliary::new(
            ScalarFn::Expr(parse_expr("-3 + 0.1*sin(5*t)").unwrap()),
            ScalarFn::Expr(parse_expr("exp(t)").unwrap()),
            Majorant::zero(1),
            DelaySpec::none(),
            0.0,
            ScalarFn::Const(1.0),
            HistoryFunction::Constant(vec![1.0]),
            0.0,
            2.0,
        )
        .unwrap();
        let auto = build_autonomous(&aux, 1e-4).unwrap();
        assert!((auto.p_hat + 2.9).abs() < 1e-8);
        assert!((auto.c_hat - 2.0f64.exp()).abs() < 1e-12);
        assert!(auto.horizon_dependent);

        let constant = scalar(-1.0, const_majorant(1, &[(0.3, &[2])]), DelaySpec::none(), 0.5, 1.0, 4.0);
        let auto = build_autonomous(&constant, 1e-2).unwrap();
        assert_eq!(auto.aux, constant);
        assert!(!auto.horizon_dependent);
        assert!(matches!(build_autonomous(&constant, 0.0), Err(AuxError::EmptyGrid)));
    }

    #[test]
    fn autonomous_dominates_on_sec5() {
        let (sys, l) = sec5_system("-3 + exp(-t)", 0.5);
        let fp = compute_fundamental(sys.a(), 0.0, 10.0, 1e-2).unwrap();
        let hist = HistoryFunction::Constant(vec![0.6, 0.0]);
        let aux = build_auxiliary(&sys, &fp, &l, &hist, 10.0, 1e-2).unwrap();
        let auto = build_autonomous(&aux, 1e-3).unwrap();
        let y = solve_auxiliary(&aux, 10.0, 1e-2).unwrap();
        let yhat = solve_auxiliary(&auto.aux, 10.0, 1e-2).unwrap();
        for (a, b) in y.scalar_values().iter().zip(yhat.scalar_values()) {
            assert!(*a <= b + 1e-9);
        }
    }

    #[test]
    fn linearized_coefficients() {
        let (sys, l) = sec5_system("-3", 0.0);
        let fp = compute_fundamental(sys.a(), 0.0, 2.0, 1e-2).unwrap();
        let aux = build_auxiliary(&sys, &fp, &l, &HistoryFunction::Constant(vec![1.0, 0.0]), 2.0, 1e-2).unwrap();
        let lin = build_linearized(&aux, &linearize(&l, 1.0).unwrap()).unwrap();
        let lin2 = build_linearized(&aux, &linearize(&l, 2.0).unwrap()).unwrap();
        let t = 0.9;
        let a1 = sys.field().linear_blocks()[0].matrix.spectral_norm(t).unwrap();
        assert!((lin.drift(t).unwrap() - (-3.0 + a1)).abs() < 1e-6);
        let mu2 = lin.delayed_coefficient(1, t).unwrap();
        assert!((mu2 - (0.1 * a1 + 0.1)).abs() < 1e-9);
        let mu2_doubled = lin2.delayed_coefficient(1, t).unwrap();
        assert!((mu2_doubled - (0.1 * a1 + 0.4)).abs() < 1e-9);

        let other = linearize(&const_majorant(3, &[(1.0, &[1, 0, 0])]), 1.0).unwrap();
        assert!(matches!(build_linearized(&aux, &other), Err(AuxError::SlotMismatch { .. })));
    }

    fn linear_ode(a: f64, f0: f64, t_end: f64) -> LinearScalarDde {
        let aux = scalar(a, Majorant::zero(1), DelaySpec::none(), f0, 0.0, t_end);
        build_linearized(&aux, &linearize(&Majorant::zero(1), 1.0).unwrap()).unwrap()
    }

    #[test]
    fn cauchy_function_examples() {
        let lin = linear_ode(-0.7, 0.0, 5.0);
        let c = cauchy_function(&lin, 1.0, 5.0, 1e-2).unwrap();
        assert_eq!(c.eval_scalar(1.0).unwrap(), 1.0);
        assert!((c.eval_scalar(4.0).unwrap() - (-0.7f64 * 3.0).exp()).abs() < 1e-9);

        // ẏ = -y(t - 1)
        let lin = LinearScalarDde::explicit(
            ScalarFn::Const(0.0),
            ScalarFn::Const(1.0),
            vec![ScalarFn::Const(0.0), ScalarFn::Const(-1.0)],
            DelaySpec::constant(&[1.0]).unwrap(),
            0.0,
            ScalarFn::Const(0.0),
            HistoryFunction::zeros(1),
            0.0,
            3.0,
        )
        .unwrap();
        assert_eq!(lin.min_delayed_coefficient(&[0.0, 1.0]).unwrap(), -1.0);
        let c = cauchy_function(&lin, 0.0, 3.0, 1.0 / 64.0).unwrap();
        assert_eq!(c.eval_scalar(0.7).unwrap(), 1.0);
        assert!((c.eval_scalar(1.5).unwrap() - 0.5).abs() < 1e-12);
        assert!(c.eval_scalar(2.0).unwrap().abs() < 1e-12);
        assert!(matches!(cauchy_function(&lin, 3.0, 3.0, 0.01), Err(AuxError::OutsideHorizon { .. })));
        assert!(matches!(cauchy_function(&lin, -1.0, 3.0, 0.01), Err(AuxError::OutsideHorizon { .. })));
    }

    #[test]
    fn particular_response_of_relaxation() {
        let lin = linear_ode(-1.0, 0.0, 20.0);
        let r = particular_response(&lin, 20.0, 1e-3).unwrap();
        assert!((r.sup - 1.0).abs() < 1e-4);
        assert!(!r.still_growing);
        for t in [1.0, 2.0, 5.0] {
            let direct = r.trajectory.eval_scalar(t).unwrap();
            assert!((direct - (1.0 - (-t).exp())).abs() < 1e-9);
        }
        let lin = linear_ode(-1.0, 0.0, 6.0);
        for t in [1.0, 2.0, 5.0] {
            let quad = cauchy_quadrature(&lin, t, 1e-3, 1e-3).unwrap();
            assert!((quad - (1.0 - (-t).exp())).abs() < 1e-5, "t {t}: {quad}");
        }
        let silent = ScalarAuxiliary::new(
            ScalarFn::Const(-1.0),
            ScalarFn::Const(1.0),
            Majorant::zero(1),
            DelaySpec::none(),
            0.0,
            ScalarFn::Const(0.0),
            HistoryFunction::zeros(1),
            0.0,
            5.0,
        )
        .unwrap();
        let lin = build_linearized(&silent, &linearize(&Majorant::zero(1), 1.0).unwrap()).unwrap();
        assert_eq!(particular_response(&lin, 5.0, 1e-2).unwrap().sup, 0.0);
        let growing = linear_ode(0.5, 0.0, 5.0);
        assert!(particular_response(&growing, 5.0, 1e-2).unwrap().still_growing);
    }

    #[test]
    fn superposition_residuals() {
        let l = const_majorant(2, &[(0.6, &[0, 1]), (0.1, &[0, 3])]);
        let mut aux = scalar(-2.0, l.clone(), DelaySpec::constant(&[0.5]).unwrap(), 0.0, 0.0, 10.0);
        aux.envelope = ScalarFn::Expr(parse_expr("sin(10*t)").unwrap());
        let lin = build_linearized(&aux, &linearize(&l, 1.0).unwrap()).unwrap();
        let hist = HistoryFunction::Constant(vec![0.7]);
        let r = superposition(&lin, &hist, 0.0, 10.0, 1e-2).unwrap();
        assert!(r.residual <= 1e-12);
        let r = superposition(&lin, &HistoryFunction::zeros(1), 0.5, 10.0, 1e-2).unwrap();
        assert!(r.residual <= 1e-12);
        let r = superposition(&lin, &hist, 0.5, 10.0, 1e-3).unwrap();
        assert!(r.residual <= 1e-8, "{}", r.residual);
    }
}
