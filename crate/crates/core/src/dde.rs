//! Fixed-step method-of-steps integration of delay differential equations.
//!
//! Classical RK4 marches the state on a uniform grid. Delayed arguments are
//! read from the already committed part of the trajectory through cubic
//! Hermite interpolation, or from the history function for times before
//! `t0`. Requiring `step <= h_floor / 4` guarantees that every delayed read
//! of a stage lands in committed territory, so no extrapolation is needed.
//!
//! Divergence is an outcome, not an error: a non-finite state (or a norm
//! above the optional abort threshold) ends the march and is recorded on the
//! returned [`Trajectory`].

use thiserror::Error;

use crate::expr::{EvalError, TimeExpr};
use crate::linalg::norm2;

/// Slack allowed on delay bounds and domain checks (absolute, seconds).
const TIME_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DdeError {
    #[error("step {step} must be positive and at most h_floor/4 = {limit}")]
    InvalidStep { step: f64, limit: f64 },
    #[error("integration horizon [{t0}, {t_end}] is empty or not finite")]
    InvalidHorizon { t0: f64, t_end: f64 },
    #[error("invalid delay specification: {0}")]
    InvalidDelaySpec(String),
    #[error("delay channel {channel} = {value} at t = {t} violates [{h_floor}, {h_bar}]")]
    DelayBound {
        channel: usize,
        t: f64,
        value: f64,
        h_floor: f64,
        h_bar: f64,
    },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("t = {t} outside trajectory domain [{lo}, {hi}]")]
    OutOfDomain { t: f64, lo: f64, hi: f64 },
    #[error("delayed read at {t} is ahead of the committed solution ({committed})")]
    LookupAhead { t: f64, committed: f64 },
    #[error("history is not finite at t = {t}")]
    NonFiniteHistory { t: f64 },
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Time-only delays `h_i(t)` with the global bounds `h_floor <= h_i <= h_bar`.
#[derive(Debug, Clone, PartialEq)]
pub struct DelaySpec {
    channels: Vec<TimeExpr>,
    h_bar: f64,
    h_floor: f64,
}

impl DelaySpec {
    pub fn new(channels: Vec<TimeExpr>, h_bar: f64, h_floor: f64) -> Result<Self, DdeError> {
        if channels.is_empty() {
            return Ok(Self::none());
        }
        if !(h_floor > 0.0) || !h_bar.is_finite() || h_floor > h_bar {
            return Err(DdeError::InvalidDelaySpec(format!(
                "need 0 < h_floor <= h_bar < inf, got h_floor = {h_floor}, h_bar = {h_bar}"
            )));
        }
        Ok(Self {
            channels,
            h_bar,
            h_floor,
        })
    }

    /// Constant delays.
    pub fn constant(values: &[f64]) -> Result<Self, DdeError> {
        if values.is_empty() {
            return Ok(Self::none());
        }
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(0.0, f64::max);
        Self::new(values.iter().map(|&h| TimeExpr::Num(h)).collect(), hi, lo)
    }

    /// No delay channels (an ODE).
    pub fn none() -> Self {
        Self {
            channels: Vec::new(),
            h_bar: 0.0,
            h_floor: f64::INFINITY,
        }
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    pub fn h_bar(&self) -> f64 {
        self.h_bar
    }

    pub fn h_floor(&self) -> f64 {
        self.h_floor
    }

    pub fn channels(&self) -> &[TimeExpr] {
        &self.channels
    }

    /// Channels of `self` followed by those of `other`; bounds are merged.
    pub fn concat(&self, other: &DelaySpec) -> DelaySpec {
        if self.is_empty() {
            return other.clone();
        }
        if other.is_empty() {
            return self.clone();
        }
        let mut channels = self.channels.clone();
        channels.extend(other.channels.iter().cloned());
        DelaySpec {
            channels,
            h_bar: self.h_bar.max(other.h_bar),
            h_floor: self.h_floor.min(other.h_floor),
        }
    }

    /// Evaluates every channel at `t`, checking the declared bounds.
    pub fn eval_into(&self, t: f64, out: &mut [f64]) -> Result<(), DdeError> {
        for (channel, (slot, e)) in out.iter_mut().zip(&self.channels).enumerate() {
            let value = e.eval(t)?;
            if value < self.h_floor - TIME_SLACK || value > self.h_bar + TIME_SLACK {
                return Err(DdeError::DelayBound {
                    channel,
                    t,
                    value,
                    h_floor: self.h_floor,
                    h_bar: self.h_bar,
                });
            }
            *slot = value;
        }
        Ok(())
    }

    /// Largest `|h_i(t) - other_i(t)|` over a uniform grid on `[t0, t_end]`.
    pub fn max_mismatch(
        &self,
        other: &DelaySpec,
        t0: f64,
        t_end: f64,
        grid_step: f64,
    ) -> Result<f64, DdeError> {
        if self.len() != other.len() {
            return Err(DdeError::DimensionMismatch {
                expected: self.len(),
                found: other.len(),
            });
        }
        let mut worst: f64 = 0.0;
        for t in uniform_grid(t0, t_end, grid_step) {
            for (a, b) in self.channels.iter().zip(&other.channels) {
                worst = worst.max((a.eval(t)? - b.eval(t)?).abs());
            }
        }
        Ok(worst)
    }
}

/// Knot times `t0, t0 + step, ...` ending exactly at `t_end`.
pub fn uniform_grid(t0: f64, t_end: f64, step: f64) -> Vec<f64> {
    let span = t_end - t0;
    let count = ((span / step) - 1e-9).ceil().max(0.0) as usize;
    let mut out: Vec<f64> = (0..count).map(|k| t0 + k as f64 * step).collect();
    out.push(t_end);
    out
}

/// Initial data on `[t0 - h_bar, t0]`.
#[derive(Debug, Clone, PartialEq)]
pub enum HistoryFunction {
    Constant(Vec<f64>),
    Expr(Vec<TimeExpr>),
    /// Piecewise-linear through `(times[k], values[k])`, held constant
    /// outside the sampled range.
    Sampled {
        times: Vec<f64>,
        values: Vec<Vec<f64>>,
    },
    /// Zero before `t0` with the given state at `t0`; the initial data of a
    /// Cauchy function.
    ZeroWithInitial(Vec<f64>),
}

impl HistoryFunction {
    pub fn dim(&self) -> usize {
        match self {
            HistoryFunction::Constant(v) | HistoryFunction::ZeroWithInitial(v) => v.len(),
            HistoryFunction::Expr(e) => e.len(),
            HistoryFunction::Sampled { values, .. } => values.first().map_or(0, Vec::len),
        }
    }

    pub fn zeros(n: usize) -> Self {
        HistoryFunction::Constant(vec![0.0; n])
    }

    /// History value at `t < t0` (and the left limit at `t0`).
    pub fn eval_into(&self, t: f64, out: &mut [f64]) -> Result<(), DdeError> {
        match self {
            HistoryFunction::Constant(v) => out.copy_from_slice(v),
            HistoryFunction::ZeroWithInitial(_) => out.fill(0.0),
            HistoryFunction::Expr(es) => {
                for (o, e) in out.iter_mut().zip(es) {
                    *o = e.eval(t)?;
                }
            }
            HistoryFunction::Sampled { times, values } => {
                let k = times.partition_point(|&s| s <= t);
                if k == 0 {
                    out.copy_from_slice(&values[0]);
                } else if k >= times.len() {
                    out.copy_from_slice(&values[times.len() - 1]);
                } else {
                    let (ta, tb) = (times[k - 1], times[k]);
                    let w = (t - ta) / (tb - ta);
                    for (i, o) in out.iter_mut().enumerate() {
                        *o = values[k - 1][i] * (1.0 - w) + values[k][i] * w;
                    }
                }
            }
        }
        if out.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(DdeError::NonFiniteHistory { t })
        }
    }

    pub fn eval(&self, t: f64) -> Result<Vec<f64>, DdeError> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(t, &mut out)?;
        Ok(out)
    }

    /// State at `t0` that starts the march.
    pub fn initial_state(&self, t0: f64) -> Result<Vec<f64>, DdeError> {
        match self {
            HistoryFunction::ZeroWithInitial(v) => Ok(v.clone()),
            _ => self.eval(t0),
        }
    }

    /// Sup of the Euclidean norm over `[t0 - h_bar, t0]` sampled at `grid_step`.
    pub fn sup_norm(&self, t0: f64, h_bar: f64, grid_step: f64) -> Result<f64, DdeError> {
        match self {
            HistoryFunction::Constant(v) | HistoryFunction::ZeroWithInitial(v) => Ok(norm2(v)),
            _ => {
                let mut sup: f64 = norm2(&self.initial_state(t0)?);
                if h_bar > 0.0 {
                    for t in uniform_grid(t0 - h_bar, t0, grid_step) {
                        sup = sup.max(norm2(&self.eval(t)?));
                    }
                }
                Ok(sup)
            }
        }
    }

    /// Scalar history `|phi(t)|` matched to this vector history.
    pub fn norm_history(&self, t0: f64, h_bar: f64, grid_step: f64) -> Result<HistoryFunction, DdeError> {
        Ok(match self {
            HistoryFunction::Constant(v) => HistoryFunction::Constant(vec![norm2(v)]),
            HistoryFunction::ZeroWithInitial(v) => HistoryFunction::ZeroWithInitial(vec![norm2(v)]),
            _ => {
                let times = if h_bar > 0.0 {
                    uniform_grid(t0 - h_bar, t0, grid_step)
                } else {
                    vec![t0]
                };
                let values = times
                    .iter()
                    .map(|&t| self.eval(t).map(|v| vec![norm2(&v)]))
                    .collect::<Result<Vec<_>, _>>()?;
                HistoryFunction::Sampled { times, values }
            }
        })
    }
}

/// Right-hand side contract `g(t, x(t), x(t - h_1(t)), ..., x(t - h_m(t)))`.
pub trait DelayRhs: Sync {
    fn dim(&self) -> usize;

    fn delays(&self) -> &DelaySpec;

    /// `slots` holds `m + 1` consecutive state vectors: slot 0 is `x(t)`,
    /// slot `j` is `x(t - h_j(t))`.
    fn eval(&self, t: f64, slots: &[f64], out: &mut [f64]) -> Result<(), EvalError>;
}

/// Which one-sided limit a lookup takes at a discontinuity of the history.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlowUpKind {
    NonFinite,
    Threshold,
}

/// Where and how a march stopped early.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlowUp {
    pub t: f64,
    pub magnitude: f64,
    pub kind: BlowUpKind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrateOptions {
    pub step: f64,
    /// Stop once the state norm exceeds this value.
    pub abort_norm: Option<f64>,
}

impl IntegrateOptions {
    pub fn new(step: f64) -> Self {
        Self {
            step,
            abort_norm: None,
        }
    }

    pub fn abort_above(mut self, norm: f64) -> Self {
        self.abort_norm = Some(norm);
        self
    }
}

/// Dense solution with cubic Hermite interpolation between knots.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    dim: usize,
    t0: f64,
    t_end_requested: f64,
    h_bar: f64,
    times: Vec<f64>,
    states: Vec<f64>,
    /// Derivative at each knot as the limit from the left interval.
    d_left: Vec<f64>,
    /// Derivative at each knot as the limit from the right interval.
    d_right: Vec<f64>,
    history: HistoryFunction,
    blowup: Option<BlowUp>,
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    /// Last committed knot time.
    pub fn t_last(&self) -> f64 {
        *self.times.last().expect("trajectory has at least one knot")
    }

    pub fn t_end_requested(&self) -> f64 {
        self.t_end_requested
    }

    pub fn h_bar(&self) -> f64 {
        self.h_bar
    }

    pub fn history(&self) -> &HistoryFunction {
        &self.history
    }

    pub fn blowup(&self) -> Option<BlowUp> {
        self.blowup
    }

    pub fn completed(&self) -> bool {
        self.blowup.is_none()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn knot_count(&self) -> usize {
        self.times.len()
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    pub fn knot_derivatives(&self, k: usize) -> (&[f64], &[f64]) {
        let r = k * self.dim..(k + 1) * self.dim;
        (&self.d_left[r.clone()], &self.d_right[r])
    }

    /// Iterator over `(t, state)` at the knots.
    pub fn knots(&self) -> impl Iterator<Item = (f64, &[f64])> {
        self.times
            .iter()
            .copied()
            .zip(self.states.chunks(self.dim))
    }

    /// Norm at each knot.
    pub fn knot_norms(&self) -> Vec<f64> {
        self.states.chunks(self.dim).map(norm2).collect()
    }

    /// First scalar component at each knot.
    pub fn scalar_values(&self) -> Vec<f64> {
        self.states.chunks(self.dim).map(|s| s[0]).collect()
    }

    pub fn eval(&self, t: f64) -> Result<Vec<f64>, DdeError> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(t, Side::Right, &mut out)?;
        Ok(out)
    }

    pub fn eval_scalar(&self, t: f64) -> Result<f64, DdeError> {
        Ok(self.eval(t)?[0])
    }

    pub fn eval_into(&self, t: f64, side: Side, out: &mut [f64]) -> Result<(), DdeError> {
        let lo = self.t0 - self.h_bar;
        let hi = self.t_last();
        if !(t >= lo - TIME_SLACK && t <= hi + TIME_SLACK) {
            return Err(DdeError::OutOfDomain { t, lo, hi });
        }
        if t < self.t0 || (t == self.t0 && side == Side::Left) {
            return self.history.eval_into(t, out);
        }
        let n = self.dim;
        let count = self.times.len();
        if count == 1 {
            out.copy_from_slice(self.state(0));
            return Ok(());
        }
        let k = self
            .times
            .partition_point(|&s| s <= t)
            .saturating_sub(1)
            .min(count - 2);
        let (ta, tb) = (self.times[k], self.times[k + 1]);
        let h = tb - ta;
        let s = ((t - ta) / h).clamp(0.0, 1.0);
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        let xa = &self.states[k * n..(k + 1) * n];
        let xb = &self.states[(k + 1) * n..(k + 2) * n];
        let da = &self.d_right[k * n..(k + 1) * n];
        let db = &self.d_left[(k + 1) * n..(k + 2) * n];
        for i in 0..n {
            out[i] = h00 * xa[i] + h10 * h * da[i] + h01 * xb[i] + h11 * h * db[i];
        }
        Ok(())
    }

    fn push(&mut self, t: f64, x: &[f64], d_left: &[f64], d_right: &[f64]) {
        self.times.push(t);
        self.states.extend_from_slice(x);
        self.d_left.extend_from_slice(d_left);
        self.d_right.extend_from_slice(d_right);
    }
}

/// Euclidean norms of a trajectory on the given grid.
pub fn norm_path(traj: &Trajectory, grid: &[f64]) -> Result<Vec<(f64, f64)>, DdeError> {
    grid.iter()
        .map(|&t| traj.eval(t).map(|x| (t, norm2(&x))))
        .collect()
}

struct Workspace {
    n: usize,
    delays: Vec<f64>,
    slots: Vec<f64>,
    slots_alt: Vec<f64>,
}

impl Workspace {
    /// Fills `slots` with `x` and the delayed states at `t` read with `side`.
    fn gather(
        &mut self,
        sys: &dyn DelayRhs,
        traj: &Trajectory,
        t: f64,
        x: &[f64],
        side: Side,
        alt: bool,
    ) -> Result<(), DdeError> {
        let n = self.n;
        let spec = sys.delays();
        spec.eval_into(t, &mut self.delays)?;
        let committed = traj.t_last();
        let buf = if alt { &mut self.slots_alt } else { &mut self.slots };
        buf[..n].copy_from_slice(x);
        for (j, &h) in self.delays.iter().enumerate() {
            let at = t - h;
            if at > committed + TIME_SLACK {
                return Err(DdeError::LookupAhead { t: at, committed });
            }
            traj.eval_into(at, side, &mut buf[(j + 1) * n..(j + 2) * n])?;
        }
        Ok(())
    }
}

/// Integrates `sys` from `t0` to `t_end` with fixed-step RK4.
pub fn integrate(
    sys: &dyn DelayRhs,
    hist: &HistoryFunction,
    t0: f64,
    t_end: f64,
    opts: IntegrateOptions,
) -> Result<Trajectory, DdeError> {
    let n = sys.dim();
    let spec = sys.delays();
    let m = spec.len();
    let step = opts.step;
    if !t0.is_finite() || !t_end.is_finite() || t_end <= t0 {
        return Err(DdeError::InvalidHorizon { t0, t_end });
    }
    let limit = if m == 0 { f64::INFINITY } else { spec.h_floor() / 4.0 };
    if !(step > 0.0) || step > limit + 1e-15 {
        return Err(DdeError::InvalidStep { step, limit });
    }
    if hist.dim() != n {
        return Err(DdeError::DimensionMismatch {
            expected: n,
            found: hist.dim(),
        });
    }
    let x0 = hist.initial_state(t0)?;
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(DdeError::NonFiniteHistory { t: t0 });
    }

    let grid = uniform_grid(t0, t_end, step);
    let mut traj = Trajectory {
        dim: n,
        t0,
        t_end_requested: t_end,
        h_bar: spec.h_bar(),
        times: Vec::with_capacity(grid.len()),
        states: Vec::with_capacity(grid.len() * n),
        d_left: Vec::with_capacity(grid.len() * n),
        d_right: Vec::with_capacity(grid.len() * n),
        history: hist.clone(),
        blowup: None,
    };
    let mut ws = Workspace {
        n,
        delays: vec![0.0; m],
        slots: vec![0.0; (m + 1) * n],
        slots_alt: vec![0.0; (m + 1) * n],
    };

    // Seed knot: the right derivative at t0 uses the history's right limit.
    let mut k1 = vec![0.0; n];
    {
        // a single-knot trajectory so that lookups at t0 resolve
        traj.push(t0, &x0, &vec![0.0; n], &vec![0.0; n]);
        ws.gather(sys, &traj, t0, &x0, Side::Right, false)?;
        sys.eval(t0, &ws.slots, &mut k1)?;
        // left derivative at t0 is never used by the interpolant
        traj.d_left[..n].copy_from_slice(&k1);
        traj.d_right[..n].copy_from_slice(&k1);
    }
    if k1.iter().any(|v| !v.is_finite()) {
        traj.blowup = Some(BlowUp {
            t: t0,
            magnitude: f64::INFINITY,
            kind: BlowUpKind::NonFinite,
        });
        return Ok(traj);
    }

    let mut x = x0;
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let mut d_left = vec![0.0; n];
    let mut d_right = vec![0.0; n];

    for w in grid.windows(2) {
        let (t, t_next) = (w[0], w[1]);
        let h = t_next - t;
        let t_mid = t + 0.5 * h;

        for i in 0..n {
            tmp[i] = x[i] + 0.5 * h * k1[i];
        }
        ws.gather(sys, &traj, t_mid, &tmp, Side::Right, false)?;
        sys.eval(t_mid, &ws.slots, &mut k2)?;

        for i in 0..n {
            tmp[i] = x[i] + 0.5 * h * k2[i];
        }
        ws.gather(sys, &traj, t_mid, &tmp, Side::Right, false)?;
        sys.eval(t_mid, &ws.slots, &mut k3)?;

        for i in 0..n {
            tmp[i] = x[i] + h * k3[i];
        }
        ws.gather(sys, &traj, t_next, &tmp, Side::Left, false)?;
        sys.eval(t_next, &ws.slots, &mut k4)?;

        for i in 0..n {
            tmp[i] = x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        let magnitude = norm2(&tmp);
        if !magnitude.is_finite() {
            traj.blowup = Some(BlowUp {
                t: t_next,
                magnitude: f64::INFINITY,
                kind: BlowUpKind::NonFinite,
            });
            return Ok(traj);
        }

        // one-sided derivatives at the new knot
        ws.gather(sys, &traj, t_next, &tmp, Side::Left, false)?;
        sys.eval(t_next, &ws.slots, &mut d_left)?;
        ws.gather(sys, &traj, t_next, &tmp, Side::Right, true)?;
        if bitwise_eq(&ws.slots, &ws.slots_alt) {
            d_right.copy_from_slice(&d_left);
        } else {
            sys.eval(t_next, &ws.slots_alt, &mut d_right)?;
        }
        if d_left.iter().chain(&d_right).any(|v| !v.is_finite()) {
            traj.blowup = Some(BlowUp {
                t: t_next,
                magnitude,
                kind: BlowUpKind::NonFinite,
            });
            return Ok(traj);
        }

        traj.push(t_next, &tmp, &d_left, &d_right);
        x.copy_from_slice(&tmp);
        k1.copy_from_slice(&d_right);

        if let Some(limit) = opts.abort_norm {
            if magnitude > limit {
                traj.blowup = Some(BlowUp {
                    t: t_next,
                    magnitude,
                    kind: BlowUpKind::Threshold,
                });
                return Ok(traj);
            }
        }
    }
    Ok(traj)
}

fn bitwise_eq(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

/// A right-hand side given by a closure; handy for tests and suites.
pub struct FnRhs<F> {
    dim: usize,
    delays: DelaySpec,
    f: F,
}

impl<F> FnRhs<F>
where
    F: Fn(f64, &[f64], &mut [f64]) + Sync,
{
    pub fn new(dim: usize, delays: DelaySpec, f: F) -> Self {
        Self { dim, delays, f }
    }
}

impl<F> DelayRhs for FnRhs<F>
where
    F: Fn(f64, &[f64], &mut [f64]) + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn delays(&self) -> &DelaySpec {
        &self.delays
    }

    fn eval(&self, t: f64, slots: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        (self.f)(t, slots, out);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn neg_delayed() -> FnRhs<impl Fn(f64, &[f64], &mut [f64]) + Sync> {
        FnRhs::new(1, DelaySpec::constant(&[1.0]).unwrap(), |_, s, out| {
            out[0] = -s[1]
        })
    }

    #[test]
    fn method_of_steps_closed_form() {
        let sys = neg_delayed();
        let hist = HistoryFunction::Constant(vec![1.0]);
        let traj = integrate(&sys, &hist, 0.0, 2.0, IntegrateOptions::new(1.0 / 64.0)).unwrap();
        assert!(traj.eval_scalar(1.0).unwrap().abs() < 1e-12);
        assert!((traj.eval_scalar(2.0).unwrap() + 0.5).abs() < 1e-12);
        assert!((traj.eval_scalar(0.5).unwrap() - 0.5).abs() < 1e-8);
    }

    #[test]
    fn zero_rhs_keeps_value() {
        let sys = FnRhs::new(1, DelaySpec::none(), |_, _, out: &mut [f64]| out[0] = 0.0);
        let traj = integrate(
            &sys,
            &HistoryFunction::Constant(vec![3.25]),
            0.0,
            5.0,
            IntegrateOptions::new(0.1),
        )
        .unwrap();
        for (_, x) in traj.knots() {
            assert_eq!(x[0], 3.25);
        }
    }

    #[test]
    fn diagonal_exponentials() {
        let delays = DelaySpec::constant(&[0.5]).unwrap();
        let sys = FnRhs::new(2, delays, |_, s, out: &mut [f64]| {
            out[0] = -s[0];
            out[1] = -2.0 * s[1];
        });
        let traj = integrate(
            &sys,
            &HistoryFunction::Constant(vec![1.0, 1.0]),
            0.0,
            1.0,
            IntegrateOptions::new(0.01),
        )
        .unwrap();
        let x = traj.eval(1.0).unwrap();
        assert!((x[0] - (-1.0f64).exp()).abs() < 1e-9);
        assert!((x[1] - (-2.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn history_region_delegates() {
        let sys = neg_delayed();
        let hist = HistoryFunction::Expr(vec!["1 + t".parse().unwrap()]);
        let traj = integrate(&sys, &hist, 0.0, 1.0, IntegrateOptions::new(0.125)).unwrap();
        assert_eq!(traj.eval_scalar(0.0).unwrap(), 1.0);
        assert_eq!(traj.eval_scalar(-0.5).unwrap(), 0.5);
        assert!(matches!(
            traj.eval_scalar(-1.5),
            Err(DdeError::OutOfDomain { .. })
        ));
        assert!(matches!(
            traj.eval_scalar(1.5),
            Err(DdeError::OutOfDomain { .. })
        ));
    }

    #[test]
    fn interpolant_matches_knots() {
        let sys = neg_delayed();
        let traj = integrate(
            &sys,
            &HistoryFunction::Constant(vec![1.0]),
            0.0,
            4.0,
            IntegrateOptions::new(0.1),
        )
        .unwrap();
        for (t, x) in traj.knots() {
            assert_eq!(traj.eval_scalar(t).unwrap(), x[0]);
        }
    }

    #[test]
    fn step_too_large_is_rejected() {
        let sys = neg_delayed();
        let err = integrate(
            &sys,
            &HistoryFunction::Constant(vec![1.0]),
            0.0,
            1.0,
            IntegrateOptions::new(0.3),
        )
        .unwrap_err();
        assert!(matches!(err, DdeError::InvalidStep { .. }));
    }

    #[test]
    fn delay_bound_violation_is_an_error() {
        let delays = DelaySpec::new(vec!["1 + t".parse().unwrap()], 1.5, 1.0).unwrap();
        let sys = FnRhs::new(1, delays, |_, s, out: &mut [f64]| out[0] = -s[1]);
        let err = integrate(
            &sys,
            &HistoryFunction::Constant(vec![1.0]),
            0.0,
            1.0,
            IntegrateOptions::new(0.1),
        )
        .unwrap_err();
        assert!(matches!(err, DdeError::DelayBound { channel: 0, .. }));
    }

    #[test]
    fn invalid_delay_spec() {
        assert!(DelaySpec::new(vec![TimeExpr::Num(1.0)], 0.5, 1.0).is_err());
        assert!(DelaySpec::new(vec![TimeExpr::Num(1.0)], 1.0, 0.0).is_err());
    }

    #[test]
    fn blow_up_is_reported() {
        let sys = FnRhs::new(1, DelaySpec::none(), |_, s, out: &mut [f64]| {
            out[0] = s[0] * s[0] * s[0]
        });
        let traj = integrate(
            &sys,
            &HistoryFunction::Constant(vec![2.0]),
            0.0,
            10.0,
            IntegrateOptions::new(0.01),
        )
        .unwrap();
        let b = traj.blowup().expect("finite-time escape at t = 1/8");
        assert_eq!(b.kind, BlowUpKind::NonFinite);
        assert!(b.t > 0.1 && b.t < 0.2, "{}", b.t);

        let traj = integrate(
            &sys,
            &HistoryFunction::Constant(vec![2.0]),
            0.0,
            10.0,
            IntegrateOptions::new(0.01).abort_above(100.0),
        )
        .unwrap();
        assert_eq!(traj.blowup().unwrap().kind, BlowUpKind::Threshold);
    }

    #[test]
    fn cauchy_style_history_uses_left_limits() {
        let sys = neg_delayed();
        let traj = integrate(
            &sys,
            &HistoryFunction::ZeroWithInitial(vec![1.0]),
            0.0,
            2.0,
            IntegrateOptions::new(1.0 / 64.0),
        )
        .unwrap();
        for (t, x) in traj.knots() {
            let expected = if t <= 1.0 { 1.0 } else { 2.0 - t };
            assert!((x[0] - expected).abs() < 1e-13, "t = {t}: {}", x[0]);
        }
        let (dl, dr) = traj.knot_derivatives(64);
        assert_eq!((dl[0], dr[0]), (0.0, -1.0));
    }

    #[test]
    fn norm_path_values() {
        let sys = FnRhs::new(2, DelaySpec::none(), |_, _, out: &mut [f64]| {
            out[0] = 0.0;
            out[1] = 0.0;
        });
        let traj = integrate(
            &sys,
            &HistoryFunction::Constant(vec![3.0, 4.0]),
            0.0,
            1.0,
            IntegrateOptions::new(0.25),
        )
        .unwrap();
        for (_, v) in norm_path(&traj, &[0.0, 0.3, 1.0]).unwrap() {
            assert_eq!(v, 5.0);
        }
        let zero = integrate(
            &sys,
            &HistoryFunction::zeros(2),
            0.0,
            1.0,
            IntegrateOptions::new(0.25),
        )
        .unwrap();
        assert!(norm_path(&zero, &[0.0, 0.5, 1.0])
            .unwrap()
            .iter()
            .all(|&(_, v)| v == 0.0));
    }

    #[test]
    fn decaying_norm_path() {
        let sys = FnRhs::new(2, DelaySpec::none(), |_, s, out: &mut [f64]| {
            out[0] = -s[0];
            out[1] = 0.0;
        });
        let traj = integrate(
            &sys,
            &HistoryFunction::Constant(vec![1.0, 0.0]),
            0.0,
            1.0,
            IntegrateOptions::new(0.01),
        )
        .unwrap();
        let v = norm_path(&traj, &[1.0]).unwrap()[0].1;
        assert!((v - (-1.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn uniform_grid_lands_on_end() {
        let g = uniform_grid(0.0, 1.0, 0.3);
        assert_eq!(g, vec![0.0, 0.3, 0.6, 0.8999999999999999, 1.0]);
        let g = uniform_grid(0.0, 1.0, 0.25);
        assert_eq!(g, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }
}
