//! Finite-horizon verdicts, stability/trapping radii and boundary sweeps.
//!
//! Solutions of a scalar auxiliary equation are monotone in a constant
//! history `q`, so the set of `q` with a stable verdict is an interval and
//! its end can be bisected. The vector system has no such ordering; its
//! boundary is traced ray by ray in a coordinate plane.

use std::f64::consts::TAU;

use rayon::prelude::*;
use thiserror::Error;

use crate::auxiliary::{solve_auxiliary_with, AuxError, ScalarAuxiliary};
use crate::dde::{integrate, DdeError, DelayRhs, HistoryFunction, IntegrateOptions, Trajectory};
use crate::linalg::norm2;
use crate::system::DdeSystem;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RegionError {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error("stability radius needs a homogeneous equation (F0 = 0), got F0 = {0}")]
    ForcedStability(f64),
    #[error("no stable verdict even at the lower bracket q = {q:e}")]
    NoStableBracket { q: f64 },
    #[error(transparent)]
    Aux(#[from] AuxError),
    #[error(transparent)]
    Dde(#[from] DdeError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifierParams {
    /// Simulated horizon end (absolute time).
    pub horizon: f64,
    /// Divergence factor `K`.
    pub divergence_factor: f64,
    pub decay_threshold: f64,
    pub tail_fraction: f64,
}

impl ClassifierParams {
    pub fn new(horizon: f64) -> Self {
        Self {
            horizon,
            divergence_factor: 1e3,
            decay_threshold: 1e-6,
            tail_fraction: 0.1,
        }
    }

    pub fn validate(&self) -> Result<(), RegionError> {
        let bad = |m: &str| Err(RegionError::InvalidParams(m.to_string()));
        if !(self.divergence_factor > 1.0) {
            return bad("divergence factor must exceed 1");
        }
        if !(self.tail_fraction > 0.0 && self.tail_fraction < 1.0) {
            return bad("tail fraction must lie in (0, 1)");
        }
        if !(self.decay_threshold > 0.0) {
            return bad("decay threshold must be positive");
        }
        if !self.horizon.is_finite() {
            return bad("horizon must be finite");
        }
        Ok(())
    }

    /// Norm above which a run with history norm `hist_norm` is divergent.
    pub fn divergence_level(&self, hist_norm: f64) -> f64 {
        self.divergence_factor * hist_norm.max(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Divergent,
    DecaysToZero,
    Bounded,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Divergent => "divergent",
            Verdict::DecaysToZero => "decays_to_zero",
            Verdict::Bounded => "bounded",
        }
    }
}

fn history_norm(traj: &Trajectory) -> Result<f64, DdeError> {
    let step = match traj.times() {
        [a, b, ..] => b - a,
        _ => traj.h_bar().max(1e-3) / 100.0,
    };
    traj.history().sup_norm(traj.t0(), traj.h_bar(), step.max(1e-6))
}

pub fn classify(traj: &Trajectory, params: &ClassifierParams) -> Verdict {
    if traj.blowup().is_some() {
        return Verdict::Divergent;
    }
    let norms = traj.knot_norms();
    let hist = history_norm(traj).unwrap_or(f64::INFINITY);
    let max = norms.iter().copied().fold(0.0, f64::max);
    if max > params.divergence_level(hist) {
        return Verdict::Divergent;
    }
    let times = traj.times();
    let start = traj.t_last() - params.tail_fraction * (traj.t_last() - traj.t0());
    let tail = times
        .iter()
        .zip(&norms)
        .filter(|(t, _)| **t >= start)
        .map(|(_, n)| *n)
        .fold(0.0, f64::max);
    if tail < params.decay_threshold {
        Verdict::DecaysToZero
    } else {
        Verdict::Bounded
    }
}

/// Integrates to the classifier horizon, stopping early once the run is
/// certainly divergent.
pub fn classify_run(
    sys: &dyn DelayRhs,
    hist: &HistoryFunction,
    t0: f64,
    params: &ClassifierParams,
    step: f64,
) -> Result<Verdict, DdeError> {
    let hist_norm = hist.sup_norm(t0, sys.delays().h_bar(), step)?;
    let opts = IntegrateOptions::new(step).abort_above(params.divergence_level(hist_norm));
    let traj = integrate(sys, hist, t0, params.horizon, opts)?;
    Ok(classify(&traj, params))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RadiusMode {
    /// Stable means decaying; needs `F0 = 0`.
    Stability,
    /// Stable means not divergent.
    Boundedness,
}

impl RadiusMode {
    pub fn accepts(self, v: Verdict) -> bool {
        match self {
            RadiusMode::Stability => v == Verdict::DecaysToZero,
            RadiusMode::Boundedness => v != Verdict::Divergent,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RadiusMode::Stability => "stability",
            RadiusMode::Boundedness => "boundedness",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarRadius {
    pub mode: RadiusMode,
    /// Largest constant history known to be accepted.
    pub r: f64,
    /// Smallest constant history known to be rejected (`cap` when capped).
    pub rejected_at: f64,
    pub cap: f64,
    pub capped: bool,
    pub tol_rel: f64,
    pub probes: usize,
}

fn scalar_verdict(
    aux: &ScalarAuxiliary,
    q: f64,
    params: &ClassifierParams,
    step: f64,
) -> Result<Verdict, RegionError> {
    let a = aux.with_history(HistoryFunction::Constant(vec![q]))?;
    let opts = IntegrateOptions::new(step).abort_above(params.divergence_level(q));
    let traj = solve_auxiliary_with(&a, params.horizon, opts)?;
    Ok(classify(&traj, params))
}

/// Verdicts of the constant-history family at the given amplitudes.
pub fn scan_verdicts(
    aux: &ScalarAuxiliary,
    qs: &[f64],
    params: &ClassifierParams,
    step: f64,
) -> Result<Vec<Verdict>, RegionError> {
    params.validate()?;
    qs.par_iter()
        .map(|&q| scalar_verdict(aux, q, params, step))
        .collect()
}

/// Number of accept/reject switches along a verdict sequence.
pub fn transitions(verdicts: &[Verdict], mode: RadiusMode) -> usize {
    verdicts
        .windows(2)
        .filter(|w| mode.accepts(w[0]) != mode.accepts(w[1]))
        .count()
}

/// Bisects the constant-history amplitude where the verdict flips.
pub fn scalar_radius(
    aux: &ScalarAuxiliary,
    mode: RadiusMode,
    params: &ClassifierParams,
    cap: f64,
    tol_rel: f64,
    step: f64,
) -> Result<ScalarRadius, RegionError> {
    params.validate()?;
    if !(cap > 0.0) || !(tol_rel > 0.0) {
        return Err(RegionError::InvalidParams(
            "cap and tolerance must be positive".into(),
        ));
    }
    if mode == RadiusMode::Stability && aux.f0() > 0.0 {
        return Err(RegionError::ForcedStability(aux.f0()));
    }
    let mut probes = 0;
    let mut accepted = |q: f64| -> Result<bool, RegionError> {
        probes += 1;
        Ok(mode.accepts(scalar_verdict(aux, q, params, step)?))
    };
    if accepted(cap)? {
        return Ok(ScalarRadius {
            mode,
            r: cap,
            rejected_at: cap,
            cap,
            capped: true,
            tol_rel,
            probes,
        });
    }
    let mut lo = cap * 1e-6;
    if !accepted(lo)? {
        return Err(RegionError::NoStableBracket { q: lo });
    }
    let mut hi = cap;
    while hi > lo * (1.0 + tol_rel) {
        let mid = (lo * hi).sqrt();
        if accepted(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(ScalarRadius {
        mode,
        r: lo,
        rejected_at: hi,
        cap,
        capped: false,
        tol_rel,
        probes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepParams {
    pub angle_step: f64,
    /// First radius tried on every ray.
    pub start_radius: f64,
    /// Geometric escalation factor while bracketing.
    pub growth: f64,
    pub cap: f64,
    pub tol_rel: f64,
    /// Coordinate plane `(i, j)` holding the initial vectors.
    pub plane: (usize, usize),
    pub step: f64,
}

impl SweepParams {
    pub fn new(angle_step: f64, cap: f64, step: f64) -> Self {
        Self {
            angle_step,
            start_radius: (0.1 * cap).min(1.0),
            growth: 1.5,
            cap,
            tol_rel: 1e-3,
            plane: (0, 1),
            step,
        }
    }

    /// Number of rays, if `angle_step` divides a full turn.
    pub fn ray_count(&self) -> Option<usize> {
        if !(self.angle_step > 0.0) {
            return None;
        }
        let k = (TAU / self.angle_step).round();
        if k >= 1.0 && (k * self.angle_step - TAU).abs() <= 1e-9 * TAU {
            Some(k as usize)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryPoint {
    pub theta: f64,
    /// Largest probed radius without divergence.
    pub r: f64,
    pub ln_r: f64,
    /// No divergence up to the cap.
    pub capped: bool,
    pub probes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Boundary {
    pub points: Vec<BoundaryPoint>,
    pub plane: (usize, usize),
}

impl Boundary {
    pub fn min_radius(&self) -> f64 {
        self.points.iter().map(|p| p.r).fold(f64::INFINITY, f64::min)
    }

    pub fn any_capped(&self) -> bool {
        self.points.iter().any(|p| p.capped)
    }
}

fn ray_state(n: usize, plane: (usize, usize), theta: f64, r: f64) -> Vec<f64> {
    let mut x = vec![0.0; n];
    x[plane.0] = r * theta.cos();
    x[plane.1] = r * theta.sin();
    x
}

/// Divergence verdict of the vector system from a constant history.
pub fn vector_diverges(
    sys: &DdeSystem,
    x0: &[f64],
    t0: f64,
    params: &ClassifierParams,
    step: f64,
) -> Result<bool, RegionError> {
    let hist = HistoryFunction::Constant(x0.to_vec());
    let opts = IntegrateOptions::new(step).abort_above(params.divergence_level(norm2(x0)));
    let traj = integrate(sys, &hist, t0, params.horizon, opts)?;
    Ok(classify(&traj, params) == Verdict::Divergent)
}

fn sweep_ray(
    sys: &DdeSystem,
    t0: f64,
    theta: f64,
    params: &ClassifierParams,
    sweep: &SweepParams,
) -> Result<BoundaryPoint, RegionError> {
    let n = sys.dim();
    let mut probes = 0;
    let mut diverges = |r: f64| -> Result<bool, RegionError> {
        probes += 1;
        vector_diverges(sys, &ray_state(n, sweep.plane, theta, r), t0, params, sweep.step)
    };
    let floor = sweep.cap * 1e-9;
    let mut r = sweep.start_radius.min(sweep.cap);
    let (mut lo, mut hi);
    if diverges(r)? {
        hi = r;
        loop {
            lo = hi / sweep.growth;
            if lo < floor {
                lo = 0.0;
                break;
            }
            if !diverges(lo)? {
                break;
            }
            hi = lo;
        }
    } else {
        loop {
            lo = r;
            if r >= sweep.cap {
                let ln_r = r.ln();
                return Ok(BoundaryPoint {
                    theta,
                    r,
                    ln_r,
                    capped: true,
                    probes,
                });
            }
            r = (r * sweep.growth).min(sweep.cap);
            if diverges(r)? {
                hi = r;
                break;
            }
        }
    }
    while hi - lo > sweep.tol_rel * lo.max(floor) {
        let mid = 0.5 * (lo + hi);
        if diverges(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(BoundaryPoint {
        theta,
        r: lo,
        ln_r: lo.ln(),
        capped: false,
        probes,
    })
}

/// Traces the divergence boundary along rays `θ = k·angle_step` in the
/// sweep plane.
pub fn vector_boundary_sweep(
    sys: &DdeSystem,
    t0: f64,
    params: &ClassifierParams,
    sweep: &SweepParams,
) -> Result<Boundary, RegionError> {
    params.validate()?;
    let rays = sweep
        .ray_count()
        .ok_or_else(|| RegionError::InvalidParams(format!("angle step {} does not divide 2π", sweep.angle_step)))?;
    let n = sys.dim();
    let (i, j) = sweep.plane;
    if n < 2 || i >= n || j >= n || i == j {
        return Err(RegionError::InvalidParams(format!(
            "sweep plane ({i}, {j}) invalid for dimension {n}"
        )));
    }
    if !(sweep.cap > 0.0 && sweep.start_radius > 0.0 && sweep.growth > 1.0 && sweep.tol_rel > 0.0) {
        return Err(RegionError::InvalidParams(
            "cap, start radius and tolerance must be positive and growth above 1".into(),
        ));
    }
    let points = (0..rays)
        .into_par_iter()
        .map(|k| sweep_ray(sys, t0, k as f64 * sweep.angle_step, params, sweep))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Boundary {
        points,
        plane: sweep.plane,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Containment {
    pub contained: bool,
    /// `min boundary radius - r`.
    pub margin: f64,
    pub min_radius: f64,
}

pub fn containment_check(r: f64, boundary: &Boundary) -> Containment {
    let min_radius = boundary.min_radius();
    Containment {
        contained: r <= min_radius,
        margin: min_radius - r,
        min_radius,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auxiliary::ScalarFn;
    use crate::dde::{DelaySpec, FnRhs};
    use crate::expr::{TimeExpr, TimeVaryingMatrix};
    use crate::majorant::{Coefficient, Majorant, MajorantTerm, MonomialFactor, MonomialTerm, MonomialVectorField};

    fn scalar_ode(a: f64, forcing: f64) -> FnRhs<impl Fn(f64, &[f64], &mut [f64]) + Sync> {
        FnRhs::new(1, DelaySpec::none(), move |_t, s: &[f64], o: &mut [f64]| {
            o[0] = a * s[0] + forcing
        })
    }

    #[test]
    fn classify_examples() {
        let params = ClassifierParams::new(30.0);
        let h = HistoryFunction::Constant(vec![1.0]);
        let run = |sys: &dyn DelayRhs| {
            let tr = integrate(sys, &h, 0.0, 30.0, IntegrateOptions::new(0.01)).unwrap();
            classify(&tr, &params)
        };
        assert_eq!(run(&scalar_ode(-1.0, 0.0)), Verdict::DecaysToZero);
        assert_eq!(run(&scalar_ode(1.0, 0.0)), Verdict::Divergent);
        assert_eq!(run(&scalar_ode(-1.0, 0.5)), Verdict::Bounded);
        assert_eq!(
            classify_run(&scalar_ode(1.0, 0.0), &h, 0.0, &params, 0.01).unwrap(),
            Verdict::Divergent
        );
    }

    #[test]
    fn classifier_param_validation() {
        let mut p = ClassifierParams::new(10.0);
        p.divergence_factor = 1.0;
        assert!(p.validate().is_err());
        let mut p = ClassifierParams::new(10.0);
        p.tail_fraction = 1.0;
        assert!(p.validate().is_err());
    }

    fn cubic(a: f64, b: f64, t_end: f64) -> ScalarAuxiliary {
        ScalarAuxiliary::new(
            ScalarFn::Const(a),
            ScalarFn::Const(1.0),
            Majorant::new(
                1,
                vec![MajorantTerm {
                    coefficient: Coefficient::Const(b),
                    exponents: vec![3],
                }],
            )
            .unwrap(),
            DelaySpec::none(),
            0.0,
            ScalarFn::Const(0.0),
            HistoryFunction::zeros(1),
            0.0,
            t_end,
        )
        .unwrap()
    }

    #[test]
    fn cubic_phase_line_radius() {
        let aux = cubic(-1.0, 1.0, 30.0);
        let params = ClassifierParams::new(30.0);
        let r = scalar_radius(&aux, RadiusMode::Stability, &params, 10.0, 1e-3, 0.01).unwrap();
        assert!(!r.capped);
        assert!((r.r - 1.0).abs() < 0.02, "{r:?}");
        let below = scan_verdicts(&aux, &[r.r * (1.0 - 1e-3)], &params, 0.01).unwrap();
        let above = scan_verdicts(&aux, &[r.rejected_at * (1.0 + 1e-3)], &params, 0.01).unwrap();
        assert_eq!(below[0], Verdict::DecaysToZero);
        assert_eq!(above[0], Verdict::Divergent);
    }

    #[test]
    fn linear_stable_radius_is_cap() {
        let aux = cubic(-1.0, 0.0, 30.0);
        let params = ClassifierParams::new(30.0);
        let r = scalar_radius(&aux, RadiusMode::Stability, &params, 5.0, 1e-3, 0.01).unwrap();
        assert!(r.capped && r.r == 5.0);
        let forced = aux.with_forcing(0.1).unwrap();
        assert!(matches!(
            scalar_radius(&forced, RadiusMode::Stability, &params, 5.0, 1e-3, 0.01),
            Err(RegionError::ForcedStability(_))
        ));
        let unstable = cubic(1.0, 0.0, 30.0);
        assert!(matches!(
            scalar_radius(&unstable, RadiusMode::Stability, &params, 5.0, 1e-3, 0.01),
            Err(RegionError::NoStableBracket { .. })
        ));
    }

    #[test]
    fn verdicts_are_monotone_in_q() {
        let aux = cubic(-1.0, 1.0, 20.0);
        let params = ClassifierParams::new(20.0);
        let qs: Vec<f64> = (1..=50).map(|k| 0.04 * k as f64).collect();
        let v = scan_verdicts(&aux, &qs, &params, 0.01).unwrap();
        assert_eq!(transitions(&v, RadiusMode::Stability), 1);
    }

    fn planar(a: &str, cubic_coeff: f64) -> DdeSystem {
        let a = TimeVaryingMatrix::parse_rows(&[vec![a, "0"], vec!["0", a]])
            .unwrap()
            .unwrap();
        let terms = (0..2)
            .map(|i| MonomialTerm {
                component: i,
                coefficient: TimeExpr::Num(cubic_coeff),
                factors: vec![MonomialFactor {
                    slot: 1,
                    component: i,
                    exponent: 3,
                }],
            })
            .collect();
        let field = MonomialVectorField::new(2, 2, vec![], terms).unwrap();
        DdeSystem::new(
            a,
            field,
            DelaySpec::constant(&[0.5]).unwrap(),
            0.0,
            vec![TimeExpr::Num(0.0); 2],
        )
        .unwrap()
    }

    #[test]
    fn stable_linear_sweep_is_capped() {
        let sys = planar("-1", 0.0);
        let params = ClassifierParams::new(10.0);
        let sweep = SweepParams::new(TAU / 8.0, 4.0, 0.05);
        let b = vector_boundary_sweep(&sys, 0.0, &params, &sweep).unwrap();
        assert_eq!(b.points.len(), 8);
        assert!(b.points.iter().all(|p| p.capped && p.r == 4.0));
    }

    #[test]
    fn odd_symmetric_sweep() {
        let sys = planar("-1", 1.0);
        let params = ClassifierParams::new(10.0);
        let mut sweep = SweepParams::new(TAU / 4.0, 10.0, 0.05);
        sweep.tol_rel = 1e-3;
        let b = vector_boundary_sweep(&sys, 0.0, &params, &sweep).unwrap();
        assert_eq!(b.points.len(), 4);
        for k in 0..2 {
            let (a, c) = (b.points[k].r, b.points[k + 2].r);
            assert!((a - c).abs() <= 1e-3 * a, "{a} vs {c}");
            assert!(!b.points[k].capped);
        }
        let bad = SweepParams::new(1.0, 10.0, 0.05);
        assert!(vector_boundary_sweep(&sys, 0.0, &params, &bad).is_err());
    }

    #[test]
    fn containment_examples() {
        let boundary = Boundary {
            points: vec![
                BoundaryPoint {
                    theta: 0.0,
                    r: 2.0,
                    ln_r: 2f64.ln(),
                    capped: false,
                    probes: 0,
                },
                BoundaryPoint {
                    theta: 3.0,
                    r: 1.5,
                    ln_r: 1.5f64.ln(),
                    capped: false,
                    probes: 0,
                },
            ],
            plane: (0, 1),
        };
        let c = containment_check(0.0, &boundary);
        assert!(c.contained && c.margin == 1.5);
        let c = containment_check(1.5, &boundary);
        assert!(c.contained && c.margin == 0.0);
        assert!(!containment_check(1.6, &boundary).contained);
    }
}
