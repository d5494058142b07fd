//! Numerical checks of the comparison inequalities on concrete runs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::auxiliary::{solve_auxiliary, AuxError, ScalarAuxiliary, ScalarFn};
use crate::dde::{
    integrate, uniform_grid, BlowUp, DdeError, DelayRhs, DelaySpec, FnRhs, HistoryFunction,
    IntegrateOptions, Side, Trajectory,
};
use crate::expr::{parse_expr, EvalError, TimeExpr};
use crate::linalg::norm2;
use crate::majorant::{Coefficient, Majorant, MajorantTerm};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VerifyError {
    #[error("a bound chain needs at least two members")]
    TooFewMembers,
    #[error("grid time {t} outside the domain of member '{member}'")]
    Domain { member: String, t: f64 },
    #[error("robust probe needs a homogeneous equation, got F0 = {0}")]
    Forced(f64),
    #[error("perturbation majorant has {found} slots, delays give {expected}")]
    SlotMismatch { expected: usize, found: usize },
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Aux(#[from] AuxError),
    #[error(transparent)]
    Dde(#[from] DdeError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairCheck {
    pub lower: String,
    pub upper: String,
    /// `max (lower - upper - tol_abs - tol_rel |upper|)`; positive means violated.
    pub max_violation: f64,
    pub worst_time: f64,
    pub violations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub times: Vec<f64>,
    pub names: Vec<String>,
    /// `values[member][k]`; `+inf` past the blow-up of a member.
    pub values: Vec<Vec<f64>>,
    pub pairs: Vec<PairCheck>,
    pub tol_abs: f64,
    pub tol_rel: f64,
    /// Some hypothesis of the chain could not be verified (e.g. `ζ̄` breach).
    pub inconclusive: bool,
}

impl BoundReport {
    pub fn passed(&self) -> bool {
        self.pairs.iter().all(|p| p.violations == 0)
    }

    pub fn violation_count(&self) -> usize {
        self.pairs.iter().map(|p| p.violations).sum()
    }
}

fn member_value(name: &str, traj: &Trajectory, t: f64) -> Result<f64, VerifyError> {
    if t > traj.t_last() + 1e-12 {
        return if traj.blowup().is_some() {
            Ok(f64::INFINITY)
        } else {
            Err(VerifyError::Domain {
                member: name.to_string(),
                t,
            })
        };
    }
    let mut x = vec![0.0; traj.dim()];
    traj.eval_into(t, Side::Right, &mut x).map_err(|_| VerifyError::Domain {
        member: name.to_string(),
        t,
    })?;
    Ok(norm2(&x))
}

/// Checks `m_k(t) <= m_{k+1}(t) + tol_abs + tol_rel |m_{k+1}(t)|` on `grid`.
/// Vector members enter through their Euclidean norm.
pub fn bound_chain(
    members: &[(&str, &Trajectory)],
    grid: &[f64],
    tol_abs: f64,
    tol_rel: f64,
) -> Result<BoundReport, VerifyError> {
    if members.len() < 2 {
        return Err(VerifyError::TooFewMembers);
    }
    let values = members
        .iter()
        .map(|(name, traj)| {
            grid.iter()
                .map(|&t| member_value(name, traj, t))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    let pairs = (0..members.len() - 1)
        .map(|k| {
            let mut check = PairCheck {
                lower: members[k].0.to_string(),
                upper: members[k + 1].0.to_string(),
                max_violation: f64::NEG_INFINITY,
                worst_time: grid.first().copied().unwrap_or(f64::NAN),
                violations: 0,
            };
            for (i, &t) in grid.iter().enumerate() {
                let (lo, up) = (values[k][i], values[k + 1][i]);
                let v = if up == f64::INFINITY {
                    f64::NEG_INFINITY
                } else {
                    lo - up - tol_abs - tol_rel * up.abs()
                };
                if v > 0.0 || v.is_nan() {
                    check.violations += 1;
                }
                if v > check.max_violation || v.is_nan() {
                    check.max_violation = v;
                    check.worst_time = t;
                }
            }
            check
        })
        .collect();
    Ok(BoundReport {
        times: grid.to_vec(),
        names: members.iter().map(|(n, _)| n.to_string()).collect(),
        values,
        pairs,
        tol_abs,
        tol_rel,
        inconclusive: false,
    })
}

/// Integration settings shared by the randomized suites.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteParams {
    pub t_end: f64,
    pub step: f64,
    pub tol_abs: f64,
    pub tol_rel: f64,
}

impl Default for SuiteParams {
    fn default() -> Self {
        Self {
            t_end: 5.0,
            step: 0.01,
            tol_abs: 1e-6,
            tol_rel: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderingFailure {
    pub instance: usize,
    pub t: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub instances: usize,
    pub violations: usize,
    /// `max (lower - upper)` over every checked knot.
    pub max_gap: f64,
    pub failures: Vec<OrderingFailure>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }

    fn merge(instances: usize, parts: Vec<(f64, Option<OrderingFailure>)>) -> Self {
        let max_gap = parts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        let failures: Vec<_> = parts.into_iter().filter_map(|p| p.1).collect();
        Self {
            instances,
            violations: failures.len(),
            max_gap,
            failures,
        }
    }
}

/// Knotwise check of `lower <= upper + tol`; returns the largest gap and the
/// first violating knot. A lower run that blows up before the upper one is
/// a violation.
fn compare_runs(
    instance: usize,
    lower: &Trajectory,
    upper: &Trajectory,
    params: &SuiteParams,
) -> (f64, Option<OrderingFailure>) {
    let (a, b) = (lower.scalar_values(), upper.scalar_values());
    let mut gap = f64::NEG_INFINITY;
    let mut failure = None;
    for (k, (&l, &u)) in a.iter().zip(&b).enumerate() {
        let d = l - u;
        gap = gap.max(d);
        if d > params.tol_abs + params.tol_rel * u.abs() && failure.is_none() {
            failure = Some(OrderingFailure {
                instance,
                t: lower.times()[k],
                lower: l,
                upper: u,
            });
        }
    }
    if failure.is_none() && lower.blowup().is_some() && lower.t_last() < upper.t_last() && upper.blowup().is_none() {
        failure = Some(OrderingFailure {
            instance,
            t: lower.t_last(),
            lower: f64::INFINITY,
            upper: upper.eval_scalar(lower.t_last()).unwrap_or(f64::NAN),
        });
        gap = f64::INFINITY;
    }
    (gap, failure)
}

fn instance_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// One seeded scalar pair satisfying the comparison hypotheses by
/// construction:
///
/// * `f1 = a u + b u_d + k tanh(u_d) + s sin(ω t)` with `b, k >= 0`,
/// * `f2 = f1 + δ + γ softplus(u_d)` with `δ, γ >= 0`,
/// * `φ2 = φ1 + offset` with `offset >= 0`,
///
/// and delay `h(t) = h0 + 0.1 sin t >= h0 - 0.1 > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonPair {
    pub a: f64,
    pub b: f64,
    pub k: f64,
    pub s: f64,
    pub omega: f64,
    pub delta: f64,
    pub gamma: f64,
    pub h0: f64,
    pub hist_level: f64,
    pub hist_wave: f64,
    pub offset: f64,
}

impl ComparisonPair {
    pub fn random(rng: &mut ChaCha8Rng) -> Self {
        Self {
            a: rng.random_range(-2.0..0.5),
            b: rng.random_range(0.0..1.0),
            k: rng.random_range(0.0..1.0),
            s: rng.random_range(-1.0..1.0),
            omega: rng.random_range(0.5..5.0),
            delta: rng.random_range(0.0..0.5),
            gamma: rng.random_range(0.0..0.5),
            h0: rng.random_range(0.3..1.2),
            hist_level: rng.random_range(-1.0..1.0),
            hist_wave: rng.random_range(0.0..0.5),
            offset: rng.random_range(0.0..0.5),
        }
    }

    /// `f2 = f1`, `φ2 = φ1`.
    pub fn identical(self) -> Self {
        Self {
            delta: 0.0,
            gamma: 0.0,
            offset: 0.0,
            ..self
        }
    }

    fn delays(&self) -> DelaySpec {
        let h = parse_expr(&format!("{} + 0.1*sin(t)", self.h0)).expect("generated delay parses");
        DelaySpec::new(vec![h], self.h0 + 0.1, self.h0 - 0.1).expect("generated delay is valid")
    }

    fn history(&self, offset: f64) -> HistoryFunction {
        let e = TimeExpr::Add(
            Box::new(TimeExpr::Num(self.hist_level + offset)),
            Box::new(TimeExpr::Mul(
                Box::new(TimeExpr::Num(self.hist_wave)),
                Box::new(parse_expr("sin(3*t)").expect("literal parses")),
            )),
        );
        HistoryFunction::Expr(vec![e])
    }

    /// Solves both members; returns `(u1, u2)`.
    pub fn solve(&self, params: &SuiteParams) -> Result<(Trajectory, Trajectory), VerifyError> {
        let p = *self;
        let f1 = FnRhs::new(1, self.delays(), move |t, s: &[f64], o: &mut [f64]| {
            o[0] = p.a * s[0] + p.b * s[1] + p.k * s[1].tanh() + p.s * (p.omega * t).sin();
        });
        let f2 = FnRhs::new(1, self.delays(), move |t, s: &[f64], o: &mut [f64]| {
            o[0] = p.a * s[0] + p.b * s[1] + p.k * s[1].tanh() + p.s * (p.omega * t).sin()
                + p.delta
                + p.gamma * softplus(s[1]);
        });
        let opts = IntegrateOptions::new(params.step);
        let u1 = integrate(&f1, &self.history(0.0), 0.0, params.t_end, opts)?;
        let u2 = integrate(&f2, &self.history(self.offset), 0.0, params.t_end, opts)?;
        Ok((u1, u2))
    }
}

/// Seeded constructive pairs; pair 0 is an identical pair.
pub fn comparison_suite(pair_count: usize, seed: u64, params: &SuiteParams) -> Result<SuiteReport, VerifyError> {
    if pair_count == 0 {
        return Err(VerifyError::InvalidParams("pair count must be at least 1".into()));
    }
    let parts = (0..pair_count)
        .into_par_iter()
        .map(|i| {
            let mut pair = ComparisonPair::random(&mut instance_rng(seed, i));
            if i == 0 {
                pair = pair.identical();
            }
            let (u1, u2) = pair.solve(params)?;
            Ok(compare_runs(i, &u1, &u2, params))
        })
        .collect::<Result<Vec<_>, VerifyError>>()?;
    Ok(SuiteReport::merge(pair_count, parts))
}

/// `y(t, q1) >= y(t, q2)` for constant histories `q1 >= q2 >= 0`.
pub fn monotonicity_suite(
    aux: &ScalarAuxiliary,
    q_pairs: &[(f64, f64)],
    params: &SuiteParams,
) -> Result<SuiteReport, VerifyError> {
    for &(q1, q2) in q_pairs {
        if !(q1 >= q2 && q2 >= 0.0) {
            return Err(VerifyError::InvalidParams(format!(
                "history pair ({q1}, {q2}) must satisfy q1 >= q2 >= 0"
            )));
        }
    }
    let parts = q_pairs
        .par_iter()
        .enumerate()
        .map(|(i, &(q1, q2))| {
            let hi = solve_auxiliary(&aux.with_history(HistoryFunction::Constant(vec![q1]))?, params.t_end, params.step)?;
            let lo = solve_auxiliary(&aux.with_history(HistoryFunction::Constant(vec![q2]))?, params.t_end, params.step)?;
            Ok(compare_runs(i, &lo, &hi, params))
        })
        .collect::<Result<Vec<_>, VerifyError>>()?;
    Ok(SuiteReport::merge(q_pairs.len(), parts))
}

/// Seeded pairs `q1 >= q2` drawn uniformly from `[0, max]`.
pub fn random_history_pairs(count: usize, seed: u64, max: f64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let a = rng.random_range(0.0..=max);
            let b = rng.random_range(0.0..=max);
            (a.max(b), a.min(b))
        })
        .collect()
}

/// Seeded auxiliary with `p + c (μ_1 + μ_2) < 0` on the whole horizon.
pub fn random_stable_auxiliary(seed: u64, t_end: f64) -> ScalarAuxiliary {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p0: f64 = rng.random_range(-4.0..-2.5);
    let wave: f64 = rng.random_range(0.0..0.3);
    let c_wave: f64 = rng.random_range(0.0..0.3);
    let mu1: f64 = rng.random_range(0.0..0.5);
    let mu2: f64 = rng.random_range(0.0..0.5);
    let cubic: f64 = rng.random_range(0.0..0.3);
    let h: f64 = rng.random_range(0.2..1.0);
    let p = parse_expr(&format!("{p0} + {wave}*sin(2*t)")).expect("generated drift parses");
    let c = parse_expr(&format!("1 + {c_wave}*cos(t)^2")).expect("generated factor parses");
    let l = Majorant::new(
        2,
        vec![
            MajorantTerm {
                coefficient: Coefficient::Const(mu1),
                exponents: vec![1, 0],
            },
            MajorantTerm {
                coefficient: Coefficient::Const(mu2),
                exponents: vec![0, 1],
            },
            MajorantTerm {
                coefficient: Coefficient::Const(cubic),
                exponents: vec![0, 3],
            },
        ],
    )
    .expect("positive-degree terms");
    ScalarAuxiliary::new(
        ScalarFn::Expr(p),
        ScalarFn::Expr(c),
        l,
        DelaySpec::constant(&[h]).expect("positive delay"),
        0.0,
        ScalarFn::Const(0.0),
        HistoryFunction::zeros(1),
        0.0,
        t_end,
    )
    .expect("generated auxiliary is valid")
}

/// Perturbation data: `L_R` majorizes `|R|`, `h*` are the perturbed delays.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationSpec {
    pub l_r: Majorant,
    pub delays: DelaySpec,
    pub epsilon: f64,
}

/// `ż = p z + c (L(t, z, z(t - h)) + L_R(t, z, z(t - h*)))`.
struct PerturbedScalar<'a> {
    aux: &'a ScalarAuxiliary,
    l_r: &'a Majorant,
    delays: DelaySpec,
    m: usize,
}

impl DelayRhs for PerturbedScalar<'_> {
    fn dim(&self) -> usize {
        1
    }

    fn delays(&self) -> &DelaySpec {
        &self.delays
    }

    fn eval(&self, t: f64, slots: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        let l = self.aux.majorant().eval_clamped(t, &slots[..=self.m])?;
        let mut star = [0.0; 8];
        let mut star_heap;
        let lr_slots: &mut [f64] = if slots.len() - self.m <= star.len() {
            &mut star[..slots.len() - self.m]
        } else {
            star_heap = vec![0.0; slots.len() - self.m];
            &mut star_heap
        };
        lr_slots[0] = slots[0];
        lr_slots[1..].copy_from_slice(&slots[self.m + 1..]);
        let lr = self.l_r.eval_clamped(t, lr_slots)?;
        out[0] = self.aux.p().eval(t)? * slots[0] + self.aux.c().eval(t)? * (l + lr);
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustReport {
    pub epsilon: f64,
    pub max_z: f64,
    pub within_epsilon: bool,
    pub blowup: Option<BlowUp>,
    pub history_norm: f64,
    /// Sup of `L_R(t, ε, ..., ε)` over the horizon grid.
    pub lr_sup: f64,
    /// `max |h_i - h_i*|` over the horizon grid.
    pub delay_mismatch: f64,
    pub trajectory: Trajectory,
}

pub fn robust_probe(
    aux: &ScalarAuxiliary,
    pert: &PerturbationSpec,
    t_end: f64,
    step: f64,
) -> Result<RobustReport, VerifyError> {
    if aux.f0() != 0.0 {
        return Err(VerifyError::Forced(aux.f0()));
    }
    let base = aux.majorant().slots() - 1;
    if pert.l_r.slots() != pert.delays.len() + 1 {
        return Err(VerifyError::SlotMismatch {
            expected: pert.delays.len() + 1,
            found: pert.l_r.slots(),
        });
    }
    if !(pert.epsilon > 0.0) {
        return Err(VerifyError::InvalidParams("epsilon must be positive".into()));
    }
    let sys = PerturbedScalar {
        aux,
        l_r: &pert.l_r,
        delays: DelayRhs::delays(aux).concat(&pert.delays),
        m: base,
    };
    let traj = integrate(
        &sys,
        aux.history(),
        aux.t0(),
        t_end,
        IntegrateOptions::new(step),
    )?;
    let max_z = traj.scalar_values().iter().copied().fold(0.0, f64::max);
    let grid = uniform_grid(aux.t0(), t_end, step);
    let corner = vec![pert.epsilon; pert.l_r.slots()];
    let mut lr_sup: f64 = 0.0;
    for &t in &grid {
        lr_sup = lr_sup.max(pert.l_r.eval(t, &corner).map_err(|e| VerifyError::InvalidParams(e.to_string()))?);
    }
    let own = DelayRhs::delays(aux);
    let delay_mismatch = if own.len() == pert.delays.len() {
        own.max_mismatch(&pert.delays, aux.t0(), t_end, step)?
    } else {
        f64::NAN
    };
    let history_norm = aux.history().sup_norm(aux.t0(), own.h_bar(), step)?;
    let blowup = traj.blowup();
    Ok(RobustReport {
        epsilon: pert.epsilon,
        max_z,
        within_epsilon: blowup.is_none() && max_z <= pert.epsilon,
        blowup,
        history_norm,
        lr_sup,
        delay_mismatch,
        trajectory: traj,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZetaAudit {
    pub max_u: f64,
    pub zeta_bar: f64,
    pub conclusive: bool,
}

/// The linearized bound is conclusive only while `u` stays inside `[0, ζ̄]`.
pub fn zeta_bar_audit(u: &Trajectory, zeta_bar: f64) -> ZetaAudit {
    let max_u = if u.blowup().is_some() {
        f64::INFINITY
    } else {
        u.scalar_values().iter().copied().fold(0.0, f64::max)
    };
    ZetaAudit {
        max_u,
        zeta_bar,
        conclusive: max_u <= zeta_bar,
    }
}
