//! Scalar dominance functions for polynomial vector fields.
//!
//! A field `f(t, x(t), x(t - h_1), ..., x(t - h_m))` is a sum of linear
//! blocks `M(t) x(slot)` and monomials `a(t) Π x_c(slot)^k`. Its majorant
//! `L(t, ζ_1, ..., ζ_{m+1})` bounds `|f|` once every slot argument is replaced
//! by its Euclidean norm `ζ_j`:
//!
//! * `|M x| <= |M| |x|` for linear blocks (spectral norm),
//! * `|f|_2 <= |f|_1` and `|x_c|^k <= |x|^k` for monomials.
//!
//! The linearization factors every monomial through `ζ <= ζ̄` so that
//! `L(t, ζ) <= Σ μ_j(t) ζ_j` on the ball.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::expr::{EvalError, TimeExpr, TimeVaryingMatrix};
use crate::linalg::{matvec, norm2};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MajorantError {
    #[error("term {term} has total degree 0")]
    ZeroDegree { term: usize },
    #[error("term {term}: {what} index {index} out of range (limit {limit})")]
    IndexOutOfRange {
        term: usize,
        what: &'static str,
        index: usize,
        limit: usize,
    },
    #[error("linear block {block} has dimension {found}, expected {expected}")]
    BlockDimension {
        block: usize,
        expected: usize,
        found: usize,
    },
    #[error("negative norm argument {value} in slot {slot}")]
    NegativeArgument { slot: usize, value: f64 },
    #[error("expected {expected} slot arguments, got {found}")]
    SlotMismatch { expected: usize, found: usize },
    #[error("linearization radius must be positive, got {0}")]
    InvalidZetaBar(f64),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// One factor `x_component(slot)^exponent` of a monomial (0-based indices;
/// slot 0 is the undelayed state).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MonomialFactor {
    pub slot: usize,
    pub component: usize,
    pub exponent: u32,
}

/// `coefficient(t) * Π factors`, contributing to output `component`.
#[derive(Debug, Clone, PartialEq)]
pub struct MonomialTerm {
    pub component: usize,
    pub coefficient: TimeExpr,
    pub factors: Vec<MonomialFactor>,
}

/// `scale * M(t) x(slot)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearBlock {
    pub slot: usize,
    pub scale: f64,
    pub matrix: TimeVaryingMatrix,
}

/// Polynomial field made of linear blocks and monomials.
#[derive(Debug, Clone, PartialEq)]
pub struct MonomialVectorField {
    n: usize,
    slots: usize,
    linear: Vec<LinearBlock>,
    terms: Vec<MonomialTerm>,
}

impl MonomialVectorField {
    pub fn new(
        n: usize,
        slots: usize,
        linear: Vec<LinearBlock>,
        terms: Vec<MonomialTerm>,
    ) -> Result<Self, MajorantError> {
        for (b, block) in linear.iter().enumerate() {
            if block.matrix.dim() != n {
                return Err(MajorantError::BlockDimension {
                    block: b,
                    expected: n,
                    found: block.matrix.dim(),
                });
            }
            if block.slot >= slots {
                return Err(MajorantError::IndexOutOfRange {
                    term: b,
                    what: "slot",
                    index: block.slot,
                    limit: slots,
                });
            }
        }
        for (k, term) in terms.iter().enumerate() {
            if term.component >= n {
                return Err(MajorantError::IndexOutOfRange {
                    term: k,
                    what: "component",
                    index: term.component,
                    limit: n,
                });
            }
            for f in &term.factors {
                if f.slot >= slots {
                    return Err(MajorantError::IndexOutOfRange {
                        term: k,
                        what: "slot",
                        index: f.slot,
                        limit: slots,
                    });
                }
                if f.component >= n {
                    return Err(MajorantError::IndexOutOfRange {
                        term: k,
                        what: "component",
                        index: f.component,
                        limit: n,
                    });
                }
            }
            if term.factors.iter().map(|f| f.exponent).sum::<u32>() == 0 {
                return Err(MajorantError::ZeroDegree { term: k });
            }
        }
        Ok(Self {
            n,
            slots,
            linear,
            terms,
        })
    }

    /// The zero field.
    pub fn zero(n: usize, slots: usize) -> Self {
        Self {
            n,
            slots,
            linear: Vec::new(),
            terms: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    pub fn linear_blocks(&self) -> &[LinearBlock] {
        &self.linear
    }

    pub fn terms(&self) -> &[MonomialTerm] {
        &self.terms
    }

    /// Adds `f(t, slots)` into `out`. `slots` holds `slots * n` values.
    pub fn add_eval(&self, t: f64, slots: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        let n = self.n;
        if !self.linear.is_empty() {
            let (mut m_buf, mut mx_buf) = ([0.0; 16], [0.0; 4]);
            let (mut m_heap, mut mx_heap);
            let (m, mx): (&mut [f64], &mut [f64]) = if n <= 4 {
                (&mut m_buf[..n * n], &mut mx_buf[..n])
            } else {
                m_heap = vec![0.0; n * n];
                mx_heap = vec![0.0; n];
                (&mut m_heap, &mut mx_heap)
            };
            self.add_linear(t, slots, m, mx, out)?;
        }
        for term in &self.terms {
            let mut v = term.coefficient.eval(t)?;
            for f in &term.factors {
                v *= slots[f.slot * n + f.component].powi(f.exponent as i32);
            }
            out[term.component] += v;
        }
        Ok(())
    }

    fn add_linear(
        &self,
        t: f64,
        slots: &[f64],
        m: &mut [f64],
        mx: &mut [f64],
        out: &mut [f64],
    ) -> Result<(), EvalError> {
        let n = self.n;
        for block in &self.linear {
            block.matrix.eval_into(t, m)?;
            matvec(m, &slots[block.slot * n..(block.slot + 1) * n], mx);
            for i in 0..n {
                out[i] += block.scale * mx[i];
            }
        }
        Ok(())
    }

    pub fn eval(&self, t: f64, slots: &[f64]) -> Result<Vec<f64>, EvalError> {
        let mut out = vec![0.0; self.n];
        self.add_eval(t, slots, &mut out)?;
        Ok(out)
    }
}

/// Nonnegative time-varying weight of a majorant term.
#[derive(Debug, Clone, PartialEq)]
pub enum Coefficient {
    Const(f64),
    /// `|e(t)|`
    Abs(TimeExpr),
    /// `scale * |M(t)|` (spectral norm)
    MatrixNorm {
        scale: f64,
        matrix: TimeVaryingMatrix,
    },
}

impl Coefficient {
    pub fn eval(&self, t: f64) -> Result<f64, EvalError> {
        match self {
            Coefficient::Const(c) => Ok(*c),
            Coefficient::Abs(e) => Ok(e.eval(t)?.abs()),
            Coefficient::MatrixNorm { scale, matrix } => Ok(scale * matrix.spectral_norm(t)?),
        }
    }

    /// `|e|`, folded to a constant when `e` does not depend on `t`.
    pub fn abs_of(e: &TimeExpr) -> Self {
        match e.constant_value() {
            Some(v) => Coefficient::Const(v.abs()),
            None => Coefficient::Abs(e.clone()),
        }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            Coefficient::Const(_) => true,
            Coefficient::Abs(e) => e.is_constant(),
            Coefficient::MatrixNorm { matrix, .. } => matrix.rows().flatten().all(TimeExpr::is_constant),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MajorantTerm {
    pub coefficient: Coefficient,
    /// Aggregate exponent per slot.
    pub exponents: Vec<u32>,
}

impl MajorantTerm {
    pub fn degree(&self) -> u32 {
        self.exponents.iter().sum()
    }

    fn monomial(&self, zeta: &[f64]) -> f64 {
        self.exponents
            .iter()
            .zip(zeta)
            .filter(|(k, _)| **k > 0)
            .map(|(k, z)| z.powi(*k as i32))
            .product()
    }
}

/// `L(t, ζ) = Σ_k a_k(t) Π_j ζ_j^{n_kj}` with `a_k >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Majorant {
    slots: usize,
    terms: Vec<MajorantTerm>,
}

impl Majorant {
    /// A majorant of a field with `f(t, 0) = 0`: every term needs positive degree.
    pub fn new(slots: usize, terms: Vec<MajorantTerm>) -> Result<Self, MajorantError> {
        for (k, term) in terms.iter().enumerate() {
            if term.degree() == 0 {
                return Err(MajorantError::ZeroDegree { term: k });
            }
        }
        Self::perturbation(slots, terms)
    }

    /// A majorant of a perturbation, which may be nonzero at the origin.
    pub fn perturbation(slots: usize, terms: Vec<MajorantTerm>) -> Result<Self, MajorantError> {
        for term in &terms {
            if term.exponents.len() != slots {
                return Err(MajorantError::SlotMismatch {
                    expected: slots,
                    found: term.exponents.len(),
                });
            }
        }
        Ok(Self { slots, terms })
    }

    pub fn zero(slots: usize) -> Self {
        Self {
            slots,
            terms: Vec::new(),
        }
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    pub fn terms(&self) -> &[MajorantTerm] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn eval(&self, t: f64, zeta: &[f64]) -> Result<f64, MajorantError> {
        if zeta.len() != self.slots {
            return Err(MajorantError::SlotMismatch {
                expected: self.slots,
                found: zeta.len(),
            });
        }
        if let Some((slot, &value)) = zeta.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
            return Err(MajorantError::NegativeArgument { slot, value });
        }
        Ok(self.eval_clamped(t, zeta)?)
    }

    /// Evaluation for integrator use: arguments are clamped at zero, which
    /// only matters for discretization-level negative values.
    pub fn eval_clamped(&self, t: f64, zeta: &[f64]) -> Result<f64, EvalError> {
        let mut clamped = [0.0; 8];
        let z: &[f64] = if zeta.iter().all(|v| *v >= 0.0) {
            zeta
        } else if zeta.len() <= clamped.len() {
            for (c, v) in clamped.iter_mut().zip(zeta) {
                *c = v.max(0.0);
            }
            &clamped[..zeta.len()]
        } else {
            return self.eval_clamped(t, &zeta.iter().map(|v| v.max(0.0)).collect::<Vec<_>>());
        };
        let mut acc = 0.0;
        for term in &self.terms {
            acc += term.coefficient.eval(t)? * term.monomial(z);
        }
        Ok(acc)
    }

    /// Same structure with every coefficient passed through `f`.
    pub fn map_coefficients<E>(
        &self,
        mut f: impl FnMut(&Coefficient) -> Result<Coefficient, E>,
    ) -> Result<Self, E> {
        Ok(Self {
            slots: self.slots,
            terms: self
                .terms
                .iter()
                .map(|term| {
                    Ok(MajorantTerm {
                        coefficient: f(&term.coefficient)?,
                        exponents: term.exponents.clone(),
                    })
                })
                .collect::<Result<_, E>>()?,
        })
    }
}

pub fn build_majorant(f: &MonomialVectorField) -> Majorant {
    let slots = f.slots();
    let mut terms = Vec::new();
    for block in f.linear_blocks() {
        if block.scale == 0.0 || block.matrix.is_zero() {
            continue;
        }
        let mut exponents = vec![0; slots];
        exponents[block.slot] = 1;
        terms.push(MajorantTerm {
            coefficient: Coefficient::MatrixNorm {
                scale: block.scale.abs(),
                matrix: block.matrix.clone(),
            },
            exponents,
        });
    }
    for term in f.terms() {
        if term.coefficient.is_zero() {
            continue;
        }
        let mut exponents = vec![0; slots];
        for factor in &term.factors {
            exponents[factor.slot] += factor.exponent;
        }
        terms.push(MajorantTerm {
            coefficient: Coefficient::abs_of(&term.coefficient),
            exponents,
        });
    }
    Majorant { slots, terms }
}

pub fn eval_majorant(l: &Majorant, t: f64, zeta: &[f64]) -> Result<f64, MajorantError> {
    l.eval(t, zeta)
}

/// Worst sample of a dominance check.
#[derive(Debug, Clone, PartialEq)]
pub struct DominanceSample {
    pub t: f64,
    /// Flattened slot arguments.
    pub chi: Vec<f64>,
    pub field_norm: f64,
    pub majorant: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DominanceReport {
    pub samples: usize,
    /// `max (|f(t, χ)| - L(t, |χ_1|, ...))`; must be `<= 0`.
    pub max_deficit: f64,
    pub violations: usize,
    pub worst: Option<DominanceSample>,
}

impl DominanceReport {
    pub fn passed(&self) -> bool {
        self.max_deficit <= 0.0
    }
}

/// Uniform point in the Euclidean ball of radius `r` in `R^n`.
fn sample_ball(rng: &mut ChaCha8Rng, n: usize, r: f64, out: &mut [f64]) {
    loop {
        for v in out.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let len = norm2(out);
        if len > 0.0 {
            let u: f64 = rng.random();
            let scale = r * u.powf(1.0 / n as f64) / len;
            for v in out.iter_mut() {
                *v *= scale;
            }
            return;
        }
    }
}

/// Brute-force check of `|f(t, χ)| <= L(t, |χ_1|, ..., |χ_{m+1}|)`.
pub fn verify_dominance(
    f: &MonomialVectorField,
    l: &Majorant,
    sample_count: usize,
    radius: f64,
    horizon: (f64, f64),
    seed: u64,
) -> Result<DominanceReport, MajorantError> {
    if l.slots() != f.slots() {
        return Err(MajorantError::SlotMismatch {
            expected: f.slots(),
            found: l.slots(),
        });
    }
    let (n, slots) = (f.dim(), f.slots());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chi = vec![0.0; n * slots];
    let mut zeta = vec![0.0; slots];
    let mut report = DominanceReport {
        samples: sample_count,
        max_deficit: f64::NEG_INFINITY,
        violations: 0,
        worst: None,
    };
    for _ in 0..sample_count {
        let t = horizon.0 + (horizon.1 - horizon.0) * rng.random::<f64>();
        for j in 0..slots {
            sample_ball(&mut rng, n, radius, &mut chi[j * n..(j + 1) * n]);
            zeta[j] = norm2(&chi[j * n..(j + 1) * n]);
        }
        let field_norm = norm2(&f.eval(t, &chi)?);
        let bound = l.eval(t, &zeta)?;
        let deficit = field_norm - bound;
        if deficit > 0.0 {
            report.violations += 1;
        }
        if deficit > report.max_deficit {
            report.max_deficit = deficit;
            report.worst = Some(DominanceSample {
                t,
                chi: chi.clone(),
                field_norm,
                majorant: bound,
            });
        }
    }
    if sample_count == 0 {
        report.max_deficit = 0.0;
    }
    Ok(report)
}

/// `μ_j(t) = Σ weight * coefficient(t)` per slot, valid for `ζ_j <= ζ̄`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedMajorant {
    zeta_bar: f64,
    slots: Vec<Vec<(Coefficient, f64)>>,
}

impl LinearizedMajorant {
    pub fn zeta_bar(&self) -> f64 {
        self.zeta_bar
    }

    pub fn slot_count(&self) -> usize {
        self.slots.len()
    }

    pub fn slot_terms(&self, j: usize) -> &[(Coefficient, f64)] {
        &self.slots[j]
    }

    pub fn mu(&self, j: usize, t: f64) -> Result<f64, EvalError> {
        let mut acc = 0.0;
        for (c, w) in &self.slots[j] {
            acc += w * c.eval(t)?;
        }
        Ok(acc)
    }

    pub fn mu_all(&self, t: f64, out: &mut [f64]) -> Result<(), EvalError> {
        for (j, o) in out.iter_mut().enumerate() {
            *o = self.mu(j, t)?;
        }
        Ok(())
    }

    /// `Σ μ_j(t) ζ_j`.
    pub fn eval(&self, t: f64, zeta: &[f64]) -> Result<f64, EvalError> {
        let mut acc = 0.0;
        for (j, z) in zeta.iter().enumerate() {
            acc += self.mu(j, t)? * z;
        }
        Ok(acc)
    }
}

/// Attributes each monomial's linear factor to its largest-exponent slot
/// (lowest index on ties) and bounds the rest by `ζ̄^{d-1}`.
pub fn linearize(l: &Majorant, zeta_bar: f64) -> Result<LinearizedMajorant, MajorantError> {
    if !(zeta_bar > 0.0) || !zeta_bar.is_finite() {
        return Err(MajorantError::InvalidZetaBar(zeta_bar));
    }
    let mut slots = vec![Vec::new(); l.slots()];
    for (k, term) in l.terms().iter().enumerate() {
        let degree = term.degree();
        if degree == 0 {
            return Err(MajorantError::ZeroDegree { term: k });
        }
        let mut best = 0;
        for (j, &e) in term.exponents.iter().enumerate() {
            if e > term.exponents[best] {
                best = j;
            }
        }
        let weight = zeta_bar.powi(degree as i32 - 1);
        slots[best].push((term.coefficient.clone(), weight));
    }
    Ok(LinearizedMajorant { zeta_bar, slots })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearDominanceReport {
    pub samples: usize,
    /// `max (L(t, ζ) - Σ μ_j ζ_j)` over samples with `ζ_j <= ζ̄`.
    pub max_deficit: f64,
    pub violations: usize,
}

/// Sampled check of `L(t, ζ) <= Σ μ_j(t) ζ_j` on `[0, ζ̄]^{m+1}`.
pub fn verify_linear_dominance(
    l: &Majorant,
    lm: &LinearizedMajorant,
    sample_count: usize,
    horizon: (f64, f64),
    seed: u64,
) -> Result<LinearDominanceReport, MajorantError> {
    if lm.slot_count() != l.slots() {
        return Err(MajorantError::SlotMismatch {
            expected: l.slots(),
            found: lm.slot_count(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut zeta = vec![0.0; l.slots()];
    let mut max_deficit = if sample_count == 0 { 0.0 } else { f64::NEG_INFINITY };
    let mut violations = 0;
    for _ in 0..sample_count {
        let t = horizon.0 + (horizon.1 - horizon.0) * rng.random::<f64>();
        for z in zeta.iter_mut() {
            *z = lm.zeta_bar() * rng.random::<f64>();
        }
        let d = l.eval(t, &zeta)? - lm.eval(t, &zeta)?;
        if d > 0.0 {
            violations += 1;
        }
        max_deficit = max_deficit.max(d);
    }
    Ok(LinearDominanceReport {
        samples: sample_count,
        max_deficit,
        violations,
    })
}
