//! Fundamental matrix of `x' = A(t) x` and the scalar growth data derived
//! from it.
//!
//! `w(t)` solves `w' = A(t) w` with `w(t0) = I`. The growth rate `p(t)` is
//! the logarithmic derivative of the spectral norm `|w(t)|`, and the running
//! condition number is `c(t) = |w(t)| |w^{-1}(t)| = σ_max / σ_min`.

use thiserror::Error;

use crate::dde::uniform_grid;
use crate::expr::{EvalError, TimeVaryingMatrix};
use crate::linalg::{matmul, singular_values};
use crate::path::{interpolate, SampledPath};

/// Below this the fundamental matrix is treated as numerically singular.
pub const SIGMA_MIN_FLOOR: f64 = 1e-300;

/// A jump in successive `p` differences larger than this multiple of the
/// neighbouring jumps is recorded as a kink.
const KINK_RATIO: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinearSystemError {
    #[error("step must be positive and the horizon non-empty")]
    InvalidGrid,
    #[error("fundamental matrix is numerically singular at t = {t} (σ_min = {sigma_min:e})")]
    Singular { t: f64, sigma_min: f64 },
    #[error("fundamental matrix has non-finite entries at t = {t}")]
    NonFinite { t: f64 },
    #[error("t = {t} outside fundamental path domain [{lo}, {hi}]")]
    OutOfDomain { t: f64, lo: f64, hi: f64 },
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FundamentalDiagnostics {
    /// Times where `ln |w(t)|` appears to have a corner (crossing singular
    /// values); `p` is unreliable nearby.
    pub kinks: Vec<f64>,
    /// Knots where the computed σ ratio dipped below one and was clamped.
    pub clamped_c: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FundamentalPath {
    n: usize,
    times: Vec<f64>,
    w: Vec<f64>,
    sigma_max: Vec<f64>,
    sigma_min: Vec<f64>,
    ln_norm: Vec<f64>,
    p: Vec<f64>,
    c: Vec<f64>,
    safety_margin: f64,
    pub diagnostics: FundamentalDiagnostics,
}

pub fn compute_fundamental(
    a: &TimeVaryingMatrix,
    t0: f64,
    t_end: f64,
    step: f64,
) -> Result<FundamentalPath, LinearSystemError> {
    if !(step > 0.0) || !(t_end > t0) || !t0.is_finite() || !t_end.is_finite() {
        return Err(LinearSystemError::InvalidGrid);
    }
    let n = a.dim();
    let nn = n * n;
    let times = uniform_grid(t0, t_end, step);
    let mut w = vec![0.0; nn];
    for i in 0..n {
        w[i * n + i] = 1.0;
    }

    let mut all_w = Vec::with_capacity(times.len() * nn);
    all_w.extend_from_slice(&w);

    let mut a_buf = vec![0.0; nn];
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (
        vec![0.0; nn],
        vec![0.0; nn],
        vec![0.0; nn],
        vec![0.0; nn],
        vec![0.0; nn],
    );
    let mut a_mid = vec![0.0; nn];
    a.eval_into(t0, &mut a_buf)?;
    for win in times.windows(2) {
        let (t, t_next) = (win[0], win[1]);
        let h = t_next - t;
        matmul(&a_buf, &w, n, &mut k1);
        a.eval_into(t + 0.5 * h, &mut a_mid)?;
        for i in 0..nn {
            tmp[i] = w[i] + 0.5 * h * k1[i];
        }
        matmul(&a_mid, &tmp, n, &mut k2);
        for i in 0..nn {
            tmp[i] = w[i] + 0.5 * h * k2[i];
        }
        matmul(&a_mid, &tmp, n, &mut k3);
        a.eval_into(t_next, &mut a_buf)?;
        for i in 0..nn {
            tmp[i] = w[i] + h * k3[i];
        }
        matmul(&a_buf, &tmp, n, &mut k4);
        for i in 0..nn {
            w[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(LinearSystemError::NonFinite { t: t_next });
        }
        all_w.extend_from_slice(&w);
    }

    let mut sigma_max = Vec::with_capacity(times.len());
    let mut sigma_min = Vec::with_capacity(times.len());
    let mut c = Vec::with_capacity(times.len());
    let mut clamped = 0;
    for (k, &t) in times.iter().enumerate() {
        let sv = singular_values(&all_w[k * nn..(k + 1) * nn], n);
        let (hi, lo) = (sv[0], sv[n - 1]);
        if !(lo >= SIGMA_MIN_FLOOR) {
            return Err(LinearSystemError::Singular { t, sigma_min: lo });
        }
        let ratio = hi / lo;
        if ratio < 1.0 {
            clamped += 1;
        }
        c.push(ratio.max(1.0));
        sigma_max.push(hi);
        sigma_min.push(lo);
    }
    let ln_norm: Vec<f64> = sigma_max.iter().map(|s| s.ln()).collect();
    let p = log_derivative(&times, &ln_norm);
    let kinks = detect_kinks(&times, &p);

    Ok(FundamentalPath {
        n,
        times,
        w: all_w,
        sigma_max,
        sigma_min,
        ln_norm,
        p,
        c,
        safety_margin: 0.0,
        diagnostics: FundamentalDiagnostics {
            kinks,
            clamped_c: clamped,
        },
    })
}

/// Derivative of the quadratic through three samples, evaluated at `x`.
fn lagrange_slope(xs: [f64; 3], fs: [f64; 3], x: f64) -> f64 {
    let [a, b, c] = xs;
    fs[0] * (2.0 * x - b - c) / ((a - b) * (a - c))
        + fs[1] * (2.0 * x - a - c) / ((b - a) * (b - c))
        + fs[2] * (2.0 * x - a - b) / ((c - a) * (c - b))
}

/// Central differences inside, second-order one-sided at the ends.
fn log_derivative(times: &[f64], ln_norm: &[f64]) -> Vec<f64> {
    let len = times.len();
    if len == 1 {
        return vec![0.0];
    }
    if len == 2 {
        let s = (ln_norm[1] - ln_norm[0]) / (times[1] - times[0]);
        return vec![s, s];
    }
    (0..len)
        .map(|k| {
            let base = k.clamp(1, len - 2) - 1;
            lagrange_slope(
                [times[base], times[base + 1], times[base + 2]],
                [ln_norm[base], ln_norm[base + 1], ln_norm[base + 2]],
                times[k],
            )
        })
        .collect()
}

fn detect_kinks(times: &[f64], p: &[f64]) -> Vec<f64> {
    // the difference stencil smears a corner over two intervals, so compare
    // against jumps two intervals away and merge adjacent hits
    let jumps: Vec<f64> = p.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let mut hits: Vec<usize> = Vec::new();
    for k in 2..jumps.len().saturating_sub(2) {
        let neighbour = jumps[k - 2].max(jumps[k + 2]);
        let scale = 1e-9 * (1.0 + p[k].abs());
        if jumps[k] > scale && jumps[k] > KINK_RATIO * neighbour {
            hits.push(k);
        }
    }
    let mut out = Vec::new();
    let mut i = 0;
    while i < hits.len() {
        let mut j = i;
        while j + 1 < hits.len() && hits[j + 1] == hits[j] + 1 {
            j += 1;
        }
        let k = (i..=j)
            .map(|h| hits[h])
            .max_by(|a, b| jumps[*a].total_cmp(&jumps[*b]))
            .unwrap();
        out.push(0.5 * (times[k] + times[k + 1]));
        i = j + 1;
    }
    out
}

impl FundamentalPath {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn t0(&self) -> f64 {
        self.times[0]
    }

    pub fn t_end(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    /// `w` at knot `k`, row-major.
    pub fn w_at(&self, k: usize) -> &[f64] {
        let nn = self.n * self.n;
        &self.w[k * nn..(k + 1) * nn]
    }

    pub fn sigma_max(&self) -> &[f64] {
        &self.sigma_max
    }

    pub fn sigma_min(&self) -> &[f64] {
        &self.sigma_min
    }

    pub fn ln_norm(&self) -> &[f64] {
        &self.ln_norm
    }

    pub fn safety_margin(&self) -> f64 {
        self.safety_margin
    }

    /// Adds a constant to every `p` sample, e.g. to cover kinks.
    pub fn with_safety_margin(mut self, margin: f64) -> Self {
        self.safety_margin = margin;
        self
    }

    fn check(&self, t: f64) -> Result<(), LinearSystemError> {
        let (lo, hi) = (self.t0(), self.t_end());
        if t >= lo - 1e-12 && t <= hi + 1e-12 {
            Ok(())
        } else {
            Err(LinearSystemError::OutOfDomain { t, lo, hi })
        }
    }

    /// `p` samples at the knots, margin included.
    pub fn p_samples(&self) -> Vec<f64> {
        self.p.iter().map(|v| v + self.safety_margin).collect()
    }

    pub fn c_samples(&self) -> &[f64] {
        &self.c
    }

    pub fn p_path(&self) -> SampledPath {
        SampledPath::new(self.times.clone(), self.p_samples())
    }

    pub fn c_path(&self) -> SampledPath {
        SampledPath::new(self.times.clone(), self.c.clone())
    }

    pub fn growth_rate_p(&self, t: f64) -> Result<f64, LinearSystemError> {
        self.check(t)?;
        Ok(interpolate(&self.times, &self.p, t) + self.safety_margin)
    }

    pub fn condition_number_c(&self, t: f64) -> Result<f64, LinearSystemError> {
        self.check(t)?;
        Ok(interpolate(&self.times, &self.c, t).max(1.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expr;

    fn diag(a: &str, b: &str) -> TimeVaryingMatrix {
        TimeVaryingMatrix::diagonal(vec![parse_expr(a).unwrap(), parse_expr(b).unwrap()])
    }

    #[test]
    fn zero_generator_gives_identity() {
        let fp = compute_fundamental(&TimeVaryingMatrix::zeros(2), 0.0, 2.0, 0.1).unwrap();
        for k in 0..fp.times().len() {
            assert_eq!(fp.w_at(k), &[1.0, 0.0, 0.0, 1.0]);
        }
        assert_eq!(fp.condition_number_c(1.3).unwrap(), 1.0);
        assert_eq!(fp.growth_rate_p(1.3).unwrap(), 0.0);
    }

    #[test]
    fn diagonal_closed_form() {
        let fp = compute_fundamental(&diag("-1", "-2"), 0.0, 3.0, 1e-3).unwrap();
        let k = 1000;
        assert!((fp.times()[k] - 1.0).abs() < 1e-12);
        let w = fp.w_at(k);
        assert!((w[0] - (-1.0f64).exp()).abs() < 1e-13);
        assert!((w[3] - (-2.0f64).exp()).abs() < 1e-13);
        for t in [0.0, 0.5, 1.2345, 2.9, 3.0] {
            assert!((fp.growth_rate_p(t).unwrap() + 1.0).abs() < 1e-6);
            let c = fp.condition_number_c(t).unwrap();
            assert!((c / t.exp() - 1.0).abs() < 1e-6, "t = {t}");
        }
    }

    #[test]
    fn equal_diagonal_has_unit_condition() {
        let lam = "-3 + 0.1*sin(5*t)";
        let fp = compute_fundamental(&diag(lam, lam), 0.0, 5.0, 1e-3).unwrap();
        let lam = parse_expr(lam).unwrap();
        for &t in fp.times().iter().step_by(97) {
            assert_eq!(fp.condition_number_c(t).unwrap(), 1.0);
            assert!((fp.growth_rate_p(t).unwrap() - lam.eval(t).unwrap()).abs() < 1e-4);
        }
    }

    #[test]
    fn rotation_generator() {
        let m = TimeVaryingMatrix::parse_rows(&[vec!["0", "1"], vec!["-1", "0"]])
            .unwrap()
            .unwrap();
        let fp = compute_fundamental(&m, 0.0, 4.0, 1e-2).unwrap();
        for &t in fp.times() {
            assert!(fp.growth_rate_p(t).unwrap().abs() < 1e-6);
            assert!((fp.condition_number_c(t).unwrap() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn integrated_growth_reproduces_norm() {
        let fp = compute_fundamental(&diag("-1 + 0.5*cos(t)", "-2"), 0.0, 4.0, 1e-2).unwrap();
        // trapezoid of p against ln|w|
        let p = fp.p_samples();
        let mut acc = 0.0;
        for k in 1..fp.times().len() {
            let h = fp.times()[k] - fp.times()[k - 1];
            acc += 0.5 * h * (p[k] + p[k - 1]);
            let rel = (acc.exp() / fp.sigma_max()[k] - 1.0).abs();
            assert!(rel < 1e-4, "k = {k}: {rel}");
        }
    }

    #[test]
    fn refinement_converges_quadratically() {
        let a = diag("-1 + 0.5*sin(2*t)", "-3");
        let coarse = compute_fundamental(&a, 0.0, 2.0, 0.02).unwrap();
        let fine = compute_fundamental(&a, 0.0, 2.0, 0.01).unwrap();
        let finest = compute_fundamental(&a, 0.0, 2.0, 0.005).unwrap();
        let probe = [0.5, 1.0, 1.5];
        let e1: f64 = probe
            .iter()
            .map(|&t| (coarse.growth_rate_p(t).unwrap() - finest.growth_rate_p(t).unwrap()).abs())
            .fold(0.0, f64::max);
        let e2: f64 = probe
            .iter()
            .map(|&t| (fine.growth_rate_p(t).unwrap() - finest.growth_rate_p(t).unwrap()).abs())
            .fold(0.0, f64::max);
        assert!(e1 / e2 > 3.0, "ratio {}", e1 / e2);
    }

    #[test]
    fn crossing_singular_values_flag_a_kink() {
        let fp = compute_fundamental(&diag("-1", "-1.5"), 0.0, 4.0, 0.01).unwrap();
        assert!(fp.diagnostics.kinks.is_empty());
        // ln|w| = max(-t, -2t + t²/2): the two branches cross at t = 2
        let crossing = diag("-1", "-2 + t");
        let fp = compute_fundamental(&crossing, 0.0, 4.0, 0.01).unwrap();
        assert!(
            fp.diagnostics.kinks.iter().any(|&t| (t - 2.0).abs() < 0.05),
            "{:?}",
            fp.diagnostics.kinks
        );
    }

    #[test]
    fn out_of_domain() {
        let fp = compute_fundamental(&diag("-1", "-1"), 0.0, 1.0, 0.1).unwrap();
        assert!(fp.growth_rate_p(1.5).is_err());
        assert!(fp.condition_number_c(-0.5).is_err());
    }

    #[test]
    fn safety_margin_shifts_p() {
        let fp = compute_fundamental(&diag("-1", "-2"), 0.0, 1.0, 0.01)
            .unwrap()
            .with_safety_margin(0.25);
        assert!((fp.growth_rate_p(0.5).unwrap() + 0.75).abs() < 1e-9);
    }
}
