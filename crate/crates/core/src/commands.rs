//! The simulate / region / verify pipelines behind the command-line tool.
//!
//! Every command builds its files in memory and returns them together with a
//! key-value report, so repeated runs produce identical bytes.

use std::fmt::{self, Display, Write as _};
use std::fs;
use std::io;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;
use toml::{Table, Value};

use crate::auxiliary::{build_autonomous, build_auxiliary, build_linearized, solve_auxiliary, solve_auxiliary_with, ScalarAuxiliary};
use crate::config::{validate_config, ConfigError, ScenarioConfig, ValidatedConfig};
use crate::dde::{integrate, DelayRhs, IntegrateOptions, Side, Trajectory};
use crate::linalg::norm2;
use crate::linear_system::compute_fundamental;
use crate::majorant::{build_majorant, linearize, verify_dominance, Majorant};
use crate::region::{containment_check, RegionError, scalar_radius, vector_boundary_sweep, Boundary, ScalarRadius};
use crate::system::DdeSystem;
use crate::verification::{
    bound_chain, comparison_suite, monotonicity_suite, random_history_pairs, robust_probe, zeta_bar_audit,
    BoundReport, PerturbationSpec, SuiteParams, SuiteReport,
};

/// Literal written in place of values past a blow-up.
pub const BLOWUP: &str = "blowup";

/// Finest step used for the fundamental matrix.
const FUNDAMENTAL_STEP: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Violations,
    Error,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Pass => 0,
            Status::Violations => 1,
            Status::Error => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Violations => "violations",
            Status::Error => "error",
        }
    }

    fn worst(self, other: Status) -> Status {
        if self.exit_code() >= other.exit_code() {
            self
        } else {
            other
        }
    }
}

/// Ordered `key = value` lines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    entries: Vec<(String, String)>,
}

impl Report {
    pub fn push(&mut self, key: impl Into<String>, value: impl Display) {
        self.entries.push((key.into(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Artifacts {
    pub status: Status,
    pub report: Report,
    /// `(file name, contents)`; `report.txt` is added by [`Artifacts::files`].
    extra: Vec<(String, String)>,
}

impl Artifacts {
    fn new() -> Self {
        Self {
            status: Status::Pass,
            report: Report::default(),
            extra: Vec::new(),
        }
    }

    fn add_file(&mut self, name: &str, contents: String) {
        self.extra.push((name.to_string(), contents));
    }

    fn fail(&mut self, status: Status) {
        self.status = self.status.worst(status);
    }

    fn error(&mut self, what: &str, err: impl Display) {
        self.report.push(format!("error.{what}"), err);
        self.fail(Status::Error);
    }

    pub fn files(&self) -> Vec<(String, String)> {
        let mut report = self.report.clone();
        report.push("status", self.status.as_str());
        let mut out = self.extra.clone();
        out.push(("report.txt".to_string(), report.render()));
        out
    }

    pub fn file(&self, name: &str) -> Option<String> {
        self.files().into_iter().find(|(n, _)| n == name).map(|(_, c)| c)
    }

    pub fn write_to(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        for (name, contents) in self.files() {
            fs::write(dir.join(name), contents)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown suite '{0}' (expected comparison, monotonicity, robust or dominance)")]
pub struct UnknownSuite(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Comparison,
    Monotonicity,
    Robust,
    Dominance,
}

impl FromStr for Suite {
    type Err = UnknownSuite;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "comparison" => Ok(Suite::Comparison),
            "monotonicity" => Ok(Suite::Monotonicity),
            "robust" => Ok(Suite::Robust),
            "dominance" => Ok(Suite::Dominance),
            other => Err(UnknownSuite(other.to_string())),
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Suite::Comparison => "comparison",
            Suite::Monotonicity => "monotonicity",
            Suite::Robust => "robust",
            Suite::Dominance => "dominance",
        })
    }
}

/// Command-line overrides applied on top of a scenario.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    /// Integration step, also used by the sweep.
    pub step: Option<f64>,
    /// Simulation and classifier horizon.
    pub horizon: Option<f64>,
    pub seed: Option<u64>,
}

impl Overrides {
    pub fn is_empty(&self) -> bool {
        self.step.is_none() && self.horizon.is_none() && self.seed.is_none()
    }
}

fn set(table: &mut Table, path: &[&str], value: Value) {
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut t = table;
    for key in parents {
        t = t
            .entry(key.to_string())
            .or_insert_with(|| Value::Table(Table::new()))
            .as_table_mut()
            .expect("echoed sections are tables");
    }
    t.insert(last.to_string(), value);
}

/// Re-validates `config` with `overrides` applied.
pub fn apply_overrides(config: &ScenarioConfig, overrides: &Overrides) -> Result<ValidatedConfig, Vec<ConfigError>> {
    let mut table: Table = config.to_toml().parse().expect("echo parses");
    if let Some(step) = overrides.step {
        set(&mut table, &["horizon", "step"], Value::Float(step));
        set(&mut table, &["sweep", "step"], Value::Float(step));
    }
    if let Some(h) = overrides.horizon {
        set(&mut table, &["horizon", "t_end"], Value::Float(h));
        set(&mut table, &["classifier", "horizon"], Value::Float(h));
        set(&mut table, &["verify", "robust", "t_end"], Value::Float(h));
    }
    if let Some(seed) = overrides.seed {
        set(&mut table, &["verify", "seed"], Value::Integer(seed as i64));
    }
    validate_config(&toml::to_string(&table).expect("tables serialize"))
}

/// Row times `t0 + k stride`, `k = 0..=floor((t_end - t0)/stride)`.
pub fn output_grid(t0: f64, t_end: f64, stride: f64) -> Vec<f64> {
    let rows = ((t_end - t0) / stride + 1e-9).floor() as usize + 1;
    (0..rows).map(|k| t0 + k as f64 * stride).collect()
}

/// Euclidean norm of a trajectory at `t`, `None` past its blow-up.
fn norm_at(traj: &Trajectory, t: f64) -> Option<f64> {
    if t > traj.t_last() + 1e-12 {
        return None;
    }
    let mut x = vec![0.0; traj.dim()];
    traj.eval_into(t, Side::Right, &mut x).ok()?;
    Some(norm2(&x))
}

fn cell(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x}"),
        _ => BLOWUP.to_string(),
    }
}

fn trajectory_csv(grid: &[f64], columns: &[(&str, &Trajectory)]) -> String {
    let mut out = String::from("t");
    for (name, _) in columns {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for &t in grid {
        out.push_str(&format!("{t}"));
        for (_, traj) in columns {
            out.push(',');
            out.push_str(&cell(norm_at(traj, t)));
        }
        out.push('\n');
    }
    out
}

fn bound_violations_csv(out: &mut String, report: &BoundReport) {
    for (k, pair) in report.pairs.iter().enumerate() {
        for (i, &t) in report.times.iter().enumerate() {
            let (lo, up) = (report.values[k][i], report.values[k + 1][i]);
            let excess = lo - up - report.tol_abs - report.tol_rel * up.abs();
            if up != f64::INFINITY && (excess > 0.0 || excess.is_nan()) {
                let _ = writeln!(out, "{}<={},{t},{},{}", pair.lower, pair.upper, cell(Some(lo)), cell(Some(up)));
            }
        }
    }
}

fn push_chain(report: &mut Report, prefix: &str, chain: &BoundReport) {
    for pair in &chain.pairs {
        let key = format!("{prefix}.{}<={}", pair.lower, pair.upper);
        report.push(format!("{key}.violations"), pair.violations);
        report.push(format!("{key}.max_excess"), pair.max_violation);
        report.push(format!("{key}.worst_t"), pair.worst_time);
    }
}

/// Vector system, majorant and scalar auxiliary on `[t0, horizon]`.
struct Pipeline {
    sys: DdeSystem,
    majorant: Majorant,
    aux: ScalarAuxiliary,
    kinks: usize,
    clamped_c: usize,
}

fn pipeline(config: &ScenarioConfig, horizon: f64) -> Result<Pipeline, String> {
    let sys = config.system();
    let majorant = build_majorant(sys.field());
    let fp = compute_fundamental(sys.a(), config.t0, horizon, config.step.min(FUNDAMENTAL_STEP))
        .map_err(|e| e.to_string())?;
    let aux = build_auxiliary(&sys, &fp, &majorant, &config.history, horizon, config.sup_grid_step)
        .map_err(|e| e.to_string())?;
    Ok(Pipeline {
        sys,
        majorant,
        aux,
        kinks: fp.diagnostics.kinks.len(),
        clamped_c: fp.diagnostics.clamped_c,
    })
}

fn header(report: &mut Report, config: &ScenarioConfig, command: &str, warnings: &[String]) {
    report.push("command", command);
    report.push("scenario", &config.name);
    report.push("t0", config.t0);
    report.push("t_end", config.t_end);
    report.push("step", config.step);
    report.push("f0", config.f0);
    for (i, w) in warnings.iter().enumerate() {
        report.push(format!("warning.{i}"), w);
    }
}

/// Norm evolution of the vector system against its scalar bounds.
pub fn cmd_simulate(validated: &ValidatedConfig) -> Artifacts {
    let config = &validated.config;
    let mut art = Artifacts::new();
    header(&mut art.report, config, "simulate", &validated.warnings);
    art.add_file("config.toml", config.to_toml());
    let grid = output_grid(config.t0, config.t_end, config.output_stride);
    let mut columns: Vec<(&str, Trajectory)> = Vec::new();
    let mut violations = String::from("check,t,lower,upper\n");

    let sys = config.system();
    let hist_norm = config
        .history
        .sup_norm(config.t0, config.delays.h_bar(), config.sup_grid_step)
        .unwrap_or(f64::INFINITY);
    let abort = config.classifier.divergence_level(hist_norm);
    match integrate(
        &sys,
        &config.history,
        config.t0,
        config.t_end,
        IntegrateOptions::new(config.step).abort_above(abort),
    ) {
        Ok(x) => columns.push(("norm_x", x)),
        Err(e) => art.error("norm_x", e),
    }

    let opts = IntegrateOptions::new(config.step).abort_above(abort);
    let mut lin_u = None;
    match pipeline(config, config.t_end) {
        Err(e) => art.error("auxiliary", e),
        Ok(pl) => {
            art.report.push("fundamental.kinks", pl.kinks);
            art.report.push("fundamental.clamped_c", pl.clamped_c);
            match solve_auxiliary_with(&pl.aux, config.t_end, opts) {
                Ok(y) => columns.push(("y", y)),
                Err(e) => art.error("y", e),
            }
            match build_autonomous(&pl.aux, config.sup_grid_step) {
                Ok(auto) => {
                    art.report.push("autonomous.p_hat", auto.p_hat);
                    art.report.push("autonomous.c_hat", auto.c_hat);
                    art.report.push("autonomous.horizon_dependent", auto.horizon_dependent);
                    match solve_auxiliary_with(&auto.aux, config.t_end, opts) {
                        Ok(yhat) => columns.push(("yhat", yhat)),
                        Err(e) => art.error("yhat", e),
                    }
                }
                Err(e) => art.error("yhat", e),
            }
            if let Some(zb) = config.zeta_bar {
                let u = linearize(&pl.majorant, zb)
                    .map_err(|e| e.to_string())
                    .and_then(|lm| build_linearized(&pl.aux, &lm).map_err(|e| e.to_string()))
                    .and_then(|lin| lin.solve(config.t_end, config.step).map_err(|e| e.to_string()));
                match u {
                    Ok(u) => {
                        let audit = zeta_bar_audit(&u, zb);
                        art.report.push("linearized.zeta_bar", zb);
                        art.report.push("linearized.max_u", audit.max_u);
                        art.report.push("linearized.conclusive", audit.conclusive);
                        lin_u = Some(audit.conclusive);
                        columns.push(("u", u));
                    }
                    Err(e) => art.error("u", e),
                }
            }
        }
    }

    let chain: Vec<(&str, &Trajectory)> = columns
        .iter()
        .filter(|(n, _)| *n != "u")
        .map(|(n, t)| (*n, t))
        .collect();
    if chain.len() == 3 {
        match bound_chain(&chain, &grid, config.tol_abs, config.tol_rel) {
            Ok(rep) => {
                push_chain(&mut art.report, "chain", &rep);
                bound_violations_csv(&mut violations, &rep);
                if !rep.passed() {
                    art.fail(Status::Violations);
                }
            }
            Err(e) => art.error("chain", e),
        }
    }
    let find = |name: &str| columns.iter().find(|(n, _)| *n == name).map(|(_, t)| t);
    match (lin_u, find("norm_x"), find("y"), find("u")) {
        (Some(true), Some(x), Some(y), Some(u)) => {
            match bound_chain(&[("norm_x", x), ("y", y), ("u", u)], &grid, config.tol_abs, config.tol_rel) {
                Ok(rep) => {
                    push_chain(&mut art.report, "linearized_chain", &rep);
                    bound_violations_csv(&mut violations, &rep);
                    if !rep.passed() {
                        art.fail(Status::Violations);
                    }
                }
                Err(e) => art.error("linearized_chain", e),
            }
        }
        (Some(false), ..) => art.report.push("linearized_chain", "skipped (zeta_bar exceeded)"),
        _ => {}
    }

    let refs: Vec<(&str, &Trajectory)> = columns.iter().map(|(n, t)| (*n, t)).collect();
    art.add_file("trajectory.csv", trajectory_csv(&grid, &refs));
    art.add_file("violations.csv", violations);
    art.report.push("rows", grid.len());
    art
}

fn radius_csv(thetas: &[f64], r: f64) -> String {
    let mut out = String::from("theta,r,ln_r\n");
    for &theta in thetas {
        let _ = writeln!(out, "{theta},{r},{}", r.ln());
    }
    out
}

fn boundary_csv(b: &Boundary) -> String {
    let mut out = String::from("theta,r,ln_r\n");
    for p in &b.points {
        let _ = writeln!(out, "{},{},{}", p.theta, p.r, p.ln_r);
    }
    out
}

fn push_radius(report: &mut Report, key: &str, r: &ScalarRadius) {
    report.push(format!("{key}.r"), r.r);
    report.push(format!("{key}.rejected_at"), r.rejected_at);
    report.push(format!("{key}.capped"), r.capped);
    report.push(format!("{key}.probes"), r.probes);
}

/// Radii of the scalar bounds and the swept boundary of the vector system.
pub fn cmd_region(validated: &ValidatedConfig) -> Artifacts {
    let config = &validated.config;
    let mut art = Artifacts::new();
    header(&mut art.report, config, "region", &validated.warnings);
    art.add_file("config.toml", config.to_toml());
    let mode = config.radius_mode();
    art.report.push("mode", mode.as_str());
    art.report.push("classifier.horizon", config.classifier.horizon);
    let horizon = config.classifier.horizon.max(config.t_end);
    let pl = match pipeline(config, horizon) {
        Ok(pl) => pl,
        Err(e) => {
            art.error("auxiliary", e);
            return art;
        }
    };
    let thetas: Vec<f64> = (0..config.sweep.ray_count().unwrap_or(0))
        .map(|k| k as f64 * config.sweep.angle_step)
        .collect();
    // An empty region (divergence from the smallest probed history) is r = 0.
    let radius = |aux: &ScalarAuxiliary| -> Result<Option<ScalarRadius>, String> {
        match scalar_radius(aux, mode, &config.classifier, config.region.cap, config.region.tol_rel, config.step) {
            Ok(r) => Ok(Some(r)),
            Err(RegionError::NoStableBracket { .. }) => Ok(None),
            Err(e) => Err(e.to_string()),
        }
    };
    let auto = build_autonomous(&pl.aux, config.sup_grid_step);
    let (r_non, r_auto) = rayon::join(
        || radius(&pl.aux),
        || auto.as_ref().map_err(|e| e.to_string()).and_then(|a| radius(&a.aux)),
    );
    let mut radii = [0.0; 2];
    for (i, (key, r)) in [("autonomous", r_auto), ("nonautonomous", r_non)].into_iter().enumerate() {
        match r {
            Ok(Some(r)) => {
                push_radius(&mut art.report, key, &r);
                art.add_file(&format!("region_{key}.csv"), radius_csv(&thetas, r.r));
                radii[i] = r.r;
            }
            Ok(None) => {
                art.report.push(format!("{key}.r"), 0);
                art.report.push(format!("{key}.empty"), true);
                art.add_file(&format!("region_{key}.csv"), radius_csv(&[], 0.0));
            }
            Err(e) => {
                art.error(key, e);
                return art;
            }
        }
    }
    let [r_auto, r_non] = radii;

    // Both radii carry the bisection tolerance of the larger one.
    let ordered = r_auto <= r_non * (1.0 + config.region.tol_rel);
    art.report.push("ordering.autonomous<=nonautonomous", ordered);
    if !ordered {
        art.fail(Status::Violations);
    }

    if config.dimension < 2 {
        art.report.push("boundary", "skipped (dimension 1)");
        return art;
    }
    match vector_boundary_sweep(&pl.sys, config.t0, &config.classifier, &config.sweep) {
        Ok(boundary) => {
            let c = containment_check(r_non, &boundary);
            art.report.push("boundary.rays", boundary.points.len());
            art.report.push("boundary.min_radius", boundary.min_radius());
            art.report.push("boundary.any_capped", boundary.any_capped());
            art.report.push("containment.contained", c.contained);
            art.report.push("containment.margin", c.margin);
            if !c.contained {
                art.fail(Status::Violations);
            }
            art.add_file("region_boundary.csv", boundary_csv(&boundary));
        }
        Err(e) => art.error("boundary", e),
    }
    art
}

fn suite_params(config: &ScenarioConfig) -> SuiteParams {
    SuiteParams {
        t_end: config.verify.suite_t_end,
        step: config.step,
        tol_abs: config.tol_abs,
        tol_rel: config.tol_rel,
    }
}

fn suite_output(art: &mut Artifacts, rep: &SuiteReport) {
    art.report.push("instances", rep.instances);
    art.report.push("violations", rep.violations);
    art.report.push("max_gap", rep.max_gap);
    let mut csv = String::from("instance,t,lower,upper\n");
    for f in &rep.failures {
        let _ = writeln!(csv, "{},{},{},{}", f.instance, f.t, cell(Some(f.lower)), cell(Some(f.upper)));
    }
    art.add_file("violations.csv", csv);
    if !rep.passed() {
        art.fail(Status::Violations);
    }
}

/// Runs one verification suite with the counts and seed of the scenario.
pub fn cmd_verify(validated: &ValidatedConfig, suite: Suite) -> Artifacts {
    let config = &validated.config;
    let mut art = Artifacts::new();
    header(&mut art.report, config, "verify", &validated.warnings);
    art.report.push("suite", suite);
    art.report.push("seed", config.verify.seed);
    art.add_file("config.toml", config.to_toml());
    match suite {
        Suite::Comparison => match comparison_suite(config.verify.pairs, config.verify.seed, &suite_params(config)) {
            Ok(rep) => suite_output(&mut art, &rep),
            Err(e) => art.error("suite", e),
        },
        Suite::Monotonicity => {
            let params = suite_params(config);
            let horizon = params.t_end.max(config.t_end);
            let result = pipeline(config, horizon).and_then(|pl| {
                let pairs =
                    random_history_pairs(config.verify.history_pairs, config.verify.seed, config.verify.history_max);
                monotonicity_suite(&pl.aux, &pairs, &params).map_err(|e| e.to_string())
            });
            match result {
                Ok(rep) => suite_output(&mut art, &rep),
                Err(e) => art.error("suite", e),
            }
        }
        Suite::Robust => robust(config, &mut art),
        Suite::Dominance => {
            let field = config.field();
            let l = build_majorant(&field);
            match verify_dominance(
                &field,
                &l,
                config.verify.samples,
                config.verify.radius,
                (config.t0, config.t_end),
                config.verify.seed,
            ) {
                Ok(rep) => {
                    art.report.push("samples", rep.samples);
                    art.report.push("radius", config.verify.radius);
                    art.report.push("violations", rep.violations);
                    art.report.push("max_deficit", rep.max_deficit);
                    let mut csv = String::from("t,field_norm,majorant\n");
                    if let Some(w) = rep.worst.as_ref().filter(|_| rep.violations > 0) {
                        let _ = writeln!(csv, "{},{},{}", w.t, w.field_norm, w.majorant);
                    }
                    art.add_file("violations.csv", csv);
                    if !rep.passed() {
                        art.fail(Status::Violations);
                    }
                }
                Err(e) => art.error("suite", e),
            }
        }
    }
    art
}

fn robust(config: &ScenarioConfig, art: &mut Artifacts) {
    let rb = &config.verify.robust;
    let horizon = rb.t_end.max(config.t_end);
    let aux = match pipeline(config, horizon).and_then(|pl| pl.aux.with_forcing(0.0).map_err(|e| e.to_string())) {
        Ok(aux) => aux,
        Err(e) => return art.error("auxiliary", e),
    };
    let pert = PerturbationSpec {
        l_r: rb.l_r.clone(),
        delays: rb.delays.clone(),
        epsilon: rb.epsilon,
    };
    let probe = match robust_probe(&aux, &pert, rb.t_end, config.step) {
        Ok(p) => p,
        Err(e) => return art.error("probe", e),
    };
    art.report.push("epsilon", probe.epsilon);
    art.report.push("history_norm", probe.history_norm);
    art.report.push("lr_sup", probe.lr_sup);
    art.report.push("delay_mismatch", probe.delay_mismatch);
    art.report.push("max_z", probe.max_z);
    art.report.push("blowup", probe.blowup.is_some());
    art.report.push("within_epsilon", probe.within_epsilon);
    let mut csv = String::from("t,z,y\n");
    if rb.l_r.is_zero() && &rb.delays == DelayRhs::delays(&aux) {
        match solve_auxiliary(&aux, rb.t_end, config.step) {
            Ok(base) => {
                let (z, y) = (probe.trajectory.scalar_values(), base.scalar_values());
                let identical = z.len() == y.len() && z.iter().zip(&y).all(|(a, b)| a.to_bits() == b.to_bits());
                art.report.push("identical_to_unperturbed", identical);
                if !identical {
                    for ((t, a), b) in base.times().iter().zip(&z).zip(&y) {
                        if a.to_bits() != b.to_bits() {
                            let _ = writeln!(csv, "{t},{a},{b}");
                        }
                    }
                    art.fail(Status::Violations);
                }
            }
            Err(e) => art.error("unperturbed", e),
        }
    }
    art.add_file("violations.csv", csv);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::load_scenario;

    fn scenario(name: &str) -> ValidatedConfig {
        validate_config(&load_scenario(name).unwrap().text).unwrap()
    }

    #[test]
    fn grid_row_count() {
        assert_eq!(output_grid(0.0, 20.0, 0.1).len(), 201);
        assert_eq!(output_grid(0.0, 1.0, 0.3).len(), 4);
        assert_eq!(output_grid(1.0, 1.5, 0.5).len(), 2);
    }

    #[test]
    fn suite_names() {
        assert_eq!("robust".parse::<Suite>().unwrap(), Suite::Robust);
        assert!("nope".parse::<Suite>().is_err());
    }

    #[test]
    fn overrides_revalidate() {
        let v = scenario("sec5_case_a");
        let o = apply_overrides(
            &v.config,
            &Overrides {
                step: Some(0.005),
                horizon: Some(5.0),
                seed: Some(3),
            },
        )
        .unwrap();
        assert_eq!(o.config.step, 0.005);
        assert_eq!(o.config.sweep.step, 0.005);
        assert_eq!(o.config.t_end, 5.0);
        assert_eq!(o.config.classifier.horizon, 5.0);
        assert_eq!(o.config.verify.seed, 3);
        let bad = apply_overrides(
            &v.config,
            &Overrides {
                step: Some(0.2),
                ..Overrides::default()
            },
        );
        assert!(bad.unwrap_err().iter().any(|e| e.path == "horizon.step"));
    }

    #[test]
    fn simulate_linear_reduction() {
        let v = scenario("oracle_diag");
        let art = cmd_simulate(&v);
        assert_eq!(art.status, Status::Pass, "{}", art.report.render());
        let csv = art.file("trajectory.csv").unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("t,norm_x,y,yhat"));
        let rows: Vec<_> = lines.collect();
        assert_eq!(rows.len(), 301);
        for row in rows.iter().step_by(50) {
            let f: Vec<f64> = row.split(',').map(|s| s.parse().unwrap()).collect();
            assert!((f[1] - (-2.0 * f[0]).exp()).abs() < 1e-9);
        }
    }

    #[test]
    fn simulate_writes_blowup_token() {
        let text = r#"
dimension = 1
[horizon]
t_end = 2.0
step = 0.01
output_stride = 0.5
[system]
a = [["1"]]
[[system.terms]]
component = 1
coefficient = "1"
factors = [{ slot = 0, component = 1, exponent = 2 }]
[history]
constant = [2.0]
"#;
        let art = cmd_simulate(&validate_config(text).unwrap());
        let csv = art.file("trajectory.csv").unwrap();
        let last = csv.lines().last().unwrap();
        assert!(last.ends_with("blowup,blowup,blowup"), "{csv}");
        assert_eq!(csv.lines().count(), 6);
    }

    #[test]
    fn robust_zero_perturbation_is_identical() {
        let v = scenario("sec5_case_a");
        let v = apply_overrides(
            &v.config,
            &Overrides {
                horizon: Some(3.0),
                ..Overrides::default()
            },
        )
        .unwrap();
        let art = cmd_verify(&v, Suite::Robust);
        assert_eq!(art.report.get("identical_to_unperturbed"), Some("true"), "{}", art.report.render());
        assert_eq!(art.status, Status::Pass);
    }

    #[test]
    fn dominance_on_appendix_field() {
        let art = cmd_verify(&scenario("appendix_b"), Suite::Dominance);
        assert_eq!(art.status, Status::Pass, "{}", art.report.render());
        let deficit: f64 = art.report.get("max_deficit").unwrap().parse().unwrap();
        assert!(deficit <= 0.0);
    }
}
