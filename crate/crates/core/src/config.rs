//! Scenario files.
//!
//! A scenario is a TOML document. Expressions are strings in the `t`
//! grammar of [`crate::expr`]; plain numbers are accepted wherever an
//! expression is. Components are numbered from 1, slot 0 is the undelayed
//! state and slot `j` reads delay channel `j`.
//!
//! ```toml
//! name = "example"
//! dimension = 2
//!
//! [horizon]
//! t0 = 0.0
//! t_end = 20.0
//! step = 0.01
//! output_stride = 0.1
//!
//! [system]
//! a = [["-3", "0"], ["0", "-3"]]
//!
//! [[system.linear]]
//! slot = 1
//! scale = 0.1
//! matrix = [["0", "1"], ["-1", "-0.5"]]
//!
//! [[system.terms]]
//! component = 2
//! coefficient = "0.1"
//! factors = [{ slot = 1, component = 2, exponent = 3 }]
//!
//! [delays]
//! channels = ["0.5"]
//! h_bar = 0.5
//! h_floor = 0.5
//!
//! [forcing]
//! f0 = 0.5
//! envelope = ["0", "sin(10*t)"]
//!
//! [history]
//! constant = [0.5, 0.0]
//! ```
//!
//! Optional sections: `[linearization]`, `[classifier]`, `[region]`,
//! `[sweep]`, `[tolerances]`, `[verify]` and `[verify.robust]`.

use std::f64::consts::{PI, TAU};
use std::fmt;

use toml::{Table, Value};

use crate::dde::{uniform_grid, DelaySpec, HistoryFunction};
use crate::expr::{parse_expr, TimeExpr, TimeVaryingMatrix};
use crate::majorant::{
    Coefficient, LinearBlock, Majorant, MajorantTerm, MonomialFactor, MonomialTerm,
    MonomialVectorField,
};
use crate::region::{ClassifierParams, RadiusMode, SweepParams};
use crate::system::DdeSystem;

/// Tolerance on `sup |e| = 1` before a forcing warning is raised.
pub const ENVELOPE_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionConfig {
    pub cap: f64,
    pub tol_rel: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustConfig {
    pub epsilon: f64,
    pub l_r: Majorant,
    pub delays: DelaySpec,
    pub t_end: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyConfig {
    pub seed: u64,
    pub pairs: usize,
    pub history_pairs: usize,
    pub history_max: f64,
    pub samples: usize,
    pub radius: f64,
    pub suite_t_end: f64,
    pub robust: RobustConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub dimension: usize,
    pub t0: f64,
    pub t_end: f64,
    pub step: f64,
    pub output_stride: f64,
    /// Grid spacing for coefficient sups and history sampling.
    pub sup_grid_step: f64,
    pub a: TimeVaryingMatrix,
    pub linear: Vec<LinearBlock>,
    pub terms: Vec<MonomialTerm>,
    pub delays: DelaySpec,
    pub f0: f64,
    pub envelope: Vec<TimeExpr>,
    pub history: HistoryFunction,
    pub zeta_bar: Option<f64>,
    pub classifier: ClassifierParams,
    pub region: RegionConfig,
    pub sweep: SweepParams,
    pub tol_abs: f64,
    pub tol_rel: f64,
    pub verify: VerifyConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedConfig {
    pub config: ScenarioConfig,
    pub warnings: Vec<String>,
}

impl ScenarioConfig {
    pub fn field(&self) -> MonomialVectorField {
        MonomialVectorField::new(
            self.dimension,
            self.delays.len() + 1,
            self.linear.clone(),
            self.terms.clone(),
        )
        .expect("validated field")
    }

    pub fn system(&self) -> DdeSystem {
        DdeSystem::new(
            self.a.clone(),
            self.field(),
            self.delays.clone(),
            self.f0,
            self.envelope.clone(),
        )
        .expect("validated system")
    }

    /// Stability when unforced, boundedness otherwise.
    pub fn radius_mode(&self) -> RadiusMode {
        if self.f0 > 0.0 {
            RadiusMode::Boundedness
        } else {
            RadiusMode::Stability
        }
    }

    /// Resolved configuration as TOML, defaults included.
    pub fn to_toml(&self) -> String {
        let mut root = Table::new();
        root.insert("name".into(), Value::String(self.name.clone()));
        root.insert("dimension".into(), Value::Integer(self.dimension as i64));

        let mut horizon = Table::new();
        horizon.insert("t0".into(), Value::Float(self.t0));
        horizon.insert("t_end".into(), Value::Float(self.t_end));
        horizon.insert("step".into(), Value::Float(self.step));
        horizon.insert("output_stride".into(), Value::Float(self.output_stride));
        horizon.insert("sup_grid_step".into(), Value::Float(self.sup_grid_step));
        root.insert("horizon".into(), Value::Table(horizon));

        let mut system = Table::new();
        system.insert("a".into(), matrix_value(&self.a));
        if !self.linear.is_empty() {
            let blocks = self
                .linear
                .iter()
                .map(|b| {
                    let mut t = Table::new();
                    t.insert("slot".into(), Value::Integer(b.slot as i64));
                    t.insert("scale".into(), Value::Float(b.scale));
                    t.insert("matrix".into(), matrix_value(&b.matrix));
                    Value::Table(t)
                })
                .collect();
            system.insert("linear".into(), Value::Array(blocks));
        }
        if !self.terms.is_empty() {
            let terms = self
                .terms
                .iter()
                .map(|term| {
                    let mut t = Table::new();
                    t.insert("component".into(), Value::Integer(term.component as i64 + 1));
                    t.insert("coefficient".into(), Value::String(term.coefficient.to_string()));
                    let factors = term
                        .factors
                        .iter()
                        .map(|f| {
                            let mut ft = Table::new();
                            ft.insert("slot".into(), Value::Integer(f.slot as i64));
                            ft.insert("component".into(), Value::Integer(f.component as i64 + 1));
                            ft.insert("exponent".into(), Value::Integer(f.exponent as i64));
                            Value::Table(ft)
                        })
                        .collect();
                    t.insert("factors".into(), Value::Array(factors));
                    Value::Table(t)
                })
                .collect();
            system.insert("terms".into(), Value::Array(terms));
        }
        root.insert("system".into(), Value::Table(system));

        root.insert("delays".into(), Value::Table(delay_table(&self.delays)));

        let mut forcing = Table::new();
        forcing.insert("f0".into(), Value::Float(self.f0));
        forcing.insert("envelope".into(), expr_array(&self.envelope));
        root.insert("forcing".into(), Value::Table(forcing));

        let mut history = Table::new();
        match &self.history {
            HistoryFunction::Constant(v) => {
                history.insert(
                    "constant".into(),
                    Value::Array(v.iter().map(|x| Value::Float(*x)).collect()),
                );
            }
            HistoryFunction::Expr(es) => {
                history.insert("expressions".into(), expr_array(es));
            }
            _ => unreachable!("configs only hold constant or expression histories"),
        }
        root.insert("history".into(), Value::Table(history));

        if let Some(z) = self.zeta_bar {
            let mut lin = Table::new();
            lin.insert("zeta_bar".into(), Value::Float(z));
            root.insert("linearization".into(), Value::Table(lin));
        }

        let mut classifier = Table::new();
        classifier.insert("horizon".into(), Value::Float(self.classifier.horizon));
        classifier.insert("divergence_factor".into(), Value::Float(self.classifier.divergence_factor));
        classifier.insert("decay_threshold".into(), Value::Float(self.classifier.decay_threshold));
        classifier.insert("tail_fraction".into(), Value::Float(self.classifier.tail_fraction));
        root.insert("classifier".into(), Value::Table(classifier));

        let mut region = Table::new();
        region.insert("cap".into(), Value::Float(self.region.cap));
        region.insert("tol_rel".into(), Value::Float(self.region.tol_rel));
        root.insert("region".into(), Value::Table(region));

        let mut sweep = Table::new();
        sweep.insert("angle_step".into(), Value::Float(self.sweep.angle_step));
        sweep.insert("start_radius".into(), Value::Float(self.sweep.start_radius));
        sweep.insert("growth".into(), Value::Float(self.sweep.growth));
        sweep.insert("cap".into(), Value::Float(self.sweep.cap));
        sweep.insert("tol_rel".into(), Value::Float(self.sweep.tol_rel));
        if self.dimension >= 2 {
            sweep.insert(
                "plane".into(),
                Value::Array(vec![
                    Value::Integer(self.sweep.plane.0 as i64 + 1),
                    Value::Integer(self.sweep.plane.1 as i64 + 1),
                ]),
            );
        }
        sweep.insert("step".into(), Value::Float(self.sweep.step));
        root.insert("sweep".into(), Value::Table(sweep));

        let mut tol = Table::new();
        tol.insert("abs".into(), Value::Float(self.tol_abs));
        tol.insert("rel".into(), Value::Float(self.tol_rel));
        root.insert("tolerances".into(), Value::Table(tol));

        let v = &self.verify;
        let mut verify = Table::new();
        verify.insert("seed".into(), Value::Integer(v.seed as i64));
        verify.insert("pairs".into(), Value::Integer(v.pairs as i64));
        verify.insert("history_pairs".into(), Value::Integer(v.history_pairs as i64));
        verify.insert("history_max".into(), Value::Float(v.history_max));
        verify.insert("samples".into(), Value::Integer(v.samples as i64));
        verify.insert("radius".into(), Value::Float(v.radius));
        verify.insert("suite_t_end".into(), Value::Float(v.suite_t_end));
        let mut robust = Table::new();
        robust.insert("epsilon".into(), Value::Float(v.robust.epsilon));
        robust.insert("t_end".into(), Value::Float(v.robust.t_end));
        let lr = v
            .robust
            .l_r
            .terms()
            .iter()
            .map(|term| {
                let mut t = Table::new();
                let c = match &term.coefficient {
                    Coefficient::Const(c) => c.to_string(),
                    Coefficient::Abs(e) => e.to_string(),
                    Coefficient::MatrixNorm { .. } => unreachable!("configs hold scalar perturbation terms"),
                };
                t.insert("coefficient".into(), Value::String(c));
                t.insert(
                    "exponents".into(),
                    Value::Array(term.exponents.iter().map(|e| Value::Integer(*e as i64)).collect()),
                );
                Value::Table(t)
            })
            .collect();
        robust.insert("l_r".into(), Value::Array(lr));
        robust.insert("delays".into(), Value::Table(delay_table(&v.robust.delays)));
        verify.insert("robust".into(), Value::Table(robust));
        root.insert("verify".into(), Value::Table(verify));

        toml::to_string(&root).expect("tables serialize")
    }
}

fn matrix_value(m: &TimeVaryingMatrix) -> Value {
    Value::Array(
        m.rows()
            .map(|r| Value::Array(r.iter().map(|e| Value::String(e.to_string())).collect()))
            .collect(),
    )
}

fn expr_array(es: &[TimeExpr]) -> Value {
    Value::Array(es.iter().map(|e| Value::String(e.to_string())).collect())
}

fn delay_table(d: &DelaySpec) -> Table {
    let mut t = Table::new();
    t.insert("channels".into(), expr_array(d.channels()));
    if !d.is_empty() {
        t.insert("h_bar".into(), Value::Float(d.h_bar()));
        t.insert("h_floor".into(), Value::Float(d.h_floor()));
    }
    t
}

/// Error-collecting reader over a TOML tree.
struct Reader {
    errors: Vec<ConfigError>,
}

impl Reader {
    fn err(&mut self, path: &str, message: impl Into<String>) {
        self.errors.push(ConfigError {
            path: path.to_string(),
            message: message.into(),
        });
    }

    fn check_keys(&mut self, table: &Table, path: &str, allowed: &[&str]) {
        for key in table.keys() {
            if !allowed.contains(&key.as_str()) {
                self.err(&join(path, key), "unknown key");
            }
        }
    }

    fn table<'a>(&mut self, parent: &'a Table, key: &str, path: &str, required: bool) -> Option<&'a Table> {
        match parent.get(key) {
            Some(Value::Table(t)) => Some(t),
            Some(_) => {
                self.err(&join(path, key), "expected a table");
                None
            }
            None => {
                if required {
                    self.err(&join(path, key), "missing section");
                }
                None
            }
        }
    }

    fn number(&mut self, v: &Value, path: &str) -> Option<f64> {
        match v {
            Value::Float(f) => Some(*f),
            Value::Integer(i) => Some(*i as f64),
            Value::String(s) => match parse_expr(s) {
                Ok(e) if e.is_constant() => match e.eval(0.0) {
                    Ok(x) => Some(x),
                    Err(err) => {
                        self.err(path, err.to_string());
                        None
                    }
                },
                Ok(_) => {
                    self.err(path, "expected a constant, found an expression in t");
                    None
                }
                Err(err) => {
                    self.err(path, format!("cannot parse '{s}': {err}"));
                    None
                }
            },
            _ => {
                self.err(path, "expected a number");
                None
            }
        }
    }

    fn f64_field(&mut self, t: &Table, key: &str, path: &str, default: Option<f64>) -> Option<f64> {
        match t.get(key) {
            Some(v) => self.number(v, &join(path, key)),
            None => {
                if default.is_none() {
                    self.err(&join(path, key), "missing field");
                }
                default
            }
        }
    }

    fn usize_field(&mut self, t: &Table, key: &str, path: &str, default: Option<usize>) -> Option<usize> {
        match t.get(key) {
            Some(Value::Integer(i)) if *i >= 0 => Some(*i as usize),
            Some(_) => {
                self.err(&join(path, key), "expected a nonnegative integer");
                None
            }
            None => {
                if default.is_none() {
                    self.err(&join(path, key), "missing field");
                }
                default
            }
        }
    }

    fn expr(&mut self, v: &Value, path: &str) -> Option<TimeExpr> {
        match v {
            Value::String(s) => match parse_expr(s) {
                Ok(e) => Some(e),
                Err(err) => {
                    self.err(path, format!("cannot parse '{s}': {err}"));
                    None
                }
            },
            Value::Float(f) => Some(TimeExpr::Num(*f)),
            Value::Integer(i) => Some(TimeExpr::Num(*i as f64)),
            _ => {
                self.err(path, "expected an expression string or a number");
                None
            }
        }
    }

    fn expr_vec(&mut self, v: &Value, path: &str, len: Option<usize>) -> Option<Vec<TimeExpr>> {
        let Value::Array(items) = v else {
            self.err(path, "expected an array");
            return None;
        };
        if let Some(n) = len {
            if items.len() != n {
                self.err(path, format!("expected {n} entries, found {}", items.len()));
                return None;
            }
        }
        let out: Vec<_> = items
            .iter()
            .enumerate()
            .map(|(i, x)| self.expr(x, &format!("{path}[{i}]")))
            .collect();
        out.into_iter().collect()
    }

    fn matrix(&mut self, v: &Value, path: &str, n: usize) -> Option<TimeVaryingMatrix> {
        let Value::Array(rows) = v else {
            self.err(path, "expected an array of rows");
            return None;
        };
        if rows.len() != n {
            self.err(path, format!("expected {n} rows, found {}", rows.len()));
            return None;
        }
        let parsed: Vec<_> = rows
            .iter()
            .enumerate()
            .map(|(i, r)| self.expr_vec(r, &format!("{path}[{i}]"), Some(n)))
            .collect();
        let parsed: Option<Vec<_>> = parsed.into_iter().collect();
        TimeVaryingMatrix::from_rows(parsed?)
    }

    fn delays(&mut self, t: &Table, path: &str) -> Option<DelaySpec> {
        self.check_keys(t, path, &["channels", "h_bar", "h_floor"]);
        let channels = match t.get("channels") {
            Some(v) => self.expr_vec(v, &join(path, "channels"), None)?,
            None => Vec::new(),
        };
        if channels.is_empty() {
            return Some(DelaySpec::none());
        }
        let h_bar = self.f64_field(t, "h_bar", path, None);
        let h_floor = self.f64_field(t, "h_floor", path, None);
        let (h_bar, h_floor) = (h_bar?, h_floor?);
        if !(h_floor > 0.0) {
            self.err(&join(path, "h_floor"), "must be positive");
            return None;
        }
        if h_floor > h_bar {
            self.err(&join(path, "h_floor"), format!("h_floor = {h_floor} exceeds h_bar = {h_bar}"));
            return None;
        }
        match DelaySpec::new(channels, h_bar, h_floor) {
            Ok(d) => Some(d),
            Err(e) => {
                self.err(path, e.to_string());
                None
            }
        }
    }

    fn scalar_terms(&mut self, v: &Value, path: &str, slots: usize) -> Option<Majorant> {
        let Value::Array(items) = v else {
            self.err(path, "expected an array of terms");
            return None;
        };
        let mut terms = Vec::new();
        let mut ok = true;
        for (i, item) in items.iter().enumerate() {
            let p = format!("{path}[{i}]");
            let Value::Table(t) = item else {
                self.err(&p, "expected a table");
                ok = false;
                continue;
            };
            self.check_keys(t, &p, &["coefficient", "exponents"]);
            let coef = t.get("coefficient").and_then(|c| self.expr(c, &join(&p, "coefficient")));
            let exps = match t.get("exponents") {
                Some(Value::Array(es)) if es.len() == slots => es
                    .iter()
                    .map(|e| match e {
                        Value::Integer(k) if *k >= 0 => Some(*k as u32),
                        _ => None,
                    })
                    .collect::<Option<Vec<_>>>(),
                _ => None,
            };
            if exps.is_none() {
                self.err(&join(&p, "exponents"), format!("expected {slots} nonnegative integers"));
            }
            match (coef, exps) {
                (Some(c), Some(e)) => terms.push(MajorantTerm {
                    coefficient: Coefficient::abs_of(&c),
                    exponents: e,
                }),
                _ => ok = false,
            }
        }
        if !ok {
            return None;
        }
        Majorant::perturbation(slots, terms).ok()
    }
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

fn component_index(r: &mut Reader, t: &Table, path: &str, n: usize) -> Option<usize> {
    let c = r.usize_field(t, "component", path, None)?;
    if c == 0 || c > n {
        r.err(&join(path, "component"), format!("must lie in 1..={n}"));
        return None;
    }
    Some(c - 1)
}

fn slot_index(r: &mut Reader, t: &Table, path: &str, slots: usize) -> Option<usize> {
    let s = r.usize_field(t, "slot", path, None)?;
    if s >= slots {
        r.err(&join(path, "slot"), format!("must lie in 0..={}", slots - 1));
        return None;
    }
    Some(s)
}

/// Parses and checks a scenario, collecting every error.
pub fn validate_config(text: &str) -> Result<ValidatedConfig, Vec<ConfigError>> {
    let root: Table = match text.parse() {
        Ok(t) => t,
        Err(e) => {
            return Err(vec![ConfigError {
                path: "<document>".into(),
                message: e.to_string().trim().to_string(),
            }])
        }
    };
    let mut r = Reader { errors: Vec::new() };
    let mut warnings = Vec::new();
    r.check_keys(
        &root,
        "",
        &[
            "name",
            "dimension",
            "horizon",
            "system",
            "delays",
            "forcing",
            "history",
            "linearization",
            "classifier",
            "region",
            "sweep",
            "tolerances",
            "verify",
        ],
    );
    let name = match root.get("name") {
        Some(Value::String(s)) => s.clone(),
        Some(_) => {
            r.err("name", "expected a string");
            String::new()
        }
        None => "scenario".to_string(),
    };
    let n = match r.usize_field(&root, "dimension", "", None) {
        Some(0) => {
            r.err("dimension", "must be at least 1");
            None
        }
        other => other,
    };

    let empty = Table::new();
    let horizon = r.table(&root, "horizon", "", true).unwrap_or(&empty);
    r.check_keys(horizon, "horizon", &["t0", "t_end", "step", "output_stride", "sup_grid_step"]);
    let t0 = r.f64_field(horizon, "t0", "horizon", Some(0.0));
    let t_end = r.f64_field(horizon, "t_end", "horizon", None);
    let step = r.f64_field(horizon, "step", "horizon", None);
    if let (Some(a), Some(b)) = (t0, t_end) {
        if !(b > a) {
            r.err("horizon.t_end", format!("must exceed t0 = {a}"));
        }
    }
    if let Some(s) = step {
        if !(s > 0.0) {
            r.err("horizon.step", "must be positive");
        }
    }
    let output_stride = r.f64_field(horizon, "output_stride", "horizon", step);
    if let Some(s) = output_stride {
        if !(s > 0.0) {
            r.err("horizon.output_stride", "must be positive");
        }
    }
    let sup_grid_step = r.f64_field(horizon, "sup_grid_step", "horizon", step.map(|s| s / 10.0));

    let delays = match r.table(&root, "delays", "", false) {
        Some(t) => r.delays(t, "delays"),
        None => Some(DelaySpec::none()),
    };
    if let (Some(d), Some(s)) = (&delays, step) {
        if !d.is_empty() && s > d.h_floor() / 4.0 + 1e-15 {
            r.err("horizon.step", format!("must not exceed h_floor/4 = {}", d.h_floor() / 4.0));
        }
    }
    if let (Some(d), Some(a), Some(b), Some(s)) = (&delays, t0, t_end, step) {
        if b > a && s > 0.0 && !d.is_empty() {
            let mut buf = vec![0.0; d.len()];
            for t in uniform_grid(a, b, s) {
                if let Err(e) = d.eval_into(t, &mut buf) {
                    r.err("delays.channels", e.to_string());
                    break;
                }
            }
        }
    }
    let slots = delays.as_ref().map(|d| d.len() + 1);

    let mut a_matrix = None;
    let mut linear = Vec::new();
    let mut terms = Vec::new();
    if let Some(system) = r.table(&root, "system", "", true) {
        r.check_keys(system, "system", &["a", "linear", "terms"]);
        if let Some(n) = n {
            match system.get("a") {
                Some(v) => a_matrix = r.matrix(v, "system.a", n),
                None => r.err("system.a", "missing field"),
            }
            if let Some(slots) = slots {
                match system.get("linear") {
                    Some(Value::Array(blocks)) => {
                        for (i, b) in blocks.iter().enumerate() {
                            let p = format!("system.linear[{i}]");
                            let Value::Table(bt) = b else {
                                r.err(&p, "expected a table");
                                continue;
                            };
                            r.check_keys(bt, &p, &["slot", "scale", "matrix"]);
                            let slot = slot_index(&mut r, bt, &p, slots);
                            let scale = r.f64_field(bt, "scale", &p, Some(1.0));
                            let matrix = match bt.get("matrix") {
                                Some(v) => r.matrix(v, &join(&p, "matrix"), n),
                                None => {
                                    r.err(&join(&p, "matrix"), "missing field");
                                    None
                                }
                            };
                            if let (Some(slot), Some(scale), Some(matrix)) = (slot, scale, matrix) {
                                linear.push(LinearBlock { slot, scale, matrix });
                            }
                        }
                    }
                    Some(_) => r.err("system.linear", "expected an array of tables"),
                    None => {}
                }
                match system.get("terms") {
                    Some(Value::Array(items)) => {
                        for (i, item) in items.iter().enumerate() {
                            let p = format!("system.terms[{i}]");
                            let Value::Table(tt) = item else {
                                r.err(&p, "expected a table");
                                continue;
                            };
                            r.check_keys(tt, &p, &["component", "coefficient", "factors"]);
                            let component = component_index(&mut r, tt, &p, n);
                            let coefficient = match tt.get("coefficient") {
                                Some(v) => r.expr(v, &join(&p, "coefficient")),
                                None => {
                                    r.err(&join(&p, "coefficient"), "missing field");
                                    None
                                }
                            };
                            let mut factors = Vec::new();
                            let mut ok = true;
                            match tt.get("factors") {
                                Some(Value::Array(fs)) if !fs.is_empty() => {
                                    for (k, f) in fs.iter().enumerate() {
                                        let fp = format!("{p}.factors[{k}]");
                                        let Value::Table(ft) = f else {
                                            r.err(&fp, "expected a table");
                                            ok = false;
                                            continue;
                                        };
                                        r.check_keys(ft, &fp, &["slot", "component", "exponent"]);
                                        let slot = slot_index(&mut r, ft, &fp, slots);
                                        let comp = component_index(&mut r, ft, &fp, n);
                                        let exponent = r.usize_field(ft, "exponent", &fp, Some(1));
                                        if exponent == Some(0) {
                                            r.err(&join(&fp, "exponent"), "must be at least 1");
                                            ok = false;
                                        }
                                        match (slot, comp, exponent) {
                                            (Some(slot), Some(component), Some(e)) if e > 0 => {
                                                factors.push(MonomialFactor {
                                                    slot,
                                                    component,
                                                    exponent: e as u32,
                                                })
                                            }
                                            _ => ok = false,
                                        }
                                    }
                                }
                                _ => {
                                    r.err(&join(&p, "factors"), "expected a nonempty array of factors");
                                    ok = false;
                                }
                            }
                            if let (true, Some(component), Some(coefficient)) = (ok, component, coefficient) {
                                terms.push(MonomialTerm {
                                    component,
                                    coefficient,
                                    factors,
                                });
                            }
                        }
                    }
                    Some(_) => r.err("system.terms", "expected an array of tables"),
                    None => {}
                }
            }
        }
    }

    let mut f0 = Some(0.0);
    let mut envelope = n.map(|n| vec![TimeExpr::Num(0.0); n]);
    if let Some(forcing) = r.table(&root, "forcing", "", false) {
        r.check_keys(forcing, "forcing", &["f0", "envelope"]);
        f0 = r.f64_field(forcing, "f0", "forcing", Some(0.0));
        if let Some(v) = f0 {
            if !(v >= 0.0) || !v.is_finite() {
                r.err("forcing.f0", "must be finite and nonnegative");
                f0 = None;
            }
        }
        if let Some(v) = forcing.get("envelope") {
            envelope = r.expr_vec(v, "forcing.envelope", n);
        }
    }
    if let (Some(f0), Some(env), Some(a), Some(b), Some(s)) = (f0, &envelope, t0, t_end, step) {
        if f0 > 0.0 && b > a && s > 0.0 {
            let mut sup: f64 = 0.0;
            for t in uniform_grid(a, b, s) {
                let v: Result<f64, _> = env.iter().map(|e| e.eval(t).map(|x| x * x)).sum();
                match v {
                    Ok(v) => sup = sup.max(v.sqrt()),
                    Err(e) => {
                        r.err("forcing.envelope", e.to_string());
                        break;
                    }
                }
            }
            if (sup - 1.0).abs() > ENVELOPE_TOLERANCE {
                warnings.push(format!(
                    "forcing.envelope: sup |e(t)| over the horizon is {sup:.6}, not 1; F0 no longer equals sup |F|"
                ));
            }
        }
    }

    let mut history = None;
    if let Some(h) = r.table(&root, "history", "", true) {
        r.check_keys(h, "history", &["constant", "expressions"]);
        match (h.get("constant"), h.get("expressions")) {
            (Some(_), Some(_)) => r.err("history", "give either constant or expressions, not both"),
            (Some(v), None) => {
                let p = "history.constant";
                if let Some(es) = r.expr_vec(v, p, n) {
                    match es.iter().map(TimeExpr::constant_value).collect::<Option<Vec<_>>>() {
                        Some(vals) => history = Some(HistoryFunction::Constant(vals)),
                        None => r.err(p, "entries must be constants"),
                    }
                }
            }
            (None, Some(v)) => {
                history = r.expr_vec(v, "history.expressions", n).map(HistoryFunction::Expr);
            }
            (None, None) => r.err("history", "missing constant or expressions"),
        }
    }
    if let (Some(h), Some(d), Some(a), Some(s)) = (&history, &delays, t0, step) {
        if let Err(e) = h.sup_norm(a, d.h_bar(), s) {
            r.err("history", e.to_string());
        }
    }

    let mut zeta_bar = None;
    if let Some(lin) = r.table(&root, "linearization", "", false) {
        r.check_keys(lin, "linearization", &["zeta_bar"]);
        zeta_bar = r.f64_field(lin, "zeta_bar", "linearization", None);
        if let Some(z) = zeta_bar {
            if !(z > 0.0) || !z.is_finite() {
                r.err("linearization.zeta_bar", "must be positive and finite");
            }
        }
    }

    let cl = r.table(&root, "classifier", "", false).unwrap_or(&empty);
    r.check_keys(cl, "classifier", &["horizon", "divergence_factor", "decay_threshold", "tail_fraction"]);
    let mut classifier = ClassifierParams::new(t_end.unwrap_or(1.0));
    if let Some(v) = r.f64_field(cl, "horizon", "classifier", Some(classifier.horizon)) {
        classifier.horizon = v;
    }
    if let Some(v) = r.f64_field(cl, "divergence_factor", "classifier", Some(classifier.divergence_factor)) {
        classifier.divergence_factor = v;
    }
    if let Some(v) = r.f64_field(cl, "decay_threshold", "classifier", Some(classifier.decay_threshold)) {
        classifier.decay_threshold = v;
    }
    if let Some(v) = r.f64_field(cl, "tail_fraction", "classifier", Some(classifier.tail_fraction)) {
        classifier.tail_fraction = v;
    }
    if let Err(e) = classifier.validate() {
        r.err("classifier", e.to_string());
    }
    if let Some(a) = t0 {
        if !(classifier.horizon > a) {
            r.err("classifier.horizon", format!("must exceed t0 = {a}"));
        }
    }

    let rg = r.table(&root, "region", "", false).unwrap_or(&empty);
    r.check_keys(rg, "region", &["cap", "tol_rel"]);
    let region = RegionConfig {
        cap: r.f64_field(rg, "cap", "region", Some(10.0)).unwrap_or(10.0),
        tol_rel: r.f64_field(rg, "tol_rel", "region", Some(1e-3)).unwrap_or(1e-3),
    };
    if !(region.cap > 0.0) {
        r.err("region.cap", "must be positive");
    }
    if !(region.tol_rel > 0.0) {
        r.err("region.tol_rel", "must be positive");
    }

    let sw = r.table(&root, "sweep", "", false).unwrap_or(&empty);
    r.check_keys(
        sw,
        "sweep",
        &["angle_step", "start_radius", "growth", "cap", "tol_rel", "plane", "step"],
    );
    let mut sweep = SweepParams::new(PI / 100.0, region.cap, step.unwrap_or(0.01));
    if let Some(v) = r.f64_field(sw, "angle_step", "sweep", Some(sweep.angle_step)) {
        sweep.angle_step = v;
    }
    if let Some(v) = r.f64_field(sw, "cap", "sweep", Some(sweep.cap)) {
        sweep.cap = v;
        sweep.start_radius = (0.1 * v).min(1.0);
    }
    if let Some(v) = r.f64_field(sw, "start_radius", "sweep", Some(sweep.start_radius)) {
        sweep.start_radius = v;
    }
    if let Some(v) = r.f64_field(sw, "growth", "sweep", Some(sweep.growth)) {
        sweep.growth = v;
    }
    if let Some(v) = r.f64_field(sw, "tol_rel", "sweep", Some(sweep.tol_rel)) {
        sweep.tol_rel = v;
    }
    if let Some(v) = r.f64_field(sw, "step", "sweep", Some(sweep.step)) {
        sweep.step = v;
    }
    if sweep.ray_count().is_none() {
        r.err("sweep.angle_step", format!("{} does not divide 2π = {TAU}", sweep.angle_step));
    }
    if !(sweep.cap > 0.0 && sweep.start_radius > 0.0 && sweep.tol_rel > 0.0) {
        r.err("sweep", "cap, start_radius and tol_rel must be positive");
    }
    if !(sweep.growth > 1.0) {
        r.err("sweep.growth", "must exceed 1");
    }
    if let Some(d) = &delays {
        if !(sweep.step > 0.0) || (!d.is_empty() && sweep.step > d.h_floor() / 4.0 + 1e-15) {
            r.err("sweep.step", "must be positive and at most h_floor/4");
        }
    }
    match sw.get("plane") {
        Some(Value::Array(p)) => match p.as_slice() {
            [Value::Integer(i), Value::Integer(j)] => {
                let ok = n.is_some_and(|n| *i >= 1 && *j >= 1 && *i as usize <= n && *j as usize <= n && i != j);
                if ok {
                    sweep.plane = (*i as usize - 1, *j as usize - 1);
                } else {
                    r.err("sweep.plane", "expected two distinct components in 1..=dimension");
                }
            }
            _ => r.err("sweep.plane", "expected two integers"),
        },
        Some(_) => r.err("sweep.plane", "expected two integers"),
        None => {}
    }

    let tl = r.table(&root, "tolerances", "", false).unwrap_or(&empty);
    r.check_keys(tl, "tolerances", &["abs", "rel"]);
    let tol_abs = r.f64_field(tl, "abs", "tolerances", Some(1e-6)).unwrap_or(1e-6);
    let tol_rel = r.f64_field(tl, "rel", "tolerances", Some(1e-3)).unwrap_or(1e-3);
    if !(tol_abs >= 0.0 && tol_rel >= 0.0) {
        r.err("tolerances", "must be nonnegative");
    }

    let vf = r.table(&root, "verify", "", false).unwrap_or(&empty);
    r.check_keys(
        vf,
        "verify",
        &["seed", "pairs", "history_pairs", "history_max", "samples", "radius", "suite_t_end", "robust"],
    );
    let seed = r.usize_field(vf, "seed", "verify", Some(7)).unwrap_or(7) as u64;
    let pairs = r.usize_field(vf, "pairs", "verify", Some(100)).unwrap_or(100);
    let history_pairs = r.usize_field(vf, "history_pairs", "verify", Some(50)).unwrap_or(50);
    let history_max = r.f64_field(vf, "history_max", "verify", Some(1.0)).unwrap_or(1.0);
    let samples = r.usize_field(vf, "samples", "verify", Some(10_000)).unwrap_or(10_000);
    let radius = r.f64_field(vf, "radius", "verify", Some(2.0)).unwrap_or(2.0);
    let suite_t_end = r.f64_field(vf, "suite_t_end", "verify", Some(5.0)).unwrap_or(5.0);
    if pairs == 0 {
        r.err("verify.pairs", "must be at least 1");
    }
    let rb = r.table(vf, "robust", "verify", false).unwrap_or(&empty);
    r.check_keys(rb, "verify.robust", &["epsilon", "l_r", "delays", "t_end"]);
    let epsilon = r.f64_field(rb, "epsilon", "verify.robust", Some(0.1)).unwrap_or(0.1);
    if !(epsilon > 0.0) {
        r.err("verify.robust.epsilon", "must be positive");
    }
    let robust_t_end = r
        .f64_field(rb, "t_end", "verify.robust", t_end)
        .unwrap_or(f64::NAN);
    let robust_delays = match rb.get("delays") {
        Some(Value::Table(t)) => r.delays(t, "verify.robust.delays"),
        Some(_) => {
            r.err("verify.robust.delays", "expected a table");
            None
        }
        None => delays.clone(),
    };
    if let (Some(rd), Some(s)) = (&robust_delays, step) {
        if !rd.is_empty() && s > rd.h_floor() / 4.0 + 1e-15 {
            r.err("verify.robust.delays.h_floor", "must be at least 4 * horizon.step");
        }
    }
    let l_r = match (rb.get("l_r"), &robust_delays) {
        (Some(v), Some(rd)) => r.scalar_terms(v, "verify.robust.l_r", rd.len() + 1),
        (None, Some(rd)) => Some(Majorant::zero(rd.len() + 1)),
        _ => None,
    };

    if !r.errors.is_empty() {
        return Err(r.errors);
    }
    let n = n.expect("checked");
    let config = ScenarioConfig {
        name,
        dimension: n,
        t0: t0.expect("checked"),
        t_end: t_end.expect("checked"),
        step: step.expect("checked"),
        output_stride: output_stride.expect("checked"),
        sup_grid_step: sup_grid_step.expect("checked"),
        a: a_matrix.expect("checked"),
        linear,
        terms,
        delays: delays.expect("checked"),
        f0: f0.expect("checked"),
        envelope: envelope.expect("checked"),
        history: history.expect("checked"),
        zeta_bar,
        classifier,
        region,
        sweep,
        tol_abs,
        tol_rel,
        verify: VerifyConfig {
            seed,
            pairs,
            history_pairs,
            history_max,
            samples,
            radius,
            suite_t_end,
            robust: RobustConfig {
                epsilon,
                l_r: l_r.expect("checked"),
                delays: robust_delays.expect("checked"),
                t_end: robust_t_end,
            },
        },
    };
    if let Err(e) = MonomialVectorField::new(n, config.delays.len() + 1, config.linear.clone(), config.terms.clone()) {
        return Err(vec![ConfigError {
            path: "system".into(),
            message: e.to_string(),
        }]);
    }
    Ok(ValidatedConfig { config, warnings })
}
