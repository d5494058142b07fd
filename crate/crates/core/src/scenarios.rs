//! Built-in reference scenarios.
//!
//! The planar cases use `ẋ = A0(t)x + A1(t)x(t) + ρ A1(t)x(t - h) + b [0, x2(t - h)^3] + F0 e(t)`
//! with `A0 = diag(λ(t), λ(t))`, `λ = λ0 + λ±(t)`, `ω(t) = 1 + 0.1(sin t + sin πt)` and
//! `A1 = [[0, 1], [-ω, -0.5]]`. The values of ρ, b, h and F0 are defaults picked
//! inside the stability range of the autonomous comparison equation; they are
//! not reproduced from published figures.

use std::fmt;

use thiserror::Error;

use crate::config::{validate_config, ScenarioConfig};

/// Where an expected value comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Basis {
    /// Taken directly from the model statement.
    Stated,
    /// Computed by an independent method, named here.
    Derived { oracle: &'static str },
    /// Holds by construction.
    Identity,
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Basis::Stated => f.write_str("stated"),
            Basis::Derived { oracle } => write!(f, "derived ({oracle})"),
            Basis::Identity => f.write_str("identity"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Check {
    /// `quantity(at) = value` within `tol`.
    Value { at: f64, value: f64, tol: f64 },
    /// A qualitative property, checked by the named test.
    Holds,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expectation {
    pub quantity: &'static str,
    pub check: Check,
    pub basis: Basis,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceScenario {
    pub name: &'static str,
    pub summary: &'static str,
    pub config: ScenarioConfig,
    pub expectations: Vec<Expectation>,
    /// Source text, as accepted by [`validate_config`].
    pub text: String,
}

impl ReferenceScenario {
    pub fn values(&self, quantity: &str) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        let q = quantity.to_string();
        self.expectations.iter().filter(move |e| e.quantity == q).filter_map(|e| match e.check {
            Check::Value { at, value, tol } => Some((at, value, tol)),
            Check::Holds => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown scenario '{0}'")]
pub struct UnknownScenario(pub String);

const NAMES: [&str; 9] = [
    "sec5_case_a",
    "sec5_case_a_unforced",
    "sec5_case_b",
    "sec5_case_b_unforced",
    "oracle_delay_linear",
    "oracle_diag",
    "oracle_rotation",
    "oracle_cubic",
    "appendix_b",
];

pub fn list_scenarios() -> &'static [&'static str] {
    &NAMES
}

/// Defaults shared by the planar cases.
pub const SEC5_RHO: f64 = 0.1;
pub const SEC5_B: f64 = 0.1;
pub const SEC5_H: f64 = 0.5;
pub const SEC5_F0: f64 = 0.5;

fn sec5_text(name: &str, lambda: &str, f0: f64) -> String {
    format!(
        r#"name = "{name}"
dimension = 2

[horizon]
t0 = 0.0
t_end = 20.0
step = 0.01
output_stride = 0.1
sup_grid_step = 0.001

[system]
a = [["{lambda}", "0"], ["0", "{lambda}"]]

[[system.linear]]
slot = 0
scale = 1.0
matrix = [["0", "1"], ["-(1 + 0.1*(sin(t) + sin(pi*t)))", "-0.5"]]

[[system.linear]]
slot = 1
scale = {SEC5_RHO:?}
matrix = [["0", "1"], ["-(1 + 0.1*(sin(t) + sin(pi*t)))", "-0.5"]]

[[system.terms]]
component = 2
coefficient = "{SEC5_B:?}"
factors = [{{ slot = 1, component = 2, exponent = 3 }}]

[delays]
channels = ["{SEC5_H:?}"]
h_bar = {SEC5_H:?}
h_floor = {SEC5_H:?}

[forcing]
f0 = {f0:?}
envelope = ["0", "sin(10*t)"]

[history]
constant = [0.5, 0.0]

[linearization]
zeta_bar = 1.0

[classifier]
horizon = 60.0

[region]
cap = 10.0

[sweep]
angle_step = "pi/100"
cap = 10.0
step = 0.01

[verify]
seed = 7
"#
    )
}

const DELAY_LINEAR: &str = r#"name = "oracle_delay_linear"
dimension = 1

[horizon]
t_end = 3.0
step = 0.015625
output_stride = 0.125

[system]
a = [["0"]]

[[system.linear]]
slot = 1
matrix = [["-1"]]

[delays]
channels = ["1"]
h_bar = 1.0
h_floor = 1.0

[history]
constant = [1.0]
"#;

const DIAG: &str = r#"name = "oracle_diag"
dimension = 2

[horizon]
t_end = 3.0
step = 0.001
output_stride = 0.01

[system]
a = [["-1", "0"], ["0", "-2"]]

[history]
constant = [0.0, 1.0]
"#;

const ROTATION: &str = r#"name = "oracle_rotation"
dimension = 2

[horizon]
t_end = 3.0
step = 0.001
output_stride = 0.01

[system]
a = [["0", "1"], ["-1", "0"]]

[history]
constant = [1.0, 0.0]
"#;

const CUBIC: &str = r#"name = "oracle_cubic"
dimension = 1

[horizon]
t_end = 20.0
step = 0.01
output_stride = 0.1

[system]
a = [["-1"]]

[[system.terms]]
component = 1
coefficient = "1"
factors = [{ slot = 0, component = 1, exponent = 3 }]

[history]
constant = [0.5]

[region]
cap = 10.0
tol_rel = 0.001
"#;

const APPENDIX_B: &str = r#"name = "appendix_b"
dimension = 2

[horizon]
t_end = 5.0
step = 0.01
output_stride = 0.1

[system]
a = [["-1", "0"], ["0", "-1"]]

[[system.terms]]
component = 1
coefficient = "1"
factors = [
  { slot = 0, component = 1, exponent = 3 },
  { slot = 1, component = 2, exponent = 2 },
]

[[system.terms]]
component = 2
coefficient = "1"
factors = [{ slot = 2, component = 2, exponent = 3 }]

[delays]
channels = ["0.5", "1.0"]
h_bar = 1.0
h_floor = 0.5

[history]
constant = [0.2, 0.1]

[verify]
seed = 7
samples = 10000
radius = 2.0
"#;

fn derived(oracle: &'static str) -> Basis {
    Basis::Derived { oracle }
}

fn value(quantity: &'static str, at: f64, v: f64, tol: f64, basis: Basis) -> Expectation {
    Expectation {
        quantity,
        check: Check::Value { at, value: v, tol },
        basis,
    }
}

fn holds(quantity: &'static str, basis: Basis) -> Expectation {
    Expectation {
        quantity,
        check: Check::Holds,
        basis,
    }
}

fn sec5_expectations(lambda: fn(f64) -> f64) -> Vec<Expectation> {
    let mut out = Vec::new();
    for t in [0.0, 0.5, 1.3, 2.0, 3.0] {
        out.push(value("p", t, lambda(t), 1e-4, Basis::Stated));
        out.push(value("c", t, 1.0, 1e-4, Basis::Stated));
    }
    out.push(holds("norm_x <= y <= yhat", Basis::Stated));
    out.push(holds("r_autonomous <= r_nonautonomous <= min boundary radius", Basis::Stated));
    out
}

fn lambda_a(t: f64) -> f64 {
    -3.0 + 0.1 * (5.0 * t).sin()
}

fn lambda_b(t: f64) -> f64 {
    -3.0 + (-t).exp()
}

pub fn load_scenario(name: &str) -> Result<ReferenceScenario, UnknownScenario> {
    let (name, summary, text, expectations): (&'static str, &'static str, String, Vec<Expectation>) = match name {
        "sec5_case_a" => (
            "sec5_case_a",
            "planar delay system, λ = -3 + 0.1 sin 5t, forced",
            sec5_text("sec5_case_a", "-3 + 0.1*sin(5*t)", SEC5_F0),
            sec5_expectations(lambda_a),
        ),
        "sec5_case_a_unforced" => (
            "sec5_case_a_unforced",
            "planar delay system, λ = -3 + 0.1 sin 5t, unforced",
            sec5_text("sec5_case_a_unforced", "-3 + 0.1*sin(5*t)", 0.0),
            sec5_expectations(lambda_a),
        ),
        "sec5_case_b" => (
            "sec5_case_b",
            "planar delay system, λ = -3 + exp(-t), forced",
            sec5_text("sec5_case_b", "-3 + exp(-t)", SEC5_F0),
            sec5_expectations(lambda_b),
        ),
        "sec5_case_b_unforced" => (
            "sec5_case_b_unforced",
            "planar delay system, λ = -3 + exp(-t), unforced",
            sec5_text("sec5_case_b_unforced", "-3 + exp(-t)", 0.0),
            sec5_expectations(lambda_b),
        ),
        "oracle_delay_linear" => {
            let steps = derived("method of steps");
            (
                "oracle_delay_linear",
                "ẏ = -y(t - 1), φ ≡ 1",
                DELAY_LINEAR.to_string(),
                vec![
                    value("y", 0.5, 0.5, 1e-12, steps),
                    value("y", 1.0, 0.0, 1e-8, steps),
                    value("y", 2.0, -0.5, 1e-8, steps),
                    value("y", 3.0, -1.0 / 6.0, 1e-8, steps),
                ],
            )
        }
        "oracle_diag" => {
            let closed = derived("diagonal closed form");
            let mut ex = Vec::new();
            for t in [0.5, 1.0, 2.0, 3.0] {
                ex.push(value("p", t, -1.0, 1e-4, closed));
                ex.push(value("c", t, f64::exp(t), 1e-6 * f64::exp(t), closed));
            }
            ex.push(value("norm_x", 1.0, f64::exp(-2.0), 1e-9, closed));
            ("oracle_diag", "ẋ = diag(-1, -2) x", DIAG.to_string(), ex)
        }
        "oracle_rotation" => {
            let closed = derived("rotation closed form");
            let mut ex = Vec::new();
            for t in [0.5, 1.0, 2.0, 3.0] {
                ex.push(value("p", t, 0.0, 1e-6, closed));
                ex.push(value("c", t, 1.0, 1e-6, closed));
                ex.push(value("norm_x", t, 1.0, 1e-9, Basis::Identity));
            }
            ("oracle_rotation", "ẋ = [[0, 1], [-1, 0]] x", ROTATION.to_string(), ex)
        }
        "oracle_cubic" => (
            "oracle_cubic",
            "ẏ = -y + y^3",
            CUBIC.to_string(),
            vec![value("stability_radius", 0.0, 1.0, 0.02, derived("phase line √(-a/b)"))],
        ),
        "appendix_b" => (
            "appendix_b",
            "f = [x1^3 x2(t - h1)^2, x2(t - h2)^3] with A = -I",
            APPENDIX_B.to_string(),
            vec![
                value("majorant_at_ones", 0.0, 2.0, 0.0, derived("term-by-term bound")),
                holds("dominance over the radius-2 ball", derived("seeded sampling")),
            ],
        ),
        other => return Err(UnknownScenario(other.to_string())),
    };
    let validated = validate_config(&text).unwrap_or_else(|errs| panic!("built-in scenario {name}: {errs:?}"));
    Ok(ReferenceScenario {
        name,
        summary,
        config: validated.config,
        expectations,
        text,
    })
}
