use proptest::prelude::*;

use scalarbound::commands::{cmd_simulate, output_grid, Status};
use scalarbound::config::validate_config;

fn scalar_config(lambda: f64, b: f64, h: f64, hist: f64, t_end: f64, stride: f64, f0: f64) -> String {
    format!(
        r#"
dimension = 2

[horizon]
t_end = {t_end:?}
step = 0.01
output_stride = {stride:?}

[system]
a = [["{lambda:?} + 0.2*sin(3*t)", "0.5"], ["-0.5", "{lambda:?}"]]

[[system.linear]]
slot = 1
scale = 0.2
matrix = [["0", "1"], ["1", "0"]]

[[system.terms]]
component = 2
coefficient = "{b:?}*cos(t)"
factors = [{{ slot = 1, component = 1, exponent = 2 }}, {{ slot = 0, component = 2, exponent = 1 }}]

[delays]
channels = ["{h:?} + 0.05*sin(t)"]
h_bar = {hb:?}
h_floor = {hf:?}

[forcing]
f0 = {f0:?}
envelope = ["sin(2*t)", "0"]

[history]
constant = [{hist:?}, 0.0]
"#,
        hb = h + 0.05,
        hf = h - 0.05,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn row_count_matches_stride(t0 in -2.0f64..2.0, len in 0.1f64..30.0, stride in 0.01f64..3.0) {
        let g = output_grid(t0, t0 + len, stride);
        prop_assert_eq!(g.len(), 1 + ((len / stride) + 1e-9).floor() as usize);
        prop_assert!(*g.last().unwrap() <= t0 + len + 1e-9);
    }

    #[test]
    fn echo_round_trips(
        lambda in -4.0f64..-1.0,
        b in 0.0f64..0.5,
        h in 0.2f64..1.0,
        hist in 0.0f64..1.0,
        t_end in 1.0f64..5.0,
        f0 in 0.0f64..1.0,
    ) {
        let v = validate_config(&scalar_config(lambda, b, h, hist, t_end, 0.1, f0)).unwrap();
        let again = validate_config(&v.config.to_toml()).unwrap();
        prop_assert_eq!(again.config, v.config);
    }

    // The comparison chain holds for every contracting instance, forced or not.
    #[test]
    fn simulate_chain_holds(
        lambda in -4.0f64..-2.0,
        b in 0.0f64..0.3,
        h in 0.2f64..1.0,
        hist in 0.0f64..0.8,
        f0 in 0.0f64..1.0,
    ) {
        let v = validate_config(&scalar_config(lambda, b, h, hist, 4.0, 0.05, f0)).unwrap();
        let art = cmd_simulate(&v);
        prop_assert_eq!(art.status, Status::Pass, "{}", art.report.render());
        let csv = art.file("trajectory.csv").unwrap();
        prop_assert_eq!(csv.lines().count(), 1 + 81);
        for row in csv.lines().skip(1) {
            let f: Vec<f64> = row.split(',').map(|s| s.parse().unwrap()).collect();
            prop_assert!(f[1] <= f[2] * (1.0 + 1e-3) + 1e-6);
            prop_assert!(f[2] <= f[3] * (1.0 + 1e-3) + 1e-6);
        }
    }
}
