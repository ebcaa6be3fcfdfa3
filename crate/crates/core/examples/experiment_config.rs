//! An experiment described in TOML, run through the harness and written to
//! a directory as JSON and CSV.
//! Usage: `experiment_config [out-dir]`.
use mlmc_composite::harness::{run_experiment, write_outputs, ExperimentConfig};

const CONFIG: &str = r#"
model = "synthetic"
estimator = "mlmc"
tolerances = [0.02, 0.01]
seed = 9

[synthetic]
kind = "levels"
q_inf = 2.0
s0 = 0.5
b = 1.0
alpha = 1.0
c = 0.5
beta = 2.0
m0 = 16
m = 4
max_level = 8
"#;

fn main() {
    let out = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "out/experiment_config".into());
    let cfg = ExperimentConfig::from_toml(CONFIG).expect("valid config");
    let report = run_experiment(&cfg).expect("run");
    for e in &report.entries {
        println!(
            "e = {:.0e}: estimate {:.5}, L = {}, work {:.3e}, MC work {:.3e} (saving {:.1}, extrapolated {})",
            e.tolerance, e.estimate, e.finest_level, e.total_work, e.mc.work, e.mc.saving_work, e.mc.extrapolated
        );
    }
    write_outputs(&report, out.as_ref()).expect("write");
    println!("wrote {out}/report.json");
}
