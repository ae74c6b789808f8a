//! Drive an experiment from a TOML spec and write its artifacts.

use pointwalk::experiment::{run, ExperimentSpec};

const SPEC: &str = r#"
command = "recurrence2d"
seed = 3

[environment]
dimension = 2
kind = "bernoulli"
density = 0.5

[walk]
steps = 0
replicas = 1

[params]
n_max = 100
"#;

fn main() -> pointwalk::Result<()> {
    let spec = ExperimentSpec::from_toml(SPEC, None)?;
    let outcome = run(&spec)?;
    for c in &outcome.checks {
        println!("{} {} = {:.4}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.value);
    }
    let dir = std::env::temp_dir().join("pointwalk-example");
    for path in outcome.write_to(&dir)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}
