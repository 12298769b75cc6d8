// A JSON-configured experiment: parse, run replications, write the report
// and a per-round trace of the first replication.

use robust_auction::config::parse_config;
use robust_auction::simulator::run_experiment;

const CONFIG: &str = r#"{
    "mechanism": {"kind": "threshold", "epsilon": 0.5, "rho": "1/3"},
    "agent": {"kind": "forward_looking", "k_schedule": {"constant": 2}},
    "distribution": {"kind": "uniform", "B": 1, "tick": 0.25},
    "T": 200,
    "reps": 8
}"#;

pub fn run_example() -> anyhow::Result<()> {
    let dir = std::env::temp_dir().join(format!("auction-lab-example-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let mut config = parse_config(CONFIG)?;
    config.trace = Some(dir.join("trace.csv"));
    let exp = config.build()?;

    let report = run_experiment(&exp, 42)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    let trace = std::fs::read_to_string(dir.join("trace.csv"))?;
    for line in trace.lines().take(4) {
        println!("{line}");
    }
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
