//! Run a JSON experiment config in-process and list the artifacts it would
//! write.

use euler_stability::harness::{run_config, Command, ExperimentConfig};

fn main() -> euler_stability::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/configs/affine-certified.json").into());
    let mut config = ExperimentConfig::from_path(path.as_ref())?;
    config.perturbations.samples = 4;
    config.simulation.turnovers = 0.5;
    println!("config hash {}", config.hash());
    let artifacts = run_config(&config, Command::Certify)?;
    for (name, bytes) in artifacts.files() {
        println!("{name:24} {:6} bytes", bytes.len());
    }
    Ok(())
}
