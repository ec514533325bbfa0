use serde::Serialize;

use pulseforge::pulsegen::{generate_dataset, FiberProxyParams, MANIFEST_FILE};

use crate::output::{ensure_dir, write_json};
use crate::{CliError, GenerateArgs};

pub const CONFIG_FILE: &str = "generate.config.json";

#[derive(Serialize)]
struct GenerateConfig {
    command: &'static str,
    pairs: usize,
    seed: u64,
    fiber: FiberProxyParams,
}

pub fn run(a: &GenerateArgs) -> Result<(), CliError> {
    if a.pairs == 0 {
        return Err(CliError::Usage("--pairs must be at least 1".into()));
    }
    let fiber = FiberProxyParams { beta2: a.beta2, gamma_nl: a.gamma_nl, length: a.fiber_length, n_steps: a.fiber_steps };
    fiber.validate()?;
    if a.out.join(MANIFEST_FILE).exists() {
        return Err(CliError::Io(format!("{} already holds a dataset; choose a fresh directory", a.out.display())));
    }
    ensure_dir(&a.out)?;
    write_json(&a.out.join(CONFIG_FILE), &GenerateConfig { command: "generate", pairs: a.pairs, seed: a.seed, fiber })?;

    let manifest = generate_dataset(a.pairs, a.seed, &fiber, &a.out)?;
    let resampled = manifest.records.iter().filter(|r| r.attempt > 0).count();
    println!(
        "wrote {} profiles ({} pairs, seed {}) to {}; {} of them from resampled specs",
        manifest.count,
        manifest.pairs,
        manifest.master_seed,
        a.out.display(),
        resampled
    );
    Ok(())
}
