//! `vapo sample`: prior draws integrated through a trained flow.

use crate::{manifest, manifest::Manifest, OdeOpts};
use anyhow::{bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::Path;
use std::process::ExitCode;
use vapo_core::datasets::{self, Dataset};
use vapo_core::homotopy::HomotopyParams;
use vapo_core::{checkpoint, ode};

pub fn run(
    ckpt: &Path,
    n: usize,
    out: &Path,
    seed: u64,
    omega: f64,
    ode_opts: &OdeOpts,
) -> Result<ExitCode> {
    let model = checkpoint::load(ckpt).with_context(|| format!("loading {}", ckpt.display()))?;
    let cfg = ode_opts.to_config()?;
    let params = HomotopyParams::new(omega, 0.01, 1e-4, model.input_dim())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = ode::sample(&model, n, &params, &cfg, &mut rng)?;

    match out.extension().and_then(|e| e.to_str()) {
        Some("csv") => {
            datasets::write_csv(out, model.input_dim(), samples.iter())?;
        }
        Some("vapd") => {
            let rows: Vec<f64> = samples.iter().flatten().copied().collect();
            let ds = Dataset::from_rows(model.input_dim(), rows, "samples")?;
            datasets::save_matrix(&ds, out)?;
        }
        _ => bail!(
            "cannot infer output format of '{}' (expected .csv or .vapd)",
            out.display()
        ),
    }
    println!("wrote {} samples to {}", samples.len(), out.display());

    let mut m = Manifest::new("sample", seed);
    m.setting("ckpt", ckpt.display().to_string())
        .setting("n", n)
        .setting("omega", omega)
        .setting("t_end", cfg.t_end)
        .setting("method", cfg.method.name())
        .setting("rtol", cfg.rtol)
        .setting("atol", cfg.atol)
        .setting("max_steps", cfg.max_steps)
        .setting("fixed_step", cfg.fixed_step);
    m.artifact(out)?;
    m.write(&manifest::sibling(out))?;
    Ok(ExitCode::SUCCESS)
}
