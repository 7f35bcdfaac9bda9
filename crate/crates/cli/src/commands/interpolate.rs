//! `vapo interpolate`: integrate spherical interpolations between pairs of
//! latent prior draws.

use crate::{manifest, manifest::Manifest, OdeOpts};
use anyhow::{Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::process::ExitCode;
use vapo_core::homotopy::HomotopyParams;
use vapo_core::{checkpoint, ode};

pub fn run(
    ckpt: &Path,
    pairs: usize,
    points: usize,
    out: &Path,
    seed: u64,
    omega: f64,
    ode_opts: &OdeOpts,
) -> Result<ExitCode> {
    let model = checkpoint::load(ckpt).with_context(|| format!("loading {}", ckpt.display()))?;
    let cfg = ode_opts.to_config()?;
    let params = HomotopyParams::new(omega, 0.01, 1e-4, model.input_dim())?;

    // Latent endpoints come off the same stream as `sample`, so pair k uses
    // the draws a plain sample run would produce at rows 2k and 2k+1.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let latents = ode::draw_prior(2 * pairs, &params, &mut rng);

    let mut w = BufWriter::new(File::create(out)?);
    let header: Vec<String> = (0..model.input_dim()).map(|d| format!("x{d}")).collect();
    writeln!(w, "pair,step,{}", header.join(","))?;
    for k in 0..pairs {
        let path = ode::interpolate(&model, &latents[2 * k], &latents[2 * k + 1], points, &cfg)?;
        for (j, p) in path.iter().enumerate() {
            let cells: Vec<String> = p.iter().map(|v| format!("{v:.8e}")).collect();
            writeln!(w, "{k},{j},{}", cells.join(","))?;
        }
    }
    w.flush()?;
    println!("wrote {} x {} interpolation grid to {}", pairs, points, out.display());

    let mut m = Manifest::new("interpolate", seed);
    m.setting("ckpt", ckpt.display().to_string())
        .setting("pairs", pairs)
        .setting("points", points)
        .setting("omega", omega)
        .setting("t_end", cfg.t_end)
        .setting("method", cfg.method.name());
    m.artifact(out)?;
    m.write(&manifest::sibling(out))?;
    Ok(ExitCode::SUCCESS)
}
