//! Dataset loading shared by train and eval.

use crate::DataOpts;
use anyhow::{bail, Context, Result};
use vapo_core::datasets::{self, Dataset};

/// Parse a toy name: ring8 (or ring<K>), moons, checkerboard.
pub fn make_toy(name: &str, n: usize, seed: u64) -> Result<Dataset> {
    if let Some(modes) = name.strip_prefix("ring") {
        let modes: usize = modes.parse().context("ring<K> needs an integer mode count")?;
        return Ok(datasets::make_ring(n, modes, 2.0, 0.1, seed)?);
    }
    match name {
        "moons" => Ok(datasets::make_moons(n, 0.05, seed)?),
        "checkerboard" => Ok(datasets::make_checkerboard(n, seed)?),
        other => bail!("unknown toy dataset '{other}' (ring<K>, moons, checkerboard)"),
    }
}

/// Load from file or construct a toy set, standardizing unless disabled.
pub fn load(opts: &DataOpts) -> Result<Dataset> {
    let raw = if let Some(path) = &opts.source.data {
        match path.extension().and_then(|e| e.to_str()) {
            Some("vapd") => datasets::load_matrix(path)?,
            Some("csv") => datasets::load_csv(path)?,
            _ => bail!(
                "cannot infer dataset format of '{}' (expected .vapd or .csv)",
                path.display()
            ),
        }
    } else if let Some(toy) = &opts.source.toy {
        make_toy(toy, opts.toy_n, opts.data_seed)?
    } else {
        bail!("either --data or --toy is required");
    };
    if opts.no_standardize {
        Ok(raw)
    } else {
        Ok(datasets::standardize(&raw)?)
    }
}

/// Ring mode centers in the dataset's coordinate system.
pub fn ring_mode_centers(toy: &str, dataset: &Dataset) -> Option<Vec<Vec<f64>>> {
    let modes: usize = toy.strip_prefix("ring")?.parse().ok()?;
    let raw = datasets::ring_centers(modes, 2.0);
    Some(match &dataset.standardization {
        Some(tf) => raw.iter().map(|c| tf.apply(c)).collect(),
        None => raw,
    })
}
