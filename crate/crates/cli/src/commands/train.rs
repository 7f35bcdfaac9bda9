//! `vapo train`: dataset in, checkpoints + log + manifest out.

use crate::{data, manifest::Manifest, DataOpts};
use anyhow::{bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::Path;
use std::process::ExitCode;
use vapo_core::potential::{Activation, PotentialModel};
use vapo_core::trainer::{self, TrainConfig};

pub fn run(
    data_opts: &DataOpts,
    config: Option<&Path>,
    out: &Path,
    hidden: &str,
    activation: &str,
) -> Result<ExitCode> {
    let cfg = match config {
        Some(path) => TrainConfig::from_file(path)
            .with_context(|| format!("loading config {}", path.display()))?,
        None => TrainConfig::default(),
    };
    let activation = Activation::parse(activation)?;
    let hidden_sizes = parse_hidden(hidden)?;

    // Refuse to overwrite a run directory trained under a different seed.
    let manifest_path = out.join("manifest.json");
    if manifest_path.exists() {
        let prior_seed = crate::manifest::read_seed(&manifest_path)?;
        if prior_seed != cfg.seed {
            bail!(
                "output dir {} holds a run with seed {prior_seed}, refusing to resume with seed {}",
                out.display(),
                cfg.seed
            );
        }
    }

    let dataset = data::load(data_opts)?;
    let mut layer_sizes = vec![dataset.dim()];
    layer_sizes.extend(&hidden_sizes);
    layer_sizes.push(1);
    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let model = PotentialModel::init(layer_sizes.clone(), activation, &mut init_rng)?;

    std::fs::create_dir_all(out)?;
    println!(
        "training on {} ({} points, dim {}), {} steps, batch {}",
        dataset.name,
        dataset.len(),
        dataset.dim(),
        cfg.steps,
        cfg.batch_size
    );
    let run = trainer::train_to_dir(&dataset, model, &cfg, out)?;
    if let Some(last) = run.records.last() {
        println!(
            "done: step {} total {:.6} (cov {:.6} gradsq {:.6} l2 {:.6})",
            last.step, last.loss.total, last.loss.cov_term, last.loss.gradsq_term, last.loss.l2_term
        );
    }

    let mut m = Manifest::new("train", cfg.seed);
    m.setting("batch_size", cfg.batch_size)
        .setting("steps", cfg.steps)
        .setting("lr", cfg.lr)
        .setting("optimizer", cfg.optimizer.name())
        .setting("lambda", cfg.lambda)
        .setting("eps_sharp", cfg.eps_sharp)
        .setting("omega", cfg.omega)
        .setting("sigma", cfg.sigma)
        .setting("checkpoint_every", cfg.checkpoint_every)
        .setting("grad_clip", cfg.grad_clip.map_or("none".to_string(), |c| c.to_string()))
        .setting("hidden", hidden_sizes.iter().map(|h| h.to_string()).collect::<Vec<_>>().join(","))
        .setting("activation", activation.name())
        .setting("dataset", dataset.name.clone())
        .setting("dataset_points", dataset.len())
        .setting("dataset_dim", dataset.dim())
        .setting("data_seed", data_opts.data_seed)
        .setting("standardized", !data_opts.no_standardize);
    if let Some(tf) = &dataset.standardization {
        m.setting("standardize_mean", format!("{:?}", tf.mean))
            .setting("standardize_scale", format!("{:?}", tf.scale));
    }
    for ckpt in &run.checkpoints {
        m.artifact(ckpt)?;
    }
    m.artifact_unhashed(&out.join("train_log.csv"), "contains wall-clock timings");
    m.write(&manifest_path)?;
    Ok(ExitCode::SUCCESS)
}

fn parse_hidden(spec: &str) -> Result<Vec<usize>> {
    let sizes: Result<Vec<usize>, _> = spec
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect();
    let sizes = sizes.with_context(|| format!("bad --hidden '{spec}'"))?;
    if sizes.is_empty() || sizes.iter().any(|&s| s == 0) {
        bail!("--hidden needs at least one positive width");
    }
    Ok(sizes)
}
