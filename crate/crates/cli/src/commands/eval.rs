//! `vapo eval`: metric report, energy histograms, OOD score, and the
//! nearest-neighbor memorization audit for a trained checkpoint.

use crate::{data, manifest::Manifest, DataOpts, OdeOpts};
use anyhow::{Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::process::ExitCode;
use vapo_core::eval::{self, Histogram};
use vapo_core::homotopy::HomotopyParams;
use vapo_core::{checkpoint, ode, VapoError};

pub const MMD_BANDWIDTHS: [f64; 4] = [0.25, 0.5, 1.0, 2.0];
const MMD_POINTS: usize = 2_000;
const MMD_PERMS: usize = 100;
const MEMORIZATION_RADIUS: f64 = 1e-3;

pub struct EvalArgs<'a> {
    pub ckpt: &'a Path,
    pub data: &'a DataOpts,
    pub out: &'a Path,
    pub n_samples: usize,
    pub seed: u64,
    pub kld_bins: usize,
    pub kld_range: f64,
    pub energy_bins: usize,
    pub mode_radius: f64,
    pub lambda: f64,
    pub eps_sharp: f64,
    pub omega: f64,
    pub sigma: f64,
    pub ode: &'a OdeOpts,
}

pub fn run(args: EvalArgs) -> Result<ExitCode> {
    let model =
        checkpoint::load(args.ckpt).with_context(|| format!("loading {}", args.ckpt.display()))?;
    let dataset = data::load(args.data)?;
    if dataset.dim() != model.input_dim() {
        return Err(VapoError::DimMismatch {
            expected: model.input_dim(),
            got: dataset.dim(),
        }
        .into());
    }
    let cfg = args.ode.to_config()?;
    let params = HomotopyParams::new(args.omega, args.sigma, args.eps_sharp, dataset.dim())?;
    std::fs::create_dir_all(args.out)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);

    // 80/20 train / held-out split of the reference data.
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let cut = (dataset.len() * 4) / 5;
    let train = dataset.select(&order[..cut], "train")?;
    let heldout = dataset.select(&order[cut..], "heldout")?;

    println!("sampling {} points from the flow...", args.n_samples);
    let samples = ode::sample(&model, args.n_samples, &params, &cfg, &mut rng)?;
    let samples_path = args.out.join("samples.csv");
    vapo_core::datasets::write_csv(&samples_path, dataset.dim(), samples.iter())?;

    // MMD against a data subsample, with a permutation null.
    let n_mmd = MMD_POINTS.min(samples.len()).min(train.len());
    let sample_slice: Vec<Vec<f64>> = samples[..n_mmd].to_vec();
    let data_slice: Vec<Vec<f64>> = (0..n_mmd).map(|i| train.row(i).to_vec()).collect();
    let mmd_raw = eval::mmd_rbf(&sample_slice, &data_slice, &MMD_BANDWIDTHS)?;
    let mut null =
        eval::mmd_permutation_null(&sample_slice, &data_slice, &MMD_BANDWIDTHS, MMD_PERMS, &mut rng)?;
    null.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let null_p95 = null[((null.len() as f64 * 0.95).ceil() as usize - 1).min(null.len() - 1)];

    // 2-D histogram KLD over a fixed square range.
    let range = (
        (-args.kld_range, args.kld_range),
        (-args.kld_range, args.kld_range),
    );
    let grid_kld = if dataset.dim() == 2 {
        Some(eval::grid_kld(&samples, &dataset.to_vecs(), args.kld_bins, range)?)
    } else {
        None
    };

    // Mode coverage (ring toys only: centers are known).
    let mode_coverage = args
        .data
        .source
        .toy
        .as_deref()
        .and_then(|toy| data::ring_mode_centers(toy, &dataset))
        .map(|centers| eval::mode_coverage(&samples, &centers, args.mode_radius))
        .transpose()?;

    // Energy histograms over shared edges: train vs held-out, plus samples.
    let (hist_train, hist_heldout) =
        eval::energy_histogram_pair(&model, &train.to_vecs(), &heldout.to_vecs(), args.energy_bins)?;
    let energy_overlap = hist_train.overlap(&hist_heldout)?;
    let hist_samples = eval::energy_histogram(&model, &samples, args.energy_bins)?;
    write_histogram(&args.out.join("energy_hist_train.csv"), &hist_train)?;
    write_histogram(&args.out.join("energy_hist_heldout.csv"), &hist_heldout)?;
    write_histogram(&args.out.join("energy_hist_samples.csv"), &hist_samples)?;

    // Energy-based OOD: held-out data vs uniform noise on [-4, 4]^D.
    let noise: Vec<Vec<f64>> = (0..heldout.len())
        .map(|_| (0..dataset.dim()).map(|_| rng.gen_range(-4.0..4.0)).collect())
        .collect();
    let ood_auroc = eval::ood_auroc(&model, &heldout.to_vecs(), &noise)?;

    // Nearest-neighbor audit against the train split.
    let nn = eval::nearest_neighbors(&samples, &train.to_vecs(), 1)?;
    let mem_fraction =
        nn.iter().filter(|v| v[0].1 < MEMORIZATION_RADIUS).count() as f64 / nn.len().max(1) as f64;
    {
        let mut w = BufWriter::new(File::create(args.out.join("nn_audit.csv"))?);
        writeln!(w, "sample,nn_index,distance")?;
        for (i, v) in nn.iter().enumerate() {
            writeln!(w, "{},{},{:.8e}", i, v[0].0, v[0].1)?;
        }
        w.flush()?;
    }

    let report = json!({
        "mmd_raw": mmd_raw,
        "mmd": mmd_raw.max(0.0),
        "mmd_null_p95": null_p95,
        "mmd_points": n_mmd,
        "grid_kld": grid_kld,
        "mode_coverage": mode_coverage,
        "n_samples": samples.len(),
        "energy_overlap_train_heldout": energy_overlap,
        "ood_auroc": ood_auroc,
        "memorization_fraction": mem_fraction,
        "memorization_radius": MEMORIZATION_RADIUS,
        "config": {
            "ckpt": args.ckpt.display().to_string(),
            "dataset": dataset.name,
            "dataset_points": dataset.len(),
            "lambda": args.lambda,
            "eps_sharp": args.eps_sharp,
            "omega": args.omega,
            "sigma": args.sigma,
            "t_end": cfg.t_end,
            "seed": args.seed,
            "kld_bins": args.kld_bins,
            "kld_range": args.kld_range,
            "energy_bins": args.energy_bins,
            "mode_radius": args.mode_radius,
            "mmd_bandwidths": MMD_BANDWIDTHS.to_vec(),
            "mmd_permutations": MMD_PERMS,
        },
    });
    let report_path = args.out.join("report.json");
    std::fs::write(&report_path, serde_json::to_string_pretty(&report)? + "\n")?;
    println!(
        "mmd {:.5} (null p95 {:.5}), kld {:?}, coverage {:?}, overlap {:.3}, auroc {:.3}",
        mmd_raw, null_p95, grid_kld, mode_coverage, energy_overlap, ood_auroc
    );

    let mut m = Manifest::new("eval", args.seed);
    m.setting("ckpt", args.ckpt.display().to_string())
        .setting("dataset", dataset.name.clone())
        .setting("n_samples", args.n_samples)
        .setting("lambda", args.lambda)
        .setting("eps_sharp", args.eps_sharp)
        .setting("omega", args.omega)
        .setting("sigma", args.sigma)
        .setting("t_end", cfg.t_end);
    for name in [
        "report.json",
        "samples.csv",
        "energy_hist_train.csv",
        "energy_hist_heldout.csv",
        "energy_hist_samples.csv",
        "nn_audit.csv",
    ] {
        m.artifact(&args.out.join(name))?;
    }
    m.write(&args.out.join("manifest.json"))?;
    Ok(ExitCode::SUCCESS)
}

fn write_histogram(path: &Path, h: &Histogram) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "bin_left,bin_right,count")?;
    for (i, &c) in h.counts.iter().enumerate() {
        writeln!(w, "{:.8e},{:.8e},{}", h.edges[i], h.edges[i + 1], c)?;
    }
    w.flush()?;
    Ok(())
}
