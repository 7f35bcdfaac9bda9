//! Synthetic toy datasets and dataset I/O.
//!
//! Points are stored row-major in a flat buffer. The binary matrix format is
//! magic "VAPD", version u32, N u64, D u32, row-major f64 little-endian, then
//! a CRC32 of everything after the magic. CSV import/export with header
//! `x0,...,x{D-1}` is also supported.

use crate::error::{Result, VapoError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"VAPD";
pub const FORMAT_VERSION: u32 = 1;

/// Per-dimension affine transform recorded by standardization:
/// stored = (raw - mean) / scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardization {
    pub fn apply(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    pub fn invert(&self, standardized: &[f64]) -> Vec<f64> {
        standardized
            .iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| v * s + m)
            .collect()
    }
}

/// A finite point set standing in for the data distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    points: Vec<f64>,
    pub name: String,
    pub standardization: Option<Standardization>,
}

impl Dataset {
    pub fn from_rows(dim: usize, rows: Vec<f64>, name: impl Into<String>) -> Result<Self> {
        if dim == 0 {
            return Err(VapoError::InvalidParam("dim = 0".into()));
        }
        if rows.is_empty() || rows.len() % dim != 0 {
            return Err(VapoError::InvalidParam(format!(
                "point buffer of length {} is not a positive multiple of dim {dim}",
                rows.len()
            )));
        }
        if rows.iter().any(|v| !v.is_finite()) {
            return Err(VapoError::NonFinite("dataset points".into()));
        }
        Ok(Dataset {
            dim,
            points: rows,
            name: name.into(),
            standardization: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim)
    }

    pub fn to_vecs(&self) -> Vec<Vec<f64>> {
        self.rows().map(|r| r.to_vec()).collect()
    }

    /// Subset by row indices (used for shuffled splits).
    pub fn select(&self, indices: &[usize], name: impl Into<String>) -> Result<Self> {
        let mut rows = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            if i >= self.len() {
                return Err(VapoError::InvalidParam(format!("row index {i} out of range")));
            }
            rows.extend_from_slice(self.row(i));
        }
        let mut d = Dataset::from_rows(self.dim, rows, name)?;
        d.standardization = self.standardization.clone();
        Ok(d)
    }
}

/// Mixture of `modes` equal-weight Gaussians spaced uniformly on a circle.
pub fn make_ring(n: usize, modes: usize, radius: f64, mode_std: f64, seed: u64) -> Result<Dataset> {
    if modes < 1 {
        return Err(VapoError::InvalidParam("modes < 1".into()));
    }
    if n < 1 {
        return Err(VapoError::InvalidParam("n < 1".into()));
    }
    let centers = ring_centers(modes, radius);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n * 2);
    for _ in 0..n {
        let c = &centers[rng.gen_range(0..modes)];
        rows.push(c[0] + mode_std * rng.sample::<f64, _>(StandardNormal));
        rows.push(c[1] + mode_std * rng.sample::<f64, _>(StandardNormal));
    }
    Dataset::from_rows(2, rows, format!("ring{modes}"))
}

/// Mode centers of the ring mixture, in construction (raw) coordinates.
pub fn ring_centers(modes: usize, radius: f64) -> Vec<Vec<f64>> {
    (0..modes)
        .map(|k| {
            let angle = 2.0 * std::f64::consts::PI * k as f64 / modes as f64;
            vec![radius * angle.cos(), radius * angle.sin()]
        })
        .collect()
}

/// Two interleaved half-circles with Gaussian jitter.
pub fn make_moons(n: usize, noise_std: f64, seed: u64) -> Result<Dataset> {
    if n < 1 {
        return Err(VapoError::InvalidParam("n < 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n * 2);
    for _ in 0..n {
        let theta = std::f64::consts::PI * rng.gen::<f64>();
        let (mut x, mut y) = if rng.gen::<bool>() {
            (theta.cos(), theta.sin())
        } else {
            (1.0 - theta.cos(), 0.5 - theta.sin())
        };
        x += noise_std * rng.sample::<f64, _>(StandardNormal);
        y += noise_std * rng.sample::<f64, _>(StandardNormal);
        rows.push(x);
        rows.push(y);
    }
    Dataset::from_rows(2, rows, "moons")
}

/// 4x4 checkerboard on [-2, 2]^2: points uniform within the 8 occupied cells.
pub fn make_checkerboard(n: usize, seed: u64) -> Result<Dataset> {
    if n < 1 {
        return Err(VapoError::InvalidParam("n < 1".into()));
    }
    let occupied: Vec<(usize, usize)> = (0..4)
        .flat_map(|i| (0..4).map(move |j| (i, j)))
        .filter(|(i, j)| (i + j) % 2 == 0)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n * 2);
    for _ in 0..n {
        let (i, j) = occupied[rng.gen_range(0..occupied.len())];
        rows.push(-2.0 + i as f64 + rng.gen::<f64>());
        rows.push(-2.0 + j as f64 + rng.gen::<f64>());
    }
    Dataset::from_rows(2, rows, "checkerboard")
}

/// Shift and scale every dimension to zero mean and unit variance, recording
/// the transform for inversion at sampling time.
pub fn standardize(dataset: &Dataset) -> Result<Dataset> {
    let n = dataset.len() as f64;
    let dim = dataset.dim();
    let mut mean = vec![0.0; dim];
    for row in dataset.rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut var = vec![0.0; dim];
    for row in dataset.rows() {
        for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
            let d = v - m;
            *s += d * d;
        }
    }
    let mut scale = Vec::with_capacity(dim);
    for (d, s) in var.iter().enumerate() {
        let sd = (s / n).sqrt();
        if sd <= 0.0 {
            return Err(VapoError::InvalidParam(format!(
                "dimension {d} has zero variance; cannot standardize"
            )));
        }
        scale.push(sd);
    }
    let tf = Standardization { mean, scale };
    let mut rows = Vec::with_capacity(dataset.points.len());
    for row in dataset.rows() {
        rows.extend(tf.apply(row));
    }
    let mut out = Dataset::from_rows(dim, rows, dataset.name.clone())?;
    out.standardization = Some(tf);
    Ok(out)
}

pub fn save_matrix(dataset: &Dataset, path: &Path) -> Result<()> {
    if dataset.is_empty() {
        return Err(VapoError::EmptyInput("dataset"));
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    let mut crc = crc32fast::Hasher::new();
    let mut put = |w: &mut BufWriter<File>, bytes: &[u8]| -> Result<()> {
        crc.update(bytes);
        w.write_all(bytes)?;
        Ok(())
    };
    put(&mut w, &FORMAT_VERSION.to_le_bytes())?;
    put(&mut w, &(dataset.len() as u64).to_le_bytes())?;
    put(&mut w, &(dataset.dim() as u32).to_le_bytes())?;
    for &v in &dataset.points {
        put(&mut w, &v.to_le_bytes())?;
    }
    w.write_all(&crc.finalize().to_le_bytes())?;
    w.flush()?;
    Ok(())
}

pub fn load_matrix(path: &Path) -> Result<Dataset> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic)?;
    if &magic != MAGIC {
        return Err(VapoError::Format(format!(
            "bad magic {magic:02x?}, not a matrix file"
        )));
    }
    let mut crc = crc32fast::Hasher::new();
    let mut buf4 = [0u8; 4];
    let mut buf8 = [0u8; 8];

    read_exact(&mut r, &mut buf4)?;
    crc.update(&buf4);
    let version = u32::from_le_bytes(buf4);
    if version != FORMAT_VERSION {
        return Err(VapoError::Format(format!("unsupported matrix version {version}")));
    }
    read_exact(&mut r, &mut buf8)?;
    crc.update(&buf8);
    let n = u64::from_le_bytes(buf8) as usize;
    read_exact(&mut r, &mut buf4)?;
    crc.update(&buf4);
    let dim = u32::from_le_bytes(buf4) as usize;
    if n == 0 || dim == 0 {
        return Err(VapoError::Format(format!("empty matrix ({n} x {dim})")));
    }
    let mut rows = Vec::with_capacity(n * dim);
    for _ in 0..n * dim {
        read_exact(&mut r, &mut buf8)?;
        crc.update(&buf8);
        let v = f64::from_le_bytes(buf8);
        if !v.is_finite() {
            return Err(VapoError::Format("non-finite matrix entry".into()));
        }
        rows.push(v);
    }
    read_exact(&mut r, &mut buf4)?;
    let stored = u32::from_le_bytes(buf4);
    let computed = crc.finalize();
    if stored != computed {
        return Err(VapoError::Format(format!(
            "CRC mismatch: stored {stored:08x}, computed {computed:08x}"
        )));
    }
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "matrix".into());
    Dataset::from_rows(dim, rows, stem)
}

/// Write rows as CSV with header `x0,...,x{D-1}` and 9-significant-digit
/// float formatting.
pub fn write_csv(path: &Path, dim: usize, rows: impl Iterator<Item = impl AsRef<[f64]>>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_csv_to(&mut w, dim, rows)?;
    w.flush()?;
    Ok(())
}

pub fn write_csv_to(
    w: &mut impl Write,
    dim: usize,
    rows: impl Iterator<Item = impl AsRef<[f64]>>,
) -> Result<()> {
    let header: Vec<String> = (0..dim).map(|d| format!("x{d}")).collect();
    writeln!(w, "{}", header.join(","))?;
    for row in rows {
        let row = row.as_ref();
        if row.len() != dim {
            return Err(VapoError::DimMismatch {
                expected: dim,
                got: row.len(),
            });
        }
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.8e}")).collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}

pub fn save_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    write_csv(path, dataset.dim(), dataset.rows())
}

pub fn load_csv(path: &Path) -> Result<Dataset> {
    let r = BufReader::new(File::open(path)?);
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| VapoError::Format("empty CSV".into()))??;
    let dim = header.split(',').count();
    let expect: Vec<String> = (0..dim).map(|d| format!("x{d}")).collect();
    if header.trim() != expect.join(",") {
        return Err(VapoError::Format(format!("unexpected CSV header '{header}'")));
    }
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut count = 0;
        for cell in line.split(',') {
            let v: f64 = cell.trim().parse().map_err(|_| {
                VapoError::Format(format!("bad float '{cell}' at line {}", lineno + 2))
            })?;
            rows.push(v);
            count += 1;
        }
        if count != dim {
            return Err(VapoError::Format(format!(
                "row {} has {count} cells, expected {dim}",
                lineno + 2
            )));
        }
    }
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "csv".into());
    Dataset::from_rows(dim, rows, stem)
}

fn read_exact(r: &mut impl Read, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            VapoError::Format("truncated file".into())
        } else {
            VapoError::Io(e)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmpdir(tag: &str) -> std::path::PathBuf {
        let d = std::env::temp_dir().join(format!("vapo-ds-{tag}"));
        std::fs::create_dir_all(&d).unwrap();
        d
    }

    #[test]
    fn ring_with_single_center_is_standard_normal() {
        let ds = make_ring(10_000, 1, 0.0, 1.0, 7).unwrap();
        for d in 0..2 {
            let mean = ds.rows().map(|r| r[d]).sum::<f64>() / ds.len() as f64;
            let var = ds.rows().map(|r| (r[d] - mean) * (r[d] - mean)).sum::<f64>()
                / ds.len() as f64;
            assert!(mean.abs() < 0.05, "mean {mean}");
            assert!((var - 1.0).abs() < 0.05, "var {var}");
        }
    }

    #[test]
    fn ring_points_stay_near_radius() {
        let ds = make_ring(10_000, 8, 2.0, 0.1, 11).unwrap();
        let outliers = ds
            .rows()
            .filter(|r| {
                let rad = (r[0] * r[0] + r[1] * r[1]).sqrt();
                (rad - 2.0).abs() > 6.0 * 0.1
            })
            .count();
        assert!(outliers <= 1, "{outliers} points beyond 6 sigma of the radius");
    }

    #[test]
    fn generators_are_seed_deterministic() {
        assert_eq!(make_ring(100, 8, 2.0, 0.1, 3).unwrap(), make_ring(100, 8, 2.0, 0.1, 3).unwrap());
        assert_eq!(make_moons(100, 0.05, 3).unwrap(), make_moons(100, 0.05, 3).unwrap());
        assert_eq!(make_checkerboard(100, 3).unwrap(), make_checkerboard(100, 3).unwrap());
        assert_ne!(make_ring(100, 8, 2.0, 0.1, 3).unwrap(), make_ring(100, 8, 2.0, 0.1, 4).unwrap());
    }

    #[test]
    fn moons_respect_construction_bounds() {
        let noise = 0.05;
        let ds = make_moons(20_000, noise, 5).unwrap();
        let m = 6.0 * noise;
        for r in ds.rows() {
            assert!(r[0] >= -1.5 - m && r[0] <= 2.5 + m);
            assert!(r[1] >= -1.0 - m && r[1] <= 1.5 + m);
        }
    }

    #[test]
    fn checkerboard_cells_are_balanced() {
        let n = 16_000;
        let ds = make_checkerboard(n, 9).unwrap();
        let mut counts = std::collections::HashMap::new();
        for r in ds.rows() {
            let i = ((r[0] + 2.0).floor() as i64).clamp(0, 3);
            let j = ((r[1] + 2.0).floor() as i64).clamp(0, 3);
            assert_eq!((i + j) % 2, 0, "point in an unoccupied cell: {r:?}");
            *counts.entry((i, j)).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 8);
        let bound = 4.0 * (n as f64).sqrt();
        for (&cell, &c) in &counts {
            let gap = (c as f64 - n as f64 / 8.0).abs();
            assert!(gap <= bound, "cell {cell:?} count {c} off by {gap}");
        }
    }

    #[test]
    fn single_point_dataset_works() {
        let ds = make_moons(1, 0.05, 1).unwrap();
        assert_eq!(ds.len(), 1);
    }

    #[test]
    fn matrix_roundtrip_is_bitwise() {
        let dir = tmpdir("roundtrip");
        let ds = make_ring(257, 8, 2.0, 0.1, 1).unwrap();
        let path = dir.join("ring.vapd");
        save_matrix(&ds, &path).unwrap();
        let back = load_matrix(&path).unwrap();
        assert_eq!(ds.dim(), back.dim());
        let a: Vec<u64> = ds.points.iter().map(|v| v.to_bits()).collect();
        let b: Vec<u64> = back.points.iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn matrix_load_rejects_bad_files() {
        let dir = tmpdir("badfiles");
        let ds = make_ring(64, 8, 2.0, 0.1, 2).unwrap();
        let path = dir.join("ok.vapd");
        save_matrix(&ds, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();

        let t = dir.join("trunc.vapd");
        std::fs::write(&t, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(load_matrix(&t), Err(VapoError::Format(msg)) if msg.contains("truncated")));

        let mut corrupt = bytes.clone();
        let mid = corrupt.len() / 2;
        corrupt[mid] ^= 1;
        let c = dir.join("crc.vapd");
        std::fs::write(&c, &corrupt).unwrap();
        assert!(load_matrix(&c).is_err());

        let mut wrong = bytes;
        wrong[1] = b'X';
        let m = dir.join("magic.vapd");
        std::fs::write(&m, &wrong).unwrap();
        assert!(matches!(load_matrix(&m), Err(VapoError::Format(msg)) if msg.contains("magic")));
    }

    #[test]
    fn empty_save_rejected() {
        let ds = Dataset::from_rows(2, vec![1.0, 2.0], "one").unwrap();
        // Constructing an empty dataset is itself rejected.
        assert!(Dataset::from_rows(2, vec![], "none").is_err());
        let dir = tmpdir("emptysave");
        save_matrix(&ds, &dir.join("one.vapd")).unwrap();
    }

    #[test]
    fn csv_roundtrip_within_print_precision() {
        let dir = tmpdir("csv");
        let ds = make_moons(50, 0.05, 4).unwrap();
        let path = dir.join("moons.csv");
        save_csv(&ds, &path).unwrap();
        let back = load_csv(&path).unwrap();
        assert_eq!(ds.len(), back.len());
        for (a, b) in ds.rows().zip(back.rows()) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() <= 1e-8 * x.abs().max(1.0));
            }
        }
    }

    #[test]
    fn standardize_centers_and_scales() {
        let ds = make_ring(5_000, 8, 2.0, 0.1, 6).unwrap();
        let std = standardize(&ds).unwrap();
        for d in 0..2 {
            let mean = std.rows().map(|r| r[d]).sum::<f64>() / std.len() as f64;
            let var = std.rows().map(|r| r[d] * r[d]).sum::<f64>() / std.len() as f64;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-9);
        }
        // Standardizing already-standard data is the identity up to roundoff.
        let again = standardize(&std).unwrap();
        let tf = again.standardization.as_ref().unwrap();
        assert!(tf.mean.iter().all(|m| m.abs() < 1e-12));
        assert!(tf.scale.iter().all(|s| (s - 1.0).abs() < 1e-9));
    }

    #[test]
    fn standardize_is_affine_invariant() {
        let ds = make_moons(2_000, 0.05, 8).unwrap();
        let mut shifted_rows = Vec::new();
        for r in ds.rows() {
            shifted_rows.push(3.0 * r[0] - 1.0);
            shifted_rows.push(0.5 * r[1] + 10.0);
        }
        let shifted = Dataset::from_rows(2, shifted_rows, "affine").unwrap();
        let a = standardize(&ds).unwrap();
        let b = standardize(&shifted).unwrap();
        for (ra, rb) in a.rows().zip(b.rows()) {
            for (x, y) in ra.iter().zip(rb) {
                assert!((x - y).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn standardize_rejects_constant_column() {
        let rows = vec![1.0, 5.0, 2.0, 5.0, 3.0, 5.0];
        let ds = Dataset::from_rows(2, rows, "const").unwrap();
        assert!(standardize(&ds).is_err());
    }

    #[test]
    fn standardization_roundtrips_points() {
        let ds = make_ring(100, 8, 2.0, 0.1, 10).unwrap();
        let std = standardize(&ds).unwrap();
        let tf = std.standardization.as_ref().unwrap();
        for (raw, s) in ds.rows().zip(std.rows()) {
            let back = tf.invert(s);
            for (x, y) in raw.iter().zip(&back) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
