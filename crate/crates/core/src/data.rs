//! Dataset loading and preparation: IDX image files, CIFAR-10 binary patch
//! extraction, plain CSV matrices, standardization, and the synthetic
//! generators used by the certification and sweep machinery.
//!
//! Everything returns samples in rows. Pixel data is scaled to `[0, 1]` by
//! dividing by 255; any further normalization is explicit via
//! [`standardize`].

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng, Vector};

/// Hard cap on loaded IDX images; files beyond this are truncated, matching
/// the largest dataset size the tool is meant to handle at a desk.
pub const MAX_IDX_IMAGES: usize = 50_000;

fn read_u32_be(bytes: &[u8], offset: usize) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(Error::Format {
            offset: bytes.len() as u64,
            msg: format!("file ends inside the {}-byte header field at {offset}", 4),
        });
    }
    Ok(u32::from_be_bytes(bytes[offset..end].try_into().unwrap()))
}

/// Load an IDX image file (magic `0x00000803`), optionally cross-checking the
/// sample count against an IDX label file (magic `0x00000801`). Pixels are
/// scaled to `[0, 1]`. At most [`MAX_IDX_IMAGES`] images are kept, or `limit`
/// if that is lower.
pub fn load_mnist_idx(
    images: &Path,
    labels: Option<&Path>,
    limit: Option<usize>,
) -> Result<Matrix> {
    let bytes = fs::read(images)?;
    let magic = read_u32_be(&bytes, 0)?;
    if magic != 0x0000_0803 {
        return Err(Error::Format {
            offset: 0,
            msg: format!("bad image magic {magic:#010x}, expected 0x00000803"),
        });
    }
    let count = read_u32_be(&bytes, 4)? as usize;
    let rows = read_u32_be(&bytes, 8)? as usize;
    let cols = read_u32_be(&bytes, 12)? as usize;
    let pixels = rows * cols;
    let expected = 16 + count * pixels;
    if bytes.len() != expected {
        return Err(Error::Format {
            offset: bytes.len().min(expected) as u64,
            msg: format!(
                "image payload is {} bytes, header promises {}",
                bytes.len() - 16,
                expected - 16
            ),
        });
    }

    if let Some(labels) = labels {
        let lbytes = fs::read(labels)?;
        let lmagic = read_u32_be(&lbytes, 0)?;
        if lmagic != 0x0000_0801 {
            return Err(Error::Format {
                offset: 0,
                msg: format!("bad label magic {lmagic:#010x}, expected 0x00000801"),
            });
        }
        let lcount = read_u32_be(&lbytes, 4)? as usize;
        if lcount != count {
            return Err(Error::Format {
                offset: 4,
                msg: format!("label count {lcount} does not match image count {count}"),
            });
        }
        if lbytes.len() != 8 + lcount {
            return Err(Error::Format {
                offset: lbytes.len().min(8 + lcount) as u64,
                msg: format!(
                    "label payload is {} bytes, header promises {lcount}",
                    lbytes.len() - 8
                ),
            });
        }
    }

    let keep = count.min(MAX_IDX_IMAGES).min(limit.unwrap_or(usize::MAX));
    let mut x = Matrix::zeros((keep, pixels));
    for i in 0..keep {
        let start = 16 + i * pixels;
        for p in 0..pixels {
            x[[i, p]] = bytes[start + p] as f64 / 255.0;
        }
    }
    Ok(x)
}

const CIFAR_RECORD: usize = 3073; // 1 label byte + 3 channel planes of 32x32
const CIFAR_SIDE: usize = 32;

/// Extract `num` random square patches of side `patch` from CIFAR-10 binary
/// batch files. Each patch keeps the channel-planar layout, so the sample
/// width is `3 * patch * patch`. Per patch the generator is consumed in the
/// order image, top row, left column, each via a bounded draw, which pins the
/// extraction for a given seed.
pub fn load_cifar10_patches(
    files: &[PathBuf],
    patch: usize,
    num: usize,
    rng: &mut Rng,
) -> Result<Matrix> {
    if patch == 0 || patch > CIFAR_SIDE {
        return Err(Error::Config(format!(
            "patch side must lie in 1..={CIFAR_SIDE}, got {patch}"
        )));
    }
    if files.is_empty() {
        return Err(Error::Config("need at least one batch file".into()));
    }
    let mut batches: Vec<Vec<u8>> = Vec::with_capacity(files.len());
    for path in files {
        let bytes = fs::read(path)?;
        if bytes.is_empty() || bytes.len() % CIFAR_RECORD != 0 {
            return Err(Error::Format {
                offset: (bytes.len() - bytes.len() % CIFAR_RECORD) as u64,
                msg: format!(
                    "{} is not a whole number of {CIFAR_RECORD}-byte records",
                    path.display()
                ),
            });
        }
        batches.push(bytes);
    }
    let counts: Vec<usize> = batches.iter().map(|b| b.len() / CIFAR_RECORD).collect();
    let total: usize = counts.iter().sum();

    let span = CIFAR_SIDE - patch + 1;
    let n = 3 * patch * patch;
    let mut x = Matrix::zeros((num, n));
    for s in 0..num {
        let mut img = rng.below(total);
        let row0 = rng.below(span);
        let col0 = rng.below(span);
        let mut file_idx = 0;
        while img >= counts[file_idx] {
            img -= counts[file_idx];
            file_idx += 1;
        }
        let record = &batches[file_idx][img * CIFAR_RECORD..(img + 1) * CIFAR_RECORD];
        let mut out = 0;
        for ch in 0..3 {
            let plane = 1 + ch * CIFAR_SIDE * CIFAR_SIDE;
            for r in 0..patch {
                let base = plane + (row0 + r) * CIFAR_SIDE + col0;
                for c in 0..patch {
                    x[[s, out]] = record[base + c] as f64 / 255.0;
                    out += 1;
                }
            }
        }
    }
    Ok(x)
}

/// Which axis to standardize over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StandardizeMode {
    /// Each sample to zero mean and unit deviation across its own entries.
    #[default]
    PerSample,
    /// Each input dimension to zero mean and unit deviation across samples.
    PerFeature,
}

/// Standardize in place: subtract the mean and divide by the population
/// standard deviation plus `floor`. A slice whose deviation and floor are
/// both zero becomes all zeros instead of dividing by zero.
pub fn standardize(x: &mut Matrix, mode: StandardizeMode, floor: f64) {
    assert!(floor >= 0.0, "deviation floor must be >= 0");
    match mode {
        StandardizeMode::PerSample => {
            for mut row in x.rows_mut() {
                standardize_slice(row.as_slice_mut().expect("row-major layout"), floor);
            }
        }
        StandardizeMode::PerFeature => {
            for mut col in x.columns_mut() {
                let mut buf: Vec<f64> = col.to_vec();
                standardize_slice(&mut buf, floor);
                for (dst, src) in col.iter_mut().zip(buf) {
                    *dst = src;
                }
            }
        }
    }
}

fn standardize_slice(values: &mut [f64], floor: f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let denom = var.sqrt() + floor;
    if denom == 0.0 {
        values.iter_mut().for_each(|v| *v = 0.0);
    } else {
        values.iter_mut().for_each(|v| *v = (*v - mean) / denom);
    }
}

fn center_columns(x: &mut Matrix) {
    for mut col in x.columns_mut() {
        let mean = col.sum() / col.len() as f64;
        col.mapv_inplace(|v| v - mean);
    }
}

/// Draw `num > n` Gaussian samples and whiten them so the empirical column
/// means are (numerically) zero and the empirical covariance, in the
/// population convention, is the identity. Resamples up to eight times if the
/// drawn covariance is too close to singular to invert stably.
pub fn synth_whitened_gaussian(num: usize, n: usize, rng: &mut Rng) -> Result<Matrix> {
    assert!(num > n, "whitening needs more samples than dimensions");
    for _ in 0..8 {
        let mut x = rng.normal_matrix(num, n);
        center_columns(&mut x);
        let cov = x.t().dot(&x) / num as f64;
        let sym = nalgebra::DMatrix::from_iterator(n, n, cov.t().iter().cloned());
        let eig = sym.symmetric_eigen();
        if eig.eigenvalues.iter().any(|&v| v < 1e-10) {
            continue;
        }
        // C^{-1/2} = U diag(1/sqrt(lambda)) U^T, symmetric, applied on the
        // right of the centered data.
        let mut scaled = eig.eigenvectors.clone();
        for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
            let s = 1.0 / lambda.sqrt();
            scaled.column_mut(j).scale_mut(s);
        }
        let inv_sqrt_na = scaled * eig.eigenvectors.transpose();
        let mut inv_sqrt = Matrix::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                inv_sqrt[[i, j]] = inv_sqrt_na[(i, j)];
            }
        }
        let mut white = x.dot(&inv_sqrt);
        // The transform preserves centering exactly in theory; re-center to
        // strip the floating-point drift it leaves behind.
        center_columns(&mut white);
        return Ok(white);
    }
    Err(Error::Config(
        "sample covariance stayed near-singular after 8 attempts".into(),
    ))
}

/// Sparse dictionary data: `atoms` non-negative unit-norm directions, each
/// sample the sum of `k_active` randomly chosen atoms with positive weights
/// plus a little non-negative noise. The result has the structure sparse
/// codes thrive on while staying MNIST-like (non-negative, overlapping
/// features); standardization is left to the caller.
pub fn synth_sparse_dict(
    num: usize,
    n: usize,
    atoms: usize,
    k_active: usize,
    rng: &mut Rng,
) -> Matrix {
    assert!(atoms >= 1 && k_active >= 1 && k_active <= atoms);
    let mut dict = Matrix::zeros((atoms, n));
    for mut row in dict.rows_mut() {
        let mut norm_sq = 0.0;
        for v in row.iter_mut() {
            let g: f64 = rng.standard_normal().abs();
            *v = g;
            norm_sq += g * g;
        }
        let norm = norm_sq.sqrt();
        if norm > 0.0 {
            row.mapv_inplace(|v| v / norm);
        }
    }

    let mut x = Matrix::zeros((num, n));
    for mut row in x.rows_mut() {
        for _ in 0..k_active {
            let atom = rng.below(atoms);
            let coeff = rng.uniform(0.5, 1.5);
            row.scaled_add(coeff, &dict.row(atom));
        }
        for v in row.iter_mut() {
            *v += 0.01 * rng.standard_normal().abs();
        }
    }
    x
}

/// Write a matrix as headerless CSV, one sample per line. Values use the
/// shortest decimal form that parses back to the same float, so a
/// write/read round trip is bitwise exact.
pub fn write_matrix_csv(path: &Path, x: &Matrix) -> Result<()> {
    let mut out = String::new();
    for row in x.rows() {
        let mut first = true;
        for v in row.iter() {
            if !first {
                out.push(',');
            }
            out.push_str(&format!("{v}"));
            first = false;
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Read a headerless numeric CSV written by [`write_matrix_csv`] (or any
/// rectangular comma-separated float table).
pub fn read_matrix_csv(path: &Path) -> Result<Matrix> {
    let text = fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut offset = 0u64;
    for (lineno, line) in text.lines().enumerate() {
        if !line.trim().is_empty() {
            let mut row = Vec::new();
            for field in line.split(',') {
                let v = field.trim().parse::<f64>().map_err(|_| Error::Format {
                    offset,
                    msg: format!("line {}: unparseable field {field:?}", lineno + 1),
                })?;
                row.push(v);
            }
            if let Some(prev) = rows.first() {
                if row.len() != prev.len() {
                    return Err(Error::Format {
                        offset,
                        msg: format!(
                            "line {}: {} fields, expected {}",
                            lineno + 1,
                            row.len(),
                            prev.len()
                        ),
                    });
                }
            }
            rows.push(row);
        }
        offset += line.len() as u64 + 1;
    }
    if rows.is_empty() {
        return Err(Error::Format {
            offset: 0,
            msg: "no data rows".into(),
        });
    }
    let n = rows[0].len();
    let flat: Vec<f64> = rows.concat();
    Ok(Matrix::from_shape_vec((flat.len() / n, n), flat).expect("rectangular by construction"))
}

/// Where a sweep or training run gets its samples. Loading is deterministic
/// given the generator handed in (used by the patch extractor and the
/// synthetic kinds; file loaders ignore it).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    MnistIdx {
        images: PathBuf,
        labels: Option<PathBuf>,
        limit: Option<usize>,
    },
    Cifar10Patches {
        files: Vec<PathBuf>,
        patch: usize,
        num: usize,
    },
    SynthDict {
        num: usize,
        n: usize,
        atoms: usize,
        k_active: usize,
    },
    SynthWhitened {
        num: usize,
        n: usize,
    },
    Csv {
        path: PathBuf,
    },
}

impl DatasetSpec {
    pub fn load(&self, rng: &mut Rng) -> Result<Matrix> {
        match self {
            DatasetSpec::MnistIdx {
                images,
                labels,
                limit,
            } => load_mnist_idx(images, labels.as_deref(), *limit),
            DatasetSpec::Cifar10Patches { files, patch, num } => {
                load_cifar10_patches(files, *patch, *num, rng)
            }
            DatasetSpec::SynthDict {
                num,
                n,
                atoms,
                k_active,
            } => Ok(synth_sparse_dict(*num, *n, *atoms, *k_active, rng)),
            DatasetSpec::SynthWhitened { num, n } => synth_whitened_gaussian(*num, *n, rng),
            DatasetSpec::Csv { path } => read_matrix_csv(path),
        }
    }

    /// Resolve relative file paths against `base`, leaving absolute paths
    /// and non-file kinds untouched.
    pub fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&p);
            }
        };
        match self {
            DatasetSpec::MnistIdx { images, labels, .. } => {
                fix(images);
                if let Some(labels) = labels {
                    fix(labels);
                }
            }
            DatasetSpec::Cifar10Patches { files, .. } => files.iter_mut().for_each(fix),
            DatasetSpec::Csv { path } => fix(path),
            DatasetSpec::SynthDict { .. } | DatasetSpec::SynthWhitened { .. } => {}
        }
    }
}

/// Column means of a matrix, for whiteness checks.
pub fn column_means(x: &Matrix) -> Vector {
    x.mean_axis(ndarray::Axis(0)).expect("non-empty matrix")
}

/// Population covariance of a matrix's columns around their means.
pub fn column_covariance(x: &Matrix) -> Matrix {
    let mut centered = x.clone();
    center_columns(&mut centered);
    centered.t().dot(&centered) / x.nrows() as f64
}
