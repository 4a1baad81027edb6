//! Synthetic bilingual instances with a known gold alignment.
//!
//! The source space is a Gaussian matrix; the target is a random orthogonal
//! rotation of it plus isotropic noise, with a fraction of rows optionally
//! dropped and the remaining rows shuffled and renamed.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::embeddings::EmbeddingSpace;
use crate::error::{Error, Result};

/// `n × d` matrix with i.i.d. `N(0, sigma²)` entries.
pub fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, n: usize, d: usize, sigma: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((n, d), || {
        let v: f64 = rng.sample(StandardNormal);
        v * sigma
    })
}

/// Haar-distributed `d × d` orthogonal matrix (QR of a Gaussian matrix with
/// the sign of `R`'s diagonal folded into `Q`).
pub fn random_orthogonal<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Array2<f64> {
    let g = gaussian_matrix(rng, d, d, 1.0);
    let qr = DMatrix::from_fn(d, d, |i, j| g[[i, j]]).qr();
    let (q, r) = (qr.q(), qr.r());
    Array2::from_shape_fn((d, d), |(i, j)| {
        let sign = if r[(j, j)] < 0.0 { -1.0 } else { 1.0 };
        q[(i, j)] * sign
    })
}

/// Parameters for [`generate_synthetic_pair`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticParams {
    pub n: usize,
    pub d: usize,
    pub noise_sigma: f64,
    /// Fraction of source rows that keep a counterpart in the target space.
    pub overlap: f64,
    pub rng_seed: u64,
}

/// A generated instance. `gold` lists `(source word, target word)` in source
/// row order.
#[derive(Debug, Clone)]
pub struct SyntheticPair {
    pub source: EmbeddingSpace,
    pub target: EmbeddingSpace,
    pub gold: Vec<(String, String)>,
}

/// Paths written by [`SyntheticPair::write_to_dir`].
#[derive(Debug, Clone)]
pub struct SyntheticFiles {
    pub source: PathBuf,
    pub target: PathBuf,
    pub gold: PathBuf,
    pub train: PathBuf,
    pub test: PathBuf,
}

/// Fraction of gold pairs written to the training split; the rest is test.
pub const TRAIN_FRACTION: f64 = 0.6;

pub fn generate_synthetic_pair(params: SyntheticParams) -> Result<SyntheticPair> {
    let SyntheticParams {
        n,
        d,
        noise_sigma,
        overlap,
        rng_seed,
    } = params;
    if n < 10 {
        return Err(Error::config("synthetic instances need n ≥ 10"));
    }
    if d < 2 {
        return Err(Error::config("synthetic instances need d ≥ 2"));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::config("noise sigma must be a non-negative real"));
    }
    if !(overlap > 0.0 && overlap <= 1.0) {
        return Err(Error::config("overlap must lie in (0, 1]"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let x = gaussian_matrix(&mut rng, n, d, 1.0);
    let rotation = random_orthogonal(&mut rng, d);
    let mut z = x.dot(&rotation);
    if noise_sigma > 0.0 {
        z += &gaussian_matrix(&mut rng, n, d, noise_sigma);
    }

    let keep = ((overlap * n as f64).round() as usize).clamp(1, n);
    let mut rows: Vec<usize> = (0..n).collect();
    rows.shuffle(&mut rng);
    rows.truncate(keep);

    let source_words: Vec<String> = (0..n).map(|i| format!("s{i}")).collect();
    let target_words: Vec<String> = rows.iter().map(|i| format!("t{i}")).collect();
    let target_vectors = z.select(ndarray::Axis(0), &rows);

    let mut kept = rows.clone();
    kept.sort_unstable();
    let gold = kept
        .iter()
        .map(|&i| (format!("s{i}"), format!("t{i}")))
        .collect();

    Ok(SyntheticPair {
        source: EmbeddingSpace::new(source_words, x)?,
        target: EmbeddingSpace::new(target_words, target_vectors)?,
        gold,
    })
}

fn write_pairs(path: &Path, pairs: &[(String, String)]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for (s, t) in pairs {
        writeln!(w, "{s}\t{t}")?;
    }
    w.flush()?;
    Ok(())
}

impl SyntheticPair {
    /// Write `src.vec`, `tgt.vec`, `gold.tsv` and the `train.tsv`/`test.tsv`
    /// split of the gold pairs into `dir`.
    pub fn write_to_dir(&self, dir: &Path) -> Result<SyntheticFiles> {
        std::fs::create_dir_all(dir)?;
        let files = SyntheticFiles {
            source: dir.join("src.vec"),
            target: dir.join("tgt.vec"),
            gold: dir.join("gold.tsv"),
            train: dir.join("train.tsv"),
            test: dir.join("test.tsv"),
        };
        self.source
            .write_word2vec(BufWriter::new(File::create(&files.source)?))?;
        self.target
            .write_word2vec(BufWriter::new(File::create(&files.target)?))?;
        let split = ((self.gold.len() as f64) * TRAIN_FRACTION).round() as usize;
        write_pairs(&files.gold, &self.gold)?;
        write_pairs(&files.train, &self.gold[..split])?;
        write_pairs(&files.test, &self.gold[split..])?;
        Ok(files)
    }
}
