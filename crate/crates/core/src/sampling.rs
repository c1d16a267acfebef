//! Seeded i.i.d. sampling from bounded densities on `[0, 1]`.
//!
//! Each random stream is keyed by `(master_seed, replication_index,
//! stream_label)`. The key is hashed into a ChaCha seed, so streams for
//! different replications are independent and can be rebuilt in any order.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dictionary::{check_simplex, Density, Dictionary};
use crate::error::{invalid, Result};

/// Identifies one deterministic random stream.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub replication_index: u64,
    pub stream_label: String,
}

impl SeedSpec {
    pub fn new(master_seed: u64, replication_index: u64, stream_label: impl Into<String>) -> Self {
        Self {
            master_seed,
            replication_index,
            stream_label: stream_label.into(),
        }
    }

    /// Same seed and replication, different label.
    pub fn with_label(&self, label: &str) -> Self {
        Self::new(self.master_seed, self.replication_index, label)
    }

    /// Derived label `"{label}/{suffix}"`.
    pub fn child(&self, suffix: &str) -> Self {
        Self::new(
            self.master_seed,
            self.replication_index,
            format!("{}/{suffix}", self.stream_label),
        )
    }

    fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(self.master_seed.to_le_bytes());
        h.update(self.replication_index.to_le_bytes());
        h.update((self.stream_label.len() as u64).to_le_bytes());
        h.update(self.stream_label.as_bytes());
        h.finalize().into()
    }

    /// Fresh generator positioned at the start of the stream.
    pub fn rng(&self) -> ChaCha20Rng {
        ChaCha20Rng::from_seed(self.digest())
    }

    /// First eight bytes of the stream key, for labelling output rows.
    pub fn fingerprint(&self) -> u64 {
        let d = self.digest();
        u64::from_le_bytes(d[..8].try_into().expect("eight bytes"))
    }
}

/// Draws `n` points from `density` by rejection against the uniform proposal with envelope `M`.
pub fn sample(density: &Density, n: usize, seed: &SeedSpec) -> Result<Vec<f64>> {
    let mut rng = seed.rng();
    draw(density, n, &mut rng)
}

fn draw<R: Rng>(density: &Density, n: usize, rng: &mut R) -> Result<Vec<f64>> {
    let envelope = density.upper();
    if !(envelope.is_finite() && envelope > 0.0) {
        return Err(invalid(format!("rejection sampling needs a finite envelope, got {envelope}")));
    }
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        out.push(draw_one(density, envelope, rng));
    }
    Ok(out)
}

fn draw_one<R: Rng>(density: &Density, envelope: f64, rng: &mut R) -> f64 {
    loop {
        let x: f64 = rng.random();
        let u: f64 = rng.random();
        if u * envelope <= density.value(x) {
            return x;
        }
    }
}

/// Component labels drawn with probabilities `weights` from the `components` stream.
pub fn sample_components(weights: &[f64], n: usize, seed: &SeedSpec) -> Result<Vec<usize>> {
    check_simplex(weights, 1e-9)?;
    let mut cumulative = Vec::with_capacity(weights.len());
    let mut acc = 0.0;
    for w in weights {
        acc += w.max(0.0);
        cumulative.push(acc);
    }
    let total = acc;
    let last_positive = weights.iter().rposition(|w| *w > 0.0).unwrap_or(0);
    let mut rng = seed.child("components").rng();
    Ok((0..n)
        .map(|_| {
            let u: f64 = rng.random::<f64>() * total;
            cumulative
                .iter()
                .position(|c| u < *c)
                .unwrap_or(last_positive)
                .min(last_positive)
        })
        .collect())
}

/// Draws from the mixture `f_pi`: a component label per point, then a point from that component.
///
/// Labels and values come from separate sub-streams, so the label counts are
/// exactly a multinomial draw reproducible via [`sample_components`].
pub fn sample_mixture(dict: &Dictionary, weights: &[f64], n: usize, seed: &SeedSpec) -> Result<Vec<f64>> {
    if weights.len() != dict.len() {
        return Err(invalid(format!(
            "expected {} weights, got {}",
            dict.len(),
            weights.len()
        )));
    }
    let labels = sample_components(weights, n, seed)?;
    let mut rng = seed.child("values").rng();
    let mut out = Vec::with_capacity(n);
    for j in labels {
        let c = dict.component(j);
        out.push(draw_one(c, c.upper(), &mut rng));
    }
    Ok(out)
}

/// Writes one value per line with 17 significant digits.
pub fn export_samples(path: &Path, samples: &[f64]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for x in samples {
        writeln!(f, "{x:.16e}")?;
    }
    f.flush()?;
    Ok(())
}

/// Reads a file written by [`export_samples`].
pub fn import_samples(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.trim()
                .parse::<f64>()
                .map_err(|e| invalid(format!("bad sample '{l}': {e}")))
        })
        .collect()
}
