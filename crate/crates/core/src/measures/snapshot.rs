use super::mixture::draw;
use super::{validate_probability_vector, MixtureSpec};
use crate::error::{validation, Error, Result};
use crate::rng::RngStream;
use rand::Rng;
use serde::{Deserialize, Serialize};

const PROB_TOL: f64 = 1e-9;

/// A collection of `K`-snapshots over the alphabet `[n]`.
///
/// Each snapshot is stored as its `K` letters in nondecreasing order, which is
/// the multiset the sample denotes. The file format uses dense count vectors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BatchFile", into = "BatchFile")]
pub struct SnapshotBatch {
    n: usize,
    k: usize,
    seed: u64,
    len: usize,
    letters: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
struct BatchFile {
    n: usize,
    #[serde(rename = "K")]
    k: usize,
    seed: u64,
    samples: Vec<Vec<u32>>,
}

impl TryFrom<BatchFile> for SnapshotBatch {
    type Error = Error;

    fn try_from(f: BatchFile) -> Result<Self> {
        let mut b = SnapshotBatch::empty(f.n, f.k, f.seed)?;
        for c in &f.samples {
            b.push_counts(c)?;
        }
        Ok(b)
    }
}

impl From<SnapshotBatch> for BatchFile {
    fn from(b: SnapshotBatch) -> Self {
        BatchFile {
            n: b.n,
            k: b.k,
            seed: b.seed,
            samples: (0..b.len).map(|i| b.counts(i)).collect(),
        }
    }
}

impl SnapshotBatch {
    pub fn empty(n: usize, k: usize, seed: u64) -> Result<Self> {
        if n == 0 {
            return validation("alphabet size must be positive");
        }
        Ok(Self { n, k, seed, len: 0, letters: Vec::new() })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Letters per snapshot.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Sorted letters of snapshot `i`.
    pub fn letters(&self, i: usize) -> &[u32] {
        &self.letters[i * self.k..(i + 1) * self.k]
    }

    pub fn iter_letters(&self) -> impl Iterator<Item = &[u32]> {
        (0..self.len).map(move |i| self.letters(i))
    }

    pub fn counts(&self, i: usize) -> Vec<u32> {
        let mut c = vec![0u32; self.n];
        for &l in self.letters(i) {
            c[l as usize] += 1;
        }
        c
    }

    pub fn push_counts(&mut self, counts: &[u32]) -> Result<()> {
        if counts.len() != self.n {
            return validation(format!("count vector of length {} for n = {}", counts.len(), self.n));
        }
        let total: u64 = counts.iter().map(|&c| u64::from(c)).sum();
        if total != self.k as u64 {
            return validation(format!("counts sum to {total}, expected K = {}", self.k));
        }
        for (l, &c) in counts.iter().enumerate() {
            self.letters.extend(std::iter::repeat_n(l as u32, c as usize));
        }
        self.len += 1;
        Ok(())
    }

    /// Append a snapshot given as letters in any order.
    pub fn push_letters(&mut self, letters: &[u32]) -> Result<()> {
        if letters.len() != self.k {
            return validation(format!("{} letters, expected K = {}", letters.len(), self.k));
        }
        if let Some(&l) = letters.iter().find(|&&l| l as usize >= self.n) {
            return validation(format!("letter {l} outside alphabet of size {}", self.n));
        }
        let start = self.letters.len();
        self.letters.extend_from_slice(letters);
        self.letters[start..].sort_unstable();
        self.len += 1;
        Ok(())
    }

    /// The first `m` snapshots.
    pub fn truncated(&self, m: usize) -> Self {
        let m = m.min(self.len);
        Self {
            letters: self.letters[..m * self.k].to_vec(),
            len: m,
            ..*self
        }
    }

    /// Each snapshot reduced to a uniformly random `k`-subset of its letters.
    pub fn subsample(&self, k: usize, rng: &mut RngStream) -> Result<Self> {
        if k > self.k {
            return validation(format!("cannot take {k} letters from {}-snapshots", self.k));
        }
        let mut out = Self { k, len: 0, letters: Vec::with_capacity(self.len * k), ..*self };
        let mut buf: Vec<u32> = Vec::with_capacity(self.k);
        for s in self.iter_letters() {
            buf.clear();
            buf.extend_from_slice(s);
            // partial Fisher-Yates: first k positions become a uniform k-subset
            for j in 0..k {
                let r = rng.random_range(j..self.k);
                buf.swap(j, r);
            }
            out.push_letters(&buf[..k])?;
        }
        Ok(out)
    }
}

fn cdf_of(p: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    p.iter()
        .map(|&x| {
            acc += x.max(0.0);
            acc
        })
        .collect()
}

fn draw_letter(cdf: &[f64], rng: &mut RngStream) -> u32 {
    let total = *cdf.last().expect("nonempty");
    let u: f64 = rng.random::<f64>() * total;
    // first index with cdf > u, so the chosen letter has positive mass
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1) as u32
}

fn draw_letters(p: &[f64], k: usize, rng: &mut RngStream, out: &mut Vec<u32>) {
    let cdf = cdf_of(p);
    let start = out.len();
    out.extend((0..k).map(|_| draw_letter(&cdf, rng)));
    out[start..].sort_unstable();
}

/// `K` iid categorical draws from `p`, as a count vector.
pub fn sample_k_snapshot(p: &[f64], k: usize, rng: &mut RngStream) -> Result<Vec<u32>> {
    validate_probability_vector(p, PROB_TOL)?;
    let mut letters = Vec::with_capacity(k);
    draw_letters(p, k, rng, &mut letters);
    let mut c = vec![0u32; p.len()];
    for l in letters {
        c[l as usize] += 1;
    }
    Ok(c)
}

/// `count` snapshots of length `k`, each from a fresh constituent of `spec`.
pub fn generate_batch(spec: &MixtureSpec, count: usize, k: usize, rng: &mut RngStream) -> Result<SnapshotBatch> {
    spec.validate()?;
    let mut b = SnapshotBatch::empty(spec.n, k, rng.seed())?;
    b.letters.reserve(count * k);
    for _ in 0..count {
        let p = draw(spec, rng);
        draw_letters(&p, k, rng, &mut b.letters);
        b.len += 1;
    }
    Ok(b)
}
