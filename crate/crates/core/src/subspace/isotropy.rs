use crate::error::{contract, Result};
use crate::measures::{validate_probability_vector, DiscreteMeasure, SnapshotBatch};
use crate::rng::RngStream;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Letter elimination and splitting that makes expected letter
/// probabilities roughly uniform.
///
/// Letter `i` with `r̃_i ≤ 2σ/n` is eliminated; every other letter becomes
/// `n_i = ⌊n r̃_i / σ⌋` copies. Copies of letter `i` occupy the contiguous
/// range `offsets[i]..offsets[i] + copies[i]` of the new alphabet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsotropyMap {
    pub n: usize,
    pub sigma: f64,
    pub r_tilde: Vec<f64>,
    pub eliminated: Vec<usize>,
    pub copies: Vec<usize>,
    pub offsets: Vec<usize>,
    pub n_prime: usize,
}

/// A batch over the split alphabet plus the number of snapshots discarded
/// because they contained an eliminated letter.
#[derive(Debug, Clone, PartialEq)]
pub struct IsotropicBatch {
    pub batch: SnapshotBatch,
    pub dropped: usize,
}

impl IsotropyMap {
    /// A map with explicit copy counts; zero copies eliminates a letter.
    pub fn from_copies(copies: Vec<usize>, sigma: f64, r_tilde: Vec<f64>) -> Result<Self> {
        if copies.iter().all(|&c| c == 0) {
            return contract("every letter was eliminated");
        }
        let mut offsets = Vec::with_capacity(copies.len());
        let mut acc = 0;
        for &c in &copies {
            offsets.push(acc);
            acc += c;
        }
        let eliminated = (0..copies.len()).filter(|&i| copies[i] == 0).collect();
        Ok(Self { n: copies.len(), sigma, r_tilde, eliminated, copies, offsets, n_prime: acc })
    }

    /// The map that keeps every letter as a single copy.
    pub fn identity(n: usize) -> Result<Self> {
        Self::from_copies(vec![1; n], 0.0, vec![1.0 / n.max(1) as f64; n])
    }

    pub fn is_eliminated(&self, letter: usize) -> bool {
        self.copies[letter] == 0
    }

    /// Estimated mass of the eliminated letters.
    pub fn eliminated_mass(&self) -> f64 {
        self.eliminated.iter().map(|&i| self.r_tilde[i]).sum()
    }

    /// Original letter of a copy.
    pub fn letter_of(&self, copy: usize) -> usize {
        // eliminated letters share the offset of the next letter, so the last match wins
        self.offsets.partition_point(|&o| o <= copy) - 1
    }

    /// Spread each coordinate evenly over its copies; eliminated letters vanish.
    ///
    /// The last copy takes `x` minus the running sum of the others, so that
    /// [`merge_point`](Self::merge_point) recovers `x` bit-for-bit.
    pub fn split_point(&self, p: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_prime];
        for (i, &x) in p.iter().enumerate() {
            let c = self.copies[i];
            if c == 0 {
                continue;
            }
            let share = x / c as f64;
            let slots = &mut out[self.offsets[i]..self.offsets[i] + c];
            let mut acc = 0.0;
            for slot in &mut slots[..c - 1] {
                *slot = share;
                acc += share;
            }
            slots[c - 1] = x - acc;
        }
        out
    }

    /// Sum copy coordinates back onto their letters.
    pub fn merge_point(&self, q: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| q[self.offsets[i]..self.offsets[i] + self.copies[i]].iter().sum())
            .collect()
    }
}

/// Empirical letter frequencies over every letter of every snapshot.
pub fn estimate_r(batch: &SnapshotBatch) -> Result<Vec<f64>> {
    if batch.is_empty() || batch.k() == 0 {
        return contract("cannot estimate letter frequencies from an empty batch");
    }
    let mut r = vec![0.0; batch.n()];
    for s in batch.iter_letters() {
        for &l in s {
            r[l as usize] += 1.0;
        }
    }
    let total = (batch.len() * batch.k()) as f64;
    r.iter_mut().for_each(|x| *x /= total);
    Ok(r)
}

/// Eliminate letters with `r̃_i ≤ 2σ/n` and split the rest into `⌊n r̃_i/σ⌋` copies.
pub fn build_isotropy_map(r_tilde: &[f64], sigma: f64) -> Result<IsotropyMap> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return contract(format!("sigma = {sigma} must be positive"));
    }
    validate_probability_vector(r_tilde, 1e-9).or_else(|e| contract(e.to_string()))?;
    let n = r_tilde.len() as f64;
    let copies = r_tilde
        .iter()
        .map(|&r| if r <= 2.0 * sigma / n { 0 } else { (n * r / sigma).floor() as usize })
        .collect();
    IsotropyMap::from_copies(copies, sigma, r_tilde.to_vec())
}

/// Relabel every letter as a uniformly chosen copy, dropping snapshots that
/// contain an eliminated letter.
pub fn apply_isotropy(batch: &SnapshotBatch, map: &IsotropyMap, rng: &mut RngStream) -> Result<IsotropicBatch> {
    if batch.n() != map.n {
        return contract(format!("batch alphabet {} but map built for {}", batch.n(), map.n));
    }
    let mut out = SnapshotBatch::empty(map.n_prime, batch.k(), batch.seed())?;
    let mut dropped = 0;
    let mut buf = Vec::with_capacity(batch.k());
    for s in batch.iter_letters() {
        if s.iter().any(|&l| map.is_eliminated(l as usize)) {
            dropped += 1;
            continue;
        }
        buf.clear();
        for &l in s {
            let l = l as usize;
            let c = rng.random_range(0..map.copies[l]);
            buf.push((map.offsets[l] + c) as u32);
        }
        out.push_letters(&buf)?;
    }
    Ok(IsotropicBatch { batch: out, dropped })
}

/// Push a measure on the split simplex back to the original alphabet.
pub fn invert_isotropy(m: &DiscreteMeasure, map: &IsotropyMap) -> Result<DiscreteMeasure> {
    if !m.is_empty() && m.dim() != map.n_prime {
        return contract(format!("measure has dimension {}, map expects {}", m.dim(), map.n_prime));
    }
    let mut out = m.push_forward(|q| map.merge_point(q))?;
    if out.is_empty() {
        out = DiscreteMeasure::empty(map.n);
    }
    Ok(out)
}
