use super::{validate_probability_vector, DiscreteMeasure};
use crate::error::{validation, Result};
use crate::rng::RngStream;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

const SIMPLEX_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MixtureKind {
    /// Finitely many constituents in the simplex.
    KspikeSimplex,
    /// Finitely many coins; spikes are heads probabilities in `[0, 1]`, `n = 2`.
    KspikeUnitInterval,
    /// Uniform on the segment between two vertices.
    ContinuousSegment,
    /// Dirichlet-weighted combinations of the vertices.
    ContinuousSubspace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spike {
    pub point: Vec<f64>,
    pub weight: f64,
}

/// Ground-truth description for the synthetic generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub kind: MixtureKind,
    pub n: usize,
    pub k: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub spikes: Vec<Spike>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub vertices: Vec<Vec<f64>>,
    /// Dirichlet concentration for `continuous-subspace`; all ones when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dirichlet_alpha: Option<Vec<f64>>,
}

impl MixtureSpec {
    pub fn kspike(spikes: Vec<(Vec<f64>, f64)>) -> Result<Self> {
        let n = spikes.first().map_or(0, |s| s.0.len());
        let spec = Self {
            kind: MixtureKind::KspikeSimplex,
            n,
            k: spikes.len(),
            spikes: spikes
                .into_iter()
                .map(|(point, weight)| Spike { point, weight })
                .collect(),
            vertices: Vec::new(),
            dirichlet_alpha: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Coins with the given heads probabilities and weights.
    pub fn coins(heads: &[f64], weights: &[f64]) -> Result<Self> {
        let spec = Self {
            kind: MixtureKind::KspikeUnitInterval,
            n: 2,
            k: heads.len(),
            spikes: heads
                .iter()
                .zip(weights)
                .map(|(&x, &weight)| Spike { point: vec![x], weight })
                .collect(),
            vertices: Vec::new(),
            dirichlet_alpha: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn segment(u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        let spec = Self {
            kind: MixtureKind::ContinuousSegment,
            n: u.len(),
            k: 2,
            spikes: Vec::new(),
            vertices: vec![u, v],
            dirichlet_alpha: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return validation("alphabet size must be positive");
        }
        match self.kind {
            MixtureKind::KspikeSimplex | MixtureKind::KspikeUnitInterval => {
                if self.spikes.is_empty() {
                    return validation("k-spike mixture needs at least one spike");
                }
                if self.spikes.len() != self.k {
                    return validation(format!("k = {} but {} spikes", self.k, self.spikes.len()));
                }
                let w: Vec<f64> = self.spikes.iter().map(|s| s.weight).collect();
                validate_probability_vector(&w, 1e-9)?;
                for s in &self.spikes {
                    if self.kind == MixtureKind::KspikeSimplex {
                        if s.point.len() != self.n {
                            return validation("spike dimension differs from n");
                        }
                        validate_probability_vector(&s.point, SIMPLEX_TOL)?;
                    } else {
                        if self.n != 2 || s.point.len() != 1 {
                            return validation("coin spikes are 1-D heads probabilities with n = 2");
                        }
                        if !(0.0..=1.0).contains(&s.point[0]) {
                            return validation(format!("heads probability {} outside [0,1]", s.point[0]));
                        }
                    }
                }
            }
            MixtureKind::ContinuousSegment | MixtureKind::ContinuousSubspace => {
                if self.kind == MixtureKind::ContinuousSegment && self.vertices.len() != 2 {
                    return validation("segment mixture needs exactly two vertices");
                }
                if self.vertices.is_empty() {
                    return validation("continuous mixture needs vertices");
                }
                for v in &self.vertices {
                    if v.len() != self.n {
                        return validation("vertex dimension differs from n");
                    }
                    validate_probability_vector(v, SIMPLEX_TOL)?;
                }
                if let Some(a) = &self.dirichlet_alpha {
                    if a.len() != self.vertices.len() || a.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
                        return validation("dirichlet_alpha must be positive, one per vertex");
                    }
                }
            }
        }
        Ok(())
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self.kind, MixtureKind::KspikeSimplex | MixtureKind::KspikeUnitInterval)
    }

    /// Map a spike or vertex to its constituent distribution on `[n]`.
    fn lift(&self, point: &[f64]) -> Vec<f64> {
        match self.kind {
            MixtureKind::KspikeUnitInterval => vec![point[0], 1.0 - point[0]],
            _ => point.to_vec(),
        }
    }

    /// The mixture as a measure on the simplex; `None` for continuous kinds.
    pub fn simplex_measure(&self) -> Option<DiscreteMeasure> {
        if !self.is_discrete() {
            return None;
        }
        let (p, w) = self.spikes.iter().map(|s| (self.lift(&s.point), s.weight)).unzip();
        DiscreteMeasure::new(p, w).ok()
    }

    /// Coin mixtures as a measure on `[0, 1]` (heads probabilities).
    pub fn unit_interval_measure(&self) -> Option<DiscreteMeasure> {
        if self.kind != MixtureKind::KspikeUnitInterval {
            return None;
        }
        let (p, w) = self.spikes.iter().map(|s| (s.point.clone(), s.weight)).unzip();
        DiscreteMeasure::new(p, w).ok()
    }

    /// Exact measure for discrete kinds, otherwise `samples` iid constituents.
    pub fn discretize(&self, samples: usize, rng: &mut RngStream) -> Result<DiscreteMeasure> {
        if let Some(m) = self.simplex_measure() {
            return Ok(m);
        }
        let pts = (0..samples)
            .map(|_| sample_constituent(self, rng))
            .collect::<Result<Vec<_>>>()?;
        DiscreteMeasure::uniform(pts)
    }

    fn dirichlet_weights(&self, rng: &mut RngStream) -> Vec<f64> {
        let m = self.vertices.len();
        let ones;
        let alpha = match &self.dirichlet_alpha {
            Some(a) => a.as_slice(),
            None => {
                ones = vec![1.0; m];
                ones.as_slice()
            }
        };
        let mut g: Vec<f64> = alpha
            .iter()
            .map(|&a| Gamma::new(a, 1.0).expect("validated shape").sample(rng))
            .collect();
        let s: f64 = g.iter().sum();
        g.iter_mut().for_each(|x| *x /= s);
        g
    }
}

/// Draw one constituent `p ∈ Δₙ` from the mixture.
pub fn sample_constituent(spec: &MixtureSpec, rng: &mut RngStream) -> Result<Vec<f64>> {
    spec.validate()?;
    Ok(draw(spec, rng))
}

/// Unvalidated draw; callers validate once per batch.
pub(crate) fn draw(spec: &MixtureSpec, rng: &mut RngStream) -> Vec<f64> {
    match spec.kind {
        MixtureKind::KspikeSimplex | MixtureKind::KspikeUnitInterval => {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut pick = spec.spikes.len() - 1;
            for (j, s) in spec.spikes.iter().enumerate() {
                acc += s.weight;
                if u < acc {
                    pick = j;
                    break;
                }
            }
            spec.lift(&spec.spikes[pick].point)
        }
        MixtureKind::ContinuousSegment => {
            let lambda: f64 = rng.random();
            let (u, v) = (&spec.vertices[0], &spec.vertices[1]);
            u.iter().zip(v).map(|(a, b)| (1.0 - lambda) * a + lambda * b).collect()
        }
        MixtureKind::ContinuousSubspace => {
            let w = spec.dirichlet_weights(rng);
            let mut p = vec![0.0; spec.n];
            for (wi, v) in w.iter().zip(&spec.vertices) {
                for (acc, x) in p.iter_mut().zip(v) {
                    *acc += wi * x;
                }
            }
            p
        }
    }
}
