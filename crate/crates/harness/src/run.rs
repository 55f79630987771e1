use crate::config::{ExperimentConfig, Pipeline, Theory};
use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use snapmix_core::coin1d::{empirical_fq, fq_to_moments, reconstruct_general, reconstruct_kspike_1d, Reconstruction1d};
use snapmix_core::kdim::learn_kdim_pipeline;
use snapmix_core::kspike::learn_kspike;
use snapmix_core::measures::{generate_batch, transport_distance, transport_distance_1d};
use snapmix_core::rng::tags;
use snapmix_core::subspace::{estimate_r, exact_a, verify_basis, Reduction};
use snapmix_core::{DiscreteMeasure, GroundMetric, MixtureSpec, RngStream, SnapshotBatch};
use std::fs;
use std::path::Path;
use std::time::Instant;

/// Samples drawn per basis inequality when auditing a basis.
pub const BASIS_CHECK_SAMPLES: usize = 1000;

/// Snapshot batches for one run plus the generating mixture when known.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub batch1: SnapshotBatch,
    pub batch2: SnapshotBatch,
    pub batch_k: SnapshotBatch,
    pub truth: Option<MixtureSpec>,
}

pub const BATCH1_FILE: &str = "batch1.json";
pub const BATCH2_FILE: &str = "batch2.json";
pub const BATCHK_FILE: &str = "batchK.json";
pub const TRUTH_FILE: &str = "truth.json";

/// Draw the three batches. Each uses its own child of the generation stream,
/// so learner seeds never influence the data.
pub fn generate(spec: &MixtureSpec, n1: usize, n2: usize, nk: usize, big_k: usize, seed: u64) -> Result<Dataset> {
    let root = RngStream::new(seed).split(tags::GENERATE);
    Ok(Dataset {
        batch1: generate_batch(spec, n1, 1, &mut root.split(1))?,
        batch2: generate_batch(spec, n2, 2, &mut root.split(2))?,
        batch_k: generate_batch(spec, nk, big_k, &mut root.split(3))?,
        truth: Some(spec.clone()),
    })
}

/// Data for a config that carries its mixture.
pub fn generate_for(config: &ExperimentConfig) -> Result<Dataset> {
    let spec = config.mixture.as_ref().ok_or_else(|| anyhow!("config has no mixture to generate from"))?;
    generate(spec, config.n1, config.n2, config.nk, config.big_k, config.seed)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let s = serde_json::to_string_pretty(value)?;
    fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let s = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&s).with_context(|| format!("parsing {}", path.display()))
}

impl Dataset {
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        write_json(&dir.join(BATCH1_FILE), &self.batch1)?;
        write_json(&dir.join(BATCH2_FILE), &self.batch2)?;
        write_json(&dir.join(BATCHK_FILE), &self.batch_k)?;
        if let Some(t) = &self.truth {
            write_json(&dir.join(TRUTH_FILE), t)?;
        }
        Ok(())
    }

    /// Missing 1- and 2-snapshot files become empty batches; a missing truth
    /// file means the run is not evaluated.
    pub fn read(dir: &Path) -> Result<Self> {
        let batch_k: SnapshotBatch = read_json(&dir.join(BATCHK_FILE))?;
        let optional = |name: &str, k: usize| -> Result<SnapshotBatch> {
            let p = dir.join(name);
            if p.exists() {
                read_json(&p)
            } else {
                Ok(SnapshotBatch::empty(batch_k.n(), k, 0)?)
            }
        };
        let truth_path = dir.join(TRUTH_FILE);
        Ok(Self {
            batch1: optional(BATCH1_FILE, 1)?,
            batch2: optional(BATCH2_FILE, 2)?,
            truth: if truth_path.exists() { Some(read_json(&truth_path)?) } else { None },
            batch_k,
        })
    }
}

/// Wall-clock seconds per stage; excluded from the reproducible part of a report.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub stages: Vec<(String, f64)>,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub theory: Theory,
    pub diagnostics: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tran1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tran2: Option<f64>,
    /// `tran₁` of the single-point estimator at the empirical letter frequencies.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trivial_tran1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distance_error: Option<String>,
    pub output: DiscreteMeasure,
    #[serde(default)]
    pub outputs: Vec<String>,
    pub timings: Timings,
}

impl RunReport {
    /// The report without timings, serialized; equal for equal config and data.
    pub fn fingerprint(&self) -> String {
        let mut r = self.clone();
        r.timings = Timings::default();
        serde_json::to_string(&r).expect("report serializes")
    }
}

fn reconstruction_diag(rec: &Reconstruction1d) -> Value {
    json!({
        "slack": rec.slack,
        "residual": rec.residual,
        "doublings": rec.doublings,
        "heuristic": rec.heuristic,
    })
}

fn reduction_diag(red: &Reduction, config: &ExperimentConfig, rng: &RngStream) -> Value {
    let b = &red.basis;
    let check = match verify_basis(b, &red.truncation.a_prime, b.c, b.epsilon, BASIS_CHECK_SAMPLES, &mut rng.split(7)) {
        Ok(rep) => json!({"pass": true, "report": rep}),
        Err(e) => json!({"pass": false, "error": e.to_string()}),
    };
    json!({
        "n_prime": red.map.n_prime,
        "eliminated": red.map.eliminated,
        "eliminated_mass": red.map.eliminated_mass(),
        "dropped_2_snapshots": red.dropped,
        "known_a": config.known_a,
        "gamma": red.truncation.gamma,
        "k_prime": red.truncation.k_prime,
        "kept": red.truncation.kept,
        "gap_found": red.truncation.gap_found,
        "leading_eigenvalues": red.truncation.eigenvalues.iter().take(2 * config.k + 2).collect::<Vec<_>>(),
        "h": b.h(),
        "L": b.l,
        "C": b.c,
        "scale": b.scale,
        "m_star": b.ellipsoid.as_ref().map(|e| e.m_star),
        "axis_lengths": b.ellipsoid_axes.iter().map(|a| a.scaled_length).collect::<Vec<_>>(),
        "dropped_axis_lengths": b.dropped.iter().map(|a| a.scaled_length).collect::<Vec<_>>(),
        "basis_check": check,
    })
}

/// Heads probabilities of a coin truth, from either coin or two-letter specs.
fn coin_truth(spec: &MixtureSpec, samples: usize, rng: &mut RngStream) -> Result<DiscreteMeasure> {
    if let Some(m) = spec.unit_interval_measure() {
        return Ok(m);
    }
    if spec.n != 2 {
        bail!("coin pipelines need a two-letter truth");
    }
    let m = spec.discretize(samples, rng)?;
    Ok(m.push_forward(|p| vec![p[0]])?)
}

/// Execute the configured pipeline on `data` and evaluate against the truth.
pub fn run_pipeline(config: &ExperimentConfig, data: &Dataset) -> Result<RunReport> {
    config.validate()?;
    let start = Instant::now();
    let mut timings = Timings::default();
    let learn_rng = RngStream::new(config.learner_seed()).split(tags::LEARN);
    let audit_rng = RngStream::new(config.learner_seed()).split(tags::AUDIT);
    let known_a = if config.known_a {
        let spec = config.mixture.as_ref().or(data.truth.as_ref()).ok_or_else(|| anyhow!("known_a needs a mixture"))?;
        Some(exact_a(spec)?)
    } else {
        None
    };

    let t = Instant::now();
    let (output, mut diagnostics) = match config.pipeline {
        Pipeline::CoinGeneral => {
            let fq = empirical_fq(&data.batch_k, config.big_k).context("stage `frequencies`")?;
            let rec = reconstruct_general(&fq, config.eps_prime()).context("stage `reconstruct`")?;
            let d = json!({"eps_prime": config.eps_prime(), "reconstruction": reconstruction_diag(&rec)});
            (rec.measure, d)
        }
        Pipeline::CoinKspike => {
            let fq = empirical_fq(&data.batch_k, config.big_k).context("stage `frequencies`")?;
            let g = fq_to_moments(&fq)?;
            let rec = reconstruct_kspike_1d(&g, config.k, config.tau, config.coin_slack_constant)
                .context("stage `reconstruct`")?;
            let d = json!({"reconstruction": reconstruction_diag(&rec)});
            (rec.measure, d)
        }
        Pipeline::Kdim => {
            let out = learn_kdim_pipeline(
                &data.batch1,
                &data.batch2,
                &data.batch_k,
                &config.reduction_params(),
                known_a.as_ref(),
                &learn_rng,
            )?;
            let d = json!({
                "reduction": reduction_diag(&out.reduction, config, &audit_rng),
                "dropped_k_snapshots": out.dropped_k,
                "adjust": out.adjust,
            });
            (out.measure, d)
        }
        Pipeline::Kspike => {
            let out = learn_kspike(
                &data.batch1,
                &data.batch2,
                &data.batch_k,
                &config.reduction_params(),
                &config.kspike_params(),
                known_a.as_ref(),
                &learn_rng,
            )?;
            let d = json!({
                "reduction": reduction_diag(&out.reduction, config, &audit_rng),
                "dropped_k_snapshots": out.dropped_k,
                "coin_aperture": config.big_k,
                "coin_aperture_default": 2 * config.k - 1,
                "directions": out.directions,
                "directions_subsampled": out.directions_subsampled,
                "heuristic_directions": out.heuristic_directions,
                "samples_reused_across_directions": true,
                "net_size": out.net_size,
                "lp_slack": out.lp.slack,
                "lp_doublings": out.lp.doublings,
                "lp_max_audited_cost": out.lp.audited_costs.iter().copied().fold(0.0, f64::max),
                "adjust": out.adjust,
            });
            (out.measure, d)
        }
    };
    timings.stages.push(("learn".into(), t.elapsed().as_secs_f64()));

    let t = Instant::now();
    let mut report = RunReport {
        config: config.clone(),
        theory: config.theory(),
        diagnostics: Value::Null,
        tran1: None,
        tran2: None,
        trivial_tran1: None,
        distance_error: None,
        output,
        outputs: Vec::new(),
        timings: Timings::default(),
    };
    if let Some(spec) = &data.truth {
        let mut truth_rng = audit_rng.split(1);
        let mut eval = || -> Result<(f64, f64, Option<f64>)> {
            if config.pipeline.on_simplex() {
                let truth = spec.discretize(config.truth_samples, &mut truth_rng)?;
                let t1 = transport_distance(&report.output, &truth, GroundMetric::L1)?;
                let t2 = transport_distance(&report.output, &truth, GroundMetric::L2)?;
                let trivial = DiscreteMeasure::dirac(estimate_r(&data.batch1)?)?;
                Ok((t1, t2, Some(transport_distance(&trivial, &truth, GroundMetric::L1)?)))
            } else {
                let truth = coin_truth(spec, config.truth_samples, &mut truth_rng)?;
                let t = transport_distance_1d(&report.output, &truth)?;
                Ok((t, t, None))
            }
        };
        match eval() {
            Ok((t1, t2, trivial)) => {
                report.tran1 = Some(t1);
                report.tran2 = Some(t2);
                report.trivial_tran1 = trivial;
            }
            Err(e) => report.distance_error = Some(format!("{e:#}")),
        }
        if let Value::Object(m) = &mut diagnostics {
            m.insert("truth_discretized".into(), json!(!spec.is_discrete()));
        }
    }
    report.diagnostics = diagnostics;
    timings.stages.push(("evaluate".into(), t.elapsed().as_secs_f64()));
    timings.total = start.elapsed().as_secs_f64();
    report.timings = timings;
    Ok(report)
}
