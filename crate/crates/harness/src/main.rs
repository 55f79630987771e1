use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::json;
use snapmix::config::ExperimentConfig;
use snapmix::matrix_io::write_matrix;
use snapmix::run::{generate, read_json, run_pipeline, write_json, Dataset};
use snapmix::sweep::{sweep, write_csv};
use snapmix_core::coin1d::{empirical_fq, fq_to_moments, reconstruct_general, reconstruct_kspike_1d, DEFAULT_SLACK_CONSTANT};
use snapmix_core::kdim::learn_kdim;
use snapmix_core::kspike::{learn_kspike, KspikeParams};
use snapmix_core::rng::tags;
use snapmix_core::subspace::{apply_isotropy, final_adjust_report, invert_isotropy, reduce, Reduction, ReductionParams};
use snapmix_core::{DiscreteMeasure, GroundMetric, MixtureSpec, RngStream, SnapshotBatch};
use std::fs::File;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "snapmix", version, about = "Learn mixtures over a finite alphabet from K-snapshot samples")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    General,
    Kspike,
}

#[derive(Clone, Copy, ValueEnum)]
enum Metric {
    #[value(name = "L1", alias = "l1")]
    L1,
    #[value(name = "L2", alias = "l2")]
    L2,
}

#[derive(Subcommand)]
enum Command {
    /// Draw 1-, 2- and K-snapshot batches from a mixture spec.
    Generate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value_t = 0)]
        n1: usize,
        #[arg(long, default_value_t = 0)]
        n2: usize,
        #[arg(long, default_value_t = 0)]
        nk: usize,
        #[arg(long = "K")]
        big_k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Learn a coin mixture from a two-letter batch.
    #[command(name = "learn-1d")]
    Learn1d {
        #[arg(long)]
        snapshots: PathBuf,
        #[arg(long, value_enum, default_value = "general")]
        method: Method,
        /// Number of spikes for the moment method.
        #[arg(long, default_value_t = 1)]
        k: usize,
        /// Piece accuracy for the general method; 0.5/K when omitted.
        #[arg(long)]
        eps_prime: Option<f64>,
        #[arg(long, default_value_t = 1.0 / 32.0)]
        tau: f64,
        #[arg(long, default_value_t = DEFAULT_SLACK_CONSTANT)]
        slack_constant: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Isotropy, second-moment estimate, truncation and basis.
    Reduce {
        #[arg(long)]
        snapshots1: PathBuf,
        #[arg(long)]
        snapshots2: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        sigma: f64,
        /// Hypercube scale; 5k²/ε when omitted.
        #[arg(long = "C")]
        c: Option<f64>,
        #[arg(long)]
        poissonize: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write the estimated matrix (`.bin` for binary, JSON otherwise).
        #[arg(long)]
        matrix_out: Option<PathBuf>,
    },
    /// Empirical projections onto a reduced basis, mapped back to the simplex.
    #[command(name = "learn-kdim")]
    LearnKdim {
        /// Output of `reduce`.
        #[arg(long)]
        basis: PathBuf,
        #[arg(long)]
        snapshots: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the measure on span(B) in the split alphabet, skipping the final adjustment.
        #[arg(long)]
        raw: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Full k-spike pipeline.
    #[command(name = "learn-kspike")]
    LearnKspike {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        snapshots1: PathBuf,
        #[arg(long)]
        snapshots2: PathBuf,
        #[arg(long = "snapshotsK", alias = "snapshots-k")]
        snapshots_k: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        diag: Option<PathBuf>,
    },
    /// Transportation distance between two measure or mixture files.
    Eval {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, value_enum, default_value = "L1")]
        metric: Metric,
        /// Constituents drawn when a file holds a continuous mixture.
        #[arg(long, default_value_t = 2000)]
        samples: usize,
    },
    /// One run per value of a numeric config field.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        axis: String,
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
        #[arg(long)]
        parallel: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a config end to end and write its report.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Directory with batch files; generated from the config's mixture when omitted.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

/// Optional settings for `learn-kspike`.
#[derive(Deserialize)]
#[serde(deny_unknown_fields, default)]
struct KspikeFileConfig {
    sigma: f64,
    #[serde(rename = "C")]
    c: Option<f64>,
    poissonize: bool,
    seed: u64,
    #[serde(flatten)]
    params: KspikeFileParams,
}

#[derive(Deserialize)]
#[serde(default)]
struct KspikeFileParams {
    #[serde(rename = "R")]
    r: usize,
    tau: f64,
    eps_2: f64,
    coin_slack_constant: f64,
    lp_slack_constant: f64,
    direction_cap: usize,
    net_cap: usize,
}

impl Default for KspikeFileConfig {
    fn default() -> Self {
        Self { sigma: 0.1, c: None, poissonize: false, seed: 0, params: KspikeFileParams::default() }
    }
}

impl Default for KspikeFileParams {
    fn default() -> Self {
        let p = KspikeParams::default();
        Self {
            r: p.r,
            tau: p.tau,
            eps_2: p.epsilon_2,
            coin_slack_constant: p.coin_slack_constant,
            lp_slack_constant: p.lp_slack_constant,
            direction_cap: p.direction_cap,
            net_cap: p.net_cap,
        }
    }
}

fn load_measure(path: &Path, samples: usize) -> Result<DiscreteMeasure> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if let Ok(m) = serde_json::from_str::<DiscreteMeasure>(&text) {
        return Ok(m);
    }
    let spec: MixtureSpec = serde_json::from_str(&text)
        .with_context(|| format!("{} is neither a measure nor a mixture spec", path.display()))?;
    Ok(spec.discretize(samples, &mut RngStream::new(0).split(tags::AUDIT))?)
}

fn main() -> Result<()> {
    snapmix::silence_solver_panics();
    match Cli::parse().command {
        Command::Generate { spec, n1, n2, nk, big_k, seed, out_dir } => {
            let spec: MixtureSpec = read_json(&spec)?;
            generate(&spec, n1, n2, nk, big_k, seed)?.write(&out_dir)?;
        }
        Command::Learn1d { snapshots, method, k, eps_prime, tau, slack_constant, out } => {
            let batch: SnapshotBatch = read_json(&snapshots)?;
            let fq = empirical_fq(&batch, batch.k())?;
            let rec = match method {
                Method::General => reconstruct_general(&fq, eps_prime.unwrap_or(0.5 / batch.k().max(1) as f64))?,
                Method::Kspike => reconstruct_kspike_1d(&fq_to_moments(&fq)?, k, tau, slack_constant)?,
            };
            write_json(&out, &rec.measure)?;
            eprintln!("slack {:.3e}, residual {:.3e}, doublings {}", rec.slack, rec.residual, rec.doublings);
        }
        Command::Reduce { snapshots1, snapshots2, k, epsilon, sigma, c, poissonize, seed, out, matrix_out } => {
            let b1: SnapshotBatch = read_json(&snapshots1)?;
            let b2: SnapshotBatch = read_json(&snapshots2)?;
            let params = ReductionParams {
                k,
                epsilon,
                sigma,
                c: c.unwrap_or(5.0 * (k * k) as f64 / epsilon),
                poissonize,
            };
            let red = reduce(&b1, &b2, &params, None, &RngStream::new(seed).split(tags::LEARN))?;
            if let Some(p) = matrix_out {
                write_matrix(&p, &red.a_tilde)?;
            }
            write_json(&out, &red)?;
            eprintln!("n' = {}, kept {} eigenpairs, h = {}, L = {:.4}", red.map.n_prime, red.truncation.kept, red.basis.h(), red.basis.l);
        }
        Command::LearnKdim { basis, snapshots, seed, raw, out } => {
            let red: Reduction = read_json(&basis)?;
            let batch: SnapshotBatch = read_json(&snapshots)?;
            let iso = apply_isotropy(&batch, &red.map, &mut RngStream::new(seed).split(tags::LEARN))?;
            let learned = learn_kdim(&iso.batch, &red.basis)?;
            if raw {
                write_json(&out, &learned)?;
            } else {
                let (adjusted, rep) = final_adjust_report(&learned, &red.basis, red.basis.epsilon)?;
                write_json(&out, &invert_isotropy(&adjusted, &red.map)?)?;
                eprintln!("dropped {} snapshots, {} projection fallbacks", iso.dropped, rep.fallbacks);
            }
        }
        Command::LearnKspike { n, k, epsilon, snapshots1, snapshots2, snapshots_k, config, out, diag } => {
            let cfg: KspikeFileConfig = match config {
                Some(p) => read_json(&p)?,
                None => KspikeFileConfig::default(),
            };
            let b1: SnapshotBatch = read_json(&snapshots1)?;
            let b2: SnapshotBatch = read_json(&snapshots2)?;
            let bk: SnapshotBatch = read_json(&snapshots_k)?;
            for b in [&b1, &b2, &bk] {
                if b.n() != n {
                    bail!("batch alphabet {} does not match --n {n}", b.n());
                }
            }
            let rp = ReductionParams { k, epsilon, sigma: cfg.sigma, c: cfg.c.unwrap_or(3.0 * k as f64 / epsilon), poissonize: cfg.poissonize };
            let p = cfg.params;
            let kp = KspikeParams {
                r: p.r,
                tau: p.tau,
                epsilon_2: p.eps_2,
                coin_slack_constant: p.coin_slack_constant,
                lp_slack_constant: p.lp_slack_constant,
                direction_cap: p.direction_cap,
                net_cap: p.net_cap,
            };
            let res = learn_kspike(&b1, &b2, &bk, &rp, &kp, None, &RngStream::new(cfg.seed).split(tags::LEARN))?;
            write_json(&out, &res.measure)?;
            if let Some(d) = diag {
                write_json(
                    &d,
                    &json!({
                        "n_prime": res.reduction.map.n_prime,
                        "h": res.reduction.basis.h(),
                        "L": res.reduction.basis.l,
                        "directions": res.directions,
                        "directions_subsampled": res.directions_subsampled,
                        "heuristic_directions": res.heuristic_directions,
                        "net_size": res.net_size,
                        "lp_slack": res.lp.slack,
                        "lp_doublings": res.lp.doublings,
                        "lp_audited_costs": res.lp.audited_costs,
                        "adjust": res.adjust,
                    }),
                )?;
            }
        }
        Command::Eval { a, b, metric, samples } => {
            let (ma, mb) = (load_measure(&a, samples)?, load_measure(&b, samples)?);
            let metric = match metric {
                Metric::L1 => GroundMetric::L1,
                Metric::L2 => GroundMetric::L2,
            };
            println!("{}", snapmix_core::measures::transport_distance(&ma, &mb, metric)?);
        }
        Command::Sweep { config, axis, values, parallel, out } => {
            let template: ExperimentConfig = read_json(&config)?;
            let rows = sweep(&template, &axis, &values, parallel);
            write_csv(&rows, File::create(&out).with_context(|| format!("creating {}", out.display()))?)?;
        }
        Command::Run { config, data, out_dir } => {
            let cfg: ExperimentConfig = read_json(&config)?;
            let dataset = match data {
                Some(dir) => Dataset::read(&dir)?,
                None => snapmix::generate_for(&cfg)?,
            };
            let mut report = run_pipeline(&cfg, &dataset)?;
            std::fs::create_dir_all(&out_dir)?;
            let measure_path = out_dir.join("measure.json");
            let report_path = out_dir.join("report.json");
            write_json(&measure_path, &report.output)?;
            report.outputs = vec![measure_path.display().to_string(), report_path.display().to_string()];
            write_json(&report_path, &report)?;
            if let (Some(t1), Some(t2)) = (report.tran1, report.tran2) {
                println!("tran1 {t1:.6} tran2 {t2:.6}");
            }
        }
    }
    Ok(())
}
