//! Acceptance suite. Each criterion prints one PASS/FAIL line; any failure
//! makes the binary exit non-zero.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde_json::json;

use snapmix::sweep::{read_csv, write_csv};
use snapmix::{generate_for, run_pipeline, sweep, ExperimentConfig};
use snapmix_core::coin1d::{empirical_fq, exact_fq, exact_moments, fq_to_moments, reconstruct_with_slack, FqKind, FrequencyVector};
use snapmix_core::kdim::learn_kdim;
use snapmix_core::measures::{generate_batch, transport_distance, transport_distance_1d};
use snapmix_core::polynomials::{bernstein_eval, build_piecewise_bernstein, chebyshev_to_bernstein, pascal_matrix, shifted_chebyshev_eval};
use snapmix_core::subspace::{build_basis, invert_isotropy, verify_basis, Basis, IsotropyMap};
use snapmix_core::{DiscreteMeasure, GroundMetric, MixtureSpec, RngStream};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($arg:tt)*) => {
        if !$cond {
            return Err(format!($($arg)*));
        }
    };
}

fn ok<T, E: std::fmt::Display>(r: std::result::Result<T, E>) -> Result<T, String> {
    r.map_err(|e| format!("{e:#}"))
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        0.5 * (xs[m - 1] + xs[m])
    }
}

fn random_line_measure(rng: &mut RngStream, max_atoms: usize) -> DiscreteMeasure {
    let m = rng.random_range(1..=max_atoms);
    let xs: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
    let ws: Vec<f64> = (0..m).map(|_| rng.random::<f64>() + 0.05).collect();
    let total: f64 = ws.iter().sum();
    let ws: Vec<f64> = ws.iter().map(|w| w / total).collect();
    DiscreteMeasure::on_line(&xs, &ws).unwrap()
}

const COIN_HEADS: [f64; 3] = [0.2, 0.5, 0.8];
const COIN_WEIGHTS: [f64; 3] = [0.3, 0.3, 0.4];

fn coin_rate() -> Outcome {
    let spec = MixtureSpec::coins(&COIN_HEADS, &COIN_WEIGHTS).map_err(|e| e.to_string())?;
    let ks = [16.0, 64.0, 256.0];
    let mut rows = Vec::new();
    for seed in 0..5u64 {
        let template: ExperimentConfig = ok(serde_json::from_value(json!({
            "pipeline": "coin-general", "n": 2, "k": 3, "K": 16, "nk": 100000, "seed": seed,
            "mixture": spec,
        })))?;
        rows.extend(sweep(&template, "K", &ks, true));
    }
    let dir = ok(tempfile::tempdir())?;
    let path = dir.path().join("sweep.csv");
    ok(write_csv(&rows, ok(std::fs::File::create(&path))?))?;
    let rows = ok(read_csv(ok(std::fs::File::open(&path))?))?;
    ensure!(rows.len() == 15, "expected 15 sweep rows, got {}", rows.len());
    let mut medians = Vec::new();
    for &k in &ks {
        let t: Vec<f64> = rows.iter().filter(|r| r.value == k).map(|r| r.tran1.ok_or("missing tran")).collect::<Result<_, _>>()?;
        medians.push(median(t));
    }
    let lx: Vec<f64> = ks.iter().map(|k| k.ln()).collect();
    let ly: Vec<f64> = medians.iter().map(|t| t.ln()).collect();
    let mx = lx.iter().sum::<f64>() / 3.0;
    let my = ly.iter().sum::<f64>() / 3.0;
    let slope = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / lx.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    let detail = format!("medians {medians:.4?}, slope {slope:.3}");
    ensure!(medians.windows(2).all(|w| w[1] < w[0]), "medians not decreasing: {detail}");
    ensure!(slope <= -0.35, "slope too shallow: {detail}");
    Ok(detail)
}

fn coin_lp_feasibility() -> Outcome {
    let k = 8;
    let truth = ok(DiscreteMeasure::on_line(&[0.23, 0.51, 0.86], &COIN_WEIGHTS))?;
    let basis = ok(build_piecewise_bernstein(k, 0.05))?;
    let mut hist = vec![0.0; basis.pieces()];
    let mut width: f64 = 0.0;
    for (p, w) in truth.iter() {
        let j = basis.piece_of(p[0]);
        hist[j] += w;
        width = width.max(basis.breakpoints[j + 1] - basis.breakpoints[j]);
    }
    let values: Vec<f64> = (0..=k).map(|i| basis.values[i].iter().zip(&hist).map(|(b, z)| b * z).sum()).collect();
    let fq = ok(FrequencyVector::new(values, FqKind::Exact))?;
    let rec = ok(reconstruct_with_slack(&fq, &basis, 0.0))?;
    ensure!(rec.slack == 0.0 && rec.doublings == 0, "histogram infeasible at zero slack (slack {})", rec.slack);
    let t = ok(transport_distance_1d(&rec.measure, &truth))?;
    let detail = format!("pieces {}, residual {:.1e}, tran {t:.4}, piece width {width:.4}", basis.pieces(), rec.residual);
    ensure!(t <= width + 1e-6, "transport exceeds piece width: {detail}");
    Ok(detail)
}

fn pascal_identity() -> Outcome {
    let mut rng = RngStream::new(3);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let m = random_line_measure(&mut rng, 6);
        for k in 1..=9 {
            let fq = ok(exact_fq(&m, k))?;
            let nfq = DVector::from_vec(ok(fq.normalized())?.values);
            let g = ok(exact_moments(&m, k))?;
            let lhs = pascal_matrix(k) * nfq;
            let moments = ok(fq_to_moments(&fq))?.values;
            for i in 0..=k {
                worst = worst.max((lhs[i] - g[i]).abs()).max((moments[i] - g[i]).abs());
            }
        }
    }
    ensure!(worst <= 1e-9, "max deviation {worst:.2e}");
    Ok(format!("max deviation {worst:.2e}"))
}

fn basis_change() -> Outcome {
    let mut rng = RngStream::new(4);
    let mut worst: f64 = 0.0;
    for k in 1..=8 {
        let m = ok(chebyshev_to_bernstein(k))?;
        for _ in 0..20 {
            let t: Vec<f64> = (0..=k).map(|_| rng.random_range(-1.0..=1.0)).collect();
            let c = m.apply(&t);
            for g in 0..200 {
                let x = g as f64 / 199.0;
                let cheb: f64 = t.iter().enumerate().map(|(i, ti)| ti * shifted_chebyshev_eval(i, x)).sum();
                let mut bern = 0.0;
                for (i, ci) in c.iter().enumerate() {
                    bern += ci * ok(bernstein_eval(i, k, x))?;
                }
                worst = worst.max((cheb - bern).abs());
            }
        }
    }
    ensure!(worst <= 1e-6, "sup error {worst:.2e}");
    Ok(format!("sup error {worst:.2e}"))
}

fn transport_oracle() -> Outcome {
    let mut rng = RngStream::new(5);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let p = random_line_measure(&mut rng, 8);
        let q = random_line_measure(&mut rng, 8);
        let lp = ok(transport_distance(&p, &q, GroundMetric::L1))?;
        let cdf = ok(transport_distance_1d(&p, &q))?;
        worst = worst.max((lp - cdf).abs());
    }
    ensure!(worst <= 1e-8, "LP and CDF values differ by {worst:.2e}");
    let mut axiom: f64 = 0.0;
    for _ in 0..100 {
        let dim = rng.random_range(1..=4);
        let point_measure = |rng: &mut RngStream| {
            let m = rng.random_range(1..=5);
            let pts: Vec<Vec<f64>> = (0..m).map(|_| (0..dim).map(|_| rng.random::<f64>()).collect()).collect();
            DiscreteMeasure::uniform(pts).unwrap()
        };
        let (a, b, c) = (point_measure(&mut rng), point_measure(&mut rng), point_measure(&mut rng));
        for metric in [GroundMetric::L1, GroundMetric::L2] {
            let ab = ok(transport_distance(&a, &b, metric))?;
            let ba = ok(transport_distance(&b, &a, metric))?;
            let bc = ok(transport_distance(&b, &c, metric))?;
            let ac = ok(transport_distance(&a, &c, metric))?;
            axiom = axiom.max((ab - ba).abs()).max(ac - ab - bc);
        }
    }
    ensure!(axiom <= 1e-8, "metric axiom violated by {axiom:.2e}");
    Ok(format!("oracle gap {worst:.2e}, axiom slack {axiom:.2e}"))
}

/// `A′ = G Gᵀ / h` for `h` random directions in the simplex.
fn random_bases() -> Result<Vec<(Basis, DMatrix<f64>)>, String> {
    let mut rng = RngStream::new(6);
    let mut out = Vec::new();
    for case in 0..20 {
        let h = 1 + case % 3;
        let n = [5, 20, 50][(case / 3) % 3];
        let g = DMatrix::from_fn(n, h, |_, _| rng.random::<f64>());
        let sums = g.row_sum();
        let g = DMatrix::from_fn(n, h, |i, j| g[(i, j)] / sums[j]);
        let a = &g * g.transpose() / h as f64;
        let epsilon = 0.5;
        let c = 5.0 * (h * h) as f64 / epsilon;
        let basis = ok(build_basis(&a, c, epsilon, n, h))?;
        out.push((basis, a));
    }
    Ok(out)
}

fn random_direction(rng: &mut RngStream, r: usize) -> DVector<f64> {
    DVector::from_fn(r, |_, _| StandardNormal.sample(rng))
}

fn ellipsoid_sandwich() -> Outcome {
    let bases = random_bases()?;
    let mut rng = RngStream::new(7);
    let (mut inner, mut outer): (f64, f64) = (0.0, 0.0);
    for (basis, _) in &bases {
        let ell = basis.ellipsoid.as_ref().ok_or("basis without ellipsoid")?;
        let q = &basis.span * (basis.n as f64 / basis.c);
        let r = q.ncols();
        for _ in 0..1000 {
            let z = random_direction(&mut rng, r);
            let y = &z / (ell.m_star * ell.polar_form(z.as_slice())).sqrt();
            inner = inner.max((&q * &y).amax());
            let y = &z / (&q * &z).amax();
            outer = outer.max(ell.m_star * ell.polar_form(y.as_slice()) / r as f64);
        }
    }
    ensure!(inner <= 1.0 + 1e-8, "inner ellipsoid leaves the polytope: {inner:.3e}");
    ensure!(outer <= 1.0 + 1e-6, "polytope leaves the scaled ellipsoid: {outer:.3e}");
    Ok(format!("{} subspaces, inner max {inner:.9}, outer max {outer:.9}", bases.len()))
}

fn basis_properties() -> Outcome {
    let bases = random_bases()?;
    let mut rng = RngStream::new(8);
    let mut worst: f64 = 0.0;
    for (basis, a) in &bases {
        let rep = ok(verify_basis(basis, a, basis.c, basis.epsilon, 1000, &mut rng))?;
        worst = worst
            .max(rep.sup_norm_ratio)
            .max(rep.l1_upper_ratio)
            .max(rep.projection_ratio)
            .max(rep.residual_ratio);
    }
    Ok(format!("{} bases, worst bound ratio {worst:.3}", bases.len()))
}

fn kspike_config(seed: u64, known_a: bool) -> Result<ExperimentConfig, String> {
    let mut a1 = vec![0.0; 20];
    let mut a2 = vec![0.0; 20];
    for i in 0..10 {
        a1[i] = (i + 1) as f64 / 55.0;
        a2[10 + i] = (10 - i) as f64 / 55.0;
    }
    let spec = ok(MixtureSpec::kspike(vec![(a1, 0.5), (a2, 0.5)]))?;
    ok(serde_json::from_value(json!({
        "pipeline": "kspike", "n": 20, "k": 2, "K": 3, "epsilon": 0.5,
        "n1": 100000, "n2": 1000000, "nk": 1000000, "seed": seed,
        "known_a": known_a, "mixture": spec,
    })))
}

fn kspike_recovery() -> Outcome {
    let mut trans = Vec::new();
    for seed in 0..5u64 {
        let config = kspike_config(seed, false)?;
        let data = ok(generate_for(&config))?;
        let rep = ok(run_pipeline(&config, &data))?;
        let t = rep.tran1.ok_or("missing tran1")?;
        let trivial = rep.trivial_tran1.ok_or("missing trivial tran1")?;
        ensure!(t <= trivial, "seed {seed}: tran1 {t:.4} above trivial {trivial:.4}");
        ensure!(
            rep.diagnostics["reduction"]["basis_check"]["pass"] == json!(true),
            "seed {seed}: basis check failed"
        );
        trans.push(t);
    }
    let config = kspike_config(0, true)?;
    let data = ok(generate_for(&config))?;
    let reference = ok(run_pipeline(&config, &data))?.tran1.ok_or("missing tran1")?;
    let med = median(trans.clone());
    let detail = format!("tran1 {trans:.4?}, median {med:.4}, exact-matrix reference {reference:.4}");
    ensure!(reference <= 0.3, "threshold not met with the exact matrix: {detail}");
    ensure!(med <= 0.3, "median above 0.3: {detail}");
    Ok(detail)
}

fn kdim_trend() -> Outcome {
    let n = 20;
    let u: Vec<f64> = (0..n).map(|i| (i + 1) as f64 / 210.0).collect();
    let v: Vec<f64> = (0..n).map(|i| (n - i) as f64 / 210.0).collect();
    let spec = ok(MixtureSpec::segment(u.clone(), v.clone()))?;
    let d = DVector::from_iterator(n, u.iter().zip(&v).map(|(a, b)| a - b));
    let d = &d / d.norm();
    let basis = ok(Basis::from_columns(DMatrix::from_column_slice(n, 1, d.as_slice()), 1.0, 0.5))?;
    let (cu, cv) = (basis.coords(&u)[0], basis.coords(&v)[0]);
    let m = 10_000;
    let xs: Vec<f64> = (0..m).map(|j| cu + (cv - cu) * (j as f64 + 0.5) / m as f64).collect();
    let truth = ok(DiscreteMeasure::on_line(&xs, &vec![1.0 / m as f64; m]))?;
    let mut medians = Vec::new();
    for k in [32, 128, 512] {
        let mut t = Vec::new();
        for seed in 0..5u64 {
            let mut rng = RngStream::new(seed).split(k as u64);
            let batch = ok(generate_batch(&spec, 2000, k, &mut rng))?;
            let learned = ok(learn_kdim(&batch, &basis))?;
            let coords = learned.push_forward(|p| vec![basis.coords(p)[0]]).map_err(|e| e.to_string())?;
            t.push(ok(transport_distance_1d(&coords, &truth))?);
        }
        medians.push(median(t));
    }
    let detail = format!("median tran2 {medians:.5?}");
    ensure!(medians.windows(2).all(|w| w[1] < w[0]), "not decreasing: {detail}");
    Ok(detail)
}

fn moment_lipschitz() -> Outcome {
    let mut rng = RngStream::new(10);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..100 {
        let a = random_line_measure(&mut rng, 6);
        let b = random_line_measure(&mut rng, 6);
        let t = ok(transport_distance_1d(&a, &b))?;
        let ga = ok(exact_moments(&a, 9))?;
        let gb = ok(exact_moments(&b, 9))?;
        for i in 1..=9 {
            worst = worst.max((ga[i] - gb[i]).abs() - i as f64 * t);
        }
    }
    ensure!(worst <= 1e-9, "bound exceeded by {worst:.2e}");
    Ok(format!("max excess {worst:.2e}"))
}

fn frequency_concentration() -> Outcome {
    let (k, kappa, delta) = (10usize, 0.02, 0.05);
    let n = ((k as f64 / delta).ln() / (kappa * kappa)).ceil() as usize;
    let spec = ok(MixtureSpec::coins(&COIN_HEADS, &COIN_WEIGHTS))?;
    let truth = ok(DiscreteMeasure::on_line(&COIN_HEADS, &COIN_WEIGHTS))?;
    let exact = ok(exact_fq(&truth, k))?;
    let mut hits = 0;
    for trial in 0..100u64 {
        let mut rng = RngStream::new(trial).split(11);
        let batch = ok(generate_batch(&spec, n, k, &mut rng))?;
        let fq = ok(empirical_fq(&batch, k))?;
        let dev = fq.values.iter().zip(&exact.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        hits += usize::from(dev <= kappa);
    }
    ensure!(hits >= 95, "bound held in {hits}/100 trials");
    Ok(format!("N = {n}, bound held in {hits}/100 trials"))
}

fn isotropy_round_trip() -> Outcome {
    let mut rng = RngStream::new(12);
    let mut mass_err: f64 = 0.0;
    for trial in 0..200 {
        let n = rng.random_range(2..=12);
        let eliminate = trial % 2 == 1;
        let mut copies: Vec<usize> = (0..n).map(|_| rng.random_range(1..=7)).collect();
        if eliminate {
            copies[rng.random_range(0..n)] = 0;
        }
        let map = ok(IsotropyMap::from_copies(copies, 0.1, vec![1.0 / n as f64; n]))?;
        let mut p: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let s: f64 = p.iter().sum();
        p.iter_mut().for_each(|x| *x /= s);
        let split = ok(DiscreteMeasure::dirac(map.split_point(&p)))?;
        let back = ok(invert_isotropy(&split, &map))?;
        let q = &back.points()[0];
        let kept: f64 = (0..n).filter(|&i| !map.is_eliminated(i)).map(|i| p[i]).sum();
        mass_err = mass_err.max((q.iter().sum::<f64>() - kept).abs()).max((back.total_mass() - 1.0).abs());
        if !eliminate {
            ensure!(*q == p, "round trip changed {p:?} into {q:?}");
        }
    }
    ensure!(mass_err <= 1e-12, "mass drift {mass_err:.2e}");
    Ok(format!("200 maps, exact without elimination, mass drift {mass_err:.1e}"))
}

fn main() {
    snapmix::silence_solver_panics();
    let criteria: [(&str, u64, fn() -> Outcome); 12] = [
        ("coin-problem rate", 120, coin_rate),
        ("coin LP feasibility", 30, coin_lp_feasibility),
        ("Pascal moment identity", 30, pascal_identity),
        ("basis-change identity", 30, basis_change),
        ("transport oracle cross-validation", 60, transport_oracle),
        ("ellipsoid sandwich", 120, ellipsoid_sandwich),
        ("basis properties", 60, basis_properties),
        ("end-to-end k-spike recovery", 600, kspike_recovery),
        ("k-dim learner trend", 300, kdim_trend),
        ("moment Lipschitz property", 30, moment_lipschitz),
        ("frequency concentration", 120, frequency_concentration),
        ("isotropy round trip", 30, isotropy_round_trip),
    ];
    let mut failures = 0;
    for (i, (name, budget, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(d) if elapsed > Duration::from_secs(*budget) => Err(format!("{d}; over the {budget} s budget")),
            o => o,
        };
        match outcome {
            Ok(d) => println!("PASS #{} {name}: {d} ({:.1} s)", i + 1, elapsed.as_secs_f64()),
            Err(d) => {
                failures += 1;
                println!("FAIL #{} {name}: {d} ({:.1} s)", i + 1, elapsed.as_secs_f64());
            }
        }
    }
    println!("acceptance: {} passed, {failures} failed", criteria.len() - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
