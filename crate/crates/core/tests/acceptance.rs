//! Acceptance suite. Runs every criterion in order, prints one PASS/FAIL
//! line each, and exits nonzero if any failed.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use feattrack::dictlearn::{odl_step, surrogate_objective, update_columns, Dictionary, OdlState, UpdatePolicy};
use feattrack::encode::{Encoder, EncoderMethod, EncoderSpec};
use feattrack::lasso::{lasso_objective, lasso_solve};
use feattrack::lssvm::{train_matrix, BiasMode};
use feattrack::metrics::{cle, evaluate, vor};
use feattrack::patchgrid::{extract_normalized, PatchGridSpec};
use feattrack::pyrpool::{pyramid_max_pool, pyramid_max_pool_matrix, PyramidSpec};
use feattrack::seqio::{synth_sequence, BoundingBox, SynthParams};
use feattrack::tracker::{track_sequence_with, DictUpdateMode, TrackerConfig};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn unit_dict(rng: &mut ChaCha8Rng, m: usize, n: usize) -> DMatrix<f64> {
    let mut d = DMatrix::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0));
    for mut c in d.column_iter_mut() {
        let norm = c.norm();
        c /= norm;
    }
    d
}

fn bb(x: i32, y: i32, w: i32, h: i32) -> BoundingBox {
    BoundingBox::new(x, y, w, h).unwrap()
}

// ---------------------------------------------------------------- 1

fn feature_dimension() -> Outcome {
    ensure(PyramidSpec::default().feature_dim(100) == 1400, || "feature_dim(100) != 1400".into())?;
    let seq = synth_sequence(&SynthParams {
        n_frames: 1,
        ..SynthParams::default()
    })
    .map_err(|e| e.to_string())?;
    let target = seq.truth.as_ref().unwrap()[0];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let dict = Dictionary::new(unit_dict(&mut rng, 64, 100)).unwrap();
    let patches = extract_normalized(&seq.frames[0], &target, &PatchGridSpec::default()).unwrap();
    let codes = Encoder::new(&dict, EncoderSpec::default()).unwrap().encode(&patches).unwrap();
    let f = pyramid_max_pool(&codes, 8, &PyramidSpec::default()).unwrap();
    ensure(f.len() == 1400, || format!("pooled length {}", f.len()))?;
    Ok("length 1400".into())
}

// ---------------------------------------------------------------- 2

/// Best objective over every support of size ≤ 3 and every sign pattern,
/// each solved as an equality-constrained least-squares problem.
fn enumerate_supports(d: &DMatrix<f64>, x: &DVector<f64>, lambda: f64) -> (f64, DVector<f64>) {
    let n = d.ncols();
    let objective = |a: &DVector<f64>| 0.5 * (x - d * a).norm_squared() + lambda * a.lp_norm(1);
    let mut best_a = DVector::zeros(n);
    let mut best = objective(&best_a);
    let mut supports: Vec<Vec<usize>> = Vec::new();
    for i in 0..n {
        supports.push(vec![i]);
        for j in i + 1..n {
            supports.push(vec![i, j]);
            for k in j + 1..n {
                supports.push(vec![i, j, k]);
            }
        }
    }
    for s in &supports {
        let ds = d.select_columns(s);
        let gram = ds.transpose() * &ds;
        let lu = gram.lu();
        let rhs0 = ds.transpose() * x;
        for mask in 0..(1u32 << s.len()) {
            let signs = DVector::from_fn(s.len(), |i, _| if mask >> i & 1 == 1 { -1.0 } else { 1.0 });
            let Some(z) = lu.solve(&(&rhs0 - &signs * lambda)) else { continue };
            if (0..s.len()).any(|i| z[i] * signs[i] <= 0.0) {
                continue;
            }
            let mut a = DVector::zeros(n);
            for (i, &j) in s.iter().enumerate() {
                a[j] = z[i];
            }
            let f = objective(&a);
            if f < best {
                best = f;
                best_a = a;
            }
        }
    }
    (best, best_a)
}

/// Largest KKT violation, computed from D and x directly.
fn kkt_violation(d: &DMatrix<f64>, x: &DVector<f64>, a: &DVector<f64>, lambda: f64) -> f64 {
    let r = x - d * a;
    (0..d.ncols())
        .map(|j| {
            let c = d.column(j).dot(&r);
            if a[j] == 0.0 {
                (c.abs() - lambda).max(0.0)
            } else {
                (c - lambda * a[j].signum()).abs()
            }
        })
        .fold(0.0, f64::max)
}

fn lasso_optimality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let lambdas = [0.1, 0.3, 1.0];
    let (mut accepted, mut drawn) = (0, 0);
    let mut worst_gap = 0.0f64;
    let mut worst_kkt = 0.0f64;
    while accepted < 200 {
        drawn += 1;
        let lambda = lambdas[accepted % 3];
        let d = unit_dict(&mut rng, 8, 12);
        let mut a0 = DVector::zeros(12);
        for _ in 0..rng.gen_range(1..=3) {
            a0[rng.gen_range(0..12)] = rng.gen_range(-2.0..2.0);
        }
        let x = &d * a0 + DVector::from_fn(8, |_, _| rng.gen_range(-0.05..0.05));
        let (oracle, oracle_a) = enumerate_supports(&d, &x, lambda);
        // the enumeration is only exhaustive when the optimum has ≤ 3 nonzeros
        if kkt_violation(&d, &x, &oracle_a, lambda) > 1e-9 {
            continue;
        }
        accepted += 1;
        let a = lasso_solve(&d, x.as_slice(), lambda, 1e-6, 1000).map_err(|e| e.to_string())?;
        let f = lasso_objective(&d, x.as_slice(), &a, lambda);
        worst_gap = worst_gap.max((f - oracle).abs());
        worst_kkt = worst_kkt.max(kkt_violation(&d, &x, &a, lambda));
    }
    ensure(worst_gap <= 1e-6, || format!("objective gap {worst_gap:e}"))?;
    ensure(worst_kkt <= 1e-6, || format!("KKT violation {worst_kkt:e}"))?;
    Ok(format!("200 problems ({drawn} drawn), max gap {worst_gap:.1e}, max KKT {worst_kkt:.1e}"))
}

// ---------------------------------------------------------------- 3

/// Minimizes Σ(wᵀxᵢ + b − yᵢ)² + γ‖w‖² through its (d+1)-dimensional
/// normal equations.
fn normal_equations(x: &DMatrix<f64>, y: &[f64], gamma: f64) -> (DVector<f64>, f64) {
    let (d, n) = x.shape();
    let mut aug = DMatrix::from_element(d + 1, n, 1.0);
    aug.rows_mut(0, d).copy_from(x);
    let mut lhs = &aug * aug.transpose();
    for i in 0..d {
        lhs[(i, i)] += gamma;
    }
    let rhs = &aug * DVector::from_column_slice(y);
    let sol = lhs.lu().solve(&rhs).expect("regularized system is nonsingular");
    (sol.rows(0, d).clone_owned(), sol[d])
}

fn lssvm_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let gammas = [1e-3, 1e-1, 1.0];
    let (mut worst_w, mut worst_b, mut worst_v) = (0.0f64, 0.0f64, 0.0f64);
    for trial in 0..100 {
        let gamma = gammas[trial % 3];
        let x = DMatrix::from_fn(14, 30, |_, _| rng.gen_range(-1.0..1.0));
        let n_pos = rng.gen_range(1..30);
        let mut y: Vec<f64> = (0..30).map(|i| if i < n_pos { 1.0 } else { -1.0 }).collect();
        for i in (1..30).rev() {
            y.swap(i, rng.gen_range(0..=i));
        }
        let model = train_matrix(&x, &y, gamma, BiasMode::Corrected).map_err(|e| e.to_string())?;
        let (w, b) = normal_equations(&x, &y, gamma);
        worst_w = worst_w.max((&model.w - &w).norm() / w.norm().max(1e-300));
        worst_b = worst_b.max((model.b - b).abs());

        let verbatim = train_matrix(&x, &y, gamma, BiasMode::Verbatim).map_err(|e| e.to_string())?;
        ensure(verbatim.w == model.w, || "verbatim mode changed w".into())?;
        let nf = 30.0;
        let (np, nn) = (n_pos as f64, (30 - n_pos) as f64);
        let mu = x.column_sum() / nf;
        let expected = np * nn / nf - mu.dot(&verbatim.w);
        worst_v = worst_v.max((verbatim.b - expected).abs() / expected.abs().max(1.0));
    }
    ensure(worst_w <= 1e-8, || format!("w relative error {worst_w:e}"))?;
    ensure(worst_b <= 1e-8, || format!("b error {worst_b:e}"))?;
    ensure(worst_v <= 1e-12, || format!("verbatim bias error {worst_v:e}"))?;
    Ok(format!("w rel {worst_w:.1e}, b {worst_b:.1e}, verbatim b {worst_v:.1e}"))
}

// ---------------------------------------------------------------- 4

fn odl_monotonicity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_rise = f64::NEG_INFINITY;
    let mut worst_norm = 0.0f64;
    for _ in 0..500 {
        let m = rng.gen_range(4..20);
        let n = rng.gen_range(2..30);
        let mut dict = Dictionary::new(unit_dict(&mut rng, m, n)).unwrap();
        let mut state = OdlState::zeros(m, n, rng.gen_range(1..64));
        let lambda = rng.gen_range(0.01..0.5);
        for _ in 0..rng.gen_range(1..4) {
            let batch = DMatrix::from_fn(m, rng.gen_range(1..40), |_, _| rng.gen_range(-1.0..1.0));
            odl_step(&mut dict, &mut state, &batch, lambda).map_err(|e| e.to_string())?;
            worst_norm = worst_norm.max(dict.max_column_norm());
        }
        // a pass from an arbitrary feasible start, statistics held fixed
        let mut basis = unit_dict(&mut rng, m, n) * rng.gen_range(0.1..1.0);
        let before = surrogate_objective(&basis, &state.a, &state.b);
        update_columns(&mut basis, &state.a, &state.b);
        let after = surrogate_objective(&basis, &state.a, &state.b);
        worst_rise = worst_rise.max(after - before);
        worst_norm = worst_norm.max(basis.column_iter().map(|c| c.norm()).fold(0.0, f64::max));
    }
    ensure(worst_rise <= 1e-9, || format!("surrogate rose by {worst_rise:e}"))?;
    ensure(worst_norm <= 1.0 + 1e-9, || format!("column norm {worst_norm}"))?;
    Ok(format!("500 trials, max change {worst_rise:.1e}, max norm {worst_norm:.12}"))
}

// ---------------------------------------------------------------- 5

fn encoder_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let m = rng.gen_range(4..40);
        let n = rng.gen_range(2..60);
        let dict = Dictionary::new(unit_dict(&mut rng, m, n) * rng.gen_range(0.2..1.0)).unwrap();
        let x = DMatrix::from_fn(m, 1, |_, _| rng.gen_range(-3.0..3.0));
        let enc = |method: EncoderMethod, k: usize| {
            let spec = EncoderSpec {
                k,
                ..EncoderSpec::with_method(method)
            };
            Encoder::new(&dict, spec).unwrap().encode_matrix(&x).unwrap()
        };
        let sa = enc(EncoderMethod::SoftAssignment, 10.min(n));
        ensure((sa.sum() - 1.0).abs() <= 1e-9, || format!("SA sums to {}", sa.sum()))?;
        let k = rng.gen_range(1..=n);
        let lsa = enc(EncoderMethod::LocalizedSoftAssignment, k);
        let nnz = lsa.iter().filter(|v| **v != 0.0).count();
        ensure(nnz <= k, || format!("LSA has {nnz} nonzeros for k = {k}"))?;
        let full = enc(EncoderMethod::LocalizedSoftAssignment, n);
        let diff = (&full - &sa).amax();
        ensure(diff <= 1e-12, || format!("LSA(k = n) differs from SA by {diff:e}"))?;
        for method in [EncoderMethod::SoftThreshold, EncoderMethod::TriangleKMeans, EncoderMethod::SparseCoding] {
            let c = enc(method, 10.min(n));
            ensure(c.iter().all(|v| *v >= 0.0), || format!("{method} produced a negative entry"))?;
        }
        let sc = enc(EncoderMethod::SparseCoding, 10.min(n));
        let lasso = lasso_solve(&dict.basis, x.as_slice(), 0.25, 1e-6, 1000).map_err(|e| e.to_string())?;
        ensure(
            sc.iter().zip(lasso.iter()).all(|(s, l)| *s == l.max(0.0)),
            || "SC differs from max(0, lasso)".into(),
        )?;
    }
    Ok("100 pairs".into())
}

// ---------------------------------------------------------------- 6

#[derive(Debug, Clone)]
struct PoolCase {
    levels: Vec<usize>,
    n: usize,
    p: usize,
    w: usize,
    h: usize,
    positions: Vec<(usize, usize)>,
    codes: Vec<f64>,
}

fn pooling_case() -> impl Strategy<Value = PoolCase> {
    (prop::collection::vec(1usize..5, 1..4), 2usize..5, 8usize..40, 8usize..40, 1usize..6).prop_flat_map(
        |(levels, p, w, h, n)| {
            prop::collection::vec((0..=h - p, 0..=w - p), 1..12).prop_flat_map(move |positions| {
                let levels = levels.clone();
                prop::collection::vec(-2.0f64..2.0, positions.len() * n).prop_map(move |codes| PoolCase {
                    levels: levels.clone(),
                    n,
                    p,
                    w,
                    h,
                    positions: positions.clone(),
                    codes,
                })
            })
        },
    )
}

fn pooling_properties() -> Outcome {
    let mut runner = TestRunner::new(Config {
        cases: 256,
        failure_persistence: None,
        ..Config::default()
    });
    runner
        .run(&(pooling_case(), any::<u64>()), |(case, seed)| {
            let PoolCase { levels, n, p, w, h, positions, codes } = case;
            let spec = PyramidSpec::new(levels).unwrap();
            let count = positions.len();
            let mat = DMatrix::from_column_slice(n, count, &codes);
            let base = pyramid_max_pool_matrix(&mat, &positions, w, h, p, &spec).unwrap();
            prop_assert_eq!(base.len(), n * spec.levels.iter().map(|s| s * s).sum::<usize>());

            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut order: Vec<usize> = (0..count).collect();
            for i in (1..count).rev() {
                order.swap(i, rng.gen_range(0..=i));
            }
            let perm_pos: Vec<(usize, usize)> = order.iter().map(|&i| positions[i]).collect();
            let perm = mat.select_columns(&order);
            let permuted = pyramid_max_pool_matrix(&perm, &perm_pos, w, h, p, &spec).unwrap();
            prop_assert_eq!(&permuted, &base);

            let mut raised = mat.clone();
            let (r, c) = (rng.gen_range(0..n), rng.gen_range(0..count));
            raised[(r, c)] += rng.gen_range(0.0..3.0);
            let up = pyramid_max_pool_matrix(&raised, &positions, w, h, p, &spec).unwrap();
            prop_assert!(up.0.iter().zip(base.0.iter()).all(|(a, b)| a >= b));

            let single = DMatrix::from_element(n, 1, 1.0);
            let one = pyramid_max_pool_matrix(&single, &positions[..1], w, h, p, &PyramidSpec::default()).unwrap();
            let lit = (0..14).filter(|cell| one.0.rows(cell * n, n).iter().any(|v| *v != 0.0)).count();
            prop_assert_eq!(lit, 3);
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok("256 randomized cases".into())
}

// ---------------------------------------------------------------- 7

fn raster_vor(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inside = |r: &BoundingBox, x: i32, y: i32| x >= r.x && x < r.x + r.w && y >= r.y && y < r.y + r.h;
    let (x0, y0) = (a.x.min(b.x), a.y.min(b.y));
    let (x1, y1) = ((a.x + a.w).max(b.x + b.w), (a.y + a.h).max(b.y + b.h));
    let (mut inter, mut union) = (0u64, 0u64);
    for y in y0..y1 {
        for x in x0..x1 {
            let (ia, ib) = (inside(a, x, y), inside(b, x, y));
            inter += (ia && ib) as u64;
            union += (ia || ib) as u64;
        }
    }
    inter as f64 / union as f64
}

fn metric_oracles() -> Outcome {
    ensure(vor(&bb(3, 4, 10, 12), &bb(3, 4, 10, 12)) == 1.0, || "identical vor".into())?;
    ensure(vor(&bb(0, 0, 10, 10), &bb(20, 20, 5, 5)) == 0.0, || "disjoint vor".into())?;
    ensure((vor(&bb(0, 0, 10, 10), &bb(5, 0, 10, 10)) - 1.0 / 3.0).abs() < 1e-15, || "1/3 example".into())?;
    ensure(cle(&bb(2, 2, 6, 6), &bb(2, 2, 6, 6)) == 0.0, || "identical cle".into())?;
    ensure(cle(&bb(0, 0, 10, 10), &bb(3, 4, 10, 10)) == 5.0, || "3-4-5 cle".into())?;
    let two = evaluate(&[bb(0, 0, 10, 10), bb(0, 0, 10, 10)], &[bb(0, 0, 10, 10), bb(0, 0, 10, 20)]).unwrap();
    ensure(two.mean_vor == 0.75, || format!("mean of (1, 0.5) = {}", two.mean_vor))?;

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let mut r = || bb(rng.gen_range(-20..20), rng.gen_range(-20..20), rng.gen_range(1..30), rng.gen_range(1..30));
        let (a, b) = (r(), r());
        worst = worst.max((vor(&a, &b) - raster_vor(&a, &b)).abs());
        let (ca, cb) = (a.center(), b.center());
        let by_hand = ((ca.0 - cb.0).powi(2) + (ca.1 - cb.1).powi(2)).sqrt();
        ensure((cle(&a, &b) - by_hand).abs() < 1e-9 && cle(&a, &b) == cle(&b, &a), || "cle mismatch".into())?;
    }
    ensure(worst <= 1e-9, || format!("vor differs from rasterized count by {worst:e}"))?;
    Ok(format!("1000 pairs, max vor error {worst:.1e}"))
}

// ---------------------------------------------------------------- 8

/// Weights on 100 bases whose top half is exactly `top`.
fn weights_with_top(top: &[usize]) -> DVector<f64> {
    let mut w = DVector::from_element(100, 0.001);
    for &i in top {
        w[i] = 0.02;
    }
    w
}

fn trigger_arithmetic() -> Outcome {
    let first: Vec<usize> = (0..50).collect();
    let mut results = Vec::new();
    for shared in [46usize, 44] {
        let second: Vec<usize> = (0..shared).chain(50..100 - shared).collect();
        let mut policy = UpdatePolicy::new(0.9).unwrap();
        ensure(!policy.should_update(&weights_with_top(&first)), || "first observation fired".into())?;
        results.push(policy.should_update(&weights_with_top(&second)));
    }
    ensure(results == [false, true], || format!("46/50 -> {}, 44/50 -> {}", results[0], results[1]))?;
    Ok("46/50 keeps, 44/50 updates".into())
}

// ---------------------------------------------------------------- 9

fn synthetic_gate() -> Outcome {
    let params = SynthParams {
        frame_w: 320,
        frame_h: 240,
        n_frames: 50,
        target_size: 40,
        velocity: (2.0, 1.0),
        jitter_sigma: 0.5,
        noise_sigma: 8.0,
        seed: 7,
        start: None,
    };
    let seq = synth_sequence(&params).map_err(|e| e.to_string())?;
    let truth = seq.truth.clone().unwrap();
    let cfg = TrackerConfig {
        encoder: EncoderSpec::with_method(EncoderMethod::SoftThreshold),
        dict_size: 100,
        ..TrackerConfig::default()
    };
    let start = Instant::now();
    let (first, tracker) = track_sequence_with(&seq, truth[0], &cfg, None).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let (second, _) = track_sequence_with(&seq, truth[0], &cfg, None).map_err(|e| e.to_string())?;
    let traj: Vec<BoundingBox> = first.iter().map(|r| r.bbox).collect();
    let report = evaluate(&traj, &truth).unwrap();
    let fps = seq.len() as f64 / secs;
    ensure(first == second, || "two runs differ".into())?;
    ensure(report.mean_vor >= 0.6, || format!("mean VOR {:.4}", report.mean_vor))?;
    ensure(report.mean_cle <= 8.0, || format!("mean CLE {:.3}", report.mean_cle))?;
    ensure(fps >= 2.0, || format!("{fps:.2} frames/s"))?;
    Ok(format!(
        "VOR {:.4}, CLE {:.3}, {fps:.2} frames/s, {} updates, deterministic",
        report.mean_vor,
        report.mean_cle,
        tracker.update_count()
    ))
}

// ---------------------------------------------------------------- 10

fn update_mode_equivalence() -> Outcome {
    let seq = synth_sequence(&SynthParams {
        n_frames: 20,
        velocity: (0.0, 0.0),
        jitter_sigma: 0.0,
        noise_sigma: 2.0,
        ..SynthParams::default()
    })
    .map_err(|e| e.to_string())?;
    let init = seq.truth.as_ref().unwrap()[0];
    let run = |mode| {
        let cfg = TrackerConfig {
            dict_update_mode: mode,
            ..TrackerConfig::default()
        };
        track_sequence_with(&seq, init, &cfg, None).map_err(|e| e.to_string())
    };
    let (off, _) = run(DictUpdateMode::Off)?;
    let (triggered, tracker) = run(DictUpdateMode::Triggered)?;
    ensure(tracker.update_count() == 0, || format!("{} updates fired", tracker.update_count()))?;
    ensure(off == triggered, || "trajectories differ".into())?;
    Ok("no updates, identical trajectories".into())
}

type Criterion = (&'static str, fn() -> Outcome, Duration);

fn main() {
    let criteria: [Criterion; 10] = [
        ("1 feature dimension", feature_dimension, Duration::from_secs(1)),
        ("2 lasso optimality", lasso_optimality, Duration::from_secs(30)),
        ("3 LS-SVM oracle", lssvm_oracle, Duration::from_secs(10)),
        ("4 ODL surrogate monotonicity", odl_monotonicity, Duration::from_secs(30)),
        ("5 encoder invariants", encoder_invariants, Duration::from_secs(30)),
        ("6 pooling properties", pooling_properties, Duration::from_secs(10)),
        ("7 metric oracles", metric_oracles, Duration::from_secs(10)),
        ("8 update trigger arithmetic", trigger_arithmetic, Duration::from_secs(1)),
        ("9 synthetic end-to-end gate", synthetic_gate, Duration::from_secs(60)),
        ("10 update-mode equivalence", update_mode_equivalence, Duration::from_secs(60)),
    ];
    let mut failed = 0;
    for (name, run, limit) in criteria {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let took = start.elapsed();
        let outcome = match outcome {
            Ok(_) if took > limit => Err(format!("took {took:.2?}, limit {limit:?}")),
            other => other,
        };
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail} [{took:.2?}]"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why} [{took:.2?}]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} of 10 criteria failed");
        std::process::exit(1);
    }
    println!("all 10 criteria passed");
}
