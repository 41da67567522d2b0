//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits nonzero
//! if any criterion fails.

use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use nondense_core::covering::{
    analytic_k3, calibrate_k3, cf_digit_oracle, count_s_rt, count_s_rt_brute, lambda0,
    survivor_cover, tile_count_bound, CoverConfig, Tessellation, TileOffset,
};
use nondense_core::flow::{
    classify_profile, direct_bad_constant, orbit_profile, u_a, Classification, FlowSpec,
};
use nondense_core::haar::{
    admissible_radius, core_inclusion_check, estimate_mu_grid, fit_scaling, nondivergence_profile,
    sampler_calibration, siegel_prediction, ThetaMode,
};
use nondense_core::lattice::oracle::brute_force_shortest;
use nondense_core::stats::item_rng;
use nondense_core::{shortest_vector, EnumConfig, Lattice, Norm, WeightVector};
use rand::Rng;

const SEED: u64 = 42;

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
    elapsed: Duration,
}

fn run(name: &'static str, f: impl FnOnce() -> (bool, String)) -> Outcome {
    let start = Instant::now();
    let (pass, detail) = f();
    let o = Outcome {
        name,
        pass,
        detail,
        elapsed: start.elapsed(),
    };
    println!(
        "{} {:<28} {} [{:.1}s]",
        if o.pass { "PASS" } else { "FAIL" },
        o.name,
        o.detail,
        o.elapsed.as_secs_f64()
    );
    o
}

fn w11() -> WeightVector {
    WeightVector::equal(1, 1).unwrap()
}

fn golden() -> f64 {
    (5f64.sqrt() - 1.0) / 2.0
}

fn dani() -> (bool, String) {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    pool.install(|| {
        let flow = FlowSpec::new(w11(), 15.0, 0.01).unwrap();
        let cfg = EnumConfig::default();
        let (mut checked, mut agree, mut banded) = (0, 0, 0);
        let mut worst = String::new();
        let start = Instant::now();
        for k in 0..200 {
            let a_val: f64 = item_rng(SEED, k).random();
            let a = DMatrix::from_element(1, 1, a_val);
            let profile = orbit_profile(&a, &flow, &cfg).unwrap();
            let c_direct = direct_bad_constant(&a, &w11(), 10_000).unwrap();
            for c in [0.05, 0.1, 0.2] {
                if (c_direct - c).abs() < 0.02 {
                    banded += 1;
                    continue;
                }
                checked += 1;
                let v = classify_profile(&profile, 2, c, 15.0).unwrap();
                let want = if c_direct >= c { Classification::Bad } else { Classification::NotBad };
                if v.classification == want {
                    agree += 1;
                } else if worst.is_empty() {
                    worst = format!(
                        "; first disagreement A={a_val:.6} c={c} c_direct={c_direct:.4} orbit_min^2={:.4} at t={:.2}",
                        profile.min_delta.powi(2),
                        profile.argmin_t
                    );
                }
            }
        }
        let secs = start.elapsed().as_secs_f64();
        (
            agree == checked && secs <= 300.0,
            format!("{agree}/{checked} agree outside the band ({banded} in band), {secs:.1}s single-threaded{worst}"),
        )
    })
}

fn golden_ratio() -> (bool, String) {
    let a = DMatrix::from_element(1, 1, golden());
    let c_direct = direct_bad_constant(&a, &w11(), 100_000).unwrap();
    let flow = FlowSpec::new(w11(), 15.0, 0.01).unwrap();
    let min = orbit_profile(&a, &flow, &EnumConfig::default())
        .unwrap()
        .min_delta;
    let first = (c_direct - 0.447_214).abs() <= 0.001;
    let second = (min - c_direct.sqrt()).abs() <= 0.02;
    (
        first && second,
        format!(
            "c_direct={c_direct:.6} (target 0.447214 +- 0.001: {}), orbit min={min:.6} vs sqrt(c_direct)={:.6} +- 0.02: {}",
            ok(first),
            c_direct.sqrt(),
            ok(second)
        ),
    )
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "no"
    }
}

fn siegel() -> (bool, String) {
    let start = Instant::now();
    let w = w11();
    let grid = [0.08, 0.05, 0.04, 0.02];
    let est = estimate_mu_grid(
        &grid,
        &Norm::Quasi(w.clone()),
        1_000_000,
        SEED,
        ThetaMode::Sampled,
    )
    .unwrap();
    let e05 = &est[1];
    let pred = siegel_prediction(0.05, &w).unwrap();
    let tol = 3.0 * e05.stderr + 10.0 * 0.05f64.powi(4);
    let first = (e05.mean - pred).abs() <= tol;
    let eps = [0.08, 0.04, 0.02];
    let hits = [est[0].hits, est[2].hits, est[3].hits];
    let fit = fit_scaling(&eps, &hits, 1_000_000, 2.0).unwrap();
    let second = (fit.slope - 2.0).abs() <= 0.15;
    let secs = start.elapsed().as_secs_f64();
    (
        first && second && secs <= 600.0,
        format!(
            "mu(0.05)={:.6} vs {pred:.6}, |diff|={:.2e} <= {tol:.2e}: {}; slope={:.3} (+-{:.3}): {}",
            e05.mean,
            (e05.mean - pred).abs(),
            ok(first),
            fit.slope,
            fit.ci_half_width,
            ok(second)
        ),
    )
}

fn sampler() -> (bool, String) {
    let cal = sampler_calibration(1_000_000, SEED, &[1.5, 2.0, 3.0]).unwrap();
    let tail2 = &cal.tails[1];
    let target = 3.0 / (4.0 * std::f64::consts::PI);
    let first = (tail2.empirical - target).abs() <= 4.0 * tail2.stderr;
    let second = cal.minkowski_violations == 0;
    let analytic: Vec<String> = cal
        .tails
        .iter()
        .map(|t| format!("c={} z={:.2}", t.c, t.z))
        .collect();
    (
        first && second,
        format!(
            "Pr[y>=2]={:.5} vs 3/(4pi)={target:.5} (4 se = {:.5}): {}; Minkowski violations {} (max {:.6}): {}; against 3/(pi c): {}; acceptance rate {:.4}",
            tail2.empirical,
            4.0 * tail2.stderr,
            ok(first),
            cal.minkowski_violations,
            cal.max_delta_euclid,
            ok(second),
            analytic.join(", "),
            cal.acceptance_rate
        ),
    )
}

fn random_weights(m: usize, n: usize, rng: &mut impl Rng) -> WeightVector {
    let simplex = |k: usize, rng: &mut dyn FnMut() -> f64| -> Vec<f64> {
        let raw: Vec<f64> = (0..k).map(|_| 0.2 + rng()).collect();
        let s: f64 = raw.iter().sum();
        let mut v: Vec<f64> = raw.iter().map(|x| x / s).collect();
        let head: f64 = v[..k - 1].iter().sum();
        v[k - 1] = 1.0 - head;
        v
    };
    let mut draw = || rng.random::<f64>();
    let i = simplex(m, &mut draw);
    let j = simplex(n, &mut draw);
    WeightVector::new(i, j).unwrap()
}

fn bowen_sweep() -> Vec<(Tessellation, WeightVector, f64)> {
    let mut rng = item_rng(SEED, 1_000);
    let shapes = [(1, 1, 3.0), (2, 1, 1.5), (1, 2, 1.5), (2, 2, 0.6)];
    (0..50)
        .map(|k| {
            let (m, n, t_hi) = shapes[k % shapes.len()];
            let w = random_weights(m, n, &mut rng);
            let r = 0.1 + 1.9 * rng.random::<f64>();
            let t = t_hi * rng.random::<f64>();
            let off = if k % 2 == 0 {
                TileOffset::Centered
            } else {
                TileOffset::Corner
            };
            (Tessellation::new(m * n, r).unwrap().with_offset(off), w, t)
        })
        .collect()
}

fn bowen() -> (bool, String) {
    let sweep = bowen_sweep();
    let mut mismatches = 0;
    for (tess, w, t) in &sweep {
        if count_s_rt(tess, w, *t).unwrap() != count_s_rt_brute(tess, w, *t).unwrap() {
            mismatches += 1;
        }
    }
    let k3 = calibrate_k3(&sweep).unwrap();
    let mut violations = 0;
    let mut analytic_violations = 0;
    for (tess, w, t) in &sweep {
        let n = count_s_rt(tess, w, *t).unwrap() as f64;
        let l0 = lambda0(w);
        if n > tile_count_bound(tess, w, *t, k3, l0) * (1.0 + 1e-12) {
            violations += 1;
        }
        if n > tile_count_bound(tess, w, *t, analytic_k3(tess), l0) {
            analytic_violations += 1;
        }
    }
    (
        mismatches == 0 && violations == 0,
        format!(
            "{} triples, {mismatches} count mismatches vs brute force, calibrated K3={k3:.4e} with {violations} bound violations ({analytic_violations} with analytic K3)",
            sweep.len()
        ),
    )
}

fn golden_base() -> Lattice {
    Lattice::standard(2)
        .unwrap()
        .transform(&u_a(&DMatrix::from_element(1, 1, golden())))
        .unwrap()
}

fn dimension() -> (bool, String) {
    let cfg_enum = EnumConfig::default();
    let x0 = golden_base();
    let estimate = |c: f64| {
        let cover =
            survivor_cover(&x0, &w11(), &CoverConfig::new(c, 0.5, 2.0, 8), &cfg_enum).unwrap();
        let d = cover.dimension(1).unwrap();
        (d.slope, cover.counts(), cover.truncated)
    };
    let (dim, counts, truncated) = estimate(0.25);
    let oracle = cf_digit_oracle(4, 10).unwrap();
    let first = (dim - oracle).abs() <= 0.05;
    let codims: Vec<f64> = [0.1, 0.2, 0.3]
        .iter()
        .map(|&c| 1.0 - estimate(c).0)
        .collect();
    let second = codims.windows(2).all(|p| p[1] > p[0]);
    (
        first && second,
        format!(
            "c=0.25: dim={dim:.4} (counts {counts:?}, truncated {truncated}) vs oracle(N=4)={oracle:.4} +- 0.05: {}; codim at c=0.1,0.2,0.3 = {:.4}, {:.4}, {:.4} increasing: {}",
            ok(first),
            codims[0],
            codims[1],
            codims[2],
            ok(second)
        ),
    )
}

fn nondivergence() -> (bool, String) {
    let z = Lattice::standard(2).unwrap();
    let fit =
        nondivergence_profile(&z, &w11(), 4.0, &[0.4, 0.2, 0.1, 0.05], 100_000, SEED).unwrap();
    let pass = fit.slope >= 1.0 - fit.ci_half_width && fit.ci_half_width <= 0.2;
    (
        pass,
        format!(
            "slope={:.4}, CI half-width={:.4}, fractions {:?}",
            fit.slope, fit.ci_half_width, fit.fractions
        ),
    )
}

fn inclusion() -> (bool, String) {
    let w = w11();
    let r = admissible_radius(0.3, &w, 2.0) / 2.0;
    let rep = core_inclusion_check(0.3, r, &w, 1_000, 10, 2.0, SEED).unwrap();
    (
        rep.violations == 0 && rep.pairs >= 10_000,
        format!(
            "r={r} (admissible {}), {} pairs, {} violations, max delta(gx)/eps={:.4}",
            rep.admissible_r, rep.pairs, rep.violations, rep.max_ratio
        ),
    )
}

fn random_unimodular(d: usize, rng: &mut impl Rng) -> Lattice {
    loop {
        let v: Vec<f64> = (0..d * d)
            .map(|_| 6.0 * rng.random::<f64>() - 3.0)
            .collect();
        let mut m = DMatrix::from_row_slice(d, d, &v);
        let det = m.determinant();
        if det.abs() < 0.2 {
            continue;
        }
        if det < 0.0 {
            m.swap_columns(0, 1);
        }
        let s = m.determinant().powf(-1.0 / d as f64);
        return Lattice::new(&(m * s)).unwrap();
    }
}

fn property_suites() -> (bool, String) {
    let start = Instant::now();
    let mut rng = item_rng(SEED, 2_000);
    let mut svp_bad = 0;
    for k in 0..200 {
        let d = 2 + k % 2;
        let l = random_unimodular(d, &mut rng);
        for norm in [Norm::Euclid, Norm::Sup] {
            let fast = shortest_vector(&l, &norm).unwrap().length;
            let slow = brute_force_shortest(&l, &norm, 50).unwrap().length;
            if (fast - slow).abs() > 1e-12 * slow.max(1.0) {
                svp_bad += 1;
            }
        }
    }
    let mut count_bad = 0;
    for (tess, w, t) in bowen_sweep().iter().rev() {
        let t2 = t * 0.7;
        if count_s_rt(tess, w, t2).unwrap() != count_s_rt_brute(tess, w, t2).unwrap() {
            count_bad += 1;
        }
    }
    let d2 = [
        cf_digit_oracle(2, 11).unwrap(),
        cf_digit_oracle(2, 12).unwrap(),
    ];
    let cf_converged = (d2[1] - d2[0]).abs() < 1e-3 && (d2[1] - 0.531).abs() <= 0.003;
    let by_n: Vec<f64> = (1..=5).map(|n| cf_digit_oracle(n, 8).unwrap()).collect();
    let cf_monotone = by_n.windows(2).all(|p| p[1] > p[0]);
    let secs = start.elapsed().as_secs_f64();
    (
        svp_bad == 0 && count_bad == 0 && cf_converged && cf_monotone && secs < 900.0,
        format!(
            "shortest vector mismatches {svp_bad}/400, S_rt mismatches {count_bad}/50, dim E_2 depth 11/12 = {:.6}/{:.6}, dim E_N for N=1..5 = {:?}",
            d2[0],
            d2[1],
            by_n.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>()
        ),
    )
}

fn main() {
    let outcomes = vec![
        run("dani-correspondence", dani),
        run("golden-ratio", golden_ratio),
        run("siegel-measure", siegel),
        run("sampler-calibration", sampler),
        run("bowen-counting", bowen),
        run("dimension-vs-oracle", dimension),
        run("nondivergence-scaling", nondivergence),
        run("core-inclusion", inclusion),
        run("property-suites", property_suites),
    ];
    let failed: Vec<&str> = outcomes
        .iter()
        .filter(|o| !o.pass)
        .map(|o| o.name)
        .collect();
    println!(
        "acceptance: {} passed, {} failed",
        outcomes.len() - failed.len(),
        failed.len()
    );
    if !failed.is_empty() {
        println!("failed: {}", failed.join(", "));
        std::process::exit(1);
    }
}
