use nalgebra::DMatrix;
use nondense_core::covering::{
    analytic_k3, box_dimension_fit, cf_digit_oracle, count_s_rt, covering_base, covering_bound,
    dim_upper_formula, lambda0, lambda_max, survivor_cover, tile_count_bound, volume_ratio,
    CoverConfig, CoverConstants, SurvivorCover, Tessellation,
};
use nondense_core::flow::{
    classify_profile, direct_bad_constant, orbit_profile, u_a, Classification, FlowSpec,
};
use nondense_core::haar::{estimate_mu_grid, nondivergence_profile};
use nondense_core::lattice::oracle::brute_force_shortest;
use nondense_core::lattice::shortest_vector_with;
use nondense_core::{siegel_prediction, EnumConfig, Error, Lattice, Norm, ShortVec, WeightVector};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::output::{Cell, Table};

/// Largest brute-force coefficient bound `--brute` will try.
const BRUTE_MAX_BOUND: i64 = 2_000;

pub struct CmdOutput {
    pub outputs: Value,
    pub table: Table,
    pub warnings: Vec<String>,
    /// The run finished but the result is not conclusive (exit code 2).
    pub inconclusive: bool,
}

impl CmdOutput {
    fn new(outputs: impl Serialize, table: Table) -> Self {
        Self {
            outputs: serde_json::to_value(outputs).expect("outputs serialize"),
            table,
            warnings: Vec::new(),
            inconclusive: false,
        }
    }
}

pub struct Flags {
    pub brute: bool,
    pub oracle: bool,
}

fn enum_cfg(cfg: &RunConfig) -> EnumConfig {
    EnumConfig {
        node_limit: cfg.budgets.node_limit,
    }
}

fn a_matrix(cfg: &RunConfig, w: &WeightVector) -> Option<DMatrix<f64>> {
    cfg.a
        .as_ref()
        .map(|a| DMatrix::from_row_slice(w.m(), w.n(), a))
}

/// `basis` if given, else `u_A Z^d` if `a` is given, else `Z^d`.
fn base_lattice(cfg: &RunConfig, w: &WeightVector) -> Result<Lattice, Error> {
    if let Some(rows) = &cfg.basis {
        return Lattice::from_rows(rows);
    }
    let z = Lattice::standard(w.d())?;
    match a_matrix(cfg, w) {
        Some(a) => z.transform(&u_a(&a)),
        None => Ok(z),
    }
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(" ")
}

/// Coefficient box that contains every lattice vector no longer than the
/// shortest basis column.
fn brute_bound(lat: &Lattice, norm: &Norm, w: &WeightVector) -> Result<i64, Error> {
    let b = lat.matrix();
    let d = lat.dim();
    let radius = (0..d)
        .map(|k| norm.eval(b.column(k).as_slice()))
        .fold(f64::INFINITY, f64::min);
    let reach: Vec<f64> = match norm {
        Norm::Quasi(_) => w.exponents().iter().map(|&e| radius.powf(e)).collect(),
        _ => vec![radius; d],
    };
    let inv = b.try_inverse().ok_or(Error::Rank)?;
    let worst = (0..d)
        .map(|k| (0..d).map(|j| inv[(k, j)].abs() * reach[j]).sum::<f64>())
        .fold(0.0, f64::max);
    let bound = (worst * (1.0 + 1e-9)).ceil().max(1.0);
    if bound > BRUTE_MAX_BOUND as f64 {
        return Err(Error::BudgetExceeded {
            what: "brute-force coefficient bound",
            requested: bound.min(u64::MAX as f64) as u64,
            cap: BRUTE_MAX_BOUND as u64,
        });
    }
    Ok(bound as i64)
}

#[derive(Serialize)]
struct MinimumOut {
    norm: String,
    length: f64,
    coeffs: Vec<i64>,
    vector: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    brute_length: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    brute_agrees: Option<bool>,
}

pub fn delta(cfg: &RunConfig, flags: &Flags) -> Result<CmdOutput, Error> {
    let w = cfg.weight_vector();
    let lat = match &cfg.basis {
        Some(rows) => Lattice::from_rows(rows)?,
        None => Lattice::standard(w.d())?,
    };
    let mut minima = Vec::new();
    for (name, norm) in [
        (cfg.norm.name().to_string(), cfg.norm.norm()),
        ("quasi".to_string(), Norm::Quasi(w.clone())),
    ] {
        let sv: ShortVec = shortest_vector_with(&lat, &norm, &enum_cfg(cfg))?;
        let (brute_length, brute_agrees) = if flags.brute {
            let bound = brute_bound(&lat, &norm, &w)?;
            let bf = brute_force_shortest(&lat, &norm, bound)?;
            let agree = (bf.length - sv.length).abs() <= 1e-9 * sv.length.max(1.0);
            (Some(bf.length), Some(agree))
        } else {
            (None, None)
        };
        minima.push(MinimumOut {
            norm: name,
            length: sv.length,
            coeffs: sv.coeffs,
            vector: sv.vec,
            brute_length,
            brute_agrees,
        });
    }
    let mut table = Table::new(&[
        "norm",
        "delta",
        "coeffs",
        "vector",
        "brute_delta",
        "brute_agrees",
    ]);
    for m in &minima {
        table.push(vec![
            m.norm.clone().into(),
            m.length.into(),
            join(&m.coeffs).into(),
            join(&m.vector).into(),
            m.brute_length.into(),
            m.brute_agrees.into(),
        ]);
    }
    let disagree = minima.iter().any(|m| m.brute_agrees == Some(false));
    let mut out = CmdOutput::new(
        json!({
            "dim": lat.dim(),
            "delta": minima[0].length,
            "delta_w": minima[1].length,
            "minima": minima,
        }),
        table,
    );
    if disagree {
        out.warnings
            .push("brute-force minimum differs from enumeration".into());
        out.inconclusive = true;
    }
    Ok(out)
}

pub fn bad(cfg: &RunConfig) -> Result<CmdOutput, Error> {
    let w = cfg.weight_vector();
    let a = a_matrix(cfg, &w).expect("validated");
    let flow = FlowSpec::new(w.clone(), cfg.t_max, cfg.dt)?;
    let profile = orbit_profile(&a, &flow, &enum_cfg(cfg))?;
    let mut verdict = classify_profile(&profile, w.d(), cfg.c, cfg.t_max)?;
    let c_direct = direct_bad_constant(&a, &w, cfg.q_bound)?;
    verdict.c_direct = Some(c_direct);
    let direct_bad = c_direct >= cfg.c;
    let agree = match verdict.classification {
        Classification::Bad => Some(direct_bad),
        Classification::NotBad => Some(!direct_bad),
        Classification::Boundary => None,
    };
    let label = |c: Classification| match c {
        Classification::Bad => "bad",
        Classification::NotBad => "not_bad",
        Classification::Boundary => "boundary",
    };
    let mut table = Table::new(&[
        "c",
        "epsilon",
        "classification",
        "orbit_min",
        "argmin_t",
        "margin",
        "c_direct",
        "direct_bad",
        "agree",
    ]);
    table.push(vec![
        cfg.c.into(),
        verdict.epsilon.into(),
        label(verdict.classification).into(),
        verdict.orbit_min.into(),
        verdict.argmin_t.into(),
        verdict.margin.into(),
        c_direct.into(),
        direct_bad.into(),
        agree.into(),
    ]);
    let mut out = CmdOutput::new(
        json!({
            "verdict": verdict,
            "direct": {"q_bound": cfg.q_bound, "c_direct": c_direct, "bad": direct_bad},
            "agree": agree,
        }),
        table,
    );
    match agree {
        None => {
            out.warnings.push(format!(
                "boundary verdict: orbit minimum {} is within the continuity margin of epsilon {}",
                verdict.orbit_min, verdict.epsilon
            ));
            out.inconclusive = true;
        }
        Some(false) => out.warnings.push(format!(
            "dynamical and direct verdicts differ; the orbit over [0, {}] sees denominators up to about {:.0}, the direct search stops at q = {}",
            cfg.t_max,
            verdict.epsilon * cfg.t_max.exp(),
            cfg.q_bound
        )),
        Some(true) => {}
    }
    Ok(out)
}

pub fn orbit(cfg: &RunConfig) -> Result<CmdOutput, Error> {
    let w = cfg.weight_vector();
    let a = a_matrix(cfg, &w).expect("validated");
    let flow = FlowSpec::new(w, cfg.t_max, cfg.dt)?;
    let profile = orbit_profile(&a, &flow, &enum_cfg(cfg))?;
    let mut table = Table::new(&["t", "delta_w"]);
    for s in &profile.samples {
        table.push(vec![s.t.into(), s.delta_w.into()]);
    }
    Ok(CmdOutput::new(profile, table))
}

#[derive(Serialize)]
struct MuRow {
    eps: f64,
    n_samples: u64,
    hits: u64,
    mean: f64,
    stderr: f64,
    prediction: f64,
    z: Option<f64>,
    /// `|mean - prediction| <= 3 stderr + 10 eps^4`.
    within_band: bool,
    small_count: bool,
}

pub fn mu(cfg: &RunConfig) -> Result<CmdOutput, Error> {
    let w = cfg.weight_vector();
    let eps = cfg.eps.clone().expect("resolved");
    let est = estimate_mu_grid(
        &eps,
        &Norm::Quasi(w.clone()),
        cfg.n_samples,
        cfg.seed,
        cfg.theta,
    )?;
    let mut rows = Vec::new();
    for e in &est {
        let prediction = siegel_prediction(e.eps, &w)?;
        let z = (e.stderr > 0.0).then(|| (e.mean - prediction) / e.stderr);
        let slack = 3.0 * e.stderr + 10.0 * e.eps.powi(4);
        rows.push(MuRow {
            eps: e.eps,
            n_samples: e.n_samples,
            hits: e.hits,
            mean: e.mean,
            stderr: e.stderr,
            prediction,
            z,
            within_band: (e.mean - prediction).abs() <= slack,
            small_count: e.small_count,
        });
    }
    let mut table = Table::new(&[
        "eps",
        "n_samples",
        "hits",
        "mean",
        "stderr",
        "prediction",
        "z",
        "within_band",
        "small_count",
    ]);
    for r in &rows {
        table.push(vec![
            r.eps.into(),
            r.n_samples.into(),
            r.hits.into(),
            r.mean.into(),
            r.stderr.into(),
            r.prediction.into(),
            r.z.into(),
            r.within_band.into(),
            r.small_count.into(),
        ]);
    }
    let mut out = CmdOutput::new(json!({ "theta": cfg.theta, "estimates": rows }), table);
    for r in &rows {
        if r.small_count && r.eps > 0.0 && r.mean < 1.0 {
            out.warnings.push(format!(
                "eps = {}: only {} hits, stderr is unreliable",
                r.eps, r.hits
            ));
        }
    }
    Ok(out)
}

pub fn nondiv(cfg: &RunConfig) -> Result<CmdOutput, Error> {
    let w = cfg.weight_vector();
    let x = base_lattice(cfg, &w)?;
    let eps = cfg.eps.clone().expect("resolved");
    let fit = nondivergence_profile(&x, &w, cfg.t, &eps, cfg.n_samples, cfg.seed)?;
    let mut table = Table::new(&["eps", "fraction", "stderr"]);
    for k in 0..fit.eps_grid.len() {
        table.push(vec![
            fit.eps_grid[k].into(),
            fit.fractions[k].into(),
            fit.stderrs[k].into(),
        ]);
    }
    let passes = fit.slope >= fit.reference_exponent - fit.ci_half_width;
    let mut out = CmdOutput::new(
        json!({ "fit": fit, "slope_at_least_reference": passes }),
        table,
    );
    if !passes {
        out.warnings.push(format!(
            "fitted slope {} is below the reference exponent {} by more than the CI half-width {}",
            fit.slope, fit.reference_exponent, fit.ci_half_width
        ));
        out.inconclusive = cfg.assert_slope;
    }
    Ok(out)
}

fn run_cover(cfg: &RunConfig, w: &WeightVector) -> Result<SurvivorCover, Error> {
    let x0 = base_lattice(cfg, w)?;
    let mut cc = CoverConfig::new(cfg.c, cfg.r, cfg.t, cfg.k);
    cc.offset = cfg.offset;
    cc.box_cap = cfg.budgets.box_cap;
    cc.strict_budget = cfg.budgets.strict;
    survivor_cover(&x0, w, &cc, &enum_cfg(cfg))
}

fn cover_warnings(cover: &SurvivorCover, cfg: &RunConfig) -> Vec<String> {
    let mut warnings = Vec::new();
    if cover.truncated {
        warnings.push(format!(
            "cover truncated after level {}: the next level exceeds box_cap = {}",
            cover.levels.len() - 1,
            cfg.budgets.box_cap
        ));
    }
    if cover.nesting_violations > 0 {
        warnings.push(format!(
            "{} boxes were not nested in their parents",
            cover.nesting_violations
        ));
    }
    warnings
}

#[derive(Serialize)]
struct SweepRow {
    t: f64,
    count: u64,
    volume_ratio: f64,
    k3: f64,
    bound: f64,
    violated: bool,
}

#[derive(Serialize)]
struct BoundRow {
    k: usize,
    bound: f64,
    clamped: bool,
}

pub fn cover(cfg: &RunConfig) -> Result<CmdOutput, Error> {
    let w = cfg.weight_vector();
    let l = w.m() * w.n();
    let cover = run_cover(cfg, &w)?;
    let tess = Tessellation::new(l, cfg.r)?.with_offset(cfg.offset);
    let k3 = cfg.constants.k3.unwrap_or_else(|| analytic_k3(&tess));
    let mut sweep = Vec::new();
    for &t in cfg.sweep_t.as_deref().unwrap_or_default() {
        let count = count_s_rt(&tess, &w, t)?;
        let bound = tile_count_bound(&tess, &w, t, k3, lambda0(&w));
        sweep.push(SweepRow {
            t,
            count,
            volume_ratio: volume_ratio(&w, t),
            k3,
            bound,
            violated: count as f64 > bound * (1.0 + 1e-12),
        });
    }
    let mut warnings = cover_warnings(&cover, cfg);
    let estimate = match siegel_prediction(cover.eps, &w) {
        Ok(mu) => {
            let consts = CoverConstants {
                k0: cfg.constants.k0,
                k1: cfg.constants.k1,
                k2: cfg.constants.k2,
                lambda1: cfg.constants.lambda1,
                lambda_max: lambda_max(&w),
                l,
            };
            let rows: Vec<BoundRow> = (0..=cfg.k)
                .map(|k| {
                    let b = covering_bound(cfg.r, cfg.t, k as u32, mu, &consts);
                    BoundRow {
                        k,
                        bound: b.value,
                        clamped: b.clamped,
                    }
                })
                .collect();
            let base = covering_base(cfg.r, cfg.t, mu, &consts);
            json!({
                "mu": mu,
                "base": base,
                "dim_upper": dim_upper_formula(l, cfg.t, base).ok(),
                "levels": rows,
            })
        }
        Err(_) => {
            warnings.push(format!(
                "no measure prediction for d = {}; covering estimate skipped",
                w.d()
            ));
            Value::Null
        }
    };
    if sweep.iter().any(|s| s.violated) {
        warnings.push("the count bound is violated on part of the sweep".into());
    }
    let mut table = Table::new(&["k", "box_size", "count"]);
    for lv in &cover.levels {
        table.push(vec![lv.k.into(), lv.box_size.into(), lv.count.into()]);
    }
    let mut out = CmdOutput::new(
        json!({
            "eps": cover.eps,
            "safety": cover.safety,
            "threshold": cover.threshold,
            "branching": cover.branching,
            "truncated": cover.truncated,
            "nesting_violations": cover.nesting_violations,
            "levels": cover.levels,
            "count_sweep": sweep,
            "covering_estimate": estimate,
        }),
        table,
    );
    out.warnings = warnings;
    Ok(out)
}

pub fn dim(cfg: &RunConfig, flags: &Flags) -> Result<CmdOutput, Error> {
    let w = cfg.weight_vector();
    let (counts, sizes, source, warnings) = match (&cfg.counts, &cfg.sizes) {
        (Some(c), Some(s)) => (c.clone(), s.clone(), "input", Vec::new()),
        _ => {
            let cover = run_cover(cfg, &w)?;
            let warnings = cover_warnings(&cover, cfg);
            let sizes = cover.levels.iter().map(|l| l.box_size).collect();
            (cover.counts(), sizes, "cover", warnings)
        }
    };
    let fit = box_dimension_fit(&counts, &sizes, cfg.skip)?;
    let oracle = if flags.oracle {
        let value = cf_digit_oracle(cfg.oracle_n, cfg.oracle_depth)?;
        let diff = fit.slope - value;
        Some(json!({
            "n": cfg.oracle_n,
            "depth": cfg.oracle_depth,
            "dimension": value,
            "difference": diff,
            "tolerance": cfg.oracle_tol,
            "within_tolerance": diff.abs() <= cfg.oracle_tol,
        }))
    } else {
        None
    };
    let mut table = Table::new(&[
        "level",
        "box_size",
        "count",
        "log_inv_size",
        "log_count",
        "used",
    ]);
    for k in 0..counts.len() {
        let used = fit.levels_used.contains(&k);
        let (x, y) = if counts[k] > 0 {
            (
                Cell::from(-sizes[k].ln()),
                Cell::from((counts[k] as f64).ln()),
            )
        } else {
            (Cell::from(-sizes[k].ln()), Cell::Empty)
        };
        table.push(vec![
            k.into(),
            sizes[k].into(),
            counts[k].into(),
            x,
            y,
            used.into(),
        ]);
    }
    let mut out = CmdOutput::new(
        json!({
            "source": source,
            "counts": counts,
            "sizes": sizes,
            "fit": fit,
            "dimension": fit.slope,
            "oracle": oracle,
        }),
        table,
    );
    out.warnings = warnings;
    if let Some(o) = &oracle {
        if o["within_tolerance"] == false {
            out.warnings.push(format!(
                "estimate {} differs from the oracle by more than {}",
                fit.slope, cfg.oracle_tol
            ));
        }
    }
    Ok(out)
}

pub fn oracle_cf(cfg: &RunConfig) -> Result<CmdOutput, Error> {
    let value = cf_digit_oracle(cfg.oracle_n, cfg.oracle_depth)?;
    let mut table = Table::new(&["n", "depth", "dimension"]);
    table.push(vec![
        cfg.oracle_n.into(),
        (cfg.oracle_depth as u64).into(),
        value.into(),
    ]);
    Ok(CmdOutput::new(
        json!({ "n": cfg.oracle_n, "depth": cfg.oracle_depth, "dimension": value }),
        table,
    ))
}
