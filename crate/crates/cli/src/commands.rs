//! The experiment subcommands: constants, simulate, variance, berry, nodal.

use anyhow::{bail, Result};
use serde::Serialize;
use std::f64::consts::PI;

use nodal_chaos::chaos::{chaos_batch, homothetic_mean_length, ChaosContext, ChaosForm};
use nodal_chaos::field::{global_params, make_band, GlobalParams, Normalization, SpectralFieldSpec};
use nodal_chaos::geometry::Manifold;
use nodal_chaos::nodal::{mc_nodal, NodalGrid};
use nodal_chaos::specfun::{a_coeff, beta_const, c_chi, c_dq, sphere_area, theta};
use nodal_chaos::stats::{summarize, Summary};
use nodal_chaos::variance::{berry_report, require_homothetic, variance_report, BerryReport, VarianceReport};

use crate::config::{BandConfig, ExperimentConfig};
use crate::oracle;
use crate::output::{Checks, OutDir};
use crate::plot::{self, Plot, Series, Style};

/// Effective parameters after merging flags over the config.
pub struct Params {
    pub cfg: ExperimentConfig,
    pub seed: u64,
    pub resolution: Option<usize>,
    pub fiber: Option<usize>,
    pub samples: Option<u64>,
    pub level: f64,
}

impl Params {
    fn q_list(&self, default: &[u32]) -> Vec<u32> {
        if self.cfg.q.is_empty() {
            default.to_vec()
        } else {
            self.cfg.q.clone()
        }
    }
}

fn default_resolution(spec: &SpectralFieldSpec) -> usize {
    match spec.manifold {
        Manifold::Sphere2 => 48,
        Manifold::Torus2 => 32,
    }
}

// ---------------------------------------------------------------- constants

#[derive(Serialize)]
struct ConstantRow {
    quantity: &'static str,
    n: Option<u32>,
    q: Option<u32>,
    a: Option<u32>,
    b: Option<u32>,
    closed_form: f64,
    oracle: f64,
    deviation: f64,
}

#[derive(Serialize)]
struct ConstantsSummary {
    n_max: u32,
    q_max: u32,
    rows: usize,
    max_deviation: f64,
    worst: String,
    tolerance: f64,
}

pub const RANGE_LIMIT: u32 = 50;

pub fn constants(n_max: u32, q_max: u32, out: &OutDir, ck: &mut Checks) -> Result<()> {
    if n_max == 0 || n_max > RANGE_LIMIT || q_max > RANGE_LIMIT {
        bail!("ranges must satisfy 1 <= n_max <= {RANGE_LIMIT} and q_max <= {RANGE_LIMIT}");
    }
    let mut rows = Vec::new();
    let mut push = |quantity, n, q, a, b, closed_form: f64, oracle: f64| {
        let deviation = (closed_form - oracle).abs() / oracle.abs().max(1e-300);
        rows.push(ConstantRow { quantity, n, q, a, b, closed_form, oracle, deviation });
    };
    for n in 0..=n_max {
        push("s_n", Some(n), None, None, None, sphere_area(n), oracle::sphere_area(n));
    }
    for n in 1..=n_max {
        for q in 0..=q_max {
            push("beta", Some(n), Some(q), None, None, beta_const(n, q)?, oracle::beta(n, q));
        }
    }
    for b in 0..=q_max / 2 {
        push("c_chi", None, Some(2 * b), None, Some(b), c_chi(b)?, oracle::c_chi(b));
    }
    for a in 0..=q_max / 2 {
        for b in 0..=q_max / 2 - a {
            push("theta", None, Some(2 * (a + b)), Some(a), Some(b), theta(a, b)?, oracle::theta(a, b));
        }
    }
    for n in 1..=n_max {
        for b in 0..=q_max / 2 {
            push("A", Some(n), Some(2 * b), None, Some(b), a_coeff(n, b)?, oracle::a_coeff(n, b));
        }
    }
    for d in 2..=n_max {
        for q in (0..=q_max).step_by(2) {
            push("c_dq", Some(d), Some(q), None, None, c_dq(d, q)?, oracle::c_dq(d, q));
        }
    }
    for n in 2..=n_max {
        // s_{n-1} / (2 s_n sqrt(n)), against its value from the Gamma form of s_n.
        let g = |m: u32| 2.0 * PI.powf(f64::from(m + 1) / 2.0) / oracle::gamma_half(f64::from(m + 1) / 2.0);
        let closed = sphere_area(n - 1) / (2.0 * sphere_area(n) * f64::from(n).sqrt());
        push("berry_prefactor", Some(n), None, None, None, closed, g(n - 1) / (2.0 * g(n) * f64::from(n).sqrt()));
    }
    let worst = rows.iter().max_by(|a, b| a.deviation.total_cmp(&b.deviation)).expect("rows");
    let summary = ConstantsSummary {
        n_max,
        q_max,
        rows: rows.len(),
        max_deviation: worst.deviation,
        worst: format!("{} n={:?} q={:?} a={:?} b={:?}", worst.quantity, worst.n, worst.q, worst.a, worst.b),
        tolerance: 1e-8,
    };
    out.csv("constants.csv", &rows)?;
    out.json("constants.json", &summary)?;
    ck.at_most(
        "constants",
        "oracle_agreement",
        summary.max_deviation,
        summary.tolerance,
        format!("{} rows, max relative deviation {:.2e} at {}", summary.rows, summary.max_deviation, summary.worst),
    );
    Ok(())
}

// ----------------------------------------------------------------- simulate

#[derive(Serialize)]
struct FieldSummary {
    spec_hash: String,
    manifold: Manifold,
    modes: usize,
    seed: u64,
    samples: u64,
    resolution: usize,
    fiber: usize,
    level: f64,
    params: GlobalParams,
    spectral_lambda: f64,
    homothetic_mean_length: Option<f64>,
}

#[derive(Serialize)]
struct ChaosSummaryRow {
    q: u32,
    form: ChaosForm,
    mean: f64,
    se_mean: f64,
    var: f64,
    se_var: f64,
}

fn field_summary(spec: &SpectralFieldSpec, p: &Params, res: usize, k: usize, samples: u64) -> Result<FieldSummary> {
    let params = global_params(spec, res, k)?;
    let lambda = spec.spectral_lambda2().sqrt();
    let homothetic = spec.is_invariant() && params.eps <= 1e-8;
    Ok(FieldSummary {
        spec_hash: spec.hash_hex(),
        manifold: spec.manifold,
        modes: spec.len(),
        seed: p.seed,
        samples,
        resolution: res,
        fiber: k,
        level: p.level,
        params,
        spectral_lambda: lambda,
        homothetic_mean_length: homothetic.then(|| {
            homothetic_mean_length(spec.manifold.volume(), spec.dim(), lambda) * (-p.level * p.level / 2.0).exp()
        }),
    })
}

pub fn simulate(p: &Params, out: &OutDir, ck: &mut Checks) -> Result<()> {
    let spec = p.cfg.field_spec()?;
    let res = p.resolution.unwrap_or_else(|| default_resolution(&spec));
    let k = p.fiber.unwrap_or(16);
    let samples = p.samples.unwrap_or(200);
    let qs = p.q_list(&[2, 4]);
    let forms = p.cfg.forms()?;
    let requests: Vec<(u32, ChaosForm)> = qs.iter().flat_map(|&q| forms.iter().map(move |&f| (q, f))).collect();
    let ctx = ChaosContext::new(&spec, res, k)?;
    let rows = chaos_batch(&ctx, p.seed, samples, &requests, p.level)?;
    out.json("field.json", &field_summary(&spec, p, res, k, samples)?)?;
    out.csv("chaos.csv", &rows)?;

    let mut summary = Vec::new();
    let mut plot = Plot::default();
    let colors = [plot::BLUE, plot::ORANGE, plot::GREEN, plot::RED, plot::BLACK];
    for (j, &(q, form)) in requests.iter().enumerate() {
        let xs: Vec<f64> = rows.iter().filter(|r| r.q == q && r.form == form).map(|r| r.value).collect();
        let s = summarize(&xs);
        summary.push(ChaosSummaryRow { q, form, mean: s.mean, se_mean: s.se_mean, var: s.var, se_var: s.se_var });
        let finite = xs.iter().all(|x| x.is_finite());
        ck.holds("simulate", &format!("finite_q{q}_{}", form.name()), finite, format!("{} values", xs.len()));
        plot = plot.add(Series::new(plot::histogram(&xs, 40), colors[j % colors.len()], Style::Line));
    }
    out.csv("chaos_summary.csv", &summary)?;
    out.plot("chaos_hist.png", |path| plot.save(path));
    Ok(())
}

// ----------------------------------------------------------------- variance

pub fn variance(p: &Params, out: &OutDir, ck: &mut Checks) -> Result<()> {
    let spec = p.cfg.field_spec()?;
    let res = p.resolution.unwrap_or_else(|| default_resolution(&spec));
    let k = p.fiber.unwrap_or(16);
    let samples = p.samples.unwrap_or(500);
    let qs = p.q_list(&[2, 4]);
    if p.cfg.require_closed {
        let unit = if spec.is_invariant() { spec.unit_variance()? } else { spec.clone() };
        require_homothetic(&unit)?;
    }
    let ctx = ChaosContext::new(&spec, res, k)?;
    let requests: Vec<(u32, ChaosForm)> = qs.iter().map(|&q| (q, ChaosForm::General)).collect();
    let mc = chaos_batch(&ctx, p.seed, samples, &requests, 0.0)?;

    let mut reports: Vec<VarianceReport> = Vec::new();
    for &q in &qs {
        let mut r = variance_report(&spec, q, res, k)?;
        let xs: Vec<f64> = mc.iter().filter(|row| row.q == q).map(|row| row.value).collect();
        let s = summarize(&xs);
        r.var_mc = Some(s.var);
        r.var_mc_se = Some(s.se_var);
        variance_checks(&r, ck);
        reports.push(r);
    }
    out.csv("variance.csv", &reports)?;

    let pts = |f: &dyn Fn(&VarianceReport) -> Option<f64>| -> Vec<(f64, f64)> {
        reports.iter().filter_map(|r| f(r).map(|v| (f64::from(r.q), v))).collect()
    };
    let plot = Plot::log_y()
        .add(Series::new(pts(&|r| Some(r.var_bound)), plot::RED, Style::Both))
        .add(Series::new(pts(&|r| Some(r.var_exact)), plot::BLUE, Style::Both))
        .add(Series::new(pts(&|r| r.var_closed), plot::GREEN, Style::Markers))
        .add(Series::new(pts(&|r| r.var_mc), plot::ORANGE, Style::Markers));
    out.plot("variance.png", |path| plot.save(path));
    Ok(())
}

fn variance_checks(r: &VarianceReport, ck: &mut Checks) {
    const S: &str = "variance";
    let q = r.q;
    ck.holds(
        S,
        &format!("bound_q{q}"),
        r.var_exact <= r.var_bound,
        format!("{:.4e} <= {:.4e}", r.var_exact, r.var_bound),
    );
    ck.at_most(S, &format!("nonnegative_q{q}"), -r.var_exact, 1e-10, format!("exact {:.4e}", r.var_exact));
    if let Some(c) = r.var_closed {
        let gap = (r.var_exact - c).abs() / c.abs().max(1e-4);
        ck.at_most(S, &format!("closed_q{q}"), gap, 1e-6, format!("exact {:.6e} vs closed {c:.6e}", r.var_exact));
    } else {
        println!("note: q={q}: {}", r.notes);
    }
    if let (Some(v), Some(se)) = (r.var_mc, r.var_mc_se) {
        let z = (v - r.var_exact).abs() / se.max(1e-300);
        let close = (v - r.var_exact).abs() <= 1e-12;
        ck.holds(
            S,
            &format!("monte_carlo_q{q}"),
            z <= 4.0 || close,
            format!("sample variance {v:.4e} +- {se:.1e} vs exact {:.4e}", r.var_exact),
        );
    }
}

// -------------------------------------------------------------------- berry

#[derive(Serialize)]
struct BerryRow {
    manifold: Manifold,
    band: String,
    sigma2: f64,
    lambda2: f64,
    var_mu: f64,
    eps: f64,
    lhs: f64,
    spectral_term: f64,
    prefactor: f64,
    ratio: f64,
    corrected_term: f64,
}

impl BerryRow {
    fn new(manifold: Manifold, band: String, r: &BerryReport) -> Self {
        Self {
            manifold,
            band,
            sigma2: r.sigma2,
            lambda2: r.lambda2,
            var_mu: r.var_mu,
            eps: r.eps,
            lhs: r.lhs,
            spectral_term: r.spectral_term,
            prefactor: r.prefactor,
            ratio: r.ratio,
            corrected_term: r.corrected_term,
        }
    }
}

fn default_bands() -> Vec<BandConfig> {
    [vec![1], vec![5], vec![1, 2], vec![1, 5], vec![1, 2, 4, 5], vec![4, 5, 8, 9, 10]]
        .into_iter()
        .map(|eigen| BandConfig { manifold: Manifold::Torus2, eigen })
        .collect()
}

pub fn berry(p: &Params, out: &OutDir, ck: &mut Checks) -> Result<()> {
    const S: &str = "berry";
    let bands = if p.cfg.bands.is_empty() { default_bands() } else { p.cfg.bands.clone() };
    let mut rows = Vec::new();
    for b in &bands {
        let spec = make_band(b.manifold, &b.eigen, Normalization::Raw)?;
        let res = p.resolution.unwrap_or_else(|| default_resolution(&spec));
        let report = berry_report(&spec, res)?;
        let label = b.eigen.iter().map(u32::to_string).collect::<Vec<_>>().join(" ");
        let name = format!("{:?}_{}", b.manifold, label.replace(' ', "_")).to_lowercase();
        if b.eigen.len() == 1 {
            ck.holds(
                S,
                &format!("singleton_{name}"),
                report.spectral_term == 0.0 && report.lhs.abs() <= 1e-12,
                format!("lhs {:.1e}, spectral term {}", report.lhs, report.spectral_term),
            );
        } else if report.eps <= 1e-10 {
            ck.holds(
                S,
                &format!("ratio_{name}"),
                (0.95..=1.05).contains(&report.ratio),
                format!(
                    "lhs / spectral term = {:.6} (lhs / corrected term = {:.6})",
                    report.ratio,
                    report.lhs / report.corrected_term
                ),
            );
        }
        rows.push(BerryRow::new(b.manifold, label, &report));
    }
    out.csv("berry.csv", &rows)?;
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.spectral_term, r.lhs)).collect();
    let hi = pts.iter().map(|p| p.0.max(p.1)).fold(0.0, f64::max);
    let plot = Plot::default().add(Series::new(vec![(0.0, 0.0), (hi, hi)], plot::BLACK, Style::Line)).add(Series::new(
        pts,
        plot::BLUE,
        Style::Markers,
    ));
    out.plot("berry.png", |path| plot.save(path));
    Ok(())
}

// -------------------------------------------------------------------- nodal

#[derive(Serialize)]
struct NodalSummary<'a> {
    field: FieldSummary,
    grid_resolution: usize,
    report: &'a nodal_chaos::nodal::NodalReport,
}

pub fn nodal(p: &Params, out: &OutDir, ck: &mut Checks) -> Result<()> {
    const S: &str = "nodal";
    let spec = p.cfg.field_spec()?;
    let grid_res = p.resolution.unwrap_or(256);
    let chaos_res = p.cfg.chaos_resolution.unwrap_or_else(|| default_resolution(&spec));
    let k = p.fiber.unwrap_or(16);
    let samples = p.samples.unwrap_or(500);
    let qs = if p.cfg.q.is_empty() { Vec::new() } else { p.cfg.q.clone() };
    let forms = p.cfg.forms()?;
    let requests: Vec<(u32, ChaosForm)> = qs.iter().flat_map(|&q| forms.iter().map(move |&f| (q, f))).collect();
    let grid = NodalGrid::new(&spec, grid_res)?;
    let ctx = if requests.is_empty() { None } else { Some(ChaosContext::new(&spec, chaos_res, k)?) };
    let rep = mc_nodal(&spec, samples, &grid, p.level, p.seed, ctx.as_ref().map(|c| (c, requests.as_slice())))?;

    let mut header: Vec<String> = ["seed", "sample", "length", "degenerate"].map(String::from).to_vec();
    header.extend(requests.iter().map(|(q, f)| format!("chaos_q{q}_{}", f.name())));
    let records: Vec<Vec<String>> = rep
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut r = vec![s.seed.to_string(), s.sample.to_string(), fmt(s.length), s.degenerate.to_string()];
            r.extend(rep.chaos_values.iter().map(|col| fmt(col[i])));
            r
        })
        .collect();
    out.csv_records("nodal.csv", &header, &records)?;
    let field = field_summary(&spec, p, chaos_res, k, samples)?;

    let lengths: Vec<f64> = rep.samples.iter().map(|s| s.length).collect();
    ck.holds(
        S,
        "lengths_valid",
        lengths.iter().all(|l| l.is_finite() && *l >= 0.0),
        format!("{} finite nonnegative lengths", lengths.len()),
    );
    if let Some(want) = field.homothetic_mean_length {
        let Summary { mean, se_mean, .. } = rep.length;
        let tol = (0.01 * want).max(4.0 * se_mean);
        ck.at_most(
            S,
            "kac_rice_mean",
            (mean - want).abs(),
            tol,
            format!("mean length {mean:.5} +- {se_mean:.5} vs {want:.5}"),
        );
    }
    for c in &rep.chaos {
        println!(
            "q={} {}: Cov(L, L[q]) = {:.4e}, Var(L[q]) = {:.4e}, gap {:.2e} +- {:.2e}",
            c.q,
            c.form.name(),
            c.cov_with_length,
            c.var.var,
            c.projection_gap,
            c.projection_se
        );
    }
    out.json("nodal_summary.json", &NodalSummary { field, grid_resolution: grid_res, report: &rep })?;
    let plot = Plot::default().add(Series::new(plot::histogram(&lengths, 40), plot::BLUE, Style::Line));
    out.plot("nodal_hist.png", |path| plot.save(path));
    Ok(())
}

fn fmt(x: f64) -> String {
    // Shortest round-trip representation, as the serde-based writers use.
    let s = format!("{x:?}");
    s.trim_end_matches(".0").to_string()
}
