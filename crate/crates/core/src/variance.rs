//! Exact variances of chaos components, the jet-norm bound, closed forms
//! for the second and fourth chaos of homothetic fields, and the
//! second-chaos cancellation report for random waves.
//!
//! Every double integral over `M x M` goes through [`pair_rule`]: a list of
//! weighted point pairs. Translation-invariant torus fields pin `x` at the
//! origin; rotation-invariant sphere fields pin both points to the equator
//! and integrate over the angle between them.

use nalgebra::{Matrix2, Vector2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::chaos::MAX_Q;
use crate::field::{
    cov_jet_weighted, global_params, metric_data, JetCovariance, MetricData, Normalization, SpectralFieldSpec,
};
use crate::geometry::{build_manifold_quadrature, fiber_directions, gauss_legendre, FiberQuadrature, Manifold, Point};
use crate::specfun::{beta_const, diagram4, sphere_area, theta_unchecked, DiagramArgs};
use crate::stats::pairwise_sum;
use crate::{Error, Result};

/// Weighted point pairs with `sum w F(x, y) ~ int int F dx dy`.
pub fn pair_rule(spec: &SpectralFieldSpec, resolution: usize, reduce: bool) -> Result<Vec<(Point, Point, f64)>> {
    let vol = spec.manifold.volume();
    if reduce && spec.is_invariant() {
        match spec.manifold {
            Manifold::Torus2 => {
                let q = build_manifold_quadrature(Manifold::Torus2, resolution)?;
                let x = Point::new(0.0, 0.0);
                return Ok(q.nodes.iter().zip(&q.weights).map(|(&y, &w)| (x, y, vol * w)).collect());
            }
            Manifold::Sphere2 => {
                if resolution < 4 {
                    return Err(Error::ResolutionTooSmall { got: resolution, min: 4 });
                }
                let (t, w) = gauss_legendre(resolution);
                let x = Point::new(PI / 2.0, 0.0);
                return Ok(t
                    .iter()
                    .zip(&w)
                    .map(|(&ti, &wi)| (x, Point::new(PI / 2.0, ti.acos()), vol * 2.0 * PI * wi))
                    .collect());
            }
        }
    }
    let q = build_manifold_quadrature(spec.manifold, resolution)?;
    let mut out = Vec::with_capacity(q.len() * q.len());
    for (&x, &wx) in q.nodes.iter().zip(&q.weights) {
        for (&y, &wy) in q.nodes.iter().zip(&q.weights) {
            out.push((x, y, wx * wy));
        }
    }
    Ok(out)
}

/// Evaluates `F` on every pair in parallel and sums in pair order.
fn integrate_pairs<F>(pairs: &[(Point, Point, f64)], f: F) -> Result<f64>
where
    F: Fn(Point, Point) -> Result<f64> + Sync,
{
    let values: Vec<Result<f64>> = pairs.par_iter().map(|&(x, y, w)| Ok(w * f(x, y)?)).collect();
    let values = values.into_iter().collect::<Result<Vec<f64>>>()?;
    Ok(pairwise_sum(&values))
}

fn check_even(q: u32) -> Result<()> {
    if q % 2 == 1 {
        return Err(Error::OddOrder(q));
    }
    if q > MAX_Q {
        return Err(Error::DegreeTooLarge { degree: q, max: MAX_Q });
    }
    Ok(())
}

fn unit(spec: &SpectralFieldSpec) -> Result<SpectralFieldSpec> {
    match spec.normalization {
        Normalization::UnitVariance => Ok(spec.clone()),
        Normalization::Raw if spec.is_invariant() => spec.unit_variance(),
        Normalization::Raw => Ok(spec.clone()),
    }
}

/// Density of `E{ L(dx du)[a,b] L(dy dv)[a',b'] }` for unit fiber directions
/// `u` at `x` and `v` at `y`. Zero unless `a + b = a' + b'`.
#[allow(clippy::too_many_arguments)]
pub fn cov_density(
    jc: &JetCovariance,
    mx: &MetricData,
    my: &MetricData,
    u: Vector2<f64>,
    v: Vector2<f64>,
    a: u32,
    b: u32,
    a2: u32,
    b2: u32,
) -> f64 {
    if a + b != a2 + b2 {
        return 0.0;
    }
    let nu = u.dot(&(mx.gf * u)).sqrt();
    let nv = v.dot(&(my.gf * v)).sqrt();
    let corr = correlations(jc, u, v, nu, nv);
    density_with(&corr, nu, nv, a, b, a2, b2)
}

fn correlations(jc: &JetCovariance, u: Vector2<f64>, v: Vector2<f64>, nu: f64, nv: f64) -> [f64; 4] {
    let clamp = |c: f64| c.clamp(-1.0, 1.0);
    [clamp(jc.c), clamp(jc.cpy.dot(&v) / nv), clamp(jc.cpx.dot(&u) / nu), clamp(u.dot(&(jc.cpp * v)) / (nu * nv))]
}

fn density_with(corr: &[f64; 4], nu: f64, nv: f64, a: u32, b: u32, a2: u32, b2: u32) -> f64 {
    let sn = sphere_area(2);
    let args = DiagramArgs::new([2 * a, 2 * b, 2 * a2, 2 * b2], *corr).expect("clamped correlations");
    theta_unchecked(a, b) * theta_unchecked(a2, b2) / (sn * sn) * nu * nv * diagram4(&args)
}

/// Fiber-integrated covariance density summed over all `(a,b), (a',b')`
/// with `a + b = a' + b' = q/2`.
fn pair_variance(
    jc: &JetCovariance,
    mx: &MetricData,
    my: &MetricData,
    fx: &FiberQuadrature,
    fy: &FiberQuadrature,
    q: u32,
) -> f64 {
    let h = q / 2;
    let mut acc = 0.0;
    for u in &fx.directions {
        let nu = u.dot(&(mx.gf * u)).sqrt();
        for v in &fy.directions {
            let nv = v.dot(&(my.gf * v)).sqrt();
            let corr = correlations(jc, *u, *v, nu, nv);
            for a in 0..=h {
                for a2 in 0..=h {
                    acc += density_with(&corr, nu, nv, a, h - a, a2, h - a2);
                }
            }
        }
    }
    acc * fx.weight * fy.weight
}

/// `Var(L[q])` of the normalised field by quadrature over pairs of points
/// and pairs of fiber directions.
pub fn var_exact(spec: &SpectralFieldSpec, q: u32, resolution: usize, k: usize) -> Result<f64> {
    var_exact_with(spec, q, resolution, k, true)
}

pub fn var_exact_with(spec: &SpectralFieldSpec, q: u32, resolution: usize, k: usize, reduce: bool) -> Result<f64> {
    check_even(q)?;
    if q == 0 {
        return Err(Error::InvalidArgument("the zeroth chaos is deterministic".into()));
    }
    let spec = unit(spec)?;
    let pairs = pair_rule(&spec, resolution, reduce)?;
    integrate_pairs(&pairs, |x, y| {
        let jc = cov_jet_weighted(&spec, x, y, |_| 1.0)?;
        let (mx, my) = (metric_data(&spec, x)?, metric_data(&spec, y)?);
        let (fx, fy) = (fiber_directions(spec.manifold, x, k)?, fiber_directions(spec.manifold, y, k)?);
        Ok(pair_variance(&jc, &mx, &my, &fx, &fy, q))
    })
}

/// The two factors of the jet-norm bound: `2^q` and
/// `int int lambda(f,x) lambda(f,y)/n |j''C|^q dx dy`.
pub fn var_bound_parts(spec: &SpectralFieldSpec, q: u32, resolution: usize) -> Result<(f64, f64)> {
    check_even(q)?;
    let spec = unit(spec)?;
    let n = f64::from(spec.dim());
    let pairs = pair_rule(&spec, resolution, true)?;
    let integral = integrate_pairs(&pairs, |x, y| {
        let jc = cov_jet_weighted(&spec, x, y, |_| 1.0)?;
        let (mx, my) = (metric_data(&spec, x)?, metric_data(&spec, y)?);
        Ok(mx.lambda_x * my.lambda_x / n * crate::field::jet_norm(&jc, &mx, &my).powi(q as i32))
    })?;
    Ok((2f64.powi(q as i32), integral))
}

/// `2^q int int lambda(f,x) lambda(f,y)/n |j''C|^q dx dy`. The fiber size
/// is accepted for symmetry with [`var_exact`]; the jet norm is evaluated
/// in closed form.
pub fn var_bound(spec: &SpectralFieldSpec, q: u32, resolution: usize, k: usize) -> Result<f64> {
    let _ = k;
    let (f, i) = var_bound_parts(spec, q, resolution)?;
    Ok(f * i)
}

/// Which argument of the covariance the operator `L = 1 + Delta/lambda^2`
/// acts on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LWhich {
    First,
    Second,
    Both,
}

/// Spectral multiplier of `L` on eigenvalue `e`.
fn l_multiplier(lambda2: f64) -> impl Fn(f64) -> f64 + Copy {
    move |e| 1.0 - e / lambda2
}

/// Jet covariance with `L` applied to the chosen arguments. On a spectral
/// spec `L` multiplies mode `i` by `1 - e_i / lambda^2`.
pub fn l_operator_jet(spec: &SpectralFieldSpec, x: Point, y: Point, which: LWhich) -> Result<JetCovariance> {
    let m = l_multiplier(spec.spectral_lambda2());
    match which {
        LWhich::First | LWhich::Second => cov_jet_weighted(spec, x, y, m),
        LWhich::Both => cov_jet_weighted(spec, x, y, move |e| m(e) * m(e)),
    }
}

pub fn l_operator_cov(spec: &SpectralFieldSpec, x: Point, y: Point, which: LWhich) -> Result<f64> {
    Ok(l_operator_jet(&unit(spec)?, x, y, which)?.c)
}

/// Fails unless the spec has constant variance and an isotropic metric.
pub fn require_homothetic(spec: &SpectralFieldSpec) -> Result<()> {
    if !spec.is_invariant() {
        return Err(Error::NotHomothetic(
            "closed forms need a translation or rotation invariant spec (constant variance)".into(),
        ));
    }
    let p = global_params(spec, 8, 8)?;
    if p.eps > 1e-8 {
        return Err(Error::NotHomothetic(format!(
            "the gradient covariance is not a multiple of the metric (eccentricity {:.3e})",
            p.eps
        )));
    }
    Ok(())
}

/// Expected nodal length `vol s_{n-1} lambda / (s_n sqrt n)` of a
/// homothetic field.
fn mean_length(spec: &SpectralFieldSpec) -> f64 {
    crate::chaos::homothetic_mean_length(spec.manifold.volume(), spec.dim(), spec.spectral_lambda2().sqrt())
}

/// `Var(L[2]) = (L[0]^2 / (2 vol^2)) int int L1C L2C dx dy` on a closed
/// homothetic manifold.
pub fn var2_closed(spec: &SpectralFieldSpec, resolution: usize) -> Result<f64> {
    let spec = unit(spec)?;
    require_homothetic(&spec)?;
    let vol = spec.manifold.volume();
    let l0 = mean_length(&spec);
    let pairs = pair_rule(&spec, resolution, true)?;
    let m = l_multiplier(spec.spectral_lambda2());
    let integral = integrate_pairs(&pairs, |x, y| {
        let l = cov_jet_weighted(&spec, x, y, m)?.c;
        Ok(l * l)
    })?;
    Ok(l0 * l0 / (2.0 * vol * vol) * integral)
}

/// Exact spectral value of [`var2_closed`]: `(L[0]^2/2) sum_i s_i^4 (1 - e_i/lambda^2)^2`
/// for unit-mean-square modes.
pub fn var2_spectral(spec: &SpectralFieldSpec) -> Result<f64> {
    let spec = unit(spec)?;
    require_homothetic(&spec)?;
    let l0 = mean_length(&spec);
    let m = l_multiplier(spec.spectral_lambda2());
    let terms: Vec<f64> = spec.modes.iter().map(|md| (md.std.powi(2) * m(md.eigenvalue)).powi(2)).collect();
    Ok(l0 * l0 / 2.0 * pairwise_sum(&terms))
}

/// `Var(L[4])` on a closed homothetic manifold: the double integral of the
/// fourth-chaos covariance expressed through `C`, its derivatives, and `L`
/// applied to them. `s = s_{n-1}`, `A = (n/lambda^2) C''`.
pub fn var4_closed(spec: &SpectralFieldSpec, resolution: usize) -> Result<f64> {
    let spec = unit(spec)?;
    require_homothetic(&spec)?;
    let dim = spec.dim();
    let n = f64::from(dim);
    let lambda2 = spec.spectral_lambda2();
    let s = sphere_area(dim - 1);
    let beta4 = beta_const(dim, 4)?;
    let pre = lambda2.sqrt() * s / (24.0 * sphere_area(dim) * n.sqrt());
    let m = l_multiplier(lambda2);
    let pairs = pair_rule(&spec, resolution, true)?;
    let integral = integrate_pairs(&pairs, |x, y| {
        let j = cov_jet_weighted(&spec, x, y, |_| 1.0)?;
        let l1 = cov_jet_weighted(&spec, x, y, m)?;
        let l12 = cov_jet_weighted(&spec, x, y, move |e| m(e) * m(e))?.c;
        Ok(var4_integrand(&j, &l1, l12, n, lambda2, s, beta4))
    })?;
    Ok(pre * pre * integral)
}

fn var4_integrand(j: &JetCovariance, l1: &JetCovariance, l12: f64, n: f64, lambda2: f64, s: f64, beta4: f64) -> f64 {
    let c = j.c;
    let lc = l1.c;
    let k = n * n / (lambda2 * lambda2);
    let (px2, py2) = (j.cpx.norm_squared(), j.cpy.norm_squared());
    let a: Matrix2<f64> = j.cpp * (n / lambda2);
    let ata = a.transpose() * a;
    let tr2 = (ata * ata).trace();
    let tr = ata.trace();
    24.0 * c.powi(4) + 144.0 * (0.5 * c * c * lc * lc + c.powi(3) * l12 / 6.0) + 48.0 * c.powi(3) * 2.0 * lc
        - 24.0 / s * k * beta4 * (px2 * px2 + py2 * py2)
        + 24.0 / (s * s) * beta4 * beta4 * (2.0 / 3.0 * tr2 + tr * tr / 3.0)
        - 48.0 / s * k * beta4 * (py2 * j.cpy.dot(&l1.cpy) + px2 * j.cpx.dot(&l1.cpx))
}

/// Second-chaos cancellation for a band random wave.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BerryReport {
    pub sigma2: f64,
    pub lambda2: f64,
    /// Variance of the spectral measure `mu_I` of squared frequencies.
    pub var_mu: f64,
    pub eps: f64,
    /// `Var(L[2]) / lambda^2`
    pub lhs: f64,
    /// `s_{n-1}/(2 s_n sqrt n) * (1/sigma^2) * Var(mu_I)/lambda^4`
    pub spectral_term: f64,
    pub prefactor: f64,
    /// `lhs / spectral_term`, `NaN` when both vanish.
    pub ratio: f64,
    /// The spectral term rescaled by `vol^2 s_{n-1}/(s_n sqrt n)`, which is
    /// what the exact second-chaos variance reduces to at `eps = 0`.
    pub corrected_term: f64,
}

pub fn berry_report(spec: &SpectralFieldSpec, resolution: usize) -> Result<BerryReport> {
    let dim = spec.dim();
    let n = f64::from(dim);
    let sigma2 = spec.spectral_sigma2();
    let lambda2 = spec.spectral_lambda2();
    let dev: Vec<f64> = spec.modes.iter().map(|m| m.std * m.std / sigma2 * (m.eigenvalue - lambda2).powi(2)).collect();
    let var_mu = pairwise_sum(&dev);
    let eps = global_params(spec, resolution.max(8), 8)?.eps;
    let lhs = var2_closed(spec, resolution)? / lambda2;
    let prefactor = sphere_area(dim - 1) / (2.0 * sphere_area(dim) * n.sqrt());
    let spectral_term = prefactor / sigma2 * var_mu / (lambda2 * lambda2);
    let vol = spec.manifold.volume();
    let corrected_term = spectral_term * vol * vol * sphere_area(dim - 1) / (sphere_area(dim) * n.sqrt());
    let ratio = if spectral_term == 0.0 && lhs.abs() < 1e-300 { f64::NAN } else { lhs / spectral_term };
    Ok(BerryReport { sigma2, lambda2, var_mu, eps, lhs, spectral_term, prefactor, ratio, corrected_term })
}

/// Diagnostic row for a sphere band `{l, l+1}`: the second-chaos variance
/// scaled by `l^{n-1}` and divided by the window width and the eccentricity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonochromaticRow {
    pub ell: u32,
    pub alpha: u32,
    pub eps: f64,
    pub lhs: f64,
    /// `lhs l^{n-1} / alpha`
    pub scaled: f64,
    /// `scaled / eps`; infinite when the band is homothetic.
    pub scaled_over_eps: f64,
}

pub fn monochromatic_table(ells: &[u32], resolution: usize) -> Result<Vec<MonochromaticRow>> {
    ells.iter()
        .map(|&ell| {
            let spec = crate::field::make_band(Manifold::Sphere2, &[ell, ell + 1], Normalization::Raw)?;
            let r = berry_report(&spec, resolution)?;
            let scaled = r.lhs * f64::from(ell).powi(spec.dim() as i32 - 1);
            Ok(MonochromaticRow { ell, alpha: 1, eps: r.eps, lhs: r.lhs, scaled, scaled_over_eps: scaled / r.eps })
        })
        .collect()
}

/// Exact and bounded variance of one chaos order, with an optional Monte
/// Carlo estimate filled in by the caller.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    pub spec_hash: String,
    pub q: u32,
    pub var_exact: f64,
    pub var_bound: f64,
    pub var_closed: Option<f64>,
    pub var_mc: Option<f64>,
    pub var_mc_se: Option<f64>,
    pub resolution: usize,
    pub k: usize,
    pub notes: String,
}

pub fn variance_report(spec: &SpectralFieldSpec, q: u32, resolution: usize, k: usize) -> Result<VarianceReport> {
    let var_exact = var_exact(spec, q, resolution, k)?;
    let var_bound = var_bound(spec, q, resolution, k)?;
    let homothetic = require_homothetic(&unit(spec)?);
    let (var_closed, notes) = match (q, homothetic) {
        (2, Ok(())) => (Some(var2_closed(spec, resolution)?), "closed form: second chaos".to_string()),
        (4, Ok(())) => (Some(var4_closed(spec, resolution)?), "closed form: fourth chaos".to_string()),
        (_, Err(e)) => (None, format!("no closed form: {e}")),
        _ => (None, "no closed form for this order".to_string()),
    };
    Ok(VarianceReport {
        spec_hash: spec.hash_hex(),
        q,
        var_exact,
        var_bound,
        var_closed,
        var_mc: None,
        var_mc_se: None,
        resolution,
        k,
        notes,
    })
}
