//! Per-sample Wiener chaos components of the nodal length.
//!
//! The `q`-th component is
//! `sum_{a+b=q/2} Theta(a,b)/s_n int_M int_{S(T_xM)} H_2a(f) H_2b(<df,u>/|u|_g) |u|_g du dx`
//! with `|u|_g^2 = u^T g^f_x u`. The two `Lambda` variants rewrite the same
//! integrand through `Lambda = sqrt(n g^f)`; the inverse variant also changes
//! variables on the fiber. `tilde` is the homothetic surrogate built from the
//! raw field and the global constants sigma, lambda.

use crate::field::{FieldBasis, FieldSample, MetricData, SpectralFieldSpec};
use crate::geometry::{build_manifold_quadrature, fiber_directions, sphere_rule, FiberQuadrature, ManifoldQuadrature};
use crate::specfun::{a_coeff, hermite, hermite_table, sphere_area, theta_unchecked};
use crate::stats::pairwise_sum;
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Highest chaos order evaluated.
pub const MAX_Q: u32 = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChaosForm {
    General,
    LambdaForm,
    InverseForm,
    Tilde,
    Closed2,
    Closed4,
}

impl ChaosForm {
    pub fn name(self) -> &'static str {
        match self {
            ChaosForm::General => "general",
            ChaosForm::LambdaForm => "lambda_form",
            ChaosForm::InverseForm => "inverse_form",
            ChaosForm::Tilde => "tilde",
            ChaosForm::Closed2 => "closed2",
            ChaosForm::Closed4 => "closed4",
        }
    }
}

impl std::str::FromStr for ChaosForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "general" => ChaosForm::General,
            "lambda_form" => ChaosForm::LambdaForm,
            "inverse_form" => ChaosForm::InverseForm,
            "tilde" => ChaosForm::Tilde,
            "closed2" => ChaosForm::Closed2,
            "closed4" => ChaosForm::Closed4,
            _ => return Err(Error::InvalidArgument(format!("unknown chaos form {s:?}"))),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChaosStatistic {
    pub q: u32,
    pub value: f64,
    pub form: ChaosForm,
    pub resolution: usize,
    pub k: usize,
    pub level: f64,
    /// Exact spectral value where one exists (`closed2`).
    pub spectral: Option<f64>,
}

/// Quadratures and per-node field data shared by every sample of one spec.
pub struct ChaosContext {
    pub spec: SpectralFieldSpec,
    pub quadrature: ManifoldQuadrature,
    pub basis: FieldBasis,
    pub fibers: Vec<FiberQuadrature>,
    pub metrics: Vec<MetricData>,
    /// Exact average variance and frequency of the raw field.
    pub sigma: f64,
    pub lambda: f64,
    pub k: usize,
}

impl ChaosContext {
    pub fn new(spec: &SpectralFieldSpec, resolution: usize, k: usize) -> Result<Self> {
        spec.validate()?;
        let quadrature = build_manifold_quadrature(spec.manifold, resolution)?;
        let basis = FieldBasis::new(spec, &quadrature.nodes)?;
        let fibers =
            quadrature.nodes.iter().map(|&x| fiber_directions(spec.manifold, x, k)).collect::<Result<Vec<_>>>()?;
        let metrics = (0..basis.len())
            .map(|i| MetricData::from_metric(basis.metric(i), spec.dim()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            spec: spec.clone(),
            quadrature,
            basis,
            fibers,
            metrics,
            sigma: spec.spectral_sigma2().sqrt(),
            lambda: spec.spectral_lambda2().sqrt(),
            k,
        })
    }

    pub fn resolution(&self) -> usize {
        self.quadrature.resolution
    }

    fn n(&self) -> f64 {
        f64::from(self.spec.dim())
    }

    fn stat(&self, q: u32, value: f64, form: ChaosForm, level: f64) -> ChaosStatistic {
        ChaosStatistic { q, value, form, resolution: self.resolution(), k: self.k, level, spectral: None }
    }
}

/// `e^{-t^2/2} H_2a(t) / H_2a(0)`: converts the level-0 density of the
/// `(a, b)` term to level `t`.
pub fn level_factor(t: f64, a: u32) -> f64 {
    let h0 = crate::specfun::hermite_at_zero(a).expect("degree within table");
    (-t * t / 2.0).exp() * hermite(2 * a, t) / h0
}

fn check_q(q: u32) -> Result<()> {
    if q % 2 == 1 {
        return Err(Error::OddOrder(q));
    }
    if q > MAX_Q {
        return Err(Error::DegreeTooLarge { degree: q, max: MAX_Q });
    }
    Ok(())
}

/// `Theta(a, b) * level_factor(t, a)` for `a + b = q/2`, indexed by `a`.
fn coefficients(q: u32, t: f64) -> Vec<f64> {
    let h = q / 2;
    (0..=h).map(|a| theta_unchecked(a, h - a) * if t == 0.0 { 1.0 } else { level_factor(t, a) }).collect()
}

/// Sum over `a` of `coef[a] H_2a(x0) H_2(h-a)(x1)` with both tables given.
fn bichaos(coef: &[f64], hv: &[f64], hg: &[f64]) -> f64 {
    let h = coef.len() - 1;
    (0..=h).map(|a| coef[a] * hv[2 * a] * hg[2 * (h - a)]).sum()
}

/// Chaos component `q` of the nodal length of the normalised field at level `t`.
pub fn chaos_q(ctx: &ChaosContext, sample: &FieldSample, q: u32, form: ChaosForm, t: f64) -> Result<ChaosStatistic> {
    check_q(q)?;
    let value = match form {
        ChaosForm::General | ChaosForm::LambdaForm | ChaosForm::InverseForm => chaos_integral(ctx, sample, q, form, t),
        ChaosForm::Tilde => tilde_integral(ctx, sample, q, t),
        ChaosForm::Closed2 => {
            if q != 2 || t != 0.0 {
                return Err(Error::InvalidArgument("closed2 is the level-0 second chaos".into()));
            }
            return closed2(ctx, sample);
        }
        ChaosForm::Closed4 => {
            if q != 4 || t != 0.0 {
                return Err(Error::InvalidArgument("closed4 is the level-0 fourth chaos".into()));
            }
            return closed4(ctx, sample);
        }
    };
    Ok(ctx.stat(q, value, form, t))
}

fn chaos_integral(ctx: &ChaosContext, sample: &FieldSample, q: u32, form: ChaosForm, t: f64) -> f64 {
    let coef = coefficients(q, t);
    let n = ctx.n();
    let sn = sphere_area(ctx.spec.dim());
    let mut hv = vec![0.0; q as usize + 1];
    let mut hg = vec![0.0; q as usize + 1];
    let values: Vec<f64> = (0..ctx.basis.len())
        .map(|i| {
            let jet = ctx.basis.jet_normalized(i, &sample.coefficients);
            hermite_table(jet.value, &mut hv);
            let md = &ctx.metrics[i];
            let fib = &ctx.fibers[i];
            let mut acc = 0.0;
            match form {
                ChaosForm::General => {
                    for u in &fib.directions {
                        let norm = u.dot(&(md.gf * u)).sqrt();
                        hermite_table(jet.gradient.dot(u) / norm, &mut hg);
                        acc += bichaos(&coef, &hv, &hg) * norm;
                    }
                    acc * fib.weight / sn
                }
                ChaosForm::LambdaForm => {
                    for u in &fib.directions {
                        let lu = (md.lam * u).norm();
                        hermite_table(n.sqrt() * jet.gradient.dot(u) / lu, &mut hg);
                        acc += bichaos(&coef, &hv, &hg) * lu / n.sqrt();
                    }
                    acc * fib.weight / sn
                }
                _ => {
                    let w = md.lam_inv * jet.gradient;
                    let det = md.lam.determinant();
                    for v in &fib.directions {
                        let r = (md.lam_inv * v).norm();
                        hermite_table(n.sqrt() * w.dot(v), &mut hg);
                        acc += bichaos(&coef, &hv, &hg) * r.powf(-(n + 1.0)) / det;
                    }
                    acc * fib.weight / (sn * n.sqrt())
                }
            }
        })
        .collect();
    ctx.quadrature.integrate(&values)
}

fn tilde_integral(ctx: &ChaosContext, sample: &FieldSample, q: u32, t: f64) -> f64 {
    let coef = coefficients(q, t);
    let n = ctx.n();
    let sn = sphere_area(ctx.spec.dim());
    let (sigma, lambda) = (ctx.sigma, ctx.lambda);
    let mut hv = vec![0.0; q as usize + 1];
    let mut hg = vec![0.0; q as usize + 1];
    let values: Vec<f64> = (0..ctx.basis.len())
        .map(|i| {
            let jet = ctx.basis.jet(i, &sample.coefficients);
            hermite_table(jet.value / sigma, &mut hv);
            let fib = &ctx.fibers[i];
            let w = n.sqrt() * jet.gradient / (lambda * sigma);
            let acc: f64 = fib
                .directions
                .iter()
                .map(|v| {
                    hermite_table(w.dot(v), &mut hg);
                    bichaos(&coef, &hv, &hg)
                })
                .sum();
            acc * fib.weight * lambda / (sn * n.sqrt())
        })
        .collect();
    ctx.quadrature.integrate(&values)
}

/// Homothetic surrogate `tilde L{q}` of the raw field.
pub fn tilde_q(ctx: &ChaosContext, sample: &FieldSample, q: u32) -> Result<ChaosStatistic> {
    chaos_q(ctx, sample, q, ChaosForm::Tilde, 0.0)
}

/// `-(lambda s_{n-1} / (2 s_n sqrt(n) sigma^2)) (|phi|^2 - |dphi / lambda|^2)`.
/// The `spectral` field carries the same quantity from the coefficients,
/// `|phi|^2 - |dphi/lambda|^2 = vol sum c_i^2 (1 - e_i/lambda^2)`.
pub fn closed2(ctx: &ChaosContext, sample: &FieldSample) -> Result<ChaosStatistic> {
    let n = ctx.n();
    let dim = ctx.spec.dim();
    let (sigma, lambda) = (ctx.sigma, ctx.lambda);
    let lambda2 = ctx.spec.spectral_lambda2();
    let pre = -lambda * sphere_area(dim - 1) / (2.0 * sphere_area(dim) * n.sqrt() * sigma * sigma);
    let values: Vec<f64> = (0..ctx.basis.len())
        .map(|i| {
            let j = ctx.basis.jet(i, &sample.coefficients);
            j.value * j.value - j.gradient.norm_squared() / lambda2
        })
        .collect();
    let quad = pre * ctx.quadrature.integrate(&values);
    let terms: Vec<f64> =
        ctx.spec.modes.iter().zip(&sample.coefficients).map(|(m, c)| c * c * (1.0 - m.eigenvalue / lambda2)).collect();
    let spectral = pre * ctx.spec.manifold.volume() * pairwise_sum(&terms);
    let mut s = ctx.stat(2, quad, ChaosForm::Closed2, 0.0);
    s.spectral = Some(spectral);
    Ok(s)
}

/// Fourth chaos of the surrogate with the fiber average in closed form:
/// `(lambda s_{n-1}/(24 s_n sqrt n)) int H4(phi/sigma) - avg_v H4(<w,v>)
///  + (2/sigma) H3(phi/sigma)(phi + Delta phi / lambda^2)`, `w = sqrt(n) dphi/(lambda sigma)`.
pub fn closed4(ctx: &ChaosContext, sample: &FieldSample) -> Result<ChaosStatistic> {
    let n = ctx.n();
    let dim = ctx.spec.dim();
    let (sigma, lambda) = (ctx.sigma, ctx.lambda);
    let lambda2 = ctx.spec.spectral_lambda2();
    let pre = lambda * sphere_area(dim - 1) / (24.0 * sphere_area(dim) * n.sqrt());
    // Laplacian coefficients -c_i e_i
    let lap: Vec<f64> = ctx.spec.modes.iter().zip(&sample.coefficients).map(|(m, c)| -c * m.eigenvalue).collect();
    let values: Vec<f64> = (0..ctx.basis.len())
        .map(|i| {
            let j = ctx.basis.jet(i, &sample.coefficients);
            let lphi: f64 = ctx.basis.mode_jets(i).iter().zip(&lap).map(|(m, c)| c * m.value).sum();
            let x = j.value / sigma;
            let w2 = n * j.gradient.norm_squared() / (lambda2 * sigma * sigma);
            let fiber = 3.0 * w2 * w2 / (n * (n + 2.0)) - 6.0 * w2 / n + 3.0;
            hermite(4, x) - fiber + 2.0 / sigma * hermite(3, x) * (j.value + lphi / lambda2)
        })
        .collect();
    Ok(ctx.stat(4, pre * ctx.quadrature.integrate(&values), ChaosForm::Closed4, 0.0))
}

/// Partial chaos sum of `|xi|_G`-type radial functions:
/// `sum_{q<=Q even} A(n,q) int_{S^{n-1}} H_q(<xi,v>/sqrt(v^T G v)) sqrt(v^T G v) dv`.
pub fn chi_partial(xi: &DVector<f64>, g: &DMatrix<f64>, big_q: u32, k: usize) -> Result<f64> {
    let n = xi.len();
    if n == 0 || g.nrows() != n || g.ncols() != n {
        return Err(Error::InvalidArgument("xi and G dimensions disagree".into()));
    }
    if big_q % 2 == 1 {
        return Err(Error::OddOrder(big_q));
    }
    let rule = sphere_rule(n, k);
    let coef: Vec<f64> = (0..=big_q / 2).map(|b| a_coeff(n as u32, b)).collect::<Result<_>>()?;
    let mut h = vec![0.0; big_q as usize + 1];
    let mut acc = 0.0;
    for (v, w) in &rule {
        let s = v.dot(&(g * v));
        if s <= 0.0 {
            return Err(Error::Degenerate("G is not positive definite".into()));
        }
        let s = s.sqrt();
        hermite_table(xi.dot(v) / s, &mut h);
        let sum: f64 = coef.iter().enumerate().map(|(b, c)| c * h[2 * b]).sum();
        acc += w * sum * s;
    }
    Ok(acc)
}

/// One batch row: sample identity plus the statistic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChaosRow {
    pub seed: u64,
    pub sample: u64,
    pub q: u32,
    pub form: ChaosForm,
    pub value: f64,
    pub resolution: usize,
    pub k: usize,
    pub t: f64,
}

/// Evaluates every `(q, form)` pair on samples `0..nsamples` in parallel.
/// Rows come back ordered by sample, then by the order of `requests`.
pub fn chaos_batch(
    ctx: &ChaosContext,
    seed: u64,
    nsamples: u64,
    requests: &[(u32, ChaosForm)],
    t: f64,
) -> Result<Vec<ChaosRow>> {
    let per_sample: Vec<Result<Vec<ChaosRow>>> = (0..nsamples)
        .into_par_iter()
        .map(|i| {
            let sample = crate::field::sample_field_indexed(&ctx.spec, seed, i);
            requests
                .iter()
                .map(|&(q, form)| {
                    let s = chaos_q(ctx, &sample, q, form, t)?;
                    Ok(ChaosRow { seed, sample: i, q, form, value: s.value, resolution: s.resolution, k: s.k, t })
                })
                .collect()
        })
        .collect();
    let mut out = Vec::new();
    for rows in per_sample {
        out.extend(rows?);
    }
    Ok(out)
}

/// Expected nodal length of a homothetic field:
/// `vol(M) s_{n-1} lambda / (s_n sqrt(n))`.
pub fn homothetic_mean_length(vol: f64, n: u32, lambda: f64) -> f64 {
    vol * sphere_area(n - 1) * lambda / (sphere_area(n) * f64::from(n).sqrt())
}
