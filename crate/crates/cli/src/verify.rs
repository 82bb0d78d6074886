//! Runtime verification suites: the invariant checks of each library
//! module, evaluated against independent oracles and recorded as
//! [`Check`]s. The JSON report contains no timings so identical seeds give
//! identical bytes.

use anyhow::{bail, Result};
use nalgebra::{DMatrix, DVector, Matrix2};
use num::complex::Complex64;
use num::{BigInt, BigRational, FromPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::f64::consts::PI;

use nodal_chaos::chaos::{chaos_q, closed2, tilde_q, ChaosContext, ChaosForm};
use nodal_chaos::field::{
    cov_jet, global_params, jet_norm, make_anisotropic, make_arw, make_band, make_rsh, metric_data, mode_value_table,
    sample_field_indexed, Eigenfunction, Normalization, SpectralFieldSpec,
};
use nodal_chaos::geometry::{
    build_manifold_quadrature, sphere_change_check, sphere_frame, sphere_rule, spherical_moment_suite, Manifold, Point,
};
use nodal_chaos::nodal::{mc_nodal, nodal_length, NodalGrid};
use nodal_chaos::specfun::{
    a_coeff, beta_const, c_chi, c_dq, coefficient_bound_exact, diagram4_generic, hermite_eval, kappa, laguerre_eval,
    sphere_area, theta, wick_oracle,
};
use nodal_chaos::stats::{covariance, summarize};
use nodal_chaos::variance::{var2_closed, var4_closed, var_bound, var_exact, var_exact_with};

use crate::oracle;
use crate::output::Checks;

pub const SUITES: [&str; 6] = ["specfun", "geometry", "field", "chaos", "variance", "nodal"];

#[derive(Clone, Copy, Debug)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Fault injection: flips the sign of every `Theta` value the checks
    /// read, to confirm that the suite notices.
    pub tamper_theta_sign: bool,
}

#[derive(Serialize)]
pub struct Report<'a> {
    pub suite: &'a str,
    pub seed: u64,
    pub passed: usize,
    pub failed: usize,
    pub checks: &'a [crate::output::Check],
}

pub fn run(suite: &str, opts: VerifyOptions, checks: &mut Checks) -> Result<()> {
    let selected: Vec<&str> = match suite {
        "all" => SUITES.to_vec(),
        s if SUITES.contains(&s) => vec![s],
        s => bail!("unknown suite {s:?}; expected one of {} or all", SUITES.join(", ")),
    };
    for s in selected {
        match s {
            "specfun" => specfun(opts, checks),
            "geometry" => geometry(opts, checks),
            "field" => field(opts, checks),
            "chaos" => chaos(opts, checks),
            "variance" => variance(opts, checks),
            "nodal" => nodal(opts, checks),
            _ => unreachable!(),
        }
    }
    Ok(())
}

fn rng(opts: VerifyOptions, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(opts.seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

// ------------------------------------------------------------------ specfun

fn specfun(opts: VerifyOptions, ck: &mut Checks) {
    const S: &str = "specfun";
    let th = |a, b| theta(a, b).map(|t| if opts.tamper_theta_sign { -t } else { t });

    let mut worst = 0.0_f64;
    for q in 0..=12 {
        for i in 0..50 {
            let x = -5.0 + 10.0 * f64::from(i) / 49.0;
            let (want, scale) = oracle::hermite_explicit(q, x);
            match hermite_eval(q, x) {
                Ok(h) => worst = worst.max((h - want).abs() / scale.max(1.0)),
                Err(e) => return ck.error(S, "hermite_generating_function", e),
            }
        }
    }
    ck.at_most(S, "hermite_generating_function", worst, 1e-10, format!("max relative gap {worst:.2e}, q <= 12"));

    let rule = oracle::gauss_hermite(24);
    let mut worst = 0.0_f64;
    for q in 0..=8u32 {
        for q2 in 0..=8u32 {
            let m: f64 =
                rule.iter().map(|&(x, w)| w * hermite_eval(q, x).unwrap() * hermite_eval(q2, x).unwrap()).sum();
            let want = if q == q2 { oracle::factorial(q) } else { 0.0 };
            worst = worst.max((m - want).abs() / (oracle::factorial(q) * oracle::factorial(q2)).sqrt());
        }
    }
    ck.at_most(S, "hermite_orthogonality", worst, 1e-8, format!("max normalised gap {worst:.2e}, q, q' <= 8"));

    let mut r = rng(opts, 1);
    let corr = |r: &mut ChaCha8Rng| BigRational::new(BigInt::from(r.random_range(-1000i64..=1000)), BigInt::from(1000));
    let tuples: Vec<[BigRational; 4]> =
        (0..20).map(|_| [corr(&mut r), corr(&mut r), corr(&mut r), corr(&mut r)]).collect();
    let (mut n, mut bad) = (0usize, 0usize);
    let one = BigRational::from_u32(1).unwrap();
    let zero = BigRational::zero();
    for s in 0..=6u32 {
        for a in 0..=s {
            for a2 in 0..=s {
                let deg = [a, s - a, a2, s - a2];
                for [c13, c14, c23, c24] in &tuples {
                    let cov = [
                        [one.clone(), zero.clone(), c13.clone(), c14.clone()],
                        [zero.clone(), one.clone(), c23.clone(), c24.clone()],
                        [c13.clone(), c23.clone(), one.clone(), zero.clone()],
                        [c14.clone(), c24.clone(), zero.clone(), one.clone()],
                    ];
                    n += 1;
                    if diagram4_generic(deg, c13, c14, c23, c24) != wick_oracle(deg, &cov) {
                        bad += 1;
                    }
                }
            }
        }
    }
    ck.holds(S, "diagram_formula_exact", bad == 0, format!("{n} rational comparisons, {bad} mismatches"));

    let mut worst = 0.0_f64;
    for b in 0..=5 {
        worst = worst.max(rel(c_chi(b).unwrap(), oracle::c_chi(b)));
    }
    ck.at_most(S, "c_chi_quadrature", worst, 1e-8, format!("max relative gap {worst:.2e}, b <= 5"));

    let mut worst = 0.0_f64;
    for a in 0..=6u32 {
        for b in 0..=6 - a {
            worst = worst.max(rel(th(a, b).unwrap(), oracle::theta(a, b)));
        }
    }
    ck.at_most(S, "theta_oracle", worst, 1e-8, format!("max relative gap {worst:.2e}, a + b <= 6"));
    let t02 = th(0, 2).unwrap();
    ck.at_most(S, "theta_0_2", (t02 + 1.0 / 24.0).abs(), 1e-15, format!("Theta(0,2) = {t02}"));

    let mut r = rng(opts, 2);
    let mut worst = 0.0_f64;
    for d in [2u32, 3, 4] {
        let sph = sphere_rule(d as usize, 16);
        for q in [2u32, 4, 6] {
            let c = c_dq(d, q).unwrap();
            for _ in 0..20 {
                let xi = DVector::from_fn(d as usize, |_, _| r.random_range(-2.5..2.5));
                let s: f64 = sph.iter().map(|(v, w)| w * hermite_eval(q, xi.dot(v)).unwrap()).sum();
                let l = laguerre_eval(q / 2, f64::from(d) / 2.0 - 1.0, xi.norm_squared() / 2.0).unwrap();
                worst = worst.max((l - c * s).abs() / (1.0 + xi.norm().powi(q as i32)));
            }
        }
    }
    ck.at_most(S, "laguerre_identity", worst, 1e-8, format!("max scaled gap {worst:.2e}"));

    let mut ok = true;
    let mut count = 0;
    for h in 0..=5u32 {
        let qf = BigInt::from_u64((1..=2 * u64::from(h)).product()).unwrap();
        for a in 0..=h {
            for a2 in 0..=h {
                count += 1;
                ok &= kappa(a, h - a, a2, h - a2) <= qf;
            }
        }
    }
    ck.holds(S, "vandermonde_bound", ok, format!("kappa <= q! on {count} splits, q <= 10"));

    let mut worst = 0.0_f64;
    for n in 1..=5 {
        for q in 0..=8 {
            worst = worst.max(rel(beta_const(n, q).unwrap(), oracle::beta(n, q)));
        }
    }
    ck.at_most(S, "beta_quadrature", worst, 1e-10, format!("max relative gap {worst:.2e}, n <= 5, q <= 8"));

    let mut worst = 0.0_f64;
    for n in 1..=6 {
        worst = worst.max(rel(sphere_area(n), oracle::sphere_area(n)));
        for b in 0..=4 {
            worst = worst.max(rel(a_coeff(n, b).unwrap(), oracle::a_coeff(n, b)));
        }
        if n >= 2 {
            for q in (0..=12).step_by(2) {
                worst = worst.max(rel(c_dq(n, q).unwrap(), oracle::c_dq(n, q)));
            }
        }
    }
    ck.at_most(S, "area_a_cdq_oracles", worst, 1e-8, format!("max relative gap {worst:.2e}"));

    let mut ok = true;
    for q in (0..=12).step_by(2) {
        let (l, r) = coefficient_bound_exact(q).unwrap();
        ok &= if q == 0 { l == r } else { l < r };
    }
    ck.holds(S, "coefficient_bound", ok, "equality at q = 0, strict for 2 <= q <= 12 (exact)");
}

// ----------------------------------------------------------------- geometry

fn geometry(opts: VerifyOptions, ck: &mut Checks) {
    const S: &str = "geometry";
    let mut r = rng(opts, 3);
    let mut worst = 0.0_f64;
    for n in 1..=4usize {
        // The circle rule uses K = 256 nodes. Higher spheres use the product
        // rule, exact for the polynomial integrands at 10 nodes per level.
        let k = if n <= 2 { 256 } else { 10 };
        for _ in 0..20 {
            let a = DMatrix::from_fn(n, n, |_, _| r.random_range(-2.0..2.0));
            let x = DVector::from_fn(n, |_, _| r.random_range(-2.0..2.0));
            let y = DVector::from_fn(n, |_, _| r.random_range(-2.0..2.0));
            match spherical_moment_suite(n, &a, &x, &y, k) {
                Ok(rep) => {
                    for c in rep {
                        worst = worst.max(c.deviation / (1.0 + c.closed_form.abs()));
                    }
                }
                Err(e) => return ck.error(S, "spherical_identities", e),
            }
        }
    }
    let mut change = 0.0_f64;
    let mut tried = 0;
    while tried < 20 {
        let l: Matrix2<f64> = Matrix2::from_fn(|_, _| r.random_range(-2.0..2.0));
        // The equispaced rule converges geometrically at a rate set by the
        // condition number; beyond ~10 K = 256 no longer reaches 1e-8.
        let sv = l.singular_values();
        if sv.max() > 8.0 * sv.min() {
            continue;
        }
        tried += 1;
        change = change.max(sphere_change_check(&l, 256).unwrap());
    }
    ck.at_most(S, "spherical_identities", worst, 1e-8, format!("max scaled deviation {worst:.2e}, n <= 4"));
    ck.at_most(
        S,
        "sphere_change_of_variables",
        change,
        1e-8,
        format!("max deviation {change:.2e}, K = 256, condition number <= 8"),
    );

    let spec = make_band(Manifold::Torus2, &[1, 2, 4, 5], Normalization::Raw).unwrap();
    let res = 9;
    let quad = build_manifold_quadrature(Manifold::Torus2, res).unwrap();
    let (vals, _) = mode_value_table(&spec, &quad.nodes).unwrap();
    let m = spec.len();
    let mut worst = 0.0_f64;
    for _ in 0..60 {
        let idx: [usize; 4] = std::array::from_fn(|_| r.random_range(0..m));
        let prod: Vec<f64> = (0..quad.len()).map(|p| idx.iter().map(|&i| vals[p * m + i]).product()).collect();
        let got = quad.integrate(&prod);
        let want = torus_product_integral(idx.map(|i| spec.modes[i].id));
        worst = worst.max((got - want).abs());
    }
    ck.at_most(
        S,
        "torus_trigonometric_exactness",
        worst,
        1e-12,
        format!("max gap {worst:.2e}, frequency 2, res {res}"),
    );

    let mut worst_ratio = 0.0_f64;
    let mut worst_speed = 0.0_f64;
    for _ in 0..20 {
        let p = Point::new(r.random_range(0.3..PI - 0.3), r.random_range(0.0..2.0 * PI));
        let dir = r.random_range(0.0..2.0 * PI);
        let dist = |h: f64| {
            let q = Point::new(p.x1 + h * dir.cos(), p.x2 + h * dir.sin());
            let (a, b) = (sphere_frame(p).unwrap(), sphere_frame(q).unwrap());
            (a[0] - b[0]).norm().max((a[1] - b[1]).norm())
        };
        let (d1, d2) = (dist(1e-3), dist(5e-4));
        worst_ratio = worst_ratio.max((d1 / d2 - 2.0).abs());
        worst_speed = worst_speed.max(d1 / 1e-3);
    }
    ck.at_most(
        S,
        "frame_smoothness",
        worst_ratio,
        0.05,
        format!("frame change is linear in h: max |ratio - 2| {worst_ratio:.2e}, max rate {worst_speed:.3}"),
    );
}

/// `int_T prod phi_i` for torus eigenfunctions, summed exactly over the
/// exponentials in `sqrt(2) cos` and `sqrt(2) sin`.
fn torus_product_integral(ids: [Eigenfunction; 4]) -> f64 {
    let mut total = Complex64::new(0.0, 0.0);
    for signs in 0..16u32 {
        let mut c = Complex64::new(1.0, 0.0);
        let mut freq = [0i32; 2];
        for (j, id) in ids.iter().enumerate() {
            let s = if signs >> j & 1 == 1 { -1 } else { 1 };
            let (k, coef) = match id {
                Eigenfunction::TorusCos { k } => (*k, Complex64::new(0.5_f64.sqrt(), 0.0)),
                Eigenfunction::TorusSin { k } => (*k, Complex64::new(0.0, -0.5_f64.sqrt() * f64::from(s))),
                Eigenfunction::SphereHarmonic { .. } => unreachable!(),
            };
            c *= coef;
            freq[0] += s * k[0];
            freq[1] += s * k[1];
        }
        if freq == [0, 0] {
            total += c;
        }
    }
    total.re
}

// -------------------------------------------------------------------- field

fn test_specs() -> Vec<(&'static str, SpectralFieldSpec)> {
    vec![
        ("rsh5", make_rsh(5).unwrap()),
        ("arw5", make_arw(5).unwrap()),
        ("band15", make_band(Manifold::Torus2, &[1, 5], Normalization::UnitVariance).unwrap()),
        ("aniso0.2", make_anisotropic(&[([1, 0], 1.0), ([0, 1], 1.2)]).unwrap()),
    ]
}

fn random_point(r: &mut ChaCha8Rng, m: Manifold) -> Point {
    match m {
        Manifold::Torus2 => Point::new(r.random(), r.random()),
        Manifold::Sphere2 => Point::new(r.random_range(0.05..PI - 0.05), r.random_range(0.0..2.0 * PI)),
    }
}

fn field(opts: VerifyOptions, ck: &mut Checks) {
    const S: &str = "field";
    let mut r = rng(opts, 4);
    let mut worst_norm = 0.0_f64;
    let mut worst_sym = 0.0_f64;
    for (_, spec) in test_specs() {
        let pts: Vec<Point> = (0..30).map(|_| random_point(&mut r, spec.manifold)).collect();
        let mds: Vec<_> = pts.iter().map(|&p| metric_data(&spec, p).unwrap()).collect();
        for i in 0..pts.len() {
            for j in i..pts.len() {
                let xy = cov_jet(&spec, pts[i], pts[j]).unwrap();
                let yx = cov_jet(&spec, pts[j], pts[i]).unwrap().swapped();
                worst_norm = worst_norm.max(jet_norm(&xy, &mds[i], &mds[j]));
                let d = (xy.c - yx.c)
                    .abs()
                    .max((xy.cpx - yx.cpx).amax())
                    .max((xy.cpy - yx.cpy).amax())
                    .max((xy.cpp - yx.cpp).amax());
                worst_sym = worst_sym.max(d);
            }
        }
    }
    ck.at_most(S, "cauchy_schwarz", worst_norm, 1.0 + 1e-12, format!("max jet norm {worst_norm:.15}"));
    ck.at_most(S, "covariance_symmetry", worst_sym, 1e-12, format!("max asymmetry {worst_sym:.2e}"));

    let mut ok = true;
    let mut detail = Vec::new();
    for (manifold, eig) in [(Manifold::Torus2, vec![1u32, 2]), (Manifold::Sphere2, vec![1, 3])] {
        let raw = make_band(manifold, &eig, Normalization::Raw).unwrap();
        let unit = raw.unit_variance().unwrap();
        let (a, b) = (global_params(&raw, 16, 8).unwrap(), global_params(&unit, 16, 8).unwrap());
        ok &= b.eps <= a.eps + 1e-12;
        detail.push(format!("{manifold:?} {eig:?}: {:.3e} <= {:.3e}", b.eps, a.eps));
    }
    ck.holds(S, "eccentricity_normalisation", ok, detail.join("; "));

    let mut worst = 0.0_f64;
    for spec in [make_rsh(5).unwrap(), make_rsh(12).unwrap(), make_arw(5).unwrap(), make_arw(25).unwrap()] {
        let e = spec.modes[0].eigenvalue;
        let quad = build_manifold_quadrature(spec.manifold, 12).unwrap();
        for &p in &quad.nodes {
            worst = worst.max((metric_data(&spec, p).unwrap().lambda_x.powi(2) / e - 1.0).abs());
        }
    }
    ck.at_most(S, "single_eigenvalue_frequency", worst, 1e-10, format!("max |lambda(x)^2 / e - 1| {worst:.2e}"));
}

// -------------------------------------------------------------------- chaos

fn chaos(opts: VerifyOptions, ck: &mut Checks) {
    const S: &str = "chaos";
    let band = make_band(Manifold::Torus2, &[1, 5], Normalization::UnitVariance).unwrap();
    let ctx = ChaosContext::new(&band, 16, 8).unwrap();
    let n = 500;
    let vals: Vec<[f64; 2]> = (0..n)
        .map(|i| {
            let s = sample_field_indexed(&band, opts.seed, i);
            [2, 4].map(|q| chaos_q(&ctx, &s, q, ChaosForm::General, 0.0).unwrap().value)
        })
        .collect();
    let c2: Vec<f64> = vals.iter().map(|v| v[0]).collect();
    let c4: Vec<f64> = vals.iter().map(|v| v[1]).collect();
    for (q, xs) in [(2, &c2), (4, &c4)] {
        let s = summarize(xs);
        ck.at_most(
            S,
            &format!("centering_q{q}"),
            s.mean.abs() / s.se_mean,
            4.0,
            format!("mean {:.3e} +- {:.3e} over {n} samples", s.mean, s.se_mean),
        );
    }
    let (cov, se) = covariance(&c2, &c4);
    ck.at_most(S, "orthogonality_q2_q4", cov.abs() / se, 4.0, format!("Cov {cov:.3e} +- {se:.3e}"));

    let spec = make_anisotropic(&[([1, 0], 1.0), ([0, 1], 1.6), ([1, 1], 0.8)]).unwrap();
    let s = sample_field_indexed(&spec, opts.seed, 0);
    let gap = |res, k, form| {
        let ctx = ChaosContext::new(&spec, res, k).unwrap();
        let g = chaos_q(&ctx, &s, 4, ChaosForm::General, 0.0).unwrap().value;
        (g - chaos_q(&ctx, &s, 4, form, 0.0).unwrap().value).abs()
    };
    for form in [ChaosForm::LambdaForm, ChaosForm::InverseForm] {
        let (coarse, fine) = (gap(8, 6, form), gap(16, 12, form));
        ck.holds(
            S,
            &format!("form_equivalence_{}", form.name()),
            fine * 2.0 <= coarse || fine < 1e-12,
            format!("gap to general {coarse:.3e} -> {fine:.3e} when resolution and K double"),
        );
    }

    let mut worst = 0.0_f64;
    for spec in [make_arw(5).unwrap(), make_rsh(3).unwrap()] {
        let ctx = ChaosContext::new(&spec, 32, 16).unwrap();
        for i in 0..3 {
            let s = sample_field_indexed(&spec, opts.seed, i);
            for q in [2, 4, 6] {
                let a = chaos_q(&ctx, &s, q, ChaosForm::General, 0.0).unwrap().value;
                worst = worst.max((a - tilde_q(&ctx, &s, q).unwrap().value).abs());
            }
        }
    }
    ck.at_most(S, "homothetic_coincidence", worst, 1e-8, format!("max |chaos_q - tilde_q| {worst:.2e}"));

    let mut ok = true;
    for spec in [make_arw(5).unwrap(), make_rsh(5).unwrap()] {
        let ctx = ChaosContext::new(&spec, 16, 8).unwrap();
        for i in 0..10 {
            ok &= closed2(&ctx, &sample_field_indexed(&spec, opts.seed, i)).unwrap().spectral == Some(0.0);
        }
    }
    ck.holds(S, "second_chaos_cancellation", ok, "closed2 spectral value exactly 0 for single eigenvalues");
}

// ----------------------------------------------------------------- variance

fn variance(opts: VerifyOptions, ck: &mut Checks) {
    const S: &str = "variance";
    let mut bound_ok = true;
    let mut nonneg = f64::INFINITY;
    let mut rows = Vec::new();
    for (name, spec) in test_specs() {
        let res = if spec.manifold == Manifold::Sphere2 { 48 } else { 32 };
        for q in [2, 4] {
            match (var_exact(&spec, q, res, 16), var_bound(&spec, q, res, 16)) {
                (Ok(e), Ok(b)) => {
                    bound_ok &= e <= b;
                    nonneg = nonneg.min(e);
                    rows.push(format!("{name} q={q} {e:.3e} <= {b:.3e}"));
                }
                (Err(e), _) | (_, Err(e)) => return ck.error(S, "covariance_bound", e),
            }
        }
    }
    ck.holds(S, "covariance_bound", bound_ok, rows.join("; "));
    ck.at_most(S, "nonnegative", -nonneg, 1e-10, format!("smallest exact variance {nonneg:.3e}"));

    let mut worst = 0.0_f64;
    for spec in [
        make_band(Manifold::Torus2, &[1, 5], Normalization::UnitVariance).unwrap(),
        make_band(Manifold::Sphere2, &[1, 2], Normalization::UnitVariance).unwrap(),
        make_arw(5).unwrap(),
    ] {
        let res = if spec.manifold == Manifold::Sphere2 { 32 } else { 24 };
        let pairs = [(2, var2_closed(&spec, res).unwrap()), (4, var4_closed(&spec, res).unwrap())];
        for (q, closed) in pairs {
            let e = var_exact(&spec, q, res, 32).unwrap();
            worst = worst.max((e - closed).abs() / closed.abs().max(1e-4));
        }
    }
    ck.at_most(S, "closed_forms", worst, 1e-6, format!("max relative gap exact vs closed {worst:.2e}"));

    let mut worst = 0.0_f64;
    for (spec, res) in [(make_arw(2).unwrap(), 8), (make_rsh(2).unwrap(), 8)] {
        for q in [2, 4] {
            let a = var_exact_with(&spec, q, res, 8, true).unwrap();
            let b = var_exact_with(&spec, q, res, 8, false).unwrap();
            worst = worst.max((a - b).abs() / a.abs().max(1.0));
        }
    }
    ck.at_most(S, "stationarity_reduction", worst, 1e-10, format!("max gap reduced vs full {worst:.2e}"));

    let band = make_band(Manifold::Torus2, &[1, 5], Normalization::UnitVariance).unwrap();
    let grid = NodalGrid::new(&band, 64).unwrap();
    let rep = mc_nodal(&band, 300, &grid, 0.0, opts.seed, None).unwrap();
    let v2 = var_exact(&band, 2, 24, 16).unwrap();
    let l = rep.length;
    ck.holds(
        S,
        "second_chaos_lower_bound",
        l.var >= v2 - 4.0 * l.se_var,
        format!("Var L {:.4e} +- {:.1e} >= Var L[2] {v2:.4e}", l.var, l.se_var),
    );
}

// -------------------------------------------------------------------- nodal

fn nodal(opts: VerifyOptions, ck: &mut Checks) {
    const S: &str = "nodal";
    for (name, spec) in [
        ("torus", make_band(Manifold::Torus2, &[1, 2, 5], Normalization::UnitVariance).unwrap()),
        ("sphere", make_rsh(4).unwrap()),
    ] {
        let s = sample_field_indexed(&spec, opts.seed, 0);
        let len = |res| nodal_length(&NodalGrid::new(&spec, res).unwrap(), &s, 0.0).unwrap().length;
        let (a, b, c) = (len(64), len(128), len(256));
        let ratio = (a - b).abs() / (b - c).abs();
        ck.holds(
            S,
            &format!("refinement_{name}"),
            ratio > 2.5,
            format!("lengths {a:.6} {b:.6} {c:.6}, Cauchy ratio {ratio:.2} (4 for second order)"),
        );
    }

    let band = make_band(Manifold::Torus2, &[1, 5], Normalization::UnitVariance).unwrap();
    let grid = NodalGrid::new(&band, 64).unwrap();
    let rep = mc_nodal(&band, 300, &grid, 0.0, opts.seed ^ 1, None).unwrap();
    let v = var_exact(&band, 2, 24, 16).unwrap() + var_exact(&band, 4, 24, 16).unwrap();
    let l = rep.length;
    ck.holds(
        S,
        "variance_dominance",
        l.var >= v - 4.0 * l.se_var,
        format!("Var L {:.4e} +- {:.1e} >= Var L[2] + Var L[4] = {v:.4e}", l.var, l.se_var),
    );

    let arw = make_arw(5).unwrap();
    let grid = NodalGrid::new(&arw, 128).unwrap();
    let ctx = ChaosContext::new(&arw, 16, 16).unwrap();
    let req = [(2, ChaosForm::General), (4, ChaosForm::General)];
    let rep = mc_nodal(&arw, 300, &grid, 0.0, opts.seed, Some((&ctx, &req))).unwrap();
    for c in &rep.chaos {
        ck.at_most(
            S,
            &format!("projection_q{}", c.q),
            c.projection_gap.abs() / c.projection_se.max(1e-300),
            4.0,
            format!("Cov(L, L[q]) - Var(L[q]) = {:.3e} +- {:.3e}", c.projection_gap, c.projection_se),
        );
    }

    let grid = NodalGrid::new(&band, 32).unwrap();
    let mut ok = true;
    for i in 0..5 {
        let s = sample_field_indexed(&band, opts.seed, i);
        // |f| <= |c / std| everywhere by Cauchy-Schwarz.
        let bound: f64 = s.coefficients.iter().zip(&band.modes).map(|(c, m)| (c / m.std).powi(2)).sum::<f64>().sqrt();
        ok &= nodal_length(&grid, &s, 1.01 * bound).unwrap().length == 0.0;
    }
    ck.holds(S, "level_above_range", ok, "no level set above the sup bound");
}
