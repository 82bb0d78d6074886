//! Pointwise evaluation: first jets of samples, analytic jet covariances,
//! the Adler-Taylor metric and the global parameters sigma, lambda, eps.

use nalgebra::{Matrix2, SymmetricEigen, Vector2};
use serde::{Deserialize, Serialize};

use super::harmonics::{legendre_with_derivatives, real_harmonic, LegendreTable};
use super::{Eigenfunction, FieldSample, SpectralFieldSpec};
use crate::geometry::{build_manifold_quadrature, embed, off_pole, sphere_frame, Manifold, Point};
use crate::{Error, Result};

/// Value and frame gradient of a scalar function at a point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet1 {
    pub value: f64,
    pub gradient: Vector2<f64>,
}

/// Values and frame gradients of every mode of `spec` at `p`.
pub fn mode_jets(spec: &SpectralFieldSpec, p: Point) -> Result<Vec<Jet1>> {
    let mut out = Vec::with_capacity(spec.len());
    let mut cache = None;
    push_mode_jets(spec, p, &mut cache, &mut out)?;
    Ok(out)
}

fn push_mode_jets(
    spec: &SpectralFieldSpec,
    p: Point,
    cache: &mut Option<(f64, LegendreTable)>,
    out: &mut Vec<Jet1>,
) -> Result<()> {
    use std::f64::consts::{PI, SQRT_2};
    if spec.manifold == Manifold::Sphere2 {
        if !off_pole(p) {
            return Err(Error::AtPole);
        }
        if cache.as_ref().is_none_or(|(th, _)| *th != p.x1) {
            *cache = Some((p.x1, LegendreTable::new(spec.max_degree() as usize, p.x1)));
        }
    }
    for m in &spec.modes {
        let jet = match m.id {
            Eigenfunction::TorusCos { k } | Eigenfunction::TorusSin { k } => {
                let kv = Vector2::new(f64::from(k[0]), f64::from(k[1]));
                let (s, c) = (2.0 * PI * (kv.x * p.x1 + kv.y * p.x2)).sin_cos();
                if matches!(m.id, Eigenfunction::TorusCos { .. }) {
                    Jet1 { value: SQRT_2 * c, gradient: -2.0 * PI * SQRT_2 * s * kv }
                } else {
                    Jet1 { value: SQRT_2 * s, gradient: 2.0 * PI * SQRT_2 * c * kv }
                }
            }
            Eigenfunction::SphereHarmonic { l, m } => {
                let table = &cache.as_ref().expect("table built above").1;
                let (v, g) = real_harmonic(table, l, m, p.x1, p.x2);
                Jet1 { value: v, gradient: Vector2::new(g[0], g[1]) }
            }
        };
        out.push(jet);
    }
    Ok(())
}

/// Mode values at each point (point-major) and `sqrt(E phi^2)` per point.
pub fn mode_value_table(spec: &SpectralFieldSpec, points: &[Point]) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut values = Vec::with_capacity(points.len() * spec.len());
    let mut scale = Vec::with_capacity(points.len());
    let mut cache = None;
    let mut jets = Vec::with_capacity(spec.len());
    for &p in points {
        jets.clear();
        push_mode_jets(spec, p, &mut cache, &mut jets)?;
        let mut v = 0.0;
        for (m, j) in spec.modes.iter().zip(&jets) {
            v += m.std * m.std * j.value * j.value;
            values.push(j.value);
        }
        scale.push(v.sqrt());
    }
    Ok((values, scale))
}

/// Jet of the raw field `phi = sum c_i phi_i`.
pub fn eval_jet(spec: &SpectralFieldSpec, sample: &FieldSample, x: Point) -> Result<Jet1> {
    let modes = mode_jets(spec, x)?;
    Ok(combine(&modes, &sample.coefficients))
}

/// Jet of the pointwise normalised field `f = phi / sqrt(E phi^2)`.
pub fn eval_jet_normalized(spec: &SpectralFieldSpec, sample: &FieldSample, x: Point) -> Result<Jet1> {
    let modes = mode_jets(spec, x)?;
    let (v, dv, _) = moments(spec, &modes);
    Ok(normalize(combine(&modes, &sample.coefficients), v, dv))
}

fn combine(modes: &[Jet1], coeffs: &[f64]) -> Jet1 {
    let mut value = 0.0;
    let mut gradient = Vector2::zeros();
    for (m, c) in modes.iter().zip(coeffs) {
        value += c * m.value;
        gradient += *c * m.gradient;
    }
    Jet1 { value, gradient }
}

/// `E phi^2`, its gradient, and `E dphi dphi^T` from the mode jets.
fn moments(spec: &SpectralFieldSpec, modes: &[Jet1]) -> (f64, Vector2<f64>, Matrix2<f64>) {
    let mut v = 0.0;
    let mut dv = Vector2::zeros();
    let mut g = Matrix2::zeros();
    for (m, j) in spec.modes.iter().zip(modes) {
        let s2 = m.std * m.std;
        v += s2 * j.value * j.value;
        dv += 2.0 * s2 * j.value * j.gradient;
        g += s2 * j.gradient * j.gradient.transpose();
    }
    (v, dv, g)
}

fn normalize(j: Jet1, v: f64, dv: Vector2<f64>) -> Jet1 {
    let rv = v.sqrt();
    Jet1 { value: j.value / rv, gradient: j.gradient / rv - j.value * dv / (2.0 * v * rv) }
}

/// Mode jets tabulated on a fixed point set, with the pointwise variance
/// data needed to normalise and to build the metric.
pub struct FieldBasis {
    pub points: Vec<Point>,
    pub n_modes: usize,
    jets: Vec<Jet1>,
    pub raw_variance: Vec<f64>,
    pub raw_variance_grad: Vec<Vector2<f64>>,
    /// `E dphi dphi^T` of the raw field.
    pub raw_metric: Vec<Matrix2<f64>>,
}

impl FieldBasis {
    pub fn new(spec: &SpectralFieldSpec, points: &[Point]) -> Result<Self> {
        let n_modes = spec.len();
        let mut jets = Vec::with_capacity(n_modes * points.len());
        let mut cache = None;
        for &p in points {
            push_mode_jets(spec, p, &mut cache, &mut jets)?;
        }
        let mut raw_variance = Vec::with_capacity(points.len());
        let mut raw_variance_grad = Vec::with_capacity(points.len());
        let mut raw_metric = Vec::with_capacity(points.len());
        for chunk in jets.chunks(n_modes) {
            let (v, dv, g) = moments(spec, chunk);
            raw_variance.push(v);
            raw_variance_grad.push(dv);
            raw_metric.push(g);
        }
        Ok(Self { points: points.to_vec(), n_modes, jets, raw_variance, raw_variance_grad, raw_metric })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn mode_jets(&self, i: usize) -> &[Jet1] {
        &self.jets[i * self.n_modes..(i + 1) * self.n_modes]
    }

    pub fn jet(&self, i: usize, coeffs: &[f64]) -> Jet1 {
        combine(self.mode_jets(i), coeffs)
    }

    pub fn jet_normalized(&self, i: usize, coeffs: &[f64]) -> Jet1 {
        normalize(self.jet(i, coeffs), self.raw_variance[i], self.raw_variance_grad[i])
    }

    /// Adler-Taylor matrix of the normalised field,
    /// `g^f = G_phi / v - dv dv^T / (4 v^2)`.
    pub fn metric(&self, i: usize) -> Matrix2<f64> {
        let (v, dv) = (self.raw_variance[i], self.raw_variance_grad[i]);
        self.raw_metric[i] / v - dv * dv.transpose() / (4.0 * v * v)
    }
}

/// Covariances of the first jets of `f` at a pair of points, each gradient
/// in the orthonormal frame at its own base point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JetCovariance {
    /// `E f(x) f(y)`
    pub c: f64,
    /// `E df(x) f(y)`, in the frame at `x`
    pub cpx: Vector2<f64>,
    /// `E f(x) df(y)`, in the frame at `y`
    pub cpy: Vector2<f64>,
    /// `E df(x) df(y)^T`
    pub cpp: Matrix2<f64>,
}

impl JetCovariance {
    /// The same covariance seen from `(y, x)`.
    pub fn swapped(&self) -> Self {
        Self { c: self.c, cpx: self.cpy, cpy: self.cpx, cpp: self.cpp.transpose() }
    }
}

pub fn cov_jet(spec: &SpectralFieldSpec, x: Point, y: Point) -> Result<JetCovariance> {
    cov_jet_weighted(spec, x, y, |_| 1.0)
}

/// Jet covariance with mode `i` reweighted by `weight(e_i)`. A polynomial
/// weight in the eigenvalue realises a spectral operator applied to one or
/// both arguments of the covariance; the normalisation by `sqrt(E phi^2)`
/// always uses the unweighted spec.
pub fn cov_jet_weighted(
    spec: &SpectralFieldSpec,
    x: Point,
    y: Point,
    weight: impl Fn(f64) -> f64,
) -> Result<JetCovariance> {
    if let Some(w) = spec.isotropic_weights() {
        return legendre_cov(&w, x, y, weight);
    }
    modal_cov(spec, x, y, weight)
}

/// Jet covariance through the explicit mode sums. Exact for every spec.
pub fn modal_cov(spec: &SpectralFieldSpec, x: Point, y: Point, weight: impl Fn(f64) -> f64) -> Result<JetCovariance> {
    let jx = mode_jets(spec, x)?;
    let jy = mode_jets(spec, y)?;
    let (vx, dvx, _) = moments(spec, &jx);
    let (vy, dvy, _) = moments(spec, &jy);
    let mut out = JetCovariance { c: 0.0, cpx: Vector2::zeros(), cpy: Vector2::zeros(), cpp: Matrix2::zeros() };
    for ((m, a), b) in spec.modes.iter().zip(&jx).zip(&jy) {
        let s2 = m.std * m.std * weight(m.eigenvalue);
        let a = normalize(*a, vx, dvx);
        let b = normalize(*b, vy, dvy);
        out.c += s2 * a.value * b.value;
        out.cpx += s2 * b.value * a.gradient;
        out.cpy += s2 * a.value * b.gradient;
        out.cpp += s2 * a.gradient * b.gradient.transpose();
    }
    Ok(out)
}

/// Isotropic sphere covariance `C = G(<x,y>) / G(1)`, `G = sum_l w_l P_l`,
/// differentiated through the embedding.
fn legendre_cov(w: &[(u32, f64)], x: Point, y: Point, weight: impl Fn(f64) -> f64) -> Result<JetCovariance> {
    let [ex1, ex2] = sphere_frame(x)?;
    let [ey1, ey2] = sphere_frame(y)?;
    let (px, py) = (embed(x), embed(y));
    let t = px.dot(&py).clamp(-1.0, 1.0);
    let lmax = w.iter().map(|&(l, _)| l).max().unwrap_or(0) as usize;
    let (p, d1, d2) = legendre_with_derivatives(lmax, t);
    let norm: f64 = w.iter().map(|&(_, wl)| wl).sum();
    let (mut g, mut g1, mut g2) = (0.0, 0.0, 0.0);
    for &(l, wl) in w {
        let wl = wl * weight(f64::from(l * (l + 1))) / norm;
        let l = l as usize;
        g += wl * p[l];
        g1 += wl * d1[l];
        g2 += wl * d2[l];
    }
    let ex = [ex1, ex2];
    let ey = [ey1, ey2];
    let cpx = Vector2::new(g1 * ex[0].dot(&py), g1 * ex[1].dot(&py));
    let cpy = Vector2::new(g1 * px.dot(&ey[0]), g1 * px.dot(&ey[1]));
    let cpp = Matrix2::from_fn(|i, j| g2 * ex[i].dot(&py) * px.dot(&ey[j]) + g1 * ex[i].dot(&ey[j]));
    Ok(JetCovariance { c: g, cpx, cpy, cpp })
}

/// Adler-Taylor data of the normalised field at one point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricData {
    /// `g^f_x`
    pub gf: Matrix2<f64>,
    /// `lambda(f, x) = sqrt(tr g^f_x)`
    pub lambda_x: f64,
    /// `Lambda_x = sqrt(n g^f_x)`
    pub lam: Matrix2<f64>,
    /// `Lambda_x^{-1}`
    pub lam_inv: Matrix2<f64>,
}

impl MetricData {
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn from_metric(gf: Matrix2<f64>, n: u32) -> Result<Self> {
        let gf = (gf + gf.transpose()) / 2.0;
        let tr = gf.trace();
        let eig = SymmetricEigen::new(gf);
        let floor = 1e-14 * tr.abs();
        // negated so that a NaN trace is rejected too
        if !(tr > 0.0) || eig.eigenvalues.iter().any(|&e| e <= floor) {
            return Err(Error::Degenerate(format!(
                "gradient covariance {:?} is not positive definite; the field's differential is degenerate here",
                eig.eigenvalues.as_slice()
            )));
        }
        let nf = f64::from(n);
        let root = eig.eigenvalues.map(|e| (nf * e).sqrt());
        let q = eig.eigenvectors;
        let lam = q * Matrix2::from_diagonal(&root) * q.transpose();
        let lam_inv = q * Matrix2::from_diagonal(&root.map(|r| 1.0 / r)) * q.transpose();
        Ok(Self { gf, lambda_x: tr.sqrt(), lam, lam_inv })
    }

    /// `(g^f)^{-1/2} = sqrt(n) Lambda^{-1}`.
    pub fn inv_sqrt(&self) -> Matrix2<f64> {
        let n = 2.0_f64;
        n.sqrt() * self.lam_inv
    }
}

pub fn metric_data(spec: &SpectralFieldSpec, x: Point) -> Result<MetricData> {
    let basis = FieldBasis::new(spec, &[x])?;
    MetricData::from_metric(basis.metric(0), spec.dim())
}

/// Average variance, average frequency and maximal eccentricity of the raw
/// field, with the quadrature resolution they were computed at.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalParams {
    pub sigma: f64,
    pub lambda: f64,
    pub eps: f64,
    /// The three eccentricity terms: metric distortion, variance defect,
    /// variance-gradient defect.
    pub eps_terms: [f64; 3],
    pub resolution: usize,
}

/// `sigma^2 = avg E phi^2` and `lambda^2 = avg E |dphi|^2 / sigma^2`.
///
/// `eps` sums the maxima over quadrature nodes of
/// `sup_u | sqrt(n) |u|_{G_phi} / (sigma lambda) - 1 |`,
/// `| sqrt(E phi^2) / sigma - 1 |` and
/// `sqrt(n) |d E phi^2| / (2 sigma lambda sqrt(E phi^2))`.
/// The supremum over unit directions is attained at the eigenvectors of the
/// 2x2 matrix `G_phi`, so it is evaluated in closed form; `k` is accepted
/// for interface symmetry with the fiber quadratures and does not change the
/// result.
pub fn global_params(spec: &SpectralFieldSpec, resolution: usize, k: usize) -> Result<GlobalParams> {
    let _ = k;
    let q = build_manifold_quadrature(spec.manifold, resolution)?;
    let basis = FieldBasis::new(spec, &q.nodes)?;
    let vol: f64 = q.integrate(&vec![1.0; q.len()]);
    let sigma2 = q.integrate(&basis.raw_variance) / vol;
    let traces: Vec<f64> = basis.raw_metric.iter().map(|g| g.trace()).collect();
    let lambda2 = q.integrate(&traces) / vol / sigma2;
    let (sigma, lambda) = (sigma2.sqrt(), lambda2.sqrt());
    let n = f64::from(spec.dim());
    let mut terms = [0.0_f64; 3];
    let invariant = spec.is_invariant();
    for i in 0..basis.len() {
        let g = basis.raw_metric[i];
        let eig = SymmetricEigen::new((g + g.transpose()) / 2.0);
        for &mu in eig.eigenvalues.iter() {
            let r = (n * mu.max(0.0)).sqrt() / (sigma * lambda);
            terms[0] = terms[0].max((r - 1.0).abs());
        }
        if !invariant {
            let v = basis.raw_variance[i];
            terms[1] = terms[1].max((v.sqrt() / sigma - 1.0).abs());
            let dv = basis.raw_variance_grad[i].norm();
            terms[2] = terms[2].max(dv / (2.0 * v.sqrt() * sigma) * n.sqrt() / lambda);
        }
    }
    Ok(GlobalParams { sigma, lambda, eps: terms.iter().sum(), eps_terms: terms, resolution })
}

/// Largest singular value of a 2x2 matrix.
pub fn spectral_norm2(m: &Matrix2<f64>) -> f64 {
    // (|z1| + |z2|) / 2 with z1, z2 the conformal and anticonformal parts;
    // free of the cancellation in the characteristic-polynomial form.
    let (a, b, c, d) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
    ((a + d).hypot(c - b) + (a - d).hypot(b + c)) / 2.0
}

/// Norm of a jet covariance measured in `g^f`-orthonormal frames at both
/// ends. At most one for unit-variance fields by Cauchy-Schwarz.
pub fn jet_norm(jc: &JetCovariance, mx: &MetricData, my: &MetricData) -> f64 {
    let (sx, sy) = (mx.inv_sqrt(), my.inv_sqrt());
    let a = jc.c.abs();
    let b = (sx * jc.cpx).norm();
    let c = (sy * jc.cpy).norm();
    let d = spectral_norm2(&(sx * jc.cpp * sy));
    a.max(b).max(c).max(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{make_anisotropic, make_arw, make_band, make_rsh, sample_field_indexed, Normalization};
    use crate::stats::covariance;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_point(m: Manifold, rng: &mut ChaCha8Rng) -> Point {
        match m {
            Manifold::Torus2 => Point::new(rng.random(), rng.random()),
            Manifold::Sphere2 => Point::new(rng.random_range(0.2..PI - 0.2), rng.random_range(0.0..2.0 * PI)),
        }
    }

    fn test_specs() -> Vec<SpectralFieldSpec> {
        vec![
            make_rsh(1).unwrap(),
            make_rsh(5).unwrap(),
            make_arw(5).unwrap(),
            make_band(Manifold::Torus2, &[1, 5], Normalization::UnitVariance).unwrap(),
            make_anisotropic(&[([1, 0], 1.0), ([0, 1], 1.2)]).unwrap(),
            make_band(Manifold::Sphere2, &[2, 3], Normalization::Raw).unwrap(),
        ]
    }

    #[test]
    fn zero_sample_has_zero_jet() {
        let spec = make_rsh(3).unwrap();
        let s = FieldSample { seed: 0, index: 0, coefficients: vec![0.0; spec.len()] };
        let j = eval_jet(&spec, &s, Point::new(1.0, 2.0)).unwrap();
        assert_eq!(j.value, 0.0);
        assert_eq!(j.gradient, Vector2::zeros());
    }

    #[test]
    fn torus_cosine_gradient() {
        let spec = make_arw(5).unwrap();
        let x = Point::new(0.13, 0.71);
        for (i, m) in spec.modes.iter().enumerate() {
            let Eigenfunction::TorusCos { k } = m.id else { continue };
            let mut c = vec![0.0; spec.len()];
            c[i] = 1.0;
            let j = eval_jet(&spec, &FieldSample { seed: 0, index: 0, coefficients: c }, x).unwrap();
            let arg = 2.0 * PI * (f64::from(k[0]) * x.x1 + f64::from(k[1]) * x.x2);
            let r2 = 2f64.sqrt();
            assert_relative_eq!(j.value, r2 * arg.cos(), epsilon = 1e-14);
            assert_relative_eq!(j.gradient.x, -2.0 * PI * r2 * arg.sin() * f64::from(k[0]), epsilon = 1e-12);
            assert_relative_eq!(j.gradient.y, -2.0 * PI * r2 * arg.sin() * f64::from(k[1]), epsilon = 1e-12);
        }
    }

    #[test]
    fn sphere_gradient_matches_finite_differences() {
        let spec = make_band(Manifold::Sphere2, &[3, 6], Normalization::Raw).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = 1e-5;
        for i in 0..20 {
            let s = sample_field_indexed(&spec, 5, i);
            let p = random_point(Manifold::Sphere2, &mut rng);
            let j = eval_jet(&spec, &s, p).unwrap();
            let f = |q: Point| eval_jet(&spec, &s, q).unwrap().value;
            let dth = (f(Point::new(p.x1 + h, p.x2)) - f(Point::new(p.x1 - h, p.x2))) / (2.0 * h);
            let dph = (f(Point::new(p.x1, p.x2 + h)) - f(Point::new(p.x1, p.x2 - h))) / (2.0 * h) / p.x1.sin();
            let scale = j.gradient.norm().max(1.0);
            assert!((j.gradient.x - dth).abs() < 1e-6 * scale, "{} vs {dth}", j.gradient.x);
            assert!((j.gradient.y - dph).abs() < 1e-6 * scale, "{} vs {dph}", j.gradient.y);
        }
    }

    #[test]
    fn normalized_gradient_matches_finite_differences() {
        let spec = make_band(Manifold::Sphere2, &[2, 4], Normalization::Raw).unwrap();
        let s = sample_field_indexed(&spec, 1, 0);
        let p = Point::new(1.1, 0.4);
        let j = eval_jet_normalized(&spec, &s, p).unwrap();
        let f = |q: Point| eval_jet_normalized(&spec, &s, q).unwrap().value;
        let h = 1e-5;
        let dth = (f(Point::new(p.x1 + h, p.x2)) - f(Point::new(p.x1 - h, p.x2))) / (2.0 * h);
        assert!((j.gradient.x - dth).abs() < 1e-6 * j.gradient.norm().max(1.0));
    }

    #[test]
    fn unit_variance_under_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for spec in [make_rsh(4).unwrap(), make_arw(5).unwrap()] {
            for _ in 0..5 {
                let p = random_point(spec.manifold, &mut rng);
                let modes = mode_jets(&spec, p).unwrap();
                let n = 10_000;
                let sq: f64 = (0..n)
                    .map(|i| combine(&modes, &sample_field_indexed(&spec, 9, i).coefficients).value.powi(2))
                    .sum::<f64>()
                    / n as f64;
                assert!((sq - 1.0).abs() < 0.05, "E f^2 = {sq}");
            }
        }
    }

    #[test]
    fn rsh_one_covariance_is_inner_product() {
        let spec = make_rsh(1).unwrap();
        let (x, y) = (Point::new(0.7, 0.3), Point::new(2.1, 4.0));
        let jc = cov_jet(&spec, x, y).unwrap();
        assert_relative_eq!(jc.c, embed(x).dot(&embed(y)), epsilon = 1e-14);
        let ex = sphere_frame(x).unwrap();
        let ey = sphere_frame(y).unwrap();
        for (i, ei) in ex.iter().enumerate() {
            for (j, ej) in ey.iter().enumerate() {
                assert_relative_eq!(jc.cpp[(i, j)], ei.dot(ej), epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn legendre_and_modal_paths_agree() {
        let spec = make_rsh(6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let x = random_point(Manifold::Sphere2, &mut rng);
            let y = random_point(Manifold::Sphere2, &mut rng);
            let w = |e: f64| 1.0 - e / 30.0;
            let a = cov_jet_weighted(&spec, x, y, w).unwrap();
            let b = modal_cov(&spec, x, y, w).unwrap();
            assert_relative_eq!(a.c, b.c, epsilon = 1e-12);
            assert!((a.cpx - b.cpx).norm() < 1e-11);
            assert!((a.cpy - b.cpy).norm() < 1e-11);
            assert!((a.cpp - b.cpp).norm() < 1e-10);
        }
    }

    #[test]
    fn diagonal_covariance_structure() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for spec in test_specs() {
            let x = random_point(spec.manifold, &mut rng);
            let jc = cov_jet(&spec, x, x).unwrap();
            let md = metric_data(&spec, x).unwrap();
            assert_relative_eq!(jc.c, 1.0, epsilon = 1e-12);
            assert!(jc.cpx.norm() < 1e-10 * md.lambda_x, "{:?}", jc.cpx);
            assert!(jc.cpy.norm() < 1e-10 * md.lambda_x);
            assert!((jc.cpp - md.gf).norm() < 1e-10 * md.gf.norm());
            assert_relative_eq!(jet_norm(&jc, &md, &md), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn covariance_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for spec in test_specs() {
            let x = random_point(spec.manifold, &mut rng);
            let y = random_point(spec.manifold, &mut rng);
            let a = cov_jet(&spec, x, y).unwrap();
            let b = cov_jet(&spec, y, x).unwrap().swapped();
            assert_relative_eq!(a.c, b.c, epsilon = 1e-13);
            assert!((a.cpx - b.cpx).norm() < 1e-11);
            assert!((a.cpy - b.cpy).norm() < 1e-11);
            assert!((a.cpp - b.cpp).norm() < 1e-10);
        }
    }

    #[test]
    fn covariance_matches_monte_carlo() {
        let n = 100_000u64;
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for spec in [make_rsh(3).unwrap(), make_band(Manifold::Torus2, &[1, 2], Normalization::UnitVariance).unwrap()] {
            for _ in 0..5 {
                let x = random_point(spec.manifold, &mut rng);
                let y = random_point(spec.manifold, &mut rng);
                let (jx, jy) = (mode_jets(&spec, x).unwrap(), mode_jets(&spec, y).unwrap());
                let mut cols: Vec<Vec<f64>> = (0..6).map(|_| Vec::with_capacity(n as usize)).collect();
                for i in 0..n {
                    let c = sample_field_indexed(&spec, 77, i).coefficients;
                    let (a, b) = (combine(&jx, &c), combine(&jy, &c));
                    for (col, v) in
                        cols.iter_mut().zip([a.value, a.gradient.x, a.gradient.y, b.value, b.gradient.x, b.gradient.y])
                    {
                        col.push(v);
                    }
                }
                let jc = cov_jet(&spec, x, y).unwrap();
                let expect = [
                    (0, 3, jc.c),
                    (1, 3, jc.cpx.x),
                    (2, 3, jc.cpx.y),
                    (0, 4, jc.cpy.x),
                    (0, 5, jc.cpy.y),
                    (1, 4, jc.cpp[(0, 0)]),
                    (1, 5, jc.cpp[(0, 1)]),
                    (2, 4, jc.cpp[(1, 0)]),
                    (2, 5, jc.cpp[(1, 1)]),
                ];
                for (i, j, want) in expect {
                    let (got, se) = covariance(&cols[i], &cols[j]);
                    assert!((got - want).abs() < 4.0 * se + 1e-12, "({i},{j}): {got} vs {want} (se {se})");
                }
            }
        }
    }

    #[test]
    fn arw_metric_closed_form() {
        let spec = make_arw(1).unwrap();
        let md = metric_data(&spec, Point::new(0.3, 0.8)).unwrap();
        assert!((md.gf - 2.0 * PI * PI * Matrix2::identity()).norm() < 1e-12);
        assert!((md.lam - 2.0 * PI * Matrix2::identity()).norm() < 1e-12);
        assert_relative_eq!(md.lambda_x, 2.0 * PI, epsilon = 1e-13);
        let spec = make_arw(5).unwrap();
        let g = metric_data(&spec, Point::new(0.1, 0.2)).unwrap().gf;
        assert!((g - 2.0 * PI * PI * 5.0 * Matrix2::identity()).norm() < 1e-10);
    }

    #[test]
    fn rsh_pointwise_frequency() {
        let spec = make_rsh(10).unwrap();
        let q = build_manifold_quadrature(Manifold::Sphere2, 16).unwrap();
        let basis = FieldBasis::new(&spec, &q.nodes).unwrap();
        for i in 0..basis.len() {
            assert!((basis.metric(i).trace() - 110.0).abs() < 1e-8);
        }
    }

    #[test]
    fn lambda_recomposes() {
        let spec = make_anisotropic(&[([1, 0], 1.0), ([1, 1], 0.7), ([0, 2], 0.4)]).unwrap();
        let md = metric_data(&spec, Point::new(0.4, 0.9)).unwrap();
        assert!((md.lam * md.lam - 2.0 * md.gf).norm() < 1e-12 * md.gf.norm());
        assert!((md.lam * md.lam_inv - Matrix2::identity()).norm() < 1e-12);
    }

    #[test]
    fn global_params_homothetic() {
        let p = global_params(&make_arw(5).unwrap(), 16, 8).unwrap();
        assert_relative_eq!(p.sigma, 1.0, epsilon = 1e-12);
        assert_relative_eq!(p.lambda, 2.0 * PI * 5f64.sqrt(), max_relative = 1e-12);
        assert!(p.eps <= 1e-10);
        let p = global_params(&make_rsh(5).unwrap(), 16, 8).unwrap();
        assert!(p.eps <= 1e-10);
        let band = make_band(Manifold::Torus2, &[1, 5], Normalization::UnitVariance).unwrap();
        let p = global_params(&band, 16, 8).unwrap();
        assert_relative_eq!(p.lambda * p.lambda, 4.0 * PI * PI * 44.0 / 12.0, max_relative = 1e-12);
    }

    #[test]
    fn anisotropic_eccentricity_by_hand() {
        let delta = 0.2;
        let spec = make_anisotropic(&[([1, 0], 1.0), ([0, 1], 1.0 + delta)]).unwrap();
        let p = global_params(&spec, 16, 8).unwrap();
        // g^f = diag(g11, g22) with 2 g11 / lambda^2 = 2 / (1 + (1+delta)^2)
        let s = 1.0 + (1.0 + delta) * (1.0 + delta);
        let t11 = ((2.0 / s).sqrt() - 1.0).abs();
        let t22 = ((2.0 * (1.0 + delta) * (1.0 + delta) / s).sqrt() - 1.0).abs();
        assert_relative_eq!(p.eps, t11.max(t22), epsilon = 1e-12);
        assert_eq!(p.eps_terms[1], 0.0);
        let eq = global_params(&make_anisotropic(&[([1, 0], 1.0), ([0, 1], 1.0)]).unwrap(), 16, 8).unwrap();
        assert!(eq.eps < 1e-12);
        let mut last = 0.0;
        for d in [0.05, 0.1, 0.2, 0.4] {
            let e = global_params(&make_anisotropic(&[([1, 0], 1.0), ([0, 1], 1.0 + d)]).unwrap(), 8, 8).unwrap().eps;
            assert!(e > last);
            last = e;
        }
        let scaled = make_anisotropic(&[([1, 0], 3.0), ([0, 1], 3.0 * (1.0 + delta))]).unwrap();
        assert_relative_eq!(global_params(&scaled, 16, 8).unwrap().eps, p.eps, epsilon = 1e-12);
    }

    #[test]
    fn normalisation_does_not_increase_eccentricity() {
        let raw = make_band(Manifold::Torus2, &[1, 2], Normalization::Raw).unwrap();
        let unit = raw.unit_variance().unwrap();
        let (a, b) = (global_params(&raw, 12, 8).unwrap(), global_params(&unit, 12, 8).unwrap());
        assert!(b.eps <= a.eps + 1e-12);
    }

    #[test]
    fn jet_norm_properties() {
        let spec = make_rsh(2).unwrap();
        let x = Point::new(1.0, 0.5);
        let y = crate::geometry::chart_of(&(-embed(x)));
        let jc = cov_jet(&spec, x, y).unwrap();
        let (mx, my) = (metric_data(&spec, x).unwrap(), metric_data(&spec, y).unwrap());
        let v = jet_norm(&jc, &mx, &my);
        assert!((v - 1.0).abs() <= 1e-12, "{v}");

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for spec in test_specs() {
            for _ in 0..20 {
                let x = random_point(spec.manifold, &mut rng);
                let y = random_point(spec.manifold, &mut rng);
                let jc = cov_jet(&spec, x, y).unwrap();
                let v = jet_norm(&jc, &metric_data(&spec, x).unwrap(), &metric_data(&spec, y).unwrap());
                assert!(v <= 1.0 + 1e-12, "{v}");
            }
        }
    }

    #[test]
    fn jet_norm_against_direction_sampling() {
        let spec = make_anisotropic(&[([1, 0], 1.0), ([1, 2], 0.6), ([0, 1], 1.3)]).unwrap();
        let (x, y) = (Point::new(0.1, 0.2), Point::new(0.35, 0.6));
        let jc = cov_jet(&spec, x, y).unwrap();
        let (mx, my) = (metric_data(&spec, x).unwrap(), metric_data(&spec, y).unwrap());
        let closed = jet_norm(&jc, &mx, &my);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (sx, sy) = (mx.inv_sqrt(), my.inv_sqrt());
        let mut best = jc.c.abs();
        for _ in 0..10_000 {
            let (a, b): (f64, f64) = (rng.random_range(0.0..2.0 * PI), rng.random_range(0.0..2.0 * PI));
            let (u, v) = (Vector2::new(a.cos(), a.sin()), Vector2::new(b.cos(), b.sin()));
            best = best
                .max((u.dot(&(sx * jc.cpx))).abs())
                .max((v.dot(&(sy * jc.cpy))).abs())
                .max((u.transpose() * sx * jc.cpp * sy * v)[(0, 0)].abs());
        }
        assert!(best <= closed + 1e-12 && closed <= best + 1e-6, "{best} vs {closed}");
    }

    #[test]
    fn degenerate_metric_is_rejected() {
        assert!(MetricData::from_metric(Matrix2::new(1.0, 0.0, 0.0, 0.0), 2).is_err());
    }
    #[test]
    fn spectral_norm_matches_svd_without_cancellation() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..200 {
            let m = Matrix2::from_fn(|_, _| rng.random_range(-3.0..3.0));
            let want = m.singular_values().max();
            assert_relative_eq!(spectral_norm2(&m), want, max_relative = 1e-14);
        }
        // Near-isotropic matrices used to lose half the digits.
        let r = nalgebra::Rotation2::new(0.3).into_inner();
        let m = r * Matrix2::new(1.0 + 1e-9, 0.0, 0.0, 1.0);
        assert_relative_eq!(spectral_norm2(&m), 1.0 + 1e-9, max_relative = 1e-15);
        assert_eq!(spectral_norm2(&Matrix2::identity()), 1.0);
    }
}
