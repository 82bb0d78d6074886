//! Model manifolds, tangent frames and quadrature rules.
//!
//! Points are stored in chart coordinates: `(x1, x2)` in the unit square for
//! the torus, `(colatitude, longitude)` for the sphere. Tangent vectors are
//! always expressed in the orthonormal frame at their base point: the
//! coordinate basis on the torus, `(e_theta, e_phi)` on the sphere.

use nalgebra::{DMatrix, DVector, Matrix2, SymmetricEigen, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use std::f64::consts::PI;

use crate::specfun::{beta_const, hermite, sphere_area};
use crate::{Error, Result};

/// Colatitudes closer than this to a pole are excluded from every chart
/// computation. The excluded caps have area `~ 2 pi POLE_EPS^2`.
pub const POLE_EPS: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Manifold {
    Sphere2,
    Torus2,
}

impl Manifold {
    pub fn dim(self) -> u32 {
        2
    }

    pub fn volume(self) -> f64 {
        match self {
            Manifold::Sphere2 => 4.0 * PI,
            Manifold::Torus2 => 1.0,
        }
    }
}

/// A chart point. See the module docs for the coordinate conventions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x1: f64,
    pub x2: f64,
}

impl Point {
    pub fn new(x1: f64, x2: f64) -> Self {
        Self { x1, x2 }
    }
}

/// Embedding of a sphere chart point into `R^3`.
pub fn embed(p: Point) -> Vector3<f64> {
    let (st, ct) = p.x1.sin_cos();
    let (sp, cp) = p.x2.sin_cos();
    Vector3::new(st * cp, st * sp, ct)
}

/// Chart point of a unit vector in `R^3`.
pub fn chart_of(v: &Vector3<f64>) -> Point {
    let r = v.norm();
    let theta = (v.z / r).clamp(-1.0, 1.0).acos();
    let mut phi = v.y.atan2(v.x);
    if phi < 0.0 {
        phi += 2.0 * PI;
    }
    Point::new(theta, phi)
}

pub fn off_pole(p: Point) -> bool {
    p.x1 >= POLE_EPS && p.x1 <= PI - POLE_EPS
}

/// Orthonormal frame `(e_theta, e_phi)` of the sphere at `p`, in `R^3`.
pub fn sphere_frame(p: Point) -> Result<[Vector3<f64>; 2]> {
    if !off_pole(p) {
        return Err(Error::AtPole);
    }
    let (st, ct) = p.x1.sin_cos();
    let (sp, cp) = p.x2.sin_cos();
    Ok([Vector3::new(ct * cp, ct * sp, -st), Vector3::new(-sp, cp, 0.0)])
}

/// Nodes and weights of a quadrature on the whole manifold.
#[derive(Clone, Debug)]
pub struct ManifoldQuadrature {
    pub manifold: Manifold,
    pub resolution: usize,
    pub nodes: Vec<Point>,
    pub weights: Vec<f64>,
}

impl ManifoldQuadrature {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `sum_i w_i g(x_i)` with pairwise summation.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        let terms: Vec<f64> = self.weights.iter().zip(values).map(|(w, v)| w * v).collect();
        crate::stats::pairwise_sum(&terms)
    }
}

/// Torus: uniform `res x res` grid. Sphere: Gauss-Legendre in the cosine of
/// the colatitude (`res` nodes) times `2 res` uniform longitudes.
pub fn build_manifold_quadrature(manifold: Manifold, resolution: usize) -> Result<ManifoldQuadrature> {
    const MIN: usize = 4;
    if resolution < MIN {
        return Err(Error::ResolutionTooSmall { got: resolution, min: MIN });
    }
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    match manifold {
        Manifold::Torus2 => {
            let h = 1.0 / resolution as f64;
            for i in 0..resolution {
                for j in 0..resolution {
                    nodes.push(Point::new(i as f64 * h, j as f64 * h));
                    weights.push(h * h);
                }
            }
        }
        Manifold::Sphere2 => {
            let (t, w) = gauss_legendre(resolution);
            let nphi = 2 * resolution;
            let dphi = 2.0 * PI / nphi as f64;
            for (ti, wi) in t.iter().zip(&w) {
                let theta = ti.acos();
                for j in 0..nphi {
                    nodes.push(Point::new(theta, j as f64 * dphi));
                    weights.push(wi * dphi);
                }
            }
        }
    }
    Ok(ManifoldQuadrature { manifold, resolution, nodes, weights })
}

/// Gauss-Legendre nodes (descending) and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Gauss rule for the weight `(1 - t^2)^alpha` on `[-1, 1]` (Golub-Welsch).
pub fn gauss_gegenbauer(n: usize, alpha: f64) -> (Vec<f64>, Vec<f64>) {
    let mut j = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let k = k as f64;
        let b = k * (k + 2.0 * alpha) / ((2.0 * k + 2.0 * alpha + 1.0) * (2.0 * k + 2.0 * alpha - 1.0));
        let (r, c) = (k as usize, k as usize - 1);
        j[(r, c)] = b.sqrt();
        j[(c, r)] = b.sqrt();
    }
    let mu0 = (0.5 * PI.ln() + ln_gamma(alpha + 1.0) - ln_gamma(alpha + 1.5)).exp();
    let eig = SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> =
        (0..n).map(|i| (eig.eigenvalues[i], mu0 * eig.eigenvectors[(0, i)].powi(2))).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// Product rule on `S^{d-1}` in `R^d`: recursive polar splitting
/// `v = (t, sqrt(1 - t^2) w)`, `k` angles on circles and `k` Gegenbauer
/// nodes per polar level. Exact for polynomials of degree `< k`.
pub fn sphere_rule(d: usize, k: usize) -> Vec<(DVector<f64>, f64)> {
    match d {
        0 => vec![],
        1 => vec![(DVector::from_element(1, 1.0), 1.0), (DVector::from_element(1, -1.0), 1.0)],
        2 => (0..k)
            .map(|j| {
                let a = 2.0 * PI * j as f64 / k as f64;
                (DVector::from_vec(vec![a.cos(), a.sin()]), 2.0 * PI / k as f64)
            })
            .collect(),
        _ => {
            let inner = sphere_rule(d - 1, k);
            let (t, w) = gauss_gegenbauer(k.max(2), (d as f64 - 3.0) / 2.0);
            let mut out = Vec::with_capacity(t.len() * inner.len());
            for (ti, wi) in t.iter().zip(&w) {
                let r = (1.0 - ti * ti).max(0.0).sqrt();
                for (u, wu) in &inner {
                    let mut v = DVector::zeros(d);
                    v[0] = *ti;
                    for c in 0..d - 1 {
                        v[c + 1] = r * u[c];
                    }
                    out.push((v, wi * wu));
                }
            }
            out
        }
    }
}

/// Equally spaced unit directions in the tangent plane at a point.
#[derive(Clone, Debug)]
pub struct FiberQuadrature {
    pub k: usize,
    pub directions: Vec<Vector2<f64>>,
    /// `s_1 / K`
    pub weight: f64,
}

/// Deterministic angular offset in `[0, 2 pi / K)` derived from the point's
/// coordinate bits.
pub fn fiber_offset(x: Point, k: usize) -> f64 {
    let mut h = x.x1.to_bits() ^ x.x2.to_bits().rotate_left(29) ^ 0x9e37_79b9_7f4a_7c15;
    h ^= h >> 30;
    h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h ^= h >> 27;
    h = h.wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^= h >> 31;
    let u = (h >> 11) as f64 / (1u64 << 53) as f64;
    u * 2.0 * PI / k as f64
}

pub fn fiber_directions(manifold: Manifold, x: Point, k: usize) -> Result<FiberQuadrature> {
    if k == 0 {
        return Err(Error::InvalidArgument("fiber size K must be positive".into()));
    }
    if manifold == Manifold::Sphere2 && !off_pole(x) {
        return Err(Error::AtPole);
    }
    let t0 = fiber_offset(x, k);
    let directions = (0..k)
        .map(|j| {
            let a = t0 + 2.0 * PI * j as f64 / k as f64;
            Vector2::new(a.cos(), a.sin())
        })
        .collect();
    Ok(FiberQuadrature { k, directions, weight: 2.0 * PI / k as f64 })
}

/// Max deviation between `int h(v / |L^{-1} v|) dv` and
/// `int h(L u) det(L) / |L u|^2 du` over a small polynomial battery.
pub fn sphere_change_check(l: &Matrix2<f64>, k: usize) -> Result<f64> {
    let det = l.determinant();
    let linv = l.try_inverse().ok_or(Error::Singular)?;
    if det == 0.0 {
        return Err(Error::Singular);
    }
    type H = fn(&Vector2<f64>) -> f64;
    let battery: [H; 5] =
        [|_| 1.0, |v| v.x * v.x, |v| v.x * v.y, |v| v.y.powi(4) - v.x, |v| v.x.powi(3) * v.y + 2.0 * v.y * v.y];
    let dirs = fiber_directions(Manifold::Torus2, Point::new(0.0, 0.0), k)?;
    let mut worst: f64 = 0.0;
    for h in battery {
        let (mut lhs, mut rhs) = (0.0, 0.0);
        for v in &dirs.directions {
            lhs += h(&(v / (linv * v).norm()));
            let lu = l * v;
            rhs += h(&lu) * det.abs() / lu.norm_squared();
        }
        worst = worst.max(((lhs - rhs) * dirs.weight).abs());
    }
    Ok(worst)
}

/// One line of [`spherical_moment_suite`].
#[derive(Clone, Debug, Serialize)]
pub struct MomentCheck {
    pub identity: String,
    pub closed_form: f64,
    pub quadrature: f64,
    pub deviation: f64,
}

/// Closed forms for low moments of projections on `S^{n-1}` against their
/// quadrature values. `x` doubles as `X` and `y` as `Y` in the cubic term.
pub fn spherical_moment_suite(
    n: usize,
    a: &DMatrix<f64>,
    x: &DVector<f64>,
    y: &DVector<f64>,
    k: usize,
) -> Result<Vec<MomentCheck>> {
    if n == 0 || n > 4 || a.nrows() != n || a.ncols() != n || x.len() != n || y.len() != n {
        return Err(Error::InvalidArgument(format!("moment suite needs 1 <= n <= 4 and matching shapes (n = {n})")));
    }
    let rule = sphere_rule(n, k);
    let quad = |g: &dyn Fn(&DVector<f64>) -> f64| -> f64 { rule.iter().map(|(v, w)| w * g(v)).sum() };
    let nu = n as u32;
    let s = sphere_area(nu - 1);
    let b4 = beta_const(nu, 4)?;
    let mut out = Vec::new();
    let mut push = |identity: String, closed_form: f64, quadrature: f64| {
        out.push(MomentCheck { identity, closed_form, quadrature, deviation: (closed_form - quadrature).abs() });
    };
    let xn = x.norm();
    for q in 0..=8u32 {
        let closed = if q % 2 == 0 { xn.powi(q as i32) * beta_const(nu, q)? } else { 0.0 };
        push(format!("proj_moment_q{q}"), closed, quad(&|v| x.dot(v).powi(q as i32)));
    }
    let ata = a.transpose() * a;
    let pair = quad(&|u| quad(&|v| (u.dot(&(a * v))).powi(2)));
    push("bilinear_square".into(), s * s / (n * n) as f64 * ata.trace(), pair);
    let quartic = 2.0 / 3.0 * (&ata * &ata).trace() * b4 + ata.trace().powi(2) * b4 / 3.0;
    push("norm_fourth".into(), quartic, quad(&|v| (a * v).norm_squared().powi(2)));
    push("cubic_linear".into(), xn * xn * x.dot(y) * b4, quad(&|v| x.dot(v).powi(3) * y.dot(v)));
    let nf = n as f64;
    let h4 = (3.0 / (nf * (nf + 2.0)) * xn.powi(4) - 6.0 / nf * xn * xn + 3.0) * s;
    push("hermite4".into(), h4, quad(&|v| hermite(4, x.dot(v))));
    Ok(out)
}
