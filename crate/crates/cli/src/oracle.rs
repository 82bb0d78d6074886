//! Independent numerical oracles for the closed-form constants: plain
//! quadrature and moment formulas that never call the library's own
//! expressions.

use nalgebra::{DMatrix, SymmetricEigen};
use std::f64::consts::PI;

/// Composite Simpson rule; `n` is rounded up to an even panel count.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

pub fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// Gamma at positive integers and half-integers.
pub fn gamma_half(x: f64) -> f64 {
    let twice = (2.0 * x).round() as i64;
    assert!(twice >= 1 && (2.0 * x - twice as f64).abs() < 1e-12, "gamma_half({x})");
    let (mut g, mut y) = if twice % 2 == 0 { (1.0, 1.0) } else { (PI.sqrt(), 0.5) };
    while y < x - 1e-12 {
        g *= y;
        y += 1.0;
    }
    g
}

/// Probabilists' Hermite polynomial from its explicit coefficients
/// (expansion of the generating function). Returns the value and the sum of
/// absolute terms, which sets the scale of the rounding error.
pub fn hermite_explicit(q: u32, x: f64) -> (f64, f64) {
    let mut v = 0.0;
    let mut scale = 0.0;
    for m in 0..=q / 2 {
        let c = factorial(q) / (factorial(m) * factorial(q - 2 * m) * 2f64.powi(m as i32));
        let t = c * x.powi((q - 2 * m) as i32);
        v += if m % 2 == 1 { -t } else { t };
        scale += t.abs();
    }
    (v, scale)
}

/// Gauss rule for the standard normal law (Golub-Welsch on the Hermite
/// Jacobi matrix). Weights sum to one.
pub fn gauss_hermite(n: usize) -> Vec<(f64, f64)> {
    let j = DMatrix::from_fn(n, n, |r, c| if r.abs_diff(c) == 1 { (r.max(c) as f64).sqrt() } else { 0.0 });
    let eig = SymmetricEigen::new(j);
    let mut out: Vec<(f64, f64)> = (0..n).map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2))).collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

/// `s_n` from `s_0 = 2`, `s_1 = 2 pi`, `s_n = 2 pi s_{n-2} / (n - 1)`.
pub fn sphere_area(n: u32) -> f64 {
    match n {
        0 => 2.0,
        1 => 2.0 * PI,
        _ => 2.0 * PI * sphere_area(n - 2) / f64::from(n - 1),
    }
}

/// `int_{S^{n-1}} |v_1|^q` as `s_{n-2} int_0^pi |cos t|^q sin^{n-2} t dt`,
/// split at the kink.
pub fn beta(n: u32, q: u32) -> f64 {
    if n == 1 {
        return 2.0;
    }
    let f = |t: f64| t.cos().abs().powi(q as i32) * t.sin().powi(n as i32 - 2);
    let half = simpson(f, 0.0, PI / 2.0, 4000) + simpson(f, PI / 2.0, PI, 4000);
    sphere_area(n - 2) * half
}

/// `E[|g| H_2b(g)] / (2b)!` by quadrature against the normal density.
pub fn c_chi(b: u32) -> f64 {
    let phi = |x: f64| (-x * x / 2.0).exp() / (2.0 * PI).sqrt();
    let upper = 16.0 + 2.0 * f64::from(b);
    2.0 * simpson(|x| x * hermite_explicit(2 * b, x).0 * phi(x), 0.0, upper, 40_000) / factorial(2 * b)
}

/// `E[|xi|^p]` for a standard Gaussian vector in `R^n`.
fn chi_moment(n: u32, p: u32) -> f64 {
    2f64.powf(f64::from(p) / 2.0) * gamma_half(f64::from(n + p) / 2.0) / gamma_half(f64::from(n) / 2.0)
}

/// `A(n, 2b) = E[|xi| H_2b(xi_1)] / ((2b)! beta(n, 2b))`, with the
/// expectation expanded over monomials: `|xi|` and the direction of `xi` are
/// independent, so `E[|xi| xi_1^2j] = E[|xi|^(2j+1)] beta(n, 2j) / s_{n-1}`.
pub fn a_coeff(n: u32, b: u32) -> f64 {
    let q = 2 * b;
    let mut e = 0.0;
    for m in 0..=b {
        let j = b - m;
        let c = factorial(q) / (factorial(m) * factorial(q - 2 * m) * 2f64.powi(m as i32));
        let t = c * chi_moment(n, 2 * j + 1) * beta(n, 2 * j) / sphere_area(n - 1);
        e += if m % 2 == 1 { -t } else { t };
    }
    e / (factorial(q) * beta(n, q))
}

/// `Theta(a, b)` from its defining product: the `H_2a(0)` value times the
/// chi coefficient, `pi H_2a(0) c_chi(b) / ((2a)! sqrt(2 pi))`.
pub fn theta(a: u32, b: u32) -> f64 {
    PI * hermite_explicit(2 * a, 0.0).0 * c_chi(b) / (factorial(2 * a) * (2.0 * PI).sqrt())
}

/// `c_{d,q} = (-1)^k / (k! 2^k beta(d, q))`, `k = q / 2`.
pub fn c_dq(d: u32, q: u32) -> f64 {
    let k = q / 2;
    let sign = if k % 2 == 1 { -1.0 } else { 1.0 };
    sign / (factorial(k) * 2f64.powi(k as i32) * beta(d, q))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_hermite_moments() {
        let rule = gauss_hermite(12);
        let m = |p: i32| rule.iter().map(|(x, w)| w * x.powi(p)).sum::<f64>();
        assert!((m(0) - 1.0).abs() < 1e-13);
        assert!((m(2) - 1.0).abs() < 1e-12);
        assert!((m(4) - 3.0).abs() < 1e-11);
        assert!((m(8) - 105.0).abs() < 1e-9);
    }

    #[test]
    fn closed_values() {
        assert!((beta(2, 1) - 4.0).abs() < 1e-10);
        assert!((beta(3, 2) - 4.0 * PI / 3.0).abs() < 1e-10);
        assert!((c_chi(0) - (2.0 / PI).sqrt()).abs() < 1e-10);
        assert!((theta(0, 2) + 1.0 / 24.0).abs() < 1e-10);
        assert_eq!(gamma_half(0.5), PI.sqrt());
        assert_eq!(gamma_half(4.0), 6.0);
    }

    #[test]
    fn a_coeff_b0_is_mean_norm_over_area() {
        // E|xi| / beta(n, 0) with beta(n, 0) = s_{n-1}
        for n in 1..=4 {
            let want = chi_moment(n, 1) / sphere_area(n - 1);
            assert!((a_coeff(n, 0) - want).abs() < 1e-12);
        }
    }
}
