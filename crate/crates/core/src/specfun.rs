//! Special functions and combinatorial constants.
//!
//! Hermite polynomials are the probabilists' family, `H_q(x) t^q / q!`
//! generating `exp(tx - t^2/2)`. Every chaos coefficient in the crate is built
//! from the functions here.

use num::{BigInt, BigRational, FromPrimitive, Num, One, Signed, Zero};
use statrs::function::gamma::ln_gamma;
use std::f64::consts::PI;

use crate::{Error, Result};

/// Largest polynomial degree accepted by the public API.
pub const MAX_DEGREE: u32 = 64;

fn check_degree(q: u32) -> Result<()> {
    if q > MAX_DEGREE {
        Err(Error::DegreeTooLarge { degree: q, max: MAX_DEGREE })
    } else {
        Ok(())
    }
}

fn check_even(q: u32) -> Result<()> {
    if q % 2 == 1 {
        Err(Error::OddOrder(q))
    } else {
        Ok(())
    }
}

/// `H_q(x)` by the three-term recurrence.
pub fn hermite_eval(q: u32, x: f64) -> Result<f64> {
    check_degree(q)?;
    Ok(hermite(q, x))
}

pub(crate) fn hermite(q: u32, x: f64) -> f64 {
    if q == 0 {
        return 1.0;
    }
    let (mut h0, mut h1) = (1.0, x);
    for k in 1..q {
        let h2 = x * h1 - k as f64 * h0;
        h0 = h1;
        h1 = h2;
    }
    h1
}

/// Writes `H_k(x)` into `out[k]` for every index of `out`.
pub(crate) fn hermite_table(x: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = 1.0;
    if out.len() > 1 {
        out[1] = x;
    }
    for k in 2..out.len() {
        out[k] = x * out[k - 1] - (k - 1) as f64 * out[k - 2];
    }
}

/// `H_{2a}(0) = (-1)^a (2a)! / (2^a a!)`, i.e. a signed double factorial.
pub fn hermite_at_zero(a: u32) -> Result<f64> {
    check_degree(2 * a)?;
    let odd: f64 = (1..=a).map(|j| (2 * j - 1) as f64).product();
    Ok(if a.is_multiple_of(2) { odd } else { -odd })
}

/// Generalised Laguerre polynomial `L_k^{(alpha)}(x)`.
pub fn laguerre_eval(k: u32, alpha: f64, x: f64) -> Result<f64> {
    check_degree(k)?;
    if k == 0 {
        return Ok(1.0);
    }
    let (mut l0, mut l1) = (1.0, 1.0 + alpha - x);
    for j in 1..k {
        let j = j as f64;
        let l2 = ((2.0 * j + 1.0 + alpha - x) * l1 - (j + alpha) * l0) / (j + 1.0);
        l0 = l1;
        l1 = l2;
    }
    Ok(l1)
}

/// Area of the unit sphere `S^n` in `R^{n+1}`.
pub fn sphere_area(n: u32) -> f64 {
    let h = (n as f64 + 1.0) / 2.0;
    (2f64.ln() + h * PI.ln() - ln_gamma(h)).exp()
}

/// `beta(n, q) = int_{S^{n-1}} |v_1|^q dv`.
pub fn beta_const(n: u32, q: u32) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidArgument("beta_const needs n >= 1".into()));
    }
    let (n, q) = (n as f64, q as f64);
    Ok((2f64.ln() + 0.5 * (n - 1.0) * PI.ln() + ln_gamma((q + 1.0) / 2.0) - ln_gamma((q + n) / 2.0)).exp())
}

pub(crate) fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// Coefficient of `H_{2b}` in the chaos expansion of `|gamma|`.
pub fn c_chi(b: u32) -> Result<f64> {
    check_degree(2 * b)?;
    let sign = if b % 2 == 1 { 1.0 } else { -1.0 };
    let two_pow = 2f64.powi(b as i32 - 1);
    Ok(sign / (two_pow * (2.0 * PI).sqrt() * (2.0 * b as f64 - 1.0) * factorial(b)))
}

/// `A(n, 2b) = (pi / s_n) c_chi(b)`.
pub fn a_coeff(n: u32, b: u32) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidArgument("a_coeff needs n >= 1".into()));
    }
    Ok(PI / sphere_area(n) * c_chi(b)?)
}

/// `Theta(a, b) = (-1)^{a+b-1} / (2^{a+b} (2b-1) a! b!)`.
pub fn theta(a: u32, b: u32) -> Result<f64> {
    check_degree(2 * (a + b))?;
    Ok(theta_unchecked(a, b))
}

pub(crate) fn theta_unchecked(a: u32, b: u32) -> f64 {
    let sign = if (a + b) % 2 == 1 { 1.0 } else { -1.0 };
    sign / (2f64.powi((a + b) as i32) * (2.0 * b as f64 - 1.0) * factorial(a) * factorial(b))
}

fn big_factorial(n: u32) -> BigInt {
    (1..=n).fold(BigInt::one(), |acc, j| acc * BigInt::from(j))
}

/// `Theta(a, b)` as an exact rational.
pub fn theta_exact(a: u32, b: u32) -> BigRational {
    let sign = if (a + b) % 2 == 1 { 1 } else { -1 };
    let den =
        (BigInt::one() << (a + b) as usize) * BigInt::from(2 * i64::from(b) - 1) * big_factorial(a) * big_factorial(b);
    BigRational::new(BigInt::from(sign), den)
}

/// Laguerre comparison constant: `L_{q/2}^{(d/2-1)}(|xi|^2/2) = c_{d,q} S_{d,q}(xi)`
/// with `S_{d,q}(xi) = int_{S^{d-1}} H_q(<xi, v>) dv`.
pub fn c_dq(d: u32, q: u32) -> Result<f64> {
    check_even(q)?;
    check_degree(q)?;
    if d == 0 {
        return Err(Error::InvalidArgument("c_dq needs d >= 1".into()));
    }
    let k = q / 2;
    let rising: f64 = (0..k).map(|j| d as f64 / 2.0 + j as f64).product();
    let odd: f64 = (1..k + 1).map(|j| (2 * j - 1) as f64).product();
    let sign = if k % 2 == 1 { -1.0 } else { 1.0 };
    Ok(sign * rising / (factorial(k) * odd) / sphere_area(d - 1))
}

/// Arguments of the four-point diagram formula with `C_12 = C_34 = 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiagramArgs {
    pub a: u32,
    pub b: u32,
    pub a2: u32,
    pub b2: u32,
    pub c13: f64,
    pub c14: f64,
    pub c23: f64,
    pub c24: f64,
}

impl DiagramArgs {
    pub fn new(degrees: [u32; 4], corr: [f64; 4]) -> Result<Self> {
        for &d in &degrees {
            check_degree(d)?;
        }
        if corr.iter().any(|c| !c.is_finite() || c.abs() > 1.0) {
            return Err(Error::InvalidArgument(format!("correlations must lie in [-1, 1]: {corr:?}")));
        }
        let [a, b, a2, b2] = degrees;
        let [c13, c14, c23, c24] = corr;
        Ok(Self { a, b, a2, b2, c13, c14, c23, c24 })
    }
}

/// `E[H_a(g1) H_b(g2) H_a'(g3) H_b'(g4)]` for unit Gaussians with
/// `C_12 = C_34 = 0`.
pub fn diagram4(args: &DiagramArgs) -> f64 {
    diagram4_generic([args.a, args.b, args.a2, args.b2], &args.c13, &args.c14, &args.c23, &args.c24)
}

fn factorial_in<T: Clone + Num + FromPrimitive>(n: u32) -> T {
    (1..=n).fold(T::one(), |acc, j| acc * T::from_u32(j).unwrap())
}

/// Single-sum closed form of the diagram formula, over any numeric field
/// (`f64` or exact rationals).
pub fn diagram4_generic<T>(degrees: [u32; 4], c13: &T, c14: &T, c23: &T, c24: &T) -> T
where
    T: Clone + Num + FromPrimitive,
{
    let [a, b, a2, b2] = degrees;
    if a + b != a2 + b2 {
        return T::zero();
    }
    let lo = a2.saturating_sub(b);
    let hi = a.min(a2);
    let mut sum = T::zero();
    for k in lo..=hi {
        let e24 = b + k - a2;
        let num = num::pow(c13.clone(), k as usize)
            * num::pow(c14.clone(), (a - k) as usize)
            * num::pow(c23.clone(), (a2 - k) as usize)
            * num::pow(c24.clone(), e24 as usize);
        let den = factorial_in::<T>(k) * factorial_in::<T>(a - k) * factorial_in::<T>(a2 - k) * factorial_in::<T>(e24);
        sum = sum + num / den;
    }
    factorial_in::<T>(a) * factorial_in::<T>(b) * factorial_in::<T>(a2) * factorial_in::<T>(b2) * sum
}

/// Brute-force diagram enumeration: `E[prod_i H_{d_i}(g_i)]` summed over
/// all symmetric non-negative integer matrices with zero diagonal and row
/// sums `degrees`. Diagonal entries of `cov` are ignored (unit variances).
pub fn wick_oracle<T>(degrees: [u32; 4], cov: &[[T; 4]; 4]) -> T
where
    T: Clone + Num + FromPrimitive,
{
    let [d1, d2, d3, d4] = degrees.map(i64::from);
    if (d1 + d2 + d3 + d4) % 2 == 1 {
        return T::zero();
    }
    let term =
        |i: usize, j: usize, k: i64| -> T { num::pow(cov[i][j].clone(), k as usize) / factorial_in::<T>(k as u32) };
    let mut sum = T::zero();
    for k12 in 0..=d1.min(d2) {
        for k13 in 0..=(d1 - k12).min(d3) {
            let k14 = d1 - k12 - k13;
            for k23 in 0..=(d2 - k12).min(d3 - k13) {
                let k24 = d2 - k12 - k23;
                let k34 = d3 - k13 - k23;
                if k14 + k24 + k34 != d4 {
                    continue;
                }
                sum = sum
                    + term(0, 1, k12)
                        * term(0, 2, k13)
                        * term(0, 3, k14)
                        * term(1, 2, k23)
                        * term(1, 3, k24)
                        * term(2, 3, k34);
            }
        }
    }
    degrees.iter().fold(T::one(), |acc, &d| acc * factorial_in::<T>(d)) * sum
}

fn splits(q: u32) -> impl Iterator<Item = (u32, u32)> {
    (0..=q / 2).map(move |a| (a, q / 2 - a))
}

/// Left and right sides of `sum |Theta(a,b) Theta(a',b')| q! <= 2^q`.
pub fn coefficient_bound(q: u32) -> Result<(f64, f64)> {
    check_even(q)?;
    check_degree(q)?;
    let s: f64 = splits(q).map(|(a, b)| theta_unchecked(a, b).abs()).sum();
    Ok((s * s * factorial(q), 2f64.powi(q as i32)))
}

/// Exact version of [`coefficient_bound`].
pub fn coefficient_bound_exact(q: u32) -> Result<(BigRational, BigRational)> {
    check_even(q)?;
    let s = splits(q).fold(BigRational::zero(), |acc, (a, b)| acc + theta_exact(a, b).abs());
    let fq = BigRational::from_integer(big_factorial(q));
    let bound = BigRational::from_integer(BigInt::one() << q as usize);
    Ok((s.clone() * s * fq, bound))
}

/// `kappa(a,b,a',b') = sum_k (2a)!(2b)!(2a')!(2b')! / (k!(2a-k)!(2a'-k)!(2b-2a'+k)!)`.
pub fn kappa(a: u32, b: u32, a2: u32, b2: u32) -> BigInt {
    let (ta, tb, ta2, tb2) = (2 * a, 2 * b, 2 * a2, 2 * b2);
    let top = big_factorial(ta) * big_factorial(tb) * big_factorial(ta2) * big_factorial(tb2);
    let mut sum = BigInt::zero();
    for k in ta2.saturating_sub(tb)..=ta.min(ta2) {
        let den = big_factorial(k) * big_factorial(ta - k) * big_factorial(ta2 - k) * big_factorial(tb + k - ta2);
        sum += &top / den;
    }
    sum
}
