//! Real spherical harmonics and Legendre polynomials.

/// Fully normalised associated Legendre functions `Pbar_l^m(cos theta)`
/// (orthonormal on the sphere once multiplied by the azimuthal factor) and
/// their colatitude derivatives, for `0 <= m <= l <= lmax`.
pub(crate) struct LegendreTable {
    lmax: usize,
    p: Vec<f64>,
    dp: Vec<f64>,
}

fn idx(l: usize, m: usize) -> usize {
    l * (l + 1) / 2 + m
}

impl LegendreTable {
    pub(crate) fn new(lmax: usize, theta: f64) -> Self {
        let (st, ct) = theta.sin_cos();
        let size = idx(lmax, lmax) + 1;
        let mut p = vec![0.0; size];
        let mut dp = vec![0.0; size];
        let mut pmm = 1.0 / (4.0 * std::f64::consts::PI).sqrt();
        for m in 0..=lmax {
            if m > 0 {
                pmm *= ((2 * m + 1) as f64 / (2 * m) as f64).sqrt() * st;
            }
            p[idx(m, m)] = pmm;
            if m < lmax {
                p[idx(m + 1, m)] = ((2 * m + 3) as f64).sqrt() * ct * pmm;
            }
            for l in m + 2..=lmax {
                let (lf, mf) = (l as f64, m as f64);
                let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
                let b = (((lf - 1.0).powi(2) - mf * mf) / (4.0 * (lf - 1.0).powi(2) - 1.0)).sqrt();
                p[idx(l, m)] = a * (ct * p[idx(l - 1, m)] - b * p[idx(l - 2, m)]);
            }
        }
        // sin(theta) dP_l^m/dtheta = l cos(theta) P_l^m - c_lm P_{l-1}^m
        for m in 0..=lmax {
            for l in m..=lmax {
                let (lf, mf) = (l as f64, m as f64);
                let prev = if l > m {
                    ((2.0 * lf + 1.0) * (lf * lf - mf * mf) / (2.0 * lf - 1.0)).sqrt() * p[idx(l - 1, m)]
                } else {
                    0.0
                };
                dp[idx(l, m)] = (lf * ct * p[idx(l, m)] - prev) / st;
            }
        }
        Self { lmax, p, dp }
    }

    pub(crate) fn p(&self, l: usize, m: usize) -> f64 {
        debug_assert!(l <= self.lmax);
        self.p[idx(l, m)]
    }

    pub(crate) fn dp(&self, l: usize, m: usize) -> f64 {
        self.dp[idx(l, m)]
    }
}

/// Value and frame gradient `(d/dtheta, 1/sin(theta) d/dphi)` of the real
/// harmonic `Y_lm` normalised to unit mean square on the sphere
/// (`sqrt(4 pi)` times the orthonormal harmonic). `m < 0` selects the sine
/// branch.
pub(crate) fn real_harmonic(table: &LegendreTable, l: u32, m: i32, theta: f64, phi: f64) -> (f64, [f64; 2]) {
    let scale = (4.0 * std::f64::consts::PI).sqrt();
    let (l, am) = (l as usize, m.unsigned_abs() as usize);
    let (p, dp) = (table.p(l, am), table.dp(l, am));
    if m == 0 {
        return (scale * p, [scale * dp, 0.0]);
    }
    let st = theta.sin();
    let mf = am as f64;
    let (s, c) = (mf * phi).sin_cos();
    let r2 = std::f64::consts::SQRT_2 * scale;
    if m > 0 {
        (r2 * p * c, [r2 * dp * c, -r2 * mf * p * s / st])
    } else {
        (r2 * p * s, [r2 * dp * s, r2 * mf * p * c / st])
    }
}

/// `P_l(t)`, `P_l'(t)`, `P_l''(t)` for `l = 0..=lmax`.
pub(crate) fn legendre_with_derivatives(lmax: usize, t: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut p = vec![0.0; lmax + 1];
    let mut d1 = vec![0.0; lmax + 1];
    let mut d2 = vec![0.0; lmax + 1];
    p[0] = 1.0;
    if lmax >= 1 {
        p[1] = t;
        d1[1] = 1.0;
    }
    for l in 1..lmax {
        let lf = l as f64;
        p[l + 1] = ((2.0 * lf + 1.0) * t * p[l] - lf * p[l - 1]) / (lf + 1.0);
        d1[l + 1] = d1[l - 1] + (2.0 * lf + 1.0) * p[l];
        d2[l + 1] = d2[l - 1] + (2.0 * lf + 1.0) * d1[l];
    }
    (p, d1, d2)
}
