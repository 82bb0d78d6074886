//! Spectral Gaussian fields `phi = sum_i std_i z_i phi_i` on the sphere and
//! the torus.
//!
//! Eigenfunctions are normalised to unit mean square, `avg_M phi_i^2 = 1`,
//! so the average variance of a raw band equals its dimension. Torus modes
//! are `sqrt2 cos(2 pi k.x)` and `sqrt2 sin(2 pi k.x)` with eigenvalue
//! `4 pi^2 |k|^2`; sphere modes are `sqrt(4 pi) Y_lm` (real harmonics) with
//! eigenvalue `l(l+1)`.
//!
//! The field that the chaos formulas act on is the pointwise unit-variance
//! normalisation `f = phi / sqrt(E phi^2)`. Specs flagged `unit_variance`
//! already satisfy `E phi^2 = 1`, so there `f = phi`.

mod harmonics;
mod jet;

pub use jet::*;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::geometry::{build_manifold_quadrature, Manifold};
use crate::specfun::MAX_DEGREE;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Eigenfunction {
    TorusCos { k: [i32; 2] },
    TorusSin { k: [i32; 2] },
    SphereHarmonic { l: u32, m: i32 },
}

impl Eigenfunction {
    pub fn manifold(&self) -> Manifold {
        match self {
            Eigenfunction::SphereHarmonic { .. } => Manifold::Sphere2,
            _ => Manifold::Torus2,
        }
    }

    /// Laplace eigenvalue `lambda_i^2`.
    pub fn eigenvalue(&self) -> f64 {
        match *self {
            Eigenfunction::TorusCos { k } | Eigenfunction::TorusSin { k } => {
                4.0 * PI * PI * f64::from(k[0] * k[0] + k[1] * k[1])
            }
            Eigenfunction::SphereHarmonic { l, .. } => f64::from(l * (l + 1)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mode {
    pub id: Eigenfunction,
    pub eigenvalue: f64,
    pub std: f64,
}

impl Mode {
    fn new(id: Eigenfunction, std: f64) -> Self {
        Self { id, eigenvalue: id.eigenvalue(), std }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    Raw,
    UnitVariance,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralFieldSpec {
    pub manifold: Manifold,
    pub modes: Vec<Mode>,
    pub normalization: Normalization,
}

/// Lattice points `k` with `|k|^2 = m`.
pub fn lattice_points(m: u64) -> Vec<[i32; 2]> {
    let r = (m as f64).sqrt().ceil() as i64 + 1;
    let mut out = Vec::new();
    for a in -r..=r {
        for b in -r..=r {
            if (a * a + b * b) as u64 == m {
                out.push([a as i32, b as i32]);
            }
        }
    }
    out
}

fn positive_half(k: [i32; 2]) -> bool {
    k[0] > 0 || (k[0] == 0 && k[1] > 0)
}

fn torus_pair(k: [i32; 2], std: f64) -> [Mode; 2] {
    [Mode::new(Eigenfunction::TorusCos { k }, std), Mode::new(Eigenfunction::TorusSin { k }, std)]
}

fn sphere_shell(l: u32, std: f64) -> impl Iterator<Item = Mode> {
    let l_i = l as i32;
    (-l_i..=l_i).map(move |m| Mode::new(Eigenfunction::SphereHarmonic { l, m }, std))
}

/// Random spherical harmonics of degree `ell` with covariance `P_ell(<x,y>)`.
pub fn make_rsh(ell: u32) -> Result<SpectralFieldSpec> {
    if ell == 0 || ell > MAX_DEGREE {
        return Err(Error::InvalidArgument(format!("spherical harmonic degree must be in 1..={MAX_DEGREE}")));
    }
    let std = 1.0 / f64::from(2 * ell + 1).sqrt();
    Ok(SpectralFieldSpec {
        manifold: Manifold::Sphere2,
        modes: sphere_shell(ell, std).collect(),
        normalization: Normalization::UnitVariance,
    })
}

/// Arithmetic random wave with covariance `|E_m|^{-1} sum_{k in E_m} cos(2 pi k.(x-y))`.
pub fn make_arw(m: u64) -> Result<SpectralFieldSpec> {
    let e = lattice_points(m);
    if e.is_empty() || m == 0 {
        return Err(Error::NotSumOfTwoSquares(m));
    }
    let std = 1.0 / (e.len() as f64).sqrt();
    let modes = e.into_iter().filter(|&k| positive_half(k)).flat_map(|k| torus_pair(k, std)).collect();
    Ok(SpectralFieldSpec { manifold: Manifold::Torus2, modes, normalization: Normalization::UnitVariance })
}

/// Riemannian random wave on a spectral window: every eigenfunction whose
/// eigenvalue index is listed (`l` on the sphere, `|k|^2` on the torus).
/// Raw bands use unit coefficient stds; normalised bands divide by the
/// square root of the dimension.
pub fn make_band(manifold: Manifold, eigen: &[u32], normalization: Normalization) -> Result<SpectralFieldSpec> {
    if eigen.is_empty() {
        return Err(Error::InvalidArgument("empty eigenvalue list".into()));
    }
    let mut sorted = eigen.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidArgument(format!("repeated eigenvalue in {eigen:?}")));
    }
    let mut modes = Vec::new();
    for &e in &sorted {
        match manifold {
            Manifold::Sphere2 => {
                if e == 0 || e > MAX_DEGREE {
                    return Err(Error::InvalidArgument(format!("sphere band degree {e} outside 1..={MAX_DEGREE}")));
                }
                modes.extend(sphere_shell(e, 1.0));
            }
            Manifold::Torus2 => {
                let pts = lattice_points(u64::from(e));
                if pts.is_empty() || e == 0 {
                    return Err(Error::NotSumOfTwoSquares(u64::from(e)));
                }
                modes.extend(pts.into_iter().filter(|&k| positive_half(k)).flat_map(|k| torus_pair(k, 1.0)));
            }
        }
    }
    let mut spec = SpectralFieldSpec { manifold, modes, normalization: Normalization::Raw };
    if normalization == Normalization::UnitVariance {
        spec = spec.unit_variance()?;
    }
    Ok(spec)
}

/// Stationary torus field with one cosine/sine pair per listed frequency.
pub fn make_anisotropic(freqs: &[([i32; 2], f64)]) -> Result<SpectralFieldSpec> {
    let mut seen = std::collections::BTreeSet::new();
    let mut modes = Vec::new();
    for &(k, std) in freqs {
        if k == [0, 0] {
            return Err(Error::InvalidArgument("zero frequency has no gradient".into()));
        }
        if !(std.is_finite() && std > 0.0) {
            return Err(Error::InvalidArgument(format!("std must be positive, got {std}")));
        }
        let canon = if positive_half(k) { k } else { [-k[0], -k[1]] };
        if !seen.insert(canon) {
            return Err(Error::InvalidArgument(format!("frequency {k:?} listed twice (up to sign)")));
        }
        modes.extend(torus_pair(canon, std));
    }
    let spec = SpectralFieldSpec { manifold: Manifold::Torus2, modes, normalization: Normalization::Raw };
    let g: f64 = {
        let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
        for &(k, s) in freqs {
            let (k0, k1) = (f64::from(k[0]), f64::from(k[1]));
            a += s * s * k0 * k0;
            b += s * s * k0 * k1;
            c += s * s * k1 * k1;
        }
        (a * c - b * b) / ((a + c) * (a + c))
    };
    if g <= 1e-14 {
        return Err(Error::Degenerate("frequency set does not span the plane".into()));
    }
    spec.unit_variance()
}

impl SpectralFieldSpec {
    pub fn dim(&self) -> u32 {
        self.manifold.dim()
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn max_degree(&self) -> u32 {
        self.modes
            .iter()
            .map(|m| match m.id {
                Eigenfunction::SphereHarmonic { l, .. } => l,
                Eigenfunction::TorusCos { k } | Eigenfunction::TorusSin { k } => {
                    k[0].unsigned_abs().max(k[1].unsigned_abs())
                }
            })
            .max()
            .unwrap_or(0)
    }

    /// Exact average variance `sigma^2 = sum std_i^2`.
    pub fn spectral_sigma2(&self) -> f64 {
        self.modes.iter().map(|m| m.std * m.std).sum()
    }

    /// Exact average frequency `lambda^2 = sum std_i^2 e_i / sum std_i^2`,
    /// written around the first eigenvalue so a single-eigenvalue spec
    /// returns that eigenvalue bit for bit.
    pub fn spectral_lambda2(&self) -> f64 {
        let e0 = self.modes[0].eigenvalue;
        let s2 = self.spectral_sigma2();
        let d: f64 = self.modes.iter().map(|m| m.std * m.std * (m.eigenvalue - e0)).sum();
        e0 + d / s2
    }

    /// True when every torus frequency carries a cosine/sine pair of equal
    /// std (translation invariance) or every sphere degree carries its full
    /// shell with a common std (rotation invariance).
    pub fn is_invariant(&self) -> bool {
        match self.manifold {
            Manifold::Torus2 => self.torus_pairs().is_some(),
            Manifold::Sphere2 => self.isotropic_weights().is_some(),
        }
    }

    fn torus_pairs(&self) -> Option<BTreeMap<[i32; 2], f64>> {
        let mut cos = BTreeMap::new();
        let mut sin = BTreeMap::new();
        for m in &self.modes {
            match m.id {
                Eigenfunction::TorusCos { k } => cos.insert(k, m.std),
                Eigenfunction::TorusSin { k } => sin.insert(k, m.std),
                _ => return None,
            };
        }
        if cos.len() != sin.len() || cos.iter().any(|(k, s)| sin.get(k) != Some(s)) {
            return None;
        }
        Some(cos)
    }

    /// Legendre weights `w_l = std_l^2 (2l + 1)` when the spec is isotropic on
    /// the sphere: then `E phi(x) phi(y) = sum_l w_l P_l(<x,y>)`.
    pub fn isotropic_weights(&self) -> Option<Vec<(u32, f64)>> {
        if self.manifold != Manifold::Sphere2 {
            return None;
        }
        let mut shells: BTreeMap<u32, (usize, f64, bool)> = BTreeMap::new();
        for m in &self.modes {
            let Eigenfunction::SphereHarmonic { l, .. } = m.id else { return None };
            let e = shells.entry(l).or_insert((0, m.std, true));
            e.0 += 1;
            e.2 &= e.1 == m.std;
        }
        let mut out = Vec::new();
        for (l, (count, std, same)) in shells {
            if !same || count != (2 * l + 1) as usize {
                return None;
            }
            out.push((l, std * std * f64::from(2 * l + 1)));
        }
        Some(out)
    }

    /// Rescales an invariant spec to unit variance everywhere.
    pub fn unit_variance(&self) -> Result<Self> {
        if !self.is_invariant() {
            return Err(Error::InvalidArgument(
                "only translation or rotation invariant specs have constant variance".into(),
            ));
        }
        let s = self.spectral_sigma2().sqrt();
        let modes = self.modes.iter().map(|m| Mode { std: m.std / s, ..*m }).collect();
        Ok(Self { manifold: self.manifold, modes, normalization: Normalization::UnitVariance })
    }

    pub fn validate(&self) -> Result<()> {
        if self.modes.iter().all(|m| m.std == 0.0) {
            return Err(Error::Degenerate("no mode with positive std".into()));
        }
        let mut ids = std::collections::BTreeSet::new();
        for m in &self.modes {
            if m.id.manifold() != self.manifold {
                return Err(Error::InvalidArgument(format!("mode {:?} does not live on {:?}", m.id, self.manifold)));
            }
            if !(m.std.is_finite() && m.std >= 0.0) {
                return Err(Error::InvalidArgument(format!("bad std {} for {:?}", m.std, m.id)));
            }
            let e = m.id.eigenvalue();
            if (m.eigenvalue - e).abs() > 1e-12 * e.max(1.0) {
                return Err(Error::InvalidArgument(format!("eigenvalue {} of {:?} should be {e}", m.eigenvalue, m.id)));
            }
            match m.id {
                Eigenfunction::TorusCos { k } | Eigenfunction::TorusSin { k } if !positive_half(k) => {
                    return Err(Error::InvalidArgument(format!(
                        "torus frequency {k:?} must be in the positive half-plane"
                    )));
                }
                Eigenfunction::SphereHarmonic { l, m } if m.unsigned_abs() > l || l > MAX_DEGREE => {
                    return Err(Error::InvalidArgument(format!("invalid harmonic ({l}, {m})")));
                }
                _ => {}
            }
            if !ids.insert(m.id) {
                return Err(Error::InvalidArgument(format!("mode {:?} listed twice", m.id)));
            }
        }
        if self.normalization == Normalization::UnitVariance {
            let q = build_manifold_quadrature(self.manifold, 8)?;
            let basis = FieldBasis::new(self, &q.nodes)?;
            if let Some(v) = basis.raw_variance.iter().find(|v| (*v - 1.0).abs() > 1e-10) {
                return Err(Error::Degenerate(format!("unit_variance spec has E phi^2 = {v}")));
            }
            for i in 0..basis.len() {
                MetricData::from_metric(basis.metric(i), self.dim())?;
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(s)?;
        spec.validate()?;
        Ok(spec)
    }

    /// Stable 64-bit FNV-1a hash of the canonical JSON form.
    pub fn hash_hex(&self) -> String {
        let json = serde_json::to_string(self).expect("spec serialises");
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in json.bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        format!("{h:016x}")
    }
}

/// One realisation: `coefficients[i] = std_i z_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldSample {
    pub seed: u64,
    pub index: u64,
    pub coefficients: Vec<f64>,
}

/// Standard normal keyed by `(seed, stream, counter)`: ChaCha8 with the
/// stream id and a word position derived from the counter, then Box-Muller.
pub fn keyed_normal(seed: u64, stream: u64, counter: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos(u128::from(counter) * 4);
    let u1 = ((rng.next_u64() >> 11) + 1) as f64 / (1u64 << 53) as f64;
    let u2 = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

pub fn sample_field(spec: &SpectralFieldSpec, seed: u64) -> FieldSample {
    sample_field_indexed(spec, seed, 0)
}

/// Sample `index` of a Monte Carlo run seeded by `seed`. Mode `i` always
/// reads the same generator position, so results do not depend on how
/// samples are scheduled.
pub fn sample_field_indexed(spec: &SpectralFieldSpec, seed: u64, index: u64) -> FieldSample {
    let coefficients =
        spec.modes.iter().enumerate().map(|(i, m)| m.std * keyed_normal(seed, index, i as u64)).collect();
    FieldSample { seed, index, coefficients }
}
