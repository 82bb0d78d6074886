//! Level-set length by piecewise-linear extraction: an estimator of the
//! nodal length that shares nothing with the chaos formulas.
//!
//! Torus: marching squares on a periodic square grid, lengths measured in
//! the flat chart. Sphere: latitude-longitude quads split into triangles,
//! crossings interpolated in `R^3`, projected to the sphere and joined by
//! chords. Both are `O(h^2)` accurate for smooth level sets.

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::chaos::{chaos_q, ChaosContext, ChaosForm};
use crate::field::{eval_jet_normalized, mode_value_table, sample_field_indexed, FieldSample, SpectralFieldSpec};
use crate::geometry::{embed, Manifold, Point, POLE_EPS};
use crate::stats::{covariance, summarize, Summary};
use crate::{Error, Result};

/// Colatitude of the first and last rings. The two excluded caps have
/// total area `2 pi POLE_GAP^2 < 1e-12 * 4 pi`.
const POLE_GAP: f64 = 1.2 * POLE_EPS;

/// Vertex grid with mode values tabulated once per spec.
pub struct NodalGrid {
    pub manifold: Manifold,
    pub resolution: usize,
    spec: SpectralFieldSpec,
    vertices: Vec<Point>,
    /// Embedded vertex positions (sphere only).
    embedded: Vec<Vector3<f64>>,
    modes: Vec<f64>,
    /// `sqrt(E phi^2)` at each vertex.
    scale: Vec<f64>,
}

impl NodalGrid {
    /// Torus: `res x res` vertices. Sphere: `res` rings of `2 res` vertices.
    pub fn new(spec: &SpectralFieldSpec, resolution: usize) -> Result<Self> {
        if resolution < 4 {
            return Err(Error::ResolutionTooSmall { got: resolution, min: 4 });
        }
        let r = resolution;
        let vertices: Vec<Point> = match spec.manifold {
            Manifold::Torus2 => {
                (0..r * r).map(|idx| Point::new((idx / r) as f64 / r as f64, (idx % r) as f64 / r as f64)).collect()
            }
            Manifold::Sphere2 => (0..r * 2 * r)
                .map(|idx| {
                    let (i, j) = (idx / (2 * r), idx % (2 * r));
                    let theta = POLE_GAP + (PI - 2.0 * POLE_GAP) * i as f64 / (r - 1) as f64;
                    Point::new(theta, PI * j as f64 / r as f64)
                })
                .collect(),
        };
        let embedded = match spec.manifold {
            Manifold::Sphere2 => vertices.iter().map(|&p| embed(p)).collect(),
            Manifold::Torus2 => Vec::new(),
        };
        let (modes, scale) = mode_value_table(spec, &vertices)?;
        Ok(Self { manifold: spec.manifold, resolution, spec: spec.clone(), vertices, embedded, modes, scale })
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Values of the normalised field at every vertex.
    fn values(&self, coeffs: &[f64]) -> Vec<f64> {
        let n = coeffs.len();
        self.modes
            .chunks(n)
            .zip(&self.scale)
            .map(|(row, s)| row.iter().zip(coeffs).map(|(a, c)| a * c).sum::<f64>() / s)
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodalResult {
    pub seed: u64,
    pub sample: u64,
    pub length: f64,
    pub t: f64,
    pub resolution: usize,
    pub degenerate: usize,
}

/// Length of `{f = t}` for the normalised field of `sample`.
pub fn nodal_length(grid: &NodalGrid, sample: &FieldSample, t: f64) -> Result<NodalResult> {
    let mut vals: Vec<f64> = grid.values(&sample.coefficients).into_iter().map(|v| v - t).collect();
    let scale = vals.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1.0);
    let mut degenerate = 0;
    for v in &mut vals {
        if *v == 0.0 {
            *v = 1e-12 * scale;
            degenerate += 1;
        }
    }
    let length = match grid.manifold {
        Manifold::Torus2 => torus_length(grid, sample, t, &vals)?,
        Manifold::Sphere2 => sphere_length(grid, &vals),
    };
    Ok(NodalResult { seed: sample.seed, sample: sample.index, length, t, resolution: grid.resolution, degenerate })
}

/// Zero of the linear interpolant on `[a, b]`, as a fraction from `a`.
fn cross(a: f64, b: f64) -> f64 {
    a / (a - b)
}

fn torus_length(grid: &NodalGrid, sample: &FieldSample, t: f64, vals: &[f64]) -> Result<f64> {
    let r = grid.resolution;
    let h = 1.0 / r as f64;
    let at = |i: usize, j: usize| vals[(i % r) * r + (j % r)];
    let mut total = Vec::with_capacity(r);
    for i in 0..r {
        let mut row = 0.0;
        for j in 0..r {
            // corners counter-clockwise from (i, j); x1 is the first index
            let c = [at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1)];
            let pos = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];
            let mut pts = [(0.0, 0.0); 4];
            let mut on = [false; 4];
            let mut count = 0;
            for e in 0..4 {
                let (a, b) = (c[e], c[(e + 1) % 4]);
                if (a > 0.0) != (b > 0.0) {
                    let s = cross(a, b);
                    let (p, q) = (pos[e], pos[(e + 1) % 4]);
                    pts[e] = (p.0 + s * (q.0 - p.0), p.1 + s * (q.1 - p.1));
                    on[e] = true;
                    count += 1;
                }
            }
            let seg = |e1: usize, e2: usize| {
                let (p, q) = (pts[e1], pts[e2]);
                h * ((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)).sqrt()
            };
            match count {
                2 => {
                    let e: Vec<usize> = (0..4).filter(|&e| on[e]).collect();
                    row += seg(e[0], e[1]);
                }
                4 => {
                    let centre = Point::new((i as f64 + 0.5) * h, (j as f64 + 0.5) * h);
                    let fc = eval_jet_normalized(&grid.spec, sample, centre)?.value - t;
                    // corner k sits between edges k-1 and k; cut off the two
                    // corners whose sign differs from the centre
                    for (k, ck) in c.iter().enumerate() {
                        if (*ck > 0.0) != (fc > 0.0) {
                            row += seg((k + 3) % 4, k);
                        }
                    }
                }
                _ => {}
            }
        }
        total.push(row);
    }
    Ok(crate::stats::pairwise_sum(&total))
}

fn sphere_length(grid: &NodalGrid, vals: &[f64]) -> f64 {
    let r = grid.resolution;
    let w = 2 * r;
    let idx = |i: usize, j: usize| i * w + (j % w);
    let tri = |a: usize, b: usize, c: usize| -> f64 {
        let v = [a, b, c];
        let mut pts = Vec::with_capacity(2);
        for e in 0..3 {
            let (p, q) = (v[e], v[(e + 1) % 3]);
            let (fp, fq) = (vals[p], vals[q]);
            if (fp > 0.0) != (fq > 0.0) {
                let s = cross(fp, fq);
                let x = grid.embedded[p] + s * (grid.embedded[q] - grid.embedded[p]);
                pts.push(x.normalize());
            }
        }
        if pts.len() == 2 {
            (pts[0] - pts[1]).norm()
        } else {
            0.0
        }
    };
    let rows: Vec<f64> = (0..r - 1)
        .map(|i| {
            let mut row = 0.0;
            for j in 0..w {
                let (a, b, c, d) = (idx(i, j), idx(i, j + 1), idx(i + 1, j + 1), idx(i + 1, j));
                row += tri(a, b, c) + tri(a, c, d);
            }
            row
        })
        .collect();
    crate::stats::pairwise_sum(&rows)
}

/// Covariance of the nodal length with one chaos statistic across samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChaosCovariance {
    pub q: u32,
    pub form: ChaosForm,
    pub mean: f64,
    pub var: Summary,
    pub cov_with_length: f64,
    pub cov_se: f64,
    /// Standard error of `Cov(L, c) - Var(c)`, from the centred products
    /// `(L - c) c`.
    pub projection_gap: f64,
    pub projection_se: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodalReport {
    pub spec_hash: String,
    pub seed: u64,
    pub t: f64,
    pub resolution: usize,
    pub length: Summary,
    pub chaos: Vec<ChaosCovariance>,
    #[serde(skip)]
    pub samples: Vec<NodalResult>,
    #[serde(skip)]
    pub chaos_values: Vec<Vec<f64>>,
}

/// Monte Carlo nodal lengths of samples `0..nsamples`, plus the requested
/// chaos statistics on the same samples.
pub fn mc_nodal(
    spec: &SpectralFieldSpec,
    nsamples: u64,
    grid: &NodalGrid,
    t: f64,
    seed: u64,
    chaos: Option<(&ChaosContext, &[(u32, ChaosForm)])>,
) -> Result<NodalReport> {
    if nsamples < 2 {
        return Err(Error::InvalidArgument("need at least two samples".into()));
    }
    let per: Vec<Result<(NodalResult, Vec<f64>)>> = (0..nsamples)
        .into_par_iter()
        .map(|i| {
            let s = sample_field_indexed(spec, seed, i);
            let nr = nodal_length(grid, &s, t)?;
            let stats = match chaos {
                Some((ctx, req)) => {
                    req.iter().map(|&(q, f)| Ok(chaos_q(ctx, &s, q, f, t)?.value)).collect::<Result<Vec<_>>>()?
                }
                None => Vec::new(),
            };
            Ok((nr, stats))
        })
        .collect();
    let mut samples = Vec::with_capacity(nsamples as usize);
    let nreq = chaos.map_or(0, |(_, r)| r.len());
    let mut chaos_values = vec![Vec::with_capacity(nsamples as usize); nreq];
    for p in per {
        let (nr, st) = p?;
        samples.push(nr);
        for (col, v) in chaos_values.iter_mut().zip(st) {
            col.push(v);
        }
    }
    let lengths: Vec<f64> = samples.iter().map(|s| s.length).collect();
    let mut report_chaos = Vec::new();
    if let Some((_, req)) = chaos {
        for (&(q, form), col) in req.iter().zip(&chaos_values) {
            let var = summarize(col);
            let (cov, cov_se) = covariance(&lengths, col);
            let resid: Vec<f64> = lengths.iter().zip(col).map(|(l, c)| l - c).collect();
            let (gap, gap_se) = covariance(&resid, col);
            report_chaos.push(ChaosCovariance {
                q,
                form,
                mean: var.mean,
                var,
                cov_with_length: cov,
                cov_se,
                projection_gap: gap,
                projection_se: gap_se,
            });
        }
    }
    Ok(NodalReport {
        spec_hash: spec.hash_hex(),
        seed,
        t,
        resolution: grid.resolution,
        length: summarize(&lengths),
        chaos: report_chaos,
        samples,
        chaos_values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{make_arw, make_band, make_rsh, Eigenfunction, Normalization};
    use approx::assert_relative_eq;

    fn single(spec: &SpectralFieldSpec, pick: impl Fn(&Eigenfunction) -> bool) -> FieldSample {
        let coefficients = spec.modes.iter().map(|m| if pick(&m.id) { 1.0 } else { 0.0 }).collect();
        FieldSample { seed: 0, index: 0, coefficients }
    }

    #[test]
    fn constant_level_away_from_field_has_no_length() {
        let spec = make_arw(1).unwrap();
        let grid = NodalGrid::new(&spec, 16).unwrap();
        let s = sample_field_indexed(&spec, 0, 0);
        assert_eq!(nodal_length(&grid, &s, 1e3).unwrap().length, 0.0);
        assert_eq!(nodal_length(&grid, &s, -1e3).unwrap().length, 0.0);
    }

    #[test]
    fn torus_vertical_circles() {
        let spec = make_arw(1).unwrap();
        let s = single(&spec, |id| matches!(id, Eigenfunction::TorusCos { k: [1, 0] }));
        for res in [16, 64, 128] {
            let grid = NodalGrid::new(&spec, res).unwrap();
            let r = nodal_length(&grid, &s, 0.0).unwrap();
            assert_relative_eq!(r.length, 2.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn exact_vertex_zero_is_perturbed_and_counted() {
        let spec = make_arw(1).unwrap();
        let s = single(&spec, |id| matches!(id, Eigenfunction::TorusSin { k: [1, 0] }));
        let grid = NodalGrid::new(&spec, 16).unwrap();
        let r = nodal_length(&grid, &s, 0.0).unwrap();
        // sin(2 pi x1) vanishes on the grid lines x1 = 0 and x1 = 1/2
        assert!(r.degenerate >= 16);
        assert_relative_eq!(r.length, 2.0, max_relative = 1e-9);
    }

    #[test]
    fn sphere_equator() {
        let spec = make_rsh(1).unwrap();
        let s = single(&spec, |id| matches!(id, Eigenfunction::SphereHarmonic { l: 1, m: 0 }));
        let grid = NodalGrid::new(&spec, 256).unwrap();
        let r = nodal_length(&grid, &s, 0.0).unwrap();
        assert!((r.length / (2.0 * PI) - 1.0).abs() < 5e-3, "{}", r.length);
    }

    #[test]
    fn tilted_great_circle() {
        let spec = make_rsh(1).unwrap();
        let coefficients = vec![0.3, 0.5, -0.8];
        let s = FieldSample { seed: 0, index: 0, coefficients };
        let grid = NodalGrid::new(&spec, 128).unwrap();
        let r = nodal_length(&grid, &s, 0.0).unwrap();
        assert!((r.length / (2.0 * PI) - 1.0).abs() < 1e-3, "{}", r.length);
    }

    #[test]
    fn refinement_converges_at_second_order() {
        let spec = make_band(Manifold::Torus2, &[1, 2, 5], Normalization::UnitVariance).unwrap();
        let s = sample_field_indexed(&spec, 3, 0);
        let len = |res| nodal_length(&NodalGrid::new(&spec, res).unwrap(), &s, 0.0).unwrap().length;
        let (a, b, c) = (len(64), len(128), len(256));
        let ratio = (a - b).abs() / (b - c).abs();
        assert!(ratio > 2.5, "Cauchy ratio {ratio}: {a} {b} {c}");
    }

    #[test]
    fn extraction_is_deterministic() {
        let spec = make_rsh(4).unwrap();
        let grid = NodalGrid::new(&spec, 32).unwrap();
        let s = sample_field_indexed(&spec, 8, 2);
        assert_eq!(nodal_length(&grid, &s, 0.3).unwrap(), nodal_length(&grid, &s, 0.3).unwrap());
    }

    #[test]
    fn arw_mean_length_small_run() {
        let spec = make_arw(1).unwrap();
        let grid = NodalGrid::new(&spec, 64).unwrap();
        let rep = mc_nodal(&spec, 200, &grid, 0.0, 4, None).unwrap();
        let want = PI / 2f64.sqrt();
        assert!((rep.length.mean - want).abs() < 4.0 * rep.length.se_mean + 0.01 * want, "{:?}", rep.length);
    }
}
