//! Property tests through the public API.

use std::f64::consts::PI;

use nodal_chaos::chaos::{chaos_q, ChaosContext, ChaosForm};
use nodal_chaos::field::{
    cov_jet, jet_norm, make_anisotropic, make_arw, make_band, make_rsh, metric_data, sample_field_indexed, FieldSample,
    Normalization, SpectralFieldSpec,
};
use nodal_chaos::geometry::{Manifold, Point};
use nodal_chaos::nodal::{nodal_length, NodalGrid};
use nodal_chaos::variance::var_exact;
use proptest::prelude::*;

fn specs() -> Vec<SpectralFieldSpec> {
    vec![
        make_rsh(4).unwrap(),
        make_arw(5).unwrap(),
        make_band(Manifold::Torus2, &[1, 2], Normalization::UnitVariance).unwrap(),
        make_anisotropic(&[([1, 0], 1.0), ([1, 1], 0.7)]).unwrap(),
    ]
}

fn point(m: Manifold, u: f64, v: f64) -> Point {
    match m {
        Manifold::Torus2 => Point::new(u, v),
        Manifold::Sphere2 => Point::new(0.05 + u * (PI - 0.1), 2.0 * PI * v),
    }
}

fn negated(s: &FieldSample) -> FieldSample {
    FieldSample { coefficients: s.coefficients.iter().map(|c| -c).collect(), ..s.clone() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn jet_norm_is_at_most_one(which in 0usize..4, u1 in 0.0..1.0, v1 in 0.0..1.0, u2 in 0.0..1.0, v2 in 0.0..1.0) {
        let spec = &specs()[which];
        let (x, y) = (point(spec.manifold, u1, v1), point(spec.manifold, u2, v2));
        let jc = cov_jet(spec, x, y).unwrap();
        let v = jet_norm(&jc, &metric_data(spec, x).unwrap(), &metric_data(spec, y).unwrap());
        prop_assert!(v <= 1.0 + 1e-12, "{}", v);
        prop_assert!((jc.c - cov_jet(spec, y, x).unwrap().c).abs() < 1e-13);
    }

    #[test]
    fn sampling_is_a_pure_function_of_the_key(seed in any::<u64>(), index in 0u64..1_000_000) {
        let spec = make_arw(25).unwrap();
        let a = sample_field_indexed(&spec, seed, index);
        prop_assert_eq!(&a, &sample_field_indexed(&spec, seed, index));
        prop_assert_ne!(a.coefficients, sample_field_indexed(&spec, seed, index + 1).coefficients);
    }

    #[test]
    fn spec_json_round_trip(ell in 1u32..8) {
        let spec = make_rsh(ell).unwrap();
        let back = SpectralFieldSpec::from_json(&spec.to_json().unwrap()).unwrap();
        prop_assert_eq!(back.hash_hex(), spec.hash_hex());
        prop_assert_eq!(back, spec);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// Even chaos components at level 0 only see even Hermite polynomials,
    /// so they are invariant under `f -> -f`.
    #[test]
    fn even_chaos_is_sign_invariant(which in 0usize..4, index in 0u64..1000) {
        let spec = &specs()[which];
        let ctx = ChaosContext::new(spec, 12, 8).unwrap();
        let s = sample_field_indexed(spec, 3, index);
        for q in [2, 4] {
            let a = chaos_q(&ctx, &s, q, ChaosForm::General, 0.0).unwrap().value;
            let b = chaos_q(&ctx, &negated(&s), q, ChaosForm::General, 0.0).unwrap().value;
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()), "q={}: {} vs {}", q, a, b);
        }
    }

    /// `{f = t}` and `{-f = -t}` are the same curve.
    #[test]
    fn nodal_length_level_symmetry(which in 0usize..4, index in 0u64..1000, t in -1.0..1.0f64) {
        let spec = &specs()[which];
        let grid = NodalGrid::new(spec, 48).unwrap();
        let s = sample_field_indexed(spec, 4, index);
        let a = nodal_length(&grid, &s, t).unwrap().length;
        let b = nodal_length(&grid, &negated(&s), -t).unwrap().length;
        prop_assert!((a - b).abs() <= 1e-10 * (1.0 + a), "{} vs {}", a, b);
    }
}

#[test]
fn exact_variance_ignores_global_scale() {
    let raw = make_band(Manifold::Torus2, &[1, 2], Normalization::Raw).unwrap();
    let unit = raw.unit_variance().unwrap();
    for q in [2, 4] {
        let (a, b) = (var_exact(&raw, q, 16, 8).unwrap(), var_exact(&unit, q, 16, 8).unwrap());
        assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-12), "q={q}: {a} vs {b}");
    }
}
