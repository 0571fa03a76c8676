use std::f64::consts::TAU;

use conformal_morph::conformal::MobiusDisk;
use conformal_morph::homotopy::KeyframeTrack;
use conformal_morph::matching::{optimal_mobius_points, ThinPlateField};
use conformal_morph::mesh::{cotangent_laplacian, TriangleMesh};
use conformal_morph::registration::barycentric;
use conformal_morph::shapes;
use nalgebra::{Rotation2, Vector2, Vector3};
use num_complex::Complex64;
use proptest::prelude::*;

fn point_in_disk(r: f64) -> impl Strategy<Value = Vector2<f64>> {
    (0.0..r, 0.0..TAU).prop_map(|(s, a)| Vector2::new(s * a.cos(), s * a.sin()))
}

fn mobius() -> impl Strategy<Value = MobiusDisk> {
    (point_in_disk(0.8), 0.0..TAU).prop_map(|(a, t)| MobiusDisk::new(Complex64::new(a.x, a.y), t).unwrap())
}

/// A four-ring disk with jittered interior vertices and a random height.
fn jittered_disk() -> impl Strategy<Value = TriangleMesh> {
    let n = shapes::ring_vertex_count(4);
    (prop::collection::vec((-0.04..0.04f64, -0.04..0.04f64, -0.3..0.3f64), n)).prop_map(|jitter| {
        let base = shapes::unit_disk(4);
        let rim = base.boundary_mask();
        let p = base
            .positions()
            .iter()
            .zip(&jitter)
            .zip(&rim)
            .map(|((p, &(dx, dy, z)), &on_rim)| if on_rim { *p } else { p + Vector3::new(dx, dy, z) })
            .collect();
        base.with_positions(p).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn laplacian_is_symmetric_with_zero_row_sums_and_psd(mesh in jittered_disk(), x in prop::collection::vec(-1.0..1.0f64, 61)) {
        let k = cotangent_laplacian(&mesh).unwrap();
        prop_assert!(k.symmetry_defect() < 1e-12);
        prop_assert!(k.row_sum_defect() < 1e-12);
        prop_assert!(k.quadratic_form(&x) >= -1e-12);
    }

    #[test]
    fn mobius_maps_the_circle_to_itself(m in mobius(), phi in 0.0..TAU, z in point_in_disk(0.999)) {
        let w = m.apply(&Vector2::new(phi.cos(), phi.sin()));
        prop_assert!((w.norm() - 1.0).abs() < 1e-12);
        prop_assert!(m.apply(&z).norm() < 1.0);
        prop_assert!((m.inverse().apply(&m.apply(&z)) - z).norm() < 1e-9);
    }

    #[test]
    fn mobius_fit_commutes_with_rotation(
        m in mobius(),
        p in prop::collection::vec(point_in_disk(0.9), 6..12),
        noise in prop::collection::vec(point_in_disk(0.02), 12),
        angle in 0.0..TAU,
    ) {
        let q: Vec<Vector2<f64>> = p.iter().zip(&noise).map(|(x, e)| m.apply(x) + e).collect();
        let fit = optimal_mobius_points(&p, &q).unwrap();
        let r = Rotation2::new(angle);
        let rp: Vec<Vector2<f64>> = p.iter().map(|x| r * x).collect();
        let rq: Vec<Vector2<f64>> = q.iter().map(|x| r * x).collect();
        let rotated = optimal_mobius_points(&rp, &rq).unwrap();
        prop_assert!((fit.objective - rotated.objective).abs() <= 1e-6 * fit.objective + 1e-12,
            "{} vs {}", fit.objective, rotated.objective);
        // The generating map is feasible, so the fit can only do better.
        let generating: f64 = p.iter().zip(&q).map(|(x, y)| (m.apply(x) - y).norm_squared()).sum();
        prop_assert!(fit.objective <= generating * (1.0 + 1e-9) + 1e-15);
    }

    #[test]
    fn spline_passes_through_its_knots(
        steps in prop::collection::vec(0.1..2.0f64, 2..7),
        seed in prop::collection::vec(-5.0..5.0f64, 7 * 3),
    ) {
        let mut times = vec![0.0];
        for s in &steps {
            times.push(times.last().unwrap() + s);
        }
        let values: Vec<Vec<f64>> = (0..times.len()).map(|k| seed[3 * k..3 * k + 3].to_vec()).collect();
        let track = KeyframeTrack::fit(times.clone(), values.clone()).unwrap();
        for (t, v) in times.iter().zip(&values) {
            prop_assert_eq!(&track.eval(*t).values, v);
        }
    }

    #[test]
    fn spline_reproduces_linear_data(
        steps in prop::collection::vec(0.1..2.0f64, 2..7),
        slope in -3.0..3.0f64,
        t in -1.0..12.0f64,
    ) {
        let mut times = vec![0.0];
        for s in &steps {
            times.push(times.last().unwrap() + s);
        }
        let values = times.iter().map(|t| vec![1.0 + slope * t]).collect();
        let track = KeyframeTrack::fit(times, values).unwrap();
        prop_assert!((track.eval(t).values[0] - (1.0 + slope * t)).abs() < 1e-9);
    }

    #[test]
    fn barycentric_round_trip(
        a in point_in_disk(1.0), b in point_in_disk(1.0), c in point_in_disk(1.0),
        w in (0.0..1.0f64, 0.0..1.0f64),
    ) {
        let area = (b - a).perp(&(c - a));
        prop_assume!(area.abs() > 1e-2);
        let w = [w.0, w.1, 1.0 - w.0 - w.1];
        let x = a * w[0] + b * w[1] + c * w[2];
        let got = barycentric(&x, &a, &b, &c);
        for k in 0..3 {
            prop_assert!((got[k] - w[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn plate_coefficients_shrink_as_regularization_grows(
        p in prop::collection::vec(point_in_disk(0.9), 3..9),
        d in prop::collection::vec(point_in_disk(0.1), 9),
        e1 in 1e-8..1e-2f64,
        factor in 1.0..100.0f64,
    ) {
        let values = &d[..p.len()];
        let n = 4;
        let norm = |eps: f64| {
            let g = ThinPlateField::fit(&p, values, n, eps, vec![1.0; n * n]).unwrap();
            g.alpha1().iter().chain(g.alpha2()).map(|a| a * a).sum::<f64>().sqrt()
        };
        let (small, large) = (norm(e1), norm(e1 * factor));
        prop_assert!(large <= small * (1.0 + 1e-9), "{small} -> {large}");
    }
}
