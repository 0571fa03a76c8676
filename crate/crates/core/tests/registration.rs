mod common;

use conformal_morph::conformal::{DiskParameterization, MobiusDisk};
use conformal_morph::geodesic::{build_frame, CorrectionConfig, GeodesicFrame};
use conformal_morph::matching::DiskMatching;
use conformal_morph::mesh::TriangleMesh;
use conformal_morph::registration::{
    barycentric, build_registration, sample_field, transfer_attributes, transfer_signature, BoundaryCorrespondence,
    PointLocator, RegistrationError, RegistrationMap, SurfaceSignature,
};
use conformal_morph::shapes;
use nalgebra::{Vector2, Vector3};
use num_complex::Complex64;

/// Registration whose partition has every mesh vertex as a corner.
fn dense_registration(rings: usize, mobius: MobiusDisk) -> (TriangleMesh, DiskParameterization, RegistrationMap) {
    let (mesh, param) = common::flat_disk(rings);
    let features: Vec<usize> = (0..mesh.vertex_count()).filter(|v| !mesh.boundary_mask()[*v]).collect();
    let frame = build_frame(&mesh, &param, &features, &[], &CorrectionConfig::default()).unwrap();
    let f = DiskMatching::mobius_only(mobius, 3).unwrap();
    let reg = build_registration(&frame, &f, BoundaryCorrespondence::Mobius(mobius)).unwrap();
    (mesh, param, reg)
}

#[test]
fn locate_centroid_vertex_and_edge_midpoint() {
    let (mesh, param) = common::flat_disk(4);
    let uv = param.uv();
    let locator = PointLocator::new(&mesh, uv);
    let f = mesh.faces()[10];
    let centroid = (uv[f[0]] + uv[f[1]] + uv[f[2]]) / 3.0;
    let loc = locator.find(&centroid).unwrap();
    assert_eq!(loc.face, 10);
    assert!(loc.coords.iter().all(|c| (c - 1.0 / 3.0).abs() < 1e-12));

    let loc = locator.find(&uv[f[1]]).unwrap();
    let g = mesh.faces()[loc.face];
    let k = g.iter().position(|&v| v == f[1]).unwrap();
    assert!((loc.coords[k] - 1.0).abs() < 1e-12);

    let mid = (uv[f[0]] + uv[f[2]]) / 2.0;
    let loc = locator.find(&mid).unwrap();
    let mut c = loc.coords;
    c.sort_by(f64::total_cmp);
    assert!(c[0].abs() < 1e-12 && (c[1] - 0.5).abs() < 1e-12 && (c[2] - 0.5).abs() < 1e-12);
    // Shared-edge ties go to the lower face index.
    let owners: Vec<usize> = (0..mesh.face_count()).filter(|&i| {
        let g = mesh.faces()[i];
        g.contains(&f[0]) && g.contains(&f[2])
    }).collect();
    assert_eq!(loc.face, owners[0]);
}

#[test]
fn locate_rejects_points_far_outside() {
    let (mesh, param) = common::flat_disk(3);
    let locator = PointLocator::new(&mesh, param.uv());
    assert!(locator.find(&Vector2::new(2.0, 0.0)).is_none());
    assert!(matches!(locator.locate_in_disk(&Vector2::new(1.1, 0.0)), Err(RegistrationError::OutsideDomain { .. })));
    // The sliver between the boundary polygon and the circle is accepted.
    let gap = Vector2::new((0.1f64).cos(), (0.1f64).sin());
    assert!(locator.find(&gap).is_none());
    assert!(locator.locate_in_disk(&gap).is_ok());
}

#[test]
fn identity_matching_gives_identity_registration() {
    let (mesh, param) = common::flat_disk(8);
    let frame = GeodesicFrame::empty(&mesh, &param).unwrap();
    let reg = build_registration(&frame, &DiskMatching::identity(), BoundaryCorrespondence::Mobius(MobiusDisk::identity())).unwrap();
    let images = reg.map_vertices(&mesh, param.uv()).unwrap();
    for (a, b) in images.iter().zip(param.uv()) {
        assert!((a - b).norm() < 1e-9);
    }
}

#[test]
fn mobius_registration_is_exact_at_corners_and_second_order_inside() {
    let mobius = MobiusDisk::new(Complex64::new(0.2, -0.1), 0.7).unwrap();
    let mut errors = Vec::new();
    for rings in [6, 12] {
        let (mesh, param, reg) = dense_registration(rings, mobius);
        let uv = reg.partition().positions().iter().map(|p| p.xy()).collect::<Vec<_>>();
        for (x, y) in uv.iter().zip(reg.targets()) {
            assert!((mobius.apply(x) - y).norm() < 1e-12);
        }
        let mut worst: f64 = 0.0;
        for f in mesh.faces() {
            let c = (param.uv()[f[0]] + param.uv()[f[1]] + param.uv()[f[2]]) / 3.0;
            worst = worst.max((reg.apply(&c).unwrap() - mobius.apply(&c)).norm());
        }
        errors.push(worst);
    }
    assert!(errors[1] < errors[0] / 3.0, "{errors:?}");
}

#[test]
fn single_triangle_registration_is_affine() {
    let m = shapes::single_triangle();
    let uv: Vec<Vector2<f64>> = (0..3).map(|k| {
        let a = std::f64::consts::TAU * k as f64 / 3.0;
        Vector2::new(a.cos(), a.sin())
    }).collect();
    let param = DiskParameterization::from_image(&m, uv.clone()).unwrap();
    let frame = GeodesicFrame::empty(&m, &param).unwrap();
    assert_eq!(frame.partition.face_count(), 1);
    let mobius = MobiusDisk::new(Complex64::new(0.3, 0.2), -0.4).unwrap();
    let reg = build_registration(&frame, &DiskMatching::identity(), BoundaryCorrespondence::Mobius(mobius)).unwrap();
    let corners: Vec<Vector2<f64>> = uv.iter().map(|x| reg.apply(x).unwrap()).collect();
    for w in [[0.2, 0.3, 0.5], [0.6, 0.3, 0.1], [1.0 / 3.0; 3]] {
        let x = uv[0] * w[0] + uv[1] * w[1] + uv[2] * w[2];
        let affine = corners[0] * w[0] + corners[1] * w[1] + corners[2] * w[2];
        assert!((reg.apply(&x).unwrap() - affine).norm() < 1e-12);
    }
}

#[test]
fn registration_is_continuous_across_partition_edges() {
    let mobius = MobiusDisk::new(Complex64::new(-0.15, 0.1), 0.2).unwrap();
    let (_, _, reg) = dense_registration(5, mobius);
    let p = reg.partition();
    let uv: Vec<Vector2<f64>> = p.positions().iter().map(|q| q.xy()).collect();
    let t = reg.targets();
    for (fi, adj) in p.face_adjacency().iter().enumerate() {
        for (k, other) in adj.iter().enumerate() {
            let Some(g) = *other else { continue };
            let f = p.faces()[fi];
            let (a, b) = (f[k], f[(k + 1) % 3]);
            let x = uv[a] * 0.3 + uv[b] * 0.7;
            let eval = |face: usize| {
                let h = p.faces()[face];
                let w = barycentric(&x, &uv[h[0]], &uv[h[1]], &uv[h[2]]);
                t[h[0]] * w[0] + t[h[1]] * w[1] + t[h[2]] * w[2]
            };
            assert!((eval(fi) - eval(g)).norm() < 1e-9);
        }
    }
}

#[test]
fn linear_and_constant_fields_transfer_exactly() {
    let (target, tp) = common::flat_disk(10);
    let (unified, up) = common::flat_disk(7);
    let linear = |q: &Vector2<f64>| 1.0 + 2.0 * q.x - 3.0 * q.y;
    let sig = SurfaceSignature {
        h: tp.uv().iter().map(linear).collect(),
        lambda: vec![1.7; target.vertex_count()],
        boundary: target.boundary().iter().map(|&v| target.positions()[v]).collect(),
    };
    let out = transfer_signature(&unified, up.uv(), &target, &tp, &sig).unwrap();
    // Inradius of the target's 60-gon boundary.
    let inside = (std::f64::consts::PI / 60.0).cos();
    for (v, q) in up.uv().iter().enumerate() {
        assert!((out.lambda[v] - 1.7).abs() < 1e-12);
        if q.norm() < inside {
            assert!((out.h[v] - linear(q)).abs() < 1e-9);
        }
    }
    assert_eq!(out.boundary.len(), unified.boundary().len());
}

#[test]
fn rotated_radial_field_is_preserved() {
    let (target, tp) = common::flat_disk(40);
    assert!(target.vertex_count() > 4900);
    let (_, up) = common::flat_disk(15);
    let rot = MobiusDisk::rotation(0.4);
    let images: Vec<Vector2<f64>> = up.uv().iter().map(|x| rot.apply(x)).collect();
    let field: Vec<f64> = tp.uv().iter().map(|q| q.norm_squared()).collect();
    let sampled = sample_field(&target, &tp, &images, &field).unwrap();
    for (q, s) in up.uv().iter().zip(&sampled) {
        assert!((s - q.norm_squared()).abs() < 2e-3);
    }
}

#[test]
fn colors_transfer() {
    let (target, tp) = common::flat_disk(6);
    assert!(transfer_attributes(tp.uv(), &target, &tp).unwrap().is_none());
    let grey = target.with_vertex_colors(Some(vec![Vector3::new(0.4, 0.5, 0.6); target.vertex_count()])).unwrap();
    let (unified, up) = common::flat_disk(4);
    let c = transfer_attributes(up.uv(), &grey, &tp).unwrap().unwrap();
    assert_eq!(c.len(), unified.vertex_count());
    assert!(c.iter().all(|c| (c - Vector3::new(0.4, 0.5, 0.6)).norm() < 1e-12));

    let checker: Vec<Vector3<f64>> = tp
        .uv()
        .iter()
        .map(|q| if ((q.x * 4.0).floor() + (q.y * 4.0).floor()) as i64 % 2 == 0 { Vector3::zeros() } else { Vector3::repeat(1.0) })
        .collect();
    let painted = target.with_vertex_colors(Some(checker.clone())).unwrap();
    let same = transfer_attributes(tp.uv(), &painted, &tp).unwrap().unwrap();
    for (a, b) in same.iter().zip(&checker) {
        assert!((a - b).norm() < 1e-9);
    }
}

#[test]
fn boundary_correspondence_from_landmarks_interpolates_angles() {
    let at = |a: f64| Vector2::new(a.cos(), a.sin());
    let src = [at(0.0), at(2.0), at(4.0)];
    let tgt = [at(0.5), at(2.5), at(4.5)];
    let c = BoundaryCorrespondence::from_landmarks(&src, &tgt).unwrap().unwrap();
    for a in [0.0, 1.0, 3.3, 5.9] {
        assert!((c.apply(&at(a)) - at(a + 0.5)).norm() < 1e-12);
    }
    assert!(BoundaryCorrespondence::from_landmarks(&src[..1], &tgt[..1]).unwrap().is_none());
    let reversed = [at(4.5), at(2.5), at(0.5)];
    assert!(matches!(BoundaryCorrespondence::from_landmarks(&src, &reversed), Err(RegistrationError::BoundaryOrder)));
}

#[test]
fn folding_matching_is_rejected() {
    let (mesh, param) = common::flat_disk(4);
    let features: Vec<usize> = (0..mesh.vertex_count()).filter(|v| !mesh.boundary_mask()[*v]).collect();
    let frame = build_frame(&mesh, &param, &features, &[], &CorrectionConfig::default()).unwrap();
    // A reflection of the interior against a fixed rim folds triangles.
    let flip = DiskMatching::mobius_only(MobiusDisk::rotation(std::f64::consts::PI), 3).unwrap();
    let err = build_registration(&frame, &flip, BoundaryCorrespondence::Mobius(MobiusDisk::identity())).unwrap_err();
    assert!(matches!(err, RegistrationError::FoldedTarget { .. }));
}
