mod common;

use nalgebra::{Matrix3, Vector3};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use surgical_perception::geometry::{
    axis_angle_from_rotation, project_feature, project_point, rotation_from_axis_angle, KinematicChain,
    LumpedErrorState, Transform3D,
};

use common::*;

fn vec3(range: f64) -> impl Strategy<Value = Vector3<f64>> {
    prop::array::uniform3(-range..range).prop_map(Vector3::from)
}

fn transform() -> impl Strategy<Value = Transform3D> {
    (vec3(2.0), vec3(5.0)).prop_map(|(w, t)| Transform3D::new(rotation_from_axis_angle(&w), t).unwrap())
}

fn orthonormality_error(r: &Matrix3<f64>) -> f64 {
    (r.transpose() * r - Matrix3::identity()).abs().max()
}

proptest! {
    #[test]
    fn composition_stays_orthonormal(a in transform(), b in transform(), c in transform()) {
        let t = a * b * c;
        prop_assert!(orthonormality_error(t.rotation()) < 1e-9);
        prop_assert!((t.rotation().determinant() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rodrigues_round_trip(dir in vec3(1.0), angle in 1e-6f64..(std::f64::consts::PI - 1e-3)) {
        prop_assume!(dir.norm() > 1e-3);
        let omega = dir.normalize() * angle;
        let r = rotation_from_axis_angle(&omega);
        let back = rotation_from_axis_angle(&axis_angle_from_rotation(&r));
        prop_assert!((back - r).abs().max() < 1e-9);
        let t = Transform3D::new(r, Vector3::zeros()).unwrap();
        prop_assert!((t.log_rotation() - omega).norm() < 1e-9 * omega.norm().max(1.0));
    }

    #[test]
    fn rodrigues_matches_series(omega in vec3(1.8)) {
        prop_assert!((rotation_from_axis_angle(&omega) - expm(&skew(&omega))).abs().max() < 1e-12);
    }

    #[test]
    fn inverse_composes_to_identity(t in transform()) {
        let i = t * t.inverse();
        prop_assert!((i.rotation() - Matrix3::identity()).abs().max() < 1e-12);
        prop_assert!(i.translation().norm() < 1e-12);
    }

    #[test]
    fn projection_ignores_homogeneous_scale(
        x in -1.0f64..1.0, y in -1.0f64..1.0, z in 0.1f64..10.0, s in 1e-3f64..1e3
    ) {
        let k = camera();
        let p = Vector3::new(x, y, z);
        let a = project_point(&k, &p).unwrap();
        let b = project_point(&k, &(p * s)).unwrap();
        prop_assert!((a - b).norm() <= 1e-9 * a.norm());
    }

    #[test]
    fn lumped_state_wraps_into_the_ball(w in vec3(12.0)) {
        let s = LumpedErrorState::new(w, Vector3::zeros()).unwrap();
        prop_assert!(s.omega().norm() <= std::f64::consts::PI + 1e-12);
        let same = rotation_from_axis_angle(&w);
        prop_assert!((rotation_from_axis_angle(s.omega()) - same).abs().max() < 1e-9);
    }
}

#[test]
fn raw_chain_projection_matches_matrix_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let k = camera();
    for _ in 0..100 {
        let chain = random_chain(&mut rng, 6);
        let joints = random_joints(&mut rng, 6);
        // Identity hand-eye: place the chain in front of the camera through the base points only.
        let plain = KinematicChain::new(
            chain.joints().to_vec(),
            Transform3D::from_translation(Vector3::new(0.0, 0.0, 3.0)),
            chain.features().to_vec(),
        )
        .unwrap();
        for f in plain.features() {
            let got = project_feature(&k, &plain, &joints, &LumpedErrorState::zero(), &f.id).unwrap();
            let want = oracle_project(&k, &plain, &joints, &LumpedErrorState::zero(), f);
            assert!((got - want).norm() < 1e-9, "{got} vs {want}");
        }
    }
}

#[test]
fn full_projection_matches_matrix_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let k = camera();
    for _ in 0..100 {
        let chain = random_chain(&mut rng, 6);
        let joints = random_joints(&mut rng, 6);
        let lumped = random_lumped(&mut rng, 0.3, 0.1);
        for f in chain.features() {
            let got = project_feature(&k, &chain, &joints, &lumped, &f.id).unwrap();
            let want = oracle_project(&k, &chain, &joints, &lumped, f);
            assert!((got - want).norm() < 1e-9, "{got} vs {want}");
        }
    }
}

#[test]
fn json_round_trips_are_bit_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let chain = random_chain(&mut rng, 5);
    let text = serde_json::to_string(&chain).unwrap();
    let back: KinematicChain = serde_json::from_str(&text).unwrap();
    assert_eq!(back, chain);
    let s = random_lumped(&mut rng, 1.0, 1.0);
    let back: LumpedErrorState = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
    assert_eq!(back, s);
}
