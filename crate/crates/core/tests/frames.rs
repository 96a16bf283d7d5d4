use nalgebra::{UnitQuaternion, Vector3};
use prometheus_core::frames::*;
use prometheus_core::kinematics::Pose;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn random_rotation(rng: &mut ChaCha8Rng) -> UnitQuaternion<f64> {
    UnitQuaternion::from_euler_angles(
        rng.random_range(-3.0..3.0),
        rng.random_range(-1.5..1.5),
        rng.random_range(-3.0..3.0),
    )
}

fn random_point(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    Vector3::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    )
}

#[test]
fn calibration_recovers_exact_transform() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..50 {
        let rot = random_rotation(&mut rng);
        let t = random_point(&mut rng);
        let truth = FrameTransform::new(rot, t);
        let pairs: Vec<(Pose, Pose)> = (0..10)
            .map(|_| {
                let p = Pose::new(random_point(&mut rng), random_rotation(&mut rng));
                (p, apply_transform(&truth, &p))
            })
            .collect();
        let cal = calibrate(&pairs).unwrap();
        assert!(cal.residual_rms < 1e-12);
        assert!(cal.transform.rotation.angle_to(&rot) < 1e-9);
        assert!((cal.transform.translation - t).norm() < 1e-12);
        for (o, r) in &pairs {
            let m = cal.map(o);
            assert!(m.position_error(r) < 1e-12);
            assert!(m.angular_distance(r) < 1e-9);
        }
    }
}

#[test]
fn coplanar_points_give_a_proper_rotation() {
    let rot = UnitQuaternion::from_euler_angles(0.4, -0.2, 1.1);
    let truth = FrameTransform::new(rot, Vector3::new(0.1, 0.2, 0.3));
    let pts = [
        Vector3::new(0.0, 0.0, 0.0),
        Vector3::new(1.0, 0.0, 0.0),
        Vector3::new(0.0, 1.0, 0.0),
        Vector3::new(1.0, 1.0, 0.0),
    ];
    let pairs: Vec<(Pose, Pose)> = pts
        .iter()
        .map(|p| {
            let o = Pose::new(*p, UnitQuaternion::identity());
            (o, apply_transform(&truth, &o))
        })
        .collect();
    let cal = calibrate(&pairs).unwrap();
    assert!(cal.transform.rotation.angle_to(&rot) < 1e-9);
    assert!(cal.residual_rms < 1e-12);
}

#[test]
fn degenerate_sets_are_rejected() {
    let p = |x: f64| (Pose::from_position(x, 0.0, 0.0), Pose::from_position(x, 1.0, 0.0));
    assert!(matches!(
        calibrate(&[p(0.0), p(1.0)]),
        Err(FramesError::DegenerateGeometry(_))
    ));
    assert!(matches!(
        calibrate(&[p(0.0), p(1.0), p(2.0), p(3.0)]),
        Err(FramesError::DegenerateGeometry(_))
    ));
}

#[test]
fn noisy_calibration_residual() {
    // With isotropic noise sigma on n target points the least-squares
    // residual satisfies E[rms^2] = sigma^2 (3n - 6) / n.
    let sigma = 1e-3;
    let n = 100;
    let expected = sigma * ((3 * n - 6) as f64 / n as f64).sqrt();
    let noise = Normal::new(0.0, sigma).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let trials = 200;
    let mut ms = 0.0;
    for _ in 0..trials {
        let truth = FrameTransform::new(random_rotation(&mut rng), random_point(&mut rng));
        let pairs: Vec<(Pose, Pose)> = (0..n)
            .map(|_| {
                let o = Pose::new(random_point(&mut rng), UnitQuaternion::identity());
                let mut r = apply_transform(&truth, &o);
                r.position += Vector3::from_fn(|_, _| noise.sample(&mut rng));
                (o, r)
            })
            .collect();
        let cal = calibrate(&pairs).unwrap();
        ms += cal.residual_rms.powi(2);
    }
    let rms = (ms / trials as f64).sqrt();
    assert!(
        (rms - expected).abs() / expected < 0.02,
        "rms {rms} expected {expected}"
    );
}

#[test]
fn clutch_repositioning() {
    let t = FrameTransform::identity();
    let robot = Pose::from_position(0.3, 0.0, 0.2);
    let at = |x: f64| TrackerSample {
        timestamp: 0.0,
        pose: Pose::from_position(x, 0.0, 1.0),
    };

    let state = ClutchState::engage(&at(0.0), &robot, &t);
    let (state, cmd) = clutch_step(state, &at(0.1), &t);
    let reached = cmd.unwrap();
    assert!((reached.position - Vector3::new(0.4, 0.0, 0.2)).norm() < 1e-15);

    // Release, move the hand back, re-engage, move again: motion adds up.
    let (_, none) = clutch_step(ClutchState::Disengaged, &at(-0.5), &t);
    assert!(none.is_none());
    assert!(state.is_engaged());
    let state = ClutchState::engage(&at(-0.5), &reached, &t);
    let (_, cmd) = clutch_step(state, &at(-0.4), &t);
    assert!((cmd.unwrap().position - Vector3::new(0.5, 0.0, 0.2)).norm() < 1e-15);
}

proptest! {
    #[test]
    fn clamp_lands_inside_and_is_idempotent(
        x in -2.0..2.0f64, y in -2.0..2.0f64, z in -2.0..2.0f64, r in 0.01..1.0f64,
    ) {
        let center = Vector3::new(0.1, -0.2, 0.3);
        let p = Pose::from_position(x, y, z);
        let c = clamp_workspace(&p, &center, r).unwrap();
        prop_assert!((c.position - center).norm() <= r * (1.0 + 1e-12));
        let again = clamp_workspace(&c, &center, r).unwrap();
        prop_assert!(again.position_error(&c) <= 1e-15);
        if (p.position - center).norm() <= r {
            prop_assert_eq!(c, p);
        }
    }

    #[test]
    fn compose_matches_sequential_application(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = FrameTransform::new(random_rotation(&mut rng), random_point(&mut rng));
        let b = FrameTransform::new(random_rotation(&mut rng), random_point(&mut rng));
        let p = Pose::new(random_point(&mut rng), random_rotation(&mut rng));
        let one = apply_transform(&b.compose(&a), &p);
        let two = apply_transform(&b, &apply_transform(&a, &p));
        prop_assert!(one.position_error(&two) < 1e-12);
        prop_assert!(one.angular_distance(&two) < 1e-9);
    }
}
