use std::f64::consts::PI;

use nalgebra::{UnitQuaternion, Vector3};
use prometheus_core::kinematics::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type M4 = [[f64; 4]; 4];

fn dh_matrix(theta: f64, d: f64, a: f64, alpha: f64) -> M4 {
    let (st, ct) = theta.sin_cos();
    let (sa, ca) = alpha.sin_cos();
    [
        [ct, -st * ca, st * sa, a * ct],
        [st, ct * ca, -ct * sa, a * st],
        [0.0, sa, ca, d],
        [0.0, 0.0, 0.0, 1.0],
    ]
}

fn mul(x: &M4, y: &M4) -> M4 {
    let mut out = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = (0..4).map(|k| x[i][k] * y[k][j]).sum();
        }
    }
    out
}

fn oracle_fk(q: &[f64; 6], dh: &DhTable) -> M4 {
    let mut t = [
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ];
    for (row, qi) in dh.rows().iter().zip(q) {
        t = mul(&t, &dh_matrix(qi + row.theta_offset, row.d, row.a, row.alpha));
    }
    t
}

fn random_q(rng: &mut ChaCha8Rng) -> JointVector {
    JointVector(std::array::from_fn(|_| rng.random_range(-PI..PI)))
}

#[test]
fn fk_matches_matrix_product() {
    let dh = DhTable::ur3();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..200 {
        let q = random_q(&mut rng);
        let pose = forward_kinematics(&q, &dh);
        let t = oracle_fk(q.as_array(), &dh);
        let r = pose.orientation.to_rotation_matrix();
        for i in 0..3 {
            assert!((pose.position[i] - t[i][3]).abs() < 1e-12);
            for j in 0..3 {
                assert!((r[(i, j)] - t[i][j]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn fk_zero_configuration() {
    // All joints at zero: the arm lies stretched along -x.
    let dh = DhTable::ur3();
    let p = forward_kinematics(&JointVector::zeros(), &dh);
    let expected = Vector3::new(-0.24365 - 0.21325, -(0.11235 + 0.0819), 0.1519 - 0.08535);
    assert!((p.position - expected).norm() < 1e-12);
}

#[test]
fn jacobian_matches_finite_differences() {
    let dh = DhTable::ur3();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let h = 1e-7;
    for _ in 0..100 {
        let q = random_q(&mut rng);
        let j = jacobian(&q, &dh);
        for i in 0..6 {
            let mut plus = q;
            let mut minus = q;
            plus.0[i] += h;
            minus.0[i] -= h;
            let fp = forward_kinematics(&plus, &dh);
            let fm = forward_kinematics(&minus, &dh);
            let lin = (fp.position - fm.position) / (2.0 * h);
            // Small-angle rotation vector from the quaternion's vector part.
            let rel = fp.orientation * fm.orientation.inverse();
            let ang = rel.quaternion().imag() * (2.0 * rel.w.signum()) / (2.0 * h);
            for k in 0..3 {
                assert!((j[(k, i)] - lin[k]).abs() < 1e-6, "linear row {k} joint {i}");
                assert!((j[(k + 3, i)] - ang[k]).abs() < 1e-6, "angular row {k} joint {i}");
            }
        }
    }
}

#[test]
fn ik_thousand_random_poses() {
    let dh = DhTable::ur3();
    let solver = UrSolver::new(dh).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let started = std::time::Instant::now();
    for _ in 0..1000 {
        let q = random_q(&mut rng);
        let target = forward_kinematics(&q, &dh);
        let sols = solver.solve(&target);
        assert!(!sols.is_empty());
        for s in &sols.solutions {
            let fk = forward_kinematics(&s.joints, &dh);
            assert!(fk.position_error(&target) < IK_POSITION_TOLERANCE);
            assert!(fk.angular_distance(&target) < IK_ANGLE_TOLERANCE);
        }
        if q[4].sin().abs() > 1e-3 {
            assert!(sols.solutions.iter().any(|s| s.joints.max_wrapped_diff(&q) < 1e-6));
        }
    }
    assert!(started.elapsed().as_secs_f64() < 5.0);
}

#[test]
fn generic_pose_has_eight_branches() {
    let dh = DhTable::ur3();
    let q = JointVector([0.3, -1.1, 1.4, -0.7, 1.2, 0.5]);
    let sols = inverse_kinematics(&forward_kinematics(&q, &dh), &dh).unwrap();
    let branches: Vec<u8> = sols.solutions.iter().map(|s| s.branch).collect();
    assert_eq!(branches, (0..8).collect::<Vec<u8>>());
}

#[test]
fn far_target_has_no_solution() {
    let dh = DhTable::ur3();
    let target = Pose::new(Vector3::new(0.0, 0.0, 2.0), UnitQuaternion::identity());
    assert!(inverse_kinematics(&target, &dh).unwrap().is_empty());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn ik_round_trip(q in prop::array::uniform6(-PI..PI)) {
        let dh = DhTable::ur3();
        prop_assume!(q[4].sin().abs() > 1e-3);
        let q = JointVector(q);
        let target = forward_kinematics(&q, &dh);
        let sols = inverse_kinematics(&target, &dh).unwrap();
        prop_assert!(sols.solutions.iter().any(|s| s.joints.max_wrapped_diff(&q) < 1e-6));
        for s in &sols.solutions {
            let fk = forward_kinematics(&s.joints, &dh);
            prop_assert!(fk.position_error(&target) < 1e-9);
            prop_assert!(fk.angular_distance(&target) < 1e-9);
        }
    }

    #[test]
    fn selection_picks_a_closest_candidate(
        cands in prop::collection::vec(prop::array::uniform6(-PI..PI), 1..8),
        cur in prop::array::uniform6(-PI..PI),
    ) {
        let cands: Vec<JointVector> = cands.into_iter().map(JointVector).collect();
        let cur = JointVector(cur);
        let w = SelectionWeights::default();
        let best = select_solution(&cands, &cur, &w).unwrap();
        for c in &cands {
            prop_assert!(w.distance(&best, &cur) <= w.distance(c, &cur));
        }
    }

    #[test]
    fn unwrap_stays_in_limits_and_equivalent(
        cand in prop::array::uniform6(-PI..PI),
        cur in prop::array::uniform6(-6.0..6.0f64),
    ) {
        let limits = JointLimits::default();
        let out = limits.unwrap_toward(&JointVector(cand), &JointVector(cur)).unwrap();
        prop_assert!(limits.contains(&out));
        for i in 0..6 {
            prop_assert!(wrap_angle(out[i] - cand[i]).abs() < 1e-9);
            for k in [-2.0, -1.0, 1.0, 2.0] {
                let alt = out[i] + k * 2.0 * PI;
                if alt >= limits.lower[i] && alt <= limits.upper[i] {
                    prop_assert!((out[i] - cur[i]).abs() <= (alt - cur[i]).abs() + 1e-12);
                }
            }
        }
    }
}
