use prometheus_core::dataset::*;
use prometheus_core::gripper::PolicyKind;
use prometheus_core::server::{run_episode, EpisodeSetup};
use prometheus_core::Config;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn observation(rng: &mut ChaCha8Rng, opening: f64) -> Observation {
    Observation {
        joints: std::array::from_fn(|_| rng.random_range(-3.0..3.0)),
        ee_pose: [rng.random(), rng.random(), rng.random(), 1.0, 0.0, 0.0, 0.0],
        gripper_pos_norm: opening / 85.0,
        force_norm: rng.random(),
        wrist_image_ref: Some(format!("wrist/{:04}.png", rng.random_range(0..10_000))),
        side_image_ref: None,
    }
}

/// Random walk of `n` raw states whose steps stay inside `a_max`.
fn walk(rng: &mut ChaCha8Rng, n: usize) -> Vec<(Observation, [f64; 7])> {
    let mut s: [f64; 7] = std::array::from_fn(|i| if i < 6 { rng.random_range(-1.0..1.0) } else { 60.0 });
    (0..n)
        .map(|_| {
            let out = (observation(rng, s[6]), s);
            for i in 0..7 {
                s[i] += rng.random_range(-0.9..0.9) * DEFAULT_A_MAX[i];
            }
            s[6] = s[6].clamp(0.0, 85.0);
            out
        })
        .collect()
}

#[test]
fn three_hundred_step_file_round_trips() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let header = TrajectoryHeader {
        task: "tomato".into(),
        episode_id: 9,
        ..TrajectoryHeader::default()
    };
    let t = assemble(header, &walk(&mut rng, 300)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ep.jsonl");
    export(&t, &path).unwrap();
    let back = import(&path).unwrap();
    assert_eq!(back, t);
    for (a, b) in back.steps.iter().zip(&t.steps) {
        for (x, y) in a.observation.joints.iter().zip(&b.observation.joints) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }
    assert_eq!(std::fs::read(&path).unwrap(), back.to_bytes());
}

#[test]
fn reconstruction_from_actions() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let t = assemble(TrajectoryHeader::default(), &walk(&mut rng, 300)).unwrap();
    assert!(t.steps.iter().all(|s| !s.clamped));
    for (r, s) in t.reconstruct().iter().zip(t.states()) {
        for i in 0..7 {
            assert!((r[i] - s[i]).abs() < 1e-9);
        }
    }
}

#[test]
fn telescoping_deltas() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let states: Vec<[f64; 7]> = (0..500)
        .map(|_| std::array::from_fn(|_| rng.random_range(-2.0..2.0)))
        .collect();
    let deltas = compute_deltas(&states).unwrap();
    let mut acc = states[0];
    for d in &deltas {
        for i in 0..7 {
            acc[i] += d[i];
        }
    }
    for i in 0..7 {
        assert!((acc[i] - states[499][i]).abs() < 1e-12);
    }
    let ramp: Vec<[f64; 7]> = (0..10).map(|k| [0.01 * k as f64; 7]).collect();
    for d in compute_deltas(&ramp).unwrap() {
        assert!(d.iter().all(|v| (v - 0.01).abs() < 1e-15));
    }
}

#[test]
fn discretize_is_monotone_and_surjective() {
    let mut seen = [false; 256];
    let mut prev = 0u8;
    for k in 0..=512 {
        let b = discretize(k as f64 / 512.0).unwrap().0;
        assert!(b >= prev);
        prev = b;
        seen[b as usize] = true;
    }
    assert!(seen.iter().all(|s| *s));
    assert_eq!(discretize(0.0).unwrap(), BinIndex(0));
    assert_eq!(discretize(1.0).unwrap(), BinIndex(255));
    assert_eq!(discretize(0.5).unwrap(), BinIndex(128));
}

#[test]
fn simulated_episode_round_trips_and_stays_normalized() {
    let cfg = Config::defaults();
    let setup = EpisodeSetup::from_config(&cfg, "tomato", PolicyKind::ForceCapped, 5, 2).unwrap();
    let run = run_episode(&setup).unwrap();
    let t = &run.trajectory;
    for s in &t.steps {
        assert!((0.0..=1.0).contains(&s.observation.force_norm));
        assert!((0.0..=1.0).contains(&s.observation.gripper_pos_norm));
        s.observation.proprio_bins().unwrap();
    }
    assert_eq!(&Trajectory::read_from(t.to_bytes().as_slice()).unwrap(), t);
    for (r, s) in t.reconstruct().iter().zip(t.states()) {
        for i in 0..7 {
            assert!((r[i] - s[i]).abs() < 1e-9);
        }
    }
}

proptest! {
    #[test]
    fn standardize_round_trip(raw in prop::array::uniform7(-1.0..1.0f64), scale in prop::array::uniform7(0.001..10.0f64)) {
        let raw: [f64; 7] = std::array::from_fn(|i| raw[i] * scale[i]);
        let a = standardize_action(&raw, &scale).unwrap();
        prop_assert!(a.0.iter().all(|v| (-1.0..=1.0).contains(v)));
        let back = destandardize(&a, &scale);
        for i in 0..7 {
            prop_assert!((back[i] - raw[i]).abs() <= 1e-15 * scale[i].max(1.0));
        }
    }

    #[test]
    fn standardize_clamps(raw in prop::array::uniform7(-100.0..100.0f64)) {
        let a = standardize_action(&raw, &DEFAULT_A_MAX).unwrap();
        for i in 0..7 {
            prop_assert_eq!(a.0[i], (raw[i] / DEFAULT_A_MAX[i]).clamp(-1.0, 1.0));
        }
    }

    #[test]
    fn export_import_is_exact(seed in any::<u64>(), n in 1usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = assemble(TrajectoryHeader::default(), &walk(&mut rng, n)).unwrap();
        prop_assert_eq!(Trajectory::read_from(t.to_bytes().as_slice()).unwrap(), t);
    }

    #[test]
    fn any_truncation_is_detected(seed in any::<u64>(), cut in 1usize..2000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bytes = assemble(TrajectoryHeader::default(), &walk(&mut rng, 5)).unwrap().to_bytes();
        let keep = bytes.len().saturating_sub(cut.min(bytes.len() - 1));
        // Cutting only the final newline leaves a complete file.
        prop_assume!(keep < bytes.len() - 1);
        prop_assert!(Trajectory::read_from(&bytes[..keep]).is_err());
    }
}
