use nalgebra::Vector3;
use proptest::prelude::*;

use hlik_core::chain::{Frame, JointConfig, KinematicChain};
use hlik_core::datagen::{self, mirror_pose, ArmGeometry, ArmSelection, GenConfig};
use hlik_core::ik::{solve, IkProblem, ResidualWeights, SolverConfig, TrajectorySolver};
use hlik_core::liegroup::geodesic_angle;
use hlik_core::metrics::{StepMetrics, StepSnapshot, DEFAULT_ALPHA};

fn q_strategy() -> impl Strategy<Value = JointConfig> {
    let chain = KinematicChain::reference_arm();
    let ranges: Vec<_> = chain.joints().iter().map(|j| j.limits[0]..=j.limits[1]).collect();
    ranges.prop_map(JointConfig::from_vec)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fk_all_agrees_with_single_frames(q in q_strategy()) {
        let chain = KinematicChain::reference_arm();
        let all = chain.fk_all(&q).unwrap();
        for (pose, frame) in all.iter().zip(Frame::ALL) {
            let single = chain.fk(&q, frame).unwrap();
            prop_assert!((pose.translation - single.translation).norm() < 1e-12);
            prop_assert!(geodesic_angle(&pose.rotation, &single.rotation) < 1e-9);
        }
    }

    #[test]
    fn segment_lengths_match_geometry(q in q_strategy()) {
        let chain = KinematicChain::reference_arm();
        let g = ArmGeometry::from_chain(&chain).unwrap();
        let [s, e, w, _] = chain.fk_all(&q).unwrap();
        prop_assert!(((e.translation - s.translation).norm() - g.upper_arm).abs() < 1e-12);
        prop_assert!(((w.translation - e.translation).norm() - g.forearm).abs() < 1e-12);
    }

    #[test]
    fn warm_start_recovers_nearby_target(q in q_strategy(), delta in prop::collection::vec(-0.05f64..0.05, 7)) {
        let chain = KinematicChain::reference_arm();
        let target = chain.fk(&q, Frame::Ee).unwrap();
        let mut start = &q + JointConfig::from_vec(delta);
        chain.clamp(&mut start);
        let weights = ResidualWeights { w_smooth: 0.0, ..ResidualWeights::default() };
        let problem = IkProblem { target_ee: &target, target_elbow: None, q_prev: &start };
        let config = SolverConfig { max_iters: 50, ..SolverConfig::warm_start() };
        let r = solve(&chain, &start, &problem, &config, &weights).unwrap();
        let got = chain.fk(&r.q_star, Frame::Ee).unwrap();
        prop_assert!((got.translation - target.translation).norm() < 1e-6);
        prop_assert!(r.accepted_costs.windows(2).all(|w| w[1] <= w[0]));
        prop_assert!(chain.within_limits(&r.q_star));
    }

    #[test]
    fn metrics_are_mirror_invariant(
        pts in prop::array::uniform12(-0.6f64..0.6),
        axis in prop::array::uniform3(-1.0f64..1.0),
        angle in 0.0f64..3.0,
    ) {
        let v = |i: usize| Vector3::new(pts[i], pts[i + 1], pts[i + 2]);
        let axis = Vector3::from(axis);
        prop_assume!(axis.norm() > 1e-3);
        let rot = hlik_core::liegroup::UnitQuaternion::from_axis_angle(&axis.normalize(), angle);
        let a = StepSnapshot { shoulder: v(0), elbow: v(3), wrist: v(6), ee: v(9), ee_rotation: rot };
        let b = StepSnapshot { elbow: v(0), shoulder: v(9), ee_rotation: rot.mul(&rot), ..a };
        let mirror = |s: &StepSnapshot| {
            let m = |p: Vector3<f64>| Vector3::new(p.x, -p.y, p.z);
            let r = mirror_pose(&hlik_core::liegroup::Pose::new(s.ee_rotation, s.ee)).rotation;
            StepSnapshot { shoulder: m(s.shoulder), elbow: m(s.elbow), wrist: m(s.wrist), ee: m(s.ee), ee_rotation: r }
        };
        let direct = StepMetrics::compute(&a, &b, DEFAULT_ALPHA);
        let mirrored = StepMetrics::compute(&mirror(&a), &mirror(&b), DEFAULT_ALPHA);
        prop_assert!((direct.kp_pos_err_sq - mirrored.kp_pos_err_sq).abs() < 1e-12);
        prop_assert!((direct.line_angle_err - mirrored.line_angle_err).abs() < 1e-9);
        prop_assert!((direct.ee_ori_err_sq - mirrored.ee_ori_err_sq).abs() < 1e-9);
    }
}

#[test]
fn generated_elbows_are_trackable() {
    let chain = KinematicChain::reference_arm();
    let g = ArmGeometry::from_chain(&chain).unwrap();
    let data = datagen::generate(&GenConfig {
        seed: 21,
        n_traj: 3,
        duration: 4.0,
        arms: ArmSelection::Alternate,
        ..GenConfig::default()
    })
    .unwrap();
    let weights = ResidualWeights::default();
    for traj in &data {
        let traj = traj.as_right_arm();
        let mut solver = TrajectorySolver::new(
            &chain,
            SolverConfig::cold_start().with_elbow(true),
            SolverConfig::warm_start().with_elbow(true),
            weights.clone(),
        );
        for f in &traj.frames {
            let ee = g.shoulder.compose(&f.ee);
            let elbow = g.shoulder.compose(&f.elbow);
            let r = solver.step(&ee, Some(&elbow)).unwrap();
            let [_, got_elbow, _, got_ee] = chain.fk_all(&r.q_star).unwrap();
            assert!((got_ee.translation - ee.translation).norm() < 5e-4, "{} t={}", traj.id, f.t);
            assert!((got_elbow.translation - elbow.translation).norm() < 5e-4, "{} t={}", traj.id, f.t);
        }
    }
}
