mod common;

use std::time::Instant;

use common::{random_poses, rel_err, rng};
use nalgebra::{Matrix6, Vector3};
use pkm_stiffness::architectures::{preset, PRESET_3PRPAR, PRESET_3PUU};
use pkm_stiffness::chain::{
    fd_jacobians, forward, inverse_kinematics, jacobians, ChainElement, ChainModel, ChainState,
    JointAxis, SpringDof,
};
use pkm_stiffness::transforms::{elementary, ElementaryKind::*, Transform};
use rand::Rng;

fn random_transform(r: &mut impl Rng) -> Transform {
    let mut t = Transform::identity();
    for k in [RotX, RotY, RotZ] {
        t = t * elementary(k, r.gen_range(-3.0..3.0)).unwrap();
    }
    t * Transform::from_translation(Vector3::from_fn(|_, _| r.gen_range(-200.0..200.0)))
}

fn random_chain(r: &mut impl Rng) -> (ChainModel, ChainState) {
    let model = ChainModel::new(vec![
        ChainElement::Rigid(random_transform(r)),
        ChainElement::Actuated(TransZ),
        ChainElement::Spring(SpringDof::One),
        ChainElement::Rigid(random_transform(r)),
        ChainElement::Spring(SpringDof::Six),
        ChainElement::Passive(vec![JointAxis::free(RotX), JointAxis::free(RotY), JointAxis::free(RotZ)]),
        ChainElement::Rigid(random_transform(r)),
        ChainElement::Spring(SpringDof::Six),
        ChainElement::Passive(vec![JointAxis::free(RotY), JointAxis::slaved(RotZ, 1, 0.5)]),
        ChainElement::Rigid(random_transform(r)),
    ])
    .unwrap();
    let q: Vec<f64> = (0..model.n_q()).map(|_| r.gen_range(-1.2..1.2)).collect();
    let state = ChainState::rigid(&model, r.gen_range(-100.0..100.0), &q);
    (model, state)
}

#[test]
fn template_sizes() {
    for name in [PRESET_3PUU, PRESET_3PRPAR] {
        let m = preset(name).unwrap();
        let j = jacobians(&m.chains[0].model, &m.chains[0].home).unwrap();
        assert_eq!(j.j_theta.ncols(), 13);
    }
    let m = preset(PRESET_3PUU).unwrap();
    let j = jacobians(&m.chains[0].model, &m.chains[0].home).unwrap();
    assert_eq!(j.j_q.ncols(), 4);
}

#[test]
fn forward_equals_factor_fold() {
    let mut r = rng(11);
    let m = preset(PRESET_3PUU).unwrap();
    let c = &m.chains[1];
    let mut s = c.home.clone();
    s.q0 += 3.0;
    for i in 0..s.q.len() {
        s.q[i] = r.gen_range(-0.5..0.5);
    }
    for i in 0..s.theta.len() {
        s.theta[i] = r.gen_range(-0.01..0.01);
    }
    // hand-evaluated factors in element order
    let mut t = Transform::identity();
    let mut th = 0;
    let mut qi = 0;
    for el in c.model.elements() {
        match el {
            ChainElement::Rigid(x) => t = t.compose(x),
            ChainElement::Actuated(k) => t = t.compose(&elementary(*k, s.q0).unwrap()),
            ChainElement::Spring(SpringDof::One) => {
                t = t.compose(&elementary(TransX, s.theta[th]).unwrap());
                th += 1;
            }
            ChainElement::Spring(SpringDof::Six) => {
                for k in [TransX, TransY, TransZ, RotX, RotY, RotZ] {
                    t = t.compose(&elementary(k, s.theta[th]).unwrap());
                    th += 1;
                }
            }
            ChainElement::Passive(axes) => {
                for a in axes {
                    t = t.compose(&elementary(a.kind, s.q[qi]).unwrap());
                    qi += 1;
                }
            }
        }
    }
    let f = forward(&c.model, &s).unwrap();
    assert!((f.matrix() - t.matrix()).norm() < 1e-10 * t.matrix().norm());
}

#[test]
fn semi_analytic_matches_fd_on_random_chains() {
    let mut r = rng(3);
    for _ in 0..100 {
        let (model, state) = random_chain(&mut r);
        let a = jacobians(&model, &state).unwrap();
        let f = fd_jacobians(&model, &state, 1e-6).unwrap();
        assert!(rel_err(&a.j_theta, &f.j_theta) <= 1e-6);
        assert!(rel_err(&a.j_q, &f.j_q) <= 1e-6);
    }
}

#[test]
fn fd_step_within_ten_steps() {
    let mut r = rng(5);
    for _ in 0..20 {
        let (model, state) = random_chain(&mut r);
        let a = jacobians(&model, &state).unwrap();
        for step in [1e-4, 1e-5] {
            let f = fd_jacobians(&model, &state, step).unwrap();
            let scale = a.j_theta.amax().max(1.0);
            assert!((&a.j_theta - &f.j_theta).amax() <= 10.0 * step * scale);
            assert!((&a.j_q - &f.j_q).amax() <= 10.0 * step * scale);
        }
    }
}

#[test]
fn fd_error_is_second_order() {
    // unit-size chain so truncation dominates round-off at these steps
    let model = ChainModel::new(vec![
        ChainElement::Spring(SpringDof::Six),
        ChainElement::Passive(vec![JointAxis::free(RotZ), JointAxis::free(RotY)]),
        ChainElement::Rigid(Transform::from_translation(Vector3::new(1.0, 0.3, -0.2))),
        ChainElement::Passive(vec![JointAxis::free(RotX)]),
        ChainElement::Rigid(Transform::from_translation(Vector3::new(0.5, 0.0, 0.7))),
    ])
    .unwrap();
    let state = ChainState::rigid(&model, 0.0, &[0.4, -0.7, 1.1]);
    let exact = jacobians(&model, &state).unwrap();
    let e1 = (fd_jacobians(&model, &state, 1e-4).unwrap().j_q - &exact.j_q).amax();
    let e2 = (fd_jacobians(&model, &state, 5e-5).unwrap().j_q - &exact.j_q).amax();
    let ratio = e1 / e2;
    assert!((3.0..5.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn zero_length_chain_has_zero_passive_columns() {
    // passive axes at the end-effector origin with no lever arm still rotate it,
    // a spring with no elements after it maps to unit twists
    let model = ChainModel::new(vec![ChainElement::Spring(SpringDof::Six)]).unwrap();
    let s = ChainState::zeros(&model);
    let f = fd_jacobians(&model, &s, 1e-6).unwrap();
    assert!((f.j_theta.clone() - Matrix6::identity()).amax() < 1e-9);
    assert_eq!(f.j_q.ncols(), 0);
}

#[test]
fn actuator_spring_column_is_actuated_twist() {
    let m = preset(PRESET_3PUU).unwrap();
    let c = &m.chains[2];
    let j = jacobians(&c.model, &c.home).unwrap();
    let mut plus = c.home.clone();
    plus.q0 += 1e-6;
    let mut minus = c.home.clone();
    minus.q0 -= 1e-6;
    let base = forward(&c.model, &c.home).unwrap();
    let d = (pkm_stiffness::transforms::pose_difference(&forward(&c.model, &plus).unwrap(), &base).to_vector()
        - pkm_stiffness::transforms::pose_difference(&forward(&c.model, &minus).unwrap(), &base).to_vector())
        / 2e-6;
    assert!((j.j_theta.column(0) - d).amax() < 1e-8);
}

#[test]
fn end_spring_columns_are_transported_identity() {
    let mut r = rng(8);
    let suffix = random_transform(&mut r);
    let model = ChainModel::new(vec![
        ChainElement::Rigid(random_transform(&mut r)),
        ChainElement::Spring(SpringDof::Six),
        ChainElement::Rigid(suffix),
    ])
    .unwrap();
    let s = ChainState::zeros(&model);
    let j = jacobians(&model, &s).unwrap();
    // unit twists of the spring frame moved to the end-effector point
    let tool = forward(&model, &s).unwrap();
    let spring_frame = tool * suffix.inverse();
    let expected = Transform::from_translation(-tool.translation()).adjoint() * spring_frame.adjoint();
    let expected = nalgebra::Matrix6xX::from_column_slice(expected.as_slice());
    assert!(rel_err(&j.j_theta, &expected) < 1e-12);
}

#[test]
fn ik_round_trip_on_random_chain() {
    let model = ChainModel::new(vec![
        ChainElement::Actuated(TransX),
        ChainElement::Spring(SpringDof::One),
        ChainElement::Spring(SpringDof::Six),
        ChainElement::Passive(vec![JointAxis::free(RotZ), JointAxis::free(RotY)]),
        ChainElement::Rigid(elementary(TransX, 100.0).unwrap()),
        ChainElement::Spring(SpringDof::Six),
        ChainElement::Passive(vec![JointAxis::free(RotY), JointAxis::free(RotZ)]),
    ])
    .unwrap();
    let known = ChainState::rigid(&model, 12.0, &[0.3, -0.2, 0.2, -0.3]);
    let target = forward(&model, &known).unwrap();
    let guess = ChainState::rigid(&model, 0.0, &[0.0; 4]);
    let s = inverse_kinematics(&model, &target, &guess).unwrap();
    let (dp, dr) = forward(&model, &s).unwrap().residual(&target);
    assert!(dp <= 1e-9 && dr <= 1e-9);
    assert!((s.q0 - known.q0).abs() < 1e-7);
    assert!(s.theta.iter().all(|v| *v == 0.0));
}

#[test]
fn home_pose_ik_recovers_builder_home() {
    for name in [PRESET_3PUU, PRESET_3PRPAR] {
        let m = preset(name).unwrap();
        let mut seeds = m.home_states();
        for s in &mut seeds {
            s.q0 += 5.0;
            s.q.iter_mut().for_each(|v| *v += 0.05);
        }
        let states = m
            .solve_ik(&Vector3::zeros(), &seeds, &Default::default())
            .unwrap();
        for (s, c) in states.iter().zip(&m.chains) {
            assert!((s.q0 - c.home.q0).abs() < 1e-8);
            assert!((&s.q - &c.home.q).amax() < 1e-8);
        }
        // symmetric actuated coordinates
        assert!((states[0].q0 - states[1].q0).abs() < 1e-8);
        assert!((states[0].q0 - states[2].q0).abs() < 1e-8);
    }
}

#[test]
fn ik_round_trip_on_architectures() {
    let mut r = rng(21);
    for name in [PRESET_3PUU, PRESET_3PRPAR] {
        let m = preset(name).unwrap();
        for (p, states) in random_poses(&m, 20, &mut r) {
            let target = Transform::from_translation(p);
            for (c, s) in m.chains.iter().zip(&states) {
                let (dp, dr) = forward(&c.model, s).unwrap().residual(&target);
                assert!(dp <= 1e-9 && dr <= 1e-9);
            }
        }
    }
}

#[test]
fn architecture_jacobians_match_fd() {
    let mut r = rng(1);
    let start = Instant::now();
    for name in [PRESET_3PUU, PRESET_3PRPAR] {
        let m = preset(name).unwrap();
        for (_, states) in random_poses(&m, 200, &mut r) {
            for (c, s) in m.chains.iter().zip(&states) {
                let a = jacobians(&c.model, s).unwrap();
                let f = fd_jacobians(&c.model, s, 1e-6).unwrap();
                assert!(rel_err(&a.j_theta, &f.j_theta) <= 1e-5);
                assert!(rel_err(&a.j_q, &f.j_q) <= 1e-5);
            }
        }
    }
    eprintln!("400 poses in {:?}", start.elapsed());
}
