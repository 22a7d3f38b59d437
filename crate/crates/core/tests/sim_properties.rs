use cril_core::dataset::{balance, histogram, label_action, label_to_action, ActionLabel};
use cril_core::sim::{ContinuousAction, InputMode, SimConfig, SimState};
use proptest::prelude::*;

fn action() -> impl Strategy<Value = ContinuousAction> {
    (-1.0f32..=1.0, 0.0f32..=1.0, 0.0f32..=1.0).prop_map(|(s, g, b)| ContinuousAction::new(s, g, b))
}

fn rollout(seed: u64, actions: &[ContinuousAction]) -> Vec<SimState> {
    let mut states = vec![SimState::new_episode(seed, SimConfig::default()).unwrap()];
    for a in actions {
        let last = states.last().unwrap();
        if last.done {
            break;
        }
        states.push(last.step(a).unwrap());
    }
    states
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn trajectories_are_deterministic(seed in 0u64..1000, actions in prop::collection::vec(action(), 1..200)) {
        let a = rollout(seed, &actions);
        let b = rollout(seed, &actions);
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(x.car, y.car);
            prop_assert_eq!(&x.tiles_visited, &y.tiles_visited);
            prop_assert_eq!(x.total_reward.to_bits(), y.total_reward.to_bits());
        }
        let last = a.last().unwrap();
        prop_assert_eq!(last.observe(InputMode::Rgb), b.last().unwrap().observe(InputMode::Rgb));
    }

    #[test]
    fn reward_accounting(seed in 0u64..1000, actions in prop::collection::vec(action(), 1..300)) {
        let states = rollout(seed, &actions);
        let last = states.last().unwrap();
        let n = last.track.tile_count() as f64;
        let expected = -0.1 * f64::from(last.step_index) + 1000.0 / n * last.visited_count as f64
            - if last.off_field { 100.0 } else { 0.0 };
        prop_assert!((last.total_reward - expected).abs() < 1e-6);
        let summed: f64 = states[1..].iter().map(|s| s.last_reward).sum();
        prop_assert!((summed - last.total_reward).abs() < 1e-9);
    }

    #[test]
    fn speed_and_sensors_stay_in_range(seed in 0u64..1000, actions in prop::collection::vec(action(), 1..300)) {
        for s in rollout(seed, &actions) {
            prop_assert!(s.car.speed() >= 0.0 && s.car.speed().is_finite());
            // Motion is always along the heading, never backwards.
            prop_assert!(s.car.linear_velocity.dot(s.car.forward()) >= -1e-9);
            for v in s.sensors().0 {
                prop_assert!((-1.0..=1.0).contains(&v));
            }
        }
    }

    #[test]
    fn gas_has_no_effect_while_turning(seed in 0u64..200, warmup in 0usize..80, steer in 0.11f32..=1.0, left in any::<bool>(), brake in 0.0f32..=1.0) {
        let states = rollout(seed, &vec![ContinuousAction::new(0.0, 1.0, 0.0); warmup]);
        let s = states.last().unwrap();
        let steer = if left { -steer } else { steer };
        let with_gas = s.step(&ContinuousAction::new(steer, 1.0, brake)).unwrap();
        let without = s.step(&ContinuousAction::new(steer, 0.0, brake)).unwrap();
        prop_assert_eq!(with_gas.car, without.car);
    }

    #[test]
    fn brake_never_reverses(seed in 0u64..200, warmup in 0usize..60, hold in 1usize..200) {
        let mut actions = vec![ContinuousAction::new(0.0, 1.0, 0.0); warmup];
        actions.extend(std::iter::repeat_n(ContinuousAction::new(0.0, 0.0, 1.0), hold));
        let states = rollout(seed, &actions);
        for w in states[warmup.min(states.len() - 1)..].windows(2) {
            prop_assert!(w[1].car.speed() <= w[0].car.speed());
            prop_assert!(w[1].car.speed() >= 0.0);
        }
    }
}

#[test]
fn label_round_trip_on_all_labels() {
    for l in ActionLabel::ALL {
        assert_eq!(label_action(&label_to_action(l)), l);
    }
}

#[test]
fn balance_retention_is_binomial() {
    use cril_core::dataset::{Dataset, Sample};
    use cril_core::sim::{Observation, SensorVector};
    let obs = Observation::filled(96, 96, 1, 0);
    let mut ds = Dataset::new(InputMode::Gray);
    for i in 0..4000u32 {
        let a = label_to_action(ActionLabel::ALL[(i % 9).min(6) as usize]);
        ds.samples.push(Sample::new(obs.clone(), SensorVector::default(), a, i));
    }
    let before = histogram(&ds.samples);
    for seed in 0..5 {
        let after = histogram(&balance(ds.clone(), &mut cril_core::seed::rng(seed)).samples);
        for l in ActionLabel::ALL {
            if l != ActionLabel::Acc {
                assert_eq!(after.count(l), before.count(l));
            }
        }
        let n = before.count(ActionLabel::Acc) as f64;
        assert!((after.count(ActionLabel::Acc) as f64 - n / 2.0).abs() <= 3.0 * (n / 4.0).sqrt());
    }
}
