mod common;

use bmlp::model::HIDDEN_LIMIT;
use bmlp::rng::{stream, Purpose};
use bmlp::train::{cp_update, fit, reinforce, select_easiest, stabilities, EvalSchedule, FitEvent};
use bmlp::{BitVector, Gamma, Hyperparams, LayerState, Network, TrainState};
use proptest::prelude::*;

use common::teacher_dataset;

fn check_hidden(net: &Network) {
    for layer in net.layers() {
        layer.validate_hidden().unwrap();
        assert!(layer.hidden().iter().all(|&h| h % 2 != 0 && h.unsigned_abs() <= HIDDEN_LIMIT as u8));
        assert!(layer.weights_in_sync());
    }
}

fn divisor_of(k: usize, pick: usize) -> usize {
    let divs: Vec<usize> = (1..=k).filter(|d| k.is_multiple_of(*d)).collect();
    divs[pick % divs.len()]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn short_runs_keep_invariants(
        seed in any::<u64>(),
        k0 in 5usize..80,
        sizes in prop::collection::vec(1usize..48, 1..4),
        bs in 1usize..40,
        pick in any::<usize>(),
        clamp in prop::option::of(2u32..10),
        share in any::<bool>(),
        r_num in 0u32..3,
    ) {
        let share = share && sizes.iter().all(|&k| k == sizes[0]);
        let gamma = Gamma::Fixed(divisor_of(sizes.iter().copied().fold(0, gcd), pick));
        let hyper = Hyperparams {
            batch_size: bs,
            epochs: 3,
            robustness: bmlp::Robustness::new(r_num, 4).unwrap(),
            p_r0: 1.0,
            gamma,
            seed,
            clamp_bits: clamp,
            share_classifier: share,
        };
        let classes = 3;
        let ds = teacher_dataset(seed ^ 1, 90, k0, classes);
        let mut dims = vec![k0];
        dims.extend(&sizes);
        let mut net = Network::init(&dims, classes, &hyper, &mut stream(seed, Purpose::Init)).unwrap();
        check_hidden(&net);
        let groups = hyper.group_sizes(&sizes).unwrap();
        let mut state = TrainState::new(&hyper);
        let mut batches = 0;
        let history = fit(&mut net, &ds, None, &hyper, &mut state, EvalSchedule::FinalEpoch, |ev| {
            if let FitEvent::Batch(b) = ev {
                batches += 1;
                for (l, lr) in b.layers.iter().enumerate() {
                    assert!(lr.cp_updates <= sizes[l] / groups[l] * b.size);
                    assert!(lr.cp_updates <= lr.flagged * (sizes[l] / groups[l]));
                }
            }
        }).unwrap();
        prop_assert_eq!(history.len(), 3);
        prop_assert_eq!(batches, 3 * ds.len().div_ceil(bs));
        check_hidden(&net);
        for w in history.windows(2) {
            prop_assert!(w[1].p_r <= w[0].p_r);
        }
    }

    #[test]
    fn cp_step_never_lowers_stability(
        h in prop::collection::vec((-64i8..64).prop_map(|v| v * 2 + 1), 1..200),
        bits in any::<u64>(),
        rho_pos in any::<bool>(),
        pushes in 1usize..70,
    ) {
        let n = h.len();
        let a: BitVector = BitVector::from_bools((0..n).map(|i| (bits.rotate_left(i as u32) & 1) == 1));
        let rho = if rho_pos { 1 } else { -1 };
        let x = a.unpack();
        let delta = |h: &[i8]| -> i32 {
            h.iter().zip(&x).map(|(&w, &xi)| if w >= 0 { xi } else { -xi }).sum::<i32>() * rho as i32
        };
        let mut h = h;
        let mut before = delta(&h);
        for _ in 0..pushes {
            let old = h.clone();
            cp_update(&mut h, &a, rho).unwrap();
            let after = delta(&h);
            prop_assert!(after >= before);
            for (o, w) in old.iter().zip(&h) {
                prop_assert!(w % 2 != 0);
                prop_assert!(*w >= -HIDDEN_LIMIT);
                prop_assert!((*w as i32 - *o as i32).abs() <= 2);
            }
            before = after;
        }
    }

    #[test]
    fn selection_is_sound(delta in prop::collection::vec(-9i32..10, 1..120), pick in any::<usize>()) {
        let gamma = divisor_of(delta.len(), pick);
        let chosen = select_easiest(&delta, gamma).unwrap();
        let mut groups_seen = Vec::new();
        for &(g, k) in &chosen {
            prop_assert!(delta[k] < 0);
            prop_assert_eq!(k / gamma, g);
            prop_assert!(!groups_seen.contains(&g));
            groups_seen.push(g);
            let members = &delta[g * gamma..(g + 1) * gamma];
            for (j, &d) in members.iter().enumerate() {
                let idx = g * gamma + j;
                if d < 0 {
                    prop_assert!(d <= delta[k]);
                    if d == delta[k] {
                        prop_assert!(idx >= k);
                    }
                }
            }
        }
        let expected_groups = (0..delta.len() / gamma)
            .filter(|g| delta[g * gamma..(g + 1) * gamma].iter().any(|&d| d < 0))
            .count();
        prop_assert_eq!(chosen.len(), expected_groups);
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

#[test]
fn reinforcement_never_shrinks_magnitudes() {
    let hyper = Hyperparams::default();
    let net = Network::init(&[50, 16], 4, &hyper, &mut stream(3, Purpose::Init)).unwrap();
    let mut layer: LayerState = net.layers()[0].clone();
    let mut rng = stream(3, Purpose::Reinforce { layer: 0, epoch: 0, batch: 0 });
    let mut total = 0;
    for _ in 0..400 {
        let before = layer.hidden().to_vec();
        total += reinforce(&mut layer, 1.0, &mut rng);
        for (b, a) in before.iter().zip(layer.hidden()) {
            assert!(a.unsigned_abs() >= b.unsigned_abs());
            assert_eq!(a.signum(), b.signum());
            assert!(a % 2 != 0);
        }
        assert!(layer.weights_in_sync());
    }
    assert!(total > 0);
    assert!(layer.hidden().iter().any(|&h| h.unsigned_abs() == HIDDEN_LIMIT as u8));
}

#[test]
fn stabilities_follow_classifier_sign() {
    let rho: BitVector = BitVector::pack_signs(&[1, -1, 1]).unwrap();
    assert_eq!(stabilities(&[3, 3, -2], &rho).unwrap(), vec![3, -3, -2]);
}

#[test]
fn training_reduces_error_on_a_learnable_task() {
    let hyper = Hyperparams { epochs: 8, batch_size: 20, gamma: Gamma::Fixed(5), seed: 7, ..Hyperparams::default() };
    let train = teacher_dataset(70, 600, 61, 3);
    let mut net = Network::init(&[61, 45], 3, &hyper, &mut stream(7, Purpose::Init)).unwrap();
    let mut state = TrainState::new(&hyper);
    let history = fit(&mut net, &train, Some(&train), &hyper, &mut state, EvalSchedule::EveryEpoch, |_| {}).unwrap();
    let first = history[0].final_test_accuracy().unwrap();
    let last = history.last().unwrap().final_test_accuracy().unwrap();
    assert!(last > first.max(0.6), "accuracy {first} -> {last}");
}

#[test]
fn zero_epochs_leave_the_network_untouched() {
    let hyper = Hyperparams { epochs: 0, ..Hyperparams::default() };
    let train = teacher_dataset(1, 50, 20, 2);
    let mut net = Network::init(&[20, 15], 2, &hyper, &mut stream(0, Purpose::Init)).unwrap();
    let before = net.clone();
    let mut state = TrainState::new(&hyper);
    let history = fit(&mut net, &train, None, &hyper, &mut state, EvalSchedule::EveryEpoch, |_| {}).unwrap();
    assert!(history.is_empty());
    assert_eq!(net.layers()[0].hidden(), before.layers()[0].hidden());
}
