mod common;

use common::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use siglab_core::agents::Arch;
use siglab_core::game::play_round;
use siglab_core::nn::Parameters;
use siglab_core::trainer::{reinforce_batch_update, reinforce_gradient, BaselineKind, BaselineState};

#[test]
fn monte_carlo_gradient_matches_enumeration() {
    let t = toy(Arch::Informed, 3);
    let (exact_s, exact_r) = exact_gradient(&t, 1e-6);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let n = 200_000;
    let records: Vec<_> = (0..n)
        .map(|_| play_round(&t.sender, &t.receiver, &t.world, &t.pair, &t.gibbs, &mut rng).unwrap())
        .collect();
    let (gs, gr) = reinforce_gradient(&t.sender, &t.receiver, &records, 0.0).unwrap();
    let es = rel_l2_error(&gs.flatten(), &exact_s);
    let er = rel_l2_error(&gr.flatten(), &exact_r);
    println!("sender rel err {es:.4}, receiver rel err {er:.4}");
    assert!(es < 0.02, "sender {es}");
    assert!(er < 0.02, "receiver {er}");
}

#[test]
fn all_zero_rewards_without_baseline_leave_params() {
    let t = toy(Arch::Agnostic, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut records: Vec<_> = (0..8)
        .map(|_| play_round(&t.sender, &t.receiver, &t.world, &t.pair, &t.gibbs, &mut rng).unwrap())
        .collect();
    records.iter_mut().for_each(|r| r.reward = 0);
    let (mut s, mut r) = (t.sender.clone(), t.receiver.clone());
    reinforce_batch_update(&mut s, &mut r, &records, 0.5, &mut BaselineState::none()).unwrap();
    assert_eq!(s, t.sender);
    assert_eq!(r, t.receiver);
}

#[test]
fn zero_advantage_is_a_no_op() {
    let t = toy(Arch::Informed, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut records: Vec<_> = (0..8)
        .map(|_| play_round(&t.sender, &t.receiver, &t.world, &t.pair, &t.gibbs, &mut rng).unwrap())
        .collect();
    records.iter_mut().for_each(|r| r.reward = 1);
    let mut baseline = BaselineState::new(BaselineKind::RunningMean, 0.9);
    baseline.mean = 1.0;
    let (mut s, mut r) = (t.sender.clone(), t.receiver.clone());
    reinforce_batch_update(&mut s, &mut r, &records, 0.5, &mut baseline).unwrap();
    assert_eq!(s, t.sender);
    assert_eq!(r, t.receiver);
    assert_eq!(baseline.mean, 1.0);
}

#[test]
fn single_winning_record_steps_along_log_prob_gradient() {
    let t = toy(Arch::Informed, 6);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut record = play_round(&t.sender, &t.receiver, &t.world, &t.pair, &t.gibbs, &mut rng).unwrap();
    record.reward = 1;
    let lr = 0.01;
    let mut expected_s = t.sender.clone();
    expected_s.add_scaled(&siglab_core::agents::sender_log_prob_grad(&t.sender, &record.sender_action).unwrap(), lr);
    let mut expected_r = t.receiver.clone();
    expected_r.add_scaled(&siglab_core::agents::receiver_log_prob_grad(&t.receiver, &record.receiver_action).unwrap(), lr);
    let (mut s, mut r) = (t.sender.clone(), t.receiver.clone());
    reinforce_batch_update(&mut s, &mut r, std::slice::from_ref(&record), lr, &mut BaselineState::none()).unwrap();
    for (a, b) in s.flatten().iter().zip(expected_s.flatten()) {
        assert!((a - b).abs() < 1e-15);
    }
    for (a, b) in r.flatten().iter().zip(expected_r.flatten()) {
        assert!((a - b).abs() < 1e-15);
    }
}

#[test]
fn small_exact_step_increases_expected_reward() {
    for seed in 0..5 {
        let t = toy(Arch::Informed, seed);
        let (gs, gr) = exact_gradient(&t, 1e-6);
        let before = exact_expected_reward(&t, &t.sender, &t.receiver);
        let (mut s, mut r) = (t.sender.clone(), t.receiver.clone());
        for (i, g) in gs.iter().enumerate() {
            *s.param_mut(i).unwrap() += 1e-3 * g;
        }
        for (i, g) in gr.iter().enumerate() {
            *r.param_mut(i).unwrap() += 1e-3 * g;
        }
        let after = exact_expected_reward(&t, &s, &r);
        assert!(after > before, "seed {seed}: {before} -> {after}");
    }
}

#[test]
fn stale_cache_is_rejected() {
    let t = toy(Arch::Informed, 7);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    // a won round, so the advantage is nonzero and the cache is consulted
    let record = std::iter::repeat_with(|| play_round(&t.sender, &t.receiver, &t.world, &t.pair, &t.gibbs, &mut rng).unwrap())
        .find(|r| r.hit())
        .unwrap();
    let other = toy(Arch::Agnostic, 7);
    let (mut s, mut r) = (other.sender.clone(), other.receiver.clone());
    assert!(reinforce_batch_update(&mut s, &mut r, &[record], 0.1, &mut BaselineState::none()).is_err());
}
