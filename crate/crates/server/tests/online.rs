use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use siglab_core::game::{evaluate_with, EvalOptions, Selection};
use siglab_core::trainer::{train, TrainConfig};
use siglab_core::worldgen::{generate_world, make_test_set, GameMode, WorldConfig};
use siglab_core::Checkpoint;
use siglab_server::{LoadedCheckpoint, Session};

const SEEDS: u64 = 12;
const ROUNDS: usize = 400;

fn greedy_success(session: &Session, pairs: &[siglab_core::worldgen::GamePair]) -> f64 {
    let ck = session.checkpoint();
    let options = EvalOptions {
        selection: Selection::Greedy,
        ..EvalOptions::default()
    };
    let gibbs = ck.checkpoint.config.gibbs();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    evaluate_with(session.sender(), &ck.receiver, &ck.world, pairs, &gibbs, options, &mut rng)
        .unwrap()
        .comm_success
}

// Always-correct feedback from an oracle player should not make the sender
// worse at its own game against the frozen receiver.
#[test]
fn oracle_feedback_weakly_improves_greedy_play() {
    let world_cfg = WorldConfig {
        n_categories: 2,
        concepts_per_category: 3,
        instances_per_concept: 6,
        feature_dim: 16,
        seed: 9,
        ..WorldConfig::default()
    };
    let config = TrainConfig {
        vocab_size: 10,
        embed_dim: 8,
        n_filters: 4,
        n_iterations: 300,
        log_interval: 100,
        eval_games: 100,
        ..TrainConfig::default()
    };
    let world = generate_world::<f64>(&world_cfg).unwrap();
    let outcome = train(&config, &world).unwrap();
    let ckpt = Checkpoint::from_outcome(&config, &world_cfg, &outcome);
    let loaded = Arc::new(LoadedCheckpoint::from_checkpoint("partial", ckpt).unwrap());
    let pairs = make_test_set(&loaded.world, GameMode::InstanceLevel, 500, &mut ChaCha8Rng::seed_from_u64(77)).unwrap();

    // Constant reward gives a zero-mean score-function gradient, so only the
    // sampling noise moves the policy. At the training lr that noise is small;
    // a much larger lr lets it collapse the sender onto a few symbols.
    let lr = loaded.checkpoint.config.lr;
    let mut deltas = Vec::new();
    for seed in 0..SEEDS {
        let mut s = Session::new(uuid::Uuid::new_v4(), loaded.clone(), GameMode::InstanceLevel, true, seed, lr);
        let before = greedy_success(&s, &pairs);
        for _ in 0..ROUNDS {
            let view = s.round().unwrap();
            let target = s.peek_target().unwrap();
            s.choose(view.round_id, target).unwrap().unwrap();
        }
        let after = greedy_success(&s, &pairs);
        deltas.push(after - before);
    }
    let n = deltas.len() as f64;
    let mean = deltas.iter().sum::<f64>() / n;
    let sd = (deltas.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    eprintln!("greedy success deltas {deltas:?}, mean {mean:.2} sd {sd:.2}");
    // one-sided: reject only if the mean drop is significant at about 3 standard errors
    assert!(mean >= -3.0 * sd / n.sqrt(), "mean change {mean:.2} (sd {sd:.2})");
}
