#![allow(dead_code)]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use siglab_core::agents::{
    init_agents, AgentDims, Arch, Receiver, Sender, Vocabulary, HEAD_INIT_GAIN, PAIRCONV_INIT_GAIN,
};
use siglab_core::nn::{sigmoid, GibbsConfig, Parameters};
use siglab_core::worldgen::{generate_world, GamePair, Side, World, WorldConfig};

/// Two concepts, one instance each, K = 2: the frozen single-pair game.
pub struct Toy {
    pub world: World<f64>,
    pub pair: GamePair,
    pub sender: Sender<f64>,
    pub receiver: Receiver<f64>,
    pub gibbs: GibbsConfig,
}

pub fn toy(arch: Arch, seed: u64) -> Toy {
    let world = generate_world::<f64>(&WorldConfig {
        n_categories: 2,
        concepts_per_category: 1,
        instances_per_concept: 1,
        feature_dim: 3,
        seed,
        ..WorldConfig::default()
    })
    .unwrap();
    let dims = AgentDims {
        feature_dim: 3,
        embed_dim: 3,
        n_filters: 2,
        vocab: Vocabulary::new(2).unwrap(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut sender, mut receiver) = init_agents::<f64, _>(arch, &dims, &mut rng).unwrap();
    // back to plain Glorot scale so the symbol choice depends on the images
    match &mut sender {
        Sender::Agnostic(p) => p.out.scale(1.0 / HEAD_INIT_GAIN),
        Sender::Informed(p) => {
            p.out.scale(1.0 / HEAD_INIT_GAIN);
            p.pairconv.scale(1.0 / PAIRCONV_INIT_GAIN);
        }
    }
    // symbol 0 reads "the image whose embedding is larger where the target's
    // is", symbol 1 the opposite, so the symbol decides the receiver's pick
    let u = |x: &[f64]| -> Vec<f64> {
        let (z, _) = receiver.img_embed.forward(x).unwrap();
        z.into_iter().map(sigmoid).collect()
    };
    let (ut, ud) = (u(&world.instances[0].features), u(&world.instances[1].features));
    for i in 0..dims.embed_dim {
        let s = 2.0 * (ut[i] - ud[i]).signum();
        let row = receiver.sym_embed.weights.row_mut(i);
        row[0] = s;
        row[1] = -s;
    }
    Toy {
        world,
        pair: GamePair {
            left: 0,
            right: 1,
            target_side: Side::L,
            sender_left: 0,
            sender_right: 1,
        },
        sender,
        receiver,
        gibbs: GibbsConfig::new(1.0).unwrap(),
    }
}

/// Exact expected reward by enumerating receiver order, symbol and pick.
pub fn exact_expected_reward(t: &Toy, sender: &Sender<f64>, receiver: &Receiver<f64>) -> f64 {
    let feat = |id: usize| t.world.instances[id].features.as_slice();
    let (st, sd) = t.pair.sender_views();
    let ps = sender.policy(feat(st), feat(sd), &t.gibbs).unwrap().probs;
    let mut total = 0.0;
    for swapped in [false, true] {
        let (a, b) = if swapped { (t.pair.right, t.pair.left) } else { (t.pair.left, t.pair.right) };
        for (s, &p_s) in ps.iter().enumerate() {
            let pr = receiver.policy(feat(a), feat(b), s, &t.gibbs).unwrap().probs;
            for (c, &p_c) in pr.iter().enumerate() {
                let chosen = if swapped { Side::from_index(c).other() } else { Side::from_index(c) };
                if chosen == t.pair.target_side {
                    total += 0.5 * p_s * p_c;
                }
            }
        }
    }
    total
}

/// Central-difference gradient of the exact expected reward.
pub fn exact_gradient(t: &Toy, eps: f64) -> (Vec<f64>, Vec<f64>) {
    let gs = (0..t.sender.num_params())
        .map(|i| {
            let (mut p, mut m) = (t.sender.clone(), t.sender.clone());
            *p.param_mut(i).unwrap() += eps;
            *m.param_mut(i).unwrap() -= eps;
            (exact_expected_reward(t, &p, &t.receiver) - exact_expected_reward(t, &m, &t.receiver)) / (2.0 * eps)
        })
        .collect();
    let gr = (0..t.receiver.num_params())
        .map(|i| {
            let (mut p, mut m) = (t.receiver.clone(), t.receiver.clone());
            *p.param_mut(i).unwrap() += eps;
            *m.param_mut(i).unwrap() -= eps;
            (exact_expected_reward(t, &t.sender, &p) - exact_expected_reward(t, &t.sender, &m)) / (2.0 * eps)
        })
        .collect();
    (gs, gr)
}

pub fn rel_l2_error(estimate: &[f64], exact: &[f64]) -> f64 {
    let num: f64 = estimate.iter().zip(exact).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let den: f64 = exact.iter().map(|b| b * b).sum::<f64>().sqrt();
    num / den
}
