//! Synthetic concept worlds and referential-game pair sampling.
//!
//! Each category owns a Gaussian prototype; each concept adds its own offset
//! and each scene instance adds per-instance noise. Instances of one concept
//! are therefore close, concepts of one category are nearer to each other
//! than to other categories, and every instance is still distinct.

mod scene;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::softmax;
use crate::scalar::Scalar;

pub use scene::{render_scene, SceneDescription, SceneShape, ShapeKind};

pub const WORLD_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    /// Features used as generated.
    #[default]
    Raw,
    /// Softmax over the raw vector: nonnegative, sums to one.
    Normalized,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub n_categories: usize,
    pub concepts_per_category: usize,
    pub instances_per_concept: usize,
    pub feature_dim: usize,
    pub prototype_scale: f64,
    pub concept_offset_scale: f64,
    pub instance_noise_scale: f64,
    pub feature_mode: FeatureMode,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            n_categories: 10,
            concepts_per_category: 10,
            instances_per_concept: 20,
            feature_dim: 64,
            prototype_scale: 1.0,
            concept_offset_scale: 0.5,
            instance_noise_scale: 0.1,
            feature_mode: FeatureMode::Raw,
            seed: 0,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_categories", self.n_categories),
            ("concepts_per_category", self.concepts_per_category),
            ("instances_per_concept", self.instances_per_concept),
        ];
        for (field, v) in counts {
            if v < 1 {
                return Err(Error::config(field, "must be at least 1"));
            }
        }
        if self.feature_dim < 2 {
            return Err(Error::config("feature_dim", "must be at least 2"));
        }
        let scales = [
            ("prototype_scale", self.prototype_scale),
            ("concept_offset_scale", self.concept_offset_scale),
            ("instance_noise_scale", self.instance_noise_scale),
        ];
        for (field, v) in scales {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(field, format!("must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn n_concepts(&self) -> usize {
        self.n_categories * self.concepts_per_category
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Category {
    pub category_id: usize,
    pub name: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Concept<F> {
    pub concept_id: usize,
    pub category_id: usize,
    pub name: String,
    pub prototype: Vec<F>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneInstance<F> {
    pub instance_id: usize,
    pub concept_id: usize,
    pub features: Vec<F>,
    pub render_seed: u64,
}

/// Immutable generated world. Concept and instance ids equal their indices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct World<F> {
    pub schema_version: u32,
    pub config: WorldConfig,
    pub categories: Vec<Category>,
    pub concepts: Vec<Concept<F>>,
    pub instances: Vec<SceneInstance<F>>,
}

const CATEGORY_NAMES: [&str; 20] = [
    "animal", "fruit", "vehicle", "tool", "furniture", "clothing", "instrument", "bird",
    "vegetable", "weapon", "container", "appliance", "building", "insect", "fish", "utensil",
    "toy", "plant", "mammal", "device",
];

fn category_name(id: usize) -> String {
    let base = CATEGORY_NAMES[id % CATEGORY_NAMES.len()];
    match id / CATEGORY_NAMES.len() {
        0 => base.to_string(),
        round => format!("{base}{}", round + 1),
    }
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn generate_world<F: Scalar>(config: &WorldConfig) -> Result<World<F>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let dim = config.feature_dim;

    let categories: Vec<Category> = (0..config.n_categories)
        .map(|category_id| Category {
            category_id,
            name: category_name(category_id),
        })
        .collect();
    let category_protos: Vec<Vec<f64>> = (0..config.n_categories)
        .map(|_| gaussian(&mut rng, dim))
        .collect();

    let mut concepts = Vec::with_capacity(config.n_concepts());
    let mut concept_means = Vec::with_capacity(config.n_concepts());
    for (category_id, proto) in category_protos.iter().enumerate() {
        for j in 0..config.concepts_per_category {
            let offset = gaussian(&mut rng, dim);
            let mean: Vec<f64> = proto
                .iter()
                .zip(&offset)
                .map(|(p, o)| p * config.prototype_scale + o * config.concept_offset_scale)
                .collect();
            concepts.push(Concept {
                concept_id: concepts.len(),
                category_id,
                name: format!("{}-{:02}", categories[category_id].name, j),
                prototype: mean.iter().map(|&v| F::of(v)).collect(),
            });
            concept_means.push(mean);
        }
    }

    let mut instances = Vec::with_capacity(config.n_concepts() * config.instances_per_concept);
    for (concept_id, mean) in concept_means.iter().enumerate() {
        for _ in 0..config.instances_per_concept {
            let noise = gaussian(&mut rng, dim);
            let render_seed: u64 = rng.random();
            let raw: Vec<f64> = mean
                .iter()
                .zip(&noise)
                .map(|(m, n)| m + n * config.instance_noise_scale)
                .collect();
            let features = match config.feature_mode {
                FeatureMode::Raw => raw,
                FeatureMode::Normalized => softmax(&raw)?,
            };
            instances.push(SceneInstance {
                instance_id: instances.len(),
                concept_id,
                features: features.into_iter().map(F::of).collect(),
                render_seed,
            });
        }
    }

    Ok(World {
        schema_version: WORLD_SCHEMA_VERSION,
        config: config.clone(),
        categories,
        concepts,
        instances,
    })
}

impl<F: Scalar> World<F> {
    pub fn n_concepts(&self) -> usize {
        self.concepts.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.config.feature_dim
    }

    pub fn instance(&self, instance_id: usize) -> Result<&SceneInstance<F>> {
        self.instances
            .get(instance_id)
            .ok_or_else(|| Error::Lookup(format!("instance {instance_id} not in world")))
    }

    pub fn concept(&self, concept_id: usize) -> Result<&Concept<F>> {
        self.concepts
            .get(concept_id)
            .ok_or_else(|| Error::Lookup(format!("concept {concept_id} not in world")))
    }

    /// Instances of one concept; contiguous by construction.
    pub fn instances_of(&self, concept_id: usize) -> &[SceneInstance<F>] {
        let per = self.config.instances_per_concept;
        &self.instances[concept_id * per..(concept_id + 1) * per]
    }

    /// `category_id` indexed by `concept_id`.
    pub fn concept_categories(&self) -> Vec<usize> {
        self.concepts.iter().map(|c| c.category_id).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Corrupt(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let world: Self = serde_json::from_str(text).map_err(|e| Error::Corrupt(e.to_string()))?;
        if world.schema_version != WORLD_SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                found: world.schema_version,
                expected: WORLD_SCHEMA_VERSION,
            });
        }
        Ok(world)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    #[default]
    L,
    R,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::L => Side::R,
            Side::R => Side::L,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Side::L => 0,
            Side::R => 1,
        }
    }

    pub fn from_index(i: usize) -> Side {
        if i == 0 {
            Side::L
        } else {
            Side::R
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GameMode {
    /// Sender and receiver see the very same two images.
    #[default]
    InstanceLevel,
    /// Sender sees other images of the same two concepts.
    ClassLevel,
}

/// One referential game instance, by instance id.
///
/// `left`/`right` are the receiver-side images in canonical order; the
/// receiver's on-screen order is shuffled again at play time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GamePair {
    pub left: usize,
    pub right: usize,
    pub target_side: Side,
    pub sender_left: usize,
    pub sender_right: usize,
}

impl GamePair {
    pub fn target(&self) -> usize {
        match self.target_side {
            Side::L => self.left,
            Side::R => self.right,
        }
    }

    pub fn distractor(&self) -> usize {
        match self.target_side {
            Side::L => self.right,
            Side::R => self.left,
        }
    }

    /// Sender-side (target, distractor) views.
    pub fn sender_views(&self) -> (usize, usize) {
        match self.target_side {
            Side::L => (self.sender_left, self.sender_right),
            Side::R => (self.sender_right, self.sender_left),
        }
    }

    pub fn check<F: Scalar>(&self, world: &World<F>, mode: GameMode) -> Result<()> {
        let concept = |id| world.instance(id).map(|i| i.concept_id);
        let (l, r) = (concept(self.left)?, concept(self.right)?);
        if l == r {
            return Err(Error::Domain(format!("pair shares concept {l}")));
        }
        if concept(self.sender_left)? != l || concept(self.sender_right)? != r {
            return Err(Error::Domain("sender views disagree with receiver concepts".into()));
        }
        if mode == GameMode::InstanceLevel
            && (self.sender_left != self.left || self.sender_right != self.right)
        {
            return Err(Error::Domain("instance-level pair with differing sender views".into()));
        }
        Ok(())
    }
}

pub fn sample_game<F: Scalar, R: Rng + ?Sized>(
    world: &World<F>,
    mode: GameMode,
    rng: &mut R,
) -> Result<GamePair> {
    let n = world.n_concepts();
    if n < 2 {
        return Err(Error::Domain(format!(
            "sampling a game needs at least 2 concepts, world has {n}"
        )));
    }
    let first = rng.random_range(0..n);
    let mut second = rng.random_range(0..n - 1);
    if second >= first {
        second += 1;
    }
    let pick = |rng: &mut R, concept| -> usize {
        world
            .instances_of(concept)
            .choose(rng)
            .expect("concepts have instances")
            .instance_id
    };
    let left = pick(rng, first);
    let right = pick(rng, second);
    let target_side = if rng.random::<bool>() { Side::L } else { Side::R };
    let (sender_left, sender_right) = match mode {
        GameMode::InstanceLevel => (left, right),
        GameMode::ClassLevel => (pick(rng, first), pick(rng, second)),
    };
    Ok(GamePair {
        left,
        right,
        target_side,
        sender_left,
        sender_right,
    })
}

pub fn make_test_set<F: Scalar, R: Rng + ?Sized>(
    world: &World<F>,
    mode: GameMode,
    n_games: usize,
    rng: &mut R,
) -> Result<Vec<GamePair>> {
    (0..n_games).map(|_| sample_game(world, mode, rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(noise: f64) -> WorldConfig {
        WorldConfig {
            n_categories: 2,
            concepts_per_category: 2,
            instances_per_concept: 3,
            feature_dim: 8,
            instance_noise_scale: noise,
            seed: 17,
            ..WorldConfig::default()
        }
    }

    #[test]
    fn counts_match_config() {
        let w = generate_world::<f64>(&small(0.1)).unwrap();
        assert_eq!(w.concepts.len(), 4);
        assert_eq!(w.instances.len(), 12);
        for (i, inst) in w.instances.iter().enumerate() {
            assert_eq!(inst.instance_id, i);
            assert_eq!(inst.concept_id, i / 3);
        }
        assert!(w.concepts.iter().all(|c| c.category_id < 2));
    }

    #[test]
    fn zero_noise_collapses_instances() {
        let w = generate_world::<f64>(&small(0.0)).unwrap();
        for c in 0..w.n_concepts() {
            let insts = w.instances_of(c);
            assert!(insts.iter().all(|i| i.features == insts[0].features));
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = generate_world::<f64>(&small(0.1)).unwrap().to_json().unwrap();
        let b = generate_world::<f64>(&small(0.1)).unwrap().to_json().unwrap();
        assert_eq!(a, b);
        let mut other = small(0.1);
        other.seed = 18;
        assert_ne!(a, generate_world::<f64>(&other).unwrap().to_json().unwrap());
    }

    #[test]
    fn json_round_trip() {
        let w = generate_world::<f64>(&small(0.1)).unwrap();
        let back = World::<f64>::from_json(&w.to_json().unwrap()).unwrap();
        assert_eq!(w, back);
    }

    #[test]
    fn normalized_features_are_distributions() {
        let mut cfg = small(0.1);
        cfg.feature_mode = FeatureMode::Normalized;
        let w = generate_world::<f64>(&cfg).unwrap();
        for inst in &w.instances {
            assert!(inst.features.iter().all(|&v| v >= 0.0));
            assert!((inst.features.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn invalid_config_names_field() {
        let mut cfg = small(0.1);
        cfg.feature_dim = 1;
        let err = generate_world::<f64>(&cfg).unwrap_err().to_string();
        assert!(err.contains("feature_dim"), "{err}");
        let mut cfg = small(0.1);
        cfg.instance_noise_scale = -0.5;
        assert!(generate_world::<f64>(&cfg).unwrap_err().to_string().contains("instance_noise_scale"));
        let mut cfg = small(0.1);
        cfg.concepts_per_category = 0;
        assert!(generate_world::<f64>(&cfg).unwrap_err().to_string().contains("concepts_per_category"));
    }

    #[test]
    fn one_concept_world_cannot_sample() {
        let cfg = WorldConfig {
            n_categories: 1,
            concepts_per_category: 1,
            ..small(0.1)
        };
        let w = generate_world::<f64>(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(sample_game(&w, GameMode::InstanceLevel, &mut rng), Err(Error::Domain(_))));
    }

    #[test]
    fn two_concept_world_always_draws_that_pair() {
        let cfg = WorldConfig {
            n_categories: 1,
            concepts_per_category: 2,
            ..small(0.1)
        };
        let w = generate_world::<f64>(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let p = sample_game(&w, GameMode::ClassLevel, &mut rng).unwrap();
            let mut cs = [w.instances[p.left].concept_id, w.instances[p.right].concept_id];
            cs.sort();
            assert_eq!(cs, [0, 1]);
        }
    }

    #[test]
    fn instance_level_sender_sees_receiver_images() {
        let w = generate_world::<f64>(&small(0.1)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..500 {
            let p = sample_game(&w, GameMode::InstanceLevel, &mut rng).unwrap();
            assert_eq!(p.sender_left, p.left);
            assert_eq!(p.sender_right, p.right);
            p.check(&w, GameMode::InstanceLevel).unwrap();
        }
    }

    #[test]
    fn test_set_sizes_and_determinism() {
        let w = generate_world::<f64>(&small(0.1)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(make_test_set(&w, GameMode::InstanceLevel, 0, &mut rng).unwrap().is_empty());
        let make = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            make_test_set(&w, GameMode::ClassLevel, 100, &mut rng).unwrap()
        };
        assert_eq!(make(5), make(5));
        assert_ne!(make(5), make(6));
    }
}
