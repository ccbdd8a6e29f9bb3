//! One human playing receiver against a checkpointed sender.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use siglab_core::agents::SenderAction;
use siglab_core::game::resolve_side;
use siglab_core::trainer::{reinforce_sender_update, BaselineState};
use siglab_core::worldgen::{render_scene, sample_game, GameMode, GamePair, SceneDescription, Side};
use siglab_core::{Result, Sender, World};

use crate::stats::binomial_two_sided;
use crate::store::LoadedCheckpoint;

/// What the human is shown. Holds nothing that identifies the target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoundView {
    pub round_id: u64,
    pub left: SceneDescription,
    pub right: SceneDescription,
    pub symbol: usize,
    pub label: Option<String>,
}

/// Builds the view for `pair` shown with sides swapped or not. The target
/// side is never consulted.
pub fn round_view(
    round_id: u64,
    world: &World,
    pair: &GamePair,
    swapped: bool,
    symbol: usize,
    label: Option<String>,
) -> Result<RoundView> {
    let (first, second) = if swapped {
        (pair.right, pair.left)
    } else {
        (pair.left, pair.right)
    };
    Ok(RoundView {
        round_id,
        left: render_scene(world.instance(first)?, world)?,
        right: render_scene(world.instance(second)?, world)?,
        symbol,
        label,
    })
}

#[derive(Clone, Debug)]
struct Pending {
    pair: GamePair,
    swapped: bool,
    action: SenderAction<f64>,
    view: RoundView,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundLog {
    pub round_id: u64,
    pub symbol: usize,
    pub target_concept: usize,
    pub chosen_concept: usize,
    pub correct: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionStats {
    pub rounds: u64,
    pub wins: u64,
    /// Null before the first round.
    pub success_rate: Option<f64>,
    /// Two-sided exact binomial test against 50%.
    pub p_value: f64,
}

impl SessionStats {
    pub fn from_log(log: &[RoundLog]) -> Self {
        let rounds = log.len() as u64;
        let wins = log.iter().filter(|r| r.correct).count() as u64;
        SessionStats {
            rounds,
            wins,
            success_rate: (rounds > 0).then(|| wins as f64 / rounds as f64),
            p_value: binomial_two_sided(wins, rounds),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChoiceOutcome {
    pub correct: bool,
    pub stats: SessionStats,
}

/// Snapshot written to disk after every state change.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SessionSnapshot {
    pub session_id: Uuid,
    pub checkpoint: String,
    pub mode: GameMode,
    pub online_update: bool,
    pub seed: u64,
    pub stats: SessionStats,
    pub log: Vec<RoundLog>,
}

#[derive(Debug, PartialEq, Eq)]
pub enum ChoiceError {
    NoPendingRound,
    StaleRound { expected: u64, got: u64 },
}

#[derive(Debug)]
pub struct Session {
    pub id: Uuid,
    pub seed: u64,
    pub mode: GameMode,
    pub online_update: bool,
    checkpoint: Arc<LoadedCheckpoint>,
    /// Private parameter copy, present only with online updates.
    own_sender: Option<Sender>,
    baseline: BaselineState,
    lr: f64,
    rng: ChaCha8Rng,
    next_round: u64,
    pending: Option<Pending>,
    log: Vec<RoundLog>,
}

impl Session {
    pub fn new(
        id: Uuid,
        checkpoint: Arc<LoadedCheckpoint>,
        mode: GameMode,
        online_update: bool,
        seed: u64,
        lr: f64,
    ) -> Self {
        let own_sender = online_update.then(|| checkpoint.sender.clone());
        Session {
            id,
            seed,
            mode,
            online_update,
            baseline: checkpoint.checkpoint.baseline,
            checkpoint,
            own_sender,
            lr,
            rng: ChaCha8Rng::seed_from_u64(seed),
            next_round: 0,
            pending: None,
            log: Vec::new(),
        }
    }

    pub fn sender(&self) -> &Sender {
        self.own_sender.as_ref().unwrap_or(&self.checkpoint.sender)
    }

    pub fn checkpoint(&self) -> &LoadedCheckpoint {
        &self.checkpoint
    }

    /// The pending round, or a freshly sampled one.
    pub fn round(&mut self) -> Result<RoundView> {
        if let Some(p) = &self.pending {
            return Ok(p.view.clone());
        }
        let ck = &self.checkpoint;
        let world = &ck.world;
        let pair = sample_game(world, self.mode, &mut self.rng)?;
        let (t, d) = pair.sender_views();
        let gibbs = ck.checkpoint.config.gibbs();
        let sender = self.own_sender.as_ref().unwrap_or(&ck.sender);
        let action = sender.act(
            &world.instance(t)?.features,
            &world.instance(d)?.features,
            &gibbs,
            &mut self.rng,
        )?;
        let swapped: bool = self.rng.random();
        let round_id = self.next_round;
        self.next_round += 1;
        let view = round_view(round_id, world, &pair, swapped, action.index, ck.label_for(action.index))?;
        self.pending = Some(Pending {
            pair,
            swapped,
            action,
            view: view.clone(),
        });
        Ok(view)
    }

    /// Resolves the pending round with the human's pick in their own frame.
    pub fn choose(&mut self, round_id: u64, side: Side) -> Result<std::result::Result<ChoiceOutcome, ChoiceError>> {
        let Some(p) = &self.pending else {
            return Ok(Err(ChoiceError::NoPendingRound));
        };
        if p.view.round_id != round_id {
            return Ok(Err(ChoiceError::StaleRound {
                expected: p.view.round_id,
                got: round_id,
            }));
        }
        let p = self.pending.take().expect("checked above");
        let chosen = resolve_side(side, p.swapped);
        let correct = chosen == p.pair.target_side;
        let world = &self.checkpoint.world;
        let concept_of = |side: Side| -> Result<usize> {
            let id = if side == Side::L { p.pair.left } else { p.pair.right };
            Ok(world.instance(id)?.concept_id)
        };
        let entry = RoundLog {
            round_id,
            symbol: p.action.index,
            target_concept: concept_of(p.pair.target_side)?,
            chosen_concept: concept_of(chosen)?,
            correct,
        };
        if let Some(sender) = &mut self.own_sender {
            // the receiver is the human here; only the sender learns
            reinforce_sender_update(sender, &p.action, u8::from(correct), self.lr, &mut self.baseline)?;
        }
        self.log.push(entry);
        Ok(Ok(ChoiceOutcome {
            correct,
            stats: self.stats(),
        }))
    }

    pub fn stats(&self) -> SessionStats {
        SessionStats::from_log(&self.log)
    }

    pub fn log(&self) -> &[RoundLog] {
        &self.log
    }

    pub fn snapshot(&self) -> SessionSnapshot {
        SessionSnapshot {
            session_id: self.id,
            checkpoint: self.checkpoint.id.clone(),
            mode: self.mode,
            online_update: self.online_update,
            seed: self.seed,
            stats: self.stats(),
            log: self.log.clone(),
        }
    }

    /// Target side of the pending round in the human's frame. Test hook for
    /// scripted players; never exposed over HTTP.
    pub fn peek_target(&self) -> Option<Side> {
        self.pending
            .as_ref()
            .map(|p| if p.swapped { p.pair.target_side.other() } else { p.pair.target_side })
    }
}
