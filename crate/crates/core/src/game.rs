//! One round: the sender names the target, the receiver sees both images in
//! a fresh random order plus the symbol and points, and both share a 0/1
//! payoff. Evaluation replays a fixed test set and tallies symbol usage.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agents::{Receiver, ReceiverAction, Sender, SenderAction};
use crate::error::{Error, Result};
use crate::nn::GibbsConfig;
use crate::scalar::Scalar;
use crate::worldgen::{GamePair, Side, World};

/// How agents turn action distributions into actions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    #[default]
    Sample,
    /// Argmax; for analysis only.
    Greedy,
}

#[derive(Clone, Debug)]
pub struct RoundRecord<F> {
    pub pair: GamePair,
    pub symbol: usize,
    /// True when the receiver saw `(right, left)` instead of `(left, right)`.
    pub swapped: bool,
    /// Receiver's pick in its own (possibly swapped) frame.
    pub receiver_choice: Side,
    /// Receiver's pick mapped back to the pair's canonical frame.
    pub chosen: Side,
    pub reward: u8,
    pub sender_action: SenderAction<F>,
    pub receiver_action: ReceiverAction<F>,
}

impl<F> RoundRecord<F> {
    pub fn hit(&self) -> bool {
        self.reward == 1
    }
}

pub fn resolve_side(choice: Side, swapped: bool) -> Side {
    if swapped {
        choice.other()
    } else {
        choice
    }
}

pub fn play_round<F: Scalar, R: Rng + ?Sized>(
    sender: &Sender<F>,
    receiver: &Receiver<F>,
    world: &World<F>,
    pair: &GamePair,
    gibbs: &GibbsConfig,
    rng: &mut R,
) -> Result<RoundRecord<F>> {
    play_round_with(sender, receiver, world, pair, gibbs, Selection::Sample, rng)
}

pub fn play_round_with<F: Scalar, R: Rng + ?Sized>(
    sender: &Sender<F>,
    receiver: &Receiver<F>,
    world: &World<F>,
    pair: &GamePair,
    gibbs: &GibbsConfig,
    selection: Selection,
    rng: &mut R,
) -> Result<RoundRecord<F>> {
    if sender.vocab_size() != receiver.vocab_size() {
        return Err(Error::shape("agent vocabularies", sender.vocab_size(), receiver.vocab_size()));
    }
    let (s_target, s_distractor) = pair.sender_views();
    let policy = sender.policy(
        &world.instance(s_target)?.features,
        &world.instance(s_distractor)?.features,
        gibbs,
    )?;
    let sender_action = match selection {
        Selection::Sample => policy.sample(rng)?,
        Selection::Greedy => policy.greedy(),
    };
    let symbol = sender_action.index;

    let swapped: bool = rng.random();
    let (first, second) = if swapped {
        (pair.right, pair.left)
    } else {
        (pair.left, pair.right)
    };
    // the receiver gets two feature vectors and the symbol, nothing else
    let policy = receiver.policy(
        &world.instance(first)?.features,
        &world.instance(second)?.features,
        symbol,
        gibbs,
    )?;
    let receiver_action = match selection {
        Selection::Sample => policy.sample(rng)?,
        Selection::Greedy => policy.greedy(),
    };
    let receiver_choice = Side::from_index(receiver_action.index);
    let chosen = resolve_side(receiver_choice, swapped);
    let reward = u8::from(chosen == pair.target_side);
    Ok(RoundRecord {
        pair: *pair,
        symbol,
        swapped,
        receiver_choice,
        chosen,
        reward,
        sender_action,
        receiver_action,
    })
}

/// Compact per-round log entry kept by evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub target_concept: usize,
    pub distractor_concept: usize,
    pub symbol: usize,
    pub reward: u8,
}

impl TranscriptEntry {
    pub fn from_record<F: Scalar>(record: &RoundRecord<F>, world: &World<F>) -> Result<Self> {
        Ok(TranscriptEntry {
            target_concept: world.instance(record.pair.target())?.concept_id,
            distractor_concept: world.instance(record.pair.distractor())?.concept_id,
            symbol: record.symbol,
            reward: record.reward,
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UsageRows {
    /// One row per ordered (target concept, distractor concept) pair seen.
    #[default]
    ConceptPair,
    /// One row per target concept.
    TargetConcept,
}

/// Rows are game pairs (or concepts), columns are symbols, entries count how
/// often the symbol was emitted for that row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymbolUsageMatrix {
    pub rows: UsageRows,
    pub row_labels: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl SymbolUsageMatrix {
    pub fn from_transcript(transcript: &[TranscriptEntry], vocab_size: usize, rows: UsageRows) -> Result<Self> {
        let mut table: BTreeMap<(usize, usize), Vec<u64>> = BTreeMap::new();
        for e in transcript {
            if e.symbol >= vocab_size {
                return Err(Error::shape("transcript symbol bound", vocab_size, e.symbol));
            }
            let key = match rows {
                UsageRows::ConceptPair => (e.target_concept, e.distractor_concept),
                UsageRows::TargetConcept => (e.target_concept, 0),
            };
            table.entry(key).or_insert_with(|| vec![0; vocab_size])[e.symbol] += 1;
        }
        let row_labels = table
            .keys()
            .map(|&(t, d)| match rows {
                UsageRows::ConceptPair => format!("{t}-{d}"),
                UsageRows::TargetConcept => t.to_string(),
            })
            .collect();
        Ok(SymbolUsageMatrix {
            rows,
            row_labels,
            counts: table.into_values().collect(),
        })
    }

    pub fn n_symbols(&self) -> usize {
        self.counts.first().map_or(0, Vec::len)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("row");
        for s in 0..self.n_symbols() {
            let _ = write!(out, ",s{s}");
        }
        out.push('\n');
        for (label, row) in self.row_labels.iter().zip(&self.counts) {
            out.push_str(label);
            for c in row {
                let _ = write!(out, ",{c}");
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_games: usize,
    pub vocab_size: usize,
    /// Percentage of test rounds won.
    pub comm_success: f64,
    /// Distinct symbols emitted at least once.
    pub used_symbols: usize,
    pub usage: SymbolUsageMatrix,
    /// `[target concept][symbol]` emission counts.
    pub per_concept_symbol_counts: Vec<Vec<u64>>,
    pub transcript: Vec<TranscriptEntry>,
}

impl EvalReport {
    pub fn from_transcript(
        transcript: Vec<TranscriptEntry>,
        n_concepts: usize,
        vocab_size: usize,
        rows: UsageRows,
    ) -> Result<Self> {
        if transcript.is_empty() {
            return Err(Error::Domain("evaluation needs at least one game".into()));
        }
        let usage = SymbolUsageMatrix::from_transcript(&transcript, vocab_size, rows)?;
        let mut per_concept = vec![vec![0u64; vocab_size]; n_concepts];
        let mut emitted = vec![false; vocab_size];
        let mut wins = 0u64;
        for e in &transcript {
            let row = per_concept
                .get_mut(e.target_concept)
                .ok_or_else(|| Error::Lookup(format!("concept {} out of range", e.target_concept)))?;
            row[e.symbol] += 1;
            emitted[e.symbol] = true;
            wins += u64::from(e.reward);
        }
        Ok(EvalReport {
            n_games: transcript.len(),
            vocab_size,
            comm_success: 100.0 * wins as f64 / transcript.len() as f64,
            used_symbols: emitted.iter().filter(|&&e| e).count(),
            usage,
            per_concept_symbol_counts: per_concept,
            transcript,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Corrupt(e.to_string()))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub selection: Selection,
    pub rows: UsageRows,
}

pub fn evaluate<F: Scalar, R: Rng + ?Sized>(
    sender: &Sender<F>,
    receiver: &Receiver<F>,
    world: &World<F>,
    test_set: &[GamePair],
    gibbs: &GibbsConfig,
    rng: &mut R,
) -> Result<EvalReport> {
    evaluate_with(sender, receiver, world, test_set, gibbs, EvalOptions::default(), rng)
}

pub fn evaluate_with<F: Scalar, R: Rng + ?Sized>(
    sender: &Sender<F>,
    receiver: &Receiver<F>,
    world: &World<F>,
    test_set: &[GamePair],
    gibbs: &GibbsConfig,
    options: EvalOptions,
    rng: &mut R,
) -> Result<EvalReport> {
    if test_set.is_empty() {
        return Err(Error::Domain("evaluation needs a nonempty test set".into()));
    }
    let transcript = test_set
        .iter()
        .map(|pair| {
            let record = play_round_with(sender, receiver, world, pair, gibbs, options.selection, rng)?;
            TranscriptEntry::from_record(&record, world)
        })
        .collect::<Result<Vec<_>>>()?;
    EvalReport::from_transcript(transcript, world.n_concepts(), sender.vocab_size(), options.rows)
}
