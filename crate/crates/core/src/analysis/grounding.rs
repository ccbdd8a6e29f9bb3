use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::TranscriptEntry;
use crate::trainer::LabelSet;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundingResult {
    /// Percentage of labeled-target rounds where the emitted symbol was the
    /// target's label.
    pub rate: f64,
    /// `100 / K`.
    pub chance: f64,
    pub n_rounds: usize,
}

/// Scores only the rounds whose target concept has a label.
pub fn grounding_match_rate(
    transcript: &[TranscriptEntry],
    labels: &LabelSet,
    vocab_size: usize,
) -> Result<GroundingResult> {
    if vocab_size == 0 {
        return Err(Error::config("vocab_size", "must be positive"));
    }
    let mut n = 0usize;
    let mut hits = 0usize;
    for e in transcript {
        if let Some(gold) = labels.symbol_for(e.target_concept) {
            n += 1;
            hits += usize::from(e.symbol == gold);
        }
    }
    if n == 0 {
        return Err(Error::Domain("no round has a labeled target".into()));
    }
    Ok(GroundingResult {
        rate: 100.0 * hits as f64 / n as f64,
        chance: 100.0 / vocab_size as f64,
        n_rounds: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::LabelEntry;

    fn entry(target: usize, symbol: usize) -> TranscriptEntry {
        TranscriptEntry { target_concept: target, distractor_concept: 99, symbol, reward: 1 }
    }

    #[test]
    fn hand_transcript() {
        let labels = LabelSet::new(vec![
            LabelEntry { concept: 0, symbol: 10 },
            LabelEntry { concept: 1, symbol: 11 },
        ]);
        // concept 2 has no label and is skipped
        let t = [entry(0, 10), entry(0, 3), entry(1, 11), entry(2, 10), entry(1, 11)];
        let r = grounding_match_rate(&t, &labels, 100).unwrap();
        assert_eq!(r.n_rounds, 4);
        assert_eq!(r.rate, 75.0);
        assert_eq!(r.chance, 1.0);
    }

    #[test]
    fn always_gold_and_empty() {
        let labels = LabelSet::identity(3, 5);
        let t: Vec<_> = (0..3).map(|c| entry(c, c)).collect();
        assert_eq!(grounding_match_rate(&t, &labels, 5).unwrap().rate, 100.0);
        assert!(matches!(grounding_match_rate(&[entry(4, 0)], &labels, 5), Err(Error::Domain(_))));
    }
}
