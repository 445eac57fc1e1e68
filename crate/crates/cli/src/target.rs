//! Target phrases for targeted attacks.

use std::collections::BTreeMap;
use std::path::PathBuf;

use evoattack::{normalize, Transcript};
use rand::seq::IndexedRandom;
use rand::Rng;

use crate::HarnessError;

/// Where targets come from, and the word count of the sample under attack.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetTextSpec {
    pub corpus_path: PathBuf,
    pub n: usize,
}

/// One normalized phrase per non-blank corpus line.
pub fn read_corpus(path: &std::path::Path) -> Result<Vec<Transcript>, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(HarnessError::io(path))?;
    Ok(text.lines().map(normalize).filter(|t| !t.is_empty()).collect())
}

/// Draws a length uniformly from the lengths in `[2, n + 1]` that the corpus
/// actually has, then a phrase of that length uniformly.
pub fn choose_target<R: Rng + ?Sized>(
    phrases: &[Transcript],
    n: usize,
    rng: &mut R,
) -> Result<Transcript, HarnessError> {
    let max = n + 1;
    let mut by_len: BTreeMap<usize, Vec<&Transcript>> = BTreeMap::new();
    for p in phrases.iter().filter(|p| (2..=max).contains(&p.len())) {
        by_len.entry(p.len()).or_default().push(p);
    }
    let lengths: Vec<usize> = by_len.keys().copied().collect();
    let len = lengths.choose(rng).ok_or(HarnessError::NoEligiblePhrase { max })?;
    let phrase = by_len[len].choose(rng).expect("lengths only index non-empty buckets");
    Ok((*phrase).clone())
}

pub fn generate_target<R: Rng + ?Sized>(spec: &TargetTextSpec, rng: &mut R) -> Result<Transcript, HarnessError> {
    choose_target(&read_corpus(&spec.corpus_path)?, spec.n, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use evoattack::rng::seeded;
    use proptest::prelude::*;

    fn phrases(lines: &[&str]) -> Vec<Transcript> {
        lines.iter().map(|l| normalize(l)).collect()
    }

    fn uniform_corpus() -> Vec<Transcript> {
        let mut out = Vec::new();
        for len in 1..=8 {
            for k in 0..3 {
                out.push(Transcript::from(vec![format!("w{k}"); len].join(" ")));
            }
        }
        out
    }

    #[test]
    fn n_five_gives_two_to_six_words() {
        let corpus = uniform_corpus();
        let mut rng = seeded(1);
        for _ in 0..500 {
            let t = choose_target(&corpus, 5, &mut rng).unwrap();
            assert!((2..=6).contains(&t.len()));
        }
    }

    #[test]
    fn n_one_gives_two_words() {
        let corpus = uniform_corpus();
        let mut rng = seeded(2);
        for _ in 0..100 {
            assert_eq!(choose_target(&corpus, 1, &mut rng).unwrap().len(), 2);
        }
    }

    #[test]
    fn length_frequencies_are_uniform() {
        // Length 6 has one phrase, the others three; lengths still draw evenly.
        let mut corpus = uniform_corpus();
        corpus.retain(|p| p.len() != 6 || p.words()[0] == "w0");
        let mut rng = seeded(3);
        let draws = 10_000;
        let mut counts = [0usize; 7];
        for _ in 0..draws {
            counts[choose_target(&corpus, 5, &mut rng).unwrap().len()] += 1;
        }
        for (len, &count) in counts.iter().enumerate().skip(2) {
            let freq = count as f64 / draws as f64;
            assert!((freq - 0.2).abs() <= 0.02, "length {len}: {freq}");
        }
    }

    #[test]
    fn lengths_without_phrases_are_skipped() {
        let corpus = phrases(&["a b", "a b c d e f g"]);
        let mut rng = seeded(4);
        for _ in 0..50 {
            assert_eq!(choose_target(&corpus, 5, &mut rng).unwrap().text(), "a b");
        }
    }

    #[test]
    fn no_eligible_phrase_is_an_error() {
        let corpus = phrases(&["single", "one two three four"]);
        assert!(matches!(
            choose_target(&corpus, 2, &mut seeded(5)),
            Err(HarnessError::NoEligiblePhrase { max: 3 })
        ));
        assert!(choose_target(&[], 4, &mut seeded(5)).is_err());
    }

    #[test]
    fn corpus_file_is_normalized() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.txt");
        std::fs::write(&path, "Turn LEFT, now!\n\n   \nsingle\n").unwrap();
        let spec = TargetTextSpec { corpus_path: path, n: 3 };
        assert_eq!(generate_target(&spec, &mut seeded(6)).unwrap().text(), "turn left now");
    }

    proptest! {
        #[test]
        fn target_length_within_range(n in 0usize..10, seed in any::<u64>()) {
            let corpus = uniform_corpus();
            if let Ok(t) = choose_target(&corpus, n, &mut seeded(seed)) {
                prop_assert!(t.len() >= 2 && t.len() <= n + 1);
            } else {
                prop_assert!(n < 1);
            }
        }
    }
}
