use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::CorpusRecord;
use crate::label::Polarity;
use crate::numcore::{argmax, streams, RandomSource};

const DEFAULT_DOMAINS: [&str; 10] =
    ["shoes", "perfume", "phone", "cream", "printer", "clothes", "books", "beds", "cars", "gold"];

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

/// Letters-only suffix for the `i`-th generated word (digits would be
/// stripped by normalization).
fn syllables(mut i: usize) -> String {
    let base = CONSONANTS.len() * VOWELS.len();
    let mut out = String::new();
    loop {
        let s = i % base;
        out.push(CONSONANTS[s / VOWELS.len()] as char);
        out.push(VOWELS[s % VOWELS.len()] as char);
        i /= base;
        if i == 0 {
            break;
        }
    }
    out
}

/// Shape of a synthetic corpus whose labels are carried by keywords.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub domains: Vec<String>,
    pub keywords_per_domain: usize,
    pub polarity_keywords: usize,
    pub filler_words: usize,
    pub samples_per_cell: usize,
    pub min_words: usize,
    pub max_words: usize,
    /// Probability that each keyword is swapped for one of a wrong class.
    pub noise: f64,
}

impl SynthSpec {
    /// `k` domains named after real product categories where possible.
    pub fn with_domains(k: usize, samples_per_cell: usize) -> Self {
        let domains = (0..k)
            .map(|i| match DEFAULT_DOMAINS.get(i) {
                Some(d) => d.to_string(),
                None => alloc::format!("domain{}", syllables(i)),
            })
            .collect();
        SynthSpec {
            domains,
            keywords_per_domain: 5,
            polarity_keywords: 5,
            filler_words: 20,
            samples_per_cell,
            min_words: 6,
            max_words: 12,
            noise: 0.0,
        }
    }

    pub fn lexicon(&self) -> SynthLexicon {
        let domain_keywords = self
            .domains
            .iter()
            .map(|d| (0..self.keywords_per_domain.max(1)).map(|i| alloc::format!("{d}{}", syllables(i))).collect())
            .collect();
        let polar = |stem: &str| (0..self.polarity_keywords.max(1)).map(|i| alloc::format!("{stem}{}", syllables(i))).collect();
        SynthLexicon {
            domain_keywords,
            positive: polar("good"),
            negative: polar("bad"),
            filler: (0..self.filler_words).map(|i| alloc::format!("w{}", syllables(i))).collect(),
        }
    }
}

/// The words a [`SynthSpec`] draws from, plus a keyword-lookup classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthLexicon {
    pub domain_keywords: Vec<Vec<String>>,
    pub positive: Vec<String>,
    pub negative: Vec<String>,
    pub filler: Vec<String>,
}

impl SynthLexicon {
    /// Counts keyword hits per class; ties go to the lower index.
    pub fn classify(&self, text: &str) -> (Polarity, usize) {
        let mut domain_hits = alloc::vec![0.0; self.domain_keywords.len()];
        let mut polarity_hits = [0.0; 2];
        for w in text.split_whitespace() {
            let w = w.to_string();
            if self.positive.contains(&w) {
                polarity_hits[0] += 1.0;
            } else if self.negative.contains(&w) {
                polarity_hits[1] += 1.0;
            }
            for (j, kws) in self.domain_keywords.iter().enumerate() {
                if kws.contains(&w) {
                    domain_hits[j] += 1.0;
                }
            }
        }
        let polarity = Polarity::from_index(argmax(&polarity_hits)).unwrap_or(Polarity::Positive);
        (polarity, argmax(&domain_hits))
    }
}

/// Generates `samples_per_cell` records for every (domain, polarity) pair.
/// At zero noise each text carries two keywords of its domain, one of its
/// polarity and no misleading keywords.
pub fn synth_corpus(spec: &SynthSpec, seed: u64) -> Vec<CorpusRecord> {
    let lex = spec.lexicon();
    let mut rng = RandomSource::with_stream(seed, streams::SYNTH);
    let k = spec.domains.len();
    let pick = |rng: &mut RandomSource, words: &[String]| words[rng.below(words.len())].clone();
    let mut out = Vec::with_capacity(k * 2 * spec.samples_per_cell);
    for domain in 0..k {
        for polarity in Polarity::ALL {
            for _ in 0..spec.samples_per_cell {
                let mut words = Vec::new();
                for _ in 0..2 {
                    let d = if k > 1 && rng.uniform() < spec.noise {
                        (domain + 1 + rng.below(k - 1)) % k
                    } else {
                        domain
                    };
                    words.push(pick(&mut rng, &lex.domain_keywords[d]));
                }
                let flipped = rng.uniform() < spec.noise;
                let pool = match (polarity, flipped) {
                    (Polarity::Positive, false) | (Polarity::Negative, true) => &lex.positive,
                    _ => &lex.negative,
                };
                words.push(pick(&mut rng, pool));
                let span = spec.max_words.saturating_sub(spec.min_words) + 1;
                let len = (spec.min_words + rng.below(span)).max(words.len());
                while words.len() < len && !lex.filler.is_empty() {
                    words.push(pick(&mut rng, &lex.filler));
                }
                rng.shuffle(&mut words);
                let score = match polarity {
                    Polarity::Positive => 4 + rng.below(2) as u8,
                    Polarity::Negative => 1,
                };
                out.push(CorpusRecord {
                    id: alloc::format!("syn{:05}", out.len()),
                    text: words.join(" "),
                    score: Some(score),
                    domain,
                    polarity: Some(polarity),
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datapipe::normalize;

    #[test]
    fn counts_are_balanced() {
        let spec = SynthSpec::with_domains(4, 25);
        let recs = synth_corpus(&spec, 1);
        assert_eq!(recs.len(), 200);
        for d in 0..4 {
            for p in Polarity::ALL {
                let n = recs.iter().filter(|r| r.domain == d && r.polarity == Some(p)).count();
                assert_eq!(n, 25);
            }
        }
    }

    #[test]
    fn keyword_oracle_is_perfect_without_noise() {
        let spec = SynthSpec::with_domains(4, 25);
        let lex = spec.lexicon();
        for r in synth_corpus(&spec, 11) {
            assert_eq!(lex.classify(&r.text), (r.polarity.unwrap(), r.domain));
            assert_eq!(normalize(&r.text).as_deref(), Some(r.text.as_str()));
        }
    }

    #[test]
    fn noise_breaks_the_oracle_sometimes() {
        let mut spec = SynthSpec::with_domains(4, 50);
        spec.noise = 0.5;
        let lex = spec.lexicon();
        let wrong = synth_corpus(&spec, 2)
            .iter()
            .filter(|r| lex.classify(&r.text) != (r.polarity.unwrap(), r.domain))
            .count();
        assert!(wrong > 0);
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = SynthSpec::with_domains(3, 5);
        assert_eq!(synth_corpus(&spec, 9), synth_corpus(&spec, 9));
        assert_ne!(synth_corpus(&spec, 9), synth_corpus(&spec, 10));
        assert_eq!(SynthSpec::with_domains(12, 1).domains[11], alloc::format!("domain{}", syllables(11)));
    }
}
