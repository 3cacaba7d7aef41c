//! Offline translator with a configurable pronoun-flip bias.
//!
//! Renders the English template for a sentence and, with probability
//! `flip_rate(stratum)`, swaps the possessive to the opposite gender. The
//! flip decision is a pure function of `(seed, sentence_id, backend_id)`, so
//! results do not depend on iteration order or thread count.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Backend, BackendError, RecordFailure};
use crate::corpus::{
    capitalize_first, render, Gender, GeneratedSentence, Language, Lexicon, RelationshipType,
};

/// Overrides the flip rate for sentences matching every field that is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlipRule {
    #[serde(default)]
    pub relationship_type: Option<RelationshipType>,
    #[serde(default)]
    pub subject_gender: Option<Gender>,
    #[serde(default)]
    pub language: Option<Language>,
    #[serde(default)]
    pub occupation_id: Option<String>,
    pub rate: f64,
}

impl FlipRule {
    fn matches(&self, s: &GeneratedSentence) -> bool {
        self.relationship_type.is_none_or(|r| r == s.relationship_type)
            && self.subject_gender.is_none_or(|g| g == s.subject_gender)
            && self.language.is_none_or(|l| l == s.language)
            && self
                .occupation_id
                .as_deref()
                .is_none_or(|o| o == s.occupation_id)
    }

    fn specificity(&self) -> usize {
        usize::from(self.relationship_type.is_some())
            + usize::from(self.subject_gender.is_some())
            + usize::from(self.language.is_some())
            + usize::from(self.occupation_id.is_some())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticBiasProfile {
    pub seed: u64,
    /// Flip rate for same-gender sentences not covered by a rule.
    pub same_gender_rate: f64,
    /// Flip rate for different-gender sentences not covered by a rule.
    #[serde(default)]
    pub different_gender_rate: f64,
    #[serde(default)]
    pub rules: Vec<FlipRule>,
}

impl SyntheticBiasProfile {
    pub fn unbiased(seed: u64) -> Self {
        SyntheticBiasProfile {
            seed,
            same_gender_rate: 0.0,
            different_gender_rate: 0.0,
            rules: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let check = |what: &str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(format!("{what} must be a probability in [0, 1], got {p}"))
            }
        };
        check("same_gender_rate", self.same_gender_rate)?;
        check("different_gender_rate", self.different_gender_rate)?;
        for rule in &self.rules {
            check("flip rule rate", rule.rate)?;
        }
        Ok(())
    }

    /// The most specific matching rule wins; ties go to the earlier rule.
    pub fn flip_rate(&self, sentence: &GeneratedSentence) -> f64 {
        let mut best: Option<&FlipRule> = None;
        for rule in self.rules.iter().filter(|r| r.matches(sentence)) {
            if best.is_none_or(|b| rule.specificity() > b.specificity()) {
                best = Some(rule);
            }
        }
        match best {
            Some(rule) => rule.rate,
            None => match sentence.relationship_type {
                RelationshipType::SameGender => self.same_gender_rate,
                RelationshipType::DifferentGender => self.different_gender_rate,
            },
        }
    }
}

/// Uniform draw in [0, 1) from the first 8 bytes of
/// SHA-256(seed_le ‖ sentence_id ‖ 0x00 ‖ backend_id).
pub fn uniform_draw(seed: u64, sentence_id: &str, backend_id: &str) -> f64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(sentence_id.as_bytes());
    h.update([0u8]);
    h.update(backend_id.as_bytes());
    let digest = h.finalize();
    let mut word = [0u8; 8];
    word.copy_from_slice(&digest[..8]);
    (u64::from_be_bytes(word) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn english_possessive(gender: Gender) -> &'static str {
    match gender {
        Gender::Female => "her",
        Gender::Male => "his",
    }
}

/// English rendering of `sentence` under `profile`.
pub fn synthetic_translate(
    profile: &SyntheticBiasProfile,
    lexicon: &Lexicon,
    backend_id: &str,
    sentence: &GeneratedSentence,
) -> Result<String, String> {
    let occupation = lexicon
        .occupation(&sentence.occupation_id)
        .ok_or_else(|| format!("occupation `{}` not in lexicon", sentence.occupation_id))?;
    let template = lexicon
        .template(sentence.template_id)
        .ok_or_else(|| format!("template {} not in lexicon", sentence.template_id))?;
    let target = lexicon
        .target(sentence.target_family)
        .ok_or_else(|| format!("target family `{}` not in lexicon", sentence.target_family))?;

    let flip = uniform_draw(profile.seed, &sentence.sentence_id, backend_id)
        < profile.flip_rate(sentence);
    let pronoun_gender = if flip {
        sentence.subject_gender.opposite()
    } else {
        sentence.subject_gender
    };
    let subject = capitalize_first(&format!("the {}", occupation.english_gloss));
    Ok(render(
        &template.english_pattern,
        &subject,
        english_possessive(pronoun_gender),
        target.english.get(sentence.target_gender),
    ))
}

pub struct SyntheticBackend {
    backend_id: String,
    profile: SyntheticBiasProfile,
    lexicon: Arc<Lexicon>,
}

impl SyntheticBackend {
    pub fn new(
        backend_id: impl Into<String>,
        profile: SyntheticBiasProfile,
        lexicon: Arc<Lexicon>,
    ) -> Self {
        SyntheticBackend {
            backend_id: backend_id.into(),
            profile,
            lexicon,
        }
    }

    pub fn profile(&self) -> &SyntheticBiasProfile {
        &self.profile
    }
}

impl Backend for SyntheticBackend {
    fn backend_id(&self) -> &str {
        &self.backend_id
    }

    fn batch_size(&self) -> usize {
        256
    }

    fn translate(
        &self,
        batch: &[&GeneratedSentence],
    ) -> Result<Vec<Result<String, RecordFailure>>, BackendError> {
        Ok(batch
            .iter()
            .map(|s| {
                synthetic_translate(&self.profile, &self.lexicon, &self.backend_id, s)
                    .map_err(|message| RecordFailure::new(&s.sentence_id, message))
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::generate_corpus;

    fn lawyer_wife(corpus: &[GeneratedSentence]) -> &GeneratedSentence {
        corpus
            .iter()
            .find(|s| s.sentence_id == "es-lawyer-F-t2-husbandwife-F")
            .unwrap()
    }

    #[test]
    fn zero_bias_renders_the_correct_pronoun() {
        let lex = Lexicon::shipped();
        let corpus = generate_corpus(&lex, Language::Spanish);
        let text =
            synthetic_translate(&SyntheticBiasProfile::unbiased(1), &lex, "s", lawyer_wife(&corpus))
                .unwrap();
        assert_eq!(text, "The lawyer kissed her wife.");
    }

    #[test]
    fn forced_flip_swaps_the_pronoun_only() {
        let lex = Lexicon::shipped();
        let corpus = generate_corpus(&lex, Language::Spanish);
        let profile = SyntheticBiasProfile {
            same_gender_rate: 1.0,
            ..SyntheticBiasProfile::unbiased(1)
        };
        let text = synthetic_translate(&profile, &lex, "s", lawyer_wife(&corpus)).unwrap();
        assert_eq!(text, "The lawyer kissed his wife.");
        let diff = corpus
            .iter()
            .find(|s| s.sentence_id == "es-lawyer-F-t2-husbandwife-M")
            .unwrap();
        assert_eq!(
            synthetic_translate(&profile, &lex, "s", diff).unwrap(),
            "The lawyer kissed her husband."
        );
    }

    #[test]
    fn most_specific_rule_wins() {
        let lex = Lexicon::shipped();
        let corpus = generate_corpus(&lex, Language::Spanish);
        let s = lawyer_wife(&corpus);
        let profile = SyntheticBiasProfile {
            seed: 0,
            same_gender_rate: 0.5,
            different_gender_rate: 0.0,
            rules: vec![
                FlipRule {
                    relationship_type: Some(RelationshipType::SameGender),
                    subject_gender: None,
                    language: None,
                    occupation_id: None,
                    rate: 0.2,
                },
                FlipRule {
                    relationship_type: Some(RelationshipType::SameGender),
                    subject_gender: None,
                    language: None,
                    occupation_id: Some("lawyer".into()),
                    rate: 0.9,
                },
            ],
        };
        assert_eq!(profile.flip_rate(s), 0.9);
        let judge = corpus
            .iter()
            .find(|s| s.sentence_id == "es-judge-F-t2-husbandwife-F")
            .unwrap();
        assert_eq!(profile.flip_rate(judge), 0.2);
        let diff = corpus
            .iter()
            .find(|s| s.sentence_id == "es-judge-F-t2-husbandwife-M")
            .unwrap();
        assert_eq!(profile.flip_rate(diff), 0.0);
    }

    #[test]
    fn rates_outside_unit_interval_are_rejected() {
        let mut p = SyntheticBiasProfile::unbiased(0);
        p.same_gender_rate = 1.5;
        assert!(p.validate().is_err());
    }

    #[test]
    fn draw_is_stable_and_uniformish() {
        // Frozen from an independent hashlib computation.
        let a = uniform_draw(42, "es-lawyer-F-t2-husbandwife-F", "amazon");
        assert_eq!(a, 0.09299909928771133);
        assert_eq!(a, uniform_draw(42, "es-lawyer-F-t2-husbandwife-F", "amazon"));
        assert_ne!(a, uniform_draw(43, "es-lawyer-F-t2-husbandwife-F", "amazon"));
        assert_ne!(a, uniform_draw(42, "es-lawyer-F-t2-husbandwife-F", "google"));
        let n = 20_000;
        let mean = (0..n)
            .map(|i| uniform_draw(7, &format!("id-{i}"), "b"))
            .sum::<f64>()
            / n as f64;
        // sd of the mean is 1/sqrt(12 n) ≈ 0.002
        assert!((mean - 0.5).abs() < 0.01, "{mean}");
    }
}
