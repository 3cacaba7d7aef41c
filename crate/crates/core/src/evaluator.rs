//! Possessive-pronoun scoring of English translations.
//!
//! A translation is correct when its possessive determiner matches the
//! grammatical gender of the source subject: "her" for a feminine subject,
//! "his" for a masculine one. Anything else ("their", "its", no possessive
//! at all) is incorrect, but keeps its own [`PronounClass`] so reports can
//! tell a gender flip from a restructured sentence.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Gender, GeneratedSentence, TargetFamily};
use crate::mtgateway::TranslationRecord;

#[derive(Debug, Error)]
pub enum EvaluatorError {
    #[error("translation record `{record}` does not belong to sentence `{sentence}`")]
    IdMismatch { record: String, sentence: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PronounClass {
    His,
    Her,
    Their,
    Its,
    None,
    Other,
}

impl PronounClass {
    pub fn as_str(self) -> &'static str {
        match self {
            PronounClass::His => "his",
            PronounClass::Her => "her",
            PronounClass::Their => "their",
            PronounClass::Its => "its",
            PronounClass::None => "none",
            PronounClass::Other => "other",
        }
    }

    /// The only correct matches: His for Male, Her for Female.
    pub fn matches(self, subject: Gender) -> bool {
        matches!(
            (self, subject),
            (PronounClass::His, Gender::Male) | (PronounClass::Her, Gender::Female)
        )
    }

    fn from_token(token: &str) -> Option<PronounClass> {
        Some(match token {
            "his" => PronounClass::His,
            "her" => PronounClass::Her,
            "their" => PronounClass::Their,
            "its" => PronounClass::Its,
            "my" | "your" | "our" => PronounClass::Other,
            _ => return None,
        })
    }
}

impl fmt::Display for PronounClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PronounClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "his" => Ok(PronounClass::His),
            "her" => Ok(PronounClass::Her),
            "their" => Ok(PronounClass::Their),
            "its" => Ok(PronounClass::Its),
            "none" => Ok(PronounClass::None),
            "other" => Ok(PronounClass::Other),
            other => Err(format!("unknown pronoun class `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractionMethod {
    BeforeTarget,
    FirstPossessive,
    NotFound,
}

impl ExtractionMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            ExtractionMethod::BeforeTarget => "before_target",
            ExtractionMethod::FirstPossessive => "first_possessive",
            ExtractionMethod::NotFound => "not_found",
        }
    }
}

impl fmt::Display for ExtractionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Verdict for one translation. Field order matches the outcome file header;
/// the translation itself is kept in memory only.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvaluationOutcome {
    pub sentence_id: String,
    pub backend_id: String,
    pub extracted_pronoun: PronounClass,
    pub extraction_method: ExtractionMethod,
    pub correct: bool,
    #[serde(skip)]
    pub translation_echo: String,
}

pub const OUTCOME_HEADER: [&str; 5] = [
    "sentence_id",
    "backend_id",
    "extracted_pronoun",
    "extraction_method",
    "correct",
];

/// English surface forms that locate the target noun. Synonyms such as
/// "spouse" or "partner" only anchor the search; they never affect the verdict.
fn target_forms(family: TargetFamily) -> &'static [&'static str] {
    match family {
        TargetFamily::Fiance => &[
            "fiance", "fiancee", "fiances", "fiancees", "betrothed", "partner", "partners",
        ],
        TargetFamily::BoyGirlfriend => &[
            "boyfriend",
            "girlfriend",
            "boyfriends",
            "girlfriends",
            "partner",
            "partners",
        ],
        TargetFamily::HusbandWife => &[
            "husband", "wife", "husbands", "wives", "spouse", "spouses", "partner", "partners",
        ],
    }
}

fn fold_diacritic(c: char) -> char {
    match c {
        'à' | 'á' | 'â' | 'ã' | 'ä' | 'å' => 'a',
        'ç' => 'c',
        'è' | 'é' | 'ê' | 'ë' => 'e',
        'ì' | 'í' | 'î' | 'ï' => 'i',
        'ñ' => 'n',
        'ò' | 'ó' | 'ô' | 'õ' | 'ö' => 'o',
        'ù' | 'ú' | 'û' | 'ü' => 'u',
        'ý' | 'ÿ' => 'y',
        other => other,
    }
}

/// Lowercases, folds Latin diacritics, drops punctuation and splits on
/// whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|word| {
            word.chars()
                .flat_map(char::to_lowercase)
                .map(fold_diacritic)
                .filter(|c| c.is_alphanumeric())
                .collect::<String>()
        })
        .filter(|t| !t.is_empty())
        .collect()
}

/// Finds the possessive determiner that belongs to the relationship target.
///
/// The nearest possessive before the first target-noun token wins; without a
/// target token (or without a possessive before it) the first possessive in
/// the sentence is used.
pub fn extract_pronoun(
    translation: &str,
    target_family: TargetFamily,
    _target_gender: Gender,
) -> (PronounClass, ExtractionMethod) {
    let tokens = tokenize(translation);
    let forms = target_forms(target_family);

    if let Some(target_at) = tokens.iter().position(|t| forms.contains(&t.as_str())) {
        let nearest = tokens[..target_at]
            .iter()
            .rev()
            .find_map(|t| PronounClass::from_token(t));
        if let Some(class) = nearest {
            return (class, ExtractionMethod::BeforeTarget);
        }
    }
    match tokens.iter().find_map(|t| PronounClass::from_token(t)) {
        Some(class) => (class, ExtractionMethod::FirstPossessive),
        None => (PronounClass::None, ExtractionMethod::NotFound),
    }
}

pub fn evaluate(
    record: &TranslationRecord,
    sentence: &GeneratedSentence,
) -> Result<EvaluationOutcome, EvaluatorError> {
    if record.sentence_id != sentence.sentence_id {
        return Err(EvaluatorError::IdMismatch {
            record: record.sentence_id.clone(),
            sentence: sentence.sentence_id.clone(),
        });
    }
    let (pronoun, method) = extract_pronoun(
        &record.translation,
        sentence.target_family,
        sentence.target_gender,
    );
    Ok(EvaluationOutcome {
        sentence_id: record.sentence_id.clone(),
        backend_id: record.backend_id.clone(),
        extracted_pronoun: pronoun,
        extraction_method: method,
        correct: pronoun.matches(sentence.subject_gender),
        translation_echo: record.translation.clone(),
    })
}

pub fn write_outcomes<W: std::io::Write>(
    writer: W,
    outcomes: &[EvaluationOutcome],
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    if outcomes.is_empty() {
        w.write_record(OUTCOME_HEADER)?;
    }
    for o in outcomes {
        w.serialize(o)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_outcomes<R: std::io::Read>(reader: R) -> csv::Result<Vec<EvaluationOutcome>> {
    csv::Reader::from_reader(reader).deserialize().collect()
}
