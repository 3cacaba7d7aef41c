//! Gendered lexicon and template expansion.
//!
//! A [`Lexicon`] holds occupation nouns, relationship targets and sentence
//! templates for each source language. [`generate_corpus`] takes the full
//! cross-product of those into [`GeneratedSentence`]s, one per combination of
//! occupation, subject gender, template, target family and target gender.

mod lexicon;

use std::fmt;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use lexicon::{
    GenderedForms, Inflect, Lexicon, OccupationEntry, OccupationForms, RelationshipTarget,
    SentenceTemplate, TargetForms,
};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("failed to parse lexicon {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid lexicon: {0}")]
    Validation(String),
    #[error("`{entry}` is not active for {language}")]
    Inactive { entry: String, language: Language },
    #[error("corpus file {path}: {message}")]
    CorpusFile { path: PathBuf, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Female,
    Male,
}

impl Gender {
    pub const ALL: [Gender; 2] = [Gender::Female, Gender::Male];

    /// Single-letter code used inside sentence ids.
    pub fn code(self) -> &'static str {
        match self {
            Gender::Female => "F",
            Gender::Male => "M",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Female => "female",
            Gender::Male => "male",
        }
    }

    pub fn opposite(self) -> Gender {
        match self {
            Gender::Female => Gender::Male,
            Gender::Male => Gender::Female,
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Gender {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "f" | "female" => Ok(Gender::Female),
            "m" | "male" => Ok(Gender::Male),
            other => Err(format!("unknown gender `{other}`")),
        }
    }
}

/// Source languages with grammatical gender on occupation nouns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Language {
    #[serde(rename = "fr")]
    French,
    #[serde(rename = "it")]
    Italian,
    #[serde(rename = "es")]
    Spanish,
}

impl Language {
    pub const ALL: [Language; 3] = [Language::French, Language::Italian, Language::Spanish];

    pub fn code(self) -> &'static str {
        match self {
            Language::French => "fr",
            Language::Italian => "it",
            Language::Spanish => "es",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Language::French => "French",
            Language::Italian => "Italian",
            Language::Spanish => "Spanish",
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Language {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "fr" | "french" => Ok(Language::French),
            "it" | "italian" => Ok(Language::Italian),
            "es" | "spanish" => Ok(Language::Spanish),
            other => Err(format!("unsupported language `{other}` (expected fr, it or es)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetFamily {
    Fiance,
    BoyGirlfriend,
    HusbandWife,
}

impl TargetFamily {
    pub const ALL: [TargetFamily; 3] = [
        TargetFamily::Fiance,
        TargetFamily::BoyGirlfriend,
        TargetFamily::HusbandWife,
    ];

    pub fn code(self) -> &'static str {
        match self {
            TargetFamily::Fiance => "fiance",
            TargetFamily::BoyGirlfriend => "boygirlfriend",
            TargetFamily::HusbandWife => "husbandwife",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            TargetFamily::Fiance => "Fiancé(e)",
            TargetFamily::BoyGirlfriend => "Boy/girlfriend",
            TargetFamily::HusbandWife => "Husband/wife",
        }
    }
}

impl fmt::Display for TargetFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for TargetFamily {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "fiance" => Ok(TargetFamily::Fiance),
            "boygirlfriend" => Ok(TargetFamily::BoyGirlfriend),
            "husbandwife" => Ok(TargetFamily::HusbandWife),
            other => Err(format!("unknown target family `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationshipType {
    SameGender,
    DifferentGender,
}

impl RelationshipType {
    pub fn of(subject: Gender, target: Gender) -> Self {
        if subject == target {
            RelationshipType::SameGender
        } else {
            RelationshipType::DifferentGender
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RelationshipType::SameGender => "same_gender",
            RelationshipType::DifferentGender => "different_gender",
        }
    }
}

impl fmt::Display for RelationshipType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RelationshipType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "same_gender" | "same" => Ok(RelationshipType::SameGender),
            "different_gender" | "different" => Ok(RelationshipType::DifferentGender),
            other => Err(format!("unknown relationship type `{other}`")),
        }
    }
}

/// One fully inflected source sentence and the coordinates it was built from.
///
/// Field order matches the corpus file header.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedSentence {
    pub sentence_id: String,
    pub language: Language,
    pub text: String,
    pub occupation_id: String,
    pub subject_gender: Gender,
    pub template_id: u8,
    pub target_family: TargetFamily,
    pub target_gender: Gender,
    pub relationship_type: RelationshipType,
}

pub const CORPUS_HEADER: [&str; 9] = [
    "sentence_id",
    "language",
    "text",
    "occupation_id",
    "subject_gender",
    "template_id",
    "target_family",
    "target_gender",
    "relationship_type",
];

/// `{lang}-{occupation_id}-{F|M}-t{template_id}-{family}-{F|M}`
pub fn sentence_id(
    language: Language,
    occupation_id: &str,
    subject_gender: Gender,
    template_id: u8,
    target_family: TargetFamily,
    target_gender: Gender,
) -> String {
    format!(
        "{}-{}-{}-t{}-{}-{}",
        language.code(),
        occupation_id,
        subject_gender.code(),
        template_id,
        target_family.code(),
        target_gender.code()
    )
}

impl GeneratedSentence {
    /// Id of the sentence that differs from this one only in target gender.
    pub fn partner_id(&self) -> String {
        sentence_id(
            self.language,
            &self.occupation_id,
            self.subject_gender,
            self.template_id,
            self.target_family,
            self.target_gender.opposite(),
        )
    }
}

/// Expands the lexicon into every sentence for `language`, sorted by id.
pub fn generate_corpus(lexicon: &Lexicon, language: Language) -> Vec<GeneratedSentence> {
    let mut out = Vec::with_capacity(
        lexicon.active_occupations(language).count()
            * 4
            * lexicon.templates().len()
            * lexicon.targets().len(),
    );
    for occupation in lexicon.active_occupations(language) {
        for subject_gender in Gender::ALL {
            // Validation guarantees every active language is covered below.
            let subject = occupation
                .inflect(language, subject_gender)
                .expect("active occupation has forms");
            for template in lexicon.templates() {
                let pattern = template
                    .pattern(language)
                    .expect("validated lexicon covers active languages");
                for target in lexicon.targets() {
                    let forms = target
                        .forms(language)
                        .expect("validated lexicon covers active languages");
                    for target_gender in Gender::ALL {
                        let text = render(
                            pattern,
                            subject,
                            forms.possessive(target_gender),
                            forms.noun(target_gender),
                        );
                        out.push(GeneratedSentence {
                            sentence_id: sentence_id(
                                language,
                                &occupation.occupation_id,
                                subject_gender,
                                template.template_id,
                                target.family,
                                target_gender,
                            ),
                            language,
                            text,
                            occupation_id: occupation.occupation_id.clone(),
                            subject_gender,
                            template_id: template.template_id,
                            target_family: target.family,
                            target_gender,
                            relationship_type: RelationshipType::of(subject_gender, target_gender),
                        });
                    }
                }
            }
        }
    }
    out.sort_by(|a, b| a.sentence_id.cmp(&b.sentence_id));
    out
}

/// Fills the three slots of a pattern and capitalizes the sentence start.
pub(crate) fn render(pattern: &str, subject: &str, possessive: &str, target: &str) -> String {
    let filled = pattern
        .replace(lexicon::SUBJECT_SLOT, subject)
        .replace(lexicon::POSSESSIVE_SLOT, possessive)
        .replace(lexicon::TARGET_SLOT, target);
    capitalize_first(&filled)
}

pub(crate) fn capitalize_first(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

pub fn write_corpus<W: io::Write>(writer: W, sentences: &[GeneratedSentence]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    if sentences.is_empty() {
        w.write_record(CORPUS_HEADER)?;
    }
    for s in sentences {
        w.serialize(s)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_corpus_file(path: &Path, sentences: &[GeneratedSentence]) -> Result<(), CorpusError> {
    let file = std::fs::File::create(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    write_corpus(io::BufWriter::new(file), sentences).map_err(|e| CorpusError::CorpusFile {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn read_corpus_file(path: &Path) -> Result<Vec<GeneratedSentence>, CorpusError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| CorpusError::CorpusFile {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let headers = reader.headers().map_err(|e| CorpusError::CorpusFile {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    if headers.iter().ne(CORPUS_HEADER) {
        return Err(CorpusError::CorpusFile {
            path: path.to_path_buf(),
            message: format!("unexpected header; expected `{}`", CORPUS_HEADER.join(",")),
        });
    }
    reader
        .deserialize()
        .map(|row| {
            row.map_err(|e| CorpusError::CorpusFile {
                path: path.to_path_buf(),
                message: e.to_string(),
            })
        })
        .collect()
}
