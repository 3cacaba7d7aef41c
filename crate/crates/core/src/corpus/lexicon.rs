use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::Deserialize;

use super::{CorpusError, Gender, Language, TargetFamily};

pub(crate) const SUBJECT_SLOT: &str = "{subject}";
pub(crate) const POSSESSIVE_SLOT: &str = "{possessive}";
pub(crate) const TARGET_SLOT: &str = "{target}";

const SHIPPED_LEXICON: &str = include_str!("../../data/lexicon.toml");

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenderedForms {
    pub female: String,
    pub male: String,
}

impl GenderedForms {
    pub fn get(&self, gender: Gender) -> &str {
        match gender {
            Gender::Female => &self.female,
            Gender::Male => &self.male,
        }
    }
}

/// Occupation noun phrases for one language, article included.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OccupationForms {
    pub female: String,
    pub male: String,
    #[serde(default = "default_active")]
    pub active: bool,
}

fn default_active() -> bool {
    true
}

/// Target nouns for one language, with the possessive each one takes.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetForms {
    pub female: String,
    pub male: String,
    pub female_possessive: String,
    pub male_possessive: String,
}

impl TargetForms {
    pub fn noun(&self, gender: Gender) -> &str {
        match gender {
            Gender::Female => &self.female,
            Gender::Male => &self.male,
        }
    }

    pub fn possessive(&self, gender: Gender) -> &str {
        match gender {
            Gender::Female => &self.female_possessive,
            Gender::Male => &self.male_possessive,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OccupationEntry {
    pub occupation_id: String,
    pub english_gloss: String,
    pub forms: BTreeMap<Language, OccupationForms>,
}

impl OccupationEntry {
    pub fn is_active(&self, language: Language) -> bool {
        self.forms.get(&language).is_some_and(|f| f.active)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationshipTarget {
    pub family: TargetFamily,
    pub english: GenderedForms,
    pub forms: BTreeMap<Language, TargetForms>,
}

impl RelationshipTarget {
    pub fn forms(&self, language: Language) -> Option<&TargetForms> {
        self.forms.get(&language)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceTemplate {
    pub template_id: u8,
    pub english_pattern: String,
    pub patterns: BTreeMap<Language, String>,
}

impl SentenceTemplate {
    pub fn pattern(&self, language: Language) -> Option<&str> {
        self.patterns.get(&language).map(String::as_str)
    }
}

/// Surface-form lookup for a gendered lexicon entry.
pub trait Inflect {
    fn inflect(&self, language: Language, gender: Gender) -> Result<&str, CorpusError>;
}

impl Inflect for OccupationEntry {
    fn inflect(&self, language: Language, gender: Gender) -> Result<&str, CorpusError> {
        match self.forms.get(&language) {
            Some(forms) if forms.active => Ok(match gender {
                Gender::Female => &forms.female,
                Gender::Male => &forms.male,
            }),
            _ => Err(CorpusError::Inactive {
                entry: self.occupation_id.clone(),
                language,
            }),
        }
    }
}

impl Inflect for RelationshipTarget {
    fn inflect(&self, language: Language, gender: Gender) -> Result<&str, CorpusError> {
        self.forms
            .get(&language)
            .map(|f| f.noun(gender))
            .ok_or_else(|| CorpusError::Inactive {
                entry: self.family.code().to_string(),
                language,
            })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicon {
    occupations: Vec<OccupationEntry>,
    targets: Vec<RelationshipTarget>,
    templates: Vec<SentenceTemplate>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLexicon {
    #[serde(default)]
    template: Vec<RawTemplate>,
    #[serde(default)]
    target: Vec<RawTarget>,
    #[serde(default)]
    occupation: Vec<RawOccupation>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTemplate {
    id: u8,
    en: String,
    fr: Option<String>,
    it: Option<String>,
    es: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTarget {
    family: TargetFamily,
    en: GenderedForms,
    fr: Option<TargetForms>,
    it: Option<TargetForms>,
    es: Option<TargetForms>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOccupation {
    id: String,
    gloss: Option<String>,
    fr: Option<OccupationForms>,
    it: Option<OccupationForms>,
    es: Option<OccupationForms>,
}

fn per_language<T>(fr: Option<T>, it: Option<T>, es: Option<T>) -> BTreeMap<Language, T> {
    [
        (Language::French, fr),
        (Language::Italian, it),
        (Language::Spanish, es),
    ]
    .into_iter()
    .filter_map(|(l, v)| v.map(|v| (l, v)))
    .collect()
}

impl Lexicon {
    /// The lexicon bundled with the crate (`data/lexicon.toml`).
    pub fn shipped() -> Lexicon {
        Lexicon::from_toml_str(SHIPPED_LEXICON).expect("shipped lexicon is valid")
    }

    pub fn load(path: &Path) -> Result<Lexicon, CorpusError> {
        let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text).map_err(|e| match e {
            CorpusError::Parse { message, .. } => CorpusError::Parse {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })
    }

    pub fn from_toml_str(text: &str) -> Result<Lexicon, CorpusError> {
        Self::parse(text)
    }

    fn parse(text: &str) -> Result<Lexicon, CorpusError> {
        let parse_err = |message: String| CorpusError::Parse {
            path: "<memory>".into(),
            message,
        };
        let raw: RawLexicon = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|span| text[..span.start.min(text.len())].matches('\n').count() + 1);
            match line {
                Some(line) => parse_err(format!("line {line}: {}", e.message())),
                None => parse_err(e.message().to_string()),
            }
        })?;
        if raw.template.is_empty() && raw.target.is_empty() && raw.occupation.is_empty() {
            return Err(parse_err("lexicon contains no records".into()));
        }

        let lexicon = Lexicon {
            templates: raw
                .template
                .into_iter()
                .map(|t| SentenceTemplate {
                    template_id: t.id,
                    english_pattern: t.en,
                    patterns: per_language(t.fr, t.it, t.es),
                })
                .collect(),
            targets: raw
                .target
                .into_iter()
                .map(|t| RelationshipTarget {
                    family: t.family,
                    english: t.en,
                    forms: per_language(t.fr, t.it, t.es),
                })
                .collect(),
            occupations: raw
                .occupation
                .into_iter()
                .map(|o| OccupationEntry {
                    english_gloss: o.gloss.unwrap_or_else(|| o.id.clone()),
                    occupation_id: o.id,
                    forms: per_language(o.fr, o.it, o.es),
                })
                .collect(),
        };
        lexicon.validate()?;
        Ok(lexicon)
    }

    fn validate(&self) -> Result<(), CorpusError> {
        let invalid = |msg: String| Err(CorpusError::Validation(msg));
        if self.templates.is_empty() {
            return invalid("no sentence templates".into());
        }
        if self.targets.is_empty() {
            return invalid("no relationship targets".into());
        }
        if self.occupations.is_empty() {
            return invalid("no occupations".into());
        }

        let mut template_ids = HashSet::new();
        for t in &self.templates {
            if t.template_id == 0 {
                return invalid("template ids start at 1".into());
            }
            if !template_ids.insert(t.template_id) {
                return invalid(format!("duplicate template id {}", t.template_id));
            }
            let all = std::iter::once(("en", t.english_pattern.as_str()))
                .chain(t.patterns.iter().map(|(l, p)| (l.code(), p.as_str())));
            for (lang, pattern) in all {
                for slot in [SUBJECT_SLOT, POSSESSIVE_SLOT, TARGET_SLOT] {
                    let n = pattern.matches(slot).count();
                    if n != 1 {
                        return invalid(format!(
                            "template {} ({lang}) has {n} occurrences of {slot}; expected exactly one",
                            t.template_id
                        ));
                    }
                }
            }
        }

        let mut families = HashSet::new();
        for t in &self.targets {
            if !families.insert(t.family) {
                return invalid(format!("duplicate target family `{}`", t.family));
            }
            if t.english.female.trim().is_empty() || t.english.male.trim().is_empty() {
                return invalid(format!("target `{}` has an empty English form", t.family));
            }
            for (lang, forms) in &t.forms {
                if forms.female == forms.male {
                    return invalid(format!(
                        "target `{}` has identical {} female and male forms",
                        t.family,
                        lang.name()
                    ));
                }
            }
        }

        let mut ids = HashSet::new();
        for o in &self.occupations {
            let id_ok = !o.occupation_id.is_empty()
                && o.occupation_id
                    .chars()
                    .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_');
            if !id_ok {
                return invalid(format!(
                    "occupation id `{}` must be lowercase ASCII letters, digits or `_`",
                    o.occupation_id
                ));
            }
            if !ids.insert(o.occupation_id.as_str()) {
                return invalid(format!("duplicate occupation id `{}`", o.occupation_id));
            }
            for (lang, forms) in &o.forms {
                if !forms.active {
                    continue;
                }
                if forms.female.trim().is_empty() || forms.male.trim().is_empty() {
                    return invalid(format!(
                        "occupation `{}` has an empty {} form",
                        o.occupation_id,
                        lang.name()
                    ));
                }
                if forms.female == forms.male {
                    return invalid(format!(
                        "occupation `{}`: {} female and male forms are identical (\"{}\"); \
                         mark the entry `active = false`",
                        o.occupation_id,
                        lang.name(),
                        forms.female
                    ));
                }
                if let Some(t) = self.templates.iter().find(|t| t.pattern(*lang).is_none()) {
                    return invalid(format!(
                        "occupation `{}` is active for {} but template {} has no {} pattern",
                        o.occupation_id,
                        lang.name(),
                        t.template_id,
                        lang.code()
                    ));
                }
                if let Some(t) = self.targets.iter().find(|t| t.forms(*lang).is_none()) {
                    return invalid(format!(
                        "occupation `{}` is active for {} but target `{}` has no {} forms",
                        o.occupation_id,
                        lang.name(),
                        t.family,
                        lang.code()
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn occupations(&self) -> &[OccupationEntry] {
        &self.occupations
    }

    pub fn active_occupations(&self, language: Language) -> impl Iterator<Item = &OccupationEntry> {
        self.occupations.iter().filter(move |o| o.is_active(language))
    }

    pub fn occupation(&self, id: &str) -> Option<&OccupationEntry> {
        self.occupations.iter().find(|o| o.occupation_id == id)
    }

    pub fn targets(&self) -> &[RelationshipTarget] {
        &self.targets
    }

    pub fn target(&self, family: TargetFamily) -> Option<&RelationshipTarget> {
        self.targets.iter().find(|t| t.family == family)
    }

    pub fn templates(&self) -> &[SentenceTemplate] {
        &self.templates
    }

    pub fn template(&self, id: u8) -> Option<&SentenceTemplate> {
        self.templates.iter().find(|t| t.template_id == id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_lexicon_counts() {
        let lex = Lexicon::shipped();
        assert_eq!(lex.occupations().len(), 50);
        assert_eq!(lex.templates().len(), 5);
        assert_eq!(lex.targets().len(), 3);
        assert_eq!(lex.occupations()[0].occupation_id, "analyst");
        assert_eq!(lex.occupations()[3].occupation_id, "author");
        for family in TargetFamily::ALL {
            assert!(lex.target(family).is_some());
        }
    }

    #[test]
    fn inflect_looks_up_stored_forms() {
        let lex = Lexicon::shipped();
        let lawyer = lex.occupation("lawyer").unwrap();
        assert_eq!(lawyer.inflect(Language::Spanish, Gender::Male).unwrap(), "el abogado");
        assert_eq!(lawyer.inflect(Language::Spanish, Gender::Female).unwrap(), "la abogada");
        assert_eq!(lawyer.inflect(Language::French, Gender::Female).unwrap(), "l'avocate");
        let wife = lex.target(TargetFamily::HusbandWife).unwrap();
        assert_eq!(wife.inflect(Language::Spanish, Gender::Female).unwrap(), "esposa");
    }

    #[test]
    fn inactive_analyst_in_french() {
        let lex = Lexicon::shipped();
        let analyst = lex.occupation("analyst").unwrap();
        let err = analyst.inflect(Language::French, Gender::Female).unwrap_err();
        assert!(matches!(err, CorpusError::Inactive { language: Language::French, .. }));
        assert!(analyst.inflect(Language::Spanish, Gender::Female).is_ok());
    }

    const BASE: &str = r#"
[[template]]
id = 1
en = "{subject} kissed {possessive} {target}."
fr = "{subject} a embrassé {possessive} {target}."

[[target]]
family = "husbandwife"
en = { female = "wife", male = "husband" }
fr = { female = "femme", male = "mari", female_possessive = "sa", male_possessive = "son" }
"#;

    #[test]
    fn unflagged_identical_forms_fail_validation() {
        let text = format!(
            "{BASE}\n[[occupation]]\nid = \"analyst\"\nfr = {{ female = \"l'analyste\", male = \"l'analyste\" }}\n"
        );
        let err = Lexicon::from_toml_str(&text).unwrap_err();
        match err {
            CorpusError::Validation(msg) => {
                assert!(msg.contains("analyst"), "{msg}");
                assert!(msg.contains("French"), "{msg}");
            }
            other => panic!("unexpected {other:?}"),
        }
        let flagged = format!(
            "{BASE}\n[[occupation]]\nid = \"analyst\"\nfr = {{ female = \"l'analyste\", male = \"l'analyste\", active = false }}\n\
             [[occupation]]\nid = \"judge\"\nfr = {{ female = \"la juge\", male = \"le juge\" }}\n"
        );
        assert!(Lexicon::from_toml_str(&flagged).is_ok());
    }

    #[test]
    fn empty_file_is_a_parse_error() {
        assert!(matches!(
            Lexicon::from_toml_str(""),
            Err(CorpusError::Parse { .. })
        ));
    }

    #[test]
    fn parse_error_names_the_line() {
        let text = format!("{BASE}\n[[occupation]]\nid = \"judge\"\nfr = {{ female = \"la juge\" }}\n");
        match Lexicon::from_toml_str(&text).unwrap_err() {
            CorpusError::Parse { message, .. } => assert!(message.contains("line 14"), "{message}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn template_slots_are_checked() {
        let text = BASE.replace("a embrassé {possessive}", "a embrassé");
        let text = format!("{text}\n[[occupation]]\nid = \"judge\"\nfr = {{ female = \"la juge\", male = \"le juge\" }}\n");
        let err = Lexicon::from_toml_str(&text).unwrap_err();
        assert!(err.to_string().contains("{possessive}"), "{err}");
    }

    #[test]
    fn duplicate_ids_rejected() {
        let occ = "[[occupation]]\nid = \"judge\"\nfr = { female = \"la juge\", male = \"le juge\" }\n";
        let text = format!("{BASE}\n{occ}\n{occ}");
        let err = Lexicon::from_toml_str(&text).unwrap_err();
        assert!(err.to_string().contains("duplicate occupation id"), "{err}");
    }

    #[test]
    fn active_language_needs_template_coverage() {
        let text = format!(
            "{BASE}\n[[occupation]]\nid = \"judge\"\nes = {{ female = \"la jueza\", male = \"el juez\" }}\n"
        );
        let err = Lexicon::from_toml_str(&text).unwrap_err();
        assert!(err.to_string().contains("no es pattern"), "{err}");
    }
}
