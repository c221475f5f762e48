//! Prompt rendering for zero-shot, few-shot and one-sided demonstrations.
//!
//! Six template shapes are supported (`[src]`/`[tgt]` are language display
//! names, `◇` is the break position):
//!
//! | id | shape                                          |
//! |----|------------------------------------------------|
//! | A  | `[src]: [input] ◇ [tgt]: `                     |
//! | B  | `[input] ◇ [tgt]: `                            |
//! | C  | `[input] ◇ Translate to [tgt]: `               |
//! | D  | `[input] ◇ Translate from [src] to [tgt]: `    |
//! | E  | `[src]: [input] ◇ Translate to [tgt]: `        |
//! | F  | `[src]: [input] ◇ Translate from [src] to [tgt]: ` |
//!
//! `◇` renders as one space, or as `\n` when line breaks are enabled.
//! Demonstration blocks are joined by the same separator. Every prompt ends
//! with the target cue followed by a single space.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::corpus::{LangCode, LanguagePair, MonolingualExample, ParallelExample};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TemplateId {
    A,
    B,
    C,
    D,
    E,
    F,
}

impl TemplateId {
    pub const ALL: [TemplateId; 6] = [
        TemplateId::A,
        TemplateId::B,
        TemplateId::C,
        TemplateId::D,
        TemplateId::E,
        TemplateId::F,
    ];

    fn has_source_label(self) -> bool {
        matches!(self, TemplateId::A | TemplateId::E | TemplateId::F)
    }
}

impl FromStr for TemplateId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_uppercase().as_str() {
            "A" => TemplateId::A,
            "B" => TemplateId::B,
            "C" => TemplateId::C,
            "D" => TemplateId::D,
            "E" => TemplateId::E,
            "F" => TemplateId::F,
            other => return Err(Error::arg(format!("unknown template `{other}`"))),
        })
    }
}

/// The language the fixed template phrases are written in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TemplateLanguage {
    English,
    German,
    Chinese,
}

impl TemplateLanguage {
    pub const ALL: [TemplateLanguage; 3] = [
        TemplateLanguage::English,
        TemplateLanguage::German,
        TemplateLanguage::Chinese,
    ];

    fn key(self) -> &'static str {
        match self {
            TemplateLanguage::English => "english",
            TemplateLanguage::German => "german",
            TemplateLanguage::Chinese => "chinese",
        }
    }
}

impl FromStr for TemplateLanguage {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        TemplateLanguage::ALL
            .into_iter()
            .find(|l| l.key().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::arg(format!("unknown template language `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub id: TemplateId,
    pub language: TemplateLanguage,
    pub line_break: bool,
}

impl PromptTemplate {
    pub fn new(id: TemplateId, language: TemplateLanguage, line_break: bool) -> Self {
        PromptTemplate { id, language, line_break }
    }

    /// Template A, English phrases, no line break.
    pub fn default_a() -> Self {
        PromptTemplate::new(TemplateId::A, TemplateLanguage::English, false)
    }

    pub fn separator(&self) -> &'static str {
        if self.line_break {
            "\n"
        } else {
            " "
        }
    }
}

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate::default_a()
    }
}

impl fmt::Display for PromptTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:?}/{}/{}",
            self.id,
            self.language.key(),
            if self.line_break { "break" } else { "inline" }
        )
    }
}

/// Ordered examples prepended to the test input. The prompt pair may differ
/// from the test pair in transfer settings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demonstration {
    examples: Vec<ParallelExample>,
    prompt_pair: LanguagePair,
}

impl Demonstration {
    pub fn new(prompt_pair: LanguagePair, examples: Vec<ParallelExample>) -> Result<Self> {
        if let Some(bad) = examples.iter().find(|e| e.pair != prompt_pair) {
            return Err(Error::arg(format!(
                "example `{}` is {} but the demonstration is {}",
                bad.id, bad.pair, prompt_pair
            )));
        }
        Ok(Demonstration { examples, prompt_pair })
    }

    pub fn empty(prompt_pair: LanguagePair) -> Self {
        Demonstration {
            examples: Vec::new(),
            prompt_pair,
        }
    }

    pub fn examples(&self) -> &[ParallelExample] {
        &self.examples
    }

    pub fn prompt_pair(&self) -> &LanguagePair {
        &self.prompt_pair
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OneSided {
    SourceOnly,
    TargetOnly,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Phrases {
    pub colon: String,
    pub translate_to: String,
    pub translate_from_to: String,
}

/// Display names per (language code, template language) and the localized
/// instruction phrases. Loaded from TOML so new languages need no code.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LanguageNameTable {
    phrases: BTreeMap<TemplateLanguage, Phrases>,
    names: BTreeMap<LangCode, BTreeMap<TemplateLanguage, String>>,
}

const BUILTIN_TABLE: &str = include_str!("../data/languages.toml");

impl LanguageNameTable {
    /// The table shipped with the crate (en, de, zh, fr).
    pub fn builtin() -> &'static LanguageNameTable {
        static TABLE: OnceLock<LanguageNameTable> = OnceLock::new();
        TABLE.get_or_init(|| LanguageNameTable::from_toml_str(BUILTIN_TABLE).expect("builtin language table is valid"))
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let table: LanguageNameTable = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        table.validate()?;
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&s)
    }

    /// Adds or replaces a language; `names` must cover every template language.
    pub fn with_language(mut self, code: LangCode, names: BTreeMap<TemplateLanguage, String>) -> Result<Self> {
        self.names.insert(code, names);
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        for tl in TemplateLanguage::ALL {
            let p = self
                .phrases
                .get(&tl)
                .ok_or_else(|| Error::Config(format!("no phrases for template language {}", tl.key())))?;
            if !p.translate_to.contains("{tgt}")
                || !p.translate_from_to.contains("{src}")
                || !p.translate_from_to.contains("{tgt}")
            {
                return Err(Error::Config(format!(
                    "phrases for {} must contain {{src}}/{{tgt}} placeholders",
                    tl.key()
                )));
            }
        }
        for (code, names) in &self.names {
            for tl in TemplateLanguage::ALL {
                match names.get(&tl) {
                    Some(n) if !n.trim().is_empty() => {}
                    _ => {
                        return Err(Error::Config(format!(
                            "language `{code}` has no {} display name",
                            tl.key()
                        )))
                    }
                }
            }
        }
        Ok(())
    }

    pub fn name(&self, code: &LangCode, language: TemplateLanguage) -> Result<&str> {
        self.names
            .get(code)
            .and_then(|m| m.get(&language))
            .map(String::as_str)
            .ok_or_else(|| Error::Config(format!("no display name for language `{code}`")))
    }

    pub fn phrases(&self, language: TemplateLanguage) -> &Phrases {
        &self.phrases[&language]
    }

    pub fn languages(&self) -> impl Iterator<Item = &LangCode> {
        self.names.keys()
    }
}

/// Renders prompts against a language table.
#[derive(Debug, Clone, Copy)]
pub struct Renderer<'a> {
    table: &'a LanguageNameTable,
}

impl Default for Renderer<'static> {
    fn default() -> Self {
        Renderer {
            table: LanguageNameTable::builtin(),
        }
    }
}

impl<'a> Renderer<'a> {
    pub fn new(table: &'a LanguageNameTable) -> Self {
        Renderer { table }
    }

    /// `"German:"`, the label that opens a source or target block.
    pub fn label(&self, t: &PromptTemplate, lang: &LangCode) -> Result<String> {
        let name = self.table.name(lang, t.language)?;
        Ok(format!("{name}{}", self.table.phrases(t.language).colon))
    }

    /// The string a model would emit when it starts another example block.
    /// Used as a stop sequence.
    pub fn source_cue(&self, t: &PromptTemplate, pair: &LanguagePair) -> Result<String> {
        self.label(t, pair.src())
    }

    fn target_cue(&self, t: &PromptTemplate, pair: &LanguagePair) -> Result<String> {
        let phrases = self.table.phrases(t.language);
        let tgt = self.table.name(pair.tgt(), t.language)?;
        let cue = match t.id {
            TemplateId::A | TemplateId::B => return self.label(t, pair.tgt()),
            TemplateId::C | TemplateId::E => phrases.translate_to.replace("{tgt}", tgt),
            TemplateId::D | TemplateId::F => {
                let src = self.table.name(pair.src(), t.language)?;
                phrases.translate_from_to.replace("{src}", src).replace("{tgt}", tgt)
            }
        };
        Ok(format!("{cue}{}", phrases.colon))
    }

    /// The block up to and including the target cue and its trailing space.
    fn open_block(&self, t: &PromptTemplate, pair: &LanguagePair, input: &str) -> Result<String> {
        let mut out = String::new();
        if t.id.has_source_label() {
            out.push_str(&self.label(t, pair.src())?);
            out.push(' ');
        }
        out.push_str(input);
        out.push_str(t.separator());
        out.push_str(&self.target_cue(t, pair)?);
        out.push(' ');
        Ok(out)
    }

    pub fn render_zero_shot(&self, t: &PromptTemplate, pair: &LanguagePair, input: &str) -> Result<String> {
        if input.is_empty() {
            return Err(Error::arg("test input is empty"));
        }
        self.open_block(t, pair, input)
    }

    /// A completed demonstration block, including the trailing block separator.
    pub fn example_block(&self, t: &PromptTemplate, pair: &LanguagePair, ex: &ParallelExample) -> Result<String> {
        let mut block = self.open_block(t, pair, &ex.source_text)?;
        block.push_str(&ex.target_text);
        block.push_str(t.separator());
        Ok(block)
    }

    /// The completed one-example demonstration, without trailing separator.
    /// This is the text scored for the LM-likelihood feature.
    pub fn completed_example(&self, t: &PromptTemplate, ex: &ParallelExample) -> Result<String> {
        let mut block = self.open_block(t, &ex.pair, &ex.source_text)?;
        block.push_str(&ex.target_text);
        Ok(block)
    }

    pub fn render_few_shot(
        &self,
        t: &PromptTemplate,
        test_pair: &LanguagePair,
        demo: &Demonstration,
        input: &str,
    ) -> Result<String> {
        let mut out = String::new();
        for ex in demo.examples() {
            out.push_str(&self.example_block(t, demo.prompt_pair(), ex)?);
        }
        out.push_str(&self.render_zero_shot(t, test_pair, input)?);
        Ok(out)
    }

    /// Demonstration of monolingual sentences, each as a single labeled block.
    pub fn render_one_sided(
        &self,
        t: &PromptTemplate,
        test_pair: &LanguagePair,
        mono: &[MonolingualExample],
        side: OneSided,
        input: &str,
    ) -> Result<String> {
        let expected = match side {
            OneSided::SourceOnly => test_pair.src(),
            OneSided::TargetOnly => test_pair.tgt(),
        };
        let mut out = String::new();
        for m in mono {
            if &m.lang != expected {
                return Err(Error::arg(format!(
                    "{side:?} demonstration for {test_pair} needs `{expected}` text, `{}` is `{}`",
                    m.id, m.lang
                )));
            }
            out.push_str(&self.label(t, &m.lang)?);
            out.push(' ');
            out.push_str(&m.text);
            out.push_str(t.separator());
        }
        out.push_str(&self.render_zero_shot(t, test_pair, input)?);
        Ok(out)
    }
}

pub fn render_zero_shot(t: &PromptTemplate, pair: &LanguagePair, input: &str) -> Result<String> {
    Renderer::default().render_zero_shot(t, pair, input)
}

pub fn render_few_shot(t: &PromptTemplate, test_pair: &LanguagePair, demo: &Demonstration, input: &str) -> Result<String> {
    Renderer::default().render_few_shot(t, test_pair, demo, input)
}

pub fn render_one_sided(
    t: &PromptTemplate,
    test_pair: &LanguagePair,
    mono: &[MonolingualExample],
    side: OneSided,
    input: &str,
) -> Result<String> {
    Renderer::default().render_one_sided(t, test_pair, mono, side, input)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pair(s: &str) -> LanguagePair {
        LanguagePair::parse(s).unwrap()
    }

    fn t(id: TemplateId, line_break: bool) -> PromptTemplate {
        PromptTemplate::new(id, TemplateLanguage::English, line_break)
    }

    fn ex(id: &str, s: &str, tg: &str, p: &str) -> ParallelExample {
        ParallelExample::new(id, s, tg, pair(p)).unwrap()
    }

    #[test]
    fn template_a_inline_and_broken() {
        assert_eq!(
            render_zero_shot(&t(TemplateId::A, false), &pair("de-en"), "Hallo Welt").unwrap(),
            "German: Hallo Welt English: "
        );
        assert_eq!(
            render_zero_shot(&t(TemplateId::A, true), &pair("de-en"), "Hallo Welt").unwrap(),
            "German: Hallo Welt\nEnglish: "
        );
    }

    #[test]
    fn template_d_instruction() {
        assert_eq!(
            render_zero_shot(&t(TemplateId::D, false), &pair("en-zh"), "Hi").unwrap(),
            "Hi Translate from English to Chinese: "
        );
    }

    #[test]
    fn chinese_template_a_uses_fullwidth_colon() {
        let tpl = PromptTemplate::new(TemplateId::A, TemplateLanguage::Chinese, false);
        assert_eq!(render_zero_shot(&tpl, &pair("zh-en"), "X").unwrap(), "中文： X 英文： ");
    }

    #[test]
    fn few_shot_one_example() {
        let demo = Demonstration::new(pair("de-en"), vec![ex("1", "Hallo", "Hello", "de-en")]).unwrap();
        assert_eq!(
            render_few_shot(&t(TemplateId::A, false), &pair("de-en"), &demo, "Danke").unwrap(),
            "German: Hallo English: Hello German: Danke English: "
        );
    }

    #[test]
    fn few_shot_zero_examples_is_zero_shot() {
        let tpl = t(TemplateId::E, true);
        let demo = Demonstration::empty(pair("de-en"));
        assert_eq!(
            render_few_shot(&tpl, &pair("de-en"), &demo, "Danke").unwrap(),
            render_zero_shot(&tpl, &pair("de-en"), "Danke").unwrap()
        );
    }

    #[test]
    fn few_shot_keeps_list_order() {
        let demo = Demonstration::new(
            pair("de-en"),
            vec![ex("1", "Eins", "One", "de-en"), ex("2", "Zwei", "Two", "de-en")],
        )
        .unwrap();
        let out = render_few_shot(&t(TemplateId::A, false), &pair("de-en"), &demo, "Drei").unwrap();
        assert_eq!(out, "German: Eins English: One German: Zwei English: Two German: Drei English: ");
    }

    #[test]
    fn cross_lingual_demo_uses_prompt_pair_labels() {
        let demo = Demonstration::new(pair("zh-en"), vec![ex("1", "你好", "Hello", "zh-en")]).unwrap();
        let out = render_few_shot(&t(TemplateId::A, false), &pair("de-en"), &demo, "Danke").unwrap();
        assert_eq!(out, "Chinese: 你好 English: Hello German: Danke English: ");
    }

    #[test]
    fn demonstration_rejects_mixed_pairs() {
        assert!(Demonstration::new(pair("de-en"), vec![ex("1", "a", "b", "en-de")]).is_err());
    }

    #[test]
    fn one_sided_source_block() {
        let mono = [MonolingualExample::new("m1", "Hallo", "de".parse().unwrap()).unwrap()];
        let out = render_one_sided(&t(TemplateId::A, false), &pair("de-en"), &mono, OneSided::SourceOnly, "Danke").unwrap();
        assert_eq!(out, "German: Hallo German: Danke English: ");
        let tgt = [MonolingualExample::new("m2", "Hello", "en".parse().unwrap()).unwrap()];
        let out = render_one_sided(&t(TemplateId::A, true), &pair("de-en"), &tgt, OneSided::TargetOnly, "Danke").unwrap();
        assert_eq!(out, "English: Hello\nGerman: Danke\nEnglish: ");
    }

    #[test]
    fn one_sided_empty_and_mismatch() {
        let tpl = t(TemplateId::A, false);
        assert_eq!(
            render_one_sided(&tpl, &pair("de-en"), &[], OneSided::TargetOnly, "Danke").unwrap(),
            "German: Danke English: "
        );
        let mono = [MonolingualExample::new("m1", "Hallo", "de".parse().unwrap()).unwrap()];
        assert!(render_one_sided(&tpl, &pair("de-en"), &mono, OneSided::TargetOnly, "Danke").is_err());
    }

    #[test]
    fn unknown_language_is_a_config_error() {
        let p = LanguagePair::new("sw".parse().unwrap(), "en".parse().unwrap()).unwrap();
        assert!(matches!(render_zero_shot(&t(TemplateId::A, false), &p, "x"), Err(Error::Config(_))));
        assert!(render_zero_shot(&t(TemplateId::A, false), &pair("de-en"), "").is_err());
    }

    #[test]
    fn table_can_be_extended() {
        let names = TemplateLanguage::ALL
            .into_iter()
            .zip(["Swahili", "Suaheli", "斯瓦希里文"])
            .map(|(l, n)| (l, n.to_string()))
            .collect();
        let table = LanguageNameTable::builtin()
            .clone()
            .with_language("sw".parse().unwrap(), names)
            .unwrap();
        let p = LanguagePair::new("sw".parse().unwrap(), "en".parse().unwrap()).unwrap();
        assert_eq!(
            Renderer::new(&table).render_zero_shot(&t(TemplateId::B, false), &p, "Habari").unwrap(),
            "Habari English: "
        );
    }

    #[test]
    fn partial_table_rejected() {
        let bad = BUILTIN_TABLE.replace("chinese = \"法文\"\n", "");
        assert!(matches!(LanguageNameTable::from_toml_str(&bad), Err(Error::Config(_))));
    }

    fn any_template() -> impl Strategy<Value = PromptTemplate> {
        (0usize..6, 0usize..3, any::<bool>())
            .prop_map(|(i, l, b)| PromptTemplate::new(TemplateId::ALL[i], TemplateLanguage::ALL[l], b))
    }

    proptest! {
        #[test]
        fn input_appears_exactly_once(tpl in any_template(), input in "[a-z]{1,8}( [a-z]{1,8}){0,4}", rev in any::<bool>()) {
            let p = if rev { pair("zh-de") } else { pair("de-zh") };
            let out = render_zero_shot(&tpl, &p, &input).unwrap();
            // pad so the input is matched as a whole token run
            let hits = format!(" {out} ").matches(&format!(" {input}{}", tpl.separator())).count();
            prop_assert_eq!(hits, 1);
            prop_assert!(out.ends_with(": ") || out.ends_with("： "));
        }

        #[test]
        fn few_shot_is_pure_concatenation(tpl in any_template(), k in 0usize..6) {
            let r = Renderer::default();
            let p = pair("en-de");
            let examples: Vec<_> = (0..k).map(|i| ex(&i.to_string(), &format!("src {i}"), &format!("tgt {i}"), "en-de")).collect();
            let blocks: usize = examples.iter().map(|e| r.example_block(&tpl, &p, e).unwrap().len()).sum();
            let demo = Demonstration::new(p.clone(), examples).unwrap();
            let out = r.render_few_shot(&tpl, &p, &demo, "input text").unwrap();
            prop_assert_eq!(out.len(), blocks + r.render_zero_shot(&tpl, &p, "input text").unwrap().len());
            prop_assert_eq!(out.clone(), r.render_few_shot(&tpl, &p, &demo, "input text").unwrap());
        }

        #[test]
        fn reversing_direction_swaps_names(idx in 0usize..4, l in 0usize..3, b in any::<bool>()) {
            let id = [TemplateId::A, TemplateId::D, TemplateId::E, TemplateId::F][idx];
            let tpl = PromptTemplate::new(id, TemplateLanguage::ALL[l], b);
            let table = LanguageNameTable::builtin();
            let (de, en) = (table.name(&"de".parse().unwrap(), tpl.language).unwrap(), table.name(&"en".parse().unwrap(), tpl.language).unwrap());
            let fwd = render_zero_shot(&tpl, &pair("de-en"), "INPUT").unwrap();
            let back = render_zero_shot(&tpl, &pair("en-de"), "INPUT").unwrap();
            let swapped = fwd.replace(de, "\u{1}").replace(en, de).replace('\u{1}', en);
            prop_assert_eq!(swapped, back);
        }
    }
}
