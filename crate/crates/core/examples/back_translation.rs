//! Builds back-translated, forward-translated and random-pair
//! demonstrations from monolingual text.

use mtprompt::augment::{build_back_translated, build_forward_translated, build_random_pairs};
use mtprompt::corpus::MonolingualExample;
use mtprompt::{LanguagePair, MockBackend};

fn main() -> mtprompt::Result<()> {
    let pair = LanguagePair::parse("de-en")?;
    let mono = |lang: &str, texts: &[&str]| {
        let code = mtprompt::LangCode::new(lang)?;
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| MonolingualExample::new(format!("{lang}{i}"), *t, code.clone()))
            .collect::<mtprompt::Result<Vec<_>>>()
    };
    let de = mono("de", &["Ich lese ein Buch.", "Der Himmel ist blau.", "Wir gehen nach Hause."])?;
    let en = mono("en", &["I read a book.", "The sky is blue.", "We are going home."])?;

    // a toy translator that just tags its input
    let backend = MockBackend::new().with_responder(|req| {
        let body = req.prompt.split_once(": ")?.1.trim_end();
        Some(format!("<{}>", body.rsplit_once(' ')?.0))
    });
    let t = mtprompt::PromptTemplate::default_a();

    let show = |name: &str, d: &mtprompt::augment::AugmentedDemonstration| {
        println!("{name}:");
        for a in &d.examples {
            println!("  [{:?}] {} => {}", a.provenance, a.example.source_text, a.example.target_text);
        }
    };
    show("back-translated", &build_back_translated(&en, &pair, &t, &backend, 2, 7, 2)?);
    show("forward-translated", &build_forward_translated(&de, &pair, &t, &backend, 2, 7, 2)?);
    show("random pairs", &build_random_pairs(&de, &en, &pair, 2, 7)?);
    Ok(())
}
