//! Renders one test input under every template in zero- and few-shot form.

use mtprompt::template::{render_few_shot, render_zero_shot};
use mtprompt::{Demonstration, LanguagePair, ParallelExample, PromptTemplate, TemplateId, TemplateLanguage};

fn main() -> mtprompt::Result<()> {
    let pair = LanguagePair::parse("de-en")?;
    let demo = Demonstration::new(
        pair.clone(),
        vec![
            ParallelExample::new("d1", "Das Haus ist klein.", "The house is small.", pair.clone())?,
            ParallelExample::new("d2", "Ich trinke Tee.", "I drink tea.", pair.clone())?,
        ],
    )?;
    let input = "Der Hund schläft.";

    for id in TemplateId::ALL {
        let t = PromptTemplate::new(id, TemplateLanguage::English, false);
        println!("--- template {id:?}");
        println!("{:?}", render_zero_shot(&t, &pair, input)?);
    }

    for language in TemplateLanguage::ALL {
        let t = PromptTemplate::new(TemplateId::A, language, true);
        println!("--- A / {language:?} / line break, K=2");
        println!("{}", render_few_shot(&t, &pair, &demo, input)?);
    }
    Ok(())
}
