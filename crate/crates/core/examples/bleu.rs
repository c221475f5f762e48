//! Corpus BLEU with both tokenizers, sufficient statistics and document BLEU.

use mtprompt::metrics::{corpus_bleu_stats, doc_bleu, BleuConfig};
use mtprompt::LangCode;

fn main() -> mtprompt::Result<()> {
    let hyps = ["The cat sat on the mat.", "It is raining today."];
    let refs = ["The cat sat on a mat.", "It rains today."];
    let cfg = BleuConfig::for_target(&LangCode::new("en")?);
    let s = corpus_bleu_stats(&hyps, &refs, &cfg)?;
    println!("{}  BLEU {:.2}", cfg.signature(), s.score);
    println!("  matches {:?} / {:?}, BP {:.4}, sys {} ref {}", s.correct, s.total, s.brevity_penalty, s.sys_len, s.ref_len);

    let zh = BleuConfig::for_target(&LangCode::new("zh")?);
    let s = corpus_bleu_stats(&["我喜欢喝茶。"], &["我很喜欢喝茶。"], &zh)?;
    println!("{}  BLEU {:.2}", zh.signature(), s.score);

    let docs = vec![(
        vec!["The cat sat on the mat.", "It was happy."],
        vec!["The cat sat on a mat.", "It was happy."],
    )];
    println!("document BLEU {:.2}", doc_bleu(&docs, &cfg)?);
    Ok(())
}
