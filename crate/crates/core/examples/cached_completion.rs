//! Generation, log-likelihood scoring and embeddings through an on-disk
//! response cache.

use mtprompt::backend::{Backend, CachedBackend, GenerationRequest};
use mtprompt::{LangCode, MockBackend};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let mock = || MockBackend::new().with_generation("German: Guten Tag English: ", "Good day\nGerman: Tschüss");
    let request = GenerationRequest::new("German: Guten Tag English: ").with_stops(["\n".into(), "German:".into()]);

    let cold = CachedBackend::new(mock(), dir.path())?;
    let g = cold.generate(&request)?;
    let s = cold.score_loglikelihood("German: Guten Tag English: Good day")?;
    let e = cold.embed("Guten Tag", &LangCode::new("de")?)?;
    println!("generated {:?} ({} tokens)", g.text, g.tokens_generated);
    println!("log-likelihood {:.3} over {} tokens", s.total_logprob, s.token_count);
    println!("embedding dim {}", e.dim());
    println!("cold: {:?}, backend calls {}", cold.stats(), cold.inner().calls().total());

    let warm = CachedBackend::new(mock(), dir.path())?;
    assert_eq!(warm.generate(&request)?.text, g.text);
    warm.score_loglikelihood("German: Guten Tag English: Good day")?;
    warm.embed("Guten Tag", &LangCode::new("de")?)?;
    println!("warm: {:?}, backend calls {}", warm.stats(), warm.inner().calls().total());
    Ok(())
}
