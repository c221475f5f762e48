use crate::backend::{Backend, GenerationRequest, GenerationResult};
use crate::corpus::LanguagePair;
use crate::error::Result;
use crate::template::{PromptTemplate, Renderer};

/// Beam 2, stopping at a newline or at the next source cue.
pub fn translation_request(renderer: &Renderer<'_>, t: &PromptTemplate, pair: &LanguagePair, prompt: String) -> Result<GenerationRequest> {
    let cue = renderer.source_cue(t, pair)?;
    Ok(GenerationRequest::new(prompt).with_stops(["\n".to_string(), cue]))
}

/// Generates a translation for a fully rendered prompt. Surrounding
/// whitespace is removed from the returned text.
pub fn translate(
    backend: &dyn Backend,
    renderer: &Renderer<'_>,
    t: &PromptTemplate,
    pair: &LanguagePair,
    prompt: String,
) -> Result<GenerationResult> {
    let req = translation_request(renderer, t, pair, prompt)?;
    let mut out = backend.generate(&req)?;
    let trimmed = out.text.trim();
    if trimmed.len() != out.text.len() {
        out.text = trimmed.to_string();
    }
    Ok(out)
}

/// Zero-shot translation of a single sentence.
pub fn translate_zero_shot(
    backend: &dyn Backend,
    renderer: &Renderer<'_>,
    t: &PromptTemplate,
    pair: &LanguagePair,
    input: &str,
) -> Result<GenerationResult> {
    let prompt = renderer.render_zero_shot(t, pair, input)?;
    translate(backend, renderer, t, pair, prompt)
}
