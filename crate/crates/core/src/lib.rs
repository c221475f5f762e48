//! Prompt construction, demonstration selection and evaluation for
//! few-shot machine translation with large language models.

pub mod augment;
pub mod backend;
pub mod corpus;
pub mod decode;
pub mod error;
pub mod features;
pub mod metrics;
mod par;
pub mod runner;
pub mod sampling;
pub mod selection;
pub mod template;

pub use backend::{Backend, BackendError, CachedBackend, GenerationRequest, HttpBackend, MockBackend};
pub use corpus::{ExamplePool, LangCode, LanguagePair, ParallelExample};
pub use error::{Error, Result};
pub use template::{Demonstration, PromptTemplate, TemplateId, TemplateLanguage};
