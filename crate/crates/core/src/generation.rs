use serde::{Deserialize, Serialize};

use crate::aggregation::MultilingualCandidateSet;
use crate::backends::{BackendClient, WireCandidate, WireError};
use crate::corpus_store::Question;
use crate::lang::Lang;

/// Prompt budget in characters, about four characters per token of a
/// 524-token generator input.
pub const DEFAULT_PROMPT_BUDGET: usize = 2096;
/// Output budget passed to the generator.
pub const DEFAULT_MAX_NEW_CHARS: usize = 100;

#[derive(Debug, thiserror::Error)]
pub enum GenerationError {
    #[error("prompt budget {budget} is too small for a {needed}-character question")]
    BudgetTooSmall { budget: usize, needed: usize },
    #[error("question {q_id}: generation failed: {source}")]
    Backend {
        q_id: String,
        #[source]
        source: WireError,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptFormat {
    pub prefix: String,
    pub separator: String,
}

impl Default for PromptFormat {
    fn default() -> Self {
        PromptFormat {
            prefix: "question: ".to_string(),
            separator: " [SEP] ".to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationSettings {
    pub prompt_budget: usize,
    pub max_new_chars: usize,
    pub format: PromptFormat,
}

impl Default for GenerationSettings {
    fn default() -> Self {
        GenerationSettings {
            prompt_budget: DEFAULT_PROMPT_BUDGET,
            max_new_chars: DEFAULT_MAX_NEW_CHARS,
            format: PromptFormat::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub text: String,
    /// Set when any candidate was cut short or left out to fit the budget.
    pub truncated: bool,
    /// Candidates as they appear in `text`, after truncation.
    pub candidates: Vec<WireCandidate>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedAnswer {
    pub text: String,
    pub lang: Lang,
    pub closed_book: bool,
}

/// `{prefix}{question}` followed by `{separator}{candidate}` for each
/// candidate in set order, cut to at most `budget` characters. The
/// candidate that crosses the budget is truncated and the rest dropped.
pub fn assemble_prompt(
    question: &str,
    m: &MultilingualCandidateSet,
    budget: usize,
    format: &PromptFormat,
) -> Result<Prompt, GenerationError> {
    let mut text = format!("{}{}", format.prefix, question);
    let mut used = text.chars().count();
    let sep_len = format.separator.chars().count();
    if budget <= used + sep_len {
        return Err(GenerationError::BudgetTooSmall {
            budget,
            needed: used + sep_len + 1,
        });
    }

    let mut truncated = false;
    let mut included = Vec::new();
    for c in &m.candidates {
        let len = c.text.chars().count();
        if used + sep_len + len <= budget {
            text.push_str(&format.separator);
            text.push_str(&c.text);
            used += sep_len + len;
            included.push(WireCandidate {
                text: c.text.clone(),
                lang: c.lang.to_string(),
            });
            continue;
        }
        truncated = true;
        let room = budget - used;
        if room > sep_len {
            let cut: String = c.text.chars().take(room - sep_len).collect();
            text.push_str(&format.separator);
            text.push_str(&cut);
            included.push(WireCandidate {
                text: cut,
                lang: c.lang.to_string(),
            });
        }
        break;
    }
    Ok(Prompt {
        text,
        truncated,
        candidates: included,
    })
}

/// Assemble the prompt and ask the generator. An empty candidate set runs
/// closed-book. The answer language is recorded, not checked.
pub async fn generate_answer(
    question: &Question,
    m: &MultilingualCandidateSet,
    client: &BackendClient,
    settings: &GenerationSettings,
) -> Result<(Prompt, GeneratedAnswer), GenerationError> {
    let prompt = assemble_prompt(&question.text, m, settings.prompt_budget, &settings.format)?;
    let answer = generate_from_prompt(question, &prompt, client, settings.max_new_chars).await?;
    Ok((prompt, answer))
}

/// Send an assembled prompt's candidates to the generator.
pub async fn generate_from_prompt(
    question: &Question,
    prompt: &Prompt,
    client: &BackendClient,
    max_new_chars: usize,
) -> Result<GeneratedAnswer, GenerationError> {
    let text = client
        .generate(&question.text, &prompt.candidates, &question.lang, max_new_chars)
        .await
        .map_err(|source| GenerationError::Backend {
            q_id: question.q_id.clone(),
            source,
        })?;
    Ok(GeneratedAnswer {
        text,
        lang: question.lang.clone(),
        closed_book: prompt.candidates.is_empty(),
    })
}
