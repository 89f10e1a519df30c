use serde::{Deserialize, Serialize};

use super::{tokenize, MemeRecord};
use crate::error::{Error, Result};

/// Registered prompt templates. `image-only` and `text-only` drop one
/// modality and exist for single-modality comparisons.
pub const TEMPLATES: [&str; 3] = ["default", "image-only", "text-only"];

pub const TASK_TOKEN: &str = "<task>";
pub const IMAGE_TOKEN: &str = "<image>";
pub const TEXT_TOKEN: &str = "<text>";

/// Tokens presented to the policy as conditioning context.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub template_id: String,
    pub rendered_tokens: Vec<String>,
}

pub fn render_prompt(record: &MemeRecord, template_id: &str) -> Result<PromptSpec> {
    let (image, text) = match template_id {
        "default" => (true, true),
        "image-only" => (true, false),
        "text-only" => (false, true),
        other => {
            return Err(Error::Config(format!(
                "unknown prompt template `{other}` (known: {})",
                TEMPLATES.join(", ")
            )))
        }
    };
    let mut tokens = vec![TASK_TOKEN.to_string()];
    if image {
        tokens.push(IMAGE_TOKEN.to_string());
        tokens.extend(record.image_tokens.iter().cloned());
    }
    if text {
        tokens.push(TEXT_TOKEN.to_string());
        tokens.extend(tokenize(&record.text));
    }
    Ok(PromptSpec {
        template_id: template_id.to_string(),
        rendered_tokens: tokens,
    })
}
