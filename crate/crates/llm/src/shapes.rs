//! Request and response bodies for the supported endpoint shapes.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApiShape {
    /// `{"prompt", "max_new_tokens"}` -> `{"text"}`.
    #[default]
    Minimal,
    /// OpenAI-style completions: `{"model", "prompt", "max_tokens"}` ->
    /// `{"choices": [{"text"}]}`.
    OpenaiCompletions,
    /// Text Generation Inference: `{"inputs", "parameters": {"max_new_tokens"}}`
    /// -> `{"generated_text"}` or `[{"generated_text"}]`.
    Tgi,
}

impl ApiShape {
    pub fn request(self, prompt: &str, max_new_tokens: u32, model: Option<&str>) -> Value {
        match self {
            ApiShape::Minimal => json!({"prompt": prompt, "max_new_tokens": max_new_tokens}),
            ApiShape::OpenaiCompletions => {
                let mut v = json!({"prompt": prompt, "max_tokens": max_new_tokens});
                if let Some(m) = model {
                    v["model"] = json!(m);
                }
                v
            }
            ApiShape::Tgi => json!({"inputs": prompt, "parameters": {"max_new_tokens": max_new_tokens}}),
        }
    }

    pub fn completion(self, body: &Value) -> Result<String, String> {
        let text = match self {
            ApiShape::Minimal => body.get("text"),
            ApiShape::OpenaiCompletions => body.pointer("/choices/0/text"),
            ApiShape::Tgi => body.get("generated_text").or_else(|| body.pointer("/0/generated_text")),
        };
        text.and_then(Value::as_str)
            .map(str::to_owned)
            .ok_or_else(|| "completion text field is missing or not a string".to_owned())
    }
}
