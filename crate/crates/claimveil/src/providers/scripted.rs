//! Deterministic scripted chat providers for offline campaigns and tests.
//!
//! Scripted providers are pure functions of the request: identical requests
//! always produce identical responses, which is what makes end-to-end replays
//! byte-stable.

use serde::{Deserialize, Serialize};

use super::{ChatProvider, ChatRequest, ProviderError};

/// One matching rule. A rule fires when every present pattern is a substring
/// of the corresponding request field. Rules are evaluated in order; the
/// first match wins.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChatRule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system_contains: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user_contains: Option<String>,
    pub response: String,
}

impl ChatRule {
    fn matches(&self, req: &ChatRequest) -> bool {
        let sys_ok = self
            .system_contains
            .as_ref()
            .is_none_or(|p| req.system_instructions.contains(p.as_str()));
        let user_ok =
            self.user_contains.as_ref().is_none_or(|p| req.user_content.contains(p.as_str()));
        sys_ok && user_ok
    }
}

/// The scripted behaviours.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChatScript {
    /// Return the user content verbatim.
    Echo,
    /// Return the user content with the listed tokens removed (whitespace
    /// collapsed afterwards). Used to script hedge-stripping simplifiers.
    StripTokens { tokens: Vec<String> },
    /// Pattern table with optional default response.
    Rules {
        rules: Vec<ChatRule>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        default: Option<String>,
    },
}

/// A [`ChatProvider`] driven by a [`ChatScript`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScriptedChat {
    pub name: String,
    pub script: ChatScript,
}

impl ScriptedChat {
    pub fn echo() -> Self {
        Self { name: "echo".into(), script: ChatScript::Echo }
    }

    pub fn strip_tokens(tokens: Vec<String>) -> Self {
        Self { name: "strip_tokens".into(), script: ChatScript::StripTokens { tokens } }
    }

    pub fn rules(rules: Vec<ChatRule>, default: Option<String>) -> Self {
        Self { name: "rules".into(), script: ChatScript::Rules { rules, default } }
    }

    /// Fixed response regardless of input.
    pub fn constant(response: impl Into<String>) -> Self {
        Self::rules(Vec::new(), Some(response.into()))
    }
}

impl ChatProvider for ScriptedChat {
    fn chat_complete(&self, req: &ChatRequest) -> Result<String, ProviderError> {
        match &self.script {
            ChatScript::Echo => Ok(req.user_content.clone()),
            ChatScript::StripTokens { tokens } => {
                let kept: Vec<&str> = req
                    .user_content
                    .split_whitespace()
                    .filter(|w| {
                        let bare = w.trim_matches(|c: char| !c.is_alphanumeric());
                        !tokens.iter().any(|t| bare.eq_ignore_ascii_case(t))
                    })
                    .collect();
                Ok(kept.join(" "))
            }
            ChatScript::Rules { rules, default } => rules
                .iter()
                .find(|r| r.matches(req))
                .map(|r| r.response.clone())
                .or_else(|| default.clone())
                .ok_or_else(|| {
                    ProviderError::MalformedResponse(format!(
                        "scripted chat {:?} has no rule for trace {:?}",
                        self.name, req.trace_id
                    ))
                }),
        }
    }

    fn identity(&self) -> String {
        format!("script:{}", self.name)
    }
}
