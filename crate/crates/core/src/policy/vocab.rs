use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::{tokenize, HarmCategory, RUBRIC, SECTION_HEADERS};

pub const BOS: &str = "<bos>";
pub const EOS: &str = "<eos>";

/// Tokens every vocabulary starts with, in id order: control tokens, prompt
/// markers, document structure and judgement words.
pub fn structural_tokens() -> Vec<String> {
    let mut t: Vec<String> = [BOS, EOS, "<task>", "<image>", "<text>"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    t.extend(SECTION_HEADERS.iter().map(|s| s.to_string()));
    t.extend(HarmCategory::ALL.iter().map(|c| format!("{}:", c.name())));
    t.extend(
        [
            "Applicable",
            "Not",
            "applicable",
            "The",
            "image's",
            "label",
            "is",
            "harmful",
            "nonharmful",
        ]
        .iter()
        .map(|s| s.to_string()),
    );
    t.extend(tokenize(RUBRIC));
    let mut seen = std::collections::HashSet::new();
    t.retain(|s| seen.insert(s.clone()));
    t
}

/// Bijection between token strings and dense ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl From<Vec<String>> for Vocab {
    fn from(tokens: Vec<String>) -> Self {
        let mut v = Vocab {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for t in tokens {
            v.push(t);
        }
        v
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}

impl Vocab {
    /// Structural tokens followed by the given content tokens (deduplicated).
    pub fn with_content<I, S>(content: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Vocab::from(structural_tokens());
        for t in content {
            v.push(t.into());
        }
        v
    }

    fn push(&mut self, token: String) {
        if !self.index.contains_key(&token) {
            self.index.insert(token.clone(), self.tokens.len() as u32);
            self.tokens.push(token);
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Result<u32> {
        self.index
            .get(token)
            .copied()
            .ok_or_else(|| Error::OutOfVocabulary(token.to_string()))
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Result<Vec<u32>> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    pub fn decode(&self, ids: &[u32]) -> Vec<String> {
        ids.iter().map(|&i| self.token(i).to_string()).collect()
    }

    pub fn bos(&self) -> u32 {
        self.index[BOS]
    }

    pub fn eos(&self) -> u32 {
        self.index[EOS]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn structural_prefix_and_lookup() {
        let v = Vocab::with_content(["dog", "dog", "fire"]);
        assert_eq!(v.token(0), BOS);
        assert_eq!(v.token(1), EOS);
        assert_eq!(v.len(), structural_tokens().len() + 2);
        assert_eq!(
            v.decode(&v.encode(&["dog", "."]).unwrap()),
            vec!["dog", "."]
        );
        assert!(matches!(v.id("zebra"), Err(Error::OutOfVocabulary(_))));
    }

    #[test]
    fn serde_round_trip() {
        let v = Vocab::with_content(["x"]);
        let json = serde_json::to_string(&v).unwrap();
        assert_eq!(serde_json::from_str::<Vocab>(&json).unwrap(), v);
    }
}
