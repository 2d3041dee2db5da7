//! Whitespace/punctuation tokenizer over a fixed small vocabulary.

use std::collections::HashMap;

pub const BOS: &str = "<bos>";
pub const EOS: &str = "<eos>";
pub const SOH: &str = "<soh>";
pub const EOH: &str = "<eoh>";
pub const UNK: &str = "<unk>";

/// Token strings plus the special-token indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    lookup: HashMap<String, u32>,
    pub bos: u32,
    pub eos: u32,
    pub soh: u32,
    pub eoh: u32,
    pub unk: u32,
}

impl Vocabulary {
    /// Build a vocabulary from word tokens; the five specials are prepended.
    pub fn new(words: &[&str]) -> Self {
        let mut tokens: Vec<String> = vec![
            BOS.to_string(),
            EOS.to_string(),
            SOH.to_string(),
            EOH.to_string(),
            UNK.to_string(),
        ];
        for w in words {
            if !tokens.iter().any(|t| t == w) {
                tokens.push((*w).to_string());
            }
        }
        Self::from_parts(tokens, 0, 1, 2, 3, 4).expect("specials are in range")
    }

    pub fn from_parts(
        tokens: Vec<String>,
        bos: u32,
        eos: u32,
        soh: u32,
        eoh: u32,
        unk: u32,
    ) -> Result<Self, String> {
        let len = tokens.len() as u32;
        for (name, id) in [("bos", bos), ("eos", eos), ("soh", soh), ("eoh", eoh), ("unk", unk)] {
            if id >= len {
                return Err(format!("special token {name} id {id} out of range ({len} tokens)"));
            }
        }
        let lookup = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Ok(Self {
            tokens,
            lookup,
            bos,
            eos,
            soh,
            eoh,
            unk,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(|s| s.as_str())
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.lookup.get(token).copied()
    }

    pub fn is_special(&self, id: u32) -> bool {
        id == self.bos || id == self.eos || id == self.soh || id == self.eoh
    }

    /// Split into word and single-character punctuation tokens. Unknown
    /// words fall back to their lowercase form, then to `<unk>`.
    pub fn tokenize(&self, text: &str) -> Vec<u32> {
        let mut ids = Vec::new();
        let mut word = String::new();
        let flush = |word: &mut String, ids: &mut Vec<u32>| {
            if word.is_empty() {
                return;
            }
            let id = self
                .id(word)
                .or_else(|| self.id(&word.to_lowercase()))
                .unwrap_or(self.unk);
            ids.push(id);
            word.clear();
        };
        for ch in text.chars() {
            if ch.is_alphanumeric() || ch == '\'' {
                word.push(ch);
            } else if ch.is_whitespace() {
                flush(&mut word, &mut ids);
            } else {
                flush(&mut word, &mut ids);
                let mut buf = [0u8; 4];
                let s: &str = ch.encode_utf8(&mut buf);
                ids.push(self.id(s).unwrap_or(self.unk));
            }
        }
        flush(&mut word, &mut ids);
        ids
    }

    /// Render token ids as text. Specials are dropped; punctuation attaches
    /// to the preceding word.
    pub fn detokenize(&self, ids: &[u32]) -> String {
        let mut out = String::new();
        for &id in ids {
            if self.is_special(id) {
                continue;
            }
            let tok = self.token(id).unwrap_or(UNK);
            let is_punct = tok.chars().count() == 1
                && !tok.chars().next().is_some_and(|c| c.is_alphanumeric());
            if !out.is_empty() && !is_punct {
                out.push(' ');
            }
            out.push_str(tok);
        }
        out
    }
}
