use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Character vocabulary: blank (0), word separator (1), then `a..=z`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CharVocab;

impl CharVocab {
    pub const BLANK: usize = 0;
    pub const SEPARATOR: usize = 1;
    pub const SIZE: usize = 28;

    pub fn size(&self) -> usize {
        Self::SIZE
    }

    pub fn token(&self, c: char) -> Option<usize> {
        match c {
            ' ' => Some(Self::SEPARATOR),
            'a'..='z' => Some(c as usize - 'a' as usize + 2),
            _ => None,
        }
    }

    pub fn symbol(&self, token: usize) -> Option<char> {
        match token {
            Self::SEPARATOR => Some(' '),
            2..=27 => Some((b'a' + (token - 2) as u8) as char),
            _ => None,
        }
    }

    /// Tokens of a single entry; `index` names the entry in errors.
    pub fn encode_entry(&self, index: usize, entry: &str) -> Result<Vec<usize>> {
        entry
            .chars()
            .map(|c| {
                self.token(c).ok_or_else(|| Error::Tokenize {
                    index,
                    entry: entry.into(),
                    symbol: c,
                })
            })
            .collect()
    }

    /// Tokens of a transcript, words joined by the separator.
    pub fn encode(&self, text: &str) -> Result<Vec<usize>> {
        let mut out = Vec::new();
        for (i, w) in text.split_whitespace().enumerate() {
            if i > 0 {
                out.push(Self::SEPARATOR);
            }
            out.extend(self.encode_entry(0, w)?);
        }
        Ok(out)
    }

    /// Text of a token sequence; blanks and unknown ids are skipped and
    /// repeated separators collapse.
    pub fn decode(&self, tokens: &[usize]) -> String {
        let mut s = String::new();
        for &t in tokens {
            if let Some(c) = self.symbol(t) {
                if c == ' ' && (s.is_empty() || s.ends_with(' ')) {
                    continue;
                }
                s.push(c);
            }
        }
        while s.ends_with(' ') {
            s.pop();
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let v = CharVocab;
        let t = v.encode("meet klein").unwrap();
        assert_eq!(t.len(), 10);
        assert_eq!(t[4], CharVocab::SEPARATOR);
        assert_eq!(v.decode(&t), "meet klein");
    }

    #[test]
    fn unknown_symbol_names_entry() {
        match CharVocab.encode_entry(3, "ab9") {
            Err(Error::Tokenize { index, symbol, .. }) => {
                assert_eq!(index, 3);
                assert_eq!(symbol, '9');
            }
            other => panic!("{other:?}"),
        }
    }
}
