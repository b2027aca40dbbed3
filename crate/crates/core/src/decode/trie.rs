use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::Result;
use crate::text::{BiasingList, CharVocab};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct Node {
    children: BTreeMap<usize, usize>,
    terminal: bool,
    depth: usize,
}

/// Prefix tree over the token sequences of biasing entries. Node 0 is the root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BiasingTrie {
    nodes: Vec<Node>,
}

impl Default for BiasingTrie {
    fn default() -> Self {
        Self { nodes: vec![Node::default()] }
    }
}

impl BiasingTrie {
    pub const ROOT: usize = 0;

    pub fn build(list: &BiasingList, vocab: &CharVocab) -> Result<Self> {
        let mut t = Self::default();
        for (i, e) in list.entries().iter().enumerate() {
            let tokens = e
                .split_whitespace()
                .enumerate()
                .try_fold(Vec::new(), |mut acc, (w, word)| {
                    if w > 0 {
                        acc.push(CharVocab::SEPARATOR);
                    }
                    acc.extend(vocab.encode_entry(i, word)?);
                    Ok::<_, crate::Error>(acc)
                })?;
            t.insert(&tokens);
        }
        Ok(t)
    }

    pub fn insert(&mut self, tokens: &[usize]) {
        if tokens.is_empty() {
            return;
        }
        let mut cur = Self::ROOT;
        for &tok in tokens {
            cur = match self.nodes[cur].children.get(&tok) {
                Some(&n) => n,
                None => {
                    let depth = self.nodes[cur].depth + 1;
                    self.nodes.push(Node { depth, ..Default::default() });
                    let n = self.nodes.len() - 1;
                    self.nodes[cur].children.insert(tok, n);
                    n
                }
            };
        }
        self.nodes[cur].terminal = true;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.len() == 1
    }

    pub fn child(&self, node: usize, token: usize) -> Option<usize> {
        self.nodes[node].children.get(&token).copied()
    }

    pub fn is_terminal(&self, node: usize) -> bool {
        self.nodes[node].terminal
    }

    /// Tokens on the path from the root to `node`.
    pub fn depth(&self, node: usize) -> usize {
        self.nodes[node].depth
    }

    /// Node reached by walking `tokens` from the root.
    pub fn walk(&self, tokens: &[usize]) -> Option<usize> {
        tokens.iter().try_fold(Self::ROOT, |n, &t| self.child(n, t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::String;

    fn list(words: &[&str]) -> BiasingList {
        BiasingList::new(words.iter().map(|w| String::from(*w)).collect()).unwrap()
    }

    #[test]
    fn construction() {
        let v = CharVocab;
        assert!(BiasingTrie::build(&BiasingList::empty(), &v).unwrap().is_empty());
        let t = BiasingTrie::build(&list(&["ab", "ac"]), &v).unwrap();
        assert_eq!(t.len(), 4);
        for w in ["ab", "ac"] {
            let n = t.walk(&v.encode(w).unwrap()).unwrap();
            assert!(t.is_terminal(n));
            assert_eq!(t.depth(n), 2);
        }
        let t = BiasingTrie::build(&list(&["new york"]), &v).unwrap();
        assert!(t.is_terminal(t.walk(&v.encode("new york").unwrap()).unwrap()));
        assert!(BiasingTrie::build(&list(&["ok", "n0pe"]), &v).is_err());
    }
}
