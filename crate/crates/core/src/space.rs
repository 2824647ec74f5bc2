//! Named index spaces. A model declares one space holding every index that
//! appears anywhere; factors and observations each reference an ordered
//! subset by name.

use crate::{Error, Result};

/// An ordered set of named indices with their cardinalities.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexSpace {
    names: Vec<String>,
    cards: Vec<usize>,
}

impl IndexSpace {
    pub fn new<S: Into<String>>(pairs: impl IntoIterator<Item = (S, usize)>) -> Result<Self> {
        let mut names = Vec::new();
        let mut cards = Vec::new();
        for (name, card) in pairs {
            let name = name.into();
            if card == 0 {
                return Err(Error::InvalidIndexSpace(format!(
                    "index '{name}' has cardinality 0"
                )));
            }
            if names.contains(&name) {
                return Err(Error::InvalidIndexSpace(format!(
                    "duplicate index '{name}'"
                )));
            }
            names.push(name);
            cards.push(card);
        }
        Ok(Self { names, cards })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Position of `name` in declaration order.
    pub fn position(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn cardinality(&self, name: &str) -> Result<usize> {
        self.position(name)
            .map(|p| self.cards[p])
            .ok_or_else(|| Error::UnknownIndex(name.to_string()))
    }

    /// Cardinalities for an ordered list of index names.
    pub fn shape_of(&self, indices: &[String]) -> Result<Vec<usize>> {
        indices.iter().map(|n| self.cardinality(n)).collect()
    }
}
