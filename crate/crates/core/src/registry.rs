//! Name-keyed lookup tables for the interchangeable strategies.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Maps configuration names to constructors (or any other value) of one
/// strategy family.
#[derive(Clone, Debug)]
pub struct Registry<T> {
    family: &'static str,
    entries: BTreeMap<&'static str, T>,
}

impl<T> Registry<T> {
    pub fn new(family: &'static str) -> Self {
        Self {
            family,
            entries: BTreeMap::new(),
        }
    }

    /// Registers `value` under `name`, replacing any previous entry.
    pub fn register(&mut self, name: &'static str, value: T) -> &mut Self {
        self.entries.insert(name, value);
        self
    }

    pub fn get(&self, name: &str) -> Result<&T> {
        self.entries.get(name).ok_or_else(|| Error::UnknownName {
            family: self.family,
            name: name.to_string(),
            known: self.names().join(", "),
        })
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.keys().copied().collect()
    }

    pub fn family(&self) -> &'static str {
        self.family
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lookup_and_unknown_names() {
        let mut r: Registry<fn() -> u32> = Registry::new("thing");
        r.register("one", || 1).register("two", || 2);
        assert_eq!((r.get("two").unwrap())(), 2);
        assert_eq!(r.names(), vec!["one", "two"]);
        match r.get("three") {
            Err(Error::UnknownName { family, known, .. }) => {
                assert_eq!(family, "thing");
                assert_eq!(known, "one, two");
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
