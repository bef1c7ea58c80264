//! Name-keyed registries of interchangeable strategies.
//!
//! Each family (intensity shapes, Nash-Q update rules, bimatrix solvers)
//! owns one static `Registry<dyn Trait>`; configs and the CLI select an
//! implementation by name and pass it a bag of named scalars.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Named scalar parameters handed to a constructor.
pub type Scalars = BTreeMap<String, f64>;

pub struct Entry<T: ?Sized> {
    pub name: &'static str,
    pub summary: &'static str,
    pub build: fn(&Scalars) -> Result<Box<T>>,
}

pub struct Registry<T: ?Sized> {
    family: &'static str,
    entries: Vec<Entry<T>>,
}

impl<T: ?Sized> Registry<T> {
    pub fn new(family: &'static str) -> Self {
        Registry {
            family,
            entries: Vec::new(),
        }
    }

    /// Panics on a duplicate name: registries are assembled once at startup.
    pub fn with(mut self, entry: Entry<T>) -> Self {
        assert!(
            self.get(entry.name).is_none(),
            "duplicate {} '{}'",
            self.family,
            entry.name
        );
        self.entries.push(entry);
        self
    }

    pub fn family(&self) -> &'static str {
        self.family
    }

    pub fn get(&self, name: &str) -> Option<&Entry<T>> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|e| e.name).collect()
    }

    pub fn build(&self, name: &str, scalars: &Scalars) -> Result<Box<T>> {
        match self.get(name) {
            Some(e) => (e.build)(scalars),
            None => Err(Error::UnknownStrategy {
                family: self.family,
                name: name.to_string(),
                known: self.names().join(", "),
            }),
        }
    }
}

/// Fetch a required scalar.
pub fn require(scalars: &Scalars, key: &str) -> Result<f64> {
    scalars
        .get(key)
        .copied()
        .ok_or_else(|| Error::Config(format!("missing scalar '{key}'")))
}

/// Reject scalars a constructor does not understand.
pub fn only(scalars: &Scalars, allowed: &[&str]) -> Result<()> {
    match scalars.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(Error::Config(format!(
            "unexpected scalar '{k}' (expected one of: {})",
            allowed.join(", ")
        ))),
        None => Ok(()),
    }
}
