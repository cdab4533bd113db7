//! Name/id keyed registries of interchangeable strategies.
//!
//! Transforms, latent entropy models and motion estimators are each selected
//! at runtime: by name from the command line, by numeric id from a stream
//! header.

use std::sync::Arc;

use crate::error::Error;

/// Identity shared by every registrable strategy.
pub trait Strategy: Send + Sync {
    /// Stable lowercase name used on the command line.
    fn name(&self) -> &'static str;
    /// Stable numeric id written into stream headers.
    fn id(&self) -> u8;
    fn description(&self) -> &'static str {
        ""
    }
}

pub struct Registry<T: ?Sized + Strategy> {
    kind: &'static str,
    entries: Vec<Arc<T>>,
}

impl<T: ?Sized + Strategy> Registry<T> {
    pub fn new(kind: &'static str) -> Self {
        Self { kind, entries: Vec::new() }
    }

    /// Adds a strategy. Names and ids must both be unique.
    pub fn register(&mut self, entry: Arc<T>) -> Result<(), Error> {
        if let Some(clash) = self.entries.iter().find(|e| e.name() == entry.name() || e.id() == entry.id()) {
            return Err(Error::Input(format!(
                "{} '{}' (id {}) clashes with registered '{}' (id {})",
                self.kind,
                entry.name(),
                entry.id(),
                clash.name(),
                clash.id()
            )));
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn by_name(&self, name: &str) -> Result<Arc<T>, Error> {
        self.entries
            .iter()
            .find(|e| e.name() == name)
            .cloned()
            .ok_or_else(|| Error::UnknownStrategy { kind: self.kind, name: name.to_string() })
    }

    pub fn by_id(&self, id: u8) -> Result<Arc<T>, Error> {
        self.entries
            .iter()
            .find(|e| e.id() == id)
            .cloned()
            .ok_or_else(|| Error::UnknownStrategy { kind: self.kind, name: format!("#{id}") })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|e| e.name()).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Arc<T>> {
        self.entries.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Dummy(&'static str, u8);
    impl Strategy for Dummy {
        fn name(&self) -> &'static str {
            self.0
        }
        fn id(&self) -> u8 {
            self.1
        }
    }

    #[test]
    fn lookup_and_clash() {
        let mut r: Registry<dyn Strategy> = Registry::new("dummy");
        r.register(Arc::new(Dummy("a", 0))).unwrap();
        r.register(Arc::new(Dummy("b", 1))).unwrap();
        assert!(r.register(Arc::new(Dummy("a", 7))).is_err());
        assert!(r.register(Arc::new(Dummy("c", 1))).is_err());
        assert_eq!(r.by_name("b").unwrap().id(), 1);
        assert_eq!(r.by_id(0).unwrap().name(), "a");
        assert!(matches!(r.by_name("zzz"), Err(Error::UnknownStrategy { .. })));
        assert_eq!(r.names(), vec!["a", "b"]);
    }
}
