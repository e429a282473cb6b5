//! Name-keyed registries of interchangeable strategies.
//!
//! Reward functions and answer embedders are selected at runtime by the name
//! given in configuration or on the command line.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

pub type Factory<T, C> = fn(&C) -> Result<Box<T>>;

pub struct Registry<T: ?Sized, C> {
    kind: &'static str,
    factories: BTreeMap<&'static str, Factory<T, C>>,
}

impl<T: ?Sized, C> Registry<T, C> {
    pub fn new(kind: &'static str) -> Self {
        Registry {
            kind,
            factories: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, name: &'static str, factory: Factory<T, C>) -> &mut Self {
        self.factories.insert(name, factory);
        self
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.factories.keys().copied()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.factories.contains_key(name)
    }

    pub fn build(&self, name: &str, config: &C) -> Result<Box<T>> {
        match self.factories.get(name) {
            Some(factory) => factory(config),
            None => Err(Error::UnknownStrategy {
                kind: self.kind,
                name: name.to_string(),
                available: self.names().collect::<Vec<_>>().join(", "),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    trait Greeter {
        fn greet(&self) -> String;
    }

    struct Plain(String);

    impl Greeter for Plain {
        fn greet(&self) -> String {
            format!("hello {}", self.0)
        }
    }

    #[test]
    fn builds_registered_and_rejects_unknown() {
        let mut registry: Registry<dyn Greeter, String> = Registry::new("greeter");
        registry.register("plain", |who| Ok(Box::new(Plain(who.clone()))));
        let g = registry.build("plain", &"world".to_string()).unwrap();
        assert_eq!(g.greet(), "hello world");
        let err = registry.build("fancy", &String::new()).err().unwrap();
        assert!(err.to_string().contains("plain"));
    }
}
