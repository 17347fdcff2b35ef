//! Name-keyed registries of interchangeable strategies.
//!
//! A spec string is `name` or `name:param`, e.g. `gauss:1.5` or `independent`.

use std::collections::BTreeMap;

use crate::error::{invalid, BoundsError, Result};

pub type Factory<T> = fn(Option<f64>) -> Result<Box<T>>;

pub struct Registry<T: ?Sized> {
    kind: &'static str,
    entries: BTreeMap<&'static str, Factory<T>>,
}

impl<T: ?Sized> Registry<T> {
    pub fn new(kind: &'static str) -> Self {
        Self { kind, entries: BTreeMap::new() }
    }

    pub fn register(&mut self, name: &'static str, factory: Factory<T>) -> &mut Self {
        self.entries.insert(name, factory);
        self
    }

    pub fn with(mut self, name: &'static str, factory: Factory<T>) -> Self {
        self.register(name, factory);
        self
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.keys().copied().collect()
    }

    pub fn build(&self, spec: &str) -> Result<Box<T>> {
        let (name, param) = parse_spec(spec)?;
        let factory = self
            .entries
            .get(name)
            .ok_or_else(|| BoundsError::UnknownStrategy { kind: self.kind, name: name.to_string() })?;
        factory(param)
    }
}

pub fn parse_spec(spec: &str) -> Result<(&str, Option<f64>)> {
    match spec.split_once(':') {
        None => Ok((spec.trim(), None)),
        Some((name, p)) => {
            let v: f64 = p
                .trim()
                .parse()
                .map_err(|_| invalid("spec", format!("`{spec}`: parameter `{p}` is not a number")))?;
            Ok((name.trim(), Some(v)))
        }
    }
}

/// Positive parameter with a default.
pub fn positive_param(param: Option<f64>, default: f64, field: &'static str) -> Result<f64> {
    let v = param.unwrap_or(default);
    if !(v > 0.0 && v.is_finite()) {
        return Err(invalid(field, format!("{field} must be > 0, got {v}")));
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    trait Named {
        fn name(&self) -> String;
    }
    struct A(f64);
    impl Named for A {
        fn name(&self) -> String {
            format!("a{}", self.0)
        }
    }

    #[test]
    fn build_by_name() {
        let r: Registry<dyn Named> =
            Registry::new("thing").with("a", |p| Ok(Box::new(A(positive_param(p, 1.0, "a")?)) as _));
        assert_eq!(r.build("a").unwrap().name(), "a1");
        assert_eq!(r.build("a:2.5").unwrap().name(), "a2.5");
        assert!(matches!(r.build("b"), Err(BoundsError::UnknownStrategy { .. })));
        assert!(r.build("a:x").is_err());
        assert!(r.build("a:-1").is_err());
        assert_eq!(r.names(), vec!["a"]);
    }
}
