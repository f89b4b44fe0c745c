use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Ordered class names; the position doubles as severity rank.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct ClassSet {
    names: Vec<String>,
}

impl ClassSet {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(Error::Config("class set is empty".into()));
        }
        for (i, n) in names.iter().enumerate() {
            if n.is_empty() || n.contains(',') || n.chars().any(char::is_whitespace) {
                return Err(Error::Config(format!("invalid class name `{n}`")));
            }
            if names[..i].contains(n) {
                return Err(Error::Config(format!("duplicate class name `{n}`")));
            }
        }
        if names.len() > u8::MAX as usize {
            return Err(Error::Config("too many classes for 8-bit label maps".into()));
        }
        Ok(Self { names })
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

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

impl Default for ClassSet {
    fn default() -> Self {
        Self::new(["NC", "GG3", "GG4", "GG5"]).expect("valid default classes")
    }
}

impl TryFrom<Vec<String>> for ClassSet {
    type Error = Error;

    fn try_from(names: Vec<String>) -> Result<Self> {
        Self::new(names)
    }
}

impl From<ClassSet> for Vec<String> {
    fn from(c: ClassSet) -> Self {
        c.names
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_order_is_severity() {
        let c = ClassSet::default();
        assert_eq!(c.names(), ["NC", "GG3", "GG4", "GG5"]);
        assert_eq!(c.index_of("GG5"), Some(3));
    }

    #[test]
    fn rejects_empty_and_duplicates() {
        assert!(ClassSet::new(Vec::<String>::new()).is_err());
        assert!(ClassSet::new(["A", "B", "A"]).is_err());
        assert!(serde_json::from_str::<ClassSet>(r#"["A","A"]"#).is_err());
    }
}
