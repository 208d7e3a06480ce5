use alloc::string::{String, ToString};
use core::fmt;

/// Malformed identifier.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IdError {
    #[error("invalid synset id {0:?}: expected one lowercase letter followed by 8 digits")]
    Synset(String),
    #[error("image id must not be empty")]
    EmptyImage,
}

/// WordNet-style synset identifier, e.g. `n02504458`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "String", into = "String"))]
pub struct SynsetId(String);

impl SynsetId {
    pub fn new(id: impl Into<String>) -> Result<Self, IdError> {
        let id = id.into();
        let bytes = id.as_bytes();
        let ok = bytes.len() == 9
            && bytes[0].is_ascii_lowercase()
            && bytes[1..].iter().all(u8::is_ascii_digit);
        if ok {
            Ok(SynsetId(id))
        } else {
            Err(IdError::Synset(id))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for SynsetId {
    type Error = IdError;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        SynsetId::new(value)
    }
}

impl TryFrom<&str> for SynsetId {
    type Error = IdError;
    fn try_from(value: &str) -> Result<Self, Self::Error> {
        SynsetId::new(value.to_string())
    }
}

impl From<SynsetId> for String {
    fn from(id: SynsetId) -> String {
        id.0
    }
}

impl fmt::Display for SynsetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl core::borrow::Borrow<str> for SynsetId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

/// Evaluation or reference image identifier, e.g. `ILSVRC2012_val_00008164`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "String", into = "String"))]
pub struct ImageId(String);

impl ImageId {
    pub fn new(id: impl Into<String>) -> Result<Self, IdError> {
        let id = id.into();
        if id.is_empty() {
            Err(IdError::EmptyImage)
        } else {
            Ok(ImageId(id))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for ImageId {
    type Error = IdError;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        ImageId::new(value)
    }
}

impl From<ImageId> for String {
    fn from(id: ImageId) -> String {
        id.0
    }
}

impl fmt::Display for ImageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl core::borrow::Borrow<str> for ImageId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synset_pattern() {
        assert!(SynsetId::new("n02504458").is_ok());
        assert!(SynsetId::new("N02504458").is_err());
        assert!(SynsetId::new("n0250445").is_err());
        assert!(SynsetId::new("n025044580").is_err());
        assert!(SynsetId::new("n0250445x").is_err());
        assert!(SynsetId::new("").is_err());
    }

    #[test]
    fn image_non_empty() {
        assert_eq!(ImageId::new(""), Err(IdError::EmptyImage));
        assert_eq!(ImageId::new("ILSVRC2012_val_00008164").unwrap().as_str(), "ILSVRC2012_val_00008164");
    }
}
