use std::path::Path;

use serde::de::DeserializeOwned;
use serde_path_to_error::Segment;

use crate::error::{read_text, Error, Result};

/// Parses a JSON config, reporting schema errors with the JSON pointer of
/// the offending value.
pub fn parse_config<T: DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let mut pointer = String::new();
        for seg in e.path().iter() {
            pointer.push('/');
            match seg {
                Segment::Seq { index } => pointer.push_str(&index.to_string()),
                Segment::Map { key } => pointer.push_str(&key.replace('~', "~0").replace('/', "~1")),
                Segment::Enum { variant } => pointer.push_str(variant),
                Segment::Unknown => pointer.push('?'),
            }
        }
        Error::ConfigSchema { pointer, message: e.into_inner().to_string() }
    })
}

pub fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    parse_config(&read_text(path)?)
}
