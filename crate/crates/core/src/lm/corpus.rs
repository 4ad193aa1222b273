use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// How plain text is split into tokens.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tokenizer {
    #[default]
    Whitespace,
    /// One token per character; line breaks are dropped.
    Char,
}

impl Tokenizer {
    pub fn tokenize(self, text: &str) -> Vec<String> {
        match self {
            Self::Whitespace => text.split_whitespace().map(str::to_owned).collect(),
            Self::Char => text
                .chars()
                .filter(|c| *c != '\n' && *c != '\r')
                .map(String::from)
                .collect(),
        }
    }
}

impl FromStr for Tokenizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "whitespace" => Ok(Self::Whitespace),
            "char" => Ok(Self::Char),
            other => Err(Error::Input(format!("unknown tokenizer `{other}` (expected whitespace or char)"))),
        }
    }
}

impl fmt::Display for Tokenizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Whitespace => "whitespace",
            Self::Char => "char",
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes() {
        assert_eq!(Tokenizer::Whitespace.tokenize(" a  b\nc "), vec!["a", "b", "c"]);
        assert_eq!(Tokenizer::Char.tokenize("ab\nc"), vec!["a", "b", "c"]);
        assert_eq!("char".parse::<Tokenizer>().unwrap(), Tokenizer::Char);
        assert!("bpe".parse::<Tokenizer>().is_err());
    }
}
