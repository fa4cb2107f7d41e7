use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Diagnostic class. `Ad` is the positive class (1).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "AD")]
    Ad,
    #[serde(rename = "CN")]
    Cn,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Ad, Label::Cn];

    pub fn bit(self) -> u8 {
        match self {
            Label::Ad => 1,
            Label::Cn => 0,
        }
    }

    pub fn target(self) -> f64 {
        f64::from(self.bit())
    }

    pub fn from_bit(bit: u8) -> Self {
        if bit == 0 {
            Label::Cn
        } else {
            Label::Ad
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Ad => "AD",
            Label::Cn => "CN",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "AD" | "ad" => Ok(Label::Ad),
            "CN" | "cn" => Ok(Label::Cn),
            _ => Err(Error::InvalidArgument(format!("unknown label {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    #[default]
    Real,
    Synthetic,
}

/// The four embedding streams. Only `Mfcc`, `Spec` and `Text` pass through a
/// mixture-of-experts layer; `W2v` goes straight to fusion.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    W2v,
    Mfcc,
    Spec,
    Text,
}

impl Modality {
    pub const ALL: [Modality; 4] = [Modality::W2v, Modality::Mfcc, Modality::Spec, Modality::Text];
    pub const MOE: [Modality; 3] = [Modality::Mfcc, Modality::Spec, Modality::Text];

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::W2v => "w2v",
            Modality::Mfcc => "mfcc",
            Modality::Spec => "spec",
            Modality::Text => "text",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        Modality::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown modality {s:?}")))
    }
}
