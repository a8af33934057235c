//! Parameter wrappers shared by classifier and pipeline configs:
//! a value may be pinned, searched over a grid, or resolved automatically.
//!
//! JSON forms: a plain number, the string `"search"`, or the string
//! `"auto"` respectively.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// A hyperparameter that is either fixed or subject to grid search.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Tunable<T> {
    Fixed(T),
    Search,
}

impl<T: Copy> Tunable<T> {
    pub fn is_search(&self) -> bool {
        matches!(self, Tunable::Search)
    }

    pub fn fixed(&self, name: &str) -> Result<T> {
        match self {
            Tunable::Fixed(v) => Ok(*v),
            Tunable::Search => Err(Error::UnresolvedParameter(name.to_string())),
        }
    }
}

impl<T: Serialize> Serialize for Tunable<T> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Tunable::Fixed(v) => v.serialize(s),
            Tunable::Search => s.serialize_str("search"),
        }
    }
}

impl<'de, T: for<'a> Deserialize<'a>> Deserialize<'de> for Tunable<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        match &v {
            serde_json::Value::String(s) if s == "search" => Ok(Tunable::Search),
            _ => T::deserialize(v)
                .map(Tunable::Fixed)
                .map_err(D::Error::custom),
        }
    }
}

/// A parameter that is either explicit or derived by a documented rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AutoOr<T> {
    Auto,
    Value(T),
}

impl<T: Copy> AutoOr<T> {
    pub fn is_auto(&self) -> bool {
        matches!(self, AutoOr::Auto)
    }

    pub fn value_or(&self, auto: T) -> T {
        match self {
            AutoOr::Auto => auto,
            AutoOr::Value(v) => *v,
        }
    }
}

impl<T: Serialize> Serialize for AutoOr<T> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            AutoOr::Value(v) => v.serialize(s),
            AutoOr::Auto => s.serialize_str("auto"),
        }
    }
}

impl<'de, T: for<'a> Deserialize<'a>> Deserialize<'de> for AutoOr<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        match &v {
            serde_json::Value::String(s) if s == "auto" => Ok(AutoOr::Auto),
            _ => T::deserialize(v)
                .map(AutoOr::Value)
                .map_err(D::Error::custom),
        }
    }
}
