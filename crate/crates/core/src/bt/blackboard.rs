use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::BtError;
use crate::geometry::Vec2;
use crate::world::Waypoint;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value")]
pub enum Value {
    Number(f64),
    Bool(bool),
    Point(Vec2),
    Waypoints(Vec<Waypoint>),
    Text(String),
}

impl Value {
    fn type_name(&self) -> &'static str {
        match self {
            Value::Number(_) => "number",
            Value::Bool(_) => "bool",
            Value::Point(_) => "point",
            Value::Waypoints(_) => "waypoints",
            Value::Text(_) => "text",
        }
    }
}

/// Typed key/value store shared by leaves. Missing keys are errors.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Blackboard {
    entries: BTreeMap<String, Value>,
}

macro_rules! typed_getter {
    ($fn:ident, $variant:ident, $ty:ty, $name:literal) => {
        pub fn $fn(&self, key: &str) -> Result<$ty, BtError> {
            match self.get(key)? {
                Value::$variant(v) => Ok(v.clone()),
                other => Err(BtError::TypeMismatch {
                    key: key.to_string(),
                    expected: $name,
                    found: other.type_name(),
                }),
            }
        }
    };
}

impl Blackboard {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: &str, value: Value) {
        self.entries.insert(key.to_string(), value);
    }

    pub fn remove(&mut self, key: &str) -> Option<Value> {
        self.entries.remove(key)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn get(&self, key: &str) -> Result<&Value, BtError> {
        self.entries
            .get(key)
            .ok_or_else(|| BtError::MissingKey(key.to_string()))
    }

    typed_getter!(number, Number, f64, "number");
    typed_getter!(flag, Bool, bool, "bool");
    typed_getter!(point, Point, Vec2, "point");
    typed_getter!(waypoints, Waypoints, Vec<Waypoint>, "waypoints");
    typed_getter!(text, Text, String, "text");

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}
