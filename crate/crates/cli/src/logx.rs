//! Stderr logging: human-readable lines by default, line-delimited JSON
//! with `--log-json`.

use serde_json::{Map, Value};

#[derive(Debug, Clone, Copy)]
pub struct Log {
    json: bool,
}

impl Log {
    pub fn new(json: bool) -> Self {
        Self { json }
    }

    fn emit(&self, level: &str, event: &str, fields: &[(&str, String)]) {
        if self.json {
            let mut map = Map::new();
            map.insert("level".into(), Value::String(level.into()));
            map.insert("event".into(), Value::String(event.into()));
            for (k, v) in fields {
                map.insert((*k).into(), Value::String(v.clone()));
            }
            eprintln!("{}", Value::Object(map));
        } else {
            let mut line = format!("{level} {event}");
            for (k, v) in fields {
                line.push_str(&format!(" {k}={v}"));
            }
            eprintln!("{line}");
        }
    }

    pub fn info(&self, event: &str, fields: &[(&str, String)]) {
        self.emit("info", event, fields);
    }

    pub fn warn(&self, event: &str, fields: &[(&str, String)]) {
        self.emit("warn", event, fields);
    }

    pub fn error(&self, event: &str, fields: &[(&str, String)]) {
        self.emit("error", event, fields);
    }
}

/// Shorthand for the `&[(&str, String)]` field lists.
#[macro_export]
macro_rules! fields {
    ($($key:ident = $value:expr),* $(,)?) => {
        &[$((stringify!($key), $value.to_string())),*]
    };
}
