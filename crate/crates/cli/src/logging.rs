//! Structured progress events, one JSON object per line on stderr.

use std::io::Write;
use std::time::Instant;

use serde_json::{Map, Value};

#[derive(Debug)]
pub struct Logger {
    start: Instant,
    quiet: bool,
}

impl Logger {
    pub fn new(quiet: bool) -> Self {
        Logger {
            start: Instant::now(),
            quiet,
        }
    }

    /// Emits `{"elapsed_s", "stage", "event", ...fields}`. Non-object
    /// `fields` are stored under `"data"`.
    pub fn event(&self, stage: &str, event: &str, fields: Value) {
        if self.quiet {
            return;
        }
        let mut obj = Map::new();
        obj.insert(
            "elapsed_s".into(),
            Value::from((self.start.elapsed().as_secs_f64() * 1e3).round() / 1e3),
        );
        obj.insert("stage".into(), Value::from(stage));
        obj.insert("event".into(), Value::from(event));
        match fields {
            Value::Object(m) => obj.extend(m),
            Value::Null => {}
            other => {
                obj.insert("data".into(), other);
            }
        }
        let line = Value::Object(obj).to_string();
        let _ = writeln!(std::io::stderr().lock(), "{line}");
    }
}
