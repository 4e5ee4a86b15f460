//! Run manifest written next to every command's outputs.

use std::path::{Path, PathBuf};

use mi_workbench::{Error, Result};
use serde_json::{json, Value};

pub struct Manifest {
    command: &'static str,
    seed: Option<u64>,
    config: Value,
    outputs: Vec<PathBuf>,
}

impl Manifest {
    pub fn new(command: &'static str, seed: Option<u64>) -> Self {
        Self {
            command,
            seed,
            config: Value::Null,
            outputs: Vec::new(),
        }
    }

    pub fn config(&mut self, key: &str, value: impl serde::Serialize) {
        if !self.config.is_object() {
            self.config = json!({});
        }
        self.config[key] = serde_json::to_value(value).unwrap_or(Value::Null);
    }

    pub fn output(&mut self, path: impl Into<PathBuf>) {
        self.outputs.push(path.into());
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let doc = json!({
            "tool": "miwb",
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.command,
            "argv": std::env::args().collect::<Vec<_>>(),
            "seed": self.seed,
            "threads": rayon::current_num_threads(),
            "config": self.config,
            "outputs": self.outputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        });
        let text = serde_json::to_string_pretty(&doc).expect("manifest serialises");
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}
