use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use superrotor::io::write_atomic;
use superrotor::params::SystemSpec;

/// Written next to the primary output as `<output>.manifest.json`.
#[derive(Serialize)]
pub struct RunManifest {
    pub command: &'static str,
    pub spec: SystemSpec,
    pub outputs: Vec<String>,
    pub wall_time_s: f64,
    /// Convergence flags raised during the run.
    pub flags: Vec<String>,
    pub version: &'static str,
}

impl RunManifest {
    pub fn new(command: &'static str, spec: &SystemSpec) -> Self {
        Self {
            command,
            spec: spec.clone(),
            outputs: Vec::new(),
            wall_time_s: 0.0,
            flags: Vec::new(),
            version: env!("CARGO_PKG_VERSION"),
        }
    }

    pub fn output(&mut self, p: &Path) {
        self.outputs.push(p.display().to_string());
    }

    pub fn flag(&mut self, f: String) {
        self.flags.push(f);
    }

    pub fn finish(&mut self, start: Instant) {
        self.wall_time_s = start.elapsed().as_secs_f64();
    }

    pub fn write(&self, path: &Path) -> superrotor::Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        write_atomic(path, format!("{text}\n").as_bytes())
    }
}
