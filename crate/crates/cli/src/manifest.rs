//! Run manifests.
//!
//! Every command that produces a run directory writes `manifest.json` before
//! any compute starts (status `running`, empty output list) and rewrites it
//! on success with the final output inventory. Timestamps live only here, so
//! the data files stay byte-identical across reruns.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use crate::emit::{json_str, write_atomic};
use crate::{io_error, CliError, CliResult};

pub struct Manifest {
    command: String,
    seed: u64,
    config: Vec<(String, String)>,
    started_ms: u128,
    dir: PathBuf,
}

fn now_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

fn render(
    command: &str,
    seed: u64,
    config: &[(String, String)],
    started_ms: u128,
    finished_ms: Option<u128>,
    status: &str,
    outputs: &[&str],
) -> String {
    let config_body: Vec<String> = config
        .iter()
        .map(|(k, v)| format!("    {}: {}", json_str(k), json_str(v)))
        .collect();
    let output_body: Vec<String> = outputs
        .iter()
        .map(|name| format!("    {}", json_str(name)))
        .collect();
    let finished = match finished_ms {
        Some(ms) => ms.to_string(),
        None => "null".to_string(),
    };
    format!(
        "{{\n  \"command\": {},\n  \"version\": {},\n  \"seed\": {},\n  \"config\": {{\n{}\n  }},\n  \"started_unix_ms\": {},\n  \"finished_unix_ms\": {},\n  \"status\": {},\n  \"outputs\": [\n{}\n  ]\n}}\n",
        json_str(command),
        json_str(env!("CARGO_PKG_VERSION")),
        seed,
        config_body.join(",\n"),
        started_ms,
        finished,
        json_str(status),
        output_body.join(",\n"),
    )
}

impl Manifest {
    /// Writes the initial `running` manifest into `dir` and returns a handle
    /// used to finalize it.
    pub fn start(
        dir: &Path,
        command: &str,
        seed: u64,
        config: Vec<(String, String)>,
    ) -> CliResult<Manifest> {
        let manifest = Manifest {
            command: command.to_string(),
            seed,
            config,
            started_ms: now_ms(),
            dir: dir.to_path_buf(),
        };
        let text = render(
            &manifest.command,
            manifest.seed,
            &manifest.config,
            manifest.started_ms,
            None,
            "running",
            &[],
        );
        let path = manifest.path();
        write_atomic(&path, &text).map_err(|e| io_error("cannot write", &path, e))?;
        Ok(manifest)
    }

    pub fn path(&self) -> PathBuf {
        self.dir.join("manifest.json")
    }

    /// Marks the run complete. Every listed output must already exist on
    /// disk; `manifest.json` itself is added to the inventory.
    pub fn finalize(self, outputs: &[&str]) -> CliResult<()> {
        for name in outputs {
            let path = self.dir.join(name);
            if !path.exists() {
                return Err(CliError::Runtime(format!(
                    "internal error: manifest lists missing output {}",
                    path.display()
                )));
            }
        }
        let mut inventory: Vec<&str> = outputs.to_vec();
        inventory.push("manifest.json");
        inventory.sort_unstable();
        let text = render(
            &self.command,
            self.seed,
            &self.config,
            self.started_ms,
            Some(now_ms()),
            "completed",
            &inventory,
        );
        let path = self.path();
        write_atomic(&path, &text).map_err(|e| io_error("cannot write", &path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Settings;

    #[test]
    fn manifest_lifecycle_writes_valid_json() {
        let dir = tempfile::tempdir().unwrap();
        let kv = Settings::default().key_values();
        let manifest = Manifest::start(dir.path(), "train", 7, kv).unwrap();

        let text = std::fs::read_to_string(dir.path().join("manifest.json")).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["command"], "train");
        assert_eq!(v["status"], "running");
        assert_eq!(v["seed"], 7);
        assert_eq!(v["config"]["gp.n"], "10");
        assert_eq!(v["config"]["gan.lr"], "0.0002");
        assert!(v["finished_unix_ms"].is_null());
        assert_eq!(v["outputs"].as_array().unwrap().len(), 0);

        std::fs::write(dir.path().join("history.csv"), "step\n").unwrap();
        manifest.finalize(&["history.csv"]).unwrap();

        let text = std::fs::read_to_string(dir.path().join("manifest.json")).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["status"], "completed");
        assert!(v["finished_unix_ms"].is_u64());
        let outputs: Vec<&str> = v["outputs"]
            .as_array()
            .unwrap()
            .iter()
            .map(|o| o.as_str().unwrap())
            .collect();
        assert_eq!(outputs, vec!["history.csv", "manifest.json"]);
    }

    #[test]
    fn finalize_rejects_missing_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = Manifest::start(dir.path(), "train", 0, vec![]).unwrap();
        let err = manifest.finalize(&["nope.csv"]).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }
}
