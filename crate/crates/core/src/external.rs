//! Runs an external oracle command on a scratch directory.
//!
//! The command receives the directory path as its only argument. Callers
//! write inputs into the directory first and read outputs back afterwards.

use std::io::Read;
use std::path::Path;
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use tempfile::TempDir;

use crate::error::{Error, Result};

pub const DEFAULT_TIMEOUT_SECS: f64 = 120.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExternalCommand {
    pub program: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
}

fn default_timeout() -> f64 {
    DEFAULT_TIMEOUT_SECS
}

impl ExternalCommand {
    pub fn new(program: impl Into<String>) -> Self {
        Self {
            program: program.into(),
            timeout_secs: DEFAULT_TIMEOUT_SECS,
        }
    }

    pub fn scratch_dir(&self) -> Result<TempDir> {
        tempfile::Builder::new()
            .prefix("aura-oracle-")
            .tempdir()
            .map_err(|e| Error::io(std::env::temp_dir(), e))
    }

    pub(crate) fn failure(&self, reason: impl Into<String>, stderr: impl Into<String>) -> Error {
        Error::External {
            command: self.program.clone(),
            reason: reason.into(),
            stderr: stderr.into(),
        }
    }

    /// Runs the command on `dir`, returning captured stdout on exit status 0.
    pub fn run(&self, dir: &Path) -> Result<String> {
        let mut child = Command::new(&self.program)
            .arg(dir)
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| self.failure(format!("spawn failed: {e}"), ""))?;

        let drain = |mut r: Box<dyn Read + Send>| {
            thread::spawn(move || {
                let mut buf = Vec::new();
                let _ = r.read_to_end(&mut buf);
                String::from_utf8_lossy(&buf).into_owned()
            })
        };
        let out = drain(Box::new(child.stdout.take().expect("piped stdout")));
        let err = drain(Box::new(child.stderr.take().expect("piped stderr")));

        let deadline = Instant::now() + Duration::from_secs_f64(self.timeout_secs.max(0.0));
        let status = loop {
            match child.try_wait() {
                Ok(Some(status)) => break status,
                Ok(None) if Instant::now() >= deadline => {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Err(Error::Timeout {
                        command: self.program.clone(),
                        seconds: self.timeout_secs,
                    });
                }
                Ok(None) => thread::sleep(Duration::from_millis(5)),
                Err(e) => return Err(self.failure(format!("wait failed: {e}"), "")),
            }
        };
        let stdout = out.join().unwrap_or_default();
        let stderr = err.join().unwrap_or_default();
        if !status.success() {
            return Err(self.failure(format!("exited with {status}"), stderr));
        }
        Ok(stdout)
    }
}
