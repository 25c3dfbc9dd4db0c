//! A long-lived child process spoken to with newline-delimited JSON over its
//! standard streams: one request line in, one response line out.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::PathBuf;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread::JoinHandle;
use std::time::Duration;

use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ProcessFailure {
    #[error("cannot start `{command}`: {message}")]
    Spawn { command: String, message: String },
    #[error("Timeout: no response within {0:?}")]
    Timeout(Duration),
    #[error("ProcessError: exited with code {code:?}; stderr: {stderr}")]
    Exited { code: Option<i32>, stderr: String },
    #[error("ProtocolError: {reason}; line: {line}")]
    Protocol { line: String, reason: String },
    #[error("io error talking to subprocess: {0}")]
    Io(String),
}

impl ProcessFailure {
    pub fn kind(&self) -> &'static str {
        match self {
            ProcessFailure::Spawn { .. } => "SpawnError",
            ProcessFailure::Timeout(_) => "Timeout",
            ProcessFailure::Exited { .. } => "ProcessError",
            ProcessFailure::Protocol { .. } => "ProtocolError",
            ProcessFailure::Io(_) => "IoError",
        }
    }
}

struct Running {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
    stderr: Option<JoinHandle<String>>,
}

impl Running {
    fn shutdown(mut self) -> (Option<i32>, String) {
        drop(self.stdin);
        let _ = self.child.kill();
        let code = self.child.wait().ok().and_then(|s| s.code());
        let stderr = self.stderr.take().and_then(|h| h.join().ok()).unwrap_or_default();
        (code, stderr)
    }
}

/// Requests are serialized; the process is (re)started lazily and killed
/// after a timeout so the next request starts from a fresh process.
pub struct NdjsonProcess {
    command: Vec<String>,
    workdir: Option<PathBuf>,
    running: Option<Running>,
}

impl std::fmt::Debug for NdjsonProcess {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NdjsonProcess")
            .field("command", &self.command)
            .field("running", &self.running.is_some())
            .finish()
    }
}

impl NdjsonProcess {
    pub fn new(command: Vec<String>, workdir: Option<PathBuf>) -> Self {
        Self { command, workdir, running: None }
    }

    pub fn command(&self) -> &[String] {
        &self.command
    }

    pub fn is_running(&self) -> bool {
        self.running.is_some()
    }

    fn spawn(&self) -> Result<Running, ProcessFailure> {
        let spawn_err = |message: String| ProcessFailure::Spawn {
            command: self.command.join(" "),
            message,
        };
        let (program, args) = self
            .command
            .split_first()
            .ok_or_else(|| spawn_err("empty command".into()))?;
        let mut cmd = Command::new(program);
        cmd.args(args).stdin(Stdio::piped()).stdout(Stdio::piped()).stderr(Stdio::piped());
        if let Some(dir) = &self.workdir {
            cmd.current_dir(dir);
        }
        let mut child = cmd.spawn().map_err(|e| spawn_err(e.to_string()))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let mut stderr = child.stderr.take().expect("piped stderr");

        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        let stderr = std::thread::spawn(move || {
            let mut buf = String::new();
            let _ = stderr.read_to_string(&mut buf);
            buf
        });
        Ok(Running { child, stdin, lines: rx, stderr: Some(stderr) })
    }

    /// Sends one request and waits up to `timeout` for one JSON-object line.
    pub fn request(&mut self, message: &Value, timeout: Duration) -> Result<Value, ProcessFailure> {
        if self.running.is_none() {
            self.running = Some(self.spawn()?);
        }
        let running = self.running.as_mut().expect("just spawned");

        let mut line = serde_json::to_string(message).expect("JSON serialization");
        line.push('\n');
        let written = running
            .stdin
            .write_all(line.as_bytes())
            .and_then(|_| running.stdin.flush());
        if written.is_err() {
            // Broken pipe: the child is gone. Report how it went.
            let (code, stderr) = self.running.take().expect("running").shutdown();
            return Err(ProcessFailure::Exited { code, stderr });
        }

        loop {
            let running = self.running.as_mut().expect("running");
            match running.lines.recv_timeout(timeout) {
                Ok(Ok(raw)) => {
                    if raw.trim().is_empty() {
                        continue;
                    }
                    return match serde_json::from_str::<Value>(&raw) {
                        Ok(v @ Value::Object(_)) => Ok(v),
                        Ok(_) => Err(ProcessFailure::Protocol {
                            line: raw,
                            reason: "response is not a JSON object".into(),
                        }),
                        Err(e) => Err(ProcessFailure::Protocol { line: raw, reason: e.to_string() }),
                    };
                }
                Ok(Err(e)) => {
                    self.kill();
                    return Err(ProcessFailure::Io(e.to_string()));
                }
                Err(RecvTimeoutError::Timeout) => {
                    self.kill();
                    return Err(ProcessFailure::Timeout(timeout));
                }
                Err(RecvTimeoutError::Disconnected) => {
                    let (code, stderr) = self.running.take().expect("running").shutdown();
                    return Err(ProcessFailure::Exited { code, stderr });
                }
            }
        }
    }

    pub fn kill(&mut self) {
        if let Some(running) = self.running.take() {
            running.shutdown();
        }
    }
}

impl Drop for NdjsonProcess {
    fn drop(&mut self) {
        self.kill();
    }
}
