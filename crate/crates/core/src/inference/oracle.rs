//! Model oracles: anything that maps a prompt plus image references to text.

use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Step {
    Locate,
    Answer,
}

/// Prompts keep their `[IMAGE]`/`[ROI_IMAGE]` placeholders; `images` lists
/// the files they stand for, in placeholder order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleRequest {
    pub step: Step,
    pub prompt: String,
    pub images: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct OracleResponse {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("oracle did not answer within {0:?}")]
    Timeout(Duration),
    #[error("protocol error: {message} (line: {line:?})")]
    Protocol { line: String, message: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("mock script exhausted after {served} responses")]
    ScriptExhausted { served: usize },
}

pub trait Oracle {
    fn query(&mut self, request: &OracleRequest) -> Result<String, OracleError>;
}

/// Decodes one response line `{"text": ...}`.
pub fn parse_oracle_response(line: &str) -> Result<String, OracleError> {
    serde_json::from_str::<OracleResponse>(line)
        .map(|r| r.text)
        .map_err(|e| OracleError::Protocol {
            line: line.to_owned(),
            message: e.to_string(),
        })
}

/// Plays back scripted responses in order and records what it was asked.
#[derive(Debug, Clone, Default)]
pub struct MockOracle {
    script: VecDeque<String>,
    served: usize,
    pub requests: Vec<OracleRequest>,
}

impl MockOracle {
    pub fn new<I, S>(script: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            script: script.into_iter().map(Into::into).collect(),
            served: 0,
            requests: Vec::new(),
        }
    }

    /// Loads a script written in the wire response format, one
    /// `{"text": ...}` object per line.
    pub fn from_script_file(path: &Path) -> Result<Self, OracleError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| OracleError::Transport(format!("{}: {e}", path.display())))?;
        let script = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(parse_oracle_response)
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::new(script))
    }
}

impl Oracle for MockOracle {
    fn query(&mut self, request: &OracleRequest) -> Result<String, OracleError> {
        self.requests.push(request.clone());
        let reply = self
            .script
            .pop_front()
            .ok_or(OracleError::ScriptExhausted {
                served: self.served,
            })?;
        self.served += 1;
        Ok(reply)
    }
}

/// Talks line-delimited JSON to a child process over stdin/stdout, one
/// request in flight at a time. After a timeout or transport failure the
/// child is killed and every later query fails.
pub struct StdioOracle {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    timeout: Duration,
    broken: Option<OracleError>,
}

impl StdioOracle {
    pub fn spawn(program: &str, args: &[String], timeout: Duration) -> Result<Self, OracleError> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| OracleError::Transport(format!("cannot launch {program}: {e}")))?;
        let stdin = child.stdin.take();
        let stdout = child
            .stdout
            .take()
            .ok_or_else(|| OracleError::Transport("child stdout unavailable".into()))?;
        let (tx, lines) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });
        Ok(Self {
            child,
            stdin,
            lines,
            timeout,
            broken: None,
        })
    }

    /// Exit status of the child if it terminates within a short grace period.
    fn exit_note(&mut self) -> String {
        for _ in 0..20 {
            match self.child.try_wait() {
                Ok(Some(status)) => return format!(" ({status})"),
                Ok(None) => thread::sleep(Duration::from_millis(10)),
                Err(_) => break,
            }
        }
        String::new()
    }

    fn fail(&mut self, err: OracleError) -> OracleError {
        let _ = self.child.kill();
        let _ = self.child.wait();
        self.stdin = None;
        self.broken = Some(err.clone());
        err
    }

    fn exchange(&mut self, request: &OracleRequest) -> Result<String, OracleError> {
        let mut line = serde_json::to_string(request).map_err(|e| OracleError::Protocol {
            line: String::new(),
            message: e.to_string(),
        })?;
        line.push('\n');
        let stdin = self
            .stdin
            .as_mut()
            .ok_or_else(|| OracleError::Transport("oracle stdin closed".into()))?;
        if let Err(e) = stdin
            .write_all(line.as_bytes())
            .and_then(|()| stdin.flush())
        {
            let note = self.exit_note();
            return Err(OracleError::Transport(format!("write failed: {e}{note}")));
        }
        match self.lines.recv_timeout(self.timeout) {
            Ok(Ok(reply)) => parse_oracle_response(reply.trim_end_matches('\r')),
            Ok(Err(e)) => Err(OracleError::Transport(format!("read failed: {e}"))),
            Err(RecvTimeoutError::Timeout) => Err(OracleError::Timeout(self.timeout)),
            Err(RecvTimeoutError::Disconnected) => {
                let note = self.exit_note();
                Err(OracleError::Transport(format!(
                    "oracle closed its output{note}"
                )))
            }
        }
    }
}

impl Oracle for StdioOracle {
    fn query(&mut self, request: &OracleRequest) -> Result<String, OracleError> {
        if let Some(err) = &self.broken {
            return Err(err.clone());
        }
        self.exchange(request).map_err(|e| self.fail(e))
    }
}

impl Drop for StdioOracle {
    fn drop(&mut self) {
        self.stdin = None;
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
