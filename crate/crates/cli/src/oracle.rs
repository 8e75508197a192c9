//! Client for an external risk oracle: a child process that exchanges
//! newline-delimited JSON records over its standard input and output.
//!
//! The client opens with `hello` and the oracle must answer `hello`. Each
//! round the client sends `test{round, ids, token}` and waits for
//! `risks{round, values}` or `error{message}`.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use altt_core::{CalibrationConfig, Direction, HyperparameterId, RiskSource};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum OracleMessage {
    Hello {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n_candidates: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        alpha: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        direction: Option<Direction>,
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        stateless: bool,
    },
    Test {
        round: u64,
        ids: Vec<HyperparameterId>,
        token: u64,
    },
    Risks {
        round: u64,
        values: Vec<f64>,
    },
    Error {
        message: String,
    },
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("could not start oracle `{command}`: {source}")]
    Spawn { command: String, source: std::io::Error },
    #[error("oracle did not answer {waiting_for} within {after:?}")]
    Timeout { waiting_for: String, after: Duration },
    #[error("malformed oracle record ({reason}): {record}")]
    Malformed { reason: String, record: String },
    #[error("oracle risk {value} outside [0, 1]: {record}")]
    OutOfRangeRisk { value: f64, record: String },
    #[error("oracle process exited ({status})")]
    ProcessExit { status: String },
    #[error("oracle reported an error: {message}")]
    Remote { message: String },
    #[error("configs with more than one risk metric are not supported by the oracle protocol")]
    UnsupportedConfig,
}

pub struct OracleClient {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    timeout: Duration,
    stateless: bool,
}

impl OracleClient {
    /// Start `command` through `sh -c` and perform the hello exchange.
    pub fn spawn(command: &str, cfg: &CalibrationConfig, timeout: Duration) -> Result<Self, OracleError> {
        if cfg.n_metrics() != 1 {
            return Err(OracleError::UnsupportedConfig);
        }
        let mut cmd = Command::new("sh");
        cmd.arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit());
        #[cfg(unix)]
        std::os::unix::process::CommandExt::process_group(&mut cmd, 0);
        let mut child = cmd.spawn().map_err(|source| OracleError::Spawn {
            command: command.into(),
            source,
        })?;
        let stdin = child.stdin.take();
        let stdout = child.stdout.take().expect("stdout piped");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });

        let mut client = OracleClient {
            child,
            stdin,
            lines: rx,
            timeout,
            stateless: false,
        };
        client.send(&OracleMessage::Hello {
            n_candidates: Some(cfg.n_candidates),
            alpha: Some(cfg.alpha),
            direction: Some(cfg.direction),
            stateless: false,
        })?;
        let (msg, record) = client.receive("hello")?;
        match msg {
            OracleMessage::Hello {
                n_candidates,
                stateless,
                ..
            } => {
                if let Some(n) = n_candidates.filter(|&n| n != cfg.n_candidates) {
                    return Err(OracleError::Malformed {
                        reason: format!("oracle serves {n} candidates, config has {}", cfg.n_candidates),
                        record,
                    });
                }
                client.stateless = stateless;
            }
            OracleMessage::Error { message } => return Err(OracleError::Remote { message }),
            _ => {
                return Err(OracleError::Malformed {
                    reason: "expected hello".into(),
                    record,
                })
            }
        }
        Ok(client)
    }

    /// Whether the oracle declared that its answers do not depend on call order.
    pub fn is_stateless(&self) -> bool {
        self.stateless
    }

    fn exit_error(&mut self) -> OracleError {
        // give a process that just closed its output a moment to be reaped
        for _ in 0..50 {
            if let Ok(Some(status)) = self.child.try_wait() {
                return OracleError::ProcessExit {
                    status: status.to_string(),
                };
            }
            thread::sleep(Duration::from_millis(10));
        }
        OracleError::ProcessExit {
            status: "output closed".into(),
        }
    }

    fn send(&mut self, msg: &OracleMessage) -> Result<(), OracleError> {
        let line = serde_json::to_string(msg).expect("message serializes");
        let Some(stdin) = self.stdin.as_mut() else {
            return Err(self.exit_error());
        };
        let ok = writeln!(stdin, "{line}").and_then(|_| stdin.flush());
        if ok.is_err() {
            return Err(self.exit_error());
        }
        Ok(())
    }

    fn receive(&mut self, waiting_for: &str) -> Result<(OracleMessage, String), OracleError> {
        loop {
            let line = match self.lines.recv_timeout(self.timeout) {
                Ok(Ok(line)) => line,
                Ok(Err(e)) => {
                    return Err(OracleError::Malformed {
                        reason: e.to_string(),
                        record: String::new(),
                    })
                }
                Err(RecvTimeoutError::Timeout) => {
                    return Err(OracleError::Timeout {
                        waiting_for: waiting_for.into(),
                        after: self.timeout,
                    })
                }
                Err(RecvTimeoutError::Disconnected) => return Err(self.exit_error()),
            };
            if line.trim().is_empty() {
                continue;
            }
            return match serde_json::from_str::<OracleMessage>(&line) {
                Ok(msg) => Ok((msg, line)),
                Err(e) => Err(OracleError::Malformed {
                    reason: e.to_string(),
                    record: line,
                }),
            };
        }
    }

    /// One `test` → `risks` exchange.
    pub fn request(
        &mut self,
        round: u64,
        ids: &[HyperparameterId],
        token: u64,
    ) -> Result<Vec<f64>, OracleError> {
        self.send(&OracleMessage::Test {
            round,
            ids: ids.to_vec(),
            token,
        })?;
        let (msg, record) = self.receive(&format!("risks for round {round}"))?;
        match msg {
            OracleMessage::Risks { round: r, values } => {
                if r != round {
                    return Err(OracleError::Malformed {
                        reason: format!("answer for round {r}, expected {round}"),
                        record,
                    });
                }
                if values.len() != ids.len() {
                    return Err(OracleError::Malformed {
                        reason: format!("{} values for {} ids", values.len(), ids.len()),
                        record,
                    });
                }
                if let Some(&value) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                    return Err(OracleError::OutOfRangeRisk { value, record });
                }
                Ok(values)
            }
            OracleMessage::Error { message } => Err(OracleError::Remote { message }),
            _ => Err(OracleError::Malformed {
                reason: "expected risks".into(),
                record,
            }),
        }
    }
}

impl RiskSource for OracleClient {
    fn query(&mut self, round: u64, ids: &[HyperparameterId], token: u64) -> altt_core::Result<Vec<f64>> {
        self.request(round, ids, token)
            .map_err(|e| altt_core::Error::SourceFailure(e.to_string()))
    }
}

impl Drop for OracleClient {
    fn drop(&mut self) {
        // closing stdin lets a well-behaved oracle exit on its own
        drop(self.stdin.take());
        for _ in 0..20 {
            if let Ok(Some(_)) = self.child.try_wait() {
                return;
            }
            thread::sleep(Duration::from_millis(5));
        }
        // the shell may have forked the oracle, so signal its whole group
        #[cfg(unix)]
        if let Ok(pgid) = libc::pid_t::try_from(self.child.id()) {
            unsafe {
                libc::killpg(pgid, libc::SIGKILL);
            }
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
