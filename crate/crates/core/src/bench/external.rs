//! Child-process evaluator speaking line-delimited JSON.
//!
//! Each evaluation writes one request line `{"x":[...]}` to the child's
//! stdin and reads one response line `{"y":[...],"c":[...]}` from its
//! stdout. `"c"` may be omitted only when the problem has no blackbox
//! constraints.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::engine::{EvaluationError, Evaluator, Observation};

pub const DEFAULT_TIMEOUT_SECS: f64 = 600.0;

#[derive(Serialize)]
struct Request<'a> {
    x: &'a [f64],
}

#[derive(Deserialize)]
struct Response {
    y: Vec<f64>,
    #[serde(default)]
    c: Option<Vec<f64>>,
}

/// Parses and validates one response line.
pub fn parse_response(
    line: &str,
    objective_count: usize,
    blackbox_count: usize,
) -> Result<Observation, EvaluationError> {
    let protocol = |reason: String| EvaluationError::Protocol {
        reason,
        payload: line.to_string(),
    };
    let response: Response =
        serde_json::from_str(line.trim_end()).map_err(|e| protocol(format!("malformed response: {e}")))?;
    if response.y.len() != objective_count {
        return Err(protocol(format!(
            "expected {objective_count} values in \"y\", got {}",
            response.y.len()
        )));
    }
    let c = match response.c {
        Some(c) => c,
        None if blackbox_count == 0 => Vec::new(),
        None => return Err(protocol("missing \"c\" on a constrained problem".into())),
    };
    if c.len() != blackbox_count {
        return Err(protocol(format!(
            "expected {blackbox_count} values in \"c\", got {}",
            c.len()
        )));
    }
    Ok(Observation { y: response.y, c })
}

pub fn format_request(x: &[f64]) -> String {
    serde_json::to_string(&Request { x }).expect("finite floats serialize")
}

pub struct ExternalEvaluator {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    timeout: Duration,
    objective_count: usize,
    blackbox_count: usize,
    terminated: bool,
}

impl std::fmt::Debug for ExternalEvaluator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalEvaluator")
            .field("pid", &self.child.id())
            .field("timeout", &self.timeout)
            .field("terminated", &self.terminated)
            .finish()
    }
}

impl ExternalEvaluator {
    /// Launches `command[0]` with the remaining elements as arguments.
    pub fn spawn(
        command: &[String],
        timeout: Duration,
        objective_count: usize,
        blackbox_count: usize,
    ) -> std::io::Result<Self> {
        let (program, args) = command.split_first().ok_or_else(|| {
            std::io::Error::new(std::io::ErrorKind::InvalidInput, "empty evaluator command")
        })?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = child.stdin.take();
        let stdout = child.stdout.take().expect("stdout is piped");
        let (tx, lines) = mpsc::channel();
        thread::spawn(move || {
            let mut reader = BufReader::new(stdout);
            loop {
                let mut line = String::new();
                match reader.read_line(&mut line) {
                    Ok(0) => break,
                    Ok(_) => {
                        if tx.send(Ok(line)).is_err() {
                            break;
                        }
                    }
                    Err(e) => {
                        let _ = tx.send(Err(e));
                        break;
                    }
                }
            }
        });
        Ok(Self {
            child,
            stdin,
            lines,
            timeout,
            objective_count,
            blackbox_count,
            terminated: false,
        })
    }

    fn terminate(&mut self) {
        self.terminated = true;
        self.stdin = None;
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl Evaluator for ExternalEvaluator {
    fn evaluate(&mut self, x: &[f64]) -> Result<Observation, EvaluationError> {
        if self.terminated {
            return Err(EvaluationError::Io("evaluator process was terminated".into()));
        }
        let mut request = format_request(x);
        request.push('\n');
        let stdin = self.stdin.as_mut().expect("stdin open while running");
        if let Err(e) = stdin.write_all(request.as_bytes()).and_then(|_| stdin.flush()) {
            self.terminate();
            return Err(EvaluationError::Io(format!("writing request: {e}")));
        }
        match self.lines.recv_timeout(self.timeout) {
            Ok(Ok(line)) => parse_response(&line, self.objective_count, self.blackbox_count),
            Ok(Err(e)) => {
                self.terminate();
                Err(EvaluationError::Io(format!("reading response: {e}")))
            }
            Err(RecvTimeoutError::Timeout) => {
                self.terminate();
                Err(EvaluationError::Timeout {
                    seconds: self.timeout.as_secs_f64(),
                })
            }
            Err(RecvTimeoutError::Disconnected) => {
                self.terminate();
                Err(EvaluationError::Io("evaluator exited without answering".into()))
            }
        }
    }
}

impl Drop for ExternalEvaluator {
    fn drop(&mut self) {
        if !self.terminated {
            self.stdin = None;
            let _ = self.child.kill();
            let _ = self.child.wait();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        assert_eq!(format_request(&[0.5, 0.5]), r#"{"x":[0.5,0.5]}"#);
        let obs = parse_response(r#"{"y":[1.0,2.0],"c":[-0.1]}"#, 2, 1).unwrap();
        assert_eq!(obs, Observation { y: vec![1.0, 2.0], c: vec![-0.1] });
    }

    #[test]
    fn missing_c_is_allowed_only_without_blackbox_constraints() {
        assert_eq!(parse_response(r#"{"y":[1,2]}"#, 2, 0).unwrap().c, Vec::<f64>::new());
        let err = parse_response(r#"{"y":[1,2]}"#, 2, 1).unwrap_err();
        match err {
            EvaluationError::Protocol { payload, .. } => assert_eq!(payload, r#"{"y":[1,2]}"#),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_responses_are_protocol_errors() {
        for line in ["not json", r#"{"y":[1]}"#, r#"{"y":[1,"a"]}"#, r#"{"c":[]}"#, r#"{"y":[1,2],"c":[1,2]}"#] {
            assert!(
                matches!(parse_response(line, 2, 1), Err(EvaluationError::Protocol { .. })),
                "{line}"
            );
        }
    }
}
