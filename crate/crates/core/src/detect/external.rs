//! Out-of-process detectors speaking the line-delimited JSON protocol v1.
//!
//! The child announces itself with `{"v":1,"ready":true}`, then answers one
//! request at a time, in order:
//!
//! ```text
//! -> {"v":1,"id":"<sample-id>","source":"<function text>","meta":{...}}
//! <- {"v":1,"id":"<same>","has_bug":bool,"line":int|null,"token_index":int|null,"score":float|null}
//! ```

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{DetectError, Detector, DetectorOutcome, Location};
use crate::corpus::ProgramSample;

pub const PROTOCOL_VERSION: u64 = 1;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request<'a> {
    pub v: u64,
    pub id: &'a str,
    pub source: &'a str,
    pub meta: Value,
}

impl<'a> Request<'a> {
    pub fn for_sample(sample: &'a ProgramSample, source: &'a str) -> Self {
        Request {
            v: PROTOCOL_VERSION,
            id: &sample.id,
            source,
            meta: json!({
                "repo": sample.repo,
                "file_path": sample.file_path,
                "function_signature": sample.function_signature,
            }),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Response {
    v: u64,
    id: String,
    has_bug: bool,
    #[serde(default)]
    line: Option<u32>,
    #[serde(default)]
    token_index: Option<usize>,
    #[serde(default)]
    score: Option<f64>,
}

fn protocol(msg: impl Into<String>) -> DetectError {
    DetectError::Protocol(msg.into())
}

/// Validates one response frame for request `id` on a source with
/// `line_count` lines.
pub fn parse_response(frame: &str, id: &str, line_count: u32) -> Result<DetectorOutcome, DetectError> {
    let r: Response = serde_json::from_str(frame).map_err(|e| protocol(format!("malformed response: {e}")))?;
    if r.v != PROTOCOL_VERSION {
        return Err(protocol(format!("unsupported protocol version {}", r.v)));
    }
    if r.id != id {
        return Err(protocol(format!("response for `{}` while waiting for `{id}`", r.id)));
    }
    if let Some(s) = r.score {
        if !(0.0..=1.0).contains(&s) {
            return Err(protocol(format!("score {s} outside [0, 1]")));
        }
    }
    let location = match (r.has_bug, r.line, r.token_index) {
        (_, None, Some(_)) => return Err(protocol("token_index without line")),
        (false, Some(_), _) => return Err(protocol("location reported without a bug")),
        (true, Some(line), token_index) => {
            if line == 0 || line > line_count {
                return Err(protocol(format!("line {line} outside 1..={line_count}")));
            }
            Some(Location { line, column: None, token_index })
        }
        (_, None, None) => None,
    };
    Ok(DetectorOutcome { has_bug: r.has_bug, location, score: r.score, audit: None })
}

struct Running {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
}

impl Running {
    fn spawn(command: &[String], timeout: Duration) -> Result<Running, DetectError> {
        let (program, args) = command.split_first().ok_or_else(|| protocol("empty detector command"))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| DetectError::Spawn { command: command.join(" "), source: e })?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });
        let mut running = Running { child, stdin, lines: rx };
        let frame = running.read_frame(timeout)?;
        let ready: Value = serde_json::from_str(&frame).map_err(|e| protocol(format!("malformed ready frame: {e}")))?;
        if ready.get("v").and_then(Value::as_u64) != Some(PROTOCOL_VERSION) || ready.get("ready") != Some(&Value::Bool(true)) {
            return Err(protocol(format!("expected ready frame, got {frame}")));
        }
        Ok(running)
    }

    fn read_frame(&mut self, timeout: Duration) -> Result<String, DetectError> {
        match self.lines.recv_timeout(timeout) {
            Ok(Ok(line)) => Ok(line),
            Ok(Err(e)) => Err(DetectError::Crashed(e.to_string())),
            Err(RecvTimeoutError::Timeout) => Err(DetectError::Timeout(timeout)),
            Err(RecvTimeoutError::Disconnected) => {
                let status = self.child.try_wait().ok().flatten();
                Err(DetectError::Crashed(match status {
                    Some(s) => format!("detector exited ({s})"),
                    None => "detector closed its output".into(),
                }))
            }
        }
    }

    fn round_trip(&mut self, request: &str, id: &str, line_count: u32, timeout: Duration) -> Result<DetectorOutcome, DetectError> {
        self.stdin
            .write_all(request.as_bytes())
            .and_then(|_| self.stdin.flush())
            .map_err(|e| DetectError::Crashed(e.to_string()))?;
        let frame = self.read_frame(timeout)?;
        parse_response(&frame, id, line_count)
    }
}

impl Drop for Running {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// A pool of identical child processes, each with at most one request in
/// flight. Children are started lazily and restarted after any failure.
pub struct ExternalDetector {
    name: String,
    command: Vec<String>,
    timeout: Duration,
    slots: Vec<Mutex<Option<Running>>>,
    next: AtomicUsize,
}

impl ExternalDetector {
    pub fn new(command: Vec<String>, timeout: Duration, processes: usize) -> Self {
        ExternalDetector {
            name: format!("external:{}", command.join(" ")),
            command,
            timeout,
            slots: (0..processes.max(1)).map(|_| Mutex::new(None)).collect(),
            next: AtomicUsize::new(0),
        }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    fn call(&self, sample: &ProgramSample, source: &str) -> Result<DetectorOutcome, DetectError> {
        let mut frame = serde_json::to_string(&Request::for_sample(sample, source)).expect("request serializes");
        frame.push('\n');
        let line_count = source.lines().count().max(1) as u32;
        let start = self.next.fetch_add(1, Ordering::Relaxed);
        let n = self.slots.len();
        let mut guard = (0..n)
            .find_map(|k| self.slots[(start + k) % n].try_lock().ok())
            .unwrap_or_else(|| self.slots[start % n].lock().unwrap_or_else(|p| p.into_inner()));
        if guard.is_none() {
            *guard = Some(Running::spawn(&self.command, self.timeout)?);
        }
        let result = guard.as_mut().expect("spawned").round_trip(&frame, &sample.id, line_count, self.timeout);
        if result.is_err() {
            // The stream may be out of sync; start afresh next time.
            *guard = None;
        }
        result
    }
}

impl Detector for ExternalDetector {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn detect(&self, sample: &ProgramSample) -> Result<DetectorOutcome, DetectError> {
        self.call(sample, &sample.source)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn response_validation() {
        let ok = parse_response(r#"{"v":1,"id":"a","has_bug":true,"line":8,"token_index":41,"score":0.5}"#, "a", 12).unwrap();
        assert_eq!(ok.location, Some(Location { line: 8, column: None, token_index: Some(41) }));
        let none = parse_response(r#"{"v":1,"id":"a","has_bug":false,"line":null,"token_index":null,"score":null}"#, "a", 12).unwrap();
        assert_eq!((none.has_bug, none.location), (false, None));
        let short = parse_response(r#"{"v":1,"id":"a","has_bug":false}"#, "a", 12).unwrap();
        assert!(!short.has_bug);
        for bad in [
            "not json",
            r#"{"v":2,"id":"a","has_bug":false}"#,
            r#"{"v":1,"id":"b","has_bug":false}"#,
            r#"{"v":1,"id":"a"}"#,
            r#"{"v":1,"id":"a","has_bug":false,"line":3}"#,
            r#"{"v":1,"id":"a","has_bug":true,"line":30}"#,
            r#"{"v":1,"id":"a","has_bug":true,"token_index":3}"#,
            r#"{"v":1,"id":"a","has_bug":true,"score":1.5}"#,
            r#"{"v":1,"id":"a","has_bug":true,"extra":1}"#,
        ] {
            assert!(matches!(parse_response(bad, "a", 12), Err(DetectError::Protocol(_))), "{bad}");
        }
    }

    #[test]
    fn request_frame_shape() {
        let s = ProgramSample::correct("x", "r", "f.py", "def f():\n    pass\n");
        let v: Value = serde_json::to_value(Request::for_sample(&s, &s.source)).unwrap();
        assert_eq!(v["v"], 1);
        assert_eq!(v["id"], "x");
        assert_eq!(v["meta"]["repo"], "r");
    }

    #[test]
    fn shell_double_round_trip() {
        let script = r#"echo '{"v":1,"ready":true}'; while read -r line; do id=$(printf "%s\\n" "$line" | sed 's/.*"id":"\([^"]*\)".*/\1/'); echo "{\"v\":1,\"id\":\"$id\",\"has_bug\":true,\"line\":2,\"token_index\":null,\"score\":null}"; done"#;
        let d = ExternalDetector::new(vec!["sh".into(), "-c".into(), script.into()], Duration::from_secs(10), 2);
        let s = ProgramSample::correct("s1", "r", "f.py", "def f():\n    pass\n");
        for _ in 0..3 {
            let o = d.detect(&s).unwrap();
            assert_eq!(o.location.unwrap().line, 2);
        }
    }

    #[test]
    fn crash_and_timeout() {
        let s = ProgramSample::correct("s1", "r", "f.py", "def f():\n    pass\n");
        let crash = ExternalDetector::new(vec!["sh".into(), "-c".into(), r#"echo '{"v":1,"ready":true}'; read -r line; exit 3"#.into()], Duration::from_secs(10), 1);
        assert!(matches!(crash.detect(&s), Err(DetectError::Crashed(_))));
        let slow = ExternalDetector::new(vec!["sh".into(), "-c".into(), r#"echo '{"v":1,"ready":true}'; sleep 5"#.into()], Duration::from_millis(200), 1);
        assert!(matches!(slow.detect(&s), Err(DetectError::Timeout(_))));
        let missing = ExternalDetector::new(vec!["/nonexistent/detector".into()], Duration::from_secs(1), 1);
        assert!(matches!(missing.detect(&s), Err(DetectError::Spawn { .. })));
        let not_ready = ExternalDetector::new(vec!["sh".into(), "-c".into(), "echo hello".into()], Duration::from_secs(10), 1);
        assert!(matches!(not_ready.detect(&s), Err(DetectError::Protocol(_))));
    }
}
