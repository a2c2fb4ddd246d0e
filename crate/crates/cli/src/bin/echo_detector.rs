//! Scriptable detector speaking protocol v1, used as a test double.
//!
//! ```text
//! echo-detector [never]          answer has_bug=false
//! echo-detector fire LINE[:TOK]  report a bug at LINE (and token TOK)
//! echo-detector fire-last        report a bug on the last line of each source
//! echo-detector invalid          answer with a frame that is not JSON
//! echo-detector crash            exit after reading the first request
//! echo-detector sleep MS         wait MS milliseconds before every answer
//! echo-detector no-ready         never announce readiness
//! ```

use std::io::{self, BufRead, Write};
use std::process::ExitCode;
use std::time::Duration;

use serde_json::{json, Value};

enum Mode {
    Never,
    Fire { line: u64, token: Option<u64> },
    FireLast,
    Invalid,
    Crash,
    Sleep(u64),
    NoReady,
}

fn parse_mode(args: &[String]) -> Option<Mode> {
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    Some(match args[..] {
        [] | ["never"] => Mode::Never,
        ["fire", at] => {
            let (line, token) = match at.split_once(':') {
                Some((l, t)) => (l.parse().ok()?, Some(t.parse().ok()?)),
                None => (at.parse().ok()?, None),
            };
            Mode::Fire { line, token }
        }
        ["fire-last"] => Mode::FireLast,
        ["invalid"] => Mode::Invalid,
        ["crash"] => Mode::Crash,
        ["sleep", ms] => Mode::Sleep(ms.parse().ok()?),
        ["no-ready"] => Mode::NoReady,
        _ => return None,
    })
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let Some(mode) = parse_mode(&args) else {
        eprintln!("echo-detector: unrecognized arguments {args:?}");
        return ExitCode::from(2);
    };
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let send = |out: &mut io::StdoutLock, frame: &str| -> io::Result<()> {
        out.write_all(frame.as_bytes())?;
        out.write_all(b"\n")?;
        out.flush()
    };
    if !matches!(mode, Mode::NoReady) && send(&mut out, r#"{"v":1,"ready":true}"#).is_err() {
        return ExitCode::FAILURE;
    }
    for line in io::stdin().lock().lines() {
        let Ok(line) = line else { break };
        let request: Value = match serde_json::from_str(&line) {
            Ok(v) => v,
            Err(e) => {
                eprintln!("echo-detector: bad request: {e}");
                return ExitCode::FAILURE;
            }
        };
        let id = request["id"].clone();
        let response = match &mode {
            Mode::Never | Mode::NoReady => json!({"v": 1, "id": id, "has_bug": false, "line": null, "token_index": null, "score": null}),
            Mode::Fire { line, token } => json!({"v": 1, "id": id, "has_bug": true, "line": line, "token_index": token, "score": 1.0}),
            Mode::FireLast => {
                let last = request["source"].as_str().unwrap_or("").lines().count().max(1);
                json!({"v": 1, "id": id, "has_bug": true, "line": last, "token_index": null, "score": 0.5})
            }
            Mode::Invalid => {
                let _ = send(&mut out, "this is not a frame");
                continue;
            }
            Mode::Crash => return ExitCode::from(101),
            Mode::Sleep(ms) => {
                std::thread::sleep(Duration::from_millis(*ms));
                json!({"v": 1, "id": id, "has_bug": false, "line": null, "token_index": null, "score": null})
            }
        };
        if send(&mut out, &response.to_string()).is_err() {
            break;
        }
    }
    ExitCode::SUCCESS
}
