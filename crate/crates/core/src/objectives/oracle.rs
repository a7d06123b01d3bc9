//! Client for an external activity-coefficient oracle speaking
//! newline-delimited JSON over a child process's stdio or TCP.
//!
//! Request: `{"id": u64, "pairs": [[solute, solvent, temp_K], ...]}`.
//! Response: `{"id": u64, "ln_gamma_inf": [number | null, ...]}`.

use super::ObjectiveError;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Mutex, RwLock};
use std::time::Duration;

/// Overrides the configured oracle command when set.
pub const ORACLE_CMD_ENV: &str = "MOLGROW_ORACLE_CMD";

fn default_timeout() -> u64 {
    60_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSpec {
    /// Shell command whose stdin/stdout carry the protocol.
    #[serde(default)]
    pub command: Option<String>,
    /// `host:port` of a TCP oracle.
    #[serde(default)]
    pub tcp: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaPair {
    pub solute: String,
    pub solvent: String,
    pub temperature: f64,
}

impl GammaPair {
    pub fn new(solute: &str, solvent: &str, temperature: f64) -> Self {
        GammaPair {
            solute: solute.into(),
            solvent: solvent.into(),
            temperature,
        }
    }

    fn key(&self) -> (String, String, u64) {
        (self.solute.clone(), self.solvent.clone(), self.temperature.to_bits())
    }
}

#[derive(Serialize)]
struct Request<'a> {
    id: u64,
    pairs: Vec<(&'a str, &'a str, f64)>,
}

#[derive(Deserialize)]
struct Response {
    id: u64,
    #[serde(default)]
    ln_gamma_inf: Option<Vec<Option<f64>>>,
    #[serde(default)]
    error: Option<String>,
}

enum Endpoint {
    Child(Child),
    Tcp,
}

struct Connection {
    writer: Box<dyn Write + Send>,
    lines: Receiver<std::io::Result<String>>,
    endpoint: Endpoint,
}

impl Drop for Connection {
    fn drop(&mut self) {
        if let Endpoint::Child(child) = &mut self.endpoint {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

fn spawn_reader<R: std::io::Read + Send + 'static>(r: R) -> Receiver<std::io::Result<String>> {
    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        for line in BufReader::new(r).lines() {
            if tx.send(line).is_err() {
                break;
            }
        }
    });
    rx
}

impl Connection {
    fn open(spec: &OracleSpec) -> Result<Self, ObjectiveError> {
        let unreachable = |e: std::io::Error| ObjectiveError::OracleUnreachable(e.to_string());
        let command = std::env::var(ORACLE_CMD_ENV)
            .ok()
            .filter(|c| !c.trim().is_empty())
            .or_else(|| spec.command.clone());
        if let Some(cmd) = command {
            let mut child = Command::new("sh")
                .arg("-c")
                .arg(&cmd)
                .stdin(Stdio::piped())
                .stdout(Stdio::piped())
                .stderr(Stdio::inherit())
                .spawn()
                .map_err(unreachable)?;
            let stdin = child.stdin.take().expect("piped stdin");
            let stdout = child.stdout.take().expect("piped stdout");
            return Ok(Connection {
                writer: Box::new(stdin),
                lines: spawn_reader(stdout),
                endpoint: Endpoint::Child(child),
            });
        }
        if let Some(addr) = &spec.tcp {
            let stream = TcpStream::connect(addr).map_err(unreachable)?;
            stream.set_nodelay(true).map_err(unreachable)?;
            let read = stream.try_clone().map_err(unreachable)?;
            return Ok(Connection {
                writer: Box::new(stream),
                lines: spawn_reader(read),
                endpoint: Endpoint::Tcp,
            });
        }
        Err(ObjectiveError::Config(
            "oracle needs a command or a tcp address".into(),
        ))
    }

    fn roundtrip(&mut self, line: &str, timeout: Duration) -> Result<String, ObjectiveError> {
        let gone = |e: std::io::Error| ObjectiveError::OracleUnreachable(e.to_string());
        self.writer.write_all(line.as_bytes()).map_err(gone)?;
        self.writer.write_all(b"\n").map_err(gone)?;
        self.writer.flush().map_err(gone)?;
        match self.lines.recv_timeout(timeout) {
            Ok(Ok(l)) => Ok(l),
            Ok(Err(e)) => Err(gone(e)),
            Err(RecvTimeoutError::Timeout) => {
                Err(ObjectiveError::OracleTimeout(timeout.as_millis() as u64))
            }
            Err(RecvTimeoutError::Disconnected) => Err(ObjectiveError::OracleUnreachable(
                "oracle closed the connection".into(),
            )),
        }
    }
}

/// One connection, opened lazily and reopened after a failure, plus a
/// cache of answers by (solute, solvent, temperature).
pub struct OracleClient {
    spec: OracleSpec,
    conn: Mutex<(u64, Option<Connection>)>,
    cache: RwLock<HashMap<(String, String, u64), Option<f64>>>,
}

impl OracleClient {
    pub fn new(spec: OracleSpec) -> Result<Self, ObjectiveError> {
        if spec.command.is_none() && spec.tcp.is_none() && std::env::var(ORACLE_CMD_ENV).is_err() {
            return Err(ObjectiveError::Config(
                "oracle needs a command or a tcp address".into(),
            ));
        }
        Ok(OracleClient {
            spec,
            conn: Mutex::new((0, None)),
            cache: RwLock::new(HashMap::new()),
        })
    }

    /// Sends `pairs` as a single request, uncached. Entries are `None` where
    /// the oracle returned null.
    pub fn query(&self, pairs: &[GammaPair]) -> Result<Vec<Option<f64>>, ObjectiveError> {
        let mut guard = self.conn.lock().unwrap_or_else(|e| e.into_inner());
        let (next_id, conn) = &mut *guard;
        *next_id += 1;
        let id = *next_id;
        let line = serde_json::to_string(&Request {
            id,
            pairs: pairs
                .iter()
                .map(|p| (p.solute.as_str(), p.solvent.as_str(), p.temperature))
                .collect(),
        })
        .expect("request serializes");
        if conn.is_none() {
            *conn = Some(Connection::open(&self.spec)?);
        }
        let timeout = Duration::from_millis(self.spec.timeout_ms);
        let result = conn
            .as_mut()
            .expect("opened above")
            .roundtrip(&line, timeout)
            .and_then(|reply| parse_reply(&reply, id, pairs.len()));
        if result.is_err() {
            // the stream may hold a late or partial answer
            *conn = None;
        }
        result
    }

    /// Like [`query`](Self::query) but served from the cache where possible;
    /// at most one request is sent, carrying the distinct uncached pairs.
    pub fn ln_gamma(&self, pairs: &[GammaPair]) -> Result<Vec<Option<f64>>, ObjectiveError> {
        let mut missing: Vec<GammaPair> = Vec::new();
        {
            let cache = self.cache.read().unwrap_or_else(|e| e.into_inner());
            let mut queued = std::collections::HashSet::new();
            for p in pairs {
                let k = p.key();
                if !cache.contains_key(&k) && queued.insert(k) {
                    missing.push(p.clone());
                }
            }
        }
        if !missing.is_empty() {
            let values = self.query(&missing)?;
            let mut cache = self.cache.write().unwrap_or_else(|e| e.into_inner());
            for (p, v) in missing.iter().zip(values) {
                cache.insert(p.key(), v);
            }
        }
        let cache = self.cache.read().unwrap_or_else(|e| e.into_inner());
        Ok(pairs.iter().map(|p| cache[&p.key()]).collect())
    }
}

fn parse_reply(line: &str, id: u64, n: usize) -> Result<Vec<Option<f64>>, ObjectiveError> {
    let r: Response = serde_json::from_str(line)
        .map_err(|e| ObjectiveError::Protocol(format!("malformed response: {e}")))?;
    if r.id != id {
        return Err(ObjectiveError::Protocol(format!(
            "response id {} does not match request id {id}",
            r.id
        )));
    }
    if let Some(e) = r.error {
        return Err(ObjectiveError::Protocol(format!("oracle error: {e}")));
    }
    let values = r
        .ln_gamma_inf
        .ok_or_else(|| ObjectiveError::Protocol("response lacks ln_gamma_inf".into()))?;
    if values.len() != n {
        return Err(ObjectiveError::Protocol(format!(
            "{} values for {n} pairs",
            values.len()
        )));
    }
    Ok(values)
}
