use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::PathBuf;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use serde_json::Value;

use super::protocol::{Op, Request, Response};
use super::stub::StubAdapter;
use super::{AdapterEndpoint, Capability, TransportKind, VisionError};

/// An adapter living in this process.
pub trait AdapterServer: Send + Sync {
    fn handle(&self, request: Request) -> Response;
}

/// Moves one request and its response.
pub trait Transport: Send + Sync {
    fn exchange(&self, request: &Request) -> Result<Response, VisionError>;

    /// Recent adapter-side output useful in error reports.
    fn diagnostics(&self) -> String {
        String::new()
    }
}

struct InProcessTransport(Arc<dyn AdapterServer>);

impl Transport for InProcessTransport {
    fn exchange(&self, request: &Request) -> Result<Response, VisionError> {
        // Round-trip through JSON so the in-process path sees exactly what a
        // remote adapter would.
        let line = serde_json::to_string(request).expect("request serializes");
        let parsed: Request = serde_json::from_str(&line).expect("request parses");
        Ok(self.0.handle(parsed))
    }
}

const STDERR_TAIL: usize = 4096;

struct ChildIo {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
}

/// Adapter spoken to over the stdio of a long-lived child process.
pub struct SubprocessTransport {
    argv: Vec<String>,
    cwd: Option<PathBuf>,
    timeout: Duration,
    child: Mutex<Option<ChildIo>>,
    stderr: Arc<Mutex<String>>,
}

impl SubprocessTransport {
    /// `command` is split on whitespace; no shell is involved.
    pub fn new(command: &str, timeout: Duration) -> Self {
        Self {
            argv: command.split_whitespace().map(str::to_owned).collect(),
            cwd: None,
            timeout,
            child: Mutex::new(None),
            stderr: Arc::new(Mutex::new(String::new())),
        }
    }

    pub fn with_cwd(mut self, cwd: PathBuf) -> Self {
        self.cwd = Some(cwd);
        self
    }

    fn spawn(&self) -> Result<ChildIo, VisionError> {
        let (program, args) = self
            .argv
            .split_first()
            .ok_or_else(|| VisionError::Transport("empty adapter command".into()))?;
        let mut cmd = Command::new(program);
        cmd.args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped());
        if let Some(cwd) = &self.cwd {
            cmd.current_dir(cwd);
        }
        let mut child = cmd
            .spawn()
            .map_err(|e| VisionError::Transport(format!("cannot start `{program}`: {e}")))?;
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
        let tail = Arc::clone(&self.stderr);
        std::thread::spawn(move || {
            let mut buf = [0u8; 1024];
            while let Ok(n) = stderr.read(&mut buf) {
                if n == 0 {
                    break;
                }
                let mut t = tail.lock().expect("stderr tail poisoned");
                t.push_str(&String::from_utf8_lossy(&buf[..n]));
                if t.len() > STDERR_TAIL {
                    let cut = t.len() - STDERR_TAIL;
                    let cut = (cut..t.len())
                        .find(|&i| t.is_char_boundary(i))
                        .unwrap_or(cut);
                    t.drain(..cut);
                }
            }
        });
        Ok(ChildIo {
            child,
            stdin,
            lines: rx,
        })
    }
}

impl Transport for SubprocessTransport {
    fn exchange(&self, request: &Request) -> Result<Response, VisionError> {
        let mut guard = self.child.lock().expect("adapter child poisoned");
        if guard.is_none() {
            *guard = Some(self.spawn()?);
        }
        let io = guard.as_mut().expect("child present");
        let mut line = serde_json::to_string(request).expect("request serializes");
        line.push('\n');
        let write = io
            .stdin
            .write_all(line.as_bytes())
            .and_then(|_| io.stdin.flush());
        let reply = match write {
            Ok(()) => io.lines.recv_timeout(self.timeout),
            Err(_) => Err(RecvTimeoutError::Disconnected),
        };
        match reply {
            Ok(Ok(text)) => serde_json::from_str(&text).map_err(|e| VisionError::InvalidOutput {
                reason: format!("unparseable response line: {e}"),
                diagnostics: self.diagnostics(),
            }),
            Ok(Err(e)) => Err(VisionError::Transport(e.to_string())),
            Err(RecvTimeoutError::Timeout) => {
                let _ = io.child.kill();
                *guard = None;
                Err(VisionError::Transport(format!(
                    "no response within {:?}",
                    self.timeout
                )))
            }
            Err(RecvTimeoutError::Disconnected) => {
                let status = io.child.wait().ok();
                *guard = None;
                // Give the stderr reader a moment to drain.
                std::thread::sleep(Duration::from_millis(20));
                Err(VisionError::Crash(format!(
                    "adapter exited ({}) ; stderr: {}",
                    status
                        .map(|s| s.to_string())
                        .unwrap_or_else(|| "unknown status".into()),
                    self.diagnostics().trim()
                )))
            }
        }
    }

    fn diagnostics(&self) -> String {
        self.stderr.lock().expect("stderr tail poisoned").clone()
    }
}

impl Drop for SubprocessTransport {
    fn drop(&mut self) {
        if let Ok(mut guard) = self.child.lock() {
            if let Some(mut io) = guard.take() {
                drop(io.stdin);
                let _ = io.child.kill();
                let _ = io.child.wait();
            }
        }
    }
}

/// Adapter reached by `POST {base}/rpc`.
pub struct HttpTransport {
    url: String,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(base: &str, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            url: format!("{}/rpc", base.trim_end_matches('/')),
            agent,
        }
    }
}

impl Transport for HttpTransport {
    fn exchange(&self, request: &Request) -> Result<Response, VisionError> {
        let mut resp = self
            .agent
            .post(&self.url)
            .send_json(request)
            .map_err(|e| VisionError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| VisionError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(VisionError::Transport(format!("HTTP {status}: {body}")));
        }
        serde_json::from_str(body.trim()).map_err(|e| VisionError::InvalidOutput {
            reason: format!("unparseable response: {e}"),
            diagnostics: body.chars().take(500).collect(),
        })
    }
}

/// One connection to an adapter, with its capability handshake.
pub struct AdapterClient {
    name: String,
    transport: Box<dyn Transport>,
    confirmed: Mutex<Option<BTreeSet<Capability>>>,
    next_id: AtomicU64,
}

impl AdapterClient {
    pub fn new(name: &str, transport: Box<dyn Transport>) -> Self {
        Self {
            name: name.to_owned(),
            transport,
            confirmed: Mutex::new(None),
            next_id: AtomicU64::new(1),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn diagnostics(&self) -> String {
        self.transport.diagnostics()
    }

    /// Capabilities reported by the adapter, asked once per connection.
    pub fn handshake(&self) -> Result<BTreeSet<Capability>, VisionError> {
        if let Some(caps) = self.confirmed.lock().expect("handshake poisoned").clone() {
            return Ok(caps);
        }
        let payload = self.call_raw(Op::Capabilities, Value::Object(Default::default()))?;
        let caps: BTreeSet<Capability> = payload
            .get("capabilities")
            .and_then(Value::as_array)
            .ok_or_else(|| VisionError::InvalidOutput {
                reason: "capabilities response lacks a `capabilities` array".into(),
                diagnostics: payload.to_string(),
            })?
            .iter()
            .filter_map(|c| serde_json::from_value(c.clone()).ok())
            .collect();
        *self.confirmed.lock().expect("handshake poisoned") = Some(caps.clone());
        Ok(caps)
    }

    /// Checks both the declared and the handshake-confirmed capabilities.
    pub fn require(&self, endpoint: &AdapterEndpoint, cap: Capability) -> Result<(), VisionError> {
        if !endpoint.capabilities.contains(&cap) {
            return Err(VisionError::MissingCapability {
                endpoint: self.name.clone(),
                capability: cap,
            });
        }
        if !self.handshake()?.contains(&cap) {
            return Err(VisionError::HandshakeMismatch {
                endpoint: self.name.clone(),
                capability: cap,
            });
        }
        Ok(())
    }

    fn call_raw(&self, op: Op, payload: Value) -> Result<Value, VisionError> {
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let req = Request { id, op, payload };
        let resp = self.transport.exchange(&req)?;
        if resp.id != id || !resp.is_well_formed() {
            return Err(VisionError::InvalidOutput {
                reason: format!("malformed response to request {id}"),
                diagnostics: serde_json::to_string(&resp).unwrap_or_default(),
            });
        }
        if resp.ok {
            Ok(resp.payload.expect("well-formed ok response"))
        } else {
            let err = resp.error.expect("well-formed error response");
            Err(VisionError::Adapter {
                code: err.code,
                message: err.message,
            })
        }
    }

    /// Sends a non-handshake request.
    pub fn call(&self, op: Op, payload: Value) -> Result<Value, VisionError> {
        self.call_raw(op, payload)
    }
}

/// Shared adapter connections keyed by endpoint, plus named in-process
/// servers.
pub struct AdapterPool {
    servers: RwLock<HashMap<String, Arc<dyn AdapterServer>>>,
    clients: Mutex<HashMap<String, Arc<AdapterClient>>>,
    timeout: Duration,
}

impl Default for AdapterPool {
    fn default() -> Self {
        let pool = Self {
            servers: RwLock::new(HashMap::new()),
            clients: Mutex::new(HashMap::new()),
            timeout: Duration::from_secs(600),
        };
        pool.register_server("stub", Arc::new(StubAdapter::default()));
        pool
    }
}

impl std::fmt::Debug for AdapterPool {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let names: Vec<String> = self
            .servers
            .read()
            .expect("servers poisoned")
            .keys()
            .cloned()
            .collect();
        f.debug_struct("AdapterPool")
            .field("servers", &names)
            .finish()
    }
}

impl AdapterPool {
    pub fn new() -> Self {
        Self::default()
    }

    /// Makes an in-process server reachable as `{"transport":"in_process","address":name}`.
    /// Replaces any server of that name and drops its cached connection.
    pub fn register_server(&self, name: &str, server: Arc<dyn AdapterServer>) {
        self.servers
            .write()
            .expect("servers poisoned")
            .insert(name.to_owned(), server);
        let key = AdapterEndpoint::in_process(name).key();
        self.clients.lock().expect("clients poisoned").remove(&key);
    }

    pub fn client(&self, endpoint: &AdapterEndpoint) -> Result<Arc<AdapterClient>, VisionError> {
        let key = endpoint.key();
        let mut clients = self.clients.lock().expect("clients poisoned");
        if let Some(c) = clients.get(&key) {
            return Ok(Arc::clone(c));
        }
        let transport: Box<dyn Transport> = match endpoint.transport {
            TransportKind::InProcess => {
                let server = self
                    .servers
                    .read()
                    .expect("servers poisoned")
                    .get(&endpoint.address)
                    .cloned()
                    .ok_or_else(|| {
                        VisionError::Transport(format!(
                            "no in-process adapter named `{}`",
                            endpoint.address
                        ))
                    })?;
                Box::new(InProcessTransport(server))
            }
            TransportKind::Subprocess => {
                Box::new(SubprocessTransport::new(&endpoint.address, self.timeout))
            }
            TransportKind::Http => Box::new(HttpTransport::new(&endpoint.address, self.timeout)),
        };
        let client = Arc::new(AdapterClient::new(&endpoint.address, transport));
        clients.insert(key, Arc::clone(&client));
        Ok(client)
    }
}
