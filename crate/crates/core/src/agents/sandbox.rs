//! Confined script execution.
//!
//! A script runs with the session root as its working directory, a cleared
//! environment plus an allowlist, a wall-clock timeout, and per-stream output
//! caps. Before launch, string literals naming paths outside the root are
//! rejected. The Python profile additionally boots through an audit hook that
//! kills the interpreter on any write outside the root, any read outside the
//! root and the system library prefixes, any subprocess, and any socket use.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use regex::Regex;
use serde::{Deserialize, Serialize};
use wait_timeout::ChildExt;

use super::AgentError;
use crate::workspace::{normalize, Workspace};

pub const SANDBOX_DIR: &str = ".sandbox";
pub const SCRIPTS_DIR: &str = ".scripts";
pub const VIOLATION_EXIT: i32 = 97;
const VIOLATION_MARKER: &str = "SANDBOX_VIOLATION";
const PYTHON_BOOT: &str = include_str!("../../assets/sandbox_boot.py");

/// How to run a script in some language.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpreterProfile {
    pub name: String,
    /// Argument vector; `{script_path}` and `{workdir}` are substituted.
    pub command: Vec<String>,
    /// File extension of written scripts, without the dot.
    pub extension: String,
    pub timeout_secs: u64,
    /// Bytes kept per output stream.
    pub output_cap: usize,
    /// Variables copied from the parent environment.
    pub env_allowlist: Vec<String>,
    /// Extra variables; values may use `{workdir}`.
    #[serde(default)]
    pub env: BTreeMap<String, String>,
    /// Installs the Python audit-hook boot file before each run.
    #[serde(default)]
    pub python_boot: bool,
}

impl InterpreterProfile {
    pub fn python() -> Self {
        let env = [
            ("MPLBACKEND", "Agg"),
            ("MPLCONFIGDIR", "{workdir}/.sandbox/mpl"),
            ("PYTHONHASHSEED", "0"),
            ("PYTHONIOENCODING", "utf-8"),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_owned(), v.to_owned()))
        .collect();
        Self {
            name: "python".into(),
            command: ["python3", "-B", "-s", "{workdir}/.sandbox/boot.py", "{workdir}", "{script_path}"]
                .map(String::from)
                .to_vec(),
            extension: "py".into(),
            timeout_secs: 120,
            output_cap: 64 * 1024,
            env_allowlist: ["PATH", "LANG", "LC_ALL"].map(String::from).to_vec(),
            env,
            python_boot: true,
        }
    }

    /// POSIX shell; confinement is limited to the literal pre-scan and the
    /// working directory.
    pub fn shell() -> Self {
        Self {
            name: "sh".into(),
            command: ["sh", "{script_path}"].map(String::from).to_vec(),
            extension: "sh".into(),
            python_boot: false,
            env: BTreeMap::new(),
            ..Self::python()
        }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_secs)
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout_secs = timeout.as_secs().max(1);
        self
    }
}

/// Named profiles plus the default one.
#[derive(Debug, Clone)]
pub struct Interpreters {
    profiles: BTreeMap<String, InterpreterProfile>,
    default: String,
}

impl Default for Interpreters {
    fn default() -> Self {
        let mut i = Self {
            profiles: BTreeMap::new(),
            default: "python".into(),
        };
        i.insert(InterpreterProfile::python());
        i.insert(InterpreterProfile::shell());
        i
    }
}

impl Interpreters {
    pub fn insert(&mut self, profile: InterpreterProfile) {
        self.profiles.insert(profile.name.clone(), profile);
    }

    pub fn get(&self, name: Option<&str>) -> Result<&InterpreterProfile, AgentError> {
        let name = name.unwrap_or(&self.default);
        self.profiles
            .get(name)
            .ok_or_else(|| AgentError::Precondition(format!("unknown interpreter profile `{name}`")))
    }

    pub fn default_profile(&self) -> &InterpreterProfile {
        &self.profiles[&self.default]
    }

    pub fn set_default(&mut self, name: &str) -> Result<(), AgentError> {
        self.get(Some(name))?;
        self.default = name.to_owned();
        Ok(())
    }
}

/// Counting semaphore bounding concurrent script subprocesses.
#[derive(Debug)]
pub struct ScriptSlots {
    free: Mutex<usize>,
    cv: Condvar,
    capacity: usize,
}

pub struct SlotGuard<'a>(&'a ScriptSlots);

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("slot counter poisoned") += 1;
        self.0.cv.notify_one();
    }
}

impl Default for ScriptSlots {
    fn default() -> Self {
        Self::new(4)
    }
}

impl ScriptSlots {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "script slot capacity must be positive");
        Self {
            free: Mutex::new(capacity),
            cv: Condvar::new(),
            capacity,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn acquire(&self) -> SlotGuard<'_> {
        let mut free = self.free.lock().expect("slot counter poisoned");
        while *free == 0 {
            free = self.cv.wait(free).expect("slot counter poisoned");
        }
        *free -= 1;
        SlotGuard(self)
    }

    pub fn available(&self) -> usize {
        *self.free.lock().expect("slot counter poisoned")
    }
}

/// One subprocess run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Execution {
    /// `None` when killed by a signal or the timeout.
    pub exit_code: Option<i32>,
    pub stdout: String,
    pub stderr: String,
    pub timed_out: bool,
    pub truncated: bool,
    pub duration_ms: u64,
    /// Relative to the workspace root.
    pub script_path: String,
}

impl Execution {
    pub fn success(&self) -> bool {
        self.exit_code == Some(0) && !self.timed_out
    }

    /// A short failure description for feeding back to a model.
    pub fn failure_report(&self) -> String {
        let status = if self.timed_out {
            "timed out".to_owned()
        } else {
            match self.exit_code {
                Some(c) => format!("exited with status {c}"),
                None => "was killed by a signal".to_owned(),
            }
        };
        format!("The script {status}.\nstderr:\n{}\nstdout:\n{}", self.stderr, self.stdout)
    }
}

fn literal_pattern() -> &'static Regex {
    static RE: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    RE.get_or_init(|| Regex::new(r#""([^"\\\n]*)"|'([^'\\\n]*)'"#).expect("literal regex"))
}

fn path_like() -> &'static Regex {
    static RE: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^(~(/\S*)?|\S*/\S*)$").expect("path regex"))
}

/// Path literals in `source` that point outside `root`. `/dev/` paths are
/// permitted.
pub fn prescan(source: &str, root: &Path) -> Vec<String> {
    let mut out = Vec::new();
    for cap in literal_pattern().captures_iter(source) {
        let lit = cap.get(1).or_else(|| cap.get(2)).map_or("", |m| m.as_str());
        if lit == "/" || !path_like().is_match(lit) || lit.starts_with("/dev/") {
            continue;
        }
        let escapes = if lit.starts_with('~') {
            true
        } else {
            let joined = if lit.starts_with('/') {
                PathBuf::from(lit)
            } else {
                root.join(lit)
            };
            normalize(&joined).is_none_or(|p| !p.starts_with(root))
        };
        if escapes && !out.iter().any(|o| o == lit) {
            out.push(lit.to_owned());
        }
    }
    out
}

fn substitute(template: &str, script: &Path, workdir: &Path) -> String {
    template
        .replace("{script_path}", &script.display().to_string())
        .replace("{workdir}", &workdir.display().to_string())
}

fn drain(mut reader: impl Read + Send + 'static, cap: usize) -> std::thread::JoinHandle<(Vec<u8>, bool)> {
    std::thread::spawn(move || {
        let mut kept = Vec::new();
        let mut truncated = false;
        let mut buf = [0u8; 8192];
        loop {
            match reader.read(&mut buf) {
                Ok(0) | Err(_) => break,
                Ok(n) => {
                    let room = cap.saturating_sub(kept.len());
                    kept.extend_from_slice(&buf[..n.min(room)]);
                    truncated |= n > room;
                }
            }
        }
        (kept, truncated)
    })
}

/// Kills the child's whole process group so that grandchildren holding the
/// output pipes die too.
fn kill_tree(child: &mut std::process::Child) {
    #[cfg(unix)]
    {
        if let Ok(pid) = i32::try_from(child.id()) {
            // SAFETY: signalling a process group we created; no memory is shared.
            unsafe {
                libc::kill(-pid, libc::SIGKILL);
            }
        }
    }
    let _ = child.kill();
}

/// Writes `source` under `.scripts/` and runs it with `profile`.
///
/// Returns [`AgentError::SandboxViolation`] when the pre-scan finds an
/// escaping literal (nothing is executed) or the runtime guard fires.
pub fn execute(
    ws: &Workspace,
    profile: &InterpreterProfile,
    slots: &ScriptSlots,
    source: &str,
    label: &str,
) -> Result<Execution, AgentError> {
    let root = ws.root();
    let escaping = prescan(source, root);
    if !escaping.is_empty() {
        return Err(AgentError::SandboxViolation(format!(
            "script references paths outside the working directory: {}",
            escaping.join(", ")
        )));
    }
    let io = |p: &Path, e: std::io::Error| AgentError::Io(format!("{}: {e}", p.display()));
    let sandbox = root.join(SANDBOX_DIR);
    for dir in [sandbox.join("home"), sandbox.join("tmp"), root.join(SCRIPTS_DIR)] {
        std::fs::create_dir_all(&dir).map_err(|e| io(&dir, e))?;
    }
    if profile.python_boot {
        let boot = sandbox.join("boot.py");
        std::fs::write(&boot, PYTHON_BOOT).map_err(|e| io(&boot, e))?;
    }
    let script = root
        .join(SCRIPTS_DIR)
        .join(format!("{label}.{}", profile.extension));
    std::fs::write(&script, source).map_err(|e| io(&script, e))?;

    let argv: Vec<String> = profile.command.iter().map(|a| substitute(a, &script, root)).collect();
    let (program, args) = argv
        .split_first()
        .ok_or_else(|| AgentError::Precondition(format!("profile `{}` has an empty command", profile.name)))?;
    let mut cmd = Command::new(program);
    cmd.args(args)
        .current_dir(root)
        .env_clear()
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    for key in &profile.env_allowlist {
        if let Ok(v) = std::env::var(key) {
            cmd.env(key, v);
        }
    }
    cmd.env("HOME", sandbox.join("home"))
        .env("TMPDIR", sandbox.join("tmp"))
        .env("SANDBOX_ROOT", root);
    for (k, v) in &profile.env {
        cmd.env(k, substitute(v, &script, root));
    }

    #[cfg(unix)]
    {
        use std::os::unix::process::CommandExt;
        cmd.process_group(0);
    }
    let _slot = slots.acquire();
    let started = Instant::now();
    let mut child = cmd
        .spawn()
        .map_err(|e| AgentError::Io(format!("cannot start `{program}`: {e}")))?;
    let out = drain(child.stdout.take().expect("piped stdout"), profile.output_cap);
    let err = drain(child.stderr.take().expect("piped stderr"), profile.output_cap);
    let (status, timed_out) = match child
        .wait_timeout(profile.timeout())
        .map_err(|e| AgentError::Io(e.to_string()))?
    {
        Some(status) => (Some(status), false),
        None => {
            kill_tree(&mut child);
            (child.wait().ok(), true)
        }
    };
    let (stdout, t1) = out.join().unwrap_or_default();
    let (stderr, t2) = err.join().unwrap_or_default();
    let exec = Execution {
        exit_code: if timed_out { None } else { status.and_then(|s| s.code()) },
        stdout: String::from_utf8_lossy(&stdout).into_owned(),
        stderr: String::from_utf8_lossy(&stderr).into_owned(),
        timed_out,
        truncated: t1 || t2,
        duration_ms: started.elapsed().as_millis() as u64,
        script_path: ws.relative(&script),
    };
    tracing::debug!(script = %exec.script_path, code = ?exec.exit_code, ms = exec.duration_ms, "script finished");
    if exec.exit_code == Some(VIOLATION_EXIT) {
        if let Some(line) = exec.stderr.lines().find(|l| l.starts_with(VIOLATION_MARKER)) {
            return Err(AgentError::SandboxViolation(
                line.trim_start_matches(VIOLATION_MARKER).trim_start_matches(':').trim().to_owned(),
            ));
        }
    }
    Ok(exec)
}
