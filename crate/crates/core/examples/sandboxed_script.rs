//! Runs generated code inside a session workspace and shows the two ways
//! an escape attempt is stopped.

use phenoflow::agents::{execute, AgentError, InterpreterProfile, ScriptSlots};
use phenoflow::workspace::Workspace;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let ws = Workspace::create(dir.path().join("session"))?;
    let python = InterpreterProfile::python();
    let slots = ScriptSlots::default();

    let ok = execute(&ws, &python, &slots, "open('out.txt', 'w').write('hi')\nprint('wrote out.txt')\n", "write")?;
    println!("in-root write: exit {:?}, stdout {:?}", ok.exit_code, ok.stdout.trim());

    match execute(&ws, &python, &slots, "open('../escaped.txt', 'w').write('x')\n", "literal") {
        Err(AgentError::SandboxViolation(why)) => println!("literal escape refused: {why}"),
        other => println!("unexpected: {other:?}"),
    }
    let computed = "import os\nopen(os.path.join('..', 'esc' + 'aped.txt'), 'w').write('x')\n";
    match execute(&ws, &python, &slots, computed, "computed") {
        Err(AgentError::SandboxViolation(why)) => println!("computed escape stopped: {why}"),
        other => println!("unexpected: {other:?}"),
    }
    println!("escaped file exists: {}", dir.path().join("escaped.txt").exists());
    Ok(())
}
