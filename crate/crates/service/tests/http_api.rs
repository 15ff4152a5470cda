mod common;

use std::sync::Arc;
use std::time::Duration;

use common::{agent, anova_turns, get, post, send, spawn, write_groups, Server};
use phenoflow::config::Config;
use phenoflow::fixtures::{self, case1};
use phenoflow::manager::{EventKind, Manager, SessionConfig, SessionEvent, SessionStatus};
use phenoflow_service::server::WireEvent;
use serde_json::{json, Value};
use tungstenite::Message;

type Socket = tungstenite::WebSocket<tungstenite::stream::MaybeTlsStream<std::net::TcpStream>>;

fn connect(server: &Server, id: &str, from_seq: u64) -> Socket {
    let url = format!("ws://{}/sessions/{id}/events?from_seq={from_seq}", server.addr);
    let (socket, _) = tungstenite::connect(url).unwrap();
    if let tungstenite::stream::MaybeTlsStream::Plain(tcp) = socket.get_ref() {
        tcp.set_read_timeout(Some(Duration::from_secs(20))).unwrap();
    }
    socket
}

fn next_frame(socket: &mut Socket) -> WireEvent {
    loop {
        match socket.read().unwrap() {
            Message::Text(t) => return serde_json::from_str(&t).unwrap(),
            Message::Ping(_) | Message::Pong(_) => continue,
            other => panic!("unexpected frame {other:?}"),
        }
    }
}

/// Frames until (and including) the first of `kind`.
fn read_until(socket: &mut Socket, kind: EventKind) -> Vec<WireEvent> {
    let mut out = Vec::new();
    loop {
        let f = next_frame(socket);
        let done = f.event.kind == kind;
        out.push(f);
        if done {
            return out;
        }
    }
}

fn create_session(base: &str, body: Value) -> String {
    let (status, body) = post(base, "/sessions", body);
    assert_eq!(status, 201, "{body}");
    body["session_id"].as_str().unwrap().to_owned()
}

fn case1_over_http(server: &Server) -> String {
    let id = create_session(&server.base, json!({"replay": case1::turns()}));
    let root = server.state.manager.workspace(&id).unwrap().root().to_owned();
    case1::write_dataset(&root).unwrap();
    let (status, body) = post(
        &server.base,
        &format!("/sessions/{id}/messages?wait=true"),
        json!({"text": case1::PROMPT}),
    );
    assert_eq!(status, 200, "{body}");
    assert_eq!(body["status"], "terminated");
    id
}

/// Events with run-specific strings replaced so two stores compare equal.
fn normalized(events: &[SessionEvent], id: &str, root: &std::path::Path) -> Vec<Value> {
    events
        .iter()
        .map(|e| {
            let text = serde_json::to_string(&e.without_timestamp())
                .unwrap()
                .replace(id, "<session>")
                .replace(&root.display().to_string(), "<root>");
            serde_json::from_str(&text).unwrap()
        })
        .collect()
}

#[test]
fn http_and_module_runs_give_identical_transcripts() {
    let module_dir = tempfile::tempdir().unwrap();
    let m = Manager::open(module_dir.path()).unwrap();
    fixtures::install_models(&m.services().model_zoo, &case1::model_zoo_entries().unwrap()).unwrap();
    let mid = m.start_session(SessionConfig::new(Arc::new(case1::provider()))).unwrap();
    case1::write_dataset(m.workspace(&mid).unwrap().root()).unwrap();
    assert_eq!(m.submit_user_message(&mid, case1::PROMPT, &[]).unwrap(), SessionStatus::Terminated);
    let module_events = normalized(&m.events(&mid, 0).unwrap(), &mid, module_dir.path());

    let http_dir = tempfile::tempdir().unwrap();
    let server = spawn(Config::with_store_root(http_dir.path()));
    let hid = case1_over_http(&server);
    let (status, wire) = get(&server.base, &format!("/sessions/{hid}/events"));
    assert_eq!(status, 200);
    let wire: Vec<WireEvent> = serde_json::from_value(wire).unwrap();
    assert!(wire.iter().all(|w| w.session_id == hid));
    let http_events: Vec<SessionEvent> = wire.into_iter().map(|w| w.event).collect();
    let http_events = normalized(&http_events, &hid, http_dir.path());

    assert_eq!(module_events.len(), http_events.len());
    for (a, b) in module_events.iter().zip(&http_events) {
        assert_eq!(a, b);
    }
    let csv_module = std::fs::read(m.workspace(&mid).unwrap().resolve(case1::RESULT_PATH).unwrap()).unwrap();
    let resp = agent()
        .get(format!("{}/sessions/{hid}/artifacts/results/Case1/aracrop_phenotypes.csv", server.base))
        .call()
        .unwrap();
    assert_eq!(resp.headers()["content-type"], "text/csv; charset=utf-8");
    let csv_http = resp.into_body().read_to_vec().unwrap();
    assert_eq!(csv_module, csv_http);
}

#[test]
fn event_stream_resumes_from_a_sequence_number() {
    let dir = tempfile::tempdir().unwrap();
    let server = spawn(Config::with_store_root(dir.path()));
    let id = case1_over_http(&server);
    let all = server.state.manager.events(&id, 0).unwrap();
    let last = all.last().unwrap().seq;
    assert!(last > 5);

    let mut socket = connect(&server, &id, 5);
    let frames = read_until(&mut socket, EventKind::Terminated);
    let seqs: Vec<u64> = frames.iter().map(|f| f.event.seq).collect();
    assert_eq!(seqs, (5..=last).collect::<Vec<_>>());
    for (f, e) in frames.iter().zip(&all[5..]) {
        assert_eq!(&f.event, e);
    }

    let (_, plain) = get(&server.base, &format!("/sessions/{id}/events?from_seq=5"));
    let plain: Vec<WireEvent> = serde_json::from_value(plain).unwrap();
    assert_eq!(plain.iter().map(|w| w.event.seq).collect::<Vec<_>>(), seqs);
}

#[test]
fn live_stream_carries_an_approval_round_trip_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let server = spawn(Config::with_store_root(dir.path()));
    let id = create_session(&server.base, json!({"replay": anova_turns(), "approval": "gated"}));
    write_groups(server.state.manager.workspace(&id).unwrap().root());

    let mut first = connect(&server, &id, 0);
    let mut second = connect(&server, &id, 0);
    let (status, body) = post(&server.base, &format!("/sessions/{id}/messages"), json!({"text": "compare the groups"}));
    assert_eq!(status, 202, "{body}");

    let before = read_until(&mut first, EventKind::ApprovalRequested);
    let kinds: Vec<EventKind> = before.iter().map(|f| f.event.kind).collect();
    let plan = kinds.iter().position(|k| *k == EventKind::Plan).unwrap();
    let proposed = kinds.iter().position(|k| *k == EventKind::ToolCallProposed).unwrap();
    assert!(plan < proposed);
    assert_eq!(before.last().unwrap().event.call_id(), Some("c1"));

    let (status, body) = post(&server.base, &format!("/sessions/{id}/approvals/nope"), json!({"decision": "approve"}));
    assert_eq!(status, 404, "{body}");
    let (status, body) = post(
        &server.base,
        &format!("/sessions/{id}/approvals/c1"),
        json!({"decision": "approve", "note": "go ahead"}),
    );
    assert_eq!(status, 202, "{body}");

    let mut frames = before;
    frames.extend(read_until(&mut first, EventKind::Terminated));
    let seqs: Vec<u64> = frames.iter().map(|f| f.event.seq).collect();
    assert_eq!(seqs, (0..frames.len() as u64).collect::<Vec<_>>());
    let resolved = frames.iter().find(|f| f.event.kind == EventKind::ApprovalResolved).unwrap();
    assert_eq!(resolved.event.payload["note"], "go ahead");

    // A second subscriber sees the identical sequence.
    let other = read_until(&mut second, EventKind::Terminated);
    assert_eq!(
        other.iter().map(|f| &f.event).collect::<Vec<_>>(),
        frames.iter().map(|f| &f.event).collect::<Vec<_>>()
    );

    let (_, info) = get(&server.base, &format!("/sessions/{id}"));
    assert_eq!(info["status"], "terminated");
    let (status, _) = get(&server.base, &format!("/sessions/{id}/artifacts/anova.csv"));
    assert_eq!(status, 200);
    server.state.manager.check_transcript(&id).unwrap();
}

#[test]
fn artifacts_are_served_listed_and_confined() {
    let dir = tempfile::tempdir().unwrap();
    let server = spawn(Config::with_store_root(dir.path()));
    let id = create_session(&server.base, json!({"replay": []}));

    let (status, body) = get(&server.base, &format!("/sessions/{id}/artifacts/missing.png"));
    assert_eq!(status, 404);
    assert!(body["error"].as_str().unwrap().contains("missing.png"), "{body}");

    let resp = agent()
        .put(format!("{}/sessions/{id}/artifacts/uploads/note.txt", server.base))
        .send(&b"hello"[..]);
    assert_eq!(send(resp).0, 201);
    let resp = agent()
        .get(format!("{}/sessions/{id}/artifacts/uploads/note.txt", server.base))
        .call()
        .unwrap();
    assert_eq!(resp.headers()["content-type"], "text/plain; charset=utf-8");
    assert_eq!(resp.into_body().read_to_string().unwrap(), "hello");
    let (_, listing) = get(&server.base, &format!("/sessions/{id}/artifacts"));
    assert_eq!(listing["artifacts"], json!([{"name": "uploads/note.txt", "size": 5}]));

    std::fs::write(dir.path().join("secret.txt"), "outside").unwrap();
    for escape in ["..%2F..%2Fsecret.txt", "%2E%2E/%2E%2E/secret.txt"] {
        let (status, body) = get(&server.base, &format!("/sessions/{id}/artifacts/{escape}"));
        assert!(status == 400 || status == 404, "{escape}: {status}");
        assert!(!body.to_string().contains("outside"));
    }
    #[cfg(unix)]
    {
        let root = server.state.manager.workspace(&id).unwrap().root().to_owned();
        std::os::unix::fs::symlink(dir.path().join("secret.txt"), root.join("link.txt")).unwrap();
        let (status, body) = get(&server.base, &format!("/sessions/{id}/artifacts/link.txt"));
        assert_eq!(status, 404);
        assert!(!body.to_string().contains("outside"));
    }
    assert_eq!(get(&server.base, "/sessions/nope/artifacts/x.csv").0, 404);
}

#[test]
fn zoos_and_pipeline_replay_endpoints() {
    let dir = tempfile::tempdir().unwrap();
    let server = spawn(Config::with_store_root(dir.path()));
    let (_, models) = get(&server.base, "/zoo/models");
    let ids: Vec<&str> = models["models"].as_array().unwrap().iter().map(|m| m["identifier"].as_str().unwrap()).collect();
    assert!(ids.contains(&case1::CHECKPOINT), "{ids:?}");

    let source = case1_over_http(&server);
    server
        .state
        .manager
        .summarise_pipeline(&source, case1::PIPELINE_NAME, "traits with metadata", &case1::bindings())
        .unwrap();
    let (_, zoo) = get(&server.base, "/zoo/pipelines");
    assert_eq!(zoo["pipelines"][0]["name"], case1::PIPELINE_NAME);

    let target = create_session(&server.base, json!({"replay": []}));
    case1::write_dataset(server.state.manager.workspace(&target).unwrap().root()).unwrap();
    let path = format!("/pipelines/{}/replay", case1::PIPELINE_NAME);
    let (status, body) = post(
        &server.base,
        &path,
        json!({"session_id": target, "arguments": {"metadata_path": case1::METADATA_PATH}}),
    );
    assert_eq!(status, 400, "{body}");
    assert!(body["error"].as_str().unwrap().contains("output_dir"));
    let (status, body) = post(
        &server.base,
        &path,
        json!({"session_id": target, "arguments": {"metadata_path": case1::METADATA_PATH, "output_dir": case1::OUTPUT_DIR}}),
    );
    assert_eq!(status, 200, "{body}");
    assert_eq!(body["report"]["ok"], true);
    let a = std::fs::read(server.state.manager.workspace(&source).unwrap().resolve(case1::RESULT_PATH).unwrap()).unwrap();
    let b = std::fs::read(server.state.manager.workspace(&target).unwrap().resolve(case1::RESULT_PATH).unwrap()).unwrap();
    assert_eq!(a, b);

    let before = server.state.manager.store().list().len();
    assert_eq!(post(&server.base, "/pipelines/no_such_pipeline/replay", json!({})).0, 404);
    assert_eq!(server.state.manager.store().list().len(), before);
}

#[test]
fn request_errors_map_to_statuses() {
    let dir = tempfile::tempdir().unwrap();
    let server = spawn(Config::with_store_root(dir.path()));
    assert_eq!(post(&server.base, "/sessions/nope/messages", json!({"text": "hi"})).0, 404);
    assert_eq!(get(&server.base, "/sessions/nope/events").0, 404);
    let id = create_session(&server.base, json!({"replay": []}));
    let (status, body) = post(&server.base, &format!("/sessions/{id}/messages"), json!({"text": "  "}));
    assert_eq!(status, 400, "{body}");
    let (status, _) = post(
        &server.base,
        &format!("/sessions/{id}/messages"),
        json!({"text": "look", "attachments": ["nope.png"]}),
    );
    assert_eq!(status, 400);
    assert_eq!(post(&server.base, &format!("/sessions/{id}/approvals/c9"), json!({"decision": "approve"})).0, 404);
    assert_eq!(post(&server.base, "/sessions", json!({"bogus": 1})).0, 422);
}

#[test]
fn bearer_token_guards_every_route_and_never_leaks() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = Config::with_store_root(dir.path());
    config.server.token = Some("s3cret-token".into());
    let server = spawn(config);
    assert_eq!(get(&server.base, "/zoo/models").0, 401);
    let authed = |path: &str| {
        send(
            agent()
                .get(format!("{}{path}", server.base))
                .header("Authorization", "Bearer s3cret-token")
                .call(),
        )
    };
    assert_eq!(authed("/zoo/models").0, 200);
    assert_eq!(get(&server.base, "/zoo/models?token=s3cret-token").0, 200);

    let resp = agent()
        .post(format!("{}/sessions", server.base))
        .header("Authorization", "Bearer s3cret-token")
        .send_json(json!({"replay": anova_turns()}));
    let (status, created) = send(resp);
    assert_eq!(status, 201);
    let id = created["session_id"].as_str().unwrap();
    write_groups(server.state.manager.workspace(id).unwrap().root());
    let resp = agent()
        .post(format!("{}/sessions/{id}/messages?wait=true", server.base))
        .header("Authorization", "Bearer s3cret-token")
        .send_json(json!({"text": "compare"}));
    assert_eq!(send(resp).0, 200);
    let (_, events) = authed(&format!("/sessions/{id}/events"));
    assert!(!events.to_string().contains("s3cret-token"));
    let transcript = std::fs::read_to_string(dir.path().join(id).join("events.jsonl")).unwrap();
    assert!(!transcript.contains("s3cret-token"));
}
