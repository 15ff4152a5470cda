#![allow(dead_code)]

use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;

use phenoflow::config::Config;
use phenoflow::fixtures::{self, case1};
use phenoflow::llm::{AssistantTurn, FinishReason, ToolCallRequest};
use phenoflow::manager::Manager;
use phenoflow::toolkit::{default_registry, Services};
use phenoflow_service::server::{router, AppState};
use serde_json::{json, Value};

pub struct Server {
    pub base: String,
    pub addr: SocketAddr,
    pub state: AppState,
}

/// Serves `config` on an ephemeral port from a background runtime.
pub fn spawn(config: Config) -> Server {
    let services = Services::from_config(&config).unwrap();
    fixtures::install_models(&services.model_zoo, &case1::model_zoo_entries().unwrap()).unwrap();
    let manager = Arc::new(Manager::new(Arc::new(services), Arc::new(default_registry())));
    let state = AppState::new(manager, config);
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    listener.set_nonblocking(true).unwrap();
    let addr = listener.local_addr().unwrap();
    let app = router(state.clone());
    std::thread::spawn(move || {
        let rt = tokio::runtime::Runtime::new().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(listener).unwrap();
            axum::serve(listener, app).await.unwrap();
        });
    });
    Server {
        base: format!("http://{addr}"),
        addr,
        state,
    }
}

pub fn agent() -> ureq::Agent {
    ureq::Agent::config_builder()
        .http_status_as_error(false)
        .build()
        .into()
}

/// `(status, body as JSON)`; a non-JSON body becomes a string.
pub fn send(req: Result<ureq::http::Response<ureq::Body>, ureq::Error>) -> (u16, Value) {
    let mut resp = req.unwrap();
    let status = resp.status().as_u16();
    let text = resp.body_mut().read_to_string().unwrap();
    let body = serde_json::from_str(&text).unwrap_or(Value::String(text));
    (status, body)
}

pub fn get(base: &str, path: &str) -> (u16, Value) {
    send(agent().get(format!("{base}{path}")).call())
}

pub fn post(base: &str, path: &str, body: Value) -> (u16, Value) {
    send(agent().post(format!("{base}{path}")).send_json(body))
}

pub fn turn(text: &str, calls: Vec<ToolCallRequest>) -> AssistantTurn {
    AssistantTurn {
        text: Some(text.to_owned()),
        finish: if calls.is_empty() { FinishReason::Stop } else { FinishReason::ToolCalls },
        tool_calls: calls,
    }
}

/// A plan with one gated ANOVA call, then a terminating summary.
pub fn anova_turns() -> Vec<AssistantTurn> {
    vec![
        turn(
            "Plan: run a one-way ANOVA over the two groups.",
            vec![ToolCallRequest::new(
                "c1",
                "statistical_test",
                json!({"csv_path": "groups.csv", "test": "anova", "columns": ["group", "value"], "output_path": "anova.csv"}),
            )],
        ),
        turn("The groups differ. TERMINATE", vec![]),
    ]
}

pub fn write_groups(root: &Path) {
    std::fs::write(root.join("groups.csv"), "group,value\na,1\na,2\na,3\nb,4\nb,5\nb,7\n").unwrap();
}
