//! Wire messages: one JSON object per line in each direction.

use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Op {
    Capabilities,
    Infer,
    Train,
    JobStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub id: u64,
    pub op: Op,
    #[serde(default)]
    pub payload: Value,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolError {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub id: u64,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ProtocolError>,
}

impl Response {
    pub fn success(id: u64, payload: Value) -> Self {
        Self {
            id,
            ok: true,
            payload: Some(payload),
            error: None,
        }
    }

    pub fn failure(id: u64, code: &str, message: impl Into<String>) -> Self {
        Self {
            id,
            ok: false,
            payload: None,
            error: Some(ProtocolError {
                code: code.to_owned(),
                message: message.into(),
            }),
        }
    }

    /// `ok` responses carry a payload and no error; failures the reverse.
    pub fn is_well_formed(&self) -> bool {
        if self.ok {
            self.payload.is_some() && self.error.is_none()
        } else {
            self.error.is_some()
        }
    }
}

/// Answers a raw request line. Lines that are not requests get an error
/// response with id 0 rather than silence.
pub fn handle_line(line: &str, handle: impl FnOnce(Request) -> Response) -> Response {
    match serde_json::from_str::<Request>(line) {
        Ok(req) => handle(req),
        Err(e) => {
            let id = serde_json::from_str::<Value>(line)
                .ok()
                .and_then(|v| v.get("id").and_then(Value::as_u64))
                .unwrap_or(0);
            Response::failure(id, "bad_request", e.to_string())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_round_trip() {
        let line = r#"{"id":7,"op":"job_status","payload":{"job_id":"j1"}}"#;
        let req: Request = serde_json::from_str(line).unwrap();
        assert_eq!(req.op, Op::JobStatus);
        assert_eq!(serde_json::to_string(&req).unwrap(), line);
    }

    #[test]
    fn malformed_lines_are_answered() {
        let r = handle_line(r#"{"id":3,"op":"dance"}"#, |_| unreachable!());
        assert_eq!(r.id, 3);
        assert!(!r.ok);
        assert_eq!(r.error.unwrap().code, "bad_request");
        let r = handle_line("garbage", |_| unreachable!());
        assert_eq!(r.id, 0);
    }
}
