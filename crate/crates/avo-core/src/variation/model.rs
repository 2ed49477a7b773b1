//! Model-backed generation and policy: a chat-style request/response
//! protocol over HTTP.
//!
//! Requests POST a JSON body `{"messages": [{"role", "content"}, ...]}` to
//! the configured endpoint with an optional bearer credential; the service
//! replies `{"content": "..."}`. The classical generator sends a single
//! prompt and treats the reply verbatim as the candidate source. The
//! agentic policy keeps the whole conversation and expects each reply to be
//! one JSON tool call, e.g. `{"tool": "propose_edit", "args": {"source":
//! "..."}}`; `{"tool": "halt"}` ends the step. Malformed replies get one
//! corrective round-trip before the policy gives up; transport failures
//! propagate and end the variation step.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::lineage::{geomean, LineageEntry};

use super::agentic::{AgentPolicy, PolicyAction, PolicyError, PolicyView, ToolCall};

/// Environment variable naming the chat endpoint.
pub const ENDPOINT_ENV: &str = "AVO_MODEL_ENDPOINT";
/// Environment variable holding the bearer credential (optional).
pub const KEY_ENV: &str = "AVO_MODEL_KEY";

/// Default per-call transport timeout.
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(120);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: &str, content: impl Into<String>) -> ChatMessage {
        ChatMessage {
            role: role.to_string(),
            content: content.into(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("{ENDPOINT_ENV} is not set")]
    MissingEndpoint,
    #[error("model transport failure: {0}")]
    Transport(String),
    #[error("malformed model response: {0}")]
    BadResponse(String),
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    messages: &'a [ChatMessage],
}

#[derive(Deserialize)]
struct ChatResponse {
    content: String,
}

/// Blocking HTTP client for the chat protocol.
#[derive(Debug, Clone)]
pub struct ModelClient {
    endpoint: String,
    key: Option<String>,
    agent: ureq::Agent,
}

impl ModelClient {
    pub fn new(endpoint: impl Into<String>, key: Option<String>) -> ModelClient {
        ModelClient::with_timeout(endpoint, key, DEFAULT_TIMEOUT)
    }

    pub fn with_timeout(
        endpoint: impl Into<String>,
        key: Option<String>,
        timeout: Duration,
    ) -> ModelClient {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build();
        ModelClient {
            endpoint: endpoint.into(),
            key,
            agent: config.into(),
        }
    }

    /// Read endpoint and credential from `AVO_MODEL_ENDPOINT` /
    /// `AVO_MODEL_KEY`.
    pub fn from_env() -> Result<ModelClient, ModelError> {
        let endpoint = std::env::var(ENDPOINT_ENV).map_err(|_| ModelError::MissingEndpoint)?;
        let key = std::env::var(KEY_ENV).ok();
        Ok(ModelClient::new(endpoint, key))
    }

    /// One request/response round trip.
    pub fn chat(&self, messages: &[ChatMessage]) -> Result<String, ModelError> {
        let mut request = self.agent.post(&self.endpoint);
        if let Some(key) = &self.key {
            request = request.header("authorization", &format!("Bearer {key}"));
        }
        let mut response = request
            .send_json(ChatRequest { messages })
            .map_err(|e| ModelError::Transport(e.to_string()))?;
        let parsed: ChatResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| ModelError::BadResponse(e.to_string()))?;
        Ok(parsed.content)
    }
}

/// The single-prompt format used by the classical model-backed generator:
/// parent source, inspiration sources, a score table, and the instruction
/// line. The reply is used verbatim as the candidate.
pub fn classical_prompt(parent: &LineageEntry, inspirations: &[LineageEntry]) -> Vec<ChatMessage> {
    let mut prompt = String::from(
        "Optimize the following straight-line register VM program for cycle \
         cost while preserving the value it leaves in r0.\n\n",
    );
    let describe = |label: &str, entry: &LineageEntry, out: &mut String| {
        out.push_str(&format!(
            "{label} (version {}, geomean {:.3}):\n{}\n",
            entry.solution.version,
            geomean(&entry.scores).unwrap_or(0.0),
            entry.solution.source
        ));
    };
    describe("Parent", parent, &mut prompt);
    for inspiration in inspirations {
        describe("Inspiration", inspiration, &mut prompt);
    }
    prompt.push_str("Scores:\n");
    for entry in std::iter::once(parent).chain(inspirations) {
        let per_config: Vec<String> = entry
            .scores
            .entries
            .iter()
            .map(|e| format!("{}={:.3}", e.config_id, e.value))
            .collect();
        prompt.push_str(&format!(
            "v{}: {}\n",
            entry.solution.version,
            per_config.join(", ")
        ));
    }
    prompt.push_str("\nReply with the improved program text only, no commentary.\n");
    vec![ChatMessage::new("user", prompt)]
}

const SYSTEM_PROMPT: &str = "\
You are the variation operator of an evolutionary program optimizer. You \
work on a straight-line register VM program and must produce an improved \
version. Available tools:\n\
  list_versions            {}\n\
  read_solution            {\"version\": N}\n\
  read_scores              {\"version\": N}\n\
  search_knowledge         {\"query\": \"...\"}\n\
  read_doc                 {\"id\": \"...\"}\n\
  propose_edit             {\"source\": \"full program text\"}\n\
  run_eval                 {}\n\
  commit                   {\"note\": \"summary\"}\n\
Reply with exactly one JSON object per turn, of the form \
{\"tool\": \"name\", \"args\": {...}}. Edits replace the whole working \
draft. Evaluate before committing; a commit is accepted only if the draft \
is correct and its geomean score matches or improves the best committed \
version. Reply {\"tool\": \"halt\"} to give up this step.";

/// Agentic policy that delegates every decision to the model service.
pub struct ModelBackedPolicy {
    client: ModelClient,
    transcript: Vec<ChatMessage>,
}

impl ModelBackedPolicy {
    pub fn new(client: ModelClient) -> ModelBackedPolicy {
        ModelBackedPolicy {
            client,
            transcript: Vec::new(),
        }
    }

    pub fn from_env() -> Result<ModelBackedPolicy, ModelError> {
        Ok(ModelBackedPolicy::new(ModelClient::from_env()?))
    }
}

impl AgentPolicy for ModelBackedPolicy {
    fn next_action(&mut self, view: &PolicyView<'_>) -> Result<PolicyAction, PolicyError> {
        if self.transcript.is_empty() {
            self.transcript.push(ChatMessage::new("system", SYSTEM_PROMPT));
            let mut opening = format!(
                "Current working draft:\n{}\nBudget: {} tool calls, {} evaluations.\n",
                view.draft, view.budget.max_tool_calls, view.budget.max_evals
            );
            for event in view.supervisor_events {
                opening.push_str(&format!(
                    "Supervisor note ({:?} at attempt {}):\n{}Suggested directions: {}\n",
                    event.trigger,
                    event.at_attempt,
                    event.summary,
                    event.directions.join(", ")
                ));
            }
            self.transcript.push(ChatMessage::new("user", opening));
        } else if let Some(entry) = view.last {
            let rendered = serde_json::to_string(&entry.observation)
                .unwrap_or_else(|e| format!("{{\"render_error\": \"{e}\"}}"));
            self.transcript.push(ChatMessage::new("tool", rendered));
        }

        for _ in 0..2 {
            let reply = self
                .client
                .chat(&self.transcript)
                .map_err(|e| PolicyError(e.to_string()))?;
            self.transcript.push(ChatMessage::new("assistant", &reply));
            match parse_tool_reply(&reply) {
                Ok(Some(call)) => return Ok(PolicyAction::Call(call)),
                Ok(None) => return Ok(PolicyAction::Halt),
                Err(problem) => {
                    self.transcript.push(ChatMessage::new(
                        "user",
                        format!(
                            "Could not parse that reply as a tool call ({problem}). Reply with \
                             exactly one JSON object {{\"tool\": ..., \"args\": ...}}."
                        ),
                    ));
                }
            }
        }
        Ok(PolicyAction::Halt)
    }
}

/// Extract one tool call from a model reply. `Ok(None)` means an explicit
/// halt.
pub fn parse_tool_reply(reply: &str) -> Result<Option<ToolCall>, String> {
    let start = reply.find('{').ok_or("no JSON object found")?;
    let end = reply.rfind('}').ok_or("no JSON object found")?;
    if end < start {
        return Err("no JSON object found".to_string());
    }
    let value: serde_json::Value =
        serde_json::from_str(&reply[start..=end]).map_err(|e| e.to_string())?;
    if value.get("tool").and_then(|t| t.as_str()) == Some("halt") {
        return Ok(None);
    }
    match serde_json::from_value::<ToolCall>(value.clone()) {
        Ok(call) => Ok(Some(call)),
        Err(e) => {
            // Tolerate omitted args on calls whose arguments all default.
            let mut with_args = value;
            if let Some(object) = with_args.as_object_mut() {
                if !object.contains_key("args") {
                    object.insert("args".into(), serde_json::Value::Object(Default::default()));
                    if let Ok(call) = serde_json::from_value::<ToolCall>(with_args) {
                        return Ok(Some(call));
                    }
                }
            }
            Err(e.to_string())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{Read, Write};
    use std::net::TcpListener;

    /// Minimal single-threaded HTTP server answering each connection with
    /// the next canned reply.
    fn mock_model(replies: Vec<String>) -> (String, std::thread::JoinHandle<Vec<String>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let handle = std::thread::spawn(move || {
            let mut received = Vec::new();
            for reply in replies {
                let (mut stream, _) = listener.accept().unwrap();
                let mut buf = Vec::new();
                let mut chunk = [0u8; 4096];
                loop {
                    let n = stream.read(&mut chunk).unwrap();
                    buf.extend_from_slice(&chunk[..n]);
                    let text = String::from_utf8_lossy(&buf);
                    if let Some(header_end) = text.find("\r\n\r\n") {
                        let content_length = text
                            .lines()
                            .find_map(|l| {
                                l.to_ascii_lowercase()
                                    .strip_prefix("content-length:")
                                    .map(|v| v.trim().parse::<usize>().unwrap())
                            })
                            .unwrap_or(0);
                        if buf.len() >= header_end + 4 + content_length {
                            received.push(text.to_string());
                            break;
                        }
                    }
                    if n == 0 {
                        break;
                    }
                }
                let body = serde_json::json!({ "content": reply }).to_string();
                let response = format!(
                    "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{}",
                    body.len(),
                    body
                );
                stream.write_all(response.as_bytes()).unwrap();
            }
            received
        });
        (format!("http://{addr}/chat"), handle)
    }

    #[test]
    fn chat_round_trip_carries_bearer_credential() {
        let (endpoint, handle) = mock_model(vec!["hello back".to_string()]);
        let client = ModelClient::with_timeout(
            endpoint,
            Some("secret-key".to_string()),
            Duration::from_secs(5),
        );
        let reply = client.chat(&[ChatMessage::new("user", "hello")]).unwrap();
        assert_eq!(reply, "hello back");
        let received = handle.join().unwrap();
        let request = &received[0];
        assert!(request.to_ascii_lowercase().contains("authorization: bearer secret-key"));
        let body = &request[request.find("\r\n\r\n").unwrap() + 4..];
        let parsed: serde_json::Value = serde_json::from_str(body).unwrap();
        assert_eq!(parsed["messages"][0]["role"], "user");
        assert_eq!(parsed["messages"][0]["content"], "hello");
    }

    #[test]
    fn transport_failure_is_an_error() {
        // Nothing listens on this port.
        let client = ModelClient::with_timeout(
            "http://127.0.0.1:1/chat",
            None,
            Duration::from_millis(200),
        );
        let err = client.chat(&[ChatMessage::new("user", "x")]).unwrap_err();
        assert!(matches!(err, ModelError::Transport(_)));
    }

    #[test]
    fn tool_replies_parse_with_and_without_fences() {
        let call = parse_tool_reply("{\"tool\": \"run_eval\"}").unwrap().unwrap();
        assert_eq!(call, ToolCall::RunEval);
        let fenced = "```json\n{\"tool\": \"read_solution\", \"args\": {\"version\": 2}}\n```";
        let call = parse_tool_reply(fenced).unwrap().unwrap();
        assert_eq!(call, ToolCall::ReadSolution { version: 2 });
        assert_eq!(parse_tool_reply("{\"tool\": \"halt\"}").unwrap(), None);
        // Omitted args default when the call allows it.
        let call = parse_tool_reply("{\"tool\": \"commit\"}").unwrap().unwrap();
        assert_eq!(call, ToolCall::Commit { note: String::new() });
        assert!(parse_tool_reply("no json here").is_err());
        assert!(parse_tool_reply("{\"tool\": \"frobnicate\"}").is_err());
    }

    #[test]
    fn classical_prompt_names_parent_and_scores() {
        use crate::lineage::{ScoreEntry, ScoreVector, Solution};
        let entry = crate::lineage::LineageEntry {
            solution: Solution {
                version: 0,
                parent: None,
                source: "mul r0, r0, r0\n".to_string(),
                created_at: 0,
                note: String::new(),
            },
            scores: ScoreVector::new(vec![ScoreEntry::new("A", 333.333)]),
        };
        let messages = classical_prompt(&entry, &[]);
        assert_eq!(messages.len(), 1);
        assert!(messages[0].content.contains("mul r0, r0, r0"));
        assert!(messages[0].content.contains("A=333.333"));
    }
}
