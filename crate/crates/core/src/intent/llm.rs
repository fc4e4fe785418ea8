use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::{parse_grammar, IntentCommand, IntentError, ParseResult, Source};

pub const PREAMBLE: &str = "You translate an underwater vehicle operator's instruction into exactly one \
JSON object matching the schema below. Reply with the JSON object only. If the instruction cannot be \
expressed with the schema, reply with {\"action\":\"Hold\"}.";

pub const COMMAND_SCHEMA: &str = r#"{
  "type": "object",
  "additionalProperties": false,
  "required": ["action"],
  "properties": {
    "action": {"enum": ["Inspect", "GoTo", "Report", "Abort", "Hold", "SetFormation"]},
    "region": {"enum": ["Port", "Starboard", "Bow", "Stern", "WholeHull"]},
    "point": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
    "params": {
      "type": "object",
      "additionalProperties": false,
      "properties": {"radius": {"type": "number", "exclusiveMinimum": 0}, "offset": {"type": "number"}}
    }
  },
  "rules": [
    "Inspect, Report and GoTo need region or point",
    "Abort and Hold carry no region, point or params",
    "SetFormation carries params only (radius in meters, offset in radians)"
  ]
}"#;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmConfig {
    pub enabled: bool,
    pub endpoint: String,
    pub model: String,
    /// Seconds.
    pub timeout: f64,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            endpoint: "http://127.0.0.1:8080/v1/chat/completions".into(),
            model: "llama-3-8b-instruct".into(),
            timeout: 10.0,
            api_key_env: "HULLWATCH_LLM_API_KEY".into(),
        }
    }
}

impl LlmConfig {
    pub fn api_key(&self) -> Option<String> {
        std::env::var(&self.api_key_env).ok().filter(|k| !k.is_empty())
    }

    pub fn request_body(&self, prompt: &str) -> Value {
        json!({
            "model": self.model,
            "temperature": 0,
            "messages": [{"role": "user", "content": prompt}],
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransportError {
    #[error("request timed out")]
    Timeout,
    #[error("transport failure: {0}")]
    Failed(String),
}

/// Sends one request body and returns the raw reply body.
pub trait Transport {
    fn post(&mut self, config: &LlmConfig, body: &Value) -> Result<String, TransportError>;
}

/// Blocking HTTP transport.
#[derive(Debug, Default)]
pub struct UreqTransport;

impl Transport for UreqTransport {
    fn post(&mut self, config: &LlmConfig, body: &Value) -> Result<String, TransportError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout.max(0.001))))
            .build()
            .into();
        let mut req = agent
            .post(&config.endpoint)
            .header("Content-Type", "application/json");
        if let Some(key) = config.api_key() {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send(body.to_string()).map_err(|e| match e {
            ureq::Error::Timeout(_) => TransportError::Timeout,
            other => TransportError::Failed(other.to_string()),
        })?;
        resp.body_mut().read_to_string().map_err(|e| match e {
            ureq::Error::Timeout(_) => TransportError::Timeout,
            other => TransportError::Failed(other.to_string()),
        })
    }
}

fn reply_content(body: &str) -> String {
    let Ok(v) = serde_json::from_str::<Value>(body) else {
        return body.to_string();
    };
    ["/choices/0/message/content", "/message/content", "/content"]
        .iter()
        .find_map(|p| v.pointer(p).and_then(Value::as_str).map(str::to_string))
        .unwrap_or_else(|| body.to_string())
}

/// First JSON object embedded in a reply, after unwrapping chat envelopes.
pub fn extract_reply_object(body: &str) -> Option<Value> {
    let content = reply_content(body);
    for (i, _) in content.match_indices('{') {
        let mut stream = serde_json::Deserializer::from_str(&content[i..]).into_iter::<Value>();
        if let Some(Ok(v @ Value::Object(_))) = stream.next() {
            return Some(v);
        }
    }
    None
}

fn validate_reply(body: &str) -> Result<IntentCommand, String> {
    let obj = extract_reply_object(body).ok_or("reply holds no JSON object")?;
    let cmd: IntentCommand = serde_json::from_value(obj).map_err(|e| e.to_string())?;
    cmd.validate()?;
    Ok(cmd)
}

fn fallback(text: &str, kind: IntentError, why: String) -> ParseResult {
    let note = format!("{kind}: {why}; grammar fallback");
    match parse_grammar(text) {
        ParseResult::Command { command, .. } => ParseResult::Command {
            command,
            source: Source::Grammar,
            note: Some(note),
        },
        ParseResult::Error { error, detail } => ParseResult::Error {
            error,
            detail: format!("{detail} ({note})"),
        },
    }
}

/// One request, strict validation, grammar fallback. Never calls the
/// transport when `config.enabled` is false.
pub fn llm_parse(text: &str, config: &LlmConfig, transport: &mut dyn Transport) -> ParseResult {
    if !config.enabled {
        return parse_grammar(text);
    }
    let prompt = format!("{PREAMBLE}\n\nSchema:\n{COMMAND_SCHEMA}\n\nInstruction: {text}");
    let body = config.request_body(&prompt);
    match transport.post(config, &body) {
        Err(e) => fallback(text, IntentError::LlmUnavailable, e.to_string()),
        Ok(reply) => match validate_reply(&reply) {
            Ok(command) => ParseResult::Command {
                command,
                source: Source::Llm,
                note: None,
            },
            Err(why) => fallback(text, IntentError::SchemaViolation, why),
        },
    }
}

/// Grammar when the LLM is disabled, otherwise [`llm_parse`].
pub fn parse(text: &str, config: &LlmConfig, transport: Option<&mut dyn Transport>) -> ParseResult {
    match transport {
        Some(t) if config.enabled => llm_parse(text, config, t),
        _ => parse_grammar(text),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::intent::Action;
    use crate::world::Region;

    struct Mock {
        reply: Result<String, TransportError>,
        calls: usize,
        last: Option<Value>,
    }

    impl Mock {
        fn new(reply: Result<&str, TransportError>) -> Self {
            Self {
                reply: reply.map(str::to_string),
                calls: 0,
                last: None,
            }
        }
    }

    impl Transport for Mock {
        fn post(&mut self, _: &LlmConfig, body: &Value) -> Result<String, TransportError> {
            self.calls += 1;
            self.last = Some(body.clone());
            self.reply.clone()
        }
    }

    fn enabled() -> LlmConfig {
        LlmConfig {
            enabled: true,
            ..LlmConfig::default()
        }
    }

    #[test]
    fn valid_reply_is_used() {
        let mut m = Mock::new(Ok(r#"{"action":"Inspect","region":"Port"}"#));
        let r = llm_parse("please look at the left", &enabled(), &mut m);
        assert_eq!(r.source(), Some(Source::Llm));
        assert_eq!(
            r.command(),
            Some(&IntentCommand::new(Action::Inspect).with_region(Region::Port))
        );
        assert_eq!(m.calls, 1);
        let prompt = m.last.unwrap()["messages"][0]["content"].as_str().unwrap().to_string();
        assert!(prompt.contains(PREAMBLE) && prompt.contains(COMMAND_SCHEMA));
        assert!(prompt.ends_with("please look at the left"));
    }

    #[test]
    fn chat_envelope_is_unwrapped() {
        let body = json!({"choices": [{"message": {"role": "assistant",
            "content": "Sure! ```json\n{\"action\":\"Abort\"}\n```"}}]})
        .to_string();
        let mut m = Mock::new(Ok(&body));
        let r = llm_parse("get out", &enabled(), &mut m);
        assert_eq!(r.command(), Some(&IntentCommand::new(Action::Abort)));
        assert_eq!(r.source(), Some(Source::Llm));
    }

    #[test]
    fn timeout_falls_back_to_grammar() {
        let mut m = Mock::new(Err(TransportError::Timeout));
        let r = llm_parse("inspect the port side of the hull", &enabled(), &mut m);
        assert_eq!(r.source(), Some(Source::Grammar));
        assert_eq!(r.command(), parse_grammar("inspect the port side of the hull").command());
        let ParseResult::Command { note, .. } = r else { panic!() };
        assert!(note.unwrap().starts_with("LlmUnavailable"));
    }

    #[test]
    fn schema_violation_falls_back() {
        for reply in [
            r#"{"action":"Fly"}"#,
            r#"{"action":"Inspect"}"#,
            r#"{"action":"Abort","region":"Bow"}"#,
            r#"{"action":"Inspect","region":"Port","exec":"rm -rf /"}"#,
            "no json here",
        ] {
            let mut m = Mock::new(Ok(reply));
            let r = llm_parse("inspect the bow", &enabled(), &mut m);
            assert_eq!(r.source(), Some(Source::Grammar), "{reply}");
            let ParseResult::Command { command, note, .. } = r else { panic!() };
            assert_eq!(command, IntentCommand::new(Action::Inspect).with_region(Region::Bow));
            assert!(note.unwrap().starts_with("SchemaViolation"));
        }
    }

    #[test]
    fn disabled_never_calls_transport() {
        let mut m = Mock::new(Ok(r#"{"action":"Abort"}"#));
        let cfg = LlmConfig::default();
        assert!(!cfg.enabled);
        for t in ["inspect the port side of the hull", "abort", "dance"] {
            llm_parse(t, &cfg, &mut m);
            parse(t, &cfg, Some(&mut m));
        }
        assert_eq!(m.calls, 0);
    }

    #[test]
    fn grammar_error_survives_fallback() {
        let mut m = Mock::new(Err(TransportError::Failed("refused".into())));
        let r = llm_parse("dance the hull", &enabled(), &mut m);
        assert_eq!(r.error(), Some(IntentError::UnknownVerb));
    }
}
