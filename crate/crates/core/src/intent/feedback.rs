use serde::{Deserialize, Serialize};

use super::llm::{LlmConfig, Transport};
use crate::metrics::EpisodeMetrics;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedEvent {
    pub time: f64,
    pub text: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    pub events: Vec<LoggedEvent>,
}

impl EventLog {
    pub fn push(&mut self, time: f64, text: impl Into<String>) {
        self.events.push(LoggedEvent {
            time,
            text: text.into(),
        });
    }
}

pub fn template_summary(m: &EpisodeMetrics) -> String {
    let mut s = format!(
        "PoI visible {:.0}% of the time; mean formation deviation {:.1} m; {} safety events; {} steps",
        m.visibility_fraction * 100.0,
        m.mean_formation_deviation,
        m.safety_violations,
        m.steps
    );
    if m.collided {
        s.push_str("; collision occurred");
    }
    s.push('.');
    s
}

/// Numeric literals in order of appearance, as written.
pub fn numbers_in(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let chars: Vec<char> = text.chars().collect();
    for (i, &c) in chars.iter().enumerate() {
        let in_number = c.is_ascii_digit()
            || (c == '.'
                && !cur.is_empty()
                && chars.get(i + 1).is_some_and(|n| n.is_ascii_digit()));
        if in_number {
            cur.push(c);
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

fn same_numbers(a: &str, b: &str) -> bool {
    let mut x = numbers_in(a);
    let mut y = numbers_in(b);
    x.sort();
    y.sort();
    x == y
}

/// Operator-facing summary. With the LLM enabled the template may be
/// rephrased, but any change to the set of numbers discards the rephrasing.
pub fn summarize_feedback(
    metrics: &EpisodeMetrics,
    events: &EventLog,
    config: &LlmConfig,
    transport: Option<&mut dyn Transport>,
) -> String {
    let template = template_summary(metrics);
    let Some(transport) = transport.filter(|_| config.enabled) else {
        return template;
    };
    let log: Vec<String> = events
        .events
        .iter()
        .map(|e| format!("- {}", e.text))
        .collect();
    let prompt = format!(
        "Rephrase this mission summary for a vehicle operator in one or two sentences. \
         Keep every number exactly as written and add no new numbers.\n\nSummary: {template}\n\nEvents:\n{}",
        log.join("\n")
    );
    let Ok(reply) = transport.post(config, &config.request_body(&prompt)) else {
        return template;
    };
    let text = match serde_json::from_str::<serde_json::Value>(&reply) {
        Ok(v) => v
            .pointer("/choices/0/message/content")
            .or_else(|| v.pointer("/message/content"))
            .and_then(|c| c.as_str())
            .map(str::to_string),
        Err(_) => Some(reply),
    };
    match text.map(|t| t.trim().to_string()) {
        Some(t) if !t.is_empty() && same_numbers(&t, &template) => t,
        _ => template,
    }
}
