//! Suggesters living outside the process: an executable or an HTTP endpoint.
//!
//! Both receive one JSON object per clause,
//! `{"clause": "...", "truncated": false, "k": 20}`, and answer with a JSON
//! array of `{"heading": "...", "score": 1.5}` objects (an optional
//! `"source"` string is kept if present). An executable gets the request on
//! stdin and writes the response to stdout.

use std::io::Write;
use std::process::{Command, Stdio};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{SuggestError, Suggester};
use crate::query::Clause;
use crate::scored::{ScoredTerm, Source};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Transport {
    Command { program: String, #[serde(default)] args: Vec<String> },
    Http { url: String },
}

#[derive(Debug, Serialize)]
struct Request<'a> {
    clause: &'a str,
    truncated: bool,
    k: usize,
}

#[derive(Debug, Deserialize)]
struct Item {
    heading: String,
    score: f64,
    #[serde(default)]
    source: Option<String>,
}

pub struct ExternalSuggester {
    name: String,
    transport: Transport,
    thread_safe: bool,
    http: Option<reqwest::blocking::Client>,
}

impl std::fmt::Debug for ExternalSuggester {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalSuggester")
            .field("name", &self.name)
            .field("transport", &self.transport)
            .field("thread_safe", &self.thread_safe)
            .finish()
    }
}

impl ExternalSuggester {
    pub fn new(name: impl Into<String>, transport: Transport, thread_safe: bool) -> Result<Self, SuggestError> {
        let name = name.into();
        let http = match &transport {
            Transport::Http { .. } => Some(
                reqwest::blocking::Client::builder()
                    .timeout(Duration::from_secs(60))
                    .build()
                    .map_err(|e| SuggestError::External { name: name.clone(), message: e.to_string() })?,
            ),
            Transport::Command { .. } => None,
        };
        Ok(ExternalSuggester { name, transport, thread_safe, http })
    }

    fn err(&self, message: impl Into<String>) -> SuggestError {
        SuggestError::External { name: self.name.clone(), message: message.into() }
    }

    fn exchange(&self, body: &[u8]) -> Result<Vec<u8>, SuggestError> {
        match &self.transport {
            Transport::Command { program, args } => {
                let mut child = Command::new(program)
                    .args(args)
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .stderr(Stdio::piped())
                    .spawn()
                    .map_err(|e| self.err(format!("spawn {program}: {e}")))?;
                {
                    let mut stdin = child.stdin.take().expect("stdin piped");
                    stdin.write_all(body).map_err(|e| self.err(e.to_string()))?;
                    stdin.write_all(b"\n").map_err(|e| self.err(e.to_string()))?;
                }
                let out = child.wait_with_output().map_err(|e| self.err(e.to_string()))?;
                if !out.status.success() {
                    return Err(self.err(format!(
                        "exited with {}: {}",
                        out.status,
                        String::from_utf8_lossy(&out.stderr).trim()
                    )));
                }
                Ok(out.stdout)
            }
            Transport::Http { url } => {
                let client = self.http.as_ref().expect("client built for http transport");
                let resp = client
                    .post(url)
                    .header(reqwest::header::CONTENT_TYPE, "application/json")
                    .body(body.to_vec())
                    .send()
                    .map_err(|e| self.err(e.to_string()))?;
                let status = resp.status();
                if !status.is_success() {
                    return Err(self.err(format!("HTTP {status}")));
                }
                Ok(resp.bytes().map_err(|e| self.err(e.to_string()))?.to_vec())
            }
        }
    }
}

impl Suggester for ExternalSuggester {
    fn source(&self) -> Source {
        Source::External(self.name.clone())
    }

    fn suggest(&self, clause: &Clause, k: usize) -> Result<Vec<ScoredTerm>, SuggestError> {
        let req = Request { clause: &clause.text, truncated: clause.truncated, k };
        let body = serde_json::to_vec(&req).expect("request serializes");
        let raw = self.exchange(&body)?;
        let items: Vec<Item> =
            serde_json::from_slice(&raw).map_err(|e| self.err(format!("bad response: {e}")))?;
        let mut out = Vec::with_capacity(items.len());
        for it in items {
            if !it.score.is_finite() {
                return Err(self.err(format!("non-finite score for {}", it.heading)));
            }
            let source = it.source.map(Source::from).unwrap_or_else(|| self.source());
            out.push(ScoredTerm::new(it.heading, it.score, source));
        }
        Ok(out)
    }

    fn is_thread_safe(&self) -> bool {
        self.thread_safe
    }
}
