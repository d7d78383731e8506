mod common;

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::thread;

use meshforge::pipeline::{Pipeline, PipelineConfig, PipelineError, Resources};
use meshforge::query::{parse_query, Clause};
use meshforge::scored::Source;
use meshforge::suggest::external::{ExternalSuggester, Transport};
use meshforge::suggest::{SuggestError, Suggester};

use common::fixtures;

fn sh(script: &str) -> Transport {
    Transport::Command { program: "sh".into(), args: vec!["-c".into(), script.into()] }
}

const PAIN_STUB: &str = r#"read -r req
case "$req" in
  *pain*) echo '[{"heading":"Pain","score":2.0},{"heading":"Analgesia","score":0.5,"source":"stub"}]' ;;
  *) echo '[]' ;;
esac"#;

#[test]
fn command_transport() {
    let s = ExternalSuggester::new("stub", sh(PAIN_STUB), false).unwrap();
    assert!(!s.is_thread_safe());
    let got = s.suggest(&Clause::free_text("postoperative pain"), 5).unwrap();
    assert_eq!(got.len(), 2);
    assert_eq!((got[0].heading.as_str(), got[0].score), ("Pain", 2.0));
    assert_eq!(got[0].source, Source::External("stub".into()));
    assert_eq!(got[1].source, Source::from("stub".to_string()));
    assert!(s.suggest(&Clause::free_text("sepsis"), 5).unwrap().is_empty());
}

#[test]
fn command_failures_are_typed() {
    let cases = [
        sh("cat >/dev/null; echo boom >&2; exit 3"),
        sh("cat >/dev/null; echo not json"),
        sh(r#"cat >/dev/null; echo '[{"heading":"X","score":"high"}]'"#),
        Transport::Command { program: "/nonexistent/suggester".into(), args: vec![] },
    ];
    for t in cases {
        let s = ExternalSuggester::new("bad", t.clone(), true).unwrap();
        match s.suggest(&Clause::free_text("x"), 3) {
            Err(SuggestError::External { name, .. }) => assert_eq!(name, "bad"),
            other => panic!("{t:?}: {other:?}"),
        }
    }
}

/// Answers every POST with `body` and hands back the request bodies it saw.
fn http_stub(body: &'static str, requests: usize) -> (String, thread::JoinHandle<Vec<String>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/suggest", listener.local_addr().unwrap());
    let handle = thread::spawn(move || {
        let mut seen = Vec::new();
        for _ in 0..requests {
            let (mut stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0;
            loop {
                let mut h = String::new();
                reader.read_line(&mut h).unwrap();
                if h == "\r\n" {
                    break;
                }
                if let Some(v) = h.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            seen.push(String::from_utf8(buf).unwrap());
            let resp = format!(
                "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(resp.as_bytes()).unwrap();
        }
        seen
    });
    (url, handle)
}

#[test]
fn http_transport() {
    let (url, handle) = http_stub(r#"[{"heading":"Sepsis","score":0.9}]"#, 1);
    let s = ExternalSuggester::new("svc", Transport::Http { url }, true).unwrap();
    let got = s.suggest(&Clause::free_text("septic").with_truncation(), 7).unwrap();
    assert_eq!(got[0].heading, "Sepsis");
    let seen = handle.join().unwrap();
    let req: serde_json::Value = serde_json::from_str(&seen[0]).unwrap();
    assert_eq!(req, serde_json::json!({ "clause": "septic", "truncated": true, "k": 7 }));
}

#[test]
fn pipeline_with_command_suggester() {
    let toml = format!(
        r#"
representation = "fragment"
[refinement]
kind = "fo"
[[suggesters]]
kind = "external"
name = "stub"
thread_safe = false
[suggesters.transport]
kind = "command"
program = "sh"
args = ["-c", {script:?}]
"#,
        script = PAIN_STUB
    );
    let cfg = PipelineConfig::parse(&toml).unwrap();
    let p = Pipeline::new(cfg, Resources::default()).unwrap();
    let q = parse_query("(Pain[mh] OR pain OR ache) AND (sepsis OR Sepsis[mh])").unwrap();
    let run = p.suggest_query("t", &q).unwrap();
    assert_eq!(run.fragments[0].selected, ["Pain"]);
    assert!(run.fragments[1].selected.is_empty());

    let failing = toml.replace("read -r req", "exit 9");
    let p = Pipeline::new(PipelineConfig::parse(&failing).unwrap(), Resources::default()).unwrap();
    assert!(matches!(p.suggest_query("t", &q), Err(PipelineError::Suggest(_))));
}

#[test]
fn fixture_config_loads() {
    let cfg = PipelineConfig::load(fixtures().join("pipeline.toml")).unwrap();
    assert!(cfg.paths.thesaurus.as_ref().unwrap().is_absolute() || cfg.paths.thesaurus.as_ref().unwrap().exists());
    cfg.check_files().unwrap();
}
