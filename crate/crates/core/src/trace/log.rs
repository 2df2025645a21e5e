use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{lookup_op, EventRecord, TraceError};

fn io(e: std::io::Error) -> TraceError {
    TraceError::Io(e.to_string())
}

/// In-memory event list with an optional JSONL file sink. Each record is
/// written and flushed before `append` returns.
#[derive(Debug)]
pub struct EventLog {
    session_id: String,
    records: Vec<EventRecord>,
    sink: Option<BufWriter<File>>,
}

impl EventLog {
    pub fn new(session_id: impl Into<String>) -> Self {
        EventLog {
            session_id: session_id.into(),
            records: Vec::new(),
            sink: None,
        }
    }

    /// Creates (or truncates) `path` and writes every subsequent record to it.
    pub fn with_file(session_id: impl Into<String>, path: &Path) -> Result<Self, TraceError> {
        let file = File::create(path).map_err(io)?;
        Ok(EventLog {
            session_id: session_id.into(),
            records: Vec::new(),
            sink: Some(BufWriter::new(file)),
        })
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn next_seq(&self) -> u64 {
        self.records.last().map_or(1, |r| r.seq + 1)
    }

    pub fn records(&self) -> &[EventRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn append(&mut self, record: EventRecord) -> Result<(), TraceError> {
        let expected = self.next_seq();
        if record.seq != expected {
            return Err(TraceError::SequenceGap {
                expected,
                got: record.seq,
            });
        }
        if lookup_op(&record.op).is_none() {
            return Err(TraceError::UnknownOp(record.op));
        }
        if let Some(sink) = &mut self.sink {
            let line = serde_json::to_string(&record).expect("records serialize");
            sink.write_all(line.as_bytes()).map_err(io)?;
            sink.write_all(b"\n").map_err(io)?;
            sink.flush().map_err(io)?;
        }
        self.records.push(record);
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("records serialize"));
            out.push('\n');
        }
        out
    }
}

/// Parses JSONL, skipping blank lines, and checks that sequence numbers
/// run 1, 2, 3, ...
pub fn parse_log(text: &str) -> Result<Vec<EventRecord>, TraceError> {
    let mut out: Vec<EventRecord> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let r: EventRecord = serde_json::from_str(line).map_err(|e| TraceError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        let expected = out.last().map_or(1, |p| p.seq + 1);
        if r.seq != expected {
            return Err(TraceError::SequenceGap {
                expected,
                got: r.seq,
            });
        }
        out.push(r);
    }
    Ok(out)
}

pub fn read_log(path: &Path) -> Result<Vec<EventRecord>, TraceError> {
    parse_log(&std::fs::read_to_string(path).map_err(io)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Outcome;
    use crate::trace::Actor;

    fn rec(seq: u64, op: &str) -> EventRecord {
        EventRecord {
            seq,
            timestamp: seq * 10,
            session_id: "s".into(),
            actor: Actor::User,
            op: op.into(),
            targets: vec![],
            args: serde_json::json!({}),
            digest: "d".into(),
            outcome: Outcome::Ok,
        }
    }

    #[test]
    fn file_sink_is_readable_after_each_append() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        let mut log = EventLog::with_file("s", &path).unwrap();
        log.append(rec(1, "session.open")).unwrap();
        assert_eq!(read_log(&path).unwrap().len(), 1);
        log.append(rec(2, "ui.select")).unwrap();
        assert_eq!(read_log(&path).unwrap(), log.records());
    }

    #[test]
    fn gaps_and_unknown_ops_are_rejected() {
        let mut log = EventLog::new("s");
        assert_eq!(
            log.append(rec(2, "ui.select")).unwrap_err(),
            TraceError::SequenceGap { expected: 1, got: 2 }
        );
        assert_eq!(log.append(rec(1, "teleport")).unwrap_err().code(), "UnknownOp");
        log.append(rec(1, "session.open")).unwrap();
        let text = log.to_jsonl().replace("\"seq\":1", "\"seq\":3");
        assert_eq!(parse_log(&text).unwrap_err().code(), "SequenceGap");
        assert_eq!(parse_log("{oops").unwrap_err().code(), "ParseError");
    }
}
