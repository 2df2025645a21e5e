use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{lookup_op, EventRecord};

pub const DEFAULT_IDLE_THRESHOLD_MS: u64 = 60_000;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionMetrics {
    pub events: usize,
    pub total_duration_ms: u64,
    pub action_counts: BTreeMap<String, usize>,
    /// Longest gap between consecutive events above the idle threshold.
    pub longest_idle_gap_ms: Option<u64>,
    pub error_count: usize,
    /// For each failed event, time until the next successful event that
    /// shares a target (or has the same op, for untargeted events).
    pub recovery_times_ms: Vec<u64>,
}

pub fn metrics(records: &[EventRecord], idle_threshold_ms: u64) -> SessionMetrics {
    let mut action_counts: BTreeMap<String, usize> = BTreeMap::new();
    for r in records {
        let cat = lookup_op(&r.op).map_or("unknown", |s| s.category.name());
        *action_counts.entry(cat.to_string()).or_default() += 1;
    }
    let total_duration_ms = match (records.first(), records.last()) {
        (Some(a), Some(b)) => b.timestamp.saturating_sub(a.timestamp),
        _ => 0,
    };
    let longest_idle_gap_ms = records
        .windows(2)
        .map(|w| w[1].timestamp.saturating_sub(w[0].timestamp))
        .filter(|gap| *gap > idle_threshold_ms)
        .max();

    let mut error_count = 0;
    let mut recovery_times_ms = Vec::new();
    for (i, r) in records.iter().enumerate() {
        if r.outcome.is_ok() {
            continue;
        }
        error_count += 1;
        let recovered = records[i + 1..].iter().find(|later| {
            later.outcome.is_ok()
                && if r.targets.is_empty() {
                    later.op == r.op
                } else {
                    later.targets.iter().any(|t| r.targets.contains(t))
                }
        });
        if let Some(later) = recovered {
            recovery_times_ms.push(later.timestamp.saturating_sub(r.timestamp));
        }
    }
    SessionMetrics {
        events: records.len(),
        total_duration_ms,
        action_counts,
        longest_idle_gap_ms,
        error_count,
        recovery_times_ms,
    }
}

impl fmt::Display for SessionMetrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "events            {}", self.events)?;
        writeln!(f, "duration_ms       {}", self.total_duration_ms)?;
        for (cat, n) in &self.action_counts {
            writeln!(f, "  {cat:<16}{n}")?;
        }
        match self.longest_idle_gap_ms {
            Some(g) => writeln!(f, "longest_idle_ms   {g}")?,
            None => writeln!(f, "longest_idle_ms   -")?,
        }
        writeln!(f, "errors            {}", self.error_count)?;
        let rec: Vec<String> = self.recovery_times_ms.iter().map(|t| t.to_string()).collect();
        writeln!(f, "recovery_ms       [{}]", rec.join(", "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Outcome;
    use crate::trace::Actor;

    fn rec(seq: u64, ts: u64, op: &str, targets: &[u64], ok: bool) -> EventRecord {
        EventRecord {
            seq,
            timestamp: ts,
            session_id: "s".into(),
            actor: Actor::User,
            op: op.into(),
            targets: targets.to_vec(),
            args: serde_json::json!({}),
            digest: String::new(),
            outcome: if ok {
                Outcome::Ok
            } else {
                Outcome::Error {
                    code: "X".into(),
                    message: String::new(),
                }
            },
        }
    }

    #[test]
    fn counts_gaps_and_recoveries() {
        let log = vec![
            rec(1, 0, "session.open", &[], true),
            rec(2, 5_000, "submodule.assign", &[1, 7], false),
            rec(3, 6_000, "ui.select", &[9], true),
            rec(4, 70_000, "submodule.assign", &[1, 8], true),
            rec(5, 71_000, "netlist.lint", &[], false),
            rec(6, 71_500, "netlist.lint", &[], true),
        ];
        let m = metrics(&log, DEFAULT_IDLE_THRESHOLD_MS);
        assert_eq!(m.total_duration_ms, 71_500);
        assert_eq!(m.action_counts.values().sum::<usize>(), log.len());
        assert_eq!(m.action_counts["grouping"], 2);
        assert_eq!(m.longest_idle_gap_ms, Some(64_000));
        assert_eq!(m.error_count, 2);
        assert_eq!(m.recovery_times_ms, vec![65_000, 500]);
    }

    #[test]
    fn short_gaps_are_not_idle() {
        let log = vec![rec(1, 0, "session.open", &[], true), rec(2, 5_000, "ui.select", &[], true)];
        assert_eq!(metrics(&log, DEFAULT_IDLE_THRESHOLD_MS).longest_idle_gap_ms, None);
        assert_eq!(metrics(&[], DEFAULT_IDLE_THRESHOLD_MS).total_duration_ms, 0);
    }
}
