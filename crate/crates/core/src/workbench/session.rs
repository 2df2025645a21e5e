use std::time::Instant;

use serde_json::Value;

use crate::model::{Mutation, Outcome, Project};
use crate::trace::{Actor, EventLog, EventRecord, TraceError};

/// Source of event timestamps, in milliseconds since session start.
#[derive(Clone, Debug)]
pub enum Clock {
    Wall(Instant),
    Manual(u64),
}

impl Clock {
    pub fn wall() -> Self {
        Clock::Wall(Instant::now())
    }

    pub fn now(&self) -> u64 {
        match self {
            Clock::Wall(t) => t.elapsed().as_millis() as u64,
            Clock::Manual(ms) => *ms,
        }
    }
}

/// A live project with its event log. Every mutation and every analysis
/// request passes through here and leaves exactly one record.
#[derive(Debug)]
pub struct Session {
    project: Project,
    log: EventLog,
    clock: Clock,
}

impl Session {
    /// Starts logging with a `session.open` record carrying the digest of
    /// the project as loaded.
    pub fn new(project: Project, log: EventLog, clock: Clock) -> Result<Self, TraceError> {
        let mut s = Session { project, log, clock };
        let args = serde_json::json!({ "gates": s.project.netlist.gate_count() });
        s.record(Actor::System, "session.open", vec![], args, Outcome::Ok)?;
        Ok(s)
    }

    pub fn in_memory(project: Project, session_id: &str) -> Self {
        Session::new(project, EventLog::new(session_id), Clock::wall()).expect("in-memory log")
    }

    pub fn project(&self) -> &Project {
        &self.project
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn records(&self) -> &[EventRecord] {
        self.log.records()
    }

    /// Records after `seq`, in order.
    pub fn records_after(&self, seq: u64) -> &[EventRecord] {
        let start = self.log.records().partition_point(|r| r.seq <= seq);
        &self.log.records()[start..]
    }

    /// Moves a manual clock forward; wall clocks ignore this.
    pub fn advance(&mut self, ms: u64) {
        if let Clock::Manual(t) = &mut self.clock {
            *t += ms;
        }
    }

    pub fn record(
        &mut self,
        actor: Actor,
        op: &str,
        targets: Vec<u64>,
        args: Value,
        outcome: Outcome,
    ) -> Result<&EventRecord, TraceError> {
        let rec = EventRecord {
            seq: self.log.next_seq(),
            timestamp: self.clock.now(),
            session_id: self.log.session_id().to_string(),
            actor,
            op: op.to_string(),
            targets,
            args,
            digest: self.project.digest(),
            outcome,
        };
        self.log.append(rec)?;
        Ok(self.log.records().last().expect("just appended"))
    }

    /// Applies a mutation and logs it, successful or not.
    pub fn apply(&mut self, actor: Actor, mutation: Mutation) -> crate::Result<Vec<u64>> {
        let result = self.project.apply(mutation);
        for e in self.project.take_emitted() {
            self.record(actor, &e.op, e.targets, e.args, e.outcome)?;
        }
        result
    }

    /// Logs a non-mutating operation with its outcome and passes the result
    /// through.
    pub fn observe<T>(
        &mut self,
        actor: Actor,
        op: &str,
        targets: Vec<u64>,
        args: Value,
        result: crate::Result<T>,
    ) -> crate::Result<T> {
        let outcome = match &result {
            Ok(_) => Outcome::Ok,
            Err(e) => Outcome::Error {
                code: e.code().to_string(),
                message: e.to_string(),
            },
        };
        self.record(actor, op, targets, args, outcome)?;
        result
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{GateKind, Netlist, SubmoduleId};
    use crate::trace::replay;

    #[test]
    fn failed_mutations_are_logged_and_replayed() {
        let mut n = Netlist::new("t");
        let a = n.add_input("a").unwrap();
        let _ = a;
        let base = Project::new(n);
        let mut s = Session::new(base.clone(), EventLog::new("t"), Clock::Manual(0)).unwrap();
        s.advance(10);
        let add = Mutation::AddGate {
            name: "g".into(),
            kind: GateKind::Inv,
            init: None,
            pins: [("I".into(), "a".into()), ("O".into(), "b".into())].into(),
        };
        s.apply(Actor::User, add).unwrap();
        let bad = Mutation::AssignGates {
            submodule: SubmoduleId(9),
            gates: vec![],
        };
        assert_eq!(s.apply(Actor::User, bad).unwrap_err().code(), "UnknownSubmodule");
        assert_eq!(s.records().len(), 3);
        assert_eq!(s.records()[1].timestamp, 10);
        assert!(!s.records()[2].outcome.is_ok());
        let replayed = replay(&base, s.records()).unwrap();
        assert_eq!(replayed.digest(), s.project().digest());
        assert_eq!(s.records_after(1).len(), 2);
    }
}
