use super::{lookup_op, EventRecord, TraceError};
use crate::model::{Mutation, Outcome, Project};

/// Re-applies the mutating records of a log to `base`, checking the state
/// digest after every record. The log must open with `session.open`
/// carrying the digest of `base`.
pub fn replay(base: &Project, records: &[EventRecord]) -> Result<Project, TraceError> {
    let mut project = base.clone();
    let Some(first) = records.first() else {
        return Ok(project);
    };
    if first.op != "session.open" || first.digest != project.digest() {
        return Err(TraceError::DigestMismatch { seq: first.seq });
    }
    let mut expected = first.seq;
    for r in records {
        if r.seq != expected {
            return Err(TraceError::SequenceGap {
                expected,
                got: r.seq,
            });
        }
        expected += 1;
        let spec = lookup_op(&r.op).ok_or_else(|| TraceError::UnknownOp(r.op.clone()))?;
        if spec.mutating {
            let m = Mutation::from_parts(&r.op, &r.args)
                .map_err(|_| TraceError::DigestMismatch { seq: r.seq })?;
            let result = project.apply(m);
            project.take_emitted();
            let agrees = match (&result, &r.outcome) {
                (Ok(_), Outcome::Ok) => true,
                (Err(e), Outcome::Error { code, .. }) => e.code() == code,
                _ => false,
            };
            if !agrees {
                return Err(TraceError::DigestMismatch { seq: r.seq });
            }
        }
        if project.digest() != r.digest {
            return Err(TraceError::DigestMismatch { seq: r.seq });
        }
    }
    Ok(project)
}
