//! Post-hoc contribution analysis over a trace of greedy actions: how often
//! does each value stream's argmax coincide with the blended policy's?

use super::HarnessError;

/// One step of a decision trace: greedy action of the episodic stream, the
/// parametric stream, and the blended values actually acted on.
pub type TracePoint = (usize, usize, usize);

/// Whole-trace agreement fractions `(episodic, semantic)`. The fractions
/// need not sum to one; both streams can agree with the blend at once.
pub fn contribution_metric(trace: &[TracePoint]) -> Result<(f64, f64), HarnessError> {
    if trace.is_empty() {
        return Err(HarnessError::EmptyTrace);
    }
    let n = trace.len() as f64;
    let ep = trace.iter().filter(|(e, _, c)| e == c).count() as f64;
    let sem = trace.iter().filter(|(_, s, c)| s == c).count() as f64;
    Ok((ep / n, sem / n))
}

/// Running agreement fractions over a trailing window, with partial windows
/// averaged over what exists so the curve starts at step one.
pub fn running_contribution(trace: &[TracePoint], window: usize) -> Vec<(f64, f64)> {
    assert!(window > 0, "window must be positive");
    let mut out = Vec::with_capacity(trace.len());
    let mut ep_hits = 0usize;
    let mut sem_hits = 0usize;
    for (i, (e, s, c)) in trace.iter().enumerate() {
        if e == c {
            ep_hits += 1;
        }
        if s == c {
            sem_hits += 1;
        }
        if i >= window {
            let (oe, os, oc) = trace[i - window];
            if oe == oc {
                ep_hits -= 1;
            }
            if os == oc {
                sem_hits -= 1;
            }
        }
        let len = (i + 1).min(window) as f64;
        out.push((ep_hits as f64 / len, sem_hits as f64 / len));
    }
    out
}
