//! Hook for external two-person datasets: a clip pair plus a label in, an
//! [`InteractionRecord`] out.

use super::InteractionRecord;
use crate::error::{invalid, Result};
use crate::motion::clip::{AgentId, MotionClip};

pub trait DatasetAdapter {
    /// `first_is_actor` carries the dataset's actor/reactor annotation.
    fn adapt(&self, first: MotionClip, second: MotionClip, label: &str, first_is_actor: bool) -> Result<InteractionRecord>;
}

/// Adapter for data already in global joint positions at the target frame
/// rate; it only assigns roles and validates.
#[derive(Debug, Clone, Default)]
pub struct ClipPairAdapter;

impl DatasetAdapter for ClipPairAdapter {
    fn adapt(&self, first: MotionClip, second: MotionClip, label: &str, first_is_actor: bool) -> Result<InteractionRecord> {
        if label.trim().is_empty() {
            return Err(invalid("interaction label must not be empty"));
        }
        let (mut actor, mut reactor) = if first_is_actor { (first, second) } else { (second, first) };
        actor.agent = AgentId::Actor;
        reactor.agent = AgentId::Reactor;
        let record = InteractionRecord { actor, reactor, label: label.to_string(), scenario: None, seed: 0 };
        record.validate()?;
        Ok(record)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::{synth_generate, Scenario};

    #[test]
    fn swaps_roles_from_annotation() {
        let r = synth_generate(Scenario::Follow, 60, 1).unwrap();
        let out = ClipPairAdapter.adapt(r.reactor.clone(), r.actor.clone(), "walk behind", false).unwrap();
        assert_eq!(out.actor.frames, r.actor.frames);
        assert_eq!(out.reactor.agent, AgentId::Reactor);
        let short = r.actor.slice(0, 10);
        assert!(ClipPairAdapter.adapt(short, r.reactor, "x", true).is_err());
    }
}
