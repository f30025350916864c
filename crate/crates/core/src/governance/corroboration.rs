//! Corroboration request and verdict bookkeeping.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AgentId, CorroborationRequest, CorroborationVerdict, MissionId, Verdict};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Resolution {
    Confirmed,
    Denied { by: AgentId },
    Expired,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpenRequest {
    pub request: CorroborationRequest,
    pub verdicts: BTreeMap<AgentId, Verdict>,
    pub resolution: Option<Resolution>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorroborationError {
    #[error("corroborator set is empty")]
    Empty,
    #[error("corroborator '{0}' is not registered")]
    Unregistered(AgentId),
    #[error("no request {0}")]
    UnknownRequest(u64),
    #[error("'{0}' is not a corroborator of request {1}")]
    NotCorroborator(AgentId, u64),
    #[error("'{0}' already gave a verdict on request {1}")]
    Duplicate(AgentId, u64),
    #[error("request {0} expired at tick {1}")]
    Expired(u64, u64),
    #[error("request {0} is already resolved")]
    Resolved(u64),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorroborationBook {
    next_id: u64,
    requests: BTreeMap<u64, OpenRequest>,
}

impl CorroborationBook {
    #[allow(clippy::too_many_arguments)]
    pub fn request(
        &mut self,
        mission_id: &MissionId,
        subject: &str,
        subject_agent: &AgentId,
        corroborators: Vec<AgentId>,
        registered: &BTreeSet<AgentId>,
        tick: u64,
        deadline_ticks: u64,
    ) -> Result<CorroborationRequest, CorroborationError> {
        if corroborators.is_empty() {
            return Err(CorroborationError::Empty);
        }
        if let Some(missing) = corroborators.iter().find(|c| !registered.contains(*c)) {
            return Err(CorroborationError::Unregistered(missing.clone()));
        }
        self.next_id += 1;
        let request = CorroborationRequest {
            request_id: self.next_id,
            mission_id: mission_id.clone(),
            subject: subject.to_owned(),
            subject_agent: subject_agent.clone(),
            corroborators,
            deadline_tick: tick + deadline_ticks,
        };
        self.requests.insert(request.request_id, OpenRequest { request: request.clone(), verdicts: BTreeMap::new(), resolution: None });
        Ok(request)
    }

    /// Records a verdict received at `tick`. Returns the resolution when this
    /// verdict settles the request.
    pub fn verdict(&mut self, v: &CorroborationVerdict, tick: u64) -> Result<Option<Resolution>, CorroborationError> {
        let id = v.request_id;
        let open = self.requests.get_mut(&id).ok_or(CorroborationError::UnknownRequest(id))?;
        if !open.request.corroborators.contains(&v.verifier) {
            return Err(CorroborationError::NotCorroborator(v.verifier.clone(), id));
        }
        if open.verdicts.contains_key(&v.verifier) {
            return Err(CorroborationError::Duplicate(v.verifier.clone(), id));
        }
        if tick > open.request.deadline_tick {
            return Err(CorroborationError::Expired(id, open.request.deadline_tick));
        }
        if open.resolution.is_some() {
            return Err(CorroborationError::Resolved(id));
        }
        open.verdicts.insert(v.verifier.clone(), v.verdict);
        let resolution = match v.verdict {
            Verdict::Denied => Some(Resolution::Denied { by: v.verifier.clone() }),
            Verdict::Confirmed if open.verdicts.len() == open.request.corroborators.len() => Some(Resolution::Confirmed),
            Verdict::Confirmed => None,
        };
        open.resolution.clone_from(&resolution);
        Ok(resolution)
    }

    /// Resolves every unresolved request whose deadline is before `tick`.
    pub fn expire(&mut self, tick: u64) -> Vec<CorroborationRequest> {
        let mut out = Vec::new();
        for open in self.requests.values_mut() {
            if open.resolution.is_none() && tick > open.request.deadline_tick {
                open.resolution = Some(Resolution::Expired);
                out.push(open.request.clone());
            }
        }
        out
    }

    pub fn get(&self, id: u64) -> Option<&OpenRequest> {
        self.requests.get(&id)
    }

    pub fn all(&self) -> impl Iterator<Item = &OpenRequest> {
        self.requests.values()
    }

    pub fn unresolved(&self) -> impl Iterator<Item = &CorroborationRequest> {
        self.requests.values().filter(|r| r.resolution.is_none()).map(|r| &r.request)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[&str]) -> Vec<AgentId> {
        v.iter().map(|s| AgentId::new(*s)).collect()
    }

    fn book_with(corr: &[&str]) -> (CorroborationBook, CorroborationRequest) {
        let mut b = CorroborationBook::default();
        let reg: BTreeSet<AgentId> = ids(&["drone", "operator", "cam"]).into_iter().collect();
        let r = b.request(&MissionId::new("M1-1"), "m1_trace", &AgentId::new("quad"), ids(corr), &reg, 100, 300).unwrap();
        (b, r)
    }

    fn v(r: &CorroborationRequest, who: &str, verdict: Verdict) -> CorroborationVerdict {
        CorroborationVerdict { request_id: r.request_id, verifier: AgentId::new(who), verdict, tick: 0 }
    }

    #[test]
    fn two_expected_verdicts() {
        let (mut b, r) = book_with(&["drone", "operator"]);
        assert_eq!(r.corroborators.len(), 2);
        assert_eq!(r.deadline_tick, 400);
        assert_eq!(b.verdict(&v(&r, "drone", Verdict::Confirmed), 150).unwrap(), None);
        assert_eq!(b.verdict(&v(&r, "operator", Verdict::Confirmed), 160).unwrap(), Some(Resolution::Confirmed));
    }

    #[test]
    fn empty_set_rejected() {
        let mut b = CorroborationBook::default();
        let e = b.request(&MissionId::new("m"), "s", &AgentId::new("q"), vec![], &BTreeSet::new(), 0, 10);
        assert_eq!(e.unwrap_err(), CorroborationError::Empty);
    }

    #[test]
    fn unregistered_rejected() {
        let mut b = CorroborationBook::default();
        let e = b.request(&MissionId::new("m"), "s", &AgentId::new("q"), ids(&["ghost"]), &BTreeSet::new(), 0, 10);
        assert!(matches!(e, Err(CorroborationError::Unregistered(_))));
    }

    #[test]
    fn denial_resolves_immediately() {
        let (mut b, r) = book_with(&["drone", "operator"]);
        let res = b.verdict(&v(&r, "operator", Verdict::Denied), 120).unwrap();
        assert_eq!(res, Some(Resolution::Denied { by: AgentId::new("operator") }));
    }

    #[test]
    fn verdict_rules() {
        let (mut b, r) = book_with(&["drone", "operator"]);
        assert!(matches!(b.verdict(&v(&r, "cam", Verdict::Confirmed), 120), Err(CorroborationError::NotCorroborator(..))));
        b.verdict(&v(&r, "drone", Verdict::Confirmed), 120).unwrap();
        assert!(matches!(b.verdict(&v(&r, "drone", Verdict::Confirmed), 121), Err(CorroborationError::Duplicate(..))));
        // at the deadline is still in time, one tick later is not
        assert!(matches!(b.verdict(&v(&r, "operator", Verdict::Confirmed), 401), Err(CorroborationError::Expired(..))));
        assert_eq!(b.verdict(&v(&r, "operator", Verdict::Confirmed), 400).unwrap(), Some(Resolution::Confirmed));
    }

    #[test]
    fn expiry() {
        let (mut b, r) = book_with(&["drone"]);
        assert!(b.expire(400).is_empty());
        let gone = b.expire(401);
        assert_eq!(gone, vec![r.clone()]);
        assert_eq!(b.get(r.request_id).unwrap().resolution, Some(Resolution::Expired));
        assert!(b.expire(500).is_empty());
    }
}
