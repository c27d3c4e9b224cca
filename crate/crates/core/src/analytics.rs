//! Usage metrics over session logs.
//!
//! Durations come from turn timestamps. The time between two consecutive
//! turns is charged to the phase of the later turn, so the per-phase
//! durations of a session always add up to its total duration.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::{Phase, PhaseStats, PromptType, Role, Session, SessionMetrics, Turn};
use crate::store::{Store, StoreError};

/// The parts of a session the metrics are computed from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionLog {
    pub session_id: String,
    pub profile_id: String,
    pub prompt_type: Option<PromptType>,
    pub turns: Vec<Turn>,
}

impl From<&Session> for SessionLog {
    fn from(s: &Session) -> Self {
        Self {
            session_id: s.id.clone(),
            profile_id: s.profile_id.clone(),
            prompt_type: s.prompt_type,
            turns: s.turns.clone(),
        }
    }
}

pub fn session_metrics(turns: &[Turn]) -> SessionMetrics {
    let mut phases: BTreeMap<Phase, PhaseStats> = BTreeMap::new();
    for (i, t) in turns.iter().enumerate() {
        let gap = if i == 0 {
            0
        } else {
            (t.timestamp - turns[i - 1].timestamp).num_seconds()
        };
        let stats = phases.entry(t.phase).or_insert(PhaseStats {
            duration_secs: 0,
            turns: 0,
        });
        stats.duration_secs += gap;
        stats.turns += 1;
    }
    let adolescent = turns.iter().filter(|t| t.role == Role::Adolescent).count() as u32;
    SessionMetrics {
        total_duration_secs: match (turns.first(), turns.last()) {
            (Some(a), Some(b)) => (b.timestamp - a.timestamp).num_seconds(),
            _ => 0,
        },
        turns_total: turns.len() as u32,
        turns_adolescent: adolescent,
        turns_system: turns.len() as u32 - adolescent,
        phases,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryStats {
    pub session_id: String,
    pub prompt_type: Option<PromptType>,
    pub metrics: SessionMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseMeans {
    pub duration_secs: f64,
    pub turns: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub entries: usize,
    pub mean_duration_secs: f64,
    pub mean_turns_total: f64,
    pub mean_turns_adolescent: f64,
    pub mean_turns_system: f64,
    /// Means over all entries; an entry that never reached a phase counts as zero.
    pub phases: BTreeMap<Phase, PhaseMeans>,
    /// Percentage of entries per prompt type, over entries that have one.
    pub prompt_type_shares: BTreeMap<PromptType, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsageStats {
    pub per_entry: Vec<EntryStats>,
    pub aggregate: Aggregate,
}

fn mean(values: impl Iterator<Item = f64>, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        values.sum::<f64>() / n as f64
    }
}

/// Per-entry metrics plus their means. An empty log set gives zeros.
pub fn compute_usage_stats(logs: &[SessionLog]) -> UsageStats {
    let per_entry: Vec<EntryStats> = logs
        .iter()
        .map(|l| EntryStats {
            session_id: l.session_id.clone(),
            prompt_type: l.prompt_type,
            metrics: session_metrics(&l.turns),
        })
        .collect();
    let n = per_entry.len();
    let m = |f: fn(&SessionMetrics) -> f64| mean(per_entry.iter().map(|e| f(&e.metrics)), n);
    let mut phases = BTreeMap::new();
    for phase in Phase::ALL {
        if per_entry.iter().any(|e| e.metrics.phases.contains_key(&phase)) {
            let get = |e: &EntryStats| e.metrics.phases.get(&phase).cloned();
            phases.insert(
                phase,
                PhaseMeans {
                    duration_secs: mean(per_entry.iter().map(|e| get(e).map_or(0.0, |p| p.duration_secs as f64)), n),
                    turns: mean(per_entry.iter().map(|e| get(e).map_or(0.0, |p| p.turns as f64)), n),
                },
            );
        }
    }
    let typed: Vec<PromptType> = per_entry.iter().filter_map(|e| e.prompt_type).collect();
    let mut prompt_type_shares = BTreeMap::new();
    for pt in PromptType::ALL {
        let count = typed.iter().filter(|&&t| t == pt).count();
        if count > 0 {
            prompt_type_shares.insert(pt, 100.0 * count as f64 / typed.len() as f64);
        }
    }
    UsageStats {
        aggregate: Aggregate {
            entries: n,
            mean_duration_secs: m(|x| x.total_duration_secs as f64),
            mean_turns_total: m(|x| x.turns_total as f64),
            mean_turns_adolescent: m(|x| x.turns_adolescent as f64),
            mean_turns_system: m(|x| x.turns_system as f64),
            phases,
            prompt_type_shares,
        },
        per_entry,
    }
}

/// Stats over a profile's journal entries, i.e. its finalized sessions.
/// `None` covers every profile.
pub fn usage_for_profile(store: &Store, profile_id: Option<&str>) -> Result<UsageStats, StoreError> {
    let mut logs: Vec<SessionLog> = store
        .list_sessions()?
        .iter()
        .filter(|s| s.phase == Phase::Finalized)
        .filter(|s| profile_id.is_none_or(|p| s.profile_id == p))
        .map(SessionLog::from)
        .collect();
    logs.sort_by(|a, b| a.session_id.cmp(&b.session_id));
    Ok(compute_usage_stats(&logs))
}

#[cfg(test)]
mod tests {
    use chrono::{Duration, TimeZone, Utc};

    use super::*;
    use crate::model::Modality;

    fn turns(spec: &[(i64, Role, Phase)]) -> Vec<Turn> {
        let t0 = Utc.with_ymd_and_hms(2025, 5, 2, 18, 0, 0).unwrap();
        spec.iter()
            .map(|&(s, role, phase)| Turn {
                role,
                text: "x".into(),
                phase,
                modality: Modality::Typed,
                timestamp: t0 + Duration::seconds(s),
                choice: None,
            })
            .collect()
    }

    #[test]
    fn ten_turns_five_adolescent_two_minutes() {
        use Phase::*;
        use Role::*;
        let t = turns(&[
            (0, System, Preparation),
            (10, Adolescent, Preparation),
            (15, System, Articulation),
            (40, Adolescent, Articulation),
            (45, System, Articulation),
            (70, Adolescent, Articulation),
            (75, System, Verification),
            (90, Adolescent, Verification),
            (100, System, Elaboration),
            (120, Adolescent, Elaboration),
        ]);
        let m = session_metrics(&t);
        assert_eq!((m.turns_total, m.turns_adolescent, m.turns_system), (10, 5, 5));
        assert_eq!(m.total_duration_secs, 120);
        // Gaps charged to the later turn's phase: 10 | 5+25+5+25 | 5+15 | 10+20.
        assert_eq!(m.phases[&Preparation].duration_secs, 10);
        assert_eq!(m.phases[&Articulation].duration_secs, 60);
        assert_eq!(m.phases[&Verification].duration_secs, 20);
        assert_eq!(m.phases[&Elaboration].duration_secs, 30);
    }

    #[test]
    fn empty_logs_give_zeros() {
        let s = compute_usage_stats(&[]);
        assert_eq!(s.aggregate.entries, 0);
        assert_eq!(s.aggregate.mean_duration_secs, 0.0);
        assert!(s.aggregate.prompt_type_shares.is_empty());
        assert_eq!(session_metrics(&[]).total_duration_secs, 0);
    }
}
