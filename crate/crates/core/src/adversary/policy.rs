use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::distribution::{parse_actions, render, Action};
use super::AdversaryError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Decision {
    #[serde(rename = "M")]
    Manipulate,
    #[serde(rename = "H")]
    Honest,
}

impl Decision {
    pub fn symbol(self) -> char {
        match self {
            Decision::Manipulate => 'M',
            Decision::Honest => 'H',
        }
    }
}

/// Anything that can decide, from the voter's history so far, whether to
/// manipulate the vote about to be cast.
pub trait DecisionRule {
    fn decide(&self, history: &[Action]) -> Result<Decision, AdversaryError>;
}

/// Explicit decision for every history up to `max_len` actions.
///
/// Histories are the empty string or strings over `{V, C}` starting with `V`;
/// the table is total over all of them.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyTable {
    max_len: usize,
    decisions: BTreeMap<String, Decision>,
}

fn histories_up_to(max_len: usize) -> Vec<String> {
    let mut out = vec![String::new()];
    let mut frontier = vec![String::from("V")];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for h in frontier {
            next.push(format!("{h}V"));
            next.push(format!("{h}C"));
            out.push(h);
        }
        frontier = next;
    }
    out
}

#[derive(Deserialize)]
struct Row {
    history: String,
    decision: String,
}

impl PolicyTable {
    pub fn new(max_len: usize, decisions: BTreeMap<String, Decision>) -> Result<Self, AdversaryError> {
        for h in decisions.keys() {
            let actions = parse_actions(h).ok_or_else(|| AdversaryError::MalformedHistory(h.clone()))?;
            if actions.first() == Some(&Action::Check) {
                return Err(AdversaryError::MalformedHistory(h.clone()));
            }
            if actions.len() > max_len {
                return Err(AdversaryError::HistoryTooLong {
                    history: h.clone(),
                    max_len,
                });
            }
        }
        for h in histories_up_to(max_len) {
            if !decisions.contains_key(&h) {
                return Err(AdversaryError::IncompletePolicy(h));
            }
        }
        Ok(PolicyTable { max_len, decisions })
    }

    /// Builds a total table from a partial assignment, filling gaps with `fill`.
    pub fn from_partial(
        max_len: usize,
        partial: &BTreeMap<String, Decision>,
        fill: Decision,
    ) -> Result<Self, AdversaryError> {
        let mut decisions: BTreeMap<String, Decision> =
            histories_up_to(max_len).into_iter().map(|h| (h, fill)).collect();
        for (h, d) in partial {
            decisions.insert(h.clone(), *d);
        }
        Self::new(max_len, decisions)
    }

    pub fn uniform(max_len: usize, decision: Decision) -> Self {
        Self::from_partial(max_len, &BTreeMap::new(), decision).expect("generated table is total")
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn decisions(&self) -> &BTreeMap<String, Decision> {
        &self.decisions
    }

    /// CSV with header `history,decision`. The longest listed history fixes the
    /// table length.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self, AdversaryError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut decisions = BTreeMap::new();
        for row in rdr.deserialize::<Row>() {
            let row = row?;
            let decision = match row.decision.as_str() {
                "M" => Decision::Manipulate,
                "H" => Decision::Honest,
                other => return Err(AdversaryError::InvalidDecision(other.to_string())),
            };
            decisions.insert(row.history, decision);
        }
        let max_len = decisions.keys().map(String::len).max().unwrap_or(0);
        Self::new(max_len, decisions)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, AdversaryError> {
        Self::from_csv(std::fs::File::open(path)?)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("history,decision\n");
        for (h, d) in &self.decisions {
            out.push_str(&format!("{h},{}\n", d.symbol()));
        }
        out
    }
}

impl DecisionRule for PolicyTable {
    fn decide(&self, history: &[Action]) -> Result<Decision, AdversaryError> {
        let key = render(history);
        if history.len() > self.max_len {
            return Err(AdversaryError::HistoryTooLong {
                history: key,
                max_len: self.max_len,
            });
        }
        self.decisions
            .get(&key)
            .copied()
            .ok_or(AdversaryError::IncompletePolicy(key))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ManipulationPolicy {
    /// Manipulate every vote.
    Always,
    /// Never manipulate.
    Never,
    Table(PolicyTable),
}

impl ManipulationPolicy {
    /// `always`, `never`, or a path to a policy CSV.
    pub fn from_name_or_path(source: &str) -> Result<Self, AdversaryError> {
        match source {
            "always" => Ok(ManipulationPolicy::Always),
            "never" => Ok(ManipulationPolicy::Never),
            path => Ok(ManipulationPolicy::Table(PolicyTable::load(path)?)),
        }
    }
}

impl fmt::Display for ManipulationPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ManipulationPolicy::Always => f.write_str("always"),
            ManipulationPolicy::Never => f.write_str("never"),
            ManipulationPolicy::Table(t) => write!(f, "table(max_len={})", t.max_len()),
        }
    }
}

impl DecisionRule for ManipulationPolicy {
    fn decide(&self, history: &[Action]) -> Result<Decision, AdversaryError> {
        match self {
            ManipulationPolicy::Always => Ok(Decision::Manipulate),
            ManipulationPolicy::Never => Ok(Decision::Honest),
            ManipulationPolicy::Table(t) => t.decide(history),
        }
    }
}
