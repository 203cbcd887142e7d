use std::collections::HashSet;
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::AdversaryError;

/// Shipped aggregate distribution (`data/estonia_aggregate.csv`).
pub const DEFAULT_DISTRIBUTION_CSV: &str = include_str!("../../../../data/estonia_aggregate.csv");

const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    Vote,
    Check,
}

impl Action {
    pub fn symbol(self) -> char {
        match self {
            Action::Vote => 'V',
            Action::Check => 'C',
        }
    }

    pub fn from_symbol(c: char) -> Option<Self> {
        match c {
            'V' => Some(Action::Vote),
            'C' => Some(Action::Check),
            _ => None,
        }
    }
}

/// Renders a (possibly empty) action sequence as `V`/`C` characters.
pub fn render(actions: &[Action]) -> String {
    actions.iter().map(|a| a.symbol()).collect()
}

/// Parses a (possibly empty) action sequence.
pub fn parse_actions(s: &str) -> Option<Vec<Action>> {
    s.chars().map(Action::from_symbol).collect()
}

/// One voter's behavior: a non-empty action sequence that starts with a vote.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VoterScript(Vec<Action>);

impl VoterScript {
    pub fn new(actions: Vec<Action>) -> Result<Self, AdversaryError> {
        match actions.first() {
            None => Err(AdversaryError::MalformedPattern(String::new())),
            Some(Action::Check) => Err(AdversaryError::MustStartWithVote(render(&actions))),
            Some(Action::Vote) => Ok(VoterScript(actions)),
        }
    }

    pub fn actions(&self) -> &[Action] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_vote_only(&self) -> bool {
        self.0.iter().all(|a| *a == Action::Vote)
    }
}

impl FromStr for VoterScript {
    type Err = AdversaryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let actions =
            parse_actions(s.trim()).ok_or_else(|| AdversaryError::MalformedPattern(s.to_string()))?;
        VoterScript::new(actions)
    }
}

impl fmt::Display for VoterScript {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render(&self.0))
    }
}

impl fmt::Debug for VoterScript {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "VoterScript({self})")
    }
}

impl Serialize for VoterScript {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for VoterScript {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Probability mass over voter scripts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(VoterScript, f64)>", into = "Vec<(VoterScript, f64)>")]
pub struct BehaviorDistribution {
    entries: Vec<(VoterScript, f64)>,
}

impl TryFrom<Vec<(VoterScript, f64)>> for BehaviorDistribution {
    type Error = AdversaryError;

    fn try_from(entries: Vec<(VoterScript, f64)>) -> Result<Self, Self::Error> {
        BehaviorDistribution::new(entries)
    }
}

impl From<BehaviorDistribution> for Vec<(VoterScript, f64)> {
    fn from(d: BehaviorDistribution) -> Self {
        d.entries
    }
}

#[derive(Deserialize)]
struct Row {
    pattern: String,
    probability: f64,
}

impl BehaviorDistribution {
    pub fn new(entries: Vec<(VoterScript, f64)>) -> Result<Self, AdversaryError> {
        if entries.is_empty() {
            return Err(AdversaryError::Empty);
        }
        let mut seen = HashSet::new();
        let mut sum = 0.0;
        for (script, p) in &entries {
            if !seen.insert(script.clone()) {
                return Err(AdversaryError::DuplicatePattern(script.to_string()));
            }
            if !(0.0..=1.0).contains(p) {
                return Err(AdversaryError::ProbabilityRange {
                    pattern: script.to_string(),
                    value: *p,
                });
            }
            sum += p;
        }
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(AdversaryError::NotNormalized(sum));
        }
        Ok(BehaviorDistribution { entries })
    }

    /// A single script with probability one.
    pub fn point_mass(script: VoterScript) -> Self {
        BehaviorDistribution {
            entries: vec![(script, 1.0)],
        }
    }

    /// Convenience for tests and inline configs: `[("V", 0.5), ("VC", 0.5)]`.
    pub fn from_pairs(pairs: &[(&str, f64)]) -> Result<Self, AdversaryError> {
        let entries = pairs
            .iter()
            .map(|(s, p)| Ok((s.parse()?, *p)))
            .collect::<Result<Vec<_>, AdversaryError>>()?;
        Self::new(entries)
    }

    /// Reads CSV with header `pattern,probability`.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self, AdversaryError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut entries = Vec::new();
        for row in rdr.deserialize::<Row>() {
            let row = row?;
            entries.push((row.pattern.parse()?, row.probability));
        }
        Self::new(entries)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, AdversaryError> {
        let file = std::fs::File::open(path)?;
        Self::from_csv(file)
    }

    /// The shipped aggregate table.
    pub fn default_aggregate() -> Self {
        Self::from_csv(DEFAULT_DISTRIBUTION_CSV.as_bytes()).expect("shipped distribution is valid")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("pattern,probability\n");
        for (s, p) in &self.entries {
            out.push_str(&format!("{s},{p}\n"));
        }
        out
    }

    pub fn entries(&self) -> &[(VoterScript, f64)] {
        &self.entries
    }

    /// Entries with non-zero mass.
    pub fn support(&self) -> impl Iterator<Item = &(VoterScript, f64)> {
        self.entries.iter().filter(|(_, p)| *p > 0.0)
    }

    pub fn probability(&self, script: &VoterScript) -> f64 {
        self.entries
            .iter()
            .find(|(s, _)| s == script)
            .map_or(0.0, |(_, p)| *p)
    }

    /// Mass of the exact action sequence (zero if it is not a listed pattern).
    pub fn mass_of(&self, actions: &[Action]) -> f64 {
        self.entries
            .iter()
            .find(|(s, _)| s.actions() == actions)
            .map_or(0.0, |(_, p)| *p)
    }

    pub fn max_len(&self) -> usize {
        self.support().map(|(s, _)| s.len()).max().unwrap_or(0)
    }

    /// Inverse-CDF sampling in entry order.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &VoterScript {
        let u: f64 = rng.gen();
        let mut cumulative = 0.0;
        let mut last = None;
        for (s, p) in self.support() {
            cumulative += p;
            last = Some(s);
            if u < cumulative {
                return s;
            }
        }
        // rounding left u above the final cumulative sum
        last.expect("validated distribution has positive mass")
    }
}
