use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Provenance of a pair: in-distribution or one of the four outlier families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Id,
    OutDomain,
    Misaligned,
    ShuffledComment,
    BuggyCode,
}

impl Scenario {
    pub const OOD: [Scenario; 4] =
        [Scenario::OutDomain, Scenario::Misaligned, Scenario::ShuffledComment, Scenario::BuggyCode];

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Id => "id",
            Scenario::OutDomain => "out_domain",
            Scenario::Misaligned => "misaligned",
            Scenario::ShuffledComment => "shuffled_comment",
            Scenario::BuggyCode => "buggy_code",
        }
    }

    pub fn label(self) -> u8 {
        u8::from(self == Scenario::Id)
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [Scenario::Id]
            .into_iter()
            .chain(Scenario::OOD)
            .find(|sc| sc.as_str() == s)
            .ok_or_else(|| format!("unknown scenario `{s}`"))
    }
}

/// One (comment, code) record.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BimodalPair {
    pub id: String,
    pub comment: String,
    pub code: String,
    pub scenario: Scenario,
    /// 1 for inliers, 0 for outliers.
    pub label: u8,
    #[serde(default)]
    pub meta: BTreeMap<String, String>,
}

impl BimodalPair {
    pub fn inlier(id: impl Into<String>, comment: impl Into<String>, code: impl Into<String>) -> Self {
        BimodalPair {
            id: id.into(),
            comment: comment.into(),
            code: code.into(),
            scenario: Scenario::Id,
            label: 1,
            meta: BTreeMap::new(),
        }
    }

    pub fn is_inlier(&self) -> bool {
        self.label == 1
    }

    /// Re-labels as an outlier of `scenario`, recording the source record.
    pub fn into_outlier(mut self, scenario: Scenario, source_id: &str) -> Self {
        self.id = format!("{source_id}#{}", scenario.as_str());
        self.scenario = scenario;
        self.label = scenario.label();
        self.meta.insert("source_id".into(), source_id.to_string());
        self
    }

    /// Checks the record invariants; returns a description of the first violation.
    pub fn validate(&self) -> Result<(), String> {
        if self.label > 1 {
            return Err(format!("label must be 0 or 1, got {}", self.label));
        }
        if (self.scenario == Scenario::Id) != (self.label == 1) {
            return Err(format!("scenario `{}` inconsistent with label {}", self.scenario, self.label));
        }
        if self.comment.trim().is_empty() {
            return Err("empty comment".into());
        }
        if self.code.trim().is_empty() {
            return Err("empty code".into());
        }
        Ok(())
    }
}
