use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Every test the crate can run. `*Ud` variants apply the binary-sequence
/// tests to excursion indicators instead of the indicators of twos.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestId {
    Chi2,
    Twos,
    G,
    Ks,
    Klp,
    Joint,
    JointPerm,
    Autocorr,
    Runs,
    Larsen,
    Dixob,
    Obri85,
    RunsUd,
    LarsenUd,
    DixobUd,
    Obri85Ud,
    QvKs,
    QvCvm,
    QvSm,
}

impl TestId {
    pub const ALL: [TestId; 19] = [
        TestId::Chi2,
        TestId::Twos,
        TestId::G,
        TestId::Ks,
        TestId::Klp,
        TestId::Joint,
        TestId::JointPerm,
        TestId::Autocorr,
        TestId::Runs,
        TestId::Larsen,
        TestId::Dixob,
        TestId::Obri85,
        TestId::RunsUd,
        TestId::LarsenUd,
        TestId::DixobUd,
        TestId::Obri85Ud,
        TestId::QvKs,
        TestId::QvCvm,
        TestId::QvSm,
    ];

    /// The default crossing-tree roster (distribution, independence and excursion tests).
    pub const TREE_DEFAULT: [TestId; 15] = [
        TestId::Chi2,
        TestId::Twos,
        TestId::G,
        TestId::Ks,
        TestId::Klp,
        TestId::Joint,
        TestId::Autocorr,
        TestId::Runs,
        TestId::Larsen,
        TestId::Dixob,
        TestId::Obri85,
        TestId::RunsUd,
        TestId::LarsenUd,
        TestId::DixobUd,
        TestId::Obri85Ud,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TestId::Chi2 => "chi2",
            TestId::Twos => "twos",
            TestId::G => "g",
            TestId::Ks => "ks",
            TestId::Klp => "klp",
            TestId::Joint => "joint",
            TestId::JointPerm => "joint_perm",
            TestId::Autocorr => "autocorr",
            TestId::Runs => "runs",
            TestId::Larsen => "larsen",
            TestId::Dixob => "dixob",
            TestId::Obri85 => "obri85",
            TestId::RunsUd => "runs_ud",
            TestId::LarsenUd => "larsen_ud",
            TestId::DixobUd => "dixob_ud",
            TestId::Obri85Ud => "obri85_ud",
            TestId::QvKs => "qv_ks",
            TestId::QvCvm => "qv_cvm",
            TestId::QvSm => "qv_sm",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            TestId::Chi2 => "Chi2 (+2 df)",
            TestId::Twos => "Twos Test",
            TestId::G => "G Test",
            TestId::Ks => "KS Discrete",
            TestId::Klp => "KLP98 Test",
            TestId::Joint => "Joint Dist.",
            TestId::JointPerm => "Joint Dist. (perm.)",
            TestId::Autocorr => "Autocorr.",
            TestId::Runs => "Runs Test",
            TestId::Larsen => "Larsen Test",
            TestId::Dixob => "Dix.-OBri.",
            TestId::Obri85 => "OBri85",
            TestId::RunsUd => "Runs UD",
            TestId::LarsenUd => "Larsen UD",
            TestId::DixobUd => "Dix.-OBri. UD",
            TestId::Obri85Ud => "OBri85 UD",
            TestId::QvKs => "KS",
            TestId::QvCvm => "CVM",
            TestId::QvSm => "SM",
        }
    }

    /// True for tests applied to excursion indicators, which exist from level 0.
    pub fn uses_excursions(self) -> bool {
        matches!(self, TestId::RunsUd | TestId::LarsenUd | TestId::DixobUd | TestId::Obri85Ud)
    }

    pub fn is_tree_test(self) -> bool {
        !matches!(self, TestId::QvKs | TestId::QvCvm | TestId::QvSm)
    }
}

impl fmt::Display for TestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TestId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        TestId::ALL.iter().copied().find(|t| t.as_str() == s.trim()).ok_or_else(|| Error::UnknownTest(s.to_string()))
    }
}

/// The result of applying one test to one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub test: TestId,
    pub statistic: Option<f64>,
    pub p_value: Option<f64>,
    pub reject: bool,
    pub n_used: usize,
    pub skipped: Option<String>,
}

impl TestOutcome {
    pub(crate) fn from_p(test: TestId, statistic: f64, p: f64, n_used: usize) -> Self {
        TestOutcome { test, statistic: Some(statistic), p_value: Some(p), reject: p < 0.05, n_used, skipped: None }
    }

    pub(crate) fn from_flag(test: TestId, statistic: f64, reject: bool, n_used: usize) -> Self {
        TestOutcome { test, statistic: Some(statistic), p_value: None, reject, n_used, skipped: None }
    }

    pub(crate) fn skip(test: TestId, n_used: usize, reason: impl Into<String>) -> Self {
        TestOutcome { test, statistic: None, p_value: None, reject: false, n_used, skipped: Some(reason.into()) }
    }

    pub fn is_tested(&self) -> bool {
        self.skipped.is_none()
    }
}
