// SPDX-License-Identifier: Apache-2.0

//! Dual/multi control: which signers an application needs before a stage
//! may act on it.

use std::collections::BTreeSet;
use std::fmt;

use super::keys::{common_name, normalize_dn};
use super::signature::VerificationReport;
use crate::model::{Application, ComponentName};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuthorizationPolicy {
    pub profile_id: String,
    pub stage: String,
    /// Components that must have signed. A block counts for component `C`
    /// when its signer DN starts with `CN=C`.
    pub required_components: Vec<ComponentName>,
    pub required_operators: usize,
    pub eligible_operators: BTreeSet<String>,
}

impl AuthorizationPolicy {
    /// A policy that demands nothing.
    pub fn open(profile_id: &str, stage: &str) -> Self {
        Self {
            profile_id: profile_id.to_owned(),
            stage: stage.to_owned(),
            required_components: Vec::new(),
            required_operators: 0,
            eligible_operators: BTreeSet::new(),
        }
    }

    pub fn is_consistent(&self) -> bool {
        self.required_operators <= self.eligible_operators.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decision {
    Allow,
    Deny(String),
}

impl Decision {
    pub fn is_allow(&self) -> bool {
        matches!(self, Self::Allow)
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Allow => f.write_str("allow"),
            Self::Deny(why) => write!(f, "deny: {why}"),
        }
    }
}

/// Allows when every required component and at least `required_operators`
/// distinct eligible operators hold valid application-level blocks on `app`.
pub fn authorize(app: &Application, policy: &AuthorizationPolicy, report: &VerificationReport) -> Decision {
    let signers: Vec<&str> = report.valid_signers(&app.id).collect();
    for component in &policy.required_components {
        if !signers.iter().any(|dn| common_name(dn) == Some(component.as_str())) {
            return Decision::Deny(format!("missing signature of component {component}"));
        }
    }
    let eligible: BTreeSet<String> = policy.eligible_operators.iter().map(|dn| normalize_dn(dn)).collect();
    let operators: BTreeSet<String> =
        signers.iter().map(|dn| normalize_dn(dn)).filter(|dn| eligible.contains(dn)).collect();
    if operators.len() < policy.required_operators {
        return Decision::Deny(format!("operator quorum {} < {}", operators.len(), policy.required_operators));
    }
    Decision::Allow
}

/// Operator DNs from `report` that `policy` recognises, for auditing.
pub fn operator_signers(app: &Application, policy: &AuthorizationPolicy, report: &VerificationReport) -> Vec<String> {
    let eligible: BTreeSet<String> = policy.eligible_operators.iter().map(|dn| normalize_dn(dn)).collect();
    let found: BTreeSet<String> =
        report.valid_signers(&app.id).map(normalize_dn).filter(|dn| eligible.contains(dn)).collect();
    found.into_iter().collect()
}
