// SPDX-License-Identifier: Apache-2.0

//! Reference trustcenter components and the audit trail they write.

mod audit;
mod cert;
mod certification;
mod directory;
mod registration;

pub use audit::{AUDIT_SUFFIX, AuditEvent, AuditKind, AuditLog, GENESIS, NewEvent, load_logs, trace, verify_chain};
pub use cert::{CERT_FORMAT, CertUsage, CertificateBlob, IssuanceLedger, IssuedRecord, VirtualCA, issue_certificate};
pub use certification::{Certification, certificate_usage};
pub use directory::{Directory, Notification, PublicationRecord};
pub use registration::{Intake, Registration, countersign, hash_revocation_password};

use crate::codec::CodecError;
use crate::model::ModelError;
use crate::profiles::ProfileError;
use crate::routing::RoutingError;
use crate::security::SecurityError;

#[derive(Debug, thiserror::Error)]
pub enum ComponentError {
    #[error("credential check rejected the request")]
    CredentialRejected,
    #[error("replay rejected: {0}")]
    ReplayRejected(String),
    #[error("signature invalid: {0}")]
    SignatureInvalid(String),
    #[error("authorization denied: {0}")]
    AuthorizationDenied(String),
    #[error("stage requirements not met: {}", .0.join(", "))]
    MissingFields(Vec<String>),
    #[error("no virtual CA named {0:?}")]
    UnknownVirtualCa(String),
    #[error("certificate: {0}")]
    Certificate(String),
    #[error("key usage violation: {0}")]
    UsageViolation(String),
    #[error("audit chain broken in {log} at record {line}")]
    ChainBroken { log: String, line: usize },
    #[error("I/O: {0}")]
    Io(String),
    #[error(transparent)]
    Security(#[from] SecurityError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Routing(#[from] RoutingError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Codec(#[from] CodecError),
}
