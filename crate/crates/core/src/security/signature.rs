// SPDX-License-Identifier: Apache-2.0

//! Enveloped signatures over applications and messages.

use std::fmt;

use chrono::{DateTime, SubsecRound, Utc};

use super::SecurityError;
use super::keys::{Algorithm, DigestAlgorithm, KeyPairRecord, KeyUsage, TrustStore, normalize_dn};
use crate::codec::{self, CodecError};
use crate::model::{Application, Identifier, Message, SignatureBlock, SignatureScope};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Valid,
    Invalid(String),
    /// The block no longer matches because a scoped field was removed or
    /// changed by a local edit. Reported, never counted as authority.
    AdvisoryBroken(String),
}

impl Verdict {
    pub fn is_valid(&self) -> bool {
        matches!(self, Self::Valid)
    }

    pub fn is_advisory(&self) -> bool {
        matches!(self, Self::AdvisoryBroken(_))
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Valid => f.write_str("valid"),
            Self::Invalid(why) => write!(f, "invalid ({why})"),
            Self::AdvisoryBroken(why) => write!(f, "advisory-broken ({why})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignatureVerdict {
    /// `None` for message-level blocks.
    pub application: Option<Identifier>,
    pub signer_dn: String,
    pub key_id: String,
    pub scope: SignatureScope,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct VerificationReport {
    pub verdicts: Vec<SignatureVerdict>,
}

impl VerificationReport {
    /// True when every verdict that is not advisory is valid.
    pub fn overall(&self) -> bool {
        self.verdicts.iter().filter(|v| !v.verdict.is_advisory()).all(|v| v.verdict.is_valid())
    }

    pub fn valid_signers(&self, application: &Identifier) -> impl Iterator<Item = &str> {
        self.verdicts
            .iter()
            .filter(move |v| v.application.as_ref() == Some(application) && v.verdict.is_valid())
            .map(|v| v.signer_dn.as_str())
    }

    pub fn merge(&mut self, other: VerificationReport) {
        self.verdicts.extend(other.verdicts);
    }
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.verdicts {
            let level = v.application.as_ref().map_or_else(|| "message".to_owned(), |a| format!("application {a}"));
            writeln!(f, "{level} | {} | {} | {} | {}", v.signer_dn, v.key_id, v.scope, v.verdict)?;
        }
        write!(f, "overall: {}", if self.overall() { "valid" } else { "invalid" })
    }
}

fn new_block(
    key: &KeyPairRecord,
    signer_dn: &str,
    scope: SignatureScope,
    digest: DigestAlgorithm,
    clock: DateTime<Utc>,
) -> Result<SignatureBlock, SecurityError> {
    if key.usage != KeyUsage::OperationalSigning {
        return Err(SecurityError::UsageViolation(format!(
            "key {} is a {} key, not an operational signing key",
            key.key_id, key.usage
        )));
    }
    if !matches!(key.algorithm, Algorithm::Signature(_)) {
        return Err(SecurityError::UsageViolation(format!("key {} cannot sign", key.key_id)));
    }
    if key.private.is_none() {
        return Err(SecurityError::MissingPrivateKey(key.key_id.clone()));
    }
    if normalize_dn(signer_dn) != normalize_dn(&key.owner) {
        return Err(SecurityError::SignerMismatch { signer: signer_dn.to_owned(), owner: key.owner.clone() });
    }
    Ok(SignatureBlock {
        signer_dn: signer_dn.to_owned(),
        key_id: key.key_id.clone(),
        algorithm: key.algorithm.id().to_owned(),
        digest_algorithm: digest.id().to_owned(),
        scope,
        created_at: clock.trunc_subsecs(0),
        value: Vec::new(),
    })
}

fn seal(
    block: &mut SignatureBlock,
    key: &KeyPairRecord,
    digest: DigestAlgorithm,
    covered: &[u8],
) -> Result<(), SecurityError> {
    let input = codec::signed_info_bytes(block, &digest.digest(covered));
    block.value = key.sign_bytes(input.as_bytes())?;
    Ok(())
}

/// Appends a signature block over `scope` of `app`, using SHA-256.
pub fn sign(
    app: &Application,
    scope: SignatureScope,
    key: &KeyPairRecord,
    signer_dn: &str,
    clock: DateTime<Utc>,
) -> Result<Application, SecurityError> {
    sign_with_digest(app, scope, key, signer_dn, clock, DigestAlgorithm::Sha256)
}

pub fn sign_with_digest(
    app: &Application,
    scope: SignatureScope,
    key: &KeyPairRecord,
    signer_dn: &str,
    clock: DateTime<Utc>,
    digest: DigestAlgorithm,
) -> Result<Application, SecurityError> {
    let covered = codec::canonicalize_scope(app, &scope).map_err(|e| match e {
        CodecError::UnknownScopeField(name) => SecurityError::UnknownScopeField(name),
        other => SecurityError::Codec(other),
    })?;
    let mut block = new_block(key, signer_dn, scope, digest, clock)?;
    seal(&mut block, key, digest, covered.as_bytes())?;
    let mut next = app.clone();
    next.signatures.push(block);
    Ok(next)
}

/// Appends a message-level block covering the message minus its own
/// message-level blocks.
pub fn sign_message(
    msg: &Message,
    key: &KeyPairRecord,
    signer_dn: &str,
    clock: DateTime<Utc>,
) -> Result<Message, SecurityError> {
    let digest = DigestAlgorithm::Sha256;
    let covered = codec::canonicalize_message(msg);
    let mut block = new_block(key, signer_dn, SignatureScope::All, digest, clock)?;
    seal(&mut block, key, digest, covered.as_bytes())?;
    let mut next = msg.clone();
    next.signatures.push(block);
    Ok(next)
}

/// Checks the signer binding and the signature value. `Err` carries the
/// reason the block is invalid regardless of local edits.
fn check_binding<'t>(
    block: &SignatureBlock,
    trust: &'t TrustStore,
) -> Result<(&'t KeyPairRecord, DigestAlgorithm), String> {
    let record = trust.get(&block.key_id).ok_or_else(|| format!("unknown key {}", block.key_id))?;
    if record.usage != KeyUsage::OperationalSigning {
        return Err(format!("key {} is a {} key", record.key_id, record.usage));
    }
    if normalize_dn(&record.owner) != normalize_dn(&block.signer_dn) {
        return Err(format!("key {} belongs to {}", record.key_id, record.owner));
    }
    if record.algorithm.id() != block.algorithm {
        return Err(format!("block claims {} but key is {}", block.algorithm, record.algorithm));
    }
    let digest = block
        .digest_algorithm
        .parse::<DigestAlgorithm>()
        .map_err(|_| format!("unsupported digest {}", block.digest_algorithm))?;
    Ok((record, digest))
}

fn value_matches(block: &SignatureBlock, record: &KeyPairRecord, digest: DigestAlgorithm, covered: &[u8]) -> bool {
    let input = codec::signed_info_bytes(block, &digest.digest(covered));
    record.verify_bytes(input.as_bytes(), &block.value)
}

fn application_verdict(app: &Application, block: &SignatureBlock, trust: &TrustStore) -> Verdict {
    let (record, digest) = match check_binding(block, trust) {
        Ok(found) => found,
        Err(why) => return Verdict::Invalid(why),
    };
    let covered = match codec::canonicalize_scope(app, &block.scope) {
        Ok(bytes) => bytes,
        Err(CodecError::UnknownScopeField(name)) => {
            return Verdict::AdvisoryBroken(format!("scoped field {name} was removed"));
        }
        Err(e) => return Verdict::Invalid(e.to_string()),
    };
    if value_matches(block, record, digest, covered.as_bytes()) {
        return Verdict::Valid;
    }
    let edited: Vec<&str> = app.edited_fields().iter().filter(|f| block.scope.covers(f)).map(|f| f.as_str()).collect();
    if edited.is_empty() {
        Verdict::Invalid("signature does not match content".into())
    } else {
        Verdict::AdvisoryBroken(format!("fields changed since signing: {}", edited.join(",")))
    }
}

pub fn verify_application(app: &Application, trust: &TrustStore) -> VerificationReport {
    let verdicts = app
        .signatures
        .iter()
        .map(|block| SignatureVerdict {
            application: Some(app.id.clone()),
            signer_dn: block.signer_dn.clone(),
            key_id: block.key_id.clone(),
            scope: block.scope.clone(),
            verdict: application_verdict(app, block, trust),
        })
        .collect();
    VerificationReport { verdicts }
}

/// Message-level blocks followed by every application's blocks.
pub fn verify_message(msg: &Message, trust: &TrustStore) -> VerificationReport {
    let covered = codec::canonicalize_message(msg);
    let mut report = VerificationReport::default();
    for block in &msg.signatures {
        let verdict = match check_binding(block, trust) {
            Err(why) => Verdict::Invalid(why),
            Ok(_) if block.scope != SignatureScope::All => Verdict::Invalid("message signatures cover ALL".into()),
            Ok((record, digest)) if value_matches(block, record, digest, covered.as_bytes()) => Verdict::Valid,
            Ok(_) => Verdict::Invalid("signature does not match content".into()),
        };
        report.verdicts.push(SignatureVerdict {
            application: None,
            signer_dn: block.signer_dn.clone(),
            key_id: block.key_id.clone(),
            scope: block.scope.clone(),
            verdict,
        });
    }
    for app in &msg.applications {
        report.merge(verify_application(app, trust));
    }
    report
}
