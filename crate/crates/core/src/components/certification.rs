// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::sync::Arc;

use chrono::{DateTime, Utc};

use super::{AuditKind, AuditLog, CertUsage, ComponentError, IssuanceLedger, NewEvent, VirtualCA, issue_certificate};
use crate::model::{Application, ComponentName, IdGenerator, Message, ProfileField, SignatureScope, build_message};
use crate::profiles::{
    CLIENT_NAME, ENC_CERTIFICATE, NON_REP_CERTIFICATE, ProfileError, ProfileRegistry, SIGN_CERTIFICATE, SUBJECT_DN,
    StageSpec, next_hop, validate_stage,
};
use crate::routing::{Admission, ReplayStore};
use crate::security::{
    Decision, ED25519, KeyPairRecord, KeyUsage, TrustStore, VerificationReport, X25519_CHACHA20POLY1305, authorize,
    keygen, operator_signers, sign, verify_message,
};

/// Which certificate a produced field carries.
pub fn certificate_usage(field: &str) -> Option<CertUsage> {
    match field {
        ENC_CERTIFICATE => Some(CertUsage::Encryption),
        SIGN_CERTIFICATE => Some(CertUsage::Signature),
        NON_REP_CERTIFICATE => Some(CertUsage::NonRepudiation),
        _ => None,
    }
}

#[derive(Debug)]
pub struct Certification {
    name: ComponentName,
    key: KeyPairRecord,
    trust: TrustStore,
    profiles: ProfileRegistry,
    cas: BTreeMap<String, VirtualCA>,
    replay: Arc<ReplayStore>,
    audit: AuditLog,
    ledger: IssuanceLedger,
    ids: IdGenerator,
}

struct Checked<'a> {
    app: &'a Application,
    stage: StageSpec,
    operators: Vec<String>,
}

impl Certification {
    /// Serials of virtual CAs added later continue from what `ledger` has
    /// already recorded.
    pub fn new(
        name: ComponentName,
        key: KeyPairRecord,
        trust: TrustStore,
        profiles: ProfileRegistry,
        replay: Arc<ReplayStore>,
        audit: AuditLog,
        ledger: IssuanceLedger,
    ) -> Self {
        Self { name, key, trust, profiles, cas: BTreeMap::new(), replay, audit, ledger, ids: IdGenerator::new() }
    }

    /// Hosts a virtual CA named after the owner of `ca_key`.
    pub fn add_ca(&mut self, ca_key: KeyPairRecord) -> Result<(), ComponentError> {
        let name = ca_key.owner.clone();
        let ca = VirtualCA::new(name.clone(), ca_key, self.ledger.last_serial(&name))?;
        self.cas.insert(name, ca);
        Ok(())
    }

    pub fn audit(&self) -> &AuditLog {
        &self.audit
    }

    pub fn ledger(&self) -> &IssuanceLedger {
        &self.ledger
    }

    fn reject(&mut self, msg: &Message, clock: DateTime<Utc>, err: ComponentError) -> ComponentError {
        for app in &msg.applications {
            // The rejection itself is what matters; a failing audit write is
            // reported through the original error.
            let _ = self.audit.append(
                NewEvent::new(AuditKind::Rejected, clock).message(&msg.id).application(&app.id).detail(err.to_string()),
            );
        }
        err
    }

    /// Verifies, authorizes and admits `msg`, issues the certificates and
    /// returns the message for the next stage.
    pub fn process(&mut self, msg: &Message, clock: DateTime<Utc>) -> Result<Message, ComponentError> {
        match self.try_process(msg, clock) {
            Ok(out) => Ok(out),
            Err(e) => Err(self.reject(msg, clock, e)),
        }
    }

    fn check<'a>(&self, msg: &'a Message, report: &VerificationReport) -> Result<Vec<Checked<'a>>, ComponentError> {
        let mut checked = Vec::new();
        for app in &msg.applications {
            let spec = self.profiles.get(&app.profile_id)?;
            let stage = spec.stage(&self.name)?;
            let missing = validate_stage(app, spec, &self.name)?;
            if !missing.is_empty() {
                return Err(ComponentError::MissingFields(missing.iter().map(ToString::to_string).collect()));
            }
            if let Decision::Deny(why) = authorize(app, &stage.authorization, report) {
                return Err(ComponentError::AuthorizationDenied(format!("application {}: {why}", app.id)));
            }
            checked.push(Checked {
                app,
                stage: stage.clone(),
                operators: operator_signers(app, &stage.authorization, report),
            });
        }
        Ok(checked)
    }

    fn try_process(&mut self, msg: &Message, clock: DateTime<Utc>) -> Result<Message, ComponentError> {
        if let Admission::Replay(detail) = self.replay.check(msg, &self.name) {
            return Err(ComponentError::ReplayRejected(detail));
        }
        for app in &msg.applications {
            self.audit.append(
                NewEvent::new(AuditKind::Received, clock)
                    .message(&msg.id)
                    .application(&app.id)
                    .detail(format!("from {}", msg.sender)),
            )?;
        }

        let report = verify_message(msg, &self.trust);
        if !report.overall() {
            return Err(ComponentError::SignatureInvalid(report.to_string()));
        }
        for app in &msg.applications {
            let signers: Vec<String> = report.valid_signers(&app.id).map(str::to_owned).collect();
            self.audit.append(
                NewEvent::new(AuditKind::Verified, clock).message(&msg.id).application(&app.id).actors(signers),
            )?;
        }

        let checked = self.check(msg, &report)?;
        let mut next = None;
        for c in &checked {
            self.audit.append(
                NewEvent::new(AuditKind::Authorized, clock)
                    .message(&msg.id)
                    .application(&c.app.id)
                    .actors(c.operators.clone())
                    .detail(format!("{} operator signatures", c.operators.len())),
            )?;
            let hop = next_hop(self.profiles.get(&c.app.profile_id)?, &self.name)?.cloned();
            let conflict = |detail: String| {
                ComponentError::Profile(ProfileError::InconsistentSpec { profile: c.app.profile_id.clone(), detail })
            };
            match (&next, hop) {
                (_, None) => return Err(conflict(format!("{} is terminal", self.name))),
                (None, Some(h)) => next = Some(h),
                (Some(n), Some(h)) if *n != h => {
                    return Err(conflict(format!("applications route to both {n} and {h}")));
                }
                _ => {}
            }
        }
        let recipient = next.expect("a message has at least one application");

        // Plan everything that can fail before the replay store records the
        // request as processed.
        for c in &checked {
            let ca = c.app.text(CLIENT_NAME).unwrap_or_default();
            if !self.cas.contains_key(ca) {
                return Err(ComponentError::UnknownVirtualCa(ca.to_owned()));
            }
            if c.app.text(SUBJECT_DN).is_none() {
                return Err(ComponentError::MissingFields(vec![format!("{SUBJECT_DN} is not plaintext")]));
            }
            if let Some(f) = c.stage.produces.iter().find(|f| certificate_usage(f.as_str()).is_none()) {
                return Err(ComponentError::Certificate(format!("cannot produce field {f}")));
            }
        }

        if let Admission::Replay(detail) = self.replay.admit(msg, &self.name, clock)? {
            return Err(ComponentError::ReplayRejected(detail));
        }

        let mut out_apps = Vec::new();
        for c in &checked {
            let subject_dn = c.app.text(SUBJECT_DN).expect("checked above").to_owned();
            let ca = self.cas.get_mut(c.app.text(CLIENT_NAME).unwrap_or_default()).expect("checked above");
            let mut produced = Vec::new();
            let mut serials = Vec::new();
            for field in &c.stage.produces {
                let usage = certificate_usage(field.as_str()).expect("checked above");
                // Subject keys are generated here; the private halves go to
                // the end entity out of band and are dropped.
                let subject_key = match usage {
                    CertUsage::Encryption => keygen(X25519_CHACHA20POLY1305, &subject_dn, KeyUsage::Encryption)?,
                    _ => keygen(ED25519, &subject_dn, KeyUsage::OperationalSigning)?,
                };
                let blob = issue_certificate(&subject_dn, usage, ca, &subject_key.public, clock)?;
                self.ledger.record(&c.app.id, &blob)?;
                serials.push(format!("{usage}:{}", blob.serial));
                produced.push(ProfileField { name: field.clone(), value: blob.to_field_value().into() });
            }
            let consumed: Vec<&str> = c.stage.consumes.iter().map(|f| f.as_str()).collect();
            let mut updated = c.app.splice_fields(&consumed, produced)?;
            updated.signatures.clear();
            let updated = sign(&updated.settled(), SignatureScope::All, &self.key, &self.key.owner, clock)?;
            self.audit.append(
                NewEvent::new(AuditKind::Processed, clock)
                    .message(&msg.id)
                    .application(&c.app.id)
                    .actors(c.operators.clone())
                    .detail(format!("issued {} by {}", serials.join(","), ca.name)),
            )?;
            out_apps.push(updated);
        }

        let out = build_message(self.ids.next(clock), self.name.clone(), recipient, out_apps)?;
        for app in &out.applications {
            self.audit.append(
                NewEvent::new(AuditKind::Forwarded, clock)
                    .message(&out.id)
                    .application(&app.id)
                    .detail(format!("to {} (from message {})", out.recipient, msg.id)),
            )?;
        }
        Ok(out)
    }
}
