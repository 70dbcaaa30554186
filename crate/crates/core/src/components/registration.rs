// SPDX-License-Identifier: Apache-2.0

use chrono::{DateTime, Utc};

use super::{AuditKind, AuditLog, ComponentError, NewEvent};
use crate::model::{Application, ComponentName, IdGenerator, Message, SignatureScope, build_message};
use crate::profiles::{
    CLIENT_NAME, EMAIL, PUBLICLY_AVAILABLE, ProfileRegistry, REVOCATION_PASSWORD, SUBJECT_DN, next_hop, validate_stage,
};
use crate::security::{DigestAlgorithm, KeyPairRecord, sign};

/// What the end entity hands to Registration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Intake {
    pub subject_dn: String,
    /// Which virtual CA signs the certificates.
    pub client_name: String,
    /// Already hashed; see [`hash_revocation_password`].
    pub revocation_password_hash: String,
    pub email: String,
    pub publicly_available: bool,
}

/// Lowercase hex digest of the revocation password.
pub fn hash_revocation_password(password: &str, digest: DigestAlgorithm) -> String {
    hex::encode(digest.digest(password.as_bytes()))
}

#[derive(Debug)]
pub struct Registration {
    name: ComponentName,
    profile_id: String,
    key: KeyPairRecord,
    profiles: ProfileRegistry,
    ids: IdGenerator,
    audit: AuditLog,
}

impl Registration {
    pub fn new(
        name: ComponentName,
        profile_id: &str,
        key: KeyPairRecord,
        profiles: ProfileRegistry,
        audit: AuditLog,
    ) -> Self {
        Self { name, profile_id: profile_id.to_owned(), key, profiles, ids: IdGenerator::new(), audit }
    }

    pub fn audit(&self) -> &AuditLog {
        &self.audit
    }

    /// Builds the signed request for the next stage. Operators countersign
    /// the returned message before it is sent.
    pub fn process(
        &mut self,
        intake: &Intake,
        credentials_ok: impl FnOnce(&Intake) -> bool,
        clock: DateTime<Utc>,
    ) -> Result<Message, ComponentError> {
        if !credentials_ok(intake) {
            self.audit.append(
                NewEvent::new(AuditKind::Rejected, clock)
                    .actors([intake.subject_dn.clone()])
                    .detail("credential check rejected"),
            )?;
            return Err(ComponentError::CredentialRejected);
        }
        let spec = self.profiles.get(&self.profile_id)?;
        let recipient = next_hop(spec, &self.name)?.cloned().ok_or_else(|| {
            ComponentError::Profile(crate::profiles::ProfileError::InconsistentSpec {
                profile: spec.id.clone(),
                detail: format!("{} is terminal", self.name),
            })
        })?;
        let app = Application::new(self.ids.next(clock), spec.id.clone())
            .with_field(CLIENT_NAME, intake.client_name.clone())?
            .with_field(SUBJECT_DN, intake.subject_dn.clone())?
            .with_field(REVOCATION_PASSWORD, intake.revocation_password_hash.clone())?
            .with_field(EMAIL, intake.email.clone())?
            .with_field(PUBLICLY_AVAILABLE, if intake.publicly_available { "true" } else { "false" })?
            .settled();
        let stage = spec.stage(&recipient)?;
        if !stage.requires.is_empty() {
            let missing = validate_stage(&app, spec, &recipient)?;
            if !missing.is_empty() {
                return Err(ComponentError::MissingFields(missing.iter().map(ToString::to_string).collect()));
            }
        }
        let app = sign(&app, SignatureScope::All, &self.key, &self.key.owner, clock)?;
        let msg = build_message(self.ids.next(clock), self.name.clone(), recipient, vec![app])?;
        let app = &msg.applications[0];
        self.audit.append(
            NewEvent::new(AuditKind::Processed, clock)
                .message(&msg.id)
                .application(&app.id)
                .actors([self.key.owner.clone()])
                .detail(format!("credentials accepted for {}", intake.subject_dn)),
        )?;
        self.audit.append(
            NewEvent::new(AuditKind::Forwarded, clock)
                .message(&msg.id)
                .application(&app.id)
                .detail(format!("to {}", msg.recipient)),
        )?;
        Ok(msg)
    }
}

/// Appends an ALL-scope signature by `key` to every application of `msg`.
pub fn countersign(msg: &Message, key: &KeyPairRecord, clock: DateTime<Utc>) -> Result<Message, ComponentError> {
    let mut out = msg.clone();
    for app in &mut out.applications {
        *app = sign(app, SignatureScope::All, key, &key.owner, clock)?;
    }
    Ok(out)
}
