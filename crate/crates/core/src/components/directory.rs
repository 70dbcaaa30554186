// SPDX-License-Identifier: Apache-2.0

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};

use super::{AuditKind, AuditLog, CertificateBlob, ComponentError, NewEvent, certificate_usage};
use crate::codec::format_timestamp;
use crate::linefmt::escape;
use crate::model::{ComponentName, Identifier, Message};
use crate::profiles::{EMAIL, PUBLICLY_AVAILABLE, ProfileRegistry, validate_stage};
use crate::routing::{Admission, ReplayStore};
use crate::security::{Decision, TrustStore, authorize, verify_message};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Notification {
    pub email: String,
    pub attachments: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublicationRecord {
    pub application_id: Identifier,
    pub published: bool,
    /// Always the full set; they are attached to the notification even when
    /// not published.
    pub certificates: Vec<CertificateBlob>,
    pub notification: Notification,
}

#[derive(Debug)]
pub struct Directory {
    name: ComponentName,
    trust: TrustStore,
    profiles: ProfileRegistry,
    replay: Arc<ReplayStore>,
    audit: AuditLog,
    publication_dir: PathBuf,
    outbox: PathBuf,
}

impl Directory {
    /// `trust` must hold the operational keys of earlier stages and the
    /// CA-signing keys of every virtual CA whose certificates arrive here.
    pub fn new(
        name: ComponentName,
        trust: TrustStore,
        profiles: ProfileRegistry,
        replay: Arc<ReplayStore>,
        audit: AuditLog,
        publication_dir: PathBuf,
        outbox: PathBuf,
    ) -> Self {
        Self { name, trust, profiles, replay, audit, publication_dir, outbox }
    }

    pub fn audit(&self) -> &AuditLog {
        &self.audit
    }

    pub fn publication_dir(&self) -> &Path {
        &self.publication_dir
    }

    pub fn outbox(&self) -> &Path {
        &self.outbox
    }

    pub fn process(&mut self, msg: &Message, clock: DateTime<Utc>) -> Result<Vec<PublicationRecord>, ComponentError> {
        match self.try_process(msg, clock) {
            Ok(records) => Ok(records),
            Err(err) => {
                for app in &msg.applications {
                    let _ = self.audit.append(
                        NewEvent::new(AuditKind::Rejected, clock)
                            .message(&msg.id)
                            .application(&app.id)
                            .detail(err.to_string()),
                    );
                }
                Err(err)
            }
        }
    }

    fn try_process(&mut self, msg: &Message, clock: DateTime<Utc>) -> Result<Vec<PublicationRecord>, ComponentError> {
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

        let mut planned = Vec::new();
        for app in &msg.applications {
            let spec = self.profiles.get(&app.profile_id)?;
            let stage = spec.stage(&self.name)?;
            let missing = validate_stage(app, spec, &self.name)?;
            if !missing.is_empty() {
                return Err(ComponentError::MissingFields(missing.iter().map(ToString::to_string).collect()));
            }
            if let Decision::Deny(why) = authorize(app, &stage.authorization, &report) {
                return Err(ComponentError::AuthorizationDenied(format!("application {}: {why}", app.id)));
            }
            let mut certificates = Vec::new();
            for field in &app.fields {
                if certificate_usage(field.name.as_str()).is_none() {
                    continue;
                }
                let value = field
                    .value
                    .as_text()
                    .ok_or_else(|| ComponentError::Certificate(format!("{} is encrypted", field.name)))?;
                let blob = CertificateBlob::from_field_value(value)?;
                if !blob.verify_with(&self.trust) {
                    return Err(ComponentError::SignatureInvalid(format!(
                        "{} does not verify under virtual CA {:?}",
                        field.name, blob.ca
                    )));
                }
                certificates.push(blob);
            }
            let email = app
                .text(EMAIL)
                .ok_or_else(|| ComponentError::MissingFields(vec![format!("{EMAIL} is not plaintext")]))?;
            let published = app.text(PUBLICLY_AVAILABLE) == Some("true") && !certificates.is_empty();
            let signers: Vec<String> = report.valid_signers(&app.id).map(str::to_owned).collect();
            planned.push((
                app,
                signers,
                PublicationRecord {
                    application_id: app.id.clone(),
                    published,
                    notification: Notification { email: email.to_owned(), attachments: certificates.len() },
                    certificates,
                },
            ));
        }

        if let Admission::Replay(detail) = self.replay.admit(msg, &self.name, clock)? {
            return Err(ComponentError::ReplayRejected(detail));
        }

        let mut records = Vec::new();
        for (app, signers, record) in planned {
            self.audit.append(
                NewEvent::new(AuditKind::Verified, clock).message(&msg.id).application(&app.id).actors(signers),
            )?;
            if record.published {
                self.publish(&record)?;
            }
            self.notify(&record, clock)?;
            self.audit.append(
                NewEvent::new(AuditKind::Processed, clock).message(&msg.id).application(&app.id).detail(format!(
                    "{} {} certificates, notified {}",
                    if record.published { "published" } else { "withheld" },
                    record.certificates.len(),
                    record.notification.email
                )),
            )?;
            records.push(record);
        }
        Ok(records)
    }

    fn publish(&self, record: &PublicationRecord) -> Result<(), ComponentError> {
        let dir = self.publication_dir.join(record.application_id.as_str());
        let io = |e: std::io::Error| ComponentError::Io(format!("{}: {e}", dir.display()));
        fs::create_dir_all(&dir).map_err(io)?;
        for blob in &record.certificates {
            let target = dir.join(format!("{}.cert", blob.usage));
            let tmp = dir.join(format!(".{}.cert.tmp", blob.usage));
            fs::write(&tmp, blob.to_bytes()).and_then(|_| fs::rename(&tmp, &target)).map_err(io)?;
        }
        Ok(())
    }

    fn notify(&self, record: &PublicationRecord, clock: DateTime<Utc>) -> Result<(), ComponentError> {
        let io = |e: std::io::Error| ComponentError::Io(format!("{}: {e}", self.outbox.display()));
        if let Some(dir) = self.outbox.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(io)?;
        }
        let line = format!(
            "{}|{}|{}|{}\n",
            escape(&record.notification.email),
            escape(record.application_id.as_str()),
            record.notification.attachments,
            format_timestamp(&clock)
        );
        let mut f = OpenOptions::new().create(true).append(true).open(&self.outbox).map_err(io)?;
        f.write_all(line.as_bytes()).and_then(|_| f.sync_data()).map_err(io)
    }
}
