// SPDX-License-Identifier: Apache-2.0

//! The MultiCert walk-through: Registration, two operators, Certification
//! and Directory Services exchanging files through inbox directories.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use chrono::Utc;

use crate::codec;
use crate::components::{
    AuditEvent, AuditKind, AuditLog, Certification, ComponentError, Directory, Intake, IssuanceLedger,
    PublicationRecord, Registration, countersign, load_logs, trace,
};
use crate::model::{ComponentName, Identifier, Message};
use crate::profiles::{CERTIFICATION, DEFAULT_OPERATORS, DIRECTORY_SERVICES, MULTICERT, ProfileRegistry, REGISTRATION};
use crate::routing::{ComponentRegistry, ComponentRegistryEntry, ReplayStore, Router, TransportKind};
use crate::security::{ED25519, KeyPairRecord, KeyUsage, Keystore, keygen};

pub const REGISTRATION_DN: &str = "CN=Registration,O=Trustcenter";
pub const CERTIFICATION_DN: &str = "CN=Certification,O=Trustcenter";
pub const DIRECTORY_DN: &str = "CN=Directory Services,O=Trustcenter";
pub const HOST_A: &str = "Host A";

pub fn alice_intake() -> Intake {
    Intake {
        subject_dn: "CN=Alice,OU=OrgUnitName,O=OrgName,C=DE".into(),
        client_name: HOST_A.into(),
        revocation_password_hash: "7c4a8 ... 8941c".into(),
        email: "alice@orgunitname.orgname.de".into(),
        publicly_available: true,
    }
}

/// Adds whatever operational and CA keys the scenario needs and `keys`
/// lacks. Returns true when something was generated.
pub fn provision_keys(keys: &mut Keystore) -> Result<bool, ComponentError> {
    let mut wanted: Vec<(&str, KeyUsage)> = vec![
        (REGISTRATION_DN, KeyUsage::OperationalSigning),
        (CERTIFICATION_DN, KeyUsage::OperationalSigning),
        (DIRECTORY_DN, KeyUsage::OperationalSigning),
        (HOST_A, KeyUsage::CaSigning),
    ];
    wanted.extend(DEFAULT_OPERATORS.iter().map(|dn| (*dn, KeyUsage::OperationalSigning)));
    let mut changed = false;
    for (owner, usage) in wanted {
        if keys.signing_key_for(owner, usage).is_none() {
            keys.insert(keygen(ED25519, owner, usage)?)?;
            changed = true;
        }
    }
    Ok(changed)
}

fn key_for(keys: &Keystore, owner: &str, usage: KeyUsage) -> Result<KeyPairRecord, ComponentError> {
    keys.signing_key_for(owner, usage)
        .cloned()
        .ok_or_else(|| ComponentError::UsageViolation(format!("no {usage} key with a private part for {owner}")))
}

/// Where a run keeps its state, relative to the working directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn keystore(&self) -> PathBuf {
        self.root.join("keystore.keys")
    }
    pub fn registry(&self) -> PathBuf {
        self.root.join("registry.txt")
    }
    pub fn inbox(&self, component: &str) -> PathBuf {
        self.root.join("inbox").join(component.to_ascii_lowercase().replace(' ', "-"))
    }
    pub fn replay_log(&self) -> PathBuf {
        self.root.join("replay.log")
    }
    pub fn audit_dir(&self) -> PathBuf {
        self.root.join("audit")
    }
    pub fn issued_log(&self) -> PathBuf {
        self.root.join("issued.log")
    }
    pub fn publication_dir(&self) -> PathBuf {
        self.root.join("publication")
    }
    pub fn outbox(&self) -> PathBuf {
        self.root.join("outbox.log")
    }
    pub fn hop(&self, n: usize) -> PathBuf {
        self.root.join(format!("hop{n}.itp.xml"))
    }
}

#[derive(Debug)]
pub struct ScenarioReport {
    pub application_id: Identifier,
    pub hop1: Message,
    pub hop2: Message,
    pub hop1_path: PathBuf,
    pub hop2_path: PathBuf,
    pub publications: Vec<PublicationRecord>,
    pub trace: Vec<AuditEvent>,
    /// Distinct operator DNs Certification logged when it authorized.
    pub operator_dns: BTreeSet<String>,
    pub chain_verified: bool,
    pub notifications: Vec<String>,
    pub certificates_issued: usize,
}

impl ScenarioReport {
    pub fn trace_components(&self) -> BTreeSet<&str> {
        self.trace.iter().map(|e| e.component.as_str()).collect()
    }
}

fn name(s: &str) -> ComponentName {
    ComponentName::new(s).expect("scenario component names are valid")
}

/// Runs the full pipeline once inside `workdir`.
pub fn run_multicert(workdir: &Path) -> Result<ScenarioReport, ComponentError> {
    let layout = Layout { root: workdir.to_owned() };
    let io = |e: std::io::Error| ComponentError::Io(format!("{}: {e}", workdir.display()));
    fs::create_dir_all(workdir).map_err(io)?;

    let mut keys = Keystore::load(&layout.keystore())?;
    if provision_keys(&mut keys)? {
        keys.save(&layout.keystore())?;
    }
    let trust = keys.trust_store();

    let mut registry = ComponentRegistry::new();
    for component in [CERTIFICATION, DIRECTORY_SERVICES] {
        registry.register(ComponentRegistryEntry::new(
            name(component),
            TransportKind::File,
            layout.inbox(component).to_string_lossy(),
        ))?;
    }
    fs::write(layout.registry(), registry.render()).map_err(io)?;
    let router = Router::new(registry);

    let profiles = ProfileRegistry::builtin();
    let replay = Arc::new(ReplayStore::open(&layout.replay_log())?);
    let audit_dir = layout.audit_dir();

    let mut registration = Registration::new(
        name(REGISTRATION),
        MULTICERT,
        key_for(&keys, REGISTRATION_DN, KeyUsage::OperationalSigning)?,
        profiles.clone(),
        AuditLog::open_in(&audit_dir, name(REGISTRATION))?,
    );
    let mut certification = Certification::new(
        name(CERTIFICATION),
        key_for(&keys, CERTIFICATION_DN, KeyUsage::OperationalSigning)?,
        trust.clone(),
        profiles.clone(),
        replay.clone(),
        AuditLog::open_in(&audit_dir, name(CERTIFICATION))?,
        IssuanceLedger::open(&layout.issued_log())?,
    );
    certification.add_ca(key_for(&keys, HOST_A, KeyUsage::CaSigning)?)?;
    let mut directory = Directory::new(
        name(DIRECTORY_SERVICES),
        trust,
        profiles,
        replay,
        AuditLog::open_in(&audit_dir, name(DIRECTORY_SERVICES))?,
        layout.publication_dir(),
        layout.outbox(),
    );

    let request = registration.process(&alice_intake(), |_| true, Utc::now())?;
    let mut hop1 = request;
    for dn in &DEFAULT_OPERATORS[..2] {
        hop1 = countersign(&hop1, &key_for(&keys, dn, KeyUsage::OperationalSigning)?, Utc::now())?;
    }
    let application_id = hop1.applications[0].id.clone();
    fs::write(layout.hop(1), codec::to_pretty(&hop1)?).map_err(io)?;
    router.send(&hop1)?;

    let wait = Duration::from_secs(5);
    let received = router
        .receive(&name(CERTIFICATION), wait)?
        .ok_or_else(|| ComponentError::Io("nothing arrived at Certification".into()))?;
    let hop2 = certification.process(&received, Utc::now())?;
    fs::write(layout.hop(2), codec::to_pretty(&hop2)?).map_err(io)?;
    router.send(&hop2)?;

    let received = router
        .receive(&name(DIRECTORY_SERVICES), wait)?
        .ok_or_else(|| ComponentError::Io("nothing arrived at Directory Services".into()))?;
    let publications = directory.process(&received, Utc::now())?;
    let certificates_issued = certification.ledger().count_for(&application_id);
    drop((registration, certification, directory));

    let logs = load_logs(&audit_dir);
    let chain_verified = logs.is_ok();
    let logs = logs.unwrap_or_default();
    let trace = trace(logs.iter().map(Vec::as_slice), &application_id);
    let operator_dns = trace
        .iter()
        .filter(|e| e.kind == AuditKind::Authorized && e.component.as_str() == CERTIFICATION)
        .flat_map(|e| e.actors.iter().cloned())
        .collect();
    let notifications = fs::read_to_string(layout.outbox())
        .map_err(io)?
        .lines()
        .filter(|l| l.split('|').nth(1) == Some(application_id.as_str()))
        .map(str::to_owned)
        .collect();

    Ok(ScenarioReport {
        application_id,
        hop1,
        hop2,
        hop1_path: layout.hop(1),
        hop2_path: layout.hop(2),
        publications,
        trace,
        operator_dns,
        chain_verified,
        notifications,
        certificates_issued,
    })
}
