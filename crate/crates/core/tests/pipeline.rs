// SPDX-License-Identifier: Apache-2.0

//! Registration, Certification and Directory Services wired together
//! in-process, with file-backed state where persistence matters.

use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::thread;

use chrono::Utc;

use itp_core::components::{
    AuditKind, AuditLog, CertUsage, Certification, ComponentError, Directory, IssuanceLedger, Registration, VirtualCA,
    countersign, issue_certificate, load_logs, trace,
};
use itp_core::model::IdGenerator;
use itp_core::profiles::{
    CERTIFICATION, DEFAULT_OPERATORS, DIRECTORY_SERVICES, ENC_CERTIFICATE, MULTICERT, ProfileRegistry, REGISTRATION,
    SIGN_CERTIFICATE,
};
use itp_core::routing::ReplayStore;
use itp_core::scenario::{CERTIFICATION_DN, HOST_A, REGISTRATION_DN, alice_intake};
use itp_core::security::{ED25519, KeyPairRecord, KeyUsage, TrustStore, keygen, sign};
use itp_core::{ComponentName, FieldValue, Identifier, Message, SignatureScope, build_message};

fn name(s: &str) -> ComponentName {
    ComponentName::new(s).unwrap()
}

struct Keys {
    registration: KeyPairRecord,
    operators: Vec<KeyPairRecord>,
    certification: KeyPairRecord,
    ca: KeyPairRecord,
}

impl Keys {
    fn new() -> Self {
        let op = |dn: &str| keygen(ED25519, dn, KeyUsage::OperationalSigning).unwrap();
        Keys {
            registration: op(REGISTRATION_DN),
            operators: DEFAULT_OPERATORS.iter().map(|dn| op(dn)).collect(),
            certification: op(CERTIFICATION_DN),
            ca: keygen(ED25519, HOST_A, KeyUsage::CaSigning).unwrap(),
        }
    }

    fn trust(&self) -> TrustStore {
        let mut all = vec![&self.registration, &self.certification, &self.ca];
        all.extend(&self.operators);
        all.into_iter().map(KeyPairRecord::public_only).collect()
    }

    /// Registration's request, countersigned by the first `operators`.
    fn request(&self, operators: usize, publicly_available: bool) -> Message {
        let mut reg = Registration::new(
            name(REGISTRATION),
            MULTICERT,
            self.registration.clone(),
            ProfileRegistry::builtin(),
            AuditLog::in_memory(name(REGISTRATION)),
        );
        let intake = itp_core::components::Intake { publicly_available, ..alice_intake() };
        let mut msg = reg.process(&intake, |_| true, Utc::now()).unwrap();
        for key in &self.operators[..operators] {
            msg = countersign(&msg, key, Utc::now()).unwrap();
        }
        msg
    }

    fn certification(&self, replay: Arc<ReplayStore>, audit: AuditLog, ledger: IssuanceLedger) -> Certification {
        let mut c = Certification::new(
            name(CERTIFICATION),
            self.certification.clone(),
            self.trust(),
            ProfileRegistry::builtin(),
            replay,
            audit,
            ledger,
        );
        c.add_ca(self.ca.clone()).unwrap();
        c
    }

    fn certification_in_memory(&self) -> Certification {
        self.certification(
            Arc::new(ReplayStore::in_memory()),
            AuditLog::in_memory(name(CERTIFICATION)),
            IssuanceLedger::in_memory(),
        )
    }
}

fn directory(keys: &Keys, root: &Path) -> Directory {
    Directory::new(
        name(DIRECTORY_SERVICES),
        keys.trust(),
        ProfileRegistry::builtin(),
        Arc::new(ReplayStore::in_memory()),
        AuditLog::in_memory(name(DIRECTORY_SERVICES)),
        root.join("publication"),
        root.join("outbox.log"),
    )
}

#[test]
fn operator_quorum_shortfall_is_denied_and_not_consumed() {
    let keys = Keys::new();
    let mut cert = keys.certification_in_memory();
    let short = keys.request(1, true);
    let err = cert.process(&short, Utc::now()).unwrap_err();
    match &err {
        ComponentError::AuthorizationDenied(why) => assert!(why.contains("operator quorum 1 < 2"), "{why}"),
        other => panic!("expected denial, got {other:?}"),
    }
    assert_eq!(cert.audit().events().last().unwrap().kind, AuditKind::Rejected);
    assert_eq!(cert.ledger().records().len(), 0);

    // The denial did not mark the application as processed.
    let quorate = countersign(&short, &keys.operators[1], Utc::now()).unwrap();
    let out = cert.process(&quorate, Utc::now()).unwrap();
    assert_eq!(out.recipient.as_str(), DIRECTORY_SERVICES);
    assert_eq!(cert.ledger().count_for(&short.applications[0].id), 3);
}

#[test]
fn unregistered_operators_do_not_count() {
    let keys = Keys::new();
    let stranger = keygen(ED25519, "CN=Mallory,OU=Trustcenter,O=OrgName,C=DE", KeyUsage::OperationalSigning).unwrap();
    let mut trust = keys.trust();
    trust.insert(stranger.public_only()).unwrap();
    let mut cert = Certification::new(
        name(CERTIFICATION),
        keys.certification.clone(),
        trust,
        ProfileRegistry::builtin(),
        Arc::new(ReplayStore::in_memory()),
        AuditLog::in_memory(name(CERTIFICATION)),
        IssuanceLedger::in_memory(),
    );
    cert.add_ca(keys.ca.clone()).unwrap();
    let msg = countersign(&keys.request(1, true), &stranger, Utc::now()).unwrap();
    assert!(matches!(cert.process(&msg, Utc::now()), Err(ComponentError::AuthorizationDenied(_))));
}

#[test]
fn one_hundred_duplicate_deliveries_issue_once() {
    let keys = Keys::new();
    let original = keys.request(2, true);
    let ids = IdGenerator::new();
    // Half exact copies, half new message ids around the same application.
    let deliveries: Vec<Message> = (0..100)
        .map(|i| {
            let mut m = original.clone();
            if i % 2 == 1 {
                m.id = ids.next(Utc::now());
            }
            m
        })
        .collect();

    let replay = Arc::new(ReplayStore::in_memory());
    let workers: Vec<_> = deliveries
        .chunks(25)
        .map(|chunk| {
            let mut cert = keys.certification(
                replay.clone(),
                AuditLog::in_memory(name(CERTIFICATION)),
                IssuanceLedger::in_memory(),
            );
            let chunk = chunk.to_vec();
            thread::spawn(move || {
                let mut ok = 0;
                for m in &chunk {
                    match cert.process(m, Utc::now()) {
                        Ok(_) => ok += 1,
                        Err(ComponentError::ReplayRejected(_)) => {}
                        Err(e) => panic!("unexpected {e}"),
                    }
                }
                (ok, cert.ledger().records().len())
            })
        })
        .collect();
    let (processed, issued) =
        workers.into_iter().map(|w| w.join().unwrap()).fold((0, 0), |(a, b), (x, y)| (a + x, b + y));
    assert_eq!(processed, 1);
    assert_eq!(issued, 3);
}

#[test]
fn full_walk_publishes_and_notifies() {
    let keys = Keys::new();
    let dir = tempfile::tempdir().unwrap();
    let mut cert = keys.certification_in_memory();
    let mut ds = directory(&keys, dir.path());
    let hop2 = cert.process(&keys.request(2, true), Utc::now()).unwrap();
    let app = &hop2.applications[0];

    let records = ds.process(&hop2, Utc::now()).unwrap();
    assert_eq!(records.len(), 1);
    let rec = &records[0];
    assert!(rec.published);
    assert_eq!(rec.certificates.len(), 3);
    assert_eq!(rec.notification.email, "alice@orgunitname.orgname.de");
    assert_eq!(rec.notification.attachments, 3);
    for usage in CertUsage::ALL {
        let path = dir.path().join("publication").join(app.id.as_str()).join(format!("{usage}.cert"));
        assert!(path.is_file(), "{} missing", path.display());
    }
    let outbox = fs::read_to_string(dir.path().join("outbox.log")).unwrap();
    assert_eq!(outbox.lines().count(), 1);
    assert!(outbox.starts_with(&format!("alice@orgunitname.orgname.de|{}|3|", app.id)));

    // Second delivery of the same message is refused.
    assert!(matches!(ds.process(&hop2, Utc::now()), Err(ComponentError::ReplayRejected(_))));
}

#[test]
fn withheld_certificates_are_still_mailed() {
    let keys = Keys::new();
    let dir = tempfile::tempdir().unwrap();
    let mut cert = keys.certification_in_memory();
    let mut ds = directory(&keys, dir.path());
    let hop2 = cert.process(&keys.request(2, false), Utc::now()).unwrap();
    let records = ds.process(&hop2, Utc::now()).unwrap();
    assert!(!records[0].published);
    assert_eq!(records[0].notification.attachments, 3);
    assert!(!dir.path().join("publication").exists());
    let outbox = fs::read_to_string(dir.path().join("outbox.log")).unwrap();
    assert_eq!(outbox.lines().count(), 1);
}

#[test]
fn tampered_certificate_field_is_rejected() {
    let keys = Keys::new();
    let dir = tempfile::tempdir().unwrap();
    let mut cert = keys.certification_in_memory();
    let mut ds = directory(&keys, dir.path());
    let hop2 = cert.process(&keys.request(2, true), Utc::now()).unwrap();

    let mut tampered = hop2.clone();
    let field = tampered.applications[0].fields.iter_mut().find(|f| f.name.as_str() == ENC_CERTIFICATE).unwrap();
    let mut text = field.value.as_text().unwrap().to_owned();
    let last = text.pop().unwrap();
    text.push(if last == 'A' { 'B' } else { 'A' });
    field.value = FieldValue::Text(text);

    assert!(matches!(ds.process(&tampered, Utc::now()), Err(ComponentError::SignatureInvalid(_))));
    assert_eq!(ds.audit().events().last().unwrap().kind, AuditKind::Rejected);
    assert!(!dir.path().join("outbox.log").exists());
    // The untouched message still goes through.
    assert_eq!(ds.process(&hop2, Utc::now()).unwrap().len(), 1);
}

#[test]
fn certificate_from_a_foreign_ca_is_rejected() {
    let keys = Keys::new();
    let dir = tempfile::tempdir().unwrap();
    let mut cert = keys.certification_in_memory();
    let mut ds = directory(&keys, dir.path());
    let hop2 = cert.process(&keys.request(2, true), Utc::now()).unwrap();

    // A correctly re-signed message whose signCertificate was issued by a
    // CA key Directory Services does not trust.
    let rogue = keygen(ED25519, HOST_A, KeyUsage::CaSigning).unwrap();
    let mut ca = VirtualCA::new(HOST_A, rogue, 0).unwrap();
    let subject = keygen(ED25519, "CN=Alice", KeyUsage::OperationalSigning).unwrap();
    let forged = issue_certificate(
        "CN=Alice,OU=OrgUnitName,O=OrgName,C=DE",
        CertUsage::Signature,
        &mut ca,
        &subject.public,
        Utc::now(),
    )
    .unwrap();
    let mut app = hop2.applications[0].set_field(SIGN_CERTIFICATE, forged.to_field_value().into()).unwrap();
    app.signatures.clear();
    let app = sign(&app.settled(), SignatureScope::All, &keys.certification, CERTIFICATION_DN, Utc::now()).unwrap();
    let msg =
        build_message(IdGenerator::new().next(Utc::now()), hop2.sender.clone(), hop2.recipient.clone(), vec![app])
            .unwrap();

    match ds.process(&msg, Utc::now()) {
        Err(ComponentError::SignatureInvalid(why)) => assert!(why.contains(SIGN_CERTIFICATE), "{why}"),
        other => panic!("expected rejection, got {other:?}"),
    }
}

#[test]
fn unknown_virtual_ca_is_rejected_before_admission() {
    let keys = Keys::new();
    let mut cert = Certification::new(
        name(CERTIFICATION),
        keys.certification.clone(),
        keys.trust(),
        ProfileRegistry::builtin(),
        Arc::new(ReplayStore::in_memory()),
        AuditLog::in_memory(name(CERTIFICATION)),
        IssuanceLedger::in_memory(),
    );
    let msg = keys.request(2, true);
    assert!(matches!(cert.process(&msg, Utc::now()), Err(ComponentError::UnknownVirtualCa(ca)) if ca == HOST_A));
    cert.add_ca(keys.ca.clone()).unwrap();
    assert!(cert.process(&msg, Utc::now()).is_ok());
}

#[test]
fn replay_audit_and_serials_survive_restart() {
    let keys = Keys::new();
    let dir = tempfile::tempdir().unwrap();
    let audit_dir = dir.path().join("audit");
    let replay_path = dir.path().join("replay.log");
    let ledger_path = dir.path().join("issued.log");
    let open = |keys: &Keys| {
        keys.certification(
            Arc::new(ReplayStore::open(&replay_path).unwrap()),
            AuditLog::open_in(&audit_dir, name(CERTIFICATION)).unwrap(),
            IssuanceLedger::open(&ledger_path).unwrap(),
        )
    };

    let first = keys.request(2, true);
    let mut cert = open(&keys);
    cert.process(&first, Utc::now()).unwrap();
    drop(cert);

    let mut cert = open(&keys);
    assert!(matches!(cert.process(&first, Utc::now()), Err(ComponentError::ReplayRejected(_))));
    let second = keys.request(2, true);
    cert.process(&second, Utc::now()).unwrap();
    let serials: Vec<u64> = cert.ledger().records().iter().map(|r| r.serial).collect();
    assert_eq!(serials, [1, 2, 3, 4, 5, 6]);
    drop(cert);

    let logs = load_logs(&audit_dir).unwrap();
    assert_eq!(logs.len(), 1);
    let kinds: Vec<AuditKind> =
        trace(logs.iter().map(Vec::as_slice), &first.applications[0].id).iter().map(|e| e.kind).collect();
    assert_eq!(
        kinds,
        [
            AuditKind::Received,
            AuditKind::Verified,
            AuditKind::Authorized,
            AuditKind::Processed,
            AuditKind::Forwarded,
            AuditKind::Rejected
        ]
    );

    // Editing any record breaks the chain from that record on.
    let log_path = AuditLog::path_in(&audit_dir, &name(CERTIFICATION));
    let text = fs::read_to_string(&log_path).unwrap();
    fs::write(&log_path, text.replacen("|received|", "|verified|", 1)).unwrap();
    assert!(matches!(load_logs(&audit_dir), Err(ComponentError::ChainBroken { line: 1, .. })));
}

#[test]
fn directory_requires_certification_signature() {
    let keys = Keys::new();
    let dir = tempfile::tempdir().unwrap();
    let mut cert = keys.certification_in_memory();
    let mut ds = directory(&keys, dir.path());
    let hop2 = cert.process(&keys.request(2, true), Utc::now()).unwrap();

    // Same content, signed by an operator instead of Certification.
    let mut app = hop2.applications[0].clone();
    app.signatures.clear();
    let app = sign(&app, SignatureScope::All, &keys.operators[0], DEFAULT_OPERATORS[0], Utc::now()).unwrap();
    let msg = build_message(Identifier::new("other").unwrap(), hop2.sender.clone(), hop2.recipient.clone(), vec![app])
        .unwrap();
    assert!(matches!(ds.process(&msg, Utc::now()), Err(ComponentError::AuthorizationDenied(_))));
}
