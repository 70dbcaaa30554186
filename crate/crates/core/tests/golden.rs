// SPDX-License-Identifier: Apache-2.0

//! The two worked-example documents, with their signature placeholders
//! replaced by locally generated blocks.

use chrono::{TimeZone, Utc};
use itp_core::model::Application;
use itp_core::profiles::{CERTIFICATION, DEFAULT_OPERATORS, MULTICERT, multicert};
use itp_core::security::{ED25519, KeyPairRecord, KeyUsage, TrustStore, authorize, keygen, sign, verify_message};
use itp_core::{ComponentName, Identifier, SignatureScope, parse, serialize, validate};

const REGISTRATION_TO_CERTIFICATION: &str = include_str!("fixtures/registration_to_certification.xml");
const CERTIFICATION_TO_DIRECTORY: &str = include_str!("fixtures/certification_to_directory.xml");

/// Replaces the n-th `<ds:Signature>…</ds:Signature>` with `blocks[n]`.
fn fill_signatures(template: &str, blocks: &[String]) -> String {
    let mut out = String::new();
    let mut rest = template;
    for block in blocks {
        let start = rest.find("<ds:Signature>").expect("placeholder");
        let end = rest[start..].find("</ds:Signature>").expect("placeholder end") + start + "</ds:Signature>".len();
        out.push_str(&rest[..start]);
        out.push_str(block);
        rest = &rest[end..];
    }
    assert!(!rest.contains("<ds:Signature>"), "more placeholders than blocks");
    out.push_str(rest);
    out
}

/// Canonical `<ds:Signature>` elements of `app`, in order.
fn signature_elements(app: &Application) -> Vec<String> {
    let msg = itp_core::build_message(
        Identifier::new("x").unwrap(),
        ComponentName::new("A").unwrap(),
        ComponentName::new("B").unwrap(),
        vec![app.clone()],
    )
    .unwrap();
    let text = serialize(&msg).unwrap().as_str().to_owned();
    text.match_indices("<ds:Signature>")
        .map(|(i, _)| {
            let end = text[i..].find("</ds:Signature>").unwrap() + i + "</ds:Signature>".len();
            text[i..end].to_owned()
        })
        .collect()
}

fn op_key(dn: &str) -> KeyPairRecord {
    keygen(ED25519, dn, KeyUsage::OperationalSigning).unwrap()
}

fn expected_fields(doc: &str) -> Vec<(String, String)> {
    // Oracle: scrape `<name>value</name>` lines between the profile tags.
    let start = doc.find("<profile id=\"MultiCert\">").unwrap();
    let end = doc.find("</profile>").unwrap();
    doc[start..end]
        .lines()
        .skip(1)
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| {
            let name = &l[1..l.find('>').unwrap()];
            let value = &l[l.find('>').unwrap() + 1..l.rfind("</").unwrap()];
            (name.to_owned(), value.to_owned())
        })
        .collect()
}

#[test]
fn registration_to_certification_parses_verifies_and_authorizes() {
    let clock = Utc.with_ymd_and_hms(2004, 2, 2, 16, 48, 32).unwrap();
    let reg = op_key("CN=Registration,O=Trustcenter");
    let op1 = op_key(DEFAULT_OPERATORS[0]);
    let op2 = op_key(DEFAULT_OPERATORS[1]);

    // Sign the model built from the fixture's fields, then splice the blocks
    // into the verbatim document.
    let fields = expected_fields(REGISTRATION_TO_CERTIFICATION);
    let mut app = Application::new(Identifier::new("20040202164832").unwrap(), MULTICERT);
    for (n, v) in &fields {
        app = app.with_field(n, v.clone()).unwrap();
    }
    let mut app = app.settled();
    for k in [&reg, &op1, &op2] {
        app = sign(&app, SignatureScope::All, k, &k.owner, clock).unwrap();
    }
    let doc = fill_signatures(REGISTRATION_TO_CERTIFICATION, &signature_elements(&app));

    let msg = parse(doc.as_bytes()).unwrap();
    assert!(validate(&msg).is_empty());
    assert_eq!(msg.version, "1.0");
    assert_eq!(msg.id.as_str(), "20040202164445");
    assert_eq!(msg.sender.as_str(), "Registration");
    assert_eq!(msg.recipient.as_str(), "Certification");
    assert_eq!(msg.applications.len(), 1);
    let parsed = &msg.applications[0];
    assert_eq!(parsed.id.as_str(), "20040202164832");
    assert_eq!(parsed.profile_id, "MultiCert");
    let got: Vec<(String, String)> =
        parsed.fields.iter().map(|f| (f.name.to_string(), f.value.as_text().unwrap().to_owned())).collect();
    assert_eq!(
        got,
        [
            ("clientName", "Host A"),
            ("subjectDN", "CN=Alice,OU=OrgUnitName,O=OrgName,C=DE"),
            ("revocationPassword", "7c4a8 ... 8941c"),
            ("email", "alice@orgunitname.orgname.de"),
            ("publiclyAvailable", "true"),
        ]
        .map(|(a, b)| (a.to_owned(), b.to_owned()))
    );
    assert_eq!(parsed.signatures.len(), 3);

    let trust: TrustStore = [reg, op1, op2].into_iter().collect();
    let report = verify_message(&msg, &trust);
    assert!(report.overall(), "{report}");
    let spec = multicert(&DEFAULT_OPERATORS);
    let stage = spec.stage(&ComponentName::new(CERTIFICATION).unwrap()).unwrap();
    assert!(authorize(parsed, &stage.authorization, &report).is_allow());
}

#[test]
fn certification_to_directory_parses_with_literal_values() {
    let clock = Utc.with_ymd_and_hms(2004, 2, 2, 17, 1, 34).unwrap();
    let cert = op_key("CN=Certification,O=Trustcenter");
    let fields = expected_fields(CERTIFICATION_TO_DIRECTORY);
    let mut app = Application::new(Identifier::new("20040202164832").unwrap(), MULTICERT);
    for (n, v) in &fields {
        app = app.with_field(n, v.clone()).unwrap();
    }
    let app = sign(&app.settled(), SignatureScope::All, &cert, &cert.owner, clock).unwrap();
    let doc = fill_signatures(CERTIFICATION_TO_DIRECTORY, &signature_elements(&app));

    let msg = parse(doc.as_bytes()).unwrap();
    assert!(validate(&msg).is_empty());
    assert_eq!(msg.id.as_str(), "20040202170134");
    assert_eq!(msg.sender.as_str(), "Certification");
    assert_eq!(msg.recipient.as_str(), "Directory Services");
    let parsed = &msg.applications[0];
    assert_eq!(parsed.id.as_str(), "20040202164832");
    let names: Vec<&str> = parsed.fields.iter().map(|f| f.name.as_str()).collect();
    assert_eq!(
        names,
        [
            "clientName",
            "encCertificate",
            "signCertificate",
            "nonRepCertificate",
            "revocationPassword",
            "email",
            "publiclyAvailable"
        ]
    );
    assert_eq!(parsed.text("encCertificate"), Some("Base64 encoded certificate"));
    // Transcribed as printed, one character shorter than in the first message.
    assert_eq!(parsed.text("revocationPassword"), Some("7c4a8 ... 8941"));
    assert!(!parsed.has_field("subjectDN"));
    assert_eq!(parsed.signatures.len(), 1);
    assert!(verify_message(&msg, &[cert].into_iter().collect()).overall());
}

#[test]
fn canonical_form_ignores_fixture_whitespace() {
    let cert = op_key("CN=Certification,O=Trustcenter");
    let fields = expected_fields(CERTIFICATION_TO_DIRECTORY);
    let mut app = Application::new(Identifier::new("20040202164832").unwrap(), MULTICERT);
    for (n, v) in &fields {
        app = app.with_field(n, v.clone()).unwrap();
    }
    let app = sign(&app.settled(), SignatureScope::All, &cert, &cert.owner, Utc::now()).unwrap();
    let doc = fill_signatures(CERTIFICATION_TO_DIRECTORY, &signature_elements(&app));
    let squeezed: String = doc.lines().map(str::trim).collect();
    let a = parse(doc.as_bytes()).unwrap();
    let b = parse(squeezed.as_bytes()).unwrap();
    assert_eq!(a, b);
    assert_eq!(serialize(&a).unwrap(), serialize(&b).unwrap());
}
