// SPDX-License-Identifier: Apache-2.0

//! Sign an application, put it on the wire, verify it on the other side.

use itp_core::security::{ED25519, KeyUsage, TrustStore, keygen, sign, verify_message};
use itp_core::{Application, ComponentName, Identifier, SignatureScope, build_message, parse, serialize};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dn = "CN=Registration,O=Trustcenter";
    let key = keygen(ED25519, dn, KeyUsage::OperationalSigning)?;
    let app = Application::new(Identifier::new("a1")?, "MultiCert").with_field("email", "alice@example.org")?;
    let app = sign(&app, SignatureScope::All, &key, dn, chrono::Utc::now())?;
    let msg = build_message(
        Identifier::new("m1")?,
        ComponentName::new("Registration")?,
        ComponentName::new("Certification")?,
        vec![app],
    )?;
    let wire = serialize(&msg)?;
    let mut trust = TrustStore::new();
    trust.insert(key.public_only())?;
    assert!(verify_message(&parse(wire.as_bytes())?, &trust).overall());
    Ok(())
}
