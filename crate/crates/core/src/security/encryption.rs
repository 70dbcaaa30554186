// SPDX-License-Identifier: Apache-2.0

//! Field-level hybrid encryption.
//!
//! A fresh content key encrypts the field value with ChaCha20-Poly1305. The
//! content key is wrapped under a key derived with HKDF-SHA256 from an
//! ephemeral X25519 agreement with the recipient. Both AEAD calls bind the
//! application id and field name as associated data.

use chacha20poly1305::aead::{Aead, Payload};
use chacha20poly1305::{ChaCha20Poly1305, Key, KeyInit, Nonce};
use hkdf::Hkdf;
use rand::RngExt;
use sha2::Sha256;
use x25519_dalek::{PublicKey, StaticSecret};

use super::SecurityError;
use super::keys::{Algorithm, EncryptionAlgorithm, KeyPairRecord, KeyUsage, X25519_CHACHA20POLY1305};
use crate::model::{Application, EncryptedField, FieldName, FieldValue};

const NONCE_LEN: usize = 12;
const KEY_LEN: usize = 32;
const TAG_LEN: usize = 16;
const WRAP_INFO: &[u8] = b"itp field key wrap v1";

fn associated_data(app: &Application, field: &str) -> Vec<u8> {
    let mut aad = b"itp-field\0".to_vec();
    aad.extend_from_slice(app.id.as_str().as_bytes());
    aad.push(0);
    aad.extend_from_slice(field.as_bytes());
    aad
}

fn wrapping_key(shared: &[u8; 32], ephemeral: &[u8; 32], recipient: &[u8; 32]) -> [u8; KEY_LEN] {
    let mut salt = [0u8; 64];
    salt[..32].copy_from_slice(ephemeral);
    salt[32..].copy_from_slice(recipient);
    let hk = Hkdf::<Sha256>::new(Some(&salt), shared);
    let mut okm = [0u8; KEY_LEN];
    hk.expand(WRAP_INFO, &mut okm).expect("32 bytes is a valid HKDF-SHA256 output length");
    okm
}

fn random<const N: usize>() -> [u8; N] {
    let mut out = [0u8; N];
    rand::rng().fill(&mut out);
    out
}

fn require_encryption_key(key: &KeyPairRecord) -> Result<[u8; 32], SecurityError> {
    if key.usage != KeyUsage::Encryption
        || key.algorithm != Algorithm::Encryption(EncryptionAlgorithm::X25519ChaCha20Poly1305)
    {
        return Err(SecurityError::UsageViolation(format!("key {} is not an encryption key", key.key_id)));
    }
    key.public
        .as_slice()
        .try_into()
        .map_err(|_| SecurityError::UsageViolation(format!("key {} has a malformed public key", key.key_id)))
}

/// Replaces the plaintext of `field` with ciphertext readable by `recipient`.
pub fn encrypt_field(app: &Application, field: &str, recipient: &KeyPairRecord) -> Result<Application, SecurityError> {
    let recipient_public = require_encryption_key(recipient)?;
    let plaintext = match app.get_field(field) {
        None => return Err(SecurityError::FieldAbsent(field.to_owned())),
        Some(FieldValue::Encrypted(_)) => return Err(SecurityError::AlreadyEncrypted(field.to_owned())),
        Some(FieldValue::Text(t)) => t.clone(),
    };
    let aad = associated_data(app, field);

    let ephemeral = StaticSecret::from(random::<32>());
    let ephemeral_public = PublicKey::from(&ephemeral);
    let shared = ephemeral.diffie_hellman(&PublicKey::from(recipient_public));
    if !shared.was_contributory() {
        return Err(SecurityError::UsageViolation(format!("key {} is a low-order point", recipient.key_id)));
    }
    let kek = wrapping_key(shared.as_bytes(), ephemeral_public.as_bytes(), &recipient_public);

    let content_key = random::<KEY_LEN>();
    let value_nonce = random::<NONCE_LEN>();
    let sealed = ChaCha20Poly1305::new(&Key::from(content_key))
        .encrypt(&Nonce::from(value_nonce), Payload { msg: plaintext.as_bytes(), aad: &aad })
        .map_err(|_| SecurityError::DecryptionFailure)?;
    let wrap_nonce = random::<NONCE_LEN>();
    let wrapped = ChaCha20Poly1305::new(&Key::from(kek))
        .encrypt(&Nonce::from(wrap_nonce), Payload { msg: &content_key, aad: &aad })
        .map_err(|_| SecurityError::DecryptionFailure)?;

    let mut ciphertext = value_nonce.to_vec();
    ciphertext.extend_from_slice(&sealed);
    let mut wrapped_key = ephemeral_public.as_bytes().to_vec();
    wrapped_key.extend_from_slice(&wrap_nonce);
    wrapped_key.extend_from_slice(&wrapped);

    app.set_field(
        field,
        FieldValue::Encrypted(EncryptedField {
            algorithm: X25519_CHACHA20POLY1305.to_owned(),
            recipient_key_id: recipient.key_id.clone(),
            ciphertext,
            wrapped_key,
        }),
    )
    .map_err(|_| SecurityError::FieldAbsent(field.to_owned()))
}

fn open(app: &Application, field: &str, enc: &EncryptedField, key: &KeyPairRecord) -> Option<String> {
    if enc.algorithm != X25519_CHACHA20POLY1305
        || enc.wrapped_key.len() != 32 + NONCE_LEN + KEY_LEN + TAG_LEN
        || enc.ciphertext.len() < NONCE_LEN + TAG_LEN
    {
        return None;
    }
    let secret: [u8; 32] = key.private.as_deref()?.try_into().ok()?;
    let recipient_public: [u8; 32] = key.public.as_slice().try_into().ok()?;
    let aad = associated_data(app, field);

    let (ephemeral, rest) = enc.wrapped_key.split_at(32);
    let (wrap_nonce, wrapped) = rest.split_at(NONCE_LEN);
    let ephemeral: [u8; 32] = ephemeral.try_into().ok()?;
    let shared = StaticSecret::from(secret).diffie_hellman(&PublicKey::from(ephemeral));
    if !shared.was_contributory() {
        return None;
    }
    let kek = wrapping_key(shared.as_bytes(), &ephemeral, &recipient_public);
    let wrap_nonce: [u8; NONCE_LEN] = wrap_nonce.try_into().ok()?;
    let content_key = ChaCha20Poly1305::new(&Key::from(kek))
        .decrypt(&Nonce::from(wrap_nonce), Payload { msg: wrapped, aad: &aad })
        .ok()?;
    let content_key: [u8; KEY_LEN] = content_key.as_slice().try_into().ok()?;

    let (value_nonce, sealed) = enc.ciphertext.split_at(NONCE_LEN);
    let value_nonce: [u8; NONCE_LEN] = value_nonce.try_into().ok()?;
    let plaintext = ChaCha20Poly1305::new(&Key::from(content_key))
        .decrypt(&Nonce::from(value_nonce), Payload { msg: sealed, aad: &aad })
        .ok()?;
    String::from_utf8(plaintext).ok()
}

/// Restores the plaintext of an encrypted `field` with the recipient's key.
pub fn decrypt_field(app: &Application, field: &str, key: &KeyPairRecord) -> Result<Application, SecurityError> {
    require_encryption_key(key)?;
    if key.private.is_none() {
        return Err(SecurityError::MissingPrivateKey(key.key_id.clone()));
    }
    let enc = match app.get_field(field) {
        None => return Err(SecurityError::FieldAbsent(field.to_owned())),
        Some(FieldValue::Text(_)) => return Err(SecurityError::NotEncrypted(field.to_owned())),
        Some(FieldValue::Encrypted(enc)) => enc,
    };
    let plaintext = open(app, field, enc, key).ok_or(SecurityError::DecryptionFailure)?;
    let mut next = app.clone();
    if let Some(slot) = next.fields.iter_mut().find(|f| f.name.as_str() == field) {
        slot.value = FieldValue::Text(plaintext);
    }
    next.mark_edited(FieldName::new(field).map_err(|_| SecurityError::FieldAbsent(field.to_owned()))?);
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Identifier;
    use crate::security::keys::{ED25519, keygen};

    const PASSWORD: &str = "7c4a8 ... 8941c";

    fn app() -> Application {
        Application::new(Identifier::new("20040202164832").unwrap(), "MultiCert")
            .with_field("revocationPassword", PASSWORD)
            .and_then(|a| a.with_field("email", "alice@orgunitname.orgname.de"))
            .unwrap()
            .settled()
    }

    fn enc_key() -> KeyPairRecord {
        keygen(X25519_CHACHA20POLY1305, "CN=Certification", KeyUsage::Encryption).unwrap()
    }

    #[test]
    fn roundtrip_restores_plaintext() {
        let key = enc_key();
        let sealed = encrypt_field(&app(), "revocationPassword", &key).unwrap();
        assert!(sealed.get_field("revocationPassword").unwrap().is_encrypted());
        let opened = decrypt_field(&sealed, "revocationPassword", &key).unwrap();
        assert_eq!(opened.text("revocationPassword"), Some(PASSWORD));
        assert_eq!(opened, app());
    }

    #[test]
    fn wrong_key_fails() {
        let sealed = encrypt_field(&app(), "revocationPassword", &enc_key()).unwrap();
        assert_eq!(decrypt_field(&sealed, "revocationPassword", &enc_key()), Err(SecurityError::DecryptionFailure));
    }

    #[test]
    fn fresh_content_key_each_time() {
        let key = enc_key();
        let a = encrypt_field(&app(), "revocationPassword", &key).unwrap();
        let b = encrypt_field(&app(), "revocationPassword", &key).unwrap();
        assert_ne!(a.get_field("revocationPassword"), b.get_field("revocationPassword"));
    }

    #[test]
    fn tampering_is_detected() {
        let key = enc_key();
        let sealed = encrypt_field(&app(), "revocationPassword", &key).unwrap();
        let Some(FieldValue::Encrypted(enc)) = sealed.get_field("revocationPassword").cloned() else { panic!() };
        for i in 0..enc.ciphertext.len() {
            let mut bad = enc.clone();
            bad.ciphertext[i] ^= 0x01;
            let tampered = sealed.set_field("revocationPassword", FieldValue::Encrypted(bad)).unwrap();
            assert_eq!(decrypt_field(&tampered, "revocationPassword", &key), Err(SecurityError::DecryptionFailure));
        }
        let mut bad = enc.clone();
        bad.wrapped_key[40] ^= 0x80;
        let tampered = sealed.set_field("revocationPassword", FieldValue::Encrypted(bad)).unwrap();
        assert_eq!(decrypt_field(&tampered, "revocationPassword", &key), Err(SecurityError::DecryptionFailure));
    }

    #[test]
    fn ciphertext_is_bound_to_field_and_application() {
        let key = enc_key();
        let sealed = encrypt_field(&app(), "revocationPassword", &key).unwrap();
        let value = sealed.get_field("revocationPassword").cloned().unwrap();
        let moved = sealed.set_field("email", value.clone()).unwrap();
        assert_eq!(decrypt_field(&moved, "email", &key), Err(SecurityError::DecryptionFailure));
        let mut other = sealed.clone();
        other.id = Identifier::new("another").unwrap();
        assert_eq!(decrypt_field(&other, "revocationPassword", &key), Err(SecurityError::DecryptionFailure));
    }

    #[test]
    fn error_cases() {
        let key = enc_key();
        assert_eq!(encrypt_field(&app(), "absent", &key), Err(SecurityError::FieldAbsent("absent".into())));
        let sealed = encrypt_field(&app(), "revocationPassword", &key).unwrap();
        assert_eq!(
            encrypt_field(&sealed, "revocationPassword", &key),
            Err(SecurityError::AlreadyEncrypted("revocationPassword".into()))
        );
        assert_eq!(decrypt_field(&app(), "email", &key), Err(SecurityError::NotEncrypted("email".into())));
        let signing = keygen(ED25519, "CN=x", KeyUsage::OperationalSigning).unwrap();
        assert!(matches!(encrypt_field(&app(), "email", &signing), Err(SecurityError::UsageViolation(_))));
        assert!(matches!(
            decrypt_field(&sealed, "revocationPassword", &key.public_only()),
            Err(SecurityError::MissingPrivateKey(_))
        ));
    }
}
