// SPDX-License-Identifier: Apache-2.0

//! Signing, verification, authorization and field encryption over canonical
//! bytes.

mod authz;
mod encryption;
mod keys;
mod signature;

pub use authz::{AuthorizationPolicy, Decision, authorize, operator_signers};
pub use encryption::{decrypt_field, encrypt_field};
pub use keys::{
    Algorithm, DEFAULT_ENCRYPTION_ALGORITHM, DEFAULT_SIGNATURE_ALGORITHM, DigestAlgorithm, ECDSA_P256, ED25519,
    EncryptionAlgorithm, KeyPairRecord, KeyUsage, Keystore, SignatureAlgorithm, TrustStore, X25519_CHACHA20POLY1305,
    common_name, keygen, normalize_dn,
};
pub use signature::{
    SignatureVerdict, Verdict, VerificationReport, sign, sign_message, sign_with_digest, verify_application,
    verify_message,
};

use crate::codec::CodecError;

#[derive(Debug, PartialEq, Eq, thiserror::Error)]
pub enum SecurityError {
    #[error("unsupported algorithm {0}")]
    UnsupportedAlgorithm(String),
    #[error("key usage violation: {0}")]
    UsageViolation(String),
    #[error("key {0} has no private part")]
    MissingPrivateKey(String),
    #[error("signer {signer} does not own the key (owner {owner})")]
    SignerMismatch { signer: String, owner: String },
    #[error("scope names field {0} which the application does not carry")]
    UnknownScopeField(String),
    #[error("field {0} is absent")]
    FieldAbsent(String),
    #[error("field {0} is already encrypted")]
    AlreadyEncrypted(String),
    #[error("field {0} is not encrypted")]
    NotEncrypted(String),
    #[error("decryption failed")]
    DecryptionFailure,
    #[error("duplicate key id {0}")]
    DuplicateKeyId(String),
    #[error("keystore line {line}: {detail}")]
    Keystore { line: usize, detail: String },
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("keystore I/O: {0}")]
    Io(String),
}

impl From<std::io::Error> for SecurityError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}
