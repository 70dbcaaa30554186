// SPDX-License-Identifier: Apache-2.0

//! Key material, the algorithm registry and the keystore/trust store.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use base64::Engine;
use base64::engine::general_purpose::STANDARD as B64;
use ed25519_dalek::{Signer as _, Verifier as _};
use rand::RngExt;
use sha2::{Digest, Sha256, Sha512};

use super::SecurityError;
use crate::linefmt;

pub const ED25519: &str = "ed25519";
pub const ECDSA_P256: &str = "ecdsa-p256-sha256";
pub const X25519_CHACHA20POLY1305: &str = "x25519-hkdf-sha256-chacha20poly1305";

/// Default signature scheme.
pub const DEFAULT_SIGNATURE_ALGORITHM: &str = ED25519;
/// Default hybrid encryption scheme.
pub const DEFAULT_ENCRYPTION_ALGORITHM: &str = X25519_CHACHA20POLY1305;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SignatureAlgorithm {
    Ed25519,
    EcdsaP256,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EncryptionAlgorithm {
    X25519ChaCha20Poly1305,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Signature(SignatureAlgorithm),
    Encryption(EncryptionAlgorithm),
}

impl Algorithm {
    pub fn id(self) -> &'static str {
        match self {
            Self::Signature(SignatureAlgorithm::Ed25519) => ED25519,
            Self::Signature(SignatureAlgorithm::EcdsaP256) => ECDSA_P256,
            Self::Encryption(EncryptionAlgorithm::X25519ChaCha20Poly1305) => X25519_CHACHA20POLY1305,
        }
    }

    pub fn all() -> [Algorithm; 3] {
        [
            Self::Signature(SignatureAlgorithm::Ed25519),
            Self::Signature(SignatureAlgorithm::EcdsaP256),
            Self::Encryption(EncryptionAlgorithm::X25519ChaCha20Poly1305),
        ]
    }
}

impl FromStr for Algorithm {
    type Err = SecurityError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::all().into_iter().find(|a| a.id() == s).ok_or_else(|| SecurityError::UnsupportedAlgorithm(s.to_owned()))
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DigestAlgorithm {
    Sha256,
    Sha512,
}

impl DigestAlgorithm {
    pub fn id(self) -> &'static str {
        match self {
            Self::Sha256 => "sha256",
            Self::Sha512 => "sha512",
        }
    }

    pub fn digest(self, data: &[u8]) -> Vec<u8> {
        match self {
            Self::Sha256 => Sha256::digest(data).to_vec(),
            Self::Sha512 => Sha512::digest(data).to_vec(),
        }
    }
}

impl FromStr for DigestAlgorithm {
    type Err = SecurityError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sha256" => Ok(Self::Sha256),
            "sha512" => Ok(Self::Sha512),
            other => Err(SecurityError::UnsupportedAlgorithm(other.to_owned())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KeyUsage {
    OperationalSigning,
    CaSigning,
    Encryption,
}

impl KeyUsage {
    pub fn id(self) -> &'static str {
        match self {
            Self::OperationalSigning => "operational-signing",
            Self::CaSigning => "ca-signing",
            Self::Encryption => "encryption",
        }
    }
}

impl FromStr for KeyUsage {
    type Err = SecurityError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "operational-signing" => Ok(Self::OperationalSigning),
            "ca-signing" => Ok(Self::CaSigning),
            "encryption" => Ok(Self::Encryption),
            other => Err(SecurityError::Keystore { line: 0, detail: format!("unknown key usage {other:?}") }),
        }
    }
}

impl fmt::Display for KeyUsage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

/// A key pair, or only its public half for verification-only records.
#[derive(Clone, PartialEq, Eq)]
pub struct KeyPairRecord {
    pub key_id: String,
    pub algorithm: Algorithm,
    pub usage: KeyUsage,
    pub owner: String,
    pub public: Vec<u8>,
    pub private: Option<Vec<u8>>,
}

impl fmt::Debug for KeyPairRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPairRecord")
            .field("key_id", &self.key_id)
            .field("algorithm", &self.algorithm)
            .field("usage", &self.usage)
            .field("owner", &self.owner)
            .field("private", &self.private.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

fn random_bytes<const N: usize>() -> [u8; N] {
    let mut out = [0u8; N];
    rand::rng().fill(&mut out);
    out
}

fn key_id_for(algorithm: Algorithm, public: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(algorithm.id().as_bytes());
    h.update([0]);
    h.update(public);
    hex::encode(&h.finalize()[..8])
}

/// Generates a fresh key pair for `owner`.
pub fn keygen(algorithm_id: &str, owner: &str, usage: KeyUsage) -> Result<KeyPairRecord, SecurityError> {
    let algorithm: Algorithm = algorithm_id.parse()?;
    match (algorithm, usage) {
        (Algorithm::Signature(_), KeyUsage::OperationalSigning | KeyUsage::CaSigning)
        | (Algorithm::Encryption(_), KeyUsage::Encryption) => {}
        (Algorithm::Signature(_), KeyUsage::Encryption) => {
            return Err(SecurityError::UnsupportedAlgorithm(format!("{algorithm_id} cannot encrypt")));
        }
        (Algorithm::Encryption(_), _) => {
            return Err(SecurityError::UnsupportedAlgorithm(format!("{algorithm_id} cannot sign")));
        }
    }
    let (public, private) = match algorithm {
        Algorithm::Signature(SignatureAlgorithm::Ed25519) => {
            let seed = random_bytes::<32>();
            let key = ed25519_dalek::SigningKey::from_bytes(&seed);
            (key.verifying_key().to_bytes().to_vec(), seed.to_vec())
        }
        Algorithm::Signature(SignatureAlgorithm::EcdsaP256) => loop {
            let scalar = random_bytes::<32>();
            if let Ok(key) = p256::ecdsa::SigningKey::from_slice(&scalar) {
                let public = p256::ecdsa::VerifyingKey::from(&key).to_sec1_bytes().to_vec();
                break (public, scalar.to_vec());
            }
        },
        Algorithm::Encryption(EncryptionAlgorithm::X25519ChaCha20Poly1305) => {
            let secret = x25519_dalek::StaticSecret::from(random_bytes::<32>());
            let public = x25519_dalek::PublicKey::from(&secret);
            (public.as_bytes().to_vec(), secret.to_bytes().to_vec())
        }
    };
    Ok(KeyPairRecord {
        key_id: key_id_for(algorithm, &public),
        algorithm,
        usage,
        owner: owner.to_owned(),
        public,
        private: Some(private),
    })
}

impl KeyPairRecord {
    /// The verification-only half.
    pub fn public_only(&self) -> Self {
        Self { private: None, ..self.clone() }
    }

    pub(crate) fn sign_bytes(&self, data: &[u8]) -> Result<Vec<u8>, SecurityError> {
        let private = self.private.as_deref().ok_or_else(|| SecurityError::MissingPrivateKey(self.key_id.clone()))?;
        let bad_key = || SecurityError::Keystore {
            line: 0,
            detail: format!("key {} has unusable private material", self.key_id),
        };
        match self.algorithm {
            Algorithm::Signature(SignatureAlgorithm::Ed25519) => {
                let seed: [u8; 32] = private.try_into().map_err(|_| bad_key())?;
                let key = ed25519_dalek::SigningKey::from_bytes(&seed);
                Ok(key.sign(data).to_bytes().to_vec())
            }
            Algorithm::Signature(SignatureAlgorithm::EcdsaP256) => {
                let key = p256::ecdsa::SigningKey::from_slice(private).map_err(|_| bad_key())?;
                let sig: p256::ecdsa::Signature = key.sign(data);
                Ok(sig.to_bytes().to_vec())
            }
            Algorithm::Encryption(_) => {
                Err(SecurityError::UsageViolation(format!("key {} is an encryption key and cannot sign", self.key_id)))
            }
        }
    }

    pub(crate) fn verify_bytes(&self, data: &[u8], signature: &[u8]) -> bool {
        match self.algorithm {
            Algorithm::Signature(SignatureAlgorithm::Ed25519) => {
                let Ok(public) = <[u8; 32]>::try_from(self.public.as_slice()) else { return false };
                let Ok(key) = ed25519_dalek::VerifyingKey::from_bytes(&public) else { return false };
                let Ok(sig) = ed25519_dalek::Signature::from_slice(signature) else { return false };
                key.verify(data, &sig).is_ok()
            }
            Algorithm::Signature(SignatureAlgorithm::EcdsaP256) => {
                let Ok(key) = p256::ecdsa::VerifyingKey::from_sec1_bytes(&self.public) else { return false };
                let Ok(sig) = p256::ecdsa::Signature::from_slice(signature) else { return false };
                key.verify(data, &sig).is_ok()
            }
            Algorithm::Encryption(_) => false,
        }
    }

    fn to_line(&self) -> String {
        format!(
            "{} | {} | {} | {} | {} | {}",
            self.key_id,
            self.algorithm,
            self.usage,
            linefmt::escape(&self.owner),
            B64.encode(&self.public),
            self.private.as_ref().map(|p| B64.encode(p)).unwrap_or_default(),
        )
    }

    fn from_line(line: &str, number: usize) -> Result<Self, SecurityError> {
        let err = |detail: String| SecurityError::Keystore { line: number, detail };
        let cols: Vec<&str> = line.split('|').map(str::trim).collect();
        let [key_id, algorithm, usage, owner, public, private] = cols[..] else {
            return Err(err(format!("expected 6 columns, found {}", cols.len())));
        };
        if key_id.is_empty() {
            return Err(err("empty key id".into()));
        }
        let algorithm = algorithm.parse().map_err(|e: SecurityError| err(e.to_string()))?;
        let usage = usage.parse().map_err(|_| err(format!("unknown key usage {usage:?}")))?;
        let owner = linefmt::unescape(owner).ok_or_else(|| err("bad escape in owner".into()))?;
        let public = B64.decode(public).map_err(|e| err(format!("public key: {e}")))?;
        let private = if private.is_empty() {
            None
        } else {
            Some(B64.decode(private).map_err(|e| err(format!("private key: {e}")))?)
        };
        Ok(Self { key_id: key_id.to_owned(), algorithm, usage, owner, public, private })
    }
}

/// Full key records as kept in a keystore file.
///
/// One record per line:
/// `key-id | algorithm-id | usage | owner-subject-dn | base64(public) | base64(private)`,
/// with the last column empty for verification-only records. Blank lines and
/// lines starting with `#` are skipped.
#[derive(Debug, Clone, Default)]
pub struct Keystore {
    records: Vec<KeyPairRecord>,
}

impl Keystore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self, SecurityError> {
        let mut store = Self::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            store.insert(KeyPairRecord::from_line(line, i + 1)?)?;
        }
        Ok(store)
    }

    pub fn load(path: &Path) -> Result<Self, SecurityError> {
        if !path.exists() {
            return Ok(Self::new());
        }
        let text = fs::read_to_string(path).map_err(|e| SecurityError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn render(&self) -> String {
        let mut out = String::from("# key-id | algorithm-id | usage | owner-subject-dn | public | private\n");
        for record in &self.records {
            out.push_str(&record.to_line());
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), SecurityError> {
        let io = |e: std::io::Error| SecurityError::Io(format!("{}: {e}", path.display()));
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(io)?;
        }
        let tmp = path.with_extension("tmp");
        let mut file = fs::File::create(&tmp).map_err(io)?;
        file.write_all(self.render().as_bytes()).map_err(io)?;
        file.sync_all().map_err(io)?;
        fs::rename(tmp, path).map_err(io)
    }

    pub fn insert(&mut self, record: KeyPairRecord) -> Result<(), SecurityError> {
        if self.records.iter().any(|r| r.key_id == record.key_id) {
            return Err(SecurityError::DuplicateKeyId(record.key_id));
        }
        self.records.push(record);
        Ok(())
    }

    pub fn get(&self, key_id: &str) -> Option<&KeyPairRecord> {
        self.records.iter().find(|r| r.key_id == key_id)
    }

    pub fn records(&self) -> &[KeyPairRecord] {
        &self.records
    }

    /// First private key owned by `owner` for `usage`.
    pub fn signing_key_for(&self, owner: &str, usage: KeyUsage) -> Option<&KeyPairRecord> {
        let owner = normalize_dn(owner);
        self.records.iter().find(|r| r.usage == usage && r.private.is_some() && normalize_dn(&r.owner) == owner)
    }

    pub fn trust_store(&self) -> TrustStore {
        let mut trust = TrustStore::new();
        for record in &self.records {
            // Key ids are unique here already.
            let _ = trust.insert(record.clone());
        }
        trust
    }
}

/// Verification-only records, by key id and by owner DN.
#[derive(Debug, Clone, Default)]
pub struct TrustStore {
    by_id: HashMap<String, KeyPairRecord>,
    by_owner: HashMap<String, Vec<String>>,
}

impl TrustStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds the public half of `record`.
    pub fn insert(&mut self, record: KeyPairRecord) -> Result<(), SecurityError> {
        if self.by_id.contains_key(&record.key_id) {
            return Err(SecurityError::DuplicateKeyId(record.key_id));
        }
        self.by_owner.entry(normalize_dn(&record.owner)).or_default().push(record.key_id.clone());
        self.by_id.insert(record.key_id.clone(), record.public_only());
        Ok(())
    }

    pub fn get(&self, key_id: &str) -> Option<&KeyPairRecord> {
        self.by_id.get(key_id)
    }

    pub fn by_owner(&self, owner: &str) -> Vec<&KeyPairRecord> {
        self.by_owner.get(&normalize_dn(owner)).into_iter().flatten().filter_map(|id| self.by_id.get(id)).collect()
    }

    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_id.is_empty()
    }
}

impl FromIterator<KeyPairRecord> for TrustStore {
    fn from_iter<I: IntoIterator<Item = KeyPairRecord>>(iter: I) -> Self {
        let mut trust = Self::new();
        for record in iter {
            let _ = trust.insert(record);
        }
        trust
    }
}

/// Drops whitespace around RDN separators so `CN=A, O=B` and `CN=A,O=B` compare equal.
pub fn normalize_dn(dn: &str) -> String {
    dn.split(',').map(str::trim).collect::<Vec<_>>().join(",")
}

/// Value of the leading `CN=` RDN, if any.
pub fn common_name(dn: &str) -> Option<&str> {
    let first = dn.split(',').next()?.trim();
    let (attr, value) = first.split_once('=')?;
    attr.trim().eq_ignore_ascii_case("CN").then(|| value.trim())
}
