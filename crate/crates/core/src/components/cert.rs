// SPDX-License-Identifier: Apache-2.0

//! `itp-simple-cert/1` certificates, virtual CAs and the issuance ledger.

use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use base64::Engine;
use base64::engine::general_purpose::STANDARD as B64;
use chrono::{DateTime, SubsecRound, Utc};

use super::ComponentError;
use crate::codec::{format_timestamp, parse_timestamp};
use crate::linefmt::{escape, unescape};
use crate::model::Identifier;
use crate::security::{KeyPairRecord, KeyUsage, TrustStore};

pub const CERT_FORMAT: &str = "itp-simple-cert/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CertUsage {
    Encryption,
    Signature,
    NonRepudiation,
}

impl CertUsage {
    pub const ALL: [CertUsage; 3] = [Self::Encryption, Self::Signature, Self::NonRepudiation];

    pub fn id(self) -> &'static str {
        match self {
            Self::Encryption => "encryption",
            Self::Signature => "signature",
            Self::NonRepudiation => "non-repudiation",
        }
    }
}

impl fmt::Display for CertUsage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for CertUsage {
    type Err = ComponentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|u| u.id() == s)
            .ok_or_else(|| ComponentError::Certificate(format!("unknown certificate usage {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CertificateBlob {
    pub subject_dn: String,
    pub usage: CertUsage,
    /// Name of the issuing virtual CA.
    pub ca: String,
    pub serial: u64,
    pub issued_at: DateTime<Utc>,
    pub subject_public_key: Vec<u8>,
    pub signature: Vec<u8>,
}

impl CertificateBlob {
    /// The signed tuple.
    pub fn payload(&self) -> String {
        format!(
            "{}|{}|{}|{}|{}|{}",
            escape(&self.subject_dn),
            self.usage,
            escape(&self.ca),
            self.serial,
            format_timestamp(&self.issued_at),
            B64.encode(&self.subject_public_key)
        )
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        format!("{CERT_FORMAT}\n{}\n{}\n", B64.encode(self.payload()), B64.encode(&self.signature)).into_bytes()
    }

    /// Base64 of the blob bytes, as carried in a certificate field.
    pub fn to_field_value(&self) -> String {
        B64.encode(self.to_bytes())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ComponentError> {
        let bad = |detail: &str| ComponentError::Certificate(detail.to_owned());
        let text = std::str::from_utf8(bytes).map_err(|_| bad("not UTF-8"))?;
        let lines: Vec<&str> = text.lines().collect();
        let [format, payload, signature] = lines[..] else { return Err(bad("expected three lines")) };
        if format != CERT_FORMAT {
            return Err(bad("unknown certificate format"));
        }
        let payload = B64.decode(payload).map_err(|_| bad("payload is not Base64"))?;
        let payload = String::from_utf8(payload).map_err(|_| bad("payload is not UTF-8"))?;
        let signature = B64.decode(signature).map_err(|_| bad("signature is not Base64"))?;
        let cols: Vec<&str> = payload.split('|').collect();
        let [subject, usage, ca, serial, issued_at, key] = cols[..] else {
            return Err(bad("payload needs six columns"));
        };
        let blob = Self {
            subject_dn: unescape(subject).ok_or_else(|| bad("bad escape in subject"))?,
            usage: usage.parse()?,
            ca: unescape(ca).ok_or_else(|| bad("bad escape in CA name"))?,
            serial: serial.parse().map_err(|_| bad("serial is not a number"))?,
            issued_at: parse_timestamp(issued_at).ok_or_else(|| bad("bad issue time"))?,
            subject_public_key: B64.decode(key).map_err(|_| bad("subject key is not Base64"))?,
            signature,
        };
        // Reject non-canonical encodings so one certificate has one byte form.
        if blob.payload() != payload {
            return Err(bad("payload is not in canonical form"));
        }
        Ok(blob)
    }

    pub fn from_field_value(value: &str) -> Result<Self, ComponentError> {
        let bytes = B64.decode(value.trim()).map_err(|_| ComponentError::Certificate("field is not Base64".into()))?;
        Self::from_bytes(&bytes)
    }

    pub fn verify(&self, ca_key: &KeyPairRecord) -> bool {
        ca_key.usage == KeyUsage::CaSigning && ca_key.verify_bytes(self.payload().as_bytes(), &self.signature)
    }

    /// Verifies against the CA-signing key the trust store holds for the
    /// issuing CA name.
    pub fn verify_with(&self, trust: &TrustStore) -> bool {
        trust.by_owner(&self.ca).iter().any(|k| self.verify(k))
    }
}

/// A CA identity hosted inside the Certification component.
#[derive(Debug)]
pub struct VirtualCA {
    pub name: String,
    key: KeyPairRecord,
    next_serial: u64,
}

impl VirtualCA {
    /// Serials continue after `last_serial`.
    pub fn new(name: impl Into<String>, key: KeyPairRecord, last_serial: u64) -> Result<Self, ComponentError> {
        if key.usage != KeyUsage::CaSigning {
            return Err(ComponentError::UsageViolation(format!("key {} is not a CA signing key", key.key_id)));
        }
        Ok(Self { name: name.into(), key, next_serial: last_serial + 1 })
    }

    pub fn key(&self) -> &KeyPairRecord {
        &self.key
    }

    pub fn next_serial(&self) -> u64 {
        self.next_serial
    }
}

pub fn issue_certificate(
    subject_dn: &str,
    usage: CertUsage,
    ca: &mut VirtualCA,
    subject_public_key: &[u8],
    at: DateTime<Utc>,
) -> Result<CertificateBlob, ComponentError> {
    let mut blob = CertificateBlob {
        subject_dn: subject_dn.to_owned(),
        usage,
        ca: ca.name.clone(),
        serial: ca.next_serial,
        issued_at: at.trunc_subsecs(0),
        subject_public_key: subject_public_key.to_vec(),
        signature: Vec::new(),
    };
    blob.signature = ca.key.sign_bytes(blob.payload().as_bytes())?;
    ca.next_serial += 1;
    Ok(blob)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IssuedRecord {
    pub application_id: Identifier,
    pub ca: String,
    pub serial: u64,
    pub usage: CertUsage,
    pub at: DateTime<Utc>,
}

/// Append-only list of every certificate Certification has issued.
#[derive(Debug, Default)]
pub struct IssuanceLedger {
    path: Option<PathBuf>,
    file: Option<File>,
    records: Vec<IssuedRecord>,
}

impl IssuanceLedger {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn open(path: &Path) -> Result<Self, ComponentError> {
        let io = |e: std::io::Error| ComponentError::Io(format!("{}: {e}", path.display()));
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(io)?;
        }
        let text = match fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(io(e)),
        };
        let mut records = Vec::new();
        for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.is_empty()) {
            let bad = || ComponentError::Io(format!("{}: line {}: unreadable record", path.display(), n + 1));
            let cols: Vec<&str> = line.split('|').collect();
            let [app, ca, serial, usage, at] = cols[..] else { return Err(bad()) };
            records.push(IssuedRecord {
                application_id: unescape(app).and_then(|a| Identifier::new(a).ok()).ok_or_else(bad)?,
                ca: unescape(ca).ok_or_else(bad)?,
                serial: serial.parse().map_err(|_| bad())?,
                usage: usage.parse().map_err(|_| bad())?,
                at: parse_timestamp(at).ok_or_else(bad)?,
            });
        }
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
        Ok(Self { path: Some(path.to_owned()), file: Some(file), records })
    }

    pub fn record(&mut self, application_id: &Identifier, blob: &CertificateBlob) -> Result<(), ComponentError> {
        let entry = IssuedRecord {
            application_id: application_id.clone(),
            ca: blob.ca.clone(),
            serial: blob.serial,
            usage: blob.usage,
            at: blob.issued_at,
        };
        if let Some(file) = self.file.as_mut() {
            let line = format!(
                "{}|{}|{}|{}|{}\n",
                escape(entry.application_id.as_str()),
                escape(&entry.ca),
                entry.serial,
                entry.usage,
                format_timestamp(&entry.at)
            );
            let path = self.path.as_deref().unwrap_or(Path::new("issuance ledger"));
            file.write_all(line.as_bytes())
                .and_then(|_| file.sync_data())
                .map_err(|e| ComponentError::Io(format!("{}: {e}", path.display())))?;
        }
        self.records.push(entry);
        Ok(())
    }

    pub fn records(&self) -> &[IssuedRecord] {
        &self.records
    }

    pub fn count_for(&self, application_id: &Identifier) -> usize {
        self.records.iter().filter(|r| &r.application_id == application_id).count()
    }

    pub fn last_serial(&self, ca: &str) -> u64 {
        self.records.iter().filter(|r| r.ca == ca).map(|r| r.serial).max().unwrap_or(0)
    }
}
