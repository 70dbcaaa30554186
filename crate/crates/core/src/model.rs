// SPDX-License-Identifier: Apache-2.0

//! The ITP object model: messages, applications, profile fields and
//! signature blocks.
//!
//! Values are plain data. Newtypes ([`Identifier`], [`ComponentName`],
//! [`FieldName`]) check their own lexical rules on construction; the
//! structural rules of a whole [`Message`] are checked by
//! [`crate::codec::validate`], so a malformed message can still be held in
//! memory and reported on.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::atomic::{AtomicU32, Ordering};

use chrono::{DateTime, Utc};
use rand::RngExt;

/// The only protocol version defined.
pub const PROTOCOL_VERSION: &str = "1.0";

const ID_ENTROPY_MASK: u32 = 0x00ff_ffff;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModelError {
    #[error("a message needs at least one application")]
    EmptyMessage,
    #[error("application id {0} appears more than once in the message")]
    DuplicateApplicationId(Identifier),
    #[error("invalid field name {0:?}")]
    InvalidFieldName(String),
    #[error("field {0} holds characters that cannot be carried in a document")]
    InvalidFieldValue(String),
    #[error("invalid identifier {0:?}")]
    InvalidIdentifier(String),
    #[error("invalid component name {0:?}")]
    InvalidComponentName(String),
}

/// Message or application id.
///
/// Uniqueness is not a property of the type; the replay store enforces it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Identifier(String);

impl Identifier {
    pub fn new(value: impl Into<String>) -> Result<Self, ModelError> {
        let value = value.into();
        let ok = !value.is_empty()
            && value.chars().all(|c| {
                is_xml_char(c) && !c.is_whitespace() && !c.is_control() && !matches!(c, '<' | '>' | '&' | '"' | '\'')
            });
        if ok { Ok(Self(value)) } else { Err(ModelError::InvalidIdentifier(value)) }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Identifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Name of a trustcenter component: an IP literal or a symbolic name such as
/// `Directory Services`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ComponentName(String);

impl ComponentName {
    pub fn new(value: impl Into<String>) -> Result<Self, ModelError> {
        let value = value.into();
        let ok = !value.is_empty() && value.trim() == value && value.chars().all(|c| is_xml_char(c) && !c.is_control());
        if ok { Ok(Self(value)) } else { Err(ModelError::InvalidComponentName(value)) }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ComponentName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Element name of a profile field, `[A-Za-z][A-Za-z0-9]*`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FieldName(String);

impl FieldName {
    pub fn new(value: impl Into<String>) -> Result<Self, ModelError> {
        let value = value.into();
        if is_field_name(&value) { Ok(Self(value)) } else { Err(ModelError::InvalidFieldName(value)) }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for FieldName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub(crate) fn is_field_name(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic()) && chars.all(|c| c.is_ascii_alphanumeric())
}

/// Characters representable in an XML 1.0 document.
pub(crate) fn is_xml_char(c: char) -> bool {
    matches!(c,
        '\t' | '\n' | '\r'
        | '\u{20}'..='\u{D7FF}'
        | '\u{E000}'..='\u{FFFD}'
        | '\u{10000}'..='\u{10FFFF}')
}

/// A field value that has been replaced by hybrid ciphertext.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncryptedField {
    pub algorithm: String,
    pub recipient_key_id: String,
    /// Nonce followed by the AEAD output.
    pub ciphertext: Vec<u8>,
    /// Ephemeral public key, nonce and the wrapped content key.
    pub wrapped_key: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FieldValue {
    Text(String),
    Encrypted(EncryptedField),
}

impl FieldValue {
    pub fn text(value: impl Into<String>) -> Self {
        Self::Text(value.into())
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            Self::Text(s) => Some(s),
            Self::Encrypted(_) => None,
        }
    }

    pub fn is_encrypted(&self) -> bool {
        matches!(self, Self::Encrypted(_))
    }
}

impl From<&str> for FieldValue {
    fn from(value: &str) -> Self {
        Self::Text(value.to_owned())
    }
}

impl From<String> for FieldValue {
    fn from(value: String) -> Self {
        Self::Text(value)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProfileField {
    pub name: FieldName,
    pub value: FieldValue,
}

/// What a signature block covers.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SignatureScope {
    /// The enclosing application (or message) with every signature block left out.
    All,
    /// The listed fields, in this order, bound to the application and profile ids.
    Fields(Vec<FieldName>),
}

impl SignatureScope {
    pub fn covers(&self, field: &FieldName) -> bool {
        match self {
            Self::All => true,
            Self::Fields(names) => names.contains(field),
        }
    }
}

impl fmt::Display for SignatureScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::All => f.write_str("ALL"),
            Self::Fields(names) => {
                let names: Vec<&str> = names.iter().map(FieldName::as_str).collect();
                write!(f, "[{}]", names.join(","))
            }
        }
    }
}

/// An enveloped signature over canonical bytes of its scope.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignatureBlock {
    pub signer_dn: String,
    pub key_id: String,
    pub algorithm: String,
    pub digest_algorithm: String,
    pub scope: SignatureScope,
    /// Whole seconds, UTC.
    pub created_at: DateTime<Utc>,
    pub value: Vec<u8>,
}

/// A service request routed from component to component.
#[derive(Debug, Clone)]
pub struct Application {
    pub id: Identifier,
    pub profile_id: String,
    pub fields: Vec<ProfileField>,
    pub signatures: Vec<SignatureBlock>,
    /// Fields changed or removed locally since this value was built or parsed.
    /// Not part of the document; lets verification tell a local edit apart
    /// from tampering.
    edited: BTreeSet<FieldName>,
}

impl PartialEq for Application {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
            && self.profile_id == other.profile_id
            && self.fields == other.fields
            && self.signatures == other.signatures
    }
}

impl Eq for Application {}

impl Application {
    pub fn new(id: Identifier, profile_id: impl Into<String>) -> Self {
        Self { id, profile_id: profile_id.into(), fields: Vec::new(), signatures: Vec::new(), edited: BTreeSet::new() }
    }

    /// Builder-style [`set_field`](Self::set_field) for text values.
    pub fn with_field(self, name: &str, value: impl Into<String>) -> Result<Self, ModelError> {
        self.set_field(name, FieldValue::Text(value.into()))
    }

    /// Sets `name` to `value`, replacing a previous value in place or
    /// appending a new field. Signature blocks are kept as they are.
    pub fn set_field(&self, name: &str, value: FieldValue) -> Result<Self, ModelError> {
        let name = FieldName::new(name)?;
        check_value(&name, &value)?;
        let mut next = self.clone();
        match next.fields.iter_mut().find(|f| f.name == name) {
            Some(field) => {
                if field.value != value {
                    field.value = value;
                    next.edited.insert(name);
                }
            }
            None => next.fields.push(ProfileField { name, value }),
        }
        Ok(next)
    }

    /// Removes `name`; absent fields are a no-op.
    pub fn remove_field(&self, name: &str) -> Self {
        let mut next = self.clone();
        if let Some(pos) = next.fields.iter().position(|f| f.name.as_str() == name) {
            let removed = next.fields.remove(pos);
            next.edited.insert(removed.name);
        }
        next
    }

    /// Replaces the fields in `consumed` with `produced`, inserting the new
    /// fields where the first consumed field stood (or at the end).
    pub fn splice_fields(&self, consumed: &[&str], produced: Vec<ProfileField>) -> Result<Self, ModelError> {
        for field in &produced {
            check_value(&field.name, &field.value)?;
        }
        let mut next = self.clone();
        let mut kept = Vec::with_capacity(next.fields.len() + produced.len());
        let mut pending = Some(produced);
        for field in std::mem::take(&mut next.fields) {
            let is_consumed = consumed.contains(&field.name.as_str());
            let is_replaced = pending.as_ref().is_some_and(|p| p.iter().any(|f| f.name == field.name));
            if is_consumed && let Some(produced) = pending.take() {
                kept.extend(produced);
            }
            if is_consumed || is_replaced {
                next.edited.insert(field.name);
            } else {
                kept.push(field);
            }
        }
        if let Some(produced) = pending {
            kept.extend(produced);
        }
        next.fields = kept;
        Ok(next)
    }

    pub fn get_field(&self, name: &str) -> Option<&FieldValue> {
        self.fields.iter().find(|f| f.name.as_str() == name).map(|f| &f.value)
    }

    /// Plaintext value of `name`, if present and not encrypted.
    pub fn text(&self, name: &str) -> Option<&str> {
        self.get_field(name).and_then(FieldValue::as_text)
    }

    pub fn has_field(&self, name: &str) -> bool {
        self.get_field(name).is_some()
    }

    /// Fields changed or removed by local mutators.
    pub fn edited_fields(&self) -> &BTreeSet<FieldName> {
        &self.edited
    }

    /// Same content with the local edit record cleared, as if freshly parsed.
    pub fn settled(mut self) -> Self {
        self.edited.clear();
        self
    }

    pub(crate) fn mark_edited(&mut self, name: FieldName) {
        self.edited.insert(name);
    }
}

fn check_value(name: &FieldName, value: &FieldValue) -> Result<(), ModelError> {
    match value {
        FieldValue::Text(s) if !s.chars().all(is_xml_char) => Err(ModelError::InvalidFieldValue(name.to_string())),
        _ => Ok(()),
    }
}

/// The routable envelope.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub version: String,
    pub id: Identifier,
    pub sender: ComponentName,
    pub recipient: ComponentName,
    pub applications: Vec<Application>,
    pub signatures: Vec<SignatureBlock>,
}

impl Message {
    pub fn application(&self, id: &Identifier) -> Option<&Application> {
        self.applications.iter().find(|a| &a.id == id)
    }
}

/// Builds a version-1.0 message with no signatures.
pub fn build_message(
    id: Identifier,
    sender: ComponentName,
    recipient: ComponentName,
    applications: Vec<Application>,
) -> Result<Message, ModelError> {
    if applications.is_empty() {
        return Err(ModelError::EmptyMessage);
    }
    let mut seen = BTreeSet::new();
    for app in &applications {
        if !seen.insert(&app.id) {
            return Err(ModelError::DuplicateApplicationId(app.id.clone()));
        }
    }
    Ok(Message { version: PROTOCOL_VERSION.to_owned(), id, sender, recipient, applications, signatures: Vec::new() })
}

/// `YYYYMMDDHHMMSS` of `clock` followed by six hex digits of `entropy`.
pub fn generate_id(clock: DateTime<Utc>, entropy: [u8; 3]) -> Identifier {
    Identifier(format!("{}{}", clock.format("%Y%m%d%H%M%S"), hex::encode(entropy)))
}

/// Process-wide id source. The entropy suffix is a counter with a random
/// starting point, so ids stay distinct even when many share one clock second.
#[derive(Debug)]
pub struct IdGenerator {
    counter: AtomicU32,
}

impl IdGenerator {
    pub fn new() -> Self {
        Self::starting_at(rand::rng().random::<u32>())
    }

    pub fn starting_at(start: u32) -> Self {
        Self { counter: AtomicU32::new(start & ID_ENTROPY_MASK) }
    }

    pub fn next(&self, clock: DateTime<Utc>) -> Identifier {
        let n = self.counter.fetch_add(1, Ordering::Relaxed) & ID_ENTROPY_MASK;
        let [_, a, b, c] = n.to_be_bytes();
        generate_id(clock, [a, b, c])
    }
}

impl Default for IdGenerator {
    fn default() -> Self {
        Self::new()
    }
}
