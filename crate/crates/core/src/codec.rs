// SPDX-License-Identifier: Apache-2.0

//! Canonical serialization, parsing and validation of ITP documents.
//!
//! The canonical form is UTF-8 XML with a fixed element and attribute order,
//! no whitespace between elements, no XML declaration and escaped text.
//! Element layout:
//!
//! ```text
//! <message version="1.0" id="…">
//!   <sender>…</sender>
//!   <recipient>…</recipient>
//!   <application id="…">
//!     <profile id="…">
//!       <fieldName>value</fieldName>
//!       <fieldName><xenc:EncryptedData>…</xenc:EncryptedData></fieldName>
//!     </profile>
//!     <ds:Signature>…</ds:Signature>
//!   </application>
//!   <ds:Signature>…</ds:Signature>
//! </message>
//! ```
//!
//! A signature element carries `ds:SignedInfo` (signer DN, key id, signature
//! and digest method, scope, creation time) and `ds:SignatureValue`. The
//! signature is computed over [`signed_info_bytes`], which appends the digest
//! of the scope's canonical bytes to the canonical `ds:SignedInfo`.

use std::collections::HashSet;
use std::fmt;

use base64::Engine;
use base64::engine::general_purpose::STANDARD as B64;
use chrono::{DateTime, NaiveDateTime, Utc};

use crate::model::{
    Application, ComponentName, EncryptedField, FieldName, FieldValue, Identifier, Message, PROTOCOL_VERSION,
    ProfileField, SignatureBlock, SignatureScope, is_xml_char,
};
use crate::xml::{self, Element, XmlWriter};

pub const SIGNATURE: &str = "ds:Signature";
const SIGNED_INFO: &str = "ds:SignedInfo";
const SIGNER_DN: &str = "ds:SignerDN";
const KEY_ID: &str = "ds:KeyId";
const SIGNATURE_METHOD: &str = "ds:SignatureMethod";
const DIGEST_METHOD: &str = "ds:DigestMethod";
const SCOPE: &str = "ds:Scope";
const SCOPE_ALL: &str = "ds:All";
const SCOPE_FIELD: &str = "ds:Field";
const CREATED: &str = "ds:Created";
const DIGEST_VALUE: &str = "ds:DigestValue";
const SIGNATURE_VALUE: &str = "ds:SignatureValue";
const ENCRYPTED_DATA: &str = "xenc:EncryptedData";
const ENCRYPTION_METHOD: &str = "xenc:EncryptionMethod";
const RECIPIENT_KEY_ID: &str = "xenc:RecipientKeyId";
const ENCRYPTED_KEY: &str = "xenc:EncryptedKey";
const CIPHER_VALUE: &str = "xenc:CipherValue";
const SCOPE_BINDING: &str = "scope";

const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%SZ";

/// Bytes in canonical form.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CanonicalBytes(Vec<u8>);

impl CanonicalBytes {
    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<u8> {
        self.0
    }

    pub fn as_str(&self) -> &str {
        // Only ever built from a String.
        std::str::from_utf8(&self.0).unwrap_or_default()
    }
}

impl AsRef<[u8]> for CanonicalBytes {
    fn as_ref(&self) -> &[u8] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemaViolation {
    pub path: String,
    pub rule: String,
    pub detail: String,
}

impl SchemaViolation {
    pub fn new(path: impl Into<String>, rule: &str, detail: impl Into<String>) -> Self {
        Self { path: path.into(), rule: rule.to_owned(), detail: detail.into() }
    }
}

impl fmt::Display for SchemaViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {} ({})", self.path, self.detail, self.rule)
    }
}

fn list(violations: &[SchemaViolation]) -> String {
    violations.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CodecError {
    #[error("malformed document: {0}")]
    MalformedDocument(String),
    #[error("schema violations: {}", list(.0))]
    SchemaViolations(Vec<SchemaViolation>),
    #[error("invalid model: {}", list(.0))]
    InvalidModel(Vec<SchemaViolation>),
    #[error("scope names field {0} which the application does not carry")]
    UnknownScopeField(String),
}

pub fn format_timestamp(at: &DateTime<Utc>) -> String {
    at.format(TIMESTAMP_FORMAT).to_string()
}

pub fn parse_timestamp(text: &str) -> Option<DateTime<Utc>> {
    NaiveDateTime::parse_from_str(text, TIMESTAMP_FORMAT).ok().map(|t| t.and_utc())
}

// ---------------------------------------------------------------------------
// Writing

fn write_scope(w: &mut XmlWriter, scope: &SignatureScope) {
    w.open(SCOPE, &[]);
    match scope {
        SignatureScope::All => w.leaf(SCOPE_ALL, &[], ""),
        SignatureScope::Fields(names) => {
            for name in names {
                w.leaf(SCOPE_FIELD, &[], name.as_str());
            }
        }
    }
    w.close(SCOPE);
}

fn write_signed_info(w: &mut XmlWriter, block: &SignatureBlock, digest: Option<&[u8]>) {
    w.open(SIGNED_INFO, &[]);
    w.leaf(SIGNER_DN, &[], &block.signer_dn);
    w.leaf(KEY_ID, &[], &block.key_id);
    w.leaf(SIGNATURE_METHOD, &[], &block.algorithm);
    w.leaf(DIGEST_METHOD, &[], &block.digest_algorithm);
    write_scope(w, &block.scope);
    w.leaf(CREATED, &[], &format_timestamp(&block.created_at));
    if let Some(digest) = digest {
        w.leaf(DIGEST_VALUE, &[], &B64.encode(digest));
    }
    w.close(SIGNED_INFO);
}

fn write_signature(w: &mut XmlWriter, block: &SignatureBlock) {
    w.open(SIGNATURE, &[]);
    write_signed_info(w, block, None);
    w.leaf(SIGNATURE_VALUE, &[], &B64.encode(&block.value));
    w.close(SIGNATURE);
}

fn write_field(w: &mut XmlWriter, field: &ProfileField) {
    let name = field.name.as_str();
    match &field.value {
        FieldValue::Text(text) => w.leaf(name, &[], text),
        FieldValue::Encrypted(enc) => {
            w.open(name, &[]);
            w.open(ENCRYPTED_DATA, &[]);
            w.leaf(ENCRYPTION_METHOD, &[], &enc.algorithm);
            w.leaf(RECIPIENT_KEY_ID, &[], &enc.recipient_key_id);
            w.leaf(ENCRYPTED_KEY, &[], &B64.encode(&enc.wrapped_key));
            w.leaf(CIPHER_VALUE, &[], &B64.encode(&enc.ciphertext));
            w.close(ENCRYPTED_DATA);
            w.close(name);
        }
    }
}

fn write_application(w: &mut XmlWriter, app: &Application, with_signatures: bool) {
    w.open("application", &[("id", app.id.as_str())]);
    w.open("profile", &[("id", &app.profile_id)]);
    for field in &app.fields {
        write_field(w, field);
    }
    w.close("profile");
    if with_signatures {
        for block in &app.signatures {
            write_signature(w, block);
        }
    }
    w.close("application");
}

fn write_message(w: &mut XmlWriter, msg: &Message, with_message_signatures: bool) {
    w.open("message", &[("version", &msg.version), ("id", msg.id.as_str())]);
    w.leaf("sender", &[], msg.sender.as_str());
    w.leaf("recipient", &[], msg.recipient.as_str());
    for app in &msg.applications {
        write_application(w, app, true);
    }
    if with_message_signatures {
        for block in &msg.signatures {
            write_signature(w, block);
        }
    }
    w.close("message");
}

/// Canonical bytes of a valid message.
pub fn serialize(msg: &Message) -> Result<CanonicalBytes, CodecError> {
    let violations = validate(msg);
    if !violations.is_empty() {
        return Err(CodecError::InvalidModel(violations));
    }
    let mut w = XmlWriter::canonical();
    write_message(&mut w, msg, true);
    Ok(CanonicalBytes(w.finish().into_bytes()))
}

/// Two-space indented rendering for people; parses back to the same model.
pub fn to_pretty(msg: &Message) -> Result<String, CodecError> {
    let violations = validate(msg);
    if !violations.is_empty() {
        return Err(CodecError::InvalidModel(violations));
    }
    let mut w = XmlWriter::pretty();
    write_message(&mut w, msg, true);
    Ok(w.finish())
}

/// Canonical bytes covered by `scope` within `app`.
///
/// `All` yields the application element with every signature element left
/// out. A field list yields, for each listed field in order, the field
/// element wrapped in a binding element carrying the application and profile
/// ids, so that a field-scoped signature cannot be moved to another
/// application.
pub fn canonicalize_scope(app: &Application, scope: &SignatureScope) -> Result<CanonicalBytes, CodecError> {
    let mut w = XmlWriter::canonical();
    match scope {
        SignatureScope::All => write_application(&mut w, app, false),
        SignatureScope::Fields(names) => {
            for name in names {
                let field = app
                    .fields
                    .iter()
                    .find(|f| &f.name == name)
                    .ok_or_else(|| CodecError::UnknownScopeField(name.to_string()))?;
                w.open(SCOPE_BINDING, &[("application", app.id.as_str()), ("profile", &app.profile_id)]);
                write_field(&mut w, field);
                w.close(SCOPE_BINDING);
            }
        }
    }
    Ok(CanonicalBytes(w.finish().into_bytes()))
}

/// Canonical bytes of the message with its message-level signature
/// elements left out. Application signatures stay in.
pub fn canonicalize_message(msg: &Message) -> CanonicalBytes {
    let mut w = XmlWriter::canonical();
    write_message(&mut w, msg, false);
    CanonicalBytes(w.finish().into_bytes())
}

/// The bytes a signature value is computed over: the block's canonical
/// `ds:SignedInfo` with the scope digest appended as `ds:DigestValue`.
pub fn signed_info_bytes(block: &SignatureBlock, scope_digest: &[u8]) -> CanonicalBytes {
    let mut w = XmlWriter::canonical();
    write_signed_info(&mut w, block, Some(scope_digest));
    CanonicalBytes(w.finish().into_bytes())
}

// ---------------------------------------------------------------------------
// Validation

fn check_text(out: &mut Vec<SchemaViolation>, path: &str, what: &str, text: &str) {
    if !text.chars().all(is_xml_char) {
        out.push(SchemaViolation::new(path, "character", format!("{what} holds characters outside XML 1.0")));
    }
}

fn validate_signature(out: &mut Vec<SchemaViolation>, path: &str, block: &SignatureBlock, message_level: bool) {
    for (what, value) in [
        ("signer DN", &block.signer_dn),
        ("key id", &block.key_id),
        ("signature method", &block.algorithm),
        ("digest method", &block.digest_algorithm),
    ] {
        if value.is_empty() {
            out.push(SchemaViolation::new(path, "signature-shape", format!("{what} is empty")));
        }
        check_text(out, path, what, value);
    }
    match &block.scope {
        SignatureScope::Fields(_) if message_level => {
            out.push(SchemaViolation::new(path, "signature-shape", "message signatures must cover the whole message"));
        }
        SignatureScope::Fields(names) if names.is_empty() => {
            out.push(SchemaViolation::new(path, "signature-shape", "field scope lists no fields"));
        }
        _ => {}
    }
    if block.value.is_empty() {
        out.push(SchemaViolation::new(path, "signature-shape", "signature value is empty"));
    }
}

/// Structural rules of a message. Empty when every model invariant holds.
pub fn validate(msg: &Message) -> Vec<SchemaViolation> {
    let mut out = Vec::new();
    if msg.version != PROTOCOL_VERSION {
        out.push(SchemaViolation::new(
            "/message/@version",
            "version",
            format!("version {:?} is not {PROTOCOL_VERSION:?}", msg.version),
        ));
    }
    if msg.applications.is_empty() {
        out.push(SchemaViolation::new(
            "/message/application",
            "cardinality",
            "a message needs at least one application",
        ));
    }
    let mut app_ids = HashSet::new();
    for (i, app) in msg.applications.iter().enumerate() {
        let path = format!("/message/application[{}]", i + 1);
        if !app_ids.insert(&app.id) {
            out.push(SchemaViolation::new(
                &path,
                "unique-application-id",
                format!("application id {} repeats", app.id),
            ));
        }
        if app.profile_id.is_empty() {
            out.push(SchemaViolation::new(format!("{path}/profile/@id"), "profile-id", "profile id is empty"));
        }
        check_text(&mut out, &path, "profile id", &app.profile_id);
        let mut names = HashSet::new();
        for field in &app.fields {
            let fpath = format!("{path}/profile/{}", field.name);
            if !names.insert(&field.name) {
                out.push(SchemaViolation::new(&fpath, "unique-field-name", format!("field {} repeats", field.name)));
            }
            if let FieldValue::Text(t) = &field.value {
                check_text(&mut out, &fpath, "field value", t);
            }
        }
        for (j, block) in app.signatures.iter().enumerate() {
            validate_signature(&mut out, &format!("{path}/{SIGNATURE}[{}]", j + 1), block, false);
        }
    }
    for (j, block) in msg.signatures.iter().enumerate() {
        validate_signature(&mut out, &format!("/message/{SIGNATURE}[{}]", j + 1), block, true);
    }
    out
}

// ---------------------------------------------------------------------------
// Parsing

struct Reader {
    violations: Vec<SchemaViolation>,
}

impl Reader {
    fn violation(&mut self, path: &str, rule: &str, detail: impl Into<String>) {
        self.violations.push(SchemaViolation::new(path, rule, detail));
    }

    fn only_attrs(&mut self, el: &Element, path: &str, allowed: &[&str]) {
        for (k, _) in &el.attrs {
            if !allowed.contains(&k.as_str()) {
                self.violation(path, "unknown-attribute", format!("unexpected attribute {k}"));
            }
        }
    }

    fn container(&mut self, el: &Element, path: &str) {
        if !el.has_only_blank_text() {
            self.violation(path, "mixed-content", format!("{} carries text between its elements", el.name));
        }
    }

    fn leaf_text(&mut self, el: &Element, path: &str) -> Option<String> {
        self.only_attrs(el, path, &[]);
        let text = el.text();
        if text.is_none() {
            self.violation(path, "leaf", format!("{} must hold text only", el.name));
        }
        text
    }

    fn base64(&mut self, el: &Element, path: &str) -> Option<Vec<u8>> {
        let text = self.leaf_text(el, path)?;
        match B64.decode(text.trim()) {
            Ok(bytes) => Some(bytes),
            Err(e) => {
                self.violation(path, "base64", format!("not Base64: {e}"));
                None
            }
        }
    }

    /// Children of a fixed-shape container, in order, by name.
    fn sequence<'a>(&mut self, el: &'a Element, path: &str, names: &[&str]) -> Option<Vec<&'a Element>> {
        self.only_attrs(el, path, &[]);
        self.container(el, path);
        let kids: Vec<&Element> = el.elements().collect();
        let got: Vec<&str> = kids.iter().map(|e| e.name.as_str()).collect();
        if got != names {
            self.violation(path, "signature-shape", format!("expected children {names:?}, found {got:?}"));
            return None;
        }
        Some(kids)
    }

    fn scope(&mut self, el: &Element, path: &str) -> Option<SignatureScope> {
        self.only_attrs(el, path, &[]);
        self.container(el, path);
        let kids: Vec<&Element> = el.elements().collect();
        if kids.len() == 1 && kids[0].name == SCOPE_ALL {
            let all = kids[0];
            self.only_attrs(all, path, &[]);
            if all.elements().next().is_some() || !all.has_only_blank_text() {
                self.violation(path, "signature-shape", "ds:All must be empty");
            }
            return Some(SignatureScope::All);
        }
        if kids.is_empty() {
            self.violation(path, "signature-shape", "scope is empty");
            return None;
        }
        let mut names = Vec::new();
        for kid in kids {
            if kid.name != SCOPE_FIELD {
                self.violation(path, "signature-shape", format!("unexpected scope entry {}", kid.name));
                return None;
            }
            let text = self.leaf_text(kid, path)?;
            match FieldName::new(text.trim()) {
                Ok(n) => names.push(n),
                Err(e) => {
                    self.violation(path, "signature-shape", e.to_string());
                    return None;
                }
            }
        }
        Some(SignatureScope::Fields(names))
    }

    fn signature(&mut self, el: &Element, path: &str) -> Option<SignatureBlock> {
        let [info, value] = self.sequence(el, path, &[SIGNED_INFO, SIGNATURE_VALUE])?[..] else {
            return None;
        };
        let info_path = format!("{path}/{SIGNED_INFO}");
        let parts =
            self.sequence(info, &info_path, &[SIGNER_DN, KEY_ID, SIGNATURE_METHOD, DIGEST_METHOD, SCOPE, CREATED])?;
        let signer_dn = self.leaf_text(parts[0], &info_path);
        let key_id = self.leaf_text(parts[1], &info_path);
        let algorithm = self.leaf_text(parts[2], &info_path);
        let digest_algorithm = self.leaf_text(parts[3], &info_path);
        let scope = self.scope(parts[4], &format!("{info_path}/{SCOPE}"));
        let created_at = self.leaf_text(parts[5], &info_path).and_then(|t| {
            let parsed = parse_timestamp(t.trim());
            if parsed.is_none() {
                self.violation(&info_path, "timestamp", format!("{t:?} is not YYYY-MM-DDTHH:MM:SSZ"));
            }
            parsed
        });
        let value = self.base64(value, &format!("{path}/{SIGNATURE_VALUE}"));
        Some(SignatureBlock {
            signer_dn: signer_dn?,
            key_id: key_id?,
            algorithm: algorithm?,
            digest_algorithm: digest_algorithm?,
            scope: scope?,
            created_at: created_at?,
            value: value?,
        })
    }

    fn encrypted(&mut self, el: &Element, path: &str) -> Option<EncryptedField> {
        let parts = self.sequence(el, path, &[ENCRYPTION_METHOD, RECIPIENT_KEY_ID, ENCRYPTED_KEY, CIPHER_VALUE])?;
        let algorithm = self.leaf_text(parts[0], path);
        let recipient_key_id = self.leaf_text(parts[1], path);
        let wrapped_key = self.base64(parts[2], path);
        let ciphertext = self.base64(parts[3], path);
        Some(EncryptedField {
            algorithm: algorithm?,
            recipient_key_id: recipient_key_id?,
            ciphertext: ciphertext?,
            wrapped_key: wrapped_key?,
        })
    }

    fn field(&mut self, el: &Element, path: &str) -> Option<ProfileField> {
        let name = match FieldName::new(el.name.as_str()) {
            Ok(n) => n,
            Err(_) => {
                self.violation(path, "field-name", format!("{} is not a valid field name", el.name));
                return None;
            }
        };
        self.only_attrs(el, path, &[]);
        let kids: Vec<&Element> = el.elements().collect();
        let value = match kids.as_slice() {
            [] => FieldValue::Text(el.text().unwrap_or_default()),
            [enc] if enc.name == ENCRYPTED_DATA => {
                self.container(el, path);
                FieldValue::Encrypted(self.encrypted(enc, &format!("{path}/{ENCRYPTED_DATA}"))?)
            }
            _ => {
                self.violation(path, "flat-field", format!("field {name} has nested elements"));
                return None;
            }
        };
        Some(ProfileField { name, value })
    }

    fn application(&mut self, el: &Element, path: &str) -> Option<Application> {
        self.only_attrs(el, path, &["id"]);
        self.container(el, path);
        let id = match el.attr("id").map(Identifier::new) {
            Some(Ok(id)) => Some(id),
            Some(Err(e)) => {
                self.violation(&format!("{path}/@id"), "identifier", e.to_string());
                None
            }
            None => {
                self.violation(&format!("{path}/@id"), "required", "application id is missing");
                None
            }
        };
        let kids: Vec<&Element> = el.elements().collect();
        let Some((profile, rest)) = kids.split_first().filter(|(p, _)| p.name == "profile") else {
            self.violation(path, "required", "application must start with a profile element");
            return None;
        };
        let ppath = format!("{path}/profile");
        self.only_attrs(profile, &ppath, &["id"]);
        self.container(profile, &ppath);
        if profile.has_markup_noise() {
            self.violation(&ppath, "no-comments", "comments and processing instructions are not allowed in a profile");
        }
        let profile_id = profile.attr("id").map(str::to_owned);
        if profile_id.is_none() {
            self.violation(&format!("{ppath}/@id"), "required", "profile id is missing");
        }
        let mut fields = Vec::new();
        for field in profile.elements() {
            if let Some(f) = self.field(field, &format!("{ppath}/{}", field.name)) {
                fields.push(f);
            }
        }
        let mut signatures = Vec::new();
        for (j, sig) in rest.iter().enumerate() {
            let spath = format!("{path}/{}[{}]", sig.name, j + 1);
            if sig.name != SIGNATURE {
                self.violation(&spath, "unknown-element", format!("unexpected element {} in application", sig.name));
                continue;
            }
            if let Some(block) = self.signature(sig, &spath) {
                signatures.push(block);
            }
        }
        let mut app = Application::new(id?, profile_id?);
        app.fields = fields;
        app.signatures = signatures;
        Some(app)
    }

    fn component(&mut self, el: Option<&Element>, path: &str, what: &str) -> Option<ComponentName> {
        let Some(el) = el else {
            self.violation(path, "required", format!("{what} is missing"));
            return None;
        };
        let text = self.leaf_text(el, path)?;
        match ComponentName::new(text) {
            Ok(name) => Some(name),
            Err(e) => {
                self.violation(path, "component-name", e.to_string());
                None
            }
        }
    }

    fn message(&mut self, root: &Element) -> Option<Message> {
        if root.name != "message" {
            self.violation("/", "root", format!("root element is {}, not message", root.name));
            return None;
        }
        self.only_attrs(root, "/message", &["version", "id"]);
        self.container(root, "/message");
        let version = root.attr("version").map(str::to_owned);
        match version.as_deref() {
            None => self.violation("/message/@version", "required", "version is missing"),
            Some(v) if v != PROTOCOL_VERSION => {
                self.violation("/message/@version", "version", format!("version {v:?} is not {PROTOCOL_VERSION:?}"));
            }
            _ => {}
        }
        let id = match root.attr("id").map(Identifier::new) {
            Some(Ok(id)) => Some(id),
            Some(Err(e)) => {
                self.violation("/message/@id", "identifier", e.to_string());
                None
            }
            None => {
                self.violation("/message/@id", "required", "message id is missing");
                None
            }
        };

        let kids: Vec<&Element> = root.elements().collect();
        let mut pos = 0;
        let sender = self.component(kids.get(pos).copied().filter(|e| e.name == "sender"), "/message/sender", "sender");
        if sender.is_some() {
            pos += 1;
        }
        let recipient =
            self.component(kids.get(pos).copied().filter(|e| e.name == "recipient"), "/message/recipient", "recipient");
        if recipient.is_some() {
            pos += 1;
        }

        let mut applications = Vec::new();
        let mut signatures = Vec::new();
        let mut app_index = 0;
        let mut sig_index = 0;
        for kid in &kids[pos..] {
            match kid.name.as_str() {
                "application" if sig_index == 0 => {
                    app_index += 1;
                    if let Some(app) = self.application(kid, &format!("/message/application[{app_index}]")) {
                        applications.push(app);
                    }
                }
                SIGNATURE => {
                    sig_index += 1;
                    if let Some(block) = self.signature(kid, &format!("/message/{SIGNATURE}[{sig_index}]")) {
                        signatures.push(block);
                    }
                }
                other => self.violation("/message", "element-order", format!("unexpected element {other}")),
            }
        }
        if app_index == 0 {
            self.violation("/message/application", "cardinality", "a message needs at least one application");
        }
        Some(Message { version: version?, id: id?, sender: sender?, recipient: recipient?, applications, signatures })
    }
}

/// Parses a document. Whitespace between elements is ignored; unknown
/// elements inside `<profile>` are taken as fields.
pub fn parse(bytes: &[u8]) -> Result<Message, CodecError> {
    let root = xml::parse_document(bytes).map_err(|e| CodecError::MalformedDocument(e.0))?;
    let mut reader = Reader { violations: Vec::new() };
    let msg = reader.message(&root);
    if !reader.violations.is_empty() {
        return Err(CodecError::SchemaViolations(reader.violations));
    }
    let msg = msg
        .ok_or_else(|| CodecError::SchemaViolations(vec![SchemaViolation::new("/", "shape", "unreadable message")]))?;
    let violations = validate(&msg);
    if violations.is_empty() { Ok(msg) } else { Err(CodecError::SchemaViolations(violations)) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_message;
    use chrono::TimeZone;

    fn sample_block(scope: SignatureScope) -> SignatureBlock {
        SignatureBlock {
            signer_dn: "CN=Registration,O=Trustcenter".into(),
            key_id: "k1".into(),
            algorithm: "ed25519".into(),
            digest_algorithm: "sha256".into(),
            scope,
            created_at: Utc.with_ymd_and_hms(2004, 2, 2, 16, 44, 45).unwrap(),
            value: vec![1, 2, 3],
        }
    }

    fn sample_app(id: &str) -> Application {
        let mut app = Application::new(Identifier::new(id).unwrap(), "MultiCert")
            .with_field("clientName", "Host A")
            .and_then(|a| a.with_field("subjectDN", "CN=Alice,OU=OrgUnitName,O=OrgName,C=DE"))
            .unwrap()
            .settled();
        app.signatures.push(sample_block(SignatureScope::All));
        app
    }

    fn sample_message() -> Message {
        build_message(
            Identifier::new("20040202164445").unwrap(),
            ComponentName::new("Registration").unwrap(),
            ComponentName::new("Certification").unwrap(),
            vec![sample_app("20040202164832")],
        )
        .unwrap()
    }

    #[test]
    fn canonical_layout() {
        let bytes = serialize(&sample_message()).unwrap();
        let text = bytes.as_str();
        assert!(text.starts_with(
            "<message version=\"1.0\" id=\"20040202164445\"><sender>Registration</sender><recipient>Certification</recipient><application id=\"20040202164832\"><profile id=\"MultiCert\"><clientName>Host A</clientName>"
        ));
        assert!(!text.contains('\n'));
        assert!(text.ends_with("</ds:Signature></application></message>"));
    }

    #[test]
    fn roundtrip_and_idempotence() {
        let msg = sample_message();
        let bytes = serialize(&msg).unwrap();
        let back = parse(bytes.as_bytes()).unwrap();
        assert_eq!(back, msg);
        assert_eq!(serialize(&back).unwrap(), bytes);
        let pretty = to_pretty(&msg).unwrap();
        assert_eq!(parse(pretty.as_bytes()).unwrap(), msg);
    }

    #[test]
    fn missing_application_is_a_violation() {
        let doc = b"<message version=\"1.0\" id=\"1\"><sender>A</sender><recipient>B</recipient></message>";
        match parse(doc) {
            Err(CodecError::SchemaViolations(v)) => assert!(v.iter().any(|v| v.rule == "cardinality")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn wrong_version_is_a_violation() {
        let mut msg = sample_message();
        msg.version = "2.0".into();
        let doc = {
            let mut w = XmlWriter::canonical();
            write_message(&mut w, &msg, true);
            w.finish()
        };
        match parse(doc.as_bytes()) {
            Err(CodecError::SchemaViolations(v)) => assert_eq!(v[0].path, "/message/@version"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(serialize(&msg), Err(CodecError::InvalidModel(_))));
    }

    #[test]
    fn malformed_input() {
        assert!(matches!(parse(b"<message>"), Err(CodecError::MalformedDocument(_))));
    }

    #[test]
    fn missing_sender_and_recipient() {
        let doc =
            b"<message version=\"1.0\" id=\"1\"><application id=\"a\"><profile id=\"P\"/></application></message>";
        let Err(CodecError::SchemaViolations(v)) = parse(doc) else { panic!() };
        assert!(v.iter().any(|v| v.path == "/message/sender"));
        assert!(v.iter().any(|v| v.path == "/message/recipient"));
    }

    #[test]
    fn duplicate_fields_rejected() {
        let doc = b"<message version=\"1.0\" id=\"1\"><sender>A</sender><recipient>B</recipient><application id=\"a\"><profile id=\"P\"><x>1</x><x>2</x></profile></application></message>";
        let Err(CodecError::SchemaViolations(v)) = parse(doc) else { panic!() };
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, "unique-field-name");
    }

    #[test]
    fn unknown_profile_children_become_fields() {
        let doc = b"<message version=\"1.0\" id=\"1\"><sender>A</sender><recipient>B</recipient><application id=\"a\"><profile id=\"P\"><brandNewTag>v</brandNewTag></profile></application></message>";
        let msg = parse(doc).unwrap();
        assert_eq!(msg.applications[0].text("brandNewTag"), Some("v"));
    }

    #[test]
    fn comments_rejected_inside_profile_only() {
        let inside = b"<message version=\"1.0\" id=\"1\"><sender>A</sender><recipient>B</recipient><application id=\"a\"><profile id=\"P\"><!-- x --><f>v</f></profile></application></message>";
        assert!(matches!(parse(inside), Err(CodecError::SchemaViolations(_))));
        let outside = b"<!-- hello --><message version=\"1.0\" id=\"1\"><!-- x --><sender>A</sender><recipient>B</recipient><application id=\"a\"><profile id=\"P\"><f>v</f></profile></application></message>";
        assert!(parse(outside).is_ok());
    }

    #[test]
    fn bad_signature_shape() {
        let doc = b"<message version=\"1.0\" id=\"1\"><sender>A</sender><recipient>B</recipient><application id=\"a\"><profile id=\"P\"><f>v</f></profile><ds:Signature> other signature elements .... </ds:Signature></application></message>";
        let Err(CodecError::SchemaViolations(v)) = parse(doc) else { panic!() };
        assert!(v.iter().any(|v| v.path.contains("ds:Signature")));
    }

    #[test]
    fn validate_reports_duplicate_application_at_second() {
        let mut msg = sample_message();
        msg.applications.push(msg.applications[0].clone());
        let v = validate(&msg);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].path, "/message/application[2]");
    }

    #[test]
    fn validate_reports_empty_profile_id() {
        let mut msg = sample_message();
        msg.applications[0].profile_id.clear();
        let v = validate(&msg);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, "profile-id");
    }

    #[test]
    fn message_signature_must_cover_all() {
        let mut msg = sample_message();
        msg.signatures.push(sample_block(SignatureScope::Fields(vec![FieldName::new("clientName").unwrap()])));
        assert!(validate(&msg).iter().any(|v| v.rule == "signature-shape"));
    }

    #[test]
    fn all_scope_ignores_signature_blocks() {
        let app = sample_app("a1");
        let mut more = app.clone();
        more.signatures.push(sample_block(SignatureScope::All));
        let mut none = app.clone();
        none.signatures.clear();
        let a = canonicalize_scope(&app, &SignatureScope::All).unwrap();
        assert_eq!(a, canonicalize_scope(&more, &SignatureScope::All).unwrap());
        assert_eq!(a, canonicalize_scope(&none, &SignatureScope::All).unwrap());
    }

    #[test]
    fn field_scope_binds_application_id() {
        let scope = SignatureScope::Fields(vec![FieldName::new("subjectDN").unwrap()]);
        let a = canonicalize_scope(&sample_app("a1"), &scope).unwrap();
        let b = canonicalize_scope(&sample_app("a2"), &scope).unwrap();
        assert_ne!(a, b);
        let scope = SignatureScope::Fields(vec![FieldName::new("missing").unwrap()]);
        assert_eq!(canonicalize_scope(&sample_app("a1"), &scope), Err(CodecError::UnknownScopeField("missing".into())));
    }

    #[test]
    fn field_values_with_markup_survive() {
        let app = sample_app("a1").with_field("note", "a < b & c > \"d\" 'e'\r\n\ttab").unwrap().settled();
        let msg = build_message(
            Identifier::new("m").unwrap(),
            ComponentName::new("A").unwrap(),
            ComponentName::new("B").unwrap(),
            vec![app],
        )
        .unwrap();
        let back = parse(serialize(&msg).unwrap().as_bytes()).unwrap();
        assert_eq!(back, msg);
        let back = parse(to_pretty(&msg).unwrap().as_bytes()).unwrap();
        assert_eq!(back, msg);
    }

    #[test]
    fn encrypted_field_roundtrip() {
        let enc = EncryptedField {
            algorithm: "x25519-hkdf-sha256-chacha20poly1305".into(),
            recipient_key_id: "k9".into(),
            ciphertext: vec![9; 40],
            wrapped_key: vec![7; 92],
        };
        let app = sample_app("a1").set_field("revocationPassword", FieldValue::Encrypted(enc)).unwrap().settled();
        let msg = build_message(
            Identifier::new("m").unwrap(),
            ComponentName::new("A").unwrap(),
            ComponentName::new("B").unwrap(),
            vec![app],
        )
        .unwrap();
        assert_eq!(parse(serialize(&msg).unwrap().as_bytes()).unwrap(), msg);
        assert_eq!(parse(to_pretty(&msg).unwrap().as_bytes()).unwrap(), msg);
    }
}
