// SPDX-License-Identifier: Apache-2.0

//! Hash-chained audit log, one writer per component.

use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, SecondsFormat, Utc};
use sha2::{Digest, Sha256};

use super::ComponentError;
use crate::linefmt::{escape, unescape};
use crate::model::{ComponentName, Identifier};

pub const GENESIS: [u8; 32] = [0; 32];
pub const AUDIT_SUFFIX: &str = ".audit.log";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AuditKind {
    Received,
    Verified,
    Authorized,
    Processed,
    Forwarded,
    Rejected,
}

impl AuditKind {
    const ALL: [AuditKind; 6] =
        [Self::Received, Self::Verified, Self::Authorized, Self::Processed, Self::Forwarded, Self::Rejected];

    pub fn id(self) -> &'static str {
        match self {
            Self::Received => "received",
            Self::Verified => "verified",
            Self::Authorized => "authorized",
            Self::Processed => "processed",
            Self::Forwarded => "forwarded",
            Self::Rejected => "rejected",
        }
    }
}

impl fmt::Display for AuditKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for AuditKind {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Self::ALL.into_iter().find(|k| k.id() == s).ok_or(())
    }
}

/// What a component reports; the log assigns sequence and chain hash.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NewEvent {
    pub at: DateTime<Utc>,
    pub message_id: Option<Identifier>,
    pub application_id: Option<Identifier>,
    pub kind: AuditKind,
    pub actors: Vec<String>,
    pub detail: String,
}

impl NewEvent {
    pub fn new(kind: AuditKind, at: DateTime<Utc>) -> Self {
        Self { at, message_id: None, application_id: None, kind, actors: Vec::new(), detail: String::new() }
    }

    pub fn message(mut self, id: &Identifier) -> Self {
        self.message_id = Some(id.clone());
        self
    }

    pub fn application(mut self, id: &Identifier) -> Self {
        self.application_id = Some(id.clone());
        self
    }

    pub fn actors(mut self, actors: impl IntoIterator<Item = String>) -> Self {
        self.actors = actors.into_iter().collect();
        self
    }

    pub fn detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditEvent {
    pub sequence: u64,
    pub at: DateTime<Utc>,
    pub component: ComponentName,
    pub message_id: Option<Identifier>,
    pub application_id: Option<Identifier>,
    pub kind: AuditKind,
    pub actors: Vec<String>,
    pub detail: String,
    pub chain_hash: [u8; 32],
}

fn opt_id(id: &Option<Identifier>) -> String {
    id.as_ref().map(|i| escape(i.as_str())).unwrap_or_default()
}

impl AuditEvent {
    /// The record without its chain hash; this is what gets hashed.
    pub fn canonical(&self) -> String {
        let actors: Vec<String> = self.actors.iter().map(|a| escape(a)).collect();
        format!(
            "{}|{}|{}|{}|{}|{}|{}|{}",
            self.sequence,
            self.at.to_rfc3339_opts(SecondsFormat::Micros, true),
            escape(self.component.as_str()),
            opt_id(&self.message_id),
            opt_id(&self.application_id),
            self.kind,
            actors.join(";"),
            escape(&self.detail)
        )
    }

    pub fn to_line(&self) -> String {
        format!("{}|{}", self.canonical(), hex::encode(self.chain_hash))
    }

    pub fn concerns(&self, id: &Identifier) -> bool {
        self.message_id.as_ref() == Some(id) || self.application_id.as_ref() == Some(id)
    }

    fn parse(line: &str) -> Option<Self> {
        let cols: Vec<&str> = line.split('|').collect();
        let [seq, at, component, msg, app, kind, actors, detail, hash] = cols[..] else { return None };
        let id = |s: &str| -> Option<Option<Identifier>> {
            if s.is_empty() { Some(None) } else { Identifier::new(unescape(s)?).ok().map(Some) }
        };
        let actors =
            if actors.is_empty() { Vec::new() } else { actors.split(';').map(unescape).collect::<Option<Vec<_>>>()? };
        Some(Self {
            sequence: seq.parse().ok()?,
            at: DateTime::parse_from_rfc3339(at).ok()?.with_timezone(&Utc),
            component: ComponentName::new(unescape(component)?).ok()?,
            message_id: id(msg)?,
            application_id: id(app)?,
            kind: kind.parse().ok()?,
            actors,
            detail: unescape(detail)?,
            chain_hash: hex::decode(hash).ok()?.try_into().ok()?,
        })
    }
}

fn link(previous: &[u8; 32], canonical: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(previous);
    h.update(canonical.as_bytes());
    h.finalize().into()
}

/// Checks every link from the genesis value. `Err` carries the 1-based
/// position of the first bad record.
pub fn verify_chain(events: &[AuditEvent]) -> Result<(), usize> {
    let mut previous = GENESIS;
    for (i, e) in events.iter().enumerate() {
        if e.sequence != i as u64 + 1 || link(&previous, &e.canonical()) != e.chain_hash {
            return Err(i + 1);
        }
        previous = e.chain_hash;
    }
    Ok(())
}

#[derive(Debug)]
pub struct AuditLog {
    component: ComponentName,
    path: Option<PathBuf>,
    file: Option<File>,
    events: Vec<AuditEvent>,
}

impl AuditLog {
    pub fn in_memory(component: ComponentName) -> Self {
        Self { component, path: None, file: None, events: Vec::new() }
    }

    /// Opens `path`, verifying the chain of whatever is already there.
    pub fn open(path: &Path, component: ComponentName) -> Result<Self, ComponentError> {
        let io = |e: std::io::Error| ComponentError::Io(format!("{}: {e}", path.display()));
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(io)?;
        }
        let events = match fs::read_to_string(path) {
            Ok(text) => read_events(path, &text)?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(io(e)),
        };
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
        Ok(Self { component, path: Some(path.to_owned()), file: Some(file), events })
    }

    /// `<dir>/<component>.audit.log`, with spaces in the name replaced.
    pub fn path_in(dir: &Path, component: &ComponentName) -> PathBuf {
        let slug: String = component
            .as_str()
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c.to_ascii_lowercase() } else { '-' })
            .collect();
        dir.join(format!("{slug}{AUDIT_SUFFIX}"))
    }

    pub fn open_in(dir: &Path, component: ComponentName) -> Result<Self, ComponentError> {
        Self::open(&Self::path_in(dir, &component), component)
    }

    pub fn component(&self) -> &ComponentName {
        &self.component
    }

    pub fn append(&mut self, event: NewEvent) -> Result<&AuditEvent, ComponentError> {
        let previous = self.events.last().map_or(GENESIS, |e| e.chain_hash);
        let mut record = AuditEvent {
            sequence: self.events.len() as u64 + 1,
            at: event.at,
            component: self.component.clone(),
            message_id: event.message_id,
            application_id: event.application_id,
            kind: event.kind,
            actors: event.actors,
            detail: event.detail,
            chain_hash: [0; 32],
        };
        record.chain_hash = link(&previous, &record.canonical());
        if let Some(file) = self.file.as_mut() {
            let path = self.path.as_deref().unwrap_or(Path::new("audit log"));
            file.write_all(format!("{}\n", record.to_line()).as_bytes())
                .and_then(|_| file.sync_data())
                .map_err(|e| ComponentError::Io(format!("{}: {e}", path.display())))?;
        }
        self.events.push(record);
        Ok(self.events.last().expect("just pushed"))
    }

    pub fn events(&self) -> &[AuditEvent] {
        &self.events
    }

    pub fn verify(&self) -> Result<(), ComponentError> {
        verify_chain(&self.events).map_err(|line| ComponentError::ChainBroken {
            log: self.path.as_ref().map_or_else(|| self.component.to_string(), |p| p.display().to_string()),
            line,
        })
    }

    pub fn trace(&self, id: &Identifier) -> Vec<&AuditEvent> {
        self.events.iter().filter(|e| e.concerns(id)).collect()
    }
}

fn read_events(path: &Path, text: &str) -> Result<Vec<AuditEvent>, ComponentError> {
    let broken = |line| ComponentError::ChainBroken { log: path.display().to_string(), line };
    let events = text
        .lines()
        .enumerate()
        .map(|(i, l)| AuditEvent::parse(l).ok_or(broken(i + 1)))
        .collect::<Result<Vec<_>, _>>()?;
    verify_chain(&events).map_err(broken)?;
    Ok(events)
}

/// Loads one log file, or every `*.audit.log` in a directory, verifying
/// each chain.
pub fn load_logs(path: &Path) -> Result<Vec<Vec<AuditEvent>>, ComponentError> {
    let io = |e: std::io::Error| ComponentError::Io(format!("{}: {e}", path.display()));
    let files: Vec<PathBuf> = if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)
            .map_err(io)?
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.to_string_lossy().ends_with(AUDIT_SUFFIX))
            .collect();
        files.sort();
        files
    } else {
        vec![path.to_owned()]
    };
    files
        .iter()
        .map(|f| {
            let text = fs::read_to_string(f).map_err(|e| ComponentError::Io(format!("{}: {e}", f.display())))?;
            read_events(f, &text)
        })
        .collect()
}

/// Events mentioning `id` across several component logs, merged by time.
pub fn trace<'a>(logs: impl IntoIterator<Item = &'a [AuditEvent]>, id: &Identifier) -> Vec<AuditEvent> {
    let mut out: Vec<AuditEvent> = logs.into_iter().flatten().filter(|e| e.concerns(id)).cloned().collect();
    out.sort_by(|a, b| (a.at, a.component.as_str(), a.sequence).cmp(&(b.at, b.component.as_str(), b.sequence)));
    out
}
