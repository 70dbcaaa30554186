// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use super::RoutingError;
use crate::model::ComponentName;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TransportKind {
    InMemory,
    File,
    Tcp,
}

impl TransportKind {
    pub fn id(self) -> &'static str {
        match self {
            Self::InMemory => "in-memory",
            Self::File => "file",
            Self::Tcp => "tcp",
        }
    }
}

impl fmt::Display for TransportKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for TransportKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "in-memory" | "memory" => Ok(Self::InMemory),
            "file" => Ok(Self::File),
            "tcp" => Ok(Self::Tcp),
            other => Err(format!("unknown transport {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentRegistryEntry {
    pub name: ComponentName,
    pub transport: TransportKind,
    /// Inbox directory for `file`, `host:port` for `tcp`, free-form label for
    /// `in-memory`.
    pub address: String,
}

impl ComponentRegistryEntry {
    pub fn new(name: ComponentName, transport: TransportKind, address: impl Into<String>) -> Self {
        Self { name, transport, address: address.into() }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ComponentRegistry {
    entries: BTreeMap<ComponentName, ComponentRegistryEntry>,
}

impl ComponentRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, entry: ComponentRegistryEntry) -> Result<(), RoutingError> {
        if self.entries.contains_key(&entry.name) {
            return Err(RoutingError::DuplicateComponentName(entry.name.to_string()));
        }
        self.entries.insert(entry.name.clone(), entry);
        Ok(())
    }

    pub fn resolve(&self, name: &ComponentName) -> Result<&ComponentRegistryEntry, RoutingError> {
        self.entries.get(name).ok_or_else(|| RoutingError::UnknownComponent(name.to_string()))
    }

    pub fn entries(&self) -> impl Iterator<Item = &ComponentRegistryEntry> {
        self.entries.values()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Parses `name | transport | address` lines. Relative file-transport
    /// addresses are resolved against `base`.
    pub fn parse(text: &str, base: Option<&Path>) -> Result<Self, RoutingError> {
        let mut registry = Self::new();
        for (index, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |detail: String| RoutingError::Registry { line: index + 1, detail };
            let cols: Vec<&str> = line.split('|').map(str::trim).collect();
            let [name, transport, address] = cols[..] else {
                return Err(err(format!("expected 3 columns, found {}", cols.len())));
            };
            let name = ComponentName::new(name).map_err(|e| err(e.to_string()))?;
            let transport: TransportKind = transport.parse().map_err(err)?;
            let address = match (transport, base) {
                (TransportKind::File, Some(base)) if Path::new(address).is_relative() => {
                    base.join(address).to_string_lossy().into_owned()
                }
                _ => address.to_owned(),
            };
            registry.register(ComponentRegistryEntry::new(name, transport, address)).map_err(|e| err(e.to_string()))?;
        }
        Ok(registry)
    }

    pub fn load(path: &Path) -> Result<Self, RoutingError> {
        let text =
            fs::read_to_string(path).map_err(|e| RoutingError::TransportFailure(format!("{}: {e}", path.display())))?;
        Self::parse(&text, path.parent())
    }

    pub fn render(&self) -> String {
        let mut out = String::from("# name | transport | address\n");
        for e in self.entries.values() {
            out.push_str(&format!("{} | {} | {}\n", e.name, e.transport, e.address));
        }
        out
    }
}
