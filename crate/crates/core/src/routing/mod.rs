// SPDX-License-Identifier: Apache-2.0

//! Component registry, transport dispatch and replay protection.

mod registry;
mod replay;
mod transport;

use std::time::Duration;

use chrono::{DateTime, Utc};

pub use registry::{ComponentRegistry, ComponentRegistryEntry, TransportKind};
pub use replay::{Admission, ReplayStore};
pub use transport::{FILE_SUFFIX, MAX_FRAME, PROCESSED_DIR};

use crate::codec::{self, CodecError, SchemaViolation};
use crate::model::{ComponentName, Identifier, Message};
use transport::Transports;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RoutingError {
    #[error("component {0} is already registered")]
    DuplicateComponentName(String),
    #[error("unknown component {0}")]
    UnknownComponent(String),
    #[error("transport failure: {0}")]
    TransportFailure(String),
    #[error("message is not valid: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    InvalidModel(Vec<SchemaViolation>),
    #[error("message for {found} delivered to {expected}")]
    MisroutedMessage { expected: String, found: String },
    #[error("malformed document: {0}")]
    MalformedDocument(String),
    #[error("replay store: {0}")]
    StorePersistenceFailure(String),
    #[error("registry line {line}: {detail}")]
    Registry { line: usize, detail: String },
}

impl From<CodecError> for RoutingError {
    fn from(e: CodecError) -> Self {
        match e {
            CodecError::InvalidModel(v) | CodecError::SchemaViolations(v) => Self::InvalidModel(v),
            other => Self::MalformedDocument(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeliveryReceipt {
    pub message_id: Identifier,
    pub recipient: ComponentName,
    pub transport: TransportKind,
    pub delivered_at: DateTime<Utc>,
}

/// Dispatches canonical bytes to whichever transport the recipient is
/// registered with.
#[derive(Debug)]
pub struct Router {
    registry: ComponentRegistry,
    transports: Transports,
}

impl Router {
    pub fn new(registry: ComponentRegistry) -> Self {
        Self { registry, transports: Transports::default() }
    }

    pub fn registry(&self) -> &ComponentRegistry {
        &self.registry
    }

    pub fn send(&self, msg: &Message) -> Result<DeliveryReceipt, RoutingError> {
        let entry = self.registry.resolve(&msg.recipient)?;
        let bytes = codec::serialize(msg)?;
        self.transports.deliver(entry, &msg.id, bytes.as_bytes())?;
        Ok(DeliveryReceipt {
            message_id: msg.id.clone(),
            recipient: msg.recipient.clone(),
            transport: entry.transport,
            delivered_at: Utc::now(),
        })
    }

    /// Prepares `component` to receive; only TCP needs it, to bind before
    /// peers connect.
    pub fn listen(&self, component: &ComponentName) -> Result<(), RoutingError> {
        self.transports.listen(self.registry.resolve(component)?)
    }

    /// Next pending bytes for `component`, as delivered.
    pub fn receive_raw(&self, component: &ComponentName, timeout: Duration) -> Result<Option<Vec<u8>>, RoutingError> {
        self.transports.fetch(self.registry.resolve(component)?, timeout)
    }

    /// Next pending message for `component`, parsed and validated.
    pub fn receive(&self, component: &ComponentName, timeout: Duration) -> Result<Option<Message>, RoutingError> {
        let Some(bytes) = self.receive_raw(component, timeout)? else { return Ok(None) };
        let msg = codec::parse(&bytes)?;
        if &msg.recipient != component {
            return Err(RoutingError::MisroutedMessage {
                expected: component.to_string(),
                found: msg.recipient.to_string(),
            });
        }
        Ok(Some(msg))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Application, build_message};

    fn name(s: &str) -> ComponentName {
        ComponentName::new(s).unwrap()
    }

    fn fig2_shape(recipient: &str) -> Message {
        let app = Application::new(Identifier::new("20040202164832").unwrap(), "MultiCert")
            .with_field("clientName", "Host A")
            .and_then(|a| a.with_field("subjectDN", "CN=Alice,OU=OrgUnitName,O=OrgName,C=DE"))
            .unwrap();
        build_message(Identifier::new("20040202164445").unwrap(), name("Registration"), name(recipient), vec![app])
            .unwrap()
    }

    fn router(entries: Vec<ComponentRegistryEntry>) -> Router {
        let mut reg = ComponentRegistry::new();
        for e in entries {
            reg.register(e).unwrap();
        }
        Router::new(reg)
    }

    #[test]
    fn in_memory_loopback() {
        let r = router(vec![ComponentRegistryEntry::new(name("Certification"), TransportKind::InMemory, "")]);
        let msg = fig2_shape("Certification");
        let receipt = r.send(&msg).unwrap();
        assert_eq!(receipt.message_id, msg.id);
        assert_eq!(
            r.receive_raw(&name("Certification"), Duration::ZERO).unwrap().unwrap(),
            codec::serialize(&msg).unwrap().into_vec()
        );
        r.send(&msg).unwrap();
        assert_eq!(r.receive(&name("Certification"), Duration::ZERO).unwrap(), Some(msg));
        assert_eq!(r.receive(&name("Certification"), Duration::from_millis(20)).unwrap(), None);
    }

    #[test]
    fn file_transport_writes_named_inbox_file() {
        let dir = tempfile::tempdir().unwrap();
        let inbox = dir.path().join("cert");
        let r = router(vec![ComponentRegistryEntry::new(
            name("Certification"),
            TransportKind::File,
            inbox.to_string_lossy(),
        )]);
        let msg = fig2_shape("Certification");
        assert_eq!(r.send(&msg).unwrap().transport, TransportKind::File);
        assert!(inbox.join("20040202164445.itp.xml").exists());
        assert_eq!(r.receive(&name("Certification"), Duration::ZERO).unwrap(), Some(msg));
    }

    #[test]
    fn unknown_recipient_and_misrouting() {
        let dir = tempfile::tempdir().unwrap();
        let inbox = dir.path().join("shared");
        let addr = inbox.to_string_lossy().into_owned();
        let r = router(vec![
            ComponentRegistryEntry::new(name("Certification"), TransportKind::File, addr.clone()),
            ComponentRegistryEntry::new(name("Directory Services"), TransportKind::File, addr),
        ]);
        assert!(matches!(r.send(&fig2_shape("Nowhere")), Err(RoutingError::UnknownComponent(_))));
        r.send(&fig2_shape("Certification")).unwrap();
        assert!(matches!(
            r.receive(&name("Directory Services"), Duration::ZERO),
            Err(RoutingError::MisroutedMessage { .. })
        ));
    }

    #[test]
    fn malformed_inbox_file() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("x.itp.xml"), "<message").unwrap();
        let r = router(vec![ComponentRegistryEntry::new(name("C"), TransportKind::File, dir.path().to_string_lossy())]);
        assert!(matches!(r.receive(&name("C"), Duration::ZERO), Err(RoutingError::MalformedDocument(_))));
    }

    #[test]
    fn tcp_loopback() {
        let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        let r = router(vec![ComponentRegistryEntry::new(
            name("Certification"),
            TransportKind::Tcp,
            format!("127.0.0.1:{port}"),
        )]);
        r.listen(&name("Certification")).unwrap();
        let msg = fig2_shape("Certification");
        r.send(&msg).unwrap();
        assert_eq!(r.receive(&name("Certification"), Duration::from_secs(2)).unwrap(), Some(msg));
    }
}
