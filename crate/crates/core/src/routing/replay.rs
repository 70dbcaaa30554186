// SPDX-License-Identifier: Apache-2.0

//! Append-only record of what each component has already processed.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};

use super::RoutingError;
use crate::codec::{format_timestamp, parse_timestamp};
use crate::linefmt::{escape, unescape};
use crate::model::{ComponentName, Identifier, Message};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Admission {
    Fresh,
    Replay(String),
}

impl Admission {
    pub fn is_fresh(&self) -> bool {
        matches!(self, Self::Fresh)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Kind {
    Message,
    Application,
}

impl Kind {
    fn id(self) -> &'static str {
        match self {
            Self::Message => "message",
            Self::Application => "application",
        }
    }
}

type Key = (Kind, Identifier, ComponentName);

#[derive(Debug, Default)]
struct Inner {
    seen: HashMap<Key, DateTime<Utc>>,
    log: Option<File>,
}

/// Keys are (id, component): the same application legitimately passes
/// through several components, once each.
#[derive(Debug, Default)]
pub struct ReplayStore {
    path: Option<PathBuf>,
    inner: Mutex<Inner>,
}

fn store_failure(path: &Path, e: impl std::fmt::Display) -> RoutingError {
    RoutingError::StorePersistenceFailure(format!("{}: {e}", path.display()))
}

fn parse_line(line: &str) -> Option<(Key, DateTime<Utc>)> {
    let cols: Vec<&str> = line.split('|').collect();
    let [kind, id, component, at] = cols[..] else { return None };
    let kind = match kind {
        "message" => Kind::Message,
        "application" => Kind::Application,
        _ => return None,
    };
    let id = Identifier::new(unescape(id)?).ok()?;
    let component = ComponentName::new(unescape(component)?).ok()?;
    Some(((kind, id, component), parse_timestamp(at)?))
}

impl ReplayStore {
    /// A store that forgets everything on drop.
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Loads `path`, creating it if absent. A torn final line from an
    /// interrupted write is discarded.
    pub fn open(path: &Path) -> Result<Self, RoutingError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| store_failure(path, e))?;
        }
        let text = match fs::read(path) {
            Ok(bytes) => String::from_utf8(bytes).map_err(|e| store_failure(path, e))?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(store_failure(path, e)),
        };
        let complete = text.rfind('\n').map_or(0, |i| i + 1);
        let mut seen = HashMap::new();
        for (number, line) in text[..complete].lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let (key, at) = parse_line(line)
                .ok_or_else(|| store_failure(path, format!("line {}: unreadable record", number + 1)))?;
            seen.entry(key).or_insert(at);
        }
        let log = OpenOptions::new().create(true).append(true).open(path).map_err(|e| store_failure(path, e))?;
        if complete < text.len() {
            log.set_len(complete as u64).map_err(|e| store_failure(path, e))?;
        }
        Ok(Self { path: Some(path.to_owned()), inner: Mutex::new(Inner { seen, log: Some(log) }) })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    fn verdict(seen: &HashMap<Key, DateTime<Utc>>, msg: &Message, component: &ComponentName) -> Admission {
        if seen.contains_key(&(Kind::Message, msg.id.clone(), component.clone())) {
            return Admission::Replay(format!("message id {} seen", msg.id));
        }
        let collided: Vec<&str> = msg
            .applications
            .iter()
            .filter(|a| seen.contains_key(&(Kind::Application, a.id.clone(), component.clone())))
            .map(|a| a.id.as_str())
            .collect();
        if collided.is_empty() {
            Admission::Fresh
        } else {
            Admission::Replay(format!("application id {} already processed at {component}", collided.join(",")))
        }
    }

    /// Reports what `admit` would say without recording anything.
    pub fn check(&self, msg: &Message, component: &ComponentName) -> Admission {
        let inner = self.inner.lock().expect("replay lock");
        Self::verdict(&inner.seen, msg, component)
    }

    /// Atomic check-and-record. Fresh only when the message id and every
    /// application id are unseen at `component`; a single collision rejects
    /// the whole message.
    pub fn admit(
        &self,
        msg: &Message,
        component: &ComponentName,
        at: DateTime<Utc>,
    ) -> Result<Admission, RoutingError> {
        let mut inner = self.inner.lock().expect("replay lock");
        let verdict = Self::verdict(&inner.seen, msg, component);
        if !verdict.is_fresh() {
            return Ok(verdict);
        }
        let keys: Vec<Key> = std::iter::once((Kind::Message, msg.id.clone(), component.clone()))
            .chain(msg.applications.iter().map(|a| (Kind::Application, a.id.clone(), component.clone())))
            .collect();
        if let Some(log) = inner.log.as_mut() {
            let stamp = format_timestamp(&at);
            let mut record = String::new();
            for (kind, id, comp) in &keys {
                record.push_str(&format!("{}|{}|{}|{stamp}\n", kind.id(), escape(id.as_str()), escape(comp.as_str())));
            }
            let path = self.path.as_deref().unwrap_or(Path::new("replay log"));
            log.write_all(record.as_bytes()).map_err(|e| store_failure(path, e))?;
            log.sync_data().map_err(|e| store_failure(path, e))?;
        }
        for key in keys {
            inner.seen.entry(key).or_insert(at);
        }
        Ok(Admission::Fresh)
    }

    pub fn first_seen(&self, application: &Identifier, component: &ComponentName) -> Option<DateTime<Utc>> {
        let inner = self.inner.lock().expect("replay lock");
        inner.seen.get(&(Kind::Application, application.clone(), component.clone())).copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Application, build_message};
    use chrono::TimeZone;

    fn now() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2004, 2, 2, 16, 44, 45).unwrap()
    }

    fn comp(s: &str) -> ComponentName {
        ComponentName::new(s).unwrap()
    }

    fn msg(id: &str, apps: &[&str]) -> Message {
        let apps = apps.iter().map(|a| Application::new(Identifier::new(*a).unwrap(), "MultiCert")).collect();
        build_message(Identifier::new(id).unwrap(), comp("Registration"), comp("Certification"), apps).unwrap()
    }

    #[test]
    fn fresh_then_replay() {
        let store = ReplayStore::in_memory();
        let cert = comp("Certification");
        let m = msg("20040202164445", &["20040202164832"]);
        assert_eq!(store.admit(&m, &cert, now()).unwrap(), Admission::Fresh);
        assert_eq!(store.admit(&m, &cert, now()).unwrap(), Admission::Replay("message id 20040202164445 seen".into()));
        let wrapped = msg("20040202170000", &["20040202164832"]);
        assert!(
            matches!(store.admit(&wrapped, &cert, now()).unwrap(), Admission::Replay(d) if d.contains("20040202164832"))
        );
    }

    #[test]
    fn same_application_fresh_at_next_stage() {
        let store = ReplayStore::in_memory();
        let m = msg("20040202164445", &["20040202164832"]);
        assert!(store.admit(&m, &comp("Certification"), now()).unwrap().is_fresh());
        let hop2 = msg("20040202165010", &["20040202164832"]);
        assert!(store.admit(&hop2, &comp("Directory Services"), now()).unwrap().is_fresh());
    }

    #[test]
    fn one_collision_rejects_the_whole_message() {
        let store = ReplayStore::in_memory();
        let cert = comp("Certification");
        store.admit(&msg("m1", &["a"]), &cert, now()).unwrap();
        let mixed = msg("m2", &["b", "a", "c"]);
        assert_eq!(
            store.admit(&mixed, &cert, now()).unwrap(),
            Admission::Replay("application id a already processed at Certification".into())
        );
        // Nothing from the rejected message was recorded.
        assert!(store.admit(&msg("m3", &["b", "c"]), &cert, now()).unwrap().is_fresh());
    }

    #[test]
    fn check_does_not_record() {
        let store = ReplayStore::in_memory();
        let m = msg("m1", &["a"]);
        assert!(store.check(&m, &comp("C")).is_fresh());
        assert!(store.check(&m, &comp("C")).is_fresh());
        assert!(store.admit(&m, &comp("C"), now()).unwrap().is_fresh());
        assert!(!store.check(&m, &comp("C")).is_fresh());
    }

    #[test]
    fn survives_reopen_and_torn_tail() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("replay.log");
        let cert = comp("Certification");
        {
            let store = ReplayStore::open(&path).unwrap();
            store.admit(&msg("m1", &["a|b"]), &cert, now()).unwrap();
        }
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"application|zz|Certifi").unwrap();
        drop(f);
        let store = ReplayStore::open(&path).unwrap();
        assert!(!store.admit(&msg("m1", &["x"]), &cert, now()).unwrap().is_fresh());
        assert!(!store.admit(&msg("m9", &["a|b"]), &cert, now()).unwrap().is_fresh());
        assert_eq!(store.first_seen(&Identifier::new("a|b").unwrap(), &cert), Some(now()));
        store.admit(&msg("m2", &["zz"]), &cert, now()).unwrap();
        drop(store);
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.lines().all(|l| parse_line(l).is_some()), "{text}");
    }

    #[test]
    fn corrupt_line_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("replay.log");
        fs::write(&path, "nonsense\n").unwrap();
        assert!(matches!(ReplayStore::open(&path), Err(RoutingError::StorePersistenceFailure(_))));
    }

    #[test]
    fn concurrent_admits_fresh_exactly_once() {
        let store = std::sync::Arc::new(ReplayStore::in_memory());
        let fresh = std::sync::atomic::AtomicUsize::new(0);
        std::thread::scope(|s| {
            for i in 0..8 {
                let store = store.clone();
                let fresh = &fresh;
                s.spawn(move || {
                    for j in 0..25 {
                        let m = msg(&format!("m{i}-{j}"), &["app"]);
                        if store.admit(&m, &comp("C"), now()).unwrap().is_fresh() {
                            fresh.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                        }
                    }
                });
            }
        });
        assert_eq!(fresh.into_inner(), 1);
    }
}
