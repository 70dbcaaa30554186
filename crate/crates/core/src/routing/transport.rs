// SPDX-License-Identifier: Apache-2.0

//! Byte-level delivery: in-memory mailboxes, file inboxes and framed TCP.

use std::collections::{HashMap, VecDeque};
use std::fs;
use std::io::{self, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use rand::RngExt;

use super::RoutingError;
use super::registry::{ComponentRegistryEntry, TransportKind};
use crate::model::{ComponentName, Identifier};

pub const FILE_SUFFIX: &str = ".itp.xml";
pub const PROCESSED_DIR: &str = "processed";
/// Largest frame accepted over TCP.
pub const MAX_FRAME: usize = 16 * 1024 * 1024;
const POLL: Duration = Duration::from_millis(10);

fn failure(context: impl std::fmt::Display, e: io::Error) -> RoutingError {
    RoutingError::TransportFailure(format!("{context}: {e}"))
}

#[derive(Debug, Default)]
pub(crate) struct Transports {
    mailboxes: Mutex<HashMap<ComponentName, VecDeque<Vec<u8>>>>,
    listeners: Mutex<HashMap<ComponentName, TcpListener>>,
}

impl Transports {
    pub(crate) fn deliver(
        &self,
        entry: &ComponentRegistryEntry,
        id: &Identifier,
        bytes: &[u8],
    ) -> Result<(), RoutingError> {
        match entry.transport {
            TransportKind::InMemory => {
                let mut boxes = self.mailboxes.lock().expect("mailbox lock");
                boxes.entry(entry.name.clone()).or_default().push_back(bytes.to_vec());
                Ok(())
            }
            TransportKind::File => write_inbox(Path::new(&entry.address), id, bytes),
            TransportKind::Tcp => send_frame(&entry.address, bytes),
        }
    }

    /// Binds the TCP listener of `entry` now instead of on first receive.
    pub(crate) fn listen(&self, entry: &ComponentRegistryEntry) -> Result<(), RoutingError> {
        if entry.transport != TransportKind::Tcp {
            return Ok(());
        }
        let mut listeners = self.listeners.lock().expect("listener lock");
        if !listeners.contains_key(&entry.name) {
            let listener = TcpListener::bind(&entry.address).map_err(|e| failure(&entry.address, e))?;
            listener.set_nonblocking(true).map_err(|e| failure(&entry.address, e))?;
            listeners.insert(entry.name.clone(), listener);
        }
        Ok(())
    }

    pub(crate) fn fetch(
        &self,
        entry: &ComponentRegistryEntry,
        timeout: Duration,
    ) -> Result<Option<Vec<u8>>, RoutingError> {
        self.listen(entry)?;
        let deadline = Instant::now() + timeout;
        loop {
            let next = match entry.transport {
                TransportKind::InMemory => {
                    let mut boxes = self.mailboxes.lock().expect("mailbox lock");
                    boxes.get_mut(&entry.name).and_then(VecDeque::pop_front)
                }
                TransportKind::File => take_from_inbox(Path::new(&entry.address))?,
                TransportKind::Tcp => {
                    let listeners = self.listeners.lock().expect("listener lock");
                    accept_frame(&listeners[&entry.name])?
                }
            };
            if next.is_some() || Instant::now() >= deadline {
                return Ok(next);
            }
            thread::sleep(POLL.min(deadline.saturating_duration_since(Instant::now())));
        }
    }
}

fn write_inbox(dir: &Path, id: &Identifier, bytes: &[u8]) -> Result<(), RoutingError> {
    fs::create_dir_all(dir).map_err(|e| failure(dir.display(), e))?;
    let tmp = dir.join(format!(".{id}.{:08x}.tmp", rand::rng().random::<u32>()));
    let target = dir.join(format!("{id}{FILE_SUFFIX}"));
    let write = || -> io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, &target)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        failure(target.display(), e)
    })
}

fn pending(dir: &Path) -> Result<Vec<PathBuf>, RoutingError> {
    let entries = match fs::read_dir(dir) {
        Ok(entries) => entries,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(failure(dir.display(), e)),
    };
    let mut files: Vec<PathBuf> = entries
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.is_file() && p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with(FILE_SUFFIX)))
        .collect();
    files.sort();
    Ok(files)
}

/// Reads the oldest inbox file (ids sort by time) and moves it to
/// `processed/`.
fn take_from_inbox(dir: &Path) -> Result<Option<Vec<u8>>, RoutingError> {
    let Some(path) = pending(dir)?.into_iter().next() else { return Ok(None) };
    let bytes = fs::read(&path).map_err(|e| failure(path.display(), e))?;
    let done = dir.join(PROCESSED_DIR);
    fs::create_dir_all(&done).map_err(|e| failure(done.display(), e))?;
    let name = path.file_name().expect("inbox entries have names");
    fs::rename(&path, done.join(name)).map_err(|e| failure(path.display(), e))?;
    Ok(Some(bytes))
}

fn send_frame(address: &str, bytes: &[u8]) -> Result<(), RoutingError> {
    if bytes.len() > MAX_FRAME {
        return Err(RoutingError::TransportFailure(format!("frame of {} bytes exceeds {MAX_FRAME}", bytes.len())));
    }
    let mut stream = TcpStream::connect(address).map_err(|e| failure(address, e))?;
    let len = u32::try_from(bytes.len()).expect("frame length checked above");
    stream.write_all(&len.to_be_bytes()).map_err(|e| failure(address, e))?;
    stream.write_all(bytes).map_err(|e| failure(address, e))?;
    stream.flush().map_err(|e| failure(address, e))
}

pub(crate) fn read_frame(stream: &mut impl Read) -> io::Result<Vec<u8>> {
    let mut len = [0u8; 4];
    stream.read_exact(&mut len)?;
    let len = u32::from_be_bytes(len) as usize;
    if len > MAX_FRAME {
        return Err(io::Error::new(io::ErrorKind::InvalidData, format!("frame of {len} bytes exceeds {MAX_FRAME}")));
    }
    let mut buf = vec![0u8; len];
    stream.read_exact(&mut buf)?;
    Ok(buf)
}

fn accept_frame(listener: &TcpListener) -> Result<Option<Vec<u8>>, RoutingError> {
    match listener.accept() {
        Ok((mut stream, peer)) => {
            stream.set_nonblocking(false).map_err(|e| failure(peer, e))?;
            stream.set_read_timeout(Some(Duration::from_secs(5))).map_err(|e| failure(peer, e))?;
            read_frame(&mut stream).map(Some).map_err(|e| failure(peer, e))
        }
        Err(e) if e.kind() == io::ErrorKind::WouldBlock => Ok(None),
        Err(e) => Err(failure("accept", e)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_roundtrip_and_cap() {
        let mut wire = 5u32.to_be_bytes().to_vec();
        wire.extend_from_slice(b"hello");
        assert_eq!(read_frame(&mut wire.as_slice()).unwrap(), b"hello");
        let huge = ((MAX_FRAME + 1) as u32).to_be_bytes();
        assert_eq!(read_frame(&mut huge.as_slice()).unwrap_err().kind(), io::ErrorKind::InvalidData);
        let short = [0, 0, 0, 9, b'x'];
        assert!(read_frame(&mut short.as_slice()).is_err());
    }

    #[test]
    fn inbox_ignores_temp_files_and_moves_processed() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(".x.tmp"), b"partial").unwrap();
        let id = Identifier::new("20040202164445").unwrap();
        write_inbox(dir.path(), &id, b"<message/>").unwrap();
        assert!(dir.path().join("20040202164445.itp.xml").exists());
        assert_eq!(take_from_inbox(dir.path()).unwrap().unwrap(), b"<message/>");
        assert!(dir.path().join(PROCESSED_DIR).join("20040202164445.itp.xml").exists());
        assert_eq!(take_from_inbox(dir.path()).unwrap(), None);
    }
}
