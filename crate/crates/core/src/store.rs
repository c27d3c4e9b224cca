//! Document storage for sessions, journals and registries.
//!
//! Engine code talks to [`Store`], which layers typed access, checksums and
//! the append-only turn rule over any [`DocumentStore`]. [`FileStore`] keeps
//! one file per document:
//!
//! ```text
//! <data dir>/
//!   sessions/<id>.json
//!   journals/<id>.json
//!   profiles/<id>.json
//!   peers/<id>.json
//!   places/<id>.json
//!   people/<id>.json
//! ```
//!
//! Each file is a one-line header `panelwise-doc sha256=<hex>` followed by the
//! canonical JSON of the value. Loading recomputes the digest and reports a
//! mismatch (truncation, hand edits, disk damage) as [`StoreError::Corrupt`].

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use chrono::NaiveDate;
use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::model::{AdolescentProfile, JournalEntry, PeerProfile, PersonEntry, PlaceEntry, Session};

const HEADER_PREFIX: &str = "panelwise-doc sha256=";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Collection {
    Sessions,
    Journals,
    Profiles,
    Peers,
    Places,
    People,
}

impl Collection {
    pub const ALL: [Collection; 6] = [
        Collection::Sessions,
        Collection::Journals,
        Collection::Profiles,
        Collection::Peers,
        Collection::Places,
        Collection::People,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Collection::Sessions => "sessions",
            Collection::Journals => "journals",
            Collection::Profiles => "profiles",
            Collection::Peers => "peers",
            Collection::Places => "places",
            Collection::People => "people",
        }
    }
}

impl fmt::Display for Collection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StoreError {
    #[error("{collection} `{id}` not found")]
    NotFound { collection: Collection, id: String },
    #[error("{collection} `{id}` already exists")]
    Duplicate { collection: Collection, id: String },
    #[error("{collection} `{id}` is corrupt: {reason}")]
    Corrupt {
        collection: Collection,
        id: String,
        reason: String,
    },
    #[error("invalid id `{0}`")]
    InvalidId(String),
    #[error("session `{0}` would rewrite earlier turns")]
    HistoryRewrite(String),
    #[error("{0}")]
    Invalid(String),
    #[error("storage i/o: {0}")]
    Io(String),
}

/// Raw byte storage keyed by collection and id.
pub trait DocumentStore: Send + Sync {
    fn get(&self, collection: Collection, id: &str) -> Result<Option<Vec<u8>>, StoreError>;
    fn put(&self, collection: Collection, id: &str, bytes: &[u8]) -> Result<(), StoreError>;
    fn delete(&self, collection: Collection, id: &str) -> Result<bool, StoreError>;
    /// Ids in the collection, sorted.
    fn list(&self, collection: Collection) -> Result<Vec<String>, StoreError>;
}

/// Ids become file names, so they are limited to `[A-Za-z0-9_.-]` and may not
/// start with a dot.
pub fn check_id(id: &str) -> Result<(), StoreError> {
    let ok = !id.is_empty()
        && id.len() <= 128
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if ok {
        Ok(())
    } else {
        Err(StoreError::InvalidId(id.to_string()))
    }
}

#[derive(Debug, Default)]
pub struct MemoryStore {
    docs: Mutex<BTreeMap<(Collection, String), Vec<u8>>>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }
}

impl DocumentStore for MemoryStore {
    fn get(&self, collection: Collection, id: &str) -> Result<Option<Vec<u8>>, StoreError> {
        Ok(self.docs.lock().expect("store poisoned").get(&(collection, id.to_string())).cloned())
    }

    fn put(&self, collection: Collection, id: &str, bytes: &[u8]) -> Result<(), StoreError> {
        check_id(id)?;
        self.docs
            .lock()
            .expect("store poisoned")
            .insert((collection, id.to_string()), bytes.to_vec());
        Ok(())
    }

    fn delete(&self, collection: Collection, id: &str) -> Result<bool, StoreError> {
        Ok(self
            .docs
            .lock()
            .expect("store poisoned")
            .remove(&(collection, id.to_string()))
            .is_some())
    }

    fn list(&self, collection: Collection) -> Result<Vec<String>, StoreError> {
        Ok(self
            .docs
            .lock()
            .expect("store poisoned")
            .keys()
            .filter(|(c, _)| *c == collection)
            .map(|(_, id)| id.clone())
            .collect())
    }
}

/// One JSON document per file under a data directory.
#[derive(Debug, Clone)]
pub struct FileStore {
    root: PathBuf,
}

fn io(e: std::io::Error) -> StoreError {
    StoreError::Io(e.to_string())
}

impl FileStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        for c in Collection::ALL {
            std::fs::create_dir_all(root.join(c.as_str())).map_err(io)?;
        }
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_of(&self, collection: Collection, id: &str) -> PathBuf {
        self.root.join(collection.as_str()).join(format!("{id}.json"))
    }
}

impl DocumentStore for FileStore {
    fn get(&self, collection: Collection, id: &str) -> Result<Option<Vec<u8>>, StoreError> {
        check_id(id)?;
        match std::fs::read(self.path_of(collection, id)) {
            Ok(bytes) => Ok(Some(bytes)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(io(e)),
        }
    }

    fn put(&self, collection: Collection, id: &str, bytes: &[u8]) -> Result<(), StoreError> {
        check_id(id)?;
        let path = self.path_of(collection, id);
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, bytes).map_err(io)?;
        std::fs::rename(&tmp, &path).map_err(io)
    }

    fn delete(&self, collection: Collection, id: &str) -> Result<bool, StoreError> {
        check_id(id)?;
        match std::fs::remove_file(self.path_of(collection, id)) {
            Ok(()) => Ok(true),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(false),
            Err(e) => Err(io(e)),
        }
    }

    fn list(&self, collection: Collection) -> Result<Vec<String>, StoreError> {
        let mut ids = Vec::new();
        for entry in std::fs::read_dir(self.root.join(collection.as_str())).map_err(io)? {
            let name = entry.map_err(io)?.file_name();
            if let Some(id) = name.to_str().and_then(|n| n.strip_suffix(".json")) {
                ids.push(id.to_string());
            }
        }
        ids.sort();
        Ok(ids)
    }
}

/// Canonical JSON: struct fields in declaration order, maps sorted by key.
pub fn canonical_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("domain types serialize")
}

/// Header line plus canonical JSON.
pub fn encode<T: Serialize>(value: &T) -> Vec<u8> {
    let body = canonical_json(value);
    let digest = hex::encode(Sha256::digest(body.as_bytes()));
    format!("{HEADER_PREFIX}{digest}\n{body}").into_bytes()
}

pub fn decode<T: DeserializeOwned>(collection: Collection, id: &str, bytes: &[u8]) -> Result<T, StoreError> {
    let corrupt = |reason: String| StoreError::Corrupt {
        collection,
        id: id.to_string(),
        reason,
    };
    let text = std::str::from_utf8(bytes).map_err(|_| corrupt("not UTF-8".into()))?;
    let (header, body) = text.split_once('\n').ok_or_else(|| corrupt("missing header".into()))?;
    let expected = header
        .strip_prefix(HEADER_PREFIX)
        .ok_or_else(|| corrupt("bad header".into()))?;
    let actual = hex::encode(Sha256::digest(body.as_bytes()));
    if actual != expected {
        return Err(corrupt("checksum mismatch".into()));
    }
    serde_json::from_str(body).map_err(|e| corrupt(e.to_string()))
}

/// Typed, checksummed access to the domain documents.
#[derive(Clone)]
pub struct Store {
    docs: Arc<dyn DocumentStore>,
    session_writes: Arc<Mutex<()>>,
}

impl fmt::Debug for Store {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Store").finish_non_exhaustive()
    }
}

impl Store {
    pub fn new(docs: Arc<dyn DocumentStore>) -> Self {
        Self {
            docs,
            session_writes: Arc::new(Mutex::new(())),
        }
    }

    pub fn in_memory() -> Self {
        Self::new(Arc::new(MemoryStore::new()))
    }

    pub fn documents(&self) -> &Arc<dyn DocumentStore> {
        &self.docs
    }

    fn load<T: DeserializeOwned>(&self, c: Collection, id: &str) -> Result<T, StoreError> {
        let bytes = self.docs.get(c, id)?.ok_or_else(|| StoreError::NotFound {
            collection: c,
            id: id.to_string(),
        })?;
        decode(c, id, &bytes)
    }

    fn load_all<T: DeserializeOwned>(&self, c: Collection) -> Result<Vec<T>, StoreError> {
        self.docs.list(c)?.iter().map(|id| self.load(c, id)).collect()
    }

    fn put<T: Serialize>(&self, c: Collection, id: &str, value: &T) -> Result<(), StoreError> {
        self.docs.put(c, id, &encode(value))
    }

    /// Saves a session snapshot. Turns already stored must be an unchanged
    /// prefix of the new turn list.
    pub fn save_session(&self, session: &Session) -> Result<(), StoreError> {
        check_id(&session.id)?;
        let _guard = self.session_writes.lock().expect("store poisoned");
        match self.load::<Session>(Collection::Sessions, &session.id) {
            Ok(old) => {
                if !session.turns.starts_with(&old.turns) {
                    return Err(StoreError::HistoryRewrite(session.id.clone()));
                }
            }
            Err(StoreError::NotFound { .. }) => {}
            Err(e) => return Err(e),
        }
        self.put(Collection::Sessions, &session.id, session)
    }

    pub fn load_session(&self, id: &str) -> Result<Session, StoreError> {
        self.load(Collection::Sessions, id)
    }

    pub fn list_sessions(&self) -> Result<Vec<Session>, StoreError> {
        self.load_all(Collection::Sessions)
    }

    pub fn save_journal(&self, entry: &JournalEntry) -> Result<(), StoreError> {
        check_id(&entry.id)?;
        let problems = entry.violations();
        if !problems.is_empty() {
            return Err(StoreError::Invalid(problems.join("; ")));
        }
        if self.docs.get(Collection::Journals, &entry.id)?.is_some() {
            return Err(StoreError::Duplicate {
                collection: Collection::Journals,
                id: entry.id.clone(),
            });
        }
        self.put(Collection::Journals, &entry.id, entry)
    }

    pub fn load_journal(&self, id: &str) -> Result<JournalEntry, StoreError> {
        self.load(Collection::Journals, id)
    }

    /// Journals for `profile_id` dated within `[from, to]` (either bound
    /// optional), newest first; ties by id.
    pub fn list_journals(
        &self,
        profile_id: Option<&str>,
        from: Option<NaiveDate>,
        to: Option<NaiveDate>,
    ) -> Result<Vec<JournalEntry>, StoreError> {
        let mut out: Vec<JournalEntry> = self
            .load_all::<JournalEntry>(Collection::Journals)?
            .into_iter()
            .filter(|j| profile_id.is_none_or(|p| j.profile_id == p))
            .filter(|j| from.is_none_or(|f| j.date >= f))
            .filter(|j| to.is_none_or(|t| j.date <= t))
            .collect();
        out.sort_by(|a, b| b.finalized_at.cmp(&a.finalized_at).then_with(|| a.id.cmp(&b.id)));
        Ok(out)
    }

    pub fn put_profile(&self, p: &AdolescentProfile) -> Result<(), StoreError> {
        check_id(&p.id)?;
        let problems = p.violations();
        if !problems.is_empty() {
            return Err(StoreError::Invalid(problems.join("; ")));
        }
        self.put(Collection::Profiles, &p.id, p)
    }

    pub fn profile(&self, id: &str) -> Result<AdolescentProfile, StoreError> {
        self.load(Collection::Profiles, id)
    }

    pub fn profiles(&self) -> Result<Vec<AdolescentProfile>, StoreError> {
        self.load_all(Collection::Profiles)
    }

    pub fn put_peer(&self, p: &PeerProfile) -> Result<(), StoreError> {
        check_id(&p.id)?;
        let problems = p.violations();
        if !problems.is_empty() {
            return Err(StoreError::Invalid(problems.join("; ")));
        }
        self.put(Collection::Peers, &p.id, p)
    }

    pub fn peer(&self, id: &str) -> Result<PeerProfile, StoreError> {
        self.load(Collection::Peers, id)
    }

    pub fn peers(&self) -> Result<Vec<PeerProfile>, StoreError> {
        self.load_all(Collection::Peers)
    }

    pub fn put_place(&self, p: &PlaceEntry) -> Result<(), StoreError> {
        check_id(&p.id)?;
        if p.label.trim().is_empty() {
            return Err(StoreError::Invalid("place label empty".into()));
        }
        self.put(Collection::Places, &p.id, p)
    }

    pub fn place(&self, id: &str) -> Result<PlaceEntry, StoreError> {
        self.load(Collection::Places, id)
    }

    /// Places, optionally only those registered for `profile_id`.
    pub fn places(&self, profile_id: Option<&str>) -> Result<Vec<PlaceEntry>, StoreError> {
        Ok(self
            .load_all::<PlaceEntry>(Collection::Places)?
            .into_iter()
            .filter(|p| profile_id.is_none_or(|id| p.profile_id == id))
            .collect())
    }

    pub fn put_person(&self, p: &PersonEntry) -> Result<(), StoreError> {
        check_id(&p.id)?;
        if p.label.trim().is_empty() {
            return Err(StoreError::Invalid("person label empty".into()));
        }
        self.put(Collection::People, &p.id, p)
    }

    pub fn person(&self, id: &str) -> Result<PersonEntry, StoreError> {
        self.load(Collection::People, id)
    }

    pub fn people(&self, profile_id: Option<&str>) -> Result<Vec<PersonEntry>, StoreError> {
        Ok(self
            .load_all::<PersonEntry>(Collection::People)?
            .into_iter()
            .filter(|p| profile_id.is_none_or(|id| p.profile_id == id))
            .collect())
    }

    pub fn delete(&self, collection: Collection, id: &str) -> Result<(), StoreError> {
        if self.docs.delete(collection, id)? {
            Ok(())
        } else {
            Err(StoreError::NotFound {
                collection,
                id: id.to_string(),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use chrono::{TimeZone, Utc};

    use super::*;
    use crate::model::{Modality, Phase, Role, Turn};

    fn session(id: &str) -> Session {
        Session::new(id.into(), "p1".into(), "peer".into(), Utc.with_ymd_and_hms(2025, 3, 1, 9, 0, 0).unwrap())
    }

    fn turn(text: &str) -> Turn {
        Turn {
            role: Role::Adolescent,
            text: text.into(),
            phase: Phase::Preparation,
            modality: Modality::Typed,
            timestamp: Utc.with_ymd_and_hms(2025, 3, 1, 9, 0, 0).unwrap(),
            choice: None,
        }
    }

    fn stores() -> Vec<(Store, Option<tempfile::TempDir>)> {
        let dir = tempfile::tempdir().unwrap();
        vec![
            (Store::in_memory(), None),
            (Store::new(Arc::new(FileStore::open(dir.path()).unwrap())), Some(dir)),
        ]
    }

    #[test]
    fn session_round_trip_and_not_found() {
        for (store, _dir) in stores() {
            let s = session("s1");
            store.save_session(&s).unwrap();
            assert_eq!(store.load_session("s1").unwrap(), s);
            assert!(matches!(store.load_session("nope"), Err(StoreError::NotFound { .. })));
        }
    }

    #[test]
    fn history_is_append_only() {
        for (store, _dir) in stores() {
            let mut s = session("s1");
            s.turns.push(turn("first"));
            store.save_session(&s).unwrap();
            s.turns.push(turn("second"));
            store.save_session(&s).unwrap();
            s.turns[0].text = "edited".into();
            assert_eq!(store.save_session(&s), Err(StoreError::HistoryRewrite("s1".into())));
        }
    }

    #[test]
    fn truncated_file_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let files = FileStore::open(dir.path()).unwrap();
        let store = Store::new(Arc::new(files.clone()));
        store.save_session(&session("s1")).unwrap();
        let path = files.path_of(Collection::Sessions, "s1");
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 10]).unwrap();
        assert!(matches!(store.load_session("s1"), Err(StoreError::Corrupt { .. })));
    }

    #[test]
    fn ids_cannot_escape_the_data_dir() {
        let (store, _dir) = stores().pop().unwrap();
        assert!(matches!(store.save_session(&session("../x")), Err(StoreError::InvalidId(_))));
        assert!(matches!(store.load_session("../x"), Err(StoreError::InvalidId(_))));
    }

    #[test]
    fn registries() {
        for (store, _dir) in stores() {
            assert!(store.places(None).unwrap().is_empty());
            let place = PlaceEntry {
                id: "school".into(),
                profile_id: "p1".into(),
                label: "School".into(),
                category: "school".into(),
            };
            store.put_place(&place).unwrap();
            assert_eq!(store.places(Some("p1")).unwrap(), vec![place]);
            assert!(store.places(Some("p2")).unwrap().is_empty());
            store.delete(Collection::Places, "school").unwrap();
            assert!(store.delete(Collection::Places, "school").is_err());
        }
    }
}
