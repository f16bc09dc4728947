//! File-backed store of (old, new, patch) version tuples.
//!
//! One directory, one file per (base, target) pair named
//! `<base>_<target>.patch`. Entries are immutable: re-storing the same pair
//! with different bytes fails. File layout: magic `CIDV`, the two image
//! digests (32 bytes each), then the serialized patch.

use std::fs;
use std::path::{Path, PathBuf};

use super::image::FirmwareImage;
use super::patch::Patch;
use super::Error;

const STORE_MAGIC: &[u8; 4] = b"CIDV";

pub struct VersionStore {
    dir: PathBuf,
}

/// One stored tuple, as read back from disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoredTuple {
    pub old_digest: [u8; 32],
    pub new_digest: [u8; 32],
    pub patch: Patch,
}

impl VersionStore {
    /// Open (creating if needed) a store rooted at `dir`.
    pub fn open(dir: impl AsRef<Path>) -> Result<VersionStore, Error> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        Ok(VersionStore { dir })
    }

    fn entry_path(&self, base: u32, target: u32) -> PathBuf {
        self.dir.join(format!("{base}_{target}.patch"))
    }

    /// Store the tuple for (old.version, new.version). Idempotent for
    /// byte-identical content; differing content is rejected.
    pub fn store_version(
        &self,
        old: &FirmwareImage,
        new: &FirmwareImage,
        patch: &Patch,
    ) -> Result<(), Error> {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(STORE_MAGIC);
        bytes.extend_from_slice(&old.digest());
        bytes.extend_from_slice(&new.digest());
        bytes.extend_from_slice(&patch.serialize());

        let path = self.entry_path(patch.base_version, patch.target_version);
        if path.exists() {
            let existing = fs::read(&path)?;
            if existing == bytes {
                return Ok(());
            }
            return Err(Error::DuplicateVersion {
                base: patch.base_version,
                target: patch.target_version,
            });
        }
        fs::write(&path, &bytes)?;
        Ok(())
    }

    pub fn lookup_version(&self, base: u32, target: u32) -> Result<Patch, Error> {
        Ok(self.lookup_tuple(base, target)?.patch)
    }

    pub fn lookup_tuple(&self, base: u32, target: u32) -> Result<StoredTuple, Error> {
        let path = self.entry_path(base, target);
        if !path.exists() {
            return Err(Error::NotFound { base, target });
        }
        let bytes = fs::read(&path)?;
        if bytes.len() < 4 + 64 || &bytes[..4] != STORE_MAGIC {
            return Err(Error::ParsePatch(format!(
                "corrupt store entry {}",
                path.display()
            )));
        }
        let old_digest: [u8; 32] = bytes[4..36].try_into().unwrap();
        let new_digest: [u8; 32] = bytes[36..68].try_into().unwrap();
        let patch = Patch::deserialize(&bytes[68..])?;
        Ok(StoredTuple {
            old_digest,
            new_digest,
            patch,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::super::image::{LayoutParams, Section, Symbol};
    use super::super::patch::{PatchOp, PatchRecord};
    use super::*;

    fn images() -> (FirmwareImage, FirmwareImage) {
        let layout = LayoutParams::new(0, 100, 200);
        let mut old = FirmwareImage::empty(layout, 1);
        old.insert(Section::Data, Symbol::init_global("a", &[1, 2], 100))
            .unwrap();
        let mut new = old.clone();
        new.version = 2;
        (old, new)
    }

    fn patch(records: Vec<PatchRecord>) -> Patch {
        Patch {
            base_version: 1,
            target_version: 2,
            records,
        }
    }

    #[test]
    fn store_then_lookup_is_bit_identical() {
        let tmp = tempfile::tempdir().unwrap();
        let store = VersionStore::open(tmp.path()).unwrap();
        let (old, new) = images();
        let p = patch(vec![PatchRecord {
            section: Section::Code,
            op: PatchOp::SetVersion { version: 2 },
        }]);
        store.store_version(&old, &new, &p).unwrap();
        let got = store.lookup_version(1, 2).unwrap();
        assert_eq!(got.serialize(), p.serialize());
        let tuple = store.lookup_tuple(1, 2).unwrap();
        assert_eq!(tuple.old_digest, old.digest());
        assert_eq!(tuple.new_digest, new.digest());
    }

    #[test]
    fn lookup_absent_is_not_found() {
        let tmp = tempfile::tempdir().unwrap();
        let store = VersionStore::open(tmp.path()).unwrap();
        assert!(matches!(
            store.lookup_version(3, 4),
            Err(Error::NotFound { base: 3, target: 4 })
        ));
    }

    #[test]
    fn conflicting_restore_is_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        let store = VersionStore::open(tmp.path()).unwrap();
        let (old, new) = images();
        let p1 = patch(vec![PatchRecord {
            section: Section::Code,
            op: PatchOp::SetVersion { version: 2 },
        }]);
        let p2 = patch(vec![
            PatchRecord {
                section: Section::Data,
                op: PatchOp::Remove { name: "a".into() },
            },
            PatchRecord {
                section: Section::Code,
                op: PatchOp::SetVersion { version: 2 },
            },
        ]);
        store.store_version(&old, &new, &p1).unwrap();
        // Same bytes again: fine.
        store.store_version(&old, &new, &p1).unwrap();
        assert!(matches!(
            store.store_version(&old, &new, &p2),
            Err(Error::DuplicateVersion { .. })
        ));
    }
}
