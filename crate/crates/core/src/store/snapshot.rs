//! Line-delimited JSON snapshot format.
//!
//! ```text
//! {"record":"header","format_version":1,...}
//! {"record":"profile",...}
//! {"record":"unit",...}        one per unit
//! {"record":"entity",...}      one per entity
//! {"record":"mention",...}     one per unit with entity mentions
//! {"record":"edge",...}        one per edge
//! {"record":"end","records":N}
//! ```
//!
//! Indexes are not stored; they are rebuilt on load and checked against the
//! checksums in the header.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::Bank;
use crate::error::{Error, Result};
use crate::model::{BankId, BankProfile, Edge, Entity, EntityId, MemoryUnit, UnitId};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexChecksums {
    pub lexical: String,
    pub vector: String,
}

impl IndexChecksums {
    pub fn of(bank: &Bank) -> Self {
        Self {
            lexical: digest(bank.lexical()),
            vector: digest(bank.vectors()),
        }
    }
}

fn digest<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("index serialization cannot fail");
    let hash = Sha256::digest(&bytes);
    hash.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Record {
    Header {
        format_version: u32,
        bank_id: BankId,
        embedding_dim: usize,
        next_unit_id: u64,
        next_entity_id: u64,
        checksums: IndexChecksums,
    },
    Profile(BankProfile),
    Unit(MemoryUnit),
    Entity(Entity),
    Mention {
        unit_id: UnitId,
        entity_ids: BTreeSet<EntityId>,
    },
    Edge(Edge),
    End {
        records: usize,
    },
}

#[derive(Deserialize)]
struct VersionProbe {
    record: String,
    format_version: Option<u32>,
}

/// Serializes the bank to the canonical snapshot text.
pub fn to_snapshot_string(bank: &Bank) -> String {
    let mut records = vec![
        Record::Header {
            format_version: FORMAT_VERSION,
            bank_id: bank.id.clone(),
            embedding_dim: bank.embedding_dim,
            next_unit_id: bank.next_unit,
            next_entity_id: bank.next_entity,
            checksums: IndexChecksums::of(bank),
        },
        Record::Profile(bank.profile.clone()),
    ];
    records.extend(bank.units.values().cloned().map(Record::Unit));
    records.extend(bank.entities.values().cloned().map(Record::Entity));
    records.extend(bank.mentions.iter().map(|(u, e)| Record::Mention {
        unit_id: *u,
        entity_ids: e.clone(),
    }));
    records.extend(bank.edges.values().cloned().map(Record::Edge));
    let n = records.len();
    records.push(Record::End { records: n });

    let mut out = String::new();
    for r in &records {
        out.push_str(&serde_json::to_string(r).expect("record serialization cannot fail"));
        out.push('\n');
    }
    out
}

/// Parses snapshot text. Either the whole bank loads or an error is returned.
pub fn from_snapshot_str(text: &str) -> Result<Bank> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, first) = lines
        .next()
        .ok_or_else(|| Error::Storage("empty snapshot".into()))?;
    let probe: VersionProbe =
        serde_json::from_str(first).map_err(|e| Error::Storage(format!("line 1: bad header: {e}")))?;
    if probe.record != "header" {
        return Err(Error::Storage("line 1: missing header record".into()));
    }
    match probe.format_version {
        Some(FORMAT_VERSION) => {}
        Some(found) => {
            return Err(Error::UnsupportedVersion {
                found,
                expected: FORMAT_VERSION,
            })
        }
        None => return Err(Error::Storage("line 1: header lacks format_version".into())),
    }
    let header: Record =
        serde_json::from_str(first).map_err(|e| Error::Storage(format!("line 1: bad header: {e}")))?;
    let Record::Header {
        bank_id,
        embedding_dim,
        next_unit_id,
        next_entity_id,
        checksums,
        ..
    } = header
    else {
        unreachable!("probe confirmed header record");
    };

    let mut bank = Bank::new(bank_id, BankProfile::new(""), embedding_dim);
    let mut seen = 1usize;
    let mut profile_seen = false;
    let mut ended = false;
    let mut mentions = Vec::new();
    let mut edges = Vec::new();
    for (i, line) in lines {
        if ended {
            return Err(Error::Storage(format!("line {}: data after end record", i + 1)));
        }
        let rec: Record =
            serde_json::from_str(line).map_err(|e| Error::Storage(format!("line {}: {e}", i + 1)))?;
        match rec {
            Record::Header { .. } => return Err(Error::Storage(format!("line {}: duplicate header", i + 1))),
            Record::Profile(p) => {
                bank.profile = p;
                profile_seen = true;
            }
            Record::Unit(u) => {
                if u.bank_id != bank.id {
                    return Err(Error::Storage(format!(
                        "line {}: unit belongs to bank {}",
                        i + 1,
                        u.bank_id
                    )));
                }
                bank.units.insert(u.id, u);
            }
            Record::Entity(e) => {
                bank.entities.insert(e.id, e);
            }
            Record::Mention { unit_id, entity_ids } => mentions.push((unit_id, entity_ids)),
            Record::Edge(e) => edges.push(e),
            Record::End { records } => {
                if records != seen {
                    return Err(Error::Storage(format!(
                        "record count mismatch: end says {records}, read {seen}"
                    )));
                }
                ended = true;
                continue;
            }
        }
        seen += 1;
    }
    if !ended {
        return Err(Error::Storage("truncated snapshot: no end record".into()));
    }
    if !profile_seen {
        return Err(Error::Storage("snapshot lacks a profile record".into()));
    }
    for (u, ents) in mentions {
        if !bank.units.contains_key(&u) {
            return Err(Error::Storage(format!("mention for unknown unit {u}")));
        }
        bank.set_mentions(u, ents);
    }
    for e in edges {
        bank.insert_edge(e)
            .map_err(|err| Error::Storage(format!("bad edge: {err}")))?;
    }
    bank.next_unit = next_unit_id;
    bank.next_entity = next_entity_id;
    bank.rebuild_indexes();
    if IndexChecksums::of(&bank) != checksums {
        return Err(Error::Storage("index checksum mismatch".into()));
    }
    let problems = bank.check_invariants();
    if !problems.is_empty() {
        return Err(Error::Storage(problems.join("; ")));
    }
    Ok(bank)
}

/// Writes atomically: temp file in the same directory, then rename.
pub fn save_snapshot(bank: &Bank, path: &Path) -> Result<()> {
    let text = to_snapshot_string(bank);
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        std::fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension(format!(
        "tmp-{}-{:?}",
        std::process::id(),
        std::thread::current().id()
    ));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(text.as_bytes())?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_snapshot(path: &Path) -> Result<Bank> {
    let text = std::fs::read_to_string(path)?;
    from_snapshot_str(&text)
}

impl Bank {
    pub fn to_snapshot_string(&self) -> String {
        to_snapshot_string(self)
    }

    pub fn from_snapshot_str(text: &str) -> Result<Bank> {
        from_snapshot_str(text)
    }
}
