//! Interaction file parsing and the prepared-dataset directory layout.
//!
//! A prepared directory holds:
//!
//! - `user_ids.txt`, `item_ids.txt`: one external ID per line, line `k` is dense index `k`
//! - `train.txt`, `valid.txt`, `test.txt`: `<user_index> <item_index>` per line
//! - `stats.txt`: one summary line (`#user`, `#item`, `#inter.`, density)

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use crate::dataset::{IdMap, InteractionDataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InteractionFormat {
    /// `<user> <item> [ignored...]`
    EdgeList,
    /// `<user> <item1> <item2> ...`
    AdjacencyList,
}

impl std::str::FromStr for InteractionFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "edge_list" | "edge-list" => Ok(InteractionFormat::EdgeList),
            "adjacency_list" | "adjacency-list" => Ok(InteractionFormat::AdjacencyList),
            other => Err(Error::Config(format!("unknown interaction format {other:?}"))),
        }
    }
}

/// Parse interactions from any reader. `delimiter` replaces whitespace
/// splitting when set (e.g. `::` for MovieLens `ratings.dat`).
pub fn parse_interactions<R: BufRead>(
    reader: R,
    path: &Path,
    format: InteractionFormat,
    delimiter: Option<&str>,
) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = match delimiter {
            Some(d) => trimmed.split(d).map(str::trim).collect(),
            None => trimmed.split_whitespace().collect(),
        };
        let parse_err = |message: &str| Error::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            message: message.to_owned(),
        };
        if fields.iter().any(|f| f.is_empty()) {
            return Err(parse_err("empty field"));
        }
        match format {
            InteractionFormat::EdgeList => {
                if fields.len() < 2 {
                    return Err(parse_err("expected `<user> <item>`"));
                }
                pairs.push((fields[0].to_owned(), fields[1].to_owned()));
            }
            InteractionFormat::AdjacencyList => {
                let user = fields[0];
                pairs.extend(fields[1..].iter().map(|i| (user.to_owned(), (*i).to_owned())));
            }
        }
    }
    if pairs.is_empty() {
        return Err(Error::EmptyDataset(path.to_path_buf()));
    }
    Ok(pairs)
}

/// Read all `(user, item)` pairs from `path` in file order, duplicates kept.
pub fn load_interactions(
    path: &Path,
    format: InteractionFormat,
    delimiter: Option<&str>,
) -> Result<Vec<(String, String)>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_interactions(BufReader::new(file), path, format, delimiter)
}

/// Write `contents` to `path` through a temporary sibling and a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let tmp = tmp_sibling(path);
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(contents).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn tmp_sibling(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".tmp");
    path.with_file_name(name)
}

fn pairs_text(pairs: &[(usize, usize)]) -> String {
    let mut s = String::with_capacity(pairs.len() * 12);
    for (u, i) in pairs {
        s.push_str(&format!("{u} {i}\n"));
    }
    s
}

fn ids_text(ids: &IdMap) -> String {
    let mut s = String::new();
    for id in ids.iter() {
        s.push_str(id);
        s.push('\n');
    }
    s
}

pub fn save_prepared(ds: &InteractionDataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_atomic(&dir.join("user_ids.txt"), ids_text(&ds.user_ids).as_bytes())?;
    write_atomic(&dir.join("item_ids.txt"), ids_text(&ds.item_ids).as_bytes())?;
    write_atomic(&dir.join("train.txt"), pairs_text(&ds.train_pairs).as_bytes())?;
    write_atomic(&dir.join("valid.txt"), pairs_text(&ds.valid_pairs).as_bytes())?;
    write_atomic(&dir.join("test.txt"), pairs_text(&ds.test_pairs).as_bytes())?;
    write_atomic(&dir.join("stats.txt"), format!("{}\n", ds.stats_line()).as_bytes())?;
    Ok(())
}

fn read_ids(path: &Path) -> Result<IdMap> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    IdMap::from_ordered(text.lines().map(str::to_owned).collect())
}

fn read_pairs(path: &Path) -> Result<Vec<(usize, usize)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut pairs = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let mut fields = line.split_whitespace();
        let parsed = match (fields.next(), fields.next(), fields.next()) {
            (Some(u), Some(i), None) => u.parse().ok().zip(i.parse().ok()),
            _ => None,
        };
        match parsed {
            Some(p) => pairs.push(p),
            None => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: lineno + 1,
                    message: "expected `<user_index> <item_index>`".into(),
                })
            }
        }
    }
    Ok(pairs)
}

pub fn load_prepared(dir: &Path) -> Result<InteractionDataset> {
    InteractionDataset::from_parts(
        read_ids(&dir.join("user_ids.txt"))?,
        read_ids(&dir.join("item_ids.txt"))?,
        read_pairs(&dir.join("train.txt"))?,
        read_pairs(&dir.join("valid.txt"))?,
        read_pairs(&dir.join("test.txt"))?,
    )
}
