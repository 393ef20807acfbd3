//! Line-delimited table files.
//!
//! Each file starts with a header line `#muats-table <name> v1`, followed by
//! one JSON record per line. Missing files load as empty tables.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{
    ActivePlayerRow, BufferedMessage, GameHistoryRow, Player, PlayerLevelStat, Store, TableError,
    Tables,
};

pub const PLAYERS_FILE: &str = "players.tbl";
pub const PLAYER_LEVEL_FILE: &str = "player_level.tbl";
pub const HISTORY_FILE: &str = "game_history.tbl";
pub const ACTIVE_FILE: &str = "active.tbl";
pub const OUTBOX_FILE: &str = "outbox.tbl";

const VERSION: &str = "v1";

fn header(file: &str) -> String {
    format!("#muats-table {} {VERSION}", file.trim_end_matches(".tbl"))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TableError + '_ {
    move |source| TableError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn read_records<T: DeserializeOwned>(dir: &Path, file: &str) -> Result<Vec<T>, TableError> {
    let path = dir.join(file);
    let f = match File::open(&path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(&path)(e)),
    };
    let corrupt = |line: usize, reason: String| TableError::Corrupt {
        file: file.to_string(),
        line,
        reason,
    };
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(f).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(io_err(&path))?;
        if idx == 0 {
            if line.trim_end() != header(file) {
                return Err(corrupt(line_no, format!("bad header `{line}`")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| corrupt(line_no, e.to_string()))?);
    }
    Ok(out)
}

/// Write a whole table to `file` via a temporary file and rename.
fn write_records<'a, T: Serialize + 'a>(
    dir: &Path,
    file: &str,
    rows: impl IntoIterator<Item = &'a T>,
) -> Result<(), TableError> {
    let path = dir.join(file);
    let tmp = dir.join(format!("{file}.tmp"));
    let mut w = BufWriter::new(File::create(&tmp).map_err(io_err(&tmp))?);
    let write = || -> std::io::Result<()> {
        writeln!(w, "{}", header(file))?;
        for row in rows {
            serde_json::to_writer(&mut w, row)?;
            w.write_all(b"\n")?;
        }
        w.flush()
    };
    write().map_err(io_err(&tmp))?;
    drop(w);
    fs::rename(&tmp, &path).map_err(io_err(&path))
}

pub(super) fn write_tables(tables: &Tables, dir: &Path) -> Result<(), TableError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_records(dir, PLAYERS_FILE, tables.players.values())?;
    write_records(dir, PLAYER_LEVEL_FILE, tables.player_levels.values())?;
    write_records(dir, ACTIVE_FILE, tables.active.values())?;
    write_records(dir, OUTBOX_FILE, tables.outbox.iter())?;
    Ok(())
}

pub(super) fn rewrite_history(dir: &Path, rows: &[GameHistoryRow]) -> Result<(), TableError> {
    write_records(dir, HISTORY_FILE, rows)
}

/// Append `rows` to the history file, writing the header if the file is new.
pub(super) fn append_history(dir: &Path, rows: &[GameHistoryRow]) -> Result<(), TableError> {
    let path = dir.join(HISTORY_FILE);
    let fresh = !path.exists();
    if rows.is_empty() && !fresh {
        return Ok(());
    }
    let f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&path)
        .map_err(io_err(&path))?;
    let mut w = BufWriter::new(f);
    let mut write = || -> std::io::Result<()> {
        if fresh {
            writeln!(w, "{}", header(HISTORY_FILE))?;
        }
        for row in rows {
            serde_json::to_writer(&mut w, row)?;
            w.write_all(b"\n")?;
        }
        w.flush()
    };
    write().map_err(io_err(&path))
}

pub(super) fn load_into(store: &mut Store, dir: &Path) -> Result<(), TableError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let players: Vec<Player> = read_records(dir, PLAYERS_FILE)?;
    let levels: Vec<PlayerLevelStat> = read_records(dir, PLAYER_LEVEL_FILE)?;
    let history: Vec<GameHistoryRow> = read_records(dir, HISTORY_FILE)?;
    let active: Vec<ActivePlayerRow> = read_records(dir, ACTIVE_FILE)?;
    let outbox: Vec<BufferedMessage> = read_records(dir, OUTBOX_FILE)?;

    let t = &mut store.tables;
    t.players = players
        .into_iter()
        .map(|p| ((p.phone_no.clone(), p.player_id.clone()), p))
        .collect();
    t.player_levels = levels.into_iter().map(|s| (s.key(), s)).collect();
    t.active = active
        .into_iter()
        .map(|a| (a.phone_no.clone(), a))
        .collect();
    t.outbox = outbox.into_iter().collect();
    store.history_persisted = history.len();
    t.history = history;
    Ok(())
}
