//! Line-delimited JSON event logs.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use crate::serp::ClickEvent;

#[derive(Debug, Error)]
pub enum EventLogError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

pub fn read_events(reader: impl BufRead) -> Result<Vec<ClickEvent>, EventLogError> {
    let mut events = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let event = serde_json::from_str(&line).map_err(|source| EventLogError::Parse {
            line: n + 1,
            source,
        })?;
        events.push(event);
    }
    Ok(events)
}

pub fn read_events_file(path: impl AsRef<Path>) -> Result<Vec<ClickEvent>, EventLogError> {
    read_events(BufReader::new(File::open(path)?))
}

pub fn write_events<'a>(
    mut writer: impl Write,
    events: impl IntoIterator<Item = &'a ClickEvent>,
) -> io::Result<()> {
    for e in events {
        serde_json::to_writer(&mut writer, e)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

pub fn write_events_file<'a>(
    path: impl AsRef<Path>,
    events: impl IntoIterator<Item = &'a ClickEvent>,
) -> io::Result<()> {
    write_events(BufWriter::new(File::create(path)?), events)
}
