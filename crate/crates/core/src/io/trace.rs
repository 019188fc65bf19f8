//! Episode trace files: JSON-lines, one event per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::env::TraceEvent;
use crate::Result;

pub fn append_trace(w: &mut impl Write, events: &[TraceEvent]) -> Result<()> {
    for event in events {
        serde_json::to_writer(&mut *w, event)?;
        writeln!(w)?;
    }
    Ok(())
}

pub fn write_trace(path: &Path, events: &[TraceEvent]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    append_trace(&mut w, events)?;
    w.flush()?;
    Ok(())
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceEvent>> {
    let r = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Cell, Scenario, TraceEvent};

    #[test]
    fn trace_round_trips() {
        let events = vec![
            TraceEvent::Episode {
                episode: 1,
                scenario: Scenario::Reachable,
                h: 4,
                w: 4,
                obstacles: "0000000000000000".into(),
                target: Some(Cell::new(2, 2)),
                strength: Some(1e9),
                agents: vec![Cell::new(0, 0)],
            },
            TraceEvent::Step {
                t: 1,
                actions: vec![7],
                positions: vec![Cell::new(1, 1)],
                readings: vec![42],
                reward: -2.0,
                done: false,
                outcome: None,
            },
        ];
        let dir = std::env::temp_dir().join("radsearch-trace-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("trace.jsonl");
        write_trace(&path, &events).unwrap();
        let loaded = read_trace(&path).unwrap();
        assert_eq!(loaded.len(), 2);
        assert_eq!(serde_json::to_string(&loaded).unwrap(), serde_json::to_string(&events).unwrap());
    }
}
