//! Edge-list files: one `u<TAB>v` pair per line, `#` comments and blank
//! lines ignored.

use std::fmt::Write as _;
use std::path::Path;

use iterflow::algorithms::cc::UndirectedGraph;

use crate::{Edges, HarnessError, Result};

pub fn parse_edges(text: &str) -> Result<Edges> {
    let mut edges = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |message: String| HarnessError::Parse { line: i + 1, message };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(parse_err(format!("expected two vertex ids, found {:?}", raw)));
        }
        let mut ids = [0i64; 2];
        for (slot, f) in ids.iter_mut().zip(&fields) {
            *slot = f.parse().map_err(|_| parse_err(format!("`{f}` is not an integer")))?;
            if *slot < 0 {
                return Err(parse_err(format!("negative vertex id {slot}")));
            }
        }
        edges.push((ids[0], ids[1]));
    }
    if edges.is_empty() {
        return Err(HarnessError::EmptyGraph);
    }
    Ok(edges)
}

pub fn read_edges(path: &Path) -> Result<Edges> {
    parse_edges(&std::fs::read_to_string(path)?)
}

/// Vertices and symmetric neighbor pairs of the file's graph.
pub fn load_graph(path: &Path) -> Result<UndirectedGraph> {
    Ok(UndirectedGraph::from_edges(&read_edges(path)?))
}

pub fn format_edges(edges: &[(i64, i64)]) -> String {
    let mut out = String::new();
    for (u, v) in edges {
        let _ = writeln!(out, "{u}\t{v}");
    }
    out
}

pub fn write_edges(path: &Path, edges: &[(i64, i64)]) -> Result<()> {
    Ok(std::fs::write(path, format_edges(edges))?)
}
