//! Line-oriented graph format.
//!
//! ```text
//! n c
//! <id>            # optional node declaration, fixes index order
//! <u> <v> <w>     # edge between identities u and v with base weight w
//! ```
//!
//! Blank lines and `#` comments are ignored. Nodes referenced by edges but
//! not declared are appended in order of first appearance.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use super::{Graph, NodeId, Scale};
use crate::error::{Error, Result};

pub fn write_graph<W: Write>(g: &Graph, mut out: W) -> Result<()> {
    let s = g.scale();
    writeln!(out, "{} {}", s.n, s.c)?;
    for id in g.ids() {
        writeln!(out, "{id}")?;
    }
    for e in g.edges() {
        writeln!(out, "{} {} {}", g.id(e.u), g.id(e.v), e.weight.base)?;
    }
    Ok(())
}

pub fn read_graph<R: BufRead>(input: R) -> Result<Graph> {
    let mut header: Option<Scale> = None;
    let mut ids = Vec::new();
    let mut index: HashMap<u64, usize> = HashMap::new();
    let mut edges = Vec::new();
    let mut intern = |id: u64, ids: &mut Vec<NodeId>| -> usize {
        *index.entry(id).or_insert_with(|| {
            ids.push(NodeId(id));
            ids.len() - 1
        })
    };
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let nums = line
            .split_whitespace()
            .map(|t| t.parse::<u64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse { line: lineno + 1, msg: e.to_string() })?;
        match (header.is_some(), nums.as_slice()) {
            (false, &[n, c]) => header = Some(Scale::new(n as usize, c as u32)),
            (false, _) => {
                return Err(Error::Parse { line: lineno + 1, msg: "expected header \"n c\"".into() })
            }
            (true, &[id]) => {
                intern(id, &mut ids);
            }
            (true, &[u, v, w]) => {
                let a = intern(u, &mut ids);
                let b = intern(v, &mut ids);
                edges.push((a, b, w));
            }
            (true, _) => {
                return Err(Error::Parse { line: lineno + 1, msg: "expected \"id\" or \"u v w\"".into() })
            }
        }
    }
    let scale = header.ok_or(Error::Parse { line: 0, msg: "empty input".into() })?;
    if ids.len() != scale.n {
        return Err(Error::Config(format!("header says n = {} but {} nodes found", scale.n, ids.len())));
    }
    Graph::new(scale, ids, &edges)
}
