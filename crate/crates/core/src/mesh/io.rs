//! Plain-text polygon mesh format.
//!
//! ```text
//! polymesh 2
//! vertices N
//! x y                      (N lines)
//! cells M
//! v0 v1 ... vk             (M lines, counter-clockwise loops)
//! faces K
//! v0 v1 left right|-1 tag  (K lines, tag = interior | dirichlet)
//! ```
//!
//! Coordinates use the shortest representation that parses back to the
//! same `f64`, so writing and re-reading is lossless.

use super::{FaceRecord, FaceTag, PolyMesh};
use crate::error::{Error, Result};
use crate::geometry::Point;
use std::fmt::Write as _;
use std::path::Path;

pub fn write_mesh(mesh: &PolyMesh) -> String {
    let mut s = String::new();
    s.push_str("polymesh 2\n");
    let _ = writeln!(s, "vertices {}", mesh.vertices().len());
    for p in mesh.vertices() {
        let _ = writeln!(s, "{:?} {:?}", p.x, p.y);
    }
    let _ = writeln!(s, "cells {}", mesh.n_cells());
    for c in mesh.cells() {
        let ids: Vec<String> = c.vertices.iter().map(usize::to_string).collect();
        let _ = writeln!(s, "{}", ids.join(" "));
    }
    let _ = writeln!(s, "faces {}", mesh.n_faces());
    for f in mesh.faces() {
        let right = f.right.map_or("-1".to_string(), |r| r.to_string());
        let _ = writeln!(
            s,
            "{} {} {} {} {}",
            f.vertices[0],
            f.vertices[1],
            f.left,
            right,
            f.tag.as_str()
        );
    }
    s
}

pub fn write_mesh_file(mesh: &PolyMesh, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, write_mesh(mesh))?;
    Ok(())
}

pub fn read_mesh_file(path: impl AsRef<Path>) -> Result<PolyMesh> {
    read_mesh(&std::fs::read_to_string(path)?)
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<&'a str> {
        loop {
            match self.inner.next() {
                Some((i, l)) => {
                    self.line = i + 1;
                    let l = l.trim();
                    if !l.is_empty() && !l.starts_with('#') {
                        return Ok(l);
                    }
                }
                None => return Err(self.err("unexpected end of file")),
            }
        }
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line,
            msg: msg.into(),
        }
    }

    fn section(&mut self, name: &str) -> Result<usize> {
        let l = self.next()?;
        let mut it = l.split_whitespace();
        match (it.next(), it.next().map(str::parse::<usize>), it.next()) {
            (Some(n), Some(Ok(k)), None) if n == name => Ok(k),
            _ => Err(self.err(format!("expected `{name} <count>`, found `{l}`"))),
        }
    }

    fn parse<T: std::str::FromStr>(&self, tok: &str) -> Result<T> {
        tok.parse()
            .map_err(|_| self.err(format!("cannot parse `{tok}`")))
    }
}

pub fn read_mesh(text: &str) -> Result<PolyMesh> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        line: 0,
    };
    let header = lines.next()?;
    if header.split_whitespace().collect::<Vec<_>>() != ["polymesh", "2"] {
        return Err(lines.err("expected header `polymesh 2`"));
    }

    let nv = lines.section("vertices")?;
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let l = lines.next()?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != 2 {
            return Err(lines.err("a vertex line needs exactly two coordinates"));
        }
        vertices.push(Point::new(lines.parse(toks[0])?, lines.parse(toks[1])?));
    }

    let nc = lines.section("cells")?;
    let mut loops = Vec::with_capacity(nc);
    for _ in 0..nc {
        let l = lines.next()?;
        let ids = l
            .split_whitespace()
            .map(|t| lines.parse::<usize>(t))
            .collect::<Result<Vec<_>>>()?;
        loops.push(ids);
    }

    let nf = lines.section("faces")?;
    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let l = lines.next()?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != 5 {
            return Err(lines.err("a face line needs `v0 v1 left right tag`"));
        }
        let right: i64 = lines.parse(toks[3])?;
        let tag = match toks[4] {
            "interior" => FaceTag::Interior,
            "dirichlet" => FaceTag::Dirichlet,
            t => return Err(lines.err(format!("unknown face tag `{t}`"))),
        };
        faces.push(FaceRecord {
            vertices: [lines.parse(toks[0])?, lines.parse(toks[1])?],
            left: lines.parse(toks[2])?,
            right: if right < 0 { None } else { Some(right as usize) },
            tag,
        });
    }
    PolyMesh::from_parts(vertices, loops, faces)
}
