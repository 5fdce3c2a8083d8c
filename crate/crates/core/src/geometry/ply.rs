//! ASCII PLY reading and writing.
//!
//! Vertices carry `x y z` plus any number of extra scalar properties; faces
//! are stored as `vertex_indices` lists. Only the ASCII encoding is handled.

use std::io::{BufRead, Write};

use super::TriMesh;
use crate::error::{Error, Result};

/// A mesh together with named per-vertex scalar properties.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlyMesh {
    pub mesh: TriMesh,
    pub vertex_props: Vec<(String, Vec<f64>)>,
}

impl PlyMesh {
    pub fn from_mesh(mesh: TriMesh) -> Self {
        Self {
            mesh,
            vertex_props: Vec::new(),
        }
    }

    pub fn prop(&self, name: &str) -> Option<&[f64]> {
        self.vertex_props
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }
}

pub fn write_ply<W: Write>(ply: &PlyMesh, mut out: W) -> Result<()> {
    let n = ply.mesh.vertices.len();
    for (name, vals) in &ply.vertex_props {
        if vals.len() != n {
            return Err(Error::Format(format!("property `{name}` has {} values for {n} vertices", vals.len())));
        }
    }
    writeln!(out, "ply")?;
    writeln!(out, "format ascii 1.0")?;
    writeln!(out, "element vertex {n}")?;
    for axis in ["x", "y", "z"] {
        writeln!(out, "property double {axis}")?;
    }
    for (name, _) in &ply.vertex_props {
        writeln!(out, "property double {name}")?;
    }
    writeln!(out, "element face {}", ply.mesh.faces.len())?;
    writeln!(out, "property list uchar int vertex_indices")?;
    writeln!(out, "end_header")?;
    for (i, v) in ply.mesh.vertices.iter().enumerate() {
        write!(out, "{} {} {}", v[0], v[1], v[2])?;
        for (_, vals) in &ply.vertex_props {
            write!(out, " {}", vals[i])?;
        }
        writeln!(out)?;
    }
    for f in &ply.mesh.faces {
        writeln!(out, "3 {} {} {}", f[0], f[1], f[2])?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

#[derive(Debug)]
enum Property {
    Scalar(String),
    List(String),
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

pub fn read_ply<R: BufRead>(input: R) -> Result<PlyMesh> {
    let mut lines = input.lines();
    let mut next_line = || -> Result<String> {
        lines
            .next()
            .ok_or_else(|| bad("unexpected end of PLY file"))?
            .map_err(Error::from)
    };
    if next_line()?.trim() != "ply" {
        return Err(bad("missing `ply` magic"));
    }
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let line = next_line()?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["format", "ascii", _] => {}
            ["format", other, ..] => return Err(bad(format!("unsupported PLY format `{other}`"))),
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count.parse().map_err(|_| bad(format!("bad element count `{count}`")))?,
                props: Vec::new(),
            }),
            ["property", "list", _, _, name] => elements
                .last_mut()
                .ok_or_else(|| bad("property before element"))?
                .props
                .push(Property::List(name.to_string())),
            ["property", _, name] => elements
                .last_mut()
                .ok_or_else(|| bad("property before element"))?
                .props
                .push(Property::Scalar(name.to_string())),
            ["end_header"] => break,
            _ => return Err(bad(format!("unrecognised header line `{line}`"))),
        }
    }

    let mut out = PlyMesh::default();
    for el in &elements {
        match el.name.as_str() {
            "vertex" => {
                let names: Vec<&str> = el
                    .props
                    .iter()
                    .map(|p| match p {
                        Property::Scalar(n) => Ok(n.as_str()),
                        Property::List(n) => Err(bad(format!("list property `{n}` on vertices"))),
                    })
                    .collect::<Result<_>>()?;
                let pos: Vec<usize> = ["x", "y", "z"]
                    .iter()
                    .map(|a| names.iter().position(|n| n == a).ok_or_else(|| bad(format!("vertex has no `{a}`"))))
                    .collect::<Result<_>>()?;
                let extra: Vec<usize> = (0..names.len()).filter(|i| !pos.contains(i)).collect();
                let mut props: Vec<Vec<f64>> = vec![Vec::with_capacity(el.count); extra.len()];
                for _ in 0..el.count {
                    let line = next_line()?;
                    let vals: Vec<f64> = line
                        .split_whitespace()
                        .map(|t| t.parse::<f64>().map_err(|_| bad(format!("bad number `{t}`"))))
                        .collect::<Result<_>>()?;
                    if vals.len() != names.len() {
                        return Err(bad(format!("vertex line has {} values, expected {}", vals.len(), names.len())));
                    }
                    out.mesh.vertices.push([vals[pos[0]], vals[pos[1]], vals[pos[2]]]);
                    for (dst, &i) in props.iter_mut().zip(&extra) {
                        dst.push(vals[i]);
                    }
                }
                out.vertex_props = extra.iter().map(|&i| names[i].to_string()).zip(props).collect();
            }
            "face" => {
                for _ in 0..el.count {
                    let line = next_line()?;
                    let idx: Vec<usize> = line
                        .split_whitespace()
                        .map(|t| t.parse::<usize>().map_err(|_| bad(format!("bad index `{t}`"))))
                        .collect::<Result<_>>()?;
                    match idx.as_slice() {
                        [3, a, b, c] => out.mesh.faces.push([*a, *b, *c]),
                        _ => return Err(bad(format!("only triangular faces are supported: `{line}`"))),
                    }
                }
            }
            _ => {
                for _ in 0..el.count {
                    next_line()?;
                }
            }
        }
    }
    out.mesh.validate()?;
    Ok(out)
}
