//! Plain-text mesh format.
//!
//! ```text
//! # comment
//! nodes <n> triangles <m>
//! x y          (n lines)
//! i j k tag    (m lines, 0-based node indices, tag 0/1/2)
//! ```

use std::fmt::Write as _;
use std::path::Path;

use super::{ElementTag, MeshModel};
use crate::error::{Error, Result};

pub fn parse_mesh(text: &str, thickness: f64) -> Result<MeshModel> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());

    let (line, header) = lines.next().ok_or(Error::MeshFormat {
        line: 1,
        message: "missing header".into(),
    })?;
    let h: Vec<&str> = header.split_whitespace().collect();
    let bad_header = || Error::MeshFormat {
        line,
        message: "expected `nodes <n> triangles <m>`".into(),
    };
    if h.len() != 4 || h[0] != "nodes" || h[2] != "triangles" {
        return Err(bad_header());
    }
    let n: usize = h[1].parse().map_err(|_| bad_header())?;
    let m: usize = h[3].parse().map_err(|_| bad_header())?;

    let mut nodes = Vec::with_capacity(n);
    for _ in 0..n {
        let (line, l) = lines.next().ok_or(Error::MeshFormat {
            line: line + 1,
            message: format!("expected {n} node lines"),
        })?;
        let v: Vec<f64> = l
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::MeshFormat {
                line,
                message: format!("bad coordinate: {e}"),
            })?;
        if v.len() != 2 || v.iter().any(|x| !x.is_finite()) {
            return Err(Error::MeshFormat {
                line,
                message: "expected two finite coordinates".into(),
            });
        }
        nodes.push([v[0], v[1]]);
    }

    let mut triangles = Vec::with_capacity(m);
    let mut tags = Vec::with_capacity(m);
    for _ in 0..m {
        let (line, l) = lines.next().ok_or(Error::MeshFormat {
            line: line + 1,
            message: format!("expected {m} triangle lines"),
        })?;
        let v: Vec<usize> = l
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::MeshFormat {
                line,
                message: format!("bad index: {e}"),
            })?;
        if v.len() != 4 {
            return Err(Error::MeshFormat {
                line,
                message: "expected `i j k tag`".into(),
            });
        }
        let tag = u8::try_from(v[3])
            .ok()
            .and_then(ElementTag::from_code)
            .ok_or_else(|| Error::MeshFormat {
                line,
                message: format!("unknown tag {}", v[3]),
            })?;
        triangles.push([v[0], v[1], v[2]]);
        tags.push(tag);
    }
    if let Some((line, _)) = lines.next() {
        return Err(Error::MeshFormat {
            line,
            message: "trailing data after last triangle".into(),
        });
    }
    MeshModel::new(nodes, triangles, tags, thickness)
}

pub fn format_mesh(mesh: &MeshModel) -> String {
    let mut s = String::new();
    writeln!(s, "nodes {} triangles {}", mesh.num_nodes(), mesh.num_elements()).unwrap();
    for p in mesh.nodes() {
        // {:?} prints the shortest representation that round-trips exactly
        writeln!(s, "{:?} {:?}", p[0], p[1]).unwrap();
    }
    for (t, tag) in mesh.triangles().iter().zip(mesh.tags()) {
        writeln!(s, "{} {} {} {}", t[0], t[1], t[2], tag.code()).unwrap();
    }
    s
}

pub fn read_mesh(path: &Path, thickness: f64) -> Result<MeshModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_mesh(&text, thickness)
}

pub fn write_mesh(path: &Path, mesh: &MeshModel) -> Result<()> {
    std::fs::write(path, format_mesh(mesh)).map_err(|e| Error::io(path, e))
}
