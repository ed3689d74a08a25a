//! Mesh file ingestion (ASCII STL and OFF) and PLY debug exports.
//!
//! All files are in meters, right-handed, z-up. Loaders weld exactly
//! coincident vertices so shared edges are represented once.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use crate::geometry::{Point3, TriMesh};
use crate::{Error, Result};

/// Loads a triangle mesh, dispatching on the file extension (`.stl` ASCII
/// only, `.off`).
pub fn load_mesh(path: &Path) -> Result<TriMesh> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default();
    let file_err = |message: String| Error::MeshFile {
        path: path.display().to_string(),
        message,
    };
    let bytes = std::fs::read(path).map_err(|e| file_err(e.to_string()))?;
    if bytes.contains(&0) {
        return Err(file_err("binary data; only ASCII STL and OFF are supported".into()));
    }
    let text = String::from_utf8(bytes).map_err(|e| file_err(e.to_string()))?;
    match ext.as_str() {
        "stl" => parse_ascii_stl(&text).map_err(|m| file_err(m)),
        "off" => parse_off(&text).map_err(|m| file_err(m)),
        other => Err(file_err(format!("unsupported mesh format `.{other}`"))),
    }
}

fn parse_ascii_stl(text: &str) -> std::result::Result<TriMesh, String> {
    if !text.trim_start().starts_with("solid") {
        return Err("not an ASCII STL (missing `solid` header)".into());
    }
    let mut welder = VertexWelder::default();
    let mut triangles = Vec::new();
    let mut pending: Vec<usize> = Vec::new();
    let mut tokens = text.split_whitespace().peekable();
    while let Some(tok) = tokens.next() {
        if tok != "vertex" {
            continue;
        }
        let mut coords = [0.0f64; 3];
        for c in &mut coords {
            let t = tokens.next().ok_or("truncated vertex line")?;
            *c = t.parse::<f64>().map_err(|_| format!("bad vertex coordinate `{t}`"))?;
        }
        pending.push(welder.intern(Point3::new(coords[0], coords[1], coords[2])));
        if pending.len() == 3 {
            triangles.push([pending[0], pending[1], pending[2]]);
            pending.clear();
        }
    }
    if !pending.is_empty() {
        return Err("facet with fewer than 3 vertices".into());
    }
    TriMesh::new(welder.vertices, triangles).map_err(|e| e.to_string())
}

fn parse_off(text: &str) -> std::result::Result<TriMesh, String> {
    let mut lines = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty());
    let header = lines.next().ok_or("empty file")?;
    if header != "OFF" {
        return Err(format!("expected OFF header, found `{header}`"));
    }
    let counts = lines.next().ok_or("missing element counts")?;
    let mut it = counts.split_whitespace();
    let nv: usize = it.next().ok_or("missing vertex count")?.parse().map_err(|_| "bad vertex count")?;
    let nf: usize = it.next().ok_or("missing face count")?.parse().map_err(|_| "bad face count")?;

    let mut welder = VertexWelder::default();
    let mut ids = Vec::with_capacity(nv);
    for i in 0..nv {
        let line = lines.next().ok_or_else(|| format!("missing vertex {i}"))?;
        let mut c = line.split_whitespace();
        let mut coords = [0.0f64; 3];
        for v in &mut coords {
            let t = c.next().ok_or_else(|| format!("vertex {i}: too few coordinates"))?;
            *v = t.parse::<f64>().map_err(|_| format!("vertex {i}: bad coordinate `{t}`"))?;
        }
        ids.push(welder.intern(Point3::new(coords[0], coords[1], coords[2])));
    }

    let mut triangles = Vec::with_capacity(nf);
    for f in 0..nf {
        let line = lines.next().ok_or_else(|| format!("missing face {f}"))?;
        let mut c = line.split_whitespace();
        let k: usize = c
            .next()
            .ok_or_else(|| format!("face {f}: missing vertex count"))?
            .parse()
            .map_err(|_| format!("face {f}: bad vertex count"))?;
        if k < 3 {
            return Err(format!("face {f}: only {k} vertices"));
        }
        let mut face = Vec::with_capacity(k);
        for _ in 0..k {
            let t = c.next().ok_or_else(|| format!("face {f}: truncated"))?;
            let idx: usize = t.parse().map_err(|_| format!("face {f}: bad index `{t}`"))?;
            if idx >= nv {
                return Err(format!("face {f}: vertex index {idx} out of range"));
            }
            face.push(ids[idx]);
        }
        for w in 1..k - 1 {
            triangles.push([face[0], face[w], face[w + 1]]);
        }
    }
    TriMesh::new(welder.vertices, triangles).map_err(|e| e.to_string())
}

#[derive(Default)]
struct VertexWelder {
    vertices: Vec<Point3>,
    seen: HashMap<[u64; 3], usize>,
}

impl VertexWelder {
    fn intern(&mut self, p: Point3) -> usize {
        let key = [p.x.to_bits(), p.y.to_bits(), p.z.to_bits()];
        *self.seen.entry(key).or_insert_with(|| {
            self.vertices.push(p);
            self.vertices.len() - 1
        })
    }
}

/// Writes a mesh as OFF, the inverse of the OFF loader.
pub fn write_off(path: &Path, mesh: &TriMesh) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "OFF")?;
    writeln!(out, "{} {} 0", mesh.vertices().len(), mesh.triangles().len())?;
    for v in mesh.vertices() {
        writeln!(out, "{} {} {}", v.x, v.y, v.z)?;
    }
    for t in mesh.triangles() {
        writeln!(out, "3 {} {} {}", t[0], t[1], t[2])?;
    }
    Ok(())
}

/// Writes an ASCII PLY point cloud, optionally with one RGB color per point.
pub fn write_ply_points(path: &Path, points: &[Point3], colors: Option<&[[u8; 3]]>) -> Result<()> {
    if let Some(c) = colors {
        if c.len() != points.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} colors for {} points",
                c.len(),
                points.len()
            )));
        }
    }
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "ply")?;
    writeln!(out, "format ascii 1.0")?;
    writeln!(out, "element vertex {}", points.len())?;
    writeln!(out, "property float x")?;
    writeln!(out, "property float y")?;
    writeln!(out, "property float z")?;
    if colors.is_some() {
        writeln!(out, "property uchar red")?;
        writeln!(out, "property uchar green")?;
        writeln!(out, "property uchar blue")?;
    }
    writeln!(out, "end_header")?;
    for (i, p) in points.iter().enumerate() {
        match colors {
            Some(c) => writeln!(out, "{} {} {} {} {} {}", p.x, p.y, p.z, c[i][0], c[i][1], c[i][2])?,
            None => writeln!(out, "{} {} {}", p.x, p.y, p.z)?,
        }
    }
    Ok(())
}

/// Writes an ASCII PLY wireframe: vertices plus index pairs as edges.
pub fn write_ply_edges(path: &Path, vertices: &[Point3], edges: &[[usize; 2]]) -> Result<()> {
    for (i, e) in edges.iter().enumerate() {
        if e[0] >= vertices.len() || e[1] >= vertices.len() {
            return Err(Error::DimensionMismatch(format!(
                "edge {i} references vertex beyond {}",
                vertices.len()
            )));
        }
    }
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "ply")?;
    writeln!(out, "format ascii 1.0")?;
    writeln!(out, "element vertex {}", vertices.len())?;
    writeln!(out, "property float x")?;
    writeln!(out, "property float y")?;
    writeln!(out, "property float z")?;
    writeln!(out, "element edge {}", edges.len())?;
    writeln!(out, "property int vertex1")?;
    writeln!(out, "property int vertex2")?;
    writeln!(out, "end_header")?;
    for p in vertices {
        writeln!(out, "{} {} {}", p.x, p.y, p.z)?;
    }
    for e in edges {
        writeln!(out, "{} {}", e[0], e[1])?;
    }
    Ok(())
}
