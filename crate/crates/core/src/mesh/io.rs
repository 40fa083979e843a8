use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{MeshError, TriMesh};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Obj,
    Off,
    Ply,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Result<Self, MeshError> {
        let ext = path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()).unwrap_or_default();
        match ext.as_str() {
            "obj" => Ok(MeshFormat::Obj),
            "off" => Ok(MeshFormat::Off),
            "ply" => Ok(MeshFormat::Ply),
            other => Err(MeshError::UnsupportedFormat(format!("extension '{other}'"))),
        }
    }
}

/// Loads a mesh, inferring the format from the file extension.
pub fn load_mesh<T: Scalar>(path: impl AsRef<Path>) -> Result<TriMesh<T>, MeshError> {
    let path = path.as_ref();
    load_mesh_as(path, MeshFormat::from_path(path)?)
}

pub fn load_mesh_as<T: Scalar>(path: impl AsRef<Path>, format: MeshFormat) -> Result<TriMesh<T>, MeshError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| MeshError::Io { path: path.display().to_string(), source })?;
    let text = match String::from_utf8(bytes) {
        Ok(t) => t,
        Err(_) if format == MeshFormat::Ply => return Err(MeshError::UnsupportedFormat("binary PLY".into())),
        Err(_) => return Err(MeshError::Parse { line: 0, msg: "file is not ASCII text".into() }),
    };
    let (vertices, faces) = match format {
        MeshFormat::Obj => parse_obj(&text)?,
        MeshFormat::Off => parse_off(&text)?,
        MeshFormat::Ply => parse_ply(&text)?,
    };
    let vertices = vertices.into_iter().map(|v| v.map(T::lit)).collect();
    TriMesh::new(vertices, faces)
}

/// Writes a mesh; the format follows the file extension.
pub fn save_mesh<T: Scalar>(mesh: &TriMesh<T>, path: impl AsRef<Path>) -> Result<(), MeshError> {
    let path = path.as_ref();
    let format = MeshFormat::from_path(path)?;
    let io_err = |source| MeshError::Io { path: path.display().to_string(), source };
    let file = fs::File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    write_mesh(&mut w, mesh, format).map_err(io_err)?;
    w.flush().map_err(io_err)
}

pub(crate) fn write_mesh<T: Scalar, W: Write>(w: &mut W, mesh: &TriMesh<T>, format: MeshFormat) -> std::io::Result<()> {
    // `{}` on f64 prints the shortest representation that round-trips.
    match format {
        MeshFormat::Obj => {
            for v in mesh.vertices() {
                writeln!(w, "v {} {} {}", v[0].as_f64(), v[1].as_f64(), v[2].as_f64())?;
            }
            for f in mesh.faces() {
                writeln!(w, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
            }
        }
        MeshFormat::Off => {
            writeln!(w, "OFF")?;
            writeln!(w, "{} {} 0", mesh.n_vertices(), mesh.n_faces())?;
            for v in mesh.vertices() {
                writeln!(w, "{} {} {}", v[0].as_f64(), v[1].as_f64(), v[2].as_f64())?;
            }
            for f in mesh.faces() {
                writeln!(w, "3 {} {} {}", f[0], f[1], f[2])?;
            }
        }
        MeshFormat::Ply => {
            writeln!(w, "ply")?;
            writeln!(w, "format ascii 1.0")?;
            writeln!(w, "element vertex {}", mesh.n_vertices())?;
            writeln!(w, "property double x")?;
            writeln!(w, "property double y")?;
            writeln!(w, "property double z")?;
            writeln!(w, "element face {}", mesh.n_faces())?;
            writeln!(w, "property list uchar int vertex_indices")?;
            writeln!(w, "end_header")?;
            for v in mesh.vertices() {
                writeln!(w, "{} {} {}", v[0].as_f64(), v[1].as_f64(), v[2].as_f64())?;
            }
            for f in mesh.faces() {
                writeln!(w, "3 {} {} {}", f[0], f[1], f[2])?;
            }
        }
    }
    Ok(())
}

type Parsed = (Vec<[f64; 3]>, Vec<[usize; 3]>);

fn perr(line: usize, msg: impl Into<String>) -> MeshError {
    MeshError::Parse { line, msg: msg.into() }
}

fn parse_f64(tok: Option<&str>, line: usize) -> Result<f64, MeshError> {
    let tok = tok.ok_or_else(|| perr(line, "missing coordinate"))?;
    tok.parse::<f64>().map_err(|_| perr(line, format!("bad number '{tok}'")))
}

fn parse_index(tok: &str, line: usize) -> Result<i64, MeshError> {
    tok.parse::<i64>().map_err(|_| perr(line, format!("bad index '{tok}'")))
}

/// Splits a polygon into a triangle fan rooted at its first corner.
fn fan(poly: &[usize], faces: &mut Vec<[usize; 3]>) {
    for k in 1..poly.len() - 1 {
        faces.push([poly[0], poly[k], poly[k + 1]]);
    }
}

fn parse_obj(text: &str) -> Result<Parsed, MeshError> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut poly = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let content = raw.split('#').next().unwrap_or("");
        let mut toks = content.split_whitespace();
        match toks.next() {
            Some("v") => {
                let x = parse_f64(toks.next(), line)?;
                let y = parse_f64(toks.next(), line)?;
                let z = parse_f64(toks.next(), line)?;
                vertices.push([x, y, z]);
            }
            Some("f") => {
                poly.clear();
                for tok in toks {
                    let head = tok.split('/').next().unwrap_or("");
                    let idx = parse_index(head, line)?;
                    // 1-based; negative values count back from the last vertex
                    let resolved = match idx {
                        0 => return Err(perr(line, "OBJ indices are 1-based")),
                        i if i > 0 => (i - 1) as usize,
                        i => {
                            let back = (-i) as usize;
                            if back > vertices.len() {
                                return Err(perr(line, format!("relative index {i} out of range")));
                            }
                            vertices.len() - back
                        }
                    };
                    poly.push(resolved);
                }
                if poly.len() < 3 {
                    return Err(perr(line, "face with fewer than three vertices"));
                }
                fan(&poly, &mut faces);
            }
            _ => {}
        }
    }
    Ok((vertices, faces))
}

/// Yields non-empty, comment-stripped lines with their 1-based numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let c = l.split('#').next().unwrap_or("").trim();
        (!c.is_empty()).then_some((i + 1, c))
    })
}

fn parse_off(text: &str) -> Result<Parsed, MeshError> {
    let mut lines = content_lines(text);
    let (hl, header) = lines.next().ok_or_else(|| perr(1, "empty file"))?;
    let rest = header.strip_prefix("OFF").ok_or_else(|| perr(hl, "missing OFF header"))?.trim();
    let counts_line =
        if rest.is_empty() { lines.next().ok_or_else(|| perr(hl, "missing counts"))? } else { (hl, rest) };
    let counts: Vec<usize> = counts_line
        .1
        .split_whitespace()
        .map(|t| t.parse::<usize>().map_err(|_| perr(counts_line.0, "bad count")))
        .collect::<Result<_, _>>()?;
    if counts.len() < 2 {
        return Err(perr(counts_line.0, "expected vertex and face counts"));
    }
    let (nv, nf) = (counts[0], counts[1]);
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (line, l) = lines.next().ok_or_else(|| perr(0, "unexpected end of vertex list"))?;
        let mut t = l.split_whitespace();
        vertices.push([parse_f64(t.next(), line)?, parse_f64(t.next(), line)?, parse_f64(t.next(), line)?]);
    }
    let mut faces = Vec::with_capacity(nf);
    let mut poly = Vec::new();
    for _ in 0..nf {
        let (line, l) = lines.next().ok_or_else(|| perr(0, "unexpected end of face list"))?;
        read_polygon(l, line, &mut poly)?;
        fan(&poly, &mut faces);
    }
    Ok((vertices, faces))
}

/// Parses `k i0 i1 ... ik-1` (0-based), ignoring trailing per-face data.
fn read_polygon(l: &str, line: usize, poly: &mut Vec<usize>) -> Result<(), MeshError> {
    poly.clear();
    let mut t = l.split_whitespace();
    let k: usize = t.next().and_then(|s| s.parse().ok()).ok_or_else(|| perr(line, "bad polygon size"))?;
    if k < 3 {
        return Err(perr(line, "face with fewer than three vertices"));
    }
    for _ in 0..k {
        let tok = t.next().ok_or_else(|| perr(line, "truncated polygon"))?;
        let i = parse_index(tok, line)?;
        if i < 0 {
            return Err(perr(line, "negative vertex index"));
        }
        poly.push(i as usize);
    }
    Ok(())
}

struct PlyElement {
    name: String,
    count: usize,
    props: Vec<String>,
}

fn parse_ply(text: &str) -> Result<Parsed, MeshError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, "ply")) => {}
        _ => return Err(perr(1, "missing 'ply' magic")),
    }
    let mut elements: Vec<PlyElement> = Vec::new();
    loop {
        let (line, l) = lines.next().ok_or_else(|| perr(0, "unterminated PLY header"))?;
        let mut t = l.split_whitespace();
        match t.next() {
            Some("format") => match t.next() {
                Some("ascii") => {}
                Some(other) => return Err(MeshError::UnsupportedFormat(format!("PLY {other}"))),
                None => return Err(perr(line, "missing PLY format")),
            },
            Some("element") => {
                let name = t.next().ok_or_else(|| perr(line, "element without name"))?;
                let count = t.next().and_then(|c| c.parse().ok()).ok_or_else(|| perr(line, "element without count"))?;
                elements.push(PlyElement { name: name.to_string(), count, props: Vec::new() });
            }
            Some("property") => {
                let el = elements.last_mut().ok_or_else(|| perr(line, "property before element"))?;
                let name = l.split_whitespace().last().unwrap_or("").to_string();
                el.props.push(name);
            }
            Some("end_header") => break,
            _ => {}
        }
    }

    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut poly = Vec::new();
    let mut body = lines.filter(|(_, l)| !l.is_empty());
    for el in &elements {
        match el.name.as_str() {
            "vertex" => {
                let pos = |name: &str| el.props.iter().position(|p| p == name);
                let (ix, iy, iz) = match (pos("x"), pos("y"), pos("z")) {
                    (Some(x), Some(y), Some(z)) => (x, y, z),
                    _ => return Err(perr(0, "PLY vertex element lacks x/y/z")),
                };
                for _ in 0..el.count {
                    let (line, l) = body.next().ok_or_else(|| perr(0, "truncated vertex list"))?;
                    let vals: Vec<&str> = l.split_whitespace().collect();
                    let get = |i: usize| parse_f64(vals.get(i).copied(), line);
                    vertices.push([get(ix)?, get(iy)?, get(iz)?]);
                }
            }
            "face" => {
                for _ in 0..el.count {
                    let (line, l) = body.next().ok_or_else(|| perr(0, "truncated face list"))?;
                    read_polygon(l, line, &mut poly)?;
                    fan(&poly, &mut faces);
                }
            }
            _ => {
                for _ in 0..el.count {
                    body.next();
                }
            }
        }
    }
    Ok((vertices, faces))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn obj_triangle() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "t.obj", "# tri\nv 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nf 1//1 2//1 3//1\n");
        let m: TriMesh = load_mesh(&p).unwrap();
        assert_eq!(m.n_vertices(), 3);
        assert_eq!(m.n_faces(), 1);
        assert!((m.total_area() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn obj_quad_is_fan_split() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "q.obj", "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n");
        let m: TriMesh = load_mesh(&p).unwrap();
        assert_eq!(m.faces(), &[[0, 1, 2], [0, 2, 3]]);
        assert!((m.total_area() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn obj_negative_indices() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "n.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3 -2 -1\n");
        let m: TriMesh = load_mesh(&p).unwrap();
        assert_eq!(m.faces(), &[[0, 1, 2]]);
    }

    #[test]
    fn off_and_ply_parse() {
        let dir = tempfile::tempdir().unwrap();
        let off = write(&dir, "a.off", "OFF\n# c\n4 1 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n");
        let m: TriMesh = load_mesh(&off).unwrap();
        assert_eq!(m.n_faces(), 2);

        let ply = write(
            &dir,
            "a.ply",
            "ply\nformat ascii 1.0\ncomment x\nelement vertex 3\nproperty float x\nproperty float y\n\
             property float z\nproperty uchar red\nelement face 1\nproperty list uchar int vertex_indices\n\
             end_header\n0 0 0 255\n1 0 0 255\n0 1 0 255\n3 0 1 2\n",
        );
        let m: TriMesh = load_mesh(&ply).unwrap();
        assert_eq!(m.n_faces(), 1);
    }

    #[test]
    fn errors() {
        let dir = tempfile::tempdir().unwrap();
        let bad = write(&dir, "b.obj", "v 0 0 zz\n");
        assert!(matches!(load_mesh::<f64>(&bad), Err(MeshError::Parse { line: 1, .. })));
        let empty = write(&dir, "e.obj", "v 0 0 0\n");
        assert!(matches!(load_mesh::<f64>(&empty), Err(MeshError::EmptyMesh)));
        let oob = write(&dir, "o.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 4\n");
        assert!(matches!(load_mesh::<f64>(&oob), Err(MeshError::IndexOutOfRange { .. })));
        let bin = write(&dir, "b.ply", "ply\nformat binary_little_endian 1.0\nend_header\n");
        assert!(matches!(load_mesh::<f64>(&bin), Err(MeshError::UnsupportedFormat(_))));
        assert!(matches!(load_mesh::<f64>(dir.path().join("missing.obj")), Err(MeshError::Io { .. })));
    }

    #[test]
    fn round_trip_all_formats() {
        let dir = tempfile::tempdir().unwrap();
        let m = TriMesh::<f64>::new(vec![[0.1, 0.2, 0.3], [1.0 / 3.0, 0.0, -2.5e-7], [0.0, 1.0, 1e5]], vec![[0, 1, 2]])
            .unwrap();
        for ext in ["obj", "off", "ply"] {
            let p = dir.path().join(format!("m.{ext}"));
            save_mesh(&m, &p).unwrap();
            let back: TriMesh = load_mesh(&p).unwrap();
            assert_eq!(back, m, "{ext}");
        }
    }

    #[test]
    fn save_to_unwritable_path_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let m = TriMesh::<f64>::new(vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], vec![[0, 1, 2]]).unwrap();
        let p = dir.path().join("no_such_dir").join("m.obj");
        assert!(matches!(save_mesh(&m, &p), Err(MeshError::Io { .. })));
    }
}
