//! XYZ and ASCII PLY readers/writers.
//!
//! Coordinates are written with 17 significant digits so a write/read round
//! trip is bit-exact.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::{Point, PointCloud};
use crate::error::{Error, Result};

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), line, message: message.into() }
}

fn parse_f64(path: &Path, line: usize, tok: &str) -> Result<f64> {
    let v: f64 = tok
        .parse()
        .map_err(|_| parse_err(path, line, format!("'{tok}' is not a number")))?;
    if !v.is_finite() {
        return Err(parse_err(path, line, format!("non-finite value '{tok}'")));
    }
    Ok(v)
}

pub fn read_xyz(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let mut points: Vec<Point> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = trimmed.split_whitespace().collect();
        if toks.len() != 3 {
            return Err(parse_err(path, line, format!("expected 3 coordinates, found {}", toks.len())));
        }
        points.push([
            parse_f64(path, line, toks[0])?,
            parse_f64(path, line, toks[1])?,
            parse_f64(path, line, toks[2])?,
        ]);
    }
    if points.is_empty() {
        return Err(parse_err(path, text.lines().count(), "file contains no points"));
    }
    PointCloud::new(points)
}

pub fn write_xyz(path: impl AsRef<Path>, cloud: &PointCloud) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for p in cloud.points() {
        writeln!(w, "{:.16e} {:.16e} {:.16e}", p[0], p[1], p[2])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug)]
struct PlyHeader {
    vertex_count: usize,
    properties: Vec<String>,
    body_start: usize,
}

fn parse_ply_header(path: &Path, lines: &[&str]) -> Result<PlyHeader> {
    if lines.first().map(|l| l.trim()) != Some("ply") {
        return Err(parse_err(path, 1, "missing 'ply' magic line"));
    }
    let mut vertex_count = None;
    let mut properties = Vec::new();
    let mut in_vertex = false;
    let mut seen_other_before_vertex = false;
    for (idx, raw) in lines.iter().enumerate().skip(1) {
        let line = idx + 1;
        let toks: Vec<&str> = raw.split_whitespace().collect();
        match toks.as_slice() {
            ["format", "ascii", "1.0"] => {}
            ["format", other, ..] => {
                return Err(parse_err(path, line, format!("unsupported PLY format '{other}'")))
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", "vertex", n] => {
                let n = n
                    .parse()
                    .map_err(|_| parse_err(path, line, format!("bad vertex count '{n}'")))?;
                vertex_count = Some(n);
                in_vertex = true;
            }
            ["element", ..] => {
                if vertex_count.is_none() {
                    seen_other_before_vertex = true;
                }
                in_vertex = false;
            }
            ["property", "list", ..] if in_vertex => {
                return Err(parse_err(path, line, "list properties on vertices are not supported"))
            }
            ["property", _ty, name] => {
                if in_vertex {
                    properties.push((*name).to_string());
                }
            }
            ["property", ..] => {}
            ["end_header"] => {
                let vertex_count =
                    vertex_count.ok_or_else(|| parse_err(path, line, "no vertex element declared"))?;
                if seen_other_before_vertex {
                    return Err(parse_err(path, line, "vertex element must come first"));
                }
                for axis in ["x", "y", "z"] {
                    if !properties.iter().any(|p| p == axis) {
                        return Err(parse_err(path, line, format!("vertex property '{axis}' missing")));
                    }
                }
                return Ok(PlyHeader { vertex_count, properties, body_start: idx + 1 });
            }
            _ => return Err(parse_err(path, line, format!("unrecognized header line '{}'", raw.trim()))),
        }
    }
    Err(parse_err(path, lines.len(), "header has no end_header"))
}

/// Reads the vertex element of an ASCII PLY file. Faces and other trailing
/// elements are ignored.
pub fn read_ply_ascii(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let lines: Vec<&str> = text.lines().collect();
    let header = parse_ply_header(path, &lines)?;
    let col = |name: &str| header.properties.iter().position(|p| p == name);
    let (ix, iy, iz) = (col("x").unwrap(), col("y").unwrap(), col("z").unwrap());
    let is = col("scalar");

    let mut points = Vec::with_capacity(header.vertex_count);
    let mut scalar = Vec::new();
    for v in 0..header.vertex_count {
        let idx = header.body_start + v;
        let line = idx + 1;
        let raw = lines
            .get(idx)
            .ok_or_else(|| parse_err(path, line, format!("expected {} vertices, found {v}", header.vertex_count)))?;
        let toks: Vec<&str> = raw.split_whitespace().collect();
        if toks.len() != header.properties.len() {
            return Err(parse_err(
                path,
                line,
                format!("expected {} values, found {}", header.properties.len(), toks.len()),
            ));
        }
        points.push([parse_f64(path, line, toks[ix])?, parse_f64(path, line, toks[iy])?, parse_f64(path, line, toks[iz])?]);
        if let Some(is) = is {
            scalar.push(parse_f64(path, line, toks[is])?);
        }
    }
    let cloud = PointCloud::new(points)
        .map_err(|e| parse_err(path, header.body_start + 1, e.to_string()))?;
    if is.is_some() {
        cloud.with_scalar(scalar)
    } else {
        Ok(cloud)
    }
}

pub fn write_ply_ascii(path: impl AsRef<Path>, cloud: &PointCloud) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "ply")?;
    writeln!(w, "format ascii 1.0")?;
    writeln!(w, "element vertex {}", cloud.len())?;
    for axis in ["x", "y", "z"] {
        writeln!(w, "property double {axis}")?;
    }
    if cloud.scalar().is_some() {
        writeln!(w, "property double scalar")?;
    }
    writeln!(w, "end_header")?;
    for (i, p) in cloud.points().iter().enumerate() {
        write!(w, "{:.16e} {:.16e} {:.16e}", p[0], p[1], p[2])?;
        if let Some(s) = cloud.scalar() {
            write!(w, " {:.16e}", s[i])?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `.xyz` or `.ply` by extension.
pub fn read_cloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some("xyz") => read_xyz(path),
        Some("ply") => read_ply_ascii(path),
        _ => Err(Error::Usage(format!("unsupported point cloud file {}", PathBuf::from(path).display()))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xyz_bad_token_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.xyz");
        fs::write(&p, "# header\n0 0 0\n1 two 3\n").unwrap();
        match read_xyz(&p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn xyz_wrong_arity() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.xyz");
        fs::write(&p, "0 0\n").unwrap();
        assert!(matches!(read_xyz(&p), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn ply_with_scalar_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.ply");
        let c = PointCloud::new(vec![[0.1, 0.2, 0.3], [1.0 / 3.0, -2.5, 1e-300]])
            .unwrap()
            .with_scalar(vec![0.7, -1.0 / 7.0])
            .unwrap();
        write_ply_ascii(&p, &c).unwrap();
        let back = read_ply_ascii(&p).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn ply_truncated_body() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.ply");
        fs::write(
            &p,
            "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nend_header\n0 0 0\n",
        )
        .unwrap();
        assert!(matches!(read_ply_ascii(&p), Err(Error::Parse { line: 9, .. })));
    }

    #[test]
    fn ply_ignores_faces_and_extra_properties() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ply");
        fs::write(
            &p,
            "ply\nformat ascii 1.0\ncomment test\nelement vertex 3\nproperty float x\nproperty float y\n\
             property float z\nproperty uchar red\nelement face 1\nproperty list uchar int vertex_indices\n\
             end_header\n0 0 0 255\n1 0 0 0\n0 1 0 9\n3 0 1 2\n",
        )
        .unwrap();
        let c = read_ply_ascii(&p).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.points()[2], [0.0, 1.0, 0.0]);
        assert!(c.scalar().is_none());
    }

    #[test]
    fn ply_binary_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.ply");
        fs::write(&p, "ply\nformat binary_little_endian 1.0\nend_header\n").unwrap();
        assert!(matches!(read_ply_ascii(&p), Err(Error::Parse { line: 2, .. })));
    }
}
