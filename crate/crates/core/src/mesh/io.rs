//! OBJ and ASCII PLY reading and writing.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::Vector3;

use super::{MeshError, TriangleMesh};

fn parse_err(line: usize, message: impl Into<String>) -> MeshError {
    MeshError::Parse { line, message: message.into() }
}

/// Loads an `.obj` or `.ply` file, chosen by extension.
pub fn load_mesh(path: &Path) -> Result<TriangleMesh, MeshError> {
    let text = fs::read_to_string(path)?;
    match extension(path).as_deref() {
        Some("ply") => read_ply(&text),
        _ => read_obj(&text),
    }
}

/// Writes an `.obj` or `.ply` file, chosen by extension.
pub fn save_mesh(mesh: &TriangleMesh, path: &Path) -> Result<(), MeshError> {
    let text = match extension(path).as_deref() {
        Some("ply") => write_ply(mesh),
        _ => write_obj(mesh),
    };
    fs::write(path, text)?;
    Ok(())
}

fn extension(path: &Path) -> Option<String> {
    path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase())
}

fn parse_f64(token: &str, line: usize) -> Result<f64, MeshError> {
    let v: f64 = token.parse().map_err(|_| parse_err(line, format!("invalid number '{token}'")))?;
    if !v.is_finite() {
        return Err(parse_err(line, format!("non-finite number '{token}'")));
    }
    Ok(v)
}

pub fn read_obj(text: &str) -> Result<TriangleMesh, MeshError> {
    let mut positions = Vec::new();
    let mut colors: Vec<Vector3<f64>> = Vec::new();
    let mut faces = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("");
        let mut tokens = content.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let nums = tokens.map(|t| parse_f64(t, line)).collect::<Result<Vec<_>, _>>()?;
                match nums.len() {
                    3 | 6 => {}
                    n => return Err(parse_err(line, format!("vertex line has {n} numbers, expected 3 or 6"))),
                }
                if nums.len() == 6 {
                    if colors.len() != positions.len() {
                        return Err(parse_err(line, "vertex colors given for only some vertices"));
                    }
                    colors.push(Vector3::new(nums[3], nums[4], nums[5]));
                } else if !colors.is_empty() {
                    return Err(parse_err(line, "vertex colors given for only some vertices"));
                }
                positions.push(Vector3::new(nums[0], nums[1], nums[2]));
            }
            Some("f") => {
                let refs: Vec<&str> = tokens.collect();
                if refs.len() != 3 {
                    return Err(parse_err(line, format!("face has {} vertices; only triangles are supported", refs.len())));
                }
                let mut face = [0usize; 3];
                for (k, r) in refs.iter().enumerate() {
                    let idx = r.split('/').next().unwrap_or("");
                    let idx: i64 = idx.parse().map_err(|_| parse_err(line, format!("invalid face index '{r}'")))?;
                    face[k] = match idx {
                        0 => return Err(parse_err(line, "face index 0 is invalid (indices are 1-based)")),
                        i if i > 0 => (i - 1) as usize,
                        i => {
                            let back = (-i) as usize;
                            if back > positions.len() {
                                return Err(parse_err(line, format!("relative face index {i} before first vertex")));
                            }
                            positions.len() - back
                        }
                    };
                }
                faces.push(face);
            }
            _ => {}
        }
    }
    if !colors.is_empty() && colors.len() != positions.len() {
        return Err(parse_err(text.lines().count(), "vertex colors given for only some vertices"));
    }
    let colors = if colors.is_empty() { None } else { Some(colors) };
    TriangleMesh::with_colors(positions, faces, colors)
}

pub fn write_obj(mesh: &TriangleMesh) -> String {
    let mut out = String::new();
    for (i, p) in mesh.positions().iter().enumerate() {
        match mesh.colors() {
            Some(c) => {
                let c = c[i];
                let _ = writeln!(out, "v {} {} {} {} {} {}", p.x, p.y, p.z, c.x, c.y, c.z);
            }
            None => {
                let _ = writeln!(out, "v {} {} {}", p.x, p.y, p.z);
            }
        }
    }
    for f in mesh.faces() {
        let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    out
}

#[derive(Debug)]
struct PlyElement {
    name: String,
    count: usize,
    /// (name, is_list, scalar type)
    properties: Vec<(String, bool, String)>,
}

pub fn read_ply(text: &str) -> Result<TriangleMesh, MeshError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim() == "ply" => {}
        _ => return Err(parse_err(1, "missing 'ply' magic")),
    }
    let mut elements: Vec<PlyElement> = Vec::new();
    loop {
        let (i, raw) = lines.next().ok_or_else(|| parse_err(0, "unterminated header"))?;
        let line = i + 1;
        let tokens: Vec<&str> = raw.split_whitespace().collect();
        match tokens.first().copied() {
            Some("format") => {
                if tokens.get(1) != Some(&"ascii") {
                    return Err(parse_err(line, "only ASCII PLY is supported"));
                }
            }
            Some("element") => {
                if tokens.len() != 3 {
                    return Err(parse_err(line, "malformed element line"));
                }
                let count = tokens[2].parse().map_err(|_| parse_err(line, "invalid element count"))?;
                elements.push(PlyElement { name: tokens[1].to_string(), count, properties: Vec::new() });
            }
            Some("property") => {
                let el = elements.last_mut().ok_or_else(|| parse_err(line, "property before element"))?;
                if tokens.get(1) == Some(&"list") {
                    if tokens.len() != 5 {
                        return Err(parse_err(line, "malformed list property"));
                    }
                    el.properties.push((tokens[4].to_string(), true, tokens[3].to_string()));
                } else {
                    if tokens.len() != 3 {
                        return Err(parse_err(line, "malformed property"));
                    }
                    el.properties.push((tokens[2].to_string(), false, tokens[1].to_string()));
                }
            }
            Some("end_header") => break,
            _ => {}
        }
    }

    let mut positions = Vec::new();
    let mut colors = Vec::new();
    let mut faces = Vec::new();
    for el in &elements {
        let prop_index = |name: &str| el.properties.iter().position(|p| p.0 == name);
        for _ in 0..el.count {
            let (i, raw) = lines.next().ok_or_else(|| parse_err(0, format!("missing {} data", el.name)))?;
            let line = i + 1;
            let tokens: Vec<&str> = raw.split_whitespace().collect();
            match el.name.as_str() {
                "vertex" => {
                    if el.properties.iter().any(|p| p.1) {
                        return Err(parse_err(line, "list properties on vertices are not supported"));
                    }
                    if tokens.len() < el.properties.len() {
                        return Err(parse_err(line, "too few vertex values"));
                    }
                    let get = |name: &str| -> Result<Option<f64>, MeshError> {
                        prop_index(name).map(|k| parse_f64(tokens[k], line)).transpose()
                    };
                    let (x, y, z) = (get("x")?, get("y")?, get("z")?);
                    let (Some(x), Some(y), Some(z)) = (x, y, z) else {
                        return Err(parse_err(line, "vertex element lacks x, y or z"));
                    };
                    positions.push(Vector3::new(x, y, z));
                    if let (Some(r), Some(g), Some(b)) = (get("red")?, get("green")?, get("blue")?) {
                        let integral = el.properties[prop_index("red").expect("present")].2.contains("char");
                        let scale = if integral { 1.0 / 255.0 } else { 1.0 };
                        colors.push(Vector3::new(r, g, b) * scale);
                    }
                }
                "face" => {
                    let count: usize = tokens
                        .first()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| parse_err(line, "malformed face"))?;
                    if count != 3 || tokens.len() < 4 {
                        return Err(parse_err(line, "only triangular faces are supported"));
                    }
                    let mut f = [0usize; 3];
                    for k in 0..3 {
                        f[k] = tokens[1 + k].parse().map_err(|_| parse_err(line, "invalid face index"))?;
                    }
                    faces.push(f);
                }
                _ => {}
            }
        }
    }
    let colors = if colors.is_empty() { None } else { Some(colors) };
    TriangleMesh::with_colors(positions, faces, colors)
}

pub fn write_ply(mesh: &TriangleMesh) -> String {
    let mut out = String::from("ply\nformat ascii 1.0\n");
    let _ = writeln!(out, "element vertex {}", mesh.vertex_count());
    out.push_str("property double x\nproperty double y\nproperty double z\n");
    if mesh.colors().is_some() {
        out.push_str("property double red\nproperty double green\nproperty double blue\n");
    }
    let _ = writeln!(out, "element face {}", mesh.face_count());
    out.push_str("property list uchar int vertex_indices\nend_header\n");
    for (i, p) in mesh.positions().iter().enumerate() {
        match mesh.colors() {
            Some(c) => {
                let c = c[i];
                let _ = writeln!(out, "{} {} {} {} {} {}", p.x, p.y, p.z, c.x, c.y, c.z);
            }
            None => {
                let _ = writeln!(out, "{} {} {}", p.x, p.y, p.z);
            }
        }
    }
    for f in mesh.faces() {
        let _ = writeln!(out, "3 {} {} {}", f[0], f[1], f[2]);
    }
    out
}
