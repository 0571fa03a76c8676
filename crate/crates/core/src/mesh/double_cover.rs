use std::collections::HashMap;

use super::{MeshError, TriangleMesh};

/// Glues the mesh to an orientation-reversed copy of itself along the
/// boundary loop.
///
/// The first `V` vertices and first `F` faces are the original ones; the
/// mirrored interior vertices follow in ascending original order, then the
/// mirrored faces.
pub fn double_cover(mesh: &TriangleMesh) -> Result<TriangleMesh, MeshError> {
    double_cover_with_mirror(mesh).map(|(m, _)| m)
}

/// Like [`double_cover`], also returning each original vertex's index in the
/// mirrored copy (boundary vertices map to themselves).
pub(crate) fn double_cover_with_mirror(mesh: &TriangleMesh) -> Result<(TriangleMesh, Vec<usize>), MeshError> {
    if mesh.is_closed() {
        return Err(MeshError::AlreadyClosed);
    }
    let n = mesh.vertex_count();
    let is_boundary = mesh.boundary_mask();
    let mut mirror = Vec::with_capacity(n);
    let mut positions = mesh.positions().to_vec();
    for v in 0..n {
        if is_boundary[v] {
            mirror.push(v);
        } else {
            mirror.push(positions.len());
            positions.push(mesh.positions()[v]);
        }
    }
    let mut faces = mesh.faces().to_vec();
    faces.extend(mesh.faces().iter().map(|f| [mirror[f[0]], mirror[f[2]], mirror[f[1]]]));
    let colors = mesh.colors().map(|c| {
        let mut out = c.to_vec();
        out.extend((0..n).filter(|&v| !is_boundary[v]).map(|v| c[v]));
        out
    });
    let closed = TriangleMesh::with_colors(positions, faces, colors).map_err(|e| match e {
        MeshError::NonManifold(msg) => MeshError::NonManifold(format!(
            "double cover is not manifold ({msg}); interior edges joining two boundary vertices must be split first"
        )),
        other => other,
    })?;
    Ok((closed, mirror))
}

/// Splits every interior edge whose endpoints both lie on the boundary by
/// inserting its midpoint. Such edges would otherwise be shared by four faces
/// of the double cover. New vertices are appended after the originals.
pub fn split_boundary_chords(mesh: &TriangleMesh) -> Result<TriangleMesh, MeshError> {
    let is_boundary = mesh.boundary_mask();
    let mut positions = mesh.positions().to_vec();
    let mut colors = mesh.colors().map(|c| c.to_vec());
    let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
    let adjacency = mesh.face_adjacency();

    // Pick chords in a deterministic order.
    let mut chords = Vec::new();
    for (fi, f) in mesh.faces().iter().enumerate() {
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            if a < b && is_boundary[a] && is_boundary[b] && adjacency[fi][k].is_some() {
                chords.push((a, b));
            }
        }
    }
    chords.sort_unstable();
    if chords.is_empty() {
        return Ok(mesh.clone());
    }
    for &(a, b) in &chords {
        midpoint.insert((a, b), positions.len());
        positions.push(0.5 * (mesh.positions()[a] + mesh.positions()[b]));
        if let Some(c) = colors.as_mut() {
            let m = 0.5 * (c[a] + c[b]);
            c.push(m);
        }
    }

    let mut faces = Vec::with_capacity(mesh.face_count() + 2 * chords.len());
    for f in mesh.faces() {
        // A face may carry several chords; split one at a time.
        let mut pending = vec![*f];
        while let Some(t) = pending.pop() {
            let split = (0..3).find_map(|k| {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                midpoint.get(&(a.min(b), a.max(b))).map(|&m| (k, m))
            });
            match split {
                Some((k, m)) => {
                    let (a, b, c) = (t[k], t[(k + 1) % 3], t[(k + 2) % 3]);
                    pending.push([a, m, c]);
                    pending.push([m, b, c]);
                }
                None => faces.push(t),
            }
        }
    }
    TriangleMesh::with_colors(positions, faces, colors)
}
