//! Simplicial meshes of 2d and 3d domains.
//!
//! Meshes are built either by the structured generators
//! ([`SimplicialMesh::unit_square`], [`SimplicialMesh::unit_cube`]) or read from
//! ASCII Gmsh files (format 2.2, see [`import_msh`]). After construction a
//! mesh is immutable.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use thiserror::Error;

/// Tag given to exterior facets that carry no other name.
pub const WALL_TAG: &str = "wall";

#[derive(Debug, Error, PartialEq)]
pub enum MeshError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: unsupported element type {element_type}")]
    UnsupportedElement { line: usize, element_type: u32 },
    #[error("line {line}: element references node {node} which is not in $Nodes")]
    DanglingNode { line: usize, node: usize },
    #[error("cell {cell} is degenerate (zero volume)")]
    DegenerateCell { cell: usize },
    #[error("facet {facet:?} is not a face of exactly one cell")]
    BadBoundaryFacet { facet: Vec<usize> },
    #[error("facet {facet:?} is shared by {count} cells")]
    NonManifoldFacet { facet: Vec<usize>, count: usize },
    #[error("mesh has no cells")]
    Empty,
    #[error("unknown mesh spec '{0}'")]
    UnknownSpec(String),
}

/// A boundary facet: sorted vertex indices plus its physical tag.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoundaryFacet {
    pub vertices: Vec<usize>,
    pub tag: String,
}

/// Conforming simplicial mesh in 2d (triangles) or 3d (tetrahedra).
///
/// Points always carry three coordinates; in 2d the third is zero.
#[derive(Clone, Debug)]
pub struct SimplicialMesh {
    dim: usize,
    vertices: Vec<[f64; 3]>,
    cells: Vec<usize>,
    boundary_facets: Vec<BoundaryFacet>,
    h: f64,
}

impl SimplicialMesh {
    /// Builds a mesh from raw data. Negatively oriented cells are flipped,
    /// exterior facets are tagged `wall` unless they appear in `tagged_facets`.
    pub fn new(
        dim: usize,
        vertices: Vec<[f64; 3]>,
        mut cells: Vec<usize>,
        tagged_facets: Vec<BoundaryFacet>,
    ) -> Result<Self, MeshError> {
        assert!(dim == 2 || dim == 3, "only 2d and 3d meshes are supported");
        let nv = dim + 1;
        assert_eq!(cells.len() % nv, 0);
        if cells.is_empty() {
            return Err(MeshError::Empty);
        }
        for (c, cell) in cells.chunks_mut(nv).enumerate() {
            let vol = signed_volume(dim, &vertices, cell);
            if vol == 0.0 || !vol.is_finite() {
                return Err(MeshError::DegenerateCell { cell: c });
            }
            if vol < 0.0 {
                cell.swap(nv - 2, nv - 1);
            }
        }

        let incidence = facet_incidence(dim, &cells);
        for (facet, count) in &incidence {
            if *count > 2 {
                return Err(MeshError::NonManifoldFacet {
                    facet: facet.clone(),
                    count: *count,
                });
            }
        }
        let mut tags: BTreeMap<Vec<usize>, String> = BTreeMap::new();
        for f in tagged_facets {
            let mut key = f.vertices.clone();
            key.sort_unstable();
            if incidence.get(&key) != Some(&1) {
                return Err(MeshError::BadBoundaryFacet { facet: key });
            }
            tags.insert(key, f.tag);
        }
        let boundary_facets = incidence
            .iter()
            .filter(|(_, &count)| count == 1)
            .map(|(facet, _)| BoundaryFacet {
                vertices: facet.clone(),
                tag: tags
                    .get(facet)
                    .cloned()
                    .unwrap_or_else(|| WALL_TAG.to_string()),
            })
            .collect();

        let h = cells
            .chunks(nv)
            .map(|cell| cell_diameter(&vertices, cell))
            .fold(0.0, f64::max);

        Ok(Self {
            dim,
            vertices,
            cells,
            boundary_facets,
            h,
        })
    }

    /// (0,1)² split into n×n squares, each cut into two triangles along the
    /// (i,j)-(i+1,j+1) diagonal.
    pub fn unit_square(n: usize) -> Self {
        assert!(n >= 1, "unit_square needs n >= 1");
        let idx = |i: usize, j: usize| j * (n + 1) + i;
        let inv = 1.0 / n as f64;
        let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
        for j in 0..=n {
            for i in 0..=n {
                vertices.push([i as f64 * inv, j as f64 * inv, 0.0]);
            }
        }
        let mut cells = Vec::with_capacity(6 * n * n);
        for j in 0..n {
            for i in 0..n {
                let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
                cells.extend_from_slice(&[a, b, c, a, c, d]);
            }
        }
        Self::new(2, vertices, cells, Vec::new()).expect("structured square mesh is valid")
    }

    /// (0,1)³ split into n³ cubes, each cut into six tetrahedra sharing the
    /// main diagonal (Kuhn subdivision).
    pub fn unit_cube(n: usize) -> Self {
        assert!(n >= 1, "unit_cube needs n >= 1");
        let m = n + 1;
        let idx = |i: usize, j: usize, k: usize| (k * m + j) * m + i;
        let inv = 1.0 / n as f64;
        let mut vertices = Vec::with_capacity(m * m * m);
        for k in 0..m {
            for j in 0..m {
                for i in 0..m {
                    vertices.push([i as f64 * inv, j as f64 * inv, k as f64 * inv]);
                }
            }
        }
        const PERMS: [[usize; 3]; 6] = [
            [0, 1, 2],
            [0, 2, 1],
            [1, 0, 2],
            [1, 2, 0],
            [2, 0, 1],
            [2, 1, 0],
        ];
        let mut cells = Vec::with_capacity(24 * n * n * n);
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    for perm in PERMS {
                        let mut p = [i, j, k];
                        let mut tet = [idx(i, j, k), 0, 0, 0];
                        for (slot, axis) in perm.iter().enumerate() {
                            p[*axis] += 1;
                            tet[slot + 1] = idx(p[0], p[1], p[2]);
                        }
                        cells.extend_from_slice(&tet);
                    }
                }
            }
        }
        Self::new(3, vertices, cells, Vec::new()).expect("Kuhn cube mesh is valid")
    }

    /// Resolves a generator spec such as `square:8` or `cube:3`.
    pub fn from_generator_spec(spec: &str) -> Result<Self, MeshError> {
        let (kind, n) = spec
            .split_once(':')
            .ok_or_else(|| MeshError::UnknownSpec(spec.to_string()))?;
        let n: usize = n
            .trim()
            .parse()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| MeshError::UnknownSpec(spec.to_string()))?;
        match kind.trim() {
            "square" | "unit_square" => Ok(Self::unit_square(n)),
            "cube" | "unit_cube" => Ok(Self::unit_cube(n)),
            _ => Err(MeshError::UnknownSpec(spec.to_string())),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vertices(&self) -> &[[f64; 3]] {
        &self.vertices
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len() / (self.dim + 1)
    }

    /// Vertex indices of cell `c`, positively oriented.
    pub fn cell(&self, c: usize) -> &[usize] {
        let nv = self.dim + 1;
        &self.cells[c * nv..(c + 1) * nv]
    }

    pub fn cells(&self) -> impl Iterator<Item = &[usize]> {
        self.cells.chunks(self.dim + 1)
    }

    pub fn boundary_facets(&self) -> &[BoundaryFacet] {
        &self.boundary_facets
    }

    /// Maximum cell diameter.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn cell_volume(&self, c: usize) -> f64 {
        signed_volume(self.dim, &self.vertices, self.cell(c))
    }

    pub fn total_volume(&self) -> f64 {
        (0..self.num_cells()).map(|c| self.cell_volume(c)).sum()
    }

    /// Sorted, deduplicated list of mesh edges (vertex pairs with a < b).
    pub fn edges(&self) -> Vec<[usize; 2]> {
        let nv = self.dim + 1;
        let mut edges = Vec::with_capacity(self.num_cells() * nv * (nv - 1) / 2);
        for cell in self.cells() {
            for a in 0..nv {
                for b in a + 1..nv {
                    let (u, v) = (cell[a].min(cell[b]), cell[a].max(cell[b]));
                    edges.push([u, v]);
                }
            }
        }
        edges.sort_unstable();
        edges.dedup();
        edges
    }

    /// Writes the mesh as ASCII Gmsh 2.2. Boundary facets are emitted as
    /// lower-dimensional elements with one physical group per tag.
    pub fn to_msh(&self) -> String {
        let mut tag_ids: BTreeMap<&str, usize> = BTreeMap::new();
        for f in &self.boundary_facets {
            let next = tag_ids.len() + 1;
            tag_ids.entry(f.tag.as_str()).or_insert(next);
        }
        let domain_id = tag_ids.len() + 1;
        let mut out = String::new();
        out.push_str("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$PhysicalNames\n");
        let _ = writeln!(out, "{}", tag_ids.len() + 1);
        for (name, id) in &tag_ids {
            let _ = writeln!(out, "{} {} \"{}\"", self.dim - 1, id, name);
        }
        let _ = writeln!(out, "{} {} \"domain\"", self.dim, domain_id);
        out.push_str("$EndPhysicalNames\n$Nodes\n");
        let _ = writeln!(out, "{}", self.vertices.len());
        for (i, p) in self.vertices.iter().enumerate() {
            let _ = writeln!(out, "{} {:?} {:?} {:?}", i + 1, p[0], p[1], p[2]);
        }
        out.push_str("$EndNodes\n$Elements\n");
        let _ = writeln!(out, "{}", self.boundary_facets.len() + self.num_cells());
        let (facet_type, cell_type) = if self.dim == 2 { (1, 2) } else { (2, 4) };
        let mut id = 1;
        for f in &self.boundary_facets {
            let _ = write!(out, "{id} {facet_type} 2 {} {}", tag_ids[f.tag.as_str()], 1);
            for v in &f.vertices {
                let _ = write!(out, " {}", v + 1);
            }
            out.push('\n');
            id += 1;
        }
        for cell in self.cells() {
            let _ = write!(out, "{id} {cell_type} 2 {domain_id} 1");
            for v in cell {
                let _ = write!(out, " {}", v + 1);
            }
            out.push('\n');
            id += 1;
        }
        out.push_str("$EndElements\n");
        out
    }
}

/// Signed volume of a simplex (area in 2d).
pub fn signed_volume(dim: usize, vertices: &[[f64; 3]], cell: &[usize]) -> f64 {
    let p0 = vertices[cell[0]];
    let e = |i: usize, k: usize| vertices[cell[i]][k] - p0[k];
    if dim == 2 {
        0.5 * (e(1, 0) * e(2, 1) - e(1, 1) * e(2, 0))
    } else {
        let det = e(1, 0) * (e(2, 1) * e(3, 2) - e(2, 2) * e(3, 1))
            - e(1, 1) * (e(2, 0) * e(3, 2) - e(2, 2) * e(3, 0))
            + e(1, 2) * (e(2, 0) * e(3, 1) - e(2, 1) * e(3, 0));
        det / 6.0
    }
}

fn cell_diameter(vertices: &[[f64; 3]], cell: &[usize]) -> f64 {
    let mut d2: f64 = 0.0;
    for a in 0..cell.len() {
        for b in a + 1..cell.len() {
            let (p, q) = (vertices[cell[a]], vertices[cell[b]]);
            let s = (0..3).map(|k| (p[k] - q[k]).powi(2)).sum::<f64>();
            d2 = d2.max(s);
        }
    }
    d2.sqrt()
}

/// Number of cells incident to each facet, keyed by sorted vertex tuple.
pub fn facet_incidence(dim: usize, cells: &[usize]) -> BTreeMap<Vec<usize>, usize> {
    let nv = dim + 1;
    let mut counts = BTreeMap::new();
    for cell in cells.chunks(nv) {
        for skip in 0..nv {
            let mut facet: Vec<usize> = (0..nv).filter(|&i| i != skip).map(|i| cell[i]).collect();
            facet.sort_unstable();
            *counts.entry(facet).or_insert(0) += 1;
        }
    }
    counts
}

/// Maximum cell diameter of `mesh`.
pub fn mesh_size(mesh: &SimplicialMesh) -> f64 {
    mesh.h()
}

/// Parses an ASCII Gmsh 2.2 file.
///
/// Supported element types are 2-node lines (1), 3-node triangles (2),
/// 4-node tetrahedra (4) and 1-node points (15, ignored). Cells are the
/// highest-dimensional simplices present; lower-dimensional elements become
/// boundary facets tagged with their physical name (or the physical id when
/// no name is given). Nodes not used by any cell are dropped.
pub fn import_msh(text: &[u8]) -> Result<SimplicialMesh, MeshError> {
    let text = std::str::from_utf8(text).map_err(|e| MeshError::Parse {
        line: 0,
        message: format!("input is not UTF-8: {e}"),
    })?;
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));

    let mut names: HashMap<usize, String> = HashMap::new();
    let mut nodes: HashMap<usize, [f64; 3]> = HashMap::new();
    let mut node_order: Vec<usize> = Vec::new();
    // (line, element type, physical tag, node ids)
    let mut elements: Vec<(usize, u32, usize, Vec<usize>)> = Vec::new();
    let mut saw_format = false;

    let parse_err = |line: usize, message: &str| MeshError::Parse {
        line,
        message: message.to_string(),
    };

    while let Some((ln, line)) = lines.next() {
        if line.is_empty() {
            continue;
        }
        match line {
            "$MeshFormat" => {
                let (ln, header) = lines.next().ok_or_else(|| parse_err(ln, "truncated $MeshFormat"))?;
                let mut parts = header.split_whitespace();
                let version = parts.next().unwrap_or("");
                if !version.starts_with("2.") {
                    return Err(parse_err(ln, &format!("unsupported MSH version '{version}'")));
                }
                if parts.next() != Some("0") {
                    return Err(parse_err(ln, "only ASCII MSH files are supported"));
                }
                expect_end(&mut lines, "$EndMeshFormat")?;
                saw_format = true;
            }
            "$PhysicalNames" => {
                let count = read_count(&mut lines, ln)?;
                for _ in 0..count {
                    let (ln, entry) = lines.next().ok_or_else(|| parse_err(ln, "truncated $PhysicalNames"))?;
                    let mut parts = entry.splitn(3, char::is_whitespace);
                    let _dim = parts.next();
                    let id: usize = parts
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| parse_err(ln, "bad physical name entry"))?;
                    let name = parts.next().unwrap_or("").trim().trim_matches('"').to_string();
                    names.insert(id, name);
                }
                expect_end(&mut lines, "$EndPhysicalNames")?;
            }
            "$Nodes" => {
                let count = read_count(&mut lines, ln)?;
                for _ in 0..count {
                    let (ln, entry) = lines.next().ok_or_else(|| parse_err(ln, "truncated $Nodes"))?;
                    let fields: Vec<&str> = entry.split_whitespace().collect();
                    if fields.len() != 4 {
                        return Err(parse_err(ln, "node line must have 4 fields"));
                    }
                    let id: usize = fields[0].parse().map_err(|_| parse_err(ln, "bad node id"))?;
                    let mut p = [0.0; 3];
                    for k in 0..3 {
                        p[k] = fields[k + 1]
                            .parse()
                            .map_err(|_| parse_err(ln, "bad node coordinate"))?;
                    }
                    if nodes.insert(id, p).is_some() {
                        return Err(parse_err(ln, &format!("duplicate node id {id}")));
                    }
                    node_order.push(id);
                }
                expect_end(&mut lines, "$EndNodes")?;
            }
            "$Elements" => {
                let count = read_count(&mut lines, ln)?;
                for _ in 0..count {
                    let (ln, entry) = lines.next().ok_or_else(|| parse_err(ln, "truncated $Elements"))?;
                    let fields: Vec<usize> = entry
                        .split_whitespace()
                        .map(|s| s.parse())
                        .collect::<Result<_, _>>()
                        .map_err(|_| parse_err(ln, "bad element line"))?;
                    if fields.len() < 3 {
                        return Err(parse_err(ln, "element line too short"));
                    }
                    let element_type = fields[1] as u32;
                    let n_nodes = match element_type {
                        1 => 2,
                        2 => 3,
                        4 => 4,
                        15 => 1,
                        other => {
                            return Err(MeshError::UnsupportedElement {
                                line: ln,
                                element_type: other,
                            })
                        }
                    };
                    let n_tags = fields[2];
                    if fields.len() != 3 + n_tags + n_nodes {
                        return Err(parse_err(ln, "element line has wrong number of fields"));
                    }
                    let physical = if n_tags > 0 { fields[3] } else { 0 };
                    let ids = fields[3 + n_tags..].to_vec();
                    if element_type != 15 {
                        elements.push((ln, element_type, physical, ids));
                    }
                }
                expect_end(&mut lines, "$EndElements")?;
            }
            other if other.starts_with('$') => {
                // unknown section: skip to its end marker
                let end = format!("$End{}", &other[1..]);
                loop {
                    match lines.next() {
                        Some((_, l)) if l == end => break,
                        Some(_) => continue,
                        None => return Err(parse_err(ln, &format!("section {other} is not terminated"))),
                    }
                }
            }
            _ => return Err(parse_err(ln, &format!("unexpected content '{line}'"))),
        }
    }
    if !saw_format {
        return Err(parse_err(1, "missing $MeshFormat section"));
    }

    for (ln, _, _, ids) in &elements {
        if let Some(&missing) = ids.iter().find(|id| !nodes.contains_key(id)) {
            return Err(MeshError::DanglingNode {
                line: *ln,
                node: missing,
            });
        }
    }

    let dim = if elements.iter().any(|e| e.1 == 4) {
        3
    } else if elements.iter().any(|e| e.1 == 2) {
        2
    } else {
        return Err(MeshError::Empty);
    };
    let (cell_type, facet_type) = if dim == 3 { (4, 2) } else { (2, 1) };

    // Compact numbering: keep $Nodes order, drop nodes no cell touches.
    let mut used: HashMap<usize, ()> = HashMap::new();
    for (_, t, _, ids) in &elements {
        if *t == cell_type {
            for id in ids {
                used.insert(*id, ());
            }
        }
    }
    let mut index_of: HashMap<usize, usize> = HashMap::new();
    let mut vertices = Vec::new();
    for id in node_order {
        if used.contains_key(&id) {
            index_of.insert(id, vertices.len());
            let mut p = nodes[&id];
            if dim == 2 {
                p[2] = 0.0;
            }
            vertices.push(p);
        }
    }

    let mut cells = Vec::new();
    let mut facets = Vec::new();
    for (ln, t, physical, ids) in elements {
        if t == cell_type {
            cells.extend(ids.iter().map(|id| index_of[id]));
        } else if t == facet_type {
            let mut verts = Vec::with_capacity(ids.len());
            for id in &ids {
                match index_of.get(id) {
                    Some(&v) => verts.push(v),
                    None => {
                        return Err(parse_err(ln, "boundary element is not attached to any cell"));
                    }
                }
            }
            let tag = names
                .get(&physical)
                .cloned()
                .unwrap_or_else(|| physical.to_string());
            facets.push(BoundaryFacet { vertices: verts, tag });
        }
    }
    SimplicialMesh::new(dim, vertices, cells, facets)
}

fn read_count<'a>(
    lines: &mut impl Iterator<Item = (usize, &'a str)>,
    header_line: usize,
) -> Result<usize, MeshError> {
    let (ln, l) = lines.next().ok_or(MeshError::Parse {
        line: header_line,
        message: "missing entry count".into(),
    })?;
    l.parse().map_err(|_| MeshError::Parse {
        line: ln,
        message: format!("bad entry count '{l}'"),
    })
}

fn expect_end<'a>(
    lines: &mut impl Iterator<Item = (usize, &'a str)>,
    marker: &str,
) -> Result<(), MeshError> {
    match lines.next() {
        Some((_, l)) if l == marker => Ok(()),
        Some((ln, l)) => Err(MeshError::Parse {
            line: ln,
            message: format!("expected {marker}, found '{l}'"),
        }),
        None => Err(MeshError::Parse {
            line: 0,
            message: format!("missing {marker}"),
        }),
    }
}
