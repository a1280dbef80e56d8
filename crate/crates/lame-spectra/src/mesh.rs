//! Conforming triangle meshes on plane domains.
//!
//! Conventions, fixed across the crate:
//!
//! * vertices are 0-based, triangles are index triples with positive signed
//!   area (counter-clockwise);
//! * boundary edges are directed so the domain lies on the left; the outward
//!   normal of a directed edge `(u, v)` is `(t_y, -t_x)` for the unit tangent
//!   `t = (v - u)/|v - u|`;
//! * every boundary edge carries exactly one [`BoundaryTag`] and is owned by
//!   exactly one triangle;
//! * curved domains are represented by their inscribed polygons; refinement
//!   does not snap midpoints back to the circle, so the polygon is the exact
//!   computational domain at every level.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

/// Tag of a boundary edge: `DirichletS` marks the Dirichlet part `S` of the
/// Sturm-Liouville boundary condition, `Robin` the complementary part.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum BoundaryTag {
    DirichletS,
    Robin,
}

impl BoundaryTag {
    pub fn as_str(self) -> &'static str {
        match self {
            BoundaryTag::DirichletS => "DIRICHLET_S",
            BoundaryTag::Robin => "ROBIN",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "DIRICHLET_S" => Some(BoundaryTag::DirichletS),
            "ROBIN" => Some(BoundaryTag::Robin),
            _ => None,
        }
    }
}

/// Directed boundary edge `vertices[0] -> vertices[1]` with the domain on its
/// left. `owner` is the index of the unique incident triangle.
#[derive(Debug, Clone, Copy)]
pub struct BoundaryEdge {
    pub vertices: [usize; 2],
    pub tag: BoundaryTag,
    pub owner: usize,
}

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("triangle {0} has nonpositive signed area {1}")]
    NonpositiveArea(usize, f64),
    #[error("vertex index {0} out of range (mesh has {1} vertices)")]
    VertexOutOfRange(usize, usize),
    #[error("edge ({0}, {1}) is shared by more than two triangles")]
    NonManifoldEdge(usize, usize),
    #[error("edge ({0}, {1}) is declared as boundary but is interior or unknown")]
    NotABoundaryEdge(usize, usize),
    #[error("boundary edge ({0}, {1}) declared more than once")]
    DuplicateBoundaryEdge(usize, usize),
    #[error("{0} topological boundary edges missing from the declared boundary")]
    MissingBoundaryEdges(usize),
    #[error("boundary is not a disjoint union of closed loops at vertex {0}")]
    OpenBoundaryChain(usize),
    #[error("mesh must contain at least one triangle")]
    Empty,
    #[error("malformed mesh file at line {0}: {1}")]
    Parse(usize, String),
    #[error("unknown boundary tag `{0}`")]
    UnknownTag(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Conforming triangulation, immutable after construction.
#[derive(Debug, Clone)]
pub struct Mesh {
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    boundary_edges: Vec<BoundaryEdge>,
    h_max: f64,
}

impl Mesh {
    /// Validates and canonicalises the raw arrays. Boundary edges may arrive
    /// with either orientation; they are flipped onto the owner triangle's
    /// counter-clockwise order here. Owners are recomputed, never trusted.
    pub fn new(
        vertices: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        boundary: Vec<([usize; 2], BoundaryTag)>,
    ) -> Result<Self, MeshError> {
        if triangles.is_empty() {
            return Err(MeshError::Empty);
        }
        let nv = vertices.len();
        for tri in &triangles {
            for &v in tri {
                if v >= nv {
                    return Err(MeshError::VertexOutOfRange(v, nv));
                }
            }
        }
        for (ti, tri) in triangles.iter().enumerate() {
            let a = signed_area(&vertices, *tri);
            if !(a > 0.0) {
                return Err(MeshError::NonpositiveArea(ti, a));
            }
        }

        // Undirected edge -> incident triangles; directed edge -> triangle.
        let mut incidence: BTreeMap<(usize, usize), u32> = BTreeMap::new();
        let mut directed_owner: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for (ti, tri) in triangles.iter().enumerate() {
            for k in 0..3 {
                let u = tri[k];
                let v = tri[(k + 1) % 3];
                let key = (u.min(v), u.max(v));
                let c = incidence.entry(key).or_insert(0);
                *c += 1;
                if *c > 2 {
                    return Err(MeshError::NonManifoldEdge(key.0, key.1));
                }
                directed_owner.insert((u, v), ti);
            }
        }

        let mut seen: BTreeMap<(usize, usize), ()> = BTreeMap::new();
        let mut boundary_edges = Vec::with_capacity(boundary.len());
        for ([u, v], tag) in boundary {
            if u >= nv || v >= nv {
                return Err(MeshError::VertexOutOfRange(u.max(v), nv));
            }
            let key = (u.min(v), u.max(v));
            if incidence.get(&key) != Some(&1) {
                return Err(MeshError::NotABoundaryEdge(u, v));
            }
            if seen.insert(key, ()).is_some() {
                return Err(MeshError::DuplicateBoundaryEdge(u, v));
            }
            // Keep the owner's counter-clockwise direction.
            let (dir, owner) = if let Some(&t) = directed_owner.get(&(u, v)) {
                ([u, v], t)
            } else {
                let t = directed_owner[&(v, u)];
                ([v, u], t)
            };
            boundary_edges.push(BoundaryEdge { vertices: dir, tag, owner });
        }
        let n_topological = incidence.values().filter(|&&c| c == 1).count();
        if n_topological != boundary_edges.len() {
            return Err(MeshError::MissingBoundaryEdges(n_topological - boundary_edges.len()));
        }

        // Each boundary vertex must have exactly one outgoing and one incoming
        // directed boundary edge, i.e. the boundary is a union of closed loops.
        let mut out_deg = vec![0u32; nv];
        let mut in_deg = vec![0u32; nv];
        for be in &boundary_edges {
            out_deg[be.vertices[0]] += 1;
            in_deg[be.vertices[1]] += 1;
        }
        for v in 0..nv {
            if out_deg[v] != in_deg[v] || out_deg[v] > 1 {
                return Err(MeshError::OpenBoundaryChain(v));
            }
        }

        let mut h_max: f64 = 0.0;
        for tri in &triangles {
            for k in 0..3 {
                let u = vertices[tri[k]];
                let v = vertices[tri[(k + 1) % 3]];
                h_max = h_max.max(((u[0] - v[0]).powi(2) + (u[1] - v[1]).powi(2)).sqrt());
            }
        }

        Ok(Mesh { vertices, triangles, boundary_edges, h_max })
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn vertex(&self, i: usize) -> [f64; 2] {
        self.vertices[i]
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn triangle(&self, t: usize) -> [usize; 3] {
        self.triangles[t]
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    /// Longest edge in the mesh.
    pub fn h_max(&self) -> f64 {
        self.h_max
    }

    pub fn area(&self, t: usize) -> f64 {
        signed_area(&self.vertices, self.triangles[t])
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.area(t)).sum()
    }

    pub fn centroid(&self, t: usize) -> [f64; 2] {
        let [a, b, c] = self.triangles[t];
        let (pa, pb, pc) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        [(pa[0] + pb[0] + pc[0]) / 3.0, (pa[1] + pb[1] + pc[1]) / 3.0]
    }

    /// Gradients of the three barycentric basis functions of triangle `t`,
    /// in the vertex order of the triangle, together with its area.
    pub fn p1_gradients(&self, t: usize) -> ([[f64; 2]; 3], f64) {
        let [a, b, c] = self.triangles[t];
        let p = [self.vertices[a], self.vertices[b], self.vertices[c]];
        let two_a = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
        let mut g = [[0.0; 2]; 3];
        for i in 0..3 {
            let pn = p[(i + 1) % 3];
            let pp = p[(i + 2) % 3];
            g[i] = [(pn[1] - pp[1]) / two_a, (pp[0] - pn[0]) / two_a];
        }
        (g, two_a / 2.0)
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        let [u, v] = self.boundary_edges[e].vertices;
        let (pu, pv) = (self.vertices[u], self.vertices[v]);
        ((pu[0] - pv[0]).powi(2) + (pu[1] - pv[1]).powi(2)).sqrt()
    }

    /// Unit outward normal of boundary edge `e`.
    pub fn outward_normal(&self, e: usize) -> [f64; 2] {
        let [u, v] = self.boundary_edges[e].vertices;
        let (pu, pv) = (self.vertices[u], self.vertices[v]);
        let len = self.edge_length(e);
        let t = [(pv[0] - pu[0]) / len, (pv[1] - pu[1]) / len];
        [t[1], -t[0]]
    }

    /// Midpoint of boundary edge `e`.
    pub fn edge_midpoint(&self, e: usize) -> [f64; 2] {
        let [u, v] = self.boundary_edges[e].vertices;
        let (pu, pv) = (self.vertices[u], self.vertices[v]);
        [(pu[0] + pv[0]) / 2.0, (pu[1] + pv[1]) / 2.0]
    }

    /// Replaces all boundary tags according to `partition` membership.
    pub fn with_tags_from(&self, partition: &BoundaryPartition) -> Mesh {
        let mut m = self.clone();
        for (e, be) in m.boundary_edges.iter_mut().enumerate() {
            be.tag = if partition.s_edges.contains(&e) { BoundaryTag::DirichletS } else { BoundaryTag::Robin };
        }
        m
    }

    /// Number of distinct (undirected) edges.
    pub fn n_edges(&self) -> usize {
        let mut set: BTreeMap<(usize, usize), ()> = BTreeMap::new();
        for tri in &self.triangles {
            for k in 0..3 {
                let u = tri[k];
                let v = tri[(k + 1) % 3];
                set.insert((u.min(v), u.max(v)), ());
            }
        }
        set.len()
    }

    /// Serialises to the line format `v x y` / `t i j k` / `b i j TAG`.
    /// Floats use the shortest round-tripping representation, so save/load
    /// is exact and byte-stable.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for v in &self.vertices {
            writeln!(s, "v {} {}", v[0], v[1]).unwrap();
        }
        for t in &self.triangles {
            writeln!(s, "t {} {} {}", t[0], t[1], t[2]).unwrap();
        }
        for b in &self.boundary_edges {
            writeln!(s, "b {} {} {}", b.vertices[0], b.vertices[1], b.tag.as_str()).unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Mesh, MeshError> {
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        let mut boundary = Vec::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut it = line.split_whitespace();
            let kind = it.next().unwrap();
            let parse_err = |what: &str| MeshError::Parse(ln + 1, what.to_string());
            match kind {
                "v" => {
                    let x: f64 = it.next().ok_or_else(|| parse_err("missing x"))?.parse().map_err(|_| parse_err("bad x"))?;
                    let y: f64 = it.next().ok_or_else(|| parse_err("missing y"))?.parse().map_err(|_| parse_err("bad y"))?;
                    vertices.push([x, y]);
                }
                "t" => {
                    let mut idx = [0usize; 3];
                    for slot in &mut idx {
                        *slot = it.next().ok_or_else(|| parse_err("missing index"))?.parse().map_err(|_| parse_err("bad index"))?;
                    }
                    triangles.push(idx);
                }
                "b" => {
                    let u: usize = it.next().ok_or_else(|| parse_err("missing index"))?.parse().map_err(|_| parse_err("bad index"))?;
                    let v: usize = it.next().ok_or_else(|| parse_err("missing index"))?.parse().map_err(|_| parse_err("bad index"))?;
                    let tag_s = it.next().ok_or_else(|| parse_err("missing tag"))?;
                    let tag = BoundaryTag::parse(tag_s).ok_or_else(|| MeshError::UnknownTag(tag_s.to_string()))?;
                    boundary.push(([u, v], tag));
                }
                other => return Err(parse_err(&format!("unknown record `{other}`"))),
            }
            if it.next().is_some() {
                return Err(parse_err("trailing tokens"));
            }
        }
        Mesh::new(vertices, triangles, boundary)
    }

    pub fn save(&self, path: &Path) -> Result<(), MeshError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Mesh, MeshError> {
        let text = std::fs::read_to_string(path)?;
        Mesh::from_text(&text)
    }
}

fn signed_area(vertices: &[[f64; 2]], [a, b, c]: [usize; 3]) -> f64 {
    let (pa, pb, pc) = (vertices[a], vertices[b], vertices[c]);
    0.5 * ((pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]))
}

/// Partition of the boundary into the Dirichlet part `S`, the Robin part, and
/// the set `Y` of junction vertices where the two parts meet. Edge entries are
/// indices into `mesh.boundary_edges()`.
#[derive(Debug, Clone)]
pub struct BoundaryPartition {
    pub s_edges: Vec<usize>,
    pub robin_edges: Vec<usize>,
    pub y_vertices: Vec<usize>,
}

impl BoundaryPartition {
    fn from_membership(mesh: &Mesh, in_s: impl Fn(usize) -> bool) -> BoundaryPartition {
        let mut s_edges = Vec::new();
        let mut robin_edges = Vec::new();
        let mut touches_s: BTreeMap<usize, ()> = BTreeMap::new();
        let mut touches_r: BTreeMap<usize, ()> = BTreeMap::new();
        for (e, be) in mesh.boundary_edges().iter().enumerate() {
            let bucket = if in_s(e) {
                s_edges.push(e);
                &mut touches_s
            } else {
                robin_edges.push(e);
                &mut touches_r
            };
            bucket.insert(be.vertices[0], ());
            bucket.insert(be.vertices[1], ());
        }
        let y_vertices = touches_s.keys().filter(|v| touches_r.contains_key(v)).cloned().collect();
        BoundaryPartition { s_edges, robin_edges, y_vertices }
    }

    /// Reads the partition off the tags stored in the mesh.
    pub fn from_tags(mesh: &Mesh) -> BoundaryPartition {
        Self::from_membership(mesh, |e| mesh.boundary_edges()[e].tag == BoundaryTag::DirichletS)
    }

    /// Vertices lying on the closure of `S` (endpoints of `S` edges). The
    /// junction set `Y` is a subset of these.
    pub fn s_closure_vertices(&self, mesh: &Mesh) -> Vec<usize> {
        let mut set: BTreeMap<usize, ()> = BTreeMap::new();
        for &e in &self.s_edges {
            let be = mesh.boundary_edges()[e];
            set.insert(be.vertices[0], ());
            set.insert(be.vertices[1], ());
        }
        set.keys().cloned().collect()
    }
}

/// Classifies every boundary edge by a predicate on its midpoint: edges whose
/// midpoint satisfies `rule` go to `S`, the rest to the Robin part. `Y` is
/// the set of vertices incident to edges of both kinds.
pub fn tag_boundary(mesh: &Mesh, rule: impl Fn([f64; 2]) -> bool) -> BoundaryPartition {
    BoundaryPartition::from_membership(mesh, |e| rule(mesh.edge_midpoint(e)))
}

fn push_tri(vertices: &[[f64; 2]], tris: &mut Vec<[usize; 3]>, a: usize, b: usize, c: usize) {
    if signed_area(vertices, [a, b, c]) > 0.0 {
        tris.push([a, b, c]);
    } else {
        tris.push([a, c, b]);
    }
}

/// Structured mesh of the unit square with `n x n` cells, each split along the
/// same diagonal. All boundary edges are tagged `ROBIN`.
pub fn build_unit_square_mesh(n: usize) -> Result<Mesh, MeshError> {
    assert!(n >= 1, "subdivision count must be positive");
    let np = n + 1;
    let mut vertices = Vec::with_capacity(np * np);
    for j in 0..np {
        for i in 0..np {
            vertices.push([i as f64 / n as f64, j as f64 / n as f64]);
        }
    }
    let at = |i: usize, j: usize| j * np + i;
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (a, b, c, d) = (at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1));
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    let mut boundary = Vec::with_capacity(4 * n);
    for i in 0..n {
        boundary.push(([at(i, 0), at(i + 1, 0)], BoundaryTag::Robin));
    }
    for j in 0..n {
        boundary.push(([at(n, j), at(n, j + 1)], BoundaryTag::Robin));
    }
    for i in (0..n).rev() {
        boundary.push(([at(i + 1, n), at(i, n)], BoundaryTag::Robin));
    }
    for j in (0..n).rev() {
        boundary.push(([at(0, j + 1), at(0, j)], BoundaryTag::Robin));
    }
    Mesh::new(vertices, triangles, boundary)
}

/// Stitches the annulus between two concentric vertex rings (listed in
/// increasing angle) into triangles by merging the two angular sequences.
/// `closed` joins the final vertices back to the first ones.
fn zip_rings(
    vertices: &[[f64; 2]],
    tris: &mut Vec<[usize; 3]>,
    inner: &[usize],
    outer: &[usize],
    inner_angles: &[f64],
    outer_angles: &[f64],
    closed: bool,
    wrap: f64,
) {
    let ni = inner.len();
    let no = outer.len();
    let (mut i, mut o) = (0usize, 0usize);
    let steps_i = if closed { ni } else { ni - 1 };
    let steps_o = if closed { no } else { no - 1 };
    let angle_i = |k: usize| if k < ni { inner_angles[k] } else { inner_angles[k - ni] + wrap };
    let angle_o = |k: usize| if k < no { outer_angles[k] } else { outer_angles[k - no] + wrap };
    while i < steps_i || o < steps_o {
        let advance_outer = if o >= steps_o {
            false
        } else if i >= steps_i {
            true
        } else {
            angle_o(o + 1) <= angle_i(i + 1)
        };
        if advance_outer {
            push_tri(vertices, tris, inner[i % ni], outer[o % no], outer[(o + 1) % no]);
            o += 1;
        } else {
            push_tri(vertices, tris, inner[i % ni], outer[o % no], inner[(i + 1) % ni]);
            i += 1;
        }
    }
}

/// Quasi-uniform triangulation of the regular polygon with `n_boundary`
/// vertices inscribed in the circle of radius `radius`: concentric rings of
/// vertices joined ring-to-ring, the innermost ring fanned to the center.
/// The polygon, not the disc, is the exact domain; its area is
/// `(n_boundary/2) radius^2 sin(2 pi / n_boundary)`.
pub fn build_disc_mesh(n_boundary: usize, radius: f64) -> Result<Mesh, MeshError> {
    assert!(n_boundary >= 3, "need at least 3 boundary segments");
    assert!(radius > 0.0);
    let rings = ((n_boundary as f64 / (2.0 * std::f64::consts::PI)).round() as usize).max(1);
    let mut vertices = vec![[0.0, 0.0]];
    let mut ring_ids: Vec<Vec<usize>> = Vec::with_capacity(rings);
    let mut ring_angles: Vec<Vec<f64>> = Vec::with_capacity(rings);
    for k in 1..=rings {
        let m_k = if k == rings {
            n_boundary
        } else {
            ((n_boundary * k) as f64 / rings as f64).round().max(3.0) as usize
        };
        let r_k = radius * k as f64 / rings as f64;
        let mut ids = Vec::with_capacity(m_k);
        let mut angles = Vec::with_capacity(m_k);
        for j in 0..m_k {
            let th = 2.0 * std::f64::consts::PI * j as f64 / m_k as f64;
            ids.push(vertices.len());
            vertices.push([r_k * th.cos(), r_k * th.sin()]);
            angles.push(th);
        }
        ring_ids.push(ids);
        ring_angles.push(angles);
    }
    let mut triangles = Vec::new();
    let first = &ring_ids[0];
    for j in 0..first.len() {
        push_tri(&vertices, &mut triangles, 0, first[j], first[(j + 1) % first.len()]);
    }
    for k in 1..rings {
        zip_rings(
            &vertices,
            &mut triangles,
            &ring_ids[k - 1],
            &ring_ids[k],
            &ring_angles[k - 1],
            &ring_angles[k],
            true,
            2.0 * std::f64::consts::PI,
        );
    }
    let outer = &ring_ids[rings - 1];
    let mut boundary = Vec::with_capacity(n_boundary);
    for j in 0..n_boundary {
        boundary.push(([outer[j], outer[(j + 1) % n_boundary]], BoundaryTag::Robin));
    }
    Mesh::new(vertices, triangles, boundary)
}

/// Upper half-disc `{x2 > 0, |x| < radius}` with `n_boundary` segments on the
/// arc. The straight edge (the diameter) is pre-tagged `DIRICHLET_S`, the arc
/// `ROBIN`; the junction set `Y` is then the corner pair `(+-radius, 0)`.
pub fn build_half_disc_mesh(n_boundary: usize, radius: f64) -> Result<Mesh, MeshError> {
    assert!(n_boundary >= 2, "need at least 2 arc segments");
    assert!(radius > 0.0);
    let rings = ((n_boundary as f64 / std::f64::consts::PI).round() as usize).max(1);
    let mut vertices = vec![[0.0, 0.0]];
    let mut ring_ids: Vec<Vec<usize>> = Vec::with_capacity(rings);
    let mut ring_angles: Vec<Vec<f64>> = Vec::with_capacity(rings);
    for k in 1..=rings {
        let m_k = if k == rings {
            n_boundary
        } else {
            ((n_boundary * k) as f64 / rings as f64).round().max(2.0) as usize
        };
        let r_k = radius * k as f64 / rings as f64;
        let mut ids = Vec::with_capacity(m_k + 1);
        let mut angles = Vec::with_capacity(m_k + 1);
        for j in 0..=m_k {
            let th = std::f64::consts::PI * j as f64 / m_k as f64;
            ids.push(vertices.len());
            // Pin the axis endpoints exactly onto y = 0.
            let y = if j == 0 || j == m_k { 0.0 } else { r_k * th.sin() };
            vertices.push([r_k * th.cos(), y]);
            angles.push(th);
        }
        ring_ids.push(ids);
        ring_angles.push(angles);
    }
    let mut triangles = Vec::new();
    let first = &ring_ids[0];
    for j in 0..first.len() - 1 {
        push_tri(&vertices, &mut triangles, 0, first[j], first[j + 1]);
    }
    for k in 1..rings {
        zip_rings(
            &vertices,
            &mut triangles,
            &ring_ids[k - 1],
            &ring_ids[k],
            &ring_angles[k - 1],
            &ring_angles[k],
            false,
            std::f64::consts::PI,
        );
    }
    let outer = &ring_ids[rings - 1];
    let mut boundary = Vec::new();
    for j in 0..outer.len() - 1 {
        boundary.push(([outer[j], outer[j + 1]], BoundaryTag::Robin));
    }
    // Diameter from (-radius, 0) to (radius, 0): the upper half-plane is on
    // the left when walking in +x direction.
    let mut diameter = Vec::with_capacity(2 * rings + 1);
    for k in (1..=rings).rev() {
        diameter.push(*ring_ids[k - 1].last().unwrap());
    }
    diameter.push(0);
    for k in 1..=rings {
        diameter.push(ring_ids[k - 1][0]);
    }
    for w in diameter.windows(2) {
        boundary.push(([w[0], w[1]], BoundaryTag::DirichletS));
    }
    Mesh::new(vertices, triangles, boundary)
}

/// Uniform refinement: each triangle splits into four via edge midpoints.
/// Boundary children inherit the parent tag; `h_max` halves exactly for
/// straight-edged meshes because no midpoint is snapped to a curve.
pub fn refine(mesh: &Mesh) -> Result<Mesh, MeshError> {
    let mut vertices = mesh.vertices().to_vec();
    let mut midpoint: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut mid = |u: usize, v: usize, vertices: &mut Vec<[f64; 2]>| -> usize {
        let key = (u.min(v), u.max(v));
        *midpoint.entry(key).or_insert_with(|| {
            let (pu, pv) = (vertices[u], vertices[v]);
            vertices.push([(pu[0] + pv[0]) / 2.0, (pu[1] + pv[1]) / 2.0]);
            vertices.len() - 1
        })
    };
    let mut triangles = Vec::with_capacity(4 * mesh.n_triangles());
    for &[a, b, c] in mesh.triangles() {
        let ab = mid(a, b, &mut vertices);
        let bc = mid(b, c, &mut vertices);
        let ca = mid(c, a, &mut vertices);
        triangles.push([a, ab, ca]);
        triangles.push([ab, b, bc]);
        triangles.push([ca, bc, c]);
        triangles.push([ab, bc, ca]);
    }
    let mut boundary = Vec::with_capacity(2 * mesh.boundary_edges().len());
    for be in mesh.boundary_edges() {
        let [u, v] = be.vertices;
        let m = mid(u, v, &mut vertices);
        boundary.push(([u, m], be.tag));
        boundary.push(([m, v], be.tag));
    }
    Mesh::new(vertices, triangles, boundary)
}
