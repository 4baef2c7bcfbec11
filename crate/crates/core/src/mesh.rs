//! Conforming triangular meshes of the sheet cross-section and their
//! newest-vertex-bisection refinement.
//!
//! Every triangle is stored counter-clockwise as `[v0, v1, v2]` with the
//! newest vertex (peak) in slot 2, so the refinement edge is always `v0-v1`.
//! Local edge `k` joins local vertices `k` and `(k + 1) % 3`.
//!
//! Triangles remember where they sit in the bisection forest rooted at the
//! initial mesh (`Lineage`). Two meshes refined from the same initial mesh
//! can therefore be compared triangle by triangle without point location.

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, HashMap};
use std::hash::{Hash, Hasher};
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Region {
    Conductor,
    Air,
}

impl Region {
    pub fn name(self) -> &'static str {
        match self {
            Region::Conductor => "conductor",
            Region::Air => "air",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "conductor" => Some(Region::Conductor),
            "air" => Some(Region::Air),
            _ => None,
        }
    }
}

/// Boundary conditions attached to boundary edges.
///
/// * `Outer`: flux wall for the scalar potential (natural condition) and a
///   sheet rim for the current vector potential (tangential trace zero).
/// * `Symmetry`: field enters normally (scalar potential pinned to zero),
///   current vector potential left free.
/// * `Interface`: conductor/air interface; reported for interior edges
///   between conductor and air triangles and treated like a rim.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BoundaryTag {
    Outer,
    Symmetry,
    Interface,
}

impl BoundaryTag {
    pub fn name(self) -> &'static str {
        match self {
            BoundaryTag::Outer => "outer",
            BoundaryTag::Symmetry => "symmetry",
            BoundaryTag::Interface => "interface",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "outer" => Some(BoundaryTag::Outer),
            "symmetry" => Some(BoundaryTag::Symmetry),
            "interface" | "conductor-interface" => Some(BoundaryTag::Interface),
            _ => None,
        }
    }
}

/// Position of a triangle in the bisection forest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Lineage {
    /// Index of the initial-mesh triangle this one descends from.
    pub root: u32,
    /// Number of bisections from the root.
    pub depth: u16,
    /// Child choices, most recent in the lowest bit.
    pub path: u128,
    /// Index of the parent triangle in the mesh this one was refined from.
    pub parent: Option<usize>,
}

/// Forest key: identifies a triangle independently of mesh numbering.
pub type TriKey = (u32, u16, u128);

impl Lineage {
    fn root(index: usize) -> Self {
        Self { root: index as u32, depth: 0, path: 0, parent: None }
    }

    pub fn key(&self) -> TriKey {
        (self.root, self.depth, self.path)
    }

    fn child(&self, bit: u128, parent: usize) -> Self {
        assert!(self.depth < 127, "bisection depth exhausted");
        Self {
            root: self.root,
            depth: self.depth + 1,
            path: (self.path << 1) | bit,
            parent: Some(parent),
        }
    }
}

/// Key of the ancestor `levels` bisections above `key`.
pub fn ancestor_key(key: TriKey, levels: u16) -> Option<TriKey> {
    if levels > key.1 {
        return None;
    }
    Some((key.0, key.1 - levels, key.2 >> levels))
}

/// Conforming 2D triangular mesh with region and boundary tags.
#[derive(Debug, Clone)]
pub struct Mesh2D {
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    regions: Vec<Region>,
    lineage: Vec<Lineage>,
    forest: u64,
    edges: Vec<[usize; 2]>,
    edge_lookup: HashMap<(usize, usize), usize>,
    tri_edges: Vec<[usize; 3]>,
    edge_tris: Vec<[Option<usize>; 2]>,
    boundary: Vec<Option<BoundaryTag>>,
}

fn sorted(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

fn signed_area(p: [f64; 2], q: [f64; 2], r: [f64; 2]) -> f64 {
    0.5 * ((q[0] - p[0]) * (r[1] - p[1]) - (r[0] - p[0]) * (q[1] - p[1]))
}

fn dist2(p: [f64; 2], q: [f64; 2]) -> f64 {
    (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)
}

impl Mesh2D {
    /// Builds an initial mesh. Triangles may come in either orientation; each
    /// is reoriented counter-clockwise and its longest edge becomes the
    /// refinement edge. Boundary edges missing from `boundary` are `Outer`.
    pub fn new(
        vertices: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        regions: Vec<Region>,
        boundary: &BTreeMap<(usize, usize), BoundaryTag>,
    ) -> Result<Self> {
        let mut tris = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            for &v in tri {
                if v >= vertices.len() {
                    return Err(Error::InvalidGeometry(format!(
                        "triangle {t} references missing vertex {v}"
                    )));
                }
            }
            let [a, b, c] = *tri;
            let area = signed_area(vertices[a], vertices[b], vertices[c]);
            let ccw = if area < 0.0 { [a, c, b] } else { [a, b, c] };
            // Put the vertex opposite the longest edge last; ties go to the
            // lowest local slot so the choice is deterministic.
            let mut best = 0;
            let mut best_len = -1.0;
            for k in 0..3 {
                let len = dist2(vertices[ccw[k]], vertices[ccw[(k + 1) % 3]]);
                if len > best_len * (1.0 + 1e-12) {
                    best = k;
                    best_len = len;
                }
            }
            tris.push([ccw[best], ccw[(best + 1) % 3], ccw[(best + 2) % 3]]);
        }
        Self::with_peaks(vertices, tris, regions, boundary)
    }

    /// Builds an initial mesh whose triangles are already counter-clockwise
    /// with the peak in slot 2.
    pub fn with_peaks(
        vertices: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        regions: Vec<Region>,
        boundary: &BTreeMap<(usize, usize), BoundaryTag>,
    ) -> Result<Self> {
        if let Some(t) = triangles.iter().position(|tri| tri.iter().any(|&v| v >= vertices.len())) {
            return Err(Error::InvalidGeometry(format!("triangle {t} references a missing vertex")));
        }
        let lineage = (0..triangles.len()).map(Lineage::root).collect();
        let mut h = DefaultHasher::new();
        for tri in &triangles {
            for &v in tri {
                vertices[v][0].to_bits().hash(&mut h);
                vertices[v][1].to_bits().hash(&mut h);
            }
        }
        let forest = h.finish();
        Self::assemble(vertices, triangles, regions, lineage, forest, boundary)
    }

    fn assemble(
        vertices: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        regions: Vec<Region>,
        lineage: Vec<Lineage>,
        forest: u64,
        boundary: &BTreeMap<(usize, usize), BoundaryTag>,
    ) -> Result<Self> {
        if triangles.is_empty() {
            return Err(Error::InvalidGeometry("mesh has no triangles".into()));
        }
        if regions.len() != triangles.len() {
            return Err(Error::InvalidGeometry(format!(
                "{} region tags for {} triangles",
                regions.len(),
                triangles.len()
            )));
        }
        let mut edges = Vec::new();
        let mut edge_lookup = HashMap::new();
        let mut tri_edges = Vec::with_capacity(triangles.len());
        let mut edge_tris: Vec<[Option<usize>; 2]> = Vec::new();
        for (t, tri) in triangles.iter().enumerate() {
            let area = signed_area(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
            if !(area > 0.0) {
                return Err(Error::InvalidGeometry(format!(
                    "triangle {t} has non-positive signed area {area}"
                )));
            }
            let mut te = [0; 3];
            for k in 0..3 {
                let key = sorted(tri[k], tri[(k + 1) % 3]);
                let e = *edge_lookup.entry(key).or_insert_with(|| {
                    edges.push([key.0, key.1]);
                    edge_tris.push([None, None]);
                    edges.len() - 1
                });
                let slot = &mut edge_tris[e];
                if slot[0].is_none() {
                    slot[0] = Some(t);
                } else if slot[1].is_none() {
                    slot[1] = Some(t);
                } else {
                    return Err(Error::InvalidGeometry(format!(
                        "edge ({}, {}) shared by more than two triangles",
                        key.0, key.1
                    )));
                }
                te[k] = e;
            }
            tri_edges.push(te);
        }
        let mut tags = vec![None; edges.len()];
        for (e, et) in edge_tris.iter().enumerate() {
            if et[1].is_none() {
                let key = (edges[e][0], edges[e][1]);
                tags[e] = Some(boundary.get(&key).copied().unwrap_or(BoundaryTag::Outer));
            }
        }
        for key in boundary.keys() {
            match edge_lookup.get(key) {
                None => {
                    return Err(Error::InvalidGeometry(format!(
                        "boundary tag on ({}, {}) which is not a mesh edge",
                        key.0, key.1
                    )))
                }
                Some(&e) if edge_tris[e][1].is_some() => {
                    return Err(Error::InvalidGeometry(format!(
                        "boundary tag on interior edge ({}, {})",
                        key.0, key.1
                    )))
                }
                _ => {}
            }
        }
        Ok(Self {
            vertices,
            triangles,
            regions,
            lineage,
            forest,
            edges,
            edge_lookup,
            tri_edges,
            edge_tris,
            boundary: tags,
        })
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn vertex(&self, v: usize) -> [f64; 2] {
        self.vertices[v]
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn triangle(&self, t: usize) -> [usize; 3] {
        self.triangles[t]
    }

    pub fn region(&self, t: usize) -> Region {
        self.regions[t]
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn lineage(&self, t: usize) -> &Lineage {
        &self.lineage[t]
    }

    /// Identifies the initial mesh this one was refined from.
    pub fn forest_id(&self) -> u64 {
        self.forest
    }

    /// Edge `e` as `[low, high]` vertex indices; the global edge direction
    /// runs from the lower to the higher index.
    pub fn edge(&self, e: usize) -> [usize; 2] {
        self.edges[e]
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn edge_index(&self, a: usize, b: usize) -> Option<usize> {
        self.edge_lookup.get(&sorted(a, b)).copied()
    }

    /// Global edges of triangle `t`, local edge `k` joining local vertices `k` and `k + 1`.
    pub fn triangle_edges(&self, t: usize) -> [usize; 3] {
        self.tri_edges[t]
    }

    pub fn edge_triangles(&self, e: usize) -> [Option<usize>; 2] {
        self.edge_tris[e]
    }

    /// Tag of a domain-boundary edge, `Interface` for an interior edge between
    /// conductor and air, `None` otherwise.
    pub fn boundary_tag(&self, e: usize) -> Option<BoundaryTag> {
        if let Some(tag) = self.boundary[e] {
            return Some(tag);
        }
        match self.edge_tris[e] {
            [Some(a), Some(b)] if self.regions[a] != self.regions[b] => Some(BoundaryTag::Interface),
            _ => None,
        }
    }

    pub fn is_domain_boundary(&self, e: usize) -> bool {
        self.boundary[e].is_some()
    }

    /// Boundary edges with their tags, keyed by sorted vertex pair.
    pub fn boundary_map(&self) -> BTreeMap<(usize, usize), BoundaryTag> {
        self.boundary
            .iter()
            .enumerate()
            .filter_map(|(e, tag)| tag.map(|t| ((self.edges[e][0], self.edges[e][1]), t)))
            .collect()
    }

    pub fn corners(&self, t: usize) -> [[f64; 2]; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn area(&self, t: usize) -> f64 {
        let [p, q, r] = self.corners(t);
        signed_area(p, q, r)
    }

    pub fn centroid(&self, t: usize) -> [f64; 2] {
        let [p, q, r] = self.corners(t);
        [(p[0] + q[0] + r[0]) / 3.0, (p[1] + q[1] + r[1]) / 3.0]
    }

    pub fn edge_midpoint(&self, e: usize) -> [f64; 2] {
        let [a, b] = self.edges[e];
        let (p, q) = (self.vertices[a], self.vertices[b]);
        [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]
    }

    pub fn has_conductor(&self) -> bool {
        self.regions.contains(&Region::Conductor)
    }

    /// Edges on the boundary of the conductor region: domain-boundary edges of
    /// conductor triangles and conductor/air interface edges.
    pub fn is_conductor_boundary(&self, e: usize) -> bool {
        let [a, b] = self.edge_tris[e];
        let ca = a.map(|t| self.regions[t] == Region::Conductor).unwrap_or(false);
        let cb = b.map(|t| self.regions[t] == Region::Conductor).unwrap_or(false);
        ca != cb
    }

    /// Smallest interior angle over all triangles, in radians.
    pub fn min_angle(&self) -> f64 {
        let mut best = std::f64::consts::PI;
        for t in 0..self.n_triangles() {
            let c = self.corners(t);
            for k in 0..3 {
                let p = c[k];
                let q = c[(k + 1) % 3];
                let r = c[(k + 2) % 3];
                let u = [q[0] - p[0], q[1] - p[1]];
                let v = [r[0] - p[0], r[1] - p[1]];
                let cos = (u[0] * v[0] + u[1] * v[1]) / (dist2(p, q).sqrt() * dist2(p, r).sqrt());
                best = best.min(cos.clamp(-1.0, 1.0).acos());
            }
        }
        best
    }

    /// Checks the structural invariants: positive areas, at most two
    /// triangles per edge, and no vertex in the interior of an edge of its
    /// neighbours (hanging nodes). Returns the first violation.
    pub fn validate(&self) -> Result<()> {
        for t in 0..self.n_triangles() {
            if !(self.area(t) > 0.0) {
                return Err(Error::Consistency(format!("triangle {t} has non-positive area")));
            }
        }
        let mut count: HashMap<(usize, usize), usize> = HashMap::new();
        for tri in &self.triangles {
            for k in 0..3 {
                *count.entry(sorted(tri[k], tri[(k + 1) % 3])).or_default() += 1;
            }
        }
        for (&(a, b), &n) in &count {
            if n > 2 {
                return Err(Error::Consistency(format!("edge ({a}, {b}) in {n} triangles")));
            }
        }
        // A hanging node shows up as a vertex sitting on the interior of an
        // edge that is only used once.
        let mut on_vertex: HashMap<(u64, u64), usize> = HashMap::new();
        for (v, p) in self.vertices.iter().enumerate() {
            on_vertex.insert((p[0].to_bits(), p[1].to_bits()), v);
        }
        for (&(a, b), &n) in &count {
            if n == 1 {
                let (p, q) = (self.vertices[a], self.vertices[b]);
                let m = [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])];
                if on_vertex.contains_key(&(m[0].to_bits(), m[1].to_bits())) {
                    return Err(Error::Consistency(format!(
                        "hanging node at the midpoint of edge ({a}, {b})"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Returns the same mesh with every domain-boundary edge retagged by `f`
    /// evaluated at the edge midpoint.
    pub fn retag_boundary(&self, f: impl Fn([f64; 2]) -> BoundaryTag) -> Mesh2D {
        let mut out = self.clone();
        for e in 0..out.edges.len() {
            if out.boundary[e].is_some() {
                out.boundary[e] = Some(f(self.edge_midpoint(e)));
            }
        }
        out
    }

    /// Newest-vertex bisection refinement. Every marked triangle is split
    /// into four (its three edges are bisected); neighbours are bisected as
    /// needed to keep the mesh conforming.
    pub fn refine(&self, marked: &[usize]) -> Result<Mesh2D> {
        let mut edge_marked = vec![false; self.edges.len()];
        for &t in marked {
            if t >= self.triangles.len() {
                return Err(Error::InvalidArgument(format!(
                    "marked triangle {t} out of range ({} triangles)",
                    self.triangles.len()
                )));
            }
            for &e in &self.tri_edges[t] {
                edge_marked[e] = true;
            }
        }
        if marked.is_empty() {
            return Ok(self.clone());
        }
        // Closure: a triangle with any marked edge must bisect its refinement edge.
        let mut queue: Vec<usize> = (0..self.edges.len()).filter(|&e| edge_marked[e]).collect();
        while let Some(e) = queue.pop() {
            for t in self.edge_tris[e].iter().flatten() {
                let re = self.tri_edges[*t][0];
                if !edge_marked[re] {
                    edge_marked[re] = true;
                    queue.push(re);
                }
            }
        }

        let mut vertices = self.vertices.clone();
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        for (e, &m) in edge_marked.iter().enumerate() {
            if m {
                let [a, b] = self.edges[e];
                let (p, q) = (self.vertices[a], self.vertices[b]);
                vertices.push([0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]);
                midpoint.insert((a, b), vertices.len() - 1);
            }
        }

        let mut triangles = Vec::with_capacity(self.triangles.len() * 2);
        let mut regions = Vec::with_capacity(self.triangles.len() * 2);
        let mut lineage = Vec::with_capacity(self.triangles.len() * 2);
        for (t, &tri) in self.triangles.iter().enumerate() {
            let mut start = self.lineage[t];
            start.parent = Some(t);
            split(tri, start, t, &midpoint, &mut |tri, lin| {
                triangles.push(tri);
                regions.push(self.regions[t]);
                lineage.push(lin);
            });
        }

        let mut boundary = BTreeMap::new();
        for (e, tag) in self.boundary.iter().enumerate() {
            if let Some(tag) = tag {
                let [a, b] = self.edges[e];
                match midpoint.get(&(a, b)) {
                    Some(&m) => {
                        boundary.insert(sorted(a, m), *tag);
                        boundary.insert(sorted(m, b), *tag);
                    }
                    None => {
                        boundary.insert((a, b), *tag);
                    }
                }
            }
        }
        Mesh2D::assemble(vertices, triangles, regions, lineage, self.forest, &boundary)
    }

    /// Refines every triangle once (each splits into four).
    pub fn uniform_refine(&self) -> Mesh2D {
        let all: Vec<usize> = (0..self.n_triangles()).collect();
        self.refine(&all).expect("all triangle ids are valid")
    }

    /// Map from forest key to triangle index.
    pub fn key_index(&self) -> HashMap<TriKey, usize> {
        self.lineage.iter().enumerate().map(|(t, l)| (l.key(), t)).collect()
    }

    /// Barycentric coordinates of `p` with respect to triangle `t`.
    pub fn barycentric(&self, t: usize, p: [f64; 2]) -> [f64; 3] {
        let [a, b, c] = self.corners(t);
        let area = signed_area(a, b, c);
        let l0 = signed_area(p, b, c) / area;
        let l1 = signed_area(a, p, c) / area;
        [l0, l1, 1.0 - l0 - l1]
    }

    /// Reads the text mesh format (see `write_text`).
    pub fn read_text(reader: impl BufRead) -> Result<Mesh2D> {
        read_text(reader)
    }

    /// Writes the text mesh format:
    ///
    /// ```text
    /// # comment
    /// vertices <n>
    /// <x> <y>
    /// triangles <m>
    /// <v0> <v1> <v2> <conductor|air>
    /// boundary <k>
    /// <v0> <v1> <outer|symmetry|interface>
    /// ```
    pub fn write_text(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "# msfem-eddy mesh")?;
        writeln!(w, "vertices {}", self.vertices.len())?;
        for p in &self.vertices {
            writeln!(w, "{:e} {:e}", p[0], p[1])?;
        }
        writeln!(w, "triangles {}", self.triangles.len())?;
        for (t, tri) in self.triangles.iter().enumerate() {
            writeln!(w, "{} {} {} {}", tri[0], tri[1], tri[2], self.regions[t].name())?;
        }
        let bmap = self.boundary_map();
        writeln!(w, "boundary {}", bmap.len())?;
        for ((a, b), tag) in bmap {
            writeln!(w, "{a} {b} {}", tag.name())?;
        }
        Ok(())
    }
}

fn split(
    tri: [usize; 3],
    lin: Lineage,
    parent: usize,
    midpoint: &HashMap<(usize, usize), usize>,
    emit: &mut impl FnMut([usize; 3], Lineage),
) {
    let [a, b, c] = tri;
    match midpoint.get(&sorted(a, b)) {
        None => emit(tri, lin),
        Some(&m) => {
            let left = [c, a, m];
            let right = [b, c, m];
            split(left, lin.child(0, parent), parent, midpoint, emit);
            split(right, lin.child(1, parent), parent, midpoint, emit);
        }
    }
}

/// Structured triangulation of `[0, width] x [0, height]`; every cell is
/// split along its lower-left to upper-right diagonal, which becomes the
/// refinement edge of both halves. Regions come from `region_fn` at the
/// triangle centroid; all boundary edges are `Outer`.
pub fn build_rect_mesh(
    width: f64,
    height: f64,
    nx: usize,
    ny: usize,
    region_fn: impl Fn([f64; 2]) -> Region,
) -> Result<Mesh2D> {
    build_grid_mesh([0.0, 0.0], width, height, nx, ny, |p| Some(region_fn(p)))
}

/// Like `build_rect_mesh`, with a lower-left corner and a region function
/// that may drop triangles (`None`), e.g. to cut out an L-shape.
pub fn build_grid_mesh(
    origin: [f64; 2],
    width: f64,
    height: f64,
    nx: usize,
    ny: usize,
    region_fn: impl Fn([f64; 2]) -> Option<Region>,
) -> Result<Mesh2D> {
    if !(width > 0.0 && height > 0.0) || !width.is_finite() || !height.is_finite() {
        return Err(Error::InvalidGeometry(format!(
            "rectangle dimensions must be positive, got {width} x {height}"
        )));
    }
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidGeometry(format!(
            "cell counts must be at least 1, got {nx} x {ny}"
        )));
    }
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut all_vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            all_vertices.push([
                origin[0] + width * i as f64 / nx as f64,
                origin[1] + height * j as f64 / ny as f64,
            ]);
        }
    }
    let mut raw = Vec::new();
    let mut regions = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            for tri in [[c, a, b], [a, c, d]] {
                let p = [all_vertices[tri[0]], all_vertices[tri[1]], all_vertices[tri[2]]];
                let centroid = [
                    (p[0][0] + p[1][0] + p[2][0]) / 3.0,
                    (p[0][1] + p[1][1] + p[2][1]) / 3.0,
                ];
                if let Some(r) = region_fn(centroid) {
                    raw.push(tri);
                    regions.push(r);
                }
            }
        }
    }
    let mut used = vec![false; all_vertices.len()];
    for tri in &raw {
        for &v in tri {
            used[v] = true;
        }
    }
    // keep the lexicographic grid order for vertices
    let order: Vec<usize> = (0..all_vertices.len()).filter(|&v| used[v]).collect();
    let mut final_id = vec![usize::MAX; all_vertices.len()];
    let vertices: Vec<[f64; 2]> = order
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            final_id[v] = k;
            all_vertices[v]
        })
        .collect();
    let triangles = raw
        .iter()
        .map(|t| [final_id[t[0]], final_id[t[1]], final_id[t[2]]])
        .collect();
    Mesh2D::with_peaks(vertices, triangles, regions, &BTreeMap::new())
}

/// L-shaped conductor `[0, 2a]² \ (a, 2a]²` built from `2n x 2n` cells with
/// the upper-right quadrant removed. The re-entrant corner sits at `(a, a)`.
pub fn build_l_mesh(a: f64, n: usize) -> Result<Mesh2D> {
    build_grid_mesh([0.0, 0.0], 2.0 * a, 2.0 * a, 2 * n, 2 * n, |p| {
        if p[0] > a && p[1] > a {
            None
        } else {
            Some(Region::Conductor)
        }
    })
}

fn read_text(reader: impl BufRead) -> Result<Mesh2D> {
    let mut lines = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let body = line.split('#').next().unwrap_or("").trim().to_string();
        if !body.is_empty() {
            lines.push((i + 1, body));
        }
    }
    let mut it = lines.into_iter();
    let fail = |line: usize, message: String| Error::MeshFormat { line, message };
    let header = |expect: &str, it: &mut std::vec::IntoIter<(usize, String)>| -> Result<(usize, usize)> {
        let (ln, l) = it.next().ok_or_else(|| fail(0, format!("missing '{expect}' section")))?;
        let mut parts = l.split_whitespace();
        if parts.next() != Some(expect) {
            return Err(fail(ln, format!("expected '{expect} <count>'")));
        }
        let n = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| fail(ln, format!("bad count in '{expect}' header")))?;
        Ok((ln, n))
    };
    let (_, nv) = header("vertices", &mut it)?;
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = it.next().ok_or_else(|| fail(0, "truncated vertex list".into()))?;
        let v: Vec<f64> = l
            .split_whitespace()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| fail(ln, format!("bad coordinate: {e}")))?;
        if v.len() != 2 {
            return Err(fail(ln, format!("expected 2 coordinates, found {}", v.len())));
        }
        vertices.push([v[0], v[1]]);
    }
    let (_, nt) = header("triangles", &mut it)?;
    let mut triangles = Vec::with_capacity(nt);
    let mut regions = Vec::with_capacity(nt);
    for _ in 0..nt {
        let (ln, l) = it.next().ok_or_else(|| fail(0, "truncated triangle list".into()))?;
        let parts: Vec<&str> = l.split_whitespace().collect();
        if parts.len() != 4 {
            return Err(fail(ln, "expected '<v0> <v1> <v2> <region>'".into()));
        }
        let mut tri = [0usize; 3];
        for k in 0..3 {
            tri[k] = parts[k].parse().map_err(|e| fail(ln, format!("bad vertex index: {e}")))?;
            if tri[k] >= nv {
                return Err(fail(ln, format!("vertex index {} out of range", tri[k])));
            }
        }
        let region = Region::parse(parts[3]).ok_or_else(|| fail(ln, format!("unknown region '{}'", parts[3])))?;
        triangles.push(tri);
        regions.push(region);
    }
    let (_, nb) = header("boundary", &mut it)?;
    let mut boundary = BTreeMap::new();
    for _ in 0..nb {
        let (ln, l) = it.next().ok_or_else(|| fail(0, "truncated boundary list".into()))?;
        let parts: Vec<&str> = l.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(fail(ln, "expected '<v0> <v1> <tag>'".into()));
        }
        let a: usize = parts[0].parse().map_err(|e| fail(ln, format!("bad vertex index: {e}")))?;
        let b: usize = parts[1].parse().map_err(|e| fail(ln, format!("bad vertex index: {e}")))?;
        let tag = BoundaryTag::parse(parts[2]).ok_or_else(|| fail(ln, format!("unknown boundary tag '{}'", parts[2])))?;
        boundary.insert(sorted(a, b), tag);
    }
    if let Some((ln, _)) = it.next() {
        return Err(fail(ln, "unexpected trailing content".into()));
    }
    Mesh2D::new(vertices, triangles, regions, &boundary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square() -> Mesh2D {
        build_rect_mesh(1.0, 1.0, 1, 1, |_| Region::Conductor).unwrap()
    }

    #[test]
    fn rect_counts() {
        let m = unit_square();
        assert_eq!((m.n_triangles(), m.n_vertices(), m.n_edges()), (2, 4, 5));
        let m = build_rect_mesh(1.0, 1.0, 2, 2, |_| Region::Conductor).unwrap();
        assert_eq!((m.n_triangles(), m.n_vertices()), (8, 9));
        let m = build_rect_mesh(1.0, 1.0, 4, 4, |p| {
            if p[1] < 0.5 {
                Region::Conductor
            } else {
                Region::Air
            }
        })
        .unwrap();
        let nc = m.regions().iter().filter(|&&r| r == Region::Conductor).count();
        assert_eq!((nc, m.n_triangles() - nc), (16, 16));
    }

    #[test]
    fn rect_rejects_bad_dimensions() {
        assert!(matches!(
            build_rect_mesh(0.0, 1.0, 1, 1, |_| Region::Conductor),
            Err(Error::InvalidGeometry(_))
        ));
        assert!(matches!(
            build_rect_mesh(1.0, -1.0, 1, 1, |_| Region::Conductor),
            Err(Error::InvalidGeometry(_))
        ));
        assert!(build_rect_mesh(1.0, 1.0, 0, 1, |_| Region::Conductor).is_err());
    }

    #[test]
    fn refining_one_triangle_bisects_its_neighbour() {
        let m = unit_square();
        let r = m.refine(&[0]).unwrap();
        r.validate().unwrap();
        // four children of triangle 0, two of triangle 1
        assert_eq!(r.n_triangles(), 6);
        let from_one = (0..r.n_triangles()).filter(|&t| r.lineage(t).parent == Some(1)).count();
        assert_eq!(from_one, 2);
    }

    #[test]
    fn empty_marking_is_identity() {
        let m = build_rect_mesh(1.0, 1.0, 2, 2, |_| Region::Conductor).unwrap();
        let r = m.refine(&[]).unwrap();
        assert_eq!(r.vertices(), m.vertices());
        assert_eq!(r.triangles(), m.triangles());
    }

    #[test]
    fn unknown_triangle_is_rejected() {
        let m = unit_square();
        assert!(matches!(m.refine(&[2]), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn uniform_refinement_quadruples() {
        let m = unit_square();
        let r1 = m.uniform_refine();
        let r2 = r1.uniform_refine();
        assert_eq!(r1.n_triangles(), 8);
        assert_eq!(r2.n_triangles(), 32);
        r2.validate().unwrap();
    }

    #[test]
    fn tags_are_inherited() {
        let m = build_rect_mesh(1.0, 1.0, 2, 2, |p| {
            if p[0] < 0.5 {
                Region::Conductor
            } else {
                Region::Air
            }
        })
        .unwrap()
        .retag_boundary(|p| if p[0] < 1e-12 { BoundaryTag::Symmetry } else { BoundaryTag::Outer });
        let r = m.uniform_refine().uniform_refine();
        for t in 0..r.n_triangles() {
            let c = r.centroid(t);
            let expect = if c[0] < 0.5 { Region::Conductor } else { Region::Air };
            assert_eq!(r.region(t), expect);
        }
        for e in 0..r.n_edges() {
            if r.is_domain_boundary(e) {
                let mid = r.edge_midpoint(e);
                let expect = if mid[0] < 1e-12 { BoundaryTag::Symmetry } else { BoundaryTag::Outer };
                assert_eq!(r.boundary_tag(e), Some(expect));
            }
        }
    }

    #[test]
    fn l_mesh_shape() {
        let m = build_l_mesh(1.0, 2).unwrap();
        assert_eq!(m.n_triangles(), 24);
        let area: f64 = (0..m.n_triangles()).map(|t| m.area(t)).sum();
        assert!((area - 3.0).abs() < 1e-14);
        m.validate().unwrap();
    }

    #[test]
    fn text_round_trip() {
        let m = build_l_mesh(1.0, 1)
            .unwrap()
            .retag_boundary(|p| if p[1] < 1e-12 { BoundaryTag::Symmetry } else { BoundaryTag::Outer });
        let mut buf = Vec::new();
        m.write_text(&mut buf).unwrap();
        let back = Mesh2D::read_text(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(back.vertices(), m.vertices());
        assert_eq!(back.n_triangles(), m.n_triangles());
        assert_eq!(back.boundary_map(), m.boundary_map());
    }

    #[test]
    fn text_errors_carry_line_numbers() {
        let src = "# test\nvertices 3\n0 0\n1 0\n0 1\ntriangles 1\n0 1 7 conductor\nboundary 0\n";
        match Mesh2D::read_text(std::io::Cursor::new(src)) {
            Err(Error::MeshFormat { line, .. }) => assert_eq!(line, 7),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn clockwise_input_is_reoriented() {
        let v = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let m = Mesh2D::new(v, vec![[0, 2, 1]], vec![Region::Conductor], &BTreeMap::new()).unwrap();
        assert!(m.area(0) > 0.0);
        // peak opposite the hypotenuse
        assert_eq!(m.triangle(0)[2], 0);
    }
}
