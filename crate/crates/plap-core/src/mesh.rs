//! Conforming 2D triangulations with newest-vertex bisection.
//!
//! A [`Mesh`] is immutable after construction; [`bisect`] returns a new mesh.
//! Every triangle stores its refinement edge (the local edge opposite the
//! newest vertex) and the index of its ancestor in the mesh the refinement
//! started from, which is what the piecewise-constant field transfer uses.

use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Vertex {
    pub x: f64,
    pub y: f64,
    pub on_boundary: bool,
    pub on_curved_boundary: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Triangle {
    /// Vertex indices in counterclockwise order.
    pub v: [usize; 3],
    /// Local index of the refinement edge (the edge opposite vertex `v[refinement_edge]`).
    pub refinement_edge: usize,
    /// Index of the triangle this one descends from in the previous mesh.
    pub parent: Option<usize>,
}

impl Triangle {
    /// Endpoints of local edge `e`, i.e. the edge opposite vertex `v[e]`.
    pub fn edge(&self, e: usize) -> (usize, usize) {
        (self.v[(e + 1) % 3], self.v[(e + 2) % 3])
    }
}

/// One geometric edge with its incident triangles.
#[derive(Debug, Clone)]
pub struct EdgeInfo {
    /// Endpoint vertex indices, `a < b`.
    pub a: usize,
    pub b: usize,
    pub triangles: (usize, Option<usize>),
    pub length: f64,
}

impl EdgeInfo {
    pub fn is_boundary(&self) -> bool {
        self.triangles.1.is_none()
    }

    /// The neighbor of `t` across this edge, `None` on the boundary.
    pub fn other_triangle(&self, t: usize) -> Option<usize> {
        if self.triangles.0 == t {
            self.triangles.1
        } else {
            Some(self.triangles.0)
        }
    }
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub vertices: Vec<Vertex>,
    pub triangles: Vec<Triangle>,
    edges: Vec<EdgeInfo>,
    edge_index: HashMap<(usize, usize), usize>,
    /// Sorted indices of all boundary vertices (homogeneous Dirichlet set).
    pub dirichlet_vertices: Vec<usize>,
}

fn ekey(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl Mesh {
    /// Validates orientation and conformity, derives edge adjacency and the
    /// boundary/Dirichlet bookkeeping. Curved-boundary flags on the input
    /// vertices are kept only where the vertex actually ends up on the boundary.
    pub fn build(mut vertices: Vec<Vertex>, triangles: Vec<Triangle>) -> Result<Mesh> {
        for (i, t) in triangles.iter().enumerate() {
            if t.v[0] == t.v[1] || t.v[1] == t.v[2] || t.v[0] == t.v[2] {
                return Err(Error::InvalidGeometry(format!(
                    "triangle {i} has repeated vertex indices"
                )));
            }
            for &vi in &t.v {
                if vi >= vertices.len() {
                    return Err(Error::InvalidGeometry(format!(
                        "triangle {i} references vertex {vi} out of range"
                    )));
                }
                if !vertices[vi].x.is_finite() || !vertices[vi].y.is_finite() {
                    return Err(Error::InvalidGeometry(format!(
                        "vertex {vi} has non-finite coordinates"
                    )));
                }
            }
            if t.refinement_edge > 2 {
                return Err(Error::InvalidGeometry(format!(
                    "triangle {i} has refinement edge index {}",
                    t.refinement_edge
                )));
            }
            let area = signed_area(&vertices, t);
            if area <= 0.0 {
                return Err(Error::InvalidGeometry(format!(
                    "triangle {i} has non-positive signed area {area}"
                )));
            }
        }

        let mut edge_index: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges: Vec<EdgeInfo> = Vec::new();
        for (ti, t) in triangles.iter().enumerate() {
            for e in 0..3 {
                let (a, b) = t.edge(e);
                let key = ekey(a, b);
                match edge_index.get(&key) {
                    None => {
                        let dx = vertices[a].x - vertices[b].x;
                        let dy = vertices[a].y - vertices[b].y;
                        edge_index.insert(key, edges.len());
                        edges.push(EdgeInfo {
                            a: key.0,
                            b: key.1,
                            triangles: (ti, None),
                            length: (dx * dx + dy * dy).sqrt(),
                        });
                    }
                    Some(&ei) => {
                        if edges[ei].triangles.1.is_some() {
                            return Err(Error::InvalidGeometry(format!(
                                "edge ({},{}) is shared by more than two triangles",
                                key.0, key.1
                            )));
                        }
                        edges[ei].triangles.1 = Some(ti);
                    }
                }
            }
        }

        for v in vertices.iter_mut() {
            v.on_boundary = false;
        }
        for e in edges.iter() {
            if e.is_boundary() {
                vertices[e.a].on_boundary = true;
                vertices[e.b].on_boundary = true;
            }
        }
        for v in vertices.iter_mut() {
            v.on_curved_boundary = v.on_curved_boundary && v.on_boundary;
        }
        let dirichlet_vertices: Vec<usize> = (0..vertices.len())
            .filter(|&i| vertices[i].on_boundary)
            .collect();

        Ok(Mesh {
            vertices,
            triangles,
            edges,
            edge_index,
            dirichlet_vertices,
        })
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn edges(&self) -> &[EdgeInfo] {
        &self.edges
    }

    pub fn edge_lookup(&self, a: usize, b: usize) -> Option<&EdgeInfo> {
        self.edge_index.get(&ekey(a, b)).map(|&i| &self.edges[i])
    }

    pub fn is_dirichlet(&self, v: usize) -> bool {
        self.vertices[v].on_boundary
    }

    /// Non-Dirichlet vertex indices, ascending.
    pub fn free_vertices(&self) -> Vec<usize> {
        (0..self.n_vertices())
            .filter(|&i| !self.is_dirichlet(i))
            .collect()
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        signed_area(&self.vertices, &self.triangles[t])
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_triangles()).map(|t| self.triangle_area(t)).sum()
    }

    /// Smallest interior angle over all triangles, in radians.
    pub fn min_angle(&self) -> f64 {
        let mut min = f64::INFINITY;
        for t in &self.triangles {
            let p: Vec<(f64, f64)> = t
                .v
                .iter()
                .map(|&i| (self.vertices[i].x, self.vertices[i].y))
                .collect();
            for i in 0..3 {
                let (ax, ay) = (p[(i + 1) % 3].0 - p[i].0, p[(i + 1) % 3].1 - p[i].1);
                let (bx, by) = (p[(i + 2) % 3].0 - p[i].0, p[(i + 2) % 3].1 - p[i].1);
                let dot = ax * bx + ay * by;
                let cross = (ax * by - ay * bx).abs();
                min = min.min(cross.atan2(dot));
            }
        }
        min
    }
}

fn signed_area(vertices: &[Vertex], t: &Triangle) -> f64 {
    let (p0, p1, p2) = (&vertices[t.v[0]], &vertices[t.v[1]], &vertices[t.v[2]]);
    0.5 * ((p1.x - p0.x) * (p2.y - p0.y) - (p2.x - p0.x) * (p1.y - p0.y))
}

/// Area, P1 hat-function gradients, edge lengths and diameter of one element.
#[derive(Debug, Clone)]
pub struct ElementGeometry {
    pub area: f64,
    /// `grad[i]` is the constant gradient of the hat function of vertex `v[i]`.
    pub grad: [[f64; 2]; 3],
    /// `edge_lengths[i]` is the length of the edge opposite vertex `v[i]`.
    pub edge_lengths: [f64; 3],
    /// Longest edge.
    pub diameter: f64,
}

pub fn element_geometry(mesh: &Mesh, t: usize) -> Result<ElementGeometry> {
    let tri = &mesh.triangles[t];
    let p: Vec<(f64, f64)> = tri
        .v
        .iter()
        .map(|&i| (mesh.vertices[i].x, mesh.vertices[i].y))
        .collect();
    let area = mesh.triangle_area(t);
    if area <= 0.0 || !area.is_finite() {
        return Err(Error::InvalidGeometry(format!(
            "degenerate triangle {t} with area {area}"
        )));
    }
    let mut grad = [[0.0; 2]; 3];
    let mut edge_lengths = [0.0; 3];
    for i in 0..3 {
        let (xa, ya) = p[(i + 1) % 3];
        let (xb, yb) = p[(i + 2) % 3];
        // grad of barycentric coordinate i: rotated opposite edge over 2*area
        grad[i] = [(ya - yb) / (2.0 * area), (xb - xa) / (2.0 * area)];
        edge_lengths[i] = ((xb - xa) * (xb - xa) + (yb - ya) * (yb - ya)).sqrt();
    }
    let diameter = edge_lengths.iter().cloned().fold(0.0, f64::max);
    Ok(ElementGeometry {
        area,
        grad,
        edge_lengths,
        diameter,
    })
}

/// Fan triangulation of the regular `n_boundary`-gon inscribed in the unit
/// circle, center vertex at the origin. All rim vertices are flagged as lying
/// on the curved boundary so refinement projects new midpoints back onto the
/// circle.
pub fn make_unit_disk_mesh(n_boundary: usize) -> Result<Mesh> {
    if n_boundary < 3 {
        return Err(Error::InvalidGeometry(format!(
            "disk mesh needs at least 3 boundary vertices, got {n_boundary}"
        )));
    }
    let mut vertices = vec![Vertex {
        x: 0.0,
        y: 0.0,
        on_boundary: false,
        on_curved_boundary: false,
    }];
    for k in 0..n_boundary {
        let theta = 2.0 * std::f64::consts::PI * (k as f64) / (n_boundary as f64);
        vertices.push(Vertex {
            x: theta.cos(),
            y: theta.sin(),
            on_boundary: true,
            on_curved_boundary: true,
        });
    }
    let mut triangles = Vec::with_capacity(n_boundary);
    for k in 0..n_boundary {
        let v = [0, 1 + k, 1 + (k + 1) % n_boundary];
        let refinement_edge = longest_edge(&vertices, &v);
        triangles.push(Triangle {
            v,
            refinement_edge,
            parent: None,
        });
    }
    Mesh::build(vertices, triangles)
}

/// Initial 12-triangle mesh of the L-shape `[-1,1]^2 \ [0,1)^2`: three unit
/// squares, each split into four triangles from its center (criss-cross).
pub fn make_lshape_mesh() -> Result<Mesh> {
    let grid = [
        (-1.0, 1.0),
        (0.0, 1.0),
        (-1.0, 0.0),
        (0.0, 0.0),
        (1.0, 0.0),
        (-1.0, -1.0),
        (0.0, -1.0),
        (1.0, -1.0),
    ];
    let centers = [(-0.5, 0.5), (-0.5, -0.5), (0.5, -0.5)];
    let mut vertices: Vec<Vertex> = grid
        .iter()
        .chain(centers.iter())
        .map(|&(x, y)| Vertex {
            x,
            y,
            on_boundary: false,
            on_curved_boundary: false,
        })
        .collect();
    // (corner loop ccw, center index) per unit square
    let squares: [([usize; 4], usize); 3] = [
        ([2, 3, 1, 0], 8),  // upper-left square
        ([5, 6, 3, 2], 9),  // lower-left square
        ([6, 7, 4, 3], 10), // lower-right square
    ];
    let mut triangles = Vec::with_capacity(12);
    for (corners, c) in squares {
        for i in 0..4 {
            let v = [c, corners[i], corners[(i + 1) % 4]];
            // refinement edge of a criss-cross triangle is the square side,
            // which is the edge opposite the center vertex (local index 0)
            triangles.push(Triangle {
                v,
                refinement_edge: 0,
                parent: None,
            });
        }
    }
    let mesh = Mesh::build(vertices.drain(..).collect(), triangles)?;
    Ok(mesh)
}

fn longest_edge(vertices: &[Vertex], v: &[usize; 3]) -> usize {
    let mut best = 0;
    let mut best_len = -1.0;
    for e in 0..3 {
        let a = v[(e + 1) % 3];
        let b = v[(e + 2) % 3];
        let dx = vertices[a].x - vertices[b].x;
        let dy = vertices[a].y - vertices[b].y;
        let len = dx * dx + dy * dy;
        if len > best_len {
            best_len = len;
            best = e;
        }
    }
    best
}

/// Newest-vertex bisection of the marked triangles plus the minimal closure
/// that keeps the result conforming.
///
/// Old vertices keep their indices; every new triangle records the index of
/// its ancestor in `mesh`. Midpoints of boundary edges with both endpoints on
/// the curved boundary are projected radially onto the unit circle.
pub fn bisect(mesh: &Mesh, marked: &[usize]) -> Result<Mesh> {
    for &m in marked {
        if m >= mesh.n_triangles() {
            return Err(Error::InvalidGeometry(format!(
                "marked triangle index {m} out of range"
            )));
        }
    }

    // edges to bisect: refinement edges of marked triangles plus closure
    let mut refine: HashSet<(usize, usize)> = HashSet::new();
    for &m in marked {
        let t = &mesh.triangles[m];
        let (a, b) = t.edge(t.refinement_edge);
        refine.insert(ekey(a, b));
    }
    loop {
        let mut changed = false;
        for t in &mesh.triangles {
            let (ra, rb) = t.edge(t.refinement_edge);
            let rkey = ekey(ra, rb);
            if refine.contains(&rkey) {
                continue;
            }
            let touched = (0..3).any(|e| {
                let (a, b) = t.edge(e);
                refine.contains(&ekey(a, b))
            });
            if touched {
                refine.insert(rkey);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let mut vertices = mesh.vertices.clone();
    let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
    // fixed ordering of the new vertices: set iteration order is randomized
    // per process, and output meshes must be reproducible run to run
    let mut refine_sorted: Vec<(usize, usize)> = refine.iter().copied().collect();
    refine_sorted.sort_unstable();
    for key in refine_sorted {
        let (a, b) = key;
        let va = &mesh.vertices[a];
        let vb = &mesh.vertices[b];
        let mut x = 0.5 * (va.x + vb.x);
        let mut y = 0.5 * (va.y + vb.y);
        let edge = mesh
            .edge_lookup(a, b)
            .ok_or_else(|| Error::InvalidGeometry(format!("edge ({a},{b}) not in mesh")))?;
        let curved =
            edge.is_boundary() && va.on_curved_boundary && vb.on_curved_boundary;
        if curved {
            let r = (x * x + y * y).sqrt();
            x /= r;
            y /= r;
        }
        midpoint.insert(key, vertices.len());
        vertices.push(Vertex {
            x,
            y,
            on_boundary: false, // recomputed by Mesh::build
            on_curved_boundary: curved,
        });
    }

    let mut triangles: Vec<Triangle> = Vec::with_capacity(mesh.n_triangles() + 2 * refine.len());
    for (ti, t) in mesh.triangles.iter().enumerate() {
        let root = Triangle {
            v: t.v,
            refinement_edge: t.refinement_edge,
            parent: Some(ti),
        };
        subdivide(&root, &refine, &midpoint, &mut triangles);
    }

    Mesh::build(vertices, triangles)
}

/// Recursively bisects `tri` while its refinement edge is in the refine set.
/// The set only ever contains edges of the input mesh, so the recursion depth
/// is at most two per original triangle.
fn subdivide(
    tri: &Triangle,
    refine: &HashSet<(usize, usize)>,
    midpoint: &HashMap<(usize, usize), usize>,
    out: &mut Vec<Triangle>,
) {
    let r = tri.refinement_edge;
    let (a, b) = tri.edge(r);
    let key = ekey(a, b);
    if !refine.contains(&key) {
        out.push(tri.clone());
        return;
    }
    let m = midpoint[&key];
    let peak = tri.v[r];
    // (peak, a, b) is a ccw rotation of tri.v; the children keep orientation
    // and their refinement edges are the two remaining old edges.
    let child1 = Triangle {
        v: [peak, a, m],
        refinement_edge: 2, // edge opposite the new vertex m: (peak, a)
        parent: tri.parent,
    };
    let child2 = Triangle {
        v: [peak, m, b],
        refinement_edge: 1, // edge opposite the new vertex m: (b, peak)
        parent: tri.parent,
    };
    subdivide(&child1, refine, midpoint, out);
    subdivide(&child2, refine, midpoint, out);
}
