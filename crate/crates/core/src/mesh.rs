//! Conforming triangulations of the square `(-w, w)^2` built by uniform red
//! refinement of a two-triangle initial partition.

use std::collections::{BTreeMap, HashMap};
use std::io::{self, BufRead, Write};
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{FlowError, Result};
use crate::scalar::{norm, sub, Real, Vec2};

static NEXT_MESH_ID: AtomicU64 = AtomicU64::new(1);

/// Opaque identity of a mesh, used to bind finite element functions to it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MeshId(u64);

impl MeshId {
    fn fresh() -> Self {
        MeshId(NEXT_MESH_ID.fetch_add(1, Ordering::Relaxed))
    }
}

/// Area and constant barycentric gradients of a P1 triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementGeometry<T> {
    pub area: T,
    pub grad_bary: [Vec2<T>; 3],
}

impl<T: Real> ElementGeometry<T> {
    /// Geometry of the triangle with the given corners. Fails on zero area.
    pub fn from_triangle(p: [Vec2<T>; 3]) -> Result<Self> {
        let det = signed_double_area(p);
        if det == T::zero() || !det.is_finite() {
            return Err(FlowError::DegenerateElement { element: 0, signed_area: det.as_f64() / 2.0 });
        }
        let [p0, p1, p2] = p;
        let grad_bary = [
            [(p1[1] - p2[1]) / det, (p2[0] - p1[0]) / det],
            [(p2[1] - p0[1]) / det, (p0[0] - p2[0]) / det],
            [(p0[1] - p1[1]) / det, (p1[0] - p0[0]) / det],
        ];
        Ok(ElementGeometry { area: det.abs() / T::lit(2.0), grad_bary })
    }
}

fn signed_double_area<T: Real>(p: [Vec2<T>; 3]) -> T {
    let a = sub(p[1], p[0]);
    let b = sub(p[2], p[0]);
    a[0] * b[1] - a[1] * b[0]
}

/// Immutable triangulation with cached element geometry.
#[derive(Debug, Clone)]
pub struct Mesh<T> {
    id: MeshId,
    vertices: Vec<Vec2<T>>,
    elements: Vec<[usize; 3]>,
    boundary: Vec<bool>,
    level: usize,
    half_width: T,
    geometry: Vec<ElementGeometry<T>>,
}

impl<T: Real> Mesh<T> {
    /// Assembles a mesh from raw parts. Every element must be positively oriented.
    pub fn from_parts(
        vertices: Vec<Vec2<T>>,
        elements: Vec<[usize; 3]>,
        boundary: Vec<bool>,
        level: usize,
        half_width: T,
    ) -> Result<Self> {
        if boundary.len() != vertices.len() {
            return Err(FlowError::DimensionMismatch { expected: vertices.len(), got: boundary.len() });
        }
        let mut geometry = Vec::with_capacity(elements.len());
        for (e, tri) in elements.iter().enumerate() {
            if let Some(&bad) = tri.iter().find(|&&i| i >= vertices.len()) {
                return Err(FlowError::InvalidParameter(format!(
                    "element {e} references vertex {bad} of {}",
                    vertices.len()
                )));
            }
            let p = tri.map(|i| vertices[i]);
            let det = signed_double_area(p);
            if !(det > T::zero()) {
                return Err(FlowError::DegenerateElement { element: e, signed_area: det.as_f64() / 2.0 });
            }
            geometry.push(ElementGeometry::from_triangle(p).map_err(|_| {
                FlowError::DegenerateElement { element: e, signed_area: det.as_f64() / 2.0 }
            })?);
        }
        Ok(Mesh { id: MeshId::fresh(), vertices, elements, boundary, level, half_width, geometry })
    }

    pub fn id(&self) -> MeshId {
        self.id
    }

    pub fn vertices(&self) -> &[Vec2<T>] {
        &self.vertices
    }

    pub fn elements(&self) -> &[[usize; 3]] {
        &self.elements
    }

    pub fn boundary_flags(&self) -> &[bool] {
        &self.boundary
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn half_width(&self) -> T {
        self.half_width
    }

    pub fn geometries(&self) -> &[ElementGeometry<T>] {
        &self.geometry
    }

    pub fn element_geometry(&self, e: usize) -> Result<&ElementGeometry<T>> {
        self.geometry
            .get(e)
            .ok_or(FlowError::ElementOutOfRange { index: e, n_elements: self.elements.len() })
    }

    pub fn element_corners(&self, e: usize) -> [Vec2<T>; 3] {
        self.elements[e].map(|i| self.vertices[i])
    }

    /// Maximal element diameter, i.e. the longest edge.
    pub fn mesh_size(&self) -> T {
        self.elements
            .iter()
            .flat_map(|t| {
                [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])]
                    .map(|(a, b)| norm(sub(self.vertices[a], self.vertices[b])))
            })
            .fold(T::zero(), T::max)
    }

    pub fn total_area(&self) -> T {
        self.geometry.iter().map(|g| g.area).sum()
    }

    /// Number of elements sharing each (sorted) edge.
    pub fn edge_multiplicities(&self) -> BTreeMap<(usize, usize), usize> {
        let mut edges = BTreeMap::new();
        for t in &self.elements {
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                *edges.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        edges
    }

    /// One red refinement step: every triangle is split into four children
    /// through its edge midpoints. Boundary flags follow the edge topology.
    pub fn refine(&self) -> Mesh<T> {
        let (vertices, elements, boundary) =
            red_refine(&self.vertices, &self.elements, &self.boundary);
        Mesh::from_parts(vertices, elements, boundary, self.level + 1, self.half_width)
            .expect("red refinement preserves orientation")
    }

    /// Vertex permutation induced by the reflection `(x1, x2) -> (x2, x1)`.
    pub fn diagonal_reflection_permutation(&self) -> Result<Vec<usize>> {
        let key = |p: Vec2<T>| ((p[0] + T::zero()).as_f64().to_bits(), (p[1] + T::zero()).as_f64().to_bits());
        let lookup: HashMap<(u64, u64), usize> =
            self.vertices.iter().enumerate().map(|(i, &p)| (key(p), i)).collect();
        self.vertices
            .iter()
            .enumerate()
            .map(|(i, p)| {
                lookup
                    .get(&key([p[1], p[0]]))
                    .copied()
                    .ok_or(FlowError::NotReflectionSymmetric { vertex: i })
            })
            .collect()
    }

    /// Writes the text dump: `n_v n_e`, then `x1 x2 flag` per vertex, then
    /// `i j k` per element (0-based).
    pub fn write_text<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{} {}", self.n_vertices(), self.n_elements())?;
        for (p, &b) in self.vertices.iter().zip(&self.boundary) {
            writeln!(w, "{} {} {}", p[0], p[1], u8::from(b))?;
        }
        for t in &self.elements {
            writeln!(w, "{} {} {}", t[0], t[1], t[2])?;
        }
        Ok(())
    }

    /// Reads the dump written by [`Mesh::write_text`]. The refinement level is
    /// not stored and comes back as zero; the half width is the largest
    /// coordinate magnitude.
    pub fn read_text<R: BufRead>(r: R) -> Result<Mesh<T>> {
        let bad = |msg: String| FlowError::InvalidParameter(format!("mesh dump: {msg}"));
        let mut lines = r.lines().map(|l| l.map_err(|e| bad(e.to_string())));
        let header = lines.next().ok_or_else(|| bad("missing header".into()))??;
        let counts: Vec<usize> = header
            .split_whitespace()
            .map(|s| s.parse().map_err(|_| bad(format!("bad header `{header}`"))))
            .collect::<Result<_>>()?;
        let [n_v, n_e] = counts[..] else {
            return Err(bad(format!("bad header `{header}`")));
        };
        let mut vertices = Vec::with_capacity(n_v);
        let mut boundary = Vec::with_capacity(n_v);
        for _ in 0..n_v {
            let line = lines.next().ok_or_else(|| bad("truncated vertex list".into()))??;
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 {
                return Err(bad(format!("bad vertex line `{line}`")));
            }
            let x: f64 = f[0].parse().map_err(|_| bad(format!("bad coordinate in `{line}`")))?;
            let y: f64 = f[1].parse().map_err(|_| bad(format!("bad coordinate in `{line}`")))?;
            vertices.push([T::lit(x), T::lit(y)]);
            boundary.push(f[2] == "1");
        }
        let mut elements = Vec::with_capacity(n_e);
        for _ in 0..n_e {
            let line = lines.next().ok_or_else(|| bad("truncated element list".into()))??;
            let idx: Vec<usize> = line
                .split_whitespace()
                .map(|s| s.parse().map_err(|_| bad(format!("bad element line `{line}`"))))
                .collect::<Result<_>>()?;
            let [i, j, k] = idx[..] else {
                return Err(bad(format!("bad element line `{line}`")));
            };
            elements.push([i, j, k]);
        }
        let half_width =
            vertices.iter().flat_map(|p| [p[0].abs(), p[1].abs()]).fold(T::zero(), T::max);
        Mesh::from_parts(vertices, elements, boundary, 0, half_width)
    }
}

fn red_refine<T: Real>(
    vertices: &[Vec2<T>],
    elements: &[[usize; 3]],
    boundary: &[bool],
) -> (Vec<Vec2<T>>, Vec<[usize; 3]>, Vec<bool>) {
    let mut edge_count: HashMap<(usize, usize), usize> = HashMap::new();
    for t in elements {
        for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
            *edge_count.entry((a.min(b), a.max(b))).or_insert(0) += 1;
        }
    }
    let mut new_vertices = vertices.to_vec();
    let mut new_boundary = boundary.to_vec();
    let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
    let half = T::lit(0.5);
    let mut mid = |a: usize, b: usize| -> usize {
        let key = (a.min(b), a.max(b));
        *midpoint.entry(key).or_insert_with(|| {
            let (pa, pb) = (vertices[a], vertices[b]);
            new_vertices.push([(pa[0] + pb[0]) * half, (pa[1] + pb[1]) * half]);
            new_boundary.push(edge_count[&key] == 1);
            new_vertices.len() - 1
        })
    };
    let mut new_elements = Vec::with_capacity(4 * elements.len());
    for &[a, b, c] in elements {
        let ab = mid(a, b);
        let bc = mid(b, c);
        let ca = mid(c, a);
        new_elements.push([a, ab, ca]);
        new_elements.push([ab, b, bc]);
        new_elements.push([ca, bc, c]);
        new_elements.push([ab, bc, ca]);
    }
    (new_vertices, new_elements, new_boundary)
}

/// Triangulation of `(-w, w)^2` after `level` red refinements of the split
/// along the diagonal from `(-w, -w)` to `(w, w)`. Vertices are numbered
/// lexicographically by `(x2, x1)`.
pub fn build_square_mesh<T: Real>(level: usize, half_width: T) -> Result<Mesh<T>> {
    if !(half_width > T::zero()) {
        return Err(FlowError::InvalidParameter(format!("half width must be positive, got {half_width}")));
    }
    let w = half_width;
    let mut vertices = vec![[-w, -w], [w, -w], [-w, w], [w, w]];
    let mut elements = vec![[0, 1, 3], [0, 3, 2]];
    let mut boundary = vec![true; 4];
    for _ in 0..level {
        let refined = red_refine(&vertices, &elements, &boundary);
        vertices = refined.0;
        elements = refined.1;
        boundary = refined.2;
    }

    let mut order: Vec<usize> = (0..vertices.len()).collect();
    order.sort_by(|&i, &j| {
        let (p, q) = (vertices[i], vertices[j]);
        p[1].partial_cmp(&q[1]).unwrap().then(p[0].partial_cmp(&q[0]).unwrap())
    });
    let mut new_index = vec![0; vertices.len()];
    for (new, &old) in order.iter().enumerate() {
        new_index[old] = new;
    }
    let vertices: Vec<_> = order.iter().map(|&i| vertices[i]).collect();
    let boundary: Vec<_> = order.iter().map(|&i| boundary[i]).collect();
    let elements: Vec<_> = elements.iter().map(|t| t.map(|i| new_index[i])).collect();
    Mesh::from_parts(vertices, elements, boundary, level, half_width)
}
