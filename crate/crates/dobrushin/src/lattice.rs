//! Geometry of ℤ³: cells, faces, edges, adjacency, projections and boxes.
//!
//! Every coordinate is stored *doubled*, so that the half-integer midpoints of
//! cells and faces become integers and all geometry is exact integer
//! arithmetic:
//!
//! * a cell midpoint has three odd doubled coordinates;
//! * a face midpoint has exactly one even doubled coordinate, along its normal
//!   axis;
//! * a point of the reference plane `𝓛₀` is addressed by its doubled `(x, y)`;
//!   both odd means a face of `𝓛₀`, exactly one even means an edge.
//!
//! The cell with integer index `(i, j, k)` has midpoint `(i+½, j+½, k+½)`, i.e.
//! doubled coordinates `(2i+1, 2j+1, 2k+1)`.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised by lattice constructors and predicates.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LatticeError {
    #[error("doubled coordinates ({0}, {1}, {2}) are not a cell midpoint")]
    NotACell(i32, i32, i32),
    #[error("doubled coordinates ({0}, {1}, {2}) are not a face midpoint")]
    NotAFace(i32, i32, i32),
    #[error("doubled coordinates ({0}, {1}) are not a face or edge of the reference plane")]
    NotAProjection(i32, i32),
    #[error("adjacency of an element with itself is undefined")]
    IdenticalInputs,
    #[error("adjacency is only defined between two cells or two faces")]
    MixedKinds,
    #[error("cells {0:?} and {1:?} are not adjacent")]
    NotAdjacent(Cell, Cell),
    #[error("invalid box: {0}")]
    InvalidBox(String),
}

/// Normal direction of a face.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Axis {
    X = 1,
    Y = 2,
    Z = 3,
}

impl Axis {
    /// Numeric label in `{1, 2, 3}`.
    pub fn number(self) -> u8 {
        self as u8
    }
}

/// A unit cube of ℤ³, addressed by its doubled midpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub x: i32,
    pub y: i32,
    pub z: i32,
}

impl Cell {
    /// Checked constructor from doubled coordinates.
    pub fn new(x: i32, y: i32, z: i32) -> Result<Self, LatticeError> {
        if x & 1 == 1 && y & 1 == 1 && z & 1 == 1 {
            Ok(Cell { x, y, z })
        } else {
            Err(LatticeError::NotACell(x, y, z))
        }
    }

    /// The cell with integer index `(i, j, k)`, midpoint `(i+½, j+½, k+½)`.
    pub const fn at(i: i32, j: i32, k: i32) -> Self {
        Cell {
            x: 2 * i + 1,
            y: 2 * j + 1,
            z: 2 * k + 1,
        }
    }

    /// Integer index `(i, j, k)` of the cell.
    pub fn index(self) -> (i32, i32, i32) {
        ((self.x - 1) >> 1, (self.y - 1) >> 1, (self.z - 1) >> 1)
    }

    /// Doubled height of the midpoint (an odd integer).
    pub fn height2(self) -> i32 {
        self.z
    }

    /// Translate by a doubled offset (components must be even).
    pub fn shifted(self, dx: i32, dy: i32, dz: i32) -> Self {
        debug_assert!(dx & 1 == 0 && dy & 1 == 0 && dz & 1 == 0);
        Cell {
            x: self.x + dx,
            y: self.y + dy,
            z: self.z + dz,
        }
    }

    /// The cell directly above.
    pub fn above(self) -> Self {
        self.shifted(0, 0, 2)
    }

    /// The cell directly below.
    pub fn below(self) -> Self {
        self.shifted(0, 0, -2)
    }

    /// Projection onto `𝓛₀` (always a face).
    pub fn project(self) -> Proj {
        Proj {
            x: self.x,
            y: self.y,
        }
    }

    /// Horizontal face on top of the cell.
    pub fn top_face(self) -> Face {
        Face::raw(self.x, self.y, self.z + 1)
    }

    /// Horizontal face below the cell.
    pub fn bottom_face(self) -> Face {
        Face::raw(self.x, self.y, self.z - 1)
    }

    /// The six bounding faces.
    pub fn bounding_faces(self) -> [Face; 6] {
        let (x, y, z) = (self.x, self.y, self.z);
        [
            Face::raw(x - 1, y, z),
            Face::raw(x + 1, y, z),
            Face::raw(x, y - 1, z),
            Face::raw(x, y + 1, z),
            Face::raw(x, y, z - 1),
            Face::raw(x, y, z + 1),
        ]
    }

    /// The four vertical bounding faces.
    pub fn side_faces(self) -> [Face; 4] {
        let (x, y, z) = (self.x, self.y, self.z);
        [
            Face::raw(x - 1, y, z),
            Face::raw(x + 1, y, z),
            Face::raw(x, y - 1, z),
            Face::raw(x, y + 1, z),
        ]
    }

    /// The 26 doubled offsets to *-adjacent cells (shared bounding vertex).
    pub fn star_offsets() -> &'static [(i32, i32, i32)] {
        static OFFSETS: OnceLock<Vec<(i32, i32, i32)>> = OnceLock::new();
        OFFSETS.get_or_init(|| {
            let mut v = Vec::with_capacity(26);
            for dx in [-2, 0, 2] {
                for dy in [-2, 0, 2] {
                    for dz in [-2, 0, 2] {
                        if (dx, dy, dz) != (0, 0, 0) {
                            v.push((dx, dy, dz));
                        }
                    }
                }
            }
            v
        })
    }

    /// The 6 doubled offsets to face-adjacent cells.
    pub const NEIGHBOR_OFFSETS: [(i32, i32, i32); 6] = [
        (-2, 0, 0),
        (2, 0, 0),
        (0, -2, 0),
        (0, 2, 0),
        (0, 0, -2),
        (0, 0, 2),
    ];

    fn vertices(self) -> [(i32, i32, i32); 8] {
        let mut out = [(0, 0, 0); 8];
        let mut n = 0;
        for dx in [-1, 1] {
            for dy in [-1, 1] {
                for dz in [-1, 1] {
                    out[n] = (self.x + dx, self.y + dy, self.z + dz);
                    n += 1;
                }
            }
        }
        out
    }
}

/// A unit square of ℤ³, addressed by its normal axis and doubled midpoint.
///
/// The derived order (axis, x, y, z) is the canonical face order used for
/// deterministic wall indexing and tie-breaking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Face {
    pub axis: Axis,
    pub x: i32,
    pub y: i32,
    pub z: i32,
}

impl Face {
    /// Checked constructor from doubled coordinates; the axis is the unique
    /// even coordinate.
    pub fn new(x: i32, y: i32, z: i32) -> Result<Self, LatticeError> {
        match (x & 1, y & 1, z & 1) {
            (0, 1, 1) | (1, 0, 1) | (1, 1, 0) => Ok(Face::raw(x, y, z)),
            _ => Err(LatticeError::NotAFace(x, y, z)),
        }
    }

    /// Unchecked constructor; the caller guarantees exactly one even coordinate.
    pub(crate) fn raw(x: i32, y: i32, z: i32) -> Self {
        let axis = if x & 1 == 0 {
            Axis::X
        } else if y & 1 == 0 {
            Axis::Y
        } else {
            Axis::Z
        };
        debug_assert!(
            [x & 1, y & 1, z & 1].iter().filter(|&&b| b == 0).count() == 1,
            "not a face: ({x}, {y}, {z})"
        );
        Face { axis, x, y, z }
    }

    /// The face of `𝓛₀` below the column of cells with horizontal index `(i, j)`.
    pub const fn l0(i: i32, j: i32) -> Self {
        Face {
            axis: Axis::Z,
            x: 2 * i + 1,
            y: 2 * j + 1,
            z: 0,
        }
    }

    /// The face of `𝓛₀` with doubled planar coordinates `(x, y)` (both odd).
    pub fn l0_at(p: Proj) -> Self {
        debug_assert!(p.kind() == ProjKind::Face);
        Face {
            axis: Axis::Z,
            x: p.x,
            y: p.y,
            z: 0,
        }
    }

    pub fn is_horizontal(self) -> bool {
        self.axis == Axis::Z
    }

    /// Doubled height of the midpoint.
    pub fn height2(self) -> i32 {
        self.z
    }

    /// Translate by a doubled offset (components must be even).
    pub fn shifted(self, dx: i32, dy: i32, dz: i32) -> Self {
        debug_assert!(dx & 1 == 0 && dy & 1 == 0 && dz & 1 == 0);
        Face {
            axis: self.axis,
            x: self.x + dx,
            y: self.y + dy,
            z: self.z + dz,
        }
    }

    /// The two cells sharing this face: (lower side, upper side) along the normal.
    pub fn cells(self) -> (Cell, Cell) {
        match self.axis {
            Axis::X => (
                Cell {
                    x: self.x - 1,
                    y: self.y,
                    z: self.z,
                },
                Cell {
                    x: self.x + 1,
                    y: self.y,
                    z: self.z,
                },
            ),
            Axis::Y => (
                Cell {
                    x: self.x,
                    y: self.y - 1,
                    z: self.z,
                },
                Cell {
                    x: self.x,
                    y: self.y + 1,
                    z: self.z,
                },
            ),
            Axis::Z => (
                Cell {
                    x: self.x,
                    y: self.y,
                    z: self.z - 1,
                },
                Cell {
                    x: self.x,
                    y: self.y,
                    z: self.z + 1,
                },
            ),
        }
    }

    /// The four bounding vertices (doubled, all even).
    pub fn vertices(self) -> [(i32, i32, i32); 4] {
        let (x, y, z) = (self.x, self.y, self.z);
        match self.axis {
            Axis::X => [
                (x, y - 1, z - 1),
                (x, y - 1, z + 1),
                (x, y + 1, z - 1),
                (x, y + 1, z + 1),
            ],
            Axis::Y => [
                (x - 1, y, z - 1),
                (x - 1, y, z + 1),
                (x + 1, y, z - 1),
                (x + 1, y, z + 1),
            ],
            Axis::Z => [
                (x - 1, y - 1, z),
                (x - 1, y + 1, z),
                (x + 1, y - 1, z),
                (x + 1, y + 1, z),
            ],
        }
    }

    /// Projection onto `𝓛₀`: a face for horizontal faces, an edge otherwise.
    pub fn project(self) -> Proj {
        Proj {
            x: self.x,
            y: self.y,
        }
    }

    /// Doubled offsets to every *-adjacent face (sharing a bounding vertex),
    /// for a face with the given normal axis.
    pub fn star_offsets(axis: Axis) -> &'static [(i32, i32, i32)] {
        static OFFSETS: OnceLock<[Vec<(i32, i32, i32)>; 3]> = OnceLock::new();
        &OFFSETS.get_or_init(|| Face::offset_table(1))[axis as usize - 1]
    }

    /// Doubled offsets to every adjacent face (sharing a bounding edge).
    pub fn edge_offsets(axis: Axis) -> &'static [(i32, i32, i32)] {
        static OFFSETS: OnceLock<[Vec<(i32, i32, i32)>; 3]> = OnceLock::new();
        &OFFSETS.get_or_init(|| Face::offset_table(2))[axis as usize - 1]
    }

    /// Brute-force table of offsets to faces sharing at least `min_shared`
    /// bounding vertices, per normal axis.
    fn offset_table(min_shared: usize) -> [Vec<(i32, i32, i32)>; 3] {
        {
            let build = |base: Face| {
                let mut v = Vec::new();
                for dx in -2..=2 {
                    for dy in -2..=2 {
                        for dz in -2..=2 {
                            if (dx, dy, dz) == (0, 0, 0) {
                                continue;
                            }
                            let Ok(other) = Face::new(base.x + dx, base.y + dy, base.z + dz)
                            else {
                                continue;
                            };
                            if shared_vertices(&base.vertices(), &other.vertices()) >= min_shared
                            {
                                v.push((dx, dy, dz));
                            }
                        }
                    }
                }
                v
            };
            [
                build(Face::raw(0, 1, 1)),
                build(Face::raw(1, 0, 1)),
                build(Face::raw(1, 1, 0)),
            ]
        }
    }
}

/// A face or an edge of the reference plane `𝓛₀`, by doubled planar coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Proj {
    pub x: i32,
    pub y: i32,
}

/// Whether a [`Proj`] is a face or an edge of `𝓛₀`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProjKind {
    Face,
    Edge,
}

impl Proj {
    /// Checked constructor: at least one coordinate must be odd.
    pub fn new(x: i32, y: i32) -> Result<Self, LatticeError> {
        if x & 1 == 0 && y & 1 == 0 {
            Err(LatticeError::NotAProjection(x, y))
        } else {
            Ok(Proj { x, y })
        }
    }

    pub fn kind(self) -> ProjKind {
        if self.x & 1 == 1 && self.y & 1 == 1 {
            ProjKind::Face
        } else {
            ProjKind::Edge
        }
    }

    /// Squared distance between midpoints, in doubled units (4× the true value).
    pub fn dist2(self, other: Proj) -> i64 {
        let dx = (self.x - other.x) as i64;
        let dy = (self.y - other.y) as i64;
        dx * dx + dy * dy
    }

    /// For a face: its four bounding edges. For an edge: its two adjacent faces.
    pub fn incident(self) -> Vec<Proj> {
        match self.kind() {
            ProjKind::Face => vec![
                Proj {
                    x: self.x - 1,
                    y: self.y,
                },
                Proj {
                    x: self.x + 1,
                    y: self.y,
                },
                Proj {
                    x: self.x,
                    y: self.y - 1,
                },
                Proj {
                    x: self.x,
                    y: self.y + 1,
                },
            ],
            ProjKind::Edge => {
                if self.x & 1 == 0 {
                    vec![
                        Proj {
                            x: self.x - 1,
                            y: self.y,
                        },
                        Proj {
                            x: self.x + 1,
                            y: self.y,
                        },
                    ]
                } else {
                    vec![
                        Proj {
                            x: self.x,
                            y: self.y - 1,
                        },
                        Proj {
                            x: self.x,
                            y: self.y + 1,
                        },
                    ]
                }
            }
        }
    }

    /// The four faces of `𝓛₀` sharing an edge with this face.
    pub fn face_neighbors(self) -> [Proj; 4] {
        debug_assert!(self.kind() == ProjKind::Face);
        [
            Proj {
                x: self.x - 2,
                y: self.y,
            },
            Proj {
                x: self.x + 2,
                y: self.y,
            },
            Proj {
                x: self.x,
                y: self.y - 2,
            },
            Proj {
                x: self.x,
                y: self.y + 2,
            },
        ]
    }
}

/// Adjacency class of two distinct cells or two distinct faces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Adjacency {
    Disjoint,
    /// Cells at midpoint distance 1, or faces sharing a bounding edge.
    Adjacent,
    /// Sharing a bounding vertex but not adjacent.
    StarAdjacent,
}

/// A cell or a face, for the kind-generic adjacency predicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Site {
    Cell(Cell),
    Face(Face),
}

fn shared_vertices<const N: usize>(a: &[(i32, i32, i32); N], b: &[(i32, i32, i32); N]) -> usize {
    a.iter().filter(|v| b.contains(v)).count()
}

/// Classify two cells or two faces as disjoint, adjacent or *-adjacent.
pub fn adjacency_class(a: Site, b: Site) -> Result<Adjacency, LatticeError> {
    match (a, b) {
        (Site::Cell(a), Site::Cell(b)) => cell_adjacency(a, b),
        (Site::Face(a), Site::Face(b)) => face_adjacency(a, b),
        _ => Err(LatticeError::MixedKinds),
    }
}

/// Adjacency of two cells: adjacent iff they share a face.
pub fn cell_adjacency(a: Cell, b: Cell) -> Result<Adjacency, LatticeError> {
    if a == b {
        return Err(LatticeError::IdenticalInputs);
    }
    let d = [
        (a.x - b.x).abs(),
        (a.y - b.y).abs(),
        (a.z - b.z).abs(),
    ];
    if d.iter().any(|&c| c > 2) {
        return Ok(Adjacency::Disjoint);
    }
    if d.iter().filter(|&&c| c == 2).count() == 1 {
        Ok(Adjacency::Adjacent)
    } else {
        Ok(Adjacency::StarAdjacent)
    }
}

/// Adjacency of two faces: adjacent iff they share a bounding edge.
pub fn face_adjacency(a: Face, b: Face) -> Result<Adjacency, LatticeError> {
    if a == b {
        return Err(LatticeError::IdenticalInputs);
    }
    Ok(match shared_vertices(&a.vertices(), &b.vertices()) {
        0 => Adjacency::Disjoint,
        1 => Adjacency::StarAdjacent,
        _ => Adjacency::Adjacent,
    })
}

/// Brute-force vertex-set comparison for cells, used as an oracle in tests.
pub fn cell_adjacency_by_vertices(a: Cell, b: Cell) -> Adjacency {
    match shared_vertices(&a.vertices(), &b.vertices()) {
        0 => Adjacency::Disjoint,
        4 => Adjacency::Adjacent,
        _ => Adjacency::StarAdjacent,
    }
}

/// The unique face shared by two adjacent cells.
pub fn faces_between(a: Cell, b: Cell) -> Result<Face, LatticeError> {
    if a != b && cell_adjacency(a, b)? == Adjacency::Adjacent {
        Ok(Face::raw((a.x + b.x) / 2, (a.y + b.y) / 2, (a.z + b.z) / 2))
    } else {
        Err(LatticeError::NotAdjacent(a, b))
    }
}

/// A finite box of cells given by inclusive integer index ranges.
///
/// The centred box `Λ_{n,m,h}` has `i ∈ [−n, n]`, `j ∈ [−m, m]`, `k ∈ [−h, h]`,
/// so the origin face `o = (½, ½, 0)` sits at the centre of its footprint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoxDims {
    pub x_lo: i32,
    pub x_hi: i32,
    pub y_lo: i32,
    pub y_hi: i32,
    pub z_lo: i32,
    pub z_hi: i32,
}

impl BoxDims {
    /// The centred box with horizontal half-extents `n, m` and vertical
    /// truncation half-extent `h_cap`.
    pub fn lambda(n: u32, m: u32, h_cap: u32) -> Result<Self, LatticeError> {
        if n == 0 || m == 0 || h_cap == 0 {
            return Err(LatticeError::InvalidBox(format!(
                "half-extents must be positive, got n={n}, m={m}, h_cap={h_cap}"
            )));
        }
        let (n, m, h) = (n as i32, m as i32, h_cap as i32);
        Ok(BoxDims {
            x_lo: -n,
            x_hi: n,
            y_lo: -m,
            y_hi: m,
            z_lo: -h,
            z_hi: h,
        })
    }

    /// A general box; the cells must straddle the reference plane
    /// (`z_lo < 0 ≤ z_hi`) so that the Dobrushin interface lives inside it.
    pub fn general(
        x: (i32, i32),
        y: (i32, i32),
        z: (i32, i32),
    ) -> Result<Self, LatticeError> {
        if x.0 > x.1 || y.0 > y.1 || z.0 > z.1 {
            return Err(LatticeError::InvalidBox("empty index range".into()));
        }
        if !(z.0 < 0 && z.1 >= 0) {
            return Err(LatticeError::InvalidBox(
                "the box must contain cells on both sides of the reference plane".into(),
            ));
        }
        Ok(BoxDims {
            x_lo: x.0,
            x_hi: x.1,
            y_lo: y.0,
            y_hi: y.1,
            z_lo: z.0,
            z_hi: z.1,
        })
    }

    /// Default truncation height `4·⌈log(2n)/β⌉ + 8`.
    pub fn default_h_cap(n: u32, beta: f64) -> u32 {
        4 * ((2.0 * n as f64).ln() / beta).ceil().max(0.0) as u32 + 8
    }

    pub fn nx(&self) -> usize {
        (self.x_hi - self.x_lo + 1) as usize
    }
    pub fn ny(&self) -> usize {
        (self.y_hi - self.y_lo + 1) as usize
    }
    pub fn nz(&self) -> usize {
        (self.z_hi - self.z_lo + 1) as usize
    }

    /// Horizontal half-extent `n` (for centred boxes).
    pub fn n(&self) -> i32 {
        (self.x_hi - self.x_lo) / 2
    }
    /// Horizontal half-extent `m` (for centred boxes).
    pub fn m(&self) -> i32 {
        (self.y_hi - self.y_lo) / 2
    }
    /// Vertical half-extent (for centred boxes).
    pub fn h_cap(&self) -> i32 {
        (self.z_hi - self.z_lo) / 2
    }

    pub fn cell_count(&self) -> usize {
        self.nx() * self.ny() * self.nz()
    }

    /// Whether the box is mapped to itself by `z ↦ −z`.
    pub fn is_vertically_symmetric(&self) -> bool {
        self.z_lo == -self.z_hi - 1
    }

    pub fn contains_cell(&self, c: Cell) -> bool {
        let (i, j, k) = c.index();
        i >= self.x_lo
            && i <= self.x_hi
            && j >= self.y_lo
            && j <= self.y_hi
            && k >= self.z_lo
            && k <= self.z_hi
    }

    /// Canonical position of a cell (lexicographic in `(x, y, z)`).
    pub fn cell_index(&self, c: Cell) -> Option<usize> {
        if !self.contains_cell(c) {
            return None;
        }
        let (i, j, k) = c.index();
        Some(
            (((i - self.x_lo) as usize * self.ny()) + (j - self.y_lo) as usize) * self.nz()
                + (k - self.z_lo) as usize,
        )
    }

    /// Inverse of [`BoxDims::cell_index`].
    pub fn cell_at(&self, idx: usize) -> Cell {
        let nz = self.nz();
        let ny = self.ny();
        let k = (idx % nz) as i32 + self.z_lo;
        let j = ((idx / nz) % ny) as i32 + self.y_lo;
        let i = (idx / (nz * ny)) as i32 + self.x_lo;
        Cell::at(i, j, k)
    }

    /// All cells in canonical order.
    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.cell_count()).map(move |i| self.cell_at(i))
    }

    /// Whether a face belongs to `𝓕(Λ)`: all four bounding vertices lie in the
    /// closed box.
    pub fn contains_face(&self, f: Face) -> bool {
        let within = |v: i32, lo: i32, hi: i32| v >= 2 * lo && v <= 2 * hi + 2;
        f.vertices().iter().all(|&(x, y, z)| {
            within(x, self.x_lo, self.x_hi)
                && within(y, self.y_lo, self.y_hi)
                && within(z, self.z_lo, self.z_hi)
        })
    }

    /// Whether a point of `𝓛₀` (face or edge) lies in the closed footprint.
    pub fn footprint_contains(&self, p: Proj) -> bool {
        match p.kind() {
            ProjKind::Face => {
                p.x >= 2 * self.x_lo + 1
                    && p.x <= 2 * self.x_hi + 1
                    && p.y >= 2 * self.y_lo + 1
                    && p.y <= 2 * self.y_hi + 1
            }
            ProjKind::Edge => {
                p.x >= 2 * self.x_lo
                    && p.x <= 2 * self.x_hi + 2
                    && p.y >= 2 * self.y_lo
                    && p.y <= 2 * self.y_hi + 2
            }
        }
    }

    /// Whether an edge lies on the boundary of the footprint.
    pub fn on_footprint_boundary(&self, p: Proj) -> bool {
        p.kind() == ProjKind::Edge
            && self.footprint_contains(p)
            && (p.x == 2 * self.x_lo
                || p.x == 2 * self.x_hi + 2
                || p.y == 2 * self.y_lo
                || p.y == 2 * self.y_hi + 2)
    }

    /// The faces of `𝓛₀` in the footprint (`𝓛_{0,n}`), in canonical order.
    pub fn footprint(&self) -> Vec<Face> {
        let mut out = Vec::with_capacity(self.nx() * self.ny());
        for i in self.x_lo..=self.x_hi {
            for j in self.y_lo..=self.y_hi {
                out.push(Face::l0(i, j));
            }
        }
        out
    }

    /// Faces of `𝓛₀` at least `margin` columns away from the footprint boundary
    /// (`margin = 0` gives the whole footprint).
    pub fn inner_footprint(&self, margin: i32) -> Vec<Face> {
        let mut out = Vec::new();
        for i in self.x_lo + margin..=self.x_hi - margin {
            for j in self.y_lo + margin..=self.y_hi - margin {
                out.push(Face::l0(i, j));
            }
        }
        out
    }

    /// Horizontal distance from the midpoint of the `𝓛₀` face `x` to the
    /// nearest midpoint of a column outside the box, in doubled units.
    pub fn boundary_gap2x(&self, x: Face) -> i32 {
        let gaps = [
            x.x - (2 * self.x_lo - 1),
            (2 * self.x_hi + 3) - x.x,
            x.y - (2 * self.y_lo - 1),
            (2 * self.y_hi + 3) - x.y,
        ];
        *gaps.iter().min().expect("four gaps")
    }
}

/// The reference face `o = (½, ½, 0)`.
pub const ORIGIN: Face = Face::l0(0, 0);

/// Decide `√a + b < √c` exactly for nonnegative integers.
pub fn sqrt_plus_lt_sqrt(a: i128, b: i128, c: i128) -> bool {
    debug_assert!(a >= 0 && b >= 0 && c >= 0);
    // √a + b < √c  ⇔  a + b² + 2b√a < c  ⇔  2b√a < c − a − b².
    let rhs = c - a - b * b;
    if rhs <= 0 {
        return false;
    }
    4 * b * b * a < rhs * rhs
}

/// Decide `√d ≤ √a + √b` exactly for nonnegative integers.
pub fn sqrt_le_sum_sqrt(d: i128, a: i128, b: i128) -> bool {
    // √d ≤ √a + √b ⇔ d ≤ a + b + 2√(ab) ⇔ d − a − b ≤ 2√(ab).
    let lhs = d - a - b;
    lhs <= 0 || lhs * lhs <= 4 * a * b
}

/// Dense addressing of every face within two doubled units of a box
/// (enough to hold the ring of `𝓛₀` faces just outside the footprint).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FaceIndexer {
    ox: i32,
    oy: i32,
    oz: i32,
    wx: usize,
    wy: usize,
    wz: usize,
}

impl FaceIndexer {
    pub fn new(dims: &BoxDims) -> Self {
        let ox = 2 * dims.x_lo - 2;
        let oy = 2 * dims.y_lo - 2;
        let oz = 2 * dims.z_lo - 2;
        FaceIndexer {
            ox,
            oy,
            oz,
            wx: (2 * dims.x_hi + 4 - ox + 1) as usize,
            wy: (2 * dims.y_hi + 4 - oy + 1) as usize,
            wz: (2 * dims.z_hi + 4 - oz + 1) as usize,
        }
    }

    /// Number of addressable slots.
    pub fn len(&self) -> usize {
        self.wx * self.wy * self.wz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Slot of a face, or `None` when it lies outside the addressed range.
    #[inline]
    pub fn index(&self, f: Face) -> Option<usize> {
        let x = f.x - self.ox;
        let y = f.y - self.oy;
        let z = f.z - self.oz;
        if x < 0
            || y < 0
            || z < 0
            || x as usize >= self.wx
            || y as usize >= self.wy
            || z as usize >= self.wz
        {
            return None;
        }
        Some((x as usize * self.wy + y as usize) * self.wz + z as usize)
    }
}

/// A set of faces near a box, stored as a dense bitmap.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FaceSet {
    indexer: FaceIndexer,
    bits: Vec<bool>,
    len: usize,
}

impl FaceSet {
    pub fn new(dims: &BoxDims) -> Self {
        let indexer = FaceIndexer::new(dims);
        FaceSet {
            indexer,
            bits: vec![false; indexer.len()],
            len: 0,
        }
    }

    pub fn from_faces<'a>(dims: &BoxDims, faces: impl IntoIterator<Item = &'a Face>) -> Self {
        let mut s = FaceSet::new(dims);
        for &f in faces {
            s.insert(f);
        }
        s
    }

    /// Insert a face; returns `false` if it was already present or lies out
    /// of range.
    pub fn insert(&mut self, f: Face) -> bool {
        match self.indexer.index(f) {
            Some(i) if !self.bits[i] => {
                self.bits[i] = true;
                self.len += 1;
                true
            }
            _ => false,
        }
    }

    pub fn remove(&mut self, f: Face) -> bool {
        match self.indexer.index(f) {
            Some(i) if self.bits[i] => {
                self.bits[i] = false;
                self.len -= 1;
                true
            }
            _ => false,
        }
    }

    #[inline]
    pub fn contains(&self, f: Face) -> bool {
        self.indexer.index(f).is_some_and(|i| self.bits[i])
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}
