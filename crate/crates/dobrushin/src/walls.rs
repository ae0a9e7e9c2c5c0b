//! Walls and ceilings of an interface, standard wall collections, nesting and
//! groups of walls.
//!
//! A face of an interface is a *ceiling face* when it is horizontal and no
//! other interface face shares its projection onto `𝓛₀`; every other face is
//! a *wall face*, and walls are the *-connected components of wall faces.
//! Projections are handled on a local grid of doubled planar coordinates
//! around each wall: `𝓛₀` faces and edges not covered by the projection
//! `ρ(W)` split into connected components, exactly one of which (the one
//! reaching the grid margin) is infinite.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interface::{Interface, InterfaceError};
use crate::lattice::{BoxDims, Face, Proj, ProjKind};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WallError {
    #[error(transparent)]
    Interface(#[from] InterfaceError),
    #[error("wall {index:?} has floor candidates at different heights {heights:?}")]
    FloorMismatch { index: Face, heights: Vec<i32> },
    #[error("wall containing {0:?} has no floor")]
    NoFloor(Face),
    #[error("wall {0:?} does not determine consistent ceiling heights")]
    InconsistentCeiling(Face),
    #[error("walls {0:?} and {1:?} have overlapping projections")]
    Inadmissible(Face, Face),
    #[error("face {0:?} escapes the box after shifting")]
    TruncationOverflow(Face),
    #[error("no wall is indexed by {0:?}")]
    UnknownIndex(Face),
    #[error("wall {0:?} touches the footprint boundary")]
    FootprintClipped(Face),
    #[error("{0:?} is not a face or edge of the footprint")]
    OutsideFootprint(Proj),
    #[error("a wall needs at least one face")]
    EmptyWall,
}

/// Disjoint-set forest with path halving and union by size.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut a: usize) -> usize {
        while self.parent[a] != a {
            self.parent[a] = self.parent[self.parent[a]];
            a = self.parent[a];
        }
        a
    }

    /// Merge the classes of `a` and `b`; returns whether they were distinct.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        true
    }

    /// Class labels `0..k` in order of first appearance.
    pub fn labels(&mut self) -> Vec<usize> {
        let mut map = HashMap::new();
        (0..self.parent.len())
            .map(|i| {
                let r = self.find(i);
                let next = map.len();
                *map.entry(r).or_insert(next)
            })
            .collect()
    }
}

/// Label of an interface face.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FaceLabel {
    Ceiling,
    Wall,
}

/// Ceiling/wall labels and projection multiplicities `N_ρ` of an interface.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FaceClassification {
    faces: Vec<Face>,
    labels: Vec<FaceLabel>,
    n_rho: BTreeMap<Proj, u32>,
}

impl FaceClassification {
    pub fn label(&self, f: Face) -> Option<FaceLabel> {
        self.faces.binary_search(&f).ok().map(|i| self.labels[i])
    }

    /// `N_ρ(u)`: number of interface faces projecting onto `u` (0 if none).
    pub fn n_rho(&self, u: Proj) -> u32 {
        self.n_rho.get(&u).copied().unwrap_or(0)
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    pub fn labels(&self) -> &[FaceLabel] {
        &self.labels
    }

    pub fn n_rho_map(&self) -> &BTreeMap<Proj, u32> {
        &self.n_rho
    }

    pub fn wall_faces(&self) -> impl Iterator<Item = Face> + '_ {
        self.faces
            .iter()
            .zip(&self.labels)
            .filter(|(_, &l)| l == FaceLabel::Wall)
            .map(|(&f, _)| f)
    }

    pub fn ceiling_faces(&self) -> impl Iterator<Item = Face> + '_ {
        self.faces
            .iter()
            .zip(&self.labels)
            .filter(|(_, &l)| l == FaceLabel::Ceiling)
            .map(|(&f, _)| f)
    }
}

/// Label every interface face as ceiling or wall.
pub fn classify(i: &Interface) -> FaceClassification {
    let mut n_rho = BTreeMap::new();
    for f in i.faces() {
        *n_rho.entry(f.project()).or_insert(0u32) += 1;
    }
    let labels = i
        .faces()
        .iter()
        .map(|f| {
            if f.is_horizontal() && n_rho[&f.project()] == 1 {
                FaceLabel::Ceiling
            } else {
                FaceLabel::Wall
            }
        })
        .collect();
    FaceClassification {
        faces: i.faces().to_vec(),
        labels,
        n_rho,
    }
}

/// Where a point of `𝓛₀` lies relative to a wall's projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    /// In `ρ(W)` (or an edge enclosed by faces of `ρ(W)`).
    Projection,
    /// In the infinite component of `ρ(W)^c`.
    Infinite,
    /// In the given finite component of `ρ(W)^c`.
    Finite(usize),
}

const PROJ: i32 = -2;
const INF: i32 = -1;
const VERTEX: i32 = -3;
const UNSET: i32 = -4;

/// Planar geometry of a wall: projection, complement components, index and
/// the ceiling heights of its standard form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WallGeometry {
    gx0: i32,
    gy0: i32,
    gw: i32,
    gh: i32,
    labels: Vec<i32>,
    component_faces: Vec<usize>,
    ceiling_heights: Vec<i32>,
    projection: Vec<(Proj, u32)>,
    proj_faces: usize,
    proj_edges: usize,
    max_n: u32,
    index: Face,
}

impl WallGeometry {
    /// Geometry of a wall given by its faces, the floor being at doubled
    /// height `floor2` (0 for a standard wall).
    pub fn new(faces: &[Face], floor2: i32) -> Result<Self, WallError> {
        let mut g = WallGeometry::shape(faces)?;
        g.compute_heights(faces, floor2)?;
        Ok(g)
    }

    /// Projection-only part of the geometry (ceiling heights left empty).
    fn shape(faces: &[Face]) -> Result<Self, WallError> {
        if faces.is_empty() {
            return Err(WallError::EmptyWall);
        }
        let mut counts: BTreeMap<Proj, u32> = BTreeMap::new();
        for f in faces {
            *counts.entry(f.project()).or_insert(0) += 1;
        }
        let projection: Vec<(Proj, u32)> = counts.into_iter().collect();
        let (mut x0, mut x1, mut y0, mut y1) = (i32::MAX, i32::MIN, i32::MAX, i32::MIN);
        for (p, _) in &projection {
            x0 = x0.min(p.x);
            x1 = x1.max(p.x);
            y0 = y0.min(p.y);
            y1 = y1.max(p.y);
        }
        let odd_down = |v: i32| if v & 1 == 0 { v - 1 } else { v };
        let odd_up = |v: i32| if v & 1 == 0 { v + 1 } else { v };
        let gx0 = odd_down(x0 - 3);
        let gy0 = odd_down(y0 - 3);
        let gw = odd_up(x1 + 3) - gx0 + 1;
        let gh = odd_up(y1 + 3) - gy0 + 1;
        let mut labels = vec![UNSET; (gw * gh) as usize];
        let at = |x: i32, y: i32| ((x - gx0) * gh + (y - gy0)) as usize;
        for x in gx0..gx0 + gw {
            for y in gy0..gy0 + gh {
                if x & 1 == 0 && y & 1 == 0 {
                    labels[at(x, y)] = VERTEX;
                }
            }
        }
        let mut proj_faces = 0;
        let mut proj_edges = 0;
        let mut max_n = 0;
        for &(p, n) in &projection {
            labels[at(p.x, p.y)] = PROJ;
            max_n = max_n.max(n);
            match p.kind() {
                ProjKind::Face => proj_faces += 1,
                ProjKind::Edge => proj_edges += 1,
            }
        }
        let in_grid = |x: i32, y: i32| x >= gx0 && x < gx0 + gw && y >= gy0 && y < gy0 + gh;
        // Flood fill over faces through uncovered edges.
        let fill = |labels: &mut Vec<i32>, sx: i32, sy: i32, lab: i32| -> usize {
            let mut count = 0;
            let mut queue = VecDeque::new();
            labels[at(sx, sy)] = lab;
            queue.push_back((sx, sy));
            while let Some((x, y)) = queue.pop_front() {
                count += 1;
                for (dx, dy) in [(-1, 0), (1, 0), (0, -1), (0, 1)] {
                    let (ex, ey) = (x + dx, y + dy);
                    let (nx, ny) = (x + 2 * dx, y + 2 * dy);
                    if !in_grid(nx, ny) || labels[at(ex, ey)] == PROJ {
                        continue;
                    }
                    if labels[at(nx, ny)] == UNSET {
                        labels[at(nx, ny)] = lab;
                        queue.push_back((nx, ny));
                    }
                }
            }
            count
        };
        let mut border = Vec::new();
        for x in (gx0..gx0 + gw).step_by(2) {
            border.push((x, gy0));
            border.push((x, gy0 + gh - 1));
        }
        for y in (gy0..gy0 + gh).step_by(2) {
            border.push((gx0, y));
            border.push((gx0 + gw - 1, y));
        }
        for (x, y) in border {
            if labels[at(x, y)] == UNSET {
                fill(&mut labels, x, y, INF);
            }
        }
        let mut component_faces = Vec::new();
        for x in (gx0..gx0 + gw).step_by(2) {
            for y in (gy0..gy0 + gh).step_by(2) {
                if labels[at(x, y)] == UNSET {
                    let lab = component_faces.len() as i32;
                    let n = fill(&mut labels, x, y, lab);
                    component_faces.push(n);
                }
            }
        }
        // Edges inherit the label of an adjacent uncovered face.
        for x in gx0..gx0 + gw {
            for y in gy0..gy0 + gh {
                if (x ^ y) & 1 == 0 || labels[at(x, y)] != UNSET {
                    continue;
                }
                let (a, b) = if x & 1 == 0 {
                    ((x - 1, y), (x + 1, y))
                } else {
                    ((x, y - 1), (x, y + 1))
                };
                let la = labels[at(a.0, a.1)];
                let lb = labels[at(b.0, b.1)];
                labels[at(x, y)] = if la != PROJ {
                    la
                } else if lb != PROJ {
                    lb
                } else {
                    PROJ
                };
            }
        }
        let mut g = WallGeometry {
            gx0,
            gy0,
            gw,
            gh,
            labels,
            component_faces,
            ceiling_heights: Vec::new(),
            projection,
            proj_faces,
            proj_edges,
            max_n,
            index: Face::l0(0, 0),
        };
        g.index = g.compute_index();
        Ok(g)
    }

    fn at(&self, x: i32, y: i32) -> Option<usize> {
        if x >= self.gx0 && x < self.gx0 + self.gw && y >= self.gy0 && y < self.gy0 + self.gh {
            Some(((x - self.gx0) * self.gh + (y - self.gy0)) as usize)
        } else {
            None
        }
    }

    fn compute_index(&self) -> Face {
        for x in (self.gx0..self.gx0 + self.gw).step_by(2) {
            for y in (self.gy0..self.gy0 + self.gh).step_by(2) {
                let p = Proj { x, y };
                let own = self.in_projection(p);
                let interior = own || matches!(self.region(p), Region::Finite(_));
                if interior && (own || p.incident().iter().any(|&e| self.in_projection(e))) {
                    return Face::l0_at(p);
                }
            }
        }
        unreachable!("every wall projection has an incident interior face")
    }

    /// Column-pattern propagation of the spin-change heights from the
    /// infinite component (height 0) across the wall's edges.
    fn compute_heights(&mut self, faces: &[Face], floor2: i32) -> Result<(), WallError> {
        let mut own: HashMap<Proj, Vec<i32>> = HashMap::new();
        let mut pattern: HashMap<Proj, Vec<i32>> = HashMap::new();
        for f in faces {
            let z = f.z - floor2;
            if f.is_horizontal() {
                own.entry(f.project()).or_default().push(z);
            } else {
                let p = pattern.entry(f.project()).or_default();
                toggle(p, z - 1);
                toggle(p, z + 1);
            }
        }
        for v in own.values_mut() {
            v.sort_unstable();
        }
        let fail = || WallError::InconsistentCeiling(self.index);
        let n = (self.gw * self.gh) as usize;
        let mut h: Vec<Option<Vec<i32>>> = vec![None; n];
        let mut queue = VecDeque::new();
        for x in (self.gx0..self.gx0 + self.gw).step_by(2) {
            for y in (self.gy0..self.gy0 + self.gh).step_by(2) {
                let border = x == self.gx0
                    || y == self.gy0
                    || x == self.gx0 + self.gw - 1
                    || y == self.gy0 + self.gh - 1;
                if border {
                    let i = self.at(x, y).expect("in grid");
                    h[i] = Some(vec![0]);
                    queue.push_back((x, y));
                }
            }
        }
        while let Some((x, y)) = queue.pop_front() {
            let cur = h[self.at(x, y).expect("in grid")].clone().expect("set");
            for (dx, dy) in [(-1, 0), (1, 0), (0, -1), (0, 1)] {
                let (nx, ny) = (x + 2 * dx, y + 2 * dy);
                let Some(ni) = self.at(nx, ny) else { continue };
                let mut next = cur.clone();
                if let Some(p) = pattern.get(&Proj { x: x + dx, y: y + dy }) {
                    for &z in p {
                        toggle(&mut next, z);
                    }
                }
                if let Some(o) = own.get(&Proj { x: nx, y: ny }) {
                    if *o != next {
                        return Err(fail());
                    }
                }
                match &h[ni] {
                    Some(prev) if *prev != next => return Err(fail()),
                    Some(_) => {}
                    None => {
                        h[ni] = Some(next);
                        queue.push_back((nx, ny));
                    }
                }
            }
        }
        let mut heights = vec![None; self.component_faces.len()];
        for x in (self.gx0..self.gx0 + self.gw).step_by(2) {
            for y in (self.gy0..self.gy0 + self.gh).step_by(2) {
                let i = self.at(x, y).expect("in grid");
                let Some(col) = &h[i] else {
                    return Err(fail());
                };
                match self.labels[i] {
                    INF if col.as_slice() != [0] => return Err(fail()),
                    lab if lab >= 0 => {
                        if col.len() != 1 {
                            return Err(fail());
                        }
                        let slot = &mut heights[lab as usize];
                        match slot {
                            None => *slot = Some(col[0]),
                            Some(c) if *c != col[0] => return Err(fail()),
                            Some(_) => {}
                        }
                    }
                    _ => {}
                }
            }
        }
        self.ceiling_heights = heights
            .into_iter()
            .map(|h| h.expect("every component has a face"))
            .collect();
        Ok(())
    }

    /// Region of a point of `𝓛₀` relative to this wall.
    pub fn region(&self, p: Proj) -> Region {
        match self.at(p.x, p.y).map(|i| self.labels[i]) {
            None | Some(INF) => Region::Infinite,
            Some(PROJ) => Region::Projection,
            Some(lab) if lab >= 0 => Region::Finite(lab as usize),
            Some(_) => Region::Infinite,
        }
    }

    /// Whether `p` is interior to the wall (in `ρ(W)` or a finite component).
    pub fn is_interior(&self, p: Proj) -> bool {
        !matches!(self.region(p), Region::Infinite)
    }

    pub fn in_projection(&self, p: Proj) -> bool {
        self.projection.binary_search_by(|(q, _)| q.cmp(&p)).is_ok()
    }

    /// `N_ρ(u)` restricted to this wall.
    pub fn n_rho(&self, p: Proj) -> u32 {
        self.projection
            .binary_search_by(|(q, _)| q.cmp(&p))
            .map(|i| self.projection[i].1)
            .unwrap_or(0)
    }

    /// Projection elements with their multiplicities, sorted.
    pub fn projection(&self) -> &[(Proj, u32)] {
        &self.projection
    }

    /// The wall index: the minimal interior face of `𝓛₀` incident to `ρ(W)`.
    pub fn index(&self) -> Face {
        self.index
    }

    /// Number of `𝓛₀` faces in `ρ(W)`.
    pub fn projected_faces(&self) -> usize {
        self.proj_faces
    }

    /// Number of `𝓛₀` edges in `ρ(W)`.
    pub fn projected_edges(&self) -> usize {
        self.proj_edges
    }

    /// Number of `𝓛₀` faces interior to the wall.
    pub fn interior_size(&self) -> usize {
        self.proj_faces + self.component_faces.iter().sum::<usize>()
    }

    /// Number of finite components of `ρ(W)^c`.
    pub fn finite_components(&self) -> usize {
        self.component_faces.len()
    }

    /// Doubled ceiling height of a finite component in the standard form.
    pub fn ceiling_height2(&self, component: usize) -> i32 {
        self.ceiling_heights[component]
    }

    /// Doubled ceiling height (standard form) over an interior point not in
    /// the projection, or 0 in the infinite component.
    pub fn height_over2(&self, p: Proj) -> i32 {
        match self.region(p) {
            Region::Finite(c) => self.ceiling_heights[c],
            _ => 0,
        }
    }

    /// The interior `𝓛₀` faces (projection faces and finite components).
    pub fn interior_faces(&self) -> Vec<Face> {
        let mut out = Vec::new();
        for x in (self.gx0..self.gx0 + self.gw).step_by(2) {
            for y in (self.gy0..self.gy0 + self.gh).step_by(2) {
                let p = Proj { x, y };
                if self.is_interior(p) {
                    out.push(Face::l0_at(p));
                }
            }
        }
        out
    }

    /// Bounding box of the projection in doubled planar coordinates
    /// `(x0, x1, y0, y1)`.
    pub fn bbox(&self) -> (i32, i32, i32, i32) {
        let mut b = (i32::MAX, i32::MIN, i32::MAX, i32::MIN);
        for (p, _) in &self.projection {
            b.0 = b.0.min(p.x);
            b.1 = b.1.max(p.x);
            b.2 = b.2.min(p.y);
            b.3 = b.3.max(p.y);
        }
        b
    }

    pub fn max_n_rho(&self) -> u32 {
        self.max_n
    }
}

fn toggle(v: &mut Vec<i32>, z: i32) {
    match v.binary_search(&z) {
        Ok(i) => {
            v.remove(i);
        }
        Err(i) => v.insert(i, z),
    }
}

/// A wall of an interface, at its actual position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Wall {
    pub index: Face,
    /// The wall faces, sorted.
    pub faces: Vec<Face>,
    /// Doubled height of the floor `⌊W⌋`.
    pub floor_height2: i32,
    /// The ceiling faces `⌈W⌉` (all ceiling components of the finite
    /// components adjacent to the wall), sorted.
    pub ceilings: Vec<Face>,
    pub geometry: Arc<WallGeometry>,
}

impl Wall {
    /// Floor height `hgt(⌊W⌋)` (an integer).
    pub fn floor_height(&self) -> i32 {
        self.floor_height2 / 2
    }

    /// The standard form of the wall (shifted so its floor is at height 0).
    pub fn standardize(&self) -> StandardWall {
        StandardWall {
            index: self.index,
            faces: self
                .faces
                .iter()
                .map(|f| f.shifted(0, 0, -self.floor_height2))
                .collect(),
            geometry: self.geometry.clone(),
        }
    }
}

/// Excess area `𝔪(W) = |W| − |𝓕(ρ(W))|`.
pub fn wall_excess(faces: usize, geometry: &WallGeometry) -> i64 {
    faces as i64 - geometry.projected_faces() as i64
}

/// A wall whose floor lies at height 0.
#[derive(Debug, Clone)]
pub struct StandardWall {
    index: Face,
    faces: Vec<Face>,
    geometry: Arc<WallGeometry>,
}

impl PartialEq for StandardWall {
    fn eq(&self, other: &Self) -> bool {
        self.index == other.index && self.faces == other.faces
    }
}

impl Eq for StandardWall {}

impl StandardWall {
    /// Build a standard wall from its faces (floor at height 0).
    pub fn new(mut faces: Vec<Face>) -> Result<Self, WallError> {
        faces.sort_unstable();
        faces.dedup();
        let geometry = WallGeometry::new(&faces, 0)?;
        Ok(StandardWall {
            index: geometry.index(),
            faces,
            geometry: Arc::new(geometry),
        })
    }

    pub fn index(&self) -> Face {
        self.index
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    pub fn len(&self) -> usize {
        self.faces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    pub fn geometry(&self) -> &WallGeometry {
        &self.geometry
    }

    /// `𝔪(W)`.
    pub fn excess(&self) -> i64 {
        wall_excess(self.faces.len(), &self.geometry)
    }
}

/// An admissible family of standard walls keyed by index.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct StandardWallCollection {
    walls: BTreeMap<Face, StandardWall>,
}

impl StandardWallCollection {
    pub fn new() -> Self {
        Self::default()
    }

    /// Insert a wall; fails if its index is taken or its projection overlaps
    /// a wall already present.
    pub fn insert(&mut self, w: StandardWall) -> Result<(), WallError> {
        if let Some(other) = self.walls.get(&w.index) {
            return Err(WallError::Inadmissible(other.index, w.index));
        }
        for other in self.walls.values() {
            if projections_overlap(other.geometry(), w.geometry()) {
                return Err(WallError::Inadmissible(other.index, w.index));
            }
        }
        self.walls.insert(w.index, w);
        Ok(())
    }

    /// Insert without the overlap check (used when admissibility is checked
    /// later, e.g. by [`reconstruct`]).
    pub fn insert_unchecked(&mut self, w: StandardWall) {
        self.walls.insert(w.index, w);
    }

    pub fn remove(&mut self, index: Face) -> Option<StandardWall> {
        self.walls.remove(&index)
    }

    pub fn get(&self, index: Face) -> Option<&StandardWall> {
        self.walls.get(&index)
    }

    pub fn contains(&self, index: Face) -> bool {
        self.walls.contains_key(&index)
    }

    pub fn len(&self) -> usize {
        self.walls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.walls.is_empty()
    }

    pub fn indices(&self) -> impl Iterator<Item = Face> + '_ {
        self.walls.keys().copied()
    }

    pub fn walls(&self) -> impl Iterator<Item = &StandardWall> {
        self.walls.values()
    }

    /// Total excess `Σ 𝔪(W)`.
    pub fn excess(&self) -> i64 {
        self.walls.values().map(|w| w.excess()).sum()
    }
}

fn projections_overlap(a: &WallGeometry, b: &WallGeometry) -> bool {
    let (ba, bb) = (a.bbox(), b.bbox());
    if ba.1 < bb.0 || bb.1 < ba.0 || ba.3 < bb.2 || bb.3 < ba.2 {
        return false;
    }
    let (small, large) = if a.projection.len() <= b.projection.len() {
        (a, b)
    } else {
        (b, a)
    };
    small.projection.iter().any(|(p, _)| large.in_projection(*p))
}

/// The walls of an interface, each with its floor and ceilings, sorted by
/// index.
pub fn walls_of(i: &Interface) -> Result<Vec<Wall>, WallError> {
    let cls = classify(i);
    let dims = *i.dims();
    let wall_faces: Vec<Face> = cls.wall_faces().collect();
    let components = star_components(&wall_faces);
    // Ceiling components, for ⌈W⌉.
    let ceiling_faces: Vec<Face> = cls.ceiling_faces().collect();
    let ceiling_comp = star_components(&ceiling_faces);
    let mut ceiling_groups: Vec<Vec<Face>> = Vec::new();
    let mut ceiling_label: HashMap<Face, usize> = HashMap::new();
    for (f, lab) in ceiling_faces.iter().zip(&ceiling_comp.1) {
        if *lab >= ceiling_groups.len() {
            ceiling_groups.resize(*lab + 1, Vec::new());
        }
        ceiling_groups[*lab].push(*f);
        ceiling_label.insert(*f, *lab);
    }
    let mut walls = Vec::with_capacity(components.0);
    let mut grouped: Vec<Vec<Face>> = vec![Vec::new(); components.0];
    for (f, lab) in wall_faces.iter().zip(&components.1) {
        grouped[*lab].push(*f);
    }
    for faces in grouped {
        let shape = WallGeometry::shape(&faces)?;
        // Floor: ceiling faces (or the virtual plane outside the footprint)
        // edge-adjacent to the wall and projecting into the infinite component.
        let mut floors = BTreeSet::new();
        let mut ceil_comps = BTreeSet::new();
        for f in &faces {
            for &(dx, dy, dz) in Face::edge_offsets(f.axis) {
                let g = Face::raw(f.x + dx, f.y + dy, f.z + dz);
                let outside_plane = g.is_horizontal()
                    && g.z == 0
                    && !dims.footprint_contains(g.project());
                let is_ceiling = cls.label(g) == Some(FaceLabel::Ceiling);
                if !(outside_plane || is_ceiling) {
                    continue;
                }
                match shape.region(g.project()) {
                    Region::Infinite => {
                        floors.insert(g.z);
                    }
                    Region::Finite(_) if is_ceiling => {
                        ceil_comps.insert(ceiling_label[&g]);
                    }
                    _ => {}
                }
            }
        }
        let floor2 = match floors.len() {
            0 => return Err(WallError::NoFloor(faces[0])),
            1 => *floors.iter().next().expect("one floor"),
            _ => {
                return Err(WallError::FloorMismatch {
                    index: shape.index(),
                    heights: floors.into_iter().collect(),
                })
            }
        };
        let mut geometry = shape;
        geometry.compute_heights(&faces, floor2)?;
        let mut ceilings: Vec<Face> = ceil_comps
            .into_iter()
            .flat_map(|c| ceiling_groups[c].iter().copied())
            .collect();
        ceilings.sort_unstable();
        walls.push(Wall {
            index: geometry.index(),
            faces,
            floor_height2: floor2,
            ceilings,
            geometry: Arc::new(geometry),
        });
    }
    walls.sort_by_key(|w| w.index);
    Ok(walls)
}

/// *-connected components of a sorted face list: `(count, label per face)`.
pub fn star_components(faces: &[Face]) -> (usize, Vec<usize>) {
    let pos: HashMap<Face, usize> = faces.iter().enumerate().map(|(i, &f)| (f, i)).collect();
    let mut uf = UnionFind::new(faces.len());
    for (i, f) in faces.iter().enumerate() {
        for &(dx, dy, dz) in Face::star_offsets(f.axis) {
            if let Some(&j) = pos.get(&Face::raw(f.x + dx, f.y + dy, f.z + dz)) {
                uf.union(i, j);
            }
        }
    }
    let labels = uf.labels();
    let count = labels.iter().copied().max().map_or(0, |m| m + 1);
    (count, labels)
}

/// The standard wall collection of an interface.
pub fn standardize(i: &Interface) -> Result<StandardWallCollection, WallError> {
    let mut c = StandardWallCollection::new();
    for w in walls_of(i)? {
        c.insert_unchecked(w.standardize());
    }
    Ok(c)
}

/// Nesting structure of a collection: for every wall, the innermost wall
/// whose interior contains it, and the vertical shift it receives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Nesting {
    /// Walls in decreasing interior size (parents before children).
    order: Vec<Face>,
    parent: BTreeMap<Face, Option<Face>>,
    shift2: BTreeMap<Face, i32>,
}

impl Nesting {
    pub fn new(c: &StandardWallCollection) -> Self {
        let mut order: Vec<&StandardWall> = c.walls().collect();
        order.sort_by_key(|w| (std::cmp::Reverse(w.geometry().interior_size()), w.index()));
        let mut parent = BTreeMap::new();
        let mut shift2 = BTreeMap::new();
        for (k, w) in order.iter().enumerate() {
            let probe = w.geometry().projection()[0].0;
            let par = order[..k]
                .iter()
                .filter(|o| o.geometry().is_interior(probe))
                .min_by_key(|o| (o.geometry().interior_size(), o.index()));
            let s = match par {
                Some(p) => shift2[&p.index()] + p.geometry().height_over2(probe),
                None => 0,
            };
            parent.insert(w.index(), par.map(|p| p.index()));
            shift2.insert(w.index(), s);
        }
        Nesting {
            order: order.iter().map(|w| w.index()).collect(),
            parent,
            shift2,
        }
    }

    pub fn parent(&self, index: Face) -> Option<Face> {
        self.parent.get(&index).copied().flatten()
    }

    /// Doubled vertical shift of a wall in the reconstructed interface.
    pub fn shift2(&self, index: Face) -> i32 {
        self.shift2.get(&index).copied().unwrap_or(0)
    }

    /// Wall indices in decreasing interior size.
    pub fn order(&self) -> &[Face] {
        &self.order
    }

    /// Walls `W'` with `W' ⋐ W` (strictly nested, at any depth).
    pub fn descendants(&self, index: Face) -> Vec<Face> {
        self.order
            .iter()
            .copied()
            .filter(|&w| {
                let mut cur = self.parent(w);
                while let Some(p) = cur {
                    if p == index {
                        return true;
                    }
                    cur = self.parent(p);
                }
                false
            })
            .collect()
    }

    /// Walls containing the given wall in their interior, innermost first.
    pub fn ancestors(&self, index: Face) -> Vec<Face> {
        let mut out = Vec::new();
        let mut cur = self.parent(index);
        while let Some(p) = cur {
            out.push(p);
            cur = self.parent(p);
        }
        out
    }
}

/// The interface with a given standard wall representation.
pub fn reconstruct(c: &StandardWallCollection, dims: &BoxDims) -> Result<Interface, WallError> {
    // Admissibility: pairwise disjoint projections.
    let mut owner: HashMap<Proj, Face> = HashMap::new();
    for w in c.walls() {
        for &(p, _) in w.geometry().projection() {
            if !dims.footprint_contains(p) {
                return Err(WallError::TruncationOverflow(w.faces()[0]));
            }
            if let Some(&o) = owner.get(&p) {
                return Err(WallError::Inadmissible(o, w.index()));
            }
            owner.insert(p, w.index());
        }
    }
    let nesting = Nesting::new(c);
    let mut faces = Vec::new();
    for w in c.walls() {
        let s = nesting.shift2(w.index());
        for f in w.faces() {
            let g = f.shifted(0, 0, s);
            if !dims.contains_face(g) {
                return Err(WallError::TruncationOverflow(g));
            }
            faces.push(g);
        }
    }
    // Ceiling faces over every footprint face not covered by a wall.
    let walls: Vec<&StandardWall> = c.walls().collect();
    let boxes: Vec<(i32, i32, i32, i32)> = walls.iter().map(|w| w.geometry().bbox()).collect();
    for u in dims.footprint() {
        let p = u.project();
        if owner.contains_key(&p) {
            continue;
        }
        let mut best: Option<(usize, usize)> = None;
        for (k, w) in walls.iter().enumerate() {
            let b = boxes[k];
            if p.x < b.0 || p.x > b.1 || p.y < b.2 || p.y > b.3 {
                continue;
            }
            let g = w.geometry();
            if g.is_interior(p) {
                let size = g.interior_size();
                if best.is_none_or(|(_, s)| size < s) {
                    best = Some((k, size));
                }
            }
        }
        let h = match best {
            Some((k, _)) => {
                let w = walls[k];
                nesting.shift2(w.index()) + w.geometry().height_over2(p)
            }
            None => 0,
        };
        let g = u.shifted(0, 0, h);
        if !dims.contains_face(g) {
            return Err(WallError::TruncationOverflow(g));
        }
        faces.push(g);
    }
    Ok(Interface::from_faces(*dims, faces))
}

/// A maximal class of the closeness relation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupOfWalls {
    pub members: Vec<Face>,
    pub excess: i64,
}

/// Exact test of `|u − u′| ≤ √a + √b` for doubled squared distance `d2`.
pub fn close_points(d2: i64, a: u32, b: u32) -> bool {
    let lhs = d2 as i128 - 4 * a as i128 - 4 * b as i128;
    lhs <= 0 || lhs * lhs <= 64 * a as i128 * b as i128
}

/// Whether two walls are close: some pair of projection elements satisfies
/// `|u − u′| ≤ √N_ρ(u) + √N_ρ(u′)`.
pub fn walls_close(a: &WallGeometry, b: &WallGeometry) -> bool {
    let (ba, bb) = (a.bbox(), b.bbox());
    let gap = |lo1: i32, hi1: i32, lo2: i32, hi2: i32| (lo2 - hi1).max(lo1 - hi2).max(0) as i64;
    let dx = gap(ba.0, ba.1, bb.0, bb.1);
    let dy = gap(ba.2, ba.3, bb.2, bb.3);
    let reach = 2.0 * ((a.max_n_rho() as f64).sqrt() + (b.max_n_rho() as f64).sqrt()) + 1.0;
    if ((dx * dx + dy * dy) as f64) > reach * reach {
        return false;
    }
    a.projection().iter().any(|&(u, na)| {
        b.projection()
            .iter()
            .any(|&(v, nb)| close_points(u.dist2(v), na, nb))
    })
}

/// Groups of walls: classes of the transitive closure of closeness.
pub fn groups(c: &StandardWallCollection) -> Vec<GroupOfWalls> {
    let walls: Vec<&StandardWall> = c.walls().collect();
    let mut uf = UnionFind::new(walls.len());
    for i in 0..walls.len() {
        for j in i + 1..walls.len() {
            if walls_close(walls[i].geometry(), walls[j].geometry()) {
                uf.union(i, j);
            }
        }
    }
    let labels = uf.labels();
    let count = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut out = vec![
        GroupOfWalls {
            members: Vec::new(),
            excess: 0
        };
        count
    ];
    for (w, &l) in walls.iter().zip(&labels) {
        out[l].members.push(w.index());
        out[l].excess += w.excess();
    }
    out
}

/// Nesting and grouping data of a collection, for repeated queries.
#[derive(Debug, Clone)]
pub struct CollectionAnalysis {
    pub nesting: Nesting,
    pub groups: Vec<GroupOfWalls>,
    group_of: BTreeMap<Face, usize>,
}

/// The nested sequence `𝔚_u` (innermost first) and its group closure `𝔉_u`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct NestedSequence {
    pub walls: Vec<Face>,
    pub family: BTreeSet<Face>,
}

impl CollectionAnalysis {
    pub fn new(c: &StandardWallCollection) -> Self {
        let groups = groups(c);
        let mut group_of = BTreeMap::new();
        for (g, grp) in groups.iter().enumerate() {
            for &m in &grp.members {
                group_of.insert(m, g);
            }
        }
        CollectionAnalysis {
            nesting: Nesting::new(c),
            groups,
            group_of,
        }
    }

    pub fn group_of(&self, index: Face) -> Option<&GroupOfWalls> {
        self.group_of.get(&index).map(|&g| &self.groups[g])
    }

    /// Walls to which `u` is interior, innermost first, and the union of
    /// their groups.
    pub fn nested_sequence(
        &self,
        c: &StandardWallCollection,
        u: Proj,
        dims: &BoxDims,
    ) -> Result<NestedSequence, WallError> {
        self.sequence(c, u, dims, true)
    }

    /// As [`CollectionAnalysis::nested_sequence`], but walls touching the
    /// footprint boundary are accepted (they are still well defined inside
    /// the box and can be deleted and reconstructed).
    pub fn nested_sequence_in_box(
        &self,
        c: &StandardWallCollection,
        u: Proj,
        dims: &BoxDims,
    ) -> Result<NestedSequence, WallError> {
        self.sequence(c, u, dims, false)
    }

    fn sequence(
        &self,
        c: &StandardWallCollection,
        u: Proj,
        dims: &BoxDims,
        strict: bool,
    ) -> Result<NestedSequence, WallError> {
        if !dims.footprint_contains(u) {
            return Err(WallError::OutsideFootprint(u));
        }
        let mut seq: Vec<&StandardWall> = c
            .walls()
            .filter(|w| w.geometry().is_interior(u))
            .collect();
        seq.sort_by_key(|w| (w.geometry().interior_size(), w.index()));
        for w in seq.iter().filter(|_| strict) {
            let clipped = w.geometry().projection().iter().any(|&(p, _)| {
                !dims.footprint_contains(p) || dims.on_footprint_boundary(p)
            });
            if clipped {
                return Err(WallError::FootprintClipped(w.index()));
            }
        }
        let mut family = BTreeSet::new();
        for w in &seq {
            if let Some(g) = self.group_of(w.index()) {
                family.extend(g.members.iter().copied());
            }
        }
        Ok(NestedSequence {
            walls: seq.iter().map(|w| w.index()).collect(),
            family,
        })
    }
}

/// Convenience wrapper computing the analysis on the fly.
pub fn nested_sequence(
    c: &StandardWallCollection,
    u: Proj,
    dims: &BoxDims,
) -> Result<NestedSequence, WallError> {
    CollectionAnalysis::new(c).nested_sequence(c, u, dims)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interface::extract;
    use crate::ising::SpinConfig;
    use crate::lattice::Cell;

    fn col(d: BoxDims, i: i32, j: i32, h: i32) -> SpinConfig {
        let cells: Vec<Cell> = (0..h).map(|k| Cell::at(i, j, k)).collect();
        SpinConfig::flat_with_plus(d, &cells).unwrap()
    }

    #[test]
    fn flat_interface_has_no_walls() {
        let d = BoxDims::lambda(3, 3, 3).unwrap();
        let i = Interface::flat(d);
        let cls = classify(&i);
        assert!(cls.labels().iter().all(|&l| l == FaceLabel::Ceiling));
        assert!(walls_of(&i).unwrap().is_empty());
        assert_eq!(reconstruct(&StandardWallCollection::new(), &d).unwrap(), i);
    }

    #[test]
    fn column_wall() {
        let d = BoxDims::lambda(3, 3, 4).unwrap();
        for h in 1..=3 {
            let i = extract(&col(d, 0, 0, h));
            let ws = walls_of(&i).unwrap();
            assert_eq!(ws.len(), 1);
            let w = &ws[0];
            assert_eq!(w.faces.len(), 4 * h as usize);
            assert_eq!(w.index, Face::l0(0, 0));
            assert_eq!(w.floor_height2, 0);
            assert_eq!(w.ceilings, vec![Face::new(1, 1, 2 * h).unwrap()]);
            assert_eq!(wall_excess(w.faces.len(), &w.geometry), 4 * h as i64);
            let c = standardize(&i).unwrap();
            assert_eq!(reconstruct(&c, &d).unwrap(), i);
        }
    }

    #[test]
    fn closeness_of_unit_columns() {
        assert!(close_points(4, 1, 1));
        assert!(close_points(16, 1, 1));
        assert!(!close_points(17, 1, 1));
    }
}
