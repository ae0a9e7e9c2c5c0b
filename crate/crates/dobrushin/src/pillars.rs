//! Pillars, cut-points, the base/spine split, increments and their excess
//! areas, tameness, and the connection events `A_h^x`, `E_h^x`, `G_h^x`.
//!
//! Heights are kept doubled throughout: a cell at height `k + ½` has doubled
//! height `2k + 1`, and the pillar height `hgt(𝓟_x)` (maximum cell height
//! plus `½`) is an integer whose double is `max z + 1`.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interface::{reconstruct_spins, Interface, InterfaceError};
use crate::ising::SpinConfig;
use crate::lattice::{BoxDims, Cell, Face, Proj, ProjKind};
use crate::walls::{classify, star_components, FaceClassification, FaceLabel};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PillarError {
    #[error(transparent)]
    Interface(#[from] InterfaceError),
    #[error("{0:?} is not a face of the footprint")]
    NotInFootprint(Face),
    #[error("the pillar is empty")]
    EmptyPillar,
    #[error("the pillar has no cut-points")]
    NoCutPoints,
}

/// The pillar `𝓟_x`: the *-connected plus component of the cell above `x`
/// in the upper half-space, with its bounding faces there.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pillar {
    pub x: Face,
    /// Cells sorted by (height, x, y).
    pub cells: Vec<Cell>,
    /// Bounding faces in the upper half-space, canonically sorted.
    pub faces: Vec<Face>,
    /// `hgt(𝓟_x)` (0 for an empty pillar).
    pub height: i32,
}

impl Pillar {
    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Cells grouped by doubled height.
    pub fn layers(&self) -> BTreeMap<i32, Vec<Cell>> {
        let mut out: BTreeMap<i32, Vec<Cell>> = BTreeMap::new();
        for &c in &self.cells {
            out.entry(c.z).or_default().push(c);
        }
        out
    }

    /// Maximum height of a point of the face set, doubled.
    pub fn max_face_height2(&self) -> i32 {
        self.faces
            .iter()
            .map(|f| if f.is_horizontal() { f.z } else { f.z + 1 })
            .max()
            .unwrap_or(0)
    }
}

fn layer_key(c: &Cell) -> (i32, i32, i32) {
    (c.z, c.x, c.y)
}

/// Bounding faces of a finite cell set (faces bounding exactly one cell).
pub fn bounding_faces(cells: &[Cell]) -> Vec<Face> {
    let mut count: HashMap<Face, u8> = HashMap::new();
    for c in cells {
        for f in c.bounding_faces() {
            *count.entry(f).or_insert(0) += 1;
        }
    }
    let mut out: Vec<Face> = count
        .into_iter()
        .filter(|&(_, n)| n == 1)
        .map(|(f, _)| f)
        .collect();
    out.sort_unstable();
    out
}

fn check_x(dims: &BoxDims, x: Face) -> Result<(), PillarError> {
    if !x.is_horizontal() || x.z != 0 || !dims.footprint_contains(x.project()) {
        return Err(PillarError::NotInFootprint(x));
    }
    Ok(())
}

/// The pillar of `x` in the configuration `sigma`, which must be `σ(𝓘)`.
pub fn pillar_in(sigma: &SpinConfig, x: Face) -> Result<Pillar, PillarError> {
    let dims = *sigma.dims();
    check_x(&dims, x)?;
    let start = Cell::new(x.x, x.y, 1).expect("cell above an L0 face");
    let mut cells = Vec::new();
    if sigma.spin(start) == 1 {
        let mut seen = HashSet::new();
        let mut queue = VecDeque::new();
        seen.insert(start);
        queue.push_back(start);
        while let Some(c) = queue.pop_front() {
            cells.push(c);
            for &(dx, dy, dz) in Cell::star_offsets() {
                let nb = c.shifted(dx, dy, dz);
                if nb.z > 0 && dims.contains_cell(nb) && sigma.spin(nb) == 1 && seen.insert(nb) {
                    queue.push_back(nb);
                }
            }
        }
    }
    cells.sort_by_key(layer_key);
    let faces: Vec<Face> = bounding_faces(&cells)
        .into_iter()
        .filter(|f| f.z > 0)
        .collect();
    let height = cells.iter().map(|c| c.z + 1).max().unwrap_or(0) / 2;
    Ok(Pillar {
        x,
        cells,
        faces,
        height,
    })
}

/// The pillar `𝓟_x` of an interface.
pub fn pillar(i: &Interface, x: Face) -> Result<Pillar, PillarError> {
    check_x(i.dims(), x)?;
    let sigma = reconstruct_spins(i)?;
    pillar_in(&sigma, x)
}

/// One increment (or the remainder) of a spine.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Increment {
    /// Cells, sorted by (height, x, y); the first is the bottom cut-point.
    pub cells: Vec<Cell>,
    /// `𝓕(X)`: bounding faces without the bottom-most and top-most
    /// horizontal faces.
    pub faces: Vec<Face>,
    /// Number of unit height steps `hgt(v_{i+1}) − hgt(v_i)` covered.
    pub rise: i32,
    /// `𝔪(X) = |𝓕(X)| − 4(rise + 1)`.
    pub excess: i64,
}

impl Increment {
    fn build(cells: Vec<Cell>, top: Option<Face>, rise: i32) -> Self {
        let bottom = cells[0].bottom_face();
        let faces: Vec<Face> = bounding_faces(&cells)
            .into_iter()
            .filter(|&f| f != bottom && Some(f) != top)
            .collect();
        let excess = faces.len() as i64 - 4 * (rise as i64 + 1);
        Increment {
            cells,
            faces,
            rise,
            excess,
        }
    }

    /// The bottom cut-point.
    pub fn bottom(&self) -> Cell {
        self.cells[0]
    }

    /// The top cell used as delimiter (top cut-point for an increment).
    pub fn top(&self) -> Cell {
        *self.cells.last().expect("nonempty increment")
    }

    /// Whether this is the trivial increment `X_∅` (two stacked cells).
    pub fn is_trivial(&self) -> bool {
        self.cells.len() == 2
            && self.cells[0].x == self.cells[1].x
            && self.cells[0].y == self.cells[1].y
            && self.cells[1].z == self.cells[0].z + 2
    }

    /// Horizontal displacement (doubled) from the bottom to the top cell.
    pub fn displacement(&self) -> (i32, i32) {
        let (b, t) = (self.bottom(), self.top());
        (t.x - b.x, t.y - b.y)
    }

    /// `𝔪(X) ≥ 2(rise − 1) ∨ 2` and `|𝓕(X)| ≤ 3𝔪(X) + 4` for nontrivial `X`.
    pub fn satisfies_excess_bounds(&self) -> bool {
        if self.is_trivial() {
            return self.excess == 0;
        }
        self.excess >= (2 * (self.rise as i64 - 1)).max(2)
            && self.faces.len() as i64 <= 3 * self.excess + 4
    }
}

/// Base/spine split and increment sequence of a pillar.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PillarDecomposition {
    /// Cut-points `v₁, v₂, …` in increasing height.
    pub cut_points: Vec<Cell>,
    /// Base cells (strictly below `v₁`; the whole pillar without cut-points).
    pub base: Vec<Cell>,
    /// Spine cells (at or above `v₁`; empty without cut-points).
    pub spine: Vec<Cell>,
    /// `𝓕(𝓑_x)`: pillar faces not in the spine.
    pub base_faces: Vec<Face>,
    /// Pillar faces intersecting heights `≥ hgt(v₁)`.
    pub spine_faces: Vec<Face>,
    /// `𝓧₁ … 𝓧_𝒯`.
    pub increments: Vec<Increment>,
    /// `𝓧_{>𝒯}`, present whenever `v₁` exists.
    pub remainder: Option<Increment>,
    /// Doubled stand-in for `hgt(v₁)` (the real one, or `hgt(𝓟_x) − ½`).
    pub v1_height2: i32,
}

impl PillarDecomposition {
    /// `𝒯`, the number of increments.
    pub fn increment_count(&self) -> usize {
        self.increments.len()
    }

    pub fn v1(&self) -> Option<Cell> {
        self.cut_points.first().copied()
    }

    /// `𝓧_j` for `1 ≤ j ≤ 𝒯 + 1` (the last one being the remainder).
    pub fn increment(&self, j: usize) -> Option<&Increment> {
        if j == 0 {
            None
        } else if j <= self.increments.len() {
            Some(&self.increments[j - 1])
        } else if j == self.increments.len() + 1 {
            self.remainder.as_ref()
        } else {
            None
        }
    }

    /// All increments followed by the remainder.
    pub fn all_increments(&self) -> impl Iterator<Item = &Increment> {
        self.increments.iter().chain(self.remainder.iter())
    }
}

/// Decompose a nonempty pillar.
pub fn decompose(p: &Pillar) -> Result<PillarDecomposition, PillarError> {
    if p.is_empty() {
        return Err(PillarError::EmptyPillar);
    }
    let layers = p.layers();
    let cut_points: Vec<Cell> = layers
        .values()
        .filter(|l| l.len() == 1)
        .map(|l| l[0])
        .collect();
    let Some(&v1) = cut_points.first() else {
        return Ok(PillarDecomposition {
            cut_points,
            base: p.cells.clone(),
            spine: Vec::new(),
            base_faces: p.faces.clone(),
            spine_faces: Vec::new(),
            increments: Vec::new(),
            remainder: None,
            v1_height2: 2 * p.height - 1,
        });
    };
    let (base, spine): (Vec<Cell>, Vec<Cell>) = p.cells.iter().partition(|c| c.z < v1.z);
    let (base_faces, spine_faces): (Vec<Face>, Vec<Face>) =
        p.faces.iter().partition(|f| f.z < v1.z);
    let cells_between = |lo: i32, hi: i32| -> Vec<Cell> {
        spine
            .iter()
            .copied()
            .filter(|c| c.z >= lo && c.z <= hi)
            .collect()
    };
    let mut increments = Vec::new();
    for w in cut_points.windows(2) {
        let (a, b) = (w[0], w[1]);
        increments.push(Increment::build(
            cells_between(a.z, b.z),
            Some(b.top_face()),
            (b.z - a.z) / 2,
        ));
    }
    let last = *cut_points.last().expect("nonempty");
    let rem_cells = cells_between(last.z, i32::MAX);
    let top_z = rem_cells.last().expect("contains the cut-point").z;
    let top_face = rem_cells
        .iter()
        .rev()
        .find(|c| c.z == top_z)
        .map(|c| c.top_face());
    let remainder = Increment::build(rem_cells, top_face, (top_z - last.z) / 2);
    Ok(PillarDecomposition {
        cut_points,
        base,
        spine,
        base_faces,
        spine_faces,
        increments,
        remainder: Some(remainder),
        v1_height2: v1.z,
    })
}

/// Excess areas of the base, spine, increments and remainder.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExcessReport {
    pub m_base: i64,
    pub m_spine: i64,
    pub increments: Vec<i64>,
    pub m_remainder: Option<i64>,
}

/// `𝔪(𝓑_x) = |𝓕(𝓑_x)| − |𝓕(ρ(𝓑_x))| − 4(hgt(v₁) − ½)` and
/// `𝔪(𝓢_x) = Σ 𝔪(𝓧_i) + 𝔪(𝓧_{>𝒯})`.
pub fn excess_report(d: &PillarDecomposition) -> ExcessReport {
    let columns: HashSet<(i32, i32)> = d.base.iter().map(|c| (c.x, c.y)).collect();
    let m_base = d.base_faces.len() as i64
        - columns.len() as i64
        - 4 * ((d.v1_height2 - 1) / 2) as i64;
    let increments: Vec<i64> = d.increments.iter().map(|x| x.excess).collect();
    let m_remainder = d.remainder.as_ref().map(|r| r.excess);
    let m_spine = increments.iter().sum::<i64>() + m_remainder.unwrap_or(0);
    ExcessReport {
        m_base,
        m_spine,
        increments,
        m_remainder,
    }
}

/// Squared Euclidean diameter of a cell set, in doubled units (`(2·diam)²`).
pub fn diameter2(cells: &[Cell]) -> i64 {
    let mut best = 0;
    for (i, a) in cells.iter().enumerate() {
        for b in &cells[i + 1..] {
            let (dx, dy, dz) = ((a.x - b.x) as i64, (a.y - b.y) as i64, (a.z - b.z) as i64);
            best = best.max(dx * dx + dy * dy + dz * dz);
        }
    }
    best
}

/// Decide `√a ≤ √b + m` exactly (`a, b ≥ 0`, `m` any integer).
fn sqrt_le_sqrt_plus(a: i128, b: i128, m: i128) -> bool {
    if m >= 0 {
        crate::lattice::sqrt_le_sum_sqrt(a, b, m * m)
    } else {
        // √a + |m| ≤ √b  ⇔  4m²a ≤ (b − a − m²)² with b − a − m² ≥ 0.
        let rhs = b - a - m * m;
        rhs >= 0 && 4 * m * m * a <= rhs * rhs
    }
}

/// Tameness: `diam(𝓑_x) + ¼𝔪(𝓢_x) < d(x, ∂Λ)`.
pub fn is_tame_decomposed(dims: &BoxDims, x: Face, d: &PillarDecomposition) -> bool {
    let r = excess_report(d);
    // In doubled units: √(4·diam2) + m < 2·gap.
    let b = 4 * diameter2(&d.base) as i128;
    let rhs = 2 * dims.boundary_gap2x(x) as i128 - r.m_spine as i128;
    rhs > 0 && b < rhs * rhs
}

/// Tameness of the pillar of `x` in `I`.
pub fn is_tame(i: &Interface, x: Face) -> Result<bool, PillarError> {
    let p = pillar(i, x)?;
    let d = decompose(&p)?;
    Ok(is_tame_decomposed(i.dims(), x, &d))
}

/// Outcome of the geometric observation
/// `max_{f ∈ 𝓟_x} d(x, ρ(f)) ≤ diam(𝓑_x) + ¼𝔪(𝓢_x)`, with `d` the distance
/// between `x` and `ρ(f)` as closed sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometricCheck {
    pub max_distance: f64,
    pub bound: f64,
    pub holds: bool,
}

pub fn geometric_check(p: &Pillar, d: &PillarDecomposition) -> GeometricCheck {
    let r = excess_report(d);
    let xp = p.x.project();
    let a = p
        .faces
        .iter()
        .map(|f| set_dist2(xp, f.project()))
        .max()
        .unwrap_or(0);
    let b = diameter2(&d.base);
    let holds = sqrt_le_sqrt_plus(4 * a as i128, 4 * b as i128, r.m_spine as i128);
    GeometricCheck {
        max_distance: (a as f64).sqrt() / 2.0,
        bound: (b as f64).sqrt() / 2.0 + r.m_spine as f64 / 4.0,
        holds,
    }
}

/// Squared distance (doubled units) between two closed elements of `𝓛₀`
/// viewed as point sets (unit squares or unit segments).
pub fn set_dist2(a: Proj, b: Proj) -> i64 {
    let half = |v: i32| if v & 1 == 1 { 1 } else { 0 };
    let gap = |u: i32, v: i32| ((u - v).abs() - half(u) - half(v)).max(0) as i64;
    let (gx, gy) = (gap(a.x, b.x), gap(a.y, b.y));
    gx * gx + gy * gy
}

/// `A_h^x` on a raw configuration: the cell above `x` is joined by plus
/// cells with centres at heights in `(0, h)` to a cell at height `h − ½`.
pub fn event_a(config: &SpinConfig, x: Face, h: i32) -> bool {
    let dims = config.dims();
    if h < 1 || !dims.footprint_contains(x.project()) {
        return false;
    }
    let start = Cell::new(x.x, x.y, 1).expect("cell above an L0 face");
    if config.spin(start) != 1 {
        return false;
    }
    let target = 2 * h - 1;
    let mut seen = HashSet::new();
    let mut stack = vec![start];
    seen.insert(start);
    while let Some(c) = stack.pop() {
        if c.z == target {
            return true;
        }
        for &(dx, dy, dz) in Cell::star_offsets() {
            let nb = c.shifted(dx, dy, dz);
            if nb.z > 0
                && nb.z <= target
                && dims.contains_cell(nb)
                && config.spin(nb) == 1
                && seen.insert(nb)
            {
                stack.push(nb);
            }
        }
    }
    false
}

/// `E_h^x`: `hgt(𝓟_x) ≥ h`.
pub fn event_e(p: &Pillar, h: i32) -> bool {
    !p.is_empty() && p.height >= h
}

/// Whether the base of a pillar is empty (false for an empty pillar).
pub fn base_is_empty(p: &Pillar) -> bool {
    match p.cells.first() {
        None => false,
        Some(first) => p.cells.iter().filter(|c| c.z == first.z).count() == 1 && first.z == 1,
    }
}

/// `G_h^x = A_h^x ∩ E_h^x ∩ {𝓑_x = ∅}`.
pub fn event_g(config: &SpinConfig, p: &Pillar, h: i32) -> bool {
    event_e(p, h) && base_is_empty(p) && event_a(config, p.x, h)
}

/// How the spine's faces split into walls and ceiling faces of `I`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpineWallReport {
    /// Number of distinct walls meeting the spine's wall faces.
    pub walls: usize,
    /// Spine faces labelled ceiling.
    pub ceiling_faces: usize,
    /// Ceiling faces of the spine projecting outside `ρ(v₁)`.
    pub ceiling_outside_v1: usize,
}

impl SpineWallReport {
    /// One wall plus at most one ceiling face, projecting into `ρ(v₁)`.
    pub fn holds(&self) -> bool {
        self.walls <= 1 && self.ceiling_faces <= 1 && self.ceiling_outside_v1 == 0
    }
}

/// Wall membership of the faces of an interface: its classification plus
/// the *-connected component (wall) of every wall face. Build once per
/// interface to query many pillars.
#[derive(Debug, Clone)]
pub struct WallMembership {
    cls: FaceClassification,
    wall_faces: Vec<Face>,
    labels: Vec<usize>,
}

impl WallMembership {
    pub fn new(i: &Interface) -> Self {
        let cls = classify(i);
        let wall_faces: Vec<Face> = cls.wall_faces().collect();
        let (_, labels) = star_components(&wall_faces);
        WallMembership {
            cls,
            wall_faces,
            labels,
        }
    }

    /// The wall containing `f`, if `f` is a wall face.
    pub fn wall_of(&self, f: Face) -> Option<usize> {
        self.wall_faces
            .binary_search(&f)
            .ok()
            .map(|k| self.labels[k])
    }

    /// Classify the spine faces of a decomposed pillar.
    pub fn spine_report(&self, d: &PillarDecomposition) -> SpineWallReport {
        let mut walls = HashSet::new();
        let mut ceiling_faces = 0;
        let mut ceiling_outside_v1 = 0;
        let v1 = d.v1().map(|c| c.project());
        for f in &d.spine_faces {
            match self.cls.label(*f) {
                Some(FaceLabel::Wall) => {
                    walls.insert(self.wall_of(*f).expect("wall face"));
                }
                Some(FaceLabel::Ceiling) => {
                    ceiling_faces += 1;
                    if Some(f.project()) != v1 {
                        ceiling_outside_v1 += 1;
                    }
                }
                None => {}
            }
        }
        SpineWallReport {
            walls: walls.len(),
            ceiling_faces,
            ceiling_outside_v1,
        }
    }

    /// Whether all four side faces of every cut-point of `σ(𝓘)` lie in one
    /// common wall.
    pub fn cut_points_share_wall(&self, sigma: &SpinConfig) -> bool {
        let mut seen = HashSet::new();
        for c in interface_cut_points(sigma) {
            for f in c.side_faces() {
                match self.wall_of(f) {
                    Some(w) => {
                        seen.insert(w);
                    }
                    None => return false,
                }
            }
        }
        seen.len() <= 1
    }
}

/// Classify the spine faces of the pillar of `x` against the walls of `I`.
pub fn spine_wall_report(i: &Interface, d: &PillarDecomposition) -> SpineWallReport {
    WallMembership::new(i).spine_report(d)
}

/// Global cut-points of `σ(𝓘)`: upper half-space layers holding exactly one
/// plus cell.
pub fn interface_cut_points(sigma: &SpinConfig) -> Vec<Cell> {
    let mut layers: BTreeMap<i32, Vec<Cell>> = BTreeMap::new();
    for c in sigma.dims().cells() {
        if c.z > 0 && sigma.spin(c) == 1 {
            layers.entry(c.z).or_default().push(c);
        }
    }
    layers
        .into_values()
        .filter(|l| l.len() == 1)
        .map(|l| l[0])
        .collect()
}

/// Whether all four side faces of every cut-point of `σ(𝓘)` lie in one
/// common wall of `𝓘`.
pub fn cut_points_share_wall(i: &Interface, sigma: &SpinConfig) -> bool {
    interface_cut_points(sigma).is_empty() || WallMembership::new(i).cut_points_share_wall(sigma)
}

/// Projection `ρ` of a cell set onto `𝓛₀` faces.
pub fn project_cells(cells: &[Cell]) -> Vec<Proj> {
    let mut out: Vec<Proj> = cells.iter().map(|c| c.project()).collect();
    out.sort_unstable();
    out.dedup();
    debug_assert!(out.iter().all(|p| p.kind() == ProjKind::Face));
    out
}
