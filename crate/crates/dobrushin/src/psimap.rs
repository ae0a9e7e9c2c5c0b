//! The pillar-straightening map `Ψ_{x,t}`, its height-indexed variant
//! `Ψ̃_{x,ℓ}`, and an audit re-deriving every structural guarantee.
//!
//! The map works on the standard wall representation of `𝓘 ∖ 𝓢_x`, realised
//! by flipping the spine cells of `σ(𝓘)` to minus and re-extracting. It
//! deletes the base of the pillar together with every group of walls the
//! (horizontally shifted) spine comes close to, erects a column of trivial
//! increments over `x` up to `hgt(v₁)`, and re-attaches the spine with some
//! increments trivialised and the others translated.
//!
//! All distances are kept as squared distances in doubled units, so that a
//! threshold `d ≤ r` becomes `D ≤ (2r)²` in integers.

use std::cell::OnceCell;
use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interface::{extract, reconstruct_spins, Interface, InterfaceError};
use crate::lattice::{BoxDims, Cell, Face, Proj};
use crate::pillars::{
    decompose, excess_report, is_tame_decomposed, pillar_in, Pillar, PillarDecomposition,
    PillarError,
};
use crate::walls::{
    reconstruct, standardize, walls_of, CollectionAnalysis, StandardWall,
    StandardWallCollection, Wall, WallError,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PsiError {
    #[error(transparent)]
    Interface(#[from] InterfaceError),
    #[error(transparent)]
    Pillar(#[from] PillarError),
    #[error(transparent)]
    Wall(#[from] WallError),
    #[error("the interface is not tame at {0:?}")]
    NotTame(Face),
    #[error("the pillar at {0:?} is empty")]
    EmptyPillar(Face),
    #[error("increment index must be at least 1")]
    InvalidIncrement,
    #[error("no wall is indexed by {0:?}")]
    UnknownIndex(Face),
    #[error("the re-attached spine collides with the interface at {0:?}")]
    SpineCollision(Cell),
    #[error("the re-attached spine leaves the box at {0:?}")]
    SpineOutsideBox(Cell),
}

/// Which degenerate case of the map applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Exceptional {
    /// At least two cut-points.
    None,
    /// Exactly one cut-point: the remainder plays the role of `𝓧₁`.
    SingleCutPoint,
    /// No cut-point: a top cell of the pillar stands in for `v₁`, the spine
    /// is empty and the stand-in `𝓧₁ = ∅` has `𝔪 = −4`.
    NoCutPoint,
}

/// Which criterion family a trigger record belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    A,
    B,
}

/// A wall that met a distance criterion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistanceHit {
    pub y: Face,
    /// `(2𝔇)²`.
    pub d2: i64,
    /// `𝔪(W̃_y)`.
    pub wall_excess: i64,
    /// `𝔪(𝔉̃_y)`.
    pub family_excess: i64,
}

/// Criteria evaluated at one increment index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriggerRecord {
    pub phase: Phase,
    /// `j` in phase A, `k` in phase B.
    pub index: usize,
    /// Last trivialised index `s` before this index (`𝔰_j`), which also
    /// fixes the shift `ω₁ = −v_{s+1}`.
    pub s: usize,
    /// `𝔰_{j+1}` as set after evaluating this index.
    pub s_next: usize,
    /// (A1)/(B1): the excess threshold.
    pub excess_fired: bool,
    /// (A2)/(B2): every wall within `𝔪(W̃_y)`.
    pub close_walls: Vec<DistanceHit>,
    /// (A3)/(B3): the minimal wall index within the index threshold.
    pub index_wall: Option<DistanceHit>,
}

impl TriggerRecord {
    pub fn fired(&self) -> bool {
        self.excess_fired || !self.close_walls.is_empty() || self.index_wall.is_some()
    }
}

/// Everything the map decided, with the quantities the audit re-checks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MapAudit {
    pub x: Face,
    pub t: usize,
    /// `τ_ℓ` when produced by [`psi_at_height`].
    pub tau: Option<usize>,
    pub exceptional: Exceptional,
    /// `𝒯` of the original pillar.
    pub increment_count: usize,
    pub pillar_height: i32,
    /// `𝐘`: indices marked for deletion.
    pub marked_y: BTreeSet<Face>,
    /// `𝐃`: indices of deleted walls.
    pub deleted_d: BTreeSet<Face>,
    /// `𝔰₁ … 𝔰_{𝒯+2}`.
    pub shift_schedule: Vec<usize>,
    pub j_star: usize,
    pub k_star: usize,
    pub y_star_a: Option<Face>,
    pub y_star_b: Option<Face>,
    pub y_dagger: Option<Face>,
    /// Doubled `h†`.
    pub h_dagger2: Option<i32>,
    /// `|W_x^𝓙|`.
    pub wx_j_size: usize,
    /// `𝔪(𝐖) = Σ_{z ∈ 𝐃} 𝔪(W̃_z)`.
    pub deleted_excess: i64,
    /// `Σ_{j ≤ j*} 𝔪(𝓧_j)`.
    pub trivialized_a_excess: i64,
    /// `𝟏{t > j*} Σ_{t ≤ k ≤ k*} 𝔪(𝓧_k)`.
    pub trivialized_b_excess: i64,
    /// `𝔪(𝐖) + Σ 𝔪(𝓧) − |W_x^𝓙|`: the excess predicted from the
    /// decomposition alone.
    pub excess_formula: i64,
    /// Predicted `𝔪(𝓘; 𝓙)`: `excess_formula + spine_detachment`.
    pub excess_m: i64,
    /// Faces of `𝓘` lost beyond the spine's own faces when the spine is
    /// removed: nonzero exactly when the bottom face of `v₁` already belongs
    /// to `𝓘` (an overhang below the first cut-point), in which case removing
    /// the spine does not restore a face below it.
    pub spine_detachment: i64,
    /// `|𝓘|` and `|𝓙|`.
    pub i_len: usize,
    pub j_len: usize,
    /// `𝔪(𝔚̃_{v₁} ∪ 𝔚̃_{y†})`.
    pub base_walls_excess: i64,
    /// Minimal number of vertical faces of `𝔚̃_{v₁} ∪ 𝔚̃_{y†}` over the
    /// slabs `½, …, hgt(v₁) − 1` (when `y†` exists and the range is nonempty).
    pub base_walls_min_slab_faces: Option<usize>,
    pub trigger_log: Vec<TriggerRecord>,
    /// For the height-indexed map: `|𝓕(𝓟_x ∩ 𝓛_ℓ)| − 4`.
    pub height_bound: Option<i64>,
}

/// A violated audit invariant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Violation {
    /// `|𝓘| − |𝓙|` differs from the predicted excess.
    EnergyAccounting { predicted: i64, actual: i64 },
    /// `|W_x^𝓙| ≤ 2𝔪(𝓘;𝓙)`.
    ColumnBound,
    /// `|W_x^𝓙| ≤ ⅔ 𝔪(𝔚̃_{v₁} ∪ 𝔚̃_{y†})`.
    ColumnBaseWallsBound,
    /// `𝔪(𝐖) ≤ 3𝔪(𝓘;𝓙)`.
    DeletedWallsBound,
    /// `j* − 1 ≤ 6𝔪(𝓘;𝓙)`.
    FirstIndexBound,
    /// `k* − t ≤ 6𝔪(𝓘;𝓙)`.
    SecondIndexBound,
    /// The shift schedule moved without a trigger, or moved elsewhere.
    ShiftSchedule { index: usize },
    /// `j − 1 ≤ 𝔇 + 𝔪(𝔉̃_y)` failed for a triggering wall.
    DistanceFact { index: usize, y: Face },
    /// Fewer than six faces in some slab below `v₁` when `y†` exists.
    BaseWallsSlab { faces: usize },
    /// The pillar of `x` in `𝓙` changed height.
    HeightChanged { before: i32, after: i32 },
    /// The pillar of `x` in `𝓙` has fewer increments.
    IncrementsLost { before: usize, after: usize },
    /// `𝓙` is not a valid interface.
    InvalidOutput,
    /// `𝔪(𝓘; Ψ̃(𝓘)) ≥ |𝓕(𝓟_x ∩ 𝓛_ℓ)| − 4` failed.
    HeightIndexedBound { bound: i64 },
}

/// Result of [`audit_check`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditReport {
    pub violations: Vec<Violation>,
}

impl AuditReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Axis-aligned closed box in doubled coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Aabb {
    lo: [i32; 3],
    hi: [i32; 3],
}

impl Aabb {
    fn cell(c: Cell) -> Self {
        Aabb {
            lo: [c.x - 1, c.y - 1, c.z - 1],
            hi: [c.x + 1, c.y + 1, c.z + 1],
        }
    }

    fn face(f: Face) -> Self {
        let ext = |v: i32| if v & 1 == 1 { 1 } else { 0 };
        Aabb {
            lo: [f.x - ext(f.x), f.y - ext(f.y), f.z - ext(f.z)],
            hi: [f.x + ext(f.x), f.y + ext(f.y), f.z + ext(f.z)],
        }
    }

    fn dist2(&self, o: &Aabb) -> i64 {
        (0..3)
            .map(|a| {
                let g = (self.lo[a] - o.hi[a]).max(o.lo[a] - self.hi[a]).max(0) as i64;
                g * g
            })
            .sum()
    }

    fn horizontal_dist2(&self, o: &Aabb) -> i64 {
        (0..2)
            .map(|a| {
                let g = (self.lo[a] - o.hi[a]).max(o.lo[a] - self.hi[a]).max(0) as i64;
                g * g
            })
            .sum()
    }

    fn union(&self, o: &Aabb) -> Aabb {
        Aabb {
            lo: [0, 1, 2].map(|a| self.lo[a].min(o.lo[a])),
            hi: [0, 1, 2].map(|a| self.hi[a].max(o.hi[a])),
        }
    }
}

/// One increment of the spine as seen by the map (`𝓧_j`, `1 ≤ j ≤ 𝒯 + 1`).
#[derive(Debug, Clone)]
struct IncrementView {
    cells: Vec<Cell>,
    excess: i64,
    bottom_z: i32,
    top_z: i32,
}

/// The map's working state for one `(𝓘, x)`, reusable across `t`.
#[derive(Debug)]
pub struct PsiContext {
    interface: Interface,
    x: Face,
    pillar: Pillar,
    decomposition: PillarDecomposition,
    exceptional: Exceptional,
    /// `v₁ … v_{𝒯+1}` (or the stand-in).
    v: Vec<Cell>,
    increments: Vec<IncrementView>,
    /// `𝓘 ∖ 𝓢_x`.
    remainder: Interface,
    collection: StandardWallCollection,
    analysis: CollectionAnalysis,
    actual_walls: Vec<Wall>,
    families: Vec<BTreeSet<Face>>,
    family_walls: Vec<OnceCell<Option<Vec<Wall>>>>,
}

impl PsiContext {
    /// Prepare the map at `x`; fails on empty or non-tame pillars.
    pub fn new(i: &Interface, x: Face) -> Result<Self, PsiError> {
        let dims = *i.dims();
        let sigma = reconstruct_spins(i)?;
        let pillar = pillar_in(&sigma, x)?;
        if pillar.is_empty() {
            return Err(PsiError::EmptyPillar(x));
        }
        let decomposition = decompose(&pillar)?;
        if !is_tame_decomposed(&dims, x, &decomposition) {
            return Err(PsiError::NotTame(x));
        }
        let (exceptional, v, increments) = if decomposition.cut_points.is_empty() {
            let top_z = pillar.cells.last().expect("nonempty").z;
            let stand_in = *pillar
                .cells
                .iter()
                .find(|c| c.z == top_z)
                .expect("top layer");
            let view = IncrementView {
                cells: Vec::new(),
                excess: -4,
                bottom_z: top_z,
                top_z,
            };
            (Exceptional::NoCutPoint, vec![stand_in], vec![view])
        } else {
            let kind = if decomposition.cut_points.len() == 1 {
                Exceptional::SingleCutPoint
            } else {
                Exceptional::None
            };
            let views = decomposition
                .all_increments()
                .map(|x| IncrementView {
                    cells: x.cells.clone(),
                    excess: x.excess,
                    bottom_z: x.bottom().z,
                    top_z: x.cells.iter().map(|c| c.z).max().expect("nonempty"),
                })
                .collect();
            (kind, decomposition.cut_points.clone(), views)
        };
        let remainder = if decomposition.spine.is_empty() {
            i.clone()
        } else {
            let mut cut = sigma.clone();
            for &c in &decomposition.spine {
                cut.set(c, -1).expect("spine cell in box");
            }
            extract(&cut)
        };
        let collection = standardize(&remainder)?;
        let analysis = CollectionAnalysis::new(&collection);
        let actual_walls = walls_of(&remainder)?;
        let mut families: BTreeSet<BTreeSet<Face>> = BTreeSet::new();
        for u in dims.footprint() {
            if let Ok(seq) = analysis.nested_sequence_in_box(&collection, u.project(), &dims) {
                if !seq.family.is_empty() {
                    families.insert(seq.family);
                }
            }
        }
        let families: Vec<BTreeSet<Face>> = families.into_iter().collect();
        let family_walls = (0..families.len()).map(|_| OnceCell::new()).collect();
        Ok(PsiContext {
            interface: i.clone(),
            x,
            pillar,
            decomposition,
            exceptional,
            v,
            increments,
            remainder,
            collection,
            analysis,
            actual_walls,
            families,
            family_walls,
        })
    }

    pub fn pillar(&self) -> &Pillar {
        &self.pillar
    }

    pub fn decomposition(&self) -> &PillarDecomposition {
        &self.decomposition
    }

    /// The interface `𝓘 ∖ 𝓢_x`.
    pub fn remainder(&self) -> &Interface {
        &self.remainder
    }

    /// The standard wall representation of `𝓘 ∖ 𝓢_x`.
    pub fn collection(&self) -> &StandardWallCollection {
        &self.collection
    }

    /// `𝒯 + 1`: the number of increments including the remainder.
    pub fn last_index(&self) -> usize {
        self.increments.len()
    }

    fn dims(&self) -> BoxDims {
        *self.interface.dims()
    }

    /// `v_i` for `1 ≤ i ≤ 𝒯 + 1`.
    fn v(&self, i: usize) -> Cell {
        self.v[i - 1]
    }

    /// Doubled height of `v_i` for `1 ≤ i ≤ 𝒯 + 2` (the last a stand-in).
    fn vz(&self, i: usize) -> i32 {
        if i <= self.v.len() {
            self.v[i - 1].z
        } else {
            self.increments.last().expect("nonempty").top_z
        }
    }

    fn family_of(&self, y: Face) -> Result<BTreeSet<Face>, PsiError> {
        let dims = self.dims();
        if !dims.footprint_contains(y.project()) {
            return Ok(BTreeSet::new());
        }
        Ok(self
            .analysis
            .nested_sequence_in_box(&self.collection, y.project(), &dims)?
            .family)
    }

    fn family_excess(&self, family: &BTreeSet<Face>) -> i64 {
        family
            .iter()
            .filter_map(|&z| self.collection.get(z))
            .map(|w| w.excess())
            .sum()
    }

    fn walls_after_deleting(&self, k: usize) -> Option<&Vec<Wall>> {
        self.family_walls[k]
            .get_or_init(|| {
                let mut c = self.collection.clone();
                for z in &self.families[k] {
                    c.remove(*z);
                }
                let k_prime = reconstruct(&c, &self.dims()).ok()?;
                walls_of(&k_prime).ok()
            })
            .as_ref()
    }

    /// `Θ↕ W̃_y`: the face sets `W_y^{𝓚′} ∪ ⌈W_y^{𝓚′}⌉` over `𝓚′` equal to
    /// `𝓘 ∖ 𝓢_x` or to it with one family `𝔉̃_{y′}` deleted.
    pub fn theta_updown(&self, y: Face) -> Result<Vec<Vec<Face>>, PsiError> {
        if !self.collection.contains(y) {
            return Err(PsiError::UnknownIndex(y));
        }
        let mut out: Vec<Vec<Face>> = Vec::new();
        let mut push = |w: &Wall| {
            let mut faces = w.faces.clone();
            faces.extend(w.ceilings.iter().copied());
            faces.sort_unstable();
            if !out.contains(&faces) {
                out.push(faces);
            }
        };
        if let Some(w) = self.actual_walls.iter().find(|w| w.index == y) {
            push(w);
        }
        for k in 0..self.families.len() {
            if self.families[k].contains(&y) {
                continue;
            }
            if let Some(walls) = self.walls_after_deleting(k) {
                if let Some(w) = walls.iter().find(|w| w.index == y) {
                    push(w);
                }
            }
        }
        Ok(out)
    }

    /// Target boxes of `𝔇_x(·, j, ω₁, ω₂)`: `𝓧_j`, `θ_{ρ(x+ω₁+ω₂)}𝓧_j` and
    /// `θ_{ρ(x+ω₂)}Θ_∅𝓧_j`.
    fn targets(&self, j: usize, omega1: (i32, i32), omega2: (i32, i32)) -> Vec<Aabb> {
        let inc = &self.increments[j - 1];
        let mut out: Vec<Aabb> = inc.cells.iter().map(|&c| Aabb::cell(c)).collect();
        // θ translates the increment so that its base sits over the shifted
        // position; offsets are even in doubled units.
        let (sx, sy) = (omega1.0 + omega2.0, omega1.1 + omega2.1);
        out.extend(
            inc.cells
                .iter()
                .map(|c| Aabb::cell(c.shifted(sx, sy, 0))),
        );
        let (cx, cy) = (self.x.x + omega2.0, self.x.y + omega2.1);
        out.push(Aabb {
            lo: [cx - 1, cy - 1, inc.bottom_z - 1],
            hi: [cx + 1, cy + 1, self.increment_top_z(j) + 1],
        });
        out
    }

    fn increment_top_z(&self, j: usize) -> i32 {
        self.vz(j + 1).max(self.increments[j - 1].bottom_z)
    }

    /// `(2𝔇_x(W̃_y, j, ω₁, ω₂))²`, or `None` when `Θ↕ W̃_y` is empty.
    /// `ω₁, ω₂` are doubled horizontal offsets relative to `ρ(x)`.
    pub fn dist_d(
        &self,
        y: Face,
        j: usize,
        omega1: (i32, i32),
        omega2: (i32, i32),
    ) -> Result<Option<i64>, PsiError> {
        if j == 0 || j > self.last_index() {
            return Err(PsiError::InvalidIncrement);
        }
        let targets = self.targets(j, omega1, omega2);
        let cands = self.theta_updown(y)?;
        Ok(min_distance(&cands, &targets))
    }

    /// Run the map for increment index `t ≥ 1`.
    pub fn run(&self, t: usize) -> Result<(Interface, MapAudit), PsiError> {
        if t == 0 {
            return Err(PsiError::InvalidIncrement);
        }
        let dims = self.dims();
        let last = self.last_index();
        let x = self.x;
        let v1 = self.v(1);
        let k1 = (v1.z - 1) / 2;

        // Step 2: mark [x] and ρ(v₁).
        let mut marked: BTreeSet<Face> = BTreeSet::new();
        marked.insert(x);
        for p in x.project().face_neighbors() {
            if dims.footprint_contains(p) {
                marked.insert(Face::l0_at(p));
            }
        }
        marked.insert(Face::l0_at(v1.project()));

        // Step 3: the highest cut-height of the interface of 𝔚̃_{v₁}.
        let v1_seq = self
            .analysis
            .nested_sequence_in_box(&self.collection, v1.project(), &dims)?;
        let (h_dagger2, y_dagger) = self.step_three(&v1_seq.walls)?;
        if let Some(y) = y_dagger {
            marked.insert(y);
        }

        // Step 4: spine modification (A).
        let mut sched = vec![0usize; last + 2];
        let mut log = Vec::new();
        let mut y_star_a = None;
        if self.exceptional == Exceptional::NoCutPoint {
            sched[last + 1] = 1;
        } else {
            for j in 1..=last {
                let s = sched[j];
                sched[j + 1] = s;
                let omega1 = (-(self.v(s + 1).x - x.x), -(self.v(s + 1).y - x.y));
                let mut rec = self.evaluate(Phase::A, j, s, omega1, (0, 0), (j - 1) as i64, &mut marked);
                if rec.fired() {
                    sched[j + 1] = j;
                    rec.s_next = j;
                }
                if let Some(h) = &rec.index_wall {
                    y_star_a = Some(h.y);
                }
                log.push(rec);
            }
        }
        let j_star = sched[last + 1];
        if let Some(y) = y_star_a {
            marked.insert(y);
        }

        // Step 5: spine modification (B).
        let b_active = t > j_star && t <= last;
        let mut y_star_b = None;
        let k_star = if b_active {
            sched[t] = t - 1;
            let vj = self.v(j_star + 1);
            let omega2 = (self.v(t).x - vj.x, self.v(t).y - vj.y);
            for k in t..=last {
                let s = sched[k];
                sched[k + 1] = s;
                let omega1 = (-(self.v(s + 1).x - x.x), -(self.v(s + 1).y - x.y));
                let mut rec = self.evaluate(Phase::B, k, s, omega1, omega2, (k - t) as i64, &mut marked);
                if rec.fired() {
                    sched[k + 1] = k;
                    rec.s_next = k;
                }
                if let Some(h) = &rec.index_wall {
                    y_star_b = Some(h.y);
                }
                log.push(rec);
            }
            sched[last + 1]
        } else {
            j_star
        };
        if let Some(y) = y_star_b {
            marked.insert(y);
        }

        // Step 6: delete the families of every marked index.
        let mut deleted = BTreeSet::new();
        for &y in &marked {
            deleted.extend(self.family_of(y)?);
        }
        let mut coll = self.collection.clone();
        for z in &deleted {
            coll.remove(*z);
        }
        let deleted_excess = self.family_excess(&deleted);

        // Step 7: the column W_x^𝓙 of hgt(v₁) − ½ trivial increments.
        let column: Vec<Face> = (0..k1)
            .flat_map(|k| Cell::new(x.x, x.y, 2 * k + 1).expect("cell").side_faces())
            .collect();
        let wx_j_size = column.len();
        if !column.is_empty() {
            coll.insert(StandardWall::new(column)?)?;
        }

        // Step 8: the interface 𝓚.
        let k_interface = reconstruct(&coll, &dims)?;

        // Steps 9–10: the new spine, appended at x + (0, 0, hgt(v₁)).
        let spine = self.new_spine(t, j_star, k_star, b_active);
        let mut sigma = reconstruct_spins(&k_interface)?;
        for &c in &spine {
            if !dims.contains_cell(c) {
                return Err(PsiError::SpineOutsideBox(c));
            }
            if sigma.spin(c) == 1 {
                return Err(PsiError::SpineCollision(c));
            }
            sigma.set(c, 1).expect("inside the box");
        }
        let j_interface = extract(&sigma);
        // The new faces must be exactly the spine's own faces.
        let base_face = Cell::new(x.x, x.y, v1.z).expect("cell").bottom_face();
        let mut expected: BTreeSet<Face> = k_interface.faces().iter().copied().collect();
        expected.remove(&base_face);
        for f in crate::pillars::bounding_faces(&spine) {
            if f != base_face && !expected.insert(f) {
                return Err(PsiError::SpineCollision(spine[0]));
            }
        }
        if j_interface.faces().iter().copied().ne(expected.iter().copied()) {
            let culprit = spine
                .iter()
                .copied()
                .find(|c| {
                    c.bounding_faces()
                        .iter()
                        .any(|f| !j_interface.contains(*f) && *f != base_face)
                })
                .unwrap_or(spine[0]);
            return Err(PsiError::SpineCollision(culprit));
        }

        let trivialized_a_excess: i64 = (1..=j_star.min(last))
            .map(|j| self.increments[j - 1].excess)
            .sum();
        let trivialized_b_excess: i64 = if b_active {
            (t..=k_star).map(|k| self.increments[k - 1].excess).sum()
        } else {
            0
        };
        let excess_formula =
            deleted_excess + trivialized_a_excess + trivialized_b_excess - wx_j_size as i64;
        let spine_detachment = if self.decomposition.spine.is_empty() {
            0
        } else {
            let spine_faces = crate::pillars::bounding_faces(&self.decomposition.spine).len();
            self.interface.len() as i64 - self.remainder.len() as i64 - (spine_faces as i64 - 2)
        };
        let (base_walls_excess, base_walls_min_slab_faces) =
            self.base_walls_data(&v1_seq.walls, y_dagger, k1)?;
        let audit = MapAudit {
            x,
            t,
            tau: None,
            exceptional: self.exceptional,
            increment_count: self.decomposition.increment_count(),
            pillar_height: self.pillar.height,
            marked_y: marked,
            deleted_d: deleted,
            shift_schedule: sched[1..].to_vec(),
            j_star,
            k_star,
            y_star_a,
            y_star_b,
            y_dagger,
            h_dagger2,
            wx_j_size,
            deleted_excess,
            trivialized_a_excess,
            trivialized_b_excess,
            excess_formula,
            excess_m: excess_formula + spine_detachment,
            spine_detachment,
            i_len: self.interface.len(),
            j_len: j_interface.len(),
            base_walls_excess,
            base_walls_min_slab_faces,
            trigger_log: log,
            height_bound: None,
        };
        Ok((j_interface, audit))
    }

    /// Evaluate the three criteria at one index; marks every (A2)/(B2) wall.
    #[allow(clippy::too_many_arguments)]
    fn evaluate(
        &self,
        phase: Phase,
        index: usize,
        s: usize,
        omega1: (i32, i32),
        omega2: (i32, i32),
        threshold: i64,
        marked: &mut BTreeSet<Face>,
    ) -> TriggerRecord {
        let inc = &self.increments[index - 1];
        let mut rec = TriggerRecord {
            phase,
            index,
            s,
            excess_fired: inc.excess >= threshold,
            s_next: s,
            close_walls: Vec::new(),
            index_wall: None,
        };
        let targets = self.targets(index, omega1, omega2);
        let hull = targets
            .iter()
            .skip(1)
            .fold(targets[0], |acc, b| acc.union(b));
        let index_limit = threshold * threshold;
        for w in self.collection.walls() {
            let m = w.excess();
            let limit = (4 * m * m).max(index_limit);
            let (x0, x1, y0, y1) = w.geometry().bbox();
            let wall_box = Aabb {
                lo: [x0 - 1, y0 - 1, i32::MIN / 4],
                hi: [x1 + 1, y1 + 1, i32::MAX / 4],
            };
            if wall_box.horizontal_dist2(&hull) > limit {
                continue;
            }
            let Ok(cands) = self.theta_updown(w.index()) else {
                continue;
            };
            let Some(d2) = min_distance(&cands, &targets) else {
                continue;
            };
            let hit = || DistanceHit {
                y: w.index(),
                d2,
                wall_excess: m,
                family_excess: self
                    .family_of(w.index())
                    .map(|f| self.family_excess(&f))
                    .unwrap_or(0),
            };
            if d2 <= 4 * m * m {
                rec.close_walls.push(hit());
                marked.insert(w.index());
            }
            if threshold >= 0 && d2 <= index_limit && rec.index_wall.is_none() {
                rec.index_wall = Some(hit());
            }
        }
        rec
    }

    /// `h†` and `y†`: the highest cut-height of the interface built from
    /// `𝔚̃_{v₁}` alone, and the minimal index of a wall of `𝓘 ∖ 𝓢_x` meeting
    /// `(𝓟_x ∖ 𝒪_{v₁}) ∩ 𝓛_{h†}`.
    fn step_three(&self, v1_walls: &[Face]) -> Result<(Option<i32>, Option<Face>), PsiError> {
        let dims = self.dims();
        let mut c = StandardWallCollection::new();
        for &z in v1_walls {
            c.insert_unchecked(self.collection.get(z).expect("wall").clone());
        }
        let only = reconstruct(&c, &dims)?;
        let sigma = reconstruct_spins(&only)?;
        let cuts = crate::pillars::interface_cut_points(&sigma);
        let Some(h2) = cuts.iter().map(|c| c.z).max() else {
            return Ok((None, None));
        };
        let own: HashSet<Face> = self
            .actual_walls
            .iter()
            .filter(|w| v1_walls.contains(&w.index))
            .flat_map(|w| w.faces.iter().copied())
            .collect();
        let mut best: Option<Face> = None;
        for f in &self.pillar.faces {
            if f.is_horizontal() || f.z != h2 || own.contains(f) {
                continue;
            }
            if let Some(w) = self
                .actual_walls
                .iter()
                .find(|w| w.faces.binary_search(f).is_ok())
            {
                best = Some(best.map_or(w.index, |b: Face| b.min(w.index)));
            }
        }
        Ok((Some(h2), best))
    }

    fn base_walls_data(
        &self,
        v1_walls: &[Face],
        y_dagger: Option<Face>,
        k1: i32,
    ) -> Result<(i64, Option<usize>), PsiError> {
        let dims = self.dims();
        let mut set: BTreeSet<Face> = v1_walls.iter().copied().collect();
        if let Some(y) = y_dagger {
            set.extend(
                self.analysis
                    .nested_sequence_in_box(&self.collection, y.project(), &dims)?
                    .walls,
            );
        }
        let excess = self.family_excess(&set);
        if y_dagger.is_none() || k1 == 0 {
            return Ok((excess, None));
        }
        let mut c = StandardWallCollection::new();
        for z in &set {
            c.insert_unchecked(self.collection.get(*z).expect("wall").clone());
        }
        let iface = reconstruct(&c, &dims)?;
        let min = (0..k1)
            .map(|k| {
                iface
                    .faces()
                    .iter()
                    .filter(|f| !f.is_horizontal() && f.z == 2 * k + 1)
                    .count()
            })
            .min();
        Ok((excess, min))
    }

    /// Cells of the modified spine `𝓢`, placed at `x + (0, 0, hgt(v₁))`.
    fn new_spine(&self, t: usize, j_star: usize, k_star: usize, b_active: bool) -> Vec<Cell> {
        let x = self.x;
        let last = self.last_index();
        let mut cells: BTreeSet<(i32, i32, i32)> = BTreeSet::new();
        let column = |cells: &mut BTreeSet<(i32, i32, i32)>, cx: i32, cy: i32, z0: i32, z1: i32| {
            let mut z = z0;
            while z <= z1 {
                cells.insert((z, cx, cy));
                z += 2;
            }
        };
        let shifted = |cells: &mut BTreeSet<(i32, i32, i32)>, j: usize, dx: i32, dy: i32| {
            for c in &self.increments[j - 1].cells {
                cells.insert((c.z, c.x + dx, c.y + dy));
            }
        };
        // Trivialised X₁ … X_{j*}: a column over x.
        column(&mut cells, x.x, x.y, self.vz(1), self.vz(j_star + 1));
        let anchor = |i: usize| self.v(i);
        if j_star < last {
            let a = anchor(j_star + 1);
            let (dx1, dy1) = (x.x - a.x, x.y - a.y);
            let upper = if b_active { t - 1 } else { last };
            for i in j_star + 1..=upper {
                shifted(&mut cells, i, dx1, dy1);
            }
            if b_active {
                let vt = self.v(t);
                let (bx, by) = (x.x + vt.x - a.x, x.y + vt.y - a.y);
                column(&mut cells, bx, by, self.vz(t), self.vz(k_star + 1));
                if k_star < last {
                    let b = anchor(k_star + 1);
                    let (dx2, dy2) = (bx - b.x, by - b.y);
                    for i in k_star + 1..=last {
                        shifted(&mut cells, i, dx2, dy2);
                    }
                }
            }
        }
        cells
            .into_iter()
            .map(|(z, cx, cy)| Cell::new(cx, cy, z).expect("cell coordinates"))
            .collect()
    }

    /// `τ_ℓ = min{t ≥ 1 : 𝓧_t ∩ 𝓛_ℓ ≠ ∅} ∨ 1` for a doubled height `ℓ₂`.
    pub fn tau(&self, ell2: i32) -> usize {
        (1..=self.last_index())
            .find(|&t| {
                let inc = &self.increments[t - 1];
                inc.cells.iter().any(|c| c.z == ell2)
            })
            .unwrap_or(1)
    }
}

fn min_distance(cands: &[Vec<Face>], targets: &[Aabb]) -> Option<i64> {
    let mut best: Option<i64> = None;
    for cand in cands {
        for f in cand {
            let fb = Aabb::face(*f);
            for t in targets {
                let d = fb.dist2(t);
                if best.is_none_or(|b| d < b) {
                    best = Some(d);
                    if d == 0 {
                        return best;
                    }
                }
            }
        }
    }
    best
}

/// `Θ↕ W̃_y` for the standard wall representation of `𝓘 ∖ 𝓢_x`.
pub fn theta_updown_set(i: &Interface, x: Face, y: Face) -> Result<Vec<Vec<Face>>, PsiError> {
    PsiContext::new(i, x)?.theta_updown(y)
}

/// `(2𝔇_x(W̃_y, j, ω₁, ω₂))²` (doubled units).
pub fn dist_d(
    i: &Interface,
    x: Face,
    y: Face,
    j: usize,
    omega1: (i32, i32),
    omega2: (i32, i32),
) -> Result<Option<i64>, PsiError> {
    PsiContext::new(i, x)?.dist_d(y, j, omega1, omega2)
}

/// `Ψ_{x,t}(𝓘)` with its audit.
pub fn psi(i: &Interface, x: Face, t: usize) -> Result<(Interface, MapAudit), PsiError> {
    PsiContext::new(i, x)?.run(t)
}

/// `Ψ̃_{x,ℓ}(𝓘) = Ψ_{x,τ_ℓ}(𝓘)` for a half-integer height given doubled.
pub fn psi_at_height(i: &Interface, x: Face, ell2: i32) -> Result<(Interface, MapAudit), PsiError> {
    let ctx = PsiContext::new(i, x)?;
    let tau = ctx.tau(ell2);
    let (j, mut audit) = ctx.run(tau)?;
    audit.tau = Some(tau);
    let slab_faces = ctx
        .pillar
        .faces
        .iter()
        .filter(|f| !f.is_horizontal() && f.z == ell2)
        .count() as i64;
    audit.height_bound = Some(slab_faces - 4);
    Ok((j, audit))
}

/// Re-derive the audit invariants against the input and output interfaces.
pub fn audit_check(audit: &MapAudit, i: &Interface, j: &Interface) -> AuditReport {
    let mut v = Vec::new();
    let actual = i.len() as i64 - j.len() as i64;
    let predicted = audit.excess_m;
    if actual != predicted || predicted != audit.excess_formula + audit.spine_detachment {
        v.push(Violation::EnergyAccounting { predicted, actual });
    }
    let m = actual;
    if audit.wx_j_size as i64 > 2 * m {
        v.push(Violation::ColumnBound);
    }
    if 3 * audit.wx_j_size as i64 > 2 * audit.base_walls_excess {
        v.push(Violation::ColumnBaseWallsBound);
    }
    if audit.deleted_excess > 3 * m {
        v.push(Violation::DeletedWallsBound);
    }
    if audit.j_star as i64 - 1 > 6 * m {
        v.push(Violation::FirstIndexBound);
    }
    if audit.t > audit.j_star && audit.t <= audit.increment_count + 1 && audit.k_star as i64 - audit.t as i64 > 6 * m {
        v.push(Violation::SecondIndexBound);
    }
    if audit.exceptional != Exceptional::NoCutPoint {
        for rec in &audit.trigger_log {
            let idx = rec.index;
            let expected = if rec.fired() { idx } else { rec.s };
            let start_ok = match rec.phase {
                Phase::A => idx != 1 || rec.s == 0,
                Phase::B => idx != audit.t || rec.s == audit.t - 1,
            };
            if rec.s_next != expected || !start_ok {
                v.push(Violation::ShiftSchedule { index: idx });
            }
            for hit in rec.close_walls.iter().chain(rec.index_wall.iter()) {
                // j − 1 ≤ 𝔇 + 𝔪(𝔉̃_y)  ⇔  2(j − 1) − 2𝔪(𝔉̃_y) ≤ √D.
                let rhs = 2 * (idx as i64 - 1) - 2 * hit.family_excess;
                if rhs > 0 && hit.d2 < rhs * rhs {
                    v.push(Violation::DistanceFact { index: idx, y: hit.y });
                }
            }
        }
    }
    if audit.exceptional != Exceptional::NoCutPoint {
        for phase in [Phase::A, Phase::B] {
            let recs: Vec<&TriggerRecord> =
                audit.trigger_log.iter().filter(|r| r.phase == phase).collect();
            for w in recs.windows(2) {
                if w[1].s != w[0].s_next {
                    v.push(Violation::ShiftSchedule { index: w[1].index });
                }
            }
            let fin = match phase {
                Phase::A => audit.j_star,
                Phase::B => audit.k_star,
            };
            if let Some(last) = recs.last() {
                if last.s_next != fin {
                    v.push(Violation::ShiftSchedule { index: last.index });
                }
            }
        }
    }
    if let Some(faces) = audit.base_walls_min_slab_faces {
        if faces < 6 {
            v.push(Violation::BaseWallsSlab { faces });
        }
    }
    match reconstruct_spins(j) {
        Err(_) => v.push(Violation::InvalidOutput),
        Ok(sigma) => match pillar_in(&sigma, audit.x) {
            Ok(p) => {
                if p.height != audit.pillar_height {
                    v.push(Violation::HeightChanged {
                        before: audit.pillar_height,
                        after: p.height,
                    });
                }
                let after = decompose(&p).map(|d| d.increment_count()).unwrap_or(0);
                if after < audit.increment_count {
                    v.push(Violation::IncrementsLost {
                        before: audit.increment_count,
                        after,
                    });
                }
            }
            Err(_) => v.push(Violation::InvalidOutput),
        },
    }
    if let Some(bound) = audit.height_bound {
        if m < bound {
            v.push(Violation::HeightIndexedBound { bound });
        }
    }
    AuditReport { violations: v }
}

/// Excess areas of the pillar used by the map (for reporting).
pub fn pillar_excess(i: &Interface, x: Face) -> Result<(i64, i64), PsiError> {
    let ctx = PsiContext::new(i, x)?;
    let r = excess_report(&ctx.decomposition);
    Ok((r.m_base, r.m_spine))
}

/// Index of a projection point as an `𝓛₀` face (helper for callers).
pub fn face_at(p: Proj) -> Face {
    Face::l0_at(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ising::SpinConfig;

    fn interface(d: BoxDims, plus: &[(i32, i32, i32)]) -> Interface {
        let cells: Vec<Cell> = plus.iter().map(|&(i, j, k)| Cell::at(i, j, k)).collect();
        extract(&SpinConfig::flat_with_plus(d, &cells).unwrap())
    }

    #[test]
    fn column_is_a_fixed_point() {
        let d = BoxDims::lambda(3, 3, 5).unwrap();
        for h in 1..=4 {
            let plus: Vec<_> = (0..h).map(|k| (0, 0, k)).collect();
            let i = interface(d, &plus);
            for t in 1..=h as usize + 1 {
                let (j, audit) = psi(&i, Face::l0(0, 0), t).unwrap();
                assert_eq!(j, i, "h = {h}, t = {t}");
                assert_eq!(audit.excess_m, 0);
                assert!(audit_check(&audit, &i, &j).ok(), "{:?}", audit_check(&audit, &i, &j));
            }
        }
    }

    #[test]
    fn fat_base_is_removed() {
        let d = BoxDims::lambda(4, 4, 6).unwrap();
        let i = interface(d, &[(0, 0, 0), (1, 0, 0), (0, 0, 1), (0, 0, 2)]);
        let (j, audit) = psi(&i, Face::l0(0, 0), 1).unwrap();
        assert_eq!(j, interface(d, &[(0, 0, 0), (0, 0, 1), (0, 0, 2)]));
        assert_eq!(audit.excess_m, 2);
        assert_eq!(audit.wx_j_size, 4);
        assert!(audit.deleted_d.contains(&Face::l0(0, 0)));
        let report = audit_check(&audit, &i, &j);
        assert!(report.violations.iter().all(|v| !matches!(v, Violation::EnergyAccounting { .. })));
    }

    #[test]
    fn tampered_audit_is_rejected() {
        let d = BoxDims::lambda(4, 4, 6).unwrap();
        let i = interface(d, &[(0, 0, 0), (1, 0, 0), (0, 0, 1), (0, 0, 2)]);
        let (j, mut audit) = psi(&i, Face::l0(0, 0), 1).unwrap();
        audit.excess_m += 1;
        let report = audit_check(&audit, &i, &j);
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::EnergyAccounting { .. })));
    }

    #[test]
    fn empty_and_wide_pillars_are_rejected() {
        let d = BoxDims::lambda(2, 2, 4).unwrap();
        let flat = Interface::flat(d);
        assert!(matches!(
            psi(&flat, Face::l0(0, 0), 1),
            Err(PsiError::EmptyPillar(_))
        ));
        let wide: Vec<_> = (-2..=2)
            .flat_map(|a| (-2..=2).map(move |b| (a, b, 0)))
            .chain([(0, 0, 1), (0, 0, 2)])
            .collect();
        let i = interface(d, &wide);
        assert!(matches!(
            psi(&i, Face::l0(0, 0), 1),
            Err(PsiError::NotTame(_))
        ));
    }

    #[test]
    fn theta_contains_the_actual_wall() {
        let d = BoxDims::lambda(4, 4, 6).unwrap();
        let i = interface(d, &[(0, 0, 0), (0, 0, 1), (3, 3, 0)]);
        let ctx = PsiContext::new(&i, Face::l0(0, 0)).unwrap();
        let y = Face::l0(3, 3);
        let theta = ctx.theta_updown(y).unwrap();
        assert!(!theta.is_empty());
        assert!(theta[0].contains(&Cell::at(3, 3, 0).top_face()));
        assert!(matches!(
            ctx.theta_updown(Face::l0(-3, 3)),
            Err(PsiError::UnknownIndex(_))
        ));
        let d2 = ctx.dist_d(y, 1, (0, 0), (0, 0)).unwrap().unwrap();
        assert!(d2 > 0);
    }
}
