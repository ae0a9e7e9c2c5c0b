//! Extraction of the Dobrushin interface from a configuration, reconstruction
//! of the canonical configuration `σ(𝓘)`, and excess energies.
//!
//! The interface of `σ` is the *-connected component of the disagreement
//! faces `F(σ)` that contains the plane `𝓛₀` outside the box, restricted to
//! the faces `𝓕(Λ)` of the box. Outside the box the extended configuration is
//! flat, so that component is reached from the ring of `𝓛₀` faces bordering
//! the footprint.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ising::{boundary_spin, SpinConfig};
use crate::lattice::{Axis, BoxDims, Cell, Face, FaceIndexer, FaceSet};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InterfaceError {
    #[error("interfaces live in different boxes")]
    DimensionMismatch,
    #[error("face {0:?} is not a face of the box")]
    FaceOutsideBox(Face),
    #[error("column over ({x}, {y}) has an even number of horizontal faces")]
    ColumnParity { x: i32, y: i32 },
    #[error("vertical face {0:?} is inconsistent with the column spins")]
    InconsistentFace(Face),
    #[error("face set is not the interface of its own reconstruction ({0} faces differ)")]
    NotAnInterface(usize),
}

/// A Dobrushin interface: a canonically sorted face set in a box.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Interface {
    dims: BoxDims,
    faces: Vec<Face>,
}

impl Interface {
    /// Wrap a face set (sorted and deduplicated); validity is not checked,
    /// see [`Interface::validate`].
    pub fn from_faces(dims: BoxDims, mut faces: Vec<Face>) -> Self {
        faces.sort_unstable();
        faces.dedup();
        Interface { dims, faces }
    }

    /// The flat interface `𝓛_{0,n}`.
    pub fn flat(dims: BoxDims) -> Self {
        Interface {
            dims,
            faces: dims.footprint(),
        }
    }

    pub fn dims(&self) -> &BoxDims {
        &self.dims
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

    pub fn contains(&self, f: Face) -> bool {
        self.faces.binary_search(&f).is_ok()
    }

    pub fn face_set(&self) -> FaceSet {
        FaceSet::from_faces(&self.dims, &self.faces)
    }

    /// Maximum height `x₃` attained by a point of the interface, doubled.
    pub fn max_height2(&self) -> i32 {
        self.faces
            .iter()
            .map(|f| if f.is_horizontal() { f.z } else { f.z + 1 })
            .max()
            .unwrap_or(0)
    }

    /// Maximum height of the interface, `M = max{x₃ : x ∈ 𝓘}` (an integer).
    pub fn max_height(&self) -> i32 {
        self.max_height2() / 2
    }

    /// Check the interface invariants by reconstructing it.
    pub fn validate(&self) -> Result<(), InterfaceError> {
        reconstruct_spins(self).map(|_| ())
    }
}

/// Reusable scratch space for repeated interface extraction on one box.
#[derive(Debug, Clone)]
pub struct Extractor {
    dims: BoxDims,
    indexer: FaceIndexer,
    stamp: Vec<u32>,
    generation: u32,
    stack: Vec<Face>,
}

impl Extractor {
    pub fn new(dims: BoxDims) -> Self {
        let indexer = FaceIndexer::new(&dims);
        Extractor {
            dims,
            indexer,
            stamp: vec![0; indexer.len()],
            generation: 0,
            stack: Vec::new(),
        }
    }

    fn next_generation(&mut self) {
        self.generation = self.generation.wrapping_add(1);
        if self.generation == 0 {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.generation = 1;
        }
    }

    fn is_ring(&self, f: Face) -> bool {
        let d = &self.dims;
        f.axis == Axis::Z
            && f.z == 0
            && f.x >= 2 * d.x_lo - 1
            && f.x <= 2 * d.x_hi + 3
            && f.y >= 2 * d.y_lo - 1
            && f.y <= 2 * d.y_hi + 3
            && !d.footprint_contains(f.project())
    }

    /// Run the component search; `spin` gives the spin of any cell.
    fn run<S: Fn(Cell) -> i8>(&mut self, spin: S) -> Vec<Face> {
        self.next_generation();
        let d = self.dims;
        let mut out = Vec::new();
        self.stack.clear();
        let seed = |f: Face, this: &mut Self| {
            let i = this.indexer.index(f).expect("ring face is addressable");
            this.stamp[i] = this.generation;
            this.stack.push(f);
        };
        for i in d.x_lo - 1..=d.x_hi + 1 {
            for j in d.y_lo - 1..=d.y_hi + 1 {
                if i < d.x_lo || i > d.x_hi || j < d.y_lo || j > d.y_hi {
                    seed(Face::l0(i, j), self);
                }
            }
        }
        while let Some(f) = self.stack.pop() {
            for &(dx, dy, dz) in Face::star_offsets(f.axis) {
                let g = Face::raw(f.x + dx, f.y + dy, f.z + dz);
                let Some(gi) = self.indexer.index(g) else {
                    continue;
                };
                if self.stamp[gi] == self.generation {
                    continue;
                }
                let keep = if d.contains_face(g) {
                    let (a, b) = g.cells();
                    spin(a) != spin(b)
                } else {
                    self.is_ring(g)
                };
                if keep {
                    self.stamp[gi] = self.generation;
                    self.stack.push(g);
                    if d.contains_face(g) {
                        out.push(g);
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// The interface of a configuration on this extractor's box.
    pub fn extract(&mut self, config: &SpinConfig) -> Interface {
        assert_eq!(config.dims(), &self.dims, "extractor box mismatch");
        let faces = self.run(|c| config.spin(c));
        Interface {
            dims: self.dims,
            faces,
        }
    }
}

/// The Dobrushin interface of a configuration.
pub fn extract(config: &SpinConfig) -> Interface {
    Extractor::new(*config.dims()).extract(config)
}

/// All faces of `𝓕(Λ)` separating disagreeing cells (boundary rule applied).
pub fn disagreement_faces(config: &SpinConfig) -> Vec<Face> {
    let d = config.dims();
    let mut out = Vec::new();
    for c in d.cells() {
        let s = config.spin(c);
        for (dx, dy, dz) in crate::lattice::Cell::NEIGHBOR_OFFSETS {
            let nb = c.shifted(dx, dy, dz);
            // Count each interior face once, from its lower cell.
            if d.contains_cell(nb) && (dx, dy, dz) < (0, 0, 0) {
                continue;
            }
            if config.spin(nb) != s {
                out.push(Face::raw(c.x + dx / 2, c.y + dy / 2, c.z + dz / 2));
            }
        }
    }
    out.sort_unstable();
    out
}

/// `σ(𝓘)`: the configuration whose disagreement faces inside the box are
/// exactly `𝓘`, assigned column by column from the top boundary down.
pub fn reconstruct_spins(i: &Interface) -> Result<SpinConfig, InterfaceError> {
    let d = *i.dims();
    for &f in i.faces() {
        if !d.contains_face(f) {
            return Err(InterfaceError::FaceOutsideBox(f));
        }
    }
    let set = i.face_set();
    let mut spins = Vec::with_capacity(d.cell_count());
    for x in d.x_lo..=d.x_hi {
        for y in d.y_lo..=d.y_hi {
            let mut col = Vec::with_capacity(d.nz());
            let mut s = -1i8;
            for k in (d.z_lo..=d.z_hi).rev() {
                let c = Cell::at(x, y, k);
                if set.contains(c.top_face()) {
                    s = -s;
                }
                col.push(s);
            }
            if set.contains(Cell::at(x, y, d.z_lo).bottom_face()) {
                s = -s;
            }
            if s != 1 {
                return Err(InterfaceError::ColumnParity {
                    x: 2 * x + 1,
                    y: 2 * y + 1,
                });
            }
            col.reverse();
            spins.extend(col);
        }
    }
    let config = SpinConfig::from_spins(d, spins).expect("spins are ±1 with matching length");
    for c in d.cells() {
        for f in c.side_faces() {
            let (a, b) = f.cells();
            let differ = config.spin(a) != config.spin(b);
            if differ != set.contains(f) {
                return Err(InterfaceError::InconsistentFace(f));
            }
        }
    }
    let back = extract(&config);
    if back.faces != i.faces {
        let diff = back.len().abs_diff(i.len()).max(1);
        return Err(InterfaceError::NotAnInterface(diff));
    }
    Ok(config)
}

/// Repeatedly flip every finite *-connected monochromatic component (one not
/// *-connected to the boundary region of its own sign) until none remain.
pub fn flip_fixpoint(config: &SpinConfig) -> SpinConfig {
    let d = *config.dims();
    let mut cur = config.clone();
    loop {
        let spins = cur.spins().to_vec();
        let mut reached = vec![false; spins.len()];
        let mut stack = Vec::new();
        for (idx, c) in d.cells().enumerate() {
            let s = spins[idx];
            let touches = Cell::star_offsets().iter().any(|&(dx, dy, dz)| {
                let nb = c.shifted(dx, dy, dz);
                !d.contains_cell(nb) && boundary_spin(nb) == s
            });
            if touches {
                reached[idx] = true;
                stack.push(idx);
            }
        }
        while let Some(idx) = stack.pop() {
            let c = d.cell_at(idx);
            for &(dx, dy, dz) in Cell::star_offsets() {
                if let Some(j) = d.cell_index(c.shifted(dx, dy, dz)) {
                    if !reached[j] && spins[j] == spins[idx] {
                        reached[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        if reached.iter().all(|&r| r) {
            return cur;
        }
        let flipped = spins
            .iter()
            .zip(&reached)
            .map(|(&s, &r)| if r { s } else { -s })
            .collect();
        cur = SpinConfig::from_spins(d, flipped).expect("valid spins");
    }
}

/// Excess energy `𝔪(𝓘; 𝓙) = |𝓘| − |𝓙|`.
pub fn excess(i: &Interface, j: &Interface) -> Result<i64, InterfaceError> {
    if i.dims() != j.dims() {
        return Err(InterfaceError::DimensionMismatch);
    }
    Ok(i.len() as i64 - j.len() as i64)
}
