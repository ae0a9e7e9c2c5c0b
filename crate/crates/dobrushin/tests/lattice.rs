//! Geometry: adjacency classes, projections and shared faces.

use dobrushin::lattice::{
    adjacency_class, cell_adjacency, face_adjacency, faces_between, Adjacency, Axis, LatticeError, Site,
};
use dobrushin::{BoxDims, Cell, Face, Proj, ProjKind};
use proptest::prelude::*;

/// Bounding vertices of a cell in doubled coordinates, computed directly.
fn cell_vertices(c: Cell) -> Vec<(i32, i32, i32)> {
    let mut v = Vec::new();
    for dx in [-1, 1] {
        for dy in [-1, 1] {
            for dz in [-1, 1] {
                v.push((c.x + dx, c.y + dy, c.z + dz));
            }
        }
    }
    v
}

/// Bounding vertices of a face: offsets ±1 along the two odd coordinates.
fn face_vertices(f: Face) -> Vec<(i32, i32, i32)> {
    let (ox, oy, oz) = (f.x & 1, f.y & 1, f.z & 1);
    let mut v = Vec::new();
    for a in [-1, 1] {
        for b in [-1, 1] {
            let mut d = [0; 3];
            let mut it = [a, b].into_iter();
            for (k, odd) in [ox, oy, oz].into_iter().enumerate() {
                if odd == 1 {
                    d[k] = it.next().unwrap();
                }
            }
            v.push((f.x + d[0], f.y + d[1], f.z + d[2]));
        }
    }
    v
}

fn shared(a: &[(i32, i32, i32)], b: &[(i32, i32, i32)]) -> usize {
    a.iter().filter(|v| b.contains(v)).count()
}

#[test]
fn vertically_stacked_cells_are_adjacent() {
    assert_eq!(cell_adjacency(Cell::at(0, 0, 0), Cell::at(0, 0, 1)).unwrap(), Adjacency::Adjacent);
}

#[test]
fn diagonal_cells_are_star_adjacent() {
    assert_eq!(cell_adjacency(Cell::at(0, 0, 0), Cell::at(1, 1, 0)).unwrap(), Adjacency::StarAdjacent);
}

#[test]
fn stacked_parallel_faces_are_disjoint() {
    let a = Face::new(1, 1, 0).unwrap();
    let b = Face::new(1, 1, 2).unwrap();
    assert_eq!(face_adjacency(a, b).unwrap(), Adjacency::Disjoint);
    assert_eq!(shared(&face_vertices(a), &face_vertices(b)), 0);
}

#[test]
fn identical_and_mixed_inputs_are_errors() {
    let c = Cell::at(0, 0, 0);
    assert_eq!(adjacency_class(Site::Cell(c), Site::Cell(c)), Err(LatticeError::IdenticalInputs));
    assert_eq!(adjacency_class(Site::Cell(c), Site::Face(c.top_face())), Err(LatticeError::MixedKinds));
}

#[test]
fn projections_of_faces_and_cells() {
    // Horizontal face at height 3 → face of the reference plane.
    let p = Face::new(1, 1, 6).unwrap().project();
    assert_eq!((p, p.kind()), (Proj::new(1, 1).unwrap(), ProjKind::Face));
    // Vertical face (1, ½, 5/2) → edge (1, ½, 0).
    let f = Face::new(2, 1, 5).unwrap();
    assert_eq!(f.axis, Axis::X);
    let p = f.project();
    assert_eq!((p, p.kind()), (Proj::new(2, 1).unwrap(), ProjKind::Edge));
    // Cell (½, ½, 7/2) → face (½, ½, 0).
    assert_eq!(Cell::new(1, 1, 7).unwrap().project(), Proj::new(1, 1).unwrap());
}

#[test]
fn shared_faces_of_adjacent_cells() {
    let o = Cell::at(0, 0, 0);
    let up = faces_between(o, Cell::at(0, 0, 1)).unwrap();
    assert_eq!((up.axis, up.x, up.y, up.z), (Axis::Z, 1, 1, 2));
    let side = faces_between(o, Cell::at(1, 0, 0)).unwrap();
    assert_eq!((side.axis, side.x, side.y, side.z), (Axis::X, 2, 1, 1));
    assert!(matches!(faces_between(o, Cell::at(0, 0, 2)), Err(LatticeError::NotAdjacent(..))));
}

#[test]
fn invalid_coordinates_are_rejected() {
    assert!(Cell::new(0, 1, 1).is_err());
    assert!(Face::new(1, 1, 1).is_err());
    assert!(Face::new(0, 0, 1).is_err());
    assert!(Proj::new(0, 0).is_err());
}

#[test]
fn box_cell_count_and_footprint() {
    let d = BoxDims::lambda(2, 3, 4).unwrap();
    assert_eq!(d.cell_count(), 5 * 7 * 9);
    assert_eq!(d.footprint().len(), 5 * 7);
    assert!(BoxDims::lambda(0, 1, 1).is_err());
    assert!(BoxDims::general((0, 1), (0, 1), (0, 2)).is_err());
    for (k, c) in d.cells().enumerate() {
        assert_eq!(d.cell_index(c), Some(k));
        assert_eq!(d.cell_at(k), c);
    }
}

#[test]
fn default_truncation_height() {
    // 4·⌈ln(2n)/β⌉ + 8: n = 8, β = 1 → ⌈2.77⌉ = 3 → 20.
    assert_eq!(BoxDims::default_h_cap(8, 1.0), 20);
    // n = 10, β = 1.2 → ⌈2.996/1.2⌉ = 3 → 20.
    assert_eq!(BoxDims::default_h_cap(10, 1.2), 20);
}

/// Exhaustive agreement with vertex-set intersection on a 3×3×3 block of
/// cells and on every face bounding those cells.
#[test]
fn adjacency_agrees_with_vertex_sets_exhaustively() {
    let cells: Vec<Cell> = (0..3)
        .flat_map(|i| (0..3).flat_map(move |j| (0..3).map(move |k| Cell::at(i, j, k))))
        .collect();
    for &a in &cells {
        for &b in &cells {
            if a == b {
                continue;
            }
            let expected = match shared(&cell_vertices(a), &cell_vertices(b)) {
                0 => Adjacency::Disjoint,
                4 => Adjacency::Adjacent,
                _ => Adjacency::StarAdjacent,
            };
            assert_eq!(cell_adjacency(a, b).unwrap(), expected, "{a:?} {b:?}");
        }
    }
    let mut faces: Vec<Face> = cells.iter().flat_map(|c| c.bounding_faces()).collect();
    faces.sort();
    faces.dedup();
    for &a in &faces {
        for &b in &faces {
            if a == b {
                continue;
            }
            let expected = match shared(&face_vertices(a), &face_vertices(b)) {
                0 => Adjacency::Disjoint,
                1 => Adjacency::StarAdjacent,
                _ => Adjacency::Adjacent,
            };
            assert_eq!(face_adjacency(a, b).unwrap(), expected, "{a:?} {b:?}");
        }
    }
}

fn cell() -> impl Strategy<Value = Cell> {
    (-3i32..3, -3i32..3, -3i32..3).prop_map(|(i, j, k)| Cell::at(i, j, k))
}

fn face() -> impl Strategy<Value = Face> {
    (cell(), 0usize..6).prop_map(|(c, k)| c.bounding_faces()[k])
}

proptest! {
    #[test]
    fn adjacency_is_symmetric(a in cell(), b in cell(), f in face(), g in face()) {
        if a != b {
            prop_assert_eq!(cell_adjacency(a, b).unwrap(), cell_adjacency(b, a).unwrap());
        }
        if f != g {
            prop_assert_eq!(face_adjacency(f, g).unwrap(), face_adjacency(g, f).unwrap());
        }
    }

    #[test]
    fn projection_kind_matches_orientation(f in face()) {
        prop_assert_eq!(f.project().kind() == ProjKind::Face, f.axis == Axis::Z);
        prop_assert_eq!(f.is_horizontal(), f.axis == Axis::Z);
    }

    #[test]
    fn shared_face_separates_the_two_cells(a in cell(), k in 0usize..6) {
        let f = a.bounding_faces()[k];
        let (lo, hi) = f.cells();
        prop_assert!(lo == a || hi == a);
        prop_assert_eq!(faces_between(lo, hi).unwrap(), f);
        prop_assert_eq!(cell_adjacency(lo, hi).unwrap(), Adjacency::Adjacent);
    }
}
