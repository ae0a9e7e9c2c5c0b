//! Walls and ceilings, standardization and reconstruction, groups and
//! nesting.

use std::collections::HashSet;

use dobrushin::interface::{excess, extract, reconstruct_spins};
use dobrushin::ising::run_chain;
use dobrushin::walls::{
    classify, groups, nested_sequence, reconstruct, standardize, wall_excess, walls_of, FaceLabel, StandardWall,
    StandardWallCollection, WallError,
};
use dobrushin::{BoxDims, Cell, ChainParams, Interface, SpinConfig, ORIGIN};
use proptest::prelude::*;

fn column_cells(i: i32, j: i32, from: i32, h: i32) -> Vec<Cell> {
    (from..from + h).map(|k| Cell::at(i, j, k)).collect()
}

fn config(d: BoxDims, cells: &[Cell]) -> SpinConfig {
    SpinConfig::flat_with_plus(d, cells).unwrap()
}

fn dims() -> BoxDims {
    BoxDims::lambda(6, 6, 6).unwrap()
}

#[test]
fn flat_is_all_ceiling() {
    let d = dims();
    let flat = Interface::flat(d);
    let cls = classify(&flat);
    assert!(flat.faces().iter().all(|&f| cls.label(f) == Some(FaceLabel::Ceiling)));
    assert!(flat.faces().iter().all(|&f| cls.n_rho(f.project()) == 1));
    assert!(walls_of(&flat).unwrap().is_empty());
    assert!(standardize(&flat).unwrap().is_empty());
    assert_eq!(reconstruct(&StandardWallCollection::new(), &d).unwrap(), flat);
}

#[test]
fn column_labels_and_wall() {
    let d = dims();
    for h in 1..=5 {
        let i = extract(&config(d, &column_cells(0, 0, 0, h)));
        let cls = classify(&i);
        for &f in i.faces() {
            let expected = if f.is_horizontal() { FaceLabel::Ceiling } else { FaceLabel::Wall };
            assert_eq!(cls.label(f), Some(expected), "{f:?}");
        }
        assert_eq!(cls.n_rho(ORIGIN.project()), 1);
        let walls = walls_of(&i).unwrap();
        assert_eq!(walls.len(), 1);
        assert_eq!(walls[0].faces.len(), 4 * h as usize);
        assert_eq!(walls[0].floor_height2, 0);
        assert_eq!(wall_excess(walls[0].faces.len(), &walls[0].geometry), 4 * h as i64);
        let c = standardize(&i).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(reconstruct(&c, &d).unwrap(), i);
    }
}

/// An overhang: the face below a raised cell and the cell's top share a
/// projection with a third interface face, so every face over it is a wall
/// face.
#[test]
fn overhang_faces_are_wall_faces() {
    let d = dims();
    // A cell at height 3/2 over the origin, held up by a neighbour column:
    // the origin's own face stays in the interface below it.
    let cells = [Cell::at(1, 0, 0), Cell::at(1, 0, 1), Cell::at(0, 0, 1)];
    let i = extract(&config(d, &cells));
    let cls = classify(&i);
    let over: Vec<_> = i.faces().iter().filter(|f| f.is_horizontal() && f.project() == ORIGIN.project()).collect();
    assert_eq!(over.len(), 3);
    assert!(cls.n_rho(ORIGIN.project()) == 3);
    assert!(over.iter().all(|&&f| cls.label(f) == Some(FaceLabel::Wall)));
}

#[test]
fn diagonal_columns_form_one_wall() {
    let d = dims();
    let mut cells = column_cells(0, 0, 0, 2);
    cells.extend(column_cells(1, 1, 0, 2));
    let walls = walls_of(&extract(&config(d, &cells))).unwrap();
    assert_eq!(walls.len(), 1);
    assert_eq!(walls[0].faces.len(), 16);
}

#[test]
fn nested_plinth_and_column() {
    let d = dims();
    let mut cells: Vec<Cell> = (-1..=1).flat_map(|i| (-1..=1).map(move |j| Cell::at(i, j, 0))).collect();
    cells.extend(column_cells(0, 0, 1, 2));
    let i = extract(&config(d, &cells));
    let c = standardize(&i).unwrap();
    assert_eq!(c.len(), 2);
    for w in c.walls() {
        assert!(w.faces().iter().map(|f| f.z).min().unwrap() >= 0, "standard walls sit on the plane");
    }
    let j = reconstruct(&c, &d).unwrap();
    assert_eq!(j, i);
    // The column rides on the plinth ceiling.
    assert_eq!(reconstruct_spins(&j).unwrap().spin(Cell::at(0, 0, 2)), 1);
    let seq = nested_sequence(&c, ORIGIN.project(), &d).unwrap();
    assert_eq!(seq.walls.len(), 2);
    let sizes: Vec<usize> = seq.walls.iter().map(|&w| c.get(w).unwrap().len()).collect();
    assert_eq!(sizes, vec![8, 12], "column first, then plinth");
    let far = nested_sequence(&c, dobrushin::Face::l0(4, 4).project(), &d).unwrap();
    assert!(far.walls.is_empty());
}

#[test]
fn closeness_groups() {
    let d = BoxDims::lambda(8, 8, 3).unwrap();
    let far = extract(&config(d, &[Cell::at(-5, 0, 0), Cell::at(5, 0, 0)]));
    assert_eq!(groups(&standardize(&far).unwrap()).len(), 2);
    let near = extract(&config(d, &[Cell::at(0, 0, 0), Cell::at(2, 0, 0)]));
    let g = groups(&standardize(&near).unwrap());
    assert_eq!(g.len(), 1);
    assert_eq!(g[0].members.len(), 2);
    assert_eq!(g[0].excess, 8);
    let single = extract(&config(d, &[Cell::at(0, 0, 0)]));
    assert_eq!(groups(&standardize(&single).unwrap()).len(), 1);
}

#[test]
fn inadmissible_and_escaping_collections_are_rejected() {
    let d = BoxDims::lambda(3, 3, 2).unwrap();
    let w = standardize(&extract(&config(d, &[Cell::at(0, 0, 0)]))).unwrap();
    let wall = w.walls().next().unwrap().clone();
    let mut c = StandardWallCollection::new();
    c.insert(wall.clone()).unwrap();
    assert!(matches!(c.insert(wall.clone()), Err(WallError::Inadmissible(..))));
    let tall = StandardWall::new(
        column_cells(0, 0, 0, 4).iter().flat_map(|c| c.side_faces()).collect(),
    )
    .unwrap();
    let mut c = StandardWallCollection::new();
    c.insert(tall).unwrap();
    assert!(matches!(reconstruct(&c, &d), Err(WallError::TruncationOverflow(_))));
}

/// Sampled interfaces: bijection both ways, excess additivity, the excess
/// area inequalities and disjointness of projections and ceilings.
#[test]
fn sampled_interfaces_satisfy_wall_invariants() {
    for n in [4u32, 6] {
        let d = BoxDims::lambda(n, n, 8).unwrap();
        let p = ChainParams { dims: d, beta: 1.0, sweeps: 300 + 600, burn_in: 300, thin: 3, seed: n as u64, replica: 0 };
        for cfg in run_chain(&p).unwrap() {
            let i = extract(&cfg);
            let c = standardize(&i).unwrap();
            assert_eq!(reconstruct(&c, &d).unwrap(), i);
            assert_eq!(standardize(&reconstruct(&c, &d).unwrap()).unwrap(), c);
            let walls = walls_of(&i).unwrap();
            assert_eq!(excess(&i, &Interface::flat(d)).unwrap(), c.excess());
            let mut projections = HashSet::new();
            let mut ceilings = HashSet::new();
            for w in &walls {
                let m = wall_excess(w.faces.len(), &w.geometry);
                assert!(2 * m >= w.faces.len() as i64);
                assert!(m >= (w.geometry.projected_edges() + w.geometry.projected_faces()) as i64);
                for &(u, _) in w.geometry.projection() {
                    assert!(projections.insert(u), "projections overlap at {u:?}");
                }
                for &f in &w.ceilings {
                    assert!(ceilings.insert(f), "ceiling {f:?} shared");
                }
            }
        }
    }
}

fn small_config() -> impl Strategy<Value = SpinConfig> {
    let d = BoxDims::lambda(2, 2, 3).unwrap();
    proptest::collection::vec(0usize..d.cell_count(), 0..12).prop_map(move |idx| {
        let cells: Vec<Cell> = idx.iter().map(|&k| d.cell_at(k)).filter(|c| c.z > 0).collect();
        SpinConfig::flat_with_plus(d, &cells).unwrap()
    })
}

proptest! {
    #[test]
    fn standardize_reconstruct_is_a_bijection(c in small_config()) {
        let i = extract(&c);
        let s = standardize(&i).unwrap();
        let j = reconstruct(&s, i.dims()).unwrap();
        prop_assert_eq!(&j, &i);
        prop_assert_eq!(standardize(&j).unwrap(), s.clone());
        prop_assert_eq!(excess(&i, &Interface::flat(*i.dims())).unwrap(), s.excess());
    }
}
