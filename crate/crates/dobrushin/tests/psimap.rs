//! The pillar-shaving map and its audit.

use dobrushin::interface::extract;
use dobrushin::pillars::is_tame;
use dobrushin::psimap::{audit_check, psi, psi_at_height, theta_updown_set, PsiContext, PsiError, Violation};
use dobrushin::walls::walls_of;
use dobrushin::{BoxDims, Cell, Face, Interface, SpinConfig, ORIGIN};

fn dims() -> BoxDims {
    BoxDims::lambda(6, 6, 8).unwrap()
}

fn interface(d: BoxDims, cells: &[Cell]) -> Interface {
    extract(&SpinConfig::flat_with_plus(d, cells).unwrap())
}

fn column(i: i32, j: i32, from: i32, h: i32) -> Vec<Cell> {
    (from..from + h).map(|k| Cell::at(i, j, k)).collect()
}

#[test]
fn column_is_a_fixed_point() {
    let d = dims();
    for h in 1..=6 {
        let i = interface(d, &column(0, 0, 0, h));
        let ctx = PsiContext::new(&i, ORIGIN).unwrap();
        assert!(ctx.collection().is_empty(), "no walls besides the pillar");
        let (j, audit) = ctx.run(1).unwrap();
        assert_eq!(j, i);
        assert_eq!(audit.excess_m, 0);
        assert_eq!(audit.j_star, 1);
        assert!(audit.deleted_d.is_empty());
        assert!(audit_check(&audit, &i, &j).ok());
    }
}

#[test]
fn psi_at_height_picks_the_increment_through_the_slab() {
    let d = dims();
    let i = interface(d, &column(0, 0, 0, 4));
    let ctx = PsiContext::new(&i, ORIGIN).unwrap();
    // Height 3/2 lies in the first increment.
    assert_eq!(ctx.tau(3), 1);
    // Above the pillar top: the empty-intersection convention gives 1.
    assert_eq!(ctx.tau(15), 1);
    let (j, audit) = psi_at_height(&i, ORIGIN, 3).unwrap();
    assert_eq!(j, i);
    assert_eq!(audit.tau, Some(1));
    assert!(audit_check(&audit, &i, &j).ok());
    let (j, audit) = psi_at_height(&i, ORIGIN, 15).unwrap();
    assert_eq!((j, audit.tau), (i, Some(1)));
}

/// A diagonal step at the bottom of the spine is straightened: the tail is
/// re-attached above the origin and two faces are saved.
#[test]
fn fat_bottom_increment_is_trivialized() {
    let d = dims();
    let mut cells = vec![Cell::at(0, 0, 0)];
    cells.extend(column(1, 0, 1, 3));
    let i = interface(d, &cells);
    assert!(is_tame(&i, ORIGIN).unwrap());
    let (j, audit) = psi(&i, ORIGIN, 1).unwrap();
    assert_eq!(audit.excess_m, 2);
    assert_eq!(i.len() - j.len(), 2);
    assert_eq!(j, interface(d, &column(0, 0, 0, 4)));
    assert!(audit_check(&audit, &i, &j).ok(), "{:?}", audit_check(&audit, &i, &j));
}

#[test]
fn tampered_audit_is_rejected() {
    let d = dims();
    let i = interface(d, &column(0, 0, 0, 3));
    let (j, mut audit) = psi(&i, ORIGIN, 1).unwrap();
    audit.excess_m += 1;
    let report = audit_check(&audit, &i, &j);
    assert!(!report.ok());
    assert!(report.violations.iter().any(|v| matches!(v, Violation::EnergyAccounting { .. })));
}

#[test]
fn errors_are_typed() {
    let d = BoxDims::lambda(3, 3, 4).unwrap();
    let mut wide: Vec<Cell> = (-3..=3).flat_map(|a| (-3..=3).map(move |b| Cell::at(a, b, 0))).collect();
    wide.push(Cell::at(0, 0, 1));
    let i = interface(d, &wide);
    assert!(matches!(psi(&i, ORIGIN, 1), Err(PsiError::NotTame(_))));
    let flat = Interface::flat(d);
    assert!(psi(&flat, ORIGIN, 1).is_err());
    let col = interface(d, &column(0, 0, 0, 2));
    assert!(matches!(psi(&col, ORIGIN, 0), Err(PsiError::InvalidIncrement)));
    assert!(matches!(theta_updown_set(&col, ORIGIN, Face::l0(2, 2)), Err(PsiError::UnknownIndex(_))));
}

#[test]
fn lone_wall_has_one_unshifted_candidate() {
    let d = dims();
    let mut cells = column(0, 0, 0, 2);
    cells.push(Cell::at(4, 4, 0));
    let i = interface(d, &cells);
    let ctx = PsiContext::new(&i, ORIGIN).unwrap();
    let y = ctx.collection().indices().next().unwrap();
    let cands = ctx.theta_updown(y).unwrap();
    assert_eq!(cands.len(), 1);
    let wall = &walls_of(&interface(d, &[Cell::at(4, 4, 0)])).unwrap()[0];
    let mut expected = wall.faces.clone();
    expected.extend(wall.ceilings.iter().copied());
    expected.sort();
    assert_eq!(cands[0], expected);
}

/// A column standing in the middle of a wide plinth, far enough from the
/// plinth's wall to form its own group: deleting the plinth's family drops
/// the column by the plinth's ceiling height.
#[test]
fn nested_wall_has_two_candidates() {
    let d = BoxDims::lambda(10, 10, 6).unwrap();
    let mut cells = column(0, 0, 0, 2);
    cells.extend((3..=9).flat_map(|a| (3..=9).map(move |b| Cell::at(a, b, 0))));
    cells.push(Cell::at(6, 6, 1));
    let i = interface(d, &cells);
    let ctx = PsiContext::new(&i, ORIGIN).unwrap();
    assert_eq!(ctx.collection().len(), 2);
    let column_index = ctx
        .collection()
        .walls()
        .find(|w| w.len() == 4)
        .map(|w| w.index())
        .unwrap();
    let cands = ctx.theta_updown(column_index).unwrap();
    assert_eq!(cands.len(), 2);
    let (hi, lo) = if cands[0][0].z > cands[1][0].z { (&cands[0], &cands[1]) } else { (&cands[1], &cands[0]) };
    let mut lowered: Vec<Face> = hi.iter().map(|f| Face::new(f.x, f.y, f.z - 2).unwrap()).collect();
    lowered.sort();
    assert_eq!(&lowered, lo, "the candidates differ by one unit of height");
}
