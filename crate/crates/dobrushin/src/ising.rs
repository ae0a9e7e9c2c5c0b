//! Ising configurations with Dobrushin boundary conditions, heat-bath dynamics
//! and an exact enumeration oracle for tiny boxes.
//!
//! Spins are stored one byte per cell in canonical cell order. Cells outside
//! the box are never stored: a cell at integer height `k ≥ 0` evaluates to
//! `−1` and a cell at `k < 0` to `+1`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::{BoxDims, Cell};
use crate::rng::CounterRng;

/// Largest box accepted by [`exact_boltzmann`].
pub const EXACT_MAX_CELLS: usize = 24;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IsingError {
    #[error("invalid chain parameters: {0}")]
    InvalidParams(String),
    #[error("box with {0} cells exceeds the exact-enumeration limit of {EXACT_MAX_CELLS}")]
    BoxTooLarge(usize),
    #[error("cell {0:?} lies outside the box")]
    OutsideBox(Cell),
    #[error("spin array has length {got}, expected {expected}")]
    LengthMismatch { got: usize, expected: usize },
    #[error("spin values must be +1 or -1, found {0}")]
    InvalidSpin(i8),
    #[error("could not reserve memory for {0} snapshots")]
    ResourceExhausted(usize),
}

/// Spin of a cell outside the box under the `∓` boundary rule.
#[inline]
pub fn boundary_spin(c: Cell) -> i8 {
    if c.z > 0 {
        -1
    } else {
        1
    }
}

/// A ±1 assignment to the cells of a box.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpinConfig {
    dims: BoxDims,
    spins: Vec<i8>,
}

impl SpinConfig {
    /// The ground state: plus below `𝓛₀`, minus above.
    pub fn flat(dims: BoxDims) -> Self {
        let spins = dims.cells().map(boundary_spin).collect();
        SpinConfig { dims, spins }
    }

    /// Every cell plus.
    pub fn all_plus(dims: BoxDims) -> Self {
        SpinConfig {
            dims,
            spins: vec![1; dims.cell_count()],
        }
    }

    /// Build from a spin vector in canonical order.
    pub fn from_spins(dims: BoxDims, spins: Vec<i8>) -> Result<Self, IsingError> {
        if spins.len() != dims.cell_count() {
            return Err(IsingError::LengthMismatch {
                got: spins.len(),
                expected: dims.cell_count(),
            });
        }
        if let Some(&bad) = spins.iter().find(|&&s| s != 1 && s != -1) {
            return Err(IsingError::InvalidSpin(bad));
        }
        Ok(SpinConfig { dims, spins })
    }

    /// Configuration whose bit `i` (of `bits`) is the spin of canonical cell `i`
    /// (1 = plus).
    pub fn from_bits(dims: BoxDims, bits: u64) -> Self {
        let spins = (0..dims.cell_count())
            .map(|i| if bits >> i & 1 == 1 { 1 } else { -1 })
            .collect();
        SpinConfig { dims, spins }
    }

    /// Flat configuration with the given cells set to plus.
    pub fn flat_with_plus(dims: BoxDims, plus: &[Cell]) -> Result<Self, IsingError> {
        let mut cfg = SpinConfig::flat(dims);
        for &c in plus {
            cfg.set(c, 1)?;
        }
        Ok(cfg)
    }

    pub fn dims(&self) -> &BoxDims {
        &self.dims
    }

    /// Spins in canonical cell order.
    pub fn spins(&self) -> &[i8] {
        &self.spins
    }

    /// Spin of any cell, applying the boundary rule outside the box.
    #[inline]
    pub fn spin(&self, c: Cell) -> i8 {
        match self.dims.cell_index(c) {
            Some(i) => self.spins[i],
            None => boundary_spin(c),
        }
    }

    pub fn set(&mut self, c: Cell, s: i8) -> Result<(), IsingError> {
        if s != 1 && s != -1 {
            return Err(IsingError::InvalidSpin(s));
        }
        let i = self.dims.cell_index(c).ok_or(IsingError::OutsideBox(c))?;
        self.spins[i] = s;
        Ok(())
    }

    /// Number of disagreeing nearest-neighbour pairs, including pairs of one
    /// box cell and one boundary cell.
    pub fn energy(&self) -> u64 {
        let mut e = 0u64;
        for (idx, c) in self.dims.cells().enumerate() {
            let s = self.spins[idx];
            // Each interior pair is counted once from its lower endpoint; pairs
            // with boundary cells are counted from the box side.
            for (dx, dy, dz) in Cell::NEIGHBOR_OFFSETS {
                let nb = c.shifted(dx, dy, dz);
                let inside = self.dims.contains_cell(nb);
                let lower = (dx, dy, dz) > (0, 0, 0);
                if inside && !lower {
                    continue;
                }
                if self.spin(nb) != s {
                    e += 1;
                }
            }
        }
        e
    }

    /// The image under the global symmetry `σ ↦ −σ∘R` with `R(z) = −z`.
    /// Only defined for vertically symmetric boxes.
    pub fn flip_reflect(&self) -> Option<Self> {
        if !self.dims.is_vertically_symmetric() {
            return None;
        }
        let spins = self
            .dims
            .cells()
            .map(|c| -self.spin(Cell { z: -c.z, ..c }))
            .collect();
        Some(SpinConfig {
            dims: self.dims,
            spins,
        })
    }

    /// Cells carrying a plus spin at positive height.
    pub fn plus_cells_above(&self) -> Vec<Cell> {
        self.dims
            .cells()
            .zip(&self.spins)
            .filter(|(c, &s)| s == 1 && c.z > 0)
            .map(|(c, _)| c)
            .collect()
    }
}

/// Conditional probability that a site is plus given the sum `s` of its six
/// neighbouring spins.
pub fn conditional_plus_probability(beta: f64, s: i32) -> f64 {
    1.0 / (1.0 + (-beta * s as f64).exp())
}

/// A configuration with a one-cell halo holding the boundary spins, laid out
/// so that the heat-bath kernel needs no bounds checks.
#[derive(Debug, Clone)]
pub struct HeatBath {
    dims: BoxDims,
    padded: Vec<i8>,
    sy: usize,
    sx: usize,
    thresholds: [u64; 7],
    beta: f64,
    rng: CounterRng,
}

impl HeatBath {
    pub fn new(config: &SpinConfig, beta: f64, rng: CounterRng) -> Self {
        let dims = config.dims;
        let (nx, ny, nz) = (dims.nx() + 2, dims.ny() + 2, dims.nz() + 2);
        let sy = nz;
        let sx = ny * nz;
        let mut padded = vec![0i8; nx * ny * nz];
        for pi in 0..nx {
            for pj in 0..ny {
                for pk in 0..nz {
                    let c = Cell::at(
                        dims.x_lo + pi as i32 - 1,
                        dims.y_lo + pj as i32 - 1,
                        dims.z_lo + pk as i32 - 1,
                    );
                    padded[pi * sx + pj * sy + pk] = config.spin(c);
                }
            }
        }
        let mut thresholds = [0u64; 7];
        for (slot, s) in thresholds.iter_mut().zip((-6..=6).step_by(2)) {
            let p = conditional_plus_probability(beta, s);
            *slot = (p * 18_446_744_073_709_551_616.0) as u64;
        }
        HeatBath {
            dims,
            padded,
            sy,
            sx,
            thresholds,
            beta,
            rng,
        }
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn dims(&self) -> &BoxDims {
        &self.dims
    }

    pub fn rng(&self) -> &CounterRng {
        &self.rng
    }

    /// Padded-array position of a box cell.
    #[inline]
    pub fn padded_index(&self, c: Cell) -> usize {
        let (i, j, k) = c.index();
        (i - self.dims.x_lo + 1) as usize * self.sx
            + (j - self.dims.y_lo + 1) as usize * self.sy
            + (k - self.dims.z_lo + 1) as usize
    }

    /// Strides `(x, y, z)` of the padded array.
    pub fn strides(&self) -> (usize, usize, usize) {
        (self.sx, self.sy, 1)
    }

    /// Raw padded spins (halo included).
    pub fn padded(&self) -> &[i8] {
        &self.padded
    }

    #[inline]
    fn neighbour_sum(&self, p: usize) -> i32 {
        let a = &self.padded;
        a[p - 1] as i32
            + a[p + 1] as i32
            + a[p - self.sy] as i32
            + a[p + self.sy] as i32
            + a[p - self.sx] as i32
            + a[p + self.sx] as i32
    }

    /// One sequential heat-bath pass over all box cells in canonical order.
    pub fn sweep(&mut self) {
        let (nx, ny, nz) = (self.dims.nx(), self.dims.ny(), self.dims.nz());
        for i in 1..=nx {
            for j in 1..=ny {
                let base = i * self.sx + j * self.sy;
                for p in base + 1..=base + nz {
                    let s = self.neighbour_sum(p);
                    let thr = self.thresholds[((s + 6) >> 1) as usize];
                    self.padded[p] = if self.rng.next_u64() < thr { 1 } else { -1 };
                }
            }
        }
    }

    /// A heat-bath pass for the measure conditioned on an event: a freshly
    /// drawn spin that differs from the current one is kept only when
    /// `allow(self, padded_index, new_spin)` accepts it, which is exactly the
    /// single-site conditional of the restricted measure when the event is
    /// decided by `allow`.
    pub fn sweep_guarded<F>(&mut self, mut allow: F)
    where
        F: FnMut(&HeatBath, usize, i8) -> bool,
    {
        let (nx, ny, nz) = (self.dims.nx(), self.dims.ny(), self.dims.nz());
        for i in 1..=nx {
            for j in 1..=ny {
                let base = i * self.sx + j * self.sy;
                for p in base + 1..=base + nz {
                    let s = self.neighbour_sum(p);
                    let thr = self.thresholds[((s + 6) >> 1) as usize];
                    let new = if self.rng.next_u64() < thr { 1 } else { -1 };
                    if new != self.padded[p] && allow(self, p, new) {
                        self.padded[p] = new;
                    }
                }
            }
        }
    }

    /// Current configuration.
    pub fn config(&self) -> SpinConfig {
        let mut spins = Vec::with_capacity(self.dims.cell_count());
        for i in 1..=self.dims.nx() {
            for j in 1..=self.dims.ny() {
                let base = i * self.sx + j * self.sy;
                spins.extend_from_slice(&self.padded[base + 1..=base + self.dims.nz()]);
            }
        }
        SpinConfig {
            dims: self.dims,
            spins,
        }
    }
}

/// One sequential heat-bath sweep applied to a configuration.
pub fn heat_bath_sweep(config: &SpinConfig, beta: f64, rng: &mut CounterRng) -> SpinConfig {
    let mut hb = HeatBath::new(config, beta, rng.clone());
    hb.sweep();
    *rng = hb.rng.clone();
    hb.config()
}

/// Parameters of a single Markov chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainParams {
    pub dims: BoxDims,
    pub beta: f64,
    pub sweeps: u64,
    pub burn_in: u64,
    pub thin: u64,
    pub seed: u64,
    /// Replica index; the chain's stream is `CounterRng::new(seed).split(replica)`.
    #[serde(default)]
    pub replica: u64,
}

impl ChainParams {
    /// Default burn-in of `20·(2n+1)` sweeps for the box's horizontal size.
    pub fn default_burn_in(dims: &BoxDims) -> u64 {
        20 * dims.nx() as u64
    }

    pub fn validate(&self) -> Result<(), IsingError> {
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(IsingError::InvalidParams(format!(
                "beta must be positive and finite, got {}",
                self.beta
            )));
        }
        if self.thin == 0 {
            return Err(IsingError::InvalidParams("thin must be at least 1".into()));
        }
        if self.burn_in > self.sweeps {
            return Err(IsingError::InvalidParams(format!(
                "burn_in ({}) exceeds sweeps ({})",
                self.burn_in, self.sweeps
            )));
        }
        Ok(())
    }

    /// Number of snapshots the chain emits.
    pub fn emitted(&self) -> u64 {
        (self.sweeps - self.burn_in) / self.thin
    }

    /// The same chain for another replica index.
    pub fn with_replica(&self, replica: u64) -> Self {
        ChainParams {
            replica,
            ..self.clone()
        }
    }

    pub fn rng(&self) -> CounterRng {
        CounterRng::new(self.seed).split(self.replica)
    }
}

/// A chain started from the flat configuration; yields the configuration
/// after each sweep `s` with `s > burn_in` and `(s − burn_in) % thin = 0`.
#[derive(Debug, Clone)]
pub struct Chain {
    params: ChainParams,
    sampler: HeatBath,
    done: u64,
}

impl Chain {
    /// The sampler state, e.g. for sweep-level access to the padded lattice.
    pub fn sampler(&self) -> &HeatBath {
        &self.sampler
    }

    pub fn params(&self) -> &ChainParams {
        &self.params
    }

    /// Sweeps performed so far.
    pub fn sweeps_done(&self) -> u64 {
        self.done
    }

    /// Advance to the next emission and return its sweep index, without
    /// materialising the configuration.
    pub fn advance(&mut self) -> Option<u64> {
        while self.done < self.params.sweeps {
            self.sampler.sweep();
            self.done += 1;
            if self.done > self.params.burn_in
                && (self.done - self.params.burn_in) % self.params.thin == 0
            {
                return Some(self.done);
            }
        }
        None
    }

    /// Collect every emission, failing with a typed error if the snapshot
    /// buffer cannot be allocated.
    pub fn collect_all(self) -> Result<Vec<SpinConfig>, IsingError> {
        let n = self.params.emitted() as usize;
        let mut out = Vec::new();
        out.try_reserve_exact(n)
            .map_err(|_| IsingError::ResourceExhausted(n))?;
        out.extend(self);
        Ok(out)
    }
}

impl Iterator for Chain {
    type Item = SpinConfig;

    fn next(&mut self) -> Option<SpinConfig> {
        self.advance().map(|_| self.sampler.config())
    }
}

/// Start a chain from the flat configuration.
pub fn run_chain(params: &ChainParams) -> Result<Chain, IsingError> {
    run_chain_from(params, &SpinConfig::flat(params.dims))
}

/// Start a chain from a given configuration.
pub fn run_chain_from(params: &ChainParams, start: &SpinConfig) -> Result<Chain, IsingError> {
    params.validate()?;
    if start.dims != params.dims {
        return Err(IsingError::InvalidParams(
            "start configuration has different dimensions".into(),
        ));
    }
    Ok(Chain {
        sampler: HeatBath::new(start, params.beta, params.rng()),
        params: params.clone(),
        done: 0,
    })
}

/// Exact Boltzmann law of every configuration of a tiny box.
#[derive(Debug, Clone)]
pub struct ExactTable {
    dims: BoxDims,
    beta: f64,
    energies: Vec<u8>,
    /// `weights[e] = exp(−β(e − e_min)) / Z′`, so that probabilities are
    /// `weights[energy]`.
    weights: Vec<f64>,
}

impl ExactTable {
    pub fn dims(&self) -> &BoxDims {
        &self.dims
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Number of configurations.
    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    pub fn energy(&self, idx: usize) -> u64 {
        self.energies[idx] as u64
    }

    pub fn probability(&self, idx: usize) -> f64 {
        self.weights[self.energies[idx] as usize]
    }

    pub fn config(&self, idx: usize) -> SpinConfig {
        SpinConfig::from_bits(self.dims, idx as u64)
    }

    /// Law of an observable, by exhaustive summation.
    pub fn pushforward<K: Ord, F: FnMut(&SpinConfig) -> K>(
        &self,
        mut f: F,
    ) -> std::collections::BTreeMap<K, f64> {
        let mut out = std::collections::BTreeMap::new();
        for idx in 0..self.len() {
            let p = self.probability(idx);
            *out.entry(f(&self.config(idx))).or_insert(0.0) += p;
        }
        out
    }

    /// Expectation of a real observable.
    pub fn expectation<F: FnMut(&SpinConfig) -> f64>(&self, mut f: F) -> f64 {
        (0..self.len())
            .map(|idx| self.probability(idx) * f(&self.config(idx)))
            .sum()
    }
}

/// Exhaustively enumerate the Boltzmann law of a box with at most
/// [`EXACT_MAX_CELLS`] cells.
pub fn exact_boltzmann(dims: BoxDims, beta: f64) -> Result<ExactTable, IsingError> {
    let n = dims.cell_count();
    if n > EXACT_MAX_CELLS {
        return Err(IsingError::BoxTooLarge(n));
    }
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(IsingError::InvalidParams(format!("invalid beta {beta}")));
    }
    // Interior pairs, and for each cell the number of boundary neighbours of
    // each sign.
    let mut pairs = Vec::new();
    let mut bplus = vec![0u8; n];
    let mut bminus = vec![0u8; n];
    for (i, c) in dims.cells().enumerate() {
        for (dx, dy, dz) in Cell::NEIGHBOR_OFFSETS {
            let nb = c.shifted(dx, dy, dz);
            match dims.cell_index(nb) {
                Some(j) if j > i => pairs.push((i, j)),
                Some(_) => {}
                None if boundary_spin(nb) == 1 => bplus[i] += 1,
                None => bminus[i] += 1,
            }
        }
    }
    let total = 1usize << n;
    let mut energies = vec![0u8; total];
    let mut counts = vec![0u64; 6 * n + 1];
    for (idx, slot) in energies.iter_mut().enumerate() {
        let mut e = 0u32;
        for &(i, j) in &pairs {
            e += ((idx >> i ^ idx >> j) & 1) as u32;
        }
        for i in 0..n {
            e += if idx >> i & 1 == 1 {
                bminus[i]
            } else {
                bplus[i]
            } as u32;
        }
        *slot = e as u8;
        counts[e as usize] += 1;
    }
    let e_min = counts.iter().position(|&c| c > 0).unwrap_or(0);
    let z: f64 = counts
        .iter()
        .enumerate()
        .map(|(e, &c)| c as f64 * (-beta * (e as f64 - e_min as f64)).exp())
        .sum();
    let weights = (0..counts.len())
        .map(|e| (-beta * (e as f64 - e_min as f64)).exp() / z)
        .collect();
    Ok(ExactTable {
        dims,
        beta,
        energies,
        weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> BoxDims {
        BoxDims::lambda(1, 1, 1).unwrap()
    }

    #[test]
    fn flat_energy_counts_plane_crossings() {
        assert_eq!(SpinConfig::flat(small()).energy(), 9);
    }

    #[test]
    fn single_raised_cell_energy() {
        let cfg = SpinConfig::flat_with_plus(small(), &[Cell::at(0, 0, 0)]).unwrap();
        assert_eq!(cfg.energy(), 13);
    }

    #[test]
    fn heat_bath_is_deterministic() {
        let d = small();
        let a = heat_bath_sweep(&SpinConfig::flat(d), 1.0, &mut CounterRng::new(42));
        let b = heat_bath_sweep(&SpinConfig::flat(d), 1.0, &mut CounterRng::new(42));
        assert_eq!(a, b);
    }

    #[test]
    fn padded_config_round_trip() {
        let d = BoxDims::lambda(2, 1, 3).unwrap();
        let mut rng = CounterRng::new(5);
        let spins = (0..d.cell_count())
            .map(|_| if rng.next_u64() & 1 == 1 { 1 } else { -1 })
            .collect();
        let cfg = SpinConfig::from_spins(d, spins).unwrap();
        assert_eq!(HeatBath::new(&cfg, 1.0, rng).config(), cfg);
    }

    #[test]
    fn chain_emission_count() {
        let p = ChainParams {
            dims: small(),
            beta: 1.0,
            sweeps: 23,
            burn_in: 3,
            thin: 4,
            seed: 1,
            replica: 0,
        };
        assert_eq!(run_chain(&p).unwrap().count(), 5);
        assert_eq!(p.emitted(), 5);
    }

    #[test]
    fn invalid_params_rejected() {
        let mut p = ChainParams {
            dims: small(),
            beta: 1.0,
            sweeps: 10,
            burn_in: 11,
            thin: 1,
            seed: 1,
            replica: 0,
        };
        assert!(run_chain(&p).is_err());
        p.burn_in = 0;
        p.thin = 0;
        assert!(run_chain(&p).is_err());
        p.thin = 1;
        p.beta = 0.0;
        assert!(run_chain(&p).is_err());
    }

    #[test]
    fn exact_table_matches_direct_energy() {
        let d = BoxDims::general((0, 0), (0, 0), (-1, 1)).unwrap();
        let t = exact_boltzmann(d, 0.8).unwrap();
        for idx in 0..t.len() {
            assert_eq!(t.energy(idx), t.config(idx).energy());
        }
    }
}
