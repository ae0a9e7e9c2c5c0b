//! Monte Carlo estimators for the probabilistic quantities of the interface:
//! pillar events, the rates `α_h`, the threshold `m_n^⋆`, the law of the
//! maximum `M_n`, sub-multiplicativity, the multiscale coupling, the count
//! `Z_h`, correlation decay and conditional consistency.
//!
//! Every estimator is a deterministic function of its chain parameters and
//! seed. Autocorrelation is handled by batch means: a standard error is never
//! smaller than the i.i.d. binomial one. Binomial confidence intervals are
//! Wilson intervals at the batch-means effective sample size.

use std::cell::OnceCell;
use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interface::{extract, reconstruct_spins, Extractor, Interface, InterfaceError};
use crate::ising::{ChainParams, ExactTable, HeatBath, IsingError, SpinConfig};
use crate::lattice::{BoxDims, Cell, Face};
use crate::pillars::{base_is_empty, event_a, pillar_in, PillarError};
use crate::walls::{wall_excess, walls_of, WallError};

/// Two-sided 95% standard normal quantile.
pub const Z95_TWO_SIDED: f64 = 1.959_963_984_540_054;
/// One-sided 95% standard normal quantile.
pub const Z95_ONE_SIDED: f64 = 1.644_853_626_951_472_2;
/// Default number of batches for batch-means standard errors.
pub const DEFAULT_BATCHES: usize = 32;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error(transparent)]
    Ising(#[from] IsingError),
    #[error(transparent)]
    Interface(#[from] InterfaceError),
    #[error(transparent)]
    Pillar(#[from] PillarError),
    #[error(transparent)]
    Wall(#[from] WallError),
    #[error("height {h} exceeds the truncation height {cap}")]
    HeightAboveCap { h: i32, cap: i32 },
    #[error("heights must be at least 1, got {0}")]
    InvalidHeight(i32),
    #[error("{0:?} is not in the interior region of the footprint")]
    OutsideRegion(Face),
    #[error("the chain emits no samples")]
    NoSamples,
    #[error("threshold {threshold} is not crossed by any entry up to h = {max_h}")]
    ThresholdNotCrossed { threshold: f64, max_h: i32 },
    #[error("κ = {0} independent blocks are needed to be at least 4")]
    KappaTooSmall(usize),
    #[error("inverse temperatures differ: {0} vs {1}")]
    BetaMismatch(f64, f64),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// How a standard error was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    /// I.i.d. binomial (or sample-variance) error.
    Binomial,
    /// Inflated by batch means to account for autocorrelation.
    BatchMeans,
}

/// A point estimate with its standard error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub n_samples: u64,
    pub seed: u64,
    pub method: Method,
    /// Sample size at which an i.i.d. estimate would have this error (equal
    /// to `n_samples` when no inflation occurred).
    pub effective_n: f64,
}

impl Estimate {
    /// A binomial proportion with batch-means error correction.
    pub fn proportion(indicators: &[bool], batches: usize, seed: u64) -> Self {
        let xs: Vec<f64> = indicators.iter().map(|&b| b as u8 as f64).collect();
        let n = xs.len() as u64;
        let p = if n == 0 { 0.0 } else { xs.iter().sum::<f64>() / n as f64 };
        let iid = if n == 0 { 0.0 } else { (p * (1.0 - p) / n as f64).sqrt() };
        let (_, bm) = batch_means(&xs, batches);
        let (stderr, method) = if bm > iid { (bm, Method::BatchMeans) } else { (iid, Method::Binomial) };
        let effective_n = if stderr > 0.0 {
            (p * (1.0 - p) / (stderr * stderr)).min(n as f64)
        } else {
            n as f64
        };
        Estimate {
            value: p,
            stderr,
            n_samples: n,
            seed,
            method,
            effective_n,
        }
    }

    /// A mean with batch-means error correction.
    pub fn mean(xs: &[f64], batches: usize, seed: u64) -> Self {
        let n = xs.len();
        let (mean, bm) = batch_means(xs, batches);
        let iid = if n < 2 {
            0.0
        } else {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        };
        let (stderr, method) = if bm > iid { (bm, Method::BatchMeans) } else { (iid, Method::Binomial) };
        let effective_n = if stderr > 0.0 && iid > 0.0 {
            n as f64 * (iid / stderr).powi(2)
        } else {
            n as f64
        };
        Estimate {
            value: mean,
            stderr,
            n_samples: n as u64,
            seed,
            method,
            effective_n,
        }
    }

    /// Wilson score interval for a proportion at normal quantile `z`.
    pub fn wilson(&self, z: f64) -> (f64, f64) {
        wilson_interval(self.value, self.effective_n, z)
    }

    /// Normal interval `value ± z·stderr`.
    pub fn normal(&self, z: f64) -> (f64, f64) {
        (self.value - z * self.stderr, self.value + z * self.stderr)
    }
}

/// Wilson score interval for proportion `p` observed on `n` trials.
pub fn wilson_interval(p: f64, n: f64, z: f64) -> (f64, f64) {
    if n <= 0.0 {
        return (0.0, 1.0);
    }
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Mean and batch-means standard error with up to `batches` equal batches
/// (at least two observations per batch; trailing remainder dropped from
/// the error estimate only).
pub fn batch_means(xs: &[f64], batches: usize) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let b = batches.min(n / 2);
    if b < 2 {
        return (mean, 0.0);
    }
    let size = n / b;
    let means: Vec<f64> = (0..b)
        .map(|k| xs[k * size..(k + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let mm = means.iter().sum::<f64>() / b as f64;
    let var = means.iter().map(|m| (m - mm).powi(2)).sum::<f64>() / (b - 1) as f64;
    (mean, (var / b as f64).sqrt())
}

/// Integrated autocorrelation time `1 + 2Σρ_k`, summed until the first
/// non-positive autocorrelation.
pub fn autocorrelation_time(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 3 {
        return 1.0;
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let c0 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    if c0 == 0.0 {
        return 1.0;
    }
    let mut tau = 1.0;
    for k in 1..n / 2 {
        let ck = (0..n - k).map(|i| (xs[i] - mean) * (xs[i + k] - mean)).sum::<f64>() / n as f64;
        let rho = ck / c0;
        if rho <= 0.0 {
            break;
        }
        tau += 2.0 * rho;
    }
    tau
}

/// Options shared by the chain-driven estimators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorOptions {
    /// Batches for batch-means errors.
    pub batches: usize,
    /// Independent replica chains (replica indices `0..replicas`).
    pub replicas: u64,
    /// Margin of the interior region `𝓛⁻₀,ₙ`; `None` means `⌈log² n⌉ ∨ 1`.
    pub margin: Option<u32>,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        EstimatorOptions {
            batches: DEFAULT_BATCHES,
            replicas: 1,
            margin: None,
        }
    }
}

/// The default margin `⌈log² n⌉ ∨ 1` of `𝓛⁻₀,ₙ`.
pub fn default_margin(n: i32) -> u32 {
    let l = (n.max(1) as f64).ln();
    ((l * l).ceil() as u32).max(1)
}

/// Whether `x` lies in `𝓛⁻₀,ₙ`: at least `margin` faces from every side.
pub fn in_interior_region(dims: &BoxDims, x: Face, margin: u32) -> bool {
    let m = margin as i32;
    let (i, j) = ((x.x - 1) / 2, (x.y - 1) / 2);
    x.is_horizontal()
        && x.z == 0
        && i - dims.x_lo >= m
        && dims.x_hi - i >= m
        && j - dims.y_lo >= m
        && dims.y_hi - j >= m
}

/// The faces of `𝓛⁻₀,ₙ`.
pub fn interior_region(dims: &BoxDims, margin: u32) -> Vec<Face> {
    dims.footprint()
        .into_iter()
        .filter(|&x| in_interior_region(dims, x, margin))
        .collect()
}

fn margin_for(dims: &BoxDims, opts: &EstimatorOptions) -> u32 {
    opts.margin.unwrap_or_else(|| default_margin(dims.n().max(dims.m())))
}

/// The three pillar events.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventKind {
    /// `A_h^x`: a plus path in the raw configuration from the cell above `x`
    /// to height `h − ½` within the upper half-space.
    A,
    /// `E_h^x`: `hgt(𝓟_x) ≥ h` in `σ(𝓘)`.
    E,
    /// `G_h^x = A_h^x ∩ E_h^x ∩ {𝓑_x = ∅}`.
    G,
}

/// One event to estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EventQuery {
    pub kind: EventKind,
    pub x: Face,
    pub h: i32,
}

/// A configuration with its interface and `σ(𝓘)` computed on demand.
pub struct Sample<'a> {
    pub config: &'a SpinConfig,
    extractor: Option<&'a mut Extractor>,
    interface: OnceCell<Interface>,
    sigma: OnceCell<SpinConfig>,
}

impl<'a> Sample<'a> {
    pub fn new(config: &'a SpinConfig) -> Self {
        Sample {
            config,
            extractor: None,
            interface: OnceCell::new(),
            sigma: OnceCell::new(),
        }
    }

    fn with_extractor(config: &'a SpinConfig, ex: &'a mut Extractor) -> Self {
        Sample {
            config,
            extractor: Some(ex),
            interface: OnceCell::new(),
            sigma: OnceCell::new(),
        }
    }

    pub fn interface(&mut self) -> &Interface {
        if self.interface.get().is_none() {
            let i = match self.extractor.as_deref_mut() {
                Some(ex) => ex.extract(self.config),
                None => extract(self.config),
            };
            let _ = self.interface.set(i);
        }
        self.interface.get().expect("just set")
    }

    pub fn sigma(&mut self) -> &SpinConfig {
        if self.sigma.get().is_none() {
            let s = reconstruct_spins(self.interface()).expect("extracted interfaces reconstruct");
            let _ = self.sigma.set(s);
        }
        self.sigma.get().expect("just set")
    }

    /// Whether the raw minus cell above `x` is certainly minus in `σ(𝓘)`:
    /// its column up to the top of the box is all minus, so it is joined to
    /// the minus boundary.
    fn certainly_minus_above(&self, x: Face) -> bool {
        let dims = self.config.dims();
        let mut z = 1;
        while z <= 2 * dims.z_hi + 1 {
            let c = Cell::new(x.x, x.y, z).expect("cell");
            if self.config.spin(c) == 1 {
                return false;
            }
            z += 2;
        }
        true
    }

    /// `hgt(𝓟_x)` in `σ(𝓘)`.
    pub fn pillar_height(&mut self, x: Face) -> Result<i32, StatsError> {
        if self.certainly_minus_above(x) {
            return Ok(0);
        }
        Ok(pillar_in(self.sigma(), x)?.height)
    }

    /// Evaluate one event.
    pub fn event(&mut self, q: &EventQuery) -> Result<bool, StatsError> {
        Ok(match q.kind {
            EventKind::A => event_a(self.config, q.x, q.h),
            EventKind::E => self.pillar_height(q.x)? >= q.h,
            EventKind::G => {
                if !event_a(self.config, q.x, q.h) || self.certainly_minus_above(q.x) {
                    false
                } else {
                    let p = pillar_in(self.sigma(), q.x)?;
                    p.height >= q.h && base_is_empty(&p)
                }
            }
        })
    }

    /// `M = max{x₃ : x ∈ 𝓘}`.
    pub fn max_height(&mut self) -> i32 {
        self.interface().max_height()
    }

    /// `max{hgt(𝓟_x) : x ∈ region}` (0 if every pillar is empty).
    pub fn max_pillar_height(&mut self, region: &[Face]) -> i32 {
        let heights = pillar_heights(self.sigma());
        region
            .iter()
            .map(|x| heights.get(x).copied().unwrap_or(0))
            .max()
            .unwrap_or(0)
    }
}

/// `hgt(𝓟_x)` for every footprint face with a nonempty pillar, by labelling
/// the *-components of plus cells of `σ` in the upper half-space.
pub fn pillar_heights(sigma: &SpinConfig) -> BTreeMap<Face, i32> {
    let dims = *sigma.dims();
    let mut comp_top: Vec<i32> = Vec::new();
    let mut label: BTreeMap<Cell, usize> = BTreeMap::new();
    let mut out = BTreeMap::new();
    for x in dims.footprint() {
        let start = Cell::new(x.x, x.y, 1).expect("cell");
        if !dims.contains_cell(start) || sigma.spin(start) != 1 {
            continue;
        }
        let id = match label.get(&start) {
            Some(&id) => id,
            None => {
                let id = comp_top.len();
                let mut top = start.z;
                let mut stack = vec![start];
                label.insert(start, id);
                while let Some(c) = stack.pop() {
                    top = top.max(c.z);
                    for &(dx, dy, dz) in Cell::star_offsets() {
                        let nb = c.shifted(dx, dy, dz);
                        if nb.z > 0
                            && dims.contains_cell(nb)
                            && sigma.spin(nb) == 1
                            && !label.contains_key(&nb)
                        {
                            label.insert(nb, id);
                            stack.push(nb);
                        }
                    }
                }
                comp_top.push(top);
                id
            }
        };
        out.insert(x, (comp_top[id] + 1) / 2);
    }
    out
}

/// Visit every emitted sample of every replica, in replica order.
pub fn for_each_sample<F>(chain: &ChainParams, replicas: u64, mut f: F) -> Result<u64, StatsError>
where
    F: FnMut(&mut Sample<'_>) -> Result<(), StatsError>,
{
    chain.validate()?;
    let mut ex = Extractor::new(chain.dims);
    let mut count = 0;
    for r in 0..replicas.max(1) {
        let params = chain.with_replica(chain.replica + r);
        for cfg in crate::ising::run_chain(&params)? {
            let mut s = Sample::with_extractor(&cfg, &mut ex);
            f(&mut s)?;
            count += 1;
        }
    }
    Ok(count)
}

fn check_height(dims: &BoxDims, h: i32) -> Result<(), StatsError> {
    if h < 1 {
        return Err(StatsError::InvalidHeight(h));
    }
    if h > dims.h_cap() {
        return Err(StatsError::HeightAboveCap { h, cap: dims.h_cap() });
    }
    Ok(())
}

fn check_query(dims: &BoxDims, q: &EventQuery, margin: u32) -> Result<(), StatsError> {
    check_height(dims, q.h)?;
    if !dims.footprint_contains(q.x.project()) || !q.x.is_horizontal() || q.x.z != 0 {
        return Err(StatsError::OutsideRegion(q.x));
    }
    if q.kind != EventKind::A && !in_interior_region(dims, q.x, margin) {
        return Err(StatsError::OutsideRegion(q.x));
    }
    Ok(())
}

/// Indicator series of several events over one chain.
pub fn event_series(
    queries: &[EventQuery],
    chain: &ChainParams,
    opts: &EstimatorOptions,
) -> Result<Vec<Vec<bool>>, StatsError> {
    let margin = margin_for(&chain.dims, opts);
    for q in queries {
        check_query(&chain.dims, q, margin)?;
    }
    if chain.emitted() == 0 {
        return Err(StatsError::NoSamples);
    }
    let mut series = vec![Vec::with_capacity(chain.emitted() as usize); queries.len()];
    for_each_sample(chain, opts.replicas, |s| {
        for (q, out) in queries.iter().zip(series.iter_mut()) {
            out.push(s.event(q)?);
        }
        Ok(())
    })?;
    Ok(series)
}

/// Estimates of several events from one chain.
pub fn estimate_events(
    queries: &[EventQuery],
    chain: &ChainParams,
    opts: &EstimatorOptions,
) -> Result<Vec<Estimate>, StatsError> {
    Ok(event_series(queries, chain, opts)?
        .iter()
        .map(|xs| Estimate::proportion(xs, opts.batches, chain.seed))
        .collect())
}

/// `μ̂(A_h^x)`, `μ̂(E_h^x)` or `μ̂(G_h^x)`.
pub fn estimate_event(
    kind: EventKind,
    x: Face,
    h: i32,
    chain: &ChainParams,
    opts: &EstimatorOptions,
) -> Result<Estimate, StatsError> {
    Ok(estimate_events(&[EventQuery { kind, x, h }], chain, opts)?.remove(0))
}

/// Exact probability of an event under an enumerated law.
pub fn exact_event_probability(table: &ExactTable, q: &EventQuery) -> Result<f64, StatsError> {
    check_height(table.dims(), q.h)?;
    let mut err = None;
    let p = table.expectation(|cfg| {
        let mut s = Sample::new(cfg);
        match s.event(q) {
            Ok(b) => b as u8 as f64,
            Err(e) => {
                err.get_or_insert(e);
                0.0
            }
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(p),
    }
}

/// One row of an [`AlphaTable`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaEntry {
    pub h: i32,
    /// `μ̂(A_h^o)`.
    pub probability: Estimate,
    /// `α̂_h = −log μ̂(A_h^o)`; `None` when no sample realised the event.
    pub alpha: Option<Estimate>,
    /// Set when the event was never observed, so `α̂_h` is only bounded.
    pub resolution_limited: bool,
}

/// `α̂_h` for consecutive heights, with the rate extrapolations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaTable {
    pub beta: f64,
    pub n: i32,
    pub entries: Vec<AlphaEntry>,
    /// Least-squares slope of `α̂_h` against `h` over `h ≥ 2`.
    pub alpha_hat: Option<Estimate>,
    /// `sup_h (α̂_h − slack)/h`.
    pub alpha_sup: Option<Estimate>,
    /// Slack used in the sup form (a desk-scale stand-in for `ε_β`).
    pub sup_slack: f64,
    /// The two extrapolations differ by more than two joint standard errors.
    pub extrapolations_disagree: bool,
}

impl AlphaTable {
    /// Build a table from probability estimates for `h = 1, 2, …`.
    pub fn from_probabilities(beta: f64, n: i32, probs: Vec<Estimate>, sup_slack: f64) -> Self {
        let entries: Vec<AlphaEntry> = probs
            .into_iter()
            .enumerate()
            .map(|(k, p)| {
                let alpha = (p.value > 0.0).then(|| Estimate {
                    value: -p.value.ln(),
                    stderr: p.stderr / p.value,
                    ..p.clone()
                });
                AlphaEntry {
                    h: k as i32 + 1,
                    resolution_limited: alpha.is_none(),
                    probability: p,
                    alpha,
                }
            })
            .collect();
        Self::from_entries(beta, n, entries, sup_slack)
    }

    /// Build a table from synthetic `α̂_h` values (zero error).
    pub fn from_alphas(beta: f64, n: i32, alphas: &[f64]) -> Self {
        let probs = alphas
            .iter()
            .map(|a| Estimate {
                value: (-a).exp(),
                stderr: 0.0,
                n_samples: 0,
                seed: 0,
                method: Method::Binomial,
                effective_n: 0.0,
            })
            .collect();
        Self::from_probabilities(beta, n, probs, 0.0)
    }

    fn from_entries(beta: f64, n: i32, entries: Vec<AlphaEntry>, sup_slack: f64) -> Self {
        let pts: Vec<(f64, &Estimate)> = entries
            .iter()
            .filter(|e| e.h >= 2)
            .filter_map(|e| e.alpha.as_ref().map(|a| (e.h as f64, a)))
            .collect();
        let alpha_hat = (pts.len() >= 2).then(|| {
            let hbar = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
            let sxx: f64 = pts.iter().map(|p| (p.0 - hbar).powi(2)).sum();
            let abar = pts.iter().map(|p| p.1.value).sum::<f64>() / pts.len() as f64;
            let slope = pts.iter().map(|p| (p.0 - hbar) * (p.1.value - abar)).sum::<f64>() / sxx;
            let var: f64 = pts
                .iter()
                .map(|p| ((p.0 - hbar) / sxx).powi(2) * p.1.stderr.powi(2))
                .sum();
            Estimate {
                value: slope,
                stderr: var.sqrt(),
                n_samples: pts[0].1.n_samples,
                seed: pts[0].1.seed,
                method: pts[0].1.method,
                effective_n: pts[0].1.effective_n,
            }
        });
        let alpha_sup = entries
            .iter()
            .filter_map(|e| e.alpha.as_ref().map(|a| (e.h as f64, a)))
            .map(|(h, a)| Estimate {
                value: (a.value - sup_slack) / h,
                stderr: a.stderr / h,
                ..a.clone()
            })
            .max_by(|a, b| a.value.total_cmp(&b.value));
        let extrapolations_disagree = match (&alpha_hat, &alpha_sup) {
            (Some(a), Some(b)) => {
                (a.value - b.value).abs() > 2.0 * (a.stderr.powi(2) + b.stderr.powi(2)).sqrt()
            }
            _ => false,
        };
        AlphaTable {
            beta,
            n,
            entries,
            alpha_hat,
            alpha_sup,
            sup_slack,
            extrapolations_disagree,
        }
    }

    pub fn alpha(&self, h: i32) -> Option<&Estimate> {
        self.entries
            .iter()
            .find(|e| e.h == h)
            .and_then(|e| e.alpha.as_ref())
    }

    /// Whether the point estimates are strictly increasing in `h`.
    pub fn is_increasing(&self) -> bool {
        self.entries.windows(2).all(|w| match (&w[0].alpha, &w[1].alpha) {
            (Some(a), Some(b)) => a.value < b.value,
            (Some(_), None) => true,
            _ => false,
        })
    }
}

/// `α̂_h` at the origin for `h = 1, …, h_max` from one chain on `Λ_n`.
pub fn alpha_table(
    beta: f64,
    n: i32,
    h_max: i32,
    chain: &ChainParams,
    opts: &EstimatorOptions,
    sup_slack: f64,
) -> Result<AlphaTable, StatsError> {
    if (chain.beta - beta).abs() > 0.0 {
        return Err(StatsError::BetaMismatch(beta, chain.beta));
    }
    if chain.dims.n() != n {
        return Err(StatsError::InvalidInput(format!(
            "chain box has n = {}, table requested for n = {n}",
            chain.dims.n()
        )));
    }
    check_height(&chain.dims, h_max)?;
    let queries: Vec<EventQuery> = (1..=h_max)
        .map(|h| EventQuery {
            kind: EventKind::A,
            x: crate::lattice::ORIGIN,
            h,
        })
        .collect();
    let probs = estimate_events(&queries, chain, opts)?;
    Ok(AlphaTable::from_probabilities(beta, n, probs, sup_slack))
}

/// `m̂⋆` with the crossings under `α̂_h ± stderr`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MStar {
    pub value: i32,
    /// Earliest crossing (using `α̂_h + stderr`).
    pub lo: i32,
    /// Latest crossing (using `α̂_h − stderr`); `None` if beyond the table.
    pub hi: Option<i32>,
    pub threshold: f64,
}

/// `m⋆_n = inf{h ≥ 1 : α_h > 2 log(2n) − 2β}` on a measured table.
pub fn m_star(table: &AlphaTable, n: i32, beta: f64) -> Result<MStar, StatsError> {
    let threshold = 2.0 * (2.0 * n as f64).ln() - 2.0 * beta;
    let crossing = |shift: f64| {
        table.entries.iter().find_map(|e| match &e.alpha {
            Some(a) if a.value + shift * a.stderr > threshold => Some(e.h),
            None => Some(e.h),
            _ => None,
        })
    };
    let value = crossing(0.0).ok_or(StatsError::ThresholdNotCrossed {
        threshold,
        max_h: table.entries.last().map_or(0, |e| e.h),
    })?;
    Ok(MStar {
        value,
        lo: crossing(1.0).unwrap_or(value).min(value),
        hi: crossing(-1.0).map(|h| h.max(value)),
        threshold,
    })
}

/// Empirical law of an integer observable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegerLaw {
    pub samples: Vec<i32>,
    pub histogram: BTreeMap<i32, u64>,
    /// Smallest `k` with `F(k) ≥ ½`.
    pub median: i32,
    pub mean: Estimate,
}

impl IntegerLaw {
    pub fn new(samples: Vec<i32>, batches: usize, seed: u64) -> Self {
        let mut histogram = BTreeMap::new();
        for &s in &samples {
            *histogram.entry(s).or_insert(0u64) += 1;
        }
        let n = samples.len() as u64;
        let mut acc = 0;
        let mut median = 0;
        for (&k, &c) in &histogram {
            acc += c;
            if 2 * acc >= n {
                median = k;
                break;
            }
        }
        let xs: Vec<f64> = samples.iter().map(|&s| s as f64).collect();
        IntegerLaw {
            mean: Estimate::mean(&xs, batches, seed),
            samples,
            histogram,
            median,
        }
    }

    /// Empirical CDF at `k`.
    pub fn cdf(&self, k: i32) -> f64 {
        let n = self.samples.len() as f64;
        self.histogram.range(..=k).map(|(_, &c)| c as f64).sum::<f64>() / n
    }

    /// Empirical probability of `k`.
    pub fn pmf(&self, k: i32) -> f64 {
        self.histogram.get(&k).copied().unwrap_or(0) as f64 / self.samples.len() as f64
    }
}

/// Kolmogorov–Smirnov distance between two integer laws.
pub fn ks_distance(a: &IntegerLaw, b: &IntegerLaw) -> f64 {
    a.histogram
        .keys()
        .chain(b.histogram.keys())
        .map(|&k| (a.cdf(k) - b.cdf(k)).abs())
        .fold(0.0, f64::max)
}

/// Total-variation distance between an empirical and an exact law.
pub fn tv_distance(a: &IntegerLaw, exact: &BTreeMap<i32, f64>) -> f64 {
    let keys: std::collections::BTreeSet<i32> =
        a.histogram.keys().chain(exact.keys()).copied().collect();
    0.5 * keys
        .iter()
        .map(|k| (a.pmf(*k) - exact.get(k).copied().unwrap_or(0.0)).abs())
        .sum::<f64>()
}

/// The laws of `M_n` and of `max{hgt(𝓟_x) : x ∈ 𝓛⁻₀,ₙ}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxDistribution {
    pub max: IntegerLaw,
    pub interior_max: IntegerLaw,
}

/// Sample the maximum height of the interface.
pub fn max_dist(chain: &ChainParams, opts: &EstimatorOptions) -> Result<MaxDistribution, StatsError> {
    if chain.emitted() == 0 {
        return Err(StatsError::NoSamples);
    }
    let region = interior_region(&chain.dims, margin_for(&chain.dims, opts));
    let mut m = Vec::new();
    let mut mi = Vec::new();
    for_each_sample(chain, opts.replicas, |s| {
        m.push(s.max_height());
        mi.push(s.max_pillar_height(&region));
        Ok(())
    })?;
    Ok(MaxDistribution {
        max: IntegerLaw::new(m, opts.batches, chain.seed),
        interior_max: IntegerLaw::new(mi, opts.batches, chain.seed),
    })
}

/// Outcome of the sub-multiplicativity check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmultReport {
    pub inequality: String,
    pub h: i32,
    pub h1: i32,
    pub h2: i32,
    pub lhs: Estimate,
    pub first: Estimate,
    pub second: Estimate,
    /// `μ̂(A_h^x) / (μ̂(A_{h₁}^{x₁}) μ̂(A_{h₂}^{x₂}))`.
    pub ratio: Option<f64>,
    /// One-sided upper confidence bound on the ratio (delta method on logs).
    pub ratio_upper: Option<f64>,
    pub slack: f64,
    pub confidence: f64,
    pub pass: bool,
    pub band: String,
}

/// One-sided test of `μ(A_h^x) ≤ (1+slack) μ(A_{h₁}^{x₁}) μ(A_{h₂}^{x₂})`:
/// passes when the upper confidence bound of the ratio is at most `1+slack`.
#[allow(clippy::too_many_arguments)]
pub fn check_submult(
    h1: i32,
    h2: i32,
    x: Face,
    x1: Face,
    x2: Face,
    chain: &ChainParams,
    opts: &EstimatorOptions,
    slack: f64,
    z: f64,
) -> Result<SubmultReport, StatsError> {
    if h1 < 1 {
        return Err(StatsError::InvalidHeight(h1));
    }
    if h2 < 1 {
        return Err(StatsError::InvalidHeight(h2));
    }
    let h = h1 + h2;
    let q = |x, h| EventQuery { kind: EventKind::A, x, h };
    let queries = [q(x, h), q(x1, h1), q(x2, h2)];
    let est = estimate_events(&queries, chain, opts)?;
    Ok(submult_report(h1, h2, &queries, est, slack, z))
}

fn submult_report(
    h1: i32,
    h2: i32,
    queries: &[EventQuery; 3],
    est: Vec<Estimate>,
    slack: f64,
    z: f64,
) -> SubmultReport {
    let (lhs, first, second) = (est[0].clone(), est[1].clone(), est[2].clone());
    let rel = |e: &Estimate| e.stderr / e.value;
    let (ratio, ratio_upper) = if lhs.value > 0.0 && first.value > 0.0 && second.value > 0.0 {
        let r = lhs.value / (first.value * second.value);
        let var = if queries[1] == queries[2] {
            rel(&lhs).powi(2) + 4.0 * rel(&first).powi(2)
        } else {
            rel(&lhs).powi(2) + rel(&first).powi(2) + rel(&second).powi(2)
        };
        (Some(r), Some(r * (z * var.sqrt()).exp()))
    } else {
        (None, None)
    };
    let pass = ratio_upper.is_some_and(|u| u <= 1.0 + slack);
    SubmultReport {
        inequality: "mu(A_h^x) <= (1 + slack) mu(A_h1^x1) mu(A_h2^x2)".into(),
        h: h1 + h2,
        h1,
        h2,
        lhs,
        first,
        second,
        ratio,
        ratio_upper,
        slack,
        confidence: normal_cdf_one_sided(z),
        pass,
        band: "desk-scale band".into(),
    }
}

/// The same inequality on exact probabilities.
pub fn exact_submult(
    table: &ExactTable,
    h1: i32,
    h2: i32,
    x: Face,
    x1: Face,
    x2: Face,
) -> Result<(f64, f64, f64), StatsError> {
    let q = |x, h| EventQuery { kind: EventKind::A, x, h };
    Ok((
        exact_event_probability(table, &q(x, h1 + h2))?,
        exact_event_probability(table, &q(x1, h1))?,
        exact_event_probability(table, &q(x2, h2))?,
    ))
}

fn normal_cdf_one_sided(z: f64) -> f64 {
    if (z - Z95_ONE_SIDED).abs() < 1e-9 || (z - Z95_TWO_SIDED).abs() < 1e-9 {
        0.95
    } else {
        f64::NAN
    }
}

/// Outcome of the multiscale coupling check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiscaleReport {
    pub n: i32,
    pub l: i32,
    pub kappa: usize,
    pub big: IntegerLaw,
    /// Law of the maximum of `κ` independent small-box draws.
    pub small_max: IntegerLaw,
    pub ks: f64,
    /// `(L/n)^{1/3} + log^{-10} n`, shown as context only.
    pub error_shape: f64,
}

/// Compare the law of `M_n` with that of the maximum of `κ = ⌊n/L⌋²`
/// independent draws of `M_L`. The small-box draws come from `κ` replica
/// chains: draw `i` of the maximum combines emission `i` of every replica.
pub fn multiscale(
    n: i32,
    l: i32,
    chain_big: &ChainParams,
    chain_small: &ChainParams,
    opts: &EstimatorOptions,
) -> Result<MultiscaleReport, StatsError> {
    if l < 1 || n < l {
        return Err(StatsError::InvalidInput(format!("need 1 ≤ L ≤ n, got L = {l}, n = {n}")));
    }
    let kappa = ((n / l) * (n / l)) as usize;
    multiscale_with_kappa(n, l, kappa, chain_big, chain_small, opts, 4)
}

/// As [`multiscale`] with an explicit `κ` and minimum; `κ = 1` compares two
/// chains on the same box.
pub fn multiscale_with_kappa(
    n: i32,
    l: i32,
    kappa: usize,
    chain_big: &ChainParams,
    chain_small: &ChainParams,
    opts: &EstimatorOptions,
    min_kappa: usize,
) -> Result<MultiscaleReport, StatsError> {
    if kappa < min_kappa {
        return Err(StatsError::KappaTooSmall(kappa));
    }
    if chain_big.beta != chain_small.beta {
        return Err(StatsError::BetaMismatch(chain_big.beta, chain_small.beta));
    }
    let big_opts = EstimatorOptions { replicas: 1, ..opts.clone() };
    let big = max_dist(chain_big, &big_opts)?.max;
    let mut maxima: Vec<i32> = Vec::new();
    for r in 0..kappa as u64 {
        let params = chain_small.with_replica(chain_small.replica + r);
        let mut k = 0;
        for_each_sample(&params, 1, |s| {
            let m = s.max_height();
            if r == 0 {
                maxima.push(m);
            } else if let Some(slot) = maxima.get_mut(k) {
                *slot = (*slot).max(m);
            }
            k += 1;
            Ok(())
        })?;
    }
    if maxima.is_empty() {
        return Err(StatsError::NoSamples);
    }
    let small_max = IntegerLaw::new(maxima, opts.batches, chain_small.seed);
    let ks = ks_distance(&big, &small_max);
    let nf = n as f64;
    Ok(MultiscaleReport {
        n,
        l,
        kappa,
        error_shape: (l as f64 / nf).cbrt() + nf.ln().powi(-10),
        big,
        small_max,
        ks,
    })
}

/// Summary of `Z_h = Σ_{x ∈ 𝓛⁻₀,ₙ} 𝟏{G_h^x}` over samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZReport {
    pub h: i32,
    pub values: Vec<u32>,
    pub mean: Estimate,
    pub variance: f64,
    pub second_moment: f64,
    /// `E[Z²] ≥ E[Z]²` on the empirical law.
    pub jensen_holds: bool,
}

/// `Z_h` of one configuration.
pub fn z_count(config: &SpinConfig, h: i32, region: &[Face]) -> Result<u32, StatsError> {
    let mut s = Sample::new(config);
    let mut z = 0;
    for &x in region {
        if s.event(&EventQuery { kind: EventKind::G, x, h })? {
            z += 1;
        }
    }
    Ok(z)
}

/// `E[Z_h]` and `Var[Z_h]` from samples.
pub fn count_z(
    samples: &[SpinConfig],
    h: i32,
    margin: Option<u32>,
    batches: usize,
    seed: u64,
) -> Result<ZReport, StatsError> {
    let Some(first) = samples.first() else {
        return Err(StatsError::NoSamples);
    };
    let dims = *first.dims();
    check_height(&dims, h)?;
    let region = interior_region(&dims, margin.unwrap_or_else(|| default_margin(dims.n().max(dims.m()))));
    let values = samples
        .iter()
        .map(|c| z_count(c, h, &region))
        .collect::<Result<Vec<u32>, _>>()?;
    Ok(z_report(h, values, batches, seed))
}

fn z_report(h: i32, values: Vec<u32>, batches: usize, seed: u64) -> ZReport {
    let xs: Vec<f64> = values.iter().map(|&v| v as f64).collect();
    let mean = Estimate::mean(&xs, batches, seed);
    let n = xs.len() as f64;
    let second_moment = xs.iter().map(|x| x * x).sum::<f64>() / n;
    let variance = second_moment - mean.value * mean.value;
    ZReport {
        h,
        values,
        jensen_holds: second_moment + 1e-12 >= mean.value * mean.value,
        mean,
        variance: variance.max(0.0),
        second_moment,
    }
}

/// `E[Z_h]` computed from a chain.
pub fn count_z_chain(
    h: i32,
    chain: &ChainParams,
    opts: &EstimatorOptions,
) -> Result<ZReport, StatsError> {
    check_height(&chain.dims, h)?;
    let region = interior_region(&chain.dims, margin_for(&chain.dims, opts));
    let mut values = Vec::new();
    for_each_sample(chain, opts.replicas, |s| {
        let mut z = 0;
        for &x in &region {
            if s.event(&EventQuery { kind: EventKind::G, x, h })? {
                z += 1;
            }
        }
        values.push(z);
        Ok(())
    })?;
    if values.is_empty() {
        return Err(StatsError::NoSamples);
    }
    Ok(z_report(h, values, opts.batches, chain.seed))
}

/// Observables for [`correlation_decay`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    /// Total excess of the walls of `𝓘` whose projection contains the face.
    WallExcess,
    /// `hgt(𝓟_x)`.
    PillarHeight,
}

/// Covariance at one separation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayPoint {
    pub distance: i32,
    pub covariance: f64,
    pub stderr: f64,
    pub pairs: usize,
}

/// Estimated covariance against distance with a log-linear fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayCurve {
    pub observable: Observable,
    pub points: Vec<DecayPoint>,
    /// Slope of `log|cov|` against distance over points with nonzero
    /// covariance (needs two such points).
    pub slope: Option<f64>,
    pub shuffled_null: bool,
}

fn observable_field(s: &mut Sample<'_>, obs: Observable, faces: &[Face]) -> Result<Vec<f64>, StatsError> {
    match obs {
        Observable::PillarHeight => {
            let h = pillar_heights(s.sigma());
            Ok(faces.iter().map(|x| h.get(x).copied().unwrap_or(0) as f64).collect())
        }
        Observable::WallExcess => {
            let walls = walls_of(s.interface())?;
            let mut out = vec![0.0; faces.len()];
            for w in &walls {
                let ex = wall_excess(w.faces.len(), &w.geometry) as f64;
                for (k, x) in faces.iter().enumerate() {
                    if w.geometry.in_projection(x.project()) {
                        out[k] += ex;
                    }
                }
            }
            Ok(out)
        }
    }
}

/// Covariance of an observable at face pairs `(x, x + d·e)` along the two
/// axes, for each requested distance `d`, averaged over all pairs inside
/// `𝓛⁻₀,ₙ`. With `shuffled_null`, the second face is read from another
/// sample (a fixed cyclic offset), giving an independence control.
pub fn correlation_decay(
    observable: Observable,
    distances: &[i32],
    chain: &ChainParams,
    opts: &EstimatorOptions,
    shuffled_null: bool,
) -> Result<DecayCurve, StatsError> {
    let dims = chain.dims;
    let region = interior_region(&dims, margin_for(&dims, opts));
    let in_region: HashSet<Face> = region.iter().copied().collect();
    let mut faces: Vec<Face> = Vec::new();
    let mut pair_idx: Vec<Vec<(usize, usize)>> = vec![Vec::new(); distances.len()];
    let index_of = |f: Face, faces: &mut Vec<Face>| {
        faces.iter().position(|&g| g == f).unwrap_or_else(|| {
            faces.push(f);
            faces.len() - 1
        })
    };
    for (k, &d) in distances.iter().enumerate() {
        if d < 0 {
            return Err(StatsError::InvalidInput(format!("negative distance {d}")));
        }
        for &x in &region {
            for (dx, dy) in [(2 * d, 0), (0, 2 * d)] {
                let y = x.shifted(dx, dy, 0);
                if in_region.contains(&y) && (d > 0 || dy == 0) {
                    let a = index_of(x, &mut faces);
                    let b = index_of(y, &mut faces);
                    pair_idx[k].push((a, b));
                }
            }
        }
        if pair_idx[k].is_empty() {
            return Err(StatsError::InvalidInput(format!(
                "distance {d} has no face pair inside the interior region"
            )));
        }
    }
    let mut fields: Vec<Vec<f64>> = Vec::new();
    for_each_sample(chain, opts.replicas, |s| {
        fields.push(observable_field(s, observable, &faces)?);
        Ok(())
    })?;
    let t = fields.len();
    if t < 2 {
        return Err(StatsError::NoSamples);
    }
    let offset = if shuffled_null { (t / 2).max(1) } else { 0 };
    let mut points = Vec::new();
    for (k, &d) in distances.iter().enumerate() {
        // Per-sample average over pairs of the centred product.
        let pairs = &pair_idx[k];
        let mean_of = |idx: usize, shift: usize| {
            (0..t).map(|s| fields[(s + shift) % t][idx]).sum::<f64>() / t as f64
        };
        let means: Vec<(f64, f64)> = pairs.iter().map(|&(a, b)| (mean_of(a, 0), mean_of(b, offset))).collect();
        let series: Vec<f64> = (0..t)
            .map(|s| {
                pairs
                    .iter()
                    .zip(&means)
                    .map(|(&(a, b), &(ma, mb))| (fields[s][a] - ma) * (fields[(s + offset) % t][b] - mb))
                    .sum::<f64>()
                    / pairs.len() as f64
            })
            .collect();
        let e = Estimate::mean(&series, opts.batches, chain.seed);
        points.push(DecayPoint {
            distance: d,
            covariance: e.value,
            stderr: e.stderr,
            pairs: pairs.len(),
        });
    }
    let fit: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.covariance.abs() > 0.0)
        .map(|p| (p.distance as f64, p.covariance.abs().ln()))
        .collect();
    let slope = (fit.len() >= 2).then(|| {
        let n = fit.len() as f64;
        let xb = fit.iter().map(|p| p.0).sum::<f64>() / n;
        let yb = fit.iter().map(|p| p.1).sum::<f64>() / n;
        fit.iter().map(|p| (p.0 - xb) * (p.1 - yb)).sum::<f64>()
            / fit.iter().map(|p| (p.0 - xb).powi(2)).sum::<f64>()
    });
    Ok(DecayCurve {
        observable,
        points,
        slope,
        shuffled_null,
    })
}

/// `μ̂(E|A)` and `μ̂(A|E)` at one face and height.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CondReport {
    pub h: i32,
    pub x: Face,
    pub count_a: u64,
    pub count_e: u64,
    pub count_both: u64,
    /// `None` (flagged) when `A` was never observed.
    pub e_given_a: Option<Estimate>,
    /// `None` (flagged) when `E` was never observed.
    pub a_given_e: Option<Estimate>,
    pub flags: Vec<String>,
}

/// Conditional frequencies of `E_h^x` given `A_h^x` and vice versa.
pub fn cond_consistency(
    h: i32,
    x: Face,
    chain: &ChainParams,
    opts: &EstimatorOptions,
) -> Result<CondReport, StatsError> {
    let q = |kind| EventQuery { kind, x, h };
    let s = event_series(&[q(EventKind::A), q(EventKind::E)], chain, opts)?;
    Ok(cond_report(h, x, &s[0], &s[1], opts.batches, chain.seed))
}

fn cond_report(h: i32, x: Face, a: &[bool], e: &[bool], batches: usize, seed: u64) -> CondReport {
    let e_on_a: Vec<bool> = a.iter().zip(e).filter(|p| *p.0).map(|p| *p.1).collect();
    let a_on_e: Vec<bool> = a.iter().zip(e).filter(|p| *p.1).map(|p| *p.0).collect();
    let mut flags = Vec::new();
    if e_on_a.is_empty() {
        flags.push(format!("A_{h} never observed"));
    }
    if a_on_e.is_empty() {
        flags.push(format!("E_{h} never observed"));
    }
    CondReport {
        h,
        x,
        count_a: e_on_a.len() as u64,
        count_e: a_on_e.len() as u64,
        count_both: e_on_a.iter().filter(|&&b| b).count() as u64,
        e_given_a: (!e_on_a.is_empty()).then(|| Estimate::proportion(&e_on_a, batches, seed)),
        a_given_e: (!a_on_e.is_empty()).then(|| Estimate::proportion(&a_on_e, batches, seed)),
        flags,
    }
}

/// Exact conditional probabilities `μ(E|A)` and `μ(A|E)`.
pub fn exact_cond(table: &ExactTable, h: i32, x: Face) -> Result<(Option<f64>, Option<f64>), StatsError> {
    let q = |kind| EventQuery { kind, x, h };
    let pa = exact_event_probability(table, &q(EventKind::A))?;
    let pe = exact_event_probability(table, &q(EventKind::E))?;
    let both = table.expectation(|cfg| {
        let mut s = Sample::new(cfg);
        let a = s.event(&q(EventKind::A)).unwrap_or(false);
        let e = s.event(&q(EventKind::E)).unwrap_or(false);
        (a && e) as u8 as f64
    });
    Ok(((pa > 0.0).then(|| both / pa), (pe > 0.0).then(|| both / pe)))
}

/// A heat-bath chain for the measure conditioned on `A_h^x`: flips that
/// would destroy every plus path from the cell above `x` to height `h − ½`
/// are rejected, which is exactly the single-site conditional of the
/// restricted measure. It starts from the flat configuration with a column
/// of `h` plus cells over `x`.
pub struct ConditionedChain {
    params: ChainParams,
    sampler: HeatBath,
    x: Face,
    h: i32,
    done: u64,
    seen: Vec<u32>,
    stamp: u32,
    stack: Vec<usize>,
}

impl ConditionedChain {
    pub fn new(params: &ChainParams, x: Face, h: i32) -> Result<Self, StatsError> {
        params.validate()?;
        check_height(&params.dims, h)?;
        if !params.dims.footprint_contains(x.project()) {
            return Err(StatsError::OutsideRegion(x));
        }
        let column: Vec<Cell> = (0..h).map(|k| Cell::new(x.x, x.y, 2 * k + 1).expect("cell")).collect();
        let start = SpinConfig::flat_with_plus(params.dims, &column)?;
        let sampler = HeatBath::new(&start, params.beta, params.rng());
        let len = sampler.padded().len();
        Ok(ConditionedChain {
            params: params.clone(),
            sampler,
            x,
            h,
            done: 0,
            seen: vec![0; len],
            stamp: 0,
            stack: Vec::new(),
        })
    }

    /// Whether `A_h^x` survives setting padded position `p` to minus.
    fn survives(
        hb: &HeatBath,
        p: usize,
        start: usize,
        h: i32,
        seen: &mut [u32],
        stamp: &mut u32,
        stack: &mut Vec<usize>,
    ) -> bool {
        let a = hb.padded();
        let (sx, sy, _) = hb.strides();
        let z_lo = hb.dims().z_lo;
        let k_of = |q: usize| (q % sy) as i32 - 1 + z_lo;
        let target = h - 1;
        if p == start {
            return false;
        }
        *stamp = stamp.wrapping_add(1);
        if *stamp == 0 {
            seen.iter_mut().for_each(|s| *s = 0);
            *stamp = 1;
        }
        stack.clear();
        stack.push(start);
        seen[start] = *stamp;
        while let Some(q) = stack.pop() {
            if k_of(q) == target {
                return true;
            }
            for dx in [-1isize, 0, 1] {
                for dy in [-1isize, 0, 1] {
                    for dz in [-1isize, 0, 1] {
                        if dx == 0 && dy == 0 && dz == 0 {
                            continue;
                        }
                        let r = (q as isize + dx * sx as isize + dy * sy as isize + dz) as usize;
                        if r == p || seen[r] == *stamp || a[r] != 1 {
                            continue;
                        }
                        let k = k_of(r);
                        if k < 0 || k > target {
                            continue;
                        }
                        seen[r] = *stamp;
                        stack.push(r);
                    }
                }
            }
        }
        false
    }

    fn sweep(&mut self) {
        let start = self
            .sampler
            .padded_index(Cell::new(self.x.x, self.x.y, 1).expect("cell"));
        let (h, sy, z_lo) = (self.h, self.sampler.strides().1, self.sampler.dims().z_lo);
        let seen = &mut self.seen;
        let stamp = &mut self.stamp;
        let stack = &mut self.stack;
        self.sampler.sweep_guarded(|hb, p, new| {
            if new == 1 {
                return true;
            }
            let k = (p % sy) as i32 - 1 + z_lo;
            if k < 0 || k > h - 1 {
                return true;
            }
            Self::survives(hb, p, start, h, seen, stamp, stack)
        });
    }
}

impl Iterator for ConditionedChain {
    type Item = SpinConfig;

    fn next(&mut self) -> Option<SpinConfig> {
        while self.done < self.params.sweeps {
            self.sweep();
            self.done += 1;
            if self.done > self.params.burn_in
                && (self.done - self.params.burn_in) % self.params.thin == 0
            {
                return Some(self.sampler.config());
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::ORIGIN;

    #[test]
    fn wilson_contains_point_and_is_clamped() {
        let (lo, hi) = wilson_interval(0.3, 100.0, Z95_TWO_SIDED);
        assert!(lo < 0.3 && 0.3 < hi);
        let (lo, hi) = wilson_interval(0.0, 50.0, Z95_TWO_SIDED);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.1);
    }

    #[test]
    fn batch_means_of_constant_series_is_zero() {
        let (m, se) = batch_means(&[2.0; 100], 32);
        assert_eq!(m, 2.0);
        assert_eq!(se, 0.0);
    }

    #[test]
    fn m_star_on_synthetic_tables() {
        let t = AlphaTable::from_alphas(1.0, 10, &[4.0, 8.0, 12.0]);
        // 2 log(2n) − 2β = 6 ⇔ n = e^4/2.
        let n = ((4.0f64).exp() / 2.0).round() as i32;
        let thr = 2.0 * (2.0 * n as f64).ln() - 2.0;
        assert!((thr - 6.0).abs() < 0.05);
        assert_eq!(m_star(&t, n, 1.0).unwrap().value, 2);
        assert_eq!(m_star(&t, 2, 1.0).unwrap().value, 1);
        let short = AlphaTable::from_alphas(1.0, 10, &[1.0]);
        assert!(matches!(
            m_star(&short, 1000, 1.0),
            Err(StatsError::ThresholdNotCrossed { .. })
        ));
    }

    #[test]
    fn ks_of_identical_laws_is_zero() {
        let a = IntegerLaw::new(vec![0, 1, 1, 2], 4, 0);
        assert_eq!(ks_distance(&a, &a.clone()), 0.0);
        assert_eq!(a.median, 1);
    }

    #[test]
    fn z_of_flat_and_column() {
        let d = BoxDims::lambda(5, 5, 4).unwrap();
        let region = interior_region(&d, 2);
        assert_eq!(z_count(&SpinConfig::flat(d), 1, &region).unwrap(), 0);
        let col: Vec<Cell> = (0..2).map(|k| Cell::at(0, 0, k)).collect();
        let cfg = SpinConfig::flat_with_plus(d, &col).unwrap();
        assert_eq!(z_count(&cfg, 2, &region).unwrap(), 1);
        assert_eq!(z_count(&cfg, 3, &region).unwrap(), 0);
    }

    #[test]
    fn heights_above_cap_are_rejected() {
        let d = BoxDims::lambda(3, 3, 3).unwrap();
        let p = ChainParams { dims: d, beta: 1.0, sweeps: 4, burn_in: 0, thin: 1, seed: 1, replica: 0 };
        assert!(matches!(
            estimate_event(EventKind::A, ORIGIN, 4, &p, &EstimatorOptions::default()),
            Err(StatsError::HeightAboveCap { .. })
        ));
    }

    #[test]
    fn conditioned_chain_keeps_the_event() {
        let d = BoxDims::lambda(3, 3, 4).unwrap();
        let p = ChainParams { dims: d, beta: 0.6, sweeps: 60, burn_in: 0, thin: 1, seed: 3, replica: 0 };
        let chain = ConditionedChain::new(&p, ORIGIN, 3).unwrap();
        let mut n = 0;
        for cfg in chain {
            assert!(event_a(&cfg, ORIGIN, 3));
            n += 1;
        }
        assert_eq!(n, 60);
    }
}
