//! The optimal exponent for testing against independence over a channel of
//! capacity `C`:
//!
//! ```text
//! theta(P_UV, C) = sup { I(V;W) : I(U;W) <= C, V - U - W }
//!                = inf_{mu > 0} max_W [ I(V;W) + mu (C - I(U;W)) ]
//! ```
//!
//! The Lagrangian route ([`theta`]) is the production path; [`theta_direct`]
//! is an exhaustive grid scan over auxiliary channels used to bracket it,
//! and [`r_s_mu_nu`] evaluates the relaxed single-letter bound.

mod direct;
mod lagrangian;
mod single_letter;

use std::collections::BTreeMap;

pub use direct::{theta_direct, theta_direct_detailed, DIRECT_GRID_CAP};
pub use lagrangian::{hyperplane_point, theta_mu, HyperplanePoint, LagrangianOptions};
pub use single_letter::{r_s_mu_nu, r_s_mu_nu_with, SingleLetterOptions, SingleLetterPoint};

use crate::error::{Error, Result};
use crate::probcore::{entropy_of, mutual_information, CondPmf, JointPmf};
use lagrangian::Bottleneck;

/// Auxiliary channel `P_W|U` at the fixed working cardinality `|W| = |U| + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxChannel {
    cond: CondPmf,
}

impl AuxChannel {
    pub fn new(cond: CondPmf) -> Result<Self> {
        if cond.n_outputs() != cond.n_inputs() + 1 {
            return Err(Error::InvalidParameter(format!(
                "auxiliary channel must have |W| = |U|+1, got {} -> {}",
                cond.n_inputs(),
                cond.n_outputs()
            )));
        }
        Ok(Self { cond })
    }

    /// `W = U`, with the spare output symbol unused.
    pub fn identity(nu: usize) -> Result<Self> {
        let mut rows = vec![0.0; nu * (nu + 1)];
        for u in 0..nu {
            rows[u * (nu + 1) + u] = 1.0;
        }
        Self::new(CondPmf::new(nu, nu + 1, rows)?)
    }

    pub fn constant(nu: usize) -> Result<Self> {
        Self::new(CondPmf::constant(nu, nu + 1, 0)?)
    }

    pub fn cond(&self) -> &CondPmf {
        &self.cond
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Lagrangian,
    BruteForce,
}

#[derive(Debug, Clone)]
pub struct ExponentResult {
    pub theta: f64,
    /// `0.0` when the `mu -> 0` limit `I(U;V)` is the minimizer.
    pub best_mu: f64,
    pub best_aux: AuxChannel,
    /// Every evaluated `(mu, theta_mu)`, ascending in `mu`.
    pub mu_trace: Vec<(f64, f64)>,
    pub method: Method,
}

/// Default multiplier grid: 40 log-spaced points on `[1e-2, 1e2]`.
pub fn default_mu_grid() -> Vec<f64> {
    log_grid(1e-2, 1e2, 40)
}

pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..points)
        .map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp())
        .collect()
}

#[derive(Debug, Clone)]
pub struct ThetaOptions {
    pub mu_grid: Vec<f64>,
    pub lagrangian: LagrangianOptions,
    /// Refine the grid minimum with a convex cutting-plane search in `mu`.
    pub refine: bool,
    /// Stop refining once the certified bracket on the infimum is this tight.
    pub refine_tol: f64,
    pub refine_max_evals: usize,
}

impl Default for ThetaOptions {
    fn default() -> Self {
        Self {
            mu_grid: default_mu_grid(),
            lagrangian: LagrangianOptions::default(),
            refine: true,
            refine_tol: 1e-9,
            refine_max_evals: 40,
        }
    }
}

impl ThetaOptions {
    pub fn with_restarts(mut self, restarts: usize, seed: u64) -> Self {
        self.lagrangian.restarts = restarts;
        self.lagrangian.seed = seed;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.mu_grid.is_empty() {
            return Err(Error::InvalidParameter("mu grid is empty".into()));
        }
        if let Some(m) = self.mu_grid.iter().find(|m| !(**m > 0.0) || !m.is_finite()) {
            return Err(Error::InvalidParameter(format!("mu grid entry {m} is not > 0")));
        }
        if self.lagrangian.restarts < 1 {
            return Err(Error::InvalidParameter("restarts must be >= 1".into()));
        }
        Ok(())
    }
}

/// Caches hyperplane solutions for one source. `R_mu` does not depend on
/// the capacity, so a sweep over capacities reuses every solved `mu`.
pub struct ExponentSolver {
    source: JointPmf,
    bottleneck: Bottleneck,
    opts: ThetaOptions,
    /// keyed by `mu.to_bits()`; positive floats order like their bits
    points: BTreeMap<u64, HyperplanePoint>,
    i_uv: f64,
    /// `I(U;W)` of the minimal sufficient statistic of `U` for `V`, which is
    /// the right-derivative information of the `mu -> 0` limit.
    h_sufficient: f64,
}

impl ExponentSolver {
    pub fn new(source: &JointPmf, opts: ThetaOptions) -> Result<Self> {
        opts.validate()?;
        Ok(Self {
            source: source.clone(),
            bottleneck: Bottleneck::new(source),
            i_uv: mutual_information(source),
            h_sufficient: sufficient_statistic_entropy(source),
            opts,
            points: BTreeMap::new(),
        })
    }

    pub fn source(&self) -> &JointPmf {
        &self.source
    }

    /// Solves (or recalls) the hyperplane at `mu`, warm-started from the
    /// nearest solved neighbours.
    pub fn point(&mut self, mu: f64) -> Result<HyperplanePoint> {
        if let Some(p) = self.points.get(&mu.to_bits()) {
            return Ok(p.clone());
        }
        let key = mu.to_bits();
        let below = self.points.range(..key).next_back().map(|(_, p)| p.aux.clone());
        let above = self.points.range(key..).next().map(|(_, p)| p.aux.clone());
        let warm: Vec<&AuxChannel> = below.iter().chain(above.iter()).collect();
        let p = self.bottleneck.solve(mu, &self.opts.lagrangian, &warm)?;
        self.points.insert(key, p.clone());
        Ok(p)
    }

    fn ensure_grid(&mut self) -> Result<()> {
        let mut grid = self.opts.mu_grid.clone();
        grid.sort_by(f64::total_cmp);
        for mu in grid {
            self.point(mu)?;
        }
        Ok(())
    }

    pub fn theta(&mut self, capacity: f64) -> Result<ExponentResult> {
        if !(capacity >= 0.0) || !capacity.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "capacity must be finite and >= 0, got {capacity}"
            )));
        }
        self.ensure_grid()?;
        if self.opts.refine {
            self.refine(capacity)?;
        }
        let nu = self.source.n_rows();
        let limit_aux = AuxChannel::identity(nu)?;
        let grid_bits: Vec<u64> = self.opts.mu_grid.iter().map(|m| m.to_bits()).collect();
        let mut best = (0.0, self.i_uv, limit_aux);
        let mut trace = vec![(0.0, self.i_uv)];
        for (bits, p) in &self.points {
            // without refinement only the requested grid counts
            if !self.opts.refine && !grid_bits.contains(bits) {
                continue;
            }
            let val = p.theta_mu(capacity);
            trace.push((p.mu, val));
            if val < best.1 {
                best = (p.mu, val, p.aux.clone());
            }
        }
        Ok(ExponentResult {
            theta: best.1.max(0.0),
            best_mu: best.0,
            best_aux: best.2,
            mu_trace: trace,
            method: Method::Lagrangian,
        })
    }

    /// Samples of the convex map `mu -> theta_mu(C)` as
    /// `(mu, value, subgradient)`, including the `mu -> 0` limit.
    fn samples(&self, capacity: f64) -> Vec<(f64, f64, f64)> {
        let mut s = vec![(0.0, self.i_uv, capacity - self.h_sufficient)];
        s.extend(
            self.points
                .values()
                .map(|p| (p.mu, p.theta_mu(capacity), p.slope(capacity))),
        );
        s
    }

    /// Cutting-plane search between the grid neighbours of the minimum.
    /// Each step evaluates where the two bracketing supporting lines meet;
    /// the value there is a lower bound for the infimum on the bracket.
    fn refine(&mut self, capacity: f64) -> Result<()> {
        let samples = self.samples(capacity);
        let k = samples
            .iter()
            .enumerate()
            .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
            .map(|(i, _)| i)
            .expect("at least the limit sample");
        let slope = samples[k].2;
        let (mut a, mut b) = if slope > 0.0 && k > 0 {
            (samples[k - 1], samples[k])
        } else if slope < 0.0 && k + 1 < samples.len() {
            (samples[k], samples[k + 1])
        } else {
            return Ok(());
        };
        let mut last_side = 0i8;
        let mut same_side_run = 0;
        for _ in 0..self.opts.refine_max_evals {
            let (sa, sb) = (a.2, b.2);
            if !(sa < 0.0 && sb > 0.0) {
                break;
            }
            let width = b.0 - a.0;
            let mut x = (b.1 - a.1 + sa * a.0 - sb * b.0) / (sa - sb);
            let lower = a.1 + sa * (x - a.0);
            let upper = a.1.min(b.1);
            if upper - lower <= self.opts.refine_tol || width <= 1e-12 * b.0 {
                break;
            }
            if same_side_run >= 2 || !(x > a.0 && x < b.0) {
                x = 0.5 * (a.0 + b.0);
                same_side_run = 0;
            }
            if x <= 0.0 {
                break;
            }
            let p = self.point(x)?;
            let s = (x, p.theta_mu(capacity), p.slope(capacity));
            let side = if s.2 < 0.0 {
                a = s;
                -1
            } else if s.2 > 0.0 {
                b = s;
                1
            } else {
                break;
            };
            same_side_run = if side == last_side { same_side_run + 1 } else { 0 };
            last_side = side;
        }
        Ok(())
    }
}

/// Entropy of the coarsest function of `U` that keeps `P(v|u)`.
fn sufficient_statistic_entropy(source: &JointPmf) -> f64 {
    let (nu, nv) = (source.n_rows(), source.n_cols());
    let p_u = source.row_marginal();
    let mut classes: Vec<(Vec<f64>, f64)> = Vec::new();
    for u in 0..nu {
        let pu = p_u.get(u);
        if pu <= 0.0 {
            continue;
        }
        let row: Vec<f64> = (0..nv).map(|v| source.get(u, v) / pu).collect();
        match classes
            .iter_mut()
            .find(|(r, _)| r.iter().zip(&row).all(|(a, b)| (a - b).abs() <= 1e-12))
        {
            Some(c) => c.1 += pu,
            None => classes.push((row, pu)),
        }
    }
    let masses: Vec<f64> = classes.iter().map(|c| c.1).collect();
    entropy_of(&masses)
}

/// `theta(P_UV, C)` as the minimum of `theta_mu` over `mu_grid` (refined
/// around the grid minimum).
pub fn theta(
    source: &JointPmf,
    capacity: f64,
    mu_grid: &[f64],
    restarts: usize,
    seed: u64,
) -> Result<ExponentResult> {
    let opts = ThetaOptions {
        mu_grid: mu_grid.to_vec(),
        ..Default::default()
    }
    .with_restarts(restarts, seed);
    ExponentSolver::new(source, opts)?.theta(capacity)
}

pub fn theta_with(source: &JointPmf, capacity: f64, opts: &ThetaOptions) -> Result<ExponentResult> {
    ExponentSolver::new(source, opts.clone())?.theta(capacity)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionPoint {
    pub capacity: f64,
    pub theta: f64,
    pub best_mu: f64,
}

/// A running-max adjustment applied to keep the curve monotone.
#[derive(Debug, Clone, PartialEq)]
pub struct Correction {
    pub index: usize,
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TradeoffRegion {
    pub points: Vec<RegionPoint>,
    pub corrections: Vec<Correction>,
}

/// Concavity violations above this are reported as warnings.
pub const CONCAVITY_WARN: f64 = 1e-3;

pub fn region(
    source: &JointPmf,
    capacity_grid: &[f64],
    opts: &ThetaOptions,
) -> Result<TradeoffRegion> {
    if capacity_grid.iter().any(|c| !(*c >= 0.0) || !c.is_finite()) {
        return Err(Error::InvalidParameter("capacities must be finite and >= 0".into()));
    }
    if capacity_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidParameter("capacity grid must be ascending".into()));
    }
    let mut solver = ExponentSolver::new(source, opts.clone())?;
    let mut points = Vec::with_capacity(capacity_grid.len());
    let mut corrections = Vec::new();
    let mut running = 0.0f64;
    for (index, &c) in capacity_grid.iter().enumerate() {
        let r = solver.theta(c)?;
        let mut theta = r.theta;
        if theta < running {
            let magnitude = running - theta;
            if magnitude > CONCAVITY_WARN {
                log::warn!("region: theta at C={c} raised by {magnitude:.3e} to stay monotone");
            } else {
                log::debug!("region: theta at C={c} raised by {magnitude:.3e}");
            }
            corrections.push(Correction { index, magnitude });
            theta = running;
        }
        running = theta;
        points.push(RegionPoint {
            capacity: c,
            theta,
            best_mu: r.best_mu,
        });
    }
    check_concavity(&points);
    Ok(TradeoffRegion {
        points,
        corrections,
    })
}

fn check_concavity(points: &[RegionPoint]) {
    for w in points.windows(3) {
        let (a, b, c) = (&w[0], &w[1], &w[2]);
        let span = c.capacity - a.capacity;
        if span <= 0.0 {
            continue;
        }
        let t = (b.capacity - a.capacity) / span;
        let chord = a.theta + t * (c.theta - a.theta);
        if chord - b.theta > CONCAVITY_WARN {
            log::warn!(
                "region: concavity violated at C={} by {:.3e}",
                b.capacity,
                chord - b.theta
            );
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probcore::{dsbs, entropy, product, Pmf};

    const LN2: f64 = std::f64::consts::LN_2;

    fn h(p: f64) -> f64 {
        if p <= 0.0 || p >= 1.0 {
            0.0
        } else {
            -p * p.ln() - (1.0 - p) * (1.0 - p).ln()
        }
    }

    fn h_inv(y: f64) -> f64 {
        let (mut lo, mut hi) = (0.0, 0.5);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if h(mid) < y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Mrs. Gerber closed form for a doubly symmetric binary source.
    fn gerber(p: f64, c: f64) -> f64 {
        let a = h_inv((LN2 - c).max(0.0));
        LN2 - h(p * (1.0 - a) + a * (1.0 - p))
    }

    fn quick() -> ThetaOptions {
        ThetaOptions::default().with_restarts(8, 11)
    }

    #[test]
    fn zero_capacity_gives_zero() {
        let r = theta_with(&dsbs(0.1).unwrap(), 0.0, &quick()).unwrap();
        assert!(r.theta <= 1e-9, "{}", r.theta);
    }

    #[test]
    fn large_capacity_gives_mutual_information() {
        let src = dsbs(0.1).unwrap();
        let r = theta_with(&src, 2.0, &quick()).unwrap();
        assert!((r.theta - mutual_information(&src)).abs() < 1e-9);
        let src = JointPmf::new(3, 2, vec![0.3, 0.05, 0.1, 0.2, 0.05, 0.3]).unwrap();
        let hu = entropy(&src.row_marginal());
        let r = theta_with(&src, hu + 0.01, &quick()).unwrap();
        assert!((r.theta - mutual_information(&src)).abs() < 1e-6);
    }

    #[test]
    fn dsbs_matches_gerber_closed_form() {
        let src = dsbs(0.1).unwrap();
        let c = 0.5 * LN2;
        let r = theta_with(&src, c, &quick()).unwrap();
        let expected = gerber(0.1, c);
        assert!((r.theta - expected).abs() < 2e-3, "{} vs {expected}", r.theta);
        assert!(r.mu_trace.iter().all(|(_, v)| *v >= r.theta - 1e-9));
    }

    #[test]
    fn product_source_is_zero() {
        let src = product(
            &Pmf::new(vec![0.2, 0.8]).unwrap(),
            &Pmf::new(vec![0.6, 0.4]).unwrap(),
        );
        let r = theta_with(&src, 0.7, &quick()).unwrap();
        assert!(r.theta <= 1e-12);
    }

    #[test]
    fn identical_source_saturates_at_capacity() {
        // V = U: theta(C) = min(C, H(U)); the minimizing mu is 1
        let src = JointPmf::new(2, 2, vec![0.5, 0.0, 0.0, 0.5]).unwrap();
        let r = theta_with(&src, 0.3, &quick()).unwrap();
        assert!((r.theta - 0.3).abs() < 1e-6, "{}", r.theta);
    }

    #[test]
    fn grid_only_is_an_upper_bound() {
        let src = dsbs(0.2).unwrap();
        let mut opts = quick();
        opts.refine = false;
        let coarse = theta_with(&src, 0.3, &opts).unwrap();
        let fine = theta_with(&src, 0.3, &quick()).unwrap();
        assert!(fine.theta <= coarse.theta + 1e-12);
        assert_eq!(coarse.mu_trace.len(), 41);
    }

    #[test]
    fn rejects_bad_grids() {
        let src = dsbs(0.1).unwrap();
        assert!(theta(&src, 0.3, &[], 4, 0).is_err());
        assert!(theta(&src, 0.3, &[1.0, -1.0], 4, 0).is_err());
        assert!(theta(&src, -1.0, &[1.0], 4, 0).is_err());
    }

    #[test]
    fn region_examples() {
        let src = dsbs(0.1).unwrap();
        let r = region(&src, &[0.0], &quick()).unwrap();
        assert_eq!(r.points.len(), 1);
        assert!(r.points[0].theta <= 1e-9);

        let grid: Vec<f64> = (0..=10).map(|i| LN2 * i as f64 / 10.0).collect();
        let r = region(&src, &grid, &quick()).unwrap();
        for p in &r.points {
            assert!((p.theta - gerber(0.1, p.capacity)).abs() < 2e-2);
        }
        assert!(r.points.windows(2).all(|w| w[1].theta >= w[0].theta));
        let last = r.points.last().unwrap();
        assert!((last.theta - mutual_information(&src)).abs() < 1e-6);

        assert!(region(&src, &[0.5, 0.1], &quick()).is_err());
    }

    #[test]
    fn aux_channel_cardinality() {
        assert!(AuxChannel::new(CondPmf::identity(2).unwrap()).is_err());
        let id = AuxChannel::identity(3).unwrap();
        assert_eq!(id.cond().n_outputs(), 4);
    }

    #[test]
    fn sufficient_statistic_merges_identical_rows() {
        let src = JointPmf::new(3, 2, vec![0.1, 0.1, 0.2, 0.2, 0.3, 0.1]).unwrap();
        // u=0 and u=1 share P(v|u) = (1/2, 1/2)
        let expected = entropy_of(&[0.6, 0.4]);
        assert!((sufficient_statistic_entropy(&src) - expected).abs() < 1e-15);
    }
}
