//! Capacity of a discrete memoryless channel.
//!
//! Alternating maximization in the log domain. Each iteration yields the
//! certified bounds
//!
//! ```text
//! I(p, W) = sum_x p(x) D(W(.|x) || pW)  <=  C  <=  max_x D(W(.|x) || pW)
//! ```
//!
//! and the loop stops once the two meet within the requested tolerance.

use crate::error::{Error, Result};
use crate::probcore::{binary_entropy, CondPmf, Pmf};

pub const DEFAULT_TOL: f64 = 1e-9;
pub const MAX_ITERATIONS: usize = 100_000;

/// A channel `P_Y|X` together with its smallest positive transition
/// probability.
#[derive(Debug, Clone, PartialEq)]
pub struct Dmc {
    transition: CondPmf,
    p_floor: f64,
}

impl Dmc {
    pub fn new(transition: CondPmf) -> Self {
        let p_floor = transition
            .as_slice()
            .iter()
            .copied()
            .filter(|&p| p > 0.0)
            .fold(f64::INFINITY, f64::min);
        // every row sums to one, so some entry is positive
        debug_assert!(p_floor > 0.0 && p_floor <= 1.0);
        Self {
            transition,
            p_floor,
        }
    }

    pub fn transition(&self) -> &CondPmf {
        &self.transition
    }

    pub fn p_floor(&self) -> f64 {
        self.p_floor
    }

    pub fn n_inputs(&self) -> usize {
        self.transition.n_inputs()
    }

    pub fn n_outputs(&self) -> usize {
        self.transition.n_outputs()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapacityResult {
    /// Lower bound at termination, nats.
    pub value: f64,
    pub input_dist: Pmf,
    pub iterations: usize,
    /// Upper minus lower bound at termination.
    pub gap: f64,
}

const MAX_STEP: f64 = 1024.0;

/// Fills `div[x] = D(W(.|x) || pW)` and returns `I(p, W) = sum_x p_x div[x]`.
fn evaluate(w: &CondPmf, p: &[f64], div: &mut [f64]) -> f64 {
    let ny = w.n_outputs();
    let mut q = vec![0.0; ny];
    for (x, &px) in p.iter().enumerate() {
        for (qy, wy) in q.iter_mut().zip(w.row(x)) {
            *qy += px * wy;
        }
    }
    for (x, dx) in div.iter_mut().enumerate() {
        let mut d = 0.0;
        for (y, &wy) in w.row(x).iter().enumerate() {
            if wy > 0.0 {
                // q[y] > 0 unless every input reaching y underflowed to zero
                d += wy * (wy / q[y].max(f64::MIN_POSITIVE)).ln();
            }
        }
        *dx = d.max(0.0);
    }
    p.iter().zip(div.iter()).map(|(a, b)| a * b).sum::<f64>().max(0.0)
}

fn normalize_log(log_p: &mut [f64], p: &mut [f64]) {
    let m = log_p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = log_p.iter().map(|lp| (lp - m).exp()).sum();
    let log_z = m + z.ln();
    for (pi, lp) in p.iter_mut().zip(log_p.iter_mut()) {
        *lp -= log_z;
        *pi = lp.exp();
    }
}

pub fn min_positive_transition(dmc: &Dmc) -> f64 {
    dmc.p_floor()
}

pub fn capacity(dmc: &Dmc, tol: f64) -> Result<CapacityResult> {
    capacity_traced(dmc, tol, |_, _| {})
}

/// Same as [`capacity`], reporting `(lower, upper)` after every iteration.
pub fn capacity_traced(
    dmc: &Dmc,
    tol: f64,
    mut observe: impl FnMut(f64, f64),
) -> Result<CapacityResult> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tol must be > 0, got {tol}")));
    }
    let w = dmc.transition();
    let nx = w.n_inputs();
    let mut log_p = vec![-(nx as f64).ln(); nx];
    let mut p = vec![1.0 / nx as f64; nx];
    let mut div = vec![0.0; nx];
    let mut lower = evaluate(w, &p, &mut div);
    // Step size of the multiplicative update; 1 is the classic iteration,
    // larger values are kept only while they increase the lower bound.
    let mut step = 1.0f64;
    let mut cand_log = vec![0.0; nx];
    let mut cand_p = vec![0.0; nx];
    let mut cand_div = vec![0.0; nx];

    for iteration in 1..=MAX_ITERATIONS {
        let upper = div.iter().copied().fold(0.0, f64::max);
        observe(lower, upper);
        let gap = upper - lower;
        if gap <= tol {
            return Ok(CapacityResult {
                value: lower,
                input_dist: Pmf::from_weights(&p)?,
                iterations: iteration,
                gap,
            });
        }
        loop {
            for x in 0..nx {
                cand_log[x] = log_p[x] + step * div[x];
            }
            normalize_log(&mut cand_log, &mut cand_p);
            let cand_lower = evaluate(w, &cand_p, &mut cand_div);
            if cand_lower >= lower || step == 1.0 {
                // the classic iteration never decreases I(p, W)
                debug_assert!(cand_lower >= lower - 1e-12, "lower bound decreased");
                std::mem::swap(&mut log_p, &mut cand_log);
                std::mem::swap(&mut p, &mut cand_p);
                std::mem::swap(&mut div, &mut cand_div);
                lower = cand_lower.max(lower);
                step = (step * 2.0).min(MAX_STEP);
                break;
            }
            step = (step / 4.0).max(1.0);
        }
    }
    Err(Error::NoConvergence(MAX_ITERATIONS))
}

/// Channel families with closed-form capacities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChannelFamily {
    Bsc(f64),
    Bec(f64),
}

impl ChannelFamily {
    pub fn channel(&self) -> Result<Dmc> {
        Ok(Dmc::new(match *self {
            ChannelFamily::Bsc(p) => crate::probcore::bsc(p)?,
            ChannelFamily::Bec(e) => crate::probcore::bec(e)?,
        }))
    }
}

pub fn closed_form_capacity(family: ChannelFamily) -> Result<f64> {
    let ln2 = std::f64::consts::LN_2;
    match family {
        ChannelFamily::Bsc(p) if (0.0..=1.0).contains(&p) => Ok(ln2 - binary_entropy(p)),
        ChannelFamily::Bec(e) if (0.0..=1.0).contains(&e) => Ok((1.0 - e) * ln2),
        other => Err(Error::InvalidParameter(format!(
            "channel parameter out of [0,1]: {other:?}"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probcore::{bec, bsc};
    use proptest::prelude::*;

    const LN2: f64 = std::f64::consts::LN_2;

    #[test]
    fn bsc_and_bec_examples() {
        let c = capacity(&Dmc::new(bsc(0.0).unwrap()), DEFAULT_TOL).unwrap();
        assert!((c.value - LN2).abs() < 1e-9);
        let c = capacity(&Dmc::new(bsc(0.5).unwrap()), DEFAULT_TOL).unwrap();
        assert!(c.value.abs() < 1e-9);
        let c = capacity(&Dmc::new(bsc(0.1).unwrap()), DEFAULT_TOL).unwrap();
        assert!((c.value - 0.368064).abs() < 1e-6);
        let c = capacity(&Dmc::new(bec(0.3).unwrap()), DEFAULT_TOL).unwrap();
        assert!((c.value - 0.485203).abs() < 1e-6);
        assert!(c.gap <= DEFAULT_TOL);
    }

    #[test]
    fn p_floor_examples() {
        assert_eq!(min_positive_transition(&Dmc::new(bsc(0.1).unwrap())), 0.1);
        assert_eq!(
            min_positive_transition(&Dmc::new(CondPmf::identity(3).unwrap())),
            1.0
        );
        let e = Dmc::new(bec(0.3).unwrap());
        assert!((min_positive_transition(&e) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn closed_forms() {
        assert!((closed_form_capacity(ChannelFamily::Bsc(0.0)).unwrap() - LN2).abs() < 1e-15);
        assert_eq!(closed_form_capacity(ChannelFamily::Bec(1.0)).unwrap(), 0.0);
        let c = closed_form_capacity(ChannelFamily::Bsc(0.2)).unwrap();
        assert!((c - 0.192745).abs() < 1e-6);
        assert!(closed_form_capacity(ChannelFamily::Bsc(1.5)).is_err());
        assert!(closed_form_capacity(ChannelFamily::Bec(-0.1)).is_err());
    }

    #[test]
    fn identical_rows_have_zero_capacity() {
        let w = CondPmf::new(3, 2, vec![0.3, 0.7, 0.3, 0.7, 0.3, 0.7]).unwrap();
        let c = capacity(&Dmc::new(w), DEFAULT_TOL).unwrap();
        assert!(c.value.abs() < 1e-12);
        assert_eq!(c.iterations, 1);
    }

    #[test]
    fn rejects_bad_tolerance() {
        let d = Dmc::new(bsc(0.1).unwrap());
        assert!(capacity(&d, 0.0).is_err());
        assert!(capacity(&d, f64::NAN).is_err());
    }

    #[test]
    fn lower_bound_is_monotone_on_asymmetric_channel() {
        let w = CondPmf::new(3, 3, vec![0.7, 0.2, 0.1, 0.05, 0.9, 0.05, 0.3, 0.3, 0.4]).unwrap();
        let mut lowers = Vec::new();
        let r = capacity_traced(&Dmc::new(w), 1e-10, |lo, hi| {
            assert!(lo <= hi + 1e-15);
            lowers.push(lo);
        })
        .unwrap();
        assert!(lowers.windows(2).all(|p| p[1] >= p[0] - 1e-15));
        assert!(r.gap <= 1e-10);
    }

    fn channel_strategy() -> impl Strategy<Value = CondPmf> {
        (1usize..5, 1usize..5).prop_flat_map(|(nx, ny)| {
            prop::collection::vec(0.0f64..1.0, nx * ny).prop_filter_map("rows", move |w| {
                CondPmf::from_weights(nx, ny, &w).ok()
            })
        })
    }

    proptest! {
        #[test]
        fn within_alphabet_limits(w in channel_strategy()) {
            let lim = (w.n_inputs().min(w.n_outputs()) as f64).ln();
            let c = capacity(&Dmc::new(w), 1e-9).unwrap();
            prop_assert!(c.value >= 0.0);
            prop_assert!(c.value <= lim + 1e-12);
        }

        #[test]
        fn permutation_invariant(w in channel_strategy(), rot in 0usize..4) {
            let (nx, ny) = (w.n_inputs(), w.n_outputs());
            let mut rows = vec![0.0; nx * ny];
            for x in 0..nx {
                for y in 0..ny {
                    rows[((x + rot) % nx) * ny + (ny - 1 - y)] = w.get(x, y);
                }
            }
            let permuted = CondPmf::new(nx, ny, rows).unwrap();
            let a = capacity(&Dmc::new(w), 1e-10).unwrap();
            let b = capacity(&Dmc::new(permuted), 1e-10).unwrap();
            prop_assert!((a.value - b.value).abs() < 1e-9);
        }
    }
}
