//! Hamming neighbourhoods, the non-asymptotic blowing-up bound, and the
//! blow-up parameters used to enlarge decision regions.

use crate::error::{Error, Result};
use crate::probcore::Pmf;
use crate::sequence::{SequenceSet, SequenceSpace};

/// `Gamma^l(s)`: every sequence within Hamming distance `l` of `s`.
pub fn hamming_neighborhood(s: &SequenceSet, l: usize) -> SequenceSet {
    let mut cur = s.clone();
    for _ in 0..l {
        if cur.is_full() || cur.is_empty() {
            break;
        }
        let next = cur.expand_once();
        if next == cur {
            break;
        }
        cur = next;
    }
    cur
}

/// Lower bound on `P(Gamma^l(D))` for a product measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LemmaBound {
    pub value: f64,
    /// `l` does not exceed `sqrt((n/2) ln(1/P(D)))`; `value` is then 0.
    pub vacuous: bool,
}

pub fn lemma_threshold(prob_d: f64, n: usize) -> f64 {
    (n as f64 / 2.0 * (1.0 / prob_d).ln()).max(0.0).sqrt()
}

pub fn blowing_up_bound(prob_d: f64, n: usize, l: usize) -> Result<LemmaBound> {
    if !(prob_d > 0.0 && prob_d <= 1.0 + 1e-12) {
        return Err(Error::InvalidParameter(format!(
            "set probability must be in (0, 1], got {prob_d}"
        )));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("n must be >= 1".into()));
    }
    let t = lemma_threshold(prob_d.min(1.0), n);
    let l = l as f64;
    if l <= t {
        return Ok(LemmaBound {
            value: 0.0,
            vacuous: true,
        });
    }
    let v = 1.0 - (-(2.0 / n as f64) * (l - t).powi(2)).exp();
    Ok(LemmaBound {
        value: v.clamp(0.0, 1.0),
        vacuous: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlowupParams {
    pub n: usize,
    pub epsilon: f64,
    pub b_of_n: f64,
    pub l_n: usize,
    pub eps_prime: f64,
}

pub fn default_b(n: usize) -> f64 {
    (n as f64).ln()
}

pub fn compute_l_n(n: usize, epsilon: f64, b_of_n: f64) -> Result<BlowupParams> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must be in (0, 1), got {epsilon}"
        )));
    }
    if !(b_of_n >= 0.0 && b_of_n.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "b(n) must be finite and >= 0, got {b_of_n}"
        )));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("n must be >= 1".into()));
    }
    let nf = n as f64;
    let ratio = ((1.0 + epsilon) / (1.0 - epsilon)).ln();
    let raw = ((nf * b_of_n).sqrt() + (nf * ratio).sqrt()) / std::f64::consts::SQRT_2;
    Ok(BlowupParams {
        n,
        epsilon,
        b_of_n,
        l_n: raw.ceil() as usize,
        eps_prime: 1.0 - (-b_of_n).exp(),
    })
}

/// `ln( (|Y| n e)^l (p l)^{-l} )`, the slack between the type-II error of a
/// blown-up rule and the original one.
pub fn penalty_factor_log(n: usize, l_n: usize, y_size: usize, p_floor: f64) -> Result<f64> {
    if l_n == 0 {
        return Ok(0.0);
    }
    if !(p_floor > 0.0 && p_floor <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "p_floor must be in (0, 1], got {p_floor}"
        )));
    }
    if n == 0 || y_size == 0 {
        return Err(Error::InvalidParameter("n and |Y| must be >= 1".into()));
    }
    let l = l_n as f64;
    Ok(l * (((y_size * n) as f64).ln() + 1.0 - (p_floor * l).ln()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlowupCheck {
    pub l: usize,
    pub prob_d: f64,
    pub exact: f64,
    pub bound: LemmaBound,
}

impl BlowupCheck {
    pub fn holds(&self) -> bool {
        self.exact + 1e-12 >= self.bound.value
    }
}

/// Exact `P(Gamma^l(s))` under the i.i.d. law `pmf`, next to the lemma bound.
pub fn verify_blowup_exact(pmf: &Pmf, n: usize, s: &SequenceSet, l: usize) -> Result<BlowupCheck> {
    let space = check_space(pmf, n, s)?;
    let weights = space.product_weights(pmf)?;
    let prob_d = s.measure(&weights);
    let exact = hamming_neighborhood(s, l).measure(&weights);
    Ok(BlowupCheck {
        l,
        prob_d,
        exact,
        bound: lemma_row(prob_d, n, l)?,
    })
}

/// [`verify_blowup_exact`] for every `l` in `0..=l_max`, expanding
/// incrementally.
pub fn blowup_sweep(pmf: &Pmf, n: usize, s: &SequenceSet, l_max: usize) -> Result<Vec<BlowupCheck>> {
    let space = check_space(pmf, n, s)?;
    let weights = space.product_weights(pmf)?;
    let prob_d = s.measure(&weights);
    let mut cur = s.clone();
    let mut out = Vec::with_capacity(l_max + 1);
    for l in 0..=l_max {
        if l > 0 && !cur.is_full() {
            cur = cur.expand_once();
        }
        out.push(BlowupCheck {
            l,
            prob_d,
            exact: cur.measure(&weights),
            bound: lemma_row(prob_d, n, l)?,
        });
    }
    Ok(out)
}

fn lemma_row(prob_d: f64, n: usize, l: usize) -> Result<LemmaBound> {
    if prob_d <= 0.0 {
        // empty set: nothing to blow up, the lemma says nothing
        return Ok(LemmaBound {
            value: 0.0,
            vacuous: true,
        });
    }
    blowing_up_bound(prob_d, n, l)
}

fn check_space(pmf: &Pmf, n: usize, s: &SequenceSet) -> Result<SequenceSpace> {
    let space = s.space();
    if space.n() != n || space.alphabet_size() != pmf.len() {
        return Err(Error::AlphabetMismatch(format!(
            "set lives in a length-{} space over {} symbols, expected length {n} over {}",
            space.n(),
            space.alphabet_size(),
            pmf.len()
        )));
    }
    Ok(space)
}
