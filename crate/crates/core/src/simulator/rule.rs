//! Detector decision rules `g_n(y^n, v^n)`; `true` decides the null.
//!
//! Threshold rules score a pair by its joint type: the score is
//! `sum_{(y,v)} N(y,v) s(y,v)` accumulated in the fixed cell order, so two
//! pairs with the same type always get bit-identical scores.

use rayon::prelude::*;

use crate::capacity::Dmc;
use crate::error::{Error, Result};
use crate::probcore::{CondPmf, JointPmf};
use crate::sequence::{SequenceSet, SequenceSpace};

/// Largest `|Y|^n |V|^n` for explicit rules and exact enumeration.
pub const MAX_PAIR_SPACE: usize = 1 << 26;

/// Largest number of joint types enumerated.
pub const MAX_TYPES: u128 = 10_000_000;

#[derive(Debug, Clone, PartialEq)]
pub enum DecisionRule {
    Threshold(ThresholdRule),
    Explicit(ExplicitRule),
}

impl DecisionRule {
    pub fn accept_all(ny: usize, nv: usize, n: usize) -> Result<Self> {
        Ok(Self::Threshold(ThresholdRule::new(ny, nv, n, vec![0.0; ny * nv], 0.0)?))
    }

    pub fn accept_none(ny: usize, nv: usize, n: usize) -> Result<Self> {
        Ok(Self::Threshold(ThresholdRule::new(
            ny,
            nv,
            n,
            vec![0.0; ny * nv],
            f64::INFINITY,
        )?))
    }

    pub fn n(&self) -> usize {
        match self {
            Self::Threshold(t) => t.n,
            Self::Explicit(e) => e.y_space.n(),
        }
    }

    pub fn ny(&self) -> usize {
        match self {
            Self::Threshold(t) => t.ny,
            Self::Explicit(e) => e.y_space.alphabet_size(),
        }
    }

    pub fn nv(&self) -> usize {
        match self {
            Self::Threshold(t) => t.nv,
            Self::Explicit(e) => e.v_space.alphabet_size(),
        }
    }

    /// `counts` is scratch space of length `|Y||V|`.
    pub fn accepts(&self, y: &[usize], v: &[usize], counts: &mut [u32]) -> bool {
        match self {
            Self::Threshold(t) => {
                counts.iter_mut().for_each(|c| *c = 0);
                for (&yi, &vi) in y.iter().zip(v) {
                    counts[yi * t.nv + vi] += 1;
                }
                t.accepts_type(counts)
            }
            Self::Explicit(e) => {
                let yi = index_of(y, e.y_space.alphabet_size());
                let vi = index_of(v, e.v_space.alphabet_size());
                e.regions[vi].contains(yi)
            }
        }
    }

    /// Explicit form, enumerating every `(y^n, v^n)`.
    pub fn materialize(&self) -> Result<ExplicitRule> {
        match self {
            Self::Explicit(e) => Ok(e.clone()),
            Self::Threshold(t) => t.materialize(),
        }
    }
}

fn index_of(digits: &[usize], q: usize) -> usize {
    digits.iter().rev().fold(0, |acc, &d| acc * q + d)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdRule {
    ny: usize,
    nv: usize,
    n: usize,
    /// Per-letter score, row-major `|Y| x |V|`.
    scores: Vec<f64>,
    threshold: f64,
}

impl ThresholdRule {
    pub fn new(ny: usize, nv: usize, n: usize, scores: Vec<f64>, threshold: f64) -> Result<Self> {
        if ny == 0 || nv == 0 || n == 0 {
            return Err(Error::InvalidParameter(
                "threshold rule needs non-empty alphabets and n >= 1".into(),
            ));
        }
        if scores.len() != ny * nv {
            return Err(Error::ShapeMismatch(format!(
                "{} scores for a {ny} x {nv} letter table",
                scores.len()
            )));
        }
        if scores.iter().any(|s| s.is_nan() || *s == f64::INFINITY) || threshold.is_nan() {
            return Err(Error::InvalidParameter("scores and threshold must not be NaN or +inf".into()));
        }
        Ok(Self {
            ny,
            nv,
            n,
            scores,
            threshold,
        })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn with_threshold(&self, threshold: f64) -> Result<Self> {
        Self::new(self.ny, self.nv, self.n, self.scores.clone(), threshold)
    }

    /// Score of a joint type given as cell counts.
    pub fn score(&self, counts: &[u32]) -> f64 {
        let mut acc = 0.0;
        for (&c, &s) in counts.iter().zip(&self.scores) {
            if c > 0 {
                acc += c as f64 * s;
            }
        }
        acc
    }

    pub fn accepts_type(&self, counts: &[u32]) -> bool {
        self.score(counts) >= self.threshold
    }

    fn materialize(&self) -> Result<ExplicitRule> {
        let y_space = SequenceSpace::new(self.ny, self.n)?;
        let v_space = SequenceSpace::new(self.nv, self.n)?;
        check_pair_space(&y_space, &v_space)?;
        let regions = (0..v_space.total())
            .into_par_iter()
            .map(|vi| {
                let v = v_space.digits(vi);
                let mut counts = vec![0u32; self.ny * self.nv];
                SequenceSet::from_predicate(y_space, |yi| {
                    counts.iter_mut().for_each(|c| *c = 0);
                    let mut rest = yi;
                    for &vk in &v {
                        counts[(rest % self.ny) * self.nv + vk] += 1;
                        rest /= self.ny;
                    }
                    self.accepts_type(&counts)
                })
            })
            .collect();
        ExplicitRule::new(y_space, v_space, regions)
    }
}

pub(crate) fn check_pair_space(y: &SequenceSpace, v: &SequenceSpace) -> Result<()> {
    let size = y.total() as u128 * v.total() as u128;
    if size > MAX_PAIR_SPACE as u128 {
        return Err(Error::TooLarge {
            what: "enumeration of (y^n, v^n) pairs",
            needed: size,
            limit: MAX_PAIR_SPACE as u128,
        });
    }
    Ok(())
}

/// Acceptance region `A(v^n)` for every `v^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplicitRule {
    y_space: SequenceSpace,
    v_space: SequenceSpace,
    regions: Vec<SequenceSet>,
}

impl ExplicitRule {
    pub fn new(y_space: SequenceSpace, v_space: SequenceSpace, regions: Vec<SequenceSet>) -> Result<Self> {
        if y_space.n() != v_space.n() {
            return Err(Error::ShapeMismatch("y and v blocklengths differ".into()));
        }
        check_pair_space(&y_space, &v_space)?;
        if regions.len() != v_space.total() {
            return Err(Error::ShapeMismatch(format!(
                "{} regions for {} v-sequences",
                regions.len(),
                v_space.total()
            )));
        }
        if regions.iter().any(|r| r.space() != y_space) {
            return Err(Error::ShapeMismatch("region outside the y-space".into()));
        }
        Ok(Self {
            y_space,
            v_space,
            regions,
        })
    }

    pub fn y_space(&self) -> SequenceSpace {
        self.y_space
    }

    pub fn v_space(&self) -> SequenceSpace {
        self.v_space
    }

    pub fn region(&self, v_index: usize) -> &SequenceSet {
        &self.regions[v_index]
    }

    pub fn regions(&self) -> &[SequenceSet] {
        &self.regions
    }

    pub fn map_regions(&self, f: impl Fn(&SequenceSet) -> SequenceSet + Sync + Send) -> Result<Self> {
        let regions = self.regions.par_iter().map(f).collect();
        Self::new(self.y_space, self.v_space, regions)
    }
}

/// Per-letter null law of `(Y, V)`: `sum_{u,x} P_UV(u,v) P_X|U(x|u) P_Y|X(y|x)`.
pub fn per_letter_null(source: &JointPmf, map: &CondPmf, dmc: &Dmc) -> Result<JointPmf> {
    let (nu, nv) = (source.n_rows(), source.n_cols());
    if map.n_inputs() != nu || map.n_outputs() != dmc.n_inputs() {
        return Err(Error::AlphabetMismatch(format!(
            "encoder maps {} -> {} symbols, source has {nu} and channel takes {}",
            map.n_inputs(),
            map.n_outputs(),
            dmc.n_inputs()
        )));
    }
    let uy = map.then(dmc.transition())?;
    let ny = uy.n_outputs();
    let mut yv = vec![0.0; ny * nv];
    for u in 0..nu {
        for v in 0..nv {
            let puv = source.get(u, v);
            if puv > 0.0 {
                for y in 0..ny {
                    yv[y * nv + v] += puv * uy.get(u, y);
                }
            }
        }
    }
    JointPmf::from_weights(ny, nv, &yv)
}

/// `ln(P_YV / (P_Y P_V))` per letter; cells with a zero marginal score 0
/// (they never occur under either hypothesis).
pub fn likelihood_scores(p_yv: &JointPmf) -> Vec<f64> {
    let (py, pv) = p_yv.marginals();
    let (ny, nv) = (p_yv.n_rows(), p_yv.n_cols());
    let mut s = vec![0.0; ny * nv];
    for y in 0..ny {
        for v in 0..nv {
            let m = py.get(y) * pv.get(v);
            if m > 0.0 {
                s[y * nv + v] = (p_yv.get(y, v) / m).ln();
            }
        }
    }
    s
}

/// Number of joint types of length-`n` sequences over `cells` letters.
pub fn type_count(n: usize, cells: usize) -> u128 {
    let (top, k) = ((n + cells - 1) as u128, (cells - 1) as u128);
    let k = k.min(top - k);
    (0..k).fold(1u128, |acc, i| acc * (top - i) / (i + 1))
}

/// Calls `f` on every vector of `cells` non-negative counts summing to `n`,
/// in lexicographic order.
pub fn for_each_type(n: usize, cells: usize, mut f: impl FnMut(&[u32])) -> Result<()> {
    let total = type_count(n, cells);
    if total > MAX_TYPES {
        return Err(Error::TooLarge {
            what: "joint-type enumeration",
            needed: total,
            limit: MAX_TYPES,
        });
    }
    let mut counts = vec![0u32; cells];
    fn rec(pos: usize, left: u32, counts: &mut [u32], f: &mut dyn FnMut(&[u32])) {
        if pos + 1 == counts.len() {
            counts[pos] = left;
            f(counts);
            return;
        }
        for c in 0..=left {
            counts[pos] = c;
            rec(pos + 1, left - c, counts, f);
        }
    }
    rec(0, n as u32, &mut counts, &mut f);
    Ok(())
}

/// `ln` of the probability that an i.i.d. sequence with letter law `probs`
/// has type `counts`; `-inf` if impossible.
pub(crate) fn type_log_prob(counts: &[u32], log_probs: &[f64], ln_fact: &[f64]) -> f64 {
    let n: u32 = counts.iter().sum();
    let mut acc = ln_fact[n as usize];
    for (&c, &lp) in counts.iter().zip(log_probs) {
        if c > 0 {
            if lp == f64::NEG_INFINITY {
                return f64::NEG_INFINITY;
            }
            acc += c as f64 * lp - ln_fact[c as usize];
        }
    }
    acc
}

pub(crate) fn ln_factorials(n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n + 1];
    for k in 1..=n {
        v[k] = v[k - 1] + (k as f64).ln();
    }
    v
}

/// Exact `(alpha, beta)` of a threshold rule when `(Y_i, V_i)` are i.i.d.
/// with letter law `null` under the null and `alt` under the alternative.
pub fn threshold_errors(rule: &ThresholdRule, null: &[f64], alt: &[f64]) -> Result<(f64, f64)> {
    let cells = rule.ny * rule.nv;
    if null.len() != cells || alt.len() != cells {
        return Err(Error::ShapeMismatch("letter laws do not match the rule".into()));
    }
    let ln_fact = ln_factorials(rule.n);
    let l0: Vec<f64> = null.iter().map(|p| p.ln()).collect();
    let l1: Vec<f64> = alt.iter().map(|p| p.ln()).collect();
    let (mut acc0, mut rej0, mut acc1, mut rej1) = (0.0, 0.0, 0.0, 0.0);
    for_each_type(rule.n, cells, |c| {
        let (p0, p1) = (type_log_prob(c, &l0, &ln_fact).exp(), type_log_prob(c, &l1, &ln_fact).exp());
        if rule.accepts_type(c) {
            acc0 += p0;
            acc1 += p1;
        } else {
            rej0 += p0;
            rej1 += p1;
        }
    })?;
    Ok(error_pair(acc0, rej0, acc1, rej1))
}

/// `(alpha, beta)` from accepted and rejected masses under each hypothesis,
/// summing whichever side is smaller so that trivial rules come out exact.
pub(crate) fn error_pair(acc0: f64, rej0: f64, acc1: f64, rej1: f64) -> (f64, f64) {
    let alpha = if rej0 <= acc0 { rej0 } else { 1.0 - acc0 };
    let beta = if acc1 <= rej1 { acc1 } else { 1.0 - rej1 };
    (alpha.clamp(0.0, 1.0), beta.clamp(0.0, 1.0))
}

/// The largest threshold whose exact type-I error does not exceed
/// `target_alpha`, with that error.
pub fn threshold_for_alpha(
    rule: &ThresholdRule,
    null: &[f64],
    alt: &[f64],
    target_alpha: f64,
) -> Result<(ThresholdRule, f64)> {
    if !(0.0..=1.0).contains(&target_alpha) {
        return Err(Error::InvalidParameter(format!(
            "target alpha must be in [0, 1], got {target_alpha}"
        )));
    }
    if target_alpha >= 1.0 {
        let r = rule.with_threshold(f64::INFINITY)?;
        let (a, _) = threshold_errors(&r, null, alt)?;
        return Ok((r, a));
    }
    let cells = rule.ny * rule.nv;
    if null.len() != cells {
        return Err(Error::ShapeMismatch("null letter law does not match the rule".into()));
    }
    let ln_fact = ln_factorials(rule.n);
    let l0: Vec<f64> = null.iter().map(|p| p.ln()).collect();
    let mut typed: Vec<(f64, f64)> = Vec::new();
    for_each_type(rule.n, cells, |c| {
        typed.push((rule.score(c), type_log_prob(c, &l0, &ln_fact).exp()));
    })?;
    typed.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut distinct: Vec<f64> = Vec::new();
    let mut group_mass: Vec<f64> = Vec::new();
    for &(score, p) in &typed {
        if distinct.last() != Some(&score) {
            distinct.push(score);
            group_mass.push(0.0);
        }
        *group_mass.last_mut().expect("non-empty") += p;
    }
    // rejected null mass when the threshold is distinct[j]
    let mut rejected = vec![0.0; distinct.len()];
    for j in (0..distinct.len().saturating_sub(1)).rev() {
        rejected[j] = rejected[j + 1] + group_mass[j + 1];
    }
    let start = rejected.iter().position(|&r| r <= target_alpha).unwrap_or(distinct.len() - 1);
    // recheck with the evaluation used everywhere else
    for &t in &distinct[start..] {
        let r = rule.with_threshold(t)?;
        let (a, _) = threshold_errors(&r, null, alt)?;
        if a <= target_alpha {
            return Ok((r, a));
        }
    }
    let r = rule.with_threshold(f64::NEG_INFINITY)?;
    Ok((r, 0.0))
}
