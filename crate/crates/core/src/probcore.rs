//! Finite-alphabet probability objects and information measures.
//!
//! Every quantity is in nats. Zero-probability symbols stay in their
//! alphabets; `0 ln 0` is taken as 0 and a divergence whose first argument
//! puts mass outside the support of the second is `f64::INFINITY`.

use crate::error::{Error, Result};

/// Absolute tolerance on probability sums.
pub const SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alphabet {
    size: usize,
    labels: Option<Vec<String>>,
}

impl Alphabet {
    pub fn new(size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::InvalidParameter("alphabet size must be >= 1".into()));
        }
        Ok(Self { size, labels: None })
    }

    pub fn with_labels(labels: Vec<String>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidParameter("alphabet size must be >= 1".into()));
        }
        let mut sorted = labels.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != labels.len() {
            return Err(Error::InvalidParameter("alphabet labels must be unique".into()));
        }
        Ok(Self {
            size: labels.len(),
            labels: Some(labels),
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Display label for symbol `i`, falling back to its index.
    pub fn label(&self, i: usize) -> String {
        match &self.labels {
            Some(l) => l[i].clone(),
            None => i.to_string(),
        }
    }
}

fn validate_probs(probs: &[f64], what: &str) -> Result<()> {
    if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
        return Err(Error::InvalidDistribution(format!(
            "{what} has invalid entry {p}"
        )));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > SUM_TOL {
        return Err(Error::InvalidDistribution(format!(
            "{what} sums to {sum}, expected 1"
        )));
    }
    Ok(())
}

fn normalize(weights: &[f64], what: &str) -> Result<Vec<f64>> {
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidDistribution(format!(
            "{what}: weights must be finite and non-negative"
        )));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidDistribution(format!("{what}: zero total weight")));
    }
    Ok(weights.iter().map(|w| w / total).collect())
}

/// Shared view used by divergences that accept any distribution shape.
pub trait ProbVector {
    fn probs(&self) -> &[f64];
    fn shape(&self) -> Vec<usize>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pmf {
    alphabet: Alphabet,
    probs: Vec<f64>,
}

impl Pmf {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        let alphabet = Alphabet::new(probs.len())?;
        Self::with_alphabet(alphabet, probs)
    }

    pub fn with_alphabet(alphabet: Alphabet, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != alphabet.size() {
            return Err(Error::ShapeMismatch(format!(
                "pmf has {} entries for alphabet of size {}",
                probs.len(),
                alphabet.size()
            )));
        }
        validate_probs(&probs, "pmf")?;
        Ok(Self { alphabet, probs })
    }

    /// Builds a pmf from non-negative weights by explicit renormalization.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        Self::new(normalize(weights, "pmf")?)
    }

    pub fn uniform(size: usize) -> Result<Self> {
        Self::new(vec![1.0 / size.max(1) as f64; size])
    }

    pub fn point_mass(size: usize, at: usize) -> Result<Self> {
        if at >= size {
            return Err(Error::InvalidParameter(format!(
                "point mass at {at} outside alphabet of size {size}"
            )));
        }
        let mut probs = vec![0.0; size];
        probs[at] = 1.0;
        Self::new(probs)
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.probs[i]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }
}

impl ProbVector for Pmf {
    fn probs(&self) -> &[f64] {
        &self.probs
    }
    fn shape(&self) -> Vec<usize> {
        vec![self.probs.len()]
    }
}

/// Joint distribution over `rows x cols`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPmf {
    rows: Alphabet,
    cols: Alphabet,
    probs: Vec<f64>,
}

impl JointPmf {
    pub fn new(rows: usize, cols: usize, probs: Vec<f64>) -> Result<Self> {
        Self::with_alphabets(Alphabet::new(rows)?, Alphabet::new(cols)?, probs)
    }

    pub fn with_alphabets(rows: Alphabet, cols: Alphabet, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != rows.size() * cols.size() {
            return Err(Error::ShapeMismatch(format!(
                "joint has {} entries, expected {}x{}",
                probs.len(),
                rows.size(),
                cols.size()
            )));
        }
        validate_probs(&probs, "joint pmf")?;
        Ok(Self { rows, cols, probs })
    }

    pub fn from_matrix(matrix: &[Vec<f64>]) -> Result<Self> {
        let rows = matrix.len();
        let cols = matrix.first().map_or(0, |r| r.len());
        if matrix.iter().any(|r| r.len() != cols) {
            return Err(Error::ShapeMismatch("ragged joint matrix".into()));
        }
        Self::new(rows, cols, matrix.concat())
    }

    pub fn from_weights(rows: usize, cols: usize, weights: &[f64]) -> Result<Self> {
        Self::new(rows, cols, normalize(weights, "joint pmf")?)
    }

    pub fn row_alphabet(&self) -> &Alphabet {
        &self.rows
    }

    pub fn col_alphabet(&self) -> &Alphabet {
        &self.cols
    }

    pub fn n_rows(&self) -> usize {
        self.rows.size()
    }

    pub fn n_cols(&self) -> usize {
        self.cols.size()
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.probs[r * self.cols.size() + c]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    pub fn row_marginal(&self) -> Pmf {
        let c = self.n_cols();
        let probs = self.probs.chunks(c).map(|r| r.iter().sum()).collect();
        Pmf {
            alphabet: self.rows.clone(),
            probs,
        }
    }

    pub fn col_marginal(&self) -> Pmf {
        let c = self.n_cols();
        let mut probs = vec![0.0; c];
        for row in self.probs.chunks(c) {
            for (acc, p) in probs.iter_mut().zip(row) {
                *acc += p;
            }
        }
        Pmf {
            alphabet: self.cols.clone(),
            probs,
        }
    }

    /// Both marginals, rows first.
    pub fn marginals(&self) -> (Pmf, Pmf) {
        (self.row_marginal(), self.col_marginal())
    }

    /// Conditional law of the column symbol given row symbol `r`.
    pub fn condition_on_row(&self, r: usize) -> Result<Pmf> {
        let c = self.n_cols();
        let row = &self.probs[r * c..(r + 1) * c];
        let mass: f64 = row.iter().sum();
        if mass <= 0.0 {
            return Err(Error::ZeroProbability(r));
        }
        Ok(Pmf {
            alphabet: self.cols.clone(),
            probs: row.iter().map(|p| p / mass).collect(),
        })
    }

    /// Conditional law of the row symbol given column symbol `c`.
    pub fn condition_on_col(&self, c: usize) -> Result<Pmf> {
        self.transpose().condition_on_row(c)
    }

    /// The conditional `P(col | row)`; rows of zero mass become uniform.
    pub fn col_given_row(&self) -> CondPmf {
        let c = self.n_cols();
        let rows = self
            .probs
            .chunks(c)
            .flat_map(|row| {
                let mass: f64 = row.iter().sum();
                if mass > 0.0 {
                    row.iter().map(|p| p / mass).collect::<Vec<_>>()
                } else {
                    vec![1.0 / c as f64; c]
                }
            })
            .collect();
        CondPmf {
            input: self.rows.clone(),
            output: self.cols.clone(),
            rows,
        }
    }

    pub fn transpose(&self) -> JointPmf {
        let (r, c) = (self.n_rows(), self.n_cols());
        let mut probs = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                probs[j * r + i] = self.probs[i * c + j];
            }
        }
        JointPmf {
            rows: self.cols.clone(),
            cols: self.rows.clone(),
            probs,
        }
    }

    /// The product of this joint's own marginals (the independence alternate).
    pub fn independent_version(&self) -> JointPmf {
        let (p, q) = self.marginals();
        product(&p, &q)
    }
}

impl ProbVector for JointPmf {
    fn probs(&self) -> &[f64] {
        &self.probs
    }
    fn shape(&self) -> Vec<usize> {
        vec![self.n_rows(), self.n_cols()]
    }
}

/// Row-stochastic matrix: one output pmf per input symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct CondPmf {
    input: Alphabet,
    output: Alphabet,
    rows: Vec<f64>,
}

impl CondPmf {
    pub fn new(inputs: usize, outputs: usize, rows: Vec<f64>) -> Result<Self> {
        Self::with_alphabets(Alphabet::new(inputs)?, Alphabet::new(outputs)?, rows)
    }

    pub fn with_alphabets(input: Alphabet, output: Alphabet, rows: Vec<f64>) -> Result<Self> {
        let k = output.size();
        if rows.len() != input.size() * k {
            return Err(Error::ShapeMismatch(format!(
                "conditional has {} entries, expected {}x{}",
                rows.len(),
                input.size(),
                k
            )));
        }
        for (i, row) in rows.chunks(k).enumerate() {
            validate_probs(row, &format!("conditional row {i}"))?;
        }
        Ok(Self {
            input,
            output,
            rows,
        })
    }

    pub fn from_matrix(matrix: &[Vec<f64>]) -> Result<Self> {
        let inputs = matrix.len();
        let outputs = matrix.first().map_or(0, |r| r.len());
        if matrix.iter().any(|r| r.len() != outputs) {
            return Err(Error::ShapeMismatch("ragged conditional matrix".into()));
        }
        Self::new(inputs, outputs, matrix.concat())
    }

    /// Row-wise renormalization of non-negative weights.
    pub fn from_weights(inputs: usize, outputs: usize, weights: &[f64]) -> Result<Self> {
        if weights.len() != inputs * outputs {
            return Err(Error::ShapeMismatch("conditional weight count".into()));
        }
        let mut rows = Vec::with_capacity(weights.len());
        for row in weights.chunks(outputs) {
            rows.extend(normalize(row, "conditional row")?);
        }
        Self::new(inputs, outputs, rows)
    }

    pub fn identity(size: usize) -> Result<Self> {
        let mut rows = vec![0.0; size * size];
        for i in 0..size {
            rows[i * size + i] = 1.0;
        }
        Self::new(size, size, rows)
    }

    /// Every input maps to output symbol `to`.
    pub fn constant(inputs: usize, outputs: usize, to: usize) -> Result<Self> {
        if to >= outputs {
            return Err(Error::InvalidParameter("constant output out of range".into()));
        }
        let mut rows = vec![0.0; inputs * outputs];
        for i in 0..inputs {
            rows[i * outputs + to] = 1.0;
        }
        Self::new(inputs, outputs, rows)
    }

    pub fn input_alphabet(&self) -> &Alphabet {
        &self.input
    }

    pub fn output_alphabet(&self) -> &Alphabet {
        &self.output
    }

    pub fn n_inputs(&self) -> usize {
        self.input.size()
    }

    pub fn n_outputs(&self) -> usize {
        self.output.size()
    }

    pub fn get(&self, input: usize, output: usize) -> f64 {
        self.rows[input * self.output.size() + output]
    }

    pub fn row(&self, input: usize) -> &[f64] {
        let k = self.output.size();
        &self.rows[input * k..(input + 1) * k]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.rows
    }

    /// True when every row is a point mass.
    pub fn is_deterministic(&self) -> bool {
        self.rows.iter().all(|&p| p == 0.0 || p == 1.0)
    }

    /// Output law when the input is drawn from `input`.
    pub fn push_forward(&self, input: &Pmf) -> Result<Pmf> {
        if input.len() != self.n_inputs() {
            return Err(Error::AlphabetMismatch(
                "input pmf does not match channel input alphabet".into(),
            ));
        }
        let k = self.n_outputs();
        let mut out = vec![0.0; k];
        for (x, px) in input.as_slice().iter().enumerate() {
            for (acc, p) in out.iter_mut().zip(self.row(x)) {
                *acc += px * p;
            }
        }
        Ok(Pmf {
            alphabet: self.output.clone(),
            probs: out,
        })
    }

    /// The joint `input(x) P(y|x)`.
    pub fn joint_with(&self, input: &Pmf) -> Result<JointPmf> {
        if input.len() != self.n_inputs() {
            return Err(Error::AlphabetMismatch(
                "input pmf does not match channel input alphabet".into(),
            ));
        }
        let k = self.n_outputs();
        let mut probs = vec![0.0; self.rows.len()];
        for (x, px) in input.as_slice().iter().enumerate() {
            for y in 0..k {
                probs[x * k + y] = px * self.rows[x * k + y];
            }
        }
        Ok(JointPmf {
            rows: self.input.clone(),
            cols: self.output.clone(),
            probs,
        })
    }

    /// Cascade `self` then `next`.
    pub fn then(&self, next: &CondPmf) -> Result<CondPmf> {
        if self.n_outputs() != next.n_inputs() {
            return Err(Error::AlphabetMismatch("cascade alphabets differ".into()));
        }
        let (a, b, c) = (self.n_inputs(), self.n_outputs(), next.n_outputs());
        let mut rows = vec![0.0; a * c];
        for i in 0..a {
            for j in 0..b {
                let p = self.rows[i * b + j];
                if p == 0.0 {
                    continue;
                }
                for k in 0..c {
                    rows[i * c + k] += p * next.rows[j * c + k];
                }
            }
        }
        Ok(CondPmf {
            input: self.input.clone(),
            output: next.output.clone(),
            rows,
        })
    }
}

/// Joint distribution over three alphabets `(A, B, C)`, index
/// `(a * |B| + b) * |C| + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct Joint3 {
    sizes: [usize; 3],
    probs: Vec<f64>,
}

impl Joint3 {
    pub fn new(sizes: [usize; 3], probs: Vec<f64>) -> Result<Self> {
        if sizes.contains(&0) {
            return Err(Error::InvalidParameter("alphabet size must be >= 1".into()));
        }
        if probs.len() != sizes.iter().product::<usize>() {
            return Err(Error::ShapeMismatch(format!(
                "3-way joint has {} entries, expected {:?}",
                probs.len(),
                sizes
            )));
        }
        validate_probs(&probs, "3-way joint")?;
        Ok(Self { sizes, probs })
    }

    pub fn from_weights(sizes: [usize; 3], weights: &[f64]) -> Result<Self> {
        Self::new(sizes, normalize(weights, "3-way joint")?)
    }

    pub fn sizes(&self) -> [usize; 3] {
        self.sizes
    }

    pub fn get(&self, a: usize, b: usize, c: usize) -> f64 {
        self.probs[(a * self.sizes[1] + b) * self.sizes[2] + c]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    /// Reorders axes: new axis `k` is old axis `order[k]`.
    pub fn permute(&self, order: [usize; 3]) -> Result<Joint3> {
        let mut seen = [false; 3];
        for &o in &order {
            if o > 2 || seen[o] {
                return Err(Error::InvalidParameter(format!("bad axis order {order:?}")));
            }
            seen[o] = true;
        }
        let s = self.sizes;
        let new_sizes = [s[order[0]], s[order[1]], s[order[2]]];
        let mut probs = vec![0.0; self.probs.len()];
        for a in 0..s[0] {
            for b in 0..s[1] {
                for c in 0..s[2] {
                    let old = [a, b, c];
                    let idx = (old[order[0]] * new_sizes[1] + old[order[1]]) * new_sizes[2]
                        + old[order[2]];
                    probs[idx] = self.get(a, b, c);
                }
            }
        }
        Ok(Joint3 {
            sizes: new_sizes,
            probs,
        })
    }

    /// Marginal over two axes `(first, second)`.
    pub fn pair(&self, first: usize, second: usize) -> Result<JointPmf> {
        if first > 2 || second > 2 || first == second {
            return Err(Error::InvalidParameter("bad axis pair".into()));
        }
        let s = self.sizes;
        let mut probs = vec![0.0; s[first] * s[second]];
        for a in 0..s[0] {
            for b in 0..s[1] {
                for c in 0..s[2] {
                    let idx = [a, b, c];
                    probs[idx[first] * s[second] + idx[second]] += self.get(a, b, c);
                }
            }
        }
        Ok(JointPmf {
            rows: Alphabet::new(s[first])?,
            cols: Alphabet::new(s[second])?,
            probs,
        })
    }

    /// Joint of the grouped pair `(A, B)` against `C`.
    pub fn group_first_two(&self) -> JointPmf {
        let s = self.sizes;
        JointPmf {
            rows: Alphabet {
                size: s[0] * s[1],
                labels: None,
            },
            cols: Alphabet {
                size: s[2],
                labels: None,
            },
            probs: self.probs.clone(),
        }
    }
}

impl ProbVector for Joint3 {
    fn probs(&self) -> &[f64] {
        &self.probs
    }
    fn shape(&self) -> Vec<usize> {
        self.sizes.to_vec()
    }
}

#[inline]
pub(crate) fn xlnx(p: f64) -> f64 {
    if p > 0.0 {
        p * p.ln()
    } else {
        0.0
    }
}

/// Entropy of an unnormalized-safe probability slice (nats).
pub(crate) fn entropy_of(probs: &[f64]) -> f64 {
    (-probs.iter().copied().map(xlnx).sum::<f64>()).max(0.0)
}

/// Mutual information of a row-major `rows x cols` joint slice.
pub(crate) fn mutual_information_of(probs: &[f64], rows: usize, cols: usize) -> f64 {
    let mut pr = vec![0.0; rows];
    let mut pc = vec![0.0; cols];
    for r in 0..rows {
        for c in 0..cols {
            let p = probs[r * cols + c];
            pr[r] += p;
            pc[c] += p;
        }
    }
    let mut mi = 0.0;
    for r in 0..rows {
        for c in 0..cols {
            let p = probs[r * cols + c];
            if p > 0.0 {
                mi += p * (p / (pr[r] * pc[c])).ln();
            }
        }
    }
    mi.max(0.0)
}

pub(crate) fn kl_of(p: &[f64], q: &[f64]) -> f64 {
    let mut d = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        if a > 0.0 {
            if b <= 0.0 {
                return f64::INFINITY;
            }
            d += a * (a / b).ln();
        }
    }
    d.max(0.0)
}

/// Binary entropy in nats.
pub fn binary_entropy(p: f64) -> f64 {
    -(xlnx(p) + xlnx(1.0 - p))
}

pub fn entropy(p: &Pmf) -> f64 {
    entropy_of(p.as_slice())
}

pub fn mutual_information(j: &JointPmf) -> f64 {
    mutual_information_of(j.as_slice(), j.n_rows(), j.n_cols())
}

fn check_shapes<D: ProbVector>(p: &D, q: &D) -> Result<()> {
    if p.shape() != q.shape() {
        return Err(Error::ShapeMismatch(format!(
            "{:?} vs {:?}",
            p.shape(),
            q.shape()
        )));
    }
    Ok(())
}

/// `D(p || q)`, `+inf` when `p` is not absolutely continuous w.r.t. `q`.
pub fn kl_divergence<D: ProbVector>(p: &D, q: &D) -> Result<f64> {
    check_shapes(p, q)?;
    Ok(kl_of(p.probs(), q.probs()))
}

pub fn total_variation<D: ProbVector>(p: &D, q: &D) -> Result<f64> {
    check_shapes(p, q)?;
    let tv = 0.5
        * p.probs()
            .iter()
            .zip(q.probs())
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>();
    Ok(tv.clamp(0.0, 1.0))
}

/// `I(A; B | C)` for a joint over `(A, B, C)`.
pub fn conditional_mutual_information(j: &Joint3) -> f64 {
    let [na, nb, nc] = j.sizes();
    let mut p_c = vec![0.0; nc];
    let mut p_ac = vec![0.0; na * nc];
    let mut p_bc = vec![0.0; nb * nc];
    for a in 0..na {
        for b in 0..nb {
            for c in 0..nc {
                let p = j.get(a, b, c);
                p_c[c] += p;
                p_ac[a * nc + c] += p;
                p_bc[b * nc + c] += p;
            }
        }
    }
    let mut cmi = 0.0;
    for a in 0..na {
        for b in 0..nb {
            for c in 0..nc {
                let p = j.get(a, b, c);
                if p > 0.0 {
                    cmi += p * (p * p_c[c] / (p_ac[a * nc + c] * p_bc[b * nc + c])).ln();
                }
            }
        }
    }
    cmi.max(0.0)
}

/// `P(u, v, w) = P_UV(u, v) P_W|U(w | u)`, axes ordered `(U, V, W)`.
pub fn compose(source: &JointPmf, aux: &CondPmf) -> Result<Joint3> {
    if aux.n_inputs() != source.n_rows() {
        return Err(Error::AlphabetMismatch(format!(
            "auxiliary channel has {} inputs, source has {} rows",
            aux.n_inputs(),
            source.n_rows()
        )));
    }
    let (nu, nv, nw) = (source.n_rows(), source.n_cols(), aux.n_outputs());
    let mut probs = vec![0.0; nu * nv * nw];
    for u in 0..nu {
        for v in 0..nv {
            let puv = source.get(u, v);
            for w in 0..nw {
                probs[(u * nv + v) * nw + w] = puv * aux.get(u, w);
            }
        }
    }
    Ok(Joint3 {
        sizes: [nu, nv, nw],
        probs,
    })
}

/// Outer product `p(i) q(j)`.
pub fn product(p: &Pmf, q: &Pmf) -> JointPmf {
    let probs = p
        .as_slice()
        .iter()
        .flat_map(|a| q.as_slice().iter().map(move |b| a * b))
        .collect();
    JointPmf {
        rows: p.alphabet.clone(),
        cols: q.alphabet.clone(),
        probs,
    }
}

/// Symmetric binary channel with crossover `p`.
pub fn bsc(p: f64) -> Result<CondPmf> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!("crossover {p} outside [0,1]")));
    }
    CondPmf::new(2, 2, vec![1.0 - p, p, p, 1.0 - p])
}

/// Binary erasure channel; output symbol 2 is the erasure.
pub fn bec(e: f64) -> Result<CondPmf> {
    if !(0.0..=1.0).contains(&e) {
        return Err(Error::InvalidParameter(format!("erasure {e} outside [0,1]")));
    }
    CondPmf::new(2, 3, vec![1.0 - e, 0.0, e, 0.0, 1.0 - e, e])
}

/// Doubly symmetric binary source: uniform `U`, `V = U` flipped w.p. `p`.
pub fn dsbs(p: f64) -> Result<JointPmf> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!("crossover {p} outside [0,1]")));
    }
    JointPmf::new(2, 2, vec![0.5 * (1.0 - p), 0.5 * p, 0.5 * p, 0.5 * (1.0 - p)])
}
