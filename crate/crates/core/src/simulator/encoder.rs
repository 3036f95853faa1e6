//! Sensor-side encoders mapping `u^n` to channel inputs `x^n`.

use crate::error::{Error, Result};
use crate::exponent::AuxChannel;
use crate::probcore::{compose, CondPmf, JointPmf, Pmf};
use crate::rng::{derive_stream, Categorical, StreamRng};

/// Largest codebook that may be drawn.
pub const MAX_CODEWORDS: usize = 1 << 16;

const CODEBOOK_STREAM: u64 = 0xC0DE_0003;

#[derive(Debug, Clone, PartialEq)]
pub enum EncoderKind {
    /// The same per-letter map `P_X|U` applied to every coordinate.
    Symbolwise(CondPmf),
    Codebook(Codebook),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    kind: EncoderKind,
    n: usize,
}

impl Encoder {
    pub fn symbolwise(map: CondPmf, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("blocklength must be >= 1".into()));
        }
        Ok(Self {
            kind: EncoderKind::Symbolwise(map),
            n,
        })
    }

    pub fn codebook(book: Codebook) -> Self {
        let n = book.n;
        Self {
            kind: EncoderKind::Codebook(book),
            n,
        }
    }

    pub fn kind(&self) -> &EncoderKind {
        &self.kind
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_inputs(&self) -> usize {
        match &self.kind {
            EncoderKind::Symbolwise(m) => m.n_inputs(),
            EncoderKind::Codebook(b) => b.nu,
        }
    }

    pub fn n_outputs(&self) -> usize {
        match &self.kind {
            EncoderKind::Symbolwise(m) => m.n_outputs(),
            EncoderKind::Codebook(b) => b.nx,
        }
    }

    /// The per-letter map, if this encoder has one.
    pub fn symbol_map(&self) -> Option<&CondPmf> {
        match &self.kind {
            EncoderKind::Symbolwise(m) => Some(m),
            EncoderKind::Codebook(_) => None,
        }
    }

    /// `x = f(u)` per letter, when the map is deterministic and symbolwise.
    pub fn deterministic_map(&self) -> Option<Vec<usize>> {
        let m = self.symbol_map()?;
        if !m.is_deterministic() {
            return None;
        }
        Some(
            (0..m.n_inputs())
                .map(|u| m.row(u).iter().position(|&p| p == 1.0).expect("deterministic row"))
                .collect(),
        )
    }

    /// Writes the channel input for `u` into `x`, consuming one uniform per
    /// letter from `draws` for symbolwise maps.
    pub(crate) fn encode(&self, u: &[usize], draws: &[f64], samplers: &[Categorical], x: &mut [usize]) {
        match &self.kind {
            EncoderKind::Symbolwise(_) => {
                for i in 0..u.len() {
                    x[i] = samplers[u[i]].sample_with(draws[i]);
                }
            }
            EncoderKind::Codebook(b) => {
                let idx = b.nearest(u);
                x.copy_from_slice(&b.inputs[idx]);
            }
        }
    }

    pub(crate) fn samplers(&self) -> Vec<Categorical> {
        match &self.kind {
            EncoderKind::Symbolwise(m) => (0..m.n_inputs()).map(|u| Categorical::new(m.row(u))).collect(),
            EncoderKind::Codebook(_) => Vec::new(),
        }
    }
}

/// Quantize `u^n` to the nearest of `M` codewords drawn i.i.d. from `P_W`,
/// then send the input sequence attached to that codeword.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    n: usize,
    nu: usize,
    nx: usize,
    nw: usize,
    seed: u64,
    codewords: Vec<Vec<usize>>,
    inputs: Vec<Vec<usize>>,
    /// `-ln P_U|W(u|w)`, row-major `nw x nu`.
    cost: Vec<f64>,
}

impl Codebook {
    /// `size` codewords of length `n`; `input_dist` is the law of the
    /// attached channel inputs (normally capacity achieving).
    pub fn new(
        source: &JointPmf,
        aux: &AuxChannel,
        input_dist: &Pmf,
        n: usize,
        size: usize,
        seed: u64,
    ) -> Result<Self> {
        if n == 0 || size == 0 {
            return Err(Error::InvalidParameter(
                "codebook needs n >= 1 and at least one codeword".into(),
            ));
        }
        if size > MAX_CODEWORDS {
            return Err(Error::TooLarge {
                what: "codebook",
                needed: size as u128,
                limit: MAX_CODEWORDS as u128,
            });
        }
        let joint = compose(source, aux.cond())?;
        let uw = joint.pair(0, 2)?;
        let p_w = uw.col_marginal();
        let (nu, nw, nx) = (uw.n_rows(), uw.n_cols(), input_dist.len());
        let mut cost = vec![f64::INFINITY; nw * nu];
        for w in 0..nw {
            if p_w.get(w) > 0.0 {
                for u in 0..nu {
                    let p = uw.get(u, w) / p_w.get(w);
                    if p > 0.0 {
                        cost[w * nu + u] = -p.ln();
                    }
                }
            }
        }
        let w_sampler = Categorical::new(p_w.as_slice());
        let x_sampler = Categorical::new(input_dist.as_slice());
        let draw = |stream: u64, sampler: &Categorical| -> Vec<Vec<usize>> {
            let mut rng = StreamRng::new(seed, derive_stream(CODEBOOK_STREAM, stream), 0);
            (0..size).map(|_| (0..n).map(|_| sampler.sample(&mut rng)).collect()).collect()
        };
        Ok(Self {
            n,
            nu,
            nx,
            nw,
            seed,
            codewords: draw(0, &w_sampler),
            inputs: draw(1, &x_sampler),
            cost,
        })
    }

    /// Codebook size `ceil(exp(n * rate))`, refusing beyond [`MAX_CODEWORDS`].
    pub fn size_for_rate(n: usize, rate: f64) -> Result<usize> {
        if !(rate >= 0.0) {
            return Err(Error::InvalidParameter(format!("rate must be >= 0, got {rate}")));
        }
        let m = (n as f64 * rate).exp().ceil();
        if m > MAX_CODEWORDS as f64 {
            return Err(Error::TooLarge {
                what: "codebook",
                needed: m.min(u128::MAX as f64) as u128,
                limit: MAX_CODEWORDS as u128,
            });
        }
        Ok(m.max(1.0) as usize)
    }

    pub fn len(&self) -> usize {
        self.codewords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codewords.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_aux(&self) -> usize {
        self.nw
    }

    pub fn codeword(&self, i: usize) -> &[usize] {
        &self.codewords[i]
    }

    pub fn input(&self, i: usize) -> &[usize] {
        &self.inputs[i]
    }

    /// Index of the codeword minimizing `sum_i -ln P_U|W(u_i|w_i)`; ties go
    /// to the lowest index.
    pub fn nearest(&self, u: &[usize]) -> usize {
        let mut best = 0;
        let mut best_cost = f64::INFINITY;
        for (i, w) in self.codewords.iter().enumerate() {
            let mut c = 0.0;
            for (&ui, &wi) in u.iter().zip(w) {
                c += self.cost[wi * self.nu + ui];
                if c >= best_cost {
                    break;
                }
            }
            if c < best_cost {
                best_cost = c;
                best = i;
            }
        }
        best
    }
}
