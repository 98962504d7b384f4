//! Binary channels with and without memory.
//!
//! A finite-state channel is described by a per-state flip law
//! `p(y|x,s)`, a state transition table `q(s'|s)` and an initial state
//! distribution. The joint likelihood of a received word factors into a
//! chain of rank-3 transfer tensors with the memory index as the bond:
//!
//! ```text
//!          x_1         x_2               x_N
//!           |           |                 |
//!  init --[A^1]--s_1--[A^2]--s_2- ... --[A^N]-- ones
//! ```
//!
//! with `A^j[s, s', x] = q(s'|s) * p(y_j | x, s)`. Fixing the `x` legs and
//! contracting the chain reproduces the path sum over hidden states. The
//! same chain with the error bit as the open leg (for additive per-state
//! BSC noise) drives code construction.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use thiserror::Error;

use crate::scaled::Scaled;
use crate::tensor::Tensor;
use crate::Scalar;

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("parameter {name}={value} outside [0,1]")]
    Parameter { name: &'static str, value: f64 },
    #[error("table is not stochastic: {0}")]
    NotStochastic(String),
    #[error("state chain has no unique stationary distribution")]
    ReducibleChain,
    #[error("burst length is unbounded (no exit from the bad state)")]
    UnboundedBurst,
    #[error("operation requires a two-state channel, got {0} states")]
    NotTwoState(usize),
    #[error("per-state law of state {0} is not a binary symmetric channel")]
    NotSymmetric(usize),
    #[error("length mismatch: |x|={x} vs |y|={y}")]
    LengthMismatch { x: usize, y: usize },
    #[error("channel file: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn check_unit(name: &'static str, v: f64) -> Result<(), ChannelError> {
    if !(0.0..=1.0).contains(&v) || !v.is_finite() {
        return Err(ChannelError::Parameter { name, value: v });
    }
    Ok(())
}

/// Binary memoryless channel, `w[y][x] = W(Y=y | X=x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MemorylessChannel<S> {
    w: [[S; 2]; 2],
}

impl<S: Scalar> MemorylessChannel<S> {
    pub fn new(w: [[S; 2]; 2]) -> Result<Self, ChannelError> {
        for x in 0..2 {
            let mut col = S::zero();
            for y in 0..2 {
                let v = w[y][x].to_f64().unwrap_or(f64::NAN);
                check_unit("w", v)?;
                col = col + w[y][x];
            }
            if (col - S::one()).abs().to_f64().unwrap() > 1e-12 {
                return Err(ChannelError::NotStochastic(format!(
                    "column x={x} sums to {col}"
                )));
            }
        }
        Ok(MemorylessChannel { w })
    }

    /// Binary symmetric channel with crossover probability `h`.
    pub fn bsc(h: S) -> Result<Self, ChannelError> {
        check_unit("h", h.to_f64().unwrap_or(f64::NAN))?;
        let one = S::one();
        Ok(MemorylessChannel { w: [[one - h, h], [h, one - h]] })
    }

    pub fn prob(&self, y: bool, x: bool) -> S {
        self.w[y as usize][x as usize]
    }

    pub fn table(&self) -> &[[S; 2]; 2] {
        &self.w
    }
}

/// Channel whose flip law depends on a hidden Markov state.
///
/// `p(y|x,s)` uses the state *before* the transition, and the state then
/// moves by `q(s'|s)` independently of the input.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteStateChannel<S> {
    d: usize,
    /// Per-state flip law, `states[s][y][x] = p(y|x,s)`.
    states: Vec<[[S; 2]; 2]>,
    /// Transition table, row-major `q[s_next * d + s_prev]`, columns sum to 1.
    q: Vec<S>,
    /// Initial state distribution.
    init: Vec<S>,
}

impl<S: Scalar> FiniteStateChannel<S> {
    pub fn new(states: Vec<[[S; 2]; 2]>, q: Vec<S>, init: Vec<S>) -> Result<Self, ChannelError> {
        let d = states.len();
        assert!(d > 0, "need at least one state");
        if q.len() != d * d {
            return Err(ChannelError::NotStochastic(format!(
                "q has {} entries, expected {}",
                q.len(),
                d * d
            )));
        }
        if init.len() != d {
            return Err(ChannelError::NotStochastic(format!(
                "init has {} entries, expected {d}",
                init.len()
            )));
        }
        for (s, law) in states.iter().enumerate() {
            for x in 0..2 {
                let mut col = S::zero();
                for y in 0..2 {
                    check_unit("p", law[y][x].to_f64().unwrap_or(f64::NAN))?;
                    col = col + law[y][x];
                }
                if (col - S::one()).abs().to_f64().unwrap() > 1e-12 {
                    return Err(ChannelError::NotStochastic(format!(
                        "p(.|x={x},s={s}) sums to {col}"
                    )));
                }
            }
        }
        for s_prev in 0..d {
            let mut col = S::zero();
            for s_next in 0..d {
                check_unit("q", q[s_next * d + s_prev].to_f64().unwrap_or(f64::NAN))?;
                col = col + q[s_next * d + s_prev];
            }
            if (col - S::one()).abs().to_f64().unwrap() > 1e-12 {
                return Err(ChannelError::NotStochastic(format!(
                    "q(.|s={s_prev}) sums to {col}"
                )));
            }
        }
        let mut total = S::zero();
        for &v in &init {
            check_unit("init", v.to_f64().unwrap_or(f64::NAN))?;
            total = total + v;
        }
        if (total - S::one()).abs().to_f64().unwrap() > 1e-12 {
            return Err(ChannelError::NotStochastic(format!("init sums to {total}")));
        }
        Ok(FiniteStateChannel { d, states, q, init })
    }

    /// Gilbert-Elliott channel: state 0 is Good (BSC `h_g`), state 1 is Bad
    /// (BSC `h_b`). The initial distribution defaults to the stationary one.
    pub fn gilbert_elliott(h_g: S, h_b: S, p_gb: S, p_bg: S) -> Result<Self, ChannelError> {
        for (name, v) in [("hG", h_g), ("hB", h_b), ("pGB", p_gb), ("pBG", p_bg)] {
            check_unit(name, v.to_f64().unwrap_or(f64::NAN))?;
        }
        if h_g > h_b {
            log::warn!(
                "good state is noisier than bad state (hG={} > hB={})",
                h_g,
                h_b
            );
        }
        let one = S::one();
        let good = MemorylessChannel::bsc(h_g)?.w;
        let bad = MemorylessChannel::bsc(h_b)?.w;
        // Row-major q[s'][s]: columns are the outgoing laws of G and B.
        let q = vec![one - p_gb, p_bg, p_gb, one - p_bg];
        let mut ch = FiniteStateChannel {
            d: 2,
            states: vec![good, bad],
            q,
            init: vec![one, S::zero()],
        };
        ch.init = ch.stationary()?;
        Ok(ch)
    }

    /// Embeds a memoryless channel as a 1-state channel so that every
    /// decoder path also covers the i.i.d. case.
    pub fn lift_memoryless(ch: &MemorylessChannel<S>) -> Self {
        FiniteStateChannel {
            d: 1,
            states: vec![ch.w],
            q: vec![S::one()],
            init: vec![S::one()],
        }
    }

    pub fn memory_size(&self) -> usize {
        self.d
    }

    pub fn init_dist(&self) -> &[S] {
        &self.init
    }

    pub fn with_init(self, init: Vec<S>) -> Result<Self, ChannelError> {
        Self::new(self.states, self.q, init)
    }

    pub fn transition(&self, s_next: usize, s_prev: usize) -> S {
        self.q[s_next * self.d + s_prev]
    }

    pub fn flip_law(&self, s: usize) -> &[[S; 2]; 2] {
        &self.states[s]
    }

    /// Unique stationary distribution of the state chain.
    pub fn stationary(&self) -> Result<Vec<S>, ChannelError> {
        let d = self.d;
        if d == 1 {
            return Ok(vec![S::one()]);
        }
        // Solve (q - I) pi = 0 with the last balance row replaced by the
        // normalization constraint, by Gaussian elimination with partial
        // pivoting.
        let mut a = vec![vec![S::zero(); d + 1]; d];
        for r in 0..d - 1 {
            for c in 0..d {
                a[r][c] = self.transition(r, c) - if r == c { S::one() } else { S::zero() };
            }
        }
        for c in 0..d {
            a[d - 1][c] = S::one();
        }
        a[d - 1][d] = S::one();
        for col in 0..d {
            let pivot = (col..d)
                .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
                .unwrap();
            if a[pivot][col].abs().to_f64().unwrap() < 1e-12 {
                return Err(ChannelError::ReducibleChain);
            }
            a.swap(col, pivot);
            for r in 0..d {
                if r == col {
                    continue;
                }
                let f = a[r][col] / a[col][col];
                for c in col..=d {
                    a[r][c] = a[r][c] - f * a[col][c];
                }
            }
        }
        let mut pi = vec![S::zero(); d];
        for r in 0..d {
            pi[r] = a[r][d] / a[r][r];
            if pi[r].to_f64().unwrap() < -1e-9 {
                return Err(ChannelError::ReducibleChain);
            }
            pi[r] = pi[r].max(S::zero());
        }
        Ok(pi)
    }

    /// Per-state crossover probabilities; errors unless every per-state law
    /// is a binary symmetric channel.
    pub fn per_state_crossover(&self) -> Result<Vec<S>, ChannelError> {
        let mut hs = Vec::with_capacity(self.d);
        for (s, law) in self.states.iter().enumerate() {
            let h01 = law[0][1];
            let h10 = law[1][0];
            if (h01 - h10).abs().to_f64().unwrap() > 1e-12 {
                return Err(ChannelError::NotSymmetric(s));
            }
            hs.push(h10);
        }
        Ok(hs)
    }

    /// Mean sojourn in the bad state, `1 / P(B->G)` (two-state channels).
    pub fn mean_burst_length(&self) -> Result<S, ChannelError> {
        if self.d != 2 {
            return Err(ChannelError::NotTwoState(self.d));
        }
        let p_bg = self.transition(0, 1);
        if p_bg == S::zero() {
            return Err(ChannelError::UnboundedBurst);
        }
        Ok(S::one() / p_bg)
    }

    /// Stationary odds of good over bad, `P(B->G) / P(G->B)`.
    pub fn good_bad_ratio(&self) -> Result<S, ChannelError> {
        if self.d != 2 {
            return Err(ChannelError::NotTwoState(self.d));
        }
        let p_bg = self.transition(0, 1);
        let p_gb = self.transition(1, 0);
        if p_gb == S::zero() {
            return Err(ChannelError::UnboundedBurst);
        }
        Ok(p_bg / p_gb)
    }

    /// Stationary average crossover probability over the per-state BSCs.
    pub fn average_crossover(&self) -> Result<S, ChannelError> {
        let hs = self.per_state_crossover()?;
        let pi = self.stationary()?;
        Ok(hs
            .iter()
            .zip(&pi)
            .fold(S::zero(), |acc, (&h, &p)| acc + h * p))
    }

    /// Sends `x` through the channel, returning the received word and the
    /// hidden state path `s_0..s_N`.
    pub fn sample_transmission<R: Rng + ?Sized>(&self, x: &[bool], rng: &mut R) -> Transmission {
        let mut states = Vec::with_capacity(x.len() + 1);
        let mut s = sample_dist(&self.init, rng);
        states.push(s);
        let mut y = Vec::with_capacity(x.len());
        for &xi in x {
            // Flip law conditioned on the state before the transition.
            let law = &self.states[s];
            let p1 = law[1][xi as usize].to_f64().unwrap();
            let yi = rng.gen_bool(p1.clamp(0.0, 1.0));
            y.push(yi);
            let col: Vec<S> = (0..self.d).map(|s2| self.transition(s2, s)).collect();
            s = sample_dist(&col, rng);
            states.push(s);
        }
        Transmission { y, states }
    }

    /// `W_N(y|x)` marginalized over the initial state, via `d x d` matrix
    /// products along the chain.
    pub fn likelihood(&self, x: &[bool], y: &[bool]) -> Result<S, ChannelError> {
        Ok(self.likelihood_scaled(x, y)?.to_value())
    }

    /// As [`likelihood`](Self::likelihood) but immune to underflow.
    pub fn likelihood_scaled(&self, x: &[bool], y: &[bool]) -> Result<Scaled<S>, ChannelError> {
        if x.len() != y.len() {
            return Err(ChannelError::LengthMismatch { x: x.len(), y: y.len() });
        }
        let mut v = self.init.clone();
        let mut scale: Scaled<S> = Scaled::one();
        for (&xi, &yi) in x.iter().zip(y) {
            let mut next = vec![S::zero(); self.d];
            for s_prev in 0..self.d {
                let emit = self.states[s_prev][yi as usize][xi as usize];
                if emit == S::zero() {
                    continue;
                }
                let w = v[s_prev] * emit;
                for (s_next, slot) in next.iter_mut().enumerate() {
                    *slot = *slot + w * self.transition(s_next, s_prev);
                }
            }
            v = next;
            let m = v.iter().fold(S::zero(), |a, &b| a.max(b));
            if m > S::zero() {
                let shift = Scaled::from_value(m).exp;
                crate::scaled::scale_slice_exp2(&mut v, -shift);
                scale.exp += shift;
            }
        }
        let total = v.iter().fold(S::zero(), |a, &b| a + b);
        Ok(Scaled::from_value(total).mul(Scaled { mantissa: S::one(), exp: scale.exp }))
    }

    /// Transfer chain with the received word substituted and the input bit
    /// legs left open.
    pub fn evidence_mpo(&self, y: &[bool]) -> Mpo<S> {
        let sites = y
            .iter()
            .map(|&yi| {
                let mut mats = [vec![S::zero(); self.d * self.d], vec![S::zero(); self.d * self.d]];
                for (x, mat) in mats.iter_mut().enumerate() {
                    for s in 0..self.d {
                        let emit = self.states[s][yi as usize][x];
                        for s2 in 0..self.d {
                            mat[s * self.d + s2] = self.transition(s2, s) * emit;
                        }
                    }
                }
                MpoSite::new(self.d, mats)
            })
            .collect();
        Mpo {
            d: self.d,
            sites,
            left: self.init.clone(),
            right: vec![S::one(); self.d],
        }
    }

    /// Transfer chain over the additive error bit, valid when every
    /// per-state law is a BSC: `B[s,s',z] = q(s'|s) * (h_s if z else 1-h_s)`.
    /// Contracting with every z leg summed gives exactly 1.
    pub fn error_mpo(&self, len: usize) -> Result<Mpo<S>, ChannelError> {
        let hs = self.per_state_crossover()?;
        let mut mats = [vec![S::zero(); self.d * self.d], vec![S::zero(); self.d * self.d]];
        for (z, mat) in mats.iter_mut().enumerate() {
            for s in 0..self.d {
                let emit = if z == 1 { hs[s] } else { S::one() - hs[s] };
                for s2 in 0..self.d {
                    mat[s * self.d + s2] = self.transition(s2, s) * emit;
                }
            }
        }
        let site = MpoSite::new(self.d, mats);
        Ok(Mpo {
            d: self.d,
            sites: vec![site; len],
            left: self.init.clone(),
            right: vec![S::one(); self.d],
        })
    }

    /// Reads a channel description from a plain key-value file.
    pub fn from_file(path: &Path) -> Result<Self, ChannelError>
    where
        S: Scalar,
    {
        let text = std::fs::read_to_string(path)?;
        Self::from_config_str(&text)
    }

    /// Parses the key-value format:
    ///
    /// ```text
    /// family=ge        # or bsc, custom
    /// hG=0  hB=0.9  pGB=0.01  pBG=0.05      (ge)
    /// h=0.1                                  (bsc)
    /// d=3  q=...;...;...  h=h0,h1,h2  [init=...]  (custom)
    /// ```
    ///
    /// `q` rows are destination states, columns source states. A custom
    /// state may override the symmetric law with `p.<s>=p00,p01;p10,p11`
    /// (rows y, columns x).
    pub fn from_config_str(text: &str) -> Result<Self, ChannelError> {
        let mut kv = std::collections::BTreeMap::new();
        for raw in text.lines() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            for token in line.split_whitespace() {
                let (k, v) = token
                    .split_once('=')
                    .ok_or_else(|| ChannelError::Parse(format!("expected key=value, got {token:?}")))?;
                kv.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        let family = kv
            .get("family")
            .ok_or_else(|| ChannelError::Parse("missing family".into()))?
            .as_str();
        let get_f = |key: &str| -> Result<S, ChannelError> {
            let raw = kv
                .get(key)
                .ok_or_else(|| ChannelError::Parse(format!("missing {key}")))?;
            raw.parse::<f64>()
                .map(S::from_f64_lossy)
                .map_err(|_| ChannelError::Parse(format!("bad number for {key}: {raw:?}")))
        };
        match family {
            "ge" => FiniteStateChannel::gilbert_elliott(
                get_f("hG")?,
                get_f("hB")?,
                get_f("pGB")?,
                get_f("pBG")?,
            ),
            "bsc" => Ok(FiniteStateChannel::lift_memoryless(&MemorylessChannel::bsc(
                get_f("h")?,
            )?)),
            "custom" => {
                let d: usize = kv
                    .get("d")
                    .ok_or_else(|| ChannelError::Parse("missing d".into()))?
                    .parse()
                    .map_err(|_| ChannelError::Parse("bad d".into()))?;
                let parse_list = |raw: &str| -> Result<Vec<S>, ChannelError> {
                    raw.split(',')
                        .map(|t| {
                            t.trim()
                                .parse::<f64>()
                                .map(S::from_f64_lossy)
                                .map_err(|_| ChannelError::Parse(format!("bad number {t:?}")))
                        })
                        .collect()
                };
                let q_raw = kv
                    .get("q")
                    .ok_or_else(|| ChannelError::Parse("missing q".into()))?;
                let mut q = Vec::with_capacity(d * d);
                for row in q_raw.split(';') {
                    let vals = parse_list(row)?;
                    if vals.len() != d {
                        return Err(ChannelError::Parse(format!(
                            "q row has {} entries, expected {d}",
                            vals.len()
                        )));
                    }
                    q.extend(vals);
                }
                if q.len() != d * d {
                    return Err(ChannelError::Parse(format!(
                        "q has {} rows, expected {d}",
                        q.len() / d
                    )));
                }
                let mut states: Vec<[[S; 2]; 2]> = Vec::with_capacity(d);
                if let Some(h_raw) = kv.get("h") {
                    let hs = parse_list(h_raw)?;
                    if hs.len() != d {
                        return Err(ChannelError::Parse(format!(
                            "h has {} entries, expected {d}",
                            hs.len()
                        )));
                    }
                    for h in hs {
                        states.push(MemorylessChannel::bsc(h)?.w);
                    }
                } else {
                    states.resize(d, MemorylessChannel::bsc(S::zero())?.w);
                }
                for s in 0..d {
                    if let Some(raw) = kv.get(&format!("p.{s}")) {
                        let rows: Vec<&str> = raw.split(';').collect();
                        if rows.len() != 2 {
                            return Err(ChannelError::Parse(format!("p.{s} needs 2 rows")));
                        }
                        let r0 = parse_list(rows[0])?;
                        let r1 = parse_list(rows[1])?;
                        if r0.len() != 2 || r1.len() != 2 {
                            return Err(ChannelError::Parse(format!("p.{s} rows need 2 entries")));
                        }
                        states[s] = [[r0[0], r0[1]], [r1[0], r1[1]]];
                    }
                }
                let ch = FiniteStateChannel::new(states.clone(), q.clone(), {
                    // Placeholder, replaced below.
                    let mut init = vec![S::zero(); d];
                    init[0] = S::one();
                    init
                })?;
                let init = match kv.get("init") {
                    Some(raw) => parse_list(raw)?,
                    None => ch.stationary()?,
                };
                FiniteStateChannel::new(states, q, init)
            }
            other => Err(ChannelError::Parse(format!("unknown family {other:?}"))),
        }
    }

    /// Key-value description accepted by [`from_config_str`](Self::from_config_str).
    pub fn to_config_string(&self) -> String {
        let mut out = String::from("family=custom\n");
        let _ = writeln!(out, "d={}", self.d);
        let q_rows: Vec<String> = (0..self.d)
            .map(|r| {
                (0..self.d)
                    .map(|c| format!("{}", self.q[r * self.d + c]))
                    .collect::<Vec<_>>()
                    .join(",")
            })
            .collect();
        let _ = writeln!(out, "q={}", q_rows.join(";"));
        for (s, law) in self.states.iter().enumerate() {
            let _ = writeln!(
                out,
                "p.{s}={},{};{},{}",
                law[0][0], law[0][1], law[1][0], law[1][1]
            );
        }
        let init: Vec<String> = self.init.iter().map(|v| format!("{v}")).collect();
        let _ = writeln!(out, "init={}", init.join(","));
        out
    }
}

fn sample_dist<S: Scalar, R: Rng + ?Sized>(dist: &[S], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in dist.iter().enumerate() {
        acc += p.to_f64().unwrap();
        if u < acc {
            return i;
        }
    }
    dist.len() - 1
}

/// Result of sending a word through a finite-state channel.
#[derive(Clone, Debug)]
pub struct Transmission {
    pub y: Vec<bool>,
    /// Hidden state path `s_0..s_N`.
    pub states: Vec<usize>,
}

/// One position of the transfer chain: a pair of `d x d` matrices indexed
/// by the open bit leg, plus their precomputed sum.
#[derive(Clone, Debug, PartialEq)]
pub struct MpoSite<S> {
    d: usize,
    mats: [Vec<S>; 2],
    sum: Vec<S>,
}

impl<S: Scalar> MpoSite<S> {
    fn new(d: usize, mats: [Vec<S>; 2]) -> Self {
        let sum = mats[0]
            .iter()
            .zip(&mats[1])
            .map(|(&a, &b)| a + b)
            .collect();
        MpoSite { d, mats, sum }
    }

    /// `d x d` transfer matrix for a fixed bit value, row-major `(s, s')`.
    pub fn mat(&self, bit: bool) -> &[S] {
        &self.mats[bit as usize]
    }

    /// Transfer matrix with the bit leg summed.
    pub fn mat_summed(&self) -> &[S] {
        &self.sum
    }

    /// The site as a rank-3 tensor over `(s, s', bit)`.
    pub fn as_tensor(&self) -> Tensor<S> {
        let mut t = Tensor::zeros(vec![self.d, self.d, 2]);
        for s in 0..self.d {
            for s2 in 0..self.d {
                for b in 0..2 {
                    t.set(&[s, s2, b], self.mats[b][s * self.d + s2]);
                }
            }
        }
        t
    }
}

/// Transfer chain for a full block: one site per position, the initial
/// state distribution attached on position 1's left memory leg and an
/// all-ones vector closing the final state.
#[derive(Clone, Debug, PartialEq)]
pub struct Mpo<S> {
    d: usize,
    sites: Vec<MpoSite<S>>,
    left: Vec<S>,
    right: Vec<S>,
}

/// How to resolve one open bit leg during a chain contraction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LegResolve {
    Fix(bool),
    SumOut,
}

impl<S: Scalar> Mpo<S> {
    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn bond_dimension(&self) -> usize {
        self.d
    }

    pub fn site(&self, j: usize) -> &MpoSite<S> {
        &self.sites[j]
    }

    pub fn left_boundary(&self) -> &[S] {
        &self.left
    }

    pub fn right_boundary(&self) -> &[S] {
        &self.right
    }

    /// Contracts the full chain with each bit leg fixed or summed.
    pub fn contract_legs(&self, legs: &[LegResolve]) -> Scaled<S> {
        assert_eq!(legs.len(), self.sites.len());
        let mut v = self.left.clone();
        let mut exp = 0i64;
        for (site, leg) in self.sites.iter().zip(legs) {
            let mat = match leg {
                LegResolve::Fix(b) => site.mat(*b),
                LegResolve::SumOut => site.mat_summed(),
            };
            let mut next = vec![S::zero(); self.d];
            for s in 0..self.d {
                if v[s] == S::zero() {
                    continue;
                }
                for s2 in 0..self.d {
                    next[s2] = next[s2] + v[s] * mat[s * self.d + s2];
                }
            }
            v = next;
            let m = v.iter().fold(S::zero(), |a, &b| a.max(b.abs()));
            if m > S::zero() {
                let shift = Scaled::from_value(m).exp;
                if shift != 0 {
                    crate::scaled::scale_slice_exp2(&mut v, -shift);
                    exp += shift;
                }
            }
        }
        let total = v
            .iter()
            .zip(&self.right)
            .fold(S::zero(), |a, (&x, &r)| a + x * r);
        Scaled::from_parts(total, exp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    fn ge(h_g: f64, h_b: f64, p_gb: f64, p_bg: f64) -> FiniteStateChannel<f64> {
        FiniteStateChannel::gilbert_elliott(h_g, h_b, p_gb, p_bg).unwrap()
    }

    /// Random d-state channel with per-state BSC laws.
    pub(crate) fn random_bsc_channel(rng: &mut StdRng, d: usize) -> FiniteStateChannel<f64> {
        use rand::Rng;
        let states: Vec<[[f64; 2]; 2]> = (0..d)
            .map(|_| {
                let h = rng.gen_range(0.02..0.45);
                [[1.0 - h, h], [h, 1.0 - h]]
            })
            .collect();
        let mut q = vec![0.0; d * d];
        for s in 0..d {
            let mut col: Vec<f64> = (0..d).map(|_| rng.gen_range(0.05..1.0)).collect();
            let total: f64 = col.iter().sum();
            for v in col.iter_mut() {
                *v /= total;
            }
            for s2 in 0..d {
                q[s2 * d + s] = col[s2];
            }
        }
        let tmp = FiniteStateChannel::new(states.clone(), q.clone(), {
            let mut init = vec![0.0; d];
            init[0] = 1.0;
            init
        })
        .unwrap();
        let init = tmp.stationary().unwrap();
        FiniteStateChannel::new(states, q, init).unwrap()
    }

    /// Brute-force path sum over all hidden state sequences.
    fn likelihood_by_paths(ch: &FiniteStateChannel<f64>, x: &[bool], y: &[bool]) -> f64 {
        let d = ch.memory_size();
        let n = x.len();
        let mut total = 0.0;
        let paths = d.pow(n as u32 + 1);
        for code in 0..paths {
            let mut digits = Vec::with_capacity(n + 1);
            let mut c = code;
            for _ in 0..=n {
                digits.push(c % d);
                c /= d;
            }
            let mut p = ch.init_dist()[digits[0]];
            for i in 0..n {
                let s_prev = digits[i];
                let s_next = digits[i + 1];
                p *= ch.flip_law(s_prev)[y[i] as usize][x[i] as usize];
                p *= ch.transition(s_next, s_prev);
            }
            total += p;
        }
        total
    }

    #[test]
    fn bsc_tables() {
        let id = MemorylessChannel::<f64>::bsc(0.0).unwrap();
        assert_eq!(id.prob(false, false), 1.0);
        assert_eq!(id.prob(true, false), 0.0);
        let half = MemorylessChannel::<f64>::bsc(0.5).unwrap();
        for y in [false, true] {
            for x in [false, true] {
                assert_eq!(half.prob(y, x), 0.5);
            }
        }
        let heavy = MemorylessChannel::<f64>::bsc(0.9).unwrap();
        assert!((heavy.prob(false, true) - 0.9).abs() < 1e-15);
        assert!(MemorylessChannel::<f64>::bsc(1.2).is_err());
    }

    #[test]
    fn gilbert_elliott_tables() {
        let ch = ge(0.0, 0.9, 0.01, 0.05);
        assert_eq!(ch.memory_size(), 2);
        assert!((ch.transition(1, 0) - 0.01).abs() < 1e-15); // G -> B
        assert!((ch.transition(0, 0) - 0.99).abs() < 1e-15);
        assert!((ch.transition(0, 1) - 0.05).abs() < 1e-15); // B -> G
        assert!((ch.transition(1, 1) - 0.95).abs() < 1e-15);
        assert_eq!(ch.flip_law(0)[1][0], 0.0);
        assert!((ch.flip_law(1)[1][0] - 0.9).abs() < 1e-15);
        assert!(FiniteStateChannel::<f64>::gilbert_elliott(0.0, 0.9, 1.5, 0.05).is_err());
    }

    #[test]
    fn stationary_matches_two_state_balance() {
        // Balance: pGB * P(G) = pBG * P(B).
        let ch = ge(0.0, 0.9, 0.01, 0.05);
        let pi = ch.stationary().unwrap();
        assert!((pi[1] - 1.0 / 6.0).abs() < 1e-12);
        assert!((pi[0] - 5.0 / 6.0).abs() < 1e-12);

        let sym = ge(0.0, 0.9, 0.3, 0.3);
        let pi = sym.stationary().unwrap();
        assert!((pi[0] - 0.5).abs() < 1e-12 && (pi[1] - 0.5).abs() < 1e-12);

        // First column of the burst-length table: rho = 0.400 / 0.080 = 5.
        let row1 = ge(0.0, 0.9, 0.080, 0.400);
        assert!((row1.good_bad_ratio().unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn stationary_is_a_fixed_point() {
        let mut rng = StdRng::seed_from_u64(11);
        for d in [1usize, 2, 3, 4] {
            let ch = random_bsc_channel(&mut rng, d);
            let pi = ch.stationary().unwrap();
            for s2 in 0..d {
                let mut acc = 0.0;
                for s in 0..d {
                    acc += ch.transition(s2, s) * pi[s];
                }
                assert!((acc - pi[s2]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn reducible_chain_is_rejected() {
        let states = vec![[[1.0, 0.0], [0.0, 1.0]]; 2];
        let q = vec![1.0, 0.0, 0.0, 1.0]; // two absorbing states
        let ch = FiniteStateChannel::new(states, q, vec![0.5, 0.5]).unwrap();
        assert!(matches!(ch.stationary(), Err(ChannelError::ReducibleChain)));
    }

    #[test]
    fn burst_length_and_ratio() {
        assert!((ge(0.0, 0.9, 0.05, 0.25).mean_burst_length().unwrap() - 4.0).abs() < 1e-12);
        assert!((ge(0.0, 0.9, 0.5, 1.0).mean_burst_length().unwrap() - 1.0).abs() < 1e-12);
        assert!((ge(0.0, 0.9, 0.005, 0.025).mean_burst_length().unwrap() - 40.0).abs() < 1e-12);
        let stuck = ge(0.0, 0.9, 0.01, 0.0);
        assert!(matches!(
            stuck.mean_burst_length(),
            Err(ChannelError::UnboundedBurst)
        ));
    }

    #[test]
    fn average_crossover_examples() {
        // P(B) * h = (1/6) * 0.9 = 0.15.
        let ch = ge(0.0, 0.9, 0.01, 0.05);
        assert!((ch.average_crossover().unwrap() - 0.15).abs() < 1e-12);
        let flat = ge(0.3, 0.3, 0.01, 0.05);
        assert!((flat.average_crossover().unwrap() - 0.3).abs() < 1e-12);
        // Longest-burst column: pBG = 0.025, pGB = 0.005 also averages 0.15.
        let long = ge(0.0, 0.9, 0.005, 0.025);
        assert!((long.average_crossover().unwrap() - 0.15).abs() < 1e-12);
        // Asymmetric per-state law has no single crossover.
        let asym = FiniteStateChannel::new(
            vec![[[0.9, 0.2], [0.1, 0.8]]],
            vec![1.0],
            vec![1.0],
        )
        .unwrap();
        assert!(matches!(
            asym.average_crossover(),
            Err(ChannelError::NotSymmetric(0))
        ));
    }

    #[test]
    fn lifted_memoryless_likelihood_is_a_product() {
        let mut rng = StdRng::seed_from_u64(12);
        use rand::Rng;
        let h = 0.23;
        let mem = MemorylessChannel::<f64>::bsc(h).unwrap();
        let ch = FiniteStateChannel::lift_memoryless(&mem);
        assert_eq!(ch.memory_size(), 1);
        for _ in 0..10 {
            let n = 5;
            let x: Vec<bool> = (0..n).map(|_| rng.gen()).collect();
            let y: Vec<bool> = (0..n).map(|_| rng.gen()).collect();
            let direct: f64 = x
                .iter()
                .zip(&y)
                .map(|(&xi, &yi)| mem.prob(yi, xi))
                .product();
            assert!((ch.likelihood(&x, &y).unwrap() - direct).abs() < 1e-14);
            // The evidence chain agrees with the product law.
            let mpo = ch.evidence_mpo(&y);
            let legs: Vec<LegResolve> = x.iter().map(|&b| LegResolve::Fix(b)).collect();
            assert!((mpo.contract_legs(&legs).to_value() - direct).abs() < 1e-14);
        }
    }

    #[test]
    fn noiseless_likelihood_is_indicator() {
        let ch = FiniteStateChannel::lift_memoryless(&MemorylessChannel::bsc(0.0).unwrap());
        let x = vec![true, false, true];
        assert_eq!(ch.likelihood(&x, &x).unwrap(), 1.0);
        let mut y = x.clone();
        y[1] = !y[1];
        assert_eq!(ch.likelihood(&x, &y).unwrap(), 0.0);
    }

    #[test]
    fn likelihood_matches_path_enumeration() {
        let mut rng = StdRng::seed_from_u64(13);
        use rand::Rng;
        for d in [1usize, 2, 3] {
            let ch = random_bsc_channel(&mut rng, d);
            for _ in 0..5 {
                let n = 4;
                let x: Vec<bool> = (0..n).map(|_| rng.gen()).collect();
                let y: Vec<bool> = (0..n).map(|_| rng.gen()).collect();
                let fast = ch.likelihood(&x, &y).unwrap();
                let brute = likelihood_by_paths(&ch, &x, &y);
                assert!((fast - brute).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn likelihood_is_normalized_over_outputs() {
        let mut rng = StdRng::seed_from_u64(14);
        use rand::Rng;
        for n in [1usize, 4, 8] {
            let ch = random_bsc_channel(&mut rng, 2);
            let x: Vec<bool> = (0..n).map(|_| rng.gen()).collect();
            let mut total = 0.0;
            for code in 0..(1usize << n) {
                let y: Vec<bool> = (0..n).map(|i| (code >> (n - 1 - i)) & 1 == 1).collect();
                total += ch.likelihood(&x, &y).unwrap();
            }
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_memory_factorizes() {
        let mut rng = StdRng::seed_from_u64(15);
        use rand::Rng;
        let h = 0.2;
        let ch = ge(h, h, 0.01, 0.05);
        let mem = MemorylessChannel::<f64>::bsc(h).unwrap();
        for n in [1usize, 4, 8] {
            for _ in 0..5 {
                let x: Vec<bool> = (0..n).map(|_| rng.gen()).collect();
                let y: Vec<bool> = (0..n).map(|_| rng.gen()).collect();
                let product: f64 = x
                    .iter()
                    .zip(&y)
                    .map(|(&xi, &yi)| mem.prob(yi, xi))
                    .product();
                assert!((ch.likelihood(&x, &y).unwrap() - product).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn evidence_mpo_matches_likelihood() {
        let mut rng = StdRng::seed_from_u64(16);
        use rand::Rng;
        for d in [1usize, 2, 3] {
            let ch = random_bsc_channel(&mut rng, d);
            let n = 6;
            let x: Vec<bool> = (0..n).map(|_| rng.gen()).collect();
            let y: Vec<bool> = (0..n).map(|_| rng.gen()).collect();
            let mpo = ch.evidence_mpo(&y);
            let legs: Vec<LegResolve> = x.iter().map(|&b| LegResolve::Fix(b)).collect();
            let via_mpo = mpo.contract_legs(&legs).to_value();
            let brute = likelihood_by_paths(&ch, &x, &y);
            assert!((via_mpo - brute).abs() < 1e-12);
        }
    }

    #[test]
    fn lifted_evidence_site_is_the_flip_table() {
        let mem = MemorylessChannel::<f64>::bsc(0.3).unwrap();
        let ch = FiniteStateChannel::lift_memoryless(&mem);
        let y = vec![true, false];
        let mpo = ch.evidence_mpo(&y);
        for (j, &yj) in y.iter().enumerate() {
            for x in [false, true] {
                assert_eq!(mpo.site(j).mat(x)[0], mem.prob(yj, x));
            }
        }
    }

    #[test]
    fn error_mpo_is_normalized() {
        let mut rng = StdRng::seed_from_u64(17);
        for d in [1usize, 2, 3] {
            let ch = random_bsc_channel(&mut rng, d);
            let mpo = ch.error_mpo(7).unwrap();
            let legs = vec![LegResolve::SumOut; 7];
            assert!((mpo.contract_legs(&legs).to_value() - 1.0).abs() < 1e-12);
        }
        let asym =
            FiniteStateChannel::new(vec![[[0.9, 0.2], [0.1, 0.8]]], vec![1.0], vec![1.0]).unwrap();
        assert!(asym.error_mpo(3).is_err());
    }

    #[test]
    fn error_mpo_matches_error_word_probability() {
        // P(z) of an additive error pattern equals the chain with z legs
        // fixed, by the per-state symmetry.
        let mut rng = StdRng::seed_from_u64(18);
        use rand::Rng;
        let ch = ge(0.1, 0.8, 0.2, 0.3);
        let n = 5;
        let mpo = ch.error_mpo(n).unwrap();
        for _ in 0..8 {
            let z: Vec<bool> = (0..n).map(|_| rng.gen()).collect();
            let legs: Vec<LegResolve> = z.iter().map(|&b| LegResolve::Fix(b)).collect();
            let via_mpo = mpo.contract_legs(&legs).to_value();
            let zeros = vec![false; n];
            let brute = likelihood_by_paths(&ch, &zeros, &z);
            assert!((via_mpo - brute).abs() < 1e-12);
        }
    }

    #[test]
    fn sampling_respects_noiseless_and_frozen_state_channels() {
        let mut rng = StdRng::seed_from_u64(19);
        use rand::Rng;
        let x: Vec<bool> = (0..64).map(|_| rng.gen()).collect();
        let noiseless = ge(0.0, 0.0, 0.3, 0.4);
        let t = noiseless.sample_transmission(&x, &mut rng);
        assert_eq!(t.y, x);
        // Locked in the good state with hG = 0.
        let locked = FiniteStateChannel::new(
            vec![[[1.0, 0.0], [0.0, 1.0]], [[0.1, 0.9], [0.9, 0.1]]],
            vec![1.0, 0.0, 0.0, 1.0],
            vec![1.0, 0.0],
        )
        .unwrap();
        let t = locked.sample_transmission(&x, &mut rng);
        assert_eq!(t.y, x);
        assert!(t.states.iter().all(|&s| s == 0));
    }

    #[test]
    fn sampled_flip_rate_matches_average_crossover() {
        let mut rng = StdRng::seed_from_u64(20);
        let ch = ge(0.0, 0.9, 0.01, 0.05);
        let h_bar = ch.average_crossover().unwrap();
        let n = 1_000_000usize;
        let x = vec![false; n];
        let t = ch.sample_transmission(&x, &mut rng);
        let flips = t.y.iter().filter(|&&b| b).count() as f64;
        let rate = flips / n as f64;
        // Correlated flips: a conservative 3-sigma band using the i.i.d.
        // variance inflated by the burst length.
        let sigma = (h_bar * (1.0 - h_bar) / n as f64).sqrt()
            * ch.mean_burst_length().unwrap().sqrt();
        assert!(
            (rate - h_bar).abs() < 3.0 * sigma + 1e-3,
            "rate {rate} vs expected {h_bar}"
        );
    }

    #[test]
    fn sampled_state_frequencies_match_stationary() {
        let mut rng = StdRng::seed_from_u64(21);
        let ch = ge(0.0, 0.9, 0.01, 0.05);
        let pi = ch.stationary().unwrap();
        let n = 1_000_000usize;
        let x = vec![false; n];
        let t = ch.sample_transmission(&x, &mut rng);
        let bad = t.states.iter().filter(|&&s| s == 1).count() as f64 / t.states.len() as f64;
        let sigma = (pi[1] * (1.0 - pi[1]) / n as f64).sqrt()
            * ch.mean_burst_length().unwrap().sqrt();
        assert!((bad - pi[1]).abs() < 3.0 * sigma + 1e-3);
    }

    #[test]
    fn config_parsing_round_trips() {
        let ge_text = "family=ge\nhG=0\nhB=0.9\npGB=0.01\npBG=0.05\n";
        let ch = FiniteStateChannel::<f64>::from_config_str(ge_text).unwrap();
        assert_eq!(ch.memory_size(), 2);
        assert!((ch.transition(1, 0) - 0.01).abs() < 1e-15);

        let bsc_text = "family=bsc h=0.1";
        let ch = FiniteStateChannel::<f64>::from_config_str(bsc_text).unwrap();
        assert_eq!(ch.memory_size(), 1);
        assert!((ch.flip_law(0)[1][0] - 0.1).abs() < 1e-15);

        let custom = FiniteStateChannel::<f64>::from_config_str(
            "family=custom\nd=2\nq=0.99,0.05;0.01,0.95\nh=0.0,0.9\n",
        )
        .unwrap();
        let direct = ge(0.0, 0.9, 0.01, 0.05);
        assert!((custom.transition(1, 0) - direct.transition(1, 0)).abs() < 1e-15);
        assert!((custom.init_dist()[1] - direct.init_dist()[1]).abs() < 1e-12);

        // Round trip through the emitted description.
        let text = direct.to_config_string();
        let back = FiniteStateChannel::<f64>::from_config_str(&text).unwrap();
        assert!((back.transition(0, 1) - direct.transition(0, 1)).abs() < 1e-12);

        assert!(FiniteStateChannel::<f64>::from_config_str("family=??").is_err());
        assert!(FiniteStateChannel::<f64>::from_config_str("family=ge hG=0").is_err());
        assert!(FiniteStateChannel::<f64>::from_config_str("hG=0").is_err());
    }
}
