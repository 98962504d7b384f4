//! Successive-cancellation decoding by tensor-network contraction.
//!
//! Three engines compute the same per-step window marginals
//! `P(y, decoded prefix, window assignment)` with later inputs summed out:
//!
//! - [`brute_force_marginal`]: literal enumeration of all suffix
//!   assignments against the channel likelihood (the oracle; guarded to
//!   small blocks);
//! - [`window_marginal_sweep`]: pushes the prefix/window/suffix leg states
//!   through the circuit once, then contracts the transfer chain
//!   left-to-right, tracking the summed parity links the circuit creates
//!   (the polynomial reference);
//! - [`window_marginal_fast`]: bottom-up block messages over the circuit
//!   tree with per-node caching, so a decoding step only recomputes the
//!   nodes whose span changed — the `O(d^3 N log N)` engine.
//!
//! [`ScDecoder`] drives any engine window by window.

mod brute;
mod leg;
mod sweep;
mod tree;

pub use brute::brute_force_marginal;
pub use leg::{push_down, LegState, PushDown};
pub use sweep::{contract_pushed_chain, window_marginal_sweep, window_marginal_sweep_constrained};
pub use tree::DecodeState;

use thiserror::Error;

use crate::channel::Mpo;
use crate::code::{Circuit, CodeSpec};
use crate::scaled::Scaled;
use crate::Scalar;

/// Upper bound on simultaneously open window bits, set by table storage.
pub const HARD_MAX_WINDOW: usize = 8;

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("window of {len} bits exceeds the supported maximum {max}")]
    WindowTooLarge { len: usize, max: usize },
    #[error("message would carry {axes} open axes, cap is {max}")]
    OpenAxisOverflow { axes: usize, max: usize },
    #[error("{count} summed parity links exceed the sweep cap {max}")]
    SigmaOverflow { count: usize, max: usize },
    #[error("marginal table is exactly zero at step {step} (evidence inconsistent)")]
    ZeroMarginal { step: usize },
    #[error("block length mismatch: circuit {circuit} vs chain {mpo}")]
    LengthMismatch { circuit: usize, mpo: usize },
    #[error("prefix of {prefix} bits plus window {window} exceeds block length {n}")]
    OutOfRange { prefix: usize, window: usize, n: usize },
    #[error("brute force guarded to N <= {max}, got {n}")]
    SizeGuard { n: usize, max: usize },
    #[error("decoder invariant violated: {0}")]
    Internal(String),
}

/// Marginal engine selection.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Engine {
    Sweep,
    Fast,
}

impl Engine {
    pub fn parse(token: &str) -> Option<Self> {
        match token {
            "sweep" => Some(Engine::Sweep),
            "fast" => Some(Engine::Fast),
            _ => None,
        }
    }
}

/// Constraint on one window position.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WindowLeg {
    Open,
    Fixed(bool),
}

/// Unnormalized window marginals, stored as `values * 2^exp`.
///
/// Index convention: the first open window position is the most significant
/// bit of the table index.
#[derive(Clone, Debug)]
pub struct StepTable<S> {
    values: Vec<S>,
    exp: i64,
}

impl<S: Scalar> StepTable<S> {
    /// Builds a table from scaled entries, aligning them on a common
    /// exponent.
    pub fn from_scaled(entries: Vec<Scaled<S>>) -> Self {
        let max_exp = entries
            .iter()
            .filter(|e| !e.is_zero())
            .map(|e| e.exp)
            .max();
        match max_exp {
            None => StepTable { values: vec![S::zero(); entries.len()], exp: 0 },
            Some(exp) => {
                let values = entries
                    .iter()
                    .map(|e| {
                        if e.is_zero() {
                            S::zero()
                        } else {
                            e.mantissa * S::exp2(S::from_f64_lossy((e.exp - exp) as f64))
                        }
                    })
                    .collect();
                StepTable { values, exp }
            }
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Number of open window bits.
    pub fn open_bits(&self) -> usize {
        self.values.len().trailing_zeros() as usize
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == S::zero())
    }

    pub fn entry(&self, idx: usize) -> Scaled<S> {
        Scaled::from_parts(self.values[idx], self.exp)
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn exp(&self) -> i64 {
        self.exp
    }

    /// Entries as plain probabilities; may underflow for long blocks.
    pub fn probabilities(&self) -> Vec<f64> {
        self.values
            .iter()
            .map(|v| v.to_f64().unwrap() * (self.exp as f64).exp2())
            .collect()
    }

    /// Table divided by its maximum entry (all zeros stay zero).
    pub fn normalized(&self) -> Vec<f64> {
        let vals: Vec<f64> = self.values.iter().map(|v| v.to_f64().unwrap()).collect();
        let m = vals.iter().cloned().fold(0.0f64, f64::max);
        if m == 0.0 {
            return vals;
        }
        vals.iter().map(|v| v / m).collect()
    }

    /// Largest entrywise difference between max-normalized tables.
    pub fn rel_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.len(), other.len());
        let a = self.normalized();
        let b = other.normalized();
        a.iter()
            .zip(&b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    /// Index of the largest entry; ties break toward the lexicographically
    /// smallest assignment.
    ///
    /// Entries within a narrow relative band of the maximum count as tied.
    /// Exact ties happen with positive probability (opposing evidence of
    /// equal weight cancels), and the band keeps the decision independent
    /// of which engine's rounding produced the table.
    pub fn argmax(&self) -> usize {
        let max = self
            .values
            .iter()
            .fold(S::zero(), |a, &b| a.max(b));
        let band = S::from_f64_lossy(1e-9)
            .max(S::epsilon() * S::from_f64_lossy(32.0));
        let threshold = max - max * band;
        self.values
            .iter()
            .position(|&v| v >= threshold)
            .unwrap_or(0)
    }
}

/// Counters exposed by the engines.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DecodeStats {
    /// Node-level contraction operations (leaf absorptions plus block
    /// merges) performed by the fast engine.
    pub contractions: u64,
    /// Individual `d x d x d` matrix-product accumulations inside merges.
    pub matmuls: u64,
    /// Cache hits in the fast engine.
    pub cache_hits: u64,
    /// Summed wires promoted to explicit parity links during pushes.
    pub sigma_promotions: u64,
    /// Largest message (entry count) ever materialized.
    pub max_message_entries: u64,
}

/// Decoding knobs shared by both engines.
#[derive(Clone, Copy, Debug)]
pub struct DecodeOptions {
    pub engine: Engine,
    /// Window width; defaults to the family's natural width.
    pub window: Option<usize>,
    /// Cap on open axes a block message may carry.
    pub max_open_axes: usize,
    /// Recycle partial contractions between steps.
    pub use_cache: bool,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        DecodeOptions {
            engine: Engine::Fast,
            window: None,
            max_open_axes: 6,
            use_cache: true,
        }
    }
}

/// Result of a full successive-cancellation pass.
#[derive(Clone, Debug)]
pub struct DecodeResult {
    /// Decoded input word, frozen positions included.
    pub input: Vec<bool>,
    /// Message bits read off the free positions.
    pub message: Vec<bool>,
    pub stats: DecodeStats,
}

/// Record of one decoding step.
#[derive(Clone, Debug)]
pub struct StepRecord<S> {
    /// Window positions, 0-based half-open.
    pub window: std::ops::Range<usize>,
    /// Marginal table over the window's free positions; `None` when the
    /// window was entirely frozen and skipped.
    pub table: Option<StepTable<S>>,
    /// Bits committed for the window, in position order.
    pub decided: Vec<bool>,
}

/// Window-by-window successive-cancellation driver.
pub struct ScDecoder<'a, S: Scalar> {
    spec: &'a CodeSpec,
    circuit: Circuit,
    mpo: &'a Mpo<S>,
    opts: DecodeOptions,
    window: usize,
    state: DecodeState<S>,
    decoded: Vec<bool>,
    pos: usize,
}

impl<'a, S: Scalar> ScDecoder<'a, S> {
    pub fn new(
        spec: &'a CodeSpec,
        mpo: &'a Mpo<S>,
        opts: DecodeOptions,
    ) -> Result<Self, DecodeError> {
        let circuit = spec.circuit();
        if mpo.len() != circuit.block_len() {
            return Err(DecodeError::LengthMismatch {
                circuit: circuit.block_len(),
                mpo: mpo.len(),
            });
        }
        let window = opts.window.unwrap_or_else(|| spec.family.default_window());
        if window == 0 || window > HARD_MAX_WINDOW {
            return Err(DecodeError::WindowTooLarge { len: window, max: HARD_MAX_WINDOW });
        }
        let state = DecodeState::new(&circuit, mpo.bond_dimension(), opts);
        Ok(ScDecoder {
            spec,
            circuit,
            mpo,
            opts,
            window,
            state,
            decoded: Vec::new(),
            pos: 0,
        })
    }

    pub fn finished(&self) -> bool {
        self.pos >= self.circuit.block_len()
    }

    pub fn decoded(&self) -> &[bool] {
        &self.decoded
    }

    pub fn stats(&self) -> DecodeStats {
        self.state.stats()
    }

    /// Decodes the next window.
    pub fn step(&mut self) -> Result<StepRecord<S>, DecodeError> {
        assert!(!self.finished(), "decoding already complete");
        let n = self.circuit.block_len();
        let start = self.pos;
        let end = (start + self.window).min(n);
        let legs: Vec<WindowLeg> = (start..end)
            .map(|p| {
                if self.spec.is_frozen(p) {
                    WindowLeg::Fixed(self.spec.frozen_value)
                } else {
                    WindowLeg::Open
                }
            })
            .collect();
        let open_count = legs.iter().filter(|l| matches!(l, WindowLeg::Open)).count();

        let (table, decided) = if open_count == 0 {
            // Frozen-only window: constraint propagation decides everything.
            let decided: Vec<bool> = legs
                .iter()
                .map(|l| match l {
                    WindowLeg::Fixed(b) => *b,
                    WindowLeg::Open => unreachable!(),
                })
                .collect();
            (None, decided)
        } else {
            let table = match self.opts.engine {
                Engine::Fast => self.state.window_table(&self.circuit, self.mpo, &self.decoded, &legs)?,
                Engine::Sweep => sweep::window_marginal_sweep_constrained(
                    self.mpo,
                    &self.circuit,
                    &self.decoded,
                    &legs,
                )?,
            };
            if table.is_zero() {
                return Err(DecodeError::ZeroMarginal { step: start });
            }
            let best = table.argmax();
            let mut decided = Vec::with_capacity(legs.len());
            let mut open_seen = 0;
            for leg in &legs {
                match leg {
                    WindowLeg::Fixed(b) => decided.push(*b),
                    WindowLeg::Open => {
                        let bit = (best >> (open_count - 1 - open_seen)) & 1 == 1;
                        decided.push(bit);
                        open_seen += 1;
                    }
                }
            }
            (Some(table), decided)
        };

        self.state.commit(&self.circuit, start, &decided)?;
        self.decoded.extend_from_slice(&decided);
        self.pos = end;
        Ok(StepRecord { window: start..end, table, decided })
    }

    /// Runs all remaining steps.
    pub fn run(&mut self) -> Result<DecodeResult, DecodeError> {
        while !self.finished() {
            self.step()?;
        }
        Ok(DecodeResult {
            input: self.decoded.clone(),
            message: self.spec.gather(&self.decoded),
            stats: self.stats(),
        })
    }
}

/// Convenience wrapper: full SC decode of an evidence chain.
pub fn sc_decode<S: Scalar>(
    spec: &CodeSpec,
    mpo: &Mpo<S>,
    opts: DecodeOptions,
) -> Result<DecodeResult, DecodeError> {
    ScDecoder::new(spec, mpo, opts)?.run()
}

/// Fast-engine window marginal with all window positions open.
///
/// `state` carries the per-node message cache; reusing it across steps with
/// growing prefixes recycles partial contractions. A prefix that extends the
/// committed one advances the state; anything else resets and replays.
pub fn window_marginal_fast<S: Scalar>(
    state: &mut DecodeState<S>,
    mpo: &Mpo<S>,
    circuit: &Circuit,
    prefix: &[bool],
    window: usize,
) -> Result<StepTable<S>, DecodeError> {
    if mpo.len() != circuit.block_len() {
        return Err(DecodeError::LengthMismatch {
            circuit: circuit.block_len(),
            mpo: mpo.len(),
        });
    }
    if prefix.len() + window > circuit.block_len() {
        return Err(DecodeError::OutOfRange {
            prefix: prefix.len(),
            window,
            n: circuit.block_len(),
        });
    }
    state.ensure_prefix(circuit, prefix)?;
    let legs = vec![WindowLeg::Open; window];
    state.window_table(circuit, mpo, prefix, &legs)
}
