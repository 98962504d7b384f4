//! Monte Carlo frame-error-rate estimation over Gilbert-Elliott channels.
//!
//! Three regimes are simulated: `base` constructs and decodes as if the
//! channel were memoryless at its average crossover while the noise comes
//! from the true channel; `int` additionally scrambles the noise with a
//! per-frame uniform interleaver; `corr` constructs and decodes with the
//! full correlated structure.
//!
//! Every frame draws its randomness from a counter-derived stream keyed by
//! `(seed, row, frame index)`, and early stopping is evaluated at fixed
//! chunk boundaries, so results are identical for any worker count.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::channel::{ChannelError, FiniteStateChannel, MemorylessChannel};
use crate::code::{CodeError, CodeFamily, CodeSpec};
use crate::construct::{construct_frozen_set, ConstructError, ConstructionMode};
use crate::decoder::{sc_decode, DecodeError, DecodeOptions};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("simulation config: {0}")]
    Config(String),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Code(#[from] CodeError),
    #[error(transparent)]
    Construct(#[from] ConstructError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Decoding/construction regime.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Regime {
    Base,
    Int,
    Corr,
}

impl Regime {
    pub fn name(&self) -> &'static str {
        match self {
            Regime::Base => "base",
            Regime::Int => "int",
            Regime::Corr => "corr",
        }
    }

    pub fn parse(token: &str) -> Option<Self> {
        match token {
            "base" => Some(Regime::Base),
            "int" => Some(Regime::Int),
            "corr" => Some(Regime::Corr),
            _ => None,
        }
    }
}

/// Gilbert-Elliott parameters of a simulation point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeParams {
    pub h_g: f64,
    pub h_b: f64,
    pub p_gb: f64,
    pub p_bg: f64,
}

impl GeParams {
    pub fn channel(&self) -> Result<FiniteStateChannel<f64>, ChannelError> {
        FiniteStateChannel::gilbert_elliott(self.h_g, self.h_b, self.p_gb, self.p_bg)
    }

    pub fn mean_burst(&self) -> f64 {
        1.0 / self.p_bg
    }
}

/// One Monte Carlo point.
#[derive(Clone, Debug)]
pub struct SimConfig {
    pub family: CodeFamily,
    pub n: u32,
    pub k: usize,
    pub channel: GeParams,
    pub regime: Regime,
    pub max_frames: u64,
    pub max_frame_errors: u64,
    pub seed: u64,
    /// Stream id separating rows of a sweep.
    pub stream: u64,
    /// Reuse one interleaver for every frame instead of a fresh one.
    pub fixed_interleaver: bool,
    /// Decode window width; the family default when unset.
    pub window_override: Option<usize>,
}

impl SimConfig {
    pub fn new(family: CodeFamily, n: u32, k: usize, channel: GeParams, regime: Regime) -> Self {
        SimConfig {
            family,
            n,
            k,
            channel,
            regime,
            max_frames: 100_000,
            max_frame_errors: 100,
            seed: 0,
            stream: 0,
            fixed_interleaver: false,
            window_override: None,
        }
    }

    pub fn block_len(&self) -> usize {
        1usize << self.n
    }

    pub fn rate(&self) -> f64 {
        self.k as f64 / self.block_len() as f64
    }
}

/// Point estimate with a 95% Wilson interval.
#[derive(Clone, Debug)]
pub struct FerResult {
    pub frames: u64,
    pub frame_errors: u64,
    pub bit_errors: u64,
    pub fer: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub seconds: f64,
    pub contractions: u64,
}

impl FerResult {
    pub fn undefined(&self) -> bool {
        self.frames == 0
    }
}

/// 95% Wilson score interval for `errors` successes in `frames` trials.
pub fn wilson_interval(errors: u64, frames: u64) -> (f64, f64) {
    if frames == 0 {
        return (f64::NAN, f64::NAN);
    }
    let z = 1.959_963_984_540_054f64;
    let nf = frames as f64;
    let p = errors as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Outcome of one simulated frame.
#[derive(Clone, Copy, Debug, Default)]
pub struct TrialOutcome {
    pub frame_error: bool,
    pub bit_errors: u32,
    pub contractions: u64,
}

/// Accumulated totals of a Monte Carlo run.
#[derive(Clone, Copy, Debug, Default)]
pub struct MonteCarloTotals {
    pub frames: u64,
    pub frame_errors: u64,
    pub bit_errors: u64,
    pub contractions: u64,
}

const CHUNK: u64 = 128;

/// Runs trials in fixed-size parallel chunks until the frame budget or the
/// frame-error budget is hit. Stopping is decided at chunk boundaries from
/// totals only, so the set of frames run is worker-independent.
pub fn run_monte_carlo(
    max_frames: u64,
    max_frame_errors: u64,
    trial: impl Fn(u64) -> TrialOutcome + Sync,
) -> MonteCarloTotals {
    let mut totals = MonteCarloTotals::default();
    let mut next = 0u64;
    while next < max_frames {
        let hi = (next + CHUNK).min(max_frames);
        let outcomes: Vec<TrialOutcome> = (next..hi).into_par_iter().map(&trial).collect();
        for o in outcomes {
            totals.frames += 1;
            totals.frame_errors += o.frame_error as u64;
            totals.bit_errors += o.bit_errors as u64;
            totals.contractions += o.contractions;
        }
        next = hi;
        if totals.frame_errors >= max_frame_errors {
            break;
        }
    }
    totals
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent random stream for one frame of one row.
pub fn frame_rng(seed: u64, stream: u64, frame: u64) -> ChaCha12Rng {
    let key = splitmix(seed ^ splitmix(stream) ^ splitmix(frame.wrapping_mul(0x9e37_79b9_7f4a_7c15)));
    ChaCha12Rng::seed_from_u64(key)
}

/// Runs `f` inside a rayon pool with `workers` threads (0 = library
/// default).
pub fn with_worker_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> T {
    if workers == 0 {
        return f();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("worker pool");
    pool.install(f)
}

/// Everything a frame needs, built once per point.
struct TrialCtx {
    spec: CodeSpec,
    true_channel: FiniteStateChannel<f64>,
    decode_channel: FiniteStateChannel<f64>,
    regime: Regime,
    opts: DecodeOptions,
    fixed_perm: Option<Vec<usize>>,
}

/// Builds the regime-matching code for a point.
pub fn construct_for(cfg: &SimConfig) -> Result<CodeSpec, SimError> {
    let channel = cfg.channel.channel()?;
    let mode = match cfg.regime {
        Regime::Corr => ConstructionMode::Corr,
        Regime::Base | Regime::Int => ConstructionMode::Iid,
    };
    Ok(construct_frozen_set(cfg.family, cfg.n, cfg.k, &channel, mode)?)
}

fn build_ctx(cfg: &SimConfig, spec: CodeSpec) -> Result<TrialCtx, SimError> {
    let true_channel = cfg.channel.channel()?;
    let decode_channel = match cfg.regime {
        Regime::Corr => true_channel.clone(),
        Regime::Base | Regime::Int => {
            let avg = true_channel.average_crossover()?;
            FiniteStateChannel::lift_memoryless(&MemorylessChannel::bsc(avg)?)
        }
    };
    let fixed_perm = if cfg.fixed_interleaver && cfg.regime == Regime::Int {
        let mut rng = frame_rng(cfg.seed, cfg.stream, u64::MAX);
        let mut perm: Vec<usize> = (0..cfg.block_len()).collect();
        perm.shuffle(&mut rng);
        Some(perm)
    } else {
        None
    };
    Ok(TrialCtx {
        spec,
        true_channel,
        decode_channel,
        regime: cfg.regime,
        opts: DecodeOptions { window: cfg.window_override, ..DecodeOptions::default() },
        fixed_perm,
    })
}

/// Simulates one frame: draw a message, transmit per the regime, decode,
/// compare.
fn run_trial(ctx: &TrialCtx, rng: &mut ChaCha12Rng) -> Result<TrialOutcome, SimError> {
    let k = ctx.spec.message_len();
    let n_bits = ctx.spec.block_len();
    let message: Vec<bool> = (0..k).map(|_| rng.gen()).collect();
    let x = ctx.spec.encode(&message)?;

    let y_decode = match ctx.regime {
        Regime::Base | Regime::Corr => ctx.true_channel.sample_transmission(&x, rng).y,
        Regime::Int => {
            let perm: Vec<usize> = match &ctx.fixed_perm {
                Some(p) => p.clone(),
                None => {
                    let mut p: Vec<usize> = (0..n_bits).collect();
                    p.shuffle(rng);
                    p
                }
            };
            // Position i of the codeword is transmitted in slot perm[i].
            let mut sent = vec![false; n_bits];
            for (i, &slot) in perm.iter().enumerate() {
                sent[slot] = x[i];
            }
            let received = ctx.true_channel.sample_transmission(&sent, rng).y;
            let mut y = vec![false; n_bits];
            for (i, &slot) in perm.iter().enumerate() {
                y[i] = received[slot];
            }
            y
        }
    };

    let mpo = ctx.decode_channel.evidence_mpo(&y_decode);
    let result = sc_decode(&ctx.spec, &mpo, ctx.opts)?;
    let bit_errors = result
        .message
        .iter()
        .zip(&message)
        .filter(|(a, b)| a != b)
        .count() as u32;
    Ok(TrialOutcome {
        frame_error: bit_errors > 0,
        bit_errors,
        contractions: result.stats.contractions,
    })
}

/// Estimates the frame error rate of one point.
pub fn estimate_fer(cfg: &SimConfig) -> Result<FerResult, SimError> {
    let spec = construct_for(cfg)?;
    estimate_fer_with_spec(cfg, spec)
}

/// As [`estimate_fer`] with a pre-built code (sweeps reuse constructions).
pub fn estimate_fer_with_spec(cfg: &SimConfig, spec: CodeSpec) -> Result<FerResult, SimError> {
    if spec.message_len() != cfg.k {
        return Err(SimError::Config(format!(
            "code carries k={}, point wants k={}",
            spec.message_len(),
            cfg.k
        )));
    }
    let ctx = build_ctx(cfg, spec)?;
    let start = Instant::now();
    let totals = run_monte_carlo(cfg.max_frames, cfg.max_frame_errors, |frame| {
        let mut rng = frame_rng(cfg.seed, cfg.stream, frame);
        run_trial(&ctx, &mut rng).expect("frame simulation")
    });
    let seconds = start.elapsed().as_secs_f64();
    let (ci_lo, ci_hi) = wilson_interval(totals.frame_errors, totals.frames);
    let fer = if totals.frames == 0 {
        f64::NAN
    } else {
        totals.frame_errors as f64 / totals.frames as f64
    };
    Ok(FerResult {
        frames: totals.frames,
        frame_errors: totals.frame_errors,
        bit_errors: totals.bit_errors,
        fer,
        ci_lo,
        ci_hi,
        seconds,
        contractions: totals.contractions,
    })
}

/// Gilbert channel columns swept in the burst-length experiments
/// (`rho = 5`, `hG = 0`, `hB = 0.9` throughout): nominal mean burst length,
/// `P(B->G)`, `P(G->B)`.
///
/// The printed source table lists `P(B->G) = 0.750` in the fourth column,
/// inconsistent with its own burst length 13 and `rho = 5`; the sweep ships
/// the consistent 0.075.
pub const GILBERT_SWEEP_ROWS: [(f64, f64, f64); 6] = [
    (2.4, 0.400, 0.080),
    (4.0, 0.250, 0.050),
    (7.0, 0.145, 0.029),
    (13.0, 0.075, 0.015),
    (20.0, 0.050, 0.010),
    (40.0, 0.025, 0.005),
];

/// Channel used in the rate-1/3 depth sweep.
pub const FIG2B_CHANNEL: GeParams = GeParams { h_g: 0.0, h_b: 0.9, p_gb: 0.01, p_bg: 0.05 };

fn ge_row(p_bg: f64, p_gb: f64) -> GeParams {
    GeParams { h_g: 0.0, h_b: 0.9, p_gb, p_bg }
}

/// Built-in sweep grids.
pub fn preset_grid(name: &str) -> Option<Vec<SimConfig>> {
    let families = [CodeFamily::Polar, CodeFamily::ConvPolar];
    match name {
        // Burst-length sweep at n=10, rate 1/2, all regimes.
        "fig2a" => {
            let mut rows = Vec::new();
            for &(_, p_bg, p_gb) in &GILBERT_SWEEP_ROWS {
                for family in families {
                    for regime in [Regime::Base, Regime::Int, Regime::Corr] {
                        rows.push(SimConfig::new(family, 10, 512, ge_row(p_bg, p_gb), regime));
                    }
                }
            }
            Some(rows)
        }
        // Depth sweep at rate 1/3 (k rounded), correlated decoding only.
        "fig2b" => {
            let mut rows = Vec::new();
            for family in families {
                for n in 4..=10u32 {
                    let n_bits = 1usize << n;
                    let k = ((n_bits as f64) / 3.0).round() as usize;
                    rows.push(SimConfig::new(family, n, k, FIG2B_CHANNEL, Regime::Corr));
                }
            }
            Some(rows)
        }
        // Burst-length sweep at several depths, correlated decoding,
        // rate 1/2; polar then convolutional polar.
        "fig2cd" => {
            let mut rows = Vec::new();
            for family in families {
                for n in [6u32, 8, 10] {
                    for &(_, p_bg, p_gb) in &GILBERT_SWEEP_ROWS {
                        let k = 1usize << (n - 1);
                        rows.push(SimConfig::new(family, n, k, ge_row(p_bg, p_gb), Regime::Corr));
                    }
                }
            }
            Some(rows)
        }
        _ => None,
    }
}

/// Parses a plain-text grid: one row per line of whitespace-separated
/// `key=value` tokens (`family n k regime hG hB pGB pBG [frames] [errors]`),
/// `#` comments.
pub fn parse_grid(text: &str) -> Result<Vec<SimConfig>, SimError> {
    let mut rows = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut kv = HashMap::new();
        for token in line.split_whitespace() {
            let (key, value) = token.split_once('=').ok_or_else(|| {
                SimError::Config(format!("line {}: expected key=value, got {token:?}", lineno + 1))
            })?;
            kv.insert(key.to_string(), value.to_string());
        }
        let get = |key: &str| -> Result<String, SimError> {
            kv.get(key)
                .cloned()
                .ok_or_else(|| SimError::Config(format!("line {}: missing {key}", lineno + 1)))
        };
        let parse_f = |key: &str| -> Result<f64, SimError> {
            get(key)?.parse().map_err(|_| {
                SimError::Config(format!("line {}: bad number for {key}", lineno + 1))
            })
        };
        let family = CodeFamily::parse(&get("family")?)?;
        let n: u32 = get("n")?
            .parse()
            .map_err(|_| SimError::Config(format!("line {}: bad n", lineno + 1)))?;
        let k: usize = get("k")?
            .parse()
            .map_err(|_| SimError::Config(format!("line {}: bad k", lineno + 1)))?;
        let regime = Regime::parse(&get("regime")?)
            .ok_or_else(|| SimError::Config(format!("line {}: bad regime", lineno + 1)))?;
        let channel = GeParams {
            h_g: parse_f("hG")?,
            h_b: parse_f("hB")?,
            p_gb: parse_f("pGB")?,
            p_bg: parse_f("pBG")?,
        };
        let mut cfg = SimConfig::new(family, n, k, channel, regime);
        if kv.contains_key("frames") {
            cfg.max_frames = get("frames")?
                .parse()
                .map_err(|_| SimError::Config(format!("line {}: bad frames", lineno + 1)))?;
        }
        if kv.contains_key("errors") {
            cfg.max_frame_errors = get("errors")?
                .parse()
                .map_err(|_| SimError::Config(format!("line {}: bad errors", lineno + 1)))?;
        }
        if k > 1usize << n {
            return Err(SimError::Config(format!("line {}: k exceeds block", lineno + 1)));
        }
        rows.push(cfg);
    }
    Ok(rows)
}

/// Grid rows in the format accepted by [`parse_grid`].
pub fn grid_to_string(rows: &[SimConfig]) -> String {
    let mut out = String::new();
    for cfg in rows {
        let _ = writeln!(
            out,
            "family={} n={} k={} regime={} hG={} hB={} pGB={} pBG={} frames={} errors={}",
            cfg.family.short(),
            cfg.n,
            cfg.k,
            cfg.regime.name(),
            cfg.channel.h_g,
            cfg.channel.h_b,
            cfg.channel.p_gb,
            cfg.channel.p_bg,
            cfg.max_frames,
            cfg.max_frame_errors,
        );
    }
    out
}

pub const CSV_HEADER: &str = "family,n,rate,regime,hG,hB,pGB,pBG,mean_burst,frames,frame_errors,bit_errors,fer,ci_lo,ci_hi,seed,seconds";

fn fmt_prob(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v:.6e}")
    }
}

/// One CSV row; wall time is reported only when `timing` is on so that the
/// default output is byte-reproducible.
pub fn csv_row(cfg: &SimConfig, res: &FerResult, timing: bool) -> String {
    let seconds = if timing { format!("{:.3}", res.seconds) } else { "0.000".to_string() };
    format!(
        "{},{},{:.6},{},{},{},{},{},{:.6},{},{},{},{},{},{},{},{}",
        cfg.family.short(),
        cfg.n,
        cfg.rate(),
        cfg.regime.name(),
        cfg.channel.h_g,
        cfg.channel.h_b,
        cfg.channel.p_gb,
        cfg.channel.p_bg,
        cfg.channel.mean_burst(),
        res.frames,
        res.frame_errors,
        res.bit_errors,
        fmt_prob(res.fer),
        fmt_prob(res.ci_lo),
        fmt_prob(res.ci_hi),
        cfg.seed,
        seconds,
    )
}

/// Result of a sweep: the CSV body and a human-readable ordering summary.
pub struct SweepOutcome {
    pub csv: String,
    pub summary: String,
}

/// Runs every row of a grid, reusing constructions across rows, and
/// summarizes the regime ordering per (family, channel, n) group. Row
/// failures are reported in the summary and yield an empty-count row.
pub fn run_sweep(rows: &[SimConfig], base_seed: u64, timing: bool) -> SweepOutcome {
    #[derive(PartialEq, Eq, Hash)]
    struct SpecKey {
        family: CodeFamily,
        n: u32,
        k: usize,
        params: [u64; 4],
        mode: ConstructionMode,
    }
    let mut spec_cache: HashMap<SpecKey, CodeSpec> = HashMap::new();
    let mut csv = String::from(CSV_HEADER);
    csv.push('\n');
    let mut results: Vec<Option<(SimConfig, FerResult)>> = Vec::new();
    let mut summary = String::new();

    for (idx, row) in rows.iter().enumerate() {
        let mut cfg = row.clone();
        cfg.seed = base_seed;
        cfg.stream = idx as u64;
        let key = SpecKey {
            family: cfg.family,
            n: cfg.n,
            k: cfg.k,
            params: [
                cfg.channel.h_g.to_bits(),
                cfg.channel.h_b.to_bits(),
                cfg.channel.p_gb.to_bits(),
                cfg.channel.p_bg.to_bits(),
            ],
            mode: match cfg.regime {
                Regime::Corr => ConstructionMode::Corr,
                _ => ConstructionMode::Iid,
            },
        };
        let spec = match spec_cache.get(&key) {
            Some(s) => Ok(s.clone()),
            None => construct_for(&cfg).map(|s| {
                spec_cache.insert(key, s.clone());
                s
            }),
        };
        let outcome = spec.and_then(|s| estimate_fer_with_spec(&cfg, s));
        match outcome {
            Ok(res) => {
                csv.push_str(&csv_row(&cfg, &res, timing));
                csv.push('\n');
                results.push(Some((cfg, res)));
            }
            Err(err) => {
                let empty = FerResult {
                    frames: 0,
                    frame_errors: 0,
                    bit_errors: 0,
                    fer: f64::NAN,
                    ci_lo: f64::NAN,
                    ci_hi: f64::NAN,
                    seconds: 0.0,
                    contractions: 0,
                };
                csv.push_str(&csv_row(&cfg, &empty, timing));
                csv.push('\n');
                let _ = writeln!(summary, "row {idx} failed: {err}");
                results.push(None);
            }
        }
    }

    // Regime ordering per (family, channel, n).
    let mut groups: HashMap<(CodeFamily, u64, u64, u64, u64, u32), Vec<(Regime, FerResult)>> =
        HashMap::new();
    for entry in results.iter().flatten() {
        let (cfg, res) = entry;
        let key = (
            cfg.family,
            cfg.channel.h_g.to_bits(),
            cfg.channel.h_b.to_bits(),
            cfg.channel.p_gb.to_bits(),
            cfg.channel.p_bg.to_bits(),
            cfg.n,
        );
        groups.entry(key).or_default().push((cfg.regime, res.clone()));
    }
    let mut keys: Vec<_> = groups.keys().cloned().collect();
    keys.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for key in keys {
        let entries = &groups[&key];
        let find = |r: Regime| entries.iter().find(|(reg, _)| *reg == r).map(|(_, res)| res);
        if let (Some(base), Some(corr)) = (find(Regime::Base), find(Regime::Corr)) {
            let family = key.0;
            let burst = 1.0 / f64::from_bits(key.4);
            let int_part = find(Regime::Int)
                .map(|r| format!(" int {}", fmt_prob(r.fer)))
                .unwrap_or_default();
            let verdict = if corr.fer < base.fer {
                if corr.ci_hi >= base.ci_lo {
                    "[corr<base, CIs overlap]"
                } else {
                    "[corr<base OK]"
                }
            } else {
                "[WARN corr !< base]"
            };
            let _ = writeln!(
                summary,
                "{} lB={:.1} n={}: base {}{} corr {} {}",
                family.short(),
                burst,
                key.5,
                fmt_prob(base.fer),
                int_part,
                fmt_prob(corr.fer),
                verdict,
            );
        }
    }
    SweepOutcome { csv, summary }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_matches_hand_values() {
        let (lo, hi) = wilson_interval(5, 10);
        assert!((lo - 0.236_6).abs() < 5e-4, "{lo}");
        assert!((hi - 0.763_4).abs() < 5e-4, "{hi}");
        let (lo, hi) = wilson_interval(0, 10);
        assert_eq!(lo, 0.0);
        assert!((hi - 0.277_5).abs() < 5e-4, "{hi}");
        assert!(wilson_interval(0, 0).0.is_nan());
    }

    #[test]
    fn interval_contains_point_estimate() {
        for (e, f) in [(0u64, 5u64), (3, 7), (100, 100), (17, 1000)] {
            let (lo, hi) = wilson_interval(e, f);
            let p = e as f64 / f as f64;
            assert!(lo <= p + 1e-12 && p <= hi + 1e-12);
        }
    }

    #[test]
    fn coin_flip_pseudo_decoder_calibrates_the_harness() {
        let totals = run_monte_carlo(10_000, u64::MAX, |frame| {
            let mut rng = frame_rng(7, 0, frame);
            let flip: bool = rng.gen();
            TrialOutcome { frame_error: flip, bit_errors: flip as u32, contractions: 0 }
        });
        assert_eq!(totals.frames, 10_000);
        let fer = totals.frame_errors as f64 / totals.frames as f64;
        let (lo, hi) = wilson_interval(totals.frame_errors, totals.frames);
        assert!(lo <= 0.5 && 0.5 <= hi, "fer={fer} interval=({lo},{hi})");
    }

    #[test]
    fn zero_budget_is_flagged() {
        let cfg = SimConfig::new(
            CodeFamily::Polar,
            2,
            2,
            GeParams { h_g: 0.0, h_b: 0.9, p_gb: 0.01, p_bg: 0.05 },
            Regime::Corr,
        );
        let mut cfg = cfg;
        cfg.max_frames = 0;
        let res = estimate_fer(&cfg).unwrap();
        assert!(res.undefined());
        assert!(res.fer.is_nan());
    }

    #[test]
    fn noiseless_channel_never_errs() {
        for regime in [Regime::Base, Regime::Int, Regime::Corr] {
            let mut cfg = SimConfig::new(
                CodeFamily::Polar,
                3,
                4,
                GeParams { h_g: 0.0, h_b: 0.0, p_gb: 0.3, p_bg: 0.4 },
                regime,
            );
            cfg.max_frames = 1000;
            cfg.max_frame_errors = 1;
            cfg.seed = 3;
            let res = estimate_fer(&cfg).unwrap();
            assert_eq!(res.frame_errors, 0, "{regime:?}");
            assert_eq!(res.frames, 1000);
        }
    }

    #[test]
    fn early_stopping_respects_chunks() {
        // An always-erring trial stops after the first chunk.
        let totals = run_monte_carlo(10_000, 10, |_| TrialOutcome {
            frame_error: true,
            bit_errors: 1,
            contractions: 0,
        });
        assert_eq!(totals.frames, CHUNK);
        assert_eq!(totals.frame_errors, CHUNK);
    }

    #[test]
    fn identical_seed_is_worker_independent() {
        let mut cfg = SimConfig::new(
            CodeFamily::Polar,
            4,
            8,
            GeParams { h_g: 0.0, h_b: 0.9, p_gb: 0.05, p_bg: 0.25 },
            Regime::Corr,
        );
        cfg.max_frames = 256;
        cfg.max_frame_errors = u64::MAX;
        cfg.seed = 11;
        let a = with_worker_pool(1, || estimate_fer(&cfg).unwrap());
        let b = with_worker_pool(4, || estimate_fer(&cfg).unwrap());
        assert_eq!(a.frames, b.frames);
        assert_eq!(a.frame_errors, b.frame_errors);
        assert_eq!(a.bit_errors, b.bit_errors);
        assert_eq!(csv_row(&cfg, &a, false), csv_row(&cfg, &b, false));
    }

    #[test]
    fn interleaving_memoryless_noise_changes_nothing() {
        // With hG = hB the noise is exchangeable, so base and int must give
        // overlapping intervals.
        let channel = GeParams { h_g: 0.12, h_b: 0.12, p_gb: 0.02, p_bg: 0.1 };
        let mut results = Vec::new();
        for regime in [Regime::Base, Regime::Int] {
            let mut cfg = SimConfig::new(CodeFamily::Polar, 4, 8, channel, regime);
            cfg.max_frames = 4000;
            cfg.max_frame_errors = u64::MAX;
            cfg.seed = 5;
            results.push(estimate_fer(&cfg).unwrap());
        }
        let (a, b) = (&results[0], &results[1]);
        assert!(
            a.ci_lo <= b.ci_hi && b.ci_lo <= a.ci_hi,
            "base ({}, {}) vs int ({}, {})",
            a.ci_lo,
            a.ci_hi,
            b.ci_lo,
            b.ci_hi
        );
    }

    #[test]
    fn preset_grids_have_expected_shapes() {
        assert_eq!(preset_grid("fig2a").unwrap().len(), 36);
        assert_eq!(preset_grid("fig2b").unwrap().len(), 14);
        assert_eq!(preset_grid("fig2cd").unwrap().len(), 36);
        assert!(preset_grid("nope").is_none());
        // Rate-1/3 points round k.
        let fig2b = preset_grid("fig2b").unwrap();
        assert_eq!(fig2b[0].k, 5); // n=4
        assert!(fig2b.iter().all(|c| c.regime == Regime::Corr));
    }

    #[test]
    fn grid_text_round_trips() {
        let rows = preset_grid("fig2b").unwrap();
        let text = grid_to_string(&rows);
        let back = parse_grid(&text).unwrap();
        assert_eq!(back.len(), rows.len());
        for (a, b) in rows.iter().zip(&back) {
            assert_eq!(a.family, b.family);
            assert_eq!(a.n, b.n);
            assert_eq!(a.k, b.k);
            assert_eq!(a.regime, b.regime);
            assert_eq!(a.channel, b.channel);
        }
        assert!(parse_grid("family=pc n=2").is_err());
        assert!(parse_grid("family=pc n=2 k=9 regime=corr hG=0 hB=0.9 pGB=0.1 pBG=0.1").is_err());
        assert!(parse_grid("# comment only\n").unwrap().is_empty());
    }

    #[test]
    fn empty_grid_yields_header_only_csv() {
        let out = run_sweep(&[], 1, false);
        assert_eq!(out.csv, format!("{CSV_HEADER}\n"));
    }
}
