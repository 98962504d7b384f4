//! Self-check suites behind the `verify` CLI subcommand.
//!
//! `quick` runs the gate identities, chain normalization and small-block
//! engine equivalences; `full` adds mid-size cross-engine checks and the
//! contraction-count scaling fit.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::channel::{FiniteStateChannel, MemorylessChannel};
use crate::code::{gf2_rank, Circuit, CodeFamily, CodeSpec};
use crate::construct::{construct_frozen_set, ConstructionMode};
use crate::decoder::{
    brute_force_marginal, sc_decode, window_marginal_sweep_constrained, DecodeOptions, ScDecoder,
    WindowLeg,
};
use crate::tensor::{consts, outer, Tensor};

#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn pass(name: &str, detail: String) -> Self {
        CheckResult { name: name.to_string(), passed: true, detail }
    }

    fn fail(name: &str, detail: String) -> Self {
        CheckResult { name: name.to_string(), passed: false, detail }
    }

    fn from(name: &str, result: Result<String, String>) -> Self {
        match result {
            Ok(detail) => Self::pass(name, detail),
            Err(detail) => Self::fail(name, detail),
        }
    }
}

/// Gate-tensor identities, bit-exact: summing both outputs gives the
/// all-ones table, summing the xor output leaves an identity wire times
/// ones, and fixing both inputs yields the point pair `(a, a^b)`.
pub fn cnot_identities_hold(t: &Tensor<f64>) -> bool {
    if t.dims() != [2, 2, 2, 2] {
        return false;
    }
    let both = t.sum_index(3).and_then(|s| s.sum_index(2));
    match both {
        Ok(s) if s == outer(&consts::ones::<f64>(2), &consts::ones::<f64>(2)) => {}
        _ => return false,
    }
    match t.sum_index(3) {
        Ok(s) => {
            for a in 0..2usize {
                for b in 0..2usize {
                    for c in 0..2usize {
                        let expected = if a == c { 1.0 } else { 0.0 };
                        if s.get(&[a, b, c]) != expected {
                            return false;
                        }
                    }
                }
            }
        }
        Err(_) => return false,
    }
    for a in 0..2usize {
        for b in 0..2usize {
            let fixed = t.fix_index(0, a).and_then(|s| s.fix_index(0, b));
            let expected = outer(&consts::point::<f64>(a == 1), &consts::point::<f64>((a ^ b) == 1));
            match fixed {
                Ok(s) if s == expected => {}
                _ => return false,
            }
        }
    }
    true
}

fn random_channel(rng: &mut StdRng, d: usize) -> FiniteStateChannel<f64> {
    let states: Vec<[[f64; 2]; 2]> = (0..d)
        .map(|_| {
            let h = rng.gen_range(0.05..0.45);
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
    let mut init = vec![0.0; d];
    init[0] = 1.0;
    let tmp = FiniteStateChannel::new(states.clone(), q.clone(), init).unwrap();
    let pi = tmp.stationary().unwrap();
    FiniteStateChannel::new(states, q, pi).unwrap()
}

fn random_spec(rng: &mut StdRng, family: CodeFamily, n: u32) -> CodeSpec {
    let n_bits = 1usize << n;
    let frozen: Vec<usize> = (0..n_bits).filter(|_| rng.gen_bool(0.5)).collect();
    CodeSpec::new(family, n, frozen).unwrap()
}

/// Drives a full decode comparing the fast engine against references at
/// every step; returns the largest table deviation seen.
fn cross_engine_decode(
    spec: &CodeSpec,
    channel: &FiniteStateChannel<f64>,
    y: &[bool],
    window: usize,
    against_brute: bool,
) -> Result<f64, String> {
    let mpo = channel.evidence_mpo(y);
    let opts = DecodeOptions { window: Some(window), ..DecodeOptions::default() };
    let mut fast = ScDecoder::new(spec, &mpo, opts).map_err(|e| e.to_string())?;
    let circuit = spec.circuit();
    let mut worst = 0.0f64;
    while !fast.finished() {
        let prefix = fast.decoded().to_vec();
        let record = fast.step().map_err(|e| e.to_string())?;
        if let Some(table) = &record.table {
            let legs: Vec<WindowLeg> = record
                .window
                .clone()
                .map(|p| {
                    if spec.is_frozen(p) {
                        WindowLeg::Fixed(spec.frozen_value)
                    } else {
                        WindowLeg::Open
                    }
                })
                .collect();
            let sweep = window_marginal_sweep_constrained(&mpo, &circuit, &prefix, &legs)
                .map_err(|e| e.to_string())?;
            worst = worst.max(table.rel_diff(&sweep));
            if against_brute {
                let brute = brute_force_marginal(spec, channel, y, &prefix, &legs)
                    .map_err(|e| e.to_string())?;
                worst = worst.max(table.rel_diff(&brute));
            }
        }
    }
    Ok(worst)
}

fn check_identities() -> Result<String, String> {
    let t = consts::cnot::<f64>();
    if !cnot_identities_hold(&t) {
        return Err("gate identities violated".into());
    }
    // A corrupted tensor must be caught.
    let mut bad = t.clone();
    bad.set(&[0, 1, 0, 1], -1.0);
    if cnot_identities_hold(&bad) {
        return Err("corrupted gate tensor not detected".into());
    }
    Ok("gate identities exact; mutation detected".into())
}

fn check_normalization() -> Result<String, String> {
    let ge: FiniteStateChannel<f64> = FiniteStateChannel::gilbert_elliott(0.0, 0.9, 0.01, 0.05)
        .map_err(|e| e.to_string())?;
    let n = 6usize;
    for code in 0..(1usize << n) {
        let x: Vec<bool> = (0..n).map(|i| (code >> (n - 1 - i)) & 1 == 1).collect();
        let mut total = 0.0;
        for ycode in 0..(1usize << n) {
            let y: Vec<bool> = (0..n).map(|i| (ycode >> (n - 1 - i)) & 1 == 1).collect();
            total += ge.likelihood(&x, &y).map_err(|e| e.to_string())?;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(format!("sum over outputs is {total} for input {code:06b}"));
        }
    }
    let mut rng = StdRng::seed_from_u64(97);
    let d3 = random_channel(&mut rng, 3);
    let chain = d3.error_mpo(n).map_err(|e| e.to_string())?;
    let all = chain.contract_legs(&vec![crate::channel::LegResolve::SumOut; n]);
    let total: f64 = all.to_f64();
    if (total - 1.0).abs() > 1e-12 {
        return Err(format!("error chain mass is {total}"));
    }
    Ok("chain normalization within 1e-12".into())
}

fn check_small_oracles() -> Result<String, String> {
    let mut rng = StdRng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for family in [CodeFamily::Polar, CodeFamily::ConvPolar] {
        for n in [2u32, 3] {
            for d in [1usize, 2, 3] {
                let channel = random_channel(&mut rng, d);
                let spec = random_spec(&mut rng, family, n);
                let n_bits = spec.block_len();
                for _ in 0..3 {
                    let y: Vec<bool> = (0..n_bits).map(|_| rng.gen()).collect();
                    let window = family.default_window();
                    worst = worst.max(cross_engine_decode(&spec, &channel, &y, window, true)?);
                }
            }
        }
    }
    if worst > 1e-9 {
        return Err(format!("worst table deviation {worst:.3e}"));
    }
    Ok(format!("worst table deviation {worst:.3e}"))
}

fn check_encoders() -> Result<String, String> {
    for family in [CodeFamily::Polar, CodeFamily::ConvPolar] {
        for n in 1..=4u32 {
            let c = Circuit::for_family(family, n);
            let m = c.gf2_matrix();
            if gf2_rank(&m) != c.block_len() {
                return Err(format!("{family:?} n={n} transform is singular"));
            }
        }
    }
    Ok("transforms invertible up to n=4".into())
}

fn check_noiseless_round_trip() -> Result<String, String> {
    let mut rng = StdRng::seed_from_u64(103);
    let noiseless = FiniteStateChannel::lift_memoryless(
        &MemorylessChannel::bsc(0.0).map_err(|e| e.to_string())?,
    );
    for family in [CodeFamily::Polar, CodeFamily::ConvPolar] {
        let spec = construct_frozen_set(family, 6, 32, &noiseless, ConstructionMode::Iid)
            .map_err(|e| e.to_string())?;
        for _ in 0..5 {
            let message: Vec<bool> = (0..spec.message_len()).map(|_| rng.gen()).collect();
            let x = spec.encode(&message).map_err(|e| e.to_string())?;
            let mpo = noiseless.evidence_mpo(&x);
            let out = sc_decode(&spec, &mpo, DecodeOptions::default()).map_err(|e| e.to_string())?;
            if out.message != message {
                return Err(format!("{family:?}: noiseless round trip failed"));
            }
        }
    }
    Ok("noiseless round trips at N=64".into())
}

fn check_mid_size_engines() -> Result<String, String> {
    let mut rng = StdRng::seed_from_u64(107);
    let mut worst = 0.0f64;
    for family in [CodeFamily::Polar, CodeFamily::ConvPolar] {
        let channel = random_channel(&mut rng, 3);
        let spec = random_spec(&mut rng, family, 6);
        for _ in 0..10 {
            let y: Vec<bool> = (0..64).map(|_| rng.gen()).collect();
            worst = worst.max(cross_engine_decode(
                &spec,
                &channel,
                &y,
                family.default_window(),
                false,
            )?);
        }
    }
    if worst > 1e-9 {
        return Err(format!("worst table deviation {worst:.3e}"));
    }
    Ok(format!("worst table deviation {worst:.3e}"))
}

fn check_contraction_scaling() -> Result<String, String> {
    let mut rng = StdRng::seed_from_u64(109);
    let channel = random_channel(&mut rng, 2);
    let mut ratios = Vec::new();
    for n in [6u32, 7, 8, 9, 10] {
        let n_bits = 1usize << n;
        let spec = CodeSpec::new(CodeFamily::Polar, n, vec![]).unwrap();
        let y: Vec<bool> = (0..n_bits).map(|_| rng.gen()).collect();
        let mpo = channel.evidence_mpo(&y);
        let out = sc_decode(&spec, &mpo, DecodeOptions::default()).map_err(|e| e.to_string())?;
        ratios.push(out.stats.contractions as f64 / (n_bits as f64 * n as f64));
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    for (i, r) in ratios.iter().enumerate() {
        if (r - mean).abs() > 0.2 * mean {
            return Err(format!(
                "count ratio {r:.3} at point {i} deviates from mean {mean:.3} by >20%"
            ));
        }
    }
    Ok(format!("count / (N log2 N) stable at {mean:.3}"))
}

/// Fast checks: gate identities, normalization, small-block oracle
/// equivalence, encoder sanity, noiseless round trips.
pub fn run_quick() -> Vec<CheckResult> {
    vec![
        CheckResult::from("gate-identities", check_identities()),
        CheckResult::from("chain-normalization", check_normalization()),
        CheckResult::from("oracle-equivalence-small", check_small_oracles()),
        CheckResult::from("encoder-invertibility", check_encoders()),
        CheckResult::from("noiseless-round-trip", check_noiseless_round_trip()),
    ]
}

/// Quick checks plus mid-size engine equivalence and the contraction-count
/// scaling fit.
pub fn run_full() -> Vec<CheckResult> {
    let mut checks = run_quick();
    checks.push(CheckResult::from("engine-equivalence-n64", check_mid_size_engines()));
    checks.push(CheckResult::from("contraction-scaling", check_contraction_scaling()));
    checks
}
