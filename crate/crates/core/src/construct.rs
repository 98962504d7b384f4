//! Frozen-set construction.
//!
//! For each input position the construction evaluates the probability that
//! the position carries the first undetected error: all earlier inputs held
//! at 0, the position itself at 1, all later inputs summed, against the
//! additive-error transfer chain. The positions with the largest such
//! probability are frozen.
//!
//! The evaluation reuses the fast decoding engine with the error chain in
//! place of an evidence chain, so a full profile costs one decoding pass.

use thiserror::Error;

use crate::channel::{ChannelError, FiniteStateChannel, MemorylessChannel, Mpo};
use crate::code::{Circuit, CodeError, CodeFamily, CodeSpec};
use crate::decoder::{DecodeError, DecodeOptions, DecodeState, WindowLeg};
use crate::scaled::Scaled;
use crate::Scalar;

#[derive(Debug, Error)]
pub enum ConstructError {
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Code(#[from] CodeError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error("k={k} exceeds block length {n}")]
    RateTooHigh { k: usize, n: usize },
}

/// Which error statistics drive the frozen-set choice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ConstructionMode {
    /// Memoryless proxy at the channel's average crossover probability.
    Iid,
    /// The full correlated error chain.
    Corr,
}

impl ConstructionMode {
    pub fn name(&self) -> &'static str {
        match self {
            ConstructionMode::Iid => "iid",
            ConstructionMode::Corr => "corr",
        }
    }

    pub fn parse(token: &str) -> Option<Self> {
        match token {
            "iid" => Some(ConstructionMode::Iid),
            "corr" => Some(ConstructionMode::Corr),
            _ => None,
        }
    }
}

/// First-undetected-error probability of every input position, one fast
/// pass over the error chain.
pub fn first_error_profile<S: Scalar>(
    circuit: &Circuit,
    error_chain: &Mpo<S>,
) -> Result<Vec<Scaled<S>>, DecodeError> {
    let n_bits = circuit.block_len();
    if error_chain.len() != n_bits {
        return Err(DecodeError::LengthMismatch { circuit: n_bits, mpo: error_chain.len() });
    }
    let mut state = DecodeState::new(circuit, error_chain.bond_dimension(), DecodeOptions::default());
    let mut zeros: Vec<bool> = Vec::with_capacity(n_bits);
    let mut profile = Vec::with_capacity(n_bits);
    for i in 0..n_bits {
        let table = state.window_table(circuit, error_chain, &zeros, &[WindowLeg::Fixed(true)])?;
        profile.push(table.entry(0));
        state.commit(circuit, i, &[false])?;
        zeros.push(false);
    }
    Ok(profile)
}

/// First-undetected-error probability of one position (0-based).
pub fn first_error_probability<S: Scalar>(
    spec: &CodeSpec,
    error_chain: &Mpo<S>,
    index: usize,
) -> Result<Scaled<S>, DecodeError> {
    let circuit = spec.circuit();
    let n_bits = circuit.block_len();
    assert!(index < n_bits, "position out of range");
    if error_chain.len() != n_bits {
        return Err(DecodeError::LengthMismatch { circuit: n_bits, mpo: error_chain.len() });
    }
    let mut state = DecodeState::new(&circuit, error_chain.bond_dimension(), DecodeOptions::default());
    let zeros = vec![false; index];
    state.ensure_prefix(&circuit, &zeros)?;
    let table = state.window_table(&circuit, error_chain, &zeros, &[WindowLeg::Fixed(true)])?;
    Ok(table.entry(0))
}

/// Error chain matching a construction mode.
pub fn error_chain_for<S: Scalar>(
    channel: &FiniteStateChannel<S>,
    mode: ConstructionMode,
    len: usize,
) -> Result<Mpo<S>, ChannelError> {
    match mode {
        ConstructionMode::Corr => channel.error_mpo(len),
        ConstructionMode::Iid => {
            let avg = channel.average_crossover()?;
            let proxy = FiniteStateChannel::lift_memoryless(&MemorylessChannel::bsc(avg)?);
            proxy.error_mpo(len)
        }
    }
}

/// Builds a code by freezing the `N - k` positions with the largest
/// first-error probability, ties freezing the later position first.
pub fn construct_frozen_set<S: Scalar>(
    family: CodeFamily,
    n: u32,
    k: usize,
    channel: &FiniteStateChannel<S>,
    mode: ConstructionMode,
) -> Result<CodeSpec, ConstructError> {
    let n_bits = 1usize << n;
    if k > n_bits {
        return Err(ConstructError::RateTooHigh { k, n: n_bits });
    }
    let circuit = Circuit::for_family(family, n);
    let chain = error_chain_for(channel, mode, n_bits)?;
    let profile = first_error_profile(&circuit, &chain)?;
    let mut order: Vec<usize> = (0..n_bits).collect();
    order.sort_by(|&a, &b| {
        profile[b]
            .partial_cmp(&profile[a])
            .expect("finite error probabilities")
            .then(b.cmp(&a))
    });
    let frozen: Vec<usize> = order[..n_bits - k].to_vec();
    Ok(CodeSpec::new(family, n, frozen)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::code::CodeFamily;

    /// Enumeration oracle: sums the additive-error-word probability over the
    /// full coset with the prefix at zero and the position at one.
    fn e_by_enumeration(
        family: CodeFamily,
        n: u32,
        channel: &FiniteStateChannel<f64>,
        index: usize,
    ) -> f64 {
        let circuit = Circuit::for_family(family, n);
        let n_bits = circuit.block_len();
        let zeros = vec![false; n_bits];
        let suffix_len = n_bits - index - 1;
        let mut total = 0.0;
        for code in 0..(1usize << suffix_len) {
            let mut u = vec![false; index];
            u.push(true);
            for i in 0..suffix_len {
                u.push((code >> i) & 1 == 1);
            }
            let z = circuit.apply(&u).unwrap();
            total += channel.likelihood(&zeros, &z).unwrap();
        }
        total
    }

    fn bsc_channel(h: f64) -> FiniteStateChannel<f64> {
        FiniteStateChannel::lift_memoryless(&MemorylessChannel::bsc(h).unwrap())
    }

    #[test]
    fn two_bit_block_by_hand() {
        // x = (u0 ^ u1, u1), so the coset of u0=1 is {(1,0), (0,1)} and the
        // word for (u0,u1) = (0,1) is (1,1).
        let h = 0.1;
        let ch = bsc_channel(h);
        let chain = ch.error_mpo(2).unwrap();
        let spec = CodeSpec::new(CodeFamily::Polar, 1, vec![]).unwrap();
        let e0 = first_error_probability(&spec, &chain, 0).unwrap().to_f64();
        let e1 = first_error_probability(&spec, &chain, 1).unwrap().to_f64();
        // Independent enumeration.
        let e0_ref = e_by_enumeration(CodeFamily::Polar, 1, &ch, 0);
        let e1_ref = e_by_enumeration(CodeFamily::Polar, 1, &ch, 1);
        assert!((e0 - e0_ref).abs() < 1e-15);
        assert!((e1 - e1_ref).abs() < 1e-15);
        // Closed forms for the polarizing kernel: the first position sees
        // the degraded combination, the second the upgraded one.
        assert!((e0 - 2.0 * h * (1.0 - h)).abs() < 1e-15);
        assert!((e1 - h * h).abs() < 1e-15);
    }

    #[test]
    fn noiseless_channel_has_zero_profile() {
        let ch = bsc_channel(0.0);
        let chain = ch.error_mpo(8).unwrap();
        let circuit = Circuit::polar(3);
        let profile = first_error_profile(&circuit, &chain).unwrap();
        assert!(profile.iter().all(|e| e.is_zero()));
    }

    #[test]
    fn profile_matches_enumeration() {
        let ch = bsc_channel(0.1);
        let ge = FiniteStateChannel::gilbert_elliott(0.0, 0.9, 0.01, 0.05).unwrap();
        for family in [CodeFamily::Polar, CodeFamily::ConvPolar] {
            for (n, channel) in [(2u32, &ch), (3u32, &ge)] {
                let circuit = Circuit::for_family(family, n);
                let n_bits = circuit.block_len();
                let chain = channel.error_mpo(n_bits).unwrap();
                let profile = first_error_profile(&circuit, &chain).unwrap();
                for (i, e) in profile.iter().enumerate() {
                    let reference = e_by_enumeration(family, n, channel, i);
                    assert!(
                        (e.to_f64() - reference).abs() < 1e-12,
                        "{family:?} n={n} i={i}: {} vs {reference}",
                        e.to_f64()
                    );
                    let v = e.to_f64();
                    assert!((0.0..=1.0 + 1e-12).contains(&v));
                }
            }
        }
    }

    #[test]
    fn frozen_set_matches_exhaustive_ranking() {
        let ge = FiniteStateChannel::gilbert_elliott(0.0, 0.9, 0.01, 0.05).unwrap();
        for family in [CodeFamily::Polar, CodeFamily::ConvPolar] {
            let n = 3u32;
            let k = 4usize;
            let spec = construct_frozen_set(family, n, k, &ge, ConstructionMode::Corr).unwrap();
            // Exhaustive ranking with the same tie rule.
            let e: Vec<f64> = (0..8).map(|i| e_by_enumeration(family, n, &ge, i)).collect();
            let mut order: Vec<usize> = (0..8).collect();
            order.sort_by(|&a, &b| e[b].partial_cmp(&e[a]).unwrap().then(b.cmp(&a)));
            let mut expected: Vec<usize> = order[..4].to_vec();
            expected.sort_unstable();
            assert_eq!(spec.frozen, expected, "{family:?}");
        }
    }

    #[test]
    fn iid_mode_uses_the_average_crossover() {
        let ge = FiniteStateChannel::gilbert_elliott(0.0, 0.9, 0.01, 0.05).unwrap();
        let avg = ge.average_crossover().unwrap();
        let spec = construct_frozen_set(CodeFamily::Polar, 3, 4, &ge, ConstructionMode::Iid).unwrap();
        let proxy = bsc_channel(avg);
        let direct = construct_frozen_set(CodeFamily::Polar, 3, 4, &proxy, ConstructionMode::Corr)
            .unwrap();
        assert_eq!(spec.frozen, direct.frozen);
    }

    #[test]
    fn degenerate_rates() {
        let ch = bsc_channel(0.1);
        let all = construct_frozen_set(CodeFamily::Polar, 3, 8, &ch, ConstructionMode::Iid).unwrap();
        assert!(all.frozen.is_empty());
        let none = construct_frozen_set(CodeFamily::Polar, 3, 0, &ch, ConstructionMode::Iid).unwrap();
        assert_eq!(none.frozen, (0..8).collect::<Vec<_>>());
        assert!(matches!(
            construct_frozen_set(CodeFamily::Polar, 3, 9, &ch, ConstructionMode::Iid),
            Err(ConstructError::RateTooHigh { .. })
        ));
    }

    #[test]
    fn all_ties_freeze_the_later_positions() {
        // A noiseless channel gives E = 0 everywhere; ties freeze later
        // positions first.
        let ch = bsc_channel(0.0);
        let spec = construct_frozen_set(CodeFamily::Polar, 3, 3, &ch, ConstructionMode::Iid).unwrap();
        assert_eq!(spec.frozen, vec![3, 4, 5, 6, 7]);
    }

    #[test]
    fn worst_position_degrades_with_noise() {
        // On a grid of crossover probabilities up to 1/2 the largest
        // first-error probability does not decrease.
        let mut last = 0.0f64;
        for step in 1..=9 {
            let h = 0.05 * step as f64;
            let ch = bsc_channel(h);
            let chain = ch.error_mpo(8).unwrap();
            let profile = first_error_profile(&Circuit::polar(3), &chain).unwrap();
            let max = profile.iter().map(|e| e.to_f64()).fold(0.0, f64::max);
            assert!(max >= last - 1e-12, "h={h}: {max} < {last}");
            last = max;
        }
    }
}
