//! Exponential oracle: window marginals by literal enumeration of every
//! suffix assignment against the channel likelihood.

use crate::channel::FiniteStateChannel;
use crate::code::CodeSpec;
use crate::scaled::Scaled;
use crate::Scalar;

use super::{DecodeError, StepTable, WindowLeg};

const MAX_BLOCK: usize = 12;

/// Marginal table over the window's open positions, prefix fixed, all later
/// inputs (frozen or not) summed uniformly. Guarded to `N <= 12`.
pub fn brute_force_marginal<S: Scalar>(
    spec: &CodeSpec,
    channel: &FiniteStateChannel<S>,
    y: &[bool],
    prefix: &[bool],
    legs: &[WindowLeg],
) -> Result<StepTable<S>, DecodeError> {
    let n = spec.block_len();
    if n > MAX_BLOCK {
        return Err(DecodeError::SizeGuard { n, max: MAX_BLOCK });
    }
    if y.len() != n {
        return Err(DecodeError::LengthMismatch { circuit: n, mpo: y.len() });
    }
    if prefix.len() + legs.len() > n {
        return Err(DecodeError::OutOfRange { prefix: prefix.len(), window: legs.len(), n });
    }
    let circuit = spec.circuit();
    let open: Vec<usize> = legs
        .iter()
        .enumerate()
        .filter(|(_, l)| matches!(l, WindowLeg::Open))
        .map(|(i, _)| i)
        .collect();
    let suffix_len = n - prefix.len() - legs.len();

    let mut entries = Vec::with_capacity(1 << open.len());
    for idx in 0..(1usize << open.len()) {
        let mut u = prefix.to_vec();
        let mut open_seen = 0;
        for leg in legs {
            match leg {
                WindowLeg::Fixed(b) => u.push(*b),
                WindowLeg::Open => {
                    u.push((idx >> (open.len() - 1 - open_seen)) & 1 == 1);
                    open_seen += 1;
                }
            }
        }
        let mut total = S::zero();
        for code in 0..(1usize << suffix_len) {
            let mut full = u.clone();
            for i in 0..suffix_len {
                full.push((code >> i) & 1 == 1);
            }
            let x = circuit.apply(&full).expect("full word");
            total = total + channel.likelihood(&x, y).expect("matched lengths");
        }
        entries.push(Scaled::from_value(total));
    }
    Ok(StepTable::from_scaled(entries))
}
