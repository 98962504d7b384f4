//! Reference engine: one leg-state push through the circuit, then a
//! left-to-right contraction of the transfer chain.
//!
//! Channel legs that depend on parity links (summed wires the push promoted)
//! are handled by a small dynamic program: the sweep vector is widened over
//! a link when its first leg is reached and the link is summed out after its
//! last leg. Link lifetimes nest with the circuit blocks, so the number of
//! simultaneously live links grows with the tree depth (roughly one per
//! sublayer per level); this keeps the reference engine polynomial at the
//! sizes it is meant for, but well above the fast engine's cost at large
//! blocks.

use crate::channel::Mpo;
use crate::code::Circuit;
use crate::scaled::Scaled;
use crate::Scalar;

use super::leg::{push_down, LegState};
use super::{DecodeError, StepTable, WindowLeg};

/// Hard cap on simultaneously live parity links in the sweep.
const MAX_LIVE_LINKS: usize = 22;

/// Window marginals with every window position open.
pub fn window_marginal_sweep<S: Scalar>(
    mpo: &Mpo<S>,
    circuit: &Circuit,
    prefix: &[bool],
    window: usize,
) -> Result<StepTable<S>, DecodeError> {
    window_marginal_sweep_constrained(mpo, circuit, prefix, &vec![WindowLeg::Open; window])
}

/// Window marginals with per-position constraints (frozen positions
/// fixed in the network).
pub fn window_marginal_sweep_constrained<S: Scalar>(
    mpo: &Mpo<S>,
    circuit: &Circuit,
    prefix: &[bool],
    legs: &[WindowLeg],
) -> Result<StepTable<S>, DecodeError> {
    let n = circuit.block_len();
    if mpo.len() != n {
        return Err(DecodeError::LengthMismatch { circuit: n, mpo: mpo.len() });
    }
    if prefix.len() + legs.len() > n {
        return Err(DecodeError::OutOfRange { prefix: prefix.len(), window: legs.len(), n });
    }
    let open: usize = legs.iter().filter(|l| matches!(l, WindowLeg::Open)).count();
    if open > super::HARD_MAX_WINDOW {
        return Err(DecodeError::WindowTooLarge { len: open, max: super::HARD_MAX_WINDOW });
    }

    let mut states: Vec<LegState> = prefix.iter().map(|&b| LegState::Fixed(b)).collect();
    let mut slot = 0usize;
    for leg in legs {
        match leg {
            WindowLeg::Open => {
                states.push(LegState::open(slot));
                slot += 1;
            }
            WindowLeg::Fixed(b) => states.push(LegState::Fixed(*b)),
        }
    }
    states.resize(n, LegState::Sum);
    let pd = push_down(circuit, &states, open)?;

    let mut entries = Vec::with_capacity(1 << open);
    for idx in 0..(1usize << open) {
        // Table convention: the first open position is the index MSB.
        let mut assign: u32 = 0;
        for t in 0..open {
            if (idx >> (open - 1 - t)) & 1 == 1 {
                assign |= 1 << t;
            }
        }
        entries.push(contract_pushed_chain(mpo, &pd.legs, open, pd.sigma_slots, assign)?);
    }
    Ok(StepTable::from_scaled(entries))
}

/// Contracts the transfer chain against pushed-down leg states for one
/// window assignment, summing parity links by the live-link dynamic
/// program. Bit `t` of `window_assign` is window slot `t`.
pub fn contract_pushed_chain<S: Scalar>(
    mpo: &Mpo<S>,
    legs: &[LegState],
    open_slots: usize,
    sigma_slots: usize,
    window_assign: u32,
) -> Result<Scaled<S>, DecodeError> {
    let d = mpo.bond_dimension();
    assert_eq!(legs.len(), mpo.len());

    // Per-leg resolution under the window assignment: summed, or a constant
    // xor a set of parity links.
    struct Resolved<'a> {
        sum: bool,
        cst: bool,
        links: &'a [u32],
    }
    let wmask_all = if open_slots == 0 { 0 } else { (1u32 << open_slots) - 1 };
    let resolved: Vec<Resolved> = legs
        .iter()
        .map(|leg| match leg {
            LegState::Sum => Resolved { sum: true, cst: false, links: &[] },
            LegState::Fixed(c) => Resolved { sum: false, cst: *c, links: &[] },
            LegState::Affine { wmask, links, cst } => {
                let base = (((wmask & wmask_all & window_assign).count_ones() & 1) == 1) ^ cst;
                Resolved { sum: false, cst: base, links }
            }
        })
        .collect();

    // First and last leg touching each link.
    let mut first = vec![usize::MAX; sigma_slots];
    let mut last = vec![0usize; sigma_slots];
    for (j, r) in resolved.iter().enumerate() {
        for &id in r.links {
            let id = id as usize;
            if first[id] == usize::MAX {
                first[id] = j;
            }
            last[id] = j;
        }
    }

    // Sweep state: v[assign * d + s] over assignments of the live links.
    let mut live: Vec<u32> = Vec::new();
    let mut v: Vec<S> = mpo.left_boundary().to_vec();
    let mut exp = 0i64;
    for (j, r) in resolved.iter().enumerate() {
        // Links born at this leg widen the state (newest = highest bit).
        for &id in r.links {
            if first[id as usize] == j && !live.contains(&id) {
                if live.len() + 1 > MAX_LIVE_LINKS {
                    return Err(DecodeError::SigmaOverflow {
                        count: live.len() + 1,
                        max: MAX_LIVE_LINKS,
                    });
                }
                live.push(id);
                let mut wide = Vec::with_capacity(v.len() * 2);
                wide.extend_from_slice(&v);
                wide.extend_from_slice(&v);
                v = wide;
            }
        }
        // Transfer by the site matrix each live assignment resolves to.
        let site = mpo.site(j);
        let live_mask: usize = live
            .iter()
            .enumerate()
            .filter(|(_, id)| r.links.contains(id))
            .fold(0, |m, (pos, _)| m | (1 << pos));
        let blocks = v.len() / d;
        let mut next = vec![S::zero(); v.len()];
        for a in 0..blocks {
            let mat = if r.sum {
                site.mat_summed()
            } else {
                let x = r.cst ^ (((a & live_mask).count_ones() & 1) == 1);
                site.mat(x)
            };
            let src = &v[a * d..(a + 1) * d];
            let dst = &mut next[a * d..(a + 1) * d];
            for s in 0..d {
                if src[s] == S::zero() {
                    continue;
                }
                for (s2, slot) in dst.iter_mut().enumerate() {
                    *slot = *slot + src[s] * mat[s * d + s2];
                }
            }
        }
        v = next;
        // Links dying here are summed out (highest bit position first so
        // earlier positions stay valid).
        let mut dying: Vec<usize> = live
            .iter()
            .enumerate()
            .filter(|(_, &id)| last[id as usize] == j)
            .map(|(pos, _)| pos)
            .collect();
        dying.sort_unstable_by(|a, b| b.cmp(a));
        for pos in dying {
            // Sum the link out by dropping bit `pos` of the assignment.
            let bit = 1usize << pos;
            let blocks = v.len() / d;
            let mut shrunk = vec![S::zero(); v.len() / 2];
            for a in 0..blocks {
                let tgt = (a & (bit - 1)) | ((a >> (pos + 1)) << pos);
                for s in 0..d {
                    shrunk[tgt * d + s] = shrunk[tgt * d + s] + v[a * d + s];
                }
            }
            v = shrunk;
            live.remove(pos);
        }
        // Keep magnitudes near 1.
        let m = v.iter().fold(S::zero(), |acc, &x| acc.max(x.abs()));
        if m > S::zero() {
            let shift = Scaled::from_value(m).exp;
            if shift != 0 {
                crate::scaled::scale_slice_exp2(&mut v, -shift);
                exp += shift;
            }
        }
    }
    debug_assert!(live.is_empty(), "all parity links must close");
    let total = v
        .iter()
        .zip(mpo.right_boundary())
        .fold(S::zero(), |acc, (&x, &r)| acc + x * r);
    Ok(Scaled::from_parts(total, exp))
}
