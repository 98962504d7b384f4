//! Leg-state algebra: pushing point, open and summed input legs through the
//! encoding circuit down to the channel legs.
//!
//! Each input leg starts as `Fixed(bit)`, `Affine` over open window slots,
//! or `Sum`. A CNOT maps `(target, control) -> (target ^ control, control)`,
//! and the states propagate algebraically:
//!
//! - xor of two known/affine legs xors index sets and constants;
//! - a summed target absorbs anything (its output stays summed);
//! - a summed *control* feeding a known/affine target cannot be factored:
//!   the sum distributes over both outputs as a parity link. The push
//!   materializes it by promoting the summed wire to a fresh bound variable
//!   that then appears in both output legs — the rank-3 parity tensor
//!   `delta(out = in ^ link)` carried through the contraction. Contracting
//!   the network sums every link over both values.
//!
//! Link ids grow roughly linearly with the block length (each level's
//! boundary blocks promote), so they are kept as explicit sorted id sets
//! rather than fixed-width masks.

use crate::code::Circuit;

use super::DecodeError;

/// Hard cap on parity links allocated in one push.
pub const MAX_LINKS: usize = 1 << 16;

/// State of one leg during a push. Window slots index the caller's open
/// bits; links are the summed parity variables allocated during the push.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LegState {
    Fixed(bool),
    Affine { wmask: u32, links: Vec<u32>, cst: bool },
    Sum,
}

impl LegState {
    pub fn open(slot: usize) -> Self {
        LegState::Affine { wmask: 1 << slot, links: Vec::new(), cst: false }
    }

    fn link(id: u32) -> Self {
        LegState::Affine { wmask: 0, links: vec![id], cst: false }
    }

    fn normalized(self) -> Self {
        match self {
            LegState::Affine { wmask: 0, ref links, cst } if links.is_empty() => {
                LegState::Fixed(cst)
            }
            other => other,
        }
    }

    fn xor(&self, other: &Self) -> Self {
        match (self, other) {
            (LegState::Sum, _) | (_, LegState::Sum) => LegState::Sum,
            (a, b) => {
                let (wa, la, ca) = a.parts();
                let (wb, lb, cb) = b.parts();
                LegState::Affine {
                    wmask: wa ^ wb,
                    links: symmetric_difference(la, lb),
                    cst: ca ^ cb,
                }
                .normalized()
            }
        }
    }

    fn parts(&self) -> (u32, &[u32], bool) {
        static EMPTY: [u32; 0] = [];
        match self {
            LegState::Fixed(c) => (0, &EMPTY, *c),
            LegState::Affine { wmask, links, cst } => (*wmask, links, *cst),
            LegState::Sum => unreachable!("summed leg has no affine parts"),
        }
    }

    pub fn links(&self) -> &[u32] {
        match self {
            LegState::Affine { links, .. } => links,
            _ => &[],
        }
    }

    /// Evaluates with window bits and link values packed into one word:
    /// bit `t < open_slots` is window slot `t`, bit `open_slots + i` is
    /// link id `i`. Only usable when every id fits the word.
    pub fn eval_packed(&self, assign: u32, open_slots: usize) -> Option<bool> {
        match self {
            LegState::Fixed(c) => Some(*c),
            LegState::Sum => None,
            LegState::Affine { wmask, links, cst } => {
                let mut parity =
                    ((wmask & assign & ((1u32 << open_slots) - 1)).count_ones() & 1) == 1;
                for &id in links {
                    let bit = open_slots as u32 + id;
                    assert!(bit < 32, "packed evaluation needs small link ids");
                    parity ^= (assign >> bit) & 1 == 1;
                }
                Some(parity ^ cst)
            }
        }
    }
}

fn symmetric_difference(a: &[u32], b: &[u32]) -> Vec<u32> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

/// Result of pushing input leg states to the channel legs.
#[derive(Clone, Debug)]
pub struct PushDown {
    /// One state per channel input, left to right.
    pub legs: Vec<LegState>,
    /// Number of open window slots the caller supplied.
    pub open_slots: usize,
    /// Parity links allocated during the push, ids `0..sigma_slots`.
    pub sigma_slots: usize,
    /// Gates whose summed control was promoted to a parity link shared by
    /// both outputs.
    pub residual_links: usize,
}

/// Pushes per-input leg states through the whole circuit.
///
/// `open_slots` is how many window slots the `Affine` masks of `states` may
/// reference.
pub fn push_down(
    circuit: &Circuit,
    states: &[LegState],
    open_slots: usize,
) -> Result<PushDown, DecodeError> {
    let n = circuit.block_len();
    assert_eq!(states.len(), n, "one state per input wire");
    let mut wires = states.to_vec();
    let mut scratch = vec![LegState::Sum; n];
    let mut sigma = 0usize;
    let mut residual = 0usize;
    for level in circuit.levels() {
        let m = level.block_size;
        for block in wires.chunks_mut(m) {
            for sublayer in &level.sublayers {
                for g in sublayer {
                    apply_gate(block, g.target, g.control, &mut sigma, &mut residual)?;
                }
            }
        }
        for (b, block) in wires.chunks_mut(m).enumerate() {
            let base = b * m;
            for j in 0..m / 2 {
                scratch[base + j] = std::mem::replace(&mut block[2 * j], LegState::Sum);
                scratch[base + m / 2 + j] =
                    std::mem::replace(&mut block[2 * j + 1], LegState::Sum);
            }
        }
        std::mem::swap(&mut wires, &mut scratch);
    }
    Ok(PushDown { legs: wires, open_slots, sigma_slots: sigma, residual_links: residual })
}

fn apply_gate(
    block: &mut [LegState],
    target: usize,
    control: usize,
    sigma: &mut usize,
    residual: &mut usize,
) -> Result<(), DecodeError> {
    match (&block[target], &block[control]) {
        (LegState::Sum, _) => {
            // Summing the target output sums the target input; the control
            // wire passes through untouched.
        }
        (_, LegState::Sum) => {
            if *sigma >= MAX_LINKS {
                return Err(DecodeError::SigmaOverflow { count: *sigma + 1, max: MAX_LINKS });
            }
            let link = LegState::link(*sigma as u32);
            *sigma += 1;
            *residual += 1;
            let next = block[target].xor(&link);
            block[target] = next;
            block[control] = link;
        }
        (_, _) => {
            let next = block[target].xor(&block[control]);
            block[target] = next;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::code::{Circuit, CodeFamily};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn all_sum_stays_all_sum() {
        for family in [CodeFamily::Polar, CodeFamily::ConvPolar] {
            let c = Circuit::for_family(family, 3);
            let states = vec![LegState::Sum; 8];
            let pd = push_down(&c, &states, 0).unwrap();
            assert!(pd.legs.iter().all(|l| matches!(l, LegState::Sum)));
            assert_eq!(pd.sigma_slots, 0);
            assert_eq!(pd.residual_links, 0);
        }
    }

    #[test]
    fn all_fixed_reproduces_the_encoder() {
        let mut rng = StdRng::seed_from_u64(41);
        for family in [CodeFamily::Polar, CodeFamily::ConvPolar] {
            let c = Circuit::for_family(family, 4);
            for _ in 0..10 {
                let u: Vec<bool> = (0..16).map(|_| rng.gen()).collect();
                let states: Vec<LegState> = u.iter().map(|&b| LegState::Fixed(b)).collect();
                let pd = push_down(&c, &states, 0).unwrap();
                let x = c.apply(&u).unwrap();
                for (leg, &bit) in pd.legs.iter().zip(&x) {
                    assert_eq!(*leg, LegState::Fixed(bit));
                }
                assert_eq!(pd.sigma_slots, 0);
            }
        }
    }

    #[test]
    fn affine_legs_match_symbolic_enumeration() {
        // Prefix fixed, one open bit, suffix summed on an 8-bit block: every
        // non-summed leg's affine form must match the encoder on all window
        // assignments and arbitrary suffixes, and the number of summed legs
        // plus parity links must account for the summed inputs.
        let mut rng = StdRng::seed_from_u64(42);
        for family in [CodeFamily::Polar, CodeFamily::ConvPolar] {
            let c = Circuit::for_family(family, 3);
            for split in 0..7usize {
                let prefix: Vec<bool> = (0..split).map(|_| rng.gen()).collect();
                let mut states: Vec<LegState> =
                    prefix.iter().map(|&b| LegState::Fixed(b)).collect();
                states.push(LegState::open(0));
                states.resize(8, LegState::Sum);
                let pd = push_down(&c, &states, 1).unwrap();

                let n_sigma = pd.sigma_slots;
                assert!(n_sigma < 28, "packed evaluation bound");
                for w in [false, true] {
                    let mut seen = vec![false; 1 << n_sigma];
                    let suffix_len = 8 - split - 1;
                    for code in 0..(1usize << suffix_len) {
                        let mut u = prefix.clone();
                        u.push(w);
                        for i in 0..suffix_len {
                            u.push((code >> i) & 1 == 1);
                        }
                        let x = c.apply(&u).unwrap();
                        // Exactly one link assignment is consistent with the
                        // non-summed legs of each codeword.
                        let mut ok_for: Vec<u32> = Vec::new();
                        for assign_sigma in 0..(1u32 << n_sigma) {
                            let assign = (w as u32) | (assign_sigma << 1);
                            let consistent = pd.legs.iter().zip(&x).all(|(leg, &bit)| {
                                leg.eval_packed(assign, 1).map_or(true, |v| v == bit)
                            });
                            if consistent {
                                ok_for.push(assign_sigma);
                            }
                        }
                        assert_eq!(ok_for.len(), 1);
                        seen[ok_for[0] as usize] = true;
                    }
                    // Summed degrees of freedom are exhausted: every link
                    // assignment is realized by some suffix.
                    assert!(seen.iter().all(|&b| b));
                }
            }
        }
    }

    #[test]
    fn summed_inputs_are_conserved() {
        // Each summed input either stays a summed leg or becomes a parity
        // link; both count one binary degree of freedom.
        let mut rng = StdRng::seed_from_u64(43);
        for family in [CodeFamily::Polar, CodeFamily::ConvPolar] {
            let c = Circuit::for_family(family, 4);
            for _ in 0..20 {
                let split = rng.gen_range(0..16);
                let window = rng.gen_range(1..=3.min(16 - split));
                let mut states = Vec::new();
                for _ in 0..split {
                    states.push(LegState::Fixed(rng.gen()));
                }
                for t in 0..window {
                    states.push(LegState::open(t));
                }
                let summed = 16 - states.len();
                states.resize(16, LegState::Sum);
                let pd = push_down(&c, &states, window).unwrap();
                let sum_legs = pd.legs.iter().filter(|l| matches!(l, LegState::Sum)).count();
                assert_eq!(sum_legs + pd.sigma_slots, summed);
            }
        }
    }
}
