//! Polar and convolutional polar encoding circuits.
//!
//! Both families are built recursively on blocks of size `N = 2^n`. A level
//! applies CNOT sublayers to a block, then routes the outputs at odd
//! positions to the left half-block and those at even positions to the
//! right half-block, recursing down to single wires that are the channel
//! inputs in left-to-right order.
//!
//! Gates pair adjacent wires, the lower wire taking the XOR and the higher
//! wire passing through: `(w_lo, w_hi) -> (w_lo ^ w_hi, w_hi)`. Together
//! with the odd/even routing this realizes the polarizing transform in tree
//! order, which differs from the bit-reversed form by a fixed input
//! permutation. The convolutional family adds a second sublayer on the
//! shifted pairs with an open boundary (no wrap-around gate).

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CodeError {
    #[error("message has {got} bits, expected {expected}")]
    MessageLength { expected: usize, got: usize },
    #[error("input word has {got} bits, expected {expected}")]
    WordLength { expected: usize, got: usize },
    #[error("k={k} exceeds block length {n}")]
    RateTooHigh { k: usize, n: usize },
    #[error("frozen position {0} out of range")]
    FrozenOutOfRange(usize),
    #[error("code file: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CodeFamily {
    Polar,
    ConvPolar,
}

impl CodeFamily {
    /// Token used in code files and CLI flags.
    pub fn name(&self) -> &'static str {
        match self {
            CodeFamily::Polar => "polar",
            CodeFamily::ConvPolar => "conv-polar",
        }
    }

    /// Short label used in result tables.
    pub fn short(&self) -> &'static str {
        match self {
            CodeFamily::Polar => "pc",
            CodeFamily::ConvPolar => "cpc",
        }
    }

    pub fn parse(token: &str) -> Result<Self, CodeError> {
        match token {
            "polar" | "pc" => Ok(CodeFamily::Polar),
            "conv-polar" | "convpolar" | "cpc" => Ok(CodeFamily::ConvPolar),
            other => Err(CodeError::Parse(format!("unknown family {other:?}"))),
        }
    }

    /// Decode window width natural to the family.
    pub fn default_window(&self) -> usize {
        match self {
            CodeFamily::Polar => 1,
            CodeFamily::ConvPolar => 3,
        }
    }
}

/// One CNOT: `wire[target] ^= wire[control]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Gate {
    pub control: usize,
    pub target: usize,
}

/// One sublayer: disjoint gates applied simultaneously within a block.
pub type Sublayer = Vec<Gate>;

/// Gate pattern of one recursion level; identical for every block at that
/// level.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Level {
    pub block_size: usize,
    pub sublayers: Vec<Sublayer>,
}

/// Full encoding circuit for a block of `2^n` wires.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Circuit {
    family: CodeFamily,
    n: u32,
    levels: Vec<Level>,
}

impl Circuit {
    pub fn polar(n: u32) -> Self {
        assert!(n >= 1, "need at least one polarization step");
        let levels = (0..n)
            .map(|l| {
                let m = 1usize << (n - l);
                Level { block_size: m, sublayers: vec![pair_sublayer(m)] }
            })
            .collect();
        Circuit { family: CodeFamily::Polar, n, levels }
    }

    pub fn conv_polar(n: u32) -> Self {
        assert!(n >= 1, "need at least one polarization step");
        let levels = (0..n)
            .map(|l| {
                let m = 1usize << (n - l);
                let mut sublayers = vec![pair_sublayer(m)];
                if m >= 4 {
                    sublayers.push(shifted_sublayer(m));
                }
                Level { block_size: m, sublayers }
            })
            .collect();
        Circuit { family: CodeFamily::ConvPolar, n, levels }
    }

    pub fn for_family(family: CodeFamily, n: u32) -> Self {
        match family {
            CodeFamily::Polar => Circuit::polar(n),
            CodeFamily::ConvPolar => Circuit::conv_polar(n),
        }
    }

    pub fn family(&self) -> CodeFamily {
        self.family
    }

    pub fn steps(&self) -> u32 {
        self.n
    }

    pub fn block_len(&self) -> usize {
        1usize << self.n
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    /// Gate pattern at tree depth `depth` (0 = the full block).
    pub fn level(&self, depth: usize) -> &Level {
        &self.levels[depth]
    }

    pub fn gate_count(&self) -> usize {
        self.levels
            .iter()
            .map(|lv| {
                let blocks = self.block_len() / lv.block_size;
                let per_block: usize = lv.sublayers.iter().map(|s| s.len()).sum();
                blocks * per_block
            })
            .sum()
    }

    /// Applies the circuit to an input word, producing the channel word.
    pub fn apply(&self, input: &[bool]) -> Result<Vec<bool>, CodeError> {
        let n_bits = self.block_len();
        if input.len() != n_bits {
            return Err(CodeError::WordLength { expected: n_bits, got: input.len() });
        }
        let mut wires = input.to_vec();
        let mut scratch = vec![false; n_bits];
        for level in &self.levels {
            let m = level.block_size;
            for block in wires.chunks_mut(m) {
                for sublayer in &level.sublayers {
                    for g in sublayer {
                        block[g.target] ^= block[g.control];
                    }
                }
            }
            // Odd positions (0-based even) to the left half, even positions
            // to the right half, within each block.
            for (b, block) in wires.chunks(m).enumerate() {
                let base = b * m;
                for j in 0..m / 2 {
                    scratch[base + j] = block[2 * j];
                    scratch[base + m / 2 + j] = block[2 * j + 1];
                }
            }
            std::mem::swap(&mut wires, &mut scratch);
        }
        Ok(wires)
    }

    /// The `N x N` GF(2) matrix of the transform, `rows[i]` being the image
    /// of the i-th unit input.
    pub fn gf2_matrix(&self) -> Vec<Vec<bool>> {
        let n_bits = self.block_len();
        (0..n_bits)
            .map(|i| {
                let mut u = vec![false; n_bits];
                u[i] = true;
                self.apply(&u).unwrap()
            })
            .collect()
    }
}

fn pair_sublayer(m: usize) -> Sublayer {
    (0..m / 2)
        .map(|j| Gate { control: 2 * j, target: 2 * j + 1 })
        .collect()
}

fn shifted_sublayer(m: usize) -> Sublayer {
    (1..m / 2)
        .map(|i| Gate { control: 2 * i - 1, target: 2 * i })
        .collect()
}

/// A concrete code: family, size, and frozen input positions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CodeSpec {
    pub family: CodeFamily,
    pub n: u32,
    /// Sorted, 0-based frozen input positions.
    pub frozen: Vec<usize>,
    pub frozen_value: bool,
}

impl CodeSpec {
    pub fn new(family: CodeFamily, n: u32, mut frozen: Vec<usize>) -> Result<Self, CodeError> {
        frozen.sort_unstable();
        frozen.dedup();
        let n_bits = 1usize << n;
        if let Some(&p) = frozen.iter().find(|&&p| p >= n_bits) {
            return Err(CodeError::FrozenOutOfRange(p));
        }
        Ok(CodeSpec { family, n, frozen, frozen_value: false })
    }

    pub fn block_len(&self) -> usize {
        1usize << self.n
    }

    pub fn message_len(&self) -> usize {
        self.block_len() - self.frozen.len()
    }

    pub fn rate(&self) -> f64 {
        self.message_len() as f64 / self.block_len() as f64
    }

    pub fn is_frozen(&self, pos: usize) -> bool {
        self.frozen.binary_search(&pos).is_ok()
    }

    pub fn circuit(&self) -> Circuit {
        Circuit::for_family(self.family, self.n)
    }

    /// Scatters message bits into the free positions, frozen positions
    /// taking the frozen value.
    pub fn scatter(&self, message: &[bool]) -> Result<Vec<bool>, CodeError> {
        if message.len() != self.message_len() {
            return Err(CodeError::MessageLength {
                expected: self.message_len(),
                got: message.len(),
            });
        }
        let mut u = vec![self.frozen_value; self.block_len()];
        let mut it = message.iter();
        for (pos, slot) in u.iter_mut().enumerate() {
            if !self.is_frozen(pos) {
                *slot = *it.next().unwrap();
            }
        }
        Ok(u)
    }

    /// Message bits read off the free positions of a full input word.
    pub fn gather(&self, u: &[bool]) -> Vec<bool> {
        u.iter()
            .enumerate()
            .filter(|(pos, _)| !self.is_frozen(*pos))
            .map(|(_, &b)| b)
            .collect()
    }

    pub fn encode(&self, message: &[bool]) -> Result<Vec<bool>, CodeError> {
        self.circuit().apply(&self.scatter(message)?)
    }

    /// Plain-text code file: header keys, then frozen positions one per
    /// line, 1-based.
    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "family={}", self.family.name());
        let _ = writeln!(out, "n={}", self.n);
        let _ = writeln!(out, "k={}", self.message_len());
        for &pos in &self.frozen {
            let _ = writeln!(out, "{}", pos + 1);
        }
        out
    }

    pub fn from_file(path: &Path) -> Result<Self, CodeError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_file_string(&text)
    }

    pub fn from_file_string(text: &str) -> Result<Self, CodeError> {
        let mut family = None;
        let mut n = None;
        let mut k: Option<usize> = None;
        let mut frozen = Vec::new();
        for raw in text.lines() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some((key, value)) = line.split_once('=') {
                match key.trim() {
                    "family" => family = Some(CodeFamily::parse(value.trim())?),
                    "n" => {
                        n = Some(
                            value
                                .trim()
                                .parse::<u32>()
                                .map_err(|_| CodeError::Parse(format!("bad n: {value:?}")))?,
                        )
                    }
                    "k" => {
                        k = Some(
                            value
                                .trim()
                                .parse::<usize>()
                                .map_err(|_| CodeError::Parse(format!("bad k: {value:?}")))?,
                        )
                    }
                    other => return Err(CodeError::Parse(format!("unknown key {other:?}"))),
                }
            } else {
                let pos: usize = line
                    .parse()
                    .map_err(|_| CodeError::Parse(format!("bad frozen position {line:?}")))?;
                if pos == 0 {
                    return Err(CodeError::Parse("frozen positions are 1-based".into()));
                }
                frozen.push(pos - 1);
            }
        }
        let family = family.ok_or_else(|| CodeError::Parse("missing family".into()))?;
        let n = n.ok_or_else(|| CodeError::Parse("missing n".into()))?;
        let spec = CodeSpec::new(family, n, frozen)?;
        if let Some(k) = k {
            if k != spec.message_len() {
                return Err(CodeError::Parse(format!(
                    "k={k} inconsistent with {} frozen positions of N={}",
                    spec.frozen.len(),
                    spec.block_len()
                )));
            }
        }
        Ok(spec)
    }
}

/// Rank of a GF(2) matrix given as rows of booleans.
pub fn gf2_rank(rows: &[Vec<bool>]) -> usize {
    let mut mat: Vec<Vec<bool>> = rows.to_vec();
    let cols = mat.first().map_or(0, |r| r.len());
    let mut rank = 0;
    for col in 0..cols {
        if let Some(pivot) = (rank..mat.len()).find(|&r| mat[r][col]) {
            mat.swap(rank, pivot);
            let pivot_row = mat[rank].clone();
            for (r, row) in mat.iter_mut().enumerate() {
                if r != rank && row[col] {
                    for (a, &b) in row.iter_mut().zip(&pivot_row) {
                        *a ^= b;
                    }
                }
            }
            rank += 1;
        }
    }
    rank
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    /// Gate-by-gate simulator independent of `Circuit::apply`: builds the
    /// GF(2) matrix by explicit row operations on symbolic unit vectors.
    fn matrix_from_gate_list(circuit: &Circuit) -> Vec<Vec<bool>> {
        let n_bits = circuit.block_len();
        // rows[w] = set of inputs feeding wire w.
        let mut rows: Vec<Vec<bool>> = (0..n_bits)
            .map(|i| {
                let mut r = vec![false; n_bits];
                r[i] = true;
                r
            })
            .collect();
        for level in circuit.levels() {
            let m = level.block_size;
            for b in 0..n_bits / m {
                let base = b * m;
                for sublayer in &level.sublayers {
                    for g in sublayer {
                        let (c, t) = (base + g.control, base + g.target);
                        let ctrl = rows[c].clone();
                        for (a, &x) in rows[t].iter_mut().zip(&ctrl) {
                            *a ^= x;
                        }
                    }
                }
                let mut tmp = vec![vec![]; m];
                for j in 0..m / 2 {
                    tmp[j] = rows[base + 2 * j].clone();
                    tmp[m / 2 + j] = rows[base + 2 * j + 1].clone();
                }
                for (j, r) in tmp.into_iter().enumerate() {
                    rows[base + j] = r;
                }
            }
        }
        // rows is indexed by output wire; transpose to input-indexed rows.
        let mut out = vec![vec![false; n_bits]; n_bits];
        for (w, r) in rows.iter().enumerate() {
            for (i, &b) in r.iter().enumerate() {
                out[i][w] = b;
            }
        }
        out
    }

    #[test]
    fn single_gate_block() {
        let c = Circuit::polar(1);
        assert_eq!(c.apply(&[true, true]).unwrap(), vec![false, true]);
        assert_eq!(c.apply(&[true, false]).unwrap(), vec![true, false]);
        assert_eq!(c.apply(&[false, true]).unwrap(), vec![true, true]);
        assert_eq!(c.gate_count(), 1);
    }

    #[test]
    fn polar_matches_gate_list_matrix() {
        for n in 1..=4 {
            let c = Circuit::polar(n);
            let direct = c.gf2_matrix();
            let via_gates = matrix_from_gate_list(&c);
            assert_eq!(direct, via_gates);
        }
    }

    #[test]
    fn conv_polar_matches_gate_list_matrix() {
        for n in 1..=4 {
            let c = Circuit::conv_polar(n);
            assert_eq!(c.gf2_matrix(), matrix_from_gate_list(&c));
        }
    }

    #[test]
    fn conv_polar_maps_zero_to_zero() {
        let c = Circuit::conv_polar(2);
        assert_eq!(c.apply(&[false; 4]).unwrap(), vec![false; 4]);
    }

    #[test]
    fn known_small_transforms() {
        // n=2 polar in tree order.
        let c = Circuit::polar(2);
        let m = c.gf2_matrix();
        let expected = [
            [true, false, false, false],
            [true, false, true, false],
            [true, true, false, false],
            [true, true, true, true],
        ];
        for (row, exp) in m.iter().zip(expected.iter()) {
            assert_eq!(row.as_slice(), exp.as_slice());
        }
    }

    #[test]
    fn circuits_are_linear_and_invertible() {
        let mut rng = StdRng::seed_from_u64(31);
        for family in [CodeFamily::Polar, CodeFamily::ConvPolar] {
            for n in 1..=6u32 {
                let c = Circuit::for_family(family, n);
                let n_bits = c.block_len();
                let m = c.gf2_matrix();
                assert_eq!(gf2_rank(&m), n_bits, "{family:?} n={n}");
                for _ in 0..4 {
                    let u: Vec<bool> = (0..n_bits).map(|_| rng.gen()).collect();
                    let v: Vec<bool> = (0..n_bits).map(|_| rng.gen()).collect();
                    let xor: Vec<bool> = u.iter().zip(&v).map(|(&a, &b)| a ^ b).collect();
                    let lhs = c.apply(&xor).unwrap();
                    let rhs: Vec<bool> = c
                        .apply(&u)
                        .unwrap()
                        .iter()
                        .zip(&c.apply(&v).unwrap())
                        .map(|(&a, &b)| a ^ b)
                        .collect();
                    assert_eq!(lhs, rhs);
                }
            }
        }
    }

    #[test]
    fn gate_counts_follow_the_recursion() {
        for n in 1..=6u32 {
            let n_bits = 1usize << n;
            assert_eq!(Circuit::polar(n).gate_count(), n_bits / 2 * n as usize);
            let mut extra = 0;
            for l in 0..n {
                let m = 1usize << (n - l);
                if m >= 4 {
                    extra += (m / 2 - 1) * (n_bits / m);
                }
            }
            assert_eq!(
                Circuit::conv_polar(n).gate_count(),
                n_bits / 2 * n as usize + extra
            );
        }
    }

    #[test]
    fn sublayer_wires_are_disjoint() {
        for family in [CodeFamily::Polar, CodeFamily::ConvPolar] {
            let c = Circuit::for_family(family, 5);
            for level in c.levels() {
                for sublayer in &level.sublayers {
                    let mut seen = std::collections::HashSet::new();
                    for g in sublayer {
                        assert!(seen.insert(g.control));
                        assert!(seen.insert(g.target));
                    }
                }
            }
        }
    }

    #[test]
    fn encode_scatters_and_freezes() {
        let spec = CodeSpec::new(CodeFamily::Polar, 2, vec![0, 1]).unwrap();
        assert_eq!(spec.message_len(), 2);
        assert_eq!(spec.encode(&[false, false]).unwrap(), vec![false; 4]);
        assert!(matches!(
            spec.encode(&[false]),
            Err(CodeError::MessageLength { .. })
        ));
        let u = spec.scatter(&[true, false]).unwrap();
        assert_eq!(u, vec![false, false, true, false]);
        assert_eq!(spec.gather(&u), vec![true, false]);
    }

    #[test]
    fn code_file_round_trip() {
        let spec = CodeSpec::new(CodeFamily::ConvPolar, 3, vec![0, 1, 2, 4]).unwrap();
        let text = spec.to_file_string();
        assert!(text.contains("family=conv-polar"));
        assert!(text.contains("k=4"));
        let back = CodeSpec::from_file_string(&text).unwrap();
        assert_eq!(back, spec);

        assert!(CodeSpec::from_file_string("family=polar\nn=2\n0\n").is_err());
        assert!(CodeSpec::from_file_string("family=polar\nn=2\nk=9\n1\n").is_err());
        assert!(CodeSpec::from_file_string("n=2\n").is_err());
        assert!(CodeSpec::from_file_string("family=polar\nn=2\n7\n").is_err());
    }
}
