//! Fast engine: block messages over the circuit tree.
//!
//! Every tree node covers a contiguous span of channel positions and owns a
//! message: the contraction of its span of the transfer chain with the
//! node's wire states resolved. The message carries the left and right
//! memory indices plus one extent-2 axis per wire whose value is still
//! open, so merging two children is a `d^3` matrix product per axis
//! assignment, followed by the node's gate layer applied to the axis
//! bookkeeping rather than to data.
//!
//! A node's wire states are summarized by a signature: the number of
//! committed wires (whose values are immutable once decided) plus the
//! pattern of the active region. Messages are cached per node under their
//! signature, so a decoding step only recomputes the nodes along the paths
//! whose signatures changed — `O(log N)` of them — giving the
//! `O(d^3 N log N)` full-decode cost.

use crate::channel::Mpo;
use crate::code::{Circuit, Level};
use crate::scaled::Scaled;
use crate::Scalar;

use super::{DecodeError, DecodeOptions, DecodeStats, StepTable, WindowLeg};

const MAX_LOCAL_LINKS: usize = 8;

/// Wire expression during a level push: affine over the parent's open axes
/// (`tmask`) and locally promoted parity links (`smask`), or a pure sum.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Tag {
    Expr { tmask: u16, smask: u16, cst: bool },
    Sum,
}

impl Tag {
    fn constant(v: bool) -> Tag {
        Tag::Expr { tmask: 0, smask: 0, cst: v }
    }

    fn xor(self, other: Tag) -> Tag {
        match (self, other) {
            (Tag::Sum, _) | (_, Tag::Sum) => Tag::Sum,
            (
                Tag::Expr { tmask: ta, smask: sa, cst: ca },
                Tag::Expr { tmask: tb, smask: sb, cst: cb },
            ) => Tag::Expr { tmask: ta ^ tb, smask: sa ^ sb, cst: ca ^ cb },
        }
    }
}

/// Signature of one active-region wire.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum SigTag {
    Fixed(bool),
    Open,
}

/// Cache key: committed prefix length plus the active-region pattern.
/// Committed values are immutable within a pass, so they participate only
/// through the count.
#[derive(Clone, Debug, PartialEq, Eq)]
struct Sig {
    f: usize,
    region: Vec<SigTag>,
}

impl Sig {
    fn open_axes(&self) -> usize {
        self.region.iter().filter(|t| matches!(t, SigTag::Open)).count()
    }
}

/// Block message: `data[(axis assignment) * d^2 ..]` is the `d x d` memory
/// block, with an accumulated binary exponent.
#[derive(Clone, Debug)]
struct Message<S> {
    k: usize,
    d: usize,
    data: Vec<S>,
    exp: i64,
}

impl<S: Scalar> Message<S> {
    fn zeros(k: usize, d: usize, exp: i64) -> Self {
        Message { k, d, data: vec![S::zero(); (1 << k) * d * d], exp }
    }

    fn from_mat(mat: &[S], d: usize) -> Self {
        Message { k: 0, d, data: mat.to_vec(), exp: 0 }
    }

    fn from_pair(mat0: &[S], mat1: &[S], d: usize) -> Self {
        let mut data = Vec::with_capacity(2 * d * d);
        data.extend_from_slice(mat0);
        data.extend_from_slice(mat1);
        Message { k: 1, d, data, exp: 0 }
    }

    fn block(&self, a: usize) -> &[S] {
        let sz = self.d * self.d;
        &self.data[a * sz..(a + 1) * sz]
    }

    /// Rescales the maximum magnitude into `[1, 2)` using exact powers of
    /// two, accumulating the exponent.
    fn rescale(&mut self) {
        let m = self.data.iter().fold(S::zero(), |a, &b| a.max(b.abs()));
        if m == S::zero() {
            return;
        }
        let shift = Scaled::from_value(m).exp;
        if shift != 0 {
            crate::scaled::scale_slice_exp2(&mut self.data, -shift);
            self.exp += shift;
        }
    }
}

/// Expression mapping a child axis to the parent's axes and local links.
#[derive(Clone, Copy, Debug)]
struct Expr {
    tmask: u16,
    smask: u16,
    cst: bool,
}

impl Expr {
    fn eval(&self, t: usize, sg: usize) -> bool {
        let tp = (self.tmask as usize & t).count_ones() & 1 == 1;
        let sp = (self.smask as usize & sg).count_ones() & 1 == 1;
        tp ^ sp ^ self.cst
    }
}

struct LevelPlan {
    sig_l: Sig,
    sig_r: Sig,
    exprs_l: Vec<Expr>,
    exprs_r: Vec<Expr>,
    n_sigma: usize,
    promotions: u64,
}

struct Node<S> {
    fixed: Vec<bool>,
    cache: Option<(Sig, Message<S>)>,
}

/// Per-frame decoding state of the fast engine: committed wire values and
/// cached messages for every node of the circuit tree.
pub struct DecodeState<S> {
    n: u32,
    d: usize,
    opts: DecodeOptions,
    nodes: Vec<Node<S>>,
    stats: DecodeStats,
}

impl<S: Scalar> DecodeState<S> {
    pub fn new(circuit: &Circuit, bond_dimension: usize, opts: DecodeOptions) -> Self {
        let n = circuit.steps();
        let nodes = (0..(2usize << n))
            .map(|_| Node { fixed: Vec::new(), cache: None })
            .collect();
        DecodeState { n, d: bond_dimension, opts, nodes, stats: DecodeStats::default() }
    }

    pub fn stats(&self) -> DecodeStats {
        self.stats
    }

    /// Committed input bits so far.
    pub fn committed(&self) -> &[bool] {
        &self.nodes[1].fixed
    }

    pub fn reset(&mut self) {
        for node in self.nodes.iter_mut() {
            node.fixed.clear();
            node.cache = None;
        }
    }

    /// Aligns the committed prefix with `prefix`, extending or replaying as
    /// needed.
    pub fn ensure_prefix(&mut self, circuit: &Circuit, prefix: &[bool]) -> Result<(), DecodeError> {
        let have = self.nodes[1].fixed.len();
        let extends = have <= prefix.len() && self.nodes[1].fixed[..] == prefix[..have];
        if !extends {
            self.reset();
        }
        let start = self.nodes[1].fixed.len();
        if start < prefix.len() {
            let ext: Vec<bool> = prefix[start..].to_vec();
            self.commit(circuit, start, &ext)?;
        }
        Ok(())
    }

    /// Appends decided window values and propagates newly determined wire
    /// values down the tree.
    pub fn commit(
        &mut self,
        circuit: &Circuit,
        start: usize,
        values: &[bool],
    ) -> Result<(), DecodeError> {
        self.check_shape(circuit)?;
        if self.nodes[1].fixed.len() != start {
            return Err(DecodeError::Internal(format!(
                "commit at {start} but {} bits are committed",
                self.nodes[1].fixed.len()
            )));
        }
        self.nodes[1].fixed.extend_from_slice(values);
        self.propagate(circuit, 1, 0);
        Ok(())
    }

    /// Marginal table over the window's open positions given the committed
    /// prefix.
    pub(crate) fn window_table(
        &mut self,
        circuit: &Circuit,
        mpo: &Mpo<S>,
        prefix: &[bool],
        legs: &[WindowLeg],
    ) -> Result<StepTable<S>, DecodeError> {
        self.check_shape(circuit)?;
        if mpo.bond_dimension() != self.d {
            return Err(DecodeError::Internal(format!(
                "bond dimension changed: {} vs {}",
                mpo.bond_dimension(),
                self.d
            )));
        }
        if prefix.len() != self.nodes[1].fixed.len() || prefix != self.nodes[1].fixed.as_slice() {
            return Err(DecodeError::Internal(
                "window query disagrees with the committed prefix".into(),
            ));
        }
        let region: Vec<SigTag> = legs
            .iter()
            .map(|l| match l {
                WindowLeg::Open => SigTag::Open,
                WindowLeg::Fixed(b) => SigTag::Fixed(*b),
            })
            .collect();
        let sig = Sig { f: prefix.len(), region };
        let k = sig.open_axes();
        if k > self.opts.max_open_axes {
            return Err(DecodeError::OpenAxisOverflow { axes: k, max: self.opts.max_open_axes });
        }
        let msg = self.query(circuit, mpo, 1, 0, &sig)?;
        let d = self.d;
        let left = mpo.left_boundary();
        let right = mpo.right_boundary();
        let mut entries = Vec::with_capacity(1 << k);
        for idx in 0..(1usize << k) {
            // Table index is MSB-first over open positions; message axis i
            // is the i-th open position.
            let mut a = 0usize;
            for i in 0..k {
                if (idx >> (k - 1 - i)) & 1 == 1 {
                    a |= 1 << i;
                }
            }
            let block = msg.block(a);
            let mut acc = S::zero();
            for s in 0..d {
                if left[s] == S::zero() {
                    continue;
                }
                let mut row = S::zero();
                for s2 in 0..d {
                    row = row + block[s * d + s2] * right[s2];
                }
                acc = acc + left[s] * row;
            }
            entries.push(Scaled::from_parts(acc, msg.exp));
        }
        Ok(StepTable::from_scaled(entries))
    }

    fn check_shape(&self, circuit: &Circuit) -> Result<(), DecodeError> {
        if circuit.steps() != self.n {
            return Err(DecodeError::LengthMismatch {
                circuit: circuit.block_len(),
                mpo: 1usize << self.n,
            });
        }
        Ok(())
    }

    fn query(
        &mut self,
        circuit: &Circuit,
        mpo: &Mpo<S>,
        node: usize,
        depth: usize,
        sig: &Sig,
    ) -> Result<Message<S>, DecodeError> {
        if self.opts.use_cache {
            let hit = match &self.nodes[node].cache {
                Some((cached_sig, msg)) if cached_sig == sig => Some(msg.clone()),
                _ => None,
            };
            if let Some(msg) = hit {
                self.stats.cache_hits += 1;
                return Ok(msg);
            }
        }
        let msg = if depth == self.n as usize {
            self.leaf_message(mpo, node, sig)?
        } else {
            let plan = self.push_level(circuit.level(depth), node, sig)?;
            self.stats.sigma_promotions += plan.promotions;
            let ml = self.query(circuit, mpo, 2 * node, depth + 1, &plan.sig_l)?;
            let mr = self.query(circuit, mpo, 2 * node + 1, depth + 1, &plan.sig_r)?;
            self.merge(sig, &plan, &ml, &mr)?
        };
        let entries = msg.data.len() as u64;
        if entries > self.stats.max_message_entries {
            self.stats.max_message_entries = entries;
        }
        if self.opts.use_cache {
            self.nodes[node].cache = Some((sig.clone(), msg.clone()));
        }
        Ok(msg)
    }

    fn leaf_message(
        &mut self,
        mpo: &Mpo<S>,
        node: usize,
        sig: &Sig,
    ) -> Result<Message<S>, DecodeError> {
        let pos = node - (1usize << self.n);
        let site = mpo.site(pos);
        let d = self.d;
        self.stats.contractions += 1;
        let mut msg = match (sig.f, sig.region.as_slice()) {
            (1, []) => Message::from_mat(site.mat(self.nodes[node].fixed[0]), d),
            (0, []) => Message::from_mat(site.mat_summed(), d),
            (0, [SigTag::Fixed(v)]) => Message::from_mat(site.mat(*v), d),
            (0, [SigTag::Open]) => Message::from_pair(site.mat(false), site.mat(true), d),
            _ => {
                return Err(DecodeError::Internal(format!(
                    "leaf signature out of shape: f={} region={:?}",
                    sig.f, sig.region
                )))
            }
        };
        msg.rescale();
        Ok(msg)
    }

    /// Pushes a node signature through its gate layer, producing the
    /// children signatures and the mapping from child axes to parent axes
    /// and local parity links.
    fn push_level(
        &self,
        level: &Level,
        node: usize,
        sig: &Sig,
    ) -> Result<LevelPlan, DecodeError> {
        let m = level.block_size;
        if sig.f + sig.region.len() > m {
            return Err(DecodeError::Internal("signature longer than the block".into()));
        }
        let fixed = &self.nodes[node].fixed;
        if fixed.len() < sig.f {
            return Err(DecodeError::Internal(format!(
                "node has {} committed wires, signature claims {}",
                fixed.len(),
                sig.f
            )));
        }
        let mut tags: Vec<Tag> = Vec::with_capacity(m);
        let mut t_axis = 0u32;
        for i in 0..m {
            if i < sig.f {
                tags.push(Tag::constant(fixed[i]));
            } else if i < sig.f + sig.region.len() {
                match sig.region[i - sig.f] {
                    SigTag::Fixed(v) => tags.push(Tag::constant(v)),
                    SigTag::Open => {
                        tags.push(Tag::Expr { tmask: 1 << t_axis, smask: 0, cst: false });
                        t_axis += 1;
                    }
                }
            } else {
                tags.push(Tag::Sum);
            }
        }
        let mut n_sigma = 0usize;
        let mut promotions = 0u64;
        apply_level_tags(level, &mut tags, &mut n_sigma, &mut promotions)?;

        let half = m / 2;
        let extract = |child: usize, pick: &dyn Fn(usize) -> Tag| -> Result<(Sig, Vec<Expr>), DecodeError> {
            let committed = self.nodes[child].fixed.len();
            let mut region = Vec::new();
            let mut exprs = Vec::new();
            let mut j = 0usize;
            while j < half && j < committed {
                debug_assert_eq!(
                    pick(j),
                    Tag::constant(self.nodes[child].fixed[j]),
                    "committed wire reclassified"
                );
                j += 1;
            }
            while j < half {
                match pick(j) {
                    Tag::Sum => break,
                    Tag::Expr { tmask, smask, cst } => {
                        if tmask == 0 && smask == 0 {
                            region.push(SigTag::Fixed(cst));
                        } else {
                            region.push(SigTag::Open);
                            exprs.push(Expr { tmask, smask, cst });
                        }
                    }
                }
                j += 1;
            }
            // Beyond the active region everything must be summed.
            for jj in j..half {
                if pick(jj) != Tag::Sum {
                    return Err(DecodeError::Internal(
                        "active region is not contiguous".into(),
                    ));
                }
            }
            Ok((Sig { f: committed, region }, exprs))
        };

        let (sig_l, exprs_l) = extract(2 * node, &|j| tags[2 * j])?;
        let (sig_r, exprs_r) = extract(2 * node + 1, &|j| tags[2 * j + 1])?;
        for (sig_c, exprs_c) in [(&sig_l, &exprs_l), (&sig_r, &exprs_r)] {
            let axes = sig_c.open_axes();
            debug_assert_eq!(axes, exprs_c.len());
            if axes > self.opts.max_open_axes {
                return Err(DecodeError::OpenAxisOverflow {
                    axes,
                    max: self.opts.max_open_axes,
                });
            }
        }
        Ok(LevelPlan { sig_l, sig_r, exprs_l, exprs_r, n_sigma, promotions })
    }

    /// Base contraction: joins the children over the shared memory index for
    /// every assignment of the parent's open axes, summing local parity
    /// links.
    fn merge(
        &mut self,
        sig: &Sig,
        plan: &LevelPlan,
        ml: &Message<S>,
        mr: &Message<S>,
    ) -> Result<Message<S>, DecodeError> {
        let d = self.d;
        let k = sig.open_axes();
        if k > self.opts.max_open_axes {
            return Err(DecodeError::OpenAxisOverflow { axes: k, max: self.opts.max_open_axes });
        }
        let mut out = Message::zeros(k, d, ml.exp + mr.exp);
        self.stats.contractions += 1;
        let sz = d * d;
        for t in 0..(1usize << k) {
            let ob = &mut out.data[t * sz..(t + 1) * sz];
            for sg in 0..(1usize << plan.n_sigma) {
                let mut gl = 0usize;
                for (i, e) in plan.exprs_l.iter().enumerate() {
                    if e.eval(t, sg) {
                        gl |= 1 << i;
                    }
                }
                let mut gr = 0usize;
                for (i, e) in plan.exprs_r.iter().enumerate() {
                    if e.eval(t, sg) {
                        gr |= 1 << i;
                    }
                }
                let lb = ml.block(gl);
                let rb = mr.block(gr);
                self.stats.matmuls += 1;
                for s in 0..d {
                    for mid in 0..d {
                        let lv = lb[s * d + mid];
                        if lv == S::zero() {
                            continue;
                        }
                        for s2 in 0..d {
                            ob[s * d + s2] = ob[s * d + s2] + lv * rb[mid * d + s2];
                        }
                    }
                }
            }
        }
        out.rescale();
        Ok(out)
    }

    /// Propagates committed values downward: a child wire becomes committed
    /// once every input feeding it is committed.
    fn propagate(&mut self, circuit: &Circuit, node: usize, depth: usize) {
        if depth == self.n as usize {
            return;
        }
        let level = circuit.level(depth);
        let m = level.block_size;
        let f = self.nodes[node].fixed.len();
        let mut tags: Vec<Tag> = (0..m)
            .map(|i| {
                if i < f {
                    Tag::constant(self.nodes[node].fixed[i])
                } else {
                    Tag::Sum
                }
            })
            .collect();
        let mut n_sigma = 0usize;
        let mut promotions = 0u64;
        apply_level_tags(level, &mut tags, &mut n_sigma, &mut promotions)
            .expect("commit push cannot overflow");
        for (child, offset) in [(2 * node, 0usize), (2 * node + 1, 1usize)] {
            let mut appended = false;
            let mut j = self.nodes[child].fixed.len();
            while j < m / 2 {
                match tags[2 * j + offset] {
                    Tag::Expr { tmask: 0, smask: 0, cst } => {
                        self.nodes[child].fixed.push(cst);
                        appended = true;
                        j += 1;
                    }
                    _ => break,
                }
            }
            if appended {
                self.propagate(circuit, child, depth + 1);
            }
        }
    }
}

/// Applies a level's sublayers to wire tags, promoting summed controls that
/// feed unsummed targets into explicit parity links.
fn apply_level_tags(
    level: &Level,
    tags: &mut [Tag],
    n_sigma: &mut usize,
    promotions: &mut u64,
) -> Result<(), DecodeError> {
    for sublayer in &level.sublayers {
        for g in sublayer {
            let t = tags[g.target];
            let c = tags[g.control];
            match (t, c) {
                (Tag::Sum, _) => {
                    // Summing the target output sums its input; the control
                    // is untouched.
                }
                (_, Tag::Sum) => {
                    if *n_sigma >= MAX_LOCAL_LINKS {
                        return Err(DecodeError::SigmaOverflow {
                            count: *n_sigma + 1,
                            max: MAX_LOCAL_LINKS,
                        });
                    }
                    let link = Tag::Expr { tmask: 0, smask: 1 << *n_sigma, cst: false };
                    *n_sigma += 1;
                    *promotions += 1;
                    tags[g.control] = link;
                    tags[g.target] = t.xor(link);
                }
                (t, c) => {
                    tags[g.target] = t.xor(c);
                }
            }
        }
    }
    Ok(())
}
