//! Rewrite state for building an amalgamated free product one generator at
//! a time.
//!
//! The state is a direct-sum description with finite traces, plus a set of
//! tracked projections. A tracked projection is stored by its location: the
//! trace of its cut in every summand it touches. Each rewrite replaces the
//! summands touched by the projections involved and remaps every location
//! that met them. All other summands and locations are untouched.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::algebra::{AlgebraDesc, ProjectionSpec, Size, Summand, SummandKind};
use crate::dimension::summand_rdim;
use crate::exactnum::{DimValue, ExtScalar, Rational};

pub type SummandId = u64;
pub type Handle = u64;
/// Trace of a projection's cut in each summand it touches; no zero entries.
pub type Loc = BTreeMap<SummandId, Rational>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    /// A minimal central endpoint is absorbed by amplifying the other side.
    Amplify,
    /// Partial isometry with every touched summand a free group factor.
    Glue,
    /// Partial isometry through the two-by-two matrix rewrite.
    M2,
    /// A block is copied with new trace weights.
    Split,
    /// A frozen free group factor summand is restored.
    Peel,
    /// Chain blocks are replaced by their diffuse limit.
    Limit,
    DiffuseDiffuse,
    FreeFree,
    FreeHyperfinite,
    FreeGeneral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingFlag {
    Isomorphism,
    Standard,
    Substandard,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LineageEvent {
    pub step: usize,
    pub rule: Rule,
    pub summand: String,
    pub parents: Vec<String>,
    pub kind: SummandKind,
    pub embedding: EmbeddingFlag,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("endpoint traces differ: {0} vs {1}")]
    UnequalTraces(Rational, Rational),
    #[error("projection has zero trace")]
    ZeroProjection,
    #[error("no tracked projection with handle {0}")]
    Dangling(Handle),
    #[error("copy weights sum to {got}, block has trace {expected}")]
    BadWeights { expected: Rational, got: Rational },
    #[error("an endpoint is a minimal central projection of the corner")]
    MinimalCentral,
    #[error("projection trace {got} is not half of the total trace {total}")]
    NotHalf { got: ExtScalar, total: ExtScalar },
    #[error("engine states need finite traces, `{0}` has infinite trace")]
    Infinite(String),
    #[error("engine invariant violated: {0}")]
    Invariant(String),
}

#[derive(Debug, Clone)]
pub struct EngineState {
    summands: BTreeMap<SummandId, Summand>,
    locs: BTreeMap<Handle, Loc>,
    index: BTreeMap<SummandId, BTreeSet<Handle>>,
    /// Handles placed or moved since the last finished step.
    dirty: BTreeSet<Handle>,
    next_id: SummandId,
    next_handle: Handle,
    next_label: u64,
    total: Rational,
    steps: usize,
    pub lineage: Vec<LineageEvent>,
}

fn trace_of(kind: &SummandKind) -> Rational {
    kind.total_trace().finite().cloned().expect("engine summands have finite trace")
}

fn size_of(kind: &SummandKind) -> u64 {
    match kind {
        SummandKind::Matrix { size: Size::Finite(n), .. } => *n,
        _ => unreachable!("only finite matrix summands have a size"),
    }
}

fn int(n: u64) -> Rational {
    Rational::from_integer(n.into())
}

fn to_u64(r: &Rational) -> Result<u64, EngineError> {
    if r.is_integer() {
        r.to_integer().to_u64().ok_or_else(|| EngineError::Invariant(format!("{r} does not fit a block size")))
    } else {
        Err(EngineError::Invariant(format!("{r} is not a whole number of minimal projections")))
    }
}

fn add_to(loc: &mut Loc, id: SummandId, v: Rational) {
    if v.is_zero() {
        return;
    }
    *loc.entry(id).or_insert_with(Rational::zero) += v;
}

/// Free group factor parameter from a regulated dimension; zero means the
/// piece is hyperfinite.
fn factor_kind(rdim: DimValue, trace: Rational) -> Result<SummandKind, EngineError> {
    match rdim {
        DimValue::Finite(s) if s.is_zero() => Ok(SummandKind::DiffuseHyperfinite { total_trace: trace.into() }),
        DimValue::Finite(s) if s.is_positive() => Ok(SummandKind::FreeFactor { s: s.into(), t: trace.into() }),
        DimValue::PosInf => Ok(SummandKind::FreeFactor { s: ExtScalar::Infinity, t: trace.into() }),
        other => Err(EngineError::Invariant(format!("free part would have regulated dimension {other}"))),
    }
}

struct CornerBlock {
    big_n: u64,
    u: Rational,
}

impl EngineState {
    pub fn new(a: &AlgebraDesc) -> Result<Self, EngineError> {
        let mut st = EngineState {
            summands: BTreeMap::new(),
            locs: BTreeMap::new(),
            index: BTreeMap::new(),
            dirty: BTreeSet::new(),
            next_id: 0,
            next_handle: 0,
            next_label: 0,
            total: Rational::zero(),
            steps: 0,
            lineage: Vec::new(),
        };
        for s in &a.summands {
            match s.total_trace() {
                ExtScalar::Finite(t) => st.total += t,
                ExtScalar::Infinity => return Err(EngineError::Infinite(s.label.clone())),
            }
            if matches!(s.kind, SummandKind::Matrix { size: Size::Infinite, .. }) {
                return Err(EngineError::Infinite(s.label.clone()));
            }
            st.insert(s.clone());
        }
        Ok(st)
    }

    /// Current description, summands in creation order.
    pub fn algebra(&self) -> AlgebraDesc {
        AlgebraDesc::new(self.summands.values().cloned().collect())
    }

    pub fn ids(&self) -> Vec<SummandId> {
        self.summands.keys().copied().collect()
    }

    pub fn summand(&self, id: SummandId) -> &Summand {
        &self.summands[&id]
    }

    pub fn total_trace(&self) -> &Rational {
        &self.total
    }

    /// Number of rewrites applied so far.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn rdim(&self) -> DimValue {
        self.summands.values().map(|s| summand_rdim(&s.kind)).sum()
    }

    pub fn track(&mut self, loc: Loc) -> Handle {
        let h = self.next_handle;
        self.next_handle += 1;
        for id in loc.keys() {
            self.index.entry(*id).or_default().insert(h);
        }
        self.locs.insert(h, loc);
        self.dirty.insert(h);
        h
    }

    /// Tracks a projection given against [`EngineState::algebra`]'s order.
    pub fn track_spec(&mut self, p: &ProjectionSpec) -> Result<Handle, EngineError> {
        let ids = self.ids();
        if p.alloc.len() != ids.len() {
            return Err(EngineError::Invariant("projection length does not match the state".into()));
        }
        let mut loc = Loc::new();
        for (id, x) in ids.into_iter().zip(&p.alloc) {
            match x {
                ExtScalar::Finite(v) => add_to(&mut loc, id, v.clone()),
                ExtScalar::Infinity => return Err(EngineError::Infinite(format!("projection on summand {id}"))),
            }
        }
        Ok(self.track(loc))
    }

    pub fn untrack(&mut self, h: Handle) {
        self.dirty.remove(&h);
        if let Some(loc) = self.locs.remove(&h) {
            for id in loc.keys() {
                if let Some(set) = self.index.get_mut(id) {
                    set.remove(&h);
                }
            }
        }
    }

    pub fn loc(&self, h: Handle) -> Result<&Loc, EngineError> {
        self.locs.get(&h).ok_or(EngineError::Dangling(h))
    }

    /// A location as a projection aligned with [`EngineState::algebra`].
    pub fn spec_of(&self, loc: &Loc) -> ProjectionSpec {
        ProjectionSpec::new(
            self.summands
                .keys()
                .map(|id| ExtScalar::Finite(loc.get(id).cloned().unwrap_or_else(Rational::zero)))
                .collect(),
        )
    }

    fn fresh_label(&mut self) -> String {
        self.next_label += 1;
        format!("z{}", self.next_label)
    }

    fn insert(&mut self, s: Summand) -> SummandId {
        let id = self.next_id;
        self.next_id += 1;
        self.summands.insert(id, s);
        id
    }

    fn insert_new(&mut self, kind: SummandKind) -> SummandId {
        let label = self.fresh_label();
        self.insert(Summand::new(kind, label))
    }

    fn handles_on<'a>(&self, ids: impl IntoIterator<Item = &'a SummandId>) -> BTreeSet<Handle> {
        ids.into_iter().filter_map(|id| self.index.get(id)).flatten().copied().collect()
    }

    fn set_loc(&mut self, h: Handle, loc: Loc) {
        if let Some(old) = self.locs.get(&h) {
            for id in old.keys() {
                if !loc.contains_key(id) {
                    if let Some(set) = self.index.get_mut(id) {
                        set.remove(&h);
                    }
                }
            }
        }
        for id in loc.keys() {
            self.index.entry(*id).or_default().insert(h);
        }
        self.locs.insert(h, loc);
        self.dirty.insert(h);
    }

    fn remove_summands(&mut self, ids: &BTreeSet<SummandId>) -> Vec<String> {
        let mut labels = Vec::new();
        for id in ids {
            if let Some(s) = self.summands.remove(id) {
                labels.push(s.label);
            }
            self.index.remove(id);
        }
        labels
    }

    fn record(&mut self, rule: Rule, id: SummandId, parents: Vec<String>, embedding: EmbeddingFlag) {
        let s = &self.summands[&id];
        self.lineage.push(LineageEvent {
            step: self.steps,
            rule,
            summand: s.label.clone(),
            parents,
            kind: s.kind.clone(),
            embedding,
        });
    }

    fn finish_step(&mut self) -> Result<(), EngineError> {
        self.steps += 1;
        let total: Rational = self.summands.values().map(|s| trace_of(&s.kind)).sum();
        if total != self.total {
            return Err(EngineError::Invariant(format!("total trace drifted from {} to {total}", self.total)));
        }
        let dirty = std::mem::take(&mut self.dirty);
        if cfg!(debug_assertions) {
            for (h, loc) in &self.locs {
                if let Some(id) = loc.keys().find(|id| !self.summands.contains_key(id)) {
                    return Err(EngineError::Invariant(format!("handle {h} points at removed summand {id}")));
                }
            }
            for h in &dirty {
                self.check_location(*h)?;
            }
        }
        Ok(())
    }

    fn check_location(&self, h: Handle) -> Result<(), EngineError> {
        for (id, v) in self.loc(h)? {
            let s = self
                .summands
                .get(id)
                .ok_or_else(|| EngineError::Invariant(format!("handle {h} points at a removed summand")))?;
            let fits = v.is_positive()
                && match &s.kind {
                    // `v = k u` with `k` a whole number at most `n`.
                    SummandKind::Matrix { size: Size::Finite(n), minimal_trace: ExtScalar::Finite(u) } => {
                        let (num, den) = (v.numer() * u.denom(), v.denom() * u.numer());
                        if !(&num % &den).is_zero() {
                            return Err(EngineError::Invariant(format!(
                                "handle {h} cuts {v} from `{}`, not a whole number of minimal projections",
                                s.label
                            )));
                        }
                        num / den <= BigInt::from(*n)
                    }
                    kind => *v <= trace_of(kind),
                };
            if !fits {
                return Err(EngineError::Invariant(format!("handle {h} has cut {v} in `{}`", s.label)));
            }
            if !self.index.get(id).is_some_and(|set| set.contains(&h)) {
                return Err(EngineError::Invariant(format!("handle {h} is missing from the index of summand {id}")));
            }
        }
        Ok(())
    }

    /// Every tracked location fits inside its summands.
    pub fn check_locations(&self) -> Result<(), EngineError> {
        for h in self.locs.keys() {
            self.check_location(*h)?;
        }
        for (id, set) in &self.index {
            for h in set {
                if !self.locs.get(h).is_some_and(|l| l.contains_key(id)) {
                    return Err(EngineError::Invariant(format!("stale index entry for handle {h}")));
                }
            }
        }
        Ok(())
    }

    /// The summand on which `x` is a minimal central projection of the corner
    /// cut out by `x + other`, if there is one.
    fn minimal_central(&self, x: &Loc, other: &Loc) -> Option<SummandId> {
        let (id, v) = x.iter().next().filter(|_| x.len() == 1)?;
        let u = self.summands[id].kind.minimal_trace()?;
        (u == v && !other.contains_key(id)).then_some(*id)
    }

    fn corner_blocks<'a>(&self, ids: impl IntoIterator<Item = &'a SummandId>) -> BTreeMap<SummandId, CornerBlock> {
        ids.into_iter()
            .filter_map(|id| match &self.summands[id].kind {
                SummandKind::Matrix { minimal_trace: ExtScalar::Finite(u), size: Size::Finite(n) } => {
                    Some((*id, CornerBlock { big_n: *n, u: u.clone() }))
                }
                _ => None,
            })
            .collect()
    }

    /// Adds a partial isometry between the projections at `h1` and `h2`,
    /// which must have equal traces. Afterwards both handles share a location.
    pub fn add_partial_isometry(&mut self, h1: Handle, h2: Handle) -> Result<(), EngineError> {
        let x1 = self.loc(h1)?.clone();
        let x2 = self.loc(h2)?.clone();
        let a: Rational = x1.values().sum();
        let b: Rational = x2.values().sum();
        if a != b {
            return Err(EngineError::UnequalTraces(a, b));
        }
        if a.is_zero() {
            return Err(EngineError::ZeroProjection);
        }
        if let Some(z) = self.minimal_central(&x1, &x2) {
            self.amplify(z, &a, &x2);
        } else if let Some(z) = self.minimal_central(&x2, &x1) {
            self.amplify(z, &a, &x1);
        } else {
            self.m2(&x1, &x2, &a)?;
        }
        if self.locs[&h1] != self.locs[&h2] {
            return Err(EngineError::Invariant("endpoints disagree after adding a partial isometry".into()));
        }
        self.finish_step()
    }

    /// Two-by-two rewrite on the corner, assuming no endpoint is minimal central.
    pub(crate) fn add_partial_isometry_generic(&mut self, h1: Handle, h2: Handle) -> Result<(), EngineError> {
        let x1 = self.loc(h1)?.clone();
        let x2 = self.loc(h2)?.clone();
        let a: Rational = x1.values().sum();
        if self.minimal_central(&x1, &x2).is_some() || self.minimal_central(&x2, &x1).is_some() {
            return Err(EngineError::MinimalCentral);
        }
        self.m2(&x1, &x2, &a)?;
        self.finish_step()
    }

    /// The minimal central summand `z` of the corner is absorbed: every
    /// summand under `other` grows by the matching share of `z`.
    fn amplify(&mut self, z: SummandId, a: &Rational, other: &Loc) {
        let n1 = int(size_of(&self.summands[&z].kind));
        let moved = self.handles_on([&z]);
        let mut parents = self.remove_summands(&BTreeSet::from([z]));
        let grown = self.handles_on(other.keys());
        self.dirty.extend(grown);
        for (w, f) in other {
            let grow = &n1 * f;
            let s = self.summands.get_mut(w).expect("other endpoint is live");
            parents.push(s.label.clone());
            s.kind = match &s.kind {
                SummandKind::Matrix { size: Size::Finite(n), minimal_trace } => {
                    let u = minimal_trace.finite().expect("finite");
                    let extra = to_u64(&(&grow / u)).expect("amplification is a whole block");
                    SummandKind::Matrix { size: Size::Finite(n + extra), minimal_trace: minimal_trace.clone() }
                }
                SummandKind::FreeFactor { s, t } => {
                    SummandKind::FreeFactor { s: s.clone(), t: t.clone() + grow.into() }
                }
                SummandKind::DiffuseHyperfinite { total_trace } => {
                    SummandKind::DiffuseHyperfinite { total_trace: total_trace.clone() + grow.into() }
                }
                SummandKind::Matrix { size: Size::Infinite, .. } => unreachable!("engine blocks are finite"),
            };
            s.label = {
                self.next_label += 1;
                format!("z{}", self.next_label)
            };
            let flag = if s.kind.is_matrix() { EmbeddingFlag::Isomorphism } else { EmbeddingFlag::Standard };
            let id = *w;
            self.record(Rule::Amplify, id, parents.clone(), flag);
        }
        for h in moved {
            let mut loc = self.locs[&h].clone();
            let k = loc.remove(&z).expect("indexed") / a;
            for (w, f) in other {
                add_to(&mut loc, *w, &k * f);
            }
            self.set_loc(h, loc);
        }
    }

    fn m2(&mut self, x1: &Loc, x2: &Loc, a: &Rational) -> Result<(), EngineError> {
        let touched: BTreeSet<SummandId> = x1.keys().chain(x2.keys()).copied().collect();
        let blocks = self.corner_blocks(&touched);
        let zero = Rational::zero();
        let n_of = |x: &Loc, id: &SummandId, u: &Rational| x.get(id).unwrap_or(&zero) / u;
        let mut dim = Rational::zero();
        for (id, b) in &blocks {
            let n = n_of(x1, id, &b.u) + n_of(x2, id, &b.u);
            dim += &n * &n;
        }
        let all_matrix = blocks.len() == touched.len();

        // (block under x1, block under x2, size, minimal trace)
        let mut atoms: Vec<(SummandId, SummandId, u64, Rational)> = Vec::new();
        for (j, bj) in blocks.iter().filter(|(id, _)| !x2.contains_key(id)) {
            let nj = n_of(x1, j, &bj.u);
            for (jp, bjp) in blocks.iter().filter(|(id, _)| !x1.contains_key(id)) {
                let njp = n_of(x2, jp, &bjp.u);
                let lhs = &bj.u / &nj + &bjp.u / &njp;
                if lhs > *a {
                    let t = &nj * &njp * (lhs - a);
                    let size = to_u64(&(int(bj.big_n) * &njp + int(bjp.big_n) * &nj))?;
                    atoms.push((*j, *jp, size, t));
                }
            }
        }

        let touched_total: Rational = touched.iter().map(|id| trace_of(&self.summands[id].kind)).sum();
        let atoms_total: Rational = atoms.iter().map(|(_, _, n, t)| int(*n) * t).sum();
        let f_trace = touched_total - atoms_total;
        let rdim_touched: DimValue = touched.iter().map(|id| summand_rdim(&self.summands[id].kind)).sum();
        let atom_squares: Rational = atoms.iter().map(|(_, _, _, t)| t * t).sum();
        let f_rdim = rdim_touched + DimValue::Finite(a * a + atom_squares);

        let all_free = touched.iter().all(|id| matches!(self.summands[id].kind, SummandKind::FreeFactor { .. }));
        let any_diffuse = touched.iter().any(|id| !self.summands[id].kind.is_matrix());
        let (rule, flag) = if all_free {
            (Rule::Glue, EmbeddingFlag::Standard)
        } else if any_diffuse {
            (Rule::M2, EmbeddingFlag::Substandard)
        } else {
            (Rule::M2, EmbeddingFlag::Isomorphism)
        };

        let moved = self.handles_on(&touched);
        let parents = self.remove_summands(&touched);
        let atom_ids: Vec<SummandId> = atoms
            .iter()
            .map(|(_, _, n, t)| {
                self.insert_new(SummandKind::Matrix { size: Size::Finite(*n), minimal_trace: t.clone().into() })
            })
            .collect();
        for id in &atom_ids {
            self.record(rule, *id, parents.clone(), EmbeddingFlag::Isomorphism);
        }
        let f_id = if f_trace.is_positive() {
            let kind = if all_matrix && dim == int(4) {
                if f_rdim != DimValue::zero() {
                    return Err(EngineError::Invariant(format!(
                        "hyperfinite corner with regulated dimension {f_rdim}"
                    )));
                }
                SummandKind::DiffuseHyperfinite { total_trace: f_trace.into() }
            } else {
                factor_kind(f_rdim, f_trace)?
            };
            let id = self.insert_new(kind);
            self.record(rule, id, parents, flag);
            Some(id)
        } else if f_trace.is_zero() {
            if f_rdim != DimValue::zero() {
                return Err(EngineError::Invariant(format!("empty free part carries regulated dimension {f_rdim}")));
            }
            None
        } else {
            return Err(EngineError::Invariant("atoms exceed the corner trace".into()));
        };

        for h in moved {
            let old = self.locs[&h].clone();
            let mut loc = Loc::new();
            for (id, v) in old {
                if !touched.contains(&id) {
                    add_to(&mut loc, id, v);
                    continue;
                }
                let Some(b) = blocks.get(&id) else {
                    add_to(&mut loc, f_id.ok_or_else(|| EngineError::Invariant("lost a diffuse cut".into()))?, v);
                    continue;
                };
                let k = &v / &b.u;
                let mut rem = b.u.clone();
                for ((j, jp, _, t), aid) in atoms.iter().zip(&atom_ids) {
                    let share = if *j == id {
                        n_of(x2, jp, &blocks[jp].u) * t
                    } else if *jp == id {
                        n_of(x1, j, &blocks[j].u) * t
                    } else {
                        continue;
                    };
                    rem -= &share;
                    add_to(&mut loc, *aid, &k * share);
                }
                if rem.is_negative() {
                    return Err(EngineError::Invariant("atom shares exceed a minimal projection".into()));
                }
                if rem.is_positive() {
                    add_to(&mut loc, f_id.ok_or_else(|| EngineError::Invariant("lost a matrix cut".into()))?, &k * rem);
                }
            }
            self.set_loc(h, loc);
        }
        Ok(())
    }

    /// Replaces the block whose minimal projection sits at `h` by copies with
    /// the given trace weights; returns one handle per copy.
    pub fn split(&mut self, h: Handle, weights: &[Rational]) -> Result<Vec<Handle>, EngineError> {
        let x = self.loc(h)?.clone();
        let t: Rational = x.values().sum();
        let got: Rational = weights.iter().sum();
        if got != t || weights.is_empty() || weights.iter().any(|w| !w.is_positive()) {
            return Err(EngineError::BadWeights { expected: t, got });
        }
        if weights.len() == 1 {
            return Ok(vec![h]);
        }
        let touched: BTreeSet<SummandId> = x.keys().copied().collect();
        let blocks = self.corner_blocks(&touched);

        // (corner block, copy index, minimal trace)
        let mut atoms: Vec<(SummandId, usize, Rational)> = Vec::new();
        for (j, b) in &blocks {
            let n = &x[j] / &b.u;
            for (i, w) in weights.iter().enumerate() {
                if &b.u / &n + w > t {
                    atoms.push((*j, i, &b.u + &n * w - &n * &t));
                }
            }
        }
        let hyperfinite =
            weights.len() == 2 && touched.len() == 2 && blocks.len() == 2 && blocks.iter().all(|(j, b)| x[j] == b.u);

        let touched_total: Rational = touched.iter().map(|id| trace_of(&self.summands[id].kind)).sum();
        let atoms_total: Rational = atoms.iter().map(|(j, _, c)| int(blocks[j].big_n) * c).sum();
        let f_trace = touched_total - atoms_total;
        let rdim_touched: DimValue = touched.iter().map(|id| summand_rdim(&self.summands[id].kind)).sum();
        let delta = &t * &t - weights.iter().map(|w| w * w).sum::<Rational>()
            + atoms.iter().map(|(_, _, c)| c * c).sum::<Rational>();
        let f_rdim = rdim_touched + DimValue::Finite(delta);
        let in_factor = touched.iter().any(|id| matches!(self.summands[id].kind, SummandKind::FreeFactor { .. }));
        let flag = if in_factor { EmbeddingFlag::Standard } else { EmbeddingFlag::Isomorphism };

        self.untrack(h);
        let moved = self.handles_on(&touched);
        let parents = self.remove_summands(&touched);
        let atom_ids: Vec<SummandId> = atoms
            .iter()
            .map(|(j, _, c)| {
                self.insert_new(SummandKind::Matrix {
                    size: Size::Finite(blocks[j].big_n),
                    minimal_trace: c.clone().into(),
                })
            })
            .collect();
        for id in &atom_ids {
            self.record(Rule::Split, *id, parents.clone(), EmbeddingFlag::Isomorphism);
        }
        let f_id = if f_trace.is_positive() {
            let kind = if hyperfinite {
                if f_rdim != DimValue::zero() {
                    return Err(EngineError::Invariant(format!("hyperfinite split with regulated dimension {f_rdim}")));
                }
                SummandKind::DiffuseHyperfinite { total_trace: f_trace.into() }
            } else {
                factor_kind(f_rdim, f_trace)?
            };
            let id = self.insert_new(kind);
            self.record(Rule::Split, id, parents, flag);
            Some(id)
        } else if f_rdim == DimValue::zero() {
            None
        } else {
            return Err(EngineError::Invariant(format!("empty free part carries regulated dimension {f_rdim}")));
        };
        let need_f = || f_id.ok_or_else(|| EngineError::Invariant("split lost trace".into()));

        let mut copies = Vec::with_capacity(weights.len());
        for (i, w) in weights.iter().enumerate() {
            let mut loc = Loc::new();
            let mut rem = w.clone();
            for ((j, ai, c), aid) in atoms.iter().zip(&atom_ids) {
                if *ai == i {
                    let share = &x[j] / &blocks[j].u * c;
                    rem -= &share;
                    add_to(&mut loc, *aid, share);
                }
            }
            if rem.is_negative() {
                return Err(EngineError::Invariant("copy is smaller than its atoms".into()));
            }
            if rem.is_positive() {
                add_to(&mut loc, need_f()?, rem);
            }
            copies.push(self.track(loc));
        }

        for g in moved {
            let old = self.locs[&g].clone();
            let mut loc = Loc::new();
            for (id, v) in old {
                if !touched.contains(&id) {
                    add_to(&mut loc, id, v);
                    continue;
                }
                let Some(b) = blocks.get(&id) else {
                    add_to(&mut loc, need_f()?, v);
                    continue;
                };
                let k = &v / &b.u;
                let mut rem = b.u.clone();
                for ((j, _, c), aid) in atoms.iter().zip(&atom_ids) {
                    if *j == id {
                        rem -= c;
                        add_to(&mut loc, *aid, &k * c);
                    }
                }
                if rem.is_positive() {
                    add_to(&mut loc, need_f()?, &k * rem);
                }
            }
            self.set_loc(g, loc);
        }
        self.finish_step()?;
        Ok(copies)
    }

    /// Replaces the summands `ids` by a single summand of kind `kind`, which
    /// must carry their combined trace. Locations move along.
    pub fn fuse(
        &mut self,
        ids: &BTreeSet<SummandId>,
        kind: SummandKind,
        rule: Rule,
        flag: EmbeddingFlag,
    ) -> Result<SummandId, EngineError> {
        let moved = self.handles_on(ids);
        let parents = self.remove_summands(ids);
        let id = self.insert_new(kind);
        self.record(rule, id, parents, flag);
        for h in moved {
            let old = self.locs[&h].clone();
            let mut loc = Loc::new();
            for (sid, v) in old {
                add_to(&mut loc, if ids.contains(&sid) { id } else { sid }, v);
            }
            self.set_loc(h, loc);
        }
        self.finish_step()?;
        Ok(id)
    }

    /// Changes the kind of one summand in place, keeping its trace.
    pub fn replace_kind(
        &mut self,
        id: SummandId,
        kind: SummandKind,
        rule: Rule,
        flag: EmbeddingFlag,
    ) -> Result<(), EngineError> {
        let parents = vec![self.summands[&id].label.clone()];
        let label = self.fresh_label();
        let s = self.summands.get_mut(&id).ok_or_else(|| EngineError::Invariant(format!("no summand {id}")))?;
        s.kind = kind;
        s.label = label;
        let on = self.handles_on([&id]);
        self.dirty.extend(on);
        self.record(rule, id, parents, flag);
        self.finish_step()
    }

    /// The state with every chain block replaced by its diffuse limit, or
    /// `None` when some chain block straddles several summands. A chain
    /// block with minimal trace `u` adds `u^2` to the free group factor
    /// holding it, and turns a matrix summand holding it diffuse.
    pub fn extrapolate(&self, chain: &[(Handle, Rational)]) -> Result<Option<EngineState>, EngineError> {
        let mut per: BTreeMap<SummandId, Rational> = BTreeMap::new();
        for (h, u) in chain {
            let x = self.loc(*h)?;
            if x.len() != 1 {
                return Ok(None);
            }
            let id = *x.keys().next().expect("one entry");
            *per.entry(id).or_insert_with(Rational::zero) += u * u;
        }
        let mut st = self.clone();
        for (id, sq) in per {
            let kind = match &st.summands[&id].kind {
                SummandKind::Matrix { .. } => {
                    SummandKind::DiffuseHyperfinite { total_trace: st.summand_trace(id).into() }
                }
                SummandKind::FreeFactor { s, t } => SummandKind::FreeFactor { s: s.clone() + sq.into(), t: t.clone() },
                SummandKind::DiffuseHyperfinite { .. } => continue,
            };
            st.replace_kind(id, kind, Rule::Limit, EmbeddingFlag::Standard)?;
        }
        Ok(Some(st))
    }

    /// Summands touched by the projection at `h`.
    pub fn touched(&self, h: Handle) -> Result<BTreeSet<SummandId>, EngineError> {
        Ok(self.loc(h)?.keys().copied().collect())
    }

    pub fn summand_trace(&self, id: SummandId) -> Rational {
        trace_of(&self.summands[&id].kind)
    }
}

/// `n` times `loc`.
pub fn scale_loc(loc: &Loc, n: &Rational) -> Loc {
    loc.iter().map(|(k, v)| (*k, v * n)).filter(|(_, v)| !v.is_zero()).collect()
}

/// Entrywise sum of locations.
pub fn sum_locs<'a>(locs: impl IntoIterator<Item = &'a Loc>) -> Loc {
    let mut out = Loc::new();
    for l in locs {
        for (k, v) in l {
            add_to(&mut out, *k, v.clone());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::canonicalize;
    use crate::exactnum::rat;

    fn ext(n: i64, d: i64) -> ExtScalar {
        ExtScalar::from_ratio(n, d)
    }

    fn shape(st: &EngineState) -> Vec<SummandKind> {
        canonicalize(&st.algebra()).shape()
    }

    fn loc(entries: &[(SummandId, Rational)]) -> Loc {
        entries.iter().cloned().collect()
    }

    #[test]
    fn halves_of_a_diffuse_summand_become_a_free_factor() {
        let mut st = EngineState::new(&AlgebraDesc::new(vec![Summand::diffuse(ext(1, 1), "h")])).unwrap();
        let p = st.track(loc(&[(0, rat(1, 2))]));
        let q = st.track(loc(&[(0, rat(1, 2))]));
        st.add_partial_isometry(p, q).unwrap();
        assert_eq!(shape(&st), vec![SummandKind::FreeFactor { s: ext(1, 4), t: ext(1, 1) }]);
    }

    #[test]
    fn minimal_projections_of_two_matrix_blocks_merge_them() {
        let a = AlgebraDesc::new(vec![Summand::matrix(2, rat(1, 4), "x"), Summand::matrix(2, rat(1, 4), "y")]);
        let mut st = EngineState::new(&a).unwrap();
        let p = st.track(loc(&[(0, rat(1, 4))]));
        let q = st.track(loc(&[(1, rat(1, 4))]));
        st.add_partial_isometry(p, q).unwrap();
        assert_eq!(shape(&st), vec![SummandKind::Matrix { size: Size::Finite(4), minimal_trace: ext(1, 4) }]);
    }

    #[test]
    fn unequal_endpoints_are_rejected() {
        let a = AlgebraDesc::new(vec![Summand::matrix(1, rat(1, 2), "x"), Summand::matrix(2, rat(1, 4), "y")]);
        let mut st = EngineState::new(&a).unwrap();
        let p = st.track(loc(&[(0, rat(1, 2))]));
        let q = st.track(loc(&[(1, rat(1, 4))]));
        assert_eq!(st.add_partial_isometry(p, q), Err(EngineError::UnequalTraces(rat(1, 2), rat(1, 4))));
    }

    #[test]
    fn minimal_central_blocks_merge() {
        let a = AlgebraDesc::new(vec![Summand::matrix(2, rat(1, 6), "x"), Summand::matrix(4, rat(1, 6), "y")]);
        let mut st = EngineState::new(&a).unwrap();
        let p = st.track(loc(&[(0, rat(1, 6))]));
        let q = st.track(loc(&[(1, rat(1, 6))]));
        let other = st.track(loc(&[(0, rat(1, 3))]));
        st.add_partial_isometry(p, q).unwrap();
        assert_eq!(shape(&st), vec![SummandKind::Matrix { size: Size::Finite(6), minimal_trace: ext(1, 6) }]);
        assert_eq!(st.loc(other).unwrap().values().sum::<Rational>(), rat(1, 3));
    }

    #[test]
    fn amplification_into_a_free_factor_keeps_s() {
        let a =
            AlgebraDesc::new(vec![Summand::matrix(3, rat(1, 6), "x"), Summand::free_factor(ext(2, 1), ext(1, 2), "f")]);
        let mut st = EngineState::new(&a).unwrap();
        let p = st.track(loc(&[(0, rat(1, 6))]));
        let q = st.track(loc(&[(1, rat(1, 6))]));
        st.add_partial_isometry(p, q).unwrap();
        assert_eq!(shape(&st), vec![SummandKind::FreeFactor { s: ext(2, 1), t: ext(1, 1) }]);
    }

    #[test]
    fn split_inside_a_free_factor() {
        let mut st =
            EngineState::new(&AlgebraDesc::new(vec![Summand::free_factor(ext(1, 4), ext(1, 1), "f")])).unwrap();
        let h = st.track(loc(&[(0, rat(1, 2))]));
        let copies = st.split(h, &[rat(1, 4), rat(1, 4)]).unwrap();
        assert_eq!(shape(&st), vec![SummandKind::FreeFactor { s: ext(3, 8), t: ext(1, 1) }]);
        assert_eq!(copies.len(), 2);
        assert!(st.loc(h).is_err());
    }

    #[test]
    fn split_of_a_whole_matrix_summand() {
        let mut st = EngineState::new(&AlgebraDesc::new(vec![Summand::matrix(2, rat(1, 4), "m")])).unwrap();
        let h = st.track(loc(&[(0, rat(1, 4))]));
        st.split(h, &[rat(1, 8), rat(1, 8)]).unwrap();
        let m = SummandKind::Matrix { size: Size::Finite(2), minimal_trace: ext(1, 8) };
        assert_eq!(shape(&st), vec![m.clone(), m]);
    }

    #[test]
    fn split_across_two_points_is_hyperfinite() {
        let a = AlgebraDesc::new(vec![Summand::matrix(1, rat(1, 2), "x"), Summand::matrix(1, rat(1, 2), "y")]);
        let mut st = EngineState::new(&a).unwrap();
        let h = st.track(loc(&[(0, rat(1, 2)), (1, rat(1, 2))]));
        st.split(h, &[rat(1, 2), rat(1, 2)]).unwrap();
        assert_eq!(shape(&st), vec![SummandKind::DiffuseHyperfinite { total_trace: ext(1, 1) }]);
    }

    #[test]
    fn every_rewrite_changes_rdim_by_the_expected_amount() {
        let a = AlgebraDesc::new(vec![
            Summand::matrix(1, rat(3, 8), "a"),
            Summand::matrix(1, rat(1, 8), "b"),
            Summand::matrix(2, rat(1, 8), "c"),
            Summand::matrix(1, rat(1, 4), "d"),
        ]);
        let mut st = EngineState::new(&a).unwrap();
        let before = st.rdim();
        let p = st.track(loc(&[(0, rat(3, 8)), (1, rat(1, 8))]));
        let q = st.track(loc(&[(2, rat(1, 4)), (3, rat(1, 4))]));
        st.add_partial_isometry(p, q).unwrap();
        assert_eq!(st.rdim(), before + DimValue::Finite(rat(1, 4)));
        let mut want = vec![
            SummandKind::FreeFactor { s: ext(1, 32), t: ext(3, 4) },
            SummandKind::Matrix { size: Size::Finite(2), minimal_trace: ext(1, 8) },
        ];
        want.sort_by_key(|k| k.sort_key());
        assert_eq!(shape(&st), canonicalize(&AlgebraDesc::from_kinds("w", want)).shape());

        let before = st.rdim();
        st.split(p, &[rat(1, 8), rat(3, 8)]).unwrap();
        assert_eq!(st.rdim(), before + DimValue::Finite(rat(1, 4) - rat(1, 64) - rat(9, 64)));
        assert!(st.check_locations().is_ok());
    }
}
