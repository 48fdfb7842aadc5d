//! Fast multipole evaluation of modal ring-source potentials on a uniform
//! quadtree.
//!
//! Moments `S_ij` and local coefficients `Phi_kl` are stored per box as
//! `coeffs[TriIndex2::at(i, j) * n_modes + n]`.

use std::collections::HashMap;
use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{FmmError, Result};
use crate::exec::{Execution, Runner};
use crate::greens::{greens_derivatives, GreensDerivativeTensor, RingGeometry};
use crate::index::{Binomials, TriIndex2};
use crate::oracle::{accumulate_direct, field_annotate};
use crate::tree::{self, interaction_lists, BoxId, OffsetClass, Point2, Quadtree, Variant};

pub const MIN_DEPTH: u32 = 2;
pub const MAX_DEPTH: u32 = 12;
pub const MIN_ORDER: usize = 1;
pub const MAX_ORDER: usize = 24;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// A ring at `position` carrying Fourier amplitudes `S_n`, `n = 0..N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalRingSource {
    pub position: Point2,
    pub amplitudes: Vec<Complex64>,
}

/// Modal amplitudes `Phi_n` of the potential at `point`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalPotential {
    pub point: Point2,
    pub amplitudes: Vec<Complex64>,
}

/// Which `(i, j, k, l)` terms of the shift-to-local sum are kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Truncation {
    /// `i + j + k + l <= M`: a single Taylor expansion of total order `M`.
    Combined,
    /// `i + j <= M` and `k + l <= M`: moments and local expansions each of
    /// order `M`. Needs the Green's tensor to order `2M`.
    #[default]
    Product,
}

impl Truncation {
    pub fn tensor_order(self, order: usize) -> usize {
        match self {
            Truncation::Combined => order,
            Truncation::Product => 2 * order,
        }
    }

    fn keeps(self, order: usize, src: usize, loc: usize) -> bool {
        match self {
            Truncation::Combined => src + loc <= order,
            Truncation::Product => src <= order && loc <= order,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FmmConfig {
    pub n_modes: usize,
    pub order: usize,
    pub depth: u32,
    pub truncation: Truncation,
    pub execution: Execution,
}

impl FmmConfig {
    pub fn new(n_modes: usize, order: usize, depth: u32) -> Self {
        Self {
            n_modes,
            order,
            depth,
            truncation: Truncation::default(),
            execution: Execution::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_modes == 0 {
            return Err(FmmError::Config("at least one mode is required".into()));
        }
        if !(MIN_DEPTH..=MAX_DEPTH).contains(&self.depth) {
            return Err(FmmError::Config(format!(
                "depth {} outside [{MIN_DEPTH}, {MAX_DEPTH}]",
                self.depth
            )));
        }
        if !(MIN_ORDER..=MAX_ORDER).contains(&self.order) {
            return Err(FmmError::Config(format!(
                "order {} outside [{MIN_ORDER}, {MAX_ORDER}]",
                self.order
            )));
        }
        Ok(())
    }
}

/// Wall-clock seconds spent in each phase of one evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub sort: f64,
    pub moments: f64,
    pub upward: f64,
    pub downward: f64,
    pub local_direct: f64,
}

impl PhaseTimings {
    pub fn total(&self) -> f64 {
        self.sort + self.moments + self.upward + self.downward + self.local_direct
    }
}

/// Moments `S_ij` of the sources in a box about its center.
#[derive(Debug, Clone, PartialEq)]
pub struct MultipoleMoments {
    pub box_id: BoxId,
    pub order: usize,
    pub n_modes: usize,
    pub coeffs: Vec<Complex64>,
}

/// Local Taylor coefficients `Phi_kl` about a box center.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalExpansion {
    pub box_id: BoxId,
    pub order: usize,
    pub n_modes: usize,
    pub coeffs: Vec<Complex64>,
}

macro_rules! coefficient_array {
    ($t:ty) => {
        impl $t {
            pub fn zeros(box_id: BoxId, order: usize, n_modes: usize) -> Self {
                Self {
                    box_id,
                    order,
                    n_modes,
                    coeffs: vec![ZERO; TriIndex2::new(order).len() * n_modes],
                }
            }

            pub fn get(&self, n: usize, i: usize, j: usize) -> Complex64 {
                self.coeffs[TriIndex2::new(self.order).at(i, j) * self.n_modes + n]
            }

            pub fn set(&mut self, n: usize, i: usize, j: usize, v: Complex64) {
                let at = TriIndex2::new(self.order).at(i, j) * self.n_modes + n;
                self.coeffs[at] = v;
            }
        }
    };
}

coefficient_array!(MultipoleMoments);
coefficient_array!(LocalExpansion);

impl LocalExpansion {
    /// `sum Phi_kl dr^k dz^l` for every mode.
    pub fn evaluate(&self, dr: f64, dz: f64) -> Vec<Complex64> {
        let mut out = vec![ZERO; self.n_modes];
        eval_local(
            &self.coeffs,
            &TriIndex2::new(self.order),
            self.n_modes,
            dr,
            dz,
            &mut out,
        );
        out
    }
}

fn powers(x: f64, m: usize) -> Vec<f64> {
    let mut p = Vec::with_capacity(m + 1);
    let mut v = 1.0;
    for _ in 0..=m {
        p.push(v);
        v *= x;
    }
    p
}

fn eval_local(
    coeffs: &[Complex64],
    idx: &TriIndex2,
    n_modes: usize,
    dr: f64,
    dz: f64,
    out: &mut [Complex64],
) {
    let m = idx.order();
    let pr = powers(dr, m);
    let pz = powers(dz, m);
    for (t, (k, l)) in idx.iter().enumerate() {
        let w = pr[k] * pz[l];
        let c = &coeffs[t * n_modes..(t + 1) * n_modes];
        for (o, v) in out.iter_mut().zip(c) {
            *o += v * w;
        }
    }
}

pub(crate) fn check_sources(sources: &[ModalRingSource], n_modes: usize) -> Result<()> {
    for (idx, s) in sources.iter().enumerate() {
        let p = s.position;
        if !(p.r > 0.0 && p.r.is_finite() && p.z.is_finite()) {
            return Err(FmmError::Domain(format!(
                "source {idx} at ({}, {}): radius must be positive and finite",
                p.r, p.z
            )));
        }
        if s.amplitudes.len() != n_modes {
            return Err(FmmError::Config(format!(
                "source {idx} has {} amplitudes, expected {n_modes}",
                s.amplitudes.len()
            )));
        }
        if s.amplitudes
            .iter()
            .any(|a| !(a.re.is_finite() && a.im.is_finite()))
        {
            return Err(FmmError::Domain(format!(
                "source {idx} has non-finite amplitudes"
            )));
        }
    }
    Ok(())
}

fn check_field(points: &[Point2]) -> Result<()> {
    for (idx, p) in points.iter().enumerate() {
        if !(p.r >= 0.0 && p.r.is_finite() && p.z.is_finite()) {
            return Err(FmmError::Domain(format!(
                "field point {idx} at ({}, {})",
                p.r, p.z
            )));
        }
    }
    Ok(())
}

fn accumulate_moments<'a>(
    center: Point2,
    sources: impl IntoIterator<Item = &'a ModalRingSource>,
    idx: &TriIndex2,
    n_modes: usize,
    out: &mut [Complex64],
) {
    let m = idx.order();
    for s in sources {
        let pr = powers(s.position.r - center.r, m);
        let pz = powers(s.position.z - center.z, m);
        for (t, (i, j)) in idx.iter().enumerate() {
            let w = pr[i] * pz[j];
            let dst = &mut out[t * n_modes..(t + 1) * n_modes];
            for (d, a) in dst.iter_mut().zip(&s.amplitudes) {
                *d += a * w;
            }
        }
    }
}

/// Moments of `sources` about `center`.
pub fn moments_about<'a>(
    box_id: BoxId,
    center: Point2,
    sources: impl IntoIterator<Item = &'a ModalRingSource>,
    order: usize,
    n_modes: usize,
) -> MultipoleMoments {
    let mut mm = MultipoleMoments::zeros(box_id, order, n_modes);
    accumulate_moments(
        center,
        sources,
        &TriIndex2::new(order),
        n_modes,
        &mut mm.coeffs,
    );
    mm
}

/// Moments of every leaf of `tree` about its center, in Morton order.
/// `sources` is in input order; the tree supplies the permutation.
pub fn leaf_moments(
    tree: &Quadtree,
    sources: &[ModalRingSource],
    order: usize,
    n_modes: usize,
) -> Vec<MultipoleMoments> {
    (0..tree.leaf_count() as u64)
        .map(|m| {
            let b = BoxId::from_morton(tree.depth, m);
            let members = tree.src_range(b).map(|s| &sources[tree.src_order[s]]);
            moments_about(b, tree.box_center(b), members, order, n_modes)
        })
        .collect()
}

fn m2m_accumulate(
    child: &[Complex64],
    dr: f64,
    dz: f64,
    idx: &TriIndex2,
    binom: &Binomials,
    n_modes: usize,
    parent: &mut [Complex64],
) {
    let m = idx.order();
    let pr = powers(dr, m);
    let pz = powers(dz, m);
    for (i, j) in idx.iter() {
        let dst = idx.at(i, j) * n_modes;
        for q in 0..=i {
            for u in 0..=j {
                let w = binom.get(i, q) * binom.get(j, u) * pr[q] * pz[u];
                let src = idx.at(i - q, j - u) * n_modes;
                for n in 0..n_modes {
                    parent[dst + n] += child[src + n] * w;
                }
            }
        }
    }
}

/// Shift `child` moments to a center displaced by `-(dr, dz)`, where
/// `(dr, dz)` is child center minus parent center.
pub fn m2m_shift(child: &MultipoleMoments, dr: f64, dz: f64) -> MultipoleMoments {
    let idx = TriIndex2::new(child.order);
    let binom = Binomials::new(child.order);
    let parent_box = child.box_id.parent().unwrap_or(child.box_id);
    let mut out = MultipoleMoments::zeros(parent_box, child.order, child.n_modes);
    m2m_accumulate(
        &child.coeffs,
        dr,
        dz,
        &idx,
        &binom,
        child.n_modes,
        &mut out.coeffs,
    );
    out
}

fn l2l_accumulate(
    parent: &[Complex64],
    dr: f64,
    dz: f64,
    idx: &TriIndex2,
    binom: &Binomials,
    n_modes: usize,
    child: &mut [Complex64],
) {
    let m = idx.order();
    let pr = powers(dr, m);
    let pz = powers(dz, m);
    for (i, j) in idx.iter() {
        let dst = idx.at(i, j) * n_modes;
        for q in 0..=m - i - j {
            for u in 0..=m - i - j - q {
                let w = binom.get(i + q, q) * binom.get(j + u, u) * pr[q] * pz[u];
                let src = idx.at(i + q, j + u) * n_modes;
                for n in 0..n_modes {
                    child[dst + n] += parent[src + n] * w;
                }
            }
        }
    }
}

/// Re-expand `parent` about the child center; `(dr, dz)` is child center
/// minus parent center.
pub fn l2l_shift(parent: &LocalExpansion, dr: f64, dz: f64) -> LocalExpansion {
    let idx = TriIndex2::new(parent.order);
    let binom = Binomials::new(parent.order);
    let mut out = LocalExpansion::zeros(parent.box_id, parent.order, parent.n_modes);
    l2l_accumulate(
        &parent.coeffs,
        dr,
        dz,
        &idx,
        &binom,
        parent.n_modes,
        &mut out.coeffs,
    );
    out
}

#[derive(Debug, Clone, Copy)]
struct PlanEntry {
    out: u32,
    src: u32,
    tensor: u32,
    coef: f64,
}

/// Precomputed index triples and weights of the S2L sum for each variant.
#[derive(Debug, Clone)]
struct S2lPlan {
    entries: [Vec<PlanEntry>; 4],
}

impl S2lPlan {
    fn new(order: usize, truncation: Truncation) -> Self {
        let idx2 = TriIndex2::new(order);
        let t_order = truncation.tensor_order(order);
        let idx3 = crate::index::TriIndex3::new(t_order);
        let binom = Binomials::new(2 * t_order);
        let entries = Variant::ALL.map(|variant| {
            let mut list = Vec::new();
            for (k, l) in idx2.iter() {
                for (i, j) in idx2.iter() {
                    if !truncation.keeps(order, i + j, k + l) {
                        continue;
                    }
                    let sign_pow = if variant.is_forward() { j } else { l };
                    let sign = if sign_pow % 2 == 0 { 1.0 } else { -1.0 };
                    let (a, b) = if variant.is_outward() { (k, i) } else { (i, k) };
                    list.push(PlanEntry {
                        out: idx2.at(k, l) as u32,
                        src: idx2.at(i, j) as u32,
                        tensor: idx3.at(a, b, j + l) as u32,
                        coef: sign * binom.get(j + l, j),
                    });
                }
            }
            // stream through the tensor, the largest operand
            list.sort_by_key(|e| (e.tensor, e.out, e.src));
            list
        });
        Self { entries }
    }

    fn apply(
        &self,
        variant: Variant,
        moments: &[Complex64],
        tensor: &[f64],
        n_modes: usize,
        local: &mut [Complex64],
    ) {
        let list = &self.entries[variant as usize];
        for e in list {
            let s = &moments[e.src as usize * n_modes..][..n_modes];
            let t = &tensor[e.tensor as usize * n_modes..][..n_modes];
            let o = &mut local[e.out as usize * n_modes..][..n_modes];
            for ((o, s), t) in o.iter_mut().zip(s).zip(t) {
                let w = e.coef * t;
                o.re += s.re * w;
                o.im += s.im * w;
            }
        }
    }
}

/// Add the S2L contribution of `source` to `target`.
///
/// `tensor` is the Green's derivative tensor at `(r_outer, r_inner, |dz|)`
/// of the two box centers, where the outer radius is the field box's for the
/// outward variants and the source box's for the inward ones.
pub fn s2l_apply(
    source: &MultipoleMoments,
    tensor: &GreensDerivativeTensor,
    variant: Variant,
    truncation: Truncation,
    target: &mut LocalExpansion,
) {
    assert_eq!(source.order, target.order, "moment and local orders differ");
    assert_eq!(source.n_modes, target.n_modes);
    assert!(tensor.order >= truncation.tensor_order(source.order));
    assert!(tensor.n_max + 1 >= source.n_modes);
    let n_modes = source.n_modes;
    let plan = S2lPlan::new(source.order, truncation);
    // re-pack the tensor with stride n_modes
    let idx3 = crate::index::TriIndex3::new(truncation.tensor_order(source.order));
    let mut packed = vec![0.0; idx3.len() * n_modes];
    for (a, b, c) in idx3.iter() {
        let at = idx3.at(a, b, c) * n_modes;
        packed[at..at + n_modes].copy_from_slice(&tensor.modes(a, b, c)[..n_modes]);
    }
    plan.apply(
        variant,
        &source.coeffs,
        &packed,
        n_modes,
        &mut target.coeffs,
    );
}

/// Tensor for an offset class at the given level.
fn class_tensor(
    class: OffsetClass,
    width: f64,
    n_modes: usize,
    order: usize,
) -> Result<GreensDerivativeTensor> {
    let inner = (class.station as f64 + 0.5) * width;
    let outer = (class.station as f64 + class.di as f64 + 0.5) * width;
    let geometry = RingGeometry::new(outer, inner, class.dj as f64 * width)?;
    greens_derivatives(geometry, n_modes - 1, order)
}

/// Per-level coefficient storage for the boxes that are in use, in column
/// major grid order so that each radial column is contiguous.
struct LevelStore {
    side: u32,
    slot: Vec<u32>,
    boxes: Vec<BoxId>,
    column_start: Vec<usize>,
    data: Vec<Vec<Complex64>>,
}

impl LevelStore {
    fn new(level: u32, len: usize, occupied: impl Fn(BoxId) -> bool) -> Self {
        let side = 1u32 << level;
        let mut slot = vec![u32::MAX; (side as usize) * (side as usize)];
        let mut boxes = Vec::new();
        let mut column_start = Vec::with_capacity(side as usize + 1);
        for i in 0..side {
            column_start.push(boxes.len());
            for j in 0..side {
                let b = BoxId::new(level, i, j);
                if occupied(b) {
                    slot[(i * side + j) as usize] = boxes.len() as u32;
                    boxes.push(b);
                }
            }
        }
        column_start.push(boxes.len());
        let data = vec![vec![ZERO; len]; boxes.len()];
        Self {
            side,
            slot,
            boxes,
            column_start,
            data,
        }
    }

    fn find(&self, b: BoxId) -> Option<usize> {
        let s = self.slot[(b.i * self.side + b.j) as usize];
        (s != u32::MAX).then_some(s as usize)
    }
}

/// Evaluate the modal potentials with the default configuration
/// (product truncation, parallel execution).
pub fn evaluate(
    sources: &[ModalRingSource],
    field_points: &[Point2],
    n_modes: usize,
    order: usize,
    depth: u32,
) -> Result<Vec<ModalPotential>> {
    evaluate_with(
        sources,
        field_points,
        &FmmConfig::new(n_modes, order, depth),
    )
}

pub fn evaluate_with(
    sources: &[ModalRingSource],
    field_points: &[Point2],
    config: &FmmConfig,
) -> Result<Vec<ModalPotential>> {
    evaluate_instrumented(sources, field_points, config).map(|(v, _)| v)
}

/// [`evaluate_with`] that also reports per-phase wall-clock times.
pub fn evaluate_instrumented(
    sources: &[ModalRingSource],
    field_points: &[Point2],
    config: &FmmConfig,
) -> Result<(Vec<ModalPotential>, PhaseTimings)> {
    config.validate()?;
    check_sources(sources, config.n_modes)?;
    check_field(field_points)?;
    let runner = Runner::new(config.execution)?;
    let n_modes = config.n_modes;
    let order = config.order;
    let depth = config.depth;
    let idx = TriIndex2::new(order);
    let binom = Binomials::new(2 * config.truncation.tensor_order(order));
    let ncoef = idx.len() * n_modes;
    let mut timings = PhaseTimings::default();

    let clock = Instant::now();
    let positions: Vec<Point2> = sources.iter().map(|s| s.position).collect();
    let tree = tree::build(&positions, field_points, depth)?;
    timings.sort = clock.elapsed().as_secs_f64();

    // moments of occupied leaves; levels[l] for l = 2..=depth
    let clock = Instant::now();
    let mut moments: Vec<Option<LevelStore>> = (0..=depth).map(|_| None).collect();
    let mut leaves = LevelStore::new(depth, ncoef, |b| !tree.src_range(b).is_empty());
    {
        let boxes = &leaves.boxes;
        runner.for_each_mut(&mut leaves.data, |s, coeffs| {
            let b = boxes[s];
            let members = tree.src_range(b).map(|q| &sources[tree.src_order[q]]);
            accumulate_moments(tree.box_center(b), members, &idx, n_modes, coeffs);
        });
    }
    moments[depth as usize] = Some(leaves);
    timings.moments = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    for level in (MIN_DEPTH..depth).rev() {
        let children = moments[level as usize + 1]
            .as_ref()
            .expect("child level built");
        let mut store = LevelStore::new(level, ncoef, |b| !tree.src_range(b).is_empty());
        let half = 0.25 * tree.box_width(level);
        let boxes = &store.boxes;
        runner.for_each_mut(&mut store.data, |s, coeffs| {
            for c in boxes[s].children() {
                if let Some(cs) = children.find(c) {
                    let dr = if c.i % 2 == 0 { -half } else { half };
                    let dz = if c.j % 2 == 0 { -half } else { half };
                    m2m_accumulate(&children.data[cs], dr, dz, &idx, &binom, n_modes, coeffs);
                }
            }
        });
        moments[level as usize] = Some(store);
    }
    timings.upward = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let plan = S2lPlan::new(order, config.truncation);
    let t_order = config.truncation.tensor_order(order);
    let mut parent_locals: Option<LevelStore> = None;
    for level in MIN_DEPTH..=depth {
        let src_store = moments[level as usize].as_ref().expect("level built");
        let mut store = LevelStore::new(level, ncoef, |b| !tree.fld_range(b).is_empty());
        let width = tree.box_width(level);
        let half = 0.25 * tree.box_width(level - 1);
        let mut cache: HashMap<OffsetClass, Vec<f64>> = HashMap::new();
        for column in 0..store.side {
            let range =
                store.column_start[column as usize]..store.column_start[column as usize + 1];
            if range.is_empty() {
                continue;
            }
            cache.retain(|c, _| c.station + 3 >= column);
            let lists: Vec<_> = store.boxes[range.clone()]
                .iter()
                .map(|&b| interaction_lists(b, depth))
                .collect();
            let mut missing: Vec<OffsetClass> = lists
                .iter()
                .flat_map(|l| l.s2l_list.iter())
                .filter(|e| src_store.find(e.source).is_some())
                .map(|e| e.class)
                .filter(|c| !cache.contains_key(c))
                .collect();
            missing.sort();
            missing.dedup();
            let built = runner.map(&missing, |&c| class_tensor(c, width, n_modes, t_order));
            for (c, t) in missing.into_iter().zip(built) {
                cache.insert(c, t?.as_slice().to_vec());
            }
            let parent = parent_locals.as_ref();
            let cache = &cache;
            runner.for_each_mut(&mut store.data[range], |s, local| {
                let b = lists[s].target;
                if let Some(parent) = parent {
                    let p = b.parent().expect("level >= 2");
                    let ps = parent.find(p).expect("parent holds field points");
                    let dr = if b.i % 2 == 0 { -half } else { half };
                    let dz = if b.j % 2 == 0 { -half } else { half };
                    l2l_accumulate(&parent.data[ps], dr, dz, &idx, &binom, n_modes, local);
                }
                for e in &lists[s].s2l_list {
                    if let Some(ss) = src_store.find(e.source) {
                        plan.apply(
                            e.variant,
                            &src_store.data[ss],
                            &cache[&e.class],
                            n_modes,
                            local,
                        );
                    }
                }
            });
        }
        parent_locals = Some(store);
    }
    timings.downward = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let leaves = parent_locals.expect("at least one level");
    let per_leaf = runner.map(&(0..leaves.boxes.len()).collect::<Vec<_>>(), |&s| {
        let b = leaves.boxes[s];
        let center = tree.box_center(b);
        let near: Vec<_> = b
            .neighbors()
            .into_iter()
            .map(|n| tree.src_range(n))
            .collect();
        let mut g = vec![0.0; n_modes];
        tree.fld_range(b)
            .map(|f| {
                let orig = tree.fld_order[f];
                let p = field_points[orig];
                let mut acc = vec![ZERO; n_modes];
                eval_local(
                    &leaves.data[s],
                    &idx,
                    n_modes,
                    p.r - center.r,
                    p.z - center.z,
                    &mut acc,
                );
                let members = near.iter().flat_map(|r| r.clone()).map(|q| {
                    let si = tree.src_order[q];
                    (si, &sources[si])
                });
                accumulate_direct(members, p, &mut acc, &mut g)
                    .map_err(|e| field_annotate(e, orig))?;
                Ok((orig, acc))
            })
            .collect::<Result<Vec<_>>>()
    });
    let mut out: Vec<ModalPotential> = field_points
        .iter()
        .map(|&p| ModalPotential {
            point: p,
            amplitudes: Vec::new(),
        })
        .collect();
    for leaf in per_leaf {
        for (orig, acc) in leaf? {
            out[orig].amplitudes = acc;
        }
    }
    timings.local_direct = clock.elapsed().as_secs_f64();
    Ok((out, timings))
}
