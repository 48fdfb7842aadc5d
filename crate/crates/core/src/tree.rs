//! Uniform quadtree over the `(r, z)` square, Morton ordering and the
//! interaction lists of the downward pass.
//!
//! Boxes are half-open, `[lo, hi)` in both coordinates. The radial index
//! occupies the even bits of a Morton code and the axial index the odd bits.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{FmmError, Result};

/// Deepest tree representable with 64-bit Morton codes and 32-bit grid indices.
pub const MAX_DEPTH: u32 = 30;

/// Relative padding of the domain edge so the largest coordinate lies inside
/// the last box.
pub const DOMAIN_PADDING: f64 = 1e-12;

/// Cylindrical coordinates `(r, z)` of a ring.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub r: f64,
    pub z: f64,
}

impl Point2 {
    pub fn new(r: f64, z: f64) -> Self {
        Self { r, z }
    }
}

/// Spread the low 32 bits of `v` over the even bit positions.
fn spread(v: u32) -> u64 {
    let mut x = v as u64;
    x = (x | (x << 16)) & 0x0000_ffff_0000_ffff;
    x = (x | (x << 8)) & 0x00ff_00ff_00ff_00ff;
    x = (x | (x << 4)) & 0x0f0f_0f0f_0f0f_0f0f;
    x = (x | (x << 2)) & 0x3333_3333_3333_3333;
    x = (x | (x << 1)) & 0x5555_5555_5555_5555;
    x
}

fn compact(mut x: u64) -> u32 {
    x &= 0x5555_5555_5555_5555;
    x = (x | (x >> 1)) & 0x3333_3333_3333_3333;
    x = (x | (x >> 2)) & 0x0f0f_0f0f_0f0f_0f0f;
    x = (x | (x >> 4)) & 0x00ff_00ff_00ff_00ff;
    x = (x | (x >> 8)) & 0x0000_ffff_0000_ffff;
    x = (x | (x >> 16)) & 0x0000_0000_ffff_ffff;
    x as u32
}

pub fn morton_encode(i: u32, j: u32) -> u64 {
    spread(i) | (spread(j) << 1)
}

pub fn morton_decode(m: u64) -> (u32, u32) {
    (compact(m), compact(m >> 1))
}

/// A box of the uniform tree: level, radial column `i`, axial row `j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BoxId {
    pub level: u32,
    pub i: u32,
    pub j: u32,
    pub morton: u64,
}

impl BoxId {
    pub fn new(level: u32, i: u32, j: u32) -> Self {
        debug_assert!(level <= MAX_DEPTH);
        debug_assert!((i as u64) < (1 << level) && (j as u64) < (1 << level));
        Self {
            level,
            i,
            j,
            morton: morton_encode(i, j),
        }
    }

    pub fn from_morton(level: u32, morton: u64) -> Self {
        let (i, j) = morton_decode(morton);
        Self {
            level,
            i,
            j,
            morton,
        }
    }

    /// Number of boxes per side at this level.
    pub fn side(&self) -> u32 {
        1 << self.level
    }

    pub fn parent(&self) -> Option<BoxId> {
        (self.level > 0).then(|| BoxId::new(self.level - 1, self.i / 2, self.j / 2))
    }

    /// Children in Morton order.
    pub fn children(&self) -> [BoxId; 4] {
        let (i, j, l) = (2 * self.i, 2 * self.j, self.level + 1);
        [
            BoxId::new(l, i, j),
            BoxId::new(l, i + 1, j),
            BoxId::new(l, i, j + 1),
            BoxId::new(l, i + 1, j + 1),
        ]
    }

    /// Same-level boxes sharing at least a vertex, including `self`.
    pub fn neighbors(&self) -> Vec<BoxId> {
        let side = self.side() as i64;
        let mut out = Vec::with_capacity(9);
        for di in -1..=1_i64 {
            for dj in -1..=1_i64 {
                let (i, j) = (self.i as i64 + di, self.j as i64 + dj);
                if (0..side).contains(&i) && (0..side).contains(&j) {
                    out.push(BoxId::new(self.level, i as u32, j as u32));
                }
            }
        }
        out
    }

    pub fn is_adjacent(&self, other: &BoxId) -> bool {
        self.level == other.level && self.i.abs_diff(other.i) <= 1 && self.j.abs_diff(other.j) <= 1
    }

    /// Leaf Morton codes covered by this box in a tree of `depth`.
    pub fn leaf_span(&self, depth: u32) -> Range<u64> {
        let shift = 2 * (depth - self.level);
        (self.morton << shift)..((self.morton + 1) << shift)
    }
}

/// Uniform depth-`d` quadtree with Morton-sorted source and field points.
#[derive(Debug, Clone)]
pub struct Quadtree {
    pub depth: u32,
    /// Side of the square domain `[0, length)^2`.
    pub length: f64,
    /// `src_order[s]` is the input index of the `s`-th sorted source.
    pub src_order: Vec<usize>,
    pub fld_order: Vec<usize>,
    src_starts: Vec<usize>,
    fld_starts: Vec<usize>,
}

impl Quadtree {
    /// Width of a box at `level`.
    pub fn box_width(&self, level: u32) -> f64 {
        self.length / (1u64 << level) as f64
    }

    pub fn box_center(&self, b: BoxId) -> Point2 {
        let h = self.box_width(b.level);
        Point2::new((b.i as f64 + 0.5) * h, (b.j as f64 + 0.5) * h)
    }

    pub fn leaf_count(&self) -> usize {
        1 << (2 * self.depth)
    }

    /// Leaf containing `p`.
    pub fn leaf_of(&self, p: Point2) -> Result<BoxId> {
        let side = 1u64 << self.depth;
        let cell = |v: f64, name: &str| -> Result<u32> {
            let t = (v / self.length * side as f64).floor();
            if !(v >= 0.0 && v < self.length) || t < 0.0 || t >= side as f64 {
                return Err(FmmError::Domain(format!(
                    "{name} = {v} outside [0, {})",
                    self.length
                )));
            }
            Ok(t as u32)
        };
        Ok(BoxId::new(self.depth, cell(p.r, "r")?, cell(p.z, "z")?))
    }

    /// Sorted-source positions held by box `b` (any level).
    pub fn src_range(&self, b: BoxId) -> Range<usize> {
        let span = b.leaf_span(self.depth);
        self.src_starts[span.start as usize]..self.src_starts[span.end as usize]
    }

    pub fn fld_range(&self, b: BoxId) -> Range<usize> {
        let span = b.leaf_span(self.depth);
        self.fld_starts[span.start as usize]..self.fld_starts[span.end as usize]
    }

    /// Source counts of all leaves in Morton order.
    pub fn leaf_occupancy(&self) -> Vec<usize> {
        self.src_starts.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

/// Build a tree whose domain side is the largest coordinate over both point
/// sets, padded by [`DOMAIN_PADDING`].
pub fn build(points_src: &[Point2], points_fld: &[Point2], depth: u32) -> Result<Quadtree> {
    let mut extent = 0.0_f64;
    for p in points_src.iter().chain(points_fld) {
        if !(p.r.is_finite() && p.z.is_finite()) {
            return Err(FmmError::Domain(format!(
                "non-finite point ({}, {})",
                p.r, p.z
            )));
        }
        extent = extent.max(p.r).max(p.z);
    }
    let length = if extent > 0.0 {
        extent * (1.0 + DOMAIN_PADDING)
    } else {
        1.0
    };
    build_with_length(points_src, points_fld, depth, length)
}

/// Build a tree over the fixed domain `[0, length)^2`.
pub fn build_with_length(
    points_src: &[Point2],
    points_fld: &[Point2],
    depth: u32,
    length: f64,
) -> Result<Quadtree> {
    if depth > MAX_DEPTH {
        return Err(FmmError::Config(format!(
            "depth {depth} exceeds the Morton index width (max {MAX_DEPTH})"
        )));
    }
    if !(length > 0.0 && length.is_finite()) {
        return Err(FmmError::Domain(format!("domain side {length}")));
    }
    let mut tree = Quadtree {
        depth,
        length,
        src_order: Vec::new(),
        fld_order: Vec::new(),
        src_starts: Vec::new(),
        fld_starts: Vec::new(),
    };
    let (order, starts) = sort_points(&tree, points_src, "source")?;
    tree.src_order = order;
    tree.src_starts = starts;
    let (order, starts) = sort_points(&tree, points_fld, "field point")?;
    tree.fld_order = order;
    tree.fld_starts = starts;
    Ok(tree)
}

// Counting sort by leaf Morton code; stable, so equal codes keep input order.
fn sort_points(tree: &Quadtree, points: &[Point2], what: &str) -> Result<(Vec<usize>, Vec<usize>)> {
    let leaves = tree.leaf_count();
    let codes = points
        .iter()
        .enumerate()
        .map(|(idx, &p)| {
            tree.leaf_of(p)
                .map(|b| b.morton as usize)
                .map_err(|e| FmmError::Domain(format!("{what} {idx}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut starts = vec![0usize; leaves + 1];
    for &c in &codes {
        starts[c + 1] += 1;
    }
    for m in 0..leaves {
        starts[m + 1] += starts[m];
    }
    let mut next = starts.clone();
    let mut order = vec![0usize; points.len()];
    for (idx, &c) in codes.iter().enumerate() {
        order[next[c]] = idx;
        next[c] += 1;
    }
    Ok((order, starts))
}

/// Orientation of an S2L shift: forward/backward in `z`, outward/inward in `r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    /// Source at smaller radius and smaller `z`.
    ForwardOutward,
    /// Source at smaller radius and larger `z`.
    BackwardOutward,
    /// Source at larger radius and smaller `z`.
    ForwardInward,
    /// Source at larger radius and larger `z`.
    BackwardInward,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::ForwardOutward,
        Variant::BackwardOutward,
        Variant::ForwardInward,
        Variant::BackwardInward,
    ];

    /// Variant of the shift from `src` to `fld`. Equal columns count as
    /// outward and equal rows as forward.
    pub fn classify(src: BoxId, fld: BoxId) -> Variant {
        match (src.i <= fld.i, src.j <= fld.j) {
            (true, true) => Variant::ForwardOutward,
            (true, false) => Variant::BackwardOutward,
            (false, true) => Variant::ForwardInward,
            (false, false) => Variant::BackwardInward,
        }
    }

    /// Variant with both orientations reversed.
    pub fn reflect(self) -> Variant {
        match self {
            Variant::ForwardOutward => Variant::BackwardInward,
            Variant::BackwardOutward => Variant::ForwardInward,
            Variant::ForwardInward => Variant::BackwardOutward,
            Variant::BackwardInward => Variant::ForwardOutward,
        }
    }

    pub fn is_outward(self) -> bool {
        matches!(self, Variant::ForwardOutward | Variant::BackwardOutward)
    }

    pub fn is_forward(self) -> bool {
        matches!(self, Variant::ForwardOutward | Variant::ForwardInward)
    }

    pub fn short_name(self) -> &'static str {
        match self {
            Variant::ForwardOutward => "FO",
            Variant::BackwardOutward => "BO",
            Variant::ForwardInward => "FI",
            Variant::BackwardInward => "BI",
        }
    }
}

/// Geometry class of an S2L pair: the inner column and the absolute offsets.
/// Pairs of one class share a Green's derivative tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OffsetClass {
    pub station: u32,
    pub di: u32,
    pub dj: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct S2lEntry {
    pub source: BoxId,
    pub variant: Variant,
    pub class: OffsetClass,
}

impl S2lEntry {
    pub fn new(source: BoxId, target: BoxId) -> Self {
        Self {
            source,
            variant: Variant::classify(source, target),
            class: OffsetClass {
                station: source.i.min(target.i),
                di: source.i.abs_diff(target.i),
                dj: source.j.abs_diff(target.j),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionLists {
    pub target: BoxId,
    pub d_list: Vec<BoxId>,
    pub s2l_list: Vec<S2lEntry>,
}

/// Near-field and S2L lists of `target`. Boxes above level 2 have no
/// interaction list and get empty lists.
pub fn interaction_lists(target: BoxId, depth: u32) -> InteractionLists {
    let empty = InteractionLists {
        target,
        d_list: Vec::new(),
        s2l_list: Vec::new(),
    };
    if target.level < 2 || target.level > depth {
        return empty;
    }
    let parent = target.parent().expect("level >= 2");
    let s2l_list = parent
        .neighbors()
        .iter()
        .flat_map(|p| p.children())
        .filter(|c| !c.is_adjacent(&target))
        .map(|c| S2lEntry::new(c, target))
        .collect();
    InteractionLists {
        target,
        d_list: target.neighbors(),
        s2l_list,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::{BTreeSet, HashMap};

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn morton_roundtrip_and_bit_order() {
        assert_eq!(morton_encode(1, 0), 1);
        assert_eq!(morton_encode(0, 1), 2);
        assert_eq!(morton_encode(3, 5), 0b100111);
        for &(i, j) in &[(0, 0), (7, 3), (123_456, 98_765), ((1 << 30) - 1, 17)] {
            assert_eq!(morton_decode(morton_encode(i, j)), (i, j));
        }
    }

    #[test]
    fn parent_child_arithmetic() {
        let b = BoxId::new(3, 5, 2);
        for (q, c) in b.children().iter().enumerate() {
            assert_eq!(c.parent(), Some(b));
            assert_eq!(c.morton, (b.morton << 2) | q as u64);
        }
        assert_eq!(BoxId::new(0, 0, 0).parent(), None);
        assert_eq!(b.leaf_span(5), (b.morton * 16)..(b.morton * 16 + 16));
    }

    #[test]
    fn one_point_per_quadrant() {
        let pts = [
            Point2::new(0.25, 0.25),
            Point2::new(0.75, 0.25),
            Point2::new(0.25, 0.75),
            Point2::new(0.75, 0.75),
        ];
        let t = build(&pts, &[], 1).unwrap();
        for m in 0..4 {
            let b = BoxId::from_morton(1, m);
            assert_eq!(t.src_range(b).len(), 1);
            assert_eq!(t.src_order[t.src_range(b).start], m as usize);
        }
    }

    #[test]
    fn random_points_fill_leaves() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<_> = (0..1024)
            .map(|_| Point2::new(rng.gen(), rng.gen()))
            .collect();
        let t = build(&pts, &pts, 5).unwrap();
        let occ = t.leaf_occupancy();
        assert_eq!(occ.len(), 1024);
        assert_eq!(occ.iter().sum::<usize>(), 1024);
        let mean = occ.iter().sum::<usize>() as f64 / occ.len() as f64;
        assert_eq!(mean, 1.0);
        let mut seen = vec![false; pts.len()];
        for m in 0..t.leaf_count() as u64 {
            let b = BoxId::from_morton(5, m);
            for s in t.src_range(b) {
                let idx = t.src_order[s];
                assert_eq!(t.leaf_of(pts[idx]).unwrap(), b);
                assert!(!seen[idx]);
                seen[idx] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
        assert_eq!(t.src_order, t.fld_order);
    }

    #[test]
    fn empty_field_list() {
        let t = build(&[Point2::new(0.3, 0.6)], &[], 3).unwrap();
        for m in 0..t.leaf_count() as u64 {
            assert!(t.fld_range(BoxId::from_morton(3, m)).is_empty());
        }
        assert!(t.fld_order.is_empty());
    }

    #[test]
    fn boundary_points_are_inside() {
        let pts = [
            Point2::new(2.0, 0.0),
            Point2::new(0.0, 2.0),
            Point2::new(2.0, 2.0),
        ];
        let t = build(&pts, &[], 4).unwrap();
        assert_eq!(t.leaf_of(pts[2]).unwrap(), BoxId::new(4, 15, 15));
        assert_eq!(t.leaf_of(pts[1]).unwrap(), BoxId::new(4, 0, 15));
    }

    #[test]
    fn invalid_inputs() {
        let p = [Point2::new(0.5, 0.5)];
        assert!(matches!(build(&p, &[], 31), Err(FmmError::Config(_))));
        assert!(matches!(
            build_with_length(&p, &[Point2::new(0.5, 1.5)], 3, 1.0),
            Err(FmmError::Domain(_))
        ));
        assert!(matches!(
            build(&[Point2::new(-0.1, 0.5)], &[], 3),
            Err(FmmError::Domain(_))
        ));
        assert!(matches!(
            build(&[Point2::new(f64::NAN, 0.5)], &[], 3),
            Err(FmmError::Domain(_))
        ));
    }

    #[test]
    fn interior_box_counts() {
        let b = BoxId::new(3, 3, 4);
        let l = interaction_lists(b, 3);
        assert_eq!(l.d_list.len(), 9);
        assert_eq!(l.s2l_list.len(), 27);
        for e in &l.s2l_list {
            assert!(!e.source.is_adjacent(&b));
            assert!(e.class.di <= 3 && e.class.dj <= 3 && e.class.di.max(e.class.dj) >= 2);
        }
    }

    #[test]
    fn corner_box() {
        let b = BoxId::new(2, 0, 0);
        let l = interaction_lists(b, 2);
        assert_eq!(l.d_list.len(), 4);
        assert!(!l.s2l_list.is_empty());
        for e in &l.s2l_list {
            assert!(e.source.i >= b.i && e.source.j >= b.j);
            if e.class.di > 0 && e.class.dj > 0 {
                assert_eq!(e.variant, Variant::BackwardInward);
            }
        }
    }

    #[test]
    fn coarse_levels_have_no_lists() {
        let l = interaction_lists(BoxId::new(1, 0, 1), 4);
        assert!(l.d_list.is_empty() && l.s2l_list.is_empty());
    }

    fn level_boxes(level: u32) -> impl Iterator<Item = BoxId> {
        let side = 1u32 << level;
        (0..side).flat_map(move |i| (0..side).map(move |j| BoxId::new(level, i, j)))
    }

    #[test]
    fn twelve_offset_classes() {
        for level in 3..=5 {
            let classes: BTreeSet<_> = level_boxes(level)
                .flat_map(|b| interaction_lists(b, level).s2l_list)
                .map(|e| (e.class.di, e.class.dj))
                .collect();
            assert_eq!(classes.len(), 12, "level {level}");
        }
    }

    #[test]
    fn reflection_symmetry() {
        for level in 2..=4 {
            let mut map = HashMap::new();
            for b in level_boxes(level) {
                for e in interaction_lists(b, level).s2l_list {
                    map.insert((e.source, b), e);
                }
            }
            for (&(a, b), e) in &map {
                let back = map.get(&(b, a)).expect("pair must be mutual");
                assert_eq!(back.class, e.class);
                let expect = match (e.class.di, e.class.dj) {
                    (0, _) => {
                        if e.variant.is_forward() {
                            Variant::BackwardOutward
                        } else {
                            Variant::ForwardOutward
                        }
                    }
                    (_, 0) => {
                        if e.variant.is_outward() {
                            Variant::ForwardInward
                        } else {
                            Variant::ForwardOutward
                        }
                    }
                    _ => e.variant.reflect(),
                };
                assert_eq!(back.variant, expect);
            }
        }
    }

    #[test]
    fn interaction_partition_is_complete() {
        for depth in 2..=4 {
            let leaves: Vec<_> = level_boxes(depth).collect();
            for &b in &leaves {
                for &c in &leaves {
                    let near = b.is_adjacent(&c) as usize;
                    let mut far = 0;
                    let (mut ab, mut ac) = (b, c);
                    while ab.level >= 2 {
                        if interaction_lists(ab, depth)
                            .s2l_list
                            .iter()
                            .any(|e| e.source == ac)
                        {
                            far += 1;
                        }
                        ab = ab.parent().unwrap();
                        ac = ac.parent().unwrap();
                    }
                    assert_eq!(near + far, 1, "depth {depth}: {b:?} vs {c:?}");
                }
            }
        }
    }
}
