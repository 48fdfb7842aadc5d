//! Linearised storage for coefficient arrays truncated by total degree.

/// Index map for `(i, j)` with `i + j <= order`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TriIndex2 {
    order: usize,
    base: Vec<usize>,
    len: usize,
}

impl TriIndex2 {
    pub fn new(order: usize) -> Self {
        let mut base = Vec::with_capacity(order + 1);
        let mut len = 0;
        for i in 0..=order {
            base.push(len);
            len += order - i + 1;
        }
        Self { order, base, len }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> usize {
        debug_assert!(i + j <= self.order);
        self.base[i] + j
    }

    /// All `(i, j)` in storage order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..=self.order).flat_map(move |i| (0..=self.order - i).map(move |j| (i, j)))
    }
}

/// Index map for `(i, j, k)` with `i + j + k <= order`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TriIndex3 {
    order: usize,
    base: Vec<usize>,
    len: usize,
}

impl TriIndex3 {
    pub fn new(order: usize) -> Self {
        let stride = order + 1;
        let mut base = vec![usize::MAX; stride * stride];
        let mut len = 0;
        for i in 0..=order {
            for j in 0..=order - i {
                base[i * stride + j] = len;
                len += order - i - j + 1;
            }
        }
        Self { order, base, len }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize) -> usize {
        debug_assert!(i + j + k <= self.order);
        self.base[i * (self.order + 1) + j] + k
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let m = self.order;
        (0..=m).flat_map(move |i| {
            (0..=m - i).flat_map(move |j| (0..=m - i - j).map(move |k| (i, j, k)))
        })
    }
}

/// Pascal's triangle up to row `n`, as `f64`.
#[derive(Debug, Clone)]
pub struct Binomials {
    n: usize,
    rows: Vec<f64>,
}

impl Binomials {
    pub fn new(n: usize) -> Self {
        let stride = n + 1;
        let mut rows = vec![0.0; stride * stride];
        for a in 0..=n {
            rows[a * stride] = 1.0;
            for b in 1..=a {
                rows[a * stride + b] = rows[(a - 1) * stride + b - 1] + rows[(a - 1) * stride + b];
            }
        }
        Self { n, rows }
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize) -> f64 {
        debug_assert!(a <= self.n);
        self.rows[a * (self.n + 1) + b]
    }
}
