//! The modal Green's function
//!
//! ```text
//! G_n(r, r1, x) = Q_{n-1/2}(chi) / (2 pi sqrt(r r1)),  chi = (r^2 + r1^2 + x^2) / (2 r r1)
//! ```
//!
//! and its scaled Taylor coefficients
//! `Gbar[n; i, j, k] = (1/i! j! k!) d^(i+j+k) G_n / dr^i dr1^j dx^k`.
//!
//! Derivatives are seeded from the Legendre derivative identity (pure `x`,
//! then one `r`, one `r1`, and one of each) and completed with the
//! cylindrical Laplace equation, used as a recursion in `r1` and then `r`.
//! With the expansion `G(r0 + t) = sum a_i t^i` the Laplace equation
//! `r^2 G_rr + r G_r - n^2 G + r^2 G_xx = 0` gives, per power of `t`,
//!
//! ```text
//! r0^2 (i+1)(i+2) a[i+2,k] = -r0 (i+1)(2i+1) a[i+1,k] - (i^2 - n^2) a[i,k]
//!     - (k+1)(k+2) (r0^2 a[i,k+2] + 2 r0 a[i-1,k+2] + a[i-2,k+2])
//! ```

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{FmmError, Result};
use crate::index::TriIndex3;
use crate::specfun;

/// Field radius `r`, source radius `r1` and axial separation `x = z - z1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RingGeometry {
    pub r: f64,
    pub r1: f64,
    pub x: f64,
}

impl RingGeometry {
    pub fn new(r: f64, r1: f64, x: f64) -> Result<Self> {
        if !(r.is_finite() && r1.is_finite() && x.is_finite()) {
            return Err(FmmError::Domain(format!(
                "non-finite ring geometry ({r}, {r1}, {x})"
            )));
        }
        if r <= 0.0 || r1 <= 0.0 {
            return Err(FmmError::Domain(format!(
                "ring radii must be positive, got r = {r}, r1 = {r1}"
            )));
        }
        Ok(Self { r, r1, x })
    }

    pub fn chi(&self) -> f64 {
        (self.r * self.r + self.r1 * self.r1 + self.x * self.x) / (2.0 * self.r * self.r1)
    }

    /// `chi - 1`, formed as `rho_-^2 / (2 r r1)` to avoid cancellation.
    pub fn chi_minus_one(&self) -> f64 {
        self.rho_minus_sq() / (2.0 * self.r * self.r1)
    }

    pub fn rho_plus_sq(&self) -> f64 {
        let a = self.r + self.r1;
        a * a + self.x * self.x
    }

    pub fn rho_minus_sq(&self) -> f64 {
        let a = self.r - self.r1;
        a * a + self.x * self.x
    }

    /// The same rings with field and source roles exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            r: self.r1,
            r1: self.r,
            x: self.x,
        }
    }

    fn check_separated(&self) -> Result<()> {
        if self.chi_minus_one() <= specfun::SINGULAR_GUARD {
            return Err(FmmError::Singular(format!(
                "coincident rings at r = {}, r1 = {}, x = {}",
                self.r, self.r1, self.x
            )));
        }
        Ok(())
    }
}

/// `G_n` for `n = 0..=n_max` at one geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct GreensTable {
    pub geometry: RingGeometry,
    pub n_max: usize,
    pub g: Vec<f64>,
    // G_{n_max + 1}, kept for recursions that reach one mode past the table
    next: f64,
}

impl GreensTable {
    /// `G_{n_max + 1}`.
    pub fn next_mode(&self) -> f64 {
        self.next
    }
}

/// Tabulate `G_n`, `n = 0..=n_max`.
pub fn greens_table(geometry: RingGeometry, n_max: usize) -> Result<GreensTable> {
    let mut g = vec![0.0; n_max + 2];
    greens_into(&geometry, &mut g)?;
    let next = g.pop().expect("n_max + 2 entries");
    Ok(GreensTable {
        geometry,
        n_max,
        g,
        next,
    })
}

/// Fill `out[n] = G_n` for `n < out.len()`.
pub fn greens_into(geometry: &RingGeometry, out: &mut [f64]) -> Result<()> {
    if out.is_empty() {
        return Ok(());
    }
    geometry.check_separated()?;
    specfun::q_sequence_into(geometry.chi(), geometry.chi_minus_one(), out)?;
    let scale = 1.0 / (2.0 * PI * (geometry.r * geometry.r1).sqrt());
    for v in out.iter_mut() {
        *v *= scale;
    }
    Ok(())
}

/// Scaled `x`-derivatives of the rational kernels used by the derivative
/// seeds, `q = 0..=q_max`.
///
/// With `a = r +- r1` and `w = x - i a`, `x / rho^2 = Re(1/w)` and
/// `(r^2 - r1^2 - x^2) / rho^2 = -1 + 2 r Im(1/w)`, whose derivatives are
/// powers of `1/w`.
#[derive(Debug, Clone, PartialEq)]
pub struct RationalKernels {
    /// `(1/q!) d^q/dx^q (x / rho_+^2)`
    pub x_plus: Vec<f64>,
    /// `(1/q!) d^q/dx^q (x / rho_-^2)`
    pub x_minus: Vec<f64>,
    /// `(1/q!) d^q/dx^q ((r^2 - r1^2 - x^2) / rho_+^2)`
    pub c_plus: Vec<f64>,
    pub c_minus: Vec<f64>,
    /// `(1/q!) d^(q+1)/dr1 dx^q ((r^2 - r1^2 - x^2) / rho_+^2)`
    pub dr1_c_plus: Vec<f64>,
    pub dr1_c_minus: Vec<f64>,
}

pub fn rational_kernel_derivs(geometry: &RingGeometry, q_max: usize) -> Result<RationalKernels> {
    if geometry.rho_minus_sq() <= 0.0 {
        return Err(FmmError::Singular(format!(
            "rho_- vanishes at r = r1 = {}, x = 0",
            geometry.r
        )));
    }
    let n = q_max + 1;
    let mut out = RationalKernels {
        x_plus: vec![0.0; n],
        x_minus: vec![0.0; n],
        c_plus: vec![0.0; n],
        c_minus: vec![0.0; n],
        dr1_c_plus: vec![0.0; n],
        dr1_c_minus: vec![0.0; n],
    };
    let two_r = 2.0 * geometry.r;
    for (sign, a) in [
        (1.0, geometry.r + geometry.r1),
        (-1.0, geometry.r - geometry.r1),
    ] {
        let winv = Complex64::new(geometry.x, -a).inv();
        let neg_winv = -winv;
        // p = (-1)^q w^-(q+1)
        let mut p = winv;
        for q in 0..n {
            // (-1)^q (q+1) w^-(q+2)
            let p2 = p * winv * (q as f64 + 1.0);
            let xk = p.re;
            let ck = two_r * p.im - if q == 0 { 1.0 } else { 0.0 };
            let dk = sign * two_r * p2.re;
            if sign > 0.0 {
                out.x_plus[q] = xk;
                out.c_plus[q] = ck;
                out.dr1_c_plus[q] = dk;
            } else {
                out.x_minus[q] = xk;
                out.c_minus[q] = ck;
                out.dr1_c_minus[q] = dk;
            }
            p *= neg_winv;
        }
    }
    Ok(out)
}

/// Scaled Taylor coefficients of `G_n` for `n = 0..=n_max` and total
/// derivative order `i + j + k <= order`.
///
/// Storage is `coeffs[index.at(i, j, k) * (n_max + 1) + n]`, so the modes of
/// one coefficient are contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct GreensDerivativeTensor {
    pub geometry: RingGeometry,
    pub n_max: usize,
    pub order: usize,
    index: TriIndex3,
    coeffs: Vec<f64>,
}

impl GreensDerivativeTensor {
    #[inline]
    pub fn get(&self, n: usize, i: usize, j: usize, k: usize) -> f64 {
        self.coeffs[self.index.at(i, j, k) * (self.n_max + 1) + n]
    }

    /// All modes of coefficient `(i, j, k)`.
    #[inline]
    pub fn modes(&self, i: usize, j: usize, k: usize) -> &[f64] {
        let m = self.n_max + 1;
        let s = self.index.at(i, j, k) * m;
        &self.coeffs[s..s + m]
    }

    pub fn index(&self) -> &TriIndex3 {
        &self.index
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coeffs
    }

    /// Largest residual of the Laplace relation in `r` and in `r1` over all
    /// indices where it can be formed. Each residual is divided by the sum of
    /// the absolute multipliers of the relation times the largest coefficient
    /// magnitude of that mode. Returns `(r residual, r1 residual)`.
    pub fn laplace_residuals(&self) -> (f64, f64) {
        let RingGeometry { r, r1, .. } = self.geometry;
        let mut worst = (0.0_f64, 0.0_f64);
        let m = self.order;
        for n in 0..=self.n_max {
            let scale = self
                .index
                .iter()
                .map(|(i, j, k)| self.get(n, i, j, k).abs())
                .fold(0.0, f64::max);
            if scale == 0.0 {
                continue;
            }
            for (a, b, k) in self.index.iter() {
                if a + b + k + 2 > m {
                    continue;
                }
                let along_r = |i: usize, j: usize, kk: usize| self.get(n, i, j, kk);
                let along_r1 = |i: usize, j: usize, kk: usize| self.get(n, j, i, kk);
                let (sum, weight) = laplace_terms(n, r, a, b, k, &along_r);
                worst.0 = worst.0.max(sum / (weight * scale));
                let (sum, weight) = laplace_terms(n, r1, b, a, k, &along_r1);
                worst.1 = worst.1.max(sum / (weight * scale));
            }
        }
        worst
    }
}

// |sum| of the Laplace relation at (i, passive, k) along the active radial
// index, and the sum of the absolute multipliers.
fn laplace_terms<F: Fn(usize, usize, usize) -> f64>(
    n: usize,
    r0: f64,
    i: usize,
    passive: usize,
    k: usize,
    g: &F,
) -> (f64, f64) {
    let fi = i as f64;
    let nn = (n * n) as f64;
    let kk = ((k + 1) * (k + 2)) as f64;
    let mut terms = vec![
        (r0 * r0 * (fi + 1.0) * (fi + 2.0), g(i + 2, passive, k)),
        (r0 * (fi + 1.0) * (2.0 * fi + 1.0), g(i + 1, passive, k)),
        (fi * fi - nn, g(i, passive, k)),
        (kk * r0 * r0, g(i, passive, k + 2)),
    ];
    if i >= 1 {
        terms.push((kk * 2.0 * r0, g(i - 1, passive, k + 2)));
    }
    if i >= 2 {
        terms.push((kk, g(i - 2, passive, k + 2)));
    }
    let sum: f64 = terms.iter().map(|(w, v)| w * v).sum();
    let weight: f64 = terms.iter().map(|(w, _)| w.abs()).sum();
    (sum.abs(), weight.max(f64::MIN_POSITIVE))
}

/// Build the derivative tensor of `G_n`, `n = 0..=n_max`, to total order
/// `order`.
pub fn greens_derivatives(
    geometry: RingGeometry,
    n_max: usize,
    order: usize,
) -> Result<GreensDerivativeTensor> {
    geometry.check_separated()?;
    let swapped = geometry.swapped();
    let m = order;
    // one mode beyond the table; mode 0 borrows mode 1 (G_{-1} = G_1)
    let modes = n_max + 2;
    let index = TriIndex3::new(m);
    let mut g = vec![0.0; index.len() * modes];
    let at = |i: usize, j: usize, k: usize, n: usize| index.at(i, j, k) * modes + n;
    let prev = |n: usize| if n == 0 { 1 } else { n - 1 };
    let half = |n: usize| n as f64 - 0.5;

    let mut base = vec![0.0; modes];
    greens_into(&geometry, &mut base)?;
    for n in 0..modes {
        g[at(0, 0, 0, n)] = base[n];
    }

    let kern = rational_kernel_derivs(&geometry, m)?;
    let kern_sw = rational_kernel_derivs(&swapped, m)?;

    // pure x derivatives
    for k in 0..m {
        for n in 0..modes {
            let p = prev(n);
            let mut s = 0.0;
            for q in 0..=k {
                let gn = g[at(0, 0, k - q, n)];
                let gp = g[at(0, 0, k - q, p)];
                s += (gn + gp) * kern.x_plus[q] + (gn - gp) * kern.x_minus[q];
            }
            g[at(0, 0, k + 1, n)] = half(n) * s / (k as f64 + 1.0);
        }
    }

    // one r derivative, and one r1 derivative by exchanging r and r1
    let (r, r1) = (geometry.r, geometry.r1);
    for k in 0..m {
        for n in 0..modes {
            let p = prev(n);
            let (mut s, mut s_sw) = (0.0, 0.0);
            for q in 0..=k {
                let gn = g[at(0, 0, k - q, n)];
                let gp = g[at(0, 0, k - q, p)];
                s += (gn + gp) * kern.c_plus[q] + (gn - gp) * kern.c_minus[q];
                s_sw += (gn + gp) * kern_sw.c_plus[q] + (gn - gp) * kern_sw.c_minus[q];
            }
            let g0 = g[at(0, 0, k, n)];
            g[at(1, 0, k, n)] = (-g0 + half(n) * s) / (2.0 * r);
            g[at(0, 1, k, n)] = (-g0 + half(n) * s_sw) / (2.0 * r1);
        }
    }

    // one r and one r1 derivative
    for k in 0..m.saturating_sub(1) {
        for n in 0..modes {
            let p = prev(n);
            let mut s = 0.0;
            for q in 0..=k {
                let gn = g[at(0, 0, k - q, n)];
                let gp = g[at(0, 0, k - q, p)];
                let hn = g[at(0, 1, k - q, n)];
                let hp = g[at(0, 1, k - q, p)];
                s += (gn + gp) * kern.dr1_c_plus[q]
                    + (hn + hp) * kern.c_plus[q]
                    + (gn - gp) * kern.dr1_c_minus[q]
                    + (hn - hp) * kern.c_minus[q];
            }
            g[at(1, 1, k, n)] = (-g[at(0, 1, k, n)] + half(n) * s) / (2.0 * r);
        }
    }

    // Laplace recursion in r1 for j >= 2 (i = 0, 1), then in r for i >= 2
    for i in 0..=1.min(m) {
        for j in 0..m.saturating_sub(1 + i) {
            for k in 0..=m - i - j - 2 {
                for n in 0..modes {
                    let v = laplace_step(n, r1, j, k, |jj, kk| g[at(i, jj, kk, n)]);
                    g[at(i, j + 2, k, n)] = v;
                }
            }
        }
    }
    for i in 0..m.saturating_sub(1) {
        for j in 0..=m - i - 2 {
            for k in 0..=m - i - j - 2 {
                for n in 0..modes {
                    let v = laplace_step(n, r, i, k, |ii, kk| g[at(ii, j, kk, n)]);
                    g[at(i + 2, j, k, n)] = v;
                }
            }
        }
    }

    if let Some(pos) = g.iter().position(|v| !v.is_finite()) {
        return Err(FmmError::PrecisionLoss(format!(
            "non-finite derivative coefficient (flat index {pos}) at order {order}"
        )));
    }

    // drop the extra mode
    let keep = n_max + 1;
    let coeffs: Vec<f64> = g
        .chunks_exact(modes)
        .flat_map(|c| c[..keep].iter().copied())
        .collect();
    Ok(GreensDerivativeTensor {
        geometry,
        n_max,
        order,
        index,
        coeffs,
    })
}

// Coefficient at active index i + 2 from lower ones; `g(active, k)` reads the
// tensor with the passive index fixed.
#[inline]
fn laplace_step<F: Fn(usize, usize) -> f64>(n: usize, r0: f64, i: usize, k: usize, g: F) -> f64 {
    let fi = i as f64;
    let nn = (n * n) as f64;
    let kk = ((k + 1) * (k + 2)) as f64;
    let mut x_terms = r0 * r0 * g(i, k + 2);
    if i >= 1 {
        x_terms += 2.0 * r0 * g(i - 1, k + 2);
    }
    if i >= 2 {
        x_terms += g(i - 2, k + 2);
    }
    let rhs =
        r0 * (fi + 1.0) * (2.0 * fi + 1.0) * g(i + 1, k) + (fi * fi - nn) * g(i, k) + kk * x_terms;
    -rhs / (r0 * r0 * (fi + 1.0) * (fi + 2.0))
}

/// Evaluate the truncated Taylor series of `G_n` at displacement
/// `(dr, dr1, dx)` from the tensor's expansion point.
pub fn taylor_eval(tensor: &GreensDerivativeTensor, dr: f64, dr1: f64, dx: f64, n: usize) -> f64 {
    assert!(
        n <= tensor.n_max,
        "mode {n} beyond tensor n_max {}",
        tensor.n_max
    );
    let m = tensor.order;
    let pow = |x: f64| {
        let mut p = vec![1.0; m + 1];
        for e in 1..=m {
            p[e] = p[e - 1] * x;
        }
        p
    };
    let (pr, pr1, px) = (pow(dr), pow(dr1), pow(dx));
    let mut sum = 0.0;
    for (i, j, k) in tensor.index.iter() {
        sum += tensor.get(n, i, j, k) * pr[i] * pr1[j] * px[k];
    }
    sum
}
