//! Reference implementations: quadrature of the Green's function integral
//! and brute-force modal summation.
//!
//! The quadrature routines share nothing with the Legendre recursions in
//! [`crate::specfun`] and [`crate::greens`] apart from [`RingGeometry`].

pub mod quad;

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{FmmError, Result};
use crate::exec::{Execution, Runner};
use crate::fmm::{ModalPotential, ModalRingSource};
use crate::greens::{self, RingGeometry};
use crate::tree::Point2;

pub use quad::QuadratureSpec;

/// `G_n(r, r1, x)` by quadrature.
///
/// The angular integral of `cos(n t) / (4 pi R)` cancels to
/// `~ (2 chi)^-n` of its integrand scale, so it is evaluated in the
/// contour-deformed form
///
/// ```text
/// G_n = 1 / (2 pi sqrt(r r1)) * int_0^inf (chi + sqrt(chi^2 - 1) cosh t)^-(n + 1/2) dt
/// ```
///
/// whose integrand is positive. [`greens_angular_quadrature`] integrates the
/// angular form directly.
pub fn greens_quadrature(geometry: &RingGeometry, n: i64, spec: &QuadratureSpec) -> Result<f64> {
    let chi_m1 = geometry.chi_minus_one();
    if chi_m1 <= 0.0 {
        return Err(FmmError::Singular("coincident rings".into()));
    }
    let chi = 1.0 + chi_m1;
    let s = (chi_m1 * (chi + 1.0)).sqrt();
    let power = n.unsigned_abs() as f64 + 0.5;
    // log of the integrand relative to its value at t = 0
    let log_rel = |t: f64| -power * ((chi + s * t.cosh()) / (chi + s)).ln();
    let f0 = (chi + s).powf(-power);
    let f = |t: f64| f0 * log_rel(t).exp();

    // integrand below 1e-20 of its peak; tail beyond is below ~1e-19 relative
    let mut upper = 1.0;
    while log_rel(upper) > -46.0 {
        upper += 1.0;
    }
    let q = quad::integrate(f, 0.0, upper, spec)?;
    Ok(q / (2.0 * PI * (geometry.r * geometry.r1).sqrt()))
}

/// `G_n` from the defining angular integral
/// `(1 / 2 pi) int_0^pi cos(n t) / R dt`. Accurate only while the result is
/// not much smaller than `G_0`.
pub fn greens_angular_quadrature(
    geometry: &RingGeometry,
    n: i64,
    spec: &QuadratureSpec,
) -> Result<f64> {
    let rm2 = geometry.rho_minus_sq();
    let four_rr1 = 4.0 * geometry.r * geometry.r1;
    let nf = n as f64;
    let f = |t: f64| {
        let s = (0.5 * t).sin();
        (nf * t).cos() / (rm2 + four_rr1 * s * s).sqrt()
    };
    Ok(quad::integrate(f, 0.0, PI, spec)? / (2.0 * PI))
}

/// Scaled Taylor coefficients of `G_n` from quadrature of the Taylor
/// coefficients of `1 / R`.
#[derive(Debug, Clone)]
pub struct TaylorCoefficients {
    pub n_max: usize,
    pub order: usize,
    data: Vec<f64>,
}

impl TaylorCoefficients {
    pub fn get(&self, n: usize, i: usize, j: usize, k: usize) -> f64 {
        let s = self.order + 1;
        self.data[((n * s + i) * s + j) * s + k]
    }
}

/// Truncated Taylor polynomial in `(dr, dr1, dx)`, dense cube storage.
struct Jet {
    order: usize,
    c: Vec<f64>,
}

impl Jet {
    fn new(order: usize) -> Self {
        let s = order + 1;
        Self {
            order,
            c: vec![0.0; s * s * s],
        }
    }

    fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        let s = self.order + 1;
        (i * s + j) * s + k
    }

    /// `self * p` for a polynomial given as `((i, j, k), coeff)` terms.
    fn mul_sparse(&self, p: &[((usize, usize, usize), f64)]) -> Jet {
        let m = self.order;
        let mut out = Jet::new(m);
        for i in 0..=m {
            for j in 0..=m - i {
                for k in 0..=m - i - j {
                    let v = self.c[self.idx(i, j, k)];
                    if v == 0.0 {
                        continue;
                    }
                    for &((a, b, c), w) in p {
                        if i + a + j + b + k + c <= m {
                            let t = out.idx(i + a, j + b, k + c);
                            out.c[t] += v * w;
                        }
                    }
                }
            }
        }
        out
    }
}

/// Taylor coefficients of `G_n`, `n <= n_max`, total order `<= order`.
///
/// For each angle the Taylor polynomial of `1/R` is formed by a binomial
/// series in `R^2 - R0^2`, which is itself a quadratic polynomial in the
/// displacements. The periodic angular integral uses the trapezoidal rule,
/// which converges like `exp(-N acosh(chi))`.
pub fn greens_taylor_quadrature(
    geometry: &RingGeometry,
    n_max: usize,
    order: usize,
) -> TaylorCoefficients {
    let RingGeometry { r, r1, x } = *geometry;
    let chi = 1.0 + geometry.chi_minus_one();
    let width = chi.acosh();
    let nodes = 64 + 2 * (40.0 / width).ceil() as usize;
    let s = order + 1;
    let mut data = vec![0.0; (n_max + 1) * s * s * s];
    let mut binom = vec![1.0; order + 1];
    for m in 1..=order {
        binom[m] = binom[m - 1] * (-0.5 - (m as f64 - 1.0)) / m as f64;
    }
    for node in 0..nodes {
        let t = 2.0 * PI * node as f64 / nodes as f64;
        let c = t.cos();
        let sh = (0.5 * t).sin();
        let r0sq = geometry.rho_minus_sq() + 4.0 * r * r1 * sh * sh;
        let inv = 1.0 / r0sq;
        // (R^2 - R0^2) / R0^2
        let p = [
            ((1, 0, 0), (2.0 * r - 2.0 * r1 * c) * inv),
            ((0, 1, 0), (2.0 * r1 - 2.0 * r * c) * inv),
            ((0, 0, 1), 2.0 * x * inv),
            ((2, 0, 0), inv),
            ((0, 2, 0), inv),
            ((1, 1, 0), -2.0 * c * inv),
            ((0, 0, 2), inv),
        ];
        let mut power = Jet::new(order);
        power.c[0] = 1.0;
        let mut series = Jet::new(order);
        for (m, b) in binom.iter().enumerate() {
            if m > 0 {
                power = power.mul_sparse(&p);
            }
            for (acc, v) in series.c.iter_mut().zip(&power.c) {
                *acc += b * v;
            }
        }
        let scale = 1.0 / r0sq.sqrt() / (2.0 * nodes as f64);
        for n in 0..=n_max {
            let w = (n as f64 * t).cos() * scale;
            let dst = &mut data[n * s * s * s..(n + 1) * s * s * s];
            for (d, v) in dst.iter_mut().zip(&series.c) {
                *d += w * v;
            }
        }
    }
    TaylorCoefficients { n_max, order, data }
}

/// Contribution of one ring source to the modal potential at one point.
///
/// Field points on the axis (`r = 0`) see only the axisymmetric mode,
/// `G_0 = 1 / (2 sqrt(r1^2 + x^2))`.
pub fn direct_pair(src: &ModalRingSource, fld: Point2, n_modes: usize) -> Result<Vec<Complex64>> {
    let mut g = vec![0.0; n_modes];
    let mut out = vec![Complex64::new(0.0, 0.0); n_modes];
    pair_kernel(src, fld, &mut g)?;
    for (o, (a, gn)) in out.iter_mut().zip(src.amplitudes.iter().zip(&g)) {
        *o = a * gn;
    }
    Ok(out)
}

pub(crate) fn pair_kernel(src: &ModalRingSource, fld: Point2, g: &mut [f64]) -> Result<()> {
    let x = fld.z - src.position.z;
    if fld.r == 0.0 {
        g.fill(0.0);
        if let Some(g0) = g.first_mut() {
            let r1 = src.position.r;
            *g0 = 0.5 / (r1 * r1 + x * x).sqrt();
        }
        return Ok(());
    }
    let geometry = RingGeometry::new(fld.r, src.position.r, x)?;
    greens::greens_into(&geometry, g)
}

/// Accumulate the contribution of `sources` at `fld` into `acc`, using `g` as
/// scratch of length `acc.len()`. Errors carry the offending source index.
pub(crate) fn accumulate_direct<'a, I>(
    sources: I,
    fld: Point2,
    acc: &mut [Complex64],
    g: &mut [f64],
) -> Result<()>
where
    I: IntoIterator<Item = (usize, &'a ModalRingSource)>,
{
    for (idx, src) in sources {
        pair_kernel(src, fld, g).map_err(|e| annotate(e, idx))?;
        for (a, (s, gn)) in acc.iter_mut().zip(src.amplitudes.iter().zip(g.iter())) {
            *a += s * gn;
        }
    }
    Ok(())
}

fn annotate(e: FmmError, source: usize) -> FmmError {
    match e {
        FmmError::Singular(m) => FmmError::Singular(format!("source {source}: {m}")),
        FmmError::Domain(m) => FmmError::Domain(format!("source {source}: {m}")),
        other => other,
    }
}

/// Full `O(N_s N_f)` summation.
pub fn direct_evaluate(
    sources: &[ModalRingSource],
    field_points: &[Point2],
    n_modes: usize,
) -> Result<Vec<ModalPotential>> {
    direct_evaluate_with(sources, field_points, n_modes, Execution::Sequential)
}

pub fn direct_evaluate_with(
    sources: &[ModalRingSource],
    field_points: &[Point2],
    n_modes: usize,
    exec: Execution,
) -> Result<Vec<ModalPotential>> {
    crate::fmm::check_sources(sources, n_modes)?;
    let runner = Runner::new(exec)?;
    let results = runner.map(field_points, |&p| {
        let mut acc = vec![Complex64::new(0.0, 0.0); n_modes];
        let mut g = vec![0.0; n_modes];
        accumulate_direct(sources.iter().enumerate(), p, &mut acc, &mut g)?;
        Ok(ModalPotential {
            point: p,
            amplitudes: acc,
        })
    });
    results
        .into_iter()
        .enumerate()
        .map(|(j, r)| r.map_err(|e| field_annotate(e, j)))
        .collect()
}

pub(crate) fn field_annotate(e: FmmError, field: usize) -> FmmError {
    match e {
        FmmError::Singular(m) => FmmError::Singular(format!("field point {field}, {m}")),
        FmmError::Domain(m) => FmmError::Domain(format!("field point {field}, {m}")),
        other => other,
    }
}
