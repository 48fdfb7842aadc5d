//! Complete elliptic integrals and the Legendre functions of the second kind
//! of half-integer degree, `Q_{n-1/2}(chi)` for `chi > 1`.
//!
//! The elliptic integrals use Carlson's symmetric forms `R_F` and `R_D`
//! (duplication algorithm). The `Q` sequence is generated by the three-term
//! recursion
//!
//! ```text
//! (2m - 1) Q_{m-3/2} = 4 m chi Q_{m-1/2} - (2m + 1) Q_{m+1/2}
//! ```
//!
//! run forward from the elliptic-integral seeds close to `chi = 1`, and
//! backward (Miller's algorithm) elsewhere, where `Q` is the minimal solution.

use std::f64::consts::FRAC_PI_2;

use crate::error::{FmmError, Result};

/// Below this argument the forward recursion is used.
pub const FORWARD_SWITCH: f64 = 1.008;

/// Highest `n_max` for which the switch is [`FORWARD_SWITCH`] itself. Beyond
/// it the forward branch is kept only while `n_max * acosh(chi)` stays below
/// its value at the switch, which bounds the growth of rounding errors.
pub const FORWARD_MODES: usize = 17;

/// Fixed headroom of the classical backward recursion: the start index is
/// `n_max + 80`.
pub const BACKWARD_HEADROOM: usize = 80;

/// Smallest headroom chosen by [`miller_headroom`].
pub const MIN_HEADROOM: usize = 8;

/// `chi - 1` at or below this value is treated as coincident rings.
pub const SINGULAR_GUARD: f64 = 1e-14;

/// `ln(1e17) / 2`: the Miller error after `h` steps is `exp(-2 h acosh(chi))`.
const MILLER_DECAY: f64 = 19.6;

// Above this argument Q_{1/2} is taken from the descending-Landen form, which
// has no cancellation. The direct form loses about log10(4 chi) digits.
const LANDEN_SWITCH: f64 = 2.0;

const RESCALE_ABOVE: f64 = 1e100;

/// Values of the complete elliptic integrals `K` and `E` for one modulus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipticPair {
    pub k_complete: f64,
    pub e_complete: f64,
}

/// `Q_{n-1/2}(chi)` for `n = 0..=n_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct LegendreQSequence {
    pub chi: f64,
    pub values: Vec<f64>,
}

impl LegendreQSequence {
    pub fn n_max(&self) -> usize {
        self.values.len() - 1
    }
}

/// Which recursion produced a `Q` sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QBranch {
    Forward,
    Backward,
}

/// Carlson's symmetric integral of the first kind, `R_F(x, y, z)`.
///
/// At most one argument may be zero; all must be non-negative.
pub fn carlson_rf(x: f64, y: f64, z: f64) -> f64 {
    const ERRTOL: f64 = 8e-4;
    let (mut x, mut y, mut z) = (x, y, z);
    let (mut ave, mut dx, mut dy, mut dz);
    loop {
        let (sx, sy, sz) = (x.sqrt(), y.sqrt(), z.sqrt());
        let lambda = sx * (sy + sz) + sy * sz;
        x = 0.25 * (x + lambda);
        y = 0.25 * (y + lambda);
        z = 0.25 * (z + lambda);
        ave = (x + y + z) / 3.0;
        dx = (ave - x) / ave;
        dy = (ave - y) / ave;
        dz = (ave - z) / ave;
        if dx.abs().max(dy.abs()).max(dz.abs()) <= ERRTOL {
            break;
        }
    }
    let e2 = dx * dy - dz * dz;
    let e3 = dx * dy * dz;
    (1.0 + (e2 / 24.0 - 0.1 - 3.0 / 44.0 * e3) * e2 + e3 / 14.0) / ave.sqrt()
}

/// Carlson's symmetric integral of the second kind, `R_D(x, y, z)`.
///
/// `x` and `y` must be non-negative with at most one of them zero, `z > 0`.
pub fn carlson_rd(x: f64, y: f64, z: f64) -> f64 {
    const ERRTOL: f64 = 5e-4;
    const C1: f64 = 3.0 / 14.0;
    const C2: f64 = 1.0 / 6.0;
    const C3: f64 = 9.0 / 22.0;
    const C4: f64 = 3.0 / 26.0;
    const C5: f64 = 0.25 * C3;
    const C6: f64 = 1.5 * C4;
    let (mut x, mut y, mut z) = (x, y, z);
    let mut sum = 0.0;
    let mut fac = 1.0;
    let (mut ave, mut dx, mut dy, mut dz);
    loop {
        let (sx, sy, sz) = (x.sqrt(), y.sqrt(), z.sqrt());
        let lambda = sx * (sy + sz) + sy * sz;
        sum += fac / (sz * (z + lambda));
        fac *= 0.25;
        x = 0.25 * (x + lambda);
        y = 0.25 * (y + lambda);
        z = 0.25 * (z + lambda);
        ave = 0.2 * (x + y + 3.0 * z);
        dx = (ave - x) / ave;
        dy = (ave - y) / ave;
        dz = (ave - z) / ave;
        if dx.abs().max(dy.abs()).max(dz.abs()) <= ERRTOL {
            break;
        }
    }
    let ea = dx * dy;
    let eb = dz * dz;
    let ec = ea - eb;
    let ed = ea - 6.0 * eb;
    let ee = ed + ec + ec;
    3.0 * sum
        + fac
            * (1.0
                + ed * (-C1 + C5 * ed - C6 * dz * ee)
                + dz * (C2 * ee + dz * (-C3 * ec + dz * C4 * ea)))
            / (ave * ave.sqrt())
}

/// `K` and `E` for modulus `k` (not the parameter `m = k^2`).
pub fn elliptic_ke(modulus: f64) -> Result<EllipticPair> {
    if !(0.0..1.0).contains(&modulus) {
        return Err(FmmError::Domain(format!(
            "elliptic modulus must lie in [0, 1), got {modulus}"
        )));
    }
    Ok(elliptic_ke_complementary((1.0 - modulus) * (1.0 + modulus)))
}

/// `K` and `E` given the complementary parameter `kc2 = 1 - k^2 > 0`.
///
/// Passing `kc2` directly avoids the cancellation in `1 - k^2` as `k -> 1`.
/// `E` is evaluated as `2 R_G(0, 1, kc2)` written with all terms positive.
pub fn elliptic_ke_complementary(kc2: f64) -> EllipticPair {
    debug_assert!(kc2 > 0.0 && kc2 <= 1.0);
    let k2 = 1.0 - kc2;
    let rf = carlson_rf(0.0, kc2, 1.0);
    let e = if k2 == 0.0 {
        FRAC_PI_2
    } else {
        kc2 * (rf + k2 * carlson_rd(0.0, 1.0, kc2) / 3.0)
    };
    EllipticPair {
        k_complete: rf,
        e_complete: e,
    }
}

/// `(Q_{-1/2}(chi), Q_{1/2}(chi))`.
pub fn legendre_q_seed(chi: f64) -> Result<(f64, f64)> {
    check_argument(chi, chi - 1.0)?;
    Ok(seed_pair(chi, chi - 1.0))
}

fn check_argument(chi: f64, chi_m1: f64) -> Result<()> {
    if !chi.is_finite() || chi.is_nan() {
        return Err(FmmError::Domain(format!(
            "Q argument must be finite, got {chi}"
        )));
    }
    if chi_m1 <= SINGULAR_GUARD {
        return Err(FmmError::Singular(format!(
            "Q_(n-1/2) is singular at chi = 1 (chi - 1 = {chi_m1:e})"
        )));
    }
    Ok(())
}

/// Seeds with `chi - 1` supplied separately so that it can be formed without
/// cancellation by the caller.
pub(crate) fn seed_pair(chi: f64, chi_m1: f64) -> (f64, f64) {
    (q_minus_half(chi, chi_m1), q_plus_half(chi, chi_m1))
}

// mu K(mu) with K = pi / (2 agm(1, mu')), mu' = sqrt((chi - 1) / (chi + 1)).
fn q_minus_half(chi: f64, chi_m1: f64) -> f64 {
    let mu = (2.0 / (1.0 + chi)).sqrt();
    let kc = (chi_m1 / (chi + 1.0)).sqrt();
    mu * FRAC_PI_2 / agm(1.0, kc)
}

/// Arithmetic-geometric mean of positive `a` and `b`.
pub fn agm(mut a: f64, mut b: f64) -> f64 {
    // a - b roughly squares each step, so one step past 1e-8 is exact.
    while (a - b).abs() > 1e-8 * a {
        let g = (a * b).sqrt();
        a = 0.5 * (a + b);
        b = g;
    }
    let g = (a * b).sqrt();
    0.5 * (0.5 * (a + b) + g)
}

fn q_plus_half(chi: f64, chi_m1: f64) -> f64 {
    if chi < LANDEN_SWITCH {
        let mu = (2.0 / (1.0 + chi)).sqrt();
        let ke = elliptic_ke_complementary(chi_m1 / (chi + 1.0));
        chi * mu * ke.k_complete - (1.0 + chi) * mu * ke.e_complete
    } else {
        // With k1 = exp(-acosh(chi)), Q_{1/2} = 2 k1^(-1/2) (K(k1) - E(k1))
        // and K - E = k1^2 R_D(0, 1 - k1^2, 1) / 3.
        let s = (chi_m1 * (chi + 1.0)).sqrt();
        let k1 = 1.0 / (chi + s);
        let one_minus_k1 = (chi_m1 + s) / (chi + s);
        let kc2 = one_minus_k1 * (1.0 + k1);
        2.0 / 3.0 * k1 * k1.sqrt() * carlson_rd(0.0, kc2, 1.0)
    }
}

/// `Q_{n-1/2}(chi)` for `n = 0..=n_max`, choosing the recursion direction from
/// `chi`.
pub fn legendre_q_sequence(chi: f64, n_max: usize) -> Result<LegendreQSequence> {
    let mut values = vec![0.0; n_max + 1];
    q_sequence_into(chi, chi - 1.0, &mut values)?;
    Ok(LegendreQSequence { chi, values })
}

/// As [`legendre_q_sequence`] but with an explicit recursion branch and
/// backward-recursion headroom.
pub fn legendre_q_sequence_with(
    chi: f64,
    n_max: usize,
    branch: QBranch,
    headroom: usize,
) -> Result<LegendreQSequence> {
    let chi_m1 = chi - 1.0;
    check_argument(chi, chi_m1)?;
    let mut values = vec![0.0; n_max + 1];
    match branch {
        QBranch::Forward => forward_into(chi, chi_m1, &mut values),
        QBranch::Backward => backward_into(chi, chi_m1, headroom, &mut values)?,
    }
    Ok(LegendreQSequence { chi, values })
}

/// Fill `out[n] = Q_{n-1/2}(chi)`. `chi_m1` must equal `chi - 1`, ideally
/// computed without cancellation.
pub(crate) fn q_sequence_into(chi: f64, chi_m1: f64, out: &mut [f64]) -> Result<()> {
    check_argument(chi, chi_m1)?;
    if forward_is_stable(chi, chi_m1, out.len() - 1) {
        forward_into(chi, chi_m1, out);
        Ok(())
    } else {
        backward_into(chi, chi_m1, miller_headroom(chi_m1), out)
    }
}

/// Whether the default branch for `Q_{n-1/2}(chi)`, `n <= n_max`, is the
/// forward recursion.
pub fn forward_is_stable(chi: f64, chi_m1: f64, n_max: usize) -> bool {
    if chi >= FORWARD_SWITCH {
        return false;
    }
    n_max <= FORWARD_MODES
        || n_max as f64 * acosh_1p(chi_m1) <= FORWARD_MODES as f64 * acosh_1p(FORWARD_SWITCH - 1.0)
}

// acosh(1 + d) without cancellation.
fn acosh_1p(d: f64) -> f64 {
    (d + (d * (2.0 + d)).sqrt()).ln_1p()
}

/// Headroom for the default backward branch: enough that the dominant
/// solution has decayed by `1e-17` relative to the minimal one, which needs
/// `acosh(chi) * headroom >= 19.6`, and at least [`MIN_HEADROOM`].
pub fn miller_headroom(chi_m1: f64) -> usize {
    let needed = (MILLER_DECAY / acosh_1p(chi_m1)).ceil();
    if needed.is_finite() && needed > MIN_HEADROOM as f64 {
        needed as usize
    } else {
        MIN_HEADROOM
    }
}

fn forward_into(chi: f64, chi_m1: f64, out: &mut [f64]) {
    let (q0, q1) = seed_pair(chi, chi_m1);
    out[0] = q0;
    if out.len() > 1 {
        out[1] = q1;
    }
    for m in 1..out.len().saturating_sub(1) {
        let mf = m as f64;
        out[m + 1] = (4.0 * mf * chi * out[m] - (2.0 * mf - 1.0) * out[m - 1]) / (2.0 * mf + 1.0);
    }
}

fn backward_into(chi: f64, chi_m1: f64, headroom: usize, out: &mut [f64]) -> Result<()> {
    let n_max = out.len() - 1;
    let top = n_max + headroom.max(1);
    // Q_{m-3/2} from Q_{m-1/2} and Q_{m+1/2}; coefficients stay off the
    // dependency chain.
    let step = |m: usize, q_mid: f64, q_hi: f64| {
        let mf = m as f64;
        let inv = 1.0 / (2.0 * mf - 1.0);
        (4.0 * mf * chi * inv) * q_mid - ((2.0 * mf + 1.0) * inv) * q_hi
    };
    // q_hi = Q at index m + 1, q_mid = Q at index m
    let mut q_hi = 0.0_f64;
    let mut q_mid = 1.0_f64;
    for m in (n_max + 2..top).rev() {
        let q_lo = step(m, q_mid, q_hi);
        q_hi = q_mid;
        q_mid = q_lo;
        if q_mid.abs() > RESCALE_ABOVE {
            let s = 1.0 / q_mid.abs();
            q_hi *= s;
            q_mid *= s;
        }
    }
    let start = (top - 1).min(n_max + 1);
    if start <= n_max {
        out[start] = q_mid;
    }
    for m in (1..=start).rev() {
        let q_lo = step(m, q_mid, q_hi);
        q_hi = q_mid;
        q_mid = q_lo;
        out[m - 1] = q_lo;
        if q_lo.abs() > RESCALE_ABOVE {
            let s = 1.0 / q_lo.abs();
            q_hi *= s;
            q_mid *= s;
            for v in out[m - 1..].iter_mut() {
                *v *= s;
            }
        }
    }
    let scale = q_minus_half(chi, chi_m1) / out[0];
    for v in out.iter_mut() {
        *v *= scale;
    }
    // A NaN reaches index 0 and underflow shows first at n_max.
    let ok = |v: f64| v.is_finite() && v > 0.0;
    if !(ok(out[0]) && ok(out[n_max])) {
        let n = out.iter().position(|v| !ok(*v)).unwrap_or(n_max);
        return Err(FmmError::PrecisionLoss(format!(
            "Q_(n-1/2)({chi}) underflowed at n = {n} in the backward recursion"
        )));
    }
    Ok(())
}
