//! Drift and diffusion fields of the deterministic, helicity-preserving (HST)
//! and energy-preserving (EST) triad models, plus the conservation functionals
//! and the verification oracles built on the full Galerkin sum.
//!
//! Sign convention: drift is `g (a* × D a*)` for every model, the HST noise
//! column is `g (b* × D a*)` and the EST noise column is `g (a* × D b*)`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::helical::{cross, make_helical_vector, Complex3, Parity, TriadGeometry, WaveVector};

/// Any amplitude with modulus above this marks a trajectory as diverged.
pub const BLOWUP_THRESHOLD: f64 = 1e8;

/// Ratio between the full Galerkin sum on the closed six-mode set and the
/// single-triad drift: the double sum counts both orderings of (p, q), and
/// the triad form carries the opposite overall sign.
pub const GALERKIN_TO_TRIAD: f64 = -0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelKind {
    Deterministic,
    Hst,
    Est,
}

impl ModelKind {
    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Deterministic => "det",
            ModelKind::Hst => "hst",
            ModelKind::Est => "est",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "det" | "deterministic" => Ok(ModelKind::Deterministic),
            "hst" | "salt" | "lu" => Ok(ModelKind::Hst),
            "est" => Ok(ModelKind::Est),
            other => Err(Error::InvalidArgument(format!(
                "unknown model `{other}` (expected det, hst or est)"
            ))),
        }
    }
}

/// Time-independent noise amplitude `b = (b_k, b_p, b_q)`.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct NoiseAmplitude(pub Complex3);

impl NoiseAmplitude {
    pub fn real(b: [f64; 3]) -> Self {
        NoiseAmplitude(Complex3::from_real(b))
    }

    pub fn zero() -> Self {
        NoiseAmplitude(Complex3::ZERO)
    }

    pub fn is_zero(&self) -> bool {
        self.0 == Complex3::ZERO
    }

    pub fn real_parts(&self) -> [f64; 3] {
        self.0 .0.map(|z| z.re)
    }
}

/// Amplitudes at one instant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TriadState {
    pub a: Complex3,
    pub t: f64,
}

impl TriadState {
    pub fn is_diverged(&self) -> bool {
        is_diverged(&self.a)
    }
}

pub fn is_diverged(a: &Complex3) -> bool {
    // Squared moduli avoid a hypot per component in the stepping loop.
    const LIMIT_SQR: f64 = BLOWUP_THRESHOLD * BLOWUP_THRESHOLD;
    !a.is_finite() || a.0.iter().any(|z| z.norm_sqr() > LIMIT_SQR)
}

/// `g (a* × D a*)`.
pub fn deterministic_rhs(a: &Complex3, geom: &TriadGeometry) -> Complex3 {
    let ac = a.conj();
    cross(&ac, &ac.scale_diag(&geom.d_diag)) * geom.g
}

/// HST noise column `g (b* × D a*)`.
pub fn hst_diffusion(a: &Complex3, b: &NoiseAmplitude, geom: &TriadGeometry) -> Complex3 {
    cross(&b.0.conj(), &a.conj().scale_diag(&geom.d_diag)) * geom.g
}

/// EST noise column `g (a* × D b*)`.
pub fn est_diffusion(a: &Complex3, b: &NoiseAmplitude, geom: &TriadGeometry) -> Complex3 {
    cross(&a.conj(), &b.0.conj().scale_diag(&geom.d_diag)) * geom.g
}

pub fn diffusion(model: ModelKind, a: &Complex3, b: &NoiseAmplitude, geom: &TriadGeometry) -> Complex3 {
    match model {
        ModelKind::Deterministic => Complex3::ZERO,
        ModelKind::Hst => hst_diffusion(a, b, geom),
        ModelKind::Est => est_diffusion(a, b, geom),
    }
}

/// Triad energy `a · a*`.
pub fn energy(a: &Complex3) -> f64 {
    a.norm_sqr()
}

/// Triad helicity `a · (D a)*`.
pub fn helicity(a: &Complex3, geom: &TriadGeometry) -> f64 {
    a.0.iter()
        .zip(geom.d_diag.iter())
        .map(|(z, d)| d * z.norm_sqr())
        .sum()
}

/// Residual of `a* × D b − b × D a* = (ρ Id − D)(a × b)*` for real `b`
/// (only the real parts of `b` are used).
pub fn difference_identity_residual(a: &Complex3, b: &[f64; 3], geom: &TriadGeometry) -> f64 {
    let bc = Complex3::from_real(*b);
    let d = &geom.d_diag;
    let lhs = cross(&a.conj(), &bc.scale_diag(d)) - cross(&bc, &a.conj().scale_diag(d));
    let rho = geom.rho();
    let rhs = cross(a, &bc).conj().scale_diag(&[rho - d[0], rho - d[1], rho - d[2]]);
    (lhs - rhs).max_abs()
}

/// Rate at which the non-conserved quantity changes per unit `∘dW`:
/// `d(a·a*)/dW` for HST and `d(a·(Da)*)/dW` for EST.
///
/// Written as `2 Re[g b*·(D a* × a*)]` and `2 Re[g (D b*)·(D a* × a*)]`;
/// the factor two comes from differentiating `|a_j|²`.
pub fn deviation_increment(
    model: ModelKind,
    a: &Complex3,
    b: &NoiseAmplitude,
    geom: &TriadGeometry,
) -> Result<f64> {
    let ac = a.conj();
    let da_x_a = cross(&ac.scale_diag(&geom.d_diag), &ac);
    let weight = match model {
        ModelKind::Deterministic => return Err(Error::NoDeviation),
        ModelKind::Hst => b.0.conj(),
        ModelKind::Est => b.0.conj().scale_diag(&geom.d_diag),
    };
    Ok(2.0 * (geom.g * weight.dot(&da_x_a)).re)
}

/// Finite set of helical coefficients `a_s(k)` keyed by (wavevector, parity).
pub type ModeCoefficients = BTreeMap<(WaveVector, Parity), Complex64>;

/// Checks `a_s(−k) = a_s(k)*` for every entry (missing entries count as 0).
pub fn check_reality(coeffs: &ModeCoefficients) -> Result<()> {
    const TOL: f64 = 1e-14;
    for (&(k, s), &a) in coeffs {
        let partner = coeffs.get(&(-k, s)).copied().unwrap_or_default();
        if (partner - a.conj()).norm() > TOL * (1.0 + a.norm()) {
            return Err(Error::RealityViolated {
                wavevector: k,
                parity: s.as_i8(),
            });
        }
    }
    Ok(())
}

/// Evaluates the projected Euler right-hand side for `a_{s_k}(k)` by brute
/// force over all closing pairs in the supplied mode set:
///
/// `−¼ Σ_{p+q+k=0} Σ_{s_p,s_q} (s_p|p| − s_q|q|) a*_{s_p}(p) a*_{s_q}(q) h*_{s_p}(p)×h*_{s_q}(q)·h*_{s_k}(k)`.
pub fn galerkin_oracle_rhs(
    coeffs: &ModeCoefficients,
    k: WaveVector,
    s_k: Parity,
    gamma: [f64; 3],
) -> Result<Complex64> {
    check_reality(coeffs)?;
    let h_k = make_helical_vector(k, s_k, gamma)?.conj();
    let mut total = Complex64::new(0.0, 0.0);
    for (&(p, s_p), &a_p) in coeffs {
        for (&(q, s_q), &a_q) in coeffs {
            if !(p + q + k).is_zero() {
                continue;
            }
            let h_p = make_helical_vector(p, s_p, gamma)?.conj();
            let h_q = make_helical_vector(q, s_q, gamma)?.conj();
            let weight = s_p.sign() * p.magnitude() - s_q.sign() * q.magnitude();
            total += weight * a_p.conj() * a_q.conj() * cross(&h_p, &h_q).dot(&h_k);
        }
    }
    Ok(-0.25 * total)
}

/// The closed six-mode set `{±k, ±p, ±q}` of a triad carrying state `a`
/// (with conjugate partners on the negative wavevectors).
pub fn triad_mode_set(a: &Complex3, geom: &TriadGeometry) -> ModeCoefficients {
    let mut coeffs = ModeCoefficients::new();
    for (j, k) in geom.wavevectors().into_iter().enumerate() {
        let s = geom.parities[j];
        coeffs.insert((k, s), a[j]);
        coeffs.insert((-k, s), a[j].conj());
    }
    coeffs
}

/// Max modulus of `f_k^{pq} = (−i(p+q)·h_k)(h_p·h_q)` and its two cyclic
/// permutations; these terms separate the LU and SALT projections.
pub fn lu_salt_coincidence_residual(geom: &TriadGeometry) -> f64 {
    let vs = geom.wavevectors();
    let minus_i = Complex64::new(0.0, -1.0);
    let mut worst: f64 = 0.0;
    for j in 0..3 {
        let (m, n) = ((j + 1) % 3, (j + 2) % 3);
        let sum = (vs[m] + vs[n]).as_complex();
        let f = minus_i * sum.dot(&geom.h[j]) * geom.h[m].dot(&geom.h[n]);
        worst = worst.max(f.norm());
    }
    worst
}
