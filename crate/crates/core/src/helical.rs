//! Complex 3-vector algebra, the helical (curl-eigenfunction) basis and
//! single-triad geometry.

use std::fmt;
use std::ops::{Add, AddAssign, Index, Mul, Neg, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Residual tolerance for identities that hold exactly up to roundoff.
pub const IDENTITY_TOL: f64 = 1e-12;

/// Default orientation vector used to build the helical basis.
pub const DEFAULT_GAMMA: [f64; 3] = [1.0, 1.0, 1.0];

const I: Complex64 = Complex64::new(0.0, 1.0);

/// A vector in ℂ³.
///
/// `dot` is the bilinear product `Σ a_j b_j` (no conjugation); use
/// [`Complex3::conj`] explicitly where a Hermitian product is meant.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Complex3(pub [Complex64; 3]);

impl Complex3 {
    pub const ZERO: Complex3 = Complex3([Complex64::new(0.0, 0.0); 3]);

    pub fn new(a: Complex64, b: Complex64, c: Complex64) -> Self {
        Complex3([a, b, c])
    }

    pub fn from_real(v: [f64; 3]) -> Self {
        Complex3(v.map(|x| Complex64::new(x, 0.0)))
    }

    pub fn from_parts(re: [f64; 3], im: [f64; 3]) -> Self {
        Complex3([
            Complex64::new(re[0], im[0]),
            Complex64::new(re[1], im[1]),
            Complex64::new(re[2], im[2]),
        ])
    }

    #[inline]
    pub fn conj(&self) -> Self {
        let a = &self.0;
        Complex3([a[0].conj(), a[1].conj(), a[2].conj()])
    }

    pub fn dot(&self, other: &Complex3) -> Complex64 {
        self.0[0] * other.0[0] + self.0[1] * other.0[1] + self.0[2] * other.0[2]
    }

    pub fn cross(&self, other: &Complex3) -> Complex3 {
        cross(self, other)
    }

    /// `Σ |a_j|²`.
    pub fn norm_sqr(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Componentwise product with a real diagonal.
    pub fn scale_diag(&self, d: &[f64; 3]) -> Complex3 {
        Complex3([self.0[0] * d[0], self.0[1] * d[1], self.0[2] * d[2]])
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

impl Index<usize> for Complex3 {
    type Output = Complex64;
    fn index(&self, i: usize) -> &Complex64 {
        &self.0[i]
    }
}

impl Add for Complex3 {
    type Output = Complex3;
    fn add(self, rhs: Complex3) -> Complex3 {
        Complex3([self.0[0] + rhs.0[0], self.0[1] + rhs.0[1], self.0[2] + rhs.0[2]])
    }
}

impl AddAssign for Complex3 {
    fn add_assign(&mut self, rhs: Complex3) {
        for j in 0..3 {
            self.0[j] += rhs.0[j];
        }
    }
}

impl Sub for Complex3 {
    type Output = Complex3;
    fn sub(self, rhs: Complex3) -> Complex3 {
        Complex3([self.0[0] - rhs.0[0], self.0[1] - rhs.0[1], self.0[2] - rhs.0[2]])
    }
}

impl Neg for Complex3 {
    type Output = Complex3;
    fn neg(self) -> Complex3 {
        let a = &self.0;
        Complex3([-a[0], -a[1], -a[2]])
    }
}

impl Mul<f64> for Complex3 {
    type Output = Complex3;
    fn mul(self, rhs: f64) -> Complex3 {
        let a = &self.0;
        Complex3([a[0] * rhs, a[1] * rhs, a[2] * rhs])
    }
}

impl Mul<Complex64> for Complex3 {
    type Output = Complex3;
    fn mul(self, rhs: Complex64) -> Complex3 {
        let a = &self.0;
        Complex3([a[0] * rhs, a[1] * rhs, a[2] * rhs])
    }
}

/// Componentwise complex cross product.
pub fn cross(a: &Complex3, b: &Complex3) -> Complex3 {
    let (a, b) = (&a.0, &b.0);
    Complex3([
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ])
}

/// Integer wavevector in units of 2π/L.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WaveVector(pub [i64; 3]);

impl WaveVector {
    pub fn new(x: i64, y: i64, z: i64) -> Self {
        WaveVector([x, y, z])
    }

    pub fn is_zero(&self) -> bool {
        self.0 == [0, 0, 0]
    }

    pub fn magnitude(&self) -> f64 {
        let [x, y, z] = self.as_f64();
        (x * x + y * y + z * z).sqrt()
    }

    pub fn as_f64(&self) -> [f64; 3] {
        self.0.map(|c| c as f64)
    }

    pub fn scaled(&self, m: i64) -> WaveVector {
        WaveVector(self.0.map(|c| c * m))
    }

    pub fn as_complex(&self) -> Complex3 {
        Complex3::from_real(self.as_f64())
    }
}

impl Add for WaveVector {
    type Output = WaveVector;
    fn add(self, rhs: WaveVector) -> WaveVector {
        WaveVector([self.0[0] + rhs.0[0], self.0[1] + rhs.0[1], self.0[2] + rhs.0[2]])
    }
}

impl Neg for WaveVector {
    type Output = WaveVector;
    fn neg(self) -> WaveVector {
        WaveVector(self.0.map(|c| -c))
    }
}

impl fmt::Display for WaveVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{},{}]", self.0[0], self.0[1], self.0[2])
    }
}

/// Helicity sign selecting h₊ or h₋.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Parity {
    Plus,
    Minus,
}

impl Parity {
    pub fn sign(self) -> f64 {
        match self {
            Parity::Plus => 1.0,
            Parity::Minus => -1.0,
        }
    }

    pub fn as_i8(self) -> i8 {
        match self {
            Parity::Plus => 1,
            Parity::Minus => -1,
        }
    }

    pub fn from_sign(s: i64) -> Option<Parity> {
        match s {
            1 => Some(Parity::Plus),
            -1 => Some(Parity::Minus),
            _ => None,
        }
    }

    pub fn flip(self) -> Parity {
        match self {
            Parity::Plus => Parity::Minus,
            Parity::Minus => Parity::Plus,
        }
    }
}

fn cross_real(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn norm_real(a: [f64; 3]) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

/// Builds `h_s(k) = ν×κ + i s ν` with `κ = k/|k|` and `ν = k×Γ / |k×Γ|`.
///
/// Fails when `k` is zero or parallel to `gamma`; there is no fallback
/// orientation since the interaction constant depends on it.
pub fn make_helical_vector(k: WaveVector, s: Parity, gamma: [f64; 3]) -> Result<Complex3> {
    if k.is_zero() {
        return Err(Error::ZeroWaveVector(k));
    }
    let kf = k.as_f64();
    let kmag = norm_real(kf);
    let kxg = cross_real(kf, gamma);
    let kxg_norm = norm_real(kxg);
    // Integer k against an O(1) gamma: anything this small is an exact zero.
    if kxg_norm <= 1e-12 * kmag * norm_real(gamma).max(f64::MIN_POSITIVE) {
        return Err(Error::DegenerateDirection { k, gamma });
    }
    let kappa = kf.map(|c| c / kmag);
    let nu = kxg.map(|c| c / kxg_norm);
    let nu_x_kappa = cross_real(nu, kappa);
    let sign = s.sign();
    Ok(Complex3([
        Complex64::new(nu_x_kappa[0], sign * nu[0]),
        Complex64::new(nu_x_kappa[1], sign * nu[1]),
        Complex64::new(nu_x_kappa[2], sign * nu[2]),
    ]))
}

/// One interacting triad `k + p + q = 0` with fixed parities.
#[derive(Clone, Debug, PartialEq)]
pub struct TriadGeometry {
    pub k: WaveVector,
    pub p: WaveVector,
    pub q: WaveVector,
    pub parities: [Parity; 3],
    pub gamma: [f64; 3],
    /// Helical vectors `h_{s_k}(k), h_{s_p}(p), h_{s_q}(q)`.
    pub h: [Complex3; 3],
    /// Interaction constant `g = -¼ h_p* × h_q* · h_k*`.
    pub g: Complex64,
    /// Diagonal of `D = diag(s_k|k|, s_p|p|, s_q|q|)`.
    pub d_diag: [f64; 3],
    pub magnitudes: [f64; 3],
}

impl TriadGeometry {
    pub fn wavevectors(&self) -> [WaveVector; 3] {
        [self.k, self.p, self.q]
    }

    /// Trace of `D`.
    pub fn rho(&self) -> f64 {
        self.d_diag.iter().sum()
    }

    /// The configuration used throughout the numerical studies:
    /// k=[1,0,0], p=[0,-1,1], q=[-1,1,-1], s=(+,-,-), Γ=[1,1,1].
    pub fn reference() -> TriadGeometry {
        build_triad(
            WaveVector::new(1, 0, 0),
            WaveVector::new(0, -1, 1),
            WaveVector::new(-1, 1, -1),
            [Parity::Plus, Parity::Minus, Parity::Minus],
            DEFAULT_GAMMA,
        )
        .expect("reference triad is valid")
    }

    pub fn scaled(&self, m: i64) -> Result<TriadGeometry> {
        build_triad(
            self.k.scaled(m),
            self.p.scaled(m),
            self.q.scaled(m),
            self.parities,
            self.gamma,
        )
    }
}

/// `g = -¼ (h_p* × h_q*) · h_k*`.
pub fn interaction_constant(h_k: &Complex3, h_p: &Complex3, h_q: &Complex3) -> Complex64 {
    -0.25 * cross(&h_p.conj(), &h_q.conj()).dot(&h_k.conj())
}

pub fn build_triad(
    k: WaveVector,
    p: WaveVector,
    q: WaveVector,
    parities: [Parity; 3],
    gamma: [f64; 3],
) -> Result<TriadGeometry> {
    let sum = k + p + q;
    if !sum.is_zero() {
        return Err(Error::ClosureViolated(sum));
    }
    let h_k = make_helical_vector(k, parities[0], gamma)?;
    let h_p = make_helical_vector(p, parities[1], gamma)?;
    let h_q = make_helical_vector(q, parities[2], gamma)?;
    let magnitudes = [k.magnitude(), p.magnitude(), q.magnitude()];
    let d_diag = [
        parities[0].sign() * magnitudes[0],
        parities[1].sign() * magnitudes[1],
        parities[2].sign() * magnitudes[2],
    ];
    Ok(TriadGeometry {
        k,
        p,
        q,
        parities,
        gamma,
        g: interaction_constant(&h_k, &h_p, &h_q),
        h: [h_k, h_p, h_q],
        d_diag,
        magnitudes,
    })
}

/// Maximum absolute residual of each helical-basis identity over a triad.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BasisReport {
    /// `|k · h_s(k)|`
    pub transversality: f64,
    /// `|i k × h_s(k) − s|k| h_s(k)|`
    pub curl_eigen: f64,
    /// `||h_s(k)|² − 2|`
    pub norm: f64,
    /// `|h_+(k) · h_−(k)*|`
    pub orthogonality: f64,
    /// `|g(mk,mp,mq) − g(k,p,q)|` over m ∈ {1,2,3}
    pub scale_invariance: f64,
}

impl BasisReport {
    pub fn max_residual(&self) -> f64 {
        [
            self.transversality,
            self.curl_eigen,
            self.norm,
            self.orthogonality,
            self.scale_invariance,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

pub fn verify_basis_identities(geom: &TriadGeometry) -> BasisReport {
    let mut report = BasisReport::default();
    for k in geom.wavevectors() {
        let kc = k.as_complex();
        let kmag = k.magnitude();
        for s in [Parity::Plus, Parity::Minus] {
            // Valid geometry guarantees every member admits a basis.
            let h = make_helical_vector(k, s, geom.gamma).expect("valid triad member");
            report.transversality = report.transversality.max(kc.dot(&h).norm());
            let curl = cross(&kc, &h) * I - h * (s.sign() * kmag);
            report.curl_eigen = report.curl_eigen.max(curl.max_abs());
            report.norm = report.norm.max((h.norm_sqr() - 2.0).abs());
        }
        let hp = make_helical_vector(k, Parity::Plus, geom.gamma).expect("valid triad member");
        let hm = make_helical_vector(k, Parity::Minus, geom.gamma).expect("valid triad member");
        report.orthogonality = report.orthogonality.max(hp.dot(&hm.conj()).norm());
    }
    for m in 1..=3 {
        if let Ok(scaled) = geom.scaled(m) {
            report.scale_invariance = report.scale_invariance.max((scaled.g - geom.g).norm());
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn cross_of_canonical_basis() {
        let e1 = Complex3::from_real([1.0, 0.0, 0.0]);
        let e2 = Complex3::from_real([0.0, 1.0, 0.0]);
        assert_eq!(cross(&e1, &e2), Complex3::from_real([0.0, 0.0, 1.0]));
        assert_eq!(cross(&e1, &e1), Complex3::ZERO);
        let a = Complex3::new(c(1.0, 1.0), c(0.0, 0.0), c(0.0, 0.0));
        assert_eq!(cross(&a, &e2), Complex3::new(c(0.0, 0.0), c(0.0, 0.0), c(1.0, 1.0)));
    }

    #[test]
    fn helical_vector_for_unit_x() {
        let h = make_helical_vector(WaveVector::new(1, 0, 0), Parity::Plus, DEFAULT_GAMMA).unwrap();
        let r = 1.0 / 2f64.sqrt();
        let expected = Complex3::new(c(0.0, 0.0), c(r, -r), c(r, r));
        assert!((h - expected).max_abs() < 1e-15);
        assert!((h.norm_sqr() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn parallel_wavevector_is_rejected() {
        let err = make_helical_vector(WaveVector::new(3, 3, 3), Parity::Plus, DEFAULT_GAMMA);
        assert!(matches!(err, Err(Error::DegenerateDirection { .. })));
        let err = make_helical_vector(WaveVector::new(0, 0, 0), Parity::Plus, DEFAULT_GAMMA);
        assert!(matches!(err, Err(Error::ZeroWaveVector(_))));
    }

    #[test]
    fn reference_triad_diagonal() {
        let geom = TriadGeometry::reference();
        let expected = [1.0, -2f64.sqrt(), -3f64.sqrt()];
        for j in 0..3 {
            assert!((geom.d_diag[j] - expected[j]).abs() < 1e-15);
        }
    }

    #[test]
    fn reference_g_matches_hand_triple_product() {
        // h vectors worked out by hand from ν×κ ± iν for each member.
        let r2 = 1.0 / 2f64.sqrt();
        let r3 = 1.0 / 3f64.sqrt();
        let r6 = 1.0 / 6f64.sqrt();
        // k = [1,0,0], s=+1: ν = (0,-1,1)/√2, ν×κ = (0,1,1)/√2
        let h_k = Complex3::new(c(0.0, 0.0), c(r2, -r2), c(r2, r2));
        // p = [0,-1,1], s=-1: k×Γ = (-2,1,1), ν = (-2,1,1)/√6,
        // κ = (0,-1,1)/√2, ν×κ = (1·1-1·(-1), 1·0-(-2)·1, (-2)(-1)-1·0)/√12 = (2,2,2)/√12
        let h_p = Complex3::new(c(r3, 2.0 * r6), c(r3, -r6), c(r3, -r6));
        // q = [-1,1,-1], s=-1: k×Γ = (2,0,-2), ν = (1,0,-1)/√2,
        // κ = (-1,1,-1)/√3, ν×κ = (0·(-1)-(-1)·1, (-1)(-1)-1·(-1), 1·1-0)/√6 = (1,2,1)/√6
        let h_q = Complex3::new(c(r6, -r2), c(2.0 * r6, 0.0), c(r6, r2));
        let geom = TriadGeometry::reference();
        for (got, want) in geom.h.iter().zip([h_k, h_p, h_q]) {
            assert!((*got - want).max_abs() < 1e-15, "{got:?} vs {want:?}");
        }
        // Triple product expanded as a 3×3 determinant of the conjugates.
        let (a, b, k) = (h_p.conj().0, h_q.conj().0, h_k.conj().0);
        let det = k[0] * (a[1] * b[2] - a[2] * b[1]) - k[1] * (a[0] * b[2] - a[2] * b[0])
            + k[2] * (a[0] * b[1] - a[1] * b[0]);
        let g = -0.25 * det;
        assert!((geom.g - g).norm() < 1e-15, "{} vs {}", geom.g, g);
    }

    #[test]
    fn closure_violation_names_the_sum() {
        let err = build_triad(
            WaveVector::new(1, 0, 0),
            WaveVector::new(0, 1, 0),
            WaveVector::new(0, 0, 1),
            [Parity::Plus; 3],
            DEFAULT_GAMMA,
        )
        .unwrap_err();
        assert!(err.to_string().contains("[1,1,1]"), "{err}");
    }

    #[test]
    fn reference_basis_identities() {
        let report = verify_basis_identities(&TriadGeometry::reference());
        assert!(report.max_residual() <= IDENTITY_TOL, "{report:?}");
    }

    #[test]
    fn g_is_scale_invariant() {
        let geom = TriadGeometry::reference();
        let scaled = geom.scaled(2).unwrap();
        assert!((scaled.g - geom.g).norm() <= IDENTITY_TOL);
    }
}
