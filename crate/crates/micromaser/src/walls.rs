//! Hard walls from the Pell equation, soft-wall scans and the rotation
//! classification of `φ/π`.

use std::f64::consts::PI;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;

use crate::channels::{cos_n, sin_n};
use crate::error::{Error, Result};

/// `Kπ/√((m+1)(m+2))`.
pub fn phi_for_wall(m: u64, k: i64) -> f64 {
    k as f64 * PI / (((m + 1) as f64) * ((m + 2) as f64)).sqrt()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HardWall {
    pub m: BigInt,
    pub k: BigInt,
    /// `cos_m(φ) = (−1)^K`.
    pub cos_sign: i8,
}

impl HardWall {
    fn new(m: BigInt, k: BigInt) -> Self {
        let cos_sign = if k.is_even() { 1 } else { -1 };
        HardWall { m, k, cos_sign }
    }

    pub fn m_usize(&self) -> Option<usize> {
        self.m.to_usize()
    }

    /// `+1` for even `m`, `−1` for odd.
    pub fn parity(&self) -> i8 {
        if self.m.is_even() {
            1
        } else {
            -1
        }
    }

    pub fn phi(&self) -> f64 {
        let m = self.m.to_f64().unwrap_or(f64::INFINITY);
        let k = self.k.to_f64().unwrap_or(f64::INFINITY);
        k * PI / ((m + 1.0) * (m + 2.0)).sqrt()
    }
}

impl Serialize for HardWall {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("HardWall", 5)?;
        // Integers beyond u64 are emitted as decimal strings.
        match self.m.to_u64() {
            Some(m) => st.serialize_field("m", &m)?,
            None => st.serialize_field("m", &self.m.to_string())?,
        }
        match self.k.to_i64() {
            Some(k) => st.serialize_field("K", &k)?,
            None => st.serialize_field("K", &self.k.to_string())?,
        }
        st.serialize_field("parity", if self.m.is_even() { "even" } else { "odd" })?;
        st.serialize_field("cos_sign", &self.cos_sign)?;
        st.serialize_field("phi", &self.phi())?;
        st.end()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct WallSequence {
    pub walls: Vec<HardWall>,
    #[serde(serialize_with = "ser_big")]
    pub d: BigInt,
}

fn ser_big<S: serde::Serializer>(v: &BigInt, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v.to_u64() {
        Some(x) => s.serialize_u64(x),
        None => s.serialize_str(&v.to_string()),
    }
}

impl WallSequence {
    /// Pell pair `(x, y) = (2m+3, 2K/K₁)` of every wall.
    pub fn pell_pairs(&self) -> Vec<(BigInt, BigInt)> {
        let k1 = &self.walls[0].k;
        self.walls
            .iter()
            .map(|w| {
                let x = BigInt::from(2) * &w.m + 3;
                let y = BigInt::from(2) * &w.k / k1;
                (x, y)
            })
            .collect()
    }
}

/// Walls sharing the coupling of the wall `(m1, k1)`, generated by the Pell recurrence.
pub fn wall_sequence(m1: u64, k1: i64, count: usize) -> Result<WallSequence> {
    if k1 == 0 || count == 0 {
        return Err(Error::InvalidArgument("wall_sequence needs K1 != 0 and count >= 1".into()));
    }
    let sign = BigInt::from(k1.signum());
    let m1b = BigInt::from(m1);
    let k1b = BigInt::from(k1.abs());
    let a = BigInt::from(2 * m1 + 3);
    let d = BigInt::from(m1 + 1) * BigInt::from(m1 + 2);
    let mut walls = vec![HardWall::new(m1b.clone(), k1b.clone())];
    while walls.len() < count {
        let prev = walls.last().unwrap();
        let m = &prev.m * &a + BigInt::from(3) * (&m1b + 1) + BigInt::from(2) * &d * &prev.k / &k1b;
        let k = &prev.k * &a + &k1b * (BigInt::from(2) * &prev.m + 3);
        walls.push(HardWall::new(m, k));
    }
    for w in walls.iter_mut() {
        w.k = &w.k * &sign;
    }
    let seq = WallSequence { walls, d };
    for (x, y) in seq.pell_pairs() {
        if &x * &x - &seq.d * &y * &y != BigInt::one() {
            return Err(Error::Numerical(format!("Pell identity fails at x={x}")));
        }
    }
    let odd_first = m1 % 2 == 1;
    for (i, w) in seq.walls.iter().enumerate() {
        let expect_odd = odd_first || i % 2 == 1;
        if w.m.is_odd() != expect_odd {
            return Err(Error::Numerical(format!("wall parity pattern broken at index {i}")));
        }
    }
    Ok(seq)
}

/// Closed form `m_n = (x_n − 3)/2` with `x_n = ((2m₁+3+2√D)ⁿ + (2m₁+3−2√D)ⁿ)/2`,
/// evaluated exactly through the integer powers of `x₁ + y₁√D`.
pub fn wall_position_closed_form(m1: u64, n: u32) -> BigInt {
    let d = BigInt::from(m1 + 1) * BigInt::from(m1 + 2);
    let x1 = BigInt::from(2 * m1 + 3);
    let y1 = BigInt::from(2);
    let (mut x, mut y) = (BigInt::one(), BigInt::zero());
    for _ in 0..n {
        let nx = &x * &x1 + &d * &y * &y1;
        let ny = &x * &y1 + &y * &x1;
        x = nx;
        y = ny;
    }
    (x - 3) / 2
}

/// Positions `m < n_max` where `φ√((m+1)(m+2))/π` is an integer within `tol`, with that integer.
pub fn hard_walls_below(phi: f64, n_max: usize, tol: f64) -> Vec<(usize, i64)> {
    (0..n_max)
        .filter_map(|m| {
            let x = phi * (((m + 1) * (m + 2)) as f64).sqrt() / PI;
            let k = x.round();
            ((x - k).abs() < tol && k != 0.0).then_some((m, k as i64))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SoftWall {
    pub m: usize,
    pub strength: f64,
    pub cos_value: f64,
}

/// All `n ≤ n_max` with `sin²_n(φ) < threshold`.
pub fn soft_wall_scan(phi: f64, n_max: usize, threshold: f64) -> Result<Vec<SoftWall>> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::InvalidArgument(format!("threshold must be in (0,1], got {threshold}")));
    }
    Ok((0..=n_max)
        .filter_map(|m| {
            let s = sin_n(phi, m);
            let strength = s * s;
            (strength < threshold).then(|| SoftWall { m, strength, cos_value: cos_n(phi, m) })
        })
        .collect())
}

/// Soft walls that are local minima of `sin²_n` within their parity class.
pub fn soft_wall_minima(phi: f64, n_max: usize, threshold: f64) -> Result<Vec<SoftWall>> {
    let all = soft_wall_scan(phi, n_max, threshold)?;
    let s2 = |m: usize| sin_n(phi, m).powi(2);
    Ok(all
        .into_iter()
        .filter(|w| {
            let m = w.m;
            let left = if m >= 2 { s2(m - 2) } else { f64::INFINITY };
            left > w.strength && s2(m + 2) >= w.strength
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "class", rename_all = "kebab-case")]
pub enum Rotation {
    /// `φ/π = p/q` in lowest terms; soft walls recur periodically iff `p` is even.
    Rational { p: i64, q: i64, periodic_walls: bool },
    IrrationalWithinTol,
}

/// Continued-fraction classification of `φ/π`: the first convergent `p/q` with
/// `q ≤ 1/tol` and `|φ/π − p/q| ≤ tol/q²` marks it rational.
pub fn rotation_classify(phi: f64, tol: f64) -> Result<Rotation> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tol must be > 0, got {tol}")));
    }
    let x = phi / PI;
    let qmax = 1.0 / tol;
    let (mut p0, mut q0, mut p1, mut q1) = (0i128, 1i128, 1i128, 0i128);
    let mut rem = x;
    for _ in 0..64 {
        let a = rem.floor();
        if a.abs() > 1e18 {
            break;
        }
        let ai = a as i128;
        let (p2, q2) = (ai * p1 + p0, ai * q1 + q0);
        if q2 as f64 > qmax {
            break;
        }
        let err = (x - p2 as f64 / q2 as f64).abs();
        if err <= tol / (q2 as f64 * q2 as f64) {
            let (p, q) = (p2 as i64, q2 as i64);
            let g = p.gcd(&q).max(1);
            let (p, q) = (p / g, q / g);
            return Ok(Rotation::Rational { p, q, periodic_walls: p % 2 == 0 });
        }
        let frac = rem - a;
        if frac == 0.0 {
            break;
        }
        rem = 1.0 / frac;
        p0 = p1;
        q0 = q1;
        p1 = p2;
        q1 = q2;
    }
    Ok(Rotation::IrrationalWithinTol)
}

/// Whether a (possibly huge) wall position is odd.
pub fn is_odd(m: &BigInt) -> bool {
    m.abs().is_odd()
}
