//! Finite-field arithmetic over prime fields GF(p) and binary extension
//! fields GF(2^w), w <= 16.
//!
//! Every field is table driven: a generator is located once per field and
//! the log/exp tables are shared between all handles to the same field.
//! Elements are plain 16-bit values; for binary fields the bits are the
//! polynomial-basis coefficients.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reduction polynomials for GF(2^w), indexed by `w - 1`.
///
/// w=8 is x^8+x^4+x^3+x+1 and w=16 is x^16+x^12+x^3+x+1; these two are
/// fixed so that shards produced by different implementations agree.
const BINARY_POLYNOMIALS: [u32; 16] = [
    0x3, 0x7, 0xB, 0x13, 0x25, 0x43, 0x89, 0x11B, 0x211, 0x409, 0x805, 0x1053, 0x201B, 0x4443,
    0x8003, 0x1100B,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    Prime,
    Binary,
}

impl FieldKind {
    pub fn tag(self) -> u8 {
        match self {
            FieldKind::Prime => 0,
            FieldKind::Binary => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(FieldKind::Prime),
            1 => Ok(FieldKind::Binary),
            other => Err(Error::Format(format!("unknown field kind byte {other}"))),
        }
    }
}

/// Field descriptor: a prime modulus `p`, or an exponent `w` for GF(2^w).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FieldSpec {
    pub kind: FieldKind,
    pub modulus: u16,
}

impl FieldSpec {
    pub const GF256: FieldSpec = FieldSpec { kind: FieldKind::Binary, modulus: 8 };

    pub fn prime(p: u16) -> Self {
        FieldSpec { kind: FieldKind::Prime, modulus: p }
    }

    pub fn binary(w: u16) -> Self {
        FieldSpec { kind: FieldKind::Binary, modulus: w }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            FieldKind::Prime if !is_prime(self.modulus as u32) => {
                Err(Error::NotPrime(self.modulus as u32))
            }
            FieldKind::Binary if !(1..=16).contains(&self.modulus) => {
                Err(Error::ExponentOutOfRange(self.modulus))
            }
            _ => Ok(()),
        }
    }

    /// Number of elements. Only meaningful for a valid descriptor.
    pub fn order(&self) -> u32 {
        match self.kind {
            FieldKind::Prime => self.modulus as u32,
            FieldKind::Binary => 1u32 << self.modulus,
        }
    }

    /// The smallest supported field holding at least `min_order` elements.
    ///
    /// Candidates are primes below 2^16 and GF(2^w); on equal order the
    /// prime field wins, which only happens for order 2.
    pub fn minimal(min_order: u64) -> Result<Self> {
        let min_order = min_order.max(2);
        let binary = (1..=16u16)
            .map(FieldSpec::binary)
            .find(|f| f.order() as u64 >= min_order);
        let prime = (min_order..65536)
            .find(|&p| is_prime(p as u32))
            .map(|p| FieldSpec::prime(p as u16));
        match (prime, binary) {
            (Some(p), Some(b)) => Ok(if b.order() < p.order() { b } else { p }),
            (Some(p), None) => Ok(p),
            (None, Some(b)) => Ok(b),
            (None, None) => Err(Error::FieldTooSmall { required: min_order, order: 1 << 16 }),
        }
    }

    /// Serialized form used in shard headers: kind byte then a little-endian u16.
    pub fn to_bytes(&self) -> [u8; 3] {
        let m = self.modulus.to_le_bytes();
        [self.kind.tag(), m[0], m[1]]
    }

    pub fn from_bytes(bytes: [u8; 3]) -> Result<Self> {
        let spec = FieldSpec {
            kind: FieldKind::from_tag(bytes[0])?,
            modulus: u16::from_le_bytes([bytes[1], bytes[2]]),
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl fmt::Display for FieldSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            FieldKind::Prime => write!(f, "p{}", self.modulus),
            FieldKind::Binary => write!(f, "gf2^{}", self.modulus),
        }
    }
}

impl FromStr for FieldSpec {
    type Err = Error;

    /// Accepts `p<prime>`, `gf2^<w>` and `gf<2^w>` (e.g. `gf256`).
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Format(format!("unrecognized field `{s}`"));
        let lower = s.trim().to_ascii_lowercase();
        let spec = if let Some(p) = lower.strip_prefix("prime:").or_else(|| lower.strip_prefix('p')) {
            FieldSpec::prime(p.parse().map_err(|_| bad())?)
        } else if let Some(w) = lower.strip_prefix("gf2^") {
            FieldSpec::binary(w.parse().map_err(|_| bad())?)
        } else if let Some(q) = lower.strip_prefix("gf") {
            let q: u32 = q.parse().map_err(|_| bad())?;
            if !q.is_power_of_two() || q < 2 {
                return Err(bad());
            }
            FieldSpec::binary(q.trailing_zeros() as u16)
        } else {
            return Err(bad());
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl Serialize for FieldSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FieldSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A field element, canonically represented by its integer value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Elem(u16);

impl Elem {
    pub const ZERO: Elem = Elem(0);
    pub const ONE: Elem = Elem(1);

    /// Wraps a raw value without range checking; see [`Field::element`].
    pub const fn from_raw(v: u16) -> Self {
        Elem(v)
    }

    pub const fn value(self) -> u16 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for Elem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug)]
struct Tables {
    // exp has length 2 * (order - 1) so log sums never need reducing.
    exp: Vec<u16>,
    log: Vec<u32>,
}

/// Handle to a concrete finite field. Cloning is cheap.
#[derive(Clone)]
pub struct Field {
    spec: FieldSpec,
    order: u32,
    tables: Arc<Tables>,
}

impl fmt::Debug for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("Field").field(&self.spec).finish()
    }
}

impl PartialEq for Field {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec
    }
}

impl Eq for Field {}

pub fn make_field(spec: FieldSpec) -> Result<Field> {
    Field::new(spec)
}

impl Field {
    pub fn new(spec: FieldSpec) -> Result<Self> {
        spec.validate()?;
        static CACHE: OnceLock<Mutex<HashMap<FieldSpec, Arc<Tables>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(Default::default);
        let tables = {
            let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
            match guard.get(&spec) {
                Some(t) => t.clone(),
                None => {
                    let t = Arc::new(build_tables(spec)?);
                    guard.insert(spec, t.clone());
                    t
                }
            }
        };
        Ok(Field { spec, order: spec.order(), tables })
    }

    pub fn spec(&self) -> FieldSpec {
        self.spec
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    /// Bytes per stored symbol: 1 up to order 256, else 2.
    pub fn symbol_bytes(&self) -> usize {
        if self.order <= 256 {
            1
        } else {
            2
        }
    }

    pub fn element(&self, v: u32) -> Result<Elem> {
        if v < self.order {
            Ok(Elem(v as u16))
        } else {
            Err(Error::ElementOutOfRange { value: v, order: self.order })
        }
    }

    pub fn contains(&self, e: Elem) -> bool {
        (e.0 as u32) < self.order
    }

    #[inline]
    pub fn add(&self, a: Elem, b: Elem) -> Elem {
        match self.spec.kind {
            FieldKind::Binary => Elem(a.0 ^ b.0),
            FieldKind::Prime => {
                let s = a.0 as u32 + b.0 as u32;
                Elem(if s >= self.order { s - self.order } else { s } as u16)
            }
        }
    }

    #[inline]
    pub fn neg(&self, a: Elem) -> Elem {
        match self.spec.kind {
            FieldKind::Binary => a,
            FieldKind::Prime if a.0 == 0 => a,
            FieldKind::Prime => Elem((self.order - a.0 as u32) as u16),
        }
    }

    #[inline]
    pub fn sub(&self, a: Elem, b: Elem) -> Elem {
        self.add(a, self.neg(b))
    }

    #[inline]
    pub fn mul(&self, a: Elem, b: Elem) -> Elem {
        if a.0 == 0 || b.0 == 0 {
            return Elem::ZERO;
        }
        let t = &self.tables;
        Elem(t.exp[(t.log[a.0 as usize] + t.log[b.0 as usize]) as usize])
    }

    /// Multiplicative inverse; `None` for zero.
    pub fn inv(&self, a: Elem) -> Option<Elem> {
        if a.0 == 0 {
            return None;
        }
        let t = &self.tables;
        let cycle = self.order - 1;
        Some(Elem(t.exp[((cycle - t.log[a.0 as usize]) % cycle) as usize]))
    }

    pub fn div(&self, a: Elem, b: Elem) -> Option<Elem> {
        self.inv(b).map(|ib| self.mul(a, ib))
    }

    /// `a^t` by square-and-multiply, with `0^0 = 1`.
    pub fn pow(&self, a: Elem, mut t: u64) -> Elem {
        let mut base = a;
        let mut acc = Elem::ONE;
        while t > 0 {
            if t & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            t >>= 1;
        }
        acc
    }

    /// `acc + a * b`.
    #[inline]
    pub fn mul_add(&self, acc: Elem, a: Elem, b: Elem) -> Elem {
        self.add(acc, self.mul(a, b))
    }

    /// The first `count` elements in ascending value order.
    pub fn enumerate_elements(&self, count: usize) -> Result<Vec<Elem>> {
        if count as u64 > self.order as u64 {
            return Err(Error::ElementCount { requested: count, order: self.order });
        }
        Ok((0..count).map(|v| Elem(v as u16)).collect())
    }

    pub fn elements(&self) -> impl Iterator<Item = Elem> {
        (0..self.order).map(|v| Elem(v as u16))
    }
}

pub fn is_prime(n: u32) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

fn prime_factors(mut n: u32) -> Vec<u32> {
    let mut out = Vec::new();
    let mut d = 2;
    while d * d <= n {
        if n % d == 0 {
            out.push(d);
            while n % d == 0 {
                n /= d;
            }
        }
        d += 1;
    }
    if n > 1 {
        out.push(n);
    }
    out
}

/// Carry-less product of two field elements reduced by `poly` of degree `w`.
fn clmul_mod(mut a: u32, mut b: u32, poly: u32, w: u16) -> u32 {
    let top = 1u32 << w;
    let mut acc = 0;
    while b != 0 {
        if b & 1 == 1 {
            acc ^= a;
        }
        b >>= 1;
        a <<= 1;
        if a & top != 0 {
            a ^= poly;
        }
    }
    acc
}

fn build_tables(spec: FieldSpec) -> Result<Tables> {
    let order = spec.order();
    let cycle = order - 1;
    let mul: Box<dyn Fn(u32, u32) -> u32> = match spec.kind {
        FieldKind::Prime => Box::new(move |a, b| ((a as u64 * b as u64) % order as u64) as u32),
        FieldKind::Binary => {
            let w = spec.modulus;
            let poly = BINARY_POLYNOMIALS[w as usize - 1];
            Box::new(move |a, b| clmul_mod(a, b, poly, w))
        }
    };
    let generator = if cycle == 1 {
        1
    } else {
        let factors = prime_factors(cycle);
        let pow = |mut g: u32, mut e: u32| {
            let mut acc = 1;
            while e > 0 {
                if e & 1 == 1 {
                    acc = mul(acc, g);
                }
                g = mul(g, g);
                e >>= 1;
            }
            acc
        };
        (2..order)
            .find(|&g| factors.iter().all(|&q| pow(g, cycle / q) != 1) && pow(g, cycle) == 1)
            .ok_or_else(|| Error::Format(format!("no generator for {spec}")))?
    };
    let mut exp = vec![0u16; 2 * cycle as usize];
    let mut log = vec![0u32; order as usize];
    let mut x = 1u32;
    for i in 0..cycle {
        exp[i as usize] = x as u16;
        exp[(i + cycle) as usize] = x as u16;
        log[x as usize] = i;
        x = mul(x, generator);
    }
    if x != 1 {
        return Err(Error::Format(format!("generator cycle broken for {spec}")));
    }
    Ok(Tables { exp, log })
}
