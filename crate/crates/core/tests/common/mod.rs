use num_bigint::BigInt;
use num_traits::{ToPrimitive, Zero};

/// `x = m 2^e` exactly.
fn decompose(x: f64) -> (BigInt, i32) {
    if x == 0.0 {
        return (BigInt::zero(), 0);
    }
    let bits = x.to_bits();
    let sign = if bits >> 63 == 1 { -1 } else { 1 };
    let exp = ((bits >> 52) & 0x7ff) as i32;
    let frac = bits & ((1u64 << 52) - 1);
    let (m, e) = if exp == 0 { (frac, -1074) } else { (frac | (1u64 << 52), exp - 1075) };
    (BigInt::from(sign) * BigInt::from(m), e)
}

/// Determinant of `c Id + a u^T` by fraction-free elimination in exact integer
/// arithmetic on the exact binary values of the inputs, rounded once to `f64`.
pub fn exact_dense_det(c: f64, a: &[f64], u: &[f64]) -> f64 {
    let d = a.len();
    let (cm, ce) = decompose(c);
    let (ad, ud): (Vec<_>, Vec<_>) = (a.iter().map(|x| decompose(*x)).collect(), u.iter().map(|x| decompose(*x)).collect());
    let mut k = ce;
    for (_, ea) in &ad {
        for (_, eu) in &ud {
            k = k.min(ea + eu);
        }
    }
    let mut m: Vec<Vec<BigInt>> = (0..d)
        .map(|i| {
            (0..d)
                .map(|j| {
                    let (ref ma, ea) = ad[i];
                    let (ref mu, eu) = ud[j];
                    let mut v = (ma * mu) << (ea + eu - k) as usize;
                    if i == j {
                        v += &cm << (ce - k) as usize;
                    }
                    v
                })
                .collect()
        })
        .collect();
    let mut sign = 1;
    let mut prev = BigInt::from(1);
    for p in 0..d {
        if m[p][p].is_zero() {
            match (p + 1..d).find(|&r| !m[r][p].is_zero()) {
                Some(r) => {
                    m.swap(p, r);
                    sign = -sign;
                }
                None => return 0.0,
            }
        }
        for i in p + 1..d {
            for j in p + 1..d {
                m[i][j] = (&m[i][j] * &m[p][p] - &m[i][p] * &m[p][j]) / &prev;
            }
        }
        prev = m[p][p].clone();
    }
    let det: BigInt = &m[d - 1][d - 1] * BigInt::from(sign);
    // split the power of two so neither factor leaves the f64 range
    let total = d as i32 * k;
    let bits = det.bits() as i32;
    let shift = (bits - 60).max(0);
    let top = (&det >> shift as usize).to_f64().unwrap();
    top * 2f64.powi(shift + total)
}
