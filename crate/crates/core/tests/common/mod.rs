//! Reference implementations used by the integration tests. Nothing here
//! calls into the library's arithmetic.
#![allow(dead_code)]

use std::path::PathBuf;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data")
}

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join("fixtures")
        .join(name)
}

fn big(v: u64) -> BigRational {
    BigRational::from_integer(BigInt::from(v))
}

/// The two-proportion statistic evaluated literally:
/// `p_o = n_o / n`, `p = (n_o + n p_e) / 2n`, `z = (p_o - p_e) / sqrt(p (1 - p) 2 / n)`.
///
/// `z^2` is formed exactly; the square root is an integer root of
/// `z^2 * 10^80`, so the result carries about 40 correct digits before the
/// final conversion.
pub fn oracle_z(n: u64, observed: u64, share_num: u64, share_den: u64) -> f64 {
    let n_r = big(n);
    let p_e = BigRational::new(BigInt::from(share_num), BigInt::from(share_den));
    let p_o = big(observed) / n_r.clone();
    let n_e = n_r.clone() * p_e.clone();
    let pooled = (big(observed) + n_e) / (n_r.clone() * big(2));
    let variance = pooled.clone() * (BigRational::one() - pooled) * big(2) / n_r;
    let diff = p_o - p_e;
    if diff.is_zero() {
        return 0.0;
    }
    let z2 = diff.clone() * diff.clone() / variance;
    let scale = BigUint::from(10u32).pow(80);
    let scaled = (z2.numer().magnitude() * &scale) / z2.denom().magnitude();
    let root = scaled.sqrt();
    let z = BigRational::new(
        BigInt::from(root),
        BigInt::from(BigUint::from(10u32).pow(40)),
    );
    let z = z.to_f64().expect("finite");
    if diff.is_negative() {
        -z
    } else {
        z
    }
}

pub fn binomial_coefficient(n: u64, k: u64) -> BigUint {
    let mut acc = BigUint::one();
    for i in 0..k {
        acc = acc * BigUint::from(n - i) / BigUint::from(i + 1);
    }
    acc
}

/// Exact probability mass of `Binomial(n, num/den)` at `k`.
pub fn binomial_pmf(n: u64, k: u64, num: u64, den: u64) -> BigRational {
    let c = binomial_coefficient(n, k);
    let hit = BigUint::from(num).pow(k as u32);
    let miss = BigUint::from(den - num).pow((n - k) as u32);
    let total = BigUint::from(den).pow(n as u32);
    BigRational::new(BigInt::from(c * hit * miss), BigInt::from(total))
}

/// Brute-force top set: sort descending, take rank `ceil(p N)`, include every
/// record whose count reaches that rank's value.
pub fn brute_force_top(citations: &[u64], share_num: u64, share_den: u64) -> (u64, Vec<usize>) {
    let n = citations.len() as u64;
    let k = (share_num * n).div_ceil(share_den).clamp(1, n) as usize;
    let mut sorted = citations.to_vec();
    sorted.sort();
    sorted.reverse();
    let cutoff = sorted[k - 1];
    let top = (0..citations.len())
        .filter(|&i| citations[i] >= cutoff)
        .collect();
    (cutoff, top)
}

/// Builds a field-tagged export text from `(ut, times_cited, addresses)`.
pub fn export_text(records: &[(String, u64, Vec<String>)]) -> String {
    let mut out = String::from("FN Synthetic Export\nVR 1.0\n");
    for (ut, tc, addresses) in records {
        out.push_str("PT J\nAU Author, A\nDT Article\n");
        for (i, a) in addresses.iter().enumerate() {
            out.push_str(if i == 0 { "C1 " } else { "   " });
            out.push_str(a);
            out.push('\n');
        }
        out.push_str(&format!("TC {tc}\nPY 2008\nUT {ut}\nER\n\n"));
    }
    out.push_str("EF\n");
    out
}

pub fn count_er(text: &[u8]) -> usize {
    text.split(|&b| b == b'\n')
        .filter(|l| l.strip_suffix(b"\r").unwrap_or(l) == b"ER")
        .count()
}
