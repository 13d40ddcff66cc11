//! Linear XOR sketches over edge names.
//!
//! A [`HashFn`] maps an edge name to `[0, 2^l)`. A node's
//! [`ParityVector`] has bit `i` equal to the parity of its relevant incident
//! edges hashing below `2^i`; XOR over a node set cancels internal edges and
//! leaves the parity of the cut.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{EdgeName, Graph, Scale};

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod(mut a: u64, mut e: u64, m: u64) -> u64 {
    let mut r = 1 % m;
    a %= m;
    while e > 0 {
        if e & 1 == 1 {
            r = mul_mod(r, a, m);
        }
        a = mul_mod(a, a, m);
        e >>= 1;
    }
    r
}

/// Deterministic Miller-Rabin for all `u64`.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    const BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    for p in BASES {
        if n.is_multiple_of(p) {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d.is_multiple_of(2) {
        d /= 2;
        s += 1;
    }
    'witness: for a in BASES {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Smallest prime strictly above `2^bits`.
pub fn prime_above_pow2(bits: u32) -> u64 {
    let mut p = (1u64 << bits) + 1;
    while !is_prime(p) {
        p += 1;
    }
    p
}

/// `h(x) = ((a·x + b) mod p) mod 2^l` with `p` prime above the name domain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashFn {
    pub a: u64,
    pub b: u64,
    pub p: u64,
    pub l: u32,
}

impl HashFn {
    pub fn eval(&self, x: u64) -> u64 {
        let v = ((self.a as u128 * x as u128 + self.b as u128) % self.p as u128) as u64;
        v & ((1u64 << self.l) - 1)
    }

    /// Field modulus used for names at this scale.
    pub fn modulus(scale: Scale) -> u64 {
        prime_above_pow2(2 * scale.id_bits())
    }

    pub fn sample<R: Rng>(rng: &mut R, scale: Scale) -> Self {
        let p = Self::modulus(scale);
        Self::sample_mod(rng, p, scale.sketch_bits())
    }

    pub fn sample_mod<R: Rng>(rng: &mut R, p: u64, l: u32) -> Self {
        HashFn { a: rng.gen_range(1..p), b: rng.gen_range(0..p), p, l }
    }
}

pub fn hash_family_sample(seed: u64, count: usize, scale: Scale) -> Vec<HashFn> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = HashFn::modulus(scale);
    (0..count).map(|_| HashFn::sample_mod(&mut rng, p, scale.sketch_bits())).collect()
}

/// `l + 1` parity bits packed into the low bits of a word.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParityVector(pub u64);

impl ParityVector {
    /// Contribution of one hashed value: it lies below `2^i` exactly for
    /// `i ≥ bitlen(h)`.
    pub fn of_hash(h: u64, l: u32) -> Self {
        let full = if l >= 63 { u64::MAX } else { (1u64 << (l + 1)) - 1 };
        let start = 64 - h.leading_zeros();
        let low = if start >= 64 { u64::MAX } else { (1u64 << start) - 1 };
        ParityVector(full & !low)
    }

    pub fn from_hashes<I: IntoIterator<Item = u64>>(hashes: I, l: u32) -> Self {
        hashes.into_iter().fold(ParityVector(0), |acc, h| acc ^ Self::of_hash(h, l))
    }

    pub fn bit(&self, i: u32) -> bool {
        (self.0 >> i) & 1 == 1
    }

    pub fn is_zero(&self) -> bool {
        self.0 == 0
    }

    /// Smallest index with a set bit.
    pub fn min_index(&self) -> Option<u32> {
        (self.0 != 0).then(|| self.0.trailing_zeros())
    }
}

impl std::ops::BitXor for ParityVector {
    type Output = Self;
    fn bitxor(self, rhs: Self) -> Self {
        ParityVector(self.0 ^ rhs.0)
    }
}

impl std::ops::BitXorAssign for ParityVector {
    fn bitxor_assign(&mut self, rhs: Self) {
        self.0 ^= rhs.0;
    }
}

pub fn node_vector<F: Fn(EdgeName) -> bool>(h: &HashFn, incident: &[EdgeName], filter: F) -> ParityVector {
    ParityVector::from_hashes(incident.iter().filter(|e| filter(**e)).map(|e| h.eval(e.0)), h.l)
}

/// XOR of the names hashing below `2^i`.
pub fn name_xor<F: Fn(EdgeName) -> bool>(h: &HashFn, incident: &[EdgeName], i: u32, filter: F) -> u64 {
    incident
        .iter()
        .filter(|e| filter(**e) && in_range(h, **e, i))
        .fold(0, |acc, e| acc ^ e.0)
}

pub fn in_range(h: &HashFn, e: EdgeName, i: u32) -> bool {
    i >= 64 || h.eval(e.0) < (1u64 << i)
}

/// Interprets an aggregated XOR as a candidate edge. Returns `None` for a
/// zero accumulator or a value that names no edge of `g`; the caller still
/// has to confirm the edge crosses the cut.
pub fn recover_single(xored: u64, g: &Graph) -> Option<EdgeName> {
    if xored == 0 {
        return None;
    }
    g.edge_by_name(EdgeName(xored)).map(|e| e.name)
}

/// Threshold used to pick the estimate index: `(3/4)·c·log n / 16`.
pub fn approx_threshold(c_log_n: u32) -> f64 {
    0.75 * c_log_n as f64 / 16.0
}

/// Cut-size estimate from `c·log n` aggregated vectors: the smallest `i`
/// with `X_i ≥ threshold` gives `2^(l − i) / 64`; no such index gives 0.
pub fn approx_cut_estimate(vectors: &[ParityVector], l: u32, c_log_n: u32) -> u64 {
    let thr = approx_threshold(c_log_n);
    (0..=l)
        .find(|&i| vectors.iter().filter(|v| v.bit(i)).count() as f64 >= thr)
        .map_or(0, |min| (1u64 << (l - min)) / 64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{edge_name, generate, Family, NodeId};

    #[test]
    fn primes() {
        assert_eq!(prime_above_pow2(4), 17);
        assert_eq!(prime_above_pow2(6), 67);
        assert_eq!(prime_above_pow2(32), 4294967311);
        assert!(is_prime((1u64 << 61) - 1));
        assert!(!is_prime(561));
        let brute = |n: u64| n >= 2 && (2..n).take_while(|d| d * d <= n).all(|d| !n.is_multiple_of(d));
        for n in 0..5000 {
            assert_eq!(is_prime(n), brute(n), "{n}");
        }
    }

    #[test]
    fn family_count_and_reproducibility() {
        let s = Scale::new(256, 2);
        let a = hash_family_sample(5, s.c_log_n() as usize, s);
        assert_eq!(a.len(), 16);
        assert_eq!(a, hash_family_sample(5, 16, s));
        assert!(a.iter().all(|h| h.a != 0 && h.a < h.p && h.b < h.p));
        assert!(a.iter().all(|h| h.p > 1 << 32));
    }

    #[test]
    fn hand_computed_vector() {
        let v = ParityVector::from_hashes([1, 3], 3);
        let bits: Vec<bool> = (0..=3).map(|i| v.bit(i)).collect();
        assert_eq!(bits, vec![false, true, false, false]);
        assert!(ParityVector::from_hashes([], 5).is_zero());
        assert_eq!(ParityVector::of_hash(0, 3).0, 0b1111);
        assert_eq!(ParityVector::of_hash(7, 3).0, 0b1000);
    }

    #[test]
    fn xor_is_involution() {
        let s = Scale::new(64, 2);
        let h = hash_family_sample(1, 1, s)[0];
        let names: Vec<EdgeName> = (1..40).map(|k| EdgeName(k * 7919)).collect();
        let v = node_vector(&h, &names, |_| true);
        assert!((v ^ v).is_zero());
    }

    #[test]
    fn approx_formula() {
        // only index 10 and above reach the threshold
        let vs = vec![ParityVector(!0u64 << 10); 16];
        assert_eq!(approx_cut_estimate(&vs, 20, 16), 16);
        assert_eq!(approx_cut_estimate(&[ParityVector(0); 16], 20, 16), 0);
    }

    fn incident_names(g: &Graph, x: usize) -> Vec<EdgeName> {
        g.neighbors(x).iter().map(|a| g.edge(a.edge).name).collect()
    }

    #[test]
    fn linearity_on_random_partitions() {
        let g = generate(&Family::Gnp { p: 0.3 }, 40, 2, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let h = HashFn::sample(&mut rng, g.scale());
            let side: Vec<bool> = (0..g.n()).map(|_| rng.gen_bool(0.5)).collect();
            let sum = |pick: bool| {
                (0..g.n())
                    .filter(|&x| side[x] == pick)
                    .fold(ParityVector(0), |acc, x| acc ^ node_vector(&h, &incident_names(&g, x), |_| true))
            };
            let all = (0..g.n()).fold(ParityVector(0), |acc, x| acc ^ node_vector(&h, &incident_names(&g, x), |_| true));
            assert_eq!(sum(true) ^ sum(false), all);
            // every edge is counted twice over the whole node set
            assert!(all.is_zero());
        }
    }

    #[test]
    fn cut_identity_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for seed in 0..6 {
            let g = generate(&Family::Gnp { p: 0.4 }, 12 + 4 * seed as usize, 2, seed).unwrap();
            for _ in 0..20 {
                let h = HashFn::sample(&mut rng, g.scale());
                let inside: Vec<bool> = (0..g.n()).map(|_| rng.gen_bool(0.5)).collect();
                let agg = (0..g.n())
                    .filter(|&x| inside[x])
                    .fold(ParityVector(0), |acc, x| acc ^ node_vector(&h, &incident_names(&g, x), |_| true));
                let cut: Vec<u64> = g
                    .edges()
                    .iter()
                    .filter(|e| inside[e.u] != inside[e.v])
                    .map(|e| h.eval(e.name.0))
                    .collect();
                for i in 0..=h.l {
                    let below = cut.iter().filter(|&&v| v < (1u64 << i)).count();
                    assert_eq!(agg.bit(i), below % 2 == 1);
                }
            }
        }
    }

    /// Names of a star cut: centre id 1, leaves 2..=k+1.
    fn star_cut(k: usize, scale: Scale) -> Vec<EdgeName> {
        (2..=k as u64 + 1)
            .map(|v| edge_name(NodeId(1), NodeId(v), scale.id_bits()).unwrap())
            .collect()
    }

    #[test]
    fn single_edge_probability_at_expected_index() {
        let scale = Scale::new(1024, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for k in [1usize, 7, 100, 1000] {
            let cut = star_cut(k, scale);
            let l = scale.sketch_bits();
            let i = l - crate::graph::ceil_log2(k as u64) - 2;
            let trials = 4000;
            let hits = (0..trials)
                .filter(|_| {
                    let h = HashFn::sample(&mut rng, scale);
                    cut.iter().filter(|e| in_range(&h, **e, i)).count() == 1
                })
                .count();
            let p = 1.0 / 16.0;
            let margin = 3.0 * (p * (1.0 - p) / trials as f64).sqrt();
            assert!(hits as f64 / trials as f64 >= p - margin, "k={k}: {hits}/{trials}");
        }
    }

    fn collision_rate(p: u64, l: u32, domain: u64, trials: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut coll = 0;
        for _ in 0..trials {
            let h = HashFn::sample_mod(&mut rng, p, l);
            let x = rng.gen_range(1..domain);
            let mut y = rng.gen_range(1..domain);
            while y == x {
                y = rng.gen_range(1..domain);
            }
            coll += (h.eval(x) == h.eval(y)) as usize;
        }
        coll as f64 / trials as f64
    }

    #[test]
    fn collision_rate_matches_codomain() {
        let trials = 10_000;
        // protocol widths: names and outputs are both about 2b bits wide
        let s = Scale::new(256, 2);
        let l = s.sketch_bits();
        let rate = collision_rate(HashFn::modulus(s), l, 1 << (2 * s.id_bits()), trials, 3);
        let p = (-(l as f64)).exp2();
        assert!((rate - p).abs() <= 3.0 * (p * (1.0 - p) / trials as f64).sqrt() + 1e-12);
        // a narrow codomain, where collisions are frequent enough to measure
        let l = 6;
        let rate = collision_rate(prime_above_pow2(20), l, 1 << 20, trials, 4);
        let p = (-(l as f64)).exp2();
        let sigma = (p * (1.0 - p) / trials as f64).sqrt();
        assert!((rate - p).abs() <= 3.0 * sigma, "rate {rate} vs {p}");
    }

    #[test]
    fn recovery_single_zero_and_pairs() {
        let g = generate(&Family::Complete, 10, 2, 4).unwrap();
        let e = g.edge(3).name;
        assert_eq!(recover_single(e.0, &g), Some(e));
        assert_eq!(recover_single(0, &g), None);
        // a cut of 9 edges around node 0: XOR of any two names is never a
        // genuine cut edge of that cut
        let cut: Vec<EdgeName> = incident_names(&g, 0);
        let mut false_accepts = 0;
        for i in 0..cut.len() {
            for j in i + 1..cut.len() {
                let x = cut[i].0 ^ cut[j].0;
                if cut.contains(&EdgeName(x)) {
                    false_accepts += 1;
                }
            }
        }
        assert_eq!(false_accepts, 0);
    }
}
