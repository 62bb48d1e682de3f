//! Kronecker (additive-recurrence) low-discrepancy sequences with a random
//! shift: point `k` has coordinates `frac(shift_d + k * alpha_d)` with
//! `alpha_d` the fractional part of the square root of the `d`-th prime.

use rand::Rng;

fn primes(count: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(count);
    let mut c = 2u64;
    while out.len() < count {
        if out.iter().take_while(|&&p| p * p <= c).all(|&p| c % p != 0) {
            out.push(c);
        }
        c += 1;
    }
    out
}

pub struct Kronecker {
    alpha: Vec<f64>,
    shift: Vec<f64>,
    k: u64,
}

impl Kronecker {
    pub fn new<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        let alpha = primes(dim).into_iter().map(|p| (p as f64).sqrt().fract()).collect();
        let shift = (0..dim).map(|_| rng.random::<f64>()).collect();
        Self { alpha, shift, k: 0 }
    }

    /// Next point in `[0,1)^dim`.
    pub fn next_point(&mut self) -> Vec<f64> {
        self.k += 1;
        let k = self.k as f64;
        self.alpha
            .iter()
            .zip(&self.shift)
            .map(|(a, s)| (s + k * a).fract())
            .collect()
    }
}
