//! Deterministic point sets: shifted Halton sequences in balls and direction sets on spheres.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PRIMES: [u32; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Radical inverse of `index` in `base`.
pub fn radical_inverse(mut index: u64, base: u32) -> f64 {
    let b = base as u64;
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while index > 0 {
        r += (index % b) as f64 * f;
        index /= b;
        f *= inv;
    }
    r
}

/// Halton sequence in [0,1)^d with a Cranley–Patterson rotation drawn from `seed`.
pub struct Halton {
    dim: usize,
    shift: Vec<f64>,
    index: u64,
}

impl Halton {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim <= PRIMES.len(), "Halton sampling supports up to {} dimensions", PRIMES.len());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shift = (0..dim).map(|_| rng.random::<f64>()).collect();
        Halton { dim, shift, index: 1 }
    }

    pub fn next_point(&mut self) -> Vec<f64> {
        let i = self.index;
        self.index += 1;
        (0..self.dim)
            .map(|k| {
                let v = radical_inverse(i, PRIMES[k]) + self.shift[k];
                v - v.floor()
            })
            .collect()
    }
}

/// `n` low-discrepancy points in the closed ball of radius `radius` (rejection from the cube).
pub fn ball_points(dim: usize, radius: f64, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut h = Halton::new(dim, seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let p: Vec<f64> = h.next_point().iter().map(|u| 2.0 * u - 1.0).collect();
        if norm(&p) <= 1.0 {
            out.push(p.iter().map(|v| v * radius).collect());
        }
    }
    out
}

/// Roughly uniform unit directions: the circle in 2-d, a Fibonacci lattice in 3-d,
/// normalised Halton points beyond.
pub fn sphere_directions(dim: usize, n: usize) -> Vec<Vec<f64>> {
    match dim {
        0 => Vec::new(),
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..n)
            .map(|k| {
                let a = std::f64::consts::TAU * (k as f64 + 0.5) / n as f64;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        3 => {
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..n)
                .map(|k| {
                    let z = 1.0 - 2.0 * (k as f64 + 0.5) / n as f64;
                    let r = (1.0 - z * z).max(0.0).sqrt();
                    let phi = golden * k as f64;
                    vec![r * phi.cos(), r * phi.sin(), z]
                })
                .collect()
        }
        _ => {
            let mut h = Halton::new(dim, 0);
            let mut out = Vec::with_capacity(n);
            while out.len() < n {
                let p: Vec<f64> = h.next_point().iter().map(|u| 2.0 * u - 1.0).collect();
                let r = norm(&p);
                if r > 0.1 && r <= 1.0 {
                    out.push(p.iter().map(|v| v / r).collect());
                }
            }
            out
        }
    }
}

/// Typical spacing between neighbouring directions of an `n`-point sphere set.
pub fn direction_spacing(dim: usize, n: usize) -> f64 {
    match dim {
        0 | 1 => 2.0,
        2 => std::f64::consts::TAU / n as f64,
        3 => (4.0 * std::f64::consts::PI / n as f64).sqrt(),
        d => (surface_area(d) / n as f64).powf(1.0 / (d as f64 - 1.0)),
    }
}

fn surface_area(d: usize) -> f64 {
    // |S^{d-1}| = 2 π^{d/2} / Γ(d/2), via the recursion |S^{d+1}| = 2π/d |S^{d-1}|
    let mut a = if d.is_multiple_of(2) { std::f64::consts::TAU } else { 4.0 * std::f64::consts::PI };
    let mut k = if d.is_multiple_of(2) { 2 } else { 3 };
    while k < d {
        a *= std::f64::consts::TAU / k as f64;
        k += 2;
    }
    a
}

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radical_inverse_base_two() {
        assert_eq!(radical_inverse(1, 2), 0.5);
        assert_eq!(radical_inverse(3, 2), 0.75);
        assert_eq!(radical_inverse(4, 2), 0.125);
    }

    #[test]
    fn ball_points_are_deterministic_and_inside() {
        let a = ball_points(3, 2.0, 500, 9);
        let b = ball_points(3, 2.0, 500, 9);
        assert_eq!(a, b);
        assert!(a.iter().all(|p| norm(p) <= 2.0));
        assert_ne!(a, ball_points(3, 2.0, 500, 10));
    }

    #[test]
    fn directions_are_unit() {
        for d in 1..=5 {
            for p in sphere_directions(d, 200) {
                assert!((norm(&p) - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn surface_areas() {
        assert!((surface_area(3) - 4.0 * std::f64::consts::PI).abs() < 1e-12);
        assert!((surface_area(4) - 2.0 * std::f64::consts::PI.powi(2)).abs() < 1e-12);
    }
}
