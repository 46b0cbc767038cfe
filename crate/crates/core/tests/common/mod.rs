//! Reference computations shared by the oracle and acceptance targets.
#![allow(dead_code)]

use ara_core::network::{EdgeId, NodeId};
use ara_core::niw::{Coord, NiwParams};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

/// Composite Simpson rule over `[a, b]` with `n` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// Integral over the real line through `x = loc + scale * tan(theta)`.
pub fn integrate_line(f: impl Fn(f64) -> f64, loc: f64, scale: f64) -> f64 {
    let half = std::f64::consts::FRAC_PI_2 - 1e-12;
    simpson(
        |t| {
            let c = t.cos();
            f(loc + scale * t.tan()) * scale / (c * c)
        },
        -half,
        half,
        200_000,
    )
}

/// Payoff then cost for neighbours 1..=3, reached over edges 0..=2.
pub fn three_neighbour_coords() -> Vec<Coord> {
    (0..3).flat_map(|i| [Coord::Payoff(NodeId(i + 1)), Coord::Cost(EdgeId(i))]).collect()
}

pub fn three_neighbour_prior(mu: &[f64], nu: f64) -> NiwParams {
    let a = DMatrix::from_row_slice(
        6,
        6,
        &[
            1.0, 0.3, 0.0, 0.2, -0.1, 0.0, //
            0.0, 0.8, 0.1, 0.0, 0.0, 0.2, //
            0.4, 0.0, 1.2, 0.3, 0.0, 0.0, //
            0.0, 0.1, 0.0, 0.6, 0.2, 0.0, //
            0.3, 0.0, 0.2, 0.0, 1.1, 0.1, //
            0.0, 0.0, 0.0, 0.1, 0.0, 0.7,
        ],
    );
    let psi = (&a * a.transpose() + DMatrix::identity(6, 6) * 0.5) * (nu - 7.0);
    NiwParams::new(DVector::from_column_slice(mu), psi, nu, three_neighbour_coords()).unwrap()
}

/// Counts order events on `n` direct draws from the mixture.
pub fn brute_force_q(components: &[(f64, NiwParams)], delta: f64, n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prepared: Vec<(f64, DVector<f64>, DMatrix<f64>, f64)> = components
        .iter()
        .map(|(w, p)| {
            let dof = p.nu() - p.dim() as f64 + 1.0;
            let shape = p.psi() / dof;
            (*w, p.mu().clone(), shape.cholesky().unwrap().l(), dof)
        })
        .collect();
    let mut q1 = vec![0.0; 3];
    let mut q2 = vec![0.0; 3];
    for _ in 0..n {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = &prepared[prepared.len() - 1];
        for c in &prepared {
            acc += c.0;
            if u < acc {
                pick = c;
                break;
            }
        }
        let (_, mu, l, dof) = pick;
        let z = DVector::from_fn(6, |_, _| StandardNormal.sample(&mut rng));
        let w: f64 = ChiSquared::new(*dof).unwrap().sample(&mut rng);
        let x = mu + (l * z) * (dof / w).sqrt();
        let payoff: Vec<f64> = (0..3).map(|i| x[2 * i]).collect();
        let net: Vec<f64> = (0..3).map(|i| x[2 * i] - x[2 * i + 1]).collect();
        let best = (0..3).fold(0, |b, i| if net[i] > net[b] { i } else { b });
        q1[best] += 1.0;
        let mut after = net.clone();
        after[best] -= delta * payoff[best];
        let promoted = (0..3).fold(0, |b, i| if after[i] > after[b] { i } else { b });
        q2[promoted] += 1.0;
    }
    (q1.iter().map(|c| c / n as f64).collect(), q2.iter().map(|c| c / n as f64).collect())
}

