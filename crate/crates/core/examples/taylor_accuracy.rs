//! Accuracy of the second-order approximation to E[log(1 + e^X)],
//! X ~ N(U, V), against Monte Carlo with 10⁶ draws.

use magic_core::flr::softplus;
use magic_core::model::{taylor_label_term, TaylorMoments};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn main() {
    let draws = 1_000_000;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    println!("{:>4} {:>6} {:>12} {:>12} {:>10} {:>10}", "U", "V", "taylor", "monte-carlo", "|error|", "mcse");
    for u in -3..=3 {
        for v in [0.01f64, 0.04, 0.16, 0.64] {
            let u = f64::from(u);
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..draws {
                let e: f64 = rng.sample(StandardNormal);
                let x = softplus(u + v.sqrt() * e);
                s += x;
                s2 += x * x;
            }
            let mc = s / draws as f64;
            let mcse = ((s2 / draws as f64 - mc * mc) / draws as f64).sqrt();
            let t = taylor_label_term(TaylorMoments { u, v });
            println!("{u:>4} {v:>6} {t:>12.6} {mc:>12.6} {:>10.2e} {mcse:>10.1e}", (t - mc).abs());
        }
    }
}
