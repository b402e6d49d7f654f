//! Adaptive low-rank Chebyshev approximation of trivariate functions.

use lrmp::funclowrank::approx3;

fn main() -> lrmp::Result<()> {
    let cases: [(&str, fn([f64; 3]) -> f64); 4] = [
        ("x y z", |x| x[0] * x[1] * x[2]),
        ("exp(x + 2y - z)", |x| (x[0] + 2.0 * x[1] - x[2]).exp()),
        ("1 / (1 + x + y + z)", |x| 1.0 / (1.0 + x[0] + x[1] + x[2])),
        ("sin(4πx) sin(4πy) sin(4πz)", |x| {
            let w = 4.0 * std::f64::consts::PI;
            (w * x[0]).sin() * (w * x[1]).sin() * (w * x[2]).sin()
        }),
    ];
    for (name, f) in cases {
        let g = approx3(f, 1e-10)?;
        let mut err = 0.0f64;
        for i in 0..=10 {
            for j in 0..=10 {
                for k in 0..=10 {
                    let x = [i as f64 / 10.0, j as f64 / 10.0, k as f64 / 10.0];
                    err = err.max((g.eval(x) - f(x)).abs());
                }
            }
        }
        println!("{name:28} ranks {:?}, max error on 11³ grid {err:.1e}", g.ranks());
    }
    Ok(())
}
