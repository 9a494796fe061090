use pro_transfer::dynamics::CwParams;
use pro_transfer::scenario::sample_random;
use pro_transfer::scp::{solve, ScpConfig};

fn main() {
    let params = CwParams::leo_for_steps(11);
    let n: usize = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(15);
    let inst = sample_random(5, n, 11, 15.0, &params).unwrap();
    let t0 = std::time::Instant::now();
    let res = solve(&inst, &ScpConfig::default(), None).unwrap();
    println!(
        "n={n}: {:.2}s, converged={}, iters={}, fuel={:.4}, collisions={}",
        t0.elapsed().as_secs_f64(),
        res.converged,
        res.iterations,
        res.fuel,
        res.collisions
    );
}
