//! The smoothed end-to-end utility and the weight factor used by phase 2.

use relay_precoding::first_hop::{g_value, rate_matching_sinr, utility_u, weight_alpha};

fn main() {
    let t = 0.4;
    let xi2_bar = 15.0;
    let eta = rate_matching_sinr(xi2_bar, t);
    println!("t = {t}, second-hop SINR {xi2_bar}: first-hop SINR must reach eta = {eta:.3}");
    println!("{:>10} {:>12} {:>12} {:>10}", "xi1", "min rule", "utility_u", "alpha");
    for xi in [0.5, 2.0, eta / 2.0, eta, 2.0 * eta, 10.0 * eta, 1e6] {
        let exact = t * (xi.min(eta)).ln_1p() / std::f64::consts::LN_2;
        let det_e = 1.0 / (1.0 + xi);
        println!(
            "{xi:>10.3} {exact:>12.5} {:>12.5} {:>10.5}",
            utility_u(xi, t, eta),
            weight_alpha(det_e, eta)
        );
    }
    let cap = (std::f64::consts::E - 1.0) * t / std::f64::consts::LN_2;
    println!("excess over the min rule is bounded by (e-1) t / ln 2 = {cap:.5}");

    // g is the same utility written in terms of det E.
    let det_e = 0.05;
    println!(
        "g(det E = {det_e}) = {:.6}, -(ln 2 / t) u = {:.6}",
        g_value(det_e, eta).unwrap(),
        -std::f64::consts::LN_2 / t * utility_u(1.0 / det_e - 1.0, t, eta)
    );
}
