//! Simulated M/M/c waiting time next to the Erlang C formula, and the
//! low class under preemptive high-priority traffic.

use edgenap::config::ServiceTimeLaw;
use edgenap::queueing::station::{simulate_station, StationParams};

fn erlang_c_wait(c: usize, lambda: f64, mu: f64) -> f64 {
    let a = lambda / mu;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..c {
        term *= a / k as f64;
        sum += term;
    }
    let last = term * a / c as f64 / (1.0 - a / c as f64);
    last / (sum + last) / (c as f64 * mu - lambda)
}

fn main() {
    let params = |cores: usize, low_rate: f64, high_rate: f64| StationParams {
        cores,
        low_rate,
        low_mu: 1.0,
        low_law: ServiceTimeLaw::Exponential,
        high_rate,
        high_mu: 1.0,
        high_law: ServiceTimeLaw::Exponential,
        requests: 200_000,
        warmup: 5_000,
        seed: 1,
    };
    for c in [1, 2, 4] {
        for rho in [0.5, 0.8] {
            let lambda = rho * c as f64;
            let st = simulate_station(&params(c, lambda, 0.0));
            println!("M/M/{c} rho {rho}: wait {:.4} simulated, {:.4} Erlang C", st.low.mean_wait, erlang_c_wait(c, lambda, 1.0));
        }
    }
    let st = simulate_station(&params(2, 0.8, 0.6));
    println!(
        "2 cores, low 0.8 + high 0.6: low sojourn {:.3}, high sojourn {:.3}, {} preemptions",
        st.low.mean_sojourn, st.high.mean_sojourn, st.preemptions
    );
}
