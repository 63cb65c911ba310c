mod common;

use common::{direct_intensity, direct_loglik, rel_close, rng, uniform_times};
use genrehawkes::baselines::{drift_gradient, drift_log_likelihood, fit_poisson, poisson_log_likelihood};
use genrehawkes::hawkes::{
    compensator, fit_mle, intensity_at, log_likelihood, log_likelihood_gradient, log_likelihood_window,
    rescaled_residuals,
};
use genrehawkes::simulate::{simulate_hawkes, SimConfig};
use genrehawkes::HawkesParams;
use proptest::prelude::*;
use rand::Rng;

fn random_params(r: &mut impl Rng) -> HawkesParams {
    let omega = r.random_range(0.2..5.0);
    HawkesParams {
        mu: r.random_range(0.1..3.0),
        beta: omega * r.random_range(0.0..0.95),
        omega,
    }
}

/// A simulated or uniform stream with at most `max_n` events and its horizon.
fn random_stream(r: &mut impl Rng, p: &HawkesParams, seed: u64, max_n: usize) -> (Vec<f64>, f64) {
    if r.random_bool(0.5) {
        let n = r.random_range(1..=max_n);
        let horizon = r.random_range(1.0..200.0);
        (uniform_times(r, n, horizon), horizon)
    } else {
        let mut t = simulate_hawkes(p, &SimConfig::new(seed, 0.0, 150.0)).unwrap();
        t.truncate(max_n);
        let horizon = t.last().copied().unwrap_or(0.0) + r.random_range(0.0..5.0);
        (t, horizon)
    }
}

#[test]
fn recursion_matches_direct_sum() {
    let mut r = rng(11);
    for k in 0..200 {
        let p = random_params(&mut r);
        let (times, horizon) = random_stream(&mut r, &p, k, 500);
        let fast = log_likelihood(&p, &times, horizon).unwrap();
        let slow = direct_loglik(&p, &times, horizon);
        assert!(rel_close(fast, slow, 1e-8), "instance {k}: {fast} vs {slow}");
    }
}

#[test]
fn tied_times_follow_index_order() {
    let p = HawkesParams { mu: 0.4, beta: 0.9, omega: 1.7 };
    let times = [0.5, 0.5, 0.5, 1.0, 2.0, 2.0];
    let fast = log_likelihood(&p, &times, 3.0).unwrap();
    assert!(rel_close(fast, direct_loglik(&p, &times, 3.0), 1e-12));
}

fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|k| {
            let h = 1e-6 * x[k].abs().max(1e-3);
            let mut up = x.to_vec();
            let mut down = x.to_vec();
            up[k] += h;
            down[k] -= h;
            (f(&up) - f(&down)) / (2.0 * h)
        })
        .collect()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

#[test]
fn hawkes_gradient_matches_finite_differences() {
    let mut r = rng(12);
    for k in 0..50 {
        let p = random_params(&mut r);
        // keep β away from zero so the relative step stays meaningful
        let p = HawkesParams { beta: p.beta.max(0.01 * p.omega), ..p };
        let (times, horizon) = random_stream(&mut r, &p, 1000 + k, 300);
        let (_, g) = log_likelihood_gradient(&p, &times, horizon).unwrap();
        let fd = central_difference(
            |x| {
                let q = HawkesParams { mu: x[0], beta: x[1], omega: x[2] };
                log_likelihood(&q, &times, horizon).unwrap()
            },
            &[p.mu, p.beta, p.omega],
        );
        let err: Vec<f64> = g.iter().zip(&fd).map(|(a, b)| a - b).collect();
        assert!(
            max_abs(&err) <= 1e-5 * max_abs(&g),
            "point {k}: analytic {g:?} vs numeric {fd:?}"
        );
    }
}

#[test]
fn drift_gradient_matches_finite_differences() {
    let mut r = rng(13);
    for k in 0..50 {
        let horizon = r.random_range(5.0..100.0);
        let b = r.random_range(0.2..5.0);
        // end rate stays positive
        let end = r.random_range(0.2..5.0);
        let mu = (end - b) / horizon;
        let n = r.random_range(1..300);
        let times = uniform_times(&mut r, n, horizon);
        let (_, g) = drift_gradient(mu, b, &times, horizon).unwrap();
        let fd = central_difference(|x| drift_log_likelihood(x[0], x[1], &times, horizon).unwrap(), &[mu, b]);
        let err: Vec<f64> = g.iter().zip(&fd).map(|(a, b)| a - b).collect();
        assert!(max_abs(&err) <= 1e-5 * max_abs(&g), "point {k}: {g:?} vs {fd:?}");
    }
}

#[test]
fn poisson_is_the_beta_zero_slice() {
    let mut r = rng(14);
    for _ in 0..20 {
        let horizon = r.random_range(5.0..50.0);
        let n = r.random_range(5..200);
        let times = uniform_times(&mut r, n, horizon);
        let fit = fit_poisson(&times, horizon).unwrap();
        let mu_hat = n as f64 / horizon;
        let slice = |mu: f64| log_likelihood(&HawkesParams { mu, beta: 0.0, omega: 1.0 }, &times, horizon).unwrap();
        assert!(rel_close(slice(mu_hat), fit.log_likelihood, 1e-12));
        assert!(rel_close(poisson_log_likelihood(mu_hat, n, horizon), fit.log_likelihood, 1e-12));
        for scale in [0.5, 0.9, 0.99, 1.01, 1.1, 2.0] {
            assert!(slice(mu_hat * scale) <= fit.log_likelihood);
        }
    }
}

#[test]
fn loglik_splits_into_log_intensities_and_compensator() {
    let mut r = rng(15);
    for k in 0..30 {
        let p = random_params(&mut r);
        let (times, horizon) = random_stream(&mut r, &p, 2000 + k, 200);
        let log_sum: f64 = times
            .iter()
            .enumerate()
            .map(|(j, &t)| intensity_at(&p, &times[..j], t).unwrap().ln())
            .sum();
        let comp = compensator(&p, &times, horizon).unwrap();
        let ll = log_likelihood(&p, &times, horizon).unwrap();
        assert!(rel_close(ll, log_sum - comp, 1e-10), "{ll} vs {}", log_sum - comp);
    }
}

#[test]
fn residuals_telescope_to_compensator() {
    let p = HawkesParams { mu: 0.7, beta: 0.6, omega: 1.4 };
    let times = simulate_hawkes(&p, &SimConfig::new(3, 0.0, 100.0)).unwrap();
    let residuals = rescaled_residuals(&p, &times).unwrap();
    let total: f64 = residuals.iter().sum();
    let last = *times.last().unwrap();
    assert!(rel_close(total, compensator(&p, &times, last).unwrap(), 1e-10));
    assert!(residuals.iter().all(|&x| x >= 0.0));
}

#[test]
fn window_loglik_is_a_difference_of_full_logliks() {
    let p = HawkesParams { mu: 0.9, beta: 0.5, omega: 2.2 };
    let times = simulate_hawkes(&p, &SimConfig::new(4, 0.0, 60.0)).unwrap();
    let (split, end) = (40.0, 60.0);
    let head: Vec<f64> = times.iter().copied().filter(|&t| t <= split).collect();
    let whole = log_likelihood(&p, &times, end).unwrap();
    let first = log_likelihood(&p, &head, split).unwrap();
    let window = log_likelihood_window(&p, &times, split, end).unwrap();
    assert!(rel_close(window, whole - first, 1e-10));
}

#[test]
fn fit_is_deterministic() {
    let p = HawkesParams { mu: 0.5, beta: 0.8, omega: 1.2 };
    let times = simulate_hawkes(&p, &SimConfig::new(5, 0.0, 500.0)).unwrap();
    let a = fit_mle(&times, 500.0, None).unwrap();
    let b = fit_mle(&times, 500.0, None).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

proptest! {
    #[test]
    fn intensity_bounded_below_and_compensator_monotone(
        mu in 0.01f64..5.0,
        ratio in 0.0f64..0.99,
        omega in 0.05f64..10.0,
        raw in prop::collection::vec(0.0f64..50.0, 0..60),
        probes in prop::collection::vec(0.0f64..60.0, 2..20),
    ) {
        let p = HawkesParams { mu, beta: ratio * omega, omega };
        let mut times = raw;
        times.sort_by(f64::total_cmp);
        let mut probes = probes;
        probes.sort_by(f64::total_cmp);
        let mut last = 0.0;
        for &t in &probes {
            let history: Vec<f64> = times.iter().copied().filter(|&s| s <= t).collect();
            let lambda = intensity_at(&p, &history, t).unwrap();
            prop_assert!(lambda >= mu);
            prop_assert!(rel_close(lambda, direct_intensity(&p, &times, t), 1e-12));
            let comp = compensator(&p, &times, t).unwrap();
            prop_assert!(comp >= last);
            last = comp;
        }
    }
}
