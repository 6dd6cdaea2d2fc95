//! Acceptance gate: one test per criterion, each printing a PASS line when
//! its assertions hold. Run with `cargo test --test acceptance`.

use std::time::Instant;

use market_core::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn pass(n: usize, name: &str) {
    println!("criterion {n:2} ({name}): PASS");
}

fn scenario(
    b: Vec<f64>,
    c: Vec<f64>,
    eta: Vec<f64>,
    res: Vec<f64>,
    gamma: f64,
    beta: f64,
    ps_co2: f64,
) -> Scenario {
    let n = b.len();
    Scenario {
        index: 0,
        prob: 1.0,
        fixed_cost: vec![0.0; n],
        linear_cost: b,
        quad_cost: c,
        intensity: eta,
        res_output: res,
        gamma_s: gamma,
        beta_s: beta,
        ps_co2,
    }
}

/// 1. Closed-form spot oracle: analytic Cournot best-response iteration on
/// spot profits reproduces the closed-form price and quantities.
#[test]
fn criterion_01_spot_closed_form_oracle() {
    let start = Instant::now();
    let mut rng = StdRng::seed_from_u64(101);
    for _ in 0..100 {
        let n: usize = rng.gen_range(1..=3);
        let n_res: usize = rng.gen_range(0..=1);
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..25.0)).collect();
        let c: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..2.0)).collect();
        let eta: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let res: Vec<f64> = (0..n_res).map(|_| rng.gen_range(0.0..30.0)).collect();
        let gamma: f64 = rng.gen_range(60.0..200.0);
        let beta: f64 = rng.gen_range(0.3..2.0);
        let ps_co2: f64 = rng.gen_range(0.0..40.0);
        let s = scenario(b.clone(), c.clone(), eta.clone(), res.clone(), gamma, beta, ps_co2);
        let conj = CompetitionConjecture::cournot(n, n_res);

        // Best-response iteration: q_i maximizes
        // P(q) q_i - b q - c q^2 / 2 - eta ps_co2 q with P linear.
        let gamma_hat = gamma - beta * res.iter().sum::<f64>();
        let mut q = vec![0.0f64; n];
        for _ in 0..2_000 {
            for i in 0..n {
                let rivals: f64 = (0..n).filter(|&k| k != i).map(|k| q[k]).sum();
                let m = b[i] + eta[i] * ps_co2;
                q[i] = (gamma_hat - beta * rivals - m) / (2.0 * beta + c[i]);
            }
        }
        let p_oracle = gamma_hat - beta * q.iter().sum::<f64>();

        let out = spot_only_equilibrium(&s, &conj).unwrap();
        assert!(
            (out.ps - p_oracle).abs() <= 1e-6 * p_oracle.abs().max(1.0),
            "price: closed form {} vs oracle {p_oracle}",
            out.ps
        );
        for i in 0..n {
            assert!(
                (out.qs_conventional[i] - q[i]).abs() <= 1e-6 * q[i].abs().max(1.0),
                "q[{i}]: closed form {} vs oracle {}",
                out.qs_conventional[i],
                q[i]
            );
        }
    }
    assert!(start.elapsed().as_secs() < 10, "runtime {:?}", start.elapsed());
    pass(1, "spot closed forms match best-response oracle");
}

fn duopoly_config() -> MarketConfig {
    let mut cfg = MarketConfig::default_calibration(5, 77);
    cfg.conventional.truncate(2);
    for g in &mut cfg.conventional {
        g.a_mean = 0.0;
        g.b_mean = 1.0;
        g.c_mean = 0.5;
        g.eta_mean = 0.0;
        g.cv_a = 0.0;
        g.cv_b = 0.0;
        g.cv_c = 0.0;
        g.cv_eta = 0.0;
        g.qf_min = 0.0;
        g.qf_max = 10.0;
        g.epsf_min = 0.0;
        g.epsf_max = 0.0;
    }
    cfg.res.clear();
    cfg.demand = DemandParams { gamma_f: 10.0, beta_f: 1.0, cv_gamma: 0.1, cv_beta: 0.0 };
    cfg.carbon = CarbonParams { pf_co2: 0.0, ps_co2_mean: 0.0, cv_ps: 0.0 };
    cfg.conjecture = CompetitionConjecture::cournot(2, 0);
    cfg.risk = RiskPreference { phi: 0.0, alpha: 0.5 };
    cfg
}

/// 2. Two-stage Nash oracle: nested grid search over futures quantities.
#[test]
fn criterion_02_two_stage_nash_grid_oracle() {
    let start = Instant::now();
    let cfg = duopoly_config();
    let scns = sample_scenarios(&cfg).unwrap();

    let expected_profit = |k: usize, qf: &[f64; 2]| -> f64 {
        let fd = FuturesDecision {
            qf: qf.to_vec(),
            epsf: vec![0.0, 0.0],
            pf: futures_price(&qf[..], &cfg.demand),
        };
        scns.scenarios
            .iter()
            .map(|s| {
                let out = spot_outcome(s, &fd, &cfg.conjecture).unwrap();
                s.prob
                    * profit_conventional(
                        s,
                        k,
                        &fd,
                        0.0,
                        out.ps,
                        out.qs_conventional[k],
                        out.eps_s[k],
                    )
            })
            .sum()
    };

    // Alternating best responses on a grid of 1e-3 of the box.
    let step = 0.01;
    let grid: Vec<f64> = (0..=1_000).map(|i| i as f64 * step).collect();
    let mut qf = [5.0f64, 5.0f64];
    for _ in 0..200 {
        let mut moved = 0.0f64;
        for k in 0..2 {
            let mut best = (f64::NEG_INFINITY, qf[k]);
            for &q in &grid {
                let mut cand = qf;
                cand[k] = q;
                let v = expected_profit(k, &cand);
                if v > best.0 {
                    best = (v, q);
                }
            }
            moved = moved.max((best.1 - qf[k]).abs());
            qf[k] = best.1;
        }
        if moved < step / 2.0 {
            break;
        }
    }

    let sol = solve_equilibrium(&cfg, &scns).unwrap();
    for k in 0..2 {
        assert!(
            (sol.fd.qf[k] - qf[k]).abs() <= 1e-2,
            "k={k}: solver {} vs grid {}",
            sol.fd.qf[k],
            qf[k]
        );
    }
    assert!(start.elapsed().as_secs() < 60, "runtime {:?}", start.elapsed());
    pass(2, "two-stage equilibrium matches nested grid search");
}

/// 3. KKT certificate on every accepted solution.
#[test]
fn criterion_03_kkt_certificate() {
    let mut configs = vec![
        MarketConfig::default_calibration(125, 42),
        MarketConfig::default_calibration(320, 42),
        duopoly_config(),
    ];
    configs[1].risk.phi = 1.0;
    for cfg in &configs {
        let scns = sample_scenarios(cfg).unwrap();
        let sol = solve_equilibrium(cfg, &scns).unwrap();
        let report = stationarity_residuals(cfg, &scns, &sol.fd, &sol.duals).unwrap();
        assert!(
            report.complementarity_sum.abs() <= 1e-6 * sol.profit_scale,
            "complementarity {} vs scale {}",
            report.complementarity_sum,
            sol.profit_scale
        );
        assert!(
            report.max_stationarity <= 1e-6 * sol.gradient_scale,
            "stationarity {} vs scale {}",
            report.max_stationarity,
            sol.gradient_scale
        );
    }
    pass(3, "accepted solutions carry a clean KKT certificate");
}

/// 4. Analytic profit gradients match central finite differences on 50
/// random Cournot instances.
#[test]
fn criterion_04_gradient_finite_difference_check() {
    let mut rng = StdRng::seed_from_u64(404);
    for _ in 0..50 {
        let n: usize = rng.gen_range(1..=3);
        let n_res: usize = rng.gen_range(0..=1);
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..25.0)).collect();
        let c: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
        let eta: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let res: Vec<f64> = (0..n_res).map(|_| rng.gen_range(5.0..30.0)).collect();
        let gamma: f64 = rng.gen_range(80.0..200.0);
        let beta: f64 = rng.gen_range(0.3..1.5);
        let ps_co2: f64 = rng.gen_range(0.0..40.0);
        let pf_co2: f64 = rng.gen_range(0.0..40.0);
        let s = scenario(b, c, eta, res, gamma, beta, ps_co2);
        let conj = CompetitionConjecture::cournot(n, n_res);
        let demand = DemandParams {
            gamma_f: gamma,
            beta_f: rng.gen_range(0.3..1.5),
            cv_gamma: 0.0,
            cv_beta: 0.0,
        };
        let mut fd = FuturesDecision {
            qf: (0..n + n_res).map(|_| rng.gen_range(0.0..20.0)).collect(),
            epsf: (0..n).map(|_| rng.gen_range(0.0..20.0)).collect(),
            pf: 0.0,
        };
        fd.pf = futures_price(&fd.qf, &demand);

        let profit_at = |fd: &FuturesDecision, k: usize| -> f64 {
            let mut fd = fd.clone();
            fd.pf = futures_price(&fd.qf, &demand);
            let out = spot_outcome(&s, &fd, &conj).unwrap();
            if k < n {
                profit_conventional(&s, k, &fd, pf_co2, out.ps, out.qs_conventional[k], out.eps_s[k])
            } else {
                profit_res(&s, k - n, &fd, n, out.ps)
            }
        };

        let g = profit_gradients(&s, &fd, &conj, &demand, pf_co2).unwrap();
        let h = 1e-3;
        for k in 0..n + n_res {
            let mut up = fd.clone();
            up.qf[k] += h;
            let mut dn = fd.clone();
            dn.qf[k] -= h;
            let fdiff = (profit_at(&up, k) - profit_at(&dn, k)) / (2.0 * h);
            assert!(
                (g.dpi_dqf[k] - fdiff).abs() <= 1e-5 * fdiff.abs().max(1.0),
                "k={k}: analytic {} vs fd {fdiff}",
                g.dpi_dqf[k]
            );
        }
        for i in 0..n {
            let mut up = fd.clone();
            up.epsf[i] += h;
            let mut dn = fd.clone();
            dn.epsf[i] -= h;
            let fdiff = (profit_at(&up, i) - profit_at(&dn, i)) / (2.0 * h);
            assert!((g.dpi_depsf[i] - fdiff).abs() <= 1e-5 * fdiff.abs().max(1.0));
        }
    }
    pass(4, "analytic gradients agree with finite differences");
}

/// 5. CVaR oracle: the sort-based value equals the dual (tail-weight)
/// representation, and never exceeds the expectation.
#[test]
fn criterion_05_cvar_dual_oracle() {
    let mut rng = StdRng::seed_from_u64(505);
    for _ in 0..200 {
        let n: usize = rng.gen_range(12..120);
        let profits: Vec<f64> = (0..n).map(|_| rng.gen_range(-1e5..1e5)).collect();
        let probs = vec![1.0 / n as f64; n];
        let alpha = 0.9f64.min(1.0 - 1.5 / n as f64);
        let (c, _) = cvar(&profits, &probs, alpha).unwrap();

        // Dual representation: worst-case reweighting with per-scenario
        // caps sigma/(1-alpha) and unit total mass.
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| profits[a].partial_cmp(&profits[b]).unwrap());
        let mut remaining = 1.0;
        let mut dual = 0.0;
        for &w in &order {
            let cap = probs[w] / (1.0 - alpha);
            let take = cap.min(remaining);
            dual += take * profits[w];
            remaining -= take;
            if remaining <= 0.0 {
                break;
            }
        }
        assert!((c - dual).abs() <= 1e-8 * c.abs().max(1.0), "sort {c} vs dual {dual}");

        let mean: f64 = profits.iter().sum::<f64>() / n as f64;
        assert!(c <= mean + 1e-9 * mean.abs().max(1.0));
    }
    pass(5, "sort-based CVaR equals its dual representation");
}

fn res_sweep_spec(mut base: MarketConfig, phi: f64, n: usize) -> SweepSpec {
    base.risk.phi = phi;
    base.n_scenarios = n;
    let mut spec =
        SweepSpec::with_range(SweepParameter::ResPenetration, base, 0.0, 10_000.0, 1_000.0);
    spec.spot_only = false;
    spec
}

/// 6. Paper price ranges, risk-neutral Cournot RES sweep at 125 scenarios.
#[test]
fn criterion_06_res_sweep_price_ranges() {
    let start = Instant::now();
    let spec = res_sweep_spec(MarketConfig::default_calibration(125, 42), 0.0, 125);
    let rows = run_sweep(&spec).unwrap();
    assert!(rows.iter().all(|r| r.converged));

    let pf_min = rows.iter().map(|r| r.pf).fold(f64::INFINITY, f64::min);
    let pf_max = rows.iter().map(|r| r.pf).fold(f64::NEG_INFINITY, f64::max);
    let ps_min = rows.iter().map(|r| r.ps_expected).fold(f64::INFINITY, f64::min);
    let ps_max = rows.iter().map(|r| r.ps_expected).fold(f64::NEG_INFINITY, f64::max);
    assert!((pf_min - 103.0).abs() <= 0.15 * 103.0, "pf_min {pf_min}");
    assert!((pf_max - 126.0).abs() <= 0.15 * 126.0, "pf_max {pf_max}");
    assert!((ps_min - 84.0).abs() <= 0.15 * 84.0, "ps_min {ps_min}");
    assert!((ps_max - 113.0).abs() <= 0.15 * 113.0, "ps_max {ps_max}");
    for w in rows.windows(2) {
        assert!(w[1].pf < w[0].pf, "futures price not strictly decreasing");
    }
    assert!(start.elapsed().as_secs() < 900, "runtime {:?}", start.elapsed());
    pass(6, "risk-neutral Cournot RES sweep reproduces the published ranges");
}

/// 7. Perfect competition CO2 sweep: futures and spot prices coincide and
/// stay in the published band.
#[test]
fn criterion_07_perfect_competition_co2_sweep() {
    let mut base = MarketConfig::default_calibration(200, 42);
    base.conjecture = CompetitionConjecture::perfect(3, 1);
    let mut spec = SweepSpec::with_range(SweepParameter::Co2Price, base, 0.0, 50.0, 5.0);
    spec.spot_only = false;
    let rows = run_sweep(&spec).unwrap();
    assert!(rows.iter().all(|r| r.converged));
    for r in &rows {
        let gap = (r.pf - r.ps_expected).abs() / r.ps_expected.abs().max(1.0);
        assert!(gap <= 0.02, "value {}: pf {} vs ps {}", r.value, r.pf, r.ps_expected);
    }
    let lo = 85.0 * 0.85;
    let hi = 101.0 * 1.15;
    for r in &rows {
        assert!(r.pf >= lo && r.pf <= hi, "pf {} outside [{lo}, {hi}]", r.pf);
        assert!(r.ps_expected >= lo && r.ps_expected <= hi, "ps {}", r.ps_expected);
    }
    pass(7, "perfect-competition CO2 sweep prices overlap in the published band");
}

/// 8. phi = 0 through the risk-averse machinery equals the risk-neutral
/// path on all reported outcomes.
#[test]
fn criterion_08_phi_zero_consistency() {
    let mut cfg = MarketConfig::default_calibration(50, 42);
    cfg.risk.phi = 0.0;
    cfg.risk.alpha = 0.9;
    let scns = sample_scenarios(&cfg).unwrap();
    let averse = solve_equilibrium(&cfg, &scns).unwrap();
    let neutral = risk_neutral_equilibrium(&cfg, &scns).unwrap();
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-4 * b.abs().max(1.0);
    assert!(close(averse.fd.pf, neutral.fd.pf));
    for (a, b) in averse.fd.qf.iter().zip(&neutral.fd.qf) {
        assert!(close(*a, *b), "qf {a} vs {b}");
    }
    for (a, b) in averse.fd.epsf.iter().zip(&neutral.fd.epsf) {
        assert!(close(*a, *b), "epsf {a} vs {b}");
    }
    for (a, b) in averse.panel.expected.iter().zip(&neutral.panel.expected) {
        assert!(close(*a, *b), "expected profit {a} vs {b}");
    }
    for (a, b) in averse.panel.cvar.iter().zip(&neutral.panel.cvar) {
        assert!(close(*a, *b), "cvar {a} vs {b}");
    }
    pass(8, "phi = 0 risk-averse path equals the risk-neutral path");
}

/// 9. Scenario-count stability of the expected futures price, plus the
/// risk-averse runtime budget.
#[test]
fn criterion_09_scenario_stability() {
    let mut cfg = MarketConfig::default_calibration(320, 42);
    cfg.risk.phi = 1.0;
    let report = stability_study(&cfg, &[150, 200, 320, 350, 400, 500]).unwrap();
    assert!(report.rows.iter().all(|r| r.converged));
    assert!(
        report.pf_relative_spread <= 0.05,
        "spread {} rows {:?}",
        report.pf_relative_spread,
        report.rows.iter().map(|r| r.pf).collect::<Vec<_>>()
    );

    let start = Instant::now();
    let scns = sample_scenarios(&cfg).unwrap();
    let sol = solve_equilibrium(&cfg, &scns).unwrap();
    assert!(sol.kkt_residual <= sol.stationarity_tolerance());
    assert!(start.elapsed().as_secs() < 1_800, "runtime {:?}", start.elapsed());
    pass(9, "expected futures price is stable across scenario counts");
}

/// 10. Total emissions fall with RES penetration in all four
/// competition/risk modes, up to a 2% isotonic noise band.
#[test]
fn criterion_10_monotone_emissions() {
    let modes: Vec<(&str, CompetitionConjecture, f64, usize)> = vec![
        ("cournot/neutral", CompetitionConjecture::cournot(3, 1), 0.0, 125),
        ("perfect/neutral", CompetitionConjecture::perfect(3, 1), 0.0, 125),
        ("cournot/averse", CompetitionConjecture::cournot(3, 1), 1.0, 320),
        ("perfect/averse", CompetitionConjecture::perfect(3, 1), 1.0, 320),
    ];
    for (name, conj, phi, n) in modes {
        let mut base = MarketConfig::default_calibration(n, 42);
        base.conjecture = conj;
        let spec = res_sweep_spec(base, phi, n);
        let rows = run_sweep(&spec).unwrap();
        assert!(rows.iter().all(|r| r.converged), "{name}: non-converged row");
        let em: Vec<f64> = rows.iter().map(|r| r.total_emissions).collect();
        let range = em.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v))
            - em.iter().fold(f64::INFINITY, |m, &v| m.min(v));
        let mut worst = 0.0f64;
        for i in 0..em.len() {
            for j in i + 1..em.len() {
                worst = worst.max(em[j] - em[i]);
            }
        }
        assert!(
            worst <= 0.02 * range.max(1e-9),
            "{name}: emissions rise by {worst} over range {range}: {em:?}"
        );
    }
    pass(10, "emissions decrease with RES penetration in all four modes");
}
