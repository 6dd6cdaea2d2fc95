//! Property-based checks of the model invariants: spot first-order
//! conditions, market clearing, CVaR axioms and price monotonicity.

use market_core::*;
use proptest::prelude::*;

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

prop_compose! {
    fn arb_instance()(
        n in 1usize..=3,
        has_res in proptest::bool::ANY,
        b in proptest::collection::vec(0.0..30.0f64, 3),
        c in proptest::collection::vec(0.05..2.0f64, 3),
        eta in proptest::collection::vec(0.0..1.0f64, 3),
        q_res in 0.0..40.0f64,
        gamma in 40.0..200.0f64,
        beta in 0.2..2.0f64,
        ps_co2 in 0.0..40.0f64,
        qf in proptest::collection::vec(0.0..20.0f64, 4),
        epsf in proptest::collection::vec(0.0..30.0f64, 3),
        delta in -1.0..0.0f64,
    ) -> (Scenario, FuturesDecision, CompetitionConjecture) {
        let n_res = usize::from(has_res);
        let s = scenario(
            b[..n].to_vec(), c[..n].to_vec(), eta[..n].to_vec(),
            vec![q_res; n_res], gamma, beta, ps_co2,
        );
        let mut qf_all = qf[..n].to_vec();
        qf_all.extend_from_slice(&vec![0.0; n_res]);
        let fd = FuturesDecision { qf: qf_all, epsf: epsf[..n].to_vec(), pf: 0.0 };
        let conj = CompetitionConjecture {
            delta: vec![delta; n],
            psi: vec![0.0; n + n_res],
        };
        (s, fd, conj)
    }
}

proptest! {
    /// Every conventional generator's conjectured spot first-order
    /// condition holds at the closed-form outcome.
    #[test]
    fn spot_first_order_conditions((s, fd, conj) in arb_instance()) {
        let out = spot_outcome(&s, &fd, &conj).unwrap();
        for i in 0..s.linear_cost.len() {
            let q_total = fd.qf[i] + out.qs_conventional[i];
            let foc = out.ps
                - s.linear_cost[i]
                - s.quad_cost[i] * q_total
                - s.intensity[i] * s.ps_co2
                - s.beta_s * (1.0 + conj.delta[i]) * out.qs_conventional[i];
            prop_assert!(foc.abs() <= 1e-9 * out.ps.abs().max(1.0), "i={i}: foc={foc}");
        }
    }

    /// The spot price clears the market: P = gamma - beta * consumption,
    /// where consumption covers futures, spot and RES deliveries.
    #[test]
    fn spot_market_clearing((s, fd, conj) in arb_instance()) {
        let out = spot_outcome(&s, &fd, &conj).unwrap();
        let n = s.linear_cost.len();
        let conv: f64 = (0..n).map(|i| fd.qf[i] + out.qs_conventional[i]).sum();
        let res: f64 = s.res_output.iter().sum();
        let implied = s.gamma_s - s.beta_s * (conv + res);
        prop_assert!((out.ps - implied).abs() <= 1e-9 * implied.abs().max(1.0));
    }

    /// RES spot deliveries complement the futures position exactly.
    #[test]
    fn res_spot_complement((s, mut fd, conj) in arb_instance()) {
        if s.res_output.is_empty() { return Ok(()); }
        let n = s.linear_cost.len();
        fd.qf[n] = 3.0;
        let out = spot_outcome(&s, &fd, &conj).unwrap();
        prop_assert!((out.qs_res[0] - (s.res_output[0] - 3.0)).abs() < 1e-12);
    }

    /// CVaR axioms on arbitrary discrete distributions: translation
    /// equivariance, positive homogeneity, and dominance by the mean.
    #[test]
    fn cvar_axioms(
        profits in proptest::collection::vec(-1e4..1e4f64, 10..60),
        shift in -1e3..1e3f64,
        scale in 0.0..5.0f64,
    ) {
        let n = profits.len();
        let probs = vec![1.0 / n as f64; n];
        let alpha = 0.9f64.min(1.0 - 1.5 / n as f64).max(0.1);
        let (c0, _) = cvar(&profits, &probs, alpha).unwrap();
        let mean: f64 = profits.iter().sum::<f64>() / n as f64;
        prop_assert!(c0 <= mean + 1e-9 * mean.abs().max(1.0));

        let shifted: Vec<f64> = profits.iter().map(|p| p + shift).collect();
        let (c1, _) = cvar(&shifted, &probs, alpha).unwrap();
        prop_assert!((c1 - (c0 + shift)).abs() <= 1e-9 * c0.abs().max(1.0));

        let scaled: Vec<f64> = profits.iter().map(|p| p * scale).collect();
        let (c2, _) = cvar(&scaled, &probs, alpha).unwrap();
        prop_assert!((c2 - scale * c0).abs() <= 1e-9 * (scale * c0).abs().max(1.0));
    }

    /// The spot price falls with RES output and rises with the CO2 price.
    #[test]
    fn spot_price_monotonicity((s, fd, conj) in arb_instance()) {
        let base = spot_outcome(&s, &fd, &conj).unwrap();

        let mut more_res = s.clone();
        more_res.res_output = s.res_output.iter().map(|q| q + 5.0).collect();
        if !more_res.res_output.is_empty() {
            let out = spot_outcome(&more_res, &fd, &conj).unwrap();
            prop_assert!(out.ps <= base.ps + 1e-9);
        }

        let mut costlier = s.clone();
        costlier.ps_co2 += 10.0;
        if s.intensity.iter().any(|&e| e > 0.0) {
            let out = spot_outcome(&costlier, &fd, &conj).unwrap();
            prop_assert!(out.ps >= base.ps - 1e-9);
        }
    }

    /// The risk-adjusted objective interpolates monotonically between the
    /// expectation and the (smaller) CVaR.
    #[test]
    fn objective_monotone_in_phi(
        expected in -1e4..1e4f64,
        gap in 0.0..1e4f64,
        phi1 in 0.0..1.0f64,
        phi2 in 0.0..1.0f64,
    ) {
        let cv = expected - gap;
        let (lo, hi) = if phi1 <= phi2 { (phi1, phi2) } else { (phi2, phi1) };
        prop_assert!(objective(expected, cv, hi) <= objective(expected, cv, lo) + 1e-9);
    }

    /// The futures price falls when any generator commits more.
    #[test]
    fn futures_price_monotone(
        qf in proptest::collection::vec(0.0..1e4f64, 1..5),
        bump in 0.0..1e3f64,
        which in 0usize..5,
    ) {
        let d = DemandParams { gamma_f: 180.0, beta_f: 0.005, cv_gamma: 0.0, cv_beta: 0.0 };
        let p0 = futures_price(&qf, &d);
        let mut more = qf.clone();
        let k = which % qf.len();
        more[k] += bump;
        prop_assert!(futures_price(&more, &d) <= p0 + 1e-12);
    }

    /// Scenario sampling is deterministic in the seed and the probabilities
    /// form a distribution.
    #[test]
    fn sampling_determinism(seed in proptest::num::u64::ANY, n in 1usize..40) {
        let mut cfg = MarketConfig::default_calibration(n, seed);
        cfg.risk.alpha = 0.5; // keep validation happy at small n
        let a = sample_scenarios(&cfg).unwrap();
        let b = sample_scenarios(&cfg).unwrap();
        prop_assert_eq!(&a, &b);
        let total: f64 = a.scenarios.iter().map(|s| s.prob).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }
}
