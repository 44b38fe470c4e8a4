mod common;

use common::{choose, close};
use popproc_core::composed::{BirthAtPoisson, DeathAtPoisson, IteratedBirth, Process, SublinearDeathAtPoisson};
use popproc_core::laws::{
    bell_polynomial, death_pgf, linear_death_pmf, poisson_pmf, sublinear_death_mean, sublinear_death_pmf, yule_pmf,
};
use popproc_core::passage::*;
use popproc_core::sim::sample_process;
use popproc_core::sim::{estimate_states, path_rng};
use popproc_core::verify::{check_death_at_poisson_ode, check_linear_death_ode, death_at_poisson_generator, uniform_grid};
use popproc_core::{BirthParams, ComposedModel, DeathParams, PoissonParams, SeriesControl, SimConfig};
use proptest::prelude::*;

fn ctl() -> SeriesControl {
    SeriesControl::default()
}

/// First two raw moments by direct summation until the `k²`-weighted tail is negligible.
fn raw_moments(pmf: impl Fn(u64) -> f64, lo: u64) -> (f64, f64) {
    let (mut m1, mut m2) = (0.0, 0.0);
    for k in lo..1_000_000 {
        let p = pmf(k);
        let kf = k as f64;
        m1 += kf * p;
        m2 += kf * kf * p;
        if k > lo + 10 && kf * kf * p < 1e-14 * m2 {
            break;
        }
    }
    (m1, m2)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn base_pmfs_normalise(a in 0.05f64..1.0, mu in 0.05f64..3.0, n0 in 1u64..12, t in 0.0f64..2.0) {
        let b = BirthParams::new(a, n0).unwrap();
        let yule: f64 = (n0..n0 + 3000).map(|k| yule_pmf(&b, t, k).unwrap()).sum();
        prop_assert!(close(yule, 1.0, 1e-12));
        let d = DeathParams::new(mu, n0).unwrap();
        let lin: f64 = (0..=n0).map(|k| linear_death_pmf(&d, t, k).unwrap()).sum();
        let sub: f64 = (0..=n0).map(|k| sublinear_death_pmf(&d, t, k).unwrap()).sum();
        prop_assert!(close(lin, 1.0, 1e-12));
        prop_assert!(close(sub, 1.0, 1e-12));
        let p = PoissonParams::new(mu).unwrap();
        let pois: f64 = (0..400).map(|j| poisson_pmf(&p, 5.0 * t, j).unwrap()).sum();
        prop_assert!(close(pois, 1.0, 1e-12));
    }

    #[test]
    fn base_means(a in 0.05f64..1.0, mu in 0.05f64..3.0, n0 in 1u64..12, t in 0.0f64..2.0) {
        let b = BirthParams::new(a, n0).unwrap();
        let m: f64 = (n0..n0 + 4000).map(|k| k as f64 * yule_pmf(&b, t, k).unwrap()).sum();
        let want = n0 as f64 * (a * t).exp();
        prop_assert!((m - want).abs() <= 1e-9 * want);
        let d = DeathParams::new(mu, n0).unwrap();
        let lin: f64 = (0..=n0).map(|k| k as f64 * linear_death_pmf(&d, t, k).unwrap()).sum();
        prop_assert!(close(lin, n0 as f64 * (-mu * t).exp(), 1e-12));
        let sub: f64 = (0..=n0).map(|k| k as f64 * sublinear_death_pmf(&d, t, k).unwrap()).sum();
        prop_assert!(close(sublinear_death_mean(&d, t).unwrap(), sub, 1e-12));
    }

    #[test]
    fn death_laws_coincide_for_one_individual(mu in 0.01f64..5.0, t in 0.0f64..10.0) {
        let d = DeathParams::new(mu, 1).unwrap();
        for k in 0..=1 {
            prop_assert!(close(linear_death_pmf(&d, t, k).unwrap(), sublinear_death_pmf(&d, t, k).unwrap(), 1e-14));
        }
    }

    #[test]
    fn death_pgf_is_power_series_of_pmf(mu in 0.05f64..3.0, n0 in 1u64..20, t in 0.0f64..3.0, u in 0.0f64..=1.0) {
        let d = DeathParams::new(mu, n0).unwrap();
        let direct: f64 = (0..=n0).map(|k| u.powi(k as i32) * linear_death_pmf(&d, t, k).unwrap()).sum();
        prop_assert!(close(death_pgf(&d, t, u).unwrap(), direct, 1e-13));
    }

    #[test]
    fn dobinski_generating_function(x in 0.1f64..3.0) {
        let s = 0.5f64;
        let mut acc = 0.0;
        let mut fact = 1.0;
        for n in 0..=30u32 {
            if n > 0 {
                fact *= n as f64;
            }
            acc += s.powi(n as i32) * bell_polynomial(n, x).unwrap() / fact;
        }
        let want = (s.exp_m1() * x).exp();
        // Tail bound: B_n(x) ≤ B_n(max(x,1)) n-th terms decay at least like (s e)^n / n^{...}; use the next term.
        let next = s.powi(31) * bell_polynomial(30, x.max(1.0)).unwrap() * 31f64.powi(3) / (fact * 31.0);
        prop_assert!((acc - want).abs() <= next.max(1e-14), "{acc} vs {want}");
    }

    #[test]
    fn iterated_birth_pmf_decreases_in_k(a in 0.05f64..3.0, l in 0.05f64..3.0, t in 0.0f64..5.0) {
        let m = IteratedBirth::new(a, l).unwrap();
        let q: Vec<f64> = (1..=50).map(|k| m.pmf(t, k, &ctl()).unwrap()).collect();
        for w in q.windows(2) {
            prop_assert!(w[1] < w[0] || w[0] == 0.0);
        }
    }

    #[test]
    fn finite_and_series_forms_agree(a in 0.2f64..2.0, l in 0.2f64..2.0, mu in 0.2f64..2.0, t in 0.0f64..3.0, n0 in 1u64..10, k in 0u64..12) {
        let limit = ctl().cancellation_limit();
        let z = IteratedBirth::new(a, l).unwrap();
        let f = z.pmf_finite(t, k + 1).unwrap();
        if f.condition < limit {
            prop_assert!(close(f.value, z.pmf_series(t, k + 1, &ctl()).unwrap().value, 1e-10));
        }
        let x = BirthAtPoisson::new(a, l, n0).unwrap();
        let f = x.pmf_finite(t, n0 + k).unwrap();
        if f.condition < limit {
            prop_assert!(close(f.value, x.pmf_series(t, n0 + k, &ctl()).unwrap().value, 1e-10));
        }
        let y = DeathAtPoisson::new(mu, l, n0).unwrap();
        let j = k.min(n0);
        let f = y.pmf_finite(t, j).unwrap();
        if f.condition < limit {
            prop_assert!(close(f.value, y.pmf_series(t, j, &ctl()).unwrap().value, 1e-10));
        }
    }

    #[test]
    fn pmf_tables_normalise(a in 0.1f64..1.0, l in 0.1f64..2.0, mu in 0.1f64..2.0, t in 0.0f64..2.0, n0 in 1u64..15) {
        let models = [
            ComposedModel::IteratedBirth(IteratedBirth::new(a, l).unwrap()),
            ComposedModel::BirthAtPoisson(BirthAtPoisson::new(a, l, n0).unwrap()),
            ComposedModel::DeathAtPoisson(DeathAtPoisson::new(mu, l, n0).unwrap()),
            ComposedModel::SublinearDeathAtPoisson(SublinearDeathAtPoisson::new(mu, l, n0).unwrap()),
        ];
        for m in &models {
            let table = m.pmf_table(t, &ctl()).unwrap();
            prop_assert!(table.entries.iter().all(|&(_, p)| p >= 0.0));
            prop_assert!(table.entries.windows(2).all(|w| w[0].0 < w[1].0));
            prop_assert!(close(table.total(), 1.0, 1e-10), "{}", m.name());
            if m.max_state().is_some() {
                prop_assert!(table.truncation_mass <= 1e-14);
            }
        }
    }

    #[test]
    fn pgf_is_generating_function_of_pmf(mu in 0.1f64..2.0, l in 0.1f64..2.0, n0 in 1u64..15, t in 0.0f64..3.0) {
        let m = DeathAtPoisson::new(mu, l, n0).unwrap();
        for &u in &[0.0f64, 0.25, 0.5, 0.75, 1.0] {
            let direct: f64 = (0..=n0).map(|k| u.powi(k as i32) * m.pmf(t, k, &ctl()).unwrap()).sum();
            prop_assert!(close(m.pgf(t, u, &ctl()).unwrap(), direct, 1e-12));
        }
    }

    #[test]
    fn moments_match_tables(a in 0.05f64..0.45, l in 0.1f64..1.5, mu in 0.1f64..2.0, t in 0.0f64..1.5, n0 in 1u64..6) {
        let rel = |x: f64, y: f64| (x - y).abs() <= 1e-8 * y.abs().max(1e-300);
        let x = BirthAtPoisson::new(a, l, n0).unwrap();
        // The k²-weighted tail needs relative, not absolute, accuracy far out.
        let fine = SeriesControl::new(1e-12, 1e-300, 1_000_000).unwrap();
        let (m1, m2) = raw_moments(|k| x.pmf(t, k, &fine).unwrap(), n0);
        prop_assert!(rel(m1, x.mean(t).unwrap()));
        let var = x.variance(t).unwrap();
        prop_assert!((m2 - m1 * m1 - var).abs() <= 1e-8 * m2);
        let y = DeathAtPoisson::new(mu, l, n0).unwrap();
        let table = ComposedModel::DeathAtPoisson(y).pmf_table(t, &ctl()).unwrap();
        let m1 = table.mean();
        let m2: f64 = table.entries.iter().map(|&(k, p)| (k * k) as f64 * p).sum();
        prop_assert!(rel(m1, y.mean(t).unwrap()));
        prop_assert!((m2 - m1 * m1 - y.variance(t).unwrap()).abs() <= 1e-8 * m2.max(1e-12));
        let s = SublinearDeathAtPoisson::new(mu, l, n0).unwrap();
        let table = ComposedModel::SublinearDeathAtPoisson(s).pmf_table(t, &ctl()).unwrap();
        prop_assert!((table.mean() - s.mean(t, &ctl()).unwrap()).abs() <= 1e-8 * table.mean().max(1e-12));
        let z = ComposedModel::IteratedBirth(IteratedBirth::new(a, l).unwrap());
        if a.exp() * (1.0 - (-l * t).exp()) < 0.5 {
            let (m1, _) = raw_moments(|k| z.pmf(t, k, &ctl()).unwrap(), 1);
            prop_assert!(rel(m1, z.mean(t, &ctl()).unwrap()));
        }
    }

    #[test]
    fn iterated_birth_hitprob_ordering(a in 0.1f64..3.0) {
        let p = |k| iterated_birth_hitprob(a, k, &ctl()).unwrap().prob;
        prop_assert!(p(4) < p(2) && p(2) < p(3), "α={a}: T2={} T3={} T4={}", p(2), p(3), p(4));
    }

    #[test]
    fn hitprob_forms_agree(a in 0.2f64..3.0, k in 2u64..12) {
        let f = iterated_birth_hitprob_finite(a, k).unwrap();
        prop_assert!(close(f.value, iterated_birth_hitprob_series(a, k, &ctl()).unwrap().value, 1e-12));
        let f = birth_at_poisson_hitprob_finite(a, k).unwrap();
        prop_assert!(close(f.value, birth_at_poisson_hitprob_series(a, k, &ctl()).unwrap().value, 1e-12));
    }

    #[test]
    fn birth_identities(a in 0.2f64..3.0, k in 3u64..21) {
        let x = |k| birth_at_poisson_hitprob(a, k, &ctl()).unwrap().prob;
        let z = |k| iterated_birth_hitprob(a, k, &ctl()).unwrap().prob;
        let e = (-a).exp();
        prop_assert!(close(x(k) - z(k), e * (1.0 - e).powi(k as i32 - 1), 1e-10));
        prop_assert!(x(k) - z(k) < x(k - 1) - z(k - 1));
        prop_assert!(x(k) < x(k - 1));
        let g = |k| birth_at_poisson_g(a, k, &ctl()).unwrap();
        let power = |p: f64, b: i32| -> f64 {
            (1..20_000).map(|m| (-p * a * m as f64).exp() * (1.0 - (-a * m as f64).exp()).powi(b)).sum()
        };
        prop_assert!(close(g(k) - g(k - 1), -power(2.0, k as i32 - 2), 1e-10));
        prop_assert!(close(g(k) - g(k - 2), 2.0 * (g(k - 1) - g(k - 2)) + power(3.0, k as i32 - 3), 1e-10));
    }

    #[test]
    fn death_hitprob_matches_direct_sum(mu in 0.1f64..2.0, n0 in 1u64..15, k in 0u64..15) {
        prop_assume!(k < n0);
        let p = death_at_poisson_hitprob(mu, n0, k, &ctl()).unwrap().prob;
        prop_assert!((0.0..=1.0).contains(&p));
        if k == 0 {
            prop_assert_eq!(p, 1.0);
        }
        if k == n0 - 1 {
            let want = (-mu * k as f64).exp() * n0 as f64 * (1.0 - (-mu).exp()) / (1.0 - (-mu * n0 as f64).exp());
            prop_assert!(close(p, want, 1e-13));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn quadrature_reproduces_hitprob_and_ignores_lambda(a in 0.3f64..2.0, mu in 0.2f64..1.5, l1 in 0.3f64..3.0, l2 in 0.3f64..3.0, k in 2u64..7, n0 in 2u64..9) {
        let kk = (k - 2).min(n0 - 1);
        let cases = |l: f64| -> Vec<FptQuery> {
            vec![
                FptQuery::new(ComposedModel::IteratedBirth(IteratedBirth::new(a, l).unwrap()), k).unwrap(),
                FptQuery::new(ComposedModel::BirthAtPoisson(BirthAtPoisson::new(a, l, 1).unwrap()), k).unwrap(),
                FptQuery::new(ComposedModel::DeathAtPoisson(DeathAtPoisson::new(mu, l, n0).unwrap()), kk).unwrap(),
            ]
        };
        for (q1, q2) in cases(l1).iter().zip(cases(l2)) {
            let m1 = q1.total_mass(1e-10, &ctl()).unwrap().value;
            let m2 = q2.total_mass(1e-10, &ctl()).unwrap().value;
            let hp = q1.hitprob(&ctl()).unwrap().prob;
            prop_assert!(close(m1, hp, 1e-6), "{m1} vs {hp}");
            prop_assert!(close(m1, m2, 1e-8), "{m1} vs {m2}");
        }
    }

    #[test]
    fn plain_death_fpt_total_mass(mu in 0.1f64..3.0, n0 in 1u64..9, k in 0u64..8) {
        prop_assume!(k < n0);
        let d = DeathParams::new(mu, n0).unwrap();
        for p in [Process::LinearDeath(d), Process::SublinearDeath(d)] {
            let q = FptQuery::new(p, k).unwrap();
            prop_assert!(close(q.total_mass(1e-12, &ctl()).unwrap().value, 1.0, 1e-10));
        }
    }

    #[test]
    fn ode_checks_certify(mu in 0.1f64..2.0, l in 0.2f64..2.0, n0 in 1u64..12) {
        let grid = uniform_grid(3.0, 50);
        let lin = check_linear_death_ode(&DeathParams::new(mu, n0).unwrap(), &grid).unwrap();
        prop_assert!(lin.pass, "{:?}", lin.failures);
        let m = DeathAtPoisson::new(mu, l, n0).unwrap();
        let r = check_death_at_poisson_ode(&m, &grid).unwrap();
        prop_assert!(r.pass, "{:?}", r.failures);
        let g = death_at_poisson_generator(&m);
        for s in 0..=n0 as usize {
            let col: f64 = g.iter().map(|row| row[s]).sum();
            prop_assert!(col.abs() <= 1e-12);
            for (k, row) in g.iter().enumerate() {
                prop_assert!(k == s || row[s] >= 0.0);
            }
        }
        // Generator entries against the landing law with an independent binomial.
        let e = (-mu).exp();
        for s in 1..=n0 {
            for k in 0..s {
                let want = l * choose(s, k) * (1.0 - e).powi((s - k) as i32) * e.powi(k as i32);
                prop_assert!(close(g[k as usize][s as usize], want, 1e-13));
            }
        }
    }

    #[test]
    fn simulation_is_reproducible(seed in any::<u64>(), a in 0.2f64..1.0, mu in 0.2f64..1.0, n0 in 1u64..8) {
        let procs = [
            Process::Composed(ComposedModel::IteratedBirth(IteratedBirth::new(a, 1.0).unwrap())),
            Process::Composed(ComposedModel::SublinearDeathAtPoisson(SublinearDeathAtPoisson::new(mu, 1.0, n0).unwrap())),
        ];
        let cfg = SimConfig::new(seed, 300, 1.0, vec![0.5, 1.0]).unwrap();
        for p in &procs {
            let a = estimate_states(p, &cfg).unwrap();
            let b = estimate_states(p, &cfg).unwrap();
            prop_assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
            let mut r1 = path_rng(seed, 7);
            let mut r2 = path_rng(seed, 7);
            let p1 = sample_process(p, 2.0, &mut r1, &mut |_| false).unwrap();
            let p2 = sample_process(p, 2.0, &mut r2, &mut |_| false).unwrap();
            prop_assert_eq!(p1, p2);
        }
    }

    #[test]
    fn sampled_paths_are_monotone(seed in any::<u64>(), a in 0.2f64..1.0, mu in 0.2f64..2.0, n0 in 1u64..10) {
        let procs = [
            Process::Composed(ComposedModel::IteratedBirth(IteratedBirth::new(a, 1.0).unwrap())),
            Process::Composed(ComposedModel::BirthAtPoisson(BirthAtPoisson::new(a, 1.5, n0).unwrap())),
            Process::Composed(ComposedModel::DeathAtPoisson(DeathAtPoisson::new(mu, 2.0, n0).unwrap())),
            Process::Composed(ComposedModel::SublinearDeathAtPoisson(SublinearDeathAtPoisson::new(mu, 2.0, n0).unwrap())),
            Process::Yule(BirthParams::new(a, n0).unwrap()),
            Process::LinearDeath(DeathParams::new(mu, n0).unwrap()),
            Process::SublinearDeath(DeathParams::new(mu, n0).unwrap()),
        ];
        for (i, p) in procs.iter().enumerate() {
            for j in 0..20 {
                let mut rng = path_rng(seed, (i * 100 + j) as u64);
                let path = sample_process(p, 1.0, &mut rng, &mut |_| false).unwrap();
                prop_assert!(path.is_monotone(p.is_increasing()), "{}", p.name());
                prop_assert!(path.jump_times.windows(2).all(|w| w[0] < w[1]));
                if !p.is_increasing() {
                    prop_assert!(path.values.iter().all(|&v| v <= n0));
                }
            }
        }
    }
}
