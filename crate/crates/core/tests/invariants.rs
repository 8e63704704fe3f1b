use std::f64::consts::PI;

use massart_core::geometry::{
    angle_between, dot, norm, orthonormal_basis_of_span, sign_of, BoundedProfile, TailRadius, UnitVector,
};
use massart_core::learner::{
    empirical_errors, excess_to_target_error, schedule, select_hypothesis, LearnParams, NoiseModelKind,
    ScheduleMode,
};
use massart_core::noise::LabeledExample;
use massart_core::psgd::{psgd_run, FnGradient, PsgdConfig};
use massart_core::rng::StreamRng;
use proptest::prelude::*;
use rand::Rng;

fn vector(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, d).prop_filter("nonzero", |v| norm(v) > 1e-3)
}

fn disk() -> BoundedProfile {
    BoundedProfile::new(4.0 * PI, 2.0, TailRadius::Constant { radius: 2.0 }).unwrap()
}

proptest! {
    #[test]
    fn unit_vectors_have_unit_norm(v in vector(7)) {
        let u = UnitVector::new(v.clone()).unwrap();
        prop_assert!((norm(&u) - 1.0).abs() <= 1e-12);
        let c = dot(&u, &v) / norm(&v);
        prop_assert!((c - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn sign_is_plus_or_minus_one(t in prop::num::f64::ANY) {
        match sign_of(t) {
            Ok(s) => {
                prop_assert!(s == 1.0 || s == -1.0);
                prop_assert!(t.is_finite());
                if t != 0.0 { prop_assert_eq!(s, t.signum()); } else { prop_assert_eq!(s, 1.0); }
            }
            Err(_) => prop_assert!(!t.is_finite()),
        }
    }

    #[test]
    fn angle_is_symmetric_and_bounded(a in vector(4), b in vector(4)) {
        let t = angle_between(&a, &b).unwrap();
        prop_assert!((0.0..=PI).contains(&t));
        prop_assert_eq!(t, angle_between(&b, &a).unwrap());
        let neg: Vec<f64> = b.iter().map(|x| -x).collect();
        prop_assert!((angle_between(&a, &neg).unwrap() - (PI - t)).abs() < 1e-9);
    }

    #[test]
    fn span_basis_is_orthonormal(a in vector(5), b in vector(5)) {
        let (u, v) = (UnitVector::new(a).unwrap(), UnitVector::new(b).unwrap());
        if dot(&u, &v).abs() < 1.0 - 1e-6 {
            let (b1, b2) = orthonormal_basis_of_span(&u, &v).unwrap();
            prop_assert!((norm(&b1) - 1.0).abs() < 1e-10);
            prop_assert!((norm(&b2) - 1.0).abs() < 1e-10);
            prop_assert!(dot(&b1, &b2).abs() < 1e-10);
            // v lies in the span
            let r: Vec<f64> = v.iter().zip(b1.iter().zip(b2.iter()))
                .map(|(vi, (p, q))| vi - dot(&v, &b1) * p - dot(&v, &b2) * q).collect();
            prop_assert!(norm(&r) < 1e-9);
        }
    }

    #[test]
    fn psgd_iterates_stay_on_the_sphere(seed in any::<u64>(), beta in 0.001f64..5.0, d in 2usize..8) {
        let mut oracle = FnGradient::new(d, |w: &[f64], rng: &mut StreamRng, g: &mut [f64]| {
            for gi in g.iter_mut() { *gi = rng.random::<f64>() * 4.0 - 2.0; }
            let c = dot(g, w);
            g.iter_mut().zip(w).for_each(|(gi, wi)| *gi -= c * wi);
        });
        let config = PsgdConfig::new(200, beta, seed).with_record_every(7);
        let w0 = UnitVector::basis(d, 0).unwrap();
        let t = psgd_run(&mut oracle, &config, &w0).unwrap();
        prop_assert_eq!(t.steps.clone(), config.recorded_steps());
        for w in &t.iterates {
            prop_assert!((norm(w) - 1.0).abs() <= 1e-12);
        }
        let again = psgd_run(&mut oracle, &config, &w0).unwrap();
        prop_assert_eq!(t, again);
    }

    #[test]
    fn selection_is_a_true_argmin(
        cands in prop::collection::vec(vector(3), 1..12),
        pts in prop::collection::vec((vector(3), any::<bool>()), 1..60),
    ) {
        let cands: Vec<UnitVector> = cands.into_iter().map(|c| UnitVector::new(c).unwrap()).collect();
        let data: Vec<LabeledExample> = pts.into_iter()
            .map(|(x, b)| LabeledExample::new(x, if b { 1.0 } else { -1.0 })).collect();
        let (i, e) = select_hypothesis(&cands, &data).unwrap();
        // brute-force rescan
        let mistakes: Vec<usize> = cands.iter().map(|w| {
            data.iter().filter(|ex| {
                let s = dot(w, &ex.x);
                let pred = if s >= 0.0 { 1.0 } else { -1.0 };
                pred != ex.y
            }).count()
        }).collect();
        let best = *mistakes.iter().min().unwrap();
        prop_assert_eq!(mistakes[i], best);
        prop_assert!(mistakes[..i].iter().all(|&m| m > best));
        prop_assert!((e - best as f64 / data.len() as f64).abs() < 1e-15);
        let errs = empirical_errors(&cands, &data).unwrap();
        prop_assert!(errs.iter().all(|&x| x >= e));
    }

    #[test]
    fn theoretical_steps_grow_with_noise(e1 in 0.0f64..0.49, e2 in 0.0f64..0.49, eps in 0.01f64..0.5) {
        let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
        let p = |eta| LearnParams::new(NoiseModelKind::Massart, eps, 0.1, eta, disk())
            .with_mode(ScheduleMode::Theoretical).with_step_budget(f64::INFINITY);
        prop_assert!(schedule(&p(lo), 4).unwrap().steps <= schedule(&p(hi), 4).unwrap().steps);
    }

    #[test]
    fn theoretical_steps_shrink_with_c(c1 in 0.01f64..1.0, c2 in 0.01f64..1.0) {
        let (lo, hi) = if c1 <= c2 { (c1, c2) } else { (c2, c1) };
        let p = |c| LearnParams::new(NoiseModelKind::StrongMassart, 0.1, 0.1, c, disk())
            .with_mode(ScheduleMode::Theoretical).with_step_budget(f64::INFINITY);
        prop_assert!(schedule(&p(lo), 4).unwrap().steps >= schedule(&p(hi), 4).unwrap().steps);
    }

    #[test]
    fn misclassification_excess_bounds_disagreement(
        pts in prop::collection::vec((vector(3), 1u64..100, 0u64..=1000), 20),
        eta_milli in 0u64..500,
        h in vector(3),
        f in vector(3),
    ) {
        // exact integer arithmetic: weights w_i, flip rates k_i / 1000 <= eta
        let sgn = |v: &[f64], x: &[f64]| dot(v, x) >= 0.0;
        let (mut err_h, mut opt) = (0i128, 0i128); // scaled by 1000 * W
        let mut disagree = 0i128; // disagreement * W
        let mut total = 0i128;
        for (x, w, k) in &pts {
            let k = (*k * eta_milli / 1000) as i128;
            let w = *w as i128;
            total += w;
            opt += w * k;
            // h errs when the label, which equals f with probability 1 - k/1000, differs from h
            err_h += w * if sgn(&h, x) == sgn(&f, x) { k } else { 1000 - k };
            if sgn(&h, x) != sgn(&f, x) {
                disagree += w;
            }
        }
        let excess = err_h - opt;
        prop_assert!(excess >= (1000 - 2 * eta_milli as i128) * disagree);
        let eta = eta_milli as f64 / 1000.0;
        let excess_f = excess as f64 / (1000.0 * total as f64);
        let bound = excess_to_target_error(excess_f, eta).unwrap();
        prop_assert!(disagree as f64 / total as f64 <= bound * (1.0 + 1e-12) + 1e-15);
    }
}
