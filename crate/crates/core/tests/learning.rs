use std::f64::consts::PI;
use std::sync::Arc;

use massart_core::distributions::{certified_profile, Marginal, MarginalKind, MarginalSpec, ProfileSource};
use massart_core::geometry::{angle_between, norm, UnitVector};
use massart_core::learner::{learn, select_hypothesis, LearnParams, NoiseModelKind, ScheduleOverrides};
use massart_core::noise::{LabeledExample, MassartOracle, NoiseStrategy};
use massart_core::psgd::{psgd_run, stationarity_certificate, PsgdConfig};
use massart_core::rng::StreamSeed;
use massart_core::learner::OracleGradient;
use massart_core::surrogate::{population_estimates, SurrogateSpec};

fn gaussian(d: usize) -> (MarginalSpec, Arc<dyn Marginal>) {
    let spec = MarginalSpec {
        kind: MarginalKind::StandardGaussian,
        dim: d,
    };
    (spec, spec.build().unwrap())
}

#[test]
fn noiseless_two_dimensional_learning() {
    let (spec, marginal) = gaussian(2);
    let profile = certified_profile(&spec, ProfileSource::Analytic).unwrap().profile;
    let target = UnitVector::new(vec![-0.4, 0.9]).unwrap();
    let params = LearnParams::new(NoiseModelKind::Massart, 0.05, 0.1, 0.0, profile);
    let mut oracle = MassartOracle::new(target.clone(), NoiseStrategy::none().build().unwrap(), marginal, StreamSeed::from_u64(4)).unwrap();
    let r = learn(&mut oracle, &params).unwrap();
    let n = r.schedule.selection_samples_u64().unwrap();
    assert_eq!(r.samples_used, r.schedule.steps_u64().unwrap() + n);
    assert_eq!(r.candidate_count as u64, r.schedule.candidate_count().unwrap());
    assert_eq!(r.candidate_count, 2 * r.trajectory.len());
    let best = r.empirical_errors.iter().copied().fold(f64::INFINITY, f64::min);
    assert_eq!(r.empirical_errors[r.chosen_index], best);
    // exact disagreement for a rotationally symmetric marginal
    let disagreement = angle_between(&r.chosen, &target).unwrap() / PI;
    assert!(disagreement <= 0.05, "{disagreement}");
}

#[test]
fn exact_target_wins_selection() {
    let (_, marginal) = gaussian(3);
    let target = UnitVector::new(vec![1.0, -2.0, 0.5]).unwrap();
    let mut o = MassartOracle::new(target.clone(), NoiseStrategy::none().build().unwrap(), marginal, StreamSeed::from_u64(0)).unwrap();
    let data = o.draw(500).unwrap();
    let cands = vec![
        UnitVector::basis(3, 0).unwrap(),
        target.negated(),
        UnitVector::new(vec![1.0, -2.0, 0.6]).unwrap(),
        target.clone(),
    ];
    assert_eq!(select_hypothesis(&cands, &data).unwrap(), (3, 0.0));
}

#[test]
fn flipped_target_is_never_selected() {
    // -w* errs on every clean label; with eta = 0.3 its error is about 0.7
    let (_, marginal) = gaussian(4);
    let target = UnitVector::basis(4, 2).unwrap();
    for seed in 0..20 {
        let mut o = MassartOracle::new(target.clone(), NoiseStrategy::constant(0.3).build().unwrap(), marginal.clone(), StreamSeed::from_u64(seed)).unwrap();
        let data: Vec<LabeledExample> = o.draw(100).unwrap();
        let (i, e) = select_hypothesis(&[target.negated(), target.clone()], &data).unwrap();
        assert_eq!(i, 1);
        assert!(e < 0.5);
    }
}

#[test]
fn learner_runs_are_reproducible() {
    let (spec, marginal) = gaussian(3);
    let profile = certified_profile(&spec, ProfileSource::Analytic).unwrap().profile;
    let mut params = LearnParams::new(NoiseModelKind::StrongMassart, 0.2, 0.1, 0.5, profile);
    params.overrides = ScheduleOverrides {
        steps: Some(5000),
        selection_samples: Some(2000),
        ..Default::default()
    };
    let target = UnitVector::basis(3, 1).unwrap();
    let run = || {
        let mut o = MassartOracle::new(target.clone(), NoiseStrategy::strong(0.5).build().unwrap(), marginal.clone(), StreamSeed::from_u64(77)).unwrap();
        learn(&mut o, &params).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.chosen, b.chosen);
    assert_eq!(a.trajectory, b.trajectory);
    assert_eq!(a.empirical_errors, b.empirical_errors);
    assert_eq!(a.samples_used, 7000);
}

#[test]
fn mismatched_noise_is_rejected() {
    let (spec, marginal) = gaussian(2);
    let profile = certified_profile(&spec, ProfileSource::Analytic).unwrap().profile;
    let target = UnitVector::basis(2, 0).unwrap();
    let mut o = MassartOracle::new(target, NoiseStrategy::constant(0.4).build().unwrap(), marginal, StreamSeed::from_u64(0)).unwrap();
    let params = LearnParams::new(NoiseModelKind::Massart, 0.1, 0.1, 0.3, profile);
    assert!(learn(&mut o, &params).is_err());
}

#[test]
fn certificate_is_near_zero_at_the_optimum() {
    // a trajectory that starts at w* under clean labels stays close to it
    let (_, marginal) = gaussian(3);
    let target = UnitVector::new(vec![0.0, 0.6, 0.8]).unwrap();
    let mut o = MassartOracle::new(target.clone(), NoiseStrategy::none().build().unwrap(), marginal.clone(), StreamSeed::from_u64(1)).unwrap();
    let surrogate = SurrogateSpec::sigmoid(0.05).build().unwrap();
    let mut grad = OracleGradient::new(&mut o, surrogate.as_ref());
    let t = psgd_run(&mut grad, &PsgdConfig::new(2000, 1e-3, 1).with_record_every(500), &target).unwrap();
    let mut eval = MassartOracle::new(target.clone(), NoiseStrategy::none().build().unwrap(), marginal, StreamSeed::from_u64(2)).unwrap();
    let data = eval.draw(200_000).unwrap();
    let c = stationarity_certificate(&t, |w| {
        let e = population_estimates(w, &data, surrogate.as_ref())?;
        Ok((e.gradient, e.gradient_norm_stderr))
    })
    .unwrap();
    assert_eq!(c.position, 0);
    assert!(c.gradient_norm <= 3.0 * c.stderr, "{c:?}");
    assert!(norm(&t.last()[..]) > 0.0);
}
