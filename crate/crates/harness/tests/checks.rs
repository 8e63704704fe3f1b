use std::f64::consts::PI;
use std::path::Path;

use massart_core::distributions::{MarginalKind, MarginalSampler, MarginalSpec};
use massart_core::geometry::{dot, norm};
use massart_core::rng::StreamSeed;
use massart_core::verification::vector_at_angle;
use massart_core::UnitVector;
use massart_harness::commands::verify::stationarity::SphereQuadratic;
use massart_harness::commands::verify::translation::DiscreteInstance;
use massart_harness::config::{random_direction, CommandName, ExperimentConfig};
use massart_harness::measure::measure_disagreement;
use massart_harness::run;

fn sampler(kind: MarginalKind, dim: usize, seed: u64) -> MarginalSampler {
    MarginalSampler::from_spec(&MarginalSpec { kind, dim }, StreamSeed::from_u64(seed)).unwrap()
}

#[test]
fn disagreement_with_itself_is_zero_and_with_its_negation_one() {
    let t = UnitVector::new(vec![0.3, -0.2, 0.9]).unwrap();
    let mut s = sampler(MarginalKind::StandardGaussian, 3, 1);
    let e = measure_disagreement(&t, &t, &mut s, 5000).unwrap();
    assert_eq!((e.value, e.stderr), (0.0, 0.0));
    let e = measure_disagreement(&t.negated(), &t, &mut s, 5000).unwrap();
    assert_eq!(e.value, 1.0);
    assert!(measure_disagreement(&t, &t, &mut s, 999).is_err());
}

#[test]
fn disagreement_is_angle_over_pi() {
    let d = 5;
    let t = UnitVector::basis(d, 2).unwrap();
    for (i, theta) in [0.1, 0.7, 2.0, 3.0].into_iter().enumerate() {
        let h = vector_at_angle(&t, theta, &mut StreamSeed::from_u64(i as u64).rng()).unwrap();
        for kind in [MarginalKind::StandardGaussian, MarginalKind::UniformSphereScaled] {
            let mut s = sampler(kind, d, 40 + i as u64);
            let e = measure_disagreement(&h, &t, &mut s, 200_000).unwrap();
            assert!((e.value - theta / PI).abs() <= 3.0 * e.stderr, "{kind:?} {theta}: {e:?}");
        }
    }
}

#[test]
fn sphere_quadratic_gradient_matches_finite_differences() {
    let f = SphereQuadratic {
        axis: UnitVector::new(vec![1.0, 2.0, -1.0]).unwrap(),
        noise_scale: 0.5,
    };
    for k in 0..50 {
        let w: Vec<f64> = random_direction(3, StreamSeed::from_u64(k))
            .unwrap()
            .iter()
            .map(|v| v * (1.0 + k as f64 / 10.0))
            .collect();
        let g = f.gradient(&w);
        let h = 1e-6;
        for i in 0..3 {
            let (mut a, mut b) = (w.clone(), w.clone());
            a[i] += h;
            b[i] -= h;
            let fd = (f.value(&a) - f.value(&b)) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-7, "{fd} vs {}", g[i]);
        }
    }
}

/// Largest absolute eigenvalue of the finite-difference Hessian, by Jacobi
/// sweeps on the symmetrised 3x3 matrix.
fn hessian_norm(f: &SphereQuadratic, w: &[f64]) -> f64 {
    let h = 1e-5;
    let mut m = [[0.0; 3]; 3];
    for j in 0..3 {
        let (mut a, mut b) = (w.to_vec(), w.to_vec());
        a[j] += h;
        b[j] -= h;
        let (ga, gb) = (f.gradient(&a), f.gradient(&b));
        for i in 0..3 {
            m[i][j] = (ga[i] - gb[i]) / (2.0 * h);
        }
    }
    for i in 0..3 {
        for j in 0..i {
            let s = 0.5 * (m[i][j] + m[j][i]);
            m[i][j] = s;
            m[j][i] = s;
        }
    }
    for _ in 0..50 {
        for p in 0..3 {
            for q in p + 1..3 {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = 0.5 * (2.0 * m[p][q]).atan2(m[q][q] - m[p][p]);
                let (c, s) = (theta.cos(), theta.sin());
                let mut r = m;
                for k in 0..3 {
                    r[k][p] = c * m[k][p] - s * m[k][q];
                    r[k][q] = s * m[k][p] + c * m[k][q];
                }
                m = r;
                for k in 0..3 {
                    let (a, b) = (m[p][k], m[q][k]);
                    m[p][k] = c * a - s * b;
                    m[q][k] = s * a + c * b;
                }
            }
        }
    }
    (0..3).map(|i| m[i][i].abs()).fold(0.0, f64::max)
}

#[test]
fn sphere_quadratic_constants_hold() {
    let f = SphereQuadratic {
        axis: UnitVector::new(vec![0.0, 0.6, 0.8]).unwrap(),
        noise_scale: 0.5,
    };
    // the Hessian shrinks like 1/|w|^2, so the unit sphere is the worst case
    let mut worst = 0.0f64;
    for k in 0..4000 {
        let u = random_direction(3, StreamSeed::from_u64(1000 + k)).unwrap();
        let r = 1.0 + (k % 4) as f64;
        let w: Vec<f64> = u.iter().map(|v| v * r).collect();
        worst = worst.max(hessian_norm(&f, &w));
        let g = f.gradient(&w);
        assert!(dot(&g, &g) <= f.mean_gradient_bound() + 1e-12);
        assert!(f.value(&w).abs() <= f.value_bound());
    }
    assert!(worst <= f.lipschitz() + 1e-4, "{worst}");
    assert!(worst >= f.lipschitz() - 1e-2, "{worst}");

    // stochastic gradient: unbiased, with second moment at most B
    let w = random_direction(3, StreamSeed::from_u64(3)).unwrap();
    let mut rng = StreamSeed::from_u64(4).rng();
    let n = 200_000;
    let (mut mean, mut sq) = (vec![0.0; 3], 0.0);
    let mut g = vec![0.0; 3];
    for _ in 0..n {
        f.sample_gradient(&w, &mut rng, &mut g);
        assert!(dot(&g, &w).abs() < 1e-12);
        mean.iter_mut().zip(&g).for_each(|(m, v)| *m += v / n as f64);
        sq += dot(&g, &g) / n as f64;
    }
    let exact = f.gradient(&w);
    let diff: Vec<f64> = mean.iter().zip(&exact).map(|(a, b)| a - b).collect();
    assert!(norm(&diff) < 0.01, "{mean:?} vs {exact:?}");
    assert!(sq <= f.second_moment());
}

#[test]
fn translation_instance_by_hand() {
    // two points; h and f disagree on the second only
    let inst = DiscreteInstance {
        points: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        weights: vec![3, 1],
        rates: vec![100, 400],
    };
    let e = inst.exact_errors(&[1.0, -1.0], &[1.0, 1.0]);
    assert_eq!(e.scale, 4000);
    assert_eq!(e.opt, 3 * 100 + 400);
    assert_eq!(e.err_h, 3 * 100 + (1000 - 400));
    assert_eq!(e.disagreement, 1000);
    // excess = 200/4000 = 0.05, disagreement = 0.25, (1 - 0.8) * 0.25 = 0.05: tight
    assert_eq!((e.err_h - e.opt) * 1000, (1000 - 2 * 400) * e.disagreement);
}

#[test]
fn noiseless_learning_meets_eps_in_every_trial() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/learn_noiseless.toml");
    let mut c = ExperimentConfig::load(&path, CommandName::Learn).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    c.output.dir = tmp.path().to_path_buf();
    let out = run(&c, Some(1)).unwrap();
    assert_eq!(out.summary.rows, 10);
    assert_eq!(out.summary.passes, 10);
    let t = massart_harness::output::comparable_csv(&tmp.path().join("results.csv")).unwrap();
    let i = t[0].iter().position(|h| h == "disagreement").unwrap();
    assert!(t[1..].iter().all(|r| r[i].parse::<f64>().unwrap() <= 0.05));
    assert!(tmp.path().join("plot_trajectory_angle.csv").exists());
}

#[test]
fn disk_structural_fixture_passes() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/c03_floor_sigmoid.toml");
    let mut c = ExperimentConfig::load(&path, CommandName::Verify).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    c.output.dir = tmp.path().to_path_buf();
    let out = run(&c, Some(1)).unwrap();
    assert!(out.summary.passed());
    assert_eq!(out.exit_code(), 0);
}

#[test]
fn hash_ignores_threads_and_output_only() {
    let text = "command = \"gradcheck\"\nbase_seed = 3\n";
    let a = ExperimentConfig::parse(text, false, CommandName::Gradcheck).unwrap();
    let mut b = a.clone();
    b.threads = Some(7);
    b.output.dir = "elsewhere".into();
    assert_eq!(a.hash(), b.hash());
    b.base_seed = 4;
    assert_ne!(a.hash(), b.hash());
    // omitted command is filled from the subcommand
    let c = ExperimentConfig::parse("base_seed = 3\n", false, CommandName::Gradcheck).unwrap();
    assert_eq!(a.hash(), c.hash());
}
