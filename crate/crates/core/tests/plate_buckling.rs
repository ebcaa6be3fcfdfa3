use mlmc_composite::engine::LevelModel;
use mlmc_composite::failure::{selective_refine_sample, FailureCriterion};
use mlmc_composite::plate::{pristine_study, BucklingModel, PlateConfig};

#[test]
fn pristine_load_converges_to_anchor() {
    let cfg = PlateConfig {
        max_level: 3,
        ..Default::default()
    };
    let levels = pristine_study(&cfg).unwrap();
    let l3 = levels[3].lambda_kn;
    assert!((l3 - 278.59).abs() / 278.59 < 0.01, "{l3}");
    // monotone from above, differences shrinking by about m = 4
    for w in levels.windows(3) {
        let (d1, d2) = (
            w[0].lambda_kn - w[1].lambda_kn,
            w[1].lambda_kn - w[2].lambda_kn,
        );
        assert!(d1 > 0.0 && d2 > 0.0);
        let ratio = d1 / d2;
        assert!((2.5..6.0).contains(&ratio), "ratio {ratio}");
    }
}

#[test]
fn perturbed_ladders_decrease_and_sr_agrees_with_full_solve() {
    let cfg = PlateConfig {
        max_level: 2,
        ..Default::default()
    };
    let criterion = FailureCriterion::below(cfg.lambda_star_kn);
    let model = BucklingModel::new(cfg).unwrap();
    for seed in 0..12 {
        let mut s = model.draw(seed);
        let trace = selective_refine_sample(&model, &mut s, 2, &criterion, 4.0, 1.0).unwrap();
        let mut ladder = trace.lambdas.clone();
        for j in ladder.len()..=2 {
            ladder.push(model.solve(&mut s, j).unwrap());
        }
        assert!(
            ladder.windows(2).all(|w| w[1] <= w[0]),
            "seed {seed}: {ladder:?}"
        );
        if trace.fired {
            assert_eq!(
                trace.indicator(&criterion),
                u8::from(ladder[2] < criterion.threshold)
            );
        }
    }
}

#[test]
fn draws_are_reproducible() {
    let model = BucklingModel::new(PlateConfig {
        max_level: 0,
        ..Default::default()
    })
    .unwrap();
    let a = model.evaluate(0, 99).unwrap().q;
    let b = model.evaluate(0, 99).unwrap().q;
    assert_eq!(a, b);
    assert_ne!(a, model.evaluate(0, 100).unwrap().q);
}
