use std::sync::Arc;

use super::*;
use crate::fixtures;
use crate::grid::Shape;
use crate::predictor::{AffineMap, GaussianSceneModel, SceneEntry, TabulatedPredictor};
use crate::schedule::ScheduleKind;

fn px(v: f64) -> Grid {
    Grid::filled(Shape::new(1, 1, 1), v)
}

#[test]
fn ddim_zero_noise_rescales() {
    let s = Schedule::new(ScheduleKind::Linear, 20).unwrap();
    let x = Grid::from_fn(Shape::new(2, 3, 3), |c, y, x| {
        c as f64 - 0.4 * y as f64 + 0.1 * x as f64
    });
    let out = ddim_step(&x, &Grid::zeros(x.shape()), &s, 7).unwrap();
    let ratio = (s.alpha_bar_at(6).unwrap() / s.alpha_bar_at(7).unwrap()).sqrt();
    assert!(out.max_abs_diff(&x.scale(ratio)).unwrap() < 1e-15);
}

#[test]
fn ddim_is_consistent_with_forward_process() {
    let s = Schedule::new(ScheduleKind::Cosine, 30).unwrap();
    let shape = Shape::new(1, 4, 4);
    let x0 = Grid::from_fn(shape, |_, y, x| (y as f64 - 1.5) * 0.7 + x as f64 * 0.2);
    let n = Grid::from_fn(shape, |_, y, x| ((y * 4 + x) as f64 * 0.9).sin());
    let noisy = |t: usize| {
        let ab = s.alpha_bar_at(t).unwrap();
        x0.scale(ab.sqrt()).add(&n.scale((1.0 - ab).sqrt())).unwrap()
    };
    for t in 1..=30 {
        let out = ddim_step(&noisy(t), &n, &s, t).unwrap();
        assert!(out.max_abs_diff(&noisy(t - 1)).unwrap() < 1e-12, "t={t}");
    }
}

#[test]
fn ddim_scalar_matches_extended_precision() {
    // sqrt(.5) (1 - sqrt(.75) .5) / .5 + sqrt(.5) .5, evaluated with 40 digits
    let s = Schedule::from_alpha_bars(vec![1.0, 0.5, 0.25]).unwrap();
    let out = ddim_step(&px(1.0), &px(0.5), &s, 2).unwrap();
    assert!((out.values()[0] - 1.155_394_517_270_574_3).abs() < 1e-15);
}

#[test]
fn ddim_rejects_bad_timestep() {
    let s = Schedule::new(ScheduleKind::Linear, 5).unwrap();
    assert!(ddim_step(&px(0.0), &px(0.0), &s, 0).is_err());
    assert!(ddim_step(&px(0.0), &px(0.0), &s, 6).is_err());
}

fn two_region(mode: BlendMode) -> Sampler {
    Sampler::new(
        Schedule::new(ScheduleKind::Linear, 40).unwrap(),
        Arc::new(fixtures::two_region_general()),
        Arc::new(fixtures::two_region_expert()),
        SnbParams::new("scene", "object"),
        mode,
    )
    .unwrap()
}

#[test]
fn identity_fusion_step_equals_single_model_step() {
    let model = Arc::new(fixtures::two_region_general());
    let sched = Schedule::new(ScheduleKind::Linear, 25).unwrap();
    for (k_g, k_e) in [(1.0, 1.0), (100.0, 0.0), (0.0, 50.0)] {
        let params = SnbParams::new("scene", "scene").with_temperatures(k_g, k_e);
        let fused = Sampler::new(
            sched.clone(),
            model.clone(),
            model.clone(),
            params.clone(),
            BlendMode::Snb,
        )
        .unwrap();
        let single = Sampler::new(sched.clone(), model.clone(), model.clone(), params, BlendMode::SingleG).unwrap();
        let a = fused.run(3, false).unwrap();
        let b = single.run(3, false).unwrap();
        for (sa, sb) in a.states().iter().zip(b.states()) {
            assert_eq!(sa.x, sb.x);
        }
    }
}

#[test]
fn mask_partitions_the_blend() {
    let sampler = two_region(BlendMode::Snb);
    let sched = sampler.schedule();
    let p = sampler.params();
    let mut x = sampler.initial_state(11);
    for t in (1..=sched.steps()).rev() {
        let (next, diag) = sampler.step(&x, t).unwrap();
        let mask = diag.unwrap().mask;
        let step = sched.step(t).unwrap();
        let g = fixtures::two_region_general();
        let e = fixtures::two_region_expert();
        let guided = |m: &GaussianSceneModel, c: &Condition, gp| {
            cfg(
                &m.predict_noise(&x, step, c).unwrap(),
                &m.predict_noise(&x, step, &Condition::null()).unwrap(),
                gp,
            )
            .unwrap()
        };
        let eg = guided(&g, &p.cond_g, p.guidance_g);
        let ee = guided(&e, &p.cond_e, p.guidance_e);
        let eps = mask_blend(&eg, &ee, &mask).unwrap();
        for i in 0..64 {
            let expect = if mask.values()[i] == 1 {
                eg.values()[i]
            } else {
                ee.values()[i]
            };
            assert_eq!(eps.values()[i], expect);
        }
        assert_eq!(next, ddim_step(&x, &eps, sched, t).unwrap());
        x = next;
    }
}

#[test]
fn zero_expert_temperature_masks_above_average_general_salience() {
    let model_g = fixtures::two_region_general();
    let model_e = fixtures::two_region_expert();
    let sched = Schedule::new(ScheduleKind::Linear, 100).unwrap();
    let params = SnbParams::new("scene", "object").with_temperatures(50.0, 0.0);
    let x = crate::rng::standard_normal_grid(&mut crate::rng::seeded(5), fixtures::TWO_REGION_SHAPE);
    let (_, diag) = snb_step(&x, 60, &model_g, &model_e, &params, &sched).unwrap();
    let norm_g = diag.salience_g.unwrap();
    let uniform = 1.0 / 64.0;
    assert!(diag
        .salience_e
        .unwrap()
        .values()
        .iter()
        .all(|&v| (v - uniform).abs() < 1e-18));
    let mut ones = 0;
    for (i, &m) in diag.mask.values().iter().enumerate() {
        assert_eq!(m == 1, norm_g.values()[i] >= uniform, "pixel {i}");
        ones += m as usize;
    }
    assert!(ones > 0 && ones < 64);
}

#[test]
fn single_g_equals_plain_guided_ddim() {
    let sampler = two_region(BlendMode::SingleG);
    let sched = sampler.schedule().clone();
    let g = fixtures::two_region_general();
    let traj = sampler.run(9, false).unwrap();
    let mut x = sampler.initial_state(9);
    assert_eq!(traj.states()[0].x, x);
    for t in (1..=sched.steps()).rev() {
        let step = sched.step(t).unwrap();
        let eps = cfg(
            &g.predict_noise(&x, step, &Condition::new("scene")).unwrap(),
            &g.predict_noise(&x, step, &Condition::null()).unwrap(),
            GuidanceParams::default(),
        )
        .unwrap();
        x = ddim_step(&x, &eps, &sched, t).unwrap();
        assert_eq!(traj.states()[sched.steps() - t + 1].x, x);
    }
}

#[test]
fn runs_are_bit_reproducible() {
    let sampler = two_region(BlendMode::Snb);
    let a = sampler.run(123, true).unwrap();
    let b = sampler.run(123, true).unwrap();
    assert_eq!(a, b);
    assert!(a.is_complete());
    assert_eq!(a.len(), 41);
    assert_ne!(a.final_sample(), sampler.run(124, false).unwrap().final_sample());
    assert_eq!(sampler.sample(123).unwrap(), *a.final_sample().unwrap());
}

#[test]
fn diagnostics_are_opt_in() {
    let sampler = two_region(BlendMode::Snb);
    let t = sampler.run(1, false).unwrap();
    assert!(t.states().iter().all(|s| s.diagnostics.is_none()));
    let t = sampler.run(1, true).unwrap();
    assert!(t.states()[..40].iter().all(|s| s.diagnostics.is_some()));
    assert!(t.states()[40].diagnostics.is_none());
}

#[test]
fn fixed_mask_mode_records_the_mask() {
    let mask = BlendMask::new(8, 8, (0..64).map(|i| fixtures::is_left(i % 8) as u8).collect()).unwrap();
    let sampler = two_region(BlendMode::FixedMask(mask.clone()));
    let traj = sampler.run(2, true).unwrap();
    assert!(traj.states()[..40]
        .iter()
        .all(|s| s.diagnostics.as_ref().unwrap().mask == mask));
}

#[test]
fn step_errors_name_the_timestep() {
    let shape = Shape::new(1, 2, 2);
    let tab = TabulatedPredictor::constant(
        shape,
        10,
        &[Condition::new("a")],
        AffineMap {
            gain: Grid::zeros(shape),
            bias: Grid::zeros(shape),
        },
    )
    .unwrap();
    // schedule length differs from the table's T, so the very first step fails
    let sampler = Sampler::new(
        Schedule::new(ScheduleKind::Linear, 12).unwrap(),
        Arc::new(tab.clone()),
        Arc::new(tab),
        SnbParams::new("a", "a"),
        BlendMode::SingleG,
    )
    .unwrap();
    match sampler.sample(0).unwrap_err() {
        FuseError::Step { t, .. } => assert_eq!(t, 12),
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn sampler_validates_inputs() {
    let sched = Schedule::new(ScheduleKind::Linear, 10).unwrap();
    let g: Arc<dyn NoisePredictor> = Arc::new(fixtures::two_region_general());
    let other: Arc<dyn NoisePredictor> = Arc::new(
        GaussianSceneModel::from_conditions([(
            Condition::new("x"),
            SceneEntry::uniform(Shape::new(1, 2, 2), 0.0, 1.0).unwrap(),
        )])
        .unwrap(),
    );
    let new = |e: Arc<dyn NoisePredictor>, p: SnbParams, m| Sampler::new(sched.clone(), g.clone(), e, p, m);
    assert!(matches!(
        new(other.clone(), SnbParams::new("scene", "x"), BlendMode::Snb),
        Err(FuseError::Dimension { .. })
    ));
    assert!(new(other, SnbParams::new("scene", "x"), BlendMode::SingleG).is_ok());
    assert!(matches!(
        new(g.clone(), SnbParams::new("nope", "scene"), BlendMode::Snb),
        Err(FuseError::Condition(_))
    ));
    assert!(new(g.clone(), SnbParams::new("scene", "scene"), BlendMode::WeightedSum(1.2)).is_err());
    assert!(new(
        g.clone(),
        SnbParams::new("scene", "scene"),
        BlendMode::FixedMask(BlendMask::filled(4, 4, true))
    )
    .is_err());
    assert!(new(
        g.clone(),
        SnbParams::new("scene", "scene").with_temperatures(f64::NAN, 1.0),
        BlendMode::Snb
    )
    .is_err());
}
