//! Estimators against Monte Carlo clouds with known geometry.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use strata_audit::corpus::TokenCloud;
use strata_audit::dimension::{
    dimension_distribution, estimate_all, estimate_dimension, fit_loglog, FitWindow,
};
use strata_audit::growth::growth_curve;
use strata_audit::metric::{map_ladders, radius_ladder};
use strata_audit::stats::median;
use strata_audit::strata::{
    classify_curve, corner_report, segment_curve_with, ClassifyOptions, SegmentOptions,
};
use strata_audit::synth::{
    sample_ball, sample_fiber_bundle, sample_realization, vgt_sup_deviation, GrowthSpec,
};
use strata_audit::StrataLabel;

/// Prepends the origin as token 0.
fn with_origin(cloud: &TokenCloud) -> TokenCloud {
    let mut coords = vec![0.0; cloud.dim()];
    coords.extend_from_slice(cloud.coords());
    TokenCloud::from_rows("centered", cloud.len() + 1, cloud.dim(), coords).unwrap()
}

fn center_estimate(dim: usize, n_points: usize, seed: u64) -> f64 {
    let cloud = with_origin(&sample_ball(dim, 1.0, n_points, seed).unwrap());
    let window = FitWindow::default();
    let ladder = radius_ladder(&cloud, 0, window.ladder_cap(cloud.len())).unwrap();
    let est = estimate_dimension(&ladder, &window);
    assert!(est.is_ok());
    est.n_hat
}

#[test]
fn disc_curve_has_area_slope() {
    let cloud = with_origin(&sample_ball(2, 1.0, 2000, 1).unwrap());
    let curve = growth_curve(&radius_ladder(&cloud, 0, None).unwrap()).unwrap();
    let mid = curve.count_range(50, 1000);
    let fit = fit_loglog(&mid.points()).unwrap();
    assert!((fit.n_hat - 2.0).abs() < 0.15, "slope {}", fit.n_hat);
}

#[test]
fn ball_centers() {
    let n8 = center_estimate(8, 3000, 1);
    assert!((6.8..=9.2).contains(&n8), "8-ball {n8}");
    let n3 = center_estimate(3, 4000, 1);
    assert!((n3 - 3.0).abs() <= 0.5, "3-ball {n3}");
}

#[test]
fn circle_is_one_dimensional() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let coords: Vec<f64> = (0..100)
        .flat_map(|_| {
            let t = rng.random::<f64>() * std::f64::consts::TAU;
            [t.cos(), t.sin()]
        })
        .collect();
    let cloud = TokenCloud::from_rows("circle", 100, 2, coords).unwrap();
    let ests = estimate_all(&cloud, &FitWindow::volume(10, 40).unwrap()).unwrap();
    let values: Vec<f64> = ests.iter().map(|e| e.n_hat).collect();
    let m = median(&values).unwrap();
    assert!((0.8..=1.3).contains(&m), "median {m}");
}

/// Location of the highest KDE density inside `[lo, hi]`.
fn kde_peak(kde: &strata_audit::dimension::Kde, lo: f64, hi: f64) -> (f64, f64) {
    kde.grid
        .iter()
        .zip(&kde.density)
        .filter(|(x, _)| (lo..=hi).contains(*x))
        .fold((f64::NAN, 0.0), |best, (&x, &d)| if d > best.1 { (x, d) } else { best })
}

fn single_peak(cloud: &TokenCloud) -> f64 {
    let ests = estimate_all(cloud, &FitWindow::default()).unwrap();
    let kde = dimension_distribution(&ests, 40, None).unwrap().kde.unwrap();
    kde_peak(&kde, f64::NEG_INFINITY, f64::INFINITY).0
}

#[test]
fn mixture_is_bimodal() {
    // a flat disc and an 8-ball in disjoint regions of R^8
    let disc = sample_ball(2, 1.0, 1500, 2).unwrap();
    let ball = sample_ball(8, 1.0, 1500, 3).unwrap();
    let mut coords = Vec::with_capacity(3000 * 8);
    for k in 0..1500 {
        let row = disc.row(k);
        coords.extend_from_slice(&[row[0] + 100.0, row[1], 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }
    coords.extend_from_slice(ball.coords());
    let cloud = TokenCloud::from_rows("mixture", 3000, 8, coords).unwrap();
    let ests = estimate_all(&cloud, &FitWindow::default()).unwrap();
    let kde = dimension_distribution(&ests, 40, None).unwrap().kde.unwrap();

    // each component alone; most ball tokens sit near its boundary, which
    // pulls their estimates below 8
    let (alone2, alone8) = (single_peak(&disc), single_peak(&ball));
    assert!((alone2 - 2.0).abs() < 0.5, "disc alone {alone2}");
    assert!(alone8 > 4.5, "ball alone {alone8}");

    let split = 0.5 * (alone2 + alone8);
    let (m2, d2) = kde_peak(&kde, f64::NEG_INFINITY, split);
    let (m8, d8) = kde_peak(&kde, split, f64::INFINITY);
    assert!((m2 - alone2).abs() < 0.5, "low mode {m2} vs {alone2}");
    assert!((m8 - alone8).abs() < 0.5, "high mode {m8} vs {alone8}");
    let valley = kde
        .grid
        .iter()
        .zip(&kde.density)
        .filter(|(x, _)| **x > m2 && **x < m8)
        .map(|(_, &d)| d)
        .fold(f64::INFINITY, f64::min);
    assert!(valley < 0.5 * d2.min(d8));
    let modes = kde.modes();
    assert!(modes.contains(&m2) && modes.contains(&m8));
}

#[test]
fn fiber_bundle_attenuates_to_base() {
    let cloud = sample_fiber_bundle(2, 1, 0.05, 1.0, 8000, 3).unwrap();
    let interior: Vec<usize> = (0..cloud.len())
        .filter(|&i| {
            let r = cloud.row(i);
            (0.3..=0.7).contains(&r[0]) && (0.3..=0.7).contains(&r[1]) && (0.02..=0.03).contains(&r[2])
        })
        .take(50)
        .collect();
    assert_eq!(interior.len(), 50);
    let (mut first, mut last) = (Vec::new(), Vec::new());
    for &a in &interior {
        let curve = growth_curve(&radius_ladder(&cloud, a, Some(1500)).unwrap()).unwrap();
        let seg = segment_curve_with(&curve, &SegmentOptions { max_segments: 2, ..Default::default() }).unwrap();
        let slopes = seg.slopes();
        first.push(slopes[0]);
        last.push(*slopes.last().unwrap());
    }
    let (f, l) = (median(&first).unwrap(), median(&last).unwrap());
    assert!((l - 2.0).abs() < 0.25, "large-radius slope {l}");
    assert!(f > l + 0.3, "small-radius slope {f} does not exceed {l}");
}

#[test]
fn solid_bundle_is_a_single_regime() {
    let cloud = sample_fiber_bundle(2, 1, 1.0, 1.0, 4000, 4).unwrap();
    let center: Vec<usize> = (0..cloud.len())
        .filter(|&i| cloud.row(i).iter().all(|v| (0.35..=0.65).contains(v)))
        .take(20)
        .collect();
    let window = FitWindow::default();
    let values: Vec<f64> = center
        .iter()
        .map(|&a| estimate_dimension(&radius_ladder(&cloud, a, window.ladder_cap(4000)).unwrap(), &window).n_hat)
        .collect();
    let m = median(&values).unwrap();
    assert!((m - 3.0).abs() < 0.5, "median {m}");
}

fn spec13() -> GrowthSpec {
    GrowthSpec::new(vec![2f64.ln(), 8f64.ln()], vec![1, 3]).unwrap()
}

#[test]
fn realization_regimes() {
    let spec = spec13();
    let real = sample_realization(&spec, 10_000, 7).unwrap();
    let curve = growth_curve(&radius_ladder(&real.cloud, real.base_index, None).unwrap()).unwrap();
    let (s1, s2) = (spec.scales()[0], spec.scales()[1]);
    for (lo, hi, want) in [(0.2 * s1, 0.8 * s1, 1.0), (s1 + 0.2 * (s2 - s1), s1 + 0.8 * (s2 - s1), 3.0)] {
        let pts: Vec<(f64, f64)> = curve.points().into_iter().filter(|p| p.0 >= lo && p.0 <= hi).collect();
        let slope = fit_loglog(&pts).unwrap().n_hat;
        assert!((slope - want).abs() <= 0.4, "regime slope {slope}, want {want}");
    }
    let (seg, class) = classify_curve(&curve, &ClassifyOptions::default()).unwrap();
    assert_eq!(class.label, StrataLabel::Flare);
    let jump = corner_report(&seg).iter().map(|c| c.delta).fold(f64::NEG_INFINITY, f64::max);
    assert!((jump - 2.0).abs() < 0.4, "largest corner {jump}");
}

#[test]
fn half_disc_base_is_two_dimensional() {
    let spec = GrowthSpec::new(vec![4f64.ln()], vec![2]).unwrap();
    let real = sample_realization(&spec, 3000, 1).unwrap();
    let window = FitWindow::default();
    let ladder = radius_ladder(&real.cloud, 0, window.ladder_cap(3000)).unwrap();
    let n = estimate_dimension(&ladder, &window).n_hat;
    assert!((n - 2.0).abs() < 0.5, "n_hat {n}");
}

#[test]
fn vgt_deviation_shrinks_with_sample_size() {
    let spec = spec13();
    let mean_dev = |n: usize| {
        (1..=3)
            .map(|seed| {
                let real = sample_realization(&spec, n, seed).unwrap();
                let curve = growth_curve(&radius_ladder(&real.cloud, 0, None).unwrap()).unwrap();
                vgt_sup_deviation(&curve, &spec, n - 1, 50)
            })
            .sum::<f64>()
            / 3.0
    };
    let (small, large) = (mean_dev(1_000), mean_dev(10_000));
    assert!(large < small, "N=1e3: {small}, N=1e4: {large}");
    assert!(large < 0.15);
}

#[test]
fn blocked_ladders_match_single_anchor_calls() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (n, dim) = (4500, 256);
    let coords = (0..n * dim).map(|_| rng.random::<f64>()).collect();
    let cloud = TokenCloud::from_rows("wide", n, dim, coords).unwrap();
    let spots: Vec<usize> = (0..10).map(|_| rng.random_range(0..n)).collect();
    let picked = map_ladders(&cloud, Some(n - 1), |l| {
        assert_eq!(l.len(), n - 1);
        assert!(l.radii.windows(2).all(|w| w[0] <= w[1]));
        spots.contains(&l.anchor).then_some(l)
    })
    .unwrap();
    for ladder in picked.into_iter().flatten() {
        assert_eq!(ladder, radius_ladder(&cloud, ladder.anchor, None).unwrap());
    }
}
